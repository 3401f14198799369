//! Pointer-free octree of cubic AMR cells.
//!
//! Nodes live in a flat arena; the 8 children of a refined node are stored
//! contiguously in octant order `4·kz + 2·ky + kx`. Every node carries one value
//! per field, so a level cap can stop the descent at any interior node and read
//! a meaningful (conservatively averaged) value there.

use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::scalar::Real;

/// Deepest level representable with 32-bit integer cell indices.
pub const MAX_LEVEL: u8 = 30;

const NO_CHILD: u32 = u32::MAX;

/// Integer address of a cell: its level and per-axis index in `[0, 2^level)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellCoord {
    pub level: u8,
    pub ix: u32,
    pub iy: u32,
    pub iz: u32,
}

impl CellCoord {
    pub const ROOT: CellCoord = CellCoord {
        level: 0,
        ix: 0,
        iy: 0,
        iz: 0,
    };

    /// Checked constructor.
    pub fn new(level: u8, ix: u32, iy: u32, iz: u32) -> Option<Self> {
        if level > MAX_LEVEL {
            return None;
        }
        let n = 1u64 << level;
        ((ix as u64) < n && (iy as u64) < n && (iz as u64) < n).then_some(Self {
            level,
            ix,
            iy,
            iz,
        })
    }

    /// Child in octant `(kx, ky, kz)`, each bit in `{0, 1}`.
    pub fn child_octant(self, kx: u32, ky: u32, kz: u32) -> Self {
        debug_assert!(kx <= 1 && ky <= 1 && kz <= 1);
        Self {
            level: self.level + 1,
            ix: 2 * self.ix + kx,
            iy: 2 * self.iy + ky,
            iz: 2 * self.iz + kz,
        }
    }

    /// Child by octant index `4·kz + 2·ky + kx`.
    pub fn child(self, octant: usize) -> Self {
        let o = octant as u32;
        self.child_octant(o & 1, (o >> 1) & 1, (o >> 2) & 1)
    }

    pub fn parent(self) -> Option<Self> {
        (self.level > 0).then(|| Self {
            level: self.level - 1,
            ix: self.ix / 2,
            iy: self.iy / 2,
            iz: self.iz / 2,
        })
    }

    /// Octant index of this cell inside its parent.
    pub fn octant(self) -> usize {
        ((self.iz & 1) * 4 + (self.iy & 1) * 2 + (self.ix & 1)) as usize
    }

    /// Ancestor at `level` (which must not exceed `self.level`).
    pub fn ancestor(self, level: u8) -> Self {
        let s = self.level - level;
        Self {
            level,
            ix: self.ix >> s,
            iy: self.iy >> s,
            iz: self.iz >> s,
        }
    }

    pub fn index(self, axis: usize) -> u32 {
        match axis {
            0 => self.ix,
            1 => self.iy,
            _ => self.iz,
        }
    }

    pub fn cell_size<T: Real>(self, box_len: T) -> T {
        box_len / T::of((1u64 << self.level) as f64)
    }

    pub fn center<T: Real>(self, box_len: T) -> Vec3<T> {
        let n = T::of((1u64 << self.level) as f64);
        let half = T::of(0.5);
        let c = |i: u32| box_len * (T::of(i as f64) + half) / n;
        Vec3::new(c(self.ix), c(self.iy), c(self.iz))
    }

    /// Lower and upper corners of the cell cube.
    ///
    /// Faces are computed as `box_len · i / 2^level`, which gives bit-identical
    /// coordinates for a face shared by neighbours or by a parent and child.
    pub fn bounds<T: Real>(self, box_len: T) -> (Vec3<T>, Vec3<T>) {
        let lo = Vec3::new(
            face(box_len, self.ix as u64, self.level),
            face(box_len, self.iy as u64, self.level),
            face(box_len, self.iz as u64, self.level),
        );
        let hi = Vec3::new(
            face(box_len, self.ix as u64 + 1, self.level),
            face(box_len, self.iy as u64 + 1, self.level),
            face(box_len, self.iz as u64 + 1, self.level),
        );
        (lo, hi)
    }
}

#[inline]
pub(crate) fn face<T: Real>(box_len: T, i: u64, level: u8) -> T {
    box_len * T::of(i as f64) / T::of((1u64 << level) as f64)
}

/// Name of a stored field and whether parents hold the mean of their children.
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct FieldDesc {
    pub name: String,
    pub conservative: bool,
}

impl FieldDesc {
    pub fn new(name: impl Into<String>, conservative: bool) -> Self {
        Self {
            name: name.into(),
            conservative,
        }
    }
}

#[derive(Clone, Debug)]
struct Node {
    coord: CellCoord,
    first_child: u32,
    domain: u32,
    /// Placeholder in a partial (single-domain) tree: carries no data.
    hollow: bool,
}

/// Octree over the cube `[0, box_len]^3`.
#[derive(Clone, Debug)]
pub struct AmrTree<T> {
    box_len: T,
    levelmin: u8,
    levelmax: u8,
    fields: Vec<FieldDesc>,
    ndomains: u32,
    nodes: Vec<Node>,
    values: Vec<T>,
}

/// Borrowed view of one node.
#[derive(Clone, Copy)]
pub struct NodeRef<'a, T> {
    tree: &'a AmrTree<T>,
    idx: u32,
}

impl<T> PartialEq for NodeRef<'_, T> {
    fn eq(&self, other: &Self) -> bool {
        std::ptr::eq(self.tree, other.tree) && self.idx == other.idx
    }
}

impl<T: Real> std::fmt::Debug for NodeRef<'_, T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NodeRef")
            .field("coord", &self.coord())
            .field("is_leaf", &self.is_leaf())
            .field("values", &self.values())
            .finish()
    }
}

impl<'a, T: Real> NodeRef<'a, T> {
    fn node(&self) -> &'a Node {
        &self.tree.nodes[self.idx as usize]
    }

    /// Arena index, stable for the lifetime of the tree.
    pub fn index(&self) -> usize {
        self.idx as usize
    }

    pub fn coord(&self) -> CellCoord {
        self.node().coord
    }

    pub fn level(&self) -> u8 {
        self.node().coord.level
    }

    pub fn is_leaf(&self) -> bool {
        self.node().first_child == NO_CHILD
    }

    pub fn is_hollow(&self) -> bool {
        self.node().hollow
    }

    pub fn domain(&self) -> u32 {
        self.node().domain
    }

    pub fn values(&self) -> &'a [T] {
        self.tree.node_values(self.idx as usize)
    }

    pub fn value(&self, field: usize) -> T {
        self.values()[field]
    }

    /// The 8 children in octant order, or `None` for a leaf.
    pub fn children(&self) -> Option<impl Iterator<Item = NodeRef<'a, T>> + use<'a, T>> {
        let first = self.node().first_child;
        let tree = self.tree;
        (first != NO_CHILD).then(move || (first..first + 8).map(move |idx| NodeRef { tree, idx }))
    }

    pub fn child(&self, octant: usize) -> Option<NodeRef<'a, T>> {
        let first = self.node().first_child;
        (first != NO_CHILD).then(|| NodeRef {
            tree: self.tree,
            idx: first + octant as u32,
        })
    }

    pub fn cell_size(&self) -> T {
        self.coord().cell_size(self.tree.box_len)
    }

    pub fn center(&self) -> Vec3<T> {
        self.coord().center(self.tree.box_len)
    }

    pub fn bounds(&self) -> (Vec3<T>, Vec3<T>) {
        self.coord().bounds(self.tree.box_len)
    }
}

/// Hook called for every node a traversal touches.
pub trait TraversalProbe {
    fn visit(&mut self, level: u8);
}

/// Probe that records nothing.
#[derive(Clone, Copy, Debug, Default)]
pub struct NoProbe;

impl TraversalProbe for NoProbe {
    #[inline(always)]
    fn visit(&mut self, _level: u8) {}
}

/// Per-level visit counts.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LevelCounter {
    pub counts: Vec<u64>,
}

impl LevelCounter {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Visits at levels strictly deeper than `level`.
    pub fn deeper_than(&self, level: u8) -> u64 {
        self.counts.iter().skip(level as usize + 1).sum()
    }

    pub fn merge(&mut self, other: &LevelCounter) {
        if self.counts.len() < other.counts.len() {
            self.counts.resize(other.counts.len(), 0);
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }
}

impl TraversalProbe for LevelCounter {
    fn visit(&mut self, level: u8) {
        let l = level as usize;
        if self.counts.len() <= l {
            self.counts.resize(l + 1, 0);
        }
        self.counts[l] += 1;
    }
}

impl<T: Real> AmrTree<T> {
    /// Builds a tree top-down.
    ///
    /// Cells at levels below `levelmin` are always refined; cells in
    /// `[levelmin, levelmax)` are refined when `refine` says so. `eval` fills
    /// the values of every node. Conservative fields of refined nodes are then
    /// overwritten bottom-up by the mean of their children.
    pub fn build(
        box_len: T,
        levelmin: u8,
        levelmax: u8,
        fields: Vec<FieldDesc>,
        mut refine: impl FnMut(CellCoord) -> bool,
        mut eval: impl FnMut(CellCoord, &mut [T]),
    ) -> Result<Self> {
        check_header(box_len, levelmin, levelmax, &fields)?;
        let mut tree = Self::empty(box_len, levelmin, levelmax, fields);
        let nf = tree.nfields();
        let mut buf = vec![T::zero(); nf];
        eval(CellCoord::ROOT, &mut buf);
        tree.push_node(CellCoord::ROOT, false, &buf);
        // Breadth-first: node indices grow with level.
        let mut cursor = 0;
        while cursor < tree.nodes.len() {
            let c = tree.nodes[cursor].coord;
            let split = c.level < levelmin || (c.level < levelmax && refine(c));
            if split {
                tree.nodes[cursor].first_child = tree.nodes.len() as u32;
                for o in 0..8 {
                    let cc = c.child(o);
                    eval(cc, &mut buf);
                    tree.push_node(cc, false, &buf);
                }
            }
            cursor += 1;
        }
        tree.restore_conservative_averages();
        Ok(tree)
    }

    fn empty(box_len: T, levelmin: u8, levelmax: u8, fields: Vec<FieldDesc>) -> Self {
        Self {
            box_len,
            levelmin,
            levelmax,
            fields,
            ndomains: 1,
            nodes: Vec::new(),
            values: Vec::new(),
        }
    }

    fn push_node(&mut self, coord: CellCoord, hollow: bool, values: &[T]) -> u32 {
        let idx = self.nodes.len() as u32;
        self.nodes.push(Node {
            coord,
            first_child: NO_CHILD,
            domain: 0,
            hollow,
        });
        self.values.extend_from_slice(values);
        idx
    }

    /// Recomputes conservative fields of every refined node from its children.
    pub fn restore_conservative_averages(&mut self) {
        let nf = self.nfields();
        let cons: Vec<usize> = (0..nf).filter(|&f| self.fields[f].conservative).collect();
        if cons.is_empty() {
            return;
        }
        let eighth = T::of(0.125);
        // Post-order so children are final before their parent.
        for idx in self.dfs_order().into_iter().rev() {
            let first = self.nodes[idx].first_child;
            if first == NO_CHILD {
                continue;
            }
            for &f in &cons {
                let mut sum = T::zero();
                for c in first as usize..first as usize + 8 {
                    sum += self.values[c * nf + f];
                }
                self.values[idx * nf + f] = sum * eighth;
            }
        }
    }

    pub fn box_len(&self) -> T {
        self.box_len
    }

    pub fn levelmin(&self) -> u8 {
        self.levelmin
    }

    pub fn levelmax(&self) -> u8 {
        self.levelmax
    }

    pub fn fields(&self) -> &[FieldDesc] {
        &self.fields
    }

    pub fn nfields(&self) -> usize {
        self.fields.len()
    }

    pub fn ndomains(&self) -> u32 {
        self.ndomains
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| n.first_child == NO_CHILD && !n.hollow)
            .count()
    }

    /// Deepest level actually present in the tree.
    pub fn depth(&self) -> u8 {
        self.nodes.iter().map(|n| n.coord.level).max().unwrap_or(0)
    }

    pub fn field_index(&self, name: &str) -> Result<usize> {
        self.fields
            .iter()
            .position(|f| f.name == name)
            .ok_or_else(|| Error::UnknownField(name.to_owned()))
    }

    pub fn root(&self) -> NodeRef<'_, T> {
        NodeRef { tree: self, idx: 0 }
    }

    pub fn node(&self, index: usize) -> NodeRef<'_, T> {
        assert!(index < self.nodes.len());
        NodeRef {
            tree: self,
            idx: index as u32,
        }
    }

    pub(crate) fn node_values(&self, idx: usize) -> &[T] {
        let nf = self.nfields();
        &self.values[idx * nf..(idx + 1) * nf]
    }

    /// Arena indices in depth-first pre-order, children in octant order.
    pub fn dfs_order(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![0u32];
        while let Some(idx) = stack.pop() {
            out.push(idx as usize);
            let first = self.nodes[idx as usize].first_child;
            if first != NO_CHILD {
                stack.extend((first..first + 8).rev());
            }
        }
        out
    }

    /// Is `idx` a capped leaf: a leaf at or above `cap`, or any node at `cap`.
    #[inline]
    pub(crate) fn stops_at(&self, idx: usize, cap: u8) -> bool {
        let n = &self.nodes[idx];
        n.first_child == NO_CHILD || n.coord.level >= cap
    }

    #[inline]
    pub(crate) fn first_child(&self, idx: usize) -> Option<usize> {
        let f = self.nodes[idx].first_child;
        (f != NO_CHILD).then_some(f as usize)
    }

    #[inline]
    pub(crate) fn raw_node(&self, idx: usize) -> (CellCoord, bool) {
        let n = &self.nodes[idx];
        (n.coord, n.hollow)
    }

    /// Unique node containing `p` that is a leaf or sits at `level_cap`.
    ///
    /// Cells are half-open per axis; points on the far face `box_len` are
    /// owned by the last cell.
    pub fn point_query(&self, p: Vec3<T>, level_cap: u8) -> Result<NodeRef<'_, T>> {
        self.point_query_probed(p, level_cap, &mut NoProbe)
    }

    pub fn point_query_probed(
        &self,
        p: Vec3<T>,
        level_cap: u8,
        probe: &mut impl TraversalProbe,
    ) -> Result<NodeRef<'_, T>> {
        let l = self.box_len;
        let inside = |v: T| v >= T::zero() && v <= l;
        if !(inside(p.x) && inside(p.y) && inside(p.z)) {
            return Err(Error::OutsideBox {
                x: p.x.as_f64(),
                y: p.y.as_f64(),
                z: p.z.as_f64(),
                box_len: l.as_f64(),
            });
        }
        let mut idx = 0usize;
        loop {
            let coord = self.nodes[idx].coord;
            probe.visit(coord.level);
            if self.stops_at(idx, level_cap) {
                return Ok(self.node(idx));
            }
            let first = self.nodes[idx].first_child as usize;
            let mut octant = 0;
            for axis in 0..3 {
                let mid = face(l, 2 * coord.index(axis) as u64 + 1, coord.level + 1);
                if p[axis] >= mid {
                    octant |= 1 << axis;
                }
            }
            idx = first + octant;
        }
    }

    /// Capped cells in depth-first order (see [`CappedCells`]).
    pub fn cells_at_cap(&self, level_cap: u8) -> CappedCells<'_, T, NoProbe> {
        self.cells_at_cap_probed(level_cap, NoProbe)
    }

    pub fn cells_at_cap_probed<P: TraversalProbe>(
        &self,
        level_cap: u8,
        probe: P,
    ) -> CappedCells<'_, T, P> {
        CappedCells {
            tree: self,
            cap: level_cap,
            stack: vec![0],
            probe,
        }
    }

    /// Copy of the tree with every node deeper than `max_level` removed.
    pub fn truncated(&self, max_level: u8) -> Self {
        let mut out = Self::empty(self.box_len, self.levelmin, self.levelmax, self.fields.clone());
        out.ndomains = self.ndomains;
        let mut queue = std::collections::VecDeque::from([(0usize, None::<usize>)]);
        // BFS so that every sibling group is contiguous in `out`.
        while let Some((src, dst_parent_slot)) = queue.pop_front() {
            let dst = match dst_parent_slot {
                Some(d) => d,
                None => {
                    let n = &self.nodes[src];
                    let d = out.push_node(n.coord, n.hollow, self.node_values(src)) as usize;
                    out.nodes[d].domain = n.domain;
                    d
                }
            };
            let n = &self.nodes[src];
            if n.first_child != NO_CHILD && n.coord.level < max_level {
                let first_dst = out.nodes.len();
                out.nodes[dst].first_child = first_dst as u32;
                for k in 0..8 {
                    let s = n.first_child as usize + k;
                    let sn = &self.nodes[s];
                    let d = out.push_node(sn.coord, sn.hollow, self.node_values(s)) as usize;
                    out.nodes[d].domain = sn.domain;
                    queue.push_back((s, Some(d)));
                }
            }
        }
        out
    }

    /// Deep structural equality: same header and the same depth-first
    /// sequence of (coord, leaf flag, value bits).
    pub fn same_as(&self, other: &Self) -> bool {
        if self.box_len.to_bits_u64() != other.box_len.to_bits_u64()
            || self.levelmin != other.levelmin
            || self.levelmax != other.levelmax
            || self.fields != other.fields
            || self.nodes.len() != other.nodes.len()
        {
            return false;
        }
        let a = self.dfs_order();
        let b = other.dfs_order();
        a.iter().zip(&b).all(|(&i, &j)| {
            let (na, nb) = (&self.nodes[i], &other.nodes[j]);
            na.coord == nb.coord
                && (na.first_child == NO_CHILD) == (nb.first_child == NO_CHILD)
                && na.hollow == nb.hollow
                && self
                    .node_values(i)
                    .iter()
                    .zip(other.node_values(j))
                    .all(|(x, y)| x.to_bits_u64() == y.to_bits_u64())
        })
    }
}

trait ToBits {
    fn to_bits_u64(self) -> u64;
}

impl<T: Real> ToBits for T {
    fn to_bits_u64(self) -> u64 {
        self.as_f64().to_bits()
    }
}

pub(crate) fn check_header<T: Real>(
    box_len: T,
    levelmin: u8,
    levelmax: u8,
    fields: &[FieldDesc],
) -> Result<()> {
    if !(box_len > T::zero() && box_len.is_finite()) {
        return Err(Error::arg(format!("box length must be positive, got {box_len}")));
    }
    if levelmin > levelmax || levelmax > MAX_LEVEL {
        return Err(Error::arg(format!(
            "need levelmin <= levelmax <= {MAX_LEVEL}, got {levelmin}..{levelmax}"
        )));
    }
    for (i, f) in fields.iter().enumerate() {
        if fields[..i].iter().any(|g| g.name == f.name) {
            return Err(Error::arg(format!("duplicate field name `{}`", f.name)));
        }
    }
    Ok(())
}

/// Depth-first iterator over the cells a renderer treats as leaves at a
/// given level cap: true leaves at or above the cap plus refined nodes at
/// exactly the cap. Hollow placeholders of partial trees are skipped.
pub struct CappedCells<'a, T, P> {
    tree: &'a AmrTree<T>,
    cap: u8,
    stack: Vec<u32>,
    probe: P,
}

impl<T, P> CappedCells<'_, T, P> {
    pub fn into_probe(self) -> P {
        self.probe
    }

    pub fn probe(&self) -> &P {
        &self.probe
    }
}

impl<'a, T: Real, P: TraversalProbe> Iterator for CappedCells<'a, T, P> {
    type Item = NodeRef<'a, T>;

    fn next(&mut self) -> Option<Self::Item> {
        while let Some(idx) = self.stack.pop() {
            let n = &self.tree.nodes[idx as usize];
            self.probe.visit(n.coord.level);
            if self.tree.stops_at(idx as usize, self.cap) {
                if n.hollow {
                    continue;
                }
                return Some(NodeRef {
                    tree: self.tree,
                    idx,
                });
            }
            self.stack.extend((n.first_child..n.first_child + 8).rev());
        }
        None
    }
}

/// Incremental construction from explicitly addressed records, used by the
/// dataset reader for both full and single-domain trees.
pub(crate) struct TreeAssembler<T> {
    tree: AmrTree<T>,
    /// Node received from a record (as opposed to an implied ancestor or sibling).
    seen: Vec<bool>,
    declared_leaf: Vec<bool>,
}

impl<T: Real> TreeAssembler<T> {
    pub fn new(box_len: T, levelmin: u8, levelmax: u8, fields: Vec<FieldDesc>, ndomains: u32) -> Self {
        let nf = fields.len();
        let mut tree = AmrTree::empty(box_len, levelmin, levelmax, fields);
        tree.ndomains = ndomains;
        tree.push_node(CellCoord::ROOT, true, &vec![T::zero(); nf]);
        Self {
            tree,
            seen: vec![false],
            declared_leaf: vec![false],
        }
    }

    /// Inserts one record, creating hollow ancestors and siblings as needed.
    pub fn insert(&mut self, coord: CellCoord, is_leaf: bool, domain: u32, values: &[T]) -> Result<()> {
        let nf = self.tree.nfields();
        let mut idx = 0usize;
        for l in 1..=coord.level {
            if self.tree.nodes[idx].first_child == NO_CHILD {
                if self.seen[idx] && self.declared_leaf[idx] {
                    return Err(Error::Structural(format!(
                        "record {coord:?} lies below leaf {:?}",
                        self.tree.nodes[idx].coord
                    )));
                }
                let parent = self.tree.nodes[idx].coord;
                let first = self.tree.nodes.len() as u32;
                self.tree.nodes[idx].first_child = first;
                let zeros = vec![T::zero(); nf];
                for o in 0..8 {
                    self.tree.push_node(parent.child(o), true, &zeros);
                    self.seen.push(false);
                    self.declared_leaf.push(false);
                }
            }
            idx = self.tree.nodes[idx].first_child as usize + coord.ancestor(l).octant();
        }
        if self.seen[idx] {
            return Err(Error::Structural(format!("duplicate record for {coord:?}")));
        }
        if is_leaf && self.tree.nodes[idx].first_child != NO_CHILD {
            return Err(Error::Structural(format!("leaf record {coord:?} has children")));
        }
        self.seen[idx] = true;
        self.declared_leaf[idx] = is_leaf;
        let n = &mut self.tree.nodes[idx];
        n.hollow = false;
        n.domain = domain;
        self.tree.values[idx * nf..(idx + 1) * nf].copy_from_slice(values);
        Ok(())
    }

    /// Finishes a complete tree: every node must come from a record and every
    /// refined node must have all 8 children, unless it sits at `cap`.
    pub fn finish_complete(self, cap: u8) -> Result<AmrTree<T>> {
        for (idx, n) in self.tree.nodes.iter().enumerate() {
            if !self.seen[idx] {
                let parent = n.coord.parent().map(|p| format!("{p:?}")).unwrap_or_default();
                return Err(Error::Structural(format!(
                    "incomplete children: missing {:?} (parent {parent})",
                    n.coord
                )));
            }
            if !self.declared_leaf[idx] && n.first_child == NO_CHILD && n.coord.level < cap {
                return Err(Error::Structural(format!(
                    "incomplete children: refined node {:?} has no child records",
                    n.coord
                )));
            }
        }
        Ok(self.tree)
    }

    /// Finishes a partial tree: unseen nodes stay hollow, and so do refined
    /// nodes above `cap` whose children belong to other domains.
    pub fn finish_partial(mut self, cap: u8) -> AmrTree<T> {
        for (idx, n) in self.tree.nodes.iter_mut().enumerate() {
            if self.seen[idx] && !self.declared_leaf[idx] && n.first_child == NO_CHILD && n.coord.level < cap {
                n.hollow = true;
            }
        }
        self.tree
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn full_tree(depth: u8) -> AmrTree<f64> {
        AmrTree::build(
            1.0,
            depth,
            depth,
            vec![FieldDesc::new("rho", true)],
            |_| true,
            |c, v| v[0] = (c.ix + 2 * c.iy + 3 * c.iz) as f64,
        )
        .unwrap()
    }

    #[test]
    fn child_octant_examples() {
        let c = CellCoord::ROOT.child_octant(1, 0, 0);
        assert_eq!(c, CellCoord::new(1, 1, 0, 0).unwrap());
        let c = CellCoord::new(1, 1, 1, 1).unwrap().child_octant(1, 1, 1);
        assert_eq!(c, CellCoord::new(2, 3, 3, 3).unwrap());
    }

    #[test]
    fn child_center_offsets() {
        let l = 2.0f64;
        for parent in [CellCoord::ROOT, CellCoord::new(3, 5, 2, 7).unwrap()] {
            let pc = parent.center(l);
            let d = l / (1u64 << (parent.level + 2)) as f64;
            for o in 0..8 {
                let child = parent.child(o);
                assert_eq!(child.octant(), o);
                assert_eq!(child.parent(), Some(parent));
                let cc = child.center(l);
                for axis in 0..3 {
                    let k = (o >> axis) & 1;
                    let sign = if k == 1 { 1.0 } else { -1.0 };
                    assert!((cc[axis] - pc[axis] - sign * d).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn coord_range_checked() {
        assert!(CellCoord::new(1, 2, 0, 0).is_none());
        assert!(CellCoord::new(31, 0, 0, 0).is_none());
    }

    #[test]
    fn root_only_query() {
        let t = full_tree(0);
        let n = t.point_query(Vec3::splat(0.3), 5).unwrap();
        assert_eq!(n.coord(), CellCoord::ROOT);
        assert!(n.is_leaf());
    }

    #[test]
    fn octant_query() {
        let t = full_tree(1);
        let n = t.point_query(Vec3::new(0.75, 0.25, 0.25), 1).unwrap();
        assert_eq!(n.coord(), CellCoord::new(1, 1, 0, 0).unwrap());
    }

    #[test]
    fn query_far_face_clamps_and_outside_errors() {
        let t = full_tree(2);
        let n = t.point_query(Vec3::new(1.0, 1.0, 0.0), 2).unwrap();
        assert_eq!(n.coord(), CellCoord::new(2, 3, 3, 0).unwrap());
        assert!(matches!(
            t.point_query(Vec3::new(1.01, 0.5, 0.5), 2),
            Err(Error::OutsideBox { .. })
        ));
        assert!(t.point_query(Vec3::new(0.5, -1e-9, 0.5), 2).is_err());
    }

    #[test]
    fn capped_counts_on_full_trees() {
        assert_eq!(full_tree(2).cells_at_cap(1).count(), 8);
        assert!(full_tree(2).cells_at_cap(1).all(|c| c.level() == 1));
        assert_eq!(full_tree(3).cells_at_cap(3).count(), 512);
        assert_eq!(full_tree(3).cells_at_cap(7).count(), 512);
    }

    #[test]
    fn capped_order_is_z_major_dfs() {
        let t = full_tree(1);
        let coords: Vec<_> = t.cells_at_cap(1).map(|c| c.coord()).collect();
        for (o, c) in coords.iter().enumerate() {
            assert_eq!(*c, CellCoord::ROOT.child(o));
        }
        assert_eq!(coords[1], CellCoord::new(1, 1, 0, 0).unwrap());
        assert_eq!(coords[4], CellCoord::new(1, 0, 0, 1).unwrap());
    }

    #[test]
    fn parents_hold_child_means() {
        let t = full_tree(2);
        let root = t.root();
        let mean: f64 = root.children().unwrap().map(|c| c.value(0)).sum::<f64>() / 8.0;
        assert!((root.value(0) - mean).abs() < 1e-12);
    }

    #[test]
    fn truncation_drops_deep_levels() {
        let t = full_tree(3);
        let u = t.truncated(1);
        assert_eq!(u.node_count(), 9);
        assert_eq!(u.depth(), 1);
        assert!(u.same_as(&t.truncated(1)));
        assert!(!u.same_as(&t));
    }

    #[test]
    fn header_validation() {
        let f = vec![FieldDesc::new("a", true), FieldDesc::new("a", false)];
        assert!(AmrTree::<f64>::build(1.0, 0, 1, f, |_| false, |_, _| {}).is_err());
        assert!(AmrTree::<f64>::build(1.0, 2, 1, vec![], |_| false, |_, _| {}).is_err());
        assert!(AmrTree::<f64>::build(0.0, 0, 1, vec![], |_| false, |_, _| {}).is_err());
    }

    #[test]
    fn works_in_single_precision() {
        let t = AmrTree::<f32>::build(1.0, 1, 2, vec![FieldDesc::new("a", true)], |c| c.ix == 0, |_, v| v[0] = 1.0)
            .unwrap();
        let vol: f32 = t.cells_at_cap(2).map(|c| c.cell_size().powi(3)).sum();
        assert!((vol - 1.0).abs() < 1e-6);
    }
}
