//! Dual-mesh export of cell-centered data as a VTK legacy unstructured grid.
//!
//! Dual vertices are the capped cell centers. A hexahedron is emitted for
//! every 2×2×2 block of same-level cells; blocks straddling a level jump are
//! left out, so transitions show up as gaps.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::amr::{AmrTree, CellCoord};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// VTK cell type id of a linear hexahedron.
pub const VTK_HEXAHEDRON: u8 = 12;

/// Corner offsets in VTK order: bottom quad counter-clockwise, then top.
pub const HEX_CORNERS: [[u32; 3]; 8] = [
    [0, 0, 0],
    [1, 0, 0],
    [1, 1, 0],
    [0, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [1, 1, 1],
    [0, 1, 1],
];

#[derive(Clone, Debug, PartialEq)]
pub struct DualMesh<T> {
    pub points: Vec<[T; 3]>,
    /// `point_data[f][p]`: value of field `f` at point `p`.
    pub point_data: Vec<Vec<T>>,
    pub field_names: Vec<String>,
    pub hexahedra: Vec<[usize; 8]>,
}

impl<T: Real> DualMesh<T> {
    pub fn empty(field_names: Vec<String>) -> Self {
        Self {
            points: Vec::new(),
            point_data: vec![Vec::new(); field_names.len()],
            field_names,
            hexahedra: Vec::new(),
        }
    }

    /// Keeps only the named fields, in the given order.
    pub fn select_fields(mut self, names: &[&str]) -> Result<Self> {
        let mut data = Vec::with_capacity(names.len());
        for &n in names {
            let i = self
                .field_names
                .iter()
                .position(|f| f == n)
                .ok_or_else(|| Error::UnknownField(n.to_owned()))?;
            data.push(self.point_data[i].clone());
        }
        self.point_data = data;
        self.field_names = names.iter().map(|s| s.to_string()).collect();
        Ok(self)
    }
}

pub fn build_dual_mesh<T: Real>(tree: &AmrTree<T>, level_cap: u8) -> DualMesh<T> {
    let names: Vec<String> = tree.fields().iter().map(|f| f.name.clone()).collect();
    let mut mesh = DualMesh::empty(names);
    let mut index: HashMap<CellCoord, usize> = HashMap::new();
    for cell in tree.cells_at_cap(level_cap) {
        index.insert(cell.coord(), mesh.points.len());
        mesh.points.push(cell.center().to_array());
        for (f, v) in cell.values().iter().enumerate() {
            mesh.point_data[f].push(*v);
        }
    }
    // Each cell is the low corner of at most one block.
    let mut corners: Vec<(CellCoord, usize)> = index.iter().map(|(c, &i)| (*c, i)).collect();
    corners.sort_unstable_by_key(|&(_, i)| i);
    for (c, _) in corners {
        let mut hex = [0usize; 8];
        let complete = HEX_CORNERS.iter().zip(hex.iter_mut()).all(|(o, slot)| {
            CellCoord::new(c.level, c.ix + o[0], c.iy + o[1], c.iz + o[2])
                .and_then(|n| index.get(&n))
                .map(|&i| *slot = i)
                .is_some()
        });
        if complete {
            mesh.hexahedra.push(hex);
        }
    }
    mesh
}

/// Legacy ASCII VTK text for the mesh.
pub fn vtk_string<T: Real>(mesh: &DualMesh<T>) -> String {
    let mut s = String::new();
    s.push_str("# vtk DataFile Version 3.0\n");
    s.push_str("octree AMR dual mesh\n");
    s.push_str("ASCII\n");
    s.push_str("DATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(s, "POINTS {} double", mesh.points.len());
    for p in &mesh.points {
        let _ = writeln!(s, "{:?} {:?} {:?}", p[0].as_f64(), p[1].as_f64(), p[2].as_f64());
    }
    let _ = writeln!(s, "CELLS {} {}", mesh.hexahedra.len(), mesh.hexahedra.len() * 9);
    for h in &mesh.hexahedra {
        s.push('8');
        for i in h {
            let _ = write!(s, " {i}");
        }
        s.push('\n');
    }
    let _ = writeln!(s, "CELL_TYPES {}", mesh.hexahedra.len());
    for _ in &mesh.hexahedra {
        let _ = writeln!(s, "{VTK_HEXAHEDRON}");
    }
    let _ = writeln!(s, "POINT_DATA {}", mesh.points.len());
    for (name, data) in mesh.field_names.iter().zip(&mesh.point_data) {
        let _ = writeln!(s, "SCALARS {} double 1", sanitize(name));
        s.push_str("LOOKUP_TABLE default\n");
        for v in data {
            let _ = writeln!(s, "{:?}", v.as_f64());
        }
    }
    s
}

/// VTK names cannot contain whitespace.
fn sanitize(name: &str) -> String {
    name.chars().map(|c| if c.is_whitespace() { '_' } else { c }).collect()
}

pub fn write_vtk<T: Real>(mesh: &DualMesh<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, vtk_string(mesh)).map_err(|e| Error::io(path, e))
}
