//! Top-down adaptive ray caster over the octree.

use serde::{Deserialize, Serialize};

use crate::amr::{AmrTree, NoProbe, TraversalProbe};
use crate::camera::{Camera, Ray};
use crate::error::Result;
use crate::geom::Vec3;
use crate::map::{LevelMap, ScalarMap};
use crate::scalar::Real;

/// How segment contributions combine along a ray.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RayMode {
    /// Σ value × segment length.
    Sum,
    /// Maximum intensity projection.
    Mip,
}

/// Parametric entry and exit of a ray through an axis-aligned box, clipped
/// to `[0, ray.t_max]`.
///
/// Axes along which the ray does not move use the half-open test
/// `lo <= origin < hi`, so a ray running exactly along a shared face belongs
/// to one cell only.
pub fn ray_box_intersect<T: Real>(ray: &Ray<T>, lo: Vec3<T>, hi: Vec3<T>) -> Option<(T, T)> {
    let mut t_in = T::zero();
    let mut t_out = ray.t_max;
    for axis in 0..3 {
        let o = ray.origin[axis];
        let d = ray.dir[axis];
        if d == T::zero() {
            if o < lo[axis] || o >= hi[axis] {
                return None;
            }
            continue;
        }
        let a = (lo[axis] - o) / d;
        let b = (hi[axis] - o) / d;
        let (near, far) = if a <= b { (a, b) } else { (b, a) };
        if near > t_in {
            t_in = near;
        }
        if far < t_out {
            t_out = far;
        }
        if t_in > t_out {
            return None;
        }
    }
    Some((t_in, t_out))
}

/// Result of one cast: accumulated value and the coarsest contributing
/// level (`None` when no positive-length segment was found).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RaySample<T> {
    pub value: T,
    pub level: Option<u8>,
}

struct Accumulator<T> {
    mode: RayMode,
    value: T,
    hit: bool,
    coarsest: u8,
}

impl<T: Real> Accumulator<T> {
    fn new(mode: RayMode) -> Self {
        Self {
            mode,
            value: T::zero(),
            hit: false,
            coarsest: u8::MAX,
        }
    }

    #[inline]
    fn add(&mut self, value: T, length: T, level: u8) {
        if length <= T::zero() {
            return;
        }
        match self.mode {
            RayMode::Sum => self.value += value * length,
            RayMode::Mip => {
                if !self.hit || value > self.value {
                    self.value = value;
                }
            }
        }
        self.hit = true;
        self.coarsest = self.coarsest.min(level);
    }

    fn finish(self) -> RaySample<T> {
        RaySample {
            value: if self.hit { self.value } else { T::zero() },
            level: self.hit.then_some(self.coarsest),
        }
    }
}

/// Casts one ray: descends from the root, visiting the children the ray
/// crosses in octant order, and accumulates at leaves or at `level_cap`.
pub fn cast_ray<T: Real>(tree: &AmrTree<T>, ray: &Ray<T>, field: usize, level_cap: u8, mode: RayMode) -> RaySample<T> {
    cast_ray_probed(tree, ray, field, level_cap, mode, &mut NoProbe)
}

pub fn cast_ray_probed<T: Real>(
    tree: &AmrTree<T>,
    ray: &Ray<T>,
    field: usize,
    level_cap: u8,
    mode: RayMode,
    probe: &mut impl TraversalProbe,
) -> RaySample<T> {
    let mut acc = Accumulator::new(mode);
    let (lo, hi) = tree.root().bounds();
    if let Some((t0, t1)) = ray_box_intersect(ray, lo, hi) {
        descend(tree, ray, field, level_cap, 0, t0, t1, &mut acc, probe);
    }
    acc.finish()
}

#[allow(clippy::too_many_arguments)]
fn descend<T: Real>(
    tree: &AmrTree<T>,
    ray: &Ray<T>,
    field: usize,
    cap: u8,
    idx: usize,
    t_in: T,
    t_out: T,
    acc: &mut Accumulator<T>,
    probe: &mut impl TraversalProbe,
) {
    let (coord, hollow) = tree.raw_node(idx);
    probe.visit(coord.level);
    if tree.stops_at(idx, cap) {
        if !hollow {
            acc.add(tree.node_values(idx)[field], t_out - t_in, coord.level);
        }
        return;
    }
    let first = tree.first_child(idx).expect("refined node");
    let box_len = tree.box_len();
    for octant in 0..8 {
        let (lo, hi) = coord.child(octant).bounds(box_len);
        if let Some((a, b)) = ray_box_intersect(ray, lo, hi) {
            if b > a {
                descend(tree, ray, field, cap, first + octant, a, b, acc, probe);
            }
        }
    }
}

/// Ray-cast image plus the per-pixel coarsest level.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderResult<T> {
    pub map: ScalarMap<T>,
    pub levels: LevelMap,
    pub level_cap: u8,
}

/// Pixel rectangle `[x0, x0+w) × [y0, y0+h)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PixelRect {
    pub x0: usize,
    pub y0: usize,
    pub w: usize,
    pub h: usize,
}

impl PixelRect {
    pub fn full(nx: usize, ny: usize) -> Self {
        Self { x0: 0, y0: 0, w: nx, h: ny }
    }

    pub fn area(&self) -> usize {
        self.w * self.h
    }
}

/// One ray per pixel through the whole image at the camera's level cap.
pub fn render_ray<T: Real>(tree: &AmrTree<T>, cam: &Camera<T>, field: &str, mode: RayMode) -> Result<RenderResult<T>> {
    let f = tree.field_index(field)?;
    cam.validate()?;
    let cap = cam.effective_level_cap(tree.box_len(), tree.levelmin(), tree.levelmax());
    Ok(render_ray_rect(tree, cam, f, mode, cap, PixelRect::full(cam.nx, cam.ny), &mut NoProbe))
}

/// Renders the pixels of `rect` into a `rect.w × rect.h` result.
pub fn render_ray_rect<T: Real>(
    tree: &AmrTree<T>,
    cam: &Camera<T>,
    field: usize,
    mode: RayMode,
    level_cap: u8,
    rect: PixelRect,
    probe: &mut impl TraversalProbe,
) -> RenderResult<T> {
    let right = cam.right();
    let up = cam.true_up();
    let mut map = ScalarMap::zeros(rect.w, rect.h);
    let mut levels = LevelMap::new(rect.w, rect.h);
    for y in 0..rect.h {
        for x in 0..rect.w {
            let ray = cam.pixel_ray_unchecked(rect.x0 + x, rect.y0 + y, right, up);
            let s = cast_ray_probed(tree, &ray, field, level_cap, mode, probe);
            map.set(x, y, s.value);
            if let Some(l) = s.level {
                levels.set(x, y, l);
            }
        }
    }
    RenderResult { map, levels, level_cap }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::amr::FieldDesc;

    fn ray(o: [f64; 3], d: [f64; 3], t_max: f64) -> Ray<f64> {
        Ray {
            origin: o.into(),
            dir: Vec3::from(d).normalized().unwrap(),
            t_max,
        }
    }

    fn unit() -> (Vec3<f64>, Vec3<f64>) {
        (Vec3::zero(), Vec3::splat(1.0))
    }

    fn single_leaf(v: f64) -> AmrTree<f64> {
        AmrTree::build(1.0, 0, 0, vec![FieldDesc::new("rho", true)], |_| false, |_, x| x[0] = v).unwrap()
    }

    #[test]
    fn axis_ray_through_unit_cube() {
        let (lo, hi) = unit();
        let r = ray([-1.0, 0.5, 0.5], [1.0, 0.0, 0.0], 10.0);
        assert_eq!(ray_box_intersect(&r, lo, hi), Some((1.0, 2.0)));
    }

    #[test]
    fn diagonal_length() {
        let (lo, hi) = unit();
        let r = ray([-1.0, -1.0, -1.0], [1.0, 1.0, 1.0], 10.0);
        let (a, b) = ray_box_intersect(&r, lo, hi).unwrap();
        assert!((b - a - 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn clipping_and_misses() {
        let (lo, hi) = unit();
        let r = ray([-1.0, 0.5, 0.5], [1.0, 0.0, 0.0], 1.5);
        assert_eq!(ray_box_intersect(&r, lo, hi), Some((1.0, 1.5)));
        let r = ray([-1.0, 0.5, 0.5], [1.0, 0.0, 0.0], 0.5);
        assert_eq!(ray_box_intersect(&r, lo, hi), None);
        let r = ray([-1.0, 2.0, 0.5], [1.0, 0.0, 0.0], 5.0);
        assert_eq!(ray_box_intersect(&r, lo, hi), None);
        // Along the shared face y = 1: owned by the upper neighbour only.
        let r = ray([-1.0, 1.0, 0.5], [1.0, 0.0, 0.0], 5.0);
        assert_eq!(ray_box_intersect(&r, lo, hi), None);
        let r = ray([-1.0, 0.0, 0.5], [1.0, 0.0, 0.0], 5.0);
        assert!(ray_box_intersect(&r, lo, hi).is_some());
    }

    #[test]
    fn single_leaf_sum_and_mip() {
        let t = single_leaf(2.0);
        let r = ray([-0.5, 0.5, 0.5], [1.0, 0.0, 0.0], 3.0);
        let s = cast_ray(&t, &r, 0, 5, RayMode::Sum);
        assert_eq!(s, RaySample { value: 2.0, level: Some(0) });
        assert_eq!(cast_ray(&t, &r, 0, 5, RayMode::Mip).value, 2.0);
        let miss = ray([-0.5, 3.0, 0.5], [1.0, 0.0, 0.0], 3.0);
        assert_eq!(cast_ray(&t, &miss, 0, 5, RayMode::Sum), RaySample { value: 0.0, level: None });
    }

    #[test]
    fn face_aligned_ray_counts_once() {
        let t = AmrTree::build(1.0, 2, 2, vec![FieldDesc::new("one", true)], |_| true, |_, v| v[0] = 1.0).unwrap();
        // Runs exactly along the plane y = 0.5, a face shared by two cells.
        let r = ray([0.3, 0.5, -1.0], [0.0, 0.0, 1.0], 3.0);
        let s = cast_ray(&t, &r, 0, 2, RayMode::Sum);
        assert_eq!(s.value, 1.0);
    }

    #[test]
    fn uniform_column() {
        let t = AmrTree::build(1.0, 3, 3, vec![FieldDesc::new("v", true)], |_| true, |_, v| v[0] = 3.0).unwrap();
        let cam = Camera::full_box(1.0, 8, 8);
        let r = render_ray(&t, &cam, "v", RayMode::Sum).unwrap();
        assert!(r.map.data().iter().all(|&v| v == 3.0));
        assert!(r.levels.data().iter().all(|&l| l == 3));
        assert!(render_ray(&t, &cam, "nope", RayMode::Sum).is_err());
    }

    #[test]
    fn one_pixel_image_is_central_ray() {
        let t = AmrTree::build(1.0, 1, 2, vec![FieldDesc::new("v", true)], |c| c.ix == 0, |c, v| {
            v[0] = 1.0 + c.ix as f64 + c.iy as f64 * 0.5
        })
        .unwrap();
        let mut cam = Camera::full_box(1.0, 1, 1);
        cam.view = Vec3::new(1.0, 0.0, 0.0);
        let r = render_ray(&t, &cam, "v", RayMode::Sum).unwrap();
        let center = ray([0.0, 0.5, 0.5], [1.0, 0.0, 0.0], 1.0);
        let cap = cam.effective_level_cap(1.0, 1, 2);
        assert_eq!(r.map.get(0, 0), cast_ray(&t, &center, 0, cap, RayMode::Sum).value);
    }
}
