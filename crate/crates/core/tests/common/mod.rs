//! Test-only oracles. Everything here is deliberately naive and avoids the
//! library's traversal code paths.

#![allow(dead_code)]

use amrvis::amr::{AmrTree, CellCoord, FieldDesc, NodeRef};
use amrvis::camera::Ray;
use amrvis::map::ScalarMap;
use amrvis::Vec3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Randomly refined tree with fields `rho` (random, conservative) and
/// `one` (≡ 1, conservative).
pub fn random_tree(seed: u64, levelmin: u8, levelmax: u8, p_refine: f64) -> AmrTree<f64> {
    let mut refine_rng = rng(seed);
    let mut value_rng = rng(seed ^ 0x9e37_79b9);
    AmrTree::build(
        1.0,
        levelmin,
        levelmax,
        vec![FieldDesc::new("rho", true), FieldDesc::new("one", true)],
        |_| refine_rng.random_bool(p_refine),
        |_, v| {
            v[0] = value_rng.random_range(0.1..10.0);
            v[1] = 1.0;
        },
    )
    .unwrap()
}

pub fn full_tree(depth: u8) -> AmrTree<f64> {
    random_tree(depth as u64, depth, depth, 0.0)
}

/// Half-open containment with the far box face owned by the last cell.
pub fn contains(c: CellCoord, box_len: f64, p: Vec3<f64>) -> bool {
    let n = (1u64 << c.level) as f64;
    let size = box_len / n;
    (0..3).all(|a| {
        let i = c.index(a) as f64;
        let lo = i * size;
        let hi = (i + 1.0) * size;
        let last = c.index(a) as u64 + 1 == 1u64 << c.level;
        p[a] >= lo && (p[a] < hi || (last && p[a] <= box_len))
    })
}

/// Linear scan over every node for the capped leaf holding `p`.
pub fn brute_force_query(tree: &AmrTree<f64>, p: Vec3<f64>, cap: u8) -> Option<CellCoord> {
    let hits: Vec<CellCoord> = (0..tree.node_count())
        .map(|i| tree.node(i))
        .filter(|n| (n.is_leaf() && n.level() <= cap) || n.level() == cap)
        .map(|n| n.coord())
        .filter(|&c| contains(c, tree.box_len(), p))
        .collect();
    assert!(hits.len() <= 1, "overlapping capped cells {hits:?}");
    hits.first().copied()
}

/// Plain recursion over `children()`.
pub fn enumerate_capped<'a>(n: NodeRef<'a, f64>, cap: u8, out: &mut Vec<NodeRef<'a, f64>>) {
    match n.children() {
        Some(children) if n.level() < cap => {
            for c in children {
                enumerate_capped(c, cap, out);
            }
        }
        _ => out.push(n),
    }
}

/// Midpoint Riemann walk along a ray over `[0, t_max]`.
pub struct Walk {
    pub sum: f64,
    pub max: Option<f64>,
    pub min_level: Option<u8>,
}

pub fn riemann_walk(tree: &AmrTree<f64>, ray: &Ray<f64>, field: usize, cap: u8, steps: usize) -> Walk {
    let l = tree.box_len();
    let dt = ray.t_max / steps as f64;
    let mut walk = Walk { sum: 0.0, max: None, min_level: None };
    for s in 0..steps {
        let p = ray.at((s as f64 + 0.5) * dt);
        if (0..3).any(|a| p[a] < 0.0 || p[a] >= l) {
            continue;
        }
        let n = tree.point_query(p, cap).unwrap();
        let v = n.value(field);
        walk.sum += v * dt;
        walk.max = Some(walk.max.map_or(v, |m: f64| m.max(v)));
        walk.min_level = Some(walk.min_level.map_or(n.level(), |m: u8| m.min(n.level())));
    }
    walk
}

/// Length of `[0, t_max]` spent inside the box, by brute-force sampling.
pub fn sampled_length(ray: &Ray<f64>, lo: Vec3<f64>, hi: Vec3<f64>, t_lo: f64, t_hi: f64, samples: usize) -> f64 {
    let dt = (t_hi - t_lo) / samples as f64;
    let inside = (0..samples)
        .filter(|&s| {
            let p = ray.at(t_lo + (s as f64 + 0.5) * dt);
            (0..3).all(|a| p[a] >= lo[a] && p[a] <= hi[a])
        })
        .count();
    inside as f64 * dt
}

/// Truncated unit-mass Gaussian taps evaluated directly in 2D.
pub fn gaussian_taps(sigma: f64) -> (isize, Vec<Vec<f64>>) {
    let r = (4.0 * sigma).ceil().max(1.0) as isize;
    let mut k = vec![vec![0.0; (2 * r + 1) as usize]; (2 * r + 1) as usize];
    let mut total = 0.0;
    for dy in -r..=r {
        for dx in -r..=r {
            let w = (-((dx * dx + dy * dy) as f64) / (2.0 * sigma * sigma)).exp();
            k[(dy + r) as usize][(dx + r) as usize] = w;
            total += w;
        }
    }
    k.iter_mut().flatten().for_each(|w| *w /= total);
    (r, k)
}

/// O(N²K²) convolution with zeros outside the map.
pub fn direct_convolve(map: &ScalarMap<f64>, sigma: f64) -> ScalarMap<f64> {
    let (nx, ny) = map.shape();
    let (r, k) = gaussian_taps(sigma);
    let mut out = ScalarMap::zeros(nx, ny);
    for y in 0..ny as isize {
        for x in 0..nx as isize {
            let mut acc = 0.0;
            for dy in -r..=r {
                for dx in -r..=r {
                    let (sx, sy) = (x - dx, y - dy);
                    if sx >= 0 && sy >= 0 && sx < nx as isize && sy < ny as isize {
                        acc += map.get(sx as usize, sy as usize) * k[(dy + r) as usize][(dx + r) as usize];
                    }
                }
            }
            out.set(x as usize, y as usize, acc);
        }
    }
    out
}

/// Per-pixel direct convolution with clamp-to-edge borders and a σ chosen
/// per output pixel (`None` leaves the pixel unchanged).
pub fn direct_variable_blur(map: &ScalarMap<f64>, sigma_at: impl Fn(usize, usize) -> Option<f64>) -> ScalarMap<f64> {
    let (nx, ny) = map.shape();
    let mut out = map.clone();
    for y in 0..ny {
        for x in 0..nx {
            let Some(sigma) = sigma_at(x, y) else { continue };
            let (r, k) = gaussian_taps(sigma);
            let mut acc = 0.0;
            for dy in -r..=r {
                for dx in -r..=r {
                    let sx = (x as isize + dx).clamp(0, nx as isize - 1) as usize;
                    let sy = (y as isize + dy).clamp(0, ny as isize - 1) as usize;
                    acc += map.get(sx, sy) * k[(dy + r) as usize][(dx + r) as usize];
                }
            }
            out.set(x, y, acc);
        }
    }
    out
}

pub fn max_abs_diff(a: &ScalarMap<f64>, b: &ScalarMap<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn random_unit(r: &mut ChaCha8Rng) -> Vec3<f64> {
    loop {
        let v = Vec3::new(
            r.random_range(-1.0..1.0),
            r.random_range(-1.0..1.0),
            r.random_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v * (1.0 / n);
        }
    }
}

/// Random ray that starts outside the unit box and aims through it.
pub fn random_ray_through_box(r: &mut ChaCha8Rng, box_len: f64) -> Ray<f64> {
    let target = Vec3::new(
        r.random_range(0.05..0.95) * box_len,
        r.random_range(0.05..0.95) * box_len,
        r.random_range(0.05..0.95) * box_len,
    );
    let dir = random_unit(r);
    let reach = 2.0 * box_len;
    Ray {
        origin: target - dir * reach,
        dir,
        t_max: 2.0 * reach,
    }
}

/// Length of the part of `[0, t_max]` where the ray is inside `[0, L]^3`,
/// from per-axis solving of `0 <= o + t·d <= L`.
pub fn slab_length(ray: &Ray<f64>, box_len: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, ray.t_max);
    for a in 0..3 {
        let (o, d) = (ray.origin[a], ray.dir[a]);
        if d == 0.0 {
            if !(0.0..box_len).contains(&o) {
                return 0.0;
            }
        } else if d > 0.0 {
            lo = lo.max(-o / d);
            hi = hi.min((box_len - o) / d);
        } else {
            lo = lo.max((box_len - o) / d);
            hi = hi.min(-o / d);
        }
    }
    (hi - lo).max(0.0)
}

/// A camera looking at the box center from a random direction.
pub fn random_camera(r: &mut ChaCha8Rng, box_len: f64, nx: usize, ny: usize) -> amrvis::Camera<f64> {
    let view = random_unit(r);
    let mut up = random_unit(r);
    while up.cross(view).norm() < 0.2 {
        up = random_unit(r);
    }
    amrvis::Camera {
        center: Vec3::splat(0.5 * box_len),
        view,
        up,
        extent: 1.8 * box_len,
        depth: 2.0 * box_len,
        nx,
        ny,
    }
}

/// Minimal reader for the legacy ASCII subset the writer emits.
#[derive(Debug, PartialEq)]
pub struct ParsedVtk {
    pub points: Vec<[f64; 3]>,
    pub cells: Vec<Vec<usize>>,
    pub types: Vec<u8>,
    pub scalars: Vec<(String, Vec<f64>)>,
}

pub fn parse_vtk(text: &str) -> ParsedVtk {
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("# vtk DataFile Version 3.0"));
    lines.next().expect("title");
    assert_eq!(lines.next(), Some("ASCII"));
    assert_eq!(lines.next(), Some("DATASET UNSTRUCTURED_GRID"));
    let header = |l: Option<&str>, key: &str| -> Vec<String> {
        let words: Vec<String> = l.expect("section").split_whitespace().map(String::from).collect();
        assert_eq!(words[0], key);
        words
    };
    let np: usize = header(lines.next(), "POINTS")[1].parse().unwrap();
    let points = (0..np)
        .map(|_| {
            let v: Vec<f64> = lines.next().unwrap().split_whitespace().map(|w| w.parse().unwrap()).collect();
            [v[0], v[1], v[2]]
        })
        .collect();
    let h = header(lines.next(), "CELLS");
    let (nc, size): (usize, usize) = (h[1].parse().unwrap(), h[2].parse().unwrap());
    let mut total = 0;
    let cells: Vec<Vec<usize>> = (0..nc)
        .map(|_| {
            let v: Vec<usize> = lines.next().unwrap().split_whitespace().map(|w| w.parse().unwrap()).collect();
            assert_eq!(v[0], v.len() - 1);
            total += v.len();
            v[1..].to_vec()
        })
        .collect();
    assert_eq!(total, size);
    let nt: usize = header(lines.next(), "CELL_TYPES")[1].parse().unwrap();
    let types = (0..nt).map(|_| lines.next().unwrap().trim().parse().unwrap()).collect();
    let npd: usize = header(lines.next(), "POINT_DATA")[1].parse().unwrap();
    assert_eq!(npd, np);
    let mut scalars = Vec::new();
    while let Some(l) = lines.next() {
        let h: Vec<&str> = l.split_whitespace().collect();
        assert_eq!((h[0], h[2], h[3]), ("SCALARS", "double", "1"));
        assert_eq!(lines.next(), Some("LOOKUP_TABLE default"));
        let values = (0..np).map(|_| lines.next().unwrap().trim().parse().unwrap()).collect();
        scalars.push((h[1].to_owned(), values));
    }
    ParsedVtk { points, cells, types, scalars }
}
