mod common;

use amrvis::amr::{AmrTree, CellCoord, FieldDesc};
use amrvis::synth::{GeneratorParams, SyntheticDisk};
use amrvis::Vec3;
use common::*;
use proptest::prelude::*;
use rand::Rng;

#[test]
fn point_query_matches_linear_scan() {
    let tree = random_tree(7, 1, 5, 0.45);
    assert!(tree.depth() >= 4, "tree too shallow: {}", tree.depth());
    let mut r = rng(11);
    for cap in [5u8, 3] {
        for _ in 0..200 {
            let p = Vec3::new(r.random::<f64>(), r.random::<f64>(), r.random::<f64>());
            let got = tree.point_query(p, cap).unwrap().coord();
            assert_eq!(Some(got), brute_force_query(&tree, p, cap), "p = {p:?}");
        }
    }
}

#[test]
fn point_query_on_faces_and_far_corner() {
    let tree = random_tree(3, 2, 4, 0.5);
    let l = tree.box_len();
    for p in [
        Vec3::new(0.5, 0.5, 0.5),
        Vec3::new(0.25, 0.75, 0.0),
        Vec3::new(l, l, l),
        Vec3::new(l, 0.0, 0.125),
    ] {
        assert_eq!(Some(tree.point_query(p, 4).unwrap().coord()), brute_force_query(&tree, p, 4));
    }
    assert!(tree.point_query(Vec3::new(-1e-12, 0.5, 0.5), 4).is_err());
    assert!(tree.point_query(Vec3::new(0.5, l * (1.0 + 1e-12), 0.5), 4).is_err());
}

#[test]
fn capped_cells_match_recursive_enumeration() {
    let tree = random_tree(21, 1, 6, 0.4);
    for cap in 0..=6 {
        let mut expected = Vec::new();
        enumerate_capped(tree.root(), cap, &mut expected);
        let got: Vec<_> = tree.cells_at_cap(cap).collect();
        assert_eq!(got.len(), expected.len(), "cap {cap}");
        let mut a: Vec<CellCoord> = got.iter().map(|n| n.coord()).collect();
        let mut b: Vec<CellCoord> = expected.iter().map(|n| n.coord()).collect();
        a.sort();
        b.sort();
        assert_eq!(a, b);
        let volume: f64 = got.iter().map(|n| n.cell_size().powi(3)).sum();
        assert!((volume - 1.0).abs() <= 1e-9, "cap {cap}: volume {volume}");
    }
}

#[test]
fn centers_query_back_to_their_cell() {
    let tree = random_tree(5, 2, 5, 0.5);
    for cap in [2u8, 4, 5] {
        for c in tree.cells_at_cap(cap) {
            assert_eq!(tree.point_query(c.center(), cap).unwrap().coord(), c.coord());
        }
    }
}

#[test]
fn conservative_fields_are_child_means() {
    let tree = random_tree(9, 1, 5, 0.5);
    for i in 0..tree.node_count() {
        let n = tree.node(i);
        let Some(children) = n.children() else { continue };
        let mean = children.map(|c| c.value(0)).sum::<f64>() / 8.0;
        assert!((n.value(0) - mean).abs() <= 1e-12 * mean.abs(), "node {:?}", n.coord());
        assert_eq!(n.value(1), 1.0);
    }
}

#[test]
fn structural_invariants_of_random_trees() {
    let tree = random_tree(13, 2, 6, 0.35);
    let mut seen = std::collections::HashSet::new();
    for i in 0..tree.node_count() {
        let n = tree.node(i);
        assert!(seen.insert(n.coord()), "duplicate {:?}", n.coord());
        if n.is_leaf() {
            assert!((tree.levelmin()..=tree.levelmax()).contains(&n.level()));
        } else {
            let kids: Vec<_> = n.children().unwrap().collect();
            assert_eq!(kids.len(), 8);
            for (o, k) in kids.iter().enumerate() {
                assert_eq!(k.coord(), n.coord().child(o));
                assert_eq!(k.coord().parent(), Some(n.coord()));
            }
        }
    }
}

#[test]
fn child_centers_offset_by_quarter_cell() {
    let c = CellCoord::new(3, 2, 5, 7).unwrap();
    let pc = c.center(2.0f64);
    let q = 2.0 / 2f64.powi(5);
    for o in 0..8 {
        let d = c.child(o).center(2.0f64) - pc;
        for a in 0..3 {
            assert!((d[a].abs() - q).abs() < 1e-15);
        }
    }
}

/// Independent re-statement of the disk refinement recursion.
fn disk_leaf_oracle(p: &GeneratorParams) -> u64 {
    fn rho(p: &GeneratorParams, x: [f64; 3]) -> f64 {
        let c = 0.5 * p.box_len;
        let (dx, dy, dz) = (x[0] - c, x[1] - c, x[2] - c);
        let r = (dx * dx + dy * dy).sqrt();
        p.rho0 * (-r / (p.r_d * p.box_len)).exp() * (-dz.abs() / (p.z_d * p.box_len)).exp() + p.background
    }
    fn walk(p: &GeneratorParams, level: u8, i: [u64; 3]) -> u64 {
        let size = p.box_len / (1u64 << level) as f64;
        let center = [0, 1, 2].map(|a| (i[a] as f64 + 0.5) * size);
        let split = level < p.levelmin || (level < p.levelmax && rho(p, center) * size * size * size > p.m_ref);
        if !split {
            return 1;
        }
        let mut n = 0;
        for k in 0..8u64 {
            n += walk(p, level + 1, [2 * i[0] + (k & 1), 2 * i[1] + ((k >> 1) & 1), 2 * i[2] + (k >> 2)]);
        }
        n
    }
    walk(p, 0, [0, 0, 0])
}

#[test]
fn generator_leaf_count_matches_independent_recursion() {
    let p = GeneratorParams::default();
    let tree = SyntheticDisk::new(p.clone()).unwrap().build::<f64>().unwrap();
    assert_eq!(tree.leaf_count() as u64, disk_leaf_oracle(&p));
    assert!(tree.leaf_count() >= 50_000, "{}", tree.leaf_count());
}

#[test]
fn generator_monotone_in_mass_threshold() {
    let mut last = 0;
    for m_ref in [1e-2, 1e-3, 2e-4, 5e-5, 2e-5, 1e-5] {
        let p = GeneratorParams { levelmax: 5, m_ref, ..Default::default() };
        let n = SyntheticDisk::new(p.clone()).unwrap().build::<f64>().unwrap().leaf_count();
        assert!(n >= last, "m_ref {m_ref}: {n} < {last}");
        assert_eq!(n as u64, disk_leaf_oracle(&p));
        last = n;
    }
}

#[test]
fn generator_density_matches_tree_leaves() {
    let d = SyntheticDisk::new(GeneratorParams { levelmax: 4, ..Default::default() }).unwrap();
    let tree = d.build::<f64>().unwrap();
    for n in tree.cells_at_cap(tree.levelmax()).filter(|n| n.is_leaf()) {
        assert_eq!(n.value(0), d.density(n.center().to_array()));
    }
}

#[test]
fn single_precision_tree_agrees_with_double() {
    let d = SyntheticDisk::new(GeneratorParams { levelmax: 4, ..Default::default() }).unwrap();
    let t64 = d.build::<f64>().unwrap();
    let t32 = d.build::<f32>().unwrap();
    assert_eq!(t64.node_count(), t32.node_count());
    for i in 0..t64.node_count() {
        let (a, b) = (t64.node(i), t32.node(i));
        assert_eq!(a.coord(), b.coord());
        assert!((a.value(0) - b.value(0) as f64).abs() <= 1e-5 * a.value(0));
    }
}

fn tree_strategy() -> impl Strategy<Value = AmrTree<f64>> {
    (any::<u64>(), 0u8..3, 0u8..4, 0.0f64..0.7).prop_map(|(seed, lmin, extra, p)| random_tree(seed, lmin, lmin + extra, p))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn tiling_holds_at_every_cap(tree in tree_strategy(), cap in 0u8..7) {
        let volume: f64 = tree.cells_at_cap(cap).map(|n| n.cell_size().powi(3)).sum();
        prop_assert!((volume - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn truncation_equals_capped_enumeration(tree in tree_strategy(), cap in 0u8..7) {
        let t = tree.truncated(cap);
        let a: Vec<_> = tree.cells_at_cap(cap).map(|n| (n.coord(), n.value(0).to_bits())).collect();
        let b: Vec<_> = t.cells_at_cap(cap).map(|n| (n.coord(), n.value(0).to_bits())).collect();
        prop_assert_eq!(a, b);
        prop_assert!(t.depth() <= cap);
    }
}

#[test]
fn build_rejects_bad_headers() {
    let f = || vec![FieldDesc::new("a", true)];
    assert!(AmrTree::<f64>::build(0.0, 0, 1, f(), |_| false, |_, _| {}).is_err());
    assert!(AmrTree::<f64>::build(1.0, 3, 2, f(), |_| false, |_, _| {}).is_err());
    assert!(AmrTree::<f64>::build(1.0, 0, 31, f(), |_| false, |_, _| {}).is_err());
    let dup = vec![FieldDesc::new("a", true), FieldDesc::new("a", false)];
    assert!(AmrTree::<f64>::build(1.0, 0, 1, dup, |_| false, |_, _| {}).is_err());
}
