mod common;

use std::time::Duration;

use amrvis::dataset::write_dataset;
use amrvis::map::ScalarMap;
use amrvis::parallel::*;
use amrvis::ray::{render_ray, PixelRect, RayMode};
use amrvis::splat::{render_splat, SplatOptions};
use amrvis::Error;
use common::*;
use rand::Rng;

#[test]
fn tiles_cover_every_pixel_once() {
    for (nx, ny, t) in [(64, 64, 32), (65, 64, 32), (7, 3, 2), (1, 1, 16), (100, 37, 9)] {
        let units = plan_tiles(nx, ny, t).unwrap();
        let mut hits = vec![0u8; nx * ny];
        for (i, u) in units.iter().enumerate() {
            assert_eq!(u.id, i);
            let WorkKind::Tile(r) = u.kind else { panic!("not a tile") };
            assert!(r.w >= 1 && r.h >= 1 && r.w <= t && r.h <= t);
            for y in r.y0..r.y0 + r.h {
                for x in r.x0..r.x0 + r.w {
                    hits[y * nx + x] += 1;
                }
            }
        }
        assert!(hits.iter().all(|&h| h == 1), "{nx}x{ny}/{t}");
        assert_eq!(units.len(), nx.div_ceil(t) * ny.div_ceil(t));
    }
}

#[test]
fn tile_renders_are_bit_identical_to_serial() {
    let tree = random_tree(12, 1, 5, 0.5);
    let cam = random_camera(&mut rng(3), 1.0, 50, 34);
    for mode in [RayMode::Sum, RayMode::Mip] {
        let serial = render_ray(&tree, &cam, "rho", mode).unwrap();
        for workers in [1, 2, 4, 8] {
            for tile in [7, 16, 64] {
                let par = render_ray_parallel(&tree, &cam, "rho", mode, workers, tile).unwrap();
                assert_eq!(par, serial, "{mode:?} workers {workers} tile {tile}");
            }
        }
    }
}

fn domain_scene(nd: u32) -> (tempfile::TempDir, std::path::PathBuf, amrvis::AmrTree<f64>) {
    let tree = random_tree(31, 1, 5, 0.5);
    let dir = tempfile::tempdir().unwrap();
    let base = dir.path().join("scene");
    write_dataset(&tree, &base, nd).unwrap();
    (dir, base, tree)
}

#[test]
fn domain_sum_matches_whole_tree_render() {
    let (_d, base, tree) = domain_scene(4);
    let header = amrvis::dataset::read_header(&base).unwrap();
    let cam = random_camera(&mut rng(9), 1.0, 40, 40);
    let whole = render_ray(&tree, &cam, "rho", RayMode::Sum).unwrap();
    let job = DomainJob::new(&base, &header, &cam, "rho", DomainRender::Ray(RayMode::Sum)).unwrap();
    let serial = run_pool(&plan_domains(4), 1, &job).unwrap();
    for (a, b) in whole.map.data().iter().zip(serial.map.data()) {
        assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "{a} vs {b}");
    }
    assert_eq!(serial.levels.as_ref().unwrap(), &whole.levels);
    for workers in [2, 4, 8] {
        assert_eq!(run_pool(&plan_domains(4), workers, &job).unwrap(), serial);
    }
}

#[test]
fn domain_mip_equals_whole_tree_render() {
    let (_d, base, tree) = domain_scene(5);
    let header = amrvis::dataset::read_header(&base).unwrap();
    let cam = random_camera(&mut rng(10), 1.0, 32, 32);
    let whole = render_ray(&tree, &cam, "rho", RayMode::Mip).unwrap();
    let job = DomainJob::new(&base, &header, &cam, "rho", DomainRender::Ray(RayMode::Mip)).unwrap();
    for workers in [1, 2, 4, 8] {
        let c = run_pool(&plan_domains(5), workers, &job).unwrap();
        assert_eq!(c.map, whole.map);
        assert_eq!(c.levels.unwrap(), whole.levels);
    }
}

#[test]
fn domain_splat_matches_whole_tree_splat() {
    let (_d, base, tree) = domain_scene(3);
    let header = amrvis::dataset::read_header(&base).unwrap();
    let cam = random_camera(&mut rng(11), 1.0, 32, 32);
    let opts = SplatOptions { shift: 0.2, seed: 5, ..Default::default() };
    let whole = render_splat(&tree, &cam, "rho", &opts).unwrap();
    let job = DomainJob::new(&base, &header, &cam, "rho", DomainRender::Splat(opts)).unwrap();
    let serial = run_pool(&plan_domains(3), 1, &job).unwrap();
    let scale = whole.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(max_abs_diff(&serial.map, &whole) <= 1e-12 * scale);
    for workers in [2, 4, 8] {
        assert_eq!(run_pool(&plan_domains(3), workers, &job).unwrap(), serial);
    }
}

/// Fake job: unit `i` fills its tile with `i` after a pseudo-random delay.
struct Sleepy {
    nx: usize,
    ny: usize,
    delays: Vec<u64>,
}

impl RenderJob<f64> for Sleepy {
    fn frame(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }
    fn composition(&self) -> Composition {
        Composition::Sum
    }
    fn render(&self, unit: &WorkUnit) -> amrvis::Result<PartialResult<f64>> {
        std::thread::sleep(Duration::from_micros(self.delays[unit.id]));
        let WorkKind::Tile(r) = unit.kind else { unreachable!() };
        Ok(PartialResult {
            unit: unit.id,
            map: ScalarMap::filled(r.w, r.h, unit.id as f64 + 0.5),
            levels: None,
        })
    }
}

#[test]
fn composition_ignores_completion_order() {
    let units = plan_tiles(40, 30, 5).unwrap();
    let mut r = rng(2);
    let job = Sleepy { nx: 40, ny: 30, delays: (0..units.len()).map(|_| r.random_range(0..3000)).collect() };
    let serial = run_pool(&units, 1, &job).unwrap();
    for workers in [2, 3, 8] {
        let (c, report) = run_pool_instrumented(&units, workers, &job).unwrap();
        assert_eq!(c, serial);
        assert_eq!(report.dispatches.len(), units.len());
        assert_eq!(report.units_per_worker(workers).iter().sum::<usize>(), units.len());
    }
}

#[test]
fn idle_workers_are_served_within_one_round_trip() {
    let units = plan_tiles(64, 64, 16).unwrap();
    let job = Sleepy { nx: 64, ny: 64, delays: vec![20_000; units.len()] };
    let (_, report) = run_pool_instrumented(&units, 4, &job).unwrap();
    for d in &report.dispatches {
        let wait = d.sent_at.saturating_sub(d.ready_at);
        // One unit takes 20 ms; a dispatch must come back well before that.
        assert!(wait < Duration::from_millis(15), "unit {} waited {wait:?}", d.unit);
    }
    // Units go out in queue order.
    let order: Vec<usize> = report.dispatches.iter().map(|d| d.unit).collect();
    assert_eq!(order, (0..units.len()).collect::<Vec<_>>());
}

struct FailsOn(usize);

impl RenderJob<f64> for FailsOn {
    fn frame(&self) -> (usize, usize) {
        (4, 4)
    }
    fn composition(&self) -> Composition {
        Composition::Sum
    }
    fn render(&self, unit: &WorkUnit) -> amrvis::Result<PartialResult<f64>> {
        if unit.id == self.0 {
            return Err(Error::Structural("boom".into()));
        }
        let WorkKind::Tile(r) = unit.kind else { unreachable!() };
        Ok(PartialResult { unit: unit.id, map: ScalarMap::zeros(r.w, r.h), levels: None })
    }
}

#[test]
fn a_failing_unit_fails_the_frame() {
    let units = plan_tiles(4, 4, 2).unwrap();
    for workers in [1, 3] {
        match run_pool(&units, workers, &FailsOn(2)) {
            Err(Error::UnitFailed { unit: 2, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }
    assert!(run_pool(&units, 0, &FailsOn(9)).is_err());
}

#[test]
fn benchmark_rows_are_well_formed() {
    let tree = random_tree(1, 2, 4, 0.5);
    let cam = amrvis::Camera::full_box(1.0, 32, 32);
    let rows = benchmark(|w| render_ray_parallel(&tree, &cam, "rho", RayMode::Sum, w, 8).map(|_| ()), &[1, 2, 4], 3).unwrap();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0].speedup, 1.0);
    assert!(rows.iter().all(|r| r.speedup.is_finite() && r.speedup > 0.0 && r.median_seconds > 0.0));
    let csv = bench_csv(&rows);
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("workers,median_seconds,speedup"));
    assert_eq!(lines.count(), 3);
    let single = benchmark(|_| Ok(()), &[1], 1).unwrap();
    assert_eq!(single[0].speedup, 1.0);
    assert!(benchmark(|_| Ok(()), &[0], 1).is_err());
}

#[test]
fn work_units_roundtrip_through_json() {
    let units = plan_work(10, 10, 3, Strategy::Tile { size: 4 }).unwrap();
    let json = serde_json::to_string(&units).unwrap();
    assert_eq!(serde_json::from_str::<Vec<WorkUnit>>(&json).unwrap(), units);
    let rect = PixelRect { x0: 1, y0: 2, w: 3, h: 4 };
    assert_eq!(rect.area(), 12);
}
