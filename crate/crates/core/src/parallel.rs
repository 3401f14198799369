//! Master-worker rendering with sort-last composition.
//!
//! A master thread owns the queue of work units and hands the next unit to
//! whichever worker reports in. Partial results are composed in ascending
//! unit id once all units are done, so the output does not depend on the
//! number of workers or on completion order.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use crossbeam_channel as channel;
use serde::{Deserialize, Serialize};

use crate::amr::AmrTree;
use crate::camera::Camera;
use crate::dataset::{read_domain, DatasetHeader};
use crate::error::{Error, Result};
use crate::map::{LevelMap, ScalarMap};
use crate::ray::{render_ray_rect, PixelRect, RayMode, RenderResult};
use crate::scalar::Real;
use crate::splat::{render_splat_capped, SplatOptions};
use crate::amr::NoProbe;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Square pixel tiles of at most `size × size`.
    Tile { size: usize },
    /// One unit per payload file.
    Domain,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum WorkKind {
    Tile(PixelRect),
    Domain(u32),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkUnit {
    pub id: usize,
    pub kind: WorkKind,
}

/// Output of one unit. Tile partials cover their rectangle; domain partials
/// cover the full frame.
#[derive(Clone, Debug, PartialEq)]
pub struct PartialResult<T> {
    pub unit: usize,
    pub map: ScalarMap<T>,
    pub levels: Option<LevelMap>,
}

/// Row-major tiles covering an `nx × ny` image exactly once.
pub fn plan_tiles(nx: usize, ny: usize, tile: usize) -> Result<Vec<WorkUnit>> {
    if tile == 0 {
        return Err(Error::arg("tile size must be at least 1"));
    }
    let mut units = Vec::new();
    for y0 in (0..ny).step_by(tile) {
        for x0 in (0..nx).step_by(tile) {
            let rect = PixelRect {
                x0,
                y0,
                w: tile.min(nx - x0),
                h: tile.min(ny - y0),
            };
            units.push(WorkUnit {
                id: units.len(),
                kind: WorkKind::Tile(rect),
            });
        }
    }
    Ok(units)
}

pub fn plan_domains(ndomains: u32) -> Vec<WorkUnit> {
    (0..ndomains)
        .map(|d| WorkUnit {
            id: d as usize,
            kind: WorkKind::Domain(d),
        })
        .collect()
}

pub fn plan_work(nx: usize, ny: usize, ndomains: u32, strategy: Strategy) -> Result<Vec<WorkUnit>> {
    match strategy {
        Strategy::Tile { size } => plan_tiles(nx, ny, size),
        Strategy::Domain => Ok(plan_domains(ndomains)),
    }
}

/// How full-frame partials combine.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Composition {
    Sum,
    /// Per-pixel max over partials that hit something; needs level maps.
    Max,
}

impl From<RayMode> for Composition {
    fn from(m: RayMode) -> Self {
        match m {
            RayMode::Sum => Composition::Sum,
            RayMode::Mip => Composition::Max,
        }
    }
}

/// Work executed by pool workers.
pub trait RenderJob<T>: Sync {
    fn frame(&self) -> (usize, usize);
    fn composition(&self) -> Composition;
    fn render(&self, unit: &WorkUnit) -> Result<PartialResult<T>>;
}

/// Composed frame; `levels` is present when the job produced level maps.
#[derive(Clone, Debug, PartialEq)]
pub struct Composite<T> {
    pub map: ScalarMap<T>,
    pub levels: Option<LevelMap>,
}

/// One dispatch as seen by the master.
#[derive(Clone, Debug)]
pub struct DispatchEvent {
    pub unit: usize,
    pub worker: usize,
    /// When the worker reported idle, relative to pool start.
    pub ready_at: Duration,
    /// When the master handed it the unit.
    pub sent_at: Duration,
}

#[derive(Clone, Debug, Default)]
pub struct PoolReport {
    pub dispatches: Vec<DispatchEvent>,
}

impl PoolReport {
    pub fn units_per_worker(&self, workers: usize) -> Vec<usize> {
        let mut n = vec![0; workers];
        for d in &self.dispatches {
            n[d.worker] += 1;
        }
        n
    }
}

pub fn run_pool<T: Real, J: RenderJob<T>>(units: &[WorkUnit], workers: usize, job: &J) -> Result<Composite<T>> {
    run_pool_instrumented(units, workers, job).map(|(c, _)| c)
}

enum FromWorker<T> {
    Ready { worker: usize, at: Instant },
    Done { worker: usize, at: Instant, slot: usize, result: Result<PartialResult<T>> },
}

pub fn run_pool_instrumented<T: Real, J: RenderJob<T>>(
    units: &[WorkUnit],
    workers: usize,
    job: &J,
) -> Result<(Composite<T>, PoolReport)> {
    if workers == 0 {
        return Err(Error::arg("worker count must be at least 1"));
    }
    let start = Instant::now();
    let mut slots: Vec<Option<PartialResult<T>>> = (0..units.len()).map(|_| None).collect();
    let mut report = PoolReport::default();
    let mut failure: Option<Error> = None;

    std::thread::scope(|s| {
        let (to_master, from_workers) = channel::unbounded::<FromWorker<T>>();
        let mut to_workers = Vec::with_capacity(workers);
        for w in 0..workers {
            let (tx, rx) = channel::bounded::<usize>(1);
            to_workers.push(Some(tx));
            let to_master = to_master.clone();
            s.spawn(move || {
                if to_master.send(FromWorker::Ready { worker: w, at: Instant::now() }).is_err() {
                    return;
                }
                // The master closes our channel when the queue is drained.
                for slot in rx.iter() {
                    let result = job.render(&units[slot]);
                    let msg = FromWorker::Done { worker: w, at: Instant::now(), slot, result };
                    if to_master.send(msg).is_err() {
                        return;
                    }
                }
            });
        }
        drop(to_master);

        let mut next = 0usize;
        let mut active = workers;
        while active > 0 {
            let msg = from_workers.recv().expect("workers alive while active > 0");
            let (worker, at) = match msg {
                FromWorker::Ready { worker, at } => (worker, at),
                FromWorker::Done { worker, at, slot, result } => {
                    match result {
                        Ok(p) => slots[slot] = Some(p),
                        Err(e) => {
                            if failure.is_none() {
                                failure = Some(Error::UnitFailed {
                                    unit: units[slot].id,
                                    source: Box::new(e),
                                });
                            }
                        }
                    }
                    (worker, at)
                }
            };
            if next < units.len() && failure.is_none() {
                let tx = to_workers[worker].as_ref().expect("idle worker has a channel");
                tx.send(next).expect("worker waiting for work");
                report.dispatches.push(DispatchEvent {
                    unit: units[next].id,
                    worker,
                    ready_at: at.saturating_duration_since(start),
                    sent_at: start.elapsed(),
                });
                next += 1;
            } else {
                to_workers[worker] = None;
                active -= 1;
            }
        }
    });

    if let Some(e) = failure {
        return Err(e);
    }
    let mut order: Vec<usize> = (0..units.len()).collect();
    order.sort_by_key(|&i| units[i].id);
    let partials = order.into_iter().map(|i| slots[i].take().expect("every unit completed"));
    let composite = compose(job.frame(), job.composition(), units, partials)?;
    Ok((composite, report))
}

fn compose<T: Real>(
    (nx, ny): (usize, usize),
    how: Composition,
    units: &[WorkUnit],
    partials: impl Iterator<Item = PartialResult<T>>,
) -> Result<Composite<T>> {
    let mut map = ScalarMap::zeros(nx, ny);
    let mut levels: Option<LevelMap> = None;
    for p in partials {
        let unit = units.iter().find(|u| u.id == p.unit).map(|u| &u.kind);
        match unit {
            Some(WorkKind::Tile(r)) => {
                map.blit(&p.map, r.x0, r.y0)?;
                if let Some(l) = &p.levels {
                    levels.get_or_insert_with(|| LevelMap::new(nx, ny)).blit(l, r.x0, r.y0);
                }
            }
            Some(WorkKind::Domain(_)) => match how {
                Composition::Sum => {
                    map.add_assign(&p.map)?;
                    if let Some(l) = &p.levels {
                        levels.get_or_insert_with(|| LevelMap::new(nx, ny)).min_assign(l)?;
                    }
                }
                Composition::Max => {
                    let pl = p
                        .levels
                        .as_ref()
                        .ok_or_else(|| Error::arg("max composition needs level maps"))?;
                    let acc_l = levels.get_or_insert_with(|| LevelMap::new(nx, ny));
                    map.check_shape(p.map.shape())?;
                    for i in 0..nx * ny {
                        if pl.data()[i] == LevelMap::MISS {
                            continue;
                        }
                        let v = p.map.data()[i];
                        if acc_l.data()[i] == LevelMap::MISS || v > map.data()[i] {
                            map.data_mut()[i] = v;
                        }
                    }
                    acc_l.min_assign(pl)?;
                }
            },
            None => return Err(Error::arg(format!("partial for unknown unit {}", p.unit))),
        }
    }
    Ok(Composite { map, levels })
}

/// Ray casting of image tiles over a shared in-memory tree.
pub struct RayTileJob<'a, T> {
    pub tree: &'a AmrTree<T>,
    pub camera: &'a Camera<T>,
    pub field: usize,
    pub mode: RayMode,
    pub level_cap: u8,
}

impl<'a, T: Real> RayTileJob<'a, T> {
    pub fn new(tree: &'a AmrTree<T>, camera: &'a Camera<T>, field: &str, mode: RayMode) -> Result<Self> {
        camera.validate()?;
        Ok(Self {
            tree,
            camera,
            field: tree.field_index(field)?,
            mode,
            level_cap: camera.effective_level_cap(tree.box_len(), tree.levelmin(), tree.levelmax()),
        })
    }
}

impl<T: Real> RenderJob<T> for RayTileJob<'_, T> {
    fn frame(&self) -> (usize, usize) {
        (self.camera.nx, self.camera.ny)
    }

    fn composition(&self) -> Composition {
        self.mode.into()
    }

    fn render(&self, unit: &WorkUnit) -> Result<PartialResult<T>> {
        let WorkKind::Tile(rect) = unit.kind else {
            return Err(Error::arg("tile job received a domain unit"));
        };
        let r = render_ray_rect(self.tree, self.camera, self.field, self.mode, self.level_cap, rect, &mut NoProbe);
        Ok(PartialResult {
            unit: unit.id,
            map: r.map,
            levels: Some(r.levels),
        })
    }
}

/// What a domain worker renders from its private tree.
#[derive(Clone, Debug, PartialEq)]
pub enum DomainRender {
    Ray(RayMode),
    Splat(SplatOptions),
}

/// Sort-last job: each unit loads one payload file (skipping records below
/// the level cap) and renders a full frame from that data alone.
pub struct DomainJob<'a, T> {
    pub base: PathBuf,
    pub header: &'a DatasetHeader,
    pub camera: &'a Camera<T>,
    pub field: usize,
    pub render: DomainRender,
    pub level_cap: u8,
}

impl<'a, T: Real> DomainJob<'a, T> {
    pub fn new(
        base: impl Into<PathBuf>,
        header: &'a DatasetHeader,
        camera: &'a Camera<T>,
        field: &str,
        render: DomainRender,
    ) -> Result<Self> {
        camera.validate()?;
        let field = header
            .fields
            .iter()
            .position(|f| f.name == field)
            .ok_or_else(|| Error::UnknownField(field.to_owned()))?;
        Ok(Self {
            base: base.into(),
            header,
            camera,
            field,
            level_cap: camera.effective_level_cap(T::of(header.box_len), header.levelmin, header.levelmax),
            render,
        })
    }
}

impl<T: Real> RenderJob<T> for DomainJob<'_, T> {
    fn frame(&self) -> (usize, usize) {
        (self.camera.nx, self.camera.ny)
    }

    fn composition(&self) -> Composition {
        match &self.render {
            DomainRender::Ray(m) => (*m).into(),
            DomainRender::Splat(_) => Composition::Sum,
        }
    }

    fn render(&self, unit: &WorkUnit) -> Result<PartialResult<T>> {
        let WorkKind::Domain(d) = unit.kind else {
            return Err(Error::arg("domain job received a tile unit"));
        };
        let tree = read_domain::<T>(&self.base, self.header, d, Some(self.level_cap))?;
        let (map, levels) = match &self.render {
            DomainRender::Ray(mode) => {
                let rect = PixelRect::full(self.camera.nx, self.camera.ny);
                let r = render_ray_rect(&tree, self.camera, self.field, *mode, self.level_cap, rect, &mut NoProbe);
                (r.map, Some(r.levels))
            }
            DomainRender::Splat(opts) => (render_splat_capped(&tree, self.camera, self.field, opts, self.level_cap)?, None),
        };
        Ok(PartialResult { unit: unit.id, map, levels })
    }
}

/// Tiled parallel ray cast of an in-memory tree.
pub fn render_ray_parallel<T: Real>(
    tree: &AmrTree<T>,
    cam: &Camera<T>,
    field: &str,
    mode: RayMode,
    workers: usize,
    tile: usize,
) -> Result<RenderResult<T>> {
    let job = RayTileJob::new(tree, cam, field, mode)?;
    let units = plan_tiles(cam.nx, cam.ny, tile)?;
    let c = run_pool(&units, workers, &job)?;
    Ok(RenderResult {
        map: c.map,
        levels: c.levels.expect("ray jobs produce level maps"),
        level_cap: job.level_cap,
    })
}

/// One row of the benchmark table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchRow {
    pub workers: usize,
    pub median_seconds: f64,
    pub speedup: f64,
}

/// Times `scene(workers)` `reps` times per worker count and reports medians
/// and speedups relative to one worker (measured even if not requested).
pub fn benchmark(
    mut scene: impl FnMut(usize) -> Result<()>,
    worker_counts: &[usize],
    reps: usize,
) -> Result<Vec<BenchRow>> {
    if worker_counts.contains(&0) {
        return Err(Error::arg("worker counts must be positive"));
    }
    let reps = reps.max(1);
    let mut time = |w: usize| -> Result<f64> {
        let mut samples = Vec::with_capacity(reps);
        for _ in 0..reps {
            let t = Instant::now();
            scene(w)?;
            samples.push(t.elapsed().as_secs_f64());
        }
        samples.sort_by(f64::total_cmp);
        Ok(samples[samples.len() / 2])
    };
    let mut medians: Vec<(usize, f64)> = Vec::new();
    let base = if worker_counts.contains(&1) {
        None
    } else {
        Some(time(1)?)
    };
    for &w in worker_counts {
        medians.push((w, time(w)?));
    }
    let base = base.unwrap_or_else(|| medians.iter().find(|(w, _)| *w == 1).unwrap().1);
    Ok(medians
        .into_iter()
        .map(|(workers, median_seconds)| BenchRow {
            workers,
            median_seconds,
            speedup: if workers == 1 { 1.0 } else { base / median_seconds.max(f64::MIN_POSITIVE) },
        })
        .collect())
}

/// CSV with header `workers,median_seconds,speedup`.
pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut s = String::from("workers,median_seconds,speedup\n");
    for r in rows {
        s.push_str(&format!("{},{:.6},{:.4}\n", r.workers, r.median_seconds, r.speedup));
    }
    s
}
