//! Render requests and their execution, shared by the CLI and the service.

use std::path::{Path, PathBuf};
use std::time::Instant;

use amrvis::dataset::{read_dataset, read_header, DatasetHeader};
use amrvis::parallel::{plan_domains, render_ray_parallel, run_pool, DomainJob, DomainRender};
use amrvis::postfx::{adaptive_blur, tonemap, BlurOptions, Scale};
use amrvis::splat::SplatOptions;
use amrvis::{AmrTree, Camera, RayMode};
use serde::{Deserialize, Serialize};

/// Default cap on `nx * ny`.
pub const DEFAULT_PIXEL_BUDGET: usize = 4096 * 4096;

const TILE: usize = 64;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    RaySum,
    RayMip,
    Splat,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Output {
    #[default]
    Png,
    Fmap,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tonemap {
    pub scale: Scale,
    pub vmin: Option<f64>,
    pub vmax: Option<f64>,
    /// Apply the built-in colormap (RGB PNG) instead of grayscale.
    pub colormap: bool,
}

impl Default for Tonemap {
    fn default() -> Self {
        Self { scale: Scale::Log10, vmin: None, vmax: None, colormap: true }
    }
}

/// One frame request. Everything but the camera has a default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenderRequest {
    pub camera: Camera<f64>,
    #[serde(default)]
    pub mode: Mode,
    /// Defaults to the dataset's first field.
    #[serde(default)]
    pub field: Option<String>,
    /// Adaptive blur strength for ray modes; 0 disables it.
    #[serde(default)]
    pub blur: f64,
    #[serde(default)]
    pub tonemap: Tonemap,
    #[serde(default)]
    pub splat: SplatOptions,
    #[serde(default)]
    pub output: Output,
}

/// Failure classes with a stable machine-readable code.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorKind {
    BadRequest,
    UnknownField,
    PixelBudget,
    Internal,
}

impl ErrorKind {
    pub fn code(self) -> &'static str {
        match self {
            ErrorKind::BadRequest => "bad_request",
            ErrorKind::UnknownField => "unknown_field",
            ErrorKind::PixelBudget => "pixel_budget_exceeded",
            ErrorKind::Internal => "internal",
        }
    }
}

#[derive(Debug)]
pub struct RequestError {
    pub kind: ErrorKind,
    pub message: String,
}

impl RequestError {
    pub fn new(kind: ErrorKind, message: impl Into<String>) -> Self {
        Self { kind, message: message.into() }
    }
}

impl std::fmt::Display for RequestError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.kind.code(), self.message)
    }
}

impl std::error::Error for RequestError {}

impl From<amrvis::Error> for RequestError {
    fn from(e: amrvis::Error) -> Self {
        use amrvis::Error as E;
        let kind = match &e {
            E::UnknownField(_) => ErrorKind::UnknownField,
            E::Argument(_) | E::OutsideBox { .. } | E::ShapeMismatch { .. } => ErrorKind::BadRequest,
            _ => ErrorKind::Internal,
        };
        Self::new(kind, e.to_string())
    }
}

/// A loaded dataset: header, in-memory tree and the files it came from.
pub struct Scene {
    pub base: PathBuf,
    pub header: DatasetHeader,
    pub tree: AmrTree<f64>,
}

impl Scene {
    pub fn load(base: impl AsRef<Path>) -> amrvis::Result<Self> {
        let base = amrvis::dataset::base_path(base);
        let header = read_header(&base)?;
        let tree = read_dataset(&base, None)?;
        Ok(Self { base, header, tree })
    }

    pub fn info(&self) -> Info {
        Info {
            header: self.header.clone(),
            node_count: self.header.node_count(),
            leaf_count: self.tree.leaf_count() as u64,
            field_names: self.header.fields.iter().map(|f| f.name.clone()).collect(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Info {
    #[serde(flatten)]
    pub header: DatasetHeader,
    pub node_count: u64,
    pub leaf_count: u64,
    pub field_names: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct Rendered {
    pub bytes: Vec<u8>,
    pub content_type: &'static str,
    pub level_cap: u8,
    pub millis: f64,
}

/// Worker count: `AMR_RENDER_WORKERS` if set and valid, else `fallback`,
/// else the number of hardware threads.
pub fn resolve_workers(fallback: Option<usize>) -> usize {
    std::env::var("AMR_RENDER_WORKERS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .or(fallback.filter(|&n| n > 0))
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

pub fn execute(scene: &Scene, req: &RenderRequest, workers: usize, pixel_budget: usize) -> Result<Rendered, RequestError> {
    let start = Instant::now();
    let cam = &req.camera.clone().normalized()?;
    if cam.nx.saturating_mul(cam.ny) > pixel_budget {
        return Err(RequestError::new(
            ErrorKind::PixelBudget,
            format!("{}x{} exceeds the budget of {pixel_budget} pixels", cam.nx, cam.ny),
        ));
    }
    if !(req.blur >= 0.0 && req.blur.is_finite()) {
        return Err(RequestError::new(ErrorKind::BadRequest, "blur must be finite and non-negative"));
    }
    let field = match &req.field {
        Some(f) => f.as_str(),
        None => scene
            .header
            .fields
            .first()
            .map(|f| f.name.as_str())
            .ok_or_else(|| RequestError::new(ErrorKind::Internal, "dataset has no fields"))?,
    };
    let (map, level_cap) = match req.mode {
        Mode::RaySum | Mode::RayMip => {
            let mode = if req.mode == Mode::RaySum { RayMode::Sum } else { RayMode::Mip };
            let r = render_ray_parallel(&scene.tree, cam, field, mode, workers, TILE)?;
            let map = if req.blur > 0.0 {
                let opts = BlurOptions { strength: req.blur, ..Default::default() };
                adaptive_blur(&r.map, &r.levels, cam, scene.header.box_len, &opts)?
            } else {
                r.map
            };
            (map, r.level_cap)
        }
        Mode::Splat => {
            req.splat.validate()?;
            let job = DomainJob::new(&scene.base, &scene.header, cam, field, DomainRender::Splat(req.splat.clone()))?;
            let c = run_pool(&plan_domains(scene.header.ndomains), workers, &job)?;
            (c.map, job.level_cap)
        }
    };
    let (bytes, content_type) = match req.output {
        Output::Fmap => (map.to_fmap_bytes(), "application/octet-stream"),
        Output::Png => {
            let t = &req.tonemap;
            let gray = tonemap(&map, t.scale, t.vmin, t.vmax)?;
            let img = if t.colormap { gray.colorize() } else { gray };
            (img.to_png(), "image/png")
        }
    };
    Ok(Rendered { bytes, content_type, level_cap, millis: start.elapsed().as_secs_f64() * 1e3 })
}
