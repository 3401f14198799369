use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use amrvis::dataset::{base_path, read_dataset, read_header, write_dataset};
use amrvis::parallel::{bench_csv, benchmark, plan_domains, render_ray_parallel, run_pool, DomainJob, DomainRender};
use amrvis::postfx::Scale;
use amrvis::synth::{generate_synthetic, GeneratorParams};
use amrvis::ucd::{build_dual_mesh, write_vtk};
use amrvis::{Camera, RayMode, Vec3};
use amrvis_service::request::DEFAULT_PIXEL_BUDGET;
use amrvis_service::{execute, resolve_workers, ErrorKind, Mode, Output, RenderRequest, RequestError, Scene, ServiceState};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "amrvis", version, about = "Render, benchmark and export octree AMR datasets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic disk dataset
    Generate(GenerateArgs),
    /// Render one frame to PNG or FMAP
    Render(Box<RenderArgs>),
    /// Time parallel renders and print a CSV
    Bench(BenchArgs),
    /// Export the dual mesh as legacy VTK
    ExportUcd(ExportArgs),
    /// Run the HTTP frame service
    Serve(ServeArgs),
    /// Print a dataset summary
    Info(InfoArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Output base path (`.pamr` header plus `.dNNNNN` payloads)
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 8)]
    domains: u32,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    levelmin: Option<u8>,
    #[arg(long)]
    levelmax: Option<u8>,
    #[arg(long)]
    box_len: Option<f64>,
    #[arg(long)]
    r_d: Option<f64>,
    #[arg(long)]
    z_d: Option<f64>,
    #[arg(long)]
    rho0: Option<f64>,
    #[arg(long)]
    background: Option<f64>,
    #[arg(long)]
    m_ref: Option<f64>,
    #[arg(long)]
    clumps: Option<u32>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    RaySum,
    RayMip,
    Splat,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::RaySum => Mode::RaySum,
            ModeArg::RayMip => Mode::RayMip,
            ModeArg::Splat => Mode::Splat,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ScaleArg {
    Linear,
    Log10,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutputArg {
    Png,
    Fmap,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Output file
    #[arg(long)]
    out: PathBuf,
    /// Start from a JSON request; flags below override its entries
    #[arg(long)]
    request: Option<PathBuf>,
    #[arg(long, value_parser = parse_vec3)]
    center: Option<Vec3<f64>>,
    #[arg(long, value_parser = parse_vec3)]
    view: Option<Vec3<f64>>,
    #[arg(long, value_parser = parse_vec3)]
    up: Option<Vec3<f64>>,
    #[arg(long)]
    extent: Option<f64>,
    #[arg(long)]
    depth: Option<f64>,
    #[arg(long)]
    nx: Option<usize>,
    #[arg(long)]
    ny: Option<usize>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long)]
    field: Option<String>,
    #[arg(long)]
    blur: Option<f64>,
    #[arg(long, value_enum)]
    scale: Option<ScaleArg>,
    #[arg(long, allow_hyphen_values = true)]
    vmin: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    vmax: Option<f64>,
    /// Grayscale PNG instead of the colormap
    #[arg(long)]
    gray: bool,
    #[arg(long)]
    kernel_factor: Option<f64>,
    #[arg(long)]
    shift: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    output: Option<OutputArg>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_PIXEL_BUDGET)]
    pixel_budget: usize,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StrategyArg {
    /// Image tiles over a preloaded tree (compute only)
    Tile,
    /// One unit per payload file, read and rendered per run (end to end)
    Domain,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Comma-separated worker counts
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
    workers: Vec<usize>,
    #[arg(long, default_value_t = 3)]
    reps: usize,
    #[arg(long, value_enum, default_value = "tile")]
    strategy: StrategyArg,
    #[arg(long, value_enum, default_value = "ray-sum")]
    mode: ModeArg,
    #[arg(long)]
    field: Option<String>,
    #[arg(long, default_value_t = 256)]
    nx: usize,
    #[arg(long, default_value_t = 256)]
    ny: usize,
    /// Write the CSV here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Defaults to the dataset's levelmax
    #[arg(long)]
    level_cap: Option<u8>,
    /// Comma-separated field names; all fields by default
    #[arg(long, value_delimiter = ',')]
    fields: Vec<String>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// 0 picks a free port
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_PIXEL_BUDGET)]
    pixel_budget: usize,
}

#[derive(Args)]
struct InfoArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    json: bool,
}

fn parse_vec3(s: &str) -> Result<Vec3<f64>, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<Result<_, _>>()?;
    match v[..] {
        [x, y, z] => Ok(Vec3::new(x, y, z)),
        _ => Err("expected three comma-separated numbers".into()),
    }
}

/// Failure with its exit code: 1 for usage, 2 for data.
struct Failure {
    code: u8,
    message: String,
}

fn usage(message: impl Into<String>) -> Failure {
    Failure { code: 1, message: message.into() }
}

impl From<amrvis::Error> for Failure {
    fn from(e: amrvis::Error) -> Self {
        let code = if matches!(e, amrvis::Error::Argument(_)) { 1 } else { 2 };
        Failure { code, message: e.to_string() }
    }
}

impl From<RequestError> for Failure {
    fn from(e: RequestError) -> Self {
        let code = match e.kind {
            ErrorKind::BadRequest | ErrorKind::PixelBudget => 1,
            ErrorKind::UnknownField | ErrorKind::Internal => 2,
        };
        Failure { code, message: e.to_string() }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure { code: 2, message: format!("{}: {e}", path.display()) }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Render(a) => render(*a),
        Command::Bench(a) => bench(a),
        Command::ExportUcd(a) => export_ucd(a),
        Command::Serve(a) => serve(a),
        Command::Info(a) => info(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn generate(a: GenerateArgs) -> Result<(), Failure> {
    let mut p = GeneratorParams::default();
    macro_rules! set {
        ($($f:ident),*) => { $(if let Some(v) = a.$f { p.$f = v; })* };
    }
    set!(seed, levelmin, levelmax, box_len, r_d, z_d, rho0, background, m_ref, clumps);
    if a.domains == 0 {
        return Err(usage("--domains must be positive"));
    }
    let tree = generate_synthetic::<f64>(&p)?;
    let base = base_path(&a.out);
    let header = write_dataset(&tree, &base, a.domains)?;
    println!(
        "wrote {} ({} nodes, {} leaves, {} domains)",
        amrvis::dataset::header_path(&base).display(),
        header.node_count(),
        tree.leaf_count(),
        header.ndomains
    );
    Ok(())
}

fn build_request(a: &RenderArgs, scene: &Scene) -> Result<RenderRequest, Failure> {
    let mut req = match &a.request {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
            serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?
        }
        None => RenderRequest {
            camera: Camera::full_box(scene.header.box_len, 512, 512),
            mode: Mode::default(),
            field: None,
            blur: 0.0,
            tonemap: Default::default(),
            splat: Default::default(),
            output: Output::default(),
        },
    };
    let c = &mut req.camera;
    macro_rules! set {
        ($dst:expr, $src:expr) => {
            if let Some(v) = $src {
                $dst = v;
            }
        };
    }
    set!(c.center, a.center);
    set!(c.view, a.view);
    set!(c.up, a.up);
    set!(c.extent, a.extent);
    set!(c.depth, a.depth);
    set!(c.nx, a.nx);
    set!(c.ny, a.ny);
    set!(req.mode, a.mode.map(Mode::from));
    if let Some(f) = &a.field {
        req.field = Some(f.clone());
    }
    set!(req.blur, a.blur);
    set!(
        req.tonemap.scale,
        a.scale.map(|s| match s {
            ScaleArg::Linear => Scale::Linear,
            ScaleArg::Log10 => Scale::Log10,
        })
    );
    if a.vmin.is_some() {
        req.tonemap.vmin = a.vmin;
    }
    if a.vmax.is_some() {
        req.tonemap.vmax = a.vmax;
    }
    if a.gray {
        req.tonemap.colormap = false;
    }
    set!(req.splat.kernel_factor, a.kernel_factor);
    set!(req.splat.shift, a.shift);
    set!(req.splat.seed, a.seed);
    set!(
        req.output,
        a.output.map(|o| match o {
            OutputArg::Png => Output::Png,
            OutputArg::Fmap => Output::Fmap,
        })
    );
    Ok(req)
}

fn render(a: RenderArgs) -> Result<(), Failure> {
    let scene = Scene::load(&a.dataset)?;
    let req = build_request(&a, &scene)?;
    let out = execute(&scene, &req, resolve_workers(a.workers), a.pixel_budget)?;
    std::fs::write(&a.out, &out.bytes).map_err(|e| io_failure(&a.out, e))?;
    println!("wrote {} (level cap {}, {:.1} ms)", a.out.display(), out.level_cap, out.millis);
    Ok(())
}

fn bench(a: BenchArgs) -> Result<(), Failure> {
    if a.workers.is_empty() || a.workers.contains(&0) {
        return Err(usage("--workers needs positive counts"));
    }
    let base = base_path(&a.dataset);
    let header = read_header(&base)?;
    let field = a.field.clone().unwrap_or_else(|| header.fields[0].name.clone());
    let cam = Camera::full_box(header.box_len, a.nx, a.ny);
    let ray_mode = match a.mode {
        ModeArg::RaySum => Some(RayMode::Sum),
        ModeArg::RayMip => Some(RayMode::Mip),
        ModeArg::Splat => None,
    };
    let rows = match a.strategy {
        StrategyArg::Tile => {
            let mode = ray_mode.ok_or_else(|| usage("splat renders are benchmarked with --strategy domain"))?;
            let tree = read_dataset::<f64>(&base, None)?;
            benchmark(|w| render_ray_parallel(&tree, &cam, &field, mode, w, 32).map(|_| ()), &a.workers, a.reps)?
        }
        StrategyArg::Domain => {
            let render = match ray_mode {
                Some(m) => DomainRender::Ray(m),
                None => DomainRender::Splat(Default::default()),
            };
            let job = DomainJob::new(&base, &header, &cam, &field, render)?;
            let units = plan_domains(header.ndomains);
            benchmark(|w| run_pool(&units, w, &job).map(|_| ()), &a.workers, a.reps)?
        }
    };
    let csv = bench_csv(&rows);
    match &a.out {
        Some(path) => std::fs::write(path, csv).map_err(|e| io_failure(path, e))?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn export_ucd(a: ExportArgs) -> Result<(), Failure> {
    let base = base_path(&a.dataset);
    let header = read_header(&base)?;
    let cap = a.level_cap.unwrap_or(header.levelmax);
    let tree = read_dataset::<f64>(&base, Some(cap))?;
    let mut mesh = build_dual_mesh(&tree, cap);
    if !a.fields.is_empty() {
        let names: Vec<&str> = a.fields.iter().map(String::as_str).collect();
        mesh = mesh.select_fields(&names)?;
    }
    write_vtk(&mesh, &a.out)?;
    println!("wrote {} ({} points, {} hexahedra)", a.out.display(), mesh.points.len(), mesh.hexahedra.len());
    Ok(())
}

fn serve(a: ServeArgs) -> Result<(), Failure> {
    let addr: SocketAddr = format!("{}:{}", a.host, a.port)
        .parse()
        .map_err(|e| usage(format!("bad address {}:{}: {e}", a.host, a.port)))?;
    let scene = Scene::load(&a.dataset)?;
    let state = Arc::new(ServiceState { scene, workers: resolve_workers(a.workers), pixel_budget: a.pixel_budget });
    let rt = tokio::runtime::Runtime::new().map_err(|e| Failure { code: 2, message: e.to_string() })?;
    rt.block_on(amrvis_service::serve(state, addr, |bound| {
        println!("listening on http://{bound}");
        let _ = std::io::stdout().flush();
    }))
    .map_err(|e| Failure { code: 2, message: format!("serve: {e}") })
}

fn info(a: InfoArgs) -> Result<(), Failure> {
    let scene = Scene::load(&a.dataset)?;
    let info = scene.info();
    if a.json {
        println!("{}", serde_json::to_string_pretty(&info).expect("serializable"));
        return Ok(());
    }
    let h = &info.header;
    println!("version    {}", h.version);
    println!("box_len    {}", h.box_len);
    println!("levelmin   {}", h.levelmin);
    println!("levelmax   {}", h.levelmax);
    println!("fields     {}", info.field_names.join(", "));
    println!("ndomains   {}", h.ndomains);
    println!("nodes      {}", info.node_count);
    println!("leaves     {}", info.leaf_count);
    Ok(())
}
