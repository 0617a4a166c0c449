//! `polymesh`: normalize convex bodies, build polynomial meshes, and certify them.

mod io;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde::{Deserialize, Serialize};

use polymesh::dubiner::{doubling_ratio, DirectionSet, MetricContext};
use polymesh::geometry::{john_normalize, ConvexBody, NormalizedBody, DEFAULT_NORMALIZATION_TOL};
use polymesh::mesh::{build_dense_enough, build_mesh, mesh_cardinality_scan, nearest_neighbor_distances, Mesh, MeshMode, MeshSpec};
use polymesh::poly::{fast_decreasing_poly, FastDecreasingOptions, PolyExpr};
use polymesh::verify::{certify, NormingReport};
use polymesh::{linalg, Error};

const SEED_ENV: &str = "POLYMESH_SEED";

#[derive(Parser, Debug)]
#[command(name = "polymesh", version, about = "Polynomial meshes on convex bodies")]
struct Cli {
    /// Worker threads (default: all logical cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// error, warn, info, debug or trace.
    #[arg(long, global = true, default_value = "warn")]
    log_level: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Map a body so that B(0,1) ⊂ TΩ ⊂ B(0,d) and write the result.
    Normalize(NormalizeArgs),
    /// Refined metric distance between two points, with its maximizing direction.
    Metric(MetricArgs),
    /// Build a mesh for degree n.
    Mesh(MeshArgs),
    /// Build a fast-decreasing polynomial peaked at a point.
    Fastpoly(FastpolyArgs),
    /// Evaluate a polynomial file at the points of a CSV file.
    Polyeval(PolyevalArgs),
    /// Certify the norming inequality for a mesh.
    Verify(VerifyArgs),
    /// Monte-Carlo doubling ratio of a metric ball.
    Doubling(DoublingArgs),
    /// Mesh cardinalities over several degrees.
    Scan(ScanArgs),
    /// Export a mesh or a report as CSV for plotting.
    Export(ExportArgs),
    /// normalize → mesh → verify into one output directory.
    Run(RunArgs),
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
struct NormalizeOpts {
    /// Support points sampled for the enclosing ellipsoid of smooth bodies.
    #[arg(long, default_value_t = 256)]
    support_samples: usize,
    /// Relative slack allowed in B(0,1) ⊂ TΩ ⊂ B(0,d).
    #[arg(long, default_value_t = DEFAULT_NORMALIZATION_TOL)]
    tol: f64,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
struct NormalizeArgs {
    #[arg(long)]
    body: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    normalize: NormalizeOpts,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
struct MetricArgs {
    #[arg(long)]
    body: PathBuf,
    /// First point, comma separated, in the body's own coordinates.
    #[arg(long, allow_hyphen_values = true)]
    x: String,
    #[arg(long, allow_hyphen_values = true)]
    y: String,
    /// Number of base directions (default depends on the dimension).
    #[arg(long)]
    dirs: Option<usize>,
    #[arg(long)]
    rounds: Option<usize>,
    #[command(flatten)]
    normalize: NormalizeOpts,
}

#[derive(ValueEnum, Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum ModeArg {
    Maximal,
    Covering,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
struct MeshOpts {
    #[arg(long)]
    n: usize,
    /// Mesh constant: ε = c / n.
    #[arg(long)]
    c: Option<f64>,
    #[arg(long, value_enum, default_value = "maximal")]
    mode: ModeArg,
    /// Separation floor η / n for covering meshes.
    #[arg(long)]
    eta: Option<f64>,
    /// Candidate pool size; by default it grows until the pool is dense enough.
    #[arg(long)]
    pool: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
struct MeshArgs {
    #[arg(long)]
    body: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    mesh: MeshOpts,
    #[command(flatten)]
    normalize: NormalizeOpts,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
struct FastpolyArgs {
    #[arg(long)]
    body: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    x: String,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long = "L", default_value_t = 4.0)]
    l: f64,
    #[arg(long, default_value_t = 20_000)]
    pool: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Keep the product even when its degree exceeds n.
    #[arg(long)]
    allow_over_budget: bool,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    normalize: NormalizeOpts,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
struct PolyevalArgs {
    #[arg(long)]
    poly: PathBuf,
    /// One point per line, comma separated.
    #[arg(long)]
    points: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
struct VerifyOpts {
    #[arg(long, default_value_t = 200)]
    trials: usize,
    #[arg(long, default_value_t = 2.0)]
    target: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
struct VerifyArgs {
    #[arg(long)]
    body: PathBuf,
    #[arg(long)]
    mesh: PathBuf,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    verify: VerifyOpts,
    #[command(flatten)]
    normalize: NormalizeOpts,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
struct DoublingArgs {
    #[arg(long)]
    body: PathBuf,
    /// Center in the body's own coordinates.
    #[arg(long, allow_hyphen_values = true)]
    center: String,
    /// Ball radius in the metric of the normalized body.
    #[arg(long)]
    h: f64,
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    normalize: NormalizeOpts,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
struct ScanArgs {
    #[arg(long)]
    body: PathBuf,
    /// Strictly increasing degrees, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "4,8,16")]
    degrees: Vec<usize>,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    normalize: NormalizeOpts,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
struct ExportArgs {
    /// A mesh or report file.
    #[arg(long)]
    input: PathBuf,
    /// Body of a mesh, needed for nearest-neighbor distances.
    #[arg(long)]
    body: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    normalize: NormalizeOpts,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
struct RunArgs {
    #[arg(long)]
    body: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[command(flatten)]
    mesh: MeshOpts,
    #[arg(long, default_value_t = 200)]
    trials: usize,
    #[arg(long, default_value_t = 2.0)]
    target: f64,
    #[command(flatten)]
    normalize: NormalizeOpts,
}

/// Exit status of a failed run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stage {
    Parse = 1,
    Normalize = 2,
    Mesh = 3,
    VerifyFail = 4,
    Internal = 5,
}

struct Failure {
    stage: Stage,
    error: anyhow::Error,
}

type Outcome<T> = std::result::Result<T, Failure>;

trait StageExt<T> {
    fn stage(self, stage: Stage) -> Outcome<T>;
}

impl<T, E: Into<anyhow::Error>> StageExt<T> for std::result::Result<T, E> {
    fn stage(self, stage: Stage) -> Outcome<T> {
        self.map_err(|e| {
            let error: anyhow::Error = e.into();
            // Bad input is a parse failure whatever stage notices it.
            let stage = match error.downcast_ref::<Error>() {
                Some(
                    Error::InvalidInput(_)
                    | Error::OutsideBody { .. }
                    | Error::FingerprintMismatch { .. }
                    | Error::Separation { .. }
                    | Error::BudgetExceeded { .. },
                ) => Stage::Parse,
                _ => stage,
            };
            Failure { stage, error }
        })
    }
}

/// The `run` manifest, and the sidecar next to every single-command artifact.
#[derive(Serialize)]
struct Manifest<'a, C: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    config: &'a C,
    artifacts: Vec<String>,
}

fn write_manifest<C: Serialize>(path: &Path, command: &str, config: &C, artifacts: &[&Path]) -> Outcome<()> {
    let manifest = Manifest {
        tool: "polymesh",
        version: env!("CARGO_PKG_VERSION"),
        command,
        config,
        artifacts: artifacts.iter().map(|p| p.display().to_string()).collect(),
    };
    io::write_json(path, &manifest).stage(Stage::Internal)
}

fn sidecar(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|s| s.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

/// `POLYMESH_SEED`, when set, replaces every seed given on the command line.
fn resolve_seed(seed: u64) -> Outcome<u64> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse::<u64>()
            .with_context(|| format!("{SEED_ENV}={v:?} is not an unsigned 64-bit integer"))
            .stage(Stage::Parse),
        Err(_) => Ok(seed),
    }
}

fn load_body(path: &Path) -> Outcome<ConvexBody> {
    io::read_json(path).stage(Stage::Parse)
}

fn normalize(body: &ConvexBody, opts: &NormalizeOpts) -> Outcome<NormalizedBody> {
    let d = body.dim();
    let samples = opts.support_samples.max(2 * d * (d + 1));
    let nb = john_normalize(body, samples, opts.tol).stage(Stage::Normalize)?;
    info!("normalized: inner radius {:.6}, outer radius {:.6}", nb.inner_radius, nb.outer_radius);
    Ok(nb)
}

fn context(nb: NormalizedBody) -> Outcome<MetricContext> {
    MetricContext::with_defaults(nb).stage(Stage::Internal)
}

fn to_normalized(nb: &NormalizedBody, text: &str) -> Outcome<Vec<f64>> {
    let p = io::parse_point(text).stage(Stage::Parse)?;
    if p.len() != nb.dim() {
        return Err(anyhow!("point {text:?} has dimension {} but the body has {}", p.len(), nb.dim())).stage(Stage::Parse);
    }
    Ok(nb.to_normalized.apply(&p))
}

fn mesh_spec(dim: usize, opts: &MeshOpts, seed: u64) -> MeshSpec {
    let mut spec = MeshSpec::new(dim, opts.n);
    if let Some(c) = opts.c {
        spec.c_mesh = c;
        spec.eta = 0.5 * c;
        spec.pool_size = polymesh::mesh::default_pool_size(dim, opts.n, c);
    }
    if let Some(eta) = opts.eta {
        spec.eta = eta;
    }
    if let Some(pool) = opts.pool {
        spec.pool_size = pool;
    }
    spec.mode = match opts.mode {
        ModeArg::Maximal => MeshMode::MaximalSeparated,
        ModeArg::Covering => MeshMode::CoveringOnly,
    };
    spec.seed = seed;
    spec
}

fn make_mesh(ctx: &MetricContext, opts: &MeshOpts, seed: u64) -> Outcome<Mesh> {
    let mut spec = mesh_spec(ctx.dim(), opts, seed);
    let mesh = if opts.pool.is_some() { build_mesh(ctx, &spec) } else { build_dense_enough(ctx, &mut spec) }.stage(Stage::Mesh)?;
    info!(
        "mesh: {} points, separation {:.4e}, covering {:.4e}, epsilon {:.4e}",
        mesh.len(),
        mesh.certificates.separation,
        mesh.certificates.covering,
        mesh.spec.epsilon()
    );
    Ok(mesh)
}

/// A verification report as written to disk.
#[derive(Debug, Serialize, Deserialize)]
struct VerifyReport {
    target: f64,
    passed: bool,
    norming: NormingReport,
}

fn run_verify(ctx: &MetricContext, mesh: &Mesh, n: usize, opts: &VerifyOpts, seed: u64) -> Outcome<VerifyReport> {
    if mesh.to_normalized != ctx.body().to_normalized {
        return Err(Failure {
            stage: Stage::Parse,
            error: anyhow!("the mesh was built with a different normalization of this body"),
        });
    }
    let (passed, norming) = certify(ctx, mesh, opts.target, n, opts.trials, seed).stage(Stage::Internal)?;
    info!(
        "norming: ensemble max {:.4}, adversarial max {:.4}, target {}",
        norming.ensemble_max_ratio, norming.adversarial_max_ratio, opts.target
    );
    Ok(VerifyReport { target: opts.target, passed, norming })
}

fn cmd_normalize(args: &NormalizeArgs) -> Outcome<()> {
    let body = load_body(&args.body)?;
    let nb = normalize(&body, &args.normalize)?;
    io::write_json(&args.out, &nb).stage(Stage::Internal)?;
    write_manifest(&sidecar(&args.out), "normalize", args, &[&args.out])?;
    println!("inner_radius {}\nouter_radius {}", nb.inner_radius, nb.outer_radius);
    Ok(())
}

#[derive(Serialize)]
struct MetricOutput {
    rho: f64,
    /// Maximizing direction for the normalized body.
    direction: Vec<f64>,
    a: f64,
    b: f64,
}

fn cmd_metric(args: &MetricArgs) -> Outcome<()> {
    let body = load_body(&args.body)?;
    let nb = normalize(&body, &args.normalize)?;
    let x = to_normalized(&nb, &args.x)?;
    let y = to_normalized(&nb, &args.y)?;
    let d = nb.dim();
    let dirs = match (args.dirs, args.rounds) {
        (None, None) => DirectionSet::default_for(d),
        (count, rounds) => {
            let base = DirectionSet::default_for(d);
            DirectionSet::with_count(
                d,
                count.unwrap_or(base.directions().len()),
                rounds.unwrap_or(base.refinement_rounds()),
            )
            .stage(Stage::Parse)?
        }
    };
    let ctx = MetricContext::new(nb, dirs).stage(Stage::Internal)?;
    let w = ctx.witness(&x, &y, ctx.default_rounds()).stage(Stage::Internal)?;
    let out = MetricOutput { rho: w.value, direction: w.direction, a: w.a, b: w.b };
    println!("{}", serde_json::to_string(&out).map_err(|e| Failure { stage: Stage::Internal, error: e.into() })?);
    Ok(())
}

fn cmd_mesh(args: &MeshArgs) -> Outcome<()> {
    let seed = resolve_seed(args.mesh.seed)?;
    let body = load_body(&args.body)?;
    let ctx = context(normalize(&body, &args.normalize)?)?;
    let mesh = make_mesh(&ctx, &args.mesh, seed)?;
    io::write_json(&args.out, &mesh).stage(Stage::Internal)?;
    let mut config = args.clone();
    config.mesh.seed = seed;
    write_manifest(&sidecar(&args.out), "mesh", &config, &[&args.out])?;
    println!("{} points", mesh.len());
    Ok(())
}

fn cmd_fastpoly(args: &FastpolyArgs) -> Outcome<()> {
    let seed = resolve_seed(args.seed)?;
    let body = load_body(&args.body)?;
    let nb = normalize(&body, &args.normalize)?;
    let x = to_normalized(&nb, &args.x)?;
    let to_norm = nb.to_normalized.clone();
    let ctx = context(nb)?;
    let opts = FastDecreasingOptions {
        alpha: args.alpha,
        l: args.l,
        pool_size: args.pool,
        boundary_fraction: 0.7,
        seed,
        enforce_budget: !args.allow_over_budget,
    };
    let fd = fast_decreasing_poly(&ctx, &x, args.n, &opts).stage(Stage::Internal)?;
    info!("fast-decreasing: degree {}, centers per annulus {:?}", fd.poly.degree(), fd.centers_per_annulus);
    // Stored in the body's own coordinates.
    let poly = fd.poly.pull_back(&to_norm);
    io::write_json(&args.out, &poly).stage(Stage::Internal)?;
    let mut config = args.clone();
    config.seed = seed;
    write_manifest(&sidecar(&args.out), "fastpoly", &config, &[&args.out])?;
    println!("degree {}", poly.degree());
    Ok(())
}

fn cmd_polyeval(args: &PolyevalArgs) -> Outcome<()> {
    use std::io::Write;
    let poly: PolyExpr = io::read_json(&args.poly).stage(Stage::Parse)?;
    let points = io::read_points(&args.points).stage(Stage::Parse)?;
    let stdout = std::io::stdout();
    let mut out = std::io::BufWriter::new(stdout.lock());
    for p in &points {
        let v = poly.eval(p).stage(Stage::Parse)?;
        writeln!(out, "{v}").stage(Stage::Internal)?;
    }
    out.flush().stage(Stage::Internal)
}

fn cmd_verify(args: &VerifyArgs) -> Outcome<()> {
    let seed = resolve_seed(args.verify.seed)?;
    let body = load_body(&args.body)?;
    let mesh: Mesh = io::read_json(&args.mesh).stage(Stage::Parse)?;
    let ctx = context(normalize(&body, &args.normalize)?)?;
    let report = run_verify(&ctx, &mesh, args.n, &args.verify, seed)?;
    io::write_json(&args.out, &report).stage(Stage::Internal)?;
    let mut config = args.clone();
    config.verify.seed = seed;
    write_manifest(&sidecar(&args.out), "verify", &config, &[&args.out])?;
    println!(
        "ensemble_max_ratio {}\nadversarial_max_ratio {}\npassed {}",
        report.norming.ensemble_max_ratio, report.norming.adversarial_max_ratio, report.passed
    );
    if report.passed {
        Ok(())
    } else {
        Err(Failure { stage: Stage::VerifyFail, error: anyhow!("norming ratio exceeds the target {}", args.verify.target) })
    }
}

fn cmd_doubling(args: &DoublingArgs) -> Outcome<()> {
    let seed = resolve_seed(args.seed)?;
    let body = load_body(&args.body)?;
    let nb = normalize(&body, &args.normalize)?;
    let center = to_normalized(&nb, &args.center)?;
    let ctx = context(nb)?;
    let (ratio, stderr) = doubling_ratio(&ctx, &center, args.h, args.samples, seed).stage(Stage::Internal)?;
    println!("{ratio} ± {stderr}");
    Ok(())
}

fn cmd_scan(args: &ScanArgs) -> Outcome<()> {
    let seed = resolve_seed(args.seed)?;
    let body = load_body(&args.body)?;
    let ctx = context(normalize(&body, &args.normalize)?)?;
    let c = args.c.unwrap_or_else(|| polymesh::mesh::default_c_mesh(ctx.dim()));
    let rows = mesh_cardinality_scan(&ctx, &args.degrees, c, seed).stage(Stage::Mesh)?;
    println!("n\tN\tN/n^d\tpool");
    for r in &rows {
        println!("{}\t{}\t{:.4}\t{}", r.n, r.cardinality, r.normalized, r.pool_size);
    }
    if let Some(out) = &args.out {
        io::write_json(out, &rows).stage(Stage::Internal)?;
        let mut config = args.clone();
        config.seed = seed;
        write_manifest(&sidecar(out), "scan", &config, &[out])?;
    }
    Ok(())
}

fn cmd_export(args: &ExportArgs) -> Outcome<()> {
    let value: serde_json::Value = io::read_json(&args.input).stage(Stage::Parse)?;
    if value.get("norming").is_some() {
        let report: VerifyReport = serde_json::from_value(value).stage(Stage::Parse)?;
        let rows: Vec<Vec<f64>> = report
            .norming
            .trial_ratios
            .iter()
            .enumerate()
            .map(|(i, r)| vec![i as f64, *r])
            .collect();
        io::write_csv(&args.out, &["trial".into(), "ratio".into()], &rows).stage(Stage::Internal)?;
        println!("{} rows", rows.len());
        return Ok(());
    }
    if value.get("normalized_points").is_none() {
        return Err(anyhow!("{} is neither a mesh nor a report", args.input.display())).stage(Stage::Parse);
    }
    let mesh: Mesh = serde_json::from_value(value).stage(Stage::Parse)?;
    let body_path = args
        .body
        .as_ref()
        .ok_or_else(|| anyhow!("exporting a mesh needs --body"))
        .stage(Stage::Parse)?;
    let body = load_body(body_path)?;
    let ctx = context(normalize(&body, &args.normalize)?)?;
    if mesh.body_fingerprint != ctx.body().source_fingerprint {
        return Err(Error::FingerprintMismatch { mesh: mesh.body_fingerprint.clone(), body: ctx.body().source_fingerprint.clone() })
            .stage(Stage::Parse);
    }
    let rho_nn = nearest_neighbor_distances(&ctx, &mesh);
    let euclid_nn: Vec<f64> = (0..mesh.len())
        .map(|i| {
            (0..mesh.len())
                .filter(|&j| j != i)
                .map(|j| linalg::dist(&mesh.points[i], &mesh.points[j]))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    // Depth below the boundary of the normalized body, over the base directions.
    let depth: Vec<f64> = mesh
        .normalized_points
        .iter()
        .map(|z| {
            ctx.directions()
                .directions()
                .iter()
                .map(|xi| ctx.width_pair(xi).1 - linalg::dot(z, xi))
                .fold(f64::INFINITY, f64::min)
                .max(0.0)
        })
        .collect();
    let d = ctx.dim();
    let mut columns: Vec<String> = (1..=d).map(|i| format!("x{i}")).collect();
    columns.extend(["rho_nn".into(), "euclid_nn".into(), "depth".into()]);
    let rows: Vec<Vec<f64>> = (0..mesh.len())
        .map(|i| {
            let mut row = mesh.points[i].clone();
            row.extend([rho_nn[i], if euclid_nn[i].is_finite() { euclid_nn[i] } else { 0.0 }, depth[i]]);
            row
        })
        .collect();
    io::write_csv(&args.out, &columns, &rows).stage(Stage::Internal)?;
    println!("{} rows", rows.len());
    Ok(())
}

fn cmd_run(args: &RunArgs) -> Outcome<()> {
    let seed = resolve_seed(args.mesh.seed)?;
    let body = load_body(&args.body)?;
    let nb = normalize(&body, &args.normalize)?;
    let normalized_path = args.out_dir.join("normalized.json");
    let mesh_path = args.out_dir.join("mesh.json");
    let report_path = args.out_dir.join("report.json");
    io::write_json(&normalized_path, &nb).stage(Stage::Internal)?;
    let ctx = context(nb)?;
    let mesh = make_mesh(&ctx, &args.mesh, seed)?;
    io::write_json(&mesh_path, &mesh).stage(Stage::Internal)?;
    let opts = VerifyOpts { trials: args.trials, target: args.target, seed };
    let report = run_verify(&ctx, &mesh, args.mesh.n, &opts, seed)?;
    io::write_json(&report_path, &report).stage(Stage::Internal)?;
    let mut config = args.clone();
    config.mesh.seed = seed;
    write_manifest(
        &args.out_dir.join("manifest.json"),
        "run",
        &config,
        &[&normalized_path, &mesh_path, &report_path],
    )?;
    println!(
        "{} points\nensemble_max_ratio {}\nadversarial_max_ratio {}\npassed {}",
        mesh.len(),
        report.norming.ensemble_max_ratio,
        report.norming.adversarial_max_ratio,
        report.passed
    );
    if report.passed {
        Ok(())
    } else {
        Err(Failure { stage: Stage::VerifyFail, error: anyhow!("norming ratio exceeds the target {}", args.target) })
    }
}

fn dispatch(cli: &Cli) -> Outcome<()> {
    match &cli.command {
        Command::Normalize(a) => cmd_normalize(a),
        Command::Metric(a) => cmd_metric(a),
        Command::Mesh(a) => cmd_mesh(a),
        Command::Fastpoly(a) => cmd_fastpoly(a),
        Command::Polyeval(a) => cmd_polyeval(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Doubling(a) => cmd_doubling(a),
        Command::Scan(a) => cmd_scan(a),
        Command::Export(a) => cmd_export(a),
        Command::Run(a) => cmd_run(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(Stage::Parse as u8) } else { ExitCode::SUCCESS };
        }
    };
    env_logger::Builder::new().parse_filters(&cli.log_level).format_timestamp(None).init();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(Stage::Parse as u8);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(Stage::Internal as u8);
        }
    }
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.stage as u8)
        }
    }
}
