//! `tile360` command-line front end.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use tile360::allocator::{allocate, Algorithm};
use tile360::error_model::{fit_laplace, jarque_bera, JarqueBera, LaplaceParams};
use tile360::geometry::{
    viewport_bounds, viewport_tile_region, Fov, TileGrid, TileSet, ViewAngles, ViewportBounds,
};
use tile360::io::{
    read_errors, read_json, read_traces, write_errors, write_json, write_traces, ProblemFile,
};
use tile360::predictor::{
    split_views, PredictionMetrics, PredictorKind, TrainConfig, ViewpointEvaluation,
    ViewpointPredictor,
};
use tile360::sim::sweep::write_sweep;
use tile360::sim::{
    capacity_sweep, run_session, session_predictor, synth_traces, write_records, SessionConfig,
    SweepAxis, SweepSpec, SynthSpec, Variant,
};
use tile360::visibility::classify_tiles;
use tile360::{verify, Error, Result};

#[derive(Parser)]
#[command(
    name = "tile360",
    version,
    about = "Viewport prediction and tile rate allocation for 360-degree video"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a viewpoint predictor and report its held-out accuracy.
    PredictTrain(PredictTrain),
    /// Evaluate a predictor on traces.
    PredictEval(PredictEval),
    /// Fit a Laplace scale to error samples and test them for normality.
    FitLaplace(FitLaplace),
    /// Show the tiles covered by one viewpoint.
    MapViewport(MapViewport),
    /// Solve one allocation problem.
    Allocate(Allocate),
    /// Run a multi-user streaming session.
    Simulate(Simulate),
    /// Run sessions over a range of capacities.
    Sweep(Sweep),
    /// Write seeded synthetic head traces.
    SynthTraces(SynthTraces),
    /// Run the oracle suites.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct TraceArgs {
    /// Trace CSV files or directories of them.
    #[arg(long = "traces", required = true, num_args = 1..)]
    traces: Vec<PathBuf>,
}

#[derive(Args)]
struct PredictTrain {
    #[command(flatten)]
    traces: TraceArgs,
    #[arg(long, default_value = "cnn", value_parser = parse_kind)]
    kind: PredictorKind,
    /// Prediction lead, seconds.
    #[arg(long, default_value_t = 1.0)]
    horizon: f64,
    /// JSON training configuration; missing fields take defaults.
    #[arg(long)]
    train_config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Fraction of the traces, in file order, used for training.
    #[arg(long, default_value_t = 0.8)]
    split: f64,
    /// Checkpoint to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictEval {
    #[command(flatten)]
    traces: TraceArgs,
    /// Checkpoint; without one the naive predictor is used.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Horizon of the naive predictor, seconds.
    #[arg(long, default_value_t = 1.0)]
    horizon: f64,
    /// Directory for pitch_errors.csv and yaw_errors.csv.
    #[arg(long)]
    errors: Option<PathBuf>,
}

#[derive(Args)]
struct FitLaplace {
    /// One signed error in degrees per line.
    file: PathBuf,
}

#[derive(Args)]
struct MapViewport {
    #[arg(long, allow_hyphen_values = true)]
    pitch: f64,
    #[arg(long, allow_hyphen_values = true)]
    yaw: f64,
    #[arg(long, default_value_t = 110.0)]
    fov_h: f64,
    #[arg(long, default_value_t = 90.0)]
    fov_v: f64,
    #[arg(long, default_value_t = 8)]
    rows: usize,
    #[arg(long, default_value_t = 8)]
    cols: usize,
    /// Laplace scales `PITCH,YAW` in degrees; enables marginal tiles.
    #[arg(long, value_parser = parse_pair)]
    laplace: Option<(f64, f64)>,
    #[arg(long, default_value_t = 0.05)]
    threshold: f64,
    /// Print JSON instead of the grid.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct Allocate {
    problem: PathBuf,
    #[arg(long, default_value = "proposed", value_parser = parse_algorithm)]
    algorithm: Algorithm,
    /// Result file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SessionArgs {
    /// Session configuration JSON; defaults when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    traces: TraceArgs,
    /// Predictor checkpoint; otherwise the configured predictor is built
    /// from the session traces.
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Args)]
struct Simulate {
    #[command(flatten)]
    session: SessionArgs,
    /// Segment records CSV.
    #[arg(long)]
    out: PathBuf,
    /// Report JSON; stdout when absent.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct Sweep {
    #[command(flatten)]
    session: SessionArgs,
    /// Sweep specification JSON; replaces the range flags.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, default_value = "server", value_parser = parse_axis)]
    axis: SweepAxis,
    /// First point, kbps.
    #[arg(long, default_value_t = 9000.0)]
    start: f64,
    /// Last point, kbps.
    #[arg(long, default_value_t = 30000.0)]
    end: f64,
    #[arg(long, default_value_t = 22)]
    count: usize,
    /// `ALGORITHM[:OMEGA]`, comma separated.
    #[arg(
        long,
        value_delimiter = ',',
        value_parser = parse_variant,
        default_value = "proposed:0,proposed:1,greedy,baseline"
    )]
    variants: Vec<Variant>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthTraces {
    /// Generator specification JSON; missing fields take defaults.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    users: Option<usize>,
    /// Seconds per trace.
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    /// Also train and compare the predictors (minutes).
    #[arg(long)]
    full: bool,
}

fn parse_kind(s: &str) -> std::result::Result<PredictorKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_algorithm(s: &str) -> std::result::Result<Algorithm, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_axis(s: &str) -> std::result::Result<SweepAxis, String> {
    match s {
        "server" => Ok(SweepAxis::Server),
        "user" => Ok(SweepAxis::User),
        _ => Err(format!("unknown axis {s:?} (server, user)")),
    }
}

fn parse_variant(s: &str) -> std::result::Result<Variant, String> {
    let (name, omega) = match s.split_once(':') {
        Some((n, w)) => (
            n,
            Some(w.parse::<f64>().map_err(|e| format!("omega {w:?}: {e}"))?),
        ),
        None => (s, None),
    };
    Ok(Variant {
        algorithm: parse_algorithm(name)?,
        omega,
    })
}

fn parse_pair(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected PITCH,YAW")?;
    let num = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("{x:?}: {e}"));
    Ok((num(a)?, num(b)?))
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn emit_json<T: Serialize>(value: &T, path: Option<&Path>) -> Result<()> {
    match path {
        Some(p) => write_json(value, create(p)?),
        None => write_json(value, io::stdout().lock()),
    }
}

#[derive(Serialize)]
struct AngleSummary {
    samples: usize,
    metrics: PredictionMetrics,
}

#[derive(Serialize)]
struct EvalSummary {
    horizon: f64,
    pitch: AngleSummary,
    yaw: AngleSummary,
}

impl From<&ViewpointEvaluation> for EvalSummary {
    fn from(e: &ViewpointEvaluation) -> Self {
        EvalSummary {
            horizon: e.horizon,
            pitch: AngleSummary {
                samples: e.pitch.errors.len(),
                metrics: e.pitch.metrics,
            },
            yaw: AngleSummary {
                samples: e.yaw.errors.len(),
                metrics: e.yaw.metrics,
            },
        }
    }
}

#[derive(Serialize)]
struct TrainSummary {
    kind: PredictorKind,
    train_traces: usize,
    test_traces: usize,
    checkpoint: PathBuf,
    test: Option<EvalSummary>,
}

fn predict_train(a: PredictTrain) -> Result<()> {
    if !(a.split > 0.0 && a.split <= 1.0) {
        return Err(invalid(format!("split {} outside (0, 1]", a.split)));
    }
    let mut config: TrainConfig = match &a.train_config {
        Some(p) => read_json(p)?,
        None => TrainConfig::default(),
    };
    if let Some(e) = a.epochs {
        config.epochs = e;
    }
    if let Some(s) = a.seed {
        config.seed = s;
    }
    let traces = read_traces(&a.traces.traces)?;
    let (train, test) = split_views(&traces, a.split);
    let predictor = ViewpointPredictor::train(a.kind, &train, a.horizon, &config)?;
    let mut w = create(&a.out)?;
    w.write_all(predictor.to_json()?.as_bytes())?;
    w.flush()?;
    let test_eval = if test.is_empty() {
        None
    } else {
        Some(predictor.evaluate(&test)?)
    };
    emit_json(
        &TrainSummary {
            kind: a.kind,
            train_traces: train.len(),
            test_traces: test.len(),
            checkpoint: a.out,
            test: test_eval.as_ref().map(EvalSummary::from),
        },
        None,
    )
}

fn load_model(path: &Path) -> Result<ViewpointPredictor> {
    let text = std::fs::read_to_string(path)?;
    ViewpointPredictor::from_json(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn predict_eval(a: PredictEval) -> Result<()> {
    let predictor = match &a.model {
        Some(p) => load_model(p)?,
        None => ViewpointPredictor::naive(a.horizon)?,
    };
    let e = predictor.evaluate(&read_traces(&a.traces.traces)?)?;
    if let Some(dir) = &a.errors {
        std::fs::create_dir_all(dir)?;
        write_errors(&e.pitch.errors, create(&dir.join("pitch_errors.csv"))?)?;
        write_errors(&e.yaw.errors, create(&dir.join("yaw_errors.csv"))?)?;
    }
    emit_json(&EvalSummary::from(&e), None)
}

#[derive(Serialize)]
struct LaplaceFit {
    samples: usize,
    scale: f64,
    jarque_bera: JarqueBera,
}

fn fit_laplace_cmd(a: FitLaplace) -> Result<()> {
    let samples = read_errors(File::open(&a.file)?)?;
    emit_json(
        &LaplaceFit {
            samples: samples.len(),
            scale: fit_laplace(&samples)?.scale(),
            jarque_bera: jarque_bera(&samples)?,
        },
        None,
    )
}

#[derive(Serialize)]
struct ViewportMap {
    bounds: ViewportBounds,
    /// `(row, col)`, 1-based.
    viewport: Vec<(usize, usize)>,
    marginal: Vec<(usize, usize)>,
    /// Row-major visibility probability of every tile.
    probabilities: Option<Vec<f64>>,
}

fn pairs(tiles: &TileSet) -> Vec<(usize, usize)> {
    tiles.iter().map(|t| (t.row, t.col)).collect()
}

fn map_viewport(a: MapViewport) -> Result<()> {
    let grid = TileGrid::new(a.rows, a.cols)?;
    let bounds = viewport_bounds(
        ViewAngles::canonical(a.pitch, a.yaw)?,
        Fov::new(a.fov_h, a.fov_v)?,
    );
    let map = match a.laplace {
        Some((lp, ly)) => {
            let c = classify_tiles(
                grid,
                &bounds,
                LaplaceParams::new(lp)?,
                LaplaceParams::new(ly)?,
                a.threshold,
            )?;
            ViewportMap {
                bounds,
                viewport: pairs(&c.viewport_tiles),
                marginal: pairs(&c.marginal_tiles),
                probabilities: Some(c.probabilities.iter().map(|p| p.p_total).collect()),
            }
        }
        None => ViewportMap {
            bounds,
            viewport: pairs(&viewport_tile_region(&bounds, grid)),
            marginal: Vec::new(),
            probabilities: None,
        },
    };
    if a.json {
        return emit_json(&map, None);
    }
    let mut out = io::stdout().lock();
    let b = &map.bounds;
    writeln!(out, "latitude  {:.3} to {:.3}", b.lat_south, b.lat_north)?;
    writeln!(out, "longitude {:.3} to {:.3}", b.lon_west, b.lon_east)?;
    let flags = [
        (b.covers_north_pole, "covers north pole"),
        (b.covers_south_pole, "covers south pole"),
        (b.wraps_antimeridian, "wraps antimeridian"),
    ];
    for (_, name) in flags.iter().filter(|f| f.0) {
        writeln!(out, "{name}")?;
    }
    write!(out, "\n    ")?;
    for c in 1..=grid.cols() {
        write!(out, "{c:>3}")?;
    }
    writeln!(out)?;
    for r in 1..=grid.rows() {
        write!(out, "{r:>3} ")?;
        for c in 1..=grid.cols() {
            let mark = if map.viewport.contains(&(r, c)) {
                'V'
            } else if map.marginal.contains(&(r, c)) {
                'M'
            } else {
                '.'
            };
            write!(out, "{mark:>3}")?;
        }
        writeln!(out)?;
    }
    writeln!(
        out,
        "\nviewport {} tiles, marginal {} tiles",
        map.viewport.len(),
        map.marginal.len()
    )?;
    Ok(())
}

fn allocate_cmd(a: Allocate) -> Result<()> {
    let file: ProblemFile = read_json(&a.problem)?;
    let result = allocate(&file.into_problem()?, a.algorithm)?;
    emit_json(&result, a.out.as_deref())
}

fn session_inputs(
    a: &SessionArgs,
) -> Result<(
    SessionConfig,
    Vec<tile360::predictor::HeadTrace>,
    ViewpointPredictor,
)> {
    let config: SessionConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => SessionConfig::default(),
    };
    config.validate()?;
    let traces = read_traces(&a.traces.traces)?;
    let predictor = match &a.model {
        Some(p) => {
            let m = load_model(p)?;
            if (m.horizon - config.horizon).abs() > 1e-9 {
                return Err(invalid(format!(
                    "checkpoint horizon {} s differs from the configured {} s",
                    m.horizon, config.horizon
                )));
            }
            m
        }
        None => session_predictor(&config, &traces)?,
    };
    Ok((config, traces, predictor))
}

fn simulate(a: Simulate) -> Result<()> {
    let (config, traces, predictor) = session_inputs(&a.session)?;
    let output = run_session(&config, &traces, &predictor)?;
    let mut w = create(&a.out)?;
    write_records(&output.records, &mut w)?;
    w.flush()?;
    emit_json(&output.report, a.report.as_deref())
}

fn sweep(a: Sweep) -> Result<()> {
    let (config, traces, predictor) = session_inputs(&a.session)?;
    let spec: SweepSpec = match &a.spec {
        Some(p) => read_json(p)?,
        None => SweepSpec::linear(a.axis, a.start, a.end, a.count, a.variants),
    };
    let rows = capacity_sweep(&config, &traces, &predictor, &spec)?;
    let mut w = create(&a.out)?;
    write_sweep(&rows, &mut w)?;
    w.flush()?;
    Ok(())
}

fn synth(a: SynthTraces) -> Result<()> {
    let mut spec: SynthSpec = match &a.spec {
        Some(p) => read_json(p)?,
        None => SynthSpec::default(),
    };
    if let Some(u) = a.users {
        spec.users = u;
    }
    if let Some(d) = a.duration {
        spec.duration = d;
    }
    let written = write_traces(&synth_traces(&spec, a.seed)?, &a.out)?;
    println!("wrote {} traces to {}", written.len(), a.out.display());
    Ok(())
}

/// Returns whether every check passed.
fn verify_cmd(a: VerifyArgs) -> Result<bool> {
    let mut checks = verify::run_all()?;
    if a.full {
        checks.extend(verify::predictor_suite(Default::default())?);
    }
    for c in &checks {
        println!("{c}");
    }
    Ok(checks.iter().all(|c| c.passed))
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::PredictTrain(a) => predict_train(a)?,
        Command::PredictEval(a) => predict_eval(a)?,
        Command::FitLaplace(a) => fit_laplace_cmd(a)?,
        Command::MapViewport(a) => map_viewport(a)?,
        Command::Allocate(a) => allocate_cmd(a)?,
        Command::Simulate(a) => simulate(a)?,
        Command::Sweep(a) => sweep(a)?,
        Command::SynthTraces(a) => synth(a)?,
        Command::Verify(a) => {
            if !verify_cmd(a)? {
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_infeasible() { 3 } else { 2 })
        }
    }
}
