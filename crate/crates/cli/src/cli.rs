//! Command-line surface: `run` consumes a config file, the other subcommands build a
//! one-experiment config from inline flags.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::cache::TrajectoryCache;
use crate::config::{
    BusemannParams, ClassifyParams, EntropyParams, Experiment, ExperimentConfig, ExpansivityParams, Format, Global,
    GridParams, MetricSpec, PairSet, Pipeline, StripParams, VectorSet, VectorSpec,
};
use crate::error::CliError;
use crate::pipelines::{run_experiment, strip_entropy_json, RunOutcome};
use crate::table::{emit_report, read_tables};

#[derive(Debug, Parser)]
#[command(name = "geoflow", version, about = "Geodesic-flow experiments on nonpositively curved surfaces")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Experiment config (TOML). Inline subcommands take its [global] and [metric] blocks.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "geoflow-out")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Overrides a [global] setting, e.g. `tol=1e-6`. Repeatable.
    #[arg(long = "tol-override", value_name = "KEY=VAL", global = true)]
    tol_override: Vec<String>,
    /// Inline metric, e.g. `constant:-1`, `warped:flat_band:1`, `conformal:radial:0.05`.
    #[arg(long, global = true)]
    metric: Option<String>,
    /// Chart window `xmin,xmax,ymin,ymax` for an inline metric.
    #[arg(long, global = true, value_parser = parse_list::<4>, allow_hyphen_values = true)]
    window: Option<[f64; 4]>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Runs every experiment of --config.
    Run,
    /// Rank-one classification over a grid.
    Classify {
        #[arg(long, default_value_t = 10)]
        nx: usize,
        #[arg(long, default_value_t = 10)]
        ny: usize,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        angle: f64,
        #[arg(long, default_value_t = 1)]
        n_angles: usize,
        #[arg(long, default_value_t = 20.0)]
        lyap_t: f64,
    },
    /// Green data of one vector `x,y,angle`.
    Green {
        #[arg(long, value_parser = parse_list::<3>, allow_hyphen_values = true)]
        theta: VectorSpec,
    },
    /// Busemann values and the horocycle trace through base(theta).
    Busemann {
        #[arg(long, value_parser = parse_list::<3>, allow_hyphen_values = true)]
        theta: VectorSpec,
        #[arg(long, default_value = "plus")]
        sign: String,
        #[arg(long, default_value_t = 1.0)]
        halflength: f64,
        #[arg(long)]
        tol: Option<f64>,
        /// Probe point `x,y`. Repeatable.
        #[arg(long, value_parser = parse_list::<2>, allow_hyphen_values = true)]
        point: Vec<[f64; 2]>,
    },
    /// Strip through base(theta), its trace and its entropy.
    Strip {
        #[arg(long, value_parser = parse_list::<3>, allow_hyphen_values = true)]
        theta: VectorSpec,
        #[arg(long, default_value_t = 2.5)]
        halflength: f64,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long, default_value_t = 0.1)]
        epsilon: f64,
        #[arg(long, value_delimiter = ',', default_value = "2,3,4,5,6")]
        n: Vec<usize>,
    },
    /// Separated-set entropy of a direction-fixed grid.
    Entropy {
        /// Region `xmin,xmax,ymin,ymax` (default: the chart window).
        #[arg(long, value_parser = parse_list::<4>, allow_hyphen_values = true)]
        region: Option<[f64; 4]>,
        #[arg(long, default_value_t = 201)]
        nx: usize,
        #[arg(long, default_value_t = 3)]
        ny: usize,
        #[arg(long, default_value_t = std::f64::consts::FRAC_PI_2, allow_hyphen_values = true)]
        angle: f64,
        #[arg(long, default_value_t = 0.1)]
        epsilon: f64,
        #[arg(long, value_delimiter = ',', default_value = "2,3,4,5")]
        n: Vec<usize>,
    },
    /// Expansivity probe of one pair.
    Expansivity {
        #[arg(long, value_parser = parse_list::<3>, allow_hyphen_values = true)]
        theta: VectorSpec,
        #[arg(long, value_parser = parse_list::<3>, allow_hyphen_values = true)]
        eta: VectorSpec,
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        #[arg(long, default_value_t = 10.0)]
        t: f64,
    },
    /// Re-emits the JSON tables of a directory in another format.
    Report {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "csv")]
        format: Format,
    },
}

fn parse_list<const N: usize>(s: &str) -> Result<[f64; N], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|c| c.trim().parse::<f64>().map_err(|_| format!("\"{c}\" is not a number")))
        .collect::<Result<_, _>>()?;
    v.try_into().map_err(|v: Vec<f64>| format!("expected {N} comma-separated numbers, got {}", v.len()))
}

/// Global and metric blocks for an inline subcommand.
fn base_config(common: &Common) -> Result<(Global, MetricSpec), CliError> {
    let (mut global, metric) = match &common.config {
        Some(path) => {
            let cfg = ExperimentConfig::from_path(path, &[])?;
            (cfg.global, cfg.metric)
        }
        None => (Global::default(), MetricSpec::parse_inline("constant:-1", [-2.0, 2.0, -2.0, 2.0])?),
    };
    let metric = match &common.metric {
        Some(spec) => MetricSpec::parse_inline(spec, common.window.unwrap_or(metric.window))?,
        None => MetricSpec { window: common.window.unwrap_or(metric.window), ..metric },
    };
    for o in &common.tol_override {
        global.apply_override(o)?;
    }
    Ok((global, metric))
}

fn single(global: Global, metric: MetricSpec, output: &str, pipeline: Pipeline) -> Result<ExperimentConfig, CliError> {
    let cfg = ExperimentConfig { global, metric, experiments: vec![Experiment { output: output.into(), pipeline }] };
    cfg.validate()?;
    Ok(cfg)
}

fn one_vector(v: VectorSpec) -> VectorSet {
    VectorSet { vectors: Some(vec![v]), region: None, nx: 1, ny: 1, angle: 0.0, n_angles: 1, jitter: 0.0 }
}

/// Runs `cfg`, writes its tables in every configured format under `out` and reports.
pub fn execute(cfg: &ExperimentConfig, out: &Path, cache: &TrajectoryCache) -> Result<RunOutcome, CliError> {
    let outcome = run_experiment(cfg, cache)?;
    for &f in &cfg.global.formats {
        emit_report(&outcome.tables, f, out)?;
    }
    for t in &outcome.tables {
        eprintln!(
            "{}: {} rows, {} unconverged, {:.2} s",
            t.name,
            t.rows.len(),
            t.unconverged,
            t.provenance.wall_clock_s
        );
    }
    for (name, e) in &outcome.failures {
        eprintln!("{name}: {e}");
    }
    Ok(outcome)
}

fn dispatch(cli: Cli) -> Result<u8, CliError> {
    let common = &cli.common;
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(CliError::Validation("--threads must be at least 1".into()));
        }
        // a second initialisation in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let cache = TrajectoryCache::from_env(&common.out.join(".cache"));
    let cfg = match cli.command {
        Command::Run => {
            let path = common.config.as_ref().ok_or_else(|| CliError::Validation("run needs --config".into()))?;
            let mut cfg = ExperimentConfig::from_path(path, &common.tol_override)?;
            if let Some(spec) = &common.metric {
                cfg.metric = MetricSpec::parse_inline(spec, common.window.unwrap_or(cfg.metric.window))?;
                cfg.validate()?;
            }
            cfg
        }
        Command::Report { input, format } => {
            let tables = read_tables(&input)?;
            for p in emit_report(&tables, format, &common.out)? {
                println!("{}", p.display());
            }
            return Ok(0);
        }
        Command::Classify { nx, ny, angle, n_angles, lyap_t } => {
            let (g, m) = base_config(common)?;
            let grid = VectorSet { vectors: None, region: None, nx, ny, angle, n_angles, jitter: 0.0 };
            single(g, m, "classify", Pipeline::ClassifyGrid(ClassifyParams { grid, lyap_t }))?
        }
        Command::Green { theta } => {
            let (g, m) = base_config(common)?;
            single(g, m, "green", Pipeline::GreenSweep(GridParams { grid: one_vector(theta) }))?
        }
        Command::Busemann { theta, sign, halflength, tol, point } => {
            let (mut g, m) = base_config(common)?;
            if let Some(t) = tol {
                g.busemann_tol = t;
            }
            let p = BusemannParams {
                theta,
                sign,
                points: Some(point),
                probe_grid: None,
                trace_halflength: halflength,
                trace_step: 0.05,
            };
            single(g, m, "busemann", Pipeline::BusemannProbe(p))?
        }
        Command::Strip { theta, halflength, tol, epsilon, n } => {
            let (mut g, m) = base_config(common)?;
            if let Some(t) = tol {
                g.strip_tol = t;
            }
            let cfg = single(
                g.clone(),
                m.clone(),
                "strip",
                Pipeline::StripScan(StripParams { vectors: one_vector(theta), halflength, trace: true }),
            )?;
            let outcome = execute(&cfg, &common.out, &cache)?;
            let chart = m.chart()?;
            let th = geoflow::geodesic::UnitTangentVector::from_angle(&chart, [theta[0], theta[1]], theta[2])?;
            let summary = strip_entropy_json(&chart, &g, &th, halflength, epsilon, &n)?;
            println!("{}", serde_json::to_string_pretty(&summary).expect("json"));
            return Ok(outcome.exit_code());
        }
        Command::Entropy { region, nx, ny, angle, epsilon, n } => {
            let (g, m) = base_config(common)?;
            single(g, m, "entropy", Pipeline::EntropyWindow(EntropyParams { region, nx, ny, angle, epsilon, n }))?
        }
        Command::Expansivity { theta, eta, delta, t } => {
            let (g, m) = base_config(common)?;
            let pairs = PairSet { pairs: Some(vec![[theta, eta]]), region: None, count: 0, radius: 0.1 };
            single(g, m, "expansivity", Pipeline::ExpansivityPairs(ExpansivityParams { pairs, delta, t }))?
        }
    };
    let outcome = execute(&cfg, &common.out, &cache)?;
    if cfg.experiments.len() == 1 {
        for t in &outcome.tables {
            match &t.summary {
                Some(s) if t.provenance.kind == "entropy_window" => {
                    println!("{}", serde_json::to_string_pretty(s).expect("json"))
                }
                _ => print!("{}", t.to_csv()?),
            }
        }
    }
    Ok(outcome.exit_code())
}

/// Parses `args` and runs; returns the process exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
