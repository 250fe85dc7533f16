//! One pipeline per experiment kind. Rows are computed in parallel and collected in input
//! order, so tables are deterministic.

use std::time::Instant;

use geoflow::entropy::{
    bracket, expansivity_probe, separated_set_entropy, strip_entropy, BracketOptions, ReparamFamily, VectorGrid,
};
use geoflow::geodesic::UnitTangentVector;
use geoflow::green::{classify_rank_one, green_frame_on, lyapunov_on, GreenData, GreenOptions};
use geoflow::horo::{busemann, detect_strip, trace_horocycle, BusemannOptions, Sign, StripOptions, TraceOptions};

use geoflow::{Chart, GeoError, Window};
use rayon::prelude::*;
use serde_json::json;

use crate::cache::TrajectoryCache;
use crate::config::{
    BracketParams, BusemannParams, ClassifyParams, EntropyParams, ExperimentConfig, ExpansivityParams, Global,
    GridParams, LyapunovParams, Pipeline, StripParams, VectorSpec,
};
use crate::error::CliError;
use crate::table::{Provenance, ResultTable, Value};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Shared state of one experiment.
pub struct Context<'a> {
    pub chart: Chart,
    pub global: &'a Global,
    pub cache: &'a TrajectoryCache,
    pub seed: u64,
    pub name: String,
    pub provenance: Provenance,
}

impl Context<'_> {
    fn table(&self, suffix: &str, schema: &[&str]) -> ResultTable {
        ResultTable::new(format!("{}{suffix}", self.name), schema, self.provenance.clone())
    }

    fn green_opts(&self) -> GreenOptions<f64> {
        GreenOptions { tol: self.global.tol, t_max: self.global.t_max }
    }

    fn busemann_opts(&self) -> BusemannOptions<f64> {
        BusemannOptions { tol: self.global.busemann_tol, ..BusemannOptions::default() }
    }

    fn trace_opts(&self, step: f64) -> TraceOptions<f64> {
        TraceOptions { step, trace_tol: self.global.trace_tol, busemann: self.busemann_opts(), ..TraceOptions::default() }
    }

    fn unit(&self, v: &VectorSpec) -> Result<UnitTangentVector<f64>, GeoError> {
        UnitTangentVector::from_angle(&self.chart, [v[0], v[1]], v[2])
    }

    fn window(&self) -> Window {
        self.chart.window
    }
}

fn theta_cells(v: &UnitTangentVector<f64>) -> Vec<Value> {
    vec![v.base[0].into(), v.base[1].into(), v.dir[0].into(), v.dir[1].into()]
}

fn spec_cells(v: &VectorSpec) -> Vec<Value> {
    vec![v[0].into(), v[1].into(), v[2].into()]
}

/// Theta fields of a vector that could not be built: base point and NaN direction.
fn err_theta(v: &VectorSpec) -> Vec<Value> {
    vec![v[0].into(), v[1].into(), Value::Float(f64::NAN), Value::Float(f64::NAN)]
}

fn nan_cells(n: usize) -> Vec<Value> {
    vec![Value::Float(f64::NAN); n]
}

/// Runs one experiment and returns its tables (the main table first).
pub fn run_pipeline(ctx: &Context, pipeline: &Pipeline) -> Result<Vec<ResultTable>, CliError> {
    match pipeline {
        Pipeline::GreenSweep(p) => green_sweep(ctx, p),
        Pipeline::ClassifyGrid(p) => classify_grid(ctx, p),
        Pipeline::LyapunovSweep(p) => lyapunov_sweep(ctx, p),
        Pipeline::BusemannProbe(p) => busemann_probe(ctx, p),
        Pipeline::StripScan(p) => strip_scan(ctx, p),
        Pipeline::EntropyWindow(p) => entropy_window(ctx, p),
        Pipeline::ExpansivityPairs(p) => expansivity_pairs(ctx, p),
        Pipeline::BracketPairs(p) => bracket_pairs(ctx, p),
    }
}

fn green_at(ctx: &Context, v: &VectorSpec, horizon: f64) -> Result<(geoflow::Trajectory, GreenData<f64>), GeoError> {
    let theta = ctx.unit(v)?;
    let t_max = ctx.global.t_max;
    let traj = ctx.cache.trajectory(&ctx.chart, &theta, (-t_max, t_max.max(horizon))).map_err(|e| match e {
        CliError::Numerical(m) | CliError::Io(m) | CliError::Validation(m) => GeoError::Diagnostics(m),
    })?;
    let g = green_frame_on(&traj, &ctx.green_opts())?;
    Ok((traj, g))
}

fn green_sweep(ctx: &Context, p: &GridParams) -> Result<Vec<ResultTable>, CliError> {
    let vs = p.grid.expand(&ctx.window(), ctx.seed);
    let mut t = ctx.table("", &["x", "y", "vx", "vy", "u_s", "u_u", "gap", "converged", "T_used"]);
    t.plot = Some(("x".into(), "gap".into()));
    let rows: Vec<(Vec<Value>, bool)> = vs
        .par_iter()
        .map(|v| match green_at(ctx, v, 0.0) {
            Ok((_, g)) => {
                let mut r = theta_cells(&g.theta);
                r.extend([g.u_s.into(), g.u_u.into(), g.gap.into(), g.converged.into(), g.t_used.into()]);
                (r, g.converged)
            }
            Err(_) => {
                let mut r = err_theta(v);
                r.extend(nan_cells(3));
                r.push(false.into());
                r.push(Value::Float(f64::NAN));
                (r, false)
            }
        })
        .collect();
    for (r, ok) in rows {
        t.unconverged += usize::from(!ok);
        t.push(r);
    }
    Ok(vec![t])
}

fn classify_grid(ctx: &Context, p: &ClassifyParams) -> Result<Vec<ResultTable>, CliError> {
    let vs = p.grid.expand(&ctx.window(), ctx.seed);
    let mut t = ctx.table("", &["x", "y", "vx", "vy", "gap", "class", "lyap_T", "T"]);
    t.plot = Some(("x".into(), "gap".into()));
    let threshold = ctx.global.rank_threshold;
    let rows: Vec<(Vec<Value>, bool)> = vs
        .par_iter()
        .map(|v| match green_at(ctx, v, p.lyap_t) {
            Ok((traj, g)) => {
                let c = classify_rank_one(&g, threshold);
                let lyap = lyapunov_on(&traj, &g, p.lyap_t).map(|l| l.exponent).ok();
                let mut r = theta_cells(&g.theta);
                r.extend([g.gap.into(), c.class.as_str().into(), lyap.into(), p.lyap_t.into()]);
                (r, g.converged)
            }
            Err(_) => {
                let mut r = err_theta(v);
                r.extend([Value::Float(f64::NAN), "unresolved".into(), Value::Float(f64::NAN), p.lyap_t.into()]);
                (r, false)
            }
        })
        .collect();
    for (r, ok) in rows {
        t.unconverged += usize::from(!ok);
        t.push(r);
    }
    Ok(vec![t])
}

fn lyapunov_sweep(ctx: &Context, p: &LyapunovParams) -> Result<Vec<ResultTable>, CliError> {
    let vs = p.grid.expand(&ctx.window(), ctx.seed);
    let horizon = p.horizons.iter().copied().fold(0.0, f64::max);
    let mut t = ctx.table("", &["x", "y", "vx", "vy", "T", "exponent", "log_growth"]);
    t.plot = Some(("T".into(), "exponent".into()));
    let rows: Vec<Vec<(Vec<Value>, bool)>> = vs
        .par_iter()
        .map(|v| {
            let res = green_at(ctx, v, horizon);
            p.horizons
                .iter()
                .map(|&h| {
                    let est = res.as_ref().ok().and_then(|(traj, g)| lyapunov_on(traj, g, h).ok());
                    let mut r = match &res {
                        Ok((_, g)) => theta_cells(&g.theta),
                        Err(_) => err_theta(v),
                    };
                    r.push(h.into());
                    r.push(est.map(|e| e.exponent).into());
                    r.push(est.map(|e| e.log_growth).into());
                    (r, est.is_some())
                })
                .collect()
        })
        .collect();
    for (r, ok) in rows.into_iter().flatten() {
        t.unconverged += usize::from(!ok);
        t.push(r);
    }
    Ok(vec![t])
}

fn sign_of(s: &str) -> Sign {
    if s == "minus" {
        Sign::Minus
    } else {
        Sign::Plus
    }
}

const TRACE_SCHEMA: [&str; 7] = ["s", "x", "y", "nx", "ny", "b_plus", "b_minus"];

fn trace_row(p: &geoflow::horo::TracePoint<f64>) -> Vec<Value> {
    vec![
        p.s.into(),
        p.point[0].into(),
        p.point[1].into(),
        p.normal[0].into(),
        p.normal[1].into(),
        p.b_plus.into(),
        p.b_minus.into(),
    ]
}

fn busemann_probe(ctx: &Context, p: &BusemannParams) -> Result<Vec<ResultTable>, CliError> {
    let theta = ctx.unit(&p.theta)?;
    let sign = sign_of(&p.sign);
    let mut points: Vec<[f64; 2]> = p.points.clone().unwrap_or_default();
    if let Some(g) = &p.probe_grid {
        points.extend(g.expand(&ctx.window(), ctx.seed).iter().map(|v| [v[0], v[1]]));
    }
    let opts = ctx.busemann_opts();
    let mut t = ctx.table(
        "",
        &["x", "y", "sign", "value", "grad_x", "grad_y", "T_used", "decrement_last", "converged", "monotone"],
    );
    t.plot = Some(("y".into(), "value".into()));
    let rows: Vec<(Vec<Value>, bool)> = points
        .par_iter()
        .map(|&x| {
            let mut r: Vec<Value> = vec![x[0].into(), x[1].into(), sign.as_str().into()];
            match busemann(&ctx.chart, &theta, x, sign, &opts) {
                Ok(e) => {
                    r.extend([
                        e.value.into(),
                        e.gradient[0].into(),
                        e.gradient[1].into(),
                        e.t_used.into(),
                        e.decrement_last.into(),
                        e.converged.into(),
                        e.monotone.into(),
                    ]);
                    (r, e.converged)
                }
                Err(_) => {
                    r.extend(nan_cells(5));
                    r.extend([false.into(), false.into()]);
                    (r, false)
                }
            }
        })
        .collect();
    for (r, ok) in rows {
        t.unconverged += usize::from(!ok);
        t.push(r);
    }
    let mut out = vec![t];
    if p.trace_halflength > 0.0 {
        let tr = trace_horocycle(&ctx.chart, &theta, sign, p.trace_halflength, &ctx.trace_opts(p.trace_step))?;
        let mut tt = ctx.table("_trace", &TRACE_SCHEMA);
        tt.plot = Some(("x".into(), "y".into()));
        for q in &tr.points {
            tt.push(trace_row(q));
        }
        tt.unconverged = usize::from(tr.truncated);
        tt.summary = Some(json!({ "truncated": tr.truncated, "step": tr.step }));
        out.push(tt);
    }
    Ok(out)
}

fn strip_scan(ctx: &Context, p: &StripParams) -> Result<Vec<ResultTable>, CliError> {
    let vs = p.vectors.expand(&ctx.window(), ctx.seed);
    let opts = StripOptions { strip_tol: ctx.global.strip_tol, trace: ctx.trace_opts(0.05) };
    let schema = [
        "x", "y", "vx", "vy", "width", "end0_x", "end0_y", "end1_x", "end1_y", "s_lo", "s_hi", "exceeded_window", "trivial",
    ];
    let mut t = ctx.table("", &schema);
    t.plot = Some(("y".into(), "width".into()));
    let records: Vec<Result<geoflow::horo::StripRecord<f64>, GeoError>> =
        vs.par_iter().map(|v| detect_strip(&ctx.chart, &ctx.unit(v)?, p.halflength, &opts)).collect();
    let mut trace_schema = vec!["index"];
    trace_schema.extend(TRACE_SCHEMA);
    let mut tt = ctx.table("_trace", &trace_schema);
    tt.plot = Some(("x".into(), "y".into()));
    for (i, (v, rec)) in vs.iter().zip(&records).enumerate() {
        match rec {
            Ok(r) => {
                let mut row = theta_cells(&r.theta);
                row.extend([
                    r.width.into(),
                    r.endpoints[0][0].into(),
                    r.endpoints[0][1].into(),
                    r.endpoints[1][0].into(),
                    r.endpoints[1][1].into(),
                    r.s_range.0.into(),
                    r.s_range.1.into(),
                    r.exceeded_window.into(),
                    r.is_trivial().into(),
                ]);
                t.push(row);
                for q in &r.points {
                    let mut row = vec![Value::from(i)];
                    row.extend(trace_row(q));
                    tt.push(row);
                }
            }
            Err(_) => {
                let mut row = err_theta(v);
                row.extend(nan_cells(7));
                row.extend([false.into(), false.into()]);
                t.unconverged += 1;
                t.push(row);
            }
        }
    }
    let mut out = vec![t];
    if p.trace {
        out.push(tt);
    }
    Ok(out)
}

fn entropy_window(ctx: &Context, p: &EntropyParams) -> Result<Vec<ResultTable>, CliError> {
    let w = ctx.window();
    let r = p.region.unwrap_or([w.xmin, w.xmax, w.ymin, w.ymax]);
    let grid = VectorGrid { region: Window::new(r[0], r[1], r[2], r[3]), angle: p.angle, nx: p.nx, ny: p.ny };
    let res = separated_set_entropy(&ctx.chart, &grid, p.epsilon, &p.n)?;
    let mut t = ctx.table("", &["n", "count", "log_count"]);
    t.plot = Some(("n".into(), "log_count".into()));
    for (&n, &c) in res.n_grid.iter().zip(&res.counts) {
        t.push(vec![n.into(), c.into(), (c as f64).ln().into()]);
    }
    t.summary = Some(json!({
        "window": res.window,
        "epsilon": res.epsilon,
        "n": res.n_grid,
        "counts": res.counts,
        "slope": res.slope,
        "dropped": res.dropped,
    }));
    Ok(vec![t])
}

fn expansivity_pairs(ctx: &Context, p: &ExpansivityParams) -> Result<Vec<ResultTable>, CliError> {
    let pairs = p.pairs.expand(&ctx.window(), ctx.seed);
    let family = ReparamFamily::default();
    let schema = [
        "index", "theta_x", "theta_y", "theta_angle", "eta_x", "eta_y", "eta_angle", "delta", "T", "verdict", "witness_t",
        "shift_s", "shift_d",
    ];
    let mut t = ctx.table("", &schema);
    t.plot = Some(("index".into(), "witness_t".into()));
    t.summary = Some(json!({ "family": family.describe() }));
    let rows: Vec<(Vec<Value>, bool)> = pairs
        .par_iter()
        .enumerate()
        .map(|(i, [a, b])| {
            let mut r = vec![Value::from(i)];
            r.extend(spec_cells(a));
            r.extend(spec_cells(b));
            r.extend([p.delta.into(), p.t.into()]);
            let res = ctx.unit(a).and_then(|ta| {
                let tb = ctx.unit(b)?;
                expansivity_probe(&ctx.chart, &ta, &tb, p.delta, p.t, &family)
            });
            match res {
                Ok(v) => {
                    r.extend([v.verdict.as_str().into(), v.witness_t.into(), v.shift.0.into(), v.shift.1.into()]);
                    (r, true)
                }
                Err(_) => {
                    r.push("failed".into());
                    r.extend(nan_cells(3));
                    (r, false)
                }
            }
        })
        .collect();
    for (r, ok) in rows {
        t.unconverged += usize::from(!ok);
        t.push(r);
    }
    Ok(vec![t])
}

fn bracket_pairs(ctx: &Context, p: &BracketParams) -> Result<Vec<ResultTable>, CliError> {
    let pairs = p.pairs.expand(&ctx.window(), ctx.seed);
    let opts = BracketOptions {
        tol: ctx.global.bracket_tol,
        radius: p.radius,
        halflength: p.halflength,
        trace: ctx.trace_opts(0.05),
    };
    let schema = [
        "index", "theta_x", "theta_y", "theta_angle", "eta_x", "eta_y", "eta_angle", "status", "x", "y", "vx", "vy",
        "offset", "arclength", "residual_plus", "residual_minus", "residual_angle",
    ];
    let mut t = ctx.table("", &schema);
    t.plot = Some(("index".into(), "offset".into()));
    let rows: Vec<(Vec<Value>, bool)> = pairs
        .par_iter()
        .enumerate()
        .map(|(i, [a, b])| {
            let mut r = vec![Value::from(i)];
            r.extend(spec_cells(a));
            r.extend(spec_cells(b));
            let res = ctx.unit(a).and_then(|ta| {
                let tb = ctx.unit(b)?;
                bracket(&ctx.chart, &ta, &tb, &opts)
            });
            match res {
                Ok(x) => {
                    r.push("ok".into());
                    r.extend(theta_cells(&x.vector));
                    r.extend([
                        x.offset.into(),
                        x.arclength.into(),
                        x.residual_plus.into(),
                        x.residual_minus.into(),
                        x.residual_angle.into(),
                    ]);
                    (r, true)
                }
                Err(e) => {
                    let (status, ok) = match e {
                        GeoError::Precondition(_) => ("precondition", true),
                        GeoError::NoIntersection => ("no_intersection", true),
                        _ => ("failed", false),
                    };
                    r.push(status.into());
                    r.extend(nan_cells(9));
                    (r, ok)
                }
            }
        })
        .collect();
    for (r, ok) in rows {
        t.unconverged += usize::from(!ok);
        t.push(r);
    }
    Ok(vec![t])
}

/// Strip entropy of the strip through one vector (used by the inline `strip` subcommand).
pub fn strip_entropy_json(
    chart: &Chart,
    global: &Global,
    theta: &UnitTangentVector<f64>,
    halflength: f64,
    epsilon: f64,
    n_grid: &[usize],
) -> Result<serde_json::Value, CliError> {
    let opts = StripOptions { strip_tol: global.strip_tol, ..StripOptions::default() };
    let rec = detect_strip(chart, theta, halflength, &opts)?;
    let s = strip_entropy(chart, &rec, epsilon, n_grid, 20)?;
    Ok(json!({
        "width": rec.width,
        "epsilon": s.result.epsilon,
        "n": s.result.n_grid,
        "counts": s.result.counts,
        "slope": s.result.slope,
        "delta2": s.delta2,
        "bound_holds": s.bound_holds,
    }))
}

/// Outcome of running a configuration.
#[derive(Debug, Default)]
pub struct RunOutcome {
    pub tables: Vec<ResultTable>,
    /// Experiments that failed as a whole, by output stem.
    pub failures: Vec<(String, CliError)>,
}

impl RunOutcome {
    pub fn unconverged(&self) -> usize {
        self.tables.iter().map(|t| t.unconverged).sum()
    }

    /// 0 when every experiment ran and every row converged, else 3.
    pub fn exit_code(&self) -> u8 {
        if self.failures.is_empty() && self.unconverged() == 0 {
            0
        } else {
            3
        }
    }
}

/// Runs every experiment of a validated configuration. A failing experiment is recorded and
/// the remaining ones continue.
pub fn run_experiment(config: &ExperimentConfig, cache: &TrajectoryCache) -> Result<RunOutcome, CliError> {
    let chart = config.metric.chart()?;
    let hash = config.hash();
    let mut out = RunOutcome::default();
    for (i, e) in config.experiments.iter().enumerate() {
        let start = Instant::now();
        let ctx = Context {
            chart,
            global: &config.global,
            cache,
            seed: config.experiment_seed(i),
            name: e.output.clone(),
            provenance: Provenance {
                config_hash: hash.clone(),
                artifact_version: VERSION.into(),
                experiment: e.output.clone(),
                kind: e.pipeline.kind().into(),
                wall_clock_s: 0.0,
            },
        };
        match run_pipeline(&ctx, &e.pipeline) {
            Ok(mut tables) => {
                let secs = start.elapsed().as_secs_f64();
                for t in &mut tables {
                    t.provenance.wall_clock_s = secs;
                }
                out.tables.extend(tables);
            }
            Err(err) => out.failures.push((e.output.clone(), err)),
        }
    }
    Ok(out)
}
