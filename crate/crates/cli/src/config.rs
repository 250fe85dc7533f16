//! Experiment configuration: a TOML file with `[global]`, `[metric]` and `[[experiments]]`.

use std::collections::BTreeSet;
use std::f64::consts::TAU;
use std::path::Path;

use geoflow::metric::{ChartKind, ConformalFactor, MetricChart, WarpProfile};
use geoflow::Window;
use geoflow::Chart;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Experiment kinds with a pipeline.
pub const KINDS: [&str; 8] = [
    "green_sweep",
    "classify_grid",
    "busemann_probe",
    "strip_scan",
    "entropy_window",
    "expansivity_pairs",
    "bracket_pairs",
    "lyapunov_sweep",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Plotdata,
}

impl std::str::FromStr for Format {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            "plotdata" => Ok(Format::Plotdata),
            other => Err(CliError::Validation(format!("format: unknown output format \"{other}\""))),
        }
    }
}

fn default_formats() -> Vec<Format> {
    vec![Format::Csv]
}

/// Tolerances and horizons shared by every experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Global {
    /// Green limit tolerance.
    #[serde(default = "Global::default_tol")]
    pub tol: f64,
    #[serde(default = "Global::default_t_max")]
    pub t_max: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "Global::default_busemann_tol")]
    pub busemann_tol: f64,
    #[serde(default = "Global::default_strip_tol")]
    pub strip_tol: f64,
    #[serde(default = "Global::default_trace_tol")]
    pub trace_tol: f64,
    #[serde(default = "Global::default_bracket_tol")]
    pub bracket_tol: f64,
    #[serde(default = "Global::default_rank_threshold")]
    pub rank_threshold: f64,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

impl Global {
    fn default_tol() -> f64 {
        1e-8
    }
    fn default_t_max() -> f64 {
        20.0
    }
    fn default_busemann_tol() -> f64 {
        1e-5
    }
    fn default_strip_tol() -> f64 {
        1e-3
    }
    fn default_trace_tol() -> f64 {
        1e-6
    }
    fn default_bracket_tol() -> f64 {
        1e-3
    }
    fn default_rank_threshold() -> f64 {
        geoflow::green::DEFAULT_RANK_THRESHOLD
    }

    /// The positive real settings by name, in a fixed order.
    fn reals(&self) -> [(&'static str, f64); 7] {
        [
            ("tol", self.tol),
            ("t_max", self.t_max),
            ("busemann_tol", self.busemann_tol),
            ("strip_tol", self.strip_tol),
            ("trace_tol", self.trace_tol),
            ("bracket_tol", self.bracket_tol),
            ("rank_threshold", self.rank_threshold),
        ]
    }

    /// Applies a `KEY=VAL` override.
    pub fn apply_override(&mut self, spec: &str) -> Result<(), CliError> {
        let (key, val) = spec
            .split_once('=')
            .ok_or_else(|| CliError::Validation(format!("tol-override \"{spec}\" is not KEY=VAL")))?;
        let key = key.trim();
        let val = val.trim();
        if key == "seed" {
            self.seed = val.parse().map_err(|_| CliError::Validation(format!("{key}: \"{val}\" is not an integer")))?;
            return Ok(());
        }
        let x: f64 = val.parse().map_err(|_| CliError::Validation(format!("{key}: \"{val}\" is not a number")))?;
        let slot = match key {
            "tol" => &mut self.tol,
            "t_max" => &mut self.t_max,
            "busemann_tol" => &mut self.busemann_tol,
            "strip_tol" => &mut self.strip_tol,
            "trace_tol" => &mut self.trace_tol,
            "bracket_tol" => &mut self.bracket_tol,
            "rank_threshold" => &mut self.rank_threshold,
            other => return Err(CliError::Validation(format!("tol-override: unknown key \"{other}\""))),
        };
        *slot = x;
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        for (name, v) in self.reals() {
            if !(v.is_finite() && v > 0.0) {
                return Err(CliError::Validation(format!("global.{name}: must be positive, got {v}")));
            }
        }
        if self.formats.is_empty() {
            return Err(CliError::Validation("global.formats: at least one format is required".into()));
        }
        Ok(())
    }
}

impl Default for Global {
    fn default() -> Self {
        toml::from_str("").expect("defaults deserialize")
    }
}

/// The `[metric]` block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricSpec {
    /// `constant_curvature`, `conformal` or `warped`.
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k0: Option<f64>,
    /// Conformal factor: `radial`, `half_plane` or `constant`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<String>,
    /// Warp profile: `flat`, `cosh`, `exp` or `flat_band`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    /// Half width of the flat band.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub half_width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    pub window: [f64; 4],
}

fn need(v: Option<f64>, key: &str) -> Result<f64, CliError> {
    v.ok_or_else(|| CliError::Validation(format!("metric.{key}: required for this metric kind")))
}

impl MetricSpec {
    /// Parses the inline form `constant:-1`, `warped:flat_band:1`, `conformal:radial:0.05`, ...
    pub fn parse_inline(spec: &str, window: [f64; 4]) -> Result<Self, CliError> {
        let parts: Vec<&str> = spec.split(':').map(str::trim).collect();
        let num = |i: usize| -> Result<Option<f64>, CliError> {
            parts
                .get(i)
                .map(|s| s.parse::<f64>().map_err(|_| CliError::Validation(format!("metric: \"{s}\" is not a number"))))
                .transpose()
        };
        let mut m = MetricSpec {
            kind: String::new(),
            k0: None,
            phi: None,
            profile: None,
            rate: None,
            a: None,
            c: None,
            half_width: None,
            kappa: None,
            window,
        };
        match parts[0] {
            "constant" | "constant_curvature" => {
                m.kind = "constant_curvature".into();
                m.k0 = num(1)?;
            }
            "warped" => {
                m.kind = "warped".into();
                let profile = parts.get(1).copied().unwrap_or("flat");
                m.profile = Some(profile.into());
                match profile {
                    "flat_band" => m.half_width = num(2)?,
                    _ => m.rate = num(2)?,
                }
            }
            "conformal" => {
                m.kind = "conformal".into();
                let phi = parts.get(1).copied().unwrap_or("");
                m.phi = Some(phi.into());
                match phi {
                    "radial" => m.a = num(2)?,
                    "constant" => m.c = num(2)?,
                    _ => {}
                }
            }
            other => return Err(CliError::Validation(format!("metric.kind: unknown metric kind \"{other}\""))),
        }
        Ok(m)
    }

    pub fn chart(&self) -> Result<Chart, CliError> {
        let w = self.window;
        let window = Window::new(w[0], w[1], w[2], w[3]);
        let kind = match self.kind.as_str() {
            "constant" | "constant_curvature" => ChartKind::ConstantCurvature { k0: need(self.k0, "k0")? },
            "conformal" => {
                let factor = match self.phi.as_deref() {
                    Some("radial") => ConformalFactor::Radial { a: need(self.a, "a")? },
                    Some("half_plane") => ConformalFactor::HalfPlane,
                    Some("constant") => ConformalFactor::Constant { c: need(self.c, "c")? },
                    Some(other) => return Err(CliError::Validation(format!("metric.phi: unknown conformal factor \"{other}\""))),
                    None => return Err(CliError::Validation("metric.phi: required for conformal metrics".into())),
                };
                ChartKind::Conformal { factor }
            }
            "warped" => {
                let warp = match self.profile.as_deref() {
                    Some("flat") => WarpProfile::Flat,
                    Some("cosh") => WarpProfile::Cosh { rate: need(self.rate, "rate")? },
                    Some("exp") => WarpProfile::Exp { rate: need(self.rate, "rate")? },
                    Some("flat_band") => WarpProfile::FlatBand { half_width: need(self.half_width, "half_width")? },
                    Some(other) => return Err(CliError::Validation(format!("metric.profile: unknown warp profile \"{other}\""))),
                    None => return Err(CliError::Validation("metric.profile: required for warped metrics".into())),
                };
                ChartKind::Warped { warp }
            }
            other => return Err(CliError::Validation(format!("metric.kind: unknown metric kind \"{other}\""))),
        };
        let chart = match self.kappa {
            Some(k) => MetricChart::new(kind, k, window),
            None => MetricChart::with_default_kappa(kind, window),
        };
        chart.map_err(|e| CliError::Validation(format!("metric: {e}")))
    }
}

/// A vector given as `[x, y, angle]` with the angle in the orthonormal frame.
pub type VectorSpec = [f64; 3];

/// A set of unit vectors: an explicit list or a grid over a region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VectorSet {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vectors: Option<Vec<VectorSpec>>,
    /// `[xmin, xmax, ymin, ymax]`; defaults to the metric window.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<[f64; 4]>,
    #[serde(default = "one")]
    pub nx: usize,
    #[serde(default = "one")]
    pub ny: usize,
    #[serde(default)]
    pub angle: f64,
    /// Directions per grid point, evenly spaced from `angle`.
    #[serde(default = "one")]
    pub n_angles: usize,
    /// Uniform jitter of grid points as a fraction of the cell size (seeded).
    #[serde(default)]
    pub jitter: f64,
}

fn one() -> usize {
    1
}

impl VectorSet {
    pub fn validate(&self, key: &str) -> Result<(), CliError> {
        if let Some(v) = &self.vectors {
            if v.is_empty() {
                return Err(CliError::Validation(format!("{key}.vectors: must not be empty")));
            }
            return Ok(());
        }
        if self.nx == 0 || self.ny == 0 || self.n_angles == 0 {
            return Err(CliError::Validation(format!("{key}: nx, ny and n_angles must be at least 1")));
        }
        if !(0.0..=1.0).contains(&self.jitter) {
            return Err(CliError::Validation(format!("{key}.jitter: must lie in [0, 1]")));
        }
        Ok(())
    }

    /// Expands to `[x, y, angle]` triples in row-major order (y, then x, then angle).
    pub fn expand(&self, window: &Window, seed: u64) -> Vec<VectorSpec> {
        if let Some(v) = &self.vectors {
            return v.clone();
        }
        let r = self.region.unwrap_or([window.xmin, window.xmax, window.ymin, window.ymax]);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coord = |lo: f64, hi: f64, i: usize, n: usize| {
            if n == 1 {
                0.5 * (lo + hi)
            } else {
                lo + (hi - lo) * i as f64 / (n - 1) as f64
            }
        };
        let cell = |lo: f64, hi: f64, n: usize| if n > 1 { (hi - lo) / (n - 1) as f64 } else { 0.0 };
        let (hx, hy) = (cell(r[0], r[1], self.nx), cell(r[2], r[3], self.ny));
        let mut out = Vec::with_capacity(self.nx * self.ny * self.n_angles);
        for j in 0..self.ny {
            for i in 0..self.nx {
                let mut x = coord(r[0], r[1], i, self.nx);
                let mut y = coord(r[2], r[3], j, self.ny);
                if self.jitter > 0.0 {
                    x = (x + self.jitter * hx * rng.gen_range(-0.5..0.5)).clamp(r[0], r[1]);
                    y = (y + self.jitter * hy * rng.gen_range(-0.5..0.5)).clamp(r[2], r[3]);
                }
                for k in 0..self.n_angles {
                    out.push([x, y, self.angle + TAU * k as f64 / self.n_angles as f64]);
                }
            }
        }
        out
    }
}

/// Pairs of vectors: explicit, or `count` random pairs with the second vector within
/// `radius` (base and angle) of the first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairSet {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pairs: Option<Vec<[VectorSpec; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<[f64; 4]>,
    #[serde(default)]
    pub count: usize,
    #[serde(default = "PairSet::default_radius")]
    pub radius: f64,
}

impl PairSet {
    fn default_radius() -> f64 {
        0.1
    }

    pub fn validate(&self, key: &str) -> Result<(), CliError> {
        match &self.pairs {
            Some(p) if p.is_empty() => Err(CliError::Validation(format!("{key}.pairs: must not be empty"))),
            Some(_) => Ok(()),
            None if self.count == 0 => Err(CliError::Validation(format!("{key}: give pairs or a positive count"))),
            None if self.radius.is_nan() || self.radius <= 0.0 => Err(CliError::Validation(format!("{key}.radius: must be positive"))),
            None => Ok(()),
        }
    }

    pub fn expand(&self, window: &Window, seed: u64) -> Vec<[VectorSpec; 2]> {
        if let Some(p) = &self.pairs {
            return p.clone();
        }
        let r = self.region.unwrap_or([window.xmin, window.xmax, window.ymin, window.ymax]);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..self.count)
            .map(|_| {
                let a = [rng.gen_range(r[0]..=r[1]), rng.gen_range(r[2]..=r[3]), rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI)];
                let mut d = [0.0; 3];
                for v in &mut d {
                    *v = self.radius * rng.gen_range(-1.0..1.0) / 3f64.sqrt();
                }
                [a, [a[0] + d[0], a[1] + d[1], a[2] + d[2]]]
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridParams {
    pub grid: VectorSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifyParams {
    pub grid: VectorSet,
    /// Lyapunov horizon reported per row.
    #[serde(default = "ClassifyParams::default_lyap_t")]
    pub lyap_t: f64,
}

impl ClassifyParams {
    fn default_lyap_t() -> f64 {
        20.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LyapunovParams {
    pub grid: VectorSet,
    pub horizons: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BusemannParams {
    pub theta: VectorSpec,
    /// `plus` or `minus`.
    #[serde(default = "BusemannParams::default_sign")]
    pub sign: String,
    /// Probe points (`points` or `probe_grid`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe_grid: Option<VectorSet>,
    /// Also traces the horocycle through `base(theta)` when positive.
    #[serde(default)]
    pub trace_halflength: f64,
    #[serde(default = "BusemannParams::default_step")]
    pub trace_step: f64,
}

impl BusemannParams {
    fn default_sign() -> String {
        "plus".into()
    }
    fn default_step() -> f64 {
        0.05
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StripParams {
    pub vectors: VectorSet,
    #[serde(default = "StripParams::default_halflength")]
    pub halflength: f64,
    /// Also writes the visited stable-trace points.
    #[serde(default)]
    pub trace: bool,
}

impl StripParams {
    fn default_halflength() -> f64 {
        2.5
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntropyParams {
    /// `[xmin, xmax, ymin, ymax]` of base points; defaults to the metric window.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<[f64; 4]>,
    pub nx: usize,
    pub ny: usize,
    #[serde(default)]
    pub angle: f64,
    pub epsilon: f64,
    pub n: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpansivityParams {
    pub pairs: PairSet,
    pub delta: f64,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BracketParams {
    pub pairs: PairSet,
    #[serde(default = "BracketParams::default_radius")]
    pub radius: f64,
    #[serde(default = "BracketParams::default_halflength")]
    pub halflength: f64,
}

impl BracketParams {
    fn default_radius() -> f64 {
        1.0
    }
    fn default_halflength() -> f64 {
        1.0
    }
}

/// One validated experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Pipeline {
    GreenSweep(GridParams),
    ClassifyGrid(ClassifyParams),
    BusemannProbe(BusemannParams),
    StripScan(StripParams),
    EntropyWindow(EntropyParams),
    ExpansivityPairs(ExpansivityParams),
    BracketPairs(BracketParams),
    LyapunovSweep(LyapunovParams),
}

impl Pipeline {
    pub fn kind(&self) -> &'static str {
        match self {
            Pipeline::GreenSweep(_) => "green_sweep",
            Pipeline::ClassifyGrid(_) => "classify_grid",
            Pipeline::BusemannProbe(_) => "busemann_probe",
            Pipeline::StripScan(_) => "strip_scan",
            Pipeline::EntropyWindow(_) => "entropy_window",
            Pipeline::ExpansivityPairs(_) => "expansivity_pairs",
            Pipeline::BracketPairs(_) => "bracket_pairs",
            Pipeline::LyapunovSweep(_) => "lyapunov_sweep",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Experiment {
    /// Output stem, relative to the output directory.
    pub output: String,
    pub pipeline: Pipeline,
}

/// Raw `[[experiments]]` entry before dispatch on `kind`.
#[derive(Debug, Deserialize)]
struct RawExperiment {
    kind: Option<String>,
    output: Option<String>,
    #[serde(flatten)]
    params: toml::Table,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    global: Option<Global>,
    metric: MetricSpec,
    #[serde(default)]
    experiments: Vec<RawExperiment>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub global: Global,
    pub metric: MetricSpec,
    pub experiments: Vec<Experiment>,
}

fn params<T: DeserializeOwned>(key: &str, table: toml::Table) -> Result<T, CliError> {
    T::deserialize(toml::Value::Table(table)).map_err(|e| CliError::Validation(format!("{key}: {}", e.to_string().trim())))
}

fn positive(key: &str, v: f64) -> Result<(), CliError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(CliError::Validation(format!("{key}: must be positive, got {v}")))
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        Self::from_toml_with(text, &[])
    }

    /// Parses, applies `KEY=VAL` overrides to `[global]` and validates.
    pub fn from_toml_with(text: &str, overrides: &[String]) -> Result<Self, CliError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| CliError::Validation(e.message().to_string()))?;
        let mut global = raw.global.unwrap_or_default();
        for o in overrides {
            global.apply_override(o)?;
        }
        let mut experiments = Vec::with_capacity(raw.experiments.len());
        for (i, e) in raw.experiments.into_iter().enumerate() {
            let key = format!("experiments[{i}]");
            let kind = e.kind.ok_or_else(|| CliError::Validation(format!("{key}.kind: missing")))?;
            let output = e.output.ok_or_else(|| CliError::Validation(format!("{key}.output: missing")))?;
            let p = e.params;
            let pipeline = match kind.as_str() {
                "green_sweep" => Pipeline::GreenSweep(params(&key, p)?),
                "classify_grid" => Pipeline::ClassifyGrid(params(&key, p)?),
                "busemann_probe" => Pipeline::BusemannProbe(params(&key, p)?),
                "strip_scan" => Pipeline::StripScan(params(&key, p)?),
                "entropy_window" => Pipeline::EntropyWindow(params(&key, p)?),
                "expansivity_pairs" => Pipeline::ExpansivityPairs(params(&key, p)?),
                "bracket_pairs" => Pipeline::BracketPairs(params(&key, p)?),
                "lyapunov_sweep" => Pipeline::LyapunovSweep(params(&key, p)?),
                other => {
                    return Err(CliError::Validation(format!(
                        "{key}.kind: unknown experiment kind \"{other}\" (expected one of {})",
                        KINDS.join(", ")
                    )))
                }
            };
            experiments.push(Experiment { output, pipeline });
        }
        let cfg = ExperimentConfig { global, metric: raw.metric, experiments };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path, overrides: &[String]) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml_with(&text, overrides)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.global.validate()?;
        self.metric.chart()?;
        let mut outputs = BTreeSet::new();
        for (i, e) in self.experiments.iter().enumerate() {
            let key = format!("experiments[{i}]");
            if e.output.is_empty() || e.output.contains("..") || Path::new(&e.output).is_absolute() {
                return Err(CliError::Validation(format!("{key}.output: \"{}\" is not a relative path", e.output)));
            }
            if !outputs.insert(e.output.as_str()) {
                return Err(CliError::Validation(format!("{key}.output: \"{}\" is used twice", e.output)));
            }
            match &e.pipeline {
                Pipeline::GreenSweep(p) => p.grid.validate(&format!("{key}.grid"))?,
                Pipeline::ClassifyGrid(p) => {
                    p.grid.validate(&format!("{key}.grid"))?;
                    positive(&format!("{key}.lyap_t"), p.lyap_t)?;
                }
                Pipeline::LyapunovSweep(p) => {
                    p.grid.validate(&format!("{key}.grid"))?;
                    if p.horizons.is_empty() {
                        return Err(CliError::Validation(format!("{key}.horizons: must not be empty")));
                    }
                    for &t in &p.horizons {
                        positive(&format!("{key}.horizons"), t)?;
                    }
                }
                Pipeline::BusemannProbe(p) => {
                    if p.sign != "plus" && p.sign != "minus" {
                        return Err(CliError::Validation(format!("{key}.sign: expected plus or minus, got \"{}\"", p.sign)));
                    }
                    match (&p.points, &p.probe_grid) {
                        (None, None) if p.trace_halflength == 0.0 => {
                            return Err(CliError::Validation(format!("{key}: give points, probe_grid or trace_halflength")))
                        }
                        (_, Some(g)) => g.validate(&format!("{key}.probe_grid"))?,
                        _ => {}
                    }
                    if p.trace_halflength < 0.0 {
                        return Err(CliError::Validation(format!("{key}.trace_halflength: must be nonnegative")));
                    }
                    positive(&format!("{key}.trace_step"), p.trace_step)?;
                }
                Pipeline::StripScan(p) => {
                    p.vectors.validate(&format!("{key}.vectors"))?;
                    positive(&format!("{key}.halflength"), p.halflength)?;
                }
                Pipeline::EntropyWindow(p) => {
                    if p.nx == 0 || p.ny == 0 {
                        return Err(CliError::Validation(format!("{key}: nx and ny must be at least 1")));
                    }
                    positive(&format!("{key}.epsilon"), p.epsilon)?;
                    if p.n.is_empty() || p.n.contains(&0) {
                        return Err(CliError::Validation(format!("{key}.n: must be a nonempty list of positive horizons")));
                    }
                }
                Pipeline::ExpansivityPairs(p) => {
                    p.pairs.validate(&format!("{key}.pairs"))?;
                    positive(&format!("{key}.delta"), p.delta)?;
                    positive(&format!("{key}.t"), p.t)?;
                }
                Pipeline::BracketPairs(p) => {
                    p.pairs.validate(&format!("{key}.pairs"))?;
                    positive(&format!("{key}.radius"), p.radius)?;
                    positive(&format!("{key}.halflength"), p.halflength)?;
                }
            }
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form of the validated configuration.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    /// Seed of experiment `index`: the global seed mixed with the output stem.
    pub fn experiment_seed(&self, index: usize) -> u64 {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update(self.global.seed.to_le_bytes());
        h.update(self.experiments[index].output.as_bytes());
        let d = h.finalize();
        u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
    }
}
