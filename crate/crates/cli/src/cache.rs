//! Content-addressed trajectory cache: CSV files with columns `t,x,y,vx,vy,K`.
//!
//! Values are written in round-trip exact form, so a cached trajectory rebuilds the same
//! nodes (and the same dense output) as the integration that produced it.

use std::path::{Path, PathBuf};
use std::sync::Mutex;

use geoflow::geodesic::{integrate_geodesic, GeodesicTrajectory, UnitTangentVector};
use geoflow::{Chart, Steps, Trajectory};
use sha2::{Digest, Sha256};

use crate::error::CliError;
use crate::table::Value;

pub const CACHE_ENV: &str = "GEOFLOW_CACHE_DIR";

#[derive(Debug, Default)]
pub struct CacheStats {
    pub hits: usize,
    pub misses: usize,
}

pub struct TrajectoryCache {
    dir: Option<PathBuf>,
    write_lock: Mutex<()>,
    stats: Mutex<CacheStats>,
}

impl TrajectoryCache {
    /// A cache rooted at `dir`.
    pub fn at(dir: impl Into<PathBuf>) -> Self {
        Self { dir: Some(dir.into()), write_lock: Mutex::new(()), stats: Mutex::new(CacheStats::default()) }
    }

    /// A pass-through cache that always integrates.
    pub fn disabled() -> Self {
        Self { dir: None, write_lock: Mutex::new(()), stats: Mutex::new(CacheStats::default()) }
    }

    /// `$GEOFLOW_CACHE_DIR` if set, else `fallback`.
    pub fn from_env(fallback: &Path) -> Self {
        match std::env::var_os(CACHE_ENV) {
            Some(d) if !d.is_empty() => Self::at(PathBuf::from(d)),
            _ => Self::at(fallback),
        }
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn hits_and_misses(&self) -> (usize, usize) {
        let s = self.stats.lock().expect("cache stats lock");
        (s.hits, s.misses)
    }

    /// Key of `(chart, theta0, t_span, step control)`.
    pub fn key(chart: &Chart, theta: &UnitTangentVector<f64>, span: (f64, f64), ctrl: &Steps) -> String {
        let chart_json = serde_json::to_string(chart).expect("charts serialize");
        let text = format!("{chart_json}|{:?}|{:?}|{:?}|{ctrl:?}", theta.base, theta.dir, span);
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    /// Returns the trajectory from the cache, integrating and storing it on a miss.
    pub fn trajectory(&self, chart: &Chart, theta: &UnitTangentVector<f64>, span: (f64, f64)) -> Result<Trajectory, CliError> {
        let ctrl = Steps::default();
        let Some(dir) = &self.dir else {
            return Ok(integrate_geodesic(chart, theta, span, ctrl)?);
        };
        let theta = UnitTangentVector::new(chart, theta.base, theta.dir)?;
        let path = dir.join(format!("{}.csv", Self::key(chart, &theta, span, &ctrl)));
        if let Ok(text) = std::fs::read_to_string(&path) {
            if let Some(t) = parse(chart, theta, &text) {
                self.stats.lock().expect("cache stats lock").hits += 1;
                return Ok(t);
            }
        }
        let traj = integrate_geodesic(chart, &theta, span, ctrl)?;
        self.stats.lock().expect("cache stats lock").misses += 1;
        let _guard = self.write_lock.lock().expect("cache write lock");
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        std::fs::write(&tmp, render(&traj)).map_err(|e| CliError::Io(format!("{}: {e}", tmp.display())))?;
        std::fs::rename(&tmp, &path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Ok(traj)
    }
}

fn render(traj: &GeodesicTrajectory<f64>) -> String {
    let mut out = format!("# truncated={}\nt,x,y,vx,vy,K\n", traj.truncated);
    for s in &traj.samples {
        let cells = [s.t, s.state[0], s.state[1], s.state[2], s.state[3], s.curvature];
        let line: Vec<String> = cells.iter().map(|&v| Value::Float(v).render()).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

fn parse(chart: &Chart, theta: UnitTangentVector<f64>, text: &str) -> Option<Trajectory> {
    let mut lines = text.lines();
    let truncated = match lines.next()?.strip_prefix("# truncated=")? {
        "true" => true,
        "false" => false,
        _ => return None,
    };
    if lines.next()? != "t,x,y,vx,vy,K" {
        return None;
    }
    let mut nodes = Vec::new();
    for line in lines {
        let v: Vec<f64> = line.split(',').map(|c| c.parse().ok()).collect::<Option<_>>()?;
        if v.len() != 6 {
            return None;
        }
        nodes.push((v[0], [v[1], v[2], v[3], v[4]]));
    }
    GeodesicTrajectory::from_nodes(chart, theta, &nodes, truncated).ok()
}
