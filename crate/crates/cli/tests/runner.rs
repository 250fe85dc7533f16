use std::path::Path;
use std::process::Command;

use geoflow_cli::config::{Format, VectorSet};
use geoflow_cli::table::{Provenance, ResultTable, Value};
use geoflow_cli::{emit_report, run_experiment, CliError, ExperimentConfig, TrajectoryCache};
use proptest::prelude::*;

const GREEN: &str = r#"
[metric]
kind = "constant_curvature"
k0 = -1.0
window = [-1.0, 1.0, -1.0, 1.0]

[[experiments]]
kind = "green_sweep"
output = "green"
grid = { nx = 10, ny = 10, angle = 0.4 }
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_geoflow"))
}

fn provenance() -> Provenance {
    Provenance {
        config_hash: "h".into(),
        artifact_version: "0".into(),
        experiment: "t".into(),
        kind: "green_sweep".into(),
        wall_clock_s: 0.0,
    }
}

#[test]
fn green_sweep_on_the_hyperbolic_plane() {
    let cfg = ExperimentConfig::from_toml(GREEN).unwrap();
    let out = run_experiment(&cfg, &TrajectoryCache::disabled()).unwrap();
    assert_eq!(out.exit_code(), 0);
    let t = &out.tables[0];
    assert_eq!(t.rows.len(), 100);
    for g in t.numbers("gap") {
        assert!((g.unwrap() - 2.0).abs() < 1e-6);
    }
}

#[test]
fn unknown_kind_is_named() {
    let err = ExperimentConfig::from_toml(&GREEN.replace("green_sweep", "foo")).unwrap_err();
    assert!(matches!(&err, CliError::Validation(m) if m.contains("\"foo\"")), "{err}");
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, GREEN.replace("green_sweep", "foo")).unwrap();
    let o = bin().arg("run").arg("--config").arg(&path).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("foo"));
}

#[test]
fn empty_experiment_list_succeeds() {
    let text = GREEN.split("[[experiments]]").next().unwrap();
    let cfg = ExperimentConfig::from_toml(text).unwrap();
    let out = run_experiment(&cfg, &TrajectoryCache::disabled()).unwrap();
    assert!(out.tables.is_empty() && out.exit_code() == 0);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.toml");
    std::fs::write(&path, text).unwrap();
    let o = bin().arg("run").arg("--config").arg(&path).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn validation_names_the_offending_key() {
    let cases = [
        (GREEN.replace("nx = 10", "nx = 10, bogus = 1"), "bogus"),
        (format!("[global]\ntol = -1.0\n{GREEN}"), "global.tol"),
        (GREEN.replace("k0 = -1.0", "k0 = 1.0"), "metric"),
        (format!("{GREEN}\n[[experiments]]\nkind = \"green_sweep\"\noutput = \"green\"\ngrid = {{ nx = 1 }}\n"), "used twice"),
    ];
    for (text, needle) in cases {
        match ExperimentConfig::from_toml(&text) {
            Err(CliError::Validation(m)) => assert!(m.contains(needle), "{needle}: {m}"),
            other => panic!("{needle}: {other:?}"),
        }
    }
    let err = ExperimentConfig::from_toml_with(GREEN, &["nope=1".into()]).unwrap_err();
    assert!(matches!(&err, CliError::Validation(m) if m.contains("nope")));
    let cfg = ExperimentConfig::from_toml_with(GREEN, &["tol=1e-6".into()]).unwrap();
    assert_eq!(cfg.global.tol, 1e-6);
}

#[test]
fn reports_in_every_format() {
    let dir = tempfile::tempdir().unwrap();
    let mut t = ResultTable::new("one", &["x", "gap"], provenance());
    t.push(vec![Value::Float(0.5), Value::Float(2.0)]);
    let files = emit_report(std::slice::from_ref(&t), Format::Csv, dir.path()).unwrap();
    let csv = std::fs::read_to_string(&files[0]).unwrap();
    assert_eq!(csv, "x,gap\n0.5,2.0\n");
    let files = emit_report(std::slice::from_ref(&t), Format::Json, dir.path()).unwrap();
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&files[0]).unwrap()).unwrap();
    for key in ["schema", "rows", "provenance"] {
        assert!(json.get(key).is_some(), "{key}");
    }

    let text = r#"
[metric]
kind = "constant_curvature"
k0 = -1.0
window = [-1.0, 1.0, -1.0, 1.0]

[[experiments]]
kind = "entropy_window"
output = "entropy"
region = [-1.0, 1.0, 0.0, 0.0]
nx = 401
ny = 1
angle = 1.5707963267948966
epsilon = 0.1
n = [2, 3, 4]
"#;
    let cfg = ExperimentConfig::from_toml(text).unwrap();
    let out = run_experiment(&cfg, &TrajectoryCache::disabled()).unwrap();
    let files = emit_report(&out.tables, Format::Plotdata, dir.path()).unwrap();
    let dat = std::fs::read_to_string(&files[0]).unwrap();
    let counts = out.tables[0].numbers("count");
    let lines: Vec<&str> = dat.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(lines.len(), 3);
    for (line, (n, c)) in lines.iter().zip([2.0, 3.0, 4.0].iter().zip(counts)) {
        let v: Vec<f64> = line.split_whitespace().map(|s| s.parse().unwrap()).collect();
        assert_eq!(v[0], *n);
        assert!((v[1] - c.unwrap().ln()).abs() < 1e-12);
    }
    let summary = out.tables[0].summary.as_ref().unwrap();
    for key in ["window", "epsilon", "n", "counts", "slope", "dropped"] {
        assert!(summary.get(key).is_some(), "{key}");
    }
}

#[test]
fn report_subcommand_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("c.toml");
    std::fs::write(&cfg_path, format!("[global]\nformats = [\"csv\", \"json\"]\n{GREEN}")).unwrap();
    let first = dir.path().join("first");
    let o = bin().arg("run").arg("--config").arg(&cfg_path).arg("--out").arg(&first).output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let second = dir.path().join("second");
    let o = bin().args(["report", "--format", "csv", "--input"]).arg(&first).arg("--out").arg(&second).output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    let a = std::fs::read(first.join("green.csv")).unwrap();
    let b = std::fs::read(second.join("green.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn cached_and_cold_runs_agree() {
    let text = format!(
        "{GREEN}\n[[experiments]]\nkind = \"classify_grid\"\noutput = \"classes\"\nlyap_t = 10.0\ngrid = {{ nx = 4, ny = 3, n_angles = 2, jitter = 0.5 }}\n"
    );
    let cfg = ExperimentConfig::from_toml(&text).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let csv = |out: &geoflow_cli::RunOutcome| out.tables.iter().map(|t| t.to_csv().unwrap()).collect::<Vec<_>>();
    let plain = run_experiment(&cfg, &TrajectoryCache::disabled()).unwrap();
    let cache = TrajectoryCache::at(dir.path());
    let cold = run_experiment(&cfg, &cache).unwrap();
    assert_eq!(cache.hits_and_misses().0, 0);
    let warm_cache = TrajectoryCache::at(dir.path());
    let warm = run_experiment(&cfg, &warm_cache).unwrap();
    let (hits, misses) = warm_cache.hits_and_misses();
    assert!(hits == 124 && misses == 0, "{hits} hits, {misses} misses");
    assert_eq!(csv(&plain), csv(&cold));
    assert_eq!(csv(&cold), csv(&warm));
}

#[test]
fn unconverged_rows_exit_with_three() {
    let text = r#"
[metric]
kind = "conformal"
phi = "radial"
a = 0.05
window = [-2.0, 2.0, -2.0, 2.0]

[[experiments]]
kind = "green_sweep"
output = "radial"
grid = { vectors = [[0.5, 0.5, 0.3]] }
"#;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("radial.toml");
    std::fs::write(&path, text).unwrap();
    let o = bin().arg("run").arg("--config").arg(&path).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(o.status.code(), Some(3));
    assert!(std::fs::read_to_string(dir.path().join("radial.csv")).unwrap().contains("false"));
}

#[test]
fn unwritable_output_exits_with_four() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.toml");
    std::fs::write(&path, GREEN).unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    let o = bin().arg("run").arg("--config").arg(&path).arg("--out").arg(blocker.join("sub")).output().unwrap();
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn inline_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let out = |args: &[&str]| {
        let o = bin().args(args).arg("--out").arg(dir.path()).output().unwrap();
        (o.status.code(), String::from_utf8_lossy(&o.stdout).into_owned())
    };
    let (code, text) = out(&["green", "--theta", "0,0,0.5", "--metric", "constant:-4", "--window=-1,1,-1,1"]);
    assert_eq!(code, Some(0));
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert!((row[6].parse::<f64>().unwrap() - 4.0).abs() < 1e-6, "{text}");

    let (code, _) = out(&["busemann", "--theta", "0,0,1.5707963267948966", "--metric", "warped:exp:1", "--window=-3,3,-2,2", "--halflength", "0.5"]);
    assert_eq!(code, Some(0));
    let trace = std::fs::read_to_string(dir.path().join("busemann_trace.csv")).unwrap();
    assert!(trace.starts_with("s,x,y,nx,ny,b_plus,b_minus\n"));
    for line in trace.lines().skip(1) {
        let y: f64 = line.split(',').nth(2).unwrap().parse().unwrap();
        assert!(y.abs() < 1e-5, "{line}");
    }

    let (code, text) = out(&["expansivity", "--theta", "0,0,0", "--eta", "0,0.5,0", "--delta", "0.6", "--t", "10", "--metric", "warped:flat_band:1", "--window=-20,20,-5,5"]);
    assert_eq!(code, Some(0));
    assert!(text.contains("strip_mates"), "{text}");

    let (code, _) = out(&["green", "--theta", "0,0", "--metric", "constant:-1"]);
    assert_eq!(code, Some(2));
}

fn same_files(a: &Path, b: &Path, names: &[&str]) {
    for n in names {
        assert_eq!(std::fs::read(a.join(n)).unwrap(), std::fs::read(b.join(n)).unwrap(), "{n}");
    }
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.toml");
    let text = format!(
        "[global]\nseed = 11\n{GREEN}\n[[experiments]]\nkind = \"expansivity_pairs\"\noutput = \"pairs\"\ndelta = 0.1\nt = 3.0\npairs = {{ count = 4, radius = 0.05 }}\n"
    );
    std::fs::write(&path, text).unwrap();
    for run in ["a", "b"] {
        let o = bin()
            .arg("run")
            .arg("--config")
            .arg(&path)
            .arg("--out")
            .arg(dir.path().join(run))
            .env("GEOFLOW_CACHE_DIR", dir.path().join(format!("cache-{run}")))
            .output()
            .unwrap();
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    same_files(&dir.path().join("a"), &dir.path().join("b"), &["green.csv", "pairs.csv"]);
    assert!(std::fs::read_dir(dir.path().join("cache-a")).unwrap().count() == 100);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn grids_expand_deterministically(nx in 1usize..6, ny in 1usize..6, k in 1usize..4, jitter in 0.0..1.0f64, seed in any::<u64>()) {
        let g = VectorSet { vectors: None, region: None, nx, ny, angle: 0.2, n_angles: k, jitter };
        let w = geoflow::Window::new(-1.0, 2.0, 0.0, 1.0);
        let a = g.expand(&w, seed);
        prop_assert_eq!(a.len(), nx * ny * k);
        prop_assert_eq!(&a, &g.expand(&w, seed));
        for v in &a {
            prop_assert!(w.contains([v[0], v[1]]));
        }
    }

    #[test]
    fn rows_keep_the_schema_arity(cells in prop::collection::vec(prop::collection::vec(-1e3..1e3f64, 3), 0..8)) {
        let mut t = ResultTable::new("p", &["a", "b", "c"], provenance());
        for r in &cells {
            t.push(r.iter().map(|&x| Value::Float(x)).collect());
        }
        prop_assert!(t.is_well_formed());
        let csv = t.to_csv().unwrap();
        prop_assert_eq!(csv.lines().count(), cells.len() + 1);
        for (line, r) in csv.lines().skip(1).zip(&cells) {
            let back: Vec<f64> = line.split(',').map(|s| s.parse().unwrap()).collect();
            prop_assert_eq!(&back, r);
        }
    }
}
