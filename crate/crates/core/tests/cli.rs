use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const PAIR: &str = r#"{
    "sigma": -1,
    "background": [{"type": "constant", "value": 1.0},
                   {"type": "traveling", "direction": "minus",
                    "profile": {"shape": "sinusoid", "amplitude": 0.3, "k": 1.0}}],
    "solution": {"family": "collision", "branch": 1},
    "grid": {"s_min": 0, "s_max": 6.283185307179586, "n_s": 128, "dt": 0.02, "t_final": 0.2,
             "output_every": 5}
}"#;

struct Run {
    out: PathBuf,
    output: Output,
}

impl Run {
    fn code(&self) -> Option<i32> {
        self.output.status.code()
    }

    fn stderr(&self) -> String {
        String::from_utf8_lossy(&self.output.stderr).into_owned()
    }

    fn manifest(&self) -> Value {
        let text = std::fs::read_to_string(self.out.join("manifest.json")).expect("manifest written");
        serde_json::from_str(&text).unwrap()
    }

    fn file(&self, name: &str) -> String {
        std::fs::read_to_string(self.out.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
    }
}

fn gstrand(dir: &Path, tag: &str, command: &str, config: &str, extra: &[&str]) -> Run {
    let cfg = dir.join(format!("{tag}.json"));
    std::fs::write(&cfg, config).unwrap();
    let out = dir.join(tag);
    let mut args = vec![command, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let output = Command::new(env!("CARGO_BIN_EXE_gstrand")).args(&args).output().unwrap();
    Run { out, output }
}

fn with_key(config: &str, key: &str, value: &str) -> String {
    config.replacen('{', &format!("{{\"{key}\": {value},"), 1)
}

#[test]
fn simulate_writes_csvs_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let r = gstrand(dir.path(), "sim", "simulate", PAIR, &["--strict"]);
    assert_eq!(r.code(), Some(0), "{}", r.stderr());

    let traj = r.file("trajectory.csv");
    let mut lines = traj.lines();
    assert_eq!(lines.next(), Some("t,s,a,Q,M,N"));
    // 11 steps stored every 5th plus the initial state: t = 0, 0.1, 0.2.
    assert_eq!(lines.count(), 3 * 128 * 2);
    let row: Vec<&str> = traj.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "0.0000000000000000e0");
    assert_eq!(row[2], "1");
    assert!(r.file("monitor.csv").starts_with("t,constraint_max,momentum_integral,n_charge,min_separation\n"));

    let m = r.manifest();
    assert_eq!(m["status"], "pass");
    assert_eq!(m["command"], "simulate");
    assert_eq!(m["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(m["config"]["grid"]["n_s"], 128);
    assert!(m["started_at"].as_str().unwrap() <= m["finished_at"].as_str().unwrap());
    let checks = m["checks"].as_array().unwrap();
    assert!(checks.iter().any(|c| c["name"] == "relative_error" && c["tolerance"] == 1e-3 && c["passed"] == true));
    assert!(m["monitors"]["constraint_max"].as_f64().unwrap() < 1e-3);
}

#[test]
fn sigma_plus_simulate_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"sigma": 1, "background": [{"type": "harmonic_poly", "degree": 2, "part": "im", "coefficient": 1.0}],
                 "grid": {"s_min": -1, "s_max": 1, "n_s": 21, "dt": 0.01, "t_final": 0.1}}"#;
    let r = gstrand(dir.path(), "plus", "simulate", cfg, &[]);
    assert_eq!(r.code(), Some(2));
    assert!(r.stderr().contains("sigma=+1 evolution is ill-posed; use verify"));
    assert_eq!(r.manifest()["status"], "config_error");
}

#[test]
fn unknown_keys_warn_or_reject() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = with_key(PAIR, "colour", "\"blue\"");
    let strict = gstrand(dir.path(), "strict", "simulate", &cfg, &["--strict"]);
    assert_eq!(strict.code(), Some(2));
    assert!(strict.stderr().contains("colour"), "{}", strict.stderr());
    let lax = gstrand(dir.path(), "lax", "simulate", &cfg, &[]);
    assert_eq!(lax.code(), Some(0), "{}", lax.stderr());
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let no_grid = r#"{"background": [{"type": "constant", "value": 1.0}]}"#;
    let r = gstrand(dir.path(), "nogrid", "simulate", no_grid, &[]);
    assert_eq!(r.code(), Some(2));
    assert!(r.manifest()["error"].as_str().unwrap().contains("grid"));

    let r = gstrand(dir.path(), "json", "simulate", "{ not json", &[]);
    assert_eq!(r.code(), Some(2));

    let missing = Command::new(env!("CARGO_BIN_EXE_gstrand"))
        .args(["simulate", "--config", dir.path().join("absent.json").to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn blow_up_is_a_numerical_abort() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = PAIR.replace("\"output_every\": 5", "\"output_every\": 5, \"blowup_limit\": 0.5");
    let r = gstrand(dir.path(), "blow", "simulate", &cfg, &["--strict"]);
    assert_eq!(r.code(), Some(3), "{}", r.stderr());
    assert_eq!(r.manifest()["status"], "numerical_abort");
}

#[test]
fn verify_snapshot_accepts_simulation_and_rejects_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let sim = gstrand(dir.path(), "sim", "simulate", PAIR, &[]);
    assert_eq!(sim.code(), Some(0));
    let good = sim.out.join("trajectory.csv");
    let snap = |path: &Path| {
        format!(
            r#"{{"snapshot": "{}", "grid": {{"s_min": 0, "s_max": 6.283185307179586, "n_s": 128, "t_final": 0.2}}}}"#,
            path.display()
        )
    };
    let ok = gstrand(dir.path(), "good", "verify", &snap(&good), &["--strict"]);
    assert_eq!(ok.code(), Some(0), "{}", ok.stderr());

    // Shift every Q¹ in the last snapshot by a smooth bump in s.
    let text = std::fs::read_to_string(&good).unwrap();
    let mut out = String::new();
    for line in text.lines() {
        let f: Vec<&str> = line.split(',').collect();
        if f[0] == "2.0000000000000001e-1" && f[2] == "1" {
            let s: f64 = f[1].parse().unwrap();
            let q: f64 = f[3].parse::<f64>().unwrap() + 0.05 * s.sin();
            out.push_str(&format!("{},{},{},{:.16e},{},{}\n", f[0], f[1], f[2], q, f[4], f[5]));
        } else {
            out.push_str(line);
            out.push('\n');
        }
    }
    assert_ne!(out, text);
    let bad_path = dir.path().join("bad.csv");
    std::fs::write(&bad_path, out).unwrap();
    let bad = gstrand(dir.path(), "bad", "verify", &snap(&bad_path), &[]);
    assert_eq!(bad.code(), Some(1));
    let m = bad.manifest();
    assert_eq!(m["status"], "fail");
    assert!(m["checks"].as_array().unwrap().iter().any(|c| c["passed"] == false));
}

#[test]
fn other_commands_pass() {
    let dir = tempfile::tempdir().unwrap();
    let analytic = PAIR.replace("\"family\": \"collision\", \"branch\": 1", "\"family\": \"single\"");
    let cases: [(&str, &str, String, &str); 5] = [
        ("analytic", "analytic", analytic, "trajectory.csv"),
        ("collision", "collision", PAIR.to_string(), "trajectory.csv"),
        (
            "verify",
            "verify",
            r#"{"sigma": 1, "background": [{"type": "plane_harmonic", "amplitude": 0.5, "k": 1.0, "trig": "cos"}],
                "grid": {"s_min": -1, "s_max": 1, "n_s": 41, "t_final": 1, "boundary": "clamped", "refine": true},
                "output": {"x_grid": {"min": -3, "max": 3, "n": 13}}}"#
                .to_string(),
            "fields.csv",
        ),
        (
            "ch",
            "ch",
            r#"{"ch": {"q": [-2.0, 2.0], "m": [2.0, 1.0], "dt": 0.01, "t_final": 2.0, "output_every": 50}}"#.to_string(),
            "ch.csv",
        ),
        (
            "complex",
            "complex-verify",
            r#"{"background": [{"type": "constant", "value": 1.5},
                               {"type": "plane_harmonic", "amplitude": 0.3, "k": 1.0, "trig": "cos"}],
                "solution": {"family": "collision"},
                "complex": {"variant": "B", "grid": {"xi_min": 0, "xi_max": 1, "eta_min": -0.4, "eta_max": 0.4,
                                                     "n_xi": 81, "n_eta": 81}}}"#
                .to_string(),
            "complex.csv",
        ),
    ];
    for (tag, command, cfg, file) in cases {
        let r = gstrand(dir.path(), tag, command, &cfg, &["--strict"]);
        assert_eq!(r.code(), Some(0), "{command}: {}", r.stderr());
        assert!(r.out.join(file).exists(), "{command}: {file}");
    }
    let complex = std::fs::read_to_string(dir.path().join("complex/complex.csv")).unwrap();
    assert!(complex.starts_with("xi,eta,a,Q,ReM,ImM\n"));
    let fields = std::fs::read_to_string(dir.path().join("verify/fields.csv")).unwrap();
    assert_eq!(fields.lines().count(), 14);
    assert!(fields.starts_with("x,u,v\n"));
}

#[test]
fn repeated_runs_are_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let seq = with_key(PAIR, "execution", "\"sequential\"");
    let a = gstrand(dir.path(), "a", "simulate", &seq, &[]);
    let b = gstrand(dir.path(), "b", "simulate", &seq, &[]);
    let c = gstrand(dir.path(), "c", "simulate", PAIR, &[]);
    for name in ["trajectory.csv", "monitor.csv"] {
        assert_eq!(a.file(name), b.file(name));
        assert_eq!(a.file(name), c.file(name));
    }
}
