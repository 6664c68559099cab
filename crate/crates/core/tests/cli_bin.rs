//! End-to-end checks of the `waveplate` binary: exit codes, artifact layout,
//! and byte-level determinism of the CSV ledger.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_waveplate")
}

fn tmp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("waveplate_clitest_{}_{tag}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn tiny_config() -> String {
    serde_json::json!({
        "geometry": { "mode": "reduced-2d", "dims": [16, 16] },
        "params": {
            "p": 2.0, "q": 2.0,
            "damping_u": { "near_exp": 1.0, "far_exp": 1.0, "coeff": 1.0 },
            "damping_w": { "near_exp": 1.0, "far_exp": 1.0, "coeff": 1.0 },
            "source_scale_f": 1.0, "source_scale_h": 1.0
        },
        "initial": { "shape": "gaussian-bump", "amplitude": 1.0, "auto_scale_into_well": true },
        "time": { "t_end": 1.0 },
        "seed": 11,
        "outputs": {},
        "well": { "restarts": 4, "depth_directions": 8 }
    })
    .to_string()
}

fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .output()
        .expect("binary runs")
}

#[test]
fn validate_accepts_and_rejects() {
    let dir = tmp_dir("validate");
    let cfg = dir.join("config.json");
    std::fs::write(&cfg, tiny_config()).unwrap();

    let out = run(&["validate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    // p = 3 with m = 1 sits on the parameter gate: exit 2 naming it.
    let out = run(&[
        "validate",
        "--config",
        cfg.to_str().unwrap(),
        "--override",
        "params.p=3",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("p(m+1)/m < 6"), "{stdout}");

    // Missing seed is a schema rejection.
    let mut v: serde_json::Value = serde_json::from_str(&tiny_config()).unwrap();
    v.as_object_mut().unwrap().remove("seed");
    let bad = dir.join("noseed.json");
    std::fs::write(&bad, v.to_string()).unwrap();
    let out = run(&["validate", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn simulate_artifacts_and_determinism() {
    let dir = tmp_dir("simulate");
    let cfg = dir.join("config.json");
    std::fs::write(&cfg, tiny_config()).unwrap();

    let out1 = dir.join("run1");
    let out2 = dir.join("run2");
    for out_dir in [&out1, &out2] {
        let out = run(&[
            "simulate",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert_eq!(
            out.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        assert!(out_dir.join("ledger.csv").exists());
        assert!(out_dir.join("report.json").exists());
    }
    let a = std::fs::read(out1.join("ledger.csv")).unwrap();
    let b = std::fs::read(out2.join("ledger.csv")).unwrap();
    assert_eq!(a, b, "same config + seed must give byte-identical ledgers");

    let header = String::from_utf8_lossy(&a);
    assert!(header.starts_with("t,E,calE,J,D,residual,label\n"));

    // A too-large step is rejected up front with the validation exit code.
    let out = run(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--override",
        "time.dt=1.0",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("stability bound"), "{stderr}");

    // A run that blows up (unstable-side datum, source outrunning the
    // damping) exits with the instability code and names the last good time.
    let out = run(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--override",
        "initial.auto_scale_into_well=false",
        "--override",
        "initial.amplitude=500.0",
        "--override",
        "params.p=2.5",
        "--override",
        "params.q=2.5",
    ]);
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("last good t"), "{stderr}");

    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn decay_reuses_ledger_and_reports_branch() {
    let dir = tmp_dir("decay");
    let cfg = dir.join("config.json");
    std::fs::write(&cfg, tiny_config()).unwrap();
    let out_dir = dir.join("out");

    let out = run(&[
        "decay",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(out_dir.join("ledger.csv").exists());
    assert!(out_dir.join("decay.csv").exists());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("report.json")).unwrap())
            .unwrap();
    assert_eq!(report["profile"]["branch"], "Exponential");
    assert!(report["fit"]["rate"].as_f64().unwrap() > 0.0);

    // Second invocation reuses the existing ledger (mtime unchanged).
    let before = std::fs::metadata(out_dir.join("ledger.csv"))
        .unwrap()
        .modified()
        .unwrap();
    let out = run(&[
        "decay",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let after = std::fs::metadata(out_dir.join("ledger.csv"))
        .unwrap()
        .modified()
        .unwrap();
    assert_eq!(before, after, "decay must reuse a completed ledger");

    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn sweep_isolates_runs() {
    let dir = tmp_dir("sweep");
    let cfg = dir.join("config.json");
    std::fs::write(&cfg, tiny_config()).unwrap();
    let out_root = dir.join("sweep");

    let out = run(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_root.to_str().unwrap(),
        "--vary",
        "initial.amplitude=0.5,1.0",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(out_root.join("index.json").exists());
    let index: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_root.join("index.json")).unwrap())
            .unwrap();
    let entries = index["entries"].as_array().unwrap();
    assert_eq!(entries.len(), 2);
    for entry in entries {
        assert_eq!(entry["ok"], true);
        let run_dir = Path::new(entry["dir"].as_str().unwrap());
        assert!(run_dir.join("ledger.csv").exists());
        assert!(run_dir.join("report.json").exists());
    }

    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn snapshot_and_plot_script_emission() {
    let dir = tmp_dir("artifacts");
    let mut v: serde_json::Value = serde_json::from_str(&tiny_config()).unwrap();
    v["outputs"] = serde_json::json!({
        "snapshot": "state_final.json",
        "plot_script": "plot.py"
    });
    let cfg = dir.join("config.json");
    std::fs::write(&cfg, v.to_string()).unwrap();
    let out_dir = dir.join("out");

    let out = run(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let snap: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("state_final.json")).unwrap())
            .unwrap();
    assert_eq!(snap["dims"], serde_json::json!([16, 16]));
    assert!(snap["u"].as_array().unwrap().len() == 256);
    let plot = std::fs::read_to_string(out_dir.join("plot.py")).unwrap();
    assert!(plot.contains("ledger.csv"));

    std::fs::remove_dir_all(&dir).ok();
}
