use std::path::Path;
use std::process::{Command, Output};

fn episde(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_episde"))
        .args(args)
        .env_remove("EPISDE_SEED")
        .output()
        .expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_lists_flags_with_defaults_for_every_subcommand() {
    for sub in ["simulate", "figures", "compare", "stability", "chance"] {
        let out = episde(&[sub, "--help"]);
        assert_eq!(out.status.code(), Some(0), "{sub}");
        let text = String::from_utf8(out.stdout).unwrap();
        for flag in [
            "--benchmark",
            "--paths",
            "--T",
            "--steps",
            "--seed",
            "--workers",
            "--config",
        ] {
            assert!(text.contains(flag), "{sub} help lacks {flag}");
        }
        assert!(text.contains("[default: 10000]"), "{sub}");
        assert!(text.contains("[default: both]"), "{sub}");
    }
    assert_eq!(episde(&["--help"]).status.code(), Some(0));
}

#[test]
fn simulate_tags_paths_by_semantics_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let base = [
        "simulate",
        "--benchmark",
        "scalar-drift",
        "--semantics",
        "both",
        "--paths",
        "200",
        "--T",
        "3",
        "--steps",
        "300",
        "--seed",
        "42",
    ];
    for (target, workers) in [(&a, "1"), (&b, "3")] {
        let mut args = base.to_vec();
        args.extend(["--paths-csv", path_str(target), "--workers", workers]);
        let out = episde(&args);
        assert!(out.status.success(), "{}", stderr(&out));
        assert!(out.stdout.is_empty());
        let line = stderr(&out);
        assert_eq!(line.lines().count(), 1);
        assert!(
            line.contains("N=200") && line.contains("seed=42") && line.contains("dt=0.01"),
            "{line}"
        );
    }
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("path_id,t,dim,x"));
    let ids: std::collections::BTreeSet<&str> = lines.map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(ids.len(), 400);
    assert!(ids.contains("parametric-199") && ids.contains("sde-0"));
}

#[test]
fn simulate_without_outputs_prints_a_json_report() {
    let out = episde(&["simulate", "--paths", "50", "--steps", "30", "--semantics", "sde"]);
    assert!(out.status.success());
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(json["config"]["num_paths"], 50);
    assert_eq!(json["results"][0]["semantics"], "sde");
    assert_eq!(
        json["results"][0]["statistics"]["marginal_summary"]
            .as_array()
            .unwrap()
            .len(),
        31
    );
}

#[test]
fn simulate_writes_binary_and_summary_files_per_semantics() {
    let dir = tempfile::tempdir().unwrap();
    let bin = dir.path().join("ens.bin");
    let sum = dir.path().join("sum.csv");
    let out = episde(&[
        "simulate",
        "--paths",
        "20",
        "--steps",
        "10",
        "--ensemble-bin",
        path_str(&bin),
        "--summary-csv",
        path_str(&sum),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let bytes = std::fs::read(dir.path().join("ens.parametric.bin")).unwrap();
    let ens = episde::integrate::read_binary(bytes.as_slice()).unwrap();
    assert_eq!(ens.num_paths(), 20);
    assert!(dir.path().join("ens.sde.bin").exists());
    let summary = std::fs::read_to_string(dir.path().join("sum.sde.csv")).unwrap();
    assert!(summary.starts_with("t,mean,variance,band_lo,band_hi,n_paths\n"));
    assert_eq!(summary.lines().count(), 12);
}

#[test]
fn validation_failures_exit_2_and_name_the_field() {
    let out = episde(&["simulate", "--steps", "0"]);
    assert_eq!(out.status.code(), Some(2));
    let msg = stderr(&out);
    assert!(msg.contains("num_steps") && msg.contains("--steps"), "{msg}");

    let out = episde(&["simulate", "--benchmark", "no-such-benchmark"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("benchmark"));

    let out = episde(&["simulate", "--paths", "abc"]);
    assert_eq!(out.status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, "{\n  \"benchmark\": \"scalar-drift\",\n  \"level\": 1.5\n}\n").unwrap();
    let out = episde(&["simulate", "--config", path_str(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
    let msg = stderr(&out);
    assert!(msg.contains("level") && msg.contains("line 3"), "{msg}");
}

#[test]
fn flags_override_the_config_file_and_env_supplies_the_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(
        &cfg,
        r#"{"benchmark": "linear-feedback", "num_paths": 30, "time": {"T": 2.0, "num_steps": 20}, "semantics": "parametric"}"#,
    )
    .unwrap();
    let out = episde(&["simulate", "--config", path_str(&cfg), "--paths", "12"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(json["config"]["num_paths"], 12);
    assert_eq!(json["config"]["benchmark"], "linear-feedback");
    assert_eq!(json["config"]["time"]["T"], 2.0);
    assert!(json["config"]["master_seed"].is_null());

    let run_with_env = |seed: &str, extra: &[&str]| {
        let mut args = vec!["simulate", "--config", path_str(&cfg)];
        args.extend(extra);
        let out = Command::new(env!("CARGO_BIN_EXE_episde"))
            .args(&args)
            .env("EPISDE_SEED", seed)
            .output()
            .unwrap();
        serde_json::from_slice::<serde_json::Value>(&out.stdout).unwrap()
    };
    assert_eq!(run_with_env("17", &[])["config"]["master_seed"], 17);
    assert_eq!(run_with_env("17", &["--seed", "5"])["config"]["master_seed"], 5);
    let bad = Command::new(env!("CARGO_BIN_EXE_episde"))
        .args(["simulate", "--paths", "5", "--steps", "5"])
        .env("EPISDE_SEED", "minus one")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn divergence_is_opt_in_exit_3() {
    let args = [
        "simulate",
        "--benchmark",
        "linear-feedback",
        "--semantics",
        "parametric",
        "--prior-variance",
        "1000000",
        "--gain",
        "0",
        "--T",
        "1",
        "--steps",
        "100",
        "--paths",
        "50",
    ];
    let out = episde(&args);
    assert!(out.status.success());
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(json["results"][0]["divergences"].as_u64().unwrap() > 0);
    let mut strict = args.to_vec();
    strict.push("--fail-on-divergence");
    let out = episde(&strict);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("non-finite"));
}

#[test]
fn unwritable_output_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("missing").join("out.csv");
    let out = episde(&[
        "simulate",
        "--paths",
        "5",
        "--steps",
        "5",
        "--paths-csv",
        path_str(&target),
    ]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn figures_emit_highlighted_paths_and_bands() {
    let dir = tempfile::tempdir().unwrap();
    let out = episde(&["figures", "--paths", "500", "--out-dir", path_str(dir.path())]);
    assert!(out.status.success(), "{}", stderr(&out));
    let paths = std::fs::read_to_string(dir.path().join("paths.csv")).unwrap();
    let ids: std::collections::BTreeSet<&str> = paths.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(ids.len(), 14);
    let bands = std::fs::read_to_string(dir.path().join("bands.csv")).unwrap();
    assert!(bands.starts_with("t,semantics,source,lo,hi\n"));
    let row = |t: &str, sem: &str| -> f64 {
        bands
            .lines()
            .find(|l| l.starts_with(&format!("{t},{sem},analytic,")))
            .and_then(|l| l.rsplit(',').next())
            .unwrap()
            .parse()
            .unwrap()
    };
    assert!((row("1", "parametric") - 1.9600).abs() < 5e-5);
    assert!((row("1", "sde") - 1.9600).abs() < 5e-5);
    assert!((row("2", "parametric") - 3.9199).abs() < 5e-5);
    assert!((row("2", "sde") - 2.7718).abs() < 5e-5);
}

#[test]
fn figures_for_linear_feedback_have_log_domain_bands() {
    let dir = tempfile::tempdir().unwrap();
    let out = episde(&[
        "figures",
        "--benchmark",
        "linear-feedback",
        "--paths",
        "300",
        "--out-dir",
        path_str(dir.path()),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let bands = std::fs::read_to_string(dir.path().join("bands.csv")).unwrap();
    let analytic = |sem: &str| -> (f64, f64) {
        let l = bands
            .lines()
            .find(|l| l.starts_with(&format!("2,{sem},analytic,")))
            .unwrap();
        let v: Vec<f64> = l.split(',').skip(3).map(|x| x.parse().unwrap()).collect();
        (v[0], v[1])
    };
    // Geometric centers: e^{−2} (parametric) and e^{−3} (SDE).
    let (lo, hi) = analytic("parametric");
    assert!(((lo * hi).sqrt() - (-2.0f64).exp()).abs() < 1e-12);
    let (lo, hi) = analytic("sde");
    assert!(((lo * hi).sqrt() - (-3.0f64).exp()).abs() < 1e-12);
}

#[test]
fn stability_and_chance_tables() {
    let out = episde(&[
        "stability",
        "--benchmark",
        "linear-feedback",
        "--paths",
        "2000",
        "--steps",
        "500",
    ]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.contains("1.5866e-1"));

    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("chance.json");
    let out = episde(&[
        "chance",
        "--paths",
        "2000",
        "--T",
        "1",
        "--steps",
        "100",
        "--safe-box=-2,2",
        "--delta",
        "0.07",
        "--report-json",
        path_str(&report),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let rows = json["results"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0]["N"], 2000);
    assert_eq!(rows[0]["delta"], 0.07);
    assert_eq!(rows[0]["ci"].as_array().unwrap().len(), 2);

    let out = episde(&["chance", "--paths", "10", "--steps", "10", "--safe-box=2,-2"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("safe_box"));
}

#[test]
fn compare_accepts_a_system_file() {
    let dir = tempfile::tempdir().unwrap();
    let spec = episde::catalog_lookup("linear-feedback", &Default::default())
        .unwrap()
        .aleatoric;
    let file = dir.path().join("system.json");
    std::fs::write(&file, spec.to_json().unwrap()).unwrap();
    let out = episde(&[
        "compare",
        "--benchmark",
        path_str(&file),
        "--paths",
        "1000",
        "--steps",
        "60",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.starts_with("custom |"));
    assert!(table.contains("qv_refinement_ratio"));
    assert!(table.contains("stability_fraction_diverging"));
}
