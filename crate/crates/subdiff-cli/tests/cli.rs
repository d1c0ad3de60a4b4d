//! End-to-end tests of the `subdiff` binary: deterministic outputs, exit
//! codes, and the documented file schemas.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_subdiff"))
}

fn tmpdir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("subdiff-cli-{name}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn assert_success(out: &Output) {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn simulate_small(dir: &Path, name: &str, extra: &[&str]) -> PathBuf {
    let out = dir.join(format!("{name}.csv"));
    let mut args = vec![
        "simulate",
        "--model",
        "fbm",
        "--alpha",
        "0.9",
        "--n",
        "120",
        "--paths",
        "3",
        "--dt",
        "0.05",
        "--seed",
        "7",
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    assert_success(&run(&args));
    out
}

#[test]
fn simulate_is_byte_identical_across_runs_and_thread_counts() {
    let dir = tmpdir("det");
    let a = simulate_small(&dir, "a", &["--threads", "1"]);
    let b = simulate_small(&dir, "b", &["--threads", "2"]);
    assert_eq!(
        std::fs::read(&a).unwrap(),
        std::fs::read(&b).unwrap(),
        "same seed must produce identical bytes regardless of thread count"
    );
    let pa = std::fs::read_to_string(a.with_extension("params.json")).unwrap();
    let pb = std::fs::read_to_string(b.with_extension("params.json")).unwrap();
    assert_eq!(pa, pb);
}

#[test]
fn simulate_shape_and_sidecar_contract() {
    let dir = tmpdir("shape");
    let csv = simulate_small(&dir, "tracks", &[]);
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# subdiff tracks csv v1"));
    assert_eq!(lines.next().unwrap(), "id,frame,x,y");
    // 3 paths x 121 rows.
    assert_eq!(text.lines().count(), 2 + 3 * 121);

    let sidecar: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(csv.with_extension("params.json")).unwrap())
            .unwrap();
    assert_eq!(sidecar["schema"], "subdiff-simulate-params-v1");
    assert_eq!(sidecar["seed"], 7);
    assert_eq!(sidecar["generator"]["alpha"], 0.9);
}

#[test]
fn fit_json_schema_and_ls_metadata() {
    let dir = tmpdir("fit");
    let csv = simulate_small(&dir, "tracks", &[]);

    let fit_out = dir.join("fbm.json");
    assert_success(&run(&[
        "fit",
        "--input",
        csv.to_str().unwrap(),
        "--model",
        "fbm",
        "--dt",
        "0.05",
        "--seed",
        "1",
        "--out",
        fit_out.to_str().unwrap(),
    ]));
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&fit_out).unwrap()).unwrap();
    assert_eq!(doc["schema"], "subdiff-fit-v1");
    let paths = doc["paths"].as_array().unwrap();
    assert_eq!(paths.len(), 3);
    for rec in paths {
        assert!(rec["error"].is_null());
        for key in [
            "id", "model", "alpha", "d_coef", "se_alpha", "se_log_d", "ci_alpha", "ci_log_d",
            "loglik", "params", "convergence",
        ] {
            assert!(!rec[key].is_null(), "missing {key} in {rec}");
        }
        let alpha = rec["alpha"].as_f64().unwrap();
        assert!(alpha > 0.4 && alpha < 1.5, "alpha {alpha}");
    }

    let ls_out = dir.join("ls.json");
    assert_success(&run(&[
        "fit",
        "--input",
        csv.to_str().unwrap(),
        "--model",
        "ls",
        "--dt",
        "0.05",
        "--out",
        ls_out.to_str().unwrap(),
    ]));
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&ls_out).unwrap()).unwrap();
    assert_eq!(doc["ls_truncation"], 0.3);
    let rec = &doc["paths"][0];
    assert_eq!(rec["params"]["ls_truncation"], 0.3);
    assert_eq!(rec["params"]["max_lag"], 36); // floor(0.3 * 120)
}

#[test]
fn fit_fsd_honors_fixed_tau() {
    let dir = tmpdir("fsd");
    let csv = simulate_small(&dir, "tracks", &[]);
    let out = dir.join("fsd.json");
    assert_success(&run(&[
        "fit",
        "--input",
        csv.to_str().unwrap(),
        "--model",
        "fsd",
        "--fix-tau",
        "0.005",
        "--dt",
        "0.05",
        "--out",
        out.to_str().unwrap(),
    ]));
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(doc["fixed_tau"], 0.005);
    for rec in doc["paths"].as_array().unwrap() {
        if rec["error"].is_null() {
            assert_eq!(rec["params"]["tau"], 0.005);
        }
    }
}

#[test]
fn fit_reruns_are_byte_identical() {
    let dir = tmpdir("fitdet");
    let csv = simulate_small(&dir, "tracks", &[]);
    let out_a = dir.join("a.json");
    let out_b = dir.join("b.json");
    for out in [&out_a, &out_b] {
        assert_success(&run(&[
            "fit", "--input", csv.to_str().unwrap(), "--model", "fma", "--dt", "0.05",
            "--seed", "5", "--out", out.to_str().unwrap(),
        ]));
    }
    assert_eq!(std::fs::read(&out_a).unwrap(), std::fs::read(&out_b).unwrap());
}

#[test]
fn msd_of_constant_path_is_zero() {
    let dir = tmpdir("msd");
    let csv = dir.join("const.csv");
    let mut text = String::from("id,frame,x,y\n");
    for frame in 0..40 {
        text.push_str(&format!("a,{frame},1.5,-2.5\n"));
    }
    std::fs::write(&csv, text).unwrap();
    let out = dir.join("msd.csv");
    assert_success(&run(&[
        "msd",
        "--input",
        csv.to_str().unwrap(),
        "--dt",
        "0.05",
        "--out",
        out.to_str().unwrap(),
    ]));
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with('#'));
    assert_eq!(lines.next().unwrap(), "lag,t_seconds,msd_um2");
    for line in lines {
        let msd: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert_eq!(msd, 0.0);
    }
}

#[test]
fn compare_r1_reproduces_fbm_fit_logliks() {
    let dir = tmpdir("cmp");
    let csv = simulate_small(&dir, "tracks", &[]);

    let fit_out = dir.join("fbm.json");
    assert_success(&run(&[
        "fit",
        "--input",
        csv.to_str().unwrap(),
        "--model",
        "fbm",
        "--dt",
        "0.05",
        "--seed",
        "0",
        "--out",
        fit_out.to_str().unwrap(),
    ]));
    let fit_doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&fit_out).unwrap()).unwrap();
    let mean_loglik: f64 = fit_doc["paths"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["loglik"].as_f64().unwrap())
        .sum::<f64>()
        / 3.0;

    let cmp_out = dir.join("cmp.csv");
    assert_success(&run(&[
        "compare",
        "--input",
        csv.to_str().unwrap(),
        "--models",
        "fma",
        "--r",
        "1,5",
        "--dt",
        "0.05",
        "--seed",
        "0",
        "--out",
        cmp_out.to_str().unwrap(),
    ]));
    let cmp_doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(cmp_out.with_extension("json")).unwrap())
            .unwrap();
    let base = cmp_doc["fbm_baseline"].as_array().unwrap();
    let r1 = base.iter().find(|b| b["r"] == 1).unwrap();
    let diff = (r1["mean_loglik"].as_f64().unwrap() - mean_loglik).abs();
    assert!(
        diff < 1e-9 * mean_loglik.abs(),
        "r=1 composite {} vs mean fit loglik {mean_loglik}",
        r1["mean_loglik"]
    );

    let text = std::fs::read_to_string(&cmp_out).unwrap();
    assert!(text.lines().nth(1).unwrap() == "model,r,s_r");
}

#[test]
fn coverage_outputs_csv_and_json_mirror() {
    let dir = tmpdir("cov");
    let out = dir.join("coverage.csv");
    assert_success(&run(&[
        "coverage",
        "--model",
        "fbm",
        "--alpha",
        "0.9",
        "--models",
        "fbm",
        "-B",
        "6",
        "--n",
        "120",
        "--dt",
        "0.05",
        "--seed",
        "3",
        "--out",
        out.to_str().unwrap(),
    ]));
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.lines().nth(1).unwrap() == "model,metric,value");
    assert!(text.contains("truth,alpha,0.9"));
    assert!(text.contains("fbm,p95_alpha,"));
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.with_extension("json")).unwrap())
            .unwrap();
    assert_eq!(doc["schema"], "subdiff-coverage-v1");
    assert_eq!(doc["report"]["replicates"], 6);
    assert_eq!(doc["report"]["rows"][0]["model"], "fbm");
}

#[test]
fn gle_window_outputs_window_json() {
    let dir = tmpdir("gle");
    let out = dir.join("window.json");
    let msd_out = dir.join("gle-msd.csv");
    assert_success(&run(&[
        "gle-window",
        "--K",
        "40",
        "--rouse-gamma",
        "1.5",
        "--rouse-tau",
        "0.02",
        "--nu",
        "1",
        "--grid-points",
        "128",
        "--out",
        out.to_str().unwrap(),
        "--msd-out",
        msd_out.to_str().unwrap(),
    ]));
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(doc["schema"], "subdiff-window-v1");
    let w = &doc["window"];
    assert!(w["t_min"].as_f64().unwrap() < w["t_max"].as_f64().unwrap());
    let alpha = w["alpha_eff"].as_f64().unwrap();
    assert!(alpha > 0.0 && alpha < 2.0);
    let text = std::fs::read_to_string(&msd_out).unwrap();
    assert_eq!(text.lines().nth(1).unwrap(), "t_seconds,msd_um2");
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = tmpdir("cfg");
    let cfg = dir.join("run.conf");
    std::fs::write(&cfg, "dt = 0.05\nseed = 7\nalpha = 0.9\nn = 60\npaths = 2\n").unwrap();
    let out_a = dir.join("a.csv");
    assert_success(&run(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--model",
        "fbm",
        "--out",
        out_a.to_str().unwrap(),
    ]));
    // Same run with every value given as a flag must be identical.
    let out_b = dir.join("b.csv");
    assert_success(&run(&[
        "simulate",
        "--model",
        "fbm",
        "--alpha",
        "0.9",
        "--n",
        "60",
        "--paths",
        "2",
        "--dt",
        "0.05",
        "--seed",
        "7",
        "--out",
        out_b.to_str().unwrap(),
    ]));
    assert_eq!(std::fs::read(&out_a).unwrap(), std::fs::read(&out_b).unwrap());
    // A flag overrides the config: different seed changes the bytes.
    let out_c = dir.join("c.csv");
    assert_success(&run(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--model",
        "fbm",
        "--seed",
        "8",
        "--out",
        out_c.to_str().unwrap(),
    ]));
    assert_ne!(std::fs::read(&out_a).unwrap(), std::fs::read(&out_c).unwrap());
}

#[test]
fn simulate_gle_paths_through_the_cli() {
    let dir = tmpdir("glesim");
    let out = dir.join("gle.csv");
    assert_success(&run(&[
        "simulate", "--model", "gle", "--K", "20", "--rouse-gamma", "1.5", "--rouse-tau",
        "0.02", "--nu", "1", "--n", "64", "--paths", "2", "--dt", "0.05", "--seed", "4",
        "--out", out.to_str().unwrap(),
    ]));
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 2 + 2 * 65);
    let sidecar: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.with_extension("params.json")).unwrap())
            .unwrap();
    assert_eq!(sidecar["generator"]["model"], "gle");
    assert_eq!(sidecar["generator"]["K"], 20);
}

/// Minimal structural validator for the shipped JSON schemas: walks
/// `required`, `properties`, `items`, `const`, `enum` and `type`.
fn validate_schema(value: &serde_json::Value, schema: &serde_json::Value, path: &str) {
    if let Some(c) = schema.get("const") {
        assert_eq!(value, c, "{path}: const mismatch");
    }
    if let Some(options) = schema.get("enum").and_then(|e| e.as_array()) {
        assert!(options.contains(value), "{path}: {value} not in enum");
    }
    if let Some(ty) = schema.get("type") {
        let allowed: Vec<String> = match ty {
            serde_json::Value::String(s) => vec![s.clone()],
            serde_json::Value::Array(a) => a
                .iter()
                .map(|v| v.as_str().unwrap().to_string())
                .collect(),
            _ => vec![],
        };
        let actual = match value {
            serde_json::Value::Null => "null",
            serde_json::Value::Bool(_) => "boolean",
            serde_json::Value::Number(n) => {
                if n.is_i64() || n.is_u64() {
                    "integer"
                } else {
                    "number"
                }
            }
            serde_json::Value::String(_) => "string",
            serde_json::Value::Array(_) => "array",
            serde_json::Value::Object(_) => "object",
        };
        let ok = allowed.iter().any(|a| {
            a == actual || (a == "number" && actual == "integer") || (a == "integer" && actual == "number" && value.as_f64().map(|v| v.fract() == 0.0).unwrap_or(false))
        });
        assert!(ok, "{path}: type {actual} not in {allowed:?}");
    }
    if let Some(required) = schema.get("required").and_then(|r| r.as_array()) {
        for key in required {
            let key = key.as_str().unwrap();
            assert!(
                value.get(key).is_some(),
                "{path}: missing required key {key}"
            );
        }
    }
    if let Some(props) = schema.get("properties").and_then(|p| p.as_object()) {
        for (key, sub) in props {
            if let Some(v) = value.get(key) {
                validate_schema(v, sub, &format!("{path}.{key}"));
            }
        }
    }
    if let Some(items) = schema.get("items") {
        if let Some(arr) = value.as_array() {
            for (i, v) in arr.iter().enumerate() {
                validate_schema(v, items, &format!("{path}[{i}]"));
            }
        }
    }
}

fn schema(name: &str) -> serde_json::Value {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../docs")
        .join(name);
    serde_json::from_str(&std::fs::read_to_string(&path).unwrap_or_else(|e| {
        panic!("cannot read shipped schema {}: {e}", path.display())
    }))
    .unwrap()
}

#[test]
fn outputs_validate_against_shipped_schemas() {
    let dir = tmpdir("schema");
    let csv = simulate_small(&dir, "tracks", &[]);
    let sidecar: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(csv.with_extension("params.json")).unwrap(),
    )
    .unwrap();
    validate_schema(&sidecar, &schema("simulate-params.schema.json"), "sidecar");

    let fit_out = dir.join("fit.json");
    assert_success(&run(&[
        "fit", "--input", csv.to_str().unwrap(), "--model", "fma", "--dt", "0.05",
        "--seed", "2", "--out", fit_out.to_str().unwrap(),
    ]));
    let fit_doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&fit_out).unwrap()).unwrap();
    validate_schema(&fit_doc, &schema("fit.schema.json"), "fit");

    let cov_out = dir.join("cov.csv");
    assert_success(&run(&[
        "coverage", "--model", "fbm", "--alpha", "0.9", "--models", "fbm", "-B", "4",
        "--n", "100", "--dt", "0.05", "--seed", "3", "--out", cov_out.to_str().unwrap(),
    ]));
    let cov_doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(cov_out.with_extension("json")).unwrap())
            .unwrap();
    validate_schema(&cov_doc, &schema("coverage.schema.json"), "coverage");

    let cmp_out = dir.join("cmp.csv");
    assert_success(&run(&[
        "compare", "--input", csv.to_str().unwrap(), "--models", "fma", "--r", "1",
        "--dt", "0.05", "--seed", "0", "--out", cmp_out.to_str().unwrap(),
    ]));
    let cmp_doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(cmp_out.with_extension("json")).unwrap())
            .unwrap();
    validate_schema(&cmp_doc, &schema("compare.schema.json"), "compare");

    let win_out = dir.join("win.json");
    assert_success(&run(&[
        "gle-window", "--K", "30", "--rouse-gamma", "1.5", "--rouse-tau", "0.02", "--nu",
        "1", "--grid-points", "96", "--out", win_out.to_str().unwrap(),
    ]));
    let win_doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&win_out).unwrap()).unwrap();
    validate_schema(&win_doc, &schema("window.schema.json"), "window");
}

#[test]
fn exit_codes_follow_the_policy() {
    let dir = tmpdir("exit");
    // Usage errors: unknown flag value combinations and missing inputs -> 2.
    let out = run(&["simulate", "--model", "warp", "--n", "10", "--dt", "0.1", "--out",
        dir.join("x.csv").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "unknown model is a usage error");

    let out = run(&["fit", "--input", "/nonexistent/tracks.csv", "--dt", "0.1", "--out",
        dir.join("y.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "missing input file is a usage error");

    let out = run(&["simulate", "--model", "fbm", "--alpha", "0.8", "--n", "10", "--dt", "0.1",
        "--out", "/nonexistent-dir/z.csv"]);
    assert_eq!(out.status.code(), Some(2), "unwritable output dir is a usage error");

    // Runtime failure: malformed trajectory data -> 1.
    let bad = dir.join("bad.csv");
    std::fs::write(&bad, "id,frame,x,y\na,0,0.0,0.0\na,2,1.0,1.0\n").unwrap();
    let out = run(&["fit", "--input", bad.to_str().unwrap(), "--dt", "0.1", "--out",
        dir.join("w.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1), "frame gap is a runtime failure");
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("gap at frame 1"), "{stderr}");

    // Clap-level usage errors -> 2.
    let out = run(&["fit"]);
    assert_eq!(out.status.code(), Some(2));
}
