use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sgbh::procedures::{plugin_adaptive_sgbh, ProcedureReport};
use sgbh::simulate::{draw_means, sample_gaussian, z_to_p, ScenarioConfig, SigmaSpec, Sided, CSV_HEADER};
use sgbh::{Estimator, GroupPartition, Selector};

fn sgbh(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sgbh")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn p(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

fn s(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_pvalues(path: &Path, values: &[f64]) {
    let mut text = String::from("id,pvalue\n");
    for (i, v) in values.iter().enumerate() {
        text.push_str(&format!("h{i},{v}\n"));
    }
    fs::write(path, text).unwrap();
}

const MINIMAL_CONFIG: &str = r#"{
  "reps": 3,
  "m": [400],
  "pi_tilde0": [0.8],
  "sigma": [{"kind": "identity"}],
  "sided": ["two"],
  "procedures": [
    {"procedure": "plugin_sgbh", "selector": "ks:0.025", "estimator": "jin:0.5"},
    {"procedure": "bh"}
  ]
}"#;

#[test]
fn simulate_minimal_config_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = p(dir.path(), "c.json");
    fs::write(&cfg, MINIMAL_CONFIG).unwrap();
    let out_path = p(dir.path(), "out.csv");
    let out = sgbh(&["simulate", "--config", s(&cfg), "--out", s(&out_path)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let csv = fs::read_to_string(&out_path).unwrap();
    assert_eq!(csv.lines().next().unwrap(), CSV_HEADER);
    assert_eq!(csv.lines().count(), 1 + 4 * 2);
}

#[test]
fn simulate_is_reproducible_and_seed_sensitive() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = p(dir.path(), "c.json");
    fs::write(&cfg, MINIMAL_CONFIG).unwrap();
    let run = |name: &str, extra: &[&str]| {
        let path = p(dir.path(), name);
        let mut args = vec!["simulate", "--config", s(&cfg), "--out", s(&path)];
        args.extend_from_slice(extra);
        assert_eq!(code(&sgbh(&args)), 0);
        fs::read(&path).unwrap()
    };
    let a = run("a.csv", &["--seed", "5", "--workers", "1"]);
    let b = run("b.csv", &["--seed", "5", "--workers", "3"]);
    let c = run("c.csv", &["--seed", "6"]);
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn malformed_config_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = p(dir.path(), "bad.json");
    fs::write(&cfg, r#"{"procedures": [{"procedure": "plugin_sgbh", "selector": "kss:1", "estimator": "jin:0.5"}]}"#).unwrap();
    let out = sgbh(&["simulate", "--config", s(&cfg), "--out", s(&p(dir.path(), "o.csv"))]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("procedures[0]"), "{}", stderr(&out));

    fs::write(&cfg, r#"{"reps": "many"}"#).unwrap();
    let out = sgbh(&["simulate", "--config", s(&cfg), "--out", s(&p(dir.path(), "o.csv"))]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("`reps`"), "{}", stderr(&out));

    fs::write(&cfg, r#"{"m": [401]}"#).unwrap();
    let out = sgbh(&["simulate", "--config", s(&cfg), "--out", s(&p(dir.path(), "o.csv"))]);
    assert_eq!(code(&out), 2);
    assert!(!p(dir.path(), "o.csv").exists());
}

#[test]
fn missing_config_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = sgbh(&["simulate", "--config", s(&p(dir.path(), "nope.json")), "--out", s(&p(dir.path(), "o.csv"))]);
    assert_eq!(code(&out), 3);
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(code(&sgbh(&["analyze", "--alpha", "0.1"])), 2);
    assert_eq!(code(&sgbh(&["frobnicate"])), 2);
}

#[test]
fn analyze_all_ones_rejects_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let data = p(dir.path(), "d.csv");
    write_pvalues(&data, &[1.0; 60]);
    let groups = p(dir.path(), "g.csv");
    let mut g = String::from("id,group\n");
    for i in 0..60 {
        g.push_str(&format!("h{i},{}\n", i % 3 + 1));
    }
    fs::write(&groups, g).unwrap();
    for procedure in ["bh", "plugin-sgbh", "plugin-gbh", "generic-sgbh", "generic-gbh"] {
        let out_path = p(dir.path(), "r.csv");
        let out = sgbh(&[
            "analyze", "--data", s(&data), "--groups", s(&groups), "--procedure", procedure,
            "--alpha", "0.1", "--estimator", "storey:0.5", "--out", s(&out_path),
        ]);
        assert_eq!(code(&out), 0, "{procedure}: {}", stderr(&out));
        assert!(stdout(&out).contains("rejections  0"), "{procedure}");
        let report = fs::read_to_string(&out_path).unwrap();
        assert_eq!(report.lines().count(), 61);
        assert!(report.lines().skip(1).all(|l| l.ends_with(",false")));
    }
}

#[test]
fn synthetic_table_pipeline_reports_simes_tests_and_selection() {
    let dir = tempfile::tempdir().unwrap();
    let data = p(dir.path(), "synth.csv");
    assert_eq!(code(&sgbh(&["synth", "--out", s(&data)])), 0);
    let text = fs::read_to_string(&data).unwrap();
    assert_eq!(text.lines().count(), 4375);

    let summary = p(dir.path(), "summary.json");
    let out = sgbh(&[
        "analyze", "--data", s(&data), "--bins", "0.15,0.7", "--procedure", "plugin-sgbh",
        "--alpha", "0.05", "--selector", "simes:0.1", "--out", s(&p(dir.path(), "r.csv")),
        "--summary", s(&summary),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(&summary).unwrap()).unwrap();
    let groups = json["groups"].as_array().unwrap();
    assert_eq!(groups.len(), 3);
    let sizes: Vec<u64> = groups.iter().map(|g| g["size"].as_u64().unwrap()).collect();
    assert_eq!(sizes, vec![1374, 1500, 1500]);
    assert!(groups.iter().all(|g| g["test_pvalue"].is_number()));
    let selected: Vec<String> = groups
        .iter()
        .filter(|g| g["selected"].as_bool().unwrap())
        .map(|g| g["label"].as_str().unwrap().to_string())
        .collect();
    let listed: Vec<String> =
        json["selection"].as_array().unwrap().iter().map(|v| v.as_str().unwrap().to_string()).collect();
    assert_eq!(selected, listed);
    assert!(stdout(&out).contains("selected    {"));
}

#[test]
fn explicit_groups_and_bins_agree() {
    let dir = tempfile::tempdir().unwrap();
    let data = p(dir.path(), "synth.csv");
    assert_eq!(code(&sgbh(&["synth", "--out", s(&data), "--seed", "3"])), 0);
    let text = fs::read_to_string(&data).unwrap();
    let mut groups = String::from("id,group\n");
    for line in text.lines().skip(1) {
        let (id, pv) = line.split_once(',').unwrap();
        let pv: f64 = pv.parse().unwrap();
        let g = if pv > 0.7 { 1 } else if pv >= 0.15 { 2 } else { 3 };
        groups.push_str(&format!("{id},{g}\n"));
    }
    let gpath = p(dir.path(), "g.csv");
    fs::write(&gpath, groups).unwrap();
    let (a, b) = (p(dir.path(), "a.csv"), p(dir.path(), "b.csv"));
    for (flag, value, out) in [("--bins", "0.15,0.7", &a), ("--groups", s(&gpath), &b)] {
        let o = sgbh(&[
            "analyze", "--data", s(&data), flag, value, "--procedure", "generic-sgbh",
            "--alpha", "0.1", "--out", s(out),
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn data_shape_and_schema_errors() {
    let dir = tempfile::tempdir().unwrap();
    let data = p(dir.path(), "d.csv");
    write_pvalues(&data, &[0.5, 0.6, 0.9]);
    let out = p(dir.path(), "r.csv");
    // no p-value lies below 0.15
    let o = sgbh(&["analyze", "--data", s(&data), "--bins", "0.15,0.7", "--procedure", "bh", "--alpha", "0.1", "--out", s(&out)]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));

    fs::write(&data, "id,p\nh1,0.5\n").unwrap();
    let o = sgbh(&["analyze", "--data", s(&data), "--bins", "0.15,0.7", "--procedure", "bh", "--alpha", "0.1", "--out", s(&out)]);
    assert_eq!(code(&o), 2);

    fs::write(&data, "id,pvalue\nh1,abc\n").unwrap();
    let o = sgbh(&["analyze", "--data", s(&data), "--bins", "0.15,0.7", "--procedure", "bh", "--alpha", "0.1", "--out", s(&out)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("abc"));

    write_pvalues(&data, &[0.01, 0.5, 0.9]);
    let o = sgbh(&["analyze", "--data", s(&data), "--bins", "0.15,0.7", "--procedure", "oracle-gbh", "--alpha", "0.1", "--out", s(&out)]);
    assert_eq!(code(&o), 2);

    let groups = p(dir.path(), "g.csv");
    fs::write(&groups, "id,group\nh0,1\nh1,1\n").unwrap();
    let o = sgbh(&["analyze", "--data", s(&data), "--groups", s(&groups), "--procedure", "bh", "--alpha", "0.1", "--out", s(&out)]);
    assert_eq!(code(&o), 4);
}

#[test]
fn uniformity_flags_only_groups_with_signal() {
    let dir = tempfile::tempdir().unwrap();
    let data = p(dir.path(), "d.csv");
    let groups = p(dir.path(), "g.csv");
    let n = 400;
    let mut values = Vec::new();
    let mut g = String::from("id,group\n");
    for i in 0..n {
        // evenly spread within each group, except group 3 is pushed to zero
        let u = (i / 3) as f64 / (n / 3) as f64 + 0.5 / n as f64;
        let grp = i % 3 + 1;
        values.push(if grp == 3 { u.powi(4) } else { u.min(1.0) });
        g.push_str(&format!("h{i},{grp}\n"));
    }
    write_pvalues(&data, &values);
    fs::write(&groups, g).unwrap();
    for method in ["ks", "simes"] {
        let o = sgbh(&["uniformity", "--data", s(&data), "--groups", s(&groups), "--method", method, "--level", "0.05"]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let text = stdout(&o);
        let rejects: Vec<&str> = text.lines().skip(1).map(|l| l.rsplit(',').next().unwrap()).collect();
        assert_eq!(rejects, vec!["false", "false", "true"], "{method}: {text}");
    }
    let o = sgbh(&["uniformity", "--data", s(&data), "--groups", s(&groups), "--method", "anderson", "--level", "0.05"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn subsample_caps_group_sizes_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let data = p(dir.path(), "synth.csv");
    assert_eq!(code(&sgbh(&["synth", "--out", s(&data)])), 0);
    let run = |name: &str, seed: &str| {
        let out = p(dir.path(), name);
        let o = sgbh(&[
            "analyze", "--data", s(&data), "--bins", "0.15,0.7", "--procedure", "bh", "--alpha", "0.05",
            "--subsample", "500", "--seed", seed, "--out", s(&out),
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        fs::read_to_string(&out).unwrap()
    };
    let a = run("a.csv", "1");
    assert_eq!(a.lines().count(), 1 + 1500);
    assert_eq!(a, run("b.csv", "1"));
    assert_ne!(a, run("c.csv", "2"));
}

fn plot_rows(dir: &Path) -> PathBuf {
    let cfg = p(dir, "grid.json");
    fs::write(&cfg, r#"{"reps": 2}"#).unwrap();
    let csv = p(dir, "grid.csv");
    let o = sgbh(&["simulate", "--config", s(&cfg), "--out", s(&csv)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    csv
}

#[test]
fn plot_panels_match_distinct_settings() {
    let dir = tempfile::tempdir().unwrap();
    let csv = plot_rows(dir.path());
    let text = fs::read_to_string(&csv).unwrap();
    let mut keys: Vec<(String, String, String)> = text
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].into(), f[3].into(), f[1].into())
        })
        .collect();
    keys.sort();
    keys.dedup();
    let svg = p(dir.path(), "g.svg");
    assert_eq!(code(&sgbh(&["plot", "--in", s(&csv), "--out", s(&svg)])), 0);
    let out = fs::read_to_string(&svg).unwrap();
    assert_eq!(out.matches(r#"<g class="panel">"#).count(), keys.len());
    assert_eq!(keys.len(), 2 * 3 * 2);
    assert!(out.contains("stroke-dasharray"));

    // one row, one panel, one marker
    let one = p(dir.path(), "one.csv");
    let first: Vec<&str> = text.lines().take(2).collect();
    fs::write(&one, first.join("\n") + "\n").unwrap();
    assert_eq!(code(&sgbh(&["plot", "--in", s(&one), "--out", s(&svg)])), 0);
    let out = fs::read_to_string(&svg).unwrap();
    assert_eq!(out.matches(r#"<g class="panel">"#).count(), 1);
    let panel = &out[out.find(r#"<g class="panel">"#).unwrap()..out.find("</g>").unwrap()];
    assert_eq!(panel.matches("<circle").count(), 1);

    let empty = p(dir.path(), "empty.csv");
    fs::write(&empty, format!("{CSV_HEADER}\n")).unwrap();
    assert_eq!(code(&sgbh(&["plot", "--in", s(&empty), "--out", s(&svg)])), 2);
    fs::write(&empty, "a,b\n1,2\n").unwrap();
    assert_eq!(code(&sgbh(&["plot", "--in", s(&empty), "--out", s(&svg)])), 2);
}

fn parse_cell(raw: &str) -> f64 {
    if raw == "inf" {
        f64::INFINITY
    } else {
        raw.parse().unwrap()
    }
}

#[test]
fn analyze_reproduces_an_in_process_simulated_rep() {
    let config = ScenarioConfig {
        alphas: vec![0.1],
        m: 2000,
        groups: 4,
        pi_tilde0: 0.8,
        sigma: SigmaSpec::autoregressive(),
        sided: Sided::Two,
        reps: 1,
        seed: 77,
        procedures: vec![],
        mu_min: 0.6,
        mu_max: 3.6,
        fixed_positions: false,
    };
    let partition = GroupPartition::contiguous(config.m, 4).unwrap();
    let summary = config.truth_summary().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (mu, _) = draw_means(&partition, &summary, config.mu_min, config.mu_max, &mut rng);
    let z = sample_gaussian(&mu, &config.sigma, &mut rng).unwrap();
    let pvals = z_to_p(z.z(), Sided::Two).unwrap();
    let selector = Selector::ks(0.025);
    let estimator = Estimator::Jin { gamma: 0.5 };
    let expected: ProcedureReport =
        plugin_adaptive_sgbh(&pvals, Some(&z), &partition, &selector, &estimator, 0.1).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let (data, groups, out) = (p(dir.path(), "z.csv"), p(dir.path(), "g.csv"), p(dir.path(), "r.csv"));
    let mut d = String::from("id,zscore\n");
    let mut g = String::from("id,group\n");
    for (i, zi) in z.z().iter().enumerate() {
        d.push_str(&format!("x{i},{zi}\n"));
        g.push_str(&format!("x{i},{}\n", partition.group_of(i) + 1));
    }
    fs::write(&data, d).unwrap();
    fs::write(&groups, g).unwrap();
    let o = sgbh(&[
        "analyze", "--data", s(&data), "--groups", s(&groups), "--procedure", "plugin-sgbh",
        "--alpha", "0.1", "--selector", "ks:0.025", "--estimator", "jin:0.5", "--out", s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = fs::read_to_string(&out).unwrap();
    let mut rejected = Vec::new();
    for (i, line) in text.lines().skip(1).enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f[0], format!("x{i}"));
        assert_eq!(parse_cell(f[2]).to_bits(), pvals.as_slice()[i].to_bits());
        let grp = partition.group_of(i);
        assert_eq!(parse_cell(f[3]).to_bits(), expected.weights.get(grp).to_bits());
        assert_eq!(parse_cell(f[4]).to_bits(), expected.rejections.weighted[i].to_bits());
        if f[5] == "true" {
            rejected.push(i);
        }
    }
    assert_eq!(rejected, expected.rejections.rejected);
    assert!(!rejected.is_empty());
}

fn repo_file(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

#[test]
fn schema_lists_exactly_the_config_keys() {
    let schema: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(repo_file("schema/grid-config.schema.json")).unwrap()).unwrap();
    let mut documented: Vec<String> = schema["properties"].as_object().unwrap().keys().cloned().collect();
    documented.sort();
    let defaults = serde_json::to_value(sgbh::simulate::GridConfig::default()).unwrap();
    let mut actual: Vec<String> = defaults.as_object().unwrap().keys().cloned().collect();
    actual.sort();
    assert_eq!(documented, actual);
    for key in actual.iter().filter(|k| k.as_str() != "procedures") {
        assert_eq!(schema["properties"][key]["default"], defaults[key], "default of `{key}`");
    }
    let names: Vec<&str> = schema["$defs"]["procedure"]["properties"]["procedure"]["enum"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap())
        .collect();
    for name in &names {
        let spec = serde_json::json!({"procedure": name, "selector": "ks:0.1", "estimator": "jin:0.5", "lambda": 0.5});
        let needed: serde_json::Map<String, serde_json::Value> = spec
            .as_object()
            .unwrap()
            .iter()
            .filter(|(k, _)| match k.as_str() {
                "selector" => name.ends_with("sgbh") && !name.starts_with("oracle") && !name.starts_with("variant"),
                "estimator" => name.starts_with("plugin"),
                "lambda" => name.starts_with("generic"),
                _ => true,
            })
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        let parsed: sgbh::procedures::ProcedureSpec = serde_json::from_value(serde_json::Value::Object(needed))
            .unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(parsed.name(), *name);
    }
    assert_eq!(names.len(), 9);
}

#[test]
fn shipped_configs_parse_and_expand() {
    for (name, scenarios) in [("configs/desk.json", 24), ("configs/selection.json", 1)] {
        let text = fs::read_to_string(repo_file(name)).unwrap();
        let grid: sgbh::simulate::GridConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(grid.scenarios().unwrap().len(), scenarios, "{name}");
    }
    let desk: sgbh::simulate::GridConfig =
        serde_json::from_str(&fs::read_to_string(repo_file("configs/desk.json")).unwrap()).unwrap();
    assert_eq!(desk, sgbh::simulate::GridConfig::default());
}
