use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn zap(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_zap"))
        .arg("--out")
        .arg(out)
        .args(args)
        .env_remove("ZAP_OUT")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn generate(dir: &Path) {
    let o = zap(dir, &["--seed", "7", "generate", "--groups", "5", "--variants", "3", "--pipelines", "20"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

const QUICK: [&str; 4] = ["--steps", "150", "--hidden", "16,16"];

#[test]
fn generate_shape_and_determinism() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    generate(a.path());
    generate(b.path());
    let costs = fs::read_to_string(a.path().join("costs.csv")).unwrap();
    let lines: Vec<&str> = costs.lines().collect();
    assert_eq!(lines.len(), 16);
    assert_eq!(lines[0].split(',').count(), 21);
    for f in ["costs.csv", "meta_features.csv", "pipelines.json", "provenance.json"] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f} differs"
        );
    }
    let prov: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.path().join("provenance.json")).unwrap()).unwrap();
    assert_eq!(prov["seed"], 7);
    assert_eq!(prov["spec"]["n_groups"], 5);
}

#[test]
fn usage_errors_exit_2() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(code(&zap(d.path(), &["generate", "--groups", "0"])), 2);
    assert_eq!(code(&zap(d.path(), &["frobnicate"])), 2);
    assert_eq!(code(&zap(d.path(), &["select", "--dataset", "x", "--method", "magic"])), 2);
}

#[test]
fn alc_golden_values() {
    let d = tempfile::tempdir().unwrap();
    let cases = [
        (r#"[{"t": 0, "nauc": 0.6}]"#, "0.600000"),
        (r#"[{"t": 60, "nauc": 1.0}]"#, "0.772330"),
        ("[]", "0.000000"),
    ];
    for (i, (curve, expected)) in cases.iter().enumerate() {
        let path = d.path().join(format!("c{i}.json"));
        fs::write(&path, curve).unwrap();
        let o = zap(d.path(), &["alc", "--curve", path.to_str().unwrap(), "--budget", "1200", "--t0", "60"]);
        assert_eq!(code(&o), 0);
        assert_eq!(stdout(&o).trim(), *expected);
    }
    let late = d.path().join("late.json");
    fs::write(&late, r#"[{"t": 1500, "nauc": 0.5}]"#).unwrap();
    assert_eq!(code(&zap(d.path(), &["alc", "--curve", late.to_str().unwrap()])), 1);
}

#[test]
fn train_and_select() {
    let d = tempfile::tempdir().unwrap();
    generate(d.path());
    let mut args = vec!["--seed", "1", "train", "--objective", "least_squares"];
    args.extend(QUICK);
    let o = zap(d.path(), &args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let model: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.path().join("model.json")).unwrap()).unwrap();
    assert_eq!(model["objective"], "least_squares");
    let history = fs::read_to_string(d.path().join("loss_history.csv")).unwrap();
    let losses: Vec<f64> = history.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(losses.len(), 150);
    let head: f64 = losses[..20].iter().sum::<f64>() / 20.0;
    let tail: f64 = losses[130..].iter().sum::<f64>() / 20.0;
    assert!(tail < head, "loss did not trend down: {head} -> {tail}");

    let o = zap(d.path(), &["select", "--dataset", "g01_v02"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let sel: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let chosen = sel["chosen"].as_str().unwrap();
    assert!(sel["scores"].get(chosen).is_some());
    assert_eq!(sel["scores"].as_object().unwrap().len(), 20);

    let sb = zap(d.path(), &["select", "--dataset", "g01_v02", "--method", "single_best", "--model", "/nonexistent"]);
    assert_eq!(code(&sb), 0);
    let r1 = zap(d.path(), &["--seed", "3", "select", "--dataset", "g01_v02", "--method", "random"]);
    let r2 = zap(d.path(), &["--seed", "3", "select", "--dataset", "g01_v02", "--method", "random"]);
    assert_eq!(stdout(&r1), stdout(&r2));
}

#[test]
fn select_rejects_mismatched_model() {
    let d = tempfile::tempdir().unwrap();
    generate(d.path());
    let mut args = vec!["train"];
    args.extend(QUICK);
    assert_eq!(code(&zap(d.path(), &args)), 0);
    let path = d.path().join("model.json");
    let mut model: serde_json::Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    let sizes = model["layer_sizes"].as_array_mut().unwrap();
    let width = sizes[0].as_u64().unwrap();
    sizes[0] = (width + 1).into();
    let first = model["layers"][0]["weights"].as_array_mut().unwrap();
    let extra: Vec<serde_json::Value> = (0..16).map(|_| 0.0.into()).collect();
    first.extend(extra);
    fs::write(&path, model.to_string()).unwrap();
    let o = zap(d.path(), &["select", "--dataset", "g00_v00"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn data_errors_exit_1() {
    let d = tempfile::tempdir().unwrap();
    generate(d.path());
    let costs = d.path().join("costs.csv");
    let text = fs::read_to_string(&costs).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut cells: Vec<&str> = lines[2].split(',').collect();
    cells[3] = "abc";
    lines[2] = cells.join(",");
    fs::write(&costs, lines.join("\n")).unwrap();
    let o = zap(d.path(), &["train"]);
    assert_eq!(code(&o), 1);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("p002"), "{err}");

    // a matrix whose rows are constant yields no triples
    let tied = tempfile::tempdir().unwrap();
    generate(tied.path());
    let c = tied.path().join("costs.csv");
    let text = fs::read_to_string(&c).unwrap();
    let mut out = String::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            out.push_str(line);
        } else {
            let id = line.split(',').next().unwrap();
            out.push_str(id);
            out.push_str(&",0.5".repeat(20));
        }
        out.push('\n');
    }
    fs::write(&c, out).unwrap();
    let o = zap(tied.path(), &["train"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("triple"));
}

#[test]
fn evaluate_is_complete_and_deterministic() {
    let runs: Vec<tempfile::TempDir> = (0..2).map(|_| tempfile::tempdir().unwrap()).collect();
    for d in &runs {
        generate(d.path());
        let mut args = vec!["evaluate", "--seeds", "0,1", "--fractions", "1.0,0.25"];
        args.extend(QUICK);
        let o = zap(d.path(), &args);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let summary = fs::read_to_string(runs[0].path().join("summary.csv")).unwrap();
    for m in ["zap_hpo", "zap_as_knn", "single_best", "random"] {
        assert!(summary.contains(m), "{summary}");
    }
    let zap_row = summary.lines().find(|l| l.starts_with("zap_hpo")).unwrap();
    assert!(zap_row.split(',').nth(1).unwrap().parse::<f64>().unwrap().is_finite());
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(runs[0].path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["sparsity"].as_object().unwrap().len(), 2);
    for f in ["report.json", "summary.csv", "significance.csv", "sparsity.csv", "records.json"] {
        assert_eq!(
            fs::read(runs[0].path().join(f)).unwrap(),
            fs::read(runs[1].path().join(f)).unwrap(),
            "{f} differs"
        );
    }

    let o = zap(runs[0].path(), &["report"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("zap_hpo"));
    assert_eq!(fs::read_to_string(runs[0].path().join("summary.csv")).unwrap(), summary);
}

#[test]
fn evaluate_reports_failing_fold() {
    let d = tempfile::tempdir().unwrap();
    generate(d.path());
    let o = zap(d.path(), &["evaluate", "--methods", "zap_hpo", "--inner-cv", "9", "--steps", "20", "--hidden", "4"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("fold 'g00'"));
}

#[test]
fn output_directory_from_environment() {
    let d = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_zap"))
        .args(["generate", "--groups", "2", "--variants", "2", "--pipelines", "5"])
        .env("ZAP_OUT", d.path())
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert!(d.path().join("costs.csv").exists());
}
