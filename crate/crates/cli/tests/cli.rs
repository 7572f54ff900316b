use std::path::Path;
use std::process::{Command, Output};

fn cranio(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cranio"))
        .args(args)
        .args(["--log-level", "warn"])
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = cranio(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn error_record(out: &Output) -> serde_json::Value {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr
        .lines()
        .rev()
        .find(|l| l.starts_with("{\"error\""))
        .unwrap_or_else(|| panic!("no error record in {stderr}"));
    serde_json::from_str(line).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn small_synth(dir: &Path, stage: &str) {
    ok(&[
        "synth", "--out", s(dir), "--n", "8", "--latent-dim", "2", "--skull-stage", stage, "--face-vertices", "150",
    ]);
}

#[test]
fn synth_crossval_report_smoke() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path().join("d");
    let r = t.path().join("r");
    small_synth(&d, "0");
    ok(&["crossval", "--data", s(&d), "--out", s(&r), "--max-components", "4", "--methods", "pca,lrr"]);
    let out = ok(&["report", "--report", s(&r)]);
    let table = String::from_utf8_lossy(&out.stdout);
    assert!(table.contains("lrr") && table.contains("pca"), "{table}");
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(r.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["methods"].as_array().unwrap().len(), 2);
    for f in ["curves.csv", "hist.csv", "local_mean.ply", "local_std.ply", "distance_map_lrr_mean.ply", "report.txt"] {
        assert!(r.join(f).exists(), "{f}");
    }
}

#[test]
fn predict_with_mismatched_layout_is_layout_error() {
    let t = tempfile::tempdir().unwrap();
    let d0 = t.path().join("d0");
    let d1 = t.path().join("d1");
    small_synth(&d0, "0");
    small_synth(&d1, "1");
    let m = t.path().join("m.json");
    ok(&["fit", "--data", s(&d0), "--method", "pca", "--out", s(&m)]);
    let good = t.path().join("good.ply");
    ok(&["predict", "--model", s(&m), "--skull", s(&d0.join("skull_003.json")), "--out", s(&good)]);
    assert!(good.exists());
    let out = cranio(&["predict", "--model", s(&m), "--skull", s(&d1.join("skull_003.json")), "--out", s(&t.path().join("bad.ply"))]);
    assert_eq!(out.status.code(), Some(5));
    assert_eq!(error_record(&out)["error"]["exit_code"], 5);
}

#[test]
fn exit_codes() {
    let t = tempfile::tempdir().unwrap();
    let out = cranio(&["fit", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_record(&out)["error"]["kind"], "usage");

    let out = cranio(&["fit", "--method", "lrr", "--components", "3", "--out", "x.json"]);
    assert_eq!(out.status.code(), Some(2), "missing --data");

    let missing = t.path().join("missing");
    let out = cranio(&["crossval", "--data", s(&missing), "--out", s(&t.path().join("r"))]);
    assert_eq!(out.status.code(), Some(3));

    let d = t.path().join("d");
    std::fs::create_dir_all(&d).unwrap();
    std::fs::write(d.join("dataset.json"), "{ not json").unwrap();
    let out = cranio(&["crossval", "--data", s(&d), "--out", s(&t.path().join("r"))]);
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(error_record(&out)["error"]["kind"], "format");

    let bad = t.path().join("bad.obj");
    std::fs::write(&bad, "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n").unwrap();
    let out = cranio(&["register", "--reference", s(&bad), "--target", s(&bad), "--out", s(&t.path().join("o.ply"))]);
    assert_eq!(out.status.code(), Some(7), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn fit_lrr_with_fifteen_components() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path().join("d");
    ok(&["synth", "--out", s(&d), "--seed", "3"]);
    let m = t.path().join("lrr.json");
    ok(&["fit", "--data", s(&d), "--method", "lrr", "--components", "15", "--out", s(&m)]);
    let model: cranio::model::ModelFile<f64> = cranio::model::load_model(&m).unwrap();
    assert_eq!(model.model.kind(), "lrr");
    assert_eq!(model.model.components(), 15);
    assert_eq!(model.model.skull_layout().total_dim(), 688);
    assert_eq!(model.model.face_layout().total_dim(), 5223);
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let t = tempfile::tempdir().unwrap();
    let (a, b) = (t.path().join("a"), t.path().join("b"));
    small_synth(&a, "0");
    small_synth(&b, "0");
    for f in ["dataset.json", "skull_005.json", "face_005.ply", "truth.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let (ma, mb) = (t.path().join("ma.json"), t.path().join("mb.json"));
    ok(&["fit", "--data", s(&a), "--method", "lrr", "--components", "3", "--out", s(&ma)]);
    ok(&["fit", "--data", s(&a), "--method", "lrr", "--components", "3", "--out", s(&mb)]);
    assert_eq!(std::fs::read(&ma).unwrap(), std::fs::read(&mb).unwrap());
    let other = t.path().join("c");
    ok(&["synth", "--out", s(&other), "--n", "8", "--latent-dim", "2", "--skull-stage", "0", "--face-vertices", "150", "--seed", "9"]);
    assert_ne!(std::fs::read(a.join("face_005.ply")).unwrap(), std::fs::read(other.join("face_005.ply")).unwrap());
}

#[test]
fn config_file_with_flag_override() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path().join("d");
    small_synth(&d, "0");
    let cfg = t.path().join("cfg.json");
    let from_cfg = t.path().join("from_cfg.json");
    std::fs::write(
        &cfg,
        serde_json::json!({"data": d, "method": "lrr", "components": 2, "out": from_cfg}).to_string(),
    )
    .unwrap();
    ok(&["fit", "--config", s(&cfg)]);
    let m: cranio::model::ModelFile<f64> = cranio::model::load_model(&from_cfg).unwrap();
    assert_eq!(m.model.components(), 2);
    let flagged = t.path().join("flagged.json");
    ok(&["fit", "--config", s(&cfg), "--components", "4", "--out", s(&flagged)]);
    let m: cranio::model::ModelFile<f64> = cranio::model::load_model(&flagged).unwrap();
    assert_eq!(m.model.components(), 4);
    std::fs::write(&cfg, r#"{"bogus": 1}"#).unwrap();
    assert_eq!(cranio(&["fit", "--config", s(&cfg)]).status.code(), Some(4));
}

#[test]
fn densify_and_register_commands() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path().join("d");
    small_synth(&d, "0");
    let dense = t.path().join("dense.json");
    let rep = t.path().join("densify.json");
    ok(&[
        "densify", "--mesh", s(&d.join("skull_template.ply")), "--landmarks", s(&d.join("skull_anatomical.json")),
        "--iterations", "1", "--out", s(&dense), "--report", s(&rep),
    ]);
    let tpl: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&dense).unwrap()).unwrap();
    assert!(tpl["points"].as_array().unwrap().len() > 13);

    let out = t.path().join("deformed.ply");
    let q = t.path().join("Q.json");
    let map = t.path().join("map.ply");
    ok(&[
        "register", "--reference", s(&d.join("face_template.ply")), "--target", s(&d.join("face_001.ply")),
        "--out", s(&out), "--report", s(&q), "--backward-map", s(&map),
    ]);
    let q: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&q).unwrap()).unwrap();
    for k in ["forward", "backward", "converged", "outlier_count"] {
        assert!(q.get(k).is_some(), "{k}");
    }
    assert!(q["forward"]["mean"].as_f64().unwrap() < 0.1);
    assert!(map.exists());
}

#[test]
fn help_documents_every_flag() {
    let cases: &[(&str, &[&str])] = &[
        ("densify", &["--mesh", "--landmarks", "--iterations", "--out", "--min-path-length", "--min-separation-edges", "--midplane-tolerance", "--report"]),
        ("register", &["--reference", "--target", "--out", "--report", "--params", "--outlier", "--snap", "--levels", "--alpha-start", "--alpha-end", "--boundary-weight", "--backward-map"]),
        ("assemble", &["--data", "--out"]),
        ("fit", &["--data", "--tables", "--topology", "--method", "--components", "--out", "--with-coefficients"]),
        ("predict", &["--model", "--skull", "--out", "--components"]),
        ("crossval", &["--data", "--methods", "--max-components", "--bin-width", "--out"]),
        ("synth", &["--spec", "--out", "--n", "--latent-dim", "--noise-sigma", "--skull-stage", "--face-vertices"]),
        ("report", &["--report", "--out"]),
    ];
    for (cmd, flags) in cases {
        let out = cranio(&[cmd, "--help"]);
        assert!(out.status.success());
        let help = String::from_utf8_lossy(&out.stdout);
        for f in flags.iter().chain(&["--config", "--seed", "--jobs", "--log-level"]) {
            assert!(help.contains(f), "{cmd} --help lacks {f}");
        }
    }
}
