use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use multiview_core::matrix::write_labelled_csv;
use multiview_core::FeatureMatrix;
use serde_json::Value;

fn multiview(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_multiview"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = multiview(args);
    assert!(
        out.status.success(),
        "multiview {} failed: {}",
        args.join(" "),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code(args: &[&str]) -> i32 {
    multiview(args).status.code().expect("exit code")
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

fn json(p: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(p).unwrap()).unwrap()
}

fn simulate(dir: &Path, n: &str) -> PathBuf {
    let data = dir.join("data");
    ok(&["simulate", "--out", &s(&data), "--seed", "3", "--n", n, "--p", "12,80", "--response-weights", "1,0.5"]);
    data
}

#[test]
fn subcommands_compose_on_shared_files() {
    let tmp = tempfile::tempdir().unwrap();
    let data = simulate(tmp.path(), "150");
    let (v1, v2, y) = (s(&data.join("view1.csv")), s(&data.join("view2.csv")), s(&data.join("response.csv")));
    for f in ["view1.csv", "view2.csv", "response.csv", "truth.json"] {
        assert!(data.join(f).exists(), "{f}");
    }

    let ranks = tmp.path().join("ranks");
    ok(&["ranks", "--views", &v1, &v2, "--names", "a,b", "--out", &s(&ranks)]);
    let chosen = json(&ranks.join("chosen_ranks.json"));
    assert_eq!(chosen["joint_rank"], 2);
    assert!(ranks.join("scree.csv").exists() && ranks.join("bound_samples.csv").exists());

    let aj = tmp.path().join("ajive");
    ok(&["ajive", "--views", &v1, &v2, "--names", "a,b", "--external", &format!("y={y}"), "--out", &s(&aj)]);
    assert_eq!(json(&aj.join("chosen_ranks.json")), chosen);
    let scores = FeatureMatrix::from_path(aj.join("joint_scores.csv")).unwrap();
    assert_eq!(scores.feature_names(), &["JC1", "JC2"]);
    let corr = std::fs::read_to_string(aj.join("correlations.csv")).unwrap();
    assert!(corr.lines().next().unwrap().ends_with(",y"));
    for f in ["variance.json", "sigma.json", "ranks.json", "extremes.csv", "individual_scores_a.csv", "joint_loadings_b.csv"] {
        assert!(aj.join(f).exists(), "{f}");
    }

    let out = ok(&["extremes", "--scores", &s(&aj.join("joint_scores.csv")), "--component", "JC1", "--k", "3"]);
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 7);

    let pc = tmp.path().join("pca");
    ok(&["pca", "--views", &v1, &v2, "--components", "2", "--out", &s(&pc)]);
    let loadings = std::fs::read_to_string(pc.join("loadings.csv")).unwrap();
    assert_eq!(loadings.lines().count(), 1 + 12 + 80);

    for source in ["raw", "pca", "ajive"] {
        let reg = tmp.path().join(format!("regress_{source}"));
        ok(&[
            "regress", "--views", &v1, &v2, "--response", &y, "--source", source, "--total", "6", "--folds", "5",
            "--repeats", "1", "--n-lambda", "10", "--out", &s(&reg),
        ]);
        let model = json(&reg.join("model.json"));
        assert_eq!(model["source"], source);
        assert!(model["cv_mse"].as_f64().unwrap() < model["null_mse"].as_f64().unwrap());
        assert!(reg.join("cv_report.csv").exists());
    }
}

#[test]
fn run_drops_units_missing_from_a_view() {
    let tmp = tempfile::tempdir().unwrap();
    let data = simulate(tmp.path(), "100");
    let text = std::fs::read_to_string(data.join("view2.csv")).unwrap();
    let kept: Vec<&str> = text.lines().filter(|l| !l.starts_with("u0042,")).collect();
    std::fs::write(data.join("view2.csv"), kept.join("\n") + "\n").unwrap();
    let cfg = tmp.path().join("config.json");
    std::fs::write(
        &cfg,
        r#"{"views": [{"name": "a", "matrix": "data/view1.csv"}, {"name": "b", "matrix": "data/view2.csv"}],
            "ranks": {"initial": [3, 3]}, "output": "out", "seed": 5}"#,
    )
    .unwrap();
    let out = ok(&["run", "--config", &s(&cfg)]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("dropping 1 units"));
    let run = tmp.path().join("out");
    let prov = json(&run.join("provenance.json"));
    assert_eq!(prov["dropped_units"], serde_json::json!(["u0042"]));
    assert_eq!(prov["seed"], 5);
    assert_eq!(prov["config_sha256"].as_str().unwrap().len(), 64);
    let scores = FeatureMatrix::from_path(run.join("joint_scores.csv")).unwrap();
    assert_eq!(scores.nrows(), 99);
    for f in prov["outputs"].as_array().unwrap() {
        assert!(run.join(f.as_str().unwrap()).exists(), "{f}");
    }

    // the seed flag overrides the config
    ok(&["run", "--config", &s(&cfg), "--out", &s(&tmp.path().join("other")), "--seed", "6"]);
    assert_eq!(json(&tmp.path().join("other/chosen_ranks.json"))["seed"], 6);
}

#[test]
fn score_outputs_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let data = simulate(tmp.path(), "80");
    let out = tmp.path().join("aj");
    ok(&["ajive", "--views", &s(&data.join("view1.csv")), &s(&data.join("view2.csv")), "--out", &s(&out)]);
    for f in [
        "joint_scores.csv",
        "individual_scores_view1.csv",
        "joint_loadings_view2.csv",
        "individual_loadings_view1.csv",
        "correlations.csv",
    ] {
        let p = out.join(f);
        let (label, m) = FeatureMatrix::read_labelled_csv(std::fs::File::open(&p).unwrap()).unwrap();
        let again = tmp.path().join("again.csv");
        let mut buf = Vec::new();
        write_labelled_csv(&mut buf, &label, m.unit_ids(), m.feature_names(), m.values()).unwrap();
        std::fs::write(&again, buf).unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), std::fs::read(&again).unwrap(), "{f}");
    }
}

#[test]
fn extremes_reports_both_ends() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("s.csv");
    std::fs::write(&p, "unit_id,JC1\na,3\nb,-1\nc,2\n").unwrap();
    let out = ok(&["extremes", "--scores", &s(&p), "--component", "JC1", "--k", "1"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text, "component,side,rank,unit_id,score\nJC1,top,1,a,3.0\nJC1,bottom,1,b,-1.0\n");
    assert_eq!(code(&["extremes", "--scores", &s(&p), "--component", "JC7"]), 3);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    assert_eq!(code(&["run"]), 2);
    assert_eq!(code(&["frobnicate"]), 2);
    assert_eq!(code(&["run", "--config", &s(&t.join("missing.json"))]), 2);
    std::fs::write(t.join("bad.json"), "{ not json").unwrap();
    assert_eq!(code(&["run", "--config", &s(&t.join("bad.json")), "--out", &s(&t.join("o"))]), 2);
    std::fs::write(
        t.join("unknown.json"),
        r#"{"views": [{"name": "a", "matrix": "x.csv"}, {"name": "b", "matrix": "x.csv"}], "colour": 1}"#,
    )
    .unwrap();
    assert_eq!(code(&["run", "--config", &s(&t.join("unknown.json")), "--out", &s(&t.join("o"))]), 2);
    std::fs::write(
        t.join("nofile.json"),
        r#"{"views": [{"name": "a", "matrix": "x.csv"}, {"name": "b", "matrix": "y.csv"}]}"#,
    )
    .unwrap();
    assert_eq!(code(&["run", "--config", &s(&t.join("nofile.json")), "--out", &s(&t.join("o"))]), 2);

    std::fs::write(t.join("nan.csv"), "unit_id,f1,f2\nu1,1,2\nu2,NaN,3\nu3,4,5\n").unwrap();
    assert_eq!(code(&["pca", "--views", &s(&t.join("nan.csv")), "--out", &s(&t.join("o"))]), 3);
    std::fs::write(t.join("ragged.csv"), "unit_id,f1,f2\nu1,1,2\nu2,3\n").unwrap();
    assert_eq!(code(&["pca", "--views", &s(&t.join("ragged.csv")), "--out", &s(&t.join("o"))]), 3);
}

fn square(id: &str, x0: f64, y0: f64, x1: f64, y1: f64) -> String {
    format!(
        r#"{{"type":"Feature","properties":{{"id":"{id}"}},"geometry":{{"type":"Polygon","coordinates":[[[{x0},{y0}],[{x1},{y0}],[{x1},{y1}],[{x0},{y1}],[{x0},{y0}]]]}}}}"#
    )
}

#[test]
fn aggregate_weights_by_area() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    let fc = |f: Vec<String>| format!(r#"{{"type":"FeatureCollection","features":[{}]}}"#, f.join(","));
    std::fs::write(t.join("boundary.geojson"), fc(vec![square("city", 0.0, 0.0, 4.0, 2.0)])).unwrap();
    std::fs::write(
        t.join("units.geojson"),
        fc(vec![square("left", 0.0, 0.0, 1.0, 2.0), square("mid", 1.0, 0.0, 3.0, 2.0)]),
    )
    .unwrap();
    std::fs::write(t.join("sites.csv"), "id,x,y\nw,1,1\ne,3,1\n").unwrap();
    std::fs::write(t.join("features.csv"), "site_id,calls\nw,10\ne,20\n").unwrap();
    let out = t.join("out");
    ok(&[
        "aggregate", "--units", &s(&t.join("units.geojson")), "--boundary", &s(&t.join("boundary.geojson")),
        "--sites", &s(&t.join("sites.csv")), "--features", &s(&t.join("features.csv")), "--out", &s(&out),
    ]);
    let gamma = FeatureMatrix::from_path(out.join("overlap.csv")).unwrap();
    assert_eq!(gamma.unit_ids(), &["left", "mid"]);
    let g = gamma.values();
    assert!((g[[0, 0]] - 2.0).abs() < 1e-12 && g[[0, 1]].abs() < 1e-12);
    assert!((g[[1, 0]] - 2.0).abs() < 1e-12 && (g[[1, 1]] - 2.0).abs() < 1e-12);
    let f = FeatureMatrix::from_path(out.join("features.csv")).unwrap();
    assert!((f.values()[[0, 0]] - 10.0).abs() < 1e-12);
    assert!((f.values()[[1, 0]] - 15.0).abs() < 1e-12);
}

#[test]
fn patches_from_images_and_from_embeddings_agree() {
    let tmp = tempfile::tempdir().unwrap();
    let imgs = tmp.path().join("images");
    std::fs::create_dir(&imgs).unwrap();
    for (id, shade) in [("ward_a", 40u8), ("ward_b", 200u8)] {
        let img = image::RgbImage::from_fn(48, 48, |x, y| image::Rgb([shade, (x * 5) as u8, (y * 5) as u8]));
        img.save(imgs.join(format!("{id}.png"))).unwrap();
    }
    let first = tmp.path().join("first");
    ok(&[
        "patches", "--images", &s(&imgs), "--count", "3", "--size", "16", "--grid", "2", "--seed", "9", "--out",
        &s(&first),
    ]);
    let manifest = std::fs::read_to_string(first.join("manifest.csv")).unwrap();
    assert_eq!(manifest.lines().count(), 1 + 6);
    let f = FeatureMatrix::from_path(first.join("features.csv")).unwrap();
    assert_eq!(f.unit_ids(), &["ward_a", "ward_b"]);
    assert_eq!(f.ncols(), 3);

    let second = tmp.path().join("second");
    ok(&[
        "patches", "--manifest", &s(&first.join("manifest.csv")), "--embeddings", &s(&first.join("embeddings.bin")),
        "--sidecar", &s(&first.join("embeddings.json")), "--out", &s(&second),
    ]);
    assert_eq!(
        std::fs::read(first.join("features.csv")).unwrap(),
        std::fs::read(second.join("features.csv")).unwrap()
    );
    assert_eq!(code(&["patches", "--out", &s(&second)]), 2);
}
