use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use impactlab::dataforge::save_dataset;
use impactlab::dynamics::{contact_velocity, BodyParams, ContactGeometry, PlanarState};
use impactlab::gp::LearnedContactModel;
use impactlab::identification::FitResult;
use impactlab::models::{predict_post_velocity, ModelId, ModelParams};
use impactlab::trial::ImpactTrial;
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_impactlab"))
        .args(args)
        .current_dir(dir)
        .env("IMPACTLAB_THREADS", "1")
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = run(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn lines(path: &Path) -> usize {
    fs::read_to_string(path).unwrap().lines().count()
}

/// Noise-free trials produced by an analytical model.
fn model_dataset(dir: &Path, model: ModelId, params: ModelParams, n: usize) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let body = BodyParams::new(0.04, 2e-5).unwrap();
    let mut trials = Vec::new();
    while trials.len() < n {
        let a: f64 = rng.random_range(-2.8..-0.35);
        let contact = ContactGeometry::new(0.05 * a.cos(), 0.035 * a.sin()).unwrap();
        let v = Vector3::new(rng.random_range(-0.5..0.5), rng.random_range(-2.5..-0.5), rng.random_range(-10.0..10.0));
        if contact_velocity(&contact, &v).y >= -1e-3 {
            continue;
        }
        let post = predict_post_velocity(model, &params, &body, &contact, &v).unwrap();
        trials.push(ImpactTrial {
            trial_id: trials.len() as u64,
            body,
            contact,
            state_pre: PlanarState::new(Vector3::zeros(), v),
            state_post: PlanarState::new(Vector3::zeros(), post),
        });
    }
    save_dataset(&dir.join("model.csv"), &trials).unwrap();
    "model.csv".into()
}

fn read_fits(path: &Path) -> Vec<FitResult> {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn gen_writes_requested_rows_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["gen", "--n", "500", "--seed", "42", "--out", "a/trials.csv"]);
    ok(d, &["gen", "--n", "500", "--seed", "42", "--out", "b/trials.csv"]);
    assert_eq!(lines(&d.join("a/trials.csv")), 501);
    assert_eq!(fs::read(d.join("a/trials.csv")).unwrap(), fs::read(d.join("b/trials.csv")).unwrap());
    assert!(d.join("a/manifest.json").is_file());

    ok(d, &["gen", "--n", "0", "--out", "empty.csv"]);
    let text = fs::read_to_string(d.join("empty.csv")).unwrap();
    assert_eq!(text.lines().count(), 1);
    assert!(text.starts_with("trial_id,"));
}

#[test]
fn gen_reports_config_errors_by_field() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("bad.toml"), "n_trials = 10\n\n[contact]\nstifness = 1e6\n").unwrap();
    let out = run(d, &["gen", "--config", "bad.toml", "--out", "x.csv"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("stifness"), "{err}");
    assert!(err.contains("line 4") || err.contains(":4"), "{err}");
    assert!(!d.join("x.csv").exists());
}

#[test]
fn identify_recovers_generating_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let data = model_dataset(d, ModelId::ApNewton, ModelParams::new(0.1, 0.5).unwrap(), 60);
    ok(d, &["identify", "--model", "ap-newton", "--data", &data, "--k", "40", "--m", "5", "--out", "fit.json"]);
    let fit = &read_fits(&d.join("fit.json"))[0];
    assert!((fit.mean_params.mu - 0.1).abs() < 1e-3, "{:?}", fit.mean_params);
    assert!((fit.mean_params.epsilon - 0.5).abs() < 1e-3, "{:?}", fit.mean_params);
    assert!(fit.std_params.mu < 1e-3 && fit.std_params.epsilon < 1e-3);
}

#[test]
fn identify_table_shapes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["gen", "--n", "40", "--seed", "5", "--out", "t.csv"]);

    let out = ok(d, &["identify", "--model", "all", "--data", "t.csv", "--k", "20", "--m", "1", "--out", "all.json"]);
    let fits = read_fits(&d.join("all.json"));
    assert_eq!(fits.len(), 6);
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().count(), 7);
    for f in &fits {
        assert_eq!(f.std_params.mu, 0.0);
        assert_eq!(f.std_params.epsilon, 0.0);
    }

    // A surface needs a single model; nothing is written otherwise.
    let out = run(d, &["identify", "--model", "all", "--data", "t.csv", "--out", "x.json", "--surface", "s.csv"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!d.join("x.json").exists() && !d.join("s.csv").exists());

    ok(d, &["identify", "--model", "whittaker", "--data", "t.csv", "--m", "2", "--out", "w.json", "--surface", "s.csv"]);
    assert_eq!(lines(&d.join("s.csv")), 1 + 64 * 64);

    let out = run(d, &["identify", "--model", "whittaker", "--data", "t.csv", "--k", "41", "--out", "k.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!d.join("k.json").exists());
}

#[test]
fn train_rejects_invalid_combinations_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["gen", "--n", "30", "--out", "t.csv"]);
    for args in [
        &["--class", "data-driven-rigid", "--target", "y2"][..],
        &["--class", "data-driven", "--target", "y1"],
        &["--class", "reinforced-residual"],
        &["--class", "data-driven-rigid", "--base-model", "mirtich"],
        &["--class", "reinforced-param", "--target", "y2", "--base-model", "mirtich"],
        &["--class", "nonsense"],
    ] {
        let mut full = vec!["train", "--data", "t.csv", "--out", "m.json"];
        full.extend_from_slice(args);
        let out = run(d, &full);
        assert_ne!(out.status.code(), Some(0), "{args:?}");
        assert!(!out.stderr.is_empty());
        assert!(!d.join("m.json").exists(), "{args:?}");
    }
}

#[test]
fn trained_residual_model_loads_and_predicts() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["gen", "--n", "60", "--seed", "8", "--out", "t.csv"]);
    ok(d, &["train", "--class", "reinforced-residual", "--base-model", "ap-newton", "--features", "x1", "--data", "t.csv", "--out", "rr.json"]);
    let model = LearnedContactModel::load(&d.join("rr.json")).unwrap();
    let trials = impactlab::dataforge::load_dataset(&d.join("t.csv")).unwrap().trials;
    // The split's training half was used; every trial is still predictable.
    assert!(!model.train_ids.is_empty() && model.train_ids.len() < trials.len());
    for t in &trials {
        let p = model.predict_trial(t).unwrap();
        assert!(p.v_post.iter().all(|v| v.is_finite()));
    }
}

#[test]
fn residual_model_on_empty_data_is_its_base() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["gen", "--n", "0", "--out", "empty.csv"]);
    fs::write(
        d.join("fits.json"),
        r#"[{"model":"mirtich","k":1,"m":1,"seed":0,"mean_params":{"mu":0.3,"epsilon":0.6},"std_params":{"mu":0.0,"epsilon":0.0},"iterations":[]}]"#,
    )
    .unwrap();
    ok(d, &["train", "--class", "reinforced-residual", "--base-model", "mirtich", "--fits", "fits.json", "--data", "empty.csv", "--out", "rr.json"]);
    let model = LearnedContactModel::load(&d.join("rr.json")).unwrap();
    let params = ModelParams::new(0.3, 0.6).unwrap();
    let data = model_dataset(d, ModelId::Whittaker, params, 50);
    for t in impactlab::dataforge::load_dataset(&d.join(data)).unwrap().trials {
        let expected = predict_post_velocity(ModelId::Mirtich, &params, &t.body, &t.contact, t.v_pre()).unwrap();
        assert_eq!(model.predict_trial(&t).unwrap().v_post, expected);
    }
}

#[test]
fn curve_has_one_row_per_size() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["gen", "--n", "650", "--seed", "2", "--out", "t.csv"]);
    ok(d, &["curve", "--data", "t.csv", "--model", "ap-poisson", "--sizes", "10:450:20", "--out", "c.csv"]);
    let text = fs::read_to_string(d.join("c.csv")).unwrap();
    assert_eq!(text.lines().next(), Some("x,y,std"));
    assert_eq!(text.lines().count(), 1 + 23);

    // Sizes beyond the training split are refused.
    let out = run(d, &["curve", "--data", "t.csv", "--model", "ap-poisson", "--sizes", "10:600:100", "--out", "big.csv"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!d.join("big.csv").exists());
}

#[test]
fn eval_asserts_dominance_and_writes_densities() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["gen", "--n", "120", "--seed", "4", "--out", "t.csv"]);
    ok(d, &["train", "--class", "data-driven-rigid", "--data", "t.csv", "--out", "ddr.json"]);
    let out = ok(d, &["eval", "--data", "t.csv", "--models", "all,irb-bound,best-post-hoc,ddr.json", "--out", "ev"]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("dominance: holds"));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("ev/eval_report.json")).unwrap()).unwrap();
    assert_eq!(report["dominance"]["holds"], true);
    let names: Vec<&str> = report["rows"].as_array().unwrap().iter().map(|r| r["name"].as_str().unwrap()).collect();
    for name in ["irb-bound", "best-post-hoc", "ddr", "whittaker"] {
        assert!(names.contains(&name), "{names:?}");
        assert!(d.join(format!("ev/kde/{name}.csv")).is_file());
    }

    // Rerunning replaces the manifest entry rather than appending one.
    ok(d, &["eval", "--data", "t.csv", "--models", "all,irb-bound,best-post-hoc,ddr.json", "--out", "ev"]);
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("ev/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["runs"].as_array().unwrap().len(), 1);

    ok(d, &["report", "--eval", "ev/eval_report.json", "--out", "report.md"]);
    assert!(fs::read_to_string(d.join("report.md")).unwrap().contains("holds on every trial"));
}

#[test]
fn eval_refuses_missing_models_and_leakage() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["gen", "--n", "60", "--seed", "6", "--out", "t.csv"]);
    let out = run(d, &["eval", "--data", "t.csv", "--models", "nope.json", "--out", "ev"]);
    assert_eq!(out.status.code(), Some(1));

    // A model trained on every trial overlaps any evaluation split.
    ok(d, &["train", "--class", "data-driven-rigid", "--split", "none", "--data", "t.csv", "--out", "leaky.json"]);
    let out = run(d, &["eval", "--data", "t.csv", "--models", "whittaker,leaky.json", "--out", "ev2"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("leak"), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!d.join("ev2/eval_report.json").exists());
}
