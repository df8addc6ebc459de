mod common;

use std::fs;

use common::{itemfair, run_pipeline};

fn code(out: &std::process::Output) -> i32 {
    out.status.code().unwrap_or(-1)
}

#[test]
fn pipeline_writes_artifacts_and_manifests() {
    let dir = tempfile::tempdir().unwrap();
    run_pipeline(dir.path(), "7");
    for f in [
        "report.csv",
        "sweep.csv",
        "weights.tsv",
        "punishment.json",
        "group_weights.csv",
        "dist_grounding_k20.svg",
        "manifest_report.json",
        "manifest_evaluate_rerank.json",
    ] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let report = fs::read_to_string(dir.path().join("report.csv")).unwrap();
    let lines: Vec<&str> = report.lines().collect();
    assert!(lines[0].starts_with("scheme,method,MGU@1"));
    assert!(lines[1].starts_with("popularity,grounding,"));
    assert!(lines[2].starts_with("popularity,rerank,"));
    assert_eq!(lines.len(), 3 + 11);

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("manifest_ground.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["outputs"]["slates.jsonl"].as_str().unwrap().len(), 64);
}

#[test]
fn missing_inputs_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    for stage in [
        "split", "group", "ground", "evaluate", "reweight", "rerank", "sweep", "report",
    ] {
        assert_eq!(code(&itemfair(dir.path(), &[stage])), 2, "{stage}");
    }
}

#[test]
fn malformed_rows_exit_3_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let inter = dir.path().join("in.tsv");
    let items = dir.path().join("items_in.tsv");
    fs::write(&inter, "user_id\titem_id\ttimestamp\nu1\tm1\tnoon\n").unwrap();
    fs::write(&items, "item_id\ttitle\tgenres\nm1\tOne\tDrama\n").unwrap();
    let out = itemfair(
        dir.path(),
        &[
            "ingest",
            "--interactions",
            inter.to_str().unwrap(),
            "--items",
            items.to_str().unwrap(),
        ],
    );
    assert_eq!(code(&out), 3);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains(":2") && err.contains("timestamp"), "{err}");
}

#[test]
fn bad_settings_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&itemfair(dir.path(), &["--k", "0", "ground"])), 3);
    assert_eq!(code(&itemfair(dir.path(), &["--alpha", "-1", "rerank"])), 3);
    assert_eq!(code(&itemfair(dir.path(), &["simulate", "--beta", "2"])), 3);
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "bogus = 1\n").unwrap();
    assert_eq!(
        code(&itemfair(dir.path(), &["--config", cfg.to_str().unwrap(), "split"])),
        3
    );
}

#[test]
fn tampered_artifacts_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let sim = ["simulate", "--n-items", "100", "--n-users", "30", "--n-events", "2000"];
    assert_eq!(code(&itemfair(dir.path(), &sim)), 0);
    assert_eq!(code(&itemfair(dir.path(), &["ingest"])), 0);
    let p = dir.path().join("interactions.tsv");
    let mut text = fs::read_to_string(&p).unwrap();
    text.push_str("u000000\ti000000\t999999999\n");
    fs::write(&p, text).unwrap();
    let out = itemfair(dir.path(), &["split"]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("changed"));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(
        &cfg,
        "seed = 3\nk = [1, 3]\n[sim]\nn_items = 60\nn_users = 20\nn_events = 900\n",
    )
    .unwrap();
    let c = cfg.to_str().unwrap();
    assert_eq!(code(&itemfair(dir.path(), &["--config", c, "simulate"])), 0);
    let m: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("manifest_simulate.json")).unwrap()).unwrap();
    assert_eq!(m["seed"], 3);
    assert_eq!(m["params"]["sim"]["n_items"], 60);
    assert_eq!(
        code(&itemfair(dir.path(), &["--config", c, "--seed", "9", "simulate"])),
        0
    );
    let m: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("manifest_simulate.json")).unwrap()).unwrap();
    assert_eq!(m["seed"], 9);
    assert_eq!(m["params"]["sim"]["seed"], 9);
}

#[test]
fn history_shaped_slates_score_zero_unfairness() {
    let dir = tempfile::tempdir().unwrap();
    let sim = ["simulate", "--n-items", "120", "--n-users", "40", "--n-events", "3000"];
    for stage in [&sim[..], &["ingest"], &["split"], &["group"]] {
        assert_eq!(code(&itemfair(dir.path(), stage)), 0);
    }
    let seqs = itemfair::dataset::read_sequences(&dir.path().join("sequences.jsonl")).unwrap();
    let slates: Vec<itemfair::metrics::Slate> = seqs
        .iter()
        .map(|s| itemfair::metrics::Slate::new(s.id.clone(), s.history.clone()))
        .collect();
    let path = dir.path().join("mirror.jsonl");
    itemfair::metrics::write_slates(&path, &slates).unwrap();
    let out = itemfair(
        dir.path(),
        &[
            "--k",
            "10",
            "evaluate",
            "--slates",
            path.to_str().unwrap(),
            "--method",
            "mirror",
        ],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let eval: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("eval_mirror.json")).unwrap()).unwrap();
    let r = &eval["reports"][0];
    assert!(r["mgu"].as_f64().unwrap() < 1e-12);
    assert!(r["dgu"].as_f64().unwrap() < 1e-12);
}
