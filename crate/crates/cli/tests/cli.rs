use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use crowdsense_core::data_model::ActivityClass;
use crowdsense_core::features::{feature_csv_header, N_FEATURES};
use serde_json::Value;
use tempfile::TempDir;

fn crowdsense(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crowdsense"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = crowdsense(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn full_recipe_runs_and_is_reproducible() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(
        d,
        &[
            "simulate",
            "dataset",
            "--per-class",
            "40",
            "--output",
            "all.jsonl",
        ],
    );
    ok(
        d,
        &["ingest", "--input", "all.jsonl", "--output", "clean.jsonl"],
    );
    ok(
        d,
        &[
            "split",
            "--input",
            "clean.jsonl",
            "--per-class-test",
            "10",
            "--train",
            "train.jsonl",
            "--test",
            "test.jsonl",
        ],
    );
    ok(
        d,
        &[
            "features",
            "--input",
            "train.jsonl",
            "--output",
            "train.csv",
        ],
    );
    ok(
        d,
        &["features", "--input", "test.jsonl", "--output", "test.csv"],
    );
    let train = ["train", "--features", "train.csv", "--n-trees", "30"];
    ok(d, &[&train[..], &["--output", "a.model"]].concat());
    ok(d, &[&train[..], &["--output", "b.model"]].concat());
    assert_eq!(
        fs::read(d.join("a.model")).unwrap(),
        fs::read(d.join("b.model")).unwrap()
    );

    let stdout = ok(
        d,
        &[
            "eval",
            "--model",
            "a.model",
            "--features",
            "test.csv",
            "--output",
            "eval.json",
        ],
    );
    assert_eq!(stdout.lines().count(), 3);
    let reports = json(&d.join("eval.json"));
    let reports = reports.as_array().unwrap();
    let modes: Vec<&str> = reports
        .iter()
        .map(|r| r["mode"].as_str().unwrap())
        .collect();
    assert_eq!(modes, ["fine", "merged-posthoc", "merged-posthoc"]);
    let fine = reports[0]["accuracy"].as_f64().unwrap();
    assert!(reports[1..]
        .iter()
        .all(|r| r["accuracy"].as_f64().unwrap() >= fine));
    let text = ok(d, &["report", "--input", "eval.json"]);
    assert!(text.contains("Backpack/Bag") && text.contains("merged-posthoc"));

    ok(d, &["simulate", "observations", "--output", "obs.csv"]);
    ok(
        d,
        &["crowd-fit", "--input", "obs.csv", "--output", "crowd.json"],
    );
    assert_eq!(json(&d.join("crowd.json"))["n_obs"], 246);

    fs::create_dir(d.join("fleet")).unwrap();
    ok(
        d,
        &["simulate", "write-specs", "--output", "fleet/specs.json"],
    );
    ok(
        d,
        &[
            "simulate",
            "scenario-file",
            "--vehicles",
            "4",
            "--spec-file",
            "specs.json",
            "--output",
            "fleet/scenario.json",
        ],
    );
    let run = [
        "simulate",
        "run",
        "--scenario",
        "fleet/scenario.json",
        "--model",
        "a.model",
        "--crowd",
        "crowd.json",
    ];
    ok(d, &[&run[..], &["--output", "r1.json"]].concat());
    ok(d, &[&run[..], &["--output", "r2.json"]].concat());
    assert_eq!(
        fs::read(d.join("r1.json")).unwrap(),
        fs::read(d.join("r2.json")).unwrap()
    );
    let summary = &json(&d.join("r1.json"))["summary"];
    assert_eq!(summary["n_trips"], 4);
    assert_eq!(summary["n_unassigned_riders"], 10);
}

/// Every class gets its own constant feature vector.
fn separable_features(path: &Path) {
    let mut w = csv::Writer::from_path(path).unwrap();
    w.write_record(feature_csv_header()).unwrap();
    for class in ActivityClass::all() {
        for k in 0..6 {
            let mut rec = vec![format!("{}-{k}", class.token()), class.token()];
            rec.extend((0..N_FEATURES).map(|f| ((class.index() * 7 + f) % 15).to_string()));
            rec.push("false".into());
            w.write_record(&rec).unwrap();
        }
    }
    w.flush().unwrap();
}

#[test]
fn eval_on_perfect_split_scores_one() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    separable_features(&d.join("f.csv"));
    ok(
        d,
        &[
            "train",
            "--features",
            "f.csv",
            "--n-trees",
            "5",
            "--output",
            "m",
        ],
    );
    ok(
        d,
        &[
            "eval",
            "--model",
            "m",
            "--features",
            "f.csv",
            "--output",
            "e.json",
        ],
    );
    for r in json(&d.join("e.json")).as_array().unwrap() {
        assert_eq!(r["accuracy"], 1.0);
    }
}

#[test]
fn merged_training_reports_retrain_mode() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    separable_features(&d.join("f.csv"));
    ok(
        d,
        &[
            "train",
            "--features",
            "f.csv",
            "--model",
            "mlp",
            "--epochs",
            "5",
            "--merge",
            "bus-posture",
            "--output",
            "m",
        ],
    );
    ok(
        d,
        &[
            "eval",
            "--model",
            "m",
            "--features",
            "f.csv",
            "--output",
            "e.json",
        ],
    );
    let reports = json(&d.join("e.json"));
    assert_eq!(reports[0]["mode"], "merged-retrain");
    assert_eq!(reports[0]["map"], "bus-posture");
    let out = crowdsense(
        d,
        &[
            "eval",
            "--model",
            "m",
            "--features",
            "f.csv",
            "--merge-mode",
            "posthoc",
            "--output",
            "x.json",
        ],
    );
    assert_eq!(code(&out), 1);
    assert!(!d.join("x.json").exists());
}

#[test]
fn conserved_blocks_audit_clean() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let mut csv = String::from("service_date,block_id,trip_id,stop_sequence,ons,offs\n");
    for b in 0..50 {
        csv += &format!("2016-11-01,b{b},t{b},1,{},0\n", b % 7);
        csv += &format!("2016-11-01,b{b},t{b},2,3,3\n");
        csv += &format!("2016-11-01,b{b},t{b},3,0,{}\n", b % 7);
    }
    fs::write(d.join("apc.csv"), csv).unwrap();
    ok(
        d,
        &[
            "apc-audit",
            "--input",
            "apc.csv",
            "--output",
            "a.json",
            "--histogram",
            "h.csv",
            "--cropped",
            "c.csv",
            "--shards",
            "4",
        ],
    );
    let r = json(&d.join("a.json"));
    assert_eq!(
        (
            r["n_blocks"].as_u64(),
            r["mean"].as_f64(),
            r["nonzero_fraction"].as_f64()
        ),
        (Some(50), Some(0.0), Some(0.0))
    );
    assert_eq!(
        fs::read_to_string(d.join("c.csv")).unwrap(),
        fs::read_to_string(d.join("h.csv")).unwrap()
    );
}

#[test]
fn exit_codes_follow_error_class() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    assert_eq!(code(&crowdsense(d, &["train", "--bogus"])), 1);
    assert_eq!(code(&crowdsense(d, &[])), 1);
    assert_eq!(
        code(&crowdsense(
            d,
            &["ingest", "--input", "missing.jsonl", "--output", "o.jsonl"]
        )),
        1
    );
    assert_eq!(
        code(&crowdsense(
            d,
            &[
                "ingest",
                "--input",
                "missing.jsonl",
                "--output",
                "no/dir/o.jsonl"
            ]
        )),
        1
    );
    let out = crowdsense(
        d,
        &[
            "simulate",
            "run",
            "--scenario",
            "s",
            "--model",
            "m",
            "--crowd",
            "c",
            "--output",
            "o",
            "--thresholds",
            "0.9,0.5,3,8",
        ],
    );
    assert_eq!(code(&out), 1);
    assert!(code(&crowdsense(d, &["--help"])) == 0);

    fs::write(
        d.join("bad.csv"),
        "service_date,block_id,trip_id,stop_sequence,ons,offs\nd,b,t,1,x,0\n",
    )
    .unwrap();
    let out = crowdsense(
        d,
        &["apc-audit", "--input", "bad.csv", "--output", "a.json"],
    );
    assert_eq!(code(&out), 2);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.contains("bad.csv") && err.contains("line 2") && err.contains("ons"),
        "{err}"
    );
    assert!(!d.join("a.json").exists());

    separable_features(&d.join("f.csv"));
    fs::write(d.join("junk.model"), b"CSNS not a model").unwrap();
    let out = crowdsense(
        d,
        &[
            "eval",
            "--model",
            "junk.model",
            "--features",
            "f.csv",
            "--output",
            "e.json",
        ],
    );
    assert_eq!(code(&out), 2);
}
