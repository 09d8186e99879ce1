use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gazequery_cli::manifest::{RunManifest, MANIFEST_FILE};
use serde_json::Value;

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/home-01")
}

fn gq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gazequery")).args(args).env_remove("RUST_LOG").output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

/// The single JSON line a failed run prints on stderr.
fn error_line(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().unwrap_or_else(|| panic!("no stderr in {out:?}"));
    serde_json::from_str(line).unwrap_or_else(|e| panic!("stderr `{line}` is not JSON: {e}"))
}

fn copy_dir(from: &Path, to: &Path) {
    std::fs::create_dir_all(to).unwrap();
    for e in std::fs::read_dir(from).unwrap() {
        let e = e.unwrap();
        let dst = to.join(e.file_name());
        if e.file_type().unwrap().is_dir() {
            copy_dir(&e.path(), &dst);
        } else {
            std::fs::copy(e.path(), dst).unwrap();
        }
    }
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(gq(&["--help"]).status.code(), Some(0));
    assert_eq!(gq(&["--version"]).status.code(), Some(0));
    assert_eq!(gq(&["respond", "--help"]).status.code(), Some(0));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(gq(&["analyze", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(gq(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(gq(&["analyze", "--out", "x"]).status.code(), Some(2), "--session is required");
    assert_eq!(gq(&[]).status.code(), Some(2));
}

#[test]
fn synth_then_analyze_writes_outputs_and_manifests() {
    let dir = tempfile::tempdir().unwrap();
    let sess = dir.path().join("sess");
    let out = dir.path().join("analysis");
    let r = gq(&["synth", "--seed", "3", "--queries", "40", "--out", s(&sess)]);
    assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));
    assert!(sess.join("manifest.json").is_file());
    let m = RunManifest::read(&sess).unwrap();
    assert_eq!((m.subcommand.as_str(), m.status.as_str()), ("synth", "ok"));

    let r = gq(&["analyze", "--session", s(&sess), "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));
    for f in ["cooccurrence.csv", "duration_profile.csv", "relevancy_points.csv", "startup.csv", "summary.json"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let startup = std::fs::read_to_string(out.join("startup.csv")).unwrap();
    assert_eq!(startup.lines().count(), 41, "header plus one row per query");
    let m = RunManifest::read(&out).unwrap();
    assert_eq!(m.status, "ok");
    assert_eq!(m.config["pronoun_window"], 5);
    assert!(m.outputs.iter().any(|o| o.ends_with("summary.json")));
}

#[test]
fn config_file_values_apply_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("gq.toml");
    std::fs::write(&cfg, "seed = 11\n[analyze]\npronoun_window = 2\nradius = 1\n").unwrap();
    let out = dir.path().join("a");
    let r = gq(&["--config", s(&cfg), "analyze", "--session", s(&fixture()), "--out", s(&out), "--radius", "2"]);
    assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));
    let m = RunManifest::read(&out).unwrap();
    assert_eq!(m.config["pronoun_window"], 2);
    assert_eq!(m.config["radius"], 2);

    std::fs::write(&cfg, "[analyze]\nwindow = 2\n").unwrap();
    let r = gq(&["--config", s(&cfg), "analyze", "--session", s(&fixture()), "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(1), "unknown config keys are errors");
}

#[test]
fn missing_backend_exits_one_naming_the_role() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r");
    let r = gq(&["respond", "--session", s(&fixture()), "--variant", "VOILA-G", "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(1));
    let e = error_line(&r);
    assert_eq!(e["error"]["kind"], "NotConfigured", "{e}");
    assert!(e["error"]["role"].is_string(), "{e}");
    let role = e["error"]["role"].as_str().unwrap();
    assert!(e["error"]["message"].as_str().unwrap().contains(role), "{e}");
    let m = RunManifest::read(&out).unwrap();
    assert_eq!(m.status, "error");
    assert_eq!(m.error.unwrap().role.as_deref(), Some(role));
}

#[test]
fn unknown_variant_and_query_are_domain_errors() {
    let dir = tempfile::tempdir().unwrap();
    let backends = fixture().join("backends.toml");
    let out = dir.path().join("r");
    let r = gq(&[
        "respond",
        "--session",
        s(&fixture()),
        "--backends",
        s(&backends),
        "--variant",
        "VOILA-X",
        "--out",
        s(&out),
    ]);
    assert_eq!(r.status.code(), Some(1));
    assert_eq!(error_line(&r)["error"]["kind"], "UnknownVariant");
    let r =
        gq(&["respond", "--session", s(&fixture()), "--backends", s(&backends), "--query", "q99", "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(1));
    assert_eq!(error_line(&r)["error"]["kind"], "UnknownQuery");
}

#[test]
fn eval_without_truth_fails() {
    let dir = tempfile::tempdir().unwrap();
    let r = gq(&["eval", "--results", s(dir.path()), "--out", s(&dir.path().join("e"))]);
    assert_eq!(r.status.code(), Some(1));
    assert_eq!(error_line(&r)["error"]["kind"], "MissingTruth");
}

#[test]
fn localize_writes_frame_choices() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("loc");
    let backends = fixture().join("backends.toml");
    let r = gq(&[
        "localize",
        "--session",
        s(&fixture()),
        "--backends",
        s(&backends),
        "--query-id",
        "q03",
        "--out",
        s(&out),
    ]);
    assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));
    let rec: Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("VOILA-G/q03.localize.json")).unwrap()).unwrap();
    let frames = rec["frames"].as_array().unwrap();
    assert_eq!(frames.len(), 3);
    assert_eq!(rec["regions"].as_array().unwrap().len(), 3);
    assert!(frames.iter().all(|f| f["source_fixation"].is_string()));
    let labels: Vec<String> = rec["interests"][0]
        .as_array()
        .unwrap()
        .iter()
        .flat_map(|c| c["labels"].as_array().unwrap().iter().map(|l| l[0].as_str().unwrap().to_string()))
        .collect();
    assert!(labels.iter().any(|l| l == "book"), "{labels:?}");
}

#[test]
fn record_then_replay_is_identical_and_mutation_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let backends = fixture().join("backends.toml");
    let rec_out = dir.path().join("recorded");
    let log = dir.path().join("calls.jsonl");
    let r = gq(&[
        "respond",
        "--session",
        s(&fixture()),
        "--backends",
        s(&backends),
        "--variant",
        "VOILA-G",
        "--variant",
        "VOILA",
        "--out",
        s(&rec_out),
        "--record",
        s(&log),
    ]);
    assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));
    assert!(rec_out.join("VOILA-G/q01.json").is_file());
    assert!(std::fs::read_to_string(&log).unwrap().lines().count() > 0);

    let again = dir.path().join("again");
    let r = gq(&["replay", "--traces", s(&rec_out), "--fixtures", s(&log), "--out", s(&again)]);
    assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));
    let report: Value =
        serde_json::from_str(&std::fs::read_to_string(again.join("replay_report.json")).unwrap()).unwrap();
    assert_eq!(report["compared"], 24);
    assert_eq!(report["identical"], 24);

    // Change the responder reply used for q03 only.
    let fixtures = dir.path().join("fixtures");
    copy_dir(&fixture().join("backend-fixtures"), &fixtures);
    let mut touched = 0;
    for e in std::fs::read_dir(fixtures.join("responder")).unwrap() {
        let p = e.unwrap().path();
        let text = std::fs::read_to_string(&p).unwrap();
        if text.contains("who wrote this") {
            std::fs::write(&p, text.replace("You are asking about", "Perhaps you mean")).unwrap();
            touched += 1;
        }
    }
    assert!(touched > 0);
    let diverged = dir.path().join("diverged");
    let r = gq(&["replay", "--traces", s(&rec_out), "--fixtures", s(&fixtures), "--out", s(&diverged)]);
    assert_eq!(r.status.code(), Some(1));
    let e = error_line(&r);
    assert_eq!(e["error"]["kind"], "DivergenceDetected", "{e}");
    let msg = e["error"]["message"].as_str().unwrap();
    assert!(msg.contains("q03"), "{msg}");
    assert!(!msg.contains("q01"), "{msg}");
    assert!(diverged.join(MANIFEST_FILE).is_file());
}

#[test]
fn replay_refuses_non_respond_runs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("a");
    assert_eq!(gq(&["analyze", "--session", s(&fixture()), "--out", s(&out)]).status.code(), Some(0));
    let r = gq(&["replay", "--traces", s(&out), "--fixtures", s(dir.path()), "--out", s(&dir.path().join("b"))]);
    assert_eq!(r.status.code(), Some(1));
    assert_eq!(error_line(&r)["error"]["kind"], "NotReplayable");
}
