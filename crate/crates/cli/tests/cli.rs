use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(format!("{name}.json"))
}

fn semmap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_semmap"))
        .args(args)
        .env_remove("SEMMAP_LOG")
        .output()
        .expect("binary runs")
}

fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

/// A scenario file next to a copy of the room world, with `body` merged in.
fn custom_scenario(dir: &Path, body: &str) -> PathBuf {
    let world = scenario("room").with_file_name("room.world.json");
    fs::copy(&world, dir.join("room.world.json")).unwrap();
    let path = dir.join("custom.json");
    fs::write(&path, body).unwrap();
    path
}

const ARTIFACTS: [&str; 14] = [
    "map.pgm",
    "map.yaml",
    "trajectory.txt",
    "explore.json",
    "tour.txt",
    "semantic.pgm",
    "semantic.yaml",
    "semantic.json",
    "changes-construct.jsonl",
    "semantic-tidy.json",
    "changes-tidy.jsonl",
    "report.json",
    "report.txt",
    "semantic.png",
];

#[test]
fn run_all_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let out = semmap(&[
        "run-all",
        "--scenario",
        path_str(&scenario("room")),
        "--out",
        path_str(dir.path()),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    for name in ARTIFACTS {
        assert!(dir.path().join(name).exists(), "{name} missing");
    }
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    let stages: Vec<&str> = report
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["stage"].as_str().unwrap())
        .collect();
    assert_eq!(stages, ["construct", "tidy"]);
    assert_eq!(report[0]["mAP"], 1.0);
    let tidy = fs::read_to_string(dir.path().join("changes-tidy.jsonl")).unwrap();
    assert_eq!(tidy.lines().count(), 1);
    assert!(tidy.contains("\"kind\":\"removed\""), "{tidy}");
}

#[test]
fn explore_reports_coverage() {
    let dir = tempfile::tempdir().unwrap();
    let out = semmap(&[
        "explore",
        "--scenario",
        path_str(&scenario("room")),
        "--out",
        path_str(dir.path()),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(
        text.contains("coverage") && text.contains("frontiers at termination"),
        "{text}"
    );
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("explore.json")).unwrap()).unwrap();
    assert!(summary["coverage"].as_f64().unwrap() >= 0.95, "{summary}");
    assert_eq!(summary["termination"], "FrontiersExhausted");
    assert_eq!(summary["frontiers_at_termination"], 0);
}

#[test]
fn zero_time_budget_gives_a_near_empty_map() {
    let dir = tempfile::tempdir().unwrap();
    let path = custom_scenario(
        dir.path(),
        r#"{"world": "room.world.json", "seed": 1, "exploration": {"exploration": {"time_budget": 0}}}"#,
    );
    let run = dir.path().join("run");
    let out = semmap(&["explore", "--scenario", path_str(&path), "--out", path_str(&run)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run.join("explore.json")).unwrap()).unwrap();
    assert!(summary["coverage"].as_f64().unwrap() < 0.5, "{summary}");
    assert_eq!(summary["steps"], 0);
}

#[test]
fn same_seed_gives_identical_artifacts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let out = semmap(&[
            "run-all",
            "--scenario",
            path_str(&scenario("room")),
            "--out",
            path_str(dir.path()),
            "--seed",
            "42",
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    for name in ARTIFACTS {
        let x = fs::read(a.path().join(name)).unwrap();
        let y = fs::read(b.path().join(name)).unwrap();
        assert!(x == y, "{name} differs between runs");
    }
    let summary = fs::read_to_string(a.path().join("explore.json")).unwrap();
    assert!(summary.contains("\"seed\": 42"), "{summary}");
}

#[test]
fn phases_resume_from_disk() {
    let dir = tempfile::tempdir().unwrap();
    let s = scenario("room");
    let args = |cmd: &'static str| vec![cmd, "--scenario", path_str(&s), "--out", path_str(dir.path())];
    for cmd in ["explore", "plan", "construct"] {
        let out = semmap(&args(cmd));
        assert!(out.status.success(), "{cmd}: {}", stderr(&out));
    }
    let mut update = args("update");
    update.extend(["--phase", "tidy"]);
    let out = semmap(&update);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("1 removed, 0 added"), "{}", stdout(&out));
    let out = semmap(&args("eval"));
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("mAP"), "{}", stdout(&out));
}

#[test]
fn missing_prerequisite_names_the_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let out = semmap(&[
        "construct",
        "--scenario",
        path_str(&scenario("room")),
        "--out",
        path_str(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(4));
    let err = stderr(&out);
    assert!(err.contains("map.yaml") && err.contains("semmap explore"), "{err}");

    let out = semmap(&[
        "eval",
        "--scenario",
        path_str(&scenario("room")),
        "--out",
        path_str(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(4));
    assert!(stderr(&out).contains("semantic.json"), "{}", stderr(&out));
}

#[test]
fn undefined_phase_lists_defined_phases() {
    let dir = tempfile::tempdir().unwrap();
    let out = semmap(&[
        "update",
        "--phase",
        "later",
        "--scenario",
        path_str(&scenario("updates")),
        "--out",
        path_str(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains("later") && err.contains("update1, update2"), "{err}");
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nowhere.json");
    let out = semmap(&[
        "explore",
        "--scenario",
        path_str(&missing),
        "--out",
        path_str(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("nowhere.json"), "{}", stderr(&out));

    let path = custom_scenario(dir.path(), r#"{"world": "absent.world.json", "seed": 1}"#);
    let out = semmap(&["explore", "--scenario", path_str(&path), "--out", path_str(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("absent.world.json"), "{}", stderr(&out));

    let path = custom_scenario(dir.path(), r#"{"world": "room.world.json", "seed": 1, "speed": 3}"#);
    let out = semmap(&["explore", "--scenario", path_str(&path), "--out", path_str(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("speed"), "{}", stderr(&out));

    let out = semmap(&["explore", "--out", path_str(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("--scenario"), "{}", stderr(&out));
}

#[test]
fn unwritable_output_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "not a directory").unwrap();
    let out = semmap(&[
        "explore",
        "--scenario",
        path_str(&scenario("room")),
        "--out",
        path_str(&blocker),
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
}

#[test]
fn render_is_deterministic_and_handles_bare_grids() {
    let dir = tempfile::tempdir().unwrap();
    let s = scenario("room");
    let out = semmap(&["explore", "--scenario", path_str(&s), "--out", path_str(dir.path())]);
    assert!(out.status.success(), "{}", stderr(&out));

    let map = dir.path().join("map");
    let first = dir.path().join("a.png");
    let second = dir.path().join("b.png");
    for png in [&first, &second] {
        let out = semmap(&[
            "render",
            "--map",
            path_str(&map),
            "--output",
            path_str(png),
            "--out",
            path_str(dir.path()),
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    let bytes = fs::read(&first).unwrap();
    assert_eq!(bytes, fs::read(&second).unwrap());
    assert_eq!(&bytes[1..4], b"PNG");

    let out = semmap(&[
        "render",
        "--map",
        path_str(&dir.path().join("absent")),
        "--out",
        path_str(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn corrupt_semantic_map_is_reported_with_position() {
    let dir = tempfile::tempdir().unwrap();
    let s = scenario("room");
    for cmd in ["explore", "plan", "construct"] {
        let out = semmap(&[cmd, "--scenario", path_str(&s), "--out", path_str(dir.path())]);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    let json = dir.path().join("semantic.json");
    let text = fs::read_to_string(&json).unwrap();
    fs::write(&json, &text[..text.len() / 2]).unwrap();
    let out = semmap(&["eval", "--scenario", path_str(&s), "--out", path_str(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("line"), "{}", stderr(&out));
}
