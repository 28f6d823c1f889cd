use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn fixture(name: &str) -> String {
    root().join("fixtures").join(name).to_string_lossy().into_owned()
}

fn scenenav(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scenenav")).args(args).env_remove("VLM_API_KEY").output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = scenenav(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn explored(dir: &Path, map: &str) -> String {
    let out = dir.join("explore");
    ok(&["explore", "--map", &fixture(map), "--out", out.to_str().unwrap()]);
    out.join("scenegraph.json").to_string_lossy().into_owned()
}

#[test]
fn explore_writes_three_files() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("a");
    ok(&[
        "explore",
        "--map",
        &fixture("apartment.map"),
        "--backend",
        "frontier",
        "--max-steps",
        "500",
        "--out",
        out.to_str().unwrap(),
    ]);
    for f in ["scenegraph.json", "exploration.ppm", "exploration_result.json"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let r = json(&out.join("exploration_result.json"));
    assert_eq!(r["termination"], "CoverageSufficient");
    assert_eq!(r["backend_calls"], r["steps_taken"]);
}

#[test]
fn zero_budget_and_bad_inputs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("z");
    ok(&["explore", "--map", &fixture("wall.map"), "--max-steps", "0", "--out", out.to_str().unwrap()]);
    assert_eq!(json(&out.join("exploration_result.json"))["termination"], "BudgetExhausted");

    let missing = scenenav(&["explore", "--map", "no/such.map", "--out", out.to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("no/such.map"));

    let bad =
        scenenav(&["explore", "--map", &fixture("wall.map"), "--backend", "teleport", "--out", out.to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(2));
    let oracle =
        scenenav(&["explore", "--map", &fixture("wall.map"), "--backend", "oracle", "--out", out.to_str().unwrap()]);
    assert_eq!(oracle.status.code(), Some(2));
}

#[test]
fn compare_cache_reports_a_reduction() {
    let tmp = tempfile::tempdir().unwrap();
    let graph = explored(tmp.path(), "two_room.map");
    let cache = tmp.path().join("cache.json");
    let run = |cache: &str, out: &str| {
        let out = tmp.path().join(out);
        ok(&[
            "run",
            "--scenegraph",
            &graph,
            "--map",
            &fixture("two_room.map"),
            "--episodes",
            &fixture("two_room_episodes.json"),
            "--cache",
            cache,
            "--compare-cache",
            "--out",
            out.to_str().unwrap(),
        ]);
        let report = json(&out.join("report.json"));
        assert!(out.join("cold/records.json").is_file() && out.join("warm/metrics.json").is_file());
        assert!(std::fs::read_to_string(out.join("report.txt")).unwrap().contains("calls-red%"));
        report["conditions"][1]["suite"]["reduction"]["backend_calls_pct"].as_f64().unwrap()
    };
    assert!(run(cache.to_str().unwrap(), "on") > 0.0);
    assert!(cache.is_file());
    assert_eq!(run("none", "off"), 0.0);
}

#[test]
fn run_rejects_the_frontier_backend() {
    let tmp = tempfile::tempdir().unwrap();
    let graph = explored(tmp.path(), "two_room.map");
    let out = scenenav(&[
        "run",
        "--scenegraph",
        &graph,
        "--map",
        &fixture("two_room.map"),
        "--random-episodes",
        "2",
        "--backend",
        "frontier",
        "--out",
        tmp.path().join("r").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn render_matches_golden_image() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("map.ppm");
    ok(&["render", "--map", &fixture("apartment.map"), "--out", out.to_str().unwrap()]);
    let got = std::fs::read(&out).unwrap();
    let golden = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden/apartment_map.ppm");
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&golden, &got).unwrap();
    }
    assert!(got == std::fs::read(&golden).unwrap());
}

#[test]
fn cache_subcommands() {
    let tmp = tempfile::tempdir().unwrap();
    let graph = explored(tmp.path(), "two_room.map");
    let empty = tmp.path().join("empty.json");
    std::fs::write(&empty, r#"{"version": 1, "entries": [], "stats": {"task_hits": 0, "task_misses": 0, "subtask_hits": 0, "subtask_misses": 0, "insertions": 0, "evictions": 0, "discontinuities": 0}}"#).unwrap();
    let out = ok(&["cache", "inspect", "--cache", empty.to_str().unwrap()]);
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "0 entries");

    let cache = tmp.path().join("cache.json");
    ok(&[
        "run",
        "--scenegraph",
        &graph,
        "--map",
        &fixture("two_room.map"),
        "--episodes",
        &fixture("two_room_episodes.json"),
        "--cache",
        cache.to_str().unwrap(),
        "--out",
        tmp.path().join("r").to_str().unwrap(),
    ]);
    ok(&["cache", "validate", "--cache", cache.to_str().unwrap(), "--scenegraph", &graph]);

    // A copy of the graph in which every cell is an obstacle.
    let mut g = json(Path::new(&graph));
    let text = serde_json::to_string(&g).unwrap();
    let blank = tmp.path().join("blank.json");
    let w = g["width"].as_i64().unwrap() * g["height"].as_i64().unwrap();
    g["knowledge"] = serde_json::Value::String(format!("{w}O"));
    g["regions"] = serde_json::json!({});
    g["landmarks"] = serde_json::json!({});
    g["trajectory"] = serde_json::json!([]);
    std::fs::write(&blank, serde_json::to_string(&g).unwrap()).unwrap();
    assert_ne!(text, std::fs::read_to_string(&blank).unwrap());
    let out =
        scenenav(&["cache", "validate", "--cache", cache.to_str().unwrap(), "--scenegraph", blank.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let listed = String::from_utf8_lossy(&out.stdout);
    assert!(listed.contains("task \"go to the fridge\""), "{listed}");
    assert!(listed.contains("subtask \"go to the desk\" at (2, 17)"), "{listed}");

    ok(&["cache", "evict", "--cache", cache.to_str().unwrap(), "--prompt", "Go to the fridge."]);
    ok(&["cache", "evict", "--cache", cache.to_str().unwrap(), "--prompt", "go to the desk", "--location", "2,17"]);
    let out = ok(&["cache", "inspect", "--cache", cache.to_str().unwrap()]);
    assert!(!String::from_utf8_lossy(&out.stdout).contains("\"go to the desk\" at (2, 17)"));
    ok(&["cache", "evict", "--cache", cache.to_str().unwrap(), "--all"]);
    let out = ok(&["cache", "inspect", "--cache", cache.to_str().unwrap()]);
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "0 entries");
}

#[test]
fn inputs_are_left_untouched() {
    let tmp = tempfile::tempdir().unwrap();
    let graph = explored(tmp.path(), "two_room.map");
    let before = std::fs::read(&graph).unwrap();
    let episodes = std::fs::read(fixture("two_room_episodes.json")).unwrap();
    ok(&[
        "run",
        "--scenegraph",
        &graph,
        "--map",
        &fixture("two_room.map"),
        "--episodes",
        &fixture("two_room_episodes.json"),
        "--jobs",
        "3",
        "--out",
        tmp.path().join("r").to_str().unwrap(),
    ]);
    assert_eq!(std::fs::read(&graph).unwrap(), before);
    assert_eq!(std::fs::read(fixture("two_room_episodes.json")).unwrap(), episodes);
}
