use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

/// A scratch workdir holding a copy of the fixtures under `fixtures/`.
fn workdir() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::create_dir(dir.path().join("fixtures")).unwrap();
    for entry in fs::read_dir(fixtures()).unwrap() {
        let entry = entry.unwrap();
        fs::copy(entry.path(), dir.path().join("fixtures").join(entry.file_name())).unwrap();
    }
    dir
}

/// Runs `ppc` with a closed port as the provider, so any real call fails.
fn ppc(workdir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ppc"))
        .arg("--workdir")
        .arg(workdir)
        .args(["--provider-url", "http://127.0.0.1:9"])
        .args(args)
        .env_remove("PPC_API_KEY")
        .env_remove("PPC_BASE_URL")
        .env_remove("PPC_MODEL")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn catalog_list_by_class() {
    let dir = workdir();
    let out = ppc(dir.path(), &["catalog", "list", "--class", "refactoring"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let lines: Vec<String> = stdout(&out).lines().map(str::to_string).collect();
    assert_eq!(lines.len(), 2, "{lines:?}");
    assert!(lines.iter().any(|l| l.ends_with("Data-guided Refactoring")));
    assert!(lines.iter().any(|l| l.ends_with("Pseudo-code Refactoring")));

    let all = ppc(dir.path(), &["catalog", "list"]);
    assert_eq!(stdout(&all).lines().count(), 17);
}

#[test]
fn catalog_show_and_export() {
    let dir = workdir();
    let out = ppc(dir.path(), &["catalog", "show", "api-simulator", "--json"]);
    assert_eq!(out.status.code(), Some(0));
    let v: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["id"], "api-simulator");

    let out = ppc(dir.path(), &["catalog", "show", "nope"]);
    assert_eq!(out.status.code(), Some(2));

    let out = ppc(dir.path(), &["catalog", "export", "--out", "catalog.pdl"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let exported = fs::read_to_string(dir.path().join("catalog.pdl")).unwrap();
    assert_eq!(exported.matches("\npattern ").count() + usize::from(exported.starts_with("pattern ")), 17);

    // The export is accepted back as extra patterns and round-trips.
    let again = ppc(dir.path(), &["catalog", "export", "--patterns", "catalog.pdl"]);
    assert_eq!(again.status.code(), Some(0), "{}", stderr(&again));
}

#[test]
fn check_exit_codes() {
    let dir = workdir();
    let bad = ppc(dir.path(), &["check", "fixtures/bad.pdl"]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(stderr(&bad).contains("unknown-pattern"), "{}", stderr(&bad));

    let good = ppc(dir.path(), &["check", "fixtures/pipe.pdl"]);
    assert_eq!(good.status.code(), Some(0), "{}", stderr(&good));

    let missing = ppc(dir.path(), &["check", "fixtures/none.pdl"]);
    assert_eq!(missing.status.code(), Some(3));
}

#[test]
fn usage_errors_exit_2() {
    let dir = workdir();
    assert_eq!(ppc(dir.path(), &["frobnicate"]).status.code(), Some(2));
    assert_eq!(ppc(dir.path(), &["render", "persona", "--set", "novalue"]).status.code(), Some(2));
    assert_eq!(ppc(dir.path(), &["catalog", "list", "--class", "nope"]).status.code(), Some(2));
}

#[test]
fn help_lists_every_command() {
    let dir = workdir();
    let out = ppc(dir.path(), &["--help"]);
    let help = stdout(&out);
    for cmd in ["catalog", "render", "check", "run", "simulate", "driver", "apply", "serve"] {
        assert!(help.contains(cmd), "help lacks {cmd}");
    }
    assert!(help.contains("--workdir"));
    let drivers = stdout(&ppc(dir.path(), &["driver", "--help"]));
    for id in [
        "requirements-simulate",
        "spec-disambiguate",
        "api-generate",
        "api-simulate",
        "fewshot-examples",
        "dsl-create",
        "arch-possibilities",
        "change-simulate",
        "code-cluster",
        "intermediate-abstraction",
        "principled-code",
        "hidden-assumptions",
        "pseudo-refactor",
        "data-refactor",
    ] {
        assert!(drivers.contains(id), "driver help lacks {id}");
    }
}

#[test]
fn render_with_bindings_and_budget() {
    let dir = workdir();
    let out = ppc(dir.path(), &["render", "principled-code", "--set", "principle=SOLID design principles"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert_eq!(
        stdout(&out).trim_end(),
        "From now on, whenever you write, refactor, or review code, make sure it adheres to SOLID design principles."
    );
    let missing = ppc(dir.path(), &["render", "principled-code"]);
    assert_eq!(missing.status.code(), Some(1));
    let tight = ppc(dir.path(), &["--budget", "5", "render", "principled-code", "--set", "principle=DRY"]);
    assert_eq!(tight.status.code(), Some(1));
}

#[test]
fn run_replay_writes_transcript_without_network() {
    let dir = workdir();
    let out = ppc(
        dir.path(),
        &[
            "run",
            "fixtures/pipe.pdl",
            "--context",
            "requirements=fixtures/requirements.md",
            "--replay",
            "fixtures/a.json",
            "--input",
            "fixtures/input.txt",
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(stdout(&out).contains("HTTP/1.1 200 OK"));
    let t: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("out/transcript.json")).unwrap()).unwrap();
    assert_eq!(t["status"], "closed");
    let kinds: Vec<&str> = t["artifacts"].as_array().unwrap().iter().map(|a| a["kind"].as_str().unwrap()).collect();
    assert_eq!(kinds, ["openapi-spec", "http-response"]);
}

#[test]
fn run_without_replay_fails_on_the_closed_port() {
    let dir = workdir();
    let out = ppc(
        dir.path(),
        &[
            "run",
            "fixtures/pipe.pdl",
            "--context",
            "requirements=fixtures/requirements.md",
            "--input",
            "fixtures/input.txt",
        ],
    );
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    // The transcript keeps the unanswered turn for a later resend.
    let t: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("out/transcript.json")).unwrap()).unwrap();
    let turns = t["turns"].as_array().unwrap();
    assert_eq!(turns.len(), 1);
    assert_eq!(turns[0]["role"], "user");
}

#[test]
fn run_over_budget_and_dry_run() {
    let dir = workdir();
    let base = ["run", "fixtures/pipe.pdl", "--context", "requirements=fixtures/requirements.md"];
    let over = ppc(dir.path(), &[&["--budget", "10"][..], &base[..]].concat());
    assert_eq!(over.status.code(), Some(1));
    assert!(stderr(&over).contains("over budget"), "{}", stderr(&over));
    let dry = ppc(dir.path(), &[&base[..], &["--dry-run"][..]].concat());
    assert_eq!(dry.status.code(), Some(0), "{}", stderr(&dry));
    assert!(stdout(&dry).lines().any(|l| l.starts_with("plan: 2 unit(s)")), "{}", stdout(&dry));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn exhausted_cassette_is_a_provider_failure() {
    let dir = workdir();
    let out = ppc(dir.path(), &["driver", "principled-code", "--principle", "DRY", "--replay", "fixtures/empty.json"]);
    assert_eq!(out.status.code(), Some(3));
    fs::write(dir.path().join("fixtures/empty.json"), "{\"version\": 1, \"exchanges\": []}").unwrap();
    let out = ppc(dir.path(), &["driver", "principled-code", "--principle", "DRY", "--replay", "fixtures/empty.json"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("cassette exhausted"), "{}", stderr(&out));
}

#[test]
fn driver_then_apply() {
    let dir = workdir();
    let src = dir.path().join("src/app.py");
    fs::create_dir_all(src.parent().unwrap()).unwrap();
    let original = "def total(xs):\n    t = 0\n    for x in xs:\n        t += x\n    return t\n";
    fs::write(&src, original).unwrap();
    let out = ppc(
        dir.path(),
        &[
            "driver",
            "principled-code",
            "--principle",
            "DRY",
            "--file",
            "src/app.py",
            "--replay",
            "fixtures/refactor.json",
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(stdout(&out).contains("out/patch/src/app.py.diff"));
    // Drivers never touch inputs.
    assert_eq!(fs::read_to_string(&src).unwrap(), original);

    let applied = ppc(dir.path(), &["apply"]);
    assert_eq!(applied.status.code(), Some(0), "{}", stderr(&applied));
    assert_eq!(fs::read_to_string(&src).unwrap(), "def total(xs):\n    return sum(xs)\n");
}

#[test]
fn driver_precondition_is_usage_error() {
    let dir = workdir();
    let out = ppc(dir.path(), &["driver", "code-cluster", "--replay", "fixtures/a.json"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}

#[test]
fn simulate_api_replay() {
    let dir = workdir();
    let spec = "openapi: 3.0.0\ninfo:\n  title: Prompts\n  version: 1.0.0\npaths:\n  /prompts:\n    get: {}\n";
    fs::write(dir.path().join("api.yaml"), spec).unwrap();
    let cassette = r#"{"version": 1, "exchanges": [
        {"index": 0, "request_digest": "", "response_text": "Ready."},
        {"index": 1, "request_digest": "", "response_text": "HTTP/1.1 200 OK\n\n[]"}
    ]}"#;
    fs::write(dir.path().join("sim.json"), cassette).unwrap();
    let out =
        ppc(dir.path(), &["simulate", "api", "api.yaml", "--replay", "sim.json", "--input", "fixtures/input.txt"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(dir.path().join("out/transcript.json").exists());
}
