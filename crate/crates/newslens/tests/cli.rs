//! End-to-end tests driving the compiled binary: fixture generation,
//! scripted runs, reports, comparisons, and the documented exit codes.

use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_newslens"))
}

fn run_ok(args: &[&str]) -> Output {
    let output = binary().args(args).output().expect("binary runs");
    assert!(
        output.status.success(),
        "expected success for {args:?}\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
    output
}

fn exit_code(output: &Output) -> i32 {
    output.status.code().expect("no exit code (signal?)")
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).to_string()
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).to_string()
}

fn gen_fixtures(dir: &Path) -> PathBuf {
    let out = dir.join("fixtures");
    run_ok(&["gen-fixtures", "--out", out.to_str().unwrap()]);
    out
}

/// Runs the scripted pipeline over one fixture set into a fresh directory
/// and returns the created run directory.
fn scripted_run(fixture_set: &Path, model: &str, out: &Path, extra: &[&str]) -> PathBuf {
    let manifest = fixture_set.join("manifest.json");
    let mut args = vec![
        "run",
        "--manifest",
        manifest.to_str().unwrap(),
        "--backend",
        "scripted",
        "--model",
        model,
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    run_ok(&args);

    let mut entries: Vec<PathBuf> = std::fs::read_dir(out)
        .expect("run output dir exists")
        .map(|e| e.unwrap().path())
        .collect();
    assert_eq!(entries.len(), 1, "expected exactly one run under {}", out.display());
    entries.pop().unwrap()
}

fn reference_values_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../refs/reference_values.json")
}

#[test]
fn generate_run_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    let fixtures = gen_fixtures(tmp.path());
    for set in ["reference", "kashmir-alt-model", "kashmir-ablated"] {
        assert!(fixtures.join(set).join("manifest.json").is_file(), "{set} manifest missing");
    }

    let run_dir = scripted_run(
        &fixtures.join("reference"),
        "qwen2.5-3b-instruct",
        &tmp.path().join("runs"),
        &[],
    );
    assert!(run_dir.join("run.json").is_file());
    assert!(run_dir.join("digest.txt").is_file());
    assert!(run_dir.join("raw/fact_verifier").is_dir());

    let stats = run_ok(&[
        "stats",
        run_dir.to_str().unwrap(),
        "--reference",
        reference_values_path().to_str().unwrap(),
    ]);
    let text = stdout(&stats);
    assert!(text.contains("# Bias pipeline results"), "got: {text}");
    assert!(text.contains("## Reference comparison: reference evaluation"));
    assert!(text.contains("reference quantities reproduced."));
    assert!(text.contains("theguardian-ukraine"));

    let map = run_ok(&["stats", run_dir.to_str().unwrap(), "--article", "theguardian-ukraine"]);
    let text = stdout(&map);
    assert!(text.contains("# Interpretive map: theguardian-ukraine"));
    assert!(text.contains("excluded (right-analyst parse failure)"));
    assert!(text.contains("- rhetorical bias: fear"));

    let json = run_ok(&["stats", run_dir.to_str().unwrap(), "--json"]);
    let value: serde_json::Value =
        serde_json::from_str(&stdout(&json)).expect("stats --json emits JSON");
    assert!(value.get("aggregate").is_some());
    assert!(value.get("reference").is_none(), "no reference table was passed");
}

#[test]
fn run_reports_per_article_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    let fixtures = gen_fixtures(tmp.path());
    let manifest = fixtures.join("reference/manifest.json");
    let output = run_ok(&[
        "run",
        "--manifest",
        manifest.to_str().unwrap(),
        "--backend",
        "scripted",
        "--model",
        "qwen2.5-3b-instruct",
        "--out",
        tmp.path().join("runs").to_str().unwrap(),
    ]);
    let text = stdout(&output);
    assert!(text.contains("theguardian-ukraine: pds excluded, mi 0.6"), "got: {text}");
    assert!(text.contains("stored 15 articles at "));
    assert!(!text.contains("aborted"));
}

#[test]
fn compare_picks_ablation_or_cross_model_view() {
    let tmp = tempfile::tempdir().unwrap();
    let fixtures = gen_fixtures(tmp.path());

    let full = scripted_run(
        &fixtures.join("kashmir-alt-model"),
        "mistral-7b-instruct",
        &tmp.path().join("runs-full"),
        &[],
    );
    let ablated = scripted_run(
        &fixtures.join("kashmir-ablated"),
        "mistral-7b-instruct",
        &tmp.path().join("runs-ablated"),
        &["--ablate-propaganda"],
    );
    let rerun = scripted_run(
        &fixtures.join("kashmir-alt-model"),
        "mistral-7b-instruct",
        &tmp.path().join("runs-full-again"),
        &[],
    );

    let ablation = run_ok(&["compare", full.to_str().unwrap(), ablated.to_str().unwrap()]);
    assert!(stdout(&ablation).contains("# Detector ablation"));

    let ablation_json = run_ok(&[
        "compare",
        full.to_str().unwrap(),
        ablated.to_str().unwrap(),
        "--json",
    ]);
    let value: serde_json::Value = serde_json::from_str(&stdout(&ablation_json)).unwrap();
    assert_eq!(value["mode"], "ablation");
    assert_eq!(value["rows"].as_array().unwrap().len(), 4);

    let cross = run_ok(&["compare", full.to_str().unwrap(), rerun.to_str().unwrap()]);
    let text = stdout(&cross);
    assert!(text.contains("# Cross-model comparison"), "got: {text}");

    let cross_json = run_ok(&[
        "compare",
        full.to_str().unwrap(),
        rerun.to_str().unwrap(),
        "--json",
    ]);
    let value: serde_json::Value = serde_json::from_str(&stdout(&cross_json)).unwrap();
    assert_eq!(value["mode"], "cross_model");
    // identical fixtures replayed twice: every article is model-stable
    for row in value["rows"].as_array().unwrap() {
        assert_eq!(row["stability"], "stable", "row: {row}");
    }
}

#[test]
fn identical_runs_share_a_comparison_digest() {
    let tmp = tempfile::tempdir().unwrap();
    let fixtures = gen_fixtures(tmp.path());
    let set = fixtures.join("kashmir-alt-model");
    let a = scripted_run(&set, "mistral-7b-instruct", &tmp.path().join("a"), &[]);
    let b = scripted_run(&set, "mistral-7b-instruct", &tmp.path().join("b"), &[]);
    assert_ne!(a.file_name(), b.file_name(), "run ids must differ");
    let digest_a = std::fs::read_to_string(a.join("digest.txt")).unwrap();
    let digest_b = std::fs::read_to_string(b.join("digest.txt")).unwrap();
    assert_eq!(digest_a, digest_b);
}

#[test]
fn config_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let fixtures = gen_fixtures(tmp.path());
    let manifest = fixtures.join("kashmir-alt-model/manifest.json");

    let missing_base_url = binary()
        .args([
            "run",
            "--manifest",
            manifest.to_str().unwrap(),
            "--backend",
            "openai",
            "--model",
            "m",
        ])
        .output()
        .unwrap();
    assert_eq!(exit_code(&missing_base_url), 1);
    assert!(stderr(&missing_base_url).contains("--base-url"));

    let missing_manifest = binary()
        .args([
            "run",
            "--manifest",
            "/nonexistent/manifest.json",
            "--backend",
            "scripted",
            "--model",
            "m",
        ])
        .output()
        .unwrap();
    assert_eq!(exit_code(&missing_manifest), 1);

    let unknown_flag = binary().args(["run", "--api-key", "k"]).output().unwrap();
    assert_eq!(exit_code(&unknown_flag), 1);

    let help = binary().arg("--help").output().unwrap();
    assert_eq!(exit_code(&help), 0);
    let version = binary().arg("--version").output().unwrap();
    assert_eq!(exit_code(&version), 0);
}

#[test]
fn tampered_run_exits_three() {
    let tmp = tempfile::tempdir().unwrap();
    let fixtures = gen_fixtures(tmp.path());
    let run_dir = scripted_run(
        &fixtures.join("kashmir-alt-model"),
        "mistral-7b-instruct",
        &tmp.path().join("runs"),
        &[],
    );

    let raw = run_dir.join("raw/propaganda_detector/thehindu-kashmir.txt");
    let original = std::fs::read_to_string(&raw).unwrap();
    std::fs::write(&raw, format!("{original} ")).unwrap();

    let output = binary().args(["stats", run_dir.to_str().unwrap()]).output().unwrap();
    assert_eq!(exit_code(&output), 3, "stderr: {}", stderr(&output));
    assert!(stderr(&output).contains("digest mismatch"));

    std::fs::write(&raw, original).unwrap();
    run_ok(&["stats", run_dir.to_str().unwrap()]);

    let json_path = run_dir.join("run.json");
    let record = std::fs::read_to_string(&json_path).unwrap();
    std::fs::write(&json_path, record.replacen("\"pds\"", "\"psd\"", 1)).unwrap();
    let output = binary().args(["stats", run_dir.to_str().unwrap()]).output().unwrap();
    assert_eq!(exit_code(&output), 3);
}

#[test]
fn transport_failures_abort_and_exit_two_without_leaking_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    let fixtures = gen_fixtures(tmp.path());
    let manifest = fixtures.join("kashmir-alt-model/manifest.json");

    // grab a port nothing listens on
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);

    let secret = "super-secret-key-for-this-test-only";
    let output = binary()
        .args([
            "run",
            "--manifest",
            manifest.to_str().unwrap(),
            "--backend",
            "openai",
            "--base-url",
            &format!("http://{addr}"),
            "--model",
            "m",
            "--out",
            tmp.path().join("runs").to_str().unwrap(),
            "--timeout-secs",
            "5",
        ])
        .env("NEWSLENS_API_KEY", secret)
        .output()
        .unwrap();

    assert_eq!(exit_code(&output), 2, "stderr: {}", stderr(&output));
    let text = stdout(&output);
    assert_eq!(text.matches("aborted (").count(), 4, "got: {text}");
    assert!(!stdout(&output).contains(secret), "API key leaked to stdout");
    assert!(!stderr(&output).contains(secret), "API key leaked to stderr");
}

#[test]
fn fixture_generation_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let first = tmp.path().join("one");
    let second = tmp.path().join("two");
    run_ok(&["gen-fixtures", "--out", first.to_str().unwrap(), "--set", "reference"]);
    run_ok(&["gen-fixtures", "--out", second.to_str().unwrap(), "--set", "reference"]);

    let manifest_a = std::fs::read(first.join("reference/manifest.json")).unwrap();
    let manifest_b = std::fs::read(second.join("reference/manifest.json")).unwrap();
    assert_eq!(manifest_a, manifest_b);

    let article_a =
        std::fs::read(first.join("reference/articles/theguardian-climate.txt")).unwrap();
    let article_b =
        std::fs::read(second.join("reference/articles/theguardian-climate.txt")).unwrap();
    assert_eq!(article_a, article_b);
}
