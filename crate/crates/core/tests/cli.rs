use std::path::Path;
use std::process::{Command, Output};

use esvi::harness::read_trace;

fn esvi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_esvi")).args(args).output().expect("binary runs")
}

fn run_to(out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    esvi(&args)
}

/// Every column except the wall-clock one.
fn without_seconds(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|line| {
            let mut cols: Vec<&str> = line.split(',').collect();
            if cols.len() == 4 {
                cols.remove(1);
            }
            cols.join(",")
        })
        .collect()
}

#[test]
fn writes_a_trace_with_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("trace.csv");
    let result = run_to(&out, &["--max-updates", "20000", "--eval-every", "5000", "--test-fraction", "0.2"]);
    assert!(result.status.success(), "{}", String::from_utf8_lossy(&result.stderr));
    let stdout = String::from_utf8(result.stdout).unwrap();
    assert!(stdout.starts_with("updates="), "{stdout}");
    assert!(stdout.contains("perplexity="), "{stdout}");

    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("# "));
    assert_eq!(text.lines().nth(1), Some("updates,seconds,elbo,perplexity"));
    let trace = read_trace(&out).unwrap();
    assert_eq!(trace.meta("algo"), Some("esvi"));
    assert_eq!(trace.meta("model"), Some("lda"));
    assert!(trace.records.len() >= 4);
    assert_eq!(trace.records[0].updates, 0);
    assert!(trace.records.iter().all(|r| r.perplexity.is_some()));
}

#[test]
fn invalid_configs_exit_with_two() {
    for args in [
        &["--algo", "svi", "--workers", "2"][..],
        &["--topics", "0"],
        &["--algo", "vi", "--topk", "2"],
        &["--model", "gmm", "--algo", "esvi-topk"],
        &["--alpha", "-1"],
        &["--algo", "nope"],
    ] {
        let result = esvi(args);
        assert_eq!(result.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&result.stderr));
        assert!(!result.stderr.is_empty());
    }
}

#[test]
fn missing_data_files_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let result = esvi(&["--docword", dir.path().join("absent.txt").to_str().unwrap()]);
    assert_eq!(result.status.code(), Some(1));
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.conf");
    std::fs::write(&config, "# small run\nmodel = mixmult\nalgo = vi\ntopics = 3\nmax_updates = 3000\neval-every = 1000\n").unwrap();
    let out = dir.path().join("trace.csv");
    let result = run_to(&out, &["--config", config.to_str().unwrap(), "--topics", "5"]);
    assert!(result.status.success(), "{}", String::from_utf8_lossy(&result.stderr));
    let trace = read_trace(&out).unwrap();
    assert_eq!(trace.meta("model"), Some("mixmult"));
    assert_eq!(trace.meta("algo"), Some("vi"));
    assert_eq!(trace.meta("topics"), Some("5"));
}

#[test]
fn single_worker_runs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    for algo in ["vi", "svi", "esvi", "esvi-topk"] {
        let args = ["--algo", algo, "--max-updates", "30000", "--eval-every", "10000", "--seed", "7"];
        let (a, b) = (dir.path().join(format!("{algo}-a.csv")), dir.path().join(format!("{algo}-b.csv")));
        assert!(run_to(&a, &args).status.success());
        assert!(run_to(&b, &args).status.success());
        assert_eq!(without_seconds(&a), without_seconds(&b), "{algo}");
    }
}
