//! End-to-end runs of the `ferkit` binary on synthetic data.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;
use std::process::{Command, Output};

use ferkit::cli::{DATA_ROOT_ENV, RESOLVED_CONFIG};
use ferkit::training::TrainLog;

fn ferkit(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ferkit"))
        .args(args)
        .current_dir(cwd)
        .env_remove(DATA_ROOT_ENV)
        .output()
        .expect("spawn ferkit")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn read_log(path: &Path) -> TrainLog {
    TrainLog::read_jsonl(BufReader::new(File::open(path).unwrap())).unwrap()
}

const TOY: [&str; 4] = ["--preset", "toy", "--set", "data.synthetic_per_class=6"];

/// sample + split into `dir`.
fn prepare(dir: &Path) {
    let out = dir.to_str().unwrap();
    ok(&ferkit(&[&["sample", "--out", out][..], &TOY].concat(), dir));
    ok(&ferkit(&[&["split", "--out", out][..], &TOY].concat(), dir));
}

fn train(dir: &Path, out: &Path, extra: &[&str]) -> String {
    let out = out.to_str().unwrap();
    let manifests = [
        "--set",
        &format!(
            "data.train_manifest={:?}",
            dir.join("train.jsonl").display().to_string()
        ),
        "--set",
        &format!("data.val_manifest={:?}", dir.join("val.jsonl").display().to_string()),
    ]
    .map(str::to_string);
    let manifests: Vec<&str> = manifests.iter().map(String::as_str).collect();
    ok(&ferkit(
        &[&["train", "--out", out][..], &TOY, &manifests, extra].concat(),
        dir,
    ))
}

#[test]
fn describe_prints_the_architecture() {
    let dir = tempfile::tempdir().unwrap();
    let text = ok(&ferkit(&["describe", "--preset", "toy"], dir.path()));
    assert!(text.to_lowercase().contains("param"), "{text}");
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(ferkit(&["describe", "--bogus"], dir.path()).status.code(), Some(2));
    assert_eq!(ferkit(&["nonsense"], dir.path()).status.code(), Some(2));
    let bad_preset = ferkit(&["describe", "--preset", "huge"], dir.path());
    assert_eq!(bad_preset.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad_preset.stderr).contains("preset"));
}

#[test]
fn missing_dataset_is_a_config_error_naming_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("m.safetensors");
    let root = dir.path().to_str().unwrap();
    ok(&ferkit(
        &["train", "--preset", "toy", "--epochs", "0", "--out", root],
        dir.path(),
    ));
    std::fs::rename(dir.path().join("best.safetensors"), &ckpt).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_ferkit"))
        .args(["bench", "--preset", "toy", "--datasets", "jaffe", "--checkpoint"])
        .arg(&ckpt)
        .current_dir(dir.path())
        .env(DATA_ROOT_ENV, dir.path().join("nowhere"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("data.jaffe") && err.contains("nowhere"), "{err}");
}

#[test]
fn runtime_failures_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let junk = dir.path().join("junk.safetensors");
    std::fs::write(&junk, b"not a checkpoint").unwrap();
    let out = ferkit(
        &[
            "eval",
            "--preset",
            "toy",
            "--checkpoint",
            junk.to_str().unwrap(),
            "--out",
            dir.path().to_str().unwrap(),
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn zero_epochs_writes_the_initial_state_without_data() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_str().unwrap();
    ok(&ferkit(
        &["train", "--preset", "toy", "--epochs", "0", "--out", root],
        dir.path(),
    ));
    for f in ["checkpoint.safetensors", "best.safetensors", RESOLVED_CONFIG] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    assert!(read_log(&dir.path().join("train_log.jsonl")).is_empty());
}

#[test]
fn environment_data_root_is_recorded_and_flag_wins() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_str().unwrap();
    let run = |flag: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_ferkit"));
        cmd.args([
            "sample",
            "--preset",
            "toy",
            "--set",
            "data.synthetic_per_class=2",
            "--out",
            root,
        ])
        .current_dir(dir.path())
        .env(DATA_ROOT_ENV, "/from/env");
        if let Some(f) = flag {
            cmd.args(["--data-root", f]);
        }
        ok(&cmd.output().unwrap());
        std::fs::read_to_string(dir.path().join(RESOLVED_CONFIG)).unwrap()
    };
    assert!(run(None).contains("/from/env"));
    let flagged = run(Some("/from/flag"));
    assert!(flagged.contains("/from/flag") && !flagged.contains("/from/env"));
}

#[test]
fn pipeline_resume_and_reproduction() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    prepare(d);
    let sampled = std::fs::read_to_string(d.join("sampled.jsonl")).unwrap();
    assert_eq!(sampled.lines().count(), 42);

    // uninterrupted reference run
    let full = d.join("full");
    train(d, &full, &["--epochs", "4"]);
    let reference = read_log(&full.join("train_log.jsonl"));
    assert_eq!(reference.len(), 4);

    // two epochs, then resume to four
    let part = d.join("part");
    train(d, &part, &["--epochs", "2"]);
    assert_eq!(read_log(&part.join("train_log.jsonl")).len(), 2);
    let ckpt = part.join("checkpoint.safetensors");
    train(d, &part, &["--epochs", "4", "--resume", ckpt.to_str().unwrap()]);
    assert!(read_log(&part.join("train_log.jsonl")).same_run(&reference));
    assert_eq!(
        std::fs::read(part.join("best.safetensors")).unwrap(),
        std::fs::read(full.join("best.safetensors")).unwrap()
    );

    // the resolved config alone reproduces the run
    let again = d.join("again");
    let cfg = full.join(RESOLVED_CONFIG);
    ok(&ferkit(
        &[
            "train",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            again.to_str().unwrap(),
        ],
        d,
    ));
    assert!(read_log(&again.join("train_log.jsonl")).same_run(&reference));

    // evaluation and benchmark on the trained model
    let best = full.join("best.safetensors");
    let eval_dir = d.join("eval");
    let text = ok(&ferkit(
        &[
            &[
                "eval",
                "--checkpoint",
                best.to_str().unwrap(),
                "--manifest",
                d.join("val.jsonl").to_str().unwrap(),
                "--out",
                eval_dir.to_str().unwrap(),
            ][..],
            &TOY,
        ]
        .concat(),
        d,
    ));
    assert!(text.contains("WAR"));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(eval_dir.join("eval.json")).unwrap()).unwrap();
    assert_eq!(report["samples"], 14);

    let bench_dir = d.join("bench");
    let table = ok(&ferkit(
        &[
            &[
                "bench",
                "--checkpoint",
                ckpt.to_str().unwrap(),
                "--datasets",
                "synthetic",
                "--out",
                bench_dir.to_str().unwrap(),
            ][..],
            &TOY,
        ]
        .concat(),
        d,
    ));
    assert!(table.contains("Top-2 Acc") && table.contains("Reference only"));
    assert_eq!(
        std::fs::read_to_string(bench_dir.join("bench.jsonl"))
            .unwrap()
            .lines()
            .count(),
        1
    );
}
