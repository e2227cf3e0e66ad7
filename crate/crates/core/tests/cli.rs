use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use qdiscord::circuit::read_renormalized_csv;
use qdiscord::cli::{EXIT_DATA, EXIT_USAGE};
use qdiscord::dataset;
use qdiscord::features::read_kernels_csv;
use qdiscord::network::{read_checkpoint, Metrics};
use qdiscord::states::Label;

fn qdiscord(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qdiscord"))
        .args(args)
        .env("QDISCORD_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = qdiscord(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn gen(dir: &Path, name: &str, n: usize, seed: u64) -> std::path::PathBuf {
    let path = dir.join(name);
    ok(&["gen", "--n", &n.to_string(), "--seed", &seed.to_string(), "--out", s(&path)]);
    path
}

const SMALL: &[&str] = &["--epochs", "2", "--hidden", "16,8", "--batch-size", "32"];

fn train(dir: &Path, data: &Path, l: &str, extra: &[&str]) -> std::path::PathBuf {
    let out = dir.join(format!("run{l}"));
    let mut args = vec!["train", "--data", s(data), "--paths", l, "--seed", "3", "--out", s(&out)];
    args.extend_from_slice(SMALL);
    args.extend_from_slice(extra);
    ok(&args);
    out
}

#[test]
fn gen_is_balanced_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = gen(dir.path(), "a.bin", 1000, 7);
    let b = gen(dir.path(), "b.bin", 1000, 7);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let data = dataset::read(&a).unwrap();
    let disc = data.iter().filter(|x| x.label == Label::Discordant).count();
    assert_eq!((data.len(), disc), (1000, 500));
    let c = gen(dir.path(), "c.bin", 1000, 8);
    assert_ne!(fs::read(&a).unwrap(), fs::read(&c).unwrap());
}

#[test]
fn gen_with_discord_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d.bin");
    let csv = dir.path().join("d.csv");
    let stdout = ok(&["gen", "--n", "20", "--discord", "--out", s(&out), "--csv", s(&csv)]);
    assert!(stdout.contains("discord histogram"));
    let data = dataset::read(&out).unwrap();
    assert!(data.iter().all(|x| x.discord.is_some()));
    assert_eq!(fs::read_to_string(&csv).unwrap().lines().count(), 21);
}

#[test]
fn rerun_reproduces_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = gen(dir.path(), "a.bin", 300, 2);
    let first = fs::read(&out).unwrap();
    let manifest = dir.path().join("a.bin.manifest.json");
    let text = fs::read_to_string(&manifest).unwrap();
    assert!(text.contains("\"command\": \"gen\"") && text.contains("sha256"));
    fs::remove_file(&out).unwrap();
    ok(&["rerun", "--manifest", s(&manifest)]);
    assert_eq!(fs::read(&out).unwrap(), first);
}

#[test]
fn train_eval_export_verify() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path(), "data.bin", 800, 1);
    let run = train(dir.path(), &data, "5", &[]);
    for f in ["model.ckpt", "model.ckpt.json", "history.csv", "metrics.json", "manifest.json"] {
        assert!(run.join(f).exists(), "{f} missing");
    }
    let history = fs::read_to_string(run.join("history.csv")).unwrap();
    assert!(history.starts_with("epoch,learning_rate,train_loss"));
    assert_eq!(history.lines().count(), 3);

    // Evaluating on the checkpoint's own test split reproduces the saved metrics.
    let ckpt = run.join("model.ckpt");
    let saved: Metrics = serde_json::from_slice(&fs::read(run.join("metrics.json")).unwrap()).unwrap();
    let eval_out = dir.path().join("eval.json");
    ok(&["eval", "--checkpoint", s(&ckpt), "--data", s(&data), "--split", "test", "--out", s(&eval_out)]);
    let again: Metrics = serde_json::from_slice(&fs::read(&eval_out).unwrap()).unwrap();
    assert_eq!(again, saved);
    let (_, meta) = read_checkpoint(&ckpt).unwrap();
    assert_eq!(meta.unwrap().test_metrics, Some(saved));

    // Requesting a different path count is a configuration error.
    let mismatch = qdiscord(&["eval", "--checkpoint", s(&ckpt), "--data", s(&data), "--paths", "4"]);
    assert_eq!(mismatch.status.code(), Some(EXIT_USAGE));

    // Swapping every label complements the accuracy.
    let mut swapped = dataset::read(&data).unwrap();
    swapped.iter_mut().for_each(|x| x.label = x.label.flipped());
    let swapped_path = dir.path().join("swapped.bin");
    dataset::write(&swapped_path, &swapped).unwrap();
    let all_out = dir.path().join("all.json");
    let sw_out = dir.path().join("sw.json");
    ok(&["eval", "--checkpoint", s(&ckpt), "--data", s(&data), "--out", s(&all_out)]);
    ok(&["eval", "--checkpoint", s(&ckpt), "--data", s(&swapped_path), "--out", s(&sw_out)]);
    let all: Metrics = serde_json::from_slice(&fs::read(&all_out).unwrap()).unwrap();
    let sw: Metrics = serde_json::from_slice(&fs::read(&sw_out).unwrap()).unwrap();
    assert!((all.accuracy + sw.accuracy - 1.0).abs() < 1e-12);

    let kernels = dir.path().join("k.csv");
    let renorm = dir.path().join("r.csv");
    ok(&["export-kernels", "--checkpoint", s(&ckpt), "--out", s(&kernels), "--renormalized", s(&renorm)]);
    let (model, _) = read_checkpoint(&ckpt).unwrap();
    assert_eq!(read_kernels_csv(fs::File::open(&kernels).unwrap()).unwrap(), model.kernels());
    let bank = read_renormalized_csv(fs::File::open(&renorm).unwrap()).unwrap();
    assert_eq!((bank.layer1.len(), bank.layer2.len()), (2, 4));

    let report_path = dir.path().join("verify.json");
    ok(&["verify-circuit", "--checkpoint", s(&ckpt), "--states", "200", "--shots", "10000", "--out", s(&report_path)]);
    let report: serde_json::Value = serde_json::from_slice(&fs::read(&report_path).unwrap()).unwrap();
    assert_eq!(report["unitary_pairs"].as_array().unwrap().len(), 5);
    assert!(report["max_exact_deviation"].as_f64().unwrap() < 1e-10);
    assert_eq!(report["exact_agreement"].as_f64().unwrap(), 1.0);
    let ci = report["shot_agreement_ci"].as_array().unwrap();
    assert!(ci[0].as_f64().unwrap() <= ci[1].as_f64().unwrap());

    // Retraining on the renormalized observables freezes them.
    let fixed = train(dir.path(), &data, "5", &["--renormalized-kernels", s(&renorm)]);
    let (fixed_model, _) = read_checkpoint(fixed.join("model.ckpt")).unwrap();
    assert!(!fixed_model.config.kernels_trainable);
    assert_eq!(fixed_model.kernels(), bank.to_kernel_bank());
}

#[test]
fn training_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path(), "data.bin", 400, 4);
    let a = train(dir.path(), &data, "3", &[]);
    let first = fs::read(a.join("model.ckpt")).unwrap();
    let history = fs::read(a.join("history.csv")).unwrap();
    let b = train(dir.path(), &data, "3", &[]);
    assert_eq!(fs::read(b.join("model.ckpt")).unwrap(), first);
    assert_eq!(fs::read(b.join("history.csv")).unwrap(), history);
}

#[test]
fn sweep_writes_one_row_per_path_count() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path(), "data.bin", 400, 5);
    let out = dir.path().join("sweep.csv");
    let mut args = vec!["sweep", "--data", s(&data), "--min-paths", "2", "--max-paths", "4", "--out", s(&out)];
    args.extend_from_slice(SMALL);
    ok(&args);
    let text = fs::read_to_string(&out).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "l,accuracy,recall,f1");
    assert_eq!(rows.len(), 4);
    assert!(rows[3].starts_with("4,"));
    let first = text.clone();
    ok(&args);
    assert_eq!(fs::read_to_string(&out).unwrap(), first);
}

#[test]
fn error_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.bin");
    fs::write(&bad, b"not a dataset").unwrap();
    let out = dir.path().join("o");
    let r = qdiscord(&["train", "--data", s(&bad), "--paths", "4", "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(EXIT_DATA));
    let r = qdiscord(&["train", "--data", s(&bad), "--paths", "0", "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(EXIT_USAGE));
    let r = qdiscord(&["gen", "--n", "10", "--fraction", "2", "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(EXIT_USAGE));
    let r = Command::new(env!("CARGO_BIN_EXE_qdiscord"))
        .args(["gen", "--n", "10", "--out", s(&out)])
        .env("QDISCORD_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(r.status.code(), Some(EXIT_USAGE));
}
