//! Command-line front end.
//!
//! Every command writes a manifest next to its primary output holding the
//! resolved arguments and content hashes of the files it read and wrote.
//! `qdiscord rerun --manifest <file>` replays it.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::circuit::{self, RenormalizedBank};
use crate::dataset;
use crate::error::{Error, Result};
use crate::features::{self, PathSet};
use crate::network::{
    self, evaluate, read_checkpoint, split_dataset, train_with_history, write_checkpoint, CheckpointMeta, EpochRecord,
    Metrics, ModelConfig,
};
use crate::states::{generate_dataset, Label, LabeledSample};

/// Environment variable overriding the worker thread count.
pub const THREADS_ENV: &str = "QDISCORD_THREADS";

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Parser, Debug)]
#[command(name = "qdiscord", version, about = "Quantum discord detection for two-qubit states")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Generate a labeled dataset of two-qubit states.
    Gen(GenArgs),
    /// Train a classifier on a dataset with a 70/10/20 split.
    Train(TrainArgs),
    /// Train one model per path count and tabulate test metrics.
    Sweep(SweepArgs),
    /// Evaluate a checkpoint on a dataset.
    Eval(EvalArgs),
    /// Compare convolution features with simulated circuit measurements.
    VerifyCircuit(VerifyArgs),
    /// Write a checkpoint's kernels as CSV.
    ExportKernels(ExportArgs),
    /// Replay a run from its manifest.
    Rerun(RerunArgs),
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenArgs {
    /// Number of states.
    #[arg(long, default_value_t = 100_000)]
    pub n: usize,
    /// Fraction of non-discordant states.
    #[arg(long, default_value_t = 0.5)]
    pub fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also compute the discord value of every state (slow).
    #[arg(long)]
    pub discord: bool,
    #[arg(long)]
    pub out: PathBuf,
    /// Optional CSV copy for inspection.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainOpts {
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    /// Comma-separated hidden layer widths.
    #[arg(long, value_delimiter = ',', default_values_t = network::DEFAULT_HIDDEN)]
    pub hidden: Vec<usize>,
    #[arg(long, default_value_t = 256)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// Epochs between learning-rate halvings.
    #[arg(long, default_value_t = 6)]
    pub lr_period: usize,
    /// Drop batch normalization from the hidden layers.
    #[arg(long)]
    pub no_batchnorm: bool,
    /// Freeze kernels to a `layer,index,k0,k1,k2,k3` CSV.
    #[arg(long, conflicts_with = "renormalized_kernels")]
    pub fixed_kernels: Option<PathBuf>,
    /// Freeze kernels to the observables of a `layer,index,x,y,z` CSV.
    #[arg(long)]
    pub renormalized_kernels: Option<PathBuf>,
}

impl TrainOpts {
    fn inputs(&self) -> Vec<&Path> {
        self.fixed_kernels
            .iter()
            .chain(&self.renormalized_kernels)
            .map(PathBuf::as_path)
            .collect()
    }

    pub fn model_config(&self, path_count: usize, seed: u64) -> Result<ModelConfig> {
        let mut config = ModelConfig {
            hidden: self.hidden.clone(),
            batchnorm: !self.no_batchnorm,
            seed,
            learning_rate: self.lr,
            lr_halving_period: self.lr_period,
            epochs: self.epochs,
            batch_size: self.batch_size,
            ..ModelConfig::new(path_count)
        };
        if let Some(path) = &self.fixed_kernels {
            config.fixed_kernels = Some(features::read_kernels_csv(fs::File::open(path)?)?);
            config.kernels_trainable = false;
        }
        if let Some(path) = &self.renormalized_kernels {
            let bank = circuit::read_renormalized_csv(fs::File::open(path)?)?;
            let paths = PathSet::first(path_count)?;
            if paths.iter().any(|(m, n)| m >= bank.layer1.len() || n >= bank.layer2.len()) {
                return Err(Error::InvalidArgument(format!(
                    "renormalized kernels do not cover {path_count} paths"
                )));
            }
            config.fixed_kernels = Some(bank.to_kernel_bank());
            config.kernels_trainable = false;
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainArgs {
    /// Dataset written by `gen`.
    #[arg(long)]
    pub data: PathBuf,
    /// Number of convolutional paths (16 = full CNN).
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=16))]
    pub paths: u8,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    #[serde(flatten)]
    pub opts: TrainOpts,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub min_paths: usize,
    #[arg(long, default_value_t = 15)]
    pub max_paths: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    #[serde(flatten)]
    pub opts: TrainOpts,
    /// Output CSV with columns `l,accuracy,recall,f1`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitChoice {
    All,
    Train,
    Val,
    Test,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Expected path count; must match the checkpoint.
    #[arg(long)]
    pub paths: Option<usize>,
    /// Evaluate on one part of the checkpoint's seeded split.
    #[arg(long, value_enum, default_value_t = SplitChoice::All)]
    pub split: SplitChoice,
    /// Metrics JSON output; printed to stdout otherwise.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Random states to compare on, half of them discordant.
    #[arg(long, default_value_t = 1000)]
    pub states: usize,
    /// Shots per expectation value; 0 checks exact values only.
    #[arg(long, default_value_t = 0)]
    pub shots: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Report JSON output; printed to stdout otherwise.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExportArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Raw kernels, `layer,index,k0,k1,k2,k3`.
    #[arg(long)]
    pub out: PathBuf,
    /// Renormalized Bloch vectors of the used kernels, `layer,index,x,y,z`.
    #[arg(long)]
    pub renormalized: Option<PathBuf>,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RerunArgs {
    #[arg(long)]
    pub manifest: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    #[serde(flatten)]
    pub command: Command,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
}

/// Git blob hash with SHA-256: `sha256("blob <len>\0" + content)`, hex encoded.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn hash_files(paths: &[&Path]) -> Result<Vec<FileHash>> {
    paths
        .iter()
        .map(|p| {
            Ok(FileHash {
                path: p.to_path_buf(),
                sha256: content_hash(&fs::read(p)?),
            })
        })
        .collect()
}

fn write_manifest(at: &Path, command: &Command, inputs: &[&Path], outputs: &[&Path]) -> Result<()> {
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: command.clone(),
        inputs: hash_files(inputs)?,
        outputs: hash_files(outputs)?,
    };
    fs::write(at, serde_json::to_vec_pretty(&manifest)?)?;
    Ok(())
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Maps an error to the process exit code.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidArgument(_) | Error::InvalidPathCount(_) | Error::DimensionMismatch { .. } => EXIT_USAGE,
        Error::Io(_) | Error::Csv(_) | Error::Json(_) | Error::Format { .. } => EXIT_DATA,
        _ => EXIT_NUMERICAL,
    }
}

/// Applies the thread-count override, if set.
pub fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::InvalidArgument(format!("{THREADS_ENV}={value:?} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))
}

pub fn run(command: &Command) -> Result<()> {
    match command {
        Command::Gen(a) => cmd_gen(a, command),
        Command::Train(a) => cmd_train(a, command),
        Command::Sweep(a) => cmd_sweep(a, command),
        Command::Eval(a) => cmd_eval(a, command),
        Command::VerifyCircuit(a) => cmd_verify_circuit(a, command),
        Command::ExportKernels(a) => cmd_export_kernels(a, command),
        Command::Rerun(a) => {
            let manifest: Manifest = serde_json::from_slice(&fs::read(&a.manifest)?)?;
            if matches!(manifest.command, Command::Rerun(_)) {
                return Err(Error::InvalidArgument("manifest records another rerun".into()));
            }
            run(&manifest.command)
        }
    }
}

/// Entry point used by the binary; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match configure_threads().and_then(|()| run(&cli.command)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn label_counts(samples: &[LabeledSample]) -> (usize, usize) {
    let disc = samples.iter().filter(|s| s.label == Label::Discordant).count();
    (samples.len() - disc, disc)
}

/// Ten equal-width bins on `[0, max]`.
pub fn discord_histogram(values: &[f64]) -> Vec<(f64, f64, usize)> {
    let max = values.iter().copied().fold(0.0, f64::max);
    if values.is_empty() || max == 0.0 {
        return vec![(0.0, 0.0, values.len())];
    }
    let width = max / 10.0;
    let mut counts = [0usize; 10];
    for &v in values {
        counts[((v / width) as usize).min(9)] += 1;
    }
    counts
        .iter()
        .enumerate()
        .map(|(i, &c)| (i as f64 * width, (i + 1) as f64 * width, c))
        .collect()
}

fn cmd_gen(a: &GenArgs, command: &Command) -> Result<()> {
    if !(0.0..=1.0).contains(&a.fraction) {
        return Err(Error::InvalidArgument(format!("fraction {} outside [0, 1]", a.fraction)));
    }
    let samples = generate_dataset(a.n, a.fraction, a.seed, a.discord)?;
    dataset::write(&a.out, &samples)?;
    let mut outputs = vec![a.out.as_path()];
    if let Some(csv) = &a.csv {
        dataset::write_csv(fs::File::create(csv)?, &samples)?;
        outputs.push(csv);
    }
    let (non, disc) = label_counts(&samples);
    println!("wrote {} states to {}", samples.len(), a.out.display());
    println!("non-discordant: {non}\ndiscordant: {disc}");
    let values: Vec<f64> = samples.iter().filter_map(|s| s.discord).collect();
    if !values.is_empty() {
        println!("discord histogram:");
        for (lo, hi, c) in discord_histogram(&values) {
            println!("  [{lo:.4}, {hi:.4}]  {c}");
        }
    }
    write_manifest(&sibling(&a.out, ".manifest.json"), command, &[], &outputs)
}

fn write_history(path: &Path, history: &[EpochRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in history {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_train(a: &TrainArgs, command: &Command) -> Result<()> {
    let config = a.opts.model_config(a.paths as usize, a.seed)?;
    let bytes = fs::read(&a.data)?;
    let data = dataset::decode(&bytes)?;
    let split = split_dataset(&data, a.seed);
    fs::create_dir_all(&a.out)?;
    let history_path = a.out.join("history.csv");
    let mut history = Vec::new();
    let result = train_with_history(&config, &split.train, &split.val, &mut history);
    write_history(&history_path, &history)?;
    let model = result?;
    let metrics = evaluate(&model, &split.test);
    let ckpt = a.out.join("model.ckpt");
    let meta = CheckpointMeta {
        seed: a.seed,
        test_metrics: Some(metrics),
        history,
        dataset_hash: Some(content_hash(&bytes)),
    };
    write_checkpoint(&ckpt, &model, &meta)?;
    let metrics_path = a.out.join("metrics.json");
    fs::write(&metrics_path, serde_json::to_vec_pretty(&metrics)?)?;
    println!(
        "l={} test accuracy {:.4} recall {:.4} f1 {:.4}",
        a.paths, metrics.accuracy, metrics.recall, metrics.f1
    );
    print!("{}", metrics.render_confusion());
    let mut inputs = vec![a.data.as_path()];
    inputs.extend(a.opts.inputs());
    let sidecar = network::sidecar_path(&ckpt);
    write_manifest(
        &a.out.join("manifest.json"),
        command,
        &inputs,
        &[&ckpt, &sidecar, &history_path, &metrics_path],
    )
}

/// One sweep row; metrics are `None` when training at that path count failed.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub l: usize,
    pub metrics: Option<Metrics>,
}

pub fn write_sweep_csv<W: Write>(writer: W, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["l", "accuracy", "recall", "f1"])?;
    for row in rows {
        let (acc, rec, f1) = row.metrics.map_or((f64::NAN, f64::NAN, f64::NAN), |m| (m.accuracy, m.recall, m.f1));
        w.write_record([row.l.to_string(), acc.to_string(), rec.to_string(), f1.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_sweep(a: &SweepArgs, command: &Command) -> Result<()> {
    if a.min_paths > a.max_paths {
        return Err(Error::InvalidArgument("min-paths exceeds max-paths".into()));
    }
    PathSet::first(a.min_paths)?;
    PathSet::first(a.max_paths)?;
    let data = dataset::read(&a.data)?;
    let split = split_dataset(&data, a.seed);
    let mut rows = Vec::new();
    for l in a.min_paths..=a.max_paths {
        let outcome = a.opts.model_config(l, a.seed).and_then(|config| {
            let mut history = Vec::new();
            train_with_history(&config, &split.train, &split.val, &mut history)
        });
        let metrics = match outcome {
            Ok(model) => {
                let m = evaluate(&model, &split.test);
                eprintln!("l={l}: accuracy {:.4} recall {:.4} f1 {:.4}", m.accuracy, m.recall, m.f1);
                Some(m)
            }
            Err(e) => {
                eprintln!("l={l}: failed: {e}");
                None
            }
        };
        rows.push(SweepRow { l, metrics });
    }
    write_sweep_csv(fs::File::create(&a.out)?, &rows)?;
    let mut inputs = vec![a.data.as_path()];
    inputs.extend(a.opts.inputs());
    write_manifest(&sibling(&a.out, ".manifest.json"), command, &inputs, &[&a.out])
}

fn cmd_eval(a: &EvalArgs, command: &Command) -> Result<()> {
    let (model, meta) = read_checkpoint(&a.checkpoint)?;
    if let Some(l) = a.paths {
        if l != model.path_count() {
            return Err(Error::DimensionMismatch {
                expected: model.path_count(),
                got: l,
            });
        }
    }
    let data = dataset::read(&a.data)?;
    let samples = match a.split {
        SplitChoice::All => data,
        choice => {
            let seed = meta.map_or(model.config.seed, |m| m.seed);
            let split = split_dataset(&data, seed);
            match choice {
                SplitChoice::Train => split.train,
                SplitChoice::Val => split.val,
                _ => split.test,
            }
        }
    };
    let metrics = evaluate(&model, &samples);
    let json = serde_json::to_string_pretty(&metrics)?;
    match &a.out {
        Some(path) => {
            fs::write(path, &json)?;
            write_manifest(
                &sibling(path, ".manifest.json"),
                command,
                &[&a.checkpoint, &a.data],
                &[path],
            )?;
        }
        None => println!("{json}"),
    }
    print!("{}", metrics.render_confusion());
    Ok(())
}

fn cmd_verify_circuit(a: &VerifyArgs, command: &Command) -> Result<()> {
    let (model, _) = read_checkpoint(&a.checkpoint)?;
    let report = circuit::verify_model(&model, a.states, a.shots, a.seed)?;
    let json = serde_json::to_string_pretty(&report)?;
    match &a.out {
        Some(path) => {
            fs::write(path, &json)?;
            write_manifest(&sibling(path, ".manifest.json"), command, &[&a.checkpoint], &[path])?;
        }
        None => println!("{json}"),
    }
    let pairs: Vec<String> = report.unitary_pairs.iter().map(|(m, n)| format!("u{m} x v{n}")).collect();
    eprintln!("unitary pairs: {}", pairs.join(", "));
    eprintln!(
        "exact: max deviation {:.3e}, agreement {:.4}",
        report.max_exact_deviation, report.exact_agreement
    );
    if let (Some(rate), Some((lo, hi))) = (report.shot_agreement, report.shot_agreement_ci) {
        eprintln!("{} shots: agreement {rate:.4} (95% CI {lo:.4}..{hi:.4})", a.shots);
    }
    Ok(())
}

fn cmd_export_kernels(a: &ExportArgs, command: &Command) -> Result<()> {
    let (model, _) = read_checkpoint(&a.checkpoint)?;
    features::write_kernels_csv(fs::File::create(&a.out)?, &model.kernels())?;
    let mut outputs = vec![a.out.as_path()];
    if let Some(path) = &a.renormalized {
        let bank = RenormalizedBank::from_kernels(&model.kernels(), &model.paths)?;
        circuit::write_renormalized_csv(fs::File::create(path)?, &bank)?;
        outputs.push(path);
    }
    write_manifest(&sibling(&a.out, ".manifest.json"), command, &[&a.checkpoint], &outputs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn content_hash_matches_git_blob_scheme() {
        // `git hash-object --object-format=sha256` of an empty file.
        assert_eq!(
            content_hash(b""),
            "473a0f4c3be8a93681a267e3b1e9a7dcda1185436fe141f7749120a303721813"
        );
        assert_ne!(content_hash(b"a"), content_hash(b"b"));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::InvalidPathCount(0)), EXIT_USAGE);
        assert_eq!(exit_code(&Error::format("dataset", "bad")), EXIT_DATA);
        assert_eq!(
            exit_code(&Error::NonFiniteLoss {
                epoch: 1,
                last_finite: None
            }),
            EXIT_NUMERICAL
        );
        assert_eq!(main_with_args(["qdiscord", "train", "--paths", "0"]), EXIT_USAGE);
        assert_eq!(main_with_args(["qdiscord", "bogus"]), EXIT_USAGE);
    }

    #[test]
    fn parses_train_flags() {
        let cli = Cli::try_parse_from([
            "qdiscord", "train", "--data", "d.bin", "--paths", "5", "--epochs", "3", "--hidden", "8,4", "--out", "o",
        ])
        .unwrap();
        let Command::Train(args) = cli.command else {
            panic!("wrong subcommand");
        };
        assert_eq!(args.opts.hidden, vec![8, 4]);
        let config = args.opts.model_config(5, 1).unwrap();
        assert_eq!((config.path_count, config.epochs, config.seed), (5, 3, 1));
        assert!(config.kernels_trainable && config.batchnorm);
        assert!(Cli::try_parse_from(["qdiscord", "train", "--data", "d", "--paths", "17", "--out", "o"]).is_err());
    }

    #[test]
    fn manifest_command_round_trips() {
        let cli = Cli::try_parse_from(["qdiscord", "gen", "--n", "10", "--out", "x.bin", "--discord"]).unwrap();
        let json = serde_json::to_string(&cli.command).unwrap();
        assert!(json.contains("\"command\":\"gen\""));
        let back: Command = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cli.command);
    }

    #[test]
    fn histogram_bins() {
        let h = discord_histogram(&[0.0, 0.05, 0.5, 1.0]);
        assert_eq!(h.len(), 10);
        assert_eq!(h.iter().map(|b| b.2).sum::<usize>(), 4);
        assert_eq!(h[9].2, 1);
        assert_eq!(discord_histogram(&[0.0, 0.0])[0].2, 2);
    }

    #[test]
    fn sweep_csv_marks_failures() {
        let rows = [
            SweepRow {
                l: 2,
                metrics: Some(Metrics::from_counts(1, 0, 1, 0)),
            },
            SweepRow { l: 3, metrics: None },
        ];
        let mut buf = Vec::new();
        write_sweep_csv(&mut buf, &rows).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "l,accuracy,recall,f1\n2,1,1,1\n3,NaN,NaN,NaN\n");
    }
}
