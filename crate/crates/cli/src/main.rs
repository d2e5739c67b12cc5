use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use sdcnet::analysis::{count_network, describe, reference_budget};
use sdcnet::data::{load_cifar10, load_cifar100, synthetic_records, CifarFormat, Dataset, Split};
use sdcnet::net::preset;
use sdcnet::train::{evaluate, run_suite, Checkpoint, TrainConfig, Trainer};
use sdcnet::Error;

/// Exit codes.
const EXIT_FAILURE: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_DIVERGED: u8 = 4;
const EXIT_GRADCHECK: u8 = 5;
const EXIT_CHECKPOINT: u8 = 6;

#[derive(Parser, Debug)]
#[command(name = "sdcnet", version, about = "SdcNet architectures, cost model, training and gradient checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the stage table of one or more presets side by side.
    Describe {
        /// Preset name; repeat to add columns.
        #[arg(long, required = true)]
        preset: Vec<String>,
        #[arg(long, default_value_t = 10)]
        classes: usize,
    },
    /// Per-layer and total multiply-adds and parameters.
    Count {
        #[arg(long, default_value = "g3-s")]
        preset: String,
        #[arg(long, default_value_t = 10)]
        classes: usize,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Train a network with SGD, logging one line per epoch.
    Train(TrainArgs),
    /// Top-1 accuracy of a checkpoint on the test split.
    Eval(EvalArgs),
    /// Finite-difference check of every backward pass.
    Gradcheck {
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
    },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Csv,
}

#[derive(Args, Debug)]
struct DataArgs {
    /// Directory holding the CIFAR binary batches.
    #[arg(long, env = "SDCNET_CIFAR10_DIR")]
    data_dir: Option<PathBuf>,
    /// Use this many synthetic random-label images instead of CIFAR.
    #[arg(long, conflicts_with = "data_dir")]
    synthetic: Option<usize>,
    /// Seed for the synthetic images.
    #[arg(long, default_value_t = 0)]
    data_seed: u64,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long, default_value = "g3-s")]
    preset: String,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 10)]
    classes: usize,
    #[arg(long, default_value_t = 300)]
    epochs: usize,
    #[arg(long, default_value_t = 128)]
    batch_size: usize,
    /// Train on the first N training images.
    #[arg(long)]
    subset: Option<usize>,
    /// Evaluate on at most N test images.
    #[arg(long)]
    test_subset: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Written after every epoch.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Continue the run saved in this checkpoint; the stored configuration is used.
    #[arg(long, conflicts_with_all = ["preset", "classes", "epochs", "batch_size", "subset", "seed", "no_augment", "decay_bn_params", "lr_max", "lr_min"])]
    resume: Option<PathBuf>,
    /// Test-set evaluation period in epochs; 0 disables.
    #[arg(long, default_value_t = 1)]
    eval_every: usize,
    #[arg(long)]
    no_augment: bool,
    /// Apply weight decay to batch-norm scale and shift as well.
    #[arg(long)]
    decay_bn_params: bool,
    /// Peak of the cosine learning-rate schedule.
    #[arg(long, default_value_t = sdcnet::train::LR_MAX)]
    lr_max: f64,
    /// Floor of the cosine learning-rate schedule.
    #[arg(long, default_value_t = sdcnet::train::LR_MIN)]
    lr_min: f64,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    test_subset: Option<usize>,
    #[arg(long, default_value_t = 256)]
    batch_size: usize,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<Error>()) {
        Some(Error::NotFound(_) | Error::Format { .. } | Error::EmptyDataset | Error::Io(_)) => EXIT_DATA,
        Some(Error::Divergence { .. }) => EXIT_DIVERGED,
        Some(Error::Checkpoint(_)) => EXIT_CHECKPOINT,
        Some(Error::Config(_) | Error::InvalidArgument(_)) => EXIT_USAGE,
        _ => EXIT_FAILURE,
    }
}

fn echo_config(command: &str, config: &impl serde::Serialize) {
    eprintln!("{command} config: {}", serde_json::to_string(config).unwrap_or_default());
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn run(command: Command) -> anyhow::Result<u8> {
    match command {
        Command::Describe { preset: names, classes } => {
            echo_config("describe", &serde_json::json!({ "presets": names, "classes": classes }));
            let configs = names
                .iter()
                .map(|n| Ok(preset(n)?.with_classes(classes)))
                .collect::<sdcnet::Result<Vec<_>>>()?;
            let refs: Vec<_> = configs.iter().collect();
            print!("{}", describe(&refs)?);
        }
        Command::Count { preset: name, classes, format } => {
            let cfg = preset(&name)?.with_classes(classes);
            echo_config("count", &serde_json::json!({ "preset": cfg.name, "classes": classes, "format": format!("{format:?}").to_lowercase() }));
            let report = count_network(&cfg)?;
            let target = if classes == 10 { reference_budget(&cfg.name) } else { None };
            match format {
                Format::Text => {
                    print!("{}", report.to_text());
                    println!("{}: {:.2}M FLOPs, {:.3}M params", report.name, report.flops_millions(), report.params_millions());
                    if let Some((f, p)) = target {
                        println!(
                            "target: {f}M FLOPs ({:+.2}%), {p}M params ({:+.2}%)",
                            (report.flops_millions() / f - 1.0) * 100.0,
                            (report.params_millions() / p - 1.0) * 100.0
                        );
                    }
                }
                Format::Csv => {
                    print!("{}", report.to_csv());
                    if let Some((f, p)) = target {
                        println!("target,,{},{}", (f * 1e6).round(), (p * 1e6).round());
                    }
                }
            }
        }
        Command::Train(args) => return train(args),
        Command::Eval(args) => return eval(args),
        Command::Gradcheck { tolerance, seed } => {
            echo_config("gradcheck", &serde_json::json!({ "tolerance": tolerance, "seed": seed }));
            let reports = run_suite(tolerance, seed)?;
            for r in &reports {
                print!("{}", r.to_text());
            }
            let failed = reports.iter().filter(|r| !r.passed()).count();
            let worst = reports.iter().map(|r| r.max_rel_error()).fold(0.0, f64::max);
            println!("{} checks, {failed} failed, max rel. error {worst:.3e}", reports.len());
            if failed > 0 {
                return Ok(EXIT_GRADCHECK);
            }
        }
    }
    Ok(0)
}

/// Training and test splits for `classes`-way data.
fn load_data(data: &DataArgs, classes: usize) -> anyhow::Result<(Dataset, Option<Dataset>)> {
    if let Some(count) = data.synthetic {
        let format = match classes {
            10 => CifarFormat::Cifar10,
            100 => CifarFormat::Cifar100,
            c => return Err(Error::Config(format!("synthetic data supports 10 or 100 classes, not {c}")).into()),
        };
        let records = synthetic_records(count, format, data.data_seed);
        return Ok((Dataset::from_records(Split::Train, format, records, None)?, None));
    }
    let dir = data
        .data_dir
        .as_deref()
        .ok_or_else(|| anyhow!(Error::NotFound(PathBuf::from("<data dir>"))))
        .context("no data: pass --data-dir, set SDCNET_CIFAR10_DIR, or use --synthetic")?;
    let (train, test) = match classes {
        10 => load_cifar10(dir),
        100 => load_cifar100(dir),
        c => Err(Error::Config(format!("CIFAR data has 10 or 100 classes, not {c}"))),
    }
    .with_context(|| format!("loading {}", dir.display()))?;
    Ok((train, Some(test)))
}

fn limit(ds: Dataset, n: Option<usize>) -> anyhow::Result<Dataset> {
    Ok(match n {
        Some(n) if n < ds.len() => ds.take(n)?,
        _ => ds,
    })
}

fn save(trainer: &Trainer, path: &Path) -> anyhow::Result<()> {
    let tmp = path.with_extension("tmp");
    Checkpoint::from_trainer(trainer).save(&tmp)?;
    std::fs::rename(&tmp, path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn train(args: TrainArgs) -> anyhow::Result<u8> {
    let mut trainer = match &args.resume {
        Some(path) => {
            let mut t = Checkpoint::load(path).and_then(|c| c.trainer()).with_context(|| format!("resuming {}", path.display()))?;
            t.config.checkpoint = args.checkpoint.clone().or(t.config.checkpoint.take());
            t.config.eval_every = args.eval_every;
            t
        }
        None => Trainer::new(TrainConfig {
            preset: args.preset.clone(),
            classes: args.classes,
            batch_size: args.batch_size,
            epochs: args.epochs,
            seed: args.seed,
            subset_size: args.subset,
            checkpoint: args.checkpoint.clone(),
            eval_every: args.eval_every,
            augment: !args.no_augment,
            decay_bn_params: args.decay_bn_params,
            lr_max: args.lr_max,
            lr_min: args.lr_min,
            ..TrainConfig::default()
        })?,
    };
    echo_config(
        "train",
        &serde_json::json!({
            "train": trainer.config,
            "resume": args.resume,
            "data_dir": args.data.data_dir,
            "synthetic": args.data.synthetic,
            "data_seed": args.data.data_seed,
            "test_subset": args.test_subset,
        }),
    );
    let (train_set, test_set) = load_data(&args.data, trainer.config.classes)?;
    let train_set = limit(train_set, trainer.config.subset_size)?;
    let test_set = test_set.map(|t| limit(t, args.test_subset)).transpose()?;
    eprintln!(
        "{}: {} trainable parameters, {} training images, starting at epoch {}",
        trainer.net.config.name,
        sdcnet::Parameterized::trainable_scalars(&trainer.net),
        train_set.len(),
        trainer.epoch
    );
    if test_set.is_some() {
        println!("epoch, lr, train_loss, train_acc, test_acc");
    } else {
        println!("epoch, lr, train_loss, train_acc");
    }
    while !trainer.is_finished() {
        let m = trainer.run_epoch(&train_set)?;
        let mut line = format!("{}, {:.6}, {:.6}, {:.4}", m.epoch, m.lr, m.mean_loss, m.accuracy);
        if let Some(test) = &test_set {
            let every = trainer.config.eval_every;
            if every > 0 && (trainer.epoch % every == 0 || trainer.is_finished()) {
                let e = evaluate(&trainer.net, test, trainer.config.batch_size)?;
                line.push_str(&format!(", {:.4}", e.accuracy));
            } else {
                line.push_str(", ");
            }
        }
        println!("{line}");
        if let Some(path) = &trainer.config.checkpoint {
            save(&trainer, path)?;
        }
    }
    Ok(0)
}

fn eval(args: EvalArgs) -> anyhow::Result<u8> {
    let ckpt = Checkpoint::load(&args.checkpoint).with_context(|| format!("reading {}", args.checkpoint.display()))?;
    let net = ckpt.network()?;
    echo_config(
        "eval",
        &serde_json::json!({
            "checkpoint": args.checkpoint,
            "network": net.config.name,
            "epoch": ckpt.epoch,
            "test_subset": args.test_subset,
            "data_dir": args.data.data_dir,
            "synthetic": args.data.synthetic,
            "data_seed": args.data.data_seed,
            "batch_size": args.batch_size,
        }),
    );
    let (train_set, test_set) = load_data(&args.data, net.config.classes)?;
    let ds = limit(test_set.unwrap_or(train_set), args.test_subset)?;
    let m = evaluate(&net, &ds, args.batch_size)?;
    println!("accuracy {:.4} ({} images, mean loss {:.4})", m.accuracy, m.examples, m.mean_loss);
    Ok(0)
}
