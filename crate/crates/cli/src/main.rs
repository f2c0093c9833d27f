#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fmt::Display;
use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use diffsort::bench::{run_bench, BenchRecord};
use diffsort::data::{synth_generate, Dataset, SynthSpec};
use diffsort::objective::CrossEntropy;
use diffsort::relax::{default_steepness, Mode, RelaxConfig, DEFAULT_ART_LAMBDA, DEFAULT_EPSILON};
use diffsort::schedule::{ComparatorSchedule, NetworkKind};
use diffsort::softsort::{forward, gradient_check};
use diffsort::train::{
    evaluate, train_loop, Architecture, Checkpoint, LossKind, ScoringModel, TrainConfig,
    DEFAULT_LEARNING_RATE,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GRADCHECK_TOLERANCE: f64 = 1e-3;
const GRADCHECK_STEP: f64 = 1e-4;

#[derive(Parser)]
#[command(name = "diffsort", version, about = "Differentiable sorting networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a comparator schedule as JSON and print its layer count.
    GenSchedule {
        #[arg(long, value_parser = parse_kind)]
        kind: NetworkKind,
        #[arg(long)]
        n: usize,
        /// Output file; the schedule goes to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sort values through the relaxed network.
    Sort(SortArgs),
    /// Compare analytic and finite-difference input gradients.
    Gradcheck {
        #[arg(long)]
        n: usize,
        #[arg(long, value_parser = parse_kind, default_value = "bitonic")]
        kind: NetworkKind,
        #[arg(long, default_value_t = DEFAULT_ART_LAMBDA)]
        lambda: f64,
        /// Defaults to twice the layer count.
        #[arg(long)]
        steepness: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Generate the synthetic linear ranking task as CSV.
    GenData {
        #[arg(long, default_value_t = 8)]
        d: usize,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1000)]
        groups: usize,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Also write the latent key of every row, one per line.
        #[arg(long)]
        keys_out: Option<PathBuf>,
        /// Also write a checkpoint holding the latent linear scorer.
        #[arg(long)]
        oracle_out: Option<PathBuf>,
        /// Move the last `holdout` groups (same latent scorer) to `--holdout-out`.
        #[arg(long, requires = "holdout_out")]
        holdout: Option<usize>,
        #[arg(long, requires = "holdout")]
        holdout_out: Option<PathBuf>,
        #[arg(long, requires = "holdout")]
        holdout_keys_out: Option<PathBuf>,
    },
    /// Train a scorer through the relaxed network.
    Train(TrainArgs),
    /// Print EM, EW and EM-k of a checkpoint on a dataset as JSON.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Latent keys from `gen-data --keys-out`; EM-k is then drawn from the
        /// whole item pool instead of within groups.
        #[arg(long)]
        keys: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Time forward and backward passes for each size and network kind.
    Bench {
        #[arg(long, value_delimiter = ',', required = true)]
        n: Vec<usize>,
        #[arg(long, value_delimiter = ',', value_parser = parse_kind, default_value = "odd-even,bitonic")]
        kinds: Vec<NetworkKind>,
        #[arg(long, default_value_t = 64)]
        batch: usize,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// CSV output; rows go to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct SortArgs {
    /// Comma-separated values.
    #[arg(
        long,
        value_delimiter = ',',
        allow_hyphen_values = true,
        required_unless_present = "input",
        conflicts_with = "input"
    )]
    values: Option<Vec<f64>>,
    /// File of numbers separated by commas, whitespace or newlines.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, value_parser = parse_kind, default_value = "bitonic")]
    kind: NetworkKind,
    /// Defaults to twice the layer count.
    #[arg(long)]
    steepness: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_ART_LAMBDA)]
    lambda: f64,
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    epsilon: f64,
    /// Exact compare-and-swap instead of the relaxation.
    #[arg(long)]
    hard: bool,
    /// Write the soft permutation matrix as CSV (rows are ranks).
    #[arg(long)]
    emit_perm: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum LossArg {
    RankingCe,
    CategoricalCe,
    TopK,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_parser = parse_kind, default_value = "bitonic")]
    kind: NetworkKind,
    /// Defaults to twice the layer count.
    #[arg(long)]
    steepness: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_ART_LAMBDA)]
    lambda: f64,
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    epsilon: f64,
    #[arg(long, default_value_t = 1000)]
    steps: usize,
    /// Groups per step.
    #[arg(long, default_value_t = 100)]
    batch: usize,
    #[arg(long, default_value_t = DEFAULT_LEARNING_RATE)]
    lr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    grad_clip: Option<f64>,
    #[arg(long, value_enum, default_value = "ranking-ce")]
    loss: LossArg,
    /// k for the top-k loss.
    #[arg(long, default_value_t = 1)]
    k: usize,
    /// Hidden layer widths; a linear scorer when omitted.
    #[arg(long, value_delimiter = ',')]
    hidden: Vec<usize>,
    /// Checkpoint path.
    #[arg(long)]
    out: PathBuf,
    /// Per-step loss CSV; defaults to the checkpoint path with `.loss.csv`.
    #[arg(long)]
    loss_csv: Option<PathBuf>,
}

/// Bad invocation that clap cannot detect on its own.
#[derive(Debug)]
struct UsageError(String);

impl Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn parse_kind(s: &str) -> Result<NetworkKind, String> {
    s.parse().map_err(|e: diffsort::Error| e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<UsageError>() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

fn run(command: Command) -> anyhow::Result<ExitCode> {
    match command {
        Command::GenSchedule { kind, n, out } => {
            let schedule = ComparatorSchedule::new(kind, n)?;
            match out {
                Some(path) => schedule
                    .save(&path)
                    .with_context(|| format!("writing {}", path.display()))?,
                None => println!("{}", schedule.to_json()),
            }
            println!("layers: {}", schedule.layer_count());
        }
        Command::Sort(args) => sort(args)?,
        Command::Gradcheck {
            n,
            kind,
            lambda,
            steepness,
            seed,
        } => {
            let schedule = ComparatorSchedule::new(kind, n)?;
            let s = steepness.unwrap_or_else(|| default_steepness::<f64>(&schedule).max(1.0));
            let cfg = RelaxConfig::with_params(s, lambda, DEFAULT_EPSILON, Mode::Soft)?;
            let values = gapped_values(n, 0.1, seed);
            let err = gradient_check(&schedule, &cfg, &values, GRADCHECK_STEP)?;
            println!("max relative error: {err:.3e}");
            if !(err < GRADCHECK_TOLERANCE) {
                eprintln!("gradient check failed: tolerance {GRADCHECK_TOLERANCE:e}");
                return Ok(ExitCode::from(2));
            }
        }
        Command::GenData {
            d,
            n,
            groups,
            noise,
            seed,
            out,
            keys_out,
            oracle_out,
            holdout,
            holdout_out,
            holdout_keys_out,
        } => {
            let held = holdout.unwrap_or(0);
            if holdout.is_some() && (held == 0 || held >= groups) {
                return Err(UsageError(format!(
                    "--holdout must be between 1 and {}",
                    groups.saturating_sub(1)
                ))
                .into());
            }
            let mut synth = synth_generate(&SynthSpec::new(d, n, groups, noise, seed))?;
            if let Some(path) = holdout_out {
                let (train, rest) = synth.split_at(groups - held)?;
                rest.dataset.save_csv(&path)?;
                write_keys(holdout_keys_out, &rest.keys)?;
                synth = train;
            }
            synth.dataset.save_csv(&out)?;
            write_keys(keys_out, &synth.keys)?;
            if let Some(path) = oracle_out {
                let mut params = synth.weights.clone();
                params.push(0.0);
                let model = ScoringModel::new(Architecture::Linear, d, params)?;
                let config = TrainConfig::new(NetworkKind::OddEven, n)?;
                Checkpoint::new(&model, &config, 0).save(&path)?;
            }
            println!(
                "groups: {}, held out: {held}, n: {n}, d: {d}",
                groups - held
            );
        }
        Command::Train(args) => train(args)?,
        Command::Eval {
            checkpoint,
            data,
            keys,
            k,
            seed,
        } => {
            let ckpt = Checkpoint::load(&checkpoint)?;
            let dataset = Dataset::load_csv(&data)?;
            if ckpt.d != dataset.d() {
                return Err(anyhow!(
                    "checkpoint expects {} features, dataset has {}",
                    ckpt.d,
                    dataset.d()
                ));
            }
            if ckpt.config.n != dataset.n() {
                return Err(anyhow!(
                    "checkpoint was trained on groups of {}, dataset has groups of {}",
                    ckpt.config.n,
                    dataset.n()
                ));
            }
            let keys = keys.map(|p| read_numbers(&p)).transpose()?;
            let report = evaluate(&ckpt.model()?, &dataset, keys.as_deref(), k, seed)?;
            let mut json = serde_json::Map::new();
            json.insert("em".into(), report.em.into());
            json.insert("ew".into(), report.ew.into());
            json.insert(format!("em{k}"), report.em_k.into());
            json.insert("count".into(), report.count.into());
            println!("{}", serde_json::Value::Object(json));
        }
        Command::Bench {
            n,
            kinds,
            batch,
            repeats,
            seed,
            out,
        } => {
            let mut lines = vec![BenchRecord::CSV_HEADER.to_string()];
            for &size in &n {
                for &kind in &kinds {
                    lines.push(run_bench(kind, size, batch, repeats, seed)?.csv_row());
                }
            }
            let text = lines.join("\n") + "\n";
            match out {
                Some(path) => {
                    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?
                }
                None => std::io::stdout().write_all(text.as_bytes())?,
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn sort(args: SortArgs) -> anyhow::Result<()> {
    let values = match (args.values, &args.input) {
        (Some(v), _) => v,
        (None, Some(path)) => read_numbers(path)?,
        (None, None) => {
            return Err(UsageError("one of --values or --input is required".into()).into())
        }
    };
    if values.is_empty() {
        return Err(UsageError("no values to sort".into()).into());
    }
    let schedule = ComparatorSchedule::new(args.kind, values.len())?;
    let cfg = if args.hard {
        RelaxConfig::hard()
    } else {
        let s = args
            .steepness
            .unwrap_or_else(|| default_steepness::<f64>(&schedule).max(1.0));
        RelaxConfig::with_params(s, args.lambda, args.epsilon, Mode::Soft)?
    };
    let out = forward(&values, &schedule, &cfg)?;
    println!("{}", join(&out.sorted));
    if let Some(path) = args.emit_perm {
        let text: String = out.perm.rows().map(|r| join(r) + "\n").collect();
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn train(args: TrainArgs) -> anyhow::Result<()> {
    let dataset = Dataset::load_csv(&args.data)?;
    let mut config = TrainConfig::new(args.kind, dataset.n())?;
    let steepness = args.steepness.unwrap_or(config.relax.steepness);
    config.relax = RelaxConfig::with_params(steepness, args.lambda, args.epsilon, Mode::Soft)?;
    config.steps = args.steps;
    config.batch = args.batch;
    config.adam.lr = args.lr;
    config.seed = args.seed;
    config.grad_clip = args.grad_clip;
    config.loss = match args.loss {
        LossArg::RankingCe => LossKind::RankingCe {
            cross_entropy: CrossEntropy::Binary,
        },
        LossArg::CategoricalCe => LossKind::RankingCe {
            cross_entropy: CrossEntropy::Categorical,
        },
        LossArg::TopK => LossKind::TopK { k: args.k },
    };
    if !args.hidden.is_empty() {
        config.architecture = Architecture::Mlp {
            hidden: args.hidden,
        };
    }
    config.validate()?;

    let outcome = train_loop(&dataset, &config)?;
    Checkpoint::new(&outcome.model, &config, config.steps).save(&args.out)?;
    let loss_path = args
        .loss_csv
        .unwrap_or_else(|| args.out.with_extension("loss.csv"));
    let mut text = String::from("step,loss\n");
    for (step, loss) in outcome.history.iter().enumerate() {
        text += &format!("{},{loss}\n", step + 1);
    }
    fs::write(&loss_path, text).with_context(|| format!("writing {}", loss_path.display()))?;
    if let Some(last) = outcome.history.last() {
        println!("final loss: {last:.6}");
    }
    Ok(())
}

fn write_keys(path: Option<PathBuf>, keys: &[f64]) -> anyhow::Result<()> {
    if let Some(path) = path {
        let text: String = keys.iter().map(|k| format!("{k}\n")).collect();
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn join(xs: &[f64]) -> String {
    xs.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

fn read_numbers(path: &PathBuf) -> anyhow::Result<Vec<f64>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| anyhow!("malformed number `{t}` in {}", path.display()))
        })
        .collect()
}

/// Random values with every pairwise gap at least `gap`, in shuffled order.
fn gapped_values(n: usize, gap: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let center = 1.25 * gap * n as f64;
    let mut v: Vec<f64> = (0..n)
        .map(|k| k as f64 * 2.5 * gap + rng.random_range(0.0..1.5 * gap) - center)
        .collect();
    v.shuffle(&mut rng);
    v
}
