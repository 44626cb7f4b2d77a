use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use maskdiff::diffusion::{impute, sample, train, Checkpoint, PreprocessMode, TrainConfig};
use maskdiff::evaluation::{
    fidelity_score, fidelity_text, imputation_error, imputation_text, tstr, utility_text, FidelityReport,
    ImputationReport, UtilityReport,
};
use maskdiff::experiment::{run_experiment, write_outputs, ExperimentConfig};
use maskdiff::missingness::{apply_mask, MaskMatrix, Mechanism, MechanismConfig, DEFAULT_ALWAYS_OBSERVED};
use maskdiff::numerics::Rng;
use maskdiff::tabular::{fit_encoder, generate_bayesian_network, load_table, write_table, Schema, Table};
use maskdiff::{Error, Result};

#[derive(Parser)]
#[command(name = "maskdiff", version, about = "Tabular diffusion models trained on incomplete data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// JSON file with settings; explicit flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(short, long = "out")]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write Bayesian-network rows, or validate and copy an existing CSV.
    GenerateData {
        #[arg(long, conflicts_with = "input")]
        bn: Option<usize>,
        #[arg(long)]
        input: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Apply a missingness mechanism; writes the observed CSV and a 0/1 mask CSV.
    Mask {
        #[arg(long)]
        input: PathBuf,
        #[arg(long = "mech")]
        mechanism: Mechanism,
        #[arg(long)]
        ratio: f64,
        #[arg(long, default_value_t = DEFAULT_ALWAYS_OBSERVED)]
        always_observed: f64,
        /// Mask destination; defaults to `<out>.mask.csv`.
        #[arg(long)]
        mask_out: Option<PathBuf>,
        #[arg(long)]
        schema: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Train a model and write a checkpoint.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// 0/1 mask to apply on top of the NA cells already in the data.
        #[arg(long)]
        mask: Option<PathBuf>,
        #[arg(long)]
        schema: Option<PathBuf>,
        #[arg(long)]
        mode: Option<PreprocessMode>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        timesteps: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Draw synthetic rows from a checkpoint.
    Sample {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(short = 'n', long = "rows")]
        rows: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Fill the NA cells of a CSV; `-k` > 1 writes `<stem>_<i>.csv` files.
    Impute {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(short, long, default_value_t = 1)]
        k: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Score synthetic or imputed tables against real data.
    Evaluate {
        #[arg(long)]
        real: PathBuf,
        #[arg(long)]
        synth: Option<PathBuf>,
        /// Real training split for train-synthetic-test-real; `--real` is the test split.
        #[arg(long, requires = "target")]
        train: Option<PathBuf>,
        #[arg(long)]
        target: Option<String>,
        /// Imputed table scored against `--real` on the cells `--mask` marks missing.
        #[arg(long, requires = "mask")]
        imputed: Option<PathBuf>,
        #[arg(long)]
        mask: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Run a grid of mechanisms × ratios × methods × seeds.
    Experiment {
        #[command(flatten)]
        common: Common,
    },
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn required_out(common: &Common) -> Result<&Path> {
    common
        .out
        .as_deref()
        .ok_or_else(|| Error::InvalidConfig("an output path is required (-o/--out)".into()))
}

fn load_schema(path: Option<&Path>) -> Result<Option<Schema>> {
    path.map(|p| Schema::from_json(&read(p)?)).transpose()
}

fn load_csv(path: &Path, schema: Option<&Schema>) -> Result<Table> {
    load_table(&read(path)?, schema)
}

fn json_config<T: serde::de::DeserializeOwned + Default>(common: &Common) -> Result<T> {
    match &common.config {
        Some(p) => Ok(serde_json::from_slice(&read(p)?)?),
        None => Ok(T::default()),
    }
}

fn emit<T: Serialize>(out: Option<&Path>, value: &T, text: String) -> Result<()> {
    print!("{text}");
    if let Some(p) = out {
        write(p, &serde_json::to_vec_pretty(value)?)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct EvaluationOutput {
    fidelity: Option<FidelityReport>,
    utility: Option<UtilityReport>,
    imputation: Option<ImputationReport>,
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::GenerateData { bn, input, common } => {
            let out = required_out(&common)?;
            let table = match (bn, input) {
                (Some(n), _) => generate_bayesian_network(n, &mut Rng::new(common.seed))?,
                (None, Some(p)) => load_csv(&p, None)?,
                (None, None) => return Err(Error::InvalidConfig("pass --bn <rows> or --input <csv>".into())),
            };
            write(out, &write_table(&table)?)
        }
        Command::Mask {
            input,
            mechanism,
            ratio,
            always_observed,
            mask_out,
            schema,
            common,
        } => {
            let out = required_out(&common)?;
            let table = load_csv(&input, load_schema(schema.as_deref())?.as_ref())?;
            let config = MechanismConfig {
                kind: mechanism,
                ratio,
                always_observed_fraction: always_observed,
            };
            let mask = config.generate(&table, &mut Rng::new(common.seed))?;
            let observed = apply_mask(&table, &mask)?;
            write(out, &write_table(&observed)?)?;
            let mask_path = mask_out.unwrap_or_else(|| out.with_extension("mask.csv"));
            write(&mask_path, &mask.to_csv(&table.schema().names())?)
        }
        Command::Train {
            data,
            mask,
            schema,
            mode,
            epochs,
            batch_size,
            lr,
            timesteps,
            common,
        } => {
            let out = required_out(&common)?;
            let mut config: TrainConfig = json_config(&common)?;
            config.seed = common.seed;
            config.mode = mode.unwrap_or(config.mode);
            config.epochs = epochs.unwrap_or(config.epochs);
            config.batch_size = batch_size.unwrap_or(config.batch_size);
            config.learning_rate = lr.unwrap_or(config.learning_rate);
            config.timesteps = timesteps.unwrap_or(config.timesteps);
            let table = load_csv(&data, load_schema(schema.as_deref())?.as_ref())?;
            let mask = match mask {
                Some(p) => MaskMatrix::from_csv(&read(&p)?)?,
                None => MaskMatrix::all_observed(table.n_rows(), table.n_cols()),
            };
            let ckpt = train(&table, &mask, &config)?;
            eprintln!(
                "trained {} epochs, final loss {:.4}, rho_max {:.3}",
                ckpt.loss_trace.len(),
                ckpt.loss_trace.last().copied().unwrap_or(f32::NAN),
                ckpt.rho.max
            );
            ckpt.save(out)
        }
        Command::Sample { checkpoint, rows, common } => {
            let out = required_out(&common)?;
            let ckpt = Checkpoint::from_bytes(&read(&checkpoint)?)?;
            let table = sample(&ckpt, rows, &Rng::new(common.seed))?;
            write(out, &write_table(&table)?)
        }
        Command::Impute { checkpoint, data, k, common } => {
            let out = required_out(&common)?;
            if k == 0 {
                return Err(Error::InvalidConfig("-k must be at least 1".into()));
            }
            let ckpt = Checkpoint::from_bytes(&read(&checkpoint)?)?;
            let table = load_csv(&data, Some(&ckpt.schema))?;
            let completed = impute(&ckpt, &table, k, &Rng::new(common.seed))?;
            if k == 1 {
                return write(out, &write_table(&completed[0])?);
            }
            let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("imputed");
            for (i, t) in completed.iter().enumerate() {
                write(&out.with_file_name(format!("{stem}_{i}.csv")), &write_table(t)?)?;
            }
            Ok(())
        }
        Command::Evaluate {
            real,
            synth,
            train,
            target,
            imputed,
            mask,
            common,
        } => {
            let real = load_csv(&real, None)?;
            let schema = fit_encoder(&real, real.schema())?;
            let real = real.with_schema(schema.clone())?;
            let mut report = EvaluationOutput {
                fidelity: None,
                utility: None,
                imputation: None,
            };
            let mut text = String::new();
            if let Some(p) = synth {
                let synth = load_csv(&p, Some(&schema))?;
                let f = fidelity_score(&real, &synth, &schema)?;
                text.push_str(&fidelity_text(&f));
                report.fidelity = Some(f);
                if let (Some(train_path), Some(target)) = (train, target.as_deref()) {
                    let train = load_csv(&train_path, Some(&schema))?;
                    let u = tstr(&train, &real, &synth, target)?;
                    text.push_str(&utility_text(&u));
                    report.utility = Some(u);
                }
            }
            if let (Some(p), Some(m)) = (imputed, mask) {
                let imputed = load_csv(&p, Some(&schema))?;
                let mask = MaskMatrix::from_csv(&read(&m)?)?;
                let r = imputation_error(&imputed, &real, &mask, &schema)?;
                text.push_str(&imputation_text(&r));
                report.imputation = Some(r);
            }
            if text.is_empty() {
                return Err(Error::InvalidConfig("nothing to evaluate: pass --synth or --imputed".into()));
            }
            emit(common.out.as_deref(), &report, text)
        }
        Command::Experiment { common } => {
            let mut config: ExperimentConfig = json_config(&common)?;
            if let Some(out) = &common.out {
                config.output_dir = Some(out.clone());
            }
            let dir = config
                .output_dir
                .clone()
                .ok_or_else(|| Error::InvalidConfig("experiment needs an output directory (-o or output_dir)".into()))?;
            let output = run_experiment(&config)?;
            write_outputs(&output, &config, &dir)?;
            for row in &output.summary {
                let fid = row.fidelity.map_or("-".to_string(), |m| format!("{:.2} ± {:.2}", m.mean, m.std));
                println!("{:<18} {:<5} {:<12} {fid}", row.mechanism.name(), row.ratio, row.method.name());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, Error::InvalidConfig(_) | Error::OutOfRange { .. }) {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
