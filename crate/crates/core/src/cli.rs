//! Command-line front end.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;

use crate::error::{FarvaError, Result};
use crate::gibbs::ChainConfig;
use crate::io::{
    read_csmf, read_dataset, read_labels, read_posterior, read_predictions, read_schema, write_csmf,
    write_dataset, write_posterior, write_predictions, write_schema, write_truth, MetricsReport,
};
use crate::metrics::{acc1, acc_csmf, ccc, csmf_from_labels};
use crate::numerics::{derive_seed, ChainRng};
use crate::pipeline::{predict, run_benchmark, train, BenchmarkConfig, ModelKind, TrainSettings};
use crate::predict::DEFAULT_N_MC;
use crate::simulate::{generate_dataset, split_train_test, Preset};

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "farva", version, about = "Covariate-dependent latent factor model for verbal autopsy")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write simulated datasets with their generating parameters.
    Simulate {
        #[arg(long, value_parser = parse_preset)]
        preset: Preset,
        #[arg(long, default_value_t = 1)]
        n_datasets: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Split a labelled dataset into training and test files.
    Split {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        schema: PathBuf,
        #[arg(long, default_value_t = 0.25)]
        test_fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Fit the model and write a posterior file.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        schema: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Number of latent factors.
        #[arg(long)]
        k: Option<usize>,
        /// Number of loading basis columns.
        #[arg(long)]
        l: Option<usize>,
        #[command(flatten)]
        chain: ChainArgs,
        /// Covariate columns (names without the `x_` prefix).
        #[arg(long, value_delimiter = ',')]
        covariates: Vec<String>,
        /// Number of causes; defaults to the largest cause in the data.
        #[arg(long)]
        causes: Option<usize>,
    },
    /// Cause probabilities and CSMF for new decedents.
    Predict {
        #[arg(long)]
        posterior: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        csmf_out: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_N_MC)]
        n_mc: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Score predictions against true causes.
    Evaluate {
        #[arg(long)]
        predictions: PathBuf,
        /// Any CSV with `id` and `cause` columns.
        #[arg(long)]
        truth: PathBuf,
        /// CSMF estimate to score; defaults to the mean predicted simplex.
        #[arg(long)]
        csmf: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate, fit and score several models on a preset.
    Benchmark {
        #[arg(long, value_parser = parse_preset)]
        preset: Preset,
        #[arg(long, default_value_t = 10)]
        n_datasets: usize,
        #[arg(long, value_delimiter = ',', default_value = "farva,nbc", value_parser = parse_model)]
        models: Vec<ModelKind>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long, default_value_t = 6)]
        k: usize,
        #[arg(long, default_value_t = 5)]
        l: usize,
        #[arg(long, default_value_t = 2000)]
        iters: usize,
        #[arg(long, default_value_t = 1000)]
        burn: usize,
        #[arg(long, default_value_t = 20)]
        thin: usize,
        #[arg(long, default_value_t = DEFAULT_N_MC)]
        n_mc: usize,
        /// Also write per-dataset scores as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct ChainArgs {
    #[arg(long, default_value_t = 2000)]
    iters: usize,
    #[arg(long, default_value_t = 1000)]
    burn: usize,
    #[arg(long, default_value_t = 20)]
    thin: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn parse_preset(s: &str) -> std::result::Result<Preset, String> {
    s.parse().map_err(|e: FarvaError| e.to_string())
}

fn parse_model(s: &str) -> std::result::Result<ModelKind, String> {
    s.parse().map_err(|e: FarvaError| e.to_string())
}

/// Parse arguments, run the command and return the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            EXIT_RUNTIME
        }
    }
}

fn file_stem(dir: &Path, preset: Preset, idx: usize) -> PathBuf {
    dir.join(format!("sim_{preset}_{idx}"))
}

fn with_ext(stem: &Path, ext: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(ext);
    PathBuf::from(s)
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Simulate {
            preset,
            n_datasets,
            seed,
            out_dir,
        } => {
            std::fs::create_dir_all(&out_dir)?;
            for idx in 0..n_datasets {
                let mut rng = ChainRng::new(derive_seed(seed, idx as u64));
                let (data, truth) = generate_dataset(&preset.config(), &mut rng)?;
                let stem = file_stem(&out_dir, preset, idx);
                write_dataset(&with_ext(&stem, ".csv"), &data)?;
                write_schema(&with_ext(&stem, ".schema.toml"), &data.schema)?;
                write_truth(&with_ext(&stem, ".truth.json"), &truth)?;
            }
            info!("wrote {n_datasets} datasets to {}", out_dir.display());
            Ok(())
        }
        Command::Split {
            data,
            schema,
            test_fraction,
            seed,
            out_dir,
        } => {
            let schema = read_schema(&schema)?;
            let header = csv::Reader::from_path(&data)
                .and_then(|mut r| r.headers().cloned())
                .map_err(|e| FarvaError::Parse(e.to_string()))?;
            let covariates: Vec<String> = header
                .iter()
                .filter_map(|h| h.strip_prefix(crate::io::COVARIATE_PREFIX).map(str::to_string))
                .collect();
            let ds = read_dataset(&data, &schema, &covariates, None)?;
            let split = split_train_test(&ds, test_fraction, &mut ChainRng::new(seed))?;
            std::fs::create_dir_all(&out_dir)?;
            let mut test = split.test.clone();
            test.labels = split.test_labels.iter().map(|&c| Some(c)).collect();
            write_dataset(&out_dir.join("train.csv"), &split.train)?;
            write_dataset(&out_dir.join("test.csv"), &test)?;
            Ok(())
        }
        Command::Train {
            data,
            schema,
            out,
            k,
            l,
            chain,
            covariates,
            causes,
        } => {
            let schema = read_schema(&schema)?;
            let mut ds = read_dataset(&data, &schema, &covariates, causes)?;
            let settings = TrainSettings {
                n_factors: k,
                n_basis: l,
                chain: ChainConfig {
                    iterations: chain.iters,
                    burn_in: chain.burn,
                    thinning: chain.thin,
                    seed: chain.seed,
                },
            };
            settings.chain.validate()?;
            let fit = train(&mut ds, &settings)?;
            info!(
                "retained {} snapshots; Delta column norms {:.3?}; factor contributions {:.3?}",
                fit.header.n_snapshots, fit.header.shrinkage, fit.header.factor_contribution
            );
            write_posterior(&out, &fit)
        }
        Command::Predict {
            posterior,
            data,
            out,
            csmf_out,
            n_mc,
            seed,
        } => {
            let fit = read_posterior(&posterior)?;
            let h = &fit.header;
            let mut ds = read_dataset(&data, &h.schema, &h.covariate_names, Some(h.n_causes))?;
            let (pred, csmf) = predict(&fit, &mut ds, n_mc, seed)?;
            write_predictions(&out, &ds.ids, &pred.posterior)?;
            if let Some(path) = csmf_out {
                write_csmf(&path, &csmf)?;
            }
            Ok(())
        }
        Command::Evaluate {
            predictions,
            truth,
            csmf,
            out,
        } => {
            let (ids, post) = read_predictions(&predictions)?;
            let labels = read_labels(&truth)?;
            if labels.len() != ids.len() {
                return Err(FarvaError::DimensionMismatch(format!(
                    "{} predictions but {} true labels",
                    ids.len(),
                    labels.len()
                )));
            }
            let by_id: std::collections::HashMap<&str, usize> =
                labels.iter().map(|(id, c)| (id.as_str(), *c)).collect();
            let truth: Vec<usize> = ids
                .iter()
                .map(|id| {
                    by_id
                        .get(id.as_str())
                        .copied()
                        .ok_or_else(|| FarvaError::InvalidArgument(format!("id `{id}` has no true cause")))
                })
                .collect::<Result<_>>()?;
            let c = post.probabilities.first().map_or(0, Vec::len);
            let pred_csmf = match csmf {
                Some(path) => read_csmf(&path)?.mean,
                None => (0..c)
                    .map(|k| post.probabilities.iter().map(|p| p[k]).sum::<f64>() / ids.len() as f64)
                    .collect(),
            };
            let a = acc1(&truth, &post.top_cause)?;
            let report = MetricsReport {
                acc1: a,
                acc_csmf: acc_csmf(&csmf_from_labels(&truth, c)?, &pred_csmf)?,
                ccc: ccc(a, c)?,
            };
            match out {
                Some(path) => std::fs::write(path, report.to_text())?,
                None => print!("{}", report.to_text()),
            }
            Ok(())
        }
        Command::Benchmark {
            preset,
            n_datasets,
            models,
            seed,
            jobs,
            k,
            l,
            iters,
            burn,
            thin,
            n_mc,
            out,
        } => {
            let cfg = BenchmarkConfig {
                n_factors: k,
                n_basis: l,
                iterations: iters,
                burn_in: burn,
                thinning: thin,
                n_mc,
                jobs,
                ..BenchmarkConfig::new(preset, n_datasets, models, seed)
            };
            let result = run_benchmark(&cfg)?;
            print!("{}", result.table());
            if let Some(path) = out {
                let text = serde_json::to_string_pretty(&result).map_err(|e| FarvaError::Parse(e.to_string()))?;
                std::fs::write(path, text)?;
            }
            Ok(())
        }
    }
}
