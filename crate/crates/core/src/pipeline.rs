//! End-to-end training, prediction and the simulation benchmark.

use std::fmt;
use std::str::FromStr;

use log::info;
use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{invalid, FarvaError, Result};
use crate::gibbs::{factor_diagnostic, run_chain, shrinkage_diagnostic, ChainConfig};
use crate::io::{PosteriorFile, PosteriorHeader};
use crate::metrics::{acc1, acc_csmf, ccc, csmf_from_labels};
use crate::model::Hyperparameters;
use crate::nbc::{nbc_fit, nbc_predict_dataset, DEFAULT_SMOOTHING};
use crate::numerics::{derive_seed, ChainRng};
use crate::predict::{argmax, estimate_csmf, predict_dataset, CsmfEstimate, Prediction, DEFAULT_N_MC};
use crate::simulate::{generate_dataset, split_train_test, Preset};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSettings {
    /// Defaults to min(15, P).
    pub n_factors: Option<usize>,
    /// Defaults to min(10, P).
    pub n_basis: Option<usize>,
    pub chain: ChainConfig,
}

/// Fit scales for continuous columns on `data`, then run one chain.
pub fn train(data: &mut Dataset, settings: &TrainSettings) -> Result<PosteriorFile> {
    data.standardize()?;
    let defaults = Hyperparameters::defaults(data.n_causes, data.p(), data.b());
    let k = settings.n_factors.unwrap_or(defaults.n_factors);
    let l = settings.n_basis.unwrap_or(defaults.n_basis);
    let hyper = defaults.with_dims(k, l);
    let samples = run_chain(data, &hyper, &settings.chain)?;
    let x_mean = DVector::from_fn(data.b(), |b, _| data.x.column(b).mean());
    let header = PosteriorHeader {
        meta: samples.meta.clone(),
        shrinkage: shrinkage_diagnostic(&samples)?,
        factor_contribution: factor_diagnostic(&samples, &x_mean)?,
        hyper: hyper.clone(),
        schema: data.schema.clone(),
        columns: data.columns.clone(),
        covariate_names: data.covariate_names.clone(),
        n_causes: data.n_causes,
        n_rows: data.n(),
        n_factors: hyper.n_factors,
        n_basis: hyper.n_basis,
        n_snapshots: samples.len(),
    };
    Ok(PosteriorFile { header, samples })
}

/// Predict `test` with a fitted posterior, applying the training scales.
pub fn predict(file: &PosteriorFile, test: &mut Dataset, n_mc: usize, seed: u64) -> Result<(Prediction, CsmfEstimate)> {
    let h = &file.header;
    if test.schema != h.schema {
        return Err(FarvaError::Schema("test data schema differs from the training schema".into()));
    }
    if test.covariate_names != h.covariate_names {
        return Err(FarvaError::Schema(format!(
            "covariates {:?} differ from training covariates {:?}",
            test.covariate_names, h.covariate_names
        )));
    }
    let scales: Vec<f64> = h
        .columns
        .iter()
        .map(|c| match c.kind {
            crate::data::ColumnKind::Continuous { scale, .. } => scale,
            _ => 1.0,
        })
        .collect();
    test.set_scales(&scales)?;
    let pred = predict_dataset(&file.samples, test, n_mc, seed)?;
    let csmf = estimate_csmf(&pred.labels, h.n_causes)?;
    Ok((pred, csmf))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    Farva,
    FarvaNoCov,
    Nbc,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Farva => "farva",
            ModelKind::FarvaNoCov => "farva-nocov",
            ModelKind::Nbc => "nbc",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = FarvaError;

    fn from_str(s: &str) -> Result<Self> {
        [ModelKind::Farva, ModelKind::FarvaNoCov, ModelKind::Nbc]
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| FarvaError::InvalidArgument(format!("unknown model `{s}` (farva, farva-nocov, nbc)")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub preset: Preset,
    pub n_datasets: usize,
    pub models: Vec<ModelKind>,
    pub seed: u64,
    pub n_factors: usize,
    pub n_basis: usize,
    pub iterations: usize,
    pub burn_in: usize,
    pub thinning: usize,
    pub n_mc: usize,
    pub test_fraction: f64,
    pub jobs: usize,
}

impl BenchmarkConfig {
    pub fn new(preset: Preset, n_datasets: usize, models: Vec<ModelKind>, seed: u64) -> Self {
        Self {
            preset,
            n_datasets,
            models,
            seed,
            n_factors: 6,
            n_basis: 5,
            iterations: 2000,
            burn_in: 1000,
            thinning: 20,
            n_mc: DEFAULT_N_MC,
            test_fraction: 0.25,
            jobs: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub dataset: usize,
    pub model: ModelKind,
    pub acc1: f64,
    pub acc_csmf: f64,
    pub ccc: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub model: ModelKind,
    pub acc1: (f64, f64),
    pub acc_csmf: (f64, f64),
    pub ccc: (f64, f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkResult {
    pub config: BenchmarkConfig,
    pub scores: Vec<Score>,
    pub summary: Vec<Summary>,
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, 0.0);
    }
    (m, (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt())
}

fn score(dataset: usize, model: ModelKind, truth: &[usize], top: &[usize], csmf: &[f64], c: usize) -> Result<Score> {
    let a = acc1(truth, top)?;
    Ok(Score {
        dataset,
        model,
        acc1: a,
        acc_csmf: acc_csmf(&csmf_from_labels(truth, c)?, csmf)?,
        ccc: ccc(a, c)?,
    })
}

/// Generate, split, fit and score one dataset for every requested model.
pub fn benchmark_dataset(cfg: &BenchmarkConfig, index: usize) -> Result<Vec<Score>> {
    let seed = derive_seed(cfg.seed, index as u64);
    let mut rng = ChainRng::new(seed);
    let (data, _) = generate_dataset(&cfg.preset.config(), &mut rng)?;
    let split = split_train_test(&data, cfg.test_fraction, &mut rng)?;
    let c = data.n_causes;
    let settings = TrainSettings {
        n_factors: Some(cfg.n_factors),
        n_basis: Some(cfg.n_basis),
        chain: ChainConfig {
            iterations: cfg.iterations,
            burn_in: cfg.burn_in,
            thinning: cfg.thinning,
            seed: derive_seed(seed, 1),
        },
    };
    let mut out = Vec::with_capacity(cfg.models.len());
    for &model in &cfg.models {
        let s = match model {
            ModelKind::Farva | ModelKind::FarvaNoCov => {
                let (mut train_set, mut test_set) = if model == ModelKind::Farva {
                    (split.train.clone(), split.test.clone())
                } else {
                    (split.train.intercept_only(), split.test.intercept_only())
                };
                let fit = train(&mut train_set, &settings)?;
                let (pred, csmf) = predict(&fit, &mut test_set, cfg.n_mc, derive_seed(seed, 2))?;
                score(index, model, &split.test_labels, &pred.posterior.top_cause, &csmf.mean, c)?
            }
            ModelKind::Nbc => {
                let m = nbc_fit(&split.train, DEFAULT_SMOOTHING)?;
                let probs = nbc_predict_dataset(&m, &split.test);
                let top: Vec<usize> = probs.iter().map(|p| argmax(p)).collect();
                let csmf: Vec<f64> = (0..c)
                    .map(|k| probs.iter().map(|p| p[k]).sum::<f64>() / probs.len() as f64)
                    .collect();
                score(index, model, &split.test_labels, &top, &csmf, c)?
            }
        };
        info!(
            "preset {} dataset {index} {}: acc1 {:.3} acc_csmf {:.3}",
            cfg.preset, model, s.acc1, s.acc_csmf
        );
        out.push(s);
    }
    Ok(out)
}

/// Run the benchmark on `cfg.jobs` worker threads. Each dataset derives its
/// own seeds from the master seed, so results do not depend on `jobs`.
pub fn run_benchmark(cfg: &BenchmarkConfig) -> Result<BenchmarkResult> {
    if cfg.n_datasets == 0 || cfg.models.is_empty() {
        return invalid("need at least one dataset and one model");
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs.max(1))
        .build()
        .map_err(|e| FarvaError::InvalidArgument(e.to_string()))?;
    let per: Vec<Vec<Score>> = pool.install(|| {
        (0..cfg.n_datasets)
            .into_par_iter()
            .map(|i| benchmark_dataset(cfg, i))
            .collect::<Result<_>>()
    })?;
    let scores: Vec<Score> = per.into_iter().flatten().collect();
    let summary = cfg
        .models
        .iter()
        .map(|&m| {
            let pick = |f: fn(&Score) -> f64| mean_sd(&scores.iter().filter(|s| s.model == m).map(f).collect::<Vec<_>>());
            Summary {
                model: m,
                acc1: pick(|s| s.acc1),
                acc_csmf: pick(|s| s.acc_csmf),
                ccc: pick(|s| s.ccc),
            }
        })
        .collect();
    Ok(BenchmarkResult {
        config: cfg.clone(),
        scores,
        summary,
    })
}

impl BenchmarkResult {
    /// One row per model: mean (SD) of each metric.
    pub fn table(&self) -> String {
        let mut out = format!(
            "preset {} ({} datasets)\n{:<12} {:>16} {:>16} {:>16}\n",
            self.config.preset, self.config.n_datasets, "model", "acc1", "acc_csmf", "ccc"
        );
        for s in &self.summary {
            let cell = |(m, sd): (f64, f64)| format!("{m:.3} ({sd:.3})");
            out.push_str(&format!(
                "{:<12} {:>16} {:>16} {:>16}\n",
                s.model.name(),
                cell(s.acc1),
                cell(s.acc_csmf),
                cell(s.ccc)
            ));
        }
        out
    }
}
