//! Out-of-sample cause assignment, CSMF estimation and latent summaries.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, LatentConstraint};
use crate::error::{invalid, FarvaError, Result};
use crate::model::{ModelState, PosteriorSamples};
use crate::numerics::{
    log_norm_cdf_diff, log_sum_exp, norm_logpdf, sample_categorical_log, softmax, ChainRng,
};

pub const DEFAULT_N_MC: usize = 200;

/// Log probability (or log density for point cells) of one observed cell
/// given its latent mean and standard deviation.
pub fn log_cell_probability(constraint: &LatentConstraint, mean: f64, sd: f64) -> f64 {
    match *constraint {
        LatentConstraint::Point(v) => norm_logpdf((v - mean) / sd) - sd.ln(),
        LatentConstraint::Interval { lo, hi, .. } => log_norm_cdf_diff((lo - mean) / sd, (hi - mean) / sd),
        LatentConstraint::Free => 0.0,
    }
}

/// Monte Carlo estimate of ln p(s | y = c), integrating η ~ N(ψ_c(x), I)
/// with `n_mc` draws. `constraints` encodes the observed row.
pub fn log_likelihood_s_given_c(
    state: &ModelState,
    constraints: &[LatentConstraint],
    x: &DVector<f64>,
    c: usize,
    n_mc: usize,
    rng: &mut ChainRng,
) -> Result<f64> {
    if n_mc == 0 {
        return invalid("n_mc must be positive");
    }
    if constraints.len() != state.p() {
        return Err(FarvaError::DimensionMismatch(format!(
            "row has {} cells, model has {} columns",
            constraints.len(),
            state.p()
        )));
    }
    let lambda = state.compute_loadings(c, x)?;
    let psi = state.compute_psi(c, x)?;
    let sd: Vec<f64> = state.sigma2.iter().map(|s| s.sqrt()).collect();
    let k = psi.len();
    let observed: Vec<usize> = (0..constraints.len())
        .filter(|&j| constraints[j] != LatentConstraint::Free)
        .collect();
    let mut eta = DVector::zeros(k);
    let mut logs = Vec::with_capacity(n_mc);
    for _ in 0..n_mc {
        for kk in 0..k {
            eta[kk] = psi[kk] + rng.standard_normal();
        }
        let mut total = 0.0;
        for &j in &observed {
            let mean = lambda.row(j).dot(&eta.transpose());
            total += log_cell_probability(&constraints[j], mean, sd[j]);
        }
        logs.push(total);
    }
    Ok(log_sum_exp(&logs) - (n_mc as f64).ln())
}

/// [`log_likelihood_s_given_c`] on the natural scale.
pub fn likelihood_s_given_c(
    state: &ModelState,
    constraints: &[LatentConstraint],
    x: &DVector<f64>,
    c: usize,
    n_mc: usize,
    rng: &mut ChainRng,
) -> Result<f64> {
    log_likelihood_s_given_c(state, constraints, x, c, n_mc, rng).map(f64::exp)
}

/// Posterior cause simplex under a single snapshot.
pub fn snapshot_posterior(
    state: &ModelState,
    constraints: &[LatentConstraint],
    x: &DVector<f64>,
    n_mc: usize,
    rng: &mut ChainRng,
) -> Result<Vec<f64>> {
    let scores = (0..state.n_causes())
        .map(|c| Ok(state.pi[c].ln() + log_likelihood_s_given_c(state, constraints, x, c, n_mc, rng)?))
        .collect::<Result<Vec<f64>>>()?;
    Ok(softmax(&scores))
}

/// One simplex per retained snapshot.
pub fn cod_posterior_snapshots(
    samples: &PosteriorSamples,
    constraints: &[LatentConstraint],
    x: &DVector<f64>,
    n_mc: usize,
    rng: &mut ChainRng,
) -> Result<Vec<Vec<f64>>> {
    if samples.is_empty() {
        return invalid("no posterior samples");
    }
    samples
        .snapshots
        .iter()
        .map(|s| snapshot_posterior(s, constraints, x, n_mc, rng))
        .collect()
}

fn average_simplices(per_snapshot: &[Vec<f64>]) -> Vec<f64> {
    let c = per_snapshot[0].len();
    let mut avg = vec![0.0; c];
    for p in per_snapshot {
        for (a, v) in avg.iter_mut().zip(p) {
            *a += v;
        }
    }
    let total: f64 = avg.iter().sum();
    avg.iter().map(|a| a / total).collect()
}

/// Cause posterior for one decedent: the average of per-snapshot simplices.
pub fn cod_posterior(
    samples: &PosteriorSamples,
    constraints: &[LatentConstraint],
    x: &DVector<f64>,
    n_mc: usize,
    rng: &mut ChainRng,
) -> Result<Vec<f64>> {
    Ok(average_simplices(&cod_posterior_snapshots(samples, constraints, x, n_mc, rng)?))
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in p.iter().enumerate() {
        if *v > p[best] {
            best = i;
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CodPosterior {
    pub probabilities: Vec<Vec<f64>>,
    pub top_cause: Vec<usize>,
}

impl CodPosterior {
    pub fn from_probabilities(probabilities: Vec<Vec<f64>>) -> Self {
        let top_cause = probabilities.iter().map(|p| argmax(p)).collect();
        Self { probabilities, top_cause }
    }
}

/// Predictions for a whole dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub posterior: CodPosterior,
    /// `labels[s][i]`: cause of row `i` drawn from snapshot `s`'s simplex.
    pub labels: Vec<Vec<usize>>,
}

/// Predict every row of `data`. Row `i` uses its own random stream derived
/// from `seed`, so the result does not depend on thread scheduling.
pub fn predict_dataset(samples: &PosteriorSamples, data: &Dataset, n_mc: usize, seed: u64) -> Result<Prediction> {
    if samples.is_empty() {
        return invalid("no posterior samples");
    }
    let first = &samples.snapshots[0];
    if data.p() != first.p() || data.b() != first.n_covariates() {
        return Err(FarvaError::Schema(format!(
            "data has {} columns and {} covariates, model expects {} and {}",
            data.p(),
            data.b(),
            first.p(),
            first.n_covariates()
        )));
    }
    let rows: Vec<(Vec<f64>, Vec<usize>)> = (0..data.n())
        .into_par_iter()
        .map(|i| {
            let mut rng = ChainRng::stream(seed, i as u64);
            let constraints = data.row_constraints(i)?;
            let x = data.x.row(i).transpose();
            let per = cod_posterior_snapshots(samples, &constraints, &x, n_mc, &mut rng)?;
            let drawn = per
                .iter()
                .map(|p| {
                    let logs: Vec<f64> = p.iter().map(|v| v.ln()).collect();
                    sample_categorical_log(&logs, &mut rng)
                })
                .collect();
            Ok((average_simplices(&per), drawn))
        })
        .collect::<Result<_>>()?;
    let n_snap = samples.len();
    let mut labels = vec![Vec::with_capacity(rows.len()); n_snap];
    let mut probs = Vec::with_capacity(rows.len());
    for (p, drawn) in rows {
        for (s, c) in drawn.into_iter().enumerate() {
            labels[s].push(c);
        }
        probs.push(p);
    }
    Ok(Prediction {
        posterior: CodPosterior::from_probabilities(probs),
        labels,
    })
}

/// Sample quantile with linear interpolation between order statistics.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let h = (v.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsmfEstimate {
    pub mean: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

/// Per-snapshot cause fractions over the unlabelled set, summarized by the
/// mean and the 2.5% / 97.5% percentiles.
pub fn estimate_csmf(labels: &[Vec<usize>], n_causes: usize) -> Result<CsmfEstimate> {
    if labels.is_empty() {
        return invalid("no snapshots");
    }
    let n = labels[0].len();
    if n == 0 {
        return invalid("no decedents to summarize");
    }
    let mut fractions = vec![Vec::with_capacity(labels.len()); n_causes];
    for snap in labels {
        if snap.len() != n {
            return Err(FarvaError::DimensionMismatch("snapshots label different row sets".into()));
        }
        let mut counts = vec![0usize; n_causes];
        for &c in snap {
            if c >= n_causes {
                return invalid(format!("cause index {c} out of range"));
            }
            counts[c] += 1;
        }
        for (f, k) in fractions.iter_mut().zip(counts) {
            f.push(k as f64 / n as f64);
        }
    }
    let mean: Vec<f64> = fractions.iter().map(|f| f.iter().sum::<f64>() / f.len() as f64).collect();
    // interpolated percentiles can miss the mean by rounding when the spread is 0
    let lo = fractions.iter().zip(&mean).map(|(f, m)| quantile(f, 0.025).min(*m)).collect();
    let hi = fractions.iter().zip(&mean).map(|(f, m)| quantile(f, 0.975).max(*m)).collect();
    Ok(CsmfEstimate { mean, lo, hi })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentSummary {
    pub mean: DVector<f64>,
    pub mean_lo: DVector<f64>,
    pub mean_hi: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub cov_lo: DMatrix<f64>,
    pub cov_hi: DMatrix<f64>,
}

/// Posterior mean and 95% interval of E[z] and Cov(z) for cause `c` at `x`.
pub fn posterior_latent_summaries(samples: &PosteriorSamples, c: usize, x: &DVector<f64>) -> Result<LatentSummary> {
    if samples.is_empty() {
        return invalid("no posterior samples");
    }
    let moments = samples
        .snapshots
        .iter()
        .map(|s| s.marginal_moments(c, x))
        .collect::<Result<Vec<_>>>()?;
    let p = moments[0].0.len();
    let n = moments.len() as f64;
    let summarize = |vals: Vec<f64>| {
        let m = vals.iter().sum::<f64>() / n;
        (m, quantile(&vals, 0.025).min(m), quantile(&vals, 0.975).max(m))
    };
    let mut out = LatentSummary {
        mean: DVector::zeros(p),
        mean_lo: DVector::zeros(p),
        mean_hi: DVector::zeros(p),
        cov: DMatrix::zeros(p, p),
        cov_lo: DMatrix::zeros(p, p),
        cov_hi: DMatrix::zeros(p, p),
    };
    for j in 0..p {
        let (m, lo, hi) = summarize(moments.iter().map(|(mu, _)| mu[j]).collect());
        out.mean[j] = m;
        out.mean_lo[j] = lo;
        out.mean_hi[j] = hi;
        for k in 0..p {
            let (m, lo, hi) = summarize(moments.iter().map(|(_, cov)| cov[(j, k)]).collect());
            out.cov[(j, k)] = m;
            out.cov_lo[(j, k)] = lo;
            out.cov_hi[(j, k)] = hi;
        }
    }
    Ok(out)
}
