//! Gibbs sampler over the full model.
//!
//! One sweep visits the blocks in a fixed order:
//!
//! 1. `z_ij`: N(Λ_i η_i, σ_j²) truncated to the cell's constraint
//! 2. `η_i`: K-variate normal, prior N(ψ_c(x_i), I)
//! 3. rows of `Θ_c`: L-variate normal regression on w_i = ξ_c(x_i) η_i
//! 4. `Δ`: normal, pooling the C coefficient matrices
//! 5. `φ_jl`: gamma
//! 6. `δ_h`: gamma, τ recomputed after each component
//! 7. `β_{c,lk}`: B-variate normal with partial residuals
//! 8. `μ_β`, `Σ_β`: normal / inverse-Wishart
//! 9. `α_{c,k}`, `μ_α`, `Σ_α`: as 7–8 on the factor regression
//! 10. `σ_j²`: inverse-gamma, free columns only
//! 11. unknown labels jointly with their `η_i`
//! 12. `π`: Dirichlet with raw label counts

use log::{debug, info};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, LatentConstraint};
use crate::error::{FarvaError, Result};
use crate::model::{
    draw_latent_cell, init_state, ChainMeta, Hyperparameters, ModelState, PosteriorSamples,
};
use crate::numerics::{
    cholesky_jitter, sample_categorical_log, sample_dirichlet, sample_gamma, sample_inverse_wishart,
    sample_mvn_precision, ChainRng,
};

/// Floor applied to sampled precisions and variances.
const FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thinning: usize,
    pub seed: u64,
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.thinning == 0 {
            return Err(FarvaError::InvalidArgument(
                "iterations and thinning must be positive".into(),
            ));
        }
        if self.burn_in >= self.iterations {
            return Err(FarvaError::InvalidArgument(format!(
                "burn-in {} must be below iterations {}",
                self.burn_in, self.iterations
            )));
        }
        Ok(())
    }

    pub fn meta(&self) -> ChainMeta {
        ChainMeta {
            iterations: self.iterations,
            burn_in: self.burn_in,
            thinning: self.thinning,
            seed: self.seed,
        }
    }
}

/// Dataset plus quantities the sweep reuses.
pub struct ChainData<'a> {
    pub data: &'a Dataset,
    pub constraints: Vec<LatentConstraint>,
    pub free_variance: Vec<bool>,
    xs: Vec<DVector<f64>>,
    unknown: Vec<usize>,
}

impl<'a> ChainData<'a> {
    pub fn new(data: &'a Dataset) -> Result<Self> {
        data.validate()?;
        Ok(Self {
            constraints: data.constraints()?,
            free_variance: data.columns.iter().map(|c| c.kind.has_free_variance()).collect(),
            xs: (0..data.n()).map(|i| data.x.row(i).transpose()).collect(),
            unknown: (0..data.n()).filter(|&i| data.labels[i].is_none()).collect(),
            data,
        })
    }

    fn n(&self) -> usize {
        self.data.n()
    }

    fn p(&self) -> usize {
        self.data.p()
    }
}

/// Per-row basis matrices ξ_{c[i]}(x_i) for the current labels and β.
pub(crate) struct Workspace {
    xi: Vec<DMatrix<f64>>,
}

impl Workspace {
    pub(crate) fn refresh(state: &ModelState, cd: &ChainData) -> Self {
        Self {
            xi: (0..cd.n())
                .map(|i| state.xi_unchecked(state.labels[i], &cd.xs[i]))
                .collect(),
        }
    }

    fn loadings(&self, state: &ModelState, i: usize) -> DMatrix<f64> {
        &state.theta[state.labels[i]] * &self.xi[i]
    }
}

fn rows_by_cause(state: &ModelState) -> Vec<Vec<usize>> {
    let mut rows = vec![Vec::new(); state.n_causes()];
    for (i, c) in state.labels.iter().enumerate() {
        rows[*c].push(i);
    }
    rows
}

fn spd_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let inv = cholesky_jitter(m)?.inverse();
    Ok((&inv + inv.transpose()) * 0.5)
}

/// One full systematic-scan sweep.
pub fn gibbs_sweep(
    state: &mut ModelState,
    cd: &ChainData,
    hyper: &Hyperparameters,
    rng: &mut ChainRng,
) -> Result<()> {
    let ws = Workspace::refresh(state, cd);
    update_latent(state, cd, &ws, rng)?;
    update_factors(state, cd, &ws, rng)?;
    update_theta(state, &ws, rng)?;
    update_delta(state, rng);
    update_phi(state, hyper, rng)?;
    update_mgp(state, hyper, rng)?;
    update_beta(state, cd, &ws, rng)?;
    update_beta_hierarchy(state, hyper, rng)?;
    update_alpha(state, cd, rng)?;
    update_alpha_hierarchy(state, hyper, rng)?;
    let ws = Workspace::refresh(state, cd);
    update_sigma2(state, cd, &ws, hyper, rng)?;
    update_unknown_cod(state, cd, rng)?;
    update_pi(state, hyper, rng)?;
    Ok(())
}

/// Step 1: truncated-normal latent symptoms.
pub(crate) fn update_latent(state: &mut ModelState, cd: &ChainData, ws: &Workspace, rng: &mut ChainRng) -> Result<()> {
    let p = cd.p();
    let sd: Vec<f64> = state.sigma2.iter().map(|s| s.sqrt()).collect();
    for i in 0..cd.n() {
        let lambda = ws.loadings(state, i);
        let eta = state.eta.row(i).transpose();
        let mean = lambda * eta;
        for j in 0..p {
            state.z[(i, j)] = draw_latent_cell(&cd.constraints[i * p + j], mean[j], sd[j], rng)?;
        }
    }
    Ok(())
}

/// η_i | z_i, Λ_i, ψ_i ~ N(Q⁻¹(ψ + ΛᵀD⁻¹z), Q⁻¹), Q = I + ΛᵀD⁻¹Λ.
fn draw_factor_row(
    lambda: &DMatrix<f64>,
    psi: &DVector<f64>,
    z: &DVector<f64>,
    sigma2: &DVector<f64>,
    rng: &mut ChainRng,
) -> Result<DVector<f64>> {
    let (p, k) = lambda.shape();
    let scaled = DMatrix::from_fn(p, k, |j, kk| lambda[(j, kk)] / sigma2[j]);
    let mut q = lambda.transpose() * &scaled;
    for kk in 0..k {
        q[(kk, kk)] += 1.0;
    }
    let lin = psi + scaled.transpose() * z;
    sample_mvn_precision(&lin, &q, rng)
}

/// Step 2.
pub(crate) fn update_factors(state: &mut ModelState, cd: &ChainData, ws: &Workspace, rng: &mut ChainRng) -> Result<()> {
    for i in 0..cd.n() {
        let c = state.labels[i];
        let lambda = ws.loadings(state, i);
        let psi = &state.alpha[c] * &cd.xs[i];
        let z = state.z.row(i).transpose();
        let eta = draw_factor_row(&lambda, &psi, &z, &state.sigma2, rng)?;
        state.eta.set_row(i, &eta.transpose());
    }
    Ok(())
}

/// Step 3: each row of Θ_c regresses z_{·j} on w_i = ξ_i η_i.
pub(crate) fn update_theta(state: &mut ModelState, ws: &Workspace, rng: &mut ChainRng) -> Result<()> {
    let l_n = state.n_basis();
    let p = state.p();
    let groups = rows_by_cause(state);
    for (c, rows) in groups.iter().enumerate() {
        let mut w = DMatrix::zeros(rows.len(), l_n);
        for (r, &i) in rows.iter().enumerate() {
            let wi = &ws.xi[i] * state.eta.row(i).transpose();
            w.set_row(r, &wi.transpose());
        }
        let wtw = w.transpose() * &w;
        let zc = state.z.select_rows(rows);
        let wtz = w.transpose() * &zc; // L × P
        for j in 0..p {
            let inv_s = 1.0 / state.sigma2[j];
            let mut q = &wtw * inv_s;
            let mut lin = wtz.column(j) * inv_s;
            for l in 0..l_n {
                let prior_prec = state.phi[(j, l)] * state.tau[l];
                q[(l, l)] += prior_prec;
                lin[l] += prior_prec * state.delta[(j, l)];
            }
            let row = sample_mvn_precision(&lin, &q, rng)?;
            state.theta[c].set_row(j, &row.transpose());
        }
    }
    Ok(())
}

/// Step 4: Δ_jl | Θ ~ N(ΣΘ_c,jl / (C+1), 1 / ((C+1) φ_jl τ_l)).
pub(crate) fn update_delta(state: &mut ModelState, rng: &mut ChainRng) {
    let c_n = state.n_causes() as f64;
    for l in 0..state.n_basis() {
        for j in 0..state.p() {
            let prec = (c_n + 1.0) * state.phi[(j, l)] * state.tau[l];
            let sum: f64 = state.theta.iter().map(|t| t[(j, l)]).sum();
            state.delta[(j, l)] = rng.normal(sum / (c_n + 1.0), 1.0 / prec.sqrt());
        }
    }
}

/// Δ_jl² + Σ_c (Θ_c,jl − Δ_jl)²: the sum of squares every precision update sees.
fn shrinkage_ss(state: &ModelState, j: usize, l: usize) -> f64 {
    let d = state.delta[(j, l)];
    d * d + state.theta.iter().map(|t| (t[(j, l)] - d).powi(2)).sum::<f64>()
}

/// Step 5.
pub(crate) fn update_phi(state: &mut ModelState, hyper: &Hyperparameters, rng: &mut ChainRng) -> Result<()> {
    let terms = state.n_causes() as f64 + 1.0;
    for l in 0..state.n_basis() {
        for j in 0..state.p() {
            let shape = 0.5 * (hyper.gamma + terms);
            let rate = 0.5 * (hyper.gamma + state.tau[l] * shrinkage_ss(state, j, l));
            state.phi[(j, l)] = sample_gamma(shape, rate, rng)?.max(FLOOR);
        }
    }
    Ok(())
}

/// Step 6: multiplicative gamma components.
pub(crate) fn update_mgp(state: &mut ModelState, hyper: &Hyperparameters, rng: &mut ChainRng) -> Result<()> {
    for h in 0..state.n_basis() {
        update_mgp_component(state, hyper, h, rng)?;
    }
    Ok(())
}

/// δ_h given everything else, with τ recomputed afterwards.
pub(crate) fn update_mgp_component(
    state: &mut ModelState,
    hyper: &Hyperparameters,
    h: usize,
    rng: &mut ChainRng,
) -> Result<()> {
    let l_n = state.n_basis();
    let p = state.p();
    let terms = state.n_causes() as f64 + 1.0;
    let mut rate_sum = 0.0;
    for l in h..l_n {
        // τ_l without δ_h
        let tau_minus: f64 = (0..=l).filter(|&m| m != h).map(|m| state.delta_mg[m]).product();
        let col: f64 = (0..p).map(|j| state.phi[(j, l)] * shrinkage_ss(state, j, l)).sum();
        rate_sum += tau_minus * col;
    }
    let prior_shape = if h == 0 { hyper.d1 } else { hyper.d2 };
    let shape = prior_shape + 0.5 * terms * (p * (l_n - h)) as f64;
    let rate = 1.0 + 0.5 * rate_sum;
    state.delta_mg[h] = sample_gamma(shape, rate, rng)?.max(FLOOR);
    state.recompute_tau();
    Ok(())
}

/// Residuals z_i − Λ_i η_i for the rows of one cause.
fn cause_residuals(state: &ModelState, ws: &Workspace, c: usize, rows: &[usize]) -> DMatrix<f64> {
    let p = state.p();
    let mut resid = DMatrix::zeros(rows.len(), p);
    for (r, &i) in rows.iter().enumerate() {
        let fit = &state.theta[c] * (&ws.xi[i] * state.eta.row(i).transpose());
        for j in 0..p {
            resid[(r, j)] = state.z[(i, j)] - fit[j];
        }
    }
    resid
}

/// Draw β_{c,lk} (row `l·K + k` of β_c) given the rest and shift the
/// residuals of the cause's rows to match.
fn draw_beta_block(
    state: &mut ModelState,
    cd: &ChainData,
    c: usize,
    l: usize,
    k: usize,
    rows: &[usize],
    resid: &mut DMatrix<f64>,
    prior_prec: &DMatrix<f64>,
    rng: &mut ChainRng,
) -> Result<()> {
    let p = state.p();
    let block = l * state.n_factors() + k;
    let g: Vec<f64> = state.theta[c].column(l).iter().cloned().collect();
    let gs: Vec<f64> = g.iter().zip(state.sigma2.iter()).map(|(a, s)| a / s).collect();
    let gg: f64 = g.iter().zip(&gs).map(|(a, b)| a * b).sum();
    let old = state.beta[c].row(block).transpose();
    let mut q = prior_prec.clone();
    let mut lin = prior_prec * state.mu_beta.row(block).transpose();
    let mut current = Vec::with_capacity(rows.len());
    for (r, &i) in rows.iter().enumerate() {
        let x = &cd.xs[i];
        let e = state.eta[(i, k)];
        let u = e * x.dot(&old);
        let h: f64 = (0..p).map(|j| gs[j] * resid[(r, j)]).sum::<f64>() + u * gg;
        q.ger(gg * e * e, x, x, 1.0);
        lin.axpy(e * h, x, 1.0);
        current.push(u);
    }
    let new = sample_mvn_precision(&lin, &q, rng)?;
    for (r, &i) in rows.iter().enumerate() {
        let shift = state.eta[(i, k)] * cd.xs[i].dot(&new) - current[r];
        for j in 0..p {
            resid[(r, j)] -= g[j] * shift;
        }
    }
    state.beta[c].set_row(block, &new.transpose());
    Ok(())
}

/// Step 7: β_{c,lk} one block at a time against partial residuals.
/// Returns the final residual matrices, one per cause.
pub(crate) fn update_beta(
    state: &mut ModelState,
    cd: &ChainData,
    ws: &Workspace,
    rng: &mut ChainRng,
) -> Result<Vec<DMatrix<f64>>> {
    let (k_n, l_n) = (state.n_factors(), state.n_basis());
    let prior_prec: Vec<DMatrix<f64>> = state.sigma_beta.iter().map(spd_inverse).collect::<Result<_>>()?;
    let groups = rows_by_cause(state);
    let mut out = Vec::with_capacity(groups.len());
    for (c, rows) in groups.iter().enumerate() {
        let mut resid = cause_residuals(state, ws, c, rows);
        for l in 0..l_n {
            for k in 0..k_n {
                draw_beta_block(state, cd, c, l, k, rows, &mut resid, &prior_prec[l * k_n + k], rng)?;
            }
        }
        out.push(resid);
    }
    Ok(out)
}

/// μ | Σ, coefs ~ N, then Σ | μ, coefs ~ IW, for one coefficient block shared by C causes.
fn update_block_hierarchy(
    coefs: &[DVector<f64>],
    mu: &mut DVector<f64>,
    sigma: &mut DMatrix<f64>,
    m0: &DVector<f64>,
    v0_inv: &DMatrix<f64>,
    df: f64,
    scale: &DMatrix<f64>,
    rng: &mut ChainRng,
) -> Result<()> {
    let c_n = coefs.len() as f64;
    let sigma_inv = spd_inverse(sigma)?;
    let sum = coefs.iter().fold(DVector::zeros(m0.len()), |acc, v| acc + v);
    let q = v0_inv + &sigma_inv * c_n;
    let lin = v0_inv * m0 + &sigma_inv * sum;
    *mu = sample_mvn_precision(&lin, &q, rng)?;
    let mut post_scale = scale.clone();
    for v in coefs {
        let d = v - &*mu;
        post_scale.ger(1.0, &d, &d, 1.0);
    }
    *sigma = sample_inverse_wishart(df + c_n, &post_scale, rng)?;
    Ok(())
}

/// Step 8.
pub(crate) fn update_beta_hierarchy(state: &mut ModelState, hyper: &Hyperparameters, rng: &mut ChainRng) -> Result<()> {
    let v0_inv = spd_inverse(&hyper.lambda0)?;
    for block in 0..state.mu_beta.nrows() {
        let coefs: Vec<DVector<f64>> = state.beta.iter().map(|bm| bm.row(block).transpose()).collect();
        let mut mu = state.mu_beta.row(block).transpose();
        update_block_hierarchy(
            &coefs,
            &mut mu,
            &mut state.sigma_beta[block],
            &hyper.mu0,
            &v0_inv,
            hyper.nu0,
            &hyper.s0,
            rng,
        )?;
        state.mu_beta.set_row(block, &mu.transpose());
    }
    Ok(())
}

/// Step 9a: η_ik = α_{c,k}ᵀ x_i + N(0, 1).
pub(crate) fn update_alpha(state: &mut ModelState, cd: &ChainData, rng: &mut ChainRng) -> Result<()> {
    let groups = rows_by_cause(state);
    let b = state.n_covariates();
    for (c, rows) in groups.iter().enumerate() {
        let mut xtx = DMatrix::zeros(b, b);
        for &i in rows {
            xtx.ger(1.0, &cd.xs[i], &cd.xs[i], 1.0);
        }
        for k in 0..state.n_factors() {
            let prior_prec = spd_inverse(&state.sigma_alpha[k])?;
            let q = &prior_prec + &xtx;
            let mut lin = &prior_prec * state.mu_alpha.row(k).transpose();
            for &i in rows {
                lin.axpy(state.eta[(i, k)], &cd.xs[i], 1.0);
            }
            let draw = sample_mvn_precision(&lin, &q, rng)?;
            state.alpha[c].set_row(k, &draw.transpose());
        }
    }
    Ok(())
}

/// Step 9b.
pub(crate) fn update_alpha_hierarchy(state: &mut ModelState, hyper: &Hyperparameters, rng: &mut ChainRng) -> Result<()> {
    let v0_inv = spd_inverse(&hyper.l0)?;
    for k in 0..state.n_factors() {
        let coefs: Vec<DVector<f64>> = state.alpha.iter().map(|a| a.row(k).transpose()).collect();
        let mut mu = state.mu_alpha.row(k).transpose();
        update_block_hierarchy(
            &coefs,
            &mut mu,
            &mut state.sigma_alpha[k],
            &hyper.a0,
            &v0_inv,
            hyper.v0,
            &hyper.d0,
            rng,
        )?;
        state.mu_alpha.set_row(k, &mu.transpose());
    }
    Ok(())
}

/// Step 10: σ_j² for non-binary columns.
pub(crate) fn update_sigma2(
    state: &mut ModelState,
    cd: &ChainData,
    ws: &Workspace,
    hyper: &Hyperparameters,
    rng: &mut ChainRng,
) -> Result<()> {
    let p = cd.p();
    if !cd.free_variance.iter().any(|f| *f) {
        return Ok(());
    }
    let mut ss = vec![0.0; p];
    for i in 0..cd.n() {
        let fit = ws.loadings(state, i) * state.eta.row(i).transpose();
        for j in 0..p {
            ss[j] += (state.z[(i, j)] - fit[j]).powi(2);
        }
    }
    for j in 0..p {
        if cd.free_variance[j] {
            let shape = hyper.sigma_shape + 0.5 * cd.n() as f64;
            let rate = hyper.sigma_rate + 0.5 * ss[j];
            let prec = sample_gamma(shape, rate, rng)?;
            state.sigma2[j] = (1.0 / prec).max(FLOOR);
        } else {
            state.sigma2[j] = 1.0;
        }
    }
    Ok(())
}

/// Log scores ln π_c + ln N(z; Λ_c ψ_c, Λ_c Λ_cᵀ + Σ₀) for one row.
pub fn label_scores(state: &ModelState, x: &DVector<f64>, z: &DVector<f64>) -> Result<Vec<f64>> {
    (0..state.n_causes())
        .map(|c| Ok(state.pi[c].ln() + state.marginal_logpdf(c, x, z)?))
        .collect()
}

/// Step 11: for every unknown-cause row draw y from its latent-conditional
/// posterior, then η_i given the new label (a joint block update of (y, η)).
pub fn update_unknown_cod(state: &mut ModelState, cd: &ChainData, rng: &mut ChainRng) -> Result<()> {
    for &i in &cd.unknown {
        let x = &cd.xs[i];
        let z = state.z.row(i).transpose();
        let scores = label_scores(state, x, &z)?;
        let c = sample_categorical_log(&scores, rng);
        state.labels[i] = c;
        let lambda = &state.theta[c] * state.xi_unchecked(c, x);
        let psi = &state.alpha[c] * x;
        let eta = draw_factor_row(&lambda, &psi, &z, &state.sigma2, rng)?;
        state.eta.set_row(i, &eta.transpose());
    }
    Ok(())
}

/// Step 12: π ~ Dirichlet(a_c + n_c).
pub(crate) fn update_pi(state: &mut ModelState, hyper: &Hyperparameters, rng: &mut ChainRng) -> Result<()> {
    let mut conc = hyper.dirichlet.clone();
    for &c in &state.labels {
        conc[c] += 1.0;
    }
    state.pi = DVector::from_vec(sample_dirichlet(&conc, rng)?);
    Ok(())
}

/// Initialize from the prior and run the chain, keeping every `thinning`-th
/// post-burn-in state.
pub fn run_chain(data: &Dataset, hyper: &Hyperparameters, config: &ChainConfig) -> Result<PosteriorSamples> {
    config.validate()?;
    let cd = ChainData::new(data)?;
    let mut rng = ChainRng::new(config.seed);
    let mut state = init_state(hyper, data, &mut rng)?;
    let mut snapshots = Vec::with_capacity(config.meta().expected_retained());
    let report_every = (config.iterations / 10).max(1);
    for it in 1..=config.iterations {
        gibbs_sweep(&mut state, &cd, hyper, &mut rng).map_err(|e| FarvaError::Sweep {
            iteration: it,
            source: Box::new(e),
        })?;
        if it > config.burn_in && (it - config.burn_in) % config.thinning == 0 {
            snapshots.push(state.clone());
        }
        if it % report_every == 0 {
            let norms = column_norms(&state.delta);
            info!(
                "iteration {it}/{}: pi = {:.3?}, |Delta| columns = {:.3?}",
                config.iterations,
                state.pi.as_slice(),
                norms
            );
        } else {
            debug!("iteration {it}");
        }
    }
    Ok(PosteriorSamples {
        snapshots,
        meta: config.meta(),
    })
}

fn column_norms(m: &DMatrix<f64>) -> Vec<f64> {
    m.column_iter().map(|c| c.norm()).collect()
}

/// Posterior mean of the Euclidean norm of each column of Δ.
///
/// Trailing columns near zero mean the basis bound L is large enough; trailing
/// columns that stay large call for a bigger L.
pub fn shrinkage_diagnostic(samples: &PosteriorSamples) -> Result<Vec<f64>> {
    let first = samples
        .snapshots
        .first()
        .ok_or_else(|| FarvaError::InvalidArgument("no posterior samples".into()))?;
    let mut acc = vec![0.0; first.n_basis()];
    for s in &samples.snapshots {
        for (a, n) in acc.iter_mut().zip(column_norms(&s.delta)) {
            *a += n;
        }
    }
    let n = samples.len() as f64;
    Ok(acc.into_iter().map(|a| a / n).collect())
}

/// Posterior mean contribution of each factor to ΛΛᵀ at covariates `x`
/// (squared column norms of Λ_c(x), averaged over causes and samples).
/// Trailing factors near zero mean K is large enough.
pub fn factor_diagnostic(samples: &PosteriorSamples, x: &DVector<f64>) -> Result<Vec<f64>> {
    let first = samples
        .snapshots
        .first()
        .ok_or_else(|| FarvaError::InvalidArgument("no posterior samples".into()))?;
    let mut acc = vec![0.0; first.n_factors()];
    let mut count = 0.0;
    for s in &samples.snapshots {
        for c in 0..s.n_causes() {
            let lambda = s.compute_loadings(c, x)?;
            for (a, col) in acc.iter_mut().zip(lambda.column_iter()) {
                *a += col.norm_squared();
            }
            count += 1.0;
        }
    }
    Ok(acc.into_iter().map(|a| a / count).collect())
}
