//! Parameter containers and the deterministic algebra of the factor model.
//!
//! For a decedent of cause `c` with covariates `x`:
//!
//! ```text
//! ξ_c(x)[l,k] = β_{c,lk}ᵀ x          (L × K basis)
//! ψ_c(x)[k]   = α_{c,k}ᵀ x           (factor mean)
//! Λ_c(x)      = Θ_c ξ_c(x)           (P × K loadings)
//! z | c, x    ~ N(Λ ψ, Λ Λᵀ + diag σ²)
//! ```

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, LatentConstraint};
use crate::error::{FarvaError, Result};
use crate::numerics::{
    cholesky_jitter, sample_dirichlet, sample_gamma, sample_inverse_wishart, sample_mvn,
    sample_truncated_normal, ChainRng, LN_2PI,
};

/// Fixed prior constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    /// Dirichlet concentration over causes (length C).
    pub dirichlet: Vec<f64>,
    /// Upper bound on the number of latent factors K.
    pub n_factors: usize,
    /// Upper bound on the basis size L.
    pub n_basis: usize,
    /// Local precision shape: φ ~ Ga(γ/2, γ/2).
    pub gamma: f64,
    /// δ₁ ~ Ga(d1, 1).
    pub d1: f64,
    /// δ_h ~ Ga(d2, 1) for h ≥ 2.
    pub d2: f64,
    pub mu0: DVector<f64>,
    pub lambda0: DMatrix<f64>,
    pub nu0: f64,
    pub s0: DMatrix<f64>,
    pub a0: DVector<f64>,
    pub l0: DMatrix<f64>,
    pub v0: f64,
    pub d0: DMatrix<f64>,
    /// Inverse-gamma shape for free residual variances.
    pub sigma_shape: f64,
    /// Inverse-gamma rate for free residual variances.
    pub sigma_rate: f64,
}

impl Hyperparameters {
    /// Weakly informative conjugate defaults for C causes, P columns, B covariates.
    pub fn defaults(n_causes: usize, p: usize, b: usize) -> Self {
        Self {
            dirichlet: vec![1.0 / n_causes as f64; n_causes],
            n_factors: p.min(15),
            n_basis: p.min(10),
            gamma: 3.0,
            d1: 2.0,
            d2: 3.0,
            mu0: DVector::zeros(b),
            lambda0: DMatrix::identity(b, b),
            nu0: b as f64 + 2.0,
            s0: DMatrix::identity(b, b),
            a0: DVector::zeros(b),
            l0: DMatrix::identity(b, b),
            v0: b as f64 + 2.0,
            d0: DMatrix::identity(b, b),
            sigma_shape: 1.0,
            sigma_rate: 1.0,
        }
    }

    pub fn with_dims(mut self, n_factors: usize, n_basis: usize) -> Self {
        self.n_factors = n_factors;
        self.n_basis = n_basis;
        self
    }

    pub fn validate(&self, n_causes: usize, b: usize) -> Result<()> {
        let bad = |m: String| Err(FarvaError::InvalidArgument(m));
        if self.dirichlet.len() != n_causes {
            return bad(format!("{} Dirichlet entries for {n_causes} causes", self.dirichlet.len()));
        }
        if self.dirichlet.iter().any(|a| !(*a > 0.0)) {
            return bad("Dirichlet concentrations must be positive".into());
        }
        if self.n_factors < 1 || self.n_basis < 1 {
            return bad("K and L must be at least 1".into());
        }
        if !(self.gamma > 0.0) || !(self.d1 > 0.0) {
            return bad("gamma and d1 must be positive".into());
        }
        if !(self.d2 > 1.0) {
            return bad(format!("d2 must exceed 1, got {}", self.d2));
        }
        if !(self.sigma_shape > 0.0) || !(self.sigma_rate > 0.0) {
            return bad("residual variance prior must have positive shape and rate".into());
        }
        for (name, v) in [("mu0", &self.mu0), ("a0", &self.a0)] {
            if v.len() != b {
                return bad(format!("{name} has length {}, expected {b}", v.len()));
            }
        }
        for (name, m) in [("lambda0", &self.lambda0), ("s0", &self.s0), ("l0", &self.l0), ("d0", &self.d0)] {
            if m.nrows() != b || m.ncols() != b {
                return bad(format!("{name} must be {b}x{b}"));
            }
            if nalgebra::Cholesky::new(m.clone()).is_none() {
                return Err(FarvaError::NotPositiveDefinite(name.into()));
            }
        }
        if !(self.nu0 > b as f64 - 1.0) || !(self.v0 > b as f64 - 1.0) {
            return bad("inverse-Wishart degrees of freedom must exceed B - 1".into());
        }
        Ok(())
    }
}

/// Every sampled quantity of one chain state.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelState {
    /// Per-cause P × L basis coefficients.
    pub theta: Vec<DMatrix<f64>>,
    /// Shared P × L mean of the Θ_c.
    pub delta: DMatrix<f64>,
    /// P × L local precisions.
    pub phi: DMatrix<f64>,
    /// Multiplicative gamma components (length L).
    pub delta_mg: DVector<f64>,
    /// Column precisions, τ_l = ∏_{h≤l} δ_h.
    pub tau: DVector<f64>,
    /// Per-cause (L·K) × B; row `l·K + k` holds β_{c,lk}.
    pub beta: Vec<DMatrix<f64>>,
    /// (L·K) × B hierarchical means.
    pub mu_beta: DMatrix<f64>,
    /// L·K covariance matrices, B × B.
    pub sigma_beta: Vec<DMatrix<f64>>,
    /// Per-cause K × B; row `k` holds α_{c,k}.
    pub alpha: Vec<DMatrix<f64>>,
    pub mu_alpha: DMatrix<f64>,
    pub sigma_alpha: Vec<DMatrix<f64>>,
    /// Residual variances (fixed at 1 for binary columns).
    pub sigma2: DVector<f64>,
    /// n × P latent symptoms.
    pub z: DMatrix<f64>,
    /// n × K latent factors.
    pub eta: DMatrix<f64>,
    /// Current cause of every row; imputed for unknown rows.
    pub labels: Vec<usize>,
    /// Cause probabilities.
    pub pi: DVector<f64>,
}

impl ModelState {
    pub fn n_causes(&self) -> usize {
        self.theta.len()
    }

    pub fn p(&self) -> usize {
        self.delta.nrows()
    }

    pub fn n_basis(&self) -> usize {
        self.delta.ncols()
    }

    pub fn n_factors(&self) -> usize {
        self.alpha[0].nrows()
    }

    pub fn n_covariates(&self) -> usize {
        self.mu_beta.ncols()
    }

    fn check_args(&self, c: usize, x: &DVector<f64>) -> Result<()> {
        if c >= self.n_causes() {
            return Err(FarvaError::InvalidArgument(format!(
                "cause {c} out of range for {} causes",
                self.n_causes()
            )));
        }
        if x.len() != self.n_covariates() {
            return Err(FarvaError::DimensionMismatch(format!(
                "covariate vector has length {}, model expects {}",
                x.len(),
                self.n_covariates()
            )));
        }
        Ok(())
    }

    /// ξ_c(x), an L × K matrix.
    pub fn compute_xi(&self, c: usize, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_args(c, x)?;
        Ok(self.xi_unchecked(c, x))
    }

    pub(crate) fn xi_unchecked(&self, c: usize, x: &DVector<f64>) -> DMatrix<f64> {
        let flat = &self.beta[c] * x;
        DMatrix::from_row_slice(self.n_basis(), self.n_factors(), flat.as_slice())
    }

    /// ψ_c(x), length K.
    pub fn compute_psi(&self, c: usize, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_args(c, x)?;
        Ok(&self.alpha[c] * x)
    }

    /// Λ_c(x) = Θ_c ξ_c(x), a P × K matrix.
    pub fn compute_loadings(&self, c: usize, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_args(c, x)?;
        Ok(&self.theta[c] * self.xi_unchecked(c, x))
    }

    /// Mean Λψ and covariance ΛΛᵀ + diag(σ²) of z given cause and covariates.
    pub fn marginal_moments(&self, c: usize, x: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let lambda = self.compute_loadings(c, x)?;
        let psi = &self.alpha[c] * x;
        let mean = &lambda * psi;
        let mut cov = &lambda * lambda.transpose();
        for j in 0..self.p() {
            cov[(j, j)] += self.sigma2[j];
        }
        Ok((mean, cov))
    }

    /// log N(z; Λψ, ΛΛᵀ + diag σ²), evaluated in O(P K²) through the
    /// matrix determinant lemma and Woodbury identity.
    pub fn marginal_logpdf(&self, c: usize, x: &DVector<f64>, z: &DVector<f64>) -> Result<f64> {
        self.check_args(c, x)?;
        let lambda = &self.theta[c] * self.xi_unchecked(c, x);
        let psi = &self.alpha[c] * x;
        factor_logpdf(z, &lambda, &psi, &self.sigma2)
    }

    /// Reset τ from δ exactly.
    pub fn recompute_tau(&mut self) {
        let mut acc = 1.0;
        for (t, d) in self.tau.iter_mut().zip(self.delta_mg.iter()) {
            acc *= d;
            *t = acc;
        }
    }

    /// Check state invariants against the data it was fit to.
    pub fn check_invariants(&self, data: &Dataset, constraints: &[LatentConstraint]) -> Result<()> {
        let fail = |m: String| Err(FarvaError::InvalidArgument(m));
        let mut acc = 1.0;
        for l in 0..self.n_basis() {
            acc *= self.delta_mg[l];
            if acc != self.tau[l] {
                return fail(format!("tau[{l}] = {} but product of deltas is {acc}", self.tau[l]));
            }
        }
        for (j, col) in data.columns.iter().enumerate() {
            if !col.kind.has_free_variance() && self.sigma2[j] != 1.0 {
                return fail(format!("sigma2[{j}] = {} on a binary column", self.sigma2[j]));
            }
        }
        let total: f64 = self.pi.iter().sum();
        if (total - 1.0).abs() > 1e-9 || self.pi.iter().any(|p| *p < 0.0) {
            return fail("pi is not on the simplex".into());
        }
        let p = self.p();
        for (idx, c) in constraints.iter().enumerate() {
            let z = self.z[(idx / p, idx % p)];
            if !c.contains(z) {
                return fail(format!("z[{}, {}] = {z} violates {c:?}", idx / p, idx % p));
            }
        }
        for (i, known) in data.labels.iter().enumerate() {
            if let Some(c) = known {
                if self.labels[i] != *c {
                    return fail(format!("known label of row {i} was changed"));
                }
            }
        }
        Ok(())
    }
}

/// Low-rank-plus-diagonal Gaussian log density.
pub fn factor_logpdf(
    z: &DVector<f64>,
    lambda: &DMatrix<f64>,
    psi: &DVector<f64>,
    sigma2: &DVector<f64>,
) -> Result<f64> {
    let p = z.len();
    let k = lambda.ncols();
    let r = z - lambda * psi;
    let inv_d = sigma2.map(|s| 1.0 / s);
    let scaled = DMatrix::from_fn(p, k, |j, kk| lambda[(j, kk)] * inv_d[j]);
    let mut m = lambda.transpose() * &scaled;
    for kk in 0..k {
        m[(kk, kk)] += 1.0;
    }
    let u = scaled.transpose() * &r;
    let chol = cholesky_jitter(&m)?;
    let log_det_m: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let log_det_d: f64 = sigma2.iter().map(|s| s.ln()).sum();
    let quad = r.iter().zip(inv_d.iter()).map(|(ri, di)| ri * ri * di).sum::<f64>() - u.dot(&chol.solve(&u));
    Ok(-0.5 * (p as f64 * LN_2PI + log_det_d + log_det_m + quad))
}

/// Draw a full state from the priors, with latents consistent with the data.
pub fn init_state(hyper: &Hyperparameters, data: &Dataset, rng: &mut ChainRng) -> Result<ModelState> {
    let c_n = data.n_causes;
    let p = data.p();
    let b = data.b();
    hyper.validate(c_n, b)?;
    let k_n = hyper.n_factors;
    let l_n = hyper.n_basis;

    let mut delta_mg = DVector::zeros(l_n);
    for h in 0..l_n {
        let shape = if h == 0 { hyper.d1 } else { hyper.d2 };
        delta_mg[h] = sample_gamma(shape, 1.0, rng)?;
    }
    let mut phi = DMatrix::zeros(p, l_n);
    for v in phi.iter_mut() {
        *v = sample_gamma(hyper.gamma / 2.0, hyper.gamma / 2.0, rng)?;
    }
    let mut state_tau = DVector::zeros(l_n);
    let mut acc = 1.0;
    for h in 0..l_n {
        acc *= delta_mg[h];
        state_tau[h] = acc;
    }
    let sd = |j: usize, l: usize| 1.0 / (phi[(j, l)] * state_tau[l]).sqrt();
    let mut delta = DMatrix::zeros(p, l_n);
    for l in 0..l_n {
        for j in 0..p {
            delta[(j, l)] = rng.normal(0.0, sd(j, l));
        }
    }
    let mut theta = Vec::with_capacity(c_n);
    for _ in 0..c_n {
        let mut t = DMatrix::zeros(p, l_n);
        for l in 0..l_n {
            for j in 0..p {
                t[(j, l)] = rng.normal(delta[(j, l)], sd(j, l));
            }
        }
        theta.push(t);
    }

    let (mu_beta, sigma_beta, beta) =
        draw_regression_hierarchy(l_n * k_n, c_n, &hyper.mu0, &hyper.lambda0, hyper.nu0, &hyper.s0, rng)?;
    let (mu_alpha, sigma_alpha, alpha) =
        draw_regression_hierarchy(k_n, c_n, &hyper.a0, &hyper.l0, hyper.v0, &hyper.d0, rng)?;

    let mut sigma2 = DVector::from_element(p, 1.0);
    for (j, col) in data.columns.iter().enumerate() {
        if col.kind.has_free_variance() {
            let prec = sample_gamma(hyper.sigma_shape, hyper.sigma_rate, rng)?;
            sigma2[j] = (1.0 / prec).max(1e-12);
        }
    }

    let pi = DVector::from_vec(sample_dirichlet(&hyper.dirichlet, rng)?);
    let labels: Vec<usize> = data
        .labels
        .iter()
        .map(|l| match l {
            Some(c) => *c,
            None => ((rng.uniform() * c_n as f64) as usize).min(c_n - 1),
        })
        .collect();

    let mut state = ModelState {
        theta,
        delta,
        phi,
        delta_mg,
        tau: state_tau,
        beta,
        mu_beta,
        sigma_beta,
        alpha,
        mu_alpha,
        sigma_alpha,
        sigma2,
        z: DMatrix::zeros(data.n(), p),
        eta: DMatrix::zeros(data.n(), k_n),
        labels,
        pi,
    };

    let constraints = data.constraints()?;
    for i in 0..data.n() {
        let c = state.labels[i];
        let x = data.x.row(i).transpose();
        let lambda = &state.theta[c] * state.xi_unchecked(c, &x);
        let psi = &state.alpha[c] * &x;
        let eta = DVector::from_fn(k_n, |k, _| psi[k] + rng.standard_normal());
        let mean = &lambda * &eta;
        for j in 0..p {
            state.z[(i, j)] = draw_latent_cell(&constraints[i * p + j], mean[j], state.sigma2[j].sqrt(), rng)?;
        }
        state.eta.set_row(i, &eta.transpose());
    }
    Ok(state)
}

/// z_ij ~ N(mean, sd²) restricted to its constraint.
pub(crate) fn draw_latent_cell(c: &LatentConstraint, mean: f64, sd: f64, rng: &mut ChainRng) -> Result<f64> {
    Ok(match *c {
        LatentConstraint::Point(v) => v,
        LatentConstraint::Free => rng.normal(mean, sd),
        LatentConstraint::Interval { lo, hi, .. } => c.nudge(sample_truncated_normal(mean, sd, lo, hi, rng)?),
    })
}

type Hierarchy = (DMatrix<f64>, Vec<DMatrix<f64>>, Vec<DMatrix<f64>>);

/// Prior draw of `blocks` regression vectors per cause sharing a
/// N(mean, Σ) population with mean ~ N(m0, V0) and Σ ~ IW(df, S).
fn draw_regression_hierarchy(
    blocks: usize,
    n_causes: usize,
    m0: &DVector<f64>,
    v0: &DMatrix<f64>,
    df: f64,
    scale: &DMatrix<f64>,
    rng: &mut ChainRng,
) -> Result<Hierarchy> {
    let b = m0.len();
    let mut mu = DMatrix::zeros(blocks, b);
    let mut sigmas = Vec::with_capacity(blocks);
    for r in 0..blocks {
        let m = sample_mvn(m0, v0, rng)?;
        mu.set_row(r, &m.transpose());
        sigmas.push(sample_inverse_wishart(df, scale, rng)?);
    }
    let mut coefs = Vec::with_capacity(n_causes);
    for _ in 0..n_causes {
        let mut mat = DMatrix::zeros(blocks, b);
        for r in 0..blocks {
            let draw = sample_mvn(&mu.row(r).transpose(), &sigmas[r], rng)?;
            mat.set_row(r, &draw.transpose());
        }
        coefs.push(mat);
    }
    Ok((mu, sigmas, coefs))
}

/// Chain bookkeeping stored with retained snapshots.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainMeta {
    pub iterations: usize,
    pub burn_in: usize,
    pub thinning: usize,
    pub seed: u64,
}

impl ChainMeta {
    /// Number of snapshots a chain with these settings keeps.
    pub fn expected_retained(&self) -> usize {
        (self.iterations - self.burn_in) / self.thinning
    }
}

/// Thinned post-burn-in states of one chain.
#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorSamples {
    pub snapshots: Vec<ModelState>,
    pub meta: ChainMeta,
}

impl PosteriorSamples {
    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }
}
