//! Random variate generation and density evaluation.
//!
//! Every sampler takes an explicit [`ChainRng`], so identical seeds give
//! bitwise-identical output.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{ChiSquared, Distribution, Gamma, StandardNormal};
use statrs::function::erf::{erfc, erfc_inv};

use crate::error::{invalid, FarvaError, Result};

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;
const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// Jitter ladder tried, in order, when a factorization fails.
const JITTER_RAMP: [f64; 6] = [0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6];

/// Seedable generator. Streams with distinct ids under the same seed are
/// independent.
#[derive(Clone, Debug)]
pub struct ChainRng {
    seed: u64,
    inner: ChaCha20Rng,
}

impl ChainRng {
    pub fn new(seed: u64) -> Self {
        Self::stream(seed, 0)
    }

    pub fn stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha20Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { seed, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent child stream; advances `self` by one word.
    pub fn split(&mut self) -> Self {
        let child_seed = self.inner.next_u64();
        Self::new(child_seed)
    }

    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    pub fn normal(&mut self, mean: f64, sd: f64) -> f64 {
        mean + sd * self.standard_normal()
    }
}

impl RngCore for ChainRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Deterministic seed derivation (splitmix64 finalizer over seed and index).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

// ---------------------------------------------------------------------------
// Univariate normal helpers
// ---------------------------------------------------------------------------

pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

pub fn norm_logpdf(x: f64) -> f64 {
    -0.5 * (LN_2PI + x * x)
}

/// log Φ(x), accurate far into the lower tail.
pub fn log_norm_cdf(x: f64) -> f64 {
    if x == f64::INFINITY {
        0.0
    } else if x == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else if x > 0.0 {
        (-norm_cdf(-x)).ln_1p()
    } else if x > -35.0 {
        norm_cdf(x).ln()
    } else {
        // asymptotic Mills-ratio series
        let x2 = x * x;
        let series = 1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2);
        -0.5 * x2 - (-x).ln() - 0.5 * LN_2PI + series.ln()
    }
}

/// log(Φ(b) − Φ(a)) for a < b.
pub fn log_norm_cdf_diff(a: f64, b: f64) -> f64 {
    if a >= b {
        return f64::NEG_INFINITY;
    }
    // keep both arguments on the accurate (lower) side
    let (a, b) = if a + b > 0.0 { (-b, -a) } else { (a, b) };
    let lb = log_norm_cdf(b);
    let la = log_norm_cdf(a);
    if la == f64::NEG_INFINITY {
        return lb;
    }
    lb + (-(la - lb).exp()).ln_1p()
}

/// Φ⁻¹(p), given p in log space; valid for arbitrarily small p.
pub fn norm_quantile_from_log(log_p: f64) -> f64 {
    if log_p >= 0.0 {
        return f64::INFINITY;
    }
    if log_p == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if log_p > -690.0 {
        let p = log_p.exp();
        if p > 0.5 {
            // upper half: use the complement for precision
            let q = -log_p.exp_m1();
            return SQRT_2 * erfc_inv(2.0 * q);
        }
        return -SQRT_2 * erfc_inv(2.0 * p);
    }
    // Newton iterations on log Φ from the asymptotic guess
    let t = -2.0 * log_p;
    let mut x = -(t - t.ln() - LN_2PI).sqrt();
    for _ in 0..8 {
        let step = (log_norm_cdf(x) - log_p) * (log_norm_cdf(x) - norm_logpdf(x)).exp();
        x -= step;
        if step.abs() < 1e-14 * x.abs() {
            break;
        }
    }
    x
}

// ---------------------------------------------------------------------------
// Samplers
// ---------------------------------------------------------------------------

/// Draw from N(mu, sigma²) truncated to the interval [lo, hi]; infinite bounds
/// allowed. Uses inverse-CDF sampling in log space so extreme truncation
/// never stalls.
pub fn sample_truncated_normal(
    mu: f64,
    sigma: f64,
    lo: f64,
    hi: f64,
    rng: &mut ChainRng,
) -> Result<f64> {
    if !(lo < hi) {
        return invalid(format!("truncation bounds must satisfy lo < hi, got [{lo}, {hi}]"));
    }
    if !(sigma > 0.0) || !mu.is_finite() {
        return invalid(format!("truncated normal needs finite mu and sigma > 0, got ({mu}, {sigma})"));
    }
    let mut a = (lo - mu) / sigma;
    let mut b = (hi - mu) / sigma;
    if a == f64::NEG_INFINITY && b == f64::INFINITY {
        return Ok(mu + sigma * rng.standard_normal());
    }
    let reflect = a + b > 0.0;
    if reflect {
        (a, b) = (-b, -a);
    }
    let la = log_norm_cdf(a);
    let lb = log_norm_cdf(b);
    let v = rng.uniform();
    // u = Φ(a) + v (Φ(b) − Φ(a)) = Φ(b) [1 − (1 − v)(1 − Φ(a)/Φ(b))]
    let gap = if la == f64::NEG_INFINITY {
        1.0
    } else {
        -(la - lb).exp_m1()
    };
    let log_u = lb + (-(1.0 - v) * gap).ln_1p();
    let mut x = norm_quantile_from_log(log_u);
    if reflect {
        x = -x;
    }
    let draw = mu + sigma * x;
    Ok(draw.clamp(lo, hi))
}

pub fn sample_gamma(shape: f64, rate: f64, rng: &mut ChainRng) -> Result<f64> {
    if !(shape > 0.0) || !(rate > 0.0) || !shape.is_finite() || !rate.is_finite() {
        return invalid(format!("gamma needs shape > 0 and rate > 0, got ({shape}, {rate})"));
    }
    let g = Gamma::new(shape, 1.0 / rate)
        .map_err(|e| FarvaError::InvalidArgument(e.to_string()))?
        .sample(rng);
    Ok(g.max(f64::MIN_POSITIVE))
}

/// log of a Gamma(shape, 1) draw, stable for tiny shapes.
fn sample_log_gamma_unit(shape: f64, rng: &mut ChainRng) -> f64 {
    if shape >= 1.0 {
        let g: f64 = Gamma::new(shape, 1.0).expect("shape checked").sample(rng);
        g.ln()
    } else {
        // G(a) = G(a + 1) U^{1/a}
        let g: f64 = Gamma::new(shape + 1.0, 1.0).expect("shape checked").sample(rng);
        let u = 1.0 - rng.uniform();
        g.ln() + u.ln() / shape
    }
}

pub fn sample_dirichlet(alpha: &[f64], rng: &mut ChainRng) -> Result<Vec<f64>> {
    if alpha.is_empty() {
        return invalid("dirichlet concentration vector is empty");
    }
    if let Some(bad) = alpha.iter().find(|a| !(**a > 0.0) || !a.is_finite()) {
        return invalid(format!("dirichlet concentration must be positive, got {bad}"));
    }
    let logs: Vec<f64> = alpha.iter().map(|&a| sample_log_gamma_unit(a, rng)).collect();
    Ok(softmax(&logs))
}

/// Normalize log weights onto the simplex (log-sum-exp).
pub fn softmax(logs: &[f64]) -> Vec<f64> {
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return vec![1.0 / logs.len() as f64; logs.len()];
    }
    let w: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

pub fn log_sum_exp(logs: &[f64]) -> f64 {
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + logs.iter().map(|l| (l - max).exp()).sum::<f64>().ln()
}

/// Draw an index from unnormalized log weights.
pub fn sample_categorical_log(logs: &[f64], rng: &mut ChainRng) -> usize {
    let probs = softmax(logs);
    let u = rng.uniform();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding: fall back to the last index with positive mass
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(0)
}

fn check_square(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(FarvaError::DimensionMismatch(format!(
            "{what} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

fn check_symmetric(m: &DMatrix<f64>, what: &str) -> Result<()> {
    check_square(m, what)?;
    let scale = m.amax().max(1.0);
    for i in 0..m.nrows() {
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-10 * scale {
                return Err(FarvaError::InvalidArgument(format!("{what} is not symmetric")));
            }
        }
    }
    Ok(())
}

/// Cholesky factorization, retrying with an increasing diagonal jitter.
pub fn cholesky_jitter(m: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    let scale = m.diagonal().iter().fold(0.0f64, |acc, d| acc.max(d.abs())).max(1.0);
    for jitter in JITTER_RAMP {
        let mut a = m.clone();
        if jitter > 0.0 {
            for i in 0..a.nrows() {
                a[(i, i)] += jitter * scale;
            }
        }
        if let Some(chol) = Cholesky::new(a) {
            return Ok(chol);
        }
    }
    Err(FarvaError::NotPositiveDefinite(format!(
        "{}x{} matrix failed to factorize after jitter ramp",
        m.nrows(),
        m.ncols()
    )))
}

/// Lower-triangular square root of a PSD matrix; semidefinite directions get
/// zero columns, so a zero matrix factors to zero exactly.
fn psd_factor(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = cov.nrows();
    let tol = 1e-10 * cov.diagonal().iter().fold(0.0f64, |a, d| a.max(d.abs())).max(1.0);
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = cov[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d < -tol {
            return Err(FarvaError::NotPositiveDefinite(format!(
                "covariance is indefinite (pivot {d:.3e} at {j})"
            )));
        }
        if d <= tol {
            continue;
        }
        let root = d.sqrt();
        l[(j, j)] = root;
        for i in (j + 1)..n {
            let mut s = cov[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / root;
        }
    }
    Ok(l)
}

pub fn sample_mvn(mean: &DVector<f64>, cov: &DMatrix<f64>, rng: &mut ChainRng) -> Result<DVector<f64>> {
    check_symmetric(cov, "covariance")?;
    if cov.nrows() != mean.len() {
        return Err(FarvaError::DimensionMismatch(format!(
            "mean has length {} but covariance is {}x{}",
            mean.len(),
            cov.nrows(),
            cov.ncols()
        )));
    }
    let l = psd_factor(cov)?;
    let z = DVector::from_fn(mean.len(), |_, _| rng.standard_normal());
    Ok(mean + l * z)
}

/// Draw from N(Q⁻¹ b, Q⁻¹) given the precision Q and linear term b.
pub fn sample_mvn_precision(
    linear: &DVector<f64>,
    precision: &DMatrix<f64>,
    rng: &mut ChainRng,
) -> Result<DVector<f64>> {
    let chol = cholesky_jitter(precision)?;
    let mean = chol.solve(linear);
    let z = DVector::from_fn(linear.len(), |_, _| rng.standard_normal());
    // L Lᵀ = Q  ⇒  L⁻ᵀ z ~ N(0, Q⁻¹)
    let offset = chol
        .l()
        .transpose()
        .solve_upper_triangular(&z)
        .ok_or_else(|| FarvaError::NotPositiveDefinite("singular precision factor".into()))?;
    Ok(mean + offset)
}

/// Inverse-Wishart draw with density ∝ |Σ|^{-(df+p+1)/2} exp(−tr(S Σ⁻¹)/2),
/// via the Bartlett decomposition of Σ⁻¹ ~ W(df, S⁻¹).
pub fn sample_inverse_wishart(df: f64, scale: &DMatrix<f64>, rng: &mut ChainRng) -> Result<DMatrix<f64>> {
    check_symmetric(scale, "inverse-Wishart scale")?;
    let p = scale.nrows();
    if !(df > p as f64 - 1.0) {
        return invalid(format!("inverse-Wishart df must exceed p - 1 = {}, got {df}", p as f64 - 1.0));
    }
    let scale_chol = Cholesky::new(scale.clone())
        .ok_or_else(|| FarvaError::NotPositiveDefinite("inverse-Wishart scale".into()))?;
    let scale_inv = scale_chol.inverse();
    let l = cholesky_jitter(&scale_inv)?.l();
    let mut a = DMatrix::<f64>::zeros(p, p);
    for i in 0..p {
        let chi = ChiSquared::new(df - i as f64)
            .map_err(|e| FarvaError::InvalidArgument(e.to_string()))?;
        a[(i, i)] = chi.sample(rng).max(f64::MIN_POSITIVE).sqrt();
        for j in 0..i {
            a[(i, j)] = rng.standard_normal();
        }
    }
    // Σ⁻¹ = M Mᵀ with M = L A lower triangular  ⇒  Σ = M⁻ᵀ M⁻¹
    let m = l * a;
    let m_inv = m
        .solve_lower_triangular(&DMatrix::identity(p, p))
        .ok_or_else(|| FarvaError::NotPositiveDefinite("degenerate Bartlett factor".into()))?;
    let sigma = m_inv.transpose() * &m_inv;
    Ok((&sigma + sigma.transpose()) * 0.5)
}

/// Multivariate normal log density through a Cholesky factorization.
pub fn mvn_logpdf(x: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<f64> {
    check_square(cov, "covariance")?;
    if x.len() != mean.len() || x.len() != cov.nrows() {
        return Err(FarvaError::DimensionMismatch(format!(
            "x {}, mean {}, cov {}x{}",
            x.len(),
            mean.len(),
            cov.nrows(),
            cov.ncols()
        )));
    }
    let chol = cholesky_jitter(cov)?;
    let l = chol.l();
    let r = x - mean;
    let w = l
        .solve_lower_triangular(&r)
        .ok_or_else(|| FarvaError::NotPositiveDefinite("singular covariance factor".into()))?;
    let log_det: f64 = 2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>();
    Ok(-0.5 * (x.len() as f64 * LN_2PI + log_det + w.norm_squared()))
}
