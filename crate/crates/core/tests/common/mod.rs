//! Oracles and helpers shared by the integration tests.
#![allow(dead_code)]

use farva::data::{decode_latent, encode_constraint, expand_schema, ColumnKind, Dataset, LatentConstraint, RawValue, SymptomKind, SymptomSpec};
use farva::gibbs::{gibbs_sweep, ChainData};
use farva::model::{init_state, Hyperparameters, ModelState};
use farva::numerics::ChainRng;
use nalgebra::{DMatrix, DVector};
use statrs::function::erf::erfc;

fn phi_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// P(a < N(m, s²) ≤ b) with either bound possibly infinite.
fn interval_prob(a: f64, b: f64, m: f64, s: f64) -> f64 {
    let lo = if a == f64::NEG_INFINITY { 0.0 } else { phi_cdf((a - m) / s) };
    let hi = if b == f64::INFINITY { 1.0 } else { phi_cdf((b - m) / s) };
    (hi - lo).max(0.0)
}

/// Probability that a bivariate normal falls in the quadrant selected by
/// `signs` (true: z > 0, false: z ≤ 0). Composite Simpson over the first
/// coordinate of the conditional probability of the second.
pub fn orthant_probability(mean: &DVector<f64>, cov: &DMatrix<f64>, signs: [bool; 2]) -> f64 {
    let (m1, m2) = (mean[0], mean[1]);
    let s1 = cov[(0, 0)].sqrt();
    let slope = cov[(0, 1)] / cov[(0, 0)];
    let cond_sd = (cov[(1, 1)] - cov[(0, 1)] * cov[(0, 1)] / cov[(0, 0)]).sqrt();
    let (a, b) = if signs[0] { (0.0f64.max(m1 - 12.0 * s1), m1 + 12.0 * s1) } else { (m1 - 12.0 * s1, 0.0f64.min(m1 + 12.0 * s1)) };
    if a >= b {
        return 0.0;
    }
    let (lo2, hi2) = if signs[1] { (0.0, f64::INFINITY) } else { (f64::NEG_INFINITY, 0.0) };
    let f = |z1: f64| {
        let dens = (-0.5 * ((z1 - m1) / s1).powi(2)).exp() / (s1 * (2.0 * std::f64::consts::PI).sqrt());
        dens * interval_prob(lo2, hi2, m2 + slope * (z1 - m1), cond_sd)
    };
    let n = 20_000;
    let h = (b - a) / n as f64;
    let mut total = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        total += w * f(a + i as f64 * h);
    }
    total * h / 3.0
}

/// A state with the given loadings Λ_c (P × K) and factor means ψ_c, unit
/// residual variances, an intercept-only design and L = K with ξ = I.
pub fn fixed_state(lambdas: &[DMatrix<f64>], psis: &[DVector<f64>], pi: &[f64]) -> ModelState {
    let c = lambdas.len();
    let (p, k) = lambdas[0].shape();
    let mut beta = DMatrix::zeros(k * k, 1);
    for l in 0..k {
        beta[(l * k + l, 0)] = 1.0;
    }
    ModelState {
        theta: lambdas.to_vec(),
        delta: DMatrix::zeros(p, k),
        phi: DMatrix::from_element(p, k, 1.0),
        delta_mg: DVector::from_element(k, 1.0),
        tau: DVector::from_element(k, 1.0),
        beta: vec![beta; c],
        mu_beta: DMatrix::zeros(k * k, 1),
        sigma_beta: vec![DMatrix::identity(1, 1); k * k],
        alpha: psis.iter().map(|v| DMatrix::from_column_slice(k, 1, v.as_slice())).collect(),
        mu_alpha: DMatrix::zeros(k, 1),
        sigma_alpha: vec![DMatrix::identity(1, 1); k],
        sigma2: DVector::from_element(p, 1.0),
        z: DMatrix::zeros(0, p),
        eta: DMatrix::zeros(0, k),
        labels: vec![],
        pi: DVector::from_row_slice(pi),
    }
}

/// Mean and standard error of the mean from non-overlapping batch means.
pub fn batch_mean_se(v: &[f64], batches: usize) -> (f64, f64) {
    let n = v.len();
    let size = n / batches;
    let means: Vec<f64> = (0..batches)
        .map(|b| v[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let m = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (v.iter().sum::<f64>() / n as f64, (var / batches as f64).sqrt())
}

pub fn iid_mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Small joint-distribution test instance: binary, continuous and count
/// columns, one factor, one basis column, two causes, intercept only.
pub struct GewekeSetup {
    pub schema: Vec<SymptomSpec>,
    pub x: DMatrix<f64>,
    pub unknown: Vec<bool>,
    pub hyper: Hyperparameters,
}

impl GewekeSetup {
    pub fn new() -> Self {
        let schema = vec![
            SymptomSpec::new("b", SymptomKind::Binary),
            SymptomSpec::new("c", SymptomKind::Continuous),
            SymptomSpec::new("k", SymptomKind::Count),
        ];
        let n = 5;
        let mut hyper = Hyperparameters::defaults(2, 3, 1).with_dims(1, 1);
        hyper.gamma = 6.0;
        hyper.d1 = 3.0;
        hyper.sigma_shape = 5.0;
        hyper.sigma_rate = 4.0;
        hyper.nu0 = 6.0;
        hyper.v0 = 6.0;
        Self {
            schema,
            x: DMatrix::from_element(n, 1, 1.0),
            unknown: vec![false, false, false, true, true],
            hyper,
        }
    }

    /// Draw labels, factors, latents and observations from the likelihood at
    /// the current parameters, store the latents in `state` and return the
    /// observed data.
    pub fn regenerate(&self, state: &mut ModelState, rng: &mut ChainRng) -> Dataset {
        let columns = expand_schema(&self.schema).unwrap();
        let n = self.x.nrows();
        let p = columns.len();
        let log_pi: Vec<f64> = state.pi.iter().map(|v| v.ln()).collect();
        let mut labels = Vec::with_capacity(n);
        let mut rows = Vec::with_capacity(n);
        state.z = DMatrix::zeros(n, p);
        state.eta = DMatrix::zeros(n, state.n_factors());
        for i in 0..n {
            let y = farva::numerics::sample_categorical_log(&log_pi, rng);
            let xi = self.x.row(i).transpose();
            let lambda = state.compute_loadings(y, &xi).unwrap();
            let psi = state.compute_psi(y, &xi).unwrap();
            let eta = psi.map(|m| m + rng.standard_normal());
            let mean = &lambda * &eta;
            let mut row = Vec::with_capacity(p);
            for j in 0..p {
                let z = mean[j] + state.sigma2[j].sqrt() * rng.standard_normal();
                state.z[(i, j)] = z;
                row.push(RawValue::Number(decode_latent(&columns[j].kind, z)));
            }
            state.eta.set_row(i, &eta.transpose());
            labels.push(y);
            rows.push(row);
        }
        state.labels = labels.clone();
        Dataset::from_raw(
            self.schema.clone(),
            (1..=n).map(|i| i.to_string()).collect(),
            vec![],
            self.x.clone(),
            &rows,
            labels
                .iter()
                .zip(&self.unknown)
                .map(|(&y, &u)| if u { None } else { Some(y) })
                .collect(),
            2,
        )
        .unwrap()
    }

    /// Test functions: first and second moments of Δ, φ, free σ² and π₁.
    pub fn statistics(state: &ModelState) -> Vec<f64> {
        let mut base = Vec::new();
        base.extend(state.delta.iter().copied());
        base.extend(state.phi.iter().copied());
        base.push(state.sigma2[1]);
        base.push(state.sigma2[2]);
        base.push(state.pi[0]);
        let squares: Vec<f64> = base.iter().map(|v| v * v).collect();
        base.extend(squares);
        base
    }

    pub fn statistic_names() -> Vec<String> {
        let base = [
            "delta[b]", "delta[c]", "delta[k]", "phi[b]", "phi[c]", "phi[k]", "sigma2[c]", "sigma2[k]", "pi[1]",
        ];
        base.iter()
            .map(|s| s.to_string())
            .chain(base.iter().map(|s| format!("{s}^2")))
            .collect()
    }
}

#[derive(Debug)]
pub struct GewekeRow {
    pub name: String,
    pub marginal: (f64, f64),
    pub successive: (f64, f64),
}

impl GewekeRow {
    pub fn z(&self) -> f64 {
        (self.marginal.0 - self.successive.0) / (self.marginal.1.powi(2) + self.successive.1.powi(2)).sqrt()
    }
}

/// Marginal-conditional draws straight from the prior against the
/// successive-conditional chain that alternates data regeneration with one
/// sweep. Both target the same joint distribution of parameters and data.
pub fn geweke(sweeps: usize, seed: u64) -> Vec<GewekeRow> {
    let setup = GewekeSetup::new();
    let mut rng = ChainRng::new(seed);

    let template = setup.regenerate(&mut prior_template(), &mut rng);
    let names = GewekeSetup::statistic_names();
    let mut marginal = vec![Vec::with_capacity(sweeps); names.len()];
    let mut successive = vec![Vec::with_capacity(sweeps); names.len()];

    for _ in 0..sweeps {
        let draw = init_state(&setup.hyper, &template, &mut rng).unwrap();
        for (acc, v) in marginal.iter_mut().zip(GewekeSetup::statistics(&draw)) {
            acc.push(v);
        }
    }

    let mut state = init_state(&setup.hyper, &template, &mut rng).unwrap();
    let mut data = setup.regenerate(&mut state, &mut rng);
    for _ in 0..sweeps {
        let cd = ChainData::new(&data).unwrap();
        gibbs_sweep(&mut state, &cd, &setup.hyper, &mut rng).unwrap();
        for (acc, v) in successive.iter_mut().zip(GewekeSetup::statistics(&state)) {
            acc.push(v);
        }
        data = setup.regenerate(&mut state, &mut rng);
    }

    names
        .into_iter()
        .zip(marginal.iter().zip(&successive))
        .map(|(name, (m, s))| GewekeRow {
            name,
            marginal: iid_mean_se(m),
            successive: batch_mean_se(s, 50),
        })
        .collect()
}

/// Any parameter values will do for producing a dataset of the right shape.
fn prior_template() -> ModelState {
    fixed_state(
        &[DMatrix::from_element(3, 1, 0.5), DMatrix::from_element(3, 1, -0.5)],
        &[DVector::zeros(1), DVector::zeros(1)],
        &[0.5, 0.5],
    )
}

/// Fixed two-cause, two-binary-symptom prediction instances.
pub fn instances() -> Vec<ModelState> {
    vec![
        fixed_state(
            &[DMatrix::from_column_slice(2, 1, &[1.0, 0.5]), DMatrix::from_column_slice(2, 1, &[-0.8, 1.2])],
            &[DVector::from_element(1, 0.3), DVector::from_element(1, -0.7)],
            &[0.6, 0.4],
        ),
        fixed_state(
            &[DMatrix::from_column_slice(2, 1, &[2.0, 2.0]), DMatrix::from_column_slice(2, 1, &[0.1, -0.2])],
            &[DVector::from_element(1, 1.0), DVector::from_element(1, 0.0)],
            &[0.3, 0.7],
        ),
        fixed_state(
            &[
                DMatrix::from_row_slice(2, 2, &[0.9, -0.4, 0.3, 1.1]),
                DMatrix::from_row_slice(2, 2, &[-0.5, 0.2, 0.7, 0.6]),
            ],
            &[DVector::from_row_slice(&[0.5, -0.2]), DVector::from_row_slice(&[-1.0, 0.4])],
            &[0.5, 0.5],
        ),
    ]
}

pub fn row_constraints(signs: [bool; 2]) -> Vec<LatentConstraint> {
    signs
        .iter()
        .map(|&s| encode_constraint(&ColumnKind::Binary, Some(f64::from(u8::from(s)))).unwrap())
        .collect()
}

pub fn patterns() -> [[bool; 2]; 4] {
    [[false, false], [false, true], [true, false], [true, true]]
}

/// Exact cause posterior from quadrature orthant probabilities.
pub fn oracle_posterior(state: &ModelState, signs: [bool; 2]) -> Vec<f64> {
    let x = DVector::from_element(1, 1.0);
    let w: Vec<f64> = (0..state.n_causes())
        .map(|c| {
            let (m, s) = state.marginal_moments(c, &x).unwrap();
            state.pi[c] * orthant_probability(&m, &s, signs)
        })
        .collect();
    let total: f64 = w.iter().sum();
    w.iter().map(|v| v / total).collect()
}
