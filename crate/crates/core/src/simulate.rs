//! Synthetic verbal-autopsy data with controlled mean/covariance structure.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, RawValue, SymptomKind, SymptomSpec};
use crate::error::{invalid, FarvaError, Result};
use crate::numerics::{sample_mvn, ChainRng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Structure {
    CauseSpecific,
    Common,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dependence {
    Independent,
    Dependent,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DataType {
    Binary,
    Mixed,
    Continuous,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub mean_structure: Structure,
    pub mean_covariate: bool,
    pub cov_structure: Structure,
    pub cov_dependence: Dependence,
    pub cov_covariate: bool,
    pub data_type: DataType,
    pub n: usize,
    pub p: usize,
    pub n_causes: usize,
}

/// Named configurations a–g3.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Preset {
    A,
    B,
    C,
    D,
    E,
    F,
    G1,
    G2,
    G3,
}

impl Preset {
    pub const ALL: [Preset; 9] = [
        Preset::A,
        Preset::B,
        Preset::C,
        Preset::D,
        Preset::E,
        Preset::F,
        Preset::G1,
        Preset::G2,
        Preset::G3,
    ];

    pub fn config(self) -> SimConfig {
        use DataType::*;
        use Dependence::*;
        use Structure::*;
        let (ms, mv, cs, cd, cv, dt) = match self {
            Preset::A => (CauseSpecific, false, Common, Independent, false, Binary),
            Preset::B => (CauseSpecific, false, Common, Dependent, false, Binary),
            Preset::C => (Common, false, CauseSpecific, Dependent, false, Binary),
            Preset::D => (CauseSpecific, false, CauseSpecific, Dependent, false, Binary),
            Preset::E => (CauseSpecific, true, Common, Independent, false, Binary),
            Preset::F => (Common, false, CauseSpecific, Dependent, true, Binary),
            Preset::G1 => (CauseSpecific, true, CauseSpecific, Dependent, true, Binary),
            Preset::G2 => (CauseSpecific, true, CauseSpecific, Dependent, true, Mixed),
            Preset::G3 => (CauseSpecific, true, CauseSpecific, Dependent, true, Continuous),
        };
        SimConfig {
            mean_structure: ms,
            mean_covariate: mv,
            cov_structure: cs,
            cov_dependence: cd,
            cov_covariate: cv,
            data_type: dt,
            ..SimConfig::default()
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::A => "a",
            Preset::B => "b",
            Preset::C => "c",
            Preset::D => "d",
            Preset::E => "e",
            Preset::F => "f",
            Preset::G1 => "g1",
            Preset::G2 => "g2",
            Preset::G3 => "g3",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = FarvaError;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s.to_ascii_lowercase())
            .ok_or_else(|| FarvaError::InvalidArgument(format!("unknown preset `{s}` (expected a-f, g1, g2, g3)")))
    }
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            mean_structure: Structure::CauseSpecific,
            mean_covariate: false,
            cov_structure: Structure::Common,
            cov_dependence: Dependence::Independent,
            cov_covariate: false,
            data_type: DataType::Binary,
            n: 928,
            p: 21,
            n_causes: 4,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.cov_dependence == Dependence::Independent && self.cov_covariate {
            return invalid("an independent covariance cannot depend on the covariate");
        }
        if self.n == 0 || self.p == 0 || self.n_causes == 0 {
            return invalid("n, p and the number of causes must be positive");
        }
        Ok(())
    }

    pub fn has_covariate(&self) -> bool {
        self.mean_covariate || self.cov_covariate
    }

    /// Observation kind of symptom `j`.
    pub fn symptom_kind(&self, j: usize) -> SymptomKind {
        match self.data_type {
            DataType::Binary => SymptomKind::Binary,
            DataType::Continuous => SymptomKind::Continuous,
            DataType::Mixed => {
                if j < self.p.div_ceil(2) {
                    SymptomKind::Binary
                } else {
                    SymptomKind::Continuous
                }
            }
        }
    }
}

/// Generating parameters and latent draws behind a simulated dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub config: SimConfig,
    /// `means[c][g]`: latent mean of cause `c` at covariate level `g`.
    pub means: Vec<Vec<DVector<f64>>>,
    /// `covariances[c][g]`, laid out like `means`.
    pub covariances: Vec<Vec<DMatrix<f64>>>,
    pub labels: Vec<usize>,
    pub covariate: Vec<u8>,
    pub z: DMatrix<f64>,
}

/// E[(ΛΛᵀ)_jj] + 0.5 for a P×3 standard normal Λ.
const DEPENDENT_VARIANCE: f64 = 3.5;

/// ΛΛᵀ + 0.5 I with Λ a P×3 standard normal matrix, rescaled so every
/// diagonal entry equals its expectation. Equal variances keep the binary
/// marginals of shared-mean presets identical across causes.
fn dependent_covariance(p: usize, rng: &mut ChainRng) -> DMatrix<f64> {
    let lambda = DMatrix::from_fn(p, 3, |_, _| rng.standard_normal());
    let mut cov = &lambda * lambda.transpose();
    for j in 0..p {
        cov[(j, j)] += 0.5;
    }
    let d: Vec<f64> = (0..p).map(|j| cov[(j, j)].sqrt()).collect();
    DMatrix::from_fn(p, p, |a, b| DEPENDENT_VARIANCE * cov[(a, b)] / (d[a] * d[b]))
}

fn covariance_draw(config: &SimConfig, rng: &mut ChainRng) -> DMatrix<f64> {
    match config.cov_dependence {
        Dependence::Independent => DMatrix::identity(config.p, config.p),
        Dependence::Dependent => dependent_covariance(config.p, rng),
    }
}

/// Generate one labelled dataset. The latent draws do not depend on the
/// data type, so configurations differing only there share `z`.
pub fn generate_dataset(config: &SimConfig, rng: &mut ChainRng) -> Result<(Dataset, GroundTruth)> {
    config.validate()?;
    let (n, p, c_n) = (config.n, config.p, config.n_causes);
    let levels = if config.has_covariate() { 2 } else { 1 };
    let std_normal = |rng: &mut ChainRng| DVector::from_fn(p, |_, _| rng.standard_normal());

    let base_means: Vec<DVector<f64>> = match config.mean_structure {
        Structure::Common => vec![std_normal(rng); c_n],
        Structure::CauseSpecific => (0..c_n).map(|_| std_normal(rng)).collect(),
    };
    let means: Vec<Vec<DVector<f64>>> = base_means
        .into_iter()
        .map(|m| {
            if config.mean_covariate {
                let shift = std_normal(rng) * 0.5;
                vec![m.clone(), m + shift]
            } else {
                vec![m; levels]
            }
        })
        .collect();

    let level_covs = |rng: &mut ChainRng| -> Vec<DMatrix<f64>> {
        if config.cov_covariate {
            (0..levels).map(|_| covariance_draw(config, rng)).collect()
        } else {
            vec![covariance_draw(config, rng); levels]
        }
    };
    let covariances: Vec<Vec<DMatrix<f64>>> = match config.cov_structure {
        Structure::Common => vec![level_covs(rng); c_n],
        Structure::CauseSpecific => (0..c_n).map(|_| level_covs(rng)).collect(),
    };

    let mut labels = Vec::with_capacity(n);
    let mut covariate = Vec::with_capacity(n);
    let mut z = DMatrix::zeros(n, p);
    for i in 0..n {
        let g = if config.has_covariate() { u8::from(rng.uniform() < 0.5) } else { 0 };
        let c = ((rng.uniform() * c_n as f64) as usize).min(c_n - 1);
        let draw = sample_mvn(&means[c][g as usize], &covariances[c][g as usize], rng)?;
        z.set_row(i, &draw.transpose());
        labels.push(c);
        covariate.push(g);
    }

    let schema: Vec<SymptomSpec> = (0..p)
        .map(|j| SymptomSpec::new(format!("s{}", j + 1), config.symptom_kind(j)))
        .collect();
    let rows: Vec<Vec<RawValue>> = (0..n)
        .map(|i| {
            (0..p)
                .map(|j| match schema[j].kind {
                    SymptomKind::Binary => RawValue::Number(if z[(i, j)] > 0.0 { 1.0 } else { 0.0 }),
                    _ => RawValue::Number(z[(i, j)]),
                })
                .collect()
        })
        .collect();
    let (names, x) = if config.has_covariate() {
        (
            vec!["group".to_string()],
            DMatrix::from_fn(n, 2, |i, b| if b == 0 { 1.0 } else { covariate[i] as f64 }),
        )
    } else {
        (vec![], DMatrix::from_element(n, 1, 1.0))
    };
    let data = Dataset::from_raw(
        schema,
        (1..=n).map(|i| i.to_string()).collect(),
        names,
        x,
        &rows,
        labels.iter().map(|&c| Some(c)).collect(),
        c_n,
    )?;
    let truth = GroundTruth {
        config: config.clone(),
        means,
        covariances,
        labels,
        covariate,
        z,
    };
    Ok((data, truth))
}

/// A train/test partition; the test set's labels are hidden and kept aside.
#[derive(Clone, Debug)]
pub struct Split {
    pub train: Dataset,
    pub test: Dataset,
    pub test_labels: Vec<usize>,
    pub train_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
}

/// Random partition with ⌈n·fraction⌉ test rows. Rows keep their original
/// order within each part.
pub fn split_train_test(data: &Dataset, test_fraction: f64, rng: &mut ChainRng) -> Result<Split> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return invalid(format!("test fraction {test_fraction} must lie in (0, 1)"));
    }
    let n = data.n();
    let n_test = ((n as f64 * test_fraction) - 1e-9).ceil() as usize;
    if n_test == 0 || n_test >= n {
        return invalid(format!("cannot split {n} rows with test fraction {test_fraction}"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut test_rows = order[..n_test].to_vec();
    let mut train_rows = order[n_test..].to_vec();
    test_rows.sort_unstable();
    train_rows.sort_unstable();
    let mut test = data.subset(&test_rows);
    let test_labels = test
        .labels
        .iter()
        .map(|l| l.ok_or_else(|| FarvaError::InvalidArgument("test rows must have known causes".into())))
        .collect::<Result<Vec<usize>>>()?;
    test.labels = vec![None; test_rows.len()];
    Ok(Split {
        train: data.subset(&train_rows),
        test,
        test_labels,
        train_rows,
        test_rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gen(preset: Preset, seed: u64) -> (Dataset, GroundTruth) {
        generate_dataset(&preset.config(), &mut ChainRng::new(seed)).unwrap()
    }

    #[test]
    fn preset_names_round_trip() {
        for p in Preset::ALL {
            assert_eq!(p.name().parse::<Preset>().unwrap(), p);
        }
        assert!("h".parse::<Preset>().is_err());
    }

    #[test]
    fn invalid_flags() {
        let cfg = SimConfig {
            cov_covariate: true,
            ..SimConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn binary_cells_and_scale() {
        let (d, t) = gen(Preset::A, 1);
        assert_eq!((d.n(), d.p(), d.n_causes, d.b()), (928, 21, 4, 1));
        assert!(d.s.iter().all(|v| matches!(v, Some(x) if *x == 0.0 || *x == 1.0)));
        assert_eq!(t.labels.len(), 928);
    }

    #[test]
    fn preset_a_is_uncorrelated_within_cause() {
        let (_, t) = gen(Preset::A, 2);
        // pooled within-cause correlation of the observed binary symptoms
        let (n, p) = t.z.shape();
        let s = DMatrix::from_fn(n, p, |i, j| if t.z[(i, j)] > 0.0 { 1.0 } else { 0.0 });
        let mut centered = s.clone();
        for c in 0..4 {
            let rows: Vec<usize> = (0..n).filter(|&i| t.labels[i] == c).collect();
            for j in 0..p {
                let m = rows.iter().map(|&i| s[(i, j)]).sum::<f64>() / rows.len() as f64;
                for &i in &rows {
                    centered[(i, j)] -= m;
                }
            }
        }
        let cov = centered.transpose() * &centered;
        let mut max_r: f64 = 0.0;
        for a in 0..p {
            for b in 0..a {
                max_r = max_r.max((cov[(a, b)] / (cov[(a, a)] * cov[(b, b)]).sqrt()).abs());
            }
        }
        assert!(max_r < 0.15, "{max_r}");
    }

    #[test]
    fn preset_c_marginals_match_across_causes() {
        let (d, t) = gen(Preset::C, 3);
        let mut outside = 0;
        for j in 0..d.p() {
            let freq: Vec<(f64, f64)> = (0..4)
                .map(|c| {
                    let rows: Vec<usize> = (0..d.n()).filter(|&i| t.labels[i] == c).collect();
                    let k = rows.iter().filter(|&&i| d.cell(i, j) == Some(1.0)).count();
                    (k as f64 / rows.len() as f64, rows.len() as f64)
                })
                .collect();
            let pooled = d.s.iter().skip(j).step_by(d.p()).filter(|v| **v == Some(1.0)).count() as f64 / d.n() as f64;
            for (f, m) in freq {
                let se = (pooled * (1.0 - pooled) / m).sqrt();
                if (f - pooled).abs() > 3.0 * se {
                    outside += 1;
                }
            }
        }
        assert_eq!(outside, 0);
        for c in 1..4 {
            assert_eq!(t.means[c], t.means[0]);
            assert_ne!(t.covariances[c], t.covariances[0]);
        }
    }

    #[test]
    fn structural_flags() {
        let (_, t) = gen(Preset::A, 4);
        for c in 0..4 {
            let cov = &t.covariances[c][0];
            assert_eq!(*cov, DMatrix::identity(21, 21));
        }
        assert_ne!(t.means[0], t.means[1]);
        let (d, t) = gen(Preset::G1, 5);
        assert_eq!(d.b(), 2);
        assert_ne!(t.means[0][0], t.means[0][1]);
        assert_ne!(t.covariances[0][0], t.covariances[0][1]);
        let (_, t) = gen(Preset::B, 5);
        assert_eq!(t.means[0].len(), 1);
        for c in 1..4 {
            assert_eq!(t.covariances[c], t.covariances[0]);
        }
        let (_, t) = gen(Preset::F, 6);
        assert_eq!(t.means[0][0], t.means[0][1]);
        assert_ne!(t.covariances[0][0], t.covariances[0][1]);
    }

    #[test]
    fn g_variants_share_latent_data() {
        let (b, t1) = gen(Preset::G1, 7);
        let (m, t2) = gen(Preset::G2, 7);
        let (c, t3) = gen(Preset::G3, 7);
        assert_eq!(t1.z, t2.z);
        assert_eq!(t1.z, t3.z);
        assert_eq!(t1.labels, t3.labels);
        assert_eq!(b.x, c.x);
        assert_ne!(b.s, m.s);
        assert_ne!(m.s, c.s);
        assert_eq!(m.columns.iter().filter(|c| c.kind.has_free_variance()).count(), 10);
        assert_eq!(c.cell(0, 0), Some(t3.z[(0, 0)]));
    }

    #[test]
    fn split_sizes_and_partition() {
        let (d, _) = gen(Preset::B, 8);
        let split = split_train_test(&d, 0.25, &mut ChainRng::new(1)).unwrap();
        assert_eq!(split.test.n(), 232);
        assert_eq!(split.train.n(), 696);
        let mut all: Vec<usize> = split.train_rows.iter().chain(&split.test_rows).cloned().collect();
        all.sort_unstable();
        assert_eq!(all, (0..928).collect::<Vec<_>>());
        assert!(split.test.labels.iter().all(|l| l.is_none()));
        for (k, &i) in split.test_rows.iter().enumerate() {
            assert_eq!(Some(split.test_labels[k]), d.labels[i]);
        }
        let again = split_train_test(&d, 0.25, &mut ChainRng::new(1)).unwrap();
        assert_eq!(again.test_rows, split.test_rows);
        assert!(split_train_test(&d, 0.0, &mut ChainRng::new(1)).is_err());
        assert!(split_train_test(&d, 1.0, &mut ChainRng::new(1)).is_err());
    }
}
