//! Scores for individual and population level predictions.

use crate::error::{invalid, FarvaError, Result};

const SIMPLEX_TOL: f64 = 1e-6;

/// Fraction of rows whose predicted top cause is the true cause.
pub fn acc1(truth: &[usize], predicted: &[usize]) -> Result<f64> {
    if truth.len() != predicted.len() {
        return Err(FarvaError::DimensionMismatch(format!(
            "{} true labels, {} predictions",
            truth.len(),
            predicted.len()
        )));
    }
    if truth.is_empty() {
        return invalid("no predictions to score");
    }
    let hits = truth.iter().zip(predicted).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Check a probability vector and renormalize rounding error away.
pub fn check_simplex(v: &[f64]) -> Result<Vec<f64>> {
    if v.is_empty() {
        return invalid("empty probability vector");
    }
    if v.iter().any(|x| !x.is_finite() || *x < -SIMPLEX_TOL) {
        return invalid(format!("{v:?} has negative or non-finite entries"));
    }
    let total: f64 = v.iter().sum();
    if (total - 1.0).abs() > SIMPLEX_TOL {
        return invalid(format!("{v:?} sums to {total}, not 1"));
    }
    Ok(v.iter().map(|x| x.max(0.0) / total).collect())
}

/// Empirical cause fractions of a label vector.
pub fn csmf_from_labels(labels: &[usize], n_causes: usize) -> Result<Vec<f64>> {
    if labels.is_empty() {
        return invalid("no labels");
    }
    let mut counts = vec![0.0; n_causes];
    for &c in labels {
        if c >= n_causes {
            return invalid(format!("cause index {c} out of range"));
        }
        counts[c] += 1.0;
    }
    Ok(counts.iter().map(|k| k / labels.len() as f64).collect())
}

/// CSMF accuracy: 1 − Σ|t − p| / (2(1 − min t)).
pub fn acc_csmf(truth: &[f64], predicted: &[f64]) -> Result<f64> {
    if truth.len() != predicted.len() {
        return Err(FarvaError::DimensionMismatch(format!(
            "CSMF lengths {} and {}",
            truth.len(),
            predicted.len()
        )));
    }
    let t = check_simplex(truth)?;
    let p = check_simplex(predicted)?;
    let min = t.iter().cloned().fold(f64::INFINITY, f64::min);
    if min >= 1.0 {
        return invalid("true CSMF puts all mass on one cause with no others");
    }
    let err: f64 = t.iter().zip(&p).map(|(a, b)| (a - b).abs()).sum();
    Ok(1.0 - err / (2.0 * (1.0 - min)))
}

/// Chance-corrected concordance: 0 at uniform guessing, 1 when perfect.
pub fn ccc(acc1: f64, n_causes: usize) -> Result<f64> {
    if n_causes < 2 {
        return invalid("chance correction needs at least two causes");
    }
    let chance = 1.0 / n_causes as f64;
    Ok((acc1 - chance) / (1.0 - chance))
}

/// Yule's Q for the 2×2 table [[a, b], [c, d]].
pub fn yules_q(a: f64, b: f64, c: f64, d: f64) -> Result<f64> {
    if [a, b, c, d].iter().any(|v| !(*v >= 0.0)) {
        return invalid("counts must be nonnegative");
    }
    let (ad, bc) = (a * d, b * c);
    if ad + bc == 0.0 {
        return invalid("Yule's Q is undefined when ad + bc = 0");
    }
    Ok((ad - bc) / (ad + bc))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::ChainRng;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;

    #[test]
    fn acc1_examples() {
        assert_eq!(acc1(&[0, 1, 2], &[0, 1, 2]).unwrap(), 1.0);
        assert_eq!(acc1(&[0, 1, 2, 3], &[0, 1, 0, 0]).unwrap(), 0.5);
        assert!(acc1(&[0], &[0, 1]).is_err());
        assert!(acc1(&[], &[]).is_err());
    }

    #[test]
    fn acc1_permuted_is_chance() {
        let truth: Vec<usize> = (0..4000).map(|i| i % 4).collect();
        let mut rng = ChainRng::new(3);
        let mut total = 0.0;
        for _ in 0..50 {
            let mut pred = truth.clone();
            pred.shuffle(&mut rng);
            total += acc1(&truth, &pred).unwrap();
        }
        assert!((total / 50.0 - 0.25).abs() < 0.005);
    }

    #[test]
    fn acc_csmf_examples() {
        let t = [0.5, 0.3, 0.2];
        assert_eq!(acc_csmf(&t, &t).unwrap(), 1.0);
        assert_eq!(acc_csmf(&t, &[0.0, 0.0, 1.0]).unwrap(), 0.0);
        assert!((acc_csmf(&t, &[0.2, 0.3, 0.5]).unwrap() - 0.625).abs() < 1e-15);
        assert!(acc_csmf(&t, &[0.5, 0.5, 0.5]).is_err());
        assert!(acc_csmf(&[1.0], &[1.0]).is_err());
        // within tolerance is renormalized
        assert!((acc_csmf(&t, &[0.5, 0.3, 0.2 + 5e-7]).unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn ccc_examples() {
        assert_eq!(ccc(0.25, 4).unwrap(), 0.0);
        assert_eq!(ccc(1.0, 4).unwrap(), 1.0);
        assert!((ccc(0.5, 4).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(ccc(0.5, 1).is_err());
    }

    #[test]
    fn yules_q_examples() {
        assert_eq!(yules_q(5.0, 0.0, 3.0, 2.0).unwrap(), 1.0);
        assert_eq!(yules_q(5.0, 3.0, 0.0, 2.0).unwrap(), 1.0);
        assert_eq!(yules_q(2.0, 4.0, 1.0, 2.0).unwrap(), 0.0);
        assert!((yules_q(30.0, 10.0, 10.0, 30.0).unwrap() - 0.8).abs() < 1e-15);
        assert!(yules_q(0.0, 1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn csmf_from_labels_counts() {
        assert_eq!(csmf_from_labels(&[0, 0, 1, 2], 3).unwrap(), vec![0.5, 0.25, 0.25]);
        assert!(csmf_from_labels(&[3], 3).is_err());
    }

    fn simplex(n: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(0.01f64..1.0, n).prop_map(|v| {
            let s: f64 = v.iter().sum();
            v.iter().map(|x| x / s).collect()
        })
    }

    proptest! {
        #[test]
        fn acc_csmf_self_is_one(t in simplex(5)) {
            prop_assert!((acc_csmf(&t, &t).unwrap() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn acc_csmf_permutation_invariant(t in simplex(4), p in simplex(4), seed in 0u64..1000) {
            let mut idx: Vec<usize> = (0..4).collect();
            idx.shuffle(&mut ChainRng::new(seed));
            let tp: Vec<f64> = idx.iter().map(|&i| t[i]).collect();
            let pp: Vec<f64> = idx.iter().map(|&i| p[i]).collect();
            let a = acc_csmf(&t, &p).unwrap();
            prop_assert!((a - acc_csmf(&tp, &pp).unwrap()).abs() < 1e-12);
            prop_assert!((0.0..=1.0 + 1e-12).contains(&a));
        }

        #[test]
        fn yules_q_column_swap(a in 0.0f64..50.0, b in 0.5f64..50.0, c in 0.5f64..50.0, d in 0.0f64..50.0) {
            let q = yules_q(a, b, c, d).unwrap();
            prop_assert!((q + yules_q(b, a, d, c).unwrap()).abs() < 1e-12);
            prop_assert!((-1.0..=1.0).contains(&q));
        }
    }
}
