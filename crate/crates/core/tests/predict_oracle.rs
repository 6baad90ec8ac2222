mod common;

use common::{instances, oracle_posterior, patterns, row_constraints};

use farva::data::LatentConstraint;
use farva::model::{ChainMeta, PosteriorSamples};
use farva::numerics::ChainRng;
use farva::predict::{cod_posterior, likelihood_s_given_c};
use nalgebra::{DMatrix, DVector};

#[test]
fn orthant_oracle_sums_to_one() {
    let cov = DMatrix::from_row_slice(2, 2, &[1.5, 0.6, 0.6, 2.0]);
    let mean = DVector::from_row_slice(&[0.3, -0.4]);
    let total: f64 = patterns().iter().map(|&s| common::orthant_probability(&mean, &cov, s)).sum();
    assert!((total - 1.0).abs() < 1e-9);
    // independent standard normals: each quadrant has mass 1/4
    let q = common::orthant_probability(&DVector::zeros(2), &DMatrix::identity(2, 2), [true, false]);
    assert!((q - 0.25).abs() < 1e-9);
}

#[test]
fn likelihood_matches_quadrature() {
    let x = DVector::from_element(1, 1.0);
    let mut rng = ChainRng::new(5);
    for state in instances() {
        for signs in patterns() {
            for c in 0..2 {
                let (m, s) = state.marginal_moments(c, &x).unwrap();
                let want = common::orthant_probability(&m, &s, signs);
                let got = likelihood_s_given_c(&state, &row_constraints(signs), &x, c, 100_000, &mut rng).unwrap();
                assert!((got - want).abs() < 0.005, "{signs:?} cause {c}: {got} vs {want}");
            }
        }
    }
}

#[test]
fn posterior_matches_enumeration() {
    let x = DVector::from_element(1, 1.0);
    let mut rng = ChainRng::new(6);
    for state in instances() {
        let samples = PosteriorSamples {
            snapshots: vec![state.clone()],
            meta: ChainMeta { iterations: 1, burn_in: 0, thinning: 1, seed: 0 },
        };
        for signs in patterns() {
            let got = cod_posterior(&samples, &row_constraints(signs), &x, 20_000, &mut rng).unwrap();
            let want = oracle_posterior(&state, signs);
            for c in 0..2 {
                assert!((got[c] - want[c]).abs() < 0.01, "{signs:?}: {got:?} vs {want:?}");
            }
        }
    }
}

#[test]
fn missing_cell_marginalizes() {
    // with the second cell missing, p(s₁ | c) is a univariate normal tail
    let x = DVector::from_element(1, 1.0);
    let mut rng = ChainRng::new(7);
    for state in instances() {
        for c in 0..2 {
            let (m, s) = state.marginal_moments(c, &x).unwrap();
            let want = common::orthant_probability(&m, &s, [true, true]) + common::orthant_probability(&m, &s, [true, false]);
            let cons = vec![row_constraints([true, true])[0], LatentConstraint::Free];
            let got = likelihood_s_given_c(&state, &cons, &x, c, 100_000, &mut rng).unwrap();
            assert!((got - want).abs() < 0.005);
        }
    }
}
