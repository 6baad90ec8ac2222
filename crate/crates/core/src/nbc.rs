//! Naive Bayes baseline over binary symptoms.

use serde::{Deserialize, Serialize};

use crate::data::{ColumnKind, Dataset};
use crate::error::{invalid, Result};
use crate::numerics::softmax;

pub const DEFAULT_SMOOTHING: f64 = 1.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NbcModel {
    /// Indices of the binary columns used, in dataset column order.
    pub columns: Vec<usize>,
    /// `rates[c][k]`: P(symptom `columns[k]` = 1 | cause c).
    pub rates: Vec<Vec<f64>>,
    pub prior: Vec<f64>,
}

/// Fit per-cause Bernoulli rates with additive smoothing on the binary
/// columns of `train`. Missing cells and unlabelled rows are ignored.
pub fn nbc_fit(train: &Dataset, smoothing: f64) -> Result<NbcModel> {
    if !(smoothing > 0.0) {
        return invalid("smoothing must be positive");
    }
    let columns: Vec<usize> = (0..train.p())
        .filter(|&j| train.columns[j].kind == ColumnKind::Binary)
        .collect();
    let c_n = train.n_causes;
    let mut ones = vec![vec![0.0; columns.len()]; c_n];
    let mut seen = vec![vec![0.0; columns.len()]; c_n];
    let mut cause_counts = vec![0.0; c_n];
    for i in 0..train.n() {
        let Some(c) = train.labels[i] else { continue };
        cause_counts[c] += 1.0;
        for (k, &j) in columns.iter().enumerate() {
            if let Some(v) = train.cell(i, j) {
                seen[c][k] += 1.0;
                ones[c][k] += v;
            }
        }
    }
    let total: f64 = cause_counts.iter().sum();
    if total == 0.0 {
        return invalid("no labelled rows to fit");
    }
    let rates = (0..c_n)
        .map(|c| {
            (0..columns.len())
                .map(|k| (ones[c][k] + smoothing) / (seen[c][k] + 2.0 * smoothing))
                .collect()
        })
        .collect();
    Ok(NbcModel {
        columns,
        rates,
        prior: cause_counts.iter().map(|n| n / total).collect(),
    })
}

/// Cause posterior for one row given as the model's columns (missing = None).
pub fn nbc_predict(model: &NbcModel, row: &[Option<f64>]) -> Vec<f64> {
    let logs: Vec<f64> = model
        .prior
        .iter()
        .zip(&model.rates)
        .map(|(prior, rates)| {
            let mut lp = prior.ln();
            for (rate, v) in rates.iter().zip(row) {
                match v {
                    Some(s) if *s == 1.0 => lp += rate.ln(),
                    Some(_) => lp += (1.0 - rate).ln(),
                    None => {}
                }
            }
            lp
        })
        .collect();
    softmax(&logs)
}

/// Predict every row of `data`, reading the columns the model was fitted on.
pub fn nbc_predict_dataset(model: &NbcModel, data: &Dataset) -> Vec<Vec<f64>> {
    (0..data.n())
        .map(|i| {
            let row: Vec<Option<f64>> = model.columns.iter().map(|&j| data.cell(i, j)).collect();
            nbc_predict(model, &row)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{RawValue, SymptomKind, SymptomSpec};
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    fn dataset(rows: &[Vec<RawValue>], labels: Vec<Option<usize>>, c: usize) -> Dataset {
        let p = rows[0].len();
        let schema = (0..p).map(|j| SymptomSpec::new(format!("s{j}"), SymptomKind::Binary)).collect();
        let n = rows.len();
        Dataset::from_raw(
            schema,
            (0..n).map(|i| i.to_string()).collect(),
            vec![],
            DMatrix::from_element(n, 1, 1.0),
            rows,
            labels,
            c,
        )
        .unwrap()
    }

    use RawValue::{Missing, Number};

    #[test]
    fn laplace_rate() {
        let d = dataset(&vec![vec![Number(1.0)]; 3], vec![Some(0); 3], 1);
        let m = nbc_fit(&d, 1.0).unwrap();
        assert!((m.rates[0][0] - 0.8).abs() < 1e-15);
        assert_eq!(m.prior, vec![1.0]);
        let m = nbc_fit(&d, 1e12).unwrap();
        assert!((m.rates[0][0] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn missing_excluded_and_continuous_ignored() {
        let schema = vec![
            SymptomSpec::new("a", SymptomKind::Binary),
            SymptomSpec::new("b", SymptomKind::Continuous),
        ];
        let rows = vec![
            vec![Number(1.0), Number(2.5)],
            vec![Missing, Number(0.1)],
            vec![Number(0.0), Missing],
        ];
        let d = Dataset::from_raw(
            schema,
            vec!["1".into(), "2".into(), "3".into()],
            vec![],
            DMatrix::from_element(3, 1, 1.0),
            &rows,
            vec![Some(0), Some(0), Some(1)],
            2,
        )
        .unwrap();
        let m = nbc_fit(&d, 1.0).unwrap();
        assert_eq!(m.columns, vec![0]);
        assert!((m.rates[0][0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.rates[1][0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((m.prior[0] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn balanced_prior_and_no_labels() {
        let d = dataset(&vec![vec![Number(1.0)]; 4], vec![Some(0), Some(1), Some(0), Some(1)], 2);
        assert_eq!(nbc_fit(&d, 1.0).unwrap().prior, vec![0.5, 0.5]);
        let d = dataset(&vec![vec![Number(1.0)]; 2], vec![None, None], 2);
        assert!(nbc_fit(&d, 1.0).is_err());
        assert!(nbc_fit(&d, 0.0).is_err());
    }

    #[test]
    fn predict_examples() {
        let same = NbcModel {
            columns: vec![0, 1],
            rates: vec![vec![0.3, 0.8]; 2],
            prior: vec![0.5, 0.5],
        };
        assert_eq!(nbc_predict(&same, &[Some(1.0), Some(0.0)]), vec![0.5, 0.5]);

        let m = NbcModel {
            columns: vec![0],
            rates: vec![vec![0.99], vec![0.01]],
            prior: vec![0.5, 0.5],
        };
        assert!((nbc_predict(&m, &[Some(1.0)])[0] - 0.99).abs() < 1e-12);

        let m = NbcModel {
            columns: vec![0, 1],
            rates: vec![vec![0.9, 0.2], vec![0.1, 0.6], vec![0.5, 0.5]],
            prior: vec![0.2, 0.3, 0.5],
        };
        let p = nbc_predict(&m, &[None, None]);
        for (a, b) in p.iter().zip(&m.prior) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn simplex_and_missing_column_invariance(
            rates in proptest::collection::vec(0.01f64..0.99, 6),
            obs in proptest::collection::vec(proptest::option::of(0u8..2), 3),
        ) {
            let m = NbcModel { columns: vec![0, 1, 2], rates: rates.chunks(3).map(|c| c.to_vec()).collect(), prior: vec![0.4, 0.6] };
            let row: Vec<Option<f64>> = obs.iter().map(|v| v.map(f64::from)).collect();
            let p = nbc_predict(&m, &row);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            // append a column that is always missing
            let mut m2 = m.clone();
            m2.columns.push(3);
            for r in &mut m2.rates { r.push(0.77); }
            let mut row2 = row.clone();
            row2.push(None);
            let p2 = nbc_predict(&m2, &row2);
            for (a, b) in p.iter().zip(&p2) {
                prop_assert!((a - b).abs() < 1e-15);
            }
        }
    }
}
