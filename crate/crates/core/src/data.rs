//! Symptom schema, mixed-type link functions and the dataset container.
//!
//! Observed symptoms `s` relate to latent Gaussians `z` through per-column
//! links: binary `1(z > 0)`, count rounding `k ⇔ k−1 ≤ z < k` (with `0 ⇔ z < 0`),
//! and identity (optionally after a log) for continuous columns, scaled to
//! unit variance. Categorical symptoms are dummy coded into `T − 1` binary
//! columns before any of this happens.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{FarvaError, Result};

/// Declared type of a questionnaire item.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum SymptomKind {
    Binary,
    Continuous,
    ContinuousLog,
    Count,
    /// Ordered category labels, baseline first.
    Categorical { levels: Vec<String> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymptomSpec {
    pub name: String,
    pub kind: SymptomKind,
}

impl SymptomSpec {
    pub fn new(name: impl Into<String>, kind: SymptomKind) -> Self {
        Self {
            name: name.into(),
            kind,
        }
    }

    /// Number of model columns this symptom occupies.
    pub fn width(&self) -> usize {
        match &self.kind {
            SymptomKind::Categorical { levels } => levels.len().saturating_sub(1),
            _ => 1,
        }
    }
}

/// Link type of one expanded model column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ColumnKind {
    Binary,
    /// `scale` divides the (possibly logged) value to give unit variance.
    Continuous { log: bool, scale: f64 },
    Count,
}

impl ColumnKind {
    /// Whether the residual variance of this column is estimated.
    pub fn has_free_variance(&self) -> bool {
        !matches!(self, ColumnKind::Binary)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
    /// Index of the originating symptom in the schema.
    pub source: usize,
}

/// Set of latent values compatible with one observed cell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LatentConstraint {
    Point(f64),
    /// Closed on exactly one side: `[lo, hi)` when `closed_low`, else `(lo, hi]`.
    /// Infinite endpoints are never attained.
    Interval { lo: f64, hi: f64, closed_low: bool },
    Free,
}

impl LatentConstraint {
    pub fn contains(&self, z: f64) -> bool {
        match *self {
            LatentConstraint::Point(v) => z == v,
            LatentConstraint::Interval { lo, hi, closed_low } => {
                if !z.is_finite() {
                    return false;
                }
                if closed_low {
                    lo <= z && z < hi
                } else {
                    lo < z && z <= hi
                }
            }
            LatentConstraint::Free => z.is_finite(),
        }
    }

    /// Move a draw that landed on an excluded endpoint back inside.
    pub fn nudge(&self, z: f64) -> f64 {
        match *self {
            LatentConstraint::Interval { lo, hi, closed_low } => {
                if closed_low && z >= hi {
                    hi.next_down()
                } else if !closed_low && z <= lo {
                    lo.next_up()
                } else {
                    z
                }
            }
            LatentConstraint::Point(v) => v,
            LatentConstraint::Free => z,
        }
    }
}

/// One raw questionnaire answer before encoding.
#[derive(Clone, Debug, PartialEq)]
pub enum RawValue {
    Missing,
    Number(f64),
    Label(String),
}

/// Dummy-code a categorical answer into `T − 1` indicator cells.
pub fn expand_categorical(
    symptom: &str,
    levels: &[String],
    value: Option<&str>,
) -> Result<Vec<Option<f64>>> {
    if levels.len() < 2 {
        return Err(FarvaError::InvalidArgument(format!(
            "categorical symptom `{symptom}` needs at least two levels"
        )));
    }
    let width = levels.len() - 1;
    let Some(value) = value else {
        return Ok(vec![None; width]);
    };
    let pos = levels
        .iter()
        .position(|l| l == value)
        .ok_or_else(|| FarvaError::UnknownCategory {
            symptom: symptom.to_string(),
            value: value.to_string(),
        })?;
    let mut cells = vec![Some(0.0); width];
    if pos > 0 {
        cells[pos - 1] = Some(1.0);
    }
    Ok(cells)
}

/// Inverse of [`expand_categorical`]; `None` when the cells are missing.
pub fn decode_categorical<'a>(levels: &'a [String], cells: &[Option<f64>]) -> Option<&'a str> {
    if cells.iter().any(|c| c.is_none()) {
        return None;
    }
    match cells.iter().position(|c| *c == Some(1.0)) {
        Some(i) => levels.get(i + 1).map(String::as_str),
        None => levels.first().map(String::as_str),
    }
}

/// Scale a continuous column (after an optional log) to unit sample variance.
/// Returns the transformed column and the scale factor (sample SD).
pub fn standardize_continuous(
    name: &str,
    column: &[Option<f64>],
    log: bool,
) -> Result<(Vec<Option<f64>>, f64)> {
    let mut values = Vec::with_capacity(column.len());
    for v in column.iter().flatten() {
        if log && !(*v > 0.0) {
            return Err(FarvaError::IncompatibleValue {
                symptom: name.to_string(),
                value: v.to_string(),
                reason: "log-scale symptoms must be strictly positive".into(),
            });
        }
        values.push(if log { v.ln() } else { *v });
    }
    if values.len() < 2 {
        return Err(FarvaError::ZeroVariance(name.to_string()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    if !(var > 0.0) {
        return Err(FarvaError::ZeroVariance(name.to_string()));
    }
    let scale = var.sqrt();
    let scaled = column
        .iter()
        .map(|c| c.map(|v| if log { v.ln() } else { v } / scale))
        .collect();
    Ok((scaled, scale))
}

/// Latent region implied by one observed cell (observed scale).
pub fn encode_constraint(kind: &ColumnKind, value: Option<f64>) -> Result<LatentConstraint> {
    let Some(v) = value else {
        return Ok(LatentConstraint::Free);
    };
    let incompatible = |reason: &str| FarvaError::IncompatibleValue {
        symptom: format!("{kind:?}"),
        value: v.to_string(),
        reason: reason.to_string(),
    };
    match kind {
        ColumnKind::Binary => {
            if v == 1.0 {
                Ok(LatentConstraint::Interval {
                    lo: 0.0,
                    hi: f64::INFINITY,
                    closed_low: false,
                })
            } else if v == 0.0 {
                Ok(LatentConstraint::Interval {
                    lo: f64::NEG_INFINITY,
                    hi: 0.0,
                    closed_low: false,
                })
            } else {
                Err(incompatible("binary symptoms take values 0 or 1"))
            }
        }
        ColumnKind::Count => {
            if v < 0.0 {
                return Err(incompatible("counts must be nonnegative"));
            }
            if v.fract() != 0.0 || !v.is_finite() {
                return Err(incompatible("counts must be integers"));
            }
            if v == 0.0 {
                Ok(LatentConstraint::Interval {
                    lo: f64::NEG_INFINITY,
                    hi: 0.0,
                    closed_low: true,
                })
            } else {
                Ok(LatentConstraint::Interval {
                    lo: v - 1.0,
                    hi: v,
                    closed_low: true,
                })
            }
        }
        ColumnKind::Continuous { log, scale } => {
            if !v.is_finite() {
                return Err(incompatible("continuous values must be finite"));
            }
            let t = if *log {
                if v <= 0.0 {
                    return Err(incompatible("log-scale symptoms must be strictly positive"));
                }
                v.ln()
            } else {
                v
            };
            Ok(LatentConstraint::Point(t / scale))
        }
    }
}

/// Observed value generated by a latent draw.
pub fn decode_latent(kind: &ColumnKind, z: f64) -> f64 {
    match kind {
        ColumnKind::Binary => {
            if z > 0.0 {
                1.0
            } else {
                0.0
            }
        }
        ColumnKind::Count => {
            if z < 0.0 {
                0.0
            } else {
                z.floor() + 1.0
            }
        }
        ColumnKind::Continuous { log, scale } => {
            let t = z * scale;
            if *log {
                t.exp()
            } else {
                t
            }
        }
    }
}

/// Observed records `(s, x, y)` with their schema.
///
/// `s` is stored on the observed scale after categorical expansion; scaling of
/// continuous columns lives in [`ColumnKind::Continuous`]. Labels are
/// zero-based internally; files use `1..=C`.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub ids: Vec<String>,
    pub schema: Vec<SymptomSpec>,
    pub columns: Vec<Column>,
    pub covariate_names: Vec<String>,
    /// n × B design, intercept first.
    pub x: DMatrix<f64>,
    /// n × P cells, row-major.
    pub s: Vec<Option<f64>>,
    pub labels: Vec<Option<usize>>,
    pub n_causes: usize,
}

pub fn expand_schema(schema: &[SymptomSpec]) -> Result<Vec<Column>> {
    let mut seen = std::collections::HashSet::new();
    let mut columns = Vec::new();
    for (idx, spec) in schema.iter().enumerate() {
        if !seen.insert(spec.name.as_str()) {
            return Err(FarvaError::Schema(format!("duplicate symptom name `{}`", spec.name)));
        }
        match &spec.kind {
            SymptomKind::Binary => columns.push(Column {
                name: spec.name.clone(),
                kind: ColumnKind::Binary,
                source: idx,
            }),
            SymptomKind::Count => columns.push(Column {
                name: spec.name.clone(),
                kind: ColumnKind::Count,
                source: idx,
            }),
            SymptomKind::Continuous | SymptomKind::ContinuousLog => columns.push(Column {
                name: spec.name.clone(),
                kind: ColumnKind::Continuous {
                    log: spec.kind == SymptomKind::ContinuousLog,
                    scale: 1.0,
                },
                source: idx,
            }),
            SymptomKind::Categorical { levels } => {
                if levels.len() < 2 {
                    return Err(FarvaError::Schema(format!(
                        "categorical symptom `{}` needs at least two levels",
                        spec.name
                    )));
                }
                for level in &levels[1..] {
                    columns.push(Column {
                        name: format!("{}={}", spec.name, level),
                        kind: ColumnKind::Binary,
                        source: idx,
                    });
                }
            }
        }
    }
    Ok(columns)
}

impl Dataset {
    /// Build from raw answers (one `RawValue` per schema symptom per row).
    pub fn from_raw(
        schema: Vec<SymptomSpec>,
        ids: Vec<String>,
        covariate_names: Vec<String>,
        x: DMatrix<f64>,
        rows: &[Vec<RawValue>],
        labels: Vec<Option<usize>>,
        n_causes: usize,
    ) -> Result<Self> {
        let columns = expand_schema(&schema)?;
        let n = ids.len();
        if rows.len() != n || labels.len() != n || x.nrows() != n {
            return Err(FarvaError::DimensionMismatch(format!(
                "{} ids, {} rows, {} labels, {} covariate rows",
                n,
                rows.len(),
                labels.len(),
                x.nrows()
            )));
        }
        let mut s = Vec::with_capacity(n * columns.len());
        for row in rows {
            if row.len() != schema.len() {
                return Err(FarvaError::DimensionMismatch(format!(
                    "row has {} answers, schema has {} symptoms",
                    row.len(),
                    schema.len()
                )));
            }
            for (spec, value) in schema.iter().zip(row) {
                encode_raw_cell(spec, value, &mut s)?;
            }
        }
        let data = Self {
            ids,
            schema,
            columns,
            covariate_names,
            x,
            s,
            labels,
            n_causes,
        };
        data.validate()?;
        Ok(data)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_causes < 1 {
            return Err(FarvaError::InvalidArgument("need at least one cause".into()));
        }
        if self.columns.is_empty() {
            return Err(FarvaError::InvalidArgument("need at least one symptom column".into()));
        }
        if self.x.ncols() < 1 {
            return Err(FarvaError::InvalidArgument("need at least one covariate column".into()));
        }
        if self.s.len() != self.n() * self.p() || self.x.nrows() != self.n() || self.labels.len() != self.n()
        {
            return Err(FarvaError::DimensionMismatch("dataset arrays disagree on n".into()));
        }
        if let Some(bad) = self.labels.iter().flatten().find(|c| **c >= self.n_causes) {
            return Err(FarvaError::InvalidArgument(format!(
                "cause {} outside 1..={}",
                bad + 1,
                self.n_causes
            )));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.ids.len()
    }

    pub fn p(&self) -> usize {
        self.columns.len()
    }

    pub fn b(&self) -> usize {
        self.x.ncols()
    }

    pub fn cell(&self, i: usize, j: usize) -> Option<f64> {
        self.s[i * self.p() + j]
    }

    pub fn row(&self, i: usize) -> &[Option<f64>] {
        let p = self.p();
        &self.s[i * p..(i + 1) * p]
    }

    /// Latent constraints for every cell, row-major n × P.
    pub fn constraints(&self) -> Result<Vec<LatentConstraint>> {
        let p = self.p();
        self.s
            .iter()
            .enumerate()
            .map(|(idx, v)| encode_constraint(&self.columns[idx % p].kind, *v))
            .collect()
    }

    pub fn row_constraints(&self, i: usize) -> Result<Vec<LatentConstraint>> {
        self.row(i)
            .iter()
            .zip(&self.columns)
            .map(|(v, c)| encode_constraint(&c.kind, *v))
            .collect()
    }

    /// Fit unit-variance scales for continuous columns from this data and
    /// store them. Returns one scale per column (1 for non-continuous).
    pub fn standardize(&mut self) -> Result<Vec<f64>> {
        let p = self.p();
        let mut scales = vec![1.0; p];
        for j in 0..p {
            if let ColumnKind::Continuous { log, .. } = self.columns[j].kind {
                let col: Vec<Option<f64>> = (0..self.n()).map(|i| self.cell(i, j)).collect();
                let (_, scale) = standardize_continuous(&self.columns[j].name, &col, log)?;
                scales[j] = scale;
            }
        }
        self.set_scales(&scales)?;
        Ok(scales)
    }

    /// Apply scales fitted elsewhere (e.g. on training data).
    pub fn set_scales(&mut self, scales: &[f64]) -> Result<()> {
        if scales.len() != self.p() {
            return Err(FarvaError::DimensionMismatch(format!(
                "{} scales for {} columns",
                scales.len(),
                self.p()
            )));
        }
        for (col, s) in self.columns.iter_mut().zip(scales) {
            if let ColumnKind::Continuous { scale, .. } = &mut col.kind {
                if !(*s > 0.0) {
                    return Err(FarvaError::InvalidArgument(format!("nonpositive scale {s}")));
                }
                *scale = *s;
            }
        }
        Ok(())
    }

    pub fn scales(&self) -> Vec<f64> {
        self.columns
            .iter()
            .map(|c| match c.kind {
                ColumnKind::Continuous { scale, .. } => scale,
                _ => 1.0,
            })
            .collect()
    }

    /// Copy with the design reduced to the intercept column.
    pub fn intercept_only(&self) -> Self {
        let mut out = self.clone();
        out.x = DMatrix::from_element(self.n(), 1, 1.0);
        out.covariate_names.clear();
        out
    }

    /// Copy restricted to the given rows, in order.
    pub fn subset(&self, rows: &[usize]) -> Self {
        let p = self.p();
        let mut s = Vec::with_capacity(rows.len() * p);
        for &i in rows {
            s.extend_from_slice(self.row(i));
        }
        Self {
            ids: rows.iter().map(|&i| self.ids[i].clone()).collect(),
            schema: self.schema.clone(),
            columns: self.columns.clone(),
            covariate_names: self.covariate_names.clone(),
            x: self.x.select_rows(rows),
            s,
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
            n_causes: self.n_causes,
        }
    }

    /// Raw answer for schema symptom `k` of row `i` (inverse of the encoding).
    pub fn raw_value(&self, i: usize, k: usize) -> RawValue {
        let start = self.columns.iter().position(|c| c.source == k).expect("symptom has a column");
        let spec = &self.schema[k];
        match &spec.kind {
            SymptomKind::Categorical { levels } => {
                let cells = &self.row(i)[start..start + spec.width()];
                match decode_categorical(levels, cells) {
                    Some(l) => RawValue::Label(l.to_string()),
                    None => RawValue::Missing,
                }
            }
            _ => match self.cell(i, start) {
                Some(v) => RawValue::Number(v),
                None => RawValue::Missing,
            },
        }
    }
}

fn encode_raw_cell(spec: &SymptomSpec, value: &RawValue, out: &mut Vec<Option<f64>>) -> Result<()> {
    let incompatible = |reason: &str| FarvaError::IncompatibleValue {
        symptom: spec.name.clone(),
        value: format!("{value:?}"),
        reason: reason.to_string(),
    };
    match (&spec.kind, value) {
        (SymptomKind::Categorical { levels }, RawValue::Missing) => {
            out.extend(expand_categorical(&spec.name, levels, None)?);
        }
        (SymptomKind::Categorical { levels }, RawValue::Label(l)) => {
            out.extend(expand_categorical(&spec.name, levels, Some(l))?);
        }
        (SymptomKind::Categorical { levels }, RawValue::Number(v)) => {
            let label = v.to_string();
            out.extend(expand_categorical(&spec.name, levels, Some(&label))?);
        }
        (_, RawValue::Missing) => out.push(None),
        (_, RawValue::Label(_)) => return Err(incompatible("expected a number")),
        (kind, RawValue::Number(v)) => {
            let column_kind = match kind {
                SymptomKind::Binary => ColumnKind::Binary,
                SymptomKind::Count => ColumnKind::Count,
                SymptomKind::Continuous => ColumnKind::Continuous { log: false, scale: 1.0 },
                SymptomKind::ContinuousLog => ColumnKind::Continuous { log: true, scale: 1.0 },
                SymptomKind::Categorical { .. } => unreachable!(),
            };
            // validate against the link before storing
            encode_constraint(&column_kind, Some(*v)).map_err(|e| match e {
                FarvaError::IncompatibleValue { reason, .. } => incompatible(&reason),
                other => other,
            })?;
            out.push(Some(*v));
        }
    }
    Ok(())
}
