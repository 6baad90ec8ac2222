//! File formats: dataset CSV, schema TOML, posterior container, prediction
//! and report outputs.
//!
//! Dataset CSV: header `id, cause, x_<covariate>..., <symptom>...`. Causes are
//! `1..=C`; an empty cause or symptom cell means unknown / missing.
//!
//! Posterior container (little endian throughout):
//!
//! ```text
//! b"FARVAPST"  u32 version  u32 0x01020304  u64 header_len  header JSON
//! snapshot*   every field as raw f64 (labels as u32), matrices column-major
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{Column, Dataset, RawValue, SymptomKind, SymptomSpec};
use crate::error::{FarvaError, Result};
use crate::model::{ChainMeta, Hyperparameters, ModelState, PosteriorSamples};
use crate::predict::{CodPosterior, CsmfEstimate};
use crate::simulate::GroundTruth;

pub const MAGIC: &[u8; 8] = b"FARVAPST";
pub const FORMAT_VERSION: u32 = 1;
const ENDIAN_MARK: u32 = 0x0102_0304;
pub const COVARIATE_PREFIX: &str = "x_";

fn parse_err(msg: impl Into<String>) -> FarvaError {
    FarvaError::Parse(msg.into())
}

fn csv_err(e: csv::Error) -> FarvaError {
    parse_err(e.to_string())
}

// ---------------------------------------------------------------- schema

fn kind_name(kind: &SymptomKind) -> &'static str {
    match kind {
        SymptomKind::Binary => "binary",
        SymptomKind::Continuous => "continuous",
        SymptomKind::ContinuousLog => "continuous-log",
        SymptomKind::Count => "count",
        SymptomKind::Categorical { .. } => "categorical",
    }
}

fn kind_from_toml(name: &str, v: &toml::Value) -> Result<SymptomKind> {
    let bad = || FarvaError::Schema(format!("symptom `{name}`: unrecognized kind {v}"));
    match v {
        toml::Value::String(s) => match s.as_str() {
            "binary" => Ok(SymptomKind::Binary),
            "continuous" => Ok(SymptomKind::Continuous),
            "continuous-log" => Ok(SymptomKind::ContinuousLog),
            "count" => Ok(SymptomKind::Count),
            _ => Err(bad()),
        },
        toml::Value::Table(t) => {
            if t.get("kind").and_then(|k| k.as_str()) != Some("categorical") {
                return Err(bad());
            }
            let levels = t
                .get("levels")
                .and_then(|l| l.as_array())
                .ok_or_else(bad)?
                .iter()
                .map(|l| l.as_str().map(str::to_string).ok_or_else(bad))
                .collect::<Result<Vec<_>>>()?;
            if levels.len() < 2 {
                return Err(FarvaError::Schema(format!("categorical symptom `{name}` needs at least two levels")));
            }
            Ok(SymptomKind::Categorical { levels })
        }
        _ => Err(bad()),
    }
}

/// One `name = kind` line per symptom, categorical kinds as inline tables,
/// so the file order is the column order.
pub fn schema_to_string(schema: &[SymptomSpec]) -> String {
    let quote = |s: &str| toml::Value::String(s.to_string()).to_string();
    let mut out = String::new();
    for s in schema {
        let bare = !s.name.is_empty() && s.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
        let key = if bare { s.name.clone() } else { quote(&s.name) };
        let value = match &s.kind {
            SymptomKind::Categorical { levels } => {
                let levels: Vec<String> = levels.iter().map(|l| quote(l)).collect();
                format!("{{ kind = \"categorical\", levels = [{}] }}", levels.join(", "))
            }
            other => quote(kind_name(other)),
        };
        out.push_str(&format!("{key} = {value}\n"));
    }
    out
}

pub fn schema_from_str(text: &str) -> Result<Vec<SymptomSpec>> {
    let t: toml::Table = text.parse().map_err(|e: toml::de::Error| FarvaError::Schema(e.to_string()))?;
    t.iter()
        .map(|(name, v)| Ok(SymptomSpec::new(name.clone(), kind_from_toml(name, v)?)))
        .collect()
}

pub fn read_schema(path: &Path) -> Result<Vec<SymptomSpec>> {
    schema_from_str(&std::fs::read_to_string(path)?)
}

pub fn write_schema(path: &Path, schema: &[SymptomSpec]) -> Result<()> {
    std::fs::write(path, schema_to_string(schema))?;
    Ok(())
}

// ---------------------------------------------------------------- dataset

/// Read a dataset CSV. Symptoms are matched to `schema` by name, so the file
/// may order them freely. `covariates` picks `x_` columns by name (without
/// the prefix); the design matrix is `[1, covariates...]`. When `n_causes`
/// is `None` it is the largest cause present.
pub fn read_dataset_from<R: Read>(
    reader: R,
    schema: &[SymptomSpec],
    covariates: &[String],
    n_causes: Option<usize>,
) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    let find = |name: &str| header.iter().position(|h| h == name);
    let id_col = find("id").ok_or_else(|| FarvaError::Schema("missing `id` column".into()))?;
    let cause_col = find("cause").ok_or_else(|| FarvaError::Schema("missing `cause` column".into()))?;
    let cov_cols = covariates
        .iter()
        .map(|c| {
            find(&format!("{COVARIATE_PREFIX}{c}"))
                .ok_or_else(|| FarvaError::Schema(format!("covariate column `{COVARIATE_PREFIX}{c}` not found")))
        })
        .collect::<Result<Vec<_>>>()?;
    let sym_cols = schema
        .iter()
        .map(|s| find(&s.name).ok_or_else(|| FarvaError::Schema(format!("symptom `{}` not found in data", s.name))))
        .collect::<Result<Vec<_>>>()?;
    for h in &header {
        let known = h == "id" || h == "cause" || h.starts_with(COVARIATE_PREFIX) || schema.iter().any(|s| &s.name == h);
        if !known {
            return Err(FarvaError::Schema(format!("column `{h}` is not declared in the schema")));
        }
    }

    let mut ids = Vec::new();
    let mut labels = Vec::new();
    let mut xs = Vec::new();
    let mut rows = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let at = |c: usize| rec.get(c).unwrap_or("");
        let row_err = |what: &str, v: &str| parse_err(format!("row {}: {what} `{v}`", line + 1));
        ids.push(at(id_col).to_string());
        let cause = at(cause_col);
        labels.push(if cause.is_empty() {
            None
        } else {
            let c: usize = cause.parse().map_err(|_| row_err("invalid cause", cause))?;
            if c == 0 {
                return Err(row_err("causes are numbered from 1, got", cause));
            }
            Some(c - 1)
        });
        xs.push(1.0);
        for &c in &cov_cols {
            let v = at(c);
            xs.push(v.parse::<f64>().map_err(|_| row_err("invalid covariate", v))?);
        }
        let mut raw = Vec::with_capacity(schema.len());
        for (spec, &c) in schema.iter().zip(&sym_cols) {
            let v = at(c);
            raw.push(if v.is_empty() {
                RawValue::Missing
            } else if matches!(spec.kind, SymptomKind::Categorical { .. }) {
                RawValue::Label(v.to_string())
            } else {
                RawValue::Number(v.parse().map_err(|_| row_err(&format!("invalid value for `{}`", spec.name), v))?)
            });
        }
        rows.push(raw);
    }
    let n = ids.len();
    let b = covariates.len() + 1;
    let x = DMatrix::from_row_slice(n, b, &xs);
    let n_causes = match n_causes {
        Some(c) => c,
        None => labels
            .iter()
            .flatten()
            .max()
            .map(|c| c + 1)
            .ok_or_else(|| parse_err("no labelled rows; the number of causes cannot be inferred"))?,
    };
    Dataset::from_raw(schema.to_vec(), ids, covariates.to_vec(), x, &rows, labels, n_causes)
}

pub fn read_dataset(
    path: &Path,
    schema: &[SymptomSpec],
    covariates: &[String],
    n_causes: Option<usize>,
) -> Result<Dataset> {
    read_dataset_from(BufReader::new(File::open(path)?), schema, covariates, n_causes)
}

/// Shortest decimal that parses back to the same f64.
fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

pub fn write_dataset_to<W: Write>(writer: W, data: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["id".to_string(), "cause".to_string()];
    header.extend(data.covariate_names.iter().map(|c| format!("{COVARIATE_PREFIX}{c}")));
    header.extend(data.schema.iter().map(|s| s.name.clone()));
    w.write_record(&header).map_err(csv_err)?;
    for i in 0..data.n() {
        let mut rec = vec![
            data.ids[i].clone(),
            data.labels[i].map(|c| (c + 1).to_string()).unwrap_or_default(),
        ];
        for b in 1..data.b() {
            rec.push(fmt_f64(data.x[(i, b)]));
        }
        for k in 0..data.schema.len() {
            rec.push(match data.raw_value(i, k) {
                RawValue::Missing => String::new(),
                RawValue::Number(v) => fmt_f64(v),
                RawValue::Label(l) => l,
            });
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_dataset(path: &Path, data: &Dataset) -> Result<()> {
    write_dataset_to(BufWriter::new(File::create(path)?), data)
}

/// `id → cause` pairs (0-based) from any CSV with `id` and `cause` columns.
pub fn read_labels(path: &Path) -> Result<Vec<(String, usize)>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(csv_err)?;
    let header = rdr.headers().map_err(csv_err)?.clone();
    let id = header.iter().position(|h| h == "id").ok_or_else(|| parse_err("missing `id` column"))?;
    let cause = header.iter().position(|h| h == "cause").ok_or_else(|| parse_err("missing `cause` column"))?;
    rdr.records()
        .map(|rec| {
            let rec = rec.map_err(csv_err)?;
            let c: usize = rec[cause]
                .parse()
                .map_err(|_| parse_err(format!("row `{}` has no valid cause", &rec[id])))?;
            if c == 0 {
                return Err(parse_err("causes are numbered from 1"));
            }
            Ok((rec[id].to_string(), c - 1))
        })
        .collect()
}

// ---------------------------------------------------------------- truth

pub fn write_truth(path: &Path, truth: &GroundTruth) -> Result<()> {
    let f = BufWriter::new(File::create(path)?);
    serde_json::to_writer(f, truth).map_err(|e| parse_err(e.to_string()))
}

pub fn read_truth(path: &Path) -> Result<GroundTruth> {
    serde_json::from_reader(BufReader::new(File::open(path)?)).map_err(|e| parse_err(e.to_string()))
}

// ---------------------------------------------------------------- posterior

/// Everything needed to reuse a fitted chain, apart from the snapshots.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorHeader {
    pub meta: ChainMeta,
    pub hyper: Hyperparameters,
    pub schema: Vec<SymptomSpec>,
    /// Expanded columns with their training scales.
    pub columns: Vec<Column>,
    pub covariate_names: Vec<String>,
    pub n_causes: usize,
    pub n_rows: usize,
    pub n_factors: usize,
    pub n_basis: usize,
    pub n_snapshots: usize,
    /// Posterior mean column norms of Δ.
    pub shrinkage: Vec<f64>,
    /// Posterior mean squared column norms of Λ at the mean covariate row.
    pub factor_contribution: Vec<f64>,
}

impl PosteriorHeader {
    fn p(&self) -> usize {
        self.columns.len()
    }

    fn b(&self) -> usize {
        self.covariate_names.len() + 1
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorFile {
    pub header: PosteriorHeader,
    pub samples: PosteriorSamples,
}

fn put_f64s<W: Write>(w: &mut W, vals: &[f64]) -> Result<()> {
    for v in vals {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn put_mats<W: Write>(w: &mut W, mats: &[DMatrix<f64>]) -> Result<()> {
    mats.iter().try_for_each(|m| put_f64s(w, m.as_slice()))
}

fn write_snapshot<W: Write>(w: &mut W, s: &ModelState) -> Result<()> {
    put_mats(w, &s.theta)?;
    put_f64s(w, s.delta.as_slice())?;
    put_f64s(w, s.phi.as_slice())?;
    put_f64s(w, s.delta_mg.as_slice())?;
    put_f64s(w, s.tau.as_slice())?;
    put_mats(w, &s.beta)?;
    put_f64s(w, s.mu_beta.as_slice())?;
    put_mats(w, &s.sigma_beta)?;
    put_mats(w, &s.alpha)?;
    put_f64s(w, s.mu_alpha.as_slice())?;
    put_mats(w, &s.sigma_alpha)?;
    put_f64s(w, s.sigma2.as_slice())?;
    put_f64s(w, s.z.as_slice())?;
    put_f64s(w, s.eta.as_slice())?;
    for &c in &s.labels {
        w.write_all(&(c as u32).to_le_bytes())?;
    }
    put_f64s(w, s.pi.as_slice())
}

struct Cursor<R: Read> {
    inner: R,
}

impl<R: Read> Cursor<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner
            .read_exact(&mut buf)
            .map_err(|_| parse_err("posterior file is truncated"))?;
        Ok(buf)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }

    fn mat(&mut self, r: usize, c: usize) -> Result<DMatrix<f64>> {
        let mut v = Vec::with_capacity(r * c);
        for _ in 0..r * c {
            v.push(f64::from_le_bytes(self.bytes()?));
        }
        Ok(DMatrix::from_vec(r, c, v))
    }

    fn vec(&mut self, n: usize) -> Result<DVector<f64>> {
        Ok(DVector::from_vec(self.mat(n, 1)?.as_slice().to_vec()))
    }

    fn mats(&mut self, count: usize, r: usize, c: usize) -> Result<Vec<DMatrix<f64>>> {
        (0..count).map(|_| self.mat(r, c)).collect()
    }
}

fn read_snapshot<R: Read>(cur: &mut Cursor<R>, h: &PosteriorHeader) -> Result<ModelState> {
    let (c, p, k, l, b, n) = (h.n_causes, h.p(), h.n_factors, h.n_basis, h.b(), h.n_rows);
    Ok(ModelState {
        theta: cur.mats(c, p, l)?,
        delta: cur.mat(p, l)?,
        phi: cur.mat(p, l)?,
        delta_mg: cur.vec(l)?,
        tau: cur.vec(l)?,
        beta: cur.mats(c, l * k, b)?,
        mu_beta: cur.mat(l * k, b)?,
        sigma_beta: cur.mats(l * k, b, b)?,
        alpha: cur.mats(c, k, b)?,
        mu_alpha: cur.mat(k, b)?,
        sigma_alpha: cur.mats(k, b, b)?,
        sigma2: cur.vec(p)?,
        z: cur.mat(n, p)?,
        eta: cur.mat(n, k)?,
        labels: (0..n).map(|_| cur.u32().map(|v| v as usize)).collect::<Result<_>>()?,
        pi: cur.vec(c)?,
    })
}

pub fn write_posterior_to<W: Write>(mut w: W, file: &PosteriorFile) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&ENDIAN_MARK.to_le_bytes())?;
    let header = serde_json::to_vec(&file.header).map_err(|e| parse_err(e.to_string()))?;
    w.write_all(&(header.len() as u64).to_le_bytes())?;
    w.write_all(&header)?;
    for s in &file.samples.snapshots {
        write_snapshot(&mut w, s)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_posterior_from<R: Read>(r: R) -> Result<PosteriorFile> {
    let mut cur = Cursor { inner: r };
    if &cur.bytes::<8>()? != MAGIC {
        return Err(parse_err("not a posterior file (bad magic)"));
    }
    let version = cur.u32()?;
    if version != FORMAT_VERSION {
        return Err(parse_err(format!("unsupported posterior format version {version}")));
    }
    if cur.u32()? != ENDIAN_MARK {
        return Err(parse_err("posterior file has an unexpected byte order"));
    }
    let len = cur.u64()? as usize;
    let mut buf = vec![0u8; len];
    cur.inner
        .read_exact(&mut buf)
        .map_err(|_| parse_err("posterior header is truncated"))?;
    let header: PosteriorHeader = serde_json::from_slice(&buf).map_err(|e| parse_err(e.to_string()))?;
    let snapshots = (0..header.n_snapshots)
        .map(|_| read_snapshot(&mut cur, &header))
        .collect::<Result<Vec<_>>>()?;
    let mut rest = [0u8; 1];
    if cur.inner.read(&mut rest)? != 0 {
        return Err(parse_err("trailing bytes after the last snapshot"));
    }
    let meta = header.meta.clone();
    Ok(PosteriorFile {
        header,
        samples: PosteriorSamples { snapshots, meta },
    })
}

pub fn write_posterior(path: &Path, file: &PosteriorFile) -> Result<()> {
    write_posterior_to(BufWriter::new(File::create(path)?), file)
}

pub fn read_posterior(path: &Path) -> Result<PosteriorFile> {
    read_posterior_from(BufReader::new(File::open(path)?))
}

// ---------------------------------------------------------------- outputs

pub fn write_predictions(path: &Path, ids: &[String], post: &CodPosterior) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let c = post.probabilities.first().map_or(0, Vec::len);
    let mut header = vec!["id".to_string(), "top_cause".to_string()];
    header.extend((1..=c).map(|k| format!("p_{k}")));
    w.write_record(&header).map_err(csv_err)?;
    for ((id, probs), top) in ids.iter().zip(&post.probabilities).zip(&post.top_cause) {
        let mut rec = vec![id.clone(), (top + 1).to_string()];
        rec.extend(probs.iter().map(|p| fmt_f64(*p)));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Returns ids and the per-row simplices.
pub fn read_predictions(path: &Path) -> Result<(Vec<String>, CodPosterior)> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(csv_err)?;
    let header = rdr.headers().map_err(csv_err)?.clone();
    if header.get(0) != Some("id") || header.get(1) != Some("top_cause") {
        return Err(parse_err("predictions need `id,top_cause,p_1,...` columns"));
    }
    let mut ids = Vec::new();
    let mut probs = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        ids.push(rec[0].to_string());
        probs.push(
            rec.iter()
                .skip(2)
                .map(|v| v.parse::<f64>().map_err(|_| parse_err(format!("bad probability `{v}`"))))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    Ok((ids, CodPosterior::from_probabilities(probs)))
}

pub fn write_csmf(path: &Path, csmf: &CsmfEstimate) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["cause", "mean", "lo", "hi"]).map_err(csv_err)?;
    for c in 0..csmf.mean.len() {
        w.write_record([
            (c + 1).to_string(),
            fmt_f64(csmf.mean[c]),
            fmt_f64(csmf.lo[c]),
            fmt_f64(csmf.hi[c]),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csmf(path: &Path) -> Result<CsmfEstimate> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(csv_err)?;
    let mut out = CsmfEstimate {
        mean: vec![],
        lo: vec![],
        hi: vec![],
    };
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let num = |i: usize| rec[i].parse::<f64>().map_err(|_| parse_err(format!("bad CSMF value `{}`", &rec[i])));
        out.mean.push(num(1)?);
        out.lo.push(num(2)?);
        out.hi.push(num(3)?);
    }
    Ok(out)
}

/// Metrics in `key = value` lines.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub acc1: f64,
    pub acc_csmf: f64,
    pub ccc: f64,
}

impl MetricsReport {
    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("plain numbers serialize")
    }

    pub fn from_text(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| parse_err(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::tiny_dataset;
    use crate::model::{init_state, Hyperparameters};
    use crate::numerics::ChainRng;

    fn mixed_schema() -> Vec<SymptomSpec> {
        vec![
            SymptomSpec::new("fever", SymptomKind::Binary),
            SymptomSpec::new("weight", SymptomKind::ContinuousLog),
            SymptomSpec::new("days", SymptomKind::Count),
            SymptomSpec::new(
                "season",
                SymptomKind::Categorical {
                    levels: vec!["dry".into(), "wet".into(), "cold".into()],
                },
            ),
            SymptomSpec::new("temp", SymptomKind::Continuous),
        ]
    }

    #[test]
    fn schema_round_trip_keeps_order() {
        let s = mixed_schema();
        let text = schema_to_string(&s);
        assert_eq!(schema_from_str(&text).unwrap(), s);
        assert!(text.find("fever").unwrap() < text.find("weight").unwrap());
        assert!(schema_from_str("a = \"ordinal\"").is_err());
        assert!(schema_from_str("a = { kind = \"categorical\", levels = [\"x\"] }").is_err());
    }

    const CSV: &str = "id,cause,x_age,season,fever,weight,days,temp\n\
        a,1,0.5,wet,1,2.5,3,-1\n\
        b,,1.5,,0,,0,2\n\
        c,2,2,dry,,10,1,0.25\n";

    #[test]
    fn dataset_round_trip() {
        let schema = mixed_schema();
        let d = read_dataset_from(CSV.as_bytes(), &schema, &["age".into()], None).unwrap();
        assert_eq!(d.n_causes, 2);
        assert_eq!(d.labels, vec![Some(0), None, Some(1)]);
        assert_eq!(d.x[(2, 1)], 2.0);
        assert_eq!(d.p(), 6);
        let mut buf = Vec::new();
        write_dataset_to(&mut buf, &d).unwrap();
        let back = read_dataset_from(buf.as_slice(), &schema, &["age".into()], Some(2)).unwrap();
        assert_eq!(back.s, d.s);
        assert_eq!(back.x, d.x);
        assert_eq!(back.labels, d.labels);
        assert_eq!(back.ids, d.ids);
        // intercept only when no covariates are selected
        let d0 = read_dataset_from(CSV.as_bytes(), &schema, &[], Some(3)).unwrap();
        assert_eq!(d0.b(), 1);
        assert_eq!(d0.n_causes, 3);
    }

    #[test]
    fn dataset_errors() {
        let schema = mixed_schema();
        assert!(read_dataset_from(CSV.as_bytes(), &schema, &["height".into()], None).is_err());
        let bad_cat = CSV.replace("wet", "humid");
        assert!(matches!(
            read_dataset_from(bad_cat.as_bytes(), &schema, &[], None),
            Err(FarvaError::UnknownCategory { .. })
        ));
        let bad_bin = CSV.replace("a,1,0.5,wet,1", "a,1,0.5,wet,2");
        assert!(matches!(
            read_dataset_from(bad_bin.as_bytes(), &schema, &[], None),
            Err(FarvaError::IncompatibleValue { .. })
        ));
        let extra = CSV.replace("temp\n", "temp,other\n");
        assert!(read_dataset_from(extra.as_bytes(), &schema, &[], None).is_err());
        let zero = CSV.replace("a,1,", "a,0,");
        assert!(read_dataset_from(zero.as_bytes(), &schema, &[], None).is_err());
        let mut short = schema.clone();
        short.push(SymptomSpec::new("cough", SymptomKind::Binary));
        assert!(matches!(
            read_dataset_from(CSV.as_bytes(), &short, &[], None),
            Err(FarvaError::Schema(_))
        ));
    }

    fn sample_file() -> PosteriorFile {
        let data = tiny_dataset(5, 4);
        let hyper = Hyperparameters::defaults(2, 4, 1).with_dims(2, 3);
        let mut rng = ChainRng::new(8);
        let snaps: Vec<ModelState> = (0..3).map(|_| init_state(&hyper, &data, &mut rng).unwrap()).collect();
        let meta = ChainMeta {
            iterations: 6,
            burn_in: 3,
            thinning: 1,
            seed: 8,
        };
        PosteriorFile {
            header: PosteriorHeader {
                meta: meta.clone(),
                hyper,
                schema: data.schema.clone(),
                columns: data.columns.clone(),
                covariate_names: vec![],
                n_causes: 2,
                n_rows: 5,
                n_factors: 2,
                n_basis: 3,
                n_snapshots: 3,
                shrinkage: vec![1.0, 0.5, 0.1],
                factor_contribution: vec![2.0, 1.0],
            },
            samples: PosteriorSamples { snapshots: snaps, meta },
        }
    }

    #[test]
    fn posterior_round_trip_is_exact() {
        let f = sample_file();
        let mut buf = Vec::new();
        write_posterior_to(&mut buf, &f).unwrap();
        assert_eq!(&buf[..8], MAGIC);
        let back = read_posterior_from(buf.as_slice()).unwrap();
        assert_eq!(back, f);
        let mut again = Vec::new();
        write_posterior_to(&mut again, &back).unwrap();
        assert_eq!(again, buf);
    }

    #[test]
    fn posterior_rejects_corruption() {
        let f = sample_file();
        let mut buf = Vec::new();
        write_posterior_to(&mut buf, &f).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_posterior_from(bad.as_slice()).is_err());
        assert!(read_posterior_from(&buf[..buf.len() - 3]).is_err());
        let mut long = buf.clone();
        long.push(0);
        assert!(read_posterior_from(long.as_slice()).is_err());
        let mut swapped = buf;
        swapped[12..16].reverse();
        assert!(read_posterior_from(swapped.as_slice()).is_err());
    }

    #[test]
    fn outputs_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let post = CodPosterior::from_probabilities(vec![vec![0.2, 0.8], vec![0.6, 0.4]]);
        let ids = vec!["a".to_string(), "b".to_string()];
        let p = dir.path().join("pred.csv");
        write_predictions(&p, &ids, &post).unwrap();
        let (ids2, post2) = read_predictions(&p).unwrap();
        assert_eq!(ids2, ids);
        assert_eq!(post2, post);
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("id,top_cause,p_1,p_2\na,2,"));

        let csmf = CsmfEstimate {
            mean: vec![0.25, 0.75],
            lo: vec![0.1, 0.6],
            hi: vec![0.4, 0.9],
        };
        let c = dir.path().join("csmf.csv");
        write_csmf(&c, &csmf).unwrap();
        assert_eq!(read_csmf(&c).unwrap(), csmf);

        let m = MetricsReport {
            acc1: 0.5,
            acc_csmf: 0.875,
            ccc: 1.0 / 3.0,
        };
        let text = m.to_text();
        assert!(text.contains("acc1 = 0.5"));
        assert_eq!(MetricsReport::from_text(&text).unwrap(), m);
    }
}
