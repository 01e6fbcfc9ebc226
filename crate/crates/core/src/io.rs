//! JSON and CSV encodings of moment sequences, models, value tables and
//! decomposition results.
//!
//! Complex scalars are written as `{"re", "im"}` pairs, frequency vectors as
//! `[[re, im], ...]`. Readers validate the whole document before returning, so
//! a malformed file never yields a partial object. Writers are deterministic:
//! maps are ordered and floats use the shortest round-trip representation.

use std::collections::{BTreeMap, BTreeSet};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::algebra::{MomentSequence, MultiIndex, Poly};
use crate::applications::{GridDecomposition, PolyLogModel, Spike};
use crate::decompose::DecompositionReport;
use crate::error::{Error, Result};
use crate::numlin::CMatrix;
use crate::orthobasis::border_basis;
use crate::polexp::{PolExpModel, PolExpTerm};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IndexedValue {
    #[serde(alias = "beta", alias = "gamma")]
    alpha: Vec<u32>,
    re: f64,
    im: f64,
}

#[derive(Serialize)]
struct Scalar {
    re: f64,
    im: f64,
}

impl From<Complex64> for Scalar {
    fn from(z: Complex64) -> Self {
        Scalar { re: z.re, im: z.im }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MomentsDoc {
    nvars: usize,
    moments: Vec<IndexedValue>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WeightEntry {
    beta: Vec<u32>,
    re: f64,
    im: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TermDoc {
    xi: Vec<[f64; 2]>,
    weight: Vec<WeightEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    nvars: usize,
    terms: Vec<TermDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ValuesDoc {
    nvars: usize,
    values: Vec<IndexedValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lambda: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    period: Option<Vec<f64>>,
}

/// A table of samples `h(γ)` on a downward-closed index set, with optional
/// interpolation bases and periods carried alongside.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueTable {
    pub values: MomentSequence,
    pub lambda: Option<Vec<f64>>,
    pub period: Option<Vec<f64>>,
}

fn check_nvars(nvars: usize) -> Result<()> {
    if nvars == 0 {
        return Err(Error::InvalidInput("nvars must be at least 1".into()));
    }
    Ok(())
}

fn check_finite(x: f64, what: &str) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::Parse(format!("non-finite {what}")))
    }
}

fn index_of(nvars: usize, entries: Vec<u32>) -> Result<MultiIndex> {
    if entries.len() != nvars {
        return Err(Error::DimensionMismatch {
            expected: nvars,
            found: entries.len(),
        });
    }
    Ok(MultiIndex::new(entries))
}

fn sequence_of(nvars: usize, entries: Vec<IndexedValue>) -> Result<MomentSequence> {
    check_nvars(nvars)?;
    let mut pairs = Vec::with_capacity(entries.len());
    for e in entries {
        let z = Complex64::new(check_finite(e.re, "real part")?, check_finite(e.im, "imaginary part")?);
        pairs.push((index_of(nvars, e.alpha)?, z));
    }
    MomentSequence::from_pairs(nvars, pairs)
}

fn indexed_entries(sigma: &MomentSequence) -> Vec<IndexedValue> {
    sigma
        .iter()
        .map(|(a, v)| IndexedValue {
            alpha: a.entries().to_vec(),
            re: v.re,
            im: v.im,
        })
        .collect()
}

fn to_pretty<T: Serialize>(doc: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(doc)?;
    s.push('\n');
    Ok(s)
}

/// Parses `{"nvars", "moments": [{"alpha", "re", "im"}]}`.
pub fn moments_from_json(text: &str) -> Result<MomentSequence> {
    let doc: MomentsDoc = serde_json::from_str(text)?;
    sequence_of(doc.nvars, doc.moments)
}

pub fn moments_to_json(sigma: &MomentSequence) -> Result<String> {
    to_pretty(&MomentsDoc {
        nvars: sigma.nvars(),
        moments: indexed_entries(sigma),
    })
}

fn weight_entries(p: &Poly) -> Vec<WeightEntry> {
    p.terms()
        .map(|(b, c)| WeightEntry {
            beta: b.entries().to_vec(),
            re: c.re,
            im: c.im,
        })
        .collect()
}

fn weight_of(nvars: usize, entries: Vec<WeightEntry>) -> Result<Poly> {
    let mut seen = BTreeSet::new();
    let mut terms = Vec::with_capacity(entries.len());
    for e in entries {
        let beta = index_of(nvars, e.beta)?;
        if !seen.insert(beta.clone()) {
            return Err(Error::DuplicateIndex(beta));
        }
        let c = Complex64::new(check_finite(e.re, "weight")?, check_finite(e.im, "weight")?);
        terms.push((beta, c));
    }
    Poly::from_terms(nvars, terms)
}

fn model_doc(model: &PolExpModel) -> ModelDoc {
    ModelDoc {
        nvars: model.nvars,
        terms: model
            .terms
            .iter()
            .map(|t| TermDoc {
                xi: t.xi.iter().map(|z| [z.re, z.im]).collect(),
                weight: weight_entries(&t.weight),
            })
            .collect(),
    }
}

/// Parses `{"nvars", "terms": [{"xi": [[re, im]], "weight": [{"beta", "re", "im"}]}]}`.
pub fn model_from_json(text: &str) -> Result<PolExpModel> {
    let doc: ModelDoc = serde_json::from_str(text)?;
    check_nvars(doc.nvars)?;
    let mut terms = Vec::with_capacity(doc.terms.len());
    for t in doc.terms {
        if t.xi.len() != doc.nvars {
            return Err(Error::DimensionMismatch {
                expected: doc.nvars,
                found: t.xi.len(),
            });
        }
        let xi = t
            .xi
            .iter()
            .map(|[re, im]| Ok(Complex64::new(check_finite(*re, "frequency")?, check_finite(*im, "frequency")?)))
            .collect::<Result<Vec<_>>>()?;
        terms.push(PolExpTerm::new(xi, weight_of(doc.nvars, t.weight)?));
    }
    PolExpModel::new(doc.nvars, terms)
}

pub fn model_to_json(model: &PolExpModel) -> Result<String> {
    to_pretty(&model_doc(model))
}

/// Parses `{"nvars", "values": [{"gamma", "re", "im"}], "lambda"?, "period"?}`.
pub fn values_from_json(text: &str) -> Result<ValueTable> {
    let doc: ValuesDoc = serde_json::from_str(text)?;
    let values = sequence_of(doc.nvars, doc.values)?;
    for (name, v) in [("lambda", &doc.lambda), ("period", &doc.period)] {
        if let Some(v) = v {
            if v.len() != doc.nvars {
                return Err(Error::InvalidInput(format!(
                    "{name} has {} entries for {} variables",
                    v.len(),
                    doc.nvars
                )));
            }
            for x in v {
                check_finite(*x, name)?;
            }
        }
    }
    Ok(ValueTable {
        values,
        lambda: doc.lambda,
        period: doc.period,
    })
}

pub fn values_to_json(values: &MomentSequence) -> Result<String> {
    #[derive(Serialize)]
    struct Entry {
        gamma: Vec<u32>,
        re: f64,
        im: f64,
    }
    #[derive(Serialize)]
    struct Doc {
        nvars: usize,
        values: Vec<Entry>,
    }
    to_pretty(&Doc {
        nvars: values.nvars(),
        values: values
            .iter()
            .map(|(g, v)| Entry {
                gamma: g.entries().to_vec(),
                re: v.re,
                im: v.im,
            })
            .collect(),
    })
}

fn csv_error(e: csv::Error) -> Error {
    Error::Parse(format!("csv: {e}"))
}

/// Parses a real-valued grid table with header `gamma_1,...,gamma_n,value`.
pub fn values_from_csv(text: &str) -> Result<ValueTable> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = reader.headers().map_err(csv_error)?.clone();
    let n = header.len().saturating_sub(1);
    check_nvars(n)?;
    let expected: Vec<String> = (1..=n).map(|i| format!("gamma_{i}")).chain(["value".to_string()]).collect();
    if header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(Error::Parse(format!(
            "csv header must be {}, found {}",
            expected.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut pairs = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(csv_error)?;
        let bad = |what: &str| Error::Parse(format!("csv row {}: invalid {what}", line + 2));
        let gamma = record
            .iter()
            .take(n)
            .map(|s| s.parse::<u32>().map_err(|_| bad("exponent")))
            .collect::<Result<Vec<u32>>>()?;
        let value: f64 = record[n].parse().map_err(|_| bad("value"))?;
        pairs.push((MultiIndex::new(gamma), Complex64::new(check_finite(value, "value")?, 0.0)));
    }
    Ok(ValueTable {
        values: MomentSequence::from_pairs(n, pairs)?,
        lambda: None,
        period: None,
    })
}

/// Writes a real-valued table as CSV; fails if any value has a non-zero
/// imaginary part.
pub fn values_to_csv(values: &MomentSequence) -> Result<String> {
    let n = values.nvars();
    let mut writer = csv::Writer::from_writer(Vec::new());
    let header: Vec<String> = (1..=n).map(|i| format!("gamma_{i}")).chain(["value".to_string()]).collect();
    writer.write_record(&header).map_err(csv_error)?;
    for (g, v) in values.iter() {
        if v.im != 0.0 {
            return Err(Error::InvalidInput(format!("value at {g} is not real; csv holds real tables only")));
        }
        let row: Vec<String> = g.entries().iter().map(u32::to_string).chain([v.re.to_string()]).collect();
        writer.write_record(&row).map_err(csv_error)?;
    }
    let bytes = writer.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
}

fn matrix_rows(m: &CMatrix) -> Vec<Vec<Scalar>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| Scalar::from(m[(i, j)])).collect())
        .collect()
}

/// Serializes a full decomposition report: the model, rank, separating form,
/// multiplication matrices, residuals, multiplicities, bases and diagnostics.
pub fn report_to_json(report: &DecompositionReport) -> Result<String> {
    to_pretty(&report_value(report))
}

fn report_value(report: &DecompositionReport) -> serde_json::Value {
    #[derive(Serialize)]
    struct Basis {
        b: Vec<Vec<u32>>,
        b_prime: Vec<Vec<u32>>,
        border: Vec<Vec<WeightEntry>>,
        consumed_degree: u32,
    }
    #[derive(Serialize)]
    struct Doc<'a> {
        model: ModelDoc,
        rank: usize,
        separating_form: &'a [f64],
        mult_matrices: Vec<Vec<Vec<Scalar>>>,
        eigen_condition: f64,
        moment_residual: f64,
        multiplicity_profile: &'a [usize],
        basis: Basis,
        diagnostics: &'a BTreeMap<String, f64>,
        seed: u64,
    }
    let exps = |v: &[MultiIndex]| v.iter().map(|a| a.entries().to_vec()).collect();
    let doc = Doc {
        model: model_doc(&report.model),
        rank: report.rank,
        separating_form: &report.separating_form,
        mult_matrices: report.mult_matrices.iter().map(matrix_rows).collect(),
        eigen_condition: report.eigen_condition,
        moment_residual: report.moment_residual,
        multiplicity_profile: &report.multiplicity_profile,
        basis: Basis {
            b: exps(&report.basis.b),
            b_prime: exps(&report.basis.b_prime),
            border: border_basis(&report.basis).iter().map(weight_entries).collect(),
            consumed_degree: report.basis.consumed_degree,
        },
        diagnostics: &report.diagnostics,
        seed: report.seed,
    };
    serde_json::to_value(doc).unwrap_or(serde_json::Value::Null)
}

/// `{"nvars", "lambda", "terms": [{"alpha", "beta", "re", "im"}]}`.
pub fn polylog_to_json(model: &PolyLogModel, lambda: &[Complex64]) -> Result<String> {
    #[derive(Serialize)]
    struct Term {
        alpha: Vec<u32>,
        beta: Vec<u32>,
        re: f64,
        im: f64,
    }
    #[derive(Serialize)]
    struct Doc {
        nvars: usize,
        lambda: Vec<[f64; 2]>,
        terms: Vec<Term>,
    }
    to_pretty(&Doc {
        nvars: model.nvars,
        lambda: lambda.iter().map(|z| [z.re, z.im]).collect(),
        terms: model
            .terms
            .iter()
            .map(|t| Term {
                alpha: t.alpha.entries().to_vec(),
                beta: t.beta.entries().to_vec(),
                re: t.coeff.re,
                im: t.coeff.im,
            })
            .collect(),
    })
}

/// `{"nvars", "period", "spikes": [{"position", "coefficients": [{"order", "re", "im"}]}]}`.
pub fn spikes_to_json(spikes: &[Spike], periods: &[f64]) -> Result<String> {
    #[derive(Serialize)]
    struct Coeff {
        order: Vec<u32>,
        re: f64,
        im: f64,
    }
    #[derive(Serialize)]
    struct SpikeDoc {
        position: Vec<f64>,
        coefficients: Vec<Coeff>,
    }
    #[derive(Serialize)]
    struct Doc<'a> {
        nvars: usize,
        period: &'a [f64],
        spikes: Vec<SpikeDoc>,
    }
    to_pretty(&Doc {
        nvars: periods.len(),
        period: periods,
        spikes: spikes
            .iter()
            .map(|s| SpikeDoc {
                position: s.position.clone(),
                coefficients: s
                    .coefficients
                    .iter()
                    .map(|(o, c)| Coeff {
                        order: o.entries().to_vec(),
                        re: c.re,
                        im: c.im,
                    })
                    .collect(),
            })
            .collect(),
    })
}

/// Grid reconstruction terms `g(x) e^{f·x}` together with the underlying
/// report.
pub fn grid_to_json(grid: &GridDecomposition, steps: &[f64]) -> Result<String> {
    #[derive(Serialize)]
    struct Term {
        f: Vec<[f64; 2]>,
        g: Vec<WeightEntry>,
    }
    #[derive(Serialize)]
    struct Doc<'a> {
        nvars: usize,
        period: &'a [f64],
        terms: Vec<Term>,
        note: &'a str,
        report: serde_json::Value,
    }
    to_pretty(&Doc {
        nvars: steps.len(),
        period: steps,
        terms: grid
            .terms
            .iter()
            .map(|t| Term {
                f: t.f.iter().map(|z| [z.re, z.im]).collect(),
                g: weight_entries(&t.g),
            })
            .collect(),
        note: grid.note,
        report: report_value(&grid.report),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const EX40: &str = r#"{"nvars": 2, "moments": [
        {"alpha": [0,0], "re": 4, "im": 0},
        {"alpha": [1,0], "re": 5, "im": 0},
        {"alpha": [0,1], "re": 7, "im": 0}]}"#;

    #[test]
    fn moments_round_trip() {
        let s = moments_from_json(EX40).unwrap();
        assert_eq!(s.len(), 3);
        let again = moments_from_json(&moments_to_json(&s).unwrap()).unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn duplicate_and_malformed_moments_are_rejected() {
        let dup = r#"{"nvars":1,"moments":[{"alpha":[0],"re":1,"im":0},{"alpha":[0],"re":2,"im":0}]}"#;
        assert!(matches!(moments_from_json(dup), Err(Error::DuplicateIndex(_))));
        let gap = r#"{"nvars":1,"moments":[{"alpha":[1],"re":1,"im":0}]}"#;
        assert!(matches!(moments_from_json(gap), Err(Error::NotDownwardClosed { .. })));
        let dim = r#"{"nvars":2,"moments":[{"alpha":[0],"re":1,"im":0}]}"#;
        assert!(matches!(moments_from_json(dim), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(moments_from_json("{"), Err(Error::Parse(_))));
        let extra = r#"{"nvars":1,"moments":[],"x":1}"#;
        assert!(matches!(moments_from_json(extra), Err(Error::Parse(_))));
    }

    #[test]
    fn model_round_trip() {
        let text = r#"{"nvars":1,"terms":[{"xi":[[2,0.5]],"weight":[{"beta":[0],"re":1,"im":0},{"beta":[1],"re":0,"im":-3}]}]}"#;
        let m = model_from_json(text).unwrap();
        assert_eq!(m.terms[0].weight.len(), 2);
        assert_eq!(model_from_json(&model_to_json(&m).unwrap()).unwrap(), m);
        let dup = r#"{"nvars":1,"terms":[{"xi":[[2,0]],"weight":[{"beta":[0],"re":1,"im":0},{"beta":[0],"re":1,"im":0}]}]}"#;
        assert!(matches!(model_from_json(dup), Err(Error::DuplicateIndex(_))));
    }

    #[test]
    fn csv_round_trip_and_header_check() {
        let text = "gamma_1,gamma_2,value\n0,0,1.5\n1,0,2\n0,1,-3\n";
        let t = values_from_csv(text).unwrap();
        assert_eq!(t.values.nvars(), 2);
        assert_eq!(t.values.get(&MultiIndex::from([0, 1])), Some(Complex64::new(-3.0, 0.0)));
        let out = values_to_csv(&t.values).unwrap();
        assert_eq!(values_from_csv(&out).unwrap(), t);
        assert!(matches!(values_from_csv("g1,value\n0,1\n"), Err(Error::Parse(_))));
        assert!(matches!(values_from_csv("gamma_1,value\n0,abc\n"), Err(Error::Parse(_))));
    }

    #[test]
    fn values_carry_optional_fields() {
        let text = r#"{"nvars":1,"values":[{"gamma":[0],"re":1,"im":0}],"lambda":[2]}"#;
        let t = values_from_json(text).unwrap();
        assert_eq!(t.lambda, Some(vec![2.0]));
        let bad = r#"{"nvars":1,"values":[],"lambda":[2,3]}"#;
        assert!(matches!(values_from_json(bad), Err(Error::InvalidInput(_))));
    }
}
