//! JSON interchange formats. Rationals travel as `"p/q"` strings; complex
//! numbers as `[re, im]` pairs inside matrices and vectors.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::embedding::QuadricEmbedding;
use crate::error::{Error, Result};
use crate::gaussian::{format_rational, parse_rational, GaussianRational, Rational};
use crate::linalg::CMatrix;
use crate::quadric::{HypersurfaceModel, ModelForm, QuadricAutomorphism, SignatureForm};
use crate::series::{ComplexSeries, Domain, HoloKey, HoloMapJet, MultiIndex, RealKey, TruncatedHoloSeries, TruncatedRealSeries};

/// Parses JSON text; syntax errors carry line and column.
pub fn parse<T: DeserializeOwned>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
}

pub fn to_pretty<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report types serialize")
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermJson {
    pub alpha: Vec<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<Vec<u32>>,
    pub gamma: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<u32>,
    pub re: String,
    pub im: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeriesKind {
    Real,
    Complex,
    Holo,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainJson {
    #[default]
    Zw,
    Zu,
}

fn is_zw(d: &DomainJson) -> bool {
    *d == DomainJson::Zw
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeriesJson {
    pub n: usize,
    #[serde(rename = "D")]
    pub cap: u32,
    pub kind: SeriesKind,
    #[serde(default, skip_serializing_if = "is_zw")]
    pub domain: DomainJson,
    pub terms: Vec<TermJson>,
}

fn coeff_strings(c: &GaussianRational) -> (String, String) {
    (format_rational(&c.re), format_rational(&c.im))
}

fn parse_coeff(re: &str, im: &str) -> Result<GaussianRational> {
    Ok(GaussianRational::new(parse_rational(re)?, parse_rational(im)?))
}

fn multi_index(v: &[u32], n: usize) -> Result<MultiIndex> {
    if v.len() != n {
        return Err(Error::Parse(format!("multi-index {v:?} has length {}, expected n = {n}", v.len())));
    }
    Ok(MultiIndex(v.to_vec()))
}

pub fn complex_to_json(s: &ComplexSeries, kind: SeriesKind) -> SeriesJson {
    let terms = s
        .terms()
        .iter()
        .map(|(k, c)| {
            let (re, im) = coeff_strings(c);
            TermJson {
                alpha: k.alpha.0.clone(),
                beta: Some(k.beta.0.clone()),
                gamma: k.gamma,
                delta: Some(k.delta),
                re,
                im,
            }
        })
        .collect();
    let domain = match s.domain() {
        Domain::ZW => DomainJson::Zw,
        Domain::ZU => DomainJson::Zu,
    };
    SeriesJson { n: s.n(), cap: s.cap(), kind, domain, terms }
}

pub fn complex_from_json(j: &SeriesJson) -> Result<ComplexSeries> {
    if j.kind == SeriesKind::Holo {
        return Ok(holo_from_json(j)?.to_complex());
    }
    let domain = match j.domain {
        DomainJson::Zw => Domain::ZW,
        DomainJson::Zu => Domain::ZU,
    };
    let terms = j
        .terms
        .iter()
        .map(|t| {
            let beta = t.beta.as_deref().ok_or_else(|| Error::Parse("real/complex term without beta".into()))?;
            let key = RealKey::new(multi_index(&t.alpha, j.n)?, multi_index(beta, j.n)?, t.gamma, t.delta.unwrap_or(0));
            Ok((key, parse_coeff(&t.re, &t.im)?))
        })
        .collect::<Result<Vec<_>>>()?;
    ComplexSeries::from_terms(j.n, j.cap, domain, terms)
}

pub fn real_to_json(s: &TruncatedRealSeries) -> SeriesJson {
    complex_to_json(s.as_complex(), SeriesKind::Real)
}

pub fn real_from_json(j: &SeriesJson) -> Result<TruncatedRealSeries> {
    if j.kind != SeriesKind::Real {
        return Err(Error::Parse(format!("expected a real series, got kind {:?}", j.kind)));
    }
    TruncatedRealSeries::from_complex(complex_from_json(j)?)
}

pub fn holo_to_json(s: &TruncatedHoloSeries) -> SeriesJson {
    let terms = s
        .terms()
        .iter()
        .map(|(k, c)| {
            let (re, im) = coeff_strings(c);
            TermJson { alpha: k.alpha.0.clone(), beta: None, gamma: k.gamma, delta: None, re, im }
        })
        .collect();
    SeriesJson { n: s.n(), cap: s.cap(), kind: SeriesKind::Holo, domain: DomainJson::Zw, terms }
}

pub fn holo_from_json(j: &SeriesJson) -> Result<TruncatedHoloSeries> {
    if j.kind != SeriesKind::Holo {
        return Err(Error::Parse(format!("expected a holomorphic series, got kind {:?}", j.kind)));
    }
    let terms = j
        .terms
        .iter()
        .map(|t| {
            if t.beta.as_ref().map_or(false, |b| b.iter().any(|&x| x != 0)) || t.delta.unwrap_or(0) != 0 {
                return Err(Error::Parse("holomorphic term with antiholomorphic exponents".into()));
            }
            Ok((HoloKey::new(multi_index(&t.alpha, j.n)?, t.gamma), parse_coeff(&t.re, &t.im)?))
        })
        .collect::<Result<Vec<_>>>()?;
    TruncatedHoloSeries::from_terms(j.n, j.cap, terms)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MapJson {
    pub n: usize,
    #[serde(rename = "D")]
    pub cap: u32,
    pub components: Vec<SeriesJson>,
}

pub fn map_to_json(h: &HoloMapJet) -> MapJson {
    MapJson { n: h.source_n, cap: h.cap, components: h.components.iter().map(holo_to_json).collect() }
}

pub fn map_from_json(j: &MapJson) -> Result<HoloMapJet> {
    let comps = j.components.iter().map(holo_from_json).collect::<Result<Vec<_>>>()?;
    HoloMapJet::new(j.n, j.cap, comps)
}

pub type ComplexJson = [String; 2];

pub fn gaussian_to_json(c: &GaussianRational) -> ComplexJson {
    let (re, im) = coeff_strings(c);
    [re, im]
}

pub fn gaussian_from_json(c: &ComplexJson) -> Result<GaussianRational> {
    parse_coeff(&c[0], &c[1])
}

pub fn matrix_to_json(m: &CMatrix) -> Vec<Vec<ComplexJson>> {
    m.to_rows().iter().map(|r| r.iter().map(gaussian_to_json).collect()).collect()
}

pub fn matrix_from_json(rows: &[Vec<ComplexJson>]) -> Result<CMatrix> {
    let width = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != width) {
        return Err(Error::Parse("ragged matrix".into()));
    }
    let data = rows.iter().map(|r| r.iter().map(gaussian_from_json).collect::<Result<Vec<_>>>()).collect::<Result<Vec<_>>>()?;
    Ok(CMatrix::from_rows(data))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AutomorphismJson {
    pub lam: String,
    pub r: String,
    pub a: Vec<ComplexJson>,
    #[serde(rename = "U")]
    pub u: Vec<Vec<ComplexJson>>,
    pub sigma: i32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ell: Option<usize>,
}

pub fn automorphism_to_json(t: &QuadricAutomorphism) -> AutomorphismJson {
    AutomorphismJson {
        lam: format_rational(&t.lam),
        r: format_rational(&t.r),
        a: t.a.iter().map(gaussian_to_json).collect(),
        u: matrix_to_json(&t.u),
        sigma: t.sigma,
        ell: Some(t.form.ell),
    }
}

/// `ell` in the file wins over `default_ell`; `n` is the length of `a`.
pub fn automorphism_from_json(j: &AutomorphismJson, default_ell: Option<usize>, cap: u32) -> Result<QuadricAutomorphism> {
    let ell = j
        .ell
        .or(default_ell)
        .ok_or_else(|| Error::Precondition("automorphism needs a signature (ell)".into()))?;
    let form = SignatureForm::new(j.a.len(), ell)?;
    let a = j.a.iter().map(gaussian_from_json).collect::<Result<Vec<_>>>()?;
    let lam: Rational = parse_rational(&j.lam)?;
    QuadricAutomorphism::new(lam, parse_rational(&j.r)?, a, matrix_from_json(&j.u)?, j.sigma, form, cap)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKindJson {
    Full,
    Graph,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelJson {
    pub ell: usize,
    pub kind: ModelKindJson,
    pub series: SeriesJson,
}

pub fn model_to_json(m: &HypersurfaceModel) -> ModelJson {
    let kind = match m.kind {
        ModelForm::Full => ModelKindJson::Full,
        ModelForm::Graph => ModelKindJson::Graph,
    };
    ModelJson { ell: m.form.ell, kind, series: real_to_json(&m.a) }
}

pub fn model_from_json(j: &ModelJson) -> Result<HypersurfaceModel> {
    let a = real_from_json(&j.series)?;
    let kind = match j.kind {
        ModelKindJson::Full => ModelForm::Full,
        ModelKindJson::Graph => ModelForm::Graph,
    };
    HypersurfaceModel::new(SignatureForm::new(a.n(), j.ell)?, a, kind)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormJson {
    pub n: usize,
    pub ell: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingJson {
    pub target: FormJson,
    pub map: MapJson,
}

pub fn embedding_to_json(h: &QuadricEmbedding) -> EmbeddingJson {
    EmbeddingJson { target: FormJson { n: h.target.n, ell: h.target.ell }, map: map_to_json(&h.map) }
}

pub fn embedding_from_json(j: &EmbeddingJson) -> Result<QuadricEmbedding> {
    QuadricEmbedding::new(map_from_json(&j.map)?, SignatureForm::new(j.target.n, j.target.ell)?)
}
