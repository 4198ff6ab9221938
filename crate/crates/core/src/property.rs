//! The average-vs-first-principal-component measurement and its batch
//! aggregation.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    canonical_sign, cosine, dominant_psd_eigenpair, gram, norm, outer_gram, token_covariance,
    Centering, ReprMatrix,
};

/// Which centering and eigenproblem defines the first principal component.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PcaConvention {
    /// Tokens are samples: subtract the average representation from every
    /// column, then take the top eigenvector of the `d × d` covariance.
    #[serde(rename = "A_token_samples_centered", alias = "A")]
    TokenCentered,
    /// Dimensions are samples: shift every column to zero mean over its `d`
    /// entries, take the top eigenvector `w` of the token covariance and
    /// return `p = R_centered · w`.
    #[default]
    #[serde(rename = "B_dimension_samples", alias = "B")]
    DimensionCentered,
    /// No centering: the dominant left singular direction of `R`.
    #[serde(rename = "C_uncentered_svd", alias = "C")]
    Uncentered,
}

impl PcaConvention {
    pub const ALL: [PcaConvention; 3] = [
        PcaConvention::TokenCentered,
        PcaConvention::DimensionCentered,
        PcaConvention::Uncentered,
    ];

    pub fn letter(self) -> char {
        match self {
            PcaConvention::TokenCentered => 'A',
            PcaConvention::DimensionCentered => 'B',
            PcaConvention::Uncentered => 'C',
        }
    }
}

impl fmt::Display for PcaConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

impl FromStr for PcaConvention {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "a" | "token" | "token-centered" | "a_token_samples_centered" => {
                Ok(PcaConvention::TokenCentered)
            }
            "b" | "dimension" | "dimension-centered" | "b_dimension_samples" => {
                Ok(PcaConvention::DimensionCentered)
            }
            "c" | "uncentered" | "svd" | "c_uncentered_svd" => Ok(PcaConvention::Uncentered),
            _ => Err(format!("unknown PCA convention {s:?} (expected A, B or C)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PrincipalComponent {
    /// Unit-norm `d`-vector, first non-negligible coordinate positive.
    pub direction: Vec<f64>,
    pub lambda1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropertyResult {
    pub abs_cos: f64,
    pub convention: PcaConvention,
    pub lambda1: f64,
    pub l: usize,
    pub d: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub scenario: String,
    pub n_tests: usize,
    pub average: f64,
    pub min: f64,
    pub skipped: usize,
}

/// `r̄ = Σ r_i / L`.
pub fn average_vector(r: &ReprMatrix) -> Vec<f64> {
    let mut avg = vec![0.0; r.d()];
    for col in r.columns() {
        avg.iter_mut().zip(col).for_each(|(a, x)| *a += x);
    }
    let l = r.len() as f64;
    avg.iter_mut().for_each(|a| *a /= l);
    avg
}

fn frobenius(r: &ReprMatrix) -> f64 {
    norm(r.as_column_major())
}

pub fn first_pc(r: &ReprMatrix, conv: PcaConvention) -> Result<PrincipalComponent> {
    let (x, scale) = match conv {
        PcaConvention::TokenCentered => {
            let avg = average_vector(r);
            let mut data = r.as_column_major().to_vec();
            for col in data.chunks_exact_mut(r.d()) {
                col.iter_mut().zip(&avg).for_each(|(v, a)| *v -= a);
            }
            (
                ReprMatrix::from_column_major(r.d(), r.len(), data)?,
                1.0 / (r.len() - 1) as f64,
            )
        }
        PcaConvention::DimensionCentered => (r.column_centered(), 1.0 / (r.d() - 1) as f64),
        PcaConvention::Uncentered => (r.clone(), 1.0 / (r.d() - 1) as f64),
    };
    let fx = frobenius(&x);
    if fx == 0.0 || fx <= 1e-12 * frobenius(r) {
        return Err(Error::DegenerateMatrix);
    }

    if x.len() <= x.d() {
        let cov = match conv {
            PcaConvention::DimensionCentered => token_covariance(r, Centering::PerColumnMean),
            _ => gram(&x, scale),
        };
        let pair = dominant_psd_eigenpair(&cov)?;
        let mut p = vec![0.0; x.d()];
        for (col, w) in x.columns().zip(&pair.vector) {
            p.iter_mut().zip(col).for_each(|(pj, xj)| *pj += w * xj);
        }
        let n = norm(&p);
        if n == 0.0 {
            return Err(Error::DegenerateMatrix);
        }
        p.iter_mut().for_each(|v| *v /= n);
        canonical_sign(&mut p);
        Ok(PrincipalComponent {
            direction: p,
            lambda1: pair.value,
        })
    } else {
        // Fewer dimensions than tokens: solve the d × d side directly. The
        // nonzero spectrum is shared with the token side.
        let pair = dominant_psd_eigenpair(&outer_gram(&x, scale))?;
        Ok(PrincipalComponent {
            direction: pair.vector,
            lambda1: pair.value,
        })
    }
}

/// `|cos(r̄, p)|` for one matrix.
pub fn property_cosine(r: &ReprMatrix, conv: PcaConvention) -> Result<PropertyResult> {
    let avg = average_vector(r);
    let max_col = r.columns().map(norm).fold(0.0, f64::max);
    let avg_norm = norm(&avg);
    if avg_norm == 0.0 || avg_norm <= 1e-14 * max_col {
        return Err(Error::AverageZero);
    }
    let pc = first_pc(r, conv)?;
    let c = cosine(&avg, &pc.direction)?;
    Ok(PropertyResult {
        abs_cos: c.abs(),
        convention: conv,
        lambda1: pc.lambda1,
        l: r.len(),
        d: r.d(),
    })
}

pub(crate) fn is_degenerate(e: &Error) -> bool {
    matches!(
        e,
        Error::AverageZero | Error::DegenerateMatrix | Error::Degenerate(_) | Error::ZeroVector
    )
}

/// Per-matrix results in corpus order, computed in parallel.
pub fn property_cosines(corpus: &[ReprMatrix], conv: PcaConvention) -> Vec<Result<PropertyResult>> {
    corpus
        .par_iter()
        .map(|r| property_cosine(r, conv))
        .collect()
}

/// Average and minimum over per-matrix values. Degenerate matrices are
/// excluded and counted when `skip_degenerate`, and are an error otherwise.
pub fn summarize(
    scenario: impl Into<String>,
    results: Vec<Result<PropertyResult>>,
    skip_degenerate: bool,
) -> Result<BatchSummary> {
    if results.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut values = Vec::with_capacity(results.len());
    let mut skipped = 0;
    for r in results {
        match r {
            Ok(p) => values.push(p.abs_cos),
            Err(e) if skip_degenerate && is_degenerate(&e) => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    summarize_values(scenario, &values, skipped)
}

pub fn summarize_values(
    scenario: impl Into<String>,
    values: &[f64],
    skipped: usize,
) -> Result<BatchSummary> {
    if values.is_empty() {
        return Err(Error::InsufficientData(format!(
            "all {skipped} matrices were degenerate"
        )));
    }
    let average = values.iter().sum::<f64>() / values.len() as f64;
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(BatchSummary {
        scenario: scenario.into(),
        n_tests: values.len(),
        // the mean of identical values can round one ulp below them
        average: average.max(min),
        min,
        skipped,
    })
}

pub fn batch_property(
    corpus: &[ReprMatrix],
    conv: PcaConvention,
    skip_degenerate: bool,
    scenario: impl Into<String>,
) -> Result<BatchSummary> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    summarize(scenario, property_cosines(corpus, conv), skip_degenerate)
}
