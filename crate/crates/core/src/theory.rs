//! Moments of the token covariance entries under the independent-normal
//! model, their Monte-Carlo estimates, row-sum eigenvalue bounds and the
//! spectrum of constant-structure matrices.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{token_covariance, Centering, ReprMatrix, SymMatrix};
use crate::rng::{tag, SeedStream};
use crate::synth::{sample_matrix, NormalSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentSource {
    Theoretical,
    Estimated,
}

/// Standard errors of the four estimated quantities, from batch means over
/// matrices (entries of one matrix are correlated, matrices are not).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentErrors {
    pub diag_mean_se: f64,
    pub diag_var_se: f64,
    pub offdiag_mean_se: f64,
    pub offdiag_var_se: f64,
    pub diag_samples: usize,
    pub offdiag_samples: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovMomentReport {
    pub diag_mean: f64,
    pub diag_std: f64,
    pub offdiag_mean: f64,
    pub offdiag_std: f64,
    pub source: MomentSource,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub errors: Option<MomentErrors>,
}

/// Closed-form mean and standard deviation of diagonal and off-diagonal
/// entries of `C = RᵀR / (d − 1)` for independent normal entries.
pub fn theoretical_moments(spec: &NormalSpec) -> Result<CovMomentReport> {
    let d = spec.d();
    if d < 2 {
        return Err(Error::InsufficientData("need d >= 2".into()));
    }
    let k = (d - 1) as f64;
    let (mut s2m2, mut m2, mut var_diag, mut var_off) = (0.0, 0.0, 0.0, 0.0);
    for (m, s) in spec.mu().iter().zip(spec.sigma()) {
        let (m2k, s2k) = (m * m, s * s);
        s2m2 += s2k + m2k;
        m2 += m2k;
        var_diag += 2.0 * s2k * s2k + 4.0 * m2k * s2k;
        var_off += s2k * s2k + 2.0 * m2k * s2k;
    }
    Ok(CovMomentReport {
        diag_mean: s2m2 / k,
        diag_std: var_diag.sqrt() / k,
        offdiag_mean: m2 / k,
        offdiag_std: var_off.sqrt() / k,
        source: MomentSource::Theoretical,
        errors: None,
    })
}

struct EntryStats {
    mean: f64,
    var: f64,
    mean_se: f64,
    var_se: f64,
    count: usize,
}

/// Pooled mean/variance of equally sized groups, with batch-means standard
/// errors across groups.
fn pooled_stats(groups: &[Vec<f64>]) -> EntryStats {
    let count: usize = groups.iter().map(Vec::len).sum();
    let n = count as f64;
    let mean = groups.iter().flatten().sum::<f64>() / n;
    let group_means: Vec<f64> = groups
        .iter()
        .map(|g| g.iter().sum::<f64>() / g.len() as f64)
        .collect();
    let group_sq: Vec<f64> = groups
        .iter()
        .map(|g| g.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / g.len() as f64)
        .collect();
    let var = group_sq.iter().sum::<f64>() / group_sq.len() as f64 * n / (n - 1.0);
    let se = |xs: &[f64]| {
        let b = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / b;
        (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (b - 1.0) / b).sqrt()
    };
    EntryStats {
        mean,
        var,
        mean_se: se(&group_means),
        var_se: se(&group_sq) * n / (n - 1.0),
        count,
    }
}

fn report_from_entries(diag: &[Vec<f64>], off: &[Vec<f64>]) -> Result<CovMomentReport> {
    if diag.len() < 2 || off.iter().all(Vec::is_empty) {
        return Err(Error::InsufficientData(
            "need at least two matrices with L >= 2".into(),
        ));
    }
    let dg = pooled_stats(diag);
    let od = pooled_stats(off);
    Ok(CovMomentReport {
        diag_mean: dg.mean,
        diag_std: dg.var.sqrt(),
        offdiag_mean: od.mean,
        offdiag_std: od.var.sqrt(),
        source: MomentSource::Estimated,
        errors: Some(MomentErrors {
            diag_mean_se: dg.mean_se,
            diag_var_se: dg.var_se,
            offdiag_mean_se: od.mean_se,
            offdiag_var_se: od.var_se,
            diag_samples: dg.count,
            offdiag_samples: od.count,
        }),
    })
}

fn split_entries(c: &SymMatrix) -> (Vec<f64>, Vec<f64>) {
    (c.diagonal_entries(), c.off_diagonal())
}

/// Pools the diagonal and off-diagonal entries of the token covariance of
/// `n_matrices` sampled `d × L` matrices.
pub fn monte_carlo_moments(
    spec: &NormalSpec,
    l: usize,
    n_matrices: usize,
    seed: u64,
    zero_sum: bool,
) -> Result<CovMomentReport> {
    if l < 2 || n_matrices < 2 {
        return Err(Error::InsufficientData(format!(
            "need L >= 2 and at least two matrices, got L = {l}, n = {n_matrices}"
        )));
    }
    let off_samples = n_matrices * l * (l - 1) / 2;
    if off_samples < 100 {
        return Err(Error::InsufficientData(format!(
            "{off_samples} off-diagonal samples (need >= 100)"
        )));
    }
    let root = SeedStream::new(seed).split(tag::MATRIX);
    let entries: Vec<(Vec<f64>, Vec<f64>)> = (0..n_matrices)
        .into_par_iter()
        .map(|t| {
            let r = sample_matrix(spec, l, &mut root.split(t as u64).rng(), zero_sum)?;
            // columns are already zero-sum when requested
            Ok(split_entries(&token_covariance(&r, Centering::None)))
        })
        .collect::<Result<_>>()?;
    let (diag, off): (Vec<_>, Vec<_>) = entries.into_iter().unzip();
    report_from_entries(&diag, &off)
}

/// Entry moments of the token covariance of real matrices, with the given
/// centering (the "estimated" side for an ingested corpus).
pub fn empirical_moments(corpus: &[ReprMatrix], center: Centering) -> Result<CovMomentReport> {
    let entries: Vec<(Vec<f64>, Vec<f64>)> = corpus
        .par_iter()
        .map(|r| split_entries(&token_covariance(r, center)))
        .collect();
    // batch means assume equal group sizes; unequal L only perturbs the SE
    let (diag, off): (Vec<_>, Vec<_>) = entries.into_iter().unzip();
    report_from_entries(&diag, &off)
}

/// Estimated-minus-theoretical deltas in units of the estimate's standard
/// error (means) and of the variance estimate's standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentComparison {
    pub diag_mean_z: f64,
    pub diag_var_z: f64,
    pub offdiag_mean_z: f64,
    pub offdiag_var_z: f64,
}

impl MomentComparison {
    pub fn max_abs_z(&self) -> f64 {
        [
            self.diag_mean_z,
            self.diag_var_z,
            self.offdiag_mean_z,
            self.offdiag_var_z,
        ]
        .iter()
        .fold(0.0, |m, z| m.max(z.abs()))
    }

    pub fn means_within(&self, k: f64) -> bool {
        self.diag_mean_z.abs() <= k && self.offdiag_mean_z.abs() <= k
    }

    pub fn variances_within(&self, k: f64) -> bool {
        self.diag_var_z.abs() <= k && self.offdiag_var_z.abs() <= k
    }
}

/// How the standard error of an estimated mean is obtained. Variances always
/// use the batch-means error of the squared deviations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorBars {
    /// Theoretical standard deviation over the square root of the sample
    /// count; exact when the pooled entries are independent (`L = 2`).
    Theoretical,
    /// Spread of per-matrix means; valid for correlated entries.
    BatchMeans,
}

pub fn compare_moments(
    theoretical: &CovMomentReport,
    estimated: &CovMomentReport,
    bars: ErrorBars,
) -> Result<MomentComparison> {
    let e = estimated.errors.ok_or_else(|| {
        Error::InsufficientData("estimated report carries no standard errors".into())
    })?;
    let z = |est: f64, th: f64, se: f64| {
        if se > 0.0 {
            (est - th) / se
        } else if est == th {
            0.0
        } else {
            f64::INFINITY
        }
    };
    let (diag_mean_se, offdiag_mean_se) = match bars {
        ErrorBars::Theoretical => (
            theoretical.diag_std / (e.diag_samples as f64).sqrt(),
            theoretical.offdiag_std / (e.offdiag_samples as f64).sqrt(),
        ),
        ErrorBars::BatchMeans => (e.diag_mean_se, e.offdiag_mean_se),
    };
    Ok(MomentComparison {
        diag_mean_z: z(estimated.diag_mean, theoretical.diag_mean, diag_mean_se),
        diag_var_z: z(
            estimated.diag_std.powi(2),
            theoretical.diag_std.powi(2),
            e.diag_var_se,
        ),
        offdiag_mean_z: z(
            estimated.offdiag_mean,
            theoretical.offdiag_mean,
            offdiag_mean_se,
        ),
        offdiag_var_z: z(
            estimated.offdiag_std.powi(2),
            theoretical.offdiag_std.powi(2),
            e.offdiag_var_se,
        ),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RowSumBounds {
    pub low: f64,
    pub high: f64,
}

/// Minimum and maximum row sums. For an entrywise nonnegative matrix these
/// bracket the dominant eigenvalue.
pub fn perron_bounds(c: &SymMatrix, nonneg_check: bool) -> Result<RowSumBounds> {
    if nonneg_check {
        for i in 0..c.n() {
            for j in i..c.n() {
                let v = c.get(i, j);
                if v < 0.0 {
                    return Err(Error::NegativeEntry {
                        row: i,
                        col: j,
                        value: v,
                    });
                }
            }
        }
    }
    let sums = c.row_sums();
    Ok(RowSumBounds {
        low: sums.iter().copied().fold(f64::INFINITY, f64::min),
        high: sums.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}

/// Diagonal `a`, every off-diagonal `b`, size `L`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantStructure {
    a: f64,
    b: f64,
    l: usize,
}

impl ConstantStructure {
    pub fn new(a: f64, b: f64, l: usize) -> Result<Self> {
        if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) || l < 2 {
            return Err(Error::ConfigInvalid(format!(
                "constant structure needs a > 0, b > 0, L >= 2; got a={a}, b={b}, L={l}"
            )));
        }
        Ok(Self { a, b, l })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn len(&self) -> usize {
        self.l
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn to_matrix(&self) -> SymMatrix {
        SymMatrix::from_fn(self.l, |i, j| if i == j { self.a } else { self.b }).expect("L >= 2")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantSpectrum {
    pub lambda_max: f64,
    /// Uniform unit vector `1/√L`.
    pub w: Vec<f64>,
    /// Eigenvalue `a − b`, multiplicity `L − 1`.
    pub lambda_rest: f64,
}

pub fn constant_structure_spectrum(s: &ConstantStructure) -> ConstantSpectrum {
    let l = s.l as f64;
    ConstantSpectrum {
        lambda_max: s.a + s.b * (l - 1.0),
        w: vec![1.0 / l.sqrt(); s.l],
        lambda_rest: s.a - s.b,
    }
}

/// `|cos(w, 1)|`: how close an eigenvector is to the uniform direction.
pub fn uniformity(w: &[f64]) -> Result<f64> {
    let ones = vec![1.0; w.len()];
    Ok(crate::linalg::cosine(w, &ones)?.abs())
}

/// Spectral diagnostics for one token covariance matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralCheck {
    pub l: usize,
    pub lambda1: f64,
    pub bounds: Option<RowSumBounds>,
    /// `a + b(L − 1)` with `a`, `b` the mean diagonal and off-diagonal.
    pub constant_prediction: f64,
    pub w_uniformity: f64,
}

pub fn spectral_check(c: &SymMatrix) -> Result<SpectralCheck> {
    let top = crate::linalg::dominant_psd_eigenpair(c)?;
    let nonneg = perron_bounds(c, true).ok();
    let diag = c.diagonal_entries();
    let off = c.off_diagonal();
    let a = diag.iter().sum::<f64>() / diag.len() as f64;
    let b = if off.is_empty() {
        0.0
    } else {
        off.iter().sum::<f64>() / off.len() as f64
    };
    Ok(SpectralCheck {
        l: c.n(),
        lambda1: top.value,
        bounds: nonneg,
        constant_prediction: a + b * (c.n() as f64 - 1.0),
        w_uniformity: uniformity(&top.vector)?,
    })
}
