//! Per-dimension distribution diagnostics: standardization, third and
//! fourth moments, Q-Q data and the spread of feature-covariance
//! off-diagonals.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{ReprMatrix, SymMatrix};
use crate::rng::SeedStream;

const STANDARDIZED_TOL: f64 = 1e-6;

/// The values of one dimension pooled over every token of a corpus.
#[derive(Clone, Debug, PartialEq)]
pub struct DimensionSample {
    pub index: usize,
    pub values: Vec<f64>,
}

impl DimensionSample {
    pub fn new(index: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "dimension {index} has {} values",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { index, values })
    }

    /// Row `j` of every matrix, concatenated in corpus order.
    pub fn from_corpus(corpus: &[ReprMatrix], j: usize) -> Result<Self> {
        let d = corpus.first().ok_or(Error::EmptyCorpus)?.d();
        let mut values = Vec::new();
        for m in corpus {
            if m.d() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: m.d(),
                    context: None,
                });
            }
            values.extend(m.columns().map(|c| c[j]));
        }
        Self::new(j, values)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub skewness: f64,
    /// Non-excess: 3 for a normal law.
    pub kurtosis: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentSweep {
    pub per_dimension: Vec<MomentReport>,
    pub skewness_mean: f64,
    pub skewness_std: f64,
    pub kurtosis_mean: f64,
    pub kurtosis_std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QqData {
    pub dimension: usize,
    /// `(theoretical, empirical)` pairs, theoretical strictly increasing.
    pub points: Vec<(f64, f64)>,
    pub correlation: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub mean: f64,
    pub std: f64,
}

fn mean_and_pop_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// `(s − μ̂) / σ̂` with population divisor. Returns the standardized values,
/// `μ̂` and `σ̂`.
pub fn standardize(s: &DimensionSample) -> Result<(Vec<f64>, f64, f64)> {
    let (mu, sigma) = mean_and_pop_std(&s.values);
    if !(sigma > 0.0) {
        return Err(Error::ConstantDimension { dim: s.index });
    }
    let z = s.values.iter().map(|x| (x - mu) / sigma).collect();
    Ok((z, mu, sigma))
}

/// Sample means of `z³` and `z⁴` for standardized input.
pub fn moments(z: &[f64]) -> Result<MomentReport> {
    if z.len() < 2 {
        return Err(Error::InsufficientData(format!("{} values", z.len())));
    }
    let (mean, sd) = mean_and_pop_std(z);
    if mean.abs() > STANDARDIZED_TOL || (sd - 1.0).abs() > STANDARDIZED_TOL {
        return Err(Error::NotStandardized { mean, sd });
    }
    let n = z.len() as f64;
    let (s3, s4) = z.iter().fold((0.0, 0.0), |(a, b), &x| {
        let x2 = x * x;
        (a + x2 * x, b + x2 * x2)
    });
    Ok(MomentReport {
        skewness: s3 / n,
        kurtosis: s4 / n,
    })
}

pub fn aggregate_moments(per_dimension: Vec<MomentReport>) -> MomentSweep {
    let skew: Vec<f64> = per_dimension.iter().map(|m| m.skewness).collect();
    let kurt: Vec<f64> = per_dimension.iter().map(|m| m.kurtosis).collect();
    let (skewness_mean, skewness_std) = mean_and_pop_std(&skew);
    let (kurtosis_mean, kurtosis_std) = mean_and_pop_std(&kurt);
    MomentSweep {
        per_dimension,
        skewness_mean,
        skewness_std,
        kurtosis_mean,
        kurtosis_std,
    }
}

/// Standardize and take moments for every dimension; aggregate as mean and
/// population standard deviation across dimensions.
pub fn per_dimension_moment_sweep(corpus: &[ReprMatrix]) -> Result<MomentSweep> {
    let d = corpus.first().ok_or(Error::EmptyCorpus)?.d();
    let per_dimension = (0..d)
        .into_par_iter()
        .map(|j| {
            let s = DimensionSample::from_corpus(corpus, j)?;
            let (z, _, _) = standardize(&s)?;
            moments(&z)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(aggregate_moments(per_dimension))
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal quantile: Acklam's rational approximation followed by
/// one Halley step against [`normal_cdf`].
pub fn normal_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.02425;

    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let e = normal_cdf(x) - p;
    let u = e * (2.0 * std::f64::consts::PI).sqrt() * (x * x / 2.0).exp();
    x - u / (1.0 + x * u / 2.0)
}

/// Linear interpolation between order statistics, with order statistic `m`
/// (1-based) sitting at level `(m − 0.5) / n`.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let h = (n as f64 * p - 0.5).clamp(0.0, (n - 1) as f64);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
}

/// Q-Q points of `s` against N(0, 1) at levels `(m − 0.5)/k`, after keeping
/// a seeded random `fraction` of the values.
pub fn qq_points(s: &DimensionSample, k: usize, fraction: f64, seed: u64) -> Result<QqData> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::ConfigInvalid(format!(
            "subsample fraction must be in (0, 1], got {fraction}"
        )));
    }
    let mut values = if fraction < 1.0 {
        let keep = ((s.values.len() as f64) * fraction).round() as usize;
        let mut rng = SeedStream::new(seed)
            .split(crate::rng::tag::SUBSAMPLE)
            .split(s.index as u64)
            .rng();
        let mut idx: Vec<usize> = (0..s.values.len()).collect();
        // partial Fisher-Yates: the first `keep` slots are a uniform subset
        for i in 0..keep.min(idx.len()) {
            let j = i + rng.below((idx.len() - i) as u64) as usize;
            idx.swap(i, j);
        }
        idx[..keep].iter().map(|&i| s.values[i]).collect::<Vec<_>>()
    } else {
        s.values.clone()
    };
    if k < 2 || k > values.len() {
        return Err(Error::InsufficientData(format!(
            "need 2 <= k <= {} retained values, got k = {k}",
            values.len()
        )));
    }
    values.sort_by(f64::total_cmp);
    if values[0] == values[values.len() - 1] {
        return Err(Error::ConstantDimension { dim: s.index });
    }
    let points: Vec<(f64, f64)> = (1..=k)
        .map(|m| {
            let p = (m as f64 - 0.5) / k as f64;
            (normal_quantile(p), quantile_sorted(&values, p))
        })
        .collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = points.iter().copied().unzip();
    Ok(QqData {
        dimension: s.index,
        correlation: pearson(&xs, &ys),
        points,
    })
}

/// Mean and population standard deviation of the strict upper triangle.
pub fn offdiag_spread(sigma: &SymMatrix) -> Result<Spread> {
    if sigma.n() < 2 {
        return Err(Error::InsufficientData("need d >= 2".into()));
    }
    let (mean, std) = mean_and_pop_std(&sigma.off_diagonal());
    Ok(Spread { mean, std })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::feature_covariance;
    use crate::rng::seeded_generator;

    fn normals(n: usize, seed: u64) -> Vec<f64> {
        let mut r = seeded_generator(seed, 0);
        (0..n).map(|_| r.normal()).collect()
    }

    #[test]
    fn standardize_two_point() {
        let (z, mu, sigma) =
            standardize(&DimensionSample::new(0, vec![0.0, 2.0]).unwrap()).unwrap();
        assert_eq!((z, mu, sigma), (vec![-1.0, 1.0], 1.0, 1.0));
    }

    #[test]
    fn standardize_round_trip_and_idempotence() {
        let mut r = seeded_generator(2, 0);
        let vals: Vec<f64> = (0..1000).map(|_| r.uniform(-5.0, 20.0)).collect();
        let s = DimensionSample::new(3, vals.clone()).unwrap();
        let (z, mu, sigma) = standardize(&s).unwrap();
        for (zi, xi) in z.iter().zip(&vals) {
            assert!((zi * sigma + mu - xi).abs() <= 1e-12 * xi.abs().max(1.0));
        }
        let (z2, mu2, sigma2) = standardize(&DimensionSample::new(3, z.clone()).unwrap()).unwrap();
        assert!(mu2.abs() < 1e-10 && (sigma2 - 1.0).abs() < 1e-10);
        for (a, b) in z.iter().zip(&z2) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn constant_dimension_rejected() {
        let s = DimensionSample::new(7, vec![1.5; 10]).unwrap();
        assert!(matches!(
            standardize(&s),
            Err(Error::ConstantDimension { dim: 7 })
        ));
    }

    #[test]
    fn moments_examples() {
        let m = moments(&[1.0, -1.0, 1.0, -1.0]).unwrap();
        assert_eq!((m.skewness, m.kurtosis), (0.0, 1.0));

        let s = DimensionSample::new(0, normals(200_000, 5)).unwrap();
        let (z, _, _) = standardize(&s).unwrap();
        let m = moments(&z).unwrap();
        assert!(
            m.skewness.abs() < 0.05 && (m.kurtosis - 3.0).abs() < 0.1,
            "{m:?}"
        );

        // Exponential(1): skewness 2, kurtosis 9
        let mut r = seeded_generator(6, 0);
        let e: Vec<f64> = (0..400_000).map(|_| -(1.0 - r.next_f64()).ln()).collect();
        let (z, _, _) = standardize(&DimensionSample::new(0, e).unwrap()).unwrap();
        let m = moments(&z).unwrap();
        assert!((m.skewness - 2.0).abs() < 0.1, "{m:?}");
        assert!((m.kurtosis - 9.0).abs() < 1.0, "{m:?}");

        assert!(matches!(
            moments(&[0.0, 2.0]),
            Err(Error::NotStandardized { .. })
        ));
    }

    #[test]
    fn sweep_singleton_matches_single_report() {
        let vals = normals(500, 9);
        let r = ReprMatrix::from_rows(&[vals.clone(), normals(500, 10)]).unwrap();
        let sweep = per_dimension_moment_sweep(std::slice::from_ref(&r)).unwrap();
        let (z, _, _) = standardize(&DimensionSample::new(0, vals).unwrap()).unwrap();
        assert_eq!(sweep.per_dimension[0], moments(&z).unwrap());
        let agg = aggregate_moments(vec![sweep.per_dimension[0]]);
        assert_eq!(agg.skewness_mean, sweep.per_dimension[0].skewness);
        assert_eq!(agg.kurtosis_std, 0.0);
    }

    #[test]
    fn sweep_reports_constant_dimension() {
        let r = ReprMatrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 4.0, 4.0]]).unwrap();
        assert!(matches!(
            per_dimension_moment_sweep(&[r]),
            Err(Error::ConstantDimension { dim: 1 })
        ));
    }

    #[test]
    fn quantile_function_accuracy() {
        for &p in &[
            1e-10,
            1e-4,
            0.01,
            0.02425,
            0.1,
            0.3,
            0.5,
            0.77,
            0.975,
            0.9999,
            1.0 - 1e-9,
        ] {
            let x = normal_quantile(p);
            let back = normal_cdf(x);
            assert!(
                (back - p).abs() <= 1e-9 * p.min(1.0 - p).max(1e-12) + 1e-16,
                "p={p}"
            );
        }
        assert_eq!(normal_quantile(0.5), 0.0);
        assert!((normal_quantile(0.975) - 1.959_963_984_540_054).abs() < 1e-12);
    }

    #[test]
    fn qq_on_exact_quantiles_is_identity() {
        let k = 101;
        let vals: Vec<f64> = (1..=k)
            .map(|m| normal_quantile((m as f64 - 0.5) / k as f64))
            .collect();
        let qq = qq_points(&DimensionSample::new(0, vals).unwrap(), k, 1.0, 0).unwrap();
        for (t, e) in &qq.points {
            assert!((t - e).abs() < 1e-15);
        }
        assert!((qq.correlation - 1.0).abs() < 1e-12);
        assert!(qq.points.windows(2).all(|w| w[0].0 < w[1].0));
    }

    #[test]
    fn qq_normal_vs_heavy_tail() {
        let s = DimensionSample::new(0, normals(50_000, 12)).unwrap();
        let normal = qq_points(&s, 200, 1.0, 0).unwrap();
        assert!(normal.correlation >= 0.999, "{}", normal.correlation);

        // scale mixture: 90% N(0,1), 10% N(0, 25)
        let mut r = seeded_generator(13, 0);
        let heavy: Vec<f64> = (0..50_000)
            .map(|_| {
                let z = r.normal();
                if r.next_f64() < 0.1 {
                    5.0 * z
                } else {
                    z
                }
            })
            .collect();
        let heavy = qq_points(&DimensionSample::new(0, heavy).unwrap(), 200, 1.0, 0).unwrap();
        assert!(heavy.correlation < normal.correlation);
        let (t, e) = *heavy.points.last().unwrap();
        assert!(e > 1.5 * t, "upper tail {t} vs {e}");
    }

    #[test]
    fn qq_subsampling_and_errors() {
        let s = DimensionSample::new(4, normals(10_000, 1)).unwrap();
        let a = qq_points(&s, 50, 0.1, 77).unwrap();
        let b = qq_points(&s, 50, 0.1, 77).unwrap();
        assert_eq!(a, b);
        assert!(matches!(
            qq_points(&s, 2000, 0.1, 77),
            Err(Error::InsufficientData(_))
        ));
        assert!(qq_points(&s, 50, 0.0, 77).is_err());
        assert!(qq_points(&s, 1, 1.0, 77).is_err());
    }

    #[test]
    fn qq_correlation_affine_invariant() {
        let vals = normals(3000, 21);
        let s = DimensionSample::new(0, vals.clone()).unwrap();
        let t = DimensionSample::new(0, vals.iter().map(|x| 3.5 * x - 8.0).collect()).unwrap();
        let a = qq_points(&s, 100, 1.0, 0).unwrap().correlation;
        let b = qq_points(&t, 100, 1.0, 0).unwrap().correlation;
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn offdiag_examples() {
        let s = offdiag_spread(&SymMatrix::identity(4)).unwrap();
        assert_eq!((s.mean, s.std), (0.0, 0.0));
        let m = SymMatrix::from_dense(2, &[1.0, 0.5, 0.5, 1.0]).unwrap();
        let s = offdiag_spread(&m).unwrap();
        assert_eq!((s.mean, s.std), (0.5, 0.0));
    }

    #[test]
    fn offdiag_of_independent_dimensions() {
        let d = 6;
        let n = 200_000;
        let mut r = seeded_generator(31, 0);
        let data: Vec<f64> = (0..d * n).map(|_| r.normal()).collect();
        let m = ReprMatrix::from_column_major(d, n, data).unwrap();
        let s = offdiag_spread(&feature_covariance(&[m]).unwrap()).unwrap();
        // each off-diagonal has standard error 1/sqrt(D) ≈ 0.0022
        assert!(s.mean.abs() < 0.003, "{s:?}");
        assert!(s.std < 0.006, "{s:?}");
    }
}
