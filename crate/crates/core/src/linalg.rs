//! Dense vectors, representation matrices, packed symmetric matrices and
//! the two eigensolvers (power iteration, cyclic Jacobi).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 10_000;
/// Largest matrix accepted by [`full_symmetric_eigen`].
pub const JACOBI_LIMIT: usize = 512;

const PERTURBATION: f64 = 1e-6;
const FEATURE_CHUNK: usize = 4096;

#[inline]
pub fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

#[inline]
pub fn norm(u: &[f64]) -> f64 {
    dot(u, u).sqrt()
}

/// `u·v / (‖u‖‖v‖)`, clamped to [-1, 1].
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::LengthMismatch {
            left: u.len(),
            right: v.len(),
        });
    }
    let nu = norm(u);
    let nv = norm(v);
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|x| !x.is_finite()) {
        Some(i) => Err(Error::NonFinite(i)),
        None => Ok(()),
    }
}

/// Flips `v` so that its first non-negligible coordinate is positive.
pub(crate) fn canonical_sign(v: &mut [f64]) {
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-12 * scale) {
        if *first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// A `d × L` matrix whose column `i` is the representation of token `i`.
///
/// Storage is column-major, so each token vector is a contiguous slice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawRepr", into = "RawRepr")]
pub struct ReprMatrix {
    d: usize,
    l: usize,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawRepr {
    d: usize,
    l: usize,
    data: Vec<f64>,
}

impl TryFrom<RawRepr> for ReprMatrix {
    type Error = Error;
    fn try_from(raw: RawRepr) -> Result<Self> {
        ReprMatrix::from_column_major(raw.d, raw.l, raw.data)
    }
}

impl From<ReprMatrix> for RawRepr {
    fn from(m: ReprMatrix) -> Self {
        RawRepr {
            d: m.d,
            l: m.l,
            data: m.data,
        }
    }
}

impl ReprMatrix {
    pub fn from_column_major(d: usize, l: usize, data: Vec<f64>) -> Result<Self> {
        if d < 2 || l < 2 || data.len() != d * l {
            return Err(Error::InvalidShape {
                d,
                l,
                expected: d * l,
            });
        }
        check_finite(&data)?;
        Ok(Self { d, l, data })
    }

    pub fn from_columns<C: AsRef<[f64]>>(columns: &[C]) -> Result<Self> {
        let l = columns.len();
        let d = columns.first().map_or(0, |c| c.as_ref().len());
        let mut data = Vec::with_capacity(d * l);
        for c in columns {
            let c = c.as_ref();
            if c.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: c.len(),
                    context: None,
                });
            }
            data.extend_from_slice(c);
        }
        Self::from_column_major(d, l, data)
    }

    /// Builds from `d` rows of `L` values each (`rows[j][i] = r_ij`).
    pub fn from_rows<C: AsRef<[f64]>>(rows: &[C]) -> Result<Self> {
        let d = rows.len();
        let l = rows.first().map_or(0, |r| r.as_ref().len());
        if rows.iter().any(|r| r.as_ref().len() != l) {
            return Err(Error::InvalidShape {
                d,
                l,
                expected: d * l,
            });
        }
        let mut data = vec![0.0; d * l];
        for (j, row) in rows.iter().enumerate() {
            for (i, &x) in row.as_ref().iter().enumerate() {
                data[i * d + j] = x;
            }
        }
        Self::from_column_major(d, l, data)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.l
    }

    pub fn is_empty(&self) -> bool {
        self.l == 0
    }

    pub fn column(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn columns(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.d)
    }

    /// Entry `r_ji`: dimension `j` of token `i`.
    pub fn get(&self, j: usize, i: usize) -> f64 {
        self.data[i * self.d + j]
    }

    pub fn row(&self, j: usize) -> Vec<f64> {
        self.columns().map(|c| c[j]).collect()
    }

    pub fn as_column_major(&self) -> &[f64] {
        &self.data
    }

    pub fn into_column_major(self) -> Vec<f64> {
        self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::from_column_major(self.d, self.l, self.data.iter().map(|&x| f(x)).collect())
    }

    /// Copy with each column shifted to zero mean over its `d` entries.
    pub fn column_centered(&self) -> Self {
        let mut data = self.data.clone();
        for col in data.chunks_exact_mut(self.d) {
            let m = col.iter().sum::<f64>() / self.d as f64;
            col.iter_mut().for_each(|x| *x -= m);
        }
        Self {
            d: self.d,
            l: self.l,
            data,
        }
    }
}

/// Symmetric `n × n` matrix storing each unordered pair once (packed upper
/// triangle, row by row).
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix {
    n: usize,
    packed: Vec<f64>,
}

impl SymMatrix {
    #[inline]
    fn index(n: usize, i: usize, j: usize) -> usize {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        i * n - i * (i + 1) / 2 + j
    }

    /// `f(i, j)` is evaluated for `i <= j` only.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::Degenerate("empty matrix"));
        }
        let mut packed = Vec::with_capacity(n * (n + 1) / 2);
        for i in 0..n {
            for j in i..n {
                packed.push(f(i, j));
            }
        }
        check_finite(&packed)?;
        Ok(Self { n, packed })
    }

    /// From a row-major dense matrix that must be exactly symmetric.
    pub fn from_dense(n: usize, dense: &[f64]) -> Result<Self> {
        if dense.len() != n * n {
            return Err(Error::LengthMismatch {
                left: dense.len(),
                right: n * n,
            });
        }
        for i in 0..n {
            for j in i + 1..n {
                if dense[i * n + j] != dense[j * n + i] {
                    return Err(Error::Degenerate("matrix is not symmetric"));
                }
            }
        }
        Self::from_fn(n, |i, j| dense[i * n + j])
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, |i, j| if i == j { 1.0 } else { 0.0 }).expect("n > 0")
    }

    pub fn diagonal(values: &[f64]) -> Result<Self> {
        Self::from_fn(values.len(), |i, j| if i == j { values[i] } else { 0.0 })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.packed[Self::index(self.n, i, j)]
    }

    pub fn is_zero(&self) -> bool {
        self.packed.iter().all(|&x| x == 0.0)
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.n;
        let mut dense = vec![0.0; n * n];
        let mut k = 0;
        for i in 0..n {
            for j in i..n {
                dense[i * n + j] = self.packed[k];
                dense[j * n + i] = self.packed[k];
                k += 1;
            }
        }
        dense
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.matvec_into(v, &mut out);
        out
    }

    fn matvec_into(&self, v: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        let mut k = 0;
        for i in 0..self.n {
            let vi = v[i];
            let mut acc = self.packed[k] * vi;
            k += 1;
            for j in i + 1..self.n {
                let m = self.packed[k];
                acc += m * v[j];
                out[j] += m * vi;
                k += 1;
            }
            out[i] += acc;
        }
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.matvec(&vec![1.0; self.n])
    }

    /// Upper-triangle entries with `i < j`.
    pub fn off_diagonal(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n * (self.n - 1) / 2);
        for i in 0..self.n {
            for j in i + 1..self.n {
                out.push(self.get(i, j));
            }
        }
        out
    }

    pub fn diagonal_entries(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn frobenius_norm(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            for j in i..self.n {
                let x = self.get(i, j);
                s += if i == j { x * x } else { 2.0 * x * x };
            }
        }
        s.sqrt()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenPair {
    pub value: f64,
    /// Unit norm, first non-negligible coordinate positive.
    pub vector: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl EigenPair {
    pub fn residual(&self, m: &SymMatrix) -> f64 {
        let mv = m.matvec(&self.vector);
        mv.iter()
            .zip(&self.vector)
            .map(|(a, b)| (a - self.value * b).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = norm(v);
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

/// Dominant eigenpair (largest `|λ|`) by power iteration.
///
/// Starts from the all-ones direction. If that start is already an
/// eigenvector (the residual vanishes before any step was taken) or falls in
/// the null space, the first coordinate is nudged by `1e-6` once and the
/// iteration resumes, so a non-dominant eigenvector that happens to be
/// uniform is not reported.
pub fn top_eigenpair(m: &SymMatrix, tol: f64, max_iter: usize) -> Result<EigenPair> {
    if !(tol > 0.0) {
        return Err(Error::ConfigInvalid(format!(
            "tolerance must be > 0, got {tol}"
        )));
    }
    if m.is_zero() {
        return Err(Error::Degenerate("zero matrix"));
    }
    let n = m.n();
    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    let mut w = vec![0.0; n];
    let mut fresh_start = true;
    let mut perturbed = false;
    let mut lambda = 0.0;

    let perturb = |v: &mut Vec<f64>| {
        v[0] += PERTURBATION;
        normalize(v);
    };

    for iter in 1..=max_iter {
        m.matvec_into(&v, &mut w);
        lambda = dot(&v, &w);
        let residual = w
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - lambda * b).powi(2))
            .sum::<f64>()
            .sqrt();
        let wn = norm(&w);
        if residual <= tol && wn > 0.0 {
            if fresh_start && !perturbed {
                perturbed = true;
                perturb(&mut v);
                continue;
            }
            canonical_sign(&mut v);
            return Ok(EigenPair {
                value: lambda,
                vector: v,
                iterations: iter,
                converged: true,
            });
        }
        if wn == 0.0 {
            if perturbed {
                return Err(Error::Degenerate("iterate collapsed to zero"));
            }
            perturbed = true;
            perturb(&mut v);
            continue;
        }
        fresh_start = false;
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / wn;
        }
    }
    canonical_sign(&mut v);
    Ok(EigenPair {
        value: lambda,
        vector: v,
        iterations: max_iter,
        converged: false,
    })
}

/// All eigenpairs by cyclic Jacobi rotations, sorted by descending value.
pub fn full_symmetric_eigen(m: &SymMatrix) -> Result<Vec<EigenPair>> {
    let n = m.n();
    if n > JACOBI_LIMIT {
        return Err(Error::SizeExceeded {
            n,
            limit: JACOBI_LIMIT,
        });
    }
    let mut a = m.to_dense();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let scale = m.frobenius_norm();
    let mut sweeps = 0;
    while sweeps < 100 {
        let off: f64 = (0..n)
            .flat_map(|p| (p + 1..n).map(move |q| (p, q)))
            .map(|(p, q)| a[p * n + q] * a[p * n + q])
            .sum();
        if off.sqrt() <= 1e-15 * scale || off == 0.0 {
            break;
        }
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut pairs: Vec<EigenPair> = (0..n)
        .map(|i| {
            let mut vector: Vec<f64> = (0..n).map(|k| v[k * n + i]).collect();
            normalize(&mut vector);
            canonical_sign(&mut vector);
            EigenPair {
                value: a[i * n + i],
                vector,
                iterations: sweeps,
                converged: true,
            }
        })
        .collect();
    pairs.sort_by(|x, y| y.value.total_cmp(&x.value));
    Ok(pairs)
}

/// Dominant eigenpair for a positive semi-definite matrix: power iteration
/// first, Jacobi when it stalls (near-tied leading eigenvalues).
pub(crate) fn dominant_psd_eigenpair(m: &SymMatrix) -> Result<EigenPair> {
    let tol = DEFAULT_TOL * m.frobenius_norm().max(1.0);
    let pair = top_eigenpair(m, tol, DEFAULT_MAX_ITER)?;
    if pair.converged || m.n() > JACOBI_LIMIT {
        return Ok(pair);
    }
    let mut all = full_symmetric_eigen(m)?;
    let mut top = all.swap_remove(0);
    top.iterations += pair.iterations;
    Ok(top)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Centering {
    None,
    PerColumnMean,
}

/// `L × L` token covariance `RᵀR / (d − 1)`, optionally after shifting each
/// column to zero mean over its `d` entries.
pub fn token_covariance(r: &ReprMatrix, center: Centering) -> SymMatrix {
    let centered;
    let src = match center {
        Centering::None => r,
        Centering::PerColumnMean => {
            centered = r.column_centered();
            &centered
        }
    };
    gram(src, 1.0 / (r.d() - 1) as f64)
}

/// `scale · XᵀX` over the columns of `x`.
pub(crate) fn gram(x: &ReprMatrix, scale: f64) -> SymMatrix {
    let cols: Vec<&[f64]> = x.columns().collect();
    SymMatrix::from_fn(x.len(), |i, j| scale * dot(cols[i], cols[j])).expect("finite input")
}

/// `scale · XXᵀ` (`d × d`), for matrices with more tokens than dimensions.
pub(crate) fn outer_gram(x: &ReprMatrix, scale: f64) -> SymMatrix {
    let d = x.d();
    let mut acc = vec![0.0; d * (d + 1) / 2];
    for col in x.columns() {
        accumulate_outer(&mut acc, col);
    }
    acc.iter_mut().for_each(|v| *v *= scale);
    SymMatrix { n: d, packed: acc }
}

#[inline]
fn accumulate_outer(acc: &mut [f64], x: &[f64]) {
    let mut k = 0;
    for i in 0..x.len() {
        let xi = x[i];
        for xj in &x[i..] {
            acc[k] += xi * xj;
            k += 1;
        }
    }
}

/// Pooled `d × d` sample covariance over every column of every matrix
/// (divisor `D − 1`).
pub fn feature_covariance(corpus: &[ReprMatrix]) -> Result<SymMatrix> {
    let d = corpus.first().ok_or(Error::EmptyCorpus)?.d();
    for (idx, m) in corpus.iter().enumerate() {
        if m.d() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: m.d(),
                context: Some(format!("matrix {idx}")),
            });
        }
    }
    let cols: Vec<&[f64]> = corpus.iter().flat_map(|m| m.columns()).collect();
    let total = cols.len();
    if total < 2 {
        return Err(Error::InsufficientData(format!("{total} columns")));
    }
    let mut mean = vec![0.0; d];
    for c in &cols {
        mean.iter_mut().zip(c.iter()).for_each(|(m, x)| *m += x);
    }
    mean.iter_mut().for_each(|m| *m /= total as f64);

    // Fixed-size chunks reduced in order keep the result independent of the
    // worker count.
    let partials: Vec<Vec<f64>> = cols
        .par_chunks(FEATURE_CHUNK)
        .map(|chunk| {
            let mut acc = vec![0.0; d * (d + 1) / 2];
            let mut centered = vec![0.0; d];
            for c in chunk {
                for ((y, x), m) in centered.iter_mut().zip(c.iter()).zip(&mean) {
                    *y = x - m;
                }
                accumulate_outer(&mut acc, &centered);
            }
            acc
        })
        .collect();
    let mut packed = vec![0.0; d * (d + 1) / 2];
    for p in &partials {
        packed.iter_mut().zip(p).for_each(|(a, b)| *a += b);
    }
    let inv = 1.0 / (total - 1) as f64;
    packed.iter_mut().for_each(|v| *v *= inv);
    Ok(SymMatrix { n: d, packed })
}
