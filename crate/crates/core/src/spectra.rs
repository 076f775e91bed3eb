//! Eigenvalues of real symmetric matrices and replica-parallel batches.
//!
//! Householder reduction to tridiagonal form followed by implicit QL with
//! Wilkinson shifts; eigenvectors are never formed.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ensemble::{sample_matrix_into, EnsembleSpec, RngStream};
use crate::scalar::Real;

/// Iteration budget per eigenvalue before the QL sweep gives up.
pub const MAX_QL_ITERATIONS: usize = 50;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EigenError {
    #[error("matrix is not exactly symmetric at ({row}, {col})")]
    NotSymmetric { row: usize, col: usize },
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("QL iteration did not converge for eigenvalue {index} within {MAX_QL_ITERATIONS} sweeps")]
    NoConvergence { index: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BatchError {
    #[error("replica count must be at least 1")]
    NoReplicas,
    #[error("replica {replica}: {source}")]
    Eigen { replica: u64, source: EigenError },
}

/// Dense symmetric matrix, row-major, both triangles stored.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Real> SymMatrix<T> {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![T::zero(); n * n] }
    }

    /// Builds from rows; rows must form a square matrix.
    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for r in rows {
            assert_eq!(r.len(), n, "matrix must be square");
            data.extend_from_slice(r);
        }
        Self { n, data }
    }

    pub fn diagonal(values: &[T]) -> Self {
        let mut m = Self::zeros(values.len());
        for (i, &v) in values.iter().enumerate() {
            m.set(i, i, v);
        }
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.n + j]
    }

    /// Sets a single entry; callers keep the matrix symmetric.
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.n + j] = v;
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn is_symmetric(&self) -> bool {
        self.asymmetry().is_none()
    }

    fn asymmetry(&self) -> Option<(usize, usize)> {
        for i in 0..self.n {
            for j in i + 1..self.n {
                if self.get(i, j) != self.get(j, i) {
                    return Some((i, j));
                }
            }
        }
        None
    }

    pub fn trace(&self) -> T {
        (0..self.n).fold(T::zero(), |acc, i| acc + self.get(i, i))
    }

    pub fn frobenius_sq(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, &v| acc + v * v)
    }

    /// `Rᵀ A R` for a square `R` given row-major.
    pub fn congruence(&self, r: &[T]) -> Self {
        let n = self.n;
        assert_eq!(r.len(), n * n);
        let mut ar = vec![T::zero(); n * n];
        for i in 0..n {
            for k in 0..n {
                let a = self.get(i, k);
                for j in 0..n {
                    ar[i * n + j] += a * r[k * n + j];
                }
            }
        }
        let mut out = Self::zeros(n);
        for i in 0..n {
            for j in i..n {
                let mut acc = T::zero();
                for k in 0..n {
                    acc += r[k * n + i] * ar[k * n + j];
                }
                out.set(i, j, acc);
                out.set(j, i, acc);
            }
        }
        out
    }
}

/// Eigenvalues `λ_1 ≤ … ≤ λ_N` of one matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum<T> {
    values: Vec<T>,
}

impl<T: Real> Spectrum<T> {
    /// Sorts `values` ascending. Non-finite values are rejected.
    pub fn from_values(mut values: Vec<T>) -> Result<Self, EigenError> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EigenError::NonFinite);
        }
        values.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        Ok(Self { values })
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }
}

#[inline]
fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    // four independent accumulators so the loop pipelines
    let mut acc = [T::zero(); 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// Householder reduction of a symmetric matrix to `(diagonal, off-diagonal)`.
///
/// Works on the upper triangle of a row-major copy: the column being annihilated
/// at step `k` is the contiguous tail of row `k`.
pub fn tridiagonalize<T: Real>(m: &SymMatrix<T>) -> (Vec<T>, Vec<T>) {
    let n = m.n();
    let mut a = m.data.clone();
    let mut d = vec![T::zero(); n];
    let mut e = vec![T::zero(); n.saturating_sub(1)];
    let mut v = vec![T::zero(); n];
    let mut p = vec![T::zero(); n];
    for k in 0..n.saturating_sub(2) {
        let len = n - k - 1;
        let row = &a[k * n + k + 1..k * n + n];
        let x0 = row[0];
        let tail_sq = dot(&row[1..], &row[1..]);
        d[k] = a[k * n + k];
        if tail_sq == T::zero() {
            e[k] = x0;
            continue;
        }
        let norm = (x0 * x0 + tail_sq).sqrt();
        let alpha = if x0 > T::zero() { -norm } else { norm };
        let v = &mut v[..len];
        v.copy_from_slice(row);
        v[0] = x0 - alpha;
        let vnorm_sq = v[0] * v[0] + tail_sq;
        let tau = T::lit(2.0) / vnorm_sq;
        e[k] = alpha;

        // p = τ A₂₂ v from the upper triangle of the trailing block
        let p = &mut p[..len];
        p.iter_mut().for_each(|x| *x = T::zero());
        let base = k + 1;
        for i in 0..len {
            let r = &a[(base + i) * n + base + i..(base + i) * n + n];
            let vi = v[i];
            let tail = &r[1..];
            p[i] += r[0] * vi + dot(tail, &v[i + 1..]);
            for (pj, &aij) in p[i + 1..].iter_mut().zip(tail) {
                *pj += aij * vi;
            }
        }
        p.iter_mut().for_each(|x| *x *= tau);
        // w = p - (τ/2)(pᵀv) v, stored in p
        let kappa = tau * T::lit(0.5) * dot(p, v);
        for (pi, &vi) in p.iter_mut().zip(v.iter()) {
            *pi -= kappa * vi;
        }
        // A₂₂ -= v wᵀ + w vᵀ
        for i in 0..len {
            let (vi, wi) = (v[i], p[i]);
            let r = &mut a[(base + i) * n + base + i..(base + i) * n + n];
            for ((aij, &vj), &wj) in r.iter_mut().zip(&v[i..]).zip(&p[i..]) {
                *aij -= vi * wj + wi * vj;
            }
        }
    }
    if n >= 2 {
        d[n - 2] = a[(n - 2) * n + n - 2];
        e[n - 2] = a[(n - 2) * n + n - 1];
    }
    if n >= 1 {
        d[n - 1] = a[(n - 1) * n + n - 1];
    }
    (d, e)
}

/// Eigenvalues of the symmetric tridiagonal matrix with diagonal `d` and
/// off-diagonal `e` (`e.len() == d.len() - 1`), unsorted.
pub fn tridiagonal_eigenvalues<T: Real>(mut d: Vec<T>, e: &[T]) -> Result<Vec<T>, EigenError> {
    let n = d.len();
    if n == 0 {
        return Ok(d);
    }
    let mut e: Vec<T> = e.to_vec();
    e.push(T::zero());
    let eps = T::epsilon();
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= eps * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > MAX_QL_ITERATIONS {
                return Err(EigenError::NoConvergence { index: l });
            }
            let two = T::lit(2.0);
            let mut g = (d[l + 1] - d[l]) / (two * e[l]);
            let mut r = g.hypot(T::one());
            let signed_r = if g >= T::zero() { r } else { -r };
            g = d[m] - d[l] + e[l] / (g + signed_r);
            let (mut s, mut c, mut p) = (T::one(), T::one(), T::zero());
            let mut underflow = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == T::zero() {
                    d[i + 1] -= p;
                    e[m] = T::zero();
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + two * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = T::zero();
        }
    }
    Ok(d)
}

/// Sorted eigenvalues of an exactly symmetric matrix.
pub fn eigenvalues<T: Real>(m: &SymMatrix<T>) -> Result<Spectrum<T>, EigenError> {
    if m.data.iter().any(|v| !v.is_finite()) {
        return Err(EigenError::NonFinite);
    }
    if let Some((row, col)) = m.asymmetry() {
        return Err(EigenError::NotSymmetric { row, col });
    }
    let (d, e) = tridiagonalize(m);
    Spectrum::from_values(tridiagonal_eigenvalues(d, &e)?)
}

/// Runs `f` on a rayon pool with the given worker count (`None`: rayon's default).
pub fn with_threads<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
    match threads {
        None => f(),
        Some(k) => rayon::ThreadPoolBuilder::new().num_threads(k.max(1)).build().expect("thread pool").install(f),
    }
}

/// Sorted spectrum of replica `replica` of the ensemble.
pub fn replica_spectrum(spec: &EnsembleSpec, master_seed: u64, replica: u64) -> Result<Spectrum<f64>, BatchError> {
    let mut h = crate::spectra::SymMatrix::zeros(spec.n);
    sample_matrix_into(spec, RngStream::new(master_seed, replica), &mut h);
    eigenvalues(&h).map_err(|source| BatchError::Eigen { replica, source })
}

/// Spectra of `replicas` independent samples, indexed by replica.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatchResult {
    pub spectra: Vec<Spectrum<f64>>,
    pub seeds: Vec<RngStream>,
    pub wall_time_secs: f64,
}

/// Samples and diagonalizes `replicas` matrices in parallel. The stored result
/// depends only on `(spec, replicas, master_seed)`.
pub fn run_batch(spec: &EnsembleSpec, replicas: usize, master_seed: u64) -> Result<BatchResult, BatchError> {
    if replicas == 0 {
        return Err(BatchError::NoReplicas);
    }
    let start = Instant::now();
    let spectra = (0..replicas as u64)
        .into_par_iter()
        .map(|r| replica_spectrum(spec, master_seed, r))
        .collect::<Result<Vec<_>, _>>()?;
    let seeds = (0..replicas as u64).map(|r| RngStream::new(master_seed, r)).collect();
    Ok(BatchResult { spectra, seeds, wall_time_secs: start.elapsed().as_secs_f64() })
}

/// Writes `replica,index,lambda` rows.
pub fn write_spectra_csv<W: std::io::Write>(batch: &BatchResult, mut out: W) -> std::io::Result<()> {
    writeln!(out, "replica,index,lambda")?;
    for (r, s) in batch.spectra.iter().enumerate() {
        for (i, v) in s.values().iter().enumerate() {
            writeln!(out, "{r},{i},{}", crate::fmt_f64(*v))?;
        }
    }
    Ok(())
}
