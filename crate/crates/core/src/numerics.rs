//! Dense row-major matrices and vectors, seeded Gaussian sampling, and
//! spectral-norm estimation by power iteration.

use std::fmt;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Power-iteration tolerance used throughout the crate.
pub const SPECTRAL_TOL: f64 = 1e-10;
/// Power-iteration iteration cap used throughout the crate.
pub const SPECTRAL_MAX_ITER: usize = 5000;

const SPECTRAL_START_SEED: u64 = 0x5eed_0f_90_3e_4a11;

/// Dense real vector with finite entries.
#[derive(Clone, PartialEq)]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::invalid("vector must have positive dimension"));
        }
        if let Some(i) = entries.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("vector entry {i} is not finite")));
        }
        Ok(Vector(entries))
    }

    pub fn from_slice(entries: &[f64]) -> Result<Self> {
        Self::new(entries.to_vec())
    }

    /// Wraps entries produced by internal arithmetic on finite inputs.
    pub(crate) fn from_raw(entries: Vec<f64>) -> Self {
        Vector(entries)
    }

    pub fn zeros(dim: usize) -> Self {
        Vector(vec![0.0; dim])
    }

    /// The `i`-th standard basis vector of `R^dim`.
    pub fn basis(dim: usize, i: usize) -> Self {
        let mut v = vec![0.0; dim];
        v[i] = 1.0;
        Vector(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    pub fn dot(&self, other: &Vector) -> f64 {
        dot(&self.0, &other.0)
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0)
    }

    pub fn scaled(&self, c: f64) -> Vector {
        Vector(self.0.iter().map(|v| c * v).collect())
    }

    pub fn add(&self, other: &Vector) -> Vector {
        Vector(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &Vector) -> Vector {
        Vector(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    /// Unit vector in the direction of `self`; errors on the zero vector.
    pub fn normalized(&self) -> Result<Vector> {
        let n = self.norm();
        if n == 0.0 {
            return Err(Error::invalid("cannot normalize the zero vector"));
        }
        Ok(self.scaled(1.0 / n))
    }

    pub fn distance(&self, other: &Vector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

impl fmt::Debug for Vector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.0.iter()).finish()
    }
}

impl std::ops::Index<usize> for Vector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Dense row-major real matrix with finite entries.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid(format!(
                "matrix dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "matrix data has length {}, expected {}",
                data.len(),
                rows * cols
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("matrix entries must be finite"));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::invalid("ragged rows"));
        }
        Self::new(r, c, rows.iter().flat_map(|row| row.iter().copied()).collect())
    }

    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Matrix { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix::from_raw(rows, cols, vec![0.0; rows * cols])
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![1.0; n])
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Matrix::zeros(n, n);
        for (i, &v) in diag.iter().enumerate() {
            m.data[i * n + i] = v;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub(crate) fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    pub fn scaled(&self, c: f64) -> Matrix {
        Matrix::from_raw(self.rows, self.cols, self.data.iter().map(|v| c * v).collect())
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.check_same_shape(other)?;
        Ok(Matrix::from_raw(
            self.rows,
            self.cols,
            self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        ))
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.check_same_shape(other)?;
        Ok(Matrix::from_raw(
            self.rows,
            self.cols,
            self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        ))
    }

    fn check_same_shape(&self, other: &Matrix) -> Result<()> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::invalid(format!(
                "shape mismatch: {}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(())
    }

    pub fn matvec(&self, x: &Vector) -> Result<Vector> {
        if x.dim() != self.cols {
            return Err(Error::invalid(format!(
                "matvec: matrix has {} columns, vector has dimension {}",
                self.cols,
                x.dim()
            )));
        }
        let mut out = vec![0.0; self.rows];
        self.matvec_into(x.as_slice(), &mut out);
        Ok(Vector::from_raw(out))
    }

    /// `out = self * x` on raw slices; lengths must match.
    pub(crate) fn matvec_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols)) {
            *o = dot(row, x);
        }
    }

    /// `out = selfᵀ * x` on raw slices.
    pub(crate) fn matvec_t_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        out.fill(0.0);
        for (&xi, row) in x.iter().zip(self.data.chunks_exact(self.cols)) {
            if xi != 0.0 {
                axpy(xi, row, out);
            }
        }
    }

    pub fn matvec_t(&self, x: &Vector) -> Result<Vector> {
        if x.dim() != self.rows {
            return Err(Error::invalid(format!(
                "transposed matvec: matrix has {} rows, vector has dimension {}",
                self.rows,
                x.dim()
            )));
        }
        let mut out = vec![0.0; self.cols];
        self.matvec_t_into(x.as_slice(), &mut out);
        Ok(Vector::from_raw(out))
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::invalid(format!(
                "matmul: {}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (p, &a) in self.row(i).iter().enumerate() {
                if a != 0.0 {
                    axpy(a, other.row(p), dst);
                }
            }
        }
        Ok(out)
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    // independent lanes so the reduction vectorizes
    let mut acc = [0.0f64; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (xa, xb) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += xa[l] * xb[l];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seeded, counter-based random stream.
///
/// Independent substreams are addressed by a base seed and a path of
/// integers (e.g. `(base_seed, k, trial)`); the same address always yields
/// the same stream.
#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Derives the seed of the substream at `path` below `base_seed`.
    pub fn derive_seed(base_seed: u64, path: &[u64]) -> u64 {
        path.iter().fold(splitmix64(base_seed), |h, &p| {
            splitmix64(h ^ splitmix64(p.wrapping_add(0x632b_e59b_d9b4_e019)))
        })
    }

    pub fn substream(base_seed: u64, path: &[u64]) -> Self {
        Rng::new(Self::derive_seed(base_seed, path))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    pub fn gaussian_vec(&mut self, len: usize, std_dev: f64) -> Vec<f64> {
        (0..len).map(|_| std_dev * self.standard_normal()).collect()
    }

    /// Uniform sample from the unit sphere in `R^dim`.
    pub fn unit_sphere(&mut self, dim: usize) -> Vector {
        loop {
            let v = self.gaussian_vec(dim, 1.0);
            let n = norm(&v);
            if n > 0.0 {
                return Vector::from_raw(v.into_iter().map(|x| x / n).collect());
            }
        }
    }
}

/// Matrix with i.i.d. `N(0, variance)` entries.
pub fn gaussian_matrix(rows: usize, cols: usize, variance: f64, rng: &mut Rng) -> Result<Matrix> {
    if rows == 0 || cols == 0 {
        return Err(Error::invalid(format!(
            "gaussian_matrix: dimensions must be positive, got {rows}x{cols}"
        )));
    }
    if !(variance > 0.0 && variance.is_finite()) {
        return Err(Error::invalid(format!(
            "gaussian_matrix: variance must be positive, got {variance}"
        )));
    }
    let data = rng.gaussian_vec(rows * cols, variance.sqrt());
    Ok(Matrix::from_raw(rows, cols, data))
}

/// Vector with i.i.d. `N(0, variance)` entries.
pub fn gaussian_vector(dim: usize, variance: f64, rng: &mut Rng) -> Result<Vector> {
    if dim == 0 {
        return Err(Error::invalid("gaussian_vector: dimension must be positive"));
    }
    if !(variance > 0.0 && variance.is_finite()) {
        return Err(Error::invalid(format!(
            "gaussian_vector: variance must be positive, got {variance}"
        )));
    }
    Ok(Vector::from_raw(rng.gaussian_vec(dim, variance.sqrt())))
}

/// Largest singular value of `m` by power iteration on `mᵀm`.
///
/// Iterates `v ← mᵀm v / ‖mᵀm v‖` from a fixed seeded start and stops when the
/// Rayleigh quotient `‖m v‖²` changes by less than `tol` relative.
pub fn spectral_norm(m: &Matrix, tol: f64, max_iter: usize) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::invalid(format!("spectral_norm: tol must be positive, got {tol}")));
    }
    if m.is_zero() {
        return Err(Error::invalid("spectral_norm: matrix is zero"));
    }
    let mut rng = Rng::new(SPECTRAL_START_SEED);
    let mut v = rng.unit_sphere(m.cols()).into_vec();
    let mut mv = vec![0.0; m.rows()];
    let mut next = vec![0.0; m.cols()];
    let mut prev = f64::NAN;
    for _ in 0..max_iter {
        m.matvec_into(&v, &mut mv);
        let lambda = dot(&mv, &mv);
        m.matvec_t_into(&mv, &mut next);
        let n = norm(&next);
        if n == 0.0 {
            // start vector in the null space; restart from a fresh direction
            v = rng.unit_sphere(m.cols()).into_vec();
            prev = f64::NAN;
            continue;
        }
        if (lambda - prev).abs() <= tol * lambda {
            return Ok(lambda.sqrt());
        }
        prev = lambda;
        for (vi, ni) in v.iter_mut().zip(&next) {
            *vi = ni / n;
        }
    }
    Err(Error::Convergence {
        iterations: max_iter,
        last_estimate: prev.max(0.0).sqrt(),
    })
}

/// Spectral norm with the crate defaults; a zero matrix has norm 0 and a
/// non-converged run yields its last (lower-bound) estimate.
pub fn operator_norm(m: &Matrix) -> f64 {
    if m.is_zero() {
        return 0.0;
    }
    match spectral_norm(m, SPECTRAL_TOL, SPECTRAL_MAX_ITER) {
        Ok(s) => s,
        Err(Error::Convergence { last_estimate, .. }) => last_estimate,
        Err(e) => unreachable!("spectral_norm on a nonzero matrix: {e}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_matrix_is_deterministic() {
        let a = gaussian_matrix(3, 2, 1.0, &mut Rng::new(7)).unwrap();
        let b = gaussian_matrix(3, 2, 1.0, &mut Rng::new(7)).unwrap();
        assert_eq!(a.as_slice(), b.as_slice());
    }

    #[test]
    fn gaussian_matrix_seeds_differ() {
        let a = gaussian_matrix(3, 2, 1.0, &mut Rng::new(7)).unwrap();
        let b = gaussian_matrix(3, 2, 1.0, &mut Rng::new(8)).unwrap();
        assert!(a.as_slice().iter().zip(b.as_slice()).any(|(x, y)| x != y));
    }

    #[test]
    fn gaussian_matrix_rejects_bad_args() {
        let mut rng = Rng::new(1);
        assert!(gaussian_matrix(0, 2, 1.0, &mut rng).is_err());
        assert!(gaussian_matrix(2, 0, 1.0, &mut rng).is_err());
        assert!(gaussian_matrix(2, 2, 0.0, &mut rng).is_err());
        assert!(gaussian_matrix(2, 2, -1.0, &mut rng).is_err());
    }

    #[test]
    fn gaussian_matrix_moments() {
        let (rows, cols) = (2000, 5);
        let variance = 1.0 / 2000.0;
        for seed in [1u64, 2, 3] {
            let m = gaussian_matrix(rows, cols, variance, &mut Rng::new(seed)).unwrap();
            let n = (rows * cols) as f64;
            let mean = m.as_slice().iter().sum::<f64>() / n;
            let var = m.as_slice().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            assert!(mean.abs() < 3.0 * (variance / n).sqrt(), "mean {mean}");
            assert!((var - variance).abs() < 0.1 * variance, "var {var}");
        }
    }

    #[test]
    fn spectral_norm_of_simple_matrices() {
        let s = spectral_norm(&Matrix::identity(4), 1e-10, 5000).unwrap();
        assert!((s - 1.0).abs() < 1e-10);
        let s = spectral_norm(&Matrix::diagonal(&[3.0, 1.0]), 1e-10, 5000).unwrap();
        assert!((s - 3.0).abs() < 1e-9);
    }

    #[test]
    fn spectral_norm_rejects_zero_and_bad_tol() {
        assert!(spectral_norm(&Matrix::zeros(2, 2), 1e-10, 10).is_err());
        assert!(spectral_norm(&Matrix::identity(2), 0.0, 10).is_err());
    }

    #[test]
    fn spectral_norm_reports_nonconvergence() {
        let m = gaussian_matrix(30, 30, 1.0, &mut Rng::new(3)).unwrap();
        match spectral_norm(&m, 1e-300, 3) {
            Err(Error::Convergence { iterations, last_estimate }) => {
                assert_eq!(iterations, 3);
                assert!(last_estimate > 0.0);
            }
            other => panic!("expected convergence error, got {other:?}"),
        }
    }

    #[test]
    fn substreams_are_reproducible_and_distinct() {
        let a = Rng::substream(5, &[1, 2]).next_u64();
        let b = Rng::substream(5, &[1, 2]).next_u64();
        let c = Rng::substream(5, &[2, 1]).next_u64();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn transpose_matvec_agrees() {
        let m = gaussian_matrix(4, 3, 1.0, &mut Rng::new(11)).unwrap();
        let x = gaussian_vector(4, 1.0, &mut Rng::new(12)).unwrap();
        let a = m.matvec_t(&x).unwrap();
        let b = m.transpose().matvec(&x).unwrap();
        for (p, q) in a.iter().zip(b.iter()) {
            assert!((p - q).abs() < 1e-14);
        }
    }
}
