//! Dense matrices, seeded randomness and stable scalar kernels.
//!
//! Everything here is `f64` and evaluated in a fixed order so that results are
//! bitwise reproducible for a given input.

use std::ops::Deref;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Pivots smaller than this are treated as zero by [`solve_square`].
pub const PIVOT_TOLERANCE: f64 = 1e-12;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(
                "matrix construction",
                format!("{rows}x{cols}"),
                format!("{} values", data.len()),
            ));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Builds a matrix from nested rows; every row must have the same length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::shape(
                    "matrix rows",
                    format!("row 0 has {cols} columns"),
                    format!("row {i} has {}", r.len()),
                ));
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn column_vector(values: &[f64]) -> Self {
        Matrix {
            rows: values.len(),
            cols: 1,
            data: values.to_vec(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.cols;
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    /// Copies the listed rows, in order, into a new matrix.
    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn shape_string(&self) -> String {
        format!("{}x{}", self.rows, self.cols)
    }
}

/// An n-by-d table of observations with optional column names.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    values: Matrix,
    column_names: Option<Vec<String>>,
}

impl SampleMatrix {
    /// Wraps `values`, rejecting NaN/Inf entries and mislabelled columns.
    pub fn new(values: Matrix, column_names: Option<Vec<String>>) -> Result<Self> {
        if let Some(names) = &column_names {
            if names.len() != values.cols() {
                return Err(Error::shape(
                    "column names",
                    format!("{} names", names.len()),
                    format!("{} columns", values.cols()),
                ));
            }
        }
        if let Some(pos) = values.as_slice().iter().position(|v| !v.is_finite()) {
            let c = values.cols().max(1);
            return Err(Error::NonFinite(format!(
                "sample entry at row {}, column {}",
                pos / c,
                pos % c
            )));
        }
        Ok(SampleMatrix {
            values,
            column_names,
        })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?, None)
    }

    /// A single-feature sample.
    pub fn from_column(values: &[f64]) -> Result<Self> {
        Self::new(Matrix::column_vector(values), None)
    }

    pub fn empty(cols: usize) -> Self {
        SampleMatrix {
            values: Matrix::zeros(0, cols),
            column_names: None,
        }
    }

    pub fn column_names(&self) -> Option<&[String]> {
        self.column_names.as_deref()
    }

    /// Name of column `j`, falling back to `x{j}`.
    pub fn column_name(&self, j: usize) -> String {
        self.column_names
            .as_ref()
            .map(|n| n[j].clone())
            .unwrap_or_else(|| format!("x{j}"))
    }

    pub fn matrix(&self) -> &Matrix {
        &self.values
    }

    pub fn into_matrix(self) -> Matrix {
        self.values
    }

    pub fn select_rows(&self, idx: &[usize]) -> SampleMatrix {
        SampleMatrix {
            values: self.values.select_rows(idx),
            column_names: self.column_names.clone(),
        }
    }
}

impl Deref for SampleMatrix {
    type Target = Matrix;

    fn deref(&self) -> &Matrix {
        &self.values
    }
}

/// Computes `x · wᵀ + b` row by row.
///
/// Each output entry is accumulated over the input columns in index order and
/// the bias is added last, so the result is bitwise identical to a naive
/// triple loop.
pub fn affine(x: &Matrix, w: &Matrix, b: &[f64]) -> Result<Matrix> {
    if w.cols() != x.cols() {
        return Err(Error::shape("affine input", x.shape_string(), w.shape_string()));
    }
    if b.len() != w.rows() {
        return Err(Error::shape(
            "affine bias",
            w.shape_string(),
            format!("bias of length {}", b.len()),
        ));
    }
    let units = w.rows();
    let wt = w.transpose();
    let mut out = Matrix::zeros(x.rows(), units);
    for i in 0..x.rows() {
        let xi = x.row(i);
        let oi = out.row_mut(i);
        for (k, &xk) in xi.iter().enumerate() {
            let wk = wt.row(k);
            for (o, &wjk) in oi.iter_mut().zip(wk) {
                *o += wjk * xk;
            }
        }
        for (o, &bj) in oi.iter_mut().zip(b) {
            *o += bj;
        }
    }
    Ok(out)
}

/// A square linear system `a · z = b`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSquareSystem {
    pub a: Matrix,
    pub b: Vec<f64>,
}

impl DenseSquareSystem {
    pub fn new(a: Matrix, b: Vec<f64>) -> Result<Self> {
        if a.rows() != a.cols() {
            return Err(Error::shape("square system", a.shape_string(), "square matrix"));
        }
        if b.len() != a.rows() {
            return Err(Error::shape(
                "square system rhs",
                a.shape_string(),
                format!("rhs of length {}", b.len()),
            ));
        }
        Ok(DenseSquareSystem { a, b })
    }
}

/// Gaussian elimination with partial pivoting.
pub fn solve_square(sys: &DenseSquareSystem) -> Result<Vec<f64>> {
    let k = sys.a.rows();
    if sys.a.cols() != k || sys.b.len() != k {
        return Err(Error::shape(
            "solve_square",
            sys.a.shape_string(),
            format!("rhs of length {}", sys.b.len()),
        ));
    }
    if sys.a.as_slice().iter().chain(&sys.b).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("entry of linear system".into()));
    }
    let mut a = sys.a.clone();
    let mut b = sys.b.clone();
    for col in 0..k {
        let (piv_row, piv_abs) = (col..k)
            .map(|r| (r, a.get(r, col).abs()))
            .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if piv_abs < PIVOT_TOLERANCE {
            return Err(Error::Singular {
                column: col,
                pivot: piv_abs,
            });
        }
        if piv_row != col {
            for j in 0..k {
                let tmp = a.get(col, j);
                a.set(col, j, a.get(piv_row, j));
                a.set(piv_row, j, tmp);
            }
            b.swap(col, piv_row);
        }
        let pivot = a.get(col, col);
        for r in col + 1..k {
            let factor = a.get(r, col) / pivot;
            if factor == 0.0 {
                continue;
            }
            for j in col..k {
                let v = a.get(r, j) - factor * a.get(col, j);
                a.set(r, j, v);
            }
            b[r] -= factor * b[col];
        }
    }
    let mut z = vec![0.0; k];
    for r in (0..k).rev() {
        let mut acc = b[r];
        for j in r + 1..k {
            acc -= a.get(r, j) * z[j];
        }
        z[r] = acc / a.get(r, r);
    }
    Ok(z)
}

/// Inverse of a square matrix, column by column through [`solve_square`].
pub fn invert(a: &Matrix) -> Result<Matrix> {
    let k = a.rows();
    let mut inv = Matrix::zeros(k, k);
    for j in 0..k {
        let mut e = vec![0.0; k];
        e[j] = 1.0;
        let col = solve_square(&DenseSquareSystem::new(a.clone(), e)?)?;
        for (i, v) in col.into_iter().enumerate() {
            inv.set(i, j, v);
        }
    }
    Ok(inv)
}

/// Deterministic random stream (ChaCha8, seeded from a `u64`).
///
/// A state has a single owner; hand out independent streams with [`RngState::fork`].
#[derive(Debug, Clone)]
pub struct RngState {
    seed: u64,
    inner: ChaCha8Rng,
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        RngState {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform draw in `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.inner.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// Box–Muller pair from two uniforms.
    pub fn normal_pair(&mut self) -> (f64, f64) {
        // 1 - u lies in (0, 1], keeping the log finite.
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = 2.0 * std::f64::consts::PI * u2;
        (radius * angle.cos(), radius * angle.sin())
    }

    pub fn normal(&mut self) -> f64 {
        self.normal_pair().0
    }

    /// Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    /// A new independent stream whose seed is drawn from this one.
    pub fn fork(&mut self) -> RngState {
        RngState::new(self.next_u64())
    }
}

/// `n` uniform draws on `[0, 1)`.
pub fn rng_uniform(state: &mut RngState, n: usize) -> Vec<f64> {
    (0..n).map(|_| state.uniform()).collect()
}

/// `n` standard normal draws, two per Box–Muller pair.
pub fn rng_normal(state: &mut RngState, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    while out.len() < n {
        let (a, b) = state.normal_pair();
        out.push(a);
        out.push(b);
    }
    out.truncate(n);
    out
}

/// `log(1 + e^z)` without overflow.
pub fn stable_softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Logistic function `1 / (1 + e^{-z})`, evaluated on the stable side.
pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Mean of a slice, summed left to right.
pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_affine(x: &Matrix, w: &Matrix, b: &[f64]) -> Matrix {
        let mut out = Matrix::zeros(x.rows(), w.rows());
        for i in 0..x.rows() {
            for j in 0..w.rows() {
                let mut acc = 0.0;
                for k in 0..x.cols() {
                    acc += w.get(j, k) * x.get(i, k);
                }
                out.set(i, j, acc + b[j]);
            }
        }
        out
    }

    fn random_matrix(rng: &mut RngState, r: usize, c: usize) -> Matrix {
        Matrix::from_vec(r, c, rng_normal(rng, r * c)).unwrap()
    }

    #[test]
    fn affine_identity_and_forced_values() {
        let x = Matrix::from_rows(&[[1.0, 2.0]]).unwrap();
        let w = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        assert_eq!(affine(&x, &w, &[0.0, 0.0]).unwrap().as_slice(), &[1.0, 2.0]);

        let x = Matrix::from_rows(&[[1.0, 1.0]]).unwrap();
        let w = Matrix::from_rows(&[[2.0, 3.0]]).unwrap();
        assert_eq!(affine(&x, &w, &[-5.0]).unwrap().as_slice(), &[0.0]);
    }

    #[test]
    fn affine_matches_triple_loop_bitwise() {
        let mut rng = RngState::new(3);
        let x = random_matrix(&mut rng, 3, 4);
        let w = random_matrix(&mut rng, 5, 4);
        let b = rng_normal(&mut rng, 5);
        let fast = affine(&x, &w, &b).unwrap();
        let slow = naive_affine(&x, &w, &b);
        for (a, s) in fast.as_slice().iter().zip(slow.as_slice()) {
            assert_eq!(a.to_bits(), s.to_bits());
        }
    }

    #[test]
    fn affine_rejects_mismatched_shapes() {
        let x = Matrix::zeros(2, 3);
        let w = Matrix::zeros(4, 2);
        let err = affine(&x, &w, &[0.0; 4]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("2x3") && msg.contains("4x2"), "{msg}");
        let w = Matrix::zeros(4, 3);
        assert!(affine(&x, &w, &[0.0; 3]).is_err());
    }

    #[test]
    fn solve_identity_and_diagonal() {
        let mut eye = Matrix::zeros(3, 3);
        for i in 0..3 {
            eye.set(i, i, 1.0);
        }
        let z = solve_square(&DenseSquareSystem::new(eye, vec![1.0, 2.0, 3.0]).unwrap()).unwrap();
        assert_eq!(z, vec![1.0, 2.0, 3.0]);

        let a = Matrix::from_rows(&[[2.0, 0.0], [0.0, 4.0]]).unwrap();
        let z = solve_square(&DenseSquareSystem::new(a, vec![2.0, 8.0]).unwrap()).unwrap();
        assert_eq!(z, vec![1.0, 2.0]);
    }

    fn residual(a: &Matrix, z: &[f64], b: &[f64]) -> f64 {
        (0..a.rows())
            .map(|i| {
                let az: f64 = a.row(i).iter().zip(z).map(|(x, y)| x * y).sum();
                (az - b[i]).abs()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn solve_random_systems_multiply_back() {
        let mut rng = RngState::new(11);
        for trial in 0..100 {
            let k = 1 + trial % 20;
            let mut a = random_matrix(&mut rng, k, k);
            // Diagonal dominance keeps the system well conditioned.
            for i in 0..k {
                a.set(i, i, a.get(i, i) + 2.0 * k as f64);
            }
            let b = rng_normal(&mut rng, k);
            let z = solve_square(&DenseSquareSystem::new(a.clone(), b.clone()).unwrap()).unwrap();
            let bmax = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(residual(&a, &z, &b) <= 1e-8 * (1.0 + bmax));
        }
    }

    #[test]
    fn solve_flags_singular() {
        let a = Matrix::from_rows(&[[1.0, 2.0], [2.0, 4.0]]).unwrap();
        let err = solve_square(&DenseSquareSystem::new(a, vec![1.0, 1.0]).unwrap()).unwrap_err();
        assert!(matches!(err, Error::Singular { column: 1, .. }));
    }

    #[test]
    fn rng_is_deterministic() {
        let mut a = RngState::new(42);
        let mut b = RngState::new(42);
        assert!(rng_normal(&mut a, 0).is_empty());
        assert_eq!(rng_normal(&mut a, 100), rng_normal(&mut b, 100));
        assert_eq!(rng_uniform(&mut a, 100), rng_uniform(&mut b, 100));
    }

    #[test]
    fn rng_normal_moments() {
        let mut rng = RngState::new(42);
        let xs = rng_normal(&mut rng, 100_000);
        let m = mean(&xs);
        let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64;
        assert!(m.abs() < 0.02, "mean {m}");
        assert!((var - 1.0).abs() < 0.03, "var {var}");
    }

    #[test]
    fn softplus_values() {
        assert_eq!(stable_softplus(0.0), std::f64::consts::LN_2);
        let e50 = (-50.0f64).exp();
        // log1p(e^-50) = e^-50 - e^-100/2 + ..., so e^-50 is exact to 1e-21 relative.
        assert!(((stable_softplus(-50.0) - e50) / e50).abs() <= 1e-12);
        assert!((stable_softplus(50.0) - (50.0 + e50)).abs() <= 1e-12);
        assert!(stable_softplus(700.0).is_finite());
        assert!(stable_softplus(-700.0) > 0.0);
    }

    #[test]
    fn softplus_is_monotone_on_grid() {
        let n = 100_000;
        let mut prev = f64::NEG_INFINITY;
        for k in 0..=n {
            let z = -700.0 + 1400.0 * k as f64 / n as f64;
            let s = stable_softplus(z);
            assert!(s >= prev, "non-monotone at {z}");
            prev = s;
        }
    }
}
