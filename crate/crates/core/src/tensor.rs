//! Dense f64 kernels shared by the rest of the crate.
//!
//! Vectors are plain slices / `Vec<f64>`; [`Matrix`] is a row-major dense
//! matrix. All reductions shift by the maximum before exponentiating.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Name of the PRNG algorithm, written into reports and checkpoints.
pub const RNG_ALGORITHM: &str = "ChaCha8";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::Dimension(format!(
                "matrix {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::Dimension(format!("row {i} has {} columns, expected {cols}", r.len())));
            }
            data.extend_from_slice(r);
        }
        Ok(Self { rows: rows.len(), cols, data })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
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

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        t
    }

    /// `out = self · x + bias` (bias optional).
    pub fn matvec_into(&self, x: &[f64], bias: Option<&[f64]>, out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (r, o) in out.iter_mut().enumerate() {
            let b = bias.map_or(0.0, |b| b[r]);
            *o = b + dot(self.row(r), x);
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows];
        self.matvec_into(x, None, &mut out);
        out
    }

    /// `out += selfᵀ · y`.
    pub fn matvec_transpose_acc(&self, y: &[f64], out: &mut [f64]) {
        debug_assert_eq!(y.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        for (r, &yr) in y.iter().enumerate() {
            if yr == 0.0 {
                continue;
            }
            axpy(yr, self.row(r), out);
        }
    }

    /// `self += a ⊗ b` (rank-one update).
    pub fn add_outer(&mut self, a: &[f64], b: &[f64]) {
        debug_assert_eq!(a.len(), self.rows);
        debug_assert_eq!(b.len(), self.cols);
        for (r, &ar) in a.iter().enumerate() {
            if ar == 0.0 {
                continue;
            }
            let cols = self.cols;
            axpy(ar, b, &mut self.data[r * cols..(r + 1) * cols]);
        }
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::Dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[r * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let oc = other.cols;
                axpy(a, other.row(k), &mut out.data[r * oc..(r + 1) * oc]);
            }
        }
        Ok(out)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    // Four partial sums let the compiler vectorize; the summation order is fixed.
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let j = i * 4;
        acc[0] += a[j] * b[j];
        acc[1] += a[j + 1] * b[j + 1];
        acc[2] += a[j + 2] * b[j + 2];
        acc[3] += a[j + 3] * b[j + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for j in chunks * 4..a.len() {
        s += a[j] * b[j];
    }
    s
}

/// `y += a · x`.
#[inline]
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn non_empty(v: &[f64], what: &str) -> Result<()> {
    if v.is_empty() {
        Err(Error::Dimension(format!("{what}: empty input")))
    } else {
        Ok(())
    }
}

#[inline]
pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| sigmoid_scalar(x)).collect()
}

pub fn softmax(v: &[f64]) -> Result<Vec<f64>> {
    non_empty(v, "softmax")?;
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = v.iter().map(|&x| (x - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / z).collect())
}

pub fn log_sum_exp(v: &[f64]) -> Result<f64> {
    non_empty(v, "log_sum_exp")?;
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = v.iter().map(|&x| (x - m).exp()).sum();
    Ok(m + s.ln())
}

/// Index of the maximum; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> Result<usize> {
    non_empty(v, "argmax")?;
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    Ok(best)
}

/// Deterministic seeded generator. Child streams are derived by hashing
/// the parent seed with a tag, never by sharing one generator across owners.
#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self { seed, inner: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn algorithm(&self) -> &'static str {
        RNG_ALGORITHM
    }

    /// A fresh generator for `(self.seed, tag)`; independent of how much of
    /// this stream has been consumed.
    pub fn child(&self, tag: u64) -> SeededRng {
        SeededRng::new(derive_seed(self.seed, tag))
    }
}

impl rand::RngCore for SeededRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> std::result::Result<(), rand::Error> {
        self.inner.try_fill_bytes(dest)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a master seed with a tag into a child seed.
pub fn derive_seed(master: u64, tag: u64) -> u64 {
    splitmix64(splitmix64(master) ^ tag.rotate_left(17) ^ 0xA076_1D64_78BD_642F)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::RngCore;

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax(&[0.0, 0.0]).unwrap(), vec![0.5, 0.5]);
        let s = softmax(&[1000.0, 0.0]).unwrap();
        assert_abs_diff_eq!(s[0], 1.0, epsilon = 1e-12);
        assert!(s[1] < 1e-300 || s[1] == 0.0);
        let s = softmax(&[1.0, 2.0, 3.0]).unwrap();
        for (a, b) in s.iter().zip([0.09003057, 0.24472847, 0.66524096]) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-8);
        }
        assert!(matches!(softmax(&[]), Err(Error::Dimension(_))));
    }

    #[test]
    fn sigmoid_examples() {
        assert_eq!(sigmoid(&[0.0]), vec![0.5]);
        let s = sigmoid(&[-3.7, 3.7]);
        assert_abs_diff_eq!(s[0] + s[1], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(sigmoid(&[2.0])[0], 0.8807970780, epsilon = 1e-10);
        assert!(sigmoid_scalar(-800.0) >= 0.0 && sigmoid_scalar(800.0) <= 1.0);
    }

    #[test]
    fn log_sum_exp_examples() {
        assert_abs_diff_eq!(log_sum_exp(&[0.0, 0.0]).unwrap(), 2f64.ln(), epsilon = 1e-15);
        assert_eq!(log_sum_exp(&[-4.25]).unwrap(), -4.25);
        assert_abs_diff_eq!(log_sum_exp(&[1000.0, 1000.0]).unwrap(), 1000.0 + 2f64.ln(), epsilon = 1e-12);
        assert!(log_sum_exp(&[]).is_err());
    }

    #[test]
    fn argmax_examples() {
        assert_eq!(argmax(&[1.0, 3.0, 2.0]).unwrap(), 1);
        assert_eq!(argmax(&[5.0, 5.0]).unwrap(), 0);
        assert_eq!(argmax(&[-1.0, -2.0]).unwrap(), 0);
        assert!(argmax(&[]).is_err());
    }

    #[test]
    fn matrix_ops() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        assert_eq!(m.matvec(&[1.0, -1.0]), vec![-1.0, -1.0, -1.0]);
        let mut acc = vec![0.0; 2];
        m.matvec_transpose_acc(&[1.0, 0.0, 1.0], &mut acc);
        assert_eq!(acc, vec![6.0, 8.0]);
        let p = m.transpose().matmul(&m).unwrap();
        assert_eq!(p.as_slice(), &[35.0, 44.0, 44.0, 56.0]);
        assert!(Matrix::from_vec(2, 2, vec![0.0; 3]).is_err());
    }

    #[test]
    fn rng_streams_reproduce() {
        let mut a = SeededRng::new(7);
        let mut b = SeededRng::new(7);
        let mut c = SeededRng::new(8);
        let xa: Vec<u64> = (0..16).map(|_| a.next_u64()).collect();
        let xb: Vec<u64> = (0..16).map(|_| b.next_u64()).collect();
        let xc: Vec<u64> = (0..16).map(|_| c.next_u64()).collect();
        assert_eq!(xa, xb);
        assert_ne!(xa, xc);
        // children ignore parent consumption
        assert_eq!(a.child(3).next_u64(), SeededRng::new(7).child(3).next_u64());
        assert_eq!(a.algorithm(), "ChaCha8");
    }

    proptest! {
        #[test]
        fn softmax_sums_to_one(v in prop::collection::vec(-1e3f64..1e3, 1..20)) {
            let s = softmax(&v).unwrap();
            let total: f64 = s.iter().sum();
            prop_assert!((total - 1.0).abs() <= 1e-12);
            prop_assert!(s.iter().all(|&p| (0.0..=1.0).contains(&p)));
        }

        #[test]
        fn log_sum_exp_shift(v in prop::collection::vec(-50f64..50.0, 1..12), c in -100f64..100.0) {
            let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
            let a = log_sum_exp(&shifted).unwrap();
            let b = log_sum_exp(&v).unwrap() + c;
            prop_assert!((a - b).abs() <= 1e-9);
            prop_assert!(log_sum_exp(&v).unwrap() >= v.iter().copied().fold(f64::MIN, f64::max));
        }

        #[test]
        fn argmax_monotone_invariant(v in prop::collection::vec(-5f64..5.0, 1..12)) {
            let t: Vec<f64> = v.iter().map(|x| x.exp() * 3.0 + 1.0).collect();
            prop_assert_eq!(argmax(&v).unwrap(), argmax(&t).unwrap());
        }
    }
}
