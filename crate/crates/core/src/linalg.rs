//! Banded symmetric positive definite storage and Cholesky solve.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Lower band of a symmetric matrix: `a(i, j)` for `i - bw <= j <= i`.
#[derive(Clone, Debug)]
pub struct BandedSpd {
    n: usize,
    bw: usize,
    // row i holds a(i, i - bw ..= i)
    data: Vec<f64>,
}

impl BandedSpd {
    pub fn zeros(n: usize, bandwidth: usize) -> Self {
        Self {
            n,
            bw: bandwidth,
            data: vec![0.0; n * (bandwidth + 1)],
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.bw);
        i * (self.bw + 1) + (self.bw + j - i)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.bw {
            0.0
        } else {
            self.data[self.slot(i, j)]
        }
    }

    /// Adds `v` to `a(i, j)` (and so to `a(j, i)`).
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        assert!(i - j <= self.bw, "entry ({i}, {j}) outside bandwidth {}", self.bw);
        let s = self.slot(i, j);
        self.data[s] += v;
    }

    /// `y = A x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            for j in lo..i {
                let a = self.data[self.slot(i, j)];
                y[i] += a * x[j];
                y[j] += a * x[i];
            }
            y[i] += self.data[self.slot(i, i)] * x[i];
        }
        y
    }

    /// In-place factorization `A = L L^T`.
    pub fn cholesky(mut self) -> Result<BandedCholesky> {
        let bw = self.bw;
        for i in 0..self.n {
            let lo = i.saturating_sub(bw);
            for j in lo..=i {
                let mut s = self.data[self.slot(i, j)];
                let klo = lo.max(j.saturating_sub(bw));
                for k in klo..j {
                    s -= self.data[self.slot(i, k)] * self.data[self.slot(j, k)];
                }
                if j == i {
                    if !(s > 0.0) {
                        return Err(Error::Decomposition(format!("pivot {s:e} at row {i} is not positive")));
                    }
                    let d = self.slot(i, i);
                    self.data[d] = libm::sqrt(s);
                } else {
                    let v = s / self.data[self.slot(j, j)];
                    let o = self.slot(i, j);
                    self.data[o] = v;
                }
            }
        }
        Ok(BandedCholesky { l: self })
    }
}

/// Lower-triangular banded Cholesky factor.
#[derive(Clone, Debug)]
pub struct BandedCholesky {
    l: BandedSpd,
}

impl BandedCholesky {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let l = &self.l;
        let n = l.n;
        let mut x = b.to_vec();
        for i in 0..n {
            let mut s = x[i];
            for k in i.saturating_sub(l.bw)..i {
                s -= l.data[l.slot(i, k)] * x[k];
            }
            x[i] = s / l.data[l.slot(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in i + 1..n.min(i + l.bw + 1) {
                s -= l.data[l.slot(k, i)] * x[k];
            }
            x[i] = s / l.data[l.slot(i, i)];
        }
        x
    }
}
