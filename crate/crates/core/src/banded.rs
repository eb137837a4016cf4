//! Small banded-matrix kit: products, transposes, and a banded Cholesky.

use crate::error::{Error, Result};

/// Square matrix stored by rows; row `i` holds columns `i - lower ..= i + upper`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandMatrix {
    n: usize,
    lower: usize,
    upper: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, lower: usize, upper: usize) -> Self {
        BandMatrix { n, lower, upper, data: vec![0.0; n * (lower + upper + 1)] }
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let mut m = BandMatrix::zeros(diag.len(), 0, 0);
        m.data.copy_from_slice(diag);
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> (usize, usize) {
        (self.lower, self.upper)
    }

    #[inline]
    fn width(&self) -> usize {
        self.lower + self.upper + 1
    }

    #[inline]
    fn in_band(&self, i: usize, j: usize) -> bool {
        j + self.lower >= i && j <= i + self.upper && j < self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if self.in_band(i, j) {
            self.data[i * self.width() + j + self.lower - i]
        } else {
            0.0
        }
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        assert!(self.in_band(i, j), "({i},{j}) outside band");
        let w = self.width();
        self.data[i * w + j + self.lower - i] = v;
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let cur = self.get(i, j);
        self.set(i, j, cur + v);
    }

    #[inline]
    fn cols(&self, i: usize) -> std::ops::Range<usize> {
        i.saturating_sub(self.lower)..(i + self.upper + 1).min(self.n)
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        let w = self.width();
        (0..self.n)
            .map(|i| {
                let row = &self.data[i * w..(i + 1) * w];
                self.cols(i).map(|j| row[j + self.lower - i] * x[j]).sum()
            })
            .collect()
    }

    pub fn transpose(&self) -> BandMatrix {
        let mut t = BandMatrix::zeros(self.n, self.upper, self.lower);
        for i in 0..self.n {
            for j in self.cols(i) {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    pub fn mul(&self, rhs: &BandMatrix) -> BandMatrix {
        assert_eq!(self.n, rhs.n);
        let mut out = BandMatrix::zeros(self.n, self.lower + rhs.lower, self.upper + rhs.upper);
        for i in 0..self.n {
            for k in self.cols(i) {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in rhs.cols(k) {
                    out.add(i, j, a * rhs.get(k, j));
                }
            }
        }
        out
    }

    /// `self + c * other`, widening the band as needed.
    pub fn plus(&self, c: f64, other: &BandMatrix) -> BandMatrix {
        assert_eq!(self.n, other.n);
        let mut out =
            BandMatrix::zeros(self.n, self.lower.max(other.lower), self.upper.max(other.upper));
        for i in 0..self.n {
            for j in self.cols(i) {
                out.add(i, j, self.get(i, j));
            }
            for j in other.cols(i) {
                out.add(i, j, c * other.get(i, j));
            }
        }
        out
    }

    /// Averages with the transpose to remove round-off asymmetry.
    pub fn symmetrized(&self) -> BandMatrix {
        let b = self.lower.max(self.upper);
        let mut out = BandMatrix::zeros(self.n, b, b);
        for i in 0..self.n {
            for j in i.saturating_sub(b)..(i + b + 1).min(self.n) {
                out.set(i, j, 0.5 * (self.get(i, j) + self.get(j, i)));
            }
        }
        out
    }

    /// Keeps the leading `k x k` block.
    pub fn leading(&self, k: usize) -> BandMatrix {
        let mut out = BandMatrix::zeros(k, self.lower, self.upper);
        for i in 0..k {
            for j in self.cols(i).filter(|&j| j < k) {
                out.set(i, j, self.get(i, j));
            }
        }
        out
    }
}

/// Cholesky factor `L` (lower, bandwidth `b`) of a symmetric positive definite
/// banded matrix.
#[derive(Debug, Clone)]
pub struct BandCholesky {
    n: usize,
    b: usize,
    /// Row `i` holds `L[i][i-b..=i]`.
    data: Vec<f64>,
}

impl BandCholesky {
    pub fn factor(a: &BandMatrix) -> Result<Self> {
        let n = a.n();
        let b = a.lower.max(a.upper);
        let w = b + 1;
        let mut data = vec![0.0; n * w];
        let at = |data: &Vec<f64>, i: usize, j: usize| data[i * w + j + b - i];
        for i in 0..n {
            let j0 = i.saturating_sub(b);
            for j in j0..=i {
                let mut s = a.get(i, j);
                let k0 = j0.max(j.saturating_sub(b));
                for k in k0..j {
                    s -= at(&data, i, k) * at(&data, j, k);
                }
                if i == j {
                    if !(s > 0.0) || !s.is_finite() {
                        return Err(Error::NotPositiveDefinite(i));
                    }
                    data[i * w + b] = s.sqrt();
                } else {
                    data[i * w + j + b - i] = s / at(&data, j, j);
                }
            }
        }
        Ok(BandCholesky { n, b, data })
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let (n, b, w) = (self.n, self.b, self.b + 1);
        let at = |i: usize, j: usize| self.data[i * w + j + b - i];
        let mut y = rhs.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in i.saturating_sub(b)..i {
                s -= at(i, k) * y[k];
            }
            y[i] = s / at(i, i);
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..(i + b + 1).min(n) {
                s -= at(k, i) * y[k];
            }
            y[i] = s / at(i, i);
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tridiag(n: usize) -> BandMatrix {
        let mut a = BandMatrix::zeros(n, 1, 1);
        for i in 0..n {
            a.set(i, i, 2.0 + i as f64 * 0.01);
            if i + 1 < n {
                a.set(i, i + 1, -1.0);
                a.set(i + 1, i, -1.0);
            }
        }
        a
    }

    #[test]
    fn product_matches_dense() {
        let a = tridiag(7);
        let mut b = BandMatrix::zeros(7, 0, 2);
        for i in 0..7 {
            for j in i..(i + 3).min(7) {
                b.set(i, j, (i + 2 * j) as f64);
            }
        }
        let c = a.mul(&b);
        for i in 0..7 {
            for j in 0..7 {
                let dense: f64 = (0..7).map(|k| a.get(i, k) * b.get(k, j)).sum();
                assert_eq!(c.get(i, j), dense);
            }
        }
        let bt = b.transpose();
        assert_eq!(bt.get(3, 1), b.get(1, 3));
    }

    #[test]
    fn cholesky_solves_spd() {
        let a = tridiag(50);
        let p = a.mul(&a).plus(1.0, &a);
        let x: Vec<f64> = (0..50).map(|i| (i as f64).sin()).collect();
        let rhs = p.matvec(&x);
        let sol = BandCholesky::factor(&p).unwrap().solve(&rhs);
        for (a, b) in sol.iter().zip(&x) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = BandMatrix::diagonal(&[1.0, -1.0, 2.0]);
        assert!(BandCholesky::factor(&a).is_err());
    }
}
