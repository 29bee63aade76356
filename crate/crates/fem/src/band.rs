//! Banded storage and LU with partial pivoting.

use nalgebra::{DMatrix, DVector};

use crate::FemError;

/// Square matrix with `kl` sub- and `ku` super-diagonals, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        Self { n, kl, ku, data: vec![0.0; n * (kl + ku + 1)] }
    }

    pub fn nrows(&self) -> usize {
        self.n
    }

    pub fn bandwidths(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    fn width(&self) -> usize {
        self.kl + self.ku + 1
    }

    pub fn in_band(&self, i: usize, j: usize) -> bool {
        i < self.n && j < self.n && j + self.kl >= i && j <= i + self.ku
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if self.in_band(i, j) {
            self.data[i * self.width() + j + self.kl - i]
        } else {
            0.0
        }
    }

    /// Adds `v` at `(i, j)`; panics outside the band.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(self.in_band(i, j), "entry ({i},{j}) outside band");
        let w = self.width();
        self.data[i * w + j + self.kl - i] += v;
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        assert!(self.in_band(i, j), "entry ({i},{j}) outside band");
        let w = self.width();
        self.data[i * w + j + self.kl - i] = v;
    }

    fn cols(&self, i: usize) -> std::ops::Range<usize> {
        i.saturating_sub(self.kl)..(i + self.ku + 1).min(self.n)
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        assert_eq!(x.len(), self.n);
        let w = self.width();
        DVector::from_fn(self.n, |i, _| {
            let row = &self.data[i * w..(i + 1) * w];
            self.cols(i).map(|j| row[j + self.kl - i] * x[j]).sum()
        })
    }

    /// `self += alpha * other` for equal shapes.
    pub fn axpy(&mut self, alpha: f64, other: &BandMatrix) {
        assert_eq!((self.n, self.kl, self.ku), (other.n, other.kl, other.ku));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    pub fn scaled(&self, alpha: f64) -> BandMatrix {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|x| *x *= alpha);
        out
    }

    /// Drops the leading `k` rows and columns.
    pub fn trailing(&self, k: usize) -> BandMatrix {
        let mut out = BandMatrix::zeros(self.n - k, self.kl, self.ku);
        for i in k..self.n {
            for j in self.cols(i).filter(|&j| j >= k) {
                out.set(i - k, j - k, self.get(i, j));
            }
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |a, x| a.max(x.abs()))
    }
}

/// Row-interchange LU of a band matrix; `U` keeps `kl + ku` super-diagonals.
#[derive(Debug, Clone)]
pub struct BandLu {
    n: usize,
    kl: usize,
    w: usize,
    u: Vec<f64>,
    l: Vec<f64>,
    piv: Vec<usize>,
}

impl BandLu {
    pub fn new(a: &BandMatrix) -> Result<Self, FemError> {
        let (n, kl, ku) = (a.n, a.kl, a.ku);
        let w = 2 * kl + ku + 1;
        // Row i stores columns i-kl ..= i+kl+ku at offset c + kl - i.
        let mut u = vec![0.0; n * w];
        for i in 0..n {
            for j in a.cols(i) {
                u[i * w + j + kl - i] = a.get(i, j);
            }
        }
        let idx = |i: usize, c: usize| i * w + c + kl - i;
        let mut l = vec![0.0; n * kl.max(1)];
        let mut piv = vec![0; n];
        let scale = a.max_abs().max(f64::MIN_POSITIVE);
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            for i in k + 1..=last {
                if u[idx(i, k)].abs() > u[idx(p, k)].abs() {
                    p = i;
                }
            }
            piv[k] = p;
            let cmax = (k + kl + ku).min(n - 1);
            if p != k {
                for c in k..=cmax {
                    u.swap(idx(k, c), idx(p, c));
                }
            }
            let d = u[idx(k, k)];
            if d.abs() <= scale * 1e-300 || !d.is_finite() {
                return Err(FemError::Singular(format!("zero pivot at row {k}")));
            }
            for i in k + 1..=last {
                let f = u[idx(i, k)] / d;
                l[k * kl + (i - k - 1)] = f;
                u[idx(i, k)] = 0.0;
                if f != 0.0 {
                    for c in k + 1..=cmax {
                        u[idx(i, c)] -= f * u[idx(k, c)];
                    }
                }
            }
        }
        Ok(Self { n, kl, w, u, l, piv })
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let (n, kl, w) = (self.n, self.kl, self.w);
        assert_eq!(b.len(), n);
        let mut x = b.clone();
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                x.swap_rows(k, p);
            }
            let xk = x[k];
            for i in k + 1..=(k + kl).min(n - 1) {
                x[i] -= self.l[k * kl + (i - k - 1)] * xk;
            }
        }
        let ku2 = w - kl - 1;
        for i in (0..n).rev() {
            let mut s = x[i];
            for c in i + 1..=(i + ku2).min(n - 1) {
                s -= self.u[i * w + c + kl - i] * x[c];
            }
            x[i] = s / self.u[i * w + kl];
        }
        x
    }
}
