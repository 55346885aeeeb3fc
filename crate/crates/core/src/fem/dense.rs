//! Dense and banded LU factorizations with partial pivoting, used for the
//! per-step monolithic macro solves and small oracle systems.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row-major square dense matrix.
#[derive(Debug, Clone)]
pub struct DenseMatrix<T> {
    pub n: usize,
    data: Vec<T>,
}

impl<T: Scalar> DenseMatrix<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![T::zero(); n * n],
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.n + j] = v;
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.n + j] += v;
    }

    pub fn lu(mut self) -> Result<DenseLu<T>> {
        let n = self.n;
        let mut piv = vec![0usize; n];
        for k in 0..n {
            let mut p = k;
            let mut best = self.get(k, k).abs();
            for i in (k + 1)..n {
                let v = self.get(i, k).abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == T::zero() {
                return Err(Error::Singular("dense LU".into()));
            }
            piv[k] = p;
            if p != k {
                for j in 0..n {
                    let a = self.get(k, j);
                    let b = self.get(p, j);
                    self.set(k, j, b);
                    self.set(p, j, a);
                }
            }
            let pivot = self.get(k, k);
            for i in (k + 1)..n {
                let m = self.get(i, k) / pivot;
                self.set(i, k, m);
                if m != T::zero() {
                    for j in (k + 1)..n {
                        let v = self.get(i, j) - m * self.get(k, j);
                        self.set(i, j, v);
                    }
                }
            }
        }
        Ok(DenseLu { mat: self, piv })
    }
}

#[derive(Debug, Clone)]
pub struct DenseLu<T> {
    mat: DenseMatrix<T>,
    piv: Vec<usize>,
}

impl<T: Scalar> DenseLu<T> {
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.mat.n;
        let mut x = b.to_vec();
        for k in 0..n {
            x.swap(k, self.piv[k]);
            for i in (k + 1)..n {
                let m = self.mat.get(i, k);
                if m != T::zero() {
                    x[i] = x[i] - m * x[k];
                }
            }
        }
        for k in (0..n).rev() {
            for j in (k + 1)..n {
                let v = self.mat.get(k, j);
                if v != T::zero() {
                    let t = v * x[j];
                    x[k] -= t;
                }
            }
            x[k] /= self.mat.get(k, k);
        }
        x
    }
}

/// General banded matrix with `kl` sub- and `ku` super-diagonals, stored
/// with extra room for pivoting fill (working upper bandwidth kl+ku).
#[derive(Debug, Clone)]
pub struct BandMatrix<T> {
    n: usize,
    kl: usize,
    ku: usize,
    kuw: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Scalar> BandMatrix<T> {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let kuw = kl + ku;
        let width = kl + kuw + 1;
        Self {
            n,
            kl,
            ku,
            kuw,
            width,
            data: vec![T::zero(); n * width],
        }
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        // row offset within the stored column j: i - j + kuw
        j * self.width + (i + self.kuw - j)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        if j > i + self.kuw || i > j + self.kl {
            T::zero()
        } else {
            self.data[self.slot(i, j)]
        }
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        assert!(
            j <= i + self.ku && i <= j + self.kl,
            "entry ({i},{j}) outside declared band"
        );
        let s = self.slot(i, j);
        self.data[s] = v;
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: T) {
        assert!(
            j <= i + self.ku && i <= j + self.kl,
            "entry ({i},{j}) outside declared band"
        );
        let s = self.slot(i, j);
        self.data[s] += v;
    }

    #[inline]
    fn at(&mut self, i: usize, j: usize) -> &mut T {
        let s = self.slot(i, j);
        &mut self.data[s]
    }

    /// LU factorization with partial pivoting (LAPACK gbtrf style).
    pub fn lu(mut self) -> Result<BandLu<T>> {
        let n = self.n;
        let kl = self.kl;
        let kuw = self.kuw;
        let mut piv = vec![0usize; n];
        for k in 0..n {
            let imax = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = self.get(k, k).abs();
            for i in (k + 1)..=imax {
                let v = self.get(i, k).abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == T::zero() {
                return Err(Error::Singular("band LU".into()));
            }
            piv[k] = p;
            let jmax = (k + kuw).min(n - 1);
            if p != k {
                for j in k..=jmax {
                    let a = self.get(k, j);
                    let b = self.get(p, j);
                    *self.at(k, j) = b;
                    *self.at(p, j) = a;
                }
            }
            let pivot = self.get(k, k);
            for i in (k + 1)..=imax {
                let m = self.get(i, k) / pivot;
                *self.at(i, k) = m;
                if m != T::zero() {
                    for j in (k + 1)..=jmax {
                        let v = self.get(k, j);
                        if v != T::zero() {
                            *self.at(i, j) -= m * v;
                        }
                    }
                }
            }
        }
        Ok(BandLu { mat: self, piv })
    }
}

#[derive(Debug, Clone)]
pub struct BandLu<T> {
    mat: BandMatrix<T>,
    piv: Vec<usize>,
}

impl<T: Scalar> BandLu<T> {
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.mat.n;
        let kl = self.mat.kl;
        let kuw = self.mat.kuw;
        let mut x = b.to_vec();
        for k in 0..n {
            x.swap(k, self.piv[k]);
            let imax = (k + kl).min(n - 1);
            for i in (k + 1)..=imax {
                let m = self.mat.get(i, k);
                if m != T::zero() {
                    x[i] = x[i] - m * x[k];
                }
            }
        }
        for k in (0..n).rev() {
            let jmax = (k + kuw).min(n - 1);
            for j in (k + 1)..=jmax {
                let v = self.mat.get(k, j);
                if v != T::zero() {
                    let t = v * x[j];
                    x[k] -= t;
                }
            }
            x[k] /= self.mat.get(k, k);
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // small deterministic pseudo-random stream
    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((*seed >> 11) as f64) / ((1u64 << 53) as f64) - 0.5
    }

    #[test]
    fn dense_lu_roundtrip() {
        let n = 12;
        let mut seed = 42u64;
        let mut a = DenseMatrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                a.set(i, j, lcg(&mut seed));
            }
            a.add(i, i, 3.0);
        }
        let xs: Vec<f64> = (0..n).map(|i| (i as f64) - 4.0).collect();
        let mut b = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                b[i] += a.get(i, j) * xs[j];
            }
        }
        let lu = a.lu().unwrap();
        let x = lu.solve(&b);
        for (u, v) in x.iter().zip(&xs) {
            assert!((u - v).abs() < 1e-10);
        }
    }

    #[test]
    fn band_lu_matches_dense() {
        let n = 40;
        let (kl, ku) = (3usize, 2usize);
        let mut seed = 7u64;
        let mut band = BandMatrix::zeros(n, kl, ku);
        let mut dense = DenseMatrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                if j <= i + ku && i <= j + kl {
                    let v = lcg(&mut seed) + if i == j { 2.5 } else { 0.0 };
                    band.set(i, j, v);
                    dense.set(i, j, v);
                }
            }
        }
        let mut b = vec![0.0; n];
        for (i, bi) in b.iter_mut().enumerate() {
            *bi = (i % 5) as f64 - 2.0;
        }
        let xb = band.lu().unwrap().solve(&b);
        let xd = dense.lu().unwrap().solve(&b);
        for (u, v) in xb.iter().zip(&xd) {
            assert!((u - v).abs() < 1e-11, "{u} vs {v}");
        }
    }

    #[test]
    fn band_lu_needs_pivoting() {
        // zero diagonal forces row interchanges
        let mut band = BandMatrix::zeros(3, 1, 1);
        band.set(0, 0, 0.0);
        band.set(0, 1, 1.0);
        band.set(1, 0, 2.0);
        band.set(1, 1, 0.0);
        band.set(1, 2, 1.0);
        band.set(2, 1, 1.0);
        band.set(2, 2, 1.0);
        let lu = band.lu().unwrap();
        let x = lu.solve(&[1.0, 2.0, 3.0]);
        // verify A x = b
        let ax: [f64; 3] = [x[1], 2.0 * x[0] + x[2], x[1] + x[2]];
        for (u, v) in ax.iter().zip(&[1.0, 2.0, 3.0]) {
            assert!((u - v).abs() < 1e-14);
        }
    }

    #[test]
    fn singular_detected() {
        let mut d = DenseMatrix::<f64>::zeros(2);
        d.set(0, 0, 1.0);
        d.set(0, 1, 1.0);
        d.set(1, 0, 1.0);
        d.set(1, 1, 1.0);
        assert!(d.lu().is_err());
    }
}
