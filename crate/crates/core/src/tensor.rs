//! Small dense matrix and fourth-rank tensor types for 2D/3D continuum data.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Square matrix of dimension `d <= 3` (permeability, Biot-Willis couplings, ...).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat<T> {
    pub d: usize,
    a: [[T; 3]; 3],
}

impl<T: Scalar> Mat<T> {
    pub fn zeros(d: usize) -> Self {
        Self {
            d,
            a: [[T::zero(); 3]; 3],
        }
    }

    pub fn identity(d: usize) -> Self {
        let mut m = Self::zeros(d);
        for i in 0..d {
            m.a[i][i] = T::one();
        }
        m
    }

    pub fn scaled_identity(d: usize, s: T) -> Self {
        let mut m = Self::zeros(d);
        for i in 0..d {
            m.a[i][i] = s;
        }
        m
    }

    pub fn from_fn(d: usize, f: impl Fn(usize, usize) -> T) -> Self {
        let mut m = Self::zeros(d);
        for i in 0..d {
            for j in 0..d {
                m.a[i][j] = f(i, j);
            }
        }
        m
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.a[i][j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.a[i][j] = v;
    }

    #[inline]
    pub fn add_to(&mut self, i: usize, j: usize, v: T) {
        self.a[i][j] += v;
    }

    pub fn scale(&self, s: T) -> Self {
        Self::from_fn(self.d, |i, j| self.a[i][j] * s)
    }

    pub fn mul_vec(&self, x: &[T; 3]) -> [T; 3] {
        let mut y = [T::zero(); 3];
        for i in 0..self.d {
            for j in 0..self.d {
                y[i] += self.a[i][j] * x[j];
            }
        }
        y
    }

    pub fn quad_form(&self, x: &[T; 3]) -> T {
        let y = self.mul_vec(x);
        let mut s = T::zero();
        for i in 0..self.d {
            s += x[i] * y[i];
        }
        s
    }

    pub fn max_asymmetry(&self) -> T {
        let mut m = T::zero();
        for i in 0..self.d {
            for j in 0..self.d {
                m = m.max((self.a[i][j] - self.a[j][i]).abs());
            }
        }
        m
    }

    /// Smallest eigenvalue of the symmetric part, by cyclic Jacobi sweeps.
    pub fn min_eigenvalue_sym(&self) -> T {
        let d = self.d;
        let mut a = vec![vec![T::zero(); d]; d];
        for i in 0..d {
            for j in 0..d {
                a[i][j] = (self.a[i][j] + self.a[j][i]) * T::half();
            }
        }
        jacobi_min_eig(&mut a)
    }

    pub fn is_spd(&self, tol: T) -> bool {
        self.max_asymmetry() <= tol && self.min_eigenvalue_sym() > T::zero()
    }
}

/// Smallest eigenvalue of a small symmetric matrix via Jacobi rotations.
pub fn jacobi_min_eig<T: Scalar>(a: &mut [Vec<T>]) -> T {
    let n = a.len();
    for _ in 0..64 {
        let mut off = T::zero();
        for p in 0..n {
            for q in (p + 1)..n {
                off = off.max(a[p][q].abs());
            }
        }
        if off <= T::of(1e-30) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[p][q].abs() <= T::of(1e-300) {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (T::two() * a[p][q]);
                let t = {
                    let s = if theta >= T::zero() {
                        T::one()
                    } else {
                        -T::one()
                    };
                    s / (theta.abs() + (theta * theta + T::one()).sqrt())
                };
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut min = a[0][0];
    for i in 1..n {
        min = min.min(a[i][i]);
    }
    min
}

/// Fourth-rank elasticity tensor with minor symmetries, dimension 2 or 3.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4<T> {
    pub d: usize,
    a: [[[[T; 3]; 3]; 3]; 3],
}

impl<T: Scalar> Tensor4<T> {
    pub fn zeros(d: usize) -> Self {
        Self {
            d,
            a: [[[[T::zero(); 3]; 3]; 3]; 3],
        }
    }

    /// Isotropic tensor a_ijkl = lambda d_ij d_kl + mu (d_ik d_jl + d_il d_jk).
    pub fn isotropic(d: usize, lambda: T, mu: T) -> Self {
        let mut t = Self::zeros(d);
        let kd = |i: usize, j: usize| if i == j { T::one() } else { T::zero() };
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    for l in 0..d {
                        t.a[i][j][k][l] = lambda * kd(i, j) * kd(k, l)
                            + mu * (kd(i, k) * kd(j, l) + kd(i, l) * kd(j, k));
                    }
                }
            }
        }
        t
    }

    pub fn from_fn(d: usize, f: impl Fn(usize, usize, usize, usize) -> T) -> Self {
        let mut t = Self::zeros(d);
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    for l in 0..d {
                        t.a[i][j][k][l] = f(i, j, k, l);
                    }
                }
            }
        }
        t
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> T {
        self.a[i][j][k][l]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, l: usize, v: T) {
        self.a[i][j][k][l] = v;
    }

    pub fn scale(&self, s: T) -> Self {
        Self::from_fn(self.d, |i, j, k, l| self.a[i][j][k][l] * s)
    }

    /// Contraction (A : E)_ij for a symmetric second-rank E.
    pub fn apply(&self, e: &Mat<T>) -> Mat<T> {
        let d = self.d;
        Mat::from_fn(d, |i, j| {
            let mut s = T::zero();
            for k in 0..d {
                for l in 0..d {
                    s += self.a[i][j][k][l] * e.get(k, l);
                }
            }
            s
        })
    }

    pub fn max_minor_asymmetry(&self) -> T {
        let d = self.d;
        let mut m = T::zero();
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    for l in 0..d {
                        m = m.max((self.a[i][j][k][l] - self.a[j][i][k][l]).abs());
                        m = m.max((self.a[i][j][k][l] - self.a[i][j][l][k]).abs());
                    }
                }
            }
        }
        m
    }

    pub fn max_major_asymmetry(&self) -> T {
        let d = self.d;
        let mut m = T::zero();
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    for l in 0..d {
                        m = m.max((self.a[i][j][k][l] - self.a[k][l][i][j]).abs());
                    }
                }
            }
        }
        m
    }

    pub fn require_minor_symmetry(&self, tol: T) -> Result<()> {
        if self.max_minor_asymmetry() > tol {
            return Err(Error::Material(
                "elasticity tensor lacks minor symmetries".into(),
            ));
        }
        Ok(())
    }

    /// Voigt pairs for dimension `d`: the independent symmetric index pairs.
    pub fn voigt_pairs(d: usize) -> &'static [(usize, usize)] {
        match d {
            2 => &[(0, 0), (1, 1), (0, 1)],
            3 => &[(0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1)],
            _ => panic!("dimension must be 2 or 3"),
        }
    }

    /// Smallest eigenvalue of the tensor as a quadratic form on symmetric
    /// matrices (Kelvin-weighted Voigt representation).
    pub fn min_eigenvalue_sym(&self) -> T {
        let d = self.d;
        let pairs = Self::voigt_pairs(d);
        let n = pairs.len();
        let mut m = vec![vec![T::zero(); n]; n];
        for (p, &(i, j)) in pairs.iter().enumerate() {
            for (q, &(k, l)) in pairs.iter().enumerate() {
                let wp = if i == j { T::one() } else { T::two().sqrt() };
                let wq = if k == l { T::one() } else { T::two().sqrt() };
                // symmetrize over the major index exchange for the form
                let v = (self.a[i][j][k][l] + self.a[k][l][i][j]) * T::half();
                m[p][q] = wp * wq * v;
            }
        }
        jacobi_min_eig(&mut m)
    }
}
