//! Q1 (multilinear) element integrals on axis-aligned box elements with
//! 2-point Gauss quadrature per axis — exact for all stiffness and mass
//! entries with constant coefficients.

use crate::scalar::Scalar;
use crate::tensor::{Mat, Tensor4};

/// Corner count of a d-dimensional box element.
pub fn corners(dim: usize) -> usize {
    1 << dim
}

/// Shape function values at a point of the element [0,h1]x...x[0,hd].
/// Corner `a` is a bit pattern: bit set means the high side of that axis.
pub fn shape_values<T: Scalar>(dim: usize, h: &[T; 3], x: &[T; 3]) -> Vec<T> {
    let n = corners(dim);
    let mut vals = vec![T::one(); n];
    for (a, v) in vals.iter_mut().enumerate() {
        for ax in 0..dim {
            let t = x[ax] / h[ax];
            *v *= if a >> ax & 1 == 1 { t } else { T::one() - t };
        }
    }
    vals
}

pub fn shape_gradients<T: Scalar>(dim: usize, h: &[T; 3], x: &[T; 3]) -> Vec<[T; 3]> {
    let n = corners(dim);
    let mut grads = vec![[T::zero(); 3]; n];
    for (a, g) in grads.iter_mut().enumerate() {
        for der in 0..dim {
            let mut v = T::one();
            for ax in 0..dim {
                let t = x[ax] / h[ax];
                let hi = a >> ax & 1 == 1;
                let factor = if ax == der {
                    let sign = if hi { T::one() } else { -T::one() };
                    sign / h[ax]
                } else if hi {
                    t
                } else {
                    T::one() - t
                };
                v *= factor;
            }
            g[der] = v;
        }
    }
    grads
}

/// 2^d Gauss points with combined weights (jacobian included).
pub fn gauss<T: Scalar>(dim: usize, h: &[T; 3]) -> Vec<([T; 3], T)> {
    let r = T::one() / T::of(3.0).sqrt();
    let mut pts = Vec::with_capacity(corners(dim));
    for bits in 0..corners(dim) {
        let mut x = [T::zero(); 3];
        let mut w = T::one();
        for ax in 0..dim {
            let s = if bits >> ax & 1 == 1 { r } else { -r };
            x[ax] = h[ax] * (T::one() + s) * T::half();
            w = w * h[ax] * T::half();
        }
        pts.push((x, w));
    }
    pts
}

/// int_e K grad(phi_a) . grad(phi_b)
pub fn scalar_stiffness<T: Scalar>(dim: usize, h: &[T; 3], k: &Mat<T>) -> Vec<Vec<T>> {
    let n = corners(dim);
    let mut ke = vec![vec![T::zero(); n]; n];
    for (x, w) in gauss(dim, h) {
        let g = shape_gradients(dim, h, &x);
        for a in 0..n {
            let kg = k.mul_vec(&g[a]);
            for b in 0..n {
                let mut s = T::zero();
                for p in 0..dim {
                    s += kg[p] * g[b][p];
                }
                ke[b][a] += w * s;
            }
        }
    }
    ke
}

/// Consistent mass int_e phi_a phi_b
pub fn scalar_mass<T: Scalar>(dim: usize, h: &[T; 3]) -> Vec<Vec<T>> {
    let n = corners(dim);
    let mut me = vec![vec![T::zero(); n]; n];
    for (x, w) in gauss(dim, h) {
        let v = shape_values(dim, h, &x);
        for a in 0..n {
            for b in 0..n {
                me[a][b] += w * v[a] * v[b];
            }
        }
    }
    me
}

/// int_e A e(u):e(v) element stiffness; local dof layout (corner*dim + comp).
/// With minor symmetries this equals sum A_ipjq dphi_a/dx_p dphi_b/dx_q.
pub fn elasticity_stiffness<T: Scalar>(dim: usize, h: &[T; 3], a4: &Tensor4<T>) -> Vec<Vec<T>> {
    let nc = corners(dim);
    let n = nc * dim;
    let mut ke = vec![vec![T::zero(); n]; n];
    for (x, w) in gauss(dim, h) {
        let g = shape_gradients(dim, h, &x);
        for a in 0..nc {
            for i in 0..dim {
                let row = a * dim + i;
                for b in 0..nc {
                    for j in 0..dim {
                        let col = b * dim + j;
                        let mut s = T::zero();
                        for p in 0..dim {
                            for q in 0..dim {
                                s += a4.get(i, p, j, q) * g[a][p] * g[b][q];
                            }
                        }
                        ke[row][col] += w * s;
                    }
                }
            }
        }
    }
    ke
}

/// int_e grad(phi_a), one vector per corner.
pub fn grad_integrals<T: Scalar>(dim: usize, h: &[T; 3]) -> Vec<[T; 3]> {
    let n = corners(dim);
    let mut gi = vec![[T::zero(); 3]; n];
    for (x, w) in gauss(dim, h) {
        let g = shape_gradients(dim, h, &x);
        for a in 0..n {
            for p in 0..dim {
                gi[a][p] += w * g[a][p];
            }
        }
    }
    gi
}

/// int_e phi_a (B grad(phi_b))_i : rows are vector dofs (a*dim+i), columns
/// are scalar corners b.
pub fn grad_p_dot_v<T: Scalar>(dim: usize, h: &[T; 3], b_mat: &Mat<T>) -> Vec<Vec<T>> {
    let nc = corners(dim);
    let mut ce = vec![vec![T::zero(); nc]; nc * dim];
    for (x, w) in gauss(dim, h) {
        let v = shape_values(dim, h, &x);
        let g = shape_gradients(dim, h, &x);
        for b in 0..nc {
            let bg = b_mat.mul_vec(&g[b]);
            for a in 0..nc {
                for i in 0..dim {
                    ce[a * dim + i][b] += w * v[a] * bg[i];
                }
            }
        }
    }
    ce
}

/// int_e phi_b sum_k L_jk dphi_a/dx_k : rows are scalar corners b, columns
/// vector dofs (a*dim+j).
pub fn div_u_times_q<T: Scalar>(dim: usize, h: &[T; 3], l_mat: &Mat<T>) -> Vec<Vec<T>> {
    let nc = corners(dim);
    let mut de = vec![vec![T::zero(); nc * dim]; nc];
    for (x, w) in gauss(dim, h) {
        let v = shape_values(dim, h, &x);
        let g = shape_gradients(dim, h, &x);
        for b in 0..nc {
            for a in 0..nc {
                for j in 0..dim {
                    let mut s = T::zero();
                    for k in 0..dim {
                        s += l_mat.get(j, k) * g[a][k];
                    }
                    de[b][a * dim + j] += w * v[b] * s;
                }
            }
        }
    }
    de
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_of_unity_and_gradients() {
        let h = [0.25f64, 0.5, 1.0];
        let x = [0.1, 0.2, 0.3];
        let v = shape_values(3, &h, &x);
        let s: f64 = v.iter().sum();
        assert!((s - 1.0).abs() < 1e-14);
        let g = shape_gradients(3, &h, &x);
        for p in 0..3 {
            let gs: f64 = g.iter().map(|gr| gr[p]).sum();
            assert!(gs.abs() < 1e-13);
        }
    }

    #[test]
    fn mass_total_is_volume() {
        let h = [0.5f64, 0.25, 0.0];
        let me = scalar_mass(2, &h);
        let total: f64 = me.iter().flatten().sum();
        assert!((total - 0.125).abs() < 1e-15);
    }

    #[test]
    fn stiffness_1d_structure_in_2d() {
        // K = I on a unit square element: classical bilinear values
        let h = [1.0f64, 1.0, 0.0];
        let k = Mat::identity(2);
        let ke = scalar_stiffness(2, &h, &k);
        assert!((ke[0][0] - 2.0 / 3.0).abs() < 1e-14);
        assert!((ke[0][3] + 1.0 / 3.0).abs() < 1e-14); // opposite corner
        assert!((ke[0][1] + 1.0 / 6.0).abs() < 1e-14); // edge neighbor
    }

    #[test]
    fn elasticity_energy_of_linear_field() {
        // u(y) = d^{00} = (y_0, 0): strain e = E^{00}; energy over the unit
        // element must be A_0000.
        let h = [1.0f64, 1.0, 0.0];
        let a4 = Tensor4::isotropic(2, 1.0, 1.0);
        let ke = elasticity_stiffness(2, &h, &a4);
        // nodal values of u at the 4 corners
        let mut u = [0.0f64; 8];
        for corner in 0..4usize {
            let y0 = if corner & 1 == 1 { 1.0 } else { 0.0 };
            u[corner * 2] = y0;
        }
        let mut energy = 0.0;
        for i in 0..8 {
            for j in 0..8 {
                energy += u[i] * ke[i][j] * u[j];
            }
        }
        assert!((energy - a4.get(0, 0, 0, 0)).abs() < 1e-13);
    }

    #[test]
    fn grad_integrals_sum_zero() {
        let h = [0.125f64, 0.125, 0.125];
        let gi = grad_integrals(3, &h);
        for p in 0..3 {
            let s: f64 = gi.iter().map(|g| g[p]).sum();
            assert!(s.abs() < 1e-16);
        }
    }
}
