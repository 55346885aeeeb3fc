//! Effective (homogenized) coefficients extracted from the cell-problem
//! solutions, and the discrete interface memory kernels.

use crate::cell_problems::{
    basis_strain, solve_elasticity_cell, solve_pressure_cell, solve_robin_evolution,
    ElasticCorrectorSet, PressureCorrectorSet, ZetaHistory,
};
use crate::error::Result;
use crate::fem::{self, q1, DomainSelector};
use crate::geometry::{CellMesh, Phase};
use crate::scalar::Scalar;
use crate::tensor::{Mat, Tensor4};

/// Discrete memory kernels as per-step increments of the interface
/// relaxation field; entry `n-1` belongs to time step `n`.
#[derive(Debug, Clone)]
pub struct KernelTable<T> {
    pub dt: T,
    /// eta_n = int_Gamma g (zeta_n - zeta_{n-1}) ds (stored positive)
    pub eta: Vec<T>,
    /// theta_n = alpha2 int_Gamma (zeta_n - zeta_{n-1}) n ds
    pub theta: Vec<[T; 3]>,
    /// m_n = lumped int_{Y2} (zeta_n - zeta_{n-1})
    pub m: Vec<T>,
}

impl<T: Scalar> KernelTable<T> {
    pub fn len(&self) -> usize {
        self.eta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eta.is_empty()
    }

    pub fn eta_total(&self) -> T {
        self.eta.iter().copied().sum()
    }

    pub fn m_total(&self) -> T {
        self.m.iter().copied().sum()
    }

    pub fn theta_total(&self) -> [T; 3] {
        let mut s = [T::zero(); 3];
        for t in &self.theta {
            for p in 0..3 {
                s[p] += t[p];
            }
        }
        s
    }
}

/// The full coefficient set of the homogenized system.
#[derive(Debug, Clone)]
pub struct EffectiveCoefficients<T> {
    pub dim: usize,
    /// homogenized elasticity tensor
    pub a_eff: Tensor4<T>,
    /// homogenized matrix permeability
    pub k_eff: Mat<T>,
    /// pressure-to-stress coupling (grad p in the momentum balance)
    pub b_coupling: Mat<T>,
    /// strain-rate-to-storage coupling (div u_t in the mass balance)
    pub lambda_coupling: Mat<T>,
    /// storativity c1 |Y1|
    pub c_tilde: T,
    /// total interface exchange g |Gamma|
    pub g_tilde: T,
    /// averaged body force |Y1| f1 + |Y2| f2
    pub f_bar: [T; 3],
    pub vol_frac_matrix: T,
    pub vol_frac_inclusion: T,
    pub cell_fingerprint: u64,
    pub kernels: KernelTable<T>,
}

/// Strain of a Q1 displacement field at a quadrature point of one element.
fn strain_at<T: Scalar>(
    dim: usize,
    grads: &[[T; 3]],
    corner_vals: &[[T; 3]],
) -> Mat<T> {
    let mut e = Mat::zeros(dim);
    for (a, g) in grads.iter().enumerate() {
        for i in 0..dim {
            for j in 0..dim {
                let v = (corner_vals[a][i] * g[j] + corner_vals[a][j] * g[i]) * T::half();
                e.add_to(i, j, v);
            }
        }
    }
    e
}

/// Homogenized elasticity via the volume-average formula
/// a_eff[i][j][k][l] = int_Y [A (E^{kl} + e(w^{kl}))]_{ij} dy,
/// together with the maximum defect against the Galerkin energy form
/// int_Y A (E^{jk}+e(w^{jk})):(E^{lm}+e(w^{lm})), which must agree.
pub fn effective_elasticity<T: Scalar>(
    mesh: &CellMesh,
    a_matrix: &Tensor4<T>,
    a_inclusion: &Tensor4<T>,
    correctors: &ElasticCorrectorSet<T>,
) -> (Tensor4<T>, f64) {
    let dim = mesh.dim();
    let h = [mesh.h::<T>(); 3];
    let gauss = q1::gauss(dim, &h);
    let npairs = correctors.pairs.len();
    let nc = q1::corners(dim);

    // per-pair volume-average stress and pairwise energies
    let mut stress: Vec<Mat<T>> = vec![Mat::zeros(dim); npairs];
    let mut energy = vec![vec![T::zero(); npairs]; npairs];

    fem::for_each_element(mesh, DomainSelector::Full, |voxel, corners| {
        let a4 = match mesh.phase(voxel) {
            Phase::Matrix => a_matrix,
            Phase::Inclusion => a_inclusion,
        };
        // corner displacement values for every pair
        let mut vals: Vec<Vec<[T; 3]>> = Vec::with_capacity(npairs);
        for f in &correctors.fields {
            let mut cv = vec![[T::zero(); 3]; nc];
            for (a, &n) in corners.iter().enumerate() {
                for i in 0..dim {
                    cv[a][i] = f[correctors.dofs.dof(n, i).unwrap()];
                }
            }
            vals.push(cv);
        }
        for (x, w) in &gauss {
            let grads = q1::shape_gradients(dim, &h, x);
            let mut strains: Vec<Mat<T>> = Vec::with_capacity(npairs);
            for (p, &(j, k)) in correctors.pairs.iter().enumerate() {
                let mut e = strain_at(dim, &grads, &vals[p]);
                let base = basis_strain::<T>(dim, j, k);
                for i in 0..dim {
                    for jj in 0..dim {
                        e.add_to(i, jj, base.get(i, jj));
                    }
                }
                strains.push(e);
            }
            for p in 0..npairs {
                let s = a4.apply(&strains[p]);
                for i in 0..dim {
                    for jj in 0..dim {
                        stress[p].add_to(i, jj, *w * s.get(i, jj));
                    }
                }
                for q in 0..npairs {
                    let mut contraction = T::zero();
                    for i in 0..dim {
                        for jj in 0..dim {
                            contraction += s.get(i, jj) * strains[q].get(i, jj);
                        }
                    }
                    energy[p][q] += *w * contraction;
                }
            }
        }
    });

    let mut a_eff = Tensor4::zeros(dim);
    for (p, &(k, l)) in correctors.pairs.iter().enumerate() {
        for i in 0..dim {
            for j in 0..dim {
                let v = stress[p].get(i, j);
                a_eff.set(i, j, k, l, v);
                a_eff.set(i, j, l, k, v);
            }
        }
    }

    // energy form must reproduce the volume-average entries
    let mut defect = T::zero();
    for (p, _) in correctors.pairs.iter().enumerate() {
        for (q, &(k, l)) in correctors.pairs.iter().enumerate() {
            let volume_entry = stress[p].get(k, l);
            defect = defect.max((energy[p][q] - volume_entry).abs());
        }
    }
    (a_eff, defect.as_f64())
}

/// Homogenized permeability in the symmetric Gram form
/// k_eff[j][k] = int_{Y1} K1 (grad pi_j + e_j) . (grad pi_k + e_k) dy.
pub fn effective_permeability<T: Scalar>(
    mesh: &CellMesh,
    k_matrix: &Mat<T>,
    pis: &PressureCorrectorSet<T>,
) -> Mat<T> {
    let dim = mesh.dim();
    let h = [mesh.h::<T>(); 3];
    let gauss = q1::gauss(dim, &h);
    let nc = q1::corners(dim);
    let mut k_eff = Mat::zeros(dim);

    fem::for_each_element(mesh, DomainSelector::Matrix, |_, corners| {
        let mut cv = vec![[T::zero(); 3]; nc]; // per corner, value of each pi
        for (a, &n) in corners.iter().enumerate() {
            let s = pis.dofs.scalar_dof(n).unwrap();
            for j in 0..dim {
                cv[a][j] = pis.fields[j][s];
            }
        }
        for (x, w) in &gauss {
            let grads = q1::shape_gradients(dim, &h, x);
            let mut flux = [[T::zero(); 3]; 3]; // grad pi_j + e_j
            for j in 0..dim {
                flux[j][j] = T::one();
                for (a, g) in grads.iter().enumerate() {
                    for p in 0..dim {
                        flux[j][p] += cv[a][j] * g[p];
                    }
                }
            }
            for j in 0..dim {
                let kf = k_matrix.mul_vec(&flux[j]);
                for k in 0..dim {
                    let mut s = T::zero();
                    for p in 0..dim {
                        s += kf[p] * flux[k][p];
                    }
                    k_eff.add_to(j, k, *w * s);
                }
            }
        }
    });
    k_eff
}

/// Pressure coupling b[j][k] = alpha1 (|Y1| delta_jk + int_Gamma pi_k n_j ds),
/// with the interface normal pointing from the matrix into the inclusion.
/// Returns the surface-integral value and an independent volume-integral
/// evaluation alpha1 (|Y1| delta_jk + int_{Y1} d pi_k / d y_j) for checking.
pub fn pressure_coupling<T: Scalar>(
    mesh: &CellMesh,
    alpha1: T,
    pis: &PressureCorrectorSet<T>,
) -> (Mat<T>, Mat<T>) {
    let dim = mesh.dim();
    let area = mesh.face_area::<T>();
    let y1 = mesh.vol_frac_matrix::<T>();

    let mut surface = Mat::scaled_identity(dim, y1);
    for face in mesh.faces() {
        let n = face.normal::<T>(dim);
        for k in 0..dim {
            let mut avg = T::zero();
            for &node in &face.nodes {
                avg += pis.fields[k][pis.dofs.scalar_dof(node).unwrap()];
            }
            avg /= T::of_usize(face.nodes.len());
            for j in 0..dim {
                surface.add_to(j, k, area * avg * n[j]);
            }
        }
    }

    let h = [mesh.h::<T>(); 3];
    let gi = q1::grad_integrals(dim, &h);
    let mut volume = Mat::scaled_identity(dim, y1);
    fem::for_each_element(mesh, DomainSelector::Matrix, |_, corners| {
        for (a, &node) in corners.iter().enumerate() {
            let s = pis.dofs.scalar_dof(node).unwrap();
            for k in 0..dim {
                let v = pis.fields[k][s];
                for j in 0..dim {
                    volume.add_to(j, k, v * gi[a][j]);
                }
            }
        }
    });
    // int_{Y1} grad pi has the opposite orientation of the Gamma normal:
    // Gauss on Y1 gives int grad pi = int_{dY1} pi n_out with n_out = n.
    (surface.scale(alpha1), volume.scale(alpha1))
}

/// Strain-rate coupling lambda[j][k] = alpha1 (|Y1| delta_jk + int_{Y1} div w^{jk}).
pub fn strain_coupling<T: Scalar>(
    mesh: &CellMesh,
    alpha1: T,
    correctors: &ElasticCorrectorSet<T>,
) -> Mat<T> {
    let dim = mesh.dim();
    let h = [mesh.h::<T>(); 3];
    let gi = q1::grad_integrals(dim, &h);
    let y1 = mesh.vol_frac_matrix::<T>();
    let mut lam = Mat::scaled_identity(dim, y1);

    let mut divs = vec![T::zero(); correctors.pairs.len()];
    fem::for_each_element(mesh, DomainSelector::Matrix, |_, corners| {
        for (p, f) in correctors.fields.iter().enumerate() {
            for (a, &n) in corners.iter().enumerate() {
                for i in 0..dim {
                    divs[p] += f[correctors.dofs.dof(n, i).unwrap()] * gi[a][i];
                }
            }
        }
    });
    for (p, &(j, k)) in correctors.pairs.iter().enumerate() {
        lam.add_to(j, k, divs[p]);
        if j != k {
            lam.add_to(k, j, divs[p]);
        }
    }
    lam.scale(alpha1)
}

/// Memory kernels as increments of the interface relaxation history.
pub fn memory_kernels<T: Scalar>(hist: &ZetaHistory<T>, alpha2: T) -> KernelTable<T> {
    let n = hist.steps.len() - 1;
    let mut eta = Vec::with_capacity(n);
    let mut theta = Vec::with_capacity(n);
    let mut m = Vec::with_capacity(n);
    for w in hist.steps.windows(2) {
        eta.push(w[1].flux_g - w[0].flux_g);
        let mut t = [T::zero(); 3];
        for p in 0..3 {
            t[p] = alpha2 * (w[1].moment[p] - w[0].moment[p]);
        }
        theta.push(t);
        m.push(w[1].bulk - w[0].bulk);
    }
    KernelTable {
        dt: hist.dt,
        eta,
        theta,
        m,
    }
}

/// Per-phase material data of the two-scale problem.
#[derive(Debug, Clone)]
pub struct CellMaterials<T> {
    pub a1: Tensor4<T>,
    pub a2: Tensor4<T>,
    pub k1: Mat<T>,
    pub k2: Mat<T>,
    pub c1: T,
    pub c2: T,
    pub g: T,
    pub alpha1: T,
    pub alpha2: T,
    pub f1: [T; 3],
    pub f2: [T; 3],
}

/// Full cell-problem output: the coefficient set plus the redundant
/// quantities kept for cross-checking.
pub struct CellSolution<T> {
    pub coeffs: EffectiveCoefficients<T>,
    /// volume-route evaluation of the pressure coupling (surface route is
    /// stored in the coefficients)
    pub b_volume: Mat<T>,
    /// energy-vs-volume agreement of the homogenized elasticity
    pub energy_defect: f64,
    pub zeta: ZetaHistory<T>,
}

/// Run every cell problem and assemble the complete coefficient set.
pub fn compute_effective<T: Scalar>(
    mesh: &CellMesh,
    m: &CellMaterials<T>,
    dt: T,
    n_kernel_steps: usize,
    tol: T,
    max_iter: usize,
) -> Result<CellSolution<T>> {
    let w = solve_elasticity_cell(mesh, &m.a1, &m.a2, tol, max_iter)?;
    let pis = solve_pressure_cell(mesh, &m.k1, tol, max_iter)?;
    let (a_eff, energy_defect) = effective_elasticity(mesh, &m.a1, &m.a2, &w);
    let k_eff = effective_permeability(mesh, &m.k1, &pis);
    let (b_coupling, b_volume) = pressure_coupling(mesh, m.alpha1, &pis);
    let lambda_coupling = strain_coupling(mesh, m.alpha1, &w);
    let (c_tilde, g_tilde) = averaged_scalars(mesh, m.c1, m.g);
    let zeta = solve_robin_evolution(mesh, m.c2, &m.k2, m.g, dt, n_kernel_steps, tol, max_iter)?;
    let kernels = memory_kernels(&zeta, m.alpha2);
    let coeffs = EffectiveCoefficients {
        dim: mesh.dim(),
        a_eff,
        k_eff,
        b_coupling,
        lambda_coupling,
        c_tilde,
        g_tilde,
        f_bar: body_force_average(mesh, &m.f1, &m.f2),
        vol_frac_matrix: mesh.vol_frac_matrix(),
        vol_frac_inclusion: mesh.vol_frac_inclusion(),
        cell_fingerprint: mesh.fingerprint(),
        kernels,
    };
    Ok(CellSolution {
        coeffs,
        b_volume,
        energy_defect,
        zeta,
    })
}

/// The directly averaged scalars: storativity and total exchange.
pub fn averaged_scalars<T: Scalar>(mesh: &CellMesh, c1: T, g: T) -> (T, T) {
    let c_tilde = c1 * mesh.vol_frac_matrix::<T>();
    let g_tilde = g * mesh.total_interface_area::<T>();
    (c_tilde, g_tilde)
}

/// Averaged body force |Y1| f1 + |Y2| f2.
pub fn body_force_average<T: Scalar>(mesh: &CellMesh, f1: &[T; 3], f2: &[T; 3]) -> [T; 3] {
    let (y1, y2) = (mesh.vol_frac_matrix::<T>(), mesh.vol_frac_inclusion::<T>());
    let mut f = [T::zero(); 3];
    for p in 0..3 {
        f[p] = y1 * f1[p] + y2 * f2[p];
    }
    f
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell_problems::{solve_elasticity_cell, solve_pressure_cell, solve_robin_evolution};
    use crate::geometry::{build_unit_cell, InclusionSpec};

    fn cell(dim: usize, res: usize) -> CellMesh {
        let mut c = [0.0; 3];
        for a in 0..dim {
            c[a] = 0.5;
        }
        build_unit_cell(dim, res, InclusionSpec::Cube { side: 0.5 }, c).unwrap()
    }

    #[test]
    fn zero_contrast_elasticity_recovers_material() {
        let mesh = cell(2, 8);
        let a = Tensor4::<f64>::isotropic(2, 2.0, 1.0);
        let w = solve_elasticity_cell(&mesh, &a, &a, 1e-13, 500).unwrap();
        let (a_eff, defect) = effective_elasticity(&mesh, &a, &a, &w);
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    for l in 0..2 {
                        assert!(
                            (a_eff.get(i, j, k, l) - a.get(i, j, k, l)).abs() < 1e-12,
                            "uniform medium: a_eff must equal the material"
                        );
                    }
                }
            }
        }
        assert!(defect < 1e-12);
    }

    #[test]
    fn contrasted_elasticity_energy_consistency() {
        let mesh = cell(3, 4);
        let a1 = Tensor4::<f64>::isotropic(3, 2.0, 1.0);
        let a2 = Tensor4::<f64>::isotropic(3, 0.4, 0.2);
        let w = solve_elasticity_cell(&mesh, &a1, &a2, 1e-12, 4000).unwrap();
        let (a_eff, defect) = effective_elasticity(&mesh, &a1, &a2, &w);
        assert!(defect < 1e-8, "energy form defect {defect}");
        assert!(a_eff.max_major_asymmetry() < 1e-8);
        assert!(a_eff.max_minor_asymmetry() < 1e-10);
        // homogenized stiffness sits between the phases in energy
        assert!(a_eff.get(0, 0, 0, 0) < a1.get(0, 0, 0, 0));
        assert!(a_eff.get(0, 0, 0, 0) > a2.get(0, 0, 0, 0));
    }

    #[test]
    fn permeability_spd_and_bounded() {
        let mesh = cell(2, 8);
        let k1 = Mat::<f64>::scaled_identity(2, 3.0);
        let pis = solve_pressure_cell(&mesh, &k1, 1e-13, 4000).unwrap();
        let k_eff = effective_permeability(&mesh, &k1, &pis);
        assert!(k_eff.max_asymmetry() < 1e-10);
        assert!(k_eff.min_eigenvalue_sym() > 0.0);
        // the corrector minimizes the energy, so k_eff <= |Y1| K1 on the diagonal
        let cap = 3.0 * mesh.vol_frac_matrix::<f64>();
        for j in 0..2 {
            assert!(k_eff.get(j, j) <= cap + 1e-12);
            assert!(k_eff.get(j, j) > 0.0);
        }
        // cubic symmetry of the cell: isotropic response
        assert!((k_eff.get(0, 0) - k_eff.get(1, 1)).abs() < 1e-8);
        assert!(k_eff.get(0, 1).abs() < 1e-8);
    }

    #[test]
    fn pressure_coupling_routes_agree() {
        let mesh = cell(3, 4);
        let k1 = Mat::<f64>::identity(3);
        let pis = solve_pressure_cell(&mesh, &k1, 1e-13, 4000).unwrap();
        let (surface, volume) = pressure_coupling(&mesh, 0.9, &pis);
        for j in 0..3 {
            for k in 0..3 {
                assert!(
                    (surface.get(j, k) - volume.get(j, k)).abs() < 1e-10,
                    "surface {} vs volume {} at ({j},{k})",
                    surface.get(j, k),
                    volume.get(j, k)
                );
            }
        }
    }

    #[test]
    fn strain_coupling_zero_contrast() {
        let mesh = cell(2, 8);
        let a = Tensor4::<f64>::isotropic(2, 1.0, 1.0);
        let w = solve_elasticity_cell(&mesh, &a, &a, 1e-13, 500).unwrap();
        let lam = strain_coupling(&mesh, 0.8, &w);
        let expect = 0.8 * mesh.vol_frac_matrix::<f64>();
        for j in 0..2 {
            for k in 0..2 {
                let want = if j == k { expect } else { 0.0 };
                assert!((lam.get(j, k) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn kernel_sums_telescope() {
        let mesh = cell(3, 8);
        let k2 = Mat::<f64>::identity(3);
        let alpha2 = 0.7;
        let hist = solve_robin_evolution(&mesh, 1.0, &k2, 1.0, 0.02, 60, 1e-13, 4000).unwrap();
        let kt = memory_kernels(&hist, alpha2);
        let last = hist.steps.last().unwrap();
        assert!((kt.eta_total() - last.flux_g).abs() < 1e-11);
        assert!((kt.m_total() - last.bulk).abs() < 1e-12);
        for p in 0..3 {
            assert!((kt.theta_total()[p] - alpha2 * last.moment[p]).abs() < 1e-11);
        }
        // relaxation increments are nonnegative and (after the first step)
        // nonincreasing
        for w in kt.eta.windows(2) {
            assert!(w[0] >= -1e-13 && w[1] <= w[0] + 1e-11);
        }
    }

    #[test]
    fn averaged_scalars_are_linear() {
        let mesh = cell(3, 4);
        let (c, g) = averaged_scalars(&mesh, 2.0f64, 0.5);
        assert!((c - 2.0 * 0.875).abs() < 1e-15);
        assert!((g - 0.5 * 1.5).abs() < 1e-15);
        let f: [f64; 3] = body_force_average(&mesh, &[1.0, 0.0, 0.0], &[3.0, 0.0, 0.0]);
        assert!((f[0] - (0.875 + 3.0 * 0.125)).abs() < 1e-15);
        assert_eq!(f[1], 0.0);
    }
}
