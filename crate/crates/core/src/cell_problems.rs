//! The three unit-cell problems: periodic elastic correctors on Y, pressure
//! correctors on the matrix region Y1, and the evolutionary Robin problem on
//! the inclusion region Y2 whose increments generate the memory kernels.

use crate::error::{Error, Result};
use crate::fem::{
    self, q1, solve_projected_cg, DofMap, DomainSelector, NullSpace, SparseOperator,
};
use crate::geometry::{validate_geometry, CellMesh, Phase};
use crate::scalar::Scalar;
use crate::tensor::{Mat, Tensor4};

/// Symmetrized basis strain E^{jk} = (e_j ox e_k + e_k ox e_j)/2.
pub fn basis_strain<T: Scalar>(dim: usize, j: usize, k: usize) -> Mat<T> {
    let mut e = Mat::zeros(dim);
    if j == k {
        e.set(j, j, T::one());
    } else {
        e.set(j, k, T::half());
        e.set(k, j, T::half());
    }
    e
}

/// Periodic elastic correctors w^{jk}, one vector field per independent
/// strain pair, stored on the full-cell displacement dof map.
pub struct ElasticCorrectorSet<T> {
    pub dofs: DofMap,
    pub pairs: Vec<(usize, usize)>,
    pub fields: Vec<Vec<T>>,
}

impl<T: Scalar> ElasticCorrectorSet<T> {
    /// Corrector for the (j,k) strain pair (order-insensitive).
    pub fn w(&self, j: usize, k: usize) -> &[T] {
        let p = self
            .pairs
            .iter()
            .position(|&(a, b)| (a, b) == (j, k) || (a, b) == (k, j))
            .expect("valid strain pair");
        &self.fields[p]
    }
}

/// Solve the elastic cell problems: find periodic w^{jk} with
/// int_Y A (E^{jk} + e(w^{jk})) : e(v) = 0 for all periodic v.
pub fn solve_elasticity_cell<T: Scalar>(
    mesh: &CellMesh,
    a_matrix: &Tensor4<T>,
    a_inclusion: &Tensor4<T>,
    tol: T,
    max_iter: usize,
) -> Result<ElasticCorrectorSet<T>> {
    let dim = mesh.dim();
    let op = fem::assemble_elasticity(mesh, a_matrix, a_inclusion)?;
    let dofs = DofMap::cell(mesh, DomainSelector::Full, dim);
    let h = [mesh.h::<T>(); 3];
    let gi = q1::grad_integrals(dim, &h);

    let pairs: Vec<(usize, usize)> = Tensor4::<T>::voigt_pairs(dim).to_vec();
    let mut fields = Vec::with_capacity(pairs.len());
    for &(j, k) in &pairs {
        let e_jk = basis_strain(dim, j, k);
        let s_matrix = a_matrix.apply(&e_jk);
        let s_inclusion = a_inclusion.apply(&e_jk);
        let mut rhs = vec![T::zero(); op.dim()];
        fem::for_each_element(mesh, DomainSelector::Full, |voxel, corners| {
            let s = match mesh.phase(voxel) {
                Phase::Matrix => &s_matrix,
                Phase::Inclusion => &s_inclusion,
            };
            for (a, &n) in corners.iter().enumerate() {
                for i in 0..dim {
                    let mut v = T::zero();
                    for p in 0..dim {
                        v += s.get(i, p) * gi[a][p];
                    }
                    rhs[dofs.dof(n, i).unwrap()] -= v;
                }
            }
        });
        let (x, _) = solve_projected_cg(&op, &rhs, tol, max_iter).map_err(|e| match e {
            Error::SolverDiverged {
                residual,
                iterations,
                ..
            } => Error::SolverDiverged {
                context: format!("elastic corrector ({j},{k})"),
                residual,
                iterations,
            },
            other => other,
        })?;
        fields.push(x);
    }
    Ok(ElasticCorrectorSet { dofs, pairs, fields })
}

/// Pressure correctors pi_j on the matrix region, scalar fields with zero
/// mean over the periodic matrix node set.
pub struct PressureCorrectorSet<T> {
    pub dofs: DofMap,
    pub fields: Vec<Vec<T>>,
}

impl<T: Scalar> PressureCorrectorSet<T> {
    pub fn pi(&self, j: usize) -> &[T] {
        &self.fields[j]
    }
}

/// Solve the permeability cell problems on Y1: find periodic pi_j with
/// int_{Y1} K1 (grad pi_j + e_j) . grad q = 0, natural (no-flux) condition
/// on the interface. Requires a connected matrix region.
pub fn solve_pressure_cell<T: Scalar>(
    mesh: &CellMesh,
    k_matrix: &Mat<T>,
    tol: T,
    max_iter: usize,
) -> Result<PressureCorrectorSet<T>> {
    let report = validate_geometry(mesh);
    if report.violated("matrix_connected") {
        return Err(Error::Geometry(
            "matrix region is disconnected; pressure cell problem is ill-posed".into(),
        ));
    }
    let dim = mesh.dim();
    let op = fem::assemble_scalar_diffusion(mesh, DomainSelector::Matrix, k_matrix, k_matrix)?;
    let dofs = DofMap::cell(mesh, DomainSelector::Matrix, 1);
    let h = [mesh.h::<T>(); 3];
    let gi = q1::grad_integrals(dim, &h);

    let mut fields = Vec::with_capacity(dim);
    for j in 0..dim {
        let mut ej = [T::zero(); 3];
        ej[j] = T::one();
        let ke = k_matrix.mul_vec(&ej);
        let mut rhs = vec![T::zero(); op.dim()];
        fem::for_each_element(mesh, DomainSelector::Matrix, |_, corners| {
            for (a, &n) in corners.iter().enumerate() {
                let mut v = T::zero();
                for p in 0..dim {
                    v += ke[p] * gi[a][p];
                }
                rhs[dofs.scalar_dof(n).unwrap()] -= v;
            }
        });
        let (x, _) = solve_projected_cg(&op, &rhs, tol, max_iter)?;
        fields.push(x);
    }
    Ok(PressureCorrectorSet { dofs, fields })
}

/// One backward-Euler step of the interface relaxation field.
pub struct ZetaStep<T> {
    /// nodal values on the inclusion dof map
    pub field: Vec<T>,
    /// int_Gamma g zeta ds (lumped)
    pub flux_g: T,
    /// int_Gamma zeta n ds, normal pointing from Y1 into Y2
    pub moment: [T; 3],
    /// lumped int_{Y2} zeta
    pub bulk: T,
}

/// Backward-Euler history of the Robin relaxation problem on Y2:
/// c2 zeta_t - div(K2 grad zeta) = 0 in Y2, K2 grad zeta . n = g (1 - zeta)
/// on Gamma, zeta(0) = 0. Step 0 is the zero initial state.
pub struct ZetaHistory<T> {
    pub dt: T,
    pub steps: Vec<ZetaStep<T>>,
}

impl<T: Scalar> ZetaHistory<T> {
    pub fn n_steps(&self) -> usize {
        self.steps.len() - 1
    }
}

/// Assemble the per-step implicit operator and fixed data for the Robin
/// evolution; shared by the kernel extraction and its oracles.
pub struct RobinSystem<T> {
    pub dofs: DofMap,
    /// (c2/dt) M_lumped + K + R, SPD
    pub op: SparseOperator<T>,
    /// lumped interface weights times g (the Robin load and mass)
    pub robin_weights: Vec<T>,
    /// lumped volume weights on Y2
    pub volume_weights: Vec<T>,
    pub c2: T,
    pub dt: T,
}

pub fn robin_system<T: Scalar>(
    mesh: &CellMesh,
    c2: T,
    k_inclusion: &Mat<T>,
    g: T,
    dt: T,
) -> Result<RobinSystem<T>> {
    if !(c2 > T::zero()) {
        return Err(Error::Material("inclusion storativity c2 must be positive".into()));
    }
    if !(dt > T::zero()) {
        return Err(Error::Config("time step must be positive".into()));
    }
    if g < T::zero() {
        return Err(Error::Material("interface permeability g must be nonnegative".into()));
    }
    let dofs = DofMap::cell(mesh, DomainSelector::Inclusion, 1);
    let mut op =
        fem::assemble_scalar_diffusion(mesh, DomainSelector::Inclusion, k_inclusion, k_inclusion)?;
    // g = 0 is allowed here (degenerate no-exchange limit); the cli-level
    // validation enforces strict positivity for production configs
    let robin_weights = fem::interface_weights_unchecked(mesh, &dofs, g);
    let volume_weights = fem::lumped_volume_weights(mesh, DomainSelector::Inclusion, &dofs);
    let mass: Vec<T> = volume_weights.iter().map(|&w| w * c2 / dt).collect();
    op.add_diagonal(&mass);
    op.add_diagonal(&robin_weights);
    // the Robin mass removes the constant null space
    op.set_null_space(NullSpace::None);
    Ok(RobinSystem {
        dofs,
        op,
        robin_weights,
        volume_weights,
        c2,
        dt,
    })
}

/// Interface and bulk aggregates of a nodal field on the inclusion dof map.
pub fn robin_aggregates<T: Scalar>(
    mesh: &CellMesh,
    sys: &RobinSystem<T>,
    field: Vec<T>,
) -> ZetaStep<T> {
    let dim = mesh.dim();
    let area = mesh.face_area::<T>();
    let mut flux_g = T::zero();
    for (w, z) in sys.robin_weights.iter().zip(&field) {
        flux_g += *w * *z;
    }
    let mut moment = [T::zero(); 3];
    for face in mesh.faces() {
        let n = face.normal::<T>(dim);
        let mut avg = T::zero();
        for &node in &face.nodes {
            avg += field[sys.dofs.scalar_dof(node).unwrap()];
        }
        avg /= T::of_usize(face.nodes.len());
        for p in 0..dim {
            moment[p] += area * avg * n[p];
        }
    }
    let mut bulk = T::zero();
    for (w, z) in sys.volume_weights.iter().zip(&field) {
        bulk += *w * *z;
    }
    ZetaStep {
        field,
        flux_g,
        moment,
        bulk,
    }
}

/// Run the Robin evolution for `n_steps` backward-Euler steps.
#[allow(clippy::too_many_arguments)]
pub fn solve_robin_evolution<T: Scalar>(
    mesh: &CellMesh,
    c2: T,
    k_inclusion: &Mat<T>,
    g: T,
    dt: T,
    n_steps: usize,
    tol: T,
    max_iter: usize,
) -> Result<ZetaHistory<T>> {
    let sys = robin_system(mesh, c2, k_inclusion, g, dt)?;
    let n = sys.dofs.n_scalar();
    let mut steps = Vec::with_capacity(n_steps + 1);
    steps.push(robin_aggregates(mesh, &sys, vec![T::zero(); n]));
    let mut prev = vec![T::zero(); n];
    for step in 1..=n_steps {
        let mut rhs = sys.robin_weights.clone();
        for i in 0..n {
            rhs[i] += sys.volume_weights[i] * sys.c2 / sys.dt * prev[i];
        }
        let (x, _) = solve_projected_cg(&sys.op, &rhs, tol, max_iter).map_err(|e| match e {
            Error::SolverDiverged {
                residual,
                iterations,
                ..
            } => Error::SolverDiverged {
                context: format!("Robin evolution step {step}"),
                residual,
                iterations,
            },
            other => other,
        })?;
        prev = x.clone();
        steps.push(robin_aggregates(mesh, &sys, x));
    }
    Ok(ZetaHistory { dt, steps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_unit_cell, InclusionSpec};

    fn cell(dim: usize, res: usize) -> CellMesh {
        let mut c = [0.0; 3];
        for a in 0..dim {
            c[a] = 0.5;
        }
        build_unit_cell(dim, res, InclusionSpec::Cube { side: 0.5 }, c).unwrap()
    }

    #[test]
    fn zero_contrast_correctors_vanish() {
        let mesh = cell(2, 8);
        let a = Tensor4::<f64>::isotropic(2, 1.0, 1.0);
        let set = solve_elasticity_cell(&mesh, &a, &a, 1e-12, 500).unwrap();
        for f in &set.fields {
            for &v in f {
                assert!(v.abs() < 1e-12, "uniform medium must need no corrector");
            }
        }
    }

    #[test]
    fn corrector_pair_symmetry_lookup() {
        let mesh = cell(2, 8);
        let a1 = Tensor4::isotropic(2, 2.0, 1.0);
        let a2 = Tensor4::isotropic(2, 0.5, 0.25);
        let set = solve_elasticity_cell(&mesh, &a1, &a2, 1e-10, 2000).unwrap();
        assert_eq!(set.w(0, 1).as_ptr(), set.w(1, 0).as_ptr());
        // contrast present: corrector nontrivial
        let nrm: f64 = set.w(0, 0).iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(nrm > 1e-6);
    }

    #[test]
    fn pressure_corrector_scaling_invariance() {
        let mesh = cell(2, 8);
        let k = Mat::<f64>::identity(2);
        let k2 = Mat::<f64>::scaled_identity(2, 2.0);
        let a = solve_pressure_cell(&mesh, &k, 1e-12, 2000).unwrap();
        let b = solve_pressure_cell(&mesh, &k2, 1e-12, 2000).unwrap();
        for (x, y) in a.fields.iter().zip(&b.fields) {
            for (u, v) in x.iter().zip(y) {
                assert!((u - v).abs() < 1e-9, "pi is invariant under scaling K1");
            }
        }
    }

    #[test]
    fn pressure_corrector_zero_mean() {
        let mesh = cell(3, 4);
        let k = Mat::<f64>::identity(3);
        let set = solve_pressure_cell(&mesh, &k, 1e-12, 2000).unwrap();
        for f in &set.fields {
            let mean: f64 = f.iter().sum::<f64>() / f.len() as f64;
            assert!(mean.abs() < 1e-12);
        }
    }

    #[test]
    fn zeta_bounds_and_monotonicity() {
        let mesh = cell(3, 8);
        let k = Mat::<f64>::identity(3);
        let hist = solve_robin_evolution(&mesh, 1.0, &k, 1.0, 0.01, 40, 1e-12, 2000).unwrap();
        for w in hist.steps.windows(2) {
            for (a, b) in w[0].field.iter().zip(&w[1].field) {
                assert!(*b >= *a - 1e-12, "nodewise monotone");
                assert!(*b <= 1.0 + 1e-12 && *b >= -1e-13, "0 <= zeta <= 1");
            }
        }
        // saturation flux decreases toward the fully relaxed value
        let g_total: f64 = 1.5;
        assert!(hist.steps.last().unwrap().flux_g <= g_total + 1e-12);
    }

    #[test]
    fn zeta_discrete_mass_balance() {
        let mesh = cell(3, 4);
        let k = Mat::<f64>::scaled_identity(3, 0.3);
        let c2 = 2.0;
        let dt = 0.05;
        let hist = solve_robin_evolution(&mesh, c2, &k, 0.7, dt, 20, 1e-13, 4000).unwrap();
        let sys = robin_system(&mesh, c2, &k, 0.7, dt).unwrap();
        let g_total: f64 = sys.robin_weights.iter().sum();
        for w in hist.steps.windows(2) {
            let lhs = c2 * (w[1].bulk - w[0].bulk) / dt;
            let rhs = g_total - w[1].flux_g;
            assert!(
                (lhs - rhs).abs() < 1e-9 * (1.0 + rhs.abs()),
                "lumped mass balance: {lhs} vs {rhs}"
            );
        }
    }

    #[test]
    fn well_mixed_limit_matches_exchange_ode() {
        // strong internal diffusion: zeta is spatially flat and obeys
        // c2 |Y2| z' = g |Gamma| (1 - z), so z(t) = 1 - exp(-12 t) here.
        let mesh = cell(3, 16);
        let k = Mat::<f64>::scaled_identity(3, 1.0e3);
        let dt = 1.0 / 600.0;
        let steps = 150; // t = 0.25
        let hist = solve_robin_evolution(&mesh, 1.0, &k, 1.0, dt, steps, 1e-11, 8000).unwrap();
        let z_avg = hist.steps[steps].bulk / 0.125;
        let exact = 1.0 - (-12.0f64 * 0.25).exp();
        assert!(
            (z_avg - exact).abs() < 0.05 * exact,
            "well-mixed average {z_avg} vs ODE {exact}"
        );
    }

    #[test]
    fn moment_of_constant_field_is_zero() {
        // a closed interface has zero net normal, so the moment of zeta -> 1
        // must tend to zero; check directly with the saturated state.
        let mesh = cell(3, 8);
        let k = Mat::<f64>::identity(3);
        let sys = robin_system(&mesh, 1.0, &k, 1.0, 0.1).unwrap();
        let ones = vec![1.0f64; sys.dofs.n_scalar()];
        let step = robin_aggregates(&mesh, &sys, ones);
        for p in 0..3 {
            assert!(step.moment[p].abs() < 1e-13);
        }
    }
}
