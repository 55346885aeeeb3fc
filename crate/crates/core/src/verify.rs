//! Named, reportable correctness checks: coefficient identities, kernel
//! laws, degenerate-limit recoveries against independently assembled
//! steppers, and the kernel-vs-micro mode equivalence.

use crate::cell_problems::ZetaHistory;
use crate::effective::{compute_effective, CellMaterials, EffectiveCoefficients, KernelTable};
use crate::error::Result;
use crate::fem::dense::DenseMatrix;
use crate::fem::q1;
use crate::geometry::{CellMesh, MacroDomain, PressureBc};
use crate::macro_biot::{run_macro, run_micro_coupled, ExtraSources, MacroConfig, MacroGrid};
use crate::scalar::Scalar;
use crate::tensor::Mat;

/// Outcome of one named check.
#[derive(Debug, Clone)]
pub struct CheckReport {
    pub name: String,
    pub pass: bool,
    pub measured: f64,
    pub tolerance: f64,
    /// where the expected value comes from: an exact identity, an
    /// independent oracle computation, or a stated bound
    pub provenance: &'static str,
}

impl CheckReport {
    fn bound(name: &str, measured: f64, tolerance: f64, provenance: &'static str) -> Self {
        Self {
            name: name.to_string(),
            pass: measured <= tolerance,
            measured,
            tolerance,
            provenance,
        }
    }

    fn positive(name: &str, measured: f64, provenance: &'static str) -> Self {
        Self {
            name: name.to_string(),
            pass: measured > 0.0,
            measured,
            tolerance: 0.0,
            provenance,
        }
    }
}

pub fn all_pass(reports: &[CheckReport]) -> bool {
    reports.iter().all(|r| r.pass)
}

/// Structural laws of the assembled coefficient set.
pub fn check_tensor_laws<T: Scalar>(
    coeffs: &EffectiveCoefficients<T>,
    b_volume: &Mat<T>,
    k1: &Mat<T>,
    energy_defect: f64,
) -> Vec<CheckReport> {
    let d = coeffs.dim;
    let mut out = Vec::new();

    let mut amax = T::zero();
    for i in 0..d {
        for j in 0..d {
            for k in 0..d {
                for l in 0..d {
                    amax = amax.max(coeffs.a_eff.get(i, j, k, l).abs());
                }
            }
        }
    }
    let amax = amax.as_f64().max(f64::MIN_POSITIVE);
    out.push(CheckReport::bound(
        "a_eff_minor_symmetry",
        coeffs.a_eff.max_minor_asymmetry().as_f64() / amax,
        1e-10,
        "identity",
    ));
    out.push(CheckReport::bound(
        "a_eff_major_symmetry",
        coeffs.a_eff.max_major_asymmetry().as_f64() / amax,
        1e-8,
        "identity",
    ));
    out.push(CheckReport::positive(
        "a_eff_spd",
        coeffs.a_eff.min_eigenvalue_sym().as_f64(),
        "identity",
    ));
    out.push(CheckReport::bound(
        "a_eff_energy_volume_agreement",
        energy_defect / amax,
        1e-8,
        "oracle",
    ));

    let kmax = (0..d)
        .flat_map(|i| (0..d).map(move |j| (i, j)))
        .fold(T::zero(), |m, (i, j)| m.max(coeffs.k_eff.get(i, j).abs()))
        .as_f64()
        .max(f64::MIN_POSITIVE);
    out.push(CheckReport::bound(
        "k_eff_symmetry",
        coeffs.k_eff.max_asymmetry().as_f64() / kmax,
        1e-12,
        "identity",
    ));
    out.push(CheckReport::positive(
        "k_eff_spd",
        coeffs.k_eff.min_eigenvalue_sym().as_f64(),
        "identity",
    ));

    // Voigt bound: k_eff <= |Y1| K1 in quadratic-form order
    let cap = Mat::from_fn(d, |i, j| {
        coeffs.vol_frac_matrix * k1.get(i, j) - coeffs.k_eff.get(i, j)
    });
    out.push(CheckReport {
        name: "k_eff_voigt_bound".into(),
        pass: cap.min_eigenvalue_sym().as_f64() >= -1e-12,
        measured: cap.min_eigenvalue_sym().as_f64(),
        tolerance: -1e-12,
        provenance: "bound",
    });

    out.push(CheckReport::bound(
        "lambda_symmetry",
        coeffs.lambda_coupling.max_asymmetry().as_f64(),
        1e-10,
        "identity",
    ));

    let mut bdiff = T::zero();
    for i in 0..d {
        for j in 0..d {
            bdiff = bdiff.max((coeffs.b_coupling.get(i, j) - b_volume.get(i, j)).abs());
        }
    }
    out.push(CheckReport::bound(
        "b_surface_volume_identity",
        bdiff.as_f64(),
        1e-10,
        "oracle",
    ));
    out
}

/// Discrete laws of the kernel table against the relaxation history.
pub fn check_kernel_laws<T: Scalar>(
    mesh: &CellMesh,
    table: &KernelTable<T>,
    coeffs: &EffectiveCoefficients<T>,
    zeta: &ZetaHistory<T>,
    alpha2: T,
) -> Vec<CheckReport> {
    let mut out = Vec::new();
    let last = zeta.steps.last().unwrap();

    out.push(CheckReport::bound(
        "kernel_eta_telescoping",
        (table.eta_total() - last.flux_g).abs().as_f64(),
        1e-10,
        "identity",
    ));
    out.push(CheckReport::bound(
        "kernel_m_telescoping",
        (table.m_total() - last.bulk).abs().as_f64(),
        1e-10,
        "identity",
    ));
    let mut th = 0.0f64;
    for p in 0..3 {
        th = th.max((table.theta_total()[p] - alpha2 * last.moment[p]).abs().as_f64());
    }
    out.push(CheckReport::bound(
        "kernel_theta_telescoping",
        th,
        1e-10,
        "identity",
    ));

    let min_eta = table
        .eta
        .iter()
        .fold(f64::INFINITY, |m, v| m.min(v.as_f64()));
    out.push(CheckReport {
        name: "kernel_eta_nonnegative".into(),
        pass: table.is_empty() || min_eta >= -1e-12,
        measured: if table.is_empty() { 0.0 } else { min_eta },
        tolerance: -1e-12,
        provenance: "identity",
    });

    // tail tolerances taken from the measured distance of zeta_N to
    // saturation, not hard-coded
    let eta_tail = (coeffs.g_tilde - last.flux_g).abs().as_f64() + 1e-10;
    out.push(CheckReport::bound(
        "kernel_eta_sum_vs_g_tilde",
        (table.eta_total() - coeffs.g_tilde).abs().as_f64(),
        eta_tail,
        "bound",
    ));
    let y2 = coeffs.vol_frac_inclusion;
    let m_tail = (y2 - last.bulk).abs().as_f64() + 1e-10;
    out.push(CheckReport::bound(
        "kernel_m_sum_vs_inclusion_volume",
        (table.m_total() - y2).abs().as_f64(),
        m_tail,
        "bound",
    ));

    // |sum theta| bounded by alpha2 |Gamma| max over interface of (1-zeta_N)
    let mut max_gap = T::zero();
    let dofs = &crate::fem::DofMap::cell(mesh, crate::fem::DomainSelector::Inclusion, 1);
    for face in mesh.faces() {
        for &node in &face.nodes {
            let z = last.field[dofs.scalar_dof(node).unwrap()];
            max_gap = max_gap.max((T::one() - z).abs());
        }
    }
    let theta_cap =
        alpha2.as_f64().abs() * mesh.total_interface_area::<T>().as_f64() * max_gap.as_f64()
            + 1e-10;
    let mut running = [T::zero(); 3];
    let mut worst = 0.0f64;
    for t in &table.theta {
        let mut mag = 0.0f64;
        for p in 0..3 {
            running[p] += t[p];
            mag = mag.max(running[p].abs().as_f64());
        }
        worst = worst.max(mag);
    }
    out.push(CheckReport::bound(
        "kernel_theta_partial_sum_bound",
        worst,
        theta_cap,
        "bound",
    ));
    out
}

/// Independently assembled single-porosity stepper: same physics as the
/// macro solver with exchange and memory removed, but dense block-ordered
/// assembly ([all u; all p]) and a dense LU — a separate code path.
fn single_porosity_dense(
    config: &MacroConfig<f64>,
    n_steps: usize,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let grid = MacroGrid::<f64>::new(&config.domain);
    let dim = grid.dim;
    let nn = grid.n_nodes();
    let coeffs = &config.coeffs;
    let dt = config.dt;
    let n = nn * (dim + 1);
    let uoff = 0;
    let poff = nn * dim;

    let ke_u = q1::elasticity_stiffness(dim, &grid.h, &coeffs.a_eff);
    let ce_g = q1::grad_p_dot_v(dim, &grid.h, &coeffs.b_coupling);
    let de = q1::div_u_times_q(dim, &grid.h, &coeffs.lambda_coupling);
    let ke_p = q1::scalar_stiffness(dim, &grid.h, &coeffs.k_eff);
    let me = q1::scalar_mass(dim, &grid.h);

    let mut constrained = vec![false; n];
    for node in 0..nn {
        if grid.is_boundary(node) {
            for c in 0..dim {
                constrained[uoff + node * dim + c] = true;
            }
            if config.domain.p1_bc == PressureBc::DirichletZero {
                constrained[poff + node] = true;
            }
        }
    }

    let mut mat = DenseMatrix::zeros(n);
    grid.for_each_element(|corners, _| {
        for (a, &na) in corners.iter().enumerate() {
            for i in 0..dim {
                let row = uoff + na * dim + i;
                if constrained[row] {
                    continue;
                }
                for (b, &nb) in corners.iter().enumerate() {
                    for j in 0..dim {
                        let col = uoff + nb * dim + j;
                        if !constrained[col] {
                            mat.add(row, col, ke_u[a * dim + i][b * dim + j]);
                        }
                    }
                    let col = poff + nb;
                    if !constrained[col] {
                        mat.add(row, col, ce_g[a * dim + i][b]);
                    }
                }
            }
        }
        for (b, &nb) in corners.iter().enumerate() {
            let row = poff + nb;
            if constrained[row] {
                continue;
            }
            for (a, &na) in corners.iter().enumerate() {
                for j in 0..dim {
                    let col = uoff + na * dim + j;
                    if !constrained[col] {
                        mat.add(row, col, de[b][a * dim + j] / dt);
                    }
                }
                let col = poff + na;
                if !constrained[col] {
                    mat.add(row, col, coeffs.c_tilde / dt * me[b][a] + ke_p[b][a]);
                }
            }
        }
    });
    for (r, &c) in constrained.iter().enumerate() {
        if c {
            mat.add(r, r, 1.0);
        }
    }
    let lu = mat.lu().expect("single-porosity oracle system singular");

    let nc = 1usize << dim;
    let phi_int: Vec<f64> = (0..nc).map(|a| me[a].iter().sum()).collect();
    let mut u_hist = vec![vec![0.0; nn * dim]];
    let mut p_hist = vec![vec![0.0; nn]];
    for _ in 1..=n_steps {
        let u_prev = u_hist.last().unwrap().clone();
        let p_prev = p_hist.last().unwrap().clone();
        let mut rhs = vec![0.0; n];
        grid.for_each_element(|corners, _| {
            for (a, &na) in corners.iter().enumerate() {
                for i in 0..dim {
                    rhs[uoff + na * dim + i] += coeffs.f_bar[i] * phi_int[a];
                }
                let row = poff + na;
                for (b, &nb) in corners.iter().enumerate() {
                    rhs[row] += me[a][b] * coeffs.c_tilde / dt * p_prev[nb];
                    for j in 0..dim {
                        rhs[row] += de[a][b * dim + j] / dt * u_prev[nb * dim + j];
                    }
                }
            }
        });
        for (r, &c) in constrained.iter().enumerate() {
            if c {
                rhs[r] = 0.0;
            }
        }
        let x = lu.solve(&rhs);
        u_hist.push(x[uoff..poff].to_vec());
        p_hist.push(x[poff..].to_vec());
    }
    (u_hist, p_hist)
}

/// Standalone parabolic stepper for the deformation-frozen limit: pressure
/// only, with exchange and the scalar memory convolution, dense assembly.
fn parabolic_dense(
    config: &MacroConfig<f64>,
    n_steps: usize,
    mass_source: &dyn Fn(f64, [f64; 3]) -> f64,
) -> Vec<Vec<f64>> {
    let grid = MacroGrid::<f64>::new(&config.domain);
    let dim = grid.dim;
    let nn = grid.n_nodes();
    let coeffs = &config.coeffs;
    let dt = config.dt;
    let table = &coeffs.kernels;
    let eta1 = if table.is_empty() { 0.0 } else { table.eta[0] };

    let ke_p = q1::scalar_stiffness(dim, &grid.h, &coeffs.k_eff);
    let me = q1::scalar_mass(dim, &grid.h);
    let gauss = q1::gauss(dim, &grid.h);

    let mut constrained = vec![false; nn];
    for node in 0..nn {
        if grid.is_boundary(node) && config.domain.p1_bc == PressureBc::DirichletZero {
            constrained[node] = true;
        }
    }

    let lhs_mass = coeffs.c_tilde / dt + coeffs.g_tilde - eta1;
    let mut mat = DenseMatrix::zeros(nn);
    grid.for_each_element(|corners, _| {
        for (b, &nb) in corners.iter().enumerate() {
            if constrained[nb] {
                continue;
            }
            for (a, &na) in corners.iter().enumerate() {
                if !constrained[na] {
                    mat.add(nb, na, lhs_mass * me[b][a] + ke_p[b][a]);
                }
            }
        }
    });
    for (r, &c) in constrained.iter().enumerate() {
        if c {
            mat.add(r, r, 1.0);
        }
    }
    let lu = mat.lu().expect("parabolic oracle system singular");

    let mut p_hist = vec![vec![0.0; nn]];
    for n in 1..=n_steps {
        let t_n = dt * n as f64;
        let p_prev = p_hist.last().unwrap().clone();
        let mut conv = vec![0.0; nn];
        for m in 1..n {
            let eta = table.eta[n - m];
            for (c, p) in conv.iter_mut().zip(&p_hist[m]) {
                *c += eta * p;
            }
        }
        let mut rhs = vec![0.0; nn];
        grid.for_each_element(|corners, x0| {
            for (xq, w) in &gauss {
                let mut xg = [0.0; 3];
                for a in 0..dim {
                    xg[a] = x0[a] + xq[a];
                }
                let vals = q1::shape_values(dim, &grid.h, xq);
                let s = mass_source(t_n, xg);
                for (a, &na) in corners.iter().enumerate() {
                    rhs[na] += w * vals[a] * s;
                }
            }
            for (a, &na) in corners.iter().enumerate() {
                for (b, &nb) in corners.iter().enumerate() {
                    rhs[na] += me[a][b] * (coeffs.c_tilde / dt * p_prev[nb] + conv[nb]);
                }
            }
        });
        for (r, &c) in constrained.iter().enumerate() {
            if c {
                rhs[r] = 0.0;
            }
        }
        p_hist.push(lu.solve(&rhs));
    }
    p_hist
}

fn max_abs_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let mut d = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        for (u, v) in x.iter().zip(y) {
            d = d.max((u - v).abs());
        }
    }
    d
}

/// (a) g = 0: full pipeline vs independent single-porosity assembly;
/// (b) deformation frozen: pressure equation vs standalone parabolic stepper.
pub fn check_degenerate_limits(
    mesh: &CellMesh,
    materials: &CellMaterials<f64>,
    domain: &MacroDomain,
    dt: f64,
    n_steps: usize,
) -> Result<Vec<CheckReport>> {
    let mut out = Vec::new();

    // (a) no exchange: kernels vanish identically, run must equal classic Biot
    let mut m_a = materials.clone();
    m_a.g = 0.0;
    if m_a.f1 == [0.0; 3] && m_a.f2 == [0.0; 3] {
        m_a.f1 = [1.0, 0.5, 0.0];
        m_a.f2 = [1.0, 0.5, 0.0];
    }
    let sol = compute_effective(mesh, &m_a, dt, n_steps, 1e-13, 10000)?;
    let config = MacroConfig {
        domain: domain.clone(),
        coeffs: sol.coeffs,
        dt,
        n_steps,
    };
    let hist = run_macro(&config, None)?;
    let (u_ref, p_ref) = single_porosity_dense(&config, n_steps);
    let diff = max_abs_diff(&hist.p1, &p_ref).max(max_abs_diff(&hist.u, &u_ref));
    out.push(CheckReport::bound(
        "degenerate_no_exchange_matches_biot",
        diff,
        1e-12,
        "oracle",
    ));

    // (b) frozen deformation: no contrast, no coupling coefficients
    let mut m_b = materials.clone();
    m_b.a2 = m_b.a1.clone();
    m_b.alpha1 = 0.0;
    m_b.alpha2 = 0.0;
    m_b.f1 = [0.0; 3];
    m_b.f2 = [0.0; 3];
    let sol = compute_effective(mesh, &m_b, dt, n_steps, 1e-13, 10000)?;
    let config = MacroConfig {
        domain: domain.clone(),
        coeffs: sol.coeffs,
        dt,
        n_steps,
    };
    let source = |_t: f64, x: [f64; 3]| 1.0 + x[0];
    let zero_mom = |_t: f64, _x: [f64; 3]| [0.0; 3];
    let hist = run_macro(
        &config,
        Some(&ExtraSources {
            momentum: &zero_mom,
            mass: &source,
        }),
    )?;
    let p_ref = parabolic_dense(&config, n_steps, &source);
    let diff = max_abs_diff(&hist.p1, &p_ref);
    out.push(CheckReport::bound(
        "degenerate_frozen_matches_parabolic",
        diff,
        1e-12,
        "oracle",
    ));
    // displacements must stay identically zero in the frozen limit
    let umax = hist
        .u
        .iter()
        .flatten()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    out.push(CheckReport::bound(
        "degenerate_frozen_zero_displacement",
        umax,
        0.0,
        "identity",
    ));
    Ok(out)
}

/// Kernel-convolution vs live micro-coupled macro run.
pub fn check_mode_equivalence(
    config: &MacroConfig<f64>,
    mesh: &CellMesh,
    materials: &CellMaterials<f64>,
) -> Result<CheckReport> {
    let a = run_macro(config, None)?;
    let b = run_micro_coupled(
        config,
        mesh,
        materials.c2,
        &materials.k2,
        materials.g,
        materials.alpha2,
        None,
        1e-13,
        10000,
    )?;
    let diff = max_abs_diff(&a.p1, &b.p1).max(max_abs_diff(&a.u, &b.u));
    Ok(CheckReport::bound(
        "mode_equivalence_kernel_vs_micro",
        diff,
        1e-8,
        "oracle",
    ))
}

/// Planted corruption that a healthy suite must flag: perturbs one
/// elasticity entry, breaking major symmetry.
pub fn negative_control<T: Scalar>(
    coeffs: &EffectiveCoefficients<T>,
    b_volume: &Mat<T>,
    k1: &Mat<T>,
    energy_defect: f64,
) -> Vec<CheckReport> {
    let mut corrupted = coeffs.clone();
    let v = corrupted.a_eff.get(0, 0, 0, 1);
    corrupted.a_eff.set(0, 0, 0, 1, v + T::of(1e-3));
    let reports = check_tensor_laws(&corrupted, b_volume, k1, energy_defect);
    let major_failed = reports
        .iter()
        .any(|r| r.name == "a_eff_major_symmetry" && !r.pass);
    vec![CheckReport {
        name: "negative_control_detects_corruption".into(),
        pass: major_failed,
        measured: if major_failed { 1.0 } else { 0.0 },
        tolerance: 1.0,
        provenance: "control",
    }]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_unit_cell, InclusionSpec};
    use crate::tensor::Tensor4;

    fn cell2d(res: usize) -> CellMesh {
        build_unit_cell(2, res, InclusionSpec::Cube { side: 0.5 }, [0.5, 0.5, 0.0]).unwrap()
    }

    fn materials() -> CellMaterials<f64> {
        CellMaterials {
            a1: Tensor4::isotropic(2, 2.0, 1.0),
            a2: Tensor4::isotropic(2, 1.0, 0.5),
            k1: Mat::identity(2),
            k2: Mat::scaled_identity(2, 0.5),
            c1: 1.0,
            c2: 1.0,
            g: 1.0,
            alpha1: 0.9,
            alpha2: 0.8,
            f1: [1.0, 0.0, 0.0],
            f2: [1.0, 0.0, 0.0],
        }
    }

    #[test]
    fn tensor_and_kernel_laws_pass() {
        let mesh = cell2d(8);
        let m = materials();
        let sol = compute_effective(&mesh, &m, 0.05, 8, 1e-13, 8000).unwrap();
        let reports = check_tensor_laws(&sol.coeffs, &sol.b_volume, &m.k1, sol.energy_defect);
        for r in &reports {
            assert!(r.pass, "{}: measured {} tol {}", r.name, r.measured, r.tolerance);
        }
        let reports =
            check_kernel_laws(&mesh, &sol.coeffs.kernels, &sol.coeffs, &sol.zeta, m.alpha2);
        for r in &reports {
            assert!(r.pass, "{}: measured {} tol {}", r.name, r.measured, r.tolerance);
        }
    }

    #[test]
    fn degenerate_limits_pass() {
        let mesh = cell2d(8);
        let m = materials();
        let domain =
            MacroDomain::new(2, [1.0, 1.0, 0.0], [8, 8, 0], PressureBc::DirichletZero).unwrap();
        let reports = check_degenerate_limits(&mesh, &m, &domain, 0.05, 4).unwrap();
        for r in &reports {
            assert!(r.pass, "{}: measured {} tol {}", r.name, r.measured, r.tolerance);
        }
    }

    #[test]
    fn mode_equivalence_passes() {
        let mesh = cell2d(8);
        let m = materials();
        let sol = compute_effective(&mesh, &m, 0.05, 3, 1e-13, 8000).unwrap();
        let config = MacroConfig {
            domain: MacroDomain::new(2, [1.0, 1.0, 0.0], [8, 8, 0], PressureBc::DirichletZero)
                .unwrap(),
            coeffs: sol.coeffs,
            dt: 0.05,
            n_steps: 3,
        };
        let report = check_mode_equivalence(&config, &mesh, &m).unwrap();
        assert!(report.pass, "measured {}", report.measured);
    }

    #[test]
    fn negative_control_fails_on_purpose() {
        let mesh = cell2d(8);
        let m = materials();
        let sol = compute_effective(&mesh, &m, 0.05, 2, 1e-13, 8000).unwrap();
        let reports = negative_control(&sol.coeffs, &sol.b_volume, &m.k1, sol.energy_defect);
        assert!(all_pass(&reports), "the planted corruption must be detected");
    }
}
