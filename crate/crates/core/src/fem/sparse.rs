//! Symmetric sparse operators and a null-space-projected, Jacobi
//! preconditioned conjugate gradient solver.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Null space declared for an assembled operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NullSpace {
    None,
    /// the constant vector (scalar pure-periodic/Neumann problems)
    Constants,
    /// one constant vector per displacement component, interleaved layout
    Translations(usize),
}

/// Row-wise sparse symmetric operator.
#[derive(Debug, Clone)]
pub struct SparseOperator<T> {
    n: usize,
    rows: Vec<Vec<(usize, T)>>,
    null_space: NullSpace,
    finalized: bool,
}

impl<T: Scalar> SparseOperator<T> {
    pub fn new(n: usize, null_space: NullSpace) -> Self {
        Self {
            n,
            rows: vec![Vec::new(); n],
            null_space,
            finalized: false,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn null_space(&self) -> NullSpace {
        self.null_space
    }

    /// Redeclare the null space, e.g. after a zeroth-order term makes a
    /// formerly singular operator definite.
    pub fn set_null_space(&mut self, ns: NullSpace) {
        self.null_space = ns;
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: T) {
        debug_assert!(!self.finalized);
        self.rows[i].push((j, v));
    }

    /// Sort and merge duplicate entries per row.
    pub fn finalize(&mut self) {
        for row in &mut self.rows {
            row.sort_by_key(|e| e.0);
            let mut out: Vec<(usize, T)> = Vec::with_capacity(row.len());
            for &(j, v) in row.iter() {
                match out.last_mut() {
                    Some(last) if last.0 == j => last.1 += v,
                    _ => out.push((j, v)),
                }
            }
            *row = out;
        }
        self.finalized = true;
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.n];
        for (i, row) in self.rows.iter().enumerate() {
            let mut s = T::zero();
            for &(j, v) in row {
                s += v * x[j];
            }
            y[i] = s;
        }
        y
    }

    pub fn diag(&self) -> Vec<T> {
        let mut d = vec![T::zero(); self.n];
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                if j == i {
                    d[i] += v;
                }
            }
        }
        d
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.rows[i]
            .iter()
            .find(|e| e.0 == j)
            .map(|e| e.1)
            .unwrap_or_else(T::zero)
    }

    /// Maximum relative deviation from symmetry over stored entries.
    pub fn symmetry_defect(&self) -> f64 {
        let mut max_abs = T::zero();
        for row in &self.rows {
            for &(_, v) in row {
                max_abs = max_abs.max(v.abs());
            }
        }
        if max_abs == T::zero() {
            return 0.0;
        }
        let mut defect = T::zero();
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                defect = defect.max((v - self.get(j, i)).abs());
            }
        }
        (defect / max_abs).as_f64()
    }

    /// Add a diagonal contribution from per-dof weights.
    pub fn add_diagonal(&mut self, w: &[T]) {
        assert_eq!(w.len(), self.n);
        for (i, &v) in w.iter().enumerate() {
            self.rows[i].push((i, v));
        }
        self.finalized = false;
        self.finalize();
    }

    /// Project out the declared null space (zero mean, or zero mean per
    /// component for interleaved displacement fields).
    pub fn project(&self, x: &mut [T]) {
        match self.null_space {
            NullSpace::None => {}
            NullSpace::Constants => {
                let mean = x.iter().copied().sum::<T>() / T::of_usize(x.len());
                for v in x.iter_mut() {
                    *v -= mean;
                }
            }
            NullSpace::Translations(c) => {
                let per = x.len() / c;
                for comp in 0..c {
                    let mut s = T::zero();
                    for i in (comp..x.len()).step_by(c) {
                        s += x[i];
                    }
                    let mean = s / T::of_usize(per);
                    for i in (comp..x.len()).step_by(c) {
                        x[i] -= mean;
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolveStats {
    pub iterations: usize,
    pub residual: f64,
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(x, y)| *x * *y).sum()
}

fn norm<T: Scalar>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

/// Preconditioned conjugate gradients with the null space removed by
/// projection each iteration. The right-hand side is projected internally,
/// so consistent singular systems are handled without pinning a node.
pub fn solve_projected_cg<T: Scalar>(
    op: &SparseOperator<T>,
    rhs: &[T],
    tol: T,
    max_iter: usize,
) -> Result<(Vec<T>, SolveStats)> {
    let n = op.dim();
    assert_eq!(rhs.len(), n);
    let mut b = rhs.to_vec();
    op.project(&mut b);
    let bnorm = norm(&b);
    if bnorm == T::zero() {
        return Ok((
            vec![T::zero(); n],
            SolveStats {
                iterations: 0,
                residual: 0.0,
            },
        ));
    }
    let diag = op.diag();
    let minv: Vec<T> = diag
        .iter()
        .map(|&d| if d != T::zero() { T::one() / d } else { T::one() })
        .collect();

    let mut x = vec![T::zero(); n];
    let mut r = b.clone();
    let mut z: Vec<T> = r.iter().zip(&minv).map(|(ri, mi)| *ri * *mi).collect();
    op.project(&mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let target = tol * bnorm;

    for it in 0..max_iter {
        let mut q = op.matvec(&p);
        op.project(&mut q);
        let pq = dot(&p, &q);
        if pq <= T::zero() {
            return Err(Error::SolverDiverged {
                context: "projected CG: non-positive curvature".into(),
                residual: norm(&r).as_f64(),
                iterations: it,
            });
        }
        let alpha = rz / pq;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        op.project(&mut x);
        op.project(&mut r);
        let rnorm = norm(&r);
        if rnorm <= target {
            return Ok((
                x,
                SolveStats {
                    iterations: it + 1,
                    residual: rnorm.as_f64(),
                },
            ));
        }
        for i in 0..n {
            z[i] = r[i] * minv[i];
        }
        op.project(&mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::SolverDiverged {
        context: "projected CG: max iterations exceeded".into(),
        residual: norm(&r).as_f64(),
        iterations: max_iter,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag_op(d: &[f64]) -> SparseOperator<f64> {
        let mut op = SparseOperator::new(d.len(), NullSpace::None);
        for (i, &v) in d.iter().enumerate() {
            op.add(i, i, v);
        }
        op.finalize();
        op
    }

    #[test]
    fn spd_diagonal_solved_exactly() {
        let op = diag_op(&[2.0, 3.0, 5.0]);
        let mut rhs = vec![0.0; 3];
        rhs[0] = 1.0;
        let (x, stats) = solve_projected_cg(&op, &rhs, 1e-14, 10).unwrap();
        assert!(stats.iterations <= 3);
        assert!((x[0] - 0.5).abs() < 1e-14);
        assert!(x[1].abs() < 1e-14 && x[2].abs() < 1e-14);
    }

    #[test]
    fn zero_rhs_returns_zero() {
        let mut op = SparseOperator::new(4, NullSpace::Constants);
        // singular periodic 1D Laplacian
        for i in 0..4 {
            op.add(i, i, 2.0);
            op.add(i, (i + 1) % 4, -1.0);
            op.add(i, (i + 3) % 4, -1.0);
        }
        op.finalize();
        let (x, _) = solve_projected_cg(&op, &[0.0; 4], 1e-12, 100).unwrap();
        assert!(x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn singular_system_solution_has_zero_mean() {
        let n = 16;
        let mut op = SparseOperator::new(n, NullSpace::Constants);
        for i in 0..n {
            op.add(i, i, 2.0);
            op.add(i, (i + 1) % n, -1.0);
            op.add(i, (i + n - 1) % n, -1.0);
        }
        op.finalize();
        let rhs: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * i as f64 / n as f64).sin())
            .collect();
        let (x, _) = solve_projected_cg(&op, &rhs, 1e-13, 1000).unwrap();
        let mean: f64 = x.iter().sum::<f64>() / n as f64;
        let nrm: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(mean.abs() <= 1e-12 * nrm);
        // residual actually small
        let r = op.matvec(&x);
        let mut rr: Vec<f64> = rhs.iter().zip(&r).map(|(b, a)| b - a).collect();
        op.project(&mut rr);
        assert!(rr.iter().map(|v| v * v).sum::<f64>().sqrt() < 1e-11);
    }

    #[test]
    fn duplicate_entries_merged() {
        let mut op = SparseOperator::<f64>::new(2, NullSpace::None);
        op.add(0, 0, 1.0);
        op.add(0, 0, 2.0);
        op.add(1, 1, 1.0);
        op.finalize();
        assert_eq!(op.get(0, 0), 3.0);
    }
}
