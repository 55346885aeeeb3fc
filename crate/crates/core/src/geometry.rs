//! Voxelized periodic unit cell (matrix + inclusion + interface) and the
//! macroscopic box domain.
//!
//! The unit cell Y = (0,1)^d is split into a uniform voxel grid. Each voxel
//! carries a phase label; the interface is the set of voxel faces separating
//! the two phases, with normals oriented from the matrix into the inclusion.
//! All combinatorial data is exact; metric quantities (areas, volumes) are
//! produced on demand for any scalar type.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Matrix,
    Inclusion,
}

/// Inclusion shape, classified by the voxel-centroid rule.
#[derive(Debug, Clone, Copy)]
pub enum InclusionSpec {
    Cube { side: f64 },
    Sphere { radius: f64 },
}

/// One voxel face on the phase interface. The unit normal is the `axis`-th
/// canonical vector times `sign`, pointing from the matrix voxel into the
/// inclusion voxel (outward with respect to Y1).
#[derive(Debug, Clone)]
pub struct InterfaceFace {
    pub axis: usize,
    pub sign: i8,
    pub matrix_voxel: usize,
    pub inclusion_voxel: usize,
    /// Periodic representative node indices of the face corners (2^(d-1)).
    pub nodes: Vec<usize>,
}

impl InterfaceFace {
    pub fn normal<T: Scalar>(&self, dim: usize) -> [T; 3] {
        let mut n = [T::zero(); 3];
        debug_assert!(self.axis < dim);
        n[self.axis] = if self.sign > 0 { T::one() } else { -T::one() };
        n
    }
}

/// Voxelized periodic unit cell.
#[derive(Debug, Clone)]
pub struct CellMesh {
    dim: usize,
    res: usize,
    phase: Vec<Phase>,
    faces: Vec<InterfaceFace>,
    inclusion_voxels: usize,
    fingerprint: u64,
}

impl CellMesh {
    /// Build a mesh from raw per-voxel labels. No geometric validation is
    /// performed; see [`validate_geometry`].
    pub fn from_phases(dim: usize, res: usize, phase: Vec<Phase>) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::Geometry(format!("dim must be 2 or 3, got {dim}")));
        }
        if phase.len() != res.pow(dim as u32) {
            return Err(Error::Geometry(format!(
                "phase label count {} does not match res^dim = {}",
                phase.len(),
                res.pow(dim as u32)
            )));
        }
        let inclusion_voxels = phase.iter().filter(|p| **p == Phase::Inclusion).count();
        let mut mesh = Self {
            dim,
            res,
            phase,
            faces: Vec::new(),
            inclusion_voxels,
            fingerprint: 0,
        };
        mesh.faces = mesh.extract_interface();
        mesh.fingerprint = mesh.compute_fingerprint();
        Ok(mesh)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn res(&self) -> usize {
        self.res
    }

    pub fn h<T: Scalar>(&self) -> T {
        T::one() / T::of_usize(self.res)
    }

    pub fn voxel_count(&self) -> usize {
        self.phase.len()
    }

    pub fn node_count(&self) -> usize {
        // periodic representatives: one node per voxel corner lattice point
        self.phase.len()
    }

    pub fn phase(&self, voxel: usize) -> Phase {
        self.phase[voxel]
    }

    pub fn faces(&self) -> &[InterfaceFace] {
        &self.faces
    }

    pub fn inclusion_voxel_count(&self) -> usize {
        self.inclusion_voxels
    }

    pub fn matrix_voxel_count(&self) -> usize {
        self.phase.len() - self.inclusion_voxels
    }

    /// |Y2| as an exact voxel-count ratio.
    pub fn vol_frac_inclusion<T: Scalar>(&self) -> T {
        T::of_usize(self.inclusion_voxels) / T::of_usize(self.phase.len())
    }

    /// |Y1| = 1 - |Y2|.
    pub fn vol_frac_matrix<T: Scalar>(&self) -> T {
        T::of_usize(self.matrix_voxel_count()) / T::of_usize(self.phase.len())
    }

    pub fn face_area<T: Scalar>(&self) -> T {
        let h = self.h::<T>();
        match self.dim {
            2 => h,
            _ => h * h,
        }
    }

    pub fn voxel_volume<T: Scalar>(&self) -> T {
        let h = self.h::<T>();
        match self.dim {
            2 => h * h,
            _ => h * h * h,
        }
    }

    pub fn total_interface_area<T: Scalar>(&self) -> T {
        self.face_area::<T>() * T::of_usize(self.faces.len())
    }

    /// Sum of area * normal over all interface faces (zero for a closed
    /// surface; the per-axis signed face counts are integers).
    pub fn interface_closure_defect(&self) -> [i64; 3] {
        let mut s = [0i64; 3];
        for f in &self.faces {
            s[f.axis] += f.sign as i64;
        }
        s
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    #[inline]
    pub fn voxel_index(&self, c: &[usize; 3]) -> usize {
        let n = self.res;
        match self.dim {
            2 => c[0] + n * c[1],
            _ => c[0] + n * (c[1] + n * c[2]),
        }
    }

    #[inline]
    pub fn voxel_coords(&self, idx: usize) -> [usize; 3] {
        let n = self.res;
        match self.dim {
            2 => [idx % n, idx / n, 0],
            _ => [idx % n, (idx / n) % n, idx / (n * n)],
        }
    }

    /// Periodic representative node index for arbitrary lattice coordinates.
    #[inline]
    pub fn node_index(&self, c: &[usize; 3]) -> usize {
        let n = self.res;
        match self.dim {
            2 => (c[0] % n) + n * (c[1] % n),
            _ => (c[0] % n) + n * ((c[1] % n) + n * (c[2] % n)),
        }
    }

    /// Coordinates of a representative node in [0,1)^d.
    pub fn node_position<T: Scalar>(&self, node: usize) -> [T; 3] {
        let c = self.voxel_coords(node);
        let h = self.h::<T>();
        let mut x = [T::zero(); 3];
        for a in 0..self.dim {
            x[a] = T::of_usize(c[a]) * h;
        }
        x
    }

    fn extract_interface(&self) -> Vec<InterfaceFace> {
        let mut faces = Vec::new();
        let n = self.res;
        for v in 0..self.phase.len() {
            let c = self.voxel_coords(v);
            for axis in 0..self.dim {
                let mut cn = c;
                cn[axis] = (c[axis] + 1) % n;
                let w = self.voxel_index(&cn);
                if self.phase[v] == self.phase[w] {
                    continue;
                }
                let (matrix_voxel, inclusion_voxel, sign) = if self.phase[v] == Phase::Matrix {
                    (v, w, 1i8)
                } else {
                    (w, v, -1i8)
                };
                // Corner nodes of the shared face, on the lattice plane
                // x_axis = c[axis] + 1.
                let mut base = c;
                base[axis] = c[axis] + 1;
                let mut nodes = Vec::with_capacity(1 << (self.dim - 1));
                let others: Vec<usize> = (0..self.dim).filter(|a| *a != axis).collect();
                for corner in 0..(1usize << others.len()) {
                    let mut nc = base;
                    for (bit, &a) in others.iter().enumerate() {
                        if corner >> bit & 1 == 1 {
                            nc[a] += 1;
                        }
                    }
                    nodes.push(self.node_index(&nc));
                }
                faces.push(InterfaceFace {
                    axis,
                    sign,
                    matrix_voxel,
                    inclusion_voxel,
                    nodes,
                });
            }
        }
        faces
    }

    fn compute_fingerprint(&self) -> u64 {
        // FNV-1a over dim, res and the label string
        let mut h: u64 = 0xcbf29ce484222325;
        let mut eat = |b: u64| {
            h ^= b;
            h = h.wrapping_mul(0x100000001b3);
        };
        eat(self.dim as u64);
        eat(self.res as u64);
        for p in &self.phase {
            eat(match p {
                Phase::Matrix => 1,
                Phase::Inclusion => 2,
            });
        }
        h
    }
}

/// Classify voxels by the centroid-in-shape rule and build the cell mesh,
/// rejecting geometries that violate the cell assumptions.
pub fn build_unit_cell(
    dim: usize,
    res: usize,
    spec: InclusionSpec,
    center: [f64; 3],
) -> Result<CellMesh> {
    if res < 4 {
        return Err(Error::Geometry(format!("res must be >= 4, got {res}")));
    }
    let h = 1.0 / res as f64;
    let count = res.pow(dim as u32);
    let mut phase = vec![Phase::Matrix; count];
    for (idx, p) in phase.iter_mut().enumerate() {
        let c = match dim {
            2 => [idx % res, idx / res, 0],
            _ => [idx % res, (idx / res) % res, idx / (res * res)],
        };
        let mut centroid = [0.0f64; 3];
        for a in 0..dim {
            centroid[a] = (c[a] as f64 + 0.5) * h;
        }
        let inside = match spec {
            InclusionSpec::Cube { side } => (0..dim).all(|a| {
                (centroid[a] - center[a]).abs() < side / 2.0
            }),
            InclusionSpec::Sphere { radius } => {
                let r2: f64 = (0..dim).map(|a| (centroid[a] - center[a]).powi(2)).sum();
                r2 < radius * radius
            }
        };
        if inside {
            *p = Phase::Inclusion;
        }
    }
    let mesh = CellMesh::from_phases(dim, res, phase)?;
    let report = validate_geometry(&mesh);
    if !report.pass() {
        return Err(Error::Geometry(report.summary()));
    }
    Ok(mesh)
}

/// Accessor for the discrete interface, exactly the phase-boundary faces.
pub fn interface_faces(mesh: &CellMesh) -> &[InterfaceFace] {
    mesh.faces()
}

#[derive(Debug, Clone)]
pub struct Finding {
    pub name: String,
    pub ok: bool,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct GeometryReport {
    pub findings: Vec<Finding>,
}

impl GeometryReport {
    pub fn pass(&self) -> bool {
        self.findings.iter().all(|f| f.ok)
    }

    pub fn summary(&self) -> String {
        self.findings
            .iter()
            .filter(|f| !f.ok)
            .map(|f| format!("{}: {}", f.name, f.detail))
            .collect::<Vec<_>>()
            .join("; ")
    }

    pub fn violated(&self, name: &str) -> bool {
        self.findings.iter().any(|f| f.name == name && !f.ok)
    }
}

/// Check the cell assumptions: inclusion strictly interior, matrix phase
/// face-connected under periodic wrap, interface a closed surface.
pub fn validate_geometry(mesh: &CellMesh) -> GeometryReport {
    let mut findings = Vec::new();
    let res = mesh.res();
    let dim = mesh.dim();

    // inclusion interiority
    let mut touching = 0usize;
    for v in 0..mesh.voxel_count() {
        if mesh.phase(v) != Phase::Inclusion {
            continue;
        }
        let c = mesh.voxel_coords(v);
        if (0..dim).any(|a| c[a] == 0 || c[a] == res - 1) {
            touching += 1;
        }
    }
    findings.push(Finding {
        name: "inclusion_interior".into(),
        ok: touching == 0,
        detail: if touching == 0 {
            "closure of Y2 strictly inside Y".into()
        } else {
            format!("{touching} inclusion voxel(s) touch the boundary layer of Y")
        },
    });

    // matrix connectivity (BFS, face adjacency, periodic wrap)
    let matrix_total = mesh.matrix_voxel_count();
    let reached = if matrix_total == 0 {
        0
    } else {
        let start = (0..mesh.voxel_count())
            .find(|&v| mesh.phase(v) == Phase::Matrix)
            .unwrap();
        let mut seen = vec![false; mesh.voxel_count()];
        let mut queue = std::collections::VecDeque::new();
        seen[start] = true;
        queue.push_back(start);
        let mut count = 1usize;
        while let Some(v) = queue.pop_front() {
            let c = mesh.voxel_coords(v);
            for axis in 0..dim {
                for dir in [1usize, res - 1] {
                    let mut cn = c;
                    cn[axis] = (c[axis] + dir) % res;
                    let w = mesh.voxel_index(&cn);
                    if !seen[w] && mesh.phase(w) == Phase::Matrix {
                        seen[w] = true;
                        count += 1;
                        queue.push_back(w);
                    }
                }
            }
        }
        count
    };
    findings.push(Finding {
        name: "matrix_connected".into(),
        ok: matrix_total > 0 && reached == matrix_total,
        detail: format!("{reached} of {matrix_total} matrix voxels reachable"),
    });

    // interface closure
    let defect = mesh.interface_closure_defect();
    let closed = defect.iter().all(|&s| s == 0);
    findings.push(Finding {
        name: "interface_closed".into(),
        ok: closed,
        detail: format!("signed face count per axis: {defect:?}"),
    });

    GeometryReport { findings }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PressureBc {
    DirichletZero,
    NeumannZero,
}

/// Macroscopic box domain (0,L1) x ... with per-axis resolution.
#[derive(Debug, Clone)]
pub struct MacroDomain {
    pub dim: usize,
    pub extent: [f64; 3],
    pub res: [usize; 3],
    pub p1_bc: PressureBc,
}

impl MacroDomain {
    pub fn new(dim: usize, extent: [f64; 3], res: [usize; 3], p1_bc: PressureBc) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::Geometry(format!("dim must be 2 or 3, got {dim}")));
        }
        for a in 0..dim {
            if !(extent[a] > 0.0) {
                return Err(Error::Geometry(format!("extent[{a}] must be positive")));
            }
            if res[a] == 0 {
                return Err(Error::Geometry(format!("res[{a}] must be positive")));
            }
        }
        Ok(Self {
            dim,
            extent,
            res,
            p1_bc,
        })
    }

    pub fn node_counts(&self) -> [usize; 3] {
        let mut n = [1usize; 3];
        for a in 0..self.dim {
            n[a] = self.res[a] + 1;
        }
        n
    }

    pub fn node_total(&self) -> usize {
        let n = self.node_counts();
        n[0] * n[1] * n[2]
    }

    pub fn spacing(&self) -> [f64; 3] {
        let mut h = [0.0f64; 3];
        for a in 0..self.dim {
            h[a] = self.extent[a] / self.res[a] as f64;
        }
        h
    }
}
