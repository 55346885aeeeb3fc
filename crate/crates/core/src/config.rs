//! Run configuration: a single TOML file with flat sections (geometry,
//! materials, time, macro, output), validated on load.

use crate::effective::CellMaterials;
use crate::error::{Error, Result};
use crate::geometry::{build_unit_cell, CellMesh, InclusionSpec, MacroDomain, PressureBc};
use crate::macro_biot::MacroMode;
use crate::tensor::{Mat, Tensor4};
use serde::Deserialize;

/// Scalar shorthand or a full matrix, for permeabilities.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Isotropic(f64),
    Full(Vec<Vec<f64>>),
}

impl MatrixSpec {
    fn to_mat(&self, dim: usize, name: &str) -> Result<Mat<f64>> {
        match self {
            MatrixSpec::Isotropic(v) => Ok(Mat::scaled_identity(dim, *v)),
            MatrixSpec::Full(rows) => {
                if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
                    return Err(Error::Config(format!("{name} must be a {dim}x{dim} matrix")));
                }
                Ok(Mat::from_fn(dim, |i, j| rows[i][j]))
            }
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySection {
    pub dim: usize,
    pub cell_res: usize,
    /// "cube" or "sphere"
    pub inclusion: String,
    /// side length (cube) or radius (sphere)
    pub size: f64,
    /// inclusion center, defaults to the cell midpoint
    pub center: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialsSection {
    pub lambda1: f64,
    pub mu1: f64,
    pub lambda2: f64,
    pub mu2: f64,
    pub k1: MatrixSpec,
    pub k2: MatrixSpec,
    pub c1: f64,
    pub c2: f64,
    pub g: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub f1: Option<Vec<f64>>,
    pub f2: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    pub dt: f64,
    pub n_steps: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MacroSection {
    pub extent: Vec<f64>,
    pub res: Vec<usize>,
    #[serde(default = "default_bc")]
    pub p1_bc: PressureBc,
    #[serde(default = "default_mode")]
    pub mode: String,
}

fn default_bc() -> PressureBc {
    PressureBc::DirichletZero
}

fn default_mode() -> String {
    "kernel".to_string()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: String,
    /// write step_<n>.vtk every this many steps; 0 disables field output
    #[serde(default)]
    pub vtk_every: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: GeometrySection,
    pub materials: MaterialsSection,
    pub time: TimeSection,
    #[serde(rename = "macro")]
    pub macro_: MacroSection,
    pub output: OutputSection,
}

impl RunConfig {
    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("config parse error: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Positivity, SPD and coercivity constraints on the material data.
    pub fn validate(&self) -> Result<()> {
        let dim = self.geometry.dim;
        if dim != 2 && dim != 3 {
            return Err(Error::Config("geometry.dim must be 2 or 3".into()));
        }
        if self.geometry.cell_res < 4 {
            return Err(Error::Config("geometry.cell_res must be at least 4".into()));
        }
        let m = &self.materials;
        if !(m.g > 0.0) {
            return Err(Error::Config("materials.g must be strictly positive".into()));
        }
        for (name, v) in [("c1", m.c1), ("c2", m.c2)] {
            if !(v > 0.0) {
                return Err(Error::Config(format!(
                    "materials.{name} must be strictly positive"
                )));
            }
        }
        for (name, lambda, mu) in [("1", m.lambda1, m.mu1), ("2", m.lambda2, m.mu2)] {
            if !(mu > 0.0) {
                return Err(Error::Config(format!("materials.mu{name} must be positive")));
            }
            if !(lambda * dim as f64 + 2.0 * mu > 0.0) {
                return Err(Error::Config(format!(
                    "phase {name} elasticity is not coercive (d*lambda + 2*mu <= 0)"
                )));
            }
        }
        for (name, spec) in [("k1", &m.k1), ("k2", &m.k2)] {
            let mat = spec.to_mat(dim, name)?;
            if !mat.is_spd(1e-12) {
                return Err(Error::Config(format!(
                    "materials.{name} must be symmetric positive definite"
                )));
            }
        }
        for (name, a) in [("alpha1", m.alpha1), ("alpha2", m.alpha2)] {
            if a < 0.0 {
                return Err(Error::Config(format!("materials.{name} must be nonnegative")));
            }
        }
        if !(self.time.dt > 0.0) {
            return Err(Error::Config("time.dt must be positive".into()));
        }
        for f in [&m.f1, &m.f2].into_iter().flatten() {
            if f.len() != dim {
                return Err(Error::Config(format!(
                    "body force must have {dim} components"
                )));
            }
        }
        if self.macro_.extent.len() != dim || self.macro_.res.len() != dim {
            return Err(Error::Config(format!(
                "macro.extent and macro.res must have {dim} entries"
            )));
        }
        if self.macro_.mode != "kernel" && self.macro_.mode != "micro" {
            return Err(Error::Config("macro.mode must be \"kernel\" or \"micro\"".into()));
        }
        Ok(())
    }

    pub fn cell_mesh(&self) -> Result<CellMesh> {
        let g = &self.geometry;
        let spec = match g.inclusion.as_str() {
            "cube" => InclusionSpec::Cube { side: g.size },
            "sphere" => InclusionSpec::Sphere { radius: g.size },
            other => {
                return Err(Error::Config(format!(
                    "geometry.inclusion must be \"cube\" or \"sphere\", got {other:?}"
                )))
            }
        };
        let mut center = [0.0f64; 3];
        match &g.center {
            Some(c) => {
                if c.len() != g.dim {
                    return Err(Error::Config(format!(
                        "geometry.center must have {} entries",
                        g.dim
                    )));
                }
                center[..g.dim].copy_from_slice(c);
            }
            None => {
                for a in 0..g.dim {
                    center[a] = 0.5;
                }
            }
        }
        build_unit_cell(g.dim, g.cell_res, spec, center)
    }

    pub fn cell_materials(&self) -> Result<CellMaterials<f64>> {
        let dim = self.geometry.dim;
        let m = &self.materials;
        let vec3 = |v: &Option<Vec<f64>>| {
            let mut out = [0.0f64; 3];
            if let Some(v) = v {
                out[..v.len()].copy_from_slice(v);
            }
            out
        };
        Ok(CellMaterials {
            a1: Tensor4::isotropic(dim, m.lambda1, m.mu1),
            a2: Tensor4::isotropic(dim, m.lambda2, m.mu2),
            k1: m.k1.to_mat(dim, "k1")?,
            k2: m.k2.to_mat(dim, "k2")?,
            c1: m.c1,
            c2: m.c2,
            g: m.g,
            alpha1: m.alpha1,
            alpha2: m.alpha2,
            f1: vec3(&m.f1),
            f2: vec3(&m.f2),
        })
    }

    pub fn macro_domain(&self) -> Result<MacroDomain> {
        let dim = self.geometry.dim;
        let mut extent = [0.0f64; 3];
        let mut res = [0usize; 3];
        extent[..dim].copy_from_slice(&self.macro_.extent);
        res[..dim].copy_from_slice(&self.macro_.res);
        MacroDomain::new(dim, extent, res, self.macro_.p1_bc)
    }

    pub fn mode(&self) -> MacroMode {
        if self.macro_.mode == "micro" {
            MacroMode::MicroCoupled
        } else {
            MacroMode::KernelConvolution
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub const SAMPLE: &str = r#"
[geometry]
dim = 2
cell_res = 8
inclusion = "cube"
size = 0.5

[materials]
lambda1 = 2.0
mu1 = 1.0
lambda2 = 1.0
mu2 = 0.5
k1 = 1.0
k2 = 0.5
c1 = 1.0
c2 = 1.0
g = 1.0
alpha1 = 0.9
alpha2 = 0.8
f1 = [1.0, 0.0]
f2 = [1.0, 0.0]

[time]
dt = 0.05
n_steps = 8

[macro]
extent = [1.0, 1.0]
res = [8, 8]

[output]
dir = "out"
"#;

    #[test]
    fn sample_parses_and_validates() {
        let cfg = RunConfig::from_toml(SAMPLE).unwrap();
        assert_eq!(cfg.geometry.dim, 2);
        assert_eq!(cfg.mode(), crate::macro_biot::MacroMode::KernelConvolution);
        assert!(cfg.cell_mesh().is_ok());
        assert!(cfg.cell_materials().is_ok());
        assert!(cfg.macro_domain().is_ok());
    }

    #[test]
    fn missing_field_names_the_field() {
        let broken = SAMPLE.replace("alpha1 = 0.9\n", "");
        let err = RunConfig::from_toml(&broken).unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("alpha1"), "message should name the field: {msg}");
    }

    #[test]
    fn negative_c2_rejected() {
        let broken = SAMPLE.replace("c2 = 1.0", "c2 = -1.0");
        assert!(matches!(
            RunConfig::from_toml(&broken),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn zero_g_rejected() {
        let broken = SAMPLE.replace("g = 1.0", "g = 0.0");
        assert!(matches!(
            RunConfig::from_toml(&broken),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn full_matrix_permeability_accepted() {
        let full = SAMPLE.replace("k1 = 1.0", "k1 = [[2.0, 0.1], [0.1, 1.0]]");
        let cfg = RunConfig::from_toml(&full).unwrap();
        let mats = cfg.cell_materials().unwrap();
        assert_eq!(mats.k1.get(0, 1), 0.1);
    }

    #[test]
    fn non_spd_permeability_rejected() {
        let bad = SAMPLE.replace("k1 = 1.0", "k1 = [[1.0, 2.0], [2.0, 1.0]]");
        assert!(matches!(RunConfig::from_toml(&bad), Err(Error::Config(_))));
    }
}
