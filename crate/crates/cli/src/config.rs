//! JSON run configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use shellspec_core::dirac::{Coupling, CouplingClass, PhysParams};
use shellspec_core::spectral::{NonrelBranch, NonrelOptions, RefineOptions, ScanOptions};
use shellspec_core::surface::{load_triangle_mesh, sphere_grid, spheroid_grid, SurfaceQuadrature};

use crate::error::CliError;

const MAX_POLAR: usize = 256;
const MAX_AZIMUTHAL: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Physics {
    #[serde(default = "one")]
    pub m: f64,
    #[serde(default = "one")]
    pub c: f64,
}

impl Default for Physics {
    fn default() -> Self {
        Self { m: 1.0, c: 1.0 }
    }
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingSpec {
    #[serde(default)]
    pub eta: f64,
    #[serde(default)]
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SurfaceSpec {
    Sphere { radius: f64, n_polar: usize, n_azimuthal: usize },
    Spheroid { a: f64, b: f64, n_polar: usize, n_azimuthal: usize },
    /// OFF triangle mesh; relative paths are taken from the config file's directory.
    Mesh { path: PathBuf },
}

impl SurfaceSpec {
    fn check_resolution(n_polar: usize, n_azimuthal: usize) -> Result<(), CliError> {
        if n_polar > MAX_POLAR || n_azimuthal > MAX_AZIMUTHAL {
            return Err(CliError::Config(format!(
                "resolution {n_polar}×{n_azimuthal} exceeds the supported {MAX_POLAR}×{MAX_AZIMUTHAL}"
            )));
        }
        Ok(())
    }

    pub fn build(&self) -> Result<SurfaceQuadrature, CliError> {
        Ok(match self {
            Self::Sphere { radius, n_polar, n_azimuthal } => {
                Self::check_resolution(*n_polar, *n_azimuthal)?;
                sphere_grid(*radius, *n_polar, *n_azimuthal)?
            }
            Self::Spheroid { a, b, n_polar, n_azimuthal } => {
                Self::check_resolution(*n_polar, *n_azimuthal)?;
                spheroid_grid(*a, *b, *n_polar, *n_azimuthal)?
            }
            Self::Mesh { path } => load_triangle_mesh(path)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonrelSpec {
    pub c_list: Vec<f64>,
    #[serde(default = "upper")]
    pub branch: NonrelBranch,
    #[serde(default)]
    pub n_samples: Option<usize>,
    #[serde(default)]
    pub margin: Option<f64>,
    #[serde(default)]
    pub tol_lambda: Option<f64>,
}

fn upper() -> NonrelBranch {
    NonrelBranch::Upper
}

impl NonrelSpec {
    pub fn options(&self) -> NonrelOptions {
        let d = NonrelOptions { branch: self.branch, ..NonrelOptions::default() };
        NonrelOptions {
            n_samples: self.n_samples.unwrap_or(d.n_samples),
            margin: self.margin.unwrap_or(d.margin),
            tol_lambda: self.tol_lambda.unwrap_or(d.tol_lambda),
            branch: self.branch,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub physics: Physics,
    #[serde(default)]
    pub coupling: CouplingSpec,
    pub surface: SurfaceSpec,
    #[serde(default)]
    pub scan: ScanOptions,
    #[serde(default)]
    pub refine: RefineOptions,
    #[serde(default)]
    pub nonrel: Option<NonrelSpec>,
    #[serde(default)]
    pub task: Option<String>,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Reads the config and makes a relative mesh path absolute against the config's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut config = Self::from_json(&text)?;
        if let SurfaceSpec::Mesh { path: mesh } = &mut config.surface {
            if mesh.is_relative() {
                if let Some(dir) = path.parent() {
                    *mesh = dir.join(&*mesh);
                }
            }
        }
        config.params()?;
        Ok(config)
    }

    pub fn params(&self) -> Result<PhysParams, CliError> {
        Ok(PhysParams::new(self.physics.m, self.physics.c)?)
    }

    pub fn coupling(&self) -> Coupling {
        Coupling::new(self.coupling.eta, self.coupling.tau, self.physics.c)
    }

    pub fn classification(&self) -> CouplingClass {
        self.coupling().class
    }
}

/// The resolved config and coupling class embedded in every output file.
#[derive(Debug, Clone, Serialize)]
pub struct Echo<'a> {
    pub config: &'a RunConfig,
    pub classification: CouplingClass,
}

impl<'a> Echo<'a> {
    pub fn new(config: &'a RunConfig) -> Self {
        Self { config, classification: config.classification() }
    }

    /// `# config: …` and `# classification: …` lines for CSV headers.
    pub fn csv_header(&self) -> String {
        let json = serde_json::to_string(self.config).unwrap_or_default();
        let class = serde_json::to_string(&self.classification).unwrap_or_default();
        format!("# config: {json}\n# classification: {}\n", class.trim_matches('"'))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_fill_in() {
        let c = RunConfig::from_json(
            r#"{"surface": {"kind": "sphere", "radius": 1.0, "n_polar": 6, "n_azimuthal": 12}}"#,
        )
        .unwrap();
        assert_eq!(c.physics, Physics::default());
        assert_eq!(c.scan, ScanOptions::default());
        assert_eq!(c.classification(), CouplingClass::Noncritical);
    }

    #[test]
    fn unknown_field_rejected() {
        let e = RunConfig::from_json(
            r#"{"surface": {"kind": "sphere", "radius": 1.0, "n_polar": 6, "n_azimuthal": 12}, "bogus": 1}"#,
        );
        assert!(matches!(e, Err(CliError::Config(_))));
    }

    #[test]
    fn oversized_grid_rejected() {
        let s = SurfaceSpec::Sphere { radius: 1.0, n_polar: 1000, n_azimuthal: 12 };
        assert!(matches!(s.build(), Err(CliError::Config(_))));
    }

    #[test]
    fn critical_classified() {
        let c = RunConfig::from_json(
            r#"{"coupling": {"eta": 2.0}, "surface": {"kind": "mesh", "path": "x.off"}}"#,
        )
        .unwrap();
        assert_eq!(c.classification(), CouplingClass::Critical);
    }
}
