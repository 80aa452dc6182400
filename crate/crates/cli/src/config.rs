//! TOML run configuration. Every tolerance has a documented default here;
//! the `--tolerance-scale` flag multiplies all of them uniformly.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::Deserialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub solution: SolutionSpec,
    #[serde(default, rename = "transform")]
    pub transforms: Vec<TransformSpec>,
    #[serde(default)]
    pub verify: VerifySpec,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SolutionSpec {
    /// Spherical vortex equilibrium in a ball.
    Bobnev {
        #[serde(default = "default_radius")]
        radius: f64,
        #[serde(default = "default_mode")]
        n: usize,
        #[serde(default = "default_b0")]
        b0: f64,
        #[serde(default = "default_p0")]
        p0: f64,
    },
    /// SOR solve of the axisymmetric flux equation with quartic
    /// manufactured Dirichlet data and the matching linear source.
    GsSolve {
        alpha: f64,
        beta: f64,
        /// [r_min, r_max], r_min > 0
        r_range: [f64; 2],
        /// [z_min, z_max]
        z_range: [f64; 2],
        nr: usize,
        nz: usize,
        #[serde(default)]
        max_iterations: Option<usize>,
        #[serde(default)]
        omega: Option<f64>,
    },
    /// Import a previously exported flux-grid CSV; profiles are affine.
    GridImport {
        path: PathBuf,
        /// I(psi) = i[0] + i[1] psi
        i: [f64; 2],
        /// P(psi) = p[0] + p[1] psi
        p: [f64; 2],
    },
}

impl Default for SolutionSpec {
    fn default() -> Self {
        SolutionSpec::Bobnev {
            radius: default_radius(),
            n: default_mode(),
            b0: default_b0(),
            p0: default_p0(),
        }
    }
}

fn default_radius() -> f64 {
    1.0
}
fn default_mode() -> usize {
    3
}
fn default_b0() -> f64 {
    100.0
}
fn default_p0() -> f64 {
    4500.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TransformSpec {
    /// B' = a4 B, P' = a4^2 P.
    Scaling { a4: f64 },
    /// P' = P + delta.
    PressureShift { delta: f64 },
    /// Rotation (Euler angles about z, x, z) then translation.
    Isometry {
        #[serde(default)]
        translation: [f64; 3],
        #[serde(default)]
        phi: f64,
        #[serde(default)]
        theta: f64,
        #[serde(default)]
        psi: f64,
    },
    /// Isotropic -> anisotropic with M(label) = 1 + (label/psi1) sin(label/psi2).
    MhdToCgl {
        psi1: f64,
        psi2: f64,
        #[serde(default)]
        p1: f64,
    },
    /// Anisotropic family map with a configurable multiplier.
    Infinite { m: MultiplierSpec },
    /// Back to the equivalent isotropic state (requires tau < 1).
    CglToMhd,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "form", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MultiplierSpec {
    Constant { value: f64 },
    Affine { a: f64, b: f64 },
    SineModulated { psi1: f64, psi2: f64 },
    /// exp(amp * sin(label/psi2)) — always positive.
    ExpSine { amp: f64, psi2: f64 },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySpec {
    /// FD step for residual sweeps.
    #[serde(default = "default_h")]
    pub residual_h: f64,
    /// Gate on the max equilibrium residual at `residual_h`.
    #[serde(default = "default_residual_tolerance")]
    pub residual_tolerance: f64,
    /// Target number of interior sample points.
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Sphere radii for conservation-flux checks (solution-domain units).
    #[serde(default = "default_flux_radii")]
    pub flux_radii: Vec<f64>,
    /// Checks to run; unknown names are a config error.
    #[serde(default = "default_checks")]
    pub checks: Vec<String>,
    /// Off-solution identity trials (check "identity").
    #[serde(default = "default_identity_trials")]
    pub identity_trials: usize,
    /// Gate for the cylindrical-law residuals (check "laws"). Grid-backed
    /// states carry O(dr) interpolation error (the spline is only C^1), so
    /// the default is loose; tighten it for finer grids.
    #[serde(default = "default_laws_tolerance")]
    pub laws_tolerance: f64,
}

impl Default for VerifySpec {
    fn default() -> Self {
        toml::from_str("").expect("empty verify spec")
    }
}

fn default_h() -> f64 {
    1e-4
}
fn default_residual_tolerance() -> f64 {
    1e-5
}
fn default_samples() -> usize {
    1000
}
fn default_flux_radii() -> Vec<f64> {
    vec![0.2, 0.5, 0.8]
}
fn default_checks() -> Vec<String> {
    vec![
        "solenoidal".into(),
        "residual".into(),
        "label".into(),
        "flux".into(),
        "identity".into(),
    ]
}
fn default_identity_trials() -> usize {
    25
}
fn default_laws_tolerance() -> f64 {
    0.05
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    /// Any of "vtk", "csv", "slice".
    #[serde(default = "default_formats")]
    pub formats: Vec<String>,
    /// Nodes per axis of the export lattice.
    #[serde(default = "default_export_n")]
    pub resolution: usize,
}

impl Default for OutputSpec {
    fn default() -> Self {
        toml::from_str("").expect("empty output spec")
    }
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_formats() -> Vec<String> {
    vec!["vtk".into(), "csv".into(), "slice".into()]
}
fn default_export_n() -> usize {
    33
}

const KNOWN_CHECKS: &[&str] = &[
    "solenoidal",
    "residual",
    "label",
    "flux",
    "identity",
    "laws",
];

impl RunConfig {
    /// Load and validate; `None` means the built-in default configuration.
    pub fn load(path: Option<&Path>) -> anyhow::Result<(RunConfig, String)> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)
                .with_context(|| format!("reading config {}", p.display()))?,
            None => String::new(),
        };
        let config: RunConfig =
            toml::from_str(&text).with_context(|| "parsing run configuration")?;
        config.validate()?;
        let hash = format!("{:x}", Sha256::digest(text.as_bytes()));
        Ok((config, hash))
    }

    fn validate(&self) -> anyhow::Result<()> {
        match &self.solution {
            SolutionSpec::Bobnev { radius, n, b0, .. } => {
                if !(*radius > 0.0) || *n == 0 || !(*b0 != 0.0) {
                    bail!("bobnev solution needs radius > 0, n >= 1, b0 != 0");
                }
            }
            SolutionSpec::GsSolve {
                r_range,
                z_range,
                nr,
                nz,
                omega,
                ..
            } => {
                if !(r_range[0] > 0.0 && r_range[1] > r_range[0]) {
                    bail!("gs-solve r_range must satisfy 0 < r_min < r_max");
                }
                if !(z_range[1] > z_range[0]) {
                    bail!("gs-solve z_range must be increasing");
                }
                if *nr < 3 || *nz < 3 {
                    bail!("gs-solve grid needs at least 3 nodes per direction");
                }
                if let Some(w) = omega {
                    if !(*w > 0.0 && *w < 2.0) {
                        bail!("gs-solve omega must lie in (0, 2)");
                    }
                }
            }
            SolutionSpec::GridImport { path, .. } => {
                if !path.exists() {
                    bail!("grid-import file {} does not exist", path.display());
                }
            }
        }
        for name in &self.verify.checks {
            if !KNOWN_CHECKS.contains(&name.as_str()) {
                bail!(
                    "unknown check {name:?}; known checks: {}",
                    KNOWN_CHECKS.join(", ")
                );
            }
        }
        for f in &self.output.formats {
            if !["vtk", "csv", "slice"].contains(&f.as_str()) {
                bail!("unknown export format {f:?}; known: vtk, csv, slice");
            }
        }
        if !(self.verify.residual_h > 0.0) || !(self.verify.residual_tolerance > 0.0) {
            bail!("verify.residual_h and verify.residual_tolerance must be positive");
        }
        if self.output.resolution < 2 {
            bail!("output.resolution must be at least 2");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_default_bobnev() {
        let c: RunConfig = toml::from_str("").unwrap();
        c.validate().unwrap();
        assert!(matches!(c.solution, SolutionSpec::Bobnev { n: 3, .. }));
        assert_eq!(c.verify.samples, 1000);
        assert!(c.transforms.is_empty());
    }

    #[test]
    fn full_config_parses() {
        let text = r#"
            [solution]
            kind = "bobnev"
            radius = 2.0
            n = 1

            [[transform]]
            kind = "mhd-to-cgl"
            psi1 = 200.0
            psi2 = 60.0

            [[transform]]
            kind = "infinite"
            m = { form = "exp-sine", amp = 0.1, psi2 = 60.0 }

            [verify]
            checks = ["residual", "flux"]
            flux_radii = [0.3, 0.9]

            [output]
            dir = "result"
            formats = ["csv"]
        "#;
        let c: RunConfig = toml::from_str(text).unwrap();
        c.validate().unwrap();
        assert_eq!(c.transforms.len(), 2);
        assert_eq!(c.verify.flux_radii, vec![0.3, 0.9]);
    }

    #[test]
    fn bad_configs_are_rejected() {
        let c: RunConfig = toml::from_str("[verify]\nchecks = [\"nonsense\"]").unwrap();
        assert!(c.validate().is_err());
        assert!(toml::from_str::<RunConfig>("[solution]\nkind = \"unknown\"").is_err());
        let c: RunConfig =
            toml::from_str("[solution]\nkind = \"bobnev\"\nradius = -1.0").unwrap();
        assert!(c.validate().is_err());
    }
}
