//! TOML run configuration: strict-schema parsing, full validation with
//! every violation reported at once, and construction of the physics
//! contexts the subcommands run on.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::electron::ElectronParams;
use crate::materials::{ChiralOscillator, Environment, MaterialModel, Oscillator};
use crate::quadrature::NumericsConfig;
use crate::response::ResponseContext;
use crate::slab::Geometry;
use crate::units::PhysicalConstants;
use crate::{Error, Result};

/// A scalar or a sweep list in the config file.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(untagged)]
enum OneOrMany {
    One(f64),
    Many(Vec<f64>),
}

impl OneOrMany {
    fn to_vec(&self) -> Vec<f64> {
        match self {
            OneOrMany::One(x) => vec![*x],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConstants {
    hbar_c: Option<f64>,
    electron_rest_energy: Option<f64>,
    fine_structure: Option<f64>,
    speed_of_light: Option<f64>,
}

impl Default for RawConstants {
    fn default() -> Self {
        Self {
            hbar_c: None,
            electron_rest_energy: None,
            fine_structure: None,
            speed_of_light: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOscillator {
    resonance_energy: f64,
    strength: f64,
    damping: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawChiralOscillator {
    resonance_energy: f64,
    amplitude: f64,
    damping: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMaterial {
    eps_background: Option<f64>,
    oscillators: Option<Vec<RawOscillator>>,
    chiral_oscillators: Option<Vec<RawChiralOscillator>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEnvironment {
    eps1: Option<f64>,
    eps2: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGeometry {
    /// Film thickness in nm.
    d: Option<f64>,
    /// Effective path length(s) L in nm; a list declares a sweep.
    l: Option<OneOrMany>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawElectron {
    /// Speed(s) in units of c; a list declares a sweep.
    beta: Option<OneOrMany>,
    sigma_y: Option<f64>,
    sigma_z: Option<f64>,
    b: Option<f64>,
    /// Nominal beam energy in eV; defaults to the kinetic energy of β.
    e_i: Option<f64>,
    /// Instrumental Gaussian width of the energy spectrum in eV.
    sigma_e: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNumerics {
    rel_tol: Option<f64>,
    abs_tol: Option<f64>,
    e_max: Option<f64>,
    ky_cutoff_factor: Option<f64>,
    max_subdivisions: Option<usize>,
    pv_window: Option<f64>,
    z_floor: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    directory: Option<PathBuf>,
    format: Option<String>,
    precision: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    constants: Option<RawConstants>,
    material: Option<RawMaterial>,
    environment: Option<RawEnvironment>,
    geometry: Option<RawGeometry>,
    electron: Option<RawElectron>,
    numerics: Option<RawNumerics>,
    output: Option<RawOutput>,
}

/// Output sink parameters.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct OutputConfig {
    pub directory: PathBuf,
    pub format: OutputFormat,
    /// Significant digits of every numeric CSV field.
    pub precision: usize,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("out"),
            format: OutputFormat::Csv,
            precision: 12,
        }
    }
}

/// Fully validated run configuration.
#[derive(Debug, Clone, Serialize)]
pub struct SimulationConfig {
    pub constants: PhysicalConstants,
    pub material: MaterialModel,
    pub environment: Environment,
    /// Film thickness in nm.
    pub d: f64,
    /// Effective path lengths in nm (sweep axis).
    pub l_list: Vec<f64>,
    /// Electron speeds in units of c (sweep axis).
    pub beta_list: Vec<f64>,
    pub sigma_y: f64,
    pub sigma_z: f64,
    pub impact_b: f64,
    /// Fixed beam energy override in eV; None means kinetic energy of β.
    pub e_i: Option<f64>,
    /// Instrumental spectrum broadening in eV.
    pub sigma_e: f64,
    pub numerics: NumericsConfig,
    pub output: OutputConfig,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            constants: PhysicalConstants::default(),
            material: MaterialModel::default(),
            environment: Environment::default(),
            d: 50.0,
            l_list: vec![1000.0],
            beta_list: vec![0.5],
            sigma_y: 3.0,
            sigma_z: 2.0,
            impact_b: 9.0,
            e_i: None,
            sigma_e: 0.05,
            numerics: NumericsConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

impl SimulationConfig {
    /// Geometry for one path length of the sweep.
    pub fn geometry(&self, l_eff: f64) -> Geometry {
        Geometry {
            d: self.d,
            l_eff,
            env: self.environment,
        }
    }

    /// Beam parameters for one speed of the sweep.
    pub fn electron(&self, beta: f64) -> ElectronParams {
        ElectronParams {
            beta,
            sigma_y: self.sigma_y,
            sigma_z: self.sigma_z,
            impact_b: self.impact_b,
            e_i: self
                .e_i
                .unwrap_or_else(|| ElectronParams::kinetic_energy(&self.constants, beta)),
        }
    }

    /// Response context for one (β, L) of the sweep.
    pub fn response_context(&self, beta: f64, l_eff: f64) -> Result<ResponseContext> {
        ResponseContext::new(
            self.constants,
            self.material.clone(),
            self.geometry(l_eff),
            beta,
            self.numerics,
        )
    }

    /// SHA-256 over the canonical serialization; identifies the run inputs.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let canonical = serde_json::to_string(self).expect("config serializes");
        let mut h = Sha256::new();
        h.update(canonical.as_bytes());
        format!("{:x}", h.finalize())
    }

    /// SHA-256 identifying only the inputs the spectral kernel table
    /// depends on (material, stack, constants, numerics) — path length and
    /// beam parameters deliberately excluded.
    pub fn kernel_hash(&self, beta: f64) -> String {
        use sha2::{Digest, Sha256};
        let key = serde_json::to_string(&(
            &self.constants,
            &self.material,
            &self.environment,
            self.d,
            &self.numerics,
            beta,
        ))
        .expect("kernel key serializes");
        let mut h = Sha256::new();
        h.update(key.as_bytes());
        format!("{:x}", h.finalize())
    }
}

fn finalize(raw: RawConfig) -> Result<SimulationConfig> {
    let mut violations: Vec<String> = Vec::new();
    let defaults = SimulationConfig::default();

    let mut constants = defaults.constants;
    if let Some(c) = raw.constants {
        if let Some(v) = c.hbar_c {
            constants.hbar_c = v;
        }
        if let Some(v) = c.electron_rest_energy {
            constants.electron_rest_energy = v;
        }
        if let Some(v) = c.fine_structure {
            constants.fine_structure = v;
        }
        if let Some(v) = c.speed_of_light {
            constants.speed_of_light = v;
        }
    }

    let mut material = defaults.material.clone();
    if let Some(m) = raw.material {
        if let Some(v) = m.eps_background {
            material.eps_background = v;
        }
        if let Some(os) = m.oscillators {
            material.oscillators = os
                .into_iter()
                .map(|o| Oscillator {
                    resonance_energy: o.resonance_energy,
                    strength: o.strength,
                    damping: o.damping,
                })
                .collect();
        }
        if let Some(os) = m.chiral_oscillators {
            material.chiral_oscillators = os
                .into_iter()
                .map(|o| ChiralOscillator {
                    resonance_energy: o.resonance_energy,
                    amplitude: o.amplitude,
                    damping: o.damping,
                })
                .collect();
        }
    }

    let mut environment = defaults.environment;
    if let Some(e) = raw.environment {
        if let Some(v) = e.eps1 {
            environment.eps1 = v;
        }
        if let Some(v) = e.eps2 {
            environment.eps2 = v;
        }
    }

    let geometry = raw.geometry.unwrap_or(RawGeometry { d: None, l: None });
    let d = geometry.d.unwrap_or(defaults.d);
    let l_list = geometry
        .l
        .map(|l| l.to_vec())
        .unwrap_or_else(|| defaults.l_list.clone());
    if l_list.is_empty() {
        violations.push("geometry.l must not be an empty list".into());
    }
    for &l in &l_list {
        if l <= 0.0 {
            violations.push(format!("geometry.l entries must be > 0 nm, got {l}"));
        }
    }

    let electron = raw.electron.unwrap_or(RawElectron {
        beta: None,
        sigma_y: None,
        sigma_z: None,
        b: None,
        e_i: None,
        sigma_e: None,
    });
    let beta_list = match &electron.beta {
        Some(b) => b.to_vec(),
        None => {
            violations.push("electron.beta is required".into());
            Vec::new()
        }
    };
    for &b in &beta_list {
        if !(0.0 < b && b < 1.0) {
            violations.push(format!("electron.beta must lie in (0,1), got {b}"));
        }
    }
    let sigma_y = electron.sigma_y.unwrap_or(defaults.sigma_y);
    let sigma_z = electron.sigma_z.unwrap_or(defaults.sigma_z);
    let impact_b = electron.b.unwrap_or(defaults.impact_b);
    let sigma_e = electron.sigma_e.unwrap_or(defaults.sigma_e);
    if sigma_e <= 0.0 {
        violations.push(format!("electron.sigma_e must be > 0 eV, got {sigma_e}"));
    }

    let mut numerics = defaults.numerics;
    // The spectral cutoff tracks the material unless pinned explicitly.
    numerics.e_max = 5.0 * material.max_resonance_energy().max(1e-30);
    if let Some(n) = raw.numerics {
        if let Some(v) = n.rel_tol {
            numerics.rel_tol = v;
        }
        if let Some(v) = n.abs_tol {
            numerics.abs_tol = v;
        }
        if let Some(v) = n.e_max {
            numerics.e_max = v;
        }
        if let Some(v) = n.ky_cutoff_factor {
            numerics.ky_cutoff_factor = v;
        }
        if let Some(v) = n.max_subdivisions {
            numerics.max_subdivisions = v;
        }
        if let Some(v) = n.pv_window {
            numerics.pv_window = v;
        }
        if let Some(v) = n.z_floor {
            numerics.z_floor = v;
        }
    }

    let mut output = defaults.output.clone();
    if let Some(o) = raw.output {
        if let Some(v) = o.directory {
            output.directory = v;
        }
        if let Some(v) = o.format {
            output.format = match v.as_str() {
                "csv" => OutputFormat::Csv,
                "json" => OutputFormat::Json,
                other => {
                    violations.push(format!(
                        "output.format must be \"csv\" or \"json\", got \"{other}\""
                    ));
                    OutputFormat::Csv
                }
            };
        }
        if let Some(v) = o.precision {
            output.precision = v;
        }
    }
    if !(3..=17).contains(&output.precision) {
        violations.push(format!(
            "output.precision = {} must lie in 3..=17 significant digits",
            output.precision
        ));
    }

    // Re-validate every referenced physical type and collect all findings.
    violations.extend(constants.validate());
    violations.extend(material.validate());
    violations.extend(environment.validate());
    violations.extend(numerics.validate());
    if d < 0.0 {
        violations.push(format!("geometry.d = {d} must be >= 0"));
    }
    for &beta in &beta_list {
        if 0.0 < beta && beta < 1.0 {
            let el = ElectronParams {
                beta,
                sigma_y,
                sigma_z,
                impact_b,
                e_i: electron
                    .e_i
                    .unwrap_or_else(|| ElectronParams::kinetic_energy(&constants, beta)),
            };
            violations.extend(el.validate());
            if beta * beta * environment.eps1 >= 1.0 {
                violations.push(format!(
                    "electron.beta = {beta} reaches the Cherenkov threshold of \
                     the host medium (eps1 = {})",
                    environment.eps1
                ));
            }
        }
    }

    if violations.is_empty() {
        Ok(SimulationConfig {
            constants,
            material,
            environment,
            d,
            l_list,
            beta_list,
            sigma_y,
            sigma_z,
            impact_b,
            e_i: electron.e_i,
            sigma_e,
            numerics,
            output,
        })
    } else {
        Err(Error::ConfigValidation(violations))
    }
}

/// Parse and fully validate a TOML configuration string.
pub fn parse_config_str(text: &str) -> Result<SimulationConfig> {
    let raw: RawConfig = toml::from_str(text)
        .map_err(|e| Error::ConfigParse(e.to_string()))?;
    finalize(raw)
}

/// Parse and fully validate a TOML configuration file.
pub fn parse_config(path: &Path) -> Result<SimulationConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::Io(format!("cannot read config {}: {e}", path.display()))
    })?;
    parse_config_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_fills_documented_defaults() {
        let cfg = parse_config_str("[electron]\nbeta = 0.5\n").unwrap();
        assert_eq!(cfg.beta_list, vec![0.5]);
        assert_eq!(cfg.d, 50.0);
        assert_eq!(cfg.l_list, vec![1000.0]);
        assert_eq!(cfg.sigma_y, 3.0);
        assert_eq!(cfg.sigma_z, 2.0);
        assert_eq!(cfg.impact_b, 9.0);
        assert_eq!(cfg.environment.eps2, 1.48);
        assert_eq!(cfg.material.oscillators.len(), 1);
        // Cutoff derived from the material: 5 × 3.54 eV.
        assert!((cfg.numerics.e_max - 17.7).abs() < 1e-12);
        assert_eq!(cfg.output.format, OutputFormat::Csv);
    }

    #[test]
    fn shipped_default_file_golden_parse() {
        let text = include_str!("../../../config/default.toml");
        let cfg = parse_config_str(text).unwrap();
        assert_eq!(cfg.beta_list, vec![0.5]);
        assert_eq!(cfg.l_list, vec![1000.0]);
        assert_eq!(cfg.d, 50.0);
        assert_eq!(cfg.sigma_y, 3.0);
        assert_eq!(cfg.sigma_z, 2.0);
        assert_eq!(cfg.impact_b, 9.0);
        assert_eq!(cfg.sigma_e, 0.05);
        assert!((cfg.numerics.e_max - 17.7).abs() < 1e-12);
        assert_eq!(cfg.material.chiral_oscillators[0].amplitude, 1.2e-4);
        assert_eq!(cfg.output.precision, 12);
    }

    #[test]
    fn missing_beta_is_named() {
        let err = parse_config_str("[geometry]\nd = 50.0\n").unwrap_err();
        match err {
            Error::ConfigValidation(v) => {
                assert!(v.iter().any(|m| m.contains("electron.beta")), "{v:?}");
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn out_of_range_beta_is_rejected() {
        let err = parse_config_str("[electron]\nbeta = 1.2\n").unwrap_err();
        match err {
            Error::ConfigValidation(v) => {
                assert!(v.iter().any(|m| m.contains("beta")), "{v:?}");
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn all_violations_reported_at_once() {
        let err = parse_config_str(
            "[electron]\nbeta = 1.2\nsigma_e = -1.0\n[geometry]\nd = -5.0\n[output]\nprecision = 99\n",
        )
        .unwrap_err();
        match err {
            Error::ConfigValidation(v) => {
                assert!(v.len() >= 4, "expected every violation listed: {v:?}");
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = parse_config_str("[electron]\nbeta = 0.5\nspeed = 3.0\n").unwrap_err();
        assert!(matches!(err, Error::ConfigParse(_)));
    }

    #[test]
    fn sweep_lists_parse() {
        let cfg = parse_config_str(
            "[electron]\nbeta = [0.3, 0.5, 0.7]\n[geometry]\nl = [1000.0, 2000.0, 5000.0, 10000.0]\n",
        )
        .unwrap();
        assert_eq!(cfg.beta_list.len(), 3);
        assert_eq!(cfg.l_list.len(), 4);
    }

    #[test]
    fn hash_is_stable_and_input_sensitive() {
        let a = parse_config_str("[electron]\nbeta = 0.5\n").unwrap();
        let b = parse_config_str("[electron]\nbeta = 0.5\n").unwrap();
        assert_eq!(a.hash(), b.hash());
        let c = parse_config_str("[electron]\nbeta = 0.4\n").unwrap();
        assert_ne!(a.hash(), c.hash());
        // Kernel hash ignores the path length but tracks beta.
        let mut d = a.clone();
        d.l_list = vec![5000.0];
        assert_eq!(a.kernel_hash(0.5), d.kernel_hash(0.5));
        assert_ne!(a.kernel_hash(0.5), a.kernel_hash(0.4));
    }
}
