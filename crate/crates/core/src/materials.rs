//! Dispersive material models: Lorentz permittivity and Condon-form Pasteur
//! parameter for the film, constant permittivities for vacuum and substrate.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A single Lorentz oscillator of the permittivity.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Oscillator {
    /// Resonance energy E₀ in eV.
    pub resonance_energy: f64,
    /// Oscillator strength f in eV².
    pub strength: f64,
    /// Damping Γ_d in eV.
    pub damping: f64,
}

/// A single Condon oscillator of the Pasteur parameter κ(E).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ChiralOscillator {
    /// Resonance energy E₀ in eV.
    pub resonance_energy: f64,
    /// Dimensionless amplitude κ_A; its sign selects the enantiomer.
    pub amplitude: f64,
    /// Damping Γ_κ in eV.
    pub damping: f64,
}

/// Dispersive model of the chiral film: ε(E) = ε_∞ + Σ f/(E₀²−E²−iΓ_d E) and
/// the Condon form κ(E) = Σ κ_A E₀ E/(E₀²−E²−iΓ_κ E). μ is fixed to 1.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MaterialModel {
    pub eps_background: f64,
    pub oscillators: Vec<Oscillator>,
    pub chiral_oscillators: Vec<ChiralOscillator>,
}

/// Constant permittivities of the half spaces above (vacuum) and below
/// (substrate) the film.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Environment {
    pub eps1: f64,
    pub eps2: f64,
}

impl Default for Environment {
    fn default() -> Self {
        Self { eps1: 1.0, eps2: 1.48 }
    }
}

impl Environment {
    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.eps1 < 1.0 {
            v.push(format!("environment.eps1 = {} must be >= 1", self.eps1));
        }
        if self.eps2 < 1.0 {
            v.push(format!("environment.eps2 = {} must be >= 1", self.eps2));
        }
        v
    }
}

impl Default for MaterialModel {
    /// Default film: one permittivity oscillator and one Condon oscillator,
    /// both resonant at 3.54 eV, with strengths chosen so that ε stays within
    /// [2, 4] and |κ| peaks near 1e−3.
    fn default() -> Self {
        Self {
            eps_background: 3.0,
            oscillators: vec![Oscillator {
                resonance_energy: 3.54,
                strength: 2.5,
                damping: 0.4,
            }],
            chiral_oscillators: vec![ChiralOscillator {
                resonance_energy: 3.54,
                amplitude: 1.2e-4,
                damping: 0.4,
            }],
        }
    }
}

impl MaterialModel {
    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        for (i, o) in self.oscillators.iter().enumerate() {
            if o.resonance_energy <= 0.0 {
                v.push(format!("material.oscillators[{i}].resonance_energy must be > 0"));
            }
            if o.damping <= 0.0 {
                v.push(format!("material.oscillators[{i}].damping must be > 0"));
            }
            if o.strength < 0.0 {
                v.push(format!("material.oscillators[{i}].strength must be >= 0"));
            }
        }
        for (i, o) in self.chiral_oscillators.iter().enumerate() {
            if o.resonance_energy <= 0.0 {
                v.push(format!(
                    "material.chiral_oscillators[{i}].resonance_energy must be > 0"
                ));
            }
            if o.damping <= 0.0 {
                v.push(format!("material.chiral_oscillators[{i}].damping must be > 0"));
            }
        }
        v
    }

    /// Largest resonance energy across both oscillator families (eV); used to
    /// pick the default frequency-integration cutoff.
    pub fn max_resonance_energy(&self) -> f64 {
        self.oscillators
            .iter()
            .map(|o| o.resonance_energy)
            .chain(self.chiral_oscillators.iter().map(|o| o.resonance_energy))
            .fold(0.0, f64::max)
    }

    /// Enantiomer of this material: every chiral amplitude negated.
    pub fn enantiomer(&self) -> Self {
        let mut m = self.clone();
        for o in &mut m.chiral_oscillators {
            o.amplitude = -o.amplitude;
        }
        m
    }

    /// True if every chiral amplitude vanishes.
    pub fn is_achiral(&self) -> bool {
        self.chiral_oscillators.iter().all(|o| o.amplitude == 0.0)
    }

    /// Film permittivity ε(E) at photon energy E > 0 (eV).
    pub fn permittivity(&self, energy_ev: f64) -> Result<Complex64> {
        if energy_ev <= 0.0 {
            return Err(Error::Domain(format!(
                "permittivity: photon energy must be positive, got {energy_ev}"
            )));
        }
        let mut eps = Complex64::new(self.eps_background, 0.0);
        for o in &self.oscillators {
            let denom = Complex64::new(
                o.resonance_energy * o.resonance_energy - energy_ev * energy_ev,
                -o.damping * energy_ev,
            );
            eps += o.strength / denom;
        }
        Ok(eps)
    }

    /// Pasteur parameter κ(E) at photon energy E > 0 (eV), Condon form.
    pub fn pasteur(&self, energy_ev: f64) -> Result<Complex64> {
        if energy_ev <= 0.0 {
            return Err(Error::Domain(format!(
                "pasteur: photon energy must be positive, got {energy_ev}"
            )));
        }
        let mut kappa = Complex64::new(0.0, 0.0);
        for o in &self.chiral_oscillators {
            let denom = Complex64::new(
                o.resonance_energy * o.resonance_energy - energy_ev * energy_ev,
                -o.damping * energy_ev,
            );
            kappa += o.amplitude * o.resonance_energy * energy_ev / denom;
        }
        Ok(kappa)
    }
}

/// Result of scanning Im ε over an energy grid.
#[derive(Debug, Clone, Serialize)]
pub struct PassivityReport {
    pub min_im_eps: f64,
    pub min_im_eps_energy: f64,
    /// Energies at which Im ε ≤ 0 (passivity violation).
    pub violations: Vec<f64>,
    /// Energies at which 0 < Im ε < 1e-12 (borderline lossless).
    pub borderline: Vec<f64>,
}

/// Scan Im ε(E) over a strictly increasing positive grid and report
/// violations of passivity (Im ε ≤ 0) and borderline-lossless points.
pub fn passivity_report(model: &MaterialModel, e_grid: &[f64]) -> Result<PassivityReport> {
    if e_grid.windows(2).any(|w| w[0] >= w[1]) || e_grid.first().is_some_and(|&e| e <= 0.0) {
        return Err(Error::Domain(
            "passivity_report: grid must be strictly increasing and positive".into(),
        ));
    }
    let mut report = PassivityReport {
        min_im_eps: f64::INFINITY,
        min_im_eps_energy: f64::NAN,
        violations: Vec::new(),
        borderline: Vec::new(),
    };
    for &e in e_grid {
        let im = model.permittivity(e)?.im;
        if im < report.min_im_eps {
            report.min_im_eps = im;
            report.min_im_eps_energy = e;
        }
        if im <= 0.0 {
            report.violations.push(e);
        } else if im < 1e-12 {
            report.borderline.push(e);
        }
    }
    Ok(report)
}
