//! Working units and the branch-fixed complex square root.
//!
//! Everything downstream works in (eV, nm): a photon of energy $E$ (eV) has
//! vacuum wavenumber $k_\omega = E/\hbar c$ in nm⁻¹, and all longitudinal
//! wavenumbers are obtained from [`sqrt_upper`], whose branch is fixed so that
//! evanescent components decay away from the film surface.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Physical constants in the (eV, nm) convention.
///
/// `speed_of_light` is carried for documentation only; every formula is
/// expressed through `hbar_c` and the velocity ratio β.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PhysicalConstants {
    /// ħc in eV·nm.
    pub hbar_c: f64,
    /// Electron rest energy m c² in eV.
    pub electron_rest_energy: f64,
    /// Fine-structure constant α.
    pub fine_structure: f64,
    /// c in nm/s (documentation only).
    pub speed_of_light: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self {
            hbar_c: 197.326_980_4,
            electron_rest_energy: 510_998.95,
            fine_structure: 7.297_352_569_3e-3,
            speed_of_light: 2.997_924_58e17,
        }
    }
}

impl PhysicalConstants {
    /// Check the documented invariants, returning human-readable violations.
    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.hbar_c > 0.0
            && self.electron_rest_energy > 0.0
            && self.fine_structure > 0.0
            && self.speed_of_light > 0.0)
        {
            v.push("constants: all fields must be strictly positive".to_string());
        }
        let alpha_ref = 1.0 / 137.0;
        if (self.fine_structure - alpha_ref).abs() > 0.01 * alpha_ref {
            v.push(format!(
                "constants.fine_structure = {} is more than 1% away from 1/137",
                self.fine_structure
            ));
        }
        v
    }

    /// Vacuum wavenumber k_ω = E/ħc in nm⁻¹.
    pub fn k_omega(&self, energy_ev: f64) -> f64 {
        energy_ev / self.hbar_c
    }

    /// Lorentz factor γ_L = 1/√(1−β²).
    pub fn lorentz_factor(beta: f64) -> f64 {
        assert!((0.0..1.0).contains(&beta), "beta must lie in [0,1)");
        1.0 / (1.0 - beta * beta).sqrt()
    }

    /// Reference momentum P₀ = mV/√(1−β²), returned as P₀·c in eV.
    pub fn reference_momentum(&self, beta: f64) -> f64 {
        Self::lorentz_factor(beta) * beta * self.electron_rest_energy
    }

    /// Reference energy E₀ = V·P₀ in eV.
    pub fn reference_energy(&self, beta: f64) -> f64 {
        beta * self.reference_momentum(beta)
    }
}

/// Complex square root with the branch fixed to the closed upper half plane:
/// `w² = z`, `Im w ≥ 0`, and on the real axis (`Im w = 0`) also `Re w ≥ 0`.
///
/// This is the branch for which `exp(i·w·|z|)` decays for evanescent
/// longitudinal wavenumbers, i.e. outgoing/decaying waves in a z-stratified
/// geometry. It coincides with the principal square root everywhere except on
/// values approached from below the negative real axis.
pub fn sqrt_upper(z: Complex64) -> Complex64 {
    debug_assert!(z.re.is_finite() && z.im.is_finite(), "sqrt_upper: non-finite input");
    let w = z.sqrt(); // principal branch: Re w ≥ 0
    if w.im < 0.0 || (w.im == 0.0 && w.re < 0.0) {
        -w
    } else {
        w
    }
}
