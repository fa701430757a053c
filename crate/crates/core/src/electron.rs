//! Incident electron state and the decoherence factor γ.
//!
//! The beam is an elliptical Gaussian in the transverse (Y, Z) plane
//! travelling along x at speed βc, centred a distance b above the film
//! surface (Z₀ = −b, film at Z = 0). Everything the film imprints on the
//! electron enters through γ(R, R′): a mirror-symmetric damping from Δ_S,
//! a handedness-carrying phase from Δ_A, and an elastic phase difference
//! Φ(Z) − Φ(Z′) that cancels from every |γ|-based observable.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::response::{delta_point, phase_phi, KernelSource, ResponseContext};
use crate::{Error, Result};

/// Incident-beam parameters. Lengths in nm, energies in eV.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ElectronParams {
    /// Speed in units of c.
    pub beta: f64,
    /// Gaussian half-width of the profile along Y.
    pub sigma_y: f64,
    /// Gaussian half-width of the profile along Z.
    pub sigma_z: f64,
    /// Impact parameter: distance of the beam centre above the film.
    pub impact_b: f64,
    /// Nominal beam energy (spectrum reference point).
    pub e_i: f64,
}

impl ElectronParams {
    /// Beam centre height Z₀ = −b.
    pub fn z_center(&self) -> f64 {
        -self.impact_b
    }

    /// Relativistic kinetic energy matching β, in eV.
    pub fn kinetic_energy(constants: &crate::units::PhysicalConstants, beta: f64) -> f64 {
        (crate::units::PhysicalConstants::lorentz_factor(beta) - 1.0)
            * constants.electron_rest_energy
    }

    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(0.0 < self.beta && self.beta < 1.0) {
            v.push(format!("electron.beta must lie in (0,1), got {}", self.beta));
        }
        if self.sigma_y <= 0.0 || self.sigma_z <= 0.0 {
            v.push("electron.sigma_y and sigma_z must be > 0".into());
        }
        if self.impact_b <= 0.0 {
            v.push("electron.impact_b must be > 0 (beam centre in vacuum)".into());
        }
        if self.e_i <= 0.0 {
            v.push("electron.e_i must be > 0".into());
        }
        v
    }

    /// The aloof-beam condition keeps essentially all probability off the
    /// film; its violation is reported, not rejected.
    pub fn aloof_warning(&self) -> Option<String> {
        if 3.0 * self.sigma_z >= self.impact_b {
            Some(format!(
                "aloof condition violated: 3·sigma_z = {} nm reaches past the \
                 impact parameter b = {} nm; a non-negligible part of the beam \
                 touches the film and the evaluation floor",
                3.0 * self.sigma_z,
                self.impact_b
            ))
        } else {
            None
        }
    }
}

/// Transverse profile φ_i(Y, Z), L²-normalized: ∫∫ φ_i² dY dZ = 1.
pub fn phi_i(y: f64, z: f64, params: &ElectronParams) -> f64 {
    let z0 = params.z_center();
    (2.0 / (std::f64::consts::PI * params.sigma_y * params.sigma_z)).sqrt()
        * (-(y * y / (params.sigma_y * params.sigma_y)
            + (z - z0) * (z - z0) / (params.sigma_z * params.sigma_z)))
            .exp()
}

/// Autoconvolution φ̃(ỹ, z̃) = ∫dY φ_i(Y, z̃/2)·φ_i(Y−ỹ, z̃/2), in closed
/// Gaussian form. Even in ỹ; ∫φ̃(0, z̃)dz̃ = 2.
pub fn autoconvolution(y_tilde: f64, z_tilde: f64, params: &ElectronParams) -> f64 {
    let z0 = params.z_center();
    (2.0 / std::f64::consts::PI).sqrt() / params.sigma_z
        * (-y_tilde * y_tilde / (2.0 * params.sigma_y * params.sigma_y)).exp()
        * (-(z_tilde - 2.0 * z0) * (z_tilde - 2.0 * z0)
            / (2.0 * params.sigma_z * params.sigma_z))
            .exp()
}

/// Decoherence factor at one pair of electron positions.
#[derive(Debug, Clone, Copy)]
pub struct GammaValue {
    pub value: Complex64,
    /// ln|γ| = Δ_S(x̃,ỹ,z̃) − ½[Δ_S(0,0,2Z) + Δ_S(0,0,2Z′)] ≤ 0.
    pub modulus_log: f64,
    /// arg γ = Φ(Z) − Φ(Z′) + Δ_A(x̃,ỹ,z̃).
    pub phase: f64,
}

/// γ(R, R′) for R = (X, Y, Z), R′ = (X′, Y′, Z′), both in vacuum. The
/// elastic phase Φ is by far the most expensive term and cancels from |γ|
/// and from the asymmetry; `include_phi` keeps it optional.
pub fn gamma(
    ctx: &ResponseContext,
    kernel: KernelSource,
    r: [f64; 3],
    r_prime: [f64; 3],
    include_phi: bool,
) -> Result<GammaValue> {
    if r == r_prime {
        // Coincidence is exact by construction, not by quadrature.
        return Ok(GammaValue {
            value: Complex64::new(1.0, 0.0),
            modulus_log: 0.0,
            phase: 0.0,
        });
    }
    let (x_t, y_t, z_t) = (r[0] - r_prime[0], r[1] - r_prime[1], r[2] + r_prime[2]);
    let d = delta_point(ctx, kernel, x_t, y_t, z_t)?;
    let d_rr = delta_point(ctx, kernel, 0.0, 0.0, 2.0 * r[2])?;
    let d_pp = delta_point(ctx, kernel, 0.0, 0.0, 2.0 * r_prime[2])?;
    let modulus_log = d.delta_s - 0.5 * (d_rr.delta_s + d_pp.delta_s);
    let mut phase = d.delta_a;
    if include_phi && r[2] != r_prime[2] {
        phase += phase_phi(ctx, r[2])? - phase_phi(ctx, r_prime[2])?;
    }
    let value = Complex64::from_polar(modulus_log.exp(), phase);
    if !value.is_finite() {
        return Err(Error::Domain(format!(
            "gamma: non-finite value at R = {r:?}, R' = {r_prime:?}"
        )));
    }
    Ok(GammaValue {
        value,
        modulus_log,
        phase,
    })
}

/// Mirror-asymmetry degree Asym[γ] = 2(γ − γ^M)/(γ + γ^M) = 2i·tan Δ_A,
/// where γ^M is evaluated at the Y-mirrored pair. Purely imaginary; odd
/// under both ỹ → −ỹ and the enantiomer flip.
pub fn asym_gamma(
    ctx: &ResponseContext,
    kernel: KernelSource,
    r: [f64; 3],
    r_prime: [f64; 3],
) -> Result<Complex64> {
    let d = delta_point(ctx, kernel, r[0] - r_prime[0], r[1] - r_prime[1], r[2] + r_prime[2])?;
    Ok(Complex64::new(0.0, 2.0 * d.delta_a.tan()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::materials::{Environment, MaterialModel};
    use crate::quadrature::NumericsConfig;
    use crate::slab::Geometry;
    use crate::units::PhysicalConstants;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params() -> ElectronParams {
        ElectronParams {
            beta: 0.5,
            sigma_y: 3.0,
            sigma_z: 2.0,
            impact_b: 9.0,
            e_i: 79_000.0,
        }
    }

    fn ctx() -> ResponseContext {
        ResponseContext::new(
            PhysicalConstants::default(),
            MaterialModel::default(),
            Geometry {
                d: 50.0,
                l_eff: 1000.0,
                env: Environment::default(),
            },
            0.5,
            NumericsConfig::default(),
        )
        .unwrap()
    }

    #[test]
    fn profile_normalized_symmetric_peaked() {
        let p = params();
        // Midpoint rule on a wide fine grid.
        let (h, n) = (0.05, 800);
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                let y = -20.0 + (i as f64 + 0.5) * h;
                let z = -29.0 + (j as f64 + 0.5) * h;
                let f = phi_i(y, z, &p);
                total += f * f * h * h;
            }
        }
        assert!((total - 1.0).abs() < 1e-10, "norm defect {:e}", total - 1.0);
        assert_eq!(phi_i(-1.3, -7.0, &p), phi_i(1.3, -7.0, &p));
        assert!(phi_i(0.0, p.z_center(), &p) >= phi_i(0.4, p.z_center() - 0.3, &p));
    }

    #[test]
    fn autoconvolution_matches_direct_quadrature() {
        let p = params();
        for (yt, zt) in [(0.0, -18.0), (2.5, -15.0), (-4.0, -22.0)] {
            let closed = autoconvolution(yt, zt, &p);
            let (h, n) = (0.01, 6000);
            let mut direct = 0.0;
            for i in 0..n {
                let y = -30.0 + (i as f64 + 0.5) * h;
                direct += phi_i(y, 0.5 * zt, &p) * phi_i(y - yt, 0.5 * zt, &p) * h;
            }
            assert!(
                (closed - direct).abs() < 1e-10,
                "({yt},{zt}): closed {closed:e} vs direct {direct:e}"
            );
            assert_eq!(closed, autoconvolution(-yt, zt, &p));
        }
    }

    #[test]
    fn autoconvolution_z_marginal_is_two() {
        let p = params();
        let (h, n) = (0.01, 8000);
        let total: f64 = (0..n)
            .map(|j| autoconvolution(0.0, -58.0 + (j as f64 + 0.5) * h, &p) * h)
            .sum();
        assert!((total - 2.0).abs() < 1e-9);
    }

    #[test]
    fn aloof_warning_fires_only_when_violated() {
        let mut p = params();
        assert!(p.aloof_warning().is_none());
        p.sigma_z = 4.0;
        assert!(p.aloof_warning().is_some());
        assert!(p.validate().is_empty());
        p.beta = 1.5;
        assert!(!p.validate().is_empty());
    }

    #[test]
    fn gamma_is_one_at_coincidence() {
        let c = ctx();
        let g = gamma(
            &c,
            KernelSource::Direct,
            [0.0, 1.0, -8.0],
            [0.0, 1.0, -8.0],
            true,
        )
        .unwrap();
        assert_eq!(g.value, Complex64::new(1.0, 0.0));
        assert_eq!(g.modulus_log, 0.0);
    }

    #[test]
    fn gamma_bounded_and_hermitian() {
        let c = ctx();
        let grid = crate::response::KernelGrid::build(&c).unwrap();
        let k = KernelSource::Grid(&grid);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..100 {
            let r = [
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-10.0..10.0),
                -rng.gen_range(3.0..25.0),
            ];
            let rp = [
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-10.0..10.0),
                -rng.gen_range(3.0..25.0),
            ];
            let g = gamma(&c, k, r, rp, false).unwrap();
            assert!(g.value.norm() <= 1.0 + 1e-10, "|gamma| = {}", g.value.norm());
            let h = gamma(&c, k, rp, r, false).unwrap();
            assert!(
                (g.value.conj() - h.value).norm() < 1e-10,
                "hermiticity: {} vs {}",
                g.value,
                h.value
            );
        }
    }

    #[test]
    fn gamma_mirror_symmetric_when_achiral() {
        let mut c = ctx();
        c.material.chiral_oscillators.clear();
        let r = [1.0, 4.0, -9.0];
        let rp = [0.0, -2.0, -13.0];
        let rm = [1.0, -4.0, -9.0];
        let rpm = [0.0, 2.0, -13.0];
        let g = gamma(&c, KernelSource::Direct, r, rp, false).unwrap();
        let m = gamma(&c, KernelSource::Direct, rm, rpm, false).unwrap();
        assert!((g.value - m.value).norm() < 1e-10);
    }

    #[test]
    fn asym_matches_explicit_mirror_ratio() {
        let c = ctx();
        let grid = crate::response::KernelGrid::build(&c).unwrap();
        let k = KernelSource::Grid(&grid);
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for _ in 0..30 {
            let r = [0.0, rng.gen_range(0.5..8.0), -rng.gen_range(4.0..20.0)];
            let rp = [0.0, rng.gen_range(-8.0..-0.5), -rng.gen_range(4.0..20.0)];
            let a = asym_gamma(&c, k, r, rp).unwrap();
            assert_eq!(a.re, 0.0);
            let g = gamma(&c, k, r, rp, false).unwrap().value;
            let gm = gamma(&c, k, [r[0], -r[1], r[2]], [rp[0], -rp[1], rp[2]], false)
                .unwrap()
                .value;
            let ratio = 2.0 * (g - gm) / (g + gm);
            assert!(
                (a - ratio).norm() <= 1e-8 * ratio.norm().max(1e-8),
                "asym {a} vs ratio {ratio}"
            );
        }
        // ỹ = 0 → no asymmetry.
        let a0 = asym_gamma(&c, k, [0.0, 2.0, -8.0], [0.0, 2.0, -12.0]).unwrap();
        assert_eq!(a0.im, 0.0);
    }

    #[test]
    fn enantiomer_flip_negates_asym() {
        let c = ctx();
        let mut cm = c.clone();
        cm.material = c.material.enantiomer();
        let r = [0.0, 3.0, -8.0];
        let rp = [0.0, -1.0, -11.0];
        let a = asym_gamma(&c, KernelSource::Direct, r, rp).unwrap();
        let am = asym_gamma(&cm, KernelSource::Direct, r, rp).unwrap();
        assert!((a + am).norm() <= 1e-12 * a.norm());
    }
}
