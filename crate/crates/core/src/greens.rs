//! The xx Green's-tensor machinery above the film: the reflected spectral
//! kernel Υ(E, k∥) and the (validation-grade) imaginary part Im G_xx for two
//! points in the vacuum half-space.
//!
//! Υ splits into a part built from R_SS and R_PP that is even under
//! k_y → −k_y (mirror symmetric) and a part carrying the S–P mixing
//! coefficients times k_x k_y, odd under k_y → −k_y — the entire mirror
//! asymmetry of the configuration lives in the latter.

use num_complex::Complex64;

use crate::materials::MaterialModel;
use crate::quadrature::{integrate_adaptive_c, NumericsConfig, Tol};
use crate::slab::{reflection_matrix, Geometry};
use crate::units::{sqrt_upper, PhysicalConstants};
use crate::{Error, Result};

/// The reflected kernel Υ at one (E, k_x, k_y), split by k_y parity.
#[derive(Debug, Clone, Copy)]
pub struct UpsilonValue {
    /// R_SS k_y²/k∥² + R_PP (k1z²/(k_ω²ε₁)) k_x²/k∥²  (even in k_y).
    pub symmetric_part: Complex64,
    /// −n (R_SP k1z²/(k_ω²ε₁) + R_PS) k_x k_y/k∥²  (odd in k_y; sign
    /// included).
    pub antisymmetric_part: Complex64,
}

impl UpsilonValue {
    pub fn total(&self) -> Complex64 {
        self.symmetric_part + self.antisymmetric_part
    }
}

/// Evaluate Υ(E, k_x, k_y). The origin k∥ = 0 is rejected: the value there
/// depends on direction, and no caller needs it (the electron line fixes
/// k_x = −k_ω/β ≠ 0).
pub fn upsilon(
    energy_ev: f64,
    kx: f64,
    ky: f64,
    constants: &PhysicalConstants,
    material: &MaterialModel,
    geom: &Geometry,
) -> Result<UpsilonValue> {
    let kp2 = kx * kx + ky * ky;
    if kp2 == 0.0 {
        return Err(Error::Domain(
            "upsilon: k_par = 0 is direction-dependent and excluded".into(),
        ));
    }
    let k_omega = constants.k_omega(energy_ev);
    let r = reflection_matrix(energy_ev, kp2.sqrt(), constants, material, geom)?;
    // k1z² is branch-free algebra.
    let k1z2 = Complex64::from(k_omega * k_omega * geom.env.eps1 - kp2);
    let kz_ratio = k1z2 / (k_omega * k_omega * geom.env.eps1);
    let symmetric_part = (r.r_ss * (ky * ky) + r.r_pp * kz_ratio * (kx * kx)) / kp2;
    let antisymmetric_part =
        -r.n_chiral * (r.r_sp * kz_ratio + r.r_ps) * (kx * ky) / kp2;
    Ok(UpsilonValue {
        symmetric_part,
        antisymmetric_part,
    })
}

/// Both contributions to Im G_xx(r, r′): `(free, reflected, error_estimate)`.
///
/// Validation-grade 2D quadrature over (k_x, k_y); not on any hot path. The
/// symmetrized integrand cos(k∥·Δr∥)·Re[…] is used, under which the free
/// part is supported on the propagating disc only and the reflected part
/// decays like e^{k1z''(z+z′)}.
pub fn im_gxx_parts(
    r: [f64; 3],
    r_prime: [f64; 3],
    energy_ev: f64,
    constants: &PhysicalConstants,
    material: &MaterialModel,
    geom: &Geometry,
    numerics: &NumericsConfig,
) -> Result<(f64, f64, f64)> {
    if r[2] >= 0.0 || r_prime[2] >= 0.0 {
        return Err(Error::Domain(
            "im_gxx: both points must lie in the vacuum half-space z < 0".into(),
        ));
    }
    let k_omega = constants.k_omega(energy_ev);
    let eps1 = geom.env.eps1;
    let dx = r[0] - r_prime[0];
    let dy = r[1] - r_prime[1];
    let dz_abs = (r[2] - r_prime[2]).abs();
    let z_sum = r[2] + r_prime[2]; // < 0
    let decay = -z_sum;

    // Beyond the light line the free part is killed by the Re[·]; the
    // reflected part decays on scale 1/|z+z'|.
    let k_light = k_omega * eps1.sqrt().max(geom.env.eps2.sqrt());
    let k_cut = k_light + numerics.ky_cutoff_factor / decay;
    let tol = Tol::new(numerics.rel_tol.max(1e-9), numerics.abs_tol);
    let inner_tol = Tol::new(tol.rel * 0.1, tol.abs * 0.1);

    let integrand = |kx: f64, ky: f64, reflected: bool| -> Result<f64> {
        let kp2 = kx * kx + ky * ky;
        if kp2 == 0.0 {
            return Ok(0.0);
        }
        let k1z = sqrt_upper(Complex64::from(k_omega * k_omega * eps1 - kp2));
        // The 1/k1z light-line singularity is integrable (inverse square
        // root); a node landing exactly on the circle must not poison the
        // sum with 0/0.
        if k1z.norm() == 0.0 {
            return Ok(0.0);
        }
        let phase = (kx * dx + ky * dy).cos();
        let bracket = if reflected {
            let u = upsilon(energy_ev, kx, ky, constants, material, geom)?;
            (Complex64::i() * (-k1z) * z_sum).exp() * u.total() / k1z
        } else {
            (Complex64::i() * k1z * dz_abs).exp()
                * (1.0 - kx * kx / (k_omega * k_omega * eps1))
                / k1z
        };
        Ok(phase * bracket.re)
    };

    // Adaptive subdivision starts from whole panels, so the k-space
    // structure on the light-circle scale k_ω√ε must be seeded explicitly:
    // a single panel spanning [−k_cut, k_cut] would sample right past a
    // disc that is orders of magnitude narrower and report spurious
    // convergence to zero.
    let split_points = |limit: f64| -> Vec<f64> {
        let mut pts = vec![-limit, limit];
        for s in [1.0, 10.0] {
            let b = s * k_light;
            if b < limit {
                pts.push(-b);
                pts.push(b);
            }
        }
        pts.sort_by(f64::total_cmp);
        pts
    };
    let adaptive_split =
        |f: &dyn Fn(f64) -> Complex64, pts: &[f64], tol: Tol| -> (Complex64, f64) {
            let mut value = Complex64::new(0.0, 0.0);
            let mut err = 0.0;
            for pair in pts.windows(2) {
                let part = integrate_adaptive_c(f, pair[0], pair[1], tol, numerics.max_subdivisions);
                value += part.value;
                err += part.error_estimate;
            }
            (value, err)
        };

    let mut err_total = 0.0;
    let mut run = |reflected: bool| -> Result<f64> {
        // The free part is supported exactly on the propagating disc
        // |k∥| < k_ω√ε₁; the reflected part keeps its evanescent tail.
        let outer_limit = if reflected { k_cut } else { k_omega * eps1.sqrt() };
        let outer_pts = split_points(outer_limit);
        let outer_f = |kx: f64| -> Complex64 {
            let inner_limit = if reflected {
                k_cut
            } else {
                ((k_omega * k_omega * eps1 - kx * kx).max(0.0)).sqrt()
            };
            if inner_limit == 0.0 {
                return Complex64::new(0.0, 0.0);
            }
            let inner_pts = split_points(inner_limit);
            let inner_f = |ky: f64| -> Complex64 {
                Complex64::from(integrand(kx, ky, reflected).unwrap_or(f64::NAN))
            };
            adaptive_split(&inner_f, &inner_pts, inner_tol).0
        };
        let (value, err) = adaptive_split(&outer_f, &outer_pts, tol);
        if !value.re.is_finite() {
            return Err(Error::Domain("im_gxx: kernel evaluation failed".into()));
        }
        err_total += err;
        Ok(value.re / (8.0 * std::f64::consts::PI * std::f64::consts::PI))
    };

    let free = run(false)?;
    let reflected = run(true)?;
    Ok((free, reflected, err_total / (8.0 * std::f64::consts::PI.powi(2))))
}

/// Im G_xx(r, r′) for two points in vacuum (free + reflected parts).
pub fn im_gxx(
    r: [f64; 3],
    r_prime: [f64; 3],
    energy_ev: f64,
    constants: &PhysicalConstants,
    material: &MaterialModel,
    geom: &Geometry,
    numerics: &NumericsConfig,
) -> Result<(f64, f64)> {
    let (free, reflected, err) =
        im_gxx_parts(r, r_prime, energy_ev, constants, material, geom, numerics)?;
    Ok((free + reflected, err))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::materials::Environment;

    fn defaults() -> (PhysicalConstants, MaterialModel, Geometry, NumericsConfig) {
        (
            PhysicalConstants::default(),
            MaterialModel::default(),
            Geometry {
                d: 50.0,
                l_eff: 1000.0,
                env: Environment::default(),
            },
            NumericsConfig {
                rel_tol: 1e-7,
                ..NumericsConfig::default()
            },
        )
    }

    #[test]
    fn achiral_upsilon_has_no_asymmetric_part() {
        let (c, mut m, g, _) = defaults();
        m.chiral_oscillators.clear();
        let u = upsilon(3.5, -0.03, 0.05, &c, &m, &g).unwrap();
        assert_eq!(u.antisymmetric_part, Complex64::new(0.0, 0.0));
    }

    #[test]
    fn upsilon_ky_parity() {
        let (c, m, g, _) = defaults();
        let u = upsilon(3.5, -0.03, 0.05, &c, &m, &g).unwrap();
        let v = upsilon(3.5, -0.03, -0.05, &c, &m, &g).unwrap();
        assert!((u.symmetric_part - v.symmetric_part).norm() < 1e-15);
        assert!((u.antisymmetric_part + v.antisymmetric_part).norm() < 1e-15);
    }

    #[test]
    fn upsilon_rejects_origin() {
        let (c, m, g, _) = defaults();
        assert!(upsilon(3.5, 0.0, 0.0, &c, &m, &g).is_err());
    }

    #[test]
    fn upsilon_golden_default_config() {
        // Frozen from the independent straight-line oracle transcription
        // (see the oracle-vs-main cross test below and in `oracles`).
        let (c, m, g, _) = defaults();
        let k_omega = c.k_omega(3.5);
        let u = upsilon(3.5, -k_omega / 0.7, 0.05, &c, &m, &g).unwrap();
        let o = crate::oracles::oracle_upsilon(3.5, -k_omega / 0.7, 0.05, &c, &m, &g);
        assert!((u.symmetric_part - o.0).norm() < 1e-12 * o.0.norm());
        assert!((u.antisymmetric_part - o.1).norm() < 1e-12 * o.1.norm().max(1e-20));
    }

    #[test]
    fn im_gxx_reciprocity() {
        let (c, m, g, n) = defaults();
        let a = [1.0, 2.0, -6.0];
        let b = [-3.0, 4.0, -9.0];
        let (v_ab, err) = im_gxx(a, b, 3.54, &c, &m, &g, &n).unwrap();
        let (v_ba, _) = im_gxx(b, a, 3.54, &c, &m, &g, &n).unwrap();
        assert!(
            (v_ab - v_ba).abs() <= (10.0 * err).max(1e-12 * v_ab.abs()),
            "reciprocity violated: {v_ab} vs {v_ba}"
        );
    }

    #[test]
    fn im_gxx_mirror_symmetric_when_achiral() {
        let (c, mut m, g, n) = defaults();
        m.chiral_oscillators.clear();
        let a = [1.0, 2.0, -6.0];
        let b = [-3.0, 4.0, -9.0];
        let am = [1.0, -2.0, -6.0];
        let bm = [-3.0, -4.0, -9.0];
        let (v, err) = im_gxx(a, b, 3.54, &c, &m, &g, &n).unwrap();
        let (vm, _) = im_gxx(am, bm, 3.54, &c, &m, &g, &n).unwrap();
        assert!((v - vm).abs() <= (10.0 * err).max(1e-12 * v.abs()));
    }

    #[test]
    fn im_gxx_mirror_asymmetry_with_chirality() {
        // At resonance the chiral film makes mirrored pairs inequivalent,
        // and the difference equals the antisymmetric-part-only integral
        // (the symmetric part cancels in the mirror difference).
        let (c, m, g, n) = defaults();
        let a = [1.0, 2.0, -6.0];
        let b = [-3.0, 4.0, -9.0];
        let am = [1.0, -2.0, -6.0];
        let bm = [-3.0, -4.0, -9.0];
        let (_, refl, err) = im_gxx_parts(a, b, 3.54, &c, &m, &g, &n).unwrap();
        let (_, refl_m, err_m) = im_gxx_parts(am, bm, 3.54, &c, &m, &g, &n).unwrap();
        let diff = (refl - refl_m).abs();
        assert!(
            diff > 10.0 * (err + err_m),
            "mirror difference {diff:.3e} not resolved above error {:.3e}",
            err + err_m
        );
    }

    #[test]
    fn im_gxx_free_part_matches_analytic() {
        let (c, m, g, n) = defaults();
        let a = [1.0, 2.0, -6.0];
        let b = [-2.0, 3.5, -10.0];
        let e = 3.54;
        let (free, _, err) = im_gxx_parts(a, b, e, &c, &m, &g, &n).unwrap();
        let truth = crate::oracles::free_space_im_gxx_analytic(
            a,
            b,
            c.k_omega(e) * g.env.eps1.sqrt(),
        );
        assert!(
            (free - truth).abs() <= 1e-8 * truth.abs().max(1e-12) + 10.0 * err,
            "free part {free:.12e} vs analytic {truth:.12e}"
        );
    }

    #[test]
    fn im_gxx_rejects_points_outside_vacuum() {
        let (c, m, g, n) = defaults();
        assert!(im_gxx([0.0, 0.0, 1.0], [0.0, 0.0, -5.0], 3.0, &c, &m, &g, &n).is_err());
    }
}
