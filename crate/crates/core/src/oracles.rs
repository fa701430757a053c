//! Brute-force reference implementations used exclusively by tests and the
//! `oracle` subcommand: a straight-line re-transcription of the stack
//! optics, fixed-grid Simpson integrators for the interaction integrals,
//! finite differences and trapezoidal distribution moments.
//!
//! Nothing here calls into the main evaluation path beyond the shared unit
//! conventions (`units`) and the plain parameter structs; every formula is
//! re-derived in place so that agreement between the two paths certifies
//! the transcription.

use num_complex::Complex64;

use crate::materials::MaterialModel;
use crate::slab::Geometry;
use crate::units::{sqrt_upper, PhysicalConstants};

/// Outcome of one main-vs-oracle comparison.
#[derive(Debug, Clone)]
pub struct OracleReport {
    pub quantity_name: String,
    pub main_value: f64,
    pub oracle_value: f64,
    pub relative_error: f64,
    pub passed: bool,
}

impl OracleReport {
    pub fn compare(name: &str, main_value: f64, oracle_value: f64, bound: f64) -> Self {
        let scale = oracle_value.abs().max(main_value.abs()).max(1e-300);
        let relative_error = (main_value - oracle_value).abs() / scale;
        Self {
            quantity_name: name.to_string(),
            main_value,
            oracle_value,
            relative_error,
            passed: relative_error <= bound,
        }
    }
}

/// Straight-line transcription of the reflected kernel Υ(E, k_x, k_y):
/// dispersive film response, field-matching matrices, 2×2 inversion and the
/// S/P projection, written in one pass with no shared helpers. Returns
/// `(symmetric_part, antisymmetric_part)`.
pub fn oracle_upsilon(
    energy_ev: f64,
    kx: f64,
    ky: f64,
    constants: &PhysicalConstants,
    material: &MaterialModel,
    geom: &Geometry,
) -> (Complex64, Complex64) {
    let i = Complex64::i();
    let kw = energy_ev / constants.hbar_c;
    let kp2 = kx * kx + ky * ky;
    let kp = kp2.sqrt();
    let e1 = geom.env.eps1;
    let e2 = geom.env.eps2;
    let d = geom.d;

    // Film response, term by term.
    let mut eps = Complex64::new(material.eps_background, 0.0);
    for o in &material.oscillators {
        eps += o.strength
            / Complex64::new(
                o.resonance_energy * o.resonance_energy - energy_ev * energy_ev,
                -o.damping * energy_ev,
            );
    }
    let mut kap = Complex64::new(0.0, 0.0);
    for o in &material.chiral_oscillators {
        kap += o.amplitude * o.resonance_energy * energy_ev
            / Complex64::new(
                o.resonance_energy * o.resonance_energy - energy_ev * energy_ev,
                -o.damping * energy_ev,
            );
    }
    let n = if kap.norm() == 0.0 {
        sqrt_upper(eps)
    } else {
        sqrt_upper(eps * kap * kap) / kap
    };

    let k1z = sqrt_upper(Complex64::new(kw * kw * e1 - kp2, 0.0));
    let k2z = sqrt_upper(Complex64::new(kw * kw * e2 - kp2, 0.0));
    let kzp = sqrt_upper(kw * kw * (n + kap) * (n + kap) - kp2);
    let kzm = sqrt_upper(kw * kw * (n - kap) * (n - kap) - kp2);

    // Common damping factor e^{−a d} applied to every trig factor; the
    // reflection matrix is invariant and overflow is avoided.
    let a = kzp.im.max(kzm.im).max(0.0);
    let (cosp, sincp) = if (kzp * d).norm() < 1e-6 {
        let x2 = (kzp * d) * (kzp * d);
        ((-a * d).exp() * (kzp * d).cos(), (-a * d).exp() * d * (1.0 - x2 / 6.0))
    } else {
        (
            0.5 * (((i * kzp - a) * d).exp() + ((-i * kzp - a) * d).exp()),
            (((i * kzp - a) * d).exp() - ((-i * kzp - a) * d).exp()) / (2.0 * i * kzp),
        )
    };
    let (cosm, sincm) = if (kzm * d).norm() < 1e-6 {
        let x2 = (kzm * d) * (kzm * d);
        ((-a * d).exp() * (kzm * d).cos(), (-a * d).exp() * d * (1.0 - x2 / 6.0))
    } else {
        (
            0.5 * (((i * kzm - a) * d).exp() + ((-i * kzm - a) * d).exp()),
            (((i * kzm - a) * d).exp() - ((-i * kzm - a) * d).exp()) / (2.0 * i * kzm),
        )
    };

    let cp = 0.5 * (cosp + cosm);
    let cm = 0.5 * (cosp - cosm);
    let s1p = 0.5 * (kw * (n + kap) / n * sincp + kw * (n - kap) / n * sincm);
    let s1m = 0.5 * (kw * (n + kap) / n * sincp - kw * (n - kap) / n * sincm);
    let s2p = 0.5
        * (kzp * kzp * n / (kw * (n + kap)) * sincp + kzm * kzm * n / (kw * (n - kap)) * sincm);
    let s2m = 0.5
        * (kzp * kzp * n / (kw * (n + kap)) * sincp - kzm * kzm * n / (kw * (n - kap)) * sincm);

    let m1_00 = cp + k2z / (i * kw) * s1p;
    let m1_01 = n * (kw * e2 / (i * k2z * eps) * cm - s1m);
    let m1_10 = n * (i * k1z / (kw * e1)) * (cm + k2z / (i * kw) * s1m);
    let m1_11 = eps * (i * k1z / (kw * e1)) * (kw * e2 / (i * k2z * eps) * cp - s1p);
    let m2_00 = kw / (i * k1z) * (i * k2z / kw * cp + s2p);
    let m2_01 = n * kw / (i * k1z) * (cm + kw * e2 / (i * k2z * eps) * s2m);
    let m2_10 = n / eps * (i * k2z / kw * cm + s2m);
    let m2_11 = cp + kw * e2 / (i * k2z * eps) * s2p;

    let s00 = m1_00 + m2_00;
    let s01 = m1_01 + m2_01;
    let s10 = m1_10 + m2_10;
    let s11 = m1_11 + m2_11;
    let det = s00 * s11 - s01 * s10;
    let d00 = m1_00 - m2_00;
    let d01 = m1_01 - m2_01;
    let d10 = m1_10 - m2_10;
    let d11 = m1_11 - m2_11;

    let r_ss = (d00 * s11 - d01 * s10) / det;
    let n_r_sp = (-d00 * s01 + d01 * s00) / det;
    let n_r_ps = -(d10 * s11 - d11 * s10) / det;
    let r_pp = -(-d10 * s01 + d11 * s00) / det;

    let k1z2_over = Complex64::new(kw * kw * e1 - kp2, 0.0) / (kw * kw * e1);
    let sym = (r_ss * (ky * ky) + r_pp * k1z2_over * (kx * kx)) / (kp * kp);
    // n·R_SP and n·R_PS already carry the chiral index; the asymmetric term
    // is −(n R_SP · k1z²/(k_ω²ε₁) + n R_PS)·k_x k_y/k∥².
    let asym = -(n_r_sp * k1z2_over + n_r_ps) * (kx * ky) / (kp * kp);
    (sym, asym)
}

/// Analytic free-space Im G_xx in the Weyl normalization used here:
/// Im G⁰_xx = (1 + ∂²_x/k²)[sin(kR)/(4πR)], finite at coincidence.
pub fn free_space_im_gxx_analytic(r: [f64; 3], r_prime: [f64; 3], k: f64) -> f64 {
    let dx = r[0] - r_prime[0];
    let dy = r[1] - r_prime[1];
    let dz = r[2] - r_prime[2];
    let rr = (dx * dx + dy * dy + dz * dz).sqrt();
    let pref = k / (4.0 * std::f64::consts::PI);
    if rr < 1e-12 {
        // Coincident limit: j₀ → 1, ∂²_x j₀(kR) → −k²/3.
        return pref * (1.0 - 1.0 / 3.0);
    }
    let u = k * rr;
    let j0 = u.sin() / u;
    let j1 = u.sin() / (u * u) - u.cos() / u;
    let j0p = -j1;
    let j0pp = 2.0 * j1 / u - j0;
    // ∂²_x f(R) = f'' (Δx/R)² + f' (1/R − Δx²/R³) with f(R) = j₀(kR).
    let ct2 = (dx / rr) * (dx / rr);
    let d2x = k * k * j0pp * ct2 + k * j0p * (1.0 - ct2) / rr;
    pref * (j0 + d2x / (k * k))
}

/// Composite Simpson on a uniform grid with `n` intervals (n even).
fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    assert!(n >= 2 && n % 2 == 0, "simpson: n must be even and >= 2");
    let h = (b - a) / n as f64;
    let mut sum = f(a) + f(b);
    for j in 1..n {
        let w = if j % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(a + j as f64 * h);
    }
    sum * h / 3.0
}

/// Fixed-grid Simpson evaluation of the interaction integrals
/// `(delta_s, delta_a)` at one (x̃, ỹ, z̃): uniform n_E × n_ky product grid,
/// independent of the adaptive engine.
#[allow(clippy::too_many_arguments)]
pub fn fixed_grid_delta(
    x_tilde: f64,
    y_tilde: f64,
    z_tilde: f64,
    n_e: usize,
    n_ky: usize,
    beta: f64,
    e_max: f64,
    ky_cutoff_factor: f64,
    constants: &PhysicalConstants,
    material: &MaterialModel,
    geom: &Geometry,
) -> (f64, f64) {
    assert!(n_e >= 64 && n_ky >= 64, "fixed_grid_delta: grids must be >= 64");
    assert!(z_tilde < 0.0, "fixed_grid_delta: z_tilde must be negative");
    let hbar_c = constants.hbar_c;
    let ky_cut = ky_cutoff_factor / z_tilde.abs();
    let pref = geom.l_eff * constants.fine_structure / std::f64::consts::PI / hbar_c;

    // The integrand varies on the light-line scale k_ω near k_y = 0 and on
    // the envelope scale 1/|z̃| beyond; a uniform grid over the whole range
    // starves the narrow region, so the k_y integral is a two-range
    // composite with n_ky intervals in each.
    // Both channels share the reflection-kernel evaluation; pack them into
    // the real and imaginary slots of one complex-valued Simpson pass.
    let ky_split = (3.0 * e_max / hbar_c).min(0.5 * ky_cut);
    let simpson_c = |f: &dyn Fn(f64) -> Complex64, a: f64, b: f64, n: usize| -> Complex64 {
        let h = (b - a) / n as f64;
        let mut acc = f(a) + f(b);
        for j in 1..n {
            let w = if j % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * f(a + j as f64 * h);
        }
        acc * (h / 3.0)
    };
    let inner = |energy_ev: f64| -> Complex64 {
        if energy_ev <= 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        let kw = energy_ev / hbar_c;
        let kx = -kw / beta;
        let q0_2 = kw * kw * (1.0 / (beta * beta) - geom.env.eps1);
        let f = |ky: f64| -> Complex64 {
            let q = (q0_2 + ky * ky).sqrt();
            let (sym, asym) = oracle_upsilon(energy_ev, kx, ky, constants, material, geom);
            let weight = (q * z_tilde).exp() / q;
            Complex64::new(
                (ky * y_tilde).cos() * weight * sym.im,
                (ky * y_tilde).sin() * weight * asym.im,
            )
        };
        simpson_c(&f, 0.0, ky_split, n_ky) + simpson_c(&f, ky_split, ky_cut, n_ky)
    };

    // The k_y integral runs over the whole axis; both integrands are even in
    // k_y after pairing with the cos/sin factors, hence the factor 2.
    let phase = |energy_ev: f64| ((energy_ev / hbar_c) * x_tilde / beta).cos();
    let total = simpson_c(
        &|e: f64| phase(e) * 2.0 * inner(e),
        e_max * 1e-9,
        e_max,
        n_e,
    );
    (pref * total.re, pref * total.im)
}

/// Fixed-grid evaluation of the elastic phase Φ(Z): Simpson in E and in a
/// substituted k_y variable, principal value in k_x taken as a folded
/// difference quotient over a symmetric window around the pole plus plain
/// Simpson outside. The inverse-square-root light-circle factor 1/k_1z is
/// removed exactly by the angle-like substitutions k_y = k_c sin φ inside
/// the propagating disc (dk_y/k_1z = dφ) and k_y = k_c cosh ψ /
/// k_y = m sinh ψ on the evanescent side (dk_y/|k_1z| = dψ); the fold
/// window is kept clear of the weak logarithmic kinks at k_x = ±k_ω√ε₁.
/// Coarse by design; certifies the adaptive path at the 1e-3 level.
#[allow(clippy::too_many_arguments)]
pub fn fixed_grid_phi(
    z: f64,
    n_e: usize,
    n_kx: usize,
    n_ky: usize,
    beta: f64,
    e_max: f64,
    ky_cutoff_factor: f64,
    constants: &PhysicalConstants,
    material: &MaterialModel,
    geom: &Geometry,
) -> f64 {
    assert!(z < 0.0, "fixed_grid_phi: Z must be negative");
    let hbar_c = constants.hbar_c;
    let eps1 = geom.env.eps1;
    let decay = 2.0 * z.abs();

    let outer = simpson(
        |energy_ev: f64| {
            let kw = energy_ev / hbar_c;
            let a = kw / beta;
            let pole = -a;
            let kl = kw * eps1.sqrt();
            let kl2 = kl * kl;
            let k_big = kw * eps1.sqrt().max(geom.env.eps2.sqrt());
            let kx_cut = (2.0 * a).max(k_big) + ky_cutoff_factor / decay;
            let ky_cut = k_big + ky_cutoff_factor / decay;
            // Caps the integrable logarithm when a node lands on ±k_ω√ε₁;
            // large enough that k_y² stays representable next to k_x².
            let floor2 = (1e-7 * kl) * (1e-7 * kl);

            let sym_at = |kx: f64, ky: f64| -> Complex64 {
                // A node landing exactly on k∥ = 0, the light circle or the
                // substrate circle hits a removable 0/0 in the raw kernel;
                // nudge k_y until the limit point is left, since the kernel
                // itself is continuous there and zeroing the sample would
                // inject an O(h) endpoint error into the Simpson rule.
                let mut ky = ky;
                loop {
                    let kp2 = kx * kx + ky * ky;
                    if kp2 != 0.0 && kp2 != kl2 && kp2 != kw * kw * geom.env.eps2 {
                        break;
                    }
                    ky = ky.abs() + 1e-6 * kl;
                }
                let (sym, _) = oracle_upsilon(energy_ev, kx, ky, constants, material, geom);
                sym
            };

            // 2 ∫₀^{ky_cut} dk_y Re[e^{−2ik_1z Z} Υ_even / k_1z] with the
            // 1/k_1z absorbed into the k_y parameterization near the light
            // circle. The evanescent range is split at k_y = k_ω: a
            // sinh/cosh "core" resolves the integrable logarithm below the
            // kernel's natural scale, and a cosh-graded "shell" spaces its
            // nodes on that scale out to the cutoff. The reflection
            // coefficients carry a √(k_2z) branch point where the scan
            // crosses the substrate circle k∥ = k_ω√ε₂; the affected
            // segment gets a local t² mapping on each side so the
            // half-power kink becomes polynomial.
            let kw2e2 = kw * kw * geom.env.eps2;
            // ∫₀^{x_max} f dx with an optional half-power kink at x2.
            let split_sqrt = |f: &dyn Fn(f64) -> f64, x2: Option<f64>, x_max: f64| -> f64 {
                let d = match x2 {
                    Some(p) => 1.0_f64.min(p).min(x_max - p),
                    None => 0.0,
                };
                if d <= 0.0 {
                    return simpson(f, 0.0, x_max, n_ky);
                }
                let p = x2.unwrap();
                let mut total = simpson(|t| f(p - t * t) * 2.0 * t, 0.0, d.sqrt(), n_ky)
                    + simpson(|t| f(p + t * t) * 2.0 * t, 0.0, d.sqrt(), n_ky);
                if p - d > 0.0 {
                    total += simpson(f, 0.0, p - d, n_ky);
                }
                if p + d < x_max {
                    total += simpson(f, p + d, x_max, n_ky);
                }
                total
            };
            let g = |kx: f64| -> f64 {
                let m2 = kx * kx - kl2;
                // k_y of the substrate-circle crossing, if any.
                let ky2sq = kw2e2 - kx * kx;
                let ky2 = if ky2sq > 0.0 { ky2sq.sqrt() } else { f64::INFINITY };

                // Shell over k_y ∈ [kb, ky_cut] with k_y = kb cosh χ and
                // the explicit weight dk_y/|k_1z|; `uu` maps k_y² to u².
                let shell = |kb: f64, uu: &dyn Fn(f64) -> f64| -> f64 {
                    let chi_max = (ky_cut / kb).acosh();
                    let chi2 = (ky2 > kb && ky2 < ky_cut).then(|| (ky2 / kb).acosh());
                    split_sqrt(
                        &|chi: f64| {
                            let ky = kb * chi.cosh();
                            let u = uu(ky * ky).sqrt();
                            (2.0 * u * z).exp() * sym_at(kx, ky).im * kb * chi.sinh() / u
                        },
                        chi2,
                        chi_max,
                    )
                };

                let total = if m2 < 0.0 {
                    // Crosses the light circle at k_yc = √(k_l² − k_x²).
                    let kyc = (-m2).max(floor2).sqrt();
                    let inside = simpson(
                        |phi: f64| {
                            let (s, c) = phi.sin_cos();
                            let k1z = kyc * c;
                            let ph = Complex64::new(0.0, -2.0 * k1z * z).exp();
                            (ph * sym_at(kx, kyc * s)).re
                        },
                        0.0,
                        std::f64::consts::FRAC_PI_2,
                        n_ky,
                    );
                    let outside = if kyc < kw {
                        // Core k_y ∈ [k_yc, k_ω] at dk_y/|k_1z| = dψ.
                        let psi_max = (kw / kyc).acosh();
                        let psi2 = (ky2 < kw).then(|| (ky2 / kyc).acosh());
                        split_sqrt(
                            &|psi: f64| {
                                let u = kyc * psi.sinh();
                                (2.0 * u * z).exp() * sym_at(kx, kyc * psi.cosh()).im
                            },
                            psi2,
                            psi_max,
                        ) + shell(kw, &|ky2v| ky2v - kyc * kyc)
                    } else {
                        let psi_max = (ky_cut / kyc).acosh();
                        let psi2 = (ky2 < ky_cut).then(|| (ky2 / kyc).acosh());
                        split_sqrt(
                            &|psi: f64| {
                                let u = kyc * psi.sinh();
                                (2.0 * u * z).exp() * sym_at(kx, kyc * psi.cosh()).im
                            },
                            psi2,
                            psi_max,
                        )
                    };
                    inside + outside
                } else {
                    // Entirely evanescent: |k_1z| = √(m² + k_y²).
                    let m = m2.max(floor2).sqrt();
                    // Core k_y ∈ [0, k_ω] at dk_y/|k_1z| = dψ.
                    let psi_max = (kw / m).asinh();
                    let psi2 = (ky2 < kw).then(|| (ky2 / m).asinh());
                    split_sqrt(
                        &|psi: f64| {
                            let u = m * psi.cosh();
                            (2.0 * u * z).exp() * sym_at(kx, m * psi.sinh()).im
                        },
                        psi2,
                        psi_max,
                    ) + shell(kw, &|ky2v| ky2v + m * m)
                };
                2.0 * total
            };

            // Fold window small enough to stay clear of the kinks at ±k_l
            // and of the lower cutoff.
            let w = 0.5 * (a - kl).min(kx_cut - a);
            let folded = simpson(|u| (g(pole + u) - g(pole - u)) / u, w * 1e-8, w, n_kx);
            // The kernel varies on the k_ω scale while the cutoff sits at
            // the envelope scale far beyond it, so the plain segments use
            // cosh/sin parameterizations for logarithmic-like node
            // placement toward ±k_l (which also quenches the capped
            // logarithmic kinks there).
            let left = {
                let k0 = a + w;
                simpson(
                    |chi: f64| {
                        let kx = -k0 * chi.cosh();
                        g(kx) / (kx - pole) * k0 * chi.sinh()
                    },
                    0.0,
                    (kx_cut / k0).acosh(),
                    n_kx,
                )
            };
            let mid = simpson(
                |chi: f64| {
                    let kx = -kl * chi.cosh();
                    g(kx) / (kx - pole) * kl * chi.sinh()
                },
                0.0,
                ((a - w) / kl).acosh(),
                n_kx,
            );
            let disc = simpson(
                |chi: f64| {
                    let kx = kl * chi.sin();
                    g(kx) / (kx - pole) * kl * chi.cos()
                },
                -std::f64::consts::FRAC_PI_2,
                std::f64::consts::FRAC_PI_2,
                n_kx,
            );
            let right = simpson(
                |chi: f64| {
                    let kx = kl * chi.cosh();
                    g(kx) / (kx - pole) * kl * chi.sinh()
                },
                0.0,
                (kx_cut / kl).acosh(),
                n_kx,
            );
            folded + left + mid + disc + right
        },
        // The kernel multiplies R_PP by k_1z²/k_ω², which amplifies
        // double-precision noise like k∥²/k_ω² as E → 0; the true
        // integrand limit is finite, so a lower cutoff of 1e-4·e_max
        // costs ~1e-4 relative while staying clear of the noise.
        e_max * 1e-4,
        e_max,
        n_e,
    );
    geom.l_eff * constants.fine_structure
        / (2.0 * std::f64::consts::PI * std::f64::consts::PI * hbar_c)
        * outer
}

/// Central finite difference of first or second order.
pub fn finite_difference<F: Fn(f64) -> f64>(f: F, point: f64, step: f64, order: u8) -> f64 {
    assert!(step > 0.0);
    match order {
        1 => (f(point + step) - f(point - step)) / (2.0 * step),
        2 => (f(point + step) - 2.0 * f(point) + f(point - step)) / (step * step),
        _ => panic!("finite_difference: order must be 1 or 2"),
    }
}

/// Trapezoidal n-th raw moment ∫ axisⁿ·density of a sampled distribution.
pub fn distribution_moments(axis: &[f64], density: &[f64], n: u32) -> f64 {
    assert_eq!(axis.len(), density.len());
    assert!(axis.len() >= 2);
    let mut total = 0.0;
    for j in 0..axis.len() - 1 {
        let fa = axis[j].powi(n as i32) * density[j];
        let fb = axis[j + 1].powi(n as i32) * density[j + 1];
        total += 0.5 * (fa + fb) * (axis[j + 1] - axis[j]);
    }
    total
}
