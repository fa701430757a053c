//! Reduced response quantities of the swift electron passing the chiral
//! film: the interaction exponents Δ_S and Δ_A, the elastic phase Φ, and
//! the analytic derivative kernels A(Z), S(Z), σ⁽ⁿ⁾(Z) that control the
//! lateral-momentum and energy-loss statistics.
//!
//! Everything is evaluated at the electron line k_x = −k_ω/β, where the
//! k_z integral has already been carried out and only the evanescent
//! envelope e^{qz̃}/q with q = √(k_ω²(1/β² − ε₁) + k_y²) survives. The
//! symmetric (cos k_yỸ · Im sym) and antisymmetric (sin k_yỸ · Im asym)
//! channels are integrated together; the asymmetric channel is odd in Ỹ
//! and flips sign with the film handedness, the symmetric one does
//! neither.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::greens::upsilon;
use crate::materials::MaterialModel;
use crate::quadrature::{integrate_adaptive, integrate_adaptive_c, NumericsConfig, Tol};
use crate::slab::{reflection_matrix, Geometry};
use crate::units::PhysicalConstants;
use crate::{Error, Result};

/// One evaluation of the interaction exponents at relative coordinates
/// (x̃, ỹ, z̃) = (X−X′, Y−Y′, Z+Z′).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DeltaPoint {
    pub x_tilde: f64,
    pub y_tilde: f64,
    pub z_tilde: f64,
    /// Mirror-symmetric exponent (even in ỹ, handedness-blind).
    pub delta_s: f64,
    /// Mirror-antisymmetric exponent (odd in ỹ, flips with handedness).
    pub delta_a: f64,
    /// Propagated quadrature error estimate.
    pub error: f64,
}

/// Evaluation context: physical inputs plus the numerics knobs, with the
/// derived per-unit prefactor Lα/(πħc).
#[derive(Debug, Clone)]
pub struct ResponseContext {
    pub constants: PhysicalConstants,
    pub material: MaterialModel,
    pub geometry: Geometry,
    /// Electron speed in units of c.
    pub beta: f64,
    pub numerics: NumericsConfig,
}

impl ResponseContext {
    pub fn new(
        constants: PhysicalConstants,
        material: MaterialModel,
        geometry: Geometry,
        beta: f64,
        numerics: NumericsConfig,
    ) -> Result<Self> {
        let mut violations = constants.validate();
        violations.extend(material.validate());
        violations.extend(geometry.validate());
        violations.extend(numerics.validate());
        if !(0.0 < beta && beta < 1.0) {
            violations.push(format!("beta must lie in (0,1), got {beta}"));
        } else if beta * beta * geometry.env.eps1 >= 1.0 {
            violations.push(format!(
                "beta = {beta} meets the Cherenkov threshold of the host \
                 medium (eps1 = {}); the envelope q would turn imaginary",
                geometry.env.eps1
            ));
        }
        if violations.is_empty() {
            Ok(Self {
                constants,
                material,
                geometry,
                beta,
                numerics,
            })
        } else {
            Err(Error::ConfigValidation(violations))
        }
    }

    /// Evanescent envelope rate q(E, k_y), real and positive below the
    /// Cherenkov threshold.
    pub fn envelope_q(&self, energy_ev: f64, ky: f64) -> f64 {
        let kw = self.constants.k_omega(energy_ev);
        (kw * kw * (1.0 / (self.beta * self.beta) - self.geometry.env.eps1) + ky * ky).sqrt()
    }

    /// Im(sym), Im(asym) of the reflected kernel at the electron line
    /// k_x = −k_ω/β.
    pub fn kernel_point(&self, energy_ev: f64, ky: f64) -> Result<(f64, f64)> {
        let kx = -self.constants.k_omega(energy_ev) / self.beta;
        let u = upsilon(
            energy_ev,
            kx,
            ky,
            &self.constants,
            &self.material,
            &self.geometry,
        )?;
        Ok((u.symmetric_part.im, u.antisymmetric_part.im))
    }

    /// Overall prefactor Lα/(πħc) in 1/eV.
    pub fn prefactor(&self) -> f64 {
        self.geometry.l_eff * self.constants.fine_structure
            / std::f64::consts::PI
            / self.constants.hbar_c
    }

    fn check_z_tilde(&self, z_tilde: f64) -> Result<()> {
        if z_tilde >= -self.numerics.z_floor {
            return Err(Error::Domain(format!(
                "z_tilde = {z_tilde} nm violates the aloof floor: the \
                 response integrals diverge logarithmically at film contact \
                 (require z_tilde < -{})",
                self.numerics.z_floor
            )));
        }
        Ok(())
    }

    /// Photon-energy breakpoints seeding the adaptive integral: every
    /// oscillator resonance with its damping width.
    fn energy_breakpoints(&self) -> Vec<f64> {
        let mut pts = vec![0.0, self.numerics.e_max];
        let mut push = |e0: f64, g: f64| {
            for e in [e0 - 2.0 * g, e0, e0 + 2.0 * g] {
                if e > 0.0 && e < self.numerics.e_max {
                    pts.push(e);
                }
            }
        };
        for o in &self.material.oscillators {
            push(o.resonance_energy, o.damping);
        }
        for o in &self.material.chiral_oscillators {
            push(o.resonance_energy, o.damping);
        }
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts
    }

    /// k_y breakpoints on [0, cut]: the envelope varies on the scale
    /// 1/|z̃| = cut/ky_cutoff_factor.
    fn ky_breakpoints(&self, cut: f64) -> Vec<f64> {
        let scale = cut / self.numerics.ky_cutoff_factor;
        let mut pts = vec![0.0];
        for s in [2.0, 10.0] {
            let b = s * scale;
            if b < cut {
                pts.push(b);
            }
        }
        pts.push(cut);
        pts
    }
}

fn sum_segments<F: Fn(f64) -> Complex64>(
    f: F,
    pts: &[f64],
    tol: Tol,
    max_subdivisions: usize,
) -> (Complex64, f64, bool) {
    let mut value = Complex64::new(0.0, 0.0);
    let mut err = 0.0;
    let mut converged = true;
    for pair in pts.windows(2) {
        let part = integrate_adaptive_c(&f, pair[0], pair[1], tol, max_subdivisions);
        value += part.value;
        err += part.error_estimate;
        converged &= part.converged;
    }
    (value, err, converged)
}

/// Table of the spectral kernel at the electron line, reusable across all
/// spatial evaluations of a map or sweep for one (material, β) pair. Built
/// by interval bisection until 4-point interpolation reproduces direct
/// evaluation within the requested tolerance along probe lines.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelGrid {
    pub beta: f64,
    pub e_nodes: Vec<f64>,
    pub ky_nodes: Vec<f64>,
    /// Row-major [e][ky] table of Im(symmetric part).
    pub im_sym: Vec<f64>,
    /// Row-major [e][ky] table of Im(antisymmetric part).
    pub im_asym: Vec<f64>,
    /// Largest |Im sym| on the grid (interpolation error scale).
    pub scale: f64,
}

/// Cubic Lagrange weights of a 4-node stencil at x.
fn lagrange4(x: f64, xs: &[f64; 4]) -> [f64; 4] {
    let mut w = [0.0; 4];
    for (j, wj) in w.iter_mut().enumerate() {
        let mut p = 1.0;
        for k in 0..4 {
            if k != j {
                p *= (x - xs[k]) / (xs[j] - xs[k]);
            }
        }
        *wj = p;
    }
    w
}

/// Stencil start index for a query in sorted nodes.
fn stencil_start(nodes: &[f64], x: f64) -> usize {
    let i = nodes.partition_point(|&n| n <= x).saturating_sub(1);
    i.saturating_sub(1).min(nodes.len() - 4)
}

/// Insert refinement nodes until cubic interpolation through the current
/// nodes reproduces every probe profile at interval midpoints within tol.
fn refine_nodes(
    profiles: &mut dyn FnMut(f64) -> Result<Vec<f64>>,
    seed: Vec<f64>,
    tol_abs: f64,
    cap: usize,
) -> Result<Vec<f64>> {
    let mut nodes = seed;
    nodes.sort_by(f64::total_cmp);
    nodes.dedup();
    assert!(nodes.len() >= 4, "refine_nodes: need at least 4 seed nodes");
    let mut values: Vec<Vec<f64>> = nodes.iter().map(|&x| profiles(x)).collect::<Result<_>>()?;
    loop {
        let mut inserts: Vec<(f64, Vec<f64>)> = Vec::new();
        for i in 0..nodes.len() - 1 {
            let mid = 0.5 * (nodes[i] + nodes[i + 1]);
            if mid <= nodes[i] || mid >= nodes[i + 1] {
                continue; // interval at floating-point resolution
            }
            let s = stencil_start(&nodes, mid);
            let xs = [nodes[s], nodes[s + 1], nodes[s + 2], nodes[s + 3]];
            let w = lagrange4(mid, &xs);
            let direct = profiles(mid)?;
            let bad = direct.iter().enumerate().any(|(p, &dv)| {
                let interp: f64 = (0..4).map(|j| w[j] * values[s + j][p]).sum();
                (interp - dv).abs() > tol_abs
            });
            if bad {
                inserts.push((mid, direct));
            }
        }
        if inserts.is_empty() || nodes.len() + inserts.len() > cap {
            break;
        }
        for (x, v) in inserts {
            let pos = nodes.partition_point(|&n| n < x);
            nodes.insert(pos, x);
            values.insert(pos, v);
        }
    }
    Ok(nodes)
}

impl KernelGrid {
    /// Tabulate the kernel for the context's (material, β). The k_y range
    /// covers the largest cutoff any admissible z̃ can request,
    /// ky_cutoff_factor/z_floor.
    pub fn build(ctx: &ResponseContext) -> Result<Self> {
        let e_max = ctx.numerics.e_max;
        let ky_max = ctx.numerics.ky_cutoff_factor / ctx.numerics.z_floor;
        // Interpolation error budget: relative to the kernel peak, never
        // tighter than the integrals themselves need.
        let probe_kys: Vec<f64> = [1e-4, 1e-3, 1e-2, 1e-1]
            .iter()
            .map(|s| s * ky_max)
            .collect();

        // First pass: coarse scale estimate along the probe lines.
        let mut scale = 0.0f64;
        for j in 1..=32 {
            let e = e_max * j as f64 / 32.0;
            for &ky in &probe_kys {
                let (s, a) = ctx.kernel_point(e, ky)?;
                scale = scale.max(s.abs()).max(a.abs());
            }
        }
        let tol_abs = scale.max(1e-300) * ctx.numerics.rel_tol.max(1e-7);

        let e_seed: Vec<f64> = {
            let mut s: Vec<f64> = (0..=32).map(|j| e_max * 1e-6 + (e_max - e_max * 1e-6) * j as f64 / 32.0).collect();
            s.extend(ctx.energy_breakpoints().into_iter().filter(|&e| e > e_max * 1e-6));
            s
        };
        let e_nodes = refine_nodes(
            &mut |e| {
                probe_kys
                    .iter()
                    .map(|&ky| ctx.kernel_point(e, ky).map(|(s, a)| s + a))
                    .collect()
            },
            e_seed,
            tol_abs,
            700,
        )?;

        let probe_es: Vec<f64> = {
            let mut p: Vec<f64> = ctx
                .material
                .oscillators
                .iter()
                .map(|o| o.resonance_energy)
                .collect();
            p.push(0.5 * e_max);
            p.push(0.1 * e_max);
            p.sort_by(f64::total_cmp);
            p.dedup();
            p
        };
        // Geometric seed: the kernel varies on the k_ω and 1/d scales at
        // small k_y and is featureless in log k_y far beyond them.
        let ky_seed: Vec<f64> = {
            let mut s = vec![0.0];
            let k0 = ky_max * 1e-5;
            let n = 40;
            for j in 0..=n {
                s.push(k0 * (ky_max / k0).powf(j as f64 / n as f64));
            }
            s
        };
        let ky_nodes = refine_nodes(
            &mut |ky| {
                probe_es
                    .iter()
                    .map(|&e| ctx.kernel_point(e, ky.max(ky_max * 1e-9)).map(|(s, a)| s + a))
                    .collect()
            },
            ky_seed,
            tol_abs,
            700,
        )?;

        let mut im_sym = Vec::with_capacity(e_nodes.len() * ky_nodes.len());
        let mut im_asym = Vec::with_capacity(e_nodes.len() * ky_nodes.len());
        for &e in &e_nodes {
            for &ky in &ky_nodes {
                let (s, a) = ctx.kernel_point(e, ky.max(ky_max * 1e-9))?;
                im_sym.push(s);
                im_asym.push(a);
            }
        }
        Ok(Self {
            beta: ctx.beta,
            e_nodes,
            ky_nodes,
            im_sym,
            im_asym,
            scale,
        })
    }

    /// Bicubic (tensor Lagrange) interpolation of (Im sym, Im asym);
    /// queries are clamped to the tabulated rectangle.
    pub fn interpolate(&self, energy_ev: f64, ky: f64) -> (f64, f64) {
        let e = energy_ev.clamp(self.e_nodes[0], *self.e_nodes.last().unwrap());
        let k = ky.clamp(self.ky_nodes[0], *self.ky_nodes.last().unwrap());
        let si = stencil_start(&self.e_nodes, e);
        let sj = stencil_start(&self.ky_nodes, k);
        let we = lagrange4(
            e,
            &[
                self.e_nodes[si],
                self.e_nodes[si + 1],
                self.e_nodes[si + 2],
                self.e_nodes[si + 3],
            ],
        );
        let wk = lagrange4(
            k,
            &[
                self.ky_nodes[sj],
                self.ky_nodes[sj + 1],
                self.ky_nodes[sj + 2],
                self.ky_nodes[sj + 3],
            ],
        );
        let n_ky = self.ky_nodes.len();
        let mut s = 0.0;
        let mut a = 0.0;
        for ie in 0..4 {
            let row = (si + ie) * n_ky + sj;
            let mut rs = 0.0;
            let mut ra = 0.0;
            for jk in 0..4 {
                rs += wk[jk] * self.im_sym[row + jk];
                ra += wk[jk] * self.im_asym[row + jk];
            }
            s += we[ie] * rs;
            a += we[ie] * ra;
        }
        (s, a)
    }
}

/// Kernel source for the response integrals: direct reflection-matrix
/// evaluation, or the tabulated grid for maps and sweeps.
#[derive(Clone, Copy)]
pub enum KernelSource<'a> {
    Direct,
    Grid(&'a KernelGrid),
}

impl KernelSource<'_> {
    pub(crate) fn eval(&self, ctx: &ResponseContext, energy_ev: f64, ky: f64) -> Result<(f64, f64)> {
        match self {
            KernelSource::Direct => ctx.kernel_point(energy_ev, ky),
            KernelSource::Grid(g) => Ok(g.interpolate(energy_ev, ky)),
        }
    }
}

/// Both interaction exponents at (x̃, ỹ, z̃). The symmetric channel carries
/// cos(k_yỹ)·Im(sym), the antisymmetric one sin(k_yỹ)·Im(asym), both under
/// the envelope e^{qz̃}/q and the longitudinal modulation cos(k_ωx̃/β).
pub fn delta_point(
    ctx: &ResponseContext,
    kernel: KernelSource,
    x_tilde: f64,
    y_tilde: f64,
    z_tilde: f64,
) -> Result<DeltaPoint> {
    let c = delta_point_complex(ctx, kernel, x_tilde, y_tilde, z_tilde)?;
    Ok(DeltaPoint {
        x_tilde,
        y_tilde,
        z_tilde,
        delta_s: c.delta_s.re,
        delta_a: c.delta_a.re,
        error: c.error,
    })
}

/// Interaction exponents with the full complex longitudinal modulation
/// e^{−ik_ωx̃/β} retained; the energy-spectrum transform needs the phase.
#[derive(Debug, Clone, Copy)]
pub struct DeltaComplex {
    pub delta_s: Complex64,
    pub delta_a: Complex64,
    pub error: f64,
}

/// Quadrature tolerance for a given kernel source: integrating an
/// interpolated table tighter than its own interpolation error buys
/// nothing and costs deep subdivision, so grid sources get a floor.
fn source_tol(ctx: &ResponseContext, kernel: &KernelSource) -> Tol {
    let tol = ctx.numerics.tol();
    match kernel {
        KernelSource::Direct => tol,
        KernelSource::Grid(_) => Tol::new(tol.rel.max(1e-6), tol.abs.max(1e-12)),
    }
}

pub fn delta_point_complex(
    ctx: &ResponseContext,
    kernel: KernelSource,
    x_tilde: f64,
    y_tilde: f64,
    z_tilde: f64,
) -> Result<DeltaComplex> {
    ctx.check_z_tilde(z_tilde)?;
    let cut = ctx.numerics.ky_cutoff_factor / z_tilde.abs();
    let tol = source_tol(ctx, &kernel);
    let inner_tol = Tol::new(tol.rel * 0.1, tol.abs * 0.1);
    let ky_pts = ctx.ky_breakpoints(cut);
    let e_pts = ctx.energy_breakpoints();

    // Two real inner integrals packed into one complex pass:
    // re ← cos(k_yỹ)·w·Im(sym),  im ← sin(k_yỹ)·w·Im(asym).
    let run = |modulation: &dyn Fn(f64) -> f64| {
        sum_segments(
            |e| {
                let inner = sum_segments(
                    |ky| {
                        let q = ctx.envelope_q(e, ky);
                        match kernel.eval(ctx, e, ky) {
                            Ok((s, a)) => {
                                let w = (q * z_tilde).exp() / q;
                                Complex64::new(
                                    (ky * y_tilde).cos() * w * s,
                                    (ky * y_tilde).sin() * w * a,
                                )
                            }
                            Err(_) => Complex64::new(f64::NAN, f64::NAN),
                        }
                    },
                    &ky_pts,
                    inner_tol,
                    ctx.numerics.max_subdivisions,
                );
                modulation(e) * inner.0
            },
            &e_pts,
            tol,
            ctx.numerics.max_subdivisions,
        )
    };

    // The longitudinal modulation e^{−ik_ωx̃/β} multiplies both packed
    // channels; evaluating it as a complex factor would mix them, so its
    // cos and sin parts are integrated in separate passes (the sin pass is
    // skipped at x̃ = 0, where it vanishes identically).
    let (val_cos, err_cos, conv_cos) =
        run(&|e: f64| (ctx.constants.k_omega(e) * x_tilde / ctx.beta).cos());
    let (val_sin, err_sin, conv_sin) = if x_tilde == 0.0 {
        (Complex64::new(0.0, 0.0), 0.0, true)
    } else {
        run(&|e: f64| -(ctx.constants.k_omega(e) * x_tilde / ctx.beta).sin())
    };
    if !val_cos.is_finite() || !val_sin.is_finite() {
        return Err(Error::Domain(
            "delta: kernel evaluation failed inside the quadrature".into(),
        ));
    }
    let pref = ctx.prefactor();
    let value_s = pref * Complex64::new(2.0 * val_cos.re, 2.0 * val_sin.re);
    let value_a = pref * Complex64::new(2.0 * val_cos.im, 2.0 * val_sin.im);
    let error = pref * 2.0 * (err_cos + err_sin);
    if !(conv_cos && conv_sin) {
        let scale = value_s.norm().max(value_a.norm());
        if error > 100.0 * tol.abs.max(tol.rel * scale) {
            return Err(Error::QuadratureNonConvergence {
                context: format!(
                    "delta at (x̃,ỹ,z̃)=({x_tilde},{y_tilde},{z_tilde})"
                ),
                error_estimate: error,
            });
        }
    }
    Ok(DeltaComplex {
        delta_s: value_s,
        delta_a: value_a,
        error,
    })
}

/// Δ_S(x̃, ỹ, z̃) with quadrature metadata.
pub fn delta_s(
    ctx: &ResponseContext,
    kernel: KernelSource,
    x_tilde: f64,
    y_tilde: f64,
    z_tilde: f64,
) -> Result<DeltaPoint> {
    delta_point(ctx, kernel, x_tilde, y_tilde, z_tilde)
}

/// Δ_A(x̃, ỹ, z̃) with quadrature metadata.
pub fn delta_a(
    ctx: &ResponseContext,
    kernel: KernelSource,
    x_tilde: f64,
    y_tilde: f64,
    z_tilde: f64,
) -> Result<DeltaPoint> {
    delta_point(ctx, kernel, x_tilde, y_tilde, z_tilde)
}

/// ∫dE E^p · 2∫dk_y k_y^m e^{qz̃}/q · Im(kernel channel), times the global
/// prefactor: the common engine behind the analytic derivative kernels.
fn kernel_moment(
    ctx: &ResponseContext,
    kernel: KernelSource,
    z_tilde: f64,
    e_power: i32,
    ky_power: i32,
    use_asym: bool,
) -> Result<f64> {
    ctx.check_z_tilde(z_tilde)?;
    let cut = ctx.numerics.ky_cutoff_factor / z_tilde.abs();
    let tol = source_tol(ctx, &kernel);
    let inner_tol = Tol::new(tol.rel * 0.1, tol.abs * 0.1);
    let ky_pts = ctx.ky_breakpoints(cut);
    let e_pts = ctx.energy_breakpoints();
    let (value, _err, _conv) = sum_segments(
        |e| {
            let inner = sum_segments(
                |ky| {
                    let q = ctx.envelope_q(e, ky);
                    match kernel.eval(ctx, e, ky) {
                        Ok((s, a)) => {
                            let chan = if use_asym { a } else { s };
                            Complex64::from(
                                ky.powi(ky_power) * (q * z_tilde).exp() / q * chan,
                            )
                        }
                        Err(_) => Complex64::from(f64::NAN),
                    }
                },
                &ky_pts,
                inner_tol,
                ctx.numerics.max_subdivisions,
            );
            Complex64::from(e.powi(e_power) * 2.0 * inner.0.re)
        },
        &e_pts,
        tol,
        ctx.numerics.max_subdivisions,
    );
    if !value.re.is_finite() {
        return Err(Error::Domain(
            "kernel moment: evaluation failed inside the quadrature".into(),
        ));
    }
    Ok(ctx.prefactor() * value.re)
}

/// A(Z) = ħ ∂Δ_A/∂ỹ at ỹ = 0, x̃ = 0, z̃ = 2Z: the mean lateral momentum
/// kernel, in eV (momentum times c). sin(k_yỹ) differentiates to k_y.
pub fn lateral_kernel_a(ctx: &ResponseContext, kernel: KernelSource, z: f64) -> Result<f64> {
    Ok(ctx.constants.hbar_c * kernel_moment(ctx, kernel, 2.0 * z, 0, 1, true)?)
}

/// S(Z) = −ħ² ∂²Δ_S/∂ỹ² at ỹ = 0, z̃ = 2Z: the lateral momentum-spread
/// kernel, in eV². cos(k_yỹ) differentiates to −k_y², sign absorbed.
pub fn spread_kernel_s(ctx: &ResponseContext, kernel: KernelSource, z: f64) -> Result<f64> {
    let hc = ctx.constants.hbar_c;
    Ok(hc * hc * kernel_moment(ctx, kernel, 2.0 * z, 0, 2, false)?)
}

/// σ⁽ⁿ⁾(Z) = [(ħV/i) ∂/∂x̃]ⁿ Δ_S(x̃, 0, 2Z) at x̃ = 0, n ∈ {1, 2}:
/// the energy-loss kernels in eVⁿ. Each application of the operator pulls
/// down −E from the modulation e^{−ik_ωx̃/β}, so σ⁽¹⁾ < 0 under a
/// nonnegative spectral weight and σ⁽²⁾ ≥ 0 always.
pub fn sigma_n(ctx: &ResponseContext, kernel: KernelSource, z: f64, n: u8) -> Result<f64> {
    match n {
        1 => Ok(-kernel_moment(ctx, kernel, 2.0 * z, 1, 0, false)?),
        2 => kernel_moment(ctx, kernel, 2.0 * z, 2, 0, false),
        _ => Err(Error::Domain(format!(
            "sigma_n: only orders 1 and 2 exist, got {n}"
        ))),
    }
}

/// Per-energy spectral weight g(E; z̃) ≥ 0 of the symmetric exponent:
/// Δ_S(0,0,z̃) = ∫ g dE, σ⁽¹⁾ = −∫E g dE, in 1/eV.
pub fn loss_weight(
    ctx: &ResponseContext,
    kernel: KernelSource,
    z_tilde: f64,
    energy_ev: f64,
) -> Result<f64> {
    ctx.check_z_tilde(z_tilde)?;
    if energy_ev <= 0.0 || energy_ev > ctx.numerics.e_max {
        return Ok(0.0);
    }
    let cut = ctx.numerics.ky_cutoff_factor / z_tilde.abs();
    let tol = source_tol(ctx, &kernel);
    let ky_pts = ctx.ky_breakpoints(cut);
    let (value, _e, _c) = sum_segments(
        |ky| {
            let q = ctx.envelope_q(energy_ev, ky);
            match kernel.eval(ctx, energy_ev, ky) {
                Ok((s, _)) => Complex64::from((q * z_tilde).exp() / q * s),
                Err(_) => Complex64::from(f64::NAN),
            }
        },
        &ky_pts,
        tol,
        ctx.numerics.max_subdivisions,
    );
    if !value.re.is_finite() {
        return Err(Error::Domain(
            "loss weight: evaluation failed inside the quadrature".into(),
        ));
    }
    Ok(ctx.prefactor() * 2.0 * value.re)
}

/// Elastic phase Φ(Z): principal-value k_x integral of the reflected
/// kernel at coincident transverse coordinates. Cancels from every
/// shipped observable (only differences at equal Z survive there); maps
/// may skip it.
///
/// The azimuthal integral against the simple pole 1/(k_x + k_ω/β) is done
/// in closed form. With a = k_ω/β, the kernel's even channel is
/// A(k∥)sin²θ + B(k∥)cos²θ, and for k∥ < a the principal value gives
/// ∫dθ sin²θ/(a + k∥cosθ) = 2π/(a + s) and ∫dθ cos²θ/(a + k∥cosθ)
/// = 2πa/(s(a + s)) with s = √(a² − k∥²), while for k∥ > a the pole
/// circle is crossed and the same integrals collapse to ±2πa/k∥². The
/// odd channel integrates to zero over the full circle. What remains is
/// one regular radial integral per photon energy, parameterized by the
/// vacuum-side k_z so the light-line inverse square root cancels and the
/// integrable 1/s at the pole-circle crossing is absorbed by a square-root
/// substitution.
pub fn phase_phi(ctx: &ResponseContext, z: f64) -> Result<f64> {
    ctx.check_z_tilde(2.0 * z)?;
    let tol = ctx.numerics.tol();
    let inner_tol = Tol::new(tol.rel * 0.1, tol.abs * 0.1);
    let max_sub = ctx.numerics.max_subdivisions;
    let eps1 = ctx.geometry.env.eps1;
    let decay = 2.0 * z.abs();
    let two_pi = 2.0 * std::f64::consts::PI;

    // Radial integral of the pole-weighted kernel at one photon energy.
    let energy_slice = |e: f64| -> f64 {
        if e <= 0.0 {
            return 0.0;
        }
        let kw = ctx.constants.k_omega(e);
        let kw2e = kw * kw * eps1;
        let a = kw / ctx.beta;
        let k_light = kw * eps1.sqrt();
        // a > k_light is the no-Cherenkov condition enforced at build.
        let ua = (a * a - kw2e).sqrt();

        let refl = |kp: f64| -> Option<(Complex64, Complex64)> {
            match reflection_matrix(e, kp, &ctx.constants, &ctx.material, &ctx.geometry) {
                Ok(r) => Some((r.r_ss, r.r_pp)),
                Err(_) => None,
            }
        };

        // Propagating region k∥ < k_ω√ε₁ in the variable u = k_1z (real):
        // k∥ dk∥ = u du cancels the kernel's 1/k_1z.
        let prop = integrate_adaptive(
            |u: f64| {
                let kp2 = (kw2e - u * u).max(0.0);
                let Some((r_ss, r_pp)) = refl(kp2.sqrt()) else {
                    return f64::NAN;
                };
                let s = (a * a - kp2).sqrt();
                let js = two_pi / (a + s);
                let j2 = two_pi * a / (s * (a + s));
                let ph = Complex64::new(0.0, -2.0 * u * z).exp();
                js * (ph * r_ss).re + j2 * (u * u / kw2e) * (ph * r_pp).re
            },
            0.0,
            k_light,
            inner_tol,
            max_sub,
        );

        // Evanescent side below the pole circle, u = |k_1z| ∈ (0, u_a),
        // mapped through u = u_a − t².
        let below = integrate_adaptive(
            |t: f64| {
                let u = ua - t * t;
                let kp2 = u * u + kw2e;
                let Some((r_ss, r_pp)) = refl(kp2.sqrt()) else {
                    return f64::NAN;
                };
                let root = (ua + u).sqrt();
                let s = t * root;
                let js = two_pi / (a + s);
                // j2·t stays bounded as t → 0.
                let j2_t = two_pi * a / ((a + s) * root);
                let env = (2.0 * u * z).exp();
                let val_a = js * env * r_ss.im * t;
                let val_b = -j2_t * env * (u * u / kw2e) * r_pp.im;
                2.0 * (val_a + val_b)
            },
            0.0,
            ua.sqrt(),
            inner_tol,
            max_sub,
        );

        // Beyond the pole circle the principal value of the angular
        // integral collapses to ±2πa/k∥²; the envelope e^{2uz} sets the
        // cutoff.
        let u_max = ua + ctx.numerics.ky_cutoff_factor / decay;
        let beyond = integrate_adaptive(
            |u: f64| {
                let kp2 = u * u + kw2e;
                let Some((r_ss, r_pp)) = refl(kp2.sqrt()) else {
                    return f64::NAN;
                };
                let js = two_pi * a / kp2;
                js * (2.0 * u * z).exp() * (r_ss.im + (u * u / kw2e) * r_pp.im)
            },
            ua,
            u_max,
            inner_tol,
            max_sub,
        );
        prop.value.re + below.value.re + beyond.value.re
    };

    let e_pts = ctx.energy_breakpoints();
    let mut value = 0.0;
    let mut outer_err = 0.0;
    for pair in e_pts.windows(2) {
        let part = integrate_adaptive(&energy_slice, pair[0], pair[1], tol, max_sub);
        value += part.value.re;
        outer_err += part.error_estimate;
    }
    if !value.is_finite() {
        return Err(Error::QuadratureNonConvergence {
            context: format!("phase_phi at Z = {z}"),
            error_estimate: outer_err,
        });
    }
    let pref = ctx.geometry.l_eff * ctx.constants.fine_structure
        / (2.0 * std::f64::consts::PI * std::f64::consts::PI * ctx.constants.hbar_c);
    Ok(pref * value)
}
