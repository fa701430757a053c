//! Beam-averaged observables: the lateral-momentum distribution and its
//! moments, the energy-loss spectrum and its moments, and the
//! weak-coupling loss probability Γ(E).
//!
//! All of them are Gaussian averages of Z-local kernels over the incident
//! profile |φ_i|², performed with Gauss–Hermite nodes matched to the
//! beam width. The distribution routes go through per-node spectral
//! tables (k_y marginals for momentum, per-energy loss weights for the
//! spectrum) so that the O(10²…10⁴) transform evaluations never touch
//! the reflection matrix directly.

use serde::{Deserialize, Serialize};

use crate::electron::ElectronParams;
use crate::quadrature::{integrate_adaptive, Tol};
use crate::response::{KernelSource, ResponseContext};
use crate::{Error, Result};

/// Sampled one-dimensional probability density. The axis is momentum in
/// eV (p·c) or energy in eV; the density carries the inverse unit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Distribution1D {
    pub axis: Vec<f64>,
    pub density: Vec<f64>,
    /// Trapezoidal ∫density − 1 over the sampled axis.
    pub normalization_defect: f64,
}

impl Distribution1D {
    fn new(axis: Vec<f64>, density: Vec<f64>) -> Result<Self> {
        assert_eq!(axis.len(), density.len());
        let norm = trapezoid(&axis, &density);
        let defect = norm - 1.0;
        let peak = density.iter().fold(0.0f64, |m, &d| m.max(d));
        if let Some(&bad) = density.iter().find(|&&d| d < -1e-9 * peak) {
            return Err(Error::Domain(format!(
                "distribution density developed negative weight {bad:e} \
                 (peak {peak:e}); the transform did not converge"
            )));
        }
        if defect.abs() > 1e-3 {
            return Err(Error::Domain(format!(
                "distribution normalization defect {defect:e} exceeds 1e-3; \
                 the axis window or the transform resolution is insufficient"
            )));
        }
        Ok(Self {
            axis,
            density,
            normalization_defect: defect,
        })
    }
}

/// First two moments of an observable, with the beam-only reference where
/// it applies (momentum only).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MomentReport {
    /// Mean momentum in eV, or mean energy *shift* ⟨E⟩ − E_i in eV.
    pub mean: f64,
    pub variance: f64,
    /// mean/√variance; the figure of merit for resolving the asymmetry.
    pub peak_factor: Option<f64>,
    /// Momentum variance of the unperturbed beam, (ħc/σ_y)².
    pub initial_variance: Option<f64>,
}

fn trapezoid(axis: &[f64], density: &[f64]) -> f64 {
    let mut acc = 0.0;
    for j in 0..axis.len() - 1 {
        acc += 0.5 * (density[j] + density[j + 1]) * (axis[j + 1] - axis[j]);
    }
    acc
}

/// Gauss–Hermite nodes and weights for ∫e^{−t²}f(t)dt ≈ Σ wᵢ f(tᵢ),
/// computed by Newton iteration on the orthonormal Hermite recurrence.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 2 && n <= 128);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = (n + 1) / 2;
    let mut z = 0.0f64;
    for i in 0..m {
        z = match i {
            0 => (2.0 * n as f64 + 1.0).sqrt()
                - 1.85575 * (2.0 * n as f64 + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * (n as f64).powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = std::f64::consts::PI.powf(-0.25);
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = z * (2.0 / (j as f64 + 1.0)).sqrt() * p2
                    - (j as f64 / (j as f64 + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * n as f64).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() < 1e-15 {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Beam average over Z expressed in the pair coordinate z̃ = 2Z: nodes of
/// ∫dZ|φ_i|²F(2Z) with weights normalized to Σ = 1 before dropping.
/// Nodes violating the evaluation floor are dropped and their (tiny,
/// aloof-suppressed) weight recorded.
#[derive(Debug, Clone)]
pub struct ZAverage {
    /// z̃ = 2Z at each retained node, strictly below −2·z_floor.
    pub z_tilde: Vec<f64>,
    /// Normalized weights of the retained nodes.
    pub weights: Vec<f64>,
    pub dropped_weight: f64,
}

impl ZAverage {
    pub fn build(electron: &ElectronParams, z_floor: f64, n_nodes: usize) -> Self {
        let (t, w) = gauss_hermite(n_nodes);
        let inv_sqrt_pi = 1.0 / std::f64::consts::PI.sqrt();
        let mut z_tilde = Vec::new();
        let mut weights = Vec::new();
        let mut dropped = 0.0;
        for i in 0..t.len() {
            // Z = Z₀ + σ_z t/√2 under |φ_i|² ∝ e^{−2(Z−Z₀)²/σ_z²}.
            let zt = 2.0 * electron.z_center() + 2.0_f64.sqrt() * electron.sigma_z * t[i];
            let wi = w[i] * inv_sqrt_pi;
            if zt < -2.0 * z_floor {
                z_tilde.push(zt);
                weights.push(wi);
            } else {
                dropped += wi;
            }
        }
        Self {
            z_tilde,
            weights,
            dropped_weight: dropped,
        }
    }

    fn average(&self, values: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(values)
            .map(|(w, v)| w * v)
            .sum()
    }
}

fn check_beta(ctx: &ResponseContext, electron: &ElectronParams) -> Result<()> {
    if (ctx.beta - electron.beta).abs() > 1e-14 {
        return Err(Error::Domain(format!(
            "electron beta {} disagrees with the response context beta {}",
            electron.beta, ctx.beta
        )));
    }
    Ok(())
}

/// Number of Gauss–Hermite nodes used for every beam average.
pub const GH_NODES: usize = 32;

/// Per-node derivative kernels averaged over the beam, per unit effective
/// path length: sweeps over L reuse them by pure scaling.
#[derive(Debug, Clone)]
pub struct KernelAverages {
    pub a_mean: f64,
    pub a_sq_mean: f64,
    pub s_mean: f64,
    pub sigma1_mean: f64,
    pub sigma1_sq_mean: f64,
    pub sigma2_mean: f64,
    pub l_eff: f64,
}

impl KernelAverages {
    pub fn build(
        ctx: &ResponseContext,
        kernel: KernelSource,
        electron: &ElectronParams,
    ) -> Result<Self> {
        Self::build_parts(ctx, kernel, electron, true, true)
    }

    /// Momentum kernels only; the energy fields are left NaN.
    pub fn build_momentum(
        ctx: &ResponseContext,
        kernel: KernelSource,
        electron: &ElectronParams,
    ) -> Result<Self> {
        Self::build_parts(ctx, kernel, electron, true, false)
    }

    /// Energy kernels only; the momentum fields are left NaN.
    pub fn build_energy(
        ctx: &ResponseContext,
        kernel: KernelSource,
        electron: &ElectronParams,
    ) -> Result<Self> {
        Self::build_parts(ctx, kernel, electron, false, true)
    }

    fn build_parts(
        ctx: &ResponseContext,
        kernel: KernelSource,
        electron: &ElectronParams,
        momentum: bool,
        energy: bool,
    ) -> Result<Self> {
        check_beta(ctx, electron)?;
        let za = ZAverage::build(electron, ctx.numerics.z_floor, GH_NODES);
        let mut a = Vec::new();
        let mut s = Vec::new();
        let mut s1 = Vec::new();
        let mut s2 = Vec::new();
        for &zt in &za.z_tilde {
            let z = 0.5 * zt;
            if momentum {
                a.push(crate::response::lateral_kernel_a(ctx, kernel, z)?);
                s.push(crate::response::spread_kernel_s(ctx, kernel, z)?);
            }
            if energy {
                s1.push(crate::response::sigma_n(ctx, kernel, z, 1)?);
                s2.push(crate::response::sigma_n(ctx, kernel, z, 2)?);
            }
        }
        let avg = |v: &[f64]| if v.is_empty() { f64::NAN } else { za.average(v) };
        let a_sq: Vec<f64> = a.iter().map(|v| v * v).collect();
        let s1_sq: Vec<f64> = s1.iter().map(|v| v * v).collect();
        Ok(Self {
            a_mean: avg(&a),
            a_sq_mean: avg(&a_sq),
            s_mean: avg(&s),
            sigma1_mean: avg(&s1),
            sigma1_sq_mean: avg(&s1_sq),
            sigma2_mean: avg(&s2),
            l_eff: ctx.geometry.l_eff,
        })
    }

    /// Lateral-momentum moments for an effective path length `l_eff`,
    /// exploiting the exact linearity of every kernel in L.
    pub fn momentum_report(
        &self,
        constants: &crate::units::PhysicalConstants,
        electron: &ElectronParams,
        l_eff: f64,
    ) -> MomentReport {
        let scale = l_eff / self.l_eff;
        let initial = (constants.hbar_c / electron.sigma_y).powi(2);
        let mean = scale * self.a_mean;
        let variance = initial
            + scale * self.s_mean
            + (scale * scale) * (self.a_sq_mean - self.a_mean * self.a_mean);
        MomentReport {
            mean,
            variance,
            peak_factor: Some(mean / variance.sqrt()),
            initial_variance: Some(initial),
        }
    }

    /// Energy moments (mean as shift from E_i) for a path length `l_eff`.
    pub fn energy_report(&self, l_eff: f64) -> MomentReport {
        let scale = l_eff / self.l_eff;
        let mean = scale * self.sigma1_mean;
        let variance = scale * self.sigma2_mean
            + (scale * scale) * (self.sigma1_sq_mean - self.sigma1_mean * self.sigma1_mean);
        MomentReport {
            mean,
            variance,
            peak_factor: None,
            initial_variance: None,
        }
    }
}

/// ⟨P_y⟩ and Var P_y from the analytic kernels A(Z), S(Z).
pub fn lateral_momentum_moments(
    ctx: &ResponseContext,
    kernel: KernelSource,
    electron: &ElectronParams,
) -> Result<MomentReport> {
    let ka = KernelAverages::build_momentum(ctx, kernel, electron)?;
    Ok(ka.momentum_report(&ctx.constants, electron, ctx.geometry.l_eff))
}

/// ⟨E⟩ − E_i and Var E from the analytic kernels σ⁽¹⁾, σ⁽²⁾.
pub fn energy_moments(
    ctx: &ResponseContext,
    kernel: KernelSource,
    electron: &ElectronParams,
) -> Result<MomentReport> {
    let ka = KernelAverages::build_energy(ctx, kernel, electron)?;
    Ok(ka.energy_report(ctx.geometry.l_eff))
}

/// k_y-marginal tables of the interaction exponents at one z̃: Δ_S and Δ_A
/// at arbitrary ỹ reduce to cos/sin transforms of these.
struct KyMarginal {
    ky: Vec<f64>,
    m_s: Vec<f64>,
    m_a: Vec<f64>,
}

impl KyMarginal {
    fn build(ctx: &ResponseContext, kernel: KernelSource, z_tilde: f64) -> Result<Self> {
        let cut = ctx.numerics.ky_cutoff_factor / z_tilde.abs();
        // Dense low-k_y range (structure on the k_ω and 1/|z̃| scales) plus
        // a coarser tail.
        let n1 = 1024;
        let n2 = 1024;
        let split = 0.1 * cut;
        let mut ky = Vec::with_capacity(n1 + n2 + 1);
        for j in 0..n1 {
            ky.push(split * j as f64 / n1 as f64);
        }
        for j in 0..=n2 {
            ky.push(split + (cut - split) * j as f64 / n2 as f64);
        }
        let tol = Tol::new(ctx.numerics.rel_tol.max(1e-9), ctx.numerics.abs_tol);
        let e_max = ctx.numerics.e_max;
        let mut m_s = Vec::with_capacity(ky.len());
        let mut m_a = Vec::with_capacity(ky.len());
        let pref = ctx.prefactor();
        for &k in &ky {
            let kk = k.max(cut * 1e-12);
            let qz = |e: f64| (ctx.envelope_q(e, kk) * z_tilde).exp() / ctx.envelope_q(e, kk);
            let s = integrate_adaptive(
                |e| match kernel.eval(ctx, e, kk) {
                    Ok((s, _)) => qz(e) * s,
                    Err(_) => f64::NAN,
                },
                0.0,
                e_max,
                tol,
                ctx.numerics.max_subdivisions,
            );
            let a = integrate_adaptive(
                |e| match kernel.eval(ctx, e, kk) {
                    Ok((_, a)) => qz(e) * a,
                    Err(_) => f64::NAN,
                },
                0.0,
                e_max,
                tol,
                ctx.numerics.max_subdivisions,
            );
            if !s.value.re.is_finite() || !a.value.re.is_finite() {
                return Err(Error::Domain(
                    "ky marginal: kernel evaluation failed".into(),
                ));
            }
            m_s.push(pref * s.value.re);
            m_a.push(pref * a.value.re);
        }
        Ok(Self { ky, m_s, m_a })
    }

    /// (Δ_S(0,ỹ,z̃), Δ_A(0,ỹ,z̃)) by piecewise-linear Filon transform:
    /// 2∫(cos k_yỹ)m_s dk_y and 2∫(sin k_yỹ)m_a dk_y.
    fn delta(&self, y_tilde: f64) -> (f64, f64) {
        let y = y_tilde;
        let mut ds = 0.0;
        let mut da = 0.0;
        for j in 0..self.ky.len() - 1 {
            let (k0, k1) = (self.ky[j], self.ky[j + 1]);
            let h = k1 - k0;
            if h == 0.0 {
                continue;
            }
            if (y * h).abs() < 1e-3 {
                // Oscillation negligible across the interval: Simpson on
                // the full product.
                let km = 0.5 * (k0 + k1);
                let fs0 = self.m_s[j] * (k0 * y).cos();
                let fs1 = self.m_s[j + 1] * (k1 * y).cos();
                let fsm = 0.5 * (self.m_s[j] + self.m_s[j + 1]) * (km * y).cos();
                ds += h / 6.0 * (fs0 + 4.0 * fsm + fs1);
                let fa0 = self.m_a[j] * (k0 * y).sin();
                let fa1 = self.m_a[j + 1] * (k1 * y).sin();
                let fam = 0.5 * (self.m_a[j] + self.m_a[j + 1]) * (km * y).sin();
                da += h / 6.0 * (fa0 + 4.0 * fam + fa1);
            } else {
                // Exact linear × trig antiderivatives.
                let (s0, c0) = (k0 * y).sin_cos();
                let (s1, c1) = (k1 * y).sin_cos();
                let slope_s = (self.m_s[j + 1] - self.m_s[j]) / h;
                let slope_a = (self.m_a[j + 1] - self.m_a[j]) / h;
                ds += (self.m_s[j + 1] * s1 - self.m_s[j] * s0) / y
                    + slope_s * (c1 - c0) / (y * y);
                da += (self.m_a[j] * c0 - self.m_a[j + 1] * c1) / y
                    + slope_a * (s1 - s0) / (y * y);
            }
        }
        (2.0 * ds, 2.0 * da)
    }
}

/// dP/dP_y on the given symmetric momentum grid (axis in eV = p·c).
pub fn lateral_momentum_distribution(
    ctx: &ResponseContext,
    kernel: KernelSource,
    electron: &ElectronParams,
    p_grid: &[f64],
) -> Result<Distribution1D> {
    check_beta(ctx, electron)?;
    let p_max = p_grid.last().copied().unwrap_or(0.0);
    let p_min = p_grid.first().copied().unwrap_or(0.0);
    let p0_width = ctx.constants.hbar_c / electron.sigma_y;
    if p_grid.len() < 8 || p_min > -6.0 * p0_width || p_max < 6.0 * p0_width {
        return Err(Error::Domain(format!(
            "momentum grid must be symmetric and cover at least ±6 initial \
             widths (±{:.3e} eV)",
            6.0 * p0_width
        )));
    }
    let za = ZAverage::build(electron, ctx.numerics.z_floor, GH_NODES);
    let hbar_c = ctx.constants.hbar_c;
    let sigma_y = electron.sigma_y;
    let tol = Tol::new(1e-9, 1e-16);

    let mut density = vec![0.0f64; p_grid.len()];
    for (node, &zt) in za.z_tilde.iter().enumerate() {
        let marg = KyMarginal::build(ctx, kernel, zt)?;
        let (ds0, _) = marg.delta(0.0);
        // I(p) = 2∫₀^∞ dỹ e^{−ỹ²/2σ_y²} e^{Δ_S(ỹ)−Δ_S(0)} cos(pỹ/ħc − Δ_A(ỹ))
        let y_max = 6.5 * sigma_y;
        let breaks: Vec<f64> = (0..=13).map(|j| y_max * j as f64 / 13.0).collect();
        for (ip, &p) in p_grid.iter().enumerate() {
            let mut val = 0.0;
            for pair in breaks.windows(2) {
                let r = integrate_adaptive(
                    |y| {
                        let (ds, da) = marg.delta(y);
                        (-y * y / (2.0 * sigma_y * sigma_y)).exp()
                            * (ds - ds0).exp()
                            * (p * y / hbar_c - da).cos()
                    },
                    pair[0],
                    pair[1],
                    tol,
                    ctx.numerics.max_subdivisions,
                );
                val += r.value.re;
            }
            // (1/4πħc)·(2/√π)w·φ̃ prefactors: autoconvolution supplies the
            // Gaussian weights; here the GH weight already includes them.
            density[ip] += za.weights[node]
                * (2.0 / hbar_c)
                * std::f64::consts::FRAC_1_PI
                * 0.5
                * val;
        }
    }
    Distribution1D::new(p_grid.to_vec(), density)
}

/// Per-energy loss weight g(E; z̃) tabulated on a uniform grid, the
/// building block of both the spectrum and the weak-coupling Γ.
struct LossTable {
    e0: f64,
    de: f64,
    g: Vec<f64>,
}

impl LossTable {
    fn build(
        ctx: &ResponseContext,
        kernel: KernelSource,
        z_tilde: f64,
        de: f64,
    ) -> Result<Self> {
        let n = (ctx.numerics.e_max / de).ceil() as usize;
        let mut g = Vec::with_capacity(n + 1);
        for j in 0..=n {
            let e = j as f64 * de;
            if e == 0.0 || e > ctx.numerics.e_max {
                g.push(0.0);
            } else {
                g.push(crate::response::loss_weight(ctx, kernel, z_tilde, e)?);
            }
        }
        Ok(Self { e0: 0.0, de, g })
    }

    fn total(&self) -> f64 {
        // Trapezoid; endpoints are zero by construction.
        self.de * self.g.iter().sum::<f64>()
    }

    fn sample(&self, e: f64) -> f64 {
        let x = (e - self.e0) / self.de;
        if x < 0.0 || x >= (self.g.len() - 1) as f64 {
            return 0.0;
        }
        let j = x.floor() as usize;
        let t = x - j as f64;
        self.g[j] * (1.0 - t) + self.g[j + 1] * t
    }
}

/// Discrete convolution of two uniformly sampled functions (same spacing),
/// trapezoid-consistent: (f∗g)[k] = h·Σ f[j]g[k−j].
fn convolve(f: &[f64], g: &[f64], h: f64) -> Vec<f64> {
    let mut out = vec![0.0; f.len() + g.len() - 1];
    for (j, &fj) in f.iter().enumerate() {
        if fj == 0.0 {
            continue;
        }
        for (k, &gk) in g.iter().enumerate() {
            out[j + k] += fj * gk * h;
        }
    }
    out
}

/// dP/dE of the transmitted electron around E_i, with the elastic line
/// broadened by a Gaussian instrumental width `sigma_e` (eV). Computed via
/// the Poisson (multiple-loss) expansion of the interaction exponent —
/// the exact Fourier pair of the Q-transform representation — truncated
/// when the next term's weight falls below 1e-12.
pub fn energy_spectrum(
    ctx: &ResponseContext,
    kernel: KernelSource,
    electron: &ElectronParams,
    e_grid: &[f64],
    sigma_e: f64,
) -> Result<Distribution1D> {
    check_beta(ctx, electron)?;
    if sigma_e <= 0.0 {
        return Err(Error::Domain("spectrum broadening must be > 0".into()));
    }
    let za = ZAverage::build(electron, ctx.numerics.z_floor, GH_NODES);
    let de = (sigma_e / 4.0).min(0.02);
    // Gaussian broadening kernel sampled on the same spacing.
    let nb = (6.0 * sigma_e / de).ceil() as usize;
    let broad: Vec<f64> = (-(nb as i64)..=nb as i64)
        .map(|j| {
            let x = j as f64 * de;
            (-0.5 * x * x / (sigma_e * sigma_e)).exp()
                / ((2.0 * std::f64::consts::PI).sqrt() * sigma_e)
        })
        .collect();
    let broad_offset = nb as f64 * de;

    let mut density = vec![0.0f64; e_grid.len()];
    for (node, &zt) in za.z_tilde.iter().enumerate() {
        let table = LossTable::build(ctx, kernel, zt, de)?;
        let delta0 = table.total();
        let elastic = (-delta0).exp();
        // Loss terms gⁿ*/n!, each broadened; accumulated on the loss axis
        // starting at −broad_offset.
        let mut term = table.g.clone();
        let mut factorial = 1.0;
        let mut loss_sum = convolve(&term, &broad, de);
        let mut order = 1usize;
        while delta0.powi(order as i32 + 1) / (factorial * (order + 1) as f64) > 1e-12 {
            term = convolve(&term, &table.g, de);
            order += 1;
            factorial *= order as f64;
            let contrib = convolve(&term, &broad, de);
            for (k, c) in contrib.iter().enumerate() {
                if k < loss_sum.len() {
                    loss_sum[k] += c / factorial;
                } else {
                    loss_sum.push(c / factorial);
                }
            }
        }
        let w = za.weights[node];
        for (ie, &e) in e_grid.iter().enumerate() {
            let loss = electron.e_i - e;
            // Elastic line.
            let x = loss / sigma_e;
            let line = (-0.5 * x * x).exp()
                / ((2.0 * std::f64::consts::PI).sqrt() * sigma_e);
            // Linear sample of the accumulated loss terms.
            let pos = (loss + broad_offset) / de;
            let inelastic = if pos < 0.0 || pos >= (loss_sum.len() - 1) as f64 {
                0.0
            } else {
                let j = pos.floor() as usize;
                let t = pos - j as f64;
                loss_sum[j] * (1.0 - t) + loss_sum[j + 1] * t
            };
            density[ie] += w * elastic * (line + inelastic);
        }
    }
    Distribution1D::new(e_grid.to_vec(), density)
}

/// Weak-coupling energy-loss probability density Γ(E_loss) in 1/eV:
/// the beam average of the per-energy loss weight. First order in the
/// interaction; its integral is ⟨Δ_S(0,0,2Z)⟩.
pub fn eels_weak_coupling(
    ctx: &ResponseContext,
    kernel: KernelSource,
    electron: &ElectronParams,
    e_loss_grid: &[f64],
) -> Result<(Vec<f64>, f64, Option<String>)> {
    check_beta(ctx, electron)?;
    let za = ZAverage::build(electron, ctx.numerics.z_floor, GH_NODES);
    let de = 0.02;
    let mut gamma = vec![0.0f64; e_loss_grid.len()];
    let mut sum_rule = 0.0;
    let mut max_delta = 0.0f64;
    for (node, &zt) in za.z_tilde.iter().enumerate() {
        let table = LossTable::build(ctx, kernel, zt, de)?;
        let w = za.weights[node];
        sum_rule += w * table.total();
        max_delta = max_delta.max(table.total());
        for (j, &e) in e_loss_grid.iter().enumerate() {
            gamma[j] += w * table.sample(e);
        }
    }
    let warning = if max_delta >= 0.1 {
        Some(format!(
            "weak-coupling gate violated: max Δ_S = {max_delta:.3e} ≥ 0.1; \
             first-order Γ(E) is not a faithful loss spectrum here"
        ))
    } else {
        None
    };
    Ok((gamma, sum_rule, warning))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::materials::{Environment, MaterialModel};
    use crate::quadrature::NumericsConfig;
    use crate::slab::Geometry;
    use crate::units::PhysicalConstants;

    /// Normalized mean and variance of a sampled density about `center`.
    fn sample_stats(axis: &[f64], density: &[f64], center: f64) -> (f64, f64) {
        let shifted: Vec<f64> = axis.iter().map(|x| x - center).collect();
        let m0 = crate::oracles::distribution_moments(&shifted, density, 0);
        let m1 = crate::oracles::distribution_moments(&shifted, density, 1) / m0;
        let m2 = crate::oracles::distribution_moments(&shifted, density, 2) / m0;
        (m1, m2 - m1 * m1)
    }

    fn setup(beta: f64, sigma_y: f64, b: f64, l_eff: f64) -> (ResponseContext, ElectronParams) {
        let ctx = ResponseContext::new(
            PhysicalConstants::default(),
            MaterialModel::default(),
            Geometry {
                d: 50.0,
                l_eff,
                env: Environment::default(),
            },
            beta,
            NumericsConfig::default(),
        )
        .unwrap();
        let e_i = ElectronParams::kinetic_energy(&ctx.constants, beta);
        (
            ctx,
            ElectronParams {
                beta,
                sigma_y,
                sigma_z: 2.0,
                impact_b: b,
                e_i,
            },
        )
    }

    #[test]
    fn hermite_rules_are_exact() {
        for n in [8, 32] {
            let (x, w) = gauss_hermite(n);
            let total: f64 = w.iter().sum();
            assert!((total - std::f64::consts::PI.sqrt()).abs() < 1e-12);
            let m2: f64 = x.iter().zip(&w).map(|(x, w)| w * x * x).sum();
            assert!((m2 - std::f64::consts::PI.sqrt() / 2.0).abs() < 1e-12);
            let odd: f64 = x.iter().zip(&w).map(|(x, w)| w * x * x * x).sum();
            assert!(odd.abs() < 1e-12);
        }
    }

    #[test]
    fn z_average_drops_floor_nodes() {
        let (_, mut el) = setup(0.5, 3.0, 9.0, 1000.0);
        let za = ZAverage::build(&el, 0.1, 32);
        assert!(za.dropped_weight < 1e-9, "aloof beam should keep all nodes");
        let total: f64 = za.weights.iter().sum();
        assert!((total + za.dropped_weight - 1.0).abs() < 1e-12);
        el.impact_b = 0.5;
        let za = ZAverage::build(&el, 0.1, 32);
        assert!(za.dropped_weight > 0.0);
    }

    #[test]
    fn achiral_momentum_mean_vanishes() {
        let (mut ctx, el) = setup(0.5, 3.0, 9.0, 1000.0);
        ctx.material.chiral_oscillators.clear();
        let grid = crate::response::KernelGrid::build(&ctx).unwrap();
        let r = lateral_momentum_moments(&ctx, KernelSource::Grid(&grid), &el).unwrap();
        assert!(r.mean.abs() <= 1e-12 * r.variance.sqrt());
        assert!(r.variance >= r.initial_variance.unwrap() - 1e-9);
    }

    #[test]
    fn enantiomer_flip_negates_momentum_mean() {
        let (ctx, el) = setup(0.5, 3.0, 9.0, 1000.0);
        let grid = crate::response::KernelGrid::build(&ctx).unwrap();
        let r = lateral_momentum_moments(&ctx, KernelSource::Grid(&grid), &el).unwrap();
        let mut cm = ctx.clone();
        cm.material = ctx.material.enantiomer();
        let gm = crate::response::KernelGrid::build(&cm).unwrap();
        let rm = lateral_momentum_moments(&cm, KernelSource::Grid(&gm), &el).unwrap();
        assert!((r.mean + rm.mean).abs() <= 1e-9 * r.mean.abs());
        assert!((r.variance - rm.variance).abs() <= 1e-9 * r.variance);
    }

    #[test]
    fn momentum_two_route_agreement() {
        let (ctx, el) = setup(0.5, 3.0, 9.0, 1000.0);
        let grid = crate::response::KernelGrid::build(&ctx).unwrap();
        let k = KernelSource::Grid(&grid);
        let report = lateral_momentum_moments(&ctx, k, &el).unwrap();
        let width = (report.variance).sqrt();
        let n = 400;
        let p_grid: Vec<f64> = (0..=n)
            .map(|j| -8.0 * width + 16.0 * width * j as f64 / n as f64)
            .collect();
        let dist = lateral_momentum_distribution(&ctx, k, &el, &p_grid).unwrap();
        assert!(dist.normalization_defect.abs() < 1e-4);
        let (m1, var) = sample_stats(&dist.axis, &dist.density, 0.0);
        assert!(
            (m1 - report.mean).abs() <= 1e-3 * report.variance.sqrt(),
            "mean: dist {m1:e} vs kernels {:e}",
            report.mean
        );
        assert!(
            (var - report.variance).abs() <= 1e-3 * report.variance,
            "variance: dist {var:e} vs kernels {:e}",
            report.variance
        );
    }

    #[test]
    fn distribution_mirror_odd_part_tracks_chirality() {
        let (ctx, el) = setup(0.5, 3.0, 9.0, 1000.0);
        let grid = crate::response::KernelGrid::build(&ctx).unwrap();
        let k = KernelSource::Grid(&grid);
        let width = (ctx.constants.hbar_c / el.sigma_y) * 1.5;
        let n = 160;
        let p_grid: Vec<f64> = (0..=n)
            .map(|j| -8.0 * width + 16.0 * width * j as f64 / n as f64)
            .collect();
        let dist = lateral_momentum_distribution(&ctx, k, &el, &p_grid).unwrap();
        let peak = dist.density.iter().fold(0.0f64, |m, &d| m.max(d));
        let odd_chiral = (0..=n)
            .map(|j| (dist.density[j] - dist.density[n - j]).abs())
            .fold(0.0f64, f64::max);
        assert!(
            odd_chiral > 1e-7 * peak,
            "chiral film must skew the distribution: odd part {odd_chiral:e} of peak {peak:e}"
        );
        let mut ca = ctx.clone();
        ca.material.chiral_oscillators.clear();
        let ga = crate::response::KernelGrid::build(&ca).unwrap();
        let dist_a =
            lateral_momentum_distribution(&ca, KernelSource::Grid(&ga), &el, &p_grid).unwrap();
        let odd_achiral = (0..=n)
            .map(|j| (dist_a.density[j] - dist_a.density[n - j]).abs())
            .fold(0.0f64, f64::max);
        assert!(
            odd_achiral <= 1e-9 * peak,
            "achiral distribution must be even: odd part {odd_achiral:e}"
        );
    }

    #[test]
    fn energy_moments_negative_shift_across_betas() {
        for beta in [0.3, 0.5, 0.7] {
            let (ctx, el) = setup(beta, 3.0, 9.0, 1000.0);
            let grid = crate::response::KernelGrid::build(&ctx).unwrap();
            let r = energy_moments(&ctx, KernelSource::Grid(&grid), &el).unwrap();
            assert!(r.mean < 0.0, "beta {beta}: mean shift {:e}", r.mean);
            assert!(r.variance >= 0.0);
        }
    }

    #[test]
    fn spectrum_normalized_and_supported_on_losses() {
        let (ctx, el) = setup(0.5, 3.0, 9.0, 1000.0);
        let grid = crate::response::KernelGrid::build(&ctx).unwrap();
        let k = KernelSource::Grid(&grid);
        let sigma_e = 0.05;
        let n = 4000;
        let lo = el.e_i - 19.0;
        let hi = el.e_i + 3.0;
        let e_grid: Vec<f64> = (0..=n)
            .map(|j| lo + (hi - lo) * j as f64 / n as f64)
            .collect();
        let dist = energy_spectrum(&ctx, k, &el, &e_grid, sigma_e).unwrap();
        assert!(dist.normalization_defect.abs() < 1e-4);
        let peak = dist.density.iter().fold(0.0f64, |m, &d| m.max(d));
        for (j, &e) in e_grid.iter().enumerate() {
            if e > el.e_i + 10.0 * sigma_e {
                assert!(
                    dist.density[j] <= 1e-6 * peak,
                    "gain side must be empty: {:e} at E-E_i={}",
                    dist.density[j],
                    e - el.e_i
                );
            }
        }
        // Two-route moments: the distribution adds the instrumental σ_E².
        let report = energy_moments(&ctx, k, &el).unwrap();
        let (shift, var) = sample_stats(&dist.axis, &dist.density, el.e_i);
        assert!(
            (shift - report.mean).abs() <= 1e-3 * report.mean.abs(),
            "shift: dist {shift:e} vs kernels {:e}",
            report.mean
        );
        assert!(
            (var - (report.variance + sigma_e * sigma_e)).abs()
                <= 1e-3 * (report.variance + sigma_e * sigma_e),
            "variance: dist {var:e} vs kernels {:e} + sigma_e²",
            report.variance
        );
    }

    #[test]
    fn eels_sum_rule_and_small_l_agreement() {
        let (ctx, el) = setup(0.5, 3.0, 9.0, 1000.0);
        let grid = crate::response::KernelGrid::build(&ctx).unwrap();
        let k = KernelSource::Grid(&grid);
        let n = 885;
        let e_grid: Vec<f64> = (1..=n).map(|j| 17.7 * j as f64 / n as f64).collect();
        let (gamma, sum_rule, warning) = eels_weak_coupling(&ctx, k, &el, &e_grid).unwrap();
        assert!(warning.is_none());
        // Trapezoid over the loss grid reproduces the analytic sum rule.
        let mut integral = 0.0;
        for j in 0..n - 1 {
            integral += 0.5 * (gamma[j] + gamma[j + 1]) * (e_grid[j + 1] - e_grid[j]);
        }
        let za = ZAverage::build(&el, ctx.numerics.z_floor, GH_NODES);
        let mut direct = 0.0;
        for (i, &zt) in za.z_tilde.iter().enumerate() {
            direct += za.weights[i]
                * crate::response::delta_point(&ctx, k, 0.0, 0.0, zt)
                    .unwrap()
                    .delta_s;
        }
        assert!(
            (sum_rule - direct).abs() <= 1e-4 * direct,
            "sum rule {sum_rule:e} vs direct average {direct:e}"
        );
        assert!(
            (integral - direct).abs() <= 2e-3 * direct,
            "grid integral {integral:e} vs direct {direct:e}"
        );
        // Γ scales linearly in L.
        let mut c2 = ctx.clone();
        c2.geometry.l_eff *= 3.0;
        let (gamma3, _, _) = eels_weak_coupling(&c2, k, &el, &e_grid).unwrap();
        for j in [10, 177, 400] {
            assert!((gamma3[j] - 3.0 * gamma[j]).abs() <= 1e-12 * gamma3[j].abs());
        }
        // Against the full spectrum at weak coupling: the loss lobe of
        // dP/dE matches Γ to 2% once max Δ_S < 0.01.
        let mut cw = ctx.clone();
        cw.geometry.l_eff = 100.0;
        let (gw, sum_w, _) = eels_weak_coupling(&cw, k, &el, &e_grid).unwrap();
        assert!(sum_w < 0.01);
        let sigma_e = 0.05;
        let lo = el.e_i - 19.0;
        let hi = el.e_i + 2.0;
        let m = 4200;
        let spec_grid: Vec<f64> = (0..=m)
            .map(|j| lo + (hi - lo) * j as f64 / m as f64)
            .collect();
        let dist = energy_spectrum(&cw, k, &el, &spec_grid, sigma_e).unwrap();
        // Compare integrated lobes over losses beyond the elastic line.
        let lobe_lo = 1.0; // eV of loss, far past 10σ_E
        let mut full_lobe = 0.0;
        for j in 0..m {
            let loss = el.e_i - 0.5 * (spec_grid[j] + spec_grid[j + 1]);
            if loss > lobe_lo {
                full_lobe +=
                    0.5 * (dist.density[j] + dist.density[j + 1]) * (spec_grid[j + 1] - spec_grid[j]);
            }
        }
        let mut weak_lobe = 0.0;
        for j in 0..n - 1 {
            let loss = 0.5 * (e_grid[j] + e_grid[j + 1]);
            if loss > lobe_lo {
                weak_lobe += 0.5 * (gw[j] + gw[j + 1]) * (e_grid[j + 1] - e_grid[j]);
            }
        }
        assert!(
            (full_lobe - weak_lobe).abs() <= 0.02 * weak_lobe,
            "loss lobe: full {full_lobe:e} vs weak coupling {weak_lobe:e}"
        );
    }

    #[test]
    fn trend_suite_mean_grows_with_l_and_wide_beam_wins() {
        let p0 = |beta: f64| PhysicalConstants::default().reference_momentum(beta);
        let beta = 0.5;
        let (ctx, wide) = setup(beta, 500.0, 9.0, 1000.0);
        let grid = crate::response::KernelGrid::build(&ctx).unwrap();
        let k = KernelSource::Grid(&grid);
        let ka_wide = KernelAverages::build_momentum(&ctx, k, &wide).unwrap();
        let (_, tight) = setup(beta, 3.0, 18.0, 1000.0);
        let ka_tight = KernelAverages::build_momentum(&ctx, k, &tight).unwrap();
        let mut prev = 0.0;
        for l_um in [1.0, 2.0, 5.0, 10.0] {
            let l = l_um * 1000.0;
            let rw = ka_wide.momentum_report(&ctx.constants, &wide, l);
            let rt = ka_tight.momentum_report(&ctx.constants, &tight, l);
            let rel_mean = rw.mean.abs() / p0(beta);
            assert!(rel_mean > prev, "mean must grow with L");
            prev = rel_mean;
            let ratio = rw.peak_factor.unwrap().abs() / rt.peak_factor.unwrap().abs();
            assert!(
                ratio >= 10.0,
                "wide/close beam must dominate: ratio {ratio:.2} at L = {l_um} um"
            );
        }
    }
}
