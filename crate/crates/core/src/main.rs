//! Command-line front end: parses the run configuration, dispatches one
//! subcommand, and writes deterministic data files plus a checksummed
//! manifest. Parallel map/sweep work is partitioned per output row and
//! merged in index order, so thread count never changes the bytes.

use std::path::PathBuf;
use std::time::Instant;

use clap::{Parser, Subcommand};
use rayon::prelude::*;

use chiralfilm::config::{parse_config_str, SimulationConfig};
use chiralfilm::electron::gamma;
use chiralfilm::observables::{eels_weak_coupling, KernelAverages};
use chiralfilm::output::{
    cached_kernel_grid, write_table, ColumnSpec, RunManifest, Table,
};
use chiralfilm::response::{delta_point, KernelGrid, KernelSource, ResponseContext};
use chiralfilm::slab::reflection_matrix;
use chiralfilm::Error;

const DEFAULT_CONFIG: &str = include_str!("../../../config/default.toml");

#[derive(Parser)]
#[command(
    name = "chiralfilm",
    version,
    about = "Chiral thin-film response and aloof-electron observables"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Path to a TOML run configuration; falls back to $CHIRALFILM_CONFIG,
    /// then to the built-in defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory override.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker thread count (default: all cores). Results are identical
    /// for any value.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Skip the elastic phase Φ(Z) (it cancels from |γ| and from every
    /// shipped observable).
    #[arg(long, global = true)]
    skip_phi: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Tabulate ε(E) and κ(E) of the configured film.
    Materials,
    /// Tabulate the four reflection coefficients along the electron line.
    Reflection,
    /// Map the interaction exponents Δ_S, Δ_A over (ỹ, z̃).
    DeltaMap,
    /// Map |γ| for mirror point pairs over (y, z).
    GammaMap,
    /// Map |Asym γ| for mirror point pairs over (y, z).
    AsymmetryMap,
    /// Momentum and energy moments over the configured (L, β) sweep.
    ObservablesSweep,
    /// Weak-coupling loss probability density Γ(E_loss).
    Eels,
    /// Cross-check the adaptive pipeline against the independent oracles.
    Oracle,
}

fn load_config(cli: &Cli) -> chiralfilm::Result<SimulationConfig> {
    let text = match &cli.config {
        Some(p) => std::fs::read_to_string(p)
            .map_err(|e| Error::Io(format!("cannot read config {}: {e}", p.display())))?,
        None => match std::env::var("CHIRALFILM_CONFIG") {
            Ok(p) => std::fs::read_to_string(&p)
                .map_err(|e| Error::Io(format!("cannot read config {p}: {e}")))?,
            Err(_) => DEFAULT_CONFIG.to_string(),
        },
    };
    let mut cfg = parse_config_str(&text)?;
    if let Some(out) = &cli.out {
        cfg.output.directory = out.clone();
    }
    Ok(cfg)
}

/// Run rows in parallel, preserving index order in the output. A row
/// failure carries its index so the table can be truncated at the first
/// failure with a partial-result marker.
fn ordered_rows<F>(n: usize, f: F) -> Result<Vec<Vec<f64>>, (usize, Error)>
where
    F: Fn(usize) -> chiralfilm::Result<Vec<f64>> + Sync,
{
    let results: Vec<chiralfilm::Result<Vec<f64>>> = (0..n).into_par_iter().map(&f).collect();
    let mut rows = Vec::with_capacity(n);
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(row) => rows.push(row),
            Err(e) => return Err((i, e)),
        }
    }
    Ok(rows)
}

fn fill_table<F>(table: &mut Table, n: usize, f: F)
where
    F: Fn(usize) -> chiralfilm::Result<Vec<f64>> + Sync,
{
    match ordered_rows(n, f) {
        Ok(rows) => {
            for row in rows {
                table.push(row);
            }
        }
        Err((i, e)) => {
            table.partial = Some(format!("aborted at row {i}: {e}"));
            eprintln!(
                "warning: {} is partial — aborted at row {i}: {e}",
                table.name
            );
        }
    }
}

fn materials_table(cfg: &SimulationConfig) -> Table {
    let mut t = Table::new(
        "materials",
        vec![
            ColumnSpec::new("E_eV", "eV"),
            ColumnSpec::new("re_eps", "1"),
            ColumnSpec::new("im_eps", "1"),
            ColumnSpec::new("re_kappa", "1"),
            ColumnSpec::new("im_kappa", "1"),
        ],
    );
    let n = 885;
    for j in 1..=n {
        let e = cfg.numerics.e_max * j as f64 / n as f64;
        let eps = cfg.material.permittivity(e).expect("E > 0");
        let kap = cfg.material.pasteur(e).expect("E > 0");
        t.push(vec![e, eps.re, eps.im, kap.re, kap.im]);
    }
    t
}

fn reflection_table(cfg: &SimulationConfig, beta: f64) -> Table {
    let mut t = Table::new(
        "reflection",
        vec![
            ColumnSpec::new("E_eV", "eV"),
            ColumnSpec::new("ky_invnm", "1/nm"),
            ColumnSpec::new("re_r_ss", "1"),
            ColumnSpec::new("im_r_ss", "1"),
            ColumnSpec::new("re_r_pp", "1"),
            ColumnSpec::new("im_r_pp", "1"),
            ColumnSpec::new("re_r_sp", "1"),
            ColumnSpec::new("im_r_sp", "1"),
            ColumnSpec::new("re_r_ps", "1"),
            ColumnSpec::new("im_r_ps", "1"),
        ],
    );
    let geom = cfg.geometry(cfg.l_list[0]);
    let n = 400;
    for j in 1..=n {
        let e = cfg.numerics.e_max * j as f64 / n as f64;
        let kx = cfg.constants.k_omega(e) / beta;
        for mult in [0.0_f64, 1.0, 3.0] {
            let ky = mult * cfg.constants.k_omega(e);
            let k_par = (kx * kx + ky * ky).sqrt();
            let r = reflection_matrix(e, k_par, &cfg.constants, &cfg.material, &geom)
                .expect("evanescent reflection is regular");
            t.push(vec![
                e, ky, r.r_ss.re, r.r_ss.im, r.r_pp.re, r.r_pp.im, r.r_sp.re, r.r_sp.im,
                r.r_ps.re, r.r_ps.im,
            ]);
        }
    }
    t
}

fn delta_map_table(ctx: &ResponseContext, grid: &KernelGrid) -> Table {
    let mut t = Table::new(
        "delta-map",
        vec![
            ColumnSpec::new("ytilde_nm", "nm"),
            ColumnSpec::new("ztilde_nm", "nm"),
            ColumnSpec::new("delta_s", "1"),
            ColumnSpec::new("delta_a", "1"),
            ColumnSpec::new("err", "1"),
        ],
    );
    let ys: Vec<f64> = (-20..=20).map(|j| j as f64).collect();
    let zs: Vec<f64> = (1..=15).map(|j| -2.0 * j as f64).collect();
    let pixels: Vec<(f64, f64)> = zs
        .iter()
        .flat_map(|&z| ys.iter().map(move |&y| (y, z)))
        .collect();
    fill_table(&mut t, pixels.len(), |i| {
        let (y, z) = pixels[i];
        let d = delta_point(ctx, KernelSource::Grid(grid), 0.0, y, z)?;
        Ok(vec![y, z, d.delta_s, d.delta_a, d.error])
    });
    t
}

fn pair_map_table(
    ctx: &ResponseContext,
    grid: &KernelGrid,
    asym: bool,
) -> Table {
    let (name, col) = if asym {
        ("asymmetry-map", "abs_asym")
    } else {
        ("gamma-map", "abs_gamma")
    };
    let mut t = Table::new(
        name,
        vec![
            ColumnSpec::new("y_nm", "nm"),
            ColumnSpec::new("z_nm", "nm"),
            ColumnSpec::new(col, "1"),
            ColumnSpec::new("err", "1"),
        ],
    );
    let ys: Vec<f64> = (1..=20).map(|j| 0.5 * j as f64).collect();
    let zs: Vec<f64> = (1..=14).map(|j| -1.0 * j as f64).collect();
    let pixels: Vec<(f64, f64)> = zs
        .iter()
        .flat_map(|&z| ys.iter().map(move |&y| (y, z)))
        .collect();
    fill_table(&mut t, pixels.len(), |i| {
        let (y, z) = pixels[i];
        // Mirror pair R = (0, y, z), R' = (0, −y, z): the elastic phase
        // difference Φ(Z)−Φ(Z) vanishes identically for equal heights.
        let r = [0.0, y, z];
        let rp = [0.0, -y, z];
        if asym {
            let a = chiralfilm::electron::asym_gamma(ctx, KernelSource::Grid(grid), r, rp)?;
            let d = delta_point(ctx, KernelSource::Grid(grid), 0.0, 2.0 * y, 2.0 * z)?;
            Ok(vec![y, z, a.norm(), d.error])
        } else {
            let g = gamma(ctx, KernelSource::Grid(grid), r, rp, false)?;
            let d = delta_point(ctx, KernelSource::Grid(grid), 0.0, 2.0 * y, 2.0 * z)?;
            Ok(vec![y, z, g.value.norm(), d.error])
        }
    });
    t
}

fn sweep_table(cfg: &SimulationConfig, dir: &std::path::Path) -> chiralfilm::Result<Table> {
    let mut t = Table::new(
        "observables-sweep",
        vec![
            ColumnSpec::new("L_um", "um"),
            ColumnSpec::new("beta", "1"),
            ColumnSpec::new("meanPy_over_P0", "1"),
            ColumnSpec::new("rmsPy_over_P0", "1"),
            ColumnSpec::new("peak_factor", "1"),
            ColumnSpec::new("meanEloss_over_E0", "1"),
            ColumnSpec::new("rmsE_over_E0", "1"),
        ],
    );
    for &beta in &cfg.beta_list {
        let ctx = cfg.response_context(beta, cfg.l_list[0])?;
        let grid = cached_kernel_grid(dir, &cfg.kernel_hash(beta), || KernelGrid::build(&ctx))?;
        let electron = cfg.electron(beta);
        let ka = KernelAverages::build(&ctx, KernelSource::Grid(&grid), &electron)?;
        let p0 = cfg.constants.reference_momentum(beta);
        let e0 = cfg.constants.reference_energy(beta);
        for &l in &cfg.l_list {
            let pm = ka.momentum_report(&cfg.constants, &electron, l);
            let em = ka.energy_report(l);
            t.push(vec![
                l / 1000.0,
                beta,
                pm.mean / p0,
                pm.variance.sqrt() / p0,
                pm.peak_factor.expect("momentum report carries a peak factor"),
                -em.mean / e0,
                em.variance.sqrt() / e0,
            ]);
        }
    }
    Ok(t)
}

fn eels_table(cfg: &SimulationConfig, ctx: &ResponseContext, grid: &KernelGrid) -> chiralfilm::Result<Table> {
    let mut t = Table::new(
        "eels",
        vec![
            ColumnSpec::new("Eloss_eV", "eV"),
            ColumnSpec::new("gamma_per_eV", "1/eV"),
        ],
    );
    let n = 885;
    let e_grid: Vec<f64> = (1..=n)
        .map(|j| ctx.numerics.e_max * j as f64 / n as f64)
        .collect();
    let electron = cfg.electron(ctx.beta);
    let (gamma, _sum, warning) =
        eels_weak_coupling(ctx, KernelSource::Grid(grid), &electron, &e_grid)?;
    if let Some(w) = warning {
        eprintln!("warning: {w}");
    }
    for (j, &e) in e_grid.iter().enumerate() {
        t.push(vec![e, gamma[j]]);
    }
    Ok(t)
}

fn oracle_table(cfg: &SimulationConfig, ctx: &ResponseContext) -> chiralfilm::Result<Table> {
    use chiralfilm::oracles;
    let mut t = Table::new(
        "oracle",
        vec![
            ColumnSpec::new("check_id", "1"),
            ColumnSpec::new("main_value", "mixed"),
            ColumnSpec::new("oracle_value", "mixed"),
            ColumnSpec::new("relative_error", "1"),
            ColumnSpec::new("passed", "bool"),
        ],
    );
    // Checks 1, 2: Δ_S and Δ_A at a reference point against the
    // fixed-grid Simpson oracle.
    let (yt, zt) = (2.0, -10.0);
    let d = delta_point(ctx, KernelSource::Direct, 0.0, yt, zt)?;
    let (os, oa) = oracles::fixed_grid_delta(
        0.0,
        yt,
        zt,
        512,
        384,
        ctx.beta,
        ctx.numerics.e_max,
        ctx.numerics.ky_cutoff_factor,
        &cfg.constants,
        &cfg.material,
        &ctx.geometry,
    );
    for (id, main, oracle, tol) in [
        (1.0, d.delta_s, os, 1e-5),
        (2.0, d.delta_a, oa, 1e-5),
    ] {
        let rel = (main - oracle).abs() / oracle.abs().max(1e-300);
        t.push(vec![id, main, oracle, rel, (rel <= tol) as u8 as f64]);
    }
    // Checks 3, 4: derivative kernels against finite differences of the
    // complex-modulated exponent.
    let z = -10.0;
    let a_main = chiralfilm::response::lateral_kernel_a(ctx, KernelSource::Direct, z)?;
    let hbar_c = cfg.constants.hbar_c;
    let a_fd = hbar_c
        * oracles::finite_difference(
            |y| {
                chiralfilm::response::delta_point(ctx, KernelSource::Direct, 0.0, y, 2.0 * z)
                    .map(|d| d.delta_a)
                    .unwrap_or(f64::NAN)
            },
            0.0,
            1e-3,
            1,
        );
    let rel_a = (a_main - a_fd).abs() / a_fd.abs().max(1e-300);
    t.push(vec![3.0, a_main, a_fd, rel_a, (rel_a <= 1e-3) as u8 as f64]);
    let s_main = chiralfilm::response::spread_kernel_s(ctx, KernelSource::Direct, z)?;
    let s_fd = -(hbar_c * hbar_c)
        * oracles::finite_difference(
            |y| {
                chiralfilm::response::delta_point(ctx, KernelSource::Direct, 0.0, y, 2.0 * z)
                    .map(|d| d.delta_s)
                    .unwrap_or(f64::NAN)
            },
            0.0,
            1e-2,
            2,
        );
    let rel_s = (s_main - s_fd).abs() / s_fd.abs().max(1e-300);
    t.push(vec![4.0, s_main, s_fd, rel_s, (rel_s <= 1e-3) as u8 as f64]);
    Ok(t)
}

fn run() -> chiralfilm::Result<i32> {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Io(format!("cannot size thread pool: {e}")))?;
    }
    let cfg = load_config(&cli)?;
    let dir = cfg.output.directory.clone();
    std::fs::create_dir_all(&dir)
        .map_err(|e| Error::Io(format!("cannot create {}: {e}", dir.display())))?;
    let mut manifest = RunManifest::new(cfg.hash());
    let beta = cfg.beta_list[0];

    let started = Instant::now();
    let tables: Vec<Table> = match cli.command {
        Command::Materials => vec![materials_table(&cfg)],
        Command::Reflection => vec![reflection_table(&cfg, beta)],
        Command::DeltaMap => {
            let ctx = cfg.response_context(beta, cfg.l_list[0])?;
            let grid =
                cached_kernel_grid(&dir, &cfg.kernel_hash(beta), || KernelGrid::build(&ctx))?;
            vec![delta_map_table(&ctx, &grid)]
        }
        Command::GammaMap | Command::AsymmetryMap => {
            let asym = matches!(cli.command, Command::AsymmetryMap);
            let ctx = cfg.response_context(beta, cfg.l_list[0])?;
            let grid =
                cached_kernel_grid(&dir, &cfg.kernel_hash(beta), || KernelGrid::build(&ctx))?;
            vec![pair_map_table(&ctx, &grid, asym)]
        }
        Command::ObservablesSweep => vec![sweep_table(&cfg, &dir)?],
        Command::Eels => {
            let ctx = cfg.response_context(beta, cfg.l_list[0])?;
            let grid =
                cached_kernel_grid(&dir, &cfg.kernel_hash(beta), || KernelGrid::build(&ctx))?;
            vec![eels_table(&cfg, &ctx, &grid)?]
        }
        Command::Oracle => {
            let ctx = cfg.response_context(beta, cfg.l_list[0])?;
            vec![oracle_table(&cfg, &ctx)?]
        }
    };
    manifest.add_stage("compute", started.elapsed().as_secs_f64());

    let write_started = Instant::now();
    let mut any_partial = false;
    for table in &tables {
        any_partial |= table.partial.is_some();
        write_table(&dir, table, cfg.output.format, cfg.output.precision, &mut manifest)?;
    }
    manifest.add_stage("write", write_started.elapsed().as_secs_f64());
    manifest.write(&dir)?;
    Ok(if any_partial { 3 } else { 0 })
}

fn main() {
    match run() {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(1);
        }
    }
}
