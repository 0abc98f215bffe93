//! Experiment drivers. Each driver takes a validated [`ExperimentConfig`],
//! runs the numerics, writes deterministic artifacts (CSV tables, binary
//! snapshots, a manifest) into a single output directory, and reports named
//! pass/fail checks. Re-running a configuration reproduces every artifact
//! bit for bit, and a driver never touches files outside its directory.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::config::{ConfigError, DensityConfig, ExperimentConfig, SmallnessConfig};
use crate::diagnostics::{
    self, cauchy_gap, estimate_constants, gronwall_integrands, poincare_decay_check,
    product_bound_holds, CheckRow, EmpiricalConstants,
};
use crate::field::VectorField;
use crate::grid::{build_grid, Grid};
use crate::io::{self, IoError};
use crate::norms::{self, Norm};
use crate::operators;
use crate::samples::{self, FamilySpec};
use crate::solver::{
    solve_nse, solve_perturbation, solve_stokes_linear, Scheme, SolverError, SolverParams, Status,
    Trajectory,
};
use crate::stokes::{poincare_constant, stokes_eigenbasis, StokesEigenBasis};
use crate::symmetry::{density_approximation, lateral_support_margin, s_invariance_defect,
    sigma_extend};
use crate::tol;

/// Slack multiplier on the spectral-splitting integral budgets.
const SPLIT_SLACK: f64 = 1.1;

#[derive(Debug)]
pub enum ExpError {
    Config(ConfigError),
    Io(IoError),
    /// Any runtime failure of a driver, with context.
    Run(String),
}

impl std::fmt::Display for ExpError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ExpError::Config(e) => write!(f, "{e}"),
            ExpError::Io(e) => write!(f, "output failed: {e}"),
            ExpError::Run(m) => write!(f, "experiment failed: {m}"),
        }
    }
}

impl std::error::Error for ExpError {}

impl From<ConfigError> for ExpError {
    fn from(e: ConfigError) -> ExpError {
        ExpError::Config(e)
    }
}

impl From<IoError> for ExpError {
    fn from(e: IoError) -> ExpError {
        ExpError::Io(e)
    }
}

impl From<std::io::Error> for ExpError {
    fn from(e: std::io::Error) -> ExpError {
        ExpError::Io(IoError::Io(e))
    }
}

fn run_err(e: impl std::fmt::Display) -> ExpError {
    ExpError::Run(e.to_string())
}

/// The result the command-line front end reports on: named checks plus the
/// files the run produced.
#[derive(Debug)]
pub struct ExperimentOutcome {
    pub name: String,
    pub checks: Vec<CheckRow>,
    pub artifacts: Vec<PathBuf>,
}

impl ExperimentOutcome {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn first_failure(&self) -> Option<&CheckRow> {
        self.checks.iter().find(|c| !c.passed)
    }
}

struct DriverOutput {
    checks: Vec<CheckRow>,
    artifacts: Vec<PathBuf>,
    /// `key = value` lines echoed into the manifest.
    extras: Vec<(String, String)>,
    constants: Option<EmpiricalConstants>,
}

impl DriverOutput {
    fn new() -> DriverOutput {
        DriverOutput {
            checks: Vec::new(),
            artifacts: Vec::new(),
            extras: Vec::new(),
            constants: None,
        }
    }

    fn extra(&mut self, key: &str, value: impl std::fmt::Display) {
        self.extras.push((key.to_string(), value.to_string()));
    }
}

/// Runs the configured experiment, writing all artifacts under `out_dir`.
/// `jobs` caps the worker threads used by the sweep drivers (each worker
/// owns one simulation); `None` uses the default pool.
pub fn run(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    jobs: Option<usize>,
) -> Result<ExperimentOutcome, ExpError> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let hash = diagnostics::fnv1a(cfg.echo().as_bytes());
    let driver = || match cfg.experiment.as_str() {
        "simulate" => run_simulate(cfg, out_dir, hash),
        "eps-sweep" => run_eps_sweep(cfg, out_dir, hash),
        "smallness-sweep" => run_smallness_sweep(cfg, out_dir, hash),
        "local-existence" => run_local_existence(cfg, out_dir, hash),
        "density-demo" => run_density_demo(cfg, out_dir, hash),
        "constants" => run_constants(cfg, out_dir, hash),
        other => Err(ExpError::Run(format!("unknown experiment {other:?}"))),
    };
    let mut output = match jobs {
        Some(n) if n > 0 => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(run_err)?
            .install(driver)?,
        _ => driver()?,
    };
    let checks_path = out_dir.join("checks.csv");
    io::write_checks_csv(&checks_path, &output.checks)?;
    output.artifacts.push(checks_path);
    output.artifacts.push(write_manifest(cfg, out_dir, &output)?);
    Ok(ExperimentOutcome {
        name: cfg.experiment.clone(),
        checks: output.checks,
        artifacts: output.artifacts,
    })
}

fn write_manifest(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    out: &DriverOutput,
) -> Result<PathBuf, ExpError> {
    let mut text = String::new();
    text.push_str(&format!("experiment = {}\n", cfg.experiment));
    text.push_str(&format!("code_version = {}\n", env!("CARGO_PKG_VERSION")));
    for (k, v) in &out.extras {
        text.push_str(&format!("{k} = {v}\n"));
    }
    if let Some(c) = &out.constants {
        text.push_str("\n[constants]\n");
        text.push_str(&format!("c0_est = {}\n", c.c0_est));
        text.push_str(&format!("c1_est = {}\n", c.c1_est));
        text.push_str(&format!("c2_est = {}\n", c.c2_est));
        text.push_str(&format!("c3_est = {}\n", c.c3_est));
        text.push_str(&format!("lambda0 = {}\n", c.lambda0));
        text.push_str(&format!("n_samples = {}\n", c.n_samples));
    }
    text.push_str("\n# --- configuration echo ---\n");
    text.push_str(&cfg.echo());
    let path = out_dir.join("manifest.txt");
    std::fs::write(&path, text)?;
    Ok(path)
}

/// The initial-data family, with the global seed folded into random
/// families so `--seed` changes exactly the sampled candidates.
fn initial_spec(cfg: &ExperimentConfig, default: Option<FamilySpec>) -> Result<FamilySpec, ExpError> {
    let spec = match (&cfg.initial, default) {
        (Some(init), _) => init.family_spec()?,
        (None, Some(d)) => d,
        (None, None) => {
            return Err(ExpError::Run(
                "this experiment needs an [initial] section".into(),
            ))
        }
    };
    Ok(match spec {
        FamilySpec::RandomSolenoidal { amplitude, seed } => FamilySpec::RandomSolenoidal {
            amplitude,
            seed: seed ^ cfg.seed,
        },
        other => other,
    })
}

/// Builds the family on the configured grid and, when that grid is the
/// half cylinder, extends it symmetrically to the state the solver evolves.
fn build_run_field(grid: &Grid, spec: &FamilySpec) -> Result<VectorField, ExpError> {
    let u = samples::build(grid, spec).map_err(run_err)?;
    if grid.half_domain {
        sigma_extend(&u).map_err(run_err)
    } else {
        Ok(u)
    }
}

fn fmt_f(v: f64) -> String {
    format!("{v}")
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

fn run_simulate(cfg: &ExperimentConfig, out_dir: &Path, hash: u64) -> Result<DriverOutput, ExpError> {
    let grid = cfg.grid.build()?;
    let params = cfg.params.build()?;
    let spec = initial_spec(cfg, None)?;
    let u0 = build_run_field(&grid, &spec)?;
    let traj = solve_nse(&u0, params).map_err(run_err)?;
    let mut out = DriverOutput::new();

    let ledger_path = out_dir.join("ledger.csv");
    io::write_ledger_csv(&ledger_path, &traj.ledger)?;
    out.artifacts.push(ledger_path);
    let final_path = out_dir.join("final_state.bin");
    io::write_snapshot(&final_path, &traj.final_state)?;
    out.artifacts.push(final_path);
    let snap_dir = out_dir.join("snapshots");
    std::fs::create_dir_all(&snap_dir)?;
    for (step, state) in &traj.snapshots {
        let p = snap_dir.join(format!("step_{step:06}.bin"));
        io::write_snapshot(&p, state)?;
        out.artifacts.push(p);
    }

    out.checks.push(CheckRow::new(
        "status-completed",
        hash,
        traj.completed(),
        traj.last_stable_time,
    ));
    let residual = traj.energy_balance_residual();
    out.checks.push(CheckRow::new(
        "energy-identity",
        hash,
        residual <= cfg.tolerances.energy_residual(),
        residual,
    ));
    out.checks.push(CheckRow::new(
        "ledger-valid",
        hash,
        traj.ledger.validate().is_ok(),
        traj.ledger.len() as f64,
    ));
    let mut worst_skew: f64 = 0.0;
    for row in traj.ledger.rows() {
        worst_skew = worst_skew.max(row.adv_residual.abs() / row.l2_sq.max(1.0));
    }
    out.checks.push(CheckRow::new(
        "skew-advection",
        hash,
        worst_skew <= tol::SKEW,
        worst_skew,
    ));
    let (lambda0, _) = poincare_constant(&traj.grid);
    let (decay_ok, margin) = poincare_decay_check(&traj.ledger, params.nu_h, lambda0);
    out.checks.push(CheckRow::new("poincare-envelope", hash, decay_ok, margin));
    if grid.half_domain {
        // Extended initial data is reflection-invariant; the flow must stay so.
        let mut worst = 0.0f64;
        for (_, state) in &traj.snapshots {
            let defect = s_invariance_defect(state).map_err(run_err)?;
            let scale = norms::l2_sq(state).sqrt().max(1e-300);
            worst = worst.max(defect / scale);
        }
        out.checks.push(CheckRow::new(
            "reflection-invariance",
            hash,
            worst <= tol::SYMMETRY_DRIFT,
            worst,
        ));
    }

    out.extra("status", traj.status.as_str());
    out.extra("family", spec.name());
    out.extra("steps", traj.ledger.len().saturating_sub(1));
    out.extra("last_stable_time", fmt_f(traj.last_stable_time));
    if let Some(failure) = &traj.failure {
        out.extra("failure", failure);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// eps-sweep
// ---------------------------------------------------------------------------

struct SweepRow {
    eps_hi: f64,
    eps_lo: f64,
    sup_gap: f64,
    int_gradh_gap: f64,
    completed: bool,
}

fn run_eps_sweep(cfg: &ExperimentConfig, out_dir: &Path, hash: u64) -> Result<DriverOutput, ExpError> {
    let sweep = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| ExpError::Run("eps-sweep needs a [sweep] section".into()))?;
    let grid = cfg.grid.build()?;
    let base = cfg.params.build()?;
    let spec = initial_spec(cfg, None)?;
    let u0 = build_run_field(&grid, &spec)?;
    // Aligned snapshots are what the vanishing-regularization gaps compare,
    // so pick a common stride (about 50 stored states by default).
    let stride = if base.snapshot_stride == 0 {
        (base.n_steps() / 50).max(1)
    } else {
        base.snapshot_stride
    };

    let trajs: Vec<Trajectory> = sweep
        .eps_values
        .par_iter()
        .map(|&eps| {
            let mut p = base;
            p.eps = eps;
            p.snapshot_stride = stride;
            solve_nse(&u0, p)
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(run_err)?;

    let mut out = DriverOutput::new();
    for (i, t) in trajs.iter().enumerate() {
        let p = out_dir.join(format!("ledger_{i:02}.csv"));
        io::write_ledger_csv(&p, &t.ledger)?;
        out.artifacts.push(p);
    }

    let mut rows = Vec::new();
    for i in 0..trajs.len() - 1 {
        let completed = trajs[i].completed() && trajs[i + 1].completed();
        let (sup_gap, int_gap) = if completed {
            cauchy_gap(&trajs[i], &trajs[i + 1]).map_err(run_err)?
        } else {
            (f64::NAN, f64::NAN)
        };
        rows.push(SweepRow {
            eps_hi: sweep.eps_values[i],
            eps_lo: sweep.eps_values[i + 1],
            sup_gap,
            int_gradh_gap: int_gap,
            completed,
        });
    }

    // Least-squares slope of log(sup gap) against log(Δeps) over the rows
    // that completed and have a nonzero gap.
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.completed && r.sup_gap > 0.0)
        .map(|r| ((r.eps_hi - r.eps_lo).ln(), r.sup_gap.ln()))
        .collect();
    let order = fit_slope(&pts);

    let csv_rows: Vec<String> = rows
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{},{},{},{}",
                r.eps_hi,
                r.eps_lo,
                r.eps_hi - r.eps_lo,
                r.sup_gap,
                r.int_gradh_gap,
                r.completed,
                r.completed && r.sup_gap > 0.0
            )
        })
        .collect();
    let sweep_path = out_dir.join("sweep.csv");
    io::write_table_csv(
        &sweep_path,
        "eps_hi,eps_lo,delta_eps,sup_gap_l2,int_gradh_gap,completed,used_in_fit",
        &csv_rows,
    )?;
    out.artifacts.push(sweep_path);

    let n_completed = trajs.iter().filter(|t| t.completed()).count();
    out.checks.push(CheckRow::new(
        "runs-completed",
        hash,
        n_completed == trajs.len(),
        n_completed as f64,
    ));
    let usable: Vec<f64> = rows
        .iter()
        .filter(|r| r.completed)
        .map(|r| r.sup_gap)
        .collect();
    let decreasing = usable.len() == rows.len()
        && usable.len() >= 2
        && usable.windows(2).all(|w| w[1] < w[0]);
    out.checks.push(CheckRow::new(
        "gaps-strictly-decreasing",
        hash,
        decreasing,
        usable.len() as f64,
    ));
    let order_ok = order.map(|p| (0.67..=1.5).contains(&p)).unwrap_or(false);
    out.checks.push(CheckRow::new(
        "order-in-window",
        hash,
        order_ok,
        order.unwrap_or(f64::NAN),
    ));

    out.extra("family", spec.name());
    out.extra("snapshot_stride", stride);
    out.extra("fitted_order", fmt_f(order.unwrap_or(f64::NAN)));
    Ok(out)
}

fn fit_slope(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let xm = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ym = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - xm).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - xm) * (p.1 - ym)).sum();
    if sxx == 0.0 {
        None
    } else {
        Some(sxy / sxx)
    }
}

// ---------------------------------------------------------------------------
// smallness-sweep
// ---------------------------------------------------------------------------

struct SmallnessRow {
    family: &'static str,
    amplitude: f64,
    eta: f64,
    l2: f64,
    d3: f64,
    h01: f64,
    h01_small: bool,
    shear_small: bool,
    product_small: bool,
    status: Status,
    outcome: &'static str,
    h01_initial: f64,
    h01_sup: f64,
    implication_ok: bool,
}

fn classify(traj: &Trajectory) -> (&'static str, f64, f64) {
    let h01_initial = traj.ledger.first().map(|r| r.h01_sq().sqrt()).unwrap_or(0.0);
    let sup = diagnostics::h01_sup(&traj.ledger);
    let outcome = match traj.status {
        Status::BlowupDetected => "blow-up",
        Status::SolverFailure => "failed",
        Status::Completed => {
            if sup <= h01_initial * (1.0 + 1e-6) {
                "bounded"
            } else {
                "growth"
            }
        }
    };
    (outcome, h01_initial, sup)
}

fn smallness_row(
    u0: &VectorField,
    spec: &FamilySpec,
    params: SolverParams,
    consts: &EmpiricalConstants,
) -> Result<SmallnessRow, ExpError> {
    let nu = params.nu_h;
    let h01_small = diagnostics::smallness_h01(u0, nu, consts);
    let shear = diagnostics::smallness_shear(u0, nu, consts);
    let product_small = diagnostics::smallness_product(u0, nu, consts);
    // Large-amplitude rows may need a finer step than the configured one;
    // take the integrator's suggestion instead of failing the whole sweep.
    let mut p = params;
    let mut traj = None;
    for _ in 0..4 {
        match solve_nse(u0, p) {
            Err(SolverError::CflViolation { suggested_dt, .. })
                if suggested_dt > 0.0 && suggested_dt < p.dt =>
            {
                p.dt = suggested_dt;
            }
            other => {
                traj = Some(other.map_err(run_err)?);
                break;
            }
        }
    }
    let traj = traj.ok_or_else(|| {
        ExpError::Run(format!("step size refused repeatedly at amplitude of {}", spec.name()))
    })?;
    let (outcome, h01_initial, h01_sup) = classify(&traj);
    let bounded = outcome == "bounded";
    let implication_ok = (!h01_small || bounded)
        && (!shear.satisfied || traj.status != Status::BlowupDetected)
        && (!product_small || product_bound_holds(&traj.ledger, nu).0);
    let amplitude = match *spec {
        FamilySpec::PlanarVortex { amplitude, .. }
        | FamilySpec::Anisotropic { amplitude, .. }
        | FamilySpec::BoundaryLayer { amplitude, .. }
        | FamilySpec::RandomSolenoidal { amplitude, .. }
        | FamilySpec::VerticalShear { amplitude } => amplitude,
    };
    Ok(SmallnessRow {
        family: spec.name(),
        amplitude,
        eta: spec.eta().unwrap_or(f64::NAN),
        l2: norms::l2_sq(u0).sqrt(),
        d3: norms::dz_sq(u0).sqrt(),
        h01: norms::norm(u0, Norm::H01),
        h01_small,
        shear_small: shear.satisfied,
        product_small,
        status: traj.status,
        outcome,
        h01_initial,
        h01_sup,
        implication_ok,
    })
}

/// Amplitude putting the steep-shear family between the plain-smallness
/// and exponential-shear admission boundaries: above the first, below the
/// second. Returns the geometric mean of the two critical amplitudes.
fn separating_amplitude(
    unit: &VectorField,
    nu: f64,
    consts: &EmpiricalConstants,
) -> Option<f64> {
    let l2 = norms::l2_sq(unit).sqrt();
    let d3 = norms::dz_sq(unit).sqrt();
    let h01 = norms::norm(unit, Norm::H01);
    if !(l2 > 0.0 && d3 > 0.0 && h01 > 0.0) {
        return None;
    }
    let a1 = nu / (32.0 * consts.c1_est * h01);
    // Critical amplitude of `A·(d̂·l̂)^{1/2}·exp(c₃A²l̂²/4ν²) = c₃^{-1/4}ν`,
    // found by damped fixed-point iteration from the exp≈1 solution.
    let c3 = consts.c3_est;
    let k = c3.powf(-0.25) * nu / (d3 * l2).sqrt();
    let mut a2 = k;
    for _ in 0..60 {
        let next = k * (-(c3 * (a2 * l2).powi(2)) / (4.0 * nu * nu)).exp();
        a2 = 0.5 * (a2 + next);
    }
    Some((a1 * a2).sqrt())
}

fn run_smallness_sweep(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    hash: u64,
) -> Result<DriverOutput, ExpError> {
    let sm: SmallnessConfig = cfg.smallness.clone().unwrap_or_default();
    let grid = cfg.grid.build()?;
    let params = cfg.params.build()?;
    let base_spec = initial_spec(
        cfg,
        Some(FamilySpec::PlanarVortex {
            amplitude: 1.0,
            zmode: 1,
        }),
    )?;
    // Constants live on the grid the solver actually evolves.
    let probe = build_run_field(&grid, &base_spec.with_amplitude(1.0))?;
    let run_grid = *probe.grid();
    let consts = estimate_constants(&run_grid, sm.n_samples).map_err(run_err)?;

    let mut specs: Vec<FamilySpec> = sm
        .amplitudes
        .iter()
        .map(|&a| base_spec.with_amplitude(a))
        .collect();
    for &eta in &sm.eta_values {
        let unit = FamilySpec::Anisotropic {
            amplitude: 1.0,
            eta,
            alpha: sm.alpha,
        };
        let unit_field = build_run_field(&grid, &unit)?;
        let amp = separating_amplitude(&unit_field, params.nu_h, &consts)
            .ok_or_else(|| ExpError::Run(format!("degenerate steep-shear family at eta={eta}")))?;
        specs.push(unit.with_amplitude(amp));
    }

    let rows: Vec<SmallnessRow> = specs
        .par_iter()
        .map(|spec| {
            let u0 = build_run_field(&grid, spec)?;
            smallness_row(&u0, spec, params, &consts)
        })
        .collect::<Result<Vec<_>, _>>()?;

    let csv: Vec<String> = rows
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.family,
                r.amplitude,
                r.eta,
                sm.alpha,
                r.l2,
                r.d3,
                r.h01,
                r.h01_small,
                r.shear_small,
                r.product_small,
                r.status.as_str(),
                r.outcome,
                r.h01_sup / r.h01_initial.max(1e-300),
                r.implication_ok
            )
        })
        .collect();
    let table = out_dir.join("smallness.csv");
    io::write_table_csv(
        &table,
        "family,amplitude,eta,alpha,l2,d3,h01,h01_small,shear_small,product_small,\
         status,outcome,h01_sup_ratio,implication_ok",
        &csv,
    )?;

    let mut out = DriverOutput::new();
    out.artifacts.push(table);
    out.constants = Some(consts);

    out.checks.push(CheckRow::new(
        "implications-hold",
        hash,
        rows.iter().all(|r| r.implication_ok),
        rows.len() as f64,
    ));
    let h01_rows: Vec<&SmallnessRow> = rows.iter().filter(|r| r.h01_small).collect();
    out.checks.push(CheckRow::new(
        "h01-rows-bounded",
        hash,
        h01_rows.iter().all(|r| r.outcome == "bounded"),
        h01_rows.len() as f64,
    ));
    let zero_rows: Vec<&SmallnessRow> = rows.iter().filter(|r| r.amplitude == 0.0).collect();
    out.checks.push(CheckRow::new(
        "zero-amplitude-trivial",
        hash,
        zero_rows.iter().all(|r| {
            r.h01_small && r.shear_small && r.product_small && r.outcome == "bounded"
        }),
        zero_rows.len() as f64,
    ));
    let eta_rows: Vec<&SmallnessRow> = rows
        .iter()
        .filter(|r| r.family == "anisotropic")
        .collect();
    out.checks.push(CheckRow::new(
        "steep-shear-separation",
        hash,
        eta_rows.iter().all(|r| r.shear_small && !r.h01_small),
        eta_rows.len() as f64,
    ));

    out.extra("family", base_spec.name());
    out.extra("rows", rows.len());
    Ok(out)
}

// ---------------------------------------------------------------------------
// local-existence
// ---------------------------------------------------------------------------

/// Largest time over which the spectral-splitting argument budgets the
/// horizontal-gradient integral: `δ₀/(4λ_{k₀+1}) · (2‖u₀‖² + δ₀ν_h/8)⁻¹`.
pub fn t0_bound(delta0: f64, lambda_next: f64, u0_l2_sq: f64, nu_h: f64) -> f64 {
    delta0 / (4.0 * lambda_next) / (2.0 * u0_l2_sq + delta0 * nu_h / 8.0)
}

#[derive(Clone, Debug)]
pub struct LocalRow {
    pub t: f64,
    pub v1_gradh_sq: f64,
    pub v2_gradh_sq: f64,
    pub z_gradh_sq: f64,
    pub u_gradh_sq: f64,
    pub int_u_gradh_sq: f64,
    pub b1: f64,
    pub b2: f64,
}

/// Everything the spectral-splitting construction produces: the cutoff,
/// the admissible horizon, the three integral budgets and the recomposed
/// full-velocity integral.
#[derive(Clone, Debug)]
pub struct LocalExistenceReport {
    pub delta: f64,
    pub delta0: f64,
    /// Smallest admissible cutoff, when the basis is deep enough.
    pub k0: Option<usize>,
    /// Budget the available depth could certify (16·tail/ν_h); equals a
    /// feasible `delta0` when `k0` is `None`.
    pub achievable_delta0: f64,
    pub lambda_next: f64,
    pub t0: f64,
    pub dt_eff: f64,
    pub int_v1: f64,
    pub int_v2: f64,
    pub int_z: f64,
    pub int_u: f64,
    /// Max relative gap between the evolved split `v₁+v₂` and the evolved
    /// whole field.
    pub superposition_residual: f64,
    /// Max relative gap between recomposed split steps and whole steps.
    pub max_consistency: f64,
    pub all_completed: bool,
    pub rows: Vec<LocalRow>,
}

/// Runs the spectral-splitting construction from `v0`: picks the smallest
/// cutoff `k₀` with `‖(I−ℙ_{k₀})v₀‖² ≤ δ₀ν_h/16`, bounds the horizon `T₀`,
/// evolves both spectral halves linearly, evolves the perturbation around
/// their sum, and integrates the horizontal gradients of every piece.
pub fn local_existence_analysis(
    v0: &VectorField,
    params: SolverParams,
    delta: f64,
    delta0: Option<f64>,
    basis_modes: usize,
    c0: f64,
) -> Result<LocalExistenceReport, ExpError> {
    let grid = *v0.grid();
    let delta0 = delta0.unwrap_or(delta);
    let nu = params.nu_h;
    // One mode beyond the cutoff range so λ_{k₀+1} always exists.
    let basis = stokes_eigenbasis(&grid, basis_modes + 1, 1.0).map_err(run_err)?;
    let coeffs = basis.coefficients(v0);
    let l2_sq = norms::l2_sq(v0);

    let mut k0 = None;
    let mut running = 0.0;
    let mut last_tail = l2_sq;
    for k in 1..=basis_modes {
        running += coeffs[k - 1] * coeffs[k - 1];
        last_tail = (l2_sq - running).max(0.0);
        if last_tail <= delta0 * nu / 16.0 {
            k0 = Some(k);
            break;
        }
    }
    let mut report = LocalExistenceReport {
        delta,
        delta0,
        k0,
        achievable_delta0: 16.0 * last_tail / nu,
        lambda_next: 0.0,
        t0: 0.0,
        dt_eff: 0.0,
        int_v1: 0.0,
        int_v2: 0.0,
        int_z: 0.0,
        int_u: 0.0,
        superposition_residual: 0.0,
        max_consistency: 0.0,
        all_completed: false,
        rows: Vec::new(),
    };
    let Some(k0) = k0 else {
        return Ok(report);
    };

    report.lambda_next = basis.eigenvalues[k0];
    report.t0 = t0_bound(delta0, report.lambda_next, l2_sq, nu);
    report.dt_eff = params.dt.min(report.t0 / 20.0);

    let v1_0 = partial_sum(&basis, &coeffs, k0);
    let mut v2_0 = v0.clone();
    v2_0.axpy(-1.0, &v1_0);
    // The complement is solenoidal analytically; subtracting nearly equal
    // fields leaves cancellation noise in its discrete divergence, so snap
    // an all-roundoff remainder to zero and clean anything else.
    if norms::l2_sq(&v2_0).sqrt() <= 1e-10 * l2_sq.sqrt() {
        v2_0 = VectorField::zeros(grid);
        v2_0.tag = crate::field::Tag::Solenoidal;
    } else {
        v2_0 = operators::leray_project(&v2_0).map_err(run_err)?.field;
    }

    let mut p_lin = params;
    p_lin.dt = report.dt_eff;
    p_lin.t_end = report.t0;
    p_lin.snapshot_stride = 1;
    p_lin.scheme = Scheme::ImexEuler;
    let v1 = solve_stokes_linear(&v1_0, p_lin).map_err(run_err)?;
    let v2 = solve_stokes_linear(&v2_0, p_lin).map_err(run_err)?;
    let v = solve_stokes_linear(v0, p_lin).map_err(run_err)?;
    let mut p_z = p_lin;
    p_z.advection = true;
    let z = solve_perturbation(&v, p_z).map_err(run_err)?;

    report.all_completed =
        v1.completed() && v2.completed() && v.completed() && z.trajectory.completed();
    report.int_v1 = v1.ledger.last().map(|r| r.int_gradh_sq).unwrap_or(0.0);
    report.int_v2 = v2.ledger.last().map(|r| r.int_gradh_sq).unwrap_or(0.0);
    report.int_z = z
        .trajectory
        .ledger
        .last()
        .map(|r| r.int_gradh_sq)
        .unwrap_or(0.0);
    report.max_consistency = z
        .consistency
        .iter()
        .map(|&(_, g)| g)
        .fold(0.0f64, f64::max);

    // Recomposed full velocity u = v + z on the shared per-step snapshots.
    let n = v.snapshots.len();
    let mut prev_g = 0.0;
    let mut int_u = 0.0;
    for k in 0..n {
        let (step_v, sv) = &v.snapshots[k];
        let (step_z, sz) = &z.trajectory.snapshots[k];
        if step_v != step_z {
            return Err(ExpError::Run("split trajectories lost step alignment".into()));
        }
        let mut u_k = sv.clone();
        u_k.axpy(1.0, sz);
        let g = norms::gradh_sq(&u_k);
        if k > 0 {
            int_u += 0.5 * (prev_g + g) * report.dt_eff;
        }
        prev_g = g;

        let mut sum = v1.snapshots[k].1.clone();
        sum.axpy(1.0, &v2.snapshots[k].1);
        sum.axpy(-1.0, sv);
        let rel = norms::l2_sq(&sum).sqrt() / norms::l2_sq(sv).sqrt().max(1e-300);
        report.superposition_residual = report.superposition_residual.max(rel);

        let row_v1 = &v1.ledger.rows()[k];
        let row_v2 = &v2.ledger.rows()[k];
        let row_z = &z.trajectory.ledger.rows()[k];
        let row_v = &v.ledger.rows()[k];
        let (b1, b2) = gronwall_integrands(row_v, nu, c0);
        report.rows.push(LocalRow {
            t: row_v.time,
            v1_gradh_sq: row_v1.gradh_sq,
            v2_gradh_sq: row_v2.gradh_sq,
            z_gradh_sq: row_z.gradh_sq,
            u_gradh_sq: g,
            int_u_gradh_sq: int_u,
            b1,
            b2,
        });
    }
    report.int_u = int_u;
    Ok(report)
}

fn partial_sum(basis: &StokesEigenBasis, coeffs: &[f64], k: usize) -> VectorField {
    let mut out = VectorField::zeros(*basis.grid());
    out.tag = crate::field::Tag::Solenoidal;
    for j in 0..k {
        out.axpy(coeffs[j], &basis.fields[j]);
    }
    out
}

fn run_local_existence(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    hash: u64,
) -> Result<DriverOutput, ExpError> {
    let le = cfg
        .local_existence
        .as_ref()
        .ok_or_else(|| ExpError::Run("local-existence needs a [local_existence] section".into()))?;
    let grid = cfg.grid.build()?;
    let params = cfg.params.build()?;
    let spec = initial_spec(cfg, None)?;
    let v0 = build_run_field(&grid, &spec)?;
    let run_grid = *v0.grid();
    let consts = estimate_constants(&run_grid, le.n_samples).map_err(run_err)?;
    let report = local_existence_analysis(
        &v0,
        params,
        le.delta,
        le.delta0,
        le.basis_modes,
        consts.c0_est,
    )?;

    let mut out = DriverOutput::new();
    out.constants = Some(consts);
    out.extra("family", spec.name());
    out.extra("delta", fmt_f(report.delta));
    out.extra("delta0", fmt_f(report.delta0));
    out.extra("achievable_delta0", fmt_f(report.achievable_delta0));

    let Some(k0) = report.k0 else {
        out.checks.push(CheckRow::new(
            "cutoff-found",
            hash,
            false,
            report.achievable_delta0,
        ));
        return Ok(out);
    };

    let csv: Vec<String> = report
        .rows
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{},{},{},{},{}",
                r.t,
                r.v1_gradh_sq,
                r.v2_gradh_sq,
                r.z_gradh_sq,
                r.u_gradh_sq,
                r.int_u_gradh_sq,
                r.b1,
                r.b2
            )
        })
        .collect();
    let table = out_dir.join("local_existence.csv");
    io::write_table_csv(
        &table,
        "t,v1_gradh_sq,v2_gradh_sq,z_gradh_sq,u_gradh_sq,int_u_gradh_sq,b1,b2",
        &csv,
    )?;
    out.artifacts.push(table);

    out.checks
        .push(CheckRow::new("cutoff-found", hash, true, k0 as f64));
    out.checks.push(CheckRow::new(
        "runs-completed",
        hash,
        report.all_completed,
        if report.all_completed { 4.0 } else { 0.0 },
    ));
    let q = report.delta0 / 4.0;
    out.checks.push(CheckRow::new(
        "low-modes-budget",
        hash,
        report.int_v1 <= SPLIT_SLACK * q,
        report.int_v1 / q.max(1e-300),
    ));
    out.checks.push(CheckRow::new(
        "high-modes-budget",
        hash,
        report.int_v2 <= SPLIT_SLACK * q,
        report.int_v2 / q.max(1e-300),
    ));
    let zq = report.delta / 2.0;
    out.checks.push(CheckRow::new(
        "perturbation-budget",
        hash,
        report.int_z <= SPLIT_SLACK * zq,
        report.int_z / zq.max(1e-300),
    ));
    out.checks.push(CheckRow::new(
        "full-velocity-budget",
        hash,
        report.int_u <= SPLIT_SLACK * report.delta,
        report.int_u / report.delta.max(1e-300),
    ));

    out.extra("k0", k0);
    out.extra("lambda_next", fmt_f(report.lambda_next));
    out.extra("t0", fmt_f(report.t0));
    out.extra("dt_eff", fmt_f(report.dt_eff));
    out.extra(
        "superposition_residual",
        fmt_f(report.superposition_residual),
    );
    out.extra("max_consistency", fmt_f(report.max_consistency));
    Ok(out)
}

// ---------------------------------------------------------------------------
// density-demo
// ---------------------------------------------------------------------------

fn run_density_demo(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    hash: u64,
) -> Result<DriverOutput, ExpError> {
    let d = cfg.density.clone().unwrap_or(DensityConfig {
        levels: 8,
        scale_offset: 0.5,
    });
    let grid = cfg.grid.build()?;
    let spec = initial_spec(
        cfg,
        Some(FamilySpec::BoundaryLayer {
            amplitude: 1.0,
            width: 0.15,
        }),
    )?;
    // The approximation runs on the configured grid directly; the wall
    // conditions it certifies are the half-cylinder ones.
    let u = samples::build(&grid, &spec).map_err(run_err)?;
    let margin0 = lateral_support_margin(&u);
    if margin0 <= 0.0 {
        return Err(ExpError::Run(
            "density-demo needs laterally compact initial data".into(),
        ));
    }
    let eta1 = (0.5 * margin0).min(0.5 * d.scale_offset);
    let lambdas: Vec<f64> = (0..d.levels)
        .map(|k| 1.0 + d.scale_offset * 0.5f64.powi(k as i32))
        .collect();
    let etas: Vec<f64> = (0..d.levels)
        .map(|k| eta1 * 0.5f64.powi(k as i32))
        .collect();
    let levels = density_approximation(&u, &lambdas, &etas).map_err(run_err)?;

    let csv: Vec<String> = levels
        .iter()
        .map(|l| {
            format!(
                "{},{},{},{},{}",
                l.lambda, l.eta, l.error_h01, l.support_margin, l.max_abs_div
            )
        })
        .collect();
    let table = out_dir.join("density.csv");
    io::write_table_csv(
        &table,
        "lambda,eta,error_h01,support_margin,max_abs_div",
        &csv,
    )?;

    let mut out = DriverOutput::new();
    out.artifacts.push(table);

    let min_margin = levels
        .iter()
        .map(|l| l.support_margin)
        .fold(f64::INFINITY, f64::min);
    out.checks.push(CheckRow::new(
        "margins-positive",
        hash,
        min_margin > 0.0,
        min_margin,
    ));
    let first_err = levels.first().map(|l| l.error_h01).unwrap_or(0.0);
    let last_err = levels.last().map(|l| l.error_h01).unwrap_or(0.0);
    let contracts = levels.len() < 2 || last_err < first_err || first_err == 0.0;
    out.checks.push(CheckRow::new(
        "errors-contract",
        hash,
        contracts,
        last_err / first_err.max(1e-300),
    ));
    let u_h01 = norms::norm(&u, Norm::H01);
    let floor_ok = last_err < 1e-2 * u_h01 || (last_err == 0.0 && u_h01 == 0.0);
    out.checks.push(CheckRow::new(
        "relative-error-floor",
        hash,
        floor_ok,
        last_err / u_h01.max(1e-300),
    ));
    // Interpolation-order solenoidality: the approximant divergence decays
    // linearly with λ−1 down to the data's own divergence floor. The slope
    // is anchored on the two coarsest levels, as the widest mollifier can
    // smooth the very first level's divergence below the trend line.
    let div_floor = 10.0 * operators::max_abs_div(&u) + operators::solenoidal_bound(&u);
    let anchor = levels
        .iter()
        .take(2)
        .map(|l| l.max_abs_div / (l.lambda - 1.0))
        .fold(0.0f64, f64::max);
    let mut div_ok = true;
    let mut worst_div_ratio = 0.0f64;
    for l in &levels {
        let allowance = 2.0 * anchor * (l.lambda - 1.0) + div_floor;
        worst_div_ratio = worst_div_ratio.max(l.max_abs_div / allowance.max(1e-300));
        if l.max_abs_div > allowance {
            div_ok = false;
        }
    }
    out.checks.push(CheckRow::new(
        "divergence-interpolation-order",
        hash,
        div_ok,
        worst_div_ratio,
    ));

    out.extra("family", spec.name());
    out.extra("levels", levels.len());
    out.extra("initial_margin", fmt_f(margin0));
    out.extra("h01_norm", fmt_f(u_h01));
    Ok(out)
}

// ---------------------------------------------------------------------------
// constants
// ---------------------------------------------------------------------------

fn constants_row(grid: &Grid, c: &EmpiricalConstants) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        grid.nx,
        grid.ny,
        grid.nz,
        grid.half_domain,
        c.c0_est,
        c.c1_est,
        c.c2_est,
        c.c3_est,
        c.lambda0,
        c.n_samples,
        c.n_used[0],
        c.n_used[1],
        c.n_used[2],
        c.argmax[0],
        c.argmax[2]
    )
}

fn run_constants(cfg: &ExperimentConfig, out_dir: &Path, hash: u64) -> Result<DriverOutput, ExpError> {
    let cc = cfg.constants.clone().unwrap_or_default();
    let grid = cfg.grid.build()?;
    let consts = estimate_constants(&grid, cc.n_samples).map_err(run_err)?;

    let mut rows = vec![constants_row(&grid, &consts)];
    let mut out = DriverOutput::new();
    out.checks.push(CheckRow::new(
        "constants-valid",
        hash,
        consts.validate().is_ok(),
        consts.c0_est,
    ));

    if cc.compare_refined {
        let fine = build_grid(2 * grid.nx, 2 * grid.ny, grid.nz, grid.lx, grid.ly, grid.half_domain)
            .map_err(run_err)?;
        let fine_consts = estimate_constants(&fine, cc.n_samples).map_err(run_err)?;
        rows.push(constants_row(&fine, &fine_consts));
        let drift = (fine_consts.c0_est / consts.c0_est - 1.0).abs();
        out.checks.push(CheckRow::new(
            "interpolation-constant-drift",
            hash,
            drift < 0.20,
            drift,
        ));
        out.extra("c0_refined", fmt_f(fine_consts.c0_est));
    }

    let table = out_dir.join("constants.csv");
    io::write_table_csv(
        &table,
        "nx,ny,nz,half_domain,c0_est,c1_est,c2_est,c3_est,lambda0,n_samples,\
         used_interp,used_transport,used_shear,argmax_interp,argmax_shear",
        &rows,
    )?;
    out.artifacts.push(table);
    out.constants = Some(consts);
    Ok(out)
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::samples::random_solenoidal;

    fn temp_out(name: &str) -> PathBuf {
        let p = std::env::temp_dir().join(format!("nsaniso-exp-{}-{name}", std::process::id()));
        let _ = std::fs::remove_dir_all(&p);
        p
    }

    fn toml_cfg(text: &str) -> ExperimentConfig {
        ExperimentConfig::from_toml(text).unwrap()
    }

    const SIM: &str = r#"
experiment = "simulate"

[grid]
nx = 8
ny = 8
nz = 8

[params]
nu_h = 1.0
eps = 1e-2
dt = 1e-2
t_end = 5e-2
snapshot_stride = 2

[initial]
family = "planar-vortex"
amplitude = 0.5
"#;

    #[test]
    fn simulate_passes_and_reruns_bit_identically() {
        let cfg = toml_cfg(SIM);
        let d1 = temp_out("sim1");
        let d2 = temp_out("sim2");
        let o1 = run(&cfg, &d1, None).unwrap();
        let o2 = run(&cfg, &d2, None).unwrap();
        assert!(o1.all_passed(), "failed: {:?}", o1.first_failure());
        for f in ["ledger.csv", "checks.csv", "manifest.txt", "final_state.bin"] {
            let a = std::fs::read(d1.join(f)).unwrap();
            let b = std::fs::read(d2.join(f)).unwrap();
            assert_eq!(a, b, "artifact {f} differs between identical runs");
        }
        // stride-2 snapshots: steps 0, 2, 4, 5
        for s in [0usize, 2, 4, 5] {
            assert!(d1.join("snapshots").join(format!("step_{s:06}.bin")).exists());
        }
        assert_eq!(o2.name, "simulate");
        let _ = std::fs::remove_dir_all(&d1);
        let _ = std::fs::remove_dir_all(&d2);
    }

    #[test]
    fn simulate_on_half_grid_checks_reflection_invariance() {
        let cfg = toml_cfg(&SIM.replace("nz = 8", "nz = 8\nhalf_domain = true"));
        let dir = temp_out("sim-half");
        let o = run(&cfg, &dir, None).unwrap();
        assert!(o.all_passed(), "failed: {:?}", o.first_failure());
        assert!(o.checks.iter().any(|c| c.name == "reflection-invariance"));
        let _ = std::fs::remove_dir_all(&dir);
    }

    #[test]
    fn eps_sweep_orders_and_monotonicity() {
        let text = SIM.replace("\"simulate\"", "\"eps-sweep\"")
            + "\n[sweep]\neps_values = [4e-2, 2e-2, 1e-2, 5e-3]\n";
        let cfg = toml_cfg(&text);
        let dir = temp_out("sweep");
        let o = run(&cfg, &dir, Some(2)).unwrap();
        let get = |n: &str| o.checks.iter().find(|c| c.name == n).unwrap();
        assert!(get("runs-completed").passed);
        assert!(get("gaps-strictly-decreasing").passed);
        let order = get("order-in-window");
        assert!(
            order.passed,
            "fitted order {} outside [0.67, 1.5]",
            order.value
        );
        assert!(dir.join("sweep.csv").exists());
        let _ = std::fs::remove_dir_all(&dir);
    }

    #[test]
    fn smallness_zero_amplitude_and_implications() {
        let text = SIM.replace("\"simulate\"", "\"smallness-sweep\"")
            + "\n[smallness]\namplitudes = [0.0, 0.5]\neta_values = []\nn_samples = 100\n";
        let cfg = toml_cfg(&text);
        let dir = temp_out("smallness");
        let o = run(&cfg, &dir, None).unwrap();
        let get = |n: &str| o.checks.iter().find(|c| c.name == n).unwrap();
        assert!(get("zero-amplitude-trivial").passed);
        assert!(get("implications-hold").passed);
        assert!(dir.join("smallness.csv").exists());
        let _ = std::fs::remove_dir_all(&dir);
    }

    #[test]
    fn steep_shear_family_separates_the_two_admission_tests() {
        let text = r#"
experiment = "smallness-sweep"

[grid]
nx = 8
ny = 8
nz = 24

[params]
nu_h = 1.0
eps = 1e-2
dt = 1e-2
t_end = 2e-2

[smallness]
amplitudes = []
eta_values = [0.1]
alpha = 0.25
n_samples = 100
"#;
        let cfg = toml_cfg(text);
        let dir = temp_out("smallness-eta");
        let o = run(&cfg, &dir, None).unwrap();
        let sep = o
            .checks
            .iter()
            .find(|c| c.name == "steep-shear-separation")
            .unwrap();
        assert!(sep.passed, "separation failed on {} rows", sep.value);
        assert!(sep.value >= 1.0, "no steep-shear rows were produced");
        let _ = std::fs::remove_dir_all(&dir);
    }

    #[test]
    fn t0_bound_monotonicities() {
        let t = t0_bound(0.5, 30.0, 0.01, 1.0);
        assert!(t0_bound(0.25, 30.0, 0.01, 1.0) < t);
        assert!(t0_bound(0.5, 60.0, 0.01, 1.0) < t);
        assert!(t0_bound(0.5, 30.0, 0.02, 1.0) < t);
        assert!(t > 0.0);
    }

    #[test]
    fn first_eigenfield_gives_trivial_splitting() {
        let g = build_grid(8, 8, 8, 1.0, 1.0, false).unwrap();
        let basis = stokes_eigenbasis(&g, 3, 1.0).unwrap();
        let mut v0 = basis.fields[0].clone();
        v0.scale(0.05);
        let params = SolverParams::new(1.0, 1e-2, 1e-2, 1.0);
        let report =
            local_existence_analysis(&v0, params, 0.1, None, 8, 1.0).unwrap();
        assert_eq!(report.k0, Some(1));
        // The high-mode half of the data vanishes, so its budget is idle.
        assert!(
            report.int_v2 <= 1e-12 * report.int_v1.max(1e-300),
            "int_v2 {} vs int_v1 {}",
            report.int_v2,
            report.int_v1
        );
        assert!(report.all_completed);
        assert!(report.t0 > 0.0 && report.dt_eff > 0.0);
        assert!(report.superposition_residual < 1e-10);
    }

    #[test]
    fn shallow_basis_reports_achievable_budget() {
        let g = build_grid(8, 8, 8, 1.0, 1.0, false).unwrap();
        let v0 = random_solenoidal(&g, 1.0, 7).unwrap();
        let params = SolverParams::new(1.0, 1e-2, 1e-2, 1.0);
        // delta0 far below what one retained mode can certify.
        let report = local_existence_analysis(&v0, params, 1e-12, None, 1, 1.0).unwrap();
        assert_eq!(report.k0, None);
        assert!(report.achievable_delta0 > 1e-12);
        assert!(report.rows.is_empty());
    }

    #[test]
    fn local_existence_driver_meets_its_budgets() {
        let text = r#"
experiment = "local-existence"

[grid]
nx = 8
ny = 8
nz = 8

[params]
nu_h = 1.0
eps = 1e-2
dt = 2e-3
t_end = 1.0

[initial]
family = "random-solenoidal"
amplitude = 0.1
seed = 11

[local_existence]
delta = 0.2
basis_modes = 8
n_samples = 100
"#;
        let cfg = toml_cfg(text);
        let dir = temp_out("local");
        let o = run(&cfg, &dir, None).unwrap();
        assert!(o.all_passed(), "failed: {:?}", o.first_failure());
        assert!(dir.join("local_existence.csv").exists());
        let _ = std::fs::remove_dir_all(&dir);
    }

    #[test]
    fn density_demo_reaches_the_percent_floor() {
        let text = r#"
experiment = "density-demo"

[grid]
nx = 24
ny = 24
nz = 16
half_domain = true

[params]
nu_h = 1.0
dt = 1e-2
t_end = 1e-1

[initial]
family = "boundary-layer"
amplitude = 1.0
width = 0.2

[density]
levels = 8
scale_offset = 0.5
"#;
        let cfg = toml_cfg(text);
        let dir = temp_out("density");
        let o = run(&cfg, &dir, None).unwrap();
        assert!(o.all_passed(), "failed: {:?}", o.first_failure());
        assert!(dir.join("density.csv").exists());
        let _ = std::fs::remove_dir_all(&dir);
    }

    #[test]
    fn constants_driver_writes_and_validates() {
        let text = r#"
experiment = "constants"

[grid]
nx = 8
ny = 8
nz = 8

[params]
nu_h = 1.0
dt = 1e-2
t_end = 1e-1

[constants]
n_samples = 100
compare_refined = false
"#;
        let cfg = toml_cfg(text);
        let dir = temp_out("constants");
        let o = run(&cfg, &dir, None).unwrap();
        assert!(o.all_passed(), "failed: {:?}", o.first_failure());
        let table = std::fs::read_to_string(dir.join("constants.csv")).unwrap();
        assert_eq!(table.lines().count(), 2, "one header + one row expected");
        let _ = std::fs::remove_dir_all(&dir);
    }
}
