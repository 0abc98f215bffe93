//! Time integration of the anisotropic-viscosity flow on the extended
//! (vertically periodic, laterally walled) domain: a split implicit/explicit
//! Euler scheme and a two-step Adams–Bashforth / Crank–Nicolson scheme for
//! the nonlinear equation, a constraint-coupled backward Euler scheme for
//! the linear diffusion flow, and a perturbation driver that evolves the
//! difference between the two.
//!
//! Every step records a scheme-exact energy identity in the ledger: the
//! dissipation increment is assembled from the same discrete pairings the
//! implicit solve inverts, so the per-step residual sits at roundoff.

use crate::diagnostics::EnergyLedger;
use crate::field::VectorField;
use crate::grid::Grid;
use crate::linsolve::VelocitySolver;
use crate::norms::{self, InnerKind};
use crate::operators::{self, OpError};
use crate::stokes;
use crate::symmetry::{self, SymmetryError};

/// Time-stepping scheme for the nonlinear equation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    /// Explicit transport, implicit diffusion, projection; first order.
    ImexEuler,
    /// Two-step Adams–Bashforth transport with Crank–Nicolson diffusion;
    /// the first step falls back to the explicit Euler transport.
    Ab2CrankNicolson,
}

impl Scheme {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::ImexEuler => "imex-euler",
            Scheme::Ab2CrankNicolson => "ab2-crank-nicolson",
        }
    }
}

/// Termination status of a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Completed,
    BlowupDetected,
    SolverFailure,
}

impl Status {
    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Completed => "completed",
            Status::BlowupDetected => "blowup_detected",
            Status::SolverFailure => "solver_failure",
        }
    }
}

/// Integration parameters. `nu_h` scales the horizontal Laplacian, `eps`
/// the vertical one (zero switches vertical diffusion off entirely).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverParams {
    pub nu_h: f64,
    pub eps: f64,
    pub dt: f64,
    pub t_end: f64,
    /// Advective CFL bound `dt·Σ_d max|u_d|/h_d` tolerated before refusing
    /// the step.
    pub cfl_cap: f64,
    /// Run is declared blown up when `‖u‖_{H¹}` exceeds this multiple of
    /// its initial value.
    pub blowup_threshold: f64,
    pub scheme: Scheme,
    /// Include the transport term (off gives pure anisotropic diffusion).
    pub advection: bool,
    /// Keep every `stride`-th state (plus first and last); 0 keeps only
    /// the endpoints.
    pub snapshot_stride: usize,
}

impl SolverParams {
    pub fn new(nu_h: f64, eps: f64, dt: f64, t_end: f64) -> SolverParams {
        SolverParams {
            nu_h,
            eps,
            dt,
            t_end,
            cfl_cap: 0.5,
            blowup_threshold: 1e3,
            scheme: Scheme::ImexEuler,
            advection: true,
            snapshot_stride: 0,
        }
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.nu_h > 0.0 && self.nu_h.is_finite()) {
            return Err(SolverError::BadParams("nu_h must be positive and finite"));
        }
        if !(self.eps >= 0.0 && self.eps.is_finite()) {
            return Err(SolverError::BadParams("eps must be nonnegative and finite"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(SolverError::BadParams("dt must be positive and finite"));
        }
        if !(self.t_end >= self.dt && self.t_end.is_finite()) {
            return Err(SolverError::BadParams("t_end must allow at least one step"));
        }
        if !(self.cfl_cap > 0.0) {
            return Err(SolverError::BadParams("cfl_cap must be positive"));
        }
        if !(self.blowup_threshold > 1.0) {
            return Err(SolverError::BadParams("blowup_threshold must exceed 1"));
        }
        Ok(())
    }

    /// Number of fixed-width steps covering `[0, t_end]`.
    pub fn n_steps(&self) -> usize {
        ((self.t_end / self.dt - 1e-9).ceil() as usize).max(1)
    }
}

/// Errors surfaced while setting up a run. Failures after the first
/// accepted step are reported through [`Status::SolverFailure`] on the
/// returned trajectory instead.
#[derive(Debug)]
pub enum SolverError {
    BadParams(&'static str),
    CflViolation { cfl: f64, suggested_dt: f64 },
    StrideMismatch,
    Op(OpError),
    Symmetry(SymmetryError),
}

impl std::fmt::Display for SolverError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SolverError::BadParams(m) => write!(f, "invalid parameters: {m}"),
            SolverError::CflViolation { cfl, suggested_dt } => {
                write!(f, "advective CFL {cfl:.3} over cap; retry with dt <= {suggested_dt:.3e}")
            }
            SolverError::StrideMismatch => {
                write!(f, "driving trajectory must store every step (snapshot stride 1)")
            }
            SolverError::Op(e) => write!(f, "operator failure: {e}"),
            SolverError::Symmetry(e) => write!(f, "extension failure: {e}"),
        }
    }
}

impl std::error::Error for SolverError {}

impl From<OpError> for SolverError {
    fn from(e: OpError) -> SolverError {
        SolverError::Op(e)
    }
}

impl From<SymmetryError> for SolverError {
    fn from(e: SymmetryError) -> SolverError {
        SolverError::Symmetry(e)
    }
}

/// One completed run: states, energy ledger, and how it ended.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub grid: Grid,
    pub params: SolverParams,
    /// Times of the ledger rows (`k·dt`).
    pub times: Vec<f64>,
    /// `(step index, state)` pairs kept per the snapshot stride.
    pub snapshots: Vec<(usize, VectorField)>,
    pub ledger: EnergyLedger,
    pub status: Status,
    pub final_state: VectorField,
    /// Final time on completion; last accepted time otherwise.
    pub last_stable_time: f64,
    /// Failure description when `status == SolverFailure`.
    pub failure: Option<String>,
}

impl Trajectory {
    pub fn completed(&self) -> bool {
        self.status == Status::Completed
    }

    /// Maximum relative violation of the per-step energy identity.
    pub fn energy_balance_residual(&self) -> f64 {
        crate::diagnostics::energy_balance_residual(&self.ledger)
    }
}

/// Perturbation run: the evolved difference plus the sampled agreement
/// with whole-velocity steps.
#[derive(Clone, Debug)]
pub struct PerturbationRun {
    /// Trajectory of the difference field.
    pub trajectory: Trajectory,
    /// `(step, relative L² gap)` between the recomposed split state and a
    /// single monolithic step from the previous composite state.
    pub consistency: Vec<(usize, f64)>,
}

// ---------------------------------------------------------------------------
// Stepping kernel
// ---------------------------------------------------------------------------

struct StepOutput {
    state: VectorField,
    adv_inner: f64,
    diss_increment: f64,
    step_residual: f64,
}

/// `ν_h‖∇_h f‖² + ε‖∂₃ f‖²` — the exact discrete pairing `(A f, f)` of the
/// diffusion operator the implicit solves invert.
fn diffusion_pairing(f: &VectorField, nu_h: f64, eps: f64) -> f64 {
    nu_h * norms::gradh_sq(f) + eps * norms::dz_sq(f)
}

fn advective_cfl(u: &VectorField, g: &Grid, dt: f64) -> f64 {
    let max_abs = |vals: &[f64]| vals.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    dt * (max_abs(u.u1.values()) / g.dx
        + max_abs(u.u2.values()) / g.dy
        + max_abs(u.u3.values()) / g.dz)
}

struct Integrator {
    grid: Grid,
    params: SolverParams,
    vs: VelocitySolver,
    /// Previous transport term for the two-step scheme.
    prev_adv: Option<VectorField>,
}

impl Integrator {
    fn new(grid: Grid, params: SolverParams) -> Integrator {
        Integrator {
            grid,
            params,
            vs: VelocitySolver::new(grid),
            prev_adv: None,
        }
    }

    fn check_cfl(&self, u: &VectorField) -> Result<f64, SolverError> {
        if !self.params.advection {
            return Ok(0.0);
        }
        let cfl = advective_cfl(u, &self.grid, self.params.dt);
        if cfl > self.params.cfl_cap {
            return Err(SolverError::CflViolation {
                cfl,
                suggested_dt: 0.9 * self.params.dt * self.params.cfl_cap / cfl,
            });
        }
        Ok(cfl)
    }

    /// One step of the nonlinear equation with the transport velocity
    /// `carrier` (equal to `u` except in the perturbation driver). Returns
    /// the projected new state with the exact energy bookkeeping.
    fn step_nonlinear(&mut self, u: &VectorField, carrier: Option<&VectorField>) -> Result<StepOutput, SolverError> {
        let p = self.params;
        let dt = p.dt;
        let l2_old = norms::l2_sq(u);
        let transport = carrier.unwrap_or(u);
        self.check_cfl(transport)?;

        let n = if p.advection {
            operators::advect(transport, transport)?
        } else {
            VectorField::zeros(self.grid)
        };
        let adv_inner = if p.advection {
            norms::inner(&n, u, InnerKind::L2)
        } else {
            0.0
        };

        match p.scheme {
            Scheme::ImexEuler => {
                // w = u − dt·N; (I + dt·A)us = w; u⁺ = us − Gφ.
                let mut w = u.clone();
                w.axpy(-dt, &n);
                let coef = [dt * p.nu_h, dt * p.nu_h, dt * p.eps];
                let us = self.vs.solve_shifted(&w, coef, 1.0);
                let proj = operators::leray_project(&us)?;
                let gphi = operators::pressure_gradient(&proj.potential);
                // ‖u⁺‖² = ‖u‖² − 2dt(N,u) + dt²‖N‖² − 2dt·Q(us)
                //         − ‖w−us‖² − ‖Gφ‖² − 2(u⁺,Gφ), all exact.
                let mut incr = w.clone();
                incr.axpy(-1.0, &us);
                let diss = 2.0 * dt * adv_inner - dt * dt * norms::l2_sq(&n)
                    + 2.0 * dt * diffusion_pairing(&us, p.nu_h, p.eps)
                    + norms::l2_sq(&incr)
                    + norms::l2_sq(&gphi)
                    + 2.0 * norms::inner(&proj.field, &gphi, InnerKind::L2);
                let l2_new = norms::l2_sq(&proj.field);
                let step_residual = (l2_new - l2_old + diss) / l2_old.max(l2_new).max(1e-30);
                Ok(StepOutput {
                    state: proj.field,
                    adv_inner,
                    diss_increment: diss,
                    step_residual,
                })
            }
            Scheme::Ab2CrankNicolson => {
                let mut a = n.clone();
                if p.advection {
                    if let Some(prev) = &self.prev_adv {
                        a.scale(1.5);
                        a.axpy(-0.5, prev);
                    }
                    self.prev_adv = Some(n);
                }
                let half = [0.5 * dt * p.nu_h, 0.5 * dt * p.nu_h, 0.5 * dt * p.eps];
                // (I + (dt/2)A)us = u − dt·a + (dt/2)Δu
                let mut rhs = u.clone();
                rhs.axpy(-dt, &a);
                rhs.axpy(1.0, &operators::apply_vector_laplacian(u, half));
                let us = self.vs.solve_shifted(&rhs, half, 1.0);
                let proj = operators::leray_project(&us)?;
                let gphi = operators::pressure_gradient(&proj.potential);
                // With m = (us+u)/2:
                // ‖us‖² − ‖u‖² = −2dt(a,m) − 2dt·Q(m), then the projection
                // removes ‖Gφ‖² + 2(u⁺,Gφ); no increment-squared term.
                let mut m = us.clone();
                m.axpy(1.0, u);
                m.scale(0.5);
                let diss = 2.0 * dt * norms::inner(&a, &m, InnerKind::L2)
                    + 2.0 * dt * diffusion_pairing(&m, p.nu_h, p.eps)
                    + norms::l2_sq(&gphi)
                    + 2.0 * norms::inner(&proj.field, &gphi, InnerKind::L2);
                let l2_new = norms::l2_sq(&proj.field);
                let step_residual = (l2_new - l2_old + diss) / l2_old.max(l2_new).max(1e-30);
                Ok(StepOutput {
                    state: proj.field,
                    adv_inner,
                    diss_increment: diss,
                    step_residual,
                })
            }
        }
    }

    /// One constraint-coupled backward Euler step of the linear diffusion
    /// flow: `(I + dt·A)v⁺ + Gq = v`, `div v⁺ = 0`.
    fn step_linear(&self, v: &VectorField) -> Result<StepOutput, SolverError> {
        let p = self.params;
        let dt = p.dt;
        let l2_old = norms::l2_sq(v);
        let coef = [dt * p.nu_h, dt * p.nu_h, dt * p.eps];
        let (w, q, _iters) = stokes::coupled_stokes_solve(&self.vs, v, coef, 1.0)?;
        let gq = operators::pressure_gradient(&q);
        // ‖v‖² = ‖v⁺‖² + 2dt·Q(v⁺) + 2(v⁺,Gq) + ‖v−v⁺‖², exact.
        let mut incr = v.clone();
        incr.axpy(-1.0, &w);
        let diss = 2.0 * dt * diffusion_pairing(&w, p.nu_h, p.eps)
            + 2.0 * norms::inner(&w, &gq, InnerKind::L2)
            + norms::l2_sq(&incr);
        let l2_new = norms::l2_sq(&w);
        let step_residual = (l2_new - l2_old + diss) / l2_old.max(l2_new).max(1e-30);
        Ok(StepOutput {
            state: w,
            adv_inner: 0.0,
            diss_increment: diss,
            step_residual,
        })
    }
}

// ---------------------------------------------------------------------------
// Run drivers
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, PartialEq)]
enum StepKind {
    Nonlinear,
    LinearStokes,
}

/// Extends half-domain input to the full vertically periodic domain and
/// verifies the discrete divergence; full-domain input passes through.
fn prepare_initial(u0: &VectorField) -> Result<VectorField, SolverError> {
    let u = if u0.grid().half_domain {
        symmetry::sigma_extend(u0)?
    } else {
        u0.clone()
    };
    operators::check_solenoidal(&u)?;
    Ok(u)
}

fn want_snapshot(step: usize, stride: usize, n_steps: usize) -> bool {
    step == 0 || step == n_steps || (stride > 0 && step % stride == 0)
}

fn run_driver(u0: VectorField, params: SolverParams, kind: StepKind) -> Result<Trajectory, SolverError> {
    params.validate()?;
    let grid = *u0.grid();
    let mut integ = Integrator::new(grid, params);
    if kind == StepKind::Nonlinear {
        // Refuse clearly under-resolved setups outright.
        integ.check_cfl(&u0)?;
    }
    let n_steps = params.n_steps();
    let dt = params.dt;

    let mut ledger = EnergyLedger::new();
    ledger.push_state(0.0, &u0, 0.0, 0.0, 0.0);
    let initial_h1 = ledger.rows()[0].h1_sq().sqrt();

    let mut snapshots: Vec<(usize, VectorField)> = Vec::new();
    if want_snapshot(0, params.snapshot_stride, n_steps) {
        snapshots.push((0, u0.clone()));
    }

    let mut state = u0;
    let mut status = Status::Completed;
    let mut failure = None;
    let mut last_stable_time = 0.0;

    for k in 0..n_steps {
        let out = match kind {
            StepKind::Nonlinear => integ.step_nonlinear(&state, None),
            StepKind::LinearStokes => integ.step_linear(&state),
        };
        let out = match out {
            Ok(o) => o,
            Err(e) => {
                status = Status::SolverFailure;
                failure = Some(format!("step {}: {e}", k + 1));
                break;
            }
        };
        if out.state.first_non_finite().is_some() {
            status = Status::SolverFailure;
            failure = Some(format!("step {}: non-finite value", k + 1));
            break;
        }
        let t = (k + 1) as f64 * dt;
        state = out.state;
        ledger.push_state(t, &state, out.adv_inner, out.diss_increment, out.step_residual);
        if initial_h1 > 0.0 {
            let h1 = ledger.last().expect("row").h1_sq().sqrt();
            if h1 > params.blowup_threshold * initial_h1 {
                status = Status::BlowupDetected;
                break;
            }
        }
        last_stable_time = t;
        if want_snapshot(k + 1, params.snapshot_stride, n_steps) {
            snapshots.push((k + 1, state.clone()));
        }
    }
    if snapshots.last().map(|(s, _)| *s) != ledger.last().map(|r| (r.time / dt).round() as usize) {
        let step = (ledger.last().expect("row").time / dt).round() as usize;
        snapshots.push((step, state.clone()));
    }
    let times = ledger.rows().iter().map(|r| r.time).collect();
    Ok(Trajectory {
        grid,
        params,
        times,
        snapshots,
        ledger,
        status,
        final_state: state,
        last_stable_time,
        failure,
    })
}

/// Integrates the nonlinear anisotropic equation from `u0` (half-domain
/// input is extended first). Setup problems error; failures after the
/// first accepted step end the trajectory with a failure status instead.
pub fn solve_nse(u0: &VectorField, params: SolverParams) -> Result<Trajectory, SolverError> {
    let u = prepare_initial(u0)?;
    run_driver(u, params, StepKind::Nonlinear)
}

/// Integrates the linear anisotropic diffusion flow under the divergence
/// constraint (no transport term regardless of `params.advection`).
pub fn solve_stokes_linear(v0: &VectorField, params: SolverParams) -> Result<Trajectory, SolverError> {
    let v = prepare_initial(v0)?;
    run_driver(v, params, StepKind::LinearStokes)
}

/// Advances `u` by a single step of the nonlinear scheme.
pub fn step_nse(u: &VectorField, params: SolverParams) -> Result<VectorField, SolverError> {
    params.validate()?;
    let u = prepare_initial(u)?;
    let grid = *u.grid();
    let mut integ = Integrator::new(grid, params);
    Ok(integ.step_nonlinear(&u, None)?.state)
}

/// Evolves the difference `z = u − v` from zero, where `v` is the supplied
/// linear-flow trajectory and `u` solves the nonlinear equation from the
/// same initial state: each step transports with the recomposed velocity
/// `v_k + z_k`. Requires `v_traj` to store every step and to share `dt`,
/// horizon, viscosities, and the split Euler scheme with `params`.
pub fn solve_perturbation(v_traj: &Trajectory, params: SolverParams) -> Result<PerturbationRun, SolverError> {
    params.validate()?;
    if params.scheme != Scheme::ImexEuler {
        return Err(SolverError::BadParams("perturbation driver requires the split Euler scheme"));
    }
    if !params.advection {
        return Err(SolverError::BadParams("perturbation driver needs the transport term"));
    }
    if v_traj.status != Status::Completed {
        return Err(SolverError::BadParams("driving trajectory did not complete"));
    }
    let vp = v_traj.params;
    if vp.dt != params.dt || vp.n_steps() != params.n_steps() || vp.nu_h != params.nu_h || vp.eps != params.eps {
        return Err(SolverError::BadParams("perturbation parameters must match the driving run"));
    }
    let n_steps = params.n_steps();
    if v_traj.snapshots.len() != n_steps + 1
        || v_traj.snapshots.iter().enumerate().any(|(i, (s, _))| *s != i)
    {
        return Err(SolverError::StrideMismatch);
    }

    let grid = v_traj.grid;
    let dt = params.dt;
    let mut integ = Integrator::new(grid, params);
    let mut ledger = EnergyLedger::new();
    let z0 = VectorField::zeros(grid);
    ledger.push_state(0.0, &z0, 0.0, 0.0, 0.0);
    // The difference starts at zero; reference the driving flow instead.
    let blowup_ref = {
        let v0 = &v_traj.snapshots[0].1;
        (norms::l2_sq(v0) + norms::gradh_sq(v0) + norms::dz_sq(v0)).sqrt()
    };

    let sample_every = (n_steps / 16).max(1);
    let mut snapshots: Vec<(usize, VectorField)> = Vec::new();
    if want_snapshot(0, params.snapshot_stride, n_steps) {
        snapshots.push((0, z0.clone()));
    }
    let mut consistency = Vec::new();
    let mut state = z0;
    let mut status = Status::Completed;
    let mut failure = None;
    let mut last_stable_time = 0.0;

    for k in 0..n_steps {
        let mut carrier = v_traj.snapshots[k].1.clone();
        carrier.axpy(1.0, &state);
        let out = match integ.step_nonlinear(&state, Some(&carrier)) {
            Ok(o) => o,
            Err(e) => {
                status = Status::SolverFailure;
                failure = Some(format!("step {}: {e}", k + 1));
                break;
            }
        };
        if out.state.first_non_finite().is_some() {
            status = Status::SolverFailure;
            failure = Some(format!("step {}: non-finite value", k + 1));
            break;
        }
        let t = (k + 1) as f64 * dt;
        let prev = state;
        state = out.state;
        ledger.push_state(t, &state, out.adv_inner, out.diss_increment, out.step_residual);
        let h1 = ledger.last().expect("row").h1_sq().sqrt();
        if blowup_ref > 0.0 && h1 > params.blowup_threshold * blowup_ref {
            status = Status::BlowupDetected;
            break;
        }
        last_stable_time = t;
        if (k + 1) % sample_every == 0 || k + 1 == n_steps {
            // Recompose and compare against one whole-velocity step.
            let mut prev_u = v_traj.snapshots[k].1.clone();
            prev_u.axpy(1.0, &prev);
            match integ.step_nonlinear(&prev_u, None) {
                Ok(mono) => {
                    let mut split = v_traj.snapshots[k + 1].1.clone();
                    split.axpy(1.0, &state);
                    let mut gap = split;
                    gap.axpy(-1.0, &mono.state);
                    let scale = norms::l2_sq(&mono.state).sqrt().max(1e-30);
                    consistency.push((k + 1, norms::l2_sq(&gap).sqrt() / scale));
                }
                Err(e) => {
                    status = Status::SolverFailure;
                    failure = Some(format!("step {}: recomposition check: {e}", k + 1));
                    break;
                }
            }
        }
        if want_snapshot(k + 1, params.snapshot_stride, n_steps) {
            snapshots.push((k + 1, state.clone()));
        }
    }
    if snapshots.last().map(|(s, _)| *s) != ledger.last().map(|r| (r.time / dt).round() as usize) {
        let step = (ledger.last().expect("row").time / dt).round() as usize;
        snapshots.push((step, state.clone()));
    }
    let times = ledger.rows().iter().map(|r| r.time).collect();
    Ok(PerturbationRun {
        trajectory: Trajectory {
            grid,
            params,
            times,
            snapshots,
            ledger,
            status,
            final_state: state,
            last_stable_time,
            failure,
        },
        consistency,
    })
}
