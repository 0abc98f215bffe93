//! Energy bookkeeping and the inequality machinery built on top of it:
//! per-step ledgers, empirically estimated constants for the anisotropic
//! interpolation and transport inequalities, smallness thresholds that
//! predict bounded runs, and gap measures between trajectories.

use crate::field::{ScalarField, VectorField};
use crate::grid::Grid;
use crate::norms::{self, Exp};
use crate::operators::{self, OpError};
use crate::samples;
use crate::solver::Trajectory;
use crate::stokes;
use crate::tol;

/// Errors from estimators and trajectory comparisons.
#[derive(Debug, Clone, PartialEq)]
pub enum DiagError {
    TooFewSamples { requested: usize, minimum: usize },
    AllSamplesDegenerate,
    GridMismatch,
    MisalignedTrajectories(&'static str),
    EmptyLedger,
    Sample(String),
}

impl std::fmt::Display for DiagError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DiagError::TooFewSamples { requested, minimum } => {
                write!(f, "{requested} samples requested, minimum is {minimum}")
            }
            DiagError::AllSamplesDegenerate => {
                write!(f, "every sample had a vanishing right-hand side")
            }
            DiagError::GridMismatch => write!(f, "trajectories live on different grids"),
            DiagError::MisalignedTrajectories(why) => {
                write!(f, "trajectories not comparable: {why}")
            }
            DiagError::EmptyLedger => write!(f, "ledger holds no rows"),
            DiagError::Sample(e) => write!(f, "sample construction failed: {e}"),
        }
    }
}

impl std::error::Error for DiagError {}

// ---------------------------------------------------------------------------
// Energy ledger
// ---------------------------------------------------------------------------

/// One accepted step of a run: the instantaneous norms, running trapezoid
/// integrals of the dissipation-rate seminorms, and the scheme-exact
/// energy bookkeeping.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LedgerRow {
    pub time: f64,
    /// `‖u‖²_{L²}`
    pub l2_sq: f64,
    /// `‖∂₃u‖²_{L²}` (gap sense)
    pub d3_sq: f64,
    /// `‖∂₃²u‖²_{L²}` (collocated second difference)
    pub d33_sq: f64,
    /// `‖∇_h u‖²_{L²}` (gap sense)
    pub gradh_sq: f64,
    /// `‖∇_h ∂₃ u‖²_{L²}`
    pub gradh_d3_sq: f64,
    /// `‖∇_h ∂₃² u‖²_{L²}`
    pub gradh_d33_sq: f64,
    /// Trapezoid `∫₀ᵗ ‖∇_h u‖² ds`
    pub int_gradh_sq: f64,
    /// Trapezoid `∫₀ᵗ ‖∇_h ∂₃ u‖² ds`
    pub int_gradh_d3_sq: f64,
    /// Trapezoid `∫₀ᵗ ‖∇_h ∂₃² u‖² ds`
    pub int_gradh_d33_sq: f64,
    /// Signed skew-advection pairing `(u·∇u, u)` at this step's input.
    pub adv_residual: f64,
    /// Cumulative scheme-exact dissipated energy: the discrete identity
    /// `l2_sq(t) + diss_acc(t) = l2_sq(0)` holds to roundoff.
    pub diss_acc: f64,
    /// Relative residual of that identity over this single step.
    pub step_residual: f64,
}

impl LedgerRow {
    /// CSV column names; the leading columns follow the output-file
    /// convention used by the experiment drivers.
    pub const CSV_HEADER: &'static str = "t,L2_sq,d3_sq,gradh_sq,gradh_d3_sq,int_gradh_sq,\
d33_sq,gradh_d33_sq,int_gradh_d3_sq,int_gradh_d33_sq,adv_residual,diss_acc,step_residual";

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.time,
            self.l2_sq,
            self.d3_sq,
            self.gradh_sq,
            self.gradh_d3_sq,
            self.int_gradh_sq,
            self.d33_sq,
            self.gradh_d33_sq,
            self.int_gradh_d3_sq,
            self.int_gradh_d33_sq,
            self.adv_residual,
            self.diss_acc,
            self.step_residual
        )
    }

    /// `‖u‖²_{L²} + ‖∂₃u‖²_{L²}`, the anisotropic Sobolev energy.
    pub fn h01_sq(&self) -> f64 {
        self.l2_sq + self.d3_sq
    }

    /// `‖u‖² + ‖∇u‖²` with all first differences: the blow-up monitor.
    pub fn h1_sq(&self) -> f64 {
        self.l2_sq + self.gradh_sq + self.d3_sq
    }
}

/// Append-only per-run energy ledger.
#[derive(Clone, Debug, Default)]
pub struct EnergyLedger {
    rows: Vec<LedgerRow>,
}

impl EnergyLedger {
    pub fn new() -> EnergyLedger {
        EnergyLedger { rows: Vec::new() }
    }

    pub fn rows(&self) -> &[LedgerRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn first(&self) -> Option<&LedgerRow> {
        self.rows.first()
    }

    pub fn last(&self) -> Option<&LedgerRow> {
        self.rows.last()
    }

    /// Appends the state at `time`. The three scheme-level scalars are
    /// supplied by the integrator (zero for the initial row).
    pub fn push_state(
        &mut self,
        time: f64,
        u: &VectorField,
        adv_residual: f64,
        diss_increment: f64,
        step_residual: f64,
    ) {
        let gradh_sq = norms::gradh_sq(u);
        let gradh_d3_sq = norms::gradh_d3_sq(u);
        let gradh_d33_sq = norms::gradh_d33_sq(u);
        let (int_gradh_sq, int_gradh_d3_sq, int_gradh_d33_sq, diss_acc) = match self.rows.last() {
            Some(prev) => {
                assert!(time > prev.time, "ledger times must increase");
                let dt = time - prev.time;
                (
                    prev.int_gradh_sq + 0.5 * dt * (prev.gradh_sq + gradh_sq),
                    prev.int_gradh_d3_sq + 0.5 * dt * (prev.gradh_d3_sq + gradh_d3_sq),
                    prev.int_gradh_d33_sq + 0.5 * dt * (prev.gradh_d33_sq + gradh_d33_sq),
                    prev.diss_acc + diss_increment,
                )
            }
            None => (0.0, 0.0, 0.0, diss_increment),
        };
        self.rows.push(LedgerRow {
            time,
            l2_sq: norms::l2_sq(u),
            d3_sq: norms::dz_sq(u),
            d33_sq: norms::d33_sq(u),
            gradh_sq,
            gradh_d3_sq,
            gradh_d33_sq,
            int_gradh_sq,
            int_gradh_d3_sq,
            int_gradh_d33_sq,
            adv_residual,
            diss_acc,
            step_residual,
        });
    }

    /// Structural invariants: finite entries, nonnegative norms, strictly
    /// increasing times, nondecreasing integrals.
    pub fn validate(&self) -> Result<(), String> {
        let mut prev: Option<&LedgerRow> = None;
        for (n, r) in self.rows.iter().enumerate() {
            let cols = [
                r.time,
                r.l2_sq,
                r.d3_sq,
                r.d33_sq,
                r.gradh_sq,
                r.gradh_d3_sq,
                r.gradh_d33_sq,
                r.int_gradh_sq,
                r.int_gradh_d3_sq,
                r.int_gradh_d33_sq,
                r.adv_residual,
                r.diss_acc,
                r.step_residual,
            ];
            if cols.iter().any(|v| !v.is_finite()) {
                return Err(format!("row {n}: non-finite entry"));
            }
            let norms_nonneg = [
                r.l2_sq,
                r.d3_sq,
                r.d33_sq,
                r.gradh_sq,
                r.gradh_d3_sq,
                r.gradh_d33_sq,
            ];
            if norms_nonneg.iter().any(|v| *v < 0.0) {
                return Err(format!("row {n}: negative squared norm"));
            }
            if let Some(p) = prev {
                if r.time <= p.time {
                    return Err(format!("row {n}: time not increasing"));
                }
                if r.int_gradh_sq < p.int_gradh_sq
                    || r.int_gradh_d3_sq < p.int_gradh_d3_sq
                    || r.int_gradh_d33_sq < p.int_gradh_d33_sq
                {
                    return Err(format!("row {n}: integral decreased"));
                }
            }
            prev = Some(r);
        }
        Ok(())
    }

    /// Trapezoid integral of `f(row)` over the ledger times.
    pub fn trapezoid(&self, f: impl Fn(&LedgerRow) -> f64) -> f64 {
        let mut acc = 0.0;
        for pair in self.rows.windows(2) {
            acc += 0.5 * (pair[1].time - pair[0].time) * (f(&pair[0]) + f(&pair[1]));
        }
        acc
    }
}

// ---------------------------------------------------------------------------
// Run-level checks on ledgers
// ---------------------------------------------------------------------------

/// Maximum relative violation of the discrete energy identity: the larger
/// of the worst per-step residual and the cumulative drift of
/// `l2_sq + diss_acc` from its initial value.
pub fn energy_balance_residual(ledger: &EnergyLedger) -> f64 {
    let Some(first) = ledger.first() else {
        return 0.0;
    };
    let scale = ledger
        .rows()
        .iter()
        .map(|r| r.l2_sq)
        .fold(1e-30_f64, f64::max);
    let mut worst: f64 = 0.0;
    for r in ledger.rows() {
        worst = worst.max(r.step_residual.abs());
        worst = worst.max((r.l2_sq + r.diss_acc - first.l2_sq).abs() / scale);
    }
    worst
}

/// Checks `‖u(t)‖² ≤ ‖u(0)‖²·exp(−2ν_h t/λ₀)` at every ledger time with
/// the inequality slack factor. Returns (holds, worst margin), where the
/// margin is `(slack·bound − l2_sq)/l2_sq(0)`, minimized over rows.
pub fn poincare_decay_check(ledger: &EnergyLedger, nu_h: f64, lambda0: f64) -> (bool, f64) {
    let Some(first) = ledger.first() else {
        return (true, f64::INFINITY);
    };
    if first.l2_sq == 0.0 {
        return (true, f64::INFINITY);
    }
    let mut worst = f64::INFINITY;
    for r in ledger.rows() {
        let bound = first.l2_sq * (-2.0 * nu_h * r.time / lambda0).exp();
        let margin = (tol::INEQUALITY_SLACK * bound - r.l2_sq) / first.l2_sq;
        worst = worst.min(margin);
    }
    (worst >= 0.0, worst)
}

/// `sup_t ‖u(t)‖_{H^{0,1}}` over the ledger.
pub fn h01_sup(ledger: &EnergyLedger) -> f64 {
    ledger
        .rows()
        .iter()
        .map(|r| r.h01_sq())
        .fold(0.0_f64, f64::max)
        .sqrt()
}

/// Whether `sup_t ‖∂₃u(t)‖² ≤ cap·slack`; returns (holds, worst ratio).
pub fn shear_cap_holds(ledger: &EnergyLedger, cap: f64) -> (bool, f64) {
    if cap == 0.0 {
        let sup = ledger.rows().iter().map(|r| r.d3_sq).fold(0.0_f64, f64::max);
        return (sup == 0.0, if sup == 0.0 { 0.0 } else { f64::INFINITY });
    }
    let mut worst: f64 = 0.0;
    for r in ledger.rows() {
        worst = worst.max(r.d3_sq / cap);
    }
    (worst <= tol::INEQUALITY_SLACK, worst)
}

/// Whether `ν_h/2 + ν_h⁻¹‖∂₃u(t)‖² ≤ 2(ν_h/2 + ν_h⁻¹‖∂₃u(0)‖²)·slack`
/// at every ledger time; returns (holds, worst ratio).
pub fn product_bound_holds(ledger: &EnergyLedger, nu_h: f64) -> (bool, f64) {
    let Some(first) = ledger.first() else {
        return (true, 0.0);
    };
    let y0 = 0.5 * nu_h + first.d3_sq / nu_h;
    let mut worst: f64 = 0.0;
    for r in ledger.rows() {
        let y = 0.5 * nu_h + r.d3_sq / nu_h;
        worst = worst.max(y / (2.0 * y0));
    }
    (worst <= tol::INEQUALITY_SLACK, worst)
}

/// Propagation check for the second vertical derivative. Evaluates, with
/// a configurable calibration constant `c`,
///
/// `LHS(t) = ‖∂₃²u(t)‖ + ν_h·∫₀ᵗ‖∇_h∂₃²u‖²`   (first term unsquared,
/// kept exactly as the continuum estimate is stated) against
///
/// `RHS = exp((c/ν_h)·I)·(‖∂₃²u(0)‖² + (c/ν_h)·S·I)`,
///
/// where `I = ∫₀^T(‖∇_hu‖² + ‖∇_h∂₃u‖²)` and
/// `S = sup_s(‖∂₃u‖² + ν_h‖∂₃u‖)`. Returns (LHS ≤ RHS at all times,
/// max ratio).
pub fn second_shear_propagation_check(
    ledger: &EnergyLedger,
    nu_h: f64,
    calibration: f64,
) -> (bool, f64) {
    let Some(first) = ledger.first() else {
        return (true, 0.0);
    };
    let final_row = ledger.last().expect("nonempty");
    let big_i = final_row.int_gradh_sq + final_row.int_gradh_d3_sq;
    let sup_s = ledger
        .rows()
        .iter()
        .map(|r| r.d3_sq + nu_h * r.d3_sq.sqrt())
        .fold(0.0_f64, f64::max);
    let rhs = ((calibration / nu_h) * big_i).exp()
        * (first.d33_sq + (calibration / nu_h) * sup_s * big_i);
    let lhs_max = ledger
        .rows()
        .iter()
        .map(|r| r.d33_sq.sqrt() + nu_h * r.int_gradh_d33_sq)
        .fold(0.0_f64, f64::max);
    if rhs == 0.0 {
        return (lhs_max == 0.0, if lhs_max == 0.0 { 0.0 } else { f64::INFINITY });
    }
    let ratio = lhs_max / rhs;
    (ratio <= 1.0, ratio)
}

/// Grönwall integrands controlling the perturbation energy, computed from
/// a ledger row of the driving linear solution with the interpolation
/// constant `c0`:
///
/// `B₁ = 2[ (c0⁴/ν)(3c0²+2)‖∇_h∂₃v‖² + (c0⁴/2ν)(18c0²+1)‖∇_hv‖²
///          + (2c0⁶/ν)‖∂₃v‖² + c0⁴‖∂₃v‖ ]`
/// `B₂ = 2c0⁴[ ‖v‖²‖∂₃v‖ + ‖v‖‖∂₃v‖² + 2‖v‖‖∇_hv‖² ]`
pub fn gronwall_integrands(row: &LedgerRow, nu_h: f64, c0: f64) -> (f64, f64) {
    let c4 = c0.powi(4);
    let c6 = c0.powi(6);
    let d3 = row.d3_sq.sqrt();
    let l2 = row.l2_sq.sqrt();
    let b1 = 2.0
        * (c4 / nu_h * (3.0 * c0 * c0 + 2.0) * row.gradh_d3_sq
            + c4 / (2.0 * nu_h) * (18.0 * c0 * c0 + 1.0) * row.gradh_sq
            + 2.0 * c6 / nu_h * row.d3_sq
            + c4 * d3);
    let b2 = 2.0 * c4 * (row.l2_sq * d3 + l2 * row.d3_sq + 2.0 * l2 * row.gradh_sq);
    (b1, b2)
}

// ---------------------------------------------------------------------------
// Trajectory gap (vanishing-regularization Cauchy property)
// ---------------------------------------------------------------------------

/// Gap between two runs sharing a grid and snapshot schedule:
/// `(sup_t ‖a−b‖_{L²}, ∫‖∇_h(a−b)‖² dt)`, both over the stored snapshots.
pub fn cauchy_gap(a: &Trajectory, b: &Trajectory) -> Result<(f64, f64), DiagError> {
    if a.grid != b.grid {
        return Err(DiagError::GridMismatch);
    }
    if a.snapshots.len() != b.snapshots.len() || a.snapshots.is_empty() {
        return Err(DiagError::MisalignedTrajectories("snapshot counts differ"));
    }
    let mut sup_l2: f64 = 0.0;
    let mut integral = 0.0;
    let mut prev: Option<(f64, f64)> = None;
    for ((step_a, ua), (step_b, ub)) in a.snapshots.iter().zip(b.snapshots.iter()) {
        if step_a != step_b {
            return Err(DiagError::MisalignedTrajectories("snapshot steps differ"));
        }
        let t = *step_a as f64 * a.params.dt;
        let mut diff = ua.clone();
        diff.axpy(-1.0, ub);
        let l2 = norms::l2_sq(&diff).sqrt();
        let gh = norms::gradh_sq(&diff);
        sup_l2 = sup_l2.max(l2);
        if let Some((tp, ghp)) = prev {
            integral += 0.5 * (t - tp) * (ghp + gh);
        }
        prev = Some((t, gh));
    }
    Ok((sup_l2, integral))
}

/// Evaluates the Grönwall-type right-hand side that bounds the squared
/// L² gap between two regularizations from the finer run's ledger:
///
/// `[(ε_k−ε_m)·∫‖∂₃u‖² + ‖u₀gap‖²]
///   · exp((c0/ν)·∫(‖∇_hu‖² + ‖∇_h∂₃u‖² + ‖∂₃u‖²))
///   · exp((c1/ν^{1/3})·(∫‖∇_h∂₃u‖²)^{1/3}·(∫‖∂₃u‖)^{2/3})`
pub fn cauchy_rhs_estimate(
    ledger: &EnergyLedger,
    u0_gap_l2_sq: f64,
    eps_m: f64,
    eps_k: f64,
    nu_h: f64,
    c0: f64,
    c1: f64,
) -> f64 {
    let int_d3_sq = ledger.trapezoid(|r| r.d3_sq);
    let int_d3 = ledger.trapezoid(|r| r.d3_sq.sqrt());
    let (int_gradh, int_gradh_d3) = match ledger.last() {
        Some(r) => (r.int_gradh_sq, r.int_gradh_d3_sq),
        None => (0.0, 0.0),
    };
    let prefactor = (eps_k - eps_m).abs() * int_d3_sq + u0_gap_l2_sq;
    let e0 = (c0 / nu_h * (int_gradh + int_gradh_d3 + int_d3_sq)).exp();
    let e1 = (c1 / nu_h.cbrt() * int_gradh_d3.cbrt() * int_d3.powf(2.0 / 3.0)).exp();
    prefactor * e0 * e1
}

// ---------------------------------------------------------------------------
// Empirical constants
// ---------------------------------------------------------------------------

/// Minimum sample count accepted by [`estimate_constants`].
pub const MIN_CONSTANT_SAMPLES: usize = 100;

/// Fixed base seed so estimates are bit-for-bit reproducible. The
/// interpolation stream uses `SAMPLER_SEED ^ s`, the transport stream
/// `(SAMPLER_SEED+1000) ^ (2s, 2s+1)` and the shear stream
/// `(SAMPLER_SEED+2000) ^ s`, for sample ids `s < n_samples`.
pub const SAMPLER_SEED: u64 = 0xC015_7A57;

/// Empirically estimated constants of the anisotropic inequalities, with
/// the ids of the maximizing samples for reproducibility.
#[derive(Clone, Copy, Debug)]
pub struct EmpiricalConstants {
    /// Interpolation constant: max ratio over both mixed-norm bounds
    /// `‖g‖_{L²_v L⁴_h} ≤ C₀‖g‖^{1/2}‖∇_hg‖^{1/2}` and
    /// `‖g‖_{L^∞_v L²_h} ≤ C₀(‖g‖^{1/2}‖∂₃g‖^{1/2} + ‖g‖)`.
    pub c0_est: f64,
    /// Transport-pairing constant in
    /// `|(u∇v, v)_{∂₃}| ≤ C₁(‖u‖^{1/2}_{H^{0,1}}‖∇_hu‖^{1/2}_{H^{0,1}}
    ///   ‖v‖^{1/2}_{H^{0,1}}‖∇_hv‖^{3/2}_{H^{0,1}}
    ///   + ‖∇_hu‖_{H^{0,1}}‖v‖_{H^{0,1}}‖∇_hv‖_{H^{0,1}})`.
    pub c1_est: f64,
    /// Shear-production constant in
    /// `2|(∂₃(u∇u), ∂₃u)| ≤ C₂(‖∇_hu‖^{1/2}‖∂₃u‖‖∇_h∂₃u‖^{3/2}
    ///   + ‖∇_hu‖‖∂₃u‖‖∇_h∂₃u‖)`.
    pub c2_est: f64,
    /// `max(C₂²/2, 27·C₂⁴/32)`.
    pub c3_est: f64,
    /// Poincaré constant `λ₀` in `‖u‖² ≤ λ₀‖∇_hu‖²`.
    pub lambda0: f64,
    /// Requested sample count per estimator.
    pub n_samples: usize,
    /// Non-degenerate samples actually used, per estimator.
    pub n_used: [usize; 3],
    /// Sample ids (seed offsets) of the maximizers, per estimator.
    pub argmax: [u64; 3],
    /// Grid the constants were estimated on.
    pub grid: Grid,
}

impl EmpiricalConstants {
    /// Structural invariants: positivity and the derived-constant formula.
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("c0", self.c0_est),
            ("c1", self.c1_est),
            ("c2", self.c2_est),
            ("c3", self.c3_est),
            ("lambda0", self.lambda0),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if self.c3_est != shear_reabsorption(self.c2_est) {
            return Err("c3 inconsistent with c2".into());
        }
        Ok(())
    }
}

/// The derived constant `max(c²/2, 27c⁴/32)` absorbing the Young-split
/// shear production terms.
pub fn shear_reabsorption(c2: f64) -> f64 {
    (0.5 * c2 * c2).max(27.0 * c2.powi(4) / 32.0)
}

fn degenerate(rhs: f64, scale: f64) -> bool {
    !(rhs.is_finite()) || rhs <= 1e-14 * scale.max(1e-300)
}

/// Ratios of both interpolation inequalities for one scalar sample, or
/// `None` when a right-hand side degenerates.
pub fn interpolation_ratios(f: &ScalarField) -> Option<(f64, f64)> {
    let l2 = norms::scalar_l2_sq(f).sqrt();
    let gh = norms::scalar_gradh_sq(f).sqrt();
    let d3 = norms::scalar_dz_sq(f).sqrt();
    let scale = l2 + gh + d3;
    let lhs1 = norms::scalar_mixed(f, Exp::Two, Exp::Four);
    let lhs2 = norms::scalar_mixed(f, Exp::Inf, Exp::Two);
    let rhs1 = l2.sqrt() * gh.sqrt();
    let rhs2 = l2.sqrt() * d3.sqrt() + l2;
    if degenerate(rhs1, scale) || degenerate(rhs2, scale) {
        return None;
    }
    Some((lhs1 / rhs1, lhs2 / rhs2))
}

/// `Σ_c (∂₃a_c, ∂₃b_c)_{L²}` — the vertical-derivative part of the
/// anisotropic inner product.
pub fn inner_d3(a: &VectorField, b: &VectorField) -> f64 {
    let mut acc = 0.0;
    for ((_, ac), (_, bc)) in a.components().iter().zip(b.components().iter()) {
        acc += norms::scalar_inner_l2(&operators::d3(ac), &operators::d3(bc));
    }
    acc
}

/// Ratio of the transport inequality for a (solenoidal u, smooth v) pair,
/// or `None` when degenerate.
pub fn transport_ratio(u: &VectorField, v: &VectorField) -> Result<Option<f64>, OpError> {
    let n = operators::advect(u, v)?;
    let lhs = inner_d3(&n, v).abs();
    let u_h01 = (norms::l2_sq(u) + norms::dz_sq(u)).sqrt();
    let gu_h01 = (norms::gradh_sq(u) + norms::gradh_d3_sq(u)).sqrt();
    let v_h01 = (norms::l2_sq(v) + norms::dz_sq(v)).sqrt();
    let gv_h01 = (norms::gradh_sq(v) + norms::gradh_d3_sq(v)).sqrt();
    let rhs = u_h01.sqrt() * gu_h01.sqrt() * v_h01.sqrt() * gv_h01.powf(1.5)
        + gu_h01 * v_h01 * gv_h01;
    let scale = (u_h01 + gu_h01) * (v_h01 + gv_h01).powi(2);
    if degenerate(rhs, scale) {
        return Ok(None);
    }
    Ok(Some(lhs / rhs))
}

/// Ratio of the shear-production inequality for one solenoidal field, or
/// `None` when degenerate.
pub fn shear_production_ratio(u: &VectorField) -> Result<Option<f64>, OpError> {
    let n = operators::advect(u, u)?;
    let lhs = 2.0 * inner_d3(&n, u).abs();
    let gh = norms::gradh_sq(u).sqrt();
    let d3 = norms::dz_sq(u).sqrt();
    let ghd3 = norms::gradh_d3_sq(u).sqrt();
    let rhs = gh.sqrt() * d3 * ghd3.powf(1.5) + gh * d3 * ghd3;
    let scale = (gh + d3 + ghd3).powi(3);
    if degenerate(rhs, scale) {
        return Ok(None);
    }
    Ok(Some(lhs / rhs))
}

/// Estimates all constants on `grid` from `n_samples` seeded random
/// samples per estimator (interpolation: smooth scalars vanishing on the
/// lateral walls; transport: solenoidal/smooth pairs; shear production:
/// solenoidal fields). Deterministic: repeated calls agree bit-for-bit.
pub fn estimate_constants(grid: &Grid, n_samples: usize) -> Result<EmpiricalConstants, DiagError> {
    if n_samples < MIN_CONSTANT_SAMPLES {
        return Err(DiagError::TooFewSamples {
            requested: n_samples,
            minimum: MIN_CONSTANT_SAMPLES,
        });
    }
    let mut c0 = 0.0_f64;
    let mut c1 = 0.0_f64;
    let mut c2 = 0.0_f64;
    let mut n_used = [0usize; 3];
    let mut argmax = [0u64; 3];

    for s in 0..n_samples as u64 {
        let f = samples::random_scalar(grid, crate::grid::Loc::Cell, SAMPLER_SEED ^ s);
        if let Some((r1, r2)) = interpolation_ratios(&f) {
            n_used[0] += 1;
            let r = r1.max(r2);
            if r > c0 {
                c0 = r;
                argmax[0] = s;
            }
        }
    }
    for s in 0..n_samples as u64 {
        let u = samples::random_solenoidal(grid, 1.0, SAMPLER_SEED.wrapping_add(1000) ^ (2 * s))
            .map_err(|e| DiagError::Sample(e.to_string()))?;
        let v = samples::random_smooth_vector(grid, SAMPLER_SEED.wrapping_add(1000) ^ (2 * s + 1));
        if let Some(r) = transport_ratio(&u, &v).map_err(|e| DiagError::Sample(e.to_string()))? {
            n_used[1] += 1;
            if r > c1 {
                c1 = r;
                argmax[1] = s;
            }
        }
    }
    for s in 0..n_samples as u64 {
        let u = samples::random_solenoidal(grid, 1.0, SAMPLER_SEED.wrapping_add(2000) ^ s)
            .map_err(|e| DiagError::Sample(e.to_string()))?;
        if let Some(r) = shear_production_ratio(&u).map_err(|e| DiagError::Sample(e.to_string()))? {
            n_used[2] += 1;
            if r > c2 {
                c2 = r;
                argmax[2] = s;
            }
        }
    }
    if n_used.contains(&0) {
        return Err(DiagError::AllSamplesDegenerate);
    }
    let (lambda0, _mu1) = stokes::poincare_constant(grid);
    Ok(EmpiricalConstants {
        c0_est: c0,
        c1_est: c1,
        c2_est: c2,
        c3_est: shear_reabsorption(c2),
        lambda0,
        n_samples,
        n_used,
        argmax,
        grid: *grid,
    })
}

// ---------------------------------------------------------------------------
// Smallness thresholds
// ---------------------------------------------------------------------------

/// Admission test predicting a non-increasing anisotropic energy:
/// `‖u₀‖_{H^{0,1}} ≤ ν_h/(32·C₁)`.
pub fn smallness_h01(u0: &VectorField, nu_h: f64, consts: &EmpiricalConstants) -> bool {
    norms::norm(u0, norms::Norm::H01) <= nu_h / (32.0 * consts.c1_est)
}

/// Outcome of the exponential shear-smallness test.
#[derive(Clone, Copy, Debug)]
pub struct ShearSmallness {
    /// `‖∂₃u₀‖^{1/2}‖u₀‖^{1/2}·exp(C₃‖u₀‖²/4ν²) < C₃^{−1/4}·ν` holds.
    pub satisfied: bool,
    /// Predicted uniform cap on `‖∂₃u(t)‖²` when satisfied
    /// (`exp(C₃‖u₀‖²/ν²)·(‖∂₃u₀‖^{−2} − C₃ν^{−4}‖u₀‖²exp(C₃‖u₀‖²/ν²))^{−1}`,
    /// 0 for zero data, ∞ if the condition fails with the denominator
    /// nonpositive).
    pub shear_sq_cap: f64,
    pub lhs: f64,
    pub rhs: f64,
}

/// Admission test allowing large data with small vertical mass.
pub fn smallness_shear(u0: &VectorField, nu_h: f64, consts: &EmpiricalConstants) -> ShearSmallness {
    let l2_sq = norms::l2_sq(u0);
    let d3_sq = norms::dz_sq(u0);
    let c3 = consts.c3_est;
    let a = c3 * l2_sq / (nu_h * nu_h);
    let lhs = d3_sq.sqrt().sqrt() * l2_sq.sqrt().sqrt() * (0.25 * a).exp();
    let rhs = c3.powf(-0.25) * nu_h;
    let satisfied = lhs < rhs;
    let shear_sq_cap = if d3_sq == 0.0 {
        0.0
    } else {
        let denom = 1.0 / d3_sq - c3 / nu_h.powi(4) * l2_sq * a.exp();
        if denom > 0.0 {
            a.exp() / denom
        } else {
            f64::INFINITY
        }
    };
    ShearSmallness {
        satisfied,
        shear_sq_cap,
        lhs,
        rhs,
    }
}

/// Admission test via the product condition
/// `C₃‖u₀‖²(ν_h/2 + ν_h⁻¹‖∂₃u₀‖²) ≤ ν_h²`; when it holds, the run should
/// keep `ν_h/2 + ν_h⁻¹‖∂₃u(t)‖²` within a factor 2 of its initial value
/// (see [`product_bound_holds`]).
pub fn smallness_product(u0: &VectorField, nu_h: f64, consts: &EmpiricalConstants) -> bool {
    let l2_sq = norms::l2_sq(u0);
    let d3_sq = norms::dz_sq(u0);
    consts.c3_est * l2_sq * (0.5 * nu_h + d3_sq / nu_h) <= nu_h * nu_h
}

// ---------------------------------------------------------------------------
// Check reporting
// ---------------------------------------------------------------------------

/// One evaluated check, serialized as a CSV row by the experiment drivers.
#[derive(Clone, Debug)]
pub struct CheckRow {
    pub name: String,
    pub inputs_hash: u64,
    pub passed: bool,
    pub value: f64,
}

impl CheckRow {
    pub const CSV_HEADER: &'static str = "name,inputs_hash,passed,value";

    pub fn new(name: impl Into<String>, inputs_hash: u64, passed: bool, value: f64) -> CheckRow {
        CheckRow {
            name: name.into(),
            inputs_hash,
            passed,
            value,
        }
    }

    pub fn to_csv(&self) -> String {
        format!(
            "{},{:016x},{},{}",
            self.name, self.inputs_hash, self.passed, self.value
        )
    }
}

/// Stable 64-bit FNV-1a hash for tagging check inputs.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x1000_0000_01b3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::VectorField;
    use crate::grid::build_grid;

    fn grid() -> Grid {
        build_grid(8, 8, 8, 1.0, 1.0, false).unwrap()
    }

    fn ledger_from(states: &[(f64, &VectorField)]) -> EnergyLedger {
        let mut l = EnergyLedger::new();
        for (t, u) in states {
            l.push_state(*t, u, 0.0, 0.0, 0.0);
        }
        l
    }

    #[test]
    fn ledger_integrals_are_monotone_and_validate() {
        let g = grid();
        let u = samples::random_solenoidal(&g, 1.0, 3).unwrap();
        let mut scaled = u.clone();
        scaled.scale(0.5);
        let l = ledger_from(&[(0.0, &u), (0.1, &scaled), (0.2, &scaled)]);
        assert!(l.validate().is_ok());
        let rows = l.rows();
        assert!(rows[2].int_gradh_sq > rows[1].int_gradh_sq);
        assert!(rows[1].int_gradh_sq > 0.0);
        // Trapezoid of a constant integrand equals value times span.
        let c = l.trapezoid(|_| 2.0);
        assert!((c - 0.4).abs() < 1e-14);
    }

    #[test]
    fn energy_balance_residual_is_zero_for_empty_and_exact_ledgers() {
        assert_eq!(energy_balance_residual(&EnergyLedger::new()), 0.0);
        let g = grid();
        let u = VectorField::zeros(g);
        let l = ledger_from(&[(0.0, &u), (0.1, &u)]);
        assert_eq!(energy_balance_residual(&l), 0.0);
    }

    #[test]
    fn poincare_check_zero_trajectory_has_infinite_margin() {
        let g = grid();
        let u = VectorField::zeros(g);
        let l = ledger_from(&[(0.0, &u), (0.1, &u)]);
        let (ok, margin) = poincare_decay_check(&l, 1.0, 0.05);
        assert!(ok);
        assert_eq!(margin, f64::INFINITY);
    }

    #[test]
    fn poincare_check_rejects_inflated_rate() {
        let g = grid();
        let u = samples::planar_vortex(&g, 1.0, 1).unwrap();
        // A non-decaying (constant) trajectory violates any strict decay
        // envelope once exp(-2νt/λ₀) dips below 1/slack.
        let l = ledger_from(&[(0.0, &u), (1.0, &u), (2.0, &u)]);
        let (ok, margin) = poincare_decay_check(&l, 1.0, 0.5);
        assert!(!ok);
        assert!(margin < 0.0);
    }

    #[test]
    fn estimate_constants_is_deterministic_and_consistent() {
        let g = grid();
        let a = estimate_constants(&g, 100).unwrap();
        let b = estimate_constants(&g, 100).unwrap();
        assert!(a.validate().is_ok());
        assert_eq!(a.c0_est.to_bits(), b.c0_est.to_bits());
        assert_eq!(a.c1_est.to_bits(), b.c1_est.to_bits());
        assert_eq!(a.c2_est.to_bits(), b.c2_est.to_bits());
        assert_eq!(a.c3_est, shear_reabsorption(a.c2_est));
        assert_eq!(a.n_samples, 100);
        assert!(a.n_used.iter().all(|&n| n > 0));
        // λ₀ = 1/μ₁ with μ₁ near 2π² on the unit cross-section.
        assert!((a.lambda0 * 2.0 * std::f64::consts::PI.powi(2) - 1.0).abs() < 0.05);
    }

    #[test]
    fn estimate_constants_rejects_small_sample_counts() {
        let g = grid();
        assert!(matches!(
            estimate_constants(&g, 10),
            Err(DiagError::TooFewSamples { .. })
        ));
    }

    #[test]
    fn every_sampled_ratio_is_below_the_reported_maximum() {
        let g = grid();
        let consts = estimate_constants(&g, 100).unwrap();
        for s in 0..100u64 {
            let f = samples::random_scalar(&g, crate::grid::Loc::Cell, SAMPLER_SEED ^ s);
            if let Some((r1, r2)) = interpolation_ratios(&f) {
                assert!(r1 <= consts.c0_est && r2 <= consts.c0_est);
            }
        }
    }

    #[test]
    fn smallness_h01_brackets_the_threshold() {
        let g = grid();
        let consts = estimate_constants(&g, 100).unwrap();
        let nu_h = 1.0;
        let raw = samples::planar_vortex(&g, 1.0, 1).unwrap();
        let h01 = norms::norm(&raw, norms::Norm::H01);
        let mut inside = raw.clone();
        inside.scale(nu_h / (64.0 * consts.c1_est) / h01);
        let mut outside = raw.clone();
        outside.scale(nu_h / consts.c1_est / h01);
        assert!(smallness_h01(&inside, nu_h, &consts));
        assert!(!smallness_h01(&outside, nu_h, &consts));
        assert!(smallness_h01(&VectorField::zeros(g), nu_h, &consts));
    }

    #[test]
    fn smallness_shear_zero_data_and_eta_family() {
        let g = build_grid(8, 8, 24, 1.0, 1.0, false).unwrap();
        let consts = estimate_constants(&grid(), 100).unwrap();
        let zero = smallness_shear(&VectorField::zeros(g), 1.0, &consts);
        assert!(zero.satisfied);
        assert_eq!(zero.shear_sq_cap, 0.0);
        // Steep-shear small-mass family: pushing the vertical concentration
        // up opens a viscosity window where the exponential shear test
        // admits the data while the plain smallness test rejects it. The
        // window edges come from the estimated constants themselves.
        let window = |eta: f64| {
            let u = samples::anisotropic_family(&g, 1.0, eta, 0.25).unwrap();
            let l2 = norms::l2_sq(&u).sqrt();
            let d3 = norms::dz_sq(&u).sqrt();
            let lower = consts.c3_est.powf(0.25) * (l2 * d3).sqrt();
            let upper = 32.0 * consts.c1_est * (l2 * l2 + d3 * d3).sqrt();
            (u, lower, upper)
        };
        let mut found = None;
        for eta in [0.1_f64, 0.05, 0.02, 0.01] {
            let (u, lower, upper) = window(eta);
            if upper <= lower {
                continue;
            }
            let nu = (lower * upper).sqrt();
            let adm = smallness_shear(&u, nu, &consts);
            if adm.satisfied && !smallness_h01(&u, nu, &consts) {
                found = Some((eta, lower, upper, adm));
                break;
            }
        }
        let (eta, lower, upper, adm) = found.expect("no separating viscosity window on this grid");
        assert!(adm.shear_sq_cap.is_finite() && adm.shear_sq_cap > 0.0);
        assert!(adm.lhs < adm.rhs);
        // Halving eta widens the window: the rejection edge grows with the
        // diverging anisotropic norm while the admission edge stays pinned
        // to the bounded product norm, and the separation persists inside.
        let (steeper, lower2, upper2) = window(0.5 * eta);
        assert!(upper2 > upper, "upper edge must grow: {upper2} vs {upper}");
        assert!(lower2 < 1.3 * lower, "lower edge stays bounded: {lower2} vs {lower}");
        let nu2 = (lower2 * upper2).sqrt();
        assert!(smallness_shear(&steeper, nu2, &consts).satisfied);
        assert!(!smallness_h01(&steeper, nu2, &consts));
    }

    #[test]
    fn smallness_product_equality_scaling() {
        let g = grid();
        let consts = estimate_constants(&g, 100).unwrap();
        let nu_h = 1.0;
        let raw = samples::planar_vortex(&g, 1.0, 1).unwrap();
        // Solve c3·s²·l2²·(ν/2 + s²·d3²/ν) = ν² for the equality scale s.
        let l2_sq = norms::l2_sq(&raw);
        let d3_sq = norms::dz_sq(&raw);
        let mut lo = 0.0_f64;
        let mut hi = 1e6_f64;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let v = consts.c3_est * mid * mid * l2_sq * (0.5 * nu_h + mid * mid * d3_sq / nu_h);
            if v <= nu_h * nu_h {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let mut just_inside = raw.clone();
        just_inside.scale(lo * 0.99);
        let mut just_outside = raw.clone();
        just_outside.scale(lo * 1.01);
        assert!(smallness_product(&just_inside, nu_h, &consts));
        assert!(!smallness_product(&just_outside, nu_h, &consts));
    }

    #[test]
    fn second_shear_check_flags_zero_calibration() {
        let g = grid();
        let u = samples::planar_vortex(&g, 0.05, 1).unwrap();
        let mut decayed = u.clone();
        decayed.scale(0.9);
        let l = ledger_from(&[(0.0, &u), (0.1, &decayed)]);
        let (ok_zero, _) = second_shear_propagation_check(&l, 1.0, 0.0);
        assert!(!ok_zero, "zero calibration must fail on a nonzero run");
        let (ok_big, ratio) = second_shear_propagation_check(&l, 1.0, 50.0);
        assert!(ok_big, "generous calibration should pass, ratio {ratio}");
        let zero_ledger = ledger_from(&[(0.0, &VectorField::zeros(g))]);
        let (ok, ratio) = second_shear_propagation_check(&zero_ledger, 1.0, 0.0);
        assert!(ok && ratio == 0.0);
    }

    #[test]
    fn gronwall_integrands_are_nonnegative_and_zero_for_zero_rows() {
        let row = LedgerRow::default();
        let (b1, b2) = gronwall_integrands(&row, 1.0, 2.0);
        assert_eq!((b1, b2), (0.0, 0.0));
        let g = grid();
        let u = samples::planar_vortex(&g, 1.0, 2).unwrap();
        let l = ledger_from(&[(0.0, &u)]);
        let (b1, b2) = gronwall_integrands(&l.rows()[0], 0.5, 1.5);
        assert!(b1 > 0.0 && b2 > 0.0);
    }

    #[test]
    fn check_rows_serialize_stably() {
        let row = CheckRow::new("decay-envelope", fnv1a(b"input"), true, 0.25);
        let s = row.to_csv();
        assert!(s.starts_with("decay-envelope,"));
        assert!(s.ends_with(",true,0.25"));
        assert_eq!(fnv1a(b"input"), fnv1a(b"input"));
        assert_ne!(fnv1a(b"input"), fnv1a(b"inpux"));
    }
}
