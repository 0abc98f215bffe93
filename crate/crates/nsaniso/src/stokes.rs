//! Stokes operator machinery: a coupled velocity–pressure direct/iterative
//! solve (tensor-product solves inside a Schur-complement conjugate
//! gradient), the leading eigenpairs of `A₀ = −P(Δ_h + ε_m ∂₃²)` by block
//! inverse-power iteration, the Poincaré constant of the lateral Dirichlet
//! problem, and the spectral projections onto/off the leading modes.

use crate::field::{ScalarField, Tag, VectorField};
use crate::grid::Grid;
use crate::linsolve::{build_direction, cg, CgOptions, VelocitySolver};
use crate::norms::{self, Closure, InnerKind};
use crate::operators::{self, OpError};
use crate::tol;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt;

/// Errors from eigenbasis construction.
#[derive(Debug)]
pub enum BasisError {
    TooManyModes { requested: usize, cap: usize },
    NotConverged { iters: usize, worst_residual: f64 },
    Solver(OpError),
}

impl fmt::Display for BasisError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BasisError::TooManyModes { requested, cap } => {
                write!(f, "requested {requested} modes, cap is {cap}")
            }
            BasisError::NotConverged {
                iters,
                worst_residual,
            } => write!(
                f,
                "eigensolver not converged after {iters} iterations (worst residual {worst_residual:.3e})"
            ),
            BasisError::Solver(e) => write!(f, "inner solver failure: {e}"),
        }
    }
}

impl std::error::Error for BasisError {}

impl From<OpError> for BasisError {
    fn from(e: OpError) -> Self {
        BasisError::Solver(e)
    }
}

/// Default cap on the number of eigenpairs.
pub const MODE_CAP: usize = 64;

// ---------------------------------------------------------------------------
// Coupled Stokes solve (Uzawa / Schur-complement CG)
// ---------------------------------------------------------------------------

/// Solves the coupled saddle problem
/// `(shift·I + coef·A) w + ∇q = f`, `div w = 0`
/// by conjugate gradients on the pressure Schur complement, with the
/// per-component tensor-product direct solver as the inner kernel.
/// Returns `(w, q, schur_iters)`.
pub(crate) fn coupled_stokes_solve(
    vs: &VelocitySolver,
    f: &VectorField,
    coef: [f64; 3],
    shift: f64,
) -> Result<(VectorField, ScalarField, usize), OpError> {
    let g = *vs.grid();
    let kinv_f = vs.solve_shifted(f, coef, shift);
    // Schur complement: div ∘ K⁻¹ ∘ grad is negative definite on
    // mean-zero pressures, so CG runs on its negation.
    let rhs_field = operators::divergence(&kinv_f);
    let mut b: Vec<f64> = rhs_field.values().iter().map(|v| -v).collect();
    let mean = b.iter().sum::<f64>() / b.len() as f64;
    for x in b.iter_mut() {
        *x -= mean;
    }
    let b_norm = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut q = vec![0.0; b.len()];
    let mut iters = 0;
    if b_norm > 0.0 {
        let apply = |x: &[f64], out: &mut [f64]| {
            let phi = crate::field::ScalarField::from_vec(g, crate::grid::Loc::Cell, x.to_vec())
                .expect("sized");
            let gphi = operators::pressure_gradient(&phi);
            let w = vs.solve_shifted(&gphi, coef, shift);
            for (o, d) in out.iter_mut().zip(operators::divergence(&w).values()) {
                *o = -d;
            }
            let m = out.iter().sum::<f64>() / out.len() as f64;
            for v in out.iter_mut() {
                *v -= m;
            }
        };
        let opts = CgOptions {
            tol_abs: (tol::CG_REL_RESIDUAL * b_norm).max(1e-300),
            max_iters: tol::CG_MAX_ITERS,
            remove_mean: true,
        };
        let stats = cg(apply, &b, &mut q, None, &opts);
        if !stats.converged {
            return Err(OpError::SolverFailure {
                iters: stats.iters,
                residual: stats.residual,
            });
        }
        iters = stats.iters;
    }
    let phi =
        crate::field::ScalarField::from_vec(g, crate::grid::Loc::Cell, q).expect("sized");
    let gphi = operators::pressure_gradient(&phi);
    let mut rhs = f.clone();
    rhs.axpy(-1.0, &gphi);
    let mut w = vs.solve_shifted(&rhs, coef, shift);
    w.tag = Tag::Solenoidal;
    Ok((w, phi, iters))
}

// ---------------------------------------------------------------------------
// Poincaré constant
// ---------------------------------------------------------------------------

/// Smallest eigenvalue `μ₁` of the lateral Dirichlet horizontal Laplacian
/// (separable: sum of the two 1-D ghost-closure minima) and the Poincaré
/// constant `λ₀ = 1/μ₁` in `‖u‖² ≤ λ₀‖∇_h u‖²`.
pub fn poincare_constant(grid: &Grid) -> (f64, f64) {
    let dx = build_direction(grid.nx, grid.dx, Closure::GhostDirichlet);
    let dy = build_direction(grid.ny, grid.dy, Closure::GhostDirichlet);
    let mu1 = dx.evals[0] + dy.evals[0];
    (1.0 / mu1, mu1)
}

// ---------------------------------------------------------------------------
// Eigenbasis
// ---------------------------------------------------------------------------

/// Leading eigenpairs of the Stokes operator, with the Poincaré constant
/// of the horizontal Dirichlet problem.
pub struct StokesEigenBasis {
    grid: Grid,
    pub eps_metric: f64,
    /// Ascending positive eigenvalues `λ₁ ≤ … ≤ λ_k`.
    pub eigenvalues: Vec<f64>,
    /// L²-orthonormal solenoidal eigenfields with zero wall traces.
    pub fields: Vec<VectorField>,
    /// `‖A₀v − λv‖_{L²}` per pair.
    pub residuals: Vec<f64>,
    /// Poincaré constant `λ₀ = 1/μ₁`.
    pub lambda0: f64,
    /// Smallest horizontal Dirichlet eigenvalue.
    pub mu1: f64,
}

impl StokesEigenBasis {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    /// L² coefficients of `u` against the basis.
    pub fn coefficients(&self, u: &VectorField) -> Vec<f64> {
        self.fields
            .iter()
            .map(|v| norms::inner(u, v, InnerKind::L2))
            .collect()
    }
}

/// Applies `A₀ = −P(Δ_h + ε_m ∂₃²)` with a tight projection target.
pub fn apply_stokes_operator(u: &VectorField, eps_metric: f64) -> Result<VectorField, OpError> {
    let lap = operators::apply_vector_laplacian(u, [1.0, 1.0, eps_metric]);
    let scale = norms::l2_sq(&lap).sqrt();
    let out = operators::leray_project_with_target(&lap, (1e-13 * scale).max(1e-300))?;
    let mut a = out.field;
    a.scale(-1.0);
    Ok(a)
}

fn orthonormalize(block: &mut Vec<VectorField>) {
    // modified Gram–Schmidt, two passes for numerical safety
    let mut i = 0;
    while i < block.len() {
        for _pass in 0..2 {
            for j in 0..i {
                let c = norms::inner(&block[i], &block[j], InnerKind::L2);
                let other = block[j].clone();
                block[i].axpy(-c, &other);
            }
        }
        let n = norms::l2_sq(&block[i]).sqrt();
        if n < 1e-13 {
            block.remove(i);
        } else {
            block[i].scale(1.0 / n);
            i += 1;
        }
    }
}

/// Computes the leading `k` eigenpairs of the Stokes operator by block
/// inverse-power iteration: the block is repeatedly mapped through the
/// coupled Stokes solve, re-orthonormalized by Gram–Schmidt, and rotated
/// by the small Rayleigh–Ritz problem; convergence is certified by the
/// actual operator residual of every pair.
pub fn stokes_eigenbasis(
    grid: &Grid,
    k: usize,
    eps_metric: f64,
) -> Result<StokesEigenBasis, BasisError> {
    if k == 0 || k > MODE_CAP {
        return Err(BasisError::TooManyModes {
            requested: k,
            cap: MODE_CAP,
        });
    }
    assert!(eps_metric >= 0.0, "metric weight must be nonnegative");
    let vs = VelocitySolver::new(*grid);
    let coef = [1.0, 1.0, eps_metric];
    // Pad the block beyond the requested modes: the k-th pair converges
    // like (λ_k/λ_{block+1})^sweeps, and the spectrum clusters, so a
    // fixed small pad stalls for larger k.
    let block_size = (k + (k / 2).max(4)).min(MODE_CAP + 8);
    let mut rng = ChaCha8Rng::seed_from_u64(0xBA515);

    // random solenoidal start block
    let mut block: Vec<VectorField> = Vec::with_capacity(block_size);
    while block.len() < block_size {
        let mut v = VectorField::zeros(*grid);
        for c in [&mut v.u1, &mut v.u2, &mut v.u3] {
            for x in c.values_mut() {
                *x = rng.gen_range(-1.0..1.0);
            }
        }
        v.enforce_walls();
        let p = operators::leray_project(&v)?;
        block.push(p.field);
    }
    orthonormalize(&mut block);

    let max_outer = 400;
    for outer in 0..max_outer {
        // Y = A₀⁻¹ block
        let mut y: Vec<VectorField> = Vec::with_capacity(block.len());
        for v in &block {
            let (w, _, _) = coupled_stokes_solve(&vs, v, coef, 0.0)?;
            y.push(w);
        }
        // Rayleigh–Ritz on the inverse: B_ij = (block_i, y_j)
        let m = block.len();
        let mut b = DMatrix::<f64>::zeros(m, m);
        for i in 0..m {
            for j in 0..m {
                b[(i, j)] = norms::inner(&block[i], &y[j], InnerKind::L2);
            }
        }
        let bs = (b.clone() + b.transpose()) * 0.5;
        let se = bs.symmetric_eigen();
        // order by descending θ (θ = 1/λ)
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &c| se.eigenvalues[c].partial_cmp(&se.eigenvalues[a]).unwrap());
        let mut rotated: Vec<VectorField> = Vec::with_capacity(m);
        for &col in &order {
            let mut z = VectorField::zeros(*grid);
            z.tag = Tag::Solenoidal;
            for i in 0..m {
                z.axpy(se.eigenvectors[(i, col)], &y[i]);
            }
            rotated.push(z);
        }
        block = rotated;
        orthonormalize(&mut block);

        // certify the first k pairs by true residuals every other sweep
        if outer % 2 == 1 || outer + 1 == max_outer {
            let mut ok = true;
            let mut worst = 0.0_f64;
            for v in block.iter().take(k) {
                let av = apply_stokes_operator(v, eps_metric)?;
                let lam = norms::inner(&av, v, InnerKind::L2);
                let mut r = av;
                r.axpy(-lam, v);
                let res = norms::l2_sq(&r).sqrt();
                worst = worst.max(res / lam.max(1e-300));
                if res > 0.3 * tol::EIGEN_RESIDUAL * lam {
                    ok = false;
                }
            }
            if ok {
                break;
            }
            if outer + 1 == max_outer {
                return Err(BasisError::NotConverged {
                    iters: max_outer,
                    worst_residual: worst,
                });
            }
        }
    }

    block.truncate(k);
    let mut eigenvalues = Vec::with_capacity(k);
    let mut residuals = Vec::with_capacity(k);
    for v in &block {
        let av = apply_stokes_operator(v, eps_metric)?;
        let lam = norms::inner(&av, v, InnerKind::L2);
        let mut r = av;
        r.axpy(-lam, v);
        eigenvalues.push(lam);
        residuals.push(norms::l2_sq(&r).sqrt());
    }
    // ascending by construction, but enforce ordering defensively
    let mut idx: Vec<usize> = (0..k).collect();
    idx.sort_by(|&a, &b| eigenvalues[a].partial_cmp(&eigenvalues[b]).unwrap());
    let eigenvalues: Vec<f64> = idx.iter().map(|&i| eigenvalues[i]).collect();
    let residuals: Vec<f64> = idx.iter().map(|&i| residuals[i]).collect();
    let fields: Vec<VectorField> = idx.iter().map(|&i| block[i].clone()).collect();

    let (lambda0, mu1) = poincare_constant(grid);
    Ok(StokesEigenBasis {
        grid: *grid,
        eps_metric,
        eigenvalues,
        fields,
        residuals,
        lambda0,
        mu1,
    })
}

// ---------------------------------------------------------------------------
// Spectral projection
// ---------------------------------------------------------------------------

/// Which part of the spectral split to return.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjMode {
    /// The span of the basis: `Σᵢ ⟨u, vᵢ⟩ vᵢ`.
    Inside,
    /// The L²-orthogonal complement: `u − Σᵢ ⟨u, vᵢ⟩ vᵢ`.
    Complement,
}

/// Projection onto (or off) the leading Stokes modes.
pub fn project_pk(u: &VectorField, basis: &StokesEigenBasis, mode: ProjMode) -> VectorField {
    assert!(
        *u.grid() == basis.grid,
        "field and basis live on different grids"
    );
    let coeffs = basis.coefficients(u);
    match mode {
        ProjMode::Inside => {
            let mut out = VectorField::zeros(basis.grid);
            out.tag = Tag::Solenoidal;
            for (c, v) in coeffs.iter().zip(&basis.fields) {
                out.axpy(*c, v);
            }
            out
        }
        ProjMode::Complement => {
            let mut out = u.clone();
            for (c, v) in coeffs.iter().zip(&basis.fields) {
                out.axpy(-c, v);
            }
            out
        }
    }
}
