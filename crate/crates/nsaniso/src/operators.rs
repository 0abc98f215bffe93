//! Discrete differential operators on the staggered grid: collocated
//! vertical derivatives, divergence, gradients, component Laplacians, an
//! exactly skew-symmetric advection form, and the Leray projector.
//!
//! Boundary closures match the quadratic forms in [`crate::norms`]:
//! on-node homogeneous Dirichlet along a face location's normal direction,
//! reflected-ghost Dirichlet in cell-centered horizontal directions,
//! periodic vertical closure on the full domain, and a natural (Neumann)
//! vertical closure for cell-centered layouts on the half domain. With
//! those pairings, `(−Δ_h u, u) = ‖∇_h u‖²` and `(∇φ, v) = −(φ, div v)`
//! hold exactly, so energy bookkeeping closes at roundoff level.

use crate::field::{ScalarField, Tag, VectorField};
use crate::grid::{Grid, Loc};
use crate::linsolve::{cg, CgOptions};
use crate::norms;
use crate::tol;
use std::fmt;

/// Operator-level failures.
#[derive(Debug, Clone, PartialEq)]
pub enum OpError {
    /// The transporting field's divergence exceeds the solenoidal bound.
    NotSolenoidal { max_div: f64, bound: f64 },
    /// Fields on different grids.
    GridMismatch,
    /// An operation requires a specific storage location.
    IncompatibleLocation { expected: &'static str, got: Loc },
    /// Iterative solver ran out of its iteration budget.
    SolverFailure { iters: usize, residual: f64 },
}

impl fmt::Display for OpError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OpError::NotSolenoidal { max_div, bound } => write!(
                f,
                "transporting field is not solenoidal: max |div| = {max_div:.3e} > {bound:.3e}"
            ),
            OpError::GridMismatch => write!(f, "fields live on different grids"),
            OpError::IncompatibleLocation { expected, got } => {
                write!(f, "operation expects a {expected} field, got {got:?}")
            }
            OpError::SolverFailure { iters, residual } => write!(
                f,
                "iterative solve failed to converge: {iters} iterations, residual {residual:.3e}"
            ),
        }
    }
}

impl std::error::Error for OpError {}

// ---------------------------------------------------------------------------
// Collocated vertical derivatives
// ---------------------------------------------------------------------------

/// Collocated vertical derivative: centered second-order differences,
/// periodic on the full domain, one-sided second-order at Γ₀/Γ₁ on the
/// half domain.
pub fn d3(f: &ScalarField) -> ScalarField {
    let g = *f.grid();
    let (di, dj, dk) = g.dims(f.loc());
    let mut out = ScalarField::zeros(g, f.loc());
    let inv2dz = 1.0 / (2.0 * g.dz);
    for i in 0..di {
        for j in 0..dj {
            for k in 0..dk {
                let v = if !g.half_domain {
                    let kp = (k + 1) % dk;
                    let km = (k + dk - 1) % dk;
                    (f.at(i, j, kp) - f.at(i, j, km)) * inv2dz
                } else if k == 0 {
                    (-3.0 * f.at(i, j, 0) + 4.0 * f.at(i, j, 1) - f.at(i, j, 2)) * inv2dz
                } else if k == dk - 1 {
                    (3.0 * f.at(i, j, k) - 4.0 * f.at(i, j, k - 1) + f.at(i, j, k - 2)) * inv2dz
                } else {
                    (f.at(i, j, k + 1) - f.at(i, j, k - 1)) * inv2dz
                };
                out.set(i, j, k, v);
            }
        }
    }
    out
}

/// Collocated vertical second difference; at half-domain boundary layers
/// the nearest interior three-point stencil is used.
pub fn d33(f: &ScalarField) -> ScalarField {
    let g = *f.grid();
    let (di, dj, dk) = g.dims(f.loc());
    let mut out = ScalarField::zeros(g, f.loc());
    let inv_dz2 = 1.0 / (g.dz * g.dz);
    for i in 0..di {
        for j in 0..dj {
            for k in 0..dk {
                let v = if !g.half_domain {
                    let kp = (k + 1) % dk;
                    let km = (k + dk - 1) % dk;
                    (f.at(i, j, kp) - 2.0 * f.at(i, j, k) + f.at(i, j, km)) * inv_dz2
                } else if k == 0 {
                    (f.at(i, j, 0) - 2.0 * f.at(i, j, 1) + f.at(i, j, 2)) * inv_dz2
                } else if k == dk - 1 {
                    (f.at(i, j, k) - 2.0 * f.at(i, j, k - 1) + f.at(i, j, k - 2)) * inv_dz2
                } else {
                    (f.at(i, j, k + 1) - 2.0 * f.at(i, j, k) + f.at(i, j, k - 1)) * inv_dz2
                };
                out.set(i, j, k, v);
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Divergence and gradients
// ---------------------------------------------------------------------------

/// Discrete divergence at cell centers.
pub fn divergence(u: &VectorField) -> ScalarField {
    let g = *u.grid();
    let mut out = ScalarField::zeros(g, Loc::Cell);
    let (nx, ny, nz) = g.dims(Loc::Cell);
    for i in 0..nx {
        for j in 0..ny {
            for k in 0..nz {
                let dudx = (u.u1.at(i + 1, j, k) - u.u1.at(i, j, k)) / g.dx;
                let dvdy = (u.u2.at(i, j + 1, k) - u.u2.at(i, j, k)) / g.dy;
                let kp = if g.half_domain { k + 1 } else { (k + 1) % nz };
                let dwdz = (u.u3.at(i, j, kp) - u.u3.at(i, j, k)) / g.dz;
                out.set(i, j, k, dudx + dvdy + dwdz);
            }
        }
    }
    out
}

/// Horizontal divergence `∂₁u₁ + ∂₂u₂` at cell centers.
pub fn div_h(u: &VectorField) -> ScalarField {
    let g = *u.grid();
    let mut out = ScalarField::zeros(g, Loc::Cell);
    let (nx, ny, nz) = g.dims(Loc::Cell);
    for i in 0..nx {
        for j in 0..ny {
            for k in 0..nz {
                let dudx = (u.u1.at(i + 1, j, k) - u.u1.at(i, j, k)) / g.dx;
                let dvdy = (u.u2.at(i, j + 1, k) - u.u2.at(i, j, k)) / g.dy;
                out.set(i, j, k, dudx + dvdy);
            }
        }
    }
    out
}

/// Horizontal gradient of a cell-centered scalar, on the x/y faces, using
/// the reflected-ghost homogeneous Dirichlet closure at the lateral walls
/// (so that `‖grad_h f‖_{L²}² = ‖∇_h f‖²` in the gap sense, exactly).
pub fn grad_h(f: &ScalarField) -> Result<(ScalarField, ScalarField), OpError> {
    if f.loc() != Loc::Cell {
        return Err(OpError::IncompatibleLocation {
            expected: "cell-centered",
            got: f.loc(),
        });
    }
    let g = *f.grid();
    let (nx, ny, nz) = g.dims(Loc::Cell);
    let mut gx = ScalarField::zeros(g, Loc::XFace);
    let mut gy = ScalarField::zeros(g, Loc::YFace);
    for j in 0..ny {
        for k in 0..nz {
            gx.set(0, j, k, 2.0 * f.at(0, j, k) / g.dx);
            for i in 1..nx {
                gx.set(i, j, k, (f.at(i, j, k) - f.at(i - 1, j, k)) / g.dx);
            }
            gx.set(nx, j, k, -2.0 * f.at(nx - 1, j, k) / g.dx);
        }
    }
    for i in 0..nx {
        for k in 0..nz {
            gy.set(i, 0, k, 2.0 * f.at(i, 0, k) / g.dy);
            for j in 1..ny {
                gy.set(i, j, k, (f.at(i, j, k) - f.at(i, j - 1, k)) / g.dy);
            }
            gy.set(i, ny, k, -2.0 * f.at(i, ny - 1, k) / g.dy);
        }
    }
    Ok((gx, gy))
}

/// Pressure gradient on the faces: homogeneous Neumann laterally (wall
/// faces carry zero) and periodic/Neumann vertically. Adjoint of `−div`.
pub(crate) fn pressure_gradient(phi: &ScalarField) -> VectorField {
    assert_eq!(phi.loc(), Loc::Cell, "potential must be cell-centered");
    let g = *phi.grid();
    let (nx, ny, nz) = g.dims(Loc::Cell);
    let mut out = VectorField::zeros(g);
    out.tag = Tag::General;
    for j in 0..ny {
        for k in 0..nz {
            for i in 1..nx {
                out.u1
                    .set(i, j, k, (phi.at(i, j, k) - phi.at(i - 1, j, k)) / g.dx);
            }
        }
    }
    for i in 0..nx {
        for k in 0..nz {
            for j in 1..ny {
                out.u2
                    .set(i, j, k, (phi.at(i, j, k) - phi.at(i, j - 1, k)) / g.dy);
            }
        }
    }
    for i in 0..nx {
        for j in 0..ny {
            if g.half_domain {
                for k in 1..nz {
                    out.u3
                        .set(i, j, k, (phi.at(i, j, k) - phi.at(i, j, k - 1)) / g.dz);
                }
            } else {
                for k in 0..nz {
                    let km = (k + nz - 1) % nz;
                    out.u3
                        .set(i, j, k, (phi.at(i, j, k) - phi.at(i, j, km)) / g.dz);
                }
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Component Laplacians
// ---------------------------------------------------------------------------

/// Applies `coef_x·∂₁² + coef_y·∂₂² + coef_z·∂₃²` to a field with the
/// location's boundary closures; entries on stored no-slip walls (on-node
/// directions) are left at zero.
pub fn apply_laplacian(f: &ScalarField, coef: [f64; 3]) -> ScalarField {
    let g = *f.grid();
    let loc = f.loc();
    let (di, dj, dk) = g.dims(loc);
    let mut out = ScalarField::zeros(g, loc);
    let hx2 = 1.0 / (g.dx * g.dx);
    let hy2 = 1.0 / (g.dy * g.dy);
    let hz2 = 1.0 / (g.dz * g.dz);
    let x_on_node = loc == Loc::XFace;
    let y_on_node = loc == Loc::YFace;
    let z_on_node = g.half_domain && loc == Loc::ZFace;
    let z_periodic = !g.half_domain;
    for i in 0..di {
        for j in 0..dj {
            for k in 0..dk {
                // Skip stored wall nodes of on-node directions: pinned.
                if (x_on_node && (i == 0 || i == di - 1))
                    || (y_on_node && (j == 0 || j == dj - 1))
                    || (z_on_node && (k == 0 || k == dk - 1))
                {
                    continue;
                }
                let c = f.at(i, j, k);
                // x-direction
                let xm = if i > 0 { f.at(i - 1, j, k) } else { -c };
                let xp = if i + 1 < di { f.at(i + 1, j, k) } else { -c };
                let lx = (xm - 2.0 * c + xp) * hx2;
                // y-direction
                let ym = if j > 0 { f.at(i, j - 1, k) } else { -c };
                let yp = if j + 1 < dj { f.at(i, j + 1, k) } else { -c };
                let ly = (ym - 2.0 * c + yp) * hy2;
                // z-direction
                let lz = if z_periodic {
                    let kp = (k + 1) % dk;
                    let km = (k + dk - 1) % dk;
                    (f.at(i, j, km) - 2.0 * c + f.at(i, j, kp)) * hz2
                } else if z_on_node {
                    (f.at(i, j, k - 1) - 2.0 * c + f.at(i, j, k + 1)) * hz2
                } else {
                    // Natural closure: one-sided first difference at the
                    // boundary layers (row sums telescope to zero).
                    let km = if k > 0 { f.at(i, j, k - 1) } else { c };
                    let kp = if k + 1 < dk { f.at(i, j, k + 1) } else { c };
                    (km - 2.0 * c + kp) * hz2
                };
                out.set(i, j, k, coef[0] * lx + coef[1] * ly + coef[2] * lz);
            }
        }
    }
    out
}

/// Horizontal Laplacian `Δ_h` of a field (same storage location).
pub fn laplacian_h(f: &ScalarField) -> ScalarField {
    apply_laplacian(f, [1.0, 1.0, 0.0])
}

/// Vertical second-derivative operator matching the energy closures (the
/// negative of the vertical gap form's operator).
pub fn d33_operator(f: &ScalarField) -> ScalarField {
    apply_laplacian(f, [0.0, 0.0, 1.0])
}

/// Componentwise `coef·Δ`-type application on a velocity field.
pub fn apply_vector_laplacian(u: &VectorField, coef: [f64; 3]) -> VectorField {
    VectorField {
        u1: apply_laplacian(&u.u1, coef),
        u2: apply_laplacian(&u.u2, coef),
        u3: apply_laplacian(&u.u3, coef),
        tag: Tag::General,
    }
}

// ---------------------------------------------------------------------------
// Solenoidal validation
// ---------------------------------------------------------------------------

/// Largest cell divergence magnitude.
pub fn max_abs_div(u: &VectorField) -> f64 {
    divergence(u)
        .values()
        .iter()
        .fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// Divergence bound for the solenoidal tag: `1e−10 · ‖u‖_{L²} / min h`.
pub fn solenoidal_bound(u: &VectorField) -> f64 {
    tol::SOLENOIDAL_DIV * norms::l2_sq(u).sqrt() / u.grid().min_spacing()
}

/// Verifies the solenoidal contract of a transporting field.
pub fn check_solenoidal(u: &VectorField) -> Result<(), OpError> {
    let max_div = max_abs_div(u);
    let bound = solenoidal_bound(u);
    if max_div > bound {
        Err(OpError::NotSolenoidal { max_div, bound })
    } else {
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Advection
// ---------------------------------------------------------------------------

/// Skew-symmetric advection `N(u, v) ≈ u·∇v`.
///
/// Divergence-form fluxes with two-point averages, minus the correction
/// `½·v·(average of adjacent cell divergences)`. The correction makes
/// `(N(u, v), v)_{L²} = 0` an exact algebraic identity for every `u`
/// respecting the no-slip storage convention (it vanishes identically when
/// `u` is discretely solenoidal); `u` is still validated against the
/// solenoidal bound because the operator only models transport for such
/// fields.
pub fn advect(u: &VectorField, v: &VectorField) -> Result<VectorField, OpError> {
    u.compatible(v).map_err(|_| OpError::GridMismatch)?;
    // Validate at the scale of the pair: a transporting field sitting at
    // roundoff level relative to the transported one only carries noise,
    // and its divergence bound must not collapse with its own norm.
    let max_div = max_abs_div(u);
    let scale = norms::l2_sq(u).sqrt().max(norms::l2_sq(v).sqrt());
    let bound = tol::SOLENOIDAL_DIV * scale / u.grid().min_spacing();
    if max_div > bound {
        return Err(OpError::NotSolenoidal { max_div, bound });
    }
    let g = *u.grid();
    let (nx, ny, nz) = (g.nx, g.ny, g.nz);
    let half = g.half_domain;
    let div = divergence(u);
    let mut out = VectorField::zeros(g);
    out.tag = Tag::General;

    // -- component 1 (x-faces), interior nodes i = 1..nx-1 ----------------
    for i in 1..nx {
        for j in 0..ny {
            for k in 0..nz {
                // x-fluxes at the two neighbouring cell centers
                let fx = |ic: usize| {
                    0.5 * (u.u1.at(ic, j, k) + u.u1.at(ic + 1, j, k))
                        * 0.5
                        * (v.u1.at(ic, j, k) + v.u1.at(ic + 1, j, k))
                };
                let adv_x = (fx(i) - fx(i - 1)) / g.dx;
                // y-fluxes at the corners (i, j) and (i, j+1)
                let fy = |jf: usize| {
                    if jf == 0 || jf == ny {
                        0.0
                    } else {
                        0.5 * (u.u2.at(i - 1, jf, k) + u.u2.at(i, jf, k))
                            * 0.5
                            * (v.u1.at(i, jf - 1, k) + v.u1.at(i, jf, k))
                    }
                };
                let adv_y = (fy(j + 1) - fy(j)) / g.dy;
                // z-fluxes at the vertical faces k and k+1
                let fz_at = |kf: usize| -> f64 {
                    if half && (kf == 0 || kf == nz) {
                        return 0.0;
                    }
                    let (kface, kc_below, kc_above);
                    if half {
                        kface = kf;
                        kc_below = kf - 1;
                        kc_above = kf;
                    } else {
                        kface = kf % nz;
                        kc_below = (kface + nz - 1) % nz;
                        kc_above = kface;
                    }
                    0.5 * (u.u3.at(i - 1, j, kface) + u.u3.at(i, j, kface))
                        * 0.5
                        * (v.u1.at(i, j, kc_below) + v.u1.at(i, j, kc_above))
                };
                let adv_z = (fz_at(k + 1) - fz_at(k)) / g.dz;
                let div_cv = 0.5 * (div.at(i - 1, j, k) + div.at(i, j, k));
                let val = adv_x + adv_y + adv_z - 0.5 * v.u1.at(i, j, k) * div_cv;
                out.u1.set(i, j, k, val);
            }
        }
    }

    // -- component 2 (y-faces), interior nodes j = 1..ny-1 ----------------
    for i in 0..nx {
        for j in 1..ny {
            for k in 0..nz {
                let fy = |jc: usize| {
                    0.5 * (u.u2.at(i, jc, k) + u.u2.at(i, jc + 1, k))
                        * 0.5
                        * (v.u2.at(i, jc, k) + v.u2.at(i, jc + 1, k))
                };
                let adv_y = (fy(j) - fy(j - 1)) / g.dy;
                let fx = |if_: usize| {
                    if if_ == 0 || if_ == nx {
                        0.0
                    } else {
                        0.5 * (u.u1.at(if_, j - 1, k) + u.u1.at(if_, j, k))
                            * 0.5
                            * (v.u2.at(if_ - 1, j, k) + v.u2.at(if_, j, k))
                    }
                };
                let adv_x = (fx(i + 1) - fx(i)) / g.dx;
                let fz_at = |kf: usize| -> f64 {
                    if half && (kf == 0 || kf == nz) {
                        return 0.0;
                    }
                    let (kface, kc_below, kc_above);
                    if half {
                        kface = kf;
                        kc_below = kf - 1;
                        kc_above = kf;
                    } else {
                        kface = kf % nz;
                        kc_below = (kface + nz - 1) % nz;
                        kc_above = kface;
                    }
                    0.5 * (u.u3.at(i, j - 1, kface) + u.u3.at(i, j, kface))
                        * 0.5
                        * (v.u2.at(i, j, kc_below) + v.u2.at(i, j, kc_above))
                };
                let adv_z = (fz_at(k + 1) - fz_at(k)) / g.dz;
                let div_cv = 0.5 * (div.at(i, j - 1, k) + div.at(i, j, k));
                let val = adv_x + adv_y + adv_z - 0.5 * v.u2.at(i, j, k) * div_cv;
                out.u2.set(i, j, k, val);
            }
        }
    }

    // -- component 3 (z-faces) --------------------------------------------
    let (k_lo, k_hi) = if half { (1, nz) } else { (0, nz) };
    for i in 0..nx {
        for j in 0..ny {
            for kf in k_lo..k_hi {
                // cells below/above this face
                let (kc_below, kc_above) = if half {
                    (kf - 1, kf)
                } else {
                    ((kf + nz - 1) % nz, kf)
                };
                let fx = |if_: usize| {
                    if if_ == 0 || if_ == nx {
                        0.0
                    } else {
                        0.5 * (u.u1.at(if_, j, kc_below) + u.u1.at(if_, j, kc_above))
                            * 0.5
                            * (v.u3.at(if_ - 1, j, kf) + v.u3.at(if_, j, kf))
                    }
                };
                let adv_x = (fx(i + 1) - fx(i)) / g.dx;
                let fy = |jf: usize| {
                    if jf == 0 || jf == ny {
                        0.0
                    } else {
                        0.5 * (u.u2.at(i, jf, kc_below) + u.u2.at(i, jf, kc_above))
                            * 0.5
                            * (v.u3.at(i, jf - 1, kf) + v.u3.at(i, jf, kf))
                    }
                };
                let adv_y = (fy(j + 1) - fy(j)) / g.dy;
                // z-fluxes at the two neighbouring cell centers
                let fz = |kc: usize| -> f64 {
                    let kfp = if half { kc + 1 } else { (kc + 1) % nz };
                    0.5 * (u.u3.at(i, j, kc) + u.u3.at(i, j, kfp))
                        * 0.5
                        * (v.u3.at(i, j, kc) + v.u3.at(i, j, kfp))
                };
                let adv_z = (fz(kc_above) - fz(kc_below)) / g.dz;
                let div_cv = 0.5 * (div.at(i, j, kc_below) + div.at(i, j, kc_above));
                let val = adv_x + adv_y + adv_z - 0.5 * v.u3.at(i, j, kf) * div_cv;
                out.u3.set(i, j, kf, val);
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Leray projection
// ---------------------------------------------------------------------------

/// Result of a Leray projection.
pub struct LerayOutput {
    /// The solenoidal projection of the input.
    pub field: VectorField,
    /// The cell-centered potential whose gradient was removed.
    pub potential: ScalarField,
    /// Conjugate-gradient iterations used.
    pub iters: usize,
    /// Final absolute ℓ² residual of the Poisson solve.
    pub residual: f64,
}

/// Diagonal of the (negative-definite-made-positive) pressure Poisson
/// operator `−div ∘ grad` with Neumann lateral / periodic or Neumann
/// vertical closures.
fn poisson_diagonal(g: &Grid) -> Vec<f64> {
    let (nx, ny, nz) = g.dims(Loc::Cell);
    let (hx2, hy2, hz2) = (
        1.0 / (g.dx * g.dx),
        1.0 / (g.dy * g.dy),
        1.0 / (g.dz * g.dz),
    );
    let mut diag = vec![0.0; nx * ny * nz];
    for i in 0..nx {
        for j in 0..ny {
            for k in 0..nz {
                let cx = if i == 0 || i == nx - 1 { 1.0 } else { 2.0 };
                let cy = if j == 0 || j == ny - 1 { 1.0 } else { 2.0 };
                let cz = if g.half_domain && (k == 0 || k == nz - 1) {
                    1.0
                } else {
                    2.0
                };
                diag[g.idx(Loc::Cell, i, j, k)] = cx * hx2 + cy * hy2 + cz * hz2;
            }
        }
    }
    diag
}

/// Applies `−div(grad φ)` for a cell-centered potential, with the same
/// closures as [`pressure_gradient`] and [`divergence`].
fn apply_poisson(g: &Grid, phi: &[f64], out: &mut [f64]) {
    let (nx, ny, nz) = g.dims(Loc::Cell);
    let (hx2, hy2, hz2) = (
        1.0 / (g.dx * g.dx),
        1.0 / (g.dy * g.dy),
        1.0 / (g.dz * g.dz),
    );
    let idx = |i: usize, j: usize, k: usize| (i * ny + j) * nz + k;
    for i in 0..nx {
        for j in 0..ny {
            for k in 0..nz {
                let c = phi[idx(i, j, k)];
                let mut acc = 0.0;
                // Neumann closure: the wall-face gradient is zero, so the
                // missing neighbour simply contributes nothing.
                if i > 0 {
                    acc += (c - phi[idx(i - 1, j, k)]) * hx2;
                }
                if i + 1 < nx {
                    acc += (c - phi[idx(i + 1, j, k)]) * hx2;
                }
                if j > 0 {
                    acc += (c - phi[idx(i, j - 1, k)]) * hy2;
                }
                if j + 1 < ny {
                    acc += (c - phi[idx(i, j + 1, k)]) * hy2;
                }
                if g.half_domain {
                    if k > 0 {
                        acc += (c - phi[idx(i, j, k - 1)]) * hz2;
                    }
                    if k + 1 < nz {
                        acc += (c - phi[idx(i, j, k + 1)]) * hz2;
                    }
                } else {
                    let km = (k + nz - 1) % nz;
                    let kp = (k + 1) % nz;
                    acc += (c - phi[idx(i, j, km)]) * hz2;
                    acc += (c - phi[idx(i, j, kp)]) * hz2;
                }
                out[idx(i, j, k)] = acc;
            }
        }
    }
}

fn subtract_mean(v: &mut [f64]) {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    for x in v.iter_mut() {
        *x -= mean;
    }
}

/// Leray projection: solves the pressure Poisson problem by diagonally
/// preconditioned conjugate gradients (nullspace removed by mean
/// subtraction) and subtracts the resulting gradient.
pub fn leray_project(u: &VectorField) -> Result<LerayOutput, OpError> {
    let g = *u.grid();
    let scale = norms::l2_sq(u).sqrt();
    // Half the solenoidal budget, so the projected tag has margin; floor
    // keeps the target meaningful for tiny fields.
    let target = 0.5 * tol::SOLENOIDAL_DIV * scale / g.min_spacing();
    leray_project_with_target(u, target)
}

/// [`leray_project`] with an explicit absolute ℓ² residual target for the
/// Poisson solve (eigensolvers need more accuracy than the tag budget).
pub(crate) fn leray_project_with_target(
    u: &VectorField,
    target: f64,
) -> Result<LerayOutput, OpError> {
    let g = *u.grid();
    let div = divergence(u);
    // Solve (−Δ_N) φ = −div u so that div(u − ∇φ) = 0.
    let mut b: Vec<f64> = div.values().iter().map(|v| -v).collect();
    subtract_mean(&mut b);
    let b_norm = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if b_norm <= target.max(1e-300) {
        return Ok(LerayOutput {
            field: {
                let mut out = u.clone();
                out.tag = Tag::Solenoidal;
                out
            },
            potential: ScalarField::zeros(g, Loc::Cell),
            iters: 0,
            residual: b_norm,
        });
    }
    let diag = poisson_diagonal(&g);
    let mut phi = vec![0.0; b.len()];
    let opts = CgOptions {
        tol_abs: target,
        max_iters: tol::CG_MAX_ITERS,
        remove_mean: true,
    };
    let stats = cg(
        |x, out| apply_poisson(&g, x, out),
        &b,
        &mut phi,
        Some(&diag),
        &opts,
    );
    if !stats.converged {
        return Err(OpError::SolverFailure {
            iters: stats.iters,
            residual: stats.residual,
        });
    }
    subtract_mean(&mut phi);
    let potential = ScalarField::from_vec(g, Loc::Cell, phi).expect("sized by construction");
    let grad = pressure_gradient(&potential);
    let mut field = u.clone();
    field.axpy(-1.0, &grad);
    field.tag = Tag::Solenoidal;
    Ok(LerayOutput {
        field,
        potential,
        iters: stats.iters,
        residual: stats.residual,
    })
}
