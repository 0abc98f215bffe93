//! Vertical symmetry machinery: the even/odd extension from the half
//! domain to the vertically periodic full domain, the reflection map, and
//! the horizontal scaling + mollification pipeline used to approximate a
//! field by compactly supported smooth fields.

use crate::field::{ScalarField, Tag, VectorField};
use crate::grid::{Grid, Loc};
use crate::norms::{self, Norm};
use crate::operators;
use std::fmt;

/// Errors from symmetry/scaling/mollification operations.
#[derive(Debug, Clone, PartialEq)]
pub enum SymmetryError {
    /// Operation requires a half-domain field.
    NotHalfDomain,
    /// Operation requires a full-domain field.
    NotFullDomain,
    /// Vertical velocity does not vanish at the horizontal walls.
    WallTrace { max: f64, bound: f64 },
    /// Scaling factor outside (1, 2].
    BadScale(f64),
    /// Nonpositive or non-finite mollifier width.
    BadKernelWidth(f64),
    /// Kernel support reaches past the field's lateral zero margin.
    KernelExceedsMargin { reach: f64, margin: f64 },
}

impl fmt::Display for SymmetryError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SymmetryError::NotHalfDomain => write!(f, "expected a half-domain field"),
            SymmetryError::NotFullDomain => write!(f, "expected a full-domain field"),
            SymmetryError::WallTrace { max, bound } => write!(
                f,
                "vertical velocity at the horizontal walls is {max:.3e}, above {bound:.3e}"
            ),
            SymmetryError::BadScale(l) => {
                write!(f, "horizontal scale factor must lie in (1, 2], got {l}")
            }
            SymmetryError::BadKernelWidth(eta) => {
                write!(f, "mollifier width must be positive and finite, got {eta}")
            }
            SymmetryError::KernelExceedsMargin { reach, margin } => write!(
                f,
                "kernel reach {reach:.3e} exceeds the lateral zero margin {margin:.3e}"
            ),
        }
    }
}

impl std::error::Error for SymmetryError {}

// ---------------------------------------------------------------------------
// Extension, restriction, reflection
// ---------------------------------------------------------------------------

/// Even/odd extension of a half-domain field to the full domain: the
/// horizontal components extend evenly in the vertical coordinate, the
/// vertical component oddly. Requires `u₃ ≈ 0` at the horizontal walls
/// (within `1e−12·‖u‖`), because the odd extension of a nonvanishing
/// trace jumps.
pub fn sigma_extend(u: &VectorField) -> Result<VectorField, SymmetryError> {
    let g = *u.grid();
    if !g.half_domain {
        return Err(SymmetryError::NotHalfDomain);
    }
    let max_wall = u.max_wall_value();
    let bound = 1e-12 * norms::l2_sq(u).sqrt();
    if max_wall > bound {
        return Err(SymmetryError::WallTrace {
            max: max_wall,
            bound,
        });
    }
    let gf = g.extended();
    let nzh = g.nz;
    let mut out = VectorField::zeros(gf);
    out.tag = u.tag;
    // horizontal components: cell-layered, even about x₃ = 0
    for (src, dst) in [(&u.u1, &mut out.u1), (&u.u2, &mut out.u2)] {
        let (di, dj, _) = gf.dims(src.loc());
        for i in 0..di {
            for j in 0..dj {
                for k in 0..gf.nz {
                    let kh = if k >= nzh { k - nzh } else { nzh - 1 - k };
                    dst.set(i, j, k, src.at(i, j, kh));
                }
            }
        }
    }
    // vertical component: z-faces, odd about x₃ = 0 (face 0 pairs with the
    // top wall through periodicity; both wall faces carry the ~0 trace)
    let (di, dj, _) = gf.dims(Loc::ZFace);
    for i in 0..di {
        for j in 0..dj {
            for k in 0..gf.nz {
                let v = if k >= nzh {
                    u.u3.at(i, j, k - nzh)
                } else {
                    -u.u3.at(i, j, nzh - k)
                };
                out.u3.set(i, j, k, v);
            }
        }
    }
    Ok(out)
}

/// Restriction of a full-domain field to the upper half domain; exact
/// inverse of [`sigma_extend`] on its image.
pub fn sigma_restrict(u: &VectorField) -> Result<VectorField, SymmetryError> {
    let g = *u.grid();
    if g.half_domain {
        return Err(SymmetryError::NotFullDomain);
    }
    let gh = g.restricted();
    let nzh = gh.nz;
    let mut out = VectorField::zeros(gh);
    out.tag = u.tag;
    for (src, dst) in [(&u.u1, &mut out.u1), (&u.u2, &mut out.u2)] {
        let (di, dj, _) = gh.dims(src.loc());
        for i in 0..di {
            for j in 0..dj {
                for k in 0..nzh {
                    dst.set(i, j, k, src.at(i, j, k + nzh));
                }
            }
        }
    }
    let (di, dj, _) = gh.dims(Loc::ZFace);
    for i in 0..di {
        for j in 0..dj {
            for k in 0..=nzh {
                // face nzh of the half grid is the top wall, which is the
                // periodic image of face 0 of the full grid
                let v = if k == nzh {
                    u.u3.at(i, j, 0)
                } else {
                    u.u3.at(i, j, k + nzh)
                };
                out.u3.set(i, j, k, v);
            }
        }
    }
    Ok(out)
}

/// The vertical reflection `x₃ ↦ −x₃`: horizontal components are carried,
/// the vertical component flips sign. Involution and L² isometry.
pub fn symmetry_s(u: &VectorField) -> Result<VectorField, SymmetryError> {
    let g = *u.grid();
    if g.half_domain {
        return Err(SymmetryError::NotFullDomain);
    }
    let nz = g.nz;
    let mut out = VectorField::zeros(g);
    out.tag = u.tag;
    for (src, dst) in [(&u.u1, &mut out.u1), (&u.u2, &mut out.u2)] {
        let (di, dj, _) = g.dims(src.loc());
        for i in 0..di {
            for j in 0..dj {
                for k in 0..nz {
                    dst.set(i, j, k, src.at(i, j, nz - 1 - k));
                }
            }
        }
    }
    let (di, dj, _) = g.dims(Loc::ZFace);
    for i in 0..di {
        for j in 0..dj {
            for k in 0..nz {
                dst_set_reflected(&mut out.u3, &u.u3, i, j, k, nz);
            }
        }
    }
    Ok(out)
}

#[inline]
fn dst_set_reflected(dst: &mut ScalarField, src: &ScalarField, i: usize, j: usize, k: usize, nz: usize) {
    let km = (nz - k) % nz;
    dst.set(i, j, k, -src.at(i, j, km));
}

/// `‖Su − u‖_{L²}`: zero exactly when the field is invariant under the
/// vertical reflection.
pub fn s_invariance_defect(u: &VectorField) -> Result<f64, SymmetryError> {
    let mut s = symmetry_s(u)?;
    s.axpy(-1.0, u);
    Ok(norms::l2_sq(&s).sqrt())
}

// ---------------------------------------------------------------------------
// Horizontal scaling
// ---------------------------------------------------------------------------

/// Bilinear sample of one vertical layer of `f` at horizontal position
/// `(x, y)`, treating out-of-lattice samples as zero (the implicit zero
/// extension outside the domain).
fn sample_bilinear(f: &ScalarField, x: f64, y: f64, k: usize) -> f64 {
    let g = f.grid();
    let (di, dj, _) = g.dims(f.loc());
    let (x0, y0) = match f.loc() {
        Loc::XFace => (0.0, 0.5 * g.dy),
        Loc::YFace => (0.5 * g.dx, 0.0),
        _ => (0.5 * g.dx, 0.5 * g.dy),
    };
    let sx = (x - x0) / g.dx;
    let sy = (y - y0) / g.dy;
    let ix = sx.floor();
    let iy = sy.floor();
    let fx = sx - ix;
    let fy = sy - iy;
    let at = |a: f64, b: f64| -> f64 {
        if a < 0.0 || b < 0.0 {
            return 0.0;
        }
        let (a, b) = (a as usize, b as usize);
        if a >= di || b >= dj {
            return 0.0;
        }
        f.at(a, b, k)
    };
    at(ix, iy) * (1.0 - fx) * (1.0 - fy)
        + at(ix + 1.0, iy) * fx * (1.0 - fy)
        + at(ix, iy + 1.0) * (1.0 - fx) * fy
        + at(ix + 1.0, iy + 1.0) * fx * fy
}

/// Horizontal contraction of the support toward the rectangle center:
/// each component is sampled at `center + λ·(x_h − center)` (zero outside
/// the domain), and the vertical component is additionally multiplied by
/// `λ`. The continuum version preserves the divergence exactly; on the
/// grid the residual is at interpolation order, so callers that need an
/// exactly solenoidal field re-project.
pub fn scale_horizontal(u: &VectorField, lambda: f64) -> Result<VectorField, SymmetryError> {
    if !(lambda > 1.0 && lambda <= 2.0) || !lambda.is_finite() {
        return Err(SymmetryError::BadScale(lambda));
    }
    let g = *u.grid();
    let (cx, cy) = (0.5 * g.lx, 0.5 * g.ly);
    let mut out = VectorField::zeros(g);
    out.tag = Tag::General;
    let comps: [(&ScalarField, f64); 3] = [(&u.u1, 1.0), (&u.u2, 1.0), (&u.u3, lambda)];
    for (c, (src, factor)) in comps.into_iter().enumerate() {
        let loc = src.loc();
        let (di, dj, dk) = g.dims(loc);
        let dst = match c {
            0 => &mut out.u1,
            1 => &mut out.u2,
            _ => &mut out.u3,
        };
        for i in 0..di {
            for j in 0..dj {
                let p = g.pos(loc, i, j, 0);
                let xs = cx + lambda * (p.0 - cx);
                let ys = cy + lambda * (p.1 - cy);
                for k in 0..dk {
                    dst.set(i, j, k, factor * sample_bilinear(src, xs, ys, k));
                }
            }
        }
    }
    out.enforce_walls();
    Ok(out)
}

/// Minimal distance from any nonzero sample of `u` to the lateral
/// boundary. Fields that are identically zero report the distance from
/// the rectangle center (the largest possible margin).
pub fn lateral_support_margin(u: &VectorField) -> f64 {
    let g = u.grid();
    let mut margin = f64::INFINITY;
    for src in [&u.u1, &u.u2, &u.u3] {
        let loc = src.loc();
        let (di, dj, dk) = g.dims(loc);
        for i in 0..di {
            for j in 0..dj {
                for k in 0..dk {
                    if src.at(i, j, k) != 0.0 {
                        let (x, y, _) = g.pos(loc, i, j, k);
                        let d = x.min(g.lx - x).min(y).min(g.ly - y);
                        margin = margin.min(d);
                    }
                }
            }
        }
    }
    if margin.is_infinite() {
        0.5 * g.lx.min(g.ly)
    } else {
        margin
    }
}

// ---------------------------------------------------------------------------
// Horizontal mollification
// ---------------------------------------------------------------------------

/// Discrete horizontal mollifier: the polynomial bump `(1 − r²/η²)³` on
/// `r < η`, sampled on the horizontal lattice offsets and renormalized to
/// unit sum.
pub struct MollifierKernel {
    eta: f64,
    /// Half-widths of the offset stencil in lattice steps.
    ax: usize,
    ay: usize,
    /// Row-major weights over offsets `(a, b) ∈ [−ax, ax] × [−ay, ay]`.
    weights: Vec<f64>,
    /// Largest Euclidean offset radius with nonzero weight.
    reach: f64,
}

impl MollifierKernel {
    pub fn new(grid: &Grid, eta: f64) -> Result<Self, SymmetryError> {
        if !(eta > 0.0) || !eta.is_finite() {
            return Err(SymmetryError::BadKernelWidth(eta));
        }
        let ax = (eta / grid.dx).ceil() as usize;
        let ay = (eta / grid.dy).ceil() as usize;
        let mut weights = vec![0.0; (2 * ax + 1) * (2 * ay + 1)];
        let mut sum = 0.0;
        let mut reach = 0.0_f64;
        for a in -(ax as isize)..=(ax as isize) {
            for b in -(ay as isize)..=(ay as isize) {
                let r2 = (a as f64 * grid.dx).powi(2) + (b as f64 * grid.dy).powi(2);
                if r2 < eta * eta {
                    let w = (1.0 - r2 / (eta * eta)).powi(3);
                    weights[((a + ax as isize) as usize) * (2 * ay + 1)
                        + (b + ay as isize) as usize] = w;
                    sum += w;
                    reach = reach.max(r2.sqrt());
                }
            }
        }
        for w in weights.iter_mut() {
            *w /= sum;
        }
        Ok(MollifierKernel {
            eta,
            ax,
            ay,
            weights,
            reach,
        })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// Largest offset distance actually reached by the stencil.
    pub fn reach(&self) -> f64 {
        self.reach
    }

    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Applies the kernel to one scalar layer structure with implicit
    /// zero padding outside the lattice.
    fn apply_scalar(&self, f: &ScalarField) -> ScalarField {
        let g = *f.grid();
        let (di, dj, dk) = g.dims(f.loc());
        let mut out = ScalarField::zeros(g, f.loc());
        let (ax, ay) = (self.ax as isize, self.ay as isize);
        for i in 0..di {
            for j in 0..dj {
                for k in 0..dk {
                    let mut acc = 0.0;
                    for a in -ax..=ax {
                        let si = i as isize - a;
                        if si < 0 || si >= di as isize {
                            continue;
                        }
                        for b in -ay..=ay {
                            let sj = j as isize - b;
                            if sj < 0 || sj >= dj as isize {
                                continue;
                            }
                            let w = self.weights
                                [((a + ax) as usize) * (2 * self.ay + 1) + (b + ay) as usize];
                            if w != 0.0 {
                                acc += w * f.at(si as usize, sj as usize, k);
                            }
                        }
                    }
                    out.set(i, j, k, acc);
                }
            }
        }
        out
    }
}

/// Horizontal convolution of every component with the kernel. Requires
/// the kernel reach to fit inside the field's lateral zero margin, so the
/// convolution never interacts with the boundary closure: then it
/// commutes with vertical differencing and preserves the discrete
/// divergence up to roundoff, and never increases the L² norm.
pub fn mollify_horizontal(
    u: &VectorField,
    kernel: &MollifierKernel,
) -> Result<VectorField, SymmetryError> {
    let margin = lateral_support_margin(u);
    if kernel.reach() > margin {
        return Err(SymmetryError::KernelExceedsMargin {
            reach: kernel.reach(),
            margin,
        });
    }
    let mut out = VectorField {
        u1: kernel.apply_scalar(&u.u1),
        u2: kernel.apply_scalar(&u.u2),
        u3: kernel.apply_scalar(&u.u3),
        tag: u.tag,
    };
    out.enforce_walls();
    Ok(out)
}

/// Scalar-field variant of [`mollify_horizontal`] without the margin
/// precondition (used for kernel diagnostics and tests).
pub fn mollify_scalar(f: &ScalarField, kernel: &MollifierKernel) -> ScalarField {
    kernel.apply_scalar(f)
}

// ---------------------------------------------------------------------------
// Density approximation
// ---------------------------------------------------------------------------

/// One level of the diagonal approximation sequence.
#[derive(Debug, Clone)]
pub struct DensityLevel {
    pub lambda: f64,
    pub eta: f64,
    /// `‖approximant − u‖` in the vertical-derivative Sobolev norm.
    pub error_h01: f64,
    /// Lateral distance from the approximant's support to the walls.
    pub support_margin: f64,
    /// Largest discrete divergence of the approximant.
    pub max_abs_div: f64,
}

/// Runs the scaling+mollification diagonal: for each `(λₖ, ηₖ)` builds
/// the compactly supported approximant and reports its distance to `u`
/// together with the validity diagnostics.
pub fn density_approximation(
    u: &VectorField,
    lambdas: &[f64],
    etas: &[f64],
) -> Result<Vec<DensityLevel>, SymmetryError> {
    assert_eq!(
        lambdas.len(),
        etas.len(),
        "scale and width sequences must pair up"
    );
    let mut out = Vec::with_capacity(lambdas.len());
    for (&lambda, &eta) in lambdas.iter().zip(etas) {
        let scaled = scale_horizontal(u, lambda)?;
        let kernel = MollifierKernel::new(u.grid(), eta)?;
        let approx = mollify_horizontal(&scaled, &kernel)?;
        let mut diff = approx.clone();
        diff.axpy(-1.0, u);
        out.push(DensityLevel {
            lambda,
            eta,
            error_h01: norms::norm(&diff, Norm::H01),
            support_margin: lateral_support_margin(&approx),
            max_abs_div: operators::max_abs_div(&approx),
        });
    }
    Ok(out)
}
