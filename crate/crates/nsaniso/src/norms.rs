//! Volume-weighted norms, seminorms and inner products.
//!
//! Derivative seminorms are defined as the exact quadratic forms of the
//! discrete component Laplacians (summation-by-parts pairing):
//!
//! - on-node directions (a face location along its normal): sum of all gap
//!   differences, wall gaps included;
//! - cell-centered transverse directions: interior gaps plus the ghost
//!   contribution `2(f₀² + f_{n-1}²)/h²` of the reflected no-slip ghost
//!   value (homogeneous Dirichlet walls);
//! - vertical direction: wrapped gaps on the periodic full domain; on the
//!   half domain, interior gaps for cell-centered layouts (tangential
//!   components satisfy a natural condition at Γ₀/Γ₁) and all gaps for the
//!   z-face layout (the normal component vanishes there).
//!
//! With these conventions `(−Δ_h u, u) = ‖∇_h u‖²` holds exactly, which is
//! what lets the energy identities close at roundoff level.
//!
//! Mixed norms `L^q_v(L^p_h)` reduce horizontally first (per vertical
//! layer), then vertically; a vector field's mixed norm is the Euclidean
//! combination of its component mixed norms.

use crate::field::{ScalarField, VectorField};
use crate::grid::Loc;
use crate::operators;

/// Admissible exponents for mixed norms.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Exp {
    One,
    Two,
    Four,
    Inf,
}

impl Exp {
    /// Parses `"1" | "2" | "4" | "inf"`.
    pub fn parse(s: &str) -> Option<Exp> {
        match s {
            "1" => Some(Exp::One),
            "2" => Some(Exp::Two),
            "4" => Some(Exp::Four),
            "inf" | "Inf" | "INF" => Some(Exp::Inf),
            _ => None,
        }
    }
}

/// Norm selector.
#[derive(Clone, Copy, PartialEq, Debug)]
pub enum Norm {
    /// Volume-weighted root-sum-square over components.
    L2,
    /// `sqrt(‖u‖² + ‖∂₃u‖²)`.
    H01,
    /// `sqrt(‖u‖² + ‖∂₃u‖² + ‖∂₃²u‖²)`.
    H02,
    /// `sqrt(‖u‖² + all first differences)`.
    H1,
    /// Vertical `L^q` of horizontal `L^p`, horizontal reduction first.
    Mixed(Exp, Exp),
}

/// Inner-product selector.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum InnerKind {
    L2,
    H01,
}

/// 1-D closure of a direction, fixing which gaps enter its quadratic form.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Closure {
    /// Stored nodes include the walls: all gaps.
    OnNode,
    /// Cell-centered with no-slip walls: interior gaps + ghost terms.
    GhostDirichlet,
    /// Cell-centered with a natural boundary: interior gaps only.
    Neumann,
    /// Wrapped gaps.
    Periodic,
}

/// The closure of `loc` along a direction (0 = x, 1 = y, 2 = z).
pub(crate) fn closure(f: &ScalarField, dir: usize) -> Closure {
    let half = f.grid().half_domain;
    match (dir, f.loc()) {
        (0, Loc::XFace) => Closure::OnNode,
        (0, _) => Closure::GhostDirichlet,
        (1, Loc::YFace) => Closure::OnNode,
        (1, _) => Closure::GhostDirichlet,
        (2, _) if !half => Closure::Periodic,
        (2, Loc::ZFace) => Closure::OnNode,
        (2, _) => Closure::Neumann,
        _ => unreachable!("direction index out of range"),
    }
}

/// Sum of `w(i,j,k) · f² ` over all entries.
pub fn scalar_l2_sq(f: &ScalarField) -> f64 {
    let (di, dj, dk) = f.grid().dims(f.loc());
    let mut sum = 0.0;
    for i in 0..di {
        for j in 0..dj {
            for k in 0..dk {
                let v = f.at(i, j, k);
                sum += f.weight(i, j, k) * v * v;
            }
        }
    }
    sum
}

pub fn l2_sq(u: &VectorField) -> f64 {
    scalar_l2_sq(&u.u1) + scalar_l2_sq(&u.u2) + scalar_l2_sq(&u.u3)
}

/// Weight of an entry in the two directions transverse to `dir`. The
/// entry is taken at index 1 along `dir`, which is always interior there
/// (grids have at least four cells per direction), so the trapezoid half
/// of a stored wall along `dir` never leaks into the row measure, while
/// wall halves in the transverse directions are kept.
#[inline]
fn transverse_weight(f: &ScalarField, dir: usize, a: usize, b: usize) -> f64 {
    let g = f.grid();
    let (i, j, k) = match dir {
        0 => (1, a, b),
        1 => (a, 1, b),
        _ => (a, b, 1),
    };
    f.weight(i, j, k) / [g.dx, g.dy, g.dz][dir]
}

/// Quadratic form of the 1-D second-difference operator along `dir`,
/// weighted so that it equals `(−Δ_dir f, f)` exactly.
pub(crate) fn direction_qf(f: &ScalarField, dir: usize) -> f64 {
    let (di, dj, dk) = f.grid().dims(f.loc());
    let g = f.grid();
    let h = [g.dx, g.dy, g.dz][dir];
    let n = [di, dj, dk][dir];
    let cl = closure(f, dir);
    let get = |i: usize, j: usize, k: usize| f.at(i, j, k);
    let mut sum = 0.0;
    // Iterate over rows transverse to `dir`.
    let (ra, rb) = match dir {
        0 => (dj, dk),
        1 => (di, dk),
        _ => (di, dj),
    };
    for a in 0..ra {
        for b in 0..rb {
            let val = |t: usize| match dir {
                0 => get(t, a, b),
                1 => get(a, t, b),
                _ => get(a, b, t),
            };
            let tw = transverse_weight(f, dir, a, b);
            let mut row = 0.0;
            match cl {
                Closure::OnNode | Closure::Neumann => {
                    for t in 0..n - 1 {
                        let d = val(t + 1) - val(t);
                        row += d * d;
                    }
                }
                Closure::GhostDirichlet => {
                    for t in 0..n - 1 {
                        let d = val(t + 1) - val(t);
                        row += d * d;
                    }
                    let a0 = val(0);
                    let a1 = val(n - 1);
                    row += 2.0 * (a0 * a0 + a1 * a1);
                }
                Closure::Periodic => {
                    for t in 0..n {
                        let d = val((t + 1) % n) - val(t);
                        row += d * d;
                    }
                }
            }
            sum += tw * row / h;
        }
    }
    sum
}

/// `‖∂₃ f‖²` in the gap (summation-by-parts) sense.
pub fn scalar_dz_sq(f: &ScalarField) -> f64 {
    direction_qf(f, 2)
}

pub fn dz_sq(u: &VectorField) -> f64 {
    scalar_dz_sq(&u.u1) + scalar_dz_sq(&u.u2) + scalar_dz_sq(&u.u3)
}

/// `‖∇_h f‖²` in the gap sense (horizontal directions only).
pub fn scalar_gradh_sq(f: &ScalarField) -> f64 {
    direction_qf(f, 0) + direction_qf(f, 1)
}

pub fn gradh_sq(u: &VectorField) -> f64 {
    scalar_gradh_sq(&u.u1) + scalar_gradh_sq(&u.u2) + scalar_gradh_sq(&u.u3)
}

/// All first differences: `‖∇_h f‖² + ‖∂₃ f‖²`.
pub fn scalar_grad_full_sq(f: &ScalarField) -> f64 {
    scalar_gradh_sq(f) + scalar_dz_sq(f)
}

pub fn grad_full_sq(u: &VectorField) -> f64 {
    gradh_sq(u) + dz_sq(u)
}

/// `‖∂₃² f‖²`: weighted square sum of the collocated second difference.
pub fn scalar_d33_sq(f: &ScalarField) -> f64 {
    scalar_l2_sq(&operators::d33(f))
}

pub fn d33_sq(u: &VectorField) -> f64 {
    scalar_d33_sq(&u.u1) + scalar_d33_sq(&u.u2) + scalar_d33_sq(&u.u3)
}

/// `‖∇_h ∂₃ f‖²`: gap-sense horizontal seminorm of the collocated ∂₃.
pub fn gradh_d3_sq(u: &VectorField) -> f64 {
    scalar_gradh_sq(&operators::d3(&u.u1))
        + scalar_gradh_sq(&operators::d3(&u.u2))
        + scalar_gradh_sq(&operators::d3(&u.u3))
}

/// `‖∇_h ∂₃² f‖²`.
pub fn gradh_d33_sq(u: &VectorField) -> f64 {
    scalar_gradh_sq(&operators::d33(&u.u1))
        + scalar_gradh_sq(&operators::d33(&u.u2))
        + scalar_gradh_sq(&operators::d33(&u.u3))
}

/// Horizontal `L^p` of one vertical layer `k`.
fn layer_lp(f: &ScalarField, k: usize, p: Exp) -> f64 {
    let (di, dj, _) = f.grid().dims(f.loc());
    match p {
        Exp::Inf => {
            let mut m: f64 = 0.0;
            for i in 0..di {
                for j in 0..dj {
                    m = m.max(f.at(i, j, k).abs());
                }
            }
            m
        }
        _ => {
            let mut s = 0.0;
            for i in 0..di {
                for j in 0..dj {
                    // Horizontal part of the quadrature weight.
                    let whor = f.weight(i, j, k) / horizontal_weight_divisor(f, k);
                    let v = f.at(i, j, k).abs();
                    s += whor
                        * match p {
                            Exp::One => v,
                            Exp::Two => v * v,
                            Exp::Four => v * v * v * v,
                            Exp::Inf => unreachable!(),
                        };
                }
            }
            match p {
                Exp::One => s,
                Exp::Two => s.sqrt(),
                Exp::Four => s.powf(0.25),
                Exp::Inf => unreachable!(),
            }
        }
    }
}

/// The z-part of the full quadrature weight at layer `k`, divided out to
/// leave the horizontal area weight.
#[inline]
fn horizontal_weight_divisor(f: &ScalarField, k: usize) -> f64 {
    let g = f.grid();
    if g.half_domain && f.loc() == Loc::ZFace && (k == 0 || k == g.nz) {
        0.5 * g.dz
    } else {
        g.dz
    }
}

/// Mixed norm `L^q_v(L^p_h)` of a scalar: horizontal reduction first.
pub fn scalar_mixed(f: &ScalarField, q: Exp, p: Exp) -> f64 {
    let (_, _, dk) = f.grid().dims(f.loc());
    let g = f.grid();
    match q {
        Exp::Inf => {
            let mut m: f64 = 0.0;
            for k in 0..dk {
                m = m.max(layer_lp(f, k, p));
            }
            m
        }
        _ => {
            let mut s = 0.0;
            for k in 0..dk {
                let wz = if g.half_domain && f.loc() == Loc::ZFace && (k == 0 || k == g.nz) {
                    0.5 * g.dz
                } else {
                    g.dz
                };
                let v = layer_lp(f, k, p);
                s += wz
                    * match q {
                        Exp::One => v,
                        Exp::Two => v * v,
                        Exp::Four => v * v * v * v,
                        Exp::Inf => unreachable!(),
                    };
            }
            match q {
                Exp::One => s,
                Exp::Two => s.sqrt(),
                Exp::Four => s.powf(0.25),
                Exp::Inf => unreachable!(),
            }
        }
    }
}

/// Norm of a scalar field.
pub fn scalar_norm(f: &ScalarField, kind: Norm) -> f64 {
    match kind {
        Norm::L2 => scalar_l2_sq(f).sqrt(),
        Norm::H01 => (scalar_l2_sq(f) + scalar_dz_sq(f)).sqrt(),
        Norm::H02 => (scalar_l2_sq(f) + scalar_dz_sq(f) + scalar_d33_sq(f)).sqrt(),
        Norm::H1 => (scalar_l2_sq(f) + scalar_grad_full_sq(f)).sqrt(),
        Norm::Mixed(q, p) => scalar_mixed(f, q, p),
    }
}

/// Norm of a vector field. Mixed norms combine the component mixed norms
/// in the Euclidean sense, so `Mixed(2,2)` coincides with `L2`.
pub fn norm(u: &VectorField, kind: Norm) -> f64 {
    match kind {
        Norm::L2 => l2_sq(u).sqrt(),
        Norm::H01 => (l2_sq(u) + dz_sq(u)).sqrt(),
        Norm::H02 => (l2_sq(u) + dz_sq(u) + d33_sq(u)).sqrt(),
        Norm::H1 => (l2_sq(u) + grad_full_sq(u)).sqrt(),
        Norm::Mixed(q, p) => {
            let a = scalar_mixed(&u.u1, q, p);
            let b = scalar_mixed(&u.u2, q, p);
            let c = scalar_mixed(&u.u3, q, p);
            (a * a + b * b + c * c).sqrt()
        }
    }
}

/// Weighted bilinear pairing `Σ w f g` of two scalars on one layout.
pub fn scalar_inner_l2(f: &ScalarField, g: &ScalarField) -> f64 {
    f.compatible(g).expect("inner product across layouts");
    let (di, dj, dk) = f.grid().dims(f.loc());
    let mut sum = 0.0;
    for i in 0..di {
        for j in 0..dj {
            for k in 0..dk {
                sum += f.weight(i, j, k) * f.at(i, j, k) * g.at(i, j, k);
            }
        }
    }
    sum
}

/// Polarized form of the vertical gap seminorm.
fn scalar_inner_dz(f: &ScalarField, g: &ScalarField) -> f64 {
    f.compatible(g).expect("inner product across layouts");
    let (di, dj, dk) = f.grid().dims(f.loc());
    let grid = f.grid();
    let cl = closure(f, 2);
    let mut sum = 0.0;
    for i in 0..di {
        for j in 0..dj {
            let tw = transverse_weight(f, 2, i, j);
            let mut row = 0.0;
            match cl {
                Closure::Periodic => {
                    for k in 0..dk {
                        let kp = (k + 1) % dk;
                        row += (f.at(i, j, kp) - f.at(i, j, k)) * (g.at(i, j, kp) - g.at(i, j, k));
                    }
                }
                _ => {
                    for k in 0..dk - 1 {
                        row += (f.at(i, j, k + 1) - f.at(i, j, k))
                            * (g.at(i, j, k + 1) - g.at(i, j, k));
                    }
                }
            }
            sum += tw * row / grid.dz;
        }
    }
    sum
}

/// Inner product of two vector fields.
pub fn inner(u: &VectorField, v: &VectorField, kind: InnerKind) -> f64 {
    u.compatible(v).expect("inner product across grids");
    let l2 = scalar_inner_l2(&u.u1, &v.u1)
        + scalar_inner_l2(&u.u2, &v.u2)
        + scalar_inner_l2(&u.u3, &v.u3);
    match kind {
        InnerKind::L2 => l2,
        InnerKind::H01 => {
            l2 + scalar_inner_dz(&u.u1, &v.u1)
                + scalar_inner_dz(&u.u2, &v.u2)
                + scalar_inner_dz(&u.u3, &v.u3)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::VectorField;
    use crate::grid::build_grid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_vector(grid: crate::grid::Grid, seed: u64) -> VectorField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = VectorField::zeros(grid);
        for c in [&mut v.u1, &mut v.u2, &mut v.u3] {
            for x in c.values_mut() {
                *x = rng.gen_range(-1.0..1.0);
            }
        }
        v.tag = crate::field::Tag::General;
        v.enforce_walls();
        v
    }

    #[test]
    fn zero_field_has_zero_norms() {
        let g = build_grid(6, 6, 6, 1.0, 1.0, false).unwrap();
        let z = VectorField::zeros(g);
        for kind in [
            Norm::L2,
            Norm::H01,
            Norm::H02,
            Norm::H1,
            Norm::Mixed(Exp::Two, Exp::Four),
            Norm::Mixed(Exp::Inf, Exp::One),
        ] {
            assert_eq!(norm(&z, kind), 0.0);
        }
    }

    #[test]
    fn constant_unit_x_field_on_unit_square_full_domain() {
        // u ≡ (1,0,0) on lx = ly = 1, full domain: volume 2, so ‖u‖ = √2
        // exactly (the trapezoid weights at the stored wall faces keep the
        // quadrature of constants exact).
        let g = build_grid(8, 8, 8, 1.0, 1.0, false).unwrap();
        let v = VectorField::from_fns(g, |_, _, _| 1.0, |_, _, _| 0.0, |_, _, _| 0.0);
        let l2 = norm(&v, Norm::L2);
        assert!((l2 - std::f64::consts::SQRT_2).abs() < 1e-13, "{l2}");
    }

    #[test]
    fn mixed_two_two_matches_l2() {
        let g = build_grid(6, 5, 8, 1.3, 0.9, false).unwrap();
        let v = random_vector(g, 7);
        let a = norm(&v, Norm::L2);
        let b = norm(&v, Norm::Mixed(Exp::Two, Exp::Two));
        assert!((a - b).abs() <= 1e-13 * a.max(1.0), "{a} vs {b}");
        let gh = build_grid(6, 5, 8, 1.3, 0.9, true).unwrap();
        let vh = random_vector(gh, 8);
        let a = norm(&vh, Norm::L2);
        let b = norm(&vh, Norm::Mixed(Exp::Two, Exp::Two));
        assert!((a - b).abs() <= 1e-13 * a.max(1.0), "half: {a} vs {b}");
    }

    #[test]
    fn inner_product_is_symmetric_bilinear_and_norm_compatible() {
        let g = build_grid(5, 6, 6, 1.0, 1.5, false).unwrap();
        let mut rngseed = 100;
        for _ in 0..20 {
            let u = random_vector(g, rngseed);
            let v = random_vector(g, rngseed + 1);
            let w = random_vector(g, rngseed + 2);
            rngseed += 3;
            for kind in [InnerKind::L2, InnerKind::H01] {
                let uv = inner(&u, &v, kind);
                let vu = inner(&v, &u, kind);
                assert!((uv - vu).abs() <= 1e-13 * uv.abs().max(1.0));
                // bilinearity in the first slot
                let mut lin = u.clone();
                lin.axpy(2.5, &w);
                let lhs = inner(&lin, &v, kind);
                let rhs = uv + 2.5 * inner(&w, &v, kind);
                assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
                // norm compatibility
                let n = match kind {
                    InnerKind::L2 => norm(&u, Norm::L2),
                    InnerKind::H01 => norm(&u, Norm::H01),
                };
                let ii = inner(&u, &u, kind);
                assert!((ii - n * n).abs() <= 1e-13 * ii.max(1.0));
            }
        }
    }

    #[test]
    fn triangle_inequality_holds_on_random_pairs() {
        let g = build_grid(5, 5, 6, 1.0, 1.0, true).unwrap();
        let kinds = [
            Norm::L2,
            Norm::H01,
            Norm::H1,
            Norm::Mixed(Exp::Two, Exp::Four),
            Norm::Mixed(Exp::Inf, Exp::Two),
            Norm::Mixed(Exp::One, Exp::One),
            Norm::Mixed(Exp::Four, Exp::Inf),
        ];
        let mut seed = 1000;
        for _ in 0..1000 {
            let u = random_vector(g, seed);
            let v = random_vector(g, seed + 1);
            seed += 2;
            let kind = kinds[(seed as usize) % kinds.len()];
            let mut sum = u.clone();
            sum.axpy(1.0, &v);
            let lhs = norm(&sum, kind);
            let rhs = norm(&u, kind) + norm(&v, kind);
            assert!(lhs <= rhs * (1.0 + 1e-12), "{kind:?}: {lhs} > {rhs}");
        }
    }

    #[test]
    fn mixed_norms_are_monotone_under_pointwise_domination() {
        let g = build_grid(5, 5, 6, 1.0, 1.0, false).unwrap();
        let mut seed = 4000;
        for _ in 0..200 {
            let u = random_vector(g, seed);
            let mut dominating = u.clone();
            // |v| = |u| + positive bump ⇒ |v| ≥ |u| pointwise.
            let v_extra = random_vector(g, seed + 1);
            for (c_dom, (c_u, c_e)) in [
                (&mut dominating.u1, (&u.u1, &v_extra.u1)),
                (&mut dominating.u2, (&u.u2, &v_extra.u2)),
                (&mut dominating.u3, (&u.u3, &v_extra.u3)),
            ] {
                for ((d, a), e) in c_dom
                    .values_mut()
                    .iter_mut()
                    .zip(c_u.values().iter())
                    .zip(c_e.values().iter())
                {
                    *d = a.abs() + e.abs();
                }
            }
            seed += 2;
            for kind in [Norm::Mixed(Exp::Inf, Exp::Two), Norm::Mixed(Exp::Two, Exp::Four)] {
                assert!(norm(&u, kind) <= norm(&dominating, kind) * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn exponent_parsing() {
        assert_eq!(Exp::parse("1"), Some(Exp::One));
        assert_eq!(Exp::parse("inf"), Some(Exp::Inf));
        assert_eq!(Exp::parse("3"), None);
    }
}
