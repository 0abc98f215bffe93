//! Reproducible analytic field families.
//!
//! Every initial condition used by the experiment drivers, the constant
//! estimators, and the test suites comes from one of the constructors
//! here, so that a (family, amplitude, seed) triple pins the field down
//! bit-for-bit. Vector families are discretely divergence-free by
//! construction (streamfunction curls) or by projection.

use crate::field::{ScalarField, Tag, VectorField};
use crate::grid::{Grid, Loc};
use crate::norms;
use crate::operators::{self, OpError};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Errors from family construction.
#[derive(Debug, Clone, PartialEq)]
pub enum SampleError {
    /// The requested vertical mode cannot be represented on this grid.
    ResolutionTooCoarse { needed_mode: usize, max_mode: usize },
    /// A projection or validation step failed.
    Op(OpError),
    /// The constructed field vanished, so it cannot be normalized.
    Degenerate,
    /// Parameters outside their documented range.
    BadParameter(&'static str),
}

impl From<OpError> for SampleError {
    fn from(e: OpError) -> Self {
        SampleError::Op(e)
    }
}

impl std::fmt::Display for SampleError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SampleError::ResolutionTooCoarse {
                needed_mode,
                max_mode,
            } => write!(
                f,
                "vertical mode {needed_mode} not representable (max {max_mode})"
            ),
            SampleError::Op(e) => write!(f, "projection failed: {e}"),
            SampleError::Degenerate => write!(f, "constructed field is identically zero"),
            SampleError::BadParameter(p) => write!(f, "parameter out of range: {p}"),
        }
    }
}

impl std::error::Error for SampleError {}

/// Configuration-facing family selector.
#[derive(Debug, Clone, PartialEq)]
pub enum FamilySpec {
    /// Horizontal vortex from a compact streamfunction, modulated in z by
    /// `cos(m·π·z)`; `zmode = 0` gives a z-independent column.
    PlanarVortex { amplitude: f64, zmode: usize },
    /// Family with `‖u‖_{L²} ≤ amplitude·η^α` and
    /// `‖∂₃u‖_{L²} = amplitude·η^{−α}` (large vertical shear, small mass).
    Anisotropic { amplitude: f64, eta: f64, alpha: f64 },
    /// Horizontal vortex concentrated in layers of the given width near
    /// the symmetry planes z = 0 and z = ±1.
    BoundaryLayer { amplitude: f64, width: f64 },
    /// Leray projection of a seeded random smooth field, scaled to the
    /// requested L² amplitude.
    RandomSolenoidal { amplitude: f64, seed: u64 },
    /// `u₁ = amplitude·sin(π z)`, `u₂ = u₃ = 0` (not wall-conforming in
    /// the interior-constant sense; walls are zeroed on storage).
    VerticalShear { amplitude: f64 },
}

impl FamilySpec {
    /// The family's stable name, as written in configuration files.
    pub fn name(&self) -> &'static str {
        match self {
            FamilySpec::PlanarVortex { .. } => "planar-vortex",
            FamilySpec::Anisotropic { .. } => "anisotropic",
            FamilySpec::BoundaryLayer { .. } => "boundary-layer",
            FamilySpec::RandomSolenoidal { .. } => "random-solenoidal",
            FamilySpec::VerticalShear { .. } => "vertical-shear",
        }
    }

    /// The same family with its overall amplitude replaced.
    pub fn with_amplitude(&self, amplitude: f64) -> FamilySpec {
        let mut out = self.clone();
        match &mut out {
            FamilySpec::PlanarVortex { amplitude: a, .. }
            | FamilySpec::Anisotropic { amplitude: a, .. }
            | FamilySpec::BoundaryLayer { amplitude: a, .. }
            | FamilySpec::RandomSolenoidal { amplitude: a, .. }
            | FamilySpec::VerticalShear { amplitude: a } => *a = amplitude,
        }
        out
    }

    /// The family's vertical-concentration parameter, when it has one.
    pub fn eta(&self) -> Option<f64> {
        match self {
            FamilySpec::Anisotropic { eta, .. } => Some(*eta),
            _ => None,
        }
    }
}

/// Builds the field described by `spec` on `grid`.
pub fn build(grid: &Grid, spec: &FamilySpec) -> Result<VectorField, SampleError> {
    match *spec {
        FamilySpec::PlanarVortex { amplitude, zmode } => planar_vortex(grid, amplitude, zmode),
        FamilySpec::Anisotropic {
            amplitude,
            eta,
            alpha,
        } => anisotropic_family(grid, amplitude, eta, alpha),
        FamilySpec::BoundaryLayer { amplitude, width } => boundary_layer(grid, amplitude, width),
        FamilySpec::RandomSolenoidal { amplitude, seed } => {
            random_solenoidal(grid, amplitude, seed)
        }
        FamilySpec::VerticalShear { amplitude } => Ok(vertical_shear(grid, amplitude)),
    }
}

/// Compactly supported C² bump: `(1−t²)³` on |t| < 1, zero outside.
fn bump(t: f64) -> f64 {
    let s = 1.0 - t * t;
    if s > 0.0 {
        s * s * s
    } else {
        0.0
    }
}

/// Streamfunction on horizontal nodes: product of two bumps covering the
/// middle ~70% of the cross-section, so its support keeps a positive
/// margin from the lateral walls.
fn node_streamfunction(g: &Grid) -> Vec<Vec<f64>> {
    let (cx, cy) = (0.5 * g.lx, 0.5 * g.ly);
    let (rx, ry) = (0.35 * g.lx, 0.35 * g.ly);
    let mut psi = vec![vec![0.0; g.ny + 1]; g.nx + 1];
    for (i, row) in psi.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let x = i as f64 * g.dx;
            let y = j as f64 * g.dy;
            *v = bump((x - cx) / rx) * bump((y - cy) / ry);
        }
    }
    psi
}

/// Horizontal vortex `u_h = (−D_y ψ, D_x ψ)·g(z)`, `u₃ = 0`, with the
/// discrete node differences making `div_h` vanish identically for any
/// vertical profile `g`.
fn vortex_from_profile(
    g: &Grid,
    amplitude: f64,
    profile: impl Fn(f64) -> f64,
) -> VectorField {
    let psi = node_streamfunction(g);
    let mut u = VectorField::zeros(*g);
    let (d1i, d1j, d1k) = g.dims(Loc::XFace);
    for i in 0..d1i {
        for j in 0..d1j {
            let dpsi = -(psi[i][j + 1] - psi[i][j]) / g.dy;
            for k in 0..d1k {
                let z = g.z_center(k);
                u.u1.set(i, j, k, amplitude * dpsi * profile(z));
            }
        }
    }
    let (d2i, d2j, d2k) = g.dims(Loc::YFace);
    for i in 0..d2i {
        for j in 0..d2j {
            let dpsi = (psi[i + 1][j] - psi[i][j]) / g.dx;
            for k in 0..d2k {
                let z = g.z_center(k);
                u.u2.set(i, j, k, amplitude * dpsi * profile(z));
            }
        }
    }
    u.enforce_walls();
    u.tag = Tag::Solenoidal;
    u
}

/// See [`FamilySpec::PlanarVortex`]. The vertical profile `cos(mπz)` is
/// even in z, so on the full domain the field is reflection-invariant.
pub fn planar_vortex(g: &Grid, amplitude: f64, zmode: usize) -> Result<VectorField, SampleError> {
    let max_mode = g.nz / 3;
    if zmode > max_mode.max(1) {
        return Err(SampleError::ResolutionTooCoarse {
            needed_mode: zmode,
            max_mode: max_mode.max(1),
        });
    }
    let m = zmode as f64;
    Ok(vortex_from_profile(g, amplitude, move |z| {
        (m * std::f64::consts::PI * z).cos()
    }))
}

/// See [`FamilySpec::Anisotropic`]: picks the smallest vertical mode whose
/// discrete shear ratio `‖∂₃·‖/‖·‖` reaches `η^{−2α}`, then scales so that
/// `‖∂₃u‖_{L²} = amplitude·η^{−α}` exactly; `‖u‖_{L²} ≤ amplitude·η^α`
/// follows.
pub fn anisotropic_family(
    g: &Grid,
    amplitude: f64,
    eta: f64,
    alpha: f64,
) -> Result<VectorField, SampleError> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(SampleError::BadParameter("eta must lie in (0,1)"));
    }
    if !(alpha > 0.0) || !amplitude.is_finite() || amplitude <= 0.0 {
        return Err(SampleError::BadParameter("alpha and amplitude must be positive"));
    }
    let needed_ratio = eta.powf(-2.0 * alpha);
    let max_mode = (g.nz / 3).max(1);
    for m in 1..=max_mode {
        let v = planar_vortex(g, 1.0, m)?;
        let l2 = norms::l2_sq(&v).sqrt();
        let d3 = norms::dz_sq(&v).sqrt();
        if l2 == 0.0 {
            return Err(SampleError::Degenerate);
        }
        if d3 / l2 >= needed_ratio {
            let mut u = v;
            u.scale(amplitude * eta.powf(-alpha) / d3);
            return Ok(u);
        }
    }
    Err(SampleError::ResolutionTooCoarse {
        needed_mode: (needed_ratio / std::f64::consts::PI).ceil() as usize,
        max_mode,
    })
}

/// See [`FamilySpec::BoundaryLayer`]: vertical profile peaked at z = 0 and
/// at z = ±1 (on the half domain, at z = 0 and z = 1), even in z and
/// smooth across the periodic seam.
pub fn boundary_layer(g: &Grid, amplitude: f64, width: f64) -> Result<VectorField, SampleError> {
    if !(width > 0.0 && width <= 1.0) {
        return Err(SampleError::BadParameter("width must lie in (0,1]"));
    }
    Ok(vortex_from_profile(g, amplitude, move |z| {
        let a = (-(z / width).powi(2)).exp();
        let b = (-((1.0 - z.abs()) / width).powi(2)).exp();
        a + b
    }))
}

/// See [`FamilySpec::VerticalShear`].
pub fn vertical_shear(g: &Grid, amplitude: f64) -> VectorField {
    let mut u = VectorField::from_fns(
        *g,
        |_, _, z| amplitude * (std::f64::consts::PI * z).sin(),
        |_, _, _| 0.0,
        |_, _, _| 0.0,
    );
    u.enforce_walls();
    u
}

/// One term of the truncated trigonometric series behind the random
/// families: lateral Dirichlet sines, vertical cosine/sine pair.
struct SeriesTerm {
    amp: f64,
    p: f64,
    q: f64,
    r: f64,
    /// false → cos(rπz), true → sin(rπz)
    odd_z: bool,
}

/// Random smooth coefficients, decaying with total wavenumber so the
/// samples stay resolvable. Horizontal modes 1..=3, vertical 0..=3.
fn random_terms(rng: &mut ChaCha8Rng, vertical_odd_allowed: bool) -> Vec<SeriesTerm> {
    let mut terms = Vec::new();
    for p in 1..=3usize {
        for q in 1..=3usize {
            for r in 0..=3usize {
                let decay = 1.0 / (1.0 + (p * p + q * q + r * r) as f64);
                let amp: f64 = rng.gen_range(-1.0..1.0) * decay;
                terms.push(SeriesTerm {
                    amp,
                    p: p as f64,
                    q: q as f64,
                    r: r as f64,
                    odd_z: false,
                });
                if vertical_odd_allowed && r > 0 {
                    let amp: f64 = rng.gen_range(-1.0..1.0) * decay;
                    terms.push(SeriesTerm {
                        amp,
                        p: p as f64,
                        q: q as f64,
                        r: r as f64,
                        odd_z: true,
                    });
                }
            }
        }
    }
    terms
}

fn eval_terms(terms: &[SeriesTerm], lx: f64, ly: f64, x: f64, y: f64, z: f64) -> f64 {
    use std::f64::consts::PI;
    let mut s = 0.0;
    for t in terms {
        let h = (t.p * PI * x / lx).sin() * (t.q * PI * y / ly).sin();
        let v = if t.odd_z {
            (t.r * PI * z).sin()
        } else {
            (t.r * PI * z).cos()
        };
        s += t.amp * h * v;
    }
    s
}

/// Seeded random smooth scalar sample vanishing on the lateral walls.
/// On the full domain the vertical dependence is 2-periodic; on the half
/// domain only even vertical modes are used, keeping the natural
/// (Neumann) closure consistent.
pub fn random_scalar(g: &Grid, loc: Loc, seed: u64) -> ScalarField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let terms = random_terms(&mut rng, !g.half_domain);
    let (lx, ly) = (g.lx, g.ly);
    ScalarField::from_fn(*g, loc, move |x, y, z| eval_terms(&terms, lx, ly, x, y, z))
}

/// Seeded random smooth vector field with zero wall storage; no
/// divergence guarantee.
pub fn random_smooth_vector(g: &Grid, seed: u64) -> VectorField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t1 = random_terms(&mut rng, !g.half_domain);
    let t2 = random_terms(&mut rng, !g.half_domain);
    let t3 = random_terms(&mut rng, true);
    let (lx, ly) = (g.lx, g.ly);
    let mut u = VectorField::from_fns(
        *g,
        move |x, y, z| eval_terms(&t1, lx, ly, x, y, z),
        move |x, y, z| eval_terms(&t2, lx, ly, x, y, z),
        move |x, y, z| eval_terms(&t3, lx, ly, x, y, z),
    );
    u.enforce_walls();
    u
}

/// See [`FamilySpec::RandomSolenoidal`]: Leray projection of
/// [`random_smooth_vector`], scaled so `‖u‖_{L²} = amplitude`.
pub fn random_solenoidal(g: &Grid, amplitude: f64, seed: u64) -> Result<VectorField, SampleError> {
    let raw = random_smooth_vector(g, seed);
    let projected = operators::leray_project(&raw)?.field;
    let l2 = norms::l2_sq(&projected).sqrt();
    if l2 == 0.0 {
        return Err(SampleError::Degenerate);
    }
    let mut u = projected;
    u.scale(amplitude / l2);
    Ok(u)
}

/// Random solenoidal field on the full domain that is exactly
/// reflection-invariant: built on the restricted half grid, then extended
/// symmetrically.
pub fn random_s_invariant(g: &Grid, amplitude: f64, seed: u64) -> Result<VectorField, SampleError> {
    if g.half_domain {
        return Err(SampleError::BadParameter(
            "reflection-invariant samples need the full (periodic) grid",
        ));
    }
    let half = g.restricted();
    let u_half = random_solenoidal(&half, amplitude, seed)?;
    crate::symmetry::sigma_extend(&u_half)
        .map_err(|_| SampleError::BadParameter("extension of half-domain sample failed"))
}
