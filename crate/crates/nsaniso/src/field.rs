//! Field storage on the staggered grid.
//!
//! A [`ScalarField`] is a flat `Vec<f64>` tied to a grid and a storage
//! [`Loc`]; a [`VectorField`] bundles the three velocity components on
//! their staggered faces. Quadrature weights implement the midpoint rule,
//! degraded to the trapezoid rule along a component's normal direction at
//! stored wall entries (whose velocity values are pinned to zero), so that
//! constant fields integrate exactly and summation-by-parts identities
//! close without boundary leftovers.

use crate::grid::{Grid, Loc};
use std::fmt;

/// Errors from field construction and validation.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldError {
    /// Two fields were combined across different grids or locations.
    GridMismatch,
    /// A value became non-finite.
    NonFinite { index: usize },
    /// The solenoidal tag is claimed but the divergence is too large.
    NotSolenoidal { max_div: f64, bound: f64 },
    /// A no-slip wall entry holds a non-zero value.
    WallViolation { component: &'static str, value: f64 },
    /// Data length does not match the location's storage size.
    LengthMismatch { expected: usize, got: usize },
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldError::GridMismatch => write!(f, "fields live on different grids or locations"),
            FieldError::NonFinite { index } => write!(f, "non-finite value at flat index {index}"),
            FieldError::NotSolenoidal { max_div, bound } => write!(
                f,
                "solenoidal tag violated: max |div| = {max_div:.3e} exceeds bound {bound:.3e}"
            ),
            FieldError::WallViolation { component, value } => {
                write!(f, "no-slip wall entry of {component} holds {value:.3e}")
            }
            FieldError::LengthMismatch { expected, got } => {
                write!(f, "data length {got} does not match storage size {expected}")
            }
        }
    }
}

impl std::error::Error for FieldError {}

/// Provenance tag carried by vector fields and snapshots.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Tag {
    /// No divergence guarantee.
    General,
    /// Discretely divergence-free (validated on demand).
    Solenoidal,
}

impl Tag {
    pub fn as_str(self) -> &'static str {
        match self {
            Tag::General => "general",
            Tag::Solenoidal => "solenoidal",
        }
    }

    pub fn parse(s: &str) -> Option<Tag> {
        match s {
            "general" => Some(Tag::General),
            "solenoidal" => Some(Tag::Solenoidal),
            _ => None,
        }
    }
}

/// One scalar quantity sampled on a staggered location.
#[derive(Clone, Debug)]
pub struct ScalarField {
    grid: Grid,
    loc: Loc,
    data: Vec<f64>,
}

impl ScalarField {
    /// All-zero field.
    pub fn zeros(grid: Grid, loc: Loc) -> ScalarField {
        ScalarField {
            grid,
            loc,
            data: vec![0.0; grid.len(loc)],
        }
    }

    /// Samples `f(x, y, z)` at every storage point of the location.
    pub fn from_fn(grid: Grid, loc: Loc, f: impl Fn(f64, f64, f64) -> f64) -> ScalarField {
        let (di, dj, dk) = grid.dims(loc);
        let mut data = Vec::with_capacity(di * dj * dk);
        for i in 0..di {
            for j in 0..dj {
                for k in 0..dk {
                    let (x, y, z) = grid.pos(loc, i, j, k);
                    data.push(f(x, y, z));
                }
            }
        }
        ScalarField { grid, loc, data }
    }

    /// Wraps raw data (vertical index fastest) after a length check.
    pub fn from_vec(grid: Grid, loc: Loc, data: Vec<f64>) -> Result<ScalarField, FieldError> {
        let expected = grid.len(loc);
        if data.len() != expected {
            return Err(FieldError::LengthMismatch {
                expected,
                got: data.len(),
            });
        }
        Ok(ScalarField { grid, loc, data })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn loc(&self) -> Loc {
        self.loc
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.grid.idx(self.loc, i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        let idx = self.grid.idx(self.loc, i, j, k);
        self.data[idx] = v;
    }

    /// Quadrature weight (volume) of entry `(i, j, k)`: midpoint rule with
    /// trapezoid halving at stored wall entries along the normal direction.
    #[inline]
    pub fn weight(&self, i: usize, j: usize, k: usize) -> f64 {
        let g = &self.grid;
        let mut w = g.dx * g.dy * g.dz;
        match self.loc {
            Loc::Cell => {}
            Loc::XFace => {
                if i == 0 || i == g.nx {
                    w *= 0.5;
                }
            }
            Loc::YFace => {
                if j == 0 || j == g.ny {
                    w *= 0.5;
                }
            }
            Loc::ZFace => {
                if g.half_domain && (k == 0 || k == g.nz) {
                    w *= 0.5;
                }
            }
        }
        w
    }

    /// Checks that the field can be combined with `other`.
    pub fn compatible(&self, other: &ScalarField) -> Result<(), FieldError> {
        if self.grid == other.grid && self.loc == other.loc {
            Ok(())
        } else {
            Err(FieldError::GridMismatch)
        }
    }

    /// `self += a * other` on matching layouts.
    pub fn axpy(&mut self, a: f64, other: &ScalarField) {
        assert!(self.compatible(other).is_ok(), "axpy across layouts");
        for (x, y) in self.data.iter_mut().zip(other.data.iter()) {
            *x += a * y;
        }
    }

    /// `self *= a`.
    pub fn scale(&mut self, a: f64) {
        for x in self.data.iter_mut() {
            *x *= a;
        }
    }

    /// Index of the first non-finite value, if any.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.data.iter().position(|v| !v.is_finite())
    }
}

/// Velocity field on the staggered faces.
#[derive(Clone, Debug)]
pub struct VectorField {
    pub u1: ScalarField,
    pub u2: ScalarField,
    pub u3: ScalarField,
    pub tag: Tag,
}

impl VectorField {
    pub fn zeros(grid: Grid) -> VectorField {
        VectorField {
            u1: ScalarField::zeros(grid, Loc::XFace),
            u2: ScalarField::zeros(grid, Loc::YFace),
            u3: ScalarField::zeros(grid, Loc::ZFace),
            tag: Tag::Solenoidal,
        }
    }

    /// Samples three component functions as stored. Wall entries keep the
    /// sampled values (useful for pure quadrature checks); call
    /// [`VectorField::enforce_walls`] to impose the no-slip storage
    /// convention. The tag starts as `General`.
    pub fn from_fns(
        grid: Grid,
        f1: impl Fn(f64, f64, f64) -> f64,
        f2: impl Fn(f64, f64, f64) -> f64,
        f3: impl Fn(f64, f64, f64) -> f64,
    ) -> VectorField {
        VectorField {
            u1: ScalarField::from_fn(grid, Loc::XFace, f1),
            u2: ScalarField::from_fn(grid, Loc::YFace, f2),
            u3: ScalarField::from_fn(grid, Loc::ZFace, f3),
            tag: Tag::General,
        }
    }

    pub fn grid(&self) -> &Grid {
        self.u1.grid()
    }

    pub fn compatible(&self, other: &VectorField) -> Result<(), FieldError> {
        if self.grid() == other.grid() {
            Ok(())
        } else {
            Err(FieldError::GridMismatch)
        }
    }

    /// Sets the stored wall entries to zero: `u1` on the x-walls, `u2` on
    /// the y-walls, and `u3` on Γ₀/Γ₁ for half-domain fields.
    pub fn enforce_walls(&mut self) {
        let g = *self.grid();
        for j in 0..g.ny {
            for k in 0..g.nz {
                self.u1.set(0, j, k, 0.0);
                self.u1.set(g.nx, j, k, 0.0);
            }
        }
        for i in 0..g.nx {
            for k in 0..g.nz {
                self.u2.set(i, 0, k, 0.0);
                self.u2.set(i, g.ny, k, 0.0);
            }
        }
        if g.half_domain {
            for i in 0..g.nx {
                for j in 0..g.ny {
                    self.u3.set(i, j, 0, 0.0);
                    self.u3.set(i, j, g.nz, 0.0);
                }
            }
        }
    }

    /// Largest absolute value stored on a no-slip wall entry.
    pub fn max_wall_value(&self) -> f64 {
        let g = *self.grid();
        let mut m: f64 = 0.0;
        for j in 0..g.ny {
            for k in 0..g.nz {
                m = m.max(self.u1.at(0, j, k).abs());
                m = m.max(self.u1.at(g.nx, j, k).abs());
            }
        }
        for i in 0..g.nx {
            for k in 0..g.nz {
                m = m.max(self.u2.at(i, 0, k).abs());
                m = m.max(self.u2.at(i, g.ny, k).abs());
            }
        }
        if g.half_domain {
            for i in 0..g.nx {
                for j in 0..g.ny {
                    m = m.max(self.u3.at(i, j, 0).abs());
                    m = m.max(self.u3.at(i, j, g.nz).abs());
                }
            }
        }
        m
    }

    /// `self += a * other` componentwise.
    pub fn axpy(&mut self, a: f64, other: &VectorField) {
        self.u1.axpy(a, &other.u1);
        self.u2.axpy(a, &other.u2);
        self.u3.axpy(a, &other.u3);
    }

    pub fn scale(&mut self, a: f64) {
        self.u1.scale(a);
        self.u2.scale(a);
        self.u3.scale(a);
    }

    /// Components in storage order with their names.
    pub fn components(&self) -> [(&'static str, &ScalarField); 3] {
        [("u1", &self.u1), ("u2", &self.u2), ("u3", &self.u3)]
    }

    pub fn first_non_finite(&self) -> Option<(&'static str, usize)> {
        for (name, c) in self.components() {
            if let Some(idx) = c.first_non_finite() {
                return Some((name, idx));
            }
        }
        None
    }
}
