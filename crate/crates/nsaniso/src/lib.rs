//! Numerical laboratory for incompressible flow with anisotropic viscosity
//! (horizontal viscosity `nu_h`, vertical viscosity `eps >= 0`) in a bounded
//! cylinder: the rectangle `(0, lx) x (0, ly)` with lateral no-slip walls,
//! crossed with a vertical interval that is either the half domain `(0, 1)`
//! with top/bottom walls or the symmetrized, vertically periodic full domain
//! `(-1, 1)`.
//!
//! The crate provides, bottom up:
//! - staggered-grid geometry and field storage ([`grid`], [`field`]),
//! - volume-weighted norms, inner products and mixed vertical/horizontal
//!   norms ([`norms`]),
//! - the symmetric vertical extension, the vertical reflection map and the
//!   horizontal scaling / mollification machinery behind the density
//!   construction ([`symmetry`]),
//! - discrete differential operators, an exactly skew-symmetric advection
//!   form, the Leray projector and a Stokes eigenbasis ([`operators`],
//!   [`stokes`], [`linsolve`]),
//! - an IMEX time integrator for the nonlinear, linear and perturbation
//!   systems with a per-step energy ledger ([`solver`]),
//! - empirical-constant estimation and every threshold/inequality check the
//!   experiments report on ([`diagnostics`]),
//! - reproducible experiment drivers and their file outputs ([`samples`],
//!   [`config`], [`experiments`], [`io`]).

// `!(x > 0.0)` guards deliberately treat NaN as invalid input (the
// suggested `x <= 0.0` would accept it), and indexed loops are kept
// where they mirror the matrix/stencil notation they implement.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]
#![allow(clippy::manual_is_multiple_of)]

pub mod config;
pub mod diagnostics;
pub mod experiments;
pub mod field;
pub mod grid;
pub mod io;
pub mod symmetry;
pub mod linsolve;
pub mod norms;
pub mod operators;
pub mod samples;
pub mod solver;
pub mod stokes;
pub mod tol;
