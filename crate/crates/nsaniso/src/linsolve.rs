//! Linear solvers: preconditioned conjugate gradients for the pressure
//! Poisson problem, and tensor-product direct solves (per-direction
//! symmetric eigendecompositions) for implicit viscous steps.

use crate::field::{Tag, VectorField};
use crate::grid::{Grid, Loc};
use crate::norms::Closure;
use nalgebra::DMatrix;

// ---------------------------------------------------------------------------
// Conjugate gradients
// ---------------------------------------------------------------------------

/// Options for [`cg`].
pub struct CgOptions {
    /// Absolute ℓ² residual target.
    pub tol_abs: f64,
    /// Iteration budget.
    pub max_iters: usize,
    /// Project the constant nullspace out of the residual each iteration
    /// (for singular-but-consistent systems like the Neumann Poisson).
    pub remove_mean: bool,
}

/// Outcome of a [`cg`] run.
pub struct CgStats {
    pub iters: usize,
    pub residual: f64,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn remove_mean(v: &mut [f64]) {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    for x in v.iter_mut() {
        *x -= mean;
    }
}

/// Diagonally preconditioned conjugate gradients for a symmetric
/// positive (semi-)definite operator given matrix-free.
pub fn cg(
    apply: impl Fn(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    diag: Option<&[f64]>,
    opts: &CgOptions,
) -> CgStats {
    let n = b.len();
    let mut r = vec![0.0; n];
    let mut ap = vec![0.0; n];
    apply(x, &mut ap);
    for i in 0..n {
        r[i] = b[i] - ap[i];
    }
    if opts.remove_mean {
        remove_mean(&mut r);
    }
    let precond = |r: &[f64], z: &mut [f64]| match diag {
        Some(d) => {
            for i in 0..r.len() {
                z[i] = r[i] / d[i];
            }
        }
        None => z.copy_from_slice(r),
    };
    let mut z = vec![0.0; n];
    precond(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut res = dot(&r, &r).sqrt();
    if res <= opts.tol_abs {
        return CgStats {
            iters: 0,
            residual: res,
            converged: true,
        };
    }
    for it in 1..=opts.max_iters {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            // Null or indefinite direction: bail out honestly.
            return CgStats {
                iters: it,
                residual: res,
                converged: false,
            };
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if opts.remove_mean {
            remove_mean(&mut r);
        }
        res = dot(&r, &r).sqrt();
        if res <= opts.tol_abs {
            return CgStats {
                iters: it,
                residual: res,
                converged: true,
            };
        }
        precond(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    CgStats {
        iters: opts.max_iters,
        residual: res,
        converged: false,
    }
}

// ---------------------------------------------------------------------------
// One-dimensional spectral factors
// ---------------------------------------------------------------------------

/// Eigendecomposition of the 1-D second-difference operator `A = −∂²`
/// (positive semidefinite) for a given boundary closure.
pub struct Direction1d {
    pub n: usize,
    /// Ascending eigenvalues.
    pub evals: Vec<f64>,
    /// Orthonormal eigenvectors, column-major `n × n`: entry (r, c) at
    /// `evecs[c * n + r]`.
    pub evecs: Vec<f64>,
}

/// Assembles and diagonalizes the 1-D operator with spacing `h`.
///
/// * `OnNode` — Dirichlet rows for the interior nodes of an on-node
///   direction (the pinned walls are excluded from the system).
/// * `GhostDirichlet` — reflected-ghost closure for cell-centered rows.
/// * `Neumann` — natural closure.
/// * `Periodic` — circulant wrap.
pub fn build_direction(n: usize, h: f64, closure: Closure) -> Direction1d {
    assert!(n >= 1);
    let s = 1.0 / (h * h);
    let mut m = DMatrix::<f64>::zeros(n, n);
    match closure {
        Closure::OnNode => {
            for r in 0..n {
                m[(r, r)] = 2.0 * s;
                if r > 0 {
                    m[(r, r - 1)] = -s;
                }
                if r + 1 < n {
                    m[(r, r + 1)] = -s;
                }
            }
        }
        Closure::GhostDirichlet => {
            for r in 0..n {
                m[(r, r)] = if r == 0 || r == n - 1 { 3.0 * s } else { 2.0 * s };
                if n == 1 {
                    // both ends reflected: (−f) − 2f + (−f) → 4f
                    m[(0, 0)] = 4.0 * s;
                }
                if r > 0 {
                    m[(r, r - 1)] = -s;
                }
                if r + 1 < n {
                    m[(r, r + 1)] = -s;
                }
            }
        }
        Closure::Neumann => {
            for r in 0..n {
                m[(r, r)] = if r == 0 || r == n - 1 { s } else { 2.0 * s };
                if n == 1 {
                    m[(0, 0)] = 0.0;
                }
                if r > 0 {
                    m[(r, r - 1)] = -s;
                }
                if r + 1 < n {
                    m[(r, r + 1)] = -s;
                }
            }
        }
        Closure::Periodic => {
            for r in 0..n {
                m[(r, r)] += 2.0 * s;
                m[(r, (r + 1) % n)] -= s;
                m[(r, (r + n - 1) % n)] -= s;
            }
        }
    }
    let se = m.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| se.eigenvalues[a].partial_cmp(&se.eigenvalues[b]).unwrap());
    let mut evals = Vec::with_capacity(n);
    let mut evecs = vec![0.0; n * n];
    for (c, &src) in order.iter().enumerate() {
        evals.push(se.eigenvalues[src]);
        for r in 0..n {
            evecs[c * n + r] = se.eigenvectors[(r, src)];
        }
    }
    Direction1d { n, evals, evecs }
}

// ---------------------------------------------------------------------------
// Tensor-product direct solver
// ---------------------------------------------------------------------------

/// Direct solver for `(shift·I + Σ_d coef_d A_d) x = b` on a 3-D box,
/// where `A_d` is a 1-D second-difference operator along axis `d`.
pub struct TensorSolver3 {
    pub dims: [usize; 3],
    dirs: [Direction1d; 3],
}

impl TensorSolver3 {
    pub fn new(dirs: [Direction1d; 3]) -> Self {
        let dims = [dirs[0].n, dirs[1].n, dirs[2].n];
        TensorSolver3 { dims, dirs }
    }

    /// Number of unknowns; never zero (each direction has >= 4 nodes).
    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    fn transform_axis(&self, data: &mut [f64], axis: usize, transpose: bool) {
        let [m0, m1, m2] = self.dims;
        let d = &self.dirs[axis];
        let n = d.n;
        let mut buf = vec![0.0; n];
        let mut out = vec![0.0; n];
        let entry = |r: usize, c: usize| d.evecs[c * n + r];
        let mut apply_line = |gather: &mut dyn FnMut(usize) -> usize, data: &mut [f64]| {
            for t in 0..n {
                buf[t] = data[gather(t)];
            }
            for c in 0..n {
                let mut acc = 0.0;
                if transpose {
                    for r in 0..n {
                        acc += entry(r, c) * buf[r];
                    }
                } else {
                    for r in 0..n {
                        acc += entry(c, r) * buf[r];
                    }
                }
                out[c] = acc;
            }
            for t in 0..n {
                data[gather(t)] = out[t];
            }
        };
        match axis {
            0 => {
                for j in 0..m1 {
                    for k in 0..m2 {
                        apply_line(&mut |t| (t * m1 + j) * m2 + k, data);
                    }
                }
            }
            1 => {
                for i in 0..m0 {
                    for k in 0..m2 {
                        apply_line(&mut |t| (i * m1 + t) * m2 + k, data);
                    }
                }
            }
            _ => {
                for i in 0..m0 {
                    for j in 0..m1 {
                        apply_line(&mut |t| (i * m1 + j) * m2 + t, data);
                    }
                }
            }
        }
    }

    /// In-place solve of `(shift·I + Σ coef_d A_d) x = b`; `data` holds
    /// `b` on entry and `x` on return. All spectral denominators must be
    /// positive.
    pub fn solve_shifted(&self, coef: [f64; 3], shift: f64, data: &mut [f64]) {
        assert_eq!(data.len(), self.len());
        for axis in 0..3 {
            self.transform_axis(data, axis, true);
        }
        let [m0, m1, m2] = self.dims;
        for i in 0..m0 {
            let li = coef[0] * self.dirs[0].evals[i];
            for j in 0..m1 {
                let lj = coef[1] * self.dirs[1].evals[j];
                for k in 0..m2 {
                    let denom = shift + li + lj + coef[2] * self.dirs[2].evals[k];
                    assert!(
                        denom > 0.0,
                        "tensor solve hit a nonpositive spectral denominator"
                    );
                    data[(i * m1 + j) * m2 + k] /= denom;
                }
            }
        }
        for axis in 0..3 {
            self.transform_axis(data, axis, false);
        }
    }

    /// Smallest spectral value of `shift + Σ coef_d λ_d`.
    pub fn min_symbol(&self, coef: [f64; 3], shift: f64) -> f64 {
        shift
            + coef[0] * self.dirs[0].evals[0]
            + coef[1] * self.dirs[1].evals[0]
            + coef[2] * self.dirs[2].evals[0]
    }
}

// ---------------------------------------------------------------------------
// Per-component velocity solver
// ---------------------------------------------------------------------------

/// Interior index box of a component: on-node directions drop their two
/// wall layers, everything else keeps the full stored range.
fn interior_box(g: &Grid, loc: Loc) -> ([usize; 3], [usize; 3]) {
    let (di, dj, dk) = g.dims(loc);
    let (mut lo, mut hi) = ([0usize; 3], [di, dj, dk]);
    match loc {
        Loc::XFace => {
            lo[0] = 1;
            hi[0] = di - 1;
        }
        Loc::YFace => {
            lo[1] = 1;
            hi[1] = dj - 1;
        }
        Loc::ZFace if g.half_domain => {
            lo[2] = 1;
            hi[2] = dk - 1;
        }
        _ => {}
    }
    (lo, hi)
}

fn component_solver(g: &Grid, loc: Loc) -> TensorSolver3 {
    let (lo, hi) = interior_box(g, loc);
    let dirs = [
        build_direction(hi[0] - lo[0], g.dx, closure_for(g, loc, 0)),
        build_direction(hi[1] - lo[1], g.dy, closure_for(g, loc, 1)),
        build_direction(hi[2] - lo[2], g.dz, closure_for(g, loc, 2)),
    ];
    TensorSolver3::new(dirs)
}

/// Boundary closure of a location along a direction, mirroring the
/// energy quadratic forms in [`crate::norms`].
fn closure_for(g: &Grid, loc: Loc, dir: usize) -> Closure {
    match (loc, dir) {
        (Loc::XFace, 0) | (Loc::YFace, 1) => Closure::OnNode,
        (Loc::ZFace, 2) => {
            if g.half_domain {
                Closure::OnNode
            } else {
                Closure::Periodic
            }
        }
        (_, 2) => {
            if g.half_domain {
                Closure::Neumann
            } else {
                Closure::Periodic
            }
        }
        _ => Closure::GhostDirichlet,
    }
}

/// Componentwise direct solver for `(shift·I + c_h A_h + c_z A_z) u = w`
/// with each component's boundary closures; wall entries of the result
/// are exactly zero.
pub struct VelocitySolver {
    grid: Grid,
    comp: [TensorSolver3; 3],
}

impl VelocitySolver {
    pub fn new(grid: Grid) -> Self {
        VelocitySolver {
            grid,
            comp: [
                component_solver(&grid, Loc::XFace),
                component_solver(&grid, Loc::YFace),
                component_solver(&grid, Loc::ZFace),
            ],
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Solves `(shift·I + coef·A) u = w` componentwise.
    pub fn solve_shifted(&self, w: &VectorField, coef: [f64; 3], shift: f64) -> VectorField {
        let g = self.grid;
        assert!(*w.grid() == g, "grid mismatch in velocity solve");
        let mut out = VectorField::zeros(g);
        out.tag = Tag::General;
        let locs = [Loc::XFace, Loc::YFace, Loc::ZFace];
        for (c, loc) in locs.iter().enumerate() {
            let (lo, hi) = interior_box(&g, *loc);
            let solver = &self.comp[c];
            let mut buf = vec![0.0; solver.len()];
            let (src, dst) = match c {
                0 => (&w.u1, &mut out.u1),
                1 => (&w.u2, &mut out.u2),
                _ => (&w.u3, &mut out.u3),
            };
            let (m1, m2) = (hi[1] - lo[1], hi[2] - lo[2]);
            for i in lo[0]..hi[0] {
                for j in lo[1]..hi[1] {
                    for k in lo[2]..hi[2] {
                        buf[((i - lo[0]) * m1 + (j - lo[1])) * m2 + (k - lo[2])] = src.at(i, j, k);
                    }
                }
            }
            solver.solve_shifted(coef, shift, &mut buf);
            for i in lo[0]..hi[0] {
                for j in lo[1]..hi[1] {
                    for k in lo[2]..hi[2] {
                        dst.set(i, j, k, buf[((i - lo[0]) * m1 + (j - lo[1])) * m2 + (k - lo[2])]);
                    }
                }
            }
        }
        out
    }

    /// Smallest symbol of the solved operator over the three components.
    pub fn min_symbol(&self, coef: [f64; 3], shift: f64) -> f64 {
        self.comp
            .iter()
            .map(|s| s.min_symbol(coef, shift))
            .fold(f64::INFINITY, f64::min)
    }
}
