//! Staggered-grid geometry for the cylinder.
//!
//! The horizontal cross-section is the rectangle `(0, lx) x (0, ly)` with
//! no-slip walls. The vertical direction is either the *half domain*
//! `(0, 1)` bounded by the walls Γ₀ (bottom) and Γ₁ (top), or the *full
//! domain* `(-1, 1)` obtained by symmetric extension, on which all fields
//! are vertically periodic with period 2.
//!
//! Velocity components live on the faces they are normal to (MAC layout);
//! scalars (pressure, divergence) live at cell centers. This staggering is
//! what makes the discrete divergence, gradient and Leray projection exact
//! companions of each other.

use std::fmt;

/// Immutable description of one staggered grid. Constructed through
/// [`build_grid`]; never mutated afterwards.
#[derive(Clone, Copy, PartialEq, Debug)]
pub struct Grid {
    /// Number of cells along x.
    pub nx: usize,
    /// Number of cells along y.
    pub ny: usize,
    /// Number of cells along the vertical.
    pub nz: usize,
    /// Horizontal extent along x.
    pub lx: f64,
    /// Horizontal extent along y.
    pub ly: f64,
    /// `true` for the half domain `(0, 1)`, `false` for the periodic full
    /// domain `(-1, 1)`.
    pub half_domain: bool,
    /// Cell size along x (`lx / nx`).
    pub dx: f64,
    /// Cell size along y (`ly / ny`).
    pub dy: f64,
    /// Cell size along the vertical (`1/nz` on the half domain, `2/nz` on
    /// the full domain).
    pub dz: f64,
}

/// Storage location on the staggered mesh.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Hash)]
pub enum Loc {
    /// Cell centers: scalars, pressure, divergence.
    Cell,
    /// Faces normal to x: first velocity component. The lateral wall faces
    /// `i = 0` and `i = nx` are stored (and pinned to zero for velocities).
    XFace,
    /// Faces normal to y: second velocity component; walls at `j = 0`, `ny`.
    YFace,
    /// Faces normal to the vertical: third velocity component. On the full
    /// domain the layout is periodic with `nz` stored layers (layer `nz`
    /// aliases layer `0`); on the half domain the wall faces `k = 0` and
    /// `k = nz` are stored.
    ZFace,
}

/// Construction-time validation failures.
#[derive(Debug, Clone, PartialEq)]
pub enum GridError {
    /// The periodic full domain needs an even cell count so that the
    /// midplane `x₃ = 0` is a face and reflection maps cells to cells.
    OddVerticalResolution(usize),
    /// Extents must be positive and finite.
    NonPositiveExtent { name: &'static str, value: f64 },
    /// Fewer than 4 cells in a direction cannot carry the stencils.
    TooCoarse { name: &'static str, value: usize },
}

impl fmt::Display for GridError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GridError::OddVerticalResolution(nz) => {
                write!(f, "odd vertical resolution nz = {nz} on the periodic full domain")
            }
            GridError::NonPositiveExtent { name, value } => {
                write!(f, "non-positive extent {name} = {value}")
            }
            GridError::TooCoarse { name, value } => {
                write!(f, "resolution {name} = {value} is below the minimum of 4 cells")
            }
        }
    }
}

impl std::error::Error for GridError {}

/// Builds and validates a grid. `nx, ny, nz >= 4`; `lx, ly > 0`; on the
/// full domain `nz` must be even.
pub fn build_grid(
    nx: usize,
    ny: usize,
    nz: usize,
    lx: f64,
    ly: f64,
    half_domain: bool,
) -> Result<Grid, GridError> {
    for (name, value) in [("nx", nx), ("ny", ny), ("nz", nz)] {
        if value < 4 {
            return Err(GridError::TooCoarse { name, value });
        }
    }
    for (name, value) in [("lx", lx), ("ly", ly)] {
        if !(value > 0.0) || !value.is_finite() {
            return Err(GridError::NonPositiveExtent { name, value });
        }
    }
    if !half_domain && nz % 2 != 0 {
        return Err(GridError::OddVerticalResolution(nz));
    }
    let z_extent = if half_domain { 1.0 } else { 2.0 };
    Ok(Grid {
        nx,
        ny,
        nz,
        lx,
        ly,
        half_domain,
        dx: lx / nx as f64,
        dy: ly / ny as f64,
        dz: z_extent / nz as f64,
    })
}

impl Grid {
    /// Vertical length of the domain: 1 (half) or 2 (full).
    pub fn z_extent(&self) -> f64 {
        if self.half_domain {
            1.0
        } else {
            2.0
        }
    }

    /// Lower end of the vertical interval: 0 (half) or −1 (full).
    pub fn z_min(&self) -> f64 {
        if self.half_domain {
            0.0
        } else {
            -1.0
        }
    }

    /// Storage dimensions `(di, dj, dk)` for a location.
    pub fn dims(&self, loc: Loc) -> (usize, usize, usize) {
        match loc {
            Loc::Cell => (self.nx, self.ny, self.nz),
            Loc::XFace => (self.nx + 1, self.ny, self.nz),
            Loc::YFace => (self.nx, self.ny + 1, self.nz),
            Loc::ZFace => {
                if self.half_domain {
                    (self.nx, self.ny, self.nz + 1)
                } else {
                    (self.nx, self.ny, self.nz)
                }
            }
        }
    }

    /// Total number of stored values for a location.
    pub fn len(&self, loc: Loc) -> usize {
        let (di, dj, dk) = self.dims(loc);
        di * dj * dk
    }

    /// Flat index of entry `(i, j, k)`; the vertical index is fastest.
    #[inline]
    pub fn idx(&self, loc: Loc, i: usize, j: usize, k: usize) -> usize {
        let (di, dj, dk) = self.dims(loc);
        debug_assert!(i < di && j < dj && k < dk);
        (i * dj + j) * dk + k
    }

    /// x-coordinate of face `i` (`0..=nx`).
    #[inline]
    pub fn x_face(&self, i: usize) -> f64 {
        i as f64 * self.dx
    }

    /// x-coordinate of cell center `i` (`0..nx`).
    #[inline]
    pub fn x_center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.dx
    }

    /// y-coordinate of face `j`.
    #[inline]
    pub fn y_face(&self, j: usize) -> f64 {
        j as f64 * self.dy
    }

    /// y-coordinate of cell center `j`.
    #[inline]
    pub fn y_center(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.dy
    }

    /// Vertical coordinate of face `k`.
    #[inline]
    pub fn z_face(&self, k: usize) -> f64 {
        self.z_min() + k as f64 * self.dz
    }

    /// Vertical coordinate of cell center `k`.
    #[inline]
    pub fn z_center(&self, k: usize) -> f64 {
        self.z_min() + (k as f64 + 0.5) * self.dz
    }

    /// Physical sample point of entry `(i, j, k)` at a location.
    pub fn pos(&self, loc: Loc, i: usize, j: usize, k: usize) -> (f64, f64, f64) {
        match loc {
            Loc::Cell => (self.x_center(i), self.y_center(j), self.z_center(k)),
            Loc::XFace => (self.x_face(i), self.y_center(j), self.z_center(k)),
            Loc::YFace => (self.x_center(i), self.y_face(j), self.z_center(k)),
            Loc::ZFace => (self.x_center(i), self.y_center(j), self.z_face(k)),
        }
    }

    /// Volume of one cell.
    pub fn cell_volume(&self) -> f64 {
        self.dx * self.dy * self.dz
    }

    /// Smallest cell size over the three directions.
    pub fn min_spacing(&self) -> f64 {
        self.dx.min(self.dy).min(self.dz)
    }

    /// Periodic wrap of a signed vertical layer index (full domain).
    #[inline]
    pub fn wrap_z(&self, k: isize) -> usize {
        debug_assert!(!self.half_domain);
        let n = self.nz as isize;
        (((k % n) + n) % n) as usize
    }

    /// Cell index of the reflection `x₃ ↦ −x₃` (full domain only).
    #[inline]
    pub fn mirror_cell(&self, k: usize) -> usize {
        debug_assert!(!self.half_domain);
        self.nz - 1 - k
    }

    /// z-face index of the reflection `x₃ ↦ −x₃` (full domain only);
    /// face 0 (the seam `x₃ = ±1`) maps to itself.
    #[inline]
    pub fn mirror_zface(&self, k: usize) -> usize {
        debug_assert!(!self.half_domain);
        if k == 0 {
            0
        } else {
            self.nz - k
        }
    }

    /// The full-domain grid obtained by symmetric extension of a
    /// half-domain grid (same spacing, doubled vertical cell count).
    pub fn extended(&self) -> Grid {
        assert!(self.half_domain, "already a full-domain grid");
        build_grid(self.nx, self.ny, 2 * self.nz, self.lx, self.ly, false)
            .expect("doubling a valid half grid is valid")
    }

    /// The half-domain grid a full-domain grid restricts to.
    pub fn restricted(&self) -> Grid {
        assert!(!self.half_domain, "already a half-domain grid");
        build_grid(self.nx, self.ny, self.nz / 2, self.lx, self.ly, true)
            .expect("halving a valid full grid is valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_domain_8_cubed_layout() {
        let g = build_grid(8, 8, 8, 1.0, 1.0, false).unwrap();
        assert_eq!(g.dz, 0.25);
        let faces: Vec<f64> = (0..8).map(|k| g.z_face(k)).collect();
        let expected = [-1.0, -0.75, -0.5, -0.25, 0.0, 0.25, 0.5, 0.75];
        assert_eq!(faces.as_slice(), &expected);
        assert_eq!(g.dims(Loc::ZFace), (8, 8, 8));
        assert_eq!(g.dims(Loc::XFace), (9, 8, 8));
    }

    #[test]
    fn half_domain_16_cubed_layout() {
        let g = build_grid(16, 16, 16, 1.0, 1.0, true).unwrap();
        assert_eq!(g.dz, 1.0 / 16.0);
        assert_eq!(g.dims(Loc::ZFace), (16, 16, 17));
        assert_eq!(g.z_face(0), 0.0);
        assert_eq!(g.z_face(16), 1.0);
    }

    #[test]
    fn rejects_odd_full_domain_resolution() {
        let err = build_grid(8, 8, 9, 1.0, 1.0, false).unwrap_err();
        assert_eq!(err, GridError::OddVerticalResolution(9));
        assert!(err.to_string().contains("odd vertical resolution"));
    }

    #[test]
    fn rejects_bad_extents_and_coarse_grids() {
        assert!(matches!(
            build_grid(8, 8, 8, 0.0, 1.0, false),
            Err(GridError::NonPositiveExtent { name: "lx", .. })
        ));
        assert!(matches!(
            build_grid(8, 8, 8, 1.0, -2.0, true),
            Err(GridError::NonPositiveExtent { name: "ly", .. })
        ));
        assert!(matches!(
            build_grid(3, 8, 8, 1.0, 1.0, true),
            Err(GridError::TooCoarse { name: "nx", .. })
        ));
        assert!(build_grid(8, 8, 8, 1.0, f64::NAN, true).is_err());
    }

    #[test]
    fn mirror_maps_are_involutions_matching_coordinates() {
        let g = build_grid(4, 4, 12, 1.0, 1.0, false).unwrap();
        for k in 0..12 {
            let m = g.mirror_cell(k);
            assert_eq!(g.mirror_cell(m), k);
            assert!((g.z_center(m) + g.z_center(k)).abs() < 1e-14);
            let mf = g.mirror_zface(k);
            assert_eq!(g.mirror_zface(mf), k);
            if k > 0 {
                assert!((g.z_face(mf) + g.z_face(k)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn cell_volumes_sum_to_domain_volume() {
        for (half, z_extent) in [(false, 2.0), (true, 1.0)] {
            let g = build_grid(12, 10, 8, 1.5, 0.75, half).unwrap();
            let mut sum = 0.0;
            for _ in 0..g.len(Loc::Cell) {
                sum += g.cell_volume();
            }
            let exact = g.lx * g.ly * z_extent;
            assert!((sum - exact).abs() <= 1e-12 * exact);
        }
    }

    #[test]
    fn index_layout_is_vertical_fastest() {
        let g = build_grid(4, 5, 6, 1.0, 1.0, false).unwrap();
        assert_eq!(g.idx(Loc::Cell, 0, 0, 0), 0);
        assert_eq!(g.idx(Loc::Cell, 0, 0, 1), 1);
        assert_eq!(g.idx(Loc::Cell, 0, 1, 0), 6);
        assert_eq!(g.idx(Loc::Cell, 1, 0, 0), 30);
        assert_eq!(g.len(Loc::Cell), 120);
        assert_eq!(g.len(Loc::XFace), 150);
    }

    #[test]
    fn extension_and_restriction_round_trip() {
        let half = build_grid(6, 7, 8, 2.0, 1.0, true).unwrap();
        let full = half.extended();
        assert_eq!(full.nz, 16);
        assert_eq!(full.dz, half.dz);
        assert!(!full.half_domain);
        assert_eq!(full.restricted(), half);
    }

    #[test]
    fn periodic_wrap_aliases_layer_nz_to_zero() {
        let g = build_grid(4, 4, 8, 1.0, 1.0, false).unwrap();
        assert_eq!(g.wrap_z(8), 0);
        assert_eq!(g.wrap_z(-1), 7);
        assert_eq!(g.wrap_z(3), 3);
    }
}
