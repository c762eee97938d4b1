//! Finite-difference matrices: periodic circulant stencils and the
//! rectangular operators of the bounded (inflow) grid.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Periodic circulant operator stored as `(offset, coefficient)` taps:
/// `out[i] = scale * sum_t c_t * x[(i + offset_t) mod n]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Circulant {
    pub n: usize,
    pub taps: Vec<(isize, f64)>,
    pub scale: f64,
}

/// `circ(coeffs)` with `coeffs[diag]` on the main diagonal, later entries on
/// superdiagonals and earlier ones on subdiagonals, wrapping periodically.
pub fn circ(coeffs: &[f64], diag: usize, n: usize) -> Result<Circulant> {
    if diag >= coeffs.len() {
        return Err(Error::Stencil(format!("diagonal index {diag} outside stencil of width {}", coeffs.len())));
    }
    if n < coeffs.len() {
        return Err(Error::Stencil(format!("n = {n} smaller than stencil width {}", coeffs.len())));
    }
    let taps =
        coeffs.iter().enumerate().filter(|(_, c)| **c != 0.0).map(|(i, &c)| (i as isize - diag as isize, c)).collect();
    Ok(Circulant { n, taps, scale: 1.0 })
}

impl Circulant {
    pub fn scaled(mut self, s: f64) -> Self {
        self.scale *= s;
        self
    }

    #[inline]
    fn wrap(&self, i: usize, off: isize) -> usize {
        (i as isize + off).rem_euclid(self.n as isize) as usize
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.n);
        (0..self.n).map(|i| self.scale * self.taps.iter().map(|&(o, c)| c * x[self.wrap(i, o)]).sum::<f64>()).collect()
    }

    pub fn apply_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(self.apply(x.as_slice()))
    }

    /// Applies the stencil along the spatial (row) index of an
    /// `n x N_v` array, independently for every velocity column.
    pub fn apply_rows(&self, g: &DMatrix<f64>) -> DMatrix<f64> {
        debug_assert_eq!(g.nrows(), self.n);
        let mut out = DMatrix::zeros(g.nrows(), g.ncols());
        for k in 0..g.ncols() {
            let col = g.column(k);
            for i in 0..self.n {
                let mut s = 0.0;
                for &(o, c) in &self.taps {
                    s += c * col[self.wrap(i, o)];
                }
                out[(i, k)] = self.scale * s;
            }
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for &(o, c) in &self.taps {
                m[(i, self.wrap(i, o))] += self.scale * c;
            }
        }
        m
    }

    pub fn coefficient_sum(&self) -> f64 {
        self.taps.iter().map(|t| t.1).sum::<f64>() * self.scale
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GridKind {
    Staggered,
    Colocated,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CentralTarget {
    /// Two-point difference producing values on the g grid (staggered).
    GGrid,
    /// Two-point difference producing values on the rho grid (staggered).
    RhoGrid,
    Colocated,
}

/// `(G-, G+)` upwind pair for positive and negative velocities.
pub fn upwind_pair(order: usize, n: usize, dx: f64) -> Result<(Circulant, Circulant)> {
    match order {
        1 => Ok((circ(&[-1.0, 1.0], 1, n)?.scaled(1.0 / dx), circ(&[-1.0, 1.0], 0, n)?.scaled(1.0 / dx))),
        3 => Ok((
            circ(&[1.0, -6.0, 3.0, 2.0], 2, n)?.scaled(1.0 / (6.0 * dx)),
            circ(&[-2.0, -3.0, 6.0, -1.0], 1, n)?.scaled(1.0 / (6.0 * dx)),
        )),
        _ => Err(Error::Stencil(format!("unsupported upwind order {order}"))),
    }
}

pub fn central(order: usize, target: CentralTarget, n: usize, dx: f64) -> Result<Circulant> {
    match (target, order) {
        (CentralTarget::GGrid, 2) => Ok(circ(&[-1.0, 1.0], 0, n)?.scaled(1.0 / dx)),
        (CentralTarget::RhoGrid, 2) => Ok(circ(&[-1.0, 1.0], 1, n)?.scaled(1.0 / dx)),
        (CentralTarget::Colocated, 2) => Ok(circ(&[-1.0, 0.0, 1.0], 1, n)?.scaled(1.0 / (2.0 * dx))),
        (CentralTarget::Colocated, 4) => Ok(circ(&[1.0, -8.0, 0.0, 8.0, -1.0], 2, n)?.scaled(1.0 / (12.0 * dx))),
        _ => Err(Error::Stencil(format!("central order {order} not available for {target:?}"))),
    }
}

/// Every operator needed by the periodic solver on one spatial grid.
#[derive(Clone, Debug)]
pub struct PeriodicOperators {
    pub kind: GridKind,
    pub nx: usize,
    pub dx: f64,
    pub length: f64,
    pub upwind_minus: Circulant,
    pub upwind_plus: Circulant,
    /// Gradient of rho evaluated where g lives.
    pub cen_g: Circulant,
    /// Divergence of g moments evaluated where rho lives.
    pub cen_rho: Circulant,
    /// Interpolation of rho onto the g grid.
    pub avg: Circulant,
}

impl PeriodicOperators {
    pub fn new(nx: usize, length: f64, kind: GridKind, upwind_order: usize, central_order: usize) -> Result<Self> {
        if !(length > 0.0) {
            return Err(Error::Stencil(format!("domain length must be positive, got {length}")));
        }
        let dx = length / nx as f64;
        let (upwind_minus, upwind_plus) = upwind_pair(upwind_order, nx, dx)?;
        let (cen_g, cen_rho, avg) = match kind {
            GridKind::Staggered => {
                if central_order != 2 {
                    return Err(Error::Stencil("staggered grid only has second-order central differences".into()));
                }
                (
                    central(2, CentralTarget::GGrid, nx, dx)?,
                    central(2, CentralTarget::RhoGrid, nx, dx)?,
                    circ(&[1.0, 1.0], 0, nx)?.scaled(0.5),
                )
            }
            GridKind::Colocated => {
                let c = central(central_order, CentralTarget::Colocated, nx, dx)?;
                (c.clone(), c, circ(&[1.0], 0, nx)?)
            }
        };
        Ok(Self { kind, nx, dx, length, upwind_minus, upwind_plus, cen_g, cen_rho, avg })
    }

    /// Node positions of rho.
    pub fn rho_x(&self) -> Vec<f64> {
        (0..self.nx).map(|i| i as f64 * self.dx).collect()
    }

    /// Positions of g (half-shifted on the staggered grid).
    pub fn g_x(&self) -> Vec<f64> {
        let shift = match self.kind {
            GridKind::Staggered => 0.5,
            GridKind::Colocated => 0.0,
        };
        (0..self.nx).map(|i| (i as f64 + shift) * self.dx).collect()
    }

    /// Dense `G_cen_rho * G_cen_g`.
    pub fn laplacian(&self) -> DMatrix<f64> {
        self.cen_rho.to_dense() * self.cen_g.to_dense()
    }
}

/// Banded rectangular matrix without wrap-around: row `i` holds
/// `coeffs[t]` at column `i + t - diag` when that column exists.
pub fn band(coeffs: &[f64], diag: usize, rows: usize, cols: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for (t, &c) in coeffs.iter().enumerate() {
            let j = i as isize + t as isize - diag as isize;
            if j >= 0 && (j as usize) < cols {
                m[(i, j as usize)] += c;
            }
        }
    }
    m
}

/// Operators on the bounded grid `x_i = i dx`, `dx = L / (N_x - 1)`.
///
/// Interior rho lives at `i = 1..N_x-2`, g at the `N_x - 1` half points
/// `1/2..N_x-3/2` and the closed g (with one ghost each side) at
/// `-1/2..N_x-1/2`.
#[derive(Clone, Debug)]
pub struct BoundaryMatrices {
    pub nx: usize,
    pub dx: f64,
    pub upwind_minus: DMatrix<f64>,
    pub upwind_plus: DMatrix<f64>,
    pub cen_rho: DMatrix<f64>,
    pub avg: DMatrix<f64>,
    pub cen_g: DMatrix<f64>,
}

impl BoundaryMatrices {
    pub fn new(nx: usize, length: f64) -> Result<Self> {
        if nx < 4 {
            return Err(Error::Stencil(format!("bounded grid needs N_x >= 4, got {nx}")));
        }
        if !(length > 0.0) {
            return Err(Error::Stencil(format!("domain length must be positive, got {length}")));
        }
        let dx = length / (nx - 1) as f64;
        let h = 1.0 / dx;
        Ok(Self {
            nx,
            dx,
            upwind_minus: band(&[-1.0, 1.0], 0, nx - 1, nx + 1) * h,
            upwind_plus: band(&[0.0, -1.0, 1.0], 0, nx - 1, nx + 1) * h,
            cen_rho: band(&[-1.0, 1.0], 0, nx - 2, nx - 1) * h,
            avg: band(&[1.0, 1.0], 0, nx - 2, nx - 1) * 0.5,
            cen_g: band(&[-1.0, 1.0], 1, nx - 1, nx - 2) * h,
        })
    }

    pub fn interior_x(&self) -> Vec<f64> {
        (1..self.nx - 1).map(|i| i as f64 * self.dx).collect()
    }

    pub fn half_x(&self) -> Vec<f64> {
        (0..self.nx - 1).map(|i| (i as f64 + 0.5) * self.dx).collect()
    }
}

/// `[-rho_left, 0, ..., 0, rho_right] / dx`, length `N_x - 1`.
pub fn boundary_rho_vector(left: f64, right: f64, dx: f64, nx: usize) -> DVector<f64> {
    let mut b = DVector::zeros(nx - 1);
    b[0] -= left / dx;
    b[nx - 2] += right / dx;
    b
}
