//! Discrete velocity grid, equilibrium weights and moment brackets.
//!
//! Points sit at cell midpoints `v_k = -v_max + (k + 1/2) dv`, so the grid
//! is symmetric about zero. The incoming half set `V-` is `{v > 0}`, which
//! corresponds to the outward normal of a left boundary.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HalfSet {
    /// Incoming velocities at a left boundary (`v > 0`).
    Minus,
    /// Outgoing velocities at a left boundary (`v < 0`).
    Plus,
}

#[derive(Clone, Debug)]
pub struct VelocityGrid {
    pub v_max: f64,
    pub dv: f64,
    pub v: Vec<f64>,
    pub m: Vec<f64>,
    m_sum: f64,
}

pub fn gaussian(v: f64) -> f64 {
    (-0.5 * v * v).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

impl VelocityGrid {
    pub fn new(v_max: f64, nv: usize) -> Result<Self> {
        Self::with_equilibrium(v_max, nv, gaussian)
    }

    /// Grid with `dv = 1` spacing implied by `v_max` (the experiments' default).
    pub fn default_grid() -> Self {
        Self::new(5.0, 10).expect("default grid")
    }

    pub fn with_equilibrium(v_max: f64, nv: usize, eq: impl Fn(f64) -> f64) -> Result<Self> {
        if !(v_max > 0.0) || !v_max.is_finite() {
            return Err(Error::Velocity(format!("v_max must be positive, got {v_max}")));
        }
        if nv == 0 || !nv.is_multiple_of(2) {
            return Err(Error::Velocity(format!("N_v must be a positive even integer, got {nv}")));
        }
        let dv = 2.0 * v_max / nv as f64;
        let v: Vec<f64> = (0..nv).map(|k| -v_max + (k as f64 + 0.5) * dv).collect();
        let m: Vec<f64> = v.iter().map(|&x| eq(x)).collect();
        for k in 0..nv {
            if !(m[k] > 0.0) {
                return Err(Error::Velocity(format!("equilibrium not positive at v = {}", v[k])));
            }
            let mirror = m[nv - 1 - k];
            if (m[k] - mirror).abs() > 1e-14 * m[k].abs().max(1.0) {
                return Err(Error::Velocity(format!("equilibrium not even at v = {}", v[k])));
            }
        }
        let m_sum = m.iter().sum();
        Ok(Self { v_max, dv, v, m, m_sum })
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }

    pub fn in_half(&self, k: usize, side: HalfSet) -> bool {
        match side {
            HalfSet::Minus => self.v[k] > 0.0,
            HalfSet::Plus => self.v[k] < 0.0,
        }
    }

    /// Normalized moment `sum(h dv) / sum(M dv)`.
    pub fn bracket(&self, h: &[f64]) -> f64 {
        debug_assert_eq!(h.len(), self.len());
        h.iter().sum::<f64>() / self.m_sum
    }

    pub fn half_bracket(&self, h: &[f64], side: HalfSet) -> Result<f64> {
        let mut num = 0.0;
        let mut den = 0.0;
        for k in 0..self.len() {
            if self.in_half(k, side) {
                num += h[k];
                den += self.m[k];
            }
        }
        if den == 0.0 {
            return Err(Error::Velocity("empty half set".into()));
        }
        Ok(num / den)
    }

    pub fn project_pi(&self, h: &[f64]) -> Vec<f64> {
        let b = self.bracket(h);
        self.m.iter().map(|m| b * m).collect()
    }

    pub fn project_pi_minus(&self, h: &[f64]) -> Result<Vec<f64>> {
        let b = self.half_bracket(h, HalfSet::Minus)?;
        Ok(self.m.iter().map(|m| b * m).collect())
    }

    /// Matrix of `h -> bracket(h) M` acting on column vectors.
    pub fn pi_matrix(&self) -> DMatrix<f64> {
        let n = self.len();
        DMatrix::from_fn(n, n, |i, _| self.m[i] / self.m_sum)
    }

    /// Matrix of `h -> half_bracket(h, V-) M`.
    pub fn pi_minus_matrix(&self) -> DMatrix<f64> {
        let n = self.len();
        let den: f64 = (0..n).filter(|&k| self.in_half(k, HalfSet::Minus)).map(|k| self.m[k]).sum();
        DMatrix::from_fn(n, n, |i, j| if self.in_half(j, HalfSet::Minus) { self.m[i] / den } else { 0.0 })
    }

    pub fn m_vec(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.m)
    }

    /// `v * M` as a vector.
    pub fn vm(&self) -> DVector<f64> {
        DVector::from_iterator(self.len(), self.v.iter().zip(&self.m).map(|(v, m)| v * m))
    }

    /// `(I - Pi)(v^2 M)`, the velocity profile used for the initial micro part.
    pub fn centered_v2m(&self) -> Vec<f64> {
        let v2m: Vec<f64> = self.v.iter().zip(&self.m).map(|(v, m)| v * v * m).collect();
        let b = self.bracket(&v2m);
        v2m.iter().zip(&self.m).map(|(x, m)| x - b * m).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_points() {
        let g = VelocityGrid::default_grid();
        assert_eq!(g.len(), 10);
        assert_eq!(g.dv, 1.0);
        assert_eq!(g.v[0], -4.5);
        assert_eq!(g.v[9], 4.5);
        for k in 0..10 {
            assert_eq!(g.v[k], -g.v[9 - k]);
        }
    }

    #[test]
    fn bracket_identities() {
        let g = VelocityGrid::default_grid();
        assert!((g.bracket(&g.m) - 1.0).abs() < 1e-15);
        assert!(g.bracket(g.vm().as_slice()).abs() < 1e-16);
        assert!((g.half_bracket(&g.m, HalfSet::Minus).unwrap() - 1.0).abs() < 1e-15);
        assert!(g.half_bracket(g.vm().as_slice(), HalfSet::Minus).unwrap() > 0.0);
        assert_eq!(g.half_bracket(&[0.0; 10], HalfSet::Minus).unwrap(), 0.0);
    }

    #[test]
    fn second_moment_by_independent_summation() {
        let g = VelocityGrid::default_grid();
        let v2m: Vec<f64> = g.v.iter().zip(&g.m).map(|(v, m)| v * v * m).collect();
        let kappa0 = g.bracket(&v2m);
        // Independent evaluation: the 1/sqrt(2 pi) factor cancels in the ratio.
        let (mut num, mut den) = (0.0f64, 0.0f64);
        for k in 0..10 {
            let v = -4.5 + k as f64;
            let e = (-0.5 * v * v).exp();
            num += v * v * e;
            den += e;
        }
        assert!((kappa0 - num / den).abs() < 1e-14);
        assert!((kappa0 - 1.0).abs() < 0.05);
    }

    #[test]
    fn projections() {
        let g = VelocityGrid::default_grid();
        let pm = g.project_pi(&g.m);
        for k in 0..10 {
            assert!((pm[k] - g.m[k]).abs() < 1e-16);
        }
        assert!(g.project_pi(g.vm().as_slice()).iter().all(|x| x.abs() < 1e-17));
        let pmm = g.project_pi_minus(&g.m).unwrap();
        for k in 0..10 {
            assert!((pmm[k] - g.m[k]).abs() < 1e-16);
        }
        let mut h = vec![0.0; 10];
        h[0] = 1.0;
        h[3] = -2.0;
        assert!(g.project_pi_minus(&h).unwrap().iter().all(|x| *x == 0.0));
    }

    #[test]
    fn matrices_agree_with_functions() {
        let g = VelocityGrid::default_grid();
        let h: Vec<f64> = (0..10).map(|k| (k as f64).sin()).collect();
        let hv = DVector::from_column_slice(&h);
        let a = g.pi_matrix() * &hv;
        let b = g.pi_minus_matrix() * &hv;
        let pa = g.project_pi(&h);
        let pb = g.project_pi_minus(&h).unwrap();
        for k in 0..10 {
            assert!((a[k] - pa[k]).abs() < 1e-15);
            assert!((b[k] - pb[k]).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(VelocityGrid::new(5.0, 9).is_err());
        assert!(VelocityGrid::new(-1.0, 10).is_err());
        assert!(VelocityGrid::with_equilibrium(5.0, 10, |v| v.exp()).is_err());
    }
}
