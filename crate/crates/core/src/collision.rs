//! Linear collision operators on the velocity grid and their stage resolvents.

use nalgebra::{DMatrix, DVector, SymmetricEigen, LU};

use crate::error::{Error, Result};
use crate::velocity::VelocityGrid;

const RANGE_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CollisionKind {
    Bgk,
    Custom,
}

#[derive(Clone, Debug)]
pub struct CollisionOperator {
    pub matrix: DMatrix<f64>,
    pub kind: CollisionKind,
    pi: DMatrix<f64>,
    m_sum: f64,
    /// `L - Pi` maps M to -M and R(L) onto itself, so it is invertible and
    /// its inverse restricted to zero-mean vectors is the pseudo-inverse.
    deflated: LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl CollisionOperator {
    /// BGK relaxation `h -> bracket(h) M - h`.
    pub fn bgk(grid: &VelocityGrid) -> Self {
        let pi = grid.pi_matrix();
        let n = grid.len();
        let matrix = &pi - DMatrix::identity(n, n);
        Self::assemble(matrix, CollisionKind::Bgk, pi, grid)
    }

    /// A user-supplied operator, checked against the structural invariants.
    pub fn custom(grid: &VelocityGrid, matrix: DMatrix<f64>) -> Result<Self> {
        Self::check_invariants(grid, &matrix)?;
        let op = Self::assemble(matrix, CollisionKind::Custom, grid.pi_matrix(), grid);
        if !op.deflated.is_invertible() {
            return Err(Error::Collision("null space larger than span(M)".into()));
        }
        Ok(op)
    }

    fn assemble(matrix: DMatrix<f64>, kind: CollisionKind, pi: DMatrix<f64>, grid: &VelocityGrid) -> Self {
        let deflated = (&matrix - &pi).lu();
        let m_sum = grid.m.iter().sum();
        Self { matrix, kind, pi, m_sum, deflated }
    }

    /// Checks `L M = 0`, zero-mean range, self-adjointness in the `1/M`
    /// weighted product and non-positivity.
    pub fn check_invariants(grid: &VelocityGrid, l: &DMatrix<f64>) -> Result<()> {
        let n = grid.len();
        if l.shape() != (n, n) {
            return Err(Error::Collision(format!("expected {n}x{n} matrix, got {:?}", l.shape())));
        }
        let scale = l.amax().max(1e-300);
        let lm = l * grid.m_vec();
        if lm.amax() > 1e-10 * scale {
            return Err(Error::Collision(format!("L M != 0 (max {:e})", lm.amax())));
        }
        for j in 0..n {
            let col_sum: f64 = l.column(j).sum();
            if col_sum.abs() > 1e-10 * scale {
                return Err(Error::Collision(format!("bracket(L e_{j}) = {col_sum:e} != 0")));
            }
        }
        // S = W^{1/2} L W^{-1/2} with W = diag(1/M) must be symmetric negative semidefinite.
        let s = DMatrix::from_fn(n, n, |i, j| l[(i, j)] * (grid.m[j] / grid.m[i]).sqrt());
        let asym = (&s - s.transpose()).amax();
        if asym > 1e-10 * scale {
            return Err(Error::Collision(format!("not self-adjoint (asymmetry {asym:e})")));
        }
        let eig = SymmetricEigen::new(s);
        let top = eig.eigenvalues.max();
        if top > 1e-10 * scale {
            return Err(Error::Collision(format!("not non-positive (eigenvalue {top:e})")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.nrows() == 0
    }

    pub fn apply(&self, h: &[f64]) -> Vec<f64> {
        (&self.matrix * DVector::from_column_slice(h)).as_slice().to_vec()
    }

    /// Solves `L u = h` with `bracket(u) = 0`. `h` must have zero mean.
    pub fn pseudo_inverse_apply(&self, h: &[f64]) -> Result<Vec<f64>> {
        let sum: f64 = h.iter().sum();
        let mag: f64 = h.iter().map(|x| x.abs()).sum();
        if sum.abs() > RANGE_TOL * mag.max(f64::MIN_POSITIVE) {
            return Err(Error::NotInRange { bracket: sum / self.m_sum });
        }
        let u = self
            .deflated
            .solve(&DVector::from_column_slice(h))
            .ok_or_else(|| Error::Collision("deflated operator singular".into()))?;
        Ok(u.as_slice().to_vec())
    }

    /// `L^{-1}(v M)`.
    pub fn inverse_vm(&self, grid: &VelocityGrid) -> Vec<f64> {
        self.pseudo_inverse_apply(grid.vm().as_slice()).expect("vM has zero mean on a symmetric grid")
    }

    /// Diffusion coefficient `-bracket(v L^{-1}(vM))`.
    pub fn kappa(&self, grid: &VelocityGrid) -> f64 {
        let u = self.inverse_vm(grid);
        let vu: Vec<f64> = grid.v.iter().zip(&u).map(|(v, u)| v * u).collect();
        -grid.bracket(&vu)
    }

    pub fn resolvent(&self, eps: f64, adt: f64) -> Result<StageResolvent> {
        StageResolvent::new(&self.matrix, &self.pi, eps, adt)
    }

    /// `bracket(v (eps^2 I - adt L)^{-1}(v M))`.
    pub fn diffusion_tensor(&self, grid: &VelocityGrid, eps: f64, adt: f64) -> Result<f64> {
        let r = self.resolvent(eps, adt)?;
        let u = r.apply_range(&grid.vm());
        let vu: Vec<f64> = grid.v.iter().zip(u.iter()).map(|(v, u)| v * u).collect();
        Ok(grid.bracket(&vu))
    }

    /// Advection-diffusion collision `L f + eps v M A bracket(f)`.
    pub fn advdiff_apply(&self, grid: &VelocityGrid, drift: f64, eps: f64, f: &[f64]) -> Result<Vec<f64>> {
        check_drift(drift, eps)?;
        let b = grid.bracket(f);
        let mut out = self.apply(f);
        for k in 0..out.len() {
            out[k] += eps * grid.v[k] * grid.m[k] * drift * b;
        }
        Ok(out)
    }

    /// Half-moment operator `(I - Pi-) L`.
    pub fn tilde(&self, grid: &VelocityGrid) -> DMatrix<f64> {
        let n = grid.len();
        (DMatrix::identity(n, n) - grid.pi_minus_matrix()) * &self.matrix
    }
}

pub fn check_drift(drift: f64, eps: f64) -> Result<()> {
    if (eps * drift).abs() >= 1.0 {
        return Err(Error::Config(format!("|eps A| = {} must be < 1", (eps * drift).abs())));
    }
    Ok(())
}

/// Factorized `(eps^2 I - adt Lop)^{-1}` where `Lop` annihilates the range of
/// the projector `P` and maps into its kernel.
///
/// A plain factorization loses accuracy in the `P` direction as `eps -> 0`,
/// so the solve is split: the `P` component is `P h / eps^2` and the rest
/// comes from `eps^2 (I - P) - adt Lop + (eps^2 + adt) P` restricted to the
/// range of `I - P`.
#[derive(Clone, Debug)]
pub struct StageResolvent {
    pub eps: f64,
    pub adt: f64,
    proj: DMatrix<f64>,
    range_op: DMatrix<f64>,
}

impl StageResolvent {
    pub fn new(lop: &DMatrix<f64>, proj: &DMatrix<f64>, eps: f64, adt: f64) -> Result<Self> {
        if !(eps > 0.0) || adt < 0.0 {
            return Err(Error::Config(format!("resolvent needs eps > 0 and a dt >= 0 (eps={eps}, a dt={adt})")));
        }
        let n = lop.nrows();
        let id = DMatrix::<f64>::identity(n, n);
        let q = &id - proj;
        // The P block only fixes invertibility; scaling it to the size of
        // the Q block keeps the factorization well conditioned.
        let shifted = (eps * eps) * &q - adt * lop + (eps * eps + adt) * proj;
        let inv =
            shifted.try_inverse().ok_or_else(|| Error::Singular { stage: 0, what: "velocity resolvent".into() })?;
        Ok(Self { eps, adt, proj: proj.clone(), range_op: inv * q })
    }

    pub fn apply(&self, h: &DVector<f64>) -> DVector<f64> {
        &self.range_op * h + (&self.proj * h) / (self.eps * self.eps)
    }

    /// Applies the resolvent to `(I - P) h`; used wherever the argument lies
    /// in the range of `I - P` by construction.
    pub fn apply_range(&self, h: &DVector<f64>) -> DVector<f64> {
        &self.range_op * h
    }

    /// Row-wise `apply_range` on an `N_x x N_v` array.
    pub fn apply_range_rows(&self, g: &DMatrix<f64>) -> DMatrix<f64> {
        g * self.range_op.transpose()
    }

    /// The dense operator `(eps^2 I - adt Lop)^{-1}`.
    pub fn dense(&self) -> DMatrix<f64> {
        &self.range_op + &self.proj / (self.eps * self.eps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> VelocityGrid {
        VelocityGrid::default_grid()
    }

    #[test]
    fn bgk_basic_identities() {
        let g = grid();
        let l = CollisionOperator::bgk(&g);
        assert!(l.apply(&g.m).iter().all(|x| x.abs() < 1e-16));
        let vm = g.vm();
        let lvm = l.apply(vm.as_slice());
        for k in 0..10 {
            assert!((lvm[k] + vm[k]).abs() < 1e-16);
        }
        let h: Vec<f64> = (0..10).map(|k| (1.3 * k as f64).cos()).collect();
        assert!(g.bracket(&l.apply(&h)).abs() < 1e-14);
    }

    #[test]
    fn pseudo_inverse_bgk() {
        let g = grid();
        let l = CollisionOperator::bgk(&g);
        let u = l.inverse_vm(&g);
        for k in 0..10 {
            assert!((u[k] + g.v[k] * g.m[k]).abs() < 1e-15);
        }
        let c = g.centered_v2m();
        let u = l.pseudo_inverse_apply(&c).unwrap();
        for k in 0..10 {
            assert!((u[k] + c[k]).abs() < 1e-15);
        }
        assert!(matches!(l.pseudo_inverse_apply(&g.m), Err(Error::NotInRange { .. })));
    }

    #[test]
    fn resolvent_closed_form() {
        let g = grid();
        let l = CollisionOperator::bgk(&g);
        let c = DVector::from_vec(g.centered_v2m());
        let r = l.resolvent(1.0, 1.0).unwrap();
        let out = r.apply(&c);
        assert!((out - &c / 2.0).amax() < 1e-15);
        let r0 = l.resolvent(0.3, 0.0).unwrap();
        let h = DVector::from_fn(10, |k, _| (k as f64).sin());
        assert!((r0.apply(&h) - &h / 0.09).amax() < 1e-12);
        // multiply back
        for &(eps, adt) in &[(1.0, 0.5), (1e-3, 0.01), (1e-8, 0.1)] {
            let r = l.resolvent(eps, adt).unwrap();
            let back = (eps * eps) * r.apply_range(&c) - adt * (&l.matrix * r.apply_range(&c));
            assert!((back - &c).amax() < 1e-12 * c.amax());
        }
    }

    #[test]
    fn diffusion_tensor_closed_form() {
        let g = grid();
        let l = CollisionOperator::bgk(&g);
        let k0 = l.kappa(&g);
        for &(eps, adt) in &[(1.0, 0.0), (1.0, 0.3), (1e-2, 0.05), (1e-6, 1e-3)] {
            let d = l.diffusion_tensor(&g, eps, adt).unwrap();
            let closed = k0 / (eps * eps + adt);
            assert!((d - closed).abs() < 1e-12 * closed, "{eps} {adt}");
        }
        let adt = 1e9;
        let d = l.diffusion_tensor(&g, 1.0, adt).unwrap();
        assert!((adt * d - k0).abs() < 1e-8);
    }

    #[test]
    fn kappa_refines_to_one() {
        let coarse = CollisionOperator::bgk(&grid()).kappa(&grid());
        let fine_grid = VelocityGrid::new(8.0, 160).unwrap();
        let fine = CollisionOperator::bgk(&fine_grid).kappa(&fine_grid);
        assert!((fine - 1.0).abs() < 1e-10);
        assert!((coarse - 1.0).abs() > (fine - 1.0).abs());
        // scaling M leaves kappa unchanged
        let scaled = VelocityGrid::with_equilibrium(5.0, 10, |v| 3.0 * crate::velocity::gaussian(v)).unwrap();
        let ks = CollisionOperator::bgk(&scaled).kappa(&scaled);
        assert!((ks - coarse).abs() < 1e-14);
    }

    #[test]
    fn advdiff_identities() {
        let g = grid();
        let l = CollisionOperator::bgk(&g);
        let f: Vec<f64> = (0..10).map(|k| 1.0 + 0.1 * k as f64).collect();
        let a0 = l.advdiff_apply(&g, 0.0, 0.5, &f).unwrap();
        assert_eq!(a0, l.apply(&f));
        let am = l.advdiff_apply(&g, 0.7, 0.5, &g.m).unwrap();
        for k in 0..10 {
            assert!((am[k] - 0.5 * 0.7 * g.v[k] * g.m[k]).abs() < 1e-16);
        }
        assert!(g.bracket(&l.advdiff_apply(&g, 0.7, 0.5, &f).unwrap()).abs() < 1e-14);
        assert!(l.advdiff_apply(&g, 3.0, 0.5, &f).is_err());
    }

    #[test]
    fn tilde_operator_factorizations() {
        let g = grid();
        let l = CollisionOperator::bgk(&g);
        let lt = l.tilde(&g);
        let id = DMatrix::<f64>::identity(10, 10);
        let qm = &id - g.pi_minus_matrix();
        let q = &id - g.pi_matrix();
        assert!((&lt - &qm * &l.matrix * &qm).amax() < 1e-14);
        assert!((&lt - &qm * &l.matrix * &q).amax() < 1e-14);
        assert!((&lt * g.m_vec()).amax() < 1e-16);
        let h = DVector::from_fn(10, |k, _| (2.1 * k as f64).sin());
        let out = &lt * &h;
        assert!(g.half_bracket(out.as_slice(), crate::velocity::HalfSet::Minus).unwrap().abs() < 1e-15);
    }

    #[test]
    fn custom_operator_validation() {
        let g = grid();
        // Two-rate relaxation: still self-adjoint in the 1/M product.
        let bgk = CollisionOperator::bgk(&g).matrix;
        let odd = DMatrix::from_fn(10, 10, |i, j| g.v[i] * g.m[i] * g.v[j]);
        let norm = g.v.iter().zip(&g.m).map(|(v, m)| v * v * m).sum::<f64>();
        let custom = &bgk - 0.5 * odd / norm;
        let op = CollisionOperator::custom(&g, custom.clone()).unwrap();
        let h = g.centered_v2m();
        let u = op.pseudo_inverse_apply(&h).unwrap();
        let lu = op.apply(&u);
        for k in 0..10 {
            assert!((lu[k] - h[k]).abs() < 1e-11);
        }
        assert!(g.bracket(&u).abs() < 1e-12);
        assert!(op.kappa(&g) > 0.0);
        // Positive definite part breaks non-positivity.
        assert!(CollisionOperator::custom(&g, -bgk.clone()).is_err());
        let mut broken = bgk.clone();
        broken[(0, 1)] += 0.1;
        assert!(CollisionOperator::custom(&g, broken).is_err());
    }
}
