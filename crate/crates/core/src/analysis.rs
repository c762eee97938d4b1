//! Error norms, order fitting and the asymptotic-preserving checks.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::collision::CollisionOperator;
use crate::error::{Error, Result};
use crate::periodic::outer;
use crate::stencil::Circulant;
use crate::tableau::{DoubleButcherTableau, SchemeClass};
use crate::velocity::VelocityGrid;

/// Discrete `L2` norm of `a - b` weighted by the cell width.
pub fn l2_error(a: &[f64], b: &[f64], dx: f64) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() * dx).sqrt()
}

pub fn linf_error(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Least-squares slope of `log(error)` against `log(step)`.
pub fn observed_order(errors: &[f64], steps: &[f64]) -> Result<f64> {
    if errors.len() != steps.len() {
        return Err(Error::Analysis("errors and steps differ in length".into()));
    }
    if errors.len() < 3 {
        return Err(Error::Analysis(format!("need at least 3 points to fit an order, got {}", errors.len())));
    }
    if errors.iter().chain(steps).any(|x| !(*x > 0.0) || !x.is_finite()) {
        return Err(Error::Analysis("errors and steps must be positive and finite".into()));
    }
    let xs: Vec<f64> = steps.iter().map(|h| h.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::Analysis("all step sizes are equal".into()));
    }
    Ok(sxy / sxx)
}

/// Order fitted over a window of the data.
#[derive(Clone, Debug, PartialEq)]
pub struct OrderFit {
    pub slope: f64,
    /// Indices of the points used.
    pub used: Vec<usize>,
}

/// Fits the order on all points except that the coarsest one is dropped
/// when it is pre-asymptotic: its local slope to the next point differs
/// from the fit over the remaining points by more than `0.5`. At least
/// three points are always kept. `steps` must be sorted coarse to fine.
pub fn fit_order(errors: &[f64], steps: &[f64]) -> Result<OrderFit> {
    let all = observed_order(errors, steps)?;
    let n = errors.len();
    if n >= 4 {
        let rest = observed_order(&errors[1..], &steps[1..])?;
        let local = (errors[0] / errors[1]).ln() / (steps[0] / steps[1]).ln();
        if (local - rest).abs() > 0.5 {
            return Ok(OrderFit { slope: rest, used: (1..n).collect() });
        }
    }
    Ok(OrderFit { slope: all, used: (0..n).collect() })
}

/// `max |g - eps L^{-1}(v M) (G_g rho)|`, the distance of the micro part
/// from its first-order equilibrium value.
pub fn ap_residual(
    g: &DMatrix<f64>,
    rho: &DVector<f64>,
    coll: &CollisionOperator,
    grid: &VelocityGrid,
    grad: &Circulant,
    eps: f64,
) -> f64 {
    let u = DVector::from_vec(coll.inverse_vm(grid));
    let target = outer(&(grad.apply_vec(rho) * eps), &u);
    (g - target).amax()
}

/// Random stand-ins for the stage gradients and drift terms on a small grid.
#[derive(Clone, Debug)]
pub struct StandIns {
    /// `grad[k]` stands for the gradient of `rho^{(k)}`.
    pub grad: Vec<DVector<f64>>,
    /// `drift[k]` stands for `A rho^{(k)}`.
    pub drift: Vec<DVector<f64>>,
}

impl StandIns {
    pub fn random(stages: usize, nx: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = || DVector::from_fn(nx, |_, _| rng.random_range(-1.0..1.0));
        let grad = (0..stages).map(|_| draw()).collect();
        let drift = (0..stages).map(|_| draw()).collect();
        Self { grad, drift }
    }
}

/// Nested-sum tensors of the formal `eps -> 0` expansion of the scheme.
///
/// Stage indices are zero-based. For a CK-ARS tableau the first stage is
/// skipped, so every sum starts at index one.
pub struct PiTensors<'a> {
    pub tableau: &'a DoubleButcherTableau,
    pub grid: &'a VelocityGrid,
    pub standins: &'a StandIns,
    first: usize,
    /// `L^{-1}(v M)`.
    u: DVector<f64>,
    v_over_sum: DVector<f64>,
}

impl<'a> PiTensors<'a> {
    pub fn new(
        tableau: &'a DoubleButcherTableau,
        grid: &'a VelocityGrid,
        coll: &CollisionOperator,
        standins: &'a StandIns,
    ) -> Result<Self> {
        let first = match tableau.classify() {
            SchemeClass::TypeA => 0,
            SchemeClass::TypeCkArs => 1,
            c => return Err(Error::Analysis(format!("no expansion for a {c:?} tableau"))),
        };
        if standins.grad.len() < tableau.stages() || standins.drift.len() < tableau.stages() {
            return Err(Error::Analysis("fewer stand-ins than stages".into()));
        }
        let u = DVector::from_vec(coll.inverse_vm(grid));
        let m_sum: f64 = grid.m.iter().sum();
        let v_over_sum = DVector::from_iterator(grid.len(), grid.v.iter().map(|v| v / m_sum));
        Ok(Self { tableau, grid, standins, first, u, v_over_sum })
    }

    pub fn first_stage(&self) -> usize {
        self.first
    }

    /// `R^k`: the leading micro term of stage `k`, an `N_x x N_v` field.
    fn leading(&self, k: usize) -> DMatrix<f64> {
        let t = self.tableau;
        let nx = self.standins.grad[0].len();
        let mut s = DVector::zeros(nx);
        for kp in self.first..=k {
            s += &self.standins.grad[kp] * t.ai(k, kp);
        }
        for kp in self.first..k {
            s -= &self.standins.drift[kp] * t.ae(k, kp);
        }
        outer(&s, &self.u)
    }

    /// `depth` levels of the nested sum ending at stage `k`.
    fn nested(&self, depth: usize, k: usize) -> DMatrix<f64> {
        if depth == 0 {
            return self.leading(k);
        }
        let t = self.tableau;
        let nx = self.standins.grad[0].len();
        let mut acc = DMatrix::zeros(nx, self.grid.len());
        for kp in self.first..k {
            acc += self.nested(depth - 1, kp) * (t.ai(k, kp) / t.ai(kp, kp));
        }
        acc
    }

    /// `Pi^m_{j,k1}` as a per-point flux, `m >= 1`.
    pub fn eval(&self, j: usize, k1: usize, m: usize) -> Result<DVector<f64>> {
        let s = self.tableau.stages();
        if m == 0 || j >= s || k1 > j || k1 < self.first || j < self.first {
            return Err(Error::Analysis(format!("index out of range: j={j}, k1={k1}, m={m}")));
        }
        let t = self.tableau;
        let field = self.nested(m - 1, k1) * (t.ai(j, k1) / t.ai(k1, k1));
        Ok(field * &self.v_over_sum)
    }

    /// Flux of the limit scheme at stage `j`:
    /// `-sum_k a_jk K grad_k + sum_{k<j} a~_jk K drift_k`, `K = bracket(v L^{-1}(vM))`.
    pub fn limit_flux(&self, j: usize) -> DVector<f64> {
        let t = self.tableau;
        let vu: Vec<f64> = self.grid.v.iter().zip(self.u.iter()).map(|(v, u)| v * u).collect();
        let kk = self.grid.bracket(&vu);
        let nx = self.standins.grad[0].len();
        let mut out = DVector::zeros(nx);
        for k in self.first..=j {
            out -= &self.standins.grad[k] * (t.ai(j, k) * kk);
        }
        for k in self.first..j {
            out += &self.standins.drift[k] * (t.ae(j, k) * kk);
        }
        out
    }
}

/// Results of the three algebraic checks of the expansion.
#[derive(Clone, Debug)]
pub struct LimitCheck {
    /// `max |Pi^m_{j,j} - sum_{k1<j} Pi^{m-1}_{j,k1}|`.
    pub recurrence: f64,
    /// `max |Pi^{depth}_{j,k1}|` over `k1 < j` at the largest depth.
    pub vanishing: f64,
    /// `max |sum_{k1} sum_l (-1)^l Pi^l_{j,k1} - limit_flux(j)|`.
    pub limit: f64,
}

impl LimitCheck {
    pub fn max(&self) -> f64 {
        self.recurrence.max(self.vanishing).max(self.limit)
    }
}

pub fn limit_scheme_check(tensors: &PiTensors) -> Result<LimitCheck> {
    let s = tensors.tableau.stages();
    let f = tensors.first_stage();
    let (mut recurrence, mut vanishing, mut limit) = (0.0f64, 0.0f64, 0.0f64);
    for j in f..s {
        // Number of stages taking part up to j.
        let depth = j - f + 1;
        for m in 2..=depth {
            let mut sum = DVector::zeros(tensors.standins.grad[0].len());
            for k1 in f..j {
                sum += tensors.eval(j, k1, m - 1)?;
            }
            recurrence = recurrence.max((tensors.eval(j, j, m)? - sum).amax());
        }
        for k1 in f..j {
            vanishing = vanishing.max(tensors.eval(j, k1, depth)?.amax());
        }
        let mut total = DVector::zeros(tensors.standins.grad[0].len());
        for k1 in f..=j {
            for l in 1..=depth {
                let sign = if l % 2 == 0 { 1.0 } else { -1.0 };
                total += tensors.eval(j, k1, l)? * sign;
            }
        }
        limit = limit.max((total - tensors.limit_flux(j)).amax());
    }
    Ok(LimitCheck { recurrence, vanishing, limit })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tableau;

    #[test]
    fn order_of_exact_power_law() {
        let hs = [0.1, 0.05, 0.025, 0.0125];
        let e: Vec<f64> = hs.iter().map(|h: &f64| 3.0 * h.powi(2)).collect();
        assert!((observed_order(&e, &hs).unwrap() - 2.0).abs() < 1e-12);
        assert!(observed_order(&e[..2], &hs[..2]).is_err());
        assert!(observed_order(&[1.0, 0.0, 1.0], &hs[..3]).is_err());
    }

    #[test]
    fn fit_drops_preasymptotic_point() {
        let hs = [0.1, 0.05, 0.025, 0.0125, 0.00625];
        let mut e: Vec<f64> = hs.iter().map(|h: &f64| h.powi(2)).collect();
        e[0] = e[1] * 1.2;
        let fit = fit_order(&e, &hs).unwrap();
        assert_eq!(fit.used, vec![1, 2, 3, 4]);
        assert!((fit.slope - 2.0).abs() < 1e-12);
        let clean: Vec<f64> = hs.iter().map(|h: &f64| h.powi(2)).collect();
        assert_eq!(fit_order(&clean, &hs).unwrap().used.len(), 5);
    }

    #[test]
    fn norms() {
        let a = [1.0, 2.0, 3.0];
        let b = [1.0, 2.5, 2.0];
        assert!((l2_error(&a, &b, 0.5) - (0.5f64 * 1.25).sqrt()).abs() < 1e-15);
        assert_eq!(linf_error(&a, &b), 1.0);
    }

    fn check(t: &DoubleButcherTableau) -> LimitCheck {
        let grid = VelocityGrid::new(3.0, 6).unwrap();
        let coll = CollisionOperator::bgk(&grid);
        let st = StandIns::random(t.stages(), 8, 7);
        let pi = PiTensors::new(t, &grid, &coll, &st).unwrap();
        limit_scheme_check(&pi).unwrap()
    }

    #[test]
    fn expansion_identities_type_a() {
        for t in [tableau::dp_a121(tableau::default_dp_a121_gamma()), tableau::dp1_a242()] {
            let c = check(&t);
            assert!(c.max() < 1e-12, "{} {c:?}", t.name);
        }
    }

    #[test]
    fn expansion_identities_ck_ars() {
        for t in [tableau::ars222(), tableau::ars443()] {
            let c = check(&t);
            assert!(c.max() < 1e-12, "{} {c:?}", t.name);
        }
    }

    #[test]
    fn single_stage_tensor_is_limit_flux() {
        let t = tableau::ars111();
        let grid = VelocityGrid::new(3.0, 6).unwrap();
        let coll = CollisionOperator::bgk(&grid);
        let st = StandIns::random(2, 8, 1);
        let pi = PiTensors::new(&t, &grid, &coll, &st).unwrap();
        let p = pi.eval(1, 1, 1).unwrap();
        assert!((p + pi.limit_flux(1)).amax() < 1e-14);
    }
}
