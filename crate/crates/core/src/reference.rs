//! Reference solvers: the full kinetic equation and its diffusion limit.

use nalgebra::{DMatrix, DVector};

use crate::collision::{check_drift, CollisionOperator};
use crate::error::{Error, Result};
use crate::periodic::{outer, step_count};
use crate::stencil::{boundary_rho_vector, BoundaryMatrices, PeriodicOperators};
use crate::tableau::DoubleButcherTableau;
use crate::velocity::VelocityGrid;

fn dense_resolvents(
    coll: &CollisionOperator,
    tableau: &DoubleButcherTableau,
    eps: f64,
    dt: f64,
) -> Result<Vec<DMatrix<f64>>> {
    (0..tableau.stages()).map(|j| Ok(coll.resolvent(eps, tableau.ai(j, j) * dt)?.dense().transpose())).collect()
}

fn check_common(tableau: &DoubleButcherTableau, eps: f64, dt: f64) -> Result<()> {
    if !(eps > 0.0) || !(dt > 0.0) {
        return Err(Error::Config(format!("need eps > 0 and dt > 0 (eps={eps}, dt={dt})")));
    }
    if !tableau.is_gsa() {
        return Err(Error::Config(format!("tableau {} is not globally stiffly accurate", tableau.name)));
    }
    Ok(())
}

/// IMEX-RK for the full distribution `f` (`N_x x N_v`) on a periodic grid,
/// transport explicit and collision implicit.
pub struct BgkPeriodic {
    pub grid: VelocityGrid,
    pub coll: CollisionOperator,
    pub ops: PeriodicOperators,
    pub tableau: DoubleButcherTableau,
    pub eps: f64,
    pub dt: f64,
    pub drift: f64,
    resolvents_t: Vec<DMatrix<f64>>,
    l_t: DMatrix<f64>,
}

impl BgkPeriodic {
    pub fn new(
        grid: VelocityGrid,
        coll: CollisionOperator,
        ops: PeriodicOperators,
        tableau: DoubleButcherTableau,
        eps: f64,
        dt: f64,
    ) -> Result<Self> {
        check_common(&tableau, eps, dt)?;
        let resolvents_t = dense_resolvents(&coll, &tableau, eps, dt)?;
        let l_t = coll.matrix.transpose();
        Ok(Self { grid, coll, ops, tableau, eps, dt, drift: 0.0, resolvents_t, l_t })
    }

    /// Adds the explicit drift term `eps v M A bracket(f)` to the collision.
    pub fn with_drift(mut self, drift: f64) -> Result<Self> {
        check_drift(drift, self.eps)?;
        self.drift = drift;
        Ok(self)
    }

    /// `f = rho M + g` sampled at the density nodes.
    pub fn init(&self, rho: &DVector<f64>, g: &DMatrix<f64>) -> DMatrix<f64> {
        outer(rho, &self.grid.m_vec()) + g
    }

    pub fn density(&self, f: &DMatrix<f64>) -> DVector<f64> {
        f * DVector::from_element(self.grid.len(), 1.0 / self.grid.m.iter().sum::<f64>())
    }

    fn transport(&self, f: &DMatrix<f64>) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(f.nrows(), f.ncols());
        for k in 0..f.ncols() {
            let v = self.grid.v[k];
            let col: Vec<f64> = f.column(k).iter().copied().collect();
            let dc = if v > 0.0 { self.ops.upwind_minus.apply(&col) } else { self.ops.upwind_plus.apply(&col) };
            for i in 0..f.nrows() {
                d[(i, k)] = v * dc[i];
            }
        }
        d
    }

    pub fn step(&self, f: &DMatrix<f64>) -> DMatrix<f64> {
        let t = &self.tableau;
        let (eps, dt) = (self.eps, self.dt);
        let mut explicit: Vec<DMatrix<f64>> = Vec::new();
        let mut implicit: Vec<DMatrix<f64>> = Vec::new();
        let mut last = f.clone();
        for j in 0..t.stages() {
            let mut rhs = f * (eps * eps);
            for k in 0..j {
                rhs += &explicit[k] * (eps * dt * t.ae(j, k)) + &implicit[k] * (dt * t.ai(j, k));
            }
            let fj = rhs * &self.resolvents_t[j];
            if j + 1 < t.stages() {
                let mut e = -self.transport(&fj);
                if self.drift != 0.0 {
                    e += outer(&self.density(&fj), &self.grid.vm()) * self.drift;
                }
                explicit.push(e);
                implicit.push(&fj * &self.l_t);
            }
            last = fj;
        }
        last
    }

    pub fn run(&self, f: &DMatrix<f64>, t_final: f64) -> Result<DMatrix<f64>> {
        let (n, _) = step_count(t_final, self.dt)?;
        let mut cur = f.clone();
        for _ in 0..n {
            cur = self.step(&cur);
        }
        Ok(cur)
    }
}

/// IMEX-RK for `f` on the interior nodes of a bounded interval with
/// first-order upwinding. The left node holds the incoming data for `v > 0`,
/// the right node holds zero for `v < 0`.
pub struct BgkInflow {
    pub grid: VelocityGrid,
    pub coll: CollisionOperator,
    pub nx: usize,
    pub dx: f64,
    pub tableau: DoubleButcherTableau,
    pub eps: f64,
    pub dt: f64,
    pub f_b: Vec<f64>,
    resolvents_t: Vec<DMatrix<f64>>,
    l_t: DMatrix<f64>,
}

impl BgkInflow {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        grid: VelocityGrid,
        coll: CollisionOperator,
        nx: usize,
        length: f64,
        tableau: DoubleButcherTableau,
        eps: f64,
        dt: f64,
        f_b: Vec<f64>,
    ) -> Result<Self> {
        check_common(&tableau, eps, dt)?;
        if nx < 3 || f_b.len() != grid.len() {
            return Err(Error::Config("bounded kinetic grid needs N_x >= 3 and one inflow value per velocity".into()));
        }
        let resolvents_t = dense_resolvents(&coll, &tableau, eps, dt)?;
        let l_t = coll.matrix.transpose();
        let dx = length / (nx - 1) as f64;
        Ok(Self { grid, coll, nx, dx, tableau, eps, dt, f_b, resolvents_t, l_t })
    }

    pub fn zero_state(&self) -> DMatrix<f64> {
        DMatrix::zeros(self.nx - 2, self.grid.len())
    }

    pub fn density(&self, f: &DMatrix<f64>) -> DVector<f64> {
        f * DVector::from_element(self.grid.len(), 1.0 / self.grid.m.iter().sum::<f64>())
    }

    fn transport(&self, f: &DMatrix<f64>) -> DMatrix<f64> {
        let (n, nv) = f.shape();
        DMatrix::from_fn(n, nv, |i, k| {
            let v = self.grid.v[k];
            if v > 0.0 {
                let left = if i == 0 { self.f_b[k] } else { f[(i - 1, k)] };
                v * (f[(i, k)] - left) / self.dx
            } else {
                let right = if i + 1 == n { 0.0 } else { f[(i + 1, k)] };
                v * (right - f[(i, k)]) / self.dx
            }
        })
    }

    pub fn step(&self, f: &DMatrix<f64>) -> DMatrix<f64> {
        let t = &self.tableau;
        let (eps, dt) = (self.eps, self.dt);
        let mut explicit: Vec<DMatrix<f64>> = Vec::new();
        let mut implicit: Vec<DMatrix<f64>> = Vec::new();
        let mut last = f.clone();
        for j in 0..t.stages() {
            let mut rhs = f * (eps * eps);
            for k in 0..j {
                rhs -= &explicit[k] * (eps * dt * t.ae(j, k));
                rhs += &implicit[k] * (dt * t.ai(j, k));
            }
            let fj = rhs * &self.resolvents_t[j];
            if j + 1 < t.stages() {
                explicit.push(self.transport(&fj));
                implicit.push(&fj * &self.l_t);
            }
            last = fj;
        }
        last
    }

    pub fn run(&self, f: &DMatrix<f64>, t_final: f64) -> Result<DMatrix<f64>> {
        let (n, _) = step_count(t_final, self.dt)?;
        let mut cur = f.clone();
        for _ in 0..n {
            cur = self.step(&cur);
        }
        Ok(cur)
    }
}

/// Diagonally implicit solver for the limit equation
/// `rho_t = kappa rho_xx - kappa A rho_x`, the drift explicit.
pub struct DiffusionPeriodic {
    pub ops: PeriodicOperators,
    pub tableau: DoubleButcherTableau,
    pub kappa: f64,
    pub drift: f64,
    pub dt: f64,
    lap: DMatrix<f64>,
    solvers: Vec<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
}

impl DiffusionPeriodic {
    pub fn new(ops: PeriodicOperators, tableau: DoubleButcherTableau, kappa: f64, drift: f64, dt: f64) -> Result<Self> {
        if !(kappa >= 0.0) || !(dt > 0.0) {
            return Err(Error::Config(format!("need kappa >= 0 and dt > 0 (kappa={kappa}, dt={dt})")));
        }
        let lap = ops.laplacian() * kappa;
        let n = ops.nx;
        let solvers = (0..tableau.stages())
            .map(|j| (DMatrix::<f64>::identity(n, n) - &lap * (dt * tableau.ai(j, j))).lu())
            .collect();
        Ok(Self { ops, tableau, kappa, drift, dt, lap, solvers })
    }

    pub fn step(&self, rho: &DVector<f64>) -> Result<DVector<f64>> {
        let t = &self.tableau;
        let mut diff: Vec<DVector<f64>> = Vec::new();
        let mut adv: Vec<DVector<f64>> = Vec::new();
        let mut last = rho.clone();
        for j in 0..t.stages() {
            let mut rhs = rho.clone();
            for k in 0..j {
                rhs += &diff[k] * (self.dt * t.ai(j, k)) - &adv[k] * (self.dt * t.ae(j, k));
            }
            let r = self.solvers[j]
                .solve(&rhs)
                .ok_or_else(|| Error::Singular { stage: j, what: "diffusion stage".into() })?;
            diff.push(&self.lap * &r);
            if self.drift != 0.0 {
                let a = self.ops.cen_rho.apply_vec(&self.ops.avg.apply_vec(&r));
                adv.push(a * (self.kappa * self.drift));
            } else {
                adv.push(DVector::zeros(r.len()));
            }
            last = r;
        }
        Ok(last)
    }

    pub fn run(&self, rho: &DVector<f64>, t_final: f64) -> Result<DVector<f64>> {
        let (n, _) = step_count(t_final, self.dt)?;
        let mut cur = rho.clone();
        for _ in 0..n {
            cur = self.step(&cur)?;
        }
        Ok(cur)
    }
}

/// Diagonally implicit solver for `rho_t = kappa rho_xx` on the interior
/// nodes of a bounded interval with Dirichlet values on both ends.
pub struct DiffusionDirichlet {
    pub mats: BoundaryMatrices,
    pub tableau: DoubleButcherTableau,
    pub kappa: f64,
    pub dt: f64,
    lap: DMatrix<f64>,
    source: DVector<f64>,
    solvers: Vec<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
}

impl DiffusionDirichlet {
    pub fn new(
        mats: BoundaryMatrices,
        tableau: DoubleButcherTableau,
        kappa: f64,
        left: f64,
        right: f64,
        dt: f64,
    ) -> Result<Self> {
        if !(kappa >= 0.0) || !(dt > 0.0) {
            return Err(Error::Config(format!("need kappa >= 0 and dt > 0 (kappa={kappa}, dt={dt})")));
        }
        let lap = &mats.cen_rho * &mats.cen_g * kappa;
        let source = &mats.cen_rho * boundary_rho_vector(left, right, mats.dx, mats.nx) * kappa;
        let n = mats.nx - 2;
        let solvers = (0..tableau.stages())
            .map(|j| (DMatrix::<f64>::identity(n, n) - &lap * (dt * tableau.ai(j, j))).lu())
            .collect();
        Ok(Self { mats, tableau, kappa, dt, lap, source, solvers })
    }

    pub fn step(&self, rho: &DVector<f64>) -> Result<DVector<f64>> {
        let t = &self.tableau;
        let mut rates: Vec<DVector<f64>> = Vec::new();
        let mut last = rho.clone();
        for j in 0..t.stages() {
            let mut rhs = rho + &self.source * (self.dt * t.ai(j, j));
            for k in 0..j {
                rhs += &rates[k] * (self.dt * t.ai(j, k));
            }
            let r = self.solvers[j]
                .solve(&rhs)
                .ok_or_else(|| Error::Singular { stage: j, what: "diffusion stage".into() })?;
            rates.push(&self.lap * &r + &self.source);
            last = r;
        }
        Ok(last)
    }

    pub fn run(&self, rho: &DVector<f64>, t_final: f64) -> Result<DVector<f64>> {
        let (n, _) = step_count(t_final, self.dt)?;
        let mut cur = rho.clone();
        for _ in 0..n {
            cur = self.step(&cur)?;
        }
        Ok(cur)
    }
}

/// Boundary density for the diffusion limit with kinetic inflow `f_b`
/// (first-order Marshak-type approximation of the half-space problem).
pub fn klar_boundary_rho(grid: &VelocityGrid, f_b: &[f64], kappa: f64) -> f64 {
    let (mut vf, mut vm) = (0.0, 0.0);
    for k in 0..grid.len() {
        if grid.v[k] > 0.0 {
            vf += grid.v[k] * f_b[k];
            vm += grid.v[k] * grid.m[k];
        }
    }
    let ratio = vf / vm;
    let m_sum: f64 = grid.m.iter().sum();
    let corr: f64 = (0..grid.len())
        .filter(|&k| grid.v[k] > 0.0)
        .map(|k| grid.v[k] * grid.v[k] * (f_b[k] - grid.m[k] * ratio))
        .sum();
    ratio + corr / (kappa * m_sum)
}
