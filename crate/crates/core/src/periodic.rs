//! IMEX-RK micro-macro solver on a periodic domain.
//!
//! The state is `(rho, g)` with `f = rho M + g` and `bracket(g) = 0` at every
//! point. Each stage first solves a linear system for `rho^{(j)}` and then
//! updates `g^{(j)}` explicitly. A nonzero drift `A` turns the collision
//! operator into `L f + eps v M A bracket(f)`, with the drift treated
//! explicitly.

use nalgebra::{DMatrix, DVector, LU};

use crate::collision::{check_drift, CollisionOperator, StageResolvent};
use crate::error::{Error, Result};
use crate::stencil::PeriodicOperators;
use crate::tableau::DoubleButcherTableau;
use crate::velocity::VelocityGrid;

#[derive(Clone, Debug, PartialEq)]
pub struct MicroMacroState {
    pub rho: DVector<f64>,
    /// `N_x x N_v`, one row per spatial point.
    pub g: DMatrix<f64>,
    pub time: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitKind {
    /// `g = eps^2 (I - Pi)(v^2 M) rho_0`.
    WellPrepared,
    /// `g = (I - Pi)(v^2 M) rho_0`.
    NonWellPrepared,
}

impl MicroMacroState {
    pub fn mass(&self) -> f64 {
        self.rho.sum()
    }

    /// Largest `|bracket(g)|` over the spatial points.
    pub fn max_bracket(&self, grid: &VelocityGrid) -> f64 {
        self.g.row_iter().map(|r| grid.bracket(&r.iter().copied().collect::<Vec<_>>()).abs()).fold(0.0, f64::max)
    }
}

/// Result of a multi-step run.
#[derive(Clone, Debug)]
pub struct RunSummary {
    pub steps: usize,
    /// Final time actually reached (a multiple of `dt`).
    pub t_final: f64,
    /// True when the requested final time was not a multiple of `dt`.
    pub snapped: bool,
    pub max_bracket: f64,
}

pub fn step_count(t_final: f64, dt: f64) -> Result<(usize, bool)> {
    if !(t_final >= 0.0) || !(dt > 0.0) {
        return Err(Error::Config(format!("need t_final >= 0 and dt > 0 (t_final={t_final}, dt={dt})")));
    }
    let n = (t_final / dt).round();
    let snapped = (n * dt - t_final).abs() > 1e-9 * dt.max(t_final);
    Ok((n as usize, snapped))
}

struct StageCache {
    a_diag: f64,
    resolvent: StageResolvent,
    /// `I_j (v M)`.
    res_vm: DVector<f64>,
    rho_lu: Option<LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
}

pub struct PeriodicSolver {
    pub grid: VelocityGrid,
    pub coll: CollisionOperator,
    pub ops: PeriodicOperators,
    pub tableau: DoubleButcherTableau,
    pub eps: f64,
    pub drift: f64,
    dt: f64,
    caches: Vec<StageCache>,
    stage_cache: Vec<usize>,
    vm: DVector<f64>,
    l_t: DMatrix<f64>,
    one_over_sum: DVector<f64>,
    v_over_sum: DVector<f64>,
}

/// Quantities of a finished stage reused by later stages.
struct StageData {
    rho: DVector<f64>,
    g: DMatrix<f64>,
    transport: DMatrix<f64>,
    lg: DMatrix<f64>,
    flux: DVector<f64>,
    grad_rho: DVector<f64>,
    avg_rho: DVector<f64>,
}

pub(crate) fn outer(col: &DVector<f64>, row: &DVector<f64>) -> DMatrix<f64> {
    col * row.transpose()
}

impl PeriodicSolver {
    pub fn new(
        grid: VelocityGrid,
        coll: CollisionOperator,
        ops: PeriodicOperators,
        tableau: DoubleButcherTableau,
        eps: f64,
        dt: f64,
    ) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(Error::Config(format!("eps must be positive, got {eps}")));
        }
        let violations = tableau.validate();
        if !violations.is_empty() {
            let v: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
            return Err(Error::Config(format!("tableau {} invalid: {}", tableau.name, v.join("; "))));
        }
        if !tableau.is_gsa() {
            return Err(Error::Config(format!("tableau {} is not globally stiffly accurate", tableau.name)));
        }
        let nv = grid.len();
        let m_sum: f64 = grid.m.iter().sum();
        let vm = grid.vm();
        let l_t = coll.matrix.transpose();
        let one_over_sum = DVector::from_element(nv, 1.0 / m_sum);
        let v_over_sum = DVector::from_iterator(nv, grid.v.iter().map(|v| v / m_sum));
        let mut s = Self {
            grid,
            coll,
            ops,
            tableau,
            eps,
            drift: 0.0,
            dt: f64::NAN,
            caches: Vec::new(),
            stage_cache: Vec::new(),
            vm,
            l_t,
            one_over_sum,
            v_over_sum,
        };
        s.set_dt(dt)?;
        Ok(s)
    }

    pub fn with_drift(mut self, drift: f64) -> Result<Self> {
        check_drift(drift, self.eps)?;
        self.drift = drift;
        Ok(self)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Rebuilds the per-stage factorizations; a no-op when `dt` is unchanged.
    pub fn set_dt(&mut self, dt: f64) -> Result<()> {
        if !(dt > 0.0) {
            return Err(Error::Config(format!("dt must be positive, got {dt}")));
        }
        if dt == self.dt {
            return Ok(());
        }
        self.dt = dt;
        self.caches.clear();
        self.stage_cache.clear();
        let lap = self.ops.laplacian();
        let nx = self.ops.nx;
        for j in 0..self.tableau.stages() {
            let a = self.tableau.ai(j, j);
            if let Some(idx) = self.caches.iter().position(|c| c.a_diag == a) {
                self.stage_cache.push(idx);
                continue;
            }
            let resolvent = self.coll.resolvent(self.eps, a * dt)?;
            let res_vm = resolvent.apply_range(&self.vm);
            let d = self.grid.bracket(&res_vm.iter().zip(&self.grid.v).map(|(r, v)| r * v).collect::<Vec<_>>());
            let rho_lu = if a != 0.0 {
                let mat = DMatrix::<f64>::identity(nx, nx) - (a * a * dt * dt * d) * &lap;
                let lu = mat.lu();
                if !lu.is_invertible() {
                    return Err(Error::Singular { stage: j, what: "rho stage matrix".into() });
                }
                Some(lu)
            } else {
                None
            };
            self.caches.push(StageCache { a_diag: a, resolvent, res_vm, rho_lu });
            self.stage_cache.push(self.caches.len() - 1);
        }
        Ok(())
    }

    /// Stage diffusion coefficient `bracket(v I_j(v M))`.
    pub fn stage_diffusion(&self, j: usize) -> f64 {
        let c = &self.caches[self.stage_cache[j]];
        self.grid.bracket(&c.res_vm.iter().zip(&self.grid.v).map(|(r, v)| r * v).collect::<Vec<_>>())
    }

    pub fn init(&self, profile: &dyn Fn(f64) -> f64, kind: InitKind) -> MicroMacroState {
        let rho = DVector::from_iterator(self.ops.nx, self.ops.rho_x().into_iter().map(profile));
        let at_g = DVector::from_iterator(self.ops.nx, self.ops.g_x().into_iter().map(profile));
        let fac = match kind {
            InitKind::WellPrepared => self.eps * self.eps,
            InitKind::NonWellPrepared => 1.0,
        };
        let shape = DVector::from_vec(self.grid.centered_v2m());
        let g = outer(&at_g, &shape) * fac;
        MicroMacroState { rho, g, time: 0.0 }
    }

    /// Builds a state from raw arrays after checking shapes and `bracket(g) = 0`.
    pub fn state_from_parts(&self, rho: DVector<f64>, g: DMatrix<f64>) -> Result<MicroMacroState> {
        if rho.len() != self.ops.nx || g.shape() != (self.ops.nx, self.grid.len()) {
            return Err(Error::Config("state shape does not match the grids".into()));
        }
        let s = MicroMacroState { rho, g, time: 0.0 };
        let b = s.max_bracket(&self.grid);
        if b > 1e-10 {
            return Err(Error::Config(format!("micro part has nonzero bracket {b:e}")));
        }
        Ok(s)
    }

    /// Per-point `bracket(v h)`.
    fn flux(&self, h: &DMatrix<f64>) -> DVector<f64> {
        h * &self.v_over_sum
    }

    /// `(I - Pi)(v+ G- + v- G+) g`.
    pub fn transport(&self, g: &DMatrix<f64>) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(g.nrows(), g.ncols());
        for k in 0..g.ncols() {
            let v = self.grid.v[k];
            let col: Vec<f64> = g.column(k).iter().copied().collect();
            let dcol = if v > 0.0 { self.ops.upwind_minus.apply(&col) } else { self.ops.upwind_plus.apply(&col) };
            for i in 0..g.nrows() {
                d[(i, k)] = v * dcol[i];
            }
        }
        let b = &d * &self.one_over_sum;
        d - outer(&b, &DVector::from_column_slice(&self.grid.m))
    }

    fn finish_stage(&self, rho: DVector<f64>, g: DMatrix<f64>, last: bool) -> StageData {
        let (transport, lg) =
            if last { (DMatrix::zeros(0, 0), DMatrix::zeros(0, 0)) } else { (self.transport(&g), &g * &self.l_t) };
        StageData {
            flux: self.flux(&g),
            grad_rho: self.ops.cen_g.apply_vec(&rho),
            avg_rho: self.ops.avg.apply_vec(&rho),
            transport,
            lg,
            rho,
            g,
        }
    }

    pub fn step(&self, state: &MicroMacroState) -> Result<MicroMacroState> {
        let t = &self.tableau;
        let s = t.stages();
        let (eps, dt, drift) = (self.eps, self.dt, self.drift);
        let nx = self.ops.nx;
        let mut stages: Vec<StageData> = Vec::with_capacity(s);
        for j in 0..s {
            let cache = &self.caches[self.stage_cache[j]];
            let a_jj = cache.a_diag;
            // Known part of the g-stage argument.
            let mut y = &state.g * (eps * eps);
            let mut source = DVector::<f64>::zeros(nx);
            for (k, st) in stages.iter().enumerate() {
                let (ae, ai) = (t.ae(j, k), t.ai(j, k));
                if ae != 0.0 {
                    y -= &st.transport * (eps * dt * ae);
                    if drift != 0.0 {
                        source += &st.avg_rho * (eps * dt * ae * drift);
                    }
                }
                if ai != 0.0 {
                    y += &st.lg * (dt * ai);
                    source -= &st.grad_rho * (eps * dt * ai);
                }
            }
            y += outer(&source, &self.vm);
            let iy = cache.resolvent.apply_range_rows(&y);

            // rho stage
            let mut rhs = state.rho.clone();
            let mut div_arg = DVector::<f64>::zeros(nx);
            for (k, st) in stages.iter().enumerate() {
                let ai = t.ai(j, k);
                if ai != 0.0 {
                    div_arg += &st.flux * (ai * dt / eps);
                }
            }
            if a_jj != 0.0 {
                div_arg += self.flux(&iy) * (a_jj * dt / eps);
            }
            rhs -= self.ops.cen_rho.apply_vec(&div_arg);
            let rho_j = match &cache.rho_lu {
                Some(lu) => {
                    lu.solve(&rhs).ok_or_else(|| Error::Singular { stage: j, what: "rho stage solve".into() })?
                }
                None => rhs,
            };

            // g stage
            let mut g_j = iy;
            if a_jj != 0.0 {
                let grad = self.ops.cen_g.apply_vec(&rho_j);
                g_j -= outer(&(grad * (eps * dt * a_jj)), &cache.res_vm);
            }
            if !rho_j.iter().all(|x| x.is_finite()) {
                return Err(Error::Singular { stage: j, what: "non-finite density".into() });
            }
            stages.push(self.finish_stage(rho_j, g_j, j + 1 == s));
        }
        let last = stages.pop().expect("at least one stage");
        Ok(MicroMacroState { rho: last.rho, g: last.g, time: state.time + dt })
    }

    /// Runs `round(t_final / dt)` steps, calling `observe` after each one.
    pub fn run_with(
        &self,
        state: &MicroMacroState,
        t_final: f64,
        mut observe: impl FnMut(usize, &MicroMacroState),
    ) -> Result<(MicroMacroState, RunSummary)> {
        let (n, snapped) = step_count(t_final, self.dt)?;
        let mut cur = state.clone();
        let mut max_bracket = cur.max_bracket(&self.grid);
        for i in 0..n {
            cur = self.step(&cur)?;
            max_bracket = max_bracket.max(cur.max_bracket(&self.grid));
            observe(i + 1, &cur);
        }
        let t_final = state.time + n as f64 * self.dt;
        Ok((cur, RunSummary { steps: n, t_final, snapped, max_bracket }))
    }

    pub fn run(&self, state: &MicroMacroState, t_final: f64) -> Result<MicroMacroState> {
        Ok(self.run_with(state, t_final, |_, _| {})?.0)
    }

    /// Literal first-order (ARS(1,1,1)) update, written out without the
    /// stage machinery. Used to cross-check [`PeriodicSolver::step`].
    pub fn step_first_order(&self, state: &MicroMacroState) -> Result<MicroMacroState> {
        let (eps, dt) = (self.eps, self.dt);
        let r = self.coll.resolvent(eps, dt)?;
        let d = self.coll.diffusion_tensor(&self.grid, eps, dt)?;
        let nx = self.ops.nx;
        let tg = self.transport(&state.g);
        let mut arg = &state.g * eps - &tg * dt;
        if self.drift != 0.0 {
            arg += outer(&self.ops.avg.apply_vec(&state.rho), &self.vm) * (dt * self.drift);
        }
        let flux = self.flux(&r.apply_range_rows(&arg));
        let rhs = &state.rho - self.ops.cen_rho.apply_vec(&flux) * dt;
        let mat = DMatrix::<f64>::identity(nx, nx) - self.ops.laplacian() * (dt * dt * d);
        let rho =
            mat.lu().solve(&rhs).ok_or_else(|| Error::Singular { stage: 1, what: "first-order rho solve".into() })?;
        let mut garg =
            &state.g * (eps * eps) - &tg * (eps * dt) - outer(&self.ops.cen_g.apply_vec(&rho), &self.vm) * (eps * dt);
        if self.drift != 0.0 {
            garg += outer(&self.ops.avg.apply_vec(&state.rho), &self.vm) * (eps * dt * self.drift);
        }
        let g = r.apply_range_rows(&garg);
        Ok(MicroMacroState { rho, g, time: state.time + dt })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stencil::GridKind;
    use crate::tableau;
    use std::f64::consts::PI;

    fn solver(name: &str, eps: f64, dt: f64, kind: GridKind) -> PeriodicSolver {
        let grid = VelocityGrid::default_grid();
        let coll = CollisionOperator::bgk(&grid);
        let ops = match kind {
            GridKind::Colocated => PeriodicOperators::new(24, 2.0 * PI, kind, 3, 4).unwrap(),
            GridKind::Staggered => PeriodicOperators::new(24, 2.0 * PI, kind, 1, 2).unwrap(),
        };
        PeriodicSolver::new(grid, coll, ops, tableau::builtin(name).unwrap(), eps, dt).unwrap()
    }

    fn profile(x: f64) -> f64 {
        1.0 + x.cos()
    }

    #[test]
    fn well_prepared_bound_and_bracket() {
        let s = solver("DP1_A242", 1e-4, 0.01, GridKind::Colocated);
        let st = s.init(&profile, InitKind::WellPrepared);
        let shape = s.grid.centered_v2m();
        let bound = 1e-8 * shape.iter().fold(0.0f64, |a, b| a.max(b.abs())) * 2.0;
        assert!(st.g.amax() <= bound * (1.0 + 1e-12));
        assert!(st.max_bracket(&s.grid) < 1e-14);
        let nwp = s.init(&profile, InitKind::NonWellPrepared);
        assert!(nwp.g.amax() > 0.1);
        assert!(nwp.max_bracket(&s.grid) < 1e-14);
        let zero = s.init(&|_| 0.0, InitKind::NonWellPrepared);
        assert_eq!(zero.g.amax(), 0.0);
    }

    #[test]
    fn transport_properties() {
        let s = solver("ARS111", 1.0, 0.01, GridKind::Colocated);
        let z = DMatrix::zeros(24, 10);
        assert_eq!(s.transport(&z), z);
        let g = DMatrix::from_fn(24, 10, |i, k| ((i * 7 + k * 3) as f64).sin());
        let tg = s.transport(&g);
        for i in 0..24 {
            let row: Vec<f64> = tg.row(i).iter().copied().collect();
            assert!(s.grid.bracket(&row).abs() < 1e-13 * tg.amax());
        }
    }

    #[test]
    fn transport_first_order_refinement() {
        // g = sin(x) v M should give (I - Pi)(v^2 M) cos(x) up to O(dx).
        let mut errs = Vec::new();
        let ns = [40usize, 80, 160];
        for &n in &ns {
            let grid = VelocityGrid::default_grid();
            let coll = CollisionOperator::bgk(&grid);
            let ops = PeriodicOperators::new(n, 2.0 * PI, GridKind::Staggered, 1, 2).unwrap();
            let s = PeriodicSolver::new(grid, coll, ops, tableau::ars111(), 1.0, 0.1).unwrap();
            let x = s.ops.g_x();
            let sx = DVector::from_iterator(n, x.iter().map(|x| x.sin()));
            let cx = DVector::from_iterator(n, x.iter().map(|x| x.cos()));
            let g = outer(&sx, &s.grid.vm());
            let exact = outer(&cx, &DVector::from_vec(s.grid.centered_v2m()));
            errs.push((s.transport(&g) - exact).amax());
        }
        let hs: Vec<f64> = ns.iter().map(|&n| 1.0 / n as f64).collect();
        let p = crate::analysis::observed_order(&errs, &hs).unwrap();
        assert!((p - 1.0).abs() < 0.15, "{p}");
    }

    #[test]
    fn zero_data_stays_zero() {
        let s = solver("ARS443", 1e-3, 0.01, GridKind::Colocated);
        let st = s.init(&|_| 0.0, InitKind::NonWellPrepared);
        let out = s.run(&st, 0.1).unwrap();
        assert_eq!(out.rho.amax(), 0.0);
        assert_eq!(out.g.amax(), 0.0);
    }

    #[test]
    fn constant_density_zero_g_is_stationary() {
        let s = solver("DP2_A242", 0.5, 0.01, GridKind::Colocated);
        let st = s.init(&|_| 2.0, InitKind::WellPrepared);
        let st = MicroMacroState { g: DMatrix::zeros(24, 10), ..st };
        let out = s.step(&st).unwrap();
        assert!((out.rho.add_scalar(-2.0)).amax() < 1e-14);
        assert!(out.g.amax() < 1e-14);
    }

    #[test]
    fn ars111_matches_first_order_form() {
        for kind in [GridKind::Colocated, GridKind::Staggered] {
            for &eps in &[1.0, 1e-3] {
                let s = solver("ARS111", eps, 0.02, kind);
                let st = s.init(&profile, InitKind::NonWellPrepared);
                let a = s.step(&st).unwrap();
                let b = s.step_first_order(&st).unwrap();
                let d = (&a.rho - &b.rho).amax();
                assert!(d < 1e-14 * b.rho.amax().max(1.0), "{kind:?} {eps} {d:e}");
                assert!((&a.g - &b.g).amax() < 1e-13 * b.g.amax().max(1.0));
            }
        }
    }

    #[test]
    fn mass_conserved_and_bracket_zero() {
        for name in ["DP1_A242", "ARS443"] {
            let s = solver(name, 0.3, 0.01, GridKind::Colocated);
            let st = s.init(&profile, InitKind::NonWellPrepared);
            let m0 = st.mass();
            let (out, summary) = s.run_with(&st, 1.0, |_, _| {}).unwrap();
            assert_eq!(summary.steps, 100);
            assert!((out.mass() - m0).abs() < 1e-10);
            assert!(summary.max_bracket < 1e-9);
        }
    }

    #[test]
    fn t_zero_returns_initial() {
        let s = solver("DP_A121", 1.0, 0.01, GridKind::Colocated);
        let st = s.init(&profile, InitKind::WellPrepared);
        let (out, summary) = s.run_with(&st, 0.0, |_, _| {}).unwrap();
        assert_eq!(out, st);
        assert_eq!(summary.steps, 0);
        let (_, snapped) = step_count(0.105, 0.01).unwrap();
        assert!(snapped);
    }

    #[test]
    fn rejects_bad_configuration() {
        let grid = VelocityGrid::default_grid();
        let coll = CollisionOperator::bgk(&grid);
        let ops = PeriodicOperators::new(10, 1.0, GridKind::Colocated, 1, 2).unwrap();
        assert!(PeriodicSolver::new(grid.clone(), coll.clone(), ops.clone(), tableau::ars111(), 0.0, 0.1).is_err());
        assert!(PeriodicSolver::new(grid.clone(), coll.clone(), ops.clone(), tableau::ars111(), 1.0, -0.1).is_err());
        let not_gsa = tableau::DoubleButcherTableau::from_rows(
            "x",
            &[vec![0.0, 0.0], vec![0.5, 0.0]],
            &[vec![0.0, 0.0], vec![0.0, 0.5]],
        )
        .unwrap();
        assert!(PeriodicSolver::new(grid.clone(), coll.clone(), ops.clone(), not_gsa, 1.0, 0.1).is_err());
        let s = PeriodicSolver::new(grid, coll, ops, tableau::ars111(), 1.0, 0.1).unwrap();
        assert!(s.with_drift(2.0).is_err());
    }
}
