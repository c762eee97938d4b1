//! Micro-macro solver on a bounded interval with kinetic inflow data.
//!
//! The micro part is split with the half-space projector `Pi-` instead of
//! `Pi`, so that `g_bar` carries no incoming half-moment and the boundary
//! value of `rho_bar` is known. Unknowns: `rho_bar` on the `N_x - 2` interior
//! nodes and `g_bar` on the `N_x - 1` half points. The right boundary has zero
//! inflow.

use nalgebra::{DMatrix, DVector, LU};

use crate::collision::{CollisionOperator, StageResolvent};
use crate::error::{Error, Result};
use crate::periodic::{outer, step_count, RunSummary};
use crate::stencil::{boundary_rho_vector, BoundaryMatrices};
use crate::tableau::DoubleButcherTableau;
use crate::velocity::{HalfSet, VelocityGrid};

/// Incoming distribution at the left boundary (only `v > 0` is used).
#[derive(Clone, Debug, PartialEq)]
pub enum InflowData {
    /// `f_b = value * M`.
    Equilibrium(f64),
    /// `f_b = c v M`.
    ScaledVelocity(f64),
    /// Values at every velocity point; outgoing entries are ignored.
    Table(Vec<f64>),
}

/// How the ghost value left of the first half point is formed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GhostRule {
    /// Ghost equals the boundary micro value `f_b - rho_bar_b M`.
    Direct,
    /// Ghost is reflected through the boundary value:
    /// `2 (f_b - rho_bar_b M) - g_bar_{1/2}`.
    Reflected,
}

#[derive(Clone, Debug)]
pub struct InflowBoundary {
    pub f_b: Vec<f64>,
    pub rho_bar: f64,
    pub g_b: Vec<f64>,
    pub ghost: GhostRule,
}

impl InflowBoundary {
    pub fn new(grid: &VelocityGrid, data: &InflowData, ghost: GhostRule) -> Result<Self> {
        let nv = grid.len();
        let full: Vec<f64> = match data {
            InflowData::Equilibrium(r) => grid.m.iter().map(|m| r * m).collect(),
            InflowData::ScaledVelocity(c) => grid.vm().iter().map(|x| c * x).collect(),
            InflowData::Table(t) => {
                if t.len() != nv {
                    return Err(Error::Config(format!("inflow table has {} entries, expected {nv}", t.len())));
                }
                t.clone()
            }
        };
        if full.iter().any(|x| !x.is_finite()) {
            return Err(Error::Config("inflow data not finite".into()));
        }
        let f_b: Vec<f64> = (0..nv).map(|k| if grid.in_half(k, HalfSet::Minus) { full[k] } else { 0.0 }).collect();
        let rho_bar = grid.half_bracket(&f_b, HalfSet::Minus)?;
        let g_b =
            (0..nv).map(|k| if grid.in_half(k, HalfSet::Minus) { f_b[k] - rho_bar * grid.m[k] } else { 0.0 }).collect();
        Ok(Self { f_b, rho_bar, g_b, ghost })
    }

    /// Direct ghost for equilibrium data, reflected otherwise.
    pub fn with_default_ghost(grid: &VelocityGrid, data: &InflowData) -> Result<Self> {
        let ghost = match data {
            InflowData::Equilibrium(_) => GhostRule::Direct,
            _ => GhostRule::Reflected,
        };
        Self::new(grid, data, ghost)
    }

    pub fn zero(grid: &VelocityGrid) -> Self {
        Self::new(grid, &InflowData::Equilibrium(0.0), GhostRule::Direct).expect("zero inflow")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InflowState {
    /// Density on interior nodes.
    pub rho: DVector<f64>,
    pub rho_bar: DVector<f64>,
    /// `(N_x - 1) x N_v`.
    pub g_bar: DMatrix<f64>,
    pub time: f64,
}

struct StageCache {
    a_diag: f64,
    resolvent: StageResolvent,
    /// Resolvent applied to `J = (I - Pi-)(v M)`.
    res_j: DVector<f64>,
    lu: LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

struct StageData {
    rho_bar: DVector<f64>,
    g: DMatrix<f64>,
    transport: DMatrix<f64>,
    lg: DMatrix<f64>,
    flux: DVector<f64>,
    grad: DVector<f64>,
}

pub struct InflowSolver {
    pub grid: VelocityGrid,
    pub coll: CollisionOperator,
    pub mats: BoundaryMatrices,
    pub tableau: DoubleButcherTableau,
    pub eps: f64,
    pub left: InflowBoundary,
    dt: f64,
    caches: Vec<StageCache>,
    stage_cache: Vec<usize>,
    tilde: DMatrix<f64>,
    tilde_t: DMatrix<f64>,
    q_t: DMatrix<f64>,
    j_vec: DVector<f64>,
    rho_bd: DVector<f64>,
    v_over_sum: DVector<f64>,
    one_over_sum: DVector<f64>,
}

impl InflowSolver {
    pub fn new(
        grid: VelocityGrid,
        coll: CollisionOperator,
        mats: BoundaryMatrices,
        tableau: DoubleButcherTableau,
        eps: f64,
        dt: f64,
        left: InflowBoundary,
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
        let q = DMatrix::<f64>::identity(nv, nv) - grid.pi_minus_matrix();
        let tilde = coll.tilde(&grid);
        let j_vec = &q * grid.vm();
        let m_sum: f64 = grid.m.iter().sum();
        let rho_bd = boundary_rho_vector(left.rho_bar, 0.0, mats.dx, mats.nx);
        let v_over_sum = DVector::from_iterator(nv, grid.v.iter().map(|v| v / m_sum));
        let one_over_sum = DVector::from_element(nv, 1.0 / m_sum);
        let mut s = Self {
            tilde_t: tilde.transpose(),
            tilde,
            q_t: q.transpose(),
            grid,
            coll,
            mats,
            tableau,
            eps,
            left,
            dt: f64::NAN,
            caches: Vec::new(),
            stage_cache: Vec::new(),
            j_vec,
            rho_bd,
            v_over_sum,
            one_over_sum,
        };
        s.set_dt(dt)?;
        Ok(s)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

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
        let n = self.mats.nx - 2;
        let avg_grad = &self.mats.avg * &self.mats.cen_g;
        let lap = &self.mats.cen_rho * &self.mats.cen_g;
        let pim = self.grid.pi_minus_matrix();
        for j in 0..self.tableau.stages() {
            let a = self.tableau.ai(j, j);
            if let Some(idx) = self.caches.iter().position(|c| c.a_diag == a) {
                self.stage_cache.push(idx);
                continue;
            }
            let resolvent = StageResolvent::new(&self.tilde, &pim, self.eps, a * dt)?;
            let res_j = resolvent.apply_range(&self.j_vec);
            let e = self.grid.bracket(res_j.as_slice());
            let vj: Vec<f64> = res_j.iter().zip(&self.grid.v).map(|(r, v)| r * v).collect();
            let d = self.grid.bracket(&vj);
            let mat =
                DMatrix::<f64>::identity(n, n) - (self.eps * dt * a * e) * &avg_grad - (a * a * dt * dt * d) * &lap;
            let lu = mat.lu();
            if !lu.is_invertible() {
                return Err(Error::Singular { stage: j, what: "inflow stage matrix".into() });
            }
            self.caches.push(StageCache { a_diag: a, resolvent, res_j, lu });
            self.stage_cache.push(self.caches.len() - 1);
        }
        Ok(())
    }

    pub fn zero_state(&self) -> InflowState {
        let n = self.mats.nx;
        InflowState {
            rho: DVector::zeros(n - 2),
            rho_bar: DVector::zeros(n - 2),
            g_bar: DMatrix::zeros(n - 1, self.grid.len()),
            time: 0.0,
        }
    }

    /// Whether a signal from the left boundary can cross the domain by
    /// `t_final` at the largest speed `v_max / eps`.
    pub fn signal_reaches_right(&self, t_final: f64) -> bool {
        let length = self.mats.dx * (self.mats.nx - 1) as f64;
        t_final * self.grid.v_max / self.eps > length
    }

    /// Closes `g_bar` with one ghost value on each side.
    pub fn close(&self, g: &DMatrix<f64>) -> DMatrix<f64> {
        let (n, nv) = g.shape();
        let mut gc = DMatrix::zeros(n + 2, nv);
        gc.rows_mut(1, n).copy_from(g);
        for k in 0..nv {
            if self.grid.in_half(k, HalfSet::Minus) {
                gc[(0, k)] = match self.left.ghost {
                    GhostRule::Direct => self.left.g_b[k],
                    GhostRule::Reflected => 2.0 * self.left.g_b[k] - g[(0, k)],
                };
            }
        }
        gc
    }

    /// `(I - Pi-)(v+ B- + v- B+) g_closed`.
    pub fn transport(&self, gc: &DMatrix<f64>) -> DMatrix<f64> {
        let bm = &self.mats.upwind_minus * gc;
        let bp = &self.mats.upwind_plus * gc;
        let mut d = DMatrix::zeros(bm.nrows(), bm.ncols());
        for k in 0..gc.ncols() {
            let v = self.grid.v[k];
            let src = if v > 0.0 { &bm } else { &bp };
            for i in 0..d.nrows() {
                d[(i, k)] = v * src[(i, k)];
            }
        }
        d * &self.q_t
    }

    fn bracket_rows(&self, h: &DMatrix<f64>) -> DVector<f64> {
        h * &self.one_over_sum
    }

    fn flux(&self, h: &DMatrix<f64>) -> DVector<f64> {
        h * &self.v_over_sum
    }

    pub fn step(&self, state: &InflowState) -> Result<InflowState> {
        let t = &self.tableau;
        let s = t.stages();
        let (eps, dt) = (self.eps, self.dt);
        let mut stages: Vec<StageData> = Vec::with_capacity(s);
        for j in 0..s {
            let cache = &self.caches[self.stage_cache[j]];
            let a_jj = cache.a_diag;
            let c_j: f64 = (0..=j).map(|k| t.ai(j, k)).sum();
            let mut y = &state.g_bar * (eps * eps);
            let mut source = &self.rho_bd * (-eps * dt * c_j);
            for (k, st) in stages.iter().enumerate() {
                let (ae, ai) = (t.ae(j, k), t.ai(j, k));
                if ae != 0.0 {
                    y -= &st.transport * (eps * dt * ae);
                }
                if ai != 0.0 {
                    y += &st.lg * (dt * ai);
                    source -= &st.grad * (eps * dt * ai);
                }
            }
            y += outer(&source, &self.j_vec);
            let iy = cache.resolvent.apply_range_rows(&y);

            let mut div_arg = self.flux(&iy) * (a_jj * dt / eps);
            for (k, st) in stages.iter().enumerate() {
                let ai = t.ai(j, k);
                if ai != 0.0 {
                    div_arg += &st.flux * (ai * dt / eps);
                }
            }
            let rhs = &state.rho - &self.mats.cen_rho * div_arg - &self.mats.avg * self.bracket_rows(&iy);
            let rho_bar =
                cache.lu.solve(&rhs).ok_or_else(|| Error::Singular { stage: j, what: "inflow stage solve".into() })?;
            if !rho_bar.iter().all(|x| x.is_finite()) {
                return Err(Error::Singular { stage: j, what: "non-finite density".into() });
            }
            let grad = &self.mats.cen_g * &rho_bar;
            let g = iy - outer(&(&grad * (eps * dt * a_jj)), &cache.res_j);
            let last = j + 1 == s;
            let (transport, lg) = if last {
                (DMatrix::zeros(0, 0), DMatrix::zeros(0, 0))
            } else {
                (self.transport(&self.close(&g)), &g * &self.tilde_t)
            };
            stages.push(StageData { flux: self.flux(&g), grad, transport, lg, rho_bar, g });
        }
        let last = stages.pop().expect("at least one stage");
        let rho = &last.rho_bar + &self.mats.avg * self.bracket_rows(&last.g);
        Ok(InflowState { rho, rho_bar: last.rho_bar, g_bar: last.g, time: state.time + dt })
    }

    pub fn run_with(
        &self,
        state: &InflowState,
        t_final: f64,
        mut observe: impl FnMut(usize, &InflowState),
    ) -> Result<(InflowState, RunSummary)> {
        let (n, snapped) = step_count(t_final, self.dt)?;
        let mut cur = state.clone();
        for i in 0..n {
            cur = self.step(&cur)?;
            observe(i + 1, &cur);
        }
        let t_final = state.time + n as f64 * self.dt;
        Ok((cur, RunSummary { steps: n, t_final, snapped, max_bracket: 0.0 }))
    }

    pub fn run(&self, state: &InflowState, t_final: f64) -> Result<InflowState> {
        Ok(self.run_with(state, t_final, |_, _| {})?.0)
    }

    /// First-order implicit-explicit step solved as one coupled linear
    /// system in `(rho_bar, g_bar)`, without eliminating the micro part.
    pub fn step_first_order(&self, state: &InflowState) -> Result<InflowState> {
        let (eps, dt) = (self.eps, self.dt);
        let nv = self.grid.len();
        let nr = self.mats.nx - 2;
        let ng = self.mats.nx - 1;
        let size = nr + ng * nv;
        let gi = |i: usize, k: usize| nr + i * nv + k;
        let mut a = DMatrix::<f64>::zeros(size, size);
        let mut b = DVector::<f64>::zeros(size);
        let m_sum: f64 = self.grid.m.iter().sum();

        // rho_bar + B_avg <g> + dt/eps B_rho <v g> = rho^n
        for r in 0..nr {
            a[(r, r)] = 1.0;
            b[r] = state.rho[r];
            for i in 0..ng {
                let (wa, wr) = (self.mats.avg[(r, i)], self.mats.cen_rho[(r, i)]);
                if wa == 0.0 && wr == 0.0 {
                    continue;
                }
                for k in 0..nv {
                    a[(r, gi(i, k))] += (wa + wr * dt / eps * self.grid.v[k]) / m_sum;
                }
            }
        }
        // (eps^2 - dt Lt) g + eps dt J (B_g rho_bar) = eps^2 g^n - eps dt T g^n - eps dt J rho_bd
        let tg = self.transport(&self.close(&state.g_bar));
        for i in 0..ng {
            for k in 0..nv {
                let row = gi(i, k);
                for l in 0..nv {
                    a[(row, gi(i, l))] = -dt * self.tilde[(k, l)];
                }
                a[(row, row)] += eps * eps;
                for r in 0..nr {
                    a[(row, r)] += eps * dt * self.j_vec[k] * self.mats.cen_g[(i, r)];
                }
                b[row] =
                    eps * eps * state.g_bar[(i, k)] - eps * dt * tg[(i, k)] - eps * dt * self.j_vec[k] * self.rho_bd[i];
            }
        }
        let sol =
            a.lu().solve(&b).ok_or_else(|| Error::Singular { stage: 1, what: "coupled first-order system".into() })?;
        let rho_bar = DVector::from_iterator(nr, sol.iter().take(nr).copied());
        let g_bar = DMatrix::from_fn(ng, nv, |i, k| sol[gi(i, k)]);
        let rho = &rho_bar + &self.mats.avg * self.bracket_rows(&g_bar);
        Ok(InflowState { rho, rho_bar, g_bar, time: state.time + dt })
    }
}
