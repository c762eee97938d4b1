//! Scenario builders, convergence studies and model comparisons.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::analysis::{fit_order, l2_error, linf_error, OrderFit};
use crate::collision::CollisionOperator;
use crate::error::{Error, Result};
use crate::inflow::{GhostRule, InflowBoundary, InflowData, InflowSolver, InflowState};
use crate::periodic::{InitKind, MicroMacroState, PeriodicSolver};
use crate::reference::{klar_boundary_rho, BgkInflow, BgkPeriodic, DiffusionDirichlet, DiffusionPeriodic};
use crate::stencil::{BoundaryMatrices, GridKind, PeriodicOperators};
use crate::tableau::DoubleButcherTableau;
use crate::velocity::VelocityGrid;

/// Initial density profiles.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Profile {
    OnePlusCos,
    Sin,
    Constant(f64),
}

impl Profile {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Profile::OnePlusCos => 1.0 + x.cos(),
            Profile::Sin => x.sin(),
            Profile::Constant(c) => c,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "one_plus_cos" | "1+cos" => Ok(Profile::OnePlusCos),
            "sin" => Ok(Profile::Sin),
            other => {
                other.strip_prefix("constant:").and_then(|v| v.trim().parse().ok()).map(Profile::Constant).ok_or_else(
                    || Error::Config(format!("unknown profile `{s}` (one_plus_cos, sin, constant:<value>)")),
                )
            }
        }
    }

    pub fn name(&self) -> String {
        match self {
            Profile::OnePlusCos => "one_plus_cos".into(),
            Profile::Sin => "sin".into(),
            Profile::Constant(c) => format!("constant:{c}"),
        }
    }
}

/// Collision operator choice shared by the scenarios.
#[derive(Clone, Debug)]
pub enum CollisionChoice {
    Bgk,
    Custom(DMatrix<f64>),
}

impl CollisionChoice {
    pub fn build(&self, grid: &VelocityGrid) -> Result<CollisionOperator> {
        match self {
            CollisionChoice::Bgk => Ok(CollisionOperator::bgk(grid)),
            CollisionChoice::Custom(m) => CollisionOperator::custom(grid, m.clone()),
        }
    }
}

#[derive(Clone, Debug)]
pub struct PeriodicScenario {
    pub nx: usize,
    pub length: f64,
    pub kind: GridKind,
    pub upwind_order: usize,
    pub central_order: usize,
    pub v_max: f64,
    pub nv: usize,
    pub eps: f64,
    pub drift: f64,
    pub tableau: DoubleButcherTableau,
    pub init: InitKind,
    pub profile: Profile,
    pub collision: CollisionChoice,
}

impl PeriodicScenario {
    /// Diffusion-limit setup: `[0, 2 pi]`, third-order upwind with
    /// fourth-order central differences on a colocated grid.
    pub fn diffusion(tableau: DoubleButcherTableau, eps: f64, init: InitKind) -> Self {
        Self {
            nx: 50,
            length: 2.0 * PI,
            kind: GridKind::Colocated,
            upwind_order: 3,
            central_order: 4,
            v_max: 5.0,
            nv: 10,
            eps,
            drift: 0.0,
            tableau,
            init,
            profile: Profile::OnePlusCos,
            collision: CollisionChoice::Bgk,
        }
    }

    /// Advection-diffusion setup: staggered first-order grid, `N_x = 20`,
    /// `rho_0 = sin x`, drift `A = 0.5`.
    pub fn advdiff(tableau: DoubleButcherTableau, eps: f64, init: InitKind) -> Self {
        Self {
            nx: 20,
            kind: GridKind::Staggered,
            upwind_order: 1,
            central_order: 2,
            drift: 0.5,
            profile: Profile::Sin,
            ..Self::diffusion(tableau, eps, init)
        }
    }

    pub fn grid(&self) -> Result<VelocityGrid> {
        VelocityGrid::new(self.v_max, self.nv)
    }

    pub fn operators(&self) -> Result<PeriodicOperators> {
        PeriodicOperators::new(self.nx, self.length, self.kind, self.upwind_order, self.central_order)
    }

    pub fn solver(&self, dt: f64) -> Result<PeriodicSolver> {
        let grid = self.grid()?;
        let coll = self.collision.build(&grid)?;
        PeriodicSolver::new(grid, coll, self.operators()?, self.tableau.clone(), self.eps, dt)?.with_drift(self.drift)
    }

    pub fn initial(&self, solver: &PeriodicSolver) -> MicroMacroState {
        let p = self.profile;
        solver.init(&move |x| p.eval(x), self.init)
    }

    pub fn run(&self, dt: f64, t_final: f64) -> Result<MicroMacroState> {
        let s = self.solver(dt)?;
        s.run(&self.initial(&s), t_final)
    }

    pub fn kappa(&self) -> Result<f64> {
        let grid = self.grid()?;
        Ok(self.collision.build(&grid)?.kappa(&grid))
    }

    /// Limit solver with the implicit weights of the same tableau.
    pub fn diffusion_reference(&self, dt: f64) -> Result<DiffusionPeriodic> {
        DiffusionPeriodic::new(self.operators()?, self.tableau.clone(), self.kappa()?, self.drift, dt)
    }

    /// Full distribution matching `init`, sampled at the density nodes. On a
    /// staggered grid `g` is resampled from the profile there.
    pub fn kinetic_initial(&self, solver: &PeriodicSolver, init: &MicroMacroState) -> DMatrix<f64> {
        let g0 = match self.kind {
            GridKind::Colocated => init.g.clone(),
            GridKind::Staggered => {
                let p = self.profile;
                let fac = if self.init == InitKind::WellPrepared { self.eps * self.eps } else { 1.0 };
                let at = DVector::from_iterator(self.nx, solver.ops.rho_x().into_iter().map(|x| p.eval(x)));
                crate::periodic::outer(&at, &DVector::from_vec(solver.grid.centered_v2m())) * fac
            }
        };
        crate::periodic::outer(&init.rho, &solver.grid.m_vec()) + g0
    }

    pub fn bgk_reference(&self, dt: f64) -> Result<BgkPeriodic> {
        let grid = self.grid()?;
        let coll = self.collision.build(&grid)?;
        BgkPeriodic::new(grid, coll, self.operators()?, self.tableau.clone(), self.eps, dt)?.with_drift(self.drift)
    }
}

#[derive(Clone, Debug)]
pub struct InflowScenario {
    pub nx: usize,
    pub length: f64,
    pub v_max: f64,
    pub nv: usize,
    pub eps: f64,
    pub tableau: DoubleButcherTableau,
    pub data: InflowData,
    /// `None` picks the direct rule for equilibrium data and the reflected
    /// rule otherwise.
    pub ghost: Option<GhostRule>,
    pub collision: CollisionChoice,
}

impl InflowScenario {
    /// `[0, 2]`, `N_x = 20`, equilibrium inflow `f_b = M`.
    pub fn standard(tableau: DoubleButcherTableau, eps: f64) -> Self {
        Self {
            nx: 20,
            length: 2.0,
            v_max: 5.0,
            nv: 10,
            eps,
            tableau,
            data: InflowData::Equilibrium(1.0),
            ghost: None,
            collision: CollisionChoice::Bgk,
        }
    }

    pub fn grid(&self) -> Result<VelocityGrid> {
        VelocityGrid::new(self.v_max, self.nv)
    }

    pub fn boundary(&self, grid: &VelocityGrid) -> Result<InflowBoundary> {
        match self.ghost {
            Some(rule) => InflowBoundary::new(grid, &self.data, rule),
            None => InflowBoundary::with_default_ghost(grid, &self.data),
        }
    }

    pub fn solver(&self, dt: f64) -> Result<InflowSolver> {
        let grid = self.grid()?;
        let coll = self.collision.build(&grid)?;
        let left = self.boundary(&grid)?;
        InflowSolver::new(
            grid,
            coll,
            BoundaryMatrices::new(self.nx, self.length)?,
            self.tableau.clone(),
            self.eps,
            dt,
            left,
        )
    }

    pub fn run(&self, dt: f64, t_final: f64) -> Result<InflowState> {
        let s = self.solver(dt)?;
        s.run(&s.zero_state(), t_final)
    }

    pub fn kappa(&self) -> Result<f64> {
        let grid = self.grid()?;
        Ok(self.collision.build(&grid)?.kappa(&grid))
    }

    /// Dirichlet value for the limit equation: the incoming half average
    /// for equilibrium data, the Marshak-type value otherwise.
    pub fn limit_boundary_value(&self) -> Result<f64> {
        let grid = self.grid()?;
        let b = self.boundary(&grid)?;
        Ok(match self.data {
            InflowData::Equilibrium(_) => b.rho_bar,
            _ => klar_boundary_rho(&grid, &b.f_b, self.kappa()?),
        })
    }

    pub fn diffusion_reference(&self, dt: f64) -> Result<DiffusionDirichlet> {
        DiffusionDirichlet::new(
            BoundaryMatrices::new(self.nx, self.length)?,
            self.tableau.clone(),
            self.kappa()?,
            self.limit_boundary_value()?,
            0.0,
            dt,
        )
    }

    pub fn bgk_reference(&self, dt: f64) -> Result<BgkInflow> {
        let grid = self.grid()?;
        let coll = self.collision.build(&grid)?;
        let f_b = self.boundary(&grid)?.f_b;
        BgkInflow::new(grid, coll, self.nx, self.length, self.tableau.clone(), self.eps, dt, f_b)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StudyParameter {
    Dt,
    Nx,
}

impl StudyParameter {
    pub fn column(&self) -> &'static str {
        match self {
            StudyParameter::Dt => "dt",
            StudyParameter::Nx => "nx",
        }
    }
}

/// Errors of one scheme at one `eps` against a reference, with fitted orders.
#[derive(Clone, Debug)]
pub struct ConvergenceStudy {
    pub scheme: String,
    pub eps: f64,
    pub parameter: StudyParameter,
    pub values: Vec<f64>,
    pub l2: Vec<f64>,
    pub linf: Vec<f64>,
    pub fit_l2: OrderFit,
    pub fit_linf: OrderFit,
    pub reference: String,
}

impl ConvergenceStudy {
    fn new(
        scheme: &str,
        eps: f64,
        parameter: StudyParameter,
        values: Vec<f64>,
        l2: Vec<f64>,
        linf: Vec<f64>,
        reference: String,
    ) -> Result<Self> {
        // Step sizes for the fit: dt directly, 1/N_x for space.
        let steps: Vec<f64> = match parameter {
            StudyParameter::Dt => values.clone(),
            StudyParameter::Nx => values.iter().map(|n| 1.0 / n).collect(),
        };
        let fit_l2 = fit_nonzero(&l2, &steps)?;
        let fit_linf = fit_nonzero(&linf, &steps)?;
        Ok(Self { scheme: scheme.into(), eps, parameter, values, l2, linf, fit_l2, fit_linf, reference })
    }

    pub fn slope(&self) -> f64 {
        self.fit_l2.slope
    }
}

/// Exact zeros (a run identical to the reference) carry no order
/// information and are left out; with fewer than three points left the
/// slope is NaN.
fn fit_nonzero(errors: &[f64], steps: &[f64]) -> Result<OrderFit> {
    let keep: Vec<usize> = (0..errors.len()).filter(|&i| errors[i] != 0.0).collect();
    if keep.len() < 3 {
        return Ok(OrderFit { slope: f64::NAN, used: Vec::new() });
    }
    let e: Vec<f64> = keep.iter().map(|&i| errors[i]).collect();
    let h: Vec<f64> = keep.iter().map(|&i| steps[i]).collect();
    let fit = fit_order(&e, &h)?;
    Ok(OrderFit { slope: fit.slope, used: fit.used.iter().map(|&j| keep[j]).collect() })
}

fn sorted_coarse_to_fine(dts: &[f64]) -> Result<Vec<f64>> {
    if dts.len() < 3 {
        return Err(Error::Config(format!("need at least 3 step sizes, got {}", dts.len())));
    }
    let mut v = dts.to_vec();
    v.sort_by(|a, b| b.partial_cmp(a).expect("finite step sizes"));
    Ok(v)
}

/// Time self-convergence of a periodic scenario against `ref_dt`.
pub fn time_convergence(sc: &PeriodicScenario, dts: &[f64], ref_dt: f64, t_final: f64) -> Result<ConvergenceStudy> {
    let dts = sorted_coarse_to_fine(dts)?;
    let mut all = dts.clone();
    all.push(ref_dt);
    let rhos: Vec<DVector<f64>> =
        all.par_iter().map(|&dt| sc.run(dt, t_final).map(|s| s.rho)).collect::<Result<_>>()?;
    let (reference, runs) = rhos.split_last().expect("reference run");
    errors_against(
        sc.tableau.name.as_str(),
        sc.eps,
        dts,
        runs,
        reference,
        sc.length / sc.nx as f64,
        format!("self dt={ref_dt}"),
    )
}

/// Time convergence of a periodic scenario against the limit solver run
/// with the same implicit weights at `ref_dt`.
pub fn time_convergence_vs_diffusion(
    sc: &PeriodicScenario,
    dts: &[f64],
    ref_dt: f64,
    t_final: f64,
) -> Result<ConvergenceStudy> {
    let dts = sorted_coarse_to_fine(dts)?;
    let runs: Vec<DVector<f64>> =
        dts.par_iter().map(|&dt| sc.run(dt, t_final).map(|s| s.rho)).collect::<Result<_>>()?;
    let solver = sc.solver(ref_dt)?;
    let rho0 = sc.initial(&solver).rho;
    let reference = sc.diffusion_reference(ref_dt)?.run(&rho0, t_final)?;
    errors_against(
        sc.tableau.name.as_str(),
        sc.eps,
        dts,
        &runs,
        &reference,
        sc.length / sc.nx as f64,
        format!("diffusion dt={ref_dt}"),
    )
}

/// Time self-convergence of an inflow scenario from zero initial data.
pub fn time_convergence_inflow(
    sc: &InflowScenario,
    dts: &[f64],
    ref_dt: f64,
    t_final: f64,
) -> Result<ConvergenceStudy> {
    let dts = sorted_coarse_to_fine(dts)?;
    let mut all = dts.clone();
    all.push(ref_dt);
    let rhos: Vec<DVector<f64>> =
        all.par_iter().map(|&dt| sc.run(dt, t_final).map(|s| s.rho)).collect::<Result<_>>()?;
    let (reference, runs) = rhos.split_last().expect("reference run");
    let dx = sc.length / (sc.nx - 1) as f64;
    errors_against(sc.tableau.name.as_str(), sc.eps, dts, runs, reference, dx, format!("self dt={ref_dt}"))
}

fn errors_against(
    scheme: &str,
    eps: f64,
    dts: Vec<f64>,
    runs: &[DVector<f64>],
    reference: &DVector<f64>,
    dx: f64,
    label: String,
) -> Result<ConvergenceStudy> {
    let l2 = runs.iter().map(|r| l2_error(r.as_slice(), reference.as_slice(), dx)).collect();
    let linf = runs.iter().map(|r| linf_error(r.as_slice(), reference.as_slice())).collect();
    ConvergenceStudy::new(scheme, eps, StudyParameter::Dt, dts, l2, linf, label)
}

/// Space self-convergence: each coarse grid is compared with the reference
/// grid at the shared nodes, so every `N_x` must divide `ref_nx`.
pub fn space_convergence(
    sc: &PeriodicScenario,
    nxs: &[usize],
    ref_nx: usize,
    dt: f64,
    t_final: f64,
) -> Result<ConvergenceStudy> {
    if nxs.len() < 3 {
        return Err(Error::Config(format!("need at least 3 grid sizes, got {}", nxs.len())));
    }
    if let Some(bad) = nxs.iter().find(|&&n| n == 0 || !ref_nx.is_multiple_of(n)) {
        return Err(Error::Config(format!("N_x = {bad} does not divide the reference N_x = {ref_nx}")));
    }
    let mut nxs = nxs.to_vec();
    nxs.sort_unstable();
    let mut all = nxs.clone();
    all.push(ref_nx);
    let rhos: Vec<DVector<f64>> = all
        .par_iter()
        .map(|&nx| {
            let s = PeriodicScenario { nx, ..sc.clone() };
            s.run(dt, t_final).map(|st| st.rho)
        })
        .collect::<Result<_>>()?;
    let (reference, runs) = rhos.split_last().expect("reference run");
    let mut l2 = Vec::new();
    let mut linf = Vec::new();
    for (r, &nx) in runs.iter().zip(&nxs) {
        let stride = ref_nx / nx;
        let sampled: Vec<f64> = (0..nx).map(|i| reference[i * stride]).collect();
        l2.push(l2_error(r.as_slice(), &sampled, sc.length / nx as f64));
        linf.push(linf_error(r.as_slice(), &sampled));
    }
    ConvergenceStudy::new(
        &sc.tableau.name,
        sc.eps,
        StudyParameter::Nx,
        nxs.iter().map(|&n| n as f64).collect(),
        l2,
        linf,
        format!("self nx={ref_nx}"),
    )
}

/// Density profiles of the three models on a shared grid.
#[derive(Clone, Debug)]
pub struct Comparison {
    pub x: Vec<f64>,
    pub t_final: f64,
    pub micro_macro: Vec<f64>,
    pub kinetic: Option<Vec<f64>>,
    pub diffusion: Vec<f64>,
}

/// Relative `L-inf` distance `max|a - b| / max|b|`.
pub fn relative_linf(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    linf_error(a, b) / scale.max(f64::MIN_POSITIVE)
}

impl Comparison {
    pub fn mm_vs_kinetic(&self) -> Option<f64> {
        self.kinetic.as_ref().map(|k| relative_linf(&self.micro_macro, k))
    }

    pub fn mm_vs_diffusion(&self) -> f64 {
        relative_linf(&self.micro_macro, &self.diffusion)
    }
}

/// The full kinetic reference is not asymptotic preserving; it is only run
/// when `eps` is at least this large.
pub const KINETIC_EPS_MIN: f64 = 0.1;

pub fn compare_periodic(sc: &PeriodicScenario, dt: f64, t_final: f64) -> Result<Comparison> {
    let solver = sc.solver(dt)?;
    let init = sc.initial(&solver);
    let mm = solver.run(&init, t_final)?;
    let kinetic = if sc.eps >= KINETIC_EPS_MIN {
        let b = sc.bgk_reference(dt)?;
        let f0 = sc.kinetic_initial(&solver, &init);
        let f = b.run(&f0, t_final)?;
        Some(b.density(&f).as_slice().to_vec())
    } else {
        None
    };
    let diffusion = sc.diffusion_reference(dt)?.run(&init.rho, t_final)?;
    Ok(Comparison {
        x: solver.ops.rho_x(),
        t_final,
        micro_macro: mm.rho.as_slice().to_vec(),
        kinetic,
        diffusion: diffusion.as_slice().to_vec(),
    })
}

pub fn compare_inflow(sc: &InflowScenario, dt: f64, t_final: f64) -> Result<Comparison> {
    let solver = sc.solver(dt)?;
    let mm = solver.run(&solver.zero_state(), t_final)?;
    let kinetic = if sc.eps >= KINETIC_EPS_MIN {
        let b = sc.bgk_reference(dt)?;
        let f = b.run(&b.zero_state(), t_final)?;
        Some(b.density(&f).as_slice().to_vec())
    } else {
        None
    };
    let n = sc.nx - 2;
    let diffusion = sc.diffusion_reference(dt)?.run(&DVector::zeros(n), t_final)?;
    Ok(Comparison {
        x: solver.mats.interior_x(),
        t_final,
        micro_macro: mm.rho.as_slice().to_vec(),
        kinetic,
        diffusion: diffusion.as_slice().to_vec(),
    })
}

/// Boundary-layer indicator: deviation from the limit at the first node
/// divided by the largest deviation at `x >= x_interior`.
pub fn boundary_layer_ratio(cmp: &Comparison, x_interior: f64) -> f64 {
    let d: Vec<f64> = cmp.micro_macro.iter().zip(&cmp.diffusion).map(|(a, b)| (a - b).abs()).collect();
    let inner = cmp.x.iter().zip(&d).filter(|(x, _)| **x >= x_interior).map(|(_, d)| *d).fold(0.0f64, f64::max);
    d[0] / inner.max(f64::MIN_POSITIVE)
}
