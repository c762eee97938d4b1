use std::f64::consts::PI;

use apkinetic::analysis::ap_residual;
use apkinetic::collision::CollisionOperator;
use apkinetic::experiments::{relative_linf, CollisionChoice, InflowScenario, PeriodicScenario};
use apkinetic::inflow::{GhostRule, InflowData};
use apkinetic::periodic::InitKind;
use apkinetic::reference::{klar_boundary_rho, BgkPeriodic, DiffusionPeriodic};
use apkinetic::stencil::{GridKind, PeriodicOperators};
use apkinetic::tableau::{self, DoubleButcherTableau};
use apkinetic::velocity::{HalfSet, VelocityGrid};
use nalgebra::{DMatrix, DVector};

fn cos_profile(ops: &PeriodicOperators) -> DVector<f64> {
    DVector::from_iterator(ops.nx, ops.rho_x().iter().map(|x| 1.0 + x.cos()))
}

/// Stability function `R(z) = 1 + z b^T (I - z A)^{-1} 1` of the implicit part.
fn stability(t: &DoubleButcherTableau, z: f64) -> f64 {
    let s = t.stages();
    let m = DMatrix::identity(s, s) - &t.a_implicit * z;
    let k = m.lu().solve(&DVector::from_element(s, 1.0)).unwrap();
    1.0 + z * t.b_implicit.dot(&k)
}

fn two_rate_collision(g: &VelocityGrid) -> DMatrix<f64> {
    let bgk = CollisionOperator::bgk(g).matrix;
    let n = g.len();
    let odd = DMatrix::from_fn(n, n, |i, j| g.v[i] * g.m[i] * g.v[j]);
    let norm: f64 = g.v.iter().zip(&g.m).map(|(v, m)| v * v * m).sum();
    bgk - 0.5 * odd / norm
}

#[test]
fn ars111_diffusion_is_backward_euler() {
    let ops = PeriodicOperators::new(40, 2.0 * PI, GridKind::Colocated, 3, 4).unwrap();
    let rho = cos_profile(&ops);
    let (kappa, dt) = (0.9, 0.07);
    // assemble the backward Euler matrix from the stencil coefficients directly
    let n = ops.nx;
    let dx = ops.dx;
    let c4 = [1.0, -8.0, 0.0, 8.0, -1.0];
    let d = DMatrix::from_fn(n, n, |i, j| {
        let off = (j as isize - i as isize).rem_euclid(n as isize);
        (0..5).filter(|t| (*t as isize - 2).rem_euclid(n as isize) == off).map(|t| c4[t] / (12.0 * dx)).sum()
    });
    let be = DMatrix::identity(n, n) - (&d * &d) * (kappa * dt);
    let expect = be.lu().solve(&rho).unwrap();
    let solver = DiffusionPeriodic::new(ops, tableau::ars111(), kappa, 0.0, dt).unwrap();
    let got = solver.step(&rho).unwrap();
    assert!((got - expect).amax() < 1e-13);
}

#[test]
fn zero_kappa_is_identity() {
    let ops = PeriodicOperators::new(30, 2.0 * PI, GridKind::Colocated, 3, 4).unwrap();
    let rho = cos_profile(&ops);
    let d = DiffusionPeriodic::new(ops.clone(), tableau::dp1_a242(), 0.0, 0.0, 0.1).unwrap();
    assert_eq!(d.run(&rho, 1.0).unwrap(), rho);
    // drift alone still preserves constants
    let ones = DVector::from_element(30, 2.5);
    let d = DiffusionPeriodic::new(ops, tableau::ars443(), 0.0, 0.7, 0.1).unwrap();
    assert!((d.run(&ones, 1.0).unwrap() - ones).amax() < 1e-13);
}

#[test]
fn heat_decay_matches_discrete_symbol() {
    let nx = 32;
    let ops = PeriodicOperators::new(nx, 2.0 * PI, GridKind::Colocated, 3, 4).unwrap();
    let grid = VelocityGrid::default_grid();
    let kappa = CollisionOperator::bgk(&grid).kappa(&grid);
    let dx = ops.dx;
    // symbol of the fourth-order central difference at wavenumber 1
    let s = (8.0 * dx.sin() - (2.0 * dx).sin()) / (6.0 * dx);
    let kappa_h = kappa * s * s;
    let dt = 0.05;
    let steps = 20;
    for t in [tableau::ars111(), tableau::dp1_a242(), tableau::ars443()] {
        let amp = stability(&t, -kappa_h * dt).powi(steps);
        let d = DiffusionPeriodic::new(ops.clone(), t, kappa, 0.0, dt).unwrap();
        let out = d.run(&cos_profile(&ops), dt * steps as f64).unwrap();
        for (i, x) in ops.rho_x().iter().enumerate() {
            assert!((out[i] - 1.0 - amp * x.cos()).abs() < 1e-10);
        }
    }
    // and the amplitude tracks exp(-kappa_h t) for a third-order integrator
    let amp = stability(&tableau::dp1_a242(), -kappa_h * dt).powi(steps);
    assert!((amp - (-kappa_h * dt * steps as f64).exp()).abs() < 1e-4);
}

#[test]
fn constant_distribution_is_stationary_in_bgk() {
    let sc = PeriodicScenario::diffusion(tableau::dp1_a242(), 0.5, InitKind::WellPrepared);
    let bgk = sc.bgk_reference(0.01).unwrap();
    let rho = DVector::from_element(sc.nx, 1.7);
    let f0 = bgk.init(&rho, &DMatrix::zeros(sc.nx, sc.nv));
    let f = bgk.run(&f0, 0.2).unwrap();
    assert!((f - f0).amax() < 1e-14);
}

#[test]
fn bgk_conserves_mass_with_drift() {
    let sc = PeriodicScenario::advdiff(tableau::ars222(), 1.0, InitKind::NonWellPrepared);
    let mm = sc.solver(0.01).unwrap();
    let s0 = sc.initial(&mm);
    let bgk: BgkPeriodic = sc.bgk_reference(0.01).unwrap();
    let f0 = bgk.init(&s0.rho, &s0.g);
    let m0 = bgk.density(&f0).sum();
    let f = bgk.run(&f0, 0.5).unwrap();
    assert!((bgk.density(&f).sum() - m0).abs() < 1e-10);
}

#[test]
#[allow(clippy::needless_range_loop)]
fn klar_boundary_values() {
    let g = VelocityGrid::default_grid();
    let kappa = CollisionOperator::bgk(&g).kappa(&g);
    assert!((klar_boundary_rho(&g, &g.m, kappa) - 1.0).abs() < 1e-14);
    let scaled: Vec<f64> = g.m.iter().map(|m| 3.0 * m).collect();
    assert!((klar_boundary_rho(&g, &scaled, kappa) - 3.0).abs() < 1e-13);

    // f_b = v M, summed by hand over the incoming half
    let vm: Vec<f64> = g.v.iter().zip(&g.m).map(|(v, m)| v * m).collect();
    let (mut a, mut b, mut total) = (0.0, 0.0, 0.0);
    for k in 0..g.len() {
        total += g.m[k] * g.dv;
        if g.v[k] > 0.0 {
            a += g.v[k] * vm[k] * g.dv;
            b += g.v[k] * g.m[k] * g.dv;
        }
    }
    let first = a / b;
    let mut corr = 0.0;
    for k in 0..g.len() {
        if g.v[k] > 0.0 {
            corr += g.v[k] * g.v[k] * (vm[k] - g.m[k] * first) * g.dv;
        }
    }
    let expect = first + corr / (kappa * total);
    let got = klar_boundary_rho(&g, &vm, kappa);
    assert!((got - expect).abs() < 1e-13);
    assert!(got > first);
}

#[test]
fn drift_moves_density_right() {
    let sc =
        PeriodicScenario { nx: 40, ..PeriodicScenario::advdiff(tableau::dp1_a242(), 1e-6, InitKind::WellPrepared) };
    let kappa = sc.kappa().unwrap();
    let t = 1.0;
    let out = sc.run(0.01, t).unwrap();
    let x = sc.operators().unwrap().rho_x();
    let shifted = |c: f64| -> f64 {
        x.iter()
            .zip(out.rho.iter())
            .map(|(x, r)| (r - (x - c * t).sin() * (-kappa * t).exp()).abs())
            .fold(0.0, f64::max)
    };
    let speed = kappa * sc.drift;
    assert!(shifted(speed) < 0.1 * shifted(-speed), "{} vs {}", shifted(speed), shifted(-speed));
    assert!(shifted(speed) < 1e-2);
}

#[test]
fn zero_drift_reduces_to_base_scheme() {
    let with = PeriodicScenario {
        drift: 0.0,
        ..PeriodicScenario::advdiff(
            tableau::dp2_a242(tableau::default_dp2_a242_gamma()),
            0.3,
            InitKind::NonWellPrepared,
        )
    };
    let s = with.solver(0.02).unwrap();
    let base = apkinetic::periodic::PeriodicSolver::new(
        s.grid.clone(),
        s.coll.clone(),
        s.ops.clone(),
        s.tableau.clone(),
        s.eps,
        0.02,
    )
    .unwrap();
    let s0 = with.initial(&s);
    let a = s.run(&s0, 0.2).unwrap();
    let b = base.run(&s0, 0.2).unwrap();
    assert_eq!(a.rho, b.rho);
    assert_eq!(a.g, b.g);
}

#[test]
fn type_a_micro_part_is_second_order_in_eps() {
    let mut ratios = Vec::new();
    for eps in [1e-3, 1e-4, 1e-5] {
        let sc = PeriodicScenario::diffusion(tableau::dp1_a242(), eps, InitKind::NonWellPrepared);
        let s = sc.solver(0.01).unwrap();
        let out = s.step(&sc.initial(&s)).unwrap();
        let r = ap_residual(&out.g, &out.rho, &s.coll, &s.grid, &s.ops.cen_g, eps);
        ratios.push(r / (eps * eps));
    }
    let (lo, hi) = ratios.iter().fold((f64::MAX, 0.0f64), |(a, b), &r| (a.min(r), b.max(r)));
    assert!(hi / lo < 1.5, "{ratios:?}");
}

#[test]
fn ck_ars_micro_part_keeps_initial_layer() {
    let residual = |t: DoubleButcherTableau, eps: f64| {
        let sc = PeriodicScenario::diffusion(t, eps, InitKind::NonWellPrepared);
        let s = sc.solver(0.01).unwrap();
        let out = s.step(&sc.initial(&s)).unwrap();
        ap_residual(&out.g, &out.rho, &s.coll, &s.grid, &s.ops.cen_g, eps)
    };
    // a decade in eps buys two decades for type A but only one for CK-ARS
    let type_a = residual(tableau::dp1_a242(), 1e-4) / residual(tableau::dp1_a242(), 1e-5);
    let ck = residual(tableau::ars222(), 1e-4) / residual(tableau::ars222(), 1e-5);
    assert!(type_a > 80.0, "type A ratio {type_a}");
    assert!(ck < 20.0, "CK-ARS ratio {ck}");
}

#[test]
fn custom_collision_reaches_its_own_limit() {
    let grid = VelocityGrid::default_grid();
    let l = two_rate_collision(&grid);
    let sc = PeriodicScenario {
        collision: CollisionChoice::Custom(l),
        ..PeriodicScenario::diffusion(tableau::dp1_a242(), 1e-8, InitKind::NonWellPrepared)
    };
    let kappa_custom = sc.kappa().unwrap();
    let kappa_bgk = CollisionOperator::bgk(&grid).kappa(&grid);
    assert!((kappa_custom - kappa_bgk).abs() > 0.1);

    let s = sc.solver(0.01).unwrap();
    let s0 = sc.initial(&s);
    let mm = s.step(&s0).unwrap();
    let diff = sc.diffusion_reference(0.01).unwrap().step(&s0.rho).unwrap();
    assert!(relative_linf(mm.rho.as_slice(), diff.as_slice()) < 1e-6);

    let long = s.run(&s0, 0.5).unwrap();
    assert!(long.max_bracket(&grid) < 1e-9);
    assert!((long.mass() - s0.mass()).abs() < 1e-10 * s0.mass());
}

#[test]
fn ars111_equals_first_order_scheme() {
    for eps in [1.0, 1e-2, 1e-6] {
        let sc = PeriodicScenario::diffusion(tableau::ars111(), eps, InitKind::NonWellPrepared);
        let s = sc.solver(0.01).unwrap();
        let s0 = sc.initial(&s);
        let a = s.step(&s0).unwrap();
        let b = s.step_first_order(&s0).unwrap();
        assert!((&a.rho - &b.rho).amax() < 1e-13);
        assert!((&a.g - &b.g).amax() < 1e-13 * b.g.amax().max(1.0));

        let sc = InflowScenario {
            data: InflowData::ScaledVelocity(1.0),
            ..InflowScenario::standard(tableau::ars111(), eps)
        };
        let s = sc.solver(0.01).unwrap();
        let mut st = s.zero_state();
        for _ in 0..5 {
            st = s.step(&st).unwrap();
        }
        let a = s.step(&st).unwrap();
        let b = s.step_first_order(&st).unwrap();
        // the coupled system carries an eps^2 diagonal next to O(dt/eps) couplings,
        // so its own forward error grows as eps shrinks
        let tol = if eps < 1e-3 { 1e-9 } else { 1e-13 };
        assert!((&a.rho - &b.rho).amax() < tol * b.rho.amax().max(1.0));
        assert!((&a.g_bar - &b.g_bar).amax() < tol * b.g_bar.amax().max(1.0));
    }
}

#[test]
fn inflow_state_stays_consistent() {
    for data in [InflowData::Equilibrium(1.0), InflowData::ScaledVelocity(1.0)] {
        for eps in [1.0, 1e-4] {
            let sc = InflowScenario { data: data.clone(), ..InflowScenario::standard(tableau::dp1_a242(), eps) };
            let s = sc.solver(0.005).unwrap();
            let mut st = s.zero_state();
            for _ in 0..20 {
                st = s.step(&st).unwrap();
                for i in 0..st.g_bar.nrows() {
                    let row: Vec<f64> = st.g_bar.row(i).iter().copied().collect();
                    assert!(s.grid.half_bracket(&row, HalfSet::Minus).unwrap().abs() < 1e-9);
                }
                let br = DVector::from_iterator(
                    st.g_bar.nrows(),
                    st.g_bar.row_iter().map(|r| s.grid.bracket(&r.iter().copied().collect::<Vec<_>>())),
                );
                let rebuilt = &st.rho_bar + &s.mats.avg * br;
                assert!((rebuilt - &st.rho).amax() < 1e-12);
            }
        }
    }
}

#[test]
fn reflected_ghost_for_velocity_inflow() {
    let sc = InflowScenario {
        data: InflowData::ScaledVelocity(1.0),
        ghost: Some(GhostRule::Reflected),
        ..InflowScenario::standard(tableau::ars111(), 1.0)
    };
    let s = sc.solver(0.01).unwrap();
    let g = &s.grid;
    let nv = g.len();
    let gbar = DMatrix::from_fn(19, nv, |i, k| ((i * nv + k) as f64 * 0.37).sin());
    let closed = s.close(&gbar);
    let half_vm = {
        let (mut num, mut den) = (0.0, 0.0);
        for k in 0..nv {
            if g.v[k] > 0.0 {
                num += g.v[k] * g.m[k];
                den += g.m[k];
            }
        }
        num / den
    };
    for k in 0..nv {
        if g.v[k] > 0.0 {
            let target = g.v[k] * g.m[k] - half_vm * g.m[k];
            assert!((closed[(0, k)] - (2.0 * target - gbar[(0, k)])).abs() < 1e-14);
            assert!((0.5 * (closed[(0, k)] + gbar[(0, k)]) - target).abs() < 1e-14);
        }
    }
}
