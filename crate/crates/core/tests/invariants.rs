use apkinetic::collision::CollisionOperator;
use apkinetic::periodic::{InitKind, PeriodicSolver};
use apkinetic::stencil::{central, upwind_pair, CentralTarget, GridKind, PeriodicOperators};
use apkinetic::tableau::{self, DoubleButcherTableau};
use apkinetic::velocity::{HalfSet, VelocityGrid};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn vec_of(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0..10.0f64, n)
}

fn grid() -> VelocityGrid {
    VelocityGrid::default_grid()
}

/// `L = diag(M) S` with `S = -Q (C C^T + d I) Q`, `Q` the orthogonal projector off `M`.
fn random_collision(g: &VelocityGrid, entries: &[f64], d: f64) -> DMatrix<f64> {
    let n = g.len();
    let m = g.m_vec();
    let q = DMatrix::identity(n, n) - &m * m.transpose() / m.norm_squared();
    let c = DMatrix::from_column_slice(n, n, entries);
    let s = -(&q * (&c * c.transpose() + d * DMatrix::identity(n, n)) * &q);
    let s = (&s + s.transpose()) * 0.5;
    DMatrix::from_diagonal(&m) * s
}

fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn projections_idempotent(h in vec_of(10)) {
        let g = grid();
        let p = g.project_pi(&h);
        let pp = g.project_pi(&p);
        let scale = 1.0 + max_abs(&h);
        for k in 0..10 {
            prop_assert!((p[k] - pp[k]).abs() <= 1e-13 * scale);
        }
        let rest: Vec<f64> = h.iter().zip(&p).map(|(a, b)| a - b).collect();
        prop_assert!(g.bracket(&rest).abs() <= 1e-13 * scale);

        let pm = g.project_pi_minus(&h).unwrap();
        let pmm = g.project_pi_minus(&pm).unwrap();
        for k in 0..10 {
            prop_assert!((pm[k] - pmm[k]).abs() <= 1e-13 * scale);
        }
        let rest: Vec<f64> = h.iter().zip(&pm).map(|(a, b)| a - b).collect();
        prop_assert!(g.half_bracket(&rest, HalfSet::Minus).unwrap().abs() <= 1e-13 * scale);
    }

    #[test]
    fn bgk_range_has_zero_bracket(h in vec_of(10)) {
        let g = grid();
        let op = CollisionOperator::bgk(&g);
        let lh = op.apply(&h);
        prop_assert!(g.bracket(&lh).abs() <= 1e-13 * (1.0 + max_abs(&h)));
    }

    #[test]
    fn resolvent_inverts_stage_operator(
        h in vec_of(10),
        log_eps in -6.0..0.0f64,
        adt in 1e-4..1.0f64,
    ) {
        let g = grid();
        let eps = 10f64.powf(log_eps);
        let op = CollisionOperator::bgk(&g);
        let r = op.resolvent(eps, adt).unwrap();
        let hv = DVector::from_vec(h.clone());
        let x = r.apply(&hv);
        let back = (eps * eps) * &x - adt * (&op.matrix * &x);
        let scale = 1.0 + hv.amax();
        // backward-error bound: forming the product loses digits relative to |x|
        let fwd = 1e-12 * (scale + (eps * eps + 2.0 * adt) * x.amax());
        prop_assert!((back - &hv).amax() <= fwd);

        // restricted part on zero-mean input
        let z = DVector::from_vec(g.project_pi(&h));
        let z = &hv - z;
        let y = r.apply_range(&z);
        prop_assert!(g.bracket(y.as_slice()).abs() <= 1e-10 * scale / (eps * eps + adt));
        let back = (eps * eps) * &y - adt * (&op.matrix * &y);
        prop_assert!((back - &z).amax() <= 1e-10 * scale);
    }

    #[test]
    fn custom_collision_pseudo_inverse(
        entries in vec_of(100),
        d in 0.1..2.0f64,
        h in vec_of(10),
    ) {
        let g = grid();
        let l = random_collision(&g, &entries, d);
        let op = CollisionOperator::custom(&g, l).unwrap();
        let z: Vec<f64> = h.iter().zip(g.project_pi(&h)).map(|(a, b)| a - b).collect();
        let u = op.pseudo_inverse_apply(&z).unwrap();
        let lu = op.apply(&u);
        let scale = 1.0 + max_abs(&z);
        for k in 0..10 {
            prop_assert!((lu[k] - z[k]).abs() <= 1e-8 * scale);
        }
        prop_assert!(op.kappa(&g) > 0.0);
    }

    #[test]
    fn stencils_annihilate_constants(nx in 5usize..80, length in 0.5..10.0f64) {
        let dx = length / nx as f64;
        for order in [1, 3] {
            let (m, p) = upwind_pair(order, nx, dx).unwrap();
            prop_assert!(m.coefficient_sum().abs() <= 1e-12 / dx);
            prop_assert!(p.coefficient_sum().abs() <= 1e-12 / dx);
        }
        for (order, target) in [
            (2, CentralTarget::GGrid),
            (2, CentralTarget::RhoGrid),
            (2, CentralTarget::Colocated),
            (4, CentralTarget::Colocated),
        ] {
            let c = central(order, target, nx, dx).unwrap();
            prop_assert!(c.coefficient_sum().abs() <= 1e-12 / dx);
        }
    }

    #[test]
    fn tableau_text_round_trip(lower in vec_of(6), diag in vec_of(3), expl in vec_of(3)) {
        let implicit = vec![
            vec![diag[0]],
            vec![lower[0], diag[1]],
            vec![lower[1], lower[2], diag[2]],
        ];
        let explicit = vec![vec![0.0], vec![expl[0], 0.0], vec![expl[1], expl[2], 0.0]];
        let t = DoubleButcherTableau::from_rows("RANDOM", &explicit, &implicit).unwrap();
        let back = DoubleButcherTableau::parse(&t.to_text()).unwrap();
        prop_assert_eq!(back, t);
    }

    #[test]
    fn mass_and_bracket_preserved(
        coeffs in prop::collection::vec(-0.4..0.4f64, 4),
        log_eps in -5.0..0.0f64,
        which in 0usize..6,
        staggered in any::<bool>(),
        nwp in any::<bool>(),
    ) {
        let eps = 10f64.powf(log_eps);
        let g = grid();
        let coll = CollisionOperator::bgk(&g);
        let ops = if staggered {
            PeriodicOperators::new(20, 2.0 * std::f64::consts::PI, GridKind::Staggered, 1, 2).unwrap()
        } else {
            PeriodicOperators::new(24, 2.0 * std::f64::consts::PI, GridKind::Colocated, 3, 4).unwrap()
        };
        let tab = tableau::all_builtins().swap_remove(which);
        // small dt keeps the explicit transport stable at every eps
        let solver = PeriodicSolver::new(g.clone(), coll, ops, tab, eps, 0.002).unwrap();
        let profile = move |x: f64| {
            1.0 + coeffs[0] * x.cos() + coeffs[1] * x.sin() + coeffs[2] * (2.0 * x).cos() + coeffs[3] * (3.0 * x).sin()
        };
        let kind = if nwp { InitKind::NonWellPrepared } else { InitKind::WellPrepared };
        let s0 = solver.init(&profile, kind);
        let mut s = s0.clone();
        for _ in 0..10 {
            s = solver.step(&s).unwrap();
            prop_assert!(s.max_bracket(&g) <= 1e-9);
        }
        prop_assert!((s.mass() - s0.mass()).abs() <= 1e-10 * s0.mass().abs().max(1.0));
    }
}

#[test]
fn builtins_validate() {
    for t in tableau::all_builtins() {
        assert!(t.validate().is_empty(), "{}: {:?}", t.name, t.validate());
        assert!(t.is_gsa(), "{} not GSA", t.name);
        let back = DoubleButcherTableau::parse(&t.to_text()).unwrap();
        assert_eq!(back, t);
    }
}
