mod common;

use std::sync::OnceLock;

use common::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rbmpc::linesearch::{backtracking, bfgs_update, direction, strong_wolfe};
use rbmpc::{Carry, Method, Problem, RelaxedLogBarrier, SearchConfig};

fn problem() -> &'static Problem {
    static P: OnceLock<Problem> = OnceLock::new();
    P.get_or_init(benchmark)
}

fn point(seed: u64) -> (DVector<f64>, DVector<f64>) {
    random_point(&mut ChaCha8Rng::seed_from_u64(seed), problem())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scalar_barrier_is_convex(delta in 1e-4f64..1.0, a in -3.0f64..3.0, b in -3.0f64..3.0, t in 0.0f64..1.0) {
        let bar = RelaxedLogBarrier::new(delta);
        let mid = t * a + (1.0 - t) * b;
        prop_assume!(mid > -1e6);
        let (lhs, rhs) = (bar.value(mid), t * bar.value(a) + (1.0 - t) * bar.value(b));
        prop_assert!(lhs <= rhs + 1e-12 * rhs.abs().max(1.0));
        prop_assert!(bar.curvature(a) > 0.0);
    }

    #[test]
    fn scalar_barrier_is_twice_continuous_at_switch(delta in 1e-4f64..1.0) {
        let bar = RelaxedLogBarrier::new(delta);
        let below = delta * (1.0 - 1e-12);
        prop_assert!((bar.value(below) - bar.value(delta)).abs() <= 1e-9 * bar.value(delta).abs().max(1.0));
        prop_assert!((bar.slope(below) - bar.slope(delta)).abs() <= 1e-9 * bar.slope(delta).abs());
        prop_assert!((bar.curvature(below) - bar.curvature(delta)).abs() <= 1e-9 * bar.curvature(delta));
    }

    #[test]
    fn recentered_barriers_are_nonnegative(x1 in -5.0f64..5.0, x2 in -5.0f64..5.0, u in -3.0f64..3.0) {
        let p = problem();
        prop_assert!(p.bar_x.value(&DVector::from_row_slice(&[x1, x2])) >= -1e-12);
        prop_assert!(p.bar_u.value(&DVector::from_element(1, u)) >= -1e-12);
    }

    #[test]
    fn gradient_is_strongly_monotone_and_lipschitz(s1 in any::<u64>(), s2 in any::<u64>()) {
        let p = problem();
        let (u1, x) = point(s1);
        let (u2, _) = point(s2);
        let (sigma, l) = p.cp.constants();
        let du = &u1 - &u2;
        let dg = p.cp.eval_grad(&u1, &x) - p.cp.eval_grad(&u2, &x);
        prop_assert!(dg.dot(&du) >= sigma * du.norm_squared() * (1.0 - 1e-9));
        prop_assert!(dg.norm() <= l * du.norm() * (1.0 + 1e-9));
    }

    #[test]
    fn every_direction_is_a_descent_direction(seed in any::<u64>(), m in 0usize..4) {
        let p = problem();
        let (u, x) = point(seed);
        let cfg = SearchConfig::new(Method::ALL[m]);
        let pdir = direction(&cfg, &mut Carry::new(), &p.cp, &u, &x).unwrap();
        prop_assert!(p.cp.eval_grad(&u, &x).dot(&pdir) < 0.0);
    }

    #[test]
    fn strong_wolfe_result_satisfies_both_conditions(seed in any::<u64>(), m in 0usize..4) {
        let p = problem();
        let (u, x) = point(seed);
        let cfg = SearchConfig::new(Method::ALL[m]);
        let pdir = direction(&cfg, &mut Carry::new(), &p.cp, &u, &x).unwrap();
        let line = p.cp.line(&u, &x, &pdir);
        let d0 = line.slope(0.0);
        let out = strong_wolfe(&cfg, &line).unwrap();
        prop_assert!(out.change <= cfg.c1 * out.s * d0);
        prop_assert!(line.slope(out.s).abs() <= -cfg.c2 * d0);
        let direct = p.cp.eval_cost(&(&u + &pdir * out.s), &x) - p.cp.eval_cost(&u, &x);
        prop_assert!((direct - out.change).abs() <= 1e-9 * p.cp.eval_cost(&u, &x).max(1.0));
    }

    #[test]
    fn newton_backtracking_respects_its_bounds(seed in any::<u64>()) {
        let p = problem();
        let (u, x) = point(seed);
        let cfg = SearchConfig::new(Method::Newton);
        let pdir = direction(&cfg, &mut Carry::new(), &p.cp, &u, &x).unwrap();
        let out = backtracking(&cfg, &p.cp.line(&u, &x, &pdir)).unwrap();
        let (sigma, l) = p.cp.constants();
        prop_assert!(out.iterations as f64 <= cfg.newton_backtracking_bound(sigma, l));
        prop_assert!(out.s >= cfg.newton_step_floor(sigma, l) * (1.0 - 1e-12));
        // Newton decrement gᵀ(∇²Ĵ)⁻¹g equals -gᵀp and bounds the gap from below
        let g = p.cp.eval_grad(&u, &x);
        let dec = rbmpc::linesearch::newton_decrement_sq(&p.cp, &u, &x).unwrap();
        prop_assert!((dec + g.dot(&pdir)).abs() <= 1e-8 * dec.max(1e-300));
        prop_assert!(dec >= g.norm_squared() / l * (1.0 - 1e-9));
    }

    #[test]
    fn bfgs_keeps_the_estimate_positive_definite(seed in any::<u64>(), steps in 1usize..8) {
        let p = problem();
        let (mut u, x) = point(seed);
        let mut carry = Carry::new();
        carry.inv_hessian_approx = Some(p.cp.h_inv().clone());
        let cfg = SearchConfig::new(Method::QuasiNewton);
        for _ in 0..steps {
            let pdir = direction(&cfg, &mut carry, &p.cp, &u, &x).unwrap();
            let out = strong_wolfe(&cfg, &p.cp.line(&u, &x, &pdir)).unwrap();
            let next = &u + &pdir * out.s;
            let y = p.cp.eval_grad(&next, &x) - p.cp.eval_grad(&u, &x);
            bfgs_update(&mut carry, &(&pdir * out.s), &y);
            u = next;
            let b: &DMatrix<f64> = carry.inv_hessian_approx.as_ref().unwrap();
            prop_assert!(b.clone().cholesky().is_some());
        }
    }
}
