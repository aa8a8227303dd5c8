mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rbmpc::certify::{alpha_hat, max_violation};
use rbmpc::linesearch::{newton_decrement_sq, optimizer_update};
use rbmpc::riccati::{solve_dare, TerminalDesign};
use rbmpc::scheme::{controller_step, initialize, shift};
use rbmpc::{Carry, InitMode, Method, Polytope, RecenteredBarrier, SearchConfig};

#[test]
fn condensed_cost_equals_stage_sum_on_benchmark() {
    let p = benchmark();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let (u, x) = random_point(&mut rng, &p);
        let oracle = stage_sum_cost(&p, &u, &x);
        assert!(rel_err(p.cp.eval_cost(&u, &x), oracle) < 1e-9, "oracle {oracle}");
    }
}

#[test]
fn condensed_cost_equals_stage_sum_on_random_problems() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..5 {
        let p = random_problem(&mut rng);
        for _ in 0..20 {
            let (u, x) = random_point(&mut rng, &p);
            assert!(rel_err(p.cp.eval_cost(&u, &x), stage_sum_cost(&p, &u, &x)) < 1e-9);
        }
    }
}

#[test]
fn recentered_barrier_vanishes_flat_at_origin() {
    let p = benchmark();
    for bar in [&p.bar_x, &p.bar_u] {
        let set = bar.set();
        let w = bar.weights();
        assert!(w.iter().all(|&wi| wi >= 0.0));
        // ∇B(0) = Σ (1 + w_i) C_iᵀ / d_i
        let grad = (0..set.rows()).fold(DVector::zeros(set.dim()), |acc, i| {
            acc + set.c().row(i).transpose() * ((1.0 + w[i]) / set.d()[i])
        });
        assert!(grad.amax() < 1e-12);
        assert!(bar.value(&DVector::zeros(set.dim())).abs() < 1e-12);
    }
}

#[test]
fn gradient_and_hessian_match_central_differences() {
    let p = benchmark();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..10 {
        let (u, x) = random_point(&mut rng, &p);
        let g = p.cp.eval_grad(&u, &x);
        let h = p.cp.eval_hess(&u, &x);
        let step = 1e-6;
        let mut g_fd = DVector::zeros(u.len());
        let mut h_fd = DMatrix::zeros(u.len(), u.len());
        for i in 0..u.len() {
            let mut up = u.clone();
            let mut dn = u.clone();
            up[i] += step;
            dn[i] -= step;
            g_fd[i] = (p.cp.eval_cost(&up, &x) - p.cp.eval_cost(&dn, &x)) / (2.0 * step);
            h_fd.set_column(i, &((p.cp.eval_grad(&up, &x) - p.cp.eval_grad(&dn, &x)) / (2.0 * step)));
        }
        assert!((&g_fd - &g).norm() <= 1e-5 * g.norm().max(1.0));
        assert!((&h_fd - &h).norm() <= 1e-5 * h.norm());
    }
}

#[test]
fn dare_solution_is_the_infinite_horizon_optimal_cost() {
    // min Σ_{k<N} xᵀQx + uᵀRu + x_NᵀPx_N over U equals x₀ᵀPx₀ for every N.
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..10 {
        let p = random_problem(&mut rng);
        let s = &p.setup;
        let sol = solve_dare(s.plant.a(), s.plant.b(), &s.q, &s.r).unwrap();
        let (n, m, horizon) = (s.n(), s.m(), 6);
        // cost(U) = ½UᵀHU + x₀ᵀFU + c, assembled by rolling out unit inputs
        let cost = |u: &DVector<f64>, x0: &DVector<f64>| {
            let mut x = x0.clone();
            let mut c = 0.0;
            for k in 0..horizon {
                let uk = u.rows(k * m, m).into_owned();
                c += x.dot(&(&s.q * &x)) + uk.dot(&(&s.r * &uk));
                x = s.plant.a() * &x + s.plant.b() * &uk;
            }
            c + x.dot(&(&sol.p * &x))
        };
        let x0 = uniform_vec(&mut rng, n, -1.0, 1.0);
        let nm = horizon * m;
        let zero = DVector::zeros(nm);
        let c0 = cost(&zero, &x0);
        let mut hess = DMatrix::zeros(nm, nm);
        let mut lin = DVector::zeros(nm);
        for i in 0..nm {
            let ei = DVector::from_fn(nm, |r, _| if r == i { 1.0 } else { 0.0 });
            let plus = cost(&ei, &x0);
            let minus = cost(&-&ei, &x0);
            lin[i] = (plus - minus) / 2.0;
            hess[(i, i)] = plus + minus - 2.0 * c0;
        }
        for i in 0..nm {
            for j in 0..i {
                let mut eij = DVector::zeros(nm);
                eij[i] = 1.0;
                eij[j] = 1.0;
                let v = cost(&eij, &x0) - c0 - lin[i] - lin[j] - 0.5 * (hess[(i, i)] + hess[(j, j)]);
                hess[(i, j)] = v;
                hess[(j, i)] = v;
            }
        }
        let opt = c0 - 0.5 * lin.dot(&hess.clone().cholesky().unwrap().solve(&lin));
        let value = x0.dot(&(&sol.p * &x0));
        assert!(rel_err(opt, value) < 1e-8, "{opt} vs {value}");
    }
}

#[test]
fn terminal_gain_decreases_the_bounded_terminal_cost() {
    // (A+BK)ᵀP(A+BK) - P + Q + εM_x + Kᵀ(R + εM_u)K = 0
    let p = benchmark();
    let s = &p.setup;
    let t: &TerminalDesign<f64> = &p.terminal;
    let acl = t.closed_loop(&s.plant);
    let qe = &s.q + &t.m_x * s.epsilon;
    let re = &s.r + &t.m_u * s.epsilon;
    let residual = acl.transpose() * &t.p * &acl - &t.p + qe + t.k.transpose() * re * &t.k;
    assert!(residual.amax() < 1e-8 * t.p.amax());
    assert!(acl.complex_eigenvalues().iter().all(|l| l.norm() < 1.0));
}

#[test]
fn shift_decreases_cost_by_the_stage_cost() {
    let p = benchmark();
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..200 {
        let (u, x) = random_point(&mut rng, &p);
        let u0 = p.first_input(&u);
        let x_next = p.setup.plant.step(&x, &u0);
        let u_next = shift(&p.cp, &p.terminal, &u, &x);
        let drop = p.cp.eval_cost(&u_next, &x_next) - p.cp.eval_cost(&u, &x);
        assert!(drop <= -p.stage_cost(&x, &u0) + 1e-8);
    }
}

#[test]
fn optimizer_updates_never_increase_cost() {
    let p = benchmark();
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for method in Method::ALL {
        let cfg = SearchConfig::new(method);
        let mut carry = Carry::new();
        let (mut u, x) = random_point(&mut rng, &p);
        for _ in 0..20 {
            let before = p.cp.eval_cost(&u, &x);
            let up = optimizer_update(&cfg, &mut carry, &p.cp, &u, &x).unwrap();
            let after = p.cp.eval_cost(&up.u, &x);
            assert!(up.gamma >= 0.0);
            assert!(after - before <= -up.gamma + 1e-9 * before.abs().max(1.0), "{method}");
            u = up.u;
        }
    }
}

#[test]
fn closed_loop_step_applies_first_input_and_decreases_cost() {
    let p = benchmark();
    let x0 = DVector::from_row_slice(&[1.0, 0.3]);
    for method in Method::ALL {
        let cfg = SearchConfig::new(method);
        let mut state = initialize(InitMode::GainRollout, &x0, &p).unwrap();
        let mut x = x0.clone();
        for _ in 0..30 {
            let cost = p.cp.eval_cost(&state.u, &x);
            let first = p.first_input(&state.u);
            let r = controller_step(&p, &mut state, &x, 2, &cfg).unwrap();
            assert_eq!(r.u, first);
            assert_eq!(r.x_next, p.setup.plant.step(&x, &first));
            let stage = p.stage_cost(&x, &first);
            x = r.x_next;
            assert!(p.cp.eval_cost(&state.u, &x) - cost <= -stage + 1e-8);
        }
    }
}

#[test]
fn newton_decrement_matches_explicit_solve() {
    let p = benchmark();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let (u, x) = random_point(&mut rng, &p);
    let g = p.cp.eval_grad(&u, &x);
    let inv = p.cp.eval_hess(&u, &x).try_inverse().unwrap();
    let explicit = g.dot(&(inv * &g));
    assert!(rel_err(newton_decrement_sq(&p.cp, &u, &x).unwrap(), explicit) < 1e-8);
}

#[test]
fn max_violation_matches_bisection_on_an_interval() {
    // On [-1, 1] the largest feasible ξ with εB(ξ) ≤ α solves a scalar
    // monotone equation on ξ ≥ 0.
    let set = Polytope::from_box(&[-1.0], &[1.0]).unwrap();
    let eps = 1e-2;
    for delta in [1e-3, 0.1] {
        let bar = RecenteredBarrier::new(set.clone(), delta).unwrap();
        for alpha in [1e-4, 1e-2, 0.05, 0.2, 1.0] {
            let f = |xi: f64| eps * bar.value(&DVector::from_element(1, xi)) - alpha;
            let (mut lo, mut hi) = (0.0, 1.0);
            while f(hi) < 0.0 {
                hi *= 2.0;
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if f(mid) < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let got = max_violation(&bar, eps, alpha, 0);
            assert!((got - (lo - 1.0)).abs() < 1e-9, "delta {delta} alpha {alpha}: {got} vs {}", lo - 1.0);
        }
    }
}

#[test]
fn surplus_is_zero_at_the_origin() {
    let p = benchmark();
    let x = DVector::zeros(2);
    let u = DVector::zeros(p.cp.nm());
    assert_eq!(alpha_hat(&p.cp, &p.terminal.p_uc, &u, &x), 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    for _ in 0..50 {
        let (u, x) = random_point(&mut rng, &p);
        assert!(alpha_hat(&p.cp, &p.terminal.p_uc, &u, &x) >= 0.0);
    }
}
