// Shared helpers for the integration tests: seeded sampling, random
// problems and an independent stage-by-stage cost oracle.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rbmpc::{MpcProblem, PlantModel, Polytope, ProblemSetup};

pub fn uniform_vec(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(lo..hi))
}

pub fn uniform_in_box(rng: &mut ChaCha8Rng, lo: &[f64], hi: &[f64]) -> DVector<f64> {
    DVector::from_iterator(lo.len(), lo.iter().zip(hi).map(|(l, h)| rng.random_range(*l..*h)))
}

/// Relaxed log barrier written out from its definition.
pub fn scalar_barrier(z: f64, delta: f64) -> f64 {
    if z >= delta {
        -z.ln()
    } else {
        0.5 * (((z - 2.0 * delta) / delta).powi(2) - 1.0) - delta.ln()
    }
}

/// `Σ (1 + w_i) [b(d_i - C_i ξ) + ln d_i]`.
pub fn polytope_barrier(set: &Polytope<f64>, weights: &DVector<f64>, delta: f64, xi: &DVector<f64>) -> f64 {
    let cx = set.c() * xi;
    (0..set.rows())
        .map(|i| (1.0 + weights[i]) * (scalar_barrier(set.d()[i] - cx[i], delta) + set.d()[i].ln()))
        .sum()
}

/// Cost by forward simulation: stage costs with barriers on `x_0..x_{N-1}`
/// and `u_0..u_{N-1}`, plus `x_Nᵀ P x_N`.
pub fn stage_sum_cost(problem: &MpcProblem<f64>, u: &DVector<f64>, x0: &DVector<f64>) -> f64 {
    let s = &problem.setup;
    let m = s.m();
    let eps = s.epsilon;
    let delta = s.delta;
    let mut x = x0.clone();
    let mut total = 0.0;
    for k in 0..s.horizon {
        let uk = u.rows(k * m, m).into_owned();
        total += x.dot(&(&s.q * &x)) + uk.dot(&(&s.r * &uk));
        total += eps * polytope_barrier(&s.state_set, problem.bar_x.weights(), delta, &x);
        total += eps * polytope_barrier(&s.input_set, problem.bar_u.weights(), delta, &uk);
        x = s.plant.a() * &x + s.plant.b() * &uk;
    }
    total + x.dot(&(&problem.terminal.p * &x))
}

/// A random problem with `n ≤ 4`, `m ≤ 2`, `N ≤ 8` and box constraints around
/// the origin; retried until it passes validation.
pub fn random_problem(rng: &mut ChaCha8Rng) -> MpcProblem<f64> {
    loop {
        let n = rng.random_range(1..=4);
        let m = rng.random_range(1..=2);
        let horizon = rng.random_range(1..=8);
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-0.8..0.8)) + DMatrix::identity(n, n) * 0.5;
        let b = DMatrix::from_fn(n, m, |_, _| rng.random_range(-1.0..1.0));
        let lq = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let lr = DMatrix::from_fn(m, m, |_, _| rng.random_range(-1.0..1.0));
        let q = &lq * lq.transpose() + DMatrix::identity(n, n) * 0.1;
        let r = &lr * lr.transpose() + DMatrix::identity(m, m) * 0.1;
        let bounds = |rng: &mut ChaCha8Rng, k: usize| -> (Vec<f64>, Vec<f64>) {
            ((0..k).map(|_| -rng.random_range(0.5..3.0)).collect(), (0..k).map(|_| rng.random_range(0.5..3.0)).collect())
        };
        let (xl, xu) = bounds(rng, n);
        let (ul, uu) = bounds(rng, m);
        let setup = ProblemSetup {
            plant: PlantModel::new(a, b).unwrap(),
            state_set: Polytope::from_box(&xl, &xu).unwrap(),
            input_set: Polytope::from_box(&ul, &uu).unwrap(),
            q,
            r,
            horizon,
            epsilon: 10f64.powf(rng.random_range(-3.0..-1.0)),
            delta: 10f64.powf(rng.random_range(-3.0..-1.0)),
        };
        if let Ok(p) = MpcProblem::build(setup) {
            return p;
        }
    }
}

pub fn benchmark() -> MpcProblem<f64> {
    MpcProblem::build(ProblemSetup::double_integrator()).unwrap()
}

/// Random `(U, x)` around the benchmark's feasible region, including
/// points well outside it so the quadratic branch is exercised.
pub fn random_point(rng: &mut ChaCha8Rng, problem: &MpcProblem<f64>) -> (DVector<f64>, DVector<f64>) {
    let (lo, hi) = problem.setup.state_set.bounding_box().unwrap();
    let widen = |v: &[f64]| v.iter().map(|x| x * 1.2).collect::<Vec<_>>();
    let x = uniform_in_box(rng, &widen(&lo), &widen(&hi));
    let (ulo, uhi) = problem.setup.input_set.bounding_box().unwrap();
    let nm = problem.cp.nm();
    let m = problem.cp.m();
    let u = DVector::from_fn(nm, |i, _| {
        let j = i % m;
        rng.random_range(1.2 * ulo[j]..1.2 * uhi[j])
    });
    (u, x)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}
