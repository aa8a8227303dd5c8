//! Runtime certificates: the surplus `α̂`, worst-case violation bounds over
//! barrier sublevel sets, the boundary level `β̄` and the resulting
//! feasibility test.

use nalgebra::{DMatrix, DVector};

use crate::barrier::RecenteredBarrier;
use crate::condensed::CondensedProblem;
use crate::mpc::MpcProblem;
use crate::scalar::Real;

/// Certificate for one sampling instant.
#[derive(Debug, Clone, PartialEq)]
pub struct ViolationCertificate<T: Real> {
    pub alpha_hat: T,
    pub zx: DVector<T>,
    pub zu: DVector<T>,
    pub k: usize,
}

impl<T: Real> ViolationCertificate<T> {
    pub fn zx_max(&self) -> T {
        self.zx.max()
    }

    pub fn zu_max(&self) -> T {
        self.zu.max()
    }
}

/// Minimal barrier values on the constraint boundaries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryLevels<T: Real> {
    pub beta_x: T,
    pub beta_u: T,
    pub beta: T,
}

/// `α̂ = Ĵ(U, x) - xᵀP_uc x`, clamped at zero.
pub fn alpha_hat<T: Real>(cp: &CondensedProblem<T>, p_uc: &DMatrix<T>, u: &DVector<T>, x: &DVector<T>) -> T {
    (cp.eval_cost(u, x) - x.dot(&(p_uc * x))).max(T::zero())
}

/// Minimizer of `B̂(ξ) - μ cᵀξ` by damped Newton from `start`.
fn tilted_minimizer<T: Real>(bar: &RecenteredBarrier<T>, c: &DVector<T>, mu: T, start: &DVector<T>) -> DVector<T> {
    let mut xi = start.clone();
    let quarter = T::lit(0.25);
    for _ in 0..200 {
        let e = bar.eval(&xi);
        let g = &e.gradient - c * mu;
        let Some(chol) = e.hessian.cholesky() else {
            break;
        };
        let p = -chol.solve(&g);
        let lam2 = -g.dot(&p);
        if !(lam2 > T::lit(1e-30)) {
            break;
        }
        let mut t = T::one();
        if lam2 > T::lit(0.1) {
            let phi0 = e.value - mu * c.dot(&xi);
            for _ in 0..60 {
                let trial = &xi + &p * t;
                if bar.value(&trial) - mu * c.dot(&trial) <= phi0 - quarter * t * lam2 {
                    break;
                }
                t *= T::lit(0.5);
            }
        }
        xi += &p * t;
        if lam2 < T::default_epsilon() * T::default_epsilon() {
            break;
        }
    }
    xi
}

/// `max { Cⁱξ - dⁱ : ε B̂(ξ) ≤ α̂ }` for row `row` of the barrier's polytope.
///
/// The maximizer lies on the tilted path `ξ(μ) = argmin B̂(ξ) - μ Cⁱξ`, and
/// `h(μ) = B̂(ξ(μ))` increases from zero. The level `h(μ) = α̂/ε` is found by
/// Newton's method on `μ` (`h′(μ) = μ Cⁱ ∇²B̂⁻¹ Cⁱᵀ`) inside a bisection
/// bracket; a zero surplus gives the origin and `-dⁱ`.
pub fn max_violation<T: Real>(bar: &RecenteredBarrier<T>, epsilon: T, alpha: T, row: usize) -> T {
    let set = bar.set();
    let d = set.d()[row];
    let level = alpha.max(T::zero()) / epsilon;
    if !(level > T::zero()) {
        return -d;
    }
    let c: DVector<T> = set.c().row(row).transpose();
    let mut xi = DVector::zeros(set.dim());
    let h_and_slope = |mu: T, xi: &mut DVector<T>| -> (T, T) {
        *xi = tilted_minimizer(bar, &c, mu, xi);
        let e = bar.eval(xi);
        let slope = match e.hessian.cholesky() {
            Some(ch) => mu * c.dot(&ch.solve(&c)),
            None => T::zero(),
        };
        (e.value, slope)
    };

    let mut lo = T::zero();
    let mut hi = T::one();
    let mut xi_hi;
    loop {
        let (h, _) = h_and_slope(hi, &mut xi);
        if h >= level || hi > T::lit(1e300) {
            xi_hi = xi.clone();
            break;
        }
        lo = hi;
        hi *= T::lit(4.0);
    }
    let mut mu = (lo + hi) * T::lit(0.5);
    let rel = T::lit(1e-13);
    for _ in 0..200 {
        let (h, slope) = h_and_slope(mu, &mut xi);
        if (h - level).abs() <= rel * level {
            return c.dot(&xi) - d;
        }
        if h >= level {
            hi = mu;
            xi_hi = xi.clone();
        } else {
            lo = mu;
        }
        if hi - lo <= rel * hi {
            break;
        }
        let newton = mu - (h - level) / slope;
        mu = if slope > T::zero() && newton > lo && newton < hi {
            newton
        } else {
            (lo + hi) * T::lit(0.5)
        };
    }
    c.dot(&xi_hi) - d
}

/// Orthonormal basis of the complement of `c` from a Householder reflector.
fn null_space<T: Real>(c: &DVector<T>) -> DMatrix<T> {
    let r = c.len();
    let norm = c.norm();
    let mut v = c.clone();
    let sign = if c[0] >= T::zero() { T::one() } else { -T::one() };
    v[0] += sign * norm;
    let vv = v.dot(&v);
    let mut reflector = DMatrix::identity(r, r);
    reflector.ger(-T::lit(2.0) / vv, &v, &v, T::one());
    reflector.columns(1, r - 1).into_owned()
}

/// `min { B̂(ξ) : Cⁱξ = dⁱ }` by Newton on a null-space parameterization.
pub fn facet_minimum<T: Real>(bar: &RecenteredBarrier<T>, row: usize) -> T {
    let set = bar.set();
    let c: DVector<T> = set.c().row(row).transpose();
    let d = set.d()[row];
    let start = &c * (d / c.dot(&c));
    if set.dim() == 1 {
        return bar.value(&start);
    }
    let z = null_space(&c);
    let mut xi = start;
    let tol = T::tol(1e-10);
    for _ in 0..200 {
        let e = bar.eval(&xi);
        let g = z.transpose() * &e.gradient;
        if g.norm() <= tol {
            break;
        }
        let hr = z.transpose() * &e.hessian * &z;
        let Some(chol) = hr.cholesky() else {
            break;
        };
        let p = &z * (-chol.solve(&g));
        let lam2 = -(z.transpose() * &e.gradient).dot(&(z.transpose() * &p));
        let mut t = T::one();
        for _ in 0..60 {
            if bar.value(&(&xi + &p * t)) <= e.value - T::lit(0.25) * t * lam2 {
                break;
            }
            t *= T::lit(0.5);
        }
        xi += &p * t;
    }
    bar.value(&xi)
}

/// `min_i` of the facet minima.
pub fn boundary_level<T: Real>(bar: &RecenteredBarrier<T>) -> T {
    DVector::from_iterator(bar.set().rows(), (0..bar.set().rows()).map(|i| facet_minimum(bar, i))).min()
}

pub fn beta_bar<T: Real>(bar_x: &RecenteredBarrier<T>, bar_u: &RecenteredBarrier<T>) -> BoundaryLevels<T> {
    let beta_x = boundary_level(bar_x);
    let beta_u = boundary_level(bar_u);
    BoundaryLevels {
        beta_x,
        beta_u,
        beta: beta_x.min(beta_u),
    }
}

/// `α̂(U, x) ≤ ε β̄`.
pub fn z_n_membership<T: Real>(
    cp: &CondensedProblem<T>,
    p_uc: &DMatrix<T>,
    beta: T,
    epsilon: T,
    u: &DVector<T>,
    x: &DVector<T>,
) -> bool {
    alpha_hat(cp, p_uc, u, x) <= epsilon * beta
}

/// All violation bounds at `(U, x)`.
pub fn certificate<T: Real>(problem: &MpcProblem<T>, u: &DVector<T>, x: &DVector<T>, k: usize) -> ViolationCertificate<T> {
    let eps = problem.setup.epsilon;
    let alpha = alpha_hat(&problem.cp, &problem.terminal.p_uc, u, x);
    let zx = DVector::from_iterator(
        problem.bar_x.set().rows(),
        (0..problem.bar_x.set().rows()).map(|i| max_violation(&problem.bar_x, eps, alpha, i)),
    );
    let zu = DVector::from_iterator(
        problem.bar_u.set().rows(),
        (0..problem.bar_u.set().rows()).map(|i| max_violation(&problem.bar_u, eps, alpha, i)),
    );
    ViolationCertificate {
        alpha_hat: alpha,
        zx,
        zu,
        k,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Polytope, ProblemSetup};

    fn unit_interval(delta: f64) -> RecenteredBarrier<f64> {
        RecenteredBarrier::new(Polytope::from_box(&[-1.0], &[1.0]).unwrap(), delta).unwrap()
    }

    #[test]
    fn zero_surplus_collapses_to_the_origin() {
        let bar = unit_interval(0.1);
        assert_eq!(max_violation(&bar, 1.0, 0.0, 0), -1.0);
        assert_eq!(max_violation(&bar, 1.0, 0.0, 1), -1.0);
    }

    #[test]
    fn boundary_level_touches_the_boundary() {
        let bar = unit_interval(0.1);
        let level = bar.value(&DVector::from_element(1, 1.0));
        assert!((level - 3.109438).abs() < 1e-6);
        assert!(max_violation(&bar, 1.0, level, 0).abs() < 1e-9);
        let b = beta_bar(&bar, &bar);
        assert!((b.beta_u - level).abs() < 1e-12);
    }

    #[test]
    fn null_space_is_orthonormal_complement() {
        let c = DVector::from_row_slice(&[3.0, -1.0, 2.0]);
        let z = null_space(&c);
        assert!((z.transpose() * &c).amax() < 1e-14);
        assert!((z.transpose() * &z - DMatrix::identity(2, 2)).amax() < 1e-14);
    }

    #[test]
    fn beta_decreases_with_delta() {
        let s = ProblemSetup::<f64>::double_integrator();
        let level = |delta: f64| {
            let bx = RecenteredBarrier::new(s.state_set.clone(), delta).unwrap();
            let bu = RecenteredBarrier::new(s.input_set.clone(), delta).unwrap();
            beta_bar(&bx, &bu).beta
        };
        assert!(level(1e-3) > level(1e-2));
        assert!(level(1e-2) > level(1e-1));
    }
}
