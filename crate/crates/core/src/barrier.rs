//! Relaxed logarithmic barriers.
//!
//! The scalar barrier is `-ln z` for `z ≥ δ` and the quadratic
//! `½[((z - 2δ)/δ)² - 1] - ln δ` below, glued so that value, slope and
//! curvature are continuous at `z = δ`. A polytope barrier sums the scalar
//! barrier over the slacks `z_i = d_i - C_i ξ`, weighted by `1 + w_i` and
//! offset by `ln d_i` so that it vanishes, with zero gradient, at the origin.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lp::{solve_standard_form, LpOutcome};
use crate::model::Polytope;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelaxedLogBarrier<T: Real> {
    delta: T,
}

impl<T: Real> RelaxedLogBarrier<T> {
    pub fn new(delta: T) -> Self {
        debug_assert!(delta > T::zero());
        Self { delta }
    }

    pub fn delta(&self) -> T {
        self.delta
    }

    #[inline]
    fn relaxed(&self, z: T) -> bool {
        z < self.delta
    }

    /// Value, first and second derivative at `z`.
    pub fn eval(&self, z: T) -> (T, T, T) {
        (self.value(z), self.slope(z), self.curvature(z))
    }

    #[inline]
    pub fn value(&self, z: T) -> T {
        let d = self.delta;
        if self.relaxed(z) {
            let t = (z - d - d) / d;
            T::lit(0.5) * (t * t - T::one()) - d.ln()
        } else {
            -z.ln()
        }
    }

    #[inline]
    pub fn slope(&self, z: T) -> T {
        let d = self.delta;
        if self.relaxed(z) {
            (z - d - d) / (d * d)
        } else {
            -T::one() / z
        }
    }

    #[inline]
    pub fn curvature(&self, z: T) -> T {
        let c = z.max(self.delta);
        T::one() / (c * c)
    }

    /// `value(offset + shift) + ln(offset)`, accurate when `shift` is small
    /// relative to `offset > 0`.
    #[inline]
    pub(crate) fn centered_value(&self, offset: T, shift: T) -> T {
        let z = offset + shift;
        if self.relaxed(z) {
            let d = self.delta;
            let t = (z - d - d) / d;
            T::lit(0.5) * (t * t - T::one()) + (offset / d).ln()
        } else {
            -(shift / offset).ln_1p()
        }
    }

    /// `value(z + dz) - value(z)` without cancellation when both points sit
    /// on the same branch.
    #[inline]
    pub(crate) fn change(&self, z: T, dz: T) -> T {
        let z1 = z + dz;
        match (self.relaxed(z), self.relaxed(z1)) {
            (false, false) => -(dz / z).ln_1p(),
            (true, true) => {
                let d = self.delta;
                T::lit(0.5) * dz * (z1 + z - T::lit(4.0) * d) / (d * d)
            }
            _ => self.value(z1) - self.value(z),
        }
    }
}

/// Nonnegative weights `w` with `Cᵀ diag(1/d)(1 + w) = 0` and minimal `Σ w`,
/// which make the weighted barrier stationary at the origin.
pub fn compute_recentering_weights<T: Real>(set: &Polytope<T>) -> Result<DVector<T>> {
    let q = set.rows();
    let r = set.dim();
    let inv_d = set.d().map(|d| T::one() / d);
    // A = Cᵀ diag(1/d), b = -Cᵀ (1/d)
    let mut a = set.c().transpose();
    for i in 0..q {
        for j in 0..r {
            a[(j, i)] *= inv_d[i];
        }
    }
    let b = -(set.c().transpose() * &inv_d);
    let cost = DVector::from_element(q, T::one());
    match solve_standard_form(&cost, &a, &b) {
        LpOutcome::Optimal(w) => {
            let residual = (&a * &w - &b).amax();
            let scale = a.amax().max(T::one());
            if residual > T::tol(1e-10) * scale {
                return Err(Error::InfeasibleRecentering {
                    residual: residual.as_f64(),
                });
            }
            Ok(w)
        }
        LpOutcome::Infeasible { residual } => Err(Error::InfeasibleRecentering {
            residual: residual.as_f64(),
        }),
        // the cost is bounded below by zero on w ≥ 0
        LpOutcome::Unbounded => unreachable!("Σw is bounded below on w ≥ 0"),
    }
}

/// Value, gradient and Hessian of a polytope barrier at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct BarrierEval<T: Real> {
    pub value: T,
    pub gradient: DVector<T>,
    pub hessian: DMatrix<T>,
}

/// Weight-recentered relaxed barrier for a polytope.
#[derive(Debug, Clone, PartialEq)]
pub struct RecenteredBarrier<T: Real> {
    set: Polytope<T>,
    scalar: RelaxedLogBarrier<T>,
    weights: DVector<T>,
}

impl<T: Real> RecenteredBarrier<T> {
    /// Computes minimal-sum recentering weights for `set`.
    pub fn new(set: Polytope<T>, delta: T) -> Result<Self> {
        let weights = compute_recentering_weights(&set)?;
        Ok(Self::with_weights(set, delta, weights))
    }

    pub fn with_weights(set: Polytope<T>, delta: T, weights: DVector<T>) -> Self {
        assert_eq!(weights.len(), set.rows(), "one weight per constraint row");
        Self {
            set,
            scalar: RelaxedLogBarrier::new(delta),
            weights,
        }
    }

    pub fn set(&self) -> &Polytope<T> {
        &self.set
    }

    pub fn weights(&self) -> &DVector<T> {
        &self.weights
    }

    pub fn delta(&self) -> T {
        self.scalar.delta()
    }

    pub fn scalar(&self) -> &RelaxedLogBarrier<T> {
        &self.scalar
    }

    /// Same set and weights, different relaxation parameter.
    pub fn with_delta(&self, delta: T) -> Self {
        Self::with_weights(self.set.clone(), delta, self.weights.clone())
    }

    pub fn value(&self, xi: &DVector<T>) -> T {
        let cx = self.set.c() * xi;
        let d = self.set.d();
        let mut v = T::zero();
        for i in 0..self.set.rows() {
            v += (T::one() + self.weights[i]) * self.scalar.centered_value(d[i], -cx[i]);
        }
        v
    }

    pub fn eval(&self, xi: &DVector<T>) -> BarrierEval<T> {
        let c = self.set.c();
        let d = self.set.d();
        let cx = c * xi;
        let q = self.set.rows();
        let mut value = T::zero();
        // dB/dξ = Σ (1+w_i) B'(z_i) (-C_iᵀ); d²B/dξ² = Cᵀ diag((1+w_i) B''(z_i)) C
        let mut slope = DVector::zeros(q);
        let mut curv = DVector::zeros(q);
        for i in 0..q {
            let wi = T::one() + self.weights[i];
            let z = d[i] - cx[i];
            value += wi * self.scalar.centered_value(d[i], -cx[i]);
            slope[i] = -wi * self.scalar.slope(z);
            curv[i] = wi * self.scalar.curvature(z);
        }
        let gradient = c.transpose() * slope;
        let mut scaled = c.clone();
        for i in 0..q {
            let s = curv[i];
            scaled.row_mut(i).scale_mut(s);
        }
        let hessian = c.transpose() * scaled;
        BarrierEval {
            value,
            gradient,
            hessian,
        }
    }

    /// `M = (1/2δ²) Cᵀ diag(1 + w) C`, a global quadratic upper bound:
    /// `B(ξ) ≤ ξᵀ M ξ`.
    pub fn quadratic_upper_bound_matrix(&self) -> DMatrix<T> {
        let delta = self.delta();
        let factor = T::one() / (T::lit(2.0) * delta * delta);
        let c = self.set.c();
        let mut scaled = c.clone();
        for i in 0..self.set.rows() {
            scaled.row_mut(i).scale_mut(factor * (T::one() + self.weights[i]));
        }
        c.transpose() * scaled
    }
}
