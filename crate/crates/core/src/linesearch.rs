//! Search directions and step sizes for the optimizer update `U + s p`.
//!
//! Gradient and Newton steps use Armijo backtracking `s = ρʲ s_init`.
//! Conjugate-gradient and quasi-Newton steps use the bracketing/zoom
//! strong-Wolfe search of Nocedal and Wright (Algorithms 3.5 and 3.6) with
//! safeguarded cubic interpolation. All trial evaluations go through
//! [`LineRestriction`], so sufficient decrease is tested on the exact cost
//! change rather than on a difference of two rounded costs.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::condensed::{CondensedProblem, LineRestriction};
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Gradient,
    ConjugateGradient,
    Newton,
    QuasiNewton,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Gradient,
        Method::ConjugateGradient,
        Method::Newton,
        Method::QuasiNewton,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Method::Gradient => "g",
            Method::ConjugateGradient => "cg",
            Method::Newton => "n",
            Method::QuasiNewton => "qn",
        }
    }

    /// Whether the step size must satisfy the strong Wolfe pair.
    pub fn uses_wolfe(self) -> bool {
        matches!(self, Method::ConjugateGradient | Method::QuasiNewton)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "g" | "gradient" => Ok(Method::Gradient),
            "cg" | "conjugate-gradient" => Ok(Method::ConjugateGradient),
            "n" | "newton" => Ok(Method::Newton),
            "qn" | "quasi-newton" | "bfgs" => Ok(Method::QuasiNewton),
            other => Err(format!("unknown method `{other}` (expected g, cg, n or qn)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearchConfig<T: Real> {
    pub method: Method,
    pub c1: T,
    pub c2: T,
    pub rho: T,
    pub s_init: T,
    pub max_ls_iters: usize,
}

impl<T: Real> LineSearchConfig<T> {
    /// `c1 = 1e-3`, `c2 = 0.9`, `ρ = 0.5`, `s_init = 1`.
    pub fn new(method: Method) -> Self {
        Self {
            method,
            c1: T::lit(1e-3),
            c2: T::lit(0.9),
            rho: T::lit(0.5),
            s_init: T::one(),
            max_ls_iters: 100,
        }
    }

    pub fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let zero = T::zero();
        let one = T::one();
        if !(zero < self.c1 && self.c1 < self.c2 && self.c2 < one) {
            return Err(Error::config("line_search.c1/c2", None, "need 0 < c1 < c2 < 1"));
        }
        if !(zero < self.rho && self.rho < one) {
            return Err(Error::config("line_search.rho", None, "need 0 < rho < 1"));
        }
        if !(self.s_init > zero) || !self.s_init.is_finite() {
            return Err(Error::config("line_search.s_init", None, "must be positive"));
        }
        if self.max_ls_iters == 0 {
            return Err(Error::config("line_search.max_ls_iters", None, "must be at least 1"));
        }
        Ok(())
    }

    /// Upper bound `1 + log_ρ(2σ(1 - c1)/L)` on Newton backtracking counts.
    pub fn newton_backtracking_bound(&self, sigma: T, lipschitz: T) -> T {
        let s_bar = self.newton_step_floor(sigma, lipschitz) / self.rho;
        T::one() + s_bar.ln() / self.rho.ln()
    }

    /// Lower bound `2ρσ(1 - c1)/L` on accepted Newton steps.
    pub fn newton_step_floor(&self, sigma: T, lipschitz: T) -> T {
        T::lit(2.0) * self.rho * sigma * (T::one() - self.c1) / lipschitz
    }
}

/// Optimizer memory handed between inner iterations and sampling instants.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DirectionCarry<T: Real> {
    pub prev_direction: Option<DVector<T>>,
    pub prev_gradient: Option<DVector<T>>,
    pub inv_hessian_approx: Option<DMatrix<T>>,
}

impl<T: Real> DirectionCarry<T> {
    pub fn new() -> Self {
        Self {
            prev_direction: None,
            prev_gradient: None,
            inv_hessian_approx: None,
        }
    }

    /// Drops the conjugate-gradient history; the inverse-Hessian estimate stays.
    pub fn clear_history(&mut self) {
        self.prev_direction = None;
        self.prev_gradient = None;
    }
}

/// Result of one optimizer update.
#[derive(Debug, Clone, PartialEq)]
pub struct Update<T: Real> {
    pub u: DVector<T>,
    /// Certified decrease `-c1 s gᵀp`.
    pub gamma: T,
    pub step: T,
    pub ls_iters: usize,
    /// Cost change `Ĵ(U′) - Ĵ(U)` evaluated along the line.
    pub change: T,
    pub grad_norm: T,
    pub stationary: bool,
}

/// Gradient norm below which a point is treated as stationary.
pub const STATIONARY_GRAD: f64 = 1e-12;

fn precision_floor<T: Real>(cost: T) -> T {
    T::default_epsilon() * T::lit(64.0) * (T::one() + cost.abs())
}

/// Search direction at `U` for the configured rule; updates the CG history.
pub fn direction<T: Real>(
    cfg: &LineSearchConfig<T>,
    carry: &mut DirectionCarry<T>,
    cp: &CondensedProblem<T>,
    u: &DVector<T>,
    x: &DVector<T>,
) -> Result<DVector<T>> {
    cp.check_dims(u, x)?;
    let g = cp.eval_grad(u, x);
    direction_with_gradient(cfg, carry, cp, u, x, &g)
}

fn direction_with_gradient<T: Real>(
    cfg: &LineSearchConfig<T>,
    carry: &mut DirectionCarry<T>,
    cp: &CondensedProblem<T>,
    u: &DVector<T>,
    x: &DVector<T>,
    g: &DVector<T>,
) -> Result<DVector<T>> {
    if g.norm() <= T::lit(STATIONARY_GRAD) {
        return Ok(DVector::zeros(g.len()));
    }
    let steepest = -g;
    let p = match cfg.method {
        Method::Gradient => steepest,
        Method::Newton => {
            let hess = cp.eval_hess(u, x);
            let chol = hess.cholesky().ok_or(Error::SingularHessian)?;
            -chol.solve(g)
        }
        Method::ConjugateGradient => {
            let p = match (&carry.prev_direction, &carry.prev_gradient) {
                (Some(p_prev), Some(g_prev)) if p_prev.len() == g.len() => {
                    let denom = g_prev.dot(g_prev);
                    let beta = if denom > T::zero() {
                        (g.dot(&(g - g_prev)) / denom).max(T::zero())
                    } else {
                        T::zero()
                    };
                    &steepest + p_prev * beta
                }
                _ => steepest.clone(),
            };
            if g.dot(&p) < T::zero() { p } else { steepest }
        }
        Method::QuasiNewton => {
            let b = carry
                .inv_hessian_approx
                .get_or_insert_with(|| cp.h_inv().clone());
            let p = -(&*b * g);
            if g.dot(&p) < T::zero() {
                p
            } else {
                *b = cp.h_inv().clone();
                -(cp.h_inv() * g)
            }
        }
    };
    if !(g.dot(&p) < T::zero()) {
        return Ok(-g);
    }
    Ok(p)
}

/// Squared Newton decrement `gᵀ(∇²Ĵ)⁻¹g`.
pub fn newton_decrement_sq<T: Real>(cp: &CondensedProblem<T>, u: &DVector<T>, x: &DVector<T>) -> Result<T> {
    let g = cp.eval_grad(u, x);
    let chol = cp.eval_hess(u, x).cholesky().ok_or(Error::SingularHessian)?;
    Ok(g.dot(&chol.solve(&g)))
}

/// Accepted step and the number of trial evaluations beyond the first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome<T: Real> {
    pub s: T,
    pub iterations: usize,
    pub change: T,
}

/// Step size along the descent direction `p` by the configured rule.
pub fn step_size<T: Real>(
    cfg: &LineSearchConfig<T>,
    cp: &CondensedProblem<T>,
    u: &DVector<T>,
    x: &DVector<T>,
    p: &DVector<T>,
) -> Result<StepOutcome<T>> {
    let line = cp.line(u, x, p);
    if cfg.method.uses_wolfe() {
        strong_wolfe(cfg, &line)
    } else {
        backtracking(cfg, &line)
    }
}

/// Smallest `j ≥ 0` with `φ(ρʲ s₀) - φ(0) ≤ c1 ρʲ s₀ φ′(0)`.
pub fn backtracking<T: Real>(cfg: &LineSearchConfig<T>, line: &LineRestriction<'_, T>) -> Result<StepOutcome<T>> {
    let d0 = line.slope(T::zero());
    let mut s = cfg.s_init;
    for j in 0..=cfg.max_ls_iters {
        let change = line.change(s);
        if change <= cfg.c1 * s * d0 {
            return Ok(StepOutcome { s, iterations: j, change });
        }
        s *= cfg.rho;
    }
    Err(Error::LineSearchStall {
        iterations: cfg.max_ls_iters,
    })
}

/// Minimizer of the cubic through `(a, fa, da)` and `(b, fb, db)`, kept in
/// the middle 80% of the interval; bisection when the cubic is degenerate.
fn cubic_trial<T: Real>(a: T, fa: T, da: T, b: T, fb: T, db: T) -> T {
    let lo = a.min(b);
    let hi = a.max(b);
    let margin = (hi - lo) * T::lit(0.1);
    let mid = (a + b) * T::lit(0.5);
    let d1 = da + db - T::lit(3.0) * (fa - fb) / (a - b);
    let rad = d1 * d1 - da * db;
    let trial = if rad >= T::zero() {
        let d2 = (b - a).signum() * rad.sqrt();
        let denom = db - da + T::lit(2.0) * d2;
        if denom != T::zero() {
            b - (b - a) * (db + d2 - d1) / denom
        } else {
            mid
        }
    } else {
        mid
    };
    if trial.is_finite() && trial >= lo + margin && trial <= hi - margin {
        trial
    } else {
        mid
    }
}

/// Bracketing phase followed by zoom; the result satisfies
/// `φ(s) - φ(0) ≤ c1 s φ′(0)` and `|φ′(s)| ≤ c2 |φ′(0)|`.
pub fn strong_wolfe<T: Real>(cfg: &LineSearchConfig<T>, line: &LineRestriction<'_, T>) -> Result<StepOutcome<T>> {
    let d0 = line.slope(T::zero());
    let armijo = |s: T, f: T| f <= cfg.c1 * s * d0;
    let curvature = |d: T| d.abs() <= -cfg.c2 * d0;
    let mut evals = 0usize;

    let (mut s_prev, mut f_prev, mut d_prev) = (T::zero(), T::zero(), d0);
    let mut s = cfg.s_init;
    let bracket = loop {
        if evals > cfg.max_ls_iters {
            return Err(Error::LineSearchStall { iterations: evals });
        }
        let f = line.change(s);
        evals += 1;
        if !armijo(s, f) || (s_prev > T::zero() && f >= f_prev) {
            let d = line.slope(s);
            break ((s_prev, f_prev, d_prev), (s, f, d));
        }
        let d = line.slope(s);
        if curvature(d) {
            return Ok(StepOutcome {
                s,
                iterations: evals - 1,
                change: f,
            });
        }
        if d >= T::zero() {
            break ((s, f, d), (s_prev, f_prev, d_prev));
        }
        s_prev = s;
        f_prev = f;
        d_prev = d;
        s *= T::lit(2.0);
    };

    let ((mut lo, mut f_lo, mut d_lo), (mut hi, mut f_hi, mut d_hi)) = bracket;
    loop {
        if evals > cfg.max_ls_iters {
            return Err(Error::LineSearchStall { iterations: evals });
        }
        let s = cubic_trial(lo, f_lo, d_lo, hi, f_hi, d_hi);
        let f = line.change(s);
        let d = line.slope(s);
        evals += 1;
        if !armijo(s, f) || f >= f_lo {
            hi = s;
            f_hi = f;
            d_hi = d;
        } else {
            if curvature(d) {
                return Ok(StepOutcome {
                    s,
                    iterations: evals - 1,
                    change: f,
                });
            }
            if d * (hi - lo) >= T::zero() {
                hi = lo;
                f_hi = f_lo;
                d_hi = d_lo;
            }
            lo = s;
            f_lo = f;
            d_lo = d;
        }
    }
}

/// One optimizer update `U′ = U + s p` at the fixed state `x`.
///
/// Points with `‖g‖ ≤ 1e-12`, or whose predicted decrease `-gᵀp` is below
/// the working precision of the cost, are returned unchanged with `γ = 0`.
pub fn optimizer_update<T: Real>(
    cfg: &LineSearchConfig<T>,
    carry: &mut DirectionCarry<T>,
    cp: &CondensedProblem<T>,
    u: &DVector<T>,
    x: &DVector<T>,
) -> Result<Update<T>> {
    cp.check_dims(u, x)?;
    let (cost, g) = cp.eval_cost_grad(u, x);
    let grad_norm = g.norm();
    let p = direction_with_gradient(cfg, carry, cp, u, x, &g)?;
    let slope = g.dot(&p);
    if grad_norm <= T::lit(STATIONARY_GRAD) || -slope <= precision_floor(cost) {
        return Ok(Update {
            u: u.clone(),
            gamma: T::zero(),
            step: T::zero(),
            ls_iters: 0,
            change: T::zero(),
            grad_norm,
            stationary: true,
        });
    }
    let out = step_size(cfg, cp, u, x, &p)?;
    let u_next = u + &p * out.s;
    match cfg.method {
        Method::ConjugateGradient => {
            carry.prev_direction = Some(p.clone());
            carry.prev_gradient = Some(g.clone());
        }
        Method::QuasiNewton => {
            let g_next = cp.eval_grad(&u_next, x);
            bfgs_update(carry, &(&p * out.s), &(g_next - &g));
        }
        _ => {}
    }
    Ok(Update {
        u: u_next,
        gamma: -cfg.c1 * out.s * slope,
        step: out.s,
        ls_iters: out.iterations,
        change: out.change,
        grad_norm,
        stationary: false,
    })
}

/// Inverse BFGS update; skipped when `sᵀy ≤ 1e-12 ‖s‖‖y‖`.
pub fn bfgs_update<T: Real>(carry: &mut DirectionCarry<T>, s: &DVector<T>, y: &DVector<T>) -> bool {
    let Some(b) = carry.inv_hessian_approx.as_mut() else {
        return false;
    };
    let sy = s.dot(y);
    if sy <= T::lit(1e-12) * s.norm() * y.norm() {
        return false;
    }
    let rho = T::one() / sy;
    let by = &*b * y;
    let y_by = y.dot(&by);
    // B⁺ = B - ρ(s (By)ᵀ + By sᵀ) + (ρ² yᵀBy + ρ) s sᵀ
    b.ger(-rho, s, &by, T::one());
    b.ger(-rho, &by, s, T::one());
    b.ger(rho * rho * y_by + rho, s, s, T::one());
    let sym = (&*b + b.transpose()) * T::lit(0.5);
    *b = sym;
    true
}
