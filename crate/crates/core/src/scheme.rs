//! The anytime controller: apply `Π₀U`, shift, then run `i_T` optimizer
//! updates at the predicted successor state.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;

use crate::condensed::CondensedProblem;
use crate::error::{Error, Result};
use crate::linesearch::{optimizer_update, DirectionCarry, LineSearchConfig, Method};
use crate::mpc::MpcProblem;
use crate::riccati::{gain_rollout, TerminalDesign};
use crate::scalar::Real;

/// Number of optimizer updates per sampling instant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IterationSchedule {
    Fixed(usize),
    /// Entry `k mod len` is used at instant `k`.
    PerStep(Vec<usize>),
}

impl IterationSchedule {
    pub fn iterations_at(&self, k: usize) -> usize {
        match self {
            IterationSchedule::Fixed(n) => *n,
            IterationSchedule::PerStep(list) if list.is_empty() => 0,
            IterationSchedule::PerStep(list) => list[k % list.len()],
        }
    }
}

impl fmt::Display for IterationSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IterationSchedule::Fixed(n) => write!(f, "{n}"),
            IterationSchedule::PerStep(list) => {
                let parts: Vec<String> = list.iter().map(|v| v.to_string()).collect();
                f.write_str(&parts.join(","))
            }
        }
    }
}

impl FromStr for IterationSchedule {
    type Err = String;

    /// `"5"` is a fixed count; `"1,10"` is a cycled list.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let values = parts
            .iter()
            .map(|p| p.parse::<usize>().map_err(|_| format!("invalid iteration count `{p}`")))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        if values.len() == 1 && !s.contains(',') {
            Ok(IterationSchedule::Fixed(values[0]))
        } else {
            Ok(IterationSchedule::PerStep(values))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InitMode {
    Zero,
    /// Open-loop inputs of the terminal feedback, `K̄x₀`.
    GainRollout,
    /// Minimizer `Û*(x₀)`.
    Optimal,
}

impl InitMode {
    pub const ALL: [InitMode; 3] = [InitMode::Zero, InitMode::GainRollout, InitMode::Optimal];

    pub fn label(self) -> &'static str {
        match self {
            InitMode::Zero => "zero",
            InitMode::GainRollout => "gain",
            InitMode::Optimal => "optimal",
        }
    }
}

impl fmt::Display for InitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for InitMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "zero" => Ok(InitMode::Zero),
            "gain" | "gain-rollout" | "gain_rollout" => Ok(InitMode::GainRollout),
            "optimal" => Ok(InitMode::Optimal),
            other => Err(format!("unknown init mode `{other}` (expected zero, gain or optimal)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState<T: Real> {
    pub u: DVector<T>,
    pub carry: DirectionCarry<T>,
    pub k: usize,
}

impl<T: Real> ControllerState<T> {
    pub fn new(u: DVector<T>) -> Self {
        Self {
            u,
            carry: DirectionCarry::new(),
            k: 0,
        }
    }
}

/// Accepted step size and backtracking count of one inner update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerStep<T: Real> {
    pub s: T,
    pub ls_iters: usize,
}

/// What happened during one sampling instant.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport<T: Real> {
    /// Applied input `Π₀U(k)`.
    pub u: DVector<T>,
    /// Predicted successor state `Ax + BΠ₀U(k)`.
    pub x_next: DVector<T>,
    pub inner: Vec<InnerStep<T>>,
    pub ls_iters: usize,
    /// Sum of certified decreases over the inner updates.
    pub gamma: T,
    /// `‖∇Ĵ(U(k+1), x⁺)‖` after the updates.
    pub grad_norm: T,
}

/// `[u₁; …; u_{N-1}; K x_N(U, x)]`.
pub fn shift<T: Real>(
    cp: &CondensedProblem<T>,
    terminal: &TerminalDesign<T>,
    u: &DVector<T>,
    x: &DVector<T>,
) -> DVector<T> {
    let m = cp.m();
    let nm = cp.nm();
    let mut out = DVector::zeros(nm);
    out.rows_mut(0, nm - m).copy_from(&u.rows(m, nm - m));
    let xn = cp.terminal_state(u, x);
    out.rows_mut(nm - m, m).copy_from(&(&terminal.k * xn));
    out
}

/// Runs one sampling instant and advances `state` to `U(k+1)`.
pub fn controller_step<T: Real>(
    problem: &MpcProblem<T>,
    state: &mut ControllerState<T>,
    x: &DVector<T>,
    iterations: usize,
    cfg: &LineSearchConfig<T>,
) -> Result<StepReport<T>> {
    let cp = &problem.cp;
    cp.check_dims(&state.u, x)?;
    let u = problem.first_input(&state.u);
    let x_next = problem.setup.plant.step(x, &u);
    let mut bar_u = shift(cp, &problem.terminal, &state.u, x);
    state.carry.clear_history();
    let mut inner = Vec::with_capacity(iterations);
    let mut gamma = T::zero();
    let mut ls_iters = 0;
    for _ in 0..iterations {
        let up = optimizer_update(cfg, &mut state.carry, cp, &bar_u, &x_next)?;
        if up.stationary {
            break;
        }
        inner.push(InnerStep {
            s: up.step,
            ls_iters: up.ls_iters,
        });
        gamma += up.gamma;
        ls_iters += up.ls_iters;
        bar_u = up.u;
    }
    let grad_norm = cp.eval_grad(&bar_u, &x_next).norm();
    state.u = bar_u;
    state.k += 1;
    Ok(StepReport {
        u,
        x_next,
        inner,
        ls_iters,
        gamma,
        grad_norm,
    })
}

/// Gradient norm targeted by [`optimal_input`].
pub const OPTIMAL_GRAD_TOL: f64 = 1e-9;

/// Damped Newton iterations from `K̄x` until `‖∇Ĵ‖ ≤ tol` or until the
/// predicted decrease drops below the working precision of the cost.
pub fn optimal_input<T: Real>(problem: &MpcProblem<T>, x: &DVector<T>, tol: T) -> Result<DVector<T>> {
    let cp = &problem.cp;
    let cfg = LineSearchConfig::new(Method::Newton);
    let mut carry = DirectionCarry::new();
    let mut u = gain_rollout(&problem.setup.plant, &problem.terminal.k, cp.horizon(), x);
    for _ in 0..500 {
        if cp.eval_grad(&u, x).norm() <= tol {
            return Ok(u);
        }
        let up = optimizer_update(&cfg, &mut carry, cp, &u, x)?;
        if up.stationary {
            return Ok(u);
        }
        u = up.u;
    }
    Err(Error::LineSearchStall { iterations: 500 })
}

pub fn initialize<T: Real>(mode: InitMode, x0: &DVector<T>, problem: &MpcProblem<T>) -> Result<ControllerState<T>> {
    problem.cp.check_dims(&DVector::zeros(problem.cp.nm()), x0)?;
    let u = match mode {
        InitMode::Zero => DVector::zeros(problem.cp.nm()),
        InitMode::GainRollout => gain_rollout(
            &problem.setup.plant,
            &problem.terminal.k,
            problem.cp.horizon(),
            x0,
        ),
        InitMode::Optimal => optimal_input(problem, x0, T::lit(OPTIMAL_GRAD_TOL))?,
    };
    Ok(ControllerState::new(u))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ProblemSetup;

    fn benchmark() -> MpcProblem<f64> {
        MpcProblem::build(ProblemSetup::double_integrator()).unwrap()
    }

    #[test]
    fn schedule_parsing() {
        assert_eq!("5".parse::<IterationSchedule>().unwrap(), IterationSchedule::Fixed(5));
        let alt: IterationSchedule = "1, 10".parse().unwrap();
        assert_eq!(alt, IterationSchedule::PerStep(vec![1, 10]));
        assert_eq!(alt.iterations_at(3), 10);
        assert_eq!(alt.to_string(), "1,10");
        assert!("1,x".parse::<IterationSchedule>().is_err());
    }

    #[test]
    fn origin_is_an_equilibrium() {
        let p = benchmark();
        let x = DVector::zeros(2);
        for mode in InitMode::ALL {
            let mut st = initialize(mode, &x, &p).unwrap();
            assert_eq!(st.u.amax(), 0.0);
            let rep = controller_step(&p, &mut st, &x, 3, &LineSearchConfig::new(Method::Newton)).unwrap();
            assert_eq!(rep.u[0], 0.0);
            assert_eq!(st.u.amax(), 0.0);
        }
    }

    #[test]
    fn zero_iterations_is_the_shift() {
        let p = benchmark();
        let x = DVector::from_row_slice(&[1.0, 0.3]);
        let mut st = initialize(InitMode::GainRollout, &x, &p).unwrap();
        st.u[3] += 0.05;
        let expected = shift(&p.cp, &p.terminal, &st.u, &x);
        controller_step(&p, &mut st, &x, 0, &LineSearchConfig::new(Method::Gradient)).unwrap();
        assert_eq!(st.u, expected);
    }

    #[test]
    fn optimal_init_is_stationary() {
        let p = benchmark();
        let x = DVector::from_row_slice(&[2.5, -0.65]);
        let st = initialize(InitMode::Optimal, &x, &p).unwrap();
        assert!(p.cp.eval_grad(&st.u, &x).norm() <= 1e-9);
    }
}
