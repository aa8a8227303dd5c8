use nalgebra::DVector;

use crate::barrier::RecenteredBarrier;
use crate::condensed::CondensedProblem;
use crate::error::{Error, Result};
use crate::model::{validate_setup, ProblemSetup};
use crate::riccati::TerminalDesign;
use crate::scalar::Real;

/// A validated setup with everything derived from it.
#[derive(Debug, Clone)]
pub struct MpcProblem<T: Real> {
    pub setup: ProblemSetup<T>,
    pub bar_x: RecenteredBarrier<T>,
    pub bar_u: RecenteredBarrier<T>,
    pub terminal: TerminalDesign<T>,
    pub cp: CondensedProblem<T>,
}

impl<T: Real> MpcProblem<T> {
    /// Validates `setup`, then builds barriers, terminal ingredients and the
    /// condensed cost.
    pub fn build(setup: ProblemSetup<T>) -> Result<Self> {
        let report = validate_setup(&setup);
        if !report.is_ok() {
            return Err(Error::InvalidSetup(report));
        }
        let bar_x = RecenteredBarrier::new(setup.state_set.clone(), setup.delta)?;
        let bar_u = RecenteredBarrier::new(setup.input_set.clone(), setup.delta)?;
        let terminal = TerminalDesign::design(&setup)?;
        let cp = CondensedProblem::assemble(&setup, &bar_x, &bar_u, &terminal)?;
        Ok(Self {
            setup,
            bar_x,
            bar_u,
            terminal,
            cp,
        })
    }

    /// `ℓ̂(x, u) = ‖x‖²_Q + ‖u‖²_R + ε(B̂_x(x) + B̂_u(u))`.
    pub fn stage_cost(&self, x: &DVector<T>, u: &DVector<T>) -> T {
        let s = &self.setup;
        x.dot(&(&s.q * x)) + u.dot(&(&s.r * u)) + s.epsilon * (self.bar_x.value(x) + self.bar_u.value(u))
    }

    /// `F̂(x) = ‖x‖²_P`.
    pub fn terminal_cost(&self, x: &DVector<T>) -> T {
        x.dot(&(&self.terminal.p * x))
    }

    /// First input block `Π₀U`.
    pub fn first_input(&self, u: &DVector<T>) -> DVector<T> {
        u.rows(0, self.setup.m()).into_owned()
    }
}
