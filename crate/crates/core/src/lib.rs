//! Relaxed-barrier model predictive control with an anytime
//! shift-then-optimize iteration scheme.
//!
//! The crate is generic over the scalar type (`f32` or `f64`) through
//! [`Real`]; the aliases at the crate root fix `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod barrier;
pub mod certify;
pub mod condensed;
pub mod config;
pub mod error;
pub mod linesearch;
mod lp;
pub mod model;
pub mod mpc;
pub mod riccati;
pub mod scalar;
pub mod scheme;
pub mod sim;

pub use barrier::{RecenteredBarrier, RelaxedLogBarrier};
pub use certify::{BoundaryLevels, ViolationCertificate};
pub use condensed::CondensedProblem;
pub use config::{ExperimentConfig, InitialStates};
pub use error::{Error, Result};
pub use linesearch::{DirectionCarry, LineSearchConfig, Method};
pub use model::{validate_setup, PlantModel, Polytope, ProblemSetup, ValidationIssue, ValidationReport};
pub use mpc::MpcProblem;
pub use riccati::TerminalDesign;
pub use scalar::Real;
pub use scheme::{ControllerState, InitMode, IterationSchedule};
pub use sim::TrajectoryLog;

pub type Setup = ProblemSetup<f64>;
pub type Plant = PlantModel<f64>;
pub type Set = Polytope<f64>;
pub type Barrier = RecenteredBarrier<f64>;
pub type Terminal = TerminalDesign<f64>;
pub type Condensed = CondensedProblem<f64>;
pub type Problem = MpcProblem<f64>;
pub type SearchConfig = LineSearchConfig<f64>;
pub type Carry = DirectionCarry<f64>;
pub type State = ControllerState<f64>;
