//! Plant, constraint sets and the full problem configuration.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::barrier::compute_recentering_weights;
use crate::error::{Error, Result};
use crate::lp::{self, LpOutcome};
use crate::riccati;
use crate::scalar::Real;

const DEFINITENESS_TOL: f64 = 1e-10;

/// Discrete LTI dynamics `x(k+1) = A x(k) + B u(k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantModel<T: Real> {
    a: DMatrix<T>,
    b: DMatrix<T>,
}

impl<T: Real> PlantModel<T> {
    pub fn new(a: DMatrix<T>, b: DMatrix<T>) -> Result<Self> {
        if a.nrows() == 0 || b.ncols() == 0 {
            return Err(Error::Dimension {
                what: "plant (n, m must be positive)",
                expected: 1,
                found: 0,
            });
        }
        if a.nrows() != a.ncols() {
            return Err(Error::Dimension {
                what: "A columns",
                expected: a.nrows(),
                found: a.ncols(),
            });
        }
        if b.nrows() != a.nrows() {
            return Err(Error::Dimension {
                what: "B rows",
                expected: a.nrows(),
                found: b.nrows(),
            });
        }
        Ok(Self { a, b })
    }

    pub fn a(&self) -> &DMatrix<T> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<T> {
        &self.b
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn step(&self, x: &DVector<T>, u: &DVector<T>) -> DVector<T> {
        &self.a * x + &self.b * u
    }

    pub fn cast<S: Real>(&self) -> PlantModel<S> {
        PlantModel {
            a: self.a.map(|v| S::lit(v.as_f64())),
            b: self.b.map(|v| S::lit(v.as_f64())),
        }
    }
}

/// Polytope `{ξ : C ξ ≤ d}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Polytope<T: Real> {
    c: DMatrix<T>,
    d: DVector<T>,
}

impl<T: Real> Polytope<T> {
    /// Checks shapes only; sign and rank conditions are reported by
    /// [`validate_setup`].
    pub fn new(c: DMatrix<T>, d: DVector<T>) -> Result<Self> {
        if c.nrows() != d.len() {
            return Err(Error::Dimension {
                what: "polytope offset vector",
                expected: c.nrows(),
                found: d.len(),
            });
        }
        Ok(Self { c, d })
    }

    /// Axis-aligned box `lower ≤ ξ ≤ upper`, rows ordered `ξ_j ≤ upper_j`,
    /// `-ξ_j ≤ -lower_j` per coordinate.
    pub fn from_box(lower: &[T], upper: &[T]) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Dimension {
                what: "box bounds",
                expected: lower.len(),
                found: upper.len(),
            });
        }
        let r = lower.len();
        let mut c = DMatrix::zeros(2 * r, r);
        let mut d = DVector::zeros(2 * r);
        for j in 0..r {
            c[(2 * j, j)] = T::one();
            d[2 * j] = upper[j];
            c[(2 * j + 1, j)] = -T::one();
            d[2 * j + 1] = -lower[j];
        }
        Self::new(c, d)
    }

    pub fn c(&self) -> &DMatrix<T> {
        &self.c
    }

    pub fn d(&self) -> &DVector<T> {
        &self.d
    }

    /// Number of rows `q`.
    pub fn rows(&self) -> usize {
        self.c.nrows()
    }

    /// Ambient dimension `r`.
    pub fn dim(&self) -> usize {
        self.c.ncols()
    }

    pub fn contains(&self, xi: &DVector<T>, tol: T) -> bool {
        self.violation(xi) <= tol
    }

    /// `max_i (C^i ξ - d^i)`; nonpositive inside the set.
    pub fn violation(&self, xi: &DVector<T>) -> T {
        (&self.c * xi - &self.d).max()
    }

    pub fn min_offset(&self) -> T {
        self.d.min()
    }

    /// Coordinate bounds `(lower, upper)` of a bounded set, one linear program
    /// per coordinate and direction.
    pub fn bounding_box(&self) -> Result<(Vec<T>, Vec<T>)> {
        let (q, r) = (self.rows(), self.dim());
        // ξ = ξ⁺ - ξ⁻ with slacks: C ξ⁺ - C ξ⁻ + s = d
        let mut a = DMatrix::zeros(q, 2 * r + q);
        a.view_mut((0, 0), (q, r)).copy_from(&self.c);
        a.view_mut((0, r), (q, r)).copy_from(&(-&self.c));
        a.view_mut((0, 2 * r), (q, q)).fill_with_identity();
        let mut lower = Vec::with_capacity(r);
        let mut upper = Vec::with_capacity(r);
        for j in 0..r {
            for (sign, out) in [(-T::one(), &mut upper), (T::one(), &mut lower)] {
                let mut cost = DVector::zeros(2 * r + q);
                cost[j] = sign;
                cost[r + j] = -sign;
                match lp::solve_standard_form(&cost, &a, &self.d) {
                    LpOutcome::Optimal(w) => out.push(w[j] - w[r + j]),
                    _ => return Err(Error::InvalidSetup(ValidationReport {
                        issues: vec![ValidationIssue::NoRecentering { set: "polytope", residual: f64::INFINITY }],
                    })),
                }
            }
        }
        Ok((lower, upper))
    }

    pub fn cast<S: Real>(&self) -> Polytope<S> {
        Polytope {
            c: self.c.map(|v| S::lit(v.as_f64())),
            d: self.d.map(|v| S::lit(v.as_f64())),
        }
    }
}

/// Everything needed to build the relaxed barrier MPC cost.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSetup<T: Real> {
    pub plant: PlantModel<T>,
    pub state_set: Polytope<T>,
    pub input_set: Polytope<T>,
    pub q: DMatrix<T>,
    pub r: DMatrix<T>,
    pub horizon: usize,
    pub epsilon: T,
    pub delta: T,
}

impl<T: Real> ProblemSetup<T> {
    pub fn n(&self) -> usize {
        self.plant.n()
    }

    pub fn m(&self) -> usize {
        self.plant.m()
    }

    /// Total number of stacked constraint rows `N (q_x + q_u)`.
    pub fn stacked_rows(&self) -> usize {
        self.horizon * (self.state_set.rows() + self.input_set.rows())
    }

    pub fn with_delta(mut self, delta: T) -> Self {
        self.delta = delta;
        self
    }

    pub fn with_epsilon(mut self, epsilon: T) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn cast<S: Real>(&self) -> ProblemSetup<S> {
        ProblemSetup {
            plant: self.plant.cast(),
            state_set: self.state_set.cast(),
            input_set: self.input_set.cast(),
            q: self.q.map(|v| S::lit(v.as_f64())),
            r: self.r.map(|v| S::lit(v.as_f64())),
            horizon: self.horizon,
            epsilon: S::lit(self.epsilon.as_f64()),
            delta: S::lit(self.delta.as_f64()),
        }
    }

    /// The double integrator benchmark: `T_s = 0.1`, `|u| ≤ 1`,
    /// `-2 ≤ x_1 ≤ 3`, `|x_2| ≤ 1`, `N = 30`, `Q = diag(1, 0.1)`, `R = 0.1`,
    /// `ε = δ = 1e-3`.
    pub fn double_integrator() -> Self {
        let ts = T::lit(0.1);
        let a = DMatrix::from_row_slice(2, 2, &[T::one(), ts, T::zero(), T::one()]);
        let b = DMatrix::from_row_slice(2, 1, &[ts * ts, ts]);
        let l = |v: f64| T::lit(v);
        let state_set = Polytope::new(
            DMatrix::from_row_slice(4, 2, &[l(1.0), l(0.0), l(-1.0), l(0.0), l(0.0), l(1.0), l(0.0), l(-1.0)]),
            DVector::from_row_slice(&[l(3.0), l(2.0), l(1.0), l(1.0)]),
        )
        .expect("static shapes");
        let input_set = Polytope::new(
            DMatrix::from_row_slice(2, 1, &[l(1.0), l(-1.0)]),
            DVector::from_row_slice(&[l(1.0), l(1.0)]),
        )
        .expect("static shapes");
        ProblemSetup {
            plant: PlantModel::new(a, b).expect("static shapes"),
            state_set,
            input_set,
            q: DMatrix::from_diagonal(&DVector::from_row_slice(&[l(1.0), l(0.1)])),
            r: DMatrix::from_element(1, 1, l(0.1)),
            horizon: 30,
            epsilon: l(1e-3),
            delta: l(1e-3),
        }
    }
}

/// One violated precondition.
#[derive(Debug, Clone, PartialEq)]
pub enum ValidationIssue {
    Shape(String),
    NonPositiveOffset { set: &'static str, row: usize },
    ZeroConstraintRow { set: &'static str, row: usize },
    EmptyConstraintSet { set: &'static str },
    RankDeficient { set: &'static str },
    NoRecentering { set: &'static str, residual: f64 },
    NotSymmetric { matrix: &'static str },
    NotPsd { matrix: &'static str, min_eigenvalue: f64 },
    NotPd { matrix: &'static str, min_eigenvalue: f64 },
    ZeroHorizon,
    NonPositiveEpsilon,
    NonPositiveDelta,
    DeltaTooLarge { delta: f64, bound: f64 },
    NotStabilizable(String),
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use ValidationIssue::*;
        match self {
            Shape(s) => write!(f, "shape: {s}"),
            NonPositiveOffset { set, row } => write!(f, "{set}: d[{row}] must be strictly positive"),
            ZeroConstraintRow { set, row } => write!(f, "{set}: row {row} of C is all zeros"),
            EmptyConstraintSet { set } => write!(f, "{set}: needs at least one constraint row"),
            RankDeficient { set } => write!(f, "{set}: C must have full column rank (bounded set)"),
            NoRecentering { set, residual } => {
                write!(f, "{set}: no nonnegative recentering weights (residual {residual:.3e}); set is unbounded")
            }
            NotSymmetric { matrix } => write!(f, "{matrix} is not symmetric"),
            NotPsd { matrix, min_eigenvalue } => {
                write!(f, "{matrix} is not positive semidefinite (min eigenvalue {min_eigenvalue:.3e})")
            }
            NotPd { matrix, min_eigenvalue } => {
                write!(f, "{matrix} is not positive definite (min eigenvalue {min_eigenvalue:.3e})")
            }
            ZeroHorizon => write!(f, "horizon N must be at least 1"),
            NonPositiveEpsilon => write!(f, "epsilon must be strictly positive"),
            NonPositiveDelta => write!(f, "delta must be strictly positive"),
            DeltaTooLarge { delta, bound } => {
                write!(f, "delta = {delta} exceeds min(d_x, d_u) = {bound}; recentered barrier loses positive definiteness")
            }
            NotStabilizable(msg) => write!(f, "(A, B) not stabilizable with these weights: {msg}"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.issues.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for issue in &self.issues {
            writeln!(f, "  - {issue}")?;
        }
        Ok(())
    }
}

fn check_polytope<T: Real>(set: &Polytope<T>, name: &'static str, dim: usize, issues: &mut Vec<ValidationIssue>) {
    if set.dim() != dim {
        issues.push(ValidationIssue::Shape(format!(
            "{name}: C has {} columns, expected {dim}",
            set.dim()
        )));
        return;
    }
    if set.rows() == 0 {
        issues.push(ValidationIssue::EmptyConstraintSet { set: name });
        return;
    }
    for (row, &d) in set.d().iter().enumerate() {
        if !(d > T::zero()) {
            issues.push(ValidationIssue::NonPositiveOffset { set: name, row });
        }
    }
    for row in 0..set.rows() {
        if set.c().row(row).iter().all(|v| *v == T::zero()) {
            issues.push(ValidationIssue::ZeroConstraintRow { set: name, row });
        }
    }
    if set.c().rank(T::lit(1e-12)) < dim {
        issues.push(ValidationIssue::RankDeficient { set: name });
        return;
    }
    if set.d().iter().all(|d| *d > T::zero()) {
        if let Err(Error::InfeasibleRecentering { residual }) = compute_recentering_weights(set) {
            issues.push(ValidationIssue::NoRecentering { set: name, residual });
        }
    }
}

fn check_definite<T: Real>(
    m: &DMatrix<T>,
    name: &'static str,
    strict: bool,
    dim: usize,
    issues: &mut Vec<ValidationIssue>,
) {
    if m.nrows() != dim || m.ncols() != dim {
        issues.push(ValidationIssue::Shape(format!(
            "{name} is {}x{}, expected {dim}x{dim}",
            m.nrows(),
            m.ncols()
        )));
        return;
    }
    let tol = T::lit(DEFINITENESS_TOL);
    let scale = m.amax().max(T::one());
    if (m - m.transpose()).amax() > tol * scale {
        issues.push(ValidationIssue::NotSymmetric { matrix: name });
        return;
    }
    let min_eig = min_symmetric_eigenvalue(m);
    if strict && min_eig <= tol {
        issues.push(ValidationIssue::NotPd {
            matrix: name,
            min_eigenvalue: min_eig.as_f64(),
        });
    } else if !strict && min_eig < -tol {
        issues.push(ValidationIssue::NotPsd {
            matrix: name,
            min_eigenvalue: min_eig.as_f64(),
        });
    }
}

pub(crate) fn min_symmetric_eigenvalue<T: Real>(m: &DMatrix<T>) -> T {
    m.clone().symmetric_eigenvalues().min()
}

pub(crate) fn max_symmetric_eigenvalue<T: Real>(m: &DMatrix<T>) -> T {
    m.clone().symmetric_eigenvalues().max()
}

/// Lists every violated precondition of `setup`; an empty report means the
/// setup can be assembled into a controller.
pub fn validate_setup<T: Real>(setup: &ProblemSetup<T>) -> ValidationReport {
    let mut issues = Vec::new();
    let n = setup.n();
    let m = setup.m();
    check_polytope(&setup.state_set, "state set", n, &mut issues);
    check_polytope(&setup.input_set, "input set", m, &mut issues);
    check_definite(&setup.q, "Q", false, n, &mut issues);
    check_definite(&setup.r, "R", true, m, &mut issues);
    if setup.horizon == 0 {
        issues.push(ValidationIssue::ZeroHorizon);
    }
    if !(setup.epsilon > T::zero()) {
        issues.push(ValidationIssue::NonPositiveEpsilon);
    }
    if !(setup.delta > T::zero()) {
        issues.push(ValidationIssue::NonPositiveDelta);
    } else if setup.state_set.rows() > 0 && setup.input_set.rows() > 0 {
        let bound = setup.state_set.min_offset().min(setup.input_set.min_offset());
        if setup.delta > bound {
            issues.push(ValidationIssue::DeltaTooLarge {
                delta: setup.delta.as_f64(),
                bound: bound.as_f64(),
            });
        }
    }
    if issues.is_empty() {
        if let Err(e) = riccati::TerminalDesign::design(setup) {
            issues.push(ValidationIssue::NotStabilizable(e.to_string()));
        }
    }
    ValidationReport { issues }
}

/// Predicted states `x_1 .. x_N` for the stacked input `U` from `x_0 = x`,
/// using `x_k = A^k x + Σ_{i<k} A^i B u_{k-1-i}`.
pub fn rollout_states<T: Real>(setup: &ProblemSetup<T>, u: &DVector<T>, x: &DVector<T>) -> Result<Vec<DVector<T>>> {
    let n = setup.n();
    let m = setup.m();
    let horizon = setup.horizon;
    if x.len() != n {
        return Err(Error::Dimension {
            what: "initial state",
            expected: n,
            found: x.len(),
        });
    }
    if u.len() != horizon * m {
        return Err(Error::Dimension {
            what: "stacked input",
            expected: horizon * m,
            found: u.len(),
        });
    }
    let a = setup.plant.a();
    let b = setup.plant.b();
    // powers[i] = A^i, i = 0..=N; impulse[i] = A^i B
    let mut powers = Vec::with_capacity(horizon + 1);
    powers.push(DMatrix::identity(n, n));
    for i in 0..horizon {
        let next = a * &powers[i];
        powers.push(next);
    }
    let impulse: Vec<DMatrix<T>> = powers.iter().take(horizon).map(|p| p * b).collect();
    let mut out = Vec::with_capacity(horizon);
    for k in 1..=horizon {
        let mut xk = &powers[k] * x;
        for i in 0..k {
            let j = k - 1 - i;
            xk += &impulse[i] * u.rows(j * m, m);
        }
        out.push(xk);
    }
    Ok(out)
}
