//! Discrete algebraic Riccati equations for the terminal ingredients.
//!
//! The barrier-modified equation with weights `(Q + εM_x, R + εM_u)` is the
//! standard DARE for those weights, so both the terminal pair `(P, K)` and the
//! unconstrained LQR matrix `P_uc` come out of the same value iteration.

use nalgebra::{DMatrix, DVector};

use crate::barrier::compute_recentering_weights;
use crate::barrier::RecenteredBarrier;
use crate::error::{Error, Result};
use crate::model::{PlantModel, ProblemSetup};
use crate::scalar::Real;

pub const MAX_ITERATIONS: usize = 1_000_000;
const STEP_TOL: f64 = 1e-11;

#[derive(Debug, Clone, PartialEq)]
pub struct DareSolution<T: Real> {
    pub p: DMatrix<T>,
    /// Stabilizing feedback `u = K x`.
    pub k: DMatrix<T>,
    pub iterations: usize,
}

/// Terminal cost and feedback plus the quantities the certificates need.
#[derive(Debug, Clone, PartialEq)]
pub struct TerminalDesign<T: Real> {
    pub p: DMatrix<T>,
    pub k: DMatrix<T>,
    pub p_uc: DMatrix<T>,
    pub m_x: DMatrix<T>,
    pub m_u: DMatrix<T>,
}

impl<T: Real> TerminalDesign<T> {
    /// Computes recentering weights, the quadratic barrier bounds and both
    /// Riccati solutions for `setup`.
    pub fn design(setup: &ProblemSetup<T>) -> Result<Self> {
        let wx = compute_recentering_weights(&setup.state_set)?;
        let wu = compute_recentering_weights(&setup.input_set)?;
        let bx = RecenteredBarrier::with_weights(setup.state_set.clone(), setup.delta, wx);
        let bu = RecenteredBarrier::with_weights(setup.input_set.clone(), setup.delta, wu);
        solve_modified_dare(
            setup,
            &bx.quadratic_upper_bound_matrix(),
            &bu.quadratic_upper_bound_matrix(),
        )
    }

    /// `A_K = A + B K`.
    pub fn closed_loop(&self, plant: &PlantModel<T>) -> DMatrix<T> {
        plant.a() + plant.b() * &self.k
    }
}

/// Solves `P = AᵀPA - AᵀPB (R + BᵀPB)⁻¹ BᵀPA + Q` by fixed-point iteration
/// from `P₀ = Q`, symmetrizing each iterate.
pub fn solve_dare<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>, q: &DMatrix<T>, r: &DMatrix<T>) -> Result<DareSolution<T>> {
    let mut p = q.clone();
    let half = T::lit(0.5);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let (next, _) = riccati_map(a, b, q, r, &p)?;
        let next = (&next + next.transpose()) * half;
        let diff = (&next - &p).amax();
        let tol = T::lit(STEP_TOL).max(T::default_epsilon() * T::lit(16.0) * next.amax());
        p = next;
        if !diff.is_finite() {
            break;
        }
        if diff <= tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoStabilizingSolution { iterations });
    }
    let (_, k) = riccati_map(a, b, q, r, &p)?;
    let ak = a + b * &k;
    if spectral_radius(&ak) >= T::one() - T::lit(1e-9) {
        return Err(Error::NoStabilizingSolution { iterations });
    }
    Ok(DareSolution { p, k, iterations })
}

/// One Riccati step; returns the updated matrix and the gain for the input `p`.
fn riccati_map<T: Real>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    q: &DMatrix<T>,
    r: &DMatrix<T>,
    p: &DMatrix<T>,
) -> Result<(DMatrix<T>, DMatrix<T>)> {
    let pb = p * b;
    let s = r + b.transpose() * &pb;
    let btpa = pb.transpose() * a;
    let chol = s.cholesky().ok_or(Error::NoStabilizingSolution { iterations: 0 })?;
    let k = -chol.solve(&btpa);
    let next = a.transpose() * p * a + btpa.transpose() * &k + q;
    Ok((next, k))
}

/// Barrier-modified DARE: `K = -(R + BᵀPB + εM_u)⁻¹BᵀPA` and
/// `P = A_KᵀPA_K + Kᵀ(R + εM_u)K + Q + εM_x`.
pub fn solve_modified_dare<T: Real>(
    setup: &ProblemSetup<T>,
    m_x: &DMatrix<T>,
    m_u: &DMatrix<T>,
) -> Result<TerminalDesign<T>> {
    let eps = setup.epsilon;
    let q = &setup.q + m_x * eps;
    let r = &setup.r + m_u * eps;
    let sol = solve_dare(setup.plant.a(), setup.plant.b(), &q, &r)?;
    let p_uc = solve_standard_dare(&setup.plant, &setup.q, &setup.r)?;
    Ok(TerminalDesign {
        p: sol.p,
        k: sol.k,
        p_uc,
        m_x: m_x.clone(),
        m_u: m_u.clone(),
    })
}

/// Unconstrained infinite-horizon LQR value matrix.
pub fn solve_standard_dare<T: Real>(plant: &PlantModel<T>, q: &DMatrix<T>, r: &DMatrix<T>) -> Result<DMatrix<T>> {
    Ok(solve_dare(plant.a(), plant.b(), q, r)?.p)
}

/// `‖A_KᵀPA_K + KᵀRK + Q - P‖_max` with `A_K = A + BK`.
pub fn riccati_residual<T: Real>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    q: &DMatrix<T>,
    r: &DMatrix<T>,
    p: &DMatrix<T>,
    k: &DMatrix<T>,
) -> T {
    let ak = a + b * k;
    let lhs = ak.transpose() * p * &ak + k.transpose() * r * k + q;
    (lhs - p).amax()
}

pub fn spectral_radius<T: Real>(m: &DMatrix<T>) -> T {
    let eig = m.clone().complex_eigenvalues();
    eig.iter()
        .map(|c| (c.re * c.re + c.im * c.im).sqrt())
        .fold(T::zero(), |acc, v| acc.max(v))
}

/// Rows `K (A+BK)^j x₀`, `j = 0..N-1`, stacked into one `N m` vector: the
/// open-loop inputs produced by the terminal feedback.
pub fn gain_rollout<T: Real>(plant: &PlantModel<T>, k: &DMatrix<T>, horizon: usize, x0: &DVector<T>) -> DVector<T> {
    let m = plant.m();
    let ak = plant.a() + plant.b() * k;
    let mut out = DVector::zeros(horizon * m);
    let mut x = x0.clone();
    for j in 0..horizon {
        out.rows_mut(j * m, m).copy_from(&(k * &x));
        x = &ak * x;
    }
    out
}
