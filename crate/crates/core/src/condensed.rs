//! Condensed cost `Ĵ(U, x) = ½UᵀHU + xᵀFU + ½xᵀYx + ε B̂(U, x)`.
//!
//! States are eliminated through `x_k = Ω_k x + Γ_k U`. The stacked barrier
//! acts on the slacks `z = d̄ - G U + E x`, ordered as `N` blocks of state rows
//! (stages `0..N-1`) followed by `N` blocks of input rows. The terminal state
//! carries the Riccati weight `P` instead of a barrier.

use nalgebra::{DMatrix, DVector};

use crate::barrier::{RecenteredBarrier, RelaxedLogBarrier};
use crate::error::{Error, Result};
use crate::model::{max_symmetric_eigenvalue, min_symmetric_eigenvalue, ProblemSetup};
use crate::riccati::TerminalDesign;
use crate::scalar::Real;

#[derive(Debug, Clone)]
pub struct CondensedProblem<T: Real> {
    n: usize,
    m: usize,
    horizon: usize,
    qx: usize,
    qu: usize,
    pub h: DMatrix<T>,
    pub f: DMatrix<T>,
    pub y: DMatrix<T>,
    pub g: DMatrix<T>,
    pub e: DMatrix<T>,
    pub d_bar: DVector<T>,
    pub w_bar: DVector<T>,
    pub omega: DMatrix<T>,
    pub gamma: DMatrix<T>,
    h_inv: DMatrix<T>,
    barrier: RelaxedLogBarrier<T>,
    epsilon: T,
    sigma: T,
    lipschitz: T,
}

fn check_len<T: Real>(v: &DVector<T>, expected: usize, what: &'static str) -> Result<()> {
    if v.len() != expected {
        return Err(Error::Dimension {
            what,
            expected,
            found: v.len(),
        });
    }
    Ok(())
}

impl<T: Real> CondensedProblem<T> {
    pub fn assemble(
        setup: &ProblemSetup<T>,
        bar_x: &RecenteredBarrier<T>,
        bar_u: &RecenteredBarrier<T>,
        terminal: &TerminalDesign<T>,
    ) -> Result<Self> {
        let n = setup.n();
        let m = setup.m();
        let nh = setup.horizon;
        if bar_x.set().dim() != n {
            return Err(Error::Dimension {
                what: "state barrier dimension",
                expected: n,
                found: bar_x.set().dim(),
            });
        }
        if bar_u.set().dim() != m {
            return Err(Error::Dimension {
                what: "input barrier dimension",
                expected: m,
                found: bar_u.set().dim(),
            });
        }
        if terminal.p.nrows() != n || terminal.k.nrows() != m || terminal.k.ncols() != n {
            return Err(Error::Dimension {
                what: "terminal design",
                expected: n,
                found: terminal.p.nrows(),
            });
        }
        let a = setup.plant.a();
        let b = setup.plant.b();
        let qx = bar_x.set().rows();
        let qu = bar_u.set().rows();

        // Ω = [A; A²; ...; A^N], Γ block (k, j) = A^{k-j} B for j ≤ k
        let mut omega = DMatrix::zeros(nh * n, n);
        let mut powers_b = Vec::with_capacity(nh);
        let mut ak = a.clone();
        let mut aib = b.clone();
        for k in 0..nh {
            omega.view_mut((k * n, 0), (n, n)).copy_from(&ak);
            powers_b.push(aib.clone());
            ak = a * ak;
            aib = a * aib;
        }
        let mut gamma = DMatrix::zeros(nh * n, nh * m);
        for k in 0..nh {
            for j in 0..=k {
                gamma.view_mut((k * n, j * m), (n, m)).copy_from(&powers_b[k - j]);
            }
        }

        // Q̃ = blkdiag(Q, ..., Q, P), R̃ = I ⊗ R
        let mut q_tilde = DMatrix::zeros(nh * n, nh * n);
        for k in 0..nh {
            let block = if k + 1 == nh { &terminal.p } else { &setup.q };
            q_tilde.view_mut((k * n, k * n), (n, n)).copy_from(block);
        }
        let mut r_tilde = DMatrix::zeros(nh * m, nh * m);
        for k in 0..nh {
            r_tilde.view_mut((k * m, k * m), (m, m)).copy_from(&setup.r);
        }
        let two = T::lit(2.0);
        let qg = &q_tilde * &gamma;
        let mut h = (&r_tilde + gamma.transpose() * &qg) * two;
        h = (&h + h.transpose()) * T::lit(0.5);
        let f = omega.transpose() * &qg * two;
        let mut y = (&setup.q + omega.transpose() * &q_tilde * &omega) * two;
        y = (&y + y.transpose()) * T::lit(0.5);

        let q = nh * (qx + qu);
        let cx = bar_x.set().c();
        let cu = bar_u.set().c();
        let mut g = DMatrix::zeros(q, nh * m);
        let mut e = DMatrix::zeros(q, n);
        let mut d_bar = DVector::zeros(q);
        let mut w_bar = DVector::zeros(q);
        for k in 0..nh {
            let rows = k * qx;
            if k == 0 {
                e.view_mut((0, 0), (qx, n)).copy_from(&(-cx));
            } else {
                // x_k = Ω_{k} x + Γ_{k} U  (block index k-1 in Ω, Γ)
                let om = omega.view(((k - 1) * n, 0), (n, n));
                let gm = gamma.view(((k - 1) * n, 0), (n, nh * m));
                g.view_mut((rows, 0), (qx, nh * m)).copy_from(&(cx * gm));
                e.view_mut((rows, 0), (qx, n)).copy_from(&(-(cx * om)));
            }
            d_bar.rows_mut(rows, qx).copy_from(bar_x.set().d());
            w_bar.rows_mut(rows, qx).copy_from(bar_x.weights());
        }
        let base = nh * qx;
        for k in 0..nh {
            let rows = base + k * qu;
            g.view_mut((rows, k * m), (qu, m)).copy_from(cu);
            d_bar.rows_mut(rows, qu).copy_from(bar_u.set().d());
            w_bar.rows_mut(rows, qu).copy_from(bar_u.weights());
        }

        let h_inv = h.clone().cholesky().ok_or(Error::SingularHessian)?.inverse();
        let mut cp = Self {
            n,
            m,
            horizon: nh,
            qx,
            qu,
            h,
            f,
            y,
            g,
            e,
            d_bar,
            w_bar,
            omega,
            gamma,
            h_inv,
            barrier: RelaxedLogBarrier::new(setup.delta),
            epsilon: setup.epsilon,
            sigma: T::zero(),
            lipschitz: T::zero(),
        };
        let (sigma, lipschitz) = cp.bounds_for(setup.epsilon, setup.delta);
        cp.sigma = sigma;
        cp.lipschitz = lipschitz;
        Ok(cp)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Dimension of the stacked input `U`.
    pub fn nm(&self) -> usize {
        self.horizon * self.m
    }

    /// Number of stacked constraint rows.
    pub fn q(&self) -> usize {
        self.d_bar.len()
    }

    pub fn state_rows(&self) -> usize {
        self.qx
    }

    pub fn input_rows(&self) -> usize {
        self.qu
    }

    pub fn epsilon(&self) -> T {
        self.epsilon
    }

    pub fn delta(&self) -> T {
        self.barrier.delta()
    }

    pub fn barrier(&self) -> &RelaxedLogBarrier<T> {
        &self.barrier
    }

    /// Inverse of the quadratic part `H`.
    pub fn h_inv(&self) -> &DMatrix<T> {
        &self.h_inv
    }

    /// Hessian bounds `(σ, L)` fixed at assembly.
    pub fn constants(&self) -> (T, T) {
        (self.sigma, self.lipschitz)
    }

    /// `σ = λ_min(H)`, `L = λ_max(H + ε(1 + w̄_max)/δ² GᵀG)` for other
    /// barrier parameters on the same matrices.
    pub fn bounds_for(&self, epsilon: T, delta: T) -> (T, T) {
        let sigma = min_symmetric_eigenvalue(&self.h);
        let w_max = self.w_bar.iter().copied().fold(T::zero(), |a, b| a.max(b));
        let coef = epsilon * (T::one() + w_max) / (delta * delta);
        let mut upper = self.h.clone();
        upper.gemm_tr(coef, &self.g, &self.g, T::one());
        (sigma, max_symmetric_eigenvalue(&upper))
    }

    fn check(&self, u: &DVector<T>, x: &DVector<T>) {
        debug_assert_eq!(u.len(), self.nm(), "stacked input dimension");
        debug_assert_eq!(x.len(), self.n, "state dimension");
    }

    pub fn check_dims(&self, u: &DVector<T>, x: &DVector<T>) -> Result<()> {
        check_len(u, self.nm(), "stacked input")?;
        check_len(x, self.n, "state")
    }

    /// `-G U + E x`, the slack offsets from `d̄`.
    pub fn slack_shift(&self, u: &DVector<T>, x: &DVector<T>) -> DVector<T> {
        self.check(u, x);
        let mut v = &self.e * x;
        v.gemv(-T::one(), &self.g, u, T::one());
        v
    }

    /// `z = d̄ - G U + E x`.
    pub fn slacks(&self, u: &DVector<T>, x: &DVector<T>) -> DVector<T> {
        self.slack_shift(u, x) + &self.d_bar
    }

    /// Predicted terminal state `x_N`.
    pub fn terminal_state(&self, u: &DVector<T>, x: &DVector<T>) -> DVector<T> {
        let n = self.n;
        let row = (self.horizon - 1) * n;
        self.omega.rows(row, n) * x + self.gamma.rows(row, n) * u
    }

    /// Stacked barrier `Σ (1 + w̄_i)(B(z_i) + ln d̄_i)` (without ε).
    pub fn barrier_value(&self, u: &DVector<T>, x: &DVector<T>) -> T {
        let v = self.slack_shift(u, x);
        let mut total = T::zero();
        for i in 0..self.q() {
            total += (T::one() + self.w_bar[i]) * self.barrier.centered_value(self.d_bar[i], v[i]);
        }
        total
    }

    fn quadratic_value(&self, u: &DVector<T>, x: &DVector<T>) -> T {
        let hu = &self.h * u;
        let half = T::lit(0.5);
        half * u.dot(&hu) + (self.f.transpose() * x).dot(u) + half * x.dot(&(&self.y * x))
    }

    /// `HU + Fᵀx`.
    pub fn quadratic_gradient(&self, u: &DVector<T>, x: &DVector<T>) -> DVector<T> {
        let mut g = &self.h * u;
        g.gemv_tr(T::one(), &self.f, x, T::one());
        g
    }

    pub fn eval_cost(&self, u: &DVector<T>, x: &DVector<T>) -> T {
        self.quadratic_value(u, x) + self.epsilon * self.barrier_value(u, x)
    }

    pub fn eval_grad(&self, u: &DVector<T>, x: &DVector<T>) -> DVector<T> {
        let z = self.slacks(u, x);
        self.grad_at_slacks(u, x, &z)
    }

    fn grad_at_slacks(&self, u: &DVector<T>, x: &DVector<T>, z: &DVector<T>) -> DVector<T> {
        let mut grad = self.quadratic_gradient(u, x);
        // ∂/∂U Σ (1+w) B(z_i) = -Gᵀ [(1+w) B'(z)]
        let weighted = DVector::from_iterator(
            self.q(),
            (0..self.q()).map(|i| (T::one() + self.w_bar[i]) * self.barrier.slope(z[i])),
        );
        grad.gemv_tr(-self.epsilon, &self.g, &weighted, T::one());
        grad
    }

    /// Cost and gradient sharing one slack evaluation.
    pub fn eval_cost_grad(&self, u: &DVector<T>, x: &DVector<T>) -> (T, DVector<T>) {
        let v = self.slack_shift(u, x);
        let mut barrier = T::zero();
        for i in 0..self.q() {
            barrier += (T::one() + self.w_bar[i]) * self.barrier.centered_value(self.d_bar[i], v[i]);
        }
        let z = v + &self.d_bar;
        let cost = self.quadratic_value(u, x) + self.epsilon * barrier;
        (cost, self.grad_at_slacks(u, x, &z))
    }

    /// `H + ε Gᵀ diag(D) G` with `D_i = (1 + w̄_i) / max(z_i, δ)²`.
    pub fn eval_hess(&self, u: &DVector<T>, x: &DVector<T>) -> DMatrix<T> {
        let z = self.slacks(u, x);
        let mut scaled = self.g.clone();
        for i in 0..self.q() {
            let di = self.epsilon * (T::one() + self.w_bar[i]) * self.barrier.curvature(z[i]);
            scaled.row_mut(i).scale_mut(di);
        }
        let mut hess = self.h.clone();
        hess.gemm_tr(T::one(), &self.g, &scaled, T::one());
        hess
    }

    /// Restriction of the cost to the ray `U + s p`.
    pub fn line(&self, u: &DVector<T>, x: &DVector<T>, p: &DVector<T>) -> LineRestriction<'_, T> {
        let z = self.slacks(u, x);
        let gp = &self.g * p;
        let hp = &self.h * p;
        let lin = self.quadratic_gradient(u, x).dot(p);
        LineRestriction {
            cp: self,
            z,
            gp,
            lin,
            quad: p.dot(&hp),
        }
    }
}

/// `φ(s) = Ĵ(U + s p, x)` evaluated in `O(q)` per trial step.
#[derive(Debug, Clone)]
pub struct LineRestriction<'a, T: Real> {
    cp: &'a CondensedProblem<T>,
    z: DVector<T>,
    gp: DVector<T>,
    lin: T,
    quad: T,
}

impl<T: Real> LineRestriction<'_, T> {
    /// `φ(s) - φ(0)`, computed without subtracting two cost values.
    pub fn change(&self, s: T) -> T {
        let cp = self.cp;
        let mut barrier = T::zero();
        for i in 0..self.z.len() {
            let dz = -s * self.gp[i];
            barrier += (T::one() + cp.w_bar[i]) * cp.barrier.change(self.z[i], dz);
        }
        s * self.lin + T::lit(0.5) * s * s * self.quad + cp.epsilon * barrier
    }

    /// `φ'(s)`.
    pub fn slope(&self, s: T) -> T {
        let cp = self.cp;
        let mut barrier = T::zero();
        for i in 0..self.z.len() {
            let zi = self.z[i] - s * self.gp[i];
            barrier -= (T::one() + cp.w_bar[i]) * cp.barrier.slope(zi) * self.gp[i];
        }
        self.lin + s * self.quad + cp.epsilon * barrier
    }
}
