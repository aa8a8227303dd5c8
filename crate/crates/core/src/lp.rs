//! Dense two-phase simplex for small standard-form linear programs
//! `min cᵀw  s.t.  A w = b, w ≥ 0`. Bland's rule keeps it cycle-free.

use nalgebra::{DMatrix, DVector};

use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum LpOutcome<T: Real> {
    Optimal(DVector<T>),
    /// `residual` is the phase-one optimum, the least l1 residual of `Aw = b`.
    Infeasible { residual: T },
    Unbounded,
}

struct Tableau<T: Real> {
    // rows 0..m are constraints, row m is the objective; last column is rhs
    t: DMatrix<T>,
    basis: Vec<usize>,
    cols: usize,
}

impl<T: Real> Tableau<T> {
    fn rhs(&self) -> usize {
        self.t.ncols() - 1
    }

    fn obj(&self) -> usize {
        self.t.nrows() - 1
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let p = self.t[(row, col)];
        let ncols = self.t.ncols();
        for j in 0..ncols {
            self.t[(row, j)] /= p;
        }
        for i in 0..self.t.nrows() {
            if i == row {
                continue;
            }
            let f = self.t[(i, col)];
            if f != T::zero() {
                for j in 0..ncols {
                    let v = self.t[(row, j)];
                    self.t[(i, j)] -= f * v;
                }
            }
        }
        self.basis[row] = col;
    }

    /// Runs simplex iterations with entering columns restricted to `< allowed`.
    /// Returns false if the objective is unbounded below.
    fn run(&mut self, allowed: usize, tol: T) -> bool {
        let obj = self.obj();
        let rhs = self.rhs();
        loop {
            let entering = (0..allowed).find(|&j| self.t[(obj, j)] < -tol);
            let Some(col) = entering else {
                return true;
            };
            let mut best: Option<(usize, T)> = None;
            for i in 0..obj {
                let a = self.t[(i, col)];
                if a > tol {
                    let ratio = self.t[(i, rhs)] / a;
                    best = match best {
                        None => Some((i, ratio)),
                        Some((bi, br)) => {
                            if ratio < br - tol || (ratio <= br + tol && self.basis[i] < self.basis[bi]) {
                                Some((i, ratio))
                            } else {
                                Some((bi, br))
                            }
                        }
                    };
                }
            }
            match best {
                Some((row, _)) => self.pivot(row, col),
                None => return false,
            }
        }
    }
}

pub(crate) fn solve_standard_form<T: Real>(c: &DVector<T>, a: &DMatrix<T>, b: &DVector<T>) -> LpOutcome<T> {
    let m = a.nrows();
    let n = a.ncols();
    let scale = a.amax().max(b.amax()).max(T::one());
    let tol = T::tol(1e-12) * scale;

    // phase one: artificial columns n..n+m, all rows flipped to b ≥ 0
    let mut t = DMatrix::zeros(m + 1, n + m + 1);
    for i in 0..m {
        let sign = if b[i] < T::zero() { -T::one() } else { T::one() };
        for j in 0..n {
            t[(i, j)] = sign * a[(i, j)];
        }
        t[(i, n + i)] = T::one();
        t[(i, n + m)] = sign * b[i];
    }
    for j in 0..n {
        let s = (0..m).fold(T::zero(), |acc, i| acc + t[(i, j)]);
        t[(m, j)] = -s;
    }
    let total = (0..m).fold(T::zero(), |acc, i| acc + t[(i, n + m)]);
    t[(m, n + m)] = -total;
    let mut tab = Tableau {
        t,
        basis: (n..n + m).collect(),
        cols: n,
    };
    tab.run(n, tol);
    let residual = -tab.t[(m, n + m)];
    if residual > tol {
        return LpOutcome::Infeasible { residual };
    }

    // drive remaining artificials out of the basis; rows that cannot pivot are redundant
    let mut redundant = vec![false; m];
    for row in 0..m {
        if tab.basis[row] >= n {
            match (0..n).find(|&j| tab.t[(row, j)].abs() > tol) {
                Some(col) => tab.pivot(row, col),
                None => redundant[row] = true,
            }
        }
    }

    // phase two objective row: c_j - c_Bᵀ B⁻¹ A_j
    let obj = m;
    for j in 0..tab.t.ncols() {
        tab.t[(obj, j)] = if j < n { c[j] } else { T::zero() };
    }
    for row in 0..m {
        if redundant[row] {
            continue;
        }
        let bj = tab.basis[row];
        let cb = c[bj];
        if cb != T::zero() {
            for j in 0..tab.t.ncols() {
                let v = tab.t[(row, j)];
                tab.t[(obj, j)] -= cb * v;
            }
        }
    }
    if !tab.run(tab.cols, tol) {
        return LpOutcome::Unbounded;
    }
    let mut w = DVector::zeros(n);
    for row in 0..m {
        let bj = tab.basis[row];
        if bj < n && !redundant[row] {
            w[bj] = tab.t[(row, n + m)].max(T::zero());
        }
    }
    LpOutcome::Optimal(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simple_equality_program() {
        // min w0 + w1 + w2  s.t. w0 - w1 = 1, w1 + w2 = 2
        let c = DVector::from_row_slice(&[1.0, 1.0, 1.0]);
        let a = DMatrix::from_row_slice(2, 3, &[1.0, -1.0, 0.0, 0.0, 1.0, 1.0]);
        let b = DVector::from_row_slice(&[1.0, 2.0]);
        match solve_standard_form::<f64>(&c, &a, &b) {
            LpOutcome::Optimal(w) => {
                assert!((&a * &w - &b).amax() < 1e-12);
                assert!((w.sum() - 3.0).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn infeasible_program_reports_residual() {
        // w0 + w1 = -1 with w ≥ 0
        let c = DVector::from_row_slice(&[1.0, 1.0]);
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let b = DVector::from_row_slice(&[-1.0]);
        match solve_standard_form::<f64>(&c, &a, &b) {
            LpOutcome::Infeasible { residual } => assert!((residual - 1.0).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn redundant_rows_are_tolerated() {
        let c = DVector::from_row_slice(&[1.0, 2.0]);
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 2.0, 2.0]);
        let b = DVector::from_row_slice(&[1.0, 2.0]);
        match solve_standard_form::<f64>(&c, &a, &b) {
            LpOutcome::Optimal(w) => assert!((w[0] - 1.0).abs() < 1e-12 && w[1].abs() < 1e-12),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unbounded_program() {
        // min -w0  s.t. w0 - w1 = 0
        let c = DVector::from_row_slice(&[-1.0, 0.0]);
        let a = DMatrix::from_row_slice(1, 2, &[1.0, -1.0]);
        let b = DVector::from_row_slice(&[0.0]);
        assert_eq!(solve_standard_form(&c, &a, &b), LpOutcome::Unbounded);
    }
}
