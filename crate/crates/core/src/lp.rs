//! Dense linear programming for small polyhedral queries.
//!
//! Every LP in this crate has the shape `max cᵀx  s.t.  A x ≤ b` with `x`
//! free, few variables (the state/input dimension) and possibly many rows.
//! The solver works on the dual `min bᵀy  s.t.  Aᵀy = c, y ≥ 0`, which has
//! only `dim(x)` equality rows, so the tableau stays `d × (q + d)` and a
//! pivot costs `O(d·q)`. The primal point is recovered from the simplex
//! multipliers of the optimal dual basis. Bland's rule prevents cycling on
//! the heavily degenerate problems that redundant halfspaces produce.

use nalgebra::{DMatrix, DVector};

/// Outcome of an LP solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone, Copy)]
pub struct LpOptions {
    /// Optimality and pivot tolerance on normalized data.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LpOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 20_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Optimal primal point, present only when `status == Optimal`.
    pub x: Option<DVector<f64>>,
    pub value: f64,
}

impl LpSolution {
    fn with_status(status: LpStatus) -> Self {
        let value = match status {
            LpStatus::Unbounded => f64::INFINITY,
            _ => f64::NAN,
        };
        Self {
            status,
            x: None,
            value,
        }
    }
}

/// Maximize `cᵀx` subject to `A x ≤ b`.
pub fn maximize(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    c: &DVector<f64>,
    opts: &LpOptions,
) -> LpSolution {
    let d = a.ncols();
    assert_eq!(a.nrows(), b.len(), "row count of A and b differ");
    assert_eq!(c.len(), d, "objective length differs from column count");

    // Normalize rows; drop all-zero rows after checking them.
    let mut rows: Vec<usize> = Vec::with_capacity(a.nrows());
    let mut scale: Vec<f64> = Vec::with_capacity(a.nrows());
    for k in 0..a.nrows() {
        let norm = a.row(k).norm();
        if norm <= 1e-14 {
            if b[k] < -opts.tol {
                return LpSolution::with_status(LpStatus::Infeasible);
            }
            continue;
        }
        rows.push(k);
        scale.push(norm);
    }

    let q = rows.len();
    let an = DMatrix::from_fn(q, d, |r, j| a[(rows[r], j)] / scale[r]);
    let bn = DVector::from_fn(q, |r, _| b[rows[r]] / scale[r]);

    if q == 0 {
        return if c.norm() <= opts.tol {
            LpSolution {
                status: LpStatus::Optimal,
                x: Some(DVector::zeros(d)),
                value: 0.0,
            }
        } else {
            LpSolution::with_status(LpStatus::Unbounded)
        };
    }

    match solve_dual(&an, &bn, c, opts) {
        DualOutcome::Optimal(x) => {
            let value = c.dot(&x);
            LpSolution {
                status: LpStatus::Optimal,
                x: Some(x),
                value,
            }
        }
        DualOutcome::DualUnbounded => LpSolution::with_status(LpStatus::Infeasible),
        DualOutcome::IterationLimit => LpSolution::with_status(LpStatus::IterationLimit),
        DualOutcome::DualInfeasible => {
            // Primal is infeasible or unbounded; the zero objective decides.
            match solve_dual(&an, &bn, &DVector::zeros(d), opts) {
                DualOutcome::Optimal(_) => LpSolution::with_status(LpStatus::Unbounded),
                DualOutcome::DualUnbounded => LpSolution::with_status(LpStatus::Infeasible),
                DualOutcome::IterationLimit => LpSolution::with_status(LpStatus::IterationLimit),
                DualOutcome::DualInfeasible => LpSolution::with_status(LpStatus::Infeasible),
            }
        }
    }
}

/// Any point of `{x : A x ≤ b}`, or `None` if the set is empty.
pub fn feasible_point(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    opts: &LpOptions,
) -> Result<Option<DVector<f64>>, LpStatus> {
    let sol = maximize(a, b, &DVector::zeros(a.ncols()), opts);
    match sol.status {
        LpStatus::Optimal => Ok(sol.x),
        LpStatus::Infeasible => Ok(None),
        other => Err(other),
    }
}

enum DualOutcome {
    Optimal(DVector<f64>),
    DualInfeasible,
    DualUnbounded,
    IterationLimit,
}

struct Tableau {
    nrows: usize,
    width: usize,
    data: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    #[inline]
    fn at(&self, r: usize, j: usize) -> f64 {
        self.data[r * (self.width + 1) + j]
    }

    #[inline]
    fn rhs(&self, r: usize) -> f64 {
        self.data[r * (self.width + 1) + self.width]
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let stride = self.width + 1;
        let p = self.data[pr * stride + pc];
        for j in 0..stride {
            self.data[pr * stride + j] /= p;
        }
        for r in 0..self.nrows {
            if r == pr {
                continue;
            }
            let f = self.data[r * stride + pc];
            if f == 0.0 {
                continue;
            }
            for j in 0..stride {
                let v = self.data[pr * stride + j];
                self.data[r * stride + j] -= f * v;
            }
        }
        self.basis[pr] = pc;
    }

    fn reduced_cost(&self, cost: &[f64], j: usize) -> f64 {
        let mut rc = cost[j];
        for r in 0..self.nrows {
            rc -= cost[self.basis[r]] * self.at(r, j);
        }
        rc
    }

    /// Runs Bland-rule simplex on `cost` over columns `0..enter_limit`.
    fn optimize(
        &mut self,
        cost: &[f64],
        enter_limit: usize,
        opts: &LpOptions,
        iters: &mut usize,
    ) -> Option<bool> {
        loop {
            if *iters >= opts.max_iter {
                return None;
            }
            *iters += 1;
            let entering = (0..enter_limit)
                .filter(|j| !self.basis.contains(j))
                .find(|&j| self.reduced_cost(cost, j) < -opts.tol);
            let Some(pc) = entering else {
                return Some(true);
            };
            let mut best: Option<(usize, f64)> = None;
            for r in 0..self.nrows {
                let t = self.at(r, pc);
                if t > opts.tol {
                    let ratio = self.rhs(r).max(0.0) / t;
                    best = match best {
                        None => Some((r, ratio)),
                        Some((br, bratio)) => {
                            if ratio < bratio - 1e-14 * (1.0 + bratio.abs())
                                || (ratio <= bratio + 1e-14 * (1.0 + bratio.abs())
                                    && self.basis[r] < self.basis[br])
                            {
                                Some((r, ratio))
                            } else {
                                Some((br, bratio))
                            }
                        }
                    };
                }
            }
            match best {
                None => return Some(false),
                Some((pr, _)) => self.pivot(pr, pc),
            }
        }
    }
}

/// Dual simplex on `min bᵀy, Aᵀy = c, y ≥ 0` with normalized rows of `A`.
fn solve_dual(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    c: &DVector<f64>,
    opts: &LpOptions,
) -> DualOutcome {
    let q = a.nrows();
    let d = a.ncols();
    let width = q + d;
    let sign: Vec<f64> = (0..d)
        .map(|r| if c[r] < 0.0 { -1.0 } else { 1.0 })
        .collect();

    let mut data = vec![0.0; d * (width + 1)];
    for r in 0..d {
        let row = &mut data[r * (width + 1)..(r + 1) * (width + 1)];
        for k in 0..q {
            row[k] = sign[r] * a[(k, r)];
        }
        row[q + r] = 1.0;
        row[width] = sign[r] * c[r];
    }
    let mut t = Tableau {
        nrows: d,
        width,
        data,
        basis: (q..q + d).collect(),
    };
    let mut iters = 0usize;

    // Phase 1: minimize the sum of artificials.
    let mut cost1 = vec![0.0; width];
    for c1 in cost1.iter_mut().skip(q) {
        *c1 = 1.0;
    }
    if t.optimize(&cost1, q, opts, &mut iters).is_none() {
        return DualOutcome::IterationLimit;
    }
    let infeas: f64 = (0..d).filter(|&r| t.basis[r] >= q).map(|r| t.rhs(r)).sum();
    let c_scale = 1.0 + c.amax();
    if infeas > opts.tol * c_scale {
        return DualOutcome::DualInfeasible;
    }

    // Drive zero-level artificials out of the basis where possible.
    for r in 0..d {
        if t.basis[r] >= q {
            let col = (0..q)
                .filter(|j| !t.basis.contains(j))
                .max_by(|&i, &j| t.at(r, i).abs().total_cmp(&t.at(r, j).abs()));
            if let Some(j) = col {
                if t.at(r, j).abs() > 1e-9 {
                    t.pivot(r, j);
                }
            }
        }
    }

    // Phase 2: minimize bᵀy; artificials never re-enter.
    let mut cost2 = vec![0.0; width];
    cost2[..q].copy_from_slice(b.as_slice());
    match t.optimize(&cost2, q, opts, &mut iters) {
        None => return DualOutcome::IterationLimit,
        Some(false) => return DualOutcome::DualUnbounded,
        Some(true) => {}
    }

    // Simplex multipliers of the dual are the primal point.
    let mut x = DVector::from_fn(d, |r, _| {
        let pi: f64 = (0..d).map(|i| cost2[t.basis[i]] * t.at(i, q + r)).sum();
        sign[r] * pi
    });

    // Refine against the active rows when the basis is made of real rows.
    if t.basis.iter().all(|&j| j < q) {
        let ab = DMatrix::from_fn(d, d, |i, j| a[(t.basis[i], j)]);
        let bb = DVector::from_fn(d, |i, _| b[t.basis[i]]);
        if let Some(refined) = ab.lu().solve(&bb) {
            if refined.iter().all(|v| v.is_finite()) {
                x = refined;
            }
        }
    }
    DualOutcome::Optimal(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn boxed(lo: f64, hi: f64) -> (DMatrix<f64>, DVector<f64>) {
        let a = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0]);
        let b = DVector::from_vec(vec![hi, -lo, hi, -lo]);
        (a, b)
    }

    #[test]
    fn box_support() {
        let (a, b) = boxed(-1.0, 2.0);
        let sol = maximize(
            &a,
            &b,
            &DVector::from_vec(vec![1.0, 1.0]),
            &LpOptions::default(),
        );
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.value - 4.0).abs() < 1e-12);
        let sol = maximize(
            &a,
            &b,
            &DVector::from_vec(vec![-1.0, 0.5]),
            &LpOptions::default(),
        );
        assert!((sol.value - 2.0).abs() < 1e-12);
    }

    #[test]
    fn detects_infeasible_and_unbounded() {
        let a = DMatrix::from_row_slice(2, 1, &[1.0, -1.0]);
        let b = DVector::from_vec(vec![-1.0, -1.0]);
        let sol = maximize(&a, &b, &DVector::from_vec(vec![1.0]), &LpOptions::default());
        assert_eq!(sol.status, LpStatus::Infeasible);

        let a = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let b = DVector::from_vec(vec![1.0]);
        let sol = maximize(
            &a,
            &b,
            &DVector::from_vec(vec![0.0, 1.0]),
            &LpOptions::default(),
        );
        assert_eq!(sol.status, LpStatus::Unbounded);
        let sol = maximize(
            &a,
            &b,
            &DVector::from_vec(vec![1.0, 0.0]),
            &LpOptions::default(),
        );
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_duplicates() {
        let (a0, b0) = boxed(-1.0, 1.0);
        let a = DMatrix::from_fn(12, 2, |i, j| a0[(i % 4, j)] * (1.0 + (i / 4) as f64));
        let b = DVector::from_fn(12, |i, _| b0[i % 4] * (1.0 + (i / 4) as f64));
        let sol = maximize(
            &a,
            &b,
            &DVector::from_vec(vec![3.0, -2.0]),
            &LpOptions::default(),
        );
        assert!((sol.value - 5.0).abs() < 1e-12);
        let p = feasible_point(&a, &b, &LpOptions::default())
            .unwrap()
            .unwrap();
        assert!((&a * &p - &b).max() <= 1e-12);
    }
}
