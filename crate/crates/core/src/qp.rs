//! Primal active-set method for small strictly convex QPs
//! `min ½ xᵀHx + fᵀx  s.t.  G x ≤ g`.
//!
//! A feasible start comes from the LP phase in [`crate::lp`]. Working-set
//! rows stay linearly independent: the initial set is filtered by rank and a
//! blocking row always has `G_i p > 0` while `G_W p = 0`.

use nalgebra::{DMatrix, DVector};

use crate::lp::{self, LpOptions};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct QpProblem {
    pub hessian: DMatrix<f64>,
    pub linear: DVector<f64>,
    pub constraints: DMatrix<f64>,
    pub bounds: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub status: QpStatus,
    pub x: DVector<f64>,
    /// One multiplier per constraint row, zero off the active set.
    pub multipliers: DVector<f64>,
    pub objective: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct QpOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for QpOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 500,
        }
    }
}

impl QpProblem {
    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.hessian * x)) + self.linear.dot(x)
    }

    /// Largest violation of stationarity, primal/dual feasibility and complementarity.
    pub fn kkt_residual(&self, x: &DVector<f64>, mu: &DVector<f64>) -> f64 {
        let grad = &self.hessian * x + &self.linear + self.constraints.transpose() * mu;
        let slack = &self.constraints * x - &self.bounds;
        let mut r = grad.amax();
        for i in 0..slack.len() {
            r = r.max(slack[i].max(0.0));
            r = r.max((-mu[i]).max(0.0));
            r = r.max((mu[i] * slack[i]).abs());
        }
        r
    }
}

pub fn solve(problem: &QpProblem, opts: &QpOptions) -> Result<QpSolution> {
    let n = problem.hessian.nrows();
    let m = problem.constraints.nrows();
    if problem.hessian.ncols() != n || problem.linear.len() != n || problem.constraints.ncols() != n
    {
        return Err(Error::Contract("inconsistent QP dimensions".into()));
    }
    if problem.bounds.len() != m {
        return Err(Error::Dimension {
            expected: m,
            got: problem.bounds.len(),
        });
    }

    // Row-normalized copy; multipliers are mapped back at the end.
    let norms: Vec<f64> = (0..m)
        .map(|i| problem.constraints.row(i).norm().max(1e-300))
        .collect();
    let g = DMatrix::from_fn(m, n, |i, j| problem.constraints[(i, j)] / norms[i]);
    let gb = DVector::from_fn(m, |i, _| problem.bounds[i] / norms[i]);

    let start = lp::feasible_point(&g, &gb, &LpOptions::default()).map_err(Error::Numerical)?;
    let Some(mut x) = start else {
        return Ok(QpSolution {
            status: QpStatus::Infeasible,
            x: DVector::zeros(n),
            multipliers: DVector::zeros(m),
            objective: f64::NAN,
            kkt_residual: f64::NAN,
            iterations: 0,
        });
    };

    let scale = 1.0 + gb.amax();
    let mut working: Vec<usize> = Vec::new();
    for i in 0..m {
        if working.len() == n {
            break;
        }
        if (g.row(i) * &x)[0] - gb[i] >= -1e-9 * scale && independent(&g, &working, i) {
            working.push(i);
        }
    }

    let h = &problem.hessian;
    let f = &problem.linear;
    let mut iterations = 0;
    let mut lambda_w: DVector<f64>;
    loop {
        iterations += 1;
        if iterations > opts.max_iter {
            return Err(Error::Qp(format!(
                "active set did not settle in {} iterations",
                opts.max_iter
            )));
        }
        let w = working.len();
        let mut kkt = DMatrix::zeros(n + w, n + w);
        kkt.view_mut((0, 0), (n, n)).copy_from(h);
        for (k, &i) in working.iter().enumerate() {
            for j in 0..n {
                kkt[(n + k, j)] = g[(i, j)];
                kkt[(j, n + k)] = g[(i, j)];
            }
        }
        let mut rhs = DVector::zeros(n + w);
        rhs.rows_mut(0, n).copy_from(&(-(h * &x + f)));
        let sol = kkt
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Qp("singular KKT system".into()))?;
        let p = sol.rows(0, n).into_owned();
        lambda_w = sol.rows(n, w).into_owned();

        if p.amax() <= 1e-12 * (1.0 + x.amax()) {
            let most_negative = lambda_w
                .iter()
                .enumerate()
                .filter(|(_, &l)| l < -opts.tol)
                .min_by(|a, b| a.1.total_cmp(b.1))
                .map(|(k, _)| k);
            match most_negative {
                None => break,
                Some(k) => {
                    working.remove(k);
                    continue;
                }
            }
        }

        let mut alpha = 1.0;
        let mut blocking = None;
        for i in 0..m {
            if working.contains(&i) {
                continue;
            }
            let gp = (g.row(i) * &p)[0];
            if gp > 1e-14 {
                let ratio = ((gb[i] - (g.row(i) * &x)[0]) / gp).max(0.0);
                if ratio < alpha {
                    alpha = ratio;
                    blocking = Some(i);
                }
            }
        }
        x += &p * alpha;
        if let Some(i) = blocking {
            working.push(i);
        }
    }

    let mut mu = DVector::zeros(m);
    for (k, &i) in working.iter().enumerate() {
        mu[i] = lambda_w[k] / norms[i];
    }
    let kkt_residual = problem.kkt_residual(&x, &mu);
    Ok(QpSolution {
        status: QpStatus::Optimal,
        objective: problem.objective(&x),
        x,
        multipliers: mu,
        kkt_residual,
        iterations,
    })
}

fn independent(g: &DMatrix<f64>, working: &[usize], candidate: usize) -> bool {
    let rows: Vec<usize> = working
        .iter()
        .copied()
        .chain(std::iter::once(candidate))
        .collect();
    let sub = DMatrix::from_fn(rows.len(), g.ncols(), |i, j| g[(rows[i], j)]);
    let sv = sub.svd(false, false).singular_values;
    sv.min() > 1e-9
}
