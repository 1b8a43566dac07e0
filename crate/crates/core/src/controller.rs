//! Tube MPC with an attached exciting input.
//!
//! The exciting input enters neither the nominal dynamics nor the nominal
//! constraints, so the joint problem splits into a condensed QP over the
//! nominal inputs and a grid search over `w̃(0)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::excitation::{self, PeBuffer, PeParams, Selection};
use crate::polytope::{Polytope, MEMBERSHIP_TOL};
use crate::qp::{self, QpOptions, QpProblem, QpStatus};
use crate::sets::TubeIngredients;
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct MpcConfig {
    pub horizon: usize,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub ingredients: TubeIngredients,
    /// Admissible exciting inputs `W`.
    pub w_set: Polytope,
    pub pe: PeParams,
    pub grid_density: usize,
    pub qp_tol: f64,
    pub terminal_iter_max: usize,
}

impl MpcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Contract("horizon must be at least 1".into()));
        }
        let n = self.ingredients.k_t.ncols();
        let m = self.ingredients.k_t.nrows();
        if self.q.shape() != (n, n) || self.r.shape() != (m, m) {
            return Err(Error::Contract("Q must be n×n and R m×m".into()));
        }
        if crate::linalg::min_sym_eigenvalue(&self.q) < -1e-12 {
            return Err(Error::Contract("Q must be positive semidefinite".into()));
        }
        if crate::linalg::min_sym_eigenvalue(&self.r) <= 0.0 {
            return Err(Error::Contract("R must be positive definite".into()));
        }
        if !(self.qp_tol > 0.0) {
            return Err(Error::Contract("qp_tol must be positive".into()));
        }
        self.pe.validate()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NominalSolution {
    pub feasible: bool,
    pub v_seq: Vec<DVector<f64>>,
    pub z_pred: Vec<DVector<f64>>,
    pub cost_z: f64,
    pub kkt_residual: f64,
}

#[derive(Debug, Clone)]
pub struct MpcSolution {
    pub v_seq: Vec<DVector<f64>>,
    pub z_pred: Vec<DVector<f64>>,
    pub w0: DVector<f64>,
    /// `w̃(0..min(N_p, N))`, the part of the exciting plan that carries cost.
    pub w_plan: Vec<DVector<f64>>,
    pub cost_z: f64,
    pub cost_w: f64,
    pub feasible: bool,
    pub kkt_residual: f64,
    pub selection: Selection,
}

impl MpcSolution {
    pub fn total_cost(&self) -> f64 {
        self.cost_z + self.cost_w
    }
}

/// Condensed QP data for one prediction model: `z(k) = Φ_k z₀ + Γ_k V`.
#[derive(Debug, Clone)]
pub struct CondensedQp {
    n: usize,
    m: usize,
    horizon: usize,
    phi: Vec<DMatrix<f64>>,
    gamma: Vec<DMatrix<f64>>,
    hessian: DMatrix<f64>,
    /// `f = F z₀`.
    linear_map: DMatrix<f64>,
    /// Constant part of the cost, `z₀ᵀ Y z₀`.
    constant: DMatrix<f64>,
    g: DMatrix<f64>,
    g_const: DVector<f64>,
    g_state: DMatrix<f64>,
    z_set: Polytope,
}

impl CondensedQp {
    pub fn new(cfg: &MpcConfig, a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        let m = b.ncols();
        let nn = cfg.horizon;
        let ing = &cfg.ingredients;
        if a.shape() != (n, n) || b.nrows() != n || ing.k_t.shape() != (m, n) {
            return Err(Error::Contract(
                "prediction model does not match K_t".into(),
            ));
        }

        let mut phi = vec![DMatrix::identity(n, n)];
        let mut gamma = vec![DMatrix::zeros(n, nn * m)];
        for k in 0..nn {
            phi.push(a * &phi[k]);
            let mut next = a * &gamma[k];
            next.view_mut((0, k * m), (n, m)).copy_from(b);
            gamma.push(next);
        }

        let mut half_h = DMatrix::zeros(nn * m, nn * m);
        let mut f_map = DMatrix::zeros(nn * m, n);
        let mut constant = &cfg.q * 1.0;
        for k in 1..=nn {
            let weight = if k == nn { &ing.p_f } else { &cfg.q };
            let gt_w = gamma[k].transpose() * weight;
            half_h += &gt_w * &gamma[k];
            f_map += &gt_w * &phi[k];
            constant += phi[k].transpose() * weight * &phi[k];
        }
        for k in 0..nn {
            let mut blk = half_h.view_mut((k * m, k * m), (m, m));
            blk += &cfg.r;
        }
        let hessian = {
            let h = &half_h * 2.0;
            (&h + h.transpose()) * 0.5
        };

        let (zh, zo) = (ing.z.normals(), ing.z.offsets());
        let (vh, vo) = (ing.v.normals(), ing.v.offsets());
        let (fh, fo) = (ing.z_f.normals(), ing.z_f.offsets());
        let rows = zh.nrows() * (nn - 1) + vh.nrows() * nn + fh.nrows();
        let mut g = DMatrix::zeros(rows, nn * m);
        let mut g_const = DVector::zeros(rows);
        let mut g_state = DMatrix::zeros(rows, n);
        let mut row = 0;
        let mut push_state = |row: &mut usize, h: &DMatrix<f64>, o: &DVector<f64>, k: usize| {
            let q = h.nrows();
            g.view_mut((*row, 0), (q, nn * m))
                .copy_from(&(h * &gamma[k]));
            g_state
                .view_mut((*row, 0), (q, n))
                .copy_from(&(h * &phi[k]));
            g_const.rows_mut(*row, q).copy_from(o);
            *row += q;
        };
        for k in 1..nn {
            push_state(&mut row, zh, zo, k);
        }
        push_state(&mut row, fh, fo, nn);
        for k in 0..nn {
            let q = vh.nrows();
            g.view_mut((row, k * m), (q, m)).copy_from(vh);
            g_const.rows_mut(row, q).copy_from(vo);
            row += q;
        }

        Ok(Self {
            n,
            m,
            horizon: nn,
            phi,
            gamma,
            hessian,
            linear_map: f_map * 2.0,
            constant,
            g,
            g_const,
            g_state,
            z_set: ing.z.clone(),
        })
    }

    pub fn problem(&self, z0: &DVector<f64>) -> QpProblem {
        QpProblem {
            hessian: self.hessian.clone(),
            linear: &self.linear_map * z0,
            constraints: self.g.clone(),
            bounds: &self.g_const - &self.g_state * z0,
        }
    }

    /// Nominal trajectory `z(0..=N)` under the stacked inputs.
    pub fn predict(&self, z0: &DVector<f64>, v: &DVector<f64>) -> Vec<DVector<f64>> {
        (0..=self.horizon)
            .map(|k| &self.phi[k] * z0 + &self.gamma[k] * v)
            .collect()
    }

    pub fn solve(&self, z0: &DVector<f64>, tol: f64) -> Result<NominalSolution> {
        if z0.len() != self.n {
            return Err(Error::Dimension {
                expected: self.n,
                got: z0.len(),
            });
        }
        let infeasible = || NominalSolution {
            feasible: false,
            v_seq: Vec::new(),
            z_pred: Vec::new(),
            cost_z: f64::INFINITY,
            kkt_residual: f64::NAN,
        };
        if !self.z_set.contains_tol(z0, MEMBERSHIP_TOL)? {
            return Ok(infeasible());
        }
        let problem = self.problem(z0);
        let opts = QpOptions {
            tol: tol.min(1e-10),
            ..QpOptions::default()
        };
        let sol = qp::solve(&problem, &opts)?;
        if sol.status == QpStatus::Infeasible {
            return Ok(infeasible());
        }
        if !(sol.kkt_residual <= tol) {
            return Err(Error::Qp(format!(
                "KKT residual {:.3e} exceeds tolerance {tol:.1e}",
                sol.kkt_residual
            )));
        }
        let cost_z = sol.objective + z0.dot(&(&self.constant * z0));
        let v_seq = (0..self.horizon)
            .map(|k| sol.x.rows(k * self.m, self.m).into_owned())
            .collect();
        Ok(NominalSolution {
            feasible: true,
            v_seq,
            z_pred: self.predict(z0, &sol.x),
            cost_z,
            kkt_residual: sol.kkt_residual,
        })
    }
}

/// One-shot nominal QP for `(A, B)`.
pub fn solve_nominal_qp(
    cfg: &MpcConfig,
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    z0: &DVector<f64>,
) -> Result<NominalSolution> {
    CondensedQp::new(cfg, a, b)?.solve(z0, cfg.qp_tol)
}

/// `u = v₀ + K_t (x − z) + w₀`.
pub fn control_input(
    v0: &DVector<f64>,
    k_t: &DMatrix<f64>,
    x: &DVector<f64>,
    z: &DVector<f64>,
    w0: &DVector<f64>,
) -> DVector<f64> {
    v0 + k_t * (x - z) + w0
}

/// `z⁺ = A z + B v₀`.
pub fn advance_nominal(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    z: &DVector<f64>,
    v0: &DVector<f64>,
) -> DVector<f64> {
    a * z + b * v0
}

/// Controller state across steps: the published prediction model, the
/// ingredients built for it and the cached QP.
#[derive(Debug, Clone)]
pub struct Controller {
    cfg: MpcConfig,
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    qp: CondensedQp,
}

impl Controller {
    pub fn new(cfg: MpcConfig, a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        cfg.validate()?;
        let qp = CondensedQp::new(&cfg, &a, &b)?;
        Ok(Self { cfg, a, b, qp })
    }

    pub fn config(&self) -> &MpcConfig {
        &self.cfg
    }

    pub fn ingredients(&self) -> &TubeIngredients {
        &self.cfg.ingredients
    }

    pub fn model(&self) -> (&DMatrix<f64>, &DMatrix<f64>) {
        (&self.a, &self.b)
    }

    /// Switches the prediction model and rebuilds the terminal ingredients.
    /// The controller is left untouched if the rebuild fails.
    pub fn publish_model(&mut self, a: DMatrix<f64>, b: DMatrix<f64>) -> Result<()> {
        let ingredients = self.cfg.ingredients.with_prediction_model(
            &a,
            &b,
            &self.cfg.q,
            &self.cfg.r,
            self.cfg.terminal_iter_max,
        )?;
        let mut cfg = self.cfg.clone();
        cfg.ingredients = ingredients;
        let qp = CondensedQp::new(&cfg, &a, &b)?;
        *self = Self { cfg, a, b, qp };
        Ok(())
    }

    pub fn solve_nominal(&self, z0: &DVector<f64>) -> Result<NominalSolution> {
        self.qp.solve(z0, self.cfg.qp_tol)
    }

    /// Nominal QP plus exciting-input selection. An infeasible QP is an error.
    pub fn solve(&self, z0: &DVector<f64>, buf: &PeBuffer) -> Result<MpcSolution> {
        let nominal = self.solve_nominal(z0)?;
        if !nominal.feasible {
            return Err(Error::Infeasible(format!(
                "nominal state {:?} is outside the feasible region",
                z0.as_slice()
            )));
        }
        let selection =
            excitation::select_w0(buf, &self.cfg.w_set, &self.cfg.r, self.cfg.grid_density)?;
        let count = self.cfg.pe.np.min(self.cfg.horizon);
        let w_plan = buf.planned_sequence(&selection.w0, count)?;
        let cost_w = w_plan.iter().map(|w| w.dot(&(&self.cfg.r * w))).sum();
        Ok(MpcSolution {
            v_seq: nominal.v_seq,
            z_pred: nominal.z_pred,
            w0: selection.w0.clone(),
            w_plan,
            cost_z: nominal.cost_z,
            cost_w,
            feasible: true,
            kkt_residual: nominal.kkt_residual,
            selection,
        })
    }

    pub fn advance(&self, z: &DVector<f64>, v0: &DVector<f64>) -> DVector<f64> {
        advance_nominal(&self.a, &self.b, z, v0)
    }
}
