//! Recursive least squares with a constant forgetting factor.
//!
//! The state equation is identified as `n` parallel ARX(1,1) rows sharing the
//! regressor `φ = [xᵀ uᵀ]ᵀ`: row `j` predicts `x_j(i) = φ(i−1)ᵀ θ_j`. All rows
//! share one information matrix, so a single gain serves every row.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::linalg::{self, min_sym_eigenvalue};
use crate::{Error, Result};

/// Smallest eigenvalue of the information matrix above which the true inverse is used.
pub const INVERTIBLE_THRESHOLD: f64 = 1e-10;

/// Which regressor enters the gain and the information update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegressorTiming {
    /// `φ(i−1)` everywhere: gain direction, information update and prediction.
    #[default]
    Standard,
    /// Gain direction and information update use `φ(i)`, the prediction `φ(i−1)`.
    Literal,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RlsState {
    /// Row `j` holds `[Ã_j B̃_j]`.
    #[serde(with = "linalg::rows")]
    pub theta: DMatrix<f64>,
    #[serde(with = "linalg::rows")]
    pub r_id: DMatrix<f64>,
    pub lambda: f64,
    #[serde(with = "linalg::vector")]
    pub phi_prev: DVector<f64>,
    pub update_count: usize,
    pub timing: RegressorTiming,
    n_inputs: usize,
}

impl RlsState {
    pub fn init(a0: &DMatrix<f64>, b0: &DMatrix<f64>, lambda: f64) -> Result<Self> {
        let n = a0.nrows();
        if !a0.is_square() || b0.nrows() != n {
            return Err(Error::Contract(
                "initial model must have A n×n and B n×m".into(),
            ));
        }
        if !(lambda > 0.0 && lambda <= 1.0) {
            return Err(Error::Contract(format!(
                "forgetting factor {lambda} outside (0, 1]"
            )));
        }
        let m = b0.ncols();
        let mut theta = DMatrix::zeros(n, n + m);
        theta.view_mut((0, 0), (n, n)).copy_from(a0);
        theta.view_mut((0, n), (n, m)).copy_from(b0);
        Ok(Self {
            theta,
            r_id: DMatrix::zeros(n + m, n + m),
            lambda,
            phi_prev: DVector::zeros(n + m),
            update_count: 0,
            timing: RegressorTiming::Standard,
            n_inputs: m,
        })
    }

    pub fn with_timing(mut self, timing: RegressorTiming) -> Self {
        self.timing = timing;
        self
    }

    pub fn n_states(&self) -> usize {
        self.theta.nrows()
    }

    pub fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    /// One-step prediction `x̂_j = φ_prevᵀ θ_j`.
    pub fn predict(&self) -> DVector<f64> {
        &self.theta * &self.phi_prev
    }

    /// Absorbs the measurement `x_new` and stores `phi_new` as the next regressor.
    pub fn update(&mut self, x_new: &DVector<f64>, phi_new: &DVector<f64>) -> Result<()> {
        let n = self.n_states();
        let p = n + self.n_inputs;
        if x_new.len() != n {
            return Err(Error::Dimension {
                expected: n,
                got: x_new.len(),
            });
        }
        if phi_new.len() != p {
            return Err(Error::Dimension {
                expected: p,
                got: phi_new.len(),
            });
        }
        if !linalg::all_finite(x_new) || !linalg::all_finite(phi_new) {
            return Err(Error::Contract("non-finite RLS data".into()));
        }

        let innovation = x_new - self.predict();
        let direction = match self.timing {
            RegressorTiming::Standard => self.phi_prev.clone(),
            RegressorTiming::Literal => phi_new.clone(),
        };
        self.r_id = &self.r_id * self.lambda + &direction * direction.transpose();
        self.r_id = (&self.r_id + self.r_id.transpose()) * 0.5;

        let gain = self.solve_information(&direction)?;
        // θ_j ← θ_j + gain · innovation_j for every row at once.
        self.theta += &innovation * gain.transpose();
        self.phi_prev = phi_new.clone();
        self.update_count += 1;
        Ok(())
    }

    /// `R_ID⁻¹ φ`, or the minimum-norm least-squares solution while `R_ID` is singular.
    fn solve_information(&self, phi: &DVector<f64>) -> Result<DVector<f64>> {
        if phi.amax() == 0.0 {
            return Ok(DVector::zeros(phi.len()));
        }
        if self.is_invertible() {
            if let Some(chol) = self.r_id.clone().cholesky() {
                return Ok(chol.solve(phi));
            }
        }
        let svd = self.r_id.clone().svd(true, true);
        svd.solve(phi, INVERTIBLE_THRESHOLD)
            .map_err(|e| Error::Contract(format!("pseudo-inverse failed: {e}")))
    }

    pub fn is_invertible(&self) -> bool {
        min_sym_eigenvalue(&self.r_id) > INVERTIBLE_THRESHOLD
    }

    /// Current estimate `(Ã, B̃)`.
    pub fn current_model(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let n = self.n_states();
        (
            self.theta.columns(0, n).into_owned(),
            self.theta.columns(n, self.n_inputs).into_owned(),
        )
    }

    pub fn parameter_error_pct(
        &self,
        a_true: &DMatrix<f64>,
        b_true: &DMatrix<f64>,
    ) -> Result<ParameterError> {
        let (a, b) = self.current_model();
        if a.shape() != a_true.shape() || b.shape() != b_true.shape() {
            return Err(Error::Contract(
                "true model shape differs from the estimate".into(),
            ));
        }
        let est = flatten_model(&a, &b);
        let truth = flatten_model(a_true, b_true);
        let mut values = Vec::with_capacity(est.len());
        let mut absolute = Vec::with_capacity(est.len());
        for (e, t) in est.iter().zip(&truth) {
            if *t == 0.0 {
                values.push(e - t);
                absolute.push(true);
            } else {
                values.push(100.0 * (e - t) / t);
                absolute.push(false);
            }
        }
        Ok(ParameterError { values, absolute })
    }
}

/// Entrywise estimation error, ordered `A` row-major then `B` row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterError {
    /// Percent error, or absolute error where the true entry is zero.
    pub values: Vec<f64>,
    pub absolute: Vec<bool>,
}

impl ParameterError {
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }
}

/// `A` entries row-major followed by `B` entries row-major.
pub fn flatten_model(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Vec<f64> {
    a.row_iter()
        .flat_map(|r| r.iter().copied().collect::<Vec<_>>())
        .chain(
            b.row_iter()
                .flat_map(|r| r.iter().copied().collect::<Vec<_>>()),
        )
        .collect()
}

/// Labels matching [`flatten_model`], e.g. `A11 … B21`.
pub fn parameter_labels(n: usize, m: usize) -> Vec<String> {
    let mut out = Vec::with_capacity(n * (n + m));
    for i in 0..n {
        for j in 0..n {
            out.push(format!("A{}{}", i + 1, j + 1));
        }
    }
    for i in 0..n {
        for j in 0..m {
            out.push(format!("B{}{}", i + 1, j + 1));
        }
    }
    out
}
