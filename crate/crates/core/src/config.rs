//! JSON scenario configuration, built-in scenarios and load-time checks.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::controller::MpcConfig;
use crate::excitation::PeParams;
use crate::linalg;
use crate::polytope::Polytope;
use crate::sets::{self, TubeIngredients, TubeParams, UncertainModel};
use crate::sysid::RegressorTiming;
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    pub model: UncertainModel,
    pub sets: ConstraintSets,
    pub controller: ControllerParams,
    pub excitation: PeParams,
    pub identification: IdentificationParams,
    pub simulation: SimulationParams,
    #[serde(default)]
    pub tube: TubeParams,
    #[serde(default)]
    pub tolerances: Tolerances,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintSets {
    pub x: Polytope,
    pub u: Polytope,
    pub w: Polytope,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerParams {
    pub horizon: usize,
    #[serde(with = "linalg::rows")]
    pub q: DMatrix<f64>,
    #[serde(with = "linalg::rows")]
    pub r: DMatrix<f64>,
    #[serde(with = "linalg::rows")]
    pub k_t: DMatrix<f64>,
    #[serde(default = "default_grid_density")]
    pub grid_density: usize,
}

fn default_grid_density() -> usize {
    41
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentificationParams {
    pub lambda: f64,
    #[serde(default = "default_update_period")]
    pub update_period: usize,
    #[serde(default)]
    pub timing: RegressorTiming,
}

fn default_update_period() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationParams {
    #[serde(with = "linalg::vector")]
    pub x0: DVector<f64>,
    pub steps: usize,
    /// Uncertain parameter of the true plant.
    pub delta: f64,
    pub seed: u64,
    #[serde(default = "default_init_attempts")]
    pub init_attempts: usize,
    /// Standard deviation of additive state noise; absent means noise-free.
    #[serde(default)]
    pub noise_std: Option<f64>,
}

fn default_init_attempts() -> usize {
    1000
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    pub monitor: f64,
    pub qp: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            monitor: 1e-7,
            qp: 1e-8,
        }
    }
}

/// Built-in scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Builtin {
    Identification,
    Regulation,
}

const IDENTIFICATION_JSON: &str = include_str!("../scenarios/identification.json");
const REGULATION_JSON: &str = include_str!("../scenarios/regulation.json");

impl Builtin {
    pub fn json(self) -> &'static str {
        match self {
            Builtin::Identification => IDENTIFICATION_JSON,
            Builtin::Regulation => REGULATION_JSON,
        }
    }

    pub fn config(self) -> ScenarioConfig {
        ScenarioConfig::from_json(self.json()).expect("built-in scenario parses")
    }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("line {} column {}: {e}", e.line(), e.column())))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn n_states(&self) -> usize {
        self.model.n_states()
    }

    pub fn n_inputs(&self) -> usize {
        self.model.n_inputs()
    }

    /// SHA-256 over the inputs the tube ingredients depend on.
    pub fn ingredients_hash(&self) -> Result<String> {
        let key = serde_json::json!({
            "model": &self.model,
            "sets": &self.sets,
            "q": linalg::to_rows(&self.controller.q),
            "r": linalg::to_rows(&self.controller.r),
            "k_t": linalg::to_rows(&self.controller.k_t),
            "tube": &self.tube,
        });
        let digest = Sha256::digest(serde_json::to_vec(&key)?);
        Ok(hex::encode(digest))
    }

    pub fn build_ingredients(&self) -> Result<TubeIngredients> {
        TubeIngredients::build(
            &self.model,
            &self.sets.x,
            &self.sets.u,
            &self.sets.w,
            &self.controller.k_t,
            &self.controller.q,
            &self.controller.r,
            &self.tube,
        )
    }

    pub fn mpc_config(&self, ingredients: TubeIngredients) -> MpcConfig {
        MpcConfig {
            horizon: self.controller.horizon,
            q: self.controller.q.clone(),
            r: self.controller.r.clone(),
            ingredients,
            w_set: self.sets.w.clone(),
            pe: self.excitation,
            grid_density: self.controller.grid_density,
            qp_tol: self.tolerances.qp,
            terminal_iter_max: self.tube.terminal_iter_max,
        }
    }

    /// Runs every load-time check. Set construction runs only when the
    /// parameter domains are valid.
    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        let domains = self.validate_domains();
        let domains_ok = domains.is_ok();
        report.push("parameter domains", domains);
        if !domains_ok {
            return report;
        }

        let compact = self.check_sets();
        report.push("X, U compact and containing the origin", compact);

        let stab = sets::solve_dare(
            &self.model.a_nom,
            &self.model.b_nom,
            &self.controller.q,
            &self.controller.r,
        )
        .map(|_| ());
        report.push("nominal pair stabilizable", stab);

        let u_hat = self.sets.u.pontryagin_diff(&self.sets.w);
        let regulator_set = u_hat.and_then(|u_hat| {
            if u_hat.is_empty()? {
                return Err(Error::InfeasibleDesign("U ⊖ W is empty".into()));
            }
            let sum = u_hat.minkowski_sum(&self.sets.w)?;
            if !sum.is_subset_of(&self.sets.u, 1e-9)? {
                return Err(Error::InfeasibleDesign(
                    "Û ⊕ W is not contained in U".into(),
                ));
            }
            Ok(())
        });
        report.push(
            "regulator input set Û = U ⊖ W nonempty with Û ⊕ W ⊆ U",
            regulator_set,
        );

        let a_k = &self.model.a_nom + &self.model.b_nom * &self.controller.k_t;
        let rho = linalg::spectral_radius(&a_k);
        report.push(
            "tube gain stabilizes the nominal model",
            if rho < 1.0 {
                Ok(())
            } else {
                Err(Error::InfeasibleDesign(format!(
                    "spectral radius of A + B K_t is {rho:.4}"
                )))
            },
        );

        if report.all_passed() {
            report.push(
                "tube fits: S ⊂ X, K_t S ⊂ Û, terminal set exists",
                self.build_ingredients().map(|_| ()),
            );
        }
        report
    }

    pub fn validate_domains(&self) -> Result<()> {
        self.model.validate()?;
        let n = self.n_states();
        let m = self.n_inputs();
        let c = &self.controller;
        if c.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if c.q.shape() != (n, n) || c.r.shape() != (m, m) || c.k_t.shape() != (m, n) {
            return Err(Error::Config("Q must be n×n, R m×m, K_t m×n".into()));
        }
        if linalg::min_sym_eigenvalue(&c.q) < -1e-12 {
            return Err(Error::Config("Q must be positive semidefinite".into()));
        }
        if linalg::min_sym_eigenvalue(&c.r) <= 0.0 {
            return Err(Error::Config("R must be positive definite".into()));
        }
        if c.grid_density == 0 {
            return Err(Error::Config("grid_density must be positive".into()));
        }
        self.excitation.validate()?;
        let id = &self.identification;
        if !(id.lambda > 0.0 && id.lambda <= 1.0) {
            return Err(Error::Config(format!(
                "lambda {} outside (0, 1]",
                id.lambda
            )));
        }
        if id.update_period == 0 {
            return Err(Error::Config("update_period must be at least 1".into()));
        }
        let s = &self.simulation;
        if s.x0.len() != n {
            return Err(Error::Config("x0 has the wrong dimension".into()));
        }
        if s.delta.abs() > self.model.delta_max {
            return Err(Error::Config(format!(
                "|delta| = {} exceeds delta_max = {}",
                s.delta.abs(),
                self.model.delta_max
            )));
        }
        if s.init_attempts == 0 {
            return Err(Error::Config("init_attempts must be at least 1".into()));
        }
        if let Some(std) = s.noise_std {
            if !(std >= 0.0) {
                return Err(Error::Config("noise_std must be nonnegative".into()));
            }
        }
        if self.sets.x.dim() != n || self.sets.u.dim() != m || self.sets.w.dim() != m {
            return Err(Error::Config(
                "constraint set dimensions do not match the model".into(),
            ));
        }
        let t = &self.tube;
        if !(t.mismatch_multiplier > 0.0)
            || !(t.alpha_max > 0.0 && t.alpha_max < 1.0)
            || t.s_max == 0
        {
            return Err(Error::Config("tube parameters out of range".into()));
        }
        if !(self.tolerances.monitor > 0.0) || !(self.tolerances.qp > 0.0) {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        Ok(())
    }

    fn check_sets(&self) -> Result<()> {
        for (name, set) in [
            ("X", &self.sets.x),
            ("U", &self.sets.u),
            ("W", &self.sets.w),
        ] {
            if !set.contains(&DVector::zeros(set.dim()))? {
                return Err(Error::InfeasibleDesign(format!(
                    "{name} does not contain the origin"
                )));
            }
            set.bounding_box()
                .map_err(|_| Error::InfeasibleDesign(format!("{name} is unbounded")))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: Option<String>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    fn push(&mut self, name: &str, outcome: Result<()>) {
        self.checks.push(Check {
            name: name.to_string(),
            passed: outcome.is_ok(),
            detail: outcome.err().map(|e| e.to_string()),
        });
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}
