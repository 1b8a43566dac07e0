//! Closed loop: true plant, PE tube MPC, RLS identifier and runtime monitors.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::controller::{self, Controller};
use crate::excitation::{self, PeBuffer};
use crate::polytope::Polytope;
use crate::sets::TubeIngredients;
use crate::sysid::{self, RlsState};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct Plant {
    pub a_true: DMatrix<f64>,
    pub b_true: DMatrix<f64>,
    pub delta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Monitors {
    pub x_in_x: bool,
    pub u_in_u: bool,
    pub w_in_w: bool,
    pub e_in_s: bool,
    pub ws_in_ws: bool,
    pub qp_feasible: bool,
    pub pe: bool,
}

impl Monitors {
    pub fn all(&self) -> bool {
        self.x_in_x
            && self.u_in_u
            && self.w_in_w
            && self.e_in_s
            && self.ws_in_ws
            && self.qp_feasible
            && self.pe
    }

    pub const NAMES: [&'static str; 7] = [
        "x_in_X",
        "u_in_U",
        "w_in_W",
        "e_in_S",
        "wS_in_WS",
        "qp_feasible",
        "pe",
    ];

    pub fn values(&self) -> [bool; 7] {
        [
            self.x_in_x,
            self.u_in_u,
            self.w_in_w,
            self.e_in_s,
            self.ws_in_ws,
            self.qp_feasible,
            self.pe,
        ]
    }
}

/// Everything observed at step `i`. The estimate fields reflect the RLS
/// state after absorbing `x(i)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepRecord {
    pub i: usize,
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub e: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub w: Vec<f64>,
    /// Realized `(A − Ã)x + (B − B̃)u` for the prediction model in use.
    pub w_s: Vec<f64>,
    pub cost_z: f64,
    pub cost_w: f64,
    pub kkt_residual: f64,
    pub min_eig_m: f64,
    /// PE level of the applied input `u` over the same window; NaN until enough history.
    pub min_eig_u: f64,
    /// `trace(M + ρ₀I)` against the bound `l_p N_p max‖w‖²`.
    pub trace_m: f64,
    pub candidates: usize,
    pub feasible_candidates: usize,
    pub trivial_used: bool,
    pub theta: Vec<f64>,
    pub param_err_pct: Vec<f64>,
    pub model_published: bool,
    pub publish_failed: bool,
    pub monitors: Monitors,
}

/// Receives records as they are produced.
pub trait RecordSink {
    fn record(&mut self, rec: &StepRecord) -> Result<()>;
}

impl RecordSink for Vec<StepRecord> {
    fn record(&mut self, rec: &StepRecord) -> Result<()> {
        self.push(rec.clone());
        Ok(())
    }
}

/// CSV log with a fixed column order, flushed after every row.
pub struct CsvSink<W: Write> {
    writer: csv::Writer<W>,
    n: usize,
    m: usize,
    header_written: bool,
}

impl<W: Write> CsvSink<W> {
    pub fn new(inner: W, n: usize, m: usize) -> Self {
        Self {
            writer: csv::Writer::from_writer(inner),
            n,
            m,
            header_written: false,
        }
    }

    pub fn header(n: usize, m: usize) -> Vec<String> {
        let vecs = |p: &'static str, k: usize| (1..=k).map(move |j| format!("{p}{j}"));
        let labels = sysid::parameter_labels(n, m);
        let mut h = vec!["i".to_string()];
        h.extend(vecs("x", n));
        h.extend(vecs("z", n));
        h.extend(vecs("e", n));
        h.extend(vecs("u", m));
        h.extend(vecs("v", m));
        h.extend(vecs("w", m));
        h.extend(vecs("ws", n));
        for c in [
            "cost_z",
            "cost_w",
            "kkt_residual",
            "min_eig_m",
            "min_eig_u",
            "trace_m",
            "candidates",
            "feasible_candidates",
            "trivial_used",
        ] {
            h.push(c.into());
        }
        h.extend(labels.iter().map(|l| format!("theta_{l}")));
        h.extend(labels.iter().map(|l| format!("err_{l}")));
        h.push("model_published".into());
        h.push("publish_failed".into());
        h.extend(Monitors::NAMES.iter().map(|s| s.to_string()));
        h
    }

    pub fn into_inner(self) -> Result<W> {
        self.writer
            .into_inner()
            .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
    }
}

fn flag(b: bool) -> String {
    u8::from(b).to_string()
}

impl<W: Write> RecordSink for CsvSink<W> {
    fn record(&mut self, rec: &StepRecord) -> Result<()> {
        if !self.header_written {
            self.writer.write_record(Self::header(self.n, self.m))?;
            self.header_written = true;
        }
        let mut row = vec![rec.i.to_string()];
        for v in [&rec.x, &rec.z, &rec.e, &rec.u, &rec.v, &rec.w, &rec.w_s] {
            row.extend(v.iter().map(f64::to_string));
        }
        for v in [
            rec.cost_z,
            rec.cost_w,
            rec.kkt_residual,
            rec.min_eig_m,
            rec.min_eig_u,
            rec.trace_m,
        ] {
            row.push(v.to_string());
        }
        row.push(rec.candidates.to_string());
        row.push(rec.feasible_candidates.to_string());
        row.push(flag(rec.trivial_used));
        row.extend(rec.theta.iter().map(f64::to_string));
        row.extend(rec.param_err_pct.iter().map(f64::to_string));
        row.push(flag(rec.model_published));
        row.push(flag(rec.publish_failed));
        row.extend(rec.monitors.values().into_iter().map(flag));
        self.writer.write_record(&row)?;
        self.writer.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Summary {
    pub name: String,
    pub steps_requested: usize,
    pub steps_completed: usize,
    pub terminated: Option<String>,
    pub all_monitors_passed: bool,
    /// Failure count per monitor, in [`Monitors::NAMES`] order.
    pub monitor_failures: Vec<(String, usize)>,
    pub max_violation_x: f64,
    pub max_violation_u: f64,
    pub max_violation_w: f64,
    pub max_violation_e: f64,
    pub max_violation_ws: f64,
    pub min_eig_m: f64,
    pub parameter_labels: Vec<String>,
    pub final_param_err_pct: Vec<f64>,
    pub model_publish_failures: usize,
    pub elapsed_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct RunLog {
    pub records: Vec<StepRecord>,
    pub summary: Summary,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub fail_fast: bool,
}

/// Closed-loop state between steps.
pub struct Simulation {
    cfg: ScenarioConfig,
    plant: Plant,
    controller: Controller,
    rls: RlsState,
    buffer: PeBuffer,
    x: DVector<f64>,
    z: DVector<f64>,
    u_history: Vec<DVector<f64>>,
    w_max_sq: f64,
    noise: Option<(Normal<f64>, ChaCha8Rng)>,
    step: usize,
}

impl Simulation {
    /// Builds the tube ingredients from the config and initializes every component.
    pub fn new(cfg: &ScenarioConfig) -> Result<Self> {
        let ingredients = cfg.build_ingredients()?;
        Self::with_ingredients(cfg, ingredients)
    }

    pub fn with_ingredients(cfg: &ScenarioConfig, ingredients: TubeIngredients) -> Result<Self> {
        cfg.validate_domains()?;
        let (a_true, b_true) = cfg.model.plant(cfg.simulation.delta);
        let plant = Plant {
            a_true,
            b_true,
            delta: cfg.simulation.delta,
        };
        let controller = Controller::new(
            cfg.mpc_config(ingredients),
            cfg.model.a_nom.clone(),
            cfg.model.b_nom.clone(),
        )?;
        let rls = RlsState::init(
            &cfg.model.a_nom,
            &cfg.model.b_nom,
            cfg.identification.lambda,
        )?
        .with_timing(cfg.identification.timing);
        let buffer = excitation::init_buffer(
            &cfg.sets.w,
            cfg.excitation,
            cfg.simulation.seed,
            cfg.simulation.init_attempts,
        )?;
        let w_max_sq = cfg
            .sets
            .w
            .vertices()?
            .iter()
            .map(|v| v.norm_squared())
            .fold(0.0, f64::max);
        let noise = match cfg.simulation.noise_std {
            Some(std) if std > 0.0 => {
                let normal = Normal::new(0.0, std).map_err(|e| Error::Config(e.to_string()))?;
                Some((
                    normal,
                    ChaCha8Rng::seed_from_u64(cfg.simulation.seed.wrapping_add(1)),
                ))
            }
            _ => None,
        };
        let x0 = cfg.simulation.x0.clone();
        Ok(Self {
            cfg: cfg.clone(),
            plant,
            controller,
            rls,
            buffer,
            z: x0.clone(),
            x: x0,
            u_history: Vec::new(),
            w_max_sq,
            noise,
            step: 0,
        })
    }

    pub fn plant(&self) -> &Plant {
        &self.plant
    }

    pub fn controller(&self) -> &Controller {
        &self.controller
    }

    pub fn rls(&self) -> &RlsState {
        &self.rls
    }

    pub fn buffer(&self) -> &PeBuffer {
        &self.buffer
    }

    pub fn state(&self) -> (&DVector<f64>, &DVector<f64>) {
        (&self.x, &self.z)
    }

    /// One closed-loop step.
    pub fn step(&mut self) -> Result<StepRecord> {
        let i = self.step;
        let tol = self.cfg.tolerances.monitor;
        let ing = self.controller.ingredients().clone();
        let (a_pred, b_pred) = {
            let (a, b) = self.controller.model();
            (a.clone(), b.clone())
        };

        let sol = self.controller.solve(&self.z, &self.buffer)?;
        let v0 = sol.v_seq[0].clone();
        let u = controller::control_input(&v0, &ing.k_t, &self.x, &self.z, &sol.w0);
        let w_s = (&self.plant.a_true - &a_pred) * &self.x + (&self.plant.b_true - &b_pred) * &u;

        let mut x_next = &self.plant.a_true * &self.x + &self.plant.b_true * &u;
        if let Some((normal, rng)) = self.noise.as_mut() {
            for v in x_next.iter_mut() {
                *v += normal.sample(rng);
            }
        }

        let phi = DVector::from_iterator(
            self.x.len() + u.len(),
            self.x.iter().chain(u.iter()).copied(),
        );
        self.rls.update(&self.x, &phi)?;
        self.buffer.push(sol.w0.clone())?;
        self.u_history.push(u.clone());
        let z_next = self.controller.advance(&self.z, &v0);

        let mut model_published = false;
        let mut publish_failed = false;
        if (i + 1).is_multiple_of(self.cfg.identification.update_period) {
            let (a_est, b_est) = self.rls.current_model();
            match self.controller.publish_model(a_est, b_est) {
                Ok(()) => model_published = true,
                Err(err) => {
                    log::warn!("step {i}: estimated model not published: {err}");
                    publish_failed = true;
                }
            }
        }

        let e = &self.x - &self.z;
        let w_set = &self.cfg.sets.w;
        let m_now = self.buffer.build_m(None)?;
        let min_eig_m = excitation::min_eigenvalue(&m_now);
        let pe = self.cfg.excitation;
        let min_eig_u = if self.u_history.len() >= pe.history_len() {
            let mu = excitation::information_matrix(&self.u_history, pe.np, pe.lp, pe.rho0)?;
            excitation::min_eigenvalue(&mu)
        } else {
            f64::NAN
        };
        let trace_m = m_now.trace() + pe.rho0 * m_now.nrows() as f64;
        let monitors = Monitors {
            x_in_x: self.cfg.sets.x.contains_tol(&self.x, tol)?,
            u_in_u: self.cfg.sets.u.contains_tol(&u, tol)?,
            w_in_w: w_set.contains_tol(&sol.w0, tol)?,
            e_in_s: ing.s.contains_tol(&e, tol)?,
            ws_in_ws: ing.w_s.contains_tol(&w_s, tol)?,
            qp_feasible: sol.feasible,
            pe: min_eig_m >= pe.eps_pd,
        };
        let bound = (pe.lp * pe.np) as f64 * self.w_max_sq;
        if trace_m > bound * (1.0 + 1e-12) {
            log::warn!("step {i}: trace(M + rho0 I) = {trace_m} exceeds {bound}");
        }
        if let Some(rho1) = pe.rho1 {
            if m_now.symmetric_eigenvalues().max() + pe.rho0 > rho1 {
                log::debug!("step {i}: upper excitation level rho1 exceeded");
            }
        }
        if min_eig_m >= pe.eps_pd && min_eig_u.is_finite() && min_eig_u < pe.eps_pd {
            log::debug!("step {i}: excitation of w not transmitted to u (min eig {min_eig_u:.3e})");
        }

        let err = self
            .rls
            .parameter_error_pct(&self.plant.a_true, &self.plant.b_true)?;
        let (a_est, b_est) = self.rls.current_model();
        let rec = StepRecord {
            i,
            x: self.x.iter().copied().collect(),
            z: self.z.iter().copied().collect(),
            e: e.iter().copied().collect(),
            u: u.iter().copied().collect(),
            v: v0.iter().copied().collect(),
            w: sol.w0.iter().copied().collect(),
            w_s: w_s.iter().copied().collect(),
            cost_z: sol.cost_z,
            cost_w: sol.cost_w,
            kkt_residual: sol.kkt_residual,
            min_eig_m,
            min_eig_u,
            trace_m,
            candidates: sol.selection.candidates,
            feasible_candidates: sol.selection.feasible_candidates,
            trivial_used: sol.selection.trivial_used,
            theta: sysid::flatten_model(&a_est, &b_est),
            param_err_pct: err.values,
            model_published,
            publish_failed,
            monitors,
        };

        self.x = x_next;
        self.z = z_next;
        self.step += 1;
        Ok(rec)
    }

    /// Runs `steps` steps. Controller infeasibility, or any monitor failure
    /// under `fail_fast`, ends the run early and is reported in the summary.
    pub fn run(&mut self, opts: RunOptions, sink: &mut dyn RecordSink) -> Result<RunLog> {
        let start = std::time::Instant::now();
        let steps = self.cfg.simulation.steps;
        let mut records = Vec::with_capacity(steps);
        let mut terminated = None;
        for _ in 0..steps {
            let i = self.step;
            let rec = match self.step() {
                Ok(rec) => rec,
                Err(err @ (Error::Infeasible(_) | Error::FeasibilityLoss(_))) => {
                    log::error!("step {i}: {err}");
                    terminated = Some(format!("step {i}: {err}"));
                    break;
                }
                Err(err) => {
                    return Err(Error::AtStep {
                        step: i,
                        source: Box::new(err),
                    })
                }
            };
            sink.record(&rec)?;
            let ok = rec.monitors.all();
            if !ok {
                let failed: Vec<&str> = Monitors::NAMES
                    .iter()
                    .zip(rec.monitors.values())
                    .filter(|(_, v)| !v)
                    .map(|(n, _)| *n)
                    .collect();
                log::warn!("step {i}: monitors failed: {}", failed.join(", "));
            }
            records.push(rec);
            if !ok && opts.fail_fast {
                terminated = Some(format!("step {i}: monitor failure with fail-fast"));
                break;
            }
        }
        let summary = self.summarize(&records, terminated, start.elapsed().as_secs_f64())?;
        Ok(RunLog { records, summary })
    }

    fn summarize(
        &self,
        records: &[StepRecord],
        terminated: Option<String>,
        elapsed: f64,
    ) -> Result<Summary> {
        let ing = self.controller.ingredients();
        let viol = |set: &Polytope, pick: &dyn Fn(&StepRecord) -> &Vec<f64>| -> Result<f64> {
            records.iter().try_fold(f64::NEG_INFINITY, |acc, r| {
                Ok(acc.max(set.violation(&DVector::from_column_slice(pick(r)))?))
            })
        };
        let mut failures = vec![0usize; Monitors::NAMES.len()];
        for r in records {
            for (k, ok) in r.monitors.values().into_iter().enumerate() {
                if !ok {
                    failures[k] += 1;
                }
            }
        }
        let n = self.cfg.n_states();
        let m = self.cfg.n_inputs();
        Ok(Summary {
            name: self.cfg.name.clone(),
            steps_requested: self.cfg.simulation.steps,
            steps_completed: records.len(),
            all_monitors_passed: terminated.is_none() && failures.iter().all(|&f| f == 0),
            terminated,
            monitor_failures: Monitors::NAMES
                .iter()
                .map(|s| s.to_string())
                .zip(failures)
                .collect(),
            max_violation_x: viol(&self.cfg.sets.x, &|r| &r.x)?,
            max_violation_u: viol(&self.cfg.sets.u, &|r| &r.u)?,
            max_violation_w: viol(&self.cfg.sets.w, &|r| &r.w)?,
            max_violation_e: viol(&ing.s, &|r| &r.e)?,
            max_violation_ws: viol(&ing.w_s, &|r| &r.w_s)?,
            min_eig_m: records
                .iter()
                .map(|r| r.min_eig_m)
                .fold(f64::INFINITY, f64::min),
            parameter_labels: sysid::parameter_labels(n, m),
            final_param_err_pct: records
                .last()
                .map(|r| r.param_err_pct.clone())
                .unwrap_or_default(),
            model_publish_failures: records.iter().filter(|r| r.publish_failed).count(),
            elapsed_seconds: elapsed,
        })
    }
}

/// Builds and runs a scenario, collecting records in memory.
pub fn run(cfg: &ScenarioConfig, opts: RunOptions) -> Result<RunLog> {
    let mut sim = Simulation::new(cfg)?;
    let mut sink = Vec::new();
    sim.run(opts, &mut sink)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Builtin;

    #[test]
    fn zero_steps_gives_empty_log() {
        let mut cfg = Builtin::Identification.config();
        cfg.simulation.steps = 0;
        let log = run(&cfg, RunOptions::default()).unwrap();
        assert!(log.records.is_empty());
        assert!(log.summary.all_monitors_passed);
    }

    #[test]
    fn error_equals_state_minus_nominal() {
        let mut cfg = Builtin::Regulation.config();
        cfg.simulation.steps = 5;
        let log = run(&cfg, RunOptions::default()).unwrap();
        for r in &log.records {
            for k in 0..2 {
                assert_eq!(r.e[k], r.x[k] - r.z[k]);
            }
        }
        assert_eq!(log.records[0].x, vec![8.0, 8.0]);
        assert_eq!(log.records[0].z, vec![8.0, 8.0]);
    }

    #[test]
    fn csv_header_matches_row_width() {
        let mut cfg = Builtin::Identification.config();
        cfg.simulation.steps = 2;
        let mut sim = Simulation::new(&cfg).unwrap();
        let mut sink = CsvSink::new(Vec::new(), 2, 1);
        sim.run(RunOptions::default(), &mut sink).unwrap();
        let text = String::from_utf8(sink.into_inner().unwrap()).unwrap();
        let widths: Vec<usize> = text.lines().map(|l| l.split(',').count()).collect();
        assert_eq!(widths.len(), 3);
        assert!(widths
            .iter()
            .all(|&w| w == CsvSink::<Vec<u8>>::header(2, 1).len()));
    }
}
