//! Persistence-of-excitation bookkeeping for the exciting input `w`.
//!
//! The information matrix at time `i` is
//! `M_i = Σ_{j<l_p} 𝐰_{i−j} 𝐰_{i−j}ᵀ − ρ₀ I`, where `𝐰_t` stacks
//! `w(t), w(t−1), …, w(t−N_p+1)`. It depends on the last `l_p + N_p − 1`
//! exciting inputs only, which is all the buffer keeps.
//!
//! Choosing `w(i)` must keep `M` positive definite not only now but for the
//! next `N_p − 1` steps under the fallback plan `w(i+k) = w(i+k−l_p)`; once
//! the fallback has run for `N_p` steps the stacked windows repeat with
//! period `l_p` and `M` stops changing, so the fallback stays feasible forever.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::polytope::Polytope;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeParams {
    /// Window length `N_p`.
    pub np: usize,
    /// Number of windows `l_p`.
    pub lp: usize,
    /// Lower excitation level `ρ₀`.
    pub rho0: f64,
    /// Upper level `ρ₁`; monitored, never enforced.
    #[serde(default)]
    pub rho1: Option<f64>,
    /// Margin realizing the strict inequality `M ≻ 0`.
    #[serde(default = "default_eps_pd")]
    pub eps_pd: f64,
}

fn default_eps_pd() -> f64 {
    1e-8
}

impl PeParams {
    pub fn validate(&self) -> Result<()> {
        if self.np < 1 || self.lp < 1 {
            return Err(Error::Contract("N_p and l_p must be at least 1".into()));
        }
        if !(self.rho0 > 0.0) {
            return Err(Error::Contract(format!(
                "rho0 must be positive, got {}",
                self.rho0
            )));
        }
        if !(self.eps_pd > 0.0) {
            return Err(Error::Contract("eps_pd must be positive".into()));
        }
        if let Some(rho1) = self.rho1 {
            if !(rho1 > self.rho0) {
                return Err(Error::Contract("rho1 must exceed rho0".into()));
            }
        }
        Ok(())
    }

    /// Inputs needed to evaluate one information matrix.
    pub fn history_len(&self) -> usize {
        self.lp + self.np - 1
    }
}

/// Information matrix of the newest `l_p + N_p − 1` entries of `seq` (oldest first).
pub fn information_matrix(
    seq: &[DVector<f64>],
    np: usize,
    lp: usize,
    rho0: f64,
) -> Result<DMatrix<f64>> {
    let need = lp + np - 1;
    if seq.len() < need {
        return Err(Error::Contract(format!(
            "information matrix needs {need} inputs, history has {}",
            seq.len()
        )));
    }
    let m = seq[0].len();
    let last = seq.len() - 1;
    let mut out = DMatrix::identity(m * np, m * np) * -rho0;
    let mut stacked = DVector::zeros(m * np);
    for j in 0..lp {
        for k in 0..np {
            stacked.rows_mut(k * m, m).copy_from(&seq[last - j - k]);
        }
        out.ger(1.0, &stacked, &stacked, 1.0);
    }
    Ok(out)
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    crate::linalg::min_sym_eigenvalue(m)
}

/// `M ≻ 0` realized as `λ_min(M) ≥ eps_pd`.
pub fn is_pe(m: &DMatrix<f64>, eps_pd: f64) -> bool {
    min_eigenvalue(m) >= eps_pd
}

/// History of applied exciting inputs, newest last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeBuffer {
    history: VecDeque<DVector<f64>>,
    params: PeParams,
    n_inputs: usize,
}

impl PeBuffer {
    pub fn new(params: PeParams, n_inputs: usize) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            history: VecDeque::with_capacity(params.history_len() + 1),
            params,
            n_inputs,
        })
    }

    pub fn from_history(params: PeParams, history: Vec<DVector<f64>>) -> Result<Self> {
        let m = history
            .first()
            .map(|w| w.len())
            .ok_or_else(|| Error::Contract("empty excitation history".into()))?;
        let mut buf = Self::new(params, m)?;
        for w in history {
            buf.push(w)?;
        }
        Ok(buf)
    }

    pub fn params(&self) -> &PeParams {
        &self.params
    }

    pub fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    pub fn len(&self) -> usize {
        self.history.len()
    }

    pub fn is_empty(&self) -> bool {
        self.history.is_empty()
    }

    pub fn is_ready(&self) -> bool {
        self.len() >= self.params.history_len()
    }

    pub fn history(&self) -> impl Iterator<Item = &DVector<f64>> {
        self.history.iter()
    }

    pub fn push(&mut self, w: DVector<f64>) -> Result<()> {
        if w.len() != self.n_inputs {
            return Err(Error::Dimension {
                expected: self.n_inputs,
                got: w.len(),
            });
        }
        self.history.push_back(w);
        while self.history.len() > self.params.history_len() {
            self.history.pop_front();
        }
        Ok(())
    }

    fn sequence(&self) -> Vec<DVector<f64>> {
        self.history.iter().cloned().collect()
    }

    /// `M` with `candidate` as `w(i)`, or with the newest stored value as `w(i)`.
    pub fn build_m(&self, candidate: Option<&DVector<f64>>) -> Result<DMatrix<f64>> {
        let mut seq = self.sequence();
        if let Some(c) = candidate {
            if c.len() != self.n_inputs {
                return Err(Error::Dimension {
                    expected: self.n_inputs,
                    got: c.len(),
                });
            }
            seq.push(c.clone());
        }
        information_matrix(&seq, self.params.np, self.params.lp, self.params.rho0)
    }

    /// `w(i − l_p)`, the value that keeps the sequence `l_p`-periodic.
    pub fn trivial_candidate(&self) -> Result<DVector<f64>> {
        if self.len() < self.params.lp {
            return Err(Error::Contract("history shorter than l_p".into()));
        }
        Ok(self.history[self.len() - self.params.lp].clone())
    }

    /// `w̃(0..count)`: `w0` followed by the periodic fallback `w̃(k) = w(i+k−l_p)`.
    pub fn planned_sequence(&self, w0: &DVector<f64>, count: usize) -> Result<Vec<DVector<f64>>> {
        if self.len() < self.params.lp {
            return Err(Error::Contract("history shorter than l_p".into()));
        }
        let mut seq = self.sequence();
        let mut out = Vec::with_capacity(count);
        for k in 0..count {
            let next = if k == 0 {
                w0.clone()
            } else {
                seq[seq.len() - self.params.lp].clone()
            };
            seq.push(next.clone());
            out.push(next);
        }
        Ok(out)
    }

    /// Smallest eigenvalue over the `N_p` information matrices of the lookahead.
    pub fn lookahead_min_eig(&self, w0: &DVector<f64>) -> Result<f64> {
        if !self.is_ready() {
            return Err(Error::Contract(format!(
                "excitation history has {} entries, needs {}",
                self.len(),
                self.params.history_len()
            )));
        }
        let mut seq = self.sequence();
        let mut worst = f64::INFINITY;
        for k in 0..self.params.np {
            let next = if k == 0 {
                w0.clone()
            } else {
                seq[seq.len() - self.params.lp].clone()
            };
            seq.push(next);
            let m = information_matrix(&seq, self.params.np, self.params.lp, self.params.rho0)?;
            worst = worst.min(min_eigenvalue(&m));
            if worst < self.params.eps_pd {
                break;
            }
        }
        Ok(worst)
    }

    /// Whether `w0` keeps `M ≻ 0` for this step and the following `N_p − 1`
    /// fallback steps.
    pub fn lookahead_feasible(&self, w0: &DVector<f64>) -> Result<bool> {
        Ok(self.lookahead_min_eig(w0)? >= self.params.eps_pd)
    }

    /// Upper bound `l_p N_p max‖w‖²` on `trace(M + ρ₀I)`.
    pub fn trace_bound(&self, w_set: &Polytope) -> Result<f64> {
        let max_sq = w_set
            .vertices()?
            .iter()
            .map(|v| v.norm_squared())
            .fold(0.0, f64::max);
        Ok((self.params.lp * self.params.np) as f64 * max_sq)
    }
}

/// Equispaced grid over the bounding box of `w_set`, filtered by membership.
pub fn candidate_grid(w_set: &Polytope, density: usize) -> Result<Vec<DVector<f64>>> {
    if density == 0 {
        return Err(Error::Contract("grid density must be positive".into()));
    }
    let (lo, hi) = w_set.bounding_box()?;
    let m = lo.len();
    let axis = |d: usize| -> Vec<f64> {
        let center = 0.5 * (lo[d] + hi[d]);
        let half = 0.5 * (hi[d] - lo[d]);
        if density == 1 {
            return vec![center];
        }
        let steps = (density - 1) as f64;
        // Symmetric construction keeps ±c pairs exact.
        (0..density)
            .map(|k| center + half * ((2 * k) as f64 - steps) / steps)
            .collect()
    };
    let axes: Vec<Vec<f64>> = (0..m).map(axis).collect();
    let mut out = Vec::new();
    let mut idx = vec![0usize; m];
    loop {
        let p = DVector::from_fn(m, |d, _| axes[d][idx[d]]);
        if w_set.contains(&p)? {
            out.push(p);
        }
        let mut d = 0;
        loop {
            if d == m {
                return Ok(out);
            }
            idx[d] += 1;
            if idx[d] < density {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
    }
}

#[derive(Debug, Clone)]
pub struct Selection {
    pub w0: DVector<f64>,
    /// `w0ᵀ R w0`.
    pub cost: f64,
    pub trivial_used: bool,
    pub candidates: usize,
    pub feasible_candidates: usize,
    /// `λ_min(M_i)` with `w0` applied.
    pub min_eig: f64,
}

/// Cheapest lookahead-feasible exciting input among the grid and the periodic
/// candidate. Ties: lower cost, then smaller norm, then the periodic candidate,
/// then the lexicographically larger vector.
pub fn select_w0(
    buf: &PeBuffer,
    w_set: &Polytope,
    r: &DMatrix<f64>,
    grid_density: usize,
) -> Result<Selection> {
    let trivial = buf.trivial_candidate()?;
    let mut candidates: Vec<(DVector<f64>, bool)> = candidate_grid(w_set, grid_density)?
        .into_iter()
        .filter(|c| (c - &trivial).amax() > 0.0)
        .map(|c| (c, false))
        .collect();
    candidates.push((trivial, true));

    let total = candidates.len();
    let mut feasible = Vec::new();
    for (c, is_trivial) in candidates {
        if buf.lookahead_feasible(&c)? {
            let cost = c.dot(&(r * &c));
            feasible.push((c, is_trivial, cost));
        }
    }
    let n_feasible = feasible.len();
    let best = feasible
        .into_iter()
        .min_by(|a, b| {
            let tie = 1e-14 * (1.0 + a.2.abs().max(b.2.abs()));
            if (a.2 - b.2).abs() > tie {
                return a.2.total_cmp(&b.2);
            }
            let (na, nb) = (a.0.norm(), b.0.norm());
            if (na - nb).abs() > 1e-14 {
                return na.total_cmp(&nb);
            }
            if a.1 != b.1 {
                return b.1.cmp(&a.1);
            }
            b.0.iter()
                .zip(a.0.iter())
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
        .ok_or_else(|| {
            Error::FeasibilityLoss(
                "even the periodic candidate w(i−l_p) violates the lookahead".into(),
            )
        })?;
    let min_eig = min_eigenvalue(&buf.build_m(Some(&best.0))?);
    Ok(Selection {
        w0: best.0,
        cost: best.2,
        trivial_used: best.1,
        candidates: total,
        feasible_candidates: n_feasible,
        min_eig,
    })
}

/// Random `l_p`-periodic buffer of length `l_p + N_p − 1` with `M ≻ 0`.
///
/// Entries are vertices of `w_set`, some scaled towards the origin. The
/// periodic layout makes the fallback candidate feasible from the first step.
pub fn init_buffer(
    w_set: &Polytope,
    params: PeParams,
    seed: u64,
    attempts_max: usize,
) -> Result<PeBuffer> {
    params.validate()?;
    if attempts_max == 0 {
        return Err(Error::Contract("attempts_max must be at least 1".into()));
    }
    let vertices = w_set.vertices()?;
    let m = w_set.dim();
    let max_sq = vertices
        .iter()
        .map(|v| v.norm_squared())
        .fold(0.0, f64::max);
    let hint = format!(
        "rho0 = {} against trace bound l_p·N_p·max|w|² = {:.4}; lower rho0 or enlarge W",
        params.rho0,
        (params.lp * params.np) as f64 * max_sq
    );
    // λ_min(M + ρ₀I) ≤ trace / (m N_p) ≤ l_p max‖w‖².
    if params.rho0 + params.eps_pd > params.lp as f64 * max_sq {
        return Err(Error::Initialization { attempts: 0, hint });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..attempts_max {
        let period: Vec<DVector<f64>> = (0..params.lp)
            .map(|_| {
                let v = &vertices[rng.random_range(0..vertices.len())];
                if rng.random_bool(0.5) {
                    v.clone()
                } else {
                    v * rng.random_range(0.25..1.0)
                }
            })
            .collect();
        let history: Vec<DVector<f64>> = (0..params.history_len())
            .map(|t| period[t % params.lp].clone())
            .collect();
        let mut buf = PeBuffer::new(params, m)?;
        for w in history {
            buf.push(w)?;
        }
        if is_pe(&buf.build_m(None)?, params.eps_pd)
            && buf.lookahead_feasible(&buf.trivial_candidate()?)?
        {
            return Ok(buf);
        }
    }
    Err(Error::Initialization {
        attempts: attempts_max,
        hint,
    })
}
