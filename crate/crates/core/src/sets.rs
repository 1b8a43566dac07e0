//! Derived sets of the tube controller: parametric disturbance bound, RPI
//! tube cross-section, tightened constraints and terminal ingredients.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::linalg::{self, spectral_radius};
use crate::polytope::Polytope;
use crate::{Error, Result};

/// `A(δ) = Ā + δÂ`, `B(δ) = B̄ + δB̂` with `|δ| ≤ delta_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertainModel {
    #[serde(with = "linalg::rows")]
    pub a_nom: DMatrix<f64>,
    #[serde(with = "linalg::rows")]
    pub b_nom: DMatrix<f64>,
    #[serde(with = "linalg::rows")]
    pub a_dir: DMatrix<f64>,
    #[serde(with = "linalg::rows")]
    pub b_dir: DMatrix<f64>,
    pub delta_max: f64,
}

impl UncertainModel {
    pub fn n_states(&self) -> usize {
        self.a_nom.nrows()
    }

    pub fn n_inputs(&self) -> usize {
        self.b_nom.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_states();
        let m = self.n_inputs();
        if !self.a_nom.is_square() || self.a_dir.shape() != (n, n) {
            return Err(Error::Contract("A matrices must be n×n".into()));
        }
        if self.b_nom.nrows() != n || self.b_dir.shape() != (n, m) {
            return Err(Error::Contract("B matrices must be n×m".into()));
        }
        if !(self.delta_max >= 0.0) || !self.delta_max.is_finite() {
            return Err(Error::Contract(
                "delta_max must be a finite non-negative number".into(),
            ));
        }
        Ok(())
    }

    /// The member of the family at `delta`.
    pub fn plant(&self, delta: f64) -> (DMatrix<f64>, DMatrix<f64>) {
        (
            &self.a_nom + &self.a_dir * delta,
            &self.b_nom + &self.b_dir * delta,
        )
    }
}

/// Hull of `{Δ(Âx + B̂u) : x ∈ X, u ∈ U, |Δ| ≤ multiplier·delta_max}`.
pub fn compute_ws(
    model: &UncertainModel,
    x_set: &Polytope,
    u_set: &Polytope,
    mismatch_multiplier: f64,
) -> Result<Polytope> {
    model.validate()?;
    if !(mismatch_multiplier > 0.0) {
        return Err(Error::Contract(
            "mismatch multiplier must be positive".into(),
        ));
    }
    let n = model.n_states();
    let bound = mismatch_multiplier * model.delta_max;
    let xv = x_set.vertices()?;
    let uv = u_set.vertices()?;
    if bound == 0.0 {
        return Ok(Polytope::origin(n));
    }
    let mut images = Vec::with_capacity(2 * xv.len() * uv.len());
    for x in &xv {
        for u in &uv {
            let y = &model.a_dir * x + &model.b_dir * u;
            images.push(&y * bound);
            images.push(&y * -bound);
        }
    }
    Polytope::from_points(&images)
}

/// Result of the minimal-RPI outer approximation.
#[derive(Debug, Clone)]
pub struct Mrpi {
    pub set: Polytope,
    pub alpha: f64,
    pub terms: usize,
}

/// Outer approximation of the minimal RPI set of `e⁺ = A_K e + w`, `w ∈ W`:
/// the smallest `s` with `A_K^s W ⊆ αW`, `α ≤ alpha_max`, then
/// `(1−α)⁻¹ ⊕_{j<s} A_K^j W`.
pub fn compute_mrpi(
    a_k: &DMatrix<f64>,
    w_total: &Polytope,
    alpha_max: f64,
    s_max: usize,
) -> Result<Mrpi> {
    let n = w_total.dim();
    if a_k.shape() != (n, n) {
        return Err(Error::Contract(
            "A_K must be square with the disturbance dimension".into(),
        ));
    }
    if !(0.0..1.0).contains(&alpha_max) {
        return Err(Error::Contract("alpha_max must lie in [0, 1)".into()));
    }
    let rho = spectral_radius(a_k);
    if rho >= 1.0 {
        return Err(Error::Contract(format!(
            "A_K is not Schur stable (spectral radius {rho:.6})"
        )));
    }
    let w = w_total.reduce()?;
    if !w.contains_tol(&DVector::zeros(n), 1e-9)? {
        return Err(Error::Contract(
            "disturbance set must contain the origin".into(),
        ));
    }
    let (lo, hi) = w.bounding_box()?;
    if lo.amax().max(hi.amax()) <= 1e-12 {
        return Ok(Mrpi {
            set: Polytope::origin(n),
            alpha: 0.0,
            terms: 0,
        });
    }

    let mut power = a_k.clone();
    let mut best = f64::INFINITY;
    let mut found = None;
    for s in 1..=s_max {
        let mut alpha: f64 = 0.0;
        for k in 0..w.n_constraints() {
            let f = w.normals().row(k).transpose();
            let g = w.offsets()[k];
            let sigma = w.support(&(power.transpose() * &f))?;
            if g <= 1e-12 {
                if sigma > 1e-12 {
                    alpha = f64::INFINITY;
                    break;
                }
            } else {
                alpha = alpha.max(sigma / g);
            }
        }
        best = best.min(alpha);
        if alpha <= alpha_max {
            found = Some((s, alpha));
            break;
        }
        power = &power * a_k;
    }
    let Some((s, alpha)) = found else {
        return Err(Error::NonConvergence {
            what: "minimal RPI approximation",
            iterations: s_max,
            metric: best,
        });
    };

    let sum = if n <= 2 {
        planar_power_sum(a_k, &w, s)?
    } else {
        let mut sum = w.clone();
        let mut power = DMatrix::identity(n, n);
        for _ in 1..s {
            power = &power * a_k;
            sum = sum.minkowski_sum(&w.linear_map(&power)?)?;
        }
        sum
    };
    let set = sum.scale(1.0 / (1.0 - alpha))?.reduce()?;
    Ok(Mrpi {
        set,
        alpha,
        terms: s,
    })
}

/// `W ⊕ A W ⊕ … ⊕ A^{s−1} W` in at most two dimensions.
///
/// Facet normals of a planar sum are the operands' facet normals, and the
/// offsets are sums of support values of `W`. Late terms can be slivers far
/// below the tolerances of the halfspace routines, so no halfspace set of a
/// term is ever formed: the normals of `A^i W` are the rows of `H_W A^{−i}`,
/// or the normals of the range of `A` when `A` is singular.
fn planar_power_sum(a_k: &DMatrix<f64>, w: &Polytope, s: usize) -> Result<Polytope> {
    let n = w.dim();
    let mut powers = vec![DMatrix::identity(n, n)];
    for i in 1..s {
        powers.push(&powers[i - 1] * a_k);
    }
    let mut dirs: Vec<DVector<f64>> = w.normals().row_iter().map(|r| r.transpose()).collect();
    if n == 2 && s > 1 {
        match a_k
            .clone()
            .try_inverse()
            .filter(|inv| inv.iter().all(|v| v.is_finite()))
        {
            Some(inv) if a_k.determinant().abs() > 1e-12 * a_k.norm_squared() => {
                let mut rows = w.normals().clone();
                for _ in 1..s {
                    rows = &rows * &inv;
                    for mut r in rows.row_iter_mut() {
                        let norm = r.norm();
                        r /= norm;
                    }
                    dirs.extend(rows.row_iter().map(|r| r.transpose()));
                }
            }
            _ => {
                let col = a_k
                    .column_iter()
                    .max_by(|x, y| x.norm().total_cmp(&y.norm()))
                    .expect("two columns")
                    .into_owned();
                if col.norm() > 0.0 {
                    let perp = DVector::from_vec(vec![-col[1], col[0]]);
                    dirs.push(perp.clone());
                    dirs.push(-perp);
                }
            }
        }
    }
    let mut a = DMatrix::zeros(dirs.len(), n);
    let mut b = DVector::zeros(dirs.len());
    for (k, d) in dirs.iter().enumerate() {
        let d = d / d.norm();
        let mut h = 0.0;
        for p in &powers {
            h += w.support(&(p.transpose() * &d))?;
        }
        a.set_row(k, &d.transpose());
        b[k] = h;
    }
    Polytope::new(a, b)?.reduce()
}

/// `Z = X ⊖ S` and `V = Û ⊖ K_t S`.
pub fn tighten(
    x_set: &Polytope,
    u_hat: &Polytope,
    s: &Polytope,
    k_t: &DMatrix<f64>,
) -> Result<(Polytope, Polytope)> {
    let ks = s.linear_map(k_t)?;
    if !s.is_subset_of(x_set, 1e-9)? {
        return Err(Error::InfeasibleDesign(
            "tube section S is not contained in X".into(),
        ));
    }
    if !ks.is_subset_of(u_hat, 1e-9)? {
        return Err(Error::InfeasibleDesign(
            "K_t S is not contained in the regulator input set".into(),
        ));
    }
    let z = x_set.pontryagin_diff(s)?;
    if z.is_empty()? {
        return Err(Error::InfeasibleDesign(
            "tightened state set X ⊖ S is empty".into(),
        ));
    }
    let v = u_hat.pontryagin_diff(&ks)?;
    if v.is_empty()? {
        return Err(Error::InfeasibleDesign(
            "tightened input set Û ⊖ K_t S is empty".into(),
        ));
    }
    Ok((z, v))
}

/// Stabilizing solution of the discrete algebraic Riccati equation and the
/// gain `K = −(R + BᵀPB)⁻¹BᵀPA` (control law `u = K x`).
pub fn solve_dare(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    const MAX_ITER: usize = 100_000;
    let mut p = q.clone();
    for it in 0..MAX_ITER {
        let next = riccati_map(a, b, q, r, &p)?;
        if !next.iter().all(|v| v.is_finite()) {
            break;
        }
        let change = (&next - &p).amax();
        p = (&next + next.transpose()) * 0.5;
        if change <= 1e-14 * (1.0 + p.amax()) {
            let k = riccati_gain(a, b, r, &p)?;
            let residual = dare_residual(a, b, q, r, &p)?;
            let closed = a + b * &k;
            if !(residual <= 1e-9) || !(spectral_radius(&closed) < 1.0 - 1e-9) {
                return Err(Error::NonConvergence {
                    what: "Riccati iteration",
                    iterations: it,
                    metric: residual,
                });
            }
            return Ok((p, k));
        }
    }
    Err(Error::NonConvergence {
        what: "Riccati iteration",
        iterations: MAX_ITER,
        metric: f64::NAN,
    })
}

fn riccati_gain(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let bt = b.transpose();
    let s = r + &bt * p * b;
    let rhs = &bt * p * a;
    s.lu()
        .solve(&rhs)
        .map(|k| -k)
        .ok_or_else(|| Error::Contract("R + BᵀPB is singular".into()))
}

fn riccati_map(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let k = riccati_gain(a, b, r, p)?;
    // Q + AᵀPA − AᵀPB(R+BᵀPB)⁻¹BᵀPA, with the last term equal to −AᵀPB K.
    Ok(q + a.transpose() * p * a + a.transpose() * p * b * k)
}

/// Max-abs residual of the Riccati fixed point.
pub fn dare_residual(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> Result<f64> {
    Ok((riccati_map(a, b, q, r, p)? - p).amax())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Terminal {
    #[serde(with = "linalg::rows")]
    pub p_f: DMatrix<f64>,
    #[serde(with = "linalg::rows")]
    pub k_f: DMatrix<f64>,
    pub z_f: Polytope,
    pub iterations: usize,
}

/// Riccati terminal cost and gain, plus the maximal positively invariant set of
/// `z⁺ = (A + B K_f) z` inside `{z ∈ Z : K_f z ∈ V}`.
pub fn terminal_ingredients(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    z: &Polytope,
    v: &Polytope,
    iter_max: usize,
) -> Result<Terminal> {
    let (p_f, k_f) = solve_dare(a, b, q, r)?;
    let closed = a + b * &k_f;
    let admissible = z.intersect(&v.preimage(&k_f)?)?.reduce()?;
    let base_a = admissible.normals().clone();
    let base_b = admissible.offsets().clone();

    let mut omega = admissible.clone();
    let mut power = DMatrix::identity(a.nrows(), a.nrows());
    let mut worst = f64::NAN;
    for it in 1..=iter_max {
        power = &power * &closed;
        let rows_a = &base_a * &power;
        let mut converged = true;
        worst = f64::NEG_INFINITY;
        for k in 0..rows_a.nrows() {
            let excess = omega.support(&rows_a.row(k).transpose())? - base_b[k];
            worst = worst.max(excess);
            if excess > 1e-9 {
                converged = false;
            }
        }
        if converged {
            return Ok(Terminal {
                p_f,
                k_f,
                z_f: omega,
                iterations: it,
            });
        }
        omega = omega
            .intersect(&Polytope::new(rows_a, base_b.clone())?)?
            .reduce()?;
    }
    Err(Error::NonConvergence {
        what: "terminal invariant set recursion",
        iterations: iter_max,
        metric: worst,
    })
}

/// Knobs of the tube construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TubeParams {
    pub mismatch_multiplier: f64,
    pub alpha_max: f64,
    pub s_max: usize,
    pub terminal_iter_max: usize,
}

impl Default for TubeParams {
    fn default() -> Self {
        Self {
            mismatch_multiplier: 1.0,
            alpha_max: 0.05,
            s_max: 200,
            terminal_iter_max: 200,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TubeIngredients {
    #[serde(with = "linalg::rows")]
    pub k_t: DMatrix<f64>,
    pub s: Polytope,
    pub w_s: Polytope,
    pub w_hat: Polytope,
    pub u_hat: Polytope,
    pub z: Polytope,
    pub v: Polytope,
    pub z_f: Polytope,
    #[serde(with = "linalg::rows")]
    pub p_f: DMatrix<f64>,
    #[serde(with = "linalg::rows")]
    pub k_f: DMatrix<f64>,
    pub rpi_alpha: f64,
    pub rpi_terms: usize,
}

impl TubeIngredients {
    /// Builds every set from the nominal model. `Û` is taken as `U ⊖ W`.
    #[allow(clippy::too_many_arguments)]
    pub fn build(
        model: &UncertainModel,
        x_set: &Polytope,
        u_set: &Polytope,
        w_set: &Polytope,
        k_t: &DMatrix<f64>,
        q: &DMatrix<f64>,
        r: &DMatrix<f64>,
        params: &TubeParams,
    ) -> Result<Self> {
        model.validate()?;
        let n = model.n_states();
        let m = model.n_inputs();
        if k_t.shape() != (m, n) {
            return Err(Error::Contract("K_t must be m×n".into()));
        }
        let u_hat = u_set.pontryagin_diff(w_set)?;
        if u_hat.is_empty()? {
            return Err(Error::InfeasibleDesign(
                "regulator input set U ⊖ W is empty".into(),
            ));
        }
        let w_hat = w_set.linear_map(&model.b_nom)?;
        let w_s = compute_ws(model, x_set, u_set, params.mismatch_multiplier)?;
        let w_total = w_hat.minkowski_sum(&w_s)?;
        let a_k = &model.a_nom + &model.b_nom * k_t;
        let mrpi = compute_mrpi(&a_k, &w_total, params.alpha_max, params.s_max)?;
        let (z, v) = tighten(x_set, &u_hat, &mrpi.set, k_t)?;
        let terminal = terminal_ingredients(
            &model.a_nom,
            &model.b_nom,
            q,
            r,
            &z,
            &v,
            params.terminal_iter_max,
        )?;
        Ok(Self {
            k_t: k_t.clone(),
            s: mrpi.set,
            w_s,
            w_hat,
            u_hat,
            z,
            v,
            z_f: terminal.z_f,
            p_f: terminal.p_f,
            k_f: terminal.k_f,
            rpi_alpha: mrpi.alpha,
            rpi_terms: mrpi.terms,
        })
    }

    /// Replaces the terminal ingredients for a new prediction model; the tube stays fixed.
    pub fn with_prediction_model(
        &self,
        a: &DMatrix<f64>,
        b: &DMatrix<f64>,
        q: &DMatrix<f64>,
        r: &DMatrix<f64>,
        iter_max: usize,
    ) -> Result<Self> {
        let terminal = terminal_ingredients(a, b, q, r, &self.z, &self.v, iter_max)?;
        Ok(Self {
            z_f: terminal.z_f,
            p_f: terminal.p_f,
            k_f: terminal.k_f,
            ..self.clone()
        })
    }
}
