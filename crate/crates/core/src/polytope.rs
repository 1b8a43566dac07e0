//! Convex polytopes in halfspace representation `{x : H x ≤ h}`.
//!
//! Queries are answered with the LP in [`crate::lp`]. Vertex enumeration and
//! hull construction are brute force and limited to dimension three, which
//! covers every set of the two-state/one-input controller.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::lp::{self, LpOptions, LpStatus};
use crate::{Error, Result};

/// Default slack for `contains`.
pub const MEMBERSHIP_TOL: f64 = 1e-9;
/// Slack under which a halfspace counts as redundant in `reduce`.
pub const REDUNDANCY_TOL: f64 = 1e-9;
/// Largest dimension handled by vertex enumeration and hulls.
pub const MAX_VERTEX_DIM: usize = 3;
/// Extra directions added by the planar Minkowski sum.
pub const MINKOWSKI_EXTRA_DIRECTIONS: usize = 64;

const POINT_MERGE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolytopeRepr", into = "PolytopeRepr")]
pub struct Polytope {
    a: DMatrix<f64>,
    b: DVector<f64>,
}

#[derive(Serialize, Deserialize)]
struct PolytopeRepr {
    #[serde(rename = "H")]
    a: Vec<Vec<f64>>,
    h: Vec<f64>,
}

impl TryFrom<PolytopeRepr> for Polytope {
    type Error = Error;

    fn try_from(r: PolytopeRepr) -> Result<Self> {
        let q = r.a.len();
        let d = r.a.first().map(Vec::len).unwrap_or(0);
        if r.a.iter().any(|row| row.len() != d) {
            return Err(Error::Contract("ragged H matrix".into()));
        }
        let flat: Vec<f64> = r.a.into_iter().flatten().collect();
        Polytope::new(DMatrix::from_row_slice(q, d, &flat), DVector::from_vec(r.h))
    }
}

impl From<Polytope> for PolytopeRepr {
    fn from(p: Polytope) -> Self {
        Self {
            a: p.a
                .row_iter()
                .map(|r| r.iter().copied().collect())
                .collect(),
            h: p.b.iter().copied().collect(),
        }
    }
}

impl Polytope {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        if a.nrows() != b.len() {
            return Err(Error::Dimension {
                expected: a.nrows(),
                got: b.len(),
            });
        }
        if a.nrows() == 0 || a.ncols() == 0 {
            return Err(Error::Contract(
                "polytope needs at least one row and one column".into(),
            ));
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Contract("non-finite halfspace data".into()));
        }
        Ok(Self { a, b })
    }

    /// Axis-aligned box `lo ≤ x ≤ hi`.
    pub fn from_bounds(lo: &[f64], hi: &[f64]) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::Dimension {
                expected: lo.len(),
                got: hi.len(),
            });
        }
        let d = lo.len();
        let mut a = DMatrix::zeros(2 * d, d);
        let mut b = DVector::zeros(2 * d);
        for i in 0..d {
            a[(2 * i, i)] = 1.0;
            b[2 * i] = hi[i];
            a[(2 * i + 1, i)] = -1.0;
            b[2 * i + 1] = -lo[i];
        }
        Self::new(a, b)
    }

    /// Box `|x_i| ≤ bound_i`.
    pub fn symmetric_box(bounds: &[f64]) -> Result<Self> {
        let lo: Vec<f64> = bounds.iter().map(|v| -v).collect();
        Self::from_bounds(&lo, bounds)
    }

    pub fn singleton(p: &DVector<f64>) -> Self {
        let v: Vec<f64> = p.iter().copied().collect();
        Self::from_bounds(&v, &v).expect("finite point")
    }

    pub fn origin(d: usize) -> Self {
        Self::singleton(&DVector::zeros(d))
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn n_constraints(&self) -> usize {
        self.a.nrows()
    }

    pub fn normals(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn offsets(&self) -> &DVector<f64> {
        &self.b
    }

    fn check_dim(&self, d: usize) -> Result<()> {
        if d != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: d,
            });
        }
        Ok(())
    }

    /// Largest constraint violation `max_k (H_k x − h_k)`.
    pub fn violation(&self, x: &DVector<f64>) -> Result<f64> {
        self.check_dim(x.len())?;
        Ok((&self.a * x - &self.b).max())
    }

    pub fn contains(&self, x: &DVector<f64>) -> Result<bool> {
        self.contains_tol(x, MEMBERSHIP_TOL)
    }

    pub fn contains_tol(&self, x: &DVector<f64>, tol: f64) -> Result<bool> {
        Ok(self.violation(x)? <= tol)
    }

    pub fn feasible_point(&self) -> Result<Option<DVector<f64>>> {
        lp::feasible_point(&self.a, &self.b, &LpOptions::default()).map_err(Error::Numerical)
    }

    pub fn is_empty(&self) -> Result<bool> {
        Ok(self.feasible_point()?.is_none())
    }

    /// `max { dirᵀx : x ∈ P }`.
    pub fn support(&self, dir: &DVector<f64>) -> Result<f64> {
        self.support_with(dir, &LpOptions::default())
    }

    pub fn support_with(&self, dir: &DVector<f64>, opts: &LpOptions) -> Result<f64> {
        self.check_dim(dir.len())?;
        let sol = lp::maximize(&self.a, &self.b, dir, opts);
        match sol.status {
            LpStatus::Optimal => Ok(sol.value),
            LpStatus::Unbounded => Err(Error::Unbounded),
            LpStatus::Infeasible => Err(Error::EmptySet("support")),
            LpStatus::IterationLimit => Err(Error::Numerical(sol.status)),
        }
    }

    /// Maximizer of `dirᵀx` over the set.
    pub fn support_point(&self, dir: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(dir.len())?;
        let sol = lp::maximize(&self.a, &self.b, dir, &LpOptions::default());
        match sol.status {
            LpStatus::Optimal => Ok(sol.x.expect("optimal LP carries a point")),
            LpStatus::Unbounded => Err(Error::Unbounded),
            LpStatus::Infeasible => Err(Error::EmptySet("support_point")),
            LpStatus::IterationLimit => Err(Error::Numerical(sol.status)),
        }
    }

    /// Lower and upper corner of the tightest enclosing box.
    pub fn bounding_box(&self) -> Result<(DVector<f64>, DVector<f64>)> {
        let d = self.dim();
        let mut lo = DVector::zeros(d);
        let mut hi = DVector::zeros(d);
        for i in 0..d {
            let mut e = DVector::zeros(d);
            e[i] = 1.0;
            hi[i] = self.support(&e)?;
            e[i] = -1.0;
            lo[i] = -self.support(&e)?;
        }
        Ok((lo, hi))
    }

    pub fn intersect(&self, other: &Polytope) -> Result<Polytope> {
        self.check_dim(other.dim())?;
        let q = self.n_constraints() + other.n_constraints();
        let a = DMatrix::from_fn(q, self.dim(), |i, j| {
            if i < self.n_constraints() {
                self.a[(i, j)]
            } else {
                other.a[(i - self.n_constraints(), j)]
            }
        });
        let b = DVector::from_fn(q, |i, _| {
            if i < self.n_constraints() {
                self.b[i]
            } else {
                other.b[i - self.n_constraints()]
            }
        });
        Polytope::new(a, b)
    }

    /// Preimage `{x : M x ∈ P}` for `M` with `dim(P)` rows.
    pub fn preimage(&self, m: &DMatrix<f64>) -> Result<Polytope> {
        self.check_dim(m.nrows())?;
        Polytope::new(&self.a * m, self.b.clone())
    }

    /// `{α x : x ∈ P}`.
    pub fn scale(&self, alpha: f64) -> Result<Polytope> {
        if !alpha.is_finite() {
            return Err(Error::Contract("non-finite scale".into()));
        }
        if alpha == 0.0 {
            return Ok(Polytope::origin(self.dim()));
        }
        if alpha > 0.0 {
            return Polytope::new(self.a.clone(), &self.b * alpha);
        }
        Polytope::new(-&self.a, &self.b * (-alpha))
    }

    /// `P ⊆ other` up to `tol` on support values. An empty `P` is a subset of anything.
    pub fn is_subset_of(&self, other: &Polytope, tol: f64) -> Result<bool> {
        Ok(self.subset_slack(other)? >= -tol)
    }

    /// `min_k (h_k − σ_P(H_k))` over the rows of `other`; non-negative iff `P ⊆ other`.
    pub fn subset_slack(&self, other: &Polytope) -> Result<f64> {
        self.check_dim(other.dim())?;
        if self.is_empty()? {
            return Ok(f64::INFINITY);
        }
        let mut slack = f64::INFINITY;
        for k in 0..other.n_constraints() {
            let dir = other.a.row(k).transpose();
            slack = slack.min(other.b[k] - self.support(&dir)?);
        }
        Ok(slack)
    }

    /// Removes redundant halfspaces. Rows are normalized to unit length.
    pub fn reduce(&self) -> Result<Polytope> {
        let d = self.dim();
        let mut rows: Vec<(DVector<f64>, f64)> = Vec::with_capacity(self.n_constraints());
        for k in 0..self.n_constraints() {
            let n = self.a.row(k).norm();
            if n <= 1e-14 {
                if self.b[k] < -REDUNDANCY_TOL {
                    return Err(Error::EmptySet("reduce"));
                }
                continue;
            }
            let normal = self.a.row(k).transpose() / n;
            let offset = self.b[k] / n;
            // Exact parallel duplicates: keep the tighter one.
            match rows.iter_mut().find(|(r, _)| (r - &normal).amax() <= 1e-12) {
                Some(existing) => existing.1 = existing.1.min(offset),
                None => rows.push((normal, offset)),
            }
        }
        if rows.is_empty() {
            return Err(Error::Unbounded);
        }
        let full = stack(&rows, d)?;
        if full.is_empty()? {
            return Err(Error::EmptySet("reduce"));
        }

        // Relative tolerance below unit size so slivers keep their rows.
        let size = rows.iter().map(|r| r.1.abs()).fold(0.0, f64::max);
        let tol = REDUNDANCY_TOL * size.clamp(1e-6, 1.0);
        let mut kept = vec![true; rows.len()];
        for i in 0..rows.len() {
            let others: Vec<(DVector<f64>, f64)> = rows
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i && kept[j])
                .map(|(_, r)| r.clone())
                .chain(std::iter::once((rows[i].0.clone(), rows[i].1 + 1.0)))
                .collect();
            let a = DMatrix::from_fn(others.len(), d, |r, c| others[r].0[c]);
            let b = DVector::from_fn(others.len(), |r, _| others[r].1);
            let sol = lp::maximize(&a, &b, &rows[i].0, &LpOptions::default());
            match sol.status {
                LpStatus::Optimal => {
                    if sol.value <= rows[i].1 + tol {
                        kept[i] = false;
                    }
                }
                other => return Err(Error::Numerical(other)),
            }
        }
        let survivors: Vec<(DVector<f64>, f64)> = rows
            .into_iter()
            .zip(kept)
            .filter_map(|(r, k)| k.then_some(r))
            .collect();
        stack(&survivors, d)
    }

    /// Vertices of a bounded polytope of dimension at most three.
    pub fn vertices(&self) -> Result<Vec<DVector<f64>>> {
        let d = self.dim();
        if d > MAX_VERTEX_DIM {
            return Err(Error::Unsupported(format!(
                "vertex enumeration in dimension {d} (max {MAX_VERTEX_DIM})"
            )));
        }
        if self.is_empty()? {
            return Err(Error::EmptySet("vertices"));
        }
        // Boundedness check; `bounding_box` fails with Unbounded otherwise.
        let (lo, hi) = self.bounding_box()?;
        let scale = 1.0 + lo.amax().max(hi.amax());
        let reduced = self.reduce()?;
        let q = reduced.n_constraints();
        let mut out: Vec<DVector<f64>> = Vec::new();
        for combo in combinations(q, d) {
            let a = DMatrix::from_fn(d, d, |i, j| reduced.a[(combo[i], j)]);
            let b = DVector::from_fn(d, |i, _| reduced.b[combo[i]]);
            let lu = a.lu();
            if lu.determinant().abs() <= 1e-12 {
                continue;
            }
            let Some(x) = lu.solve(&b) else { continue };
            if reduced.violation(&x)? <= 1e-9 * scale {
                push_unique(&mut out, x, POINT_MERGE_TOL * scale);
            }
        }
        if out.is_empty() {
            // Only possible for sets whose reduced form is degenerate in a way the
            // combinations miss; fall back to the LP point.
            if let Some(p) = self.feasible_point()? {
                out.push(p);
            }
        }
        Ok(out)
    }

    /// Convex hull of points in dimension at most three.
    pub fn from_points(points: &[DVector<f64>]) -> Result<Polytope> {
        let Some(first) = points.first() else {
            return Err(Error::Contract("hull of an empty point set".into()));
        };
        let d = first.len();
        if d > MAX_VERTEX_DIM {
            return Err(Error::Unsupported(format!(
                "hull in dimension {d} (max {MAX_VERTEX_DIM})"
            )));
        }
        if points.iter().any(|p| p.len() != d) {
            return Err(Error::Contract("points of mixed dimension".into()));
        }
        let mut pts: Vec<DVector<f64>> = Vec::new();
        let scale = 1.0 + points.iter().map(|p| p.amax()).fold(0.0, f64::max);
        for p in points {
            push_unique(&mut pts, p.clone(), POINT_MERGE_TOL * scale);
        }
        let centroid = pts.iter().fold(DVector::zeros(d), |acc, p| acc + p) / pts.len() as f64;
        let spread = DMatrix::from_fn(d, pts.len(), |i, j| pts[j][i] - centroid[i]);

        // Orthonormal bases of the affine hull and its complement.
        let (basis, complement) = if pts.len() == 1 {
            (DMatrix::zeros(d, 0), DMatrix::identity(d, d))
        } else {
            let svd = spread.clone().svd(true, false);
            let u = svd.u.expect("requested U");
            let smax = svd.singular_values.max();
            let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
            order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
            let rank = order
                .iter()
                .filter(|&&i| svd.singular_values[i] > 1e-10 * scale.max(smax))
                .count();
            let full_u = complete_basis(&u, &order, d);
            (
                full_u.columns(0, rank).into_owned(),
                full_u.columns(rank, d - rank).into_owned(),
            )
        };
        let k = basis.ncols();
        let proj: Vec<DVector<f64>> = pts
            .iter()
            .map(|p| basis.transpose() * (p - &centroid))
            .collect();

        let mut rows: Vec<(DVector<f64>, f64)> = Vec::new();
        let tol = 1e-9 * scale;
        let mut try_facet = |n: DVector<f64>, anchor: &DVector<f64>| {
            let nn = n.norm();
            if nn <= 1e-12 {
                return;
            }
            let n = n / nn;
            for sign in [1.0, -1.0] {
                let ns = &n * sign;
                let c = ns.dot(anchor);
                if proj.iter().all(|y| ns.dot(y) <= c + tol) {
                    let lifted = &basis * &ns;
                    rows.push((lifted.clone(), c + lifted.dot(&centroid)));
                }
            }
        };
        match k {
            0 => {}
            1 => {
                let e = DVector::from_element(1, 1.0);
                let hi = proj.iter().map(|y| y[0]).fold(f64::NEG_INFINITY, f64::max);
                let lo = proj.iter().map(|y| y[0]).fold(f64::INFINITY, f64::min);
                try_facet(e.clone(), &DVector::from_element(1, hi));
                try_facet(e, &DVector::from_element(1, lo));
            }
            2 => {
                for c in combinations(proj.len(), 2) {
                    let t = &proj[c[1]] - &proj[c[0]];
                    try_facet(DVector::from_vec(vec![-t[1], t[0]]), &proj[c[0]]);
                }
            }
            3 => {
                for c in combinations(proj.len(), 3) {
                    let u = (&proj[c[1]] - &proj[c[0]]).fixed_rows::<3>(0).into_owned();
                    let v = (&proj[c[2]] - &proj[c[0]]).fixed_rows::<3>(0).into_owned();
                    let n = u.cross(&v);
                    try_facet(DVector::from_column_slice(n.as_slice()), &proj[c[0]]);
                }
            }
            _ => unreachable!("dimension bounded above"),
        }
        for j in 0..complement.ncols() {
            let u = complement.column(j).into_owned();
            let c = u.dot(&centroid);
            rows.push((u.clone(), c));
            rows.push((-u, -c));
        }
        stack(&rows, d)?.reduce()
    }

    /// `P ⊕ Q`.
    pub fn minkowski_sum(&self, other: &Polytope) -> Result<Polytope> {
        self.check_dim(other.dim())?;
        let d = self.dim();
        if self.is_empty()? || other.is_empty()? {
            return Err(Error::EmptySet("minkowski_sum"));
        }
        if d > MAX_VERTEX_DIM {
            return Err(Error::Unsupported(format!(
                "Minkowski sum in dimension {d}"
            )));
        }
        if d == 3 {
            let pv = self.vertices()?;
            let qv = other.vertices()?;
            let sums: Vec<DVector<f64>> = pv
                .iter()
                .flat_map(|p| qv.iter().map(move |q| p + q))
                .collect();
            return Polytope::from_points(&sums);
        }
        // Planar and scalar sets: facet normals of the sum are among the operands' normals.
        let pr = self.reduce()?;
        let qr = other.reduce()?;
        let mut dirs: Vec<DVector<f64>> =
            pr.a.row_iter()
                .chain(qr.a.row_iter())
                .map(|r| r.transpose())
                .collect();
        if d == 2 {
            for k in 0..MINKOWSKI_EXTRA_DIRECTIONS {
                let t = 2.0 * std::f64::consts::PI * k as f64 / MINKOWSKI_EXTRA_DIRECTIONS as f64;
                dirs.push(DVector::from_vec(vec![t.cos(), t.sin()]));
            }
        }
        let mut rows = Vec::with_capacity(dirs.len());
        for dir in dirs {
            let h = pr.support(&dir)? + qr.support(&dir)?;
            rows.push((dir, h));
        }
        stack(&rows, d)?.reduce()
    }

    /// `P ⊖ Q = {x : x ⊕ Q ⊆ P}`. An empty result is returned as a value.
    pub fn pontryagin_diff(&self, other: &Polytope) -> Result<Polytope> {
        self.check_dim(other.dim())?;
        if other.is_empty()? {
            return Err(Error::EmptySet("pontryagin_diff subtrahend"));
        }
        let mut b = self.b.clone();
        for k in 0..self.n_constraints() {
            b[k] -= other.support(&self.a.row(k).transpose())?;
        }
        let diff = Polytope::new(self.a.clone(), b)?;
        if diff.is_empty()? {
            return Ok(diff);
        }
        diff.reduce()
    }

    /// Image `{M x : x ∈ P}`.
    pub fn linear_map(&self, m: &DMatrix<f64>) -> Result<Polytope> {
        self.check_dim(m.ncols())?;
        if m.is_square() {
            if let Some(inv) = invert_well_conditioned(m) {
                // Unit rows keep the LPs well scaled when `m` is a contraction.
                let mut a = &self.a * inv;
                let mut b = self.b.clone();
                for k in 0..a.nrows() {
                    let n = a.row(k).norm();
                    if n > 0.0 {
                        a.row_mut(k).unscale_mut(n);
                        b[k] /= n;
                    }
                }
                return Polytope::new(a, b);
            }
        }
        if self.dim() > MAX_VERTEX_DIM || m.nrows() > MAX_VERTEX_DIM {
            return Err(Error::Unsupported(format!(
                "linear map {}x{} outside the vertex path",
                m.nrows(),
                m.ncols()
            )));
        }
        let images: Vec<DVector<f64>> = self.vertices()?.iter().map(|v| m * v).collect();
        Polytope::from_points(&images)
    }

    /// Points spread over the set: its vertices and random convex combinations of them.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, count: usize) -> Result<Vec<DVector<f64>>> {
        let verts = self.vertices()?;
        let mut out = Vec::with_capacity(count);
        for i in 0..count {
            if i < verts.len() && i % 4 == 0 {
                out.push(verts[i].clone());
                continue;
            }
            let weights: Vec<f64> = verts
                .iter()
                .map(|_| -(1.0 - rng.random::<f64>()).ln())
                .collect();
            let total: f64 = weights.iter().sum();
            let p = verts
                .iter()
                .zip(&weights)
                .fold(DVector::zeros(self.dim()), |acc, (v, w)| {
                    acc + v * (w / total)
                });
            out.push(p);
        }
        Ok(out)
    }
}

fn stack(rows: &[(DVector<f64>, f64)], d: usize) -> Result<Polytope> {
    let a = DMatrix::from_fn(rows.len(), d, |i, j| rows[i].0[j]);
    let b = DVector::from_fn(rows.len(), |i, _| rows[i].1);
    Polytope::new(a, b)
}

fn push_unique(points: &mut Vec<DVector<f64>>, p: DVector<f64>, tol: f64) {
    if !points.iter().any(|q| (q - &p).amax() <= tol) {
        points.push(p);
    }
}

fn invert_well_conditioned(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let svd = m.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smax == 0.0 || smin / smax < 1e-12 {
        return None;
    }
    m.clone().try_inverse()
}

/// Columns of `u` reordered by `order`, padded to a full orthonormal basis.
fn complete_basis(u: &DMatrix<f64>, order: &[usize], d: usize) -> DMatrix<f64> {
    let mut cols: Vec<DVector<f64>> = order.iter().map(|&i| u.column(i).into_owned()).collect();
    for i in 0..d {
        if cols.len() == d {
            break;
        }
        let mut e = DVector::zeros(d);
        e[i] = 1.0;
        for c in &cols {
            let proj = c.dot(&e);
            e -= c * proj;
        }
        if e.norm() > 1e-6 {
            cols.push(e.normalize());
        }
    }
    DMatrix::from_columns(&cols)
}

/// All `k`-subsets of `0..n` in lexicographic order.
pub(crate) fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k == 0 || k > n {
        return out;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        let mut i = k;
        while i > 0 && idx[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return out;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn interval(lo: f64, hi: f64) -> Polytope {
        Polytope::from_bounds(&[lo], &[hi]).unwrap()
    }

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn emptiness_of_intervals() {
        assert!(!interval(-1.0, 1.0).is_empty().unwrap());
        let p = Polytope::new(
            DMatrix::from_row_slice(2, 1, &[1.0, -1.0]),
            v(&[-1.0, -1.0]),
        )
        .unwrap();
        assert!(p.is_empty().unwrap());
    }

    #[test]
    fn contains_respects_tolerance() {
        let b = Polytope::symmetric_box(&[1.0, 1.0]).unwrap();
        assert!(b.contains(&v(&[0.0, 0.0])).unwrap());
        assert!(!b.contains(&v(&[1.0 + 1e-6, 0.0])).unwrap());
        assert!(matches!(
            b.contains(&v(&[0.0])),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn support_of_state_box() {
        let x = Polytope::symmetric_box(&[17.0, 17.0]).unwrap();
        assert!((x.support(&v(&[1.0, 0.0])).unwrap() - 17.0).abs() < 1e-12);
        assert_eq!(x.support(&v(&[0.0, 0.0])).unwrap(), 0.0);
    }

    #[test]
    fn support_errors() {
        let half = Polytope::new(DMatrix::from_row_slice(1, 2, &[1.0, 0.0]), v(&[1.0])).unwrap();
        assert!(matches!(
            half.support(&v(&[0.0, 1.0])),
            Err(Error::Unbounded)
        ));
        let empty = interval(1.0, -1.0);
        assert!(matches!(empty.support(&v(&[1.0])), Err(Error::EmptySet(_))));
    }

    #[test]
    fn interval_sum_and_difference() {
        let u = interval(-4.0, 4.0);
        let w = interval(-0.2, 0.2);
        let s = u.minkowski_sum(&w).unwrap();
        assert!((s.support(&v(&[1.0])).unwrap() - 4.2).abs() < 1e-12);
        assert!((s.support(&v(&[-1.0])).unwrap() - 4.2).abs() < 1e-12);
        let d = u.pontryagin_diff(&w).unwrap();
        assert!((d.support(&v(&[1.0])).unwrap() - 3.8).abs() < 1e-12);
        assert!((d.support(&v(&[-1.0])).unwrap() - 3.8).abs() < 1e-12);
    }

    #[test]
    fn identities_with_the_origin() {
        let x = Polytope::symmetric_box(&[17.0, 17.0]).unwrap();
        let o = Polytope::origin(2);
        let s = x.minkowski_sum(&o).unwrap();
        assert!(s.is_subset_of(&x, 1e-9).unwrap() && x.is_subset_of(&s, 1e-9).unwrap());
        let d = x.pontryagin_diff(&o).unwrap();
        assert!(d.is_subset_of(&x, 1e-9).unwrap() && x.is_subset_of(&d, 1e-9).unwrap());
    }

    #[test]
    fn empty_difference_is_a_value() {
        let d = interval(-1.0, 1.0)
            .pontryagin_diff(&interval(-2.0, 2.0))
            .unwrap();
        assert!(d.is_empty().unwrap());
    }

    #[test]
    fn input_matrix_maps_interval_to_segment() {
        let w = interval(-0.2, 0.2);
        let b = DMatrix::from_row_slice(2, 1, &[0.3, -0.4]);
        let seg = w.linear_map(&b).unwrap();
        let mut verts = seg.vertices().unwrap();
        verts.sort_by(|p, q| p[0].total_cmp(&q[0]));
        assert_eq!(verts.len(), 2);
        assert!((&verts[0] - v(&[-0.06, 0.08])).amax() < 1e-12);
        assert!((&verts[1] - v(&[0.06, -0.08])).amax() < 1e-12);
        assert!(seg.contains(&v(&[0.03, -0.04])).unwrap());
        assert!(!seg.contains(&v(&[0.03, 0.0])).unwrap());
    }

    #[test]
    fn linear_map_identity_and_scaling() {
        let p = Polytope::from_bounds(&[-1.0, -2.0], &[3.0, 1.0]).unwrap();
        let id = p.linear_map(&DMatrix::identity(2, 2)).unwrap();
        assert_eq!(id, p);
        let doubled = p.linear_map(&(DMatrix::identity(2, 2) * 2.0)).unwrap();
        let (lo, hi) = doubled.bounding_box().unwrap();
        assert!((lo - v(&[-2.0, -4.0])).amax() < 1e-12);
        assert!((hi - v(&[6.0, 2.0])).amax() < 1e-12);
    }

    #[test]
    fn reduce_drops_duplicates_and_slack_rows() {
        let b = Polytope::symmetric_box(&[1.0, 1.0]).unwrap();
        let dup = b
            .intersect(
                &Polytope::new(DMatrix::from_row_slice(1, 2, &[1.0, 0.0]), v(&[1.0])).unwrap(),
            )
            .unwrap();
        assert_eq!(dup.n_constraints(), 5);
        assert_eq!(dup.reduce().unwrap().n_constraints(), 4);
        let slack = b
            .intersect(
                &Polytope::new(DMatrix::from_row_slice(1, 2, &[1.0, 0.0]), v(&[100.0])).unwrap(),
            )
            .unwrap();
        assert_eq!(slack.reduce().unwrap().n_constraints(), 4);
    }

    #[test]
    fn hull_of_square_points() {
        let pts = vec![
            v(&[0.0, 0.0]),
            v(&[1.0, 0.0]),
            v(&[0.0, 1.0]),
            v(&[1.0, 1.0]),
            v(&[0.5, 0.5]),
        ];
        let p = Polytope::from_points(&pts).unwrap();
        assert_eq!(p.n_constraints(), 4);
        assert_eq!(p.vertices().unwrap().len(), 4);
    }

    #[test]
    fn hull_in_three_dimensions() {
        let mut pts = Vec::new();
        for i in 0..8 {
            pts.push(v(&[
                (i & 1) as f64,
                ((i >> 1) & 1) as f64,
                ((i >> 2) & 1) as f64,
            ]));
        }
        let cube = Polytope::from_points(&pts).unwrap();
        assert_eq!(cube.n_constraints(), 6);
        let sum = cube.minkowski_sum(&cube).unwrap();
        assert!((sum.support(&v(&[1.0, 1.0, 1.0])).unwrap() - 6.0).abs() < 1e-9);
    }

    #[test]
    fn json_shape() {
        let p = Polytope::symmetric_box(&[4.0]).unwrap();
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(s, r#"{"H":[[1.0],[-1.0]],"h":[4.0,4.0]}"#);
        let back: Polytope = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn combinations_count() {
        assert_eq!(combinations(5, 2).len(), 10);
        assert_eq!(combinations(6, 3).len(), 20);
        assert_eq!(combinations(3, 3), vec![vec![0, 1, 2]]);
    }
}
