use nalgebra::{DMatrix, DVector};
use petube::Polytope;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn v(x: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(x)
}

/// Random 2-D polytope: hull of 3 to 7 points in a square of half-width `radius`.
fn random_polygon(rng: &mut ChaCha8Rng, radius: f64) -> Polytope {
    loop {
        let k = rng.random_range(3..8);
        let pts: Vec<DVector<f64>> = (0..k)
            .map(|_| {
                v(&[
                    rng.random_range(-radius..radius),
                    rng.random_range(-radius..radius),
                ])
            })
            .collect();
        if let Ok(p) = Polytope::from_points(&pts) {
            if p.normals().nrows() >= 3 && p.bounding_box().is_ok() {
                let (lo, hi) = p.bounding_box().unwrap();
                if (hi - lo).min() > 1e-3 {
                    return p;
                }
            }
        }
    }
}

fn directions(count: usize) -> Vec<DVector<f64>> {
    (0..count)
        .map(|k| {
            let t = std::f64::consts::TAU * k as f64 / count as f64 + 0.1;
            v(&[t.cos(), t.sin()])
        })
        .collect()
}

fn vertex_max(p: &Polytope, dir: &DVector<f64>) -> f64 {
    p.vertices()
        .unwrap()
        .iter()
        .map(|x| x.dot(dir))
        .fold(f64::NEG_INFINITY, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn pontryagin_then_minkowski_stays_inside(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_polygon(&mut rng, 5.0);
        let q = random_polygon(&mut rng, 0.5);
        let diff = p.pontryagin_diff(&q).unwrap();
        prop_assume!(!diff.is_empty().unwrap());
        let Ok(back) = diff.minkowski_sum(&q) else {
            // A degenerate (lower-dimensional) difference is still a valid input.
            return Ok(());
        };
        for x in back.sample(&mut rng, 1000).unwrap() {
            prop_assert!(p.contains_tol(&x, 1e-7).unwrap(), "{x:?}");
        }
    }

    #[test]
    fn support_is_additive(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_polygon(&mut rng, 3.0);
        let q = random_polygon(&mut rng, 2.0);
        let sum = p.minkowski_sum(&q).unwrap();
        for d in directions(37) {
            let lhs = sum.support(&d).unwrap();
            let rhs = p.support(&d).unwrap() + q.support(&d).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-8 * (1.0 + rhs.abs()), "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn minkowski_is_commutative(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_polygon(&mut rng, 3.0);
        let q = random_polygon(&mut rng, 1.0);
        let pq = p.minkowski_sum(&q).unwrap();
        let qp = q.minkowski_sum(&p).unwrap();
        prop_assert!(pq.is_subset_of(&qp, 1e-8).unwrap());
        prop_assert!(qp.is_subset_of(&pq, 1e-8).unwrap());
    }

    #[test]
    fn reduce_preserves_membership(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base = random_polygon(&mut rng, 2.0);
        // Add redundant rows: shifted copies and random loose halfspaces.
        let mut a = base.normals().clone();
        let mut b = base.offsets().clone();
        for _ in 0..5 {
            let d = v(&[rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]);
            let slack = rng.random_range(0.0..2.0);
            let off = base.support(&d).unwrap() + slack;
            let last = a.nrows();
            a = a.insert_row(last, 0.0);
            a.set_row(last, &d.transpose());
            b = b.insert_row(last, off);
        }
        let loose = Polytope::new(a, b).unwrap();
        let reduced = loose.reduce().unwrap();
        prop_assert!(reduced.n_constraints() <= base.n_constraints());
        for _ in 0..1000 {
            let x = v(&[rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)]);
            let inside = loose.violation(&x).unwrap();
            let r = reduced.violation(&x).unwrap();
            // Away from the boundary both must agree.
            if inside.abs() > 1e-7 {
                prop_assert_eq!(inside <= 0.0, r <= 1e-9, "{:?}", x);
            }
        }
    }

    #[test]
    fn contains_matches_raw_inequalities(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_polygon(&mut rng, 2.0);
        for _ in 0..200 {
            let x = v(&[rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)]);
            let raw = (0..p.n_constraints())
                .all(|k| p.normals().row(k).dot(&x.transpose()) <= p.offsets()[k] + 1e-9);
            prop_assert_eq!(p.contains(&x).unwrap(), raw);
        }
    }

    #[test]
    fn support_matches_vertex_maximum(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_polygon(&mut rng, 4.0);
        for d in directions(16) {
            let lp = p.support(&d).unwrap();
            prop_assert!((lp - vertex_max(&p, &d)).abs() <= 1e-8);
        }
    }

    #[test]
    fn interval_emptiness(l1 in -5.0f64..5.0, w1 in 0.0f64..3.0, l2 in -5.0f64..5.0, w2 in 0.0f64..3.0) {
        let a = Polytope::from_bounds(&[l1], &[l1 + w1]).unwrap();
        let b = Polytope::from_bounds(&[l2], &[l2 + w2]).unwrap();
        let lo = l1.max(l2);
        let hi = (l1 + w1).min(l2 + w2);
        prop_assume!((hi - lo).abs() > 1e-9);
        prop_assert_eq!(a.intersect(&b).unwrap().is_empty().unwrap(), lo > hi);
    }

    #[test]
    fn box_sum_matches_vertex_hull(a in 0.1f64..3.0, b in 0.1f64..3.0, c in 0.1f64..3.0, d in 0.1f64..3.0) {
        let p = Polytope::symmetric_box(&[a, b]).unwrap();
        let q = Polytope::from_bounds(&[-c, 0.0], &[0.0, d]).unwrap();
        let mut pts = Vec::new();
        for x in p.vertices().unwrap() {
            for y in q.vertices().unwrap() {
                pts.push(&x + &y);
            }
        }
        let oracle = Polytope::from_points(&pts).unwrap();
        let sum = p.minkowski_sum(&q).unwrap();
        prop_assert!(sum.is_subset_of(&oracle, 1e-8).unwrap());
        prop_assert!(oracle.is_subset_of(&sum, 1e-8).unwrap());
    }
}

#[test]
fn interval_examples() {
    let u = Polytope::symmetric_box(&[4.0]).unwrap();
    let w = Polytope::symmetric_box(&[0.2]).unwrap();
    let (lo, hi) = u.minkowski_sum(&w).unwrap().bounding_box().unwrap();
    assert!((lo[0] + 4.2).abs() < 1e-12 && (hi[0] - 4.2).abs() < 1e-12);
    let (lo, hi) = u.pontryagin_diff(&w).unwrap().bounding_box().unwrap();
    assert!((lo[0] + 3.8).abs() < 1e-12 && (hi[0] - 3.8).abs() < 1e-12);
}

#[test]
fn identity_elements() {
    let x = Polytope::symmetric_box(&[17.0, 17.0]).unwrap();
    let o = Polytope::origin(2);
    for p in [x.minkowski_sum(&o).unwrap(), x.pontryagin_diff(&o).unwrap()] {
        assert!(p.is_subset_of(&x, 1e-9).unwrap() && x.is_subset_of(&p, 1e-9).unwrap());
    }
    assert_eq!(x.support(&v(&[1.0, 0.0])).unwrap(), 17.0);
    assert_eq!(x.support(&v(&[0.0, 0.0])).unwrap(), 0.0);
}

#[test]
fn membership_boundary() {
    let b = Polytope::symmetric_box(&[1.0, 1.0]).unwrap();
    assert!(b.contains(&v(&[0.0, 0.0])).unwrap());
    assert!(!b.contains(&v(&[1.0 + 1e-6, 0.0])).unwrap());
    assert!(b.contains(&v(&[0.0])).is_err());
}

#[test]
fn input_map_of_disturbance_is_a_segment() {
    let w = Polytope::symmetric_box(&[0.2]).unwrap();
    let b = DMatrix::from_column_slice(2, 1, &[0.3, -0.4]);
    let seg = w.linear_map(&b).unwrap();
    for end in [v(&[0.06, -0.08]), v(&[-0.06, 0.08]), v(&[0.0, 0.0])] {
        assert!(seg.contains_tol(&end, 1e-12).unwrap());
    }
    assert!(!seg.contains_tol(&v(&[0.06, 0.08]), 1e-6).unwrap());
    assert!(!seg.contains_tol(&v(&[0.07, -0.0933]), 1e-6).unwrap());
    let doubled = Polytope::symmetric_box(&[1.0, 2.0])
        .unwrap()
        .linear_map(&(DMatrix::identity(2, 2) * 2.0))
        .unwrap();
    let (lo, hi) = doubled.bounding_box().unwrap();
    assert!(
        (hi[0] - 2.0).abs() < 1e-12 && (hi[1] - 4.0).abs() < 1e-12 && (lo[1] + 4.0).abs() < 1e-12
    );
}

#[test]
fn reduce_examples() {
    let a = DMatrix::from_row_slice(5, 1, &[1.0, -1.0, 1.0, 1.0, 1.0]);
    let b = DVector::from_column_slice(&[1.0, 1.0, 1.0, 100.0, 1.0]);
    let p = Polytope::new(a, b).unwrap().reduce().unwrap();
    assert_eq!(p.n_constraints(), 2);
}

#[test]
fn reduce_keeps_rows_of_tiny_sets() {
    let tiny = Polytope::symmetric_box(&[1e-12, 3e-12]).unwrap();
    let r = tiny.reduce().unwrap();
    assert_eq!(r.n_constraints(), 4);
    assert!(r.bounding_box().is_ok());
}
