//! Relative-interior membership for observed statistics.
//!
//! The exact MLE exists iff the observation lies in the relative interior of
//! the convex hull of the attainable statistic values.  Components that are
//! constant across the whole table only constrain the observation to equal
//! that constant; the geometry runs on the remaining free components.  Up to
//! two free components the test is exact on the integer hull (monotone
//! chain, `i128` cross products); with three or more it degrades to
//! per-component bounds, which is conservative: anything it rejects is
//! genuinely outside, and what it wrongly admits is caught later by the
//! fitter's iteration cap.

use crate::statistics::StatVector;
use crate::{BoundSide, HullFace};

/// `None` when `query` lies in the relative interior of the convex hull of
/// `keys`; otherwise the violated face.  `query` is in raw (unscaled)
/// statistic units.
pub fn interior_face<'a>(
    keys: impl IntoIterator<Item = &'a StatVector>,
    query: &[f64],
) -> Option<HullFace> {
    let points: Vec<&'a StatVector> = keys.into_iter().collect();
    assert!(!points.is_empty(), "volume table has at least one entry");
    let d = query.len();

    let mut mins = vec![i64::MAX; d];
    let mut maxs = vec![i64::MIN; d];
    for p in &points {
        for (j, &v) in p.as_slice().iter().enumerate() {
            mins[j] = mins[j].min(v);
            maxs[j] = maxs[j].max(v);
        }
    }

    let mut free: Vec<usize> = Vec::new();
    for j in 0..d {
        if mins[j] == maxs[j] {
            if query[j] != mins[j] as f64 {
                let side = if query[j] < mins[j] as f64 { BoundSide::Min } else { BoundSide::Max };
                return Some(HullFace::ComponentBound { component: j, bound: mins[j], side });
            }
        } else {
            free.push(j);
        }
    }

    match free.len() {
        0 => None,
        2 => interior_face_2d(&points, query, free[0], free[1], &mins, &maxs),
        _ => {
            for &j in &free {
                if query[j] <= mins[j] as f64 {
                    return Some(HullFace::ComponentBound {
                        component: j,
                        bound: mins[j],
                        side: BoundSide::Min,
                    });
                }
                if query[j] >= maxs[j] as f64 {
                    return Some(HullFace::ComponentBound {
                        component: j,
                        bound: maxs[j],
                        side: BoundSide::Max,
                    });
                }
            }
            None
        }
    }
}

/// Exact 2-D test on the free components `(j0, j1)`.  The remaining
/// components are constant, so full-dimensional faces are reconstructed by
/// splicing the constants back in.
fn interior_face_2d(
    points: &[&StatVector],
    query: &[f64],
    j0: usize,
    j1: usize,
    mins: &[i64],
    maxs: &[i64],
) -> Option<HullFace> {
    let mut proj: Vec<(i64, i64)> =
        points.iter().map(|p| (p.get(j0), p.get(j1))).collect();
    proj.sort_unstable();
    proj.dedup();

    let q = (query[j0], query[j1]);
    let q_int: Option<(i64, i64)> = match (exact_int(q.0), exact_int(q.1)) {
        (Some(a), Some(b)) => Some((a, b)),
        _ => None,
    };
    let lift = |v: (i64, i64)| -> Vec<i64> {
        (0..query.len())
            .map(|j| {
                if j == j0 {
                    v.0
                } else if j == j1 {
                    v.1
                } else {
                    debug_assert_eq!(mins[j], maxs[j]);
                    mins[j]
                }
            })
            .collect()
    };

    let hull = convex_hull(&proj);
    if hull.len() == 2 {
        // Collinear attainable set: the relative interior is the open
        // segment between the extreme points.
        let (e0, e1) = (hull[0], hull[1]);
        if cross_sign(e0, e1, q, q_int) != 0 {
            return Some(HullFace::OffSpan);
        }
        let dir = ((e1.0 - e0.0) as f64, (e1.1 - e0.1) as f64);
        let s = (q.0 - e0.0 as f64) * dir.0 + (q.1 - e0.1 as f64) * dir.1;
        let len2 = dir.0 * dir.0 + dir.1 * dir.1;
        if s <= 0.0 {
            return Some(HullFace::Vertex { at: lift(e0) });
        }
        if s >= len2 {
            return Some(HullFace::Vertex { at: lift(e1) });
        }
        return None;
    }

    for (i, &v0) in hull.iter().enumerate() {
        let v1 = hull[(i + 1) % hull.len()];
        let s = cross_sign(v0, v1, q, q_int);
        if s > 0 {
            continue;
        }
        if s == 0 {
            if q.0 == v0.0 as f64 && q.1 == v0.1 as f64 {
                return Some(HullFace::Vertex { at: lift(v0) });
            }
            if q.0 == v1.0 as f64 && q.1 == v1.1 as f64 {
                return Some(HullFace::Vertex { at: lift(v1) });
            }
        }
        return Some(HullFace::Edge { from: lift(v0), to: lift(v1) });
    }
    None
}

fn exact_int(v: f64) -> Option<i64> {
    if v.fract() == 0.0 && v.abs() < 2e18 {
        Some(v as i64)
    } else {
        None
    }
}

/// Sign of `(b − a) × (q − a)`: positive when `q` is strictly left of the
/// directed line `a → b`.  Exact in `i128` for integer queries.
fn cross_sign(a: (i64, i64), b: (i64, i64), q: (f64, f64), q_int: Option<(i64, i64)>) -> i32 {
    if let Some((qx, qy)) = q_int {
        let c = (b.0 - a.0) as i128 * (qy - a.1) as i128
            - (b.1 - a.1) as i128 * (qx - a.0) as i128;
        return match c.cmp(&0) {
            std::cmp::Ordering::Greater => 1,
            std::cmp::Ordering::Equal => 0,
            std::cmp::Ordering::Less => -1,
        };
    }
    let c = (b.0 - a.0) as f64 * (q.1 - a.1 as f64) - (b.1 - a.1) as f64 * (q.0 - a.0 as f64);
    if c > 0.0 {
        1
    } else if c < 0.0 {
        -1
    } else {
        0
    }
}

fn cross_i128(o: (i64, i64), a: (i64, i64), b: (i64, i64)) -> i128 {
    (a.0 - o.0) as i128 * (b.1 - o.1) as i128 - (a.1 - o.1) as i128 * (b.0 - o.0) as i128
}

/// Andrew's monotone chain on sorted deduplicated points, counterclockwise,
/// collinear points dropped.  Returns the two extremes for degenerate
/// (collinear) input.
fn convex_hull(sorted: &[(i64, i64)]) -> Vec<(i64, i64)> {
    if sorted.len() <= 2 {
        return sorted.to_vec();
    }
    let mut lower: Vec<(i64, i64)> = Vec::new();
    for &p in sorted {
        while lower.len() >= 2
            && cross_i128(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0
        {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<(i64, i64)> = Vec::new();
    for &p in sorted.iter().rev() {
        while upper.len() >= 2
            && cross_i128(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0
        {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(raw: &[&[i64]]) -> Vec<StatVector> {
        raw.iter().map(|r| StatVector::new(r.to_vec())).collect()
    }

    #[test]
    fn one_dimensional_range() {
        let keys = pts(&[&[0], &[1], &[2], &[3]]);
        assert_eq!(interior_face(&keys, &[2.0]), None);
        assert_eq!(interior_face(&keys, &[0.4]), None);
        assert_eq!(
            interior_face(&keys, &[3.0]),
            Some(HullFace::ComponentBound { component: 0, bound: 3, side: BoundSide::Max })
        );
        assert_eq!(
            interior_face(&keys, &[-1.0]),
            Some(HullFace::ComponentBound { component: 0, bound: 0, side: BoundSide::Min })
        );
    }

    #[test]
    fn square_hull_classifies_interior_edge_and_vertex() {
        let keys = pts(&[&[0, 0], &[1, 0], &[0, 1], &[1, 1]]);
        assert_eq!(interior_face(&keys, &[0.5, 0.5]), None);
        match interior_face(&keys, &[0.5, 0.0]) {
            Some(HullFace::Edge { .. }) => {}
            other => panic!("expected edge, got {other:?}"),
        }
        assert_eq!(
            interior_face(&keys, &[0.0, 0.0]),
            Some(HullFace::Vertex { at: vec![0, 0] })
        );
        match interior_face(&keys, &[2.0, 0.5]) {
            Some(HullFace::Edge { .. }) => {}
            other => panic!("expected edge, got {other:?}"),
        }
    }

    #[test]
    fn nonconvex_lattice_points_use_their_hull() {
        // Triangle with an interior lattice point.
        let keys = pts(&[&[0, 0], &[4, 0], &[0, 4], &[1, 1]]);
        assert_eq!(interior_face(&keys, &[1.0, 1.0]), None);
        assert_eq!(interior_face(&keys, &[1.9, 1.9]), None);
        match interior_face(&keys, &[2.0, 2.0]) {
            Some(HullFace::Edge { from, to }) => {
                assert_eq!((from, to), (vec![4, 0], vec![0, 4]));
            }
            other => panic!("expected hypotenuse, got {other:?}"),
        }
    }

    #[test]
    fn collinear_set_is_a_segment() {
        let keys = pts(&[&[0, 0], &[1, 1], &[2, 2]]);
        assert_eq!(interior_face(&keys, &[0.5, 0.5]), None);
        assert_eq!(interior_face(&keys, &[1.0, 1.0]), None);
        assert_eq!(interior_face(&keys, &[1.0, 1.5]), Some(HullFace::OffSpan));
        assert_eq!(
            interior_face(&keys, &[0.0, 0.0]),
            Some(HullFace::Vertex { at: vec![0, 0] })
        );
        assert_eq!(
            interior_face(&keys, &[3.0, 3.0]),
            Some(HullFace::Vertex { at: vec![2, 2] })
        );
    }

    #[test]
    fn constant_component_only_requires_equality() {
        let keys = pts(&[&[5, 0], &[5, 1], &[5, 2]]);
        assert_eq!(interior_face(&keys, &[5.0, 1.0]), None);
        assert_eq!(
            interior_face(&keys, &[4.0, 1.0]),
            Some(HullFace::ComponentBound { component: 0, bound: 5, side: BoundSide::Min })
        );
        assert_eq!(
            interior_face(&keys, &[5.0, 0.0]),
            Some(HullFace::ComponentBound { component: 1, bound: 0, side: BoundSide::Min })
        );
    }

    #[test]
    fn single_point_admits_only_itself() {
        let keys = pts(&[&[3, -1]]);
        assert_eq!(interior_face(&keys, &[3.0, -1.0]), None);
        assert!(interior_face(&keys, &[3.0, 0.0]).is_some());
    }

    #[test]
    fn three_free_components_fall_back_to_bounds() {
        let keys = pts(&[
            &[0, 0, 0],
            &[1, 0, 0],
            &[0, 1, 0],
            &[0, 0, 1],
            &[1, 1, 1],
        ]);
        assert_eq!(interior_face(&keys, &[0.5, 0.5, 0.5]), None);
        assert_eq!(
            interior_face(&keys, &[0.5, 0.5, 0.0]),
            Some(HullFace::ComponentBound { component: 2, bound: 0, side: BoundSide::Min })
        );
        assert_eq!(
            interior_face(&keys, &[0.5, 1.2, 0.5]),
            Some(HullFace::ComponentBound { component: 1, bound: 1, side: BoundSide::Max })
        );
    }
}
