//! Dense solves for Newton steps.  Dimensions here are statistic dimensions,
//! small by construction, so Gauss-Jordan with partial pivoting is plenty.

use crate::{Error, Result};

/// Solves `m x = b` for symmetric positive semidefinite `m`.  A collapsing
/// pivot triggers escalating Tikhonov ridges before giving up, so directions
/// the model cannot move in (constant statistic components) degrade into
/// tiny steps instead of poisoning the whole solve.
pub(crate) fn solve(m: &[Vec<f64>], b: &[f64]) -> Result<Vec<f64>> {
    let d = b.len();
    let scale = (0..d).map(|i| m[i][i].abs()).fold(0.0f64, f64::max).max(1e-12);
    let mut ridge = 0.0;
    for _ in 0..8 {
        if let Some(x) = gauss(m, b, ridge) {
            if x.iter().all(|v| v.is_finite()) {
                return Ok(x);
            }
        }
        ridge = if ridge == 0.0 { 1e-10 * scale } else { ridge * 100.0 };
    }
    Err(Error::Degenerate { detail: "statistic covariance is numerically singular".into() })
}

#[allow(clippy::needless_range_loop)]
fn gauss(m: &[Vec<f64>], b: &[f64], ridge: f64) -> Option<Vec<f64>> {
    let d = b.len();
    let mut a: Vec<Vec<f64>> = (0..d)
        .map(|i| {
            let mut row = m[i].clone();
            row[i] += ridge;
            row.push(b[i]);
            row
        })
        .collect();
    let pivot_floor = 1e-13 * (0..d).map(|i| a[i][i].abs()).fold(0.0f64, f64::max);
    for col in 0..d {
        let piv = (col..d).max_by(|&r1, &r2| {
            a[r1][col].abs().partial_cmp(&a[r2][col].abs()).unwrap_or(std::cmp::Ordering::Equal)
        })?;
        if a[piv][col].abs() <= pivot_floor {
            return None;
        }
        a.swap(col, piv);
        for r in 0..d {
            if r == col || a[r][col] == 0.0 {
                continue;
            }
            let f = a[r][col] / a[col][col];
            for c in col..=d {
                a[r][c] -= f * a[col][c];
            }
        }
    }
    Some((0..d).map(|i| a[i][d] / a[i][i]).collect())
}

pub(crate) fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

pub(crate) fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_a_well_conditioned_system() {
        let m = vec![vec![4.0, 1.0], vec![1.0, 3.0]];
        let b = vec![1.0, 2.0];
        let x = solve(&m, &b).unwrap();
        assert!((4.0 * x[0] + x[1] - 1.0).abs() < 1e-12);
        assert!((x[0] + 3.0 * x[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn singular_direction_falls_back_to_ridge() {
        let m = vec![vec![2.0, 0.0], vec![0.0, 0.0]];
        let b = vec![1.0, 0.0];
        let x = solve(&m, &b).unwrap();
        assert!((x[0] - 0.5).abs() < 1e-6);
        assert!(x[1].abs() < 1e6);
    }

    #[test]
    fn zero_matrix_with_nonzero_rhs_is_degenerate_or_huge() {
        // The ridge makes this solvable with an enormous step; the caller's
        // damping is responsible for rejecting it.
        let m = vec![vec![0.0]];
        let b = vec![1.0];
        match solve(&m, &b) {
            Ok(x) => assert!(x[0].is_finite()),
            Err(Error::Degenerate { .. }) => {}
            Err(other) => panic!("unexpected error: {other}"),
        }
    }
}
