//! Carathéodory reduction of finite convex combinations.
//!
//! Given `Σ_i w_i p_i` with positive weights, repeatedly pick a nonzero
//! vector `z` with `Σ z_i p_i = 0` and `Σ z_i = 0` (an affine dependence) and
//! move the weights along `z` until one of them reaches zero. The weighted
//! sum and the total weight never change.

use crate::error::{Error, Result};
use crate::linalg::{cr, svd, CMatrix};

/// Output of a reduction. `kept[k]` is the input index of `points[k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Reduction {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub kept: Vec<usize>,
}

impl Reduction {
    pub fn support(&self) -> usize {
        self.kept.len()
    }

    pub fn weighted_sum(&self) -> Vec<f64> {
        weighted_sum(&self.points, &self.weights)
    }
}

/// `Σ_i w_i p_i`.
pub fn weighted_sum(points: &[Vec<f64>], weights: &[f64]) -> Vec<f64> {
    let n = points.first().map_or(0, Vec::len);
    let mut out = vec![0.0; n];
    for (p, &w) in points.iter().zip(weights) {
        for (o, &x) in out.iter_mut().zip(p) {
            *o += w * x;
        }
    }
    out
}

fn check_input(points: &[Vec<f64>], weights: &[f64]) -> Result<usize> {
    if points.len() != weights.len() {
        return Err(Error::InvalidParameter(format!(
            "{} points but {} weights",
            points.len(),
            weights.len()
        )));
    }
    let n = points.first().map_or(0, Vec::len);
    if points.iter().any(|p| p.len() != n) {
        return Err(Error::DimensionMismatch(
            "points have different dimensions".into(),
        ));
    }
    if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w <= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "weight {} is not positive",
            w
        )));
    }
    Ok(n)
}

/// Smallest singular value (relative to the largest) and its right-singular
/// vector for the lifted matrix `[p_i; 1]` restricted to `active`.
fn affine_null_direction(points: &[Vec<f64>], active: &[usize]) -> (f64, Vec<f64>) {
    let n = points.first().map_or(0, Vec::len);
    let lifted = CMatrix::from_fn(n + 1, active.len(), |r, c| {
        if r < n {
            cr(points[active[c]][r])
        } else {
            cr(1.0)
        }
    });
    let dec = svd(&lifted);
    let last = active.len() - 1;
    let smax = dec.s[0];
    // With more columns than rows the trailing singular values are exact zeros.
    let smin = if active.len() > n + 1 {
        0.0
    } else {
        dec.s[last]
    };
    let z = (0..active.len()).map(|i| dec.v[(i, last)].re).collect();
    (if smax > 0.0 { smin / smax } else { 0.0 }, z)
}

/// Moves weights along `z` (or `-z`) until one active weight reaches zero.
///
/// Both signs eliminate some index; the sign whose eliminated coefficient
/// has the larger magnitude is used, ties going to the lower index.
fn shift_along(weights: &mut [f64], active: &mut Vec<usize>, z: &[f64]) {
    let pick = |sign: f64| -> Option<(usize, f64, f64)> {
        let mut best: Option<(usize, f64, f64)> = None;
        for (k, &zk) in z.iter().enumerate() {
            let zk = sign * zk;
            if zk <= 0.0 {
                continue;
            }
            let ratio = weights[active[k]] / zk;
            best = match best {
                Some((_, r, _)) if r <= ratio => best,
                _ => Some((k, ratio, zk)),
            };
        }
        best
    };
    let plus = pick(1.0);
    let minus = pick(-1.0);
    let (sign, (slot, t, _)) = match (plus, minus) {
        (Some(p), Some(m)) => {
            if m.2 > p.2 || (m.2 == p.2 && m.0 < p.0) {
                (-1.0, m)
            } else {
                (1.0, p)
            }
        }
        (Some(p), None) => (1.0, p),
        (None, Some(m)) => (-1.0, m),
        (None, None) => return,
    };
    for (k, &zk) in z.iter().enumerate() {
        let w = &mut weights[active[k]];
        *w = (*w - t * sign * zk).max(0.0);
    }
    weights[active[slot]] = 0.0;
    active.retain(|&i| weights[i] > 0.0);
}

fn finish(points: &[Vec<f64>], weights: &[f64], active: Vec<usize>) -> Reduction {
    Reduction {
        points: active.iter().map(|&i| points[i].clone()).collect(),
        weights: active.iter().map(|&i| weights[i]).collect(),
        kept: active,
    }
}

/// Reduces to at most `n + 1` points in `R^n`.
pub fn caratheodory_reduce(points: &[Vec<f64>], weights: &[f64]) -> Result<Reduction> {
    let n = check_input(points, weights)?;
    let mut w = weights.to_vec();
    let mut active: Vec<usize> = (0..points.len()).collect();
    while active.len() > n + 1 {
        let (_, z) = affine_null_direction(points, &active);
        let before = active.len();
        shift_along(&mut w, &mut active, &z);
        if active.len() == before {
            break;
        }
    }
    Ok(finish(points, &w, active))
}

/// Reduces until the surviving points are affinely independent.
///
/// A direction counts as an affine dependence when its relative singular
/// value is at most `tol`. The result never has more than `n + 1` points and
/// is usually smaller when the points span a low-dimensional affine set.
pub fn caratheodory_reduce_minimal(
    points: &[Vec<f64>],
    weights: &[f64],
    tol: f64,
) -> Result<Reduction> {
    let n = check_input(points, weights)?;
    let mut w = weights.to_vec();
    let mut active: Vec<usize> = (0..points.len()).collect();
    while active.len() > 1 {
        let (rel, z) = affine_null_direction(points, &active);
        if active.len() <= n + 1 && rel > tol {
            break;
        }
        let before = active.len();
        shift_along(&mut w, &mut active, &z);
        if active.len() == before {
            break;
        }
    }
    Ok(finish(points, &w, active))
}
