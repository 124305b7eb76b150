//! Reconstruction losses. The `Grid` versions are the reference definitions;
//! the `*_grad` versions work on f32 network outputs and also accumulate
//! the gradient with respect to the prediction.

use tfr_core::Grid;

use crate::error::{Error, Result};

fn same_shape(pred: &Grid, truth: &Grid) -> Result<()> {
    if pred.n() != truth.n() {
        return Err(Error::Shape(format!(
            "prediction is {0}×{0}, truth is {1}×{1}",
            pred.n(),
            truth.n()
        )));
    }
    Ok(())
}

/// Mean absolute deviation over every node.
pub fn field_loss(pred: &Grid, truth: &Grid) -> Result<f64> {
    same_shape(pred, truth)?;
    let sum: f64 = pred
        .values()
        .iter()
        .zip(truth.values())
        .map(|(p, t)| (p - t).abs())
        .sum();
    Ok(sum / pred.values().len() as f64)
}

/// Mismatch of absolute forward differences along both axes. Differences
/// that would step past the last row or column are left out; the sum is
/// still divided by H·W.
pub fn gradient_loss(pred: &Grid, truth: &Grid) -> Result<f64> {
    same_shape(pred, truth)?;
    let n = pred.n();
    if n < 2 {
        return Err(Error::Shape("gradient loss needs at least 2×2 nodes".into()));
    }
    let mut sum = 0.0;
    for r in 0..n {
        for c in 0..n {
            if r + 1 < n {
                let a = pred.get(r + 1, c) - pred.get(r, c);
                let b = truth.get(r + 1, c) - truth.get(r, c);
                sum += (a.abs() - b.abs()).abs();
            }
            if c + 1 < n {
                let a = pred.get(r, c + 1) - pred.get(r, c);
                let b = truth.get(r, c + 1) - truth.get(r, c);
                sum += (a.abs() - b.abs()).abs();
            }
        }
    }
    Ok(sum / (n * n) as f64)
}

pub fn total_loss(pred: &Grid, truth: &Grid, lambda_reg: f64) -> Result<f64> {
    if !(lambda_reg >= 0.0) {
        return Err(Error::Config(format!("lambda_reg must be ≥ 0, got {lambda_reg}")));
    }
    Ok(field_loss(pred, truth)? + lambda_reg * gradient_loss(pred, truth)?)
}

/// Mean absolute deviation over the patch cells.
pub fn patch_loss(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(Error::Shape(format!(
            "patch lengths {} and {} differ or are empty",
            pred.len(),
            truth.len()
        )));
    }
    let sum: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum();
    Ok(sum / pred.len() as f64)
}

fn sign(v: f64) -> f32 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Mean |pred − truth| over a flat slice, adding `weight`·∂loss/∂pred to `grad`.
pub fn l1_grad(pred: &[f32], truth: &[f32], weight: f32, grad: &mut [f32]) -> f64 {
    let inv = 1.0 / pred.len() as f64;
    let mut sum = 0.0;
    for ((p, t), g) in pred.iter().zip(truth).zip(grad.iter_mut()) {
        let d = (*p - *t) as f64;
        sum += d.abs();
        *g += weight * sign(d) * inv as f32;
    }
    sum * inv
}

/// [`gradient_loss`] on one h×w plane, adding `weight`·∂loss/∂pred to `grad`.
pub fn gradient_loss_grad(
    pred: &[f32],
    truth: &[f32],
    h: usize,
    w: usize,
    weight: f32,
    grad: &mut [f32],
) -> f64 {
    let scale = 1.0 / (h * w) as f64;
    let gs = weight * scale as f32;
    let mut sum = 0.0;
    let mut term = |i: usize, j: usize, grad: &mut [f32]| {
        let a = (pred[j] - pred[i]) as f64;
        let b = (truth[j] - truth[i]) as f64;
        let e = a.abs() - b.abs();
        sum += e.abs();
        let s = gs * sign(e) * sign(a);
        grad[j] += s;
        grad[i] -= s;
    };
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            if r + 1 < h {
                term(i, i + w, grad);
            }
            if c + 1 < w {
                term(i, i + 1, grad);
            }
        }
    }
    sum * scale
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(v: &[f64]) -> Grid {
        let n = (v.len() as f64).sqrt() as usize;
        Grid::from_vec(n, v.to_vec()).unwrap()
    }

    #[test]
    fn flat_and_grid_versions_agree() {
        let p = [0.3, -1.2, 0.8, 2.0, 0.1, 0.0, -0.4, 1.1, 0.9];
        let t = [0.0, -1.0, 1.0, 1.5, 0.2, 0.3, -0.1, 1.0, 0.2];
        let pf: Vec<f32> = p.iter().map(|&v| v as f32).collect();
        let tf: Vec<f32> = t.iter().map(|&v| v as f32).collect();
        let mut grad = vec![0.0; 9];
        let a = gradient_loss_grad(&pf, &tf, 3, 3, 1.0, &mut grad);
        let b = gradient_loss(&g(&p), &g(&t)).unwrap();
        assert!((a - b).abs() < 1e-6);
        let a = l1_grad(&pf, &tf, 1.0, &mut grad);
        assert!((a - field_loss(&g(&p), &g(&t)).unwrap()).abs() < 1e-6);
    }

    #[test]
    fn negative_weight_is_rejected() {
        let z = Grid::zeros(2);
        assert!(total_loss(&z, &z, -0.1).is_err());
    }
}
