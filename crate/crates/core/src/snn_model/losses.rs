use ndarray::{Array2, ArrayView2, Zip};

use crate::nn_core::Real;
use crate::{Error, Result};

/// Clamp applied to predictions before taking logarithms.
pub const BCE_EPS: f64 = 1e-7;

/// Per-term breakdown of a training loss.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossParts {
    pub total: f64,
    /// Mean of the two branch BCE values.
    pub bce: f64,
    pub contrastive: f64,
}

/// Contrastive loss for one pair: `z g² + (1 - z) max(0, m - g)²`, `g = ‖v1 - v2‖`.
pub fn contrastive_pair(v1: &[f64], v2: &[f64], z: bool, margin: f64) -> f64 {
    let g = v1
        .iter()
        .zip(v2)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    if z {
        g * g
    } else {
        (margin - g).max(0.0).powi(2)
    }
}

/// Batch-mean contrastive loss and its gradients with respect to both embeddings.
///
/// For a dissimilar pair at zero distance the gradient direction is undefined; it is
/// taken as zero.
pub fn contrastive_loss<F: Real>(
    v1: ArrayView2<F>,
    v2: ArrayView2<F>,
    z: &[bool],
    margin: f64,
) -> Result<(F, Array2<F>, Array2<F>)> {
    if v1.dim() != v2.dim() || v1.nrows() != z.len() {
        return Err(Error::shape("contrastive loss: mismatched pair shapes"));
    }
    let p = z.len();
    if p == 0 {
        return Ok((F::zero(), v1.to_owned(), v2.to_owned()));
    }
    let inv_p = F::of(1.0 / p as f64);
    let m = F::of(margin);
    let two = F::of(2.0);
    let mut loss = F::zero();
    let mut d1 = Array2::zeros(v1.dim());
    for (j, &similar) in z.iter().enumerate() {
        let diff = &v1.row(j) - &v2.row(j);
        let g = diff.iter().map(|&d| d * d).sum::<F>().sqrt();
        let coeff = if similar {
            loss += g * g;
            two
        } else if g < m {
            loss += (m - g) * (m - g);
            if g > F::zero() {
                -two * (m - g) / g
            } else {
                F::zero()
            }
        } else {
            F::zero()
        };
        d1.row_mut(j).assign(&(diff * (coeff * inv_p)));
    }
    let d2 = d1.mapv(|v| -v);
    Ok((loss * inv_p, d1, d2))
}

/// Mean binary cross-entropy over all entries and its gradient with respect to `pred`.
///
/// Predictions are clamped to `[BCE_EPS, 1 - BCE_EPS]`; clamped entries pass no gradient.
pub fn bce_loss<F: Real>(pred: ArrayView2<F>, gt: ArrayView2<F>) -> Result<(F, Array2<F>)> {
    if pred.dim() != gt.dim() {
        return Err(Error::shape("bce: prediction and target shapes differ"));
    }
    let count = pred.len().max(1);
    let inv = F::of(1.0 / count as f64);
    let lo = F::of(BCE_EPS);
    let hi = F::one() - lo;
    let mut loss = F::zero();
    let mut grad = Array2::zeros(pred.dim());
    Zip::from(&mut grad).and(pred).and(gt).for_each(|d, &p, &t| {
        let pc = p.max(lo).min(hi);
        loss -= t * pc.ln() + (F::one() - t) * (F::one() - pc).ln();
        if p > lo && p < hi {
            *d = -(t / pc - (F::one() - t) / (F::one() - pc)) * inv;
        }
    });
    Ok((loss * inv, grad))
}
