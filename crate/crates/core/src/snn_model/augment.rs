use rand::seq::index;
use rand::Rng;

use crate::array_model::SteeringDictionary;
use crate::{Error, Result, C64};

/// Entries with magnitude above this count as active when no mask is known.
pub const ACTIVE_THRESHOLD: f64 = 1e-9;

/// A masked snapshot together with its active element count.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedSignal {
    pub y: Vec<C64>,
    pub n_active: usize,
}

impl MaskedSignal {
    /// Wraps a snapshot whose mask is unknown, counting active elements by magnitude.
    pub fn detect(y: Vec<C64>) -> Result<Self> {
        let n_active = active_count(&y);
        if n_active == 0 {
            return Err(Error::domain("signal has no active elements"));
        }
        Ok(Self { y, n_active })
    }
}

/// Number of entries whose magnitude exceeds [`ACTIVE_THRESHOLD`].
pub fn active_count(y: &[C64]) -> usize {
    y.iter().filter(|v| v.norm() > ACTIVE_THRESHOLD).count()
}

/// Sparse augmentation: zeroes `k ~ U{0..=floor(max_sparsity * N)}` uniformly chosen
/// elements. Returns the masked signal, the number of remaining elements and the mask.
pub fn sa_layer<R: Rng + ?Sized>(
    y: &[C64],
    max_sparsity: f64,
    rng: &mut R,
) -> Result<(Vec<C64>, usize, Vec<bool>)> {
    if !(0.0..1.0).contains(&max_sparsity) {
        return Err(Error::domain("max sparsity must lie in [0, 1)"));
    }
    let n = y.len();
    if n == 0 {
        return Err(Error::domain("empty signal"));
    }
    // the epsilon keeps e.g. 0.3 * 10 from flooring to 2
    let k_max = ((max_sparsity * n as f64) + 1e-9).floor() as usize;
    let k_max = k_max.min(n - 1);
    let k = if k_max == 0 { 0 } else { rng.random_range(0..=k_max) };
    let mut mask = vec![true; n];
    if k > 0 {
        for i in index::sample(rng, n, k).iter() {
            mask[i] = false;
        }
    }
    let out = y
        .iter()
        .zip(&mask)
        .map(|(&v, &m)| if m { v } else { C64::new(0.0, 0.0) })
        .collect();
    Ok((out, n - k, mask))
}

/// `A^H y / N_active` over the grid dictionary built on the full array.
pub fn frequency_embedding(y: &[C64], dictionary: &SteeringDictionary, n_active: usize) -> Result<Vec<C64>> {
    if n_active == 0 {
        return Err(Error::domain("frequency embedding needs at least one active element"));
    }
    if y.len() != dictionary.n_elements() {
        return Err(Error::shape(format!(
            "signal length {} != dictionary elements {}",
            y.len(),
            dictionary.n_elements()
        )));
    }
    let inv = 1.0 / n_active as f64;
    Ok(dictionary.correlate(y).into_iter().map(|v| v * inv).collect())
}
