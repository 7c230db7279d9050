//! Central finite-difference gradient checking in double precision.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A scalar-valued computation over a flat parameter vector with an analytic gradient.
pub trait GradCheckable {
    fn params(&self) -> Vec<f64>;
    fn set_params(&mut self, p: &[f64]);
    fn loss(&mut self) -> f64;
    fn analytic_grad(&mut self) -> Vec<f64>;
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    /// Finite-difference step.
    pub h: f64,
    pub tolerance: f64,
    /// Denominator floor for the relative error, so near-zero gradients are
    /// compared in absolute terms.
    pub floor: f64,
    /// Check only this many randomly chosen coordinates (all when `None`).
    pub max_coords: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            h: 1e-5,
            tolerance: 1e-4,
            floor: 1e-5,
            max_coords: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
    pub tolerance: f64,
    pub passed: bool,
}

/// Compares the analytic gradient against `(L(p + h e_i) - L(p - h e_i)) / 2h`.
///
/// Relative error per coordinate is `|a - n| / max(|a|, |n|, floor)`; the report
/// carries the maximum and passes iff it is below the tolerance.
pub fn grad_check<M: GradCheckable + ?Sized>(model: &mut M, opts: GradCheckOptions) -> GradCheckReport {
    let base = model.params();
    let analytic = model.analytic_grad();
    assert_eq!(analytic.len(), base.len(), "gradient length mismatch");
    let coords: Vec<usize> = match opts.max_coords {
        Some(k) if k < base.len() => {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            let mut c = index::sample(&mut rng, base.len(), k).into_vec();
            c.sort_unstable();
            c
        }
        _ => (0..base.len()).collect(),
    };
    let mut p = base.clone();
    let mut worst = (0.0f64, 0usize, 0.0f64, 0.0f64);
    for &i in &coords {
        p[i] = base[i] + opts.h;
        model.set_params(&p);
        let up = model.loss();
        p[i] = base[i] - opts.h;
        model.set_params(&p);
        let down = model.loss();
        p[i] = base[i];
        let numeric = (up - down) / (2.0 * opts.h);
        let a = analytic[i];
        let denom = a.abs().max(numeric.abs()).max(opts.floor);
        let rel = (a - numeric).abs() / denom;
        if rel > worst.0 || rel.is_nan() {
            worst = (rel, i, a, numeric);
        }
    }
    model.set_params(&base);
    GradCheckReport {
        max_rel_error: worst.0,
        worst_index: worst.1,
        analytic: worst.2,
        numeric: worst.3,
        checked: coords.len(),
        tolerance: opts.tolerance,
        passed: worst.0 < opts.tolerance,
    }
}
