//! Compressive-sensing DOA baseline: orthogonal matching pursuit over the steering
//! dictionary restricted to the active elements.

use nalgebra::{DMatrix, DVector};

use crate::array_model::ArrayGeometry;
use crate::data_gen::AngleGrid;
use crate::{Error, Result, C64};

/// Diagonal entries of R below this fraction of the largest one mark a rank-deficient fit.
const RANK_TOL: f64 = 1e-10;
/// Residuals below this fraction of `‖y‖` are treated as exact fits.
const EXACT_FIT: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct OmpResult {
    /// Selected grid indices in selection order.
    pub indices: Vec<usize>,
    /// Least-squares amplitudes of the unnormalized steering vectors, aligned with `indices`.
    pub coeffs: Vec<C64>,
    /// `‖r_t‖` for t = 0 (the input) through the last fit.
    pub residual_norms: Vec<f64>,
    /// Set when the last candidate atom made the fit rank deficient and was dropped.
    pub rank_deficient: bool,
}

/// Response of one element at position `d` (wavelengths) to a source at `theta_deg`.
fn element_response(d: f64, theta_deg: f64) -> C64 {
    C64::from_polar(1.0, 2.0 * std::f64::consts::PI * d * theta_deg.to_radians().sin())
}

/// Residual tolerance (relative to `‖y‖`) for a known SNR: `10^(-snr/20)`.
pub fn residual_tolerance_for_snr(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 20.0)
}

/// Greedy sparse recovery of `y` on the grid.
///
/// Each iteration picks the atom with the largest normalized correlation against the
/// residual and re-fits all selected atoms by least squares (QR). Stops after `k_max`
/// atoms, when the residual drops below `residual_tol * ‖y‖` (or is numerically zero),
/// or when a new atom would make the fit rank deficient.
pub fn omp_solve(
    y: &[C64],
    geometry: &ArrayGeometry,
    grid: &AngleGrid,
    k_max: usize,
    residual_tol: Option<f64>,
) -> Result<OmpResult> {
    grid.validate()?;
    if y.len() != geometry.len() {
        return Err(Error::shape(format!("snapshot length {} != array size {}", y.len(), geometry.len())));
    }
    if let Some(t) = residual_tol {
        if !(t >= 0.0) {
            return Err(Error::domain("residual tolerance must be non-negative"));
        }
    }
    let active: Vec<usize> = (0..geometry.len()).filter(|&i| geometry.mask()[i]).collect();
    let n_a = active.len();
    if n_a == 0 {
        return Err(Error::domain("no active elements"));
    }
    let positions: Vec<f64> = active.iter().map(|&i| geometry.positions()[i]).collect();
    let m = grid.len();
    let atoms = DMatrix::from_fn(n_a, m, |r, c| element_response(positions[r], grid.angle(c)));
    // every entry has unit modulus, so all masked columns share this norm
    let col_norm = (n_a as f64).sqrt();
    let y_a = DVector::from_iterator(n_a, active.iter().map(|&i| y[i]));
    let y_norm = y_a.norm();

    let mut out = OmpResult {
        indices: Vec::new(),
        coeffs: Vec::new(),
        residual_norms: vec![y_norm],
        rank_deficient: false,
    };
    if y_norm == 0.0 {
        return Ok(out);
    }
    let limit = k_max.min(m).min(n_a);
    let mut r = y_a.clone();
    let mut selected = vec![false; m];
    while out.indices.len() < limit {
        let r_norm = *out.residual_norms.last().expect("non-empty");
        if r_norm <= EXACT_FIT * y_norm {
            break;
        }
        if let Some(t) = residual_tol {
            if r_norm < t * y_norm {
                break;
            }
        }
        let mut best = None;
        let mut best_val = f64::NEG_INFINITY;
        for (c, _) in selected.iter().enumerate().filter(|(_, &s)| !s) {
            let v = atoms.column(c).dotc(&r).norm() / col_norm;
            if v > best_val {
                best_val = v;
                best = Some(c);
            }
        }
        let Some(idx) = best else { break };
        out.indices.push(idx);
        let sub = DMatrix::from_fn(n_a, out.indices.len(), |row, k| atoms[(row, out.indices[k])]);
        let qr = sub.clone().qr();
        let rmat = qr.r();
        let diag: Vec<f64> = (0..rmat.ncols()).map(|i| rmat[(i, i)].norm()).collect();
        let dmax = diag.iter().cloned().fold(0.0, f64::max);
        if diag.iter().any(|&d| d <= RANK_TOL * dmax) {
            out.indices.pop();
            out.rank_deficient = true;
            break;
        }
        selected[idx] = true;
        let qty = qr.q().adjoint() * &y_a;
        let coeffs = rmat
            .solve_upper_triangular(&qty)
            .ok_or_else(|| Error::NonFinite("OMP least squares".into()))?;
        r = &y_a - &sub * &coeffs;
        out.coeffs = coeffs.iter().copied().collect();
        out.residual_norms.push(r.norm());
    }
    Ok(out)
}

/// Binary label vector with ones at the selected indices.
pub fn omp_to_label(result: &OmpResult, m: usize) -> Result<Vec<bool>> {
    let mut out = vec![false; m];
    for &i in &result.indices {
        if i >= m {
            return Err(Error::shape(format!("index {i} outside grid of {m}")));
        }
        out[i] = true;
    }
    Ok(out)
}
