//! Narrowband far-field signal model for linear arrays.
//!
//! Positions are expressed in wavelengths relative to the first element, angles are
//! degrees at the API boundary. Masked (failed or removed) elements are kept in every
//! vector as exact complex zeros so lengths always equal the full array size.

use std::f64::consts::PI;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result, C64};

/// Element layout of a linear array plus the set of elements that are active.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    positions: Vec<f64>,
    mask: Vec<bool>,
}

impl ArrayGeometry {
    pub fn new(positions: Vec<f64>, mask: Vec<bool>) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::domain("array needs at least one element"));
        }
        if positions[0] != 0.0 {
            return Err(Error::domain("first element position must be 0"));
        }
        if positions.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::domain("element positions must be strictly increasing"));
        }
        if mask.len() != positions.len() {
            return Err(Error::shape(format!(
                "mask length {} != {} elements",
                mask.len(),
                positions.len()
            )));
        }
        if !mask.iter().any(|&m| m) {
            return Err(Error::domain("at least one element must be active"));
        }
        Ok(Self { positions, mask })
    }

    /// Fully populated uniform linear array with the given spacing (in wavelengths).
    pub fn ula(n: usize, spacing: f64) -> Result<Self> {
        let positions = (0..n).map(|i| i as f64 * spacing).collect();
        Self::new(positions, vec![true; n])
    }

    /// Half-wavelength ULA, the reference geometry.
    pub fn half_wavelength_ula(n: usize) -> Result<Self> {
        Self::ula(n, 0.5)
    }

    /// Same positions, different activity mask.
    pub fn with_mask(&self, mask: Vec<bool>) -> Result<Self> {
        Self::new(self.positions.clone(), mask)
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn n_active(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// `1 - N_active / N_total`.
    pub fn sparsity(&self) -> f64 {
        sparsity(self)
    }
}

/// Far-field sources: directions in degrees and complex reflection coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSet {
    doas: Vec<f64>,
    coeffs: Vec<C64>,
}

impl SourceSet {
    pub fn new(doas: Vec<f64>, coeffs: Vec<C64>) -> Result<Self> {
        if doas.is_empty() {
            return Err(Error::domain("source set needs at least one source"));
        }
        if doas.len() != coeffs.len() {
            return Err(Error::shape(format!(
                "{} directions but {} coefficients",
                doas.len(),
                coeffs.len()
            )));
        }
        if let Some(t) = doas.iter().find(|t| !(-90.0..=90.0).contains(*t)) {
            return Err(Error::domain(format!("direction {t} outside [-90, 90] degrees")));
        }
        for (i, a) in doas.iter().enumerate() {
            if doas[i + 1..].contains(a) {
                return Err(Error::domain(format!("duplicate direction {a}")));
            }
        }
        if coeffs.iter().any(|c| !(c.norm() > 0.0) || !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::domain("coefficients must be finite with non-zero magnitude"));
        }
        Ok(Self { doas, coeffs })
    }

    pub fn doas(&self) -> &[f64] {
        &self.doas
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }

    pub fn len(&self) -> usize {
        self.doas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doas.is_empty()
    }
}

/// Signal-to-noise setting for synthesis. `Noiseless` yields the exact noise-free sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Snr {
    Db(f64),
    Noiseless,
}

impl Snr {
    /// Per-element complex noise variance relative to unit reference amplitude.
    pub fn noise_variance(self) -> f64 {
        match self {
            Snr::Db(db) => 10f64.powf(-db / 10.0),
            Snr::Noiseless => 0.0,
        }
    }

    /// dB value, `+inf` for noiseless.
    pub fn as_db(self) -> f64 {
        match self {
            Snr::Db(db) => db,
            Snr::Noiseless => f64::INFINITY,
        }
    }

    pub fn from_db(db: f64) -> Self {
        if db == f64::INFINITY {
            Snr::Noiseless
        } else {
            Snr::Db(db)
        }
    }
}

/// One received array vector with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub y: Vec<C64>,
    pub geometry: ArrayGeometry,
    pub sources: SourceSet,
    pub snr_db: f64,
    pub noise_seed: u64,
}

impl Snapshot {
    pub fn snr(&self) -> Snr {
        Snr::from_db(self.snr_db)
    }
}

fn check_angle(theta_deg: f64) -> Result<()> {
    if !(-90.0..=90.0).contains(&theta_deg) {
        return Err(Error::domain(format!(
            "angle {theta_deg} outside [-90, 90] degrees"
        )));
    }
    Ok(())
}

/// Phase response `exp(j 2π d_n sin θ)` on every element of the geometry, masked or not.
pub fn steering_vector(geometry: &ArrayGeometry, theta_deg: f64) -> Result<Vec<C64>> {
    check_angle(theta_deg)?;
    Ok(steering_unchecked(geometry.positions(), theta_deg))
}

pub(crate) fn steering_unchecked(positions: &[f64], theta_deg: f64) -> Vec<C64> {
    let s = theta_deg.to_radians().sin();
    positions
        .iter()
        .map(|&d| C64::from_polar(1.0, 2.0 * PI * d * s))
        .collect()
}

/// Steering vectors for a list of angles over the full geometry, one row per angle.
#[derive(Debug, Clone)]
pub struct SteeringDictionary {
    angles: Vec<f64>,
    n_elements: usize,
    // row-major: atoms[m * n_elements + n]
    atoms: Vec<C64>,
}

impl SteeringDictionary {
    pub fn new(positions: &[f64], angles: &[f64]) -> Result<Self> {
        for &a in angles {
            check_angle(a)?;
        }
        let atoms = angles
            .iter()
            .flat_map(|&a| steering_unchecked(positions, a))
            .collect();
        Ok(Self {
            angles: angles.to_vec(),
            n_elements: positions.len(),
            atoms,
        })
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn n_atoms(&self) -> usize {
        self.angles.len()
    }

    pub fn n_elements(&self) -> usize {
        self.n_elements
    }

    pub fn atom(&self, m: usize) -> &[C64] {
        &self.atoms[m * self.n_elements..(m + 1) * self.n_elements]
    }

    /// `A^H y`: inner product of every atom with `y`.
    pub fn correlate(&self, y: &[C64]) -> Vec<C64> {
        debug_assert_eq!(y.len(), self.n_elements);
        (0..self.n_atoms())
            .map(|m| {
                self.atom(m)
                    .iter()
                    .zip(y)
                    .fold(C64::new(0.0, 0.0), |acc, (a, v)| acc + a.conj() * v)
            })
            .collect()
    }
}

/// Fraction of removed elements, `1 - N_SLA / N_ULA`.
pub fn sparsity(geometry: &ArrayGeometry) -> f64 {
    1.0 - geometry.n_active() as f64 / geometry.len() as f64
}

/// Elementwise product with a binary mask; masked entries become exact zeros.
pub fn apply_mask(y: &[C64], mask: &[bool]) -> Result<Vec<C64>> {
    if y.len() != mask.len() {
        return Err(Error::shape(format!(
            "signal length {} != mask length {}",
            y.len(),
            mask.len()
        )));
    }
    Ok(y.iter()
        .zip(mask)
        .map(|(&v, &m)| if m { v } else { C64::new(0.0, 0.0) })
        .collect())
}

/// Draws `y = Σ s_k a(θ_k) + n` on the active elements of `geometry`.
///
/// A noise seed is drawn from `rng` and recorded in the snapshot; the noise itself
/// comes from a generator seeded with it, so any snapshot can be regenerated.
pub fn synthesize_snapshot<R: RngCore + ?Sized>(
    geometry: &ArrayGeometry,
    sources: &SourceSet,
    snr: Snr,
    rng: &mut R,
) -> Result<Snapshot> {
    if let Snr::Db(db) = snr {
        if !db.is_finite() {
            return Err(Error::domain("snr must be finite (use Snr::Noiseless)"));
        }
    }
    let noise_seed = rng.next_u64();
    let y = synthesize_with_seed(geometry, sources, snr, noise_seed)?;
    Ok(Snapshot {
        y,
        geometry: geometry.clone(),
        sources: sources.clone(),
        snr_db: snr.as_db(),
        noise_seed,
    })
}

/// Deterministic synthesis from an explicit noise seed.
pub fn synthesize_with_seed(
    geometry: &ArrayGeometry,
    sources: &SourceSet,
    snr: Snr,
    noise_seed: u64,
) -> Result<Vec<C64>> {
    for &t in sources.doas() {
        check_angle(t)?;
    }
    let n = geometry.len();
    let mut y = vec![C64::new(0.0, 0.0); n];
    for (&theta, &s) in sources.doas().iter().zip(sources.coeffs()) {
        let a = steering_unchecked(geometry.positions(), theta);
        for (yi, ai) in y.iter_mut().zip(&a) {
            *yi += s * ai;
        }
    }
    let var = snr.noise_variance();
    if var > 0.0 {
        let mut noise_rng = ChaCha8Rng::seed_from_u64(noise_seed);
        add_complex_noise(&mut y, var, &mut noise_rng);
    }
    apply_mask(&y, geometry.mask())
}

/// Adds i.i.d. circularly-symmetric Gaussian noise of total variance `var` per entry.
pub fn add_complex_noise<R: Rng + ?Sized>(y: &mut [C64], var: f64, rng: &mut R) {
    let normal = Normal::new(0.0, (var / 2.0).sqrt()).expect("finite non-negative std");
    for v in y.iter_mut() {
        let re = normal.sample(rng);
        let im = normal.sample(rng);
        *v += C64::new(re, im);
    }
}

/// Conventional beamformer output `|a_masked(θ)^H y| / N_SLA` over `grid`.
pub fn beamform_spectrum(snapshot: &Snapshot, grid: &[f64]) -> Result<Vec<f64>> {
    if grid.is_empty() {
        return Err(Error::domain("beamforming grid is empty"));
    }
    let geometry = &snapshot.geometry;
    let n_active = geometry.n_active();
    if n_active == 0 {
        return Err(Error::domain("no active elements"));
    }
    if snapshot.y.len() != geometry.len() {
        return Err(Error::shape("snapshot length differs from geometry"));
    }
    grid.iter()
        .map(|&theta| {
            check_angle(theta)?;
            let a = steering_unchecked(geometry.positions(), theta);
            let acc = a
                .iter()
                .zip(&snapshot.y)
                .zip(geometry.mask())
                .filter(|(_, &m)| m)
                .fold(C64::new(0.0, 0.0), |acc, ((a, y), _)| acc + a.conj() * y);
            Ok(acc.norm() / n_active as f64)
        })
        .collect()
}
