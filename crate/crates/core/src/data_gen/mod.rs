//! Training and test data: the angle grid, DOA-combination enumeration, ground-truth
//! labels, random sources, Siamese pairs and the binary dataset format.

mod dataset_file;

use std::f64::consts::TAU;

use rand::seq::index;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::array_model::{apply_mask, synthesize_snapshot, ArrayGeometry, Snapshot, Snr, SourceSet};
use crate::{par, Error, Result, C64};

pub use dataset_file::{read_dataset, write_dataset, DatasetHeader, DatasetReader, FORMAT_VERSION};

/// Uniform grid of candidate directions in degrees, inclusive of both ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AngleGrid {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl Default for AngleGrid {
    fn default() -> Self {
        Self {
            lo: -60.0,
            hi: 60.0,
            step: 1.0,
        }
    }
}

impl AngleGrid {
    pub fn new(lo: f64, hi: f64, step: f64) -> Result<Self> {
        let g = Self { lo, hi, step };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0) || !(self.hi >= self.lo) {
            return Err(Error::domain("grid needs step > 0 and hi >= lo"));
        }
        if self.lo < -90.0 || self.hi > 90.0 {
            return Err(Error::domain("grid must lie within [-90, 90] degrees"));
        }
        let span = (self.hi - self.lo) / self.step;
        if (span - span.round()).abs() > 1e-9 {
            return Err(Error::domain("grid span is not a whole number of steps"));
        }
        Ok(())
    }

    /// Number of grid points `M`.
    pub fn len(&self) -> usize {
        ((self.hi - self.lo) / self.step).round() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn angle(&self, i: usize) -> f64 {
        self.lo + i as f64 * self.step
    }

    pub fn angles(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.angle(i)).collect()
    }

    /// Index of an on-grid angle, `None` when `theta` is not a grid point.
    pub fn index_of(&self, theta: f64) -> Option<usize> {
        let r = ((theta - self.lo) / self.step).round();
        if r < 0.0 || r as usize >= self.len() {
            return None;
        }
        let i = r as usize;
        ((self.angle(i) - theta).abs() <= 1e-9).then_some(i)
    }
}

/// Number of distinct label vectors with 1..=k_max ones among `m` positions.
pub fn count_label_combinations(m: usize, k_max: usize) -> Result<u128> {
    if k_max < 1 || k_max > m {
        return Err(Error::domain(format!("need 1 <= k_max <= M, got k_max={k_max}, M={m}")));
    }
    let overflow = || Error::domain("combination count overflows u128");
    let mut total: u128 = 0;
    let mut binom: u128 = 1;
    for k in 1..=k_max {
        // C(m, k) = C(m, k-1) * (m-k+1) / k, exact at every step
        binom = binom
            .checked_mul((m - k + 1) as u128)
            .ok_or_else(overflow)?
            / k as u128;
        total = total.checked_add(binom).ok_or_else(overflow)?;
    }
    Ok(total)
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i as u128 + 1))
}

/// Every subset of `0..m` with size 1..=k_max, ordered by size then lexicographically.
#[derive(Debug, Clone)]
pub struct Combinations {
    m: usize,
    k_max: usize,
    current: Vec<usize>,
    done: bool,
}

impl Combinations {
    pub fn new(m: usize, k_max: usize) -> Self {
        Self {
            m,
            k_max,
            current: vec![0],
            done: m == 0 || k_max == 0,
        }
    }

    fn advance(&mut self) {
        let k = self.current.len();
        // rightmost position that can still move right
        let mut i = k;
        while i > 0 {
            i -= 1;
            if self.current[i] < self.m - k + i {
                self.current[i] += 1;
                for j in i + 1..k {
                    self.current[j] = self.current[j - 1] + 1;
                }
                return;
            }
        }
        if k < self.k_max && k < self.m {
            self.current = (0..k + 1).collect();
        } else {
            self.done = true;
        }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        let out = self.current.clone();
        self.advance();
        Some(out)
    }
}

/// Combination at position `rank` of the [`Combinations`] order.
pub fn unrank_combination(m: usize, k_max: usize, mut rank: u128) -> Result<Vec<usize>> {
    for k in 1..=k_max.min(m) {
        let count = binomial(m, k);
        if rank < count {
            // lexicographic unranking within size k
            let mut out = Vec::with_capacity(k);
            let mut start = 0;
            for slot in 0..k {
                let mut v = start;
                loop {
                    let below = binomial(m - v - 1, k - slot - 1);
                    if rank < below {
                        break;
                    }
                    rank -= below;
                    v += 1;
                }
                out.push(v);
                start = v + 1;
            }
            return Ok(out);
        }
        rank -= count;
    }
    Err(Error::domain("combination rank out of range"))
}

/// Grid-index combinations of size 1..=k_max.
///
/// Without `limit` this is the full enumeration. With a limit, `limit` distinct
/// combinations are drawn uniformly without replacement (all of them, shuffled, when
/// the limit exceeds the total).
pub fn enumerate_combinations<R: Rng + ?Sized>(
    grid: &AngleGrid,
    k_max: usize,
    limit: Option<usize>,
    rng: &mut R,
) -> Result<Box<dyn Iterator<Item = Vec<usize>>>> {
    let m = grid.len();
    let total = count_label_combinations(m, k_max)?;
    match limit {
        None => Ok(Box::new(Combinations::new(m, k_max))),
        Some(limit) => {
            let total = usize::try_from(total)
                .map_err(|_| Error::domain("combination space too large to sample"))?;
            let picked = index::sample(rng, total, limit.min(total)).into_vec();
            Ok(Box::new(picked.into_iter().map(move |r| {
                unrank_combination(m, k_max, r as u128).expect("rank within total")
            })))
        }
    }
}

/// `count` combinations drawn as successive shuffled passes over the full space.
///
/// Within one pass there are no repeats; when `count` exceeds the number of distinct
/// combinations further passes are appended, so every combination appears either
/// `floor` or `ceil` of `count / total` times.
pub fn sample_combinations<R: Rng + ?Sized>(
    grid: &AngleGrid,
    k_max: usize,
    count: usize,
    rng: &mut R,
) -> Result<Vec<Vec<usize>>> {
    let m = grid.len();
    let total = usize::try_from(count_label_combinations(m, k_max)?)
        .map_err(|_| Error::domain("combination space too large to sample"))?;
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let take = (count - out.len()).min(total);
        for r in index::sample(rng, total, take).into_iter() {
            out.push(unrank_combination(m, k_max, r as u128)?);
        }
    }
    Ok(out)
}

/// Ground-truth vector: one at every grid point occupied by a source.
pub fn label(doas: &[f64], grid: &AngleGrid) -> Result<Vec<bool>> {
    if doas.is_empty() {
        return Err(Error::domain("label needs at least one direction"));
    }
    let mut gt = vec![false; grid.len()];
    for &t in doas {
        let i = grid
            .index_of(t)
            .ok_or_else(|| Error::domain(format!("direction {t} is not on the grid")))?;
        gt[i] = true;
    }
    Ok(gt)
}

/// Random complex coefficients, magnitude uniform in `magnitude`, phase uniform in [0, 2π).
pub fn sample_sources<R: Rng + ?Sized>(
    doas: &[f64],
    magnitude: (f64, f64),
    rng: &mut R,
) -> Result<SourceSet> {
    let (lo, hi) = magnitude;
    if !(lo > 0.0 && lo <= hi) {
        return Err(Error::domain("magnitude range must satisfy 0 < lo <= hi"));
    }
    let coeffs = doas
        .iter()
        .map(|_| {
            let mag = if lo == hi { lo } else { rng.random_range(lo..=hi) };
            let phase = rng.random_range(0.0..TAU);
            C64::from_polar(mag, phase)
        })
        .collect();
    SourceSet::new(doas.to_vec(), coeffs)
}

/// Recipe for a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetSpec {
    pub grid: AngleGrid,
    pub n_elements: usize,
    pub element_spacing: f64,
    pub k_max: usize,
    pub snr_db: (f64, f64),
    pub magnitude: (f64, f64),
    pub signals_per_combination: usize,
    /// Number of combinations to draw; `None` means the full enumeration.
    pub combinations: Option<usize>,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            grid: AngleGrid::default(),
            n_elements: 20,
            element_spacing: 0.5,
            k_max: 3,
            snr_db: (0.0, 30.0),
            magnitude: (0.5, 1.0),
            signals_per_combination: 50,
            combinations: None,
            seed: 0,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if self.k_max < 1 || self.k_max > self.grid.len() {
            return Err(Error::domain("k_max must be in 1..=M"));
        }
        if self.n_elements < 1 {
            return Err(Error::domain("need at least one element"));
        }
        if !(self.element_spacing > 0.0) {
            return Err(Error::domain("element spacing must be positive"));
        }
        if !(self.snr_db.0 <= self.snr_db.1) || !self.snr_db.0.is_finite() || !self.snr_db.1.is_finite() {
            return Err(Error::domain("snr range must be finite with lo <= hi"));
        }
        if !(self.magnitude.0 > 0.0 && self.magnitude.0 <= self.magnitude.1) {
            return Err(Error::domain("magnitude range must satisfy 0 < lo <= hi"));
        }
        if self.signals_per_combination < 1 {
            return Err(Error::domain("need at least one signal per combination"));
        }
        Ok(())
    }

    pub fn geometry(&self) -> Result<ArrayGeometry> {
        ArrayGeometry::ula(self.n_elements, self.element_spacing)
    }

    /// Distinct label combinations in the full space.
    pub fn total_combinations(&self) -> Result<u128> {
        count_label_combinations(self.grid.len(), self.k_max)
    }

    /// Combinations the generator will draw.
    pub fn planned_combinations(&self) -> Result<u128> {
        Ok(match self.combinations {
            Some(c) => c as u128,
            None => self.total_combinations()?,
        })
    }

    pub fn planned_records(&self) -> Result<u128> {
        Ok(self.planned_combinations()? * self.signals_per_combination as u128)
    }

    fn draw_snr<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let (lo, hi) = self.snr_db;
        if lo == hi {
            lo
        } else {
            rng.random_range(lo..=hi)
        }
    }
}

/// A snapshot with its ground-truth label vector.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    pub snapshot: Snapshot,
    pub gt: Vec<bool>,
}

impl LabeledExample {
    /// Rounds every stored real to `f32`, the precision of the dataset file.
    pub fn quantized(mut self) -> Self {
        let q = |x: f64| x as f32 as f64;
        for v in &mut self.snapshot.y {
            *v = C64::new(q(v.re), q(v.im));
        }
        self.snapshot.snr_db = q(self.snapshot.snr_db);
        let doas = self.snapshot.sources.doas().iter().map(|&t| q(t)).collect();
        let coeffs = self
            .snapshot
            .sources
            .coeffs()
            .iter()
            .map(|c| C64::new(q(c.re), q(c.im)))
            .collect();
        self.snapshot.sources = SourceSet::new(doas, coeffs).expect("rounding keeps sources valid");
        self
    }

    pub fn n_sources(&self) -> usize {
        self.gt.iter().filter(|&&b| b).count()
    }
}

/// Two labeled examples and their similarity bit.
#[derive(Debug, Clone, PartialEq)]
pub struct PairExample {
    pub a: LabeledExample,
    pub b: LabeledExample,
    pub z: bool,
}

impl PairExample {
    pub fn swapped(self) -> Self {
        Self {
            a: self.b,
            b: self.a,
            z: self.z,
        }
    }
}

/// Derives an independent generator for work item `index` of a seeded job.
pub fn item_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index.wrapping_add(1));
    rng
}

/// Synthesizes one full-array labeled example for the given grid-index combination.
pub fn synthesize_example<R: RngCore + ?Sized>(
    spec: &DatasetSpec,
    geometry: &ArrayGeometry,
    combo: &[usize],
    rng: &mut R,
) -> Result<LabeledExample> {
    let doas: Vec<f64> = combo.iter().map(|&i| spec.grid.angle(i)).collect();
    let sources = sample_sources(&doas, spec.magnitude, rng)?;
    let snr = spec.draw_snr(rng);
    let snapshot = synthesize_snapshot(geometry, &sources, Snr::Db(snr), rng)?;
    let gt = label(&doas, &spec.grid)?;
    Ok(LabeledExample { snapshot, gt }.quantized())
}

/// Combinations the generator draws for `spec`, in record order.
pub fn dataset_combinations(spec: &DatasetSpec) -> Result<Vec<Vec<usize>>> {
    let mut rng = item_rng(spec.seed, u64::MAX - 1);
    match spec.combinations {
        Some(c) => sample_combinations(&spec.grid, spec.k_max, c, &mut rng),
        None => Ok(Combinations::new(spec.grid.len(), spec.k_max).collect()),
    }
}

/// Generates the dataset described by `spec`.
///
/// Records are grouped by combination: `signals_per_combination` consecutive records
/// share one DOA set. Each combination owns a generator derived from (seed, index), so
/// the output does not depend on the number of worker threads.
pub fn generate_dataset(spec: &DatasetSpec) -> Result<Vec<LabeledExample>> {
    let mut out = Vec::new();
    for block in generate_blocks(spec, 4096)? {
        out.extend(block?);
    }
    Ok(out)
}

/// Lazy form of [`generate_dataset`] yielding `block` combinations' records at a time.
pub fn generate_blocks(
    spec: &DatasetSpec,
    block: usize,
) -> Result<impl Iterator<Item = Result<Vec<LabeledExample>>> + '_> {
    spec.validate()?;
    let geometry = spec.geometry()?;
    let combos = dataset_combinations(spec)?;
    let block = block.max(1);
    let n_blocks = combos.len().div_ceil(block);
    let per = spec.signals_per_combination;
    Ok((0..n_blocks).map(move |b| {
        let lo = b * block;
        let hi = (lo + block).min(combos.len());
        let chunks = par::map_range(hi - lo, |j| {
            let i = lo + j;
            let mut rng = item_rng(spec.seed, i as u64);
            (0..per)
                .map(|_| synthesize_example(spec, &geometry, &combos[i], &mut rng))
                .collect::<Result<Vec<_>>>()
        });
        let mut out = Vec::with_capacity((hi - lo) * per);
        for c in chunks {
            out.extend(c?);
        }
        Ok(out)
    }))
}

/// A labeled example observed through a fixed element mask.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedExample {
    pub example: LabeledExample,
    pub mask: Vec<bool>,
    /// The snapshot with masked elements set to exact zeros.
    pub y: Vec<C64>,
}

impl MaskedExample {
    pub fn n_active(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// Mask with exactly `zeroed` of `n` elements switched off, chosen uniformly.
pub fn random_mask<R: Rng + ?Sized>(n: usize, zeroed: usize, rng: &mut R) -> Result<Vec<bool>> {
    if zeroed >= n {
        return Err(Error::domain(format!("cannot zero {zeroed} of {n} elements")));
    }
    let mut mask = vec![true; n];
    for i in index::sample(rng, n, zeroed).iter() {
        mask[i] = false;
    }
    Ok(mask)
}

/// Applies an independent seeded mask with `zeroed` dead elements to every example.
pub fn mask_examples(examples: &[LabeledExample], zeroed: usize, seed: u64) -> Result<Vec<MaskedExample>> {
    let out = par::map_range(examples.len(), |i| -> Result<MaskedExample> {
        let ex = &examples[i];
        let mut rng = item_rng(seed, i as u64);
        let mask = random_mask(ex.snapshot.y.len(), zeroed, &mut rng)?;
        let y = apply_mask(&ex.snapshot.y, &mask)?;
        Ok(MaskedExample {
            example: ex.clone(),
            mask,
            y,
        })
    });
    out.into_iter().collect()
}

fn random_sized_combination<R: Rng + ?Sized>(m: usize, k_max: usize, rng: &mut R) -> Vec<usize> {
    let k = rng.random_range(1..=k_max);
    let mut c = index::sample(rng, m, k).into_vec();
    c.sort_unstable();
    c
}

/// Held-out full-array signals: source count uniform in `1..=k_max`, DOAs uniform
/// among grid points, amplitudes and SNR drawn as in `spec`.
pub fn test_examples(spec: &DatasetSpec, count: usize, seed: u64) -> Result<Vec<LabeledExample>> {
    spec.validate()?;
    let geometry = spec.geometry()?;
    let m = spec.grid.len();
    let out = par::map_range(count, |i| {
        let mut rng = item_rng(seed, i as u64);
        let combo = random_sized_combination(m, spec.k_max, &mut rng);
        synthesize_example(spec, &geometry, &combo, &mut rng)
    });
    out.into_iter().collect()
}

/// `classes` distinct DOA combinations with `per_class` signals each (fresh
/// coefficients, SNR and noise per signal). Returns examples with their class ids.
pub fn class_examples(
    spec: &DatasetSpec,
    classes: usize,
    per_class: usize,
    seed: u64,
) -> Result<(Vec<LabeledExample>, Vec<usize>)> {
    spec.validate()?;
    let m = spec.grid.len();
    if (classes as u128) > count_label_combinations(m, spec.k_max)? {
        return Err(Error::domain("more classes than distinct combinations"));
    }
    let geometry = spec.geometry()?;
    let mut rng = item_rng(seed, u64::MAX - 2);
    let mut combos: Vec<Vec<usize>> = Vec::with_capacity(classes);
    while combos.len() < classes {
        let c = random_sized_combination(m, spec.k_max, &mut rng);
        if !combos.contains(&c) {
            combos.push(c);
        }
    }
    let out = par::map_range(classes * per_class, |i| {
        let mut rng = item_rng(seed, i as u64);
        synthesize_example(spec, &geometry, &combos[i / per_class], &mut rng)
    });
    let examples = out.into_iter().collect::<Result<Vec<_>>>()?;
    let ids = (0..classes * per_class).map(|i| i / per_class).collect();
    Ok((examples, ids))
}

fn random_combination<R: Rng + ?Sized>(m: usize, k_max: usize, rng: &mut R) -> Result<Vec<usize>> {
    let total = count_label_combinations(m, k_max)?;
    unrank_combination(m, k_max, rng.random_range(0..total))
}

/// Builds one Siamese pair on the full array.
///
/// Similar pairs share one DOA set with independent coefficients and SNRs; dissimilar
/// pairs use two independent uniform combinations, redrawn until their labels differ.
pub fn make_pair<R: RngCore + ?Sized>(
    spec: &DatasetSpec,
    z_target: bool,
    rng: &mut R,
) -> Result<PairExample> {
    let geometry = spec.geometry()?;
    let m = spec.grid.len();
    if !z_target && count_label_combinations(m, spec.k_max)? < 2 {
        return Err(Error::domain("dissimilar pair impossible with a single combination"));
    }
    let first = random_combination(m, spec.k_max, rng)?;
    let second = if z_target {
        first.clone()
    } else {
        loop {
            let c = random_combination(m, spec.k_max, rng)?;
            if c != first {
                break c;
            }
        }
    };
    let a = synthesize_example(spec, &geometry, &first, rng)?;
    let b = synthesize_example(spec, &geometry, &second, rng)?;
    let z = a.gt == b.gt;
    debug_assert_eq!(z, z_target);
    Ok(PairExample { a, b, z })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn default_grid_has_121_points() {
        let g = AngleGrid::default();
        assert_eq!(g.len(), 121);
        assert_eq!(g.angle(0), -60.0);
        assert_eq!(g.angle(120), 60.0);
        assert_eq!(g.index_of(30.0), Some(90));
        assert_eq!(g.index_of(30.5), None);
        assert_eq!(g.index_of(61.0), None);
        assert!(AngleGrid::new(-60.0, 60.0, 7.0).is_err());
    }

    #[test]
    fn combination_counts() {
        assert_eq!(count_label_combinations(121, 3).unwrap(), 295_361);
        assert_eq!(count_label_combinations(121, 1).unwrap(), 121);
        assert_eq!(count_label_combinations(3, 2).unwrap(), 6);
        assert!(count_label_combinations(3, 4).is_err());
        assert!(count_label_combinations(3, 0).is_err());
        assert!(count_label_combinations(1000, 1000).is_err());
    }

    #[test]
    fn small_enumeration_matches_hand_list() {
        let all: Vec<_> = Combinations::new(3, 2).collect();
        assert_eq!(
            all,
            vec![vec![0], vec![1], vec![2], vec![0, 1], vec![0, 2], vec![1, 2]]
        );
    }

    #[test]
    fn enumeration_length_matches_count_brute_force() {
        for m in 1..=25 {
            for k in 1..=3.min(m) {
                let n = Combinations::new(m, k).count() as u128;
                assert_eq!(n, count_label_combinations(m, k).unwrap(), "m={m} k={k}");
            }
        }
    }

    #[test]
    fn unrank_inverts_enumeration() {
        for (r, c) in Combinations::new(9, 3).enumerate() {
            assert_eq!(unrank_combination(9, 3, r as u128).unwrap(), c);
        }
        assert!(unrank_combination(9, 3, 129).is_err());
    }

    #[test]
    fn limited_enumeration_is_distinct_and_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g = AngleGrid::default();
        let sets: Vec<_> = enumerate_combinations(&g, 3, Some(10_000), &mut rng)
            .unwrap()
            .collect();
        assert_eq!(sets.len(), 10_000);
        let uniq: HashSet<_> = sets.iter().cloned().collect();
        assert_eq!(uniq.len(), 10_000);
        for s in &sets {
            assert!(!s.is_empty() && s.len() <= 3);
            assert!(s.windows(2).all(|w| w[0] < w[1]));
            assert!(*s.last().unwrap() < 121);
        }
    }

    #[test]
    fn sampling_beyond_total_cycles_full_passes() {
        let g = AngleGrid::new(-2.0, 2.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let sets = sample_combinations(&g, 2, 37, &mut rng).unwrap();
        assert_eq!(sets.len(), 37);
        // 15 combinations: passes of 15, 15, 7
        let first: HashSet<_> = sets[..15].iter().cloned().collect();
        assert_eq!(first.len(), 15);
        let third: HashSet<_> = sets[30..].iter().cloned().collect();
        assert_eq!(third.len(), 7);
    }

    #[test]
    fn label_examples() {
        let g = AngleGrid::default();
        let e1 = label(&[-60.0], &g).unwrap();
        assert!(e1[0] && e1.iter().filter(|&&b| b).count() == 1);
        let l = label(&[-40.0, -20.0, 30.0], &g).unwrap();
        let ones: Vec<usize> = (0..121).filter(|&i| l[i]).collect();
        assert_eq!(ones, vec![20, 40, 90]);
        assert!(label(&[], &g).is_err());
        assert!(label(&[0.5], &g).is_err());
    }

    #[test]
    fn label_is_injective_on_small_grid() {
        let g = AngleGrid::new(-5.0, 5.0, 1.0).unwrap();
        let mut seen = HashSet::new();
        for c in Combinations::new(g.len(), 3) {
            let doas: Vec<f64> = c.iter().map(|&i| g.angle(i)).collect();
            let l = label(&doas, &g).unwrap();
            let back: Vec<usize> = (0..g.len()).filter(|&i| l[i]).collect();
            assert_eq!(back, c);
            assert!(seen.insert(l));
        }
    }

    #[test]
    fn source_magnitudes_follow_uniform_law() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut sum = 0.0;
        let n = 100_000;
        for _ in 0..n {
            let s = sample_sources(&[10.0], (0.5, 1.0), &mut rng).unwrap();
            let m = s.coeffs()[0].norm();
            assert!((0.5 - 1e-12..=1.0 + 1e-12).contains(&m));
            sum += m;
        }
        let mean = sum / n as f64;
        assert!((mean - 0.75).abs() < 0.005, "mean {mean}");

        let a = sample_sources(&[1.0, 2.0], (0.5, 1.0), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = sample_sources(&[1.0, 2.0], (0.5, 1.0), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn pairs_respect_similarity_bit() {
        let spec = DatasetSpec {
            k_max: 2,
            ..DatasetSpec::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let sim = make_pair(&spec, true, &mut rng).unwrap();
        assert!(sim.z);
        assert_eq!(sim.a.gt, sim.b.gt);
        assert_ne!(sim.a.snapshot.sources.coeffs(), sim.b.snapshot.sources.coeffs());
        let dis = make_pair(&spec, false, &mut rng).unwrap();
        assert!(!dis.z);
        assert_ne!(dis.a.gt, dis.b.gt);
        let swapped = dis.clone().swapped();
        assert_eq!(swapped.z, dis.z);
        assert!(sim.a.snapshot.geometry.mask().iter().all(|&m| m));
    }

    #[test]
    fn balanced_pair_ratio() {
        let spec = DatasetSpec {
            grid: AngleGrid::new(-10.0, 10.0, 1.0).unwrap(),
            n_elements: 8,
            k_max: 2,
            ..DatasetSpec::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let n = 10_000;
        let mut similar = 0;
        for _ in 0..n {
            let want = rng.random_bool(0.5);
            let p = make_pair(&spec, want, &mut rng).unwrap();
            assert_eq!(p.z, want);
            similar += p.z as usize;
        }
        let ratio = similar as f64 / n as f64;
        assert!((ratio - 0.5).abs() < 0.02, "ratio {ratio}");
    }

    #[test]
    fn generation_is_grouped_and_deterministic() {
        let spec = DatasetSpec {
            k_max: 2,
            signals_per_combination: 3,
            combinations: Some(40),
            seed: 5,
            ..DatasetSpec::default()
        };
        let a = generate_dataset(&spec).unwrap();
        let b = generate_dataset(&spec).unwrap();
        assert_eq!(a.len(), 120);
        assert_eq!(a, b);
        for group in a.chunks(3) {
            assert!(group.iter().all(|e| e.gt == group[0].gt));
        }
        assert!(a.iter().all(|e| e.n_sources() <= 2));
    }

    #[test]
    fn masks_zero_exactly_the_requested_count() {
        let mut rng = item_rng(1, 0);
        for z in 0..20 {
            let m = random_mask(20, z, &mut rng).unwrap();
            assert_eq!(m.iter().filter(|&&b| !b).count(), z);
        }
        assert!(random_mask(20, 20, &mut rng).is_err());
    }

    #[test]
    fn held_out_sets_are_seeded() {
        let spec = DatasetSpec { k_max: 2, ..DatasetSpec::default() };
        let a = test_examples(&spec, 50, 7).unwrap();
        assert_eq!(a, test_examples(&spec, 50, 7).unwrap());
        assert_ne!(a, test_examples(&spec, 50, 8).unwrap());
        assert!(a.iter().all(|e| (1..=2).contains(&e.n_sources())));
        let masked = mask_examples(&a, 6, 3).unwrap();
        for me in &masked {
            assert_eq!(me.n_active(), 14);
            for (i, v) in me.y.iter().enumerate() {
                assert_eq!(*v == C64::new(0.0, 0.0), !me.mask[i]);
            }
        }
        let (ex, ids) = class_examples(&spec, 10, 4, 5).unwrap();
        assert_eq!(ex.len(), 40);
        for c in 0..10 {
            let members: Vec<_> = ex.iter().zip(&ids).filter(|(_, &i)| i == c).map(|(e, _)| e).collect();
            assert_eq!(members.len(), 4);
            assert!(members.iter().all(|e| e.gt == members[0].gt));
            assert_ne!(members[0].snapshot.y, members[1].snapshot.y);
        }
    }
}
