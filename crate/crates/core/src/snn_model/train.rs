use std::collections::HashMap;

use ndarray::{concatenate, Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::augment::{sa_layer, MaskedSignal};
use super::config::EncoderConfig;
use super::encoder::{EncoderBatch, SnnModel};
use super::losses::{bce_loss, contrastive_loss, LossParts};
use crate::array_model::SteeringDictionary;
use crate::data_gen::{item_rng, LabeledExample};
use crate::nn_core::{adam_step, AdamConfig, AdamState, GradCheckable, Parameterized, Real};
use crate::{par, Error, Result};

// stream tags so the different random draws of a run never share a generator
const INIT_STREAM: u64 = 1 << 40;
const PAIR_STREAM: u64 = 2 << 40;
const MASK_SALT: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Signals per optimizer step (two per pair).
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Pairs per gradient shard. Shards are evaluated independently and their
    /// gradients summed in shard order.
    pub shard_pairs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 60,
            batch_size: 256,
            adam: AdamConfig::default(),
            seed: 0,
            shard_pairs: 32,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 || !self.batch_size.is_multiple_of(2) {
            return Err(Error::domain("batch size must be an even number >= 2"));
        }
        if self.shard_pairs == 0 {
            return Err(Error::domain("shard_pairs must be >= 1"));
        }
        if !(self.adam.lr > 0.0) || !self.adam.lr.is_finite() {
            return Err(Error::domain("learning rate must be positive"));
        }
        Ok(())
    }

    pub fn pairs_per_batch(&self) -> usize {
        self.batch_size / 2
    }
}

/// Indices of two training examples and whether they share a label vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairIndex {
    pub a: usize,
    pub b: usize,
    pub z: bool,
}

/// Pairs every example at most once for one epoch.
///
/// Up to half of the pairs are drawn inside label groups (similar), the remaining
/// examples are shuffled and paired consecutively (dissimilar unless they happen to
/// share a label). `z` always reflects the actual labels.
pub fn build_epoch_pairs<R: Rng + ?Sized>(labels: &[Vec<bool>], rng: &mut R) -> Vec<PairIndex> {
    let mut slot: HashMap<&[bool], usize> = HashMap::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (i, l) in labels.iter().enumerate() {
        let g = *slot.entry(l.as_slice()).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(i);
    }
    for g in &mut groups {
        g.shuffle(rng);
    }
    groups.shuffle(rng);

    let target_similar = labels.len() / 4;
    let mut pairs = Vec::with_capacity(labels.len() / 2);
    let mut rest = Vec::new();
    for g in groups {
        let mut it = g.into_iter();
        loop {
            if pairs.len() >= target_similar {
                rest.extend(it);
                break;
            }
            match (it.next(), it.next()) {
                (Some(a), Some(b)) => pairs.push(PairIndex { a, b, z: true }),
                (Some(a), None) => {
                    rest.push(a);
                    break;
                }
                _ => break,
            }
        }
    }
    rest.shuffle(rng);
    for c in rest.chunks_exact(2) {
        pairs.push(PairIndex {
            a: c[0],
            b: c[1],
            z: labels[c[0]] == labels[c[1]],
        });
    }
    pairs.shuffle(rng);
    pairs
}

/// Per-epoch training summary; losses are means over the epoch's steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub steps: usize,
    pub total: f64,
    pub bce: f64,
    pub contrastive: f64,
}

fn label_rows<F: Real>(labels: &[&[bool]]) -> Array2<F> {
    let m = labels.first().map_or(0, |l| l.len());
    Array2::from_shape_fn((labels.len(), m), |(i, j)| if labels[i][j] { F::one() } else { F::zero() })
}

/// Loss of a batch of pairs, optionally accumulating gradients into `model`.
///
/// Everything is multiplied by `scale`, which lets shards of one batch each carry
/// their share of the batch mean.
#[allow(clippy::too_many_arguments)]
fn pair_objective<F: Real>(
    model: &mut SnnModel<F>,
    a: &EncoderBatch<F>,
    b: &EncoderBatch<F>,
    gt_a: &Array2<F>,
    gt_b: &Array2<F>,
    z: &[bool],
    scale: f64,
    backward: bool,
) -> Result<LossParts> {
    let p = a.len();
    if b.len() != p || z.len() != p {
        return Err(Error::shape("pair batches differ in length"));
    }
    let trace = model.forward(&a.stack(b)?)?;
    let emb = &trace.embedding;
    let probs = &trace.probs;
    let (c, d1, d2) = contrastive_loss(
        SnnModel::rows(emb, 0, p),
        SnnModel::rows(emb, p, 2 * p),
        z,
        model.config().margin,
    )?;
    let (ba, ga) = bce_loss(SnnModel::rows(probs, 0, p), gt_a.view())?;
    let (bb, gb) = bce_loss(SnnModel::rows(probs, p, 2 * p), gt_b.view())?;
    let lambda = model.config().contrastive_weight;
    let total = (ba + bb).as_f64() + lambda * c.as_f64();
    if !total.is_finite() {
        return Err(Error::NonFinite("training loss".into()));
    }
    if backward {
        let s = F::of(scale);
        let d_probs = concatenate(Axis(0), &[ga.view(), gb.view()]).map_err(|e| Error::shape(e.to_string()))? * s;
        let d_emb = if lambda > 0.0 {
            let d = concatenate(Axis(0), &[d1.view(), d2.view()]).map_err(|e| Error::shape(e.to_string()))?;
            Some(d * F::of(lambda * scale))
        } else {
            None
        };
        model.backward(&trace, d_emb.as_ref().map(|d| d.view()), Some(d_probs.view()));
    }
    Ok(LossParts {
        total: total * scale,
        bce: 0.5 * (ba + bb).as_f64() * scale,
        contrastive: c.as_f64() * scale,
    })
}

struct PreparedPair<'a> {
    a: MaskedSignal,
    b: MaskedSignal,
    gt_a: &'a [bool],
    gt_b: &'a [bool],
    z: bool,
}

/// Siamese trainer in single precision.
#[derive(Debug, Clone)]
pub struct Trainer {
    model: SnnModel<f32>,
    optimizer: AdamState<f32>,
    config: TrainConfig,
    dictionary: SteeringDictionary,
    epoch: usize,
}

impl Trainer {
    /// Fresh model initialized from the training seed.
    pub fn new(encoder: EncoderConfig, config: TrainConfig) -> Result<Self> {
        let mut rng = item_rng(config.seed, INIT_STREAM);
        let model = SnnModel::new(encoder, &mut rng)?;
        Self::from_model(model, config)
    }

    pub fn from_model(model: SnnModel<f32>, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let dictionary = model.config().dictionary()?;
        Ok(Self {
            optimizer: AdamState::new(config.adam),
            model,
            config,
            dictionary,
            epoch: 0,
        })
    }

    pub fn model(&self) -> &SnnModel<f32> {
        &self.model
    }

    pub fn into_model(self) -> SnnModel<f32> {
        self.model
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    /// Epochs completed so far.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    fn prepare<'a>(&self, data: &'a [LabeledExample], pairs: &[PairIndex], first: usize) -> Result<Vec<PreparedPair<'a>>> {
        let s_max = self.model.config().max_sparsity;
        let mask_seed = self.config.seed ^ (self.epoch as u64 + 1).wrapping_mul(MASK_SALT);
        let out = par::map_range(pairs.len(), |j| -> Result<PreparedPair<'a>> {
            let p = pairs[j];
            let mut rng = item_rng(mask_seed, (first + j) as u64);
            let (ya, ka, _) = sa_layer(&data[p.a].snapshot.y, s_max, &mut rng)?;
            let (yb, kb, _) = sa_layer(&data[p.b].snapshot.y, s_max, &mut rng)?;
            Ok(PreparedPair {
                a: MaskedSignal { y: ya, n_active: ka },
                b: MaskedSignal { y: yb, n_active: kb },
                gt_a: &data[p.a].gt,
                gt_b: &data[p.b].gt,
                z: p.z,
            })
        });
        out.into_iter().collect()
    }

    fn shard_objective(
        model: &mut SnnModel<f32>,
        dict: &SteeringDictionary,
        shard: &[PreparedPair<'_>],
        scale: f64,
    ) -> Result<LossParts> {
        let a: Vec<MaskedSignal> = shard.iter().map(|p| p.a.clone()).collect();
        let b: Vec<MaskedSignal> = shard.iter().map(|p| p.b.clone()).collect();
        let ga: Vec<&[bool]> = shard.iter().map(|p| p.gt_a).collect();
        let gb: Vec<&[bool]> = shard.iter().map(|p| p.gt_b).collect();
        let z: Vec<bool> = shard.iter().map(|p| p.z).collect();
        pair_objective(
            model,
            &EncoderBatch::from_signals(&a, dict)?,
            &EncoderBatch::from_signals(&b, dict)?,
            &label_rows(&ga),
            &label_rows(&gb),
            &z,
            scale,
            true,
        )
    }

    /// One optimizer step on a batch of pairs. Returns the batch-mean loss.
    fn step(&mut self, batch: &[PreparedPair<'_>]) -> Result<LossParts> {
        let n = batch.len() as f64;
        let shard = self.config.shard_pairs;
        self.model.zero_grad();
        let mut parts = LossParts::default();
        if batch.len() <= shard {
            parts = Self::shard_objective(&mut self.model, &self.dictionary, batch, 1.0)?;
        } else {
            let base = &self.model;
            let dict = &self.dictionary;
            let results = par::map_chunks(batch, shard, |s| -> Result<_> {
                let mut local = base.clone();
                let l = Self::shard_objective(&mut local, dict, s, s.len() as f64 / n)?;
                Ok((local, l))
            });
            let mut locals = Vec::with_capacity(results.len());
            for r in results {
                locals.push(r?);
            }
            // fixed summation order: shard 0, 1, 2, ...
            for (local, l) in &locals {
                self.model.add_grads_from(local);
                parts.total += l.total;
                parts.bce += l.bce;
                parts.contrastive += l.contrastive;
            }
        }
        let mut params = self.model.params_mut();
        adam_step(&mut params, &mut self.optimizer)?;
        Ok(parts)
    }

    /// Runs one epoch over `data`. Examples are paired as in [`build_epoch_pairs`]
    /// and each signal gets a fresh sparse-augmentation mask.
    pub fn train_epoch(&mut self, data: &[LabeledExample]) -> Result<EpochLog> {
        let labels: Vec<Vec<bool>> = data.iter().map(|e| e.gt.clone()).collect();
        let mut rng = item_rng(self.config.seed, PAIR_STREAM + self.epoch as u64);
        let pairs = build_epoch_pairs(&labels, &mut rng);
        if pairs.is_empty() {
            return Err(Error::domain("training needs at least two examples"));
        }
        let per = self.config.pairs_per_batch();
        let mut sum = LossParts::default();
        let mut steps = 0;
        for (k, chunk) in pairs.chunks(per).enumerate() {
            let prepared = self.prepare(data, chunk, k * per)?;
            let l = self.step(&prepared)?;
            sum.total += l.total;
            sum.bce += l.bce;
            sum.contrastive += l.contrastive;
            steps += 1;
        }
        self.epoch += 1;
        let s = steps as f64;
        Ok(EpochLog {
            epoch: self.epoch,
            steps,
            total: sum.total / s,
            bce: sum.bce / s,
            contrastive: sum.contrastive / s,
        })
    }

    /// Trains for the configured number of epochs, calling `on_epoch` after each one.
    /// The callback can persist the model; an error from it stops training.
    pub fn fit<C>(&mut self, data: &[LabeledExample], mut on_epoch: C) -> Result<Vec<EpochLog>>
    where
        C: FnMut(&EpochLog, &SnnModel<f32>) -> Result<()>,
    {
        let mut logs = Vec::with_capacity(self.config.epochs);
        while self.epoch < self.config.epochs {
            let log = self.train_epoch(data)?;
            on_epoch(&log, &self.model)?;
            logs.push(log);
        }
        Ok(logs)
    }
}

/// The pair objective of a fixed double-precision batch, for gradient checking.
#[derive(Debug, Clone)]
pub struct PairLossProbe {
    pub model: SnnModel<f64>,
    a: EncoderBatch<f64>,
    b: EncoderBatch<f64>,
    gt_a: Array2<f64>,
    gt_b: Array2<f64>,
    z: Vec<bool>,
}

impl PairLossProbe {
    pub fn new(
        model: SnnModel<f64>,
        a: &[MaskedSignal],
        b: &[MaskedSignal],
        gt_a: &[Vec<bool>],
        gt_b: &[Vec<bool>],
    ) -> Result<Self> {
        let dict = model.config().dictionary()?;
        let z = gt_a.iter().zip(gt_b).map(|(x, y)| x == y).collect();
        let ra: Vec<&[bool]> = gt_a.iter().map(Vec::as_slice).collect();
        let rb: Vec<&[bool]> = gt_b.iter().map(Vec::as_slice).collect();
        Ok(Self {
            a: EncoderBatch::from_signals(a, &dict)?,
            b: EncoderBatch::from_signals(b, &dict)?,
            gt_a: label_rows(&ra),
            gt_b: label_rows(&rb),
            z,
            model,
        })
    }

    pub fn objective(&mut self, backward: bool) -> Result<LossParts> {
        pair_objective(&mut self.model, &self.a, &self.b, &self.gt_a, &self.gt_b, &self.z, 1.0, backward)
    }
}

impl GradCheckable for PairLossProbe {
    fn params(&self) -> Vec<f64> {
        self.model.flat_values()
    }

    fn set_params(&mut self, p: &[f64]) {
        self.model.set_flat_values(p);
    }

    fn loss(&mut self) -> f64 {
        self.objective(false).expect("probe shapes fixed at construction").total
    }

    fn analytic_grad(&mut self) -> Vec<f64> {
        self.model.zero_grad();
        self.objective(true).expect("probe shapes fixed at construction");
        self.model.flat_grads()
    }
}
