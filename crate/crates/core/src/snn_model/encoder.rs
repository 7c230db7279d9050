use ndarray::{concatenate, s, Array1, Array2, Array3, ArrayView2, Axis};
use rand::Rng;

use super::augment::{frequency_embedding, MaskedSignal};
use super::config::EncoderConfig;
use crate::array_model::SteeringDictionary;
use crate::nn_core::ops::{self, ConvCache, PoolCache};
use crate::nn_core::{Conv1d, Dense, NamedTensor, ParamMut, ParamRef, Parameterized, Real};
use crate::{par, Error, Result};

/// Network inputs for a batch of masked snapshots.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderBatch<F> {
    /// `[Re y; Im y]` per row, `(batch, 2N)`.
    pub signal: Array2<F>,
    /// Frequency embedding as two channels (real, imaginary), `(batch, 2, M)`.
    pub spectrum: Array3<F>,
    /// `1 / N_active` per row.
    pub inv_active: Array1<F>,
}

impl<F: Real> EncoderBatch<F> {
    pub fn from_signals(signals: &[MaskedSignal], dictionary: &SteeringDictionary) -> Result<Self> {
        let b = signals.len();
        let n = dictionary.n_elements();
        let m = dictionary.n_atoms();
        let mut signal = Array2::zeros((b, 2 * n));
        let mut spectrum = Array3::zeros((b, 2, m));
        let mut inv_active = Array1::zeros(b);
        for (i, s) in signals.iter().enumerate() {
            if s.y.len() != n {
                return Err(Error::shape(format!("signal length {} != {n}", s.y.len())));
            }
            for (k, v) in s.y.iter().enumerate() {
                signal[[i, k]] = F::of(v.re);
                signal[[i, n + k]] = F::of(v.im);
            }
            let fe = frequency_embedding(&s.y, dictionary, s.n_active)?;
            for (k, v) in fe.iter().enumerate() {
                spectrum[[i, 0, k]] = F::of(v.re);
                spectrum[[i, 1, k]] = F::of(v.im);
            }
            inv_active[i] = F::of(1.0 / s.n_active as f64);
        }
        Ok(Self {
            signal,
            spectrum,
            inv_active,
        })
    }

    pub fn len(&self) -> usize {
        self.signal.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Rows of `self` followed by rows of `other`.
    pub fn stack(&self, other: &Self) -> Result<Self> {
        let err = |e: ndarray::ShapeError| Error::shape(format!("stack: {e}"));
        Ok(Self {
            signal: concatenate(Axis(0), &[self.signal.view(), other.signal.view()]).map_err(err)?,
            spectrum: concatenate(Axis(0), &[self.spectrum.view(), other.spectrum.view()]).map_err(err)?,
            inv_active: concatenate(Axis(0), &[self.inv_active.view(), other.inv_active.view()]).map_err(err)?,
        })
    }

    pub fn cast<G: Real>(&self) -> EncoderBatch<G> {
        EncoderBatch {
            signal: self.signal.mapv(|v| G::of(v.as_f64())),
            spectrum: self.spectrum.mapv(|v| G::of(v.as_f64())),
            inv_active: self.inv_active.mapv(|v| G::of(v.as_f64())),
        }
    }
}

#[derive(Debug, Clone)]
struct DenseStep<F> {
    input: Array2<F>,
    pre: Array2<F>,
}

#[derive(Debug, Clone)]
struct ConvStep<F> {
    cache: ConvCache<F>,
    pre: Array3<F>,
    pool: PoolCache,
}

/// Intermediate values of one forward pass, consumed by [`SnnModel::backward`].
#[derive(Debug, Clone)]
pub struct Trace<F> {
    signal_x: Array2<F>,
    signal_pre0: Array2<F>,
    inv_active: Array1<F>,
    signal_steps: Vec<DenseStep<F>>,
    conv_steps: Vec<ConvStep<F>>,
    freq_shape: (usize, usize, usize),
    signal_width: usize,
    fusion_steps: Vec<DenseStep<F>>,
    pub embedding: Array2<F>,
    pub logits: Array2<F>,
    pub probs: Array2<F>,
}

/// Two-branch encoder plus the sigmoid classification head.
#[derive(Debug, Clone, PartialEq)]
pub struct SnnModel<F: Real> {
    config: EncoderConfig,
    signal_in: Dense<F>,
    signal: Vec<Dense<F>>,
    convs: Vec<Conv1d<F>>,
    fusion: Vec<Dense<F>>,
    head: Dense<F>,
}

fn dense_stack<F: Real>(
    layers: &[Dense<F>],
    mut h: Array2<F>,
    steps: &mut Vec<DenseStep<F>>,
) -> Result<Array2<F>> {
    for layer in layers {
        let pre = layer.forward(h.view())?;
        let next = ops::relu(&pre);
        steps.push(DenseStep { input: h, pre });
        h = next;
    }
    Ok(h)
}

fn dense_stack_backward<F: Real>(layers: &mut [Dense<F>], steps: &[DenseStep<F>], mut d: Array2<F>) -> Array2<F> {
    for (layer, step) in layers.iter_mut().zip(steps).rev() {
        let d_pre = ops::relu_backward(&step.pre, &d);
        d = layer.backward(step.input.view(), d_pre.view());
    }
    d
}

impl<F: Real> SnnModel<F> {
    /// Fresh model with Kaiming-uniform weights and zero biases.
    pub fn new<R: Rng + ?Sized>(config: EncoderConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let n2 = 2 * config.n_elements;
        let signal_in = Dense::new("signal_in", n2, config.signal_in_width, rng);
        let mut width = config.signal_in_width;
        let mut signal = Vec::new();
        for (i, &w) in config.signal_widths.iter().enumerate() {
            signal.push(Dense::new(&format!("signal.{i}"), width, w, rng));
            width = w;
        }
        let signal_width = width;
        let mut convs = Vec::new();
        let mut ch = 2;
        for (i, &c) in config.conv_channels.iter().enumerate() {
            convs.push(Conv1d::new(&format!("conv.{i}"), ch, c, config.kernel, config.padding, rng));
            ch = c;
        }
        let mut width = signal_width + config.frequency_features();
        let mut fusion = Vec::new();
        for (i, &w) in config.fusion_widths.iter().enumerate() {
            fusion.push(Dense::new(&format!("fusion.{i}"), width, w, rng));
            width = w;
        }
        let head = Dense::new("head", width, config.n_grid(), rng);
        Ok(Self {
            config,
            signal_in,
            signal,
            convs,
            fusion,
            head,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn cast<G: Real>(&self) -> SnnModel<G> {
        SnnModel {
            config: self.config.clone(),
            signal_in: self.signal_in.cast(),
            signal: self.signal.iter().map(Dense::cast).collect(),
            convs: self.convs.iter().map(Conv1d::cast).collect(),
            fusion: self.fusion.iter().map(Dense::cast).collect(),
            head: self.head.cast(),
        }
    }

    /// Full forward pass keeping everything the backward pass needs.
    pub fn forward(&self, batch: &EncoderBatch<F>) -> Result<Trace<F>> {
        let b = batch.len();
        // signal branch: dense + ReLU, normalize by active count, then the dense stack
        let signal_pre0 = self.signal_in.forward(batch.signal.view())?;
        let h = ops::scale_rows(ops::relu(&signal_pre0).view(), batch.inv_active.view())?;
        let mut signal_steps = Vec::with_capacity(self.signal.len());
        let sig = dense_stack(&self.signal, h, &mut signal_steps)?;

        // frequency branch: (conv + ReLU + max-pool) stack, flattened
        let mut x = batch.spectrum.clone();
        let mut conv_steps = Vec::with_capacity(self.convs.len());
        for conv in &self.convs {
            let (pre, cache) = conv.forward(x.view())?;
            let act = ops::relu(&pre);
            let (pooled, pool) = ops::maxpool1d(act.view(), self.config.pool, self.config.pool)?;
            conv_steps.push(ConvStep { cache, pre, pool });
            x = pooled;
        }
        let freq_shape = x.dim();
        let flat = x
            .into_shape_with_order((b, freq_shape.1 * freq_shape.2))
            .map_err(|e| Error::shape(e.to_string()))?;

        let fused = ops::concat(&[sig.view(), flat.view()])?;
        let mut fusion_steps = Vec::with_capacity(self.fusion.len());
        let embedding = dense_stack(&self.fusion, fused, &mut fusion_steps)?;
        let logits = self.head.forward(embedding.view())?;
        let probs = ops::sigmoid(&logits);
        Ok(Trace {
            signal_x: batch.signal.clone(),
            signal_pre0,
            inv_active: batch.inv_active.clone(),
            signal_width: sig.ncols(),
            signal_steps,
            conv_steps,
            freq_shape,
            fusion_steps,
            embedding,
            logits,
            probs,
        })
    }

    /// Accumulates parameter gradients given upstream gradients on the embedding
    /// and/or the head probabilities.
    pub fn backward(
        &mut self,
        trace: &Trace<F>,
        d_embedding: Option<ArrayView2<F>>,
        d_probs: Option<ArrayView2<F>>,
    ) {
        let mut d_emb = match d_embedding {
            Some(d) => d.to_owned(),
            None => Array2::zeros(trace.embedding.dim()),
        };
        if let Some(dp) = d_probs {
            let d_logits = ops::sigmoid_backward(&trace.probs, &dp.to_owned());
            d_emb += &self.head.backward(trace.embedding.view(), d_logits.view());
        }
        let d_fused = dense_stack_backward(&mut self.fusion, &trace.fusion_steps, d_emb);
        let (b, c, l) = trace.freq_shape;
        let parts = ops::concat_backward(d_fused.view(), &[trace.signal_width, c * l]);
        let [d_sig, d_flat]: [Array2<F>; 2] = parts.try_into().expect("two pieces");

        let d_h = dense_stack_backward(&mut self.signal, &trace.signal_steps, d_sig);
        let d_r0 = ops::scale_rows_backward(d_h.view(), trace.inv_active.view());
        let d_pre0 = ops::relu_backward(&trace.signal_pre0, &d_r0);
        self.signal_in.backward(trace.signal_x.view(), d_pre0.view());

        let mut d = d_flat
            .into_shape_with_order((b, c, l))
            .expect("flattened from this shape");
        for (conv, step) in self.convs.iter_mut().zip(&trace.conv_steps).rev() {
            let d_act = ops::maxpool1d_backward(&step.pool, d.view());
            let d_pre = ops::relu_backward(&step.pre, &d_act);
            d = conv.backward(&step.cache, d_pre.view());
        }
    }

    /// Embeddings and head probabilities for a list of signals, evaluated in
    /// fixed-size chunks (in parallel when enabled).
    pub fn infer(
        &self,
        signals: &[MaskedSignal],
        dictionary: &SteeringDictionary,
        chunk: usize,
    ) -> Result<(Array2<F>, Array2<F>)> {
        let parts = par::map_chunks(signals, chunk, |c| -> Result<_> {
            let batch = EncoderBatch::from_signals(c, dictionary)?;
            let t = self.forward(&batch)?;
            Ok((t.embedding, t.probs))
        });
        let mut embs = Vec::with_capacity(parts.len());
        let mut probs = Vec::with_capacity(parts.len());
        for p in parts {
            let (e, pr) = p?;
            embs.push(e);
            probs.push(pr);
        }
        let cat = |xs: &[Array2<F>], width: usize| -> Result<Array2<F>> {
            if xs.is_empty() {
                return Ok(Array2::zeros((0, width)));
            }
            let views: Vec<_> = xs.iter().map(|a| a.view()).collect();
            concatenate(Axis(0), &views).map_err(|e| Error::shape(e.to_string()))
        };
        Ok((
            cat(&embs, self.config.embedding_dim())?,
            cat(&probs, self.config.n_grid())?,
        ))
    }

    /// Overwrites parameters from checkpoint tensors (matched in order by name and shape).
    pub fn load_tensors(&mut self, tensors: &[NamedTensor]) -> Result<()> {
        let params = self.params_mut();
        if params.len() != tensors.len() {
            return Err(Error::Format(format!(
                "checkpoint has {} tensors, model expects {}",
                tensors.len(),
                params.len()
            )));
        }
        for (p, t) in params.into_iter().zip(tensors) {
            if p.name != t.name || p.shape != t.shape.as_slice() {
                return Err(Error::Format(format!(
                    "checkpoint tensor {} {:?} does not match {} {:?}",
                    t.name, t.shape, p.name, p.shape
                )));
            }
            for (dst, &src) in p.value.iter_mut().zip(&t.data) {
                *dst = F::of(src as f64);
            }
        }
        Ok(())
    }

    /// Rows `[lo, hi)` of a batch-major array.
    pub(crate) fn rows(a: &Array2<F>, lo: usize, hi: usize) -> ArrayView2<'_, F> {
        a.slice(s![lo..hi, ..])
    }
}

impl<F: Real> Parameterized<F> for SnnModel<F> {
    fn params(&self) -> Vec<ParamRef<'_, F>> {
        let mut out = Vec::new();
        out.extend(self.signal_in.params());
        for l in &self.signal {
            out.extend(l.params());
        }
        for c in &self.convs {
            out.extend(c.params());
        }
        for l in &self.fusion {
            out.extend(l.params());
        }
        out.extend(self.head.params());
        out
    }

    fn params_mut(&mut self) -> Vec<ParamMut<'_, F>> {
        let mut out = Vec::new();
        out.extend(self.signal_in.params_mut());
        for l in &mut self.signal {
            out.extend(l.params_mut());
        }
        for c in &mut self.convs {
            out.extend(c.params_mut());
        }
        for l in &mut self.fusion {
            out.extend(l.params_mut());
        }
        out.extend(self.head.params_mut());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_gen::AngleGrid;
    use crate::snn_model::sa_layer;
    use crate::C64;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_signals(n: usize, count: usize, rng: &mut ChaCha8Rng) -> Vec<MaskedSignal> {
        (0..count)
            .map(|_| {
                let y: Vec<C64> = (0..n)
                    .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                    .collect();
                let (ym, k, _) = sa_layer(&y, 0.3, rng).unwrap();
                MaskedSignal { y: ym, n_active: k }
            })
            .collect()
    }

    #[test]
    fn default_model_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = EncoderConfig::default();
        let model: SnnModel<f32> = SnnModel::new(cfg.clone(), &mut rng).unwrap();
        let dict = cfg.dictionary().unwrap();
        let signals = random_signals(20, 3, &mut rng);
        let batch = EncoderBatch::from_signals(&signals, &dict).unwrap();
        let t = model.forward(&batch).unwrap();
        assert_eq!(t.embedding.dim(), (3, 128));
        assert_eq!(t.probs.dim(), (3, 121));
        assert!(t.probs.iter().all(|&p| p > 0.0 && p < 1.0));
        assert_eq!(model.params().len(), 2 * (1 + 4 + 4 + 4 + 1));
    }

    #[test]
    fn zero_input_follows_bias_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = EncoderConfig::tiny(6, AngleGrid::new(-10.0, 10.0, 1.0).unwrap());
        let mut model: SnnModel<f64> = SnnModel::new(cfg.clone(), &mut rng).unwrap();
        let dict = cfg.dictionary().unwrap();
        let zero = vec![MaskedSignal { y: vec![C64::new(0.0, 0.0); 6], n_active: 6 }];
        let batch = EncoderBatch::from_signals(&zero, &dict).unwrap();

        // zero biases everywhere: every activation is exactly zero, head outputs 0.5
        let t = model.forward(&batch).unwrap();
        assert!(t.embedding.iter().all(|&v| v == 0.0));
        assert!(t.probs.iter().all(|&p| p == 0.5));

        // random biases: recompute the closed path layer by layer
        for p in model.params_mut() {
            if p.name.ends_with(".bias") {
                for v in p.value.iter_mut() {
                    *v = rng.random_range(-0.5..0.5);
                }
            }
        }
        let relu = |v: Array1<f64>| v.mapv(|x| x.max(0.0));
        let layer = |d: &Dense<f64>, x: &Array1<f64>| relu(d.weight.value.dot(x) + &d.bias.value);
        let mut h = relu(model.signal_in.bias.value.clone()) / 6.0;
        for d in &model.signal {
            h = layer(d, &h);
        }
        let mut freq = Vec::new();
        let mut len = cfg.n_grid();
        let mut x = Array2::<f64>::zeros((2, len));
        for c in &model.convs {
            let out_ch = c.bias.value.len();
            let padded = len + 2 * cfg.padding;
            let conv_len = padded - cfg.kernel + 1;
            let mut y = Array2::<f64>::zeros((out_ch, conv_len));
            for o in 0..out_ch {
                for i in 0..conv_len {
                    let mut acc = c.bias.value[o];
                    for ci in 0..x.nrows() {
                        for t in 0..cfg.kernel {
                            let pos = i + t;
                            if pos >= cfg.padding && pos - cfg.padding < len {
                                acc += c.weight.value[[o, ci, t]] * x[[ci, pos - cfg.padding]];
                            }
                        }
                    }
                    y[[o, i]] = acc.max(0.0);
                }
            }
            len = conv_len / cfg.pool;
            x = Array2::from_shape_fn((out_ch, len), |(o, i)| y[[o, 2 * i]].max(y[[o, 2 * i + 1]]));
        }
        freq.extend(x.iter().copied());
        let mut f = Array1::from_iter(h.iter().copied().chain(freq));
        for d in &model.fusion {
            f = layer(d, &f);
        }
        let t = model.forward(&batch).unwrap();
        for (a, b) in t.embedding.row(0).iter().zip(f.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn different_masks_give_different_embeddings() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cfg = EncoderConfig::default();
        let model: SnnModel<f32> = SnnModel::new(cfg.clone(), &mut rng).unwrap();
        let dict = cfg.dictionary().unwrap();
        let y: Vec<C64> = (0..20).map(|i| C64::from_polar(1.0, 0.4 * i as f64)).collect();
        let mut m1 = y.clone();
        m1[3] = C64::new(0.0, 0.0);
        let mut m2 = y.clone();
        m2[11] = C64::new(0.0, 0.0);
        let s = vec![MaskedSignal { y: m1, n_active: 19 }, MaskedSignal { y: m2, n_active: 19 }];
        let t = model.forward(&EncoderBatch::from_signals(&s, &dict).unwrap()).unwrap();
        assert_ne!(t.embedding.row(0), t.embedding.row(1));
    }

    #[test]
    fn identical_rows_identical_outputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = EncoderConfig::default();
        let model: SnnModel<f32> = SnnModel::new(cfg.clone(), &mut rng).unwrap();
        let dict = cfg.dictionary().unwrap();
        let s = random_signals(20, 5, &mut rng);
        let a = EncoderBatch::from_signals(&s, &dict).unwrap();
        let both = a.stack(&a).unwrap();
        let t = model.forward(&both).unwrap();
        for i in 0..5 {
            assert_eq!(t.embedding.row(i), t.embedding.row(i + 5));
            assert_eq!(t.probs.row(i), t.probs.row(i + 5));
        }
    }

    #[test]
    fn masked_positions_do_not_leak() {
        // perturb masked entries, re-zero them, and the embedding is unchanged
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cfg = EncoderConfig::default();
        let model: SnnModel<f64> = SnnModel::new(cfg.clone(), &mut rng).unwrap();
        let dict = cfg.dictionary().unwrap();
        let s = random_signals(20, 1, &mut rng).remove(0);
        let mut perturbed = s.y.clone();
        for v in perturbed.iter_mut() {
            if v.norm() == 0.0 {
                *v = C64::new(5.0, -3.0);
            }
        }
        let mask: Vec<bool> = s.y.iter().map(|v| v.norm() != 0.0).collect();
        let rezeroed = crate::array_model::apply_mask(&perturbed, &mask).unwrap();
        let s2 = MaskedSignal { y: rezeroed, n_active: s.n_active };
        let t1 = model.forward(&EncoderBatch::from_signals(&[s], &dict).unwrap()).unwrap();
        let t2 = model.forward(&EncoderBatch::from_signals(&[s2], &dict).unwrap()).unwrap();
        assert_eq!(t1.embedding, t2.embedding);
    }
}
