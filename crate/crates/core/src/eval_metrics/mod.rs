//! Multilabel detection metrics, SNR-bucketed reports and feature analysis.
//!
//! Precision and recall are macro averages over labels; a label whose denominator is
//! zero contributes 0. F1 is the harmonic mean of the macro precision and recall.

mod pca;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::{par, Error, Result};

pub use pca::{cluster_tightness, pca_project, Pca, Tightness};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// `pred_m > tau` for every label.
pub fn threshold_detect<T: Copy + Into<f64>>(pred: &[T], tau: f64) -> Vec<bool> {
    pred.iter().map(|&p| p.into() > tau).collect()
}

/// Per-label confusion counts over a set of signals.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionTallies {
    pub tp: Vec<u64>,
    pub tn: Vec<u64>,
    pub fp: Vec<u64>,
    #[serde(rename = "fn")]
    pub fn_: Vec<u64>,
    pub signals: u64,
}

impl ConfusionTallies {
    pub fn new(m: usize) -> Self {
        Self {
            tp: vec![0; m],
            tn: vec![0; m],
            fp: vec![0; m],
            fn_: vec![0; m],
            signals: 0,
        }
    }

    pub fn n_labels(&self) -> usize {
        self.tp.len()
    }

    pub fn add(&mut self, pred: &[bool], gt: &[bool]) -> Result<()> {
        let m = self.n_labels();
        if pred.len() != m || gt.len() != m {
            return Err(Error::shape(format!(
                "tally: expected {m} labels, got pred {} gt {}",
                pred.len(),
                gt.len()
            )));
        }
        for i in 0..m {
            match (pred[i], gt[i]) {
                (true, true) => self.tp[i] += 1,
                (false, false) => self.tn[i] += 1,
                (true, false) => self.fp[i] += 1,
                (false, true) => self.fn_[i] += 1,
            }
        }
        self.signals += 1;
        Ok(())
    }

    /// Adds another tally (same label count) into this one.
    pub fn merge(&mut self, other: &Self) -> Result<()> {
        if other.n_labels() != self.n_labels() {
            return Err(Error::shape("cannot merge tallies over different grids"));
        }
        for (d, s) in [
            (&mut self.tp, &other.tp),
            (&mut self.tn, &other.tn),
            (&mut self.fp, &other.fp),
            (&mut self.fn_, &other.fn_),
        ] {
            for (a, b) in d.iter_mut().zip(s) {
                *a += b;
            }
        }
        self.signals += other.signals;
        Ok(())
    }
}

/// Tallies predictions against ground truth, in parallel chunks merged in order.
pub fn tally(preds: &[Vec<bool>], gts: &[Vec<bool>]) -> Result<ConfusionTallies> {
    if preds.len() != gts.len() {
        return Err(Error::shape(format!(
            "tally: {} predictions for {} ground truths",
            preds.len(),
            gts.len()
        )));
    }
    let m = gts.first().map_or(0, Vec::len);
    let idx: Vec<usize> = (0..preds.len()).collect();
    let parts = par::map_chunks(&idx, 512, |c| -> Result<ConfusionTallies> {
        let mut t = ConfusionTallies::new(m);
        for &i in c {
            t.add(&preds[i], &gts[i])?;
        }
        Ok(t)
    });
    let mut out = ConfusionTallies::new(m);
    for p in parts {
        out.merge(&p?)?;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Macro accuracy, precision and recall, and F1 from the macro values.
pub fn metrics(t: &ConfusionTallies) -> Metrics {
    let m = t.n_labels();
    if m == 0 {
        return Metrics::default();
    }
    let mut acc = 0.0;
    let mut prec = 0.0;
    let mut rec = 0.0;
    for i in 0..m {
        let total = t.tp[i] + t.tn[i] + t.fp[i] + t.fn_[i];
        acc += ratio(t.tp[i] + t.tn[i], total);
        prec += ratio(t.tp[i], t.tp[i] + t.fp[i]);
        rec += ratio(t.tp[i], t.tp[i] + t.fn_[i]);
    }
    let mf = m as f64;
    let (precision, recall) = (prec / mf, rec / mf);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Metrics {
        accuracy: acc / mf,
        precision,
        recall,
        f1,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketMetrics {
    pub snr_lo: f64,
    pub snr_hi: f64,
    pub signals: u64,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model: String,
    pub signals: u64,
    pub overall: Metrics,
    pub buckets: Vec<BucketMetrics>,
}

/// Equal-width SNR bucket edges covering `[lo, hi]`.
pub fn snr_edges(lo: f64, hi: f64, buckets: usize) -> Result<Vec<f64>> {
    if !(hi > lo) || buckets == 0 {
        return Err(Error::domain("SNR buckets need hi > lo and at least one bucket"));
    }
    let w = (hi - lo) / buckets as f64;
    Ok((0..=buckets).map(|i| if i == buckets { hi } else { lo + w * i as f64 }).collect())
}

/// Overall and per-bucket metrics. Buckets are `[e_i, e_{i+1})` except the last,
/// which is closed; signals outside every bucket only count toward the overall row.
pub fn build_report(
    model: &str,
    preds: &[Vec<bool>],
    gts: &[Vec<bool>],
    snrs: &[f64],
    edges: &[f64],
) -> Result<MetricsReport> {
    if snrs.len() != gts.len() {
        return Err(Error::shape("one SNR per signal required"));
    }
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::domain("bucket edges must be increasing with at least two entries"));
    }
    let all = tally(preds, gts)?;
    let m = all.n_labels();
    let nb = edges.len() - 1;
    let mut per = vec![ConfusionTallies::new(m); nb];
    for (i, &s) in snrs.iter().enumerate() {
        let last = s == edges[nb];
        if let Some(b) = (0..nb).find(|&b| (s >= edges[b] && s < edges[b + 1]) || (b == nb - 1 && last)) {
            per[b].add(&preds[i], &gts[i])?;
        }
    }
    Ok(MetricsReport {
        model: model.to_string(),
        signals: all.signals,
        overall: metrics(&all),
        buckets: per
            .iter()
            .enumerate()
            .map(|(b, t)| BucketMetrics {
                snr_lo: edges[b],
                snr_hi: edges[b + 1],
                signals: t.signals,
                metrics: metrics(t),
            })
            .collect(),
    })
}

pub const CSV_HEADER: &str = "snr_lo,snr_hi,accuracy,precision,recall,f1,model,signals";

/// One row per bucket plus an overall row spanning the outer edges.
pub fn write_csv<W: Write>(reports: &[MetricsReport], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in reports {
        let row = |w: &mut W, lo: f64, hi: f64, m: &Metrics, n: u64| {
            writeln!(
                w,
                "{lo},{hi},{},{},{},{},{},{n}",
                m.accuracy, m.precision, m.recall, m.f1, r.model
            )
        };
        for b in &r.buckets {
            row(&mut w, b.snr_lo, b.snr_hi, &b.metrics, b.signals)?;
        }
        let lo = r.buckets.first().map_or(f64::NAN, |b| b.snr_lo);
        let hi = r.buckets.last().map_or(f64::NAN, |b| b.snr_hi);
        row(&mut w, lo, hi, &r.overall, r.signals)?;
    }
    Ok(())
}

pub fn to_json(reports: &[MetricsReport]) -> Result<String> {
    serde_json::to_string_pretty(reports).map_err(|e| Error::Format(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop_assert, prop_assert_eq, proptest};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn threshold_is_strict() {
        assert_eq!(threshold_detect(&[0.5f64; 4], 0.5), vec![false; 4]);
        let gt = [1.0f32, 0.0, 1.0];
        assert_eq!(threshold_detect(&gt, 0.5), vec![true, false, true]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p: Vec<f64> = (0..500).map(|_| rng.random()).collect();
        let d = threshold_detect(&p, DEFAULT_THRESHOLD);
        for (x, b) in p.iter().zip(d) {
            assert_eq!(b, *x > 0.5);
        }
    }

    #[test]
    fn tally_extremes_and_hand_case() {
        let gts = vec![vec![true, false], vec![false, true], vec![true, true]];
        let t = tally(&gts, &gts).unwrap();
        assert!(t.fp.iter().chain(&t.fn_).all(|&c| c == 0));
        let neg: Vec<Vec<bool>> = gts.iter().map(|g| g.iter().map(|b| !b).collect()).collect();
        let t = tally(&neg, &gts).unwrap();
        assert!(t.tp.iter().chain(&t.tn).all(|&c| c == 0));

        // label 1: TP=1 FP=1 TN=1; label 2: TP=1 FN=1 TN=1
        let gts = vec![vec![true, true], vec![false, true], vec![false, false]];
        let preds = vec![vec![true, true], vec![true, false], vec![false, false]];
        let t = tally(&preds, &gts).unwrap();
        assert_eq!((t.tp.clone(), t.fp.clone(), t.fn_.clone(), t.tn.clone()), (vec![1, 1], vec![1, 0], vec![0, 1], vec![1, 1]));
        let m = metrics(&t);
        assert_eq!(m.precision, 0.75);
        assert_eq!(m.recall, 0.75);
        assert_eq!(m.accuracy, 2.0 / 3.0);
        assert_eq!(m.f1, 0.75);
        assert!(tally(&preds[..2], &gts).is_err());
    }

    #[test]
    fn perfect_and_all_negative() {
        let gts = vec![vec![true, false, false], vec![false, false, true]];
        let m = metrics(&tally(&gts, &gts).unwrap());
        // label 2 never fires: its precision and recall are 0 by convention
        assert_eq!(m.accuracy, 1.0);
        let gts = vec![vec![true, true], vec![true, true]];
        let m = metrics(&tally(&gts, &gts).unwrap());
        assert_eq!((m.accuracy, m.precision, m.recall, m.f1), (1.0, 1.0, 1.0, 1.0));
        let none = vec![vec![false, false]; 2];
        let m = metrics(&tally(&none, &gts).unwrap());
        assert_eq!((m.recall, m.f1), (0.0, 0.0));
    }

    #[test]
    fn buckets_partition_signals() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let gts: Vec<Vec<bool>> = (0..300).map(|_| (0..5).map(|_| rng.random_bool(0.3)).collect()).collect();
        let preds: Vec<Vec<bool>> = (0..300).map(|_| (0..5).map(|_| rng.random_bool(0.3)).collect()).collect();
        let mut snrs: Vec<f64> = (0..300).map(|_| rng.random_range(0.0..30.0)).collect();
        snrs[0] = 30.0;
        let edges = snr_edges(0.0, 30.0, 6).unwrap();
        assert_eq!(edges, vec![0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0]);
        let r = build_report("x", &preds, &gts, &snrs, &edges).unwrap();
        assert_eq!(r.buckets.iter().map(|b| b.signals).sum::<u64>(), 300);
        let mut csv = Vec::new();
        write_csv(std::slice::from_ref(&r), &mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().count(), 1 + 6 + 1);
        assert!(text.lines().last().unwrap().starts_with("0,30,"));
        let back: Vec<MetricsReport> = serde_json::from_str(&to_json(std::slice::from_ref(&r)).unwrap()).unwrap();
        assert_eq!(back[0], r);
    }

    proptest! {
        #[test]
        fn metric_invariants(seed in 0u64..1000, n in 1usize..40, m in 1usize..8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let gts: Vec<Vec<bool>> = (0..n).map(|_| (0..m).map(|_| rng.random_bool(0.4)).collect()).collect();
            let preds: Vec<Vec<bool>> = (0..n).map(|_| (0..m).map(|_| rng.random_bool(0.4)).collect()).collect();
            let t = tally(&preds, &gts).unwrap();
            for i in 0..m {
                prop_assert_eq!(t.tp[i] + t.tn[i] + t.fp[i] + t.fn_[i], n as u64);
            }
            let r = metrics(&t);
            // accuracy is one minus the macro Hamming error
            let errors: usize = preds.iter().zip(&gts).map(|(p, g)| p.iter().zip(g).filter(|(a, b)| a != b).count()).sum();
            prop_assert!((r.accuracy - (1.0 - errors as f64 / (n * m) as f64)).abs() < 1e-12);
            if r.precision + r.recall > 0.0 {
                prop_assert!((r.f1 - 2.0 * r.precision * r.recall / (r.precision + r.recall)).abs() < 1e-12);
            }
            for v in [r.accuracy, r.precision, r.recall, r.f1] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            // order of signals does not matter
            let mut order: Vec<usize> = (0..n).collect();
            order.reverse();
            let p2: Vec<_> = order.iter().map(|&i| preds[i].clone()).collect();
            let g2: Vec<_> = order.iter().map(|&i| gts[i].clone()).collect();
            prop_assert_eq!(metrics(&tally(&p2, &g2).unwrap()), r);
        }
    }
}
