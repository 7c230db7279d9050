use std::fmt::Write as _;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sparse_doa::data_gen::{class_examples, mask_examples, LabeledExample};
use sparse_doa::eval_metrics::{cluster_tightness, pca_project};
use sparse_doa::snn_model::{MaskedSignal, SnnModel};

use super::{check_compatible, check_writable, load_model, model_name, write_text_atomic};
use crate::config::{derive_seed, RunConfig, SeedPurpose};
use crate::error::{CliError, CliResult};

pub const TIGHTNESS_HEADER: &str = "model,condition,tightness,tightness_pca2,intra,inter,variance_ratio_1,variance_ratio_2";

/// Cluster statistics of one model under one array condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub model: String,
    /// `ula` (all elements) or `sla` (random masks).
    pub condition: String,
    /// Tightness of the raw embeddings.
    pub tightness: f64,
    /// Tightness of the 2-D PCA projection.
    pub tightness_pca2: f64,
    pub intra: f64,
    pub inter: f64,
    pub variance_ratio: [f64; 2],
    pub points_csv: PathBuf,
}

#[derive(Debug, Clone)]
pub struct FeaturesSummary {
    pub rows: Vec<FeatureRow>,
    pub tightness_csv: PathBuf,
}

fn embed(model: &SnnModel<f32>, signals: &[MaskedSignal]) -> CliResult<Vec<Vec<f64>>> {
    let dict = model.config().dictionary().map_err(CliError::runtime)?;
    let (emb, _) = model.infer(signals, &dict, 256).map_err(CliError::runtime)?;
    Ok(emb.rows().into_iter().map(|r| r.iter().map(|&v| v as f64).collect()).collect())
}

fn full_array(examples: &[LabeledExample]) -> Vec<MaskedSignal> {
    examples
        .iter()
        .map(|e| MaskedSignal {
            y: e.snapshot.y.clone(),
            n_active: e.snapshot.y.len(),
        })
        .collect()
}

pub fn run(cfg: &RunConfig, force: bool) -> CliResult<FeaturesSummary> {
    let seed = cfg.require_seed()?;
    let f = &cfg.features;
    if f.checkpoints.is_empty() {
        return Err(CliError::Validation("features needs at least one checkpoint".into()));
    }
    if f.classes < 2 || f.per_class < 2 {
        return Err(CliError::Validation("need at least two classes of two signals".into()));
    }
    let spec = cfg.dataset_spec()?;
    if f.masked_elements >= spec.n_elements {
        return Err(CliError::Validation("too many masked elements".into()));
    }
    let tightness_csv = f.out_dir.join("tightness.csv");
    let tightness_json = f.out_dir.join("tightness.json");
    let mut models = Vec::new();
    let mut outputs = vec![tightness_csv.clone(), tightness_json.clone()];
    for p in &f.checkpoints {
        let (model, meta) = load_model(p)?;
        let name = model_name(p);
        check_compatible(&name, &meta.encoder, &spec)?;
        if models.iter().any(|(n, _)| n == &name) {
            return Err(CliError::Validation(format!("two checkpoints are named {name}")));
        }
        for c in ["ula", "sla"] {
            outputs.push(f.out_dir.join(format!("pca_{name}_{c}.csv")));
        }
        models.push((name, model));
    }
    let refs: Vec<&std::path::Path> = outputs.iter().map(PathBuf::as_path).collect();
    check_writable(&refs, force)?;

    let (examples, ids) = class_examples(&spec, f.classes, f.per_class, derive_seed(seed, SeedPurpose::Features))
        .map_err(CliError::validation)?;
    let masked = mask_examples(&examples, f.masked_elements, derive_seed(seed, SeedPurpose::FeatureMasks))
        .map_err(CliError::runtime)?;
    let sla: Vec<MaskedSignal> = masked
        .iter()
        .map(|m| MaskedSignal {
            y: m.y.clone(),
            n_active: m.n_active(),
        })
        .collect();
    let conditions = [("ula", full_array(&examples)), ("sla", sla)];

    let mut rows = Vec::new();
    for (name, model) in &models {
        for (cond, signals) in &conditions {
            let feats = embed(model, signals)?;
            let raw = cluster_tightness(&feats, &ids).map_err(CliError::runtime)?;
            let pca = pca_project(&feats, 2).map_err(CliError::runtime)?;
            let proj = cluster_tightness(&pca.points, &ids).map_err(CliError::runtime)?;
            let points_csv = f.out_dir.join(format!("pca_{name}_{cond}.csv"));
            let mut text = String::from("x,y,class_id\n");
            for (p, c) in pca.points.iter().zip(&ids) {
                writeln!(text, "{},{},{c}", p[0], p[1]).expect("string write");
            }
            write_text_atomic(&points_csv, &text)?;
            rows.push(FeatureRow {
                model: name.clone(),
                condition: cond.to_string(),
                tightness: raw.ratio,
                tightness_pca2: proj.ratio,
                intra: raw.intra,
                inter: raw.inter,
                variance_ratio: [pca.variance_ratio[0], pca.variance_ratio[1]],
                points_csv,
            });
        }
    }
    let mut text = format!("{TIGHTNESS_HEADER}\n");
    for r in &rows {
        writeln!(
            text,
            "{},{},{},{},{},{},{},{}",
            r.model, r.condition, r.tightness, r.tightness_pca2, r.intra, r.inter, r.variance_ratio[0], r.variance_ratio[1]
        )
        .expect("string write");
    }
    write_text_atomic(&tightness_csv, &text)?;
    write_text_atomic(&tightness_json, &serde_json::to_string_pretty(&rows).map_err(CliError::runtime)?)?;
    Ok(FeaturesSummary { rows, tightness_csv })
}
