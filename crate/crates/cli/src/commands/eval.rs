use std::io::Write;
use std::path::PathBuf;

use sparse_doa::data_gen::{mask_examples, read_dataset, test_examples, MaskedExample};
use sparse_doa::eval_metrics::{build_report, snr_edges, threshold_detect, to_json, write_csv, MetricsReport};
use sparse_doa::omp_baseline::{omp_solve, omp_to_label, residual_tolerance_for_snr};
use sparse_doa::par;
use sparse_doa::snn_model::{MaskedSignal, SnnModel};

use super::{check_compatible, check_writable, load_model, model_name, write_atomic, write_text_atomic};
use crate::config::{check_distinct, derive_seed, RunConfig, SeedPurpose};
use crate::error::{CliError, CliResult};

pub const OMP_NAME: &str = "cs-omp";
const INFER_CHUNK: usize = 256;

#[derive(Debug, Clone)]
pub struct EvalSummary {
    pub reports: Vec<MetricsReport>,
    pub csv: PathBuf,
    pub json: PathBuf,
}

/// Thresholded predictions of one model on masked signals. The active count is
/// recovered from the input by magnitude thresholding, as it would be in deployment.
pub fn predict(model: &SnnModel<f32>, set: &[MaskedExample], threshold: f64) -> CliResult<Vec<Vec<bool>>> {
    let dict = model.config().dictionary().map_err(CliError::runtime)?;
    let signals = set
        .iter()
        .map(|m| MaskedSignal::detect(m.y.clone()))
        .collect::<sparse_doa::Result<Vec<_>>>()
        .map_err(CliError::runtime)?;
    let (_, probs) = model.infer(&signals, &dict, INFER_CHUNK).map_err(CliError::runtime)?;
    Ok(probs.rows().into_iter().map(|r| threshold_detect(r.as_slice().expect("row-major"), threshold)).collect())
}

pub fn omp_predict(cfg: &RunConfig, set: &[MaskedExample]) -> CliResult<Vec<Vec<bool>>> {
    let spec = &cfg.dataset.spec;
    let e = &cfg.eval;
    let geometry = spec.geometry().map_err(CliError::validation)?;
    let out = par::map_slice(set, |m| -> sparse_doa::Result<Vec<bool>> {
        let g = geometry.with_mask(m.mask.clone())?;
        let tol = e.omp_use_snr.then(|| residual_tolerance_for_snr(m.example.snapshot.snr_db));
        let r = omp_solve(&m.y, &g, &spec.grid, e.omp_k_max, tol)?;
        omp_to_label(&r, spec.grid.len())
    });
    out.into_iter().collect::<sparse_doa::Result<_>>().map_err(CliError::runtime)
}

/// The masked evaluation set: a seeded held-out draw, or the records of a dataset file.
pub fn eval_set(cfg: &RunConfig) -> CliResult<Vec<MaskedExample>> {
    let seed = cfg.require_seed()?;
    let e = &cfg.eval;
    let mut spec = cfg.dataset.spec.clone();
    spec.snr_db = e.snr_db;
    if let Some(k) = e.k_max {
        spec.k_max = k;
    }
    spec.validate().map_err(CliError::validation)?;
    if e.masked_elements >= spec.n_elements {
        return Err(CliError::Validation(format!(
            "cannot zero {} of {} elements",
            e.masked_elements, spec.n_elements
        )));
    }
    let examples = match &e.dataset {
        Some(path) => {
            if !path.exists() {
                return Err(CliError::Validation(format!("dataset {} does not exist", path.display())));
            }
            let (header, mut data) =
                read_dataset(path).map_err(|err| CliError::Runtime(format!("{}: {err}", path.display())))?;
            if header.grid != spec.grid || header.n_elements != spec.n_elements {
                return Err(CliError::Validation(format!(
                    "dataset {} does not match the configured array and grid",
                    path.display()
                )));
            }
            data.truncate(e.signals);
            data
        }
        None => test_examples(&spec, e.signals, derive_seed(seed, SeedPurpose::TestSet)).map_err(CliError::runtime)?,
    };
    mask_examples(&examples, e.masked_elements, derive_seed(seed, SeedPurpose::TestMasks)).map_err(CliError::runtime)
}

pub fn run(cfg: &RunConfig, force: bool) -> CliResult<EvalSummary> {
    let e = &cfg.eval;
    if e.checkpoints.is_empty() && !e.include_omp {
        return Err(CliError::Validation("nothing to evaluate: give a checkpoint or enable OMP".into()));
    }
    if !(0.0..1.0).contains(&e.threshold) {
        return Err(CliError::Validation("threshold must lie in [0, 1)".into()));
    }
    let edges = snr_edges(e.snr_db.0, e.snr_db.1, e.snr_buckets).map_err(CliError::validation)?;
    let mut outputs: Vec<&std::path::Path> = vec![&e.csv, &e.json];
    outputs.extend(e.checkpoints.iter().map(PathBuf::as_path));
    check_distinct(&outputs)?;
    check_writable(&[&e.csv, &e.json], force)?;
    let mut names: Vec<String> = e.checkpoints.iter().map(|p| model_name(p)).collect();
    if e.include_omp {
        names.push(OMP_NAME.into());
    }
    for (i, n) in names.iter().enumerate() {
        if names[..i].contains(n) {
            return Err(CliError::Validation(format!("two evaluated models are named {n}")));
        }
    }
    let mut models = Vec::new();
    for p in &e.checkpoints {
        let (model, meta) = load_model(p)?;
        check_compatible(&model_name(p), &meta.encoder, &cfg.dataset.spec)?;
        models.push((model_name(p), model));
    }

    let set = eval_set(cfg)?;
    let gts: Vec<Vec<bool>> = set.iter().map(|m| m.example.gt.clone()).collect();
    let snrs: Vec<f64> = set.iter().map(|m| m.example.snapshot.snr_db).collect();
    let mut reports = Vec::new();
    for (name, model) in &models {
        let preds = predict(model, &set, e.threshold)?;
        reports.push(build_report(name, &preds, &gts, &snrs, &edges).map_err(CliError::runtime)?);
    }
    if e.include_omp {
        let preds = omp_predict(cfg, &set)?;
        reports.push(build_report(OMP_NAME, &preds, &gts, &snrs, &edges).map_err(CliError::runtime)?);
    }
    for r in &reports {
        log::info!(
            "{}: accuracy {:.4} precision {:.4} recall {:.4} f1 {:.4}",
            r.model,
            r.overall.accuracy,
            r.overall.precision,
            r.overall.recall,
            r.overall.f1
        );
    }
    write_atomic(&e.csv, |tmp| {
        let f = std::fs::File::create(tmp).map_err(CliError::runtime)?;
        let mut w = std::io::BufWriter::new(f);
        write_csv(&reports, &mut w).map_err(CliError::runtime)?;
        w.flush().map_err(CliError::runtime)
    })?;
    write_text_atomic(&e.json, &to_json(&reports).map_err(CliError::runtime)?)?;
    Ok(EvalSummary {
        reports,
        csv: e.csv.clone(),
        json: e.json.clone(),
    })
}
