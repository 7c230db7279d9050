use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::PathBuf;

use sparse_doa::data_gen::read_dataset;
use sparse_doa::nn_core::AdamConfig;
use sparse_doa::snn_model::{EpochLog, TrainConfig, Trainer};
use sparse_doa::Error;

use super::{check_writable, ensure_parent, save_model, sha256_file, sidecar_path, ModelMeta};
use crate::config::{check_distinct, derive_seed, RunConfig, SeedPurpose};
use crate::error::{CliError, CliResult};

pub const LOSS_HEADER: &str = "epoch,total,bce,contrastive,steps";

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub checkpoint: PathBuf,
    pub loss_log: PathBuf,
    pub logs: Vec<EpochLog>,
}

pub fn loss_row(l: &EpochLog) -> String {
    format!("{},{},{},{},{}", l.epoch, l.total, l.bce, l.contrastive, l.steps)
}

pub fn run(cfg: &RunConfig, force: bool) -> CliResult<TrainSummary> {
    let seed = cfg.require_seed()?;
    let t = &cfg.train;
    let encoder = t.variant.apply(cfg.encoder.clone()).map_err(CliError::validation)?;
    let dataset = t.dataset.clone().unwrap_or_else(|| cfg.dataset.path.clone());
    let checkpoint = t.checkpoint_path();
    let sidecar = sidecar_path(&checkpoint);
    let loss_log = t.loss_log_path();
    check_distinct(&[&dataset, &checkpoint, &sidecar, &loss_log])?;
    if !dataset.exists() {
        return Err(CliError::Validation(format!("dataset {} does not exist", dataset.display())));
    }
    check_writable(&[&checkpoint, &sidecar, &loss_log], force)?;
    let train_cfg = TrainConfig {
        epochs: t.epochs,
        batch_size: t.batch_size,
        adam: AdamConfig { lr: t.lr, ..AdamConfig::default() },
        seed: derive_seed(seed, SeedPurpose::Train),
        shard_pairs: t.shard_pairs,
    };
    train_cfg.validate().map_err(CliError::validation)?;

    let (header, data) =
        read_dataset(&dataset).map_err(|e| CliError::Runtime(format!("{}: {e}", dataset.display())))?;
    if header.n_elements != encoder.n_elements
        || header.element_spacing != encoder.element_spacing
        || header.grid != encoder.grid
    {
        return Err(CliError::Validation(format!(
            "dataset {} ({} elements, grid {:?}) does not match the encoder ({} elements, grid {:?})",
            dataset.display(),
            header.n_elements,
            header.grid,
            encoder.n_elements,
            encoder.grid
        )));
    }
    let dataset_sha256 = sha256_file(&dataset).map_err(CliError::runtime)?;

    let mut trainer = Trainer::new(encoder.clone(), train_cfg).map_err(CliError::validation)?;
    ensure_parent(&loss_log)?;
    let mut log_file = File::create(&loss_log).map_err(CliError::runtime)?;
    writeln!(log_file, "{LOSS_HEADER}").map_err(CliError::runtime)?;
    drop(log_file);

    let mut meta = ModelMeta {
        variant: t.variant,
        encoder,
        epochs: 0,
        train_seed: train_cfg.seed,
        dataset_sha256,
    };
    let result = trainer.fit(&data, |log, model| {
        let mut f = OpenOptions::new().append(true).open(&loss_log)?;
        writeln!(f, "{}", loss_row(log))?;
        meta.epochs = log.epoch;
        save_model(&checkpoint, model, &meta).map_err(|e| Error::Format(e.to_string()))?;
        log::info!(
            "{} epoch {}: total {:.5} bce {:.5} contrastive {:.5}",
            t.variant,
            log.epoch,
            log.total,
            log.bce,
            log.contrastive
        );
        Ok(())
    });
    match result {
        Ok(logs) => Ok(TrainSummary {
            checkpoint,
            loss_log,
            logs,
        }),
        Err(Error::NonFinite(what)) if trainer.epoch() == 0 => Err(CliError::Runtime(format!(
            "non-finite {what} in the first epoch; no checkpoint was written"
        ))),
        Err(Error::NonFinite(what)) => Err(CliError::Runtime(format!(
            "non-finite {what} in epoch {}; last good checkpoint ({} epochs) kept at {}",
            trainer.epoch() + 1,
            trainer.epoch(),
            checkpoint.display()
        ))),
        Err(e) => Err(CliError::runtime(e)),
    }
}
