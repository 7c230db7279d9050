use std::cell::RefCell;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sparse_doa::data_gen::{generate_blocks, write_dataset, DatasetHeader, DatasetSpec, FORMAT_VERSION};

use super::{check_writable, sha256_file, write_atomic, write_text_atomic};
use crate::config::{check_distinct, RunConfig};
use crate::error::{CliError, CliResult};

/// JSON summary written next to a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub dataset: PathBuf,
    pub spec: DatasetSpec,
    pub total_combinations: u128,
    pub planned_combinations: u128,
    pub planned_records: u128,
    /// Records actually written (absent for a dry run).
    pub records: Option<u64>,
    pub sha256: Option<String>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct GenerateOptions {
    pub force: bool,
    pub dry_run: bool,
}

pub fn run(cfg: &RunConfig, opts: GenerateOptions) -> CliResult<Manifest> {
    let spec = cfg.dataset_spec()?;
    let data_path = cfg.dataset.path.clone();
    let manifest_path = cfg.dataset.manifest_path();
    check_distinct(&[&data_path, &manifest_path])?;
    let mut manifest = Manifest {
        format: "SDOA".into(),
        version: FORMAT_VERSION,
        dataset: data_path.clone(),
        total_combinations: spec.total_combinations().map_err(CliError::validation)?,
        planned_combinations: spec.planned_combinations().map_err(CliError::validation)?,
        planned_records: spec.planned_records().map_err(CliError::validation)?,
        spec,
        records: None,
        sha256: None,
    };
    if opts.dry_run {
        return Ok(manifest);
    }
    check_writable(&[&data_path, &manifest_path], opts.force)?;

    let header = DatasetHeader {
        grid: manifest.spec.grid,
        n_elements: manifest.spec.n_elements,
        element_spacing: manifest.spec.element_spacing,
        k_max: manifest.spec.k_max,
        count: 0,
    };
    let blocks = generate_blocks(&manifest.spec, 2048).map_err(CliError::validation)?;
    // the writer takes plain records; a generation error ends the stream and is
    // reported after the write
    let failure = RefCell::new(None);
    let records = blocks
        .map_while(|b| match b {
            Ok(v) => Some(v),
            Err(e) => {
                *failure.borrow_mut() = Some(e);
                None
            }
        })
        .flatten();
    let mut written = 0;
    write_atomic(&data_path, |tmp| {
        written = write_dataset(tmp, &header, records).map_err(CliError::runtime)?;
        if let Some(e) = failure.borrow_mut().take() {
            let _ = std::fs::remove_file(tmp);
            return Err(CliError::runtime(e));
        }
        Ok(())
    })?;
    manifest.records = Some(written);
    manifest.sha256 = Some(sha256_file(&data_path).map_err(CliError::runtime)?);
    let json = serde_json::to_string_pretty(&manifest).map_err(CliError::runtime)?;
    write_text_atomic(&manifest_path, &json)?;
    log::info!("wrote {written} records to {}", data_path.display());
    Ok(manifest)
}
