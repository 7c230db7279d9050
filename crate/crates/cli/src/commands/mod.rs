//! One module per subcommand plus the file helpers they share.

pub mod eval;
pub mod features;
pub mod generate;
pub mod train;

use std::fs::{self, File};
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use sparse_doa::data_gen::DatasetSpec;
use sparse_doa::nn_core::{load_checkpoint, save_checkpoint, Parameterized};
use sparse_doa::snn_model::{EncoderConfig, SnnModel, Variant};

use crate::error::{CliError, CliResult};

/// Model description stored next to every checkpoint as `<checkpoint>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub variant: Variant,
    pub encoder: EncoderConfig,
    pub epochs: usize,
    pub train_seed: u64,
    pub dataset_sha256: String,
}

pub fn sidecar_path(checkpoint: &Path) -> PathBuf {
    checkpoint.with_extension("json")
}

fn partial_path(path: &Path) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".partial");
    PathBuf::from(p)
}

pub(crate) fn ensure_parent(path: &Path) -> CliResult<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => fs::create_dir_all(p).map_err(CliError::runtime),
        _ => Ok(()),
    }
}

/// Writes through a `.partial` file and renames, so readers never see half a file.
pub(crate) fn write_atomic<F>(path: &Path, write: F) -> CliResult<()>
where
    F: FnOnce(&Path) -> CliResult<()>,
{
    ensure_parent(path)?;
    let tmp = partial_path(path);
    write(&tmp)?;
    fs::rename(&tmp, path).map_err(|e| CliError::Runtime(format!("rename to {}: {e}", path.display())))
}

pub(crate) fn write_text_atomic(path: &Path, text: &str) -> CliResult<()> {
    write_atomic(path, |tmp| {
        let mut f = File::create(tmp).map_err(CliError::runtime)?;
        f.write_all(text.as_bytes()).map_err(CliError::runtime)?;
        f.sync_all().map_err(CliError::runtime)
    })
}

/// Rejects existing outputs unless `force` is set.
pub(crate) fn check_writable(paths: &[&Path], force: bool) -> CliResult<()> {
    if force {
        return Ok(());
    }
    for p in paths {
        if p.exists() {
            return Err(CliError::Validation(format!(
                "{} already exists (use --force to overwrite)",
                p.display()
            )));
        }
    }
    Ok(())
}

pub fn sha256_file(path: &Path) -> io::Result<String> {
    let mut f = File::open(path)?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

pub fn save_model(path: &Path, model: &SnnModel<f32>, meta: &ModelMeta) -> CliResult<()> {
    let json = serde_json::to_string_pretty(meta).map_err(CliError::runtime)?;
    write_atomic(path, |tmp| save_checkpoint(tmp, &model.params()).map_err(CliError::runtime))?;
    write_text_atomic(&sidecar_path(path), &json)
}

/// Loads a checkpoint and its sidecar. Missing files are validation errors; corrupt
/// ones are runtime errors.
pub fn load_model(path: &Path) -> CliResult<(SnnModel<f32>, ModelMeta)> {
    let side = sidecar_path(path);
    for p in [path, side.as_path()] {
        if !p.exists() {
            return Err(CliError::Validation(format!("{} does not exist", p.display())));
        }
    }
    let text = fs::read_to_string(&side).map_err(CliError::runtime)?;
    let meta: ModelMeta =
        serde_json::from_str(&text).map_err(|e| CliError::Runtime(format!("{}: {e}", side.display())))?;
    let tensors = load_checkpoint(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    // weights are overwritten below; the generator only shapes the allocation
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let mut model = SnnModel::new(meta.encoder.clone(), &mut rng).map_err(CliError::runtime)?;
    model
        .load_tensors(&tensors)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    Ok((model, meta))
}

/// Fails unless a model's array and grid match the evaluation recipe.
pub(crate) fn check_compatible(name: &str, enc: &EncoderConfig, spec: &DatasetSpec) -> CliResult<()> {
    if enc.n_elements != spec.n_elements || enc.element_spacing != spec.element_spacing || enc.grid != spec.grid {
        return Err(CliError::Validation(format!(
            "checkpoint {name} was built for {} elements at spacing {} over grid {:?}, \
             but the configuration uses {} elements at spacing {} over grid {:?}",
            enc.n_elements, enc.element_spacing, enc.grid, spec.n_elements, spec.element_spacing, spec.grid
        )));
    }
    Ok(())
}

pub(crate) fn model_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "model".into())
}
