//! Run configuration: a JSON document with one section per command. Every field has
//! a default; command-line flags override file values.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sparse_doa::data_gen::DatasetSpec;
use sparse_doa::snn_model::{EncoderConfig, Variant};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed. Required by every command; sub-seeds are derived from it.
    pub seed: Option<u64>,
    /// Worker thread cap (all cores when unset).
    pub threads: Option<usize>,
    pub dataset: DatasetSection,
    pub encoder: EncoderConfig,
    pub train: TrainSection,
    pub eval: EvalSection,
    pub features: FeaturesSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub path: PathBuf,
    /// Defaults to `<path>.manifest.json`.
    pub manifest: Option<PathBuf>,
    /// Recipe; its `seed` field is ignored in favor of the run seed.
    pub spec: DatasetSpec,
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self {
            path: PathBuf::from("data/train.sdoa"),
            manifest: None,
            spec: DatasetSpec::default(),
        }
    }
}

impl DatasetSection {
    pub fn manifest_path(&self) -> PathBuf {
        self.manifest.clone().unwrap_or_else(|| {
            let mut p = self.path.clone().into_os_string();
            p.push(".manifest.json");
            PathBuf::from(p)
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub variant: Variant,
    /// Training data; defaults to the dataset section's path.
    pub dataset: Option<PathBuf>,
    pub epochs: usize,
    /// Signals per step (two per Siamese pair).
    pub batch_size: usize,
    pub lr: f64,
    pub shard_pairs: usize,
    /// Defaults to `runs/<variant>.sdow`.
    pub checkpoint: Option<PathBuf>,
    /// Defaults to `runs/<variant>_loss.csv`.
    pub loss_log: Option<PathBuf>,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            variant: Variant::Snn,
            dataset: None,
            epochs: 1000,
            batch_size: 1024,
            lr: 1e-4,
            shard_pairs: 32,
            checkpoint: None,
            loss_log: None,
        }
    }
}

impl TrainSection {
    pub fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint
            .clone()
            .unwrap_or_else(|| PathBuf::from(format!("runs/{}.sdow", self.variant)))
    }

    pub fn loss_log_path(&self) -> PathBuf {
        self.loss_log
            .clone()
            .unwrap_or_else(|| PathBuf::from(format!("runs/{}_loss.csv", self.variant)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub checkpoints: Vec<PathBuf>,
    /// Evaluate on the records of this dataset file instead of a fresh seeded set.
    pub dataset: Option<PathBuf>,
    pub signals: usize,
    /// Elements zeroed per test signal (6 of 20 is sparsity 0.3).
    pub masked_elements: usize,
    pub snr_db: (f64, f64),
    pub snr_buckets: usize,
    /// Source count cap of the test set; defaults to the dataset's `k_max`.
    pub k_max: Option<usize>,
    pub threshold: f64,
    pub include_omp: bool,
    pub omp_k_max: usize,
    /// Stop OMP at residual `10^(-SNR/20) ||y||` using the true SNR of each signal.
    pub omp_use_snr: bool,
    pub csv: PathBuf,
    pub json: PathBuf,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            checkpoints: Vec::new(),
            dataset: None,
            signals: 5000,
            masked_elements: 6,
            snr_db: (0.0, 30.0),
            snr_buckets: 6,
            k_max: None,
            threshold: 0.5,
            include_omp: false,
            omp_k_max: 3,
            omp_use_snr: true,
            csv: PathBuf::from("runs/metrics.csv"),
            json: PathBuf::from("runs/metrics.json"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeaturesSection {
    pub checkpoints: Vec<PathBuf>,
    pub classes: usize,
    pub per_class: usize,
    /// Elements zeroed per signal in the sparse-array condition.
    pub masked_elements: usize,
    pub out_dir: PathBuf,
}

impl Default for FeaturesSection {
    fn default() -> Self {
        Self {
            checkpoints: Vec::new(),
            classes: 10,
            per_class: 500,
            masked_elements: 6,
            out_dir: PathBuf::from("runs/features"),
        }
    }
}

/// Independent sub-seeds of the master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedPurpose {
    Dataset = 1,
    Train = 2,
    TestSet = 3,
    TestMasks = 4,
    Features = 5,
    FeatureMasks = 6,
}

pub fn derive_seed(seed: u64, purpose: SeedPurpose) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(purpose as u64);
    rng.next_u64()
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
    }

    pub fn require_seed(&self) -> CliResult<u64> {
        self.seed
            .ok_or_else(|| CliError::Validation("a seed is required (--seed or \"seed\" in the config)".into()))
    }

    /// The dataset recipe with the derived dataset seed filled in.
    pub fn dataset_spec(&self) -> CliResult<DatasetSpec> {
        let mut spec = self.dataset.spec.clone();
        spec.seed = derive_seed(self.require_seed()?, SeedPurpose::Dataset);
        spec.validate().map_err(CliError::validation)?;
        Ok(spec)
    }
}

/// Fails when two paths of one command coincide.
pub fn check_distinct(paths: &[&Path]) -> CliResult<()> {
    for (i, a) in paths.iter().enumerate() {
        for b in &paths[i + 1..] {
            if a == b {
                return Err(CliError::Validation(format!("path {} is used twice", a.display())));
            }
        }
    }
    Ok(())
}
