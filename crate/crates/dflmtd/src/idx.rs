//! Dataset loading from IDX files on disk.

use std::path::{Path, PathBuf};

use dflmtd_core::config::{DatasetKind, ExperimentConfig};
use dflmtd_core::data::{self, Dataset};
use dflmtd_core::federation::ExperimentData;

/// Environment variable naming the dataset root; `<root>/<kind>` holds the files.
pub const DATA_DIR_ENV: &str = "DFLMTD_DATA_DIR";

pub const TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
pub const TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
pub const TEST_LABELS: &str = "t10k-labels-idx1-ubyte";

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("dataset.dir is not set and ${DATA_DIR_ENV} is undefined; cannot locate {kind} files")]
    NoDirectory { kind: &'static str },
    #[error("cannot read {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid IDX file {path}")]
    Format {
        path: PathBuf,
        #[source]
        source: dflmtd_core::Error,
    },
}

/// `dataset.dir` when set, otherwise `$DFLMTD_DATA_DIR/<kind>`.
pub fn resolve_dir(cfg: &ExperimentConfig) -> Result<PathBuf, LoadError> {
    if let Some(dir) = &cfg.dataset.dir {
        return Ok(PathBuf::from(dir));
    }
    let kind = cfg.dataset.kind.as_str();
    std::env::var_os(DATA_DIR_ENV)
        .map(|root| Path::new(&root).join(kind))
        .ok_or(LoadError::NoDirectory { kind })
}

fn read(dir: &Path, name: &str) -> Result<Vec<u8>, LoadError> {
    let path = dir.join(name);
    std::fs::read(&path).map_err(|source| LoadError::Io { path, source })
}

fn load_pair(dir: &Path, images: &str, labels: &str) -> Result<Dataset, LoadError> {
    let img = read(dir, images)?;
    let lbl = read(dir, labels)?;
    data::parse_idx(&img, &lbl).map_err(|source| LoadError::Format {
        path: dir.join(images),
        source,
    })
}

/// The full train and test splits stored in `dir`.
pub fn load_idx_dir(dir: &Path) -> Result<(Dataset, Dataset), LoadError> {
    Ok((
        load_pair(dir, TRAIN_IMAGES, TRAIN_LABELS)?,
        load_pair(dir, TEST_IMAGES, TEST_LABELS)?,
    ))
}

/// Generates or loads the data an experiment runs on.
pub fn experiment_data(cfg: &ExperimentConfig) -> anyhow::Result<ExperimentData> {
    match cfg.dataset.kind {
        DatasetKind::Synthetic => Ok(ExperimentData::synthetic(cfg)?),
        DatasetKind::Mnist | DatasetKind::Fashionmnist => {
            let dir = resolve_dir(cfg)?;
            let (train, test) = load_idx_dir(&dir)?;
            log::info!(
                "loaded {} train / {} test samples from {}",
                train.len(),
                test.len(),
                dir.display()
            );
            Ok(ExperimentData::sample(&train, &test, cfg)?)
        }
    }
}
