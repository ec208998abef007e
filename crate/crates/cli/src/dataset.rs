//! Labeled image sets stored as `DIR/<label>/*.t3b`.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use weavelab_core::adversary::Sample;

use crate::format::{load_t3b, save_t3b, AnyTensor};

/// T3B files directly inside `dir`, sorted by file name.
pub fn t3b_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "t3b") {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Loads every `DIR/<label>/*.t3b`, ordered by label then file name.
/// Integer tensors are converted to reals as-is.
pub fn load_labeled_dir(dir: &Path) -> Result<Vec<Sample>> {
    let mut labels = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        if !path.is_dir() {
            continue;
        }
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        let label: usize = name
            .parse()
            .with_context(|| format!("class directory {} is not a non-negative integer", path.display()))?;
        labels.push((label, path));
    }
    labels.sort();
    let mut samples: Vec<Sample> = Vec::new();
    for (label, path) in labels {
        for file in t3b_files(&path)? {
            let image = match load_t3b(&file).with_context(|| format!("loading {}", file.display()))? {
                AnyTensor::F64(t) => t,
                AnyTensor::I32(t) => t.map(f64::from),
            };
            if let Some(first) = samples.first() {
                if !first.image.same_dims(&image) {
                    bail!("{} has dims {:?}, expected {:?}", file.display(), image.dims(), first.image.dims());
                }
            }
            samples.push(Sample { image, label });
        }
    }
    if samples.is_empty() {
        bail!("no samples under {}", dir.display());
    }
    Ok(samples)
}

/// Writes `samples` in the layout read by [`load_labeled_dir`].
pub fn save_labeled_dir(dir: &Path, samples: &[Sample]) -> Result<()> {
    for (i, s) in samples.iter().enumerate() {
        let class_dir = dir.join(s.label.to_string());
        fs::create_dir_all(&class_dir)?;
        save_t3b(&class_dir.join(format!("{i:06}.t3b")), &AnyTensor::F64(s.image.clone()))?;
    }
    Ok(())
}

/// Largest label + 1.
pub fn num_classes(samples: &[Sample]) -> usize {
    samples.iter().map(|s| s.label + 1).max().unwrap_or(0)
}

pub fn dims(samples: &[Sample]) -> (usize, usize, usize) {
    samples.first().map(|s| s.image.dims()).unwrap_or((0, 0, 0))
}
