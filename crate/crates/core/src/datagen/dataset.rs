use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{augment, contrast_normalize, synthesize_scene, AugmentParams, Sample, SceneParams, Split};
use crate::error::{Error, Result};
use crate::raster::{self, GrayImage, LabelMask, NUM_CLASSES};
use crate::seed::{self, streams};

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const DATASET_FILE: &str = "dataset.json";

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetParams {
    pub scene: SceneParams,
    pub augment: AugmentParams,
}

/// One line of `manifest.jsonl`. Paths are relative to the manifest's
/// directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub id: String,
    pub image_path: String,
    pub mask_path: String,
    pub split: Split,
    pub seed: u64,
}

/// Global dataset facts stored next to the manifest in `dataset.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub height: usize,
    pub width: usize,
    pub seed: u64,
    pub split_ratio: f64,
    pub n_train: usize,
    pub n_test: usize,
    /// Per-class pixel counts over the training split.
    pub class_counts: [u64; NUM_CLASSES],
    pub params: DatasetParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub records: Vec<ManifestRecord>,
    pub info: DatasetInfo,
    /// Directory the relative record paths resolve against.
    pub root: PathBuf,
}

impl DatasetManifest {
    pub fn class_counts(&self) -> [u64; NUM_CLASSES] {
        self.info.class_counts
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn image_path(&self, record: &ManifestRecord) -> PathBuf {
        self.root.join(&record.image_path)
    }

    pub fn mask_path(&self, record: &ManifestRecord) -> PathBuf {
        self.root.join(&record.mask_path)
    }

    pub fn load_image(&self, record: &ManifestRecord) -> Result<GrayImage> {
        raster::read_gray_png(&self.image_path(record))
    }

    pub fn load_mask(&self, record: &ManifestRecord) -> Result<LabelMask> {
        raster::read_mask_png(&self.mask_path(record))
    }

    /// Reads `manifest.jsonl` (given either the file or its directory) and
    /// the sibling `dataset.json`.
    pub fn load(path: &Path) -> Result<Self> {
        const OP: &str = "datagen::DatasetManifest::load";
        let manifest_path = if path.is_dir() { path.join(MANIFEST_FILE) } else { path.to_path_buf() };
        let root = manifest_path.parent().map(Path::to_path_buf).unwrap_or_default();
        let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(OP, &manifest_path, e))?;
        let records = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(|e| Error::format(OP, &manifest_path, e)))
            .collect::<Result<Vec<ManifestRecord>>>()?;
        let info_path = root.join(DATASET_FILE);
        let info_text = fs::read_to_string(&info_path).map_err(|e| Error::io(OP, &info_path, e))?;
        let info = serde_json::from_str(&info_text).map_err(|e| Error::format(OP, &info_path, e))?;
        Ok(DatasetManifest { records, info, root })
    }

    /// Loads every sample of one split into memory, in manifest order.
    pub fn load_samples(&self, split: Split) -> Result<Vec<Sample>> {
        self.split(split)
            .map(|r| {
                Sample::new(
                    self.load_image(r)?,
                    self.load_mask(r)?,
                    super::SampleMeta { id: r.id.clone(), seed: r.seed, split: r.split, augmentation: Vec::new() },
                )
            })
            .collect()
    }
}

/// Number of training records for `n` samples at `ratio`.
pub fn train_count(n: usize, ratio: f64) -> usize {
    ((n as f64 * ratio).round() as usize).clamp(1, n - 1)
}

/// Generates `n_samples` scenes, splits them (before augmentation) into
/// train and test, augments the training scenes, and writes images, masks,
/// `manifest.jsonl` and `dataset.json` under `out_dir`.
///
/// Test scenes only receive contrast normalisation so that both splits share
/// an intensity distribution.
pub fn build_dataset(
    n_samples: usize,
    split_ratio: f64,
    seed: u64,
    out_dir: &Path,
    params: &DatasetParams,
) -> Result<DatasetManifest> {
    const OP: &str = "datagen::build_dataset";
    if n_samples < 10 {
        return Err(Error::invalid(OP, format!("n_samples {n_samples} < 10")));
    }
    if !(split_ratio > 0.0 && split_ratio < 1.0) {
        return Err(Error::invalid(OP, format!("split ratio {split_ratio} outside (0, 1)")));
    }
    let n_train = train_count(n_samples, split_ratio);
    let mut order: Vec<usize> = (0..n_samples).collect();
    order.shuffle(&mut seed::rng(seed::derive(seed, streams::SPLIT, 0)));
    let mut split = vec![Split::Test; n_samples];
    for &i in &order[..n_train] {
        split[i] = Split::Train;
    }

    for sub in ["images", "masks"] {
        let dir = out_dir.join(sub);
        fs::create_dir_all(&dir).map_err(|e| Error::io(OP, &dir, e))?;
    }

    let mut records = Vec::with_capacity(n_samples);
    let mut class_counts = [0u64; NUM_CLASSES];
    for (i, &split) in split.iter().enumerate() {
        let id = format!("s{i:05}");
        let scene_seed = seed::derive(seed, streams::SCENE, i as u64);
        let scene = synthesize_scene(&id, scene_seed, split, &params.scene)?;
        let sample = match split {
            Split::Train => augment(&scene, seed::derive(scene_seed, streams::AUGMENT, 0), &params.augment)?,
            Split::Test => {
                let image = contrast_normalize(&scene.image, params.augment.target_mean, params.augment.target_std);
                Sample { image, ..scene }
            }
        };
        if split == Split::Train {
            for (total, c) in class_counts.iter_mut().zip(sample.mask.class_counts()) {
                *total += c;
            }
        }
        let record = ManifestRecord {
            image_path: format!("images/{id}.png"),
            mask_path: format!("masks/{id}.png"),
            id,
            split,
            seed: scene_seed,
        };
        raster::write_gray_png(&out_dir.join(&record.image_path), &sample.image)?;
        raster::write_mask_png(&out_dir.join(&record.mask_path), &sample.mask)?;
        records.push(record);
    }
    if let Some(k) = class_counts.iter().position(|&c| c == 0) {
        return Err(Error::invalid(OP, format!("training split has no pixels of class {k}")));
    }

    let info = DatasetInfo {
        height: params.scene.height,
        width: params.scene.width,
        seed,
        split_ratio,
        n_train,
        n_test: n_samples - n_train,
        class_counts,
        params: params.clone(),
    };
    let manifest_path = out_dir.join(MANIFEST_FILE);
    let mut lines = Vec::new();
    for r in &records {
        serde_json::to_writer(&mut lines, r).map_err(|e| Error::format(OP, &manifest_path, e))?;
        lines.push(b'\n');
    }
    write_file(OP, &manifest_path, &lines)?;
    let info_path = out_dir.join(DATASET_FILE);
    let mut info_json = serde_json::to_vec_pretty(&info).map_err(|e| Error::format(OP, &info_path, e))?;
    info_json.push(b'\n');
    write_file(OP, &info_path, &info_json)?;

    Ok(DatasetManifest { records, info, root: out_dir.to_path_buf() })
}

fn write_file(op: &'static str, path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(op, path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(op, path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> DatasetParams {
        DatasetParams { scene: SceneParams::with_canvas(64, 64), ..Default::default() }
    }

    #[test]
    fn split_counts_follow_ratio() {
        let dir = tempfile::tempdir().unwrap();
        let m = build_dataset(100, 0.7, 3, dir.path(), &small()).unwrap();
        assert_eq!(m.split(Split::Train).count(), 70);
        assert_eq!(m.split(Split::Test).count(), 30);
        let total: u64 = m.class_counts().iter().sum();
        assert_eq!(total, 70 * 64 * 64);
    }

    #[test]
    fn manifest_round_trips_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let m = build_dataset(12, 0.7, 5, dir.path(), &small()).unwrap();
        let loaded = DatasetManifest::load(&dir.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(loaded.records, m.records);
        assert_eq!(loaded.info, m.info);
        let train = loaded.load_samples(Split::Train).unwrap();
        assert_eq!(train.len(), m.info.n_train);
    }

    #[test]
    fn rejects_bad_arguments() {
        let dir = tempfile::tempdir().unwrap();
        assert!(build_dataset(9, 0.7, 0, dir.path(), &small()).is_err());
        assert!(build_dataset(20, 1.0, 0, dir.path(), &small()).is_err());
        assert!(build_dataset(20, 0.0, 0, dir.path(), &small()).is_err());
    }

    #[test]
    fn unwritable_out_dir_errors() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, b"x").unwrap();
        let err = build_dataset(10, 0.7, 0, &blocker.join("sub"), &small()).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }
}
