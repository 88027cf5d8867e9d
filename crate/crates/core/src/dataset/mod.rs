//! Labeled image collections: CSV ingestion, seeded splitting, tensor
//! conversion and a synthetic flower generator.

mod synthetic;

pub use synthetic::{generate_synthetic_flowers, signature_hue, MAX_SYNTHETIC_CLASSES};

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{read_image, write_png, RgbImage};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledImage {
    pub id: String,
    pub image: RgbImage,
    pub label: usize,
    pub class_name: String,
}

/// Items sorted by id, with a class-name table indexed by label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    items: Vec<LabeledImage>,
    class_names: Vec<String>,
}

impl Dataset {
    pub fn new(mut items: Vec<LabeledImage>, class_names: Vec<String>) -> Result<Self> {
        items.sort_by(|a, b| a.id.cmp(&b.id));
        for pair in items.windows(2) {
            if pair[0].id == pair[1].id {
                return Err(Error::InvalidConfig(format!("duplicate item id {}", pair[0].id)));
            }
        }
        if let Some(item) = items.iter().find(|i| i.label >= class_names.len()) {
            return Err(Error::LabelOutOfRange {
                label: item.label,
                classes: class_names.len(),
            });
        }
        Ok(Self { items, class_names })
    }

    pub fn items(&self) -> &[LabeledImage] {
        &self.items
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn ids(&self) -> Vec<String> {
        self.items.iter().map(|i| i.id.clone()).collect()
    }

    /// Items with the given ids, in the order given.
    pub fn select(&self, ids: &[String]) -> Result<Vec<&LabeledImage>> {
        ids.iter()
            .map(|id| {
                self.items
                    .binary_search_by(|i| i.id.as_str().cmp(id))
                    .map(|pos| &self.items[pos])
                    .map_err(|_| Error::InvalidConfig(format!("unknown item id {id}")))
            })
            .collect()
    }

    /// A dataset holding only the first `limit` items in id order.
    pub fn truncated(&self, limit: usize) -> Self {
        Self {
            items: self.items.iter().take(limit).cloned().collect(),
            class_names: self.class_names.clone(),
        }
    }
}

/// Preprocessed inputs `N×3×S×S` with labels.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorDataset {
    inputs: Option<Tensor>,
    labels: Vec<usize>,
    num_classes: usize,
}

impl TensorDataset {
    pub fn new(inputs: Tensor, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        inputs.dims4()?;
        if inputs.shape()[0] != labels.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} inputs but {} labels",
                inputs.shape()[0],
                labels.len()
            )));
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::LabelOutOfRange {
                label,
                classes: num_classes,
            });
        }
        Ok(Self {
            inputs: Some(inputs),
            labels,
            num_classes,
        })
    }

    /// An empty set, useful as a placeholder split.
    pub fn empty(num_classes: usize) -> Self {
        Self {
            inputs: None,
            labels: Vec::new(),
            num_classes,
        }
    }

    pub fn from_items(items: &[&LabeledImage], size: usize, num_classes: usize) -> Result<Self> {
        if items.is_empty() {
            return Ok(Self::empty(num_classes));
        }
        let tensors = items
            .iter()
            .map(|i| preprocess(&i.image, size))
            .collect::<Result<Vec<_>>>()?;
        let labels = items.iter().map(|i| i.label).collect();
        Self::new(Tensor::stack(&tensors)?, labels, num_classes)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn inputs(&self) -> Option<&Tensor> {
        self.inputs.as_ref()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Consecutive index ranges of at most `batch_size` items; the last may
    /// be short.
    pub fn batch_indices(&self, batch_size: usize) -> Vec<Vec<usize>> {
        (0..self.len())
            .collect::<Vec<_>>()
            .chunks(batch_size.max(1))
            .map(<[usize]>::to_vec)
            .collect()
    }

    pub fn batch(&self, indices: &[usize]) -> Result<(Tensor, Vec<usize>)> {
        let inputs = self.inputs.as_ref().ok_or(Error::EmptyDataset)?;
        let x = inputs.select_rows(indices)?;
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Ok((x, labels))
    }
}

/// Reads `labels.csv` (`filename,label,class_name`) and decodes every listed
/// image from `image_dir`.
pub fn load_dataset(image_dir: impl AsRef<Path>, labels_file: impl AsRef<Path>) -> Result<Dataset> {
    let image_dir = image_dir.as_ref();
    let labels_file = labels_file.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(labels_file)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(labels_file, io),
            other => Error::BadLabelRow {
                row: 1,
                reason: format!("{other:?}"),
            },
        })?;
    let headers = reader.headers().map_err(|e| Error::BadLabelRow {
        row: 1,
        reason: e.to_string(),
    })?;
    if headers.iter().collect::<Vec<_>>() != ["filename", "label", "class_name"] {
        return Err(Error::BadLabelRow {
            row: 1,
            reason: format!("expected header filename,label,class_name, got {headers:?}"),
        });
    }

    let mut names: BTreeMap<usize, String> = BTreeMap::new();
    let mut items = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| Error::BadLabelRow {
            row,
            reason: e.to_string(),
        })?;
        let bad = |reason: String| Error::BadLabelRow { row, reason };
        let [filename, label, class_name] = [0, 1, 2].map(|k| record.get(k).unwrap_or("").trim());
        if filename.is_empty() || class_name.is_empty() {
            return Err(bad("empty filename or class name".into()));
        }
        let label: usize = label
            .parse()
            .map_err(|_| bad(format!("label {label:?} is not a non-negative integer")))?;
        match names.get(&label) {
            Some(existing) if existing != class_name => {
                return Err(bad(format!(
                    "label {label} named both {existing:?} and {class_name:?}"
                )))
            }
            _ => {
                names.insert(label, class_name.to_string());
            }
        }
        let path = image_dir.join(filename);
        if !path.is_file() {
            return Err(Error::MissingFile { path, row });
        }
        let id = Path::new(filename)
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| bad(format!("cannot derive an id from {filename:?}")))?
            .to_string();
        if !seen.insert(id.clone()) {
            return Err(bad(format!("duplicate id {id}")));
        }
        items.push(LabeledImage {
            id,
            image: read_image(&path)?,
            label,
            class_name: class_name.to_string(),
        });
    }
    if items.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let labels: Vec<usize> = names.keys().copied().collect();
    if labels.iter().enumerate().any(|(i, &l)| i != l) {
        return Err(Error::NonContiguousLabels(format!(
            "labels present: {labels:?}; expected 0..{}",
            labels.len()
        )));
    }
    Dataset::new(items, names.into_values().collect())
}

/// Writes every item as `<id>.png` plus a `labels.csv` into `dir`.
pub fn write_dataset(dataset: &Dataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut csv = String::from("filename,label,class_name\n");
    for item in dataset.items() {
        let filename = format!("{}.png", item.id);
        write_png(dir.join(&filename), &item.image)?;
        csv.push_str(&format!("{filename},{},{}\n", item.label, item.class_name));
    }
    let path = dir.join("labels.csv");
    std::fs::write(&path, csv).map_err(|e| Error::io(&path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub val: f64,
    pub test: f64,
}

/// A train/validation/test partition of item ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub seed: u64,
    pub fractions: SplitFractions,
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl DatasetSplit {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("split is plain data")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::InvalidConfig(format!("split manifest: {e}")))
    }
}

fn floor_count(n: usize, fraction: f64) -> usize {
    // the epsilon keeps e.g. 100 * 0.29 = 28.999999999999996 from flooring to 28
    (n as f64 * fraction + 1e-9).floor() as usize
}

/// Sorts ids, shuffles them with `seed`, then takes `floor(n·val_fraction)`
/// for validation, `floor(n·test_fraction)` for test and the rest for
/// training.
pub fn split_ids(ids: &[String], val_fraction: f64, test_fraction: f64, seed: u64) -> Result<DatasetSplit> {
    if !(val_fraction >= 0.0 && test_fraction >= 0.0 && val_fraction + test_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "split fractions {val_fraction} + {test_fraction} must be non-negative and sum below 1"
        )));
    }
    let n = ids.len();
    if n < 3 {
        return Err(Error::DatasetTooSmall(n));
    }
    let mut order: Vec<String> = ids.to_vec();
    order.sort();
    if order.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidConfig("split ids are not unique".into()));
    }
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = floor_count(n, val_fraction);
    let n_test = floor_count(n, test_fraction);
    let test = order.split_off(n_val);
    let (val, mut rest) = (order, test);
    let train = rest.split_off(n_test);
    Ok(DatasetSplit {
        seed,
        fractions: SplitFractions {
            val: val_fraction,
            test: test_fraction,
        },
        train,
        val,
        test: rest,
    })
}

pub fn split_dataset(
    dataset: &Dataset,
    val_fraction: f64,
    test_fraction: f64,
    seed: u64,
) -> Result<DatasetSplit> {
    split_ids(&dataset.ids(), val_fraction, test_fraction, seed)
}

/// Nearest-neighbor resize to `size × size`, scaled to `[0, 1]`, laid out
/// `3×S×S`.
pub fn preprocess(image: &RgbImage, size: usize) -> Result<Tensor> {
    if size < 8 {
        return Err(Error::InvalidConfig(format!("target size must be >= 8, got {size}")));
    }
    let (w, h) = image.dimensions();
    let mut data = vec![0.0; 3 * size * size];
    for y in 0..size {
        let sy = y * h / size;
        for x in 0..size {
            let sx = x * w / size;
            let px = image.get(sx, sy);
            for c in 0..3 {
                data[(c * size + y) * size + x] = px[c] as f64 / 255.0;
            }
        }
    }
    Tensor::new(vec![3, size, size], data)
}
