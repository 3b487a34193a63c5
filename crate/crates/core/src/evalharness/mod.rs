//! Dataset indexing, leave-one-subject-out splits and evaluation reports.
//!
//! Expected on-disk layout: `root/<subject>/<class>/<image>.pgm`.

mod classify;
mod synth;

pub use classify::{Classifier, NearestNeighbor};
pub use synth::{SyntheticSpec, PATTERN_NAMES};

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::affemonet::{Model, ModelError, NetConfig, PreparedInput};
use crate::imagio::{augment_set, read_pgm_file, write_pgm_file, GrayImage, ImageError};
use crate::rarity::{featurize, DescriptorError, FeatureVector, RingParams};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("dataset root {0} not found")]
    NotFound(PathBuf),
    #[error("dataset under {0} contains no images")]
    Empty(PathBuf),
    #[error("class directory {0} holds no images")]
    EmptyClass(PathBuf),
    #[error("unreadable image {path}: {source}")]
    UnreadableImage {
        path: PathBuf,
        #[source]
        source: ImageError,
    },
    #[error("leave-one-subject-out needs at least 2 subjects, found {0}")]
    TooFewSubjects(usize),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Descriptor(#[from] DescriptorError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Image(#[from] ImageError),
}

pub type Result<T> = std::result::Result<T, HarnessError>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Entry {
    pub subject: String,
    pub label: usize,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DatasetIndex {
    pub entries: Vec<Entry>,
    pub classes: Vec<String>,
}

impl DatasetIndex {
    pub fn subjects(&self) -> Vec<&str> {
        self.entries
            .iter()
            .map(|e| e.subject.as_str())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn sorted_children(dir: &Path, want_dirs: bool) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        if path.is_dir() == want_dirs {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Walks `root/<subject>/<class>/*.pgm` in lexicographic order. Every image
/// is decoded once to make sure it is readable.
pub fn index_dataset(root: impl AsRef<Path>) -> Result<DatasetIndex> {
    let root = root.as_ref();
    if !root.is_dir() {
        return Err(HarnessError::NotFound(root.to_path_buf()));
    }
    let mut raw: Vec<(String, String, PathBuf)> = Vec::new();
    for subject_dir in sorted_children(root, true)? {
        let subject = file_name(&subject_dir);
        for class_dir in sorted_children(&subject_dir, true)? {
            let class = file_name(&class_dir);
            let images: Vec<PathBuf> = sorted_children(&class_dir, false)?
                .into_iter()
                .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm")))
                .collect();
            if images.is_empty() {
                return Err(HarnessError::EmptyClass(class_dir));
            }
            for path in images {
                read_pgm_file(&path).map_err(|source| HarnessError::UnreadableImage {
                    path: path.clone(),
                    source,
                })?;
                raw.push((subject.clone(), class.clone(), path));
            }
        }
    }
    if raw.is_empty() {
        return Err(HarnessError::Empty(root.to_path_buf()));
    }
    let classes: Vec<String> = raw.iter().map(|(_, c, _)| c.clone()).collect::<BTreeSet<_>>().into_iter().collect();
    let entries = raw
        .into_iter()
        .map(|(subject, class, path)| Entry {
            subject,
            label: classes.binary_search(&class).expect("class collected above"),
            path,
        })
        .collect();
    Ok(DatasetIndex { entries, classes })
}

/// An index together with its decoded images.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub index: DatasetIndex,
    pub images: Vec<GrayImage>,
}

impl Dataset {
    pub fn load(index: DatasetIndex) -> Result<Self> {
        let images = index
            .entries
            .iter()
            .map(|e| {
                read_pgm_file(&e.path).map_err(|source| HarnessError::UnreadableImage {
                    path: e.path.clone(),
                    source,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { index, images })
    }

    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        Self::load(index_dataset(root)?)
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Writes the images as a `root/<subject>/<class>/<file>.pgm` tree and
    /// returns the index of the written files.
    pub fn write_tree(&self, root: impl AsRef<Path>) -> Result<DatasetIndex> {
        let root = root.as_ref();
        let mut entries = Vec::with_capacity(self.len());
        for (e, img) in self.index.entries.iter().zip(&self.images) {
            let dir = root.join(&e.subject).join(&self.index.classes[e.label]);
            std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
            let path = dir.join(e.path.file_name().expect("entries carry a file name"));
            write_pgm_file(&path, img)?;
            entries.push(Entry {
                path,
                ..e.clone()
            });
        }
        Ok(DatasetIndex {
            entries,
            classes: self.index.classes.clone(),
        })
    }

    /// Copy with labels shuffled across entries (a chance-level control).
    pub fn with_permuted_labels(&self, seed: u64) -> Self {
        let mut labels: Vec<usize> = self.index.entries.iter().map(|e| e.label).collect();
        labels.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut out = self.clone();
        for (e, l) in out.index.entries.iter_mut().zip(labels) {
            e.label = l;
        }
        out
    }
}

/// One leave-one-subject-out fold, as indices into the dataset entries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Fold {
    pub subject: String,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// One fold per subject (lexicographic); each fold tests exactly that subject.
pub fn loso_splits(index: &DatasetIndex) -> Result<Vec<Fold>> {
    let subjects = index.subjects();
    if subjects.len() < 2 {
        return Err(HarnessError::TooFewSubjects(subjects.len()));
    }
    Ok(subjects
        .into_iter()
        .map(|s| {
            let (test, train): (Vec<usize>, Vec<usize>) =
                (0..index.entries.len()).partition(|&i| index.entries[i].subject == s);
            Fold {
                subject: s.to_string(),
                train,
                test,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldReport {
    pub subject: String,
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub accuracy: f64,
    pub folds: Vec<FoldReport>,
    /// `confusion[truth][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub classes: Vec<String>,
    pub config: serde_json::Value,
}

impl Report {
    fn assemble(
        classes: &[String],
        folds: &[Fold],
        predictions: &[Vec<usize>],
        labels: &[usize],
        config: serde_json::Value,
    ) -> Self {
        let k = classes.len();
        let mut confusion = vec![vec![0usize; k]; k];
        let mut fold_reports = Vec::with_capacity(folds.len());
        for (fold, preds) in folds.iter().zip(predictions) {
            let mut correct = 0;
            for (&i, &p) in fold.test.iter().zip(preds) {
                confusion[labels[i]][p] += 1;
                correct += (labels[i] == p) as usize;
            }
            fold_reports.push(FoldReport {
                subject: fold.subject.clone(),
                accuracy: correct as f64 / fold.test.len() as f64,
                correct,
                total: fold.test.len(),
            });
        }
        let total: usize = confusion.iter().flatten().sum();
        let trace: usize = (0..k).map(|c| confusion[c][c]).sum();
        Self {
            accuracy: trace as f64 / total as f64,
            folds: fold_reports,
            confusion,
            classes: classes.to_vec(),
            config,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports always serialize")
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DescriptorEvalConfig {
    pub ring: RingParams,
    pub grid: usize,
    pub augment: bool,
}

/// LOSO evaluation of descriptor histograms with an L1 nearest-neighbor classifier.
pub fn evaluate_descriptor(data: &Dataset, ring: &RingParams, grid: usize, augment: bool) -> Result<Report> {
    evaluate_descriptor_with(data, ring, grid, augment, NearestNeighbor::default)
}

/// As [`evaluate_descriptor`] with any classifier produced by `make`.
pub fn evaluate_descriptor_with<C: Classifier>(
    data: &Dataset,
    ring: &RingParams,
    grid: usize,
    augment: bool,
    make: impl Fn() -> C,
) -> Result<Report> {
    let folds = loso_splits(&data.index)?;
    let labels: Vec<usize> = data.index.entries.iter().map(|e| e.label).collect();
    let features: Vec<FeatureVector> = data
        .images
        .iter()
        .map(|img| featurize(img, ring, grid))
        .collect::<std::result::Result<_, _>>()?;
    // Variants of each image used for training; the unaugmented set is the image itself.
    let train_features: Vec<Vec<FeatureVector>> = if augment {
        data.images
            .iter()
            .map(|img| augment_set(img).iter().map(|v| featurize(v, ring, grid)).collect())
            .collect::<std::result::Result<_, _>>()?
    } else {
        features.iter().map(|f| vec![f.clone()]).collect()
    };

    let mut predictions = Vec::with_capacity(folds.len());
    for fold in &folds {
        let mut clf = make();
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for &i in &fold.train {
            for f in &train_features[i] {
                xs.push(f.values.clone());
                ys.push(labels[i]);
            }
        }
        clf.fit(xs, ys);
        predictions.push(fold.test.iter().map(|&i| clf.predict(&features[i].values)).collect());
    }
    let config = serde_json::to_value(DescriptorEvalConfig {
        ring: *ring,
        grid,
        augment,
    })
    .expect("config serializes");
    Ok(Report::assemble(&data.index.classes, &folds, &predictions, &labels, config))
}

#[derive(Debug, Clone, Serialize)]
pub struct NetEvalConfig {
    pub net: NetConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub augment: bool,
}

impl NetEvalConfig {
    pub fn new(net: NetConfig, epochs: usize) -> Self {
        Self {
            net,
            epochs,
            batch_size: 16,
            augment: true,
        }
    }
}

/// Trains a fresh model on `train` (indices into `data`) and returns it.
/// Samples are reshuffled every epoch from `cfg.net.seed`.
pub fn train_model(
    data: &Dataset,
    train: &[usize],
    cfg: &NetEvalConfig,
    mut on_step: impl FnMut(usize, f64),
) -> Result<Model> {
    let mut net = cfg.net.clone();
    net.num_classes = data.index.num_classes();
    let mut model = Model::build(net)?;
    let mut inputs: Vec<(PreparedInput, usize)> = Vec::new();
    for &i in train {
        let label = data.index.entries[i].label;
        let variants = if cfg.augment {
            augment_set(&data.images[i])
        } else {
            vec![data.images[i].clone()]
        };
        for v in variants {
            inputs.push((model.prepare(&v)?, label));
        }
    }
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.net.seed ^ 0x5eed);
    let mut step = 0;
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let batch: Vec<(&PreparedInput, usize)> = chunk.iter().map(|&j| (&inputs[j].0, inputs[j].1)).collect();
            let out = model.train_step_prepared(&batch)?;
            on_step(step, out.loss);
            step += 1;
        }
    }
    Ok(model)
}

/// LOSO evaluation of the network: a fresh model per fold, trained on the
/// (optionally augmented) training subjects, scored by argmax on the held-out subject.
pub fn evaluate_net(data: &Dataset, cfg: &NetEvalConfig) -> Result<Report> {
    let folds = loso_splits(&data.index)?;
    let labels: Vec<usize> = data.index.entries.iter().map(|e| e.label).collect();
    let mut predictions = Vec::with_capacity(folds.len());
    for fold in &folds {
        let model = train_model(data, &fold.train, cfg, |_, _| {})?;
        let preds = fold
            .test
            .iter()
            .map(|&i| Ok(model.predict(&model.prepare(&data.images[i])?)?))
            .collect::<Result<Vec<_>>>()?;
        predictions.push(preds);
    }
    let config = serde_json::to_value(cfg).expect("config serializes");
    Ok(Report::assemble(&data.index.classes, &folds, &predictions, &labels, config))
}

/// Counts per class of `labels`, in class order.
pub fn class_counts(labels: impl IntoIterator<Item = usize>, classes: usize) -> Vec<usize> {
    let mut counts = BTreeMap::new();
    for l in labels {
        *counts.entry(l).or_insert(0usize) += 1;
    }
    (0..classes).map(|c| counts.get(&c).copied().unwrap_or(0)).collect()
}
