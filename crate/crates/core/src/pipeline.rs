//! End-to-end glue shared by the command-line driver and the tests:
//! standardizing a split, fitting the baselines and the recurrent model,
//! and persisting whichever was trained as one checkpoint.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use crate::archive::TensorSet;
use crate::corpus::{DatasetSplit, WordSample};
use crate::error::{Error, Result};
use crate::eval::Scored;
use crate::features::{compute_hog, fit_pca, sequence_feature_vector, HogConfig, PcaModel};
use crate::net::{train_with, EpochRecord, LossPlacement, LstmNetwork, NetworkShape, TrainConfig, TrainOutcome};
use crate::preprocess::{StandardizationStats, PATCH_LEN, PATCH_SIDE};
use crate::svm::{train_linear_svm, LinearSvmModel, SvmTrainConfig};

const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    SvmEigen,
    SvmHog,
    Lstm,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::SvmEigen => "svm-eigen",
            ModelKind::SvmHog => "svm-hog",
            ModelKind::Lstm => "lstm",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "svm-eigen" => Ok(ModelKind::SvmEigen),
            "svm-hog" => Ok(ModelKind::SvmHog),
            "lstm" => Ok(ModelKind::Lstm),
            other => Err(Error::InvalidConfig(format!(
                "unknown model '{other}' (expected svm-eigen, svm-hog or lstm)"
            ))),
        }
    }
}

/// Fits pixel statistics on the training partition and applies them to
/// all three partitions.
pub fn standardize_split(mut split: DatasetSplit) -> Result<(DatasetSplit, StandardizationStats)> {
    let stats = StandardizationStats::fit(
        split
            .train
            .iter()
            .flat_map(|s| s.frames.iter().map(|f| f.pixels.as_slice())),
    )?;
    for part in [&mut split.train, &mut split.validation, &mut split.test] {
        part.par_iter_mut()
            .try_for_each(|s| s.frames.iter_mut().try_for_each(|f| stats.apply(&mut f.pixels)))?;
    }
    Ok((split, stats))
}

/// Per-frame feature extractor of a baseline.
#[derive(Clone, Debug, PartialEq)]
pub enum FrameFeatures {
    Eigenlips(PcaModel),
    Hog(HogConfig),
}

impl FrameFeatures {
    pub fn extract(&self, patch: &[f32]) -> Result<Vec<f64>> {
        match self {
            FrameFeatures::Eigenlips(pca) => pca.project_f32(patch),
            FrameFeatures::Hog(cfg) => compute_hog(patch, PATCH_SIDE, PATCH_SIDE, cfg),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            FrameFeatures::Eigenlips(pca) => pca.k(),
            FrameFeatures::Hog(cfg) => cfg.descriptor_len(PATCH_SIDE, PATCH_SIDE),
        }
    }
}

/// Sequence feature vector plus linear SVM.
#[derive(Clone, Debug, PartialEq)]
pub struct SvmClassifier {
    pub features: FrameFeatures,
    pub slots: usize,
    pub svm: LinearSvmModel,
}

impl SvmClassifier {
    pub fn sequence_feature(&self, sample: &WordSample) -> Result<Vec<f64>> {
        sequence_feature_of(&self.features, sample, self.slots)
    }

    pub fn predict(&self, sample: &WordSample) -> Result<usize> {
        Ok(self.svm.predict(&self.sequence_feature(sample)?)?.0)
    }
}

fn sequence_feature_of(features: &FrameFeatures, sample: &WordSample, slots: usize) -> Result<Vec<f64>> {
    let frames = sample
        .frames
        .iter()
        .map(|f| features.extract(&f.pixels))
        .collect::<Result<Vec<_>>>()?;
    Ok(sequence_feature_vector(&frames, slots)?.values)
}

/// Eigenlips from every training frame.
pub fn fit_eigenlips(train: &[WordSample], k: usize) -> Result<PcaModel> {
    let rows: Vec<Vec<f64>> = train
        .iter()
        .flat_map(|s| {
            s.frames
                .iter()
                .map(|f| f.pixels.iter().map(|&v| f64::from(v)).collect())
        })
        .collect();
    fit_pca(&rows, k)
}

pub fn fit_svm(
    features: FrameFeatures,
    train: &[WordSample],
    classes: usize,
    slots: usize,
    cfg: &SvmTrainConfig,
) -> Result<SvmClassifier> {
    let x = train
        .par_iter()
        .map(|s| sequence_feature_of(&features, s, slots))
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<usize> = train.iter().map(|s| s.label).collect();
    let svm = train_linear_svm(&x, &labels, classes, cfg)?;
    Ok(SvmClassifier { features, slots, svm })
}

pub fn fit_lstm(
    train: &[WordSample],
    validation: &[WordSample],
    units: usize,
    classes: usize,
    cfg: &TrainConfig,
    on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome<f32>> {
    let shape = NetworkShape {
        inputs: PATCH_LEN,
        units,
        classes,
    };
    shape.validate()?;
    train_with(cfg.init_network::<f32>(shape), train, validation, cfg, on_epoch)
}

#[derive(Clone, Debug, PartialEq)]
pub enum Classifier {
    Svm(SvmClassifier),
    Lstm { net: LstmNetwork<f32>, loss: LossPlacement },
}

impl Classifier {
    pub fn kind(&self) -> ModelKind {
        match self {
            Classifier::Svm(s) => match s.features {
                FrameFeatures::Eigenlips(_) => ModelKind::SvmEigen,
                FrameFeatures::Hog(_) => ModelKind::SvmHog,
            },
            Classifier::Lstm { .. } => ModelKind::Lstm,
        }
    }

    pub fn classes(&self) -> usize {
        match self {
            Classifier::Svm(s) => s.svm.class_count,
            Classifier::Lstm { net, .. } => net.shape.classes,
        }
    }

    pub fn predict(&self, sample: &WordSample) -> Result<usize> {
        match self {
            Classifier::Svm(s) => s.predict(sample),
            Classifier::Lstm { net, loss } => Ok(net.predict_word(&sample.frames, *loss)?.0),
        }
    }

    pub fn score(&self, samples: &[WordSample]) -> Result<Vec<Scored>> {
        samples
            .par_iter()
            .map(|s| {
                Ok(Scored {
                    predicted: self.predict(s)?,
                    reference: s.label,
                    speaker: s.speaker,
                })
            })
            .collect()
    }

    pub fn accuracy(&self, samples: &[WordSample]) -> Result<f64> {
        if samples.is_empty() {
            return Err(Error::InvalidInput("cannot score an empty set".into()));
        }
        let hits = self
            .score(samples)?
            .iter()
            .filter(|s| s.predicted == s.reference)
            .count();
        Ok(hits as f64 / samples.len() as f64)
    }
}

/// A trained model together with the pixel statistics its inputs need.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub stats: StandardizationStats,
    pub classifier: Classifier,
}

impl Checkpoint {
    /// Standardizes raw samples with the stored statistics.
    pub fn prepare(&self, samples: &mut [WordSample]) -> Result<()> {
        samples
            .par_iter_mut()
            .try_for_each(|s| s.frames.iter_mut().try_for_each(|f| self.stats.apply(&mut f.pixels)))
    }

    pub fn to_tensor_set(&self) -> TensorSet {
        let mut set = TensorSet::new();
        set.set_meta("checkpoint.version", CHECKPOINT_VERSION);
        set.set_meta("model", self.classifier.kind());
        set.set_meta("classes", self.classifier.classes());
        set.set_meta("std.mean", format!("{:e}", self.stats.mean));
        set.set_meta("std.dev", format!("{:e}", self.stats.std_dev));
        match &self.classifier {
            Classifier::Svm(s) => {
                set.set_meta("seq.len", s.slots);
                match &s.features {
                    FrameFeatures::Eigenlips(pca) => pca.write_sections(&mut set, "pca."),
                    FrameFeatures::Hog(h) => {
                        set.set_meta("hog.cell", h.cell_size);
                        set.set_meta("hog.bins", h.bins);
                        set.set_meta("hog.block", h.block_size);
                        set.set_meta("hog.clip", h.clip);
                    }
                }
                s.svm.write_sections(&mut set);
            }
            Classifier::Lstm { net, loss } => {
                set.set_meta("train.loss", loss.name());
                net.write_sections(&mut set);
            }
        }
        set
    }

    pub fn from_tensor_set(set: &TensorSet) -> Result<Self> {
        let version: u32 = set.meta_parse("checkpoint.version")?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let stats = StandardizationStats {
            mean: set.meta_parse("std.mean")?,
            std_dev: set.meta_parse("std.dev")?,
        };
        let kind: ModelKind = set.meta("model")?.parse()?;
        let classifier = match kind {
            ModelKind::Lstm => Classifier::Lstm {
                net: LstmNetwork::read_sections(set)?,
                loss: set.meta("train.loss")?.parse()?,
            },
            ModelKind::SvmEigen | ModelKind::SvmHog => {
                let features = if kind == ModelKind::SvmEigen {
                    FrameFeatures::Eigenlips(PcaModel::read_sections(set, "pca.")?)
                } else {
                    FrameFeatures::Hog(HogConfig {
                        cell_size: set.meta_parse("hog.cell")?,
                        bins: set.meta_parse("hog.bins")?,
                        block_size: set.meta_parse("hog.block")?,
                        clip: set.meta_parse("hog.clip")?,
                    })
                };
                let slots: usize = set.meta_parse("seq.len")?;
                let svm = LinearSvmModel::read_sections(set)?;
                if svm.dim != slots * features.dim() {
                    return Err(Error::Format(format!(
                        "SVM expects {} features but {slots} slots of {} give {}",
                        svm.dim,
                        features.dim(),
                        slots * features.dim()
                    )));
                }
                Classifier::Svm(SvmClassifier { features, slots, svm })
            }
        };
        if set.meta_parse::<usize>("classes")? != classifier.classes() {
            return Err(Error::Format("checkpoint class count disagrees with its model".into()));
        }
        Ok(Self { stats, classifier })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_tensor_set().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_tensor_set(&TensorSet::load(path)?)
    }
}
