//! Lipreading toolkit: mouth-patch preprocessing, Eigenlips/HOG features
//! with a linear SVM baseline, and an end-to-end feed-forward + LSTM word
//! classifier trained with backpropagation through time.

// `!(x > 0.0)` deliberately rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod archive;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod features;
pub mod net;
pub mod pipeline;
pub mod preprocess;
pub mod rng;
pub mod svm;

pub use archive::{load_tensor, save_tensor, Tensor, TensorSet};
pub use corpus::{DatasetSplit, Vocabulary, WordSample};
pub use error::{Error, Result};
pub use eval::{ConfusionMatrix, EvalReport};
pub use features::{HogConfig, PcaModel, SequenceFeature};
pub use net::{LossPlacement, LstmNetwork, NetworkShape, TrainConfig};
pub use pipeline::{Checkpoint, Classifier, ModelKind};
pub use preprocess::{FaceBox, Image, MouthPatch, StandardizationStats};
pub use svm::{LinearSvmModel, SvmTrainConfig};
