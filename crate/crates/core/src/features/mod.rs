//! Baseline features: Eigenlips (PCA), HOG descriptors and the fixed-length
//! sequence feature vector that feeds the SVM.

mod hog;
mod pca;
mod sequence;

pub use hog::{compute_hog, HogConfig};
pub use pca::{fit_pca, PcaModel};
pub use sequence::{sequence_feature_vector, slot_sources, SequenceFeature, SlotSource};
