use crate::error::{Error, Result};

/// Fixed-length concatenation of per-frame features.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceFeature {
    pub values: Vec<f64>,
    pub slots: usize,
    pub dim: usize,
}

/// Where an output slot takes its value from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SlotSource {
    /// Copy of one input frame (the sequence is shorter than the slot count).
    Copy(usize),
    /// Mean of a contiguous run of frames.
    Mean(std::ops::Range<usize>),
}

/// Slot `i` averages frames `floor(i*n/slots)..floor((i+1)*n/slots)`; when
/// that range is empty it copies frame `floor(i*n/slots)`.
pub fn slot_sources(frames: usize, slots: usize) -> Vec<SlotSource> {
    (0..slots)
        .map(|i| {
            let start = i * frames / slots;
            let end = (i + 1) * frames / slots;
            if end > start {
                SlotSource::Mean(start..end)
            } else {
                SlotSource::Copy(start)
            }
        })
        .collect()
}

/// Resamples a variable-length sequence to exactly `slots` frames:
/// short sequences repeat frames, long ones average neighbours.
pub fn sequence_feature_vector<F: AsRef<[f64]>>(frames: &[F], slots: usize) -> Result<SequenceFeature> {
    if frames.is_empty() {
        return Err(Error::InvalidInput(
            "cannot build a sequence feature from zero frames".into(),
        ));
    }
    if slots == 0 {
        return Err(Error::InvalidInput("sequence length must be positive".into()));
    }
    let dim = frames[0].as_ref().len();
    if frames.iter().any(|f| f.as_ref().len() != dim) {
        return Err(Error::InvalidInput("frames differ in feature dimension".into()));
    }
    let mut values = Vec::with_capacity(slots * dim);
    for source in slot_sources(frames.len(), slots) {
        match source {
            SlotSource::Copy(i) => values.extend_from_slice(frames[i].as_ref()),
            SlotSource::Mean(range) => {
                let count = range.len() as f64;
                let at = values.len();
                values.resize(at + dim, 0.0);
                for f in &frames[range] {
                    for (acc, v) in values[at..].iter_mut().zip(f.as_ref()) {
                        *acc += v;
                    }
                }
                for v in &mut values[at..] {
                    *v /= count;
                }
            }
        }
    }
    Ok(SequenceFeature { values, slots, dim })
}
