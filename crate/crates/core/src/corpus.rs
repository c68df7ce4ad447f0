//! Word-level data handling: the GRID vocabulary, alignment parsing,
//! per-word stratified splits, the dataset manifest and a synthetic
//! stand-in corpus for desk-scale runs.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::archive::{load_tensor, save_tensor, Tensor};
use crate::error::{Error, Result};
use crate::net::LabeledSequence;
use crate::preprocess::{MouthPatch, PATCH_LEN, PATCH_SIDE};
use crate::rng::Rng;

/// Frames per GRID sentence (3 s at 25 fps).
pub const FRAMES_PER_SENTENCE: usize = 75;

/// Development speakers, used for tuning.
pub const DEVELOPMENT_SPEAKERS: RangeInclusive<u32> = 1..=9;
/// Evaluation speakers, held out until the final runs.
pub const EVALUATION_SPEAKERS: RangeInclusive<u32> = 10..=19;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Category {
    Command,
    Color,
    Preposition,
    Letter,
    Digit,
    Adverb,
    /// Classes of the synthetic corpus.
    Synthetic,
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Category::Command => "command",
            Category::Color => "color",
            Category::Preposition => "preposition",
            Category::Letter => "letter",
            Category::Digit => "digit",
            Category::Adverb => "adverb",
            Category::Synthetic => "synthetic",
        };
        f.write_str(s)
    }
}

const GRID_WORDS: [(Category, &[&str]); 6] = [
    (Category::Command, &["bin", "lay", "place", "set"]),
    (Category::Color, &["blue", "green", "red", "white"]),
    (Category::Preposition, &["at", "by", "in", "with"]),
    (
        Category::Letter,
        &[
            "a", "b", "c", "d", "e", "f", "g", "h", "i", "j", "k", "l", "m", "n", "o", "p", "q", "r", "s", "t", "u",
            "v", "x", "y", "z",
        ],
    ),
    (
        Category::Digit,
        &[
            "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine",
        ],
    ),
    (Category::Adverb, &["again", "now", "please", "soon"]),
];

/// Ordered class list; a class label is an index into it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<(String, Category)>,
}

impl Vocabulary {
    /// The 51 GRID words in sentence-slot order (letters exclude `w`).
    pub fn grid() -> Self {
        let words = GRID_WORDS
            .iter()
            .flat_map(|(cat, ws)| ws.iter().map(move |w| (w.to_string(), *cat)))
            .collect();
        Self { words }
    }

    /// `class0 .. class{n-1}`.
    pub fn synthetic(classes: usize) -> Self {
        Self {
            words: (0..classes)
                .map(|k| (format!("class{k}"), Category::Synthetic))
                .collect(),
        }
    }

    /// GRID vocabulary when `classes == 51`, synthetic names otherwise.
    pub fn for_class_count(classes: usize) -> Self {
        if classes == 51 {
            Self::grid()
        } else {
            Self::synthetic(classes)
        }
    }

    /// GRID vocabulary when `words` spell it out in order, synthetic
    /// categories otherwise.
    pub fn from_words(words: Vec<String>) -> Result<Self> {
        let grid = Self::grid();
        if words.iter().map(String::as_str).eq(grid.words()) {
            return Ok(grid);
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = words.iter().find(|w| !seen.insert(w.as_str())) {
            return Err(Error::InvalidInput(format!("vocabulary lists '{dup}' twice")));
        }
        if words.len() < 2 {
            return Err(Error::InvalidInput("vocabulary needs at least 2 words".into()));
        }
        Ok(Self {
            words: words.into_iter().map(|w| (w, Category::Synthetic)).collect(),
        })
    }

    /// One word per line.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text: String = self.words().map(|w| format!("{w}\n")).collect();
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_words(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(str::to_owned)
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn word(&self, label: usize) -> Option<&str> {
        self.words.get(label).map(|(w, _)| w.as_str())
    }

    /// Word name, or `#label` when out of range.
    pub fn name(&self, label: usize) -> String {
        self.word(label).map_or_else(|| format!("#{label}"), str::to_owned)
    }

    pub fn category(&self, label: usize) -> Option<Category> {
        self.words.get(label).map(|(_, c)| *c)
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        let lower = word.to_ascii_lowercase();
        self.words.iter().position(|(w, _)| *w == lower)
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.words.iter().map(|(w, _)| w.as_str())
    }

    pub fn labels_in(&self, category: Category) -> Vec<usize> {
        (0..self.len())
            .filter(|&l| self.category(l) == Some(category))
            .collect()
    }
}

/// A spoken word's frames in a sentence, `start..end` (end exclusive).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WordSegment {
    pub start_frame: usize,
    pub end_frame: usize,
    pub word: String,
    pub label: usize,
}

impl WordSegment {
    pub fn len(&self) -> usize {
        self.end_frame - self.start_frame
    }

    pub fn is_empty(&self) -> bool {
        self.end_frame == self.start_frame
    }
}

/// Parses `<start> <end> <token>` alignment lines into word segments.
///
/// Times are divided by `units_per_frame` and rounded down; segments are
/// clamped to the sentence's frames. Tokens outside the vocabulary
/// (silence, short pauses) are dropped, as are segments left empty by
/// clamping.
pub fn parse_alignment(text: &str, units_per_frame: u64, vocab: &Vocabulary) -> Result<Vec<WordSegment>> {
    if units_per_frame == 0 {
        return Err(Error::InvalidConfig(
            "alignment units per frame must be positive".into(),
        ));
    }
    let mut segments = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected '<start> <end> <token>', got '{line}'"),
            });
        }
        let time = |f: &str| {
            f.parse::<u64>().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("'{f}' is not a non-negative integer time"),
            })
        };
        let (start, end) = (time(fields[0])?, time(fields[1])?);
        if end < start {
            return Err(Error::Parse {
                line: line_no,
                message: format!("end {end} precedes start {start}"),
            });
        }
        let Some(label) = vocab.index_of(fields[2]) else {
            continue;
        };
        let clamp = |t: u64| ((t / units_per_frame) as usize).min(FRAMES_PER_SENTENCE);
        let (start_frame, end_frame) = (clamp(start), clamp(end));
        if end_frame <= start_frame {
            log::warn!(
                "line {line_no}: '{}' spans no frames after clamping, discarded",
                fields[2]
            );
            continue;
        }
        segments.push(WordSegment {
            start_frame,
            end_frame,
            word: vocab.name(label),
            label,
        });
    }
    Ok(segments)
}

/// One spoken word: its mouth patches and label.
#[derive(Clone, Debug, PartialEq)]
pub struct WordSample {
    pub frames: Vec<MouthPatch>,
    pub label: usize,
    pub speaker: u32,
    pub sentence: String,
    /// Position of the word within its sentence.
    pub word_index: usize,
}

impl WordSample {
    pub fn key(&self) -> (u32, &str, usize) {
        (self.speaker, &self.sentence, self.word_index)
    }

    /// Frames as a `T x 40 x 40` tensor.
    pub fn to_tensor(&self) -> Tensor {
        let data = self.frames.iter().flat_map(|f| f.pixels.iter().copied()).collect();
        Tensor::new(vec![self.frames.len(), PATCH_SIDE, PATCH_SIDE], data).expect("patches are 40x40")
    }

    pub fn frames_from_tensor(tensor: &Tensor, first_frame: usize) -> Result<Vec<MouthPatch>> {
        match tensor.dims() {
            [t, h, w] if *h == PATCH_SIDE && *w == PATCH_SIDE && *t > 0 => Ok(tensor
                .data()
                .chunks_exact(PATCH_LEN)
                .enumerate()
                .map(|(i, c)| MouthPatch {
                    pixels: c.to_vec(),
                    source_frame: first_frame + i,
                })
                .collect()),
            dims => Err(Error::Format(format!(
                "expected a T x 40 x 40 patch tensor, got {dims:?}"
            ))),
        }
    }
}

impl LabeledSequence<f32> for WordSample {
    type Frame = MouthPatch;

    fn frames(&self) -> &[MouthPatch] {
        &self.frames
    }

    fn label(&self) -> usize {
        self.label
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<WordSample>,
    pub validation: Vec<WordSample>,
    pub test: Vec<WordSample>,
}

/// Stratified random split: per class, a seeded shuffle puts the first
/// `holdout` samples in validation, the next `holdout` in test and the rest
/// in training.
///
/// Classes are processed in label order from one `Rng::new(seed)` stream;
/// within each partition samples keep that class-major order.
pub fn make_splits(samples: Vec<WordSample>, vocab: &Vocabulary, seed: u64, holdout: usize) -> Result<DatasetSplit> {
    let classes = vocab.len();
    let mut by_class: Vec<Vec<WordSample>> = vec![Vec::new(); classes];
    for s in samples {
        if s.label >= classes {
            return Err(Error::InvalidLabels(format!(
                "label {} out of range for {classes} classes",
                s.label
            )));
        }
        by_class[s.label].push(s);
    }
    let required = 2 * holdout + 1;
    for (label, group) in by_class.iter().enumerate() {
        if group.len() < required {
            return Err(Error::Split {
                label,
                name: vocab.name(label),
                found: group.len(),
                required,
            });
        }
    }
    let mut rng = Rng::new(seed);
    let mut split = DatasetSplit::default();
    for mut group in by_class {
        rng.shuffle(&mut group);
        let rest = group.split_off(2 * holdout);
        let test = group.split_off(holdout);
        split.validation.extend(group);
        split.test.extend(test);
        split.train.extend(rest);
    }
    Ok(split)
}

/// One row of the dataset manifest CSV.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    #[serde(rename = "speakerId")]
    pub speaker: u32,
    #[serde(rename = "sentenceId")]
    pub sentence: String,
    #[serde(rename = "wordIndex")]
    pub word_index: usize,
    pub label: usize,
    #[serde(rename = "startFrame")]
    pub start_frame: usize,
    #[serde(rename = "endFrame")]
    pub end_frame: usize,
    /// Relative to the manifest's directory.
    #[serde(rename = "patchArchivePath")]
    pub patch_archive: String,
}

pub fn write_manifest(path: impl AsRef<Path>, entries: &[ManifestEntry]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for e in entries {
        w.serialize(e).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.deserialize()
        .enumerate()
        .map(|(i, row)| {
            row.map_err(|e| Error::Parse {
                line: i + 2,
                message: format!("{}: {e}", path.display()),
            })
        })
        .collect()
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e.to_string()))
}

/// Writes each sample's patches to `<dir>/<archive name>` and returns the
/// manifest rows, with archive paths relative to `dir`'s parent.
pub fn save_samples(root: &Path, subdir: &str, samples: &[WordSample]) -> Result<Vec<ManifestEntry>> {
    let dir = root.join(subdir);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    samples
        .iter()
        .map(|s| {
            let name = format!("s{}_{}_{}.lrt", s.speaker, s.sentence, s.word_index);
            save_tensor(dir.join(&name), &s.to_tensor())?;
            let start = s.frames.first().map_or(0, |f| f.source_frame);
            Ok(ManifestEntry {
                speaker: s.speaker,
                sentence: s.sentence.clone(),
                word_index: s.word_index,
                label: s.label,
                start_frame: start,
                end_frame: start + s.frames.len(),
                patch_archive: format!("{subdir}/{name}"),
            })
        })
        .collect()
}

/// Loads the samples listed in a manifest, resolving archive paths against
/// the manifest's directory.
pub fn load_samples(manifest: &Path, entries: &[ManifestEntry]) -> Result<Vec<WordSample>> {
    let base: PathBuf = manifest.parent().map(Path::to_path_buf).unwrap_or_default();
    entries
        .iter()
        .map(|e| {
            let tensor = load_tensor(base.join(&e.patch_archive))?;
            Ok(WordSample {
                frames: WordSample::frames_from_tensor(&tensor, e.start_frame)?,
                label: e.label,
                speaker: e.speaker,
                sentence: e.sentence.clone(),
                word_index: e.word_index,
            })
        })
        .collect()
}

/// Shortest and longest synthetic sequence.
pub const SYNTH_LENGTHS: RangeInclusive<usize> = 3..=12;
/// Half-range of the random offset of a synthetic path's midpoint.
const SYNTH_JITTER: f64 = 5.0;
/// Nominal half-length of a synthetic path.
const SYNTH_REACH: f64 = 6.0;
/// Nominal half-length of a synthetic path.
/// Standard deviation of the synthetic pixel noise.
pub const SYNTH_NOISE: f64 = 0.05;

/// Deterministic synthetic corpus of moving, deforming blobs.
///
/// Classes come in pairs that share a motion axis and deformation profile
/// but traverse the axis in opposite directions, so their time-averaged
/// frames coincide and only the temporal order separates them. Each sample
/// draws its length from [`SYNTH_LENGTHS`], a random offset, path scale and
/// brightness, and pixel noise with standard deviation [`SYNTH_NOISE`].
/// Pixels are contrast-stretched to `[0, 1]` like real patches.
pub fn synth_dataset(classes: usize, per_class: usize, seed: u64) -> Result<Vec<WordSample>> {
    if classes < 2 {
        return Err(Error::InvalidInput(format!(
            "synthetic corpus needs at least 2 classes, got {classes}"
        )));
    }
    let axes = classes.div_ceil(2);
    let mut rng = Rng::new(seed);
    let mut samples = Vec::with_capacity(classes * per_class);
    for n in 0..per_class {
        for label in 0..classes {
            let axis = label / 2;
            let reversed = label % 2 == 1;
            let angle = std::f64::consts::PI * axis as f64 / axes as f64;
            let (dx, dy) = (angle.cos(), angle.sin());
            // deformation profile: how width and height swell mid-word
            let phase = 2.0 * std::f64::consts::PI * axis as f64 / axes as f64;
            let (grow_x, grow_y) = (2.0 * phase.cos(), 2.0 * phase.sin());

            let len = SYNTH_LENGTHS.start() + rng.below(SYNTH_LENGTHS.end() - SYNTH_LENGTHS.start() + 1);
            let cx = 19.5 + rng.uniform(-SYNTH_JITTER, SYNTH_JITTER);
            let cy = 19.5 + rng.uniform(-SYNTH_JITTER, SYNTH_JITTER);
            let reach = SYNTH_REACH * rng.uniform(0.8, 1.2);
            let bright = rng.uniform(0.6, 1.0);

            let mut frames = Vec::with_capacity(len);
            for t in 0..len {
                let tau = t as f64 / (len - 1) as f64;
                let along = if reversed { 1.0 - 2.0 * tau } else { 2.0 * tau - 1.0 };
                let (bx, by) = (cx + along * reach * dx, cy + along * reach * dy);
                let swell = (std::f64::consts::PI * tau).sin();
                let sx = 3.0 + swell * grow_x.max(-1.5);
                let sy = 3.0 + swell * grow_y.max(-1.5);
                let mut pixels = Vec::with_capacity(PATCH_LEN);
                for y in 0..PATCH_SIDE {
                    for x in 0..PATCH_SIDE {
                        let ex = (x as f64 - bx) / sx;
                        let ey = (y as f64 - by) / sy;
                        let v = 0.2 + bright * (-0.5 * (ex * ex + ey * ey)).exp() + SYNTH_NOISE * rng.normal();
                        pixels.push(v as f32);
                    }
                }
                crate::preprocess::rescale_unit_in_place(&mut pixels);
                frames.push(MouthPatch {
                    pixels,
                    source_frame: t,
                });
            }
            samples.push(WordSample {
                frames,
                label,
                speaker: 0,
                sentence: format!("synth{:05}", n * classes + label),
                word_index: 0,
            });
        }
    }
    Ok(samples)
}

/// Per-class counts of a sample collection.
pub fn class_counts(samples: &[WordSample], classes: usize) -> Vec<usize> {
    let mut counts = vec![0; classes];
    for s in samples {
        if let Some(c) = counts.get_mut(s.label) {
            *c += 1;
        }
    }
    counts
}

/// Groups samples by speaker.
pub fn by_speaker(samples: Vec<WordSample>) -> BTreeMap<u32, Vec<WordSample>> {
    let mut out: BTreeMap<u32, Vec<WordSample>> = BTreeMap::new();
    for s in samples {
        out.entry(s.speaker).or_default().push(s);
    }
    out
}
