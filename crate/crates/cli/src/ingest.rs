//! Turns a frame corpus into per-word patch archives and a manifest.
//!
//! Expected layout, one directory per sentence:
//!
//! ```text
//! <corpus>/s<speaker>/<sentence>/align.txt
//! <corpus>/s<speaker>/<sentence>/faces.txt     with frames/ (PPM, PGM or PNG)
//! <corpus>/s<speaker>/<sentence>/patches.lrt   or pre-cropped T x 40 x 40 patches
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use lipread_core::corpus::{parse_alignment, save_samples, write_manifest, Vocabulary, WordSample};
use lipread_core::preprocess::{extract_mouth_patch, parse_face_boxes};
use lipread_core::{load_tensor, Error, FaceBox, Image, MouthPatch, Result};
use rayon::prelude::*;

use crate::config::{RunConfig, SpeakerSet};

const PATCH_DIR: &str = "patches";

pub fn run(cfg: &RunConfig) -> Result<usize> {
    let corpus = cfg
        .corpus
        .as_deref()
        .ok_or_else(|| Error::InvalidConfig("preprocess needs 'corpus' (the frame corpus directory)".into()))?;
    let vocab = Vocabulary::grid();
    let sentences = list_sentences(corpus, &cfg.speakers)?;
    if sentences.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no sentence directories found under {}",
            corpus.display()
        )));
    }
    let per_sentence: Vec<Vec<WordSample>> = sentences
        .par_iter()
        .map(|(speaker, dir)| sentence_samples(*speaker, dir, cfg.units_per_frame, &vocab))
        .collect::<Result<_>>()?;
    let samples: Vec<WordSample> = per_sentence.into_iter().flatten().collect();

    fs::create_dir_all(&cfg.data).map_err(|e| io(&cfg.data, e))?;
    let patch_dir = cfg.data.join(PATCH_DIR);
    if patch_dir.exists() {
        fs::remove_dir_all(&patch_dir).map_err(|e| io(&patch_dir, e))?;
    }
    let entries = save_samples(&cfg.data, PATCH_DIR, &samples)?;
    write_manifest(cfg.data.join("manifest.csv"), &entries)?;
    vocab.save(cfg.data.join("vocabulary.txt"))?;
    Ok(samples.len())
}

fn io(path: &Path, e: std::io::Error) -> Error {
    Error::InvalidInput(format!("{}: {e}", path.display()))
}

fn sorted_dirs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    out.sort();
    Ok(out)
}

fn list_sentences(corpus: &Path, speakers: &SpeakerSet) -> Result<Vec<(u32, PathBuf)>> {
    let mut found = Vec::new();
    let mut seen = Vec::new();
    for dir in sorted_dirs(corpus)? {
        let name = dir.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        let Some(speaker) = name.strip_prefix('s').and_then(|n| n.parse::<u32>().ok()) else {
            log::warn!(
                "{}: not a speaker directory (expected s<number>), skipped",
                dir.display()
            );
            continue;
        };
        if !speakers.contains(speaker) {
            continue;
        }
        seen.push(speaker);
        found.extend(sorted_dirs(&dir)?.into_iter().map(|d| (speaker, d)));
    }
    if let SpeakerSet::Listed(list) = speakers {
        for s in list.iter().filter(|s| !seen.contains(s)) {
            log::warn!("speaker {s} not present in the corpus");
        }
    }
    found.sort_by_key(|(s, _)| *s);
    Ok(found)
}

fn sentence_samples(speaker: u32, dir: &Path, units_per_frame: u64, vocab: &Vocabulary) -> Result<Vec<WordSample>> {
    let sentence = dir.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_owned();
    let align_path = dir.join("align.txt");
    let align = fs::read_to_string(&align_path).map_err(|e| io(&align_path, e))?;
    let segments = parse_alignment(&align, units_per_frame, vocab).map_err(|e| match e {
        Error::Parse { line, message } => Error::InvalidInput(format!("{}:{line}: {message}", align_path.display())),
        other => other,
    })?;
    let patches = sentence_patches(dir)?;
    let mut out = Vec::new();
    for (word_index, seg) in segments.iter().enumerate() {
        let end = seg.end_frame.min(patches.len());
        if end <= seg.start_frame {
            log::warn!(
                "{}: '{}' covers frames {}..{} but only {} frames exist, discarded",
                dir.display(),
                seg.word,
                seg.start_frame,
                seg.end_frame,
                patches.len()
            );
            continue;
        }
        out.push(WordSample {
            frames: patches[seg.start_frame..end].to_vec(),
            label: seg.label,
            speaker,
            sentence: sentence.clone(),
            word_index,
        });
    }
    Ok(out)
}

fn sentence_patches(dir: &Path) -> Result<Vec<MouthPatch>> {
    let archive = dir.join("patches.lrt");
    if archive.exists() {
        return WordSample::frames_from_tensor(&load_tensor(&archive)?, 0);
    }
    let faces_path = dir.join("faces.txt");
    let faces_text = fs::read_to_string(&faces_path).map_err(|e| io(&faces_path, e))?;
    let faces = parse_face_boxes(&faces_text).map_err(|e| match e {
        Error::Parse { line, message } => Error::InvalidInput(format!("{}:{line}: {message}", faces_path.display())),
        other => other,
    })?;
    if faces.is_empty() {
        return Err(Error::InvalidInput(format!("{}: no face boxes", faces_path.display())));
    }
    let frames_dir = dir.join("frames");
    let mut frames: Vec<PathBuf> = fs::read_dir(&frames_dir)
        .map_err(|e| io(&frames_dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "ppm" | "pgm" | "pnm" | "png"))
        })
        .collect();
    frames.sort();
    frames
        .iter()
        .enumerate()
        .map(|(i, path)| {
            let image = load_frame(path)?;
            let face = nearest_face(&faces, i);
            Ok(extract_mouth_patch(&image, face, i)?.patch)
        })
        .collect()
}

/// Box of frame `i`, or of the closest frame that has one.
fn nearest_face(faces: &BTreeMap<usize, FaceBox>, i: usize) -> FaceBox {
    if let Some(f) = faces.get(&i) {
        return *f;
    }
    let before = faces.range(..i).next_back();
    let after = faces.range(i..).next();
    let pick = match (before, after) {
        (Some(b), Some(a)) => {
            if i - b.0 <= a.0 - i {
                b
            } else {
                a
            }
        }
        (Some(x), None) | (None, Some(x)) => x,
        (None, None) => unreachable!("face map is non-empty"),
    };
    log::warn!("frame {i}: no face box, using frame {}'s", pick.0);
    *pick.1
}

pub fn load_frame(path: &Path) -> Result<Image> {
    let img = image::open(path).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    if img.color().has_color() {
        Image::new(w, h, 3, img.to_rgb32f().into_raw())
    } else {
        Image::new(w, h, 1, img.to_luma32f().into_raw())
    }
}
