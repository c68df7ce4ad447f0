use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use lipread_core::corpus::{
    load_samples, make_splits, read_manifest, save_samples, synth_dataset, write_manifest, Vocabulary,
};
use lipread_core::eval::{paired_t_test_one_tailed, read_speaker_accuracies, score, sig6, TTest};
use lipread_core::net::{gradient_check, GradCheckSpec};
use lipread_core::pipeline::{
    fit_eigenlips, fit_lstm, fit_svm, standardize_split, Checkpoint, Classifier, FrameFeatures,
};
use lipread_core::{DatasetSplit, Error, ModelKind, Result, TensorSet, WordSample};

use crate::config::RunConfig;

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::InvalidInput(format!("{}: {e}", parent.display())))?;
    }
    fs::write(path, text).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))
}

/// Samples of one speaker from the dataset directory, with its vocabulary.
fn load_dataset(data: &Path, speaker: Option<u32>) -> Result<(Vocabulary, Vec<WordSample>, u32)> {
    let manifest = data.join("manifest.csv");
    if !manifest.exists() {
        return Err(Error::InvalidInput(format!(
            "{} not found; run preprocess or synth first",
            manifest.display()
        )));
    }
    let vocab = Vocabulary::load(data.join("vocabulary.txt"))?;
    let mut entries = read_manifest(&manifest)?;
    let mut speakers: Vec<u32> = entries.iter().map(|e| e.speaker).collect();
    speakers.sort_unstable();
    speakers.dedup();
    let speaker = match (speaker, speakers.as_slice()) {
        (Some(s), _) => s,
        (None, [only]) => *only,
        (None, []) => return Err(Error::InvalidInput(format!("{} lists no samples", manifest.display()))),
        (None, many) => {
            return Err(Error::InvalidConfig(format!(
                "the dataset holds speakers {many:?}; set 'speaker' to pick one (training is speaker-dependent)"
            )))
        }
    };
    entries.retain(|e| e.speaker == speaker);
    if entries.is_empty() {
        return Err(Error::InvalidInput(format!(
            "speaker {speaker} has no samples in {}",
            manifest.display()
        )));
    }
    Ok((vocab, load_samples(&manifest, &entries)?, speaker))
}

fn split_for(
    cfg: &RunConfig,
    seed: u64,
    holdout: usize,
    speaker: Option<u32>,
) -> Result<(Vocabulary, DatasetSplit, u32)> {
    let (vocab, samples, speaker) = load_dataset(&cfg.data, speaker)?;
    let split = make_splits(samples, &vocab, seed, holdout)?;
    Ok((vocab, split, speaker))
}

pub fn train(cfg: &RunConfig) -> Result<()> {
    let (vocab, split, speaker) = split_for(cfg, cfg.seed, cfg.holdout, cfg.speaker)?;
    let classes = vocab.len();
    log::info!(
        "speaker {speaker}: {} training, {} validation, {} test words",
        split.train.len(),
        split.validation.len(),
        split.test.len()
    );
    let (split, stats) = standardize_split(split)?;
    let mut history = String::new();
    let (classifier, val_accuracy) = match cfg.model {
        ModelKind::SvmEigen | ModelKind::SvmHog => {
            let features = if cfg.model == ModelKind::SvmEigen {
                FrameFeatures::Eigenlips(fit_eigenlips(&split.train, cfg.pca_k)?)
            } else {
                FrameFeatures::Hog(cfg.hog)
            };
            let clf = Classifier::Svm(fit_svm(features, &split.train, classes, cfg.seq_len, &cfg.svm)?);
            let train_acc = clf.accuracy(&split.train)?;
            let val = clf.accuracy(&split.validation)?;
            history.push_str("train_accuracy,val_accuracy\n");
            let _ = writeln!(history, "{},{}", sig6(train_acc), sig6(val));
            (clf, val)
        }
        ModelKind::Lstm => {
            history.push_str("epoch,train_loss,val_accuracy,best_val_accuracy\n");
            let outcome = fit_lstm(&split.train, &split.validation, cfg.units, classes, &cfg.train, |r| {
                log::info!(
                    "epoch {}: loss {:.4}, validation accuracy {:.4}",
                    r.epoch,
                    r.train_loss,
                    r.val_accuracy
                );
                let _ = writeln!(
                    history,
                    "{},{},{},{}",
                    r.epoch,
                    sig6(r.train_loss),
                    sig6(r.val_accuracy),
                    sig6(r.best_val_accuracy)
                );
            })?;
            log::info!("best validation accuracy at epoch {}", outcome.best_epoch);
            let clf = Classifier::Lstm {
                net: outcome.best,
                loss: cfg.train.loss,
            };
            (clf, outcome.best_val_accuracy)
        }
    };
    let mut set = Checkpoint { stats, classifier }.to_tensor_set();
    set.set_meta("split.seed", cfg.seed);
    set.set_meta("split.holdout", cfg.holdout);
    set.set_meta("speaker", speaker);
    if let Some(parent) = cfg.checkpoint.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::InvalidInput(format!("{}: {e}", parent.display())))?;
    }
    set.save(&cfg.checkpoint)?;
    write(&cfg.out.join("history.csv"), &history)?;
    println!("model {}: validation accuracy {}", cfg.model, sig6(val_accuracy));
    Ok(())
}

pub fn eval(cfg: &RunConfig) -> Result<()> {
    if !cfg.checkpoint.exists() {
        return Err(Error::InvalidInput(format!(
            "checkpoint {} not found",
            cfg.checkpoint.display()
        )));
    }
    let set = TensorSet::load(&cfg.checkpoint)?;
    let ckpt = Checkpoint::from_tensor_set(&set)?;
    let (vocab, split, _) = split_for(
        cfg,
        set.meta_parse("split.seed")?,
        set.meta_parse("split.holdout")?,
        Some(set.meta_parse("speaker")?),
    )?;
    if vocab.len() != ckpt.classifier.classes() {
        return Err(Error::InvalidInput(format!(
            "checkpoint predicts {} classes but the dataset has {}",
            ckpt.classifier.classes(),
            vocab.len()
        )));
    }
    let DatasetSplit {
        mut validation,
        mut test,
        ..
    } = split;
    ckpt.prepare(&mut validation)?;
    ckpt.prepare(&mut test)?;
    let val_accuracy = ckpt.classifier.accuracy(&validation)?;
    let report = score(&ckpt.classifier.score(&test)?, &vocab)?;
    report.write_files(&cfg.out, &vocab)?;
    let mut extra = format!("validation.accuracy,{}\n", sig6(val_accuracy));
    if let Some((a, b)) = &cfg.compare {
        extra.push_str(&comparison_rows(&compare(a, b)?));
    }
    let path = cfg.out.join("report.csv");
    let mut text = fs::read_to_string(&path).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
    text.push_str(&extra);
    write(&path, &text)?;
    println!(
        "test accuracy {} on {} words (letters {}, other words {})",
        sig6(report.accuracy()),
        report.overall.total,
        report.letters.accuracy().map_or("n/a".into(), sig6),
        report.non_letters.accuracy().map_or("n/a".into(), sig6)
    );
    Ok(())
}

struct Comparison {
    speakers: usize,
    mean_a: f64,
    mean_b: f64,
    test: TTest,
}

fn compare(a: &Path, b: &Path) -> Result<Comparison> {
    let (ra, rb) = (read_speaker_accuracies(a)?, read_speaker_accuracies(b)?);
    let common: Vec<u32> = ra.keys().filter(|k| rb.contains_key(k)).copied().collect();
    if common.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "{} and {} share {} speaker(s); the paired test needs at least 2",
            a.display(),
            b.display(),
            common.len()
        )));
    }
    let xa: Vec<f64> = common.iter().map(|k| ra[k]).collect();
    let xb: Vec<f64> = common.iter().map(|k| rb[k]).collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let test = paired_t_test_one_tailed(&xa, &xb, 0.05)?;
    println!(
        "t-test over {} speakers: t = {}, p = {}, {}",
        common.len(),
        sig6(test.t),
        sig6(test.p_value),
        if test.significant {
            "significant"
        } else {
            "not significant"
        }
    );
    Ok(Comparison {
        speakers: common.len(),
        mean_a: mean(&xa),
        mean_b: mean(&xb),
        test,
    })
}

fn comparison_rows(c: &Comparison) -> String {
    format!(
        "ttest.speakers,{}\nttest.mean_a,{}\nttest.mean_b,{}\nttest.t,{}\nttest.df,{}\nttest.p,{}\nttest.significant,{}\nttest.degenerate,{}\n",
        c.speakers,
        sig6(c.mean_a),
        sig6(c.mean_b),
        sig6(c.test.t),
        c.test.df,
        sig6(c.test.p_value),
        u8::from(c.test.significant),
        u8::from(c.test.degenerate_variance)
    )
}

/// Merges per-speaker report files and/or compares two of them.
pub fn report(cfg: &RunConfig) -> Result<()> {
    if cfg.merge.is_empty() && cfg.compare.is_none() {
        return Err(Error::InvalidConfig(
            "report needs '--merge a.csv,b.csv,...' and/or '--compare a.csv b.csv'".into(),
        ));
    }
    if !cfg.merge.is_empty() {
        let mut merged = BTreeMap::new();
        for path in &cfg.merge {
            for (speaker, acc) in read_speaker_accuracies(path)? {
                if merged.insert(speaker, acc).is_some() {
                    return Err(Error::InvalidInput(format!(
                        "speaker {speaker} appears in more than one merged report"
                    )));
                }
            }
        }
        if merged.is_empty() {
            return Err(Error::InvalidInput(
                "merged reports contain no speaker accuracies".into(),
            ));
        }
        let mean = merged.values().sum::<f64>() / merged.len() as f64;
        let mut text = format!(
            "metric,value\nspeakers,{}\naccuracy.mean,{}\n",
            merged.len(),
            sig6(mean)
        );
        for (s, a) in &merged {
            let _ = writeln!(text, "speaker.{s}.accuracy,{}", sig6(*a));
        }
        write(&cfg.out.join("report.csv"), &text)?;
        println!("mean accuracy over {} speakers: {}", merged.len(), sig6(mean));
    }
    if let Some((a, b)) = &cfg.compare {
        let c = compare(a, b)?;
        write(
            &cfg.out.join("comparison.csv"),
            &format!("metric,value\n{}", comparison_rows(&c)),
        )?;
    }
    Ok(())
}

pub fn gradcheck(cfg: &RunConfig) -> Result<bool> {
    let spec = GradCheckSpec {
        loss: cfg.train.loss,
        ..GradCheckSpec::default()
    };
    let report = gradient_check(&spec, 1e-4)?;
    for (block, err) in &report.per_block {
        println!("{block:<26} {}", sig6(*err));
    }
    println!(
        "max relative error {} at {}[{}] over {} parameters: {}",
        sig6(report.max_relative_error),
        report.worst_block,
        report.worst_index,
        report.parameters_checked,
        if report.passed { "PASS" } else { "FAIL" }
    );
    Ok(report.passed)
}

pub fn synth(cfg: &RunConfig) -> Result<()> {
    let samples = synth_dataset(cfg.synth_classes, cfg.synth_per_class, cfg.seed)?;
    fs::create_dir_all(&cfg.data).map_err(|e| Error::InvalidInput(format!("{}: {e}", cfg.data.display())))?;
    let patch_dir = cfg.data.join("patches");
    if patch_dir.exists() {
        fs::remove_dir_all(&patch_dir).map_err(|e| Error::InvalidInput(format!("{}: {e}", patch_dir.display())))?;
    }
    let entries = save_samples(&cfg.data, "patches", &samples)?;
    write_manifest(cfg.data.join("manifest.csv"), &entries)?;
    Vocabulary::synthetic(cfg.synth_classes).save(cfg.data.join("vocabulary.txt"))?;
    println!("wrote {} synthetic words to {}", samples.len(), cfg.data.display());
    Ok(())
}
