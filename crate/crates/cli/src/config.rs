//! Flat `key = value` run configuration with command-line overrides.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use lipread_core::corpus::{DEVELOPMENT_SPEAKERS, EVALUATION_SPEAKERS};
use lipread_core::{Error, HogConfig, LossPlacement, ModelKind, Result, SvmTrainConfig, TrainConfig};

/// Every accepted key with its default (empty = unset).
const KEYS: &[(&str, &str)] = &[
    ("corpus", ""),
    ("data", "data"),
    ("out", "out"),
    ("checkpoint", ""),
    ("model", "lstm"),
    ("seed", "0"),
    ("speakers", "all"),
    ("speaker", ""),
    ("pca.k", "100"),
    ("hog.cell", "8"),
    ("seq.len", "6"),
    ("net.units", "128"),
    ("train.lr", "0.02"),
    ("train.momentum", "0"),
    ("train.patience", "10"),
    ("train.maxEpochs", "200"),
    ("train.init", "0.05"),
    ("train.clip", "none"),
    ("train.loss", "all-frames"),
    ("svm.c", "1.0"),
    ("svm.epochs", "50"),
    ("svm.tol", "1e-5"),
    ("align.unitsPerFrame", "1000"),
    ("split.holdout", "5"),
    ("synth.classes", "10"),
    ("synth.perClass", "50"),
    ("merge", ""),
];

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub corpus: Option<PathBuf>,
    pub data: PathBuf,
    pub out: PathBuf,
    pub checkpoint: PathBuf,
    pub model: ModelKind,
    pub seed: u64,
    pub speakers: SpeakerSet,
    pub speaker: Option<u32>,
    pub pca_k: usize,
    pub hog: HogConfig,
    pub seq_len: usize,
    pub units: usize,
    pub train: TrainConfig,
    pub svm: SvmTrainConfig,
    pub units_per_frame: u64,
    pub holdout: usize,
    pub synth_classes: usize,
    pub synth_per_class: usize,
    pub compare: Option<(PathBuf, PathBuf)>,
    pub merge: Vec<PathBuf>,
}

/// Which speakers `preprocess` ingests.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SpeakerSet {
    All,
    Listed(Vec<u32>),
}

impl SpeakerSet {
    pub fn contains(&self, speaker: u32) -> bool {
        match self {
            SpeakerSet::All => true,
            SpeakerSet::Listed(v) => v.contains(&speaker),
        }
    }
}

impl FromStr for SpeakerSet {
    type Err = Error;

    /// `all`, `development`, `evaluation`, or a list like `1,3,5-7`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => return Ok(SpeakerSet::All),
            "development" => return Ok(SpeakerSet::Listed(DEVELOPMENT_SPEAKERS.collect())),
            "evaluation" => return Ok(SpeakerSet::Listed(EVALUATION_SPEAKERS.collect())),
            _ => {}
        }
        let bad = || Error::InvalidConfig(format!("speakers: cannot parse '{s}'"));
        let mut out = Vec::new();
        for part in s.split(',').map(str::trim) {
            match part.split_once('-') {
                Some((a, b)) => {
                    let (a, b): (u32, u32) = (a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?);
                    if a > b {
                        return Err(bad());
                    }
                    out.extend(a..=b);
                }
                None => out.push(part.parse().map_err(|_| bad())?),
            }
        }
        Ok(SpeakerSet::Listed(out))
    }
}

/// Raw key/value pairs collected from the file and the overrides.
#[derive(Clone, Debug, Default)]
pub struct RawConfig {
    values: BTreeMap<String, String>,
    compare: Option<(PathBuf, PathBuf)>,
}

impl RawConfig {
    /// Parses `--key value` overrides; `--config <file>` is read first so
    /// the remaining overrides win over it regardless of their order.
    pub fn from_args(args: &[String]) -> Result<Self> {
        let mut pairs = Vec::new();
        let mut config_file = None;
        let mut compare = None;
        let mut it = args.iter();
        while let Some(arg) = it.next() {
            let Some(key) = arg.strip_prefix("--") else {
                return Err(Error::InvalidConfig(format!("expected '--key value', found '{arg}'")));
            };
            let mut value = |what: &str| {
                it.next()
                    .cloned()
                    .ok_or_else(|| Error::InvalidConfig(format!("--{key} needs {what}")))
            };
            match key {
                "config" => config_file = Some(PathBuf::from(value("a file path")?)),
                "compare" => {
                    let a = value("two report files")?;
                    let b = value("two report files")?;
                    compare = Some((PathBuf::from(a), PathBuf::from(b)));
                }
                _ => {
                    let v = value("a value")?;
                    pairs.push((key.to_owned(), v));
                }
            }
        }
        let mut raw = match config_file {
            Some(path) => Self::from_file(&path)?,
            None => Self::default(),
        };
        for (k, v) in pairs {
            raw.set(&k, v)?;
        }
        raw.compare = compare;
        Ok(raw)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        let mut raw = Self::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                message: format!("{}: expected 'key = value'", path.display()),
            })?;
            raw.set(k.trim(), v.trim().to_owned())?;
        }
        Ok(raw)
    }

    fn set(&mut self, key: &str, value: String) -> Result<()> {
        if !KEYS.iter().any(|(k, _)| *k == key) {
            return Err(Error::InvalidConfig(format!("unknown configuration key '{key}'")));
        }
        self.values.insert(key.to_owned(), value);
        Ok(())
    }

    fn get(&self, key: &str) -> &str {
        self.values
            .get(key)
            .map(String::as_str)
            .or_else(|| KEYS.iter().find(|(k, _)| *k == key).map(|(_, d)| *d))
            .expect("key is declared")
    }

    fn parse<T: FromStr>(&self, key: &str) -> Result<T> {
        let v = self.get(key);
        v.parse()
            .map_err(|_| Error::InvalidConfig(format!("{key}: cannot parse '{v}'")))
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        let v = self.get(key);
        (!v.is_empty()).then(|| PathBuf::from(v))
    }

    /// Converts and validates every value.
    pub fn resolve(&self) -> Result<RunConfig> {
        let out = self.path("out").unwrap_or_else(|| PathBuf::from("out"));
        let clip = match self.get("train.clip") {
            "none" | "" => None,
            _ => Some(self.parse::<f64>("train.clip")?),
        };
        let speaker = match self.get("speaker") {
            "" => None,
            _ => Some(self.parse("speaker")?),
        };
        let train = TrainConfig {
            learning_rate: self.parse("train.lr")?,
            momentum: self.parse("train.momentum")?,
            patience: self.parse("train.patience")?,
            init_range: self.parse("train.init")?,
            seed: self.parse("seed")?,
            max_epochs: self.parse("train.maxEpochs")?,
            gradient_clip: clip,
            loss: self.get("train.loss").parse::<LossPlacement>()?,
        };
        train.validate()?;
        let svm = SvmTrainConfig {
            c: self.parse("svm.c")?,
            epochs: self.parse("svm.epochs")?,
            seed: self.parse("seed")?,
            tolerance: self.parse("svm.tol")?,
        };
        svm.validate()?;
        let hog = HogConfig {
            cell_size: self.parse("hog.cell")?,
            ..HogConfig::default()
        };
        hog.validate(40, 40)?;
        let cfg = RunConfig {
            corpus: self.path("corpus"),
            data: self.path("data").unwrap_or_else(|| PathBuf::from("data")),
            checkpoint: self.path("checkpoint").unwrap_or_else(|| out.join("model.lrs")),
            out,
            model: self.get("model").parse()?,
            seed: self.parse("seed")?,
            speakers: self.get("speakers").parse()?,
            speaker,
            pca_k: self.parse("pca.k")?,
            hog,
            seq_len: self.parse("seq.len")?,
            units: self.parse("net.units")?,
            train,
            svm,
            units_per_frame: self.parse("align.unitsPerFrame")?,
            holdout: self.parse("split.holdout")?,
            synth_classes: self.parse("synth.classes")?,
            synth_per_class: self.parse("synth.perClass")?,
            compare: self.compare.clone(),
            merge: self
                .get("merge")
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(PathBuf::from)
                .collect(),
        };
        let positive = [
            ("pca.k", cfg.pca_k),
            ("seq.len", cfg.seq_len),
            ("net.units", cfg.units),
            ("align.unitsPerFrame", cfg.units_per_frame as usize),
            ("synth.perClass", cfg.synth_per_class),
        ];
        if let Some((key, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidConfig(format!("{key} must be positive")));
        }
        if cfg.synth_classes < 2 {
            return Err(Error::InvalidConfig("synth.classes must be at least 2".into()));
        }
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(list: &[&str]) -> Vec<String> {
        list.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn defaults_follow_the_reference_setup() {
        let cfg = RawConfig::default().resolve().unwrap();
        assert_eq!(cfg.pca_k, 100);
        assert_eq!(cfg.hog.cell_size, 8);
        assert_eq!(cfg.seq_len, 6);
        assert_eq!(cfg.units, 128);
        assert_eq!(cfg.train.learning_rate, 0.02);
        assert_eq!(cfg.train.patience, 10);
        assert_eq!(cfg.svm.c, 1.0);
        assert_eq!(cfg.units_per_frame, 1000);
        assert_eq!(cfg.holdout, 5);
        assert_eq!(cfg.model, ModelKind::Lstm);
        assert_eq!(cfg.checkpoint, PathBuf::from("out/model.lrs"));
    }

    #[test]
    fn file_then_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "# experiment\nmodel = svm-hog\nseed=4\n\nsvm.c = 2.5\n").unwrap();
        let raw = RawConfig::from_args(&args(&["--seed", "9", "--config", path.to_str().unwrap()])).unwrap();
        let cfg = raw.resolve().unwrap();
        assert_eq!(cfg.model, ModelKind::SvmHog);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.svm.c, 2.5);
    }

    #[test]
    fn unknown_keys_and_bad_values_rejected() {
        assert!(RawConfig::from_args(&args(&["--net.layers", "3"])).is_err());
        assert!(RawConfig::from_args(&args(&["--seed"])).is_err());
        assert!(RawConfig::from_args(&args(&["seed", "3"])).is_err());
        for bad in [
            ["--hog.cell", "7"],
            ["--train.lr", "-1"],
            ["--model", "cnn"],
            ["--pca.k", "0"],
            ["--train.loss", "mean"],
        ] {
            let raw = RawConfig::from_args(&args(&bad)).unwrap();
            assert!(raw.resolve().is_err(), "{bad:?}");
        }
    }

    #[test]
    fn speaker_sets() {
        assert_eq!(
            "1,3,5-7".parse::<SpeakerSet>().unwrap(),
            SpeakerSet::Listed(vec![1, 3, 5, 6, 7])
        );
        assert!("development".parse::<SpeakerSet>().unwrap().contains(9));
        assert!(!"evaluation".parse::<SpeakerSet>().unwrap().contains(9));
        assert!("7-3".parse::<SpeakerSet>().is_err());
    }

    #[test]
    fn compare_takes_two_paths() {
        let raw = RawConfig::from_args(&args(&["--compare", "a.csv", "b.csv"])).unwrap();
        assert_eq!(raw.resolve().unwrap().compare, Some(("a.csv".into(), "b.csv".into())));
        assert!(RawConfig::from_args(&args(&["--compare", "a.csv"])).is_err());
    }
}
