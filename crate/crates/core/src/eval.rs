//! Scoring: accuracies, confusion matrices, the letters-vs-words breakdown,
//! the paired significance test and report writers.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::corpus::{Category, Vocabulary};
use crate::error::{Error, Result};

/// Rows are reference labels, columns hypotheses.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn add(&mut self, reference: usize, predicted: usize) -> Result<()> {
        if reference >= self.classes || predicted >= self.classes {
            return Err(Error::InvalidInput(format!(
                "label pair ({reference}, {predicted}) out of range for {} classes",
                self.classes
            )));
        }
        self.counts[reference * self.classes + predicted] += 1;
        Ok(())
    }

    pub fn get(&self, reference: usize, predicted: usize) -> u64 {
        self.counts[reference * self.classes + predicted]
    }

    pub fn row(&self, reference: usize) -> &[u64] {
        &self.counts[reference * self.classes..(reference + 1) * self.classes]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes).map(|k| self.get(k, k)).sum()
    }

    /// Row-normalized intensities, `round(255 * count / row_sum)`; empty rows
    /// stay black.
    pub fn to_grey(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.counts.len());
        for r in 0..self.classes {
            let row = self.row(r);
            let sum: u64 = row.iter().sum();
            out.extend(row.iter().map(|&c| {
                if sum == 0 {
                    0
                } else {
                    (255.0 * c as f64 / sum as f64).round() as u8
                }
            }));
        }
        out
    }
}

/// One classified sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Scored {
    pub predicted: usize,
    pub reference: usize,
    pub speaker: u32,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Tally {
    pub correct: u64,
    pub total: u64,
}

impl Tally {
    fn add(&mut self, hit: bool) {
        self.total += 1;
        self.correct += u64::from(hit);
    }

    /// `None` when nothing was counted.
    pub fn accuracy(&self) -> Option<f64> {
        (self.total > 0).then(|| self.correct as f64 / self.total as f64)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub overall: Tally,
    pub letters: Tally,
    pub non_letters: Tally,
    pub confusion: ConfusionMatrix,
    pub per_speaker: BTreeMap<u32, Tally>,
}

impl EvalReport {
    pub fn accuracy(&self) -> f64 {
        self.overall.accuracy().unwrap_or(0.0)
    }

    /// `metric,value` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,value\n");
        let mut row = |name: &str, v: f64| {
            let _ = writeln!(out, "{name},{}", sig6(v));
        };
        row("samples", self.overall.total as f64);
        row("accuracy", self.accuracy());
        for (name, t) in [("letters", &self.letters), ("non_letters", &self.non_letters)] {
            row(&format!("{name}.samples"), t.total as f64);
            if let Some(a) = t.accuracy() {
                row(&format!("{name}.accuracy"), a);
            }
        }
        for (speaker, t) in &self.per_speaker {
            row(&format!("speaker.{speaker}.accuracy"), t.accuracy().unwrap_or(0.0));
        }
        out
    }

    /// Confusion counts with a header of word names.
    pub fn confusion_csv(&self, vocab: &Vocabulary) -> String {
        let n = self.confusion.classes();
        let mut out = String::from("reference");
        for k in 0..n {
            out.push(',');
            out.push_str(&vocab.name(k));
        }
        out.push('\n');
        for r in 0..n {
            out.push_str(&vocab.name(r));
            for c in self.confusion.row(r) {
                let _ = write!(out, ",{c}");
            }
            out.push('\n');
        }
        out
    }

    /// Writes `report.csv`, `confusion.csv` and `confusion.pgm` into `dir`.
    pub fn write_files(&self, dir: &Path, vocab: &Vocabulary) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let write = |name: &str, bytes: &[u8]| {
            let path = dir.join(name);
            std::fs::write(&path, bytes).map_err(|e| Error::io(path, e))
        };
        write("report.csv", self.to_csv().as_bytes())?;
        write("confusion.csv", self.confusion_csv(vocab).as_bytes())?;
        render_confusion(&self.confusion, dir.join("confusion.pgm"))
    }
}

/// Scores predictions against references. Letters are the vocabulary's
/// letter words; everything else counts as a non-letter.
pub fn score(items: &[Scored], vocab: &Vocabulary) -> Result<EvalReport> {
    if items.is_empty() {
        return Err(Error::InvalidInput("nothing to score".into()));
    }
    let mut report = EvalReport {
        overall: Tally::default(),
        letters: Tally::default(),
        non_letters: Tally::default(),
        confusion: ConfusionMatrix::new(vocab.len()),
        per_speaker: BTreeMap::new(),
    };
    for s in items {
        report.confusion.add(s.reference, s.predicted)?;
        let hit = s.predicted == s.reference;
        report.overall.add(hit);
        if vocab.category(s.reference) == Some(Category::Letter) {
            report.letters.add(hit);
        } else {
            report.non_letters.add(hit);
        }
        report.per_speaker.entry(s.speaker).or_default().add(hit);
    }
    Ok(report)
}

/// Writes the row-normalized confusion image as binary PGM.
pub fn render_confusion(matrix: &ConfusionMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let n = matrix.classes();
    let mut bytes = format!("P5\n{n} {n}\n255\n").into_bytes();
    bytes.extend(matrix.to_grey());
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TTest {
    pub t: f64,
    pub p_value: f64,
    pub df: usize,
    pub significant: bool,
    /// Differences were nonzero but identical, so the variance vanished.
    pub degenerate_variance: bool,
}

/// Paired one-tailed t-test of `H1: mean(a) > mean(b)`.
pub fn paired_t_test_one_tailed(a: &[f64], b: &[f64], alpha: f64) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::InvalidInput(format!(
            "paired lists differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::InvalidInput(format!("t-test needs at least 2 pairs, got {n}")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidConfig(format!("alpha must lie in (0,1), got {alpha}")));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let nf = n as f64;
    let mean = d.iter().sum::<f64>() / nf;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    let df = n - 1;
    if d.iter().all(|&x| x == 0.0) {
        return Ok(TTest {
            t: 0.0,
            p_value: 0.5,
            df,
            significant: false,
            degenerate_variance: false,
        });
    }
    if var <= f64::EPSILON * mean * mean {
        let up = mean > 0.0;
        return Ok(TTest {
            t: if up { f64::INFINITY } else { f64::NEG_INFINITY },
            p_value: if up { 0.0 } else { 1.0 },
            df,
            significant: up,
            degenerate_variance: true,
        });
    }
    let t = mean / (var.sqrt() / nf.sqrt());
    let dist = StudentsT::new(0.0, 1.0, df as f64).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let p_value = dist.sf(t);
    Ok(TTest {
        t,
        p_value,
        df,
        significant: p_value < alpha,
        degenerate_variance: false,
    })
}

/// Per-speaker accuracies from a report CSV (`speaker.<id>.accuracy` rows).
pub fn read_speaker_accuracies(path: impl AsRef<Path>) -> Result<BTreeMap<u32, f64>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let Some((metric, value)) = line.split_once(',') else {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("{}: expected 'metric,value'", path.display()),
            });
        };
        let Some(id) = metric
            .strip_prefix("speaker.")
            .and_then(|m| m.strip_suffix(".accuracy"))
        else {
            continue;
        };
        let parse_err = |what: &str| Error::Parse {
            line: i + 1,
            message: format!("{}: bad {what} in '{line}'", path.display()),
        };
        let id: u32 = id.parse().map_err(|_| parse_err("speaker id"))?;
        let value: f64 = value.trim().parse().map_err(|_| parse_err("value"))?;
        out.insert(id, value);
    }
    Ok(out)
}

/// Formats like C's `%.6g`.
pub fn sig6(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return if v == 0.0 { "0".into() } else { v.to_string() };
    }
    let exp = v.abs().log10().floor() as i32;
    // rounding can carry into the next decade
    let rounded: f64 = format!("{v:.5e}").parse().unwrap_or(v);
    let exp = if rounded.abs() >= 10f64.powi(exp + 1) {
        exp + 1
    } else {
        exp
    };
    let s = if (-4..6).contains(&exp) {
        format!("{v:.*}", (5 - exp).max(0) as usize)
    } else {
        let s = format!("{v:.5e}");
        let (mant, e) = s.split_once('e').unwrap_or((&s, "0"));
        let e: i32 = e.parse().unwrap_or(0);
        return format!("{}e{}{:02}", trim_zeros(mant), if e < 0 { '-' } else { '+' }, e.abs());
    };
    trim_zeros(&s).to_owned()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn items(pairs: &[(usize, usize)]) -> Vec<Scored> {
        pairs
            .iter()
            .map(|&(predicted, reference)| Scored {
                predicted,
                reference,
                speaker: 1,
            })
            .collect()
    }

    #[test]
    fn all_correct_is_diagonal() {
        let v = Vocabulary::grid();
        let r = score(&items(&(0..51).map(|k| (k, k)).collect::<Vec<_>>()), &v).unwrap();
        assert_eq!(r.accuracy(), 1.0);
        for i in 0..51 {
            for j in 0..51 {
                assert_eq!(r.confusion.get(i, j), u64::from(i == j));
            }
        }
    }

    #[test]
    fn speaker_seven_ratio() {
        let v = Vocabulary::grid();
        let pairs: Vec<(usize, usize)> = (0..255)
            .map(|i| {
                let reference = i % 51;
                (if i < 209 { reference } else { (reference + 1) % 51 }, reference)
            })
            .collect();
        let r = score(&items(&pairs), &v).unwrap();
        assert_eq!(
            r.overall,
            Tally {
                correct: 209,
                total: 255
            }
        );
        assert!((r.accuracy() - 0.8196).abs() < 1e-4);
        assert_eq!(r.confusion.trace(), 209);
    }

    #[test]
    fn categories_recombine_to_overall() {
        let v = Vocabulary::grid();
        let pairs: Vec<(usize, usize)> = (0..300).map(|i| ((i * 7) % 51, (i * 13) % 51)).collect();
        let r = score(&items(&pairs), &v).unwrap();
        assert_eq!(r.letters.total + r.non_letters.total, r.overall.total);
        let recombined = (r.letters.accuracy().unwrap() * r.letters.total as f64
            + r.non_letters.accuracy().unwrap() * r.non_letters.total as f64)
            / r.overall.total as f64;
        assert!((recombined - r.accuracy()).abs() < 1e-12);
    }

    #[test]
    fn out_of_range_label_rejected() {
        let v = Vocabulary::grid();
        assert!(score(&items(&[(51, 0)]), &v).is_err());
        assert!(score(&[], &v).is_err());
    }

    #[test]
    fn grey_rows() {
        let mut m = ConfusionMatrix::new(51);
        for c in 0..51 {
            m.add(0, c).unwrap();
        }
        m.add(2, 2).unwrap();
        let g = m.to_grey();
        assert!(g[..51].iter().all(|&x| x == 5));
        assert!(g[51..102].iter().all(|&x| x == 0));
        assert_eq!(g[2 * 51 + 2], 255);
    }

    #[test]
    fn pgm_identity() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = ConfusionMatrix::new(51);
        for k in 0..51 {
            m.add(k, k).unwrap();
        }
        let path = dir.path().join("c.pgm");
        render_confusion(&m, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let header = b"P5\n51 51\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        let px = &bytes[header.len()..];
        assert_eq!(px.len(), 51 * 51);
        for (i, &p) in px.iter().enumerate() {
            assert_eq!(p, if i / 51 == i % 51 { 255 } else { 0 });
        }
    }

    #[test]
    fn t_test_reference_case() {
        let r = paired_t_test_one_tailed(&[1.0, 2.0, 3.0], &[0.0; 3], 0.05).unwrap();
        assert!((r.t - 12f64.sqrt()).abs() < 1e-12);
        assert_eq!(r.df, 2);
        // closed form of the df=2 tail
        let p = 0.5 * (1.0 - r.t / (r.t * r.t + 2.0).sqrt());
        assert!((r.p_value - p).abs() < 1e-10);
        assert!(r.significant);
        let s = paired_t_test_one_tailed(&[0.0; 3], &[1.0, 2.0, 3.0], 0.05).unwrap();
        assert_eq!(s.t, -r.t);
        assert!(!s.significant);
    }

    #[test]
    fn t_test_degenerate_cases() {
        let same = paired_t_test_one_tailed(&[0.5, 0.7], &[0.5, 0.7], 0.05).unwrap();
        assert_eq!(same.t, 0.0);
        assert!(!same.significant);
        let flat = paired_t_test_one_tailed(&[0.6, 0.7], &[0.5, 0.6], 0.05).unwrap();
        assert!(flat.degenerate_variance && flat.significant && flat.p_value == 0.0);
        assert!(paired_t_test_one_tailed(&[1.0], &[0.0], 0.05).is_err());
        assert!(paired_t_test_one_tailed(&[1.0, 2.0], &[0.0], 0.05).is_err());
    }

    #[test]
    fn sig6_formatting() {
        assert_eq!(sig6(209.0 / 255.0), "0.819608");
        assert_eq!(sig6(255.0), "255");
        assert_eq!(sig6(0.0), "0");
        assert_eq!(sig6(1.0), "1");
        assert_eq!(sig6(1234567.0), "1.23457e+06");
        assert_eq!(sig6(0.0000123456789), "1.23457e-05");
        assert_eq!(sig6(999999.7), "1e+06");
        assert_eq!(sig6(-0.5), "-0.5");
    }

    #[test]
    fn report_round_trips_speakers() {
        let dir = tempfile::tempdir().unwrap();
        let v = Vocabulary::synthetic(2);
        let mut xs = items(&[(0, 0), (1, 0)]);
        xs.push(Scored {
            predicted: 1,
            reference: 1,
            speaker: 4,
        });
        let r = score(&xs, &v).unwrap();
        r.write_files(dir.path(), &v).unwrap();
        let acc = read_speaker_accuracies(dir.path().join("report.csv")).unwrap();
        assert_eq!(acc, BTreeMap::from([(1, 0.5), (4, 1.0)]));
        let confusion = std::fs::read_to_string(dir.path().join("confusion.csv")).unwrap();
        assert_eq!(confusion, "reference,class0,class1\nclass0,1,1\nclass1,0,1\n");
    }
}
