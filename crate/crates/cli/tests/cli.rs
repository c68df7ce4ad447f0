use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lipread_core::TensorSet;

fn lipread(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lipread"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

const ALIGN: &str = "0 11000 sil\n11000 23750 bin\n23750 29500 blue\n29500 34000 at\n34000 35500 f\n35500 41000 two\n41000 47250 now\n47250 74500 sil\n";

/// Three sentences of 48 small RGB frames with a reddish mouth blob.
fn frame_corpus(root: &Path) -> PathBuf {
    let corpus = root.join("corpus");
    for (n, sentence) in ["bbaf2n", "bbal6n", "bbas1s"].iter().enumerate() {
        let dir = corpus.join("s3").join(sentence);
        fs::create_dir_all(dir.join("frames")).unwrap();
        fs::write(dir.join("align.txt"), ALIGN).unwrap();
        let mut faces = String::new();
        for t in 0..48usize {
            faces.push_str(&format!("{t} 8 8 48 48\n"));
            let img = image::RgbImage::from_fn(64, 64, |x, y| {
                let (dx, dy) = (x as f64 - 32.0, y as f64 - (44.0 + (t % 5) as f64 * 0.5 + n as f64));
                if dx * dx / 36.0 + dy * dy / 9.0 < 1.0 {
                    image::Rgb([200, 60, 70])
                } else {
                    image::Rgb([190, 150, 130])
                }
            });
            img.save(dir.join("frames").join(format!("{t:03}.ppm"))).unwrap();
        }
        fs::write(dir.join("faces.txt"), faces).unwrap();
    }
    corpus
}

fn read_dir_bytes(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            out.extend(read_dir_bytes(&path));
        } else {
            out.push((path.clone(), fs::read(&path).unwrap()));
        }
    }
    out.sort();
    out
}

#[test]
fn preprocess_fixture_gives_eighteen_words() {
    let tmp = tempfile::tempdir().unwrap();
    frame_corpus(tmp.path());
    let out = lipread(&["preprocess", "--corpus", "corpus", "--data", "data"], tmp.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = fs::read_to_string(tmp.path().join("data/manifest.csv")).unwrap();
    let lines: Vec<&str> = manifest.lines().collect();
    assert_eq!(
        lines[0],
        "speakerId,sentenceId,wordIndex,label,startFrame,endFrame,patchArchivePath"
    );
    assert_eq!(lines.len(), 1 + 18);
    assert!(lines[2].starts_with("3,bbaf2n,1,4,23,29,"), "{}", lines[2]);

    let first = read_dir_bytes(&tmp.path().join("data"));
    let again = lipread(&["preprocess", "--corpus", "corpus", "--data", "data"], tmp.path());
    assert_eq!(code(&again), 0);
    assert_eq!(read_dir_bytes(&tmp.path().join("data")), first);
}

#[test]
fn preprocess_missing_sidecar_is_an_input_error() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = frame_corpus(tmp.path());
    fs::remove_file(corpus.join("s3/bbal6n/faces.txt")).unwrap();
    let out = lipread(&["preprocess", "--corpus", "corpus", "--data", "data"], tmp.path());
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("faces.txt"));
}

fn synth(dir: &Path, classes: &str) {
    let out = lipread(
        &[
            "synth",
            "--data",
            "data",
            "--synth.classes",
            classes,
            "--synth.perClass",
            "8",
            "--seed",
            "5",
        ],
        dir,
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

const SMALL_LSTM: &[&str] = &[
    "--model",
    "lstm",
    "--net.units",
    "8",
    "--train.maxEpochs",
    "4",
    "--split.holdout",
    "2",
];

#[test]
fn lstm_train_then_eval() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path(), "3");
    let mut args = vec!["train", "--data", "data", "--out", "run"];
    args.extend_from_slice(SMALL_LSTM);
    let out = lipread(&args, tmp.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(tmp.path().join("run/model.lrs").exists());
    let history = fs::read_to_string(tmp.path().join("run/history.csv")).unwrap();
    assert!(history.starts_with("epoch,train_loss,val_accuracy,best_val_accuracy\n"));
    let trained = stdout(&out);
    let best = trained.trim().rsplit(' ').next().unwrap().to_owned();

    let eval = lipread(&["eval", "--data", "data", "--out", "run"], tmp.path());
    assert_eq!(code(&eval), 0, "{}", String::from_utf8_lossy(&eval.stderr));
    let report = fs::read_to_string(tmp.path().join("run/report.csv")).unwrap();
    assert!(
        report.contains(&format!("validation.accuracy,{best}\n")),
        "{report}\nvs {trained}"
    );
    assert!(report.contains("samples,6\n"));
    assert!(tmp.path().join("run/confusion.pgm").exists());
    let confusion = fs::read_to_string(tmp.path().join("run/confusion.csv")).unwrap();
    assert!(confusion.starts_with("reference,class0,class1,class2\n"));
}

#[test]
fn hog_checkpoint_dimension() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path(), "3");
    let out = lipread(
        &[
            "train",
            "--data",
            "data",
            "--out",
            "run",
            "--model",
            "svm-hog",
            "--split.holdout",
            "2",
        ],
        tmp.path(),
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let set = TensorSet::load(tmp.path().join("run/model.lrs")).unwrap();
    assert_eq!(set.meta_parse::<usize>("svm.dim").unwrap(), 6 * 576);
}

#[test]
fn training_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path(), "3");
    for run in ["a", "b"] {
        let out = lipread(
            &[
                "train",
                "--data",
                "data",
                "--out",
                run,
                "--model",
                "svm-eigen",
                "--pca.k",
                "10",
                "--split.holdout",
                "2",
            ],
            tmp.path(),
        );
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    assert_eq!(
        read_dir_bytes(&tmp.path().join("a"))
            .into_iter()
            .map(|x| x.1)
            .collect::<Vec<_>>(),
        read_dir_bytes(&tmp.path().join("b"))
            .into_iter()
            .map(|x| x.1)
            .collect::<Vec<_>>()
    );
}

#[test]
fn usage_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path(), "3");
    assert_eq!(
        code(&lipread(&["train", "--data", "data", "--model", "cnn"], tmp.path())),
        2
    );
    assert_eq!(
        code(&lipread(&["train", "--data", "data", "--no.such.key", "1"], tmp.path())),
        2
    );
    assert_eq!(code(&lipread(&["train", "--data", "missing"], tmp.path())), 2);
    assert_eq!(
        code(&lipread(&["eval", "--data", "data", "--out", "nothing"], tmp.path())),
        2
    );
    assert_eq!(code(&lipread(&["frobnicate"], tmp.path())), 2);
}

#[test]
fn checkpoint_class_mismatch_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path(), "3");
    let mut args = vec!["train", "--data", "data", "--out", "run"];
    args.extend_from_slice(SMALL_LSTM);
    assert_eq!(code(&lipread(&args, tmp.path())), 0);
    synth(tmp.path(), "4");
    let out = lipread(&["eval", "--data", "data", "--out", "run"], tmp.path());
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("classes"));
}

#[test]
fn divergence_exits_three() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path(), "3");
    let mut args = vec!["train", "--data", "data", "--out", "run", "--train.lr", "1e300"];
    args.extend_from_slice(SMALL_LSTM);
    let out = lipread(&args, tmp.path());
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn gradcheck_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = lipread(&["gradcheck"], tmp.path());
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("PASS"));
}

#[test]
fn compare_and_merge_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let write = |name: &str, rows: &[(u32, f64)]| {
        let mut text = String::from("metric,value\naccuracy,0.5\n");
        for (s, a) in rows {
            text.push_str(&format!("speaker.{s}.accuracy,{a}\n"));
        }
        fs::write(tmp.path().join(name), text).unwrap();
    };
    write("lstm.csv", &[(10, 0.8), (11, 0.85), (12, 0.9)]);
    write("hog.csv", &[(10, 0.7), (11, 0.75), (12, 0.85)]);
    write("s13.csv", &[(13, 0.6)]);
    let out = lipread(
        &["report", "--out", "cmp", "--compare", "lstm.csv", "hog.csv"],
        tmp.path(),
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("t-test over 3 speakers"));
    let cmp = fs::read_to_string(tmp.path().join("cmp/comparison.csv")).unwrap();
    assert!(cmp.contains("ttest.t,"));

    let merged = lipread(&["report", "--out", "m", "--merge", "lstm.csv,s13.csv"], tmp.path());
    assert_eq!(code(&merged), 0);
    let text = fs::read_to_string(tmp.path().join("m/report.csv")).unwrap();
    assert!(text.contains("speakers,4\n") && text.contains("speaker.13.accuracy,0.6\n"));

    let one = lipread(&["report", "--compare", "lstm.csv", "s13.csv"], tmp.path());
    assert_eq!(code(&one), 2);
}

#[test]
fn eval_appends_comparison() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path(), "3");
    let mut args = vec!["train", "--data", "data", "--out", "run"];
    args.extend_from_slice(SMALL_LSTM);
    assert_eq!(code(&lipread(&args, tmp.path())), 0);
    fs::write(
        tmp.path().join("a.csv"),
        "metric,value\nspeaker.1.accuracy,0.9\nspeaker.2.accuracy,0.8\n",
    )
    .unwrap();
    fs::write(
        tmp.path().join("b.csv"),
        "metric,value\nspeaker.1.accuracy,0.7\nspeaker.2.accuracy,0.75\n",
    )
    .unwrap();
    let out = lipread(
        &["eval", "--data", "data", "--out", "run", "--compare", "a.csv", "b.csv"],
        tmp.path(),
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = fs::read_to_string(tmp.path().join("run/report.csv")).unwrap();
    assert!(report.contains("ttest.t,"));
}
