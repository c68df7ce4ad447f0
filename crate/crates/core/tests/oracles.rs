mod common;

use lipread_core::corpus::{make_splits, synth_dataset, Vocabulary};
use lipread_core::features::{fit_pca, PcaModel};
use lipread_core::net::{gradient_check, GradCheckSpec, LossPlacement, LstmNetwork, NetworkShape};
use lipread_core::svm::{hinge_objective, train_binary, SvmTrainConfig};

use common::*;

fn random_rows(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = Lcg(seed);
    (0..n)
        .map(|_| (0..d).map(|j| rng.normal() * (1.0 + j as f64)).collect())
        .collect()
}

#[test]
fn pca_projections_match_dense_eigensolver() {
    let rows = random_rows(20, 12, 3);
    let model = fit_pca(&rows, 12).unwrap();
    let (mean, cov) = covariance(&rows);
    let (values, vectors) = jacobi_eigen(&cov);
    for (k, v) in values.iter().enumerate() {
        assert!((v - model.variances[k]).abs() < 1e-8 * v.abs().max(1.0));
    }
    for r in &rows {
        let ours = model.project(r).unwrap();
        for (k, e) in vectors.iter().enumerate() {
            if values[k] < 1e-9 {
                continue;
            }
            let theirs: f64 = e.iter().zip(r.iter().zip(&mean)).map(|(a, (x, m))| a * (x - m)).sum();
            assert!(
                (ours[k].abs() - theirs.abs()).abs() < 1e-8,
                "component {k}: {} vs {theirs}",
                ours[k]
            );
        }
    }
}

#[test]
fn pca_full_rank_is_lossless() {
    let rows = random_rows(30, 8, 9);
    let model = fit_pca(&rows, 8).unwrap();
    for r in &rows {
        let back = model.reconstruct(&model.project(r).unwrap()).unwrap();
        for (a, b) in back.iter().zip(r) {
            assert!((a - b).abs() < 1e-8);
        }
    }
}

#[test]
fn pca_projection_is_affine() {
    let rows = random_rows(40, 10, 5);
    let model: PcaModel = fit_pca(&rows, 4).unwrap();
    let (x, y) = (&rows[0], &rows[1]);
    let (alpha, beta) = (0.7, -1.3);
    let mixed: Vec<f64> = (0..10)
        .map(|i| alpha * x[i] + beta * y[i] - (alpha + beta - 1.0) * model.mean[i])
        .collect();
    let lhs = model.project(&mixed).unwrap();
    let (fx, fy) = (model.project(x).unwrap(), model.project(y).unwrap());
    for k in 0..4 {
        assert!((lhs[k] - (alpha * fx[k] + beta * fy[k])).abs() < 1e-9);
    }
}

#[test]
fn pegasos_objective_approaches_the_exact_optimum() {
    let (x, labels) = ten_point_problem();
    let y: Vec<f64> = labels.iter().map(|&l| if l == 1 { 1.0 } else { -1.0 }).collect();
    let cfg = SvmTrainConfig {
        epochs: 3000,
        tolerance: 1e-10,
        ..SvmTrainConfig::default()
    };
    let model = train_binary(&x, &y, &cfg, 0).unwrap();
    let lambda = 1.0 / (x.len() as f64 * cfg.c);
    let (w, b) = svm_dual(&x, &y, cfg.c);
    let exact = hinge_objective(&w, b, &x, &y, lambda);
    let ours = hinge_objective(&model.weights, model.bias, &x, &y, lambda);
    assert!(ours >= exact - 1e-12);
    assert!(ours - exact < 0.02 * exact, "objective {ours} vs optimum {exact}");
}

#[test]
fn gradient_check_passes_for_final_frame_loss() {
    let spec = GradCheckSpec {
        loss: LossPlacement::FinalFrame,
        ..GradCheckSpec::default()
    };
    assert!(gradient_check(&spec, 1e-4).unwrap().passed);
}

#[test]
fn forward_pass_matches_reference_loops() {
    let shape = NetworkShape {
        inputs: 6,
        units: 4,
        classes: 3,
    };
    let net = LstmNetwork::<f64>::init_uniform(shape, 0.8, 17);
    let mut rng = Lcg(4);
    let frames: Vec<Vec<f64>> = (0..5).map(|_| (0..6).map(|_| rng.normal()).collect()).collect();
    let ours = net.forward(&frames).unwrap();

    let (mut h1, mut c1) = (vec![0.0; 4], vec![0.0; 4]);
    let (mut h2, mut c2) = (vec![0.0; 4], vec![0.0; 4]);
    for (t, x) in frames.iter().enumerate() {
        let a: Vec<f64> = (0..4)
            .map(|j| (net.ff.bias[j] + (0..6).map(|k| net.ff.weights[j * 6 + k] * x[k]).sum::<f64>()).tanh())
            .collect();
        (h1, c1) = lstm_step_reference(
            &net.lstm1.input_weights,
            &net.lstm1.recurrent_weights,
            &net.lstm1.bias,
            &a,
            &h1,
            &c1,
        );
        (h2, c2) = lstm_step_reference(
            &net.lstm2.input_weights,
            &net.lstm2.recurrent_weights,
            &net.lstm2.bias,
            &h1,
            &h2,
            &c2,
        );
        let z: Vec<f64> = (0..3)
            .map(|j| net.output.bias[j] + (0..4).map(|k| net.output.weights[j * 4 + k] * h2[k]).sum::<f64>())
            .collect();
        let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let s: f64 = z.iter().map(|v| (v - m).exp()).sum();
        for j in 0..3 {
            assert!((ours[t][j] - (z[j] - m).exp() / s).abs() < 1e-12);
        }
    }
}

#[test]
fn synthetic_classes_beat_chance_threefold() {
    let classes = 10;
    let vocab = Vocabulary::synthetic(classes);
    let split = make_splits(synth_dataset(classes, 50, 7).unwrap(), &vocab, 7, 10).unwrap();
    let mean_frame = |s: &lipread_core::WordSample| {
        let mut m = vec![0.0f64; 1600];
        for f in &s.frames {
            for (a, v) in m.iter_mut().zip(&f.pixels) {
                *a += f64::from(*v) / s.frames.len() as f64;
            }
        }
        m
    };
    let mut centroids = vec![vec![0.0; 1600]; classes];
    for s in &split.train {
        for (c, v) in centroids[s.label].iter_mut().zip(mean_frame(s)) {
            *c += v / 30.0;
        }
    }
    let hits = split
        .test
        .iter()
        .filter(|s| {
            let m = mean_frame(s);
            let dist = |c: &Vec<f64>| c.iter().zip(&m).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
            let best = (0..classes)
                .min_by(|&a, &b| dist(&centroids[a]).total_cmp(&dist(&centroids[b])))
                .unwrap();
            best == s.label
        })
        .count();
    let accuracy = hits as f64 / split.test.len() as f64;
    assert!(accuracy >= 3.0 / classes as f64, "nearest-centroid accuracy {accuracy}");
    assert!(accuracy < 1.0);
}
