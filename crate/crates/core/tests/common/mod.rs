//! Independent reference implementations used as test oracles. None of
//! these share code with the library beyond plain data types.

#![allow(dead_code, clippy::needless_range_loop)]

/// Eigenpairs of a symmetric matrix by cyclic Jacobi rotations, sorted by
/// decreasing eigenvalue. Eigenvectors are returned as rows.
pub fn jacobi_eigen(matrix: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = matrix.len();
    let mut a: Vec<Vec<f64>> = matrix.to_vec();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect())
        .collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j][j].partial_cmp(&a[i][i]).unwrap());
    let values = order.iter().map(|&i| a[i][i]).collect();
    let vectors = order.iter().map(|&i| (0..n).map(|k| v[k][i]).collect()).collect();
    (values, vectors)
}

/// Column means and the unbiased sample covariance.
pub fn covariance(rows: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = rows.len();
    let d = rows[0].len();
    let mut mean = vec![0.0; d];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v / n as f64;
        }
    }
    let mut cov = vec![vec![0.0; d]; d];
    for r in rows {
        for i in 0..d {
            for j in 0..d {
                cov[i][j] += (r[i] - mean[i]) * (r[j] - mean[j]) / (n as f64 - 1.0);
            }
        }
    }
    (mean, cov)
}

/// Exact soft-margin solution of `1/2 |w|^2 + 1/2 b^2 + C sum hinge` by dual
/// coordinate ascent (the bias is an extra constant feature, so the dual has
/// only box constraints).
pub fn svm_dual(x: &[Vec<f64>], y: &[f64], c: f64) -> (Vec<f64>, f64) {
    let n = x.len();
    let d = x[0].len();
    let aug: Vec<Vec<f64>> = x.iter().map(|r| r.iter().copied().chain([1.0]).collect()).collect();
    let mut alpha = vec![0.0; n];
    let mut w = vec![0.0; d + 1];
    for _ in 0..100_000 {
        let mut change: f64 = 0.0;
        for i in 0..n {
            let q: f64 = aug[i].iter().map(|v| v * v).sum();
            let margin: f64 = y[i] * aug[i].iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
            let new = (alpha[i] + (1.0 - margin) / q).clamp(0.0, c);
            let delta = new - alpha[i];
            if delta != 0.0 {
                for (wk, a) in w.iter_mut().zip(&aug[i]) {
                    *wk += delta * y[i] * a;
                }
                alpha[i] = new;
                change = change.max(delta.abs());
            }
        }
        if change < 1e-13 {
            break;
        }
    }
    let b = w.pop().unwrap();
    (w, b)
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// One LSTM step written as plain loops over the gate-major weight layout
/// (`i, f, o, g` blocks of `units` rows each).
pub fn lstm_step_reference(
    wx: &[f64],
    wh: &[f64],
    bias: &[f64],
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let u = h_prev.len();
    let m = x.len();
    let pre = |gate: usize, j: usize| {
        let row = gate * u + j;
        let mut z = bias[row];
        for k in 0..m {
            z += wx[row * m + k] * x[k];
        }
        for k in 0..u {
            z += wh[row * u + k] * h_prev[k];
        }
        z
    };
    let mut h = vec![0.0; u];
    let mut c = vec![0.0; u];
    for j in 0..u {
        let i = sigmoid(pre(0, j));
        let f = sigmoid(pre(1, j));
        let o = sigmoid(pre(2, j));
        let g = pre(3, j).tanh();
        c[j] = f * c_prev[j] + i * g;
        h[j] = o * c[j].tanh();
    }
    (h, c)
}

/// Seeded standard normals from a small LCG + Box-Muller, independent of
/// the library's generator.
pub struct Lcg(pub u64);

impl Lcg {
    pub fn unit(&mut self) -> f64 {
        self.0 = self
            .0
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        ((self.0 >> 11) as f64 + 0.5) / (1u64 << 53) as f64
    }

    pub fn normal(&mut self) -> f64 {
        let (a, b) = (self.unit(), self.unit());
        (-2.0 * a.ln()).sqrt() * (2.0 * std::f64::consts::PI * b).cos()
    }
}

/// Ten points, five per class, with one positive point near the negatives.
pub fn ten_point_problem() -> (Vec<Vec<f64>>, Vec<usize>) {
    let x = vec![
        vec![2.0, 2.0],
        vec![3.0, 1.5],
        vec![2.5, 3.0],
        vec![1.5, 2.5],
        vec![0.2, 0.4],
        vec![-2.0, -1.0],
        vec![-1.5, -2.5],
        vec![-3.0, -2.0],
        vec![-2.5, 0.0],
        vec![-0.5, -0.8],
    ];
    let labels = vec![1, 1, 1, 1, 1, 0, 0, 0, 0, 0];
    (x, labels)
}

/// Three well-separated Gaussian blobs in 4 dimensions.
pub fn three_blobs(per_class: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let centers = [[4.0, 0.0, 0.0, 1.0], [-2.0, 3.5, 0.0, -1.0], [-2.0, -3.5, 1.0, 0.0]];
    let mut rng = Lcg(seed);
    let mut x = Vec::new();
    let mut y = Vec::new();
    for k in 0..per_class * 3 {
        let label = k % 3;
        x.push(centers[label].iter().map(|c| c + 0.7 * rng.normal()).collect());
        y.push(label);
    }
    (x, y)
}

/// A GRID-structured speaker as `(sentence, word index, label)`: 1000
/// sentences whose slots cycle through their word lists, so every word
/// occurs exactly `1000 / slot size` times.
pub fn grid_speaker_labels() -> Vec<(usize, usize, usize)> {
    let sizes = [4, 4, 4, 25, 10, 4];
    let mut out = Vec::new();
    for sentence in 0..1000 {
        let mut offset = 0;
        for (slot, &size) in sizes.iter().enumerate() {
            out.push((sentence, slot, offset + sentence % size));
            offset += size;
        }
    }
    out
}
