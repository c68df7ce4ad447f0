//! One-vs-rest linear SVM trained with a Pegasos-style sub-gradient solver.
//!
//! Each binary problem minimizes
//!
//! ```text
//! lambda/2 * (|w|^2 + b^2) + 1/n * sum_i max(0, 1 - y_i (w.x_i + b))
//! ```
//!
//! with `lambda = 1 / (n C)`. The bias is treated as the weight of a constant
//! unit feature, so it is regularized along with `w`. Steps use the
//! `1 / (lambda t)` schedule over a seeded per-epoch shuffle; the returned
//! model is the running average of the iterates after the first epoch.

use rayon::prelude::*;

use crate::archive::{Tensor, TensorSet};
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct SvmTrainConfig {
    pub c: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Stop once the averaged model's objective changes by less than this
    /// (relative to `max(1, objective)`) between epochs.
    pub tolerance: f64,
}

impl Default for SvmTrainConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            epochs: 50,
            seed: 0,
            tolerance: 1e-5,
        }
    }
}

impl SvmTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) || !self.c.is_finite() {
            return Err(Error::InvalidConfig(format!("SVM C must be positive, got {}", self.c)));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("SVM needs at least one epoch".into()));
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::InvalidConfig("SVM tolerance must be non-negative".into()));
        }
        Ok(())
    }
}

/// A single `w.x + b` decision function.
#[derive(Clone, Debug, PartialEq)]
pub struct BinarySvm {
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Objective of the averaged model after each completed epoch.
    pub objective_history: Vec<f64>,
}

impl BinarySvm {
    pub fn decision(&self, x: &[f64]) -> f64 {
        dot(&self.weights, x) + self.bias
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Regularized hinge objective of `(w, b)` on `±1` targets.
pub fn hinge_objective<R: AsRef<[f64]>>(weights: &[f64], bias: f64, x: &[R], targets: &[f64], lambda: f64) -> f64 {
    let hinge: f64 = x
        .iter()
        .zip(targets)
        .map(|(xi, &yi)| (1.0 - yi * (dot(weights, xi.as_ref()) + bias)).max(0.0))
        .sum();
    0.5 * lambda * (dot(weights, weights) + bias * bias) + hinge / x.len() as f64
}

/// Mean hinge loss without the regularizer.
pub fn hinge_loss<R: AsRef<[f64]>>(model: &BinarySvm, x: &[R], targets: &[f64]) -> f64 {
    x.iter()
        .zip(targets)
        .map(|(xi, &yi)| (1.0 - yi * model.decision(xi.as_ref())).max(0.0))
        .sum::<f64>()
        / x.len() as f64
}

/// Trains one binary problem with targets in `{-1, +1}`.
pub fn train_binary<R: AsRef<[f64]>>(x: &[R], targets: &[f64], cfg: &SvmTrainConfig, seed: u64) -> Result<BinarySvm> {
    cfg.validate()?;
    let n = x.len();
    if n == 0 || targets.len() != n {
        return Err(Error::InvalidInput(format!("{n} rows but {} targets", targets.len())));
    }
    let dim = x[0].as_ref().len();
    let lambda = 1.0 / (n as f64 * cfg.c);
    let mut rng = Rng::new(seed);
    let mut order: Vec<usize> = (0..n).collect();

    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let mut avg_w = vec![0.0; dim];
    let mut avg_b = 0.0;
    let mut averaged = 0usize;
    let mut history = Vec::new();
    let mut t = 0usize;

    for epoch in 0..cfg.epochs {
        rng.shuffle(&mut order);
        for &i in &order {
            t += 1;
            let xi = x[i].as_ref();
            let yi = targets[i];
            let eta = 1.0 / (lambda * t as f64);
            let violated = yi * (dot(&w, xi) + b) < 1.0;
            let shrink = 1.0 - eta * lambda;
            for wj in w.iter_mut() {
                *wj *= shrink;
            }
            b *= shrink;
            if violated {
                for (wj, xj) in w.iter_mut().zip(xi) {
                    *wj += eta * yi * xj;
                }
                b += eta * yi;
            }
            if epoch > 0 || cfg.epochs == 1 {
                averaged += 1;
                let k = 1.0 / averaged as f64;
                for (a, wj) in avg_w.iter_mut().zip(&w) {
                    *a += (wj - *a) * k;
                }
                avg_b += (b - avg_b) * k;
            }
        }
        if averaged == 0 {
            continue;
        }
        let objective = hinge_objective(&avg_w, avg_b, x, targets, lambda);
        let converged = history
            .last()
            .is_some_and(|&prev: &f64| (prev - objective).abs() <= cfg.tolerance * objective.abs().max(1.0));
        history.push(objective);
        if converged {
            break;
        }
    }

    Ok(BinarySvm {
        weights: avg_w,
        bias: avg_b,
        objective_history: history,
    })
}

/// One-vs-rest multiclass linear SVM.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearSvmModel {
    pub class_count: usize,
    pub dim: usize,
    /// `class_count x dim`, row-major.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    pub c: f64,
}

/// Trains one binary classifier per class. Class `k` uses the seed
/// `cfg.seed + k`, so the problems are independent and run in parallel.
pub fn train_linear_svm<R: AsRef<[f64]> + Sync>(
    x: &[R],
    labels: &[usize],
    class_count: usize,
    cfg: &SvmTrainConfig,
) -> Result<LinearSvmModel> {
    cfg.validate()?;
    if x.len() < 2 || labels.len() != x.len() {
        return Err(Error::InvalidInput(format!(
            "need at least 2 rows with one label each, got {} rows and {} labels",
            x.len(),
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
        return Err(Error::InvalidLabels(format!(
            "label {bad} out of range for {class_count} classes"
        )));
    }
    let first = labels[0];
    if labels.iter().all(|&l| l == first) {
        return Err(Error::InvalidLabels("training data contains a single class".into()));
    }
    let dim = x[0].as_ref().len();
    if x.iter().any(|r| r.as_ref().len() != dim) {
        return Err(Error::InvalidInput("rows differ in dimension".into()));
    }

    let machines: Vec<BinarySvm> = (0..class_count)
        .into_par_iter()
        .map(|k| {
            let targets: Vec<f64> = labels.iter().map(|&l| if l == k { 1.0 } else { -1.0 }).collect();
            train_binary(x, &targets, cfg, cfg.seed.wrapping_add(k as u64))
        })
        .collect::<Result<_>>()?;

    let mut weights = Vec::with_capacity(class_count * dim);
    let mut biases = Vec::with_capacity(class_count);
    for m in machines {
        weights.extend(m.weights);
        biases.push(m.bias);
    }
    Ok(LinearSvmModel {
        class_count,
        dim,
        weights,
        biases,
        c: cfg.c,
    })
}

impl LinearSvmModel {
    pub fn zeros(class_count: usize, dim: usize) -> Self {
        Self {
            class_count,
            dim,
            weights: vec![0.0; class_count * dim],
            biases: vec![0.0; class_count],
            c: 1.0,
        }
    }

    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(Error::InvalidInput(format!(
                "feature has {} values, model expects {}",
                x.len(),
                self.dim
            )));
        }
        Ok(self
            .weights
            .chunks_exact(self.dim.max(1))
            .take(self.class_count)
            .zip(&self.biases)
            .map(|(w, b)| dot(w, x) + b)
            .collect())
    }

    /// Highest-scoring class (lowest index on ties) and all class scores.
    pub fn predict(&self, x: &[f64]) -> Result<(usize, Vec<f64>)> {
        let scores = self.scores(x)?;
        Ok((argmax(&scores), scores))
    }

    pub fn write_sections(&self, set: &mut TensorSet) {
        let f = |v: &[f64]| v.iter().map(|&x| x as f32).collect::<Vec<_>>();
        set.insert(
            "svm.weights",
            Tensor::new(vec![self.class_count, self.dim], f(&self.weights)).expect("consistent shape"),
        );
        set.insert("svm.biases", Tensor::vector(f(&self.biases)));
        set.set_meta("svm.c", self.c);
        set.set_meta("svm.dim", self.dim);
    }

    pub fn read_sections(set: &TensorSet) -> Result<Self> {
        let w = set.require("svm.weights")?;
        let biases = set.require("svm.biases")?.to_f64();
        let [class_count, dim] = *w.dims() else {
            return Err(Error::Format(format!("SVM weights have rank {}", w.dims().len())));
        };
        if biases.len() != class_count || set.meta_parse::<usize>("svm.dim")? != dim {
            return Err(Error::Format("SVM sections disagree on shape".into()));
        }
        Ok(Self {
            class_count,
            dim,
            weights: w.to_f64(),
            biases,
            c: set.meta_parse("svm.c")?,
        })
    }
}

pub(crate) fn argmax<T: PartialOrd + Copy>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}
