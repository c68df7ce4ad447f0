use nalgebra::{DMatrix, SymmetricEigen};

use crate::archive::{Tensor, TensorSet};
use crate::error::{Error, Result};

/// Principal components of a set of frames.
#[derive(Clone, Debug, PartialEq)]
pub struct PcaModel {
    /// Column means of the training data.
    pub mean: Vec<f64>,
    /// `k x dim` row-major; rows orthonormal, by decreasing variance.
    pub components: Vec<f64>,
    /// Sample variance along each component.
    pub variances: Vec<f64>,
    pub dim: usize,
}

/// Fits a `k`-component PCA by eigendecomposition of the sample covariance.
///
/// Each component's sign is fixed so that its largest-magnitude entry is
/// positive (the first such entry on ties).
pub fn fit_pca<R: AsRef<[f64]>>(rows: &[R], k: usize) -> Result<PcaModel> {
    let n = rows.len();
    let dim = rows.first().map_or(0, |r| r.as_ref().len());
    let max = n.min(dim);
    if k == 0 || k > max {
        return Err(Error::InvalidK { k, max });
    }
    if let Some(bad) = rows.iter().position(|r| r.as_ref().len() != dim) {
        return Err(Error::InvalidInput(format!(
            "row {bad} has {} values, expected {dim}",
            rows[bad].as_ref().len()
        )));
    }

    let mut mean = vec![0.0; dim];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r.as_ref()) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }

    let centered = DMatrix::from_fn(n, dim, |i, j| rows[i].as_ref()[j] - mean[j]);
    let denom = if n > 1 { (n - 1) as f64 } else { 1.0 };
    let mut cov = centered.transpose() * &centered;
    cov /= denom;
    // remove rounding asymmetry before the symmetric solver
    for i in 0..dim {
        for j in 0..i {
            let avg = 0.5 * (cov[(i, j)] + cov[(j, i)]);
            cov[(i, j)] = avg;
            cov[(j, i)] = avg;
        }
    }

    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });

    let mut components = Vec::with_capacity(k * dim);
    let mut variances = Vec::with_capacity(k);
    for &idx in order.iter().take(k) {
        let col = eig.eigenvectors.column(idx);
        let mut pivot = 0;
        for j in 1..dim {
            if col[j].abs() > col[pivot].abs() {
                pivot = j;
            }
        }
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        components.extend(col.iter().map(|v| v * sign));
        variances.push(eig.eigenvalues[idx].max(0.0));
    }

    Ok(PcaModel {
        mean,
        components,
        variances,
        dim,
    })
}

impl PcaModel {
    pub fn k(&self) -> usize {
        self.variances.len()
    }

    pub fn component(&self, i: usize) -> &[f64] {
        &self.components[i * self.dim..(i + 1) * self.dim]
    }

    /// Eigenlip coefficients: `components * (frame - mean)`.
    pub fn project(&self, frame: &[f64]) -> Result<Vec<f64>> {
        if frame.len() != self.dim {
            return Err(Error::InvalidInput(format!(
                "frame has {} values, model expects {}",
                frame.len(),
                self.dim
            )));
        }
        let centered: Vec<f64> = frame.iter().zip(&self.mean).map(|(x, m)| x - m).collect();
        Ok(self
            .components
            .chunks_exact(self.dim)
            .map(|row| row.iter().zip(&centered).map(|(a, b)| a * b).sum())
            .collect())
    }

    pub fn project_f32(&self, frame: &[f32]) -> Result<Vec<f64>> {
        let frame: Vec<f64> = frame.iter().map(|&v| f64::from(v)).collect();
        self.project(&frame)
    }

    /// Maps coefficients back to frame space.
    pub fn reconstruct(&self, coefficients: &[f64]) -> Result<Vec<f64>> {
        if coefficients.len() != self.k() {
            return Err(Error::InvalidInput(format!(
                "{} coefficients for a {}-component model",
                coefficients.len(),
                self.k()
            )));
        }
        let mut out = self.mean.clone();
        for (c, row) in coefficients.iter().zip(self.components.chunks_exact(self.dim)) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += c * v;
            }
        }
        Ok(out)
    }

    pub fn to_tensor_set(&self) -> TensorSet {
        let mut set = TensorSet::new();
        self.write_sections(&mut set, "pca.");
        set
    }

    pub(crate) fn write_sections(&self, set: &mut TensorSet, prefix: &str) {
        let f = |v: &[f64]| v.iter().map(|&x| x as f32).collect::<Vec<_>>();
        set.insert(format!("{prefix}mean"), Tensor::vector(f(&self.mean)));
        set.insert(
            format!("{prefix}components"),
            Tensor::new(vec![self.k(), self.dim], f(&self.components)).expect("consistent shape"),
        );
        set.insert(format!("{prefix}variances"), Tensor::vector(f(&self.variances)));
    }

    pub fn from_tensor_set(set: &TensorSet) -> Result<Self> {
        Self::read_sections(set, "pca.")
    }

    pub(crate) fn read_sections(set: &TensorSet, prefix: &str) -> Result<Self> {
        let mean = set.require(&format!("{prefix}mean"))?.to_f64();
        let comps = set.require(&format!("{prefix}components"))?;
        let variances = set.require(&format!("{prefix}variances"))?.to_f64();
        let dim = mean.len();
        if comps.dims() != [variances.len(), dim] {
            return Err(Error::Format(format!(
                "PCA components have shape {:?}, expected [{}, {dim}]",
                comps.dims(),
                variances.len()
            )));
        }
        Ok(Self {
            mean,
            components: comps.to_f64(),
            variances,
            dim,
        })
    }
}
