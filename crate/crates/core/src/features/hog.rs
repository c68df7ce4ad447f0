use crate::error::{Error, Result};

/// Histogram-of-oriented-gradients settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HogConfig {
    /// Cell side in pixels.
    pub cell_size: usize,
    /// Unsigned orientation bins over `[0, 180)` degrees.
    pub bins: usize,
    /// Block side in cells; blocks overlap with a stride of one cell.
    pub block_size: usize,
    /// L2-Hys clipping threshold.
    pub clip: f64,
}

impl Default for HogConfig {
    fn default() -> Self {
        Self {
            cell_size: 8,
            bins: 9,
            block_size: 2,
            clip: 0.2,
        }
    }
}

const NORM_EPS: f64 = 1e-3;

impl HogConfig {
    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        if self.bins < 2 {
            return Err(Error::InvalidConfig(format!(
                "HOG needs at least 2 bins, got {}",
                self.bins
            )));
        }
        if self.cell_size == 0 || !width.is_multiple_of(self.cell_size) || !height.is_multiple_of(self.cell_size) {
            return Err(Error::InvalidConfig(format!(
                "HOG cell size {} does not divide {width}x{height}",
                self.cell_size
            )));
        }
        let (cx, cy) = (width / self.cell_size, height / self.cell_size);
        if self.block_size == 0 || self.block_size > cx || self.block_size > cy {
            return Err(Error::InvalidConfig(format!(
                "HOG block of {} cells does not fit a {cx}x{cy} cell grid",
                self.block_size
            )));
        }
        if !(self.clip > 0.0) {
            return Err(Error::InvalidConfig("HOG clip threshold must be positive".into()));
        }
        Ok(())
    }

    /// Descriptor length for an image of the given size.
    pub fn descriptor_len(&self, width: usize, height: usize) -> usize {
        let (cx, cy) = (width / self.cell_size, height / self.cell_size);
        let (bx, by) = (cx + 1 - self.block_size, cy + 1 - self.block_size);
        bx * by * self.block_size * self.block_size * self.bins
    }
}

/// Dalal-Triggs HOG of a greyscale image.
///
/// Central-difference gradients with replicated borders; each pixel votes its
/// gradient magnitude into the two nearest orientation bins (bin `b` centered
/// at `b * 180 / bins` degrees) of its own cell; overlapping blocks are
/// L2-Hys normalized and concatenated row-major.
pub fn compute_hog(pixels: &[f32], width: usize, height: usize, cfg: &HogConfig) -> Result<Vec<f64>> {
    if pixels.len() != width * height {
        return Err(Error::InvalidInput(format!(
            "{width}x{height} image needs {} pixels, got {}",
            width * height,
            pixels.len()
        )));
    }
    cfg.validate(width, height)?;

    let cells_x = width / cfg.cell_size;
    let cells_y = height / cfg.cell_size;
    let bins = cfg.bins;
    let mut hist = vec![0.0f64; cells_x * cells_y * bins];
    let at = |x: usize, y: usize| f64::from(pixels[y * width + x]);
    let bin_width = 180.0 / bins as f64;

    for y in 0..height {
        let up = y.saturating_sub(1);
        let down = (y + 1).min(height - 1);
        for x in 0..width {
            let left = x.saturating_sub(1);
            let right = (x + 1).min(width - 1);
            let gx = at(right, y) - at(left, y);
            let gy = at(x, down) - at(x, up);
            let mag = gx.hypot(gy);
            if mag == 0.0 {
                continue;
            }
            let mut angle = gy.atan2(gx).to_degrees().rem_euclid(180.0);
            if angle >= 180.0 {
                angle = 0.0;
            }
            let pos = angle / bin_width;
            let lower = pos.floor();
            let frac = pos - lower;
            let b0 = lower as usize % bins;
            let b1 = (b0 + 1) % bins;
            let cell = (y / cfg.cell_size) * cells_x + x / cfg.cell_size;
            hist[cell * bins + b0] += mag * (1.0 - frac);
            hist[cell * bins + b1] += mag * frac;
        }
    }

    let block = cfg.block_size;
    let mut out = Vec::with_capacity(cfg.descriptor_len(width, height));
    let mut v = Vec::with_capacity(block * block * bins);
    for by in 0..=cells_y - block {
        for bx in 0..=cells_x - block {
            v.clear();
            for cy in by..by + block {
                for cx in bx..bx + block {
                    let c = cy * cells_x + cx;
                    v.extend_from_slice(&hist[c * bins..(c + 1) * bins]);
                }
            }
            l2_hys(&mut v, cfg.clip);
            out.extend_from_slice(&v);
        }
    }
    Ok(out)
}

fn l2_hys(v: &mut [f64], clip: f64) {
    let normalize = |v: &mut [f64]| {
        let norm = (v.iter().map(|x| x * x).sum::<f64>() + NORM_EPS * NORM_EPS).sqrt();
        for x in v.iter_mut() {
            *x /= norm;
        }
    };
    normalize(v);
    for x in v.iter_mut() {
        *x = x.min(clip);
    }
    normalize(v);
}
