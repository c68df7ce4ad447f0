//! Mouth-region extraction from face crops.
//!
//! The pipeline per frame: inflate the detected face box, crop and resize it
//! to a fixed width, locate the mouth as the centroid of the strongest
//! Gaussian-weighted Lab `a*` responses, cut a square patch around it and
//! stretch its contrast to `[0, 1]`. Patches of a training partition are then
//! standardized to zero mean and unit variance.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Side length of a mouth patch in pixels.
pub const PATCH_SIDE: usize = 40;
/// Number of values in a mouth patch.
pub const PATCH_LEN: usize = PATCH_SIDE * PATCH_SIDE;

/// Row-major image with interleaved channels, values nominally in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub pixels: Vec<f32>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, pixels: Vec<f32>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidInput(format!(
                "images have 1 or 3 channels, got {channels}"
            )));
        }
        if pixels.len() != width * height * channels {
            return Err(Error::InvalidInput(format!(
                "{width}x{height}x{channels} image needs {} values, got {}",
                width * height * channels,
                pixels.len()
            )));
        }
        if pixels.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("image contains non-finite values".into()));
        }
        Ok(Self {
            width,
            height,
            channels,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: [f32; 3]) -> Self {
        let pixels = (0..width * height).flat_map(|_| value).collect();
        Self {
            width,
            height,
            channels: 3,
            pixels,
        }
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[f32] {
        let at = (y * self.width + x) * self.channels;
        &self.pixels[at..at + self.channels]
    }

    #[inline]
    pub fn pixel_mut(&mut self, x: usize, y: usize) -> &mut [f32] {
        let at = (y * self.width + x) * self.channels;
        &mut self.pixels[at..at + self.channels]
    }

    fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Image {
        let mut pixels = Vec::with_capacity(w * h * self.channels);
        for y in y0..y0 + h {
            let start = (y * self.width + x0) * self.channels;
            pixels.extend_from_slice(&self.pixels[start..start + w * self.channels]);
        }
        Image {
            width: w,
            height: h,
            channels: self.channels,
            pixels,
        }
    }

    /// Bilinear resampling with pixel-center alignment and clamped borders.
    pub fn resize_bilinear(&self, width: usize, height: usize) -> Image {
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        let ch = self.channels;
        let mut out = vec![0.0f32; width * height * ch];
        for y in 0..height {
            let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (self.height - 1) as f64);
            let y0 = fy.floor() as usize;
            let y1 = (y0 + 1).min(self.height - 1);
            let ty = fy - y0 as f64;
            for x in 0..width {
                let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (self.width - 1) as f64);
                let x0 = fx.floor() as usize;
                let x1 = (x0 + 1).min(self.width - 1);
                let tx = fx - x0 as f64;
                for c in 0..ch {
                    let p = |xx: usize, yy: usize| f64::from(self.pixels[(yy * self.width + xx) * ch + c]);
                    let top = p(x0, y0) * (1.0 - tx) + p(x1, y0) * tx;
                    let bottom = p(x0, y1) * (1.0 - tx) + p(x1, y1) * tx;
                    out[(y * width + x) * ch + c] = (top * (1.0 - ty) + bottom * ty) as f32;
                }
            }
        }
        Image {
            width,
            height,
            channels: ch,
            pixels: out,
        }
    }
}

/// Single-channel `f64` matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::InvalidInput(format!(
                "{width}x{height} plane needs {} values, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    /// Extracts channel `c` of an image.
    pub fn channel(img: &Image, c: usize) -> Plane {
        let data = img
            .pixels
            .iter()
            .skip(c)
            .step_by(img.channels)
            .map(|&v| f64::from(v))
            .collect();
        Plane {
            width: img.width,
            height: img.height,
            data,
        }
    }
}

/// Face bounding box in frame pixel coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FaceBox {
    pub x: i64,
    pub y: i64,
    pub w: i64,
    pub h: i64,
}

impl FaceBox {
    pub fn validate(&self, frame_width: usize, frame_height: usize) -> Result<()> {
        if self.w <= 0 || self.h <= 0 {
            return Err(Error::InvalidInput(format!("face box {self:?} has non-positive size")));
        }
        let (fw, fh) = (frame_width as i64, frame_height as i64);
        if self.x >= fw || self.y >= fh || self.x + self.w <= 0 || self.y + self.h <= 0 {
            return Err(Error::InvalidInput(format!(
                "face box {self:?} lies outside the {frame_width}x{frame_height} frame"
            )));
        }
        Ok(())
    }
}

/// Parses a face-box sidecar: one `<frameIndex> <x> <y> <w> <h>` line per frame.
///
/// Blank lines and lines starting with `#` are ignored.
pub fn parse_face_boxes(text: &str) -> Result<BTreeMap<usize, FaceBox>> {
    let mut boxes = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 5 integers, found {} fields", fields.len()),
            });
        }
        let bad = |f: &str| Error::Parse {
            line: line_no,
            message: format!("'{f}' is not an integer"),
        };
        let frame: usize = fields[0].parse().map_err(|_| bad(fields[0]))?;
        let mut v = [0i64; 4];
        for (slot, f) in v.iter_mut().zip(&fields[1..]) {
            *slot = f.parse().map_err(|_| bad(f))?;
        }
        let face = FaceBox {
            x: v[0],
            y: v[1],
            w: v[2],
            h: v[3],
        };
        if face.w <= 0 || face.h <= 0 {
            return Err(Error::Parse {
                line: line_no,
                message: "face box width and height must be positive".into(),
            });
        }
        boxes.insert(frame, face);
    }
    Ok(boxes)
}

/// 40x40 contrast-normalized greyscale mouth patch.
#[derive(Clone, Debug, PartialEq)]
pub struct MouthPatch {
    pub pixels: Vec<f32>,
    pub source_frame: usize,
}

impl MouthPatch {
    pub fn new(pixels: Vec<f32>, source_frame: usize) -> Result<Self> {
        if pixels.len() != PATCH_LEN {
            return Err(Error::InvalidInput(format!(
                "mouth patches have {PATCH_LEN} values, got {}",
                pixels.len()
            )));
        }
        Ok(Self { pixels, source_frame })
    }
}

impl AsRef<[f32]> for MouthPatch {
    fn as_ref(&self) -> &[f32] {
        &self.pixels
    }
}

// D65 reference white, Y normalized to 1.
const WHITE_D65: [f64; 3] = [0.95047, 1.0, 1.08883];

fn srgb_to_linear(c: f64) -> f64 {
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

fn lab_f(t: f64) -> f64 {
    const DELTA: f64 = 6.0 / 29.0;
    if t > DELTA * DELTA * DELTA {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

/// CIE L*a*b* of one sRGB pixel (components in `[0, 1]`), D65 white.
pub fn srgb_pixel_to_lab(rgb: [f64; 3]) -> [f64; 3] {
    let [r, g, b] = rgb.map(srgb_to_linear);
    let x = 0.4124564 * r + 0.3575761 * g + 0.1804375 * b;
    let y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
    let z = 0.0193339 * r + 0.1191920 * g + 0.9503041 * b;
    let fx = lab_f(x / WHITE_D65[0]);
    let fy = lab_f(y / WHITE_D65[1]);
    let fz = lab_f(z / WHITE_D65[2]);
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

/// Converts a 3-channel sRGB image to L*a*b* (L in `[0, 100]`, a/b signed).
pub fn rgb_to_lab(img: &Image) -> Result<Image> {
    if img.channels != 3 {
        return Err(Error::InvalidInput(format!(
            "Lab conversion needs a 3-channel image, got {} channel(s)",
            img.channels
        )));
    }
    let pixels = img
        .pixels
        .chunks_exact(3)
        .flat_map(|p| srgb_pixel_to_lab([f64::from(p[0]), f64::from(p[1]), f64::from(p[2])]).map(|v| v as f32))
        .collect();
    Ok(Image {
        width: img.width,
        height: img.height,
        channels: 3,
        pixels,
    })
}

/// Gaussian weights peaking at the middle column, 30% down from the top.
///
/// The center is at continuous pixel-index coordinates
/// `((w - 1) / 2, 0.3 * (h - 1))`, so the map is mirror-symmetric about the
/// middle column for any width.
pub fn gaussian_weight_map(width: usize, height: usize, sigma: f64) -> Result<Plane> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidInput("weight map dimensions must be positive".into()));
    }
    if !(sigma > 0.0) {
        return Err(Error::InvalidInput(format!("sigma must be positive, got {sigma}")));
    }
    let cx = (width as f64 - 1.0) / 2.0;
    let cy = 0.3 * (height as f64 - 1.0);
    let denom = 2.0 * sigma * sigma;
    let mut data = Vec::with_capacity(width * height);
    for r in 0..height {
        let dy = r as f64 - cy;
        for c in 0..width {
            let dx = c as f64 - cx;
            data.push((-(dx * dx + dy * dy) / denom).exp());
        }
    }
    Ok(Plane { width, height, data })
}

fn unit_range<I: Iterator<Item = f64> + Clone>(values: I) -> Option<(f64, f64)> {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    (hi > lo).then_some((lo, hi - lo))
}

/// Affine remap to `[0, 1]`; a constant input maps to all zeros.
pub fn rescale_unit(m: &Plane) -> Plane {
    let data = match unit_range(m.data.iter().copied()) {
        Some((lo, span)) => m.data.iter().map(|&v| (v - lo) / span).collect(),
        None => vec![0.0; m.data.len()],
    };
    Plane {
        width: m.width,
        height: m.height,
        data,
    }
}

/// In-place `f32` variant of [`rescale_unit`].
pub fn rescale_unit_in_place(values: &mut [f32]) {
    match unit_range(values.iter().map(|&v| f64::from(v))) {
        Some((lo, span)) => {
            for v in values.iter_mut() {
                *v = ((f64::from(*v) - lo) / span) as f32;
            }
        }
        None => values.fill(0.0),
    }
}

/// A-channel range below which a crop is treated as colourless.
pub const MIN_A_SPREAD: f64 = 1e-3;

/// Mask threshold applied after rescaling the weighted `a*` channel.
pub const MOUTH_THRESHOLD: f64 = 0.9;

/// Unweighted centroid `(x, y)` of pixels whose rescaled, weighted value
/// exceeds [`MOUTH_THRESHOLD`].
pub fn locate_mouth_center(a_channel: &Plane, weights: &Plane) -> Result<(f64, f64)> {
    if a_channel.width != weights.width || a_channel.height != weights.height {
        return Err(Error::InvalidInput(format!(
            "a-channel is {}x{} but weights are {}x{}",
            a_channel.width, a_channel.height, weights.width, weights.height
        )));
    }
    let product = Plane {
        width: a_channel.width,
        height: a_channel.height,
        data: a_channel.data.iter().zip(&weights.data).map(|(a, w)| a * w).collect(),
    };
    let m = rescale_unit(&product);
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
    for r in 0..m.height {
        for c in 0..m.width {
            if m.at(r, c) > MOUTH_THRESHOLD {
                sx += c as f64;
                sy += r as f64;
                n += 1;
            }
        }
    }
    if n == 0 {
        return Err(Error::NoMouthFound {
            threshold: MOUTH_THRESHOLD,
        });
    }
    Ok((sx / n as f64, sy / n as f64))
}

/// Rec.601 luma. Written so that `r == g == b` returns `r` exactly.
#[inline]
pub fn luma(r: f32, g: f32, b: f32) -> f32 {
    r + 0.587 * (g - r) + 0.114 * (b - r)
}

/// Mouth-patch extraction settings.
#[derive(Clone, Debug, PartialEq)]
pub struct MouthExtractor {
    /// Face box growth factor about its center.
    pub inflate: f64,
    /// Width the face crop is resized to before localization.
    pub crop_width: usize,
    /// Standard deviation of the localization prior, in resized pixels.
    pub sigma: f64,
}

impl Default for MouthExtractor {
    fn default() -> Self {
        Self {
            inflate: 1.5,
            crop_width: 128,
            sigma: 500.0,
        }
    }
}

/// A patch together with where it was cut from.
#[derive(Clone, Debug, PartialEq)]
pub struct ExtractedPatch {
    pub patch: MouthPatch,
    /// Mouth center in resized-crop coordinates.
    pub center: (f64, f64),
    /// Top-left corner of the patch window in resized-crop coordinates.
    pub window_origin: (usize, usize),
    /// Size of the resized crop.
    pub crop_size: (usize, usize),
    /// Set when localization failed and the fixed lower-face window was used.
    pub fallback: bool,
}

impl MouthExtractor {
    pub fn extract(&self, frame: &Image, face: FaceBox, frame_index: usize) -> Result<ExtractedPatch> {
        face.validate(frame.width, frame.height)?;

        let cx = face.x as f64 + face.w as f64 / 2.0;
        let cy = face.y as f64 + face.h as f64 / 2.0;
        let half_w = face.w as f64 * self.inflate / 2.0;
        let half_h = face.h as f64 * self.inflate / 2.0;
        let x0 = (cx - half_w).floor().max(0.0) as usize;
        let y0 = (cy - half_h).floor().max(0.0) as usize;
        let x1 = ((cx + half_w).ceil() as usize).min(frame.width);
        let y1 = ((cy + half_h).ceil() as usize).min(frame.height);
        let crop = frame.crop(x0, y0, x1 - x0, y1 - y0);

        let width = self.crop_width;
        let height = ((crop.height as f64 * width as f64 / crop.width as f64).round() as usize).max(1);
        let resized = crop.resize_bilinear(width, height);

        let located = if resized.channels == 3 {
            let lab = rgb_to_lab(&resized)?;
            let a = Plane::channel(&lab, 1);
            let (lo, hi) = a.data.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
            if hi - lo < MIN_A_SPREAD {
                // rounding noise on an achromatic crop, not a colour signal
                Err(Error::NoMouthFound {
                    threshold: MOUTH_THRESHOLD,
                })
            } else {
                let weights = gaussian_weight_map(width, height, self.sigma)?;
                locate_mouth_center(&a, &weights)
            }
        } else {
            Err(Error::NoMouthFound {
                threshold: MOUTH_THRESHOLD,
            })
        };
        let (center, fallback) = match located {
            Ok(c) => (c, false),
            Err(Error::NoMouthFound { .. }) => {
                log::warn!("frame {frame_index}: mouth not found, using lower-face window");
                ((width as f64 / 2.0, 0.7 * height as f64), true)
            }
            Err(e) => return Err(e),
        };

        let half = (PATCH_SIDE as f64 - 1.0) / 2.0;
        let place = |c: f64, extent: usize| -> usize {
            let max_origin = extent.saturating_sub(PATCH_SIDE) as f64;
            (c - half).round().clamp(0.0, max_origin) as usize
        };
        let ox = place(center.0, width);
        let oy = place(center.1, height);

        let mut pixels = Vec::with_capacity(PATCH_LEN);
        for py in 0..PATCH_SIDE {
            let y = (oy + py).min(height - 1);
            for px in 0..PATCH_SIDE {
                let x = (ox + px).min(width - 1);
                let p = resized.pixel(x, y);
                pixels.push(if p.len() == 3 { luma(p[0], p[1], p[2]) } else { p[0] });
            }
        }
        rescale_unit_in_place(&mut pixels);

        Ok(ExtractedPatch {
            patch: MouthPatch {
                pixels,
                source_frame: frame_index,
            },
            center,
            window_origin: (ox, oy),
            crop_size: (width, height),
            fallback,
        })
    }
}

/// Extracts a mouth patch with the default settings.
pub fn extract_mouth_patch(frame: &Image, face: FaceBox, frame_index: usize) -> Result<ExtractedPatch> {
    MouthExtractor::default().extract(frame, face, frame_index)
}

/// Global pixel mean and standard deviation of a patch collection.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StandardizationStats {
    pub mean: f64,
    pub std_dev: f64,
}

impl StandardizationStats {
    /// Population moments over every pixel, accumulated in input order.
    pub fn fit<'a, I>(patches: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [f32]>,
    {
        let mut n = 0usize;
        let mut sum = 0.0f64;
        let mut sum_sq = 0.0f64;
        let mut chunks = Vec::new();
        for p in patches {
            for &v in p {
                sum += f64::from(v);
                n += 1;
            }
            chunks.push(p);
        }
        if n == 0 {
            return Err(Error::DegenerateData("no pixels to standardize".into()));
        }
        let mean = sum / n as f64;
        for p in chunks {
            for &v in p {
                let d = f64::from(v) - mean;
                sum_sq += d * d;
            }
        }
        let std_dev = (sum_sq / n as f64).sqrt();
        let stats = Self { mean, std_dev };
        stats.check()?;
        Ok(stats)
    }

    fn check(&self) -> Result<()> {
        if !(self.std_dev > 0.0) || !self.std_dev.is_finite() {
            return Err(Error::DegenerateData(format!(
                "standard deviation {} is not positive",
                self.std_dev
            )));
        }
        Ok(())
    }

    pub fn apply(&self, values: &mut [f32]) -> Result<()> {
        self.check()?;
        for v in values {
            *v = ((f64::from(*v) - self.mean) / self.std_dev) as f32;
        }
        Ok(())
    }
}

/// Returns standardized copies of `patches`.
pub fn standardize(patches: &[MouthPatch], stats: &StandardizationStats) -> Result<Vec<MouthPatch>> {
    patches
        .iter()
        .map(|p| {
            let mut out = p.clone();
            stats.apply(&mut out.pixels)?;
            Ok(out)
        })
        .collect()
}
