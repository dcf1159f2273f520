//! Image carriers and the preprocessing filters that turn a fundus photograph
//! (or an externally produced segmentation) into a binary vessel mask.
//!
//! Intensities are kept as `f64` between filters; quantization to 8 bits only
//! happens when reading or writing files (see [`pnm`]).

pub mod pnm;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RasterError {
    #[error("image dimensions {width}x{height} do not match {len} samples")]
    BadDimensions { width: usize, height: usize, len: usize },
    #[error("image has a single intensity value")]
    ConstantImage,
    #[error("clip limit must be positive, got {0}")]
    BadClipLimit(f64),
    #[error("gamma must be positive, got {0}")]
    BadGamma(f64),
    #[error("tile grid must be at least 1x1")]
    BadTiles,
}

fn check_dims(width: usize, height: usize, len: usize) -> Result<(), RasterError> {
    if width == 0 || height == 0 || width * height != len {
        return Err(RasterError::BadDimensions { width, height, len });
    }
    Ok(())
}

/// 8-bit RGB image, row-major, three bytes per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl ColorImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self, RasterError> {
        if width == 0 || height == 0 || width * height * 3 != data.len() {
            return Err(RasterError::BadDimensions { width, height, len: data.len() });
        }
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }
}

/// Real-valued single channel image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self, RasterError> {
        check_dims(width, height, data.len())?;
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self, RasterError> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    fn with_data(&self, data: Vec<f64>) -> GrayImage {
        GrayImage { width: self.width, height: self.height, data }
    }

    /// Smallest and largest intensity.
    pub fn range(&self) -> (f64, f64) {
        self.data.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

/// Boolean mask; `true` marks vessel pixels.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryImage {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl BinaryImage {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<Self, RasterError> {
        check_dims(width, height, data.len())?;
        Ok(Self { width, height, data })
    }

    pub fn empty(width: usize, height: usize) -> Result<Self, RasterError> {
        Self::new(width, height, vec![false; width * height])
    }

    /// Parse an ASCII drawing where `#` (or `1`) is foreground. Handy for tests.
    pub fn from_ascii(rows: &[&str]) -> Result<Self, RasterError> {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.chars().count());
        let mut data = Vec::with_capacity(width * height);
        for r in rows {
            if r.chars().count() != width {
                return Err(RasterError::BadDimensions { width, height, len: data.len() });
            }
            data.extend(r.chars().map(|c| c == '#' || c == '1'));
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    /// Out-of-bounds coordinates read as background.
    pub fn get_signed(&self, x: i64, y: i64) -> bool {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            return false;
        }
        self.data[y as usize * self.width + x as usize]
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// Foreground pixels in row-major order.
    pub fn foreground(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        self.data.iter().enumerate().filter(|(_, &b)| b).map(move |(i, _)| (i % w, i / w))
    }

    /// Render as a gray image with values {0, 255}.
    pub fn to_gray(&self) -> GrayImage {
        let data = self.data.iter().map(|&b| if b { 255.0 } else { 0.0 }).collect();
        GrayImage { width: self.width, height: self.height, data }
    }

    /// Number of 8-connected foreground components.
    pub fn component_count(&self) -> usize {
        let mut seen = vec![false; self.data.len()];
        let mut count = 0;
        let mut stack = Vec::new();
        for start in 0..self.data.len() {
            if !self.data[start] || seen[start] {
                continue;
            }
            count += 1;
            seen[start] = true;
            stack.push(start);
            while let Some(i) = stack.pop() {
                let (x, y) = ((i % self.width) as i64, (i / self.width) as i64);
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        let (nx, ny) = (x + dx, y + dy);
                        if self.get_signed(nx, ny) {
                            let j = ny as usize * self.width + nx as usize;
                            if !seen[j] {
                                seen[j] = true;
                                stack.push(j);
                            }
                        }
                    }
                }
            }
        }
        count
    }
}

/// ITU-R BT.601 luma weights.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

pub fn to_grayscale(img: &ColorImage) -> GrayImage {
    let data = img
        .data
        .chunks_exact(3)
        .map(|p| LUMA_WEIGHTS[0] * p[0] as f64 + LUMA_WEIGHTS[1] * p[1] as f64 + LUMA_WEIGHTS[2] * p[2] as f64)
        .collect();
    GrayImage { width: img.width, height: img.height, data }
}

/// Z-score normalization with the population variance.
pub fn standardize(img: &GrayImage) -> Result<GrayImage, RasterError> {
    let n = img.data.len() as f64;
    let mean = img.data.iter().sum::<f64>() / n;
    let var = img.data.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if var <= 0.0 {
        return Err(RasterError::ConstantImage);
    }
    let sd = var.sqrt();
    Ok(img.with_data(img.data.iter().map(|v| (v - mean) / sd).collect()))
}

/// Affine map of the intensity range onto `[lo, hi]`. A constant image maps to `lo`.
pub fn rescale(img: &GrayImage, lo: f64, hi: f64) -> GrayImage {
    let (min, max) = img.range();
    let span = max - min;
    let data = img.data.iter().map(|v| if span > 0.0 { lo + (v - min) / span * (hi - lo) } else { lo }).collect();
    img.with_data(data)
}

pub const HIST_BINS: usize = 256;

fn bin_of(v: f64) -> usize {
    if v.is_nan() || v <= 0.0 {
        0
    } else {
        (v.floor() as usize).min(HIST_BINS - 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClaheParams {
    pub clip_limit: f64,
    pub tiles_x: usize,
    pub tiles_y: usize,
}

impl Default for ClaheParams {
    fn default() -> Self {
        Self { clip_limit: 2.0, tiles_x: 8, tiles_y: 8 }
    }
}

/// Mapping for one tile: clipped histogram, excess spread over all bins,
/// then the min-subtracted CDF stretched to [0, 255].
fn tile_lut(hist: &[f64; HIST_BINS], area: f64, clip_limit: f64) -> [f64; HIST_BINS] {
    let mut lut = [0.0; HIST_BINS];
    if hist.iter().filter(|&&c| c > 0.0).count() <= 1 {
        // flat tile: leave intensities as they are
        for (i, v) in lut.iter_mut().enumerate() {
            *v = i as f64;
        }
        return lut;
    }
    let mut h = *hist;
    if clip_limit.is_finite() {
        let clip = (clip_limit * area / HIST_BINS as f64).max(1.0);
        let mut excess = 0.0;
        for b in h.iter_mut() {
            if *b > clip {
                excess += *b - clip;
                *b = clip;
            }
        }
        let share = excess / HIST_BINS as f64;
        for b in h.iter_mut() {
            *b += share;
        }
    }
    let mut cdf = 0.0;
    let mut cdf_min = None;
    for (i, &c) in h.iter().enumerate() {
        cdf += c;
        if cdf_min.is_none() && c > 0.0 {
            cdf_min = Some(cdf);
        }
        lut[i] = cdf;
    }
    let cdf_min = cdf_min.unwrap_or(0.0);
    let denom = cdf - cdf_min;
    for (i, v) in lut.iter_mut().enumerate() {
        *v = if denom > 0.0 {
            ((*v - cdf_min) / denom * 255.0).max(0.0)
        } else {
            // flat tile: leave intensities as they are
            i as f64
        };
    }
    lut
}

/// Contrast-limited adaptive histogram equalization on a [0, 255] image.
///
/// Tile boundaries sit at `⌊i·width/tiles⌋`, so tile sizes differ by at most
/// one pixel; the tile count is capped at the image size. Each pixel blends the four surrounding tile mappings
/// bilinearly; the interpolation grid is clamped at the borders.
/// `clip_limit = f64::INFINITY` disables clipping.
///
/// A tile whose histogram holds a single value keeps it unchanged, so the
/// mapped value is the bin index rather than the original real intensity.
pub fn clahe(img: &GrayImage, params: ClaheParams) -> Result<GrayImage, RasterError> {
    if params.clip_limit.is_nan() || params.clip_limit <= 0.0 {
        return Err(RasterError::BadClipLimit(params.clip_limit));
    }
    if params.tiles_x == 0 || params.tiles_y == 0 {
        return Err(RasterError::BadTiles);
    }
    let (w, h) = (img.width, img.height);
    let tx = params.tiles_x.min(w);
    let ty = params.tiles_y.min(h);
    let xb: Vec<usize> = (0..=tx).map(|i| i * w / tx).collect();
    let yb: Vec<usize> = (0..=ty).map(|j| j * h / ty).collect();

    let mut luts = Vec::with_capacity(tx * ty);
    for j in 0..ty {
        for i in 0..tx {
            let mut hist = [0.0; HIST_BINS];
            for y in yb[j]..yb[j + 1] {
                for x in xb[i]..xb[i + 1] {
                    hist[bin_of(img.get(x, y))] += 1.0;
                }
            }
            let area = ((xb[i + 1] - xb[i]) * (yb[j + 1] - yb[j])) as f64;
            luts.push(tile_lut(&hist, area, params.clip_limit));
        }
    }
    let cx: Vec<f64> = (0..tx).map(|i| (xb[i] + xb[i + 1]) as f64 / 2.0 - 0.5).collect();
    let cy: Vec<f64> = (0..ty).map(|j| (yb[j] + yb[j + 1]) as f64 / 2.0 - 0.5).collect();

    // Locate the pair of tile centres bracketing a coordinate, with weight of the second.
    fn bracket(c: &[f64], p: f64) -> (usize, usize, f64) {
        if p <= c[0] {
            return (0, 0, 0.0);
        }
        let last = c.len() - 1;
        if p >= c[last] {
            return (last, last, 0.0);
        }
        let i = c.partition_point(|&v| v <= p) - 1;
        let f = (p - c[i]) / (c[i + 1] - c[i]);
        (i, i + 1, f)
    }

    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        let (j0, j1, fy) = bracket(&cy, y as f64);
        for x in 0..w {
            let (i0, i1, fx) = bracket(&cx, x as f64);
            let b = bin_of(img.get(x, y));
            let v00 = luts[j0 * tx + i0][b];
            let v10 = luts[j0 * tx + i1][b];
            let v01 = luts[j1 * tx + i0][b];
            let v11 = luts[j1 * tx + i1][b];
            let top = v00 * (1.0 - fx) + v10 * fx;
            let bottom = v01 * (1.0 - fx) + v11 * fx;
            out.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    Ok(img.with_data(out))
}

/// Power-law adjustment. Intensities are mapped to [0, 1] using the image's
/// own min/max, raised to `gamma`, and mapped back to the original range.
pub fn gamma_adjust(img: &GrayImage, gamma: f64) -> Result<GrayImage, RasterError> {
    if !gamma.is_finite() || gamma <= 0.0 {
        return Err(RasterError::BadGamma(gamma));
    }
    let (min, max) = img.range();
    let span = max - min;
    if span <= 0.0 {
        return Ok(img.clone());
    }
    let data = img.data.iter().map(|v| min + span * ((v - min) / span).powf(gamma)).collect();
    Ok(img.with_data(data))
}

/// Otsu threshold over 256 bins of a [0, 255] image.
///
/// Returns the smallest bin `t` in `1..=255` maximizing the between-class
/// variance of the split `bin < t` / `bin >= t`.
pub fn otsu_threshold(img: &GrayImage) -> Result<usize, RasterError> {
    let mut hist = [0u64; HIST_BINS];
    for &v in &img.data {
        hist[bin_of(v)] += 1;
    }
    if hist.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(RasterError::ConstantImage);
    }
    let total = img.data.len() as f64;
    let sum_all: f64 = hist.iter().enumerate().map(|(i, &c)| i as f64 * c as f64).sum();
    let mut best = (f64::NEG_INFINITY, 1);
    let mut w0 = 0.0;
    let mut sum0 = 0.0;
    for t in 1..HIST_BINS {
        w0 += hist[t - 1] as f64;
        sum0 += (t - 1) as f64 * hist[t - 1] as f64;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let m0 = sum0 / w0;
        let m1 = (sum_all - sum0) / w1;
        let between = w0 * w1 * (m0 - m1).powi(2);
        if between > best.0 {
            best = (between, t);
        }
    }
    Ok(best.1)
}

/// Foreground is every pixel whose bin reaches the Otsu threshold.
pub fn binarize(img: &GrayImage) -> Result<BinaryImage, RasterError> {
    let t = otsu_threshold(img)?;
    Ok(threshold(img, t as f64))
}

/// Fixed threshold: `value >= t` is vessel.
pub fn threshold(img: &GrayImage, t: f64) -> BinaryImage {
    let data = img.data.iter().map(|&v| bin_of(v) as f64 >= t).collect();
    BinaryImage { width: img.width, height: img.height, data }
}

/// The four listed filters in order: grayscale, standardize, CLAHE, gamma.
/// The standardized image is stretched onto [0, 255] before CLAHE.
pub fn preprocess(img: &ColorImage, clahe_params: ClaheParams, gamma: f64) -> Result<GrayImage, RasterError> {
    let gray = to_grayscale(img);
    let z = standardize(&gray)?;
    let stretched = rescale(&z, 0.0, 255.0);
    let eq = clahe(&stretched, clahe_params)?;
    gamma_adjust(&eq, gamma)
}
