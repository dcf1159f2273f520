//! Synthetic vessel masks for tests and self-checks.

use std::f64::consts::PI;

use crate::raster::BinaryImage;

/// Set every pixel whose centre lies within `radius` of `(cx, cy)`.
pub fn stamp_disk(mask: &mut BinaryImage, cx: f64, cy: f64, radius: f64) {
    let (w, h) = (mask.width() as i64, mask.height() as i64);
    let r = radius.ceil() as i64;
    let (ix, iy) = (cx.round() as i64, cy.round() as i64);
    for y in (iy - r).max(0)..=(iy + r).min(h - 1) {
        for x in (ix - r).max(0)..=(ix + r).min(w - 1) {
            if (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) <= radius * radius {
                mask.set(x as usize, y as usize, true);
            }
        }
    }
}

/// Draw a polyline. `width <= 1` draws an 8-connected one-pixel path by
/// rounding densely spaced points; wider strokes stamp disks of radius
/// `width / 2` along the path.
pub fn draw_polyline(mask: &mut BinaryImage, points: &[(f64, f64)], width: f64) {
    let (w, h) = (mask.width() as i64, mask.height() as i64);
    let mut plot = |x: f64, y: f64| {
        if width <= 1.0 {
            let (ix, iy) = (x.round() as i64, y.round() as i64);
            if (0..w).contains(&ix) && (0..h).contains(&iy) {
                mask.set(ix as usize, iy as usize, true);
            }
        } else {
            stamp_disk(mask, x, y, width / 2.0);
        }
    };
    if let [only] = points {
        plot(only.0, only.1);
    }
    for seg in points.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let len = (b.0 - a.0).hypot(b.1 - a.1);
        let steps = (len * 4.0).ceil().max(1.0) as usize;
        for s in 0..=steps {
            let f = s as f64 / steps as f64;
            plot(a.0 + f * (b.0 - a.0), a.1 + f * (b.1 - a.1));
        }
    }
}

/// Graph of `y = y0 + amp·sin(2π·cycles·(x - x0)/length)` for `x ∈ [x0, x0 + length]`,
/// one point per unit of x.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SineStroke {
    pub x0: f64,
    pub y0: f64,
    pub length: f64,
    pub amp: f64,
    pub cycles: f64,
}

impl SineStroke {
    pub fn y(&self, x: f64) -> f64 {
        self.y0 + self.amp * (2.0 * PI * self.cycles * (x - self.x0) / self.length).sin()
    }

    pub fn slope(&self, x: f64) -> f64 {
        let w = 2.0 * PI * self.cycles / self.length;
        self.amp * w * (w * (x - self.x0)).cos()
    }

    pub fn points(&self) -> Vec<(f64, f64)> {
        let n = self.length.round() as usize;
        (0..=n)
            .map(|i| {
                let x = self.x0 + self.length * i as f64 / n as f64;
                (x, self.y(x))
            })
            .collect()
    }

    /// Closed form of the mean squared slope over the stroke, valid when the
    /// stroke spans a whole number of half cycles.
    pub fn mean_square_slope(&self) -> f64 {
        let w = 2.0 * PI * self.cycles / self.length;
        (self.amp * w).powi(2) / 2.0
    }
}

/// Small deterministic generator so fixtures do not depend on an RNG crate.
#[derive(Debug, Clone)]
pub struct SplitMix(u64);

impl SplitMix {
    pub fn new(seed: u64) -> Self {
        SplitMix(seed)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    /// Uniform in `[lo, hi)`.
    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }
}

/// Random mask of thick strokes, blobs and specks.
pub fn random_mask(width: usize, height: usize, seed: u64) -> BinaryImage {
    let mut rng = SplitMix::new(seed);
    let mut m = BinaryImage::empty(width, height).expect("non-zero size");
    let (w, h) = (width as f64, height as f64);
    let strokes = 1 + (rng.next_u64() % 4) as usize;
    for _ in 0..strokes {
        let n = 2 + (rng.next_u64() % 4) as usize;
        let pts: Vec<(f64, f64)> = (0..n).map(|_| (rng.range(0.0, w), rng.range(0.0, h))).collect();
        let width = rng.range(1.0, 6.0);
        draw_polyline(&mut m, &pts, width);
    }
    for _ in 0..(rng.next_u64() % 3) {
        stamp_disk(&mut m, rng.range(0.0, w), rng.range(0.0, h), rng.range(1.0, 5.0));
    }
    for _ in 0..(rng.next_u64() % 4) {
        let (x, y) = (rng.range(0.0, w) as usize, rng.range(0.0, h) as usize);
        m.set(x.min(width - 1), y.min(height - 1), true);
    }
    m
}
