//! Harmonic descriptors of planar curves.
//!
//! A curve is a sequence of complex samples `z(t) = x(t) + i·y(t)`,
//! `t = 0..N-1`, regarded as one period mapped onto `[-π, π]` (fundamental
//! frequency 1). Descriptors are the DFT coefficients with the `1/N` factor
//! on the forward side:
//!
//! ```text
//! ĉ_k = (1/N) Σ_t z(t) exp(-2πi kt/N)        z(t) = Σ_k ĉ_k exp(2πi kt/N)
//! ```
//!
//! Bin `k` stands for the signed frequency `k` when `k ≤ N/2` and `k - N`
//! otherwise. Derivatives multiply by `(i·k)^order` and zero the Nyquist bin.

pub mod fft;

use std::f64::consts::PI;
use std::fmt::Write as _;

use num_complex::Complex64;
use thiserror::Error;

use fft::{transform, Direction};

#[derive(Debug, Error, PartialEq)]
pub enum HarmonicsError {
    #[error("curve has no samples")]
    EmptyCurve,
    #[error("curve contains non-finite coordinates")]
    NonFinite,
    #[error("scale factor must be positive and finite, got {0}")]
    BadScale(f64),
    #[error("cannot keep {harmonics} harmonics of a {n}-sample curve (max {})", n / 2)]
    BadTruncation { harmonics: usize, n: usize },
    #[error("descriptors are not conjugate-symmetric (max asymmetry {0:e})")]
    NotConjugateSymmetric(f64),
    #[error("trigonometric coefficients do not match {n} samples")]
    TrigLength { n: usize },
    #[error("tangent vanishes at every sample")]
    DegenerateTangent,
    #[error("first and last points coincide on a curve that does not close")]
    DegenerateChord,
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
}

/// Uniformly sampled periodic curve with the scale factor that maps it onto
/// the canonical period.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledCurve {
    z: Vec<Complex64>,
    d_z: f64,
}

impl SampledCurve {
    pub fn new(z: Vec<Complex64>, d_z: f64) -> Result<Self, HarmonicsError> {
        if z.is_empty() {
            return Err(HarmonicsError::EmptyCurve);
        }
        if z.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(HarmonicsError::NonFinite);
        }
        if !(d_z > 0.0 && d_z.is_finite()) {
            return Err(HarmonicsError::BadScale(d_z));
        }
        Ok(Self { z, d_z })
    }

    /// Real-valued waveform `z(t) = f(t)`.
    pub fn from_real(values: &[f64], d_z: f64) -> Result<Self, HarmonicsError> {
        Self::new(values.iter().map(|&v| Complex64::new(v, 0.0)).collect(), d_z)
    }

    /// Samples `f(-π + 2πj/n)`, `j = 0..n-1`, of a function on the canonical period.
    pub fn sample_fn(n: usize, d_z: f64, f: impl Fn(f64) -> Complex64) -> Result<Self, HarmonicsError> {
        Self::new((0..n).map(|j| f(-PI + 2.0 * PI * j as f64 / n as f64)).collect(), d_z)
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.z
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    pub fn d_z(&self) -> f64 {
        self.d_z
    }

    pub fn with_scale(mut self, d_z: f64) -> Result<Self, HarmonicsError> {
        if !(d_z > 0.0 && d_z.is_finite()) {
            return Err(HarmonicsError::BadScale(d_z));
        }
        self.d_z = d_z;
        Ok(self)
    }

    /// The imaginary part as a real waveform: the offset from the x-axis of a
    /// canonicalized curve.
    pub fn profile(&self) -> SampledCurve {
        SampledCurve { z: self.z.iter().map(|c| Complex64::new(c.im, 0.0)).collect(), d_z: self.d_z }
    }

    /// Mean of `|z(t)|²` over the samples.
    pub fn mean_square(&self) -> f64 {
        self.z.iter().map(|c| c.norm_sqr()).sum::<f64>() / self.z.len() as f64
    }
}

/// DFT coefficients `ĉ_k`, `k = 0..N-1`, plus the curve's scale factor.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicDescriptors {
    c_hat: Vec<Complex64>,
    d_z: f64,
}

impl HarmonicDescriptors {
    pub fn new(c_hat: Vec<Complex64>, d_z: f64) -> Result<Self, HarmonicsError> {
        if c_hat.is_empty() {
            return Err(HarmonicsError::EmptyCurve);
        }
        if !(d_z > 0.0 && d_z.is_finite()) {
            return Err(HarmonicsError::BadScale(d_z));
        }
        Ok(Self { c_hat, d_z })
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.c_hat
    }

    pub fn len(&self) -> usize {
        self.c_hat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c_hat.is_empty()
    }

    pub fn d_z(&self) -> f64 {
        self.d_z
    }

    /// Signed frequency of bin `k`.
    pub fn frequency(&self, k: usize) -> i64 {
        signed_frequency(k, self.c_hat.len())
    }

    /// Bin `N/2` of an even-length spectrum.
    pub fn is_nyquist(&self, k: usize) -> bool {
        let n = self.c_hat.len();
        n.is_multiple_of(2) && k == n / 2
    }

    /// Iterator over `(signed frequency, coefficient)` excluding the Nyquist bin.
    pub fn spectrum(&self) -> impl Iterator<Item = (i64, Complex64)> + '_ {
        self.c_hat
            .iter()
            .enumerate()
            .filter(move |(k, _)| !self.is_nyquist(*k))
            .map(move |(k, &c)| (self.frequency(k), c))
    }

    /// Largest deviation from `ĉ_{N-k} = conj(ĉ_k)`.
    pub fn conjugate_asymmetry(&self) -> f64 {
        let n = self.c_hat.len();
        (0..n).map(|k| (self.c_hat[(n - k) % n] - self.c_hat[k].conj()).norm()).fold(0.0, f64::max)
    }

    /// Keep only bins with `|frequency| ≤ harmonics`.
    pub fn truncated(&self, harmonics: usize) -> Result<HarmonicDescriptors, HarmonicsError> {
        let n = self.c_hat.len();
        if harmonics > n / 2 {
            return Err(HarmonicsError::BadTruncation { harmonics, n });
        }
        let c_hat = self
            .c_hat
            .iter()
            .enumerate()
            .map(
                |(k, &c)| {
                    if self.frequency(k).unsigned_abs() as usize <= harmonics {
                        c
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                },
            )
            .collect();
        Ok(HarmonicDescriptors { c_hat, d_z: self.d_z })
    }

    /// CSV rows `k,re,im,abs` with a header line.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,re,im,abs\n");
        for (k, c) in self.c_hat.iter().enumerate() {
            let _ = writeln!(s, "{},{:.17e},{:.17e},{:.17e}", k, c.re, c.im, c.norm());
        }
        s
    }
}

pub fn signed_frequency(k: usize, n: usize) -> i64 {
    if k <= n / 2 {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

/// Trigonometric form `a_0 + Σ a_k cos(kt) + b_k sin(kt)` of a real signal.
///
/// For even `N` the last cosine coefficient is the Nyquist term and is stored
/// one-sided (`a_{N/2} = ĉ_{N/2}`); its `b` is always zero.
#[derive(Debug, Clone, PartialEq)]
pub struct TrigCoefficients {
    pub n: usize,
    /// a_0 ..= a_K
    pub a: Vec<f64>,
    /// b_1 ..= b_K
    pub b: Vec<f64>,
}

impl TrigCoefficients {
    pub fn order(&self) -> usize {
        self.n / 2
    }

    /// `|(a_k, b_k)|`, with `b_0 = 0`.
    pub fn magnitude(&self, k: usize) -> f64 {
        let a = self.a.get(k).copied().unwrap_or(0.0);
        let b = if k == 0 { 0.0 } else { self.b.get(k - 1).copied().unwrap_or(0.0) };
        a.hypot(b)
    }
}

pub fn descriptors(curve: &SampledCurve) -> Result<HarmonicDescriptors, HarmonicsError> {
    let n = curve.z.len();
    if n == 0 {
        return Err(HarmonicsError::EmptyCurve);
    }
    let scale = 1.0 / n as f64;
    let c_hat = transform(&curve.z, Direction::Forward).into_iter().map(|c| c * scale).collect();
    Ok(HarmonicDescriptors { c_hat, d_z: curve.d_z })
}

/// Evaluate the series at `samples` uniform parameter values, keeping bins with
/// `|frequency| ≤ harmonics`. Sample `j` sits at index position `j·N/samples`.
pub fn reconstruct(d: &HarmonicDescriptors, harmonics: usize, samples: usize) -> Result<SampledCurve, HarmonicsError> {
    let n = d.len();
    if harmonics > n / 2 {
        return Err(HarmonicsError::BadTruncation { harmonics, n });
    }
    if samples == 0 {
        return Err(HarmonicsError::EmptyCurve);
    }
    let kept = d.truncated(harmonics)?;
    if samples == n {
        let z = transform(&kept.c_hat, Direction::Inverse);
        return SampledCurve::new(z, d.d_z);
    }
    let z = (0..samples)
        .map(|j| {
            let t = j as f64 * n as f64 / samples as f64;
            evaluate(&kept, t)
        })
        .collect();
    SampledCurve::new(z, d.d_z)
}

/// Value of the trigonometric interpolant at fractional index `t`.
/// The Nyquist bin is split evenly between `±N/2`.
pub fn evaluate(d: &HarmonicDescriptors, t: f64) -> Complex64 {
    let n = d.len();
    let w = 2.0 * PI * t / n as f64;
    d.c_hat
        .iter()
        .enumerate()
        .filter(|(_, c)| c.re != 0.0 || c.im != 0.0)
        .map(|(k, &c)| {
            if d.is_nyquist(k) {
                c * (w * k as f64).cos()
            } else {
                c * Complex64::from_polar(1.0, w * d.frequency(k) as f64)
            }
        })
        .sum()
}

fn symmetry_tolerance(d: &HarmonicDescriptors) -> f64 {
    let scale = d.c_hat.iter().map(|c| c.norm()).fold(1.0, f64::max);
    1e-9 * scale
}

pub fn to_trig(d: &HarmonicDescriptors) -> Result<TrigCoefficients, HarmonicsError> {
    let asym = d.conjugate_asymmetry();
    if asym > symmetry_tolerance(d) {
        return Err(HarmonicsError::NotConjugateSymmetric(asym));
    }
    let n = d.len();
    let order = n / 2;
    let mut a = vec![d.c_hat[0].re];
    let mut b = Vec::with_capacity(order);
    for k in 1..=order {
        let c = d.c_hat[k];
        if d.is_nyquist(k) {
            a.push(c.re);
            b.push(0.0);
        } else {
            a.push(2.0 * c.re);
            b.push(-2.0 * c.im);
        }
    }
    Ok(TrigCoefficients { n, a, b })
}

pub fn from_trig(tc: &TrigCoefficients, d_z: f64) -> Result<HarmonicDescriptors, HarmonicsError> {
    let n = tc.n;
    let order = n / 2;
    if n == 0 || tc.a.len() != order + 1 || tc.b.len() != order {
        return Err(HarmonicsError::TrigLength { n });
    }
    let mut c_hat = vec![Complex64::new(0.0, 0.0); n];
    c_hat[0] = Complex64::new(tc.a[0], 0.0);
    for k in 1..=order {
        if n.is_multiple_of(2) && k == order {
            c_hat[k] = Complex64::new(tc.a[k], 0.0);
        } else {
            let c = Complex64::new(tc.a[k] / 2.0, -tc.b[k - 1] / 2.0);
            c_hat[k] = c;
            c_hat[n - k] = c.conj();
        }
    }
    HarmonicDescriptors::new(c_hat, d_z)
}

/// Spectral derivative of the given order with respect to the canonical parameter.
pub fn derivative(d: &HarmonicDescriptors, order: u32) -> HarmonicDescriptors {
    let c_hat = d
        .c_hat
        .iter()
        .enumerate()
        .map(|(k, &c)| {
            if d.is_nyquist(k) {
                Complex64::new(0.0, 0.0)
            } else {
                c * Complex64::new(0.0, d.frequency(k) as f64).powu(order)
            }
        })
        .collect();
    HarmonicDescriptors { c_hat, d_z: d.d_z }
}

/// Relative threshold on `|z'|` below which a tangent counts as vanished.
pub const TANGENT_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureProfile {
    /// Signed curvature per sample; 0 at degenerate samples.
    pub kappa: Vec<f64>,
    /// Indices of samples where the tangent vanished.
    pub degenerate: Vec<usize>,
}

impl CurvatureProfile {
    /// Mean of `|κ|` over the given sample range, skipping degenerate samples.
    pub fn mean_abs(&self, range: std::ops::Range<usize>) -> Option<f64> {
        let mut sum = 0.0;
        let mut count = 0usize;
        for i in range {
            if self.degenerate.binary_search(&i).is_err() {
                sum += self.kappa[i].abs();
                count += 1;
            }
        }
        (count > 0).then(|| sum / count as f64)
    }
}

/// `κ = (x'y'' - y'x'') / (x'² + y'²)^{3/2}` at `samples` uniform parameters.
///
/// Curvature is in inverse units of the curve coordinates; it does not depend
/// on the parameter speed.
pub fn curvature_profile(d: &HarmonicDescriptors, samples: usize) -> Result<CurvatureProfile, HarmonicsError> {
    curvature_from_derivatives(&derivative(d, 1), &derivative(d, 2), samples)
}

/// Curvature from first- and second-derivative spectra supplied directly,
/// e.g. when the first derivative carries an extra constant term.
pub fn curvature_from_derivatives(
    first: &HarmonicDescriptors,
    second: &HarmonicDescriptors,
    samples: usize,
) -> Result<CurvatureProfile, HarmonicsError> {
    let d1 = reconstruct(first, first.len() / 2, samples)?;
    let d2 = reconstruct(second, second.len() / 2, samples)?;
    let speed_max = d1.z.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let eps = TANGENT_EPS * speed_max.max(1.0);
    let mut kappa = Vec::with_capacity(samples);
    let mut degenerate = Vec::new();
    for (i, (v, a)) in d1.z.iter().zip(&d2.z).enumerate() {
        let speed = v.norm();
        if speed <= eps {
            degenerate.push(i);
            kappa.push(0.0);
        } else {
            kappa.push((v.conj() * a).im / speed.powi(3));
        }
    }
    if degenerate.len() == samples {
        return Err(HarmonicsError::DegenerateTangent);
    }
    Ok(CurvatureProfile { kappa, degenerate })
}

/// `Σ_k |ĉ_k|²`, equal to the mean square of the samples.
pub fn parseval_energy(d: &HarmonicDescriptors) -> f64 {
    d.c_hat.iter().map(|c| c.norm_sqr()).sum()
}

fn polyline_length(z: &[Complex64]) -> f64 {
    z.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
}

/// Rigid frame that puts a curve's first point at the origin and its chord on
/// the positive x-axis: `canonical = (p - translation) * rotation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CanonicalFrame {
    pub translation: Complex64,
    pub rotation: Complex64,
    pub chord: f64,
}

impl CanonicalFrame {
    pub fn of(points: &[(f64, f64)]) -> Result<Self, HarmonicsError> {
        if points.len() < 2 {
            return Err(HarmonicsError::TooFewPoints { needed: 2, got: points.len() });
        }
        let first = Complex64::new(points[0].0, points[0].1);
        let (lx, ly) = points[points.len() - 1];
        let chord_vec = Complex64::new(lx, ly) - first;
        let chord = chord_vec.norm();
        if chord == 0.0 {
            return Err(HarmonicsError::DegenerateChord);
        }
        Ok(Self { translation: first, rotation: chord_vec.conj() / chord, chord })
    }

    pub fn apply(&self, p: (f64, f64)) -> Complex64 {
        (Complex64::new(p.0, p.1) - self.translation) * self.rotation
    }

    /// Map a canonical-frame vector back to image orientation.
    pub fn unrotate(&self, v: Complex64) -> Complex64 {
        v * self.rotation.conj()
    }
}

/// True when the point list starts and ends on the same point and visits
/// at least two other distinct points.
pub fn is_closed(points: &[(f64, f64)]) -> bool {
    let n = points.len();
    n >= 4 && points[0] == points[n - 1] && points.iter().any(|&p| p != points[0])
}

/// Put an open curve in canonical position and make it periodic.
///
/// The first point moves to the origin and the chord onto the positive
/// x-axis; the samples are then retraced (`p_0 .. p_{n-1}, p_{n-2} .. p_1`),
/// so one period runs along the curve and back. The retraced curve covers
/// the chord twice, so its scale factor is `π / chord`, half the `2π / chord`
/// of a single traversal.
///
/// A closed point list (see [`is_closed`]) is only translated; its duplicate
/// end point is dropped and the scale factor is `2π / perimeter`.
pub fn canonicalize_open_curve(points: &[(f64, f64)]) -> Result<SampledCurve, HarmonicsError> {
    if points.len() < 2 {
        return Err(HarmonicsError::TooFewPoints { needed: 2, got: points.len() });
    }
    if points.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
        return Err(HarmonicsError::NonFinite);
    }
    if is_closed(points) {
        let origin = Complex64::new(points[0].0, points[0].1);
        let z: Vec<Complex64> = points.iter().map(|&(x, y)| Complex64::new(x, y) - origin).collect();
        let perimeter = polyline_length(&z);
        let mut z = z;
        z.pop();
        return SampledCurve::new(z, 2.0 * PI / perimeter);
    }
    let frame = CanonicalFrame::of(points)?;
    let forward: Vec<Complex64> = points.iter().map(|&p| frame.apply(p)).collect();
    let n = forward.len();
    let mut z = forward.clone();
    z.extend(forward[1..n - 1].iter().rev());
    SampledCurve::new(z, PI / frame.chord)
}

/// Number of forward samples in a retraced curve of `n` samples.
pub fn forward_len(retraced_len: usize) -> usize {
    retraced_len / 2 + 1
}
