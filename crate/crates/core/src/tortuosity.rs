//! Derivative-energy tortuosity `τ = d_z² Σ_k k² |ĉ_k|²`.
//!
//! The sum runs over signed frequencies and skips the Nyquist bin, matching
//! [`harmonics::derivative`]. `τ` equals `d_z²` times the mean square of the
//! spectral derivative, so it is invariant to translation and rotation of the
//! samples and quadratic in their scale.

use std::f64::consts::PI;
use std::fmt::Write as _;

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::harmonics::{self, canonicalize_open_curve, descriptors, HarmonicDescriptors, HarmonicsError, SampledCurve};
use crate::vesselgraph::ExtendedVessel;

#[derive(Debug, Error, PartialEq)]
pub enum TortuosityError {
    #[error("scale factors must be positive, got {0}")]
    BadScale(f64),
    #[error("no vessels to average")]
    EmptyVasculature,
    #[error("vessel {0} is a closed loop and has no chord")]
    ClosedVessel(usize),
    #[error(transparent)]
    Harmonics(#[from] HarmonicsError),
}

/// `Σ k² |ĉ_k|²` over signed frequencies, Nyquist excluded.
pub fn spectral_sum(d: &HarmonicDescriptors) -> f64 {
    d.spectrum().map(|(k, c)| (k * k) as f64 * c.norm_sqr()).sum()
}

pub fn tortuosity(d: &HarmonicDescriptors) -> f64 {
    d.d_z() * d.d_z() * spectral_sum(d)
}

/// Tortuosity of the series truncated to `|k| ≤ harmonics`.
pub fn truncated_tortuosity(d: &HarmonicDescriptors, harmonics: usize) -> Result<f64, TortuosityError> {
    Ok(tortuosity(&d.truncated(harmonics)?))
}

/// Same quantity computed from the second-derivative spectrum:
/// `Σ_{k≠0} |ĉ''_k|² / k²`.
pub fn tortuosity_via_second_derivative(d: &HarmonicDescriptors) -> f64 {
    let dd = harmonics::derivative(d, 2);
    let sum: f64 = dd.spectrum().filter(|&(k, _)| k != 0).map(|(k, c)| c.norm_sqr() / (k * k) as f64).sum();
    d.d_z() * d.d_z() * sum
}

fn check_scales(scales: &[f64]) -> Result<(), TortuosityError> {
    match scales.iter().find(|&&s| !(s > 0.0 && s.is_finite())) {
        Some(&s) => Err(TortuosityError::BadScale(s)),
        None => Ok(()),
    }
}

/// Two-vessel union formula `τ_z = d_z² (τ_u / d_u² + τ_v / d_v²)`.
/// Equal scales give `τ_u + τ_v` without rounding.
pub fn union_tortuosity(tau_u: f64, d_u: f64, tau_v: f64, d_v: f64, d_z: f64) -> Result<f64, TortuosityError> {
    check_scales(&[d_u, d_v, d_z])?;
    if d_u == d_z && d_v == d_z {
        return Ok(tau_u + tau_v);
    }
    Ok(d_z * d_z * (tau_u / (d_u * d_u) + tau_v / (d_v * d_v)))
}

/// Union identity that holds for concatenated vessels when each scale factor
/// maps the vessel's own extent onto the period: `τ_z = d_z (τ_u / d_u + τ_v / d_v)`.
pub fn union_tortuosity_linear(tau_u: f64, d_u: f64, tau_v: f64, d_v: f64, d_z: f64) -> Result<f64, TortuosityError> {
    check_scales(&[d_u, d_v, d_z])?;
    if d_u == d_z && d_v == d_z {
        return Ok(tau_u + tau_v);
    }
    Ok(d_z * (tau_u / d_u + tau_v / d_v))
}

/// Reference waveforms on `[-π, π]`, all with amplitude 2 except the sine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum CommonCurve {
    Sine(u32),
    InverseTrig,
    Paraboloid,
    Hyperboloid,
    Gaussian,
}

impl CommonCurve {
    pub const TABLE: [CommonCurve; 5] = [
        CommonCurve::Sine(2),
        CommonCurve::InverseTrig,
        CommonCurve::Paraboloid,
        CommonCurve::Hyperboloid,
        CommonCurve::Gaussian,
    ];

    pub fn name(&self) -> String {
        match self {
            CommonCurve::Sine(j) => format!("sine(j={j})"),
            CommonCurve::InverseTrig => "inverse_trig".into(),
            CommonCurve::Paraboloid => "paraboloid".into(),
            CommonCurve::Hyperboloid => "hyperboloid".into(),
            CommonCurve::Gaussian => "gaussian".into(),
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        let hyp = (1.0 + PI * PI).sqrt() - 1.0;
        match *self {
            CommonCurve::Sine(j) => (j as f64 * t).sin(),
            CommonCurve::InverseTrig => t.atan() / PI.atan(),
            CommonCurve::Paraboloid => 2.0 / (PI * PI) * (PI * PI - t * t),
            CommonCurve::Hyperboloid => 2.0 * (1.0 + t * t).sqrt() / hyp,
            CommonCurve::Gaussian => 2.0 * (-t * t / 2.0).exp(),
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        let hyp = (1.0 + PI * PI).sqrt() - 1.0;
        match *self {
            CommonCurve::Sine(j) => j as f64 * (j as f64 * t).cos(),
            CommonCurve::InverseTrig => 1.0 / ((1.0 + t * t) * PI.atan()),
            CommonCurve::Paraboloid => -4.0 * t / (PI * PI),
            CommonCurve::Hyperboloid => 2.0 * t / ((1.0 + t * t).sqrt() * hyp),
            CommonCurve::Gaussian => -2.0 * t * (-t * t / 2.0).exp(),
        }
    }

    /// The value printed in the published table, kept for reporting only.
    pub fn published_value(&self) -> f64 {
        match *self {
            CommonCurve::Sine(j) => (j * j) as f64 / 2.0,
            CommonCurve::InverseTrig => 0.195,
            CommonCurve::Paraboloid => 8.0 / 3.0,
            CommonCurve::Hyperboloid => 3.272,
            CommonCurve::Gaussian => 2.029,
        }
    }

    /// Closed form of `(1/2π) ∫ f'(t)² dt` where one is known.
    pub fn exact_value(&self) -> Option<f64> {
        match *self {
            CommonCurve::Sine(j) => Some((j * j) as f64 / 2.0),
            CommonCurve::Paraboloid => Some(16.0 / (3.0 * PI * PI)),
            CommonCurve::Hyperboloid => {
                let hyp = (1.0 + PI * PI).sqrt() - 1.0;
                Some(4.0 * (PI - PI.atan()) / (PI * hyp * hyp))
            }
            _ => None,
        }
    }

    /// Samples on `t_j = -π + 2πj/n` with `d_z = 1`.
    pub fn sample(&self, n: usize) -> Result<SampledCurve, HarmonicsError> {
        SampledCurve::sample_fn(n, 1.0, |t| Complex64::new(self.value(t), 0.0))
    }
}

// 5-point Gauss–Legendre nodes and weights on [-1, 1]
const GL_NODES: [f64; 5] =
    [0.0, -0.538_469_310_105_683_1, 0.538_469_310_105_683_1, -0.906_179_845_938_664, 0.906_179_845_938_664];
const GL_WEIGHTS: [f64; 5] = [
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
    0.236_926_885_056_189_1,
];

/// `∫_a^b f` by composite 5-point Gauss–Legendre over `panels` equal panels.
pub fn gauss_legendre(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|p| {
            let mid = a + (p as f64 + 0.5) * h;
            GL_NODES.iter().zip(GL_WEIGHTS).map(|(x, w)| w * f(mid + 0.5 * h * x)).sum::<f64>() * 0.5 * h
        })
        .sum()
}

/// `(1/2π) ∫_{-π}^{π} f'(t)² dt` by quadrature of the analytic derivative.
/// `n` (at least 64) is the number of quadrature panels.
pub fn oracle_tortuosity(curve: CommonCurve, n: usize) -> f64 {
    let panels = n.max(64);
    gauss_legendre(|t| curve.derivative(t).powi(2), -PI, PI, panels) / (2.0 * PI)
}

/// Perpendicular offset from the chord of a canonicalized open curve,
/// extended to a period by odd reflection: `φ_0 .. φ_{n-1}, -φ_{n-2} .. -φ_1`.
///
/// Both end offsets are zero, so the extension is continuous with a continuous
/// first derivative. The period covers the chord twice and carries the same
/// scale factor as the retraced curve.
pub fn odd_profile(points: &[(f64, f64)]) -> Result<SampledCurve, TortuosityError> {
    let curve = canonicalize_open_curve(points)?;
    let n = points.len();
    let phi: Vec<f64> = curve.samples()[..n].iter().map(|z| z.im).collect();
    let mut ext = phi.clone();
    ext.extend(phi[1..n - 1].iter().rev().map(|v| -v));
    Ok(SampledCurve::from_real(&ext, curve.d_z())?)
}

/// Tortuosity of one open vessel.
///
/// The perpendicular offset from the chord is analysed as a real waveform
/// (see [`odd_profile`]). `harmonics` counts harmonics of the single
/// traversal; on the doubled period that is frequency `2·harmonics`, clamped
/// to what the sampling supports.
pub fn vessel_tortuosity(points: &[(f64, f64)], harmonics: Option<usize>) -> Result<f64, TortuosityError> {
    if harmonics::is_closed(points) {
        return Err(TortuosityError::ClosedVessel(0));
    }
    let d = descriptors(&odd_profile(points)?)?;
    match harmonics {
        None => Ok(tortuosity(&d)),
        Some(m) => truncated_tortuosity(&d, (2 * m).min(d.len() / 2)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VesselTortuosity {
    pub vessel_id: usize,
    pub tortuosity: f64,
    pub d_z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TortuosityReport {
    pub per_vessel: Vec<VesselTortuosity>,
    pub mean_tortuosity: f64,
    pub vessel_count: usize,
}

impl TortuosityReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("vessel_id,tortuosity,d_z\n");
        for v in &self.per_vessel {
            let _ = writeln!(s, "{},{},{}", v.vessel_id, v.tortuosity, v.d_z);
        }
        s
    }
}

pub fn mean_tortuosity(
    vessels: &[ExtendedVessel],
    harmonics: Option<usize>,
) -> Result<TortuosityReport, TortuosityError> {
    if vessels.is_empty() {
        return Err(TortuosityError::EmptyVasculature);
    }
    let mut per_vessel = Vec::with_capacity(vessels.len());
    for (i, v) in vessels.iter().enumerate() {
        if v.is_closed() {
            return Err(TortuosityError::ClosedVessel(i));
        }
        per_vessel.push(VesselTortuosity {
            vessel_id: i,
            tortuosity: vessel_tortuosity(&v.points, harmonics)?,
            d_z: v.d_z,
        });
    }
    let mean = per_vessel.iter().map(|v| v.tortuosity).sum::<f64>() / per_vessel.len() as f64;
    Ok(TortuosityReport { vessel_count: per_vessel.len(), per_vessel, mean_tortuosity: mean })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn band_limited(seed: u64, n: usize, kmax: i64) -> HarmonicDescriptors {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut c = vec![Complex64::new(0.0, 0.0); n];
        for k in -kmax..=kmax {
            let idx = k.rem_euclid(n as i64) as usize;
            c[idx] = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
        HarmonicDescriptors::new(c, rng.gen_range(0.2..3.0)).unwrap()
    }

    #[test]
    fn straight_segment_is_zero() {
        let pts: Vec<(f64, f64)> = (0..30).map(|i| (2.0 + i as f64 * 0.6, 5.0 + i as f64 * 0.8)).collect();
        assert!(vessel_tortuosity(&pts, None).unwrap().abs() < 1e-9);
    }

    #[test]
    fn sine_rows() {
        for j in 1..=5u32 {
            let d = descriptors(&CommonCurve::Sine(j).sample(256).unwrap()).unwrap();
            let tau = tortuosity(&d);
            assert!((tau - (j * j) as f64 / 2.0).abs() < 1e-3, "j={j} tau={tau}");
            assert!((tortuosity_via_second_derivative(&d) - tau).abs() < 1e-9);
        }
    }

    #[test]
    fn quadrature_matches_closed_forms() {
        // closed forms worked out by hand from the analytic derivatives
        assert!((oracle_tortuosity(CommonCurve::Sine(2), 64) - 2.0).abs() < 1e-12);
        assert!((oracle_tortuosity(CommonCurve::Sine(3), 64) - 4.5).abs() < 1e-12);
        assert!((oracle_tortuosity(CommonCurve::Paraboloid, 64) - 16.0 / (3.0 * PI * PI)).abs() < 1e-12);
        let hyp = (1.0 + PI * PI).sqrt() - 1.0;
        let expected = 4.0 * (PI - PI.atan()) / (PI * hyp * hyp);
        assert!((oracle_tortuosity(CommonCurve::Hyperboloid, 64) - expected).abs() < 1e-12);
        assert!((oracle_tortuosity(CommonCurve::InverseTrig, 128) - 0.1549).abs() < 1e-4);
        assert!((oracle_tortuosity(CommonCurve::Gaussian, 128) - 0.5641).abs() < 1e-4);
    }

    #[test]
    fn quadrature_is_converged() {
        for c in CommonCurve::TABLE {
            let a = oracle_tortuosity(c, 64);
            let b = oracle_tortuosity(c, 512);
            assert!((a - b).abs() < 1e-12, "{}", c.name());
        }
    }

    #[test]
    fn dc_only_is_zero() {
        let d = descriptors(&SampledCurve::new(vec![Complex64::new(4.0, -2.0); 16], 1.0).unwrap()).unwrap();
        assert_eq!(tortuosity(&d), 0.0);
        assert_eq!(tortuosity_via_second_derivative(&d), 0.0);
    }

    #[test]
    fn two_paths_agree_on_random_spectra() {
        for seed in 0..100 {
            let d = band_limited(seed, 64, 20);
            let a = tortuosity(&d);
            let b = tortuosity_via_second_derivative(&d);
            assert!((a - b).abs() <= 1e-9 * a.max(1.0), "seed {seed}: {a} vs {b}");
        }
    }

    #[test]
    fn truncation_is_monotone() {
        let d = band_limited(7, 64, 31);
        let mut prev = 0.0;
        for m in 0..=32 {
            let t = truncated_tortuosity(&d, m).unwrap();
            assert!(t >= prev);
            prev = t;
        }
    }

    #[test]
    fn union_examples() {
        assert_eq!(union_tortuosity(1.0, 1.0, 2.0, 1.0, 1.0), Ok(3.0));
        assert_eq!(union_tortuosity(1.0, 1.0, 2.0, 1.0, 2.0), Ok(12.0));
        assert_eq!(union_tortuosity(1.0, 0.0, 2.0, 1.0, 1.0), Err(TortuosityError::BadScale(0.0)));
        assert_eq!(union_tortuosity_linear(1.0, 1.0, 2.0, 1.0, 1.0), Ok(3.0));
        assert_eq!(union_tortuosity(0.1, 0.3, 0.7, 0.3, 0.3), Ok(0.1 + 0.7));
        assert_eq!(union_tortuosity_linear(1.0, 1.0, 2.0, 1.0, -1.0), Err(TortuosityError::BadScale(-1.0)));
    }

    #[test]
    fn report_mean_and_errors() {
        assert_eq!(mean_tortuosity(&[], None), Err(TortuosityError::EmptyVasculature));
        let pts: Vec<(f64, f64)> = (0..40).map(|i| (i as f64, 3.0 * (i as f64 * 0.3).sin())).collect();
        let v = ExtendedVessel::from_points(pts).unwrap();
        let one = mean_tortuosity(std::slice::from_ref(&v), Some(8)).unwrap();
        let two = mean_tortuosity(&[v.clone(), v], Some(8)).unwrap();
        assert_eq!(two.vessel_count, 2);
        assert!((one.mean_tortuosity - two.mean_tortuosity).abs() < 1e-15);
        assert!(two.to_csv().starts_with("vessel_id,tortuosity,d_z\n"));
        assert!(two.to_json().contains("\"mean_tortuosity\""));
    }

    #[test]
    fn sampled_sine_vessel_matches_table() {
        // the graph of sin(2t) over one period has chord 2π, so d_z = 1
        let n = 401;
        let pts: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let t = -PI + 2.0 * PI * i as f64 / (n - 1) as f64;
                (t, (2.0 * t).sin())
            })
            .collect();
        let tau = vessel_tortuosity(&pts, Some(16)).unwrap();
        assert!((tau - 2.0).abs() < 1e-2, "{tau}");
    }
}
