//! Built-in numerical checks with a machine-readable result table.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use vessel_core::harmonics::fft::{dft, transform, Direction};
use vessel_core::harmonics::{descriptors, parseval_energy, reconstruct, SampledCurve};
use vessel_core::metrics::{attribution_ratio, cohen_kappa, round_sig, ConfusionMatrix};
use vessel_core::raster::BinaryImage;
use vessel_core::skeleton::thin;
use vessel_core::synth::{draw_polyline, random_mask, SineStroke};
use vessel_core::tortuosity::{
    gauss_legendre, oracle_tortuosity, spectral_sum, tortuosity, tortuosity_via_second_derivative, CommonCurve,
};
use vessel_core::vesselgraph::{build_graph, prune, track_vessels, vessel_metrics};
use vessel_core::Complex64;

use crate::config::PipelineConfig;

/// The rater confusion matrix shipped with the tool.
pub const TABLE1_CSV: &str = include_str!("../fixtures/table1_confusion.csv");
pub const PUBLISHED_KAPPA: f64 = 0.838;
pub const KAPPA_TOLERANCE: f64 = 0.005;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub expected: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelfTestReport {
    pub seed: u64,
    pub passed: bool,
    pub checks: Vec<Check>,
}

impl SelfTestReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

struct Table {
    checks: Vec<Check>,
}

impl Table {
    /// Record `|value - expected| <= tolerance`.
    fn abs(&mut self, name: impl Into<String>, value: f64, expected: f64, tolerance: f64) {
        let passed = (value - expected).abs() <= tolerance;
        self.checks.push(Check { name: name.into(), passed, value, expected, tolerance });
    }

    /// Record a worst-case error over many trials against zero.
    fn worst(&mut self, name: impl Into<String>, worst: f64, tolerance: f64) {
        self.abs(name, worst, 0.0, tolerance);
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

fn random_curve(rng: &mut ChaCha8Rng, n: usize) -> SampledCurve {
    let pts = (0..n).map(|_| Complex64::new(rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0))).collect();
    SampledCurve::new(pts, rng.gen_range(0.1..5.0)).expect("finite samples")
}

/// A curve built from a handful of low harmonics, sampled at 64 points.
fn band_limited(rng: &mut ChaCha8Rng) -> SampledCurve {
    let n = 64;
    let terms: Vec<(f64, Complex64)> = (0..6)
        .map(|_| (rng.gen_range(-10..=10) as f64, Complex64::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0))))
        .collect();
    SampledCurve::sample_fn(n, rng.gen_range(0.2..3.0), |t| {
        terms.iter().map(|&(k, a)| a * Complex64::from_polar(1.0, k * t)).sum()
    })
    .expect("finite samples")
}

fn spectral_checks(t: &mut Table, cfg: &PipelineConfig) {
    let tol = cfg.tau_tolerance;
    for j in 1..=5 {
        let c = CommonCurve::Sine(j).sample(256).expect("valid size");
        t.abs(format!("sine_row/j={j}"), tortuosity(&descriptors(&c).expect("non-empty")), (j * j) as f64 / 2.0, tol);
    }
    // rows whose periodic extension is continuous converge to the quadrature value;
    // the arctan row jumps at ±π and has no finite spectral limit
    for c in [CommonCurve::Paraboloid, CommonCurve::Hyperboloid, CommonCurve::Gaussian] {
        let spectral = tortuosity(&descriptors(&c.sample(cfg.oracle_samples).expect("valid size")).expect("non-empty"));
        t.abs(format!("quadrature_convergence/{}", c.name()), spectral, oracle_tortuosity(c, 512), tol);
    }
    for c in CommonCurve::TABLE {
        if let Some(exact) = c.exact_value() {
            t.abs(format!("quadrature_closed_form/{}", c.name()), oracle_tortuosity(c, 64), exact, 1e-9);
        }
    }
    let f = |t: f64| 1.0 / (1.5 + t.cos());
    let df = |t: f64| t.sin() / (1.5 + t.cos()).powi(2);
    let oracle = gauss_legendre(|t| df(t).powi(2), -PI, PI, 256) / (2.0 * PI);
    let errs: Vec<f64> = [8usize, 16, 32]
        .iter()
        .map(|&n| {
            let c = SampledCurve::sample_fn(n, 1.0, |t| Complex64::new(f(t), 0.0)).expect("valid size");
            (tortuosity(&descriptors(&c).expect("non-empty")) - oracle).abs()
        })
        .collect();
    let ratio = (errs[0] / errs[1]).min(errs[1] / errs[2]);
    t.checks.push(Check {
        name: "convergence_ratio".into(),
        passed: ratio >= 3.0,
        value: ratio,
        expected: 3.0,
        tolerance: 0.0,
    });
}

fn identity_checks(t: &mut Table, rng: &mut ChaCha8Rng) {
    let worst = (0..100)
        .map(|_| {
            let d = descriptors(&band_limited(rng)).expect("non-empty");
            rel(tortuosity_via_second_derivative(&d), tortuosity(&d))
        })
        .fold(0.0, f64::max);
    t.worst("two_paths/100_curves", worst, 1e-9);

    let (mut trans, mut rot, mut scale) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..100 {
        let n = rng.gen_range(1..=128);
        let c = random_curve(rng, n);
        let d = descriptors(&c).expect("non-empty");
        let by = Complex64::new(rng.gen_range(-100.0..100.0), rng.gen_range(-100.0..100.0));
        let r = Complex64::from_polar(1.0, rng.gen_range(-PI..PI));
        let s = rng.gen_range(0.05..20.0);
        let map = |f: &dyn Fn(Complex64) -> Complex64| {
            descriptors(&SampledCurve::new(c.samples().iter().map(|&z| f(z)).collect(), c.d_z()).expect("finite"))
                .expect("non-empty")
        };
        trans = trans.max(rel(tortuosity(&map(&|z| z + by)), tortuosity(&d)));
        rot = rot.max(rel(tortuosity(&map(&|z| z * r)), tortuosity(&d)));
        scale = scale.max(rel(spectral_sum(&map(&|z| z * s)), s * s * spectral_sum(&d)));
    }
    t.worst("invariance/translation", trans, 1e-12);
    t.worst("invariance/rotation", rot, 1e-12);
    t.worst("invariance/scaling", scale, 1e-9);

    for n in [8usize, 64, 256, 1024] {
        let c = random_curve(rng, n);
        t.worst(
            format!("parseval/n={n}"),
            rel(parseval_energy(&descriptors(&c).expect("non-empty")), c.mean_square()),
            1e-9,
        );
    }
    for n in [2usize, 3, 100, 1000, 4096] {
        let c = random_curve(rng, n);
        let back = reconstruct(&descriptors(&c).expect("non-empty"), n / 2, n).expect("valid size");
        let err = back.samples().iter().zip(c.samples()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        t.worst(format!("round_trip/n={n}"), err, 1e-9);
    }
    let x: Vec<Complex64> =
        (0..256).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
    let err = transform(&x, Direction::Forward)
        .iter()
        .zip(dft(&x, Direction::Forward))
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    t.worst("fft_matches_dft/n=256", err, 1e-10);
}

fn agreement_checks(t: &mut Table) {
    match ConfusionMatrix::from_csv(TABLE1_CSV).and_then(|m| cohen_kappa(&m)) {
        Ok(s) => t.abs("kappa/table1", s.kappa, PUBLISHED_KAPPA, KAPPA_TOLERANCE),
        Err(_) => t.abs("kappa/table1", f64::NAN, PUBLISHED_KAPPA, KAPPA_TOLERANCE),
    }
    for (v, f, expected) in [(0.938, 0.981, 0.956), (0.967, 0.988, 0.979)] {
        let r = attribution_ratio(v, f).map(|r| round_sig(r, 3)).unwrap_or(f64::NAN);
        t.abs(format!("attribution/{v}/{f}"), r, expected, 1e-12);
    }
}

fn pipeline_checks(t: &mut Table, cfg: &PipelineConfig) {
    let mut worst = 0usize;
    for seed in 0..5 {
        let m = random_mask(64, 48, seed);
        let s = thin(&m);
        let again = thin(s.as_mask());
        let subset = s.as_mask().data().iter().zip(m.data()).all(|(&a, &b)| !a || b);
        let bad = usize::from(again.as_mask() != s.as_mask())
            + usize::from(!subset)
            + usize::from(s.as_mask().component_count() != m.component_count());
        worst = worst.max(bad);
    }
    t.worst("thinning/properties", worst as f64, 0.0);

    let stroke = SineStroke { x0: 40.0, y0: 100.0, length: 400.0, amp: 30.0, cycles: 1.5 };
    let mut mask = BinaryImage::empty(480, 200).expect("non-zero size");
    draw_polyline(&mut mask, &stroke.points(), 3.0);
    let vessels = track_vessels(&prune(&build_graph(&thin(&mask)), cfg.min_spur, cfg.min_component));
    let oracle = gauss_legendre(|x| stroke.slope(x).powi(2), stroke.x0, stroke.x0 + stroke.length, 256) / stroke.length;
    let tau = match vessels.as_slice() {
        [v] => vessel_metrics(v, Some(cfg.harmonics)).map(|m| m.tortuosity).unwrap_or(f64::NAN),
        _ => f64::NAN,
    };
    t.abs("end_to_end/sine_vessel", tau, oracle, 0.05 * oracle);
}

/// Run every check; the seed drives all random trials.
pub fn selftest(cfg: &PipelineConfig) -> SelfTestReport {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut t = Table { checks: Vec::new() };
    spectral_checks(&mut t, cfg);
    identity_checks(&mut t, &mut rng);
    agreement_checks(&mut t);
    pipeline_checks(&mut t, cfg);
    let passed = t.checks.iter().all(|c| c.passed);
    SelfTestReport { seed: cfg.seed, passed, checks: t.checks }
}
