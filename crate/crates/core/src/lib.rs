//! Quantitative biomarkers from binary retinal-vessel masks.
//!
//! The processing chain is:
//!
//! 1. **raster** – image carriers, preprocessing filters, binarization and PGM/PPM I/O.
//! 2. **skeleton** – Zhang–Suen thinning to a one-pixel-wide skeleton.
//! 3. **vesselgraph** – skeleton graph, spur/blob pruning, vessel tracking across junctions.
//! 4. **harmonics** – harmonic (Fourier) descriptors, reconstruction, derivatives, curvature.
//! 5. **tortuosity** – derivative-energy tortuosity, its identities, and analytic reference curves.
//! 6. **metrics** – Cohen's kappa and accuracy attribution ratios.
//!
//! [`synth`] draws synthetic masks for tests and self-checks.

pub mod harmonics;
pub mod metrics;
pub mod raster;
pub mod skeleton;
pub mod synth;
pub mod tortuosity;
pub mod vesselgraph;

pub use num_complex::Complex64;
