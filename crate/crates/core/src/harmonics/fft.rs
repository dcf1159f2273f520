//! Discrete Fourier transforms used by the descriptor code.
//!
//! Power-of-two lengths go through an iterative radix-2 Cooley–Tukey FFT;
//! other lengths use the direct O(N²) sum. Neither applies the 1/N factor.

use std::f64::consts::PI;

use num_complex::Complex64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// exp(-2πi kt/N)
    Forward,
    /// exp(+2πi kt/N)
    Inverse,
}

impl Direction {
    fn sign(self) -> f64 {
        match self {
            Direction::Forward => -1.0,
            Direction::Inverse => 1.0,
        }
    }
}

/// Direct evaluation of the DFT sum.
pub fn dft(input: &[Complex64], dir: Direction) -> Vec<Complex64> {
    let n = input.len();
    let s = dir.sign();
    (0..n)
        .map(|k| {
            input
                .iter()
                .enumerate()
                .map(|(t, &z)| {
                    // reduce k*t mod n first so the angle stays small
                    let phase = s * 2.0 * PI * ((k * t) % n) as f64 / n as f64;
                    z * Complex64::from_polar(1.0, phase)
                })
                .sum()
        })
        .collect()
}

/// In-place radix-2 FFT. Panics if the length is not a power of two.
pub fn fft_in_place(buf: &mut [Complex64], dir: Direction) {
    let n = buf.len();
    assert!(n.is_power_of_two(), "radix-2 FFT needs a power-of-two length, got {n}");
    if n <= 1 {
        return;
    }
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            buf.swap(i, j);
        }
    }
    let s = dir.sign();
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        // twiddles computed directly per index rather than by repeated multiplication
        let tw: Vec<Complex64> =
            (0..half).map(|k| Complex64::from_polar(1.0, s * 2.0 * PI * k as f64 / len as f64)).collect();
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let a = buf[start + k];
                let b = buf[start + k + half] * tw[k];
                buf[start + k] = a + b;
                buf[start + k + half] = a - b;
            }
        }
        len <<= 1;
    }
}

/// Unnormalized transform of any length.
pub fn transform(input: &[Complex64], dir: Direction) -> Vec<Complex64> {
    if input.len().is_power_of_two() {
        let mut buf = input.to_vec();
        fft_in_place(&mut buf, dir);
        buf
    } else {
        dft(input, dir)
    }
}
