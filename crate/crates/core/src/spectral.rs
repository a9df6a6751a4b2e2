//! FFT-based operations on real 2π-periodic samples at `α_j = 2πj/N`.
//!
//! Coefficients are normalized so that `f(α) = Σ_k c_k e^{ikα}`. The Nyquist
//! mode of an even-length signal is treated as `c_{N/2} cos(Nα/2)`: it is kept
//! by even-order derivatives and dropped by odd-order ones.

use std::cell::RefCell;
use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Signed wavenumber of DFT bin `j` for length `n`; the Nyquist bin maps to `+n/2`.
#[inline]
pub fn wavenumber(j: usize, n: usize) -> i64 {
    if j <= n / 2 {
        j as i64
    } else {
        j as i64 - n as i64
    }
}

#[inline]
pub fn is_nyquist(j: usize, n: usize) -> bool {
    n.is_multiple_of(2) && j == n / 2
}

/// Normalized forward transform.
pub fn forward(samples: &[f64]) -> Vec<Complex64> {
    let n = samples.len();
    let mut buf: Vec<Complex64> = samples.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    if n == 0 {
        return buf;
    }
    let fft = PLANNER.with(|p| p.borrow_mut().plan_fft_forward(n));
    fft.process(&mut buf);
    let scale = 1.0 / n as f64;
    for c in &mut buf {
        *c *= scale;
    }
    buf
}

/// Inverse of [`forward`]; returns the real part.
pub fn inverse(coeffs: &[Complex64]) -> Vec<f64> {
    let n = coeffs.len();
    let mut buf = coeffs.to_vec();
    if n == 0 {
        return Vec::new();
    }
    let fft = PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(n));
    fft.process(&mut buf);
    buf.into_iter().map(|c| c.re).collect()
}

/// Applies a real or complex Fourier multiplier `m(k)` (Nyquist flagged by the bool).
pub fn apply_multiplier(samples: &[f64], mut m: impl FnMut(i64, bool) -> Complex64) -> Vec<f64> {
    let n = samples.len();
    let mut c = forward(samples);
    for (j, cj) in c.iter_mut().enumerate() {
        *cj *= m(wavenumber(j, n), is_nyquist(j, n));
    }
    inverse(&c)
}

/// `d^order f / dα^order` by the multiplier `(ik)^order`.
pub fn derivative(samples: &[f64], order: u32) -> Vec<f64> {
    if order == 0 {
        return samples.to_vec();
    }
    apply_multiplier(samples, |k, nyq| {
        if nyq && order % 2 == 1 {
            return Complex64::new(0.0, 0.0);
        }
        Complex64::new(0.0, k as f64).powu(order)
    })
}

/// Periodic Hilbert transform, multiplier `-i sgn(k)`.
pub fn hilbert(samples: &[f64]) -> Vec<f64> {
    apply_multiplier(samples, |k, nyq| {
        if nyq || k == 0 {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::new(0.0, -(k.signum() as f64))
        }
    })
}

/// Splits `f = mean + f̃` and returns `(mean, P)` where `P' = f̃` and `P(0) = 0`.
pub fn periodic_antiderivative(samples: &[f64]) -> (f64, Vec<f64>) {
    let n = samples.len();
    let mut c = forward(samples);
    let mean = c[0].re;
    c[0] = Complex64::new(0.0, 0.0);
    for (j, cj) in c.iter_mut().enumerate().skip(1) {
        if is_nyquist(j, n) {
            *cj = Complex64::new(0.0, 0.0);
        } else {
            *cj /= Complex64::new(0.0, wavenumber(j, n) as f64);
        }
    }
    let mut p = inverse(&c);
    let p0 = p[0];
    for v in &mut p {
        *v -= p0;
    }
    (mean, p)
}

/// Mean value `(1/2π) ∫ f dα` (trapezoid, spectrally accurate).
pub fn mean(samples: &[f64]) -> f64 {
    samples.iter().sum::<f64>() / samples.len() as f64
}

/// Trigonometric interpolant of a sampled signal, evaluable at any `α`.
#[derive(Debug, Clone)]
pub struct TrigInterpolant {
    coeffs: Vec<Complex64>,
}

impl TrigInterpolant {
    pub fn new(samples: &[f64]) -> Self {
        Self {
            coeffs: forward(samples),
        }
    }

    pub fn from_coefficients(coeffs: Vec<Complex64>) -> Self {
        Self { coeffs }
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn eval(&self, alpha: f64) -> f64 {
        let n = self.coeffs.len();
        let mut acc = self.coeffs[0].re;
        // positive modes carry their conjugate partners for real signals
        let step = Complex64::from_polar(1.0, alpha);
        let mut rot = step;
        for j in 1..n.div_ceil(2) {
            acc += 2.0 * (self.coeffs[j] * rot).re;
            rot *= step;
        }
        if n.is_multiple_of(2) && n > 1 {
            acc += self.coeffs[n / 2].re * (alpha * (n / 2) as f64).cos();
        }
        acc
    }

    /// Derivative of the interpolant at `α`.
    pub fn eval_derivative(&self, alpha: f64) -> f64 {
        let n = self.coeffs.len();
        let mut acc = 0.0;
        let step = Complex64::from_polar(1.0, alpha);
        let mut rot = step;
        for j in 1..n.div_ceil(2) {
            acc += 2.0 * (Complex64::new(0.0, j as f64) * self.coeffs[j] * rot).re;
            rot *= step;
        }
        acc
    }
}

/// Resamples a periodic signal to `m` equispaced nodes by zero-padding or truncation
/// in Fourier space.
pub fn resample(samples: &[f64], m: usize) -> Vec<f64> {
    let n = samples.len();
    if m == n {
        return samples.to_vec();
    }
    let c = forward(samples);
    let mut out = vec![Complex64::new(0.0, 0.0); m];
    let keep = n.min(m) / 2;
    out[0] = c[0];
    for k in 1..keep {
        out[k] = c[k];
        out[m - k] = c[n - k];
    }
    if n < m && n.is_multiple_of(2) {
        // split the Nyquist cosine symmetrically
        out[keep] = c[n / 2] * 0.5;
        out[m - keep] = c[n / 2] * 0.5;
    } else if m < n {
        out[keep] = Complex64::new(c[keep].re + c[n - keep].re, 0.0);
    }
    inverse(&out)
}

/// Equispaced nodes `2πj/n`.
pub fn nodes(n: usize) -> Vec<f64> {
    (0..n).map(|j| 2.0 * PI * j as f64 / n as f64).collect()
}
