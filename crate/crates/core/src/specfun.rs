//! Modified Bessel functions `I_n` and `K_n` of integer order and real argument.
//!
//! `I_0`, `I_1` come from the ascending power series for moderate arguments and
//! from the Hankel asymptotic expansion beyond [`I_SERIES_LIMIT`]. `K_0`, `K_1`
//! use the logarithmic series for `x <= 2` and Steed's continued fraction above.
//! Higher orders of `K` follow by forward recurrence; higher orders of `I` are
//! normalized through the Wronskian `I_n K_{n+1} + I_{n+1} K_n = 1/x`, with the
//! ratio `I_{n+1}/I_n` taken from its continued fraction.

use thiserror::Error;

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Above this argument `I_n` is evaluated from the asymptotic expansion.
const I_SERIES_LIMIT: f64 = 30.0;
/// Below this argument `K_0`, `K_1` use the logarithmic series.
const K_SERIES_LIMIT: f64 = 2.0;
/// Below this argument higher-order `I_n` is summed directly.
const I_HIGH_ORDER_SERIES_LIMIT: f64 = 0.5;
/// Above this argument the Wronskian route loses `K_n` to underflow.
const I_WRONSKIAN_LIMIT: f64 = 500.0;

const EPS: f64 = 1e-17;
const MAX_ITER: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecfunError {
    #[error("argument {x} outside the domain of {func}")]
    Domain { func: &'static str, x: f64 },
    #[error("{func}({order}, {x}) overflows double precision")]
    Overflow {
        func: &'static str,
        order: u32,
        x: f64,
    },
}

/// `I_n(x)` and `K_n(x)` at a single order and argument.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BesselPair {
    pub order: u32,
    pub argument: f64,
    pub i_value: f64,
    pub k_value: f64,
}

impl BesselPair {
    pub fn new(order: u32, argument: f64) -> Result<Self, SpecfunError> {
        Ok(Self {
            order,
            argument,
            i_value: bessel_i(order, argument)?,
            k_value: bessel_k(order, argument)?,
        })
    }
}

/// `I_0`, `I_1`, `K_0`, `K_1` at one argument, as needed by the kernel splittings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ik01 {
    pub i0: f64,
    pub i1: f64,
    pub k0: f64,
    pub k1: f64,
}

/// Modified Bessel function of the first kind `I_n(x)`, `x >= 0`.
pub fn bessel_i(n: u32, x: f64) -> Result<f64, SpecfunError> {
    if x.is_nan() || x < 0.0 {
        return Err(SpecfunError::Domain {
            func: "bessel_i",
            x,
        });
    }
    if x == 0.0 {
        return Ok(if n == 0 { 1.0 } else { 0.0 });
    }
    let value = if n <= 1 {
        if x <= I_SERIES_LIMIT {
            i_series(n, x)
        } else {
            i_asymptotic(n, x)
        }
    } else if x <= I_HIGH_ORDER_SERIES_LIMIT {
        i_series(n, x)
    } else if x <= I_WRONSKIAN_LIMIT {
        let kn = bessel_k(n, x)?;
        let kn1 = bessel_k(n + 1, x)?;
        let ratio = i_ratio(n, x);
        1.0 / (x * (kn1 + ratio * kn))
    } else {
        i_asymptotic(n, x)
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(SpecfunError::Overflow {
            func: "bessel_i",
            order: n,
            x,
        })
    }
}

/// Modified Bessel function of the second kind `K_n(x)`, `x > 0`.
pub fn bessel_k(n: u32, x: f64) -> Result<f64, SpecfunError> {
    if x.is_nan() || x <= 0.0 {
        return Err(SpecfunError::Domain {
            func: "bessel_k",
            x,
        });
    }
    let (k0, k1) = k01(x);
    if n == 0 {
        return Ok(k0);
    }
    let (mut prev, mut cur) = (k0, k1);
    for m in 1..n {
        let next = prev + (2.0 * m as f64 / x) * cur;
        prev = cur;
        cur = next;
        if !cur.is_finite() {
            break;
        }
    }
    if cur.is_finite() {
        Ok(cur)
    } else {
        Err(SpecfunError::Overflow {
            func: "bessel_k",
            order: n,
            x,
        })
    }
}

/// `I_n'(x)` composed as `I_{n-1} - (n/x) I_n` (`I_0' = I_1`).
pub fn bessel_i_prime(n: u32, x: f64) -> Result<f64, SpecfunError> {
    if n == 0 {
        return bessel_i(1, x);
    }
    if x == 0.0 {
        return Ok(if n == 1 { 0.5 } else { 0.0 });
    }
    Ok(bessel_i(n - 1, x)? - (n as f64 / x) * bessel_i(n, x)?)
}

/// `K_n'(x)` composed as `-K_{n-1} - (n/x) K_n` (`K_0' = -K_1`).
pub fn bessel_k_prime(n: u32, x: f64) -> Result<f64, SpecfunError> {
    if n == 0 {
        return Ok(-bessel_k(1, x)?);
    }
    Ok(-bessel_k(n - 1, x)? - (n as f64 / x) * bessel_k(n, x)?)
}

/// Unchecked `I_0, I_1, K_0, K_1` for the kernel hot loop. Requires `0 < x < 700`.
pub fn bessel_ik01(x: f64) -> Ik01 {
    debug_assert!(x > 0.0);
    if x <= K_SERIES_LIMIT {
        return small_ik01(x);
    }
    let (k0, k1) = k01_continued_fraction(x);
    let (i0, i1) = if x <= I_SERIES_LIMIT {
        i01_series(x)
    } else {
        (i_asymptotic(0, x), i_asymptotic(1, x))
    };
    Ik01 { i0, i1, k0, k1 }
}

/// Unchecked `K_0, K_1` for `x > 0`.
pub fn bessel_k01(x: f64) -> (f64, f64) {
    debug_assert!(x > 0.0);
    k01(x)
}

fn k01(x: f64) -> (f64, f64) {
    if x <= K_SERIES_LIMIT {
        let v = small_ik01(x);
        (v.k0, v.k1)
    } else {
        k01_continued_fraction(x)
    }
}

/// Ascending series `(x/2)^n Σ (x²/4)^k / (k! (n+k)!)`; all terms positive.
fn i_series(n: u32, x: f64) -> f64 {
    let half = 0.5 * x;
    let mut term = 1.0;
    for j in 1..=n {
        term *= half / j as f64;
    }
    if term == 0.0 {
        return 0.0;
    }
    let q = half * half;
    let mut sum = term;
    for k in 1..MAX_ITER {
        term *= q / (k as f64 * (k as f64 + n as f64));
        sum += term;
        if term < EPS * sum {
            break;
        }
    }
    sum
}

fn i01_series(x: f64) -> (f64, f64) {
    let half = 0.5 * x;
    let q = half * half;
    let (mut t0, mut t1) = (1.0, half);
    let (mut s0, mut s1) = (1.0, half);
    for k in 1..MAX_ITER {
        let kf = k as f64;
        t0 *= q / (kf * kf);
        t1 *= q / (kf * (kf + 1.0));
        s0 += t0;
        s1 += t1;
        if t0 < EPS * s0 && t1 < EPS * s1 {
            break;
        }
    }
    (s0, s1)
}

/// Hankel expansion `e^x / sqrt(2πx) Σ (-1)^k a_k(n) / x^k`.
fn i_asymptotic(n: u32, x: f64) -> f64 {
    let four_n2 = 4.0 * (n as f64) * (n as f64);
    let mut term = 1.0f64;
    let mut sum = 1.0f64;
    let mut last = f64::INFINITY;
    for k in 1..200 {
        let odd = (2 * k - 1) as f64;
        term *= -(four_n2 - odd * odd) / (k as f64 * 8.0 * x);
        if term.abs() >= last {
            break;
        }
        sum += term;
        last = term.abs();
        if term.abs() < EPS * sum.abs() {
            break;
        }
    }
    let log_prefactor = x - 0.5 * (2.0 * std::f64::consts::PI * x).ln();
    if log_prefactor > 709.0 {
        // split the exponential to push the overflow point as far as possible
        let half = (0.5 * log_prefactor).exp();
        half * sum * half
    } else {
        log_prefactor.exp() * sum
    }
}

/// Logarithmic series for `K_0`, `K_1` together with the `I_0`, `I_1` series.
fn small_ik01(x: f64) -> Ik01 {
    let half = 0.5 * x;
    let q = half * half;
    let log_term = half.ln() + EULER_GAMMA;

    // t0 = q^k/(k!)^2, t1 = q^k/(k!(k+1)!)
    let (mut t0, mut t1) = (1.0f64, 1.0f64);
    let (mut i0, mut i1s) = (1.0f64, 1.0f64);
    let mut harmonic = 0.0f64; // H_k
    let mut k0_series = 0.0f64;
    let mut k1_series = 1.0f64; // (H_0 + H_1) t1 at k = 0
    for k in 1..MAX_ITER {
        let kf = k as f64;
        t0 *= q / (kf * kf);
        t1 *= q / (kf * (kf + 1.0));
        harmonic += 1.0 / kf;
        let harmonic_next = harmonic + 1.0 / (kf + 1.0);
        i0 += t0;
        i1s += t1;
        k0_series += harmonic * t0;
        k1_series += (harmonic + harmonic_next) * t1;
        if t0 < EPS * i0 && t1 * harmonic_next < EPS * k1_series {
            break;
        }
    }
    let i1 = half * i1s;
    let k0 = -log_term * i0 + k0_series;
    let k1 = 1.0 / x + log_term * i1 - 0.5 * half * k1_series;
    Ik01 { i0, i1, k0, k1 }
}

/// Steed's continued-fraction evaluation of `K_0`, `K_1` for `x >= 2`.
fn k01_continued_fraction(x: f64) -> (f64, f64) {
    let mut b = 2.0 * (1.0 + x);
    let mut d = 1.0 / b;
    let mut h = d;
    let mut delh = d;
    let mut q1 = 0.0;
    let mut q2 = 1.0;
    let a1 = 0.25;
    let mut q = a1;
    let mut c = a1;
    let mut a = -a1;
    let mut s = 1.0 + q * delh;
    for i in 1..MAX_ITER {
        a -= 2.0 * i as f64;
        c = -a * c / (i as f64 + 1.0);
        let qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += 2.0;
        d = 1.0 / (b + a * d);
        delh *= b * d - 1.0;
        h += delh;
        let dels = q * delh;
        s += dels;
        if (dels / s).abs() < 1e-16 {
            break;
        }
    }
    h *= a1;
    let k0 = (std::f64::consts::PI / (2.0 * x)).sqrt() * (-x).exp() / s;
    let k1 = k0 * (x + 0.5 - h) / x;
    (k0, k1)
}

/// `I_{n+1}(x) / I_n(x)` by modified Lentz evaluation of
/// `1/(2(n+1)/x + 1/(2(n+2)/x + ...))`.
fn i_ratio(n: u32, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut f = TINY;
    let mut c = f;
    let mut d = 0.0f64;
    for j in 1..MAX_ITER {
        let b = 2.0 * (n as f64 + j as f64) / x;
        d += b;
        if d == 0.0 {
            d = TINY;
        }
        c = b + 1.0 / c;
        if c == 0.0 {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    f
}
