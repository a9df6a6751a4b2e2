//! Laplace and modified Helmholtz layer kernels on marker curves, their
//! logarithmic splittings, and the Kress rule for `ln(2|sin((α−α')/2)|)`.
//!
//! Helmholtz kernels use `G(r) = (1/2π)K₀(μr)`, the fundamental solution of
//! `−Δ + μ²`. Laplace kernels use `G(r) = (1/2π)ln r`. Normal derivatives are
//! taken at the source point with the outward normal of the source curve.

use std::f64::consts::PI;

use thiserror::Error;

use crate::curve::{geometry_of, CurveError, MarkerCurve};
use crate::linalg::DenseMatrix;
use crate::specfun::{bessel_ik01, bessel_k01, EULER_GAMMA};

const INV_2PI: f64 = 1.0 / (2.0 * PI);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KernelError {
    #[error("Helmholtz parameter mu must be positive, got {0}")]
    Domain(f64),
    #[error(transparent)]
    Curve(#[from] CurveError),
    #[error("curves intersect or touch (distance {0:e})")]
    Contact(f64),
}

/// Kress weights `q_j` for the kernel `ln(2|sin((α_i−α_j)/2)|)` on `2m` nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct KressRule {
    pub m: usize,
    pub weights: Vec<f64>,
}

impl KressRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    #[inline]
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        let n = self.weights.len();
        self.weights[(i + n - j) % n]
    }
}

/// `q_j = −(π/m)Σ_{k=1}^{m−1} cos(kjπ/m)/k − (−1)^j π/(2m²)`.
pub fn kress_weights(m: usize) -> KressRule {
    assert!(m >= 2, "Kress rule needs m >= 2");
    let n = 2 * m;
    let mf = m as f64;
    let weights = (0..n)
        .map(|j| {
            let series: f64 = (1..m)
                .map(|k| ((k * j) as f64 * PI / mf).cos() / k as f64)
                .sum();
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            -(PI / mf) * series - sign * PI / (2.0 * mf * mf)
        })
        .collect();
    KressRule { m, weights }
}

/// `∫₀^{2π} f(α') ln(2|sin((α_i−α')/2)|) dα' ≈ Σ_j q_{|i−j|} f_j`.
pub fn singular_log_quadrature(rule: &KressRule, f_samples: &[f64], i: usize) -> f64 {
    assert_eq!(f_samples.len(), rule.len());
    f_samples
        .iter()
        .enumerate()
        .map(|(j, f)| rule.weight(i, j) * f)
        .sum()
}

/// `ln(2|sin(πd/n)|)` for node offsets `d = 0..n`; entry 0 is unused.
fn log_sin_table(n: usize) -> Vec<f64> {
    (0..n)
        .map(|d| {
            if d == 0 {
                0.0
            } else {
                (2.0 * (PI * d as f64 / n as f64).sin().abs()).ln()
            }
        })
        .collect()
}

/// Pointwise data of a curve needed for kernel evaluation.
#[derive(Debug, Clone)]
pub struct Panel {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub nx: Vec<f64>,
    pub ny: Vec<f64>,
    pub speed: Vec<f64>,
    pub kappa: Vec<f64>,
}

impl Panel {
    pub fn new(curve: &MarkerCurve) -> Result<Self, CurveError> {
        let g = geometry_of(curve)?;
        Ok(Self {
            x: curve.x().to_vec(),
            y: curve.y().to_vec(),
            nx: g.normal.iter().map(|n| n[0]).collect(),
            ny: g.normal.iter().map(|n| n[1]).collect(),
            speed: g.speed,
            kappa: g.kappa,
        })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Trapezoid weight `2π/N`.
    pub fn h(&self) -> f64 {
        2.0 * PI / self.len() as f64
    }

    /// Smallest distance between markers of two curves.
    pub fn min_distance(&self, other: &Panel) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..self.len() {
            for j in 0..other.len() {
                best = best.min((self.x[i] - other.x[j]).hypot(self.y[i] - other.y[j]));
            }
        }
        best
    }
}

/// Which points a kernel is evaluated at.
#[derive(Debug, Clone, Copy)]
pub enum Targets<'a> {
    /// Targets are the source markers themselves (weakly singular case).
    Same,
    /// Targets are the markers of a disjoint curve.
    Other(&'a Panel),
}

/// Kernel matrix `K(α_i, α'_j) = log_part·ln(2|sin((α_i−α'_j)/2)|) + smooth_part`,
/// target-major. For disjoint curves the log part is identically zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitKernel {
    pub rows: usize,
    pub cols: usize,
    pub log_part: Vec<f64>,
    pub smooth_part: Vec<f64>,
}

impl SplitKernel {
    fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            log_part: vec![0.0; rows * cols],
            smooth_part: vec![0.0; rows * cols],
        }
    }

    #[inline]
    pub fn log(&self, i: usize, j: usize) -> f64 {
        self.log_part[i * self.cols + j]
    }

    #[inline]
    pub fn smooth(&self, i: usize, j: usize) -> f64 {
        self.smooth_part[i * self.cols + j]
    }

    /// Full kernel value off the diagonal.
    pub fn recombine(&self, i: usize, j: usize) -> f64 {
        if self.rows == self.cols && i == j {
            return f64::NAN;
        }
        let n = self.cols;
        let d = (i + n - j) % n;
        let ls = (2.0 * (PI * d as f64 / n as f64).sin().abs()).ln();
        self.log(i, j) * ls + self.smooth(i, j)
    }

    /// Nyström matrix: Kress weights on the log part, trapezoid on the smooth
    /// part, each column scaled by `source_weight[j]` when given.
    pub fn nystrom(&self, rule: Option<&KressRule>, source_weight: Option<&[f64]>) -> DenseMatrix {
        let h = 2.0 * PI / self.cols as f64;
        DenseMatrix::from_fn(self.rows, self.cols, |i, j| {
            let mut v = h * self.smooth(i, j);
            if let Some(rule) = rule {
                v += rule.weight(i, j) * self.log(i, j);
            }
            match source_weight {
                Some(w) => v * w[j],
                None => v,
            }
        })
    }
}

/// Helmholtz single- and double-layer kernels for one (target, source) ordering.
#[derive(Debug, Clone)]
pub struct HelmholtzPair {
    pub single: SplitKernel,
    pub double: SplitKernel,
}

/// Single-layer kernel `(1/2π)K₀(μr)` (per unit arclength of the source).
pub fn split_helmholtz_single(
    src: &Panel,
    tgt: Targets,
    mu: f64,
) -> Result<SplitKernel, KernelError> {
    Ok(helmholtz(src, tgt, mu)?.single)
}

/// Double-layer kernel `∂G/∂n' s_α(α') = μ h K₁(μr)` with
/// `h = (x − x')·n' s_α(α')/(2πr)`.
pub fn split_helmholtz_double(
    src: &Panel,
    tgt: Targets,
    mu: f64,
) -> Result<SplitKernel, KernelError> {
    Ok(helmholtz(src, tgt, mu)?.double)
}

/// Both Helmholtz kernels from a single pass over the node pairs.
pub fn helmholtz(src: &Panel, tgt: Targets, mu: f64) -> Result<HelmholtzPair, KernelError> {
    if !(mu > 0.0) {
        return Err(KernelError::Domain(mu));
    }
    match tgt {
        Targets::Same => Ok(helmholtz_self(src, mu)),
        Targets::Other(t) => {
            let (ts, _) = helmholtz_cross(src, t, mu, false)?;
            Ok(ts)
        }
    }
}

/// Taper `Q(7, ρ²/10)` on the coefficients `I₀(ρ)`, `I₁(ρ)` of the logarithm.
/// It equals 1 up to `O(ρ¹⁴)`, so the remainder stays smooth, and it keeps
/// `I(ρ)·ln` from growing like `e^ρ` on large curves, where the split would
/// otherwise cancel catastrophically.
fn split_window(rho: f64) -> f64 {
    let x = rho * rho / 10.0;
    if x < 1e-3 {
        return 1.0;
    }
    let (mut term, mut sum) = (1.0, 1.0);
    for k in 1..7 {
        term *= x / k as f64;
        sum += term;
    }
    (-x).exp() * sum
}

/// Self-interaction kernels for several `μ` at once, sharing distances and
/// using `r_ij = r_ji` to halve the Bessel evaluations.
pub fn helmholtz_self_multi(p: &Panel, mus: &[f64]) -> Result<Vec<HelmholtzPair>, KernelError> {
    if let Some(&bad) = mus.iter().find(|m| !(**m > 0.0)) {
        return Err(KernelError::Domain(bad));
    }
    let n = p.len();
    let logs = log_sin_table(n);
    let mut out: Vec<HelmholtzPair> = mus
        .iter()
        .map(|_| HelmholtzPair {
            single: SplitKernel::zeros(n, n),
            double: SplitKernel::zeros(n, n),
        })
        .collect();
    for i in 0..n {
        for j in i + 1..n {
            let dx = p.x[i] - p.x[j];
            let dy = p.y[i] - p.y[j];
            let r = dx.hypot(dy);
            let ls = logs[(i + n - j) % n];
            // h for target i / source j and for target j / source i
            let h_ij = (dx * p.nx[j] + dy * p.ny[j]) * p.speed[j] * INV_2PI / r;
            let h_ji = -(dx * p.nx[i] + dy * p.ny[i]) * p.speed[i] * INV_2PI / r;
            for (mu, pair) in mus.iter().zip(out.iter_mut()) {
                let b = bessel_ik01(mu * r);
                let w = split_window(mu * r);
                let s_log = -INV_2PI * b.i0 * w;
                let s_smooth = INV_2PI * (b.k0 + b.i0 * w * ls);
                let d_log = mu * b.i1 * w;
                let d_smooth = mu * (b.k1 - b.i1 * w * ls);
                let ij = i * n + j;
                let ji = j * n + i;
                pair.single.log_part[ij] = s_log;
                pair.single.log_part[ji] = s_log;
                pair.single.smooth_part[ij] = s_smooth;
                pair.single.smooth_part[ji] = s_smooth;
                pair.double.log_part[ij] = d_log * h_ij;
                pair.double.log_part[ji] = d_log * h_ji;
                pair.double.smooth_part[ij] = d_smooth * h_ij;
                pair.double.smooth_part[ji] = d_smooth * h_ji;
            }
        }
        for (mu, pair) in mus.iter().zip(out.iter_mut()) {
            let ii = i * n + i;
            pair.single.log_part[ii] = -INV_2PI;
            pair.single.smooth_part[ii] = -INV_2PI * ((mu * p.speed[i] / 2.0).ln() + EULER_GAMMA);
            pair.double.log_part[ii] = 0.0;
            pair.double.smooth_part[ii] = -p.kappa[i] * p.speed[i] / (4.0 * PI);
        }
    }
    Ok(out)
}

fn helmholtz_self(p: &Panel, mu: f64) -> HelmholtzPair {
    helmholtz_self_multi(p, &[mu])
        .expect("mu checked")
        .pop()
        .expect("one kernel")
}

/// Kernels between two disjoint curves in both orderings, sharing `K₀`, `K₁`.
///
/// Returns `(target = tgt / source = src, target = src / source = tgt)`; the
/// second is only filled when `both` is set.
pub fn helmholtz_cross(
    src: &Panel,
    tgt: &Panel,
    mu: f64,
    both: bool,
) -> Result<(HelmholtzPair, HelmholtzPair), KernelError> {
    if !(mu > 0.0) {
        return Err(KernelError::Domain(mu));
    }
    let (nt, ns) = (tgt.len(), src.len());
    let mut fwd = HelmholtzPair {
        single: SplitKernel::zeros(nt, ns),
        double: SplitKernel::zeros(nt, ns),
    };
    let (br, bc) = if both { (ns, nt) } else { (0, 0) };
    let mut bwd = HelmholtzPair {
        single: SplitKernel::zeros(br, bc),
        double: SplitKernel::zeros(br, bc),
    };
    let mut min_r = f64::INFINITY;
    for i in 0..nt {
        for j in 0..ns {
            let dx = tgt.x[i] - src.x[j];
            let dy = tgt.y[i] - src.y[j];
            let r = dx.hypot(dy);
            min_r = min_r.min(r);
            let (k0, k1) = bessel_k01(mu * r);
            let g = INV_2PI * k0;
            let mk1 = mu * k1 * INV_2PI / r;
            fwd.single.smooth_part[i * ns + j] = g;
            fwd.double.smooth_part[i * ns + j] =
                mk1 * (dx * src.nx[j] + dy * src.ny[j]) * src.speed[j];
            if both {
                bwd.single.smooth_part[j * nt + i] = g;
                bwd.double.smooth_part[j * nt + i] =
                    -mk1 * (dx * tgt.nx[i] + dy * tgt.ny[i]) * tgt.speed[i];
            }
        }
    }
    if !(min_r > 0.0) {
        return Err(KernelError::Contact(min_r));
    }
    Ok((fwd, bwd))
}

/// Laplace double-layer kernel `(1/2π)(x' − x)·n' s_α(α')/r²`; diagonal `κ s_α/(4π)`.
pub fn laplace_double_kernel(p: &Panel, i: usize, j: usize) -> f64 {
    if i == j {
        return p.kappa[i] * p.speed[i] / (4.0 * PI);
    }
    let dx = p.x[j] - p.x[i];
    let dy = p.y[j] - p.y[i];
    INV_2PI * (dx * p.nx[j] + dy * p.ny[j]) * p.speed[j] / (dx * dx + dy * dy)
}

/// Trapezoid Nyström matrix of the Laplace double layer on a curve.
pub fn laplace_double_matrix(p: &Panel) -> DenseMatrix {
    let h = p.h();
    DenseMatrix::from_fn(p.len(), p.len(), |i, j| h * laplace_double_kernel(p, i, j))
}

/// Laplace single-layer kernel `(1/2π)ln r` split as
/// `(1/2π)ln(2|sin|) + (1/2π)ln(r/(2|sin|))`; smooth diagonal `(1/2π)ln s_α`.
pub fn split_laplace_single(p: &Panel) -> SplitKernel {
    let n = p.len();
    let logs = log_sin_table(n);
    let mut k = SplitKernel::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let ij = i * n + j;
            k.log_part[ij] = INV_2PI;
            k.smooth_part[ij] = if i == j {
                INV_2PI * p.speed[i].ln()
            } else {
                let r = (p.x[i] - p.x[j]).hypot(p.y[i] - p.y[j]);
                INV_2PI * (r.ln() - logs[(i + n - j) % n])
            };
        }
    }
    k
}

/// Laplace double-layer potential with unit density at an off-curve point.
pub fn laplace_double_at(p: &Panel, point: [f64; 2]) -> f64 {
    let h = p.h();
    (0..p.len())
        .map(|j| {
            let dx = p.x[j] - point[0];
            let dy = p.y[j] - point[1];
            h * INV_2PI * (dx * p.nx[j] + dy * p.ny[j]) * p.speed[j] / (dx * dx + dy * dy)
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::specfun::{bessel_i, bessel_k};

    fn circle_panel(n: usize, r: f64) -> Panel {
        Panel::new(&MarkerCurve::circle(n, r, [0.0, 0.0]).unwrap()).unwrap()
    }

    fn ellipse_panel(n: usize) -> Panel {
        let c = MarkerCurve::from_parametrization(n, |t| (2.1 * t.cos(), 1.9 * t.sin())).unwrap();
        Panel::new(&crate::curve::equal_arclength_reparametrize(&c, 1e-14).unwrap()).unwrap()
    }

    /// Gauss–Legendre on `[a, b]` split into geometrically graded panels toward `a`.
    fn graded_quad(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
        const X: [f64; 8] = [
            0.0950125098376374,
            0.2816035507792589,
            0.4580167776572274,
            0.6178762444026438,
            0.7554044083550030,
            0.8656312023878318,
            0.9445750230732326,
            0.9894009349916499,
        ];
        const W: [f64; 8] = [
            0.1894506104550685,
            0.1826034150449236,
            0.1691565193950025,
            0.1495959888165767,
            0.1246289712555339,
            0.0951585116824928,
            0.0622535239386479,
            0.0271524594117541,
        ];
        let mut edges = vec![a];
        let mut w = (b - a) * 1e-15;
        while a + w < b {
            edges.push(a + w);
            w *= 2.0;
        }
        edges.push(b);
        let mut total = 0.0;
        for e in edges.windows(2) {
            let (lo, hi) = (e[0], e[1]);
            // subdivide each graded panel to keep high accuracy on smooth parts
            let sub = 8;
            for s in 0..sub {
                let l = lo + (hi - lo) * s as f64 / sub as f64;
                let r = lo + (hi - lo) * (s + 1) as f64 / sub as f64;
                let mid = 0.5 * (l + r);
                let half = 0.5 * (r - l);
                for (x, wt) in X.iter().zip(W) {
                    total += wt * half * (f(mid - half * x) + f(mid + half * x));
                }
            }
        }
        total
    }

    #[test]
    fn weights_sum_to_zero() {
        for m in [2, 3, 8, 64, 128] {
            let rule = kress_weights(m);
            assert!(rule.weights.iter().sum::<f64>().abs() < 1e-14);
        }
    }

    #[test]
    fn weights_integrate_cosines() {
        let m = 64;
        let rule = kress_weights(m);
        for k in 1..m {
            let f: Vec<f64> = (0..2 * m)
                .map(|j| (k as f64 * PI * j as f64 / m as f64).cos())
                .collect();
            let q = singular_log_quadrature(&rule, &f, 0);
            assert!((q + PI / k as f64).abs() < 1e-12, "k={k}");
        }
        // the Nyquist mode is still exact; cos((m+1)α) aliases onto cos((m−1)α)
        let f: Vec<f64> = (0..2 * m).map(|j| (PI * j as f64).cos()).collect();
        assert!((singular_log_quadrature(&rule, &f, 0) + PI / m as f64).abs() < 1e-12);
        let k = (m + 1) as f64;
        let f: Vec<f64> = (0..2 * m)
            .map(|j| (k * PI * j as f64 / m as f64).cos())
            .collect();
        let err = (singular_log_quadrature(&rule, &f, 0) + PI / k).abs();
        let aliased = 2.0 * PI / (k * k - 2.0 * k);
        assert!((err - aliased).abs() < 1e-12, "{err} {aliased}");
    }

    #[test]
    fn shifted_cosine_at_off_zero_node() {
        let m = 64;
        let rule = kress_weights(m);
        let i = 17;
        let ai = PI * i as f64 / m as f64;
        let f: Vec<f64> = (0..2 * m)
            .map(|j| (3.0 * (PI * j as f64 / m as f64 - ai)).cos())
            .collect();
        assert!((singular_log_quadrature(&rule, &f, i) + PI / 3.0).abs() < 1e-12);
    }

    #[test]
    fn exp_cos_against_graded_quadrature() {
        // ∫ ln(2 sin(t/2)) e^{cos t} dt, symmetric about π
        let oracle = 2.0 * graded_quad(|t| (2.0 * (t / 2.0).sin()).ln() * t.cos().exp(), 0.0, PI);
        let rule = kress_weights(32);
        let f: Vec<f64> = (0..64)
            .map(|j| (PI * j as f64 / 32.0).cos().exp())
            .collect();
        let q = singular_log_quadrature(&rule, &f, 0);
        assert!((q - oracle).abs() < 1e-10, "{q} {oracle}");
        // cross-check against the Fourier series −2π Σ I_k(1)/k
        let series: f64 = (1..30)
            .map(|k| bessel_i(k, 1.0).unwrap() / k as f64)
            .sum::<f64>()
            * -2.0
            * PI;
        assert!((series - oracle).abs() < 1e-10);
    }

    #[test]
    fn helmholtz_single_recombination() {
        let p = circle_panel(64, 2.0);
        let k = split_helmholtz_single(&p, Targets::Same, 1.0).unwrap();
        for &(i, j) in &[(0, 1), (3, 40), (63, 0), (10, 42)] {
            let r = (p.x[i] - p.x[j]).hypot(p.y[i] - p.y[j]);
            let direct = bessel_k(0, r).unwrap() / (2.0 * PI);
            assert!((k.recombine(i, j) - direct).abs() < 1e-13);
        }
    }

    #[test]
    fn helmholtz_single_diagonal_is_the_limit() {
        // smooth part along α' = α + ε is analytic; extrapolate ε → 0
        let (radius, mu, n) = (2.0, 1.0, 256);
        let s = radius;
        let smooth_at = |eps: f64| {
            let r = 2.0 * radius * (eps / 2.0).sin();
            let z = mu * r;
            let ls = (2.0 * (eps / 2.0).sin()).ln();
            INV_2PI * (bessel_k(0, z).unwrap() + bessel_i(0, z).unwrap() * ls)
        };
        let (e1, e2) = (1e-3, 5e-4);
        let extrap = (4.0 * smooth_at(e2) - smooth_at(e1)) / 3.0;
        let k = split_helmholtz_single(&circle_panel(n, radius), Targets::Same, mu).unwrap();
        assert!((k.smooth(5, 5) - extrap).abs() < 1e-8);
        let closed = -INV_2PI * ((mu * s / 2.0).ln() + EULER_GAMMA);
        assert!((k.smooth(5, 5) - closed).abs() < 1e-15);
    }

    #[test]
    fn helmholtz_double_recombination_and_diagonal() {
        let p = ellipse_panel(64);
        // for larger μr the split cancels against I₁(μr), costing a few digits
        for (mu, tol) in [(1.0, 1e-13), (0.1, 1e-13), (3.0, 1e-11)] {
            let k = split_helmholtz_double(&p, Targets::Same, mu).unwrap();
            for &(i, j) in &[(0, 1), (3, 40), (63, 0), (10, 42)] {
                let dx = p.x[i] - p.x[j];
                let dy = p.y[i] - p.y[j];
                let r = dx.hypot(dy);
                let h = (dx * p.nx[j] + dy * p.ny[j]) * p.speed[j] / (2.0 * PI * r);
                let direct = mu * h * bessel_k(1, mu * r).unwrap();
                assert!((k.recombine(i, j) - direct).abs() < tol);
            }
        }
        let c = circle_panel(32, 2.0);
        for mu in [0.1, 1.0] {
            let k = split_helmholtz_double(&c, Targets::Same, mu).unwrap();
            // −κ s_α /(4π) on a circle of radius R = −1/(4π), whatever μ
            assert!((k.smooth(7, 7) + 1.0 / (4.0 * PI)).abs() < 1e-13);
        }
    }

    #[test]
    fn double_diagonal_matches_neighbor_limit() {
        let (radius, mu) = (2.0, 0.7);
        let g2 = |eps: f64| {
            let r = 2.0 * radius * (eps / 2.0).sin();
            // (x − x')·n' = −r²/(2R) on a circle
            let h = -r * r / (2.0 * radius) * radius / (2.0 * PI * r);
            let ls = (2.0 * (eps / 2.0).sin()).ln();
            mu * h * (bessel_k(1, mu * r).unwrap() - bessel_i(1, mu * r).unwrap() * ls)
        };
        let extrap = (4.0 * g2(5e-4) - g2(1e-3)) / 3.0;
        assert!((extrap + 1.0 / (4.0 * PI)).abs() < 1e-8);
    }

    #[test]
    fn disjoint_curves_have_no_log_part() {
        let inner = circle_panel(32, 2.0);
        let outer = circle_panel(32, 13.0);
        assert!((inner.min_distance(&outer) - 11.0).abs() < 1e-12);
        let (fwd, bwd) = helmholtz_cross(&inner, &outer, 0.1, true).unwrap();
        assert!(fwd.single.log_part.iter().all(|v| *v == 0.0));
        assert!(fwd.double.smooth_part.iter().all(|v| v.is_finite()));
        let single = split_helmholtz_single(&outer, Targets::Other(&inner), 0.1).unwrap();
        assert_eq!(single, bwd.single);
        let double = split_helmholtz_double(&outer, Targets::Other(&inner), 0.1).unwrap();
        for (a, b) in double.smooth_part.iter().zip(&bwd.double.smooth_part) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn non_positive_mu_is_rejected() {
        let p = circle_panel(8, 1.0);
        assert!(matches!(
            split_helmholtz_single(&p, Targets::Same, 0.0),
            Err(KernelError::Domain(_))
        ));
        assert!(matches!(
            helmholtz_self_multi(&p, &[1.0, -1.0]),
            Err(KernelError::Domain(_))
        ));
    }

    #[test]
    fn laplace_double_on_circle_is_constant() {
        let radius = 2.5;
        let p = circle_panel(32, radius);
        let want = radius / (4.0 * PI * radius);
        for i in 0..32 {
            for j in 0..32 {
                assert!((laplace_double_kernel(&p, i, j) - want).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn laplace_double_antipodal_symmetry() {
        let p = ellipse_panel(64);
        for &(i, j) in &[(0, 5), (7, 40), (20, 21)] {
            let a = laplace_double_kernel(&p, i, j);
            let b = laplace_double_kernel(&p, (i + 32) % 64, (j + 32) % 64);
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn gauss_identity() {
        let p = ellipse_panel(128);
        let row = laplace_double_matrix(&p).row_sums();
        assert!(row.iter().all(|v| (v - 0.5).abs() < 1e-10));
        assert!((laplace_double_at(&p, [0.3, -0.2]) - 1.0).abs() < 1e-10);
        assert!(laplace_double_at(&p, [5.0, 1.0]).abs() < 1e-10);
    }

    #[test]
    fn laplace_single_circle_symbol() {
        // S[cos lα'](α) = −(R/2l) cos lα with (1/2π) ln r and arclength measure
        let (radius, n) = (2.0, 64);
        let p = circle_panel(n, radius);
        let s = split_laplace_single(&p).nystrom(Some(&kress_weights(n / 2)), Some(&p.speed));
        for l in 1..6 {
            let f: Vec<f64> = (0..n)
                .map(|j| (l as f64 * 2.0 * PI * j as f64 / n as f64).cos())
                .collect();
            let out = s.matvec(&f);
            for (j, o) in out.iter().enumerate() {
                let want = -radius / (2.0 * l as f64) * f[j];
                assert!((o - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn helmholtz_single_circle_symbol() {
        // S_μ[cos lα] = R I_l(μR) K_l(μR) cos lα on a circle
        for (radius, mu, n) in [
            (2.0, 1.0, 64),
            (13.0, 1.0, 256),
            (13.0, 1.0, 128),
            (10.0, 3.0, 256),
        ] {
            circle_symbol_case(radius, mu, n);
        }
    }

    fn circle_symbol_case(radius: f64, mu: f64, n: usize) {
        let p = circle_panel(n, radius);
        let s = split_helmholtz_single(&p, Targets::Same, mu)
            .unwrap()
            .nystrom(Some(&kress_weights(n / 2)), Some(&p.speed));
        for l in 0..5u32 {
            let f: Vec<f64> = (0..n)
                .map(|j| (l as f64 * 2.0 * PI * j as f64 / n as f64).cos())
                .collect();
            let symbol =
                radius * bessel_i(l, mu * radius).unwrap() * bessel_k(l, mu * radius).unwrap();
            let out = s.matvec(&f);
            for (j, o) in out.iter().enumerate() {
                assert!(
                    (o - symbol * f[j]).abs() < 1e-12,
                    "R={radius} mu={mu} l={l}"
                );
            }
        }
    }

    #[test]
    fn kress_converges_super_algebraically() {
        let p_ref = ellipse_panel(512);
        let g = |n: usize| {
            let p = ellipse_panel(n);
            let s = split_helmholtz_single(&p, Targets::Same, 1.0)
                .unwrap()
                .nystrom(Some(&kress_weights(n / 2)), Some(&p.speed));
            s.row_sums()[0]
        };
        let reference = {
            let s = split_helmholtz_single(&p_ref, Targets::Same, 1.0)
                .unwrap()
                .nystrom(Some(&kress_weights(256)), Some(&p_ref.speed));
            s.row_sums()[0]
        };
        let errs: Vec<f64> = [8usize, 16, 32]
            .iter()
            .map(|&n| (g(n) - reference).abs())
            .collect();
        assert!(
            errs[1] < errs[0] / 100.0 && errs[2] < errs[1] / 1e4,
            "{errs:?}"
        );
    }
}
