//! Dense matrices and the linear solvers used by the Nyström systems.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("GMRES stalled after {iterations} iterations (relative residual {residual:e}, tolerance {tol:e})")]
    NotConverged {
        iterations: usize,
        residual: f64,
        tol: f64,
    },
    #[error("matrix is singular to working precision")]
    Singular,
    #[error("dimension mismatch: matrix {rows}x{cols}, vector {len}")]
    Dimension {
        rows: usize,
        cols: usize,
        len: usize,
    },
    #[error("non-finite entry in linear system")]
    NonFinite,
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn add_to(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] += v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn scale(&mut self, a: f64) {
        for v in &mut self.data {
            *v *= a;
        }
    }

    /// Adds `a·block` into the sub-matrix whose top-left corner is `(r0, c0)`.
    pub fn add_block(&mut self, r0: usize, c0: usize, block: &DenseMatrix, a: f64) {
        assert!(
            r0 + block.rows <= self.rows && c0 + block.cols <= self.cols,
            "block out of range"
        );
        for i in 0..block.rows {
            let dst =
                &mut self.data[(r0 + i) * self.cols + c0..(r0 + i) * self.cols + c0 + block.cols];
            for (d, s) in dst.iter_mut().zip(block.row(i)) {
                *d += a * s;
            }
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.rows];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.cols);
        assert_eq!(y.len(), self.rows);
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = dot(self.row(i), x);
        }
    }

    /// Sum of each row.
    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|i| self.row(i).iter().sum()).collect()
    }

    fn to_nalgebra(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmresOptions {
    /// Relative residual target `‖b − Ax‖ ≤ tol·‖b‖`.
    pub tol: f64,
    pub max_iter: usize,
    pub restart: usize,
}

impl Default for GmresOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 500,
            restart: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Relative residual `‖b − Ax‖/‖b‖` recomputed from the returned `x`.
    pub residual: f64,
}

/// Restarted GMRES with modified Gram–Schmidt Arnoldi and Givens rotations.
pub fn gmres(
    a: &DenseMatrix,
    b: &[f64],
    x0: Option<&[f64]>,
    opts: GmresOptions,
) -> Result<Solution, SolveError> {
    let n = a.rows();
    if a.cols() != n || b.len() != n {
        return Err(SolveError::Dimension {
            rows: a.rows(),
            cols: a.cols(),
            len: b.len(),
        });
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(SolveError::NonFinite);
    }
    let bnorm = norm2(b);
    let mut x = match x0 {
        Some(x0) if x0.len() == n => x0.to_vec(),
        _ => vec![0.0; n],
    };
    if bnorm == 0.0 {
        return Ok(Solution {
            x: vec![0.0; n],
            iterations: 0,
            residual: 0.0,
        });
    }
    let restart = opts.restart.clamp(1, n.max(1));
    let mut total = 0;
    let mut r = residual_vec(a, b, &x);
    let mut rel = norm2(&r) / bnorm;

    while rel > opts.tol && total < opts.max_iter {
        let beta = norm2(&r);
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(restart + 1);
        basis.push(r.iter().map(|v| v / beta).collect());
        // Hessenberg columns, each of length j + 2
        let mut h: Vec<Vec<f64>> = Vec::with_capacity(restart);
        let mut cs: Vec<f64> = Vec::with_capacity(restart);
        let mut sn: Vec<f64> = Vec::with_capacity(restart);
        let mut g = vec![0.0; restart + 1];
        g[0] = beta;
        let mut k = 0;
        while k < restart && total < opts.max_iter {
            let mut w = a.matvec(&basis[k]);
            let mut col = vec![0.0; k + 2];
            for (i, v) in basis.iter().enumerate() {
                let hij = dot(&w, v);
                col[i] = hij;
                for (wj, vj) in w.iter_mut().zip(v) {
                    *wj -= hij * vj;
                }
            }
            let wnorm = norm2(&w);
            col[k + 1] = wnorm;
            for i in 0..k {
                let t = cs[i] * col[i] + sn[i] * col[i + 1];
                col[i + 1] = -sn[i] * col[i] + cs[i] * col[i + 1];
                col[i] = t;
            }
            let denom = col[k].hypot(col[k + 1]);
            let (c, s) = if denom == 0.0 {
                (1.0, 0.0)
            } else {
                (col[k] / denom, col[k + 1] / denom)
            };
            col[k] = denom;
            col[k + 1] = 0.0;
            g[k + 1] = -s * g[k];
            g[k] *= c;
            cs.push(c);
            sn.push(s);
            h.push(col);
            total += 1;
            k += 1;
            if g[k].abs() / bnorm <= opts.tol || wnorm == 0.0 {
                break;
            }
            basis.push(w.iter().map(|v| v / wnorm).collect());
        }
        // back substitution on the k×k triangle
        let mut yk = vec![0.0; k];
        for i in (0..k).rev() {
            let mut s = g[i];
            for j in i + 1..k {
                s -= h[j][i] * yk[j];
            }
            if h[i][i] == 0.0 {
                return Err(SolveError::Singular);
            }
            yk[i] = s / h[i][i];
        }
        for (j, yj) in yk.iter().enumerate() {
            for (xi, vi) in x.iter_mut().zip(&basis[j]) {
                *xi += yj * vi;
            }
        }
        r = residual_vec(a, b, &x);
        let new_rel = norm2(&r) / bnorm;
        if !new_rel.is_finite() {
            return Err(SolveError::NonFinite);
        }
        if new_rel >= rel && k < restart {
            // lucky breakdown without progress: nothing more to gain
            rel = new_rel;
            break;
        }
        rel = new_rel;
    }

    if rel > opts.tol {
        return Err(SolveError::NotConverged {
            iterations: total,
            residual: rel,
            tol: opts.tol,
        });
    }
    Ok(Solution {
        x,
        iterations: total,
        residual: rel,
    })
}

fn residual_vec(a: &DenseMatrix, b: &[f64], x: &[f64]) -> Vec<f64> {
    let ax = a.matvec(x);
    b.iter().zip(ax).map(|(bi, ai)| bi - ai).collect()
}

/// Dense LU solve with partial pivoting.
pub fn lu_solve(a: &DenseMatrix, b: &[f64]) -> Result<Solution, SolveError> {
    if a.rows() != a.cols() || b.len() != a.rows() {
        return Err(SolveError::Dimension {
            rows: a.rows(),
            cols: a.cols(),
            len: b.len(),
        });
    }
    let lu = a.to_nalgebra().lu();
    let rhs = nalgebra::DVector::from_column_slice(b);
    let x = lu.solve(&rhs).ok_or(SolveError::Singular)?;
    let x: Vec<f64> = x.iter().copied().collect();
    if x.iter().any(|v| !v.is_finite()) {
        return Err(SolveError::Singular);
    }
    let bnorm = norm2(b);
    let res = norm2(&residual_vec(a, b, &x));
    let residual = if bnorm > 0.0 { res / bnorm } else { res };
    Ok(Solution {
        x,
        iterations: 0,
        residual,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    #[default]
    Gmres,
    Lu,
}

/// Dispatches to GMRES or LU; LU results are checked against `tol` as well.
pub fn solve(
    kind: SolverKind,
    a: &DenseMatrix,
    b: &[f64],
    x0: Option<&[f64]>,
    opts: GmresOptions,
) -> Result<Solution, SolveError> {
    match kind {
        SolverKind::Gmres => gmres(a, b, x0, opts),
        SolverKind::Lu => {
            let s = lu_solve(a, b)?;
            if s.residual > opts.tol {
                return Err(SolveError::NotConverged {
                    iterations: 0,
                    residual: s.residual,
                    tol: opts.tol,
                });
            }
            Ok(s)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn second_kind(n: usize, seed: u64) -> DenseMatrix {
        // identity plus a smooth compact-like perturbation
        let mut state = seed;
        let mut next = move || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let mut a = DenseMatrix::from_fn(n, n, |_, _| next() / n as f64);
        for i in 0..n {
            a.add_to(i, i, 1.0);
        }
        a
    }

    #[test]
    fn gmres_matches_lu() {
        let a = second_kind(60, 7);
        let b: Vec<f64> = (0..60).map(|i| (i as f64 * 0.3).sin()).collect();
        let g = gmres(&a, &b, None, GmresOptions::default()).unwrap();
        let l = lu_solve(&a, &b).unwrap();
        assert!(g.residual <= 1e-10);
        let diff =
            g.x.iter()
                .zip(&l.x)
                .map(|(p, q)| (p - q).abs())
                .fold(0.0, f64::max);
        assert!(diff < 1e-9, "{diff}");
        assert!(g.iterations < 60);
    }

    #[test]
    fn gmres_restarts() {
        let a = second_kind(80, 3);
        let b = vec![1.0; 80];
        let opts = GmresOptions {
            restart: 3,
            ..GmresOptions::default()
        };
        let s = gmres(&a, &b, None, opts).unwrap();
        assert!(s.residual <= 1e-10);
    }

    #[test]
    fn gmres_reports_stall() {
        // a rotation needs n iterations; cap it below that
        let n = 20;
        let a = DenseMatrix::from_fn(n, n, |i, j| if (i + 1) % n == j { 1.0 } else { 0.0 });
        let mut b = vec![0.0; n];
        b[0] = 1.0;
        let opts = GmresOptions {
            max_iter: 5,
            restart: 5,
            tol: 1e-10,
        };
        assert!(matches!(
            gmres(&a, &b, None, opts),
            Err(SolveError::NotConverged { iterations: 5, .. })
        ));
    }

    #[test]
    fn zero_rhs_and_warm_start() {
        let a = second_kind(10, 1);
        let s = gmres(&a, &[0.0; 10], None, GmresOptions::default()).unwrap();
        assert!(s.x.iter().all(|&v| v == 0.0));
        let b: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let exact = lu_solve(&a, &b).unwrap();
        let warm = gmres(&a, &b, Some(&exact.x), GmresOptions::default()).unwrap();
        assert!(warm.iterations <= 1);
    }

    #[test]
    fn singular_lu() {
        let a = DenseMatrix::zeros(3, 3);
        assert!(matches!(
            lu_solve(&a, &[1.0, 0.0, 0.0]),
            Err(SolveError::Singular)
        ));
    }

    #[test]
    fn add_block_and_matvec() {
        let mut a = DenseMatrix::zeros(4, 4);
        a.add_block(1, 2, &DenseMatrix::identity(2), 3.0);
        assert_eq!(a.get(1, 2), 3.0);
        assert_eq!(a.get(2, 3), 3.0);
        assert_eq!(a.matvec(&[1.0, 1.0, 1.0, 1.0]), vec![0.0, 3.0, 3.0, 0.0]);
        assert_eq!(a.row_sums(), vec![0.0, 3.0, 3.0, 0.0]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn gmres_residual_contract(seed in 0u64..1000, n in 5usize..40) {
            let a = second_kind(n, seed);
            let b: Vec<f64> = (0..n).map(|i| ((i as u64 ^ seed) as f64).cos()).collect();
            let s = gmres(&a, &b, None, GmresOptions::default()).unwrap();
            let r = norm2(&residual_vec(&a, &b, &s.x)) / norm2(&b);
            prop_assert!(r <= 1e-10);
        }
    }
}
