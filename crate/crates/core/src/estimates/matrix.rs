//! Sparse complex matrices, operator norms and the Hilbert-Schmidt comparisons.

use num_complex::Complex64;

use crate::error::{Result, ZyError};

/// Default relative residual of the top Ritz pair.
pub const POWER_TOL: f64 = 1e-8;
pub const POWER_MAX_ITER: usize = 50_000;
/// Smaller dimension up to which the Gram matrix is formed densely.
const DENSE_GRAM_DIM: usize = 512;

/// Triplet matrix with unique `(row, col)` positions.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<(u32, u32, Complex64)>,
}

impl SparseMatrix {
    /// Duplicate positions are summed; zeros are dropped.
    pub fn new(rows: usize, cols: usize, mut triplets: Vec<(u32, u32, Complex64)>) -> Result<Self> {
        if triplets.iter().any(|&(r, c, _)| r as usize >= rows || c as usize >= cols) {
            return Err(ZyError::Invalid("matrix entry out of range".into()));
        }
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut entries: Vec<(u32, u32, Complex64)> = Vec::with_capacity(triplets.len());
        for (r, c, v) in triplets {
            match entries.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => entries.push((r, c, v)),
            }
        }
        entries.retain(|e| e.2 != Complex64::new(0.0, 0.0));
        Ok(SparseMatrix { rows, cols, entries })
    }

    /// Row-major dense input.
    pub fn from_dense(rows: usize, cols: usize, data: &[Complex64]) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(ZyError::Invalid("dense data has wrong length".into()));
        }
        let trip = (0..rows)
            .flat_map(|r| (0..cols).map(move |c| (r as u32, c as u32, data[r * cols + c])))
            .collect();
        SparseMatrix::new(rows, cols, trip)
    }

    pub fn identity(d: usize) -> Self {
        let one = Complex64::new(1.0, 0.0);
        SparseMatrix { rows: d, cols: d, entries: (0..d as u32).map(|i| (i, i, one)).collect() }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[(u32, u32, Complex64)] {
        &self.entries
    }

    pub fn transpose(&self) -> SparseMatrix {
        let trip = self.entries.iter().map(|&(r, c, v)| (c, r, v)).collect();
        SparseMatrix::new(self.cols, self.rows, trip).expect("in range")
    }

    pub fn to_dense(&self) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.rows * self.cols];
        for &(r, c, v) in &self.entries {
            out[r as usize * self.cols + c as usize] = v;
        }
        out
    }

    pub fn apply(&self, x: &[Complex64], y: &mut [Complex64]) {
        y.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
        for &(r, c, v) in &self.entries {
            y[r as usize] += v * x[c as usize];
        }
    }

    pub fn apply_adjoint(&self, y: &[Complex64], x: &mut [Complex64]) {
        x.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
        for &(r, c, v) in &self.entries {
            x[c as usize] += v.conj() * y[r as usize];
        }
    }

    pub fn frobenius(&self) -> f64 {
        self.entries.iter().map(|e| e.2.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().map(|e| e.2.norm()).fold(0.0, f64::max)
    }

    fn row_sums(&self, f: impl Fn(Complex64) -> f64) -> Vec<f64> {
        let mut s = vec![0.0; self.rows];
        for &(r, _, v) in &self.entries {
            s[r as usize] += f(v);
        }
        s
    }

    fn col_sums(&self, f: impl Fn(Complex64) -> f64) -> Vec<f64> {
        let mut s = vec![0.0; self.cols];
        for &(_, c, v) in &self.entries {
            s[c as usize] += f(v);
        }
        s
    }

    /// `sqrt(max row l1 * max column l1)`.
    pub fn schur_test(&self) -> f64 {
        let r = self.row_sums(|v| v.norm()).into_iter().fold(0.0, f64::max);
        let c = self.col_sums(|v| v.norm()).into_iter().fold(0.0, f64::max);
        (r * c).sqrt()
    }

    /// Exact norm when every column, or every row, holds at most one entry.
    pub fn single_entry_norm(&self) -> Option<f64> {
        let mut per_col = vec![0u8; self.cols];
        let mut per_row = vec![0u8; self.rows];
        for &(r, c, _) in &self.entries {
            per_col[c as usize] = per_col[c as usize].saturating_add(1);
            per_row[r as usize] = per_row[r as usize].saturating_add(1);
        }
        if per_col.iter().all(|&k| k <= 1) {
            // T T^* is diagonal.
            return Some(self.row_sums(|v| v.norm_sqr()).into_iter().fold(0.0, f64::max).sqrt());
        }
        if per_row.iter().all(|&k| k <= 1) {
            return Some(self.col_sums(|v| v.norm_sqr()).into_iter().fold(0.0, f64::max).sqrt());
        }
        None
    }

    /// Dense Gram matrix of the smaller side: `T T^*` if rows <= cols, else `T^* T`.
    pub fn small_gram(&self) -> (usize, Vec<Complex64>) {
        let by_rows = self.rows <= self.cols;
        let d = if by_rows { self.rows } else { self.cols };
        let mut gram = vec![Complex64::new(0.0, 0.0); d * d];
        // group entries by the contracted index
        let other = if by_rows { self.cols } else { self.rows };
        let mut start = vec![0usize; other + 1];
        for &(r, c, _) in &self.entries {
            start[if by_rows { c } else { r } as usize + 1] += 1;
        }
        for k in 0..other {
            start[k + 1] += start[k];
        }
        let mut fill = start.clone();
        let mut list = vec![(0u32, Complex64::new(0.0, 0.0)); self.entries.len()];
        for &(r, c, v) in &self.entries {
            let (k, i) = if by_rows { (c, r) } else { (r, c) };
            let v = if by_rows { v } else { v.conj() };
            list[fill[k as usize]] = (i, v);
            fill[k as usize] += 1;
        }
        for k in 0..other {
            let group = &list[start[k]..start[k + 1]];
            for &(i, a) in group {
                for &(j, b) in group {
                    gram[i as usize * d + j as usize] += a * b.conj();
                }
            }
        }
        (d, gram)
    }
}

/// Operator norm with a certified bracket `lower <= ||T|| <= upper`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormEstimate {
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Closed form, no iteration.
    pub exact: bool,
}

impl NormEstimate {
    fn exact(v: f64) -> Self {
        NormEstimate { value: v, lower: v, upper: v, iterations: 0, converged: true, exact: true }
    }
}

fn start_vector(d: usize) -> Vec<Complex64> {
    let mut s = 0x2545_f491_4f6c_dd1du64;
    (0..d)
        .map(|_| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            Complex64::new(1.0 + 0.5 * ((s >> 11) as f64 / (1u64 << 53) as f64), 0.0)
        })
        .collect()
}

fn norm_sq(x: &[Complex64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum()
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Number of eigenvalues of the symmetric tridiagonal `(a, b)` below `x` (Sturm count).
fn sturm_below(a: &[f64], b: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut q = 1.0;
    for i in 0..a.len() {
        let off = if i == 0 { 0.0 } else { b[i - 1] * b[i - 1] / q };
        q = a[i] - x - off;
        if q == 0.0 {
            q = -f64::EPSILON * (a[i].abs() + x.abs()).max(f64::MIN_POSITIVE);
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// Largest eigenvalue of a symmetric tridiagonal by bisection.
fn tridiag_max(a: &[f64], b: &[f64]) -> f64 {
    let k = a.len();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..k {
        let r = if i > 0 { b[i - 1].abs() } else { 0.0 } + if i + 1 < k { b[i].abs() } else { 0.0 };
        lo = lo.min(a[i] - r);
        hi = hi.max(a[i] + r);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sturm_below(a, b, mid) == k {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Eigenvector of the tridiagonal for eigenvalue `theta`, by shifted inverse iteration.
fn tridiag_vector(a: &[f64], b: &[f64], theta: f64) -> Vec<f64> {
    let k = a.len();
    let shift = theta + 1e-10 * theta.abs().max(1e-300);
    let mut x = vec![1.0; k];
    for _ in 0..3 {
        // Thomas algorithm on (T - shift) y = x
        let mut c = vec![0.0; k];
        let mut d = vec![0.0; k];
        let mut piv = a[0] - shift;
        if piv == 0.0 {
            piv = f64::MIN_POSITIVE;
        }
        c[0] = if k > 1 { b[0] / piv } else { 0.0 };
        d[0] = x[0] / piv;
        for i in 1..k {
            let mut piv = a[i] - shift - b[i - 1] * c[i - 1];
            if piv == 0.0 {
                piv = f64::MIN_POSITIVE;
            }
            c[i] = if i + 1 < k { b[i] / piv } else { 0.0 };
            d[i] = (x[i] - b[i - 1] * d[i - 1]) / piv;
        }
        for i in (0..k - 1).rev() {
            d[i] -= c[i] * d[i + 1];
        }
        let n = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        x = d.iter().map(|v| v / n).collect();
    }
    x
}

const KRYLOV_DIM: usize = 60;

// Explicitly restarted Lanczos with full reorthogonalization for the top eigenvalue of a
// positive semidefinite operator. Returns (Rayleigh quotient, operator applications, converged).
fn lanczos_psd(d: usize, tol: f64, max_apply: usize, mut apply: impl FnMut(&[Complex64], &mut [Complex64])) -> (f64, usize, bool) {
    let zero = Complex64::new(0.0, 0.0);
    let mut v0 = start_vector(d);
    let n0 = norm_sq(&v0).sqrt();
    v0.iter_mut().for_each(|z| *z /= n0);
    let mut w = vec![zero; d];
    let mut best = 0.0f64;
    let mut applied = 0;
    while applied < max_apply {
        let m = KRYLOV_DIM.min(d).min(max_apply - applied).max(1);
        let mut basis = vec![v0.clone()];
        let (mut alpha, mut beta) = (Vec::new(), Vec::new());
        for j in 0..m {
            apply(&basis[j], &mut w);
            applied += 1;
            alpha.push(dot(&basis[j], &w).re);
            for _ in 0..2 {
                for q in &basis {
                    let c = dot(q, &w);
                    w.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
                }
            }
            let b = norm_sq(&w).sqrt();
            if j + 1 == m || b <= 1e-14 * alpha.iter().fold(0.0f64, |s, a| s.max(a.abs())) {
                break;
            }
            beta.push(b);
            basis.push(w.iter().map(|x| x / b).collect());
        }
        let theta = tridiag_max(&alpha, &beta);
        let s = tridiag_vector(&alpha, &beta, theta);
        let mut y = vec![zero; d];
        for (q, c) in basis.iter().zip(&s) {
            y.iter_mut().zip(q).for_each(|(a, b)| *a += b * c);
        }
        let ny = norm_sq(&y).sqrt();
        y.iter_mut().for_each(|z| *z /= ny);
        apply(&y, &mut w);
        applied += 1;
        let rq = dot(&y, &w).re;
        best = best.max(rq);
        if rq <= 0.0 {
            return (0.0, applied, true);
        }
        let res = y.iter().zip(&w).map(|(a, b)| (b - a * rq).norm_sqr()).sum::<f64>().sqrt();
        if res <= tol * rq {
            return (best, applied, true);
        }
        v0 = y;
    }
    (best, applied, false)
}

/// Operator norm `l^2(cols) -> l^2(rows)` by Lanczos on the Gram matrix of the smaller side.
pub fn op_norm(m: &SparseMatrix, tol: f64) -> NormEstimate {
    op_norm_with(m, tol, POWER_MAX_ITER)
}

/// As `op_norm`, with a cap on the number of Gram applications.
pub fn op_norm_with(m: &SparseMatrix, tol: f64, max_iter: usize) -> NormEstimate {
    if m.nnz() == 0 {
        return NormEstimate::exact(0.0);
    }
    if let Some(v) = m.single_entry_norm() {
        return NormEstimate::exact(v);
    }
    let upper = m.schur_test().min(m.frobenius());
    let small = m.rows.min(m.cols);
    let (lambda, iterations, converged) = if small <= DENSE_GRAM_DIM {
        let (d, gram) = m.small_gram();
        lanczos_psd(d, tol, max_iter, |x, z| {
            for (i, zi) in z.iter_mut().enumerate() {
                let row = &gram[i * d..(i + 1) * d];
                *zi = row.iter().zip(x).map(|(a, b)| a * b).sum();
            }
        })
    } else if m.rows < m.cols {
        let mut y = vec![Complex64::new(0.0, 0.0); m.cols];
        lanczos_psd(m.rows, tol, max_iter, |x, z| {
            m.apply_adjoint(x, &mut y);
            m.apply(&y, z);
        })
    } else {
        let mut y = vec![Complex64::new(0.0, 0.0); m.rows];
        lanczos_psd(m.cols, tol, max_iter, |x, z| {
            m.apply(x, &mut y);
            m.apply_adjoint(&y, z);
        })
    };
    let lower = lambda.max(0.0).sqrt().min(upper);
    NormEstimate { value: lower, lower, upper, iterations, converged, exact: false }
}

/// `||T||` against `||T T^*||_HS`; always `op^2 <= hs_gram`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HsVsOp {
    pub op: f64,
    pub hs_gram: f64,
}

impl HsVsOp {
    pub fn sqrt_hs(&self) -> f64 {
        self.hs_gram.sqrt()
    }

    /// `||T T^*||_HS / ||T||^2`, at least 1.
    pub fn ratio(&self) -> f64 {
        self.hs_gram / (self.op * self.op)
    }

    pub fn holds(&self, slack: f64) -> bool {
        self.op * self.op <= self.hs_gram * (1.0 + slack) + slack
    }
}

pub fn hs_vs_op(m: &SparseMatrix) -> HsVsOp {
    let op = op_norm(m, POWER_TOL).value;
    // T T^* and T^* T share their nonzero spectrum, hence their Frobenius norm.
    let (_, gram) = m.small_gram();
    let hs_gram = gram.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    HsVsOp { op, hs_gram }
}

/// Diagonal plus Hilbert-Schmidt off-diagonal bound for `||T^* T||`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatrixSchurBound {
    /// `max_c sum_r |T_rc|^2`
    pub diagonal: f64,
    /// `(sum_{c != c'} |(T^* T)_{cc'}|^2)^{1/2}`
    pub off_diagonal: f64,
    pub rhs: f64,
    /// `||T||^2` by power iteration.
    pub norm_sq: f64,
}

impl MatrixSchurBound {
    pub fn holds(&self, slack: f64) -> bool {
        self.norm_sq <= self.rhs * (1.0 + slack) + slack
    }
}

pub fn schur_matrix_bound(m: &SparseMatrix) -> MatrixSchurBound {
    let d = m.cols;
    let gram = dense_col_gram(m);
    let mut diagonal: f64 = 0.0;
    let mut off = 0.0;
    for i in 0..d {
        for j in 0..d {
            let g = gram[i * d + j];
            if i == j {
                diagonal = diagonal.max(g.re);
            } else {
                off += g.norm_sqr();
            }
        }
    }
    let off_diagonal = off.sqrt();
    let n = op_norm(m, POWER_TOL).value;
    MatrixSchurBound { diagonal, off_diagonal, rhs: diagonal + off_diagonal, norm_sq: n * n }
}

fn dense_col_gram(m: &SparseMatrix) -> Vec<Complex64> {
    let d = m.cols;
    let mut by_row: Vec<Vec<(u32, Complex64)>> = vec![Vec::new(); m.rows];
    for &(r, c, v) in &m.entries {
        by_row[r as usize].push((c, v));
    }
    let mut gram = vec![Complex64::new(0.0, 0.0); d * d];
    for row in by_row {
        for &(i, a) in &row {
            for &(j, b) in &row {
                gram[i as usize * d + j as usize] += a.conj() * b;
            }
        }
    }
    gram
}
