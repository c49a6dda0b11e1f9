//! Dense row-major matrices and a row-pivoted LU solver for the bordered
//! (saddle-point) systems the models produce.
//!
//! The factorization is blocked: each panel of [`LU_BLOCK`] columns is
//! eliminated with partial pivoting, then the trailing submatrix is updated
//! with a single GEMM call. A pivot whose magnitude falls below
//! `1e-12 * max|A|` aborts the factorization with [`Error::SingularMatrix`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative pivot threshold: a pivot below `PIVOT_TOLERANCE * max|A|` is singular.
pub const PIVOT_TOLERANCE: f64 = 1e-12;

const LU_BLOCK: usize = 64;

/// Dense real matrix stored row-major. Every entry is finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMatrix")]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Deserialize)]
struct RawMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl TryFrom<RawMatrix> for DenseMatrix {
    type Error = Error;

    fn try_from(raw: RawMatrix) -> Result<Self> {
        DenseMatrix::from_row_major(raw.rows, raw.cols, raw.data)
    }
}

impl DenseMatrix {
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::DimensionMismatch(format!(
                "matrix must be at least 1x1, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "matrix entry ({}, {})",
                pos / cols,
                pos % cols
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from equally sized rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::DimensionMismatch(format!(
                    "row {i} has {} entries, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Self::from_row_major(rows.len(), cols, data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix must be at least 1x1");
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = Self::zeros(n, n);
        for (i, &v) in values.iter().enumerate() {
            m.data[i * n + i] = v;
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
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
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }

    /// Exact mirror-entry equality.
    pub fn is_symmetric(&self) -> bool {
        self.is_square()
            && (0..self.rows).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }

    /// Copies the lower triangle onto the upper one.
    pub fn mirror_lower(&mut self) {
        debug_assert!(self.is_square());
        let n = self.rows;
        for i in 0..n {
            for j in 0..i {
                self.data[j * n + i] = self.data[i * n + j];
            }
        }
    }

    /// Returns a copy with rows reordered: row `k` of the result is row `order[k]`.
    pub fn select_rows(&self, order: &[usize]) -> Self {
        let mut data = Vec::with_capacity(order.len() * self.cols);
        for &i in order {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: order.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} matrix times vector of length {}",
                self.rows,
                self.cols,
                x.len()
            )));
        }
        Ok(self.row_iter().map(|r| dot(r, x)).collect())
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

/// Computes `A * Bᵀ`, where `A` is `m x k` and `B` is `p x k`.
pub fn matmul_transpose_b(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.cols != b.cols {
        return Err(Error::DimensionMismatch(format!(
            "A*B^T with A {}x{} and B {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let mut c = DenseMatrix::zeros(a.rows, b.rows);
    // SAFETY: all three buffers are distinct allocations sized to the
    // dimensions and strides passed here.
    unsafe {
        matrixmultiply::dgemm(
            a.rows,
            a.cols,
            b.rows,
            1.0,
            a.data.as_ptr(),
            a.cols as isize,
            1,
            b.data.as_ptr(),
            1,
            b.cols as isize,
            0.0,
            c.data.as_mut_ptr(),
            c.cols as isize,
            1,
        );
    }
    Ok(c)
}

/// Quality certificate of one dense solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub residual_inf_norm: f64,
    /// Ratio of largest to smallest absolute pivot; an estimate only.
    pub condition_estimate: Option<f64>,
    pub singular: bool,
}

/// Row-pivoted LU factors `P A = L U`, with unit-diagonal `L` and `U` packed
/// into one buffer.
#[derive(Debug, Clone)]
pub struct LuFactors {
    n: usize,
    lu: Vec<f64>,
    /// `perm[k]` is the original row placed at position `k`.
    perm: Vec<usize>,
    min_pivot: f64,
    max_pivot: f64,
}

impl LuFactors {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn condition_estimate(&self) -> f64 {
        self.max_pivot / self.min_pivot
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.n;
        if rhs.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "system of size {n} with right-hand side of length {}",
                rhs.len()
            )));
        }
        let mut x: Vec<f64> = self.perm.iter().map(|&p| rhs[p]).collect();
        for i in 1..n {
            let row = &self.lu[i * n..i * n + i];
            x[i] -= dot(row, &x[..i]);
        }
        for i in (0..n).rev() {
            let row = &self.lu[i * n..(i + 1) * n];
            let s = dot(&row[i + 1..], &x[i + 1..]);
            x[i] = (x[i] - s) / row[i];
        }
        Ok(x)
    }
}

/// Factors a square matrix with partial (row) pivoting.
pub fn lu_factor(a: &DenseMatrix) -> Result<LuFactors> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "LU of a non-square {}x{} matrix",
            a.rows, a.cols
        )));
    }
    let n = a.rows;
    let threshold = PIVOT_TOLERANCE * a.max_abs();
    let mut lu = a.data.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut min_pivot = f64::INFINITY;
    let mut max_pivot = 0.0_f64;

    let mut k0 = 0;
    while k0 < n {
        let kend = (k0 + LU_BLOCK).min(n);

        // Panel: columns k0..kend, rows k0..n.
        for j in k0..kend {
            let (mut p, mut best) = (j, lu[j * n + j].abs());
            for i in j + 1..n {
                let v = lu[i * n + j].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if !(best >= threshold) || best == 0.0 {
                return Err(Error::SingularMatrix {
                    step: j,
                    pivot: best,
                    threshold,
                });
            }
            min_pivot = min_pivot.min(best);
            max_pivot = max_pivot.max(best);
            if p != j {
                swap_rows(&mut lu, n, p, j);
                perm.swap(p, j);
            }
            let pivot = lu[j * n + j];
            let (head, tail) = lu.split_at_mut((j + 1) * n);
            let pivot_row = &head[j * n + j + 1..j * n + kend];
            for row in tail.chunks_exact_mut(n) {
                let l = row[j] / pivot;
                row[j] = l;
                if l != 0.0 {
                    for (dst, &u) in row[j + 1..kend].iter_mut().zip(pivot_row) {
                        *dst -= l * u;
                    }
                }
            }
        }

        if kend < n {
            // U12 := L11^{-1} A12 (unit lower triangular, forward substitution).
            for j in k0..kend {
                let (head, tail) = lu.split_at_mut((j + 1) * n);
                let src = &head[j * n + kend..(j + 1) * n];
                for i in j + 1..kend {
                    let row = &mut tail[(i - j - 1) * n..(i - j) * n];
                    let l = row[j];
                    if l != 0.0 {
                        for (dst, &u) in row[kend..].iter_mut().zip(src) {
                            *dst -= l * u;
                        }
                    }
                }
            }
            // A22 -= L21 * U12.
            let rows = n - kend;
            let depth = kend - k0;
            let base = lu.as_mut_ptr();
            // SAFETY: L21 occupies rows kend.., columns k0..kend; U12 rows
            // k0..kend, columns kend..; A22 rows kend.., columns kend... The
            // three regions are disjoint and inside the n*n buffer.
            unsafe {
                matrixmultiply::dgemm(
                    rows,
                    depth,
                    rows,
                    -1.0,
                    base.add(kend * n + k0),
                    n as isize,
                    1,
                    base.add(k0 * n + kend),
                    n as isize,
                    1,
                    1.0,
                    base.add(kend * n + kend),
                    n as isize,
                    1,
                );
            }
        }
        k0 = kend;
    }

    Ok(LuFactors {
        n,
        lu,
        perm,
        min_pivot,
        max_pivot,
    })
}

fn swap_rows(data: &mut [f64], n: usize, a: usize, b: usize) {
    let (lo, hi) = (a.min(b), a.max(b));
    let (head, tail) = data.split_at_mut(hi * n);
    head[lo * n..(lo + 1) * n].swap_with_slice(&mut tail[..n]);
}

/// Solves `A x = rhs` by row-pivoted elimination.
pub fn solve_dense(a: &DenseMatrix, rhs: &[f64]) -> Result<(Vec<f64>, SolveReport)> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "solve with non-square {}x{} matrix",
            a.rows, a.cols
        )));
    }
    if rhs.len() != a.rows {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} system with right-hand side of length {}",
            a.rows,
            a.cols,
            rhs.len()
        )));
    }
    if rhs.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("right-hand side".into()));
    }
    let lu = lu_factor(a)?;
    let x = lu.solve(rhs)?;
    let report = SolveReport {
        residual_inf_norm: residual_inf_norm(a, &x, rhs)?,
        condition_estimate: Some(lu.condition_estimate()),
        singular: false,
    };
    Ok((x, report))
}

/// `max_i |(A x - rhs)_i|`.
pub fn residual_inf_norm(a: &DenseMatrix, x: &[f64], rhs: &[f64]) -> Result<f64> {
    if x.len() != a.cols || rhs.len() != a.rows {
        return Err(Error::DimensionMismatch(format!(
            "residual of {}x{} system with x of length {} and rhs of length {}",
            a.rows,
            a.cols,
            x.len(),
            rhs.len()
        )));
    }
    Ok(a.row_iter()
        .zip(rhs)
        .map(|(row, b)| (dot(row, x) - b).abs())
        .fold(0.0, f64::max))
}

/// Builds `[[H, border], [borderᵀ, 0]]`.
pub fn assemble_bordered(h: &DenseMatrix, border: &[f64]) -> Result<DenseMatrix> {
    if !h.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "bordered block must be square, got {}x{}",
            h.rows, h.cols
        )));
    }
    let m = h.rows;
    if border.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "border of length {} for a {m}x{m} block",
            border.len()
        )));
    }
    let n = m + 1;
    let mut data = Vec::with_capacity(n * n);
    for (row, &c) in h.row_iter().zip(border) {
        data.extend_from_slice(row);
        data.push(c);
    }
    data.extend_from_slice(border);
    data.push(0.0);
    DenseMatrix::from_row_major(n, n, data)
}
