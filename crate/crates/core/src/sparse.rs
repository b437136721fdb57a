//! CSR sparse-matrix kernels: storage, products, normalization, elementwise
//! powers and vertical concatenation. Everything else in the crate is built
//! on top of these.
//!
//! Matrices are immutable after construction and safe to share across
//! threads. Products that parallelize internally (`gram`, `spmm`) assemble
//! their output in a fixed row order, so results do not depend on the
//! number of worker threads.

use crate::error::{Error, Result};
use rayon::prelude::*;

/// Entries with absolute value below this are dropped by sparse products,
/// keeping Gram matrices from densifying with numerical noise.
pub const PRUNE_EPS: f64 = 1e-15;

/// Dense signal vector; length must match the dimension it is multiplied
/// against.
pub type DenseVector = Vec<f64>;

/// Compressed sparse row matrix. Rows are column-sorted and explicit zeros
/// are never stored.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<u32>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Build from raw CSR arrays, checking the structural invariants.
    pub fn from_csr(
        n_rows: usize,
        n_cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<u32>,
        values: Vec<f64>,
    ) -> Result<Self> {
        let m = Self {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        };
        m.validate()?;
        Ok(m)
    }

    /// Build from (row, col, value) triplets. Triplets may be unsorted;
    /// zero values are dropped. Duplicate coordinates are an error.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        mut triplets: Vec<(u32, u32, f64)>,
    ) -> Result<Self> {
        triplets.retain(|&(_, _, v)| v != 0.0);
        triplets.sort_unstable_by_key(|&(r, c, _)| (r, c));
        for w in triplets.windows(2) {
            if w[0].0 == w[1].0 && w[0].1 == w[1].1 {
                return Err(Error::Parameter(format!(
                    "duplicate entry at ({}, {})",
                    w[0].0, w[0].1
                )));
            }
        }
        let mut row_offsets = vec![0usize; n_rows + 1];
        let mut col_indices = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        for (r, c, v) in triplets {
            row_offsets[r as usize + 1] += 1;
            col_indices.push(c);
            values.push(v);
        }
        for i in 0..n_rows {
            row_offsets[i + 1] += row_offsets[i];
        }
        Self::from_csr(n_rows, n_cols, row_offsets, col_indices, values)
    }

    /// Build from a dense row-major matrix (test fixtures, oracles).
    pub fn from_dense(rows: &[Vec<f64>]) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, |r| r.len());
        let mut triplets = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n_cols {
                return Err(Error::DimensionMismatch {
                    context: "from_dense",
                    expected: n_cols,
                    found: row.len(),
                });
            }
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    triplets.push((i as u32, j as u32, v));
                }
            }
        }
        Self::from_triplets(n_rows, n_cols, triplets)
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n_rows: n,
            n_cols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n as u32).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[u32] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Iterate the (col, value) entries of one row, in ascending column order.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (u32, f64)> + '_ {
        let lo = self.row_offsets[i];
        let hi = self.row_offsets[i + 1];
        self.col_indices[lo..hi]
            .iter()
            .copied()
            .zip(self.values[lo..hi].iter().copied())
    }

    pub fn row_nnz(&self, i: usize) -> usize {
        self.row_offsets[i + 1] - self.row_offsets[i]
    }

    /// Check the CSR structural invariants.
    pub fn validate(&self) -> Result<()> {
        if self.row_offsets.len() != self.n_rows + 1 {
            return Err(Error::DimensionMismatch {
                context: "row_offsets length",
                expected: self.n_rows + 1,
                found: self.row_offsets.len(),
            });
        }
        if self.row_offsets[0] != 0
            || *self.row_offsets.last().unwrap() != self.values.len()
            || self.col_indices.len() != self.values.len()
        {
            return Err(Error::Parameter("inconsistent CSR offsets".into()));
        }
        for i in 0..self.n_rows {
            let (lo, hi) = (self.row_offsets[i], self.row_offsets[i + 1]);
            if lo > hi {
                return Err(Error::Parameter("decreasing row offsets".into()));
            }
            for k in lo..hi {
                if self.col_indices[k] as usize >= self.n_cols {
                    return Err(Error::Parameter(format!(
                        "column index {} out of range",
                        self.col_indices[k]
                    )));
                }
                if k > lo && self.col_indices[k] <= self.col_indices[k - 1] {
                    return Err(Error::Parameter(format!(
                        "row {i} columns not strictly increasing"
                    )));
                }
                if self.values[k] == 0.0 || !self.values[k].is_finite() {
                    return Err(Error::Parameter(format!(
                        "stored value {} at row {i}",
                        self.values[k]
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.n_cols]; self.n_rows];
        for i in 0..self.n_rows {
            for (j, v) in self.row(i) {
                out[i][j as usize] = v;
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let mut row_offsets = vec![0usize; self.n_cols + 1];
        for &c in &self.col_indices {
            row_offsets[c as usize + 1] += 1;
        }
        for i in 0..self.n_cols {
            row_offsets[i + 1] += row_offsets[i];
        }
        let mut cursor = row_offsets.clone();
        let mut col_indices = vec![0u32; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for i in 0..self.n_rows {
            for (j, v) in self.row(i) {
                let slot = cursor[j as usize];
                col_indices[slot] = i as u32;
                values[slot] = v;
                cursor[j as usize] += 1;
            }
        }
        Self {
            n_rows: self.n_cols,
            n_cols: self.n_rows,
            row_offsets,
            col_indices,
            values,
        }
    }

    /// y = A x
    pub fn mul_vec(&self, x: &[f64]) -> Result<DenseVector> {
        if x.len() != self.n_cols {
            return Err(Error::DimensionMismatch {
                context: "mul_vec",
                expected: self.n_cols,
                found: x.len(),
            });
        }
        let mut y = vec![0.0; self.n_rows];
        for i in 0..self.n_rows {
            let mut acc = 0.0;
            for (j, v) in self.row(i) {
                acc += v * x[j as usize];
            }
            y[i] = acc;
        }
        Ok(y)
    }

    /// y = x^T A (row vector times matrix)
    pub fn vec_mul(&self, x: &[f64]) -> Result<DenseVector> {
        if x.len() != self.n_rows {
            return Err(Error::DimensionMismatch {
                context: "vec_mul",
                expected: self.n_rows,
                found: x.len(),
            });
        }
        let mut y = vec![0.0; self.n_cols];
        for i in 0..self.n_rows {
            let xi = x[i];
            if xi == 0.0 {
                continue;
            }
            let (lo, hi) = (self.row_offsets[i], self.row_offsets[i + 1]);
            for k in lo..hi {
                y[self.col_indices[k] as usize] += xi * self.values[k];
            }
        }
        Ok(y)
    }

    /// Elementwise power with exponent s > 0. The sparsity pattern is
    /// preserved exactly; s = 1 returns a copy.
    pub fn hadamard_power(&self, s: f64) -> Result<Self> {
        if !(s > 0.0) {
            return Err(Error::Parameter(format!(
                "hadamard exponent must be positive, got {s}"
            )));
        }
        let mut out = self.clone();
        if s != 1.0 {
            for v in &mut out.values {
                if *v < 0.0 {
                    return Err(Error::Parameter(
                        "hadamard_power requires non-negative entries".into(),
                    ));
                }
                *v = v.powf(s);
            }
        }
        Ok(out)
    }
}

/// Vertically stack matrices sharing a column count. Block b's row r
/// becomes row (offset_b + r) of the result; values are unchanged.
pub fn vconcat(blocks: &[SparseMatrix]) -> Result<SparseMatrix> {
    let n_cols = match blocks.first() {
        Some(b) => b.n_cols,
        None => return Err(Error::Parameter("vconcat of zero blocks".into())),
    };
    let mut n_rows = 0;
    let mut nnz = 0;
    for b in blocks {
        if b.n_cols != n_cols {
            return Err(Error::DimensionMismatch {
                context: "vconcat",
                expected: n_cols,
                found: b.n_cols,
            });
        }
        n_rows += b.n_rows;
        nnz += b.nnz();
    }
    let mut row_offsets = Vec::with_capacity(n_rows + 1);
    let mut col_indices = Vec::with_capacity(nnz);
    let mut values = Vec::with_capacity(nnz);
    row_offsets.push(0);
    for b in blocks {
        let base = *row_offsets.last().unwrap();
        row_offsets.extend(b.row_offsets[1..].iter().map(|&o| base + o));
        col_indices.extend_from_slice(&b.col_indices);
        values.extend_from_slice(&b.values);
    }
    Ok(SparseMatrix {
        n_rows,
        n_cols,
        row_offsets,
        col_indices,
        values,
    })
}

/// Diagnostics from [`bidegree_normalize`].
#[derive(Debug, Clone, Copy, Default)]
pub struct NormalizeDiagnostics {
    pub empty_rows: usize,
    pub empty_cols: usize,
}

/// Scale each entry by the inverse square roots of its raw row and column
/// sums: out_ij = R_ij / (sqrt(row_sum_i) * sqrt(col_sum_j)).
///
/// Rows or columns with zero sum carry no entries, so they are skipped;
/// their count is reported in the diagnostics.
pub fn bidegree_normalize(r: &SparseMatrix) -> Result<(SparseMatrix, NormalizeDiagnostics)> {
    for &v in &r.values {
        if v < 0.0 {
            return Err(Error::Parameter(
                "bidegree_normalize requires non-negative entries".into(),
            ));
        }
    }
    let mut row_sums = vec![0.0; r.n_rows];
    let mut col_sums = vec![0.0; r.n_cols];
    for i in 0..r.n_rows {
        for (j, v) in r.row(i) {
            row_sums[i] += v;
            col_sums[j as usize] += v;
        }
    }
    let diag = NormalizeDiagnostics {
        empty_rows: row_sums.iter().filter(|&&s| s == 0.0).count(),
        empty_cols: col_sums.iter().filter(|&&s| s == 0.0).count(),
    };
    let inv_row: Vec<f64> = row_sums
        .iter()
        .map(|&s| if s > 0.0 { 1.0 / s.sqrt() } else { 0.0 })
        .collect();
    let inv_col: Vec<f64> = col_sums
        .iter()
        .map(|&s| if s > 0.0 { 1.0 / s.sqrt() } else { 0.0 })
        .collect();
    let mut out = r.clone();
    for i in 0..out.n_rows {
        let (lo, hi) = (out.row_offsets[i], out.row_offsets[i + 1]);
        for k in lo..hi {
            out.values[k] *= inv_row[i] * inv_col[out.col_indices[k] as usize];
        }
    }
    Ok((out, diag))
}

/// Gram product Rt^T Rt. The upper triangle is computed and mirrored, so
/// the output is symmetric bit-exactly. Entries below [`PRUNE_EPS`] are
/// dropped. `nnz_cap`, when given, aborts the computation once the output
/// would exceed that many stored entries.
pub fn gram(rt: &SparseMatrix, nnz_cap: Option<usize>) -> Result<SparseMatrix> {
    let n = rt.n_cols;
    let t = rt.transpose(); // rows of Rt^T

    let running = std::sync::atomic::AtomicUsize::new(0);
    let cap = nnz_cap.unwrap_or(usize::MAX);
    let capped = std::sync::atomic::AtomicBool::new(false);

    // Upper-triangle rows, computed independently per output row.
    let upper: Vec<Vec<(u32, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            if capped.load(std::sync::atomic::Ordering::Relaxed) {
                return Vec::new();
            }
            let mut acc = vec![0.0; n];
            let mut touched: Vec<u32> = Vec::new();
            for (u, v) in t.row(i) {
                let u = u as usize;
                let (lo, hi) = (rt.row_offsets[u], rt.row_offsets[u + 1]);
                // Only columns >= i contribute to the upper triangle.
                let start = lo + rt.col_indices[lo..hi].partition_point(|&c| (c as usize) < i);
                for k in start..hi {
                    let j = rt.col_indices[k] as usize;
                    if acc[j] == 0.0 {
                        touched.push(j as u32);
                    }
                    acc[j] += v * rt.values[k];
                }
            }
            touched.sort_unstable();
            let mut row = Vec::with_capacity(touched.len());
            let mut kept = 0usize;
            for &j in &touched {
                let v = acc[j as usize];
                if v.abs() >= PRUNE_EPS {
                    row.push((j, v));
                    kept += if j as usize == i { 1 } else { 2 };
                }
            }
            let total = running.fetch_add(kept, std::sync::atomic::Ordering::Relaxed) + kept;
            if total > cap {
                capped.store(true, std::sync::atomic::Ordering::Relaxed);
            }
            row
        })
        .collect();

    let total = running.load(std::sync::atomic::Ordering::Relaxed);
    if total > cap {
        return Err(Error::NnzCap { nnz: total, cap });
    }

    // Mirror the upper triangle into a full symmetric CSR.
    let mut row_counts = vec![0usize; n + 1];
    for (i, row) in upper.iter().enumerate() {
        for &(j, _) in row {
            row_counts[i + 1] += 1;
            if j as usize > i {
                row_counts[j as usize + 1] += 1;
            }
        }
    }
    let mut row_offsets = row_counts;
    for i in 0..n {
        row_offsets[i + 1] += row_offsets[i];
    }
    let nnz = row_offsets[n];
    let mut cursor: Vec<usize> = row_offsets[..n].to_vec();
    let mut col_indices = vec![0u32; nnz];
    let mut values = vec![0.0; nnz];
    for (i, row) in upper.iter().enumerate() {
        for &(j, v) in row {
            let slot = cursor[i];
            col_indices[slot] = j;
            values[slot] = v;
            cursor[i] += 1;
            if j as usize > i {
                let slot = cursor[j as usize];
                col_indices[slot] = i as u32;
                values[slot] = v;
                cursor[j as usize] += 1;
            }
        }
    }
    Ok(SparseMatrix {
        n_rows: n,
        n_cols: n,
        row_offsets,
        col_indices,
        values,
    })
}

/// Sparse-sparse product A B with per-row accumulation. Entries below
/// [`PRUNE_EPS`] are dropped.
pub fn spmm(a: &SparseMatrix, b: &SparseMatrix) -> Result<SparseMatrix> {
    if a.n_cols != b.n_rows {
        return Err(Error::DimensionMismatch {
            context: "spmm",
            expected: a.n_cols,
            found: b.n_rows,
        });
    }
    let n = b.n_cols;
    let rows: Vec<Vec<(u32, f64)>> = (0..a.n_rows)
        .into_par_iter()
        .map(|i| {
            let mut acc = vec![0.0; n];
            let mut touched: Vec<u32> = Vec::new();
            for (k, v) in a.row(i) {
                for (j, w) in b.row(k as usize) {
                    let j = j as usize;
                    if acc[j] == 0.0 {
                        touched.push(j as u32);
                    }
                    acc[j] += v * w;
                }
            }
            touched.sort_unstable();
            touched
                .into_iter()
                .filter_map(|j| {
                    let v = acc[j as usize];
                    (v.abs() >= PRUNE_EPS).then_some((j, v))
                })
                .collect()
        })
        .collect();

    let mut row_offsets = Vec::with_capacity(a.n_rows + 1);
    row_offsets.push(0);
    let mut col_indices = Vec::new();
    let mut values = Vec::new();
    for row in rows {
        for (j, v) in row {
            col_indices.push(j);
            values.push(v);
        }
        row_offsets.push(values.len());
    }
    Ok(SparseMatrix {
        n_rows: a.n_rows,
        n_cols: n,
        row_offsets,
        col_indices,
        values,
    })
}
