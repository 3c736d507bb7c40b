use serde::Serialize;

use crate::error::{invalid, Error, Result};

/// Largest nonzero count addressable with the 32-bit index arrays.
pub const MAX_NNZ: usize = i32::MAX as usize;

/// Square sparse matrix in compressed row storage.
///
/// Canonical form is enforced on construction: the row pointer is
/// non-decreasing, column indices are in range and strictly increasing within
/// a row, so there are no structural duplicates.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CrsMatrix {
    n_rows: usize,
    row_ptr: Vec<u32>,
    col: Vec<u32>,
    val: Vec<f64>,
}

impl CrsMatrix {
    /// Builds a matrix from raw CRS arrays, validating canonical form.
    pub fn from_raw_parts(n_rows: usize, row_ptr: Vec<u32>, col: Vec<u32>, val: Vec<f64>) -> Result<Self> {
        if row_ptr.len() != n_rows + 1 {
            return invalid(format!("row_ptr has {} entries, expected {}", row_ptr.len(), n_rows + 1));
        }
        if col.len() != val.len() {
            return invalid("col and val lengths differ");
        }
        if col.len() > MAX_NNZ {
            return Err(Error::TooLarge(col.len()));
        }
        if row_ptr[0] != 0 || row_ptr[n_rows] as usize != col.len() {
            return invalid("row_ptr must start at 0 and end at nnz");
        }
        for r in 0..n_rows {
            let (s, e) = (row_ptr[r] as usize, row_ptr[r + 1] as usize);
            if s > e {
                return invalid(format!("row_ptr decreases at row {r}"));
            }
            for k in s..e {
                if col[k] as usize >= n_rows {
                    return invalid(format!("column {} out of range in row {r}", col[k]));
                }
                if k > s && col[k] <= col[k - 1] {
                    return invalid(format!("columns not strictly increasing in row {r}"));
                }
            }
        }
        Ok(Self { n_rows, row_ptr, col, val })
    }

    /// Builds a matrix from `(row, col, value)` triplets. Duplicates are summed.
    pub fn from_triplets(n_rows: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        if triplets.len() > MAX_NNZ {
            return Err(Error::TooLarge(triplets.len()));
        }
        let mut counts = vec![0usize; n_rows + 1];
        for &(r, c, _) in triplets {
            if r >= n_rows || c >= n_rows {
                return invalid(format!("entry ({r}, {c}) outside {n_rows} x {n_rows}"));
            }
            counts[r + 1] += 1;
        }
        for r in 0..n_rows {
            counts[r + 1] += counts[r];
        }
        let mut fill = counts.clone();
        let mut entries = vec![(0u32, 0.0f64); triplets.len()];
        for &(r, c, v) in triplets {
            entries[fill[r]] = (c as u32, v);
            fill[r] += 1;
        }

        let mut row_ptr = Vec::with_capacity(n_rows + 1);
        let mut col = Vec::with_capacity(triplets.len());
        let mut val = Vec::with_capacity(triplets.len());
        row_ptr.push(0u32);
        for r in 0..n_rows {
            let row = &mut entries[counts[r]..counts[r + 1]];
            // stable, so duplicates are summed in input order
            row.sort_by_key(|&(c, _)| c);
            let mut last: Option<u32> = None;
            for &(c, v) in row.iter() {
                if last == Some(c) {
                    *val.last_mut().unwrap() += v;
                } else {
                    col.push(c);
                    val.push(v);
                    last = Some(c);
                }
            }
            row_ptr.push(col.len() as u32);
        }
        Ok(Self { n_rows, row_ptr, col, val })
    }

    /// Dense row-major matrix; zeros are dropped.
    pub fn from_dense(n: usize, dense: &[f64]) -> Result<Self> {
        if dense.len() != n * n {
            return invalid("dense buffer is not n x n");
        }
        let trip: Vec<_> = (0..n)
            .flat_map(|r| (0..n).map(move |c| (r, c)))
            .filter(|&(r, c)| dense[r * n + c] != 0.0)
            .map(|(r, c)| (r, c, dense[r * n + c]))
            .collect();
        Self::from_triplets(n, &trip)
    }

    pub fn identity(n: usize) -> Self {
        Self { n_rows: n, row_ptr: (0..=n as u32).collect(), col: (0..n as u32).collect(), val: vec![1.0; n] }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn nnz(&self) -> usize {
        self.col.len()
    }

    pub fn row_ptr(&self) -> &[u32] {
        &self.row_ptr
    }

    pub fn col(&self) -> &[u32] {
        &self.col
    }

    pub fn val(&self) -> &[f64] {
        &self.val
    }

    #[inline]
    pub fn row_range(&self, r: usize) -> std::ops::Range<usize> {
        self.row_ptr[r] as usize..self.row_ptr[r + 1] as usize
    }

    #[inline]
    pub fn row_nnz(&self, r: usize) -> usize {
        (self.row_ptr[r + 1] - self.row_ptr[r]) as usize
    }

    /// Column indices and values of row `r`.
    pub fn row(&self, r: usize) -> (&[u32], &[f64]) {
        let range = self.row_range(r);
        (&self.col[range.clone()], &self.val[range])
    }

    /// Nonzeros in rows `[start, end)`.
    pub fn nnz_in_rows(&self, start: usize, end: usize) -> usize {
        (self.row_ptr[end] - self.row_ptr[start]) as usize
    }

    pub fn to_triplets(&self) -> Vec<(usize, usize, f64)> {
        (0..self.n_rows).flat_map(|r| self.row_range(r).map(move |k| (r, self.col[k] as usize, self.val[k]))).collect()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.n_rows;
        let mut d = vec![0.0; n * n];
        for (r, c, v) in self.to_triplets() {
            d[r * n + c] = v;
        }
        d
    }

    /// Same pattern, new values. `val.len()` must equal `nnz()`.
    pub fn with_values(&self, val: Vec<f64>) -> Result<Self> {
        if val.len() != self.nnz() {
            return invalid("value array length differs from nnz");
        }
        Ok(Self { val, ..self.clone() })
    }

    pub fn is_structurally_symmetric(&self) -> bool {
        (0..self.n_rows)
            .all(|r| self.row(r).0.iter().all(|&c| self.row(c as usize).0.binary_search(&(r as u32)).is_ok()))
    }

    /// Dot product of row `r` with `x`, summed in storage order.
    #[inline(always)]
    pub fn row_dot(&self, r: usize, x: &[f64]) -> f64 {
        let range = self.row_range(r);
        let cols = &self.col[range.clone()];
        let vals = &self.val[range];
        let mut tmp = 0.0;
        for (c, v) in cols.iter().zip(vals) {
            tmp += v * x[*c as usize];
        }
        tmp
    }

    /// [`Self::row_dot`] reading `x` through a raw pointer, for vectors other
    /// threads are writing elsewhere.
    ///
    /// # Safety
    /// `x` must be valid for reads of `n_rows` values, and the entries this row
    /// references must not be written concurrently.
    #[inline(always)]
    pub(crate) unsafe fn row_dot_ptr(&self, r: usize, x: *const f64) -> f64 {
        let range = self.row_range(r);
        let cols = &self.col[range.clone()];
        let vals = &self.val[range];
        let mut tmp = 0.0;
        for (c, v) in cols.iter().zip(vals) {
            tmp += v * *x.add(*c as usize);
        }
        tmp
    }

    /// Full matrix-vector product.
    pub fn spmv(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n_rows);
        assert_eq!(y.len(), self.n_rows);
        for (r, out) in y.iter_mut().enumerate() {
            *out = self.row_dot(r, x);
        }
    }
}

/// SpMV restricted to the inclusive row range `[row_start, row_end]`.
///
/// Rows outside the range are left untouched. `in_vec` and `out_vec` are
/// distinct borrows, so they cannot alias.
pub fn spmv_range(a: &CrsMatrix, in_vec: &[f64], out_vec: &mut [f64], row_start: usize, row_end: usize) -> Result<()> {
    let n = a.n_rows();
    if in_vec.len() != n || out_vec.len() != n {
        return invalid(format!("vector lengths must equal n_rows = {n}"));
    }
    if row_start > row_end || row_end >= n {
        return invalid(format!("row range [{row_start}, {row_end}] outside [0, {n})"));
    }
    for r in row_start..=row_end {
        out_vec[r] = a.row_dot(r, in_vec);
    }
    Ok(())
}
