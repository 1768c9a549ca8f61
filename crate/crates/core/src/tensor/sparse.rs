use crate::error::{Error, Result};

/// Compressed sparse row pattern: for destination row `r`, the source
/// columns are `col_idx[row_ptr[r]..row_ptr[r + 1]]`. Edge `e` is the
/// `e`-th stored entry in row-major order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Csr {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    row_of: Vec<usize>,
}

impl Csr {
    /// Builds the pattern from per-row source lists, in the given order.
    pub fn from_rows(n_cols: usize, rows: &[Vec<usize>]) -> Result<Self> {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut col_idx = Vec::new();
        let mut row_of = Vec::new();
        row_ptr.push(0);
        for (r, cols) in rows.iter().enumerate() {
            for &c in cols {
                if c >= n_cols {
                    return Err(Error::Invalid(format!("column {c} out of range {n_cols} in row {r}")));
                }
                col_idx.push(c);
                row_of.push(r);
            }
            row_ptr.push(col_idx.len());
        }
        Ok(Csr { n_rows: rows.len(), n_cols, row_ptr, col_idx, row_of })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row_range(&self, r: usize) -> std::ops::Range<usize> {
        self.row_ptr[r]..self.row_ptr[r + 1]
    }

    pub fn cols(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn row_of(&self, e: usize) -> usize {
        self.row_of[e]
    }

    /// Entry index of `(r, c)` if stored.
    pub fn find(&self, r: usize, c: usize) -> Option<usize> {
        self.row_range(r).find(|&e| self.col_idx[e] == c)
    }
}
