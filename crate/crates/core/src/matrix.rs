//! Trajectory × detection matrices used by data association.

use crate::error::{Error, Result};

/// Nonnegative, finite `K × Q` score matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl AffinityMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::InvalidMatrix(format!(
                "{} values for a {rows}x{cols} matrix",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidMatrix(format!("entry {v} is not finite and nonnegative")));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidMatrix("ragged rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            values: vec![0.0; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.rows, self.cols, self.values.iter().map(|v| v * c).collect())
    }

    pub fn transpose(&self) -> Self {
        let mut values = Vec::with_capacity(self.values.len());
        for c in 0..self.cols {
            for r in 0..self.rows {
                values.push(self.get(r, c));
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            values,
        }
    }
}

/// Binary `K × Q` assignment with every row and column sum at most one.
///
/// Stored as the sorted list of selected cells; construction rejects any
/// cell set violating the mutual-exclusion constraints.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchingMatrix {
    rows: usize,
    cols: usize,
    pairs: Vec<(usize, usize)>,
}

impl MatchingMatrix {
    pub fn from_pairs(rows: usize, cols: usize, mut pairs: Vec<(usize, usize)>) -> Result<Self> {
        pairs.sort_unstable();
        let mut row_used = vec![false; rows];
        let mut col_used = vec![false; cols];
        for &(r, c) in &pairs {
            if r >= rows || c >= cols {
                return Err(Error::InvalidMatrix(format!(
                    "cell ({r}, {c}) outside {rows}x{cols}"
                )));
            }
            if std::mem::replace(&mut row_used[r], true) {
                return Err(Error::InvalidMatrix(format!("row {r} matched twice")));
            }
            if std::mem::replace(&mut col_used[c], true) {
                return Err(Error::InvalidMatrix(format!("column {c} matched twice")));
            }
        }
        Ok(Self { rows, cols, pairs })
    }

    pub fn empty(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            pairs: Vec::new(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Selected cells in ascending `(row, col)` order.
    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.pairs.binary_search(&(row, col)).is_ok()
    }

    pub fn row_sum(&self, row: usize) -> usize {
        self.pairs.iter().filter(|(r, _)| *r == row).count()
    }

    pub fn col_sum(&self, col: usize) -> usize {
        self.pairs.iter().filter(|(_, c)| *c == col).count()
    }

    /// Re-check the mutual-exclusion constraints from the dense view.
    pub fn satisfies_constraints(&self) -> bool {
        (0..self.rows).all(|r| self.row_sum(r) <= 1) && (0..self.cols).all(|c| self.col_sum(c) <= 1)
    }

    /// `‖A ⊙ X‖₂`.
    pub fn objective(&self, a: &AffinityMatrix) -> f64 {
        self.pairs
            .iter()
            .map(|&(r, c)| a.get(r, c).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// `Σ A ⊙ X`.
    pub fn linear_objective(&self, a: &AffinityMatrix) -> f64 {
        self.pairs.iter().map(|&(r, c)| a.get(r, c)).sum()
    }

    pub fn to_dense(&self) -> Vec<Vec<u8>> {
        let mut m = vec![vec![0u8; self.cols]; self.rows];
        for &(r, c) in &self.pairs {
            m[r][c] = 1;
        }
        m
    }
}
