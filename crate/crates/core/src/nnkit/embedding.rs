use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::{check_dim, Matrix, NnError};
use crate::math;

/// One trainable row per id. Rows never share parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    matrix: Matrix,
}

/// Sparse gradient: only rows touched by a batch are stored.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmbeddingGrads {
    pub rows: BTreeMap<usize, Vec<f64>>,
}

impl EmbeddingTable {
    /// Rows drawn uniform in `±sqrt(3 / dim)`, i.e. unit variance per row norm.
    pub fn new<R: Rng + ?Sized>(n_ids: usize, dim: usize, rng: &mut R) -> Result<Self, NnError> {
        if n_ids == 0 || dim == 0 {
            return Err(NnError::InvalidSpec("embedding table needs at least one id and one dim"));
        }
        let mut matrix = Matrix::zeros(n_ids, dim);
        let a = Self::init_bound(dim);
        for v in matrix.as_mut_slice() {
            *v = rng.random_range(-a..a);
        }
        Ok(EmbeddingTable { matrix })
    }

    pub fn zeros(n_ids: usize, dim: usize) -> Self {
        EmbeddingTable { matrix: Matrix::zeros(n_ids, dim) }
    }

    pub fn from_matrix(matrix: Matrix) -> Self {
        EmbeddingTable { matrix }
    }

    pub fn init_bound(dim: usize) -> f64 {
        math::sqrt(3.0 / dim as f64)
    }

    pub fn len(&self) -> usize {
        self.matrix.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn lookup(&self, id: usize) -> Option<&[f64]> {
        (id < self.len()).then(|| self.matrix.row(id))
    }

    pub fn row_mut(&mut self, id: usize) -> &mut [f64] {
        self.matrix.row_mut(id)
    }

    /// Appends a row and returns its index.
    pub fn push_row(&mut self, row: &[f64]) -> Result<usize, NnError> {
        self.matrix.push_row(row)?;
        Ok(self.len() - 1)
    }

    pub fn accumulate(&self, grads: &mut EmbeddingGrads, id: usize, d_row: &[f64]) -> Result<(), NnError> {
        check_dim(self.dim(), d_row.len())?;
        let g = grads.rows.entry(id).or_insert_with(|| vec![0.0; d_row.len()]);
        for (gi, di) in g.iter_mut().zip(d_row) {
            *gi += di;
        }
        Ok(())
    }

    pub fn sgd_step(&mut self, grads: &EmbeddingGrads, lr: f64) -> Result<(), NnError> {
        for (&id, g) in &grads.rows {
            if id >= self.len() {
                return Err(NnError::DimensionMismatch { expected: self.len(), got: id + 1 });
            }
            super::sgd_step(self.matrix.row_mut(id), g, lr)?;
        }
        Ok(())
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        self.matrix.as_mut_slice()
    }
}

impl EmbeddingGrads {
    pub fn clear(&mut self) {
        self.rows.clear();
    }

    /// Dense row-major expansion for an `n_ids × dim` table.
    pub fn flatten_into(&self, n_ids: usize, dim: usize, out: &mut Vec<f64>) {
        let start = out.len();
        out.resize(start + n_ids * dim, 0.0);
        for (&id, g) in &self.rows {
            out[start + id * dim..start + (id + 1) * dim].copy_from_slice(g);
        }
    }
}
