use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::lang::Lang;
use crate::math::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Query,
    Passage,
    Sentence,
}

/// M×D embeddings with per-row language and role annotations.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBatch {
    rows: Matrix,
    langs: Vec<Lang>,
    roles: Vec<Role>,
}

impl EmbeddingBatch {
    pub fn new(rows: Matrix, langs: Vec<Lang>, roles: Vec<Role>) -> Result<Self> {
        if rows.rows() == 0 {
            return Err(Error::Empty("embedding batch"));
        }
        if rows.cols() == 0 {
            return Err(Error::Empty("embedding dimension"));
        }
        if langs.len() != rows.rows() {
            return Err(Error::DimensionMismatch { expected: rows.rows(), found: langs.len() });
        }
        if roles.len() != rows.rows() {
            return Err(Error::DimensionMismatch { expected: rows.rows(), found: roles.len() });
        }
        if !rows.is_finite() {
            return Err(Error::NonFinite("embedding batch".into()));
        }
        Ok(EmbeddingBatch { rows, langs, roles })
    }

    /// Batch where every row has the same role and an unspecified language (`l0`).
    pub fn uniform(rows: Matrix, role: Role) -> Result<Self> {
        let m = rows.rows();
        Self::new(rows, vec![Lang(0); m], vec![role; m])
    }

    pub fn from_rows(rows: &[Vec<f64>], role: Role) -> Result<Self> {
        Self::uniform(Matrix::from_rows(rows)?, role)
    }

    pub fn len(&self) -> usize {
        self.rows.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.rows.cols()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.rows.row(i)
    }

    pub fn langs(&self) -> &[Lang] {
        &self.langs
    }

    pub fn roles(&self) -> &[Role] {
        &self.roles
    }
}
