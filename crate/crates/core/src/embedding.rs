use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Norm used by the translation energy `||s + r - o||`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Norm {
    #[default]
    L1,
    L2,
}

/// One row per vocabulary entry: entities first, then relations.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    rows: usize,
    dim: usize,
    data: Vec<f64>,
}

impl EmbeddingTable {
    pub fn new(rows: usize, dim: usize, data: Vec<f64>) -> Result<EmbeddingTable> {
        if dim == 0 {
            return Err(Error::InvalidArgument("embedding width must be at least 1".into()));
        }
        if data.len() != rows * dim {
            return Err(Error::Shape(format!(
                "{rows} x {dim} table needs {} values, got {}",
                rows * dim,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("table entry {i}")));
        }
        Ok(EmbeddingTable { rows, dim, data })
    }

    pub fn zeros(rows: usize, dim: usize) -> EmbeddingTable {
        EmbeddingTable {
            rows,
            dim,
            data: alloc::vec![0.0; rows * dim],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::matrix(self.rows, self.dim, self.data.clone()).expect("table shape")
    }

    pub fn from_tensor(t: &Tensor) -> Result<EmbeddingTable> {
        let (rows, dim) = t.require_matrix("embedding table")?;
        EmbeddingTable::new(rows, dim, t.data().to_vec())
    }

    /// Multiplies every entry by `c`.
    pub fn scale(&mut self, c: f64) {
        self.data.iter_mut().for_each(|v| *v *= c);
    }
}
