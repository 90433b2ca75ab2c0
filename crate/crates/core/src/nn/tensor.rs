use crate::error::{Error, Result};

/// Dense row-major array of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::shape(format!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            data: vec![0.0; shape.iter().product()],
            shape: shape.to_vec(),
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        Self {
            data: vec![value; shape.iter().product()],
            shape: shape.to_vec(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Self> {
        Self::new(shape.to_vec(), self.data)
    }

    /// Row `b` of the leading axis.
    pub fn row(&self, b: usize) -> &[f64] {
        let stride = self.data.len() / self.shape[0];
        &self.data[b * stride..(b + 1) * stride]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Concatenates `[B, a]` and `[B, b]` into `[B, a+b]`.
    pub fn concat_cols(a: &Tensor, b: &Tensor) -> Result<Tensor> {
        if a.ndim() != 2 || b.ndim() != 2 || a.shape[0] != b.shape[0] {
            return Err(Error::shape(format!(
                "cannot concatenate {:?} with {:?}",
                a.shape, b.shape
            )));
        }
        let rows = a.shape[0];
        let mut data = Vec::with_capacity(a.len() + b.len());
        for r in 0..rows {
            data.extend_from_slice(a.row(r));
            data.extend_from_slice(b.row(r));
        }
        Tensor::new(vec![rows, a.shape[1] + b.shape[1]], data)
    }

    /// Splits `[B, a+b]` into `[B, a]` and `[B, b]`.
    pub fn split_cols(&self, a: usize) -> Result<(Tensor, Tensor)> {
        if self.ndim() != 2 || a > self.shape[1] {
            return Err(Error::shape(format!("cannot split {:?} at {a}", self.shape)));
        }
        let (rows, cols) = (self.shape[0], self.shape[1]);
        let mut left = Vec::with_capacity(rows * a);
        let mut right = Vec::with_capacity(rows * (cols - a));
        for r in 0..rows {
            let row = self.row(r);
            left.extend_from_slice(&row[..a]);
            right.extend_from_slice(&row[a..]);
        }
        Ok((
            Tensor::new(vec![rows, a], left)?,
            Tensor::new(vec![rows, cols - a], right)?,
        ))
    }
}
