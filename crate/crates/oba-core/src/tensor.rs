//! Dense row-major tensor of `f64` values, the currency of every layer.

use crate::error::{ObaError, Result};

/// N-dimensional array with row-major layout (last axis fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Build a tensor from a shape and a flat buffer.
    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(ObaError::Shape(format!(
                "shape {:?} implies {} elements, buffer has {}",
                shape,
                n,
                data.len()
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Reinterpret the buffer under a new shape of identical volume.
    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(ObaError::Shape(format!(
                "cannot reshape {:?} ({} elems) into {:?}",
                self.shape,
                self.data.len(),
                shape
            )));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    /// Element at a 4-D index; used by tests and slow paths only.
    pub fn at4(&self, i0: usize, i1: usize, i2: usize, i3: usize) -> f64 {
        debug_assert_eq!(self.shape.len(), 4);
        let (_, s1, s2, s3) = (self.shape[0], self.shape[1], self.shape[2], self.shape[3]);
        self.data[((i0 * s1 + i1) * s2 + i2) * s3 + i3]
    }

    /// Element at a 3-D index.
    pub fn at3(&self, i0: usize, i1: usize, i2: usize) -> f64 {
        debug_assert_eq!(self.shape.len(), 3);
        let (_, s1, s2) = (self.shape[0], self.shape[1], self.shape[2]);
        self.data[(i0 * s1 + i1) * s2 + i2]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// In-place elementwise addition of a same-shaped tensor.
    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(ObaError::Shape(format!(
                "add: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += b;
        }
        Ok(())
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    /// Error out if any element is NaN or infinite.
    pub fn check_finite(&self, context: &str) -> Result<()> {
        if let Some(pos) = self.data.iter().position(|v| !v.is_finite()) {
            return Err(ObaError::Numeric(format!(
                "non-finite value at flat index {pos} in {context}"
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_rejects_wrong_volume() {
        let err = Tensor::from_vec(&[2, 3], vec![1.0; 5]).unwrap_err();
        assert!(matches!(err, ObaError::Shape(_)));
    }

    #[test]
    fn row_major_indexing() {
        let t = Tensor::from_vec(&[1, 2, 2, 3], (0..12).map(|v| v as f64).collect()).unwrap();
        assert_eq!(t.at4(0, 1, 0, 2), 8.0);
        assert_eq!(t.at4(0, 0, 1, 0), 3.0);
    }

    #[test]
    fn check_finite_flags_nan() {
        let mut t = Tensor::zeros(&[4]);
        t.data_mut()[2] = f64::NAN;
        assert!(t.check_finite("test").is_err());
        assert!(Tensor::zeros(&[4]).check_finite("test").is_ok());
    }
}
