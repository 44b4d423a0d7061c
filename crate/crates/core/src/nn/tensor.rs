use alloc::vec;
use alloc::vec::Vec;

use super::NnError;

/// Dense row-major `f32` tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self, NnError> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(NnError::EmptyDimension);
        }
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(NnError::BufferLength {
                shape,
                len: data.len(),
            });
        }
        Ok(Tensor { shape, data })
    }

    /// Zero tensor. Panics on an empty or zero-sized shape.
    pub fn zeros(shape: &[usize]) -> Self {
        assert!(!shape.is_empty() && !shape.contains(&0), "empty shape {shape:?}");
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn filled(shape: &[usize], value: f32) -> Self {
        let mut t = Tensor::zeros(shape);
        t.data.fill(value);
        t
    }

    pub fn from_vec(data: Vec<f32>) -> Result<Self, NnError> {
        Tensor::new(vec![data.len()], data)
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

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Self, NnError> {
        Tensor::new(shape, self.data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Index of the largest value; the first one wins ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.data.iter().enumerate() {
            if v > self.data[best] {
                best = i;
            }
        }
        best
    }

    pub(crate) fn expect_shape(&self, op: &'static str, expected: &[usize]) -> Result<(), NnError> {
        if self.shape != expected {
            return Err(NnError::ShapeMismatch {
                op,
                expected: expected.to_vec(),
                actual: self.shape.clone(),
            });
        }
        Ok(())
    }

    pub(crate) fn expect_rank(&self, op: &'static str, rank: usize) -> Result<(), NnError> {
        if self.rank() != rank {
            return Err(NnError::ShapeMismatch {
                op,
                expected: vec![0; rank],
                actual: self.shape.clone(),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_inconsistent_buffers() {
        assert!(matches!(
            Tensor::new(vec![2, 3], vec![0.0; 5]),
            Err(NnError::BufferLength { .. })
        ));
        assert_eq!(Tensor::new(vec![2, 0], vec![]), Err(NnError::EmptyDimension));
        assert_eq!(Tensor::new(vec![], vec![]), Err(NnError::EmptyDimension));
    }

    #[test]
    fn argmax_prefers_first() {
        let t = Tensor::from_vec(vec![1.0, 3.0, 3.0, -1.0]).unwrap();
        assert_eq!(t.argmax(), 1);
    }
}
