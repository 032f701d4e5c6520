//! Dense row-major tensors. Feature maps are (channels, height, width);
//! convolution weights are (c_out, c_in, kh, kw). Tensors are immutable
//! values once an operation returns them and are safe to share across
//! threads.

use alloc::vec;
use alloc::vec::Vec;

use crate::float::Float;
use crate::DscError;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Float> Tensor<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![T::ZERO; n],
        }
    }

    pub fn filled(shape: &[usize], v: T) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![v; n],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self, DscError> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(DscError::ShapeMismatch {
                context: "tensor::from_vec",
                expected: vec![n],
                got: vec![data.len()],
            });
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    #[inline]
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    /// Interpret as a (c, h, w) feature map.
    pub fn dims3(&self, context: &'static str) -> Result<(usize, usize, usize), DscError> {
        match self.shape.as_slice() {
            [c, h, w] => Ok((*c, *h, *w)),
            _ => Err(DscError::ShapeMismatch {
                context,
                expected: vec![3],
                got: self.shape.clone(),
            }),
        }
    }

    /// Interpret as a (o, i, kh, kw) weight block.
    pub fn dims4(&self, context: &'static str) -> Result<(usize, usize, usize, usize), DscError> {
        match self.shape.as_slice() {
            [o, i, kh, kw] => Ok((*o, *i, *kh, *kw)),
            _ => Err(DscError::ShapeMismatch {
                context,
                expected: vec![4],
                got: self.shape.clone(),
            }),
        }
    }

    pub fn check_finite(&self, context: &'static str) -> Result<(), DscError> {
        for &v in &self.data {
            if !v.is_finite() {
                return Err(DscError::NonFinite {
                    context: alloc::string::String::from(context),
                });
            }
        }
        Ok(())
    }

    pub fn cast<U: Float>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::from_f64(v.to_f64())).collect(),
        }
    }

    pub fn to_f32_vec(&self) -> Vec<f32> {
        self.data.iter().map(|v| v.to_f64() as f32).collect()
    }
}
