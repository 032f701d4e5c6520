//! Training losses: the sparse L2 depth loss (masked mean squared error over
//! valid returns) and the logistic return-classifier loss.
//!
//! The depth gradient is exactly zero at every mask-0 cell; the mean runs
//! over valid cells only, so loss magnitude does not depend on sparsity.

use crate::float::Float;
use crate::tensor::Tensor;
use crate::DscError;

/// Scalar losses from one sample, in report precision.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossBundle {
    /// Masked mean squared depth error, m^2.
    pub depth_loss: f64,
    /// Mean binary cross-entropy of the return classifier, nats.
    pub return_loss: f64,
    /// Number of mask-1 cells the depth loss averaged over.
    pub n_valid: usize,
}

fn check_same_shape<T: Float>(
    a: &Tensor<T>,
    b: &Tensor<T>,
    context: &'static str,
) -> Result<(), DscError> {
    if a.shape() != b.shape() {
        return Err(DscError::ShapeMismatch {
            context,
            expected: a.shape().to_vec(),
            got: b.shape().to_vec(),
        });
    }
    Ok(())
}

fn check_binary_mask<T: Float>(mask: &Tensor<T>, context: &'static str) -> Result<(), DscError> {
    for &v in mask.data() {
        if !(v == T::ZERO || v == T::ONE) {
            return Err(DscError::BadMask { context });
        }
    }
    Ok(())
}

/// Sparse L2 loss: `L = (1/N_valid) * sum_i V_i * (D_i - f(X_i))^2`, with
/// `L = 0` when no cell is valid. Returns the loss and `dL/d pred`.
pub fn sparse_l2<T: Float>(
    pred: &Tensor<T>,
    gt: &Tensor<T>,
    mask: &Tensor<T>,
) -> Result<(T, Tensor<T>, usize), DscError> {
    check_same_shape(pred, gt, "sparse_l2: pred vs gt")?;
    check_same_shape(pred, mask, "sparse_l2: pred vs mask")?;
    check_binary_mask(mask, "sparse_l2")?;

    let mut n_valid = 0usize;
    for &v in mask.data() {
        if v == T::ONE {
            n_valid += 1;
        }
    }
    let mut grad = Tensor::zeros(pred.shape());
    if n_valid == 0 {
        return Ok((T::ZERO, grad, 0));
    }
    let inv_n = T::ONE / T::from_f64(n_valid as f64);
    let two = T::from_f64(2.0);
    let mut loss = T::ZERO;
    let gd = grad.data_mut();
    for i in 0..pred.len() {
        if mask.data()[i] == T::ONE {
            let diff = pred.data()[i] - gt.data()[i];
            loss += diff * diff;
            gd[i] = two * diff * inv_n;
        }
    }
    loss = loss * inv_n;
    if !loss.is_finite() {
        return Err(DscError::NonFinite {
            context: alloc::string::String::from("sparse_l2"),
        });
    }
    Ok((loss, grad, n_valid))
}

/// Mean binary cross-entropy of return logits against the return mask,
/// over all cells, numerically stabilized for large |logit|.
/// Returns the loss and `dL/d logits`.
pub fn return_loss<T: Float>(
    logits: &Tensor<T>,
    mask: &Tensor<T>,
) -> Result<(T, Tensor<T>), DscError> {
    check_same_shape(logits, mask, "return_loss")?;
    check_binary_mask(mask, "return_loss")?;
    let n = logits.len();
    if n == 0 {
        return Ok((T::ZERO, Tensor::zeros(logits.shape())));
    }
    let inv_n = T::ONE / T::from_f64(n as f64);
    let mut loss = T::ZERO;
    let mut grad = Tensor::zeros(logits.shape());
    let gd = grad.data_mut();
    for i in 0..n {
        let x = logits.data()[i];
        let v = mask.data()[i];
        // max(x,0) - x*v + ln(1 + exp(-|x|))
        let pos = x.maxv(T::ZERO);
        let absx = x.abs();
        loss += pos - x * v + (T::ONE + (-absx).exp()).ln();
        gd[i] = (crate::layers::sigmoid_scalar(x) - v) * inv_n;
    }
    loss = loss * inv_n;
    if !loss.is_finite() {
        return Err(DscError::NonFinite {
            context: alloc::string::String::from("return_loss"),
        });
    }
    Ok((loss, grad))
}
