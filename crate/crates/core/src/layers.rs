//! Convolution-family layer primitives with exact backward passes.
//!
//! All kernels run over (c, h, w) feature maps in row-major order with the
//! innermost loops phrased as contiguous slice updates so they vectorize.
//! Outputs are checked finite before they are returned; NaN/Inf anywhere is
//! surfaced as an error rather than silently propagated.

use alloc::vec::Vec;

use crate::float::Float;
use crate::tensor::Tensor;
use crate::DscError;

/// Zero padding applied around a feature map, possibly asymmetric.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Pad {
    pub top: usize,
    pub bottom: usize,
    pub left: usize,
    pub right: usize,
}

impl Pad {
    pub fn none() -> Self {
        Pad {
            top: 0,
            bottom: 0,
            left: 0,
            right: 0,
        }
    }

    pub fn symmetric(ph: usize, pw: usize) -> Self {
        Pad {
            top: ph,
            bottom: ph,
            left: pw,
            right: pw,
        }
    }

    /// Same-style padding: output dims are `ceil(input / stride)` per axis.
    /// Odd totals put the extra cell at bottom/right.
    pub fn same(in_hw: (usize, usize), kernel: (usize, usize), stride: (usize, usize)) -> Self {
        let (h, w) = in_hw;
        let (kh, kw) = kernel;
        let (sh, sw) = stride;
        let out_h = h.div_ceil(sh);
        let out_w = w.div_ceil(sw);
        let total_h = ((out_h - 1) * sh + kh).saturating_sub(h);
        let total_w = ((out_w - 1) * sw + kw).saturating_sub(w);
        Pad {
            top: total_h / 2,
            bottom: total_h - total_h / 2,
            left: total_w / 2,
            right: total_w - total_w / 2,
        }
    }
}

/// Output spatial size of a padded strided convolution.
pub fn conv_out_dim(n: usize, k: usize, s: usize, pad_total: usize) -> usize {
    (n + pad_total - k) / s + 1
}

fn check3(t: &Tensor<impl Float>, ctx: &'static str) -> Result<(usize, usize, usize), DscError> {
    t.dims3(ctx)
}

/// Dense 2-D convolution. `w` is (c_out, c_in, kh, kw), `b` is (c_out).
pub fn conv2d_forward<T: Float>(
    input: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
    stride: (usize, usize),
    pad: Pad,
) -> Result<Tensor<T>, DscError> {
    let (ci, hi, wi) = check3(input, "conv2d_forward input")?;
    let (co, wci, kh, kw) = w.dims4("conv2d_forward weights")?;
    if wci != ci {
        return Err(DscError::ShapeMismatch {
            context: "conv2d_forward: weight c_in vs input channels",
            expected: alloc::vec![ci],
            got: alloc::vec![wci],
        });
    }
    if b.shape() != [co] {
        return Err(DscError::ShapeMismatch {
            context: "conv2d_forward: bias",
            expected: alloc::vec![co],
            got: b.shape().to_vec(),
        });
    }
    let (sh, sw) = stride;
    if sh == 0 || sw == 0 || hi + pad.top + pad.bottom < kh || wi + pad.left + pad.right < kw {
        return Err(DscError::Invalid {
            message: alloc::format!(
                "conv2d_forward: kernel {kh}x{kw} stride {sh}x{sw} too large for input {hi}x{wi}"
            ),
        });
    }
    let ho = conv_out_dim(hi, kh, sh, pad.top + pad.bottom);
    let wo = conv_out_dim(wi, kw, sw, pad.left + pad.right);
    let mut out = Tensor::zeros(&[co, ho, wo]);

    conv2d_into(
        out.data_mut(),
        input.data(),
        w.data(),
        Some(b.data()),
        ci,
        hi,
        wi,
        co,
        kh,
        kw,
        sh,
        sw,
        pad,
        ho,
        wo,
    );
    out.check_finite("conv2d_forward")?;
    Ok(out)
}

/// Accumulating convolution core shared by forward passes.
#[allow(clippy::too_many_arguments)]
fn conv2d_into<T: Float>(
    out: &mut [T],
    input: &[T],
    w: &[T],
    bias: Option<&[T]>,
    ci: usize,
    hi: usize,
    wi: usize,
    co: usize,
    kh: usize,
    kw: usize,
    sh: usize,
    sw: usize,
    pad: Pad,
    ho: usize,
    wo: usize,
) {
    for oc in 0..co {
        let plane = &mut out[oc * ho * wo..(oc + 1) * ho * wo];
        if let Some(b) = bias {
            for v in plane.iter_mut() {
                *v = b[oc];
            }
        }
        for ich in 0..ci {
            let ip = &input[ich * hi * wi..(ich + 1) * hi * wi];
            let wbase = ((oc * ci) + ich) * kh * kw;
            for ky in 0..kh {
                for kx in 0..kw {
                    let wv = w[wbase + ky * kw + kx];
                    let (oy0, oy1) = tap_range(ho, hi, ky, pad.top, sh);
                    let (ox0, ox1) = tap_range(wo, wi, kx, pad.left, sw);
                    if ox1 <= ox0 {
                        continue;
                    }
                    for oy in oy0..oy1 {
                        let iy = oy * sh + ky - pad.top;
                        let orow = &mut plane[oy * wo + ox0..oy * wo + ox1];
                        if sw == 1 {
                            let ix0 = ox0 + kx - pad.left;
                            let irow = &ip[iy * wi + ix0..iy * wi + ix0 + (ox1 - ox0)];
                            for (o, i) in orow.iter_mut().zip(irow) {
                                *o += wv * *i;
                            }
                        } else {
                            let mut ix = ox0 * sw + kx - pad.left;
                            for o in orow.iter_mut() {
                                *o += wv * ip[iy * wi + ix];
                                ix += sw;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Valid output index range for a kernel tap: indices `o` with
/// `0 <= o*s + k - p < n_in`.
#[inline]
fn tap_range(n_out: usize, n_in: usize, k: usize, p: usize, s: usize) -> (usize, usize) {
    let lo = if k >= p { 0 } else { (p - k).div_ceil(s) };
    let hi = if n_in + p > k {
        core::cmp::min(n_out, (n_in + p - k).div_ceil(s))
    } else {
        0
    };
    (lo, hi)
}

/// Gradients of a dense convolution: (d_input, d_weights, d_bias).
pub fn conv2d_backward<T: Float>(
    grad_out: &Tensor<T>,
    input: &Tensor<T>,
    w: &Tensor<T>,
    stride: (usize, usize),
    pad: Pad,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>), DscError> {
    let (ci, hi, wi) = check3(input, "conv2d_backward input")?;
    let (co, _, kh, kw) = w.dims4("conv2d_backward weights")?;
    let (sh, sw) = stride;
    let ho = conv_out_dim(hi, kh, sh, pad.top + pad.bottom);
    let wo = conv_out_dim(wi, kw, sw, pad.left + pad.right);
    if grad_out.shape() != [co, ho, wo] {
        return Err(DscError::ShapeMismatch {
            context: "conv2d_backward grad_out",
            expected: alloc::vec![co, ho, wo],
            got: grad_out.shape().to_vec(),
        });
    }

    let mut gin = Tensor::zeros(&[ci, hi, wi]);
    let mut gw = Tensor::zeros(w.shape());
    let mut gb = Tensor::zeros(&[co]);
    let go = grad_out.data();
    let ind = input.data();
    let wd = w.data();
    {
        let gbd = gb.data_mut();
        for oc in 0..co {
            let gplane = &go[oc * ho * wo..(oc + 1) * ho * wo];
            let mut acc = T::ZERO;
            for &g in gplane {
                acc += g;
            }
            gbd[oc] = acc;
        }
    }
    {
        let gwd = gw.data_mut();
        let gind = gin.data_mut();
        for oc in 0..co {
            let gplane = &go[oc * ho * wo..(oc + 1) * ho * wo];
            for ich in 0..ci {
                let ip = &ind[ich * hi * wi..(ich + 1) * hi * wi];
                let gip = &mut gind[ich * hi * wi..(ich + 1) * hi * wi];
                let wbase = ((oc * ci) + ich) * kh * kw;
                for ky in 0..kh {
                    for kx in 0..kw {
                        let wv = wd[wbase + ky * kw + kx];
                        let (oy0, oy1) = tap_range(ho, hi, ky, pad.top, sh);
                        let (ox0, ox1) = tap_range(wo, wi, kx, pad.left, sw);
                        if ox1 <= ox0 {
                            continue;
                        }
                        let mut wacc = T::ZERO;
                        for oy in oy0..oy1 {
                            let iy = oy * sh + ky - pad.top;
                            let grow = &gplane[oy * wo + ox0..oy * wo + ox1];
                            if sw == 1 {
                                let ix0 = ox0 + kx - pad.left;
                                let irow = &ip[iy * wi + ix0..iy * wi + ix0 + (ox1 - ox0)];
                                let girow =
                                    &mut gip[iy * wi + ix0..iy * wi + ix0 + (ox1 - ox0)];
                                for ((g, i), gi) in grow.iter().zip(irow).zip(girow.iter_mut()) {
                                    wacc += *g * *i;
                                    *gi += wv * *g;
                                }
                            } else {
                                let mut ix = ox0 * sw + kx - pad.left;
                                for &g in grow {
                                    wacc += g * ip[iy * wi + ix];
                                    gip[iy * wi + ix] += wv * g;
                                    ix += sw;
                                }
                            }
                        }
                        gwd[wbase + ky * kw + kx] += wacc;
                    }
                }
            }
        }
    }
    gin.check_finite("conv2d_backward d_input")?;
    gw.check_finite("conv2d_backward d_weights")?;
    gb.check_finite("conv2d_backward d_bias")?;
    Ok((gin, gw, gb))
}

/// Padding used by transposed convolution so output dims are exactly
/// `input * up`. Requires `k >= up` per axis.
fn tconv_pad(k: (usize, usize), up: (usize, usize)) -> Pad {
    Pad {
        top: (k.0 - up.0) / 2,
        bottom: 0,
        left: (k.1 - up.1) / 2,
        right: 0,
    }
}

/// Transposed convolution (fractional-stride upsampling).
/// `w` is (c_out, c_in, kh, kw); output spatial dims are input dims times
/// the integer up factors.
pub fn tconv2d_forward<T: Float>(
    input: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
    up: (usize, usize),
) -> Result<Tensor<T>, DscError> {
    let (ci, hi, wi) = check3(input, "tconv2d_forward input")?;
    let (co, wci, kh, kw) = w.dims4("tconv2d_forward weights")?;
    if wci != ci {
        return Err(DscError::ShapeMismatch {
            context: "tconv2d_forward: weight c_in vs input channels",
            expected: alloc::vec![ci],
            got: alloc::vec![wci],
        });
    }
    if up.0 == 0 || up.1 == 0 || kh < up.0 || kw < up.1 {
        return Err(DscError::Invalid {
            message: alloc::format!("tconv2d_forward: kernel {kh}x{kw} must cover up {:?}", up),
        });
    }
    if b.shape() != [co] {
        return Err(DscError::ShapeMismatch {
            context: "tconv2d_forward: bias",
            expected: alloc::vec![co],
            got: b.shape().to_vec(),
        });
    }
    let ho = hi * up.0;
    let wo = wi * up.1;
    let pad = tconv_pad((kh, kw), up);
    let mut out = Tensor::filled(&[co, ho, wo], T::ZERO);
    let od = out.data_mut();
    let ind = input.data();
    let wd = w.data();
    let bd = b.data();
    for oc in 0..co {
        let plane = &mut od[oc * ho * wo..(oc + 1) * ho * wo];
        for v in plane.iter_mut() {
            *v = bd[oc];
        }
        for ich in 0..ci {
            let ip = &ind[ich * hi * wi..(ich + 1) * hi * wi];
            let wbase = ((oc * ci) + ich) * kh * kw;
            for ky in 0..kh {
                for kx in 0..kw {
                    let wv = wd[wbase + ky * kw + kx];
                    // oy = iy*up + ky - pad.top must land in [0, ho)
                    let (iy0, iy1) = tap_range(hi, ho, ky, pad.top, up.0);
                    let (ix0, ix1) = tap_range(wi, wo, kx, pad.left, up.1);
                    if ix1 <= ix0 {
                        continue;
                    }
                    for iy in iy0..iy1 {
                        let oy = iy * up.0 + ky - pad.top;
                        let irow = &ip[iy * wi + ix0..iy * wi + ix1];
                        let mut ox = ix0 * up.1 + kx - pad.left;
                        for &iv in irow {
                            plane[oy * wo + ox] += wv * iv;
                            ox += up.1;
                        }
                    }
                }
            }
        }
    }
    out.check_finite("tconv2d_forward")?;
    Ok(out)
}

/// Gradients of the transposed convolution.
pub fn tconv2d_backward<T: Float>(
    grad_out: &Tensor<T>,
    input: &Tensor<T>,
    w: &Tensor<T>,
    up: (usize, usize),
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>), DscError> {
    let (ci, hi, wi) = check3(input, "tconv2d_backward input")?;
    let (co, _, kh, kw) = w.dims4("tconv2d_backward weights")?;
    let ho = hi * up.0;
    let wo = wi * up.1;
    if grad_out.shape() != [co, ho, wo] {
        return Err(DscError::ShapeMismatch {
            context: "tconv2d_backward grad_out",
            expected: alloc::vec![co, ho, wo],
            got: grad_out.shape().to_vec(),
        });
    }
    let pad = tconv_pad((kh, kw), up);
    let mut gin = Tensor::zeros(&[ci, hi, wi]);
    let mut gw = Tensor::zeros(w.shape());
    let mut gb = Tensor::zeros(&[co]);
    let go = grad_out.data();
    let ind = input.data();
    let wd = w.data();
    {
        let gbd = gb.data_mut();
        for oc in 0..co {
            let gplane = &go[oc * ho * wo..(oc + 1) * ho * wo];
            let mut acc = T::ZERO;
            for &g in gplane {
                acc += g;
            }
            gbd[oc] = acc;
        }
    }
    {
        let gwd = gw.data_mut();
        let gind = gin.data_mut();
        for oc in 0..co {
            let gplane = &go[oc * ho * wo..(oc + 1) * ho * wo];
            for ich in 0..ci {
                let ip = &ind[ich * hi * wi..(ich + 1) * hi * wi];
                let gip = &mut gind[ich * hi * wi..(ich + 1) * hi * wi];
                let wbase = ((oc * ci) + ich) * kh * kw;
                for ky in 0..kh {
                    for kx in 0..kw {
                        let wv = wd[wbase + ky * kw + kx];
                        let (iy0, iy1) = tap_range(hi, ho, ky, pad.top, up.0);
                        let (ix0, ix1) = tap_range(wi, wo, kx, pad.left, up.1);
                        if ix1 <= ix0 {
                            continue;
                        }
                        let mut wacc = T::ZERO;
                        for iy in iy0..iy1 {
                            let oy = iy * up.0 + ky - pad.top;
                            let irow = &ip[iy * wi + ix0..iy * wi + ix1];
                            let girow = &mut gip[iy * wi + ix0..iy * wi + ix1];
                            let mut ox = ix0 * up.1 + kx - pad.left;
                            for (iv, gi) in irow.iter().zip(girow.iter_mut()) {
                                let g = gplane[oy * wo + ox];
                                wacc += g * *iv;
                                *gi += wv * g;
                                ox += up.1;
                            }
                        }
                        gwd[wbase + ky * kw + kx] += wacc;
                    }
                }
            }
        }
    }
    gin.check_finite("tconv2d_backward d_input")?;
    gw.check_finite("tconv2d_backward d_weights")?;
    gb.check_finite("tconv2d_backward d_bias")?;
    Ok((gin, gw, gb))
}

/// Depthwise-separable convolution: per-channel spatial filter (`dw`,
/// shaped (c_in, kh, kw), no bias) followed by a 1x1 dense mix (`pw`,
/// shaped (c_out, c_in, 1, 1)) with bias.
pub fn dwsep_forward<T: Float>(
    input: &Tensor<T>,
    dw: &Tensor<T>,
    pw: &Tensor<T>,
    b: &Tensor<T>,
    stride: (usize, usize),
    pad: Pad,
) -> Result<Tensor<T>, DscError> {
    let mid = depthwise_forward(input, dw, stride, pad)?;
    conv2d_forward(&mid, pw, b, (1, 1), Pad::none())
}

/// The depthwise stage alone (exposed for the composition oracle in tests).
pub fn depthwise_forward<T: Float>(
    input: &Tensor<T>,
    dw: &Tensor<T>,
    stride: (usize, usize),
    pad: Pad,
) -> Result<Tensor<T>, DscError> {
    let (ci, hi, wi) = check3(input, "depthwise_forward input")?;
    let (dci, kh, kw) = dw.dims3("depthwise_forward weights")?;
    if dci != ci {
        return Err(DscError::ShapeMismatch {
            context: "depthwise_forward: dw channels vs input channels",
            expected: alloc::vec![ci],
            got: alloc::vec![dci],
        });
    }
    let (sh, sw) = stride;
    let ho = conv_out_dim(hi, kh, sh, pad.top + pad.bottom);
    let wo = conv_out_dim(wi, kw, sw, pad.left + pad.right);
    let mut out = Tensor::zeros(&[ci, ho, wo]);
    let od = out.data_mut();
    let ind = input.data();
    let wd = dw.data();
    for ich in 0..ci {
        // One-channel convolution with a single (1, 1, kh, kw) weight block.
        conv2d_into(
            &mut od[ich * ho * wo..(ich + 1) * ho * wo],
            &ind[ich * hi * wi..(ich + 1) * hi * wi],
            &wd[ich * kh * kw..(ich + 1) * kh * kw],
            None,
            1,
            hi,
            wi,
            1,
            kh,
            kw,
            sh,
            sw,
            pad,
            ho,
            wo,
        );
    }
    out.check_finite("depthwise_forward")?;
    Ok(out)
}

/// Gradients of the depthwise-separable convolution:
/// (d_input, d_dw, d_pw, d_bias). The depthwise intermediate is recomputed.
pub fn dwsep_backward<T: Float>(
    grad_out: &Tensor<T>,
    input: &Tensor<T>,
    dw: &Tensor<T>,
    pw: &Tensor<T>,
    stride: (usize, usize),
    pad: Pad,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>, Tensor<T>), DscError> {
    let mid = depthwise_forward(input, dw, stride, pad)?;
    let (gmid, gpw, gb) = conv2d_backward(grad_out, &mid, pw, (1, 1), Pad::none())?;

    // Depthwise backward per channel.
    let (ci, hi, wi) = input.dims3("dwsep_backward input")?;
    let (_, kh, kw) = dw.dims3("dwsep_backward dw")?;
    let (sh, sw) = stride;
    let ho = conv_out_dim(hi, kh, sh, pad.top + pad.bottom);
    let wo = conv_out_dim(wi, kw, sw, pad.left + pad.right);
    let mut gin = Tensor::zeros(&[ci, hi, wi]);
    let mut gdw = Tensor::zeros(dw.shape());
    let gmd = gmid.data();
    let ind = input.data();
    let wd = dw.data();
    {
        let gdwd = gdw.data_mut();
        let gind = gin.data_mut();
        for ich in 0..ci {
            let gplane = &gmd[ich * ho * wo..(ich + 1) * ho * wo];
            let ip = &ind[ich * hi * wi..(ich + 1) * hi * wi];
            let gip = &mut gind[ich * hi * wi..(ich + 1) * hi * wi];
            for ky in 0..kh {
                for kx in 0..kw {
                    let wv = wd[(ich * kh + ky) * kw + kx];
                    let (oy0, oy1) = tap_range(ho, hi, ky, pad.top, sh);
                    let (ox0, ox1) = tap_range(wo, wi, kx, pad.left, sw);
                    if ox1 <= ox0 {
                        continue;
                    }
                    let mut wacc = T::ZERO;
                    for oy in oy0..oy1 {
                        let iy = oy * sh + ky - pad.top;
                        let grow = &gplane[oy * wo + ox0..oy * wo + ox1];
                        if sw == 1 {
                            let ix0 = ox0 + kx - pad.left;
                            let irow = &ip[iy * wi + ix0..iy * wi + ix0 + (ox1 - ox0)];
                            let girow = &mut gip[iy * wi + ix0..iy * wi + ix0 + (ox1 - ox0)];
                            for ((g, i), gi) in grow.iter().zip(irow).zip(girow.iter_mut()) {
                                wacc += *g * *i;
                                *gi += wv * *g;
                            }
                        } else {
                            let mut ix = ox0 * sw + kx - pad.left;
                            for &g in grow {
                                wacc += g * ip[iy * wi + ix];
                                gip[iy * wi + ix] += wv * g;
                                ix += sw;
                            }
                        }
                    }
                    gdwd[(ich * kh + ky) * kw + kx] += wacc;
                }
            }
        }
    }
    gin.check_finite("dwsep_backward d_input")?;
    gdw.check_finite("dwsep_backward d_dw")?;
    Ok((gin, gdw, gpw, gb))
}

/// Concatenate feature maps along the channel axis. All inputs must share
/// spatial dims.
pub fn concat_channels<T: Float>(inputs: &[&Tensor<T>]) -> Result<Tensor<T>, DscError> {
    if inputs.is_empty() {
        return Err(DscError::Invalid {
            message: alloc::string::String::from("concat_channels: no inputs"),
        });
    }
    let (_, h, w) = inputs[0].dims3("concat_channels")?;
    let mut channels = 0;
    for t in inputs {
        let (c, th, tw) = t.dims3("concat_channels")?;
        if (th, tw) != (h, w) {
            return Err(DscError::ShapeMismatch {
                context: "concat_channels: spatial dims",
                expected: alloc::vec![h, w],
                got: alloc::vec![th, tw],
            });
        }
        channels += c;
    }
    let mut out = Tensor::zeros(&[channels, h, w]);
    let od = out.data_mut();
    let mut at = 0;
    for t in inputs {
        let d = t.data();
        od[at..at + d.len()].copy_from_slice(d);
        at += d.len();
    }
    Ok(out)
}

/// Split a channel-concatenated gradient back into per-input gradients.
pub fn concat_backward<T: Float>(
    grad_out: &Tensor<T>,
    channel_sizes: &[usize],
) -> Result<Vec<Tensor<T>>, DscError> {
    let (c, h, w) = grad_out.dims3("concat_backward")?;
    let total: usize = channel_sizes.iter().sum();
    if total != c {
        return Err(DscError::ShapeMismatch {
            context: "concat_backward: channel partition",
            expected: alloc::vec![c],
            got: alloc::vec![total],
        });
    }
    let mut parts = Vec::with_capacity(channel_sizes.len());
    let gd = grad_out.data();
    let mut at = 0;
    for &cs in channel_sizes {
        let n = cs * h * w;
        parts.push(Tensor::from_vec(&[cs, h, w], gd[at..at + n].to_vec())?);
        at += n;
    }
    Ok(parts)
}

pub fn relu_forward<T: Float>(x: &Tensor<T>) -> Tensor<T> {
    let mut out = x.clone();
    for v in out.data_mut() {
        if *v < T::ZERO {
            *v = T::ZERO;
        }
    }
    out
}

/// ReLU gradient from the cached *output* (out > 0 passes the gradient).
pub fn relu_backward<T: Float>(grad_out: &Tensor<T>, out: &Tensor<T>) -> Tensor<T> {
    let mut g = grad_out.clone();
    for (gv, ov) in g.data_mut().iter_mut().zip(out.data()) {
        if !(*ov > T::ZERO) {
            *gv = T::ZERO;
        }
    }
    g
}

/// Numerically stable logistic function.
pub fn sigmoid_scalar<T: Float>(x: T) -> T {
    if x >= T::ZERO {
        T::ONE / (T::ONE + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::ONE + e)
    }
}
