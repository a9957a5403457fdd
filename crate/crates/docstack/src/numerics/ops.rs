//! Neural-network kernels: forward and backward passes for every layer
//! type used by the classifiers.
//!
//! Layout conventions: images are `[channels, height, width]`, convolution
//! kernels are `[out_ch, in_ch, kh, kw]`, dense weights are
//! `[out_dim, in_dim]`, everything row-major. Convolution is
//! cross-correlation (no kernel flip). The stride-1 paths run the inner
//! loop over contiguous image rows so the compiler can vectorize them;
//! training spends nearly all of its time there.

use crate::error::{Error, Result};
use crate::numerics::rng::Rng;
use crate::numerics::tensor::Tensor;

fn conv_out_dim(input: usize, kernel: usize, stride: usize, pad: usize) -> Result<usize> {
    let padded = input + 2 * pad;
    if kernel == 0 || stride == 0 || padded < kernel || (padded - kernel) % stride != 0 {
        return Err(Error::BadGeometry {
            context: "conv2d",
            input,
            kernel,
            stride,
            pad,
        });
    }
    Ok((padded - kernel) / stride + 1)
}

/// Elementwise max(0, x).
pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| if v > 0.0 { v } else { 0.0 })
}

/// Gradient of relu. The subgradient at exactly 0 is taken as 0; tests
/// depend on this convention.
pub fn relu_backward(upstream: &Tensor, input: &Tensor) -> Result<Tensor> {
    if !upstream.same_shape(input) {
        return Err(Error::ShapeMismatch {
            context: "relu_backward",
            expected: input.shape().to_vec(),
            got: upstream.shape().to_vec(),
        });
    }
    let data = upstream
        .data()
        .iter()
        .zip(input.data())
        .map(|(&g, &x)| if x > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::from_vec(input.shape(), data)
}

/// Numerically stable softmax over a 1-d logit vector.
pub fn softmax(logits: &Tensor) -> Result<Tensor> {
    logits.check_finite("softmax input")?;
    let max = logits
        .data()
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.data().iter().map(|&x| (x - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for v in &mut out {
        *v /= sum;
    }
    Tensor::from_vec(logits.shape(), out)
}

/// Softmax followed by cross-entropy against an integer label.
/// Returns the loss and the probability vector for reuse in the backward
/// pass.
pub fn softmax_cross_entropy(logits: &Tensor, label: usize) -> Result<(f64, Tensor)> {
    let probs = softmax(logits)?;
    if label >= probs.len() {
        return Err(Error::InvalidArgument(format!(
            "label {label} out of range for {} classes",
            probs.len()
        )));
    }
    // Clamp away from zero so the loss stays finite even on a confident miss.
    let loss = -(probs.data()[label].max(1e-300)).ln();
    Ok((loss, probs))
}

/// Fused backward of softmax + cross-entropy: (p - onehot) / batch_size.
pub fn softmax_ce_backward(probs: &Tensor, label: usize, batch_size: usize) -> Tensor {
    let inv = 1.0 / batch_size as f64;
    let data = probs
        .data()
        .iter()
        .enumerate()
        .map(|(i, &p)| (p - if i == label { 1.0 } else { 0.0 }) * inv)
        .collect();
    Tensor::from_vec(probs.shape(), data).expect("same shape")
}

/// 2-d cross-correlation. `input` is `[ci, h, w]`, `kernels` is
/// `[co, ci, kh, kw]`, `bias` is `[co]`; output is `[co, h', w']`.
pub fn conv2d_forward(
    input: &Tensor,
    kernels: &Tensor,
    bias: &Tensor,
    stride: usize,
    pad: usize,
) -> Result<Tensor> {
    let (ci_n, h, w) = expect_3d(input, "conv2d input")?;
    let (co_n, kci, kh, kw) = expect_4d(kernels, "conv2d kernels")?;
    if kci != ci_n || bias.len() != co_n {
        return Err(Error::ShapeMismatch {
            context: "conv2d kernels/bias vs input",
            expected: vec![co_n, ci_n, kh, kw],
            got: kernels.shape().to_vec(),
        });
    }
    let oh = conv_out_dim(h, kh, stride, pad)?;
    let ow = conv_out_dim(w, kw, stride, pad)?;

    let mut out = Tensor::zeros(&[co_n, oh, ow]);
    for co in 0..co_n {
        let b = bias.data()[co];
        out.data_mut()[co * oh * ow..(co + 1) * oh * ow].fill(b);
    }

    if stride == 1 && kh == 3 && kw == 3 && pad == 1 && w >= 2 && h >= 2 {
        conv3x3_same_accumulate(input.data(), kernels.data(), out.data_mut(), ci_n, co_n, h, w);
    } else if stride == 1 {
        conv2d_forward_s1(input, kernels, &mut out, (ci_n, h, w), (co_n, kh, kw), pad);
    } else {
        conv2d_forward_general(
            input,
            kernels,
            &mut out,
            (ci_n, h, w),
            (co_n, kh, kw),
            stride,
            pad,
            (oh, ow),
        );
    }
    Ok(out)
}

/// 3x3, stride-1, pad-1 stencil: output has the input's spatial size.
/// All three horizontal taps are fused into one sweep per row, so each
/// loaded input element feeds three FMAs; this is the hot path of every
/// classifier in the crate.
fn conv3x3_same_accumulate(
    input: &[f64],
    kernels: &[f64],
    out: &mut [f64],
    ci_n: usize,
    co_n: usize,
    h: usize,
    w: usize,
) {
    let n = w - 2;
    for co in 0..co_n {
        let out_ch = &mut out[co * h * w..(co + 1) * h * w];
        for ci in 0..ci_n {
            let in_ch = &input[ci * h * w..(ci + 1) * h * w];
            let k = &kernels[(co * ci_n + ci) * 9..][..9];
            for ky in 0..3usize {
                let (k0, k1, k2) = (k[ky * 3], k[ky * 3 + 1], k[ky * 3 + 2]);
                let oy0 = 1usize.saturating_sub(ky);
                let oy1 = (h + 1 - ky).min(h);
                for oy in oy0..oy1 {
                    let iy = oy + ky - 1;
                    let r = &in_ch[iy * w..(iy + 1) * w];
                    let o = &mut out_ch[oy * w..(oy + 1) * w];
                    o[0] += k1 * r[0] + k2 * r[1];
                    o[w - 1] += k0 * r[w - 2] + k1 * r[w - 1];
                    let rm = &r[0..n];
                    let rc = &r[1..1 + n];
                    let rp = &r[2..2 + n];
                    let oc = &mut o[1..1 + n];
                    for i in 0..n {
                        oc[i] = rm[i].mul_add(k0, rc[i].mul_add(k1, rp[i].mul_add(k2, oc[i])));
                    }
                }
            }
        }
    }
}

/// Generic stride-1 path: per-tap shift-add sweeps with contiguous inner
/// loops.
fn conv2d_forward_s1(
    input: &Tensor,
    kernels: &Tensor,
    out: &mut Tensor,
    (ci_n, h, w): (usize, usize, usize),
    (co_n, kh, kw): (usize, usize, usize),
    pad: usize,
) {
    let oh = h + 2 * pad + 1 - kh;
    let ow = w + 2 * pad + 1 - kw;
    let in_data = input.data();
    let k_data = kernels.data();
    let out_data = out.data_mut();
    for co in 0..co_n {
        let out_ch = &mut out_data[co * oh * ow..(co + 1) * oh * ow];
        for ci in 0..ci_n {
            let in_ch = &in_data[ci * h * w..(ci + 1) * h * w];
            for ky in 0..kh {
                let oy0 = pad.saturating_sub(ky);
                let oy1 = (h + pad).saturating_sub(ky).min(oh);
                for kx in 0..kw {
                    let kv = k_data[((co * ci_n + ci) * kh + ky) * kw + kx];
                    let ox0 = pad.saturating_sub(kx);
                    let ox1 = (w + pad).saturating_sub(kx).min(ow);
                    if ox0 >= ox1 {
                        continue;
                    }
                    let nx = ox1 - ox0;
                    for oy in oy0..oy1 {
                        let iy = oy + ky - pad;
                        let ix0 = ox0 + kx - pad;
                        let src = &in_ch[iy * w + ix0..iy * w + ix0 + nx];
                        let dst = &mut out_ch[oy * ow + ox0..oy * ow + ox0 + nx];
                        for (d, s) in dst.iter_mut().zip(src) {
                            *d = s.mul_add(kv, *d);
                        }
                    }
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn conv2d_forward_general(
    input: &Tensor,
    kernels: &Tensor,
    out: &mut Tensor,
    (ci_n, h, w): (usize, usize, usize),
    (co_n, kh, kw): (usize, usize, usize),
    stride: usize,
    pad: usize,
    (oh, ow): (usize, usize),
) {
    let in_data = input.data();
    let k_data = kernels.data();
    let out_data = out.data_mut();
    for co in 0..co_n {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = 0.0;
                for ci in 0..ci_n {
                    for ky in 0..kh {
                        let iy = (oy * stride + ky) as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..kw {
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            acc += in_data[(ci * h + iy as usize) * w + ix as usize]
                                * k_data[((co * ci_n + ci) * kh + ky) * kw + kx];
                        }
                    }
                }
                out_data[(co * oh + oy) * ow + ox] += acc;
            }
        }
    }
}

/// Gradients of conv2d w.r.t. input, kernels and bias.
pub fn conv2d_backward(
    input: &Tensor,
    kernels: &Tensor,
    dout: &Tensor,
    stride: usize,
    pad: usize,
) -> Result<(Tensor, Tensor, Tensor)> {
    let (ci_n, h, w) = expect_3d(input, "conv2d input")?;
    let (co_n, _, kh, kw) = expect_4d(kernels, "conv2d kernels")?;
    let oh = conv_out_dim(h, kh, stride, pad)?;
    let ow = conv_out_dim(w, kw, stride, pad)?;
    if dout.shape() != [co_n, oh, ow] {
        return Err(Error::ShapeMismatch {
            context: "conv2d_backward upstream vs cached forward",
            expected: vec![co_n, oh, ow],
            got: dout.shape().to_vec(),
        });
    }

    let mut dinput = Tensor::zeros(&[ci_n, h, w]);
    let mut dkernels = Tensor::zeros(kernels.shape());
    let mut dbias = Tensor::zeros(&[co_n]);

    let dout_data = dout.data();
    for co in 0..co_n {
        let s: f64 = dout_data[co * oh * ow..(co + 1) * oh * ow].iter().sum();
        dbias.data_mut()[co] = s;
    }

    if stride == 1 && kh == 3 && kw == 3 && pad == 1 && w >= 2 && h >= 2 {
        // Input gradient is itself a 3x3/pad-1 correlation of dout with
        // the spatially flipped, channel-transposed kernels.
        let mut flipped = vec![0.0f64; kernels.len()];
        let k_data = kernels.data();
        for co in 0..co_n {
            for ci in 0..ci_n {
                for ky in 0..3 {
                    for kx in 0..3 {
                        flipped[(ci * co_n + co) * 9 + (2 - ky) * 3 + (2 - kx)] =
                            k_data[(co * ci_n + ci) * 9 + ky * 3 + kx];
                    }
                }
            }
        }
        conv3x3_same_accumulate(dout_data, &flipped, dinput.data_mut(), co_n, ci_n, h, w);
        conv3x3_same_kernel_grad(
            input.data(),
            dout_data,
            dkernels.data_mut(),
            ci_n,
            co_n,
            h,
            w,
        );
    } else if stride == 1 {
        conv2d_backward_s1(
            input,
            kernels,
            dout,
            &mut dinput,
            &mut dkernels,
            (ci_n, h, w),
            (co_n, kh, kw),
            pad,
        );
    } else {
        conv2d_backward_general(
            input,
            kernels,
            dout,
            &mut dinput,
            &mut dkernels,
            (ci_n, h, w),
            (co_n, kh, kw),
            stride,
            pad,
            (oh, ow),
        );
    }
    Ok((dinput, dkernels, dbias))
}

/// Kernel gradients for the 3x3/pad-1 case. For each (co, ci, ky) the
/// three horizontal taps accumulate in independent chains over one shared
/// sweep of the row pair.
fn conv3x3_same_kernel_grad(
    input: &[f64],
    dout: &[f64],
    dkernels: &mut [f64],
    ci_n: usize,
    co_n: usize,
    h: usize,
    w: usize,
) {
    let n = w - 2;
    for co in 0..co_n {
        let dout_ch = &dout[co * h * w..(co + 1) * h * w];
        for ci in 0..ci_n {
            let in_ch = &input[ci * h * w..(ci + 1) * h * w];
            let dk = &mut dkernels[(co * ci_n + ci) * 9..][..9];
            for ky in 0..3usize {
                let oy0 = 1usize.saturating_sub(ky);
                let oy1 = (h + 1 - ky).min(h);
                let (mut a0, mut a1, mut a2) = (0.0f64, 0.0f64, 0.0f64);
                let (mut b0, mut b1, mut b2) = (0.0f64, 0.0f64, 0.0f64);
                for oy in oy0..oy1 {
                    let iy = oy + ky - 1;
                    let r = &in_ch[iy * w..(iy + 1) * w];
                    let g = &dout_ch[oy * w..(oy + 1) * w];
                    a1 += g[0] * r[0];
                    a2 += g[0] * r[1];
                    a0 += g[w - 1] * r[w - 2];
                    a1 += g[w - 1] * r[w - 1];
                    let rm = &r[0..n];
                    let rc = &r[1..1 + n];
                    let rp = &r[2..2 + n];
                    let gc = &g[1..1 + n];
                    let half = n / 2 * 2;
                    let mut i = 0;
                    while i < half {
                        a0 = gc[i].mul_add(rm[i], a0);
                        a1 = gc[i].mul_add(rc[i], a1);
                        a2 = gc[i].mul_add(rp[i], a2);
                        b0 = gc[i + 1].mul_add(rm[i + 1], b0);
                        b1 = gc[i + 1].mul_add(rc[i + 1], b1);
                        b2 = gc[i + 1].mul_add(rp[i + 1], b2);
                        i += 2;
                    }
                    if half < n {
                        a0 = gc[half].mul_add(rm[half], a0);
                        a1 = gc[half].mul_add(rc[half], a1);
                        a2 = gc[half].mul_add(rp[half], a2);
                    }
                }
                dk[ky * 3] += a0 + b0;
                dk[ky * 3 + 1] += a1 + b1;
                dk[ky * 3 + 2] += a2 + b2;
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn conv2d_backward_s1(
    input: &Tensor,
    kernels: &Tensor,
    dout: &Tensor,
    dinput: &mut Tensor,
    dkernels: &mut Tensor,
    (ci_n, h, w): (usize, usize, usize),
    (co_n, kh, kw): (usize, usize, usize),
    pad: usize,
) {
    let oh = h + 2 * pad + 1 - kh;
    let ow = w + 2 * pad + 1 - kw;
    let in_data = input.data();
    let k_data = kernels.data();
    let dout_data = dout.data();
    let din_data = dinput.data_mut();
    let dk_data = dkernels.data_mut();
    for co in 0..co_n {
        let dout_ch = &dout_data[co * oh * ow..(co + 1) * oh * ow];
        for ci in 0..ci_n {
            let in_ch = &in_data[ci * h * w..(ci + 1) * h * w];
            let din_ch = &mut din_data[ci * h * w..(ci + 1) * h * w];
            for ky in 0..kh {
                let oy0 = pad.saturating_sub(ky);
                let oy1 = (h + pad).saturating_sub(ky).min(oh);
                for kx in 0..kw {
                    let kidx = ((co * ci_n + ci) * kh + ky) * kw + kx;
                    let kv = k_data[kidx];
                    let ox0 = pad.saturating_sub(kx);
                    let ox1 = (w + pad).saturating_sub(kx).min(ow);
                    if ox0 >= ox1 {
                        continue;
                    }
                    let nx = ox1 - ox0;
                    let mut kacc = 0.0;
                    for oy in oy0..oy1 {
                        let iy = oy + ky - pad;
                        let ix0 = ox0 + kx - pad;
                        let up = &dout_ch[oy * ow + ox0..oy * ow + ox0 + nx];
                        let src = &in_ch[iy * w + ix0..iy * w + ix0 + nx];
                        let din = &mut din_ch[iy * w + ix0..iy * w + ix0 + nx];
                        let mut dot = 0.0;
                        for ((d, &u), &s) in din.iter_mut().zip(up).zip(src) {
                            *d += kv * u;
                            dot += u * s;
                        }
                        kacc += dot;
                    }
                    dk_data[kidx] += kacc;
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn conv2d_backward_general(
    input: &Tensor,
    kernels: &Tensor,
    dout: &Tensor,
    dinput: &mut Tensor,
    dkernels: &mut Tensor,
    (ci_n, h, w): (usize, usize, usize),
    (co_n, kh, kw): (usize, usize, usize),
    stride: usize,
    pad: usize,
    (oh, ow): (usize, usize),
) {
    let in_data = input.data();
    let k_data = kernels.data();
    let dout_data = dout.data();
    let din_data = dinput.data_mut();
    let dk_data = dkernels.data_mut();
    for co in 0..co_n {
        for oy in 0..oh {
            for ox in 0..ow {
                let g = dout_data[(co * oh + oy) * ow + ox];
                for ci in 0..ci_n {
                    for ky in 0..kh {
                        let iy = (oy * stride + ky) as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..kw {
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let iidx = (ci * h + iy as usize) * w + ix as usize;
                            let kidx = ((co * ci_n + ci) * kh + ky) * kw + kx;
                            din_data[iidx] += g * k_data[kidx];
                            dk_data[kidx] += g * in_data[iidx];
                        }
                    }
                }
            }
        }
    }
}

/// Max pooling over `[c, h, w]`. Returns the pooled tensor and the flat
/// input index of each window maximum for the backward pass. Ties are
/// broken by the first index in row-major scan order.
pub fn maxpool2d(input: &Tensor, window: usize, stride: usize) -> Result<(Tensor, Vec<usize>)> {
    let (c_n, h, w) = expect_3d(input, "maxpool input")?;
    if window == 0
        || stride == 0
        || window > h
        || window > w
        || (h - window) % stride != 0
        || (w - window) % stride != 0
    {
        return Err(Error::BadGeometry {
            context: "maxpool2d",
            input: h.min(w),
            kernel: window,
            stride,
            pad: 0,
        });
    }
    let oh = (h - window) / stride + 1;
    let ow = (w - window) / stride + 1;
    let mut out = Tensor::zeros(&[c_n, oh, ow]);
    let mut argmax = vec![0usize; c_n * oh * ow];
    let in_data = input.data();
    let out_data = out.data_mut();
    for c in 0..c_n {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = f64::NEG_INFINITY;
                let mut best_idx = 0usize;
                for wy in 0..window {
                    let iy = oy * stride + wy;
                    for wx in 0..window {
                        let ix = ox * stride + wx;
                        let idx = (c * h + iy) * w + ix;
                        let v = in_data[idx];
                        if v > best {
                            best = v;
                            best_idx = idx;
                        }
                    }
                }
                let oidx = (c * oh + oy) * ow + ox;
                out_data[oidx] = best;
                argmax[oidx] = best_idx;
            }
        }
    }
    Ok((out, argmax))
}

/// Routes upstream gradients back to the argmax positions recorded by the
/// forward pass.
pub fn maxpool2d_backward(
    dout: &Tensor,
    argmax: &[usize],
    input_shape: &[usize],
) -> Result<Tensor> {
    if dout.len() != argmax.len() {
        return Err(Error::ShapeMismatch {
            context: "maxpool2d_backward upstream vs cached forward",
            expected: vec![argmax.len()],
            got: vec![dout.len()],
        });
    }
    let mut dinput = Tensor::zeros(input_shape);
    let din = dinput.data_mut();
    for (&g, &idx) in dout.data().iter().zip(argmax) {
        din[idx] += g;
    }
    Ok(dinput)
}

/// Fully connected layer: `weights` is `[out, in]`, output is `[out]`.
pub fn dense_forward(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let n_in = input.len();
    let (n_out, w_in) = expect_2d(weights, "dense weights")?;
    if w_in != n_in || bias.len() != n_out {
        return Err(Error::ShapeMismatch {
            context: "dense_forward",
            expected: vec![n_out, n_in],
            got: weights.shape().to_vec(),
        });
    }
    let x = input.data();
    let wd = weights.data();
    let mut out = bias.data().to_vec();
    for (j, o) in out.iter_mut().enumerate() {
        let row = &wd[j * n_in..(j + 1) * n_in];
        let mut acc = 0.0;
        for (&wi, &xi) in row.iter().zip(x) {
            acc += wi * xi;
        }
        *o += acc;
    }
    Tensor::from_vec(&[n_out], out)
}

/// Gradients of the dense layer w.r.t. input, weights and bias.
pub fn dense_backward(
    input: &Tensor,
    weights: &Tensor,
    dout: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let n_in = input.len();
    let (n_out, w_in) = expect_2d(weights, "dense weights")?;
    if w_in != n_in || dout.len() != n_out {
        return Err(Error::ShapeMismatch {
            context: "dense_backward upstream vs cached forward",
            expected: vec![n_out],
            got: dout.shape().to_vec(),
        });
    }
    let x = input.data();
    let wd = weights.data();
    let g = dout.data();
    let mut dinput = vec![0.0; n_in];
    let mut dweights = vec![0.0; n_out * n_in];
    for j in 0..n_out {
        let gj = g[j];
        let row = &wd[j * n_in..(j + 1) * n_in];
        let drow = &mut dweights[j * n_in..(j + 1) * n_in];
        for i in 0..n_in {
            dinput[i] += gj * row[i];
            drow[i] = gj * x[i];
        }
    }
    Ok((
        Tensor::from_vec(&[n_in], dinput)?,
        Tensor::from_vec(weights.shape(), dweights)?,
        Tensor::from_vec(&[n_out], g.to_vec())?,
    ))
}

/// Inverted dropout. Keeps each element with probability `1 - rate` and
/// scales survivors by `1/(1 - rate)`, so inference needs no rescaling.
/// Returns the output and the per-element scale mask for the backward pass.
pub fn dropout_forward(input: &Tensor, rate: f64, rng: &mut Rng) -> Result<(Tensor, Vec<f64>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidArgument(format!(
            "dropout rate {rate} outside [0, 1)"
        )));
    }
    if rate == 0.0 {
        return Ok((input.clone(), vec![1.0; input.len()]));
    }
    let scale = 1.0 / (1.0 - rate);
    let mask: Vec<f64> = (0..input.len())
        .map(|_| if rng.next_f64() >= rate { scale } else { 0.0 })
        .collect();
    let data = input
        .data()
        .iter()
        .zip(&mask)
        .map(|(&x, &m)| x * m)
        .collect();
    Ok((Tensor::from_vec(input.shape(), data)?, mask))
}

pub fn dropout_backward(dout: &Tensor, mask: &[f64]) -> Result<Tensor> {
    if dout.len() != mask.len() {
        return Err(Error::ShapeMismatch {
            context: "dropout_backward upstream vs cached forward",
            expected: vec![mask.len()],
            got: vec![dout.len()],
        });
    }
    let data = dout
        .data()
        .iter()
        .zip(mask)
        .map(|(&g, &m)| g * m)
        .collect();
    Tensor::from_vec(dout.shape(), data)
}

fn expect_2d(t: &Tensor, context: &'static str) -> Result<(usize, usize)> {
    match t.shape() {
        [a, b] => Ok((*a, *b)),
        other => Err(Error::ShapeMismatch {
            context,
            expected: vec![0, 0],
            got: other.to_vec(),
        }),
    }
}

fn expect_3d(t: &Tensor, context: &'static str) -> Result<(usize, usize, usize)> {
    match t.shape() {
        [a, b, c] => Ok((*a, *b, *c)),
        other => Err(Error::ShapeMismatch {
            context,
            expected: vec![0, 0, 0],
            got: other.to_vec(),
        }),
    }
}

fn expect_4d(t: &Tensor, context: &'static str) -> Result<(usize, usize, usize, usize)> {
    match t.shape() {
        [a, b, c, d] => Ok((*a, *b, *c, *d)),
        other => Err(Error::ShapeMismatch {
            context,
            expected: vec![0, 0, 0, 0],
            got: other.to_vec(),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_examples() {
        let x = Tensor::from_vec(&[3], vec![-2.0, 0.0, 3.5]).unwrap();
        assert_eq!(relu(&x).data(), &[0.0, 0.0, 3.5]);
        let z = Tensor::zeros(&[4]);
        assert_eq!(relu(&z).data(), z.data());
        let p = Tensor::from_vec(&[3], vec![0.5, 1.0, 2.0]).unwrap();
        assert_eq!(relu(&p).data(), p.data());
    }

    #[test]
    fn relu_backward_zero_convention() {
        let up = Tensor::from_vec(&[3], vec![1.0, 1.0, 1.0]).unwrap();
        let x = Tensor::from_vec(&[3], vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(relu_backward(&up, &x).unwrap().data(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn softmax_uniform_and_stability() {
        let u = softmax(&Tensor::zeros(&[4])).unwrap();
        for &p in u.data() {
            assert!((p - 0.25).abs() < 1e-12);
        }
        let big = softmax(&Tensor::from_vec(&[2], vec![1000.0, 0.0]).unwrap()).unwrap();
        assert!(big.data()[0] > 1.0 - 1e-12);
        assert!(big.data()[1] < 1e-12);
        assert!(big.data().iter().all(|p| p.is_finite()));
    }

    #[test]
    fn softmax_log_ratio_oracle() {
        // exp-normalize of [ln 1, ln 2, ln 3] is [1/6, 2/6, 3/6].
        let x = Tensor::from_vec(&[3], vec![1f64.ln(), 2f64.ln(), 3f64.ln()]).unwrap();
        let p = softmax(&x).unwrap();
        for (got, want) in p.data().iter().zip([1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_rejects_nan() {
        let x = Tensor::from_vec(&[2], vec![f64::NAN, 0.0]).unwrap();
        assert!(softmax(&x).is_err());
    }

    #[test]
    fn softmax_ce_backward_uniform_case() {
        let logits = Tensor::zeros(&[2]);
        let (_, probs) = softmax_cross_entropy(&logits, 0).unwrap();
        let g = softmax_ce_backward(&probs, 0, 1);
        assert!((g.data()[0] - (-0.5)).abs() < 1e-12);
        assert!((g.data()[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn conv_window_sum_and_identity() {
        let input = Tensor::filled(&[1, 3, 3], 1.0);
        let kernels = Tensor::filled(&[1, 1, 3, 3], 1.0);
        let bias = Tensor::zeros(&[1]);
        let out = conv2d_forward(&input, &kernels, &bias, 1, 0).unwrap();
        assert_eq!(out.shape(), &[1, 1, 1]);
        assert!((out.data()[0] - 9.0).abs() < 1e-12);

        // 1x1 identity kernel reproduces the input.
        let input = Tensor::from_vec(&[1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let ident = Tensor::from_vec(&[1, 1, 1, 1], vec![1.0]).unwrap();
        let out = conv2d_forward(&input, &ident, &bias, 1, 0).unwrap();
        assert_eq!(out.data(), input.data());
    }

    #[test]
    fn conv_rejects_non_integral_output() {
        let input = Tensor::zeros(&[1, 5, 5]);
        let kernels = Tensor::zeros(&[1, 1, 2, 2]);
        let bias = Tensor::zeros(&[1]);
        // (5 - 2) % 2 != 0
        assert!(conv2d_forward(&input, &kernels, &bias, 2, 0).is_err());
    }

    #[test]
    fn maxpool_single_window_and_ties() {
        let input = Tensor::from_vec(&[1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (out, arg) = maxpool2d(&input, 2, 2).unwrap();
        assert_eq!(out.data(), &[4.0]);
        assert_eq!(arg, vec![3]);

        let flat = Tensor::filled(&[1, 4, 4], 7.0);
        let (out, arg) = maxpool2d(&flat, 2, 2).unwrap();
        assert!(out.data().iter().all(|&v| v == 7.0));
        // Ties resolve to the first element of each window in row-major order.
        assert_eq!(arg, vec![0, 2, 8, 10]);
    }

    #[test]
    fn maxpool_rejects_incompatible_dims() {
        let input = Tensor::zeros(&[1, 5, 5]);
        assert!(maxpool2d(&input, 2, 2).is_err());
    }

    #[test]
    fn dense_matches_hand_computation() {
        let x = Tensor::from_vec(&[2], vec![1.0, 2.0]).unwrap();
        let w = Tensor::from_vec(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let b = Tensor::from_vec(&[2], vec![0.5, -0.5]).unwrap();
        let y = dense_forward(&x, &w, &b).unwrap();
        assert_eq!(y.data(), &[1.5, 1.5]);
    }

    #[test]
    fn dropout_identity_at_rate_zero_and_mask_scaling() {
        let mut rng = Rng::new(1);
        let x = Tensor::filled(&[100], 1.0);
        let (y, mask) = dropout_forward(&x, 0.0, &mut rng).unwrap();
        assert_eq!(y.data(), x.data());
        assert!(mask.iter().all(|&m| m == 1.0));

        let (y, mask) = dropout_forward(&x, 0.5, &mut rng).unwrap();
        for (v, m) in y.data().iter().zip(&mask) {
            assert!(*v == 0.0 || (*v - 2.0).abs() < 1e-12);
            assert_eq!(*v, *m);
        }
    }

    #[test]
    fn backward_shape_mismatch_is_error() {
        let input = Tensor::zeros(&[1, 4, 4]);
        let kernels = Tensor::zeros(&[2, 1, 3, 3]);
        let wrong = Tensor::zeros(&[2, 3, 3]);
        assert!(conv2d_backward(&input, &kernels, &wrong, 1, 1).is_err());
    }
}

#[cfg(test)]
mod stencil_tests {
    use super::*;

    fn naive_conv(
        input: &Tensor,
        kernels: &Tensor,
        bias: &Tensor,
        stride: usize,
        pad: usize,
    ) -> Tensor {
        let (ci_n, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
        let (co_n, kh, kw) = (kernels.shape()[0], kernels.shape()[2], kernels.shape()[3]);
        let oh = (h + 2 * pad - kh) / stride + 1;
        let ow = (w + 2 * pad - kw) / stride + 1;
        let mut out = Tensor::zeros(&[co_n, oh, ow]);
        for co in 0..co_n {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = bias.data()[co];
                    for ci in 0..ci_n {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if iy >= 0 && iy < h as isize && ix >= 0 && ix < w as isize {
                                    acc += input.data()[(ci * h + iy as usize) * w + ix as usize]
                                        * kernels.data()[((co * ci_n + ci) * kh + ky) * kw + kx];
                                }
                            }
                        }
                    }
                    out.data_mut()[(co * oh + oy) * ow + ox] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn k3_path_matches_naive() {
        let mut rng = Rng::new(77);
        for (ci, co, h, w) in [(1, 8, 8, 8), (3, 4, 7, 5), (2, 2, 2, 2), (4, 3, 6, 9)] {
            let input = Tensor::from_vec(
                &[ci, h, w],
                (0..ci * h * w).map(|_| rng.range_f64(-1.0, 1.0)).collect(),
            )
            .unwrap();
            let k = Tensor::from_vec(
                &[co, ci, 3, 3],
                (0..co * ci * 9).map(|_| rng.range_f64(-1.0, 1.0)).collect(),
            )
            .unwrap();
            let b = Tensor::from_vec(&[co], (0..co).map(|_| rng.range_f64(-1.0, 1.0)).collect())
                .unwrap();
            let fast = conv2d_forward(&input, &k, &b, 1, 1).unwrap();
            let slow = naive_conv(&input, &k, &b, 1, 1);
            for (a, e) in fast.data().iter().zip(slow.data()) {
                assert!((a - e).abs() < 1e-12, "fwd mismatch {a} vs {e}");
            }

            // backward vs central differences of the forward is covered in
            // the acceptance suite; here check the two backward paths agree.
            let dout = Tensor::from_vec(
                &[co, h, w],
                (0..co * h * w).map(|_| rng.range_f64(-1.0, 1.0)).collect(),
            )
            .unwrap();
            let (di_f, dk_f, db_f) = conv2d_backward(&input, &k, &dout, 1, 1).unwrap();
            let mut di_s = Tensor::zeros(&[ci, h, w]);
            let mut dk_s = Tensor::zeros(k.shape());
            conv2d_backward_general(
                &input,
                &k,
                &dout,
                &mut di_s,
                &mut dk_s,
                (ci, h, w),
                (co, 3, 3),
                1,
                1,
                (h, w),
            );
            for (a, e) in di_f.data().iter().zip(di_s.data()) {
                assert!((a - e).abs() < 1e-11, "dinput mismatch {a} vs {e}");
            }
            for (a, e) in dk_f.data().iter().zip(dk_s.data()) {
                assert!((a - e).abs() < 1e-11, "dkernel mismatch {a} vs {e}");
            }
            let db_sum: f64 = db_f.data().iter().sum();
            let dout_sum: f64 = dout.data().iter().sum();
            assert!((db_sum - dout_sum).abs() < 1e-9);
        }
    }
}
