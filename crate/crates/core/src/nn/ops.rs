//! Forward and backward kernels.

use alloc::vec;
use alloc::vec::Vec;

use super::{NnError, Tensor};

fn to_tensor(shape: Vec<usize>, acc: Vec<f64>) -> Tensor {
    Tensor::new(shape, acc.into_iter().map(|v| v as f32).collect())
        .expect("kernel produced a buffer matching its shape")
}

/// `output[j] = bias[j] + sum_k weights[j, k] * input[k]`.
pub fn dense_forward(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor, NnError> {
    input.expect_rank("dense input", 1)?;
    weights.expect_rank("dense weights", 2)?;
    let (out, inp) = (weights.shape()[0], weights.shape()[1]);
    input.expect_shape("dense input", &[inp])?;
    bias.expect_shape("dense bias", &[out])?;
    let x = input.data();
    let w = weights.data();
    let result = (0..out)
        .map(|j| {
            let row = &w[j * inp..(j + 1) * inp];
            let dot: f64 = row
                .iter()
                .zip(x)
                .map(|(&a, &b)| f64::from(a) * f64::from(b))
                .sum();
            f64::from(bias.data()[j]) + dot
        })
        .collect();
    Ok(to_tensor(vec![out], result))
}

/// Returns `(grad_weights, grad_bias, grad_input)`.
pub fn dense_backward(
    input: &Tensor,
    weights: &Tensor,
    grad_output: &Tensor,
) -> Result<(Tensor, Tensor, Tensor), NnError> {
    weights.expect_rank("dense weights", 2)?;
    let (out, inp) = (weights.shape()[0], weights.shape()[1]);
    input.expect_shape("dense input", &[inp])?;
    grad_output.expect_shape("dense grad", &[out])?;
    let x = input.data();
    let g = grad_output.data();
    let w = weights.data();
    let mut grad_w = vec![0.0f32; out * inp];
    let mut grad_in = vec![0.0f64; inp];
    for j in 0..out {
        let gj = g[j];
        let row = &w[j * inp..(j + 1) * inp];
        for (k, dst) in grad_w[j * inp..(j + 1) * inp].iter_mut().enumerate() {
            *dst = gj * x[k];
            grad_in[k] += f64::from(row[k]) * f64::from(gj);
        }
    }
    Ok((
        Tensor::new(vec![out, inp], grad_w)?,
        grad_output.clone(),
        to_tensor(vec![inp], grad_in),
    ))
}

struct ConvDims {
    w: usize,
    cin: usize,
    k: usize,
    cout: usize,
    ho: usize,
    wo: usize,
}

fn conv_dims(input: &Tensor, kernels: &Tensor) -> Result<ConvDims, NnError> {
    input.expect_rank("conv2d input", 3)?;
    kernels.expect_rank("conv2d kernels", 4)?;
    let (h, w, cin) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let ks = kernels.shape();
    let (k, cout) = (ks[0], ks[3]);
    if ks[1] != k || ks[2] != cin {
        return Err(NnError::ShapeMismatch {
            op: "conv2d kernels",
            expected: vec![k, k, cin, cout],
            actual: ks.to_vec(),
        });
    }
    if k > h || k > w {
        return Err(NnError::KernelTooLarge {
            kernel: k,
            height: h,
            width: w,
        });
    }
    Ok(ConvDims {
        w,
        cin,
        k,
        cout,
        ho: h - k + 1,
        wo: w - k + 1,
    })
}

/// Valid cross-correlation with stride 1.
pub fn conv2d_forward(input: &Tensor, kernels: &Tensor, bias: &Tensor) -> Result<Tensor, NnError> {
    let d = conv_dims(input, kernels)?;
    bias.expect_shape("conv2d bias", &[d.cout])?;
    let x = input.data();
    let kw = kernels.data();
    let mut out = vec![0.0f32; d.ho * d.wo * d.cout];
    let mut acc = vec![0.0f64; d.cout];
    for oy in 0..d.ho {
        for ox in 0..d.wo {
            for (a, &b) in acc.iter_mut().zip(bias.data()) {
                *a = f64::from(b);
            }
            for ky in 0..d.k {
                for kx in 0..d.k {
                    let base = ((oy + ky) * d.w + ox + kx) * d.cin;
                    for ci in 0..d.cin {
                        let v = f64::from(x[base + ci]);
                        let kbase = ((ky * d.k + kx) * d.cin + ci) * d.cout;
                        for (a, &kv) in acc.iter_mut().zip(&kw[kbase..kbase + d.cout]) {
                            *a += v * f64::from(kv);
                        }
                    }
                }
            }
            let obase = (oy * d.wo + ox) * d.cout;
            for (o, &a) in out[obase..obase + d.cout].iter_mut().zip(&acc) {
                *o = a as f32;
            }
        }
    }
    Tensor::new(vec![d.ho, d.wo, d.cout], out)
}

/// Returns `(grad_kernels, grad_bias, grad_input)`.
pub fn conv2d_backward(
    input: &Tensor,
    kernels: &Tensor,
    grad_output: &Tensor,
) -> Result<(Tensor, Tensor, Tensor), NnError> {
    let d = conv_dims(input, kernels)?;
    grad_output.expect_shape("conv2d grad", &[d.ho, d.wo, d.cout])?;
    let x = input.data();
    let kw = kernels.data();
    let g = grad_output.data();
    let mut gk = vec![0.0f64; kw.len()];
    let mut gb = vec![0.0f64; d.cout];
    let mut gin = vec![0.0f64; x.len()];
    for oy in 0..d.ho {
        for ox in 0..d.wo {
            let gbase = (oy * d.wo + ox) * d.cout;
            let go = &g[gbase..gbase + d.cout];
            for (b, &v) in gb.iter_mut().zip(go) {
                *b += f64::from(v);
            }
            for ky in 0..d.k {
                for kx in 0..d.k {
                    let base = ((oy + ky) * d.w + ox + kx) * d.cin;
                    for ci in 0..d.cin {
                        let v = f64::from(x[base + ci]);
                        let kbase = ((ky * d.k + kx) * d.cin + ci) * d.cout;
                        let mut s = 0.0f64;
                        for co in 0..d.cout {
                            let gv = f64::from(go[co]);
                            gk[kbase + co] += v * gv;
                            s += f64::from(kw[kbase + co]) * gv;
                        }
                        gin[base + ci] += s;
                    }
                }
            }
        }
    }
    Ok((
        to_tensor(kernels.shape().to_vec(), gk),
        to_tensor(vec![d.cout], gb),
        to_tensor(input.shape().to_vec(), gin),
    ))
}

fn pool_dims(input: &Tensor) -> Result<(usize, usize, usize), NnError> {
    input.expect_rank("maxpool input", 3)?;
    let (h, w, c) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    if h < 2 || w < 2 {
        return Err(NnError::InputTooSmall {
            op: "maxpool2x2",
            height: h,
            width: w,
        });
    }
    Ok((h, w, c))
}

/// Position of the maximum in the 2x2 window at output cell `(oy, ox)`,
/// channel `ch`; the first in row-major window order wins ties.
fn window_argmax(x: &[f32], w: usize, c: usize, oy: usize, ox: usize, ch: usize) -> usize {
    let mut best = (2 * oy * w + 2 * ox) * c + ch;
    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
        let idx = ((2 * oy + dy) * w + 2 * ox + dx) * c + ch;
        if x[idx] > x[best] {
            best = idx;
        }
    }
    best
}

/// Non-overlapping 2x2 max pooling with stride 2; a trailing odd row or
/// column is dropped.
pub fn maxpool2x2_forward(input: &Tensor) -> Result<Tensor, NnError> {
    let (h, w, c) = pool_dims(input)?;
    let (ho, wo) = (h / 2, w / 2);
    let x = input.data();
    let mut out = Vec::with_capacity(ho * wo * c);
    for oy in 0..ho {
        for ox in 0..wo {
            for ch in 0..c {
                out.push(x[window_argmax(x, w, c, oy, ox, ch)]);
            }
        }
    }
    Tensor::new(vec![ho, wo, c], out)
}

/// Routes each output gradient to the input position that won its window.
pub fn maxpool2x2_backward(input: &Tensor, grad_output: &Tensor) -> Result<Tensor, NnError> {
    let (h, w, c) = pool_dims(input)?;
    let (ho, wo) = (h / 2, w / 2);
    grad_output.expect_shape("maxpool grad", &[ho, wo, c])?;
    let x = input.data();
    let g = grad_output.data();
    let mut gin = vec![0.0f32; x.len()];
    for oy in 0..ho {
        for ox in 0..wo {
            for ch in 0..c {
                gin[window_argmax(x, w, c, oy, ox, ch)] += g[(oy * wo + ox) * c + ch];
            }
        }
    }
    Tensor::new(input.shape().to_vec(), gin)
}

pub fn relu_forward(input: &Tensor) -> Tensor {
    let data = input.data().iter().map(|&v| v.max(0.0)).collect();
    Tensor::new(input.shape().to_vec(), data).expect("same shape")
}

pub fn relu_backward(input: &Tensor, grad_output: &Tensor) -> Result<Tensor, NnError> {
    grad_output.expect_shape("relu grad", input.shape())?;
    let data = input
        .data()
        .iter()
        .zip(grad_output.data())
        .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::new(input.shape().to_vec(), data)
}

fn softmax_f64(logits: &[f32]) -> (Vec<f64>, f64, f64) {
    let max = logits.iter().fold(f32::NEG_INFINITY, |m, &v| m.max(v));
    let max = f64::from(max);
    let exps: Vec<f64> = logits
        .iter()
        .map(|&v| libm::exp(f64::from(v) - max))
        .collect();
    let sum: f64 = exps.iter().sum();
    (exps.into_iter().map(|e| e / sum).collect(), max, sum)
}

/// Max-subtracted softmax of a rank-1 tensor.
pub fn softmax(logits: &Tensor) -> Result<Tensor, NnError> {
    logits.expect_rank("softmax input", 1)?;
    if !logits.is_finite() {
        return Err(NnError::NonFinite("logits"));
    }
    let (p, _, _) = softmax_f64(logits.data());
    Ok(to_tensor(logits.shape().to_vec(), p))
}

/// Vector-Jacobian product of softmax given its output probabilities.
pub fn softmax_backward(probabilities: &Tensor, grad_output: &Tensor) -> Result<Tensor, NnError> {
    grad_output.expect_shape("softmax grad", probabilities.shape())?;
    let p = probabilities.data();
    let g = grad_output.data();
    let dot: f64 = p
        .iter()
        .zip(g)
        .map(|(&a, &b)| f64::from(a) * f64::from(b))
        .sum();
    let data = p
        .iter()
        .zip(g)
        .map(|(&pi, &gi)| f64::from(pi) * (f64::from(gi) - dot))
        .collect();
    Ok(to_tensor(probabilities.shape().to_vec(), data))
}

/// Softmax cross-entropy of one sample. Returns the loss and the
/// probabilities; the gradient with respect to the logits is
/// `probabilities - one_hot(target)`.
pub fn softmax_cross_entropy(logits: &Tensor, target: usize) -> Result<(f64, Tensor), NnError> {
    logits.expect_rank("cross-entropy logits", 1)?;
    let k = logits.len();
    if k < 2 {
        return Err(NnError::TooFewClasses(k));
    }
    if target >= k {
        return Err(NnError::TargetOutOfRange { target, classes: k });
    }
    if !logits.is_finite() {
        return Err(NnError::NonFinite("logits"));
    }
    let (p, max, sum) = softmax_f64(logits.data());
    let loss = -(f64::from(logits.data()[target]) - max - libm::log(sum));
    Ok((loss, to_tensor(vec![k], p)))
}

/// Gradient of the cross-entropy loss with respect to the logits.
pub fn cross_entropy_grad(probabilities: &Tensor, target: usize) -> Tensor {
    let mut g = probabilities.clone();
    g.data_mut()[target] -= 1.0;
    g
}

/// `p <- p - learning_rate * g` for every parameter tensor. Shapes are
/// checked before anything is modified.
pub fn sgd_step<'a, I>(parameters: I, gradients: &[Tensor], learning_rate: f32) -> Result<(), NnError>
where
    I: IntoIterator<Item = &'a mut Tensor>,
{
    if !(learning_rate.is_finite() && learning_rate >= 0.0) {
        return Err(NnError::InvalidLearningRate);
    }
    let mut parameters: Vec<&mut Tensor> = parameters.into_iter().collect();
    if parameters.len() != gradients.len() {
        return Err(NnError::ShapeMismatch {
            op: "sgd parameter count",
            expected: vec![parameters.len()],
            actual: vec![gradients.len()],
        });
    }
    for (p, g) in parameters.iter().zip(gradients) {
        g.expect_shape("sgd gradient", p.shape())?;
    }
    for (p, g) in parameters.iter_mut().zip(gradients) {
        for (pv, &gv) in p.data_mut().iter_mut().zip(g.data()) {
            *pv -= learning_rate * gv;
        }
    }
    Ok(())
}

/// Bilinear resize of an `H x W x C` image with corner-aligned sampling:
/// output row `i` samples source row `i * (H - 1) / (H' - 1)`.
pub fn resize_image(input: &Tensor, target: (usize, usize)) -> Result<Tensor, NnError> {
    input.expect_rank("resize input", 3)?;
    let (th, tw) = target;
    if th == 0 || tw == 0 {
        return Err(NnError::EmptyDimension);
    }
    let (h, w, c) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    if (th, tw) == (h, w) {
        return Ok(input.clone());
    }
    let coords = |out: usize, src: usize| -> Vec<(usize, usize, f64)> {
        (0..out)
            .map(|i| {
                let s = if out > 1 {
                    i as f64 * (src - 1) as f64 / (out - 1) as f64
                } else {
                    0.0
                };
                let lo = (libm::floor(s) as usize).min(src - 1);
                let hi = (lo + 1).min(src - 1);
                (lo, hi, s - lo as f64)
            })
            .collect()
    };
    let rows = coords(th, h);
    let cols = coords(tw, w);
    let x = input.data();
    let px = |y: usize, xx: usize, ch: usize| f64::from(x[(y * w + xx) * c + ch]);
    let mut out = Vec::with_capacity(th * tw * c);
    for &(y0, y1, fy) in &rows {
        for &(x0, x1, fx) in &cols {
            for ch in 0..c {
                let top = px(y0, x0, ch) * (1.0 - fx) + px(y0, x1, ch) * fx;
                let bottom = px(y1, x0, ch) * (1.0 - fx) + px(y1, x1, ch) * fx;
                out.push((top * (1.0 - fy) + bottom * fy) as f32);
            }
        }
    }
    Tensor::new(vec![th, tw, c], out)
}
