//! Forward and backward kernels, independent of the tape.

use super::{conv, Scalar, Tensor};
use crate::error::{Error, Result};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.99;
pub const ELU_ALPHA: f64 = 1.0;

pub fn check_conv(input: &Tensor<impl Scalar>, weight: &Tensor<impl Scalar>, bias: &Tensor<impl Scalar>) -> Result<()> {
    let ws = weight.shape();
    if input.channels() != ws[1] {
        return Err(Error::ShapeMismatch(format!(
            "conv3d input has {} channels, weights expect {}",
            input.channels(),
            ws[1]
        )));
    }
    if ws[2..].iter().any(|k| k % 2 == 0) {
        return Err(Error::InvalidArgument(format!(
            "conv3d kernel extents must be odd, got {:?}",
            &ws[2..]
        )));
    }
    if bias.numel() != ws[0] {
        return Err(Error::ShapeMismatch(format!(
            "conv3d bias has {} entries for {} output channels",
            bias.numel(),
            ws[0]
        )));
    }
    Ok(())
}

/// Stride-1 cross-correlation with zero "same" padding.
pub fn conv3d_forward<T: Scalar>(input: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    check_conv(input, weight, bias)?;
    Ok(conv::forward(input, weight, bias))
}

pub struct ConvGrads<T> {
    pub input: Option<Tensor<T>>,
    pub weight: Option<Tensor<T>>,
    pub bias: Option<Tensor<T>>,
}

/// Gradients of [`conv3d_forward`]; each is computed only when requested.
pub fn conv3d_backward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
    need: [bool; 3],
) -> ConvGrads<T> {
    let cout = weight.shape()[0];
    let v = input.spatial_len();
    let gb = need[2].then(|| {
        let mut gb = Tensor::zeros([cout, 1, 1, 1, 1]);
        for item in grad_out.data().chunks_exact(cout * v) {
            for (c, chunk) in item.chunks_exact(v).enumerate() {
                let s: T = chunk.iter().copied().sum();
                gb.data_mut()[c] = gb.data()[c] + s;
            }
        }
        gb
    });
    ConvGrads {
        input: need[0].then(|| conv::input_grad(weight, grad_out, input.channels())),
        weight: need[1].then(|| conv::weight_grad_of(input, weight.shape(), grad_out)),
        bias: gb,
    }
}

/// Per-channel running statistics used by batch norm at inference.
#[derive(Clone, Debug, PartialEq)]
pub struct RunningStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
    pub momentum: T,
}

impl<T: Scalar> RunningStats<T> {
    pub fn new(channels: usize) -> Self {
        RunningStats {
            mean: vec![T::zero(); channels],
            var: vec![T::one(); channels],
            momentum: T::from_f64(BN_MOMENTUM),
        }
    }
}

pub struct BnSaved<T> {
    pub xhat: Tensor<T>,
    pub inv_std: Vec<T>,
}

fn check_bn<T: Scalar>(input: &Tensor<T>, gamma: &Tensor<T>, beta: &Tensor<T>) -> Result<()> {
    let c = input.channels();
    if gamma.numel() != c || beta.numel() != c {
        return Err(Error::ShapeMismatch(format!(
            "batch norm over {c} channels got gamma {} / beta {}",
            gamma.numel(),
            beta.numel()
        )));
    }
    Ok(())
}

fn for_each_channel_block<T: Scalar>(t: &Tensor<T>, c: usize, mut f: impl FnMut(usize, &[T])) {
    let v = t.spatial_len();
    let ch = t.channels();
    for b in 0..t.batch() {
        let start = (b * ch + c) * v;
        f(start, &t.data()[start..start + v]);
    }
}

/// Train-mode batch norm: batch statistics over (batch, spatial), updates
/// `running` with `running = m·running + (1 − m)·batch`.
pub fn batch_norm_train<T: Scalar>(
    input: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    running: &mut RunningStats<T>,
) -> Result<(Tensor<T>, BnSaved<T>)> {
    check_bn(input, gamma, beta)?;
    let ch = input.channels();
    let n = T::from_f64((input.batch() * input.spatial_len()) as f64);
    let eps = T::from_f64(BN_EPS);
    let mut out = Tensor::zeros(input.shape());
    let mut xhat = Tensor::zeros(input.shape());
    let mut inv_stds = Vec::with_capacity(ch);
    for c in 0..ch {
        let mut sum = T::zero();
        for_each_channel_block(input, c, |_, blk| sum = sum + blk.iter().copied().sum());
        let mean = sum / n;
        let mut sq = T::zero();
        for_each_channel_block(input, c, |_, blk| {
            sq = sq + blk.iter().map(|&x| (x - mean) * (x - mean)).sum()
        });
        let var = sq / n;
        let inv_std = T::one() / (var + eps).sqrt();
        inv_stds.push(inv_std);
        let (g, bt) = (gamma.data()[c], beta.data()[c]);
        let v = input.spatial_len();
        for b in 0..input.batch() {
            let start = (b * ch + c) * v;
            for i in start..start + v {
                let xh = (input.data()[i] - mean) * inv_std;
                xhat.data_mut()[i] = xh;
                out.data_mut()[i] = g * xh + bt;
            }
        }
        let m = running.momentum;
        running.mean[c] = m * running.mean[c] + (T::one() - m) * mean;
        running.var[c] = m * running.var[c] + (T::one() - m) * var;
    }
    Ok((
        out,
        BnSaved {
            xhat,
            inv_std: inv_stds,
        },
    ))
}

pub fn batch_norm_infer<T: Scalar>(
    input: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    running: &RunningStats<T>,
) -> Result<(Tensor<T>, BnSaved<T>)> {
    check_bn(input, gamma, beta)?;
    let ch = input.channels();
    let eps = T::from_f64(BN_EPS);
    let v = input.spatial_len();
    let mut out = Tensor::zeros(input.shape());
    let mut xhat = Tensor::zeros(input.shape());
    let mut inv_stds = Vec::with_capacity(ch);
    for c in 0..ch {
        let inv_std = T::one() / (running.var[c] + eps).sqrt();
        inv_stds.push(inv_std);
        let mean = running.mean[c];
        let (g, bt) = (gamma.data()[c], beta.data()[c]);
        for b in 0..input.batch() {
            let start = (b * ch + c) * v;
            for i in start..start + v {
                let xh = (input.data()[i] - mean) * inv_std;
                xhat.data_mut()[i] = xh;
                out.data_mut()[i] = g * xh + bt;
            }
        }
    }
    Ok((
        out,
        BnSaved {
            xhat,
            inv_std: inv_stds,
        },
    ))
}

/// Returns (d input, d gamma, d beta). With `batch_stats` the mean and
/// variance depend on the input; otherwise the normalisation is a fixed
/// affine map.
pub fn batch_norm_backward<T: Scalar>(
    saved: &BnSaved<T>,
    gamma: &Tensor<T>,
    grad_out: &Tensor<T>,
    batch_stats: bool,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let shape = grad_out.shape();
    let ch = shape[1];
    let v = grad_out.spatial_len();
    let n = T::from_f64((shape[0] * v) as f64);
    let mut gin = Tensor::zeros(shape);
    let mut gg = Tensor::zeros([ch, 1, 1, 1, 1]);
    let mut gbt = Tensor::zeros([ch, 1, 1, 1, 1]);
    for c in 0..ch {
        let mut sum_dy = T::zero();
        let mut sum_dy_xh = T::zero();
        for b in 0..shape[0] {
            let start = (b * ch + c) * v;
            for i in start..start + v {
                let dy = grad_out.data()[i];
                sum_dy = sum_dy + dy;
                sum_dy_xh = sum_dy_xh + dy * saved.xhat.data()[i];
            }
        }
        gg.data_mut()[c] = sum_dy_xh;
        gbt.data_mut()[c] = sum_dy;
        let g = gamma.data()[c];
        let inv_std = saved.inv_std[c];
        for b in 0..shape[0] {
            let start = (b * ch + c) * v;
            for i in start..start + v {
                let dy = grad_out.data()[i];
                gin.data_mut()[i] = if batch_stats {
                    let xh = saved.xhat.data()[i];
                    g * inv_std / n * (n * dy - sum_dy - xh * sum_dy_xh)
                } else {
                    g * inv_std * dy
                };
            }
        }
    }
    (gin, gg, gbt)
}

pub fn elu_forward<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    let alpha = T::from_f64(ELU_ALPHA);
    input.map(|x| if x > T::zero() { x } else { alpha * (x.exp() - T::one()) })
}

pub fn elu_backward<T: Scalar>(input: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    let alpha = T::from_f64(ELU_ALPHA);
    let data = input
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&x, &g)| if x > T::zero() { g } else { g * alpha * x.exp() })
        .collect();
    Tensor::new(input.shape(), data).expect("same shape")
}

pub fn concat_forward<T: Scalar>(inputs: &[&Tensor<T>]) -> Result<Tensor<T>> {
    let first = inputs
        .first()
        .ok_or_else(|| Error::Empty("concat of zero tensors".into()))?;
    let [b, _, d, h, w] = first.shape();
    for t in inputs {
        let s = t.shape();
        if s[0] != b || s[2..] != [d, h, w] {
            return Err(Error::ShapeMismatch(format!(
                "concat: {:?} incompatible with {:?}",
                s,
                first.shape()
            )));
        }
    }
    let total: usize = inputs.iter().map(|t| t.channels()).sum();
    let v = d * h * w;
    let mut data = Vec::with_capacity(b * total * v);
    for bi in 0..b {
        for t in inputs {
            let c = t.channels();
            data.extend_from_slice(&t.data()[bi * c * v..(bi + 1) * c * v]);
        }
    }
    Tensor::new([b, total, d, h, w], data)
}

/// Channel slice `[c0, c0 + n)` of `t`.
pub fn channel_slice<T: Scalar>(t: &Tensor<T>, c0: usize, n: usize) -> Tensor<T> {
    let [b, c, d, h, w] = t.shape();
    let v = d * h * w;
    let mut data = Vec::with_capacity(b * n * v);
    for bi in 0..b {
        let start = (bi * c + c0) * v;
        data.extend_from_slice(&t.data()[start..start + n * v]);
    }
    Tensor::new([b, n, d, h, w], data).expect("slice shape")
}

pub fn mse_forward<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<T> {
    if pred.shape() != target.shape() {
        return Err(Error::ShapeMismatch(format!(
            "mse: {:?} vs {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    let n = T::from_f64(pred.numel() as f64);
    let s: T = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| (p - t) * (p - t))
        .sum();
    Ok(s / n)
}
