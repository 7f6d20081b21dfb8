//! Forward and backward kernels for the layers used by the ECG encoder.
//!
//! Tensor layouts:
//! * activations: `[batch, length, channels]`
//! * conv kernels: `[width, in_channels, out_channels]` (cross-correlation,
//!   no bias)
//! * dense weights: `[in, out]` plus a bias vector
//!
//! `same` padding pads symmetrically with the extra zero on the right, so
//! a stride-`s` convolution over length `L` yields `ceil(L/s)` frames.
//!
//! Backward kernels return gradients in the same layouts. Per-sample work
//! is distributed through [`crate::par::map_indexed`]; parameter-gradient
//! reduction over samples is always a sequential fold in batch order.

use crate::error::{Error, Result};
use crate::par::map_indexed;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    Same,
    Valid,
}

/// Output length of a 1-D convolution.
pub fn conv1d_out_len(l: usize, k: usize, stride: usize, padding: Padding) -> Result<usize> {
    match padding {
        Padding::Same => Ok(l.div_ceil(stride)),
        Padding::Valid => {
            if l < k {
                Err(Error::dim(format!(
                    "length axis: input length {l} shorter than kernel width {k}"
                )))
            } else {
                Ok((l - k) / stride + 1)
            }
        }
    }
}

/// Left padding for `same` mode; total pad is `(out-1)*s + k - l`, extra on
/// the right when odd.
fn same_pad_left(l: usize, k: usize, stride: usize) -> usize {
    let out = l.div_ceil(stride);
    let total = ((out - 1) * stride + k).saturating_sub(l);
    total / 2
}

fn check_conv_args<F: Scalar>(
    input: &Tensor<F>,
    kernel: &Tensor<F>,
    stride: usize,
) -> Result<(usize, usize, usize, usize, usize)> {
    if input.rank() != 3 {
        return Err(Error::dim(format!(
            "input axis count: expected [batch, length, channels], got rank {}",
            input.rank()
        )));
    }
    if kernel.rank() != 3 {
        return Err(Error::dim(format!(
            "kernel axis count: expected [width, in, out], got rank {}",
            kernel.rank()
        )));
    }
    if stride == 0 {
        return Err(Error::config("conv1d stride must be positive"));
    }
    let (b, l, cin) = (input.dim(0), input.dim(1), input.dim(2));
    let (k, kcin, cout) = (kernel.dim(0), kernel.dim(1), kernel.dim(2));
    if k == 0 {
        return Err(Error::dim("kernel width axis: must be >= 1".to_string()));
    }
    if kcin != cin {
        return Err(Error::dim(format!(
            "channel axis: input has {cin} channels, kernel expects {kcin}"
        )));
    }
    Ok((b, l, cin, k, cout))
}

/// Cross-correlation of `input [B,L,Cin]` with `kernel [K,Cin,Cout]`.
pub fn conv1d_forward<F: Scalar>(
    input: &Tensor<F>,
    kernel: &Tensor<F>,
    stride: usize,
    padding: Padding,
) -> Result<Tensor<F>> {
    let (b, l, cin, k, cout) = check_conv_args(input, kernel, stride)?;
    let lout = conv1d_out_len(l, k, stride, padding)?;
    let pad_left = match padding {
        Padding::Same => same_pad_left(l, k, stride),
        Padding::Valid => 0,
    };
    let ker = kernel.data();
    let inp = input.data();
    let sample = l * cin;

    let rows: Vec<Vec<F>> = map_indexed(b, |bi| {
        let x = &inp[bi * sample..(bi + 1) * sample];
        let mut out = vec![F::zero(); lout * cout];
        for t in 0..lout {
            let orow = &mut out[t * cout..(t + 1) * cout];
            let base = (t * stride) as isize - pad_left as isize;
            for kk in 0..k {
                let ti = base + kk as isize;
                if ti < 0 || ti >= l as isize {
                    continue;
                }
                let xrow = &x[ti as usize * cin..ti as usize * cin + cin];
                let krow = &ker[kk * cin * cout..(kk + 1) * cin * cout];
                for (ci, &xv) in xrow.iter().enumerate() {
                    let kr = &krow[ci * cout..ci * cout + cout];
                    for (o, &kv) in orow.iter_mut().zip(kr.iter()) {
                        *o += xv * kv;
                    }
                }
            }
        }
        out
    });

    let mut data = Vec::with_capacity(b * lout * cout);
    for row in rows {
        data.extend_from_slice(&row);
    }
    Tensor::from_vec(&[b, lout, cout], data)
}

/// Gradients of [`conv1d_forward`] w.r.t. the input and the kernel.
pub fn conv1d_backward<F: Scalar>(
    input: &Tensor<F>,
    kernel: &Tensor<F>,
    stride: usize,
    padding: Padding,
    grad_out: &Tensor<F>,
) -> Result<(Tensor<F>, Tensor<F>)> {
    let (b, l, cin, k, cout) = check_conv_args(input, kernel, stride)?;
    let lout = conv1d_out_len(l, k, stride, padding)?;
    if grad_out.shape() != [b, lout, cout] {
        return Err(Error::dim(format!(
            "grad_out axes: expected {:?}, got {:?}",
            [b, lout, cout],
            grad_out.shape()
        )));
    }
    let pad_left = match padding {
        Padding::Same => same_pad_left(l, k, stride),
        Padding::Valid => 0,
    };
    let ker = kernel.data();
    let inp = input.data();
    let gout = grad_out.data();
    let sample = l * cin;
    let out_sample = lout * cout;

    let per_sample: Vec<(Vec<F>, Vec<F>)> = map_indexed(b, |bi| {
        let x = &inp[bi * sample..(bi + 1) * sample];
        let g = &gout[bi * out_sample..(bi + 1) * out_sample];
        let mut gin = vec![F::zero(); sample];
        let mut gker = vec![F::zero(); k * cin * cout];
        for t in 0..lout {
            let grow = &g[t * cout..(t + 1) * cout];
            let base = (t * stride) as isize - pad_left as isize;
            for kk in 0..k {
                let ti = base + kk as isize;
                if ti < 0 || ti >= l as isize {
                    continue;
                }
                let ti = ti as usize;
                let xrow = &x[ti * cin..ti * cin + cin];
                let girow = &mut gin[ti * cin..ti * cin + cin];
                for ci in 0..cin {
                    let koff = (kk * cin + ci) * cout;
                    let kr = &ker[koff..koff + cout];
                    let mut acc = F::zero();
                    for (kv, gv) in kr.iter().zip(grow.iter()) {
                        acc += *kv * *gv;
                    }
                    girow[ci] += acc;
                    let xv = xrow[ci];
                    let gkr = &mut gker[koff..koff + cout];
                    for (gk, gv) in gkr.iter_mut().zip(grow.iter()) {
                        *gk += xv * *gv;
                    }
                }
            }
        }
        (gin, gker)
    });

    let mut gin = Vec::with_capacity(b * sample);
    let mut gker = vec![F::zero(); k * cin * cout];
    for (gi, gk) in per_sample {
        gin.extend_from_slice(&gi);
        for (a, v) in gker.iter_mut().zip(gk.iter()) {
            *a += *v;
        }
    }
    Ok((
        Tensor::from_vec(&[b, l, cin], gin)?,
        Tensor::from_vec(&[k, cin, cout], gker)?,
    ))
}

fn check_bn_args<F: Scalar>(
    input: &Tensor<F>,
    per_channel: &[&Tensor<F>],
    epsilon: f64,
) -> Result<(usize, usize, usize)> {
    if input.rank() != 3 {
        return Err(Error::dim(format!(
            "input axis count: expected [batch, length, channels], got rank {}",
            input.rank()
        )));
    }
    if epsilon <= 0.0 {
        return Err(Error::config("batch-norm epsilon must be positive"));
    }
    let c = input.dim(2);
    for t in per_channel {
        if t.shape() != [c] {
            return Err(Error::dim(format!(
                "channel axis: expected [{}], got {:?}",
                c,
                t.shape()
            )));
        }
    }
    Ok((input.dim(0), input.dim(1), c))
}

/// Intermediates needed by [`batchnorm_backward`].
#[derive(Debug, Clone)]
pub struct BnCache<F> {
    pub x_hat: Tensor<F>,
    pub inv_std: Vec<F>,
}

/// Train-mode batch norm over the batch and length axes of `[B,L,C]`.
///
/// Returns the output, the backward cache, and the biased batch mean and
/// variance per channel (for the moving-statistic update).
#[allow(clippy::type_complexity)]
pub fn batchnorm_forward_train<F: Scalar>(
    input: &Tensor<F>,
    gamma: &Tensor<F>,
    beta: &Tensor<F>,
    epsilon: f64,
) -> Result<(Tensor<F>, BnCache<F>, Vec<F>, Vec<F>)> {
    let (b, l, c) = check_bn_args(input, &[gamma, beta], epsilon)?;
    let n = b * l;
    if n == 0 {
        return Err(Error::dim("batch/length axes: empty input".to_string()));
    }
    let x = input.data();
    let inv_n = F::one() / F::from_f64_lossy(n as f64);
    let eps = F::from_f64_lossy(epsilon);

    let mut mean = vec![F::zero(); c];
    for row in x.chunks_exact(c) {
        for (m, &v) in mean.iter_mut().zip(row.iter()) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m *= inv_n;
    }
    let mut var = vec![F::zero(); c];
    for row in x.chunks_exact(c) {
        for ((s, &v), &m) in var.iter_mut().zip(row.iter()).zip(mean.iter()) {
            let d = v - m;
            *s += d * d;
        }
    }
    for s in var.iter_mut() {
        *s *= inv_n;
    }
    let inv_std: Vec<F> = var.iter().map(|&v| (v + eps).sqrt().recip()).collect();

    let mut x_hat = vec![F::zero(); x.len()];
    let mut out = vec![F::zero(); x.len()];
    let g = gamma.data();
    let bt = beta.data();
    for (xrow, (hrow, orow)) in x
        .chunks_exact(c)
        .zip(x_hat.chunks_exact_mut(c).zip(out.chunks_exact_mut(c)))
    {
        for ci in 0..c {
            let h = (xrow[ci] - mean[ci]) * inv_std[ci];
            hrow[ci] = h;
            orow[ci] = g[ci] * h + bt[ci];
        }
    }
    Ok((
        Tensor::from_vec(&[b, l, c], out)?,
        BnCache {
            x_hat: Tensor::from_vec(&[b, l, c], x_hat)?,
            inv_std,
        },
        mean,
        var,
    ))
}

/// Inference-mode batch norm using stored moving statistics.
pub fn batchnorm_forward_infer<F: Scalar>(
    input: &Tensor<F>,
    gamma: &Tensor<F>,
    beta: &Tensor<F>,
    moving_mean: &Tensor<F>,
    moving_var: &Tensor<F>,
    epsilon: f64,
) -> Result<Tensor<F>> {
    let (b, l, c) = check_bn_args(input, &[gamma, beta, moving_mean, moving_var], epsilon)?;
    let eps = F::from_f64_lossy(epsilon);
    let g = gamma.data();
    let bt = beta.data();
    let mm = moving_mean.data();
    let scale: Vec<F> = moving_var
        .data()
        .iter()
        .zip(g.iter())
        .map(|(&v, &gv)| gv * (v + eps).sqrt().recip())
        .collect();
    let mut out = vec![F::zero(); input.len()];
    for (xrow, orow) in input.data().chunks_exact(c).zip(out.chunks_exact_mut(c)) {
        for ci in 0..c {
            orow[ci] = (xrow[ci] - mm[ci]) * scale[ci] + bt[ci];
        }
    }
    Tensor::from_vec(&[b, l, c], out)
}

/// Gradients of train-mode batch norm w.r.t. input, gamma, and beta.
pub fn batchnorm_backward<F: Scalar>(
    grad_out: &Tensor<F>,
    gamma: &Tensor<F>,
    cache: &BnCache<F>,
) -> Result<(Tensor<F>, Vec<F>, Vec<F>)> {
    let shape = cache.x_hat.shape().to_vec();
    if grad_out.shape() != shape {
        return Err(Error::dim(format!(
            "grad_out axes: expected {:?}, got {:?}",
            shape,
            grad_out.shape()
        )));
    }
    let c = shape[2];
    let n = shape[0] * shape[1];
    let inv_n = F::one() / F::from_f64_lossy(n as f64);
    let g = gamma.data();
    let xh = cache.x_hat.data();
    let go = grad_out.data();

    let mut dgamma = vec![F::zero(); c];
    let mut dbeta = vec![F::zero(); c];
    for (grow, hrow) in go.chunks_exact(c).zip(xh.chunks_exact(c)) {
        for ci in 0..c {
            dgamma[ci] += grow[ci] * hrow[ci];
            dbeta[ci] += grow[ci];
        }
    }
    // gin = gamma * inv_std / n * (n*go - dbeta - x_hat * dgamma)
    let mut gin = vec![F::zero(); go.len()];
    let nf = F::from_f64_lossy(n as f64);
    for ((grow, hrow), irow) in go
        .chunks_exact(c)
        .zip(xh.chunks_exact(c))
        .zip(gin.chunks_exact_mut(c))
    {
        for ci in 0..c {
            let t = nf * grow[ci] - dbeta[ci] - hrow[ci] * dgamma[ci];
            irow[ci] = g[ci] * cache.inv_std[ci] * inv_n * t;
        }
    }
    Ok((Tensor::from_vec(&shape, gin)?, dgamma, dbeta))
}

/// Max pooling over the length axis; also returns the argmax source index
/// per output element (first index on ties) for the backward pass.
pub fn maxpool1d_forward<F: Scalar>(
    input: &Tensor<F>,
    pool: usize,
    stride: usize,
) -> Result<(Tensor<F>, Vec<u32>)> {
    if input.rank() != 3 {
        return Err(Error::dim(format!(
            "input axis count: expected [batch, length, channels], got rank {}",
            input.rank()
        )));
    }
    if pool == 0 || stride == 0 {
        return Err(Error::config("max-pool size and stride must be positive"));
    }
    let (b, l, c) = (input.dim(0), input.dim(1), input.dim(2));
    if l < pool {
        return Err(Error::dim(format!(
            "length axis: input length {l} shorter than pool {pool}"
        )));
    }
    let lout = (l - pool) / stride + 1;
    let x = input.data();
    let mut out = vec![F::zero(); b * lout * c];
    let mut arg = vec![0u32; b * lout * c];
    for bi in 0..b {
        let xs = &x[bi * l * c..(bi + 1) * l * c];
        for t in 0..lout {
            let off = (bi * lout + t) * c;
            for ci in 0..c {
                let mut best = xs[t * stride * c + ci];
                let mut best_i = t * stride;
                for p in 1..pool {
                    let ti = t * stride + p;
                    let v = xs[ti * c + ci];
                    if v > best {
                        best = v;
                        best_i = ti;
                    }
                }
                out[off + ci] = best;
                arg[off + ci] = best_i as u32;
            }
        }
    }
    Ok((Tensor::from_vec(&[b, lout, c], out)?, arg))
}

/// Routes each output gradient to its argmax source position.
pub fn maxpool1d_backward<F: Scalar>(
    grad_out: &Tensor<F>,
    argmax: &[u32],
    input_shape: &[usize],
) -> Result<Tensor<F>> {
    if grad_out.len() != argmax.len() {
        return Err(Error::dim(
            "argmax length does not match grad_out".to_string(),
        ));
    }
    let (b, l, c) = (input_shape[0], input_shape[1], input_shape[2]);
    let lout = grad_out.dim(1);
    let mut gin = vec![F::zero(); b * l * c];
    let go = grad_out.data();
    for bi in 0..b {
        for t in 0..lout {
            let off = (bi * lout + t) * c;
            for ci in 0..c {
                let src = argmax[off + ci] as usize;
                gin[(bi * l + src) * c + ci] += go[off + ci];
            }
        }
    }
    Tensor::from_vec(input_shape, gin)
}

/// Mean over the length axis: `[B,L,C] -> [B,C]`.
pub fn global_avg_pool<F: Scalar>(input: &Tensor<F>) -> Result<Tensor<F>> {
    if input.rank() != 3 {
        return Err(Error::dim(format!(
            "input axis count: expected [batch, length, channels], got rank {}",
            input.rank()
        )));
    }
    let (b, l, c) = (input.dim(0), input.dim(1), input.dim(2));
    if l == 0 {
        return Err(Error::dim("length axis: must be >= 1".to_string()));
    }
    let inv_l = F::one() / F::from_f64_lossy(l as f64);
    let x = input.data();
    let mut out = vec![F::zero(); b * c];
    for bi in 0..b {
        let orow = &mut out[bi * c..(bi + 1) * c];
        for t in 0..l {
            let xrow = &x[(bi * l + t) * c..(bi * l + t + 1) * c];
            for (o, &v) in orow.iter_mut().zip(xrow.iter()) {
                *o += v;
            }
        }
        for o in orow.iter_mut() {
            *o *= inv_l;
        }
    }
    Tensor::from_vec(&[b, c], out)
}

pub fn global_avg_pool_backward<F: Scalar>(grad_out: &Tensor<F>, l: usize) -> Result<Tensor<F>> {
    let (b, c) = (grad_out.dim(0), grad_out.dim(1));
    let inv_l = F::one() / F::from_f64_lossy(l as f64);
    let go = grad_out.data();
    let mut gin = vec![F::zero(); b * l * c];
    for bi in 0..b {
        let grow = &go[bi * c..(bi + 1) * c];
        for t in 0..l {
            let irow = &mut gin[(bi * l + t) * c..(bi * l + t + 1) * c];
            for (o, &v) in irow.iter_mut().zip(grow.iter()) {
                *o = v * inv_l;
            }
        }
    }
    Tensor::from_vec(&[b, l, c], gin)
}

/// Affine map `input [B,Cin] x weight [Cin,Cout] + bias [Cout]`.
pub fn dense_forward<F: Scalar>(
    input: &Tensor<F>,
    weight: &Tensor<F>,
    bias: &Tensor<F>,
) -> Result<Tensor<F>> {
    if input.rank() != 2 || weight.rank() != 2 {
        return Err(Error::dim(
            "dense expects rank-2 input and weight".to_string(),
        ));
    }
    let (b, cin) = (input.dim(0), input.dim(1));
    let (wcin, cout) = (weight.dim(0), weight.dim(1));
    if cin != wcin {
        return Err(Error::dim(format!(
            "feature axis: input has {cin}, weight expects {wcin}"
        )));
    }
    if bias.shape() != [cout] {
        return Err(Error::dim(format!(
            "bias axis: expected [{cout}], got {:?}",
            bias.shape()
        )));
    }
    let x = input.data();
    let w = weight.data();
    let bv = bias.data();
    let mut out = vec![F::zero(); b * cout];
    for bi in 0..b {
        let orow = &mut out[bi * cout..(bi + 1) * cout];
        orow.copy_from_slice(bv);
        let xrow = &x[bi * cin..(bi + 1) * cin];
        for (ci, &xv) in xrow.iter().enumerate() {
            let wrow = &w[ci * cout..(ci + 1) * cout];
            for (o, &wv) in orow.iter_mut().zip(wrow.iter()) {
                *o += xv * wv;
            }
        }
    }
    Tensor::from_vec(&[b, cout], out)
}

/// Gradients of [`dense_forward`] w.r.t. input, weight, and bias.
#[allow(clippy::type_complexity)]
pub fn dense_backward<F: Scalar>(
    input: &Tensor<F>,
    weight: &Tensor<F>,
    grad_out: &Tensor<F>,
) -> Result<(Tensor<F>, Tensor<F>, Tensor<F>)> {
    let (b, cin) = (input.dim(0), input.dim(1));
    let (_, cout) = (weight.dim(0), weight.dim(1));
    if grad_out.shape() != [b, cout] {
        return Err(Error::dim(format!(
            "grad_out axes: expected {:?}, got {:?}",
            [b, cout],
            grad_out.shape()
        )));
    }
    let x = input.data();
    let w = weight.data();
    let go = grad_out.data();
    let mut gin = vec![F::zero(); b * cin];
    let mut gw = vec![F::zero(); cin * cout];
    let mut gb = vec![F::zero(); cout];
    for bi in 0..b {
        let grow = &go[bi * cout..(bi + 1) * cout];
        let xrow = &x[bi * cin..(bi + 1) * cin];
        let girow = &mut gin[bi * cin..(bi + 1) * cin];
        for (g, &v) in gb.iter_mut().zip(grow.iter()) {
            *g += v;
        }
        for ci in 0..cin {
            let wrow = &w[ci * cout..(ci + 1) * cout];
            let mut acc = F::zero();
            for (&wv, &gv) in wrow.iter().zip(grow.iter()) {
                acc += wv * gv;
            }
            girow[ci] = acc;
            let gwrow = &mut gw[ci * cout..(ci + 1) * cout];
            let xv = xrow[ci];
            for (g, &gv) in gwrow.iter_mut().zip(grow.iter()) {
                *g += xv * gv;
            }
        }
    }
    Ok((
        Tensor::from_vec(&[b, cin], gin)?,
        Tensor::from_vec(weight.shape(), gw)?,
        Tensor::from_vec(&[cout], gb)?,
    ))
}

/// ReLU; the mask records strictly-positive pre-activations.
pub fn relu_forward<F: Scalar>(input: &Tensor<F>) -> (Tensor<F>, Vec<bool>) {
    let mask: Vec<bool> = input.data().iter().map(|&x| x > F::zero()).collect();
    let mut out = input.clone();
    for (x, &m) in out.data_mut().iter_mut().zip(mask.iter()) {
        if !m {
            *x = F::zero();
        }
    }
    (out, mask)
}

pub fn relu_backward<F: Scalar>(grad_out: &Tensor<F>, mask: &[bool]) -> Result<Tensor<F>> {
    if grad_out.len() != mask.len() {
        return Err(Error::dim("relu mask length mismatch".to_string()));
    }
    let mut gin = grad_out.clone();
    for (g, &m) in gin.data_mut().iter_mut().zip(mask.iter()) {
        if !m {
            *g = F::zero();
        }
    }
    Ok(gin)
}
