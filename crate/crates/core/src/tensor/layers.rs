use super::{LayerGrad, Scalar, Tensor};
use crate::error::{Error, Result};

const K: usize = 3;
const TAPS: usize = K * K;

/// Unfolds a zero-padded C×H×W input into a (C·9)×(H·W) matrix, one row per
/// kernel tap.
fn im2col<T: Scalar>(input: &[T], c: usize, h: usize, w: usize) -> Vec<T> {
    let hw = h * w;
    let mut col = vec![T::zero(); c * TAPS * hw];
    for ci in 0..c {
        let plane = &input[ci * hw..(ci + 1) * hw];
        for ky in 0..K {
            for kx in 0..K {
                let row = &mut col[(ci * TAPS + ky * K + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = &plane[sy as usize * w..][..w];
                    let dst = &mut row[y * w..][..w];
                    match kx {
                        0 => dst[1..].copy_from_slice(&src[..w - 1]),
                        1 => dst.copy_from_slice(src),
                        _ => dst[..w - 1].copy_from_slice(&src[1..]),
                    }
                }
            }
        }
    }
    col
}

/// Adjoint of [`im2col`]: scatters tap rows back onto the input grid.
fn col2im<T: Scalar>(col: &[T], c: usize, h: usize, w: usize) -> Vec<T> {
    let hw = h * w;
    let mut out = vec![T::zero(); c * hw];
    for ci in 0..c {
        let plane = &mut out[ci * hw..(ci + 1) * hw];
        for ky in 0..K {
            for kx in 0..K {
                let row = &col[(ci * TAPS + ky * K + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let dst = &mut plane[sy as usize * w..][..w];
                    let src = &row[y * w..][..w];
                    match kx {
                        0 => dst[..w - 1]
                            .iter_mut()
                            .zip(&src[1..])
                            .for_each(|(d, &s)| *d = *d + s),
                        1 => dst.iter_mut().zip(src).for_each(|(d, &s)| *d = *d + s),
                        _ => dst[1..]
                            .iter_mut()
                            .zip(&src[..w - 1])
                            .for_each(|(d, &s)| *d = *d + s),
                    }
                }
            }
        }
    }
    out
}

/// Row ranges of a 3×3 tap at offset `(dy, dx)`: output rows/columns whose
/// shifted source lies inside the input.
#[inline]
fn tap_range(d: isize, n: usize) -> (usize, usize) {
    let lo = (-d).max(0) as usize;
    let hi = (n as isize - d.max(0)) as usize;
    (lo, hi)
}

/// Direct shifted-row convolution; faster than im2col when there are few
/// output channels.
fn conv_direct<T: Scalar>(x: &[T], k: &[T], bias: &[T], c_in: usize, c_out: usize, h: usize, w: usize) -> Vec<T> {
    let hw = h * w;
    let mut out = vec![T::zero(); c_out * hw];
    for co in 0..c_out {
        let plane = &mut out[co * hw..(co + 1) * hw];
        plane.iter_mut().for_each(|v| *v = bias[co]);
        for ci in 0..c_in {
            let src = &x[ci * hw..(ci + 1) * hw];
            for tap in 0..TAPS {
                let kv = k[(co * c_in + ci) * TAPS + tap];
                let (dy, dx) = ((tap / K) as isize - 1, (tap % K) as isize - 1);
                let (y0, y1) = tap_range(dy, h);
                let (x0, x1) = tap_range(dx, w);
                for y in y0..y1 {
                    let sy = (y as isize + dy) as usize;
                    let srow = &src[sy * w + (x0 as isize + dx) as usize..][..x1 - x0];
                    let drow = &mut plane[y * w + x0..y * w + x1];
                    for (d, &s) in drow.iter_mut().zip(srow) {
                        *d = *d + kv * s;
                    }
                }
            }
        }
    }
    out
}

fn conv_direct_backward<T: Scalar>(
    x: &[T],
    k: &[T],
    d_out: &[T],
    c_in: usize,
    c_out: usize,
    h: usize,
    w: usize,
    want_input: bool,
) -> (Vec<T>, Option<Vec<T>>) {
    let hw = h * w;
    let mut dk = vec![T::zero(); c_out * c_in * TAPS];
    let mut dx_buf = want_input.then(|| vec![T::zero(); c_in * hw]);
    for co in 0..c_out {
        let g = &d_out[co * hw..(co + 1) * hw];
        for ci in 0..c_in {
            let src = &x[ci * hw..(ci + 1) * hw];
            for tap in 0..TAPS {
                let kidx = (co * c_in + ci) * TAPS + tap;
                let (dy, dx) = ((tap / K) as isize - 1, (tap % K) as isize - 1);
                let (y0, y1) = tap_range(dy, h);
                let (x0, x1) = tap_range(dx, w);
                let mut acc = T::zero();
                for y in y0..y1 {
                    let s0 = ((y as isize + dy) as usize) * w + (x0 as isize + dx) as usize;
                    let grow = &g[y * w + x0..y * w + x1];
                    acc = acc + grow.iter().zip(&src[s0..s0 + (x1 - x0)]).fold(T::zero(), |a, (&gv, &sv)| a + gv * sv);
                    if let Some(dxb) = dx_buf.as_mut() {
                        let kv = k[kidx];
                        let drow = &mut dxb[ci * hw + s0..ci * hw + s0 + (x1 - x0)];
                        for (d, &gv) in drow.iter_mut().zip(grow) {
                            *d = *d + kv * gv;
                        }
                    }
                }
                dk[kidx] = acc;
            }
        }
    }
    (dk, dx_buf)
}

/// Output channel count at or below which the direct kernels are used.
const DIRECT_MAX_COUT: usize = 2;

fn conv_dims<T: Scalar>(
    input: &Tensor<T>,
    kernels: &Tensor<T>,
) -> Result<(usize, usize, usize, usize)> {
    let (c_in, h, w) = input.dims3()?;
    match kernels.shape() {
        &[c_out, kc, 3, 3] if kc == c_in => Ok((c_in, c_out, h, w)),
        s => Err(Error::InvalidShape(format!(
            "conv2d: kernels {s:?} do not match input channels {c_in} with a 3×3 footprint"
        ))),
    }
}

/// Same-size 3×3 cross-correlation with zero padding 1, plus bias.
pub fn conv2d<T: Scalar>(
    input: &Tensor<T>,
    kernels: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>> {
    let (c_in, c_out, h, w) = conv_dims(input, kernels)?;
    if bias.shape() != [c_out] {
        return Err(Error::InvalidShape(format!(
            "conv2d: bias {:?} for {c_out} output channels",
            bias.shape()
        )));
    }
    if c_out <= DIRECT_MAX_COUT {
        let out = conv_direct(input.data(), kernels.data(), bias.data(), c_in, c_out, h, w);
        return Tensor::new(vec![c_out, h, w], out);
    }
    let hw = h * w;
    let rows = c_in * TAPS;
    let col = im2col(input.data(), c_in, h, w);
    let mut out = Vec::with_capacity(c_out * hw);
    for &b in bias.data() {
        out.extend(std::iter::repeat_n(b, hw));
    }
    T::gemm(
        c_out,
        rows,
        hw,
        kernels.data(),
        rows as isize,
        1,
        &col,
        hw as isize,
        1,
        T::one(),
        &mut out,
        hw as isize,
        1,
    );
    Tensor::new(vec![c_out, h, w], out)
}

/// Gradients of [`conv2d`] with respect to input, kernels and bias.
pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    kernels: &Tensor<T>,
    d_out: &Tensor<T>,
) -> Result<LayerGrad<T>> {
    let (d_kernels, d_bias, d_input) = conv_backward_impl(input, kernels, d_out, true)?;
    Ok(LayerGrad {
        d_input: d_input.expect("requested"),
        d_params: vec![d_kernels, d_bias],
    })
}

/// Parameter gradients only; skips the input adjoint for first layers.
pub(crate) fn conv2d_backward_params<T: Scalar>(
    input: &Tensor<T>,
    kernels: &Tensor<T>,
    d_out: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let (dk, db, _) = conv_backward_impl(input, kernels, d_out, false)?;
    Ok((dk, db))
}

type ConvGrads<T> = (Tensor<T>, Tensor<T>, Option<Tensor<T>>);

fn conv_backward_impl<T: Scalar>(
    input: &Tensor<T>,
    kernels: &Tensor<T>,
    d_out: &Tensor<T>,
    want_input: bool,
) -> Result<ConvGrads<T>> {
    let (c_in, c_out, h, w) = conv_dims(input, kernels)?;
    if d_out.shape() != [c_out, h, w] {
        return Err(Error::InvalidShape(format!(
            "conv2d backward: upstream {:?}, expected {:?}",
            d_out.shape(),
            [c_out, h, w]
        )));
    }
    let hw = h * w;
    let db: Vec<T> = d_out
        .data()
        .chunks_exact(hw)
        .map(|plane| plane.iter().fold(T::zero(), |acc, &v| acc + v))
        .collect();
    if c_out <= DIRECT_MAX_COUT {
        let (dk, dx) = conv_direct_backward(input.data(), kernels.data(), d_out.data(), c_in, c_out, h, w, want_input);
        return Ok((
            Tensor::new(kernels.shape().to_vec(), dk)?,
            Tensor::new(vec![c_out], db)?,
            dx.map(|d| Tensor::new(vec![c_in, h, w], d)).transpose()?,
        ));
    }
    let rows = c_in * TAPS;
    let col = im2col(input.data(), c_in, h, w);

    // dK = dOut · colᵀ
    let mut dk = vec![T::zero(); c_out * rows];
    T::gemm(
        c_out,
        hw,
        rows,
        d_out.data(),
        hw as isize,
        1,
        &col,
        1,
        hw as isize,
        T::zero(),
        &mut dk,
        rows as isize,
        1,
    );

    let d_input = if want_input {
        // dCol = Kᵀ · dOut
        let mut dcol = vec![T::zero(); rows * hw];
        T::gemm(
            rows,
            c_out,
            hw,
            kernels.data(),
            1,
            rows as isize,
            d_out.data(),
            hw as isize,
            1,
            T::zero(),
            &mut dcol,
            hw as isize,
            1,
        );
        Some(Tensor::new(vec![c_in, h, w], col2im(&dcol, c_in, h, w))?)
    } else {
        None
    };
    Ok((
        Tensor::new(kernels.shape().to_vec(), dk)?,
        Tensor::new(vec![c_out], db)?,
        d_input,
    ))
}

/// Non-overlapping 2×2 max pooling. Returns the pooled tensor and, per
/// output element, the flat input index that won. Ties go to the first
/// element in row-major scan order.
pub fn maxpool2<T: Scalar>(input: &Tensor<T>) -> Result<(Tensor<T>, Vec<usize>)> {
    let (c, h, w) = input.dims3()?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::InvalidShape(format!(
            "maxpool2 needs even spatial extents, got {h}×{w}"
        )));
    }
    let (oh, ow) = (h / 2, w / 2);
    let src = input.data();
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut argmax = Vec::with_capacity(c * oh * ow);
    for ci in 0..c {
        let base = ci * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let top = base + 2 * oy * w + 2 * ox;
                let mut best = top;
                for idx in [top + 1, top + w, top + w + 1] {
                    if src[idx] > src[best] {
                        best = idx;
                    }
                }
                out.push(src[best]);
                argmax.push(best);
            }
        }
    }
    Ok((Tensor::new(vec![c, oh, ow], out)?, argmax))
}

/// Routes each upstream gradient to the recorded argmax position.
pub fn maxpool2_backward<T: Scalar>(
    input_shape: &[usize],
    argmax: &[usize],
    d_out: &Tensor<T>,
) -> Result<Tensor<T>> {
    if argmax.len() != d_out.len() {
        return Err(Error::InvalidShape(format!(
            "maxpool2 backward: {} argmax entries for {} gradients",
            argmax.len(),
            d_out.len()
        )));
    }
    let mut d_in = Tensor::zeros(input_shape);
    let buf = d_in.data_mut();
    for (&idx, &g) in argmax.iter().zip(d_out.data()) {
        let slot = buf.get_mut(idx).ok_or_else(|| {
            Error::InvalidShape(format!("maxpool2 backward: argmax {idx} out of range"))
        })?;
        *slot = *slot + g;
    }
    Ok(d_in)
}

/// Nearest-neighbour 2× upsampling.
pub fn upsample2<T: Scalar>(input: &Tensor<T>) -> Result<Tensor<T>> {
    let (c, h, w) = input.dims3()?;
    let (oh, ow) = (2 * h, 2 * w);
    let src = input.data();
    let mut out = vec![T::zero(); c * oh * ow];
    for ci in 0..c {
        for y in 0..oh {
            let srow = &src[ci * h * w + (y / 2) * w..][..w];
            let drow = &mut out[ci * oh * ow + y * ow..][..ow];
            for (x, d) in drow.iter_mut().enumerate() {
                *d = srow[x / 2];
            }
        }
    }
    Tensor::new(vec![c, oh, ow], out)
}

/// Sums the four upstream gradients of each replicated source pixel.
pub fn upsample2_backward<T: Scalar>(d_out: &Tensor<T>) -> Result<Tensor<T>> {
    let (c, oh, ow) = d_out.dims3()?;
    if oh % 2 != 0 || ow % 2 != 0 {
        return Err(Error::InvalidShape(format!(
            "upsample2 backward: odd upstream extents {oh}×{ow}"
        )));
    }
    let (h, w) = (oh / 2, ow / 2);
    let src = d_out.data();
    let mut d_in = vec![T::zero(); c * h * w];
    for ci in 0..c {
        for y in 0..oh {
            let srow = &src[ci * oh * ow + y * ow..][..ow];
            let drow = &mut d_in[ci * h * w + (y / 2) * w..][..w];
            for (x, &g) in srow.iter().enumerate() {
                drow[x / 2] = drow[x / 2] + g;
            }
        }
    }
    Tensor::new(vec![c, h, w], d_in)
}

fn dense_dims<T: Scalar>(input: &Tensor<T>, weights: &Tensor<T>) -> Result<(usize, usize)> {
    match (input.shape(), weights.shape()) {
        (&[n], &[m, wn]) if wn == n => Ok((m, n)),
        (i, wt) => Err(Error::InvalidShape(format!(
            "dense: input {i:?} incompatible with weights {wt:?}"
        ))),
    }
}

/// Affine map `weights · input + bias`.
pub fn dense<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>> {
    let (m, n) = dense_dims(input, weights)?;
    if bias.shape() != [m] {
        return Err(Error::InvalidShape(format!(
            "dense: bias {:?} for {m} outputs",
            bias.shape()
        )));
    }
    let x = input.data();
    let out = weights
        .data()
        .chunks_exact(n)
        .zip(bias.data())
        .map(|(row, &b)| row.iter().zip(x).fold(b, |acc, (&wv, &xv)| acc + wv * xv))
        .collect();
    Tensor::new(vec![m], out)
}

pub fn dense_backward<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    d_out: &Tensor<T>,
) -> Result<LayerGrad<T>> {
    let (m, n) = dense_dims(input, weights)?;
    if d_out.shape() != [m] {
        return Err(Error::InvalidShape(format!(
            "dense backward: upstream {:?} for {m} outputs",
            d_out.shape()
        )));
    }
    let x = input.data();
    let g = d_out.data();
    let mut dw = Vec::with_capacity(m * n);
    for &gi in g {
        dw.extend(x.iter().map(|&xv| gi * xv));
    }
    let mut dx = vec![T::zero(); n];
    for (row, &gi) in weights.data().chunks_exact(n).zip(g) {
        for (d, &wv) in dx.iter_mut().zip(row) {
            *d = *d + wv * gi;
        }
    }
    Ok(LayerGrad {
        d_input: Tensor::new(vec![n], dx)?,
        d_params: vec![Tensor::new(vec![m, n], dw)?, d_out.clone()],
    })
}

pub fn relu<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Uses the forward output; the derivative at exactly zero is zero.
pub fn relu_backward<T: Scalar>(output: &Tensor<T>, d_out: &Tensor<T>) -> Result<Tensor<T>> {
    output.check_same_shape(d_out, "relu backward")?;
    let data = output
        .data()
        .iter()
        .zip(d_out.data())
        .map(|(&y, &g)| if y > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::new(output.shape().to_vec(), data)
}

pub fn sigmoid<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|v| T::one() / (T::one() + (-v).exp()))
}

pub fn sigmoid_backward<T: Scalar>(output: &Tensor<T>, d_out: &Tensor<T>) -> Result<Tensor<T>> {
    output.check_same_shape(d_out, "sigmoid backward")?;
    let data = output
        .data()
        .iter()
        .zip(d_out.data())
        .map(|(&y, &g)| g * y * (T::one() - y))
        .collect();
    Tensor::new(output.shape().to_vec(), data)
}

/// Mean of squared differences over all elements.
pub fn mse<T: Scalar>(prediction: &Tensor<T>, target: &Tensor<T>) -> Result<T> {
    prediction.check_same_shape(target, "mse")?;
    let sum = prediction
        .data()
        .iter()
        .zip(target.data())
        .fold(T::zero(), |acc, (&p, &t)| acc + (p - t) * (p - t));
    Ok(sum / T::from_f64(prediction.len() as f64))
}

/// `2 (prediction − target) / N`.
pub fn mse_grad<T: Scalar>(prediction: &Tensor<T>, target: &Tensor<T>) -> Result<Tensor<T>> {
    prediction.check_same_shape(target, "mse")?;
    let scale = T::from_f64(2.0 / prediction.len() as f64);
    let data = prediction
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| scale * (p - t))
        .collect();
    Tensor::new(prediction.shape().to_vec(), data)
}
