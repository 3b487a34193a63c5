//! Forward kernels and their backward passes.

use super::{same_ceil_padding, ConvSpec, Result, Tensor, TensorError};

fn check_weights(input: &Tensor, weights: &Tensor, bias: &Tensor, spec: &ConvSpec) -> Result<(usize, usize, usize)> {
    spec.validate()?;
    let (h, w, c) = input.hwc()?;
    if c != spec.in_channels {
        return Err(TensorError::ShapeMismatch(format!(
            "input has {c} channels, spec expects {}",
            spec.in_channels
        )));
    }
    if weights.shape() != spec.weight_shape() {
        return Err(TensorError::ShapeMismatch(format!(
            "weights {:?} vs spec {:?}",
            weights.shape(),
            spec.weight_shape()
        )));
    }
    if bias.shape() != [spec.out_channels] {
        return Err(TensorError::ShapeMismatch(format!(
            "bias {:?} vs {} output channels",
            bias.shape(),
            spec.out_channels
        )));
    }
    Ok((h, w, c))
}

/// Iterates the in-bounds taps of a same-ceil convolution as
/// `(out_index, in_index, tap_index)`, with indices in pixels (not scaled by channels).
#[inline]
fn for_each_tap(h: usize, w: usize, spec: &ConvSpec, mut f: impl FnMut(usize, usize, usize)) {
    let z = spec.kernel;
    let s = spec.stride;
    let (pad_t, _) = same_ceil_padding(h, z, s);
    let (pad_l, _) = same_ceil_padding(w, z, s);
    let oh = spec.out_dim(h);
    let ow = spec.out_dim(w);
    for oy in 0..oh {
        for ox in 0..ow {
            let o = oy * ow + ox;
            for ky in 0..z {
                let iy = (oy * s + ky) as isize - pad_t as isize;
                if iy < 0 || iy >= h as isize {
                    continue;
                }
                for kx in 0..z {
                    let ix = (ox * s + kx) as isize - pad_l as isize;
                    if ix < 0 || ix >= w as isize {
                        continue;
                    }
                    f(o, iy as usize * w + ix as usize, ky * z + kx);
                }
            }
        }
    }
}

/// Same-ceil 2-D convolution (cross-correlation) plus bias.
pub fn conv2d(input: &Tensor, weights: &Tensor, bias: &Tensor, spec: &ConvSpec) -> Result<Tensor> {
    let (h, w, cin) = check_weights(input, weights, bias, spec)?;
    let cout = spec.out_channels;
    let (oh, ow) = (spec.out_dim(h), spec.out_dim(w));
    let mut out = Vec::with_capacity(oh * ow * cout);
    for _ in 0..oh * ow {
        out.extend_from_slice(bias.data());
    }
    let x = input.data();
    let wt = weights.data();
    let tap_len = cin * cout;
    for_each_tap(h, w, spec, |o, i, tap| {
        let acc = &mut out[o * cout..(o + 1) * cout];
        let px = &x[i * cin..(i + 1) * cin];
        let kernel = &wt[tap * tap_len..(tap + 1) * tap_len];
        for (&v, row) in px.iter().zip(kernel.chunks_exact(cout)) {
            for (a, &k) in acc.iter_mut().zip(row) {
                *a += v * k;
            }
        }
    });
    Tensor::new(&[oh, ow, cout], out)
}

/// Gradients of [`conv2d`] with respect to its three operands.
#[derive(Debug, Clone)]
pub struct ConvGrads {
    pub input: Option<Tensor>,
    pub weights: Tensor,
    pub bias: Tensor,
}

/// Backward pass of [`conv2d`]. The input gradient is skipped when
/// `want_input` is false.
pub fn conv2d_backward(
    input: &Tensor,
    weights: &Tensor,
    spec: &ConvSpec,
    grad_out: &Tensor,
    want_input: bool,
) -> Result<ConvGrads> {
    let (h, w, cin) = input.hwc()?;
    let cout = spec.out_channels;
    let expect = [spec.out_dim(h), spec.out_dim(w), cout];
    if grad_out.shape() != expect {
        return Err(TensorError::ShapeMismatch(format!(
            "output gradient {:?} vs {:?}",
            grad_out.shape(),
            expect
        )));
    }
    let g = grad_out.data();
    let x = input.data();
    let wt = weights.data();
    let tap_len = cin * cout;

    let mut gb = vec![0.0; cout];
    for px in g.chunks_exact(cout) {
        for (a, &v) in gb.iter_mut().zip(px) {
            *a += v;
        }
    }
    let mut gw = vec![0.0; wt.len()];
    let mut gi = if want_input { vec![0.0; x.len()] } else { Vec::new() };
    for_each_tap(h, w, spec, |o, i, tap| {
        let go = &g[o * cout..(o + 1) * cout];
        let px = &x[i * cin..(i + 1) * cin];
        let gk = &mut gw[tap * tap_len..(tap + 1) * tap_len];
        for (&v, row) in px.iter().zip(gk.chunks_exact_mut(cout)) {
            for (a, &d) in row.iter_mut().zip(go) {
                *a += v * d;
            }
        }
        if want_input {
            let kernel = &wt[tap * tap_len..(tap + 1) * tap_len];
            let gpx = &mut gi[i * cin..(i + 1) * cin];
            for (a, row) in gpx.iter_mut().zip(kernel.chunks_exact(cout)) {
                *a += row.iter().zip(go).map(|(k, d)| k * d).sum::<f64>();
            }
        }
    });
    Ok(ConvGrads {
        input: if want_input {
            Some(Tensor::new(input.shape(), gi)?)
        } else {
            None
        },
        weights: Tensor::new(weights.shape(), gw)?,
        bias: Tensor::vector(gb),
    })
}

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

/// Passes the gradient where the forward input was strictly positive.
pub fn relu_backward(x: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    same_shape(x, grad_out)?;
    let data = x
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::new(x.shape(), data)
}

fn same_shape(a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(TensorError::ShapeMismatch(format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

/// Elementwise combinators over equally shaped tensors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementwiseOp {
    Add,
    /// Exactly two operands: `a − b`.
    Sub,
    Mean,
    /// Gradient goes to the first maximal operand.
    Max,
}

pub fn elementwise(op: ElementwiseOp, inputs: &[&Tensor]) -> Result<Tensor> {
    let first = inputs
        .first()
        .ok_or_else(|| TensorError::ShapeMismatch("no operands".into()))?;
    for t in &inputs[1..] {
        same_shape(first, t)?;
    }
    let n = inputs.len();
    if op == ElementwiseOp::Sub && n != 2 {
        return Err(TensorError::ShapeMismatch(format!("sub takes 2 operands, got {n}")));
    }
    let mut out = first.data().to_vec();
    match op {
        ElementwiseOp::Add | ElementwiseOp::Mean => {
            for t in &inputs[1..] {
                for (a, &v) in out.iter_mut().zip(t.data()) {
                    *a += v;
                }
            }
            if op == ElementwiseOp::Mean {
                let inv = n as f64;
                out.iter_mut().for_each(|a| *a /= inv);
            }
        }
        ElementwiseOp::Sub => {
            for (a, &v) in out.iter_mut().zip(inputs[1].data()) {
                *a -= v;
            }
        }
        ElementwiseOp::Max => {
            for t in &inputs[1..] {
                for (a, &v) in out.iter_mut().zip(t.data()) {
                    if v > *a {
                        *a = v;
                    }
                }
            }
        }
    }
    Tensor::new(first.shape(), out)
}

/// Index of the operand selected by `Max` at element `i` (first on ties).
#[inline]
pub(crate) fn max_operand(inputs: &[&Tensor], i: usize) -> usize {
    let mut best = 0;
    for (k, t) in inputs.iter().enumerate().skip(1) {
        if t.data()[i] > inputs[best].data()[i] {
            best = k;
        }
    }
    best
}

/// Per-operand gradients of [`elementwise`].
pub fn elementwise_backward(op: ElementwiseOp, inputs: &[&Tensor], grad_out: &Tensor) -> Result<Vec<Tensor>> {
    for t in inputs {
        same_shape(t, grad_out)?;
    }
    let n = inputs.len();
    let g = grad_out.data();
    let shape = grad_out.shape();
    Ok(match op {
        ElementwiseOp::Add => vec![grad_out.map(|v| v); n],
        ElementwiseOp::Mean => vec![grad_out.map(|v| v / n as f64); n],
        ElementwiseOp::Sub => vec![grad_out.map(|v| v), grad_out.map(|v| -v)],
        ElementwiseOp::Max => {
            let mut grads = vec![vec![0.0; g.len()]; n];
            for (i, &v) in g.iter().enumerate() {
                grads[max_operand(inputs, i)][i] = v;
            }
            grads
                .into_iter()
                .map(|d| Tensor::new(shape, d))
                .collect::<Result<_>>()?
        }
    })
}

/// Concatenates along the last axis; all other dimensions must agree.
pub fn concat_channels(inputs: &[&Tensor]) -> Result<Tensor> {
    let first = inputs
        .first()
        .ok_or_else(|| TensorError::ShapeMismatch("no operands".into()))?;
    let lead = &first.shape()[..first.rank() - 1];
    let mut widths = Vec::with_capacity(inputs.len());
    for t in inputs {
        if t.rank() != first.rank() || &t.shape()[..t.rank() - 1] != lead {
            return Err(TensorError::ShapeMismatch(format!(
                "cannot concatenate {:?} with {:?}",
                first.shape(),
                t.shape()
            )));
        }
        widths.push(t.shape()[t.rank() - 1]);
    }
    let total: usize = widths.iter().sum();
    let cells: usize = lead.iter().product();
    let mut data = Vec::with_capacity(cells * total);
    for cell in 0..cells {
        for (t, &c) in inputs.iter().zip(&widths) {
            data.extend_from_slice(&t.data()[cell * c..(cell + 1) * c]);
        }
    }
    let mut shape = lead.to_vec();
    shape.push(total);
    Tensor::new(&shape, data)
}

/// Splits a gradient of a concatenation back into per-operand pieces.
pub(crate) fn concat_backward(widths: &[usize], lead: &[usize], grad_out: &Tensor) -> Result<Vec<Tensor>> {
    let total: usize = widths.iter().sum();
    let cells: usize = lead.iter().product();
    let g = grad_out.data();
    let mut out: Vec<Vec<f64>> = widths.iter().map(|&c| Vec::with_capacity(cells * c)).collect();
    for cell in 0..cells {
        let mut off = cell * total;
        for (dst, &c) in out.iter_mut().zip(widths) {
            dst.extend_from_slice(&g[off..off + c]);
            off += c;
        }
    }
    out.into_iter()
        .zip(widths)
        .map(|(d, &c)| {
            let mut shape = lead.to_vec();
            shape.push(c);
            Tensor::new(&shape, d)
        })
        .collect()
}

/// Per-channel spatial mean.
pub fn global_avg_pool(x: &Tensor) -> Result<Tensor> {
    let (h, w, c) = x.hwc()?;
    let mut sums = vec![0.0; c];
    for px in x.data().chunks_exact(c) {
        for (s, &v) in sums.iter_mut().zip(px) {
            *s += v;
        }
    }
    let n = (h * w) as f64;
    Ok(Tensor::vector(sums.into_iter().map(|s| s / n).collect()))
}

pub fn global_avg_pool_backward(x_shape: &[usize], grad_out: &Tensor) -> Result<Tensor> {
    let [h, w, c] = x_shape else {
        return Err(TensorError::Rank {
            expected: 3,
            shape: x_shape.to_vec(),
        });
    };
    if grad_out.shape() != [*c] {
        return Err(TensorError::ShapeMismatch(format!("{:?} vs [{c}]", grad_out.shape())));
    }
    let n = (h * w) as f64;
    let per: Vec<f64> = grad_out.data().iter().map(|g| g / n).collect();
    let mut data = Vec::with_capacity(h * w * c);
    for _ in 0..h * w {
        data.extend_from_slice(&per);
    }
    Tensor::new(x_shape, data)
}

/// 2×2 windows at stride 2; the output side is `ceil(in / 2)` and edge
/// windows average only the pixels they cover.
pub fn avg_pool_2x2(x: &Tensor) -> Result<Tensor> {
    let (h, w, c) = x.hwc()?;
    let (oh, ow) = (h.div_ceil(2), w.div_ceil(2));
    let src = x.data();
    let mut out = vec![0.0; oh * ow * c];
    for oy in 0..oh {
        for ox in 0..ow {
            let ys = 2 * oy..(2 * oy + 2).min(h);
            let xs = 2 * ox..(2 * ox + 2).min(w);
            let count = (ys.len() * xs.len()) as f64;
            let dst = &mut out[(oy * ow + ox) * c..(oy * ow + ox + 1) * c];
            for y in ys {
                for x in xs.clone() {
                    for (d, &v) in dst.iter_mut().zip(&src[(y * w + x) * c..(y * w + x + 1) * c]) {
                        *d += v;
                    }
                }
            }
            dst.iter_mut().for_each(|d| *d /= count);
        }
    }
    Tensor::new(&[oh, ow, c], out)
}

pub fn avg_pool_2x2_backward(x_shape: &[usize], grad_out: &Tensor) -> Result<Tensor> {
    let [h, w, c] = *x_shape else {
        return Err(TensorError::Rank {
            expected: 3,
            shape: x_shape.to_vec(),
        });
    };
    let (oh, ow) = (h.div_ceil(2), w.div_ceil(2));
    if grad_out.shape() != [oh, ow, c] {
        return Err(TensorError::ShapeMismatch(format!("{:?} vs {:?}", grad_out.shape(), [oh, ow, c])));
    }
    let g = grad_out.data();
    let mut out = vec![0.0; h * w * c];
    for y in 0..h {
        for x in 0..w {
            let (oy, ox) = (y / 2, x / 2);
            let count = (((2 * oy + 2).min(h) - 2 * oy) * ((2 * ox + 2).min(w) - 2 * ox)) as f64;
            let src = &g[(oy * ow + ox) * c..(oy * ow + ox + 1) * c];
            for (d, &v) in out[(y * w + x) * c..(y * w + x + 1) * c].iter_mut().zip(src) {
                *d = v / count;
            }
        }
    }
    Tensor::new(x_shape, out)
}

/// `x·W + b` for `x: [n]`, `W: [n, m]`, `b: [m]`.
pub fn fully_connected(x: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (n, m) = fc_dims(x, weights, bias)?;
    let mut out = bias.data().to_vec();
    for (&v, row) in x.data().iter().zip(weights.data().chunks_exact(m)) {
        if v != 0.0 {
            for (o, &wv) in out.iter_mut().zip(row) {
                *o += v * wv;
            }
        }
    }
    debug_assert_eq!(x.len(), n);
    Ok(Tensor::vector(out))
}

fn fc_dims(x: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<(usize, usize)> {
    let [n, m] = weights.shape() else {
        return Err(TensorError::Rank {
            expected: 2,
            shape: weights.shape().to_vec(),
        });
    };
    if x.shape() != [*n] || bias.shape() != [*m] {
        return Err(TensorError::ShapeMismatch(format!(
            "fc input {:?}, weights {:?}, bias {:?}",
            x.shape(),
            weights.shape(),
            bias.shape()
        )));
    }
    Ok((*n, *m))
}

#[derive(Debug, Clone)]
pub struct FcGrads {
    pub input: Tensor,
    pub weights: Tensor,
    pub bias: Tensor,
}

pub fn fully_connected_backward(x: &Tensor, weights: &Tensor, grad_out: &Tensor) -> Result<FcGrads> {
    let [n, m] = *weights.shape() else {
        return Err(TensorError::Rank {
            expected: 2,
            shape: weights.shape().to_vec(),
        });
    };
    if x.shape() != [n] || grad_out.shape() != [m] {
        return Err(TensorError::ShapeMismatch(format!(
            "fc backward: input {:?}, grad {:?}",
            x.shape(),
            grad_out.shape()
        )));
    }
    let g = grad_out.data();
    let mut gw = vec![0.0; n * m];
    let mut gx = vec![0.0; n];
    for ((&v, row), (grow, gxi)) in x
        .data()
        .iter()
        .zip(weights.data().chunks_exact(m))
        .zip(gw.chunks_exact_mut(m).zip(gx.iter_mut()))
    {
        for (a, &d) in grow.iter_mut().zip(g) {
            *a = v * d;
        }
        *gxi = row.iter().zip(g).map(|(w, d)| w * d).sum();
    }
    Ok(FcGrads {
        input: Tensor::vector(gx),
        weights: Tensor::new(&[n, m], gw)?,
        bias: grad_out.map(|v| v),
    })
}

/// Softmax cross-entropy with the max logit subtracted first. Returns the
/// loss and its gradient `softmax − onehot`.
pub fn softmax_cross_entropy(logits: &Tensor, label: usize) -> Result<(f64, Tensor)> {
    let e = logits.len();
    if label >= e {
        return Err(TensorError::LabelOutOfRange { label, classes: e });
    }
    let z = logits.data();
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let loss = sum.ln() - (z[label] - max);
    let mut grad: Vec<f64> = exps.iter().map(|&v| v / sum).collect();
    grad[label] -= 1.0;
    Ok((loss.max(0.0), Tensor::new(logits.shape(), grad)?))
}
