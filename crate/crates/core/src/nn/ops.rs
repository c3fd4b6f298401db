//! Forward and backward passes of the layers the two CNNs are built from.
//!
//! Sequence tensors are `[batch, length, channels]`; a rank-2 `[length,
//! channels]` input is treated as a batch of one. Backward functions
//! accumulate parameter gradients into the caller's buffers and return the
//! gradient with respect to the layer input.

use rand::Rng;

use super::tensor::{Scalar, Tensor};
use super::NnError;

type Result<T> = std::result::Result<T, NnError>;

fn seq_dims<T: Scalar>(x: &Tensor<T>, what: &str) -> Result<(usize, usize, usize)> {
    match *x.shape() {
        [l, c] => Ok((1, l, c)),
        [b, l, c] => Ok((b, l, c)),
        ref s => Err(NnError::Shape(format!("{what}: expected rank 2 or 3, got {s:?}"))),
    }
}

fn seq_shape(rank: usize, b: usize, l: usize, c: usize) -> Vec<usize> {
    if rank == 2 {
        vec![l, c]
    } else {
        vec![b, l, c]
    }
}

// ---------------------------------------------------------------------------
// conv1d

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Output length equals input length; zero padding with left offset
    /// `(k - 1) / 2`.
    Same,
    /// No padding; output length `L - k + 1`.
    Valid,
}

/// Saved im2col buffer for the backward pass.
#[derive(Debug, Clone)]
pub struct Conv1dCache<T> {
    cols: Vec<T>,
    rank: usize,
    batch: usize,
    in_len: usize,
    out_len: usize,
    channels: usize,
    k: usize,
    offset: usize,
}

/// `out[t, f] = bias[f] + Σ_{i<k, c<C} input[t + i - offset, c] · kernel[i, c, f]`.
pub fn conv1d<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: &Tensor<T>,
    padding: Padding,
) -> Result<(Tensor<T>, Conv1dCache<T>)> {
    let (batch, len, channels) = seq_dims(input, "conv1d input")?;
    let &[k, kc, filters] = kernel.shape() else {
        return Err(NnError::Shape(format!("conv1d kernel must be k×C×F, got {:?}", kernel.shape())));
    };
    if kc != channels {
        return Err(NnError::Shape(format!("conv1d: kernel expects {kc} channels, input has {channels}")));
    }
    if bias.shape() != [filters] {
        return Err(NnError::Shape(format!("conv1d: bias shape {:?}, expected [{filters}]", bias.shape())));
    }
    if k == 0 {
        return Err(NnError::Shape("conv1d: kernel width 0".into()));
    }
    let (out_len, offset) = match padding {
        Padding::Same => (len, (k - 1) / 2),
        Padding::Valid => {
            if k > len {
                return Err(NnError::Shape(format!("conv1d: kernel {k} longer than input {len}")));
            }
            (len - k + 1, 0)
        }
    };
    let row = k * channels;
    let mut cols = vec![T::zero(); batch * out_len * row];
    let x = input.data();
    for b in 0..batch {
        for t in 0..out_len {
            let dst = &mut cols[(b * out_len + t) * row..(b * out_len + t + 1) * row];
            for i in 0..k {
                let src = t + i;
                if src < offset || src - offset >= len {
                    continue;
                }
                let s = (b * len + src - offset) * channels;
                dst[i * channels..(i + 1) * channels].copy_from_slice(&x[s..s + channels]);
            }
        }
    }
    let m = batch * out_len;
    let mut out = vec![T::zero(); m * filters];
    for r in 0..m {
        out[r * filters..(r + 1) * filters].copy_from_slice(bias.data());
    }
    T::matmul(m, row, filters, &cols, false, kernel.data(), false, &mut out, true);
    let rank = input.rank();
    let out = Tensor::new(&seq_shape(rank, batch, out_len, filters), out)?;
    Ok((
        out,
        Conv1dCache {
            cols,
            rank,
            batch,
            in_len: len,
            out_len,
            channels,
            k,
            offset,
        },
    ))
}

/// Accumulates kernel/bias gradients; returns the input gradient when
/// `want_input` is set.
pub fn conv1d_backward<T: Scalar>(
    cache: &Conv1dCache<T>,
    kernel: &Tensor<T>,
    grad_out: &Tensor<T>,
    grad_kernel: &mut [T],
    grad_bias: &mut [T],
    want_input: bool,
) -> Option<Tensor<T>> {
    let filters = kernel.shape()[2];
    let m = cache.batch * cache.out_len;
    let row = cache.k * cache.channels;
    let g = grad_out.data();
    assert_eq!(g.len(), m * filters, "conv1d_backward: grad shape");
    T::matmul(row, m, filters, &cache.cols, true, g, false, grad_kernel, true);
    for r in 0..m {
        for (gb, &x) in grad_bias.iter_mut().zip(&g[r * filters..(r + 1) * filters]) {
            *gb = *gb + x;
        }
    }
    if !want_input {
        return None;
    }
    let mut dcols = vec![T::zero(); m * row];
    T::matmul(m, filters, row, g, false, kernel.data(), true, &mut dcols, false);
    let c = cache.channels;
    let mut dx = vec![T::zero(); cache.batch * cache.in_len * c];
    for b in 0..cache.batch {
        for t in 0..cache.out_len {
            let src = &dcols[(b * cache.out_len + t) * row..(b * cache.out_len + t + 1) * row];
            for i in 0..cache.k {
                let pos = t + i;
                if pos < cache.offset || pos - cache.offset >= cache.in_len {
                    continue;
                }
                let d = (b * cache.in_len + pos - cache.offset) * c;
                for (dst, &v) in dx[d..d + c].iter_mut().zip(&src[i * c..(i + 1) * c]) {
                    *dst = *dst + v;
                }
            }
        }
    }
    Some(
        Tensor::new(&seq_shape(cache.rank, cache.batch, cache.in_len, c), dx)
            .expect("input gradient shape"),
    )
}

// ---------------------------------------------------------------------------
// pooling

/// Flat input index of the selected maximum for every output element.
#[derive(Debug, Clone)]
pub struct PoolCache {
    argmax: Vec<usize>,
    input_shape: Vec<usize>,
}

/// Windowed per-channel maxima; output length `⌊(L - p)/s⌋ + 1`. Ties pick
/// the earliest position.
pub fn maxpool1d<T: Scalar>(input: &Tensor<T>, pool: usize, stride: usize) -> Result<(Tensor<T>, PoolCache)> {
    let (batch, len, ch) = seq_dims(input, "maxpool1d input")?;
    if pool == 0 || stride == 0 {
        return Err(NnError::Shape("maxpool1d: pool and stride must be positive".into()));
    }
    if pool > len {
        return Err(NnError::Shape(format!("maxpool1d: pool {pool} exceeds length {len}")));
    }
    let out_len = (len - pool) / stride + 1;
    let x = input.data();
    let mut out = Vec::with_capacity(batch * out_len * ch);
    let mut argmax = Vec::with_capacity(batch * out_len * ch);
    for b in 0..batch {
        for t in 0..out_len {
            for c in 0..ch {
                let mut best = (b * len + t * stride) * ch + c;
                for i in 1..pool {
                    let idx = (b * len + t * stride + i) * ch + c;
                    if x[idx] > x[best] {
                        best = idx;
                    }
                }
                out.push(x[best]);
                argmax.push(best);
            }
        }
    }
    let out = Tensor::new(&seq_shape(input.rank(), batch, out_len, ch), out)?;
    Ok((
        out,
        PoolCache {
            argmax,
            input_shape: input.shape().to_vec(),
        },
    ))
}

/// Column-wise maximum over the whole sequence: `[B, L, F] → [B, F]`
/// (`[L, F] → [F]` for rank 2).
pub fn global_maxpool<T: Scalar>(input: &Tensor<T>) -> Result<(Tensor<T>, PoolCache)> {
    let (batch, len, ch) = seq_dims(input, "global_maxpool input")?;
    if len == 0 {
        return Err(NnError::Shape("global_maxpool: empty input".into()));
    }
    let x = input.data();
    let mut out = Vec::with_capacity(batch * ch);
    let mut argmax = Vec::with_capacity(batch * ch);
    for b in 0..batch {
        for c in 0..ch {
            let mut best = b * len * ch + c;
            for t in 1..len {
                let idx = (b * len + t) * ch + c;
                if x[idx] > x[best] {
                    best = idx;
                }
            }
            out.push(x[best]);
            argmax.push(best);
        }
    }
    let shape = if input.rank() == 2 { vec![ch] } else { vec![batch, ch] };
    Ok((
        Tensor::new(&shape, out)?,
        PoolCache {
            argmax,
            input_shape: input.shape().to_vec(),
        },
    ))
}

/// Routes each output gradient to the input position that produced the max.
pub fn pool_backward<T: Scalar>(cache: &PoolCache, grad_out: &Tensor<T>) -> Tensor<T> {
    let mut dx = Tensor::zeros(&cache.input_shape);
    let d = dx.data_mut();
    for (&idx, &g) in cache.argmax.iter().zip(grad_out.data()) {
        d[idx] = d[idx] + g;
    }
    dx
}

// ---------------------------------------------------------------------------
// activations

pub const SELU_LAMBDA: f64 = 1.0507009873554805;
pub const SELU_ALPHA: f64 = 1.6732632423543772;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Selu,
}

impl Activation {
    pub fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Relu => x.max(T::zero()),
            Activation::Tanh => x.tanh(),
            Activation::Selu => {
                let lambda = T::from_f64_lossy(SELU_LAMBDA);
                if x > T::zero() {
                    lambda * x
                } else {
                    lambda * T::from_f64_lossy(SELU_ALPHA) * x.exp_m1()
                }
            }
        }
    }

    /// Derivative at input `x` given the forward output `y`.
    pub fn derivative<T: Scalar>(self, x: T, y: T) -> T {
        match self {
            Activation::Relu => {
                if x > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Tanh => T::one() - y * y,
            Activation::Selu => {
                let lambda = T::from_f64_lossy(SELU_LAMBDA);
                if x > T::zero() {
                    lambda
                } else {
                    y + lambda * T::from_f64_lossy(SELU_ALPHA)
                }
            }
        }
    }
}

pub fn activation<T: Scalar>(x: &Tensor<T>, kind: Activation) -> Tensor<T> {
    let data = x.data().iter().map(|&v| kind.apply(v)).collect();
    Tensor::new(x.shape(), data).expect("same shape")
}

pub fn activation_backward<T: Scalar>(
    kind: Activation,
    input: &Tensor<T>,
    output: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Tensor<T> {
    let data = input
        .data()
        .iter()
        .zip(output.data())
        .zip(grad_out.data())
        .map(|((&x, &y), &g)| g * kind.derivative(x, y))
        .collect();
    Tensor::new(input.shape(), data).expect("same shape")
}

// ---------------------------------------------------------------------------
// dense

fn rows_of<T: Scalar>(x: &Tensor<T>) -> Result<(usize, usize)> {
    match *x.shape() {
        [n] => Ok((1, n)),
        [b, n] => Ok((b, n)),
        ref s => Err(NnError::Shape(format!("dense input: expected rank 1 or 2, got {s:?}"))),
    }
}

/// `x·W + b` for `x: [B, N]` (or `[N]`), `W: [N, M]`, `b: [M]`.
pub fn dense<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (rows, n) = rows_of(x)?;
    let &[wn, m] = w.shape() else {
        return Err(NnError::Shape(format!("dense weight must be N×M, got {:?}", w.shape())));
    };
    if wn != n || b.shape() != [m] {
        return Err(NnError::Shape(format!(
            "dense: input width {n}, weight {:?}, bias {:?}",
            w.shape(),
            b.shape()
        )));
    }
    let mut out = Vec::with_capacity(rows * m);
    for _ in 0..rows {
        out.extend_from_slice(b.data());
    }
    T::matmul(rows, n, m, x.data(), false, w.data(), false, &mut out, true);
    let shape = if x.rank() == 1 { vec![m] } else { vec![rows, m] };
    Tensor::new(&shape, out)
}

pub fn dense_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    grad_out: &Tensor<T>,
    grad_w: &mut [T],
    grad_b: &mut [T],
    want_input: bool,
) -> Option<Tensor<T>> {
    let (rows, n) = rows_of(x).expect("validated in forward");
    let m = w.shape()[1];
    let g = grad_out.data();
    T::matmul(n, rows, m, x.data(), true, g, false, grad_w, true);
    for r in 0..rows {
        for (gb, &v) in grad_b.iter_mut().zip(&g[r * m..(r + 1) * m]) {
            *gb = *gb + v;
        }
    }
    want_input.then(|| {
        let mut dx = vec![T::zero(); rows * n];
        T::matmul(rows, m, n, g, false, w.data(), true, &mut dx, false);
        Tensor::new(x.shape(), dx).expect("input gradient shape")
    })
}

// ---------------------------------------------------------------------------
// softmax + cross-entropy

/// Row-wise softmax with max subtraction.
pub fn softmax<T: Scalar>(logits: &[T], classes: usize) -> Vec<T> {
    let mut p = Vec::with_capacity(logits.len());
    for row in logits.chunks(classes) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let exps: Vec<T> = row.iter().map(|&z| (z - max).exp()).collect();
        let sum: T = exps.iter().copied().sum();
        p.extend(exps.into_iter().map(|e| e / sum));
    }
    p
}

#[derive(Debug, Clone)]
pub struct SoftmaxXent<T> {
    /// Mean loss over the batch.
    pub loss: T,
    pub probs: Tensor<T>,
    /// `∂loss/∂logits = (p - onehot(gold)) / B`.
    pub grad: Tensor<T>,
}

/// Mean negative log-likelihood of `gold` (class indices) under
/// `softmax(logits)`. Logits are `[B, C]` or `[C]`.
pub fn softmax_xent<T: Scalar>(logits: &Tensor<T>, gold: &[usize]) -> Result<SoftmaxXent<T>> {
    let (rows, classes) = rows_of(logits)?;
    if gold.len() != rows {
        return Err(NnError::Shape(format!("softmax_xent: {rows} rows, {} labels", gold.len())));
    }
    if let Some(&g) = gold.iter().find(|&&g| g >= classes) {
        return Err(NnError::Shape(format!("softmax_xent: class {g} out of range")));
    }
    let z = logits.data();
    let probs = softmax(z, classes);
    let scale = T::one() / T::from_usize(rows).expect("batch size");
    let mut loss = T::zero();
    let mut grad = probs.clone();
    for (r, &g) in gold.iter().enumerate() {
        let row = &z[r * classes..(r + 1) * classes];
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<T>().ln();
        loss = loss + (lse - row[g]);
        grad[r * classes + g] = grad[r * classes + g] - T::one();
    }
    grad.iter_mut().for_each(|v| *v = *v * scale);
    Ok(SoftmaxXent {
        loss: loss * scale,
        probs: Tensor::new(logits.shape(), probs)?,
        grad: Tensor::new(logits.shape(), grad)?,
    })
}

// ---------------------------------------------------------------------------
// embedding lookup, dropout, concatenation

/// `indices: B·L` rows of `table: [V, E]` → `[B, L, E]`.
pub fn embedding_lookup<T: Scalar>(table: &Tensor<T>, indices: &[u32], batch: usize) -> Result<Tensor<T>> {
    let &[vocab, dim] = table.shape() else {
        return Err(NnError::Shape("embedding table must be V×E".into()));
    };
    if batch == 0 || !indices.len().is_multiple_of(batch) {
        return Err(NnError::Shape("embedding indices not divisible by batch".into()));
    }
    let mut out = Vec::with_capacity(indices.len() * dim);
    for &i in indices {
        let i = i as usize;
        if i >= vocab {
            return Err(NnError::Shape(format!("embedding index {i} ≥ vocabulary {vocab}")));
        }
        out.extend_from_slice(&table.data()[i * dim..(i + 1) * dim]);
    }
    Tensor::new(&[batch, indices.len() / batch, dim], out)
}

pub fn embedding_backward<T: Scalar>(indices: &[u32], grad_out: &Tensor<T>, grad_table: &mut [T]) {
    let dim = *grad_out.shape().last().expect("rank ≥ 1");
    for (r, &i) in indices.iter().enumerate() {
        let dst = &mut grad_table[i as usize * dim..(i as usize + 1) * dim];
        for (d, &g) in dst.iter_mut().zip(&grad_out.data()[r * dim..(r + 1) * dim]) {
            *d = *d + g;
        }
    }
}

/// Inverted dropout: kept units are scaled by `1 / (1 - rate)`. Returns the
/// output and the per-element multiplier.
pub fn dropout<T: Scalar, R: Rng + ?Sized>(x: &Tensor<T>, rate: f64, rng: &mut R) -> (Tensor<T>, Vec<T>) {
    let keep = T::from_f64_lossy(1.0 / (1.0 - rate));
    let mask: Vec<T> = (0..x.len())
        .map(|_| if rng.random::<f64>() < rate { T::zero() } else { keep })
        .collect();
    let data = x.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
    (Tensor::new(x.shape(), data).expect("same shape"), mask)
}

pub fn mul_elementwise<T: Scalar>(g: &Tensor<T>, mask: &[T]) -> Tensor<T> {
    let data = g.data().iter().zip(mask).map(|(&a, &b)| a * b).collect();
    Tensor::new(g.shape(), data).expect("same shape")
}

/// Concatenates `[B, n_i]` blocks along the last axis.
pub fn concat_rows<T: Scalar>(parts: &[&Tensor<T>]) -> Result<Tensor<T>> {
    let batch = parts.first().map_or(0, |p| p.shape()[0]);
    let widths: Vec<usize> = parts
        .iter()
        .map(|p| match *p.shape() {
            [b, n] if b == batch => Ok(n),
            ref s => Err(NnError::Shape(format!("concat: expected [{batch}, n], got {s:?}"))),
        })
        .collect::<Result<_>>()?;
    let total: usize = widths.iter().sum();
    let mut out = Vec::with_capacity(batch * total);
    for r in 0..batch {
        for (p, &w) in parts.iter().zip(&widths) {
            out.extend_from_slice(&p.data()[r * w..(r + 1) * w]);
        }
    }
    Tensor::new(&[batch, total], out)
}

/// Splits a `[B, Σ widths]` gradient back into per-part gradients.
pub fn split_rows<T: Scalar>(g: &Tensor<T>, widths: &[usize]) -> Vec<Tensor<T>> {
    let batch = g.shape()[0];
    let total: usize = widths.iter().sum();
    let mut parts: Vec<Vec<T>> = widths.iter().map(|&w| Vec::with_capacity(batch * w)).collect();
    for r in 0..batch {
        let row = &g.data()[r * total..(r + 1) * total];
        let mut off = 0;
        for (p, &w) in parts.iter_mut().zip(widths) {
            p.extend_from_slice(&row[off..off + w]);
            off += w;
        }
    }
    parts
        .into_iter()
        .zip(widths)
        .map(|(p, &w)| Tensor::new(&[batch, w], p).expect("split shape"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(shape, v).unwrap()
    }

    #[test]
    fn conv_identity_kernel() {
        let x = t(&[3, 2], &[1., 2., 3., 4., 5., 6.]);
        let k = t(&[1, 2, 2], &[1., 0., 0., 1.]);
        let b = t(&[2], &[0., 0.]);
        for pad in [Padding::Same, Padding::Valid] {
            let (y, _) = conv1d(&x, &k, &b, pad).unwrap();
            assert_eq!(y, x);
        }
    }

    #[test]
    fn conv_zero_input_gives_bias() {
        let x = Tensor::<f64>::zeros(&[5, 3]);
        let k = t(&[3, 3, 2], &(0..18).map(|i| i as f64).collect::<Vec<_>>());
        let b = t(&[2], &[0.5, -1.5]);
        let (y, _) = conv1d(&x, &k, &b, Padding::Same).unwrap();
        assert_eq!(y.shape(), [5, 2]);
        assert!(y.data().chunks(2).all(|r| r == [0.5, -1.5]));
        let (y, _) = conv1d(&x, &k, &b, Padding::Valid).unwrap();
        assert_eq!(y.shape(), [3, 2]);
    }

    #[test]
    fn conv_shape_errors() {
        let x = Tensor::<f64>::zeros(&[2, 3]);
        let b = Tensor::zeros(&[1]);
        assert!(conv1d(&x, &Tensor::zeros(&[1, 2, 1]), &b, Padding::Same).is_err());
        assert!(conv1d(&x, &Tensor::zeros(&[3, 3, 1]), &b, Padding::Valid).is_err());
    }

    #[test]
    fn pooling_cases() {
        let x = t(&[4, 1], &[1., 2., 3., 4.]);
        let (y, _) = maxpool1d(&x, 2, 1).unwrap();
        assert_eq!(y.data(), [2., 3., 4.]);
        let (g, _) = global_maxpool(&t(&[3, 1], &[-1., 3., 2.])).unwrap();
        assert_eq!(g.data(), [3.]);
        let (full, _) = maxpool1d(&x, 4, 1).unwrap();
        assert_eq!(full.data(), [4.]);
        assert!(maxpool1d(&x, 5, 1).is_err());
        assert!(global_maxpool(&Tensor::<f64>::zeros(&[0, 2])).is_err());
        let (single, _) = global_maxpool(&t(&[1, 3], &[7., 8., 9.])).unwrap();
        assert_eq!(single.data(), [7., 8., 9.]);
    }

    #[test]
    fn activation_values() {
        assert_eq!(Activation::Relu.apply(-1.0f64), 0.0);
        assert_eq!(Activation::Relu.apply(2.0f64), 2.0);
        assert_eq!(Activation::Tanh.apply(0.0f64), 0.0);
        assert_eq!(Activation::Selu.apply(0.0f64), 0.0);
        assert!((Activation::Selu.apply(1.0f64) - 1.0507009873554805).abs() < 1e-15);
        let neg = Activation::Selu.apply(-1.0f64);
        assert!((neg - SELU_LAMBDA * SELU_ALPHA * ((-1.0f64).exp() - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn dense_identity_and_bias() {
        let x = t(&[3], &[1., -2., 3.]);
        let mut eye = vec![0.; 9];
        for i in 0..3 {
            eye[i * 3 + i] = 1.0;
        }
        let w = t(&[3, 3], &eye);
        assert_eq!(dense(&x, &w, &Tensor::zeros(&[3])).unwrap(), x);
        let b = t(&[3], &[0.1, 0.2, 0.3]);
        assert_eq!(dense(&Tensor::zeros(&[3]), &w, &b).unwrap(), b);
        assert!(dense(&t(&[2], &[1., 1.]), &w, &b).is_err());
    }

    #[test]
    fn softmax_xent_cases() {
        let r = softmax_xent(&t(&[2], &[0., 0.]), &[0]).unwrap();
        assert_eq!(r.probs.data(), [0.5, 0.5]);
        assert!((r.loss - std::f64::consts::LN_2).abs() < 1e-15);
        let r = softmax_xent(&t(&[2], &[1000., 0.]), &[0]).unwrap();
        assert!(r.loss.abs() < 1e-12 && r.loss.is_finite());
        assert!(r.probs.data().iter().all(|p| p.is_finite()));
        let r = softmax_xent(&t(&[2], &[1000., 0.]), &[1]).unwrap();
        assert!((r.loss - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn concat_split_inverse() {
        let a = t(&[2, 2], &[1., 2., 3., 4.]);
        let b = t(&[2, 1], &[5., 6.]);
        let c = concat_rows(&[&a, &b]).unwrap();
        assert_eq!(c.data(), [1., 2., 5., 3., 4., 6.]);
        let parts = split_rows(&c, &[2, 1]);
        assert_eq!(parts[0], a);
        assert_eq!(parts[1], b);
    }
}
