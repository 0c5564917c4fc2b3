//! Forward and backward kernels for the differentiable primitives.
//!
//! Every kernel is a pure function. Backward kernels take the forward inputs
//! and the upstream gradient and return gradients for each input.

use serde::{Deserialize, Serialize};

use super::array::{dot, DenseArray};
use crate::error::{Error, Result};

/// Norms below this make a cosine undefined.
pub const COSINE_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    /// Zero padding so the output keeps the input length.
    Same,
    Valid,
}

impl Padding {
    /// (left, right) zero padding for a kernel of width `k`.
    pub fn amounts(self, k: usize) -> (usize, usize) {
        match self {
            Padding::Same => ((k - 1) / 2, k / 2),
            Padding::Valid => (0, 0),
        }
    }
}

fn expect_ndim(a: &DenseArray, n: usize, what: &str) -> Result<()> {
    if a.ndim() != n {
        return Err(Error::Dimension(format!(
            "{what} must be {n}-D, got shape {:?}",
            a.shape()
        )));
    }
    Ok(())
}

/// `W x + b` for a single vector.
pub fn affine(x: &DenseArray, w: &DenseArray, b: &DenseArray) -> Result<DenseArray> {
    expect_ndim(w, 2, "affine weight")?;
    let (m, n) = (w.shape()[0], w.shape()[1]);
    if x.len() != n || b.len() != m {
        return Err(Error::Dimension(format!(
            "affine: W {:?}, x {:?}, b {:?}",
            w.shape(),
            x.shape(),
            b.shape()
        )));
    }
    let xd = x.data();
    let out = (0..m)
        .map(|i| dot(w.row(i), xd) + b.data()[i])
        .collect();
    Ok(DenseArray::from_parts_unchecked(vec![m], out))
}

/// Returns (dx, dW, db).
pub fn affine_backward(
    x: &DenseArray,
    w: &DenseArray,
    gout: &DenseArray,
) -> (DenseArray, DenseArray, DenseArray) {
    let (m, n) = (w.shape()[0], w.shape()[1]);
    let g = gout.data();
    let mut gx = vec![0.0; n];
    let mut gw = vec![0.0; m * n];
    for i in 0..m {
        let gi = g[i];
        if gi == 0.0 {
            continue;
        }
        let wrow = w.row(i);
        for j in 0..n {
            gx[j] += gi * wrow[j];
            gw[i * n + j] = gi * x.data()[j];
        }
    }
    (
        DenseArray::from_parts_unchecked(x.shape().to_vec(), gx),
        DenseArray::from_parts_unchecked(vec![m, n], gw),
        DenseArray::from_parts_unchecked(vec![m], g.to_vec()),
    )
}

fn conv_dims(
    x: &DenseArray,
    k: &DenseArray,
    b: &DenseArray,
    pad: Padding,
) -> Result<(usize, usize, usize, usize, usize)> {
    expect_ndim(x, 2, "conv1d input")?;
    expect_ndim(k, 3, "conv1d kernel")?;
    let (c_in, t) = (x.shape()[0], x.shape()[1]);
    let (c_out, kc_in, kw) = (k.shape()[0], k.shape()[1], k.shape()[2]);
    if kc_in != c_in || b.len() != c_out {
        return Err(Error::Dimension(format!(
            "conv1d: input {:?}, kernel {:?}, bias {:?}",
            x.shape(),
            k.shape(),
            b.shape()
        )));
    }
    let (l, r) = pad.amounts(kw);
    let padded = t + l + r;
    if kw > padded {
        return Err(Error::Dimension(format!(
            "conv1d: kernel width {kw} exceeds padded length {padded}"
        )));
    }
    Ok((c_in, t, c_out, kw, padded - kw + 1))
}

/// Unfolds `x` into a `[c_in*kw, t_out]` patch matrix.
fn im2col(x: &DenseArray, kw: usize, left: usize, t_out: usize) -> Vec<f64> {
    let (c_in, t) = (x.shape()[0], x.shape()[1]);
    let mut cols = vec![0.0; c_in * kw * t_out];
    for c in 0..c_in {
        let xrow = x.row(c);
        for j in 0..kw {
            let dst = &mut cols[(c * kw + j) * t_out..(c * kw + j + 1) * t_out];
            for (to, d) in dst.iter_mut().enumerate() {
                // source index in the unpadded signal
                let s = to + j;
                if s >= left && s - left < t {
                    *d = xrow[s - left];
                }
            }
        }
    }
    cols
}

#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_trans: bool,
    b: &[f64],
    b_trans: bool,
    c: &mut [f64],
    beta: f64,
) {
    // a: logical [m x k], b: logical [k x n], c: [m x n] row-major
    let (rsa, csa) = if a_trans { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_trans { (1, k as isize) } else { (n as isize, 1) };
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    // SAFETY: slice lengths cover the strided extents checked above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Temporal cross-correlation (no kernel flip), stride 1.
///
/// `x` is `[c_in, t]`, `k` is `[c_out, c_in, kw]`, output `[c_out, t_out]`.
pub fn conv1d(x: &DenseArray, k: &DenseArray, b: &DenseArray, pad: Padding) -> Result<DenseArray> {
    let (c_in, _t, c_out, kw, t_out) = conv_dims(x, k, b, pad)?;
    let (left, _) = pad.amounts(kw);
    let cols = im2col(x, kw, left, t_out);
    let mut out = vec![0.0; c_out * t_out];
    for (o, row) in out.chunks_mut(t_out).enumerate() {
        row.fill(b.data()[o]);
    }
    gemm(c_out, c_in * kw, t_out, k.data(), false, &cols, false, &mut out, 1.0);
    Ok(DenseArray::from_parts_unchecked(vec![c_out, t_out], out))
}

/// Returns (dx if requested, dK, db).
pub fn conv1d_backward(
    x: &DenseArray,
    k: &DenseArray,
    pad: Padding,
    gout: &DenseArray,
    want_dx: bool,
) -> (Option<DenseArray>, DenseArray, DenseArray) {
    let (c_in, t) = (x.shape()[0], x.shape()[1]);
    let (c_out, kw) = (k.shape()[0], k.shape()[2]);
    let t_out = gout.shape()[1];
    let (left, _) = pad.amounts(kw);
    let cols = im2col(x, kw, left, t_out);

    let mut gk = vec![0.0; c_out * c_in * kw];
    gemm(c_out, t_out, c_in * kw, gout.data(), false, &cols, true, &mut gk, 0.0);
    let gb = (0..c_out).map(|o| gout.row(o).iter().sum()).collect();

    let gx = want_dx.then(|| {
        let mut gcols = vec![0.0; c_in * kw * t_out];
        gemm(c_in * kw, c_out, t_out, k.data(), true, gout.data(), false, &mut gcols, 0.0);
        let mut gx = vec![0.0; c_in * t];
        for c in 0..c_in {
            for j in 0..kw {
                let src = &gcols[(c * kw + j) * t_out..(c * kw + j + 1) * t_out];
                for (to, g) in src.iter().enumerate() {
                    let s = to + j;
                    if s >= left && s - left < t {
                        gx[c * t + s - left] += g;
                    }
                }
            }
        }
        DenseArray::from_parts_unchecked(vec![c_in, t], gx)
    });
    (
        gx,
        DenseArray::from_parts_unchecked(k.shape().to_vec(), gk),
        DenseArray::from_parts_unchecked(vec![c_out], gb),
    )
}

/// Non-overlapping max pooling over time. Trailing `t % width` frames are
/// dropped. Also returns, per output cell, the flat index into `x` of the
/// first maximum in its window.
pub fn maxpool1d(x: &DenseArray, width: usize) -> Result<(DenseArray, Vec<usize>)> {
    if width < 1 {
        return Err(Error::Parameter("pool width must be >= 1".into()));
    }
    expect_ndim(x, 2, "maxpool input")?;
    let (c, t) = (x.shape()[0], x.shape()[1]);
    let t_out = t / width;
    if t_out == 0 {
        return Err(Error::Dimension(format!(
            "maxpool: width {width} exceeds length {t}"
        )));
    }
    let mut out = Vec::with_capacity(c * t_out);
    let mut argmax = Vec::with_capacity(c * t_out);
    for ch in 0..c {
        let row = x.row(ch);
        for to in 0..t_out {
            let start = to * width;
            let mut best = start;
            for s in start + 1..start + width {
                if row[s] > row[best] {
                    best = s;
                }
            }
            out.push(row[best]);
            argmax.push(ch * t + best);
        }
    }
    Ok((DenseArray::from_parts_unchecked(vec![c, t_out], out), argmax))
}

/// Routes each upstream gradient to the recorded argmax position.
pub fn maxpool1d_backward(x_shape: &[usize], argmax: &[usize], gout: &DenseArray) -> DenseArray {
    let mut gx = DenseArray::zeros(x_shape);
    for (&idx, g) in argmax.iter().zip(gout.data()) {
        gx.data_mut()[idx] += g;
    }
    gx
}

pub fn relu(x: &DenseArray) -> DenseArray {
    let data = x.data().iter().map(|&v| v.max(0.0)).collect();
    DenseArray::from_parts_unchecked(x.shape().to_vec(), data)
}

/// Subgradient at zero is zero.
pub fn relu_backward(x: &DenseArray, gout: &DenseArray) -> DenseArray {
    let data = x
        .data()
        .iter()
        .zip(gout.data())
        .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
        .collect();
    DenseArray::from_parts_unchecked(x.shape().to_vec(), data)
}

pub fn embedding_lookup(table: &DenseArray, idx: usize) -> Result<DenseArray> {
    expect_ndim(table, 2, "embedding table")?;
    if idx >= table.rows() {
        return Err(Error::Index {
            index: idx,
            len: table.rows(),
        });
    }
    Ok(DenseArray::from_parts_unchecked(
        vec![table.cols()],
        table.row(idx).to_vec(),
    ))
}

/// Dense table gradient with only row `idx` populated.
pub fn embedding_backward(table_shape: &[usize], idx: usize, gout: &DenseArray) -> DenseArray {
    let mut g = DenseArray::zeros(table_shape);
    g.row_mut(idx).copy_from_slice(gout.data());
    g
}

/// Cosine similarity clamped to [-1, 1].
pub fn cosine(a: &DenseArray, b: &DenseArray) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!(
            "cosine: lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    let (na, nb) = (a.norm(), b.norm());
    for n in [na, nb] {
        if n.is_nan() || n <= COSINE_EPS {
            return Err(Error::DegenerateVector { norm: n });
        }
    }
    Ok((dot(a.data(), b.data()) / (na * nb)).clamp(-1.0, 1.0))
}

/// Gradients of `g * cos(a, b)` with respect to `a` and `b`.
pub fn cosine_backward(a: &DenseArray, b: &DenseArray, g: f64) -> (DenseArray, DenseArray) {
    let (na, nb) = (a.norm(), b.norm());
    let ab = dot(a.data(), b.data());
    let cos = ab / (na * nb);
    let inv = 1.0 / (na * nb);
    let ga = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&ai, &bi)| g * (bi * inv - cos * ai / (na * na)))
        .collect();
    let gb = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&ai, &bi)| g * (ai * inv - cos * bi / (nb * nb)))
        .collect();
    (
        DenseArray::from_parts_unchecked(a.shape().to_vec(), ga),
        DenseArray::from_parts_unchecked(b.shape().to_vec(), gb),
    )
}
