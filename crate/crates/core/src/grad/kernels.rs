//! Forward and adjoint kernels on raw slices. The graph in `graph.rs` wraps
//! these with shape checks and records them for replay.

use crate::real::Real;

/// Zero-padding mode of a 1-D convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    /// Symmetric padding of `(k - 1) / 2`, output length equals input length. Needs odd `k`.
    Same,
    /// No padding, output length `L - k + 1`.
    Valid,
    /// `k - 1` zeros on the left only, output length equals input length.
    Causal,
}

impl Padding {
    pub fn left(self, k: usize) -> usize {
        match self {
            Padding::Same => (k - 1) / 2,
            Padding::Valid => 0,
            Padding::Causal => k - 1,
        }
    }

    pub fn out_len(self, len: usize, k: usize) -> usize {
        match self {
            Padding::Same | Padding::Causal => len,
            Padding::Valid => len + 1 - k,
        }
    }
}

/// `[m, k] x [k, n] -> [m, n]`
pub fn matmul<T: Real>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == T::zero() {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o = *o + av * bv;
            }
        }
    }
    out
}

/// `a^T` for a row-major `[rows, cols]` matrix.
pub fn transpose<T: Real>(a: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut out = vec![T::zero(); rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = a[i * cols + j];
        }
    }
    out
}

/// Geometry of a grouped 1-D convolution over a `[c_in, len]` input.
#[derive(Clone, Copy, Debug)]
pub struct ConvGeom {
    pub c_in: usize,
    pub c_out: usize,
    pub len: usize,
    pub k: usize,
    pub groups: usize,
    pub padding: Padding,
}

impl ConvGeom {
    pub fn out_len(&self) -> usize {
        self.padding.out_len(self.len, self.k)
    }

    fn taps(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        // (output channel, input channel, channel index inside the group)
        let cin_g = self.c_in / self.groups;
        let cout_g = self.c_out / self.groups;
        (0..self.c_out).flat_map(move |o| {
            let g = o / cout_g;
            (0..cin_g).map(move |cl| (o, g * cin_g + cl, cl))
        })
    }

    /// Valid output range `[t_lo, t_hi)` for kernel tap `j`.
    fn span(&self, j: usize) -> (usize, usize) {
        let pad = self.padding.left(self.k);
        let out_len = self.out_len();
        // input index = t + j - pad must lie in [0, len)
        let lo = pad.saturating_sub(j);
        let hi = (self.len + pad).saturating_sub(j).min(out_len);
        (lo, hi.max(lo))
    }
}

/// Cross-correlation: `out[o, t] = bias[o] + sum_{c, j} w[o, c, j] * x[c, t + j - pad]`.
pub fn conv1d<T: Real>(x: &[T], w: &[T], bias: Option<&[T]>, g: &ConvGeom) -> Vec<T> {
    let out_len = g.out_len();
    let cin_g = g.c_in / g.groups;
    let pad = g.padding.left(g.k);
    let mut out = vec![T::zero(); g.c_out * out_len];
    if let Some(b) = bias {
        for o in 0..g.c_out {
            out[o * out_len..(o + 1) * out_len].fill(b[o]);
        }
    }
    for (o, c, cl) in g.taps() {
        let xrow = &x[c * g.len..(c + 1) * g.len];
        for j in 0..g.k {
            let wv = w[(o * cin_g + cl) * g.k + j];
            let (lo, hi) = g.span(j);
            if hi == lo {
                continue;
            }
            let orow = &mut out[o * out_len + lo..o * out_len + hi];
            let xs = &xrow[lo + j - pad..hi + j - pad];
            for (ov, &xv) in orow.iter_mut().zip(xs) {
                *ov = *ov + wv * xv;
            }
        }
    }
    out
}

/// Adjoint of [`conv1d`]: returns `(dx, dw, dbias)`.
pub fn conv1d_backward<T: Real>(x: &[T], w: &[T], dy: &[T], g: &ConvGeom) -> (Vec<T>, Vec<T>, Vec<T>) {
    let out_len = g.out_len();
    let cin_g = g.c_in / g.groups;
    let pad = g.padding.left(g.k);
    let mut dx = vec![T::zero(); x.len()];
    let mut dw = vec![T::zero(); w.len()];
    let db = (0..g.c_out).map(|o| dy[o * out_len..(o + 1) * out_len].iter().copied().sum()).collect();
    for (o, c, cl) in g.taps() {
        for j in 0..g.k {
            let widx = (o * cin_g + cl) * g.k + j;
            let wv = w[widx];
            let (lo, hi) = g.span(j);
            if hi == lo {
                continue;
            }
            let dys = &dy[o * out_len + lo..o * out_len + hi];
            let xs = lo + j - pad..hi + j - pad;
            let mut acc = T::zero();
            for (&d, &xv) in dys.iter().zip(&x[c * g.len..][xs.clone()]) {
                acc = acc + d * xv;
            }
            dw[widx] = dw[widx] + acc;
            for (dxv, &d) in dx[c * g.len..][xs].iter_mut().zip(dys) {
                *dxv = *dxv + wv * d;
            }
        }
    }
    (dx, dw, db)
}

/// Geometry of a transposed convolution whose full output is cropped to
/// `[crop, crop + len * stride)`.
#[derive(Clone, Copy, Debug)]
pub struct DeconvGeom {
    pub c_in: usize,
    pub c_out: usize,
    pub len: usize,
    pub k: usize,
    pub stride: usize,
    pub crop: usize,
}

impl DeconvGeom {
    pub fn out_len(&self) -> usize {
        self.len * self.stride
    }

    fn target(&self, t: usize, j: usize) -> Option<usize> {
        (t * self.stride + j).checked_sub(self.crop).filter(|&p| p < self.out_len())
    }
}

/// `out[o, t * stride + j - crop] += x[c, t] * w[c, o, j]`, weight layout `[c_in, c_out, k]`.
pub fn conv_transpose1d<T: Real>(x: &[T], w: &[T], bias: &[T], g: &DeconvGeom) -> Vec<T> {
    let out_len = g.out_len();
    let mut out = vec![T::zero(); g.c_out * out_len];
    for o in 0..g.c_out {
        out[o * out_len..(o + 1) * out_len].fill(bias[o]);
    }
    for c in 0..g.c_in {
        for o in 0..g.c_out {
            for j in 0..g.k {
                let wv = w[(c * g.c_out + o) * g.k + j];
                for t in 0..g.len {
                    if let Some(p) = g.target(t, j) {
                        out[o * out_len + p] = out[o * out_len + p] + x[c * g.len + t] * wv;
                    }
                }
            }
        }
    }
    out
}

pub fn conv_transpose1d_backward<T: Real>(x: &[T], w: &[T], dy: &[T], g: &DeconvGeom) -> (Vec<T>, Vec<T>, Vec<T>) {
    let out_len = g.out_len();
    let mut dx = vec![T::zero(); x.len()];
    let mut dw = vec![T::zero(); w.len()];
    let db = (0..g.c_out).map(|o| dy[o * out_len..(o + 1) * out_len].iter().copied().sum()).collect();
    for c in 0..g.c_in {
        for o in 0..g.c_out {
            for j in 0..g.k {
                let widx = (c * g.c_out + o) * g.k + j;
                let mut acc = T::zero();
                for t in 0..g.len {
                    if let Some(p) = g.target(t, j) {
                        let d = dy[o * out_len + p];
                        acc = acc + d * x[c * g.len + t];
                        dx[c * g.len + t] = dx[c * g.len + t] + d * w[widx];
                    }
                }
                dw[widx] = dw[widx] + acc;
            }
        }
    }
    (dx, dw, db)
}

/// `[r * c, len] -> [c, r * len]` with `out[c, n * r + j] = in[c * r + j, n]`.
pub fn pixel_shuffle_1d<T: Real>(x: &[T], channels_out: usize, len: usize, r: usize) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    for c in 0..channels_out {
        for j in 0..r {
            let src = &x[(c * r + j) * len..(c * r + j + 1) * len];
            for (n, &v) in src.iter().enumerate() {
                out[c * r * len + n * r + j] = v;
            }
        }
    }
    out
}

/// Inverse of [`pixel_shuffle_1d`]: `[c, r * len] -> [r * c, len]`.
pub fn pixel_unshuffle_1d<T: Real>(x: &[T], channels: usize, len: usize, r: usize) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    for c in 0..channels {
        for j in 0..r {
            for n in 0..len {
                out[(c * r + j) * len + n] = x[c * r * len + n * r + j];
            }
        }
    }
    out
}
