//! The super-resolution network: front conv, bidirectional Mamba stack,
//! channel-expanding head with 1-D pixel shuffle (or a transposed-conv head),
//! plus a linear-interpolation skip connection.
//!
//! Signals are `[leads, len]`; the Mamba stack works on `[len, d_model]`.

#[cfg(test)]
mod tests;

use serde::{Deserialize, Serialize};

use crate::dsp::{linear_interp_upsample, Signal};
use crate::error::{Error, Result};
use crate::grad::kernels::{self, Padding};
use crate::grad::{Graph, NodeId, ScanArgs, Tensor, Unary};
use crate::real::Real;
use crate::seed::{rng_for, stream};
use crate::ssm::{dt_rank, Discretization, ScanImpl, SsmParams};

/// Depthwise causal conv width inside each Mamba block.
pub const BLOCK_CONV_K: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub leads: usize,
    /// Conv output channels (`D`).
    pub d_model: usize,
    /// Bidirectional Mamba layers (`M`).
    pub layers: usize,
    /// Upsampling ratio (`r`).
    pub ratio: usize,
    pub expand: usize,
    pub d_state: usize,
    pub conv_kernel_front: usize,
    pub conv_kernel_head: usize,
    pub use_pixel_shuffle: bool,
    pub use_skip_connection: bool,
    pub use_deconv: bool,
    pub discretization: Discretization,
    pub scan: ScanImpl,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            leads: 12,
            d_model: 160,
            layers: 5,
            ratio: 10,
            expand: 2,
            d_state: 16,
            conv_kernel_front: 7,
            conv_kernel_head: 3,
            use_pixel_shuffle: true,
            use_skip_connection: true,
            use_deconv: false,
            discretization: Discretization::Euler,
            scan: ScanImpl::Parallel,
        }
    }
}

impl ModelConfig {
    /// Small network for tests and desk-scale runs.
    pub fn tiny(leads: usize, d_model: usize, layers: usize) -> Self {
        ModelConfig { leads, d_model, layers, ..Default::default() }
    }

    pub fn d_inner(&self) -> usize {
        self.expand * self.d_model
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.leads == 0 || self.d_model == 0 || self.expand == 0 || self.d_state == 0 {
            return bad("leads, d_model, expand and d_state must be positive".into());
        }
        if self.ratio == 0 {
            return bad("ratio must be at least 1".into());
        }
        if self.use_pixel_shuffle == self.use_deconv {
            return bad("exactly one of use_pixel_shuffle and use_deconv must be set".into());
        }
        if self.conv_kernel_front.is_multiple_of(2) || self.conv_kernel_head.is_multiple_of(2) {
            return bad("front and head kernels must be odd for `same` padding".into());
        }
        Ok(())
    }

    /// Strides of the two transposed convs in the deconv head; their product is `ratio`.
    pub fn deconv_strides(&self) -> [usize; 2] {
        let r = self.ratio;
        match (2..r).rev().find(|s| r.is_multiple_of(*s)) {
            Some(s) => [s, r / s],
            None => [r, 1],
        }
    }
}

fn deconv_geometry(stride: usize) -> (usize, usize) {
    let k = 2 * stride;
    (k, (k - stride) / 2)
}

/// Parameters of one Mamba block, generic over the storage (`Tensor` or graph node).
#[derive(Clone, Debug, PartialEq)]
pub struct MambaWeights<P> {
    /// `[d_model, 2 * d_inner]`
    pub in_proj: P,
    /// `[d_inner, 1, BLOCK_CONV_K]`
    pub conv_w: P,
    /// `[d_inner]`
    pub conv_b: P,
    pub a_log: P,
    pub d_skip: P,
    pub x_proj: P,
    pub dt_proj: P,
    pub dt_bias: P,
    /// `[d_inner, d_model]`
    pub out_proj: P,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BiMambaWeights<P> {
    pub fwd: MambaWeights<P>,
    pub bwd: MambaWeights<P>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum HeadWeights<P> {
    /// Conv `d_model -> leads * ratio` followed by pixel shuffle.
    Shuffle { w: P, b: P },
    /// Transposed conv `d_model -> d_model`, SiLU, transposed conv `d_model -> leads`.
    Deconv { w1: P, b1: P, w2: P, b2: P },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Weights<P> {
    /// `[d_model, leads, conv_kernel_front]`
    pub front_w: P,
    pub front_b: P,
    pub layers: Vec<BiMambaWeights<P>>,
    pub head: HeadWeights<P>,
}

/// Learnable tensors of the network.
pub type ModelParams<T> = Weights<Tensor<T>>;

impl<P> MambaWeights<P> {
    fn entries(&self) -> [(&'static str, &P); 9] {
        [
            ("in_proj", &self.in_proj),
            ("conv_w", &self.conv_w),
            ("conv_b", &self.conv_b),
            ("a_log", &self.a_log),
            ("d_skip", &self.d_skip),
            ("x_proj", &self.x_proj),
            ("dt_proj", &self.dt_proj),
            ("dt_bias", &self.dt_bias),
            ("out_proj", &self.out_proj),
        ]
    }

    fn entries_mut(&mut self) -> [&mut P; 9] {
        [
            &mut self.in_proj,
            &mut self.conv_w,
            &mut self.conv_b,
            &mut self.a_log,
            &mut self.d_skip,
            &mut self.x_proj,
            &mut self.dt_proj,
            &mut self.dt_bias,
            &mut self.out_proj,
        ]
    }

    fn map<Q>(&self, f: &mut impl FnMut(&P) -> Q) -> MambaWeights<Q> {
        MambaWeights {
            in_proj: f(&self.in_proj),
            conv_w: f(&self.conv_w),
            conv_b: f(&self.conv_b),
            a_log: f(&self.a_log),
            d_skip: f(&self.d_skip),
            x_proj: f(&self.x_proj),
            dt_proj: f(&self.dt_proj),
            dt_bias: f(&self.dt_bias),
            out_proj: f(&self.out_proj),
        }
    }
}

impl<P> Weights<P> {
    /// Every entry with a stable dotted name, in canonical order.
    pub fn named(&self) -> Vec<(String, &P)> {
        let mut out = vec![("front.w".to_string(), &self.front_w), ("front.b".to_string(), &self.front_b)];
        for (i, l) in self.layers.iter().enumerate() {
            for (dir, m) in [("fwd", &l.fwd), ("bwd", &l.bwd)] {
                out.extend(m.entries().into_iter().map(|(n, p)| (format!("layer{i}.{dir}.{n}"), p)));
            }
        }
        match &self.head {
            HeadWeights::Shuffle { w, b } => {
                out.push(("head.w".into(), w));
                out.push(("head.b".into(), b));
            }
            HeadWeights::Deconv { w1, b1, w2, b2 } => {
                out.extend([
                    ("head.w1".into(), w1),
                    ("head.b1".into(), b1),
                    ("head.w2".into(), w2),
                    ("head.b2".into(), b2),
                ]);
            }
        }
        out
    }

    pub fn iter(&self) -> impl Iterator<Item = &P> {
        self.named().into_iter().map(|(_, p)| p)
    }

    /// Mutable entries in the same order as [`Weights::named`].
    pub fn iter_mut(&mut self) -> Vec<&mut P> {
        let mut out = vec![&mut self.front_w, &mut self.front_b];
        for l in &mut self.layers {
            out.extend(l.fwd.entries_mut());
            out.extend(l.bwd.entries_mut());
        }
        match &mut self.head {
            HeadWeights::Shuffle { w, b } => out.extend([w, b]),
            HeadWeights::Deconv { w1, b1, w2, b2 } => out.extend([w1, b1, w2, b2]),
        }
        out
    }

    pub fn map<Q>(&self, mut f: impl FnMut(&P) -> Q) -> Weights<Q> {
        Weights {
            front_w: f(&self.front_w),
            front_b: f(&self.front_b),
            layers: self
                .layers
                .iter()
                .map(|l| BiMambaWeights { fwd: l.fwd.map(&mut f), bwd: l.bwd.map(&mut f) })
                .collect(),
            head: match &self.head {
                HeadWeights::Shuffle { w, b } => HeadWeights::Shuffle { w: f(w), b: f(b) },
                HeadWeights::Deconv { w1, b1, w2, b2 } => {
                    HeadWeights::Deconv { w1: f(w1), b1: f(b1), w2: f(w2), b2: f(b2) }
                }
            },
        }
    }
}

fn uniform<T: Real>(shape: &[usize], fan_in: usize, rng: &mut impl rand::Rng) -> Tensor<T> {
    Tensor::uniform(shape.to_vec(), 1.0 / (fan_in as f64).sqrt(), rng)
}

impl<T: Real> MambaWeights<Tensor<T>> {
    fn init(cfg: &ModelConfig, seed: u64, layer: u64, dir: u64) -> Self {
        let (d, di) = (cfg.d_model, cfg.d_inner());
        let mut rng = rng_for(seed, &[stream::INIT, layer + 1, dir]);
        let in_proj = uniform(&[d, 2 * di], d, &mut rng);
        let conv_w = uniform(&[di, 1, BLOCK_CONV_K], BLOCK_CONV_K, &mut rng);
        let ssm = SsmParams::<T>::init(di, cfg.d_state, &mut rng);
        let out_proj = uniform(&[di, d], di, &mut rng);
        MambaWeights {
            in_proj,
            conv_w,
            conv_b: Tensor::zeros([di]),
            a_log: ssm.a_log,
            d_skip: ssm.d_skip,
            x_proj: ssm.x_proj,
            dt_proj: ssm.dt_proj,
            dt_bias: ssm.dt_bias,
            out_proj,
        }
    }
}

impl<T: Real> ModelParams<T> {
    /// Fan-in uniform weights, zero conv/linear biases. Each layer draws from
    /// its own stream, so changing `layers` leaves earlier layers untouched.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let (d, leads) = (cfg.d_model, cfg.leads);
        let mut rng = rng_for(seed, &[stream::INIT, 0]);
        let front_w = uniform(&[d, leads, cfg.conv_kernel_front], leads * cfg.conv_kernel_front, &mut rng);
        let layers = (0..cfg.layers as u64)
            .map(|i| BiMambaWeights {
                fwd: MambaWeights::init(cfg, seed, i, 0),
                bwd: MambaWeights::init(cfg, seed, i, 1),
            })
            .collect();
        let mut rng = rng_for(seed, &[stream::INIT, u64::MAX]);
        let head = if cfg.use_pixel_shuffle {
            let c = leads * cfg.ratio;
            HeadWeights::Shuffle {
                w: uniform(&[c, d, cfg.conv_kernel_head], d * cfg.conv_kernel_head, &mut rng),
                b: Tensor::zeros([c]),
            }
        } else {
            let [s1, s2] = cfg.deconv_strides();
            let (k1, k2) = (deconv_geometry(s1).0, deconv_geometry(s2).0);
            HeadWeights::Deconv {
                w1: uniform(&[d, d, k1], d * k1, &mut rng),
                b1: Tensor::zeros([d]),
                w2: uniform(&[d, leads, k2], d * k2, &mut rng),
                b2: Tensor::zeros([leads]),
            }
        };
        Ok(Weights { front_w, front_b: Tensor::zeros([d]), layers, head })
    }

    pub fn count(&self) -> usize {
        self.iter().map(Tensor::numel).sum()
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        self.map(Tensor::cast)
    }

    /// Zeroes every weight and bias of the network path, leaving only the skip connection.
    pub fn zero_network(&mut self) {
        for t in self.iter_mut() {
            t.data_mut().iter_mut().for_each(|v| *v = T::zero());
        }
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(Tensor::is_finite)
    }

    /// Registers every tensor as a tracked leaf of `g`.
    pub fn register(&self, g: &mut Graph<T>, requires_grad: bool) -> Weights<NodeId> {
        self.map(|t| g.leaf(t.clone(), requires_grad))
    }
}

/// Exact learnable-scalar count for a configuration.
pub fn count_params(cfg: &ModelConfig) -> usize {
    let (l, d, di, ds) = (cfg.leads, cfg.d_model, cfg.d_inner(), cfg.d_state);
    let rank = dt_rank(di);
    let front = d * l * cfg.conv_kernel_front + d;
    let block = d * 2 * di + di * BLOCK_CONV_K + di + di * ds + di + di * (rank + 2 * ds) + rank * di + di + di * d;
    let head = if cfg.use_pixel_shuffle {
        l * cfg.ratio * (d * cfg.conv_kernel_head + 1)
    } else {
        let [s1, s2] = cfg.deconv_strides();
        d * d * deconv_geometry(s1).0 + d + d * l * deconv_geometry(s2).0 + l
    };
    front + 2 * cfg.layers * block + head
}

/// One Mamba block on `x: [len, d_model]`, with the residual added.
pub fn mamba_block<T: Real>(
    g: &mut Graph<T>,
    x: NodeId,
    w: &MambaWeights<NodeId>,
    cfg: &ModelConfig,
) -> Result<NodeId> {
    let (_, d) = g.value(x).dims2()?;
    if d != g.shape(w.in_proj)[0] {
        return Err(Error::Dimension(format!("block input width {d} vs in_proj {:?}", g.shape(w.in_proj))));
    }
    let di = g.shape(w.out_proj)[0];
    let ds = g.shape(w.a_log)[1];
    let rank = g.shape(w.dt_proj)[0];

    let xz = g.matmul(x, w.in_proj)?;
    let u = g.slice_cols(xz, 0, di)?;
    let z = g.slice_cols(xz, di, 2 * di)?;

    let ut = g.transpose(u)?;
    let conv = g.conv1d(ut, w.conv_w, Some(w.conv_b), Padding::Causal, di)?;
    let conv = g.transpose(conv)?;
    let u = g.silu(conv)?;

    let proj = g.matmul(u, w.x_proj)?;
    let low = g.slice_cols(proj, 0, rank)?;
    let b = g.slice_cols(proj, rank, rank + ds)?;
    let c = g.slice_cols(proj, rank + ds, rank + 2 * ds)?;
    let dt = g.matmul(low, w.dt_proj)?;
    let dt = g.add_row_bias(dt, w.dt_bias)?;
    let delta = g.unary(dt, Unary::Softplus)?;
    let a = g.unary(w.a_log, Unary::Exp)?;
    let a = g.unary(a, Unary::Neg)?;

    let y =
        g.selective_scan(ScanArgs { u, delta, a, b, c, d_skip: w.d_skip, mode: cfg.discretization, imp: cfg.scan })?;
    let gate = g.silu(z)?;
    let y = g.mul(y, gate)?;
    let out = g.matmul(y, w.out_proj)?;
    g.add(out, x)
}

/// `fwd(x) + reverse(bwd(reverse(x))) - x`: both directions with one residual copy.
pub fn bidirectional_mamba<T: Real>(
    g: &mut Graph<T>,
    x: NodeId,
    w: &BiMambaWeights<NodeId>,
    cfg: &ModelConfig,
) -> Result<NodeId> {
    let f = mamba_block(g, x, &w.fwd, cfg)?;
    let xr = g.reverse_rows(x)?;
    let b = mamba_block(g, xr, &w.bwd, cfg)?;
    let b = g.reverse_rows(b)?;
    let s = g.add(f, b)?;
    g.sub(s, x)
}

/// Network output (before the skip connection) for `lr: [leads, len]`.
fn network<T: Real>(g: &mut Graph<T>, lr: NodeId, w: &Weights<NodeId>, cfg: &ModelConfig) -> Result<NodeId> {
    let h = g.conv1d(lr, w.front_w, Some(w.front_b), Padding::Same, 1)?;
    let mut h = g.transpose(h)?;
    for layer in &w.layers {
        h = bidirectional_mamba(g, h, layer, cfg)?;
    }
    let h = g.transpose(h)?;
    match &w.head {
        HeadWeights::Shuffle { w, b } => {
            let e = g.conv1d(h, *w, Some(*b), Padding::Same, 1)?;
            g.pixel_shuffle_1d(e, cfg.ratio)
        }
        HeadWeights::Deconv { w1, b1, w2, b2 } => {
            let [s1, s2] = cfg.deconv_strides();
            let e = g.conv_transpose1d(h, *w1, *b1, s1, deconv_geometry(s1).1)?;
            let e = g.silu(e)?;
            g.conv_transpose1d(e, *w2, *b2, s2, deconv_geometry(s2).1)
        }
    }
}

/// Linear-interpolation upsampling of a `[leads, len]` tensor.
pub fn li_upsample<T: Real>(lr: &Tensor<T>, ratio: usize) -> Result<Tensor<T>> {
    let (leads, len) = lr.dims2()?;
    let sig = Signal::new(leads, 1.0, lr.data().iter().map(|v| v.as_f64()).collect())?;
    let up = linear_interp_upsample(&sig, ratio)?;
    Tensor::new([leads, len * ratio], up.data().iter().map(|&v| T::lit(v)).collect())
}

/// Full forward pass on the graph; returns the `[leads, ratio * len]` output node.
pub fn msecg_forward<T: Real>(
    g: &mut Graph<T>,
    lr: &Tensor<T>,
    w: &Weights<NodeId>,
    cfg: &ModelConfig,
) -> Result<NodeId> {
    let (leads, len) = lr.dims2()?;
    if leads != cfg.leads {
        return Err(Error::Dimension(format!("input has {leads} leads, model expects {}", cfg.leads)));
    }
    if len < 2 {
        return Err(Error::Dimension(format!("input of {len} samples is too short")));
    }
    let x = g.constant(lr.clone());
    let out = network(g, x, w, cfg)?;
    if !cfg.use_skip_connection {
        return Ok(out);
    }
    let skip = g.constant(li_upsample(lr, cfg.ratio)?);
    g.add(out, skip)
}

/// Inference on a signal; the output sample rate is `ratio` times the input's.
pub fn infer<T: Real>(params: &ModelParams<T>, cfg: &ModelConfig, lr: &Signal) -> Result<Signal> {
    let x = Tensor::new([lr.channels(), lr.len()], lr.data().iter().map(|&v| T::lit(v)).collect())?;
    let mut g = Graph::new();
    let w = params.register(&mut g, false);
    let y = msecg_forward(&mut g, &x, &w, cfg)?;
    Signal::new(
        lr.channels(),
        lr.sample_rate() * cfg.ratio as f64,
        g.value(y).data().iter().map(|v| v.as_f64()).collect(),
    )
}

/// `[r * c, len] -> [c, r * len]`.
pub fn pixel_shuffle<T: Real>(x: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    let (ch, len) = x.dims2()?;
    if r == 0 || ch % r != 0 {
        return Err(Error::Dimension(format!("{ch} channels not divisible by {r}")));
    }
    Tensor::new([ch / r, len * r], kernels::pixel_shuffle_1d(x.data(), ch / r, len, r))
}

/// `[c, r * len] -> [r * c, len]`.
pub fn pixel_unshuffle<T: Real>(x: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    let (ch, n) = x.dims2()?;
    if r == 0 || n % r != 0 {
        return Err(Error::Dimension(format!("length {n} not divisible by {r}")));
    }
    Tensor::new([ch * r, n / r], kernels::pixel_unshuffle_1d(x.data(), ch, n / r, r))
}
