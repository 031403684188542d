//! Selective state-space core: input-dependent parameters, discretization
//! and the linear recurrence
//!
//! ```text
//! h[n] = Abar[n] * h[n-1] + Bbar[n] * x[n]
//! y[n] = <C[n], h[n]> + D * x[n]
//! ```
//!
//! evaluated either left to right or as a work-efficient parallel prefix
//! scan over affine maps `h -> a * h + b`.
//!
//! Layouts are row-major: per-step tensors are `[len, d_inner]`,
//! `[len, d_state]` or `[len, d_inner, d_state]`; `A` is `[d_inner, d_state]`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grad::Tensor;
use crate::real::Real;

/// How `Bbar` is derived from `(delta, A, B)`. `Abar = exp(delta * A)` in both cases.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Discretization {
    /// `Bbar = delta * B`
    #[default]
    Euler,
    /// `Bbar = (exp(delta * A) - 1) / A * B`
    ZohExact,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanImpl {
    Sequential,
    #[default]
    Parallel,
}

/// Learnable parameters of one selective SSM.
#[derive(Clone, Debug, PartialEq)]
pub struct SsmParams<T> {
    /// `[d_inner, d_state]`, `A = -exp(a_log)`.
    pub a_log: Tensor<T>,
    /// `[d_inner]` per-channel passthrough.
    pub d_skip: Tensor<T>,
    /// `[d_inner, dt_rank + 2 * d_state]` projecting x to (low-rank delta, B, C).
    pub x_proj: Tensor<T>,
    /// `[dt_rank, d_inner]`
    pub dt_proj: Tensor<T>,
    /// `[d_inner]`
    pub dt_bias: Tensor<T>,
}

/// Low-rank width of the delta projection for a given inner width.
pub fn dt_rank(d_inner: usize) -> usize {
    d_inner.div_ceil(16)
}

impl<T: Real> SsmParams<T> {
    /// Diagonal `A` rows span `-1 .. -d_state`; the delta bias is drawn so that
    /// `softplus(bias)` is log-uniform in `[1e-3, 1e-1]`.
    pub fn init<R: Rng + ?Sized>(d_inner: usize, d_state: usize, rng: &mut R) -> Self {
        let rank = dt_rank(d_inner);
        let a_log = Tensor::from_fn([d_inner, d_state], |i| T::lit(((i % d_state) + 1) as f64).ln());
        let x_bound = 1.0 / (d_inner as f64).sqrt();
        let dt_bound = 1.0 / (rank as f64).sqrt();
        let x_proj = Tensor::uniform([d_inner, rank + 2 * d_state], x_bound, rng);
        let dt_proj = Tensor::uniform([rank, d_inner], dt_bound, rng);
        let (lo, hi) = (1e-3f64.ln(), 1e-1f64.ln());
        let dt_bias = Tensor::from_fn([d_inner], |_| {
            let dt = rng.random_range(lo..hi).exp();
            // inverse softplus
            T::lit(dt + (-(-dt).exp_m1()).ln())
        });
        SsmParams { a_log, d_skip: Tensor::full([d_inner], T::one()), x_proj, dt_proj, dt_bias }
    }

    pub fn d_inner(&self) -> usize {
        self.d_skip.numel()
    }

    pub fn d_state(&self) -> usize {
        self.a_log.numel() / self.d_inner()
    }

    /// `A = -exp(a_log)`, strictly negative.
    pub fn a(&self) -> Vec<T> {
        self.a_log.data().iter().map(|v| -v.exp()).collect()
    }

    pub fn count(&self) -> usize {
        self.a_log.numel() + self.d_skip.numel() + self.x_proj.numel() + self.dt_proj.numel() + self.dt_bias.numel()
    }
}

/// Input-dependent `(delta, B, C)` for a `[len, d_inner]` input.
pub struct Selection<T> {
    pub delta: Vec<T>,
    pub b: Vec<T>,
    pub c: Vec<T>,
}

/// `ln(1 + e^v)`, saturating at the smallest positive normal value so the
/// result stays strictly positive when `e^v` underflows.
pub fn softplus<T: Real>(v: T) -> T {
    if v > T::lit(20.0) {
        v
    } else {
        (v.max(T::zero()) + (-v.abs()).exp().ln_1p()).max(T::min_positive_value())
    }
}

/// `B` and `C` are linear projections of `x`;
/// `delta = softplus(x W_low W_dt + bias)` is strictly positive.
pub fn input_dependent_params<T: Real>(x: &[T], len: usize, params: &SsmParams<T>) -> Result<Selection<T>> {
    let d_inner = params.d_inner();
    let d_state = params.d_state();
    let rank = params.dt_proj.shape()[0];
    let width = rank + 2 * d_state;
    if x.len() != len * d_inner {
        return Err(Error::Dimension(format!("selection input has {} values, expected {len} x {d_inner}", x.len())));
    }
    let proj = crate::grad::kernels::matmul(x, params.x_proj.data(), len, d_inner, width);
    let mut low = Vec::with_capacity(len * rank);
    let mut b = Vec::with_capacity(len * d_state);
    let mut c = Vec::with_capacity(len * d_state);
    for row in proj.chunks(width) {
        low.extend_from_slice(&row[..rank]);
        b.extend_from_slice(&row[rank..rank + d_state]);
        c.extend_from_slice(&row[rank + d_state..]);
    }
    let mut delta = crate::grad::kernels::matmul(&low, params.dt_proj.data(), len, rank, d_inner);
    for row in delta.chunks_mut(d_inner) {
        for (v, &bias) in row.iter_mut().zip(params.dt_bias.data()) {
            *v = softplus(*v + bias);
        }
    }
    Ok(Selection { delta, b, c })
}

/// Sequence dimensions shared by the scan routines.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ScanDims {
    pub len: usize,
    pub d_inner: usize,
    pub d_state: usize,
}

impl ScanDims {
    fn lanes(&self) -> usize {
        self.d_inner * self.d_state
    }
}

/// Zero-order-hold transition and input matrices, both `[len, d_inner, d_state]`.
pub fn discretize<T: Real>(
    delta: &[T],
    a: &[T],
    b: &[T],
    dims: ScanDims,
    mode: Discretization,
) -> Result<(Vec<T>, Vec<T>)> {
    let ScanDims { len, d_inner, d_state } = dims;
    if delta.len() != len * d_inner || a.len() != d_inner * d_state || b.len() != len * d_state {
        return Err(Error::Dimension("discretize: inconsistent delta/A/B shapes".into()));
    }
    if let Some(bad) = delta.iter().find(|d| !(**d > T::zero())) {
        return Err(Error::Contract(format!("discretize needs delta > 0, found {bad}")));
    }
    let mut abar = vec![T::zero(); len * dims.lanes()];
    let mut bbar = vec![T::zero(); len * dims.lanes()];
    for n in 0..len {
        for i in 0..d_inner {
            let dt = delta[n * d_inner + i];
            for s in 0..d_state {
                let av = a[i * d_state + s];
                let bv = b[n * d_state + s];
                let idx = (n * d_inner + i) * d_state + s;
                let e = (dt * av).exp();
                abar[idx] = e;
                bbar[idx] = match mode {
                    Discretization::Euler => dt * bv,
                    Discretization::ZohExact => (e - T::one()) / av * bv,
                };
            }
        }
    }
    Ok((abar, bbar))
}

/// Gradients of [`discretize`] with respect to `(delta, A, B)`.
pub fn discretize_backward<T: Real>(
    delta: &[T],
    a: &[T],
    b: &[T],
    d_abar: &[T],
    d_bbar: &[T],
    dims: ScanDims,
    mode: Discretization,
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let ScanDims { len, d_inner, d_state } = dims;
    let mut dd = vec![T::zero(); delta.len()];
    let mut da = vec![T::zero(); a.len()];
    let mut db = vec![T::zero(); b.len()];
    for n in 0..len {
        for i in 0..d_inner {
            let dt = delta[n * d_inner + i];
            let mut acc_dt = T::zero();
            for s in 0..d_state {
                let idx = (n * d_inner + i) * d_state + s;
                let av = a[i * d_state + s];
                let bv = b[n * d_state + s];
                let e = (dt * av).exp();
                let ga = d_abar[idx] * e;
                acc_dt = acc_dt + ga * av;
                da[i * d_state + s] = da[i * d_state + s] + ga * dt;
                let gb = d_bbar[idx];
                match mode {
                    Discretization::Euler => {
                        acc_dt = acc_dt + gb * bv;
                        db[n * d_state + s] = db[n * d_state + s] + gb * dt;
                    }
                    Discretization::ZohExact => {
                        let factor = (e - T::one()) / av;
                        acc_dt = acc_dt + gb * e * bv;
                        let dfactor = (dt * e * av - (e - T::one())) / (av * av);
                        da[i * d_state + s] = da[i * d_state + s] + gb * bv * dfactor;
                        db[n * d_state + s] = db[n * d_state + s] + gb * factor;
                    }
                }
            }
            dd[n * d_inner + i] = acc_dt;
        }
    }
    (dd, da, db)
}

/// Borrowed operands of one scan.
#[derive(Clone, Copy, Debug)]
pub struct ScanInputs<'a, T> {
    /// `[len, d_inner, d_state]`
    pub abar: &'a [T],
    /// `[len, d_inner, d_state]`
    pub bbar: &'a [T],
    /// `[len, d_state]`
    pub c: &'a [T],
    /// `[len, d_inner]`
    pub x: &'a [T],
    /// `[d_inner]`
    pub d_skip: &'a [T],
    pub dims: ScanDims,
}

impl<T: Real> ScanInputs<'_, T> {
    pub fn validate(&self) -> Result<()> {
        let ScanDims { len, d_inner, d_state } = self.dims;
        let full = len * d_inner * d_state;
        let ok = len > 0
            && self.abar.len() == full
            && self.bbar.len() == full
            && self.c.len() == len * d_state
            && self.x.len() == len * d_inner
            && self.d_skip.len() == d_inner;
        if ok {
            Ok(())
        } else {
            Err(Error::Dimension(format!("scan operands inconsistent with {:?}", self.dims)))
        }
    }

    /// `y[n, i] = sum_s C[n, s] h[n, i, s] + D[i] x[n, i]`
    fn readout(&self, h: &[T]) -> Vec<T> {
        let ScanDims { len, d_inner, d_state } = self.dims;
        let mut y = vec![T::zero(); len * d_inner];
        for n in 0..len {
            let cn = &self.c[n * d_state..(n + 1) * d_state];
            for i in 0..d_inner {
                let row = n * d_inner + i;
                let hs = &h[row * d_state..(row + 1) * d_state];
                let mut acc = T::zero();
                for (&cv, &hv) in cn.iter().zip(hs) {
                    acc = acc + cv * hv;
                }
                y[row] = acc + self.d_skip[i] * self.x[row];
            }
        }
        y
    }
}

/// Output of a forward scan together with every latent state `[len, d_inner, d_state]`.
#[derive(Clone, Debug)]
pub struct ScanOutput<T> {
    pub y: Vec<T>,
    pub h: Vec<T>,
}

/// Left-to-right evaluation of the recurrence from `h = 0`.
pub fn scan_sequential<T: Real>(inp: &ScanInputs<'_, T>) -> Result<ScanOutput<T>> {
    inp.validate()?;
    let ScanDims { len, d_inner, d_state } = inp.dims;
    let lanes = inp.dims.lanes();
    let mut h = vec![T::zero(); len * lanes];
    let mut state = vec![T::zero(); lanes];
    for n in 0..len {
        for i in 0..d_inner {
            let xv = inp.x[n * d_inner + i];
            for s in 0..d_state {
                let lane = i * d_state + s;
                let idx = n * lanes + lane;
                state[lane] = inp.abar[idx] * state[lane] + inp.bbar[idx] * xv;
            }
        }
        h[n * lanes..(n + 1) * lanes].copy_from_slice(&state);
    }
    Ok(ScanOutput { y: inp.readout(&h), h })
}

/// Below this many lane updates per tree level the sweep stays on one thread.
const PAR_THRESHOLD: usize = 1 << 14;

/// Apply `f(left_row_a, left_row_b, right_row_a, right_row_b)` to every node
/// pair of one tree level. Each pair owns a disjoint chunk so the arithmetic
/// is identical regardless of how many workers run it.
fn sweep_level<T, F>(a: &mut [T], b: &mut [T], lanes: usize, span: usize, f: F)
where
    T: Real,
    F: Fn(&mut [T], &mut [T], &mut [T], &mut [T]) + Sync,
{
    let chunk = 2 * span * lanes;
    let body = |(ca, cb): (&mut [T], &mut [T])| {
        let (la, ra) = ca.split_at_mut(span * lanes);
        let (lb, rb) = cb.split_at_mut(span * lanes);
        let left = (span - 1) * lanes..span * lanes;
        let right = (span - 1) * lanes..span * lanes;
        f(&mut la[left.clone()], &mut lb[left], &mut ra[right.clone()], &mut rb[right]);
    };
    if a.len() / 2 >= PAR_THRESHOLD {
        a.par_chunks_mut(chunk).zip(b.par_chunks_mut(chunk)).for_each(body);
    } else {
        a.chunks_mut(chunk).zip(b.chunks_mut(chunk)).for_each(body);
    }
}

/// Blelloch up-sweep/down-sweep over the affine maps `h -> Abar[n] h + Bbar[n] x[n]`,
/// composed as `(a2, b2) . (a1, b1) = (a2 a1, a2 b1 + b2)`. O(len) work,
/// O(log len) depth.
pub fn scan_parallel<T: Real>(inp: &ScanInputs<'_, T>) -> Result<ScanOutput<T>> {
    inp.validate()?;
    let ScanDims { len, d_inner, d_state } = inp.dims;
    let lanes = inp.dims.lanes();
    let padded = len.next_power_of_two();

    // element maps, padded with the identity (1, 0)
    let mut ea = vec![T::one(); padded * lanes];
    let mut eb = vec![T::zero(); padded * lanes];
    ea[..len * lanes].copy_from_slice(inp.abar);
    for n in 0..len {
        for i in 0..d_inner {
            let xv = inp.x[n * d_inner + i];
            for s in 0..d_state {
                let idx = (n * d_inner + i) * d_state + s;
                eb[idx] = inp.bbar[idx] * xv;
            }
        }
    }

    let mut pa = ea.clone();
    let mut pb = eb.clone();

    // up-sweep: right child <- left . right
    let mut span = 1;
    while span < padded {
        sweep_level(&mut pa, &mut pb, lanes, span, |la, lb, ra, rb| {
            for l in 0..la.len() {
                rb[l] = ra[l] * lb[l] + rb[l];
                ra[l] = ra[l] * la[l];
            }
        });
        span *= 2;
    }

    // down-sweep to exclusive prefixes
    let root = (padded - 1) * lanes..padded * lanes;
    pa[root.clone()].fill(T::one());
    pb[root].fill(T::zero());
    span = padded / 2;
    while span >= 1 {
        sweep_level(&mut pa, &mut pb, lanes, span, |la, lb, ra, rb| {
            for l in 0..la.len() {
                // (left total, parent prefix) -> (parent prefix, left total . parent prefix)
                let (ta, tb) = (la[l], lb[l]);
                let (pa_, pb_) = (ra[l], rb[l]);
                la[l] = pa_;
                lb[l] = pb_;
                ra[l] = ta * pa_;
                rb[l] = ta * pb_ + tb;
            }
        });
        span /= 2;
    }

    // inclusive prefix applied to h = 0 is the b component of element . exclusive
    let mut h = vec![T::zero(); len * lanes];
    let fill = |(n, row): (usize, &mut [T])| {
        for (l, out) in row.iter_mut().enumerate() {
            let idx = n * lanes + l;
            *out = ea[idx] * pb[idx] + eb[idx];
        }
    };
    if len * lanes >= PAR_THRESHOLD {
        h.par_chunks_mut(lanes).enumerate().for_each(fill);
    } else {
        h.chunks_mut(lanes).enumerate().for_each(fill);
    }
    Ok(ScanOutput { y: inp.readout(&h), h })
}

pub fn scan<T: Real>(inp: &ScanInputs<'_, T>, imp: ScanImpl) -> Result<ScanOutput<T>> {
    match imp {
        ScanImpl::Sequential => scan_sequential(inp),
        ScanImpl::Parallel => scan_parallel(inp),
    }
}

/// Gradients of a scan with respect to each of its operands.
#[derive(Clone, Debug)]
pub struct ScanGrads<T> {
    pub d_abar: Vec<T>,
    pub d_bbar: Vec<T>,
    pub d_c: Vec<T>,
    pub d_x: Vec<T>,
    pub d_skip: Vec<T>,
}

/// Reverse-time adjoint of the recurrence. `h` are the states saved by the
/// forward pass and `dy` the upstream gradient `[len, d_inner]`.
pub fn scan_backward<T: Real>(inp: &ScanInputs<'_, T>, h: &[T], dy: &[T]) -> Result<ScanGrads<T>> {
    inp.validate()?;
    let ScanDims { len, d_inner, d_state } = inp.dims;
    let lanes = inp.dims.lanes();
    if h.len() != len * lanes {
        return Err(Error::Contract(format!(
            "scan_backward needs {} saved state values, got {}",
            len * lanes,
            h.len()
        )));
    }
    if dy.len() != len * d_inner {
        return Err(Error::Dimension("scan_backward: upstream gradient shape".into()));
    }
    let mut g = ScanGrads {
        d_abar: vec![T::zero(); len * lanes],
        d_bbar: vec![T::zero(); len * lanes],
        d_c: vec![T::zero(); len * d_state],
        d_x: vec![T::zero(); len * d_inner],
        d_skip: vec![T::zero(); d_inner],
    };
    // gradient flowing into h[n] from h[n + 1]
    let mut carry = vec![T::zero(); lanes];
    for n in (0..len).rev() {
        for i in 0..d_inner {
            let row = n * d_inner + i;
            let dyv = dy[row];
            let xv = inp.x[row];
            let mut dx = dyv * inp.d_skip[i];
            g.d_skip[i] = g.d_skip[i] + dyv * xv;
            for s in 0..d_state {
                let lane = i * d_state + s;
                let idx = n * lanes + lane;
                let cv = inp.c[n * d_state + s];
                g.d_c[n * d_state + s] = g.d_c[n * d_state + s] + dyv * h[idx];
                let gh = dyv * cv + carry[lane];
                let prev = if n > 0 { h[idx - lanes] } else { T::zero() };
                g.d_abar[idx] = gh * prev;
                g.d_bbar[idx] = gh * xv;
                dx = dx + gh * inp.bbar[idx];
                carry[lane] = gh * inp.abar[idx];
            }
            g.d_x[row] = dx;
        }
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dims(len: usize, d_inner: usize, d_state: usize) -> ScanDims {
        ScanDims { len, d_inner, d_state }
    }

    #[test]
    fn softplus_stays_positive_under_underflow() {
        assert_eq!(softplus(0.0f64), std::f64::consts::LN_2);
        assert_eq!(softplus(50.0f32), 50.0);
        for v in [-90.0f32, -200.0, -1e30, f32::MIN] {
            assert_eq!(softplus(v), f32::MIN_POSITIVE, "{v}");
        }
        assert!(softplus(-800.0f64) > 0.0);
        let a = [-1.0f32];
        let b = [1.0f32];
        assert!(discretize(&[softplus(-500.0f32)], &a, &b, dims(1, 1, 1), Discretization::Euler).is_ok());
    }

    struct Case {
        abar: Vec<f64>,
        bbar: Vec<f64>,
        c: Vec<f64>,
        x: Vec<f64>,
        d: Vec<f64>,
        dims: ScanDims,
    }

    impl Case {
        fn random(seed: u64, len: usize, d_inner: usize, d_state: usize) -> Self {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let lanes = len * d_inner * d_state;
            Case {
                abar: (0..lanes).map(|_| rng.random_range(0.5..0.999)).collect(),
                bbar: (0..lanes).map(|_| rng.random_range(-1.0..1.0)).collect(),
                c: (0..len * d_state).map(|_| rng.random_range(-1.0..1.0)).collect(),
                x: (0..len * d_inner).map(|_| rng.random_range(-1.0..1.0)).collect(),
                d: (0..d_inner).map(|_| rng.random_range(-1.0..1.0)).collect(),
                dims: dims(len, d_inner, d_state),
            }
        }

        fn inputs(&self) -> ScanInputs<'_, f64> {
            ScanInputs { abar: &self.abar, bbar: &self.bbar, c: &self.c, x: &self.x, d_skip: &self.d, dims: self.dims }
        }
    }

    #[test]
    fn geometric_recursion() {
        let abar = [0.5; 3];
        let bbar = [1.0; 3];
        let c = [1.0; 3];
        let x = [1.0, 0.0, 0.0];
        let inp = ScanInputs { abar: &abar, bbar: &bbar, c: &c, x: &x, d_skip: &[0.0], dims: dims(3, 1, 1) };
        assert_eq!(scan_sequential(&inp).unwrap().y, vec![1.0, 0.5, 0.25]);
        assert_eq!(scan_parallel(&inp).unwrap().y, vec![1.0, 0.5, 0.25]);
    }

    #[test]
    fn zero_input_gives_zero_output() {
        let mut case = Case::random(3, 9, 2, 3);
        case.x.iter_mut().for_each(|v| *v = 0.0);
        assert!(scan_sequential(&case.inputs()).unwrap().y.iter().all(|&v| v == 0.0));
        assert!(scan_parallel(&case.inputs()).unwrap().y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn prefix_sum_degenerate_case() {
        let len = 37;
        let ones = vec![1.0; len];
        let inp = ScanInputs { abar: &ones, bbar: &ones, c: &ones, x: &ones, d_skip: &[0.0], dims: dims(len, 1, 1) };
        let y = scan_parallel(&inp).unwrap().y;
        let expect: Vec<f64> = (1..=len).map(|v| v as f64).collect();
        assert_eq!(y, expect);
    }

    #[test]
    fn single_step_matches_recurrence() {
        let case = Case::random(5, 1, 3, 4);
        let seq = scan_sequential(&case.inputs()).unwrap();
        let par = scan_parallel(&case.inputs()).unwrap();
        for i in 0..3 {
            let direct: f64 =
                (0..4).map(|s| case.c[s] * case.bbar[i * 4 + s] * case.x[i]).sum::<f64>() + case.d[i] * case.x[i];
            assert!((seq.y[i] - direct).abs() < 1e-15);
            assert!((par.y[i] - direct).abs() < 1e-15);
        }
    }

    /// y_n = sum_{j <= n} C_n (prod_{i = j+1..n} Abar_i) Bbar_j x_j + D x_n
    fn unrolled(case: &Case) -> Vec<f64> {
        let ScanDims { len, d_inner, d_state } = case.dims;
        let mut y = vec![0.0; len * d_inner];
        for n in 0..len {
            for i in 0..d_inner {
                let mut acc = case.d[i] * case.x[n * d_inner + i];
                for s in 0..d_state {
                    for j in 0..=n {
                        let mut prod = 1.0;
                        for k in j + 1..=n {
                            prod *= case.abar[(k * d_inner + i) * d_state + s];
                        }
                        acc += case.c[n * d_state + s]
                            * prod
                            * case.bbar[(j * d_inner + i) * d_state + s]
                            * case.x[j * d_inner + i];
                    }
                }
                y[n * d_inner + i] = acc;
            }
        }
        y
    }

    #[test]
    fn both_scans_match_unrolled_oracle() {
        let case = Case::random(11, 8, 2, 3);
        let oracle = unrolled(&case);
        for y in [scan_sequential(&case.inputs()).unwrap().y, scan_parallel(&case.inputs()).unwrap().y] {
            let err = y.iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-12, "err {err}");
        }
    }

    #[test]
    fn parallel_matches_sequential_long() {
        let case = Case::random(17, 1024, 2, 4);
        let seq = scan_sequential(&case.inputs()).unwrap();
        let par = scan_parallel(&case.inputs()).unwrap();
        let err = seq.y.iter().zip(&par.y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10, "err {err}");
    }

    #[test]
    fn parallel_result_is_independent_of_thread_count() {
        let case = Case::random(23, 4096, 4, 4);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| scan_parallel(&case.inputs()).unwrap().y)
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn causality() {
        let case = Case::random(29, 32, 2, 3);
        let base = scan_parallel(&case.inputs()).unwrap().y;
        let t = 13;
        let mut pert = Case {
            x: case.x.clone(),
            abar: case.abar.clone(),
            bbar: case.bbar.clone(),
            c: case.c.clone(),
            d: case.d.clone(),
            dims: case.dims,
        };
        pert.x[t * 2] += 0.75;
        let moved = scan_parallel(&pert.inputs()).unwrap().y;
        for n in 0..32 {
            for i in 0..2 {
                let changed = base[n * 2 + i] != moved[n * 2 + i];
                if n < t {
                    assert!(!changed, "output at {n} moved");
                }
            }
        }
        assert_ne!(base[t * 2], moved[t * 2]);
    }

    #[test]
    fn discretize_closed_forms() {
        let d = dims(1, 1, 1);
        let (abar, bbar) = discretize(&[2f64.ln()], &[-1.0], &[1.0], d, Discretization::ZohExact).unwrap();
        assert!((abar[0] - 0.5).abs() < 1e-15);
        assert!((bbar[0] - 0.5).abs() < 1e-15);
        let (_, bbar) = discretize::<f64>(&[0.1], &[-1.0], &[2.0], d, Discretization::Euler).unwrap();
        assert!((bbar[0] - 0.2).abs() < 1e-15);
        assert!(matches!(discretize(&[0.0], &[-1.0], &[1.0], d, Discretization::Euler), Err(Error::Contract(_))));
    }

    #[test]
    fn discretize_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let d = dims(3, 2, 2);
        let delta: Vec<f64> = (0..6).map(|_| rng.random_range(0.05..0.5)).collect();
        let a: Vec<f64> = (0..4).map(|_| -rng.random_range(0.5..2.0)).collect();
        let b: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let wa: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
        let wb: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
        for mode in [Discretization::Euler, Discretization::ZohExact] {
            let f = |delta: &[f64], a: &[f64], b: &[f64]| {
                let (ab, bb) = discretize(delta, a, b, d, mode).unwrap();
                ab.iter().zip(&wa).map(|(x, w)| x * w).sum::<f64>()
                    + bb.iter().zip(&wb).map(|(x, w)| x * w).sum::<f64>()
            };
            let (gd, ga, gb) = discretize_backward(&delta, &a, &b, &wa, &wb, d, mode);
            let eps = 1e-6;
            let fd = |v: &mut Vec<f64>, k: usize, which: u8| {
                let orig = v[k];
                v[k] = orig + eps;
                let plus = match which {
                    0 => f(v, &a, &b),
                    1 => f(&delta, v, &b),
                    _ => f(&delta, &a, v),
                };
                v[k] = orig - eps;
                let minus = match which {
                    0 => f(v, &a, &b),
                    1 => f(&delta, v, &b),
                    _ => f(&delta, &a, v),
                };
                v[k] = orig;
                (plus - minus) / (2.0 * eps)
            };
            for (grad, mut vals, which) in [(gd, delta.clone(), 0u8), (ga, a.clone(), 1), (gb, b.clone(), 2)] {
                for (k, &gk) in grad.iter().enumerate() {
                    let num = fd(&mut vals, k, which);
                    assert!((num - gk).abs() < 1e-7, "{mode:?} operand {which} idx {k}: {num} vs {gk}");
                }
            }
        }
    }

    #[test]
    fn zero_input_selection_gives_ln2_delta() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p = SsmParams::<f64>::init(4, 3, &mut rng);
        p.dt_bias = Tensor::zeros([4]);
        let sel = input_dependent_params(&[0.0; 8], 2, &p).unwrap();
        assert!(sel.delta.iter().all(|&v| (v - 2f64.ln()).abs() < 1e-15));
    }

    #[test]
    fn init_bias_maps_into_delta_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = SsmParams::<f64>::init(64, 16, &mut rng);
        for &b in p.dt_bias.data() {
            let dt = softplus(b);
            assert!((1e-3 - 1e-12..=1e-1 + 1e-12).contains(&dt));
        }
        assert!(p.a().iter().all(|&a| a < 0.0));
        assert!((p.a()[15] + 16.0).abs() < 1e-12);
    }

    #[test]
    fn missing_saved_state_is_a_contract_error() {
        let case = Case::random(37, 4, 1, 2);
        let err = scan_backward(&case.inputs(), &[], &[0.0; 4]).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }
}
