use crate::error::{Error, Result};
use crate::grad::kernels::{self, ConvGeom, DeconvGeom, Padding};
use crate::grad::Tensor;
use crate::real::Real;
use crate::ssm::{self, Discretization, ScanDims, ScanImpl, ScanInputs};

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Elementwise nonlinearities with analytic derivatives.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Unary {
    Silu,
    Sigmoid,
    Softplus,
    /// Saturating: inputs above [`EXP_CLAMP`] are clamped before exponentiation.
    Exp,
    Neg,
}

/// Largest argument passed to `exp`; `e^80` is finite in both precisions.
pub const EXP_CLAMP: f64 = 80.0;

fn sigmoid<T: Real>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

impl Unary {
    fn apply<T: Real>(self, v: T) -> T {
        match self {
            Unary::Silu => v * sigmoid(v),
            Unary::Sigmoid => sigmoid(v),
            Unary::Softplus => ssm::softplus(v),
            Unary::Exp => v.min(T::lit(EXP_CLAMP)).exp(),
            Unary::Neg => -v,
        }
    }

    /// Derivative given input `x` and output `y`.
    fn derivative<T: Real>(self, x: T, y: T) -> T {
        match self {
            Unary::Silu => {
                let s = sigmoid(x);
                s * (T::one() + x * (T::one() - s))
            }
            Unary::Sigmoid => y * (T::one() - y),
            Unary::Softplus => sigmoid(x),
            Unary::Exp => {
                if x > T::lit(EXP_CLAMP) {
                    T::zero()
                } else {
                    y
                }
            }
            Unary::Neg => -T::one(),
        }
    }

    fn name(self) -> &'static str {
        match self {
            Unary::Silu => "silu",
            Unary::Sigmoid => "sigmoid",
            Unary::Softplus => "softplus",
            Unary::Exp => "exp",
            Unary::Neg => "neg",
        }
    }
}

#[derive(Clone, Debug)]
enum Op<T> {
    Leaf,
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    AddRowBias(NodeId, NodeId),
    Scale(NodeId, T),
    Unary(NodeId, Unary),
    Transpose(NodeId),
    ReverseRows(NodeId),
    SliceCols { x: NodeId, start: usize },
    Reshape(NodeId),
    Conv1d { x: NodeId, w: NodeId, b: Option<NodeId>, geom: ConvGeom },
    ConvTranspose1d { x: NodeId, w: NodeId, b: NodeId, geom: DeconvGeom },
    PixelShuffle { x: NodeId, r: usize },
    Sum(NodeId),
    MseLoss { pred: NodeId, target: NodeId },
    SelectiveScan(Box<ScanNode<T>>),
}

#[derive(Clone, Debug)]
struct ScanNode<T> {
    u: NodeId,
    delta: NodeId,
    a: NodeId,
    b: NodeId,
    c: NodeId,
    d_skip: NodeId,
    dims: ScanDims,
    mode: Discretization,
    /// latent states from the forward pass
    h: Vec<T>,
}

#[derive(Clone, Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Operands of [`Graph::selective_scan`].
#[derive(Clone, Copy, Debug)]
pub struct ScanArgs {
    /// `[len, d_inner]`
    pub u: NodeId,
    /// `[len, d_inner]`, strictly positive
    pub delta: NodeId,
    /// `[d_inner, d_state]`
    pub a: NodeId,
    /// `[len, d_state]`
    pub b: NodeId,
    /// `[len, d_state]`
    pub c: NodeId,
    /// `[d_inner]`
    pub d_skip: NodeId,
    pub mode: Discretization,
    pub imp: ScanImpl,
}

/// Dynamic computation graph. Every op evaluates eagerly and appends a node,
/// so the node list is already in topological order; [`Graph::backward`]
/// replays it in reverse.
///
/// One graph belongs to one forward/backward pass and is not shared across threads.
#[derive(Clone, Debug, Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

/// Gradients indexed by node.
#[derive(Clone, Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, id: NodeId) -> Option<&Tensor<T>> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, id: NodeId) -> Option<Tensor<T>> {
        self.grads.get_mut(id.0).and_then(Option::take)
    }
}

fn dim_err<T>(msg: String) -> Result<T> {
    Err(Error::Dimension(msg))
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    /// Leaf whose gradient is tracked.
    pub fn param(&mut self, value: Tensor<T>) -> NodeId {
        self.leaf(value, true)
    }

    /// Leaf treated as a constant.
    pub fn constant(&mut self, value: Tensor<T>) -> NodeId {
        self.leaf(value, false)
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> NodeId {
        self.nodes.push(Node { value, op: Op::Leaf, requires_grad });
        NodeId(self.nodes.len() - 1)
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[NodeId], name: &'static str) -> Result<NodeId> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: name });
        }
        let requires_grad = inputs.iter().any(|i| self.nodes[i.0].requires_grad);
        self.nodes.push(Node { value, op, requires_grad });
        Ok(NodeId(self.nodes.len() - 1))
    }

    fn dims2(&self, id: NodeId) -> Result<(usize, usize)> {
        self.value(id).dims2()
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (m, k) = self.dims2(a)?;
        let (k2, n) = self.dims2(b)?;
        if k != k2 {
            return dim_err(format!("matmul inner dimensions {k} vs {k2}"));
        }
        let out = kernels::matmul(self.value(a).data(), self.value(b).data(), m, k, n);
        self.push(Tensor::new([m, n], out)?, Op::MatMul(a, b), &[a, b], "matmul")
    }

    fn same_shape(&self, a: NodeId, b: NodeId, what: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return dim_err(format!("{what}: shapes {:?} and {:?}", self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    fn zip_with(&self, a: NodeId, b: NodeId, f: impl Fn(T, T) -> T) -> Tensor<T> {
        let (va, vb) = (self.value(a), self.value(b));
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(va.shape().to_vec(), data).expect("shape preserved")
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(a, b, "add")?;
        let v = self.zip_with(a, b, |x, y| x + y);
        self.push(v, Op::Add(a, b), &[a, b], "add")
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(a, b, "sub")?;
        let v = self.zip_with(a, b, |x, y| x - y);
        self.push(v, Op::Sub(a, b), &[a, b], "sub")
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(a, b, "mul")?;
        let v = self.zip_with(a, b, |x, y| x * y);
        self.push(v, Op::Mul(a, b), &[a, b], "mul")
    }

    /// `[rows, cols] + [cols]`, bias broadcast over rows.
    pub fn add_row_bias(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId> {
        let (_, cols) = self.dims2(x)?;
        if self.value(bias).numel() != cols {
            return dim_err(format!("row bias of {} for {cols} columns", self.value(bias).numel()));
        }
        let b = self.value(bias).data().to_vec();
        let mut v = self.value(x).clone();
        for row in v.data_mut().chunks_mut(cols) {
            for (o, &bv) in row.iter_mut().zip(&b) {
                *o = *o + bv;
            }
        }
        self.push(v, Op::AddRowBias(x, bias), &[x, bias], "add_row_bias")
    }

    pub fn scale(&mut self, x: NodeId, k: T) -> Result<NodeId> {
        let mut v = self.value(x).clone();
        v.data_mut().iter_mut().for_each(|e| *e = *e * k);
        self.push(v, Op::Scale(x, k), &[x], "scale")
    }

    pub fn unary(&mut self, x: NodeId, f: Unary) -> Result<NodeId> {
        let mut v = self.value(x).clone();
        v.data_mut().iter_mut().for_each(|e| *e = f.apply(*e));
        self.push(v, Op::Unary(x, f), &[x], f.name())
    }

    pub fn silu(&mut self, x: NodeId) -> Result<NodeId> {
        self.unary(x, Unary::Silu)
    }

    pub fn transpose(&mut self, x: NodeId) -> Result<NodeId> {
        let (r, c) = self.dims2(x)?;
        let v = kernels::transpose(self.value(x).data(), r, c);
        self.push(Tensor::new([c, r], v)?, Op::Transpose(x), &[x], "transpose")
    }

    /// Reverses the order of rows (the time axis of a `[len, channels]` tensor).
    pub fn reverse_rows(&mut self, x: NodeId) -> Result<NodeId> {
        let (r, c) = self.dims2(x)?;
        let v = reverse_rows(self.value(x).data(), c);
        self.push(Tensor::new([r, c], v)?, Op::ReverseRows(x), &[x], "reverse_rows")
    }

    /// Columns `[start, end)` of a 2-D tensor.
    pub fn slice_cols(&mut self, x: NodeId, start: usize, end: usize) -> Result<NodeId> {
        let (r, c) = self.dims2(x)?;
        if start >= end || end > c {
            return dim_err(format!("column slice {start}..{end} of {c}"));
        }
        let src = self.value(x).data();
        let v = src.chunks(c).flat_map(|row| row[start..end].iter().copied()).collect();
        self.push(Tensor::new([r, end - start], v)?, Op::SliceCols { x, start }, &[x], "slice_cols")
    }

    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId> {
        let v = self.value(x).clone().reshape(shape.to_vec())?;
        self.push(v, Op::Reshape(x), &[x], "reshape")
    }

    /// Grouped 1-D cross-correlation of `x: [c_in, len]` with `w: [c_out, c_in / groups, k]`.
    pub fn conv1d(
        &mut self,
        x: NodeId,
        w: NodeId,
        b: Option<NodeId>,
        padding: Padding,
        groups: usize,
    ) -> Result<NodeId> {
        let (c_in, len) = self.dims2(x)?;
        let (c_out, cin_g, k) = match self.shape(w) {
            &[a, b, c] => (a, b, c),
            s => return dim_err(format!("conv weight must be 3-D, got {s:?}")),
        };
        if groups == 0 || c_in % groups != 0 || c_out % groups != 0 || cin_g * groups != c_in {
            return dim_err(format!("conv groups {groups} incompatible with {c_in} -> {c_out} channels"));
        }
        if padding == Padding::Same && k % 2 == 0 {
            return dim_err(format!("`same` padding needs an odd kernel, got {k}"));
        }
        if padding == Padding::Valid && k > len {
            return dim_err(format!("kernel {k} longer than signal {len} in `valid` mode"));
        }
        if let Some(b) = b {
            if self.value(b).numel() != c_out {
                return dim_err(format!("conv bias has {} entries for {c_out} outputs", self.value(b).numel()));
            }
        }
        let geom = ConvGeom { c_in, c_out, len, k, groups, padding };
        let out = kernels::conv1d(self.value(x).data(), self.value(w).data(), b.map(|b| self.value(b).data()), &geom);
        let inputs: Vec<NodeId> = [Some(x), Some(w), b].into_iter().flatten().collect();
        self.push(Tensor::new([c_out, geom.out_len()], out)?, Op::Conv1d { x, w, b, geom }, &inputs, "conv1d")
    }

    /// Transposed convolution of `x: [c_in, len]` with `w: [c_in, c_out, k]`,
    /// producing exactly `len * stride` samples starting at offset `crop` of the full output.
    pub fn conv_transpose1d(&mut self, x: NodeId, w: NodeId, b: NodeId, stride: usize, crop: usize) -> Result<NodeId> {
        let (c_in, len) = self.dims2(x)?;
        let (wc, c_out, k) = match self.shape(w) {
            &[a, b, c] => (a, b, c),
            s => return dim_err(format!("deconv weight must be 3-D, got {s:?}")),
        };
        if wc != c_in || stride == 0 || self.value(b).numel() != c_out {
            return dim_err(format!("deconv weight {:?} for input {c_in} channels", self.shape(w)));
        }
        if (len - 1) * stride + k < crop + len * stride {
            return dim_err(format!("deconv crop {crop} exceeds full output length"));
        }
        let geom = DeconvGeom { c_in, c_out, len, k, stride, crop };
        let out = kernels::conv_transpose1d(self.value(x).data(), self.value(w).data(), self.value(b).data(), &geom);
        self.push(
            Tensor::new([c_out, geom.out_len()], out)?,
            Op::ConvTranspose1d { x, w, b, geom },
            &[x, w, b],
            "conv_transpose1d",
        )
    }

    /// `[r * c, len] -> [c, r * len]`.
    pub fn pixel_shuffle_1d(&mut self, x: NodeId, r: usize) -> Result<NodeId> {
        let (ch, len) = self.dims2(x)?;
        if r == 0 || ch % r != 0 {
            return dim_err(format!("pixel shuffle: {ch} channels not divisible by {r}"));
        }
        let out = kernels::pixel_shuffle_1d(self.value(x).data(), ch / r, len, r);
        self.push(Tensor::new([ch / r, len * r], out)?, Op::PixelShuffle { x, r }, &[x], "pixel_shuffle_1d")
    }

    pub fn sum(&mut self, x: NodeId) -> Result<NodeId> {
        let s = self.value(x).sum();
        self.push(Tensor::scalar(s), Op::Sum(x), &[x], "sum")
    }

    /// Mean squared difference, a scalar.
    pub fn mse_loss(&mut self, pred: NodeId, target: NodeId) -> Result<NodeId> {
        self.same_shape(pred, target, "mse_loss")?;
        let (p, t) = (self.value(pred), self.value(target));
        let n = T::lit(p.numel() as f64);
        let s: T = p.data().iter().zip(t.data()).map(|(&a, &b)| (a - b) * (a - b)).sum();
        self.push(Tensor::scalar(s / n), Op::MseLoss { pred, target }, &[pred, target], "mse_loss")
    }

    /// Discretize `(delta, A, B)` and run the selective scan over `u`. The
    /// backward pass uses the reverse-time adjoint and only keeps the latent states.
    pub fn selective_scan(&mut self, args: ScanArgs) -> Result<NodeId> {
        let (len, d_inner) = self.dims2(args.u)?;
        let (ai, d_state) = self.dims2(args.a)?;
        let ok = self.shape(args.delta) == [len, d_inner]
            && ai == d_inner
            && self.shape(args.b) == [len, d_state]
            && self.shape(args.c) == [len, d_state]
            && self.value(args.d_skip).numel() == d_inner;
        if !ok {
            return dim_err("selective_scan operand shapes are inconsistent".into());
        }
        let dims = ScanDims { len, d_inner, d_state };
        let (abar, bbar) = ssm::discretize(
            self.value(args.delta).data(),
            self.value(args.a).data(),
            self.value(args.b).data(),
            dims,
            args.mode,
        )?;
        let inputs = ScanInputs {
            abar: &abar,
            bbar: &bbar,
            c: self.value(args.c).data(),
            x: self.value(args.u).data(),
            d_skip: self.value(args.d_skip).data(),
            dims,
        };
        let out = ssm::scan(&inputs, args.imp)?;
        let node = ScanNode {
            u: args.u,
            delta: args.delta,
            a: args.a,
            b: args.b,
            c: args.c,
            d_skip: args.d_skip,
            dims,
            mode: args.mode,
            h: out.h,
        };
        let ins = [args.u, args.delta, args.a, args.b, args.c, args.d_skip];
        self.push(Tensor::new([len, d_inner], out.y)?, Op::SelectiveScan(Box::new(node)), &ins, "selective_scan")
    }

    /// Reverse-mode sweep from a scalar `loss`. Every leaf created with
    /// `requires_grad` receives a gradient (zeros when it does not reach `loss`).
    pub fn backward(&self, loss: NodeId) -> Result<Gradients<T>> {
        if self.value(loss).numel() != 1 {
            return Err(Error::Contract(format!("backward needs a scalar loss, got shape {:?}", self.shape(loss))));
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::full(self.shape(loss).to_vec(), T::one()));
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            if let Op::Leaf = node.op {
                grads[idx] = Some(g);
                continue;
            }
            for (id, contrib) in self.input_grads(node, &g)? {
                if !self.nodes[id.0].requires_grad {
                    continue;
                }
                match &mut grads[id.0] {
                    Some(acc) => acc.add_assign(&contrib),
                    slot @ None => *slot = Some(contrib),
                }
            }
        }
        for (idx, node) in self.nodes.iter().enumerate() {
            if matches!(node.op, Op::Leaf) && node.requires_grad && grads[idx].is_none() {
                grads[idx] = Some(Tensor::zeros(node.value.shape().to_vec()));
            }
        }
        Ok(Gradients { grads })
    }

    fn input_grads(&self, node: &Node<T>, g: &Tensor<T>) -> Result<Vec<(NodeId, Tensor<T>)>> {
        let like = |id: NodeId, data: Vec<T>| Tensor::new(self.shape(id).to_vec(), data);
        let gd = g.data();
        Ok(match &node.op {
            Op::Leaf => Vec::new(),
            Op::MatMul(a, b) => {
                let (m, k) = self.dims2(*a)?;
                let (_, n) = self.dims2(*b)?;
                let bt = kernels::transpose(self.value(*b).data(), k, n);
                let at = kernels::transpose(self.value(*a).data(), m, k);
                vec![
                    (*a, like(*a, kernels::matmul(gd, &bt, m, n, k))?),
                    (*b, like(*b, kernels::matmul(&at, gd, k, m, n))?),
                ]
            }
            Op::Add(a, b) => vec![(*a, g.clone()), (*b, g.clone())],
            Op::Sub(a, b) => vec![(*a, g.clone()), (*b, like(*b, gd.iter().map(|v| -*v).collect())?)],
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                vec![
                    (*a, like(*a, gd.iter().zip(vb).map(|(&g, &y)| g * y).collect())?),
                    (*b, like(*b, gd.iter().zip(va).map(|(&g, &x)| g * x).collect())?),
                ]
            }
            Op::AddRowBias(x, bias) => {
                let cols = self.value(*bias).numel();
                let mut db = vec![T::zero(); cols];
                for row in gd.chunks(cols) {
                    for (d, &v) in db.iter_mut().zip(row) {
                        *d = *d + v;
                    }
                }
                vec![(*x, g.clone()), (*bias, like(*bias, db)?)]
            }
            Op::Scale(x, k) => vec![(*x, like(*x, gd.iter().map(|&v| v * *k).collect())?)],
            Op::Unary(x, f) => {
                let xs = self.value(*x).data();
                let ys = node.value.data();
                let d = gd.iter().zip(xs.iter().zip(ys)).map(|(&g, (&x, &y))| g * f.derivative(x, y)).collect();
                vec![(*x, like(*x, d)?)]
            }
            Op::Transpose(x) => {
                let (r, c) = self.dims2(*x)?;
                vec![(*x, like(*x, kernels::transpose(gd, c, r))?)]
            }
            Op::ReverseRows(x) => {
                let (_, c) = self.dims2(*x)?;
                vec![(*x, like(*x, reverse_rows(gd, c))?)]
            }
            Op::SliceCols { x, start } => {
                let (r, c) = self.dims2(*x)?;
                let w = gd.len() / r;
                let mut d = vec![T::zero(); r * c];
                for (row, src) in d.chunks_mut(c).zip(gd.chunks(w)) {
                    row[*start..*start + w].copy_from_slice(src);
                }
                vec![(*x, like(*x, d)?)]
            }
            Op::Reshape(x) => vec![(*x, like(*x, gd.to_vec())?)],
            Op::Conv1d { x, w, b, geom } => {
                let (dx, dw, db) = kernels::conv1d_backward(self.value(*x).data(), self.value(*w).data(), gd, geom);
                let mut out = vec![(*x, like(*x, dx)?), (*w, like(*w, dw)?)];
                if let Some(b) = b {
                    out.push((*b, like(*b, db)?));
                }
                out
            }
            Op::ConvTranspose1d { x, w, b, geom } => {
                let (dx, dw, db) =
                    kernels::conv_transpose1d_backward(self.value(*x).data(), self.value(*w).data(), gd, geom);
                vec![(*x, like(*x, dx)?), (*w, like(*w, dw)?), (*b, like(*b, db)?)]
            }
            Op::PixelShuffle { x, r } => {
                let (ch, len) = self.dims2(*x)?;
                vec![(*x, like(*x, kernels::pixel_unshuffle_1d(gd, ch / r, len, *r))?)]
            }
            Op::Sum(x) => vec![(*x, Tensor::full(self.shape(*x).to_vec(), gd[0]))],
            Op::MseLoss { pred, target } => {
                let (p, t) = (self.value(*pred).data(), self.value(*target).data());
                let k = gd[0] * T::lit(2.0 / p.len() as f64);
                let d: Vec<T> = p.iter().zip(t).map(|(&a, &b)| k * (a - b)).collect();
                let neg = d.iter().map(|v| -*v).collect();
                vec![(*pred, like(*pred, d)?), (*target, like(*target, neg)?)]
            }
            Op::SelectiveScan(s) => self.scan_grads(s, gd)?,
        })
    }

    fn scan_grads(&self, s: &ScanNode<T>, dy: &[T]) -> Result<Vec<(NodeId, Tensor<T>)>> {
        let (delta, a, b) = (self.value(s.delta).data(), self.value(s.a).data(), self.value(s.b).data());
        let (abar, bbar) = ssm::discretize(delta, a, b, s.dims, s.mode)?;
        let inputs = ScanInputs {
            abar: &abar,
            bbar: &bbar,
            c: self.value(s.c).data(),
            x: self.value(s.u).data(),
            d_skip: self.value(s.d_skip).data(),
            dims: s.dims,
        };
        let sg = ssm::scan_backward(&inputs, &s.h, dy)?;
        let (dd, da, db) = ssm::discretize_backward(delta, a, b, &sg.d_abar, &sg.d_bbar, s.dims, s.mode);
        let like = |id: NodeId, data: Vec<T>| Tensor::new(self.shape(id).to_vec(), data);
        Ok(vec![
            (s.u, like(s.u, sg.d_x)?),
            (s.delta, like(s.delta, dd)?),
            (s.a, like(s.a, da)?),
            (s.b, like(s.b, db)?),
            (s.c, like(s.c, sg.d_c)?),
            (s.d_skip, like(s.d_skip, sg.d_skip)?),
        ])
    }
}

fn reverse_rows<T: Real>(data: &[T], cols: usize) -> Vec<T> {
    data.chunks(cols).rev().flatten().copied().collect()
}
