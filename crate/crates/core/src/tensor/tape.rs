//! Reverse-mode differentiation tape.
//!
//! Values live inside the tape; a [`Var`] is a cheap handle (tape reference
//! plus node index). Records are appended in evaluation order, so the node
//! vector is already topologically sorted and `backward` is a single reverse
//! sweep.

use std::cell::{Ref, RefCell};
use std::collections::HashMap;
use std::rc::Rc;

use super::array::Tensor;
use super::kernels;
use super::spectral::SpectralGrid;
use crate::error::{shape_err, Error, Result};

pub type NodeId = usize;

#[derive(Debug)]
enum Op {
    Leaf,
    Constant,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    Square(NodeId),
    Gelu(NodeId),
    SumAll(NodeId),
    Affine { x: NodeId, w: NodeId, b: Option<NodeId>, din: usize, dout: usize },
    SliceChannels { x: NodeId, start: usize, len: usize, total: usize },
    ConcatChannels { a: NodeId, b: NodeId, ca: usize, cb: usize },
    Stack { inputs: Vec<NodeId> },
    FftForward { x: NodeId, grid: Rc<SpectralGrid>, channels: usize },
    FftInverse { s: NodeId, grid: Rc<SpectralGrid>, channels: usize },
    SpectralMix { s: NodeId, w: NodeId, modes: usize, cin: usize, cout: usize },
    CMatMul { a: NodeId, b: NodeId, modes: usize, rows: usize, inner: usize, cols: usize },
    ModeScaledWeights { r: NodeId, p: NodeId, ratios: Vec<f64> },
    RelL2 { pred: NodeId, target: Rc<Tensor> },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Single-owner record of one forward evaluation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a tensor registered on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: NodeId,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var(#{} {:?})", self.id, self.shape())
    }
}

/// Leaf gradients produced by [`Tape::backward`].
#[derive(Debug, Default)]
pub struct Gradients {
    map: HashMap<NodeId, Tensor>,
}

impl Gradients {
    pub fn get(&self, var: &Var<'_>) -> Option<&Tensor> {
        self.map.get(&var.id)
    }

    pub fn take(&mut self, var: &Var<'_>) -> Option<Tensor> {
        self.map.remove(&var.id)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.borrow().is_empty()
    }

    fn push(&self, value: Tensor, op: Op, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, op, requires_grad });
        Var { tape: self, id: nodes.len() - 1 }
    }

    /// Registers a differentiable leaf (a parameter or an input under test).
    pub fn leaf(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, true)
    }

    /// Registers a constant; no gradient is propagated into it.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Constant, false)
    }

    fn requires(&self, ids: &[NodeId]) -> bool {
        let nodes = self.nodes.borrow();
        ids.iter().any(|&i| nodes[i].requires_grad)
    }

    /// Gradients of the scalar `loss` with respect to every leaf it depends on.
    pub fn backward(&self, loss: &Var<'_>) -> Result<Gradients> {
        if !std::ptr::eq(loss.tape, self) {
            return Err(Error::MissingNode);
        }
        let nodes = self.nodes.borrow();
        if nodes[loss.id].value.len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                nodes[loss.id].value.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.id + 1];
        grads[loss.id] = Some(vec![1.0]);
        let mut out = Gradients::default();

        for id in (0..=loss.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            let val = |i: NodeId| nodes[i].value.data();
            let needs = |i: NodeId| nodes[i].requires_grad;
            let mut acc = |i: NodeId, contribution: Vec<f64>| {
                if !nodes[i].requires_grad {
                    return;
                }
                match &mut grads[i] {
                    Some(existing) => existing.iter_mut().zip(&contribution).for_each(|(e, c)| *e += c),
                    slot @ None => *slot = Some(contribution),
                }
            };
            match &node.op {
                Op::Leaf => {
                    out.map.insert(id, Tensor::new(node.value.shape().to_vec(), g)?);
                }
                Op::Constant => {}
                Op::Add(a, b) => {
                    if needs(*b) {
                        acc(*b, g.clone());
                    }
                    acc(*a, g);
                }
                Op::Sub(a, b) => {
                    if needs(*b) {
                        acc(*b, g.iter().map(|v| -v).collect());
                    }
                    acc(*a, g);
                }
                Op::Mul(a, b) => {
                    if needs(*a) {
                        acc(*a, g.iter().zip(val(*b)).map(|(g, y)| g * y).collect());
                    }
                    if needs(*b) {
                        acc(*b, g.iter().zip(val(*a)).map(|(g, x)| g * x).collect());
                    }
                }
                Op::Scale(a, s) => acc(*a, g.iter().map(|v| v * s).collect()),
                Op::Square(a) => acc(*a, g.iter().zip(val(*a)).map(|(g, x)| 2.0 * g * x).collect()),
                Op::Gelu(a) => {
                    let y = node.value.data();
                    acc(
                        *a,
                        g.iter().zip(val(*a)).zip(y).map(|((g, &x), &y)| g * kernels::gelu_grad_from(x, y)).collect(),
                    )
                }
                Op::SumAll(a) => acc(*a, vec![g[0]; nodes[*a].value.len()]),
                Op::Affine { x, w, b, din, dout } => {
                    let rows = nodes[*x].value.len() / din;
                    if needs(*x) {
                        acc(*x, kernels::affine_grad_input(&g, val(*w), rows, *din, *dout));
                    }
                    if needs(*w) {
                        acc(*w, kernels::affine_grad_weight(val(*x), &g, rows, *din, *dout));
                    }
                    if let Some(b) = b {
                        if needs(*b) {
                            acc(*b, kernels::column_sums(&g, rows, *dout));
                        }
                    }
                }
                Op::SliceChannels { x, start, len, total } => {
                    let rows = g.len() / len;
                    let mut gx = vec![0.0; rows * total];
                    for r in 0..rows {
                        gx[r * total + start..r * total + start + len].copy_from_slice(&g[r * len..(r + 1) * len]);
                    }
                    acc(*x, gx);
                }
                Op::ConcatChannels { a, b, ca, cb } => {
                    let c = ca + cb;
                    let rows = g.len() / c;
                    if needs(*a) {
                        let mut ga = Vec::with_capacity(rows * ca);
                        for r in 0..rows {
                            ga.extend_from_slice(&g[r * c..r * c + ca]);
                        }
                        acc(*a, ga);
                    }
                    if needs(*b) {
                        let mut gb = Vec::with_capacity(rows * cb);
                        for r in 0..rows {
                            gb.extend_from_slice(&g[r * c + ca..(r + 1) * c]);
                        }
                        acc(*b, gb);
                    }
                }
                Op::Stack { inputs } => {
                    let n = inputs.len();
                    let batch = node.value.shape()[0];
                    let inner = node.value.len() / (batch * n);
                    for (k, &inp) in inputs.iter().enumerate() {
                        if !needs(inp) {
                            continue;
                        }
                        let mut gi = Vec::with_capacity(batch * inner);
                        for bi in 0..batch {
                            let o = (bi * n + k) * inner;
                            gi.extend_from_slice(&g[o..o + inner]);
                        }
                        acc(inp, gi);
                    }
                }
                Op::FftForward { x, grid, channels } => {
                    let batch = nodes[*x].value.shape()[0];
                    let ones = vec![1.0; grid.n_modes()];
                    acc(*x, grid.synthesis(&g, batch, *channels, &ones));
                }
                Op::FftInverse { s, grid, channels } => {
                    let batch = node.value.shape()[0];
                    let scale = grid.inverse_scale();
                    acc(*s, grid.analysis(&g, batch, *channels, Some(&scale)));
                }
                Op::SpectralMix { s, w, modes, cin, cout } => {
                    let batch = nodes[*s].value.shape()[0];
                    if needs(*s) {
                        acc(*s, kernels::mix_grad_input(&g, val(*w), batch, *modes, *cin, *cout));
                    }
                    if needs(*w) {
                        acc(*w, kernels::mix_grad_weight(&g, val(*s), batch, *modes, *cin, *cout));
                    }
                }
                Op::CMatMul { a, b, modes, rows, inner, cols } => {
                    if needs(*a) {
                        acc(*a, kernels::cmatmul_grad_lhs(&g, val(*b), *modes, *rows, *inner, *cols));
                    }
                    if needs(*b) {
                        acc(*b, kernels::cmatmul_grad_rhs(&g, val(*a), *modes, *rows, *inner, *cols));
                    }
                }
                Op::ModeScaledWeights { r, p, ratios } => {
                    let block = nodes[*r].value.len();
                    let power = val(*p)[0];
                    if needs(*r) {
                        let mut gr = vec![0.0; block];
                        for (m, &rho) in ratios.iter().enumerate() {
                            let f = kernels::mode_factor(rho, power);
                            if f != 0.0 {
                                for (o, gi) in gr.iter_mut().zip(&g[m * block..(m + 1) * block]) {
                                    *o += f * gi;
                                }
                            }
                        }
                        acc(*r, gr);
                    }
                    if needs(*p) {
                        let rv = val(*r);
                        let mut gp = 0.0;
                        for (m, &rho) in ratios.iter().enumerate() {
                            if rho > 0.0 {
                                let f = kernels::mode_factor(rho, power) * rho.ln();
                                let dot: f64 = g[m * block..(m + 1) * block].iter().zip(rv).map(|(a, b)| a * b).sum();
                                gp += f * dot;
                            }
                        }
                        acc(*p, vec![gp]);
                    }
                }
                Op::RelL2 { pred, target } => {
                    acc(*pred, kernels::rel_l2_grad(val(*pred), target.data(), target.shape()[0], g[0]));
                }
            }
        }
        Ok(out)
    }
}

impl<'t> Var<'t> {
    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    /// Borrow of the forward value.
    pub fn value(&self) -> Ref<'t, Tensor> {
        Ref::map(self.tape.nodes.borrow(), |n| &n[self.id].value)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    pub fn to_tensor(&self) -> Tensor {
        self.value().clone()
    }

    fn same_tape(&self, other: &Var<'_>) -> Result<()> {
        if std::ptr::eq(self.tape, other.tape) {
            Ok(())
        } else {
            Err(Error::MissingNode)
        }
    }

    fn binary(&self, other: &Var<'t>, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var<'t>> {
        self.same_tape(other)?;
        let value = {
            let a = self.value();
            let b = other.value();
            if a.shape() != b.shape() {
                return shape_err(format!("elementwise op on {:?} and {:?}", a.shape(), b.shape()));
            }
            a.zip_map(&b, f)
        };
        let rq = self.tape.requires(&[self.id, other.id]);
        Ok(self.tape.push(value, op, rq))
    }

    fn unary(&self, value: Tensor, op: Op) -> Var<'t> {
        let rq = self.tape.requires(&[self.id]);
        self.tape.push(value, op, rq)
    }

    pub fn add(&self, other: &Var<'t>) -> Result<Var<'t>> {
        self.binary(other, |a, b| a + b, Op::Add(self.id, other.id))
    }

    pub fn sub(&self, other: &Var<'t>) -> Result<Var<'t>> {
        self.binary(other, |a, b| a - b, Op::Sub(self.id, other.id))
    }

    pub fn mul(&self, other: &Var<'t>) -> Result<Var<'t>> {
        self.binary(other, |a, b| a * b, Op::Mul(self.id, other.id))
    }

    pub fn scale(&self, s: f64) -> Var<'t> {
        let v = self.value().map(|x| x * s);
        self.unary(v, Op::Scale(self.id, s))
    }

    pub fn square(&self) -> Var<'t> {
        let v = self.value().map(|x| x * x);
        self.unary(v, Op::Square(self.id))
    }

    pub fn gelu(&self) -> Var<'t> {
        let v = self.value().map(kernels::gelu);
        self.unary(v, Op::Gelu(self.id))
    }

    pub fn sum(&self) -> Var<'t> {
        let v = Tensor::scalar(self.value().data().iter().sum());
        self.unary(v, Op::SumAll(self.id))
    }

    /// Channel-affine map `y = x W + b` contracting the trailing axis;
    /// `w` is `[d_in, d_out]`, `b` is `[d_out]`.
    pub fn affine(&self, w: &Var<'t>, b: Option<&Var<'t>>) -> Result<Var<'t>> {
        self.same_tape(w)?;
        let wshape = w.shape();
        let xshape = self.shape();
        if wshape.len() != 2 || xshape.last() != Some(&wshape[0]) {
            return shape_err(format!("affine: input {:?} vs weight {:?}", xshape, wshape));
        }
        let (din, dout) = (wshape[0], wshape[1]);
        if let Some(b) = b {
            self.same_tape(b)?;
            if b.shape() != [dout] {
                return shape_err(format!("affine: bias {:?} vs d_out {}", b.shape(), dout));
            }
        }
        let rows = self.value().len() / din;
        let data = {
            let x = self.value();
            let wv = w.value();
            let bv = b.map(|b| b.value());
            kernels::affine(x.data(), wv.data(), bv.as_ref().map(|b| b.data()), rows, din, dout)
        };
        let mut shape = xshape;
        *shape.last_mut().unwrap() = dout;
        let mut ids = vec![self.id, w.id];
        if let Some(b) = b {
            ids.push(b.id);
        }
        let rq = self.tape.requires(&ids);
        Ok(self.tape.push(
            Tensor::new(shape, data)?,
            Op::Affine { x: self.id, w: w.id, b: b.map(|b| b.id), din, dout },
            rq,
        ))
    }

    pub fn slice_channels(&self, start: usize, len: usize) -> Result<Var<'t>> {
        let total = self.value().channels();
        if start + len > total || len == 0 {
            return shape_err(format!("channel slice {}..{} of {}", start, start + len, total));
        }
        let v = self.value().slice_channels(start, len);
        Ok(self.unary(v, Op::SliceChannels { x: self.id, start, len, total }))
    }

    pub fn concat_channels(&self, other: &Var<'t>) -> Result<Var<'t>> {
        self.same_tape(other)?;
        let (sa, sb) = (self.shape(), other.shape());
        if sa.len() != sb.len() || sa[..sa.len() - 1] != sb[..sb.len() - 1] {
            return shape_err(format!("concat_channels {:?} with {:?}", sa, sb));
        }
        let (ca, cb) = (sa[sa.len() - 1], sb[sb.len() - 1]);
        let rows = self.value().len() / ca;
        let mut data = Vec::with_capacity(rows * (ca + cb));
        {
            let a = self.value();
            let b = other.value();
            for r in 0..rows {
                data.extend_from_slice(&a.data()[r * ca..(r + 1) * ca]);
                data.extend_from_slice(&b.data()[r * cb..(r + 1) * cb]);
            }
        }
        let mut shape = sa;
        *shape.last_mut().unwrap() = ca + cb;
        let rq = self.tape.requires(&[self.id, other.id]);
        Ok(self.tape.push(Tensor::new(shape, data)?, Op::ConcatChannels { a: self.id, b: other.id, ca, cb }, rq))
    }

    /// Stack `[batch, rest..]` tensors into `[batch, n, rest..]`.
    pub fn stack(items: &[Var<'t>]) -> Result<Var<'t>> {
        let Some(first) = items.first() else {
            return shape_err("stack of zero tensors");
        };
        let shape = first.shape();
        for it in items {
            first.same_tape(it)?;
            if it.shape() != shape {
                return shape_err(format!("stack mismatch {:?} vs {:?}", it.shape(), shape));
            }
        }
        let batch = shape[0];
        let inner: usize = shape[1..].iter().product();
        let n = items.len();
        let mut data = vec![0.0; batch * n * inner];
        for (k, it) in items.iter().enumerate() {
            let v = it.value();
            for b in 0..batch {
                let o = (b * n + k) * inner;
                data[o..o + inner].copy_from_slice(&v.data()[b * inner..(b + 1) * inner]);
            }
        }
        let mut out_shape = vec![batch, n];
        out_shape.extend_from_slice(&shape[1..]);
        let ids: Vec<NodeId> = items.iter().map(|v| v.id).collect();
        let rq = first.tape.requires(&ids);
        Ok(first.tape.push(Tensor::new(out_shape, data)?, Op::Stack { inputs: ids }, rq))
    }

    /// Truncated half-space spectrum of a real `[batch, x.., channel]` field.
    pub fn fft_forward(&self, cutoffs: &[usize]) -> Result<Var<'t>> {
        let shape = self.shape();
        if shape.len() != cutoffs.len() + 2 {
            return shape_err(format!("fft_forward: field {:?} vs cutoffs {:?}", shape, cutoffs));
        }
        let grid = Rc::new(SpectralGrid::new(&shape[1..shape.len() - 1], cutoffs)?);
        self.fft_forward_on(grid)
    }

    pub fn fft_forward_on(&self, grid: Rc<SpectralGrid>) -> Result<Var<'t>> {
        let shape = self.shape();
        if shape.len() != grid.ndim() + 2 || shape[1..shape.len() - 1] != *grid.extents() {
            return shape_err(format!("fft_forward: field {:?} vs grid {:?}", shape, grid.extents()));
        }
        let (batch, channels) = (shape[0], shape[shape.len() - 1]);
        let data = grid.analysis(self.value().data(), batch, channels, None);
        let mut out_shape = vec![batch];
        out_shape.extend(grid.mode_extents());
        out_shape.extend([channels, 2]);
        let v = Tensor::new(out_shape, data)?;
        Ok(self.unary(v, Op::FftForward { x: self.id, grid, channels }))
    }

    /// Real field on `extents` from a `[batch, modes.., channel, 2]` spectrum.
    pub fn fft_inverse(&self, extents: &[usize]) -> Result<Var<'t>> {
        let shape = self.shape();
        if shape.len() != extents.len() + 3 || shape[shape.len() - 1] != 2 {
            return shape_err(format!("fft_inverse: spectrum {:?} vs grid {:?}", shape, extents));
        }
        let me = &shape[1..shape.len() - 2];
        let cutoffs: Vec<usize> = match me {
            [k] => vec![*k],
            [r, k2] if r % 2 == 1 => vec![r.div_ceil(2), *k2],
            _ => return shape_err(format!("fft_inverse: invalid mode extents {:?}", me)),
        };
        let grid = Rc::new(SpectralGrid::new(extents, &cutoffs)?);
        self.fft_inverse_on(grid)
    }

    pub fn fft_inverse_on(&self, grid: Rc<SpectralGrid>) -> Result<Var<'t>> {
        let shape = self.shape();
        let me = grid.mode_extents();
        if shape.len() != me.len() + 3 || shape[1..shape.len() - 2] != *me {
            return shape_err(format!("fft_inverse: spectrum {:?} vs modes {:?}", shape, me));
        }
        let (batch, channels) = (shape[0], shape[shape.len() - 2]);
        let data = grid.synthesis(self.value().data(), batch, channels, &grid.inverse_scale());
        let mut out_shape = vec![batch];
        out_shape.extend_from_slice(grid.extents());
        out_shape.push(channels);
        let v = Tensor::new(out_shape, data)?;
        Ok(self.unary(v, Op::FftInverse { s: self.id, grid, channels }))
    }

    /// Per-mode complex matrix-vector product over channels; `w` is
    /// `[modes.., d_out, d_in, 2]`, `self` is `[batch, modes.., d_in, 2]`.
    pub fn spectral_mix(&self, w: &Var<'t>) -> Result<Var<'t>> {
        self.same_tape(w)?;
        let s = self.shape();
        let ws = w.shape();
        let nd = s.len();
        if nd < 4
            || ws.len() != nd
            || ws[nd - 1] != 2
            || s[nd - 1] != 2
            || s[1..nd - 2] != ws[..nd - 3]
            || ws[nd - 2] != s[nd - 2]
        {
            return shape_err(format!("spectral_mix: spectrum {:?} vs weights {:?}", s, ws));
        }
        let batch = s[0];
        let modes: usize = s[1..nd - 2].iter().product();
        let (cout, cin) = (ws[nd - 3], ws[nd - 2]);
        let data = kernels::mix(self.value().data(), w.value().data(), batch, modes, cin, cout);
        let mut shape = s.clone();
        shape[nd - 2] = cout;
        let rq = self.tape.requires(&[self.id, w.id]);
        Ok(self.tape.push(Tensor::new(shape, data)?, Op::SpectralMix { s: self.id, w: w.id, modes, cin, cout }, rq))
    }

    /// Batched complex matrix product `[M, R, K, 2] x [M, K, C, 2] -> [M, R, C, 2]`.
    pub fn cmatmul(&self, other: &Var<'t>) -> Result<Var<'t>> {
        self.same_tape(other)?;
        let (a, b) = (self.shape(), other.shape());
        if a.len() < 3 || a.len() != b.len() || a[a.len() - 1] != 2 || b[b.len() - 1] != 2 {
            return shape_err(format!("cmatmul: {:?} x {:?}", a, b));
        }
        let nd = a.len();
        if a[..nd - 3] != b[..nd - 3] || a[nd - 2] != b[nd - 3] {
            return shape_err(format!("cmatmul: {:?} x {:?}", a, b));
        }
        let modes: usize = a[..nd - 3].iter().product();
        let (rows, inner, cols) = (a[nd - 3], a[nd - 2], b[nd - 2]);
        let data = kernels::cmatmul(self.value().data(), other.value().data(), modes, rows, inner, cols);
        let mut shape = a.clone();
        shape[nd - 2] = cols;
        let rq = self.tape.requires(&[self.id, other.id]);
        Ok(self.tape.push(
            Tensor::new(shape, data)?,
            Op::CMatMul { a: self.id, b: other.id, modes, rows, inner, cols },
            rq,
        ))
    }

    /// Per-mode weights `r · ρ_m^p` from one complex block `r` (`[C, C, 2]`)
    /// and a scalar exponent `p`; output `[M, C, C, 2]`.
    pub fn mode_scaled(&self, exponent: &Var<'t>, ratios: &[f64]) -> Result<Var<'t>> {
        self.same_tape(exponent)?;
        if exponent.value().len() != 1 {
            return shape_err("mode_scaled: exponent must be a scalar");
        }
        let p = exponent.value().item();
        let r = self.to_tensor();
        let block = r.len();
        let mut data = Vec::with_capacity(block * ratios.len());
        for &rho in ratios {
            let f = kernels::mode_factor(rho, p);
            data.extend(r.data().iter().map(|v| v * f));
        }
        let mut shape = vec![ratios.len()];
        shape.extend_from_slice(r.shape());
        let rq = self.tape.requires(&[self.id, exponent.id]);
        Ok(self.tape.push(
            Tensor::new(shape, data)?,
            Op::ModeScaledWeights { r: self.id, p: exponent.id, ratios: ratios.to_vec() },
            rq,
        ))
    }

    /// Batch mean of per-sample relative L2 errors `‖a−b‖/‖b‖`.
    pub fn relative_l2(&self, target: &Tensor) -> Result<Var<'t>> {
        let shape = self.shape();
        if shape != target.shape() || shape.is_empty() {
            return shape_err(format!("relative_l2: prediction {:?} vs target {:?}", shape, target.shape()));
        }
        let value = kernels::rel_l2(self.value().data(), target.data(), shape[0])?;
        Ok(self.unary(Tensor::scalar(value), Op::RelL2 { pred: self.id, target: Rc::new(target.clone()) }))
    }
}
