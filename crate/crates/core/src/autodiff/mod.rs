//! Reverse-mode automatic differentiation over [`Tensor`]s.
//!
//! A [`Tape`] records every operation in creation order, which is already a
//! topological order of the computation graph. [`Tape::backward`] walks the
//! tape once in reverse and accumulates gradients into leaves that were
//! created with `requires_grad`. A tape belongs to one thread; independent
//! tapes can run concurrently over shared read-only parameters.

pub mod gradcheck;
pub mod kernels;

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::real::Real;
use crate::temporal::RopeParams;
use crate::tensor::Tensor;

use kernels::{gemm_acc, gemm_nt_acc, gemm_tn_acc, sigmoid};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementwiseKind {
    Add,
    Sub,
    Mul,
}

#[derive(Debug, Clone, PartialEq)]
pub enum OpKind {
    Leaf,
    MatMul,
    Elementwise(ElementwiseKind),
    AddRow,
    Scale(f64),
    SoftmaxRows,
    RmsNorm,
    Silu,
    ConcatCols,
    SliceCols { start: usize },
    Transpose,
    Rope { head_dim: usize },
    Mse,
    Sum,
}

pub const RMS_EPS: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct TapeNode<T> {
    pub op_kind: OpKind,
    pub input_refs: Vec<Var>,
    /// Operands cached for the backward rule (row scales, rotation tables).
    pub saved_values: Vec<T>,
    value: Tensor<T>,
    requires_grad: bool,
    grad: Option<Vec<T>>,
}

#[derive(Debug, Clone, Default)]
pub struct Tape<T> {
    nodes: Vec<TapeNode<T>>,
    macs: u64,
}

fn dim_err(op: &'static str, a: &[usize], b: &[usize]) -> Error {
    Error::Dimension {
        op,
        lhs: a.to_vec(),
        rhs: b.to_vec(),
    }
}

fn add_into<T: Real>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            macs: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Multiply-adds performed by matrix products recorded so far.
    pub fn macs(&self) -> u64 {
        self.macs
    }

    pub fn node(&self, v: Var) -> &TapeNode<T> {
        &self.nodes[v.0]
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient of a tracked leaf.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Vec<T>> {
        self.nodes[v.0].grad.take()
    }

    pub fn zero_grads(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.push(OpKind::Leaf, Vec::new(), value, Vec::new(), requires_grad)
    }

    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    fn push(
        &mut self,
        op_kind: OpKind,
        input_refs: Vec<Var>,
        value: Tensor<T>,
        saved_values: Vec<T>,
        requires_grad: bool,
    ) -> Var {
        self.nodes.push(TapeNode {
            op_kind,
            input_refs,
            saved_values,
            value,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn mat_dims(&self, v: Var, op: &'static str) -> Result<(usize, usize)> {
        let s = self.value(v).shape();
        match s {
            [r, c] => Ok((*r, *c)),
            _ => Err(dim_err(op, s, &[0, 0])),
        }
    }

    /// Standard matrix product of `[m×k]` and `[k×n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.mat_dims(a, "matmul")?;
        let (k2, n) = self.mat_dims(b, "matmul")?;
        if k != k2 {
            return Err(dim_err("matmul", self.value(a).shape(), self.value(b).shape()));
        }
        let mut out = vec![T::zero(); m * n];
        gemm_acc(m, k, n, self.value(a).data(), self.value(b).data(), &mut out);
        self.macs += (m * k * n) as u64;
        let rg = self.any_grad(&[a, b]);
        let value = Tensor::matrix(m, n, out)?;
        Ok(self.push(OpKind::MatMul, vec![a, b], value, Vec::new(), rg))
    }

    /// Pointwise add/sub/mul. Shapes must agree, or one side must hold a
    /// single element that is broadcast.
    pub fn elementwise(&mut self, a: Var, b: Var, kind: ElementwiseKind) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        let shape = if va.shape() == vb.shape() {
            va.shape().to_vec()
        } else if vb.numel() == 1 {
            va.shape().to_vec()
        } else if va.numel() == 1 {
            vb.shape().to_vec()
        } else {
            return Err(dim_err("elementwise", va.shape(), vb.shape()));
        };
        let n = va.numel().max(vb.numel());
        let (da, db) = (va.data(), vb.data());
        let pick = |d: &[T], i: usize| if d.len() == 1 { d[0] } else { d[i] };
        let data: Vec<T> = (0..n)
            .map(|i| {
                let (x, y) = (pick(da, i), pick(db, i));
                match kind {
                    ElementwiseKind::Add => x + y,
                    ElementwiseKind::Sub => x - y,
                    ElementwiseKind::Mul => x * y,
                }
            })
            .collect();
        let rg = self.any_grad(&[a, b]);
        let value = Tensor::new(shape, data)?;
        Ok(self.push(OpKind::Elementwise(kind), vec![a, b], value, Vec::new(), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(a, b, ElementwiseKind::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(a, b, ElementwiseKind::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(a, b, ElementwiseKind::Mul)
    }

    /// Adds a length-`c` vector to every row of an `[r×c]` value.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let c = self.value(a).last_dim();
        if self.value(row).numel() != c {
            return Err(dim_err("add_row", self.value(a).shape(), self.value(row).shape()));
        }
        let mut out = self.value(a).clone();
        let r = self.value(row).data().to_vec();
        for i in 0..out.rows() {
            add_into(out.row_mut(i), &r);
        }
        let rg = self.any_grad(&[a, row]);
        Ok(self.push(OpKind::AddRow, vec![a, row], out, Vec::new(), rg))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let f = T::from_f64(factor);
        let out = self.value(a).map(|x| x * f);
        let rg = self.any_grad(&[a]);
        self.push(OpKind::Scale(factor), vec![a], out, Vec::new(), rg)
    }

    /// Row-wise softmax, stabilised by subtracting each row's maximum.
    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        for i in 0..out.rows() {
            let row = out.row_mut(i);
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let mut total = T::zero();
            for x in row.iter_mut() {
                *x = (*x - max).exp();
                total += *x;
            }
            for x in row.iter_mut() {
                *x /= total;
            }
        }
        let rg = self.any_grad(&[a]);
        self.push(OpKind::SoftmaxRows, vec![a], out, Vec::new(), rg)
    }

    /// `x / sqrt(mean(x²) + ε) · gain` over the last axis.
    pub fn rms_norm(&mut self, a: Var, gain: Var) -> Result<Var> {
        let d = self.value(a).last_dim();
        if self.value(gain).numel() != d {
            return Err(dim_err("rms_norm", self.value(a).shape(), self.value(gain).shape()));
        }
        let g = self.value(gain).data().to_vec();
        let mut out = self.value(a).clone();
        let eps = T::from_f64(RMS_EPS);
        let mut inv = Vec::with_capacity(out.rows());
        for i in 0..out.rows() {
            let row = out.row_mut(i);
            let ms = row.iter().map(|&x| x * x).sum::<T>() / T::from_usize(d);
            let r = T::one() / (ms + eps).sqrt();
            for (x, &gj) in row.iter_mut().zip(&g) {
                *x = *x * r * gj;
            }
            inv.push(r);
        }
        let rg = self.any_grad(&[a, gain]);
        Ok(self.push(OpKind::RmsNorm, vec![a, gain], out, inv, rg))
    }

    pub fn silu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x * sigmoid(x));
        let rg = self.any_grad(&[a]);
        self.push(OpKind::Silu, vec![a], out, Vec::new(), rg)
    }

    /// Concatenates along the last (channel) axis, preserving input order.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::contract("concat of zero tensors"))?;
        let rows = self.value(*first).rows();
        let lead = self.value(*first).shape()[..self.value(*first).shape().len() - 1].to_vec();
        let mut total = 0;
        for &p in parts {
            let s = self.value(p).shape();
            if s.len() != lead.len() + 1 || s[..lead.len()] != lead[..] {
                return Err(dim_err("concat_channels", self.value(*first).shape(), s));
            }
            total += self.value(p).last_dim();
        }
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let mut shape = lead;
        shape.push(total);
        let rg = self.any_grad(parts);
        let value = Tensor::new(shape, data)?;
        Ok(self.push(OpKind::ConcatCols, parts.to_vec(), value, Vec::new(), rg))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.mat_dims(a, "slice_cols")?;
        if len == 0 || start + len > c {
            return Err(dim_err("slice_cols", &[r, c], &[start, len]));
        }
        let mut data = Vec::with_capacity(r * len);
        for i in 0..r {
            data.extend_from_slice(&self.value(a).row(i)[start..start + len]);
        }
        let rg = self.any_grad(&[a]);
        let value = Tensor::matrix(r, len, data)?;
        Ok(self.push(OpKind::SliceCols { start }, vec![a], value, Vec::new(), rg))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.mat_dims(a, "transpose")?;
        let data = kernels::transpose(r, c, self.value(a).data());
        let rg = self.any_grad(&[a]);
        let value = Tensor::matrix(c, r, data)?;
        Ok(self.push(OpKind::Transpose, vec![a], value, Vec::new(), rg))
    }

    /// Rotary embedding on an `[rows × (heads·head_dim)]` matrix: row `r` is
    /// rotated pairwise by angles `positions[r] · θ_k` inside every head.
    pub fn rope(&mut self, a: Var, positions: &[f64], params: &RopeParams) -> Result<Var> {
        params.validate()?;
        let (r, c) = self.mat_dims(a, "rope")?;
        let hd = params.head_dim;
        if positions.len() != r || c % hd != 0 {
            return Err(dim_err("rope", &[r, c], &[positions.len(), hd]));
        }
        let half = hd / 2;
        let mut table = Vec::with_capacity(r * half * 2);
        for &p in positions {
            for k in 0..half {
                let angle = p * params.frequency(k);
                table.push(T::from_f64(libm_cos(angle)));
                table.push(T::from_f64(libm_sin(angle)));
            }
        }
        let mut out = self.value(a).clone();
        for i in 0..r {
            let row = out.row_mut(i);
            let tab = &table[i * half * 2..(i + 1) * half * 2];
            for head in row.chunks_exact_mut(hd) {
                for k in 0..half {
                    let (cs, sn) = (tab[2 * k], tab[2 * k + 1]);
                    let (x0, x1) = (head[2 * k], head[2 * k + 1]);
                    head[2 * k] = x0 * cs - x1 * sn;
                    head[2 * k + 1] = x0 * sn + x1 * cs;
                }
            }
        }
        let rg = self.any_grad(&[a]);
        Ok(self.push(OpKind::Rope { head_dim: hd }, vec![a], out, table, rg))
    }

    /// Mean of squared differences, as a scalar.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(dim_err("mse", va.shape(), vb.shape()));
        }
        let n = T::from_usize(va.numel());
        let s = va
            .data()
            .iter()
            .zip(vb.data())
            .map(|(&x, &y)| (x - y) * (x - y))
            .sum::<T>()
            / n;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(OpKind::Mse, vec![a, b], Tensor::scalar(s), Vec::new(), rg))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        let rg = self.any_grad(&[a]);
        self.push(OpKind::Sum, vec![a], Tensor::scalar(s), Vec::new(), rg)
    }

    /// Propagates `d(loss)/d(·)` to every tracked leaf. Leaf gradients
    /// accumulate across calls until [`Tape::zero_grads`].
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if !self.value(loss).is_scalar() {
            return Err(Error::contract("backward requires a scalar loss"));
        }
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        let n = loss.0 + 1;
        let mut grads: Vec<Option<Vec<T>>> = vec![None; n];
        grads[loss.0] = Some(vec![T::one()]);
        for i in (0..n).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            if node.op_kind == OpKind::Leaf {
                grads[i] = Some(g);
                continue;
            }
            self.backprop_node(i, &g, &mut grads)?;
        }
        for (i, g) in grads.into_iter().enumerate() {
            if let Some(g) = g {
                let node = &mut self.nodes[i];
                match &mut node.grad {
                    Some(acc) => add_into(acc, &g),
                    None => node.grad = Some(g),
                }
            }
        }
        Ok(())
    }

    fn backprop_node(&self, i: usize, g: &[T], grads: &mut [Option<Vec<T>>]) -> Result<()> {
        let node = &self.nodes[i];
        let inputs = &node.input_refs;
        let wants = |v: Var| self.nodes[v.0].requires_grad;
        let mut acc = |v: Var, contrib: Vec<T>| match &mut grads[v.0] {
            Some(existing) => add_into(existing, &contrib),
            slot @ None => *slot = Some(contrib),
        };
        match &node.op_kind {
            OpKind::Leaf => {}
            OpKind::MatMul => {
                let (a, b) = (inputs[0], inputs[1]);
                let (m, k) = self.mat_dims(a, "matmul")?;
                let (_, n) = self.mat_dims(b, "matmul")?;
                if wants(a) {
                    let mut da = vec![T::zero(); m * k];
                    gemm_nt_acc(m, n, k, g, self.value(b).data(), &mut da);
                    acc(a, da);
                }
                if wants(b) {
                    let mut db = vec![T::zero(); k * n];
                    gemm_tn_acc(m, k, n, self.value(a).data(), g, &mut db);
                    acc(b, db);
                }
            }
            OpKind::Elementwise(kind) => {
                let (a, b) = (inputs[0], inputs[1]);
                let (da_src, db_src) = (self.value(a).data(), self.value(b).data());
                let pick = |d: &[T], j: usize| if d.len() == 1 { d[0] } else { d[j] };
                let reduce = |len: usize, f: &dyn Fn(usize) -> T| -> Vec<T> {
                    if len == 1 && g.len() > 1 {
                        vec![(0..g.len()).map(f).sum()]
                    } else {
                        (0..len).map(f).collect()
                    }
                };
                if wants(a) {
                    let contrib = match kind {
                        ElementwiseKind::Add | ElementwiseKind::Sub => reduce(da_src.len(), &|j| g[j]),
                        ElementwiseKind::Mul => reduce(da_src.len(), &|j| g[j] * pick(db_src, j)),
                    };
                    acc(a, contrib);
                }
                if wants(b) {
                    let contrib = match kind {
                        ElementwiseKind::Add => reduce(db_src.len(), &|j| g[j]),
                        ElementwiseKind::Sub => reduce(db_src.len(), &|j| -g[j]),
                        ElementwiseKind::Mul => reduce(db_src.len(), &|j| g[j] * pick(da_src, j)),
                    };
                    acc(b, contrib);
                }
            }
            OpKind::AddRow => {
                let (a, row) = (inputs[0], inputs[1]);
                if wants(a) {
                    acc(a, g.to_vec());
                }
                if wants(row) {
                    let c = self.value(row).numel();
                    let mut dr = vec![T::zero(); c];
                    for chunk in g.chunks_exact(c) {
                        add_into(&mut dr, chunk);
                    }
                    acc(row, dr);
                }
            }
            OpKind::Scale(f) => {
                let f = T::from_f64(*f);
                acc(inputs[0], g.iter().map(|&x| x * f).collect());
            }
            OpKind::SoftmaxRows => {
                let y = &node.value;
                let c = y.last_dim();
                let mut dx = vec![T::zero(); g.len()];
                for r in 0..y.rows() {
                    let yr = y.row(r);
                    let gr = &g[r * c..(r + 1) * c];
                    let dot: T = yr.iter().zip(gr).map(|(&a, &b)| a * b).sum();
                    for j in 0..c {
                        dx[r * c + j] = yr[j] * (gr[j] - dot);
                    }
                }
                acc(inputs[0], dx);
            }
            OpKind::RmsNorm => {
                let (a, gain) = (inputs[0], inputs[1]);
                let x = self.value(a);
                let gv = self.value(gain).data();
                let d = x.last_dim();
                let inv = &node.saved_values;
                let dn = T::from_usize(d);
                if wants(a) {
                    let mut dx = vec![T::zero(); g.len()];
                    for r in 0..x.rows() {
                        let xr = x.row(r);
                        let gr = &g[r * d..(r + 1) * d];
                        let s = inv[r];
                        let dot: T = (0..d).map(|j| gr[j] * gv[j] * xr[j]).sum();
                        let coef = s * s * s * dot / dn;
                        for j in 0..d {
                            dx[r * d + j] = s * gv[j] * gr[j] - coef * xr[j];
                        }
                    }
                    acc(a, dx);
                }
                if wants(gain) {
                    let mut dg = vec![T::zero(); d];
                    for r in 0..x.rows() {
                        let xr = x.row(r);
                        let s = inv[r];
                        for j in 0..d {
                            dg[j] += g[r * d + j] * xr[j] * s;
                        }
                    }
                    acc(gain, dg);
                }
            }
            OpKind::Silu => {
                let x = self.value(inputs[0]).data();
                let dx = x
                    .iter()
                    .zip(g)
                    .map(|(&xi, &gi)| {
                        let s = sigmoid(xi);
                        gi * s * (T::one() + xi * (T::one() - s))
                    })
                    .collect();
                acc(inputs[0], dx);
            }
            OpKind::ConcatCols => {
                let total = node.value.last_dim();
                let rows = node.value.rows();
                let mut offset = 0;
                for &p in inputs {
                    let w = self.value(p).last_dim();
                    if wants(p) {
                        let mut dp = Vec::with_capacity(rows * w);
                        for r in 0..rows {
                            dp.extend_from_slice(&g[r * total + offset..r * total + offset + w]);
                        }
                        acc(p, dp);
                    }
                    offset += w;
                }
            }
            OpKind::SliceCols { start } => {
                let (r, c) = self.mat_dims(inputs[0], "slice_cols")?;
                let len = node.value.last_dim();
                let mut dx = vec![T::zero(); r * c];
                for i in 0..r {
                    dx[i * c + start..i * c + start + len].copy_from_slice(&g[i * len..(i + 1) * len]);
                }
                acc(inputs[0], dx);
            }
            OpKind::Transpose => {
                let (r, c) = self.mat_dims(inputs[0], "transpose")?;
                acc(inputs[0], kernels::transpose(c, r, g));
            }
            OpKind::Rope { head_dim } => {
                let hd = *head_dim;
                let half = hd / 2;
                let c = node.value.last_dim();
                let table = &node.saved_values;
                let mut dx = g.to_vec();
                for (i, row) in dx.chunks_exact_mut(c).enumerate() {
                    let tab = &table[i * half * 2..(i + 1) * half * 2];
                    for head in row.chunks_exact_mut(hd) {
                        for k in 0..half {
                            let (cs, sn) = (tab[2 * k], tab[2 * k + 1]);
                            let (g0, g1) = (head[2 * k], head[2 * k + 1]);
                            head[2 * k] = g0 * cs + g1 * sn;
                            head[2 * k + 1] = -g0 * sn + g1 * cs;
                        }
                    }
                }
                acc(inputs[0], dx);
            }
            OpKind::Mse => {
                let (a, b) = (inputs[0], inputs[1]);
                let (xa, xb) = (self.value(a).data(), self.value(b).data());
                let f = T::from_f64(2.0) * g[0] / T::from_usize(xa.len());
                if wants(a) {
                    acc(a, xa.iter().zip(xb).map(|(&x, &y)| f * (x - y)).collect());
                }
                if wants(b) {
                    acc(b, xa.iter().zip(xb).map(|(&x, &y)| f * (y - x)).collect());
                }
            }
            OpKind::Sum => {
                let n = self.value(inputs[0]).numel();
                acc(inputs[0], vec![g[0]; n]);
            }
        }
        Ok(())
    }
}

#[inline]
fn libm_cos(x: f64) -> f64 {
    num_traits::Float::cos(x)
}

#[inline]
fn libm_sin(x: f64) -> f64 {
    num_traits::Float::sin(x)
}

#[cfg(test)]
mod tests;
