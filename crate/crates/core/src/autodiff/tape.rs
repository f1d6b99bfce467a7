//! Dynamic reverse-mode tape.
//!
//! Every operation appends a node holding its output value and the ids of its
//! inputs. Inputs always precede their consumers, so a single reverse sweep
//! over the node list visits each node once, after all of its consumers.
//!
//! Values are treated as matrices: a rank-1 tensor of length `n` is a `1 × n`
//! row, higher ranks collapse all leading dimensions into rows.

use super::Tensor;
use crate::error::{ensure, Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }

    #[cfg(test)]
    pub(crate) fn from_raw(i: usize) -> Self {
        Var(i)
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Affine(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    SoftmaxRows(Var),
    ConcatCols(Vec<Var>),
    SliceRows(Var, usize),
    StackRows(Vec<(Var, usize)>),
    Sum(Var),
    Mean(Var),
    MaskedFill { x: Var, mask: Vec<bool>, v: Var },
    BceWithLogits { logits: Var, targets: Vec<f64> },
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    shape: Vec<usize>,
    value: Vec<f64>,
    requires_grad: bool,
}

impl Node {
    fn dims(&self) -> (usize, usize) {
        dims_of(&self.shape)
    }
}

fn dims_of(shape: &[usize]) -> (usize, usize) {
    match shape.len() {
        0 => (1, 1),
        1 => (1, shape[0]),
        _ => {
            let cols = shape[shape.len() - 1];
            (shape[..shape.len() - 1].iter().product(), cols)
        }
    }
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Clears all nodes and gradients.
    pub fn reset(&mut self) {
        self.nodes.clear();
        self.grads.clear();
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    /// Scalar value of a single-element node.
    pub fn item(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the last backward pass with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    fn push(&mut self, op: Op, shape: Vec<usize>, value: Vec<f64>, requires_grad: bool) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        self.nodes.push(Node {
            op,
            shape,
            value,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> &Node {
        &self.nodes[v.0]
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Registers a tensor as a leaf. The tape keeps its own copy of the data.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        self.push(Op::Leaf, t.shape().to_vec(), t.data().to_vec(), t.requires_grad())
    }

    /// Registers raw input data as a constant leaf. Unlike [`Tensor::new`]
    /// this does not reject non-finite values, so poisoned placeholders can
    /// flow in and surface loudly if anything reads them.
    pub fn constant(&mut self, shape: &[usize], data: Vec<f64>) -> Result<Var> {
        let numel: usize = shape.iter().product();
        ensure!(
            numel == data.len(),
            InvalidArgument,
            "shape {shape:?} holds {numel} values, got {}",
            data.len()
        );
        Ok(self.push(Op::Leaf, shape.to_vec(), data, false))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.node(a).dims();
        let (k2, n) = self.node(b).dims();
        ensure!(k == k2, Shape, "matmul inner dims differ: {m}x{k} · {k2}x{n}");
        let mut out = vec![0.0; m * n];
        gemm_nn(&self.node(a).value, &self.node(b).value, m, k, n, &mut out);
        let rg = self.rg(&[a, b]);
        Ok(self.push(Op::MatMul(a, b), vec![m, n], out, rg))
    }

    /// `a · bᵀ` without materialising the transpose.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.node(a).dims();
        let (n, k2) = self.node(b).dims();
        ensure!(k == k2, Shape, "matmul_nt inner dims differ: {m}x{k} · ({n}x{k2})ᵀ");
        let mut out = vec![0.0; m * n];
        gemm_nt(&self.node(a).value, &self.node(b).value, m, k, n, &mut out);
        let rg = self.rg(&[a, b]);
        Ok(self.push(Op::MatMulNt(a, b), vec![m, n], out, rg))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let (m, n) = self.node(a).dims();
        let src = &self.node(a).value;
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = src[i * n + j];
            }
        }
        let rg = self.rg(&[a]);
        self.push(Op::Transpose(a), vec![n, m], out, rg)
    }

    fn broadcast_check(&self, a: Var, b: Var, what: &str) -> Result<(usize, usize, bool)> {
        let (m, n) = self.node(a).dims();
        let sa = &self.node(a).shape;
        let sb = &self.node(b).shape;
        if dims_of(sa) == dims_of(sb) {
            return Ok((m, n, false));
        }
        let (bm, bn) = self.node(b).dims();
        ensure!(
            bm == 1 && bn == n,
            Shape,
            "{what}: cannot broadcast {sb:?} against {sa:?}"
        );
        Ok((m, n, true))
    }

    fn binary(&mut self, a: Var, b: Var, what: &str, f: impl Fn(f64, f64) -> f64) -> Result<(Vec<f64>, bool)> {
        let (m, n, bcast) = self.broadcast_check(a, b, what)?;
        let av = &self.node(a).value;
        let bv = &self.node(b).value;
        let mut out = Vec::with_capacity(m * n);
        if bcast {
            for i in 0..m {
                for j in 0..n {
                    out.push(f(av[i * n + j], bv[j]));
                }
            }
        } else {
            out.extend(av.iter().zip(bv).map(|(&x, &y)| f(x, y)));
        }
        Ok((out, self.rg(&[a, b])))
    }

    /// Elementwise sum; `b` may be a length-`cols` row broadcast over `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (out, rg) = self.binary(a, b, "add", |x, y| x + y)?;
        let shape = self.node(a).shape.clone();
        Ok(self.push(Op::Add(a, b), shape, out, rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (out, rg) = self.binary(a, b, "sub", |x, y| x - y)?;
        let shape = self.node(a).shape.clone();
        Ok(self.push(Op::Sub(a, b), shape, out, rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (out, rg) = self.binary(a, b, "mul", |x, y| x * y)?;
        let shape = self.node(a).shape.clone();
        Ok(self.push(Op::Mul(a, b), shape, out, rg))
    }

    /// `alpha · a + beta`, elementwise.
    pub fn affine(&mut self, a: Var, alpha: f64, beta: f64) -> Var {
        let out = self.node(a).value.iter().map(|&x| alpha * x + beta).collect();
        let shape = self.node(a).shape.clone();
        let rg = self.rg(&[a]);
        self.push(Op::Affine(a, alpha), shape, out, rg)
    }

    pub fn scale(&mut self, a: Var, alpha: f64) -> Var {
        self.affine(a, alpha, 0.0)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.node(a).value.iter().map(|&x| sigmoid(x)).collect();
        let shape = self.node(a).shape.clone();
        let rg = self.rg(&[a]);
        self.push(Op::Sigmoid(a), shape, out, rg)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.node(a).value.iter().map(|&x| x.tanh()).collect();
        let shape = self.node(a).shape.clone();
        let rg = self.rg(&[a]);
        self.push(Op::Tanh(a), shape, out, rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.node(a).value.iter().map(|&x| x.max(0.0)).collect();
        let shape = self.node(a).shape.clone();
        let rg = self.rg(&[a]);
        self.push(Op::Relu(a), shape, out, rg)
    }

    /// Smallest |input| over every relu on the tape, or `None` without
    /// relus. Finite differences are only meaningful well away from 0.
    pub fn kink_margin(&self) -> Option<f64> {
        self.nodes
            .iter()
            .filter_map(|n| match n.op {
                Op::Relu(a) => Some(&self.nodes[a.0].value),
                _ => None,
            })
            .flatten()
            .map(|x| x.abs())
            .reduce(f64::min)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let (m, n) = self.node(a).dims();
        ensure!(n > 0, InvalidArgument, "softmax over empty rows");
        let src = &self.node(a).value;
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &src[i * n..(i + 1) * n];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let dst = &mut out[i * n..(i + 1) * n];
            let mut total = 0.0;
            for (d, &x) in dst.iter_mut().zip(row) {
                *d = (x - max).exp();
                total += *d;
            }
            dst.iter_mut().for_each(|d| *d /= total);
        }
        let shape = self.node(a).shape.clone();
        let rg = self.rg(&[a]);
        Ok(self.push(Op::SoftmaxRows(a), shape, out, rg))
    }

    /// Concatenates matrices with equal row counts along the last dimension.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        ensure!(!parts.is_empty(), InvalidArgument, "concat of zero tensors");
        let m = self.node(parts[0]).dims().0;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (pm, pn) = self.node(p).dims();
            ensure!(pm == m, Shape, "concat row counts differ: {pm} vs {m}");
            widths.push(pn);
        }
        let n: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(m * n);
        for i in 0..m {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.node(p).value[i * w..(i + 1) * w]);
            }
        }
        let rg = self.rg(parts);
        Ok(self.push(Op::ConcatCols(parts.to_vec()), vec![m, n], out, rg))
    }

    /// Rows `start..end` of a matrix.
    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let (m, n) = self.node(a).dims();
        ensure!(start <= end && end <= m, Shape, "row slice {start}..{end} of {m} rows");
        let out = self.node(a).value[start * n..end * n].to_vec();
        let rg = self.rg(&[a]);
        Ok(self.push(Op::SliceRows(a, start), vec![end - start, n], out, rg))
    }

    /// Builds a matrix whose `i`-th row is row `picks[i].1` of `picks[i].0`.
    /// All sources must share a column count.
    pub fn stack_rows(&mut self, picks: &[(Var, usize)]) -> Result<Var> {
        ensure!(!picks.is_empty(), InvalidArgument, "stack of zero rows");
        let n = self.node(picks[0].0).dims().1;
        let mut out = Vec::with_capacity(picks.len() * n);
        let mut rg = false;
        for &(src, row) in picks {
            let (sm, sn) = self.node(src).dims();
            ensure!(sn == n, Shape, "stacked rows differ in width: {sn} vs {n}");
            ensure!(row < sm, Shape, "row {row} out of range for {sm} rows");
            out.extend_from_slice(&self.node(src).value[row * n..(row + 1) * n]);
            rg |= self.node(src).requires_grad;
        }
        Ok(self.push(Op::StackRows(picks.to_vec()), vec![picks.len(), n], out, rg))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.node(a).value.iter().sum();
        let rg = self.rg(&[a]);
        self.push(Op::Sum(a), vec![1], vec![s], rg)
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let n = self.node(a).value.len();
        ensure!(n > 0, InvalidArgument, "mean of empty tensor");
        let s: f64 = self.node(a).value.iter().sum();
        let rg = self.rg(&[a]);
        Ok(self.push(Op::Mean(a), vec![1], vec![s / n as f64], rg))
    }

    /// `out[l,n] = x[l,n]` where `mask[l,n]`, else `v[n]`.
    ///
    /// Masked-out entries of `x` are never read. Backward routes the upstream
    /// gradient at observed positions to `x` and sums it over filled positions
    /// into `v[n]`.
    pub fn masked_fill(&mut self, x: Var, mask: &[bool], v: Var) -> Result<Var> {
        let (m, n) = self.node(x).dims();
        ensure!(
            mask.len() == m * n,
            Shape,
            "mask of {} entries for a {m}x{n} matrix",
            mask.len()
        );
        ensure!(
            self.node(v).value.len() == n,
            Shape,
            "fill vector of length {} for {n} features",
            self.node(v).value.len()
        );
        let xv = &self.node(x).value;
        let vv = &self.node(v).value;
        let mut out = Vec::with_capacity(m * n);
        for i in 0..m {
            for j in 0..n {
                let k = i * n + j;
                out.push(if mask[k] { xv[k] } else { vv[j] });
            }
        }
        let shape = self.node(x).shape.clone();
        let rg = self.rg(&[x, v]);
        Ok(self.push(
            Op::MaskedFill {
                x,
                mask: mask.to_vec(),
                v,
            },
            shape,
            out,
            rg,
        ))
    }

    /// Mean binary cross-entropy of `sigmoid(logits)` against `targets`,
    /// evaluated as `max(z,0) − z·y + ln(1 + e^{−|z|})`.
    pub fn bce_with_logits(&mut self, logits: Var, targets: &[f64]) -> Result<Var> {
        let z = &self.node(logits).value;
        ensure!(!z.is_empty(), InvalidArgument, "empty batch");
        ensure!(
            z.len() == targets.len(),
            Shape,
            "{} logits for {} targets",
            z.len(),
            targets.len()
        );
        let total: f64 = z
            .iter()
            .zip(targets)
            .map(|(&z, &y)| z.max(0.0) - z * y + (-z.abs()).exp().ln_1p())
            .sum();
        let loss = total / z.len() as f64;
        let rg = self.rg(&[logits]);
        Ok(self.push(
            Op::BceWithLogits {
                logits,
                targets: targets.to_vec(),
            },
            vec![1],
            vec![loss],
            rg,
        ))
    }

    /// Reverse sweep from a scalar `loss`. Gradients of every node that
    /// requires them are retained until the next backward or reset.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.nodes.is_empty() || loss.0 >= self.nodes.len() {
            return Err(Error::State("backward called before any forward pass".into()));
        }
        ensure!(
            self.nodes[loss.0].value.len() == 1,
            InvalidArgument,
            "backward needs a scalar loss, got shape {:?}",
            self.nodes[loss.0].shape
        );
        self.grads = vec![None; self.nodes.len()];
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        self.grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = self.grads[i].take() else {
                continue;
            };
            propagate(&self.nodes, &mut self.grads, i, &g);
            self.grads[i] = Some(g);
        }
        Ok(())
    }
}

fn acc<'g>(nodes: &[Node], grads: &'g mut [Option<Vec<f64>>], target: Var) -> Option<&'g mut Vec<f64>> {
    let node = &nodes[target.0];
    if !node.requires_grad {
        return None;
    }
    let len = node.value.len();
    Some(grads[target.0].get_or_insert_with(|| vec![0.0; len]))
}

fn propagate(nodes: &[Node], grads: &mut [Option<Vec<f64>>], i: usize, g: &[f64]) {
    let node = |v: &Var| &nodes[v.0];
    match &nodes[i].op {
        Op::Leaf => {}
        Op::MatMul(a, b) => {
            let (m, k) = node(a).dims();
            let n = node(b).dims().1;
            if node(a).requires_grad {
                let bv = &nodes[b.0].value;
                let da = acc(nodes, grads, *a).unwrap();
                gemm_nt(g, bv, m, n, k, da);
            }
            if node(b).requires_grad {
                let av = &nodes[a.0].value;
                let db = acc(nodes, grads, *b).unwrap();
                gemm_tn(av, g, m, k, n, db);
            }
        }
        Op::MatMulNt(a, b) => {
            let (m, k) = node(a).dims();
            let n = node(b).dims().0;
            if node(a).requires_grad {
                let bv = &nodes[b.0].value;
                let da = acc(nodes, grads, *a).unwrap();
                gemm_nn(g, bv, m, n, k, da);
            }
            if node(b).requires_grad {
                let av = &nodes[a.0].value;
                let db = acc(nodes, grads, *b).unwrap();
                gemm_tn(g, av, m, n, k, db);
            }
        }
        Op::Transpose(a) => {
            let (m, n) = node(a).dims();
            if let Some(da) = acc(nodes, grads, *a) {
                for i in 0..m {
                    for j in 0..n {
                        da[i * n + j] += g[j * m + i];
                    }
                }
            }
        }
        Op::Add(a, b) | Op::Sub(a, b) => {
            let sign = if matches!(nodes[i].op, Op::Sub(..)) { -1.0 } else { 1.0 };
            let (_, n) = node(a).dims();
            let bcast = node(b).value.len() != g.len();
            if let Some(da) = acc(nodes, grads, *a) {
                da.iter_mut().zip(g).for_each(|(d, &x)| *d += x);
            }
            if let Some(db) = acc(nodes, grads, *b) {
                if bcast {
                    for (k, &x) in g.iter().enumerate() {
                        db[k % n] += sign * x;
                    }
                } else {
                    db.iter_mut().zip(g).for_each(|(d, &x)| *d += sign * x);
                }
            }
        }
        Op::Mul(a, b) => {
            let (_, n) = node(a).dims();
            let bcast = node(b).value.len() != g.len();
            if node(a).requires_grad {
                let bv = &nodes[b.0].value;
                let da = acc(nodes, grads, *a).unwrap();
                for (k, d) in da.iter_mut().enumerate() {
                    *d += g[k] * if bcast { bv[k % n] } else { bv[k] };
                }
            }
            if node(b).requires_grad {
                let av = &nodes[a.0].value;
                let db = acc(nodes, grads, *b).unwrap();
                for (k, (&x, &gk)) in av.iter().zip(g).enumerate() {
                    db[if bcast { k % n } else { k }] += gk * x;
                }
            }
        }
        Op::Affine(a, alpha) => {
            if let Some(da) = acc(nodes, grads, *a) {
                da.iter_mut().zip(g).for_each(|(d, &x)| *d += *alpha * x);
            }
        }
        Op::Sigmoid(a) => {
            let y = &nodes[i].value;
            if let Some(da) = acc(nodes, grads, *a) {
                for ((d, &gk), &yk) in da.iter_mut().zip(g).zip(y.iter()) {
                    *d += gk * yk * (1.0 - yk);
                }
            }
        }
        Op::Tanh(a) => {
            let y = &nodes[i].value;
            if let Some(da) = acc(nodes, grads, *a) {
                for ((d, &gk), &yk) in da.iter_mut().zip(g).zip(y.iter()) {
                    *d += gk * (1.0 - yk * yk);
                }
            }
        }
        Op::Relu(a) => {
            let x = &nodes[a.0].value;
            if let Some(da) = acc(nodes, grads, *a) {
                for ((d, &gk), &xk) in da.iter_mut().zip(g).zip(x.iter()) {
                    if xk > 0.0 {
                        *d += gk;
                    }
                }
            }
        }
        Op::SoftmaxRows(a) => {
            let (m, n) = node(a).dims();
            let y = &nodes[i].value;
            if let Some(da) = acc(nodes, grads, *a) {
                for r in 0..m {
                    let yr = &y[r * n..(r + 1) * n];
                    let gr = &g[r * n..(r + 1) * n];
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for j in 0..n {
                        da[r * n + j] += yr[j] * (gr[j] - dot);
                    }
                }
            }
        }
        Op::ConcatCols(parts) => {
            let total_cols = nodes[i].dims().1;
            let m = nodes[i].dims().0;
            let mut offset = 0;
            for p in parts {
                let w = node(p).dims().1;
                if let Some(dp) = acc(nodes, grads, *p) {
                    for r in 0..m {
                        for c in 0..w {
                            dp[r * w + c] += g[r * total_cols + offset + c];
                        }
                    }
                }
                offset += w;
            }
        }
        Op::SliceRows(a, start) => {
            let n = node(a).dims().1;
            if let Some(da) = acc(nodes, grads, *a) {
                da[*start * n..*start * n + g.len()]
                    .iter_mut()
                    .zip(g)
                    .for_each(|(d, &x)| *d += x);
            }
        }
        Op::StackRows(picks) => {
            let n = nodes[i].dims().1;
            for (r, (src, row)) in picks.iter().enumerate() {
                if let Some(ds) = acc(nodes, grads, *src) {
                    for c in 0..n {
                        ds[*row * n + c] += g[r * n + c];
                    }
                }
            }
        }
        Op::Sum(a) => {
            if let Some(da) = acc(nodes, grads, *a) {
                da.iter_mut().for_each(|d| *d += g[0]);
            }
        }
        Op::Mean(a) => {
            let scale = g[0] / node(a).value.len() as f64;
            if let Some(da) = acc(nodes, grads, *a) {
                da.iter_mut().for_each(|d| *d += scale);
            }
        }
        Op::MaskedFill { x, mask, v } => {
            let n = node(x).dims().1;
            if let Some(dx) = acc(nodes, grads, *x) {
                for (k, d) in dx.iter_mut().enumerate() {
                    if mask[k] {
                        *d += g[k];
                    }
                }
            }
            if let Some(dv) = acc(nodes, grads, *v) {
                for (k, &observed) in mask.iter().enumerate() {
                    if !observed {
                        dv[k % n] += g[k];
                    }
                }
            }
        }
        Op::BceWithLogits { logits, targets } => {
            let z = &nodes[logits.0].value;
            let scale = g[0] / z.len() as f64;
            if let Some(dz) = acc(nodes, grads, *logits) {
                for ((d, &zk), &y) in dz.iter_mut().zip(z.iter()).zip(targets.iter()) {
                    *d += scale * (sigmoid(zk) - y);
                }
            }
        }
    }
}

/// Logistic function, branching on sign so neither branch overflows.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `out += a(m×k) · b(k×n)`
fn gemm_nn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
}

/// `out += a(m×k) · b(n×k)ᵀ`
fn gemm_nt(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            let dot: f64 = arow.iter().zip(brow).map(|(x, y)| x * y).sum();
            out[i * n + j] += dot;
        }
    }
}

/// `out += a(m×k)ᵀ · b(m×n)`
fn gemm_tn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for i in 0..m {
        let brow = &b[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            let row = &mut out[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
}
