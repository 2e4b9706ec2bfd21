//! Reverse-mode automatic differentiation over tensors.
//!
//! A `Tape` records the forward computation; `backward` replays it in
//! reverse and accumulates exact gradients. The contract for every op is
//! solely that its gradient matches central finite differences.

use super::tensor::{elu, elu_grad, sigmoid, softmax_slice, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Matmul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    AddRow(usize, usize),
    Affine { a: usize, k: f64 },
    Sigmoid(usize),
    Tanh(usize),
    Elu(usize),
    Abs(usize),
    Softmax { a: usize, axis: usize },
    ConcatCols(Vec<usize>),
    Reshape(usize),
    PickPerRow { a: usize, idx: Vec<usize> },
    SelectRows { a: usize, rows: Vec<usize> },
    SumRows(usize),
    SumAll(usize),
    MeanAll(usize),
    RowwiseBmm { q: usize, w: usize, n: usize, h: usize },
    /// One attention row per sequence: query row s attends to keys/values
    /// in `spans[s]` of the packed k/v matrices.
    AttnOneRow {
        q: usize,
        k: usize,
        v: usize,
        spans: Vec<(usize, usize)>,
        probs: Vec<f64>,
    },
    /// Per-sample agent-to-agent attention over blocks of n rows with a
    /// zeroed diagonal and a minimum-weight threshold.
    BlockAgentAttn {
        q: usize,
        k: usize,
        v: usize,
        n: usize,
        alphas: Vec<f64>,
    },
    StepGather {
        steps: Vec<usize>,
        step_of_row: Vec<usize>,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    trainable: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by `Tape::backward`, indexed by `Var`.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }

    /// Gradient of a variable, densified to zeros when the variable was
    /// unreachable from the loss.
    pub fn get_or_zero(&self, v: Var, like: &Tensor) -> Tensor {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => Tensor::new(like.shape().to_vec(), vec![0.0; like.len()]),
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        debug_assert!(value.all_finite(), "non-finite tensor produced by {op:?}");
        self.nodes.push(Node {
            value,
            op,
            trainable: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// Non-trainable input (constants, observations, targets).
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    /// Trainable leaf; `backward` will produce a gradient for it.
    pub fn param(&mut self, t: Tensor) -> Var {
        let v = self.push(t, Op::Leaf);
        self.nodes[v.0].trainable = true;
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = self.nodes[a.0]
            .value
            .matmul(&self.nodes[b.0].value)
            .unwrap_or_else(|e| panic!("{e}"));
        self.push(out, Op::Matmul(a.0, b.0))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let out = self.nodes[a.0].value.add(&self.nodes[b.0].value).unwrap_or_else(|e| panic!("{e}"));
        self.push(out, Op::Add(a.0, b.0))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let out = self.nodes[a.0].value.sub(&self.nodes[b.0].value).unwrap_or_else(|e| panic!("{e}"));
        self.push(out, Op::Sub(a.0, b.0))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let out = self.nodes[a.0].value.mul(&self.nodes[b.0].value).unwrap_or_else(|e| panic!("{e}"));
        self.push(out, Op::Mul(a.0, b.0))
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let out = self.nodes[a.0].value.add_row(&self.nodes[row.0].value).unwrap_or_else(|e| panic!("{e}"));
        self.push(out, Op::AddRow(a.0, row.0))
    }

    pub fn affine(&mut self, a: Var, k: f64, c: f64) -> Var {
        let out = self.nodes[a.0].value.affine(k, c);
        self.push(out, Op::Affine { a: a.0, k })
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.nodes[a.0].value.map(sigmoid);
        self.push(out, Op::Sigmoid(a.0))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.nodes[a.0].value.map(f64::tanh);
        self.push(out, Op::Tanh(a.0))
    }

    pub fn elu(&mut self, a: Var) -> Var {
        let out = self.nodes[a.0].value.map(elu);
        self.push(out, Op::Elu(a.0))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let out = self.nodes[a.0].value.map(f64::abs);
        self.push(out, Op::Abs(a.0))
    }

    pub fn softmax(&mut self, a: Var, axis: usize) -> Var {
        let out = self.nodes[a.0].value.softmax(axis);
        self.push(out, Op::Softmax { a: a.0, axis })
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let tensors: Vec<&Tensor> = parts.iter().map(|v| &self.nodes[v.0].value).collect();
        let out = Tensor::concat_cols(&tensors).unwrap_or_else(|e| panic!("{e}"));
        self.push(out, Op::ConcatCols(parts.iter().map(|v| v.0).collect()))
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Var {
        let out = self.nodes[a.0].value.reshape(shape);
        self.push(out, Op::Reshape(a.0))
    }

    pub fn pick_per_row(&mut self, a: Var, idx: Vec<usize>) -> Var {
        let out = self.nodes[a.0].value.pick_per_row(&idx);
        self.push(out, Op::PickPerRow { a: a.0, idx })
    }

    pub fn select_rows(&mut self, a: Var, rows: Vec<usize>) -> Var {
        let out = self.nodes[a.0].value.select_rows(&rows);
        self.push(out, Op::SelectRows { a: a.0, rows })
    }

    pub fn sum_rows(&mut self, a: Var) -> Var {
        let out = self.nodes[a.0].value.sum_rows();
        self.push(out, Op::SumRows(a.0))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let out = self.nodes[a.0].value.sum_all();
        self.push(out, Op::SumAll(a.0))
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let out = self.nodes[a.0].value.mean_all();
        self.push(out, Op::MeanAll(a.0))
    }

    pub fn rowwise_bmm(&mut self, q: Var, w: Var, n: usize, h: usize) -> Var {
        let out = self.nodes[q.0].value.rowwise_bmm(&self.nodes[w.0].value, n, h);
        self.push(out, Op::RowwiseBmm { q: q.0, w: w.0, n, h })
    }

    pub fn attn_one_row(&mut self, q: Var, k: Var, v: Var, spans: Vec<(usize, usize)>) -> Var {
        let (out, probs) = attn_one_row_forward(
            &self.nodes[q.0].value,
            &self.nodes[k.0].value,
            &self.nodes[v.0].value,
            &spans,
        );
        self.push(
            out,
            Op::AttnOneRow {
                q: q.0,
                k: k.0,
                v: v.0,
                spans,
                probs,
            },
        )
    }

    pub fn block_agent_attn(&mut self, q: Var, k: Var, v: Var, n: usize, delta: f64) -> Var {
        let (out, alphas) = block_agent_attn_forward(
            &self.nodes[q.0].value,
            &self.nodes[k.0].value,
            &self.nodes[v.0].value,
            n,
            delta,
        );
        self.push(out, Op::BlockAgentAttn { q: q.0, k: k.0, v: v.0, n, alphas })
    }

    pub fn step_gather(&mut self, steps: &[Var], step_of_row: Vec<usize>) -> Var {
        let out = step_gather_forward(
            &steps.iter().map(|s| &self.nodes[s.0].value).collect::<Vec<_>>(),
            &step_of_row,
        );
        self.push(
            out,
            Op::StepGather {
                steps: steps.iter().map(|s| s.0).collect(),
                step_of_row,
            },
        )
    }

    /// Reverse pass from a scalar loss. Panics if the loss is not scalar
    /// (contract violation).
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(
            self.nodes[loss.0].value.len(),
            1,
            "backward requires a scalar loss, got shape {:?}",
            self.nodes[loss.0].value.shape()
        );
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for id in (0..=loss.0).rev() {
            let g = match grads[id].take() {
                Some(g) => g,
                None => continue,
            };
            self.accumulate(id, &g, &mut grads);
            grads[id] = Some(g);
        }
        Gradients { grads }
    }

    fn accumulate(&self, id: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[id];
        match &node.op {
            Op::Leaf => {}
            Op::Matmul(a, b) => {
                let da = matmul_nt(g, &self.nodes[*b].value);
                let db = matmul_tn(&self.nodes[*a].value, g);
                add_grad(grads, *a, da);
                add_grad(grads, *b, db);
            }
            Op::Add(a, b) => {
                add_grad(grads, *a, g.clone());
                add_grad(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                add_grad(grads, *a, g.clone());
                add_grad(grads, *b, g.affine(-1.0, 0.0));
            }
            Op::Mul(a, b) => {
                add_grad(grads, *a, g.mul(&self.nodes[*b].value).unwrap());
                add_grad(grads, *b, g.mul(&self.nodes[*a].value).unwrap());
            }
            Op::AddRow(a, row) => {
                add_grad(grads, *a, g.clone());
                let c = g.cols();
                let mut sum = vec![0.0; c];
                for r in 0..g.rows() {
                    for (j, s) in sum.iter_mut().enumerate() {
                        *s += g.at(r, j);
                    }
                }
                add_grad(grads, *row, Tensor::new(vec![1, c], sum));
            }
            Op::Affine { a, k } => add_grad(grads, *a, g.affine(*k, 0.0)),
            Op::Sigmoid(a) => {
                let y = &node.value;
                add_grad(grads, *a, g.zip(y, "dsig", |gi, yi| gi * yi * (1.0 - yi)).unwrap());
            }
            Op::Tanh(a) => {
                let y = &node.value;
                add_grad(grads, *a, g.zip(y, "dtanh", |gi, yi| gi * (1.0 - yi * yi)).unwrap());
            }
            Op::Elu(a) => {
                let x = &self.nodes[*a].value;
                add_grad(grads, *a, g.zip(x, "delu", |gi, xi| gi * elu_grad(xi)).unwrap());
            }
            Op::Abs(a) => {
                let x = &self.nodes[*a].value;
                add_grad(grads, *a, g.zip(x, "dabs", |gi, xi| gi * xi.signum()).unwrap());
            }
            Op::Softmax { a, axis } => {
                add_grad(grads, *a, softmax_backward(&node.value, g, *axis));
            }
            Op::ConcatCols(parts) => {
                let mut col = 0;
                for p in parts {
                    let pc = self.nodes[*p].value.cols();
                    let pr = self.nodes[*p].value.rows();
                    let mut dp = Tensor::zeros(pr, pc);
                    for r in 0..pr {
                        for j in 0..pc {
                            dp.set(r, j, g.at(r, col + j));
                        }
                    }
                    add_grad(grads, *p, dp);
                    col += pc;
                }
            }
            Op::Reshape(a) => {
                let shape = self.nodes[*a].value.shape().to_vec();
                add_grad(grads, *a, g.reshape(shape));
            }
            Op::PickPerRow { a, idx } => {
                let src = &self.nodes[*a].value;
                let mut da = Tensor::zeros(src.rows(), src.cols());
                for (r, &j) in idx.iter().enumerate() {
                    da.set(r, j, g.at(r, 0));
                }
                add_grad(grads, *a, da);
            }
            Op::SumRows(a) => {
                let src = &self.nodes[*a].value;
                let mut da = Tensor::zeros(src.rows(), src.cols());
                for r in 0..src.rows() {
                    for j in 0..src.cols() {
                        da.set(r, j, g.at(r, 0));
                    }
                }
                add_grad(grads, *a, da);
            }
            Op::SumAll(a) => {
                let src = &self.nodes[*a].value;
                add_grad(grads, *a, Tensor::new(src.shape().to_vec(), vec![g.item(); src.len()]));
            }
            Op::MeanAll(a) => {
                let src = &self.nodes[*a].value;
                let s = g.item() / src.len() as f64;
                add_grad(grads, *a, Tensor::new(src.shape().to_vec(), vec![s; src.len()]));
            }
            Op::RowwiseBmm { q, w, n, h } => {
                let qv = &self.nodes[*q].value;
                let wv = &self.nodes[*w].value;
                let b = qv.rows();
                let mut dq = Tensor::zeros(b, *n);
                let mut dw = Tensor::zeros(b, n * h);
                for r in 0..b {
                    for i in 0..*n {
                        let qi = qv.at(r, i);
                        let mut acc = 0.0;
                        for j in 0..*h {
                            let go = g.at(r, j);
                            acc += go * wv.at(r, i * h + j);
                            dw.set(r, i * h + j, qi * go);
                        }
                        dq.set(r, i, acc);
                    }
                }
                add_grad(grads, *q, dq);
                add_grad(grads, *w, dw);
            }
            Op::AttnOneRow { q, k, v, spans, probs } => {
                let (dq, dk, dv) = attn_one_row_backward(
                    &self.nodes[*q].value,
                    &self.nodes[*k].value,
                    &self.nodes[*v].value,
                    spans,
                    probs,
                    g,
                );
                add_grad(grads, *q, dq);
                add_grad(grads, *k, dk);
                add_grad(grads, *v, dv);
            }
            Op::BlockAgentAttn { q, k, v, n, alphas } => {
                let (dq, dk, dv) = block_agent_attn_backward(
                    &self.nodes[*q].value,
                    &self.nodes[*k].value,
                    &self.nodes[*v].value,
                    *n,
                    alphas,
                    g,
                );
                add_grad(grads, *q, dq);
                add_grad(grads, *k, dk);
                add_grad(grads, *v, dv);
            }
            Op::StepGather { steps, step_of_row } => {
                for (s_idx, step) in steps.iter().enumerate() {
                    let sv = &self.nodes[*step].value;
                    let mut ds = Tensor::zeros(sv.rows(), sv.cols());
                    let mut touched = false;
                    for (r, &s_of_r) in step_of_row.iter().enumerate() {
                        if s_of_r == s_idx {
                            touched = true;
                            for j in 0..sv.cols() {
                                ds.set(r, j, g.at(r, j));
                            }
                        }
                    }
                    if touched {
                        add_grad(grads, *step, ds);
                    }
                }
            }
        }
    }
}

fn add_grad(grads: &mut [Option<Tensor>], id: usize, g: Tensor) {
    match &mut grads[id] {
        Some(existing) => {
            let sum = existing.add(&g).unwrap();
            *existing = sum;
        }
        slot @ None => *slot = Some(g),
    }
}

/// a * b^T
fn matmul_nt(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, k) = (a.rows(), a.cols());
    let n = b.rows();
    assert_eq!(b.cols(), k, "matmul_nt inner mismatch");
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let arow = a.row(i);
        for j in 0..n {
            let brow = b.row(j);
            let mut s = 0.0;
            for p in 0..k {
                s += arow[p] * brow[p];
            }
            out[i * n + j] = s;
        }
    }
    Tensor::new(vec![m, n], out)
}

/// a^T * b
fn matmul_tn(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, k) = (a.rows(), a.cols());
    let n = b.cols();
    assert_eq!(b.rows(), m, "matmul_tn inner mismatch");
    let mut out = vec![0.0; k * n];
    for i in 0..m {
        let arow = a.row(i);
        let brow = b.row(i);
        for p in 0..k {
            let av = arow[p];
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            for j in 0..n {
                orow[j] += av * brow[j];
            }
        }
    }
    Tensor::new(vec![k, n], out)
}

fn softmax_backward(y: &Tensor, g: &Tensor, axis: usize) -> Tensor {
    let (r, c) = (y.rows(), y.cols());
    let mut out = Tensor::zeros(r, c);
    match axis {
        1 => {
            for i in 0..r {
                let dot: f64 = (0..c).map(|j| y.at(i, j) * g.at(i, j)).sum();
                for j in 0..c {
                    out.set(i, j, y.at(i, j) * (g.at(i, j) - dot));
                }
            }
        }
        0 => {
            for j in 0..c {
                let dot: f64 = (0..r).map(|i| y.at(i, j) * g.at(i, j)).sum();
                for i in 0..r {
                    out.set(i, j, y.at(i, j) * (g.at(i, j) - dot));
                }
            }
        }
        _ => panic!("softmax axis must be 0 or 1"),
    }
    out
}

pub(crate) fn attn_one_row_forward(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    spans: &[(usize, usize)],
) -> (Tensor, Vec<f64>) {
    let d = q.cols();
    assert_eq!(k.cols(), d);
    assert_eq!(v.cols(), d);
    assert_eq!(q.rows(), spans.len());
    let scale = 1.0 / (d as f64).sqrt();
    let mut out = Tensor::zeros(spans.len(), d);
    let total: usize = spans.iter().map(|s| s.1).sum();
    let mut probs = Vec::with_capacity(total);
    for (s, &(off, len)) in spans.iter().enumerate() {
        assert!(len >= 1, "attention span must be non-empty");
        let qrow = q.row(s);
        let mut z = vec![0.0; len];
        for (t, zt) in z.iter_mut().enumerate() {
            let krow = k.row(off + t);
            *zt = qrow.iter().zip(krow).map(|(a, b)| a * b).sum::<f64>() * scale;
        }
        let mut p = vec![0.0; len];
        softmax_slice(&z, &mut p);
        for (t, pt) in p.iter().enumerate() {
            let vrow = v.row(off + t);
            for j in 0..d {
                let cur = out.at(s, j);
                out.set(s, j, cur + pt * vrow[j]);
            }
        }
        probs.extend_from_slice(&p);
    }
    (out, probs)
}

fn attn_one_row_backward(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    spans: &[(usize, usize)],
    probs: &[f64],
    g: &Tensor,
) -> (Tensor, Tensor, Tensor) {
    let d = q.cols();
    let scale = 1.0 / (d as f64).sqrt();
    let mut dq = Tensor::zeros(q.rows(), d);
    let mut dk = Tensor::zeros(k.rows(), d);
    let mut dv = Tensor::zeros(v.rows(), d);
    let mut base = 0;
    for (s, &(off, len)) in spans.iter().enumerate() {
        let p = &probs[base..base + len];
        base += len;
        let grow = g.row(s);
        let qrow = q.row(s);
        // dv_t += p_t * g ; dp_t = v_t . g
        let mut dp = vec![0.0; len];
        for t in 0..len {
            let vrow = v.row(off + t);
            let mut dot = 0.0;
            for j in 0..d {
                let cur = dv.at(off + t, j);
                dv.set(off + t, j, cur + p[t] * grow[j]);
                dot += vrow[j] * grow[j];
            }
            dp[t] = dot;
        }
        let pdot: f64 = p.iter().zip(dp.iter()).map(|(a, b)| a * b).sum();
        for t in 0..len {
            let dz = p[t] * (dp[t] - pdot) * scale;
            let krow = k.row(off + t);
            for j in 0..d {
                let cur = dq.at(s, j);
                dq.set(s, j, cur + dz * krow[j]);
                let cur = dk.at(off + t, j);
                dk.set(off + t, j, cur + dz * qrow[j]);
            }
        }
    }
    (dq, dk, dv)
}

pub(crate) fn block_agent_attn_forward(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    n: usize,
    delta: f64,
) -> (Tensor, Vec<f64>) {
    let d = q.cols();
    let rows = q.rows();
    assert_eq!(rows % n, 0, "rows not divisible by block size");
    let blocks = rows / n;
    let scale = 1.0 / (d as f64).sqrt();
    let mut out = Tensor::zeros(rows, d);
    let mut alphas = vec![0.0; blocks * n * n];
    for b in 0..blocks {
        let o = b * n;
        for i in 0..n {
            if n == 1 {
                continue;
            }
            // softmax over j != i
            let mut z = Vec::with_capacity(n - 1);
            let mut js = Vec::with_capacity(n - 1);
            let qrow = q.row(o + i);
            for j in 0..n {
                if j == i {
                    continue;
                }
                let krow = k.row(o + j);
                z.push(qrow.iter().zip(krow).map(|(a, c)| a * c).sum::<f64>() * scale);
                js.push(j);
            }
            let mut p = vec![0.0; z.len()];
            softmax_slice(&z, &mut p);
            // threshold, then renormalize survivors
            let survivor_sum: f64 = p.iter().filter(|&&pi| pi >= delta).sum();
            for (t, &j) in js.iter().enumerate() {
                let a = if p[t] >= delta && survivor_sum > 0.0 {
                    p[t] / survivor_sum
                } else {
                    0.0
                };
                alphas[(b * n + i) * n + j] = a;
                if a != 0.0 {
                    let vrow = v.row(o + j);
                    for c in 0..d {
                        let cur = out.at(o + i, c);
                        out.set(o + i, c, cur + a * vrow[c]);
                    }
                }
            }
        }
    }
    (out, alphas)
}

fn block_agent_attn_backward(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    n: usize,
    alphas: &[f64],
    g: &Tensor,
) -> (Tensor, Tensor, Tensor) {
    let d = q.cols();
    let rows = q.rows();
    let blocks = rows / n;
    let scale = 1.0 / (d as f64).sqrt();
    let mut dq = Tensor::zeros(rows, d);
    let mut dk = Tensor::zeros(rows, d);
    let mut dv = Tensor::zeros(rows, d);
    for b in 0..blocks {
        let o = b * n;
        for i in 0..n {
            if n == 1 {
                continue;
            }
            let arow = &alphas[(b * n + i) * n..(b * n + i + 1) * n];
            if arow.iter().all(|&a| a == 0.0) {
                continue;
            }
            let grow = g.row(o + i);
            let qrow = q.row(o + i);
            // d_alpha_j = v_j . g ; dv_j += alpha_j * g
            let mut dalpha = vec![0.0; n];
            for j in 0..n {
                if j == i || arow[j] == 0.0 {
                    continue;
                }
                let vrow = v.row(o + j);
                let mut dot = 0.0;
                for c in 0..d {
                    let cur = dv.at(o + j, c);
                    dv.set(o + j, c, cur + arow[j] * grow[c]);
                    dot += vrow[c] * grow[c];
                }
                dalpha[j] = dot;
            }
            // alpha is a renormalized softmax over surviving entries; treat
            // the survivor set as fixed and push the gradient through the
            // normalized weights.
            let adot: f64 = (0..n).map(|j| arow[j] * dalpha[j]).sum();
            for j in 0..n {
                if j == i || arow[j] == 0.0 {
                    continue;
                }
                let dz = arow[j] * (dalpha[j] - adot) * scale;
                let krow = k.row(o + j);
                for c in 0..d {
                    let cur = dq.at(o + i, c);
                    dq.set(o + i, c, cur + dz * krow[c]);
                    let cur = dk.at(o + j, c);
                    dk.set(o + j, c, cur + dz * qrow[c]);
                }
            }
        }
    }
    (dq, dk, dv)
}

pub(crate) fn step_gather_forward(steps: &[&Tensor], step_of_row: &[usize]) -> Tensor {
    let rows = step_of_row.len();
    let cols = steps[0].cols();
    let mut out = Tensor::zeros(rows, cols);
    for (r, &s) in step_of_row.iter().enumerate() {
        let src = steps[s].row(r);
        for j in 0..cols {
            out.set(r, j, src[j]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_squares_gradient() {
        let mut tape = Tape::new();
        let w = tape.param(Tensor::row_vec(vec![1.0, -2.0, 3.0]));
        let sq = tape.mul(w, w);
        let loss = tape.sum_all(sq);
        let grads = tape.backward(loss);
        let gw = grads.get(w).unwrap();
        assert_eq!(gw.data(), &[2.0, -4.0, 6.0]);
    }

    #[test]
    fn unreachable_param_gets_zero_gradient() {
        let mut tape = Tape::new();
        let w = tape.param(Tensor::row_vec(vec![1.0, 2.0]));
        let unused = tape.param(Tensor::row_vec(vec![5.0]));
        let sq = tape.mul(w, w);
        let loss = tape.sum_all(sq);
        let grads = tape.backward(loss);
        assert!(grads.get(unused).is_none());
        let z = grads.get_or_zero(unused, tape.value(unused));
        assert_eq!(z.data(), &[0.0]);
    }

    #[test]
    fn constant_branch_receives_no_gradient_flow() {
        // Stop-gradient contract: a detached (constant) copy contributes to
        // the loss value but produces no gradient of its own source.
        let mut tape = Tape::new();
        let w = tape.param(Tensor::row_vec(vec![2.0]));
        let detached = tape.constant(tape.value(w).clone());
        let prod = tape.mul(w, detached);
        let loss = tape.sum_all(prod);
        let grads = tape.backward(loss);
        assert_eq!(grads.get(w).unwrap().data(), &[2.0]);
    }

    #[test]
    #[should_panic(expected = "scalar loss")]
    fn backward_rejects_non_scalar_loss() {
        let mut tape = Tape::new();
        let w = tape.param(Tensor::row_vec(vec![1.0, 2.0]));
        tape.backward(w);
    }

    #[test]
    fn matmul_gradient_hand_check() {
        // loss = sum(A @ B); dA = ones @ B^T, dB = A^T @ ones
        let mut tape = Tape::new();
        let a = tape.param(Tensor::from_rows(vec![vec![1.0, 2.0], vec![3.0, 4.0]]));
        let b = tape.param(Tensor::from_rows(vec![vec![5.0], vec![6.0]]));
        let c = tape.matmul(a, b);
        let loss = tape.sum_all(c);
        let grads = tape.backward(loss);
        assert_eq!(grads.get(a).unwrap().data(), &[5.0, 6.0, 5.0, 6.0]);
        assert_eq!(grads.get(b).unwrap().data(), &[4.0, 6.0]);
    }
}
