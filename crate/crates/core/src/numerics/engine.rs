//! A single forward implementation serves both training (taped, with
//! gradients) and inference / target evaluation (plain values) through this
//! small engine abstraction.

use super::tape::{attn_one_row_forward, block_agent_attn_forward, step_gather_forward, Tape, Var};
use super::tensor::{elu, sigmoid, Tensor};

pub trait Engine {
    type V: Clone;

    fn constant(&mut self, t: Tensor) -> Self::V;
    fn matmul(&mut self, a: &Self::V, b: &Self::V) -> Self::V;
    fn add(&mut self, a: &Self::V, b: &Self::V) -> Self::V;
    fn sub(&mut self, a: &Self::V, b: &Self::V) -> Self::V;
    fn mul(&mut self, a: &Self::V, b: &Self::V) -> Self::V;
    fn add_row(&mut self, a: &Self::V, row: &Self::V) -> Self::V;
    fn affine(&mut self, a: &Self::V, k: f64, c: f64) -> Self::V;
    fn sigmoid(&mut self, a: &Self::V) -> Self::V;
    fn tanh(&mut self, a: &Self::V) -> Self::V;
    fn elu(&mut self, a: &Self::V) -> Self::V;
    fn abs(&mut self, a: &Self::V) -> Self::V;
    fn concat_cols(&mut self, parts: &[Self::V]) -> Self::V;
    fn reshape(&mut self, a: &Self::V, shape: Vec<usize>) -> Self::V;
    fn pick_per_row(&mut self, a: &Self::V, idx: Vec<usize>) -> Self::V;
    fn sum_rows(&mut self, a: &Self::V) -> Self::V;
    fn mean_all(&mut self, a: &Self::V) -> Self::V;
    fn rowwise_bmm(&mut self, q: &Self::V, w: &Self::V, n: usize, h: usize) -> Self::V;
    fn attn_one_row(&mut self, q: &Self::V, k: &Self::V, v: &Self::V, spans: Vec<(usize, usize)>) -> Self::V;
    fn block_agent_attn(&mut self, q: &Self::V, k: &Self::V, v: &Self::V, n: usize, delta: f64) -> Self::V;
    fn step_gather(&mut self, steps: &[Self::V], step_of_row: Vec<usize>) -> Self::V;
    fn read(&self, v: &Self::V) -> Tensor;
}

/// Engine that records onto an autodiff tape.
pub struct TapeEngine<'t> {
    pub tape: &'t mut Tape,
}

impl<'t> Engine for TapeEngine<'t> {
    type V = Var;

    fn constant(&mut self, t: Tensor) -> Var {
        self.tape.constant(t)
    }
    fn matmul(&mut self, a: &Var, b: &Var) -> Var {
        self.tape.matmul(*a, *b)
    }
    fn add(&mut self, a: &Var, b: &Var) -> Var {
        self.tape.add(*a, *b)
    }
    fn sub(&mut self, a: &Var, b: &Var) -> Var {
        self.tape.sub(*a, *b)
    }
    fn mul(&mut self, a: &Var, b: &Var) -> Var {
        self.tape.mul(*a, *b)
    }
    fn add_row(&mut self, a: &Var, row: &Var) -> Var {
        self.tape.add_row(*a, *row)
    }
    fn affine(&mut self, a: &Var, k: f64, c: f64) -> Var {
        self.tape.affine(*a, k, c)
    }
    fn sigmoid(&mut self, a: &Var) -> Var {
        self.tape.sigmoid(*a)
    }
    fn tanh(&mut self, a: &Var) -> Var {
        self.tape.tanh(*a)
    }
    fn elu(&mut self, a: &Var) -> Var {
        self.tape.elu(*a)
    }
    fn abs(&mut self, a: &Var) -> Var {
        self.tape.abs(*a)
    }
    fn concat_cols(&mut self, parts: &[Var]) -> Var {
        self.tape.concat_cols(parts)
    }
    fn reshape(&mut self, a: &Var, shape: Vec<usize>) -> Var {
        self.tape.reshape(*a, shape)
    }
    fn pick_per_row(&mut self, a: &Var, idx: Vec<usize>) -> Var {
        self.tape.pick_per_row(*a, idx)
    }
    fn sum_rows(&mut self, a: &Var) -> Var {
        self.tape.sum_rows(*a)
    }
    fn mean_all(&mut self, a: &Var) -> Var {
        self.tape.mean_all(*a)
    }
    fn rowwise_bmm(&mut self, q: &Var, w: &Var, n: usize, h: usize) -> Var {
        self.tape.rowwise_bmm(*q, *w, n, h)
    }
    fn attn_one_row(&mut self, q: &Var, k: &Var, v: &Var, spans: Vec<(usize, usize)>) -> Var {
        self.tape.attn_one_row(*q, *k, *v, spans)
    }
    fn block_agent_attn(&mut self, q: &Var, k: &Var, v: &Var, n: usize, delta: f64) -> Var {
        self.tape.block_agent_attn(*q, *k, *v, n, delta)
    }
    fn step_gather(&mut self, steps: &[Var], step_of_row: Vec<usize>) -> Var {
        self.tape.step_gather(steps, step_of_row)
    }
    fn read(&self, v: &Var) -> Tensor {
        self.tape.value(*v).clone()
    }
}

/// Engine that evaluates values directly, without recording. Used for
/// rollouts and target-network evaluation, where no gradients flow.
#[derive(Default)]
pub struct ValueEngine;

impl Engine for ValueEngine {
    type V = Tensor;

    fn constant(&mut self, t: Tensor) -> Tensor {
        t
    }
    fn matmul(&mut self, a: &Tensor, b: &Tensor) -> Tensor {
        a.matmul(b).unwrap_or_else(|e| panic!("{e}"))
    }
    fn add(&mut self, a: &Tensor, b: &Tensor) -> Tensor {
        a.add(b).unwrap_or_else(|e| panic!("{e}"))
    }
    fn sub(&mut self, a: &Tensor, b: &Tensor) -> Tensor {
        a.sub(b).unwrap_or_else(|e| panic!("{e}"))
    }
    fn mul(&mut self, a: &Tensor, b: &Tensor) -> Tensor {
        a.mul(b).unwrap_or_else(|e| panic!("{e}"))
    }
    fn add_row(&mut self, a: &Tensor, row: &Tensor) -> Tensor {
        a.add_row(row).unwrap_or_else(|e| panic!("{e}"))
    }
    fn affine(&mut self, a: &Tensor, k: f64, c: f64) -> Tensor {
        a.affine(k, c)
    }
    fn sigmoid(&mut self, a: &Tensor) -> Tensor {
        a.map(sigmoid)
    }
    fn tanh(&mut self, a: &Tensor) -> Tensor {
        a.map(f64::tanh)
    }
    fn elu(&mut self, a: &Tensor) -> Tensor {
        a.map(elu)
    }
    fn abs(&mut self, a: &Tensor) -> Tensor {
        a.map(f64::abs)
    }
    fn concat_cols(&mut self, parts: &[Tensor]) -> Tensor {
        let refs: Vec<&Tensor> = parts.iter().collect();
        Tensor::concat_cols(&refs).unwrap_or_else(|e| panic!("{e}"))
    }
    fn reshape(&mut self, a: &Tensor, shape: Vec<usize>) -> Tensor {
        a.reshape(shape)
    }
    fn pick_per_row(&mut self, a: &Tensor, idx: Vec<usize>) -> Tensor {
        a.pick_per_row(&idx)
    }
    fn sum_rows(&mut self, a: &Tensor) -> Tensor {
        a.sum_rows()
    }
    fn mean_all(&mut self, a: &Tensor) -> Tensor {
        a.mean_all()
    }
    fn rowwise_bmm(&mut self, q: &Tensor, w: &Tensor, n: usize, h: usize) -> Tensor {
        q.rowwise_bmm(w, n, h)
    }
    fn attn_one_row(&mut self, q: &Tensor, k: &Tensor, v: &Tensor, spans: Vec<(usize, usize)>) -> Tensor {
        attn_one_row_forward(q, k, v, &spans).0
    }
    fn block_agent_attn(&mut self, q: &Tensor, k: &Tensor, v: &Tensor, n: usize, delta: f64) -> Tensor {
        block_agent_attn_forward(q, k, v, n, delta).0
    }
    fn step_gather(&mut self, steps: &[Tensor], step_of_row: Vec<usize>) -> Tensor {
        let refs: Vec<&Tensor> = steps.iter().collect();
        step_gather_forward(&refs, &step_of_row)
    }
    fn read(&self, v: &Tensor) -> Tensor {
        v.clone()
    }
}
