//! Standard layers written against the engine abstraction.

use super::engine::Engine;

/// Weights of a gated recurrent unit cell.
pub struct GruWeights<V> {
    pub wxz: V,
    pub whz: V,
    pub bz: V,
    pub wxr: V,
    pub whr: V,
    pub br: V,
    pub wxc: V,
    pub whc: V,
    pub bc: V,
}

/// One GRU update: h' = (1 - z) * h + z * c with
/// z = sigmoid(x Wxz + h Whz + bz), r = sigmoid(x Wxr + h Whr + br),
/// c = tanh(x Wxc + (r * h) Whc + bc).
pub fn gru_step<E: Engine>(e: &mut E, w: &GruWeights<E::V>, h: &E::V, x: &E::V) -> E::V {
    let z = {
        let a = e.matmul(x, &w.wxz);
        let b = e.matmul(h, &w.whz);
        let s = e.add(&a, &b);
        let s = e.add_row(&s, &w.bz);
        e.sigmoid(&s)
    };
    let r = {
        let a = e.matmul(x, &w.wxr);
        let b = e.matmul(h, &w.whr);
        let s = e.add(&a, &b);
        let s = e.add_row(&s, &w.br);
        e.sigmoid(&s)
    };
    let c = {
        let rh = e.mul(&r, h);
        let a = e.matmul(x, &w.wxc);
        let b = e.matmul(&rh, &w.whc);
        let s = e.add(&a, &b);
        let s = e.add_row(&s, &w.bc);
        e.tanh(&s)
    };
    let zc = e.mul(&z, &c);
    let zh = e.mul(&z, h);
    let keep = e.sub(h, &zh);
    e.add(&keep, &zc)
}

pub struct LinearWeights<V> {
    pub w: V,
    pub b: V,
}

pub fn linear<E: Engine>(e: &mut E, l: &LinearWeights<E::V>, x: &E::V) -> E::V {
    let y = e.matmul(x, &l.w);
    e.add_row(&y, &l.b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::engine::ValueEngine;
    use crate::numerics::tensor::Tensor;

    fn zero_gru(in_dim: usize, hidden: usize) -> GruWeights<Tensor> {
        GruWeights {
            wxz: Tensor::zeros(in_dim, hidden),
            whz: Tensor::zeros(hidden, hidden),
            bz: Tensor::zeros(1, hidden),
            wxr: Tensor::zeros(in_dim, hidden),
            whr: Tensor::zeros(hidden, hidden),
            br: Tensor::zeros(1, hidden),
            wxc: Tensor::zeros(in_dim, hidden),
            whc: Tensor::zeros(hidden, hidden),
            bc: Tensor::zeros(1, hidden),
        }
    }

    #[test]
    fn zero_weights_zero_hidden_stays_zero() {
        // With all-zero weights the update gate is 0.5 and the candidate is
        // tanh(0) = 0, so a zero hidden state stays exactly zero.
        let mut e = ValueEngine;
        let w = zero_gru(3, 4);
        let h = Tensor::zeros(1, 4);
        let x = Tensor::row_vec(vec![1.0, -2.0, 0.5]);
        let h2 = gru_step(&mut e, &w, &h, &x);
        assert_eq!(h2.data(), &[0.0; 4]);
    }

    #[test]
    fn gru_is_pure() {
        let mut e = ValueEngine;
        let mut w = zero_gru(2, 3);
        w.wxz = Tensor::from_rows(vec![vec![0.1, 0.2, -0.3], vec![0.0, 0.4, 0.1]]);
        w.whc = Tensor::from_rows(vec![
            vec![0.5, 0.0, 0.0],
            vec![0.0, 0.5, 0.0],
            vec![0.0, 0.0, 0.5],
        ]);
        let h = Tensor::row_vec(vec![0.3, -0.2, 0.9]);
        let x = Tensor::row_vec(vec![1.0, 2.0]);
        let a = gru_step(&mut e, &w, &h, &x);
        let b = gru_step(&mut e, &w, &h, &x);
        assert_eq!(a, b);
    }
}
