//! Central finite-difference gradient checking. Every differentiable block
//! in the crate is validated against this oracle.

use rand::Rng;

use super::tensor::Tensor;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub coords_checked: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / numeric.abs().max(1.0)
}

/// Compare analytic gradients against central finite differences of the
/// scalar function `f` evaluated at `at`. Up to `max_coords_per_tensor`
/// coordinates are probed per tensor (all of them when the tensor is small
/// enough).
pub fn check_gradients(
    f: &mut dyn FnMut(&[Tensor]) -> f64,
    at: &[Tensor],
    analytic: &[Tensor],
    eps: f64,
    max_coords_per_tensor: usize,
    rng: &mut impl Rng,
) -> GradCheckReport {
    assert_eq!(at.len(), analytic.len());
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        coords_checked: 0,
    };
    for ti in 0..at.len() {
        let len = at[ti].len();
        let coords: Vec<usize> = if len <= max_coords_per_tensor {
            (0..len).collect()
        } else {
            (0..max_coords_per_tensor)
                .map(|_| rng.gen_range(0..len))
                .collect()
        };
        for ci in coords {
            let numeric = central_difference(f, at, ti, ci, eps);
            let a = analytic[ti].data()[ci];
            let err = relative_error(a, numeric);
            if err > report.max_rel_err {
                report.max_rel_err = err;
            }
            report.coords_checked += 1;
        }
    }
    report
}

pub fn central_difference(
    f: &mut dyn FnMut(&[Tensor]) -> f64,
    at: &[Tensor],
    tensor_idx: usize,
    coord: usize,
    eps: f64,
) -> f64 {
    let mut plus: Vec<Tensor> = at.to_vec();
    plus[tensor_idx].data_mut()[coord] += eps;
    let mut minus: Vec<Tensor> = at.to_vec();
    minus[tensor_idx].data_mut()[coord] -= eps;
    (f(&plus) - f(&minus)) / (2.0 * eps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::tape::Tape;
    use rand::SeedableRng;

    #[test]
    fn quadratic_passes() {
        let at = vec![Tensor::row_vec(vec![0.3, -1.2, 2.0])];
        let mut f = |xs: &[Tensor]| xs[0].data().iter().map(|v| v * v).sum::<f64>();
        let analytic = vec![at[0].affine(2.0, 0.0)];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let rep = check_gradients(&mut f, &at, &analytic, 1e-3, 16, &mut rng);
        assert!(rep.max_rel_err <= 1e-4, "max err {}", rep.max_rel_err);
    }

    #[test]
    fn tape_gru_matches_finite_differences() {
        use crate::numerics::engine::{Engine, TapeEngine};
        use crate::numerics::layers::{gru_step, GruWeights};

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let (din, h) = (3, 4);
        let mut mk = |r: usize, c: usize, rng: &mut rand_chacha::ChaCha8Rng| {
            Tensor::new(vec![r, c], (0..r * c).map(|_| rng.gen_range(-0.8..0.8)).collect())
        };
        let leaves: Vec<Tensor> = vec![
            mk(din, h, &mut rng),
            mk(h, h, &mut rng),
            mk(1, h, &mut rng),
            mk(din, h, &mut rng),
            mk(h, h, &mut rng),
            mk(1, h, &mut rng),
            mk(din, h, &mut rng),
            mk(h, h, &mut rng),
            mk(1, h, &mut rng),
            mk(1, h, &mut rng),  // h_prev
            mk(1, din, &mut rng), // x
        ];

        let run = |ts: &[Tensor]| -> (f64, Option<Vec<Tensor>>) {
            let mut tape = Tape::new();
            let vars: Vec<_> = ts.iter().map(|t| tape.param(t.clone())).collect();
            let mut e = TapeEngine { tape: &mut tape };
            let w = GruWeights {
                wxz: vars[0],
                whz: vars[1],
                bz: vars[2],
                wxr: vars[3],
                whr: vars[4],
                br: vars[5],
                wxc: vars[6],
                whc: vars[7],
                bc: vars[8],
            };
            let out = gru_step(&mut e, &w, &vars[9], &vars[10]);
            let loss = e.tape.sum_all(out);
            let val = e.tape.value(loss).item();
            let grads = tape.backward(loss);
            let gs = vars
                .iter()
                .zip(ts.iter())
                .map(|(v, t)| grads.get_or_zero(*v, t))
                .collect();
            (val, Some(gs))
        };

        let analytic = run(&leaves).1.unwrap();
        let mut f = |ts: &[Tensor]| run(ts).0;
        let rep = check_gradients(&mut f, &leaves, &analytic, 1e-3, 8, &mut rng);
        assert!(rep.max_rel_err <= 1e-4, "gru fd err {}", rep.max_rel_err);
    }
}
