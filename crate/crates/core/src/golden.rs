//! Straight-line reference for one fully-connected layer's training step.
//!
//! Every sum runs from index 0 upward starting at zero, the same order the
//! simulated array accumulates in, so `f64` results are comparable bit for
//! bit as well as integer ones.

use crate::error::{dim_err, Result};
use crate::matrix::{Matrix, Scalar};
use crate::types::ActivationKind;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainStepInputs<T> {
    /// `N x M`.
    pub w: Matrix<T>,
    /// `M x B`.
    pub a_prev: Matrix<T>,
    /// `N x B`.
    pub delta: Matrix<T>,
    /// `M x B`, derivative of the previous layer's activation at its pre-activation.
    pub fprime_z_prev: Matrix<T>,
    pub lr: T,
}

impl<T: Scalar> TrainStepInputs<T> {
    /// Checks the mutual shape constraints and returns `(N, M, B)`.
    pub fn dims(&self) -> Result<(usize, usize, usize)> {
        let (n, m) = self.w.shape();
        let b = self.a_prev.cols();
        if self.a_prev.rows() != m {
            return dim_err(format!("a_prev is {:?}, W is {n}x{m}", self.a_prev.shape()));
        }
        if self.delta.shape() != (n, b) {
            return dim_err(format!(
                "delta is {:?}, expected {n}x{b}",
                self.delta.shape()
            ));
        }
        if self.fprime_z_prev.shape() != (m, b) {
            return dim_err(format!(
                "f'(z_prev) is {:?}, expected {m}x{b}",
                self.fprime_z_prev.shape()
            ));
        }
        Ok((n, m, b))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainStepOutputs<T> {
    /// `M x B`, gradient of the loss with respect to `a_prev`.
    pub grad_a: Matrix<T>,
    /// `M x B`, `grad_a` masked by `f'(z_prev)`.
    pub delta_prev: Matrix<T>,
    /// `M x N`, transposed weight gradient.
    pub grad_w_t: Matrix<T>,
    /// `N x M`.
    pub w_next: Matrix<T>,
}

/// `z = W a_prev`, `a = f(z)`.
pub fn forward<T: Scalar>(
    w: &Matrix<T>,
    a_prev: &Matrix<T>,
    act: ActivationKind,
) -> Result<(Matrix<T>, Matrix<T>)> {
    let (n, m) = w.shape();
    if a_prev.rows() != m {
        return dim_err(format!(
            "forward: W is {n}x{m} but a_prev has {} rows",
            a_prev.rows()
        ));
    }
    let b = a_prev.cols();
    let mut z = Matrix::zeros(n, b);
    for y in 0..n {
        for s in 0..b {
            let mut acc = T::ZERO;
            for x in 0..m {
                acc = acc + w.get(y, x) * a_prev.get(x, s);
            }
            z[(y, s)] = acc;
        }
    }
    let mut a = Matrix::zeros(n, b);
    for y in 0..n {
        for s in 0..b {
            a[(y, s)] = act.apply(z.get(y, s))?;
        }
    }
    Ok((z, a))
}

/// `grad_a = W^T delta`, `delta_prev = grad_a ⊙ f'(z_prev)`.
pub fn backprop_delta<T: Scalar>(
    w: &Matrix<T>,
    delta: &Matrix<T>,
    fprime_z_prev: &Matrix<T>,
) -> Result<(Matrix<T>, Matrix<T>)> {
    let (n, m) = w.shape();
    let b = delta.cols();
    if delta.rows() != n {
        return dim_err(format!(
            "backprop: W is {n}x{m} but delta has {} rows",
            delta.rows()
        ));
    }
    if fprime_z_prev.shape() != (m, b) {
        return dim_err(format!(
            "backprop: f'(z_prev) is {:?}, expected {m}x{b}",
            fprime_z_prev.shape()
        ));
    }
    let mut grad_a = Matrix::zeros(m, b);
    for x in 0..m {
        for s in 0..b {
            let mut acc = T::ZERO;
            for y in 0..n {
                acc = acc + w.get(y, x) * delta.get(y, s);
            }
            grad_a[(x, s)] = acc;
        }
    }
    let delta_prev = grad_a.hadamard(fprime_z_prev)?;
    Ok((grad_a, delta_prev))
}

/// `G^T = a_prev delta^T`, summed over the batch.
pub fn weight_grad_t<T: Scalar>(a_prev: &Matrix<T>, delta: &Matrix<T>) -> Result<Matrix<T>> {
    if a_prev.cols() != delta.cols() {
        return dim_err(format!(
            "weight grad: batch {} vs {}",
            a_prev.cols(),
            delta.cols()
        ));
    }
    let (m, b) = a_prev.shape();
    let n = delta.rows();
    let mut g_t = Matrix::zeros(m, n);
    for x in 0..m {
        for y in 0..n {
            let mut acc = T::ZERO;
            for s in 0..b {
                acc = acc + a_prev.get(x, s) * delta.get(y, s);
            }
            g_t[(x, y)] = acc;
        }
    }
    Ok(g_t)
}

/// Plain SGD: `w_next[y][x] = w[y][x] - lr * grad_w_t[x][y]`.
pub fn sgd_update<T: Scalar>(w: &Matrix<T>, grad_w_t: &Matrix<T>, lr: T) -> Result<Matrix<T>> {
    let (n, m) = w.shape();
    if grad_w_t.shape() != (m, n) {
        return dim_err(format!(
            "update: W is {n}x{m} but grad_w_t is {:?}",
            grad_w_t.shape()
        ));
    }
    Ok(Matrix::from_fn(n, m, |y, x| {
        w.get(y, x) - lr * grad_w_t.get(x, y)
    }))
}

pub fn train_step<T: Scalar>(inputs: &TrainStepInputs<T>) -> Result<TrainStepOutputs<T>> {
    inputs.dims()?;
    let (grad_a, delta_prev) = backprop_delta(&inputs.w, &inputs.delta, &inputs.fprime_z_prev)?;
    let grad_w_t = weight_grad_t(&inputs.a_prev, &inputs.delta)?;
    let w_next = sgd_update(&inputs.w, &grad_w_t, inputs.lr)?;
    Ok(TrainStepOutputs {
        grad_a,
        delta_prev,
        grad_w_t,
        w_next,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{MatrixF, MatrixI};
    use crate::rng::{seeded_matrix, ValueClass};

    fn col(v: &[i64]) -> MatrixI {
        MatrixI::from_vec(v.len(), 1, v.to_vec()).unwrap()
    }

    fn ints(rows: usize, cols: usize, seed: u64) -> MatrixI {
        seeded_matrix(rows, cols, seed, ValueClass::SmallInt).unwrap()
    }

    // Independent oracles: index-free formulations over explicit element lists.
    fn oracle_matmul(a: &MatrixI, b: &MatrixI) -> Vec<Vec<i64>> {
        (0..a.rows())
            .map(|i| {
                (0..b.cols())
                    .map(|j| (0..a.cols()).map(|k| a.get(i, k) * b.get(k, j)).sum())
                    .collect()
            })
            .collect()
    }

    fn rows_of(m: &MatrixI) -> Vec<Vec<i64>> {
        (0..m.rows())
            .map(|r| (0..m.cols()).map(|c| m.get(r, c)).collect())
            .collect()
    }

    #[test]
    fn forward_identity() {
        let (z, a) = forward(
            &MatrixI::identity(2),
            &col(&[3, 4]),
            ActivationKind::Identity,
        )
        .unwrap();
        assert_eq!(z, col(&[3, 4]));
        assert_eq!(a, col(&[3, 4]));
    }

    #[test]
    fn forward_small() {
        let w = MatrixI::from_rows(&[vec![1, 2], vec![3, 4]]).unwrap();
        let (z, _) = forward(&w, &col(&[1, 1]), ActivationKind::Identity).unwrap();
        assert_eq!(z, col(&[3, 7]));
    }

    #[test]
    fn forward_matches_triple_loop() {
        let w = ints(5, 7, 42);
        let a = ints(7, 3, 43);
        let (z, _) = forward(&w, &a, ActivationKind::Identity).unwrap();
        assert_eq!(rows_of(&z), oracle_matmul(&w, &a));
    }

    #[test]
    fn forward_applies_relu() {
        let w = MatrixI::from_rows(&[vec![1, -2]]).unwrap();
        let (z, a) = forward(&w, &col(&[1, 1]), ActivationKind::Relu).unwrap();
        assert_eq!(z.get(0, 0), -1);
        assert_eq!(a.get(0, 0), 0);
    }

    #[test]
    fn forward_shape_mismatch() {
        assert!(forward(&ints(2, 3, 1), &ints(2, 1, 2), ActivationKind::Identity).is_err());
    }

    #[test]
    fn backprop_identity() {
        let (_, dp) = backprop_delta(&MatrixI::identity(2), &col(&[1, 2]), &col(&[1, 1])).unwrap();
        assert_eq!(dp, col(&[1, 2]));
    }

    #[test]
    fn backprop_zero_fprime_annihilates() {
        let (_, dp) =
            backprop_delta(&ints(3, 4, 5), &ints(3, 2, 6), &MatrixI::zeros(4, 2)).unwrap();
        assert!(dp.is_zero());
    }

    #[test]
    fn backprop_matches_transpose_then_hadamard() {
        let w = ints(4, 6, 3);
        let d = ints(4, 2, 4);
        let fp = ints(6, 2, 5);
        let (ga, dp) = backprop_delta(&w, &d, &fp).unwrap();
        let expect = oracle_matmul(&w.transpose(), &d);
        assert_eq!(rows_of(&ga), expect);
        for (x, row) in expect.iter().enumerate() {
            for (s, v) in row.iter().enumerate() {
                assert_eq!(dp.get(x, s), v * fp.get(x, s));
            }
        }
    }

    #[test]
    fn backprop_shape_errors() {
        assert!(backprop_delta(&ints(3, 4, 1), &ints(2, 2, 1), &ints(4, 2, 1)).is_err());
        assert!(backprop_delta(&ints(3, 4, 1), &ints(3, 2, 1), &ints(4, 3, 1)).is_err());
    }

    #[test]
    fn weight_grad_rank_one() {
        let g = weight_grad_t(&col(&[3, 4]), &col(&[1, 2])).unwrap();
        assert_eq!(g, MatrixI::from_rows(&[vec![3, 6], vec![4, 8]]).unwrap());
        assert_eq!(
            g.transpose(),
            MatrixI::from_rows(&[vec![3, 4], vec![6, 8]]).unwrap()
        );
    }

    #[test]
    fn weight_grad_zero_delta() {
        assert!(weight_grad_t(&ints(3, 2, 1), &MatrixI::zeros(4, 2))
            .unwrap()
            .is_zero());
    }

    #[test]
    fn weight_grad_batch_is_sum_of_rank_one_terms() {
        let a = ints(3, 2, 11);
        let d = ints(4, 2, 12);
        let g = weight_grad_t(&a, &d).unwrap();
        let g0 = weight_grad_t(&a.block(0, 0, 3, 1), &d.block(0, 0, 4, 1)).unwrap();
        let g1 = weight_grad_t(&a.block(0, 1, 3, 1), &d.block(0, 1, 4, 1)).unwrap();
        assert_eq!(g, g0.add(&g1).unwrap());
    }

    #[test]
    fn weight_grad_batch_mismatch() {
        assert!(weight_grad_t(&ints(3, 2, 1), &ints(4, 3, 1)).is_err());
    }

    #[test]
    fn sgd_zero_lr_is_identity() {
        let w = ints(3, 4, 1);
        assert_eq!(sgd_update(&w, &ints(4, 3, 2), 0).unwrap(), w);
    }

    #[test]
    fn sgd_from_zero_weights() {
        let g = ints(4, 3, 2);
        let w1 = sgd_update(&MatrixI::zeros(3, 4), &g, 1).unwrap();
        for y in 0..3 {
            for x in 0..4 {
                assert_eq!(w1.get(y, x), -g.get(x, y));
            }
        }
    }

    #[test]
    fn sgd_matches_scalar_loop() {
        let w: MatrixF = seeded_matrix(3, 5, 9, ValueClass::UnitFloat).unwrap();
        let g: MatrixF = seeded_matrix(5, 3, 10, ValueClass::UnitFloat).unwrap();
        let out = sgd_update(&w, &g, 0.25).unwrap();
        let (wv, gv) = (w.data(), g.data());
        for (i, v) in out.data().iter().enumerate() {
            let (y, x) = (i / 5, i % 5);
            assert_eq!(*v, wv[y * 5 + x] - 0.25 * gv[x * 3 + y]);
        }
    }

    #[test]
    fn sgd_shape_mismatch() {
        assert!(sgd_update(&ints(3, 4, 1), &ints(3, 4, 1), 1).is_err());
    }

    #[test]
    fn train_step_zero_delta() {
        let inputs = TrainStepInputs {
            w: ints(3, 4, 1),
            a_prev: ints(4, 2, 2),
            delta: MatrixI::zeros(3, 2),
            fprime_z_prev: ints(4, 2, 3),
            lr: 1,
        };
        let out = train_step(&inputs).unwrap();
        assert!(out.delta_prev.is_zero() && out.grad_w_t.is_zero());
        assert_eq!(out.w_next, inputs.w);
    }

    #[test]
    fn train_step_scalar() {
        let s = |v: f64| MatrixF::from_vec(1, 1, vec![v]).unwrap();
        let out = train_step(&TrainStepInputs {
            w: s(2.0),
            a_prev: s(3.0),
            delta: s(5.0),
            fprime_z_prev: s(1.0),
            lr: 0.1,
        })
        .unwrap();
        assert_eq!(out.grad_a, s(10.0));
        assert_eq!(out.grad_w_t, s(15.0));
        assert!((out.w_next.get(0, 0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn train_step_is_composition() {
        let inputs = TrainStepInputs {
            w: ints(6, 5, 21),
            a_prev: ints(5, 4, 22),
            delta: ints(6, 4, 23),
            fprime_z_prev: ints(5, 4, 24),
            lr: 2,
        };
        let out = train_step(&inputs).unwrap();
        let (ga, dp) = backprop_delta(&inputs.w, &inputs.delta, &inputs.fprime_z_prev).unwrap();
        let gt = weight_grad_t(&inputs.a_prev, &inputs.delta).unwrap();
        assert_eq!(out.grad_a, ga);
        assert_eq!(out.delta_prev, dp);
        assert_eq!(out.w_next, sgd_update(&inputs.w, &gt, 2).unwrap());
        assert_eq!(out.grad_w_t, gt);
    }

    #[test]
    fn train_step_rejects_inconsistent_shapes() {
        let inputs = TrainStepInputs {
            w: ints(6, 5, 21),
            a_prev: ints(5, 4, 22),
            delta: ints(6, 3, 23),
            fprime_z_prev: ints(5, 4, 24),
            lr: 2,
        };
        assert!(train_step(&inputs).is_err());
    }
}
