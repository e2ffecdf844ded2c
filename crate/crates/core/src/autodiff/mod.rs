//! Reverse-mode automatic differentiation over dense row-major tensors.
//!
//! A [`Tape`] records every primitive applied during a forward pass; calling
//! [`Tape::backward`] replays the records in reverse. Trainable tensors live in
//! a [`ParamStore`] and are brought onto a tape with [`Tape::param`].

mod gradcheck;
mod params;
mod scalar;
mod tape;

pub use gradcheck::{finite_difference_check, GradCheckReport, MAX_COORDS_PER_TENSOR, REL_ERR_FLOOR, RETRY_ABOVE};
pub use params::{Init, Param, ParamId, ParamStore};
pub use scalar::Scalar;
pub use tape::{sigmoid, Mask, Mode, Tape, Tensor, Var, LAYER_NORM_EPS, MASK_SENTINEL};


#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        let mut t = Tape::<f64>::eval();
        let x = t.constant(&[2], vec![0.0, 0.0]).unwrap();
        let y = t.softmax(x, None).unwrap();
        assert_eq!(t.values(y), &[0.5, 0.5]);
    }

    #[test]
    fn sigmoid_at_zero() {
        let mut t = Tape::<f64>::eval();
        let x = t.constant(&[1], vec![0.0]).unwrap();
        let y = t.sigmoid(x);
        assert_eq!(t.values(y), &[0.5]);
    }

    #[test]
    fn layer_norm_of_constant_row_is_bias() {
        let mut t = Tape::<f64>::eval();
        let x = t.constant(&[3], vec![1.0, 1.0, 1.0]).unwrap();
        let g = t.constant(&[3], vec![1.0; 3]).unwrap();
        let b = t.constant(&[3], vec![0.0; 3]).unwrap();
        let y = t.layer_norm(x, g, b).unwrap();
        assert_eq!(t.values(y), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn softmax_rejects_fully_masked_row() {
        let mut t = Tape::<f64>::eval();
        let x = t.constant(&[1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let mask = Mask::from_fn(1, 2, 2, |_, i, _| i == 0);
        let err = t.softmax(x, Some(&mask)).unwrap_err();
        assert!(matches!(err, Error::AllMasked { row: 1, .. }));
    }

    #[test]
    fn shape_errors_name_the_primitive() {
        let mut t = Tape::<f64>::eval();
        let a = t.constant(&[2, 3], vec![0.0; 6]).unwrap();
        let b = t.constant(&[2, 3], vec![0.0; 6]).unwrap();
        match t.matmul(a, b).unwrap_err() {
            Error::Shape { op, left, right } => {
                assert_eq!(op, "matmul");
                assert_eq!(left, vec![2, 3]);
                assert_eq!(right, vec![2, 3]);
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn grad_of_square_sum() {
        let mut store = ParamStore::<f64>::new();
        let x = store.insert("x", vec![1], vec![3.0]);
        let mut t = Tape::eval_with_grads();
        let xv = t.param(&store, x);
        let sq = t.mul(xv, xv).unwrap();
        let loss = t.sum(sq);
        t.backward(loss).unwrap();
        assert_eq!(t.grad(xv).unwrap(), &[6.0]);
    }

    #[test]
    fn grad_of_sigmoid_at_zero() {
        let mut t = Tape::<f64>::eval_with_grads();
        let x = t.leaf(&[1], vec![0.0], true).unwrap();
        let s = t.sigmoid(x);
        let loss = t.sum(s);
        t.backward(loss).unwrap();
        assert_eq!(t.grad(x).unwrap(), &[0.25]);
    }

    #[test]
    fn backward_rejects_non_scalar_and_second_call() {
        let mut t = Tape::<f64>::eval_with_grads();
        let x = t.leaf(&[2], vec![1.0, 2.0], true).unwrap();
        assert!(matches!(t.backward(x), Err(Error::NonScalarLoss(_))));
        let loss = t.sum(x);
        t.backward(loss).unwrap();
        assert!(matches!(t.backward(loss), Err(Error::BackwardTwice)));
    }

    #[test]
    fn dropout_is_identity_in_eval_mode() {
        let mut t = Tape::<f32>::eval();
        let x = t.constant(&[4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = t.dropout(x, 0.5);
        assert_eq!(t.values(y), t.values(x));
    }

    #[test]
    fn dropout_in_train_mode_is_inverted() {
        let mut t = Tape::<f64>::train(3);
        let x = t.constant(&[1000], vec![1.0; 1000]).unwrap();
        let y = t.dropout(x, 0.25);
        let vals = t.values(y);
        assert!(vals.iter().all(|&v| v == 0.0 || (v - 1.0 / 0.75).abs() < 1e-12));
        let kept = vals.iter().filter(|&&v| v > 0.0).count();
        assert!((650..850).contains(&kept), "kept {kept}");
    }

    #[test]
    fn square_gradcheck() {
        let mut store = ParamStore::<f64>::new();
        let x = store.insert("x", vec![1], vec![2.0]);
        let report = finite_difference_check(
            &store,
            |t, s| {
                let v = t.param(s, x);
                let sq = t.mul(v, v)?;
                Ok(t.sum(sq))
            },
            1e-4,
            0,
        )
        .unwrap();
        let (_, _, analytic, numeric) = report.worst.clone().unwrap();
        assert_eq!(analytic, 4.0);
        assert!((numeric - 4.0).abs() < 1e-8);
        assert!(report.max_rel_err < 1e-8);
    }

    #[test]
    fn kink_inside_step_is_refined() {
        let mut store = ParamStore::<f64>::new();
        // 3e-5 from the ReLU kink: the 1e-4 central difference gives 0.65
        let x = store.insert("x", vec![1], vec![3e-5]);
        let relu_sum = |t: &mut Tape<f64>, s: &ParamStore<f64>| {
            let v = t.param(s, x);
            let r = t.relu(v);
            Ok(t.sum(r))
        };
        let report = finite_difference_check(&store, relu_sum, 1e-4, 0).unwrap();
        assert!(report.max_rel_err < 1e-8, "{report:?}");
    }

    #[test]
    fn wrong_gradient_survives_refinement() {
        let mut store = ParamStore::<f64>::new();
        let x = store.insert("x", vec![1], vec![0.7]);
        // the first call is the differentiated one: 1.01·x², later calls x²
        let calls = std::cell::Cell::new(0);
        let report = finite_difference_check(
            &store,
            |t, s| {
                calls.set(calls.get() + 1);
                let v = t.param(s, x);
                let sq = t.mul(v, v)?;
                let k = if calls.get() == 1 { 1.01 } else { 1.0 };
                let sq = t.scale(sq, k);
                Ok(t.sum(sq))
            },
            1e-4,
            0,
        )
        .unwrap();
        assert!(report.max_rel_err > 5e-3, "{report:?}");
    }

    #[test]
    fn constant_function_has_zero_error() {
        let mut store = ParamStore::<f64>::new();
        let x = store.insert("x", vec![3], vec![1.0, -2.0, 0.5]);
        let report = finite_difference_check(
            &store,
            |t, s| {
                let _ = t.param(s, x);
                t.constant(&[], vec![7.0])
            },
            1e-4,
            0,
        )
        .unwrap();
        assert_eq!(report.max_rel_err, 0.0);
        assert_eq!(report.coords_checked, 3);
    }

    /// Two-layer perceptron touching matmul, broadcast add, relu, sigmoid,
    /// softmax, concat and cross-entropy.
    #[test]
    fn mlp_gradients_match_finite_differences() {
        let d = 8;
        let mut r = rng(11);
        let mut store = ParamStore::<f64>::new();
        let w1 = store.add("w1", &[d, d], Init::Xavier { fan_in: d, fan_out: d }, &mut r);
        let b1 = store.add("b1", &[d], Init::Normal { std: 0.1 }, &mut r);
        let w2 = store.add("w2", &[2 * d, 5], Init::Xavier { fan_in: 2 * d, fan_out: 5 }, &mut r);
        let x = store.add("x", &[4, d], Init::Normal { std: 1.0 }, &mut r);
        let report = finite_difference_check(
            &store,
            |t, s| {
                let (w1, b1, w2, x) = (t.param(s, w1), t.param(s, b1), t.param(s, w2), t.param(s, x));
                let h = t.matmul(x, w1)?;
                let h = t.add(h, b1)?;
                let a = t.relu(h);
                let g = t.sigmoid(h);
                let cat = t.concat(a, g)?;
                let logits = t.matmul(cat, w2)?;
                let p = t.softmax(logits, None)?;
                let ce = t.cross_entropy(logits, &[0, 3, 1, 4], None, 0.1)?;
                let m = t.mean(p);
                let sc = t.scale(m, 0.3);
                let ce1 = t.reshape(ce, &[1])?;
                let sc1 = t.reshape(sc, &[1])?;
                let total = t.add(ce1, sc1)?;
                Ok(t.sum(total))
            },
            1e-4,
            1,
        )
        .unwrap();
        assert!(report.max_rel_err < 1e-4, "{report:?}");
    }

    #[test]
    fn gradients_accumulate_over_reuse() {
        let mut store = ParamStore::<f64>::new();
        let x = store.insert("x", vec![2], vec![1.5, -0.5]);
        let single = {
            let mut t = Tape::eval_with_grads();
            let v = t.param(&store, x);
            let s = t.sigmoid(v);
            let l = t.sum(s);
            t.backward(l).unwrap();
            t.grad(v).unwrap().to_vec()
        };
        let mut t = Tape::eval_with_grads();
        let v = t.param(&store, x);
        let mut total = None;
        for _ in 0..3 {
            let s = t.sigmoid(v);
            let l = t.sum(s);
            let l = t.reshape(l, &[1]).unwrap();
            total = Some(match total {
                None => l,
                Some(acc) => t.add(acc, l).unwrap(),
            });
        }
        let loss = t.sum(total.unwrap());
        t.backward(loss).unwrap();
        for (g, s) in t.grad(v).unwrap().iter().zip(&single) {
            assert!((g - 3.0 * s).abs() < 1e-12);
        }
    }

    #[test]
    fn batched_matmul_and_heads_gradcheck() {
        let mut r = rng(5);
        let mut store = ParamStore::<f64>::new();
        let q = store.add("q", &[2, 3, 4], Init::Normal { std: 1.0 }, &mut r);
        let k = store.add("k", &[2, 5, 4], Init::Normal { std: 1.0 }, &mut r);
        let mask = Mask::from_fn(2, 3, 5, |b, _, j| j < 5 - b);
        let report = finite_difference_check(
            &store,
            |t, s| {
                let q = t.param(s, q);
                let k = t.param(s, k);
                let qh = t.split_heads(q, 2)?;
                let kh = t.split_heads(k, 2)?;
                let scores = t.matmul_nt(qh, kh)?;
                let p = t.softmax(scores, Some(&mask))?;
                let o = t.matmul(p, kh)?;
                let merged = t.merge_heads(o)?;
                let sq = t.mul(merged, merged)?;
                Ok(t.sum(sq))
            },
            1e-4,
            2,
        )
        .unwrap();
        assert!(report.max_rel_err < 1e-4, "{report:?}");
    }

    proptest! {
        #[test]
        fn softmax_rows_are_stochastic(
            logits in proptest::collection::vec(-30.0f64..30.0, 12),
            visible in proptest::collection::vec(any::<bool>(), 12),
        ) {
            // 3 rows of 4; force one visible entry per row
            let mask = Mask::from_fn(1, 3, 4, |_, i, j| visible[i * 4 + j] || j == i);
            let mut t = Tape::<f64>::eval();
            let x = t.constant(&[1, 3, 4], logits).unwrap();
            let y = t.softmax(x, Some(&mask)).unwrap();
            for row in t.values(y).chunks(4) {
                let s: f64 = row.iter().sum();
                prop_assert!((s - 1.0).abs() < 1e-6);
                prop_assert!(row.iter().all(|&v| v >= 0.0));
            }
        }
    }
}
