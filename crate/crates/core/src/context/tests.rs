use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::autodiff::{finite_difference_check, Init, Mask, ParamStore, Tape};
use crate::data::Example;
use crate::special::{BOS, EOS};
use crate::transformer::{model_context, model_source, Batch, ContextMode, Model, ModelConfig};

fn gated(seed: u64) -> Model<f64> {
    Model::new(ModelConfig::tiny(24, 24, ContextMode::Gated), seed).unwrap()
}

fn memory(model: &Model<f64>, src: &[usize], ctx: &[usize]) -> Vec<f64> {
    let mut tape = Tape::eval();
    let enc = model
        .encode_batch(
            &mut tape,
            &Padded::from_seqs(&[model_source(src)]),
            &Padded::from_seqs(&[model_context(ctx)]),
        )
        .unwrap();
    tape.values(enc.memory).to_vec()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn saturate_gate(model: &mut Model<f64>, bias: f64) {
    let gate = model.gated_top.as_ref().unwrap().gate.clone();
    let d = model.config.d_model;
    model.params.set_value(gate.weight, vec![0.0; 2 * d * d]).unwrap();
    model.params.set_value(gate.bias, vec![bias; d]).unwrap();
}

fn fusion_fixture(d: usize, w: Vec<f64>, b: Vec<f64>, cs: Vec<f64>, cc: Vec<f64>) -> (Vec<f64>, Vec<f64>) {
    let mut store = ParamStore::new();
    let gate = GateParams {
        weight: store.insert("g.w", vec![2 * d, d], w),
        bias: store.insert("g.b", vec![d], b),
    };
    let n = cs.len() / d;
    let mut tape = Tape::eval();
    let s = tape.constant(&[n, d], cs).unwrap();
    let c = tape.constant(&[n, d], cc).unwrap();
    let (out, g) = gated_fusion(&mut tape, &store, &gate, s, c).unwrap();
    (tape.values(out).to_vec(), tape.values(g).to_vec())
}

#[test]
fn saturated_gate_passes_self_branch() {
    let (c, g) = fusion_fixture(3, vec![0.0; 18], vec![40.0; 3], vec![0.5, -1.0, 2.0], vec![9.0, 9.0, 9.0]);
    assert!(g.iter().all(|&v| v > 1.0 - 1e-12));
    assert!(max_abs_diff(&c, &[0.5, -1.0, 2.0]) < 1e-5);
}

#[test]
fn half_gate_averages() {
    let (c, g) = fusion_fixture(4, vec![0.0; 32], vec![0.0; 4], vec![1.0; 8], vec![0.0; 8]);
    assert!(g.iter().all(|&v| v == 0.5));
    assert!(c.iter().all(|&v| v == 0.5));
}

/// d = 4, one position: `g = σ([s; c] W + b)`, `out = g s + (1 − g) c`,
/// evaluated coordinate by coordinate.
#[test]
fn hand_computed_gate() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-1.0..1.0)).collect() };
    let (w, b, s, c) = (draw(32), draw(4), draw(4), draw(4));
    let (out, g) = fusion_fixture(4, w.clone(), b.clone(), s.clone(), c.clone());
    let input: Vec<f64> = s.iter().chain(&c).copied().collect();
    for j in 0..4 {
        let z: f64 = b[j] + (0..8).map(|i| input[i] * w[i * 4 + j]).sum::<f64>();
        let gj = 1.0 / (1.0 + (-z).exp());
        assert!((g[j] - gj).abs() < 1e-6);
        assert!((out[j] - (gj * s[j] + (1.0 - gj) * c[j])).abs() < 1e-6);
    }
}

#[test]
fn fusion_rejects_width_mismatch() {
    let mut store = ParamStore::<f64>::new();
    let gate = GateParams::new(&mut store, "g", 4, &mut ChaCha8Rng::seed_from_u64(0));
    let mut tape = Tape::eval();
    let s = tape.constant(&[2, 4], vec![0.0; 8]).unwrap();
    let c = tape.constant(&[2, 3], vec![0.0; 6]).unwrap();
    assert!(gated_fusion(&mut tape, &store, &gate, s, c).is_err());
}

proptest! {
    #[test]
    fn fused_output_is_convex(
        seed in 0u64..10_000,
        cs in proptest::collection::vec(-5.0f64..5.0, 12),
        cc in proptest::collection::vec(-5.0f64..5.0, 12),
    ) {
        let mut store = ParamStore::<f64>::new();
        let gate = GateParams::new(&mut store, "g", 4, &mut ChaCha8Rng::seed_from_u64(seed));
        let mut tape = Tape::eval();
        let s = tape.constant(&[3, 4], cs.clone()).unwrap();
        let c = tape.constant(&[3, 4], cc.clone()).unwrap();
        let (out, g) = gated_fusion(&mut tape, &store, &gate, s, c).unwrap();
        for (i, &v) in tape.values(out).iter().enumerate() {
            let (lo, hi) = (cs[i].min(cc[i]), cs[i].max(cc[i]));
            prop_assert!(lo - 1e-12 <= v && v <= hi + 1e-12);
        }
        prop_assert!(tape.values(g).iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn saturated_gate_ignores_any_context(
        seed in 0u64..1000,
        ctx_a in proptest::collection::vec(4usize..24, 0..6),
        ctx_b in proptest::collection::vec(4usize..24, 0..9),
    ) {
        let mut model = gated(seed);
        saturate_gate(&mut model, 60.0);
        let src = [5, 9, 11];
        prop_assert!(max_abs_diff(&memory(&model, &src, &ctx_a), &memory(&model, &src, &ctx_b)) < 1e-5);
    }
}

#[test]
fn forced_gate_ignores_context() {
    let mut model = gated(3);
    model.overrides.force_gate = Some(1.0);
    let a = memory(&model, &[5, 6, 7], &[8]);
    let b = memory(&model, &[5, 6, 7], &[9, 10, 11, 12, 13]);
    assert!(max_abs_diff(&a, &b) < 1e-5);
    model.overrides.force_gate = None;
    let a = memory(&model, &[5, 6, 7], &[8]);
    let b = memory(&model, &[5, 6, 7], &[9, 10, 11, 12, 13]);
    assert!(max_abs_diff(&a, &b) > 1e-6, "context should matter with a learned gate");
}

#[test]
fn bottleneck_reduces_to_self_attention_layer() {
    for seed in 0..5 {
        let mut model = gated(seed);
        model.overrides = FusionOverrides {
            force_gate: Some(1.0),
            zero_context: true,
        };
        let src = Padded::from_seqs(&[model_source(&[5, 6, 7]), model_source(&[8])]);
        let ctx = Padded::from_seqs(&[model_context(&[9, 10]), model_context(&[])]);
        let mut tape = Tape::eval();
        let with = model.context_aware_encode(&mut tape, &src, &ctx).unwrap();
        let without = model.encode_without_context_branch(&mut tape, &src).unwrap();
        let (a, b) = (tape.values(with.memory).to_vec(), tape.values(without).to_vec());
        assert!(max_abs_diff(&a, &b) < 1e-6);
    }
}

#[test]
fn context_encoder_shares_lower_layers() {
    let model = gated(4);
    let top = model.config.layers - 1;
    let names: Vec<&str> = model.params.iter().map(|(_, p)| p.name.as_str()).collect();
    // the only context-side parameters are its own top layer
    assert!(names.iter().filter(|n| n.starts_with("ctx.")).all(|n| n.starts_with(&format!("ctx.{top}."))));
    assert!(names.iter().any(|n| n.starts_with(&format!("enc.{top}.gate"))));

    // the same ids through layers 1..N−1 on either path give the same states
    let seq = Padded::from_seqs(&[vec![BOS, 7, 8, EOS]]);
    let mut tape = Tape::eval();
    let x = model.embed(&mut tape, model.src_embed, &seq, None).unwrap();
    let mask = seq.key_mask(seq.width);
    let (source_side, _) = model.run_stack(&mut tape, &model.encoder_layers, x, &mask).unwrap();
    let (h, _) = model.run_stack(&mut tape, &model.encoder_layers, x, &mask).unwrap();
    assert_eq!(tape.values(source_side), tape.values(h));
    let ctx = model.encode_context(&mut tape, &seq).unwrap();
    let (expect, _) = model.context_top.as_ref().unwrap().forward(&mut tape, &model.params, h, &mask, 0.0).unwrap();
    assert_eq!(tape.values(ctx), tape.values(expect));
}

/// A shared parameter collects gradient from both the source path and the
/// context path into one buffer, so one update moves both.
#[test]
fn shared_layers_receive_gradient_from_both_paths() {
    let model = gated(5);
    let shared = model.params.find("enc.0.ffn.inner.w").unwrap();
    let grad_of = |use_ctx: bool, use_src: bool| -> Vec<f64> {
        let mut tape = Tape::eval_with_grads();
        let src = Padded::from_seqs(&[model_source(&[5, 6])]);
        let ctx = Padded::from_seqs(&[model_context(&[7, 8])]);
        let mut terms = Vec::new();
        if use_ctx {
            terms.push(model.encode_context(&mut tape, &ctx).unwrap());
        }
        if use_src {
            terms.push(model.encode_without_context_branch(&mut tape, &src).unwrap());
        }
        let mut total = None;
        for t in terms {
            let s = tape.sum(t);
            let s = tape.reshape(s, &[1]).unwrap();
            total = Some(match total {
                None => s,
                Some(acc) => tape.add(acc, s).unwrap(),
            });
        }
        let loss = tape.sum(total.unwrap());
        tape.backward(loss).unwrap();
        let mut store = model.params.clone();
        store.zero_grads();
        tape.accumulate_param_grads(&mut store);
        store.get(shared).grad.clone()
    };
    let (c, s, both) = (grad_of(true, false), grad_of(false, true), grad_of(true, true));
    assert!(c.iter().any(|g| g.abs() > 0.0));
    assert!(s.iter().any(|g| g.abs() > 0.0));
    for ((b, x), y) in both.iter().zip(&c).zip(&s) {
        assert!((b - (x + y)).abs() < 1e-9);
    }
}

#[test]
fn context_embeddings_receive_gradient() {
    let model = gated(6);
    let ex = Example {
        example_id: 0,
        context_ids: vec![20, 21],
        source_ids: vec![5, 6],
        target_ids: vec![7, 8],
        has_real_context: true,
    };
    let batch = Batch::from_examples(&[&ex], 64).unwrap();
    let mut tape = Tape::eval_with_grads();
    let loss = model.loss(&mut tape, &batch).unwrap();
    tape.backward(loss).unwrap();
    let mut store = model.params.clone();
    store.zero_grads();
    tape.accumulate_param_grads(&mut store);
    let d = model.config.d_model;
    let grad = &store.get(model.src_embed).grad;
    for tok in [20, 21] {
        assert!(grad[tok * d..(tok + 1) * d].iter().any(|g| g.abs() > 1e-12), "token {tok}");
    }
}

#[test]
fn empty_context_has_two_positions() {
    let model = gated(7);
    let mut tape = Tape::eval();
    let h = model.encode_context(&mut tape, &Padded::from_seqs(&[model_context(&[])])).unwrap();
    assert_eq!(tape.shape(h), &[1, 2, model.config.d_model]);
    assert!(tape.values(h).iter().all(|v| v.is_finite()));
    let state = model.encode(&[5], &[]).unwrap();
    let att = state.context_attention.unwrap();
    assert_eq!(att.len(), 2 * 2);
    assert_eq!(state.context_tokens, vec![BOS, EOS]);
}

#[test]
fn non_gated_model_has_no_context_encoder() {
    let model = Model::<f64>::new(ModelConfig::tiny(24, 24, ContextMode::None), 0).unwrap();
    let mut tape = Tape::eval();
    assert!(model.encode_context(&mut tape, &Padded::from_seqs(&[vec![BOS, EOS]])).is_err());
}

#[test]
fn concat_flags_fixture() {
    assert_eq!(concat_flags(3, 2), vec![0, 0, 0, 1, 1]);
}

fn concat_model(seed: u64) -> Model<f64> {
    Model::new(ModelConfig::tiny(24, 24, ContextMode::Concat), seed).unwrap()
}

#[test]
fn zero_segment_table_is_plain_concatenation() {
    let mut model = concat_model(8);
    let seg = model.segment_embed.unwrap();
    model.params.set_value(seg, vec![0.0; 2 * model.config.d_model]).unwrap();
    let (src, ctx) = (model_source(&[5, 6]), model_context(&[7, 8, 9]));
    let mut joined = ctx.clone();
    joined.extend_from_slice(&src);
    let mut tape = Tape::eval();
    let enc = model
        .concat_encode(&mut tape, &Padded::from_seqs(&[src]), &Padded::from_seqs(&[ctx]))
        .unwrap();
    let plain = model.encode_source(&mut tape, &Padded::from_seqs(&[joined])).unwrap();
    assert!(max_abs_diff(tape.values(enc.memory), tape.values(plain.memory)) < 1e-12);
}

#[test]
fn swapping_segment_rows_changes_output() {
    let mut model = concat_model(9);
    let before = memory(&model, &[5, 6], &[7, 8, 9]);
    let seg = model.segment_embed.unwrap();
    let d = model.config.d_model;
    let mut v = model.params.get(seg).value.clone();
    let (a, b) = v.split_at_mut(d);
    a.swap_with_slice(b);
    model.params.set_value(seg, v).unwrap();
    let after = memory(&model, &[5, 6], &[7, 8, 9]);
    assert!(max_abs_diff(&before, &after) > 1e-6);
}

#[test]
fn concat_overflow_reports_lengths() {
    let mut cfg = ModelConfig::tiny(24, 24, ContextMode::Concat);
    cfg.max_len = 6;
    let model = Model::<f64>::new(cfg, 0).unwrap();
    let mut tape = Tape::eval();
    let err = model
        .concat_encode(
            &mut tape,
            &Padded::from_seqs(&[model_source(&[5, 6])]),
            &Padded::from_seqs(&[model_context(&[7, 8])]),
        )
        .unwrap_err()
        .to_string();
    assert!(err.contains('4') && err.contains('3') && err.contains('6'), "{err}");
}

#[test]
fn gated_layer_gradient_check_over_seeds() {
    let (d, s, c) = (8, 3, 4);
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::<f64>::new();
        let layer = GatedEncoderLayer::new(&mut store, "g", d, 16, 2, &mut rng);
        let x = store.add("x", &[2, s, d], Init::Normal { std: 1.0 }, &mut rng);
        let ctx = store.add("ctx", &[2, c, d], Init::Normal { std: 1.0 }, &mut rng);
        let probe: Vec<f64> = (0..2 * s * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let self_mask = Mask::from_fn(2, s, s, |b, _, j| j < s - b);
        let ctx_mask = Mask::from_fn(2, s, c, |b, _, j| j < c - b);
        let report = finite_difference_check(
            &store,
            |t, st| {
                let (xv, cv) = (t.param(st, x), t.param(st, ctx));
                let out = layer.forward(t, st, xv, &self_mask, cv, &ctx_mask, 0.0, FusionOverrides::default())?;
                let w = t.constant(&[2, s, d], probe.clone())?;
                let prod = t.mul(out.output, w)?;
                Ok(t.sum(prod))
            },
            1e-4,
            seed,
        )
        .unwrap();
        assert!(report.max_rel_err < 1e-4, "seed {seed}: {report:?}");
    }
}

#[test]
fn full_context_model_gradient_check() {
    let ex = [
        Example {
            example_id: 0,
            context_ids: vec![9, 10, 11],
            source_ids: vec![5, 6, 7],
            target_ids: vec![12, 13],
            has_real_context: true,
        },
        Example {
            example_id: 1,
            context_ids: vec![],
            source_ids: vec![8],
            target_ids: vec![14, 15, 16],
            has_real_context: false,
        },
    ];
    let refs: Vec<&Example> = ex.iter().collect();
    let batch = Batch::from_examples(&refs, 64).unwrap();
    for mode in [ContextMode::Gated, ContextMode::Concat] {
        let model = Model::<f64>::new(ModelConfig::tiny(24, 24, mode), 31).unwrap();
        let report = model.gradient_check(&batch, 1e-4, 0).unwrap();
        assert!(report.max_rel_err < 1e-4, "{mode}: {report:?}");
    }
}
