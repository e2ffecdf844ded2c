//! Acceptance suite: every criterion runs at its stated tolerance and prints
//! one PASS/FAIL line. Criteria 3–5 share one full synthetic experiment
//! (three models at N=2, h=4, d_model=64), which dominates the runtime.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use ctxnmt::analysis::{
    agreement_report, confusion_table, render_agreement_table, render_confusion_table, render_top_words_table,
    useful_mass, AgreementRow, AttentionRecord, Confusion, Pick, Punctuation, WordStat, MULTI_NOUN,
};
use ctxnmt::autodiff::{finite_difference_check, Init, Mask, ParamStore, Tape};
use ctxnmt::context::{attention_records, FusionOverrides, GateParams, GatedEncoderLayer};
use ctxnmt::data::{attach_context, filter_pairs, gen_synthetic, ingest, read_prepared, write_prepared, ContextDirection, Example};
use ctxnmt::data::{PreparedDataset, SyntheticSpec, DEFAULT_MAX_GAP_SECONDS, DEFAULT_MIN_OVERLAP};
use ctxnmt::eval::{corpus_bleu, CorefAnnotation, Gender};
use ctxnmt::experiment::{run_synthetic_experiment, ExperimentConfig};
use ctxnmt::trainer::noam_lr;
use ctxnmt::transformer::layers::{FeedForward, LayerNorm, MultiHeadAttention};
use ctxnmt::transformer::{model_context, model_source, Batch, ContextMode, Model, ModelConfig, Padded};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    id: u32,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn record(out: &mut Vec<Outcome>, id: u32, name: &'static str, pass: bool, detail: String) {
    println!("[{}] criterion {id}: {name} — {detail}", if pass { "PASS" } else { "FAIL" });
    out.push(Outcome { id, name, pass, detail });
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// `sum(out ⊙ probe)` turns any layer output into a scalar with a
/// non-degenerate gradient.
fn probe_loss(tape: &mut Tape<f64>, out: ctxnmt::autodiff::Var, probe: &[f64]) -> ctxnmt::Result<ctxnmt::autodiff::Var> {
    let shape = tape.shape(out).to_vec();
    let w = tape.constant(&shape, probe.to_vec())?;
    let prod = tape.mul(out, w)?;
    Ok(tape.sum(prod))
}

fn criterion_1(out: &mut Vec<Outcome>) {
    let start = Instant::now();
    let (d, s, c, seeds) = (8, 3, 4, 20u64);
    let mut worst = [0.0f64; 5];
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::<f64>::new();
        let mha = MultiHeadAttention::new(&mut store, "mha", d, 2, &mut rng);
        let ffn = FeedForward::new(&mut store, "ffn", d, 16, &mut rng);
        let ln = LayerNorm::new(&mut store, "ln", d, &mut rng);
        let gate = GateParams::new(&mut store, "gate", d, &mut rng);
        let gated = GatedEncoderLayer::new(&mut store, "gated", d, 16, 2, &mut rng);
        // layer-norm gains/biases start at 1/0; perturb them so the check is not trivial
        for p in store.iter_mut().filter(|p| p.name.starts_with("ln.")) {
            p.value.iter_mut().for_each(|v| *v += rng.random_range(-0.5..0.5));
        }
        let x = store.add("x", &[2, s, d], Init::Normal { std: 1.0 }, &mut rng);
        let y = store.add("y", &[2, c, d], Init::Normal { std: 1.0 }, &mut rng);
        let probe: Vec<f64> = (0..2 * s * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let self_mask = Mask::from_fn(2, s, s, |b, _, j| j < s - b);
        let cross_mask = Mask::from_fn(2, s, c, |b, _, j| j < c - b);

        let checks: [&dyn Fn(&mut Tape<f64>, &ParamStore<f64>) -> ctxnmt::Result<ctxnmt::autodiff::Var>; 4] = [
            &|t, st| {
                let (xv, yv) = (t.param(st, x), t.param(st, y));
                let o = mha.forward(t, st, xv, yv, &cross_mask)?.output;
                probe_loss(t, o, &probe)
            },
            &|t, st| {
                let xv = t.param(st, x);
                let o = ffn.forward(t, st, xv)?;
                probe_loss(t, o, &probe)
            },
            &|t, st| {
                let xv = t.param(st, x);
                let o = ln.forward(t, st, xv)?;
                probe_loss(t, o, &probe)
            },
            &|t, st| {
                let xv = t.param(st, x);
                let yv = t.param(st, y);
                // context branch of matching width: the first s context rows
                let flat = t.reshape(yv, &[2 * c, d])?;
                let head = t.constant(&[2 * s, 2 * c], {
                    let mut sel = vec![0.0; 2 * s * 2 * c];
                    for b in 0..2 {
                        for i in 0..s {
                            sel[(b * s + i) * 2 * c + b * c + i] = 1.0;
                        }
                    }
                    sel
                })?;
                let cc = t.matmul(head, flat)?;
                let cc = t.reshape(cc, &[2, s, d])?;
                let (fused, _) = ctxnmt::context::gated_fusion(t, st, &gate, xv, cc)?;
                probe_loss(t, fused, &probe)
            },
        ];
        for (k, f) in checks.iter().enumerate() {
            let r = finite_difference_check(&store, f, 1e-4, seed).expect("grad check runs");
            worst[k] = worst[k].max(r.max_rel_err);
        }
        let r = finite_difference_check(
            &store,
            |t, st| {
                let (xv, yv) = (t.param(st, x), t.param(st, y));
                let o = gated.forward(t, st, xv, &self_mask, yv, &cross_mask, 0.0, FusionOverrides::default())?;
                probe_loss(t, o.output, &probe)
            },
            1e-4,
            seed,
        )
        .expect("grad check runs");
        worst[3] = worst[3].max(r.max_rel_err);
    }

    let examples = [
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
    let refs: Vec<&Example> = examples.iter().collect();
    let batch = Batch::from_examples(&refs, 64).unwrap();
    for seed in 0..seeds {
        let cfg = ModelConfig::tiny(24, 24, ContextMode::Gated);
        assert_eq!((cfg.layers, cfg.heads, cfg.d_model), (2, 2, 8));
        let model = Model::<f64>::new(cfg, seed).unwrap();
        worst[4] = worst[4].max(model.gradient_check(&batch, 1e-4, seed).unwrap().max_rel_err);
    }
    let secs = start.elapsed().as_secs_f64();
    let max = worst.iter().copied().fold(0.0, f64::max);
    record(
        out,
        1,
        "gradient integrity",
        max < 1e-4 && secs < 120.0,
        format!(
            "max rel. err attention {:.1e}, ffn {:.1e}, layer norm {:.1e}, gated fusion/layer {:.1e}, full model {:.1e} over {seeds} seeds in {secs:.1}s",
            worst[0], worst[1], worst[2], worst[3], worst[4]
        ),
    );
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

fn criterion_2(out: &mut Vec<Outcome>) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut saturated, mut bottleneck) = (0.0f64, 0.0f64);
    for seed in 0..10 {
        let mut model = Model::<f64>::new(ModelConfig::tiny(24, 24, ContextMode::Gated), seed).unwrap();
        let gate = model.gated_top.as_ref().unwrap().gate.clone();
        let d = model.config.d_model;
        model.params.set_value(gate.weight, vec![0.0; 2 * d * d]).unwrap();
        model.params.set_value(gate.bias, vec![40.0; d]).unwrap();
        let src = [5, 6, 7];
        let base = memory(&model, &src, &[9, 10]);
        for _ in 0..10 {
            let len = rng.random_range(0..8);
            let ctx: Vec<usize> = (0..len).map(|_| rng.random_range(4..24)).collect();
            saturated = saturated.max(max_abs_diff(&base, &memory(&model, &src, &ctx)));
        }

        let mut model = Model::<f64>::new(ModelConfig::tiny(24, 24, ContextMode::Gated), seed).unwrap();
        model.overrides = FusionOverrides {
            force_gate: Some(1.0),
            zero_context: true,
        };
        let src = Padded::from_seqs(&[model_source(&[5, 6, 7]), model_source(&[8])]);
        let ctx = Padded::from_seqs(&[model_context(&[9, 10]), model_context(&[])]);
        let mut tape = Tape::eval();
        let with = model.context_aware_encode(&mut tape, &src, &ctx).unwrap();
        let without = model.encode_without_context_branch(&mut tape, &src).unwrap();
        bottleneck = bottleneck.max(max_abs_diff(tape.values(with.memory), tape.values(without)));
    }
    record(
        out,
        2,
        "gate bottleneck",
        saturated < 1e-5 && bottleneck < 1e-6,
        format!("saturated gate under context replacement {saturated:.1e} (< 1e-5); zeroed context vs self-only layer {bottleneck:.1e} (< 1e-6)"),
    );
}

fn criteria_3_4_5(out: &mut Vec<Outcome>) {
    let cfg = ExperimentConfig::standard(1);
    assert_eq!((cfg.train_size, cfg.test_size, cfg.nouns, cfg.distractor_prob), (20_000, 2_000, 40, 0.5));
    assert_eq!((cfg.layers, cfg.heads, cfg.d_model, cfg.d_ff), (2, 4, 64, 128));
    let rep = run_synthetic_experiment(&cfg, |line| println!("    {line}")).expect("experiment runs");
    println!("{}", rep.summary());

    let budget_ok = [&rep.baseline.0, &rep.gated.0, &rep.concat.0]
        .iter()
        .all(|t| t.report.steps <= 20_000 && t.seconds <= 1800.0);
    let (gated, none) = (&rep.gated.1, &rep.baseline.1);
    let pass3 = budget_ok && gated.pronoun_accuracy >= 0.95 && none.pronoun_accuracy <= 0.35 && rep.p_gated_vs_baseline < 0.01;
    record(
        out,
        3,
        "synthetic anaphora end-to-end",
        pass3,
        format!(
            "gated acc {:.4} (≥ 0.95), none acc {:.4} (≤ 0.35), BLEU {:.2} vs {:.2} p={:.4} (< 0.01), concat acc {:.4}, times {:.0}/{:.0}/{:.0}s",
            gated.pronoun_accuracy,
            none.pronoun_accuracy,
            gated.bleu.bleu,
            none.bleu.bleu,
            rep.p_gated_vs_baseline,
            rep.concat.1.pronoun_accuracy,
            rep.baseline.0.seconds,
            rep.gated.0.seconds,
            rep.concat.0.seconds
        ),
    );

    let shuffled = &rep.gated_shuffled;
    let gap = (shuffled.pronoun_accuracy - none.pronoun_accuracy).abs();
    record(
        out,
        4,
        "shuffled-context ablation",
        gap <= 0.10 && rep.p_real_vs_shuffled < 0.01,
        format!(
            "shuffled acc {:.4} vs none {:.4} (|Δ| {gap:.4} ≤ 0.10); real BLEU {:.2} vs shuffled {:.2} p={:.4} (< 0.01)",
            shuffled.pronoun_accuracy, none.pronoun_accuracy, gated.bleu.bleu, shuffled.bleu.bleu, rep.p_real_vs_shuffled
        ),
    );

    let a = &rep.agreement;
    let (att, last, random) = (a.attention.percent(), a.last.percent(), a.random.percent());
    record(
        out,
        5,
        "latent anaphora",
        a.min_nouns == MULTI_NOUN && att - last >= 15.0 && att - random >= 15.0,
        format!(
            "{} examples with ≥ {} nouns: attention {att:.1}%, last {last:.1}%, random {random:.1}%, first {:.1}% (margins {:.1}/{:.1} ≥ 15)",
            a.examples,
            a.min_nouns,
            a.first.percent(),
            att - last,
            att - random
        ),
    );
}

fn criterion_6(out: &mut Vec<Outcome>) {
    let peak = noam_lr(4000, 512, 4000).unwrap();
    let first = noam_lr(1, 512, 4000).unwrap();
    let w = 4000f64;
    // both branches of the min at step = warmup, and the schedule there
    let (left, right) = (w.powf(-0.5), w * w.powf(-1.5));
    let continuity = (left - right).abs() < 1e-15 && (peak - 512f64.powf(-0.5) * left).abs() < 1e-18;
    let pass = (peak - 6.9877e-4).abs() <= 1e-7 && (first - 1.7470e-7).abs() <= 1e-10 && continuity;
    record(
        out,
        6,
        "schedule fixtures",
        pass,
        format!("noam(4000)={peak:.5e}, noam(1)={first:.5e}, branches at warmup differ by {:.1e}", (left - right).abs()),
    );
}

fn toks(s: &str) -> Vec<String> {
    s.split_whitespace().map(String::from).collect()
}

/// Independent BLEU-4: explicit n-gram lists, counted by linear scans.
fn brute_bleu(hyp: &[String], reference: &[String]) -> f64 {
    let mut log_sum = 0.0;
    for n in 1..=4 {
        let grams = |t: &[String]| -> Vec<Vec<String>> { t.windows(n).map(|w| w.to_vec()).collect() };
        let (h, r) = (grams(hyp), grams(reference));
        if h.is_empty() {
            return 0.0;
        }
        let mut used = vec![false; r.len()];
        let mut matches = 0;
        for g in &h {
            if let Some(k) = (0..r.len()).find(|&k| !used[k] && r[k] == *g) {
                used[k] = true;
                matches += 1;
            }
        }
        if matches == 0 {
            return 0.0;
        }
        log_sum += (matches as f64 / h.len() as f64).ln() / 4.0;
    }
    let (c, r) = (hyp.len() as f64, reference.len() as f64);
    let bp = if c >= r { 1.0 } else { (1.0 - r / c).exp() };
    100.0 * bp * log_sum.exp()
}

fn criterion_7(out: &mut Vec<Outcome>) {
    let fixtures = [("a b c d", "a b c d", 100.0), ("a b c d", "a b c d e", 77.88), ("x y z w", "a b c d", 0.0)];
    let mut pass = true;
    let mut got = Vec::new();
    for (h, r, expect) in fixtures {
        let ours = corpus_bleu(&[toks(h)], &[toks(r)]).unwrap().bleu;
        let oracle = brute_bleu(&toks(h), &toks(r));
        pass &= (ours - oracle).abs() < 1e-9 && (ours - expect).abs() <= 0.01;
        got.push(format!("{ours:.2}"));
    }
    record(out, 7, "BLEU oracle", pass, format!("identity/brevity/disjoint = {} (oracle agrees)", got.join("/")));
}

fn criterion_8(out: &mut Vec<Outcome>) {
    let p = Punctuation::default();
    // useful mass: 0.1 + 0.2 of the row falls on words
    let r = AttentionRecord {
        example_id: 0,
        src_tokens: vec!["it".into()],
        ctx_tokens: ["<bos>", "the", "cat", ".", "<eos>"].map(String::from).to_vec(),
        weights: vec![0.6, 0.1, 0.2, 0.05, 0.05],
    };
    let mass_ok = (useful_mass(&r, &p) - 0.3).abs() < 1e-12;

    // agreement: 7 right, 2 on the distractor, 1 abstaining, plus a
    // single-noun example the filter drops
    let ctx = ["<bos>", "the", "cat", "near", "the", "dog", ".", "<eos>"].map(String::from).to_vec();
    let (mut records, mut anns) = (Vec::new(), Vec::new());
    for id in 0..11 {
        let mut row = vec![0.0; ctx.len()];
        row[match id {
            0..=6 | 10 => 2,
            7 | 8 => 5,
            _ => 0,
        }] = 1.0;
        let (c, w) = if id == 9 { (vec!["<bos>".into(), ".".into()], vec![1.0, 0.0]) } else { (ctx.clone(), row) };
        records.push(AttentionRecord {
            example_id: id,
            src_tokens: vec!["it".into()],
            ctx_tokens: c,
            weights: w,
        });
        let nouns = if id == 10 { vec![2] } else { vec![2, 5] };
        anns.push(CorefAnnotation {
            example_id: id,
            pronoun: "it".into(),
            pronoun_index: 0,
            antecedent_span: (1, 2),
            antecedent_has_noun: true,
            context_noun_count: nouns.len(),
            gender: Some(Gender::Masc),
            noun_positions: nouns,
        });
    }
    let rep = agreement_report(&records, &anns, MULTI_NOUN, 1, &p).unwrap();
    let agreement_ok = rep.examples == 10
        && (rep.attention.agree, rep.attention.decided, rep.attention.abstained) == (7, 9, 1)
        && rep.first.percent() == 100.0
        && rep.last.percent() == 0.0;

    let (rt, wr) = (Pick::Index(1), Pick::Index(3));
    let c = confusion_table(&[rt, rt, rt, wr, Pick::Abstain], &[rt, wr, wr, rt, wr], &[(1, 1); 5]).unwrap();
    let confusion_ok = c.counts == [[1, 2], [1, 1]];

    // dumps from a trained-shape model are row-stochastic
    let model = Model::<f32>::new(ModelConfig::tiny(24, 24, ContextMode::Gated), 3).unwrap();
    let vocab = ctxnmt::data::Vocab::build((4..24).map(|i| format!("w{i}")));
    let examples: Vec<Example> = (0..20)
        .map(|i| Example {
            example_id: i,
            context_ids: (0..i % 6).map(|k| 4 + (i + k) % 20).collect(),
            source_ids: (0..1 + i % 5).map(|k| 4 + (2 * i + k) % 20).collect(),
            target_ids: vec![5],
            has_real_context: i % 6 > 0,
        })
        .collect();
    let dumped = attention_records(&model, &examples, &vocab, 7).unwrap();
    let stochastic_ok = dumped.iter().all(|r| r.validate(1e-4).is_ok());

    let t2 = render_top_words_table(
        &[WordStat { word: "it".into(), mean_mass: 0.376, mean_position: 5.5, count: 10 }],
        &[WordStat { word: "it".into(), mean_mass: 0.342, mean_position: 6.8, count: 10 }],
    );
    let t7 = render_agreement_table(
        &[AgreementRow { pronoun: "it".into(), random: 40.0, first: 36.0, last: 52.0, attention: 58.0 }],
        "more than one noun in context",
    );
    let t9 = render_confusion_table(&Confusion { counts: [[53, 19], [24, 4]] }, "CoreNLP");
    let tables_ok = t2.contains("it\t0.376\t5.5\t|\tit\t0.342\t6.8")
        && t7.contains("it\t40\t36\t52\t58")
        && t9.contains("attn right\t53\t19")
        && t9.contains("attn wrong\t24\t4");
    println!("{t2}{t7}{t9}");
    record(
        out,
        8,
        "analysis oracles",
        mass_ok && agreement_ok && confusion_ok && stochastic_ok && tables_ok,
        format!(
            "useful mass {mass_ok}, agreement {agreement_ok}, confusion {confusion_ok}, {} dumped rows row-stochastic {stochastic_ok}, table layouts {tables_ok}",
            dumped.iter().map(|r| r.rows()).sum::<usize>()
        ),
    );
}

fn ctxnmt(args: &[&str]) -> (i32, String) {
    let o = Command::new(env!("CARGO_BIN_EXE_ctxnmt")).args(args).output().expect("binary runs");
    (o.status.code().unwrap_or(-1), String::from_utf8_lossy(&o.stdout).into_owned())
}

fn same_files(a: &Path, b: &Path, names: &[&str]) -> bool {
    names.iter().all(|n| fs::read(a.join(n)).ok().is_some_and(|x| Some(x) == fs::read(b.join(n)).ok()))
}

fn criterion_9(out: &mut Vec<Outcome>) {
    let raw = "m\t0.0\t1.0\t0.90\tkept .\tk .\n\
               m\t8.0\t9.0\t0.85\tdropped .\td .\n\
               n\t0.0\t1.0\t0.95\ta .\ta .\n\
               n\t8.0\t9.0\t0.95\tgap seven .\tg .\n\
               n\t16.5\t17.0\t0.95\tgap seven and a half .\th .\n";
    let (pairs, _) = ingest(raw.as_bytes()).unwrap();
    let kept = filter_pairs(&pairs, DEFAULT_MIN_OVERLAP);
    let overlap_ok = kept.iter().any(|p| p.source[0] == "kept") && !kept.iter().any(|p| p.source[0] == "dropped");
    let ex = attach_context(&kept, DEFAULT_MAX_GAP_SECONDS, ContextDirection::Previous).unwrap();
    let gap_ok = ex
        .iter().filter(|e| e.source[0] == "gap").map(|e| e.has_real_context).collect::<Vec<_>>() == [true, false];

    let dir = tempfile::tempdir().unwrap();
    let corpus = gen_synthetic(&SyntheticSpec { nouns: 12, distractor_prob: 0.5, size: 300, seed: 4 }).unwrap();
    let data = PreparedDataset { rows: corpus.examples };
    let path = dir.path().join("data.tsv");
    write_prepared(&path, &data).unwrap();
    let bytes = fs::read(&path).unwrap();
    let back = read_prepared(&path).unwrap();
    write_prepared(dir.path().join("again.tsv"), &back).unwrap();
    let round_trip_ok = back == data && fs::read(dir.path().join("again.tsv")).unwrap() == bytes;

    // prepare / train / analyze twice with the same seed
    let d = dir.path();
    let raw_path = d.join("raw.tsv");
    let mut raw_text = String::new();
    for (i, e) in data.rows.iter().enumerate() {
        raw_text.push_str(&format!("mv{}\t{}\t{}\t0.95\t{}\t{}\n", i / 10, i % 10 * 3, i % 10 * 3 + 1, e.source.join(" "), e.target.join(" ")));
    }
    fs::write(&raw_path, raw_text).unwrap();
    let mut runs_ok = true;
    for run in ["a", "b"] {
        let p = d.join(format!("prep_{run}"));
        let m = d.join(format!("model_{run}"));
        let s = |p: &Path| p.to_str().unwrap().to_string();
        let steps = [
            vec!["prepare".into(), "--raw".into(), s(&raw_path), "--out".into(), s(&p), "--src-merges".into(), "50".into(), "--tgt-merges".into(), "50".into()],
            vec![
                "train".into(), "--data".into(), s(&p.join("data.tsv")), "--out".into(), s(&m), "--layers".into(), "1".into(), "--heads".into(), "2".into(),
                "--d-model".into(), "16".into(), "--d-ff".into(), "32".into(), "--max-steps".into(), "15".into(), "--warmup-steps".into(), "5".into(),
                "--checkpoint-every".into(), "5".into(), "--token-budget".into(), "200".into(), "--seed".into(), "7".into(),
            ],
            vec![
                "dump-attention".into(), "--model".into(), s(&m.join("model.ckpt")), "--src-vocab".into(), s(&m.join("src.vocab")),
                "--data".into(), s(&p.join("data.tsv")), "--out".into(), s(&m.join("att.txt")),
            ],
            vec!["analyze".into(), "top-words".into(), "--dump".into(), s(&m.join("att.txt")), "--min-count".into(), "1".into(), "--out".into(), s(&m.join("top.txt"))],
        ];
        for args in &steps {
            let a: Vec<&str> = args.iter().map(String::as_str).collect();
            runs_ok &= ctxnmt(&a).0 == 0;
        }
    }
    let (pa, pb, ma, mb) = (d.join("prep_a"), d.join("prep_b"), d.join("model_a"), d.join("model_b"));
    let identical = same_files(&pa, &pb, &["data.tsv", "src.bpe", "tgt.bpe", "src.vocab", "tgt.vocab"])
        && same_files(&ma, &mb, &["model.ckpt", "last.ckpt", "metrics.log", "att.txt", "top.txt"]);
    record(
        out,
        9,
        "pipeline boundaries",
        overlap_ok && gap_ok && round_trip_ok && runs_ok && identical,
        format!(
            "overlap 0.90/0.85 {overlap_ok}, gap 7.0/7.5 s {gap_ok}, round trip {round_trip_ok}, reruns succeed {runs_ok} and bit-identical {identical}"
        ),
    );
}

// Runs without the libtest harness so the PASS/FAIL lines are never captured.
fn main() {
    let mut out = Vec::new();
    criterion_1(&mut out);
    criterion_2(&mut out);
    criterion_6(&mut out);
    criterion_7(&mut out);
    criterion_8(&mut out);
    criterion_9(&mut out);
    criteria_3_4_5(&mut out);
    out.sort_by_key(|o| o.id);
    println!("\nacceptance summary");
    for o in &out {
        println!("  [{}] {} {}: {}", if o.pass { "PASS" } else { "FAIL" }, o.id, o.name, o.detail);
    }
    let failed: Vec<u32> = out.iter().filter(|o| !o.pass).map(|o| o.id).collect();
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
