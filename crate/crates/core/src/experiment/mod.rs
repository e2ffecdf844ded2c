//! The synthetic end-to-end comparison: a context-agnostic baseline, the
//! gated context-aware model and the concatenation baseline trained on the
//! toy gendered language, then compared on pronoun-form accuracy, BLEU,
//! shuffled-context evaluation and latent anaphora agreement.

use std::time::Instant;

use crate::analysis::{agreement_report, AgreementReport, Punctuation, MULTI_NOUN};
use crate::context::attention_records;
use crate::data::{gen_synthetic, shuffle_contexts, Example, PreparedDataset, SyntheticSpec, TextExample, Vocab};
use crate::error::{Error, Result};
use crate::eval::{bootstrap_significance, corpus_bleu, BleuReport, CorefAnnotation};
use crate::trainer::{train, OptimizerConfig, TrainOptions, TrainReport};
use crate::transformer::{ContextMode, Model, ModelConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub train_size: usize,
    pub dev_size: usize,
    pub test_size: usize,
    pub nouns: usize,
    pub distractor_prob: f64,
    pub seed: u64,
    pub layers: usize,
    pub heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub dropout: f64,
    pub label_smoothing: f64,
    pub optimizer: OptimizerConfig,
    /// Stop training once the dev loss reaches this value.
    pub target_dev_loss: Option<f64>,
    pub bootstrap_samples: usize,
    pub max_out: usize,
    pub decode_batch: usize,
}

impl ExperimentConfig {
    /// 20k/2k examples, 40 nouns, distractor probability 0.5, N=2, h=4,
    /// d_model=64, d_ff=128.
    pub fn standard(seed: u64) -> Self {
        let mut optimizer = OptimizerConfig::new(64);
        optimizer.warmup_steps = 400;
        optimizer.token_budget = 1000;
        optimizer.max_steps = 3000;
        optimizer.checkpoint_every = 200;
        optimizer.seed = seed;
        ExperimentConfig {
            train_size: 20_000,
            dev_size: 500,
            test_size: 2_000,
            nouns: 40,
            distractor_prob: 0.5,
            seed,
            layers: 2,
            heads: 4,
            d_model: 64,
            d_ff: 128,
            dropout: 0.1,
            label_smoothing: 0.1,
            optimizer,
            target_dev_loss: None,
            bootstrap_samples: 1000,
            max_out: 10,
            decode_batch: 250,
        }
    }

    pub fn model_config(&self, src_vocab: usize, tgt_vocab: usize, mode: ContextMode) -> ModelConfig {
        ModelConfig {
            layers: self.layers,
            heads: self.heads,
            d_model: self.d_model,
            d_ff: self.d_ff,
            src_vocab,
            tgt_vocab,
            dropout: self.dropout,
            label_smoothing: self.label_smoothing,
            max_len: 32,
            context_mode: mode,
        }
    }
}

/// Train/dev/test splits of the toy language, each generated from its own seed.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub src_vocab: Vocab,
    pub tgt_vocab: Vocab,
    pub train: Vec<Example>,
    pub dev: Vec<Example>,
    pub test: Vec<Example>,
    pub test_text: Vec<TextExample>,
    pub test_annotations: Vec<CorefAnnotation>,
}

impl SyntheticData {
    pub fn generate(cfg: &ExperimentConfig) -> Result<Self> {
        let split = |size: usize, offset: u64| {
            gen_synthetic(&SyntheticSpec {
                nouns: cfg.nouns,
                distractor_prob: cfg.distractor_prob,
                size,
                seed: cfg.seed.wrapping_mul(1000).wrapping_add(offset),
            })
        };
        let train = split(cfg.train_size, 1)?;
        let dev = split(cfg.dev_size, 2)?;
        let test = split(cfg.test_size, 3)?;
        let (src_vocab, tgt_vocab) = PreparedDataset { rows: train.examples.clone() }.vocabularies();
        let enc = |rows: &[TextExample]| -> Result<Vec<Example>> {
            let e = PreparedDataset { rows: rows.to_vec() }.encode(&src_vocab, &tgt_vocab, 32);
            if e.unknown_tokens > 0 {
                return Err(Error::invalid(format!("{} unknown tokens in a closed-vocabulary split", e.unknown_tokens)));
            }
            Ok(e.examples)
        };
        Ok(SyntheticData {
            train: enc(&train.examples)?,
            dev: enc(&dev.examples)?,
            test: enc(&test.examples)?,
            test_text: test.examples,
            test_annotations: test.annotations,
            src_vocab,
            tgt_vocab,
        })
    }

    /// The test split with its contexts permuted by a seeded shuffle.
    pub fn shuffled_test(&self, seed: u64) -> Vec<Example> {
        let mut text = self.test_text.clone();
        shuffle_contexts(&mut text, seed);
        text.iter()
            .zip(&self.test)
            .map(|(t, e)| e.with_context(self.src_vocab.encode(&t.context).0, t.has_real_context))
            .collect()
    }
}

/// Hypotheses and scores of one model on one test set.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub hypotheses: Vec<Vec<String>>,
    /// Fraction of sentences whose first output token is the gold pronoun form.
    pub pronoun_accuracy: f64,
    pub bleu: BleuReport,
}

/// Greedy-decodes `examples` in batches and scores them against their targets.
pub fn evaluate(model: &Model<f32>, examples: &[Example], tgt_vocab: &Vocab, max_out: usize, batch: usize) -> Result<Evaluation> {
    let mut hypotheses = Vec::with_capacity(examples.len());
    for chunk in examples.chunks(batch.max(1)) {
        let refs: Vec<&Example> = chunk.iter().collect();
        for t in model.translate_greedy_batch(&refs, max_out)? {
            hypotheses.push(tgt_vocab.decode(&t.ids));
        }
    }
    let references: Vec<Vec<String>> = examples.iter().map(|e| tgt_vocab.decode(&e.target_ids)).collect();
    let right = hypotheses
        .iter()
        .zip(&references)
        .filter(|(h, r)| h.first().is_some() && h.first() == r.first())
        .count();
    Ok(Evaluation {
        pronoun_accuracy: right as f64 / examples.len().max(1) as f64,
        bleu: corpus_bleu(&hypotheses, &references)?,
        hypotheses,
    })
}

pub fn references(examples: &[Example], tgt_vocab: &Vocab) -> Vec<Vec<String>> {
    examples.iter().map(|e| tgt_vocab.decode(&e.target_ids)).collect()
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub mode: ContextMode,
    pub model: Model<f32>,
    pub report: TrainReport,
    pub seconds: f64,
}

pub fn train_model(data: &SyntheticData, cfg: &ExperimentConfig, mode: ContextMode) -> Result<TrainedModel> {
    let start = Instant::now();
    let mcfg = cfg.model_config(data.src_vocab.len(), data.tgt_vocab.len(), mode);
    let mut model = Model::new(mcfg, cfg.seed)?;
    let mut opts = TrainOptions::new(cfg.optimizer.clone());
    opts.target_dev_loss = cfg.target_dev_loss;
    let report = train(&mut model, &data.train, &data.dev, &opts)?;
    Ok(TrainedModel {
        mode,
        model,
        report,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Outcome of the full comparison.
#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub baseline: (TrainedModel, Evaluation),
    pub gated: (TrainedModel, Evaluation),
    pub concat: (TrainedModel, Evaluation),
    /// The gated model evaluated with shuffled test contexts.
    pub gated_shuffled: Evaluation,
    /// p-value of "gated beats the baseline" (paired bootstrap).
    pub p_gated_vs_baseline: f64,
    /// p-value of "real contexts beat shuffled contexts" for the gated model.
    pub p_real_vs_shuffled: f64,
    pub agreement: AgreementReport,
}

impl ExperimentReport {
    pub fn summary(&self) -> String {
        let mut s = String::new();
        for (name, (t, e)) in [("none", &self.baseline), ("gated", &self.gated), ("concat", &self.concat)] {
            s.push_str(&format!(
                "{name:<8} steps={:<6} time={:>7.1}s best_dev_loss={:.4} pronoun_acc={:.4} BLEU={:.2}\n",
                t.report.steps,
                t.seconds,
                t.report.best_dev_loss.unwrap_or(f64::NAN),
                e.pronoun_accuracy,
                e.bleu.bleu
            ));
        }
        s.push_str(&format!(
            "gated/shuffled pronoun_acc={:.4} BLEU={:.2}\n",
            self.gated_shuffled.pronoun_accuracy, self.gated_shuffled.bleu.bleu
        ));
        s.push_str(&format!(
            "p(gated > none)={:.4} p(real > shuffled)={:.4}\n",
            self.p_gated_vs_baseline, self.p_real_vs_shuffled
        ));
        s.push_str(&self.agreement.summary());
        s
    }
}

/// Runs the whole comparison; `progress` receives one line per finished stage.
pub fn run_synthetic_experiment(cfg: &ExperimentConfig, mut progress: impl FnMut(&str)) -> Result<ExperimentReport> {
    let data = SyntheticData::generate(cfg)?;
    let refs = references(&data.test, &data.tgt_vocab);
    let mut run = |mode: ContextMode| -> Result<(TrainedModel, Evaluation)> {
        let t = train_model(&data, cfg, mode)?;
        let e = evaluate(&t.model, &data.test, &data.tgt_vocab, cfg.max_out, cfg.decode_batch)?;
        progress(&format!(
            "{mode}: {} steps in {:.1}s, pronoun accuracy {:.4}, BLEU {:.2}",
            t.report.steps, t.seconds, e.pronoun_accuracy, e.bleu.bleu
        ));
        Ok((t, e))
    };
    let baseline = run(ContextMode::None)?;
    let gated = run(ContextMode::Gated)?;
    let concat = run(ContextMode::Concat)?;

    let shuffled = data.shuffled_test(cfg.seed.wrapping_add(17));
    let gated_shuffled = evaluate(&gated.0.model, &shuffled, &data.tgt_vocab, cfg.max_out, cfg.decode_batch)?;
    let p_gated_vs_baseline = bootstrap_significance(
        &baseline.1.hypotheses,
        &gated.1.hypotheses,
        &refs,
        cfg.bootstrap_samples,
        cfg.seed,
    )?;
    let p_real_vs_shuffled = bootstrap_significance(
        &gated_shuffled.hypotheses,
        &gated.1.hypotheses,
        &refs,
        cfg.bootstrap_samples,
        cfg.seed,
    )?;
    let records = attention_records(&gated.0.model, &data.test, &data.src_vocab, cfg.decode_batch)?;
    let agreement = agreement_report(&records, &data.test_annotations, MULTI_NOUN, cfg.seed, &Punctuation::default())?;
    Ok(ExperimentReport {
        baseline,
        gated,
        concat,
        gated_shuffled,
        p_gated_vs_baseline,
        p_real_vs_shuffled,
        agreement,
    })
}
