use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use super::manifest::manifest_path;
use super::*;
use crate::analysis::{
    agreement_report, confusion_table, curves, heatmap_export, render_agreement_table, render_confusion_table,
    render_top_words_table, top_context_words, useful_mass, write_series_csv, AgreementRow, AttentionRecord, Pick,
    PositionFilter, Punctuation,
};
use crate::context::{attention_records, dump_attention, read_attention_dump};
use crate::data::{
    attach_context, build_dataset, detokenize, filter_pairs, gen_synthetic, learn_bpe, read_lines, read_prepared,
    read_raw_file, shuffle_contexts, write_prepared, BpeModel, ContextDirection, Example, PreparedDataset,
    SyntheticSpec, TextExample, Vocab,
};
use crate::eval::{
    bootstrap_significance, build_pronoun_testset, corpus_bleu, read_annotations, sentence_stats, split_by_gender,
    write_annotations, Gender, SIGNIFICANCE_LEVEL,
};
use crate::special;
use crate::trainer::{train, OptimizerConfig, TrainOptions};
use crate::transformer::{Batch, ContextMode, DecodeMode, Model, ModelConfig};

pub(super) fn dispatch(cmd: &Command) -> Result<i32> {
    let done = |r: Result<()>| r.map(|()| 0);
    match cmd {
        Command::Prepare(a) => done(prepare(a)),
        Command::GenSynthetic(a) => done(gen(a)),
        Command::Train(a) => done(train_cmd(a)),
        Command::Translate(a) => done(translate(a)),
        Command::Bleu(a) => done(bleu(a)),
        Command::Compare(a) => compare(a),
        Command::DumpAttention(a) => done(dump(a)),
        Command::Analyze(a) => done(analyze(a)),
        Command::BuildTestset(a) => done(build_testset(a)),
        Command::GradCheck(a) => grad_check(a),
    }
}

fn words(line: &str) -> Vec<String> {
    line.split_whitespace().map(str::to_string).collect()
}

/// Plain lines, or the target column when the file is in prepared format.
fn read_references(path: &Path) -> Result<Vec<Vec<String>>> {
    let lines = read_lines(path)?;
    let prepared = !lines.is_empty() && lines.iter().all(|l| l.matches('\t').count() == 2);
    if prepared {
        return Ok(read_prepared(path)?.rows.into_iter().map(|r| detokenize(&r.target)).collect());
    }
    Ok(lines.iter().map(|l| detokenize(&words(l))).collect())
}

fn read_hypotheses(path: &Path) -> Result<Vec<Vec<String>>> {
    Ok(read_lines(path)?.iter().map(|l| detokenize(&words(l))).collect())
}

fn direction_name(d: Direction) -> &'static str {
    match d {
        Direction::Previous => "previous",
        Direction::Next => "next",
        Direction::None => "none",
        Direction::Shuffled => "shuffled",
    }
}

fn write_dir_manifest(m: &RunManifest, dir: &Path, direction: &str) -> Result<()> {
    let mut text = m.render();
    text.push_str(&format!("direction={direction}\n"));
    fs::write(manifest_path(dir, true), text)?;
    Ok(())
}

fn prepare(a: &PrepareArgs) -> Result<()> {
    let (pairs, report) = read_raw_file(&a.raw)?;
    if report.skipped > 0 {
        eprintln!("skipped {} malformed lines (first: {:?})", report.skipped, report.skipped_lines.first());
    }
    let kept = filter_pairs(&pairs, a.min_overlap);
    let direction = match a.direction {
        Direction::Previous => ContextDirection::Previous,
        Direction::Next => ContextDirection::Next,
        Direction::None => ContextDirection::None,
        Direction::Shuffled => ContextDirection::Shuffled { seed: a.common.seed },
    };
    let examples = attach_context(&kept, a.max_gap, direction)?;
    let (src_bpe, tgt_bpe) = match &a.bpe_from {
        Some(dir) => (BpeModel::load(dir.join("src.bpe"))?, BpeModel::load(dir.join("tgt.bpe"))?),
        None => {
            let src: Vec<String> = kept.iter().map(|p| p.source.join(" ")).collect();
            let tgt: Vec<String> = kept.iter().map(|p| p.target.join(" ")).collect();
            (learn_bpe(&src, a.src_merges)?, learn_bpe(&tgt, a.tgt_merges)?)
        }
    };
    fs::create_dir_all(&a.out)?;
    src_bpe.save(a.out.join("src.bpe"))?;
    tgt_bpe.save(a.out.join("tgt.bpe"))?;
    let data = build_dataset(&examples, &src_bpe, &tgt_bpe);
    write_prepared(a.out.join("data.tsv"), &data)?;
    let (sv, tv) = data.vocabularies();
    sv.save(a.out.join("src.vocab"))?;
    tv.save(a.out.join("tgt.vocab"))?;
    let with_ctx = data.rows.iter().filter(|r| r.has_real_context).count();
    eprintln!("kept {} of {} pairs, {with_ctx} with context", data.len(), pairs.len());
    let mut m = RunManifest::new("prepare", format!("{a:?}"), a.common.seed);
    m.inputs.push(a.raw.clone());
    m.outputs = ["data.tsv", "src.bpe", "tgt.bpe", "src.vocab", "tgt.vocab"].iter().map(|f| a.out.join(f)).collect();
    write_dir_manifest(&m, &a.out, direction_name(a.direction))
}

fn gen(a: &GenSyntheticArgs) -> Result<()> {
    let corpus = gen_synthetic(&SyntheticSpec {
        nouns: a.nouns,
        distractor_prob: a.distractor_prob,
        size: a.size,
        seed: a.common.seed,
    })?;
    fs::create_dir_all(&a.out)?;
    write_prepared(a.out.join("data.tsv"), &PreparedDataset { rows: corpus.examples })?;
    write_annotations(a.out.join("annotations.tsv"), &corpus.annotations)?;
    let mut m = RunManifest::new("gen-synthetic", format!("{a:?}"), a.common.seed);
    m.outputs = vec![a.out.join("data.tsv"), a.out.join("annotations.tsv")];
    write_dir_manifest(&m, &a.out, "previous")
}

fn mode_name(mode: ContextArg) -> &'static str {
    match mode {
        ContextArg::None => "none",
        ContextArg::Prev => "prev",
        ContextArg::Next => "next",
        ContextArg::Shuffled => "shuffled",
        ContextArg::Concat => "concat",
    }
}

/// Rejects context modes the data cannot honour.
fn check_context_data(mode: ContextArg, data: &Path, rows: &[TextExample]) -> Result<()> {
    if mode == ContextArg::None {
        return Ok(());
    }
    let manifest = data.parent().map(|d| d.join("manifest.txt"));
    let direction = manifest.and_then(|m| RunManifest::lookup(m, "direction"));
    let conflict = match (mode, direction.as_deref()) {
        (ContextArg::Prev | ContextArg::Shuffled | ContextArg::Concat, Some(d)) => d == "next",
        (ContextArg::Next, Some(d)) => d != "next",
        _ => false,
    };
    if conflict {
        return Err(Error::config(format!(
            "--context-mode {} conflicts with data prepared with --direction {}",
            mode_name(mode),
            direction.unwrap_or_default()
        )));
    }
    if !rows.iter().any(|r| r.has_real_context) {
        return Err(Error::config(format!(
            "--context-mode {} needs context sentences, but {} has none",
            mode_name(mode),
            data.display()
        )));
    }
    Ok(())
}

fn load_rows(path: &Path, shuffle: Option<u64>) -> Result<PreparedDataset> {
    let mut d = read_prepared(path)?;
    if let Some(seed) = shuffle {
        shuffle_contexts(&mut d.rows, seed);
    }
    Ok(d)
}

fn train_cmd(a: &TrainArgs) -> Result<()> {
    let seed = a.common.seed;
    let shuffle = (a.context_mode == ContextArg::Shuffled).then_some(seed);
    let data = load_rows(&a.data, shuffle)?;
    check_context_data(a.context_mode, &a.data, &data.rows)?;
    let mode = match a.context_mode {
        ContextArg::None => ContextMode::None,
        ContextArg::Prev | ContextArg::Next | ContextArg::Shuffled => ContextMode::Gated,
        ContextArg::Concat => ContextMode::Concat,
    };
    let (built_src, built_tgt) = data.vocabularies();
    let src = a.src_vocab.as_ref().map(Vocab::load).transpose()?.unwrap_or(built_src);
    let tgt = a.tgt_vocab.as_ref().map(Vocab::load).transpose()?.unwrap_or(built_tgt);
    let config = ModelConfig {
        layers: a.layers,
        heads: a.heads,
        d_model: a.d_model,
        d_ff: a.d_ff,
        src_vocab: src.len(),
        tgt_vocab: tgt.len(),
        dropout: a.dropout,
        label_smoothing: a.label_smoothing,
        max_len: a.max_len,
        context_mode: mode,
    };
    let encoded = data.encode(&src, &tgt, a.max_len);
    eprintln!(
        "{} training examples, {} unknown tokens, {} truncated contexts",
        encoded.examples.len(),
        encoded.unknown_tokens,
        encoded.truncated_contexts
    );
    let dev = match &a.dev {
        Some(p) => load_rows(p, shuffle)?.encode(&src, &tgt, a.max_len).examples,
        None => Vec::new(),
    };
    let optimizer = OptimizerConfig {
        beta1: a.beta1,
        beta2: a.beta2,
        epsilon: a.epsilon,
        warmup_steps: a.warmup_steps,
        d_model: a.d_model,
        token_budget: a.token_budget,
        max_steps: a.max_steps,
        checkpoint_every: a.checkpoint_every,
        seed,
        clip_norm: (a.clip_norm > 0.0).then_some(a.clip_norm),
        lr_scale: a.lr_scale,
    };
    let mut model = Model::<f32>::new(config, seed)?;
    fs::create_dir_all(&a.out)?;
    src.save(a.out.join("src.vocab"))?;
    tgt.save(a.out.join("tgt.vocab"))?;
    let log = a.out.join("metrics.log");
    File::create(&log)?;
    let mut opts = TrainOptions::new(optimizer);
    opts.checkpoint_dir = Some(a.out.clone());
    opts.metrics_log = Some(log);
    opts.patience = a.patience;
    let report = train(&mut model, &encoded.examples, &dev, &opts)?;
    // selected parameters: best dev loss, or the final ones without a dev set
    model.save(a.out.join("model.ckpt"))?;
    eprintln!(
        "{} steps; first loss {:.4}, final loss {:.4}, best dev loss {}",
        report.steps,
        report.first_loss,
        report.final_loss,
        report.best_dev_loss.map_or("-".into(), |d| format!("{d:.4}"))
    );
    let mut m = RunManifest::new("train", format!("{a:?}"), seed);
    m.inputs.push(a.data.clone());
    m.inputs.extend(a.dev.clone());
    m.outputs = ["model.ckpt", "last.ckpt", "best.ckpt", "metrics.log", "src.vocab", "tgt.vocab"]
        .iter()
        .map(|f| a.out.join(f))
        .filter(|p| p.exists())
        .collect();
    m.write(manifest_path(&a.out, true))
}

fn translate(a: &TranslateArgs) -> Result<()> {
    let model = Model::<f32>::load(&a.model)?;
    let (src, tgt) = (Vocab::load(&a.src_vocab)?, Vocab::load(&a.tgt_vocab)?);
    let data = load_rows(&a.data, a.shuffle_contexts.then_some(a.common.seed))?;
    let examples = data.encode(&src, &tgt, model.config.max_len).examples;
    let mode = if a.greedy { DecodeMode::Greedy } else { DecodeMode::Beam(a.beam) };
    let mut w = BufWriter::new(File::create(&a.out)?);
    for ex in &examples {
        let t = model.translate(&ex.source_ids, &ex.context_ids, mode, a.max_out)?;
        if t.truncated {
            eprintln!("example {}: no end of sentence within {} tokens", ex.example_id, a.max_out);
        }
        writeln!(w, "{}", detokenize(&tgt.decode(&t.ids)).join(" "))?;
    }
    w.flush()?;
    let mut m = RunManifest::new("translate", format!("{a:?}"), a.common.seed);
    m.inputs = vec![a.model.clone(), a.data.clone()];
    m.outputs = vec![a.out.clone()];
    m.write(manifest_path(&a.out, false))
}

fn bleu(a: &BleuArgs) -> Result<()> {
    let r = corpus_bleu(&read_hypotheses(&a.hyp)?, &read_references(&a.reference)?)?;
    println!("{r}");
    println!("{}", r.to_record());
    Ok(())
}

/// Exit code 0 when B is significantly better than A, 1 otherwise.
fn compare(a: &CompareArgs) -> Result<i32> {
    let refs = read_references(&a.reference)?;
    let (ha, hb) = (read_hypotheses(&a.hyp_a)?, read_hypotheses(&a.hyp_b)?);
    let (ba, bb) = (corpus_bleu(&ha, &refs)?, corpus_bleu(&hb, &refs)?);
    let p = bootstrap_significance(&ha, &hb, &refs, a.samples, a.common.seed)?;
    println!("A: {ba}\nB: {bb}\np = {p:.4} ({} resamples)", a.samples);
    if p < SIGNIFICANCE_LEVEL {
        println!("B is significantly better than A (p < {SIGNIFICANCE_LEVEL})");
        Ok(0)
    } else {
        println!("not significant at p < {SIGNIFICANCE_LEVEL}");
        Ok(1)
    }
}

fn dump(a: &DumpArgs) -> Result<()> {
    let model = Model::<f32>::load(&a.model)?;
    let src = Vocab::load(&a.src_vocab)?;
    let data = read_prepared(&a.data)?;
    // the target side is not used by the encoder
    let (_, tgt) = data.vocabularies();
    let examples = data.encode(&src, &tgt, model.config.max_len).examples;
    let records = attention_records(&model, &examples, &src, a.batch_size)?;
    dump_attention(BufWriter::new(File::create(&a.out)?), &records)?;
    let mut m = RunManifest::new("dump-attention", format!("{a:?}"), a.common.seed);
    m.inputs = vec![a.model.clone(), a.data.clone()];
    m.outputs = vec![a.out.clone()];
    m.write(manifest_path(&a.out, false))
}

fn read_dump(path: &Path) -> Result<Vec<AttentionRecord>> {
    let records = read_attention_dump(BufReader::new(File::open(path)?), &path.display().to_string())?;
    for r in &records {
        r.validate(1e-4)?;
    }
    Ok(records)
}

fn require<'a>(p: &'a Option<PathBuf>, flag: &str) -> Result<&'a PathBuf> {
    p.as_ref().ok_or_else(|| Error::config(format!("this analysis needs --{flag}")))
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

/// `example_id<TAB>index` or `example_id<TAB>-` lines.
fn read_picks(path: &Path) -> Result<HashMap<usize, Pick>> {
    let name = path.display().to_string();
    let mut out = HashMap::new();
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: &str| Error::Parse {
            path: name.clone(),
            line: i + 1,
            message: message.into(),
        };
        let (id, pick) = line.split_once('\t').ok_or_else(|| bad("expected example_id<TAB>index"))?;
        let id: usize = id.trim().parse().map_err(|_| bad("bad example id"))?;
        let pick = match pick.trim() {
            "-" => Pick::Abstain,
            v => Pick::Index(v.parse().map_err(|_| bad("bad index"))?),
        };
        out.insert(id, pick);
    }
    Ok(out)
}

fn analyze(a: &AnalyzeArgs) -> Result<()> {
    let records = read_dump(&a.dump)?;
    let punct = match &a.punctuation {
        Some(p) => Punctuation::with_extra(read_lines(p)?),
        None => Punctuation::default(),
    };
    match a.kind {
        Analysis::UsefulMass => {
            let mut text = String::from("example_id,useful_mass\n");
            let mut total = 0.0;
            for r in &records {
                let m = useful_mass(r, &punct);
                total += m;
                text.push_str(&format!("{},{m}\n", r.example_id));
            }
            if let Some(p) = &a.out {
                fs::write(p, text)?;
            }
            println!(
                "mean useful attention mass {:.4} over {} records",
                total / records.len().max(1) as f64,
                records.len()
            );
        }
        Analysis::TopWords => {
            let all = top_context_words(&records, &punct, a.min_count, a.top_k, PositionFilter::All);
            let later = top_context_words(&records, &punct, a.min_count, a.top_k, PositionFilter::AfterFirst);
            emit(&a.out, &render_top_words_table(&all, &later))?;
        }
        Analysis::Curves => {
            let dir = require(&a.out, "out")?;
            let bleu_input = match (&a.hyp, &a.reference) {
                (Some(h), Some(r)) => {
                    let (hyps, refs) = (read_hypotheses(h)?, read_references(r)?);
                    if hyps.len() != records.len() || refs.len() != records.len() {
                        return Err(Error::invalid(format!(
                            "{} hypotheses and {} references for {} attention records",
                            hyps.len(),
                            refs.len(),
                            records.len()
                        )));
                    }
                    let lens: Vec<usize> = records
                        .iter()
                        .map(|r| r.src_tokens.iter().filter(|t| !special::is_special(t)).count())
                        .collect();
                    let stats: Vec<_> = hyps.iter().zip(&refs).map(|(h, r)| sentence_stats(h, r)).collect();
                    Some((lens, stats))
                }
                (None, None) => None,
                _ => return Err(Error::config("--hyp and --ref must be given together")),
            };
            let c = curves(
                &records,
                &punct,
                a.cohort_length,
                bleu_input.as_ref().map(|(l, s)| (l.as_slice(), s.as_slice())),
            )?;
            fs::create_dir_all(dir)?;
            write_series_csv(dir.join("mass_by_source_length.csv"), "source_length", "useful_mass", &c.by_source_length)?;
            write_series_csv(dir.join("mass_by_context_length.csv"), "context_length", "useful_mass", &c.by_context_length)?;
            write_series_csv(dir.join("mass_by_position.csv"), "position", "useful_mass", &c.by_position)?;
            if bleu_input.is_some() {
                write_series_csv(dir.join("bleu_by_source_length.csv"), "source_length", "bleu", &c.bleu_by_source_length)?;
            }
            println!("position cohort: source length {}", c.position_cohort_length);
        }
        Analysis::Agreement => {
            let anns = read_annotations(require(&a.annotations, "annotations")?)?;
            let mut pronouns: Vec<&str> = anns.iter().map(|x| x.pronoun.as_str()).collect();
            pronouns.sort_unstable();
            pronouns.dedup();
            let mut rows = Vec::new();
            let mut text = String::new();
            for p in pronouns {
                let subset: Vec<_> = anns.iter().filter(|x| x.pronoun == p).cloned().collect();
                // pronouns without a qualifying example are left out of the table
                let Ok(rep) = agreement_report(&records, &subset, a.min_nouns, a.common.seed, &punct) else {
                    continue;
                };
                text.push_str(&format!("{p}: {}\n", rep.summary()));
                rows.push(AgreementRow {
                    pronoun: p.to_string(),
                    random: rep.random.percent(),
                    first: rep.first.percent(),
                    last: rep.last.percent(),
                    attention: rep.attention.percent(),
                });
            }
            if rows.is_empty() {
                return Err(Error::invalid(format!(
                    "no annotated example with at least {} context nouns has an attention record",
                    a.min_nouns
                )));
            }
            text.push_str(&render_agreement_table(&rows, &format!("at least {} nouns in context", a.min_nouns)));
            emit(&a.out, &text)?;
        }
        Analysis::Confusion => {
            let anns = read_annotations(require(&a.annotations, "annotations")?)?;
            let other = read_picks(require(&a.other_picks, "other-picks")?)?;
            let have: std::collections::HashSet<usize> = records.iter().map(|r| r.example_id).collect();
            // same join and filter as agreement_report, so picks line up
            let joined: Vec<_> = anns
                .iter()
                .filter(|x| other.contains_key(&x.example_id) && have.contains(&x.example_id))
                .filter(|x| x.context_noun_count >= a.min_nouns)
                .cloned()
                .collect();
            let rep = agreement_report(&records, &joined, a.min_nouns, a.common.seed, &punct)?;
            let picks_b: Vec<Pick> = joined.iter().map(|x| other[&x.example_id]).collect();
            let c = confusion_table(&rep.attention_picks, &picks_b, &rep.spans)?;
            emit(&a.out, &render_confusion_table(&c, &a.other_name))?;
        }
        Analysis::Heatmap => {
            let out = require(&a.out, "out")?;
            let rec = match a.example_id {
                Some(id) => records
                    .iter()
                    .find(|r| r.example_id == id)
                    .ok_or_else(|| Error::invalid(format!("no attention record for example {id}")))?,
                None => records.first().ok_or_else(|| Error::invalid("empty attention dump"))?,
            };
            heatmap_export(rec, out)?;
        }
    }
    if let Some(out) = &a.out {
        let mut m = RunManifest::new("analyze", format!("{a:?}"), a.common.seed);
        m.inputs.push(a.dump.clone());
        m.inputs.extend(a.annotations.clone());
        m.outputs.push(out.clone());
        m.write(manifest_path(out, a.kind == Analysis::Curves))?;
    }
    Ok(())
}

fn build_testset(a: &BuildTestsetArgs) -> Result<()> {
    let data = read_prepared(&a.data)?;
    let anns = read_annotations(&a.annotations)?;
    let pronouns: Vec<&str> = a.pronouns.iter().map(|s| s.trim()).filter(|s| !s.is_empty()).collect();
    let set = build_pronoun_testset(&data.rows, &anns, &pronouns, a.require_noun, a.min_nouns)?;
    fs::create_dir_all(&a.out)?;
    let mut outputs = vec![a.out.join("subset.tsv"), a.out.join("subset.annotations.tsv"), a.out.join("counts.tsv")];
    write_prepared(&outputs[0], &PreparedDataset { rows: set.examples.clone() })?;
    write_annotations(&outputs[1], &set.annotations)?;
    fs::write(&outputs[2], set.render_counts())?;
    print!("{}", set.render_counts());
    if a.split_gender {
        let split = split_by_gender(&set)?;
        for g in Gender::ALL {
            let p = a.out.join(format!("subset.{}.tsv", g.label()));
            write_prepared(&p, &PreparedDataset { rows: split.get(g).to_vec() })?;
            println!("{}\t{}", g.label(), split.get(g).len());
            outputs.push(p);
        }
    }
    let mut m = RunManifest::new("build-testset", format!("{a:?}"), a.common.seed);
    m.inputs = vec![a.data.clone(), a.annotations.clone()];
    m.outputs = outputs;
    m.write(manifest_path(&a.out, true))
}

/// Exit code 0 below tolerance, 3 otherwise.
fn grad_check(a: &GradCheckArgs) -> Result<i32> {
    let mode = match a.context_mode {
        ContextArg::None => ContextMode::None,
        ContextArg::Concat => ContextMode::Concat,
        _ => ContextMode::Gated,
    };
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
    let batch = Batch::from_examples(&refs, 64)?;
    let mut worst: f64 = 0.0;
    for seed in a.common.seed..a.common.seed + a.seeds {
        let model = Model::<f64>::new(ModelConfig::tiny(24, 24, mode), seed)?;
        let r = model.gradient_check(&batch, a.step, seed)?;
        if r.max_rel_err >= a.tolerance {
            if let Some((name, index, analytic, numeric)) = &r.worst {
                eprintln!("seed {seed}: {name}[{index}] analytic {analytic:.6e} numeric {numeric:.6e}");
            }
        }
        worst = worst.max(r.max_rel_err);
    }
    println!("max relative error {worst:.3e} over {} seeds (tolerance {:e})", a.seeds, a.tolerance);
    Ok(if worst < a.tolerance { 0 } else { 3 })
}
