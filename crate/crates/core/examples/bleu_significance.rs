//! Corpus BLEU-4 and the paired bootstrap test.
//!
//! ```text
//! cargo run --release --example bleu_significance
//! ```

use ctxnmt::eval::{bootstrap_significance, corpus_bleu, SIGNIFICANCE_LEVEL};

fn toks(s: &str) -> Vec<String> {
    s.split_whitespace().map(String::from).collect()
}

fn main() -> ctxnmt::Result<()> {
    println!("{}", corpus_bleu(&[toks("a b c d")], &[toks("a b c d e")])?);

    // system B gets the pronoun right where system A guesses
    let pronouns = ["on", "ona", "ono", "oni"];
    let mut refs = Vec::new();
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for i in 0..400 {
        let p = pronouns[i % 4];
        let guess = pronouns[(i * 7 + i / 3) % 4];
        refs.push(toks(&format!("{p} upal snova segodnya .")));
        a.push(toks(&format!("{guess} upal snova segodnya .")));
        b.push(toks(&format!("{p} upal snova segodnya .")));
    }
    let (ba, bb) = (corpus_bleu(&a, &refs)?, corpus_bleu(&b, &refs)?);
    let p = bootstrap_significance(&a, &b, &refs, 1000, 1)?;
    println!("A {:.2}  B {:.2}  p = {p:.4}  significant: {}", ba.bleu, bb.bleu, p < SIGNIFICANCE_LEVEL);
    Ok(())
}
