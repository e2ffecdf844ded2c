//! Raw subtitle pairs → filtered, context-attached, BPE-segmented dataset.
//!
//! ```text
//! cargo run --release --example data_pipeline
//! ```

use std::io::Cursor;

use ctxnmt::data::{
    attach_context, build_dataset, filter_pairs, ingest, learn_bpe, read_prepared, write_prepared, ContextDirection,
    DEFAULT_MAX_GAP_SECONDS, DEFAULT_MIN_OVERLAP,
};

const RAW: &str = "\
m1\t0.0\t2.0\t0.95\tthe dog came in .\tsobaka voshla .
m1\t3.0\t4.5\t0.92\tit was tired .\tona ustala .
m1\t12.0\t13.0\t0.91\twhere is the cat ?\tgde koshka ?
m1\t14.0\t15.0\t0.85\tit left .\tona ushla .
m1\t15.5\t16.0\t0.99\tgood .\thorosho .
m2\t0.0\t1.0\t0.97\thello .\tprivet .
m2\t1.5\t2.5\t0.96\thow are you ?\tkak dela ?
m2\t3.0\t4.0\t0.93\tfine , thanks .\tspasibo , horosho .
m2\t4.2\t5.0\t0.94\tand you ?\ta ty ?
m2\t30.0\t31.0\t0.95\tbye .\tpoka .
m3\t0.0\t1.0\tnot-a-number\tbroken line\tx
";

fn main() -> ctxnmt::Result<()> {
    let (pairs, report) = ingest(Cursor::new(RAW))?;
    println!("{} pairs, skipped lines {:?}", pairs.len(), report.skipped_lines);
    let kept = filter_pairs(&pairs, DEFAULT_MIN_OVERLAP);
    println!("{} pairs with overlap ≥ {DEFAULT_MIN_OVERLAP}", kept.len());

    let examples = attach_context(&kept, DEFAULT_MAX_GAP_SECONDS, ContextDirection::Previous)?;
    for ex in &examples {
        let ctx = if ex.has_real_context { ex.context.join(" ") } else { "-".into() };
        println!("  [{ctx}]  {}  →  {}", ex.source.join(" "), ex.target.join(" "));
    }

    let src_lines: Vec<String> = kept.iter().map(|p| p.source.join(" ")).collect();
    let tgt_lines: Vec<String> = kept.iter().map(|p| p.target.join(" ")).collect();
    let (src_bpe, tgt_bpe) = (learn_bpe(&src_lines, 20)?, learn_bpe(&tgt_lines, 20)?);
    let data = build_dataset(&examples, &src_bpe, &tgt_bpe);
    println!("segmented: {}", data.rows[0].target.join(" "));

    let dir = std::env::temp_dir().join(format!("ctxnmt-pipeline-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("data.tsv");
    write_prepared(&path, &data)?;
    assert_eq!(read_prepared(&path)?, data);
    println!("wrote and re-read {} rows at {}", data.len(), path.display());
    let (sv, tv) = data.vocabularies();
    println!("vocabularies: {} source, {} target symbols", sv.len(), tv.len());
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
