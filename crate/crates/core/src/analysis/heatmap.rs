use std::fmt::Write;
use std::fs;
use std::path::Path;

use super::AttentionRecord;
use crate::error::Result;

const CELL: usize = 24;
const LABEL_WIDTH: usize = 110;
const LABEL_HEIGHT: usize = 90;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// SVG attention map: source tokens down the left, context tokens along the
/// top, one cell per weight. Darker means more attention; the scale is
/// normalised by the record's maximum weight.
pub fn heatmap_svg(record: &AttentionRecord) -> String {
    let (rows, cols) = (record.rows(), record.cols());
    let width = LABEL_WIDTH + cols * CELL + 10;
    let height = LABEL_HEIGHT + rows * CELL + 10;
    let max = record.weights.iter().cloned().fold(0.0f64, f64::max);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="monospace" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="{width}" height="{height}" fill="white"/>"#);
    for (j, tok) in record.ctx_tokens.iter().enumerate() {
        let x = LABEL_WIDTH + j * CELL + CELL / 2;
        let y = LABEL_HEIGHT - 6;
        let _ = writeln!(
            svg,
            r#"<text x="{x}" y="{y}" transform="rotate(-60 {x} {y})">{}</text>"#,
            escape(tok)
        );
    }
    for (i, tok) in record.src_tokens.iter().enumerate() {
        let y = LABEL_HEIGHT + i * CELL + CELL * 2 / 3;
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{y}" text-anchor="end">{}</text>"#,
            LABEL_WIDTH - 6,
            escape(tok)
        );
        for j in 0..cols {
            let w = record.row(i)[j];
            let intensity = if max > 0.0 { w / max } else { 0.0 };
            let shade = (255.0 * (1.0 - intensity)).round() as u8;
            let _ = writeln!(
                svg,
                r#"<rect class="cell" x="{}" y="{}" width="{CELL}" height="{CELL}" fill="rgb({shade},{shade},255)"><title>{w:.4}</title></rect>"#,
                LABEL_WIDTH + j * CELL,
                LABEL_HEIGHT + i * CELL
            );
        }
    }
    svg.push_str("</svg>\n");
    svg
}

pub fn heatmap_export(record: &AttentionRecord, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, heatmap_svg(record))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn structure() {
        let one = AttentionRecord {
            example_id: 0,
            src_tokens: vec!["it".into()],
            ctx_tokens: vec!["cat".into()],
            weights: vec![1.0],
        };
        let svg = heatmap_svg(&one);
        assert_eq!(svg.matches(r#"class="cell""#).count(), 1);
        assert!(svg.contains("rgb(0,0,255)"));
        let r = AttentionRecord {
            example_id: 1,
            src_tokens: vec!["it".into(), "<eos>".into()],
            ctx_tokens: vec!["<bos>".into(), "a".into(), "b".into()],
            weights: vec![0.2, 0.3, 0.5, 1.0, 0.0, 0.0],
        };
        let svg = heatmap_svg(&r);
        assert_eq!(svg.matches(r#"class="cell""#).count(), 6);
        assert!(svg.contains("&lt;bos&gt;"));
        assert_eq!(svg, heatmap_svg(&r));
    }
}
