//! Hand-written SVG figures: the conditional-overlap heatmap and the
//! activation/near-tie scatter.

use std::fmt::Write;

use crate::schema::Schema;
use crate::separability::OverlapMatrix;
use crate::stability::StabilityRow;

const FONT: &str = "font-family=\"Helvetica, Arial, sans-serif\"";

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Linear blend from near-white to `to` at `x` in [0, 1].
fn blend(x: f64, to: (u8, u8, u8)) -> String {
    let x = x.clamp(0.0, 1.0);
    let from = (247.0, 247.0, 247.0);
    let mix = |a: f64, b: u8| (a + (b as f64 - a) * x).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(from.0, to.0), mix(from.1, to.1), mix(from.2, to.2))
}

/// Q×Q grid of CondOv(row → column). Absent cells are hatched, masked
/// within-category cells are flat grey, and within-category blocks are
/// outlined.
pub fn render_heatmap(matrix: &OverlapMatrix, schema: &Schema) -> String {
    let n = matrix.criterion_ids.len();
    let cell = 40.0;
    let (left, top) = (60.0, 70.0);
    let width = left + cell * n as f64 + 90.0;
    let height = top + cell * n as f64 + 30.0;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" viewBox=\"0 0 {width:.0} {height:.0}\">"
    );
    svg.push_str(
        "<defs><pattern id=\"absent\" width=\"6\" height=\"6\" patternUnits=\"userSpaceOnUse\" patternTransform=\"rotate(45)\">\
         <rect width=\"6\" height=\"6\" fill=\"#ffffff\"/><line x1=\"0\" y1=\"0\" x2=\"0\" y2=\"6\" stroke=\"#9e9e9e\" stroke-width=\"2\"/></pattern></defs>\n",
    );
    let _ = writeln!(svg, "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>");
    let mask_note = if matrix.mask_within_category { ", within-category masked" } else { "" };
    let _ = writeln!(
        svg,
        "<text x=\"{left}\" y=\"20\" {FONT} font-size=\"14\">Conditional overlap, t = {}{mask_note}</text>",
        matrix.threshold
    );
    let _ = writeln!(
        svg,
        "<text x=\"{left}\" y=\"38\" {FONT} font-size=\"10\" fill=\"#555555\">row = antecedent q, column = q'</text>"
    );

    for (i, id) in matrix.criterion_ids.iter().enumerate() {
        let c = left + cell * (i as f64 + 0.5);
        let r = top + cell * (i as f64 + 0.5);
        let _ = writeln!(svg, "<text x=\"{c:.1}\" y=\"{:.1}\" {FONT} font-size=\"11\" text-anchor=\"middle\">{}</text>", top - 8.0, escape(id));
        let _ = writeln!(svg, "<text x=\"{:.1}\" y=\"{:.1}\" {FONT} font-size=\"11\" text-anchor=\"end\">{}</text>", left - 8.0, r + 4.0, escape(id));
    }

    for q in 0..n {
        for r in 0..n {
            let (x, y) = (left + cell * r as f64, top + cell * q as f64);
            let value = matrix.entries[q][r];
            let (fill, label) = if matrix.is_masked(q, r) {
                ("#d9d9d9".to_string(), None)
            } else {
                match value {
                    None => ("url(#absent)".to_string(), None),
                    Some(v) => (blend(v, (178, 24, 43)), Some(v)),
                }
            };
            let _ = writeln!(
                svg,
                "<rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{cell}\" height=\"{cell}\" fill=\"{fill}\" stroke=\"#ffffff\" stroke-width=\"1\"/>"
            );
            if let Some(v) = label {
                let ink = if v > 0.6 { "#ffffff" } else { "#222222" };
                let _ = writeln!(
                    svg,
                    "<text x=\"{:.1}\" y=\"{:.1}\" {FONT} font-size=\"10\" text-anchor=\"middle\" fill=\"{ink}\">{v:.2}</text>",
                    x + cell / 2.0,
                    y + cell / 2.0 + 3.5
                );
            }
        }
    }

    // within-category blocks, one rectangle per pair of same-category runs
    let category = |id: &str| schema.criterion_index(id).map(|q| schema.category_of(q));
    let mut runs: Vec<(usize, usize, Option<usize>)> = Vec::new();
    for (i, id) in matrix.criterion_ids.iter().enumerate() {
        let c = category(id);
        match runs.last_mut() {
            Some((_, end, last)) if *last == c && c.is_some() => *end = i + 1,
            _ => runs.push((i, i + 1, c)),
        }
    }
    for &(r0, r1, rc) in &runs {
        for &(c0, c1, cc) in &runs {
            if rc.is_some() && rc == cc {
                let _ = writeln!(
                    svg,
                    "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"none\" stroke=\"#222222\" stroke-width=\"2\"/>",
                    left + cell * c0 as f64,
                    top + cell * r0 as f64,
                    cell * (c1 - c0) as f64,
                    cell * (r1 - r0) as f64
                );
            }
        }
    }

    // legend
    let lx = left + cell * n as f64 + 20.0;
    for step in 0..=10 {
        let v = 1.0 - step as f64 / 10.0;
        let _ = writeln!(
            svg,
            "<rect x=\"{lx:.1}\" y=\"{:.1}\" width=\"14\" height=\"10\" fill=\"{}\"/>",
            top + step as f64 * 10.0,
            blend(v, (178, 24, 43))
        );
    }
    let _ = writeln!(svg, "<text x=\"{:.1}\" y=\"{:.1}\" {FONT} font-size=\"9\">1.0</text>", lx + 18.0, top + 8.0);
    let _ = writeln!(svg, "<text x=\"{:.1}\" y=\"{:.1}\" {FONT} font-size=\"9\">0.0</text>", lx + 18.0, top + 108.0);
    let _ = writeln!(svg, "<rect x=\"{lx:.1}\" y=\"{:.1}\" width=\"14\" height=\"10\" fill=\"url(#absent)\"/>", top + 125.0);
    let _ = writeln!(svg, "<text x=\"{:.1}\" y=\"{:.1}\" {FONT} font-size=\"9\">absent</text>", lx + 18.0, top + 133.0);
    if matrix.mask_within_category {
        let _ = writeln!(svg, "<rect x=\"{lx:.1}\" y=\"{:.1}\" width=\"14\" height=\"10\" fill=\"#d9d9d9\"/>", top + 143.0);
        let _ = writeln!(svg, "<text x=\"{:.1}\" y=\"{:.1}\" {FONT} font-size=\"9\">masked</text>", lx + 18.0, top + 151.0);
    }
    svg.push_str("</svg>\n");
    svg
}

/// Scatter of activation (x) against near-tie rate (y), colored by the
/// unanimous-yes rate. Criteria with an empty focus set are listed under the
/// plot instead of drawn.
pub fn render_stability_landscape(rows: &[StabilityRow]) -> String {
    let (left, top, plot_w, plot_h) = (60.0, 40.0, 420.0, 300.0);
    let width = left + plot_w + 110.0;
    let height = top + plot_h + 70.0;
    let drawn: Vec<&StabilityRow> = rows.iter().filter(|r| r.nt.is_some()).collect();
    let omitted: Vec<&str> = rows.iter().filter(|r| r.nt.is_none()).map(|r| r.criterion_id.as_str()).collect();
    let x_max = drawn
        .iter()
        .map(|r| r.activation)
        .fold(0.0f64, f64::max)
        .max(0.01);
    let x_max = (x_max * 20.0).ceil() / 20.0;
    let y_max = drawn
        .iter()
        .filter_map(|r| r.nt)
        .fold(0.0f64, f64::max)
        .max(0.01);
    let y_max = ((y_max * 10.0).ceil() / 10.0).min(1.0);
    let px = |x: f64| left + plot_w * x / x_max;
    let py = |y: f64| top + plot_h * (1.0 - y / y_max);
    let threshold = rows.first().map(|r| r.threshold).unwrap_or(0);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" viewBox=\"0 0 {width:.0} {height:.0}\">"
    );
    let _ = writeln!(svg, "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>");
    let _ = writeln!(
        svg,
        "<text x=\"{left}\" y=\"22\" {FONT} font-size=\"14\">Stability landscape, t = {threshold}</text>"
    );
    let _ = writeln!(
        svg,
        "<rect x=\"{left}\" y=\"{top}\" width=\"{plot_w}\" height=\"{plot_h}\" fill=\"none\" stroke=\"#444444\"/>"
    );
    for i in 0..=4 {
        let fx = x_max * i as f64 / 4.0;
        let fy = y_max * i as f64 / 4.0;
        let _ = writeln!(
            svg,
            "<text x=\"{:.1}\" y=\"{:.1}\" {FONT} font-size=\"10\" text-anchor=\"middle\">{:.1}%</text>",
            px(fx),
            top + plot_h + 16.0,
            fx * 100.0
        );
        let _ = writeln!(
            svg,
            "<text x=\"{:.1}\" y=\"{:.1}\" {FONT} font-size=\"10\" text-anchor=\"end\">{:.1}%</text>",
            left - 6.0,
            py(fy) + 3.5,
            fy * 100.0
        );
    }
    let _ = writeln!(
        svg,
        "<text x=\"{:.1}\" y=\"{:.1}\" {FONT} font-size=\"11\" text-anchor=\"middle\">activation rate</text>",
        left + plot_w / 2.0,
        top + plot_h + 34.0
    );
    let _ = writeln!(
        svg,
        "<text x=\"14\" y=\"{:.1}\" {FONT} font-size=\"11\" text-anchor=\"middle\" transform=\"rotate(-90 14 {:.1})\">near-tie rate</text>",
        top + plot_h / 2.0,
        top + plot_h / 2.0
    );

    for r in &drawn {
        let (x, y) = (px(r.activation), py(r.nt.unwrap()));
        let fill = blend(r.uy.unwrap_or(0.0), (33, 102, 172));
        let _ = writeln!(
            svg,
            "<circle cx=\"{x:.1}\" cy=\"{y:.1}\" r=\"6\" fill=\"{fill}\" stroke=\"#222222\" stroke-width=\"0.8\"/>"
        );
        let _ = writeln!(
            svg,
            "<text x=\"{:.1}\" y=\"{:.1}\" {FONT} font-size=\"10\">{}</text>",
            x + 8.0,
            y - 6.0,
            escape(&r.criterion_id)
        );
    }

    let lx = left + plot_w + 20.0;
    let _ = writeln!(svg, "<text x=\"{lx:.1}\" y=\"{:.1}\" {FONT} font-size=\"10\">UY</text>", top + 8.0);
    for step in 0..=10 {
        let v = 1.0 - step as f64 / 10.0;
        let _ = writeln!(
            svg,
            "<rect x=\"{lx:.1}\" y=\"{:.1}\" width=\"14\" height=\"10\" fill=\"{}\"/>",
            top + 14.0 + step as f64 * 10.0,
            blend(v, (33, 102, 172))
        );
    }
    let _ = writeln!(svg, "<text x=\"{:.1}\" y=\"{:.1}\" {FONT} font-size=\"9\">100%</text>", lx + 18.0, top + 22.0);
    let _ = writeln!(svg, "<text x=\"{:.1}\" y=\"{:.1}\" {FONT} font-size=\"9\">0%</text>", lx + 18.0, top + 122.0);
    if !omitted.is_empty() {
        let _ = writeln!(
            svg,
            "<text x=\"{left}\" y=\"{:.1}\" {FONT} font-size=\"10\" fill=\"#555555\">omitted (empty focus set): {}</text>",
            top + plot_h + 54.0,
            escape(&omitted.join(", "))
        );
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::tests::two_category_schema;
    use crate::separability::leakage_matrix;
    use crate::stability::stability_table;
    use crate::tensor::tests::toy_t1;
    use crate::tensor::{vote_counts, VoteTable};

    #[test]
    fn heatmap_is_deterministic_and_marks_cells() {
        let votes = vote_counts(&toy_t1());
        let schema = two_category_schema();
        let m = leakage_matrix(&votes, &schema, 1, false).unwrap();
        let a = render_heatmap(&m, &schema);
        assert_eq!(a, render_heatmap(&m, &schema));
        assert!(a.starts_with("<svg") && a.trim_end().ends_with("</svg>"));
        assert_eq!(a.matches(">1.00<").count(), 3); // two diagonal cells and q1 -> q2
        assert!(a.contains(">0.67<"));

        let masked = render_heatmap(&leakage_matrix(&votes, &schema, 1, true).unwrap(), &schema);
        assert!(masked.contains("#d9d9d9"));
        assert_eq!(masked.matches(">1.00<").count(), 1);
    }

    #[test]
    fn heatmap_hatches_absent_cells() {
        let votes = VoteTable::from_counts(vec!["s".into()], vec!["q1".into(), "q2".into()], vec![0, 0], 1).unwrap();
        let svg = render_heatmap(&leakage_matrix(&votes, &two_category_schema(), 1, false).unwrap(), &two_category_schema());
        assert_eq!(svg.matches("fill=\"url(#absent)\" stroke").count(), 4);
    }

    #[test]
    fn landscape_points_and_omissions() {
        let votes = vote_counts(&toy_t1());
        let rows = stability_table(&votes, &two_category_schema(), 2).unwrap();
        // t=2: q1 focus {s1}, q2 focus {s3}
        let svg = render_stability_landscape(&rows);
        assert_eq!(svg.matches("<circle").count(), 2);

        let single = render_stability_landscape(&rows[..1]);
        assert_eq!(single.matches("<circle").count(), 1);
        assert!(single.contains(">q1<"));

        let votes = VoteTable::from_counts(vec!["s".into()], vec!["q1".into(), "q2".into()], vec![1, 0], 1).unwrap();
        let rows = stability_table(&votes, &two_category_schema(), 1).unwrap();
        let svg = render_stability_landscape(&rows);
        assert_eq!(svg.matches("<circle").count(), 1);
        assert!(svg.contains("omitted (empty focus set): q2"));
    }
}
