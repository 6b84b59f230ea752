use std::collections::BTreeSet;
use std::fmt::Write;

use super::svg::{Svg, NEGATIVE, PALETTE, POSITIVE};
use super::Chart;
use crate::error::{Error, Result};
use crate::netstats::CorrelationMatrix;
use crate::perturb::ComparisonTable;
use crate::survey::{csv_field, Cell, DataMatrix};

/// Fixed histogram bins over [0, 1].
pub const BINS: usize = 20;

/// Bin of `v`; 1.0 falls into the last bin. The small offset keeps values
/// printed on a bin edge (0.15) in the upper bin despite rounding.
fn bin_of(v: f64) -> usize {
    ((v * BINS as f64 + 1e-9).floor().max(0.0) as usize).min(BINS - 1)
}

fn group_label(cell: &Cell) -> Option<String> {
    match cell {
        Cell::Missing => None,
        Cell::Number(v) => Some(v.to_string()),
        Cell::Category(s) | Cell::Text(s) => Some(s.clone()),
    }
}

struct Histogram {
    attribute: String,
    group: String,
    counts: [usize; BINS],
    n: usize,
    mean: f64,
}

/// Histograms of each score column per group, with group means.
///
/// Rows missing the group or the score are skipped; a (score, group) pair
/// without values is left out with a note.
pub fn score_distribution(matrix: &DataMatrix, scores: &[String], group_by: &str) -> Result<Chart> {
    let g = matrix
        .column_index(group_by)
        .ok_or_else(|| Error::data(format!("unknown grouping column `{group_by}`")))?;
    let groups: BTreeSet<String> = matrix.cells.iter().filter_map(|r| group_label(&r[g])).collect();
    let mut chart = Chart::new("score_distribution");
    let mut hists = Vec::new();
    for score in scores {
        let j = matrix
            .column_index(score)
            .ok_or_else(|| Error::data(format!("unknown score column `{score}`")))?;
        if !matrix.columns[j].value_kind.is_numeric() {
            return Err(Error::data(format!("`{score}` is not numeric")));
        }
        for group in &groups {
            let values: Vec<f64> = matrix
                .cells
                .iter()
                .filter(|r| group_label(&r[g]).as_ref() == Some(group))
                .filter_map(|r| r[j].as_number())
                .collect();
            if values.is_empty() {
                chart
                    .notes
                    .push(format!("`{score}` has no values for {group_by} = {group}"));
                continue;
            }
            let mut counts = [0; BINS];
            for &v in &values {
                counts[bin_of(v)] += 1;
            }
            hists.push(Histogram {
                attribute: score.clone(),
                group: group.clone(),
                counts,
                n: values.len(),
                mean: values.iter().sum::<f64>() / values.len() as f64,
            });
        }
    }

    let mut counts_csv = String::from("attribute,group,bin,lower,upper,count\n");
    let mut means_csv = String::from("attribute,group,n,mean\n");
    for h in &hists {
        for (b, c) in h.counts.iter().enumerate() {
            let _ = writeln!(
                counts_csv,
                "{},{},{b},{},{},{c}",
                csv_field(&h.attribute),
                csv_field(&h.group),
                b as f64 / BINS as f64,
                (b + 1) as f64 / BINS as f64
            );
        }
        let _ = writeln!(
            means_csv,
            "{},{},{},{}",
            csv_field(&h.attribute),
            csv_field(&h.group),
            h.n,
            h.mean
        );
    }
    chart.add("csv", "", counts_csv);
    chart.add("csv", "_means", means_csv);
    chart.add("svg", "", distribution_svg(scores, &groups, &hists));
    Ok(chart)
}

fn distribution_svg(scores: &[String], groups: &BTreeSet<String>, hists: &[Histogram]) -> String {
    let (width, panel, left, plot_w) = (720.0, 200.0, 60.0, 600.0);
    let mut svg = Svg::new(width, 30.0 + panel * scores.len().max(1) as f64);
    let groups: Vec<&String> = groups.iter().collect();
    for (k, g) in groups.iter().enumerate() {
        let x = left + 140.0 * k as f64;
        svg.rect(x, 8.0, 10.0, 10.0, PALETTE[k % PALETTE.len()]);
        svg.text(x + 14.0, 17.0, 11.0, "start", g);
    }
    for (p, score) in scores.iter().enumerate() {
        let top = 30.0 + panel * p as f64;
        let base = top + panel - 40.0;
        let plot_h = panel - 70.0;
        let panel_hists: Vec<&Histogram> = hists.iter().filter(|h| &h.attribute == score).collect();
        let max = panel_hists.iter().flat_map(|h| h.counts).max().unwrap_or(0).max(1) as f64;
        svg.text(left, top + 16.0, 12.0, "start", score);
        svg.line(left, base, left + plot_w, base, "#333333", 1.0);
        for t in 0..=4 {
            let x = left + plot_w * t as f64 / 4.0;
            svg.text(x, base + 14.0, 10.0, "middle", &format!("{:.2}", t as f64 / 4.0));
        }
        let bin_w = plot_w / BINS as f64;
        let bar_w = bin_w / panel_hists.len().max(1) as f64;
        for (k, h) in panel_hists.iter().enumerate() {
            let color = PALETTE[groups.iter().position(|g| **g == h.group).unwrap_or(0) % PALETTE.len()];
            for (b, &c) in h.counts.iter().enumerate() {
                let bh = plot_h * c as f64 / max;
                svg.rect(left + bin_w * b as f64 + bar_w * k as f64, base - bh, bar_w, bh, color);
            }
            let mx = left + plot_w * h.mean;
            svg.line(mx, base - plot_h, mx, base, color, 1.5);
        }
        if panel_hists.len() >= 2 {
            let summary: Vec<String> = panel_hists
                .iter()
                .map(|h| format!("{} mean {:.3}", h.group, h.mean))
                .collect();
            svg.text(left + plot_w, top + 16.0, 10.0, "end", &summary.join(", "));
        }
    }
    svg.finish()
}

/// Signed correlations of each `focus` attribute with each `against`
/// attribute, in the given orders. Missing entries are drawn as a marker.
pub fn correlation_bars(c: &CorrelationMatrix, focus: &[String], against: &[String]) -> Result<Chart> {
    let idx = |l: &String| {
        c.labels
            .iter()
            .position(|x| x == l)
            .ok_or_else(|| Error::data(format!("`{l}` is not in the correlation matrix")))
    };
    let fi = focus.iter().map(idx).collect::<Result<Vec<_>>>()?;
    let ai = against.iter().map(idx).collect::<Result<Vec<_>>>()?;

    let mut csv = String::from("focus,against,correlation\n");
    for (f, &i) in focus.iter().zip(&fi) {
        for (a, &j) in against.iter().zip(&ai) {
            let v = c.values[i][j].map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(csv, "{},{},{v}", csv_field(f), csv_field(a));
        }
    }

    let row_h = 16.0;
    let group_h = row_h * against.len() as f64 + 24.0;
    let (left, plot_w) = (260.0, 400.0);
    let mid = left + plot_w / 2.0;
    let mut svg = Svg::new(left + plot_w + 60.0, 20.0 + group_h * focus.len().max(1) as f64);
    for (g, (f, &i)) in focus.iter().zip(&fi).enumerate() {
        let top = 20.0 + group_h * g as f64;
        svg.text(10.0, top + 12.0, 12.0, "start", f);
        for (k, (a, &j)) in against.iter().zip(&ai).enumerate() {
            let y = top + 18.0 + row_h * k as f64;
            svg.text(left - 8.0, y + 11.0, 10.0, "end", a);
            match c.values[i][j] {
                Some(v) => {
                    let w = plot_w / 2.0 * v.abs();
                    let (x, color) = if v < 0.0 { (mid - w, NEGATIVE) } else { (mid, POSITIVE) };
                    svg.rect(x, y + 2.0, w, row_h - 4.0, color);
                }
                None => svg.text(mid, y + 11.0, 11.0, "middle", "×"),
            }
        }
        svg.line(
            mid,
            top + 16.0,
            mid,
            top + 18.0 + row_h * against.len() as f64,
            "#333333",
            1.0,
        );
    }
    let mut chart = Chart::new("correlation_bars");
    chart.add("csv", "", csv);
    chart.add("svg", "", svg.finish());
    Ok(chart)
}

/// Correlation, dependency and perturbation influence side by side, one row
/// per given attribute in the table's order (|correlation| descending).
pub fn comparison_chart(table: &ComparisonTable) -> Result<Chart> {
    if table.rows.is_empty() {
        return Err(Error::data("comparison table is empty"));
    }
    let mut csv = String::from("given,target,correlation,dependency,influence\n");
    for r in &table.rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            csv_field(&r.given),
            csv_field(&table.target),
            r.correlation,
            r.dependency,
            r.influence
        );
    }

    let series: [(&str, Vec<f64>); 3] = [
        ("correlation", table.rows.iter().map(|r| r.correlation).collect()),
        ("ADN", table.rows.iter().map(|r| r.dependency).collect()),
        ("perturbation", table.rows.iter().map(|r| r.influence).collect()),
    ];
    let row_h = 18.0;
    let (left, col_w) = (220.0, 200.0);
    let mut svg = Svg::new(left + 3.0 * col_w + 20.0, 50.0 + row_h * table.rows.len() as f64);
    svg.text(10.0, 18.0, 12.0, "start", &format!("influence on {}", table.target));
    for (k, r) in table.rows.iter().enumerate() {
        svg.text(left - 8.0, 50.0 + row_h * k as f64 + 12.0, 10.0, "end", &r.given);
    }
    for (s, (name, values)) in series.iter().enumerate() {
        let x0 = left + col_w * s as f64;
        let mid = x0 + col_w / 2.0;
        let max = values.iter().map(|v| v.abs()).fold(0.0, f64::max);
        svg.text(mid, 38.0, 11.0, "middle", &format!("{name} (max |{max:.3}|)"));
        svg.line(mid, 42.0, mid, 50.0 + row_h * values.len() as f64, "#333333", 1.0);
        for (k, &v) in values.iter().enumerate() {
            let w = if max > 0.0 {
                (col_w / 2.0 - 10.0) * v.abs() / max
            } else {
                0.0
            };
            let (x, color) = if v < 0.0 {
                (mid - w, NEGATIVE)
            } else {
                (mid, PALETTE[s])
            };
            svg.rect(x, 50.0 + row_h * k as f64 + 3.0, w, row_h - 6.0, color);
        }
    }
    let mut chart = Chart::new("comparison");
    chart.add("csv", "", csv);
    chart.add("svg", "", svg.finish());
    Ok(chart)
}
