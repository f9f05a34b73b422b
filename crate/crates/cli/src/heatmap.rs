//! Architecture × condition Gini grid as SVG plus plain plot data.

use std::fmt::Write as _;

use skewscope::analysis::{Architecture, Condition, FactorialMatrix};

use crate::error::{CliError, CliResult};
use crate::output::num;

const CELL_W: f64 = 96.0;
const CELL_H: f64 = 40.0;
const LEFT: f64 = 110.0;
const TOP: f64 = 70.0;

#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapData {
    pub rows: Vec<Architecture>,
    pub cols: Vec<Condition>,
    /// `values[row][col]`; `None` is a missing cell.
    pub values: Vec<Vec<Option<f64>>>,
    /// Column of each row's lowest value.
    pub row_min: Vec<Option<usize>>,
}

impl HeatmapData {
    pub fn from_matrix(m: &FactorialMatrix) -> CliResult<Self> {
        if m.cells.is_empty() {
            return Err(CliError::Data("heatmap needs at least one cell".into()));
        }
        let rows: Vec<Architecture> = Architecture::ALL
            .into_iter()
            .filter(|a| m.cells.iter().any(|c| c.architecture == *a))
            .collect();
        let cols: Vec<Condition> = Condition::ALL
            .into_iter()
            .filter(|k| m.cells.iter().any(|c| c.condition == *k))
            .collect();
        let values: Vec<Vec<Option<f64>>> = rows
            .iter()
            .map(|&a| {
                cols.iter()
                    .map(|&k| m.cell(a, k).map(|c| c.gini.mean))
                    .collect()
            })
            .collect();
        let row_min = values
            .iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .filter_map(|(i, v)| v.map(|v| (i, v)))
                    .min_by(|a, b| a.1.total_cmp(&b.1))
                    .map(|(i, _)| i)
            })
            .collect();
        Ok(Self {
            rows,
            cols,
            values,
            row_min,
        })
    }

    fn range(&self) -> (f64, f64) {
        let all = self.values.iter().flatten().flatten().copied();
        let lo = all.clone().fold(f64::INFINITY, f64::min);
        let hi = all.fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    /// Rows for the plot-data CSV.
    pub fn plot_rows(&self) -> Vec<Vec<String>> {
        let mut out = Vec::new();
        for (i, a) in self.rows.iter().enumerate() {
            for (j, k) in self.cols.iter().enumerate() {
                let v = self.values[i][j];
                out.push(vec![
                    a.to_string(),
                    k.to_string(),
                    v.map(num).unwrap_or_default(),
                    if v.is_some() { "present" } else { "missing" }.to_string(),
                    (self.row_min[i] == Some(j)).to_string(),
                ]);
            }
        }
        out
    }
}

pub const PLOT_COLUMNS: [&str; 5] = ["architecture", "condition", "gini", "status", "row_best"];

fn lerp(a: u8, b: u8, t: f64) -> u8 {
    (a as f64 + (b as f64 - a as f64) * t).round() as u8
}

/// Green (low) through yellow to red (high).
pub fn color(t: f64) -> (u8, u8, u8) {
    let t = t.clamp(0.0, 1.0);
    let (g, y, r) = ((26, 152, 80), (254, 224, 139), (215, 48, 39));
    let (from, to, u) = if t < 0.5 {
        (g, y, t * 2.0)
    } else {
        (y, r, t * 2.0 - 1.0)
    };
    (
        lerp(from.0, to.0, u),
        lerp(from.1, to.1, u),
        lerp(from.2, to.2, u),
    )
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

pub fn render_svg(d: &HeatmapData, metadata: &str) -> String {
    let w = LEFT + CELL_W * d.cols.len() as f64 + 20.0;
    let h = TOP + CELL_H * d.rows.len() as f64 + 20.0;
    let (lo, hi) = d.range();
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="13">"#
    );
    let _ = writeln!(s, "<metadata>{}</metadata>", escape(metadata));
    let _ = writeln!(
        s,
        r#"<text x="{LEFT}" y="22" font-size="15">Per-rank Gini (bold ★ = lowest per architecture)</text>"#
    );
    for (j, k) in d.cols.iter().enumerate() {
        let x = LEFT + CELL_W * (j as f64 + 0.5);
        let _ = writeln!(
            s,
            r#"<text class="col-label" x="{x}" y="{}" text-anchor="middle">{k}</text>"#,
            TOP - 10.0
        );
    }
    for (i, a) in d.rows.iter().enumerate() {
        let y = TOP + CELL_H * i as f64;
        let _ = writeln!(
            s,
            r#"<text class="row-label" x="{}" y="{}" text-anchor="end">{a}</text>"#,
            LEFT - 10.0,
            y + CELL_H * 0.5 + 4.0
        );
        for (j, k) in d.cols.iter().enumerate() {
            let x = LEFT + CELL_W * j as f64;
            let (cx, cy) = (x + CELL_W * 0.5, y + CELL_H * 0.5 + 4.0);
            match d.values[i][j] {
                None => {
                    let _ = writeln!(
                        s,
                        r##"<rect class="cell missing" data-arch="{a}" data-cond="{k}" x="{x}" y="{y}" width="{CELL_W}" height="{CELL_H}" fill="none" stroke="#999999" stroke-dasharray="4 3"/>"##
                    );
                    let _ = writeln!(
                        s,
                        r##"<text x="{cx}" y="{cy}" text-anchor="middle" fill="#999999">missing</text>"##
                    );
                }
                Some(v) => {
                    let t = if hi > lo { (v - lo) / (hi - lo) } else { 0.5 };
                    let (r, g, b) = color(t);
                    let best = d.row_min[i] == Some(j);
                    let class = if best { "cell best" } else { "cell" };
                    let _ = writeln!(
                        s,
                        r##"<rect class="{class}" data-arch="{a}" data-cond="{k}" x="{x}" y="{y}" width="{CELL_W}" height="{CELL_H}" fill="#{r:02x}{g:02x}{b:02x}" stroke="#ffffff"/>"##
                    );
                    let (weight, star) = if best {
                        ("bold", " ★")
                    } else {
                        ("normal", "")
                    };
                    let _ = writeln!(
                        s,
                        r#"<text x="{cx}" y="{cy}" text-anchor="middle" font-weight="{weight}">{v:.3}{star}</text>"#
                    );
                }
            }
        }
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn color_endpoints() {
        assert_eq!(color(0.0), (26, 152, 80));
        assert_eq!(color(0.5), (254, 224, 139));
        assert_eq!(color(1.0), (215, 48, 39));
    }
}
