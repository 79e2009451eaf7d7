// SPDX-License-Identifier: MIT OR Apache-2.0

//! Summary text and static SVG plots, rendered only from the CSV files a
//! run has already written.

use std::fmt::Write as _;
use std::fs;

use serde::{Deserialize, Serialize};

use super::{HarnessError, Result, RunDir};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportIndex {
    /// Files written, relative to the run directory.
    pub written: Vec<String>,
    /// Sections with no inputs yet, with the verb that produces them.
    pub missing: Vec<(String, String)>,
}

/// Header and rows of a simple comma-separated file (no quoting).
pub fn parse_csv(text: &str) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut lines = text.lines().filter(|l| !l.is_empty());
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| HarnessError::Validation("empty csv".into()))?
        .split(',')
        .map(String::from)
        .collect();
    let mut rows = Vec::new();
    for (i, l) in lines.enumerate() {
        let row: Vec<String> = l.split(',').map(String::from).collect();
        if row.len() != header.len() {
            return Err(HarnessError::Validation(format!(
                "csv row {} has {} cells, header has {}",
                i + 1,
                row.len(),
                header.len()
            )));
        }
        rows.push(row);
    }
    Ok((header, rows))
}

fn num(s: &str) -> f64 {
    s.parse().unwrap_or(f64::NAN)
}

// ---------------------------------------------------------------------------
// SVG

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Heatmap of string cells in [0, 1]; each cell's text is the CSV cell.
fn heatmap_svg(title: &str, rows: &[String], cols: &[String], cells: &[Vec<String>]) -> String {
    let (cw, ch, left, top) = (64.0, 28.0, 150.0, 70.0);
    let w = left + cw * cols.len() as f64 + 20.0;
    let h = top + ch * rows.len() as f64 + 20.0;
    let mut s =
        format!("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" font-family=\"sans-serif\" font-size=\"11\">\n");
    let _ = writeln!(s, "<text x=\"10\" y=\"20\" font-size=\"14\">{}</text>", esc(title));
    for (j, c) in cols.iter().enumerate() {
        let x = left + cw * j as f64 + cw / 2.0;
        let _ = writeln!(
            s,
            "<text x=\"{x}\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-30 {x} {})\">{}</text>",
            top - 8.0,
            top - 8.0,
            esc(c)
        );
    }
    for (i, r) in rows.iter().enumerate() {
        let y = top + ch * i as f64;
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>",
            left - 6.0,
            y + ch / 2.0 + 4.0,
            esc(r)
        );
        for (j, v) in cells[i].iter().enumerate() {
            let x = left + cw * j as f64;
            let t = num(v).clamp(0.0, 1.0);
            let t = if t.is_nan() { 0.0 } else { t };
            let shade = (255.0 * (1.0 - t)).round() as u8;
            let fg = if t > 0.6 { "#ffffff" } else { "#000000" };
            let _ = writeln!(
                s,
                "<rect x=\"{x}\" y=\"{y}\" width=\"{cw}\" height=\"{ch}\" fill=\"rgb({shade},{shade},255)\" stroke=\"#cccccc\"/>"
            );
            let short = if v.len() > 6 { &v[..6] } else { v.as_str() };
            let _ = writeln!(
                s,
                "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" fill=\"{fg}\"><title>{}</title>{}</text>",
                x + cw / 2.0,
                y + ch / 2.0 + 4.0,
                esc(v),
                esc(short)
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

struct Series {
    name: String,
    points: Vec<(f64, f64)>,
}

/// Line plot; `log_x` maps x through log10(1 + x).
fn line_svg(title: &str, x_label: &str, y_label: &str, series: &[Series], log_x: bool) -> String {
    let (w, h, left, right, top, bottom) = (640.0, 400.0, 60.0, 170.0, 40.0, 50.0);
    let fx = |x: f64| if log_x { (1.0 + x.max(0.0)).log10() } else { x };
    let finite = series
        .iter()
        .flat_map(|s| s.points.iter())
        .filter(|p| p.0.is_finite() && p.1.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64, f64::NEG_INFINITY);
    for &(x, y) in finite {
        x0 = x0.min(fx(x));
        x1 = x1.max(fx(x));
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y1) = (0.0, 1.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let pw = w - left - right;
    let ph = h - top - bottom;
    let px = |x: f64| left + (fx(x) - x0) / (x1 - x0) * pw;
    let py = |y: f64| top + ph - (y - y0) / (y1 - y0) * ph;
    let mut s =
        format!("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" font-family=\"sans-serif\" font-size=\"11\">\n");
    let _ = writeln!(s, "<text x=\"10\" y=\"20\" font-size=\"14\">{}</text>", esc(title));
    let _ = writeln!(
        s,
        "<rect x=\"{left}\" y=\"{top}\" width=\"{pw}\" height=\"{ph}\" fill=\"none\" stroke=\"#888888\"/>"
    );
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>",
        left + pw / 2.0,
        h - 12.0,
        esc(x_label)
    );
    let _ = writeln!(
        s,
        "<text x=\"14\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 14 {})\">{}</text>",
        top + ph / 2.0,
        top + ph / 2.0,
        esc(y_label)
    );
    let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{y1}</text>", left - 4.0, top + 4.0);
    let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{y0}</text>", left - 4.0, top + ph);
    for (k, se) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<String> = se
            .points
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        let _ = writeln!(
            s,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>",
            pts.join(" ")
        );
        for &(x, y) in se.points.iter().filter(|p| p.0.is_finite() && p.1.is_finite()) {
            let _ = writeln!(
                s,
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2.5\" fill=\"{color}\"><title>{x}, {y}</title></circle>",
                px(x),
                py(y)
            );
        }
        let ly = top + 14.0 * k as f64 + 8.0;
        let _ = writeln!(
            s,
            "<rect x=\"{}\" y=\"{}\" width=\"10\" height=\"10\" fill=\"{color}\"/><text x=\"{}\" y=\"{}\">{}</text>",
            w - right + 10.0,
            ly - 8.0,
            w - right + 24.0,
            ly + 1.0,
            esc(&se.name)
        );
    }
    s.push_str("</svg>\n");
    s
}

// ---------------------------------------------------------------------------
// Sections

struct Emitter<'a> {
    run: &'a RunDir,
    index: ReportIndex,
    summary: String,
}

impl Emitter<'_> {
    fn read(&self, rel: &str) -> Option<String> {
        fs::read_to_string(self.run.path(rel)).ok()
    }

    fn write(&mut self, rel: &str, text: &str) -> Result<()> {
        self.run.write_output(rel, text, "report")?;
        self.index.written.push(rel.to_string());
        Ok(())
    }

    fn missing(&mut self, section: &str, verb: &str) {
        self.index.missing.push((section.to_string(), verb.to_string()));
    }

    fn confusion(&mut self, src: &str, dst: &str, title: &str) -> Result<bool> {
        let Some(text) = self.read(src) else {
            return Ok(false);
        };
        let (header, rows) = parse_csv(&text)?;
        let labels: Vec<String> = rows.iter().map(|r| r[0].clone()).collect();
        let cells: Vec<Vec<String>> = rows.iter().map(|r| r[1..].to_vec()).collect();
        let svg = heatmap_svg(title, &labels, &header[1..], &cells);
        self.write(dst, &svg)?;
        Ok(true)
    }

    fn lm(&mut self) -> Result<()> {
        let Some(text) = self.read("metrics/lm.json") else {
            return Ok(self.missing("lm", "eval"));
        };
        let v: serde_json::Value = serde_json::from_str(&text)?;
        let _ = writeln!(
            self.summary,
            "[lm]\ntrain exact match: {}\nunseen exact match: {}\n",
            v["train"]["accuracy"], v["unseen"]["accuracy"]
        );
        Ok(())
    }

    fn sweep(&mut self) -> Result<()> {
        let Some(grid) = self.read("sweep/layers_grid.csv") else {
            return Ok(self.missing("layer_sweep", "eval"));
        };
        let (header, rows) = parse_csv(&grid)?;
        let labels: Vec<String> = rows.iter().map(|r| format!("layer {}", r[0])).collect();
        let cells: Vec<Vec<String>> = rows.iter().map(|r| r[1..].to_vec()).collect();
        let cols: Vec<String> = header[1..].iter().map(|a| format!("a={a}")).collect();
        self.write(
            "report/swap_heatmap.svg",
            &heatmap_svg("Swap success by layer and alpha", &labels, &cols, &cells),
        )?;
        if let Some(t) = self.read("sweep/layers.csv") {
            let (h, rows) = parse_csv(&t)?;
            let _ = writeln!(self.summary, "[layer sweep]\n{}", h.join("  "));
            for r in rows {
                let _ = writeln!(self.summary, "{}", r.join("  "));
            }
            self.summary.push('\n');
        }
        let layer = self.run.config.sae_layer;
        for split in ["train", "unseen"] {
            self.confusion(
                &format!("metrics/L{layer}_joint_confusion_{split}.csv"),
                &format!("report/confusion_L{layer}_{split}.svg"),
                &format!("Slot binding, layer {layer}, {split} templates"),
            )?;
        }
        Ok(())
    }

    fn fragmentation(&mut self) -> Result<()> {
        let Some(text) = self.read("report/fragmentation.csv") else {
            return Ok(self.missing("fragmentation", "eval"));
        };
        let (_, rows) = parse_csv(&text)?;
        let mut series: Vec<Series> = Vec::new();
        for r in &rows {
            let name = format!("{} {}", r[0], r[1]);
            if series.last().map(|s| s.name != name).unwrap_or(true) {
                series.push(Series { name, points: Vec::new() });
            }
            if let Some(s) = series.last_mut() {
                s.points.push((num(&r[2]), num(&r[3])));
            }
        }
        self.write(
            "report/fragmentation.svg",
            &line_svg("Normalised concept mass by feature rank", "rank", "mass", &series, false),
        )?;
        if let Some(j) = self.read("metrics/fragmentation.json") {
            let v: serde_json::Value = serde_json::from_str(&j)?;
            let _ = writeln!(
                self.summary,
                "[fragmentation]\naligned: eff_feat {} top1c {}\ntraditional: eff_feat {} top1c {}\n",
                v["aligned"]["mean_eff_feat"],
                v["aligned"]["mean_top1c"],
                v["traditional"]["mean_eff_feat"],
                v["traditional"]["mean_top1c"]
            );
        }
        Ok(())
    }

    fn ablation(&mut self) -> Result<()> {
        let Some(text) = self.read("ablate/table.csv") else {
            return Ok(self.missing("ablation", "ablate"));
        };
        let (h, rows) = parse_csv(&text)?;
        let _ = writeln!(self.summary, "[ablation]\n{}", h.join("  "));
        for r in rows {
            let _ = writeln!(self.summary, "{}", r.join("  "));
        }
        self.summary.push('\n');
        Ok(())
    }

    fn twohop(&mut self) -> Result<()> {
        let Some(text) = self.read("twohop/swap_curves.csv") else {
            return Ok(self.missing("twohop", "twohop"));
        };
        let (_, rows) = parse_csv(&text)?;
        let mut series: Vec<Series> = Vec::new();
        for r in &rows {
            if series.last().map(|s| s.name != r[0]).unwrap_or(true) {
                series.push(Series {
                    name: r[0].clone(),
                    points: Vec::new(),
                });
            }
            if let Some(s) = series.last_mut() {
                s.points.push((num(&r[1]), num(&r[2])));
            }
        }
        self.write(
            "report/twohop_swap.svg",
            &line_svg("2-hop swap success", "alpha (log scale)", "success", &series, true),
        )?;
        for step in ["step1", "step2"] {
            self.confusion(
                &format!("twohop/confusion_{step}.csv"),
                &format!("report/twohop_confusion_{step}.svg"),
                &format!("2-hop binding, {step}"),
            )?;
        }
        let _ = writeln!(self.summary, "[twohop]");
        for s in &series {
            let best = s.points.iter().map(|p| p.1).fold(0.0, f64::max);
            let _ = writeln!(self.summary, "{} peak swap success: {best}", s.name);
        }
        self.summary.push('\n');
        Ok(())
    }

    fn grok(&mut self) -> Result<()> {
        let Some(text) = self.read("grok/trace.csv") else {
            return Ok(self.missing("grok", "grok"));
        };
        let (header, rows) = parse_csv(&text)?;
        let series: Vec<Series> = (3..header.len())
            .map(|c| Series {
                name: header[c].clone(),
                points: rows.iter().map(|r| (num(&r[0]), num(&r[c]))).collect(),
            })
            .collect();
        self.write(
            "report/grok.svg",
            &line_svg("Binding and validation accuracy over training", "epoch", "accuracy", &series, false),
        )?;
        if let Some(j) = self.read("grok/trace.json") {
            let v: serde_json::Value = serde_json::from_str(&j)?;
            let _ = writeln!(self.summary, "[grok]\ncrossings: {}\nlag (epochs): {}\n", v["crossings"], v["lag"]);
        }
        Ok(())
    }
}

/// Render every section whose inputs exist; list the others. Output is a
/// pure function of the input CSV and JSON files.
pub fn emit_reports(run: &RunDir) -> Result<ReportIndex> {
    let mut e = Emitter {
        run,
        index: ReportIndex::default(),
        summary: String::new(),
    };
    e.lm()?;
    e.sweep()?;
    e.fragmentation()?;
    e.ablation()?;
    e.twohop()?;
    e.grok()?;
    let mut text = e.summary.clone();
    for (section, verb) in &e.index.missing {
        let _ = writeln!(text, "missing: {section} (run `{verb}`)");
    }
    e.write("report/summary.txt", &text)?;
    Ok(e.index)
}
