//! CSV tables and SVG plots of experiment results.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::stats::{summarize_with, Summary};
use super::{ExperimentError, RunRecord};
use crate::dataset::GrayImage;
use crate::filtration::standard_filtrations;
use crate::vectorize::{PIStack, Variant};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 132.0;
const TOP: f64 = 36.0;
const BOTTOM: f64 = 52.0;

#[derive(Debug, Serialize, Deserialize)]
struct RunRow {
    model: Variant,
    train_size: usize,
    iteration: u32,
    epoch: usize,
    accuracy: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct SummaryRow {
    model: Variant,
    train_size: usize,
    mean: String,
    std: String,
    ci_low: String,
    ci_high: String,
}

fn sorted(records: &[RunRecord]) -> Vec<&RunRecord> {
    let mut v: Vec<&RunRecord> = records.iter().collect();
    v.sort_by_key(|r| (r.model, r.train_size, r.iteration));
    v
}

/// `runs.csv`: one row per (record, epoch), epochs counted from 1.
pub fn write_runs_csv(path: &Path, records: &[RunRecord]) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in sorted(records) {
        for (e, &accuracy) in r.epoch_accuracies.iter().enumerate() {
            w.serialize(RunRow { model: r.model, train_size: r.train_size, iteration: r.iteration, epoch: e + 1, accuracy })?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `summary.csv` with every real printed to 4 decimals.
pub fn write_summary_csv(path: &Path, summaries: &[Summary]) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_path(path)?;
    for s in summaries {
        w.serialize(SummaryRow {
            model: s.model,
            train_size: s.train_size,
            mean: format!("{:.4}", s.mean),
            std: format!("{:.4}", s.std),
            ci_low: format!("{:.4}", s.ci_low),
            ci_high: format!("{:.4}", s.ci_high),
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Parse a `summary.csv`; `n` is not stored in the file and is set to `iterations`.
pub fn read_summary_csv(path: &Path, iterations: usize) -> Result<Vec<Summary>, ExperimentError> {
    let mut rdr = csv::Reader::from_path(path)?;
    let num = |s: &str| s.parse::<f64>().map_err(|e| ExperimentError::InvalidConfig(format!("summary value {s:?}: {e}")));
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        let row: SummaryRow = row?;
        out.push(Summary {
            model: row.model,
            train_size: row.train_size,
            mean: num(&row.mean)?,
            std: num(&row.std)?,
            ci_low: num(&row.ci_low)?,
            ci_high: num(&row.ci_high)?,
            n: iterations,
        });
    }
    Ok(out)
}

/// Write both CSV tables.
pub fn emit_csv(dir: &Path, records: &[RunRecord], summaries: &[Summary]) -> Result<(), ExperimentError> {
    fs::create_dir_all(dir)?;
    write_runs_csv(&dir.join("runs.csv"), records)?;
    write_summary_csv(&dir.join("summary.csv"), summaries)
}

fn color(model: Variant) -> &'static str {
    match model {
        Variant::Raw => "#c0392b",
        Variant::Tda => "#2471a3",
        Variant::Stitched => "#1e8449",
    }
}

fn label(model: Variant) -> &'static str {
    match model {
        Variant::Raw => "Raw",
        Variant::Tda => "TDA",
        Variant::Stitched => "Vector Stitching",
    }
}

struct Frame {
    svg: String,
    x_count: usize,
}

impl Frame {
    /// Axes box with a 0..1 accuracy scale and categorical x ticks.
    fn new(title: &str, x_label: &str, x_ticks: &[String]) -> Self {
        let mut svg = String::new();
        let _ = writeln!(svg, r#"<?xml version="1.0" encoding="UTF-8" standalone="no"?>"#);
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(svg, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(svg, r#"<text x="{:.1}" y="20" text-anchor="middle" font-size="14">{}</text>"#, (LEFT + WIDTH - RIGHT) / 2.0, escape(title));
        let mut f = Frame { svg, x_count: x_ticks.len() };
        let (x0, x1, y0, y1) = (LEFT, WIDTH - RIGHT, TOP, HEIGHT - BOTTOM);
        let _ = writeln!(f.svg, r#"<rect x="{x0}" y="{y0}" width="{:.1}" height="{:.1}" fill="none" stroke="black"/>"#, x1 - x0, y1 - y0);
        for k in 0..=5 {
            let a = k as f64 / 5.0;
            let y = f.y(a);
            let _ = writeln!(f.svg, r##"<line x1="{x0}" y1="{y:.1}" x2="{x1}" y2="{y:.1}" stroke="#dddddd"/>"##);
            let _ = writeln!(f.svg, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{a:.1}</text>"#, x0 - 6.0, y + 4.0);
        }
        for (i, t) in x_ticks.iter().enumerate() {
            let x = f.x(i);
            let _ = writeln!(f.svg, r#"<line x1="{x:.1}" y1="{y1}" x2="{x:.1}" y2="{:.1}" stroke="black"/>"#, y1 + 4.0);
            let _ = writeln!(f.svg, r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, y1 + 18.0, escape(t));
        }
        let _ = writeln!(f.svg, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, (x0 + x1) / 2.0, HEIGHT - 12.0, escape(x_label));
        let _ = writeln!(
            f.svg,
            r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">accuracy</text>"#,
            (y0 + y1) / 2.0,
            (y0 + y1) / 2.0
        );
        f
    }

    fn x(&self, i: usize) -> f64 {
        let span = WIDTH - RIGHT - LEFT;
        LEFT + span * (i as f64 + 0.5) / self.x_count.max(1) as f64
    }

    fn y(&self, accuracy: f64) -> f64 {
        let span = HEIGHT - BOTTOM - TOP;
        HEIGHT - BOTTOM - span * accuracy.clamp(0.0, 1.0)
    }

    fn legend(&mut self, models: &[Variant]) {
        for (i, &m) in models.iter().enumerate() {
            let (x, y) = (WIDTH - RIGHT + 12.0, TOP + 12.0 + 20.0 * i as f64);
            let _ = writeln!(self.svg, r#"<line x1="{x}" y1="{y}" x2="{:.1}" y2="{y}" stroke="{}" stroke-width="2"/>"#, x + 18.0, color(m));
            let _ = writeln!(self.svg, r#"<text x="{:.1}" y="{:.1}">{}</text>"#, x + 24.0, y + 4.0, label(m));
        }
    }

    fn finish(mut self) -> String {
        self.svg.push_str("</svg>\n");
        self.svg
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Mean accuracy per model over training sizes with 95% CI error bars, one
/// `<g class="error-bar">` per (model, size).
pub fn accuracy_vs_size_svg(summaries: &[Summary], title: &str) -> String {
    let sizes: Vec<usize> = summaries.iter().map(|s| s.train_size).collect::<BTreeSet<_>>().into_iter().collect();
    let models: Vec<Variant> = summaries.iter().map(|s| s.model).collect::<BTreeSet<_>>().into_iter().collect();
    let ticks: Vec<String> = sizes.iter().map(|s| s.to_string()).collect();
    let mut f = Frame::new(title, "training set size", &ticks);
    for (mi, &m) in models.iter().enumerate() {
        let offset = (mi as f64 - (models.len() as f64 - 1.0) / 2.0) * 8.0;
        let mut points = Vec::new();
        let mut bars = String::new();
        for s in summaries.iter().filter(|s| s.model == m) {
            let i = sizes.binary_search(&s.train_size).expect("size collected above");
            let x = f.x(i) + offset;
            let (ym, lo, hi) = (f.y(s.mean), f.y(s.ci_low), f.y(s.ci_high));
            points.push(format!("{x:.1},{ym:.1}"));
            let c = color(m);
            let _ = writeln!(
                bars,
                r#"<g class="error-bar" data-model="{m}" data-size="{}" stroke="{c}"><line x1="{x:.1}" y1="{lo:.1}" x2="{x:.1}" y2="{hi:.1}"/><line x1="{:.1}" y1="{lo:.1}" x2="{:.1}" y2="{lo:.1}"/><line x1="{:.1}" y1="{hi:.1}" x2="{:.1}" y2="{hi:.1}"/><circle cx="{x:.1}" cy="{ym:.1}" r="3" fill="{c}"/></g>"#,
                s.train_size,
                x - 4.0,
                x + 4.0,
                x - 4.0,
                x + 4.0
            );
        }
        let _ = writeln!(f.svg, r#"<polyline class="mean-line" fill="none" stroke="{}" stroke-width="1.5" points="{}"/>"#, color(m), points.join(" "));
        f.svg.push_str(&bars);
    }
    f.legend(&models);
    f.finish()
}

/// Test accuracy per epoch, one `<polyline class="epoch-curve">` per record.
pub fn epoch_curves_svg(records: &[&RunRecord], title: &str) -> String {
    let epochs = records.iter().map(|r| r.epoch_accuracies.len()).max().unwrap_or(0);
    let ticks: Vec<String> = (1..=epochs).map(|e| if e == 1 || e % 5 == 0 { e.to_string() } else { String::new() }).collect();
    let mut f = Frame::new(title, "epoch", &ticks);
    let mut models = Vec::new();
    for r in records {
        let points: Vec<String> = r.epoch_accuracies.iter().enumerate().map(|(e, &a)| format!("{:.1},{:.1}", f.x(e), f.y(a))).collect();
        let _ = writeln!(
            f.svg,
            r#"<polyline class="epoch-curve" data-model="{}" fill="none" stroke="{}" stroke-width="1.5" points="{}"/>"#,
            r.model,
            color(r.model),
            points.join(" ")
        );
        models.push(r.model);
    }
    f.legend(&models);
    f.finish()
}

/// Which plots [`emit_plots`] produced.
#[derive(Debug, Clone, Default)]
pub struct PlotFiles {
    pub accuracy_vs_size: Option<PathBuf>,
    pub epoch_curves: Vec<PathBuf>,
}

/// `plots/accuracy_vs_size.svg` from the summaries and, per training size,
/// `plots/epoch_curves_<size>.svg` from iteration 0.
pub fn emit_plots(dir: &Path, records: &[RunRecord], summaries: &[Summary], title: &str) -> Result<PlotFiles, ExperimentError> {
    let plots = dir.join("plots");
    fs::create_dir_all(&plots)?;
    let mut out = PlotFiles::default();
    if !summaries.is_empty() {
        let path = plots.join("accuracy_vs_size.svg");
        fs::write(&path, accuracy_vs_size_svg(summaries, title))?;
        out.accuracy_vs_size = Some(path);
    }
    let mut by_size: BTreeMap<usize, Vec<&RunRecord>> = BTreeMap::new();
    for r in sorted(records).into_iter().filter(|r| r.iteration == 0) {
        by_size.entry(r.train_size).or_default().push(r);
    }
    for (size, recs) in by_size {
        let path = plots.join(format!("epoch_curves_{size}.svg"));
        fs::write(&path, epoch_curves_svg(&recs, &format!("{title}, {size} training images, iteration 0")))?;
        out.epoch_curves.push(path);
    }
    Ok(out)
}

/// Groups with fewer than `iterations` records, as `(model, size, found)`.
pub fn incomplete_groups(records: &[RunRecord], iterations: usize) -> Vec<(Variant, usize, usize)> {
    let mut counts: BTreeMap<(Variant, usize), BTreeSet<u32>> = BTreeMap::new();
    for r in records {
        counts.entry((r.model, r.train_size)).or_default().insert(r.iteration);
    }
    counts.into_iter().filter(|(_, its)| its.len() != iterations).map(|((m, s), its)| (m, s, its.len())).collect()
}

/// Regenerate `runs.csv`, `summary.csv` and the plots. Summaries cover only
/// complete groups; the incomplete ones are returned.
pub fn write_report(dir: &Path, records: &[RunRecord], iterations: usize, title: &str) -> Result<(Vec<Summary>, Vec<(Variant, usize, usize)>), ExperimentError> {
    let incomplete = incomplete_groups(records, iterations);
    let complete: Vec<RunRecord> = records
        .iter()
        .filter(|r| !incomplete.iter().any(|&(m, s, _)| m == r.model && s == r.train_size))
        .cloned()
        .collect();
    let summaries = summarize_with(&complete, iterations)?;
    emit_csv(dir, records, &summaries)?;
    emit_plots(dir, records, &summaries, title)?;
    Ok((summaries.iter().map(Summary::rounded).collect(), incomplete))
}

/// The raw image followed by its persistence-image channels, one panel each,
/// every panel scaled to its own maximum.
pub fn stack_svg(img: &GrayImage, stack: &PIStack, title: &str) -> String {
    const CELL: f64 = 3.0;
    const COLUMNS: usize = 7;
    let side = stack.resolution();
    let panel = side as f64 * CELL;
    let (gap, caption) = (10.0, 14.0);
    let filtrations = standard_filtrations();
    let mut panels: Vec<(String, usize, usize, Vec<f32>)> = vec![("raw".into(), img.height(), img.width(), img.pixels().to_vec())];
    for c in 0..stack.channels() {
        let (f, dim) = PIStack::provenance(c);
        let name = filtrations.get(f).map_or_else(|| format!("f{f}"), |s| s.label());
        panels.push((format!("{name} H{dim}"), side, side, stack.channel(c).to_vec()));
    }
    let rows = panels.len().div_ceil(COLUMNS);
    let width = COLUMNS as f64 * (panel + gap) + gap;
    let height = 30.0 + rows as f64 * (panel + gap + caption);
    let mut svg = String::new();
    let _ = writeln!(svg, r#"<?xml version="1.0" encoding="UTF-8" standalone="no"?>"#);
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="9">"#
    );
    let _ = writeln!(svg, r#"<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{gap}" y="18" font-size="13">{}</text>"#, escape(title));
    for (i, (name, h, w, values)) in panels.iter().enumerate() {
        let x0 = gap + (i % COLUMNS) as f64 * (panel + gap);
        let y0 = 30.0 + (i / COLUMNS) as f64 * (panel + gap + caption);
        let cell = panel / (*h).max(*w) as f64;
        let max = values.iter().copied().fold(0.0f32, f32::max);
        let _ = writeln!(svg, r#"<g class="panel"><text x="{x0}" y="{:.1}">{}</text>"#, y0 + 10.0, escape(name));
        let _ = writeln!(svg, r#"<rect x="{x0}" y="{:.1}" width="{panel}" height="{panel}" fill="black"/>"#, y0 + caption);
        for r in 0..*h {
            for c in 0..*w {
                let v = values[r * w + c];
                if v <= 0.0 || max <= 0.0 {
                    continue;
                }
                let g = (f64::from(v / max) * 255.0).round() as u8;
                let _ = writeln!(
                    svg,
                    r#"<rect x="{:.1}" y="{:.1}" width="{cell:.1}" height="{cell:.1}" fill="rgb({g},{g},{g})"/>"#,
                    x0 + c as f64 * cell,
                    y0 + caption + r as f64 * cell
                );
            }
        }
        svg.push_str("</g>\n");
    }
    svg.push_str("</svg>\n");
    svg
}
