//! Metric records and the files rendered from them.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use super::bootstrap::ConfidenceInterval;
use super::ttest::paired_ttest;
use crate::error::{Error, Result};

/// Star threshold for table cells.
pub const SIGNIFICANCE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub map: f64,
    /// `null` for classes without a positive in the evaluation set.
    pub per_class_ap: Vec<Option<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auc: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub experiment: String,
    pub method: String,
    pub dataset: String,
    pub seed: u64,
    pub metrics: Metrics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ci: Option<ConfidenceInterval>,
    /// Two-sided paired t-test p-values against named baselines.
    #[serde(default)]
    pub pvalues: BTreeMap<String, f64>,
    pub config_hash: String,
    pub split_hash: String,
    /// Kept out of `results.json` so reruns compare byte for byte.
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

impl MetricsReport {
    pub fn new(experiment: &str, method: &str, dataset: &str, seed: u64, metrics: Metrics) -> Self {
        Self {
            experiment: experiment.to_owned(),
            method: method.to_owned(),
            dataset: dataset.to_owned(),
            seed,
            metrics,
            ci: None,
            pvalues: BTreeMap::new(),
            config_hash: String::new(),
            split_hash: String::new(),
            wall_clock_secs: 0.0,
        }
    }

    fn same_cell(&self, other: &Self) -> bool {
        self.experiment == other.experiment
            && self.dataset == other.dataset
            && self.seed == other.seed
            && self.metrics.label_ratio == other.metrics.label_ratio
    }
}

/// `(m - base) / base`.
pub fn relative_improvement(map: f64, base: f64) -> f64 {
    (map - base) / base
}

pub fn fmt_map(map: f64) -> String {
    format!("{map:.3}")
}

/// `"+9.1%"`, with a trailing `*` when `p < 0.01`.
pub fn fmt_delta(map: f64, base: f64, p: Option<f64>) -> String {
    let star = if p.is_some_and(|p| p < SIGNIFICANCE) { "*" } else { "" };
    format!("{:+.1}%{star}", 100.0 * relative_improvement(map, base))
}

/// `"0.422 (+9.1%*)"`, or just the mAP without a baseline.
pub fn format_cell(map: f64, base: Option<f64>, p: Option<f64>) -> String {
    match base {
        Some(b) => format!("{} ({})", fmt_map(map), fmt_delta(map, b, p)),
        None => fmt_map(map),
    }
}

/// Per-class AP pairs of two reports, over classes defined in both.
fn ap_pairs(a: &MetricsReport, b: &MetricsReport) -> Vec<(f64, f64)> {
    a.metrics
        .per_class_ap
        .iter()
        .zip(&b.metrics.per_class_ap)
        .filter_map(|(x, y)| Some(((*x)?, (*y)?)))
        .collect()
}

fn ttest_pairs(pairs: &[(f64, f64)]) -> Option<f64> {
    let (a, b): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
    paired_ttest(&a, &b).ok().map(|t| t.p)
}

/// Fills `pvalues[baseline]` of every report that has a matching baseline
/// report (same experiment, dataset, seed and label ratio).
pub fn attach_pvalues(reports: &mut [MetricsReport], baseline: &str) {
    let bases: Vec<MetricsReport> = reports.iter().filter(|r| r.method == baseline).cloned().collect();
    for r in reports.iter_mut().filter(|r| r.method != baseline) {
        if let Some(b) = bases.iter().find(|b| b.same_cell(r)) {
            if let Some(p) = ttest_pairs(&ap_pairs(r, b)) {
                r.pvalues.insert(baseline.to_owned(), p);
            }
        }
    }
}

/// Aggregate of one method against the baseline over matching seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub map: f64,
    pub base_map: Option<f64>,
    /// Paired t-test over (seed, class) AP pairs.
    pub p: Option<f64>,
    pub seeds: usize,
}

/// Compares `method` with `baseline` on the reports selected by `cell`.
pub fn compare<'a>(
    reports: &'a [MetricsReport],
    method: &str,
    baseline: &str,
    cell: impl Fn(&MetricsReport) -> bool,
) -> Option<Comparison> {
    let mine: Vec<&MetricsReport> = reports.iter().filter(|r| r.method == method && cell(r)).collect();
    if mine.is_empty() {
        return None;
    }
    let mean = |v: &[&MetricsReport]| v.iter().map(|r| r.metrics.map).sum::<f64>() / v.len() as f64;
    if method == baseline {
        return Some(Comparison {
            map: mean(&mine),
            base_map: None,
            p: None,
            seeds: mine.len(),
        });
    }
    let matched: Vec<(&MetricsReport, &MetricsReport)> = mine
        .iter()
        .filter_map(|r| {
            reports
                .iter()
                .find(|b| b.method == baseline && b.same_cell(r))
                .map(|b| (*r, b))
        })
        .collect();
    if matched.is_empty() {
        return Some(Comparison {
            map: mean(&mine),
            base_map: None,
            p: None,
            seeds: mine.len(),
        });
    }
    let (ms, bs): (Vec<&MetricsReport>, Vec<&MetricsReport>) = matched.iter().copied().unzip();
    let pairs: Vec<(f64, f64)> = matched.iter().flat_map(|(r, b)| ap_pairs(r, b)).collect();
    Some(Comparison {
        map: mean(&ms),
        base_map: Some(mean(&bs)),
        p: ttest_pairs(&pairs),
        seeds: ms.len(),
    })
}

fn first_seen<'a>(values: impl Iterator<Item = &'a str>) -> Vec<&'a str> {
    let mut out: Vec<&str> = Vec::new();
    for v in values {
        if !out.contains(&v) {
            out.push(v);
        }
    }
    out
}

fn ratio_label(r: f64) -> String {
    format!("ratio={r}")
}

/// TSV table: one row per method, one column per key, each cell formatted by
/// [`format_cell`] against `baseline`.
fn render_table(
    reports: &[MetricsReport],
    baseline: &str,
    columns: &[(String, Box<dyn Fn(&MetricsReport) -> bool + '_>)],
) -> String {
    let methods = first_seen(reports.iter().map(|r| r.method.as_str()));
    let mut out = String::from("method");
    for (name, _) in columns {
        out.push('\t');
        out.push_str(name);
    }
    out.push('\n');
    for m in methods {
        out.push_str(m);
        for (_, cell) in columns {
            out.push('\t');
            if let Some(c) = compare(reports, m, baseline, cell) {
                out.push_str(&format_cell(c.map, c.base_map, c.p));
            }
        }
        out.push('\n');
    }
    out
}

/// Method x dataset table over reports without a label ratio.
pub fn main_table(reports: &[MetricsReport], baseline: &str) -> String {
    let datasets = first_seen(reports.iter().map(|r| r.dataset.as_str()));
    let columns: Vec<(String, Box<dyn Fn(&MetricsReport) -> bool>)> = datasets
        .into_iter()
        .map(|d| {
            let name = d.to_owned();
            let key = d.to_owned();
            let f: Box<dyn Fn(&MetricsReport) -> bool> = Box::new(move |r| r.dataset == key);
            (name, f)
        })
        .collect();
    render_table(reports, baseline, &columns)
}

fn ratios(reports: &[MetricsReport]) -> Vec<f64> {
    let mut rs: Vec<f64> = reports.iter().filter_map(|r| r.metrics.label_ratio).collect();
    rs.sort_by(f64::total_cmp);
    rs.dedup();
    rs
}

/// Method x label-ratio table.
pub fn sweep_table(reports: &[MetricsReport], baseline: &str) -> String {
    let columns: Vec<(String, Box<dyn Fn(&MetricsReport) -> bool>)> = ratios(reports)
        .into_iter()
        .map(|x| {
            let f: Box<dyn Fn(&MetricsReport) -> bool> = Box::new(move |r| r.metrics.label_ratio == Some(x));
            (ratio_label(x), f)
        })
        .collect();
    render_table(reports, baseline, &columns)
}

/// One line of a label-ratio plot: seed-averaged mAP and CI bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub method: String,
    /// `(ratio, mAP, lo, hi)`
    pub points: Vec<(f64, f64, f64, f64)>,
}

pub fn sweep_series(reports: &[MetricsReport]) -> Vec<Series> {
    first_seen(reports.iter().filter(|r| r.metrics.label_ratio.is_some()).map(|r| r.method.as_str()))
        .into_iter()
        .map(|m| {
            let points = ratios(reports)
                .into_iter()
                .filter_map(|x| {
                    let rs: Vec<&MetricsReport> = reports
                        .iter()
                        .filter(|r| r.method == m && r.metrics.label_ratio == Some(x))
                        .collect();
                    if rs.is_empty() {
                        return None;
                    }
                    let n = rs.len() as f64;
                    let map = rs.iter().map(|r| r.metrics.map).sum::<f64>() / n;
                    let lo = rs.iter().map(|r| r.ci.as_ref().map_or(r.metrics.map, |c| c.lo)).sum::<f64>() / n;
                    let hi = rs.iter().map(|r| r.ci.as_ref().map_or(r.metrics.map, |c| c.hi)).sum::<f64>() / n;
                    Some((x, map, lo, hi))
                })
                .collect();
            Series {
                method: m.to_owned(),
                points,
            }
        })
        .collect()
}

const COLORS: [[u8; 3]; 6] = [
    [31, 119, 180],
    [214, 39, 40],
    [44, 160, 44],
    [255, 127, 14],
    [148, 103, 189],
    [140, 86, 75],
];

struct Frame {
    width: f64,
    height: f64,
    left: f64,
    right: f64,
    top: f64,
    bottom: f64,
    y_lo: f64,
    y_hi: f64,
}

impl Frame {
    fn new(series: &[Series]) -> Self {
        let ys = series.iter().flat_map(|s| s.points.iter().flat_map(|p| [p.2, p.3]));
        let (lo, hi) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), y| (a.min(y), b.max(y)));
        let (lo, hi) = if lo.is_finite() { (lo, hi) } else { (0.0, 1.0) };
        let pad = ((hi - lo) * 0.1).max(0.01);
        Self {
            width: 640.0,
            height: 400.0,
            left: 60.0,
            right: 160.0,
            top: 20.0,
            bottom: 50.0,
            y_lo: (lo - pad).max(0.0),
            y_hi: (hi + pad).min(1.0),
        }
    }

    fn x(&self, ratio: f64) -> f64 {
        self.left + ratio * (self.width - self.left - self.right)
    }

    fn y(&self, v: f64) -> f64 {
        let t = (v - self.y_lo) / (self.y_hi - self.y_lo);
        self.height - self.bottom - t * (self.height - self.top - self.bottom)
    }
}

fn hex(c: [u8; 3]) -> String {
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

/// mAP against label ratio with shaded CI bands.
pub fn plot_svg(series: &[Series], title: &str) -> String {
    let f = Frame::new(series);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" font-family="sans-serif" font-size="12">"#,
        f.width, f.height
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let (x0, x1) = (f.x(0.0), f.x(1.0));
    let (yb, yt) = (f.y(f.y_lo), f.y(f.y_hi));
    let _ = writeln!(s, r#"<text x="{}" y="14" text-anchor="middle">{title}</text>"#, (x0 + x1) / 2.0);
    let _ = writeln!(s, r#"<line x1="{x0}" y1="{yb}" x2="{x1}" y2="{yb}" stroke="black"/>"#);
    let _ = writeln!(s, r#"<line x1="{x0}" y1="{yb}" x2="{x0}" y2="{yt}" stroke="black"/>"#);
    for k in 0..=4 {
        let r = k as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{r}</text>"#,
            f.x(r),
            yb + 16.0
        );
        let v = f.y_lo + r * (f.y_hi - f.y_lo);
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{v:.3}</text>"#,
            x0 - 6.0,
            f.y(v) + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">label ratio</text>"#,
        (x0 + x1) / 2.0,
        f.height - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text transform="translate(14 {:.1}) rotate(-90)" text-anchor="middle">test mAP</text>"#,
        (yb + yt) / 2.0
    );
    for (k, ser) in series.iter().enumerate() {
        let color = hex(COLORS[k % COLORS.len()]);
        let upper = ser.points.iter().map(|p| format!("{:.1},{:.1}", f.x(p.0), f.y(p.3)));
        let lower = ser.points.iter().rev().map(|p| format!("{:.1},{:.1}", f.x(p.0), f.y(p.2)));
        let band: Vec<String> = upper.chain(lower).collect();
        let _ = writeln!(s, r#"<polygon points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#, band.join(" "));
        let line: Vec<String> = ser.points.iter().map(|p| format!("{:.1},{:.1}", f.x(p.0), f.y(p.1))).collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, line.join(" "));
        for p in &ser.points {
            let _ = writeln!(s, r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{color}"/>"#, f.x(p.0), f.y(p.1));
        }
        let ly = f.top + 20.0 + 20.0 * k as f64;
        let lx = f.width - f.right + 15.0;
        let _ = writeln!(s, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, lx + 20.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, lx + 26.0, ly + 4.0, ser.method);
    }
    s.push_str("</svg>\n");
    s
}

fn blend(img: &mut RgbImage, x: i64, y: i64, c: [u8; 3], a: f64) {
    if x < 0 || y < 0 || x >= img.width() as i64 || y >= img.height() as i64 {
        return;
    }
    let p = img.get_pixel_mut(x as u32, y as u32);
    for k in 0..3 {
        p.0[k] = (p.0[k] as f64 * (1.0 - a) + c[k] as f64 * a).round() as u8;
    }
}

fn draw_line(img: &mut RgbImage, (x0, y0): (f64, f64), (x1, y1): (f64, f64), c: [u8; 3], width: i64) {
    let steps = ((x1 - x0).abs().max((y1 - y0).abs()).ceil() as usize).max(1);
    for k in 0..=steps {
        let t = k as f64 / steps as f64;
        let (x, y) = ((x0 + t * (x1 - x0)).round() as i64, (y0 + t * (y1 - y0)).round() as i64);
        for dx in 0..width {
            for dy in 0..width {
                blend(img, x + dx - width / 2, y + dy - width / 2, c, 1.0);
            }
        }
    }
}

/// Raster version of [`plot_svg`] (no text).
pub fn plot_png(series: &[Series]) -> RgbImage {
    let f = Frame::new(series);
    let mut img = RgbImage::from_pixel(f.width as u32, f.height as u32, Rgb([255, 255, 255]));
    for (k, ser) in series.iter().enumerate() {
        let c = COLORS[k % COLORS.len()];
        for w in ser.points.windows(2) {
            let (xa, xb) = (f.x(w[0].0), f.x(w[1].0));
            for x in xa.round() as i64..=xb.round() as i64 {
                let t = if xb > xa { (x as f64 - xa) / (xb - xa) } else { 0.0 };
                let lo = f.y(w[0].2 + t * (w[1].2 - w[0].2));
                let hi = f.y(w[0].3 + t * (w[1].3 - w[0].3));
                for y in hi.round() as i64..=lo.round() as i64 {
                    blend(&mut img, x, y, c, 0.2);
                }
            }
        }
    }
    let black = [0, 0, 0];
    let (x0, x1, yb, yt) = (f.x(0.0), f.x(1.0), f.y(f.y_lo), f.y(f.y_hi));
    draw_line(&mut img, (x0, yb), (x1, yb), black, 1);
    draw_line(&mut img, (x0, yb), (x0, yt), black, 1);
    for k in 0..=4 {
        let x = f.x(k as f64 / 4.0);
        draw_line(&mut img, (x, yb), (x, yb + 5.0), black, 1);
    }
    for (k, ser) in series.iter().enumerate() {
        let c = COLORS[k % COLORS.len()];
        for w in ser.points.windows(2) {
            draw_line(&mut img, (f.x(w[0].0), f.y(w[0].1)), (f.x(w[1].0), f.y(w[1].1)), c, 2);
        }
        let ly = f.top + 20.0 + 20.0 * k as f64;
        let lx = f.width - f.right + 15.0;
        draw_line(&mut img, (lx, ly), (lx + 20.0, ly), c, 3);
    }
    img
}

/// Paths written by [`render_report`].
#[derive(Debug, Clone, Default)]
pub struct ReportFiles {
    pub results: PathBuf,
    pub tables: Vec<PathBuf>,
    pub figures: Vec<PathBuf>,
}

fn write(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes `results.json`, `tables/*.tsv` and, for label-ratio reports,
/// `figures/map_vs_label_ratio.{png,svg}` under `out`.
pub fn render_report(reports: &[MetricsReport], baseline: &str, out: &Path) -> Result<ReportFiles> {
    if reports.is_empty() {
        return Err(Error::invalid("no reports to render"));
    }
    let mut reports = reports.to_vec();
    attach_pvalues(&mut reports, baseline);
    if !reports.iter().any(|r| r.method == baseline) {
        log::warn!("baseline `{baseline}` absent: relative columns omitted");
    }
    let mut files = ReportFiles {
        results: out.join("results.json"),
        ..ReportFiles::default()
    };
    let mut json = serde_json::to_string_pretty(&reports)?;
    json.push('\n');
    write(&files.results, json.as_bytes())?;

    let (swept, plain): (Vec<MetricsReport>, Vec<MetricsReport>) =
        reports.into_iter().partition(|r| r.metrics.label_ratio.is_some());
    if !plain.is_empty() {
        let path = out.join("tables").join("main.tsv");
        write(&path, main_table(&plain, baseline).as_bytes())?;
        files.tables.push(path);
    }
    if !swept.is_empty() {
        let path = out.join("tables").join("label_ratio.tsv");
        write(&path, sweep_table(&swept, baseline).as_bytes())?;
        files.tables.push(path);
        let series = sweep_series(&swept);
        let svg = out.join("figures").join("map_vs_label_ratio.svg");
        write(&svg, plot_svg(&series, "test mAP vs label ratio").as_bytes())?;
        let png = out.join("figures").join("map_vs_label_ratio.png");
        crate::data::images::write_png(&png, &plot_png(&series))?;
        files.figures.extend([png, svg]);
    }
    Ok(files)
}

/// Reads back a `results.json`.
pub fn read_results(path: &Path) -> Result<Vec<MetricsReport>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(method: &str, seed: u64, aps: &[f64]) -> MetricsReport {
        let map = aps.iter().sum::<f64>() / aps.len() as f64;
        MetricsReport::new(
            "rq1",
            method,
            "synthetic",
            seed,
            Metrics {
                map,
                per_class_ap: aps.iter().map(|&a| Some(a)).collect(),
                auc: None,
                label_ratio: None,
            },
        )
    }

    #[test]
    fn delta_formatting() {
        assert_eq!(format_cell(0.422, Some(0.3868), Some(0.001)), "0.422 (+9.1%*)");
        assert_eq!(format_cell(0.422, Some(0.3868), Some(0.01)), "0.422 (+9.1%)");
        assert_eq!(format_cell(0.422, Some(0.387), None), "0.422 (+9.0%)");
        assert_eq!(format_cell(0.30, Some(0.40), Some(0.5)), "0.300 (-25.0%)");
        assert_eq!(format_cell(0.387, None, None), "0.387");
    }

    #[test]
    fn single_report_gives_one_row() {
        let t = main_table(&[report("Image-only", 0, &[0.4, 0.5])], "Image-only");
        assert_eq!(t, "method\tsynthetic\nImage-only\t0.450\n");
    }

    #[test]
    fn pvalues_pair_matching_seeds() {
        let mut rs = vec![
            report("Image-only", 0, &[0.3, 0.4, 0.5]),
            report("MTL", 0, &[0.35, 0.44, 0.56]),
            report("MTL", 1, &[0.35, 0.44, 0.56]),
        ];
        attach_pvalues(&mut rs, "Image-only");
        assert!(rs[0].pvalues.is_empty());
        assert!(rs[1].pvalues.contains_key("Image-only"));
        assert!(rs[2].pvalues.is_empty());
    }
}
