//! PNG renderings of wafers, diagrams, persistence images and experiment
//! results. Every image is written together with a CSV of the plotted data,
//! which carries the numbers the images leave unlabeled.

use std::fs;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use serde_json::Value;

use super::experiments::confusion_csv;
use super::{csv, opt, ExperimentReport, ExperimentResult};
use crate::classifier::{EpochRecord, EvalReport, TrainHistory};
use crate::error::{Error, Result};
use crate::persistence_image::{compute_pi, PIConfig, PersistenceImage};
use crate::ph_engine::{compute_persistence, PersistenceDiagram};
use crate::wafer_sim::{WaferMap, NUM_CLASSES, WAFER_RADIUS};

const SIZE: u32 = 480;
const MARGIN: u32 = 40;
const WHITE: Rgb<u8> = Rgb([255, 255, 255]);
const BLACK: Rgb<u8> = Rgb([0, 0, 0]);
const GREY: Rgb<u8> = Rgb([170, 170, 170]);
const PALETTE: [Rgb<u8>; 6] = [
    Rgb([31, 119, 180]),
    Rgb([214, 39, 40]),
    Rgb([44, 160, 44]),
    Rgb([255, 127, 14]),
    Rgb([148, 103, 189]),
    Rgb([140, 86, 75]),
];

/// Anything `plot` knows how to draw.
#[derive(Debug, Clone)]
pub enum PlotInput {
    Wafer(WaferMap),
    Diagrams(Vec<PersistenceDiagram>),
    Image(PersistenceImage),
    Eval(Box<EvalReport>),
    Report(Box<ExperimentReport>),
}

fn has(v: &Value, keys: &[&str]) -> bool {
    keys.iter().all(|k| v.get(k).is_some())
}

impl PlotInput {
    /// Recognizes the JSON forms written elsewhere in the pipeline.
    pub fn from_json(value: Value) -> Result<Self> {
        let parse = |e: serde_json::Error| Error::Format(format!("malformed plot input: {e}"));
        let diagram = |v: &Value| v.is_object() && has(v, &["dim", "pairs"]);
        if let Value::Array(items) = &value {
            if items.iter().all(diagram) {
                return serde_json::from_value(value).map(PlotInput::Diagrams).map_err(parse);
            }
        } else if has(&value, &["points", "label"]) {
            return serde_json::from_value(value).map(PlotInput::Wafer).map_err(parse);
        } else if has(&value, &["nx", "ny", "pixels"]) {
            return serde_json::from_value(value).map(PlotInput::Image).map_err(parse);
        } else if diagram(&value) {
            return serde_json::from_value(value)
                .map(|d| PlotInput::Diagrams(vec![d]))
                .map_err(parse);
        } else if has(&value, &["spec", "environment", "result"]) {
            return serde_json::from_value(value)
                .map(|r| PlotInput::Report(Box::new(r)))
                .map_err(parse);
        } else if has(&value, &["accuracy", "confusion"]) {
            return serde_json::from_value(value)
                .map(|r| PlotInput::Eval(Box::new(r)))
                .map_err(parse);
        }
        Err(Error::Format(
            "unknown plot input: expected a wafer, diagram, persistence image, evaluation or experiment report".into(),
        ))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let value: Value =
            serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: not JSON: {e}", path.display())))?;
        Self::from_json(value)
    }
}

/// A rendered figure and the data behind it.
pub struct Figure {
    pub name: String,
    pub image: RgbImage,
    pub csv: String,
}

/// All figures for `input`. A wafer yields its scatter plot, diagram and
/// both persistence images.
pub fn figures(input: &PlotInput, cfg: &PIConfig) -> Result<Vec<Figure>> {
    Ok(match input {
        PlotInput::Wafer(w) => {
            let (h0, h1) = compute_persistence(&w.cloud())?;
            let mut out = vec![wafer_figure(w), diagram_figure(&[h0.clone(), h1.clone()])];
            for d in [&h0, &h1] {
                out.push(pi_figure(&compute_pi(d, cfg)?));
            }
            out
        }
        PlotInput::Diagrams(ds) => vec![diagram_figure(ds)],
        PlotInput::Image(pi) => vec![pi_figure(pi)],
        PlotInput::Eval(r) => eval_figures(r, ""),
        PlotInput::Report(r) => report_figures(r),
    })
}

/// Renders `input` into `out_dir` as `<stem>_<figure>.png` plus `.csv`;
/// returns the written paths.
pub fn plot_file(input: &Path, out_dir: &Path, cfg: &PIConfig) -> Result<Vec<PathBuf>> {
    let plot = PlotInput::read(input)?;
    let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or("plot");
    write_figures(&figures(&plot, cfg)?, stem, out_dir)
}

pub fn write_figures(figures: &[Figure], stem: &str, out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    for f in figures {
        let png = out_dir.join(format!("{stem}_{}.png", f.name));
        f.image
            .save(&png)
            .map_err(|e| Error::Format(format!("{}: cannot write image: {e}", png.display())))?;
        let table = png.with_extension("csv");
        fs::write(&table, &f.csv).map_err(|e| Error::io(&table, e))?;
        written.push(png);
        written.push(table);
    }
    Ok(written)
}

/// Plot area mapping data coordinates to pixels, y pointing up.
struct Canvas {
    img: RgbImage,
    x: (f64, f64),
    y: (f64, f64),
}

impl Canvas {
    fn new(x: (f64, f64), y: (f64, f64)) -> Self {
        let widen = |(lo, hi): (f64, f64)| {
            if hi > lo && (hi - lo).is_finite() {
                (lo, hi)
            } else {
                (lo - 1.0, lo + 1.0)
            }
        };
        Self {
            img: RgbImage::from_pixel(SIZE, SIZE, WHITE),
            x: widen(x),
            y: widen(y),
        }
    }

    fn to_px(&self, x: f64, y: f64) -> (f64, f64) {
        let span = f64::from(SIZE - 2 * MARGIN);
        let px = f64::from(MARGIN) + (x - self.x.0) / (self.x.1 - self.x.0) * span;
        let py = f64::from(SIZE - MARGIN) - (y - self.y.0) / (self.y.1 - self.y.0) * span;
        (px, py)
    }

    fn put(&mut self, px: i64, py: i64, c: Rgb<u8>) {
        if (0..i64::from(SIZE)).contains(&px) && (0..i64::from(SIZE)).contains(&py) {
            self.img.put_pixel(px as u32, py as u32, c);
        }
    }

    fn segment_px(&mut self, (x0, y0): (f64, f64), (x1, y1): (f64, f64), c: Rgb<u8>) {
        let steps = (x1 - x0).abs().max((y1 - y0).abs()).ceil().max(1.0) as i64;
        for s in 0..=steps {
            let t = s as f64 / steps as f64;
            self.put(
                (x0 + t * (x1 - x0)).round() as i64,
                (y0 + t * (y1 - y0)).round() as i64,
                c,
            );
        }
    }

    fn segment(&mut self, a: (f64, f64), b: (f64, f64), c: Rgb<u8>) {
        let (a, b) = (self.to_px(a.0, a.1), self.to_px(b.0, b.1));
        self.segment_px(a, b, c);
    }

    fn dot(&mut self, x: f64, y: f64, r: i64, c: Rgb<u8>) {
        if !(x.is_finite() && y.is_finite()) {
            return;
        }
        let (px, py) = self.to_px(x, y);
        let (px, py) = (px.round() as i64, py.round() as i64);
        for dy in -r..=r {
            for dx in -r..=r {
                if dx * dx + dy * dy <= r * r {
                    self.put(px + dx, py + dy, c);
                }
            }
        }
    }

    /// Bottom and left axes with five ticks each.
    fn axes(&mut self) {
        let (lo, hi) = (f64::from(MARGIN), f64::from(SIZE - MARGIN));
        self.segment_px((lo, hi), (hi, hi), BLACK);
        self.segment_px((lo, lo), (lo, hi), BLACK);
        for k in 0..=4 {
            let t = lo + f64::from(k) * (hi - lo) / 4.0;
            self.segment_px((t, hi), (t, hi + 6.0), BLACK);
            self.segment_px((lo - 6.0, t), (lo, t), BLACK);
        }
    }
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

fn wafer_figure(w: &WaferMap) -> Figure {
    let r = WAFER_RADIUS * 1.05;
    let mut c = Canvas::new((-r, r), (-r, r));
    let n = 360;
    for k in 0..n {
        let (a, b) = (
            std::f64::consts::TAU * k as f64 / n as f64,
            std::f64::consts::TAU * (k + 1) as f64 / n as f64,
        );
        c.segment(
            (WAFER_RADIUS * a.cos(), WAFER_RADIUS * a.sin()),
            (WAFER_RADIUS * b.cos(), WAFER_RADIUS * b.sin()),
            GREY,
        );
    }
    for p in &w.points {
        c.dot(p[0], p[1], 2, PALETTE[w.label.index() % PALETTE.len()]);
    }
    Figure {
        name: "wafer".into(),
        image: c.img,
        csv: csv("x,y", w.points.iter().map(|p| format!("{},{}", p[0], p[1]))),
    }
}

/// Birth/death scatter of one or more diagrams with the diagonal drawn in.
pub fn diagram_figure(diagrams: &[PersistenceDiagram]) -> Figure {
    let (lo, hi) = bounds(
        diagrams
            .iter()
            .flat_map(|d| d.pairs.iter().flat_map(|p| [p.birth, p.death])),
    );
    let (lo, hi) = if lo <= hi { (lo.min(0.0), hi * 1.05) } else { (0.0, 1.0) };
    let mut c = Canvas::new((lo, hi), (lo, hi));
    c.axes();
    c.segment((lo, lo), (hi, hi), GREY);
    for d in diagrams {
        for p in &d.pairs {
            c.dot(p.birth, p.death, 3, PALETTE[d.dim % PALETTE.len()]);
        }
    }
    Figure {
        name: "diagram".into(),
        image: c.img,
        csv: csv(
            "dim,birth,death",
            diagrams.iter().flat_map(|d| {
                d.pairs
                    .iter()
                    .map(move |p| format!("{},{},{}", d.dim, p.birth, p.death))
            }),
        ),
    }
}

/// Maps `t` in [0, 1] to a dark-blue to yellow ramp.
fn heat(t: f64) -> Rgb<u8> {
    const STOPS: [[f64; 3]; 4] = [
        [68.0, 1.0, 84.0],
        [59.0, 82.0, 139.0],
        [33.0, 145.0, 140.0],
        [253.0, 231.0, 37.0],
    ];
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 } * (STOPS.len() - 1) as f64;
    let k = (t.floor() as usize).min(STOPS.len() - 2);
    let f = t - k as f64;
    Rgb(std::array::from_fn(|i| {
        (STOPS[k][i] + f * (STOPS[k + 1][i] - STOPS[k][i])).round() as u8
    }))
}

/// `cells[r][c]` as a heat map with row 0 at the top.
fn heatmap(cells: &[Vec<f64>]) -> RgbImage {
    let rows = cells.len().max(1) as u32;
    let cols = cells.iter().map(Vec::len).max().unwrap_or(0).max(1) as u32;
    let span = SIZE - 2 * MARGIN;
    let cell = (span / rows.max(cols)).max(1);
    let max = cells.iter().flatten().copied().fold(0.0, f64::max);
    let mut img = RgbImage::from_pixel(2 * MARGIN + cols * cell, 2 * MARGIN + rows * cell, WHITE);
    for (r, row) in cells.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            let color = heat(if max > 0.0 { v / max } else { 0.0 });
            for y in 0..cell {
                for x in 0..cell {
                    img.put_pixel(MARGIN + c as u32 * cell + x, MARGIN + r as u32 * cell + y, color);
                }
            }
        }
    }
    img
}

/// Persistence image with persistence increasing upwards.
pub fn pi_figure(pi: &PersistenceImage) -> Figure {
    let cells: Vec<Vec<f64>> = pi.rows().rev().map(<[f64]>::to_vec).collect();
    Figure {
        name: format!("pi_h{}", pi.dim),
        image: heatmap(&cells),
        csv: csv(
            "row,col,value",
            (0..pi.ny)
                .flat_map(|j| (0..pi.nx).map(move |i| (j, i)))
                .map(|(j, i)| format!("{j},{i},{}", pi.get(j, i))),
        ),
    }
}

fn confusion_figure(r: &EvalReport, prefix: &str) -> Figure {
    let cells: Vec<Vec<f64>> = r
        .confusion
        .iter()
        .map(|row| row.iter().map(|&v| v as f64).collect())
        .collect();
    Figure {
        name: format!("{prefix}confusion"),
        image: heatmap(&cells),
        csv: confusion_csv(r),
    }
}

/// Line plot of `(x, y)` series sharing one set of axes.
fn line_figure(name: String, header: &str, series: &[Vec<(f64, f64)>]) -> Figure {
    let pts = || series.iter().flatten();
    let (x_lo, x_hi) = bounds(pts().map(|p| p.0));
    let (y_lo, y_hi) = bounds(pts().map(|p| p.1));
    let (x_lo, x_hi) = if x_lo <= x_hi { (x_lo, x_hi) } else { (0.0, 1.0) };
    let (y_lo, y_hi) = if y_lo <= y_hi {
        (y_lo.min(0.0), y_hi * 1.05)
    } else {
        (0.0, 1.0)
    };
    let mut c = Canvas::new((x_lo, x_hi), (y_lo, y_hi));
    c.axes();
    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        for w in s.windows(2) {
            c.segment(w[0], w[1], color);
        }
        if s.len() < 50 {
            for &(x, y) in s {
                c.dot(x, y, 2, color);
            }
        }
    }
    Figure {
        name,
        image: c.img,
        csv: csv(
            header,
            series
                .iter()
                .enumerate()
                .flat_map(|(k, s)| s.iter().map(move |(x, y)| format!("{k},{x},{y}"))),
        ),
    }
}

type Metric = fn(&EpochRecord) -> Option<f64>;

/// One curve per tracked metric.
fn history_figures(h: &TrainHistory, prefix: &str) -> Vec<Figure> {
    let metrics: [(&str, Metric); 5] = [
        ("train_loss", |e| Some(e.train_loss)),
        ("train_accuracy", |e| Some(e.train_accuracy)),
        ("val_loss", |e| e.val_loss),
        ("val_accuracy", |e| e.val_accuracy),
        ("epoch_seconds", |e| Some(e.seconds)),
    ];
    metrics
        .iter()
        .filter_map(|(name, get)| {
            let s: Vec<(f64, f64)> = h
                .epochs
                .iter()
                .filter_map(|e| get(e).map(|v| (e.epoch as f64, v)))
                .collect();
            (!s.is_empty()).then(|| line_figure(format!("{prefix}{name}"), "series,epoch,value", &[s]))
        })
        .collect()
}

fn eval_figures(r: &EvalReport, prefix: &str) -> Vec<Figure> {
    let mut out = vec![confusion_figure(r, prefix)];
    if let Some(h) = &r.history {
        out.extend(history_figures(h, prefix));
    }
    out
}

fn report_figures(r: &ExperimentReport) -> Vec<Figure> {
    match &r.result {
        ExperimentResult::Basic(b) => b
            .runs
            .iter()
            .flat_map(|run| eval_figures(&run.eval, &format!("seed{}_", run.seed)))
            .collect(),
        ExperimentResult::SmallData(s) => {
            let mean: Vec<(f64, f64)> = s.sizes.iter().map(|z| (z.size as f64, z.mean_accuracy)).collect();
            vec![line_figure("accuracy_by_size".into(), "series,size,accuracy", &[mean])]
        }
        ExperimentResult::Imbalanced(im) => {
            let draws: Vec<(f64, f64)> = im
                .draws
                .iter()
                .enumerate()
                .map(|(k, d)| ((k + 1) as f64, d.mean_accuracy))
                .collect();
            let mut fig = line_figure("accuracy_by_draw".into(), "series,draw,accuracy", &[draws]);
            fig.csv = csv(
                &format!(
                    "draw,{},mean_accuracy",
                    (0..NUM_CLASSES).map(|c| format!("n{c}")).collect::<Vec<_>>().join(",")
                ),
                im.draws.iter().map(|d| {
                    format!(
                        "{},{},{}",
                        d.name,
                        d.counts.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(","),
                        d.mean_accuracy
                    )
                }),
            );
            vec![fig]
        }
        ExperimentResult::Bench(b) => {
            let mut totals: Vec<usize> = b.configs.iter().map(|c| c.total).collect();
            totals.dedup();
            let series: Vec<Vec<(f64, f64)>> = totals
                .iter()
                .map(|&t| {
                    b.configs
                        .iter()
                        .filter(|c| c.total == t)
                        .map(|c| (c.ratio, c.median.total_seconds))
                        .collect()
                })
                .collect();
            let mut fig = line_figure("time_by_ratio".into(), "series,ratio,seconds", &series);
            fig.csv = csv(
                "total,ratio,seconds,ms_per_wafer",
                b.configs.iter().map(|c| {
                    format!(
                        "{},{},{},{}",
                        c.total,
                        c.ratio,
                        c.median.total_seconds,
                        opt(Some(c.ms_per_wafer))
                    )
                }),
            );
            vec![fig]
        }
    }
}
