//! Trait-index tables and radar charts.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use svg::node::element::{Circle, Group, Line, Polygon, Rectangle, Text, Title};
use svg::Document;

use crate::error::{Error, Result};
use crate::rank::{Polarity, TraitIndexVector};
use crate::types::TransformKind;

pub const TABLE_HEADER: [&str; 11] = [
    "detector", "kind", "step", "amount", "polarity", "j", "F", "G", "H", "available", "scenes",
];

fn table_order(a: &TraitIndexVector, b: &TraitIndexVector) -> std::cmp::Ordering {
    (&a.detector, a.kind, a.step, a.polarity).cmp(&(&b.detector, b.kind, b.step, b.polarity))
}

/// CSV table, one row per vector in (detector, kind, step, polarity) order.
/// Unavailable vectors have empty F/G/H cells.
pub fn format_trait_table(vectors: &[TraitIndexVector]) -> String {
    let mut sorted: Vec<&TraitIndexVector> = vectors.iter().collect();
    sorted.sort_by(|a, b| table_order(a, b));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(TABLE_HEADER).expect("write to memory");
    for v in sorted {
        let values = v.values();
        let cell = |i: usize| values.map(|x| x[i].to_string()).unwrap_or_default();
        let scenes: Vec<String> = v.scenes.iter().map(|s| s.to_string()).collect();
        w.write_record([
            v.detector.clone(),
            v.kind.name().to_string(),
            v.step.to_string(),
            v.amount.to_string(),
            v.polarity.name().to_string(),
            v.j.to_string(),
            cell(0),
            cell(1),
            cell(2),
            v.available().to_string(),
            scenes.join(";"),
        ])
        .expect("write to memory");
    }
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("utf-8 fields")
}

pub fn emit_trait_tables(vectors: &[TraitIndexVector], path: &Path) -> Result<()> {
    if vectors.is_empty() {
        return Err(Error::data("no trait index vectors to report"));
    }
    crate::io::write_atomic(path, format_trait_table(vectors).as_bytes())
}

/// One polygon of a radar chart. Values are percentages; `None` marks an
/// unavailable value, drawn at 0 with a marker.
#[derive(Clone, Debug, PartialEq)]
pub struct RadarSeries {
    pub name: String,
    pub values: Vec<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RadarChart {
    pub title: String,
    /// Axis labels, placed clockwise from 12 o'clock.
    pub axes: Vec<String>,
    pub series: Vec<RadarSeries>,
}

pub const MAX_SERIES: usize = 6;
const SIZE: f64 = 520.0;
const CENTER: f64 = SIZE / 2.0;
/// Radius of the 100% ring.
pub const RADIUS: f64 = 180.0;
const PALETTE: [&str; MAX_SERIES] = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02"];

/// Rounds to two decimals, normalizing negative zero.
fn coord(v: f64) -> f64 {
    (v * 100.0).round() / 100.0 + 0.0
}

/// Position of `percent` on axis `i` of `n`.
pub fn radar_point(i: usize, n: usize, percent: f64) -> (f64, f64) {
    let theta = 2.0 * PI * i as f64 / n as f64;
    let r = percent / 100.0 * RADIUS;
    (coord(CENTER + r * theta.sin()), coord(CENTER - r * theta.cos()))
}

pub fn radar_center() -> (f64, f64) {
    (CENTER, CENTER)
}

impl RadarChart {
    pub fn check(&self) -> Result<()> {
        if self.axes.len() < 3 {
            return Err(Error::data(format!(
                "{}: need ≥ 3 axes for a radar chart, got {}",
                self.title,
                self.axes.len()
            )));
        }
        if self.series.is_empty() || self.series.len() > MAX_SERIES {
            return Err(Error::data(format!(
                "{}: a radar chart takes 1 to {MAX_SERIES} series, got {}",
                self.title,
                self.series.len()
            )));
        }
        for s in &self.series {
            if s.values.len() != self.axes.len() {
                return Err(Error::data(format!(
                    "{}: mismatched axes, series `{}` has {} values for {} axes",
                    self.title,
                    s.name,
                    s.values.len(),
                    self.axes.len()
                )));
            }
            if let Some(v) = s.values.iter().flatten().find(|v| !(0.0..=100.0).contains(*v)) {
                return Err(Error::data(format!(
                    "{}: series `{}` value {v} outside [0, 100]",
                    self.title, s.name
                )));
            }
        }
        Ok(())
    }

    pub fn render_svg(&self) -> Result<String> {
        self.check()?;
        let n = self.axes.len();
        let mut doc = Document::new()
            .set("viewBox", (0, 0, SIZE, SIZE))
            .set("width", SIZE)
            .set("height", SIZE)
            .set("font-family", "sans-serif")
            .set("font-size", 11)
            .add(Title::new(self.title.clone()))
            .add(
                Rectangle::new()
                    .set("width", SIZE)
                    .set("height", SIZE)
                    .set("fill", "white"),
            );

        let mut grid = Group::new().set("class", "grid").set("stroke", "#bbbbbb").set("fill", "none");
        for pct in [25.0, 50.0, 75.0, 100.0] {
            grid = grid.add(
                Circle::new()
                    .set("cx", CENTER)
                    .set("cy", CENTER)
                    .set("r", coord(pct / 100.0 * RADIUS)),
            );
        }
        let mut labels = Group::new().set("class", "axes").set("text-anchor", "middle");
        for (i, label) in self.axes.iter().enumerate() {
            let (x, y) = radar_point(i, n, 100.0);
            grid = grid.add(
                Line::new()
                    .set("x1", CENTER)
                    .set("y1", CENTER)
                    .set("x2", x)
                    .set("y2", y),
            );
            let (lx, ly) = radar_point(i, n, 100.0 * (RADIUS + 26.0) / RADIUS);
            let unavailable = self.series.iter().any(|s| s.values[i].is_none());
            let text = if unavailable { format!("{label} (n/a)") } else { label.clone() };
            labels = labels.add(Text::new(text).set("x", lx).set("y", coord(ly + 4.0)));
        }
        doc = doc.add(grid).add(labels);

        for (si, s) in self.series.iter().enumerate() {
            let color = PALETTE[si];
            let pts: Vec<(f64, f64)> = s
                .values
                .iter()
                .enumerate()
                .map(|(i, v)| radar_point(i, n, v.unwrap_or(0.0)))
                .collect();
            let points: Vec<String> = pts.iter().map(|(x, y)| format!("{x},{y}")).collect();
            let mut g = Group::new().set("class", "series").set("data-name", s.name.clone()).add(
                Polygon::new()
                    .set("points", points.join(" "))
                    .set("fill", color)
                    .set("fill-opacity", 0.15)
                    .set("stroke", color)
                    .set("stroke-width", 2),
            );
            for (i, (v, &(x, y))) in s.values.iter().zip(&pts).enumerate() {
                let tip = match v {
                    Some(v) => format!("{} {}: {v:.1}%", s.name, self.axes[i]),
                    None => format!("{} {}: unavailable", s.name, self.axes[i]),
                };
                g = g.add(
                    Circle::new()
                        .set("class", "vertex")
                        .set("cx", x)
                        .set("cy", y)
                        .set("r", 2.5)
                        .set("fill", color)
                        .add(Title::new(tip)),
                );
                if v.is_none() {
                    // hollow marker just outside the perimeter on that axis
                    let (mx, my) = radar_point(i, n, 100.0 * (RADIUS + 9.0 + 5.0 * si as f64) / RADIUS);
                    g = g.add(
                        Circle::new()
                            .set("class", "unavailable")
                            .set("cx", mx)
                            .set("cy", my)
                            .set("r", 3.5)
                            .set("fill", "none")
                            .set("stroke", color)
                            .set("stroke-width", 1.5),
                    );
                }
            }
            let ly = 20.0 + 16.0 * si as f64;
            g = g
                .add(
                    Rectangle::new()
                        .set("x", 12)
                        .set("y", ly - 9.0)
                        .set("width", 10)
                        .set("height", 10)
                        .set("fill", color),
                )
                .add(Text::new(s.name.clone()).set("x", 28).set("y", ly));
            doc = doc.add(g);
        }
        Ok(format!("{doc}\n"))
    }
}

pub fn emit_radar_svg(chart: &RadarChart, path: &Path) -> Result<()> {
    crate::io::write_atomic(path, chart.render_svg()?.as_bytes())
}

/// `<d>_<kind>_<polarity>.svg`
pub fn chart_file_name(detector: &str, kind: TransformKind, polarity: Polarity) -> String {
    format!("{detector}_{}_{}.svg", kind.name(), polarity.name())
}

/// One chart per (detector, kind, polarity): axes are the transformation
/// amounts in step order, series are F, G and H in percent.
pub fn build_charts(vectors: &[TraitIndexVector]) -> Vec<(String, RadarChart)> {
    let mut groups: BTreeMap<(&str, TransformKind, Polarity), Vec<&TraitIndexVector>> = BTreeMap::new();
    for v in vectors {
        groups.entry((&v.detector, v.kind, v.polarity)).or_default().push(v);
    }
    groups
        .into_iter()
        .map(|((d, kind, pol), mut vs)| {
            vs.sort_by_key(|v| v.step);
            let series = ["F", "G", "H"]
                .iter()
                .enumerate()
                .map(|(i, name)| RadarSeries {
                    name: format!("{name} {pol}"),
                    values: vs.iter().map(|v| v.values().map(|x| x[i] * 100.0)).collect(),
                })
                .collect();
            let j = vs.first().map_or(0, |v| v.j);
            let chart = RadarChart {
                title: format!("{d}, {kind}, {pol} ranking (j = {j})"),
                axes: vs.iter().map(|v| kind.format_amount(v.amount)).collect(),
                series,
            };
            (chart_file_name(d, kind, pol), chart)
        })
        .collect()
}

/// Writes `trait_indices.csv` and every chart into `dir`; returns the
/// written paths in order.
pub fn write_report(vectors: &[TraitIndexVector], dir: &Path) -> Result<Vec<PathBuf>> {
    // validate every chart before writing anything
    let charts = build_charts(vectors);
    let rendered: Vec<(String, String)> = charts
        .iter()
        .map(|(name, c)| Ok((name.clone(), c.render_svg()?)))
        .collect::<Result<_>>()?;
    let table = dir.join("trait_indices.csv");
    emit_trait_tables(vectors, &table)?;
    let mut out = vec![table];
    for (name, svg) in rendered {
        let p = dir.join(name);
        crate::io::write_atomic(&p, svg.as_bytes())?;
        out.push(p);
    }
    Ok(out)
}
