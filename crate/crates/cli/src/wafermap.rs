//! Per-chip wafer maps rendered as an aligned text grid, CSV, or SVG.
//!
//! Orientation: x grows to the right and y grows upward by default
//! (`y_down` flips rows). SVG cells are colored on a linear ramp between
//! the map's minimum and maximum value, interpolated in RGB through
//! blue `#2166ac`, pale yellow `#ffffbf` and red `#b2182b`. Defective chips
//! are drawn black with a white cross and chips without a value gray with
//! a dash. Value labels use 4 significant digits in both the text and SVG
//! forms.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use iltber_core::data::{ChipKey, WaferKey};
use iltber_core::numfmt;
use serde::Serialize;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Vform,
    Ber,
}

impl Metric {
    pub fn parse(s: &str) -> CliResult<Self> {
        match s.to_ascii_lowercase().as_str() {
            "vform" => Ok(Self::Vform),
            "ber" => Ok(Self::Ber),
            other => Err(CliError::usage(format!("unknown metric `{other}` (expected vform or ber)"))),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::Vform => "vform_volt",
            Self::Ber => "log10_ber",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CellValue {
    Value { value: f64 },
    Defective { reason: String },
    Absent { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cell {
    pub chip_x: i32,
    pub chip_y: i32,
    #[serde(flatten)]
    pub value: CellValue,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WaferMap {
    pub metric: &'static str,
    pub wafer: WaferKey,
    pub cells: Vec<Cell>,
    /// `(min, max)` over valued cells.
    pub range: Option<(f64, f64)>,
}

type Row<'a> = (i32, Vec<(i32, Option<&'a Cell>)>);

impl WaferMap {
    /// One cell per chip of `wafer`; later entries for the same (x, y) are
    /// an error.
    pub fn new(metric: Metric, wafer: WaferKey, cells: Vec<(ChipKey, CellValue)>) -> CliResult<Self> {
        let mut by_pos = BTreeMap::new();
        for (chip, value) in cells {
            if chip.wafer() != wafer {
                continue;
            }
            if by_pos.insert((chip.chip_y, chip.chip_x), value).is_some() {
                return Err(CliError::usage(format!("two cells at ({}, {})", chip.chip_x, chip.chip_y)));
            }
        }
        if by_pos.is_empty() {
            return Err(CliError::Insufficient(format!("wafer {}/{} has no chips", wafer.lot_id, wafer.wafer_id)));
        }
        let cells: Vec<Cell> = by_pos
            .into_iter()
            .map(|((chip_y, chip_x), value)| Cell { chip_x, chip_y, value })
            .collect();
        let range = cells
            .iter()
            .filter_map(|c| match c.value {
                CellValue::Value { value } => Some(value),
                _ => None,
            })
            .fold(None, |acc: Option<(f64, f64)>, v| match acc {
                None => Some((v, v)),
                Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
            });
        Ok(Self { metric: metric.label(), wafer, cells, range })
    }

    pub fn valued(&self) -> usize {
        self.cells.iter().filter(|c| matches!(c.value, CellValue::Value { .. })).count()
    }

    pub fn defective(&self) -> usize {
        self.cells.iter().filter(|c| matches!(c.value, CellValue::Defective { .. })).count()
    }

    fn bounds(&self) -> (i32, i32, i32, i32) {
        let xs = self.cells.iter().map(|c| c.chip_x);
        let ys = self.cells.iter().map(|c| c.chip_y);
        (
            xs.clone().min().unwrap_or(0),
            xs.max().unwrap_or(0),
            ys.clone().min().unwrap_or(0),
            ys.max().unwrap_or(0),
        )
    }

    /// Rows top to bottom as `(y, [(x, cell)])`.
    fn rows(&self, y_down: bool) -> Vec<Row<'_>> {
        let (x0, x1, y0, y1) = self.bounds();
        let lookup: BTreeMap<(i32, i32), &Cell> = self.cells.iter().map(|c| ((c.chip_x, c.chip_y), c)).collect();
        let ys: Vec<i32> = if y_down { (y0..=y1).collect() } else { (y0..=y1).rev().collect() };
        ys.into_iter()
            .map(|y| (y, (x0..=x1).map(|x| (x, lookup.get(&(x, y)).copied())).collect()))
            .collect()
    }
}

pub const DEFECTIVE_MARK: &str = "X";
pub const ABSENT_MARK: &str = "-";

pub fn cell_label(value: &CellValue) -> String {
    match value {
        CellValue::Value { value } => numfmt::sig(*value, 4),
        CellValue::Defective { .. } => DEFECTIVE_MARK.to_owned(),
        CellValue::Absent { .. } => ABSENT_MARK.to_owned(),
    }
}

pub fn render_text(map: &WaferMap, y_down: bool) -> String {
    let rows = map.rows(y_down);
    let width = map
        .cells
        .iter()
        .map(|c| cell_label(&c.value).len())
        .max()
        .unwrap_or(1)
        .max(3);
    let ylab = rows.iter().map(|(y, _)| format!("y={y}").len()).max().unwrap_or(3);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# {} {}/{} (x right, y {}); {DEFECTIVE_MARK} = defective, {ABSENT_MARK} = no value",
        map.metric,
        map.wafer.lot_id,
        map.wafer.wafer_id,
        if y_down { "down" } else { "up" }
    );
    for (y, cells) in &rows {
        let _ = write!(out, "{:>ylab$}", format!("y={y}"));
        for (_, cell) in cells {
            let label = cell.map(|c| cell_label(&c.value)).unwrap_or_default();
            let _ = write!(out, " {label:>width$}");
        }
        out.push('\n');
    }
    let _ = write!(out, "{:>ylab$}", "");
    if let Some((_, cells)) = rows.first() {
        for (x, _) in cells {
            let _ = write!(out, " {:>width$}", format!("x={x}"));
        }
    }
    out.push('\n');
    out
}

pub fn render_csv(map: &WaferMap) -> String {
    let mut out = String::from("lot_id,wafer_id,chip_x,chip_y,metric,status,value,reason\n");
    for c in &map.cells {
        let (status, value, reason) = match &c.value {
            CellValue::Value { value } => ("value", numfmt::exact(*value), String::new()),
            CellValue::Defective { reason } => ("defective", String::new(), reason.clone()),
            CellValue::Absent { reason } => ("absent", String::new(), reason.clone()),
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            csv_field(&map.wafer.lot_id),
            csv_field(&map.wafer.wafer_id),
            c.chip_x,
            c.chip_y,
            map.metric,
            status,
            value,
            csv_field(&reason)
        );
    }
    out
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

const RAMP: [[f64; 3]; 3] = [[33.0, 102.0, 172.0], [255.0, 255.0, 191.0], [178.0, 24.0, 43.0]];

/// Ramp color at `t` in [0, 1].
pub fn ramp_color(t: f64) -> String {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.5 };
    let (a, b, f) = if t <= 0.5 { (RAMP[0], RAMP[1], 2.0 * t) } else { (RAMP[1], RAMP[2], 2.0 * t - 1.0) };
    let ch = |i: usize| (a[i] + (b[i] - a[i]) * f).round() as u8;
    format!("#{:02x}{:02x}{:02x}", ch(0), ch(1), ch(2))
}

fn position(range: Option<(f64, f64)>, v: f64) -> f64 {
    match range {
        Some((lo, hi)) if hi > lo => (v - lo) / (hi - lo),
        _ => 0.5,
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

const CELL: i32 = 64;
const PAD: i32 = 40;
const LEGEND_W: i32 = 150;

pub fn render_svg(map: &WaferMap, y_down: bool) -> String {
    let rows = map.rows(y_down);
    let ncols = rows.first().map_or(0, |r| r.1.len()) as i32;
    let nrows = rows.len() as i32;
    let grid_w = ncols * CELL;
    let grid_h = nrows * CELL;
    let width = PAD * 2 + grid_w + LEGEND_W;
    let height = (PAD * 2 + grid_h).max(PAD * 2 + 220);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif">"#
    );
    let _ = writeln!(
        s,
        r#"<title>{} {}/{}</title>"#,
        map.metric,
        xml_escape(&map.wafer.lot_id),
        xml_escape(&map.wafer.wafer_id)
    );
    let _ = writeln!(
        s,
        r#"<text x="{PAD}" y="24" font-size="14">{} {}/{} (x right, y {})</text>"#,
        map.metric,
        xml_escape(&map.wafer.lot_id),
        xml_escape(&map.wafer.wafer_id),
        if y_down { "down" } else { "up" }
    );
    for (row, (y, cells)) in rows.iter().enumerate() {
        let top = PAD + row as i32 * CELL;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="10" text-anchor="end">y={y}</text>"#,
            PAD - 4,
            top + CELL / 2 + 4
        );
        for (col, (x, cell)) in cells.iter().enumerate() {
            let left = PAD + col as i32 * CELL;
            let Some(cell) = cell else { continue };
            let (cx, cy) = (left + CELL / 2, top + CELL / 2);
            match &cell.value {
                CellValue::Value { value } => {
                    let _ = writeln!(
                        s,
                        r##"<rect class="cell" data-x="{x}" data-y="{y}" x="{left}" y="{top}" width="{CELL}" height="{CELL}" fill="{}" stroke="#333"/>"##,
                        ramp_color(position(map.range, *value))
                    );
                }
                CellValue::Defective { reason } => {
                    let _ = writeln!(
                        s,
                        r##"<rect class="cell defective" data-x="{x}" data-y="{y}" x="{left}" y="{top}" width="{CELL}" height="{CELL}" fill="#000" stroke="#333"><title>{}</title></rect>"##,
                        xml_escape(reason)
                    );
                    let _ = writeln!(
                        s,
                        r##"<path d="M{} {}L{} {}M{} {}L{} {}" stroke="#fff" stroke-width="3"/>"##,
                        left + 8,
                        top + 8,
                        left + CELL - 8,
                        top + CELL - 8,
                        left + CELL - 8,
                        top + 8,
                        left + 8,
                        top + CELL - 8
                    );
                }
                CellValue::Absent { reason } => {
                    let _ = writeln!(
                        s,
                        r##"<rect class="cell absent" data-x="{x}" data-y="{y}" x="{left}" y="{top}" width="{CELL}" height="{CELL}" fill="#d9d9d9" stroke="#333"><title>{}</title></rect>"##,
                        xml_escape(reason)
                    );
                }
            }
            let fill = if matches!(cell.value, CellValue::Defective { .. }) { "#fff" } else { "#000" };
            let _ = writeln!(
                s,
                r#"<text class="label" x="{cx}" y="{}" font-size="11" text-anchor="middle" fill="{fill}">{}</text>"#,
                cy + 4,
                cell_label(&cell.value)
            );
        }
    }
    if let Some((_, cells)) = rows.first() {
        for (col, (x, _)) in cells.iter().enumerate() {
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" font-size="10" text-anchor="middle">x={x}</text>"#,
                PAD + col as i32 * CELL + CELL / 2,
                PAD + grid_h + 14
            );
        }
    }
    legend(&mut s, map, PAD * 2 + grid_w - 10);
    s.push_str("</svg>\n");
    s
}

fn legend(s: &mut String, map: &WaferMap, left: i32) {
    let top = PAD;
    let bar_h = 160;
    let _ = writeln!(
        s,
        r#"<defs><linearGradient id="ramp" x1="0" y1="1" x2="0" y2="0"><stop offset="0" stop-color="{}"/><stop offset="0.5" stop-color="{}"/><stop offset="1" stop-color="{}"/></linearGradient></defs>"#,
        ramp_color(0.0),
        ramp_color(0.5),
        ramp_color(1.0)
    );
    let _ = writeln!(
        s,
        r##"<rect class="legend" x="{left}" y="{top}" width="20" height="{bar_h}" fill="url(#ramp)" stroke="#333"/>"##
    );
    let (lo, hi) = map.range.map_or((String::from("n/a"), String::from("n/a")), |(lo, hi)| {
        (numfmt::sig(lo, 4), numfmt::sig(hi, 4))
    });
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="11">{hi}</text>"#, left + 26, top + 10);
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="11">{lo}</text>"#, left + 26, top + bar_h);
    let _ = writeln!(s, r#"<text x="{left}" y="{}" font-size="11">{}</text>"#, top - 6, map.metric);
    let key = top + bar_h + 14;
    let _ = writeln!(
        s,
        r##"<rect x="{left}" y="{key}" width="20" height="20" fill="#000"/><path d="M{} {}L{} {}M{} {}L{} {}" stroke="#fff" stroke-width="2"/>"##,
        left + 3,
        key + 3,
        left + 17,
        key + 17,
        left + 17,
        key + 3,
        left + 3,
        key + 17
    );
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="11">defective</text>"#, left + 26, key + 14);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(x: i32, y: i32) -> ChipKey {
        ChipKey::new("L1", "W1", x, y)
    }

    fn sample() -> WaferMap {
        let cells = vec![
            (key(0, 0), CellValue::Value { value: 2.5 }),
            (key(1, 0), CellValue::Value { value: 3.123456 }),
            (key(0, 1), CellValue::Defective { reason: "vform 4.2 V > 4 V".into() }),
            (key(1, 1), CellValue::Absent { reason: "no forming record".into() }),
            (ChipKey::new("L1", "W2", 5, 5), CellValue::Value { value: 9.0 }),
        ];
        WaferMap::new(Metric::Vform, key(0, 0).wafer(), cells).unwrap()
    }

    #[test]
    fn map_keeps_one_wafer() {
        let m = sample();
        assert_eq!(m.cells.len(), 4);
        assert_eq!(m.valued(), 2);
        assert_eq!(m.defective(), 1);
        assert_eq!(m.range, Some((2.5, 3.123456)));
    }

    #[test]
    fn duplicate_position_rejected() {
        let cells = vec![(key(0, 0), CellValue::Value { value: 1.0 }), (key(0, 0), CellValue::Value { value: 2.0 })];
        assert!(WaferMap::new(Metric::Vform, key(0, 0).wafer(), cells).is_err());
        assert!(matches!(
            WaferMap::new(Metric::Ber, key(0, 0).wafer(), vec![]),
            Err(CliError::Insufficient(_))
        ));
    }

    #[test]
    fn text_is_y_up() {
        let text = render_text(&sample(), false);
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[1].starts_with("y=1"));
        assert!(lines[1].contains('X') && lines[1].contains('-'));
        assert!(lines[2].starts_with("y=0"));
        assert!(lines[2].contains("2.5") && lines[2].contains("3.123"));
        assert!(lines[3].contains("x=0") && lines[3].contains("x=1"));
        let down = render_text(&sample(), true);
        assert!(down.lines().nth(1).unwrap().starts_with("y=0"));
    }

    #[test]
    fn svg_labels_match_text() {
        let m = sample();
        let svg = render_svg(&m, false);
        assert_eq!(svg.matches(r#"class="cell"#).count(), 4);
        assert_eq!(svg.matches("cell defective").count(), 1);
        for c in &m.cells {
            assert!(svg.contains(&format!(">{}</text>", cell_label(&c.value))));
        }
        assert!(svg.contains(&ramp_color(0.0)) && svg.contains(&ramp_color(1.0)));
    }

    #[test]
    fn ramp_endpoints() {
        assert_eq!(ramp_color(0.0), "#2166ac");
        assert_eq!(ramp_color(0.5), "#ffffbf");
        assert_eq!(ramp_color(1.0), "#b2182b");
        assert_eq!(ramp_color(f64::NAN), "#ffffbf");
    }

    #[test]
    fn csv_rows() {
        let csv = render_csv(&sample());
        assert_eq!(csv.lines().count(), 5);
        assert!(csv.contains("L1,W1,1,0,vform_volt,value,3.123456,"));
        assert!(csv.contains("defective,,vform 4.2 V > 4 V"));
    }

    #[test]
    fn metric_names() {
        assert_eq!(Metric::parse("BER").unwrap(), Metric::Ber);
        assert!(Metric::parse("idsat").is_err());
    }
}
