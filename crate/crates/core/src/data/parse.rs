use std::collections::{BTreeSet, HashMap};
use std::io::{BufRead, BufReader, Read};
use std::str::FromStr;

use super::{CycleRecord, Dataset, FormingRecord, TargetState, DEFAULT_READ_VOLTAGE_V};
use crate::error::{Error, Result};

use super::write::CSV_COLUMNS;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputFormat {
    Csv,
    Jsonl,
}

impl InputFormat {
    /// Guess from a file extension; anything but `.jsonl`/`.ndjson` is CSV.
    pub fn from_path(path: &std::path::Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("jsonl") || e.eq_ignore_ascii_case("ndjson") => {
                InputFormat::Jsonl
            }
            _ => InputFormat::Csv,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parsed {
    pub dataset: Dataset,
    /// Column (or JSON key) names outside the canonical schema; ignored.
    pub unknown_columns: Vec<String>,
}

const IDENTITY_COLUMNS: [&str; 7] = [
    "lot_id",
    "wafer_id",
    "chip_x",
    "chip_y",
    "device_id",
    "device_size_nm",
    "record_type",
];

enum Row {
    Form(FormingRecord),
    Cycle(CycleRecord),
}

struct Fields<'a> {
    line: u64,
    get: &'a dyn Fn(&str) -> Option<&'a str>,
}

impl Fields<'_> {
    fn err(&self, column: &str, message: impl Into<String>) -> Error {
        Error::Parse {
            line: self.line,
            column: column.into(),
            message: message.into(),
        }
    }

    fn opt_str(&self, col: &str) -> Option<&str> {
        (self.get)(col).map(str::trim).filter(|s| !s.is_empty())
    }

    fn req_str(&self, col: &str) -> Result<String> {
        self.opt_str(col)
            .map(str::to_owned)
            .ok_or_else(|| self.err(col, "missing value"))
    }

    fn opt_num<T: FromStr>(&self, col: &str) -> Result<Option<T>> {
        match self.opt_str(col) {
            None => Ok(None),
            Some(s) => s
                .parse::<T>()
                .map(Some)
                .map_err(|_| self.err(col, format!("cannot parse `{s}` as a number"))),
        }
    }

    fn req_num<T: FromStr>(&self, col: &str) -> Result<T> {
        self.opt_num(col)?.ok_or_else(|| self.err(col, "missing value"))
    }

    fn positive(&self, col: &str, v: f64) -> Result<f64> {
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(self.err(col, format!("{v} is not positive and finite")))
        }
    }

    fn finite(&self, col: &str, v: f64) -> Result<f64> {
        if v.is_finite() {
            Ok(v)
        } else {
            Err(self.err(col, "not finite"))
        }
    }

    fn row(&self) -> Result<Row> {
        let lot_id = self.req_str("lot_id")?;
        let wafer_id = self.req_str("wafer_id")?;
        let chip_x = self.req_num("chip_x")?;
        let chip_y = self.req_num("chip_y")?;
        let device_id = self.req_str("device_id")?;
        let device_size_nm: u32 = self.req_num("device_size_nm")?;
        if device_size_nm == 0 {
            return Err(self.err("device_size_nm", "must be positive"));
        }
        let kind = self.req_str("record_type")?;
        match kind.to_ascii_uppercase().as_str() {
            "FORM" => {
                let vform_volt = self.positive("vform_volt", self.req_num("vform_volt")?)?;
                Ok(Row::Form(FormingRecord {
                    lot_id,
                    wafer_id,
                    chip_x,
                    chip_y,
                    device_id,
                    device_size_nm,
                    vform_volt,
                }))
            }
            "CYCLE" => {
                let target_state = match self.req_str("target_state")?.to_ascii_uppercase().as_str() {
                    "HRS" => TargetState::Hrs,
                    "LRS" => TargetState::Lrs,
                    other => return Err(self.err("target_state", format!("`{other}` is not HRS or LRS"))),
                };
                let resistance_ohm = self.positive("resistance_ohm", self.req_num("resistance_ohm")?)?;
                let read_voltage_v = self
                    .opt_num("read_voltage_v")?
                    .map(|v| self.finite("read_voltage_v", v))
                    .transpose()?
                    .unwrap_or(DEFAULT_READ_VOLTAGE_V);
                let set_voltage_v = self
                    .opt_num("set_voltage_v")?
                    .map(|v| self.finite("set_voltage_v", v))
                    .transpose()?;
                let reset_voltage_v = self
                    .opt_num("reset_voltage_v")?
                    .map(|v| self.finite("reset_voltage_v", v))
                    .transpose()?;
                let compliance_current_ua = self
                    .opt_num("compliance_current_ua")?
                    .map(|v| self.positive("compliance_current_ua", v))
                    .transpose()?;
                let pulse_width_us = self
                    .opt_num("pulse_width_us")?
                    .map(|v| self.positive("pulse_width_us", v))
                    .transpose()?;
                Ok(Row::Cycle(CycleRecord {
                    lot_id,
                    wafer_id,
                    chip_x,
                    chip_y,
                    device_id,
                    device_size_nm,
                    cycle_index: self.req_num("cycle_index")?,
                    target_state,
                    resistance_ohm,
                    read_voltage_v,
                    set_voltage_v,
                    reset_voltage_v,
                    compliance_current_ua,
                    pulse_width_us,
                }))
            }
            other => Err(self.err("record_type", format!("`{other}` is not FORM or CYCLE"))),
        }
    }
}

#[derive(Default)]
struct Collector {
    forming: Vec<FormingRecord>,
    forming_lines: Vec<u64>,
    cycles: Vec<CycleRecord>,
    cycle_lines: Vec<u64>,
    unknown: BTreeSet<String>,
}

impl Collector {
    fn push(&mut self, line: u64, row: Row) {
        match row {
            Row::Form(r) => {
                self.forming.push(r);
                self.forming_lines.push(line);
            }
            Row::Cycle(r) => {
                self.cycles.push(r);
                self.cycle_lines.push(line);
            }
        }
    }

    fn finish(self) -> Result<Parsed> {
        if self.forming.is_empty() && self.cycles.is_empty() {
            return Err(Error::NoRecords);
        }
        let dataset = Dataset::with_lines(self.forming, &self.forming_lines, self.cycles, &self.cycle_lines)?;
        Ok(Parsed {
            dataset,
            unknown_columns: self.unknown.into_iter().collect(),
        })
    }
}

fn is_known(col: &str) -> bool {
    CSV_COLUMNS.contains(&col)
}

/// Parses a CSV or JSONL stream into a [`Dataset`]. Line numbers in errors
/// are 1-based and count the CSV header as line 1.
pub fn parse_cycles<R: Read>(input: R, format: InputFormat) -> Result<Parsed> {
    match format {
        InputFormat::Csv => parse_csv(input),
        InputFormat::Jsonl => parse_jsonl(input),
    }
}

fn parse_csv<R: Read>(input: R) -> Result<Parsed> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers = match rdr.headers() {
        Ok(h) => h.clone(),
        Err(e) => return Err(csv_error(e, 1)),
    };
    if headers.is_empty() || headers.iter().all(str::is_empty) {
        return Err(Error::NoRecords);
    }
    let mut collector = Collector::default();
    let mut columns: HashMap<&str, usize> = HashMap::new();
    for (i, h) in headers.iter().enumerate() {
        if is_known(h) {
            columns.insert(h, i);
        } else {
            collector.unknown.insert(h.to_owned());
        }
    }
    for col in IDENTITY_COLUMNS {
        if !columns.contains_key(col) {
            return Err(Error::Parse {
                line: 1,
                column: col.into(),
                message: "required column missing from header".into(),
            });
        }
    }

    let mut record = csv::StringRecord::new();
    loop {
        match rdr.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => return Err(csv_error(e, 0)),
        }
        let line = record.position().map_or(0, |p| p.line());
        let rec = &record;
        let get = |col: &str| columns.get(col).and_then(|&i| rec.get(i));
        let fields = Fields { line, get: &get };
        collector.push(line, fields.row()?);
    }
    collector.finish()
}

fn csv_error(e: csv::Error, fallback_line: u64) -> Error {
    let line = e.position().map_or(fallback_line, |p| p.line());
    let message = match e.kind() {
        csv::ErrorKind::Utf8 { .. } => "invalid UTF-8".to_owned(),
        csv::ErrorKind::UnequalLengths { expected_len, len, .. } => {
            format!("expected {expected_len} fields, found {len}")
        }
        _ => e.to_string(),
    };
    Error::Parse {
        line,
        column: String::new(),
        message,
    }
}

fn parse_jsonl<R: Read>(input: R) -> Result<Parsed> {
    let reader = BufReader::new(input);
    let mut collector = Collector::default();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i as u64 + 1;
        let text = line.map_err(|e| Error::Parse {
            line: line_no,
            column: String::new(),
            message: e.to_string(),
        })?;
        if text.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Parse {
            line: line_no,
            column: String::new(),
            message: format!("invalid JSON: {e}"),
        })?;
        let obj = value.as_object().ok_or_else(|| Error::Parse {
            line: line_no,
            column: String::new(),
            message: "expected a JSON object".into(),
        })?;
        let mut flat: HashMap<&str, String> = HashMap::with_capacity(obj.len());
        for (k, v) in obj {
            if !is_known(k) {
                collector.unknown.insert(k.clone());
                continue;
            }
            let s = match v {
                serde_json::Value::Null => continue,
                serde_json::Value::String(s) => s.clone(),
                serde_json::Value::Number(n) => n.to_string(),
                other => {
                    return Err(Error::Parse {
                        line: line_no,
                        column: k.clone(),
                        message: format!("unsupported JSON value {other}"),
                    })
                }
            };
            flat.insert(k.as_str(), s);
        }
        let get = |col: &str| flat.get(col).map(String::as_str);
        let fields = Fields { line: line_no, get: &get };
        collector.push(line_no, fields.row()?);
    }
    collector.finish()
}
