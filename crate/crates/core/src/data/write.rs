use serde::Serialize;

use super::{Dataset, TargetState};
use crate::numfmt;

/// Canonical column set, in output order.
pub const CSV_COLUMNS: [&str; 16] = [
    "lot_id",
    "wafer_id",
    "chip_x",
    "chip_y",
    "device_id",
    "device_size_nm",
    "record_type",
    "vform_volt",
    "cycle_index",
    "target_state",
    "resistance_ohm",
    "read_voltage_v",
    "set_voltage_v",
    "reset_voltage_v",
    "compliance_current_ua",
    "pulse_width_us",
];

/// One line of the wire schema; field order matches [`CSV_COLUMNS`].
#[derive(Serialize)]
struct WireRecord<'a> {
    lot_id: &'a str,
    wafer_id: &'a str,
    chip_x: i32,
    chip_y: i32,
    device_id: &'a str,
    device_size_nm: u32,
    record_type: &'static str,
    vform_volt: Option<f64>,
    cycle_index: Option<u64>,
    target_state: Option<TargetState>,
    resistance_ohm: Option<f64>,
    read_voltage_v: Option<f64>,
    set_voltage_v: Option<f64>,
    reset_voltage_v: Option<f64>,
    compliance_current_ua: Option<f64>,
    pulse_width_us: Option<f64>,
}

fn wire_records(d: &Dataset) -> impl Iterator<Item = WireRecord<'_>> {
    let forming = d.forming().iter().map(|r| WireRecord {
        lot_id: &r.lot_id,
        wafer_id: &r.wafer_id,
        chip_x: r.chip_x,
        chip_y: r.chip_y,
        device_id: &r.device_id,
        device_size_nm: r.device_size_nm,
        record_type: "FORM",
        vform_volt: Some(r.vform_volt),
        cycle_index: None,
        target_state: None,
        resistance_ohm: None,
        read_voltage_v: None,
        set_voltage_v: None,
        reset_voltage_v: None,
        compliance_current_ua: None,
        pulse_width_us: None,
    });
    let cycles = d.cycles().iter().map(|r| WireRecord {
        lot_id: &r.lot_id,
        wafer_id: &r.wafer_id,
        chip_x: r.chip_x,
        chip_y: r.chip_y,
        device_id: &r.device_id,
        device_size_nm: r.device_size_nm,
        record_type: "CYCLE",
        vform_volt: None,
        cycle_index: Some(r.cycle_index),
        target_state: Some(r.target_state),
        resistance_ohm: Some(r.resistance_ohm),
        read_voltage_v: Some(r.read_voltage_v),
        set_voltage_v: r.set_voltage_v,
        reset_voltage_v: r.reset_voltage_v,
        compliance_current_ua: r.compliance_current_ua,
        pulse_width_us: r.pulse_width_us,
    });
    forming.chain(cycles)
}

fn opt(v: Option<f64>) -> String {
    v.map(numfmt::exact).unwrap_or_default()
}

/// Serializes forming records first, then cycle records, each in stored order.
pub fn write_csv(d: &Dataset) -> String {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    w.write_record(CSV_COLUMNS).expect("in-memory write");
    for r in wire_records(d) {
        w.write_record([
            r.lot_id.to_owned(),
            r.wafer_id.to_owned(),
            r.chip_x.to_string(),
            r.chip_y.to_string(),
            r.device_id.to_owned(),
            r.device_size_nm.to_string(),
            r.record_type.to_owned(),
            opt(r.vform_volt),
            r.cycle_index.map(|c| c.to_string()).unwrap_or_default(),
            r.target_state.map(|s| s.as_str().to_owned()).unwrap_or_default(),
            opt(r.resistance_ohm),
            opt(r.read_voltage_v),
            opt(r.set_voltage_v),
            opt(r.reset_voltage_v),
            opt(r.compliance_current_ua),
            opt(r.pulse_width_us),
        ])
        .expect("in-memory write");
    }
    let bytes = w.into_inner().expect("in-memory flush");
    String::from_utf8(bytes).expect("inputs are UTF-8")
}

/// One JSON object per line, every canonical key present (null when empty).
pub fn write_jsonl(d: &Dataset) -> String {
    let mut out = String::new();
    for r in wire_records(d) {
        out.push_str(&serde_json::to_string(&r).expect("plain data serializes"));
        out.push('\n');
    }
    out
}
