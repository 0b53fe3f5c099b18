use std::fmt::Write as _;
use std::path::Path;

use iltber_core::data::filter_defective;
use iltber_core::numfmt::exact;
use iltber_core::varcomp::{coefficient_of_variation, forming_table, Counts, Level, VarianceComponents};
use serde::Serialize;

use super::{emit, to_json};
use crate::analysis::load;
use crate::error::{CliError, CliResult};
use crate::wafermap::csv_field;
use crate::TableFormat;

pub const NOT_ESTIMABLE: &str = "n/e";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarcompRow {
    pub group: String,
    pub mean: f64,
    pub sd_ctc: Option<f64>,
    pub sd_w2w: Option<f64>,
    pub sd_l2l: Option<f64>,
    pub sd_total: f64,
    pub cov: f64,
    pub counts: Counts,
    pub clipped: Vec<Level>,
}

impl VarcompRow {
    pub fn new(vc: VarianceComponents) -> CliResult<Self> {
        let cov = coefficient_of_variation(&vc)?;
        Ok(Self {
            group: vc.group_label,
            mean: vc.mean,
            sd_ctc: vc.sd_ctc,
            sd_w2w: vc.sd_w2w,
            sd_l2l: vc.sd_l2l,
            sd_total: vc.sd_total,
            cov,
            counts: vc.counts,
            clipped: vc.clipped,
        })
    }
}

pub fn varcomp_json(rows: &[VarcompRow]) -> String {
    to_json(&rows)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| NOT_ESTIMABLE.to_owned(), exact)
}

pub fn varcomp_csv(rows: &[VarcompRow]) -> String {
    let mut s = String::from("group,mean,sd_ctc,sd_w2w,sd_l2l,sd_total,cov,lots,wafers,chips,observations,clipped\n");
    for r in rows {
        let clipped: Vec<&str> = r
            .clipped
            .iter()
            .map(|l| match l {
                Level::Lot => "lot",
                Level::Wafer => "wafer",
                Level::Chip => "chip",
            })
            .collect();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            csv_field(&r.group),
            exact(r.mean),
            opt(r.sd_ctc),
            opt(r.sd_w2w),
            opt(r.sd_l2l),
            exact(r.sd_total),
            exact(r.cov),
            r.counts.lots,
            r.counts.wafers,
            r.counts.chips,
            r.counts.observations,
            clipped.join(";")
        );
    }
    s
}

pub(super) fn run(
    input: &Path,
    param: &str,
    group_by: &str,
    vform_max: Option<f64>,
    format: TableFormat,
    out: Option<&Path>,
) -> CliResult<String> {
    if !param.eq_ignore_ascii_case("vform") {
        return Err(CliError::usage(format!("unsupported parameter `{param}` (only vform)")));
    }
    let by_size = match group_by {
        "device_size" => true,
        "none" => false,
        other => return Err(CliError::usage(format!("unknown grouping `{other}` (device_size or none)"))),
    };
    let loaded = load(input)?;
    let dataset = match vform_max {
        Some(v) => filter_defective(&loaded.dataset, v).0,
        None => loaded.dataset,
    };
    if dataset.forming().is_empty() {
        return Err(CliError::Insufficient("no forming records".into()));
    }
    let rows = forming_table(&dataset, by_size)?
        .into_iter()
        .map(VarcompRow::new)
        .collect::<CliResult<Vec<_>>>()?;
    let text = match format {
        TableFormat::Json => varcomp_json(&rows),
        TableFormat::Csv => varcomp_csv(&rows),
    };
    emit(out, text)
}
