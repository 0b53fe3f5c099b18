use std::fs;
use std::path::{Path, PathBuf};

use serde_json::json;

use super::{ber_json, curves_csv, fits_csv, fits_json, histogram_csv, qq_csv, BerReport};
use super::{ber_map, vform_map};
use crate::analysis::{check_margin, check_min_cycles, fit_chips, grid, load, select_wafer};
use crate::error::{CliError, CliResult};
use crate::manifest::{display_path, timestamp, FileDigest, RunManifest};
use crate::wafermap::{render_svg, render_text};

#[derive(Debug, Clone)]
pub struct ReportOptions {
    pub vform_max: f64,
    pub min_cycles: usize,
    pub margin: f64,
    pub margins: String,
    pub bin_width: f64,
    pub wafer: Option<String>,
    pub timestamp: Option<String>,
    pub force: bool,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            vform_max: iltber_core::data::DEFAULT_VFORM_MAX_VOLT,
            min_cycles: crate::analysis::DEFAULT_MIN_CYCLES,
            margin: iltber_core::ber::DEFAULT_REFERENCE_MARGIN,
            margins: super::ber::DEFAULT_GRID.to_owned(),
            bin_width: 1.0,
            wafer: None,
            timestamp: None,
            force: false,
        }
    }
}

/// Bundle files in write order; the manifest comes last.
pub const BUNDLE_FILES: [&str; 11] = [
    "fits.json",
    "fits.csv",
    "qq.csv",
    "ber.json",
    "ber_curves.csv",
    "histogram.csv",
    "wafermap_vform.svg",
    "wafermap_vform.txt",
    "wafermap_ber.svg",
    "wafermap_ber.txt",
    "manifest.json",
];

fn staging_dir(out: &Path) -> CliResult<PathBuf> {
    let name = out
        .file_name()
        .ok_or_else(|| CliError::usage(format!("bundle path {} has no directory name", out.display())))?;
    let mut staged = name.to_os_string();
    staged.push(".partial");
    Ok(out.with_file_name(format!(".{}", staged.to_string_lossy())))
}

fn is_empty_dir(p: &Path) -> bool {
    fs::read_dir(p).map(|mut it| it.next().is_none()).unwrap_or(false)
}

/// Screen → fit → Q-Q → BER → histogram → percentile curves → wafer maps,
/// written to `out` only if every step succeeds.
pub fn run_report(input: &Path, out: &Path, opts: &ReportOptions) -> CliResult<RunManifest> {
    check_min_cycles(opts.min_cycles)?;
    check_margin(opts.margin)?;
    let margins = grid(&opts.margins)?;
    let stamp = timestamp(opts.timestamp.as_deref())?;
    if out.exists() && !opts.force && !is_empty_dir(out) {
        return Err(CliError::usage(format!("{} exists; pass --force to replace it", out.display())));
    }
    let staging = staging_dir(out)?;
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(|e| CliError::write(&staging, e))?;
    }
    fs::create_dir_all(&staging).map_err(|e| CliError::write(&staging, e))?;

    match build(input, &staging, opts, &margins, stamp) {
        Ok(manifest) => {
            if out.exists() {
                fs::remove_dir_all(out).map_err(|e| CliError::write(out, e))?;
            }
            fs::rename(&staging, out).map_err(|e| CliError::write(out, e))?;
            Ok(manifest)
        }
        Err(e) => {
            let _ = fs::remove_dir_all(&staging);
            Err(e)
        }
    }
}

fn build(input: &Path, dir: &Path, opts: &ReportOptions, margins: &[f64], stamp: String) -> CliResult<RunManifest> {
    let loaded = load(input)?;
    let d = &loaded.dataset;
    let run = fit_chips(d, opts.vform_max, opts.min_cycles);
    run.require_fits()?;
    let report = BerReport::build(&run.fits, opts.margin, Some(margins.to_vec()), Some(margins), opts.bin_width)?;
    let wafer = select_wafer(d, opts.wafer.as_deref())?;
    let vmap = vform_map(d, &wafer, None, opts.vform_max)?;
    let bmap = ber_map(d, &wafer, &run, opts.margin)?;

    let files: [(&str, String); 10] = [
        ("fits.json", fits_json(&run, opts.min_cycles)),
        ("fits.csv", fits_csv(&run)),
        ("qq.csv", qq_csv(&run)),
        ("ber.json", ber_json(&run, &report)),
        ("ber_curves.csv", curves_csv(&report.curves, report.percentiles.as_ref().map(|(p, c)| (p, c)))),
        ("histogram.csv", histogram_csv(&report.histogram)),
        ("wafermap_vform.svg", render_svg(&vmap, false)),
        ("wafermap_vform.txt", render_text(&vmap, false)),
        ("wafermap_ber.svg", render_svg(&bmap, false)),
        ("wafermap_ber.txt", render_text(&bmap, false)),
    ];

    let mut manifest = RunManifest::new(
        "report",
        json!({
            "vform_max_volt": opts.vform_max,
            "min_cycles": opts.min_cycles,
            "confidence_level": crate::analysis::CONFIDENCE_LEVEL,
            "reference_margin": opts.margin,
            "margins": opts.margins,
            "bin_width": opts.bin_width,
            "wafer": format!("{}/{}", wafer.lot_id, wafer.wafer_id),
            "chips_analyzed": run.fits.len(),
            "chips_rejected": run.screening.rejected.len(),
            "chips_skipped": run.skipped.len(),
        }),
        stamp,
    );
    manifest.inputs.push(FileDigest::of(display_path(input), &loaded.bytes));
    for (name, text) in &files {
        let path = dir.join(name);
        fs::write(&path, text).map_err(|e| CliError::write(&path, e))?;
        manifest.outputs.push(FileDigest::of(*name, text.as_bytes()));
    }
    let path = dir.join("manifest.json");
    fs::write(&path, manifest.to_json()).map_err(|e| CliError::write(&path, e))?;
    Ok(manifest)
}
