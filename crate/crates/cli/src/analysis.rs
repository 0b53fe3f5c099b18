//! Input loading and the per-chip fit/BER steps shared by the commands.

use std::fs;
use std::path::Path;

use iltber_core::ber::{ber_at_margin, ber_curve, BerCurve, BerPoint};
use iltber_core::data::{filter_defective, parse_cycles, ChipKey, Dataset, InputFormat, Screening, WaferKey};
use iltber_core::stats::{mle_fit, qq_diagnostics, sigma_ci, ConfidenceInterval, LogNormalFit, QqDiagnostics};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{CliError, CliResult};

pub const DEFAULT_MIN_CYCLES: usize = 10;
pub const CONFIDENCE_LEVEL: f64 = 0.95;

pub struct Loaded {
    pub dataset: Dataset,
    pub bytes: Vec<u8>,
    pub unknown_columns: Vec<String>,
}

pub fn load(path: &Path) -> CliResult<Loaded> {
    let bytes = fs::read(path).map_err(|source| CliError::Read { path: path.into(), source })?;
    let parsed = parse_cycles(bytes.as_slice(), InputFormat::from_path(path))
        .map_err(|source| CliError::Input { path: path.into(), source })?;
    if !parsed.unknown_columns.is_empty() {
        eprintln!(
            "warning: {} unknown column(s) ignored: {}",
            parsed.unknown_columns.len(),
            parsed.unknown_columns.join(", ")
        );
    }
    Ok(Loaded { dataset: parsed.dataset, bytes, unknown_columns: parsed.unknown_columns })
}

#[derive(Debug, Clone, Serialize)]
pub struct StateFit {
    #[serde(flatten)]
    pub fit: LogNormalFit,
    pub sigma_ci: ConfidenceInterval,
    #[serde(skip)]
    pub qq: QqDiagnostics,
}

#[derive(Debug, Clone)]
pub struct ChipFit {
    pub chip: ChipKey,
    pub hrs: StateFit,
    pub lrs: StateFit,
}

#[derive(Debug, Clone, Serialize)]
pub struct Skipped {
    pub chip: ChipKey,
    pub reason: String,
}

pub struct FitRun {
    pub screening: Screening,
    pub fits: Vec<ChipFit>,
    pub skipped: Vec<Skipped>,
}

pub fn check_min_cycles(min_cycles: usize) -> CliResult<()> {
    if min_cycles < 3 {
        return Err(CliError::usage("--min-cycles must be at least 3"));
    }
    Ok(())
}

fn fit_state(label: &str, values: &[f64], min_cycles: usize) -> Result<StateFit, String> {
    if values.len() < min_cycles {
        return Err(format!("{label}: {} cycles, need {min_cycles}", values.len()));
    }
    let fit = mle_fit(values).map_err(|e| format!("{label}: {e}"))?;
    let sigma_ci = sigma_ci(&fit, CONFIDENCE_LEVEL).map_err(|e| format!("{label}: {e}"))?;
    let qq = qq_diagnostics(values).map_err(|e| format!("{label}: {e}"))?;
    Ok(StateFit { fit, sigma_ci, qq })
}

/// Screens defective chips, then fits both states of every remaining chip.
/// Chips where either state cannot be fitted are listed in `skipped`.
pub fn fit_chips(d: &Dataset, vform_max: f64, min_cycles: usize) -> FitRun {
    let (kept, screening) = filter_defective(d, vform_max);
    let results: Vec<Result<ChipFit, Skipped>> = kept
        .cycle_series()
        .into_par_iter()
        .map(|s| {
            let hrs = fit_state("HRS", &s.r_h, min_cycles);
            let lrs = fit_state("LRS", &s.r_l, min_cycles);
            match (hrs, lrs) {
                (Ok(hrs), Ok(lrs)) => Ok(ChipFit { chip: s.chip, hrs, lrs }),
                (h, l) => {
                    let reason = [h.err(), l.err()].into_iter().flatten().collect::<Vec<_>>().join("; ");
                    Err(Skipped { chip: s.chip, reason })
                }
            }
        })
        .collect();
    let mut fits = Vec::new();
    let mut skipped = Vec::new();
    for r in results {
        match r {
            Ok(f) => fits.push(f),
            Err(s) => skipped.push(s),
        }
    }
    FitRun { screening, fits, skipped }
}

impl FitRun {
    pub fn require_fits(&self) -> CliResult<()> {
        if self.fits.is_empty() {
            return Err(CliError::Insufficient(format!(
                "no fittable chips ({} rejected, {} skipped)",
                self.screening.rejected.len(),
                self.skipped.len()
            )));
        }
        Ok(())
    }
}

pub fn check_margin(margin: f64) -> CliResult<()> {
    if !(margin > -1.0 && margin.is_finite()) {
        return Err(CliError::usage(format!("margin {margin} must be finite and > -1")));
    }
    Ok(())
}

/// `min:max:points` for a logarithmic margin grid.
pub fn parse_grid(spec: &str) -> CliResult<(f64, f64, usize)> {
    let bad = || CliError::usage(format!("margin grid `{spec}` is not min:max:points"));
    let parts: Vec<&str> = spec.split(':').collect();
    let [min, max, points] = parts[..] else {
        return Err(bad());
    };
    Ok((
        min.trim().parse().map_err(|_| bad())?,
        max.trim().parse().map_err(|_| bad())?,
        points.trim().parse().map_err(|_| bad())?,
    ))
}

pub fn grid(spec: &str) -> CliResult<Vec<f64>> {
    let (min, max, points) = parse_grid(spec)?;
    iltber_core::ber::log_margin_grid(min, max, points).map_err(|e| CliError::usage(e.to_string()))
}

pub fn reference_points(fits: &[ChipFit], margin: f64) -> CliResult<Vec<BerPoint>> {
    fits.par_iter()
        .map(|f| ber_at_margin(&f.hrs.fit, &f.lrs.fit, margin).map_err(CliError::from))
        .collect()
}

pub fn curves(fits: &[ChipFit], margins: &[f64]) -> CliResult<Vec<(ChipKey, BerCurve)>> {
    fits.par_iter()
        .map(|f| {
            let curve = ber_curve(&f.hrs.fit, &f.lrs.fit, margins)?.with_chip(f.chip.clone());
            Ok((f.chip.clone(), curve))
        })
        .collect()
}

/// `margins` with `reference` inserted in order, if missing.
pub fn with_reference(margins: &[f64], reference: f64) -> Vec<f64> {
    let mut all = margins.to_vec();
    if !all.iter().any(|m| (m - reference).abs() <= 1e-12 * reference.abs().max(1.0)) {
        let at = all.partition_point(|m| *m < reference);
        all.insert(at, reference);
    }
    all
}

/// `LOT/WAFER`, or the first wafer in sort order.
pub fn select_wafer(d: &Dataset, wanted: Option<&str>) -> CliResult<WaferKey> {
    let wafers = d.wafers();
    match wanted {
        None => wafers
            .into_iter()
            .next()
            .ok_or_else(|| CliError::Insufficient("dataset has no wafers".into())),
        Some(s) => {
            let (lot, wafer) = s
                .split_once('/')
                .ok_or_else(|| CliError::usage(format!("wafer `{s}` is not LOT/WAFER")))?;
            wafers
                .into_iter()
                .find(|w| w.lot_id == lot && w.wafer_id == wafer)
                .ok_or_else(|| CliError::Insufficient(format!("wafer {s} not in input")))
        }
    }
}
