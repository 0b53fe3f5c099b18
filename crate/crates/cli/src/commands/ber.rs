use std::path::Path;

use iltber_core::ber::{ber_curve, ber_histogram, chip_percentiles, BerCurve, BerHistogram, BerPoint, PercentileChips, RankedChip};
use iltber_core::data::{ChipKey, RejectedChip};
use serde::Serialize;

use super::{curves_csv, emit, to_json};
use crate::analysis::{
    check_margin, check_min_cycles, curves, fit_chips, grid, load, reference_points, with_reference, ChipFit, FitRun,
    Skipped,
};
use crate::error::{CliError, CliResult};
use crate::{ScreenArgs, TableFormat};

pub const DEFAULT_GRID: &str = "0.1:10:50";

pub(super) struct BerOptions {
    pub margin: f64,
    pub margins: Option<String>,
    pub percentiles: bool,
    pub bin_width: f64,
}

#[derive(Serialize)]
struct CurvePoint {
    delta_r: f64,
    log10_ber: f64,
}

fn points(curve: &BerCurve) -> Vec<CurvePoint> {
    curve.points.iter().map(|p| CurvePoint { delta_r: p.delta_r, log10_ber: p.log10_ber }).collect()
}

#[derive(Serialize)]
struct ChipBer<'a> {
    chip: &'a ChipKey,
    log10_ber: f64,
    ber: f64,
    ln_r_l_max: f64,
    ln_r_h_min: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    curve: Option<Vec<CurvePoint>>,
}

#[derive(Serialize)]
struct PercentileCurve<'a> {
    label: &'static str,
    #[serde(flatten)]
    ranked: &'a RankedChip,
    curve: Vec<CurvePoint>,
}

/// Everything the BER step produces for one set of fits.
pub struct BerReport {
    pub reference_margin: f64,
    pub margins: Option<Vec<f64>>,
    pub reference: Vec<BerPoint>,
    pub curves: Vec<(ChipKey, BerCurve)>,
    pub histogram: BerHistogram,
    pub percentiles: Option<(PercentileChips, [BerCurve; 3])>,
}

impl BerReport {
    /// `margins` is the per-chip curve grid (if any); `percentile_grid`
    /// turns on percentile-chip selection with curves on that grid.
    pub fn build(
        fits: &[ChipFit],
        reference_margin: f64,
        margins: Option<Vec<f64>>,
        percentile_grid: Option<&[f64]>,
        bin_width: f64,
    ) -> CliResult<Self> {
        check_margin(reference_margin)?;
        if !(bin_width > 0.0 && bin_width.is_finite()) {
            return Err(CliError::usage(format!("bin width {bin_width} must be positive")));
        }
        let reference = reference_points(fits, reference_margin)?;
        let curves = match &margins {
            Some(m) => curves(fits, m)?,
            None => Vec::new(),
        };
        let by_chip: Vec<(ChipKey, f64)> =
            fits.iter().zip(&reference).map(|(f, p)| (f.chip.clone(), p.log10_ber)).collect();
        let histogram = ber_histogram(&by_chip, bin_width)?;
        let percentiles = match percentile_grid {
            Some(grid) => Some(percentile_curves(fits, reference_margin, grid)?),
            None => None,
        };
        Ok(Self { reference_margin, margins, reference, curves, histogram, percentiles })
    }
}

/// 25th/50th/75th percentile chips at `reference_margin` and their curves.
pub fn percentile_curves(
    fits: &[ChipFit],
    reference_margin: f64,
    grid: &[f64],
) -> CliResult<(PercentileChips, [BerCurve; 3])> {
    let ranked_curves = curves(fits, &with_reference(&[], reference_margin))?;
    let pc = chip_percentiles(&ranked_curves, reference_margin)?;
    let curve_for = |r: &RankedChip| -> CliResult<BerCurve> {
        let f = fits.iter().find(|f| f.chip == r.chip).expect("ranked chip comes from fits");
        Ok(ber_curve(&f.hrs.fit, &f.lrs.fit, grid)?.with_chip(f.chip.clone()))
    };
    let curves = [curve_for(&pc.p25)?, curve_for(&pc.median)?, curve_for(&pc.p75)?];
    Ok((pc, curves))
}

#[derive(Serialize)]
struct BerJson<'a> {
    reference_margin: f64,
    margins: Option<&'a [f64]>,
    chips: Vec<ChipBer<'a>>,
    histogram: &'a BerHistogram,
    #[serde(skip_serializing_if = "Option::is_none")]
    percentiles: Option<Vec<PercentileCurve<'a>>>,
    skipped: &'a [Skipped],
    rejected: &'a [RejectedChip],
}

pub fn ber_json(run: &FitRun, report: &BerReport) -> String {
    let chips = run
        .fits
        .iter()
        .zip(&report.reference)
        .enumerate()
        .map(|(i, (f, p))| ChipBer {
            chip: &f.chip,
            log10_ber: p.log10_ber,
            ber: p.ber,
            ln_r_l_max: p.ln_r_l_max,
            ln_r_h_min: p.ln_r_h_min,
            curve: report.curves.get(i).map(|(_, c)| points(c)),
        })
        .collect();
    let percentiles = report.percentiles.as_ref().map(|(pc, curves)| {
        [("p25", &pc.p25), ("median", &pc.median), ("p75", &pc.p75)]
            .into_iter()
            .zip(curves)
            .map(|((label, ranked), curve)| PercentileCurve { label, ranked, curve: points(curve) })
            .collect()
    });
    to_json(&BerJson {
        reference_margin: report.reference_margin,
        margins: report.margins.as_deref(),
        chips,
        histogram: &report.histogram,
        percentiles,
        skipped: &run.skipped,
        rejected: &run.screening.rejected,
    })
}

pub(super) fn run(
    input: &Path,
    screen: &ScreenArgs,
    opts: BerOptions,
    format: TableFormat,
    out: Option<&Path>,
) -> CliResult<String> {
    check_min_cycles(screen.min_cycles)?;
    check_margin(opts.margin)?;
    let margins = opts.margins.as_deref().map(grid).transpose()?;
    let percentile_grid = if opts.percentiles {
        Some(margins.clone().map_or_else(|| grid(DEFAULT_GRID), Ok)?)
    } else {
        None
    };
    let loaded = load(input)?;
    let run = fit_chips(&loaded.dataset, screen.vform_max, screen.min_cycles);
    run.require_fits()?;
    let report = BerReport::build(&run.fits, opts.margin, margins, percentile_grid.as_deref(), opts.bin_width)?;
    let text = match format {
        TableFormat::Json => ber_json(&run, &report),
        TableFormat::Csv => {
            let reference_curves;
            let curves = if report.curves.is_empty() {
                reference_curves = curves(&run.fits, &[opts.margin])?;
                &reference_curves
            } else {
                &report.curves
            };
            curves_csv(curves, report.percentiles.as_ref().map(|(pc, c)| (pc, c)))
        }
    };
    emit(out, text)
}
