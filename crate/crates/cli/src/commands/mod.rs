mod ber;
mod fit;
mod oracle;
mod report;
mod synth;
mod varcomp;
mod wafermap;

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use iltber_core::ber::{BerCurve, BerHistogram, PercentileChips};
use iltber_core::data::{ChipKey, TargetState};
use iltber_core::numfmt::exact;
use serde::Serialize;

use crate::analysis::{ChipFit, FitRun, StateFit};
use crate::error::{CliError, CliResult};
use crate::wafermap::csv_field;
use crate::Command;

pub use ber::{ber_json, percentile_curves, BerReport};
pub use fit::fits_json;
pub use report::{run_report, ReportOptions, BUNDLE_FILES};
pub use varcomp::{varcomp_csv, varcomp_json, VarcompRow};
pub use wafermap::{ber_map, vform_map};

pub fn dispatch(cmd: Command) -> CliResult<String> {
    match cmd {
        Command::Fit { input, screen, format, out } => fit::run(&input, &screen, format, out.as_deref()),
        Command::Ber { input, screen, margin, margins, percentiles, bin_width, format, out } => ber::run(
            &input,
            &screen,
            ber::BerOptions { margin, margins, percentiles, bin_width },
            format,
            out.as_deref(),
        ),
        Command::Varcomp { input, param, group_by, vform_max, format, out } => {
            varcomp::run(&input, &param, &group_by, vform_max, format, out.as_deref())
        }
        Command::Wafermap { input, metric, margin, format, wafer, device_size, y_down, screen, out } => {
            wafermap::run(
                &input,
                &metric,
                margin,
                format,
                wafer.as_deref(),
                device_size,
                y_down,
                &screen,
                out.as_deref(),
            )
        }
        Command::Report { input, out, screen, margin, margins, bin_width, wafer, timestamp, force } => {
            let opts = ReportOptions {
                vform_max: screen.vform_max,
                min_cycles: screen.min_cycles,
                margin,
                margins,
                bin_width,
                wafer,
                timestamp,
                force,
            };
            run_report(&input, &out, &opts).map(|_| String::new())
        }
        Command::Synth { config, out, seed, timestamp } => synth::run(&config, &out, seed, timestamp.as_deref()),
        Command::Oracle(args) => oracle::run(&args),
    }
}

/// Writes to `out` and returns nothing to print, or returns `text` for stdout.
pub(crate) fn emit(out: Option<&Path>, text: String) -> CliResult<String> {
    match out {
        Some(path) => {
            fs::write(path, text).map_err(|e| CliError::write(path, e))?;
            Ok(String::new())
        }
        None => Ok(text),
    }
}

pub(crate) fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

fn chip_cells(chip: &ChipKey) -> String {
    format!("{},{},{},{}", csv_field(&chip.lot_id), csv_field(&chip.wafer_id), chip.chip_x, chip.chip_y)
}

fn states(f: &ChipFit) -> [(TargetState, &StateFit); 2] {
    [(TargetState::Hrs, &f.hrs), (TargetState::Lrs, &f.lrs)]
}

pub fn fits_csv(run: &FitRun) -> String {
    let mut s = String::from(
        "lot_id,wafer_id,chip_x,chip_y,state,n,mu,sigma,sigma_ci_lower,sigma_ci_upper,qq_slope,qq_intercept,qq_r_squared\n",
    );
    for f in &run.fits {
        for (state, sf) in states(f) {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                chip_cells(&f.chip),
                state.as_str(),
                sf.fit.n,
                exact(sf.fit.mu),
                exact(sf.fit.sigma),
                exact(sf.sigma_ci.lower),
                exact(sf.sigma_ci.upper),
                exact(sf.qq.slope),
                exact(sf.qq.intercept),
                exact(sf.qq.r_squared)
            );
        }
    }
    s
}

pub fn qq_csv(run: &FitRun) -> String {
    let mut s = String::from("lot_id,wafer_id,chip_x,chip_y,state,rank,normal_quantile,ln_resistance\n");
    for f in &run.fits {
        for (state, sf) in states(f) {
            for (i, (q, v)) in sf.qq.points.iter().enumerate() {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{}",
                    chip_cells(&f.chip),
                    state.as_str(),
                    i + 1,
                    exact(*q),
                    exact(*v)
                );
            }
        }
    }
    s
}

/// Long-format curves; `label` is `chip` for per-chip rows, or the
/// percentile name.
pub fn curves_csv(curves: &[(ChipKey, BerCurve)], percentiles: Option<(&PercentileChips, &[BerCurve; 3])>) -> String {
    let mut s = String::from("curve,lot_id,wafer_id,chip_x,chip_y,delta_r,log10_ber,ber\n");
    let mut rows = |label: &str, chip: &ChipKey, curve: &BerCurve| {
        for p in &curve.points {
            let _ = writeln!(
                s,
                "{label},{},{},{},{}",
                chip_cells(chip),
                exact(p.delta_r),
                exact(p.log10_ber),
                exact(p.ber)
            );
        }
    };
    for (chip, curve) in curves {
        rows("chip", chip, curve);
    }
    if let Some((pc, pcurves)) = percentiles {
        for ((label, ranked), curve) in [("p25", &pc.p25), ("median", &pc.median), ("p75", &pc.p75)]
            .into_iter()
            .zip(pcurves)
        {
            rows(label, &ranked.chip, curve);
        }
    }
    s
}

pub fn histogram_csv(h: &BerHistogram) -> String {
    let mut s = String::from("log10_ber_lower,log10_ber_upper,count,cumulative_percent\n");
    for b in &h.bins {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            exact(b.lower),
            exact(b.upper),
            b.count,
            exact(b.cumulative_percent)
        );
    }
    s
}
