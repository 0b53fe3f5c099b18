//! Bit-error rate as a function of the design margin
//! `delta_r = (R_H,min - R_L,max) / R_L,max` for log-normal HRS/LRS states.
//!
//! The read thresholds are placed where both failure probabilities are
//! equal, `P(R_H <= R_H,min) = P(R_L >= R_L,max)`. With log-normal states
//! that gives a closed form for `ln R_L,max`, and the BER is a normal tail.
//! All probabilities are carried in log space so margins whose BER is far
//! below the smallest double stay finite in `log10_ber`.

use std::f64::consts::LN_10;

use serde::{Deserialize, Serialize};

use crate::data::ChipKey;
use crate::error::{Error, Result};
use crate::stats::special::{ln_norm_cdf, ln_norm_sf};
use crate::stats::{qnorm, LogNormalFit};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BerPoint {
    pub delta_r: f64,
    pub ln_r_l_max: f64,
    pub ln_r_h_min: f64,
    pub log10_ber: f64,
    /// `10^log10_ber`, or 0 once that underflows.
    pub ber: f64,
}

impl BerPoint {
    pub fn ln_ber(&self) -> f64 {
        self.log10_ber * LN_10
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BerCurve {
    pub chip: Option<ChipKey>,
    pub fit_h: LogNormalFit,
    pub fit_l: LogNormalFit,
    pub points: Vec<BerPoint>,
}

impl BerCurve {
    pub fn with_chip(mut self, chip: ChipKey) -> Self {
        self.chip = Some(chip);
        self
    }

    /// The point whose margin equals `delta_r` (to 1e-12 relative).
    pub fn point_at(&self, delta_r: f64) -> Option<&BerPoint> {
        let tol = 1e-12 * delta_r.abs().max(1.0);
        self.points.iter().find(|p| (p.delta_r - delta_r).abs() <= tol)
    }
}

fn check_inputs(fit_h: &LogNormalFit, fit_l: &LogNormalFit, delta_r: f64) -> Result<()> {
    fit_h.require_nondegenerate()?;
    fit_l.require_nondegenerate()?;
    if !(delta_r > -1.0 && delta_r.is_finite()) {
        return Err(Error::domain(format!("design margin {delta_r} must be finite and > -1")));
    }
    Ok(())
}

/// Equal-tail read threshold `ln R_L,max` for margin `delta_r`:
/// `(s_H mu_L + s_L mu_H - s_L ln(1 + delta_r)) / (s_H + s_L)`.
pub fn optimal_threshold(fit_h: &LogNormalFit, fit_l: &LogNormalFit, delta_r: f64) -> Result<f64> {
    check_inputs(fit_h, fit_l, delta_r)?;
    let (sh, sl) = (fit_h.sigma, fit_l.sigma);
    Ok((sh * fit_l.mu + sl * fit_h.mu - sl * delta_r.ln_1p()) / (sh + sl))
}

/// BER at one design margin, `0.5 * erfc((ln R_L,max - mu_L) / (s_L sqrt 2))`.
pub fn ber_at_margin(fit_h: &LogNormalFit, fit_l: &LogNormalFit, delta_r: f64) -> Result<BerPoint> {
    let ln_r_l_max = optimal_threshold(fit_h, fit_l, delta_r)?;
    let z = (ln_r_l_max - fit_l.mu) / fit_l.sigma;
    let ln_ber = ln_norm_sf(z);
    Ok(BerPoint {
        delta_r,
        ln_r_l_max,
        ln_r_h_min: ln_r_l_max + delta_r.ln_1p(),
        log10_ber: ln_ber / LN_10,
        ber: ln_ber.exp(),
    })
}

/// `(ln P(R_H <= R_H,min), ln P(R_L >= R_L,max))` at a point's thresholds.
/// Equal by construction; exposed so callers can audit the equalization.
pub fn tail_ln_probabilities(fit_h: &LogNormalFit, fit_l: &LogNormalFit, point: &BerPoint) -> (f64, f64) {
    let hrs = ln_norm_cdf((point.ln_r_h_min - fit_h.mu) / fit_h.sigma);
    let lrs = ln_norm_sf((point.ln_r_l_max - fit_l.mu) / fit_l.sigma);
    (hrs, lrs)
}

/// One [`BerPoint`] per margin; margins must be strictly increasing.
pub fn ber_curve(fit_h: &LogNormalFit, fit_l: &LogNormalFit, margins: &[f64]) -> Result<BerCurve> {
    if margins.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::domain("margins must be strictly increasing"));
    }
    let points = margins
        .iter()
        .map(|&m| ber_at_margin(fit_h, fit_l, m))
        .collect::<Result<Vec<_>>>()?;
    Ok(BerCurve {
        chip: None,
        fit_h: *fit_h,
        fit_l: *fit_l,
        points,
    })
}

/// Design margin at which the BER equals `target_ber`:
/// `ln(1 + delta_r) = (mu_H - mu_L) - (s_H + s_L) * qnorm(1 - target)`.
pub fn margin_for_ber(fit_h: &LogNormalFit, fit_l: &LogNormalFit, target_ber: f64) -> Result<f64> {
    fit_h.require_nondegenerate()?;
    fit_l.require_nondegenerate()?;
    if !(target_ber > 0.0 && target_ber < 0.5) {
        return Err(Error::domain(format!("target BER {target_ber} outside (0, 0.5)")));
    }
    // qnorm(1 - t) == -qnorm(t), without the cancellation in 1 - t.
    let ln_one_plus = (fit_h.mu - fit_l.mu) + (fit_h.sigma + fit_l.sigma) * qnorm(target_ber)?;
    let delta_r = ln_one_plus.exp_m1();
    if delta_r <= -1.0 {
        return Err(Error::domain(format!("target BER {target_ber} needs a margin at or below -1")));
    }
    Ok(delta_r)
}

/// Logarithmic grid of `points` margins from `min` to `max` inclusive.
pub fn log_margin_grid(min: f64, max: f64, points: usize) -> Result<Vec<f64>> {
    if !(min > 0.0 && max > min && min.is_finite() && max.is_finite()) || points < 2 {
        return Err(Error::domain(format!(
            "log grid needs 0 < min < max and >= 2 points (got {min}:{max}:{points})"
        )));
    }
    let (a, b) = (min.ln(), max.ln());
    let step = (b - a) / (points - 1) as f64;
    let mut grid: Vec<f64> = (0..points).map(|i| (a + step * i as f64).exp()).collect();
    grid[0] = min;
    grid[points - 1] = max;
    Ok(grid)
}

pub const DEFAULT_REFERENCE_MARGIN: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedChip {
    pub chip: ChipKey,
    /// 1-based rank in ascending `log10_ber` order.
    pub rank: usize,
    pub log10_ber: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PercentileChips {
    pub p25: RankedChip,
    pub median: RankedChip,
    pub p75: RankedChip,
}

/// Nearest-rank percentile (1-based) of `n` ordered values.
fn nearest_rank(percent: usize, n: usize) -> usize {
    (percent * n).div_ceil(100).max(1)
}

/// Picks the 25th/50th/75th percentile chips by `log10_ber` at
/// `reference_margin`, nearest-rank rule, ties broken by chip key.
pub fn chip_percentiles(chips: &[(ChipKey, BerCurve)], reference_margin: f64) -> Result<PercentileChips> {
    if chips.is_empty() {
        return Err(Error::Empty("no chips to rank"));
    }
    let mut ranked = chips
        .iter()
        .map(|(chip, curve)| {
            curve
                .point_at(reference_margin)
                .map(|p| (p.log10_ber, chip))
                .ok_or_else(|| Error::domain(format!("curve for {chip} lacks margin {reference_margin}")))
        })
        .collect::<Result<Vec<_>>>()?;
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)));
    let pick = |percent| {
        let rank = nearest_rank(percent, ranked.len());
        let (log10_ber, chip) = ranked[rank - 1];
        RankedChip { chip: chip.clone(), rank, log10_ber }
    };
    Ok(PercentileChips {
        p25: pick(25),
        median: pick(50),
        p75: pick(75),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub cumulative_percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BerHistogram {
    pub bin_width: f64,
    pub total: usize,
    pub bins: Vec<HistogramBin>,
}

/// Histogram of `log10_ber` values with bins `[k w, (k+1) w)`, covering
/// every bin from the lowest to the highest occupied one.
pub fn ber_histogram(chips: &[(ChipKey, f64)], bin_width: f64) -> Result<BerHistogram> {
    if !(bin_width > 0.0 && bin_width.is_finite()) {
        return Err(Error::domain(format!("bin width {bin_width} must be positive")));
    }
    if chips.is_empty() {
        return Err(Error::Empty("no chips for histogram"));
    }
    if let Some((chip, v)) = chips.iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::domain(format!("log10 BER of {chip} is {v}")));
    }
    let index = |v: f64| (v / bin_width).floor() as i64;
    let lo = chips.iter().map(|c| index(c.1)).min().expect("nonempty");
    let hi = chips.iter().map(|c| index(c.1)).max().expect("nonempty");
    let mut counts = vec![0usize; (hi - lo + 1) as usize];
    for (_, v) in chips {
        counts[(index(*v) - lo) as usize] += 1;
    }
    let total = chips.len();
    let mut cumulative = 0;
    let bins = counts
        .into_iter()
        .enumerate()
        .map(|(i, count)| {
            cumulative += count;
            let k = lo + i as i64;
            HistogramBin {
                lower: k as f64 * bin_width,
                upper: (k + 1) as f64 * bin_width,
                count,
                cumulative_percent: (cumulative * 100) as f64 / total as f64,
            }
        })
        .collect();
    Ok(BerHistogram { bin_width, total, bins })
}
