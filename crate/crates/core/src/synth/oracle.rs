use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::rng::SynthRng;
use crate::ber::optimal_threshold;
use crate::error::{Error, Result};
use crate::stats::LogNormalFit;

pub const MC_SHARDS: u64 = 64;
pub const MC_MIN_SAMPLES: u64 = 10_000;

const SIDE_HRS: u64 = 0;
const SIDE_LRS: u64 = 1;

/// Brute-force BER estimate from sampled HRS and LRS resistances.
///
/// `n_samples` draws are taken from each state. `p_hat` pools both sides;
/// `std_err` is the per-side binomial standard error at `p_hat`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub delta_r: f64,
    pub ln_r_l_max: f64,
    pub ln_r_h_min: f64,
    pub p_hat: f64,
    pub p_hat_hrs: f64,
    pub p_hat_lrs: f64,
    pub n_samples: u64,
    pub std_err: f64,
    /// `(count R_H <= R_H,min, count R_L >= R_L,max)`
    pub tail_counts: (u64, u64),
    pub seed: u64,
    pub shards: u64,
}

fn shard_len(n: u64, shard: u64) -> u64 {
    n / MC_SHARDS + u64::from(shard < n % MC_SHARDS)
}

pub fn mc_ber_estimate(
    fit_h: &LogNormalFit,
    fit_l: &LogNormalFit,
    delta_r: f64,
    n_samples: u64,
    seed: u64,
) -> Result<McEstimate> {
    if n_samples < MC_MIN_SAMPLES {
        return Err(Error::InsufficientData {
            needed: MC_MIN_SAMPLES as usize,
            found: n_samples as usize,
        });
    }
    let ln_r_l_max = optimal_threshold(fit_h, fit_l, delta_r)?;
    let ln_r_h_min = ln_r_l_max + delta_r.ln_1p();

    let (hrs, lrs) = (0..MC_SHARDS)
        .into_par_iter()
        .map(|shard| {
            let len = shard_len(n_samples, shard);
            let mut rh = SynthRng::stream(seed, &[shard, SIDE_HRS]);
            let mut rl = SynthRng::stream(seed, &[shard, SIDE_LRS]);
            let mut counts = (0u64, 0u64);
            for _ in 0..len {
                if fit_h.mu + fit_h.sigma * rh.standard_normal() <= ln_r_h_min {
                    counts.0 += 1;
                }
                if fit_l.mu + fit_l.sigma * rl.standard_normal() >= ln_r_l_max {
                    counts.1 += 1;
                }
            }
            counts
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));

    let n = n_samples as f64;
    let p_hat = (hrs + lrs) as f64 / (2.0 * n);
    Ok(McEstimate {
        delta_r,
        ln_r_l_max,
        ln_r_h_min,
        p_hat,
        p_hat_hrs: hrs as f64 / n,
        p_hat_lrs: lrs as f64 / n,
        n_samples,
        std_err: (p_hat * (1.0 - p_hat) / n).sqrt(),
        tail_counts: (hrs, lrs),
        seed,
        shards: MC_SHARDS,
    })
}

fn density(t: f64) -> f64 {
    (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

const SIMPSON_TOL: f64 = 1e-13;
const SIMPSON_MAX_DEPTH: u32 = 50;

fn simpson(a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
    let m = 0.5 * (a + b);
    let fm = density(m);
    (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
}

#[allow(clippy::too_many_arguments)]
fn adapt(a: f64, fa: f64, m: f64, fm: f64, b: f64, fb: f64, whole: f64, depth: u32) -> f64 {
    let (lm, flm, left) = simpson(a, fa, m, fm);
    let (rm, frm, right) = simpson(m, fm, b, fb);
    let delta = left + right - whole;
    if depth >= SIMPSON_MAX_DEPTH || delta.abs() <= 15.0 * SIMPSON_TOL * (left + right).abs() {
        return left + right + delta / 15.0;
    }
    adapt(a, fa, lm, flm, m, fm, left, depth + 1) + adapt(m, fm, rm, frm, b, fb, right, depth + 1)
}

fn integrate(a: f64, b: f64) -> f64 {
    let (fa, fb) = (density(a), density(b));
    let (m, fm, whole) = simpson(a, fa, b, fb);
    adapt(a, fa, m, fm, b, fb, whole, 0)
}

/// Upper tail `P(Z > z)` of the standard normal by adaptive Simpson
/// quadrature of the density over `[z, z + w), [z + w, z + 3w), ...` with
/// doubling widths until a segment stops contributing.
pub fn quad_normal_tail(z: f64) -> Result<f64> {
    if !z.is_finite() {
        return Err(Error::domain(format!("quadrature point {z} is not finite")));
    }
    if z < 0.0 {
        return Ok(1.0 - quad_normal_tail(-z)?);
    }
    let mut width = 1.0 / (1.0 + z);
    let mut a = z;
    let mut total = 0.0;
    loop {
        let part = integrate(a, a + width);
        total += part;
        a += width;
        width *= 2.0;
        if part <= 1e-17 * total || a > z + 64.0 {
            return Ok(total);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ber::ber_at_margin;
    use crate::stats::special::norm_sf;

    #[test]
    fn quad_reference_points() {
        assert!((quad_normal_tail(0.0).unwrap() - 0.5).abs() < 1e-13);
        let q2 = quad_normal_tail(2.0).unwrap();
        assert!((q2 - 0.022_750_131_948_179_207).abs() < 1e-12 * 0.0228);
        assert!((q2 - 0.022_750_131_9).abs() < 1e-10);
        let qm = quad_normal_tail(-1.5).unwrap();
        assert!((qm - (1.0 - norm_sf(1.5))).abs() < 1e-12);
        assert!(quad_normal_tail(f64::NAN).is_err());
    }

    #[test]
    fn quad_matches_erfc_path() {
        for i in 0..=140 {
            let z = 0.05 * i as f64;
            let q = quad_normal_tail(z).unwrap();
            let e = norm_sf(z);
            assert!(((q - e) / e).abs() < 1e-10, "z={z} quad={q} erfc={e}");
        }
    }

    #[test]
    fn mc_rejects_small_runs_and_degenerate_fits() {
        let h = LogNormalFit::new(12.0, 0.5, 20).unwrap();
        let l = LogNormalFit::new(9.0, 0.2, 20).unwrap();
        assert!(matches!(mc_ber_estimate(&h, &l, 1.0, 9_999, 1), Err(Error::InsufficientData { .. })));
        let flat = LogNormalFit::new(9.0, 0.0, 20).unwrap();
        assert_eq!(mc_ber_estimate(&h, &flat, 1.0, 10_000, 1), Err(Error::DegenerateFit));
    }

    #[test]
    fn mc_half_at_median_threshold() {
        // Symmetric fits with mu_H - mu_L = ln(1 + delta): threshold at both medians.
        let l = LogNormalFit::new(9.0, 0.3, 20).unwrap();
        let h = LogNormalFit::new(9.0 + 1.0_f64.ln_1p(), 0.3, 20).unwrap();
        let analytic = ber_at_margin(&h, &l, 1.0).unwrap();
        assert!((analytic.ber - 0.5).abs() < 1e-15);
        let mc = mc_ber_estimate(&h, &l, 1.0, 40_000, 5).unwrap();
        assert!((mc.p_hat - 0.5).abs() < 4.0 * mc.std_err);
        assert!((mc.p_hat_hrs - 0.5).abs() < 4.0 * mc.std_err);
        assert!((mc.p_hat_lrs - 0.5).abs() < 4.0 * mc.std_err);
    }

    #[test]
    fn mc_is_deterministic_and_consistent() {
        let h = LogNormalFit::new(12.0, 0.6, 20).unwrap();
        let l = LogNormalFit::new(9.5, 0.4, 20).unwrap();
        let a = mc_ber_estimate(&h, &l, 0.5, 100_003, 11).unwrap();
        let b = mc_ber_estimate(&h, &l, 0.5, 100_003, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.shards, MC_SHARDS);
        assert_eq!((0..MC_SHARDS).map(|s| shard_len(100_003, s)).sum::<u64>(), 100_003);
        let expect = ber_at_margin(&h, &l, 0.5).unwrap().ber;
        let se = (expect * (1.0 - expect) / a.n_samples as f64).sqrt();
        assert!((a.p_hat_hrs - expect).abs() < 4.0 * se);
        assert!((a.p_hat_lrs - expect).abs() < 4.0 * se);
        assert!((a.std_err - (a.p_hat * (1.0 - a.p_hat) / a.n_samples as f64).sqrt()).abs() < 1e-18);
        let c = mc_ber_estimate(&h, &l, 0.5, 100_003, 12).unwrap();
        assert_ne!(a.tail_counts, c.tail_counts);
    }
}
