use iltber_core::ber::ber_at_margin;
use iltber_core::stats::special::norm_sf;
use iltber_core::stats::LogNormalFit;
use iltber_core::synth::{mc_ber_estimate, quad_normal_tail, MC_MIN_SAMPLES};
use serde_json::json;

use super::to_json;
use crate::error::{CliError, CliResult};
use crate::OracleArgs;

fn fit(mu: Option<f64>, sigma: Option<f64>, state: &str) -> CliResult<LogNormalFit> {
    let (Some(mu), Some(sigma)) = (mu, sigma) else {
        return Err(CliError::usage(format!("--mc needs --mu-{state} and --sigma-{state}")));
    };
    if sigma.is_nan() || sigma <= 0.0 {
        return Err(CliError::usage(format!("--sigma-{state} must be positive")));
    }
    LogNormalFit::new(mu, sigma, 0).map_err(|e| CliError::usage(e.to_string()))
}

pub(super) fn run(args: &OracleArgs) -> CliResult<String> {
    if args.quad {
        let z = args.z.ok_or_else(|| CliError::usage("--quad needs --z"))?;
        let tail = quad_normal_tail(z).map_err(|e| CliError::usage(e.to_string()))?;
        let erfc_tail = norm_sf(z);
        return Ok(to_json(&json!({
            "mode": "quad",
            "z": z,
            "tail": tail,
            "erfc_tail": erfc_tail,
            "relative_difference": (tail - erfc_tail) / erfc_tail,
        })));
    }
    let fit_h = fit(args.mu_h, args.sigma_h, "h")?;
    let fit_l = fit(args.mu_l, args.sigma_l, "l")?;
    if args.samples < MC_MIN_SAMPLES {
        return Err(CliError::usage(format!("--samples must be at least {MC_MIN_SAMPLES}")));
    }
    let analytic = ber_at_margin(&fit_h, &fit_l, args.margin).map_err(|e| CliError::usage(e.to_string()))?;
    let estimate = mc_ber_estimate(&fit_h, &fit_l, args.margin, args.samples, args.seed)?;
    let bound = 4.0 * estimate.std_err;
    Ok(to_json(&json!({
        "mode": "mc",
        "estimate": estimate,
        "analytic_ber": analytic.ber,
        "analytic_log10_ber": analytic.log10_ber,
        "hrs_within_4se": (estimate.p_hat_hrs - analytic.ber).abs() <= bound,
        "lrs_within_4se": (estimate.p_hat_lrs - analytic.ber).abs() <= bound,
    })))
}
