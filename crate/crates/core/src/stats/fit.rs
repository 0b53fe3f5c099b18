use serde::{Deserialize, Serialize};

use super::special::{chi2_quantile, qnorm};
use crate::error::{Error, Result};

/// Location/scale of a log-normal distribution, in natural-log ohms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogNormalFit {
    pub mu: f64,
    pub sigma: f64,
    pub n: usize,
}

impl LogNormalFit {
    pub fn new(mu: f64, sigma: f64, n: usize) -> Result<Self> {
        if !mu.is_finite() || !sigma.is_finite() || sigma < 0.0 {
            return Err(Error::domain(format!("invalid log-normal parameters mu={mu}, sigma={sigma}")));
        }
        Ok(Self { mu, sigma, n })
    }

    /// Median resistance, `exp(mu)`.
    pub fn median(&self) -> f64 {
        self.mu.exp()
    }

    pub(crate) fn require_nondegenerate(&self) -> Result<()> {
        if self.sigma > 0.0 && self.sigma.is_finite() && self.mu.is_finite() {
            Ok(())
        } else {
            Err(Error::DegenerateFit)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QqDiagnostics {
    /// `(theoretical normal quantile, ln value)`, ascending.
    pub points: Vec<(f64, f64)>,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

fn check_positive(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !(*v > 0.0 && v.is_finite())) {
        Some(i) => Err(Error::domain(format!(
            "value #{i} = {} is not a positive finite number",
            values[i]
        ))),
        None => Ok(()),
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Maximum-likelihood log-normal fit; sigma uses divisor `n`.
pub fn mle_fit(values: &[f64]) -> Result<LogNormalFit> {
    if values.len() < 2 {
        return Err(Error::InsufficientData { needed: 2, found: values.len() });
    }
    check_positive(values)?;
    let logs: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    if logs.iter().all(|l| *l == logs[0]) {
        return Err(Error::DegenerateFit);
    }
    let mu = mean(&logs);
    let var = logs.iter().map(|l| (l - mu) * (l - mu)).sum::<f64>() / logs.len() as f64;
    Ok(LogNormalFit { mu, sigma: var.sqrt(), n: logs.len() })
}

/// Exact chi-square pivotal interval for sigma, adjusted for the MLE divisor.
///
/// `[s * sqrt(n / chi2((1+level)/2, n-1)), s * sqrt(n / chi2((1-level)/2, n-1))]`
pub fn sigma_ci(fit: &LogNormalFit, level: f64) -> Result<ConfidenceInterval> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::domain(format!("confidence level {level} outside (0, 1)")));
    }
    if fit.n < 2 {
        return Err(Error::InsufficientData { needed: 2, found: fit.n });
    }
    fit.require_nondegenerate()?;
    let (lo_factor, hi_factor) = sigma_ci_factors(fit.n, level)?;
    Ok(ConfidenceInterval {
        lower: fit.sigma * lo_factor,
        upper: fit.sigma * hi_factor,
        level,
    })
}

/// Multiplicative factors applied to sigma-hat for an `n`-sample fit.
pub fn sigma_ci_factors(n: usize, level: f64) -> Result<(f64, f64)> {
    let df = u32::try_from(n - 1).map_err(|_| Error::domain("sample count too large"))?;
    let nf = n as f64;
    let upper_q = chi2_quantile(0.5 * (1.0 + level), df)?;
    let lower_q = chi2_quantile(0.5 * (1.0 - level), df)?;
    Ok(((nf / upper_q).sqrt(), (nf / lower_q).sqrt()))
}

/// Normal Q-Q plot of `ln(values)` with plotting positions `(i - 0.5)/n`
/// and an ordinary least-squares line (slope estimates sigma, intercept mu).
pub fn qq_diagnostics(values: &[f64]) -> Result<QqDiagnostics> {
    if values.len() < 3 {
        return Err(Error::InsufficientData { needed: 3, found: values.len() });
    }
    check_positive(values)?;
    let mut logs: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    logs.sort_by(f64::total_cmp);
    let n = logs.len() as f64;
    let points = logs
        .iter()
        .enumerate()
        .map(|(i, &y)| Ok((qnorm((i as f64 + 0.5) / n)?, y)))
        .collect::<Result<Vec<_>>>()?;

    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in &points {
        let (dx, dy) = (x - mx, y - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if syy == 0.0 {
        return Err(Error::DegenerateFit);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0);
    Ok(QqDiagnostics { points, slope, intercept, r_squared })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_point_fit() {
        let fit = mle_fit(&[1.0, 2.0_f64.exp()]).unwrap();
        assert!((fit.mu - 1.0).abs() < 1e-15);
        assert!((fit.sigma - 1.0).abs() < 1e-15);
        assert_eq!(fit.n, 2);
    }

    #[test]
    fn fit_errors() {
        assert_eq!(mle_fit(&[3.0, 3.0, 3.0]), Err(Error::DegenerateFit));
        assert!(matches!(mle_fit(&[1.0]), Err(Error::InsufficientData { .. })));
        assert!(matches!(mle_fit(&[1.0, 0.0]), Err(Error::Domain(_))));
        assert!(matches!(mle_fit(&[1.0, -2.0]), Err(Error::Domain(_))));
    }

    #[test]
    fn ci_for_twenty_cycles() {
        let fit = LogNormalFit::new(0.0, 1.0, 20).unwrap();
        let ci = sigma_ci(&fit, 0.95).unwrap();
        assert!((ci.lower - (20.0 / 32.852_326_861_729_69_f64).sqrt()).abs() < 1e-9);
        assert!((ci.upper - (20.0 / 8.906_516_481_987_971_f64).sqrt()).abs() < 1e-9);
        assert!((ci.lower - 0.780).abs() < 1e-3);
        assert!((ci.upper - 1.498).abs() < 1e-3);
    }

    #[test]
    fn ci_shrinks_with_level_and_n() {
        let (lo, hi) = sigma_ci_factors(20, 1e-6).unwrap();
        assert!(hi - lo < 1e-5);
        let mut last = f64::INFINITY;
        for n in [20, 40, 80] {
            let (lo, hi) = sigma_ci_factors(n, 0.95).unwrap();
            assert!(lo < 1.0 && hi > 1.0);
            assert!(hi - lo < last);
            last = hi - lo;
        }
    }

    #[test]
    fn ci_rejects_degenerate() {
        let fit = LogNormalFit::new(0.0, 0.0, 20).unwrap();
        assert_eq!(sigma_ci(&fit, 0.95), Err(Error::DegenerateFit));
        let fit = LogNormalFit::new(0.0, 1.0, 20).unwrap();
        assert!(sigma_ci(&fit, 1.0).is_err());
    }

    #[test]
    fn qq_exact_log_linear_set() {
        let n = 50;
        let values: Vec<f64> = (1..=n)
            .map(|i| qnorm((i as f64 - 0.5) / n as f64).unwrap().exp())
            .collect();
        let qq = qq_diagnostics(&values).unwrap();
        assert!((qq.r_squared - 1.0).abs() < 1e-12);
        assert!((qq.slope - 1.0).abs() < 1e-12);
        assert!(qq.intercept.abs() < 1e-12);
        assert!(qq.points.windows(2).all(|w| w[0].0 < w[1].0));
    }

    #[test]
    fn qq_errors() {
        assert!(qq_diagnostics(&[1.0, 2.0]).is_err());
        assert!(qq_diagnostics(&[1.0, 2.0, -1.0]).is_err());
        assert_eq!(qq_diagnostics(&[2.0, 2.0, 2.0]), Err(Error::DegenerateFit));
    }

    proptest! {
        #[test]
        fn mle_is_scale_equivariant(
            values in prop::collection::vec(1e-3f64..1e6, 2..60),
            c in 1e-4f64..1e4,
        ) {
            prop_assume!(values.iter().any(|v| *v != values[0]));
            let a = mle_fit(&values).unwrap();
            let scaled: Vec<f64> = values.iter().map(|v| v * c).collect();
            let b = mle_fit(&scaled).unwrap();
            prop_assert!((b.mu - a.mu - c.ln()).abs() < 1e-11);
            prop_assert!((b.sigma - a.sigma).abs() < 1e-9 * a.sigma.max(1e-3));
        }
    }
}
