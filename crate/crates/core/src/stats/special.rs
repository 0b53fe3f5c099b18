//! Error function family, normal distribution helpers, and the chi-square
//! quantile.
//!
//! `erf`/`erfc` use W. J. Cody's rational Chebyshev approximations
//! (SPECFUN `CALERF`). For |x| > 0.46875 the complementary function is
//! evaluated as `exp(-x^2) * R(x)`, which also gives `ln_erfc` without
//! underflow for arbitrarily large arguments.

use std::f64::consts::{FRAC_1_SQRT_2, LN_2};

use crate::error::{Error, Result};

const SQRT_2PI: f64 = 2.506_628_274_631_000_5;
const FRAC_1_SQRT_PI: f64 = 0.564_189_583_547_756_3;

// |x| <= 0.46875
const A: [f64; 5] = [
    3.161_123_743_870_565_6,
    1.138_641_541_510_501_6e2,
    3.774_852_376_853_020_2e2,
    3.209_377_589_138_469_5e3,
    1.857_777_061_846_031_5e-1,
];
const B: [f64; 4] = [
    2.360_129_095_234_412e1,
    2.440_246_379_344_441_7e2,
    1.282_616_526_077_372_3e3,
    2.844_236_833_439_170_6e3,
];

// 0.46875 < |x| <= 4
const C: [f64; 9] = [
    5.641_884_969_886_701e-1,
    8.883_149_794_388_376,
    6.611_919_063_714_163e1,
    2.986_351_381_974_001_3e2,
    8.819_522_212_417_691e2,
    1.712_047_612_634_070_6e3,
    2.051_078_377_826_071_5e3,
    1.230_339_354_797_997_2e3,
    2.153_115_354_744_038_5e-8,
];
const D: [f64; 8] = [
    1.574_492_611_070_983_5e1,
    1.176_939_508_913_125e2,
    5.371_811_018_620_098_6e2,
    1.621_389_574_566_690_2e3,
    3.290_799_235_733_459_7e3,
    4.362_619_090_143_247e3,
    3.439_367_674_143_721_6e3,
    1.230_339_354_803_749_4e3,
];

// |x| > 4
const P: [f64; 6] = [
    3.053_266_349_612_323_4e-1,
    3.603_448_999_498_044e-1,
    1.257_817_261_112_292_5e-1,
    1.608_378_514_874_227_7e-2,
    6.587_491_615_298_378e-4,
    1.631_538_713_730_209_8e-2,
];
const Q: [f64; 5] = [
    2.568_520_192_289_822,
    1.872_952_849_923_467_3,
    5.279_051_029_514_284e-1,
    6.051_834_131_244_132e-2,
    2.335_204_976_268_691_8e-3,
];

const SMALL_BREAK: f64 = 0.468_75;

/// erf on |x| <= 0.46875.
fn erf_small(x: f64) -> f64 {
    let ysq = x * x;
    let mut num = A[4] * ysq;
    let mut den = ysq;
    for i in 0..3 {
        num = (num + A[i]) * ysq;
        den = (den + B[i]) * ysq;
    }
    x * (num + A[3]) / (den + B[3])
}

/// The factor `R(y)` in `erfc(y) = exp(-y^2) R(y)`, valid for y > 0.46875.
fn erfc_scaled(y: f64) -> f64 {
    if y <= 4.0 {
        let mut num = C[8] * y;
        let mut den = y;
        for i in 0..7 {
            num = (num + C[i]) * y;
            den = (den + D[i]) * y;
        }
        (num + C[7]) / (den + D[7])
    } else {
        let ysq = 1.0 / (y * y);
        let mut num = P[5] * ysq;
        let mut den = ysq;
        for i in 0..4 {
            num = (num + P[i]) * ysq;
            den = (den + Q[i]) * ysq;
        }
        let r = ysq * (num + P[4]) / (den + Q[4]);
        (FRAC_1_SQRT_PI - r) / y
    }
}

/// `-y^2` split as `hi + lo` so that `exp(-y^2)` keeps full relative accuracy.
fn neg_square_split(y: f64) -> (f64, f64) {
    let ysq = (y * 16.0).trunc() / 16.0;
    let del = (y - ysq) * (y + ysq);
    (-ysq * ysq, -del)
}

/// erfc(y) for y > 0.46875.
fn erfc_positive(y: f64) -> f64 {
    let (hi, lo) = neg_square_split(y);
    hi.exp() * lo.exp() * erfc_scaled(y)
}

/// The Gauss error function.
pub fn erf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    let y = x.abs();
    if y <= SMALL_BREAK {
        erf_small(x)
    } else {
        let r = 1.0 - erfc_positive(y);
        if x < 0.0 {
            -r
        } else {
            r
        }
    }
}

/// The complementary error function `1 - erf(x)`.
pub fn erfc(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    let y = x.abs();
    if y <= SMALL_BREAK {
        return 1.0 - erf_small(x);
    }
    let r = if y < 27.3 { erfc_positive(y) } else { 0.0 };
    if x < 0.0 {
        2.0 - r
    } else {
        r
    }
}

/// Natural log of `erfc(x)`, finite for every finite `x`.
pub fn ln_erfc(x: f64) -> f64 {
    if x <= SMALL_BREAK {
        // erfc(x) in [~0.5, 2): no cancellation or underflow here.
        return erfc(x).ln();
    }
    let (hi, lo) = neg_square_split(x);
    hi + lo + erfc_scaled(x).ln()
}

/// Standard normal density.
pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / SQRT_2PI
}

/// Standard normal CDF, `P(Z <= x)`.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Standard normal upper tail, `P(Z > x)`.
pub fn norm_sf(x: f64) -> f64 {
    0.5 * erfc(x * FRAC_1_SQRT_2)
}

/// `ln P(Z > z)`, accurate in both tails.
pub fn ln_norm_sf(z: f64) -> f64 {
    if z >= 0.0 {
        -LN_2 + ln_erfc(z * FRAC_1_SQRT_2)
    } else {
        (-0.5 * erfc(-z * FRAC_1_SQRT_2)).ln_1p()
    }
}

/// `ln P(Z <= z)`.
pub fn ln_norm_cdf(z: f64) -> f64 {
    ln_norm_sf(-z)
}

/// Standard normal quantile.
///
/// Acklam's rational approximation (relative error about 1e-9) followed by
/// one Newton step against [`norm_cdf`]. The upper half is obtained by
/// reflection, so `qnorm(p) == -qnorm(1 - p)` holds exactly.
pub fn qnorm(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::domain(format!("qnorm: p = {p} outside (0, 1)")));
    }
    if p > 0.5 {
        Ok(-qnorm_lower(1.0 - p))
    } else {
        Ok(qnorm_lower(p))
    }
}

fn qnorm_lower(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.024_25;

    let x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    };

    let density = norm_pdf(x);
    if density > 0.0 {
        let step = (norm_cdf(x) - p) / density;
        if step.is_finite() {
            return x - step;
        }
    }
    x
}

/// Natural log of the gamma function for x > 0 (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // Reflection.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (i, c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Regularized incomplete gamma functions `(P(a, x), Q(a, x))`.
pub fn gamma_pq(a: f64, x: f64) -> (f64, f64) {
    if x <= 0.0 {
        return (0.0, 1.0);
    }
    let log_prefactor = -x + a * x.ln() - ln_gamma(a);
    if x < a + 1.0 {
        let mut ap = a;
        let mut term = 1.0 / a;
        let mut sum = term;
        for _ in 0..10_000 {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term.abs() < sum.abs() * 1e-17 {
                break;
            }
        }
        let p = sum * log_prefactor.exp();
        (p, 1.0 - p)
    } else {
        // Modified Lentz for the continued fraction of Q.
        const TINY: f64 = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / TINY;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..10_000 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < TINY {
                d = TINY;
            }
            c = b + an / c;
            if c.abs() < TINY {
                c = TINY;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < 1e-16 {
                break;
            }
        }
        let q = log_prefactor.exp() * h;
        (1.0 - q, q)
    }
}

/// Quantile of the chi-square distribution with `df` degrees of freedom.
///
/// Wilson–Hilferty start, then safeguarded Newton iterations on the
/// regularized incomplete gamma function.
pub fn chi2_quantile(p: f64, df: u32) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::domain(format!("chi2_quantile: p = {p} outside (0, 1)")));
    }
    if df == 0 {
        return Err(Error::domain("chi2_quantile: df must be >= 1"));
    }
    let k = f64::from(df);
    let a = 0.5 * k;
    let ln_norm = ln_gamma(a) + a * LN_2;

    // Residual measured on whichever tail is small, so p near 1 keeps precision.
    let upper = p > 0.5;
    let target = if upper { 1.0 - p } else { p };
    let residual = |x: f64| {
        let (lo, hi) = gamma_pq(a, 0.5 * x);
        if upper {
            target - hi
        } else {
            lo - target
        }
    };
    let density = |x: f64| ((a - 1.0) * x.ln() - 0.5 * x - ln_norm).exp();

    let z = qnorm(p)?;
    let h = 2.0 / (9.0 * k);
    let mut x = k * (1.0 - h + z * h.sqrt()).powi(3);
    if !(x > 0.0) || p < 0.05 && x < 0.5 * k {
        // Small-x behaviour of the lower tail: P ~ (x/2)^a / Gamma(a + 1).
        let small = ((p.ln() + ln_gamma(a + 1.0)) / a).exp() * 2.0;
        if small.is_finite() && small > 0.0 && (x <= 0.0 || small < x) {
            x = small;
        }
    }

    // Bracket: residual(lo) < 0 < residual(hi).
    let mut lo = 0.0_f64;
    let mut hi = x.max(1e-300);
    while residual(hi) < 0.0 {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..300 {
        let f = residual(x);
        if f == 0.0 {
            return Ok(x);
        }
        if f < 0.0 {
            lo = lo.max(x);
        } else {
            hi = hi.min(x);
        }
        let mut next = x - f / density(x);
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-15 * x.abs() {
            return Ok(next);
        }
        x = next;
    }
    Ok(x)
}
