//! Number formatting shared by the CSV/JSON writers and plot labels.

/// Shortest decimal string that parses back to exactly `v`.
///
/// Same digits `serde_json` emits, so CSV and JSON outputs of one run agree.
/// Non-finite values print as `NaN`, `inf`, `-inf`.
pub fn exact(v: f64) -> String {
    if v.is_finite() {
        ryu::Buffer::new().format_finite(v).to_owned()
    } else if v.is_nan() {
        "NaN".to_owned()
    } else if v > 0.0 {
        "inf".to_owned()
    } else {
        "-inf".to_owned()
    }
}

/// `%.{digits}g`-style rendering with trailing zeros removed.
pub fn sig(v: f64, digits: usize) -> String {
    if !v.is_finite() {
        return exact(v);
    }
    if v == 0.0 {
        return "0".to_owned();
    }
    let digits = digits.max(1);
    let sci = format!("{:.*e}", digits - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= digits as i32 {
        format!("{}e{}", trim_zeros(mantissa), exp)
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, v)).to_owned()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_round_trips() {
        for v in [0.1, 1e5, 123456.789, 1e-300, -2.5, 5e-324] {
            assert_eq!(exact(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(exact(0.1), "0.1");
        assert_eq!(exact(1e-300), "1e-300");
    }

    #[test]
    fn sig_four_digits() {
        assert_eq!(sig(2.78123, 4), "2.781");
        assert_eq!(sig(-7.95, 4), "-7.95");
        assert_eq!(sig(123456.0, 4), "1.235e5");
        assert_eq!(sig(0.000012345, 4), "1.234e-5");
        assert_eq!(sig(0.0, 4), "0");
        assert_eq!(sig(-12.0, 4), "-12");
        assert_eq!(sig(1000.0, 4), "1000");
    }
}
