//! Fixed float formatting for CSV and console output.

/// Significant digits of CSV numbers.
pub const CSV_DIGITS: usize = 9;

/// `digits` significant digits, trailing zeros trimmed; scientific notation
/// below 1e-6 in magnitude.
pub fn sig(v: f64, digits: usize) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let digits = digits.max(1);
    // exponent after rounding, so 9.9999999999 becomes 10 and not 9.99999999
    let sci = format!("{:.*e}", digits - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -6 {
        return format!("{}e{}", trim(mantissa), exp);
    }
    let decimals = (digits as i32 - 1 - exp).max(0) as usize;
    // reparse so digits beyond the precision print as zeros
    let rounded: f64 = sci.parse().expect("float");
    trim(&format!("{:.*}", decimals, rounded)).to_string()
}

fn trim(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn csv_num(v: f64) -> String {
    sig(v, CSV_DIGITS)
}

/// `digits` significant digits without trimming, as printed by `calibrate`.
pub fn fixed_sig(v: f64, digits: usize) -> String {
    if v == 0.0 || !v.is_finite() {
        return v.to_string();
    }
    let exp = v.abs().log10().floor() as i32;
    let mut decimals = (digits as i32 - 1 - exp).max(0) as usize;
    let s = format!("{:.*}", decimals, v);
    // rounding may carry into a new leading digit (9.9999 -> 10.0000)
    let leading = s.trim_start_matches('-').split('.').next().unwrap_or("").trim_start_matches('0').len();
    if leading > (exp + 1).max(0) as usize && decimals > 0 {
        decimals -= 1;
        return format!("{:.*}", decimals, v);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digits() {
        assert_eq!(csv_num(0.0), "0");
        assert_eq!(csv_num(1.0), "1");
        assert_eq!(csv_num(0.1 + 0.2), "0.3");
        assert_eq!(csv_num(2.8e-3), "0.0028");
        assert_eq!(csv_num(1.0 / 3.0), "0.333333333");
        assert_eq!(csv_num(123456789012.0), "123456789000");
        assert_eq!(csv_num(-0.25), "-0.25");
        assert_eq!(csv_num(1.5e-9), "1.5e-9");
        assert_eq!(csv_num(9.9999999999), "10");
        assert_eq!(csv_num(1e-6), "0.000001");
    }

    #[test]
    fn fixed_significant_digits() {
        assert_eq!(fixed_sig(270.0, 6), "270.000");
        assert_eq!(fixed_sig(0.0123339289, 6), "0.0123339");
        assert_eq!(fixed_sig(9.9999999, 6), "10.0000");
        assert_eq!(fixed_sig(0.0, 6), "0");
    }
}
