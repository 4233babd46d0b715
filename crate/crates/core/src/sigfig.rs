//! Significant-digit number formatting for the text interchange formats.
//!
//! Score files and DET CSVs carry values at 9 significant digits. The
//! formatter mirrors printf's `%g`: plain decimal notation when the
//! exponent is moderate, exponential otherwise, trailing zeros trimmed.

/// Format `value` with up to `sig` significant digits.
///
/// `0.5` stays `"0.5"`, `1.0 / 3.0` becomes `"0.333333333"` at 9 digits,
/// very small or large magnitudes switch to `"1.23e-7"`-style notation.
/// Infinities format as `"inf"` / `"-inf"`.
pub fn format_sig(value: f64, sig: usize) -> String {
    assert!(sig >= 1, "need at least one significant digit");
    if value == 0.0 {
        return "0".to_string();
    }
    if value.is_nan() {
        return "NaN".to_string();
    }
    if value.is_infinite() {
        return if value > 0.0 { "inf" } else { "-inf" }.to_string();
    }

    // Exponent of the value rounded to `sig` digits, read back from
    // exponential formatting so carries (0.999.. -> 1.0) are handled.
    let exp_form = format!("{:.*e}", sig - 1, value);
    let (mantissa, exp) = exp_form
        .split_once('e')
        .expect("exponential format always contains 'e'");
    let exp: i32 = exp.parse().expect("exponent is an integer");

    if -4 <= exp && exp < sig as i32 {
        let decimals = (sig as i32 - 1 - exp).max(0) as usize;
        trim_trailing_zeros(&format!("{value:.decimals$}"))
    } else {
        format!("{}e{}", trim_trailing_zeros(mantissa), exp)
    }
}

fn trim_trailing_zeros(s: &str) -> String {
    if !s.contains('.') {
        return s.to_string();
    }
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn short_values_stay_short() {
        assert_eq!(format_sig(0.5, 9), "0.5");
        assert_eq!(format_sig(0.25, 9), "0.25");
        assert_eq!(format_sig(0.0, 9), "0");
        assert_eq!(format_sig(-0.0, 9), "0");
        assert_eq!(format_sig(1.0, 9), "1");
        assert_eq!(format_sig(-2.0, 9), "-2");
        assert_eq!(format_sig(123456789.0, 9), "123456789");
    }

    #[test]
    fn rounds_to_nine_digits() {
        assert_eq!(format_sig(1.0 / 3.0, 9), "0.333333333");
        assert_eq!(format_sig(2.0 / 3.0, 9), "0.666666667");
        assert_eq!(format_sig(0.123456789499, 9), "0.123456789");
        assert_eq!(format_sig(0.99999999951, 9), "1");
    }

    #[test]
    fn exponential_fallback() {
        assert_eq!(format_sig(1.23e-7, 9), "1.23e-7");
        assert_eq!(format_sig(-4.5e12, 9), "-4.5e12");
        assert_eq!(format_sig(1e-4, 9), "0.0001");
        assert_eq!(format_sig(9.99999e-5, 9), "9.99999e-5");
    }

    #[test]
    fn non_finite() {
        assert_eq!(format_sig(f64::INFINITY, 9), "inf");
        assert_eq!(format_sig(f64::NEG_INFINITY, 9), "-inf");
    }

    #[test]
    fn formatting_is_idempotent_after_one_round_trip() {
        let mut state = 0x1234_5678_u64;
        for _ in 0..500 {
            // small LCG, just to get varied magnitudes
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            let x = (state >> 11) as f64 / (1u64 << 53) as f64;
            let x = (x - 0.5) * 1e6;
            let once: f64 = format_sig(x, 9).parse().unwrap();
            let twice: f64 = format_sig(once, 9).parse().unwrap();
            assert_eq!(once.to_bits(), twice.to_bits(), "value {x}");
        }
    }
}
