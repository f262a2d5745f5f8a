//! Text formatting shared by every file writer.

/// Decimal text with 17 significant digits, enough for an exact `f64` round trip.
pub fn fmt17(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "NaN".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

#[cfg(test)]
mod tests {
    use super::fmt17;

    #[test]
    fn round_trips() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02e23, 0.0] {
            assert_eq!(fmt17(v).parse::<f64>().unwrap(), v);
        }
        assert!(fmt17(f64::NAN).parse::<f64>().unwrap().is_nan());
    }
}
