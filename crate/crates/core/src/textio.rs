//! Helpers shared by the text file formats.
//!
//! Every float written to disk uses 17 significant digits, which is enough
//! for an exact `f64` round trip, and every file is UTF-8 with `\n` line
//! endings so that identical inputs produce byte-identical files.

use crate::error::{Error, Result};

/// Render with 17 significant digits (scientific notation).
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn parse_f64(s: &str, what: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::Spec(format!("{what}: not a number: {s:?}")))
}

pub fn parse_usize(s: &str, what: &str) -> Result<usize> {
    s.trim()
        .parse::<usize>()
        .map_err(|_| Error::Spec(format!("{what}: not a non-negative integer: {s:?}")))
}

/// Format an optional value for a CSV cell; `None` becomes an empty field.
pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt17).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fmt17_round_trips_exactly() {
        let values = [
            0.0,
            1.0,
            -1.0,
            0.1,
            1.0 / 3.0,
            std::f64::consts::PI,
            1e-300,
            -2.2250738585072014e-308,
            9.9e307,
            0.04,
            0.46,
        ];
        for v in values {
            let s = fmt17(v);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back.to_bits(), v.to_bits(), "{v} -> {s} -> {back}");
        }
    }

    #[test]
    fn fmt17_random_round_trips() {
        let mut rng = crate::rng::Rng::new(99);
        for _ in 0..10_000 {
            let v = rng.gaussian() * 10f64.powi((rng.below(60) as i32) - 30);
            let back: f64 = fmt17(v).parse().unwrap();
            assert_eq!(back.to_bits(), v.to_bits());
        }
    }
}
