//! SI-suffixed quantity strings such as `"4pF"`, `"1750nH"` or `"27MOhm"`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unit {
    Ohm,
    Farad,
    Henry,
    Volt,
    Hertz,
    Second,
    Radian,
    Dimensionless,
}

impl Unit {
    fn symbols(self) -> &'static [&'static str] {
        match self {
            Unit::Ohm => &["Ohm", "ohm", "Ω"],
            Unit::Farad => &["F"],
            Unit::Henry => &["H"],
            Unit::Volt => &["V"],
            Unit::Hertz => &["Hz"],
            Unit::Second => &["s"],
            Unit::Radian => &["rad"],
            Unit::Dimensionless => &[],
        }
    }
}

fn prefix_scale(p: &str) -> Option<f64> {
    Some(match p {
        "" => 1.0,
        "f" => 1e-15,
        "p" => 1e-12,
        "n" => 1e-9,
        "u" | "µ" | "μ" => 1e-6,
        "m" => 1e-3,
        "k" => 1e3,
        "M" => 1e6,
        "G" => 1e9,
        "T" => 1e12,
        _ => return None,
    })
}

/// Split a leading floating-point literal from its suffix.
fn split_number(text: &str) -> Option<(f64, &str)> {
    let bytes = text.as_bytes();
    let mut end = 0;
    let mut seen_digit = false;
    let mut i = 0;
    if i < bytes.len() && (bytes[i] == b'+' || bytes[i] == b'-') {
        i += 1;
    }
    while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
        seen_digit |= bytes[i].is_ascii_digit();
        i += 1;
        end = i;
    }
    if !seen_digit {
        return None;
    }
    // Exponent only if followed by digits, so "1e" is not swallowed from e.g. "1eV".
    if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
        let mut j = i + 1;
        if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
            j += 1;
        }
        let digits_start = j;
        while j < bytes.len() && bytes[j].is_ascii_digit() {
            j += 1;
        }
        if j > digits_start {
            end = j;
        }
    }
    let value: f64 = text[..end].parse().ok()?;
    Some((value, &text[end..]))
}

/// Parse a quantity in the given unit, returning its value in SI base units.
///
/// A bare number is accepted for any unit. For [`Unit::Radian`] a `deg` suffix
/// is also accepted and converted.
pub fn parse_quantity(text: &str, unit: Unit) -> Result<f64> {
    let trimmed = text.trim();
    let (value, suffix) = split_number(trimmed)
        .ok_or_else(|| Error::Parse(format!("'{text}' does not start with a number")))?;
    let suffix = suffix.trim();
    let scaled = if suffix.is_empty() {
        value
    } else if unit == Unit::Radian && suffix == "deg" {
        value.to_radians()
    } else {
        let mut found = None;
        for sym in unit.symbols() {
            if let Some(prefix) = suffix.strip_suffix(sym) {
                if let Some(scale) = prefix_scale(prefix) {
                    found = Some(value * scale);
                    break;
                }
            }
        }
        found.ok_or_else(|| Error::Parse(format!("'{text}' is not a valid {unit:?} quantity")))?
    };
    if !scaled.is_finite() {
        return Err(Error::Parse(format!("'{text}' is not finite")));
    }
    Ok(scaled)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * b.abs().max(1e-300)
    }

    #[test]
    fn parses_component_values() {
        assert!(close(parse_quantity("4pF", Unit::Farad).unwrap(), 4e-12));
        assert!(close(parse_quantity("1750nH", Unit::Henry).unwrap(), 1.75e-6));
        assert!(close(parse_quantity("27MOhm", Unit::Ohm).unwrap(), 27e6));
        assert!(close(parse_quantity("5Ω", Unit::Ohm).unwrap(), 5.0));
        assert!(close(parse_quantity("28.38MHz", Unit::Hertz).unwrap(), 28.38e6));
        assert!(close(parse_quantity("1e-9s", Unit::Second).unwrap(), 1e-9));
        assert!(close(parse_quantity("2.5mV", Unit::Volt).unwrap(), 2.5e-3));
        assert!(close(parse_quantity("90deg", Unit::Radian).unwrap(), std::f64::consts::FRAC_PI_2));
        assert!(close(parse_quantity("1950", Unit::Ohm).unwrap(), 1950.0));
    }

    #[test]
    fn rejects_wrong_unit_and_garbage() {
        assert!(parse_quantity("4pH", Unit::Farad).is_err());
        assert!(parse_quantity("pF", Unit::Farad).is_err());
        assert!(parse_quantity("4xF", Unit::Farad).is_err());
        assert!(parse_quantity("", Unit::Volt).is_err());
    }
}
