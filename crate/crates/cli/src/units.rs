//! Physical quantities written as `"<number> <unit>"`. Every dimensional
//! config field carries an explicit unit; bare numbers are rejected.

use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    Time,
    /// rad/s. `pi/tau` is accepted and resolved against the config's tau.
    Frequency,
    /// Noise power spectral density, 1/s.
    Spectrum,
    Temperature,
}

impl Dimension {
    fn units(self) -> &'static [(&'static str, f64)] {
        match self {
            Dimension::Time => &[("s", 1.0), ("ms", 1e-3), ("us", 1e-6), ("ns", 1e-9)],
            Dimension::Frequency => &[("rad/s", 1.0), ("krad/s", 1e3), ("Mrad/s", 1e6)],
            Dimension::Spectrum => &[("1/s", 1.0), ("1/ms", 1e3), ("1/us", 1e6)],
            Dimension::Temperature => &[("K", 1.0), ("mK", 1e-3), ("uK", 1e-6)],
        }
    }

    pub fn expected(self) -> String {
        let mut names: Vec<&str> = self.units().iter().map(|u| u.0).collect();
        if self == Dimension::Frequency {
            names.push("pi/tau");
        }
        names.join(", ")
    }
}

/// Parses `"3.1e-4 s"`, `"310 us"`, `"0.625 pi/tau"`. `tau` is needed only
/// for `pi/tau`.
pub fn parse_quantity(text: &str, dim: Dimension, tau: Option<f64>) -> Result<f64, String> {
    let text = text.trim();
    let split = text
        .find(char::is_whitespace)
        .ok_or_else(|| format!("`{text}` has no unit (expected one of {})", dim.expected()))?;
    let (num, unit) = (&text[..split], text[split..].trim());
    let value: f64 = num.parse().map_err(|_| format!("`{num}` is not a number"))?;
    if !value.is_finite() {
        return Err(format!("`{num}` is not finite"));
    }
    if dim == Dimension::Frequency && unit == "pi/tau" {
        let tau = tau.ok_or("`pi/tau` needs timing.tau")?;
        return Ok(value * PI / tau);
    }
    dim.units()
        .iter()
        .find(|(name, _)| *name == unit)
        .map(|(_, scale)| value * scale)
        .ok_or_else(|| format!("unknown unit `{unit}` (expected one of {})", dim.expected()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scales_units() {
        assert_eq!(parse_quantity("310 us", Dimension::Time, None).unwrap(), 310e-6);
        assert_eq!(parse_quantity("2 krad/s", Dimension::Frequency, None).unwrap(), 2e3);
        assert_eq!(parse_quantity("7.64 K", Dimension::Temperature, None).unwrap(), 7.64);
        let w = parse_quantity("0.5 pi/tau", Dimension::Frequency, Some(1e-3)).unwrap();
        assert!((w - 0.5 * PI / 1e-3).abs() < 1e-9);
    }

    #[test]
    fn rejects_missing_or_wrong_units() {
        assert!(parse_quantity("3.1e-4", Dimension::Time, None)
            .unwrap_err()
            .contains("no unit"));
        assert!(parse_quantity("1 Hz", Dimension::Frequency, None)
            .unwrap_err()
            .contains("unknown unit"));
        assert!(parse_quantity("1 pi/tau", Dimension::Frequency, None).is_err());
        assert!(parse_quantity("abc s", Dimension::Time, None).is_err());
    }
}
