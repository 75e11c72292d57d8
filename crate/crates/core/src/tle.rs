//! Two-Line Element sets: fixed-column parsing, checksum validation, catalog
//! ingestion and the mean-motion to semi-major-axis conversion.
//!
//! Column positions follow the NORAD layout (1-indexed, inclusive):
//!
//! ```text
//! 1 25544U 98067A   24146.63752315  .00009537  00000+0  17465-3 0  9998
//! 2 25544  51.6422  41.9330 0005197 351.2436   8.8447 15.50954063448025
//! ```

use std::f64::consts::PI;
use std::fmt;
use std::io::{self, Read};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::orbit::{self, KeplerianElements};

const SECONDS_PER_DAY: f64 = 86_400.0;

/// Constants of the two-body Earth model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    /// Gravitational parameter (km^3/s^2).
    pub mu_earth: f64,
    /// Mean spherical radius (km).
    pub earth_radius: f64,
    /// Sidereal rotation rate (rad/s).
    pub earth_rotation_rate: f64,
}

impl PhysicalConstants {
    pub const EARTH: PhysicalConstants = PhysicalConstants {
        mu_earth: 398_600.441_8,
        earth_radius: 6371.0,
        earth_rotation_rate: 7.292_115_9e-5,
    };
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self::EARTH
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TleLine {
    One,
    Two,
}

impl fmt::Display for TleLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TleLine::One => f.write_str("TLE line 1"),
            TleLine::Two => f.write_str("TLE line 2"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TleError {
    #[error("{line}: checksum mismatch (stored {stored}, computed {computed})")]
    ChecksumMismatch { line: TleLine, stored: u8, computed: u8 },
    #[error("{line}: malformed field at columns {start}-{end}: {content:?}")]
    MalformedField {
        line: TleLine,
        start: usize,
        end: usize,
        content: String,
    },
    #[error("{line}: expected line identifier '{expected}', found {found:?}")]
    LineIdentifier {
        line: TleLine,
        expected: char,
        found: String,
    },
    #[error("{line}: {len} columns, at least 69 required")]
    LineTooShort { line: TleLine, len: usize },
    #[error("catalog numbers differ between lines ({line1} vs {line2})")]
    CatalogNumberMismatch { line1: u32, line2: u32 },
    #[error("{field} = {value} is outside its valid range")]
    OutOfRange { field: &'static str, value: f64 },
    #[error("mean motion must be positive, got {0}")]
    NonPositiveMeanMotion(f64),
    #[error("incomplete element set: {0}")]
    IncompleteGroup(String),
}

impl TleError {
    /// Which of the two element lines the error refers to, if either.
    pub fn tle_line(&self) -> Option<TleLine> {
        match self {
            TleError::ChecksumMismatch { line, .. }
            | TleError::MalformedField { line, .. }
            | TleError::LineIdentifier { line, .. }
            | TleError::LineTooShort { line, .. } => Some(*line),
            _ => None,
        }
    }
}

/// One parsed element set. Angles are kept in degrees exactly as printed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TleRecord {
    pub name: String,
    pub catalog_number: u32,
    pub classification: char,
    pub intl_designator: String,
    /// Two-digit year followed by fractional day of year, as printed.
    pub epoch: f64,
    /// First derivative of mean motion (rev/day^2), as printed.
    pub mean_motion_dot: f64,
    /// Second derivative of mean motion (rev/day^3).
    pub mean_motion_ddot: f64,
    /// Drag term (1/earth radii).
    pub bstar: f64,
    pub ephemeris_type: char,
    pub element_set_number: u32,
    pub inclination_deg: f64,
    pub raan_deg: f64,
    pub eccentricity: f64,
    pub arg_perigee_deg: f64,
    pub mean_anomaly_deg: f64,
    /// Mean motion (rev/day).
    pub mean_motion: f64,
    pub rev_at_epoch: u32,
    pub checksum1: u8,
    pub checksum2: u8,
}

/// Whether [`parse_tle_with`] rejects lines whose checksum digit is wrong.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ChecksumPolicy {
    #[default]
    Verify,
    /// Keep the stored digits without checking them.
    Ignore,
}

/// Modulo-10 line checksum over the first 68 columns: digits count at face
/// value, `-` counts as one, everything else as zero.
pub fn checksum(line: &str) -> u8 {
    let sum: u32 = line
        .bytes()
        .take(68)
        .map(|b| match b {
            b'0'..=b'9' => (b - b'0') as u32,
            b'-' => 1,
            _ => 0,
        })
        .sum();
    (sum % 10) as u8
}

/// Parses one element set and verifies both checksums.
pub fn parse_tle(name: Option<&str>, line1: &str, line2: &str) -> Result<TleRecord, TleError> {
    parse_tle_with(name, line1, line2, ChecksumPolicy::Verify)
}

pub fn parse_tle_with(
    name: Option<&str>,
    line1: &str,
    line2: &str,
    policy: ChecksumPolicy,
) -> Result<TleRecord, TleError> {
    let l1 = Columns::new(TleLine::One, line1)?;
    let l2 = Columns::new(TleLine::Two, line2)?;
    l1.expect_identifier('1')?;
    l2.expect_identifier('2')?;

    let checksum1 = l1.digit(69)?;
    let checksum2 = l2.digit(69)?;
    if policy == ChecksumPolicy::Verify {
        for (line, text, stored) in [(TleLine::One, line1, checksum1), (TleLine::Two, line2, checksum2)] {
            let computed = checksum(text);
            if computed != stored {
                return Err(TleError::ChecksumMismatch { line, stored, computed });
            }
        }
    }

    let catalog_number: u32 = l1.parse(3, 7)?;
    let catalog2: u32 = l2.parse(3, 7)?;
    if catalog_number != catalog2 {
        return Err(TleError::CatalogNumberMismatch {
            line1: catalog_number,
            line2: catalog2,
        });
    }

    let record = TleRecord {
        name: name
            .map(str::trim)
            .filter(|n| !n.is_empty())
            .map(|n| n.strip_prefix("0 ").unwrap_or(n).to_string())
            .unwrap_or_else(|| catalog_number.to_string()),
        catalog_number,
        classification: l1.char_at(8),
        intl_designator: l1.text(10, 17).trim().to_string(),
        epoch: l1.parse(19, 32)?,
        mean_motion_dot: l1.parse(34, 43)?,
        mean_motion_ddot: l1.implied_exponent(45, 52)?,
        bstar: l1.implied_exponent(54, 61)?,
        ephemeris_type: l1.char_at(63),
        element_set_number: l1.parse_or_zero(65, 68)?,
        inclination_deg: l2.parse(9, 16)?,
        raan_deg: l2.parse(18, 25)?,
        eccentricity: l2.implied_decimal(27, 33)?,
        arg_perigee_deg: l2.parse(35, 42)?,
        mean_anomaly_deg: l2.parse(44, 51)?,
        mean_motion: l2.parse(53, 63)?,
        rev_at_epoch: l2.parse_or_zero(64, 68)?,
        checksum1,
        checksum2,
    };
    record.validate()?;
    Ok(record)
}

impl TleRecord {
    fn validate(&self) -> Result<(), TleError> {
        let checks: [(&'static str, f64, bool); 6] = [
            (
                "eccentricity",
                self.eccentricity,
                (0.0..1.0).contains(&self.eccentricity),
            ),
            (
                "inclination_deg",
                self.inclination_deg,
                (0.0..=180.0).contains(&self.inclination_deg),
            ),
            ("raan_deg", self.raan_deg, (0.0..360.0).contains(&self.raan_deg)),
            (
                "arg_perigee_deg",
                self.arg_perigee_deg,
                (0.0..360.0).contains(&self.arg_perigee_deg),
            ),
            (
                "mean_anomaly_deg",
                self.mean_anomaly_deg,
                (0.0..360.0).contains(&self.mean_anomaly_deg),
            ),
            ("mean_motion", self.mean_motion, self.mean_motion > 0.0),
        ];
        match checks.into_iter().find(|(_, _, ok)| !ok) {
            Some((field, value, _)) => Err(TleError::OutOfRange { field, value }),
            None => Ok(()),
        }
    }

    /// Re-encodes the record in the fixed-column layout with freshly computed
    /// checksums.
    pub fn to_lines(&self) -> (String, String) {
        let mut line1 = format!(
            "1 {:05}{} {:<8} {:014.8} {} {} {} {} {:>4}",
            self.catalog_number,
            self.classification,
            self.intl_designator,
            self.epoch,
            format_derivative(self.mean_motion_dot),
            format_implied_exponent(self.mean_motion_ddot),
            format_implied_exponent(self.bstar),
            self.ephemeris_type,
            self.element_set_number,
        );
        let ecc = (self.eccentricity * 1e7).round() as u64;
        let mut line2 = format!(
            "2 {:05} {:8.4} {:8.4} {:07} {:8.4} {:8.4} {:11.8}{:5}",
            self.catalog_number,
            self.inclination_deg,
            self.raan_deg,
            ecc,
            self.arg_perigee_deg,
            self.mean_anomaly_deg,
            self.mean_motion,
            self.rev_at_epoch % 100_000,
        );
        let c1 = checksum(&line1);
        let c2 = checksum(&line2);
        line1.push(char::from(b'0' + c1));
        line2.push(char::from(b'0' + c2));
        (line1, line2)
    }
}

/// `s.ddddddd` with a leading sign column and the `0` dropped.
fn format_derivative(value: f64) -> String {
    let sign = if value < 0.0 { '-' } else { ' ' };
    let digits = format!("{:.8}", value.abs());
    format!("{sign}{}", digits.trim_start_matches('0'))
}

/// Encodes `value` as `smmmmmSe`, i.e. `0.mmmmm * 10^(Se)`.
fn format_implied_exponent(value: f64) -> String {
    if value == 0.0 {
        return " 00000+0".to_string();
    }
    let sign = if value < 0.0 { '-' } else { ' ' };
    let magnitude = value.abs();
    let mut exponent = magnitude.log10().floor() as i32 + 1;
    let mut mantissa = (magnitude / 10f64.powi(exponent) * 1e5).round() as u64;
    if mantissa >= 100_000 {
        mantissa /= 10;
        exponent += 1;
    }
    let exp_sign = if exponent < 0 { '-' } else { '+' };
    format!("{sign}{mantissa:05}{exp_sign}{}", exponent.unsigned_abs())
}

/// Column accessor for one TLE line.
struct Columns<'a> {
    line: TleLine,
    text: &'a str,
}

impl<'a> Columns<'a> {
    fn new(line: TleLine, text: &'a str) -> Result<Self, TleError> {
        let text = text.trim_end_matches(['\r', '\n']);
        if !text.is_ascii() {
            return Err(TleError::MalformedField {
                line,
                start: 1,
                end: text.chars().count(),
                content: text.to_string(),
            });
        }
        if text.len() < 69 {
            return Err(TleError::LineTooShort { line, len: text.len() });
        }
        Ok(Self { line, text })
    }

    fn expect_identifier(&self, expected: char) -> Result<(), TleError> {
        if self.text.starts_with(expected) && self.char_at(2) == ' ' {
            Ok(())
        } else {
            Err(TleError::LineIdentifier {
                line: self.line,
                expected,
                found: self.text(1, 2).to_string(),
            })
        }
    }

    fn text(&self, start: usize, end: usize) -> &'a str {
        &self.text[start - 1..end]
    }

    fn char_at(&self, column: usize) -> char {
        self.text.as_bytes()[column - 1] as char
    }

    fn malformed(&self, start: usize, end: usize) -> TleError {
        TleError::MalformedField {
            line: self.line,
            start,
            end,
            content: self.text(start, end).to_string(),
        }
    }

    fn digit(&self, column: usize) -> Result<u8, TleError> {
        match self.char_at(column) {
            c @ '0'..='9' => Ok(c as u8 - b'0'),
            _ => Err(self.malformed(column, column)),
        }
    }

    fn parse<T: std::str::FromStr>(&self, start: usize, end: usize) -> Result<T, TleError> {
        self.text(start, end)
            .trim()
            .parse()
            .map_err(|_| self.malformed(start, end))
    }

    fn parse_or_zero(&self, start: usize, end: usize) -> Result<u32, TleError> {
        if self.text(start, end).trim().is_empty() {
            Ok(0)
        } else {
            self.parse(start, end)
        }
    }

    /// Digits with an assumed leading decimal point (`0005197` -> 0.0005197).
    fn implied_decimal(&self, start: usize, end: usize) -> Result<f64, TleError> {
        let field = self.text(start, end).trim();
        if field.is_empty() || !field.bytes().all(|b| b.is_ascii_digit()) {
            return Err(self.malformed(start, end));
        }
        format!("0.{field}").parse().map_err(|_| self.malformed(start, end))
    }

    /// `smmmmmSe` fields (`17465-3` -> 0.17465e-3).
    fn implied_exponent(&self, start: usize, end: usize) -> Result<f64, TleError> {
        let field = self.text(start, end).trim();
        let bytes = field.as_bytes();
        if bytes.len() < 3 {
            return Err(self.malformed(start, end));
        }
        let (exp_part, mantissa_part) = (&field[field.len() - 2..], &field[..field.len() - 2]);
        let (negative, digits) = match mantissa_part.as_bytes().first() {
            Some(b'-') => (true, &mantissa_part[1..]),
            Some(b'+') => (false, &mantissa_part[1..]),
            _ => (false, mantissa_part),
        };
        let exp_ok = matches!(exp_part.as_bytes()[0], b'+' | b'-') && exp_part.as_bytes()[1].is_ascii_digit();
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) || !exp_ok {
            return Err(self.malformed(start, end));
        }
        let value: f64 = format!("0.{digits}e{exp_part}")
            .parse()
            .map_err(|_| self.malformed(start, end))?;
        Ok(if negative { -value } else { value })
    }
}

/// Semi-major axis (km) for a mean motion in rev/day: `a = (mu / n^2)^(1/3)`
/// with `n` in rad/s.
pub fn mean_motion_to_sma(mean_motion: f64, constants: &PhysicalConstants) -> Result<f64, TleError> {
    if mean_motion.is_nan() || mean_motion <= 0.0 {
        return Err(TleError::NonPositiveMeanMotion(mean_motion));
    }
    let n = mean_motion * 2.0 * PI / SECONDS_PER_DAY;
    Ok((constants.mu_earth / (n * n)).cbrt())
}

/// Inverse of [`mean_motion_to_sma`]: rev/day for a semi-major axis in km.
pub fn sma_to_mean_motion(a: f64, constants: &PhysicalConstants) -> f64 {
    (constants.mu_earth / (a * a * a)).sqrt() * SECONDS_PER_DAY / (2.0 * PI)
}

/// Converts a record into the element set used by the geometry code. The
/// true anomaly is derived from the printed mean anomaly.
pub fn tle_to_elements(record: &TleRecord, constants: &PhysicalConstants) -> Result<KeplerianElements, TleError> {
    let a = mean_motion_to_sma(record.mean_motion, constants)?;
    let e = record.eccentricity;
    let mean_anomaly = record.mean_anomaly_deg.to_radians();
    let nu = orbit::mean_to_true(mean_anomaly, e).rem_euclid(2.0 * PI);
    Ok(KeplerianElements {
        a,
        e,
        i: record.inclination_deg.to_radians(),
        raan: record.raan_deg.to_radians(),
        arg_perigee: record.arg_perigee_deg.to_radians(),
        true_anomaly: nu,
    })
}

/// A rejected element set and the 1-based line number of the offending
/// line (the start of the group when no single line is at fault).
#[derive(Debug, Clone, PartialEq)]
pub struct CatalogIssue {
    pub line: usize,
    pub error: TleError,
}

/// Parsed catalog. Immutable once built.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Catalog {
    pub records: Vec<TleRecord>,
    pub issues: Vec<CatalogIssue>,
}

impl Catalog {
    /// Parses 2- and 3-line groups. Bad groups are reported in `issues` and
    /// skipped.
    pub fn parse(text: &str) -> Catalog {
        let lines: Vec<(usize, &str)> = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim_end()))
            .filter(|(_, l)| !l.is_empty())
            .collect();

        let is_line = |idx: usize, id: &str| lines.get(idx).is_some_and(|(_, l)| l.starts_with(id));
        let mut catalog = Catalog::default();
        let mut i = 0;
        while i < lines.len() {
            let (line_no, first) = lines[i];
            let (name, l1, l2, consumed) = if is_line(i, "1 ") && is_line(i + 1, "2 ") {
                (None, first, lines[i + 1].1, 2)
            } else if is_line(i + 1, "1 ") && is_line(i + 2, "2 ") {
                (Some(first), lines[i + 1].1, lines[i + 2].1, 3)
            } else {
                catalog.issues.push(CatalogIssue {
                    line: line_no,
                    error: TleError::IncompleteGroup(first.to_string()),
                });
                // Skip a whole dangling group so one bad record yields one issue.
                i += 1;
                while i < lines.len()
                    && (is_line(i, "1 ") || is_line(i, "2 "))
                    && !(is_line(i, "1 ") && is_line(i + 1, "2 "))
                {
                    i += 1;
                }
                continue;
            };
            match parse_tle(name, l1, l2) {
                Ok(record) => catalog.records.push(record),
                Err(error) => {
                    let first_data = i + consumed - 2;
                    let line = match error.tle_line() {
                        Some(TleLine::One) => lines[first_data].0,
                        Some(TleLine::Two) => lines[first_data + 1].0,
                        None => line_no,
                    };
                    catalog.issues.push(CatalogIssue { line, error })
                }
            }
            i += consumed;
        }
        catalog
    }

    /// Element sets for every accepted record.
    pub fn elements(&self, constants: &PhysicalConstants) -> Vec<KeplerianElements> {
        self.records
            .iter()
            .filter_map(|r| tle_to_elements(r, constants).ok())
            .collect()
    }

    /// Writes accepted records back out in 3-line form.
    pub fn to_tle_text(&self) -> String {
        let mut out = String::new();
        for record in &self.records {
            let (l1, l2) = record.to_lines();
            out.push_str(&record.name);
            out.push('\n');
            out.push_str(&l1);
            out.push('\n');
            out.push_str(&l2);
            out.push('\n');
        }
        out
    }
}

/// Reads a whole stream and parses it as a catalog. Non-UTF-8 bytes are
/// replaced, so only I/O failures are fatal.
pub fn load_catalog<R: Read>(mut source: R) -> io::Result<Catalog> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    Ok(Catalog::parse(&String::from_utf8_lossy(&bytes)))
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FetchError {
    #[error("invalid url {0:?}")]
    InvalidUrl(String),
    #[error("request timed out")]
    Timeout,
    #[error("server answered with status {0}")]
    NonSuccessStatus(u16),
    #[error("network error: {0}")]
    Network(String),
}

/// Downloads a catalog body with a plain GET. The bytes are returned
/// unparsed; feed them to [`load_catalog`].
pub fn fetch_catalog(url: &str, timeout: Duration) -> Result<Vec<u8>, FetchError> {
    if !(url.starts_with("http://") || url.starts_with("https://")) {
        return Err(FetchError::InvalidUrl(url.to_string()));
    }
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .http_status_as_error(false)
        .build()
        .into();
    let mut response = agent.get(url).call().map_err(|err| match err {
        ureq::Error::Timeout(_) => FetchError::Timeout,
        ureq::Error::BadUri(_) | ureq::Error::Http(_) => FetchError::InvalidUrl(url.to_string()),
        other => FetchError::Network(other.to_string()),
    })?;
    let status = response.status().as_u16();
    if !(200..300).contains(&status) {
        return Err(FetchError::NonSuccessStatus(status));
    }
    response
        .body_mut()
        .with_config()
        .limit(64 * 1024 * 1024)
        .read_to_vec()
        .map_err(|err| match err {
            ureq::Error::Timeout(_) => FetchError::Timeout,
            other => FetchError::Network(other.to_string()),
        })
}
