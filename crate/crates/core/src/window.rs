use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

pub const HOUR_S: f64 = 3600.0;
pub const WEEK_S: f64 = 7.0 * 24.0 * HOUR_S;

/// Half-open time interval `[start, end)` in seconds since the Unix epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub start: f64,
    pub end: f64,
}

impl TimeWindow {
    pub fn new(start: f64, end: f64) -> Result<Self, String> {
        if !start.is_finite() || !end.is_finite() {
            return Err("window bounds must be finite".into());
        }
        if start >= end {
            return Err(format!("window start {start} must be before end {end}"));
        }
        Ok(Self { start, end })
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.start && t < self.end
    }

    pub fn duration(&self) -> f64 {
        self.end - self.start
    }

    /// Same window shifted by `seconds` (negative = earlier).
    pub fn shifted(&self, seconds: f64) -> Self {
        Self { start: self.start + seconds, end: self.end + seconds }
    }

    /// Filesystem-friendly label, e.g. `20240312T170000-20240312T180000`.
    pub fn label(&self) -> String {
        format!("{}-{}", compact(self.start), compact(self.end))
    }
}

fn compact(t: f64) -> String {
    match DateTime::<Utc>::from_timestamp(t.floor() as i64, 0) {
        Some(dt) => dt.format("%Y%m%dT%H%M%S").to_string(),
        None => format!("{t}"),
    }
}

/// Parses either epoch seconds or an RFC 3339 timestamp.
pub fn parse_timestamp(s: &str) -> Result<f64, String> {
    let s = s.trim();
    if let Ok(v) = s.parse::<f64>() {
        if v.is_finite() {
            return Ok(v);
        }
    }
    DateTime::parse_from_rfc3339(s)
        .map(|dt| dt.timestamp() as f64 + f64::from(dt.timestamp_subsec_nanos()) * 1e-9)
        .map_err(|_| format!("unparseable timestamp {s:?}"))
}

impl FromStr for TimeWindow {
    type Err = String;

    /// `start..end`, each side epoch seconds or RFC 3339.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, b) = s.split_once("..").ok_or_else(|| format!("expected start..end, got {s:?}"))?;
        TimeWindow::new(parse_timestamp(a)?, parse_timestamp(b)?)
    }
}

impl fmt::Display for TimeWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.start, self.end)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_both_forms() {
        let w: TimeWindow = "1710262800..2024-03-12T18:00:00Z".parse().unwrap();
        assert_eq!(w.start, 1_710_262_800.0);
        assert_eq!(w.end, 1_710_266_400.0);
        assert_eq!(w.label(), "20240312T170000-20240312T180000");
        assert!("5..5".parse::<TimeWindow>().is_err());
        assert!("garbage".parse::<TimeWindow>().is_err());
    }

    #[test]
    fn half_open() {
        let w = TimeWindow::new(15.0, 30.0).unwrap();
        assert!(w.contains(15.0));
        assert!(!w.contains(30.0));
    }
}
