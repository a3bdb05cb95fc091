//! In-memory journey representation shared by ingestion, clipping and
//! analytics. Positions are planar (meters in the regional projection); the
//! WGS84 form only exists at file boundaries.

use serde::{Deserialize, Serialize};

use crate::geo::PlanarPoint;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Ignition {
    On,
    Off,
    #[default]
    Unknown,
}

impl std::str::FromStr for Ignition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "on" | "1" | "true" => Ok(Ignition::On),
            "off" | "0" | "false" => Ok(Ignition::Off),
            "" | "unknown" | "na" => Ok(Ignition::Unknown),
            other => Err(format!("unrecognised ignition value {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    /// Seconds since the Unix epoch.
    pub t: f64,
    pub pos: PlanarPoint,
    /// Meters per second, when reported or reconstructed.
    pub speed: Option<f64>,
    #[serde(default)]
    pub ignition: Ignition,
}

impl Sample {
    pub fn new(t: f64, x: f64, y: f64, speed: f64) -> Self {
        Self {
            t,
            pos: PlanarPoint::new(x, y),
            speed: Some(speed),
            ignition: Ignition::On,
        }
    }

    pub fn speed_or_zero(&self) -> f64 {
        self.speed.unwrap_or(0.0)
    }
}

/// Time-ordered samples of one vehicle trip, or a clipped fragment of one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Journey {
    pub id: String,
    /// 0 for a raw journey, 1.. for clip fragments.
    #[serde(default)]
    pub part: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_id: Option<String>,
    pub samples: Vec<Sample>,
}

impl Journey {
    pub fn new(id: impl Into<String>, samples: Vec<Sample>) -> Self {
        Self {
            id: id.into(),
            part: 0,
            mask_id: None,
            samples,
        }
    }

    pub fn start_time(&self) -> Option<f64> {
        self.samples.first().map(|s| s.t)
    }

    pub fn duration(&self) -> f64 {
        match (self.samples.first(), self.samples.last()) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => 0.0,
        }
    }

    pub fn path_length(&self) -> f64 {
        self.samples.windows(2).map(|w| w[0].pos.distance(&w[1].pos)).sum()
    }

    pub fn is_time_sorted(&self) -> bool {
        self.samples.windows(2).all(|w| w[0].t < w[1].t)
    }

    /// True when any inter-sample gap exceeds `max_gap` seconds.
    pub fn is_gapped(&self, max_gap: f64) -> bool {
        self.samples.windows(2).any(|w| w[1].t - w[0].t > max_gap)
    }

    pub fn has_speeds(&self) -> bool {
        self.samples.iter().all(|s| s.speed.is_some())
    }

    /// Fills absent speeds from segment distance over elapsed time, assigned
    /// to the later sample. The first sample takes the second's speed.
    pub fn fill_missing_speeds(&mut self) {
        let n = self.samples.len();
        if n == 0 {
            return;
        }
        if n == 1 {
            self.samples[0].speed.get_or_insert(0.0);
            return;
        }
        for i in 1..n {
            if self.samples[i].speed.is_none() {
                let (a, b) = (&self.samples[i - 1], &self.samples[i]);
                let dt = b.t - a.t;
                let v = if dt > 0.0 { a.pos.distance(&b.pos) / dt } else { 0.0 };
                self.samples[i].speed = Some(v);
            }
        }
        if self.samples[0].speed.is_none() {
            self.samples[0].speed = self.samples[1].speed;
        }
    }

    /// Sort key used wherever journeys are folded deterministically.
    pub fn key(&self) -> (&str, Option<&str>, u32) {
        (self.id.as_str(), self.mask_id.as_deref(), self.part)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_speeds_reconstructed() {
        let mut j = Journey::new(
            "a",
            vec![
                Sample { t: 0.0, pos: PlanarPoint::new(0.0, 0.0), speed: None, ignition: Ignition::On },
                Sample { t: 3.0, pos: PlanarPoint::new(30.0, 0.0), speed: None, ignition: Ignition::On },
                Sample { t: 6.0, pos: PlanarPoint::new(30.0, 40.0), speed: Some(7.0), ignition: Ignition::On },
                Sample { t: 8.0, pos: PlanarPoint::new(30.0, 50.0), speed: None, ignition: Ignition::On },
            ],
        );
        j.fill_missing_speeds();
        let v: Vec<f64> = j.samples.iter().map(|s| s.speed.unwrap()).collect();
        assert_eq!(v, vec![10.0, 10.0, 7.0, 5.0]);
    }

    #[test]
    fn gap_flag() {
        let j = Journey::new("g", vec![Sample::new(0.0, 0.0, 0.0, 1.0), Sample::new(31.0, 1.0, 0.0, 1.0)]);
        assert!(j.is_gapped(30.0));
        assert!(!j.is_gapped(31.0));
    }

    #[test]
    fn ignition_parsing() {
        assert_eq!("ON".parse::<Ignition>(), Ok(Ignition::On));
        assert_eq!("".parse::<Ignition>(), Ok(Ignition::Unknown));
        assert!("maybe".parse::<Ignition>().is_err());
    }
}
