use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use super::{Network, SimError};
use crate::analytics::mean_and_sample_std;

pub const SPEED_FACTOR_MIN: f64 = 0.5;
pub const SPEED_FACTOR_MAX: f64 = 2.0;
const PROBABILITY_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedFactorModel {
    pub mean: f64,
    pub std: f64,
}

impl Default for SpeedFactorModel {
    fn default() -> Self {
        Self { mean: 1.0, std: 0.0 }
    }
}

impl SpeedFactorModel {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.mean > 0.0) || !(self.std >= 0.0) || !self.mean.is_finite() || !self.std.is_finite() {
            return Err(SimError::Params(format!("speed factor model needs mean > 0 and std >= 0, got {self:?}")));
        }
        Ok(())
    }

    /// Normal draw truncated to [0.5, 2.0] by resampling.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        if self.std == 0.0 {
            return self.mean.clamp(SPEED_FACTOR_MIN, SPEED_FACTOR_MAX);
        }
        let normal = Normal::new(self.mean, self.std).expect("validated model");
        for _ in 0..1000 {
            let x = normal.sample(rng);
            if (SPEED_FACTOR_MIN..=SPEED_FACTOR_MAX).contains(&x) {
                return x;
            }
        }
        self.mean.clamp(SPEED_FACTOR_MIN, SPEED_FACTOR_MAX)
    }
}

/// Mean and sample standard deviation of observed maximum speed over the
/// speed limit.
pub fn fit_speed_factor(max_speeds: &[f64], speed_limit: f64) -> Result<SpeedFactorModel, SimError> {
    if !(speed_limit > 0.0) {
        return Err(SimError::Params(format!("speed limit must be positive, got {speed_limit}")));
    }
    let ratios: Vec<f64> = max_speeds.iter().map(|v| v / speed_limit).collect();
    if ratios.iter().any(|r| !r.is_finite() || *r < 0.0) {
        return Err(SimError::Params("observed speeds must be finite and non-negative".into()));
    }
    let (mean, std) = mean_and_sample_std(&ratios).ok_or_else(|| SimError::Params("no speed observations".into()))?;
    Ok(SpeedFactorModel { mean, std })
}

/// Splits `total` by `probabilities`: floors first, then the leftover units
/// go to the largest fractional parts (earlier entries win ties).
pub fn largest_remainder(total: u64, probabilities: &[f64]) -> Result<Vec<u64>, SimError> {
    if probabilities.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
        return Err(SimError::Demand("probabilities must be finite and non-negative".into()));
    }
    let sum: f64 = probabilities.iter().sum();
    if (sum - 1.0).abs() > PROBABILITY_TOLERANCE {
        return Err(SimError::Demand(format!("probabilities sum to {sum}, expected 1")));
    }
    let quotas: Vec<f64> = probabilities.iter().map(|p| total as f64 * p).collect();
    let mut alloc: Vec<u64> = quotas.iter().map(|q| q.floor() as u64).collect();
    let assigned: u64 = alloc.iter().sum();
    let mut order: Vec<usize> = (0..quotas.len()).collect();
    order.sort_by(|&a, &b| (quotas[b] - quotas[b].floor()).total_cmp(&(quotas[a] - quotas[a].floor())).then(a.cmp(&b)));
    for &i in order.iter().cycle().take(total.saturating_sub(assigned) as usize) {
        alloc[i] += 1;
    }
    Ok(alloc)
}

/// Approach volume to spread over routes by turning probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproachDemand {
    pub total: u64,
    /// Route name to probability; must sum to 1.
    pub probabilities: BTreeMap<String, f64>,
}

/// Vehicles per route name for one interval, given directly, through
/// approach totals with turning probabilities, or both (counts add up).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Demand {
    #[serde(default)]
    pub counts: BTreeMap<String, u64>,
    #[serde(default)]
    pub approaches: BTreeMap<String, ApproachDemand>,
}

impl Demand {
    /// Exact per-route counts after allocating approach totals.
    pub fn route_counts(&self) -> Result<BTreeMap<String, u64>, SimError> {
        let mut out = self.counts.clone();
        for (name, a) in &self.approaches {
            let routes: Vec<&String> = a.probabilities.keys().collect();
            let probs: Vec<f64> = a.probabilities.values().copied().collect();
            let alloc = largest_remainder(a.total, &probs).map_err(|e| SimError::Demand(format!("approach {name:?}: {e}")))?;
            for (r, n) in routes.into_iter().zip(alloc) {
                *out.entry(r.clone()).or_default() += n;
            }
        }
        Ok(out)
    }

    /// Every count multiplied by `factor` and rounded to the nearest vehicle.
    pub fn scaled(&self, factor: f64) -> Demand {
        let scale = |n: u64| (n as f64 * factor).round() as u64;
        Demand {
            counts: self.counts.iter().map(|(k, &n)| (k.clone(), scale(n))).collect(),
            approaches: self
                .approaches
                .iter()
                .map(|(k, a)| (k.clone(), ApproachDemand { total: scale(a.total), probabilities: a.probabilities.clone() }))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArrivalProcess {
    /// Exactly the requested count, departures uniform over the interval.
    #[default]
    Uniform,
    /// Poisson-distributed count with the requested mean, uniform times.
    Poisson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleSpec {
    pub id: String,
    pub depart: f64,
    /// Route name in the network.
    pub route_name: String,
    pub route: Vec<String>,
    pub speed_factor: f64,
}

/// Turns route counts into timed vehicles. Routes are visited in name order
/// and one ChaCha stream supplies departure times and speed factors, so the
/// output depends only on the counts, the seed and the model. Vehicles come
/// back sorted by (depart, id).
pub fn sample_routes(
    demand: &Demand,
    network: &Network,
    horizon: (f64, f64),
    speed: &SpeedFactorModel,
    seed: u64,
    arrivals: ArrivalProcess,
) -> Result<Vec<VehicleSpec>, SimError> {
    let (start, end) = horizon;
    if !(start < end) || !start.is_finite() || !end.is_finite() {
        return Err(SimError::Params(format!("horizon start {start} must precede end {end}")));
    }
    speed.validate()?;
    let counts = demand.route_counts()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (name, &count) in &counts {
        let route = network.routes.get(name).ok_or_else(|| SimError::Demand(format!("unknown route {name:?}")))?;
        let n = match arrivals {
            ArrivalProcess::Uniform => count,
            ArrivalProcess::Poisson if count == 0 => 0,
            ArrivalProcess::Poisson => Poisson::new(count as f64).expect("positive mean").sample(&mut rng) as u64,
        };
        for k in 0..n {
            let depart = rng.random_range(start..end);
            let speed_factor = speed.sample(&mut rng);
            out.push(VehicleSpec { id: format!("{name}.{k}"), depart, route_name: name.clone(), route: route.clone(), speed_factor });
        }
    }
    out.sort_by(|a, b| a.depart.total_cmp(&b.depart).then_with(|| a.id.cmp(&b.id)));
    Ok(out)
}
