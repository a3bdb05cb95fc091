use serde::{Deserialize, Serialize};

use super::{Cohort, DetectError};

pub const DEFAULT_K: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierScore {
    pub journey_id: String,
    pub cohort: Cohort,
    pub abof: f64,
    pub flagged: bool,
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Indices of the `k` nearest other points, ties broken by index.
fn knn(points: &[Vec<f64>], i: usize, k: usize) -> Vec<usize> {
    let mut d: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(j, p)| {
            let diff = sub(p, &points[i]);
            (dot(&diff, &diff), j)
        })
        .collect();
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    d.truncate(k);
    d.into_iter().map(|(_, j)| j).collect()
}

/// Weighted variance of the distance-weighted angle term over neighbour pairs.
fn abof_of(points: &[Vec<f64>], i: usize, neighbours: &[usize]) -> Option<f64> {
    let a = &points[i];
    let diffs: Vec<(Vec<f64>, f64)> = neighbours
        .iter()
        .map(|&j| {
            let d = sub(&points[j], a);
            let n2 = dot(&d, &d);
            (d, n2)
        })
        .collect();
    let mut terms: Vec<(f64, f64)> = Vec::new();
    for x in 0..diffs.len() {
        for y in x + 1..diffs.len() {
            let (ab, ab2) = &diffs[x];
            let (ac, ac2) = &diffs[y];
            if *ab2 == 0.0 || *ac2 == 0.0 {
                continue;
            }
            terms.push((dot(ab, ac) / (ab2 * ac2), 1.0 / (ab2.sqrt() * ac2.sqrt())));
        }
    }
    if terms.is_empty() {
        return None;
    }
    let sw: f64 = terms.iter().map(|t| t.1).sum();
    let mean = terms.iter().map(|(v, w)| w * v).sum::<f64>() / sw;
    Some(terms.iter().map(|(v, w)| w * (v - mean).powi(2)).sum::<f64>() / sw)
}

/// FastABOD: each point's angle-based outlier factor over its `k` nearest
/// neighbours. Lower means more outlying. `k` above n − 1 is clamped.
pub fn abof_scores(points: &[Vec<f64>], k: usize) -> Result<Vec<f64>, DetectError> {
    let n = points.len();
    if n < 3 {
        return Err(DetectError::TooFewVectors { need: 3, got: n });
    }
    if k < 2 {
        return Err(DetectError::BadK(k));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(DetectError::DimensionMismatch);
    }
    let k = if k > n - 1 {
        log::warn!("k = {k} exceeds n - 1 = {}; clamping", n - 1);
        n - 1
    } else {
        k
    };
    (0..n)
        .map(|i| abof_of(points, i, &knn(points, i, k)).ok_or(DetectError::AllPairsDegenerate(i)))
        .collect()
}

/// Flags the ⌊contamination · n⌋ lowest-scoring current-cohort entries, n
/// being the number of current entries. Ties go to the smaller journey id.
pub fn flag_outliers(scores: &mut [OutlierScore], contamination: f64) -> Result<usize, DetectError> {
    if !(contamination > 0.0 && contamination < 0.5) {
        return Err(DetectError::BadContamination(contamination));
    }
    let mut current: Vec<usize> = (0..scores.len()).filter(|&i| scores[i].cohort == Cohort::Current).collect();
    let m = (contamination * current.len() as f64 + 1e-9).floor() as usize;
    current.sort_by(|&a, &b| {
        scores[a].abof.total_cmp(&scores[b].abof).then_with(|| scores[a].journey_id.cmp(&scores[b].journey_id))
    });
    for s in scores.iter_mut() {
        s.flagged = false;
    }
    for &i in current.iter().take(m) {
        scores[i].flagged = true;
    }
    Ok(m)
}
