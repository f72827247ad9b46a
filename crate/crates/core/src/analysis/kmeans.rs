use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{FateError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KMeansResult {
    pub k: usize,
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    /// Sum of squared distances after the initial assignment and after each iteration.
    pub objective_history: Vec<f64>,
    pub iterations: usize,
    pub seed: u64,
}

impl KMeansResult {
    pub fn objective(&self) -> f64 {
        *self.objective_history.last().expect("at least one entry")
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid per point, lowest index on ties, plus the objective.
fn assign(points: &[Vec<f64>], centroids: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let mut total = 0.0;
    let labels = points
        .iter()
        .map(|p| {
            let (best, d) = centroids
                .iter()
                .enumerate()
                .map(|(i, c)| (i, sq_dist(p, c)))
                .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
            total += d;
            best
        })
        .collect();
    (labels, total)
}

fn validate(points: &[Vec<f64>], k: usize, max_iter: usize, tol: f64) -> Result<()> {
    if k == 0 || k > points.len() {
        return Err(FateError::contract(format!("k = {k} must be in 1..={}", points.len())));
    }
    if max_iter == 0 || !(tol >= 0.0) {
        return Err(FateError::contract("max_iter must be ≥ 1 and tol ≥ 0"));
    }
    let d = points[0].len();
    if d == 0 || points.iter().any(|p| p.len() != d) {
        return Err(FateError::contract("points must share a positive dimension"));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(FateError::numeric("kmeans input"));
    }
    Ok(())
}

/// Lloyd's algorithm from `k` distinct seed-sampled points. An empty cluster
/// is re-seeded with the point farthest from its current centroid.
pub fn kmeans(points: &[Vec<f64>], k: usize, max_iter: usize, tol: f64, seed: u64) -> Result<KMeansResult> {
    validate(points, k, max_iter, tol)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids: Vec<Vec<f64>> = rand::seq::index::sample(&mut rng, points.len(), k)
        .into_iter()
        .map(|i| points[i].clone())
        .collect();
    let (mut labels, mut obj) = assign(points, &centroids);
    let mut history = vec![obj];
    let mut iterations = 0;
    let d = points[0].len();
    for _ in 0..max_iter {
        iterations += 1;
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            sums[l].iter_mut().zip(p).for_each(|(s, x)| *s += x);
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        let mut taken = Vec::new();
        for c in (0..k).filter(|&c| counts[c] == 0) {
            let far = (0..points.len())
                .filter(|i| !taken.contains(i))
                .map(|i| (i, sq_dist(&points[i], &centroids[labels[i]])))
                .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc })
                .0;
            log::debug!("kmeans: cluster {c} empty, re-seeded with point {far}");
            centroids[c] = points[far].clone();
            taken.push(far);
        }
        let (new_labels, new_obj) = assign(points, &centroids);
        history.push(new_obj);
        labels = new_labels;
        let improvement = obj - new_obj;
        obj = new_obj;
        if improvement <= tol {
            break;
        }
    }
    Ok(KMeansResult {
        k,
        centroids,
        assignments: labels,
        objective_history: history,
        iterations,
        seed,
    })
}

/// Lowest-objective result over `restarts` runs seeded `seed, seed+1, …`.
pub fn kmeans_best_of(
    points: &[Vec<f64>],
    k: usize,
    max_iter: usize,
    tol: f64,
    seed: u64,
    restarts: usize,
) -> Result<KMeansResult> {
    let mut best: Option<KMeansResult> = None;
    for r in 0..restarts.max(1) as u64 {
        let res = kmeans(points, k, max_iter, tol, seed.wrapping_add(r))?;
        if best.as_ref().is_none_or(|b| res.objective() < b.objective()) {
            best = Some(res);
        }
    }
    Ok(best.expect("at least one restart"))
}
