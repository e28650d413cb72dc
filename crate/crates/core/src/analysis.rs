//! K-means over product series, forecast accuracy grids and the validity
//! horizon derived from them.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KMeansParams {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for KMeansParams {
    fn default() -> Self {
        Self {
            k: 4,
            seed: 42,
            max_iter: 300,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterResult {
    pub k: usize,
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
    pub iterations: usize,
    /// Inertia after each assignment step, starting with the initial one.
    pub inertia_history: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid per point (ties to the lowest id) and the total squared
/// distance.
fn assign(vectors: &[Vec<f64>], centroids: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let mut inertia = 0.0;
    let labels = vectors
        .iter()
        .map(|v| {
            let (best, d) = centroids
                .iter()
                .enumerate()
                .map(|(c, centroid)| (c, sq_dist(v, centroid)))
                .fold(
                    (0, f64::INFINITY),
                    |acc, cur| if cur.1 < acc.1 { cur } else { acc },
                );
            inertia += d;
            best
        })
        .collect();
    (labels, inertia)
}

/// Lloyd's algorithm from `k` distinct randomly chosen points.
///
/// Stops when assignments no longer change, when no centroid moves by `tol`
/// or more, or after `max_iter` updates. An empty cluster is re-seeded at
/// the point farthest from its own centroid.
pub fn kmeans(vectors: &[Vec<f64>], params: &KMeansParams) -> Result<ClusterResult> {
    let k = params.k;
    if k < 1 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    if k > vectors.len() {
        return Err(Error::Config(format!(
            "k = {k} exceeds the number of vectors ({})",
            vectors.len()
        )));
    }
    let dim = vectors[0].len();
    if vectors.iter().any(|v| v.len() != dim) {
        return Err(Error::Data("all vectors must have the same length".into()));
    }
    if vectors.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::Data("vectors contain non-finite values".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut centroids: Vec<Vec<f64>> = sample(&mut rng, vectors.len(), k)
        .into_iter()
        .map(|i| vectors[i].clone())
        .collect();
    let (mut labels, mut inertia) = assign(vectors, &centroids);
    let mut history = vec![inertia];
    let mut iterations = 0;

    while iterations < params.max_iter {
        iterations += 1;
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (v, &c) in vectors.iter().zip(&labels) {
            counts[c] += 1;
            sums[c].iter_mut().zip(v).for_each(|(s, x)| *s += x);
        }
        let mut next: Vec<Vec<f64>> = sums
            .into_iter()
            .zip(&counts)
            .zip(&centroids)
            .map(|((s, &n), old)| {
                if n == 0 {
                    old.clone()
                } else {
                    s.into_iter().map(|x| x / n as f64).collect()
                }
            })
            .collect();

        let mut reseeded: Vec<usize> = Vec::new();
        for c in (0..k).filter(|&c| counts[c] == 0) {
            let far = vectors
                .iter()
                .enumerate()
                .filter(|(i, _)| !reseeded.contains(i))
                .map(|(i, v)| (i, sq_dist(v, &next[labels[i]])))
                .fold(
                    (usize::MAX, -1.0),
                    |acc, cur| if cur.1 > acc.1 { cur } else { acc },
                );
            if far.0 != usize::MAX {
                next[c] = vectors[far.0].clone();
                reseeded.push(far.0);
            }
        }

        let shift = centroids
            .iter()
            .zip(&next)
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0, f64::max);
        centroids = next;
        let (new_labels, new_inertia) = assign(vectors, &centroids);
        history.push(new_inertia);
        let changed = new_labels != labels;
        labels = new_labels;
        inertia = new_inertia;
        if !changed || shift < params.tol {
            break;
        }
    }

    Ok(ClusterResult {
        k,
        assignments: labels,
        centroids,
        inertia,
        iterations,
        inertia_history: history,
    })
}

/// Z-scores each vector independently; constant vectors become all zeros.
pub fn normalize_vectors(vectors: &[Vec<f64>]) -> Vec<Vec<f64>> {
    vectors
        .iter()
        .map(|v| {
            let n = v.len().max(1) as f64;
            let mean = v.iter().sum::<f64>() / n;
            let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
            v.iter()
                .map(|x| if sd > 0.0 { (x - mean) / sd } else { 0.0 })
                .collect()
        })
        .collect()
}

const EXACT_LIMIT: f64 = 9_007_199_254_740_992.0; // 2^53

/// `round_half_up(100 * min(p, r) / max(p, r))`, with two zeros scoring 100.
pub fn prediction_accuracy(predicted: f64, actual: f64) -> Result<u32> {
    if !(predicted.is_finite() && actual.is_finite()) || predicted < 0.0 || actual < 0.0 {
        return Err(Error::Data(format!(
            "accuracy needs non-negative finite inputs, got ({predicted}, {actual})"
        )));
    }
    let (lo, hi) = if predicted <= actual {
        (predicted, actual)
    } else {
        (actual, predicted)
    };
    if hi == 0.0 {
        return Ok(100);
    }
    let integral = |v: f64| v.fract() == 0.0 && v < EXACT_LIMIT;
    if integral(lo) && integral(hi) {
        let (lo, hi) = (lo as u128, hi as u128);
        return Ok(((200 * lo + hi) / (2 * hi)) as u32);
    }
    Ok((100.0 * lo / hi + 0.5).floor() as u32)
}

/// Length of the leading run of entries at or above `threshold_pct`.
pub fn validity_horizon(avg_accuracy_pct: &[u32], threshold_pct: u32) -> usize {
    avg_accuracy_pct
        .iter()
        .take_while(|&&a| a >= threshold_pct)
        .count()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProductRow {
    pub product: String,
    pub predicted: Vec<u64>,
    pub actual: Vec<u64>,
    pub accuracy_pct: Vec<u32>,
}

/// Per-day column means. Count means are kept in tenths so that rounding to
/// one decimal stays exact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AverageRow {
    pub predicted_tenths: Vec<u64>,
    pub actual_tenths: Vec<u64>,
    pub accuracy_pct: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub threshold_pct: u32,
    pub days: usize,
    pub rows: Vec<ProductRow>,
    pub average: AverageRow,
    pub validity_horizon: usize,
    pub note: String,
}

/// Integer mean rounded half up, scaled by `scale`.
fn mean_half_up(values: impl Iterator<Item = u64>, scale: u64) -> u64 {
    let (n, sum) = values.fold((0u128, 0u128), |(n, s), v| (n + 1, s + v as u128));
    ((2 * sum * scale as u128 + n) / (2 * n)) as u64
}

/// "15.3", or "15" when the tenths digit is zero.
pub fn format_tenths(tenths: u64) -> String {
    if tenths.is_multiple_of(10) {
        (tenths / 10).to_string()
    } else {
        format!("{}.{}", tenths / 10, tenths % 10)
    }
}

pub fn accuracy_table(
    products: &[String],
    predicted: &[Vec<u64>],
    actual: &[Vec<u64>],
    threshold_pct: u32,
) -> Result<AccuracyReport> {
    if products.is_empty() {
        return Err(Error::Data(
            "accuracy table needs at least one product".into(),
        ));
    }
    if predicted.len() != products.len() || actual.len() != products.len() {
        return Err(Error::Data(format!(
            "shape mismatch: {} products, {} predicted rows, {} actual rows",
            products.len(),
            predicted.len(),
            actual.len()
        )));
    }
    let days = predicted[0].len();
    if days == 0 {
        return Err(Error::Data("accuracy table needs at least one day".into()));
    }
    if let Some(i) =
        (0..products.len()).find(|&i| predicted[i].len() != days || actual[i].len() != days)
    {
        return Err(Error::Data(format!(
            "shape mismatch for {}: expected {days} days, got {} predicted and {} actual",
            products[i],
            predicted[i].len(),
            actual[i].len()
        )));
    }

    let rows = products
        .iter()
        .zip(predicted.iter().zip(actual))
        .map(|(product, (p, r))| {
            let accuracy_pct = p
                .iter()
                .zip(r)
                .map(|(&p, &r)| prediction_accuracy(p as f64, r as f64))
                .collect::<Result<Vec<_>>>()?;
            Ok(ProductRow {
                product: product.clone(),
                predicted: p.clone(),
                actual: r.clone(),
                accuracy_pct,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let average = AverageRow {
        predicted_tenths: (0..days)
            .map(|d| mean_half_up(rows.iter().map(|r| r.predicted[d]), 10))
            .collect(),
        actual_tenths: (0..days)
            .map(|d| mean_half_up(rows.iter().map(|r| r.actual[d]), 10))
            .collect(),
        accuracy_pct: (0..days)
            .map(|d| mean_half_up(rows.iter().map(|r| r.accuracy_pct[d] as u64), 1) as u32)
            .collect(),
    };
    let horizon = validity_horizon(&average.accuracy_pct, threshold_pct);
    let mut note = format!(
        "rules extended by forecasting stay usable for {horizon} leading day(s) with average accuracy >= {threshold_pct}%"
    );
    if horizon < days {
        note.push_str(&format!(
            "; day {} drops to {}%",
            horizon + 1,
            average.accuracy_pct[horizon]
        ));
    }

    Ok(AccuracyReport {
        threshold_pct,
        days,
        rows,
        average,
        validity_horizon: horizon,
        note,
    })
}

impl AccuracyReport {
    /// Tab-separated grid: one `p r pr` triple per day for each product, then
    /// the average row.
    pub fn render_table(&self) -> String {
        let mut out = String::from("product");
        for d in 1..=self.days {
            out.push_str(&format!("\tp{d}\tr{d}\tpr{d}"));
        }
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.product);
            for d in 0..self.days {
                out.push_str(&format!(
                    "\t{}\t{}\t{}%",
                    row.predicted[d], row.actual[d], row.accuracy_pct[d]
                ));
            }
            out.push('\n');
        }
        out.push_str("Average");
        for d in 0..self.days {
            out.push_str(&format!(
                "\t{}\t{}\t{}%",
                format_tenths(self.average.predicted_tenths[d]),
                format_tenths(self.average.actual_tenths[d]),
                self.average.accuracy_pct[d]
            ));
        }
        out.push('\n');
        out
    }
}
