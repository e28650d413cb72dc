//! Shared fixtures and brute-force oracles for the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use basketlab::forecast::InstanceTable;
use basketlab::ingest::{Basket, BasketDataset, DailySeries, ItemCatalog};
use chrono::{Days, NaiveDate};
use rand::Rng;

pub fn day(offset: u64) -> NaiveDate {
    NaiveDate::from_ymd_opt(2014, 1, 1).unwrap() + Days::new(offset)
}

pub fn catalog(n: usize) -> ItemCatalog {
    ItemCatalog::from_codes((0..n).map(|i| format!("i{i:02}"))).unwrap()
}

pub fn dataset(rows: &[Vec<usize>], n_items: usize) -> BasketDataset {
    BasketDataset {
        baskets: rows
            .iter()
            .map(|r| {
                let mut items = r.clone();
                items.sort_unstable();
                items.dedup();
                Basket {
                    date: day(0),
                    items,
                }
            })
            .collect(),
        catalog: catalog(n_items),
    }
}

/// Baskets whose items are drawn independently with per-item densities.
pub fn random_dataset<R: Rng>(rng: &mut R, max_items: usize, max_baskets: usize) -> BasketDataset {
    let n_items = rng.random_range(1..=max_items);
    let n_baskets = rng.random_range(1..=max_baskets);
    let density: Vec<f64> = (0..n_items).map(|_| rng.random_range(0.05..0.8)).collect();
    let rows: Vec<Vec<usize>> = (0..n_baskets)
        .map(|_| {
            (0..n_items)
                .filter(|&i| rng.random::<f64>() < density[i])
                .collect()
        })
        .collect();
    dataset(&rows, n_items)
}

pub fn series(columns: &[Vec<u64>]) -> DailySeries {
    let len = columns[0].len();
    DailySeries {
        days: (0..len as u64).map(day).collect(),
        totals: columns.to_vec(),
        catalog: catalog(columns.len()),
    }
}

fn mask_of(items: &[usize]) -> u64 {
    items.iter().fold(0u64, |m, &i| m | (1 << i))
}

fn items_of(mask: u64) -> Vec<usize> {
    (0..64).filter(|i| mask & (1 << i) != 0).collect()
}

/// Every itemset of at most `max_size` items with at least `threshold`
/// supporting baskets, found by enumerating all subsets of the catalog.
pub fn brute_frequent(
    data: &BasketDataset,
    threshold: u64,
    max_size: usize,
) -> BTreeMap<Vec<usize>, u64> {
    let n = data.catalog.len();
    assert!(n <= 20, "enumeration oracle is for small catalogs");
    let baskets: Vec<u64> = data.baskets.iter().map(|b| mask_of(&b.items)).collect();
    let mut out = BTreeMap::new();
    for set in 1u64..(1 << n) {
        if set.count_ones() as usize > max_size {
            continue;
        }
        let count = baskets.iter().filter(|&&b| b & set == set).count() as u64;
        if count >= threshold {
            out.insert(items_of(set), count);
        }
    }
    out
}

/// (antecedent, consequent, joint count, antecedent count) for every rule
/// over the brute-force frequent itemsets passing the confidence gate.
pub fn brute_rules(
    frequent: &BTreeMap<Vec<usize>, u64>,
    min_confidence: f64,
) -> Vec<(Vec<usize>, Vec<usize>, u64, u64)> {
    let mut out = Vec::new();
    for (set, &joint) in frequent.iter().filter(|(s, _)| s.len() >= 2) {
        let full = mask_of(set);
        let mut sub = (full - 1) & full;
        while sub != 0 {
            let ante = items_of(sub);
            let ante_count = frequent[&ante];
            if joint as f64 / ante_count as f64 >= min_confidence {
                out.push((ante, items_of(full & !sub), joint, ante_count));
            }
            sub = (sub - 1) & full;
        }
    }
    out.sort();
    out
}

/// Smallest count `c` with `c / total >= fraction`, searched directly.
pub fn brute_threshold(fraction: f64, total: usize) -> u64 {
    (1..=total as u64)
        .find(|&c| c as f64 / total as f64 >= fraction - 1e-12)
        .unwrap_or(total as u64 + 1)
}

fn two_pass_sd(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / values.len() as f64).sqrt()
}

/// SDR of splitting the whole table on `feature <= threshold`, or `None`
/// when a side has fewer than `min_child` rows.
pub fn split_sdr(
    table: &InstanceTable,
    feature: usize,
    threshold: f64,
    min_child: usize,
) -> Option<f64> {
    let ys: Vec<f64> = table.rows.iter().map(|r| r.target).collect();
    let (l, r): (Vec<f64>, Vec<f64>) = table
        .rows
        .iter()
        .map(|row| (row.features[feature] <= threshold, row.target))
        .fold((vec![], vec![]), |(mut l, mut r), (left, y)| {
            if left {
                l.push(y)
            } else {
                r.push(y)
            }
            (l, r)
        });
    if l.len() < min_child || r.len() < min_child {
        return None;
    }
    let n = ys.len() as f64;
    Some(
        two_pass_sd(&ys)
            - l.len() as f64 / n * two_pass_sd(&l)
            - r.len() as f64 / n * two_pass_sd(&r),
    )
}

/// Exhaustive SDR scan: every feature, every midpoint between consecutive
/// distinct values, both sides recomputed from scratch. Returns the best
/// (feature, threshold, sdr), earliest feature and threshold on ties.
pub fn brute_best_split(table: &InstanceTable, min_child: usize) -> Option<(usize, f64, f64)> {
    let ys: Vec<f64> = table.rows.iter().map(|r| r.target).collect();
    let sd = two_pass_sd(&ys);
    let n = ys.len() as f64;
    let mut best: Option<(usize, f64, f64)> = None;
    for f in 0..table.width() {
        let mut xs: Vec<f64> = table.rows.iter().map(|r| r.features[f]).collect();
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        for pair in xs.windows(2) {
            let t = (pair[0] + pair[1]) / 2.0;
            let (left, right): (Vec<_>, Vec<_>) =
                table.rows.iter().partition(|r| r.features[f] <= t);
            if left.len() < min_child || right.len() < min_child {
                continue;
            }
            let l: Vec<f64> = left.iter().map(|r| r.target).collect();
            let r: Vec<f64> = right.iter().map(|r| r.target).collect();
            let sdr =
                sd - l.len() as f64 / n * two_pass_sd(&l) - r.len() as f64 / n * two_pass_sd(&r);
            if sdr > 1e-9 && best.is_none_or(|b| sdr > b.2 + 1e-9) {
                best = Some((f, t, sdr));
            }
        }
    }
    best
}

/// Checks `pct` against 100·lo/hi rounded half up, using only integer
/// comparisons: (2·pct − 1)·hi ≤ 200·lo < (2·pct + 1)·hi.
pub fn accuracy_matches(p: u64, r: u64, pct: u32) -> bool {
    let (lo, hi) = (p.min(r) as u128, p.max(r) as u128);
    if hi == 0 {
        return pct == 100;
    }
    let pct = pct as u128;
    (2 * pct).saturating_sub(1) * hi <= 200 * lo && 200 * lo < (2 * pct + 1) * hi
}
