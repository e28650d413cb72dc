//! Apriori frequent itemsets, confidence-gated association rules and
//! holdout validation.

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{is_sorted_subset, BasketDataset, ItemCatalog};

pub const DEFAULT_MIN_CONFIDENCE: f64 = 0.70;
pub const DEFAULT_MIN_SUPPORT: f64 = 0.01;
pub const DEFAULT_MAX_ITEMSET_SIZE: usize = 5;

const COUNT_CHUNK: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MinSupport {
    /// Fraction of baskets, in (0, 1].
    Relative(f64),
    /// Basket count, at least 1.
    Absolute(u64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MiningParams {
    pub min_support: MinSupport,
    pub min_confidence: f64,
    pub max_itemset_size: usize,
}

impl Default for MiningParams {
    fn default() -> Self {
        Self {
            min_support: MinSupport::Relative(DEFAULT_MIN_SUPPORT),
            min_confidence: DEFAULT_MIN_CONFIDENCE,
            max_itemset_size: DEFAULT_MAX_ITEMSET_SIZE,
        }
    }
}

impl MiningParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.min_confidence) {
            return Err(Error::Config(format!(
                "min_confidence {} must lie in [0, 1]",
                self.min_confidence
            )));
        }
        if self.max_itemset_size < 1 {
            return Err(Error::Config("max_itemset_size must be at least 1".into()));
        }
        match self.min_support {
            MinSupport::Relative(r) if !(r > 0.0 && r <= 1.0) => Err(Error::Config(format!(
                "relative min_support {r} must lie in (0, 1]"
            ))),
            MinSupport::Absolute(0) => Err(Error::Config(
                "absolute min_support must be at least 1".into(),
            )),
            _ => Ok(()),
        }
    }

    /// Minimum support as a basket count over `total` baskets.
    pub fn support_threshold(&self, total: usize) -> Result<u64> {
        let threshold = match self.min_support {
            MinSupport::Absolute(n) => n,
            MinSupport::Relative(r) => {
                let exact = r * total as f64;
                let nearest = exact.round();
                // absorb representation error such as 0.01 * 300 = 3.0000000000000004
                if (exact - nearest).abs() < 1e-9 {
                    nearest as u64
                } else {
                    exact.ceil() as u64
                }
            }
        };
        if threshold == 0 {
            return Err(Error::Config(format!(
                "min_support resolves to 0 baskets over a dataset of {total}"
            )));
        }
        Ok(threshold)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Itemset {
    /// Strictly increasing item indices.
    pub items: Vec<usize>,
    pub support_count: u64,
}

/// Frequent itemsets grouped by size; `levels[k - 1]` holds the k-itemsets in
/// lexicographic order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrequentItemsets {
    pub levels: Vec<Vec<Itemset>>,
    pub total_baskets: u64,
    pub threshold: u64,
}

impl FrequentItemsets {
    pub fn iter(&self) -> impl Iterator<Item = &Itemset> {
        self.levels.iter().flatten()
    }

    pub fn len(&self) -> usize {
        self.levels.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn support_map(&self) -> HashMap<&[usize], u64> {
        self.iter()
            .map(|s| (s.items.as_slice(), s.support_count))
            .collect()
    }
}

fn count_singletons(data: &BasketDataset) -> Vec<u64> {
    let n_items = data.catalog.len();
    data.baskets
        .par_chunks(COUNT_CHUNK)
        .map(|chunk| {
            let mut counts = vec![0u64; n_items];
            for b in chunk {
                for &i in &b.items {
                    counts[i] += 1;
                }
            }
            counts
        })
        .reduce(
            || vec![0u64; n_items],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        )
}

/// Joins k-itemsets sharing a (k-1)-prefix, then drops any candidate with an
/// infrequent k-subset. `level` must be lexicographically sorted.
fn generate_candidates(level: &[Itemset]) -> Vec<Vec<usize>> {
    let known: HashSet<&[usize]> = level.iter().map(|s| s.items.as_slice()).collect();
    let k = level.first().map_or(0, |s| s.items.len());
    let mut out = Vec::new();
    let mut subset = Vec::with_capacity(k);
    for (i, a) in level.iter().enumerate() {
        for b in &level[i + 1..] {
            if a.items[..k - 1] != b.items[..k - 1] {
                break;
            }
            let mut candidate = a.items.clone();
            candidate.push(b.items[k - 1]);
            // the subsets dropping either of the last two items are a and b
            let all_frequent = (0..k - 1).all(|skip| {
                subset.clear();
                subset.extend(
                    candidate
                        .iter()
                        .enumerate()
                        .filter(|&(p, _)| p != skip)
                        .map(|(_, &x)| x),
                );
                known.contains(subset.as_slice())
            });
            if all_frequent {
                out.push(candidate);
            }
        }
    }
    out
}

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: usize = 1;
    for i in 0..k {
        acc = acc.saturating_mul(n - i) / (i + 1);
    }
    acc
}

/// Calls `f` with every k-combination of `items` (in lexicographic order).
fn for_each_combination(items: &[usize], k: usize, f: &mut impl FnMut(&[usize])) {
    let n = items.len();
    if k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    let mut buf = vec![0usize; k];
    loop {
        for (slot, &i) in buf.iter_mut().zip(&idx) {
            *slot = items[i];
        }
        f(&buf);
        let mut pos = k;
        loop {
            if pos == 0 {
                return;
            }
            pos -= 1;
            if idx[pos] != pos + n - k {
                break;
            }
            if pos == 0 {
                return;
            }
        }
        idx[pos] += 1;
        for j in pos + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

fn count_candidates(data: &BasketDataset, candidates: &[Vec<usize>], k: usize) -> Vec<u64> {
    let lookup: HashMap<&[usize], usize> = candidates
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_slice(), i))
        .collect();
    let n = candidates.len();
    data.baskets
        .par_chunks(COUNT_CHUNK)
        .map(|chunk| {
            let mut counts = vec![0u64; n];
            for basket in chunk.iter().filter(|b| b.items.len() >= k) {
                if binomial(basket.items.len(), k) <= n {
                    for_each_combination(&basket.items, k, &mut |combo| {
                        if let Some(&i) = lookup.get(combo) {
                            counts[i] += 1;
                        }
                    });
                } else {
                    for (i, c) in candidates.iter().enumerate() {
                        if is_sorted_subset(c, &basket.items) {
                            counts[i] += 1;
                        }
                    }
                }
            }
            counts
        })
        .reduce(
            || vec![0u64; n],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        )
}

/// Level-wise Apriori: every itemset of at most `max_itemset_size` items
/// whose support count reaches the resolved threshold.
pub fn frequent_itemsets(data: &BasketDataset, params: &MiningParams) -> Result<FrequentItemsets> {
    params.validate()?;
    if data.is_empty() {
        return Err(Error::Data("cannot mine an empty dataset".into()));
    }
    let threshold = params.support_threshold(data.len())?;

    let singles: Vec<Itemset> = count_singletons(data)
        .into_iter()
        .enumerate()
        .filter(|&(_, c)| c >= threshold)
        .map(|(i, c)| Itemset {
            items: vec![i],
            support_count: c,
        })
        .collect();

    let mut levels = Vec::new();
    let mut current = singles;
    while !current.is_empty() {
        let k = current[0].items.len();
        let next = if k < params.max_itemset_size {
            let candidates = generate_candidates(&current);
            let counts = count_candidates(data, &candidates, k + 1);
            candidates
                .into_iter()
                .zip(counts)
                .filter(|&(_, c)| c >= threshold)
                .map(|(items, support_count)| Itemset {
                    items,
                    support_count,
                })
                .collect()
        } else {
            Vec::new()
        };
        levels.push(current);
        current = next;
    }
    log::debug!(
        "apriori: threshold {threshold}, {} frequent itemsets over {} levels",
        levels.iter().map(Vec::len).sum::<usize>(),
        levels.len()
    );
    Ok(FrequentItemsets {
        levels,
        total_baskets: data.len() as u64,
        threshold,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssociationRule {
    pub antecedent: Itemset,
    pub consequent: Itemset,
    pub joint_support_count: u64,
    pub confidence: f64,
    pub relative_support: f64,
}

/// Orders by confidence (descending, compared as exact fractions), then joint
/// support (descending), then antecedent and consequent lexicographically.
pub fn rule_order(a: &AssociationRule, b: &AssociationRule) -> Ordering {
    let lhs = a.joint_support_count as u128 * b.antecedent.support_count as u128;
    let rhs = b.joint_support_count as u128 * a.antecedent.support_count as u128;
    rhs.cmp(&lhs)
        .then(b.joint_support_count.cmp(&a.joint_support_count))
        .then_with(|| a.antecedent.items.cmp(&b.antecedent.items))
        .then_with(|| a.consequent.items.cmp(&b.consequent.items))
}

pub(crate) fn passes_gate(joint: u64, antecedent: u64, min_confidence: f64) -> bool {
    antecedent > 0 && joint as f64 / antecedent as f64 >= min_confidence
}

/// Emits `A -> S \ A` for every frequent `S` with at least two items and every
/// non-empty proper subset `A` whose confidence reaches the gate.
pub fn generate_rules(
    frequent: &FrequentItemsets,
    total_baskets: u64,
    params: &MiningParams,
) -> Result<Vec<AssociationRule>> {
    params.validate()?;
    if total_baskets == 0 {
        return Err(Error::Data("total basket count must be positive".into()));
    }
    let support = frequent.support_map();
    let lookup = |items: &[usize]| -> Result<u64> {
        support.get(items).copied().ok_or_else(|| {
            Error::Internal(format!("frequent itemset list is missing subset {items:?}"))
        })
    };

    let mut rules = Vec::new();
    for set in frequent.iter().filter(|s| s.items.len() >= 2) {
        let m = set.items.len();
        if m >= usize::BITS as usize {
            return Err(Error::Config(format!(
                "itemset of {m} items is too large for rule generation"
            )));
        }
        for mask in 1..(1usize << m) - 1 {
            let (mut ante, mut cons) = (Vec::new(), Vec::new());
            for (bit, &item) in set.items.iter().enumerate() {
                if mask & (1 << bit) != 0 {
                    ante.push(item);
                } else {
                    cons.push(item);
                }
            }
            let ante_count = lookup(&ante)?;
            let cons_count = lookup(&cons)?;
            if !passes_gate(set.support_count, ante_count, params.min_confidence) {
                continue;
            }
            rules.push(AssociationRule {
                antecedent: Itemset {
                    items: ante,
                    support_count: ante_count,
                },
                consequent: Itemset {
                    items: cons,
                    support_count: cons_count,
                },
                joint_support_count: set.support_count,
                confidence: set.support_count as f64 / ante_count as f64,
                relative_support: set.support_count as f64 / total_baskets as f64,
            });
        }
    }
    rules.sort_by(rule_order);
    Ok(rules)
}

/// Rule keyed by item codes, the form written to `rules.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleRecord {
    pub antecedent: Vec<String>,
    pub consequent: Vec<String>,
    pub support_count: u64,
    pub antecedent_support_count: u64,
    pub relative_support: f64,
    pub confidence: f64,
}

impl RuleRecord {
    pub fn from_rule(rule: &AssociationRule, catalog: &ItemCatalog) -> Self {
        let codes = |items: &[usize]| items.iter().map(|&i| catalog.code(i).to_owned()).collect();
        Self {
            antecedent: codes(&rule.antecedent.items),
            consequent: codes(&rule.consequent.items),
            support_count: rule.joint_support_count,
            antecedent_support_count: rule.antecedent.support_count,
            relative_support: rule.relative_support,
            confidence: rule.confidence,
        }
    }

    pub fn display(&self) -> String {
        format!(
            "{{{}}} -> {{{}}}",
            self.antecedent.join(", "),
            self.consequent.join(", ")
        )
    }
}

pub const REASON_UNSUPPORTED: &str = "antecedent unsupported";
pub const REASON_LOW_CONFIDENCE: &str = "holdout confidence below threshold";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleCheck {
    #[serde(flatten)]
    pub rule: RuleRecord,
    pub holdout_antecedent_count: u64,
    pub holdout_support_count: u64,
    pub holdout_confidence: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleValidation {
    pub min_confidence: f64,
    pub holdout_baskets: u64,
    pub validated: Vec<RuleCheck>,
    pub eliminated: Vec<RuleCheck>,
}

/// Recomputes each rule's confidence on `holdout`, matching items by code.
/// Rules at or above `min_confidence` are validated; the rest, including
/// rules whose antecedent never occurs in the holdout, are eliminated.
pub fn validate_rules(
    rules: &[RuleRecord],
    holdout: &BasketDataset,
    min_confidence: f64,
) -> Result<RuleValidation> {
    if !(0.0..=1.0).contains(&min_confidence) {
        return Err(Error::Config(format!(
            "min_confidence {min_confidence} must lie in [0, 1]"
        )));
    }
    let resolve = |codes: &[String]| -> Option<Vec<usize>> {
        let mut idx = codes
            .iter()
            .map(|c| holdout.catalog.index_of(c))
            .collect::<Option<Vec<_>>>()?;
        idx.sort_unstable();
        idx.dedup();
        Some(idx)
    };

    let checks: Vec<(bool, RuleCheck)> = rules
        .par_iter()
        .map(|rule| {
            let ante = resolve(&rule.antecedent);
            let joint = ante.as_ref().and_then(|a| {
                let mut all = a.clone();
                all.extend(resolve(&rule.consequent)?);
                all.sort_unstable();
                all.dedup();
                Some(all)
            });
            let ante_count = ante.map_or(0, |a| holdout.support_count(&a));
            let joint_count = joint.map_or(0, |j| holdout.support_count(&j));
            let (keep, confidence, reason) = if ante_count == 0 {
                (false, None, Some(REASON_UNSUPPORTED.to_owned()))
            } else {
                let keep = passes_gate(joint_count, ante_count, min_confidence);
                let reason = (!keep).then(|| REASON_LOW_CONFIDENCE.to_owned());
                (keep, Some(joint_count as f64 / ante_count as f64), reason)
            };
            (
                keep,
                RuleCheck {
                    rule: rule.clone(),
                    holdout_antecedent_count: ante_count,
                    holdout_support_count: joint_count,
                    holdout_confidence: confidence,
                    reason,
                },
            )
        })
        .collect();

    let (validated, eliminated): (Vec<_>, Vec<_>) = checks.into_iter().partition(|(keep, _)| *keep);
    Ok(RuleValidation {
        min_confidence,
        holdout_baskets: holdout.len() as u64,
        validated: validated.into_iter().map(|(_, c)| c).collect(),
        eliminated: eliminated.into_iter().map(|(_, c)| c).collect(),
    })
}
