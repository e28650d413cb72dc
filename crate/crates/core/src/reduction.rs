//! Target-driven data reduction.
//!
//! Two phases: drop every basket that shares no item with the analysis
//! targets, then drop the attributes that are not analyzed. Baskets that are
//! removed contain no target, so every itemset touching a target keeps its
//! support count exactly.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{Basket, BasketDataset, ItemCatalog};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AttributePolicy {
    /// Keep only the target attributes.
    TargetsOnly,
    /// Keep targets plus every item seen with a target at least
    /// `min_cooccurrence` times.
    #[default]
    #[serde(alias = "cooccur")]
    TargetsPlusCooccurring,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReductionSpec {
    pub targets: BTreeSet<usize>,
    pub attribute_policy: AttributePolicy,
    pub min_cooccurrence: u64,
}

impl ReductionSpec {
    pub fn new(targets: impl IntoIterator<Item = usize>) -> Self {
        Self {
            targets: targets.into_iter().collect(),
            attribute_policy: AttributePolicy::TargetsPlusCooccurring,
            min_cooccurrence: 1,
        }
    }

    pub fn validate(&self, catalog: &ItemCatalog) -> Result<()> {
        if self.targets.is_empty() {
            return Err(Error::Config(
                "reduction needs at least one target item".into(),
            ));
        }
        if let Some(&bad) = self.targets.iter().find(|&&t| t >= catalog.len()) {
            return Err(Error::Config(format!(
                "target index {bad} is not in the catalog"
            )));
        }
        if self.attribute_policy == AttributePolicy::TargetsPlusCooccurring
            && self.min_cooccurrence < 1
        {
            return Err(Error::Config("min_cooccurrence must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReductionStats {
    pub rows_before: usize,
    pub rows_after: usize,
    pub attrs_before: usize,
    pub attrs_after: usize,
}

/// `count[j]` = number of baskets containing `j` and at least one target.
pub fn cooccurrence_counts(data: &BasketDataset, targets: &BTreeSet<usize>) -> Vec<u64> {
    let target_list: Vec<usize> = targets.iter().copied().collect();
    let mut counts = vec![0u64; data.catalog.len()];
    for basket in data.baskets.iter().filter(|b| b.contains_any(&target_list)) {
        for &j in &basket.items {
            counts[j] += 1;
        }
    }
    counts
}

pub fn reduce(
    data: &BasketDataset,
    spec: &ReductionSpec,
) -> Result<(BasketDataset, ReductionStats)> {
    spec.validate(&data.catalog)?;
    let target_list: Vec<usize> = spec.targets.iter().copied().collect();

    let kept_rows: Vec<&Basket> = data
        .baskets
        .iter()
        .filter(|b| b.contains_any(&target_list))
        .collect();
    if kept_rows.is_empty() {
        return Err(Error::Data("reduction removed all instances".into()));
    }

    let keep: Vec<bool> = match spec.attribute_policy {
        AttributePolicy::TargetsOnly => (0..data.catalog.len())
            .map(|j| spec.targets.contains(&j))
            .collect(),
        AttributePolicy::TargetsPlusCooccurring => {
            let counts = cooccurrence_counts(data, &spec.targets);
            counts
                .iter()
                .enumerate()
                .map(|(j, &c)| spec.targets.contains(&j) || c >= spec.min_cooccurrence)
                .collect()
        }
    };

    let mut remap = vec![usize::MAX; data.catalog.len()];
    let mut catalog = ItemCatalog::new();
    for (j, _) in keep.iter().enumerate().filter(|&(_, &k)| k) {
        remap[j] = catalog.intern(data.catalog.code(j));
    }

    let baskets = kept_rows
        .into_iter()
        .map(|b| Basket {
            date: b.date,
            items: b
                .items
                .iter()
                .filter(|&&j| keep[j])
                .map(|&j| remap[j])
                .collect(),
        })
        .collect::<Vec<_>>();

    let stats = ReductionStats {
        rows_before: data.len(),
        rows_after: baskets.len(),
        attrs_before: data.catalog.len(),
        attrs_after: catalog.len(),
    };
    Ok((BasketDataset { baskets, catalog }, stats))
}
