//! Seeded synthetic receipts with planted association rules.

use std::io::Write;
use std::path::Path;

use chrono::{Datelike, Days, NaiveDate};
use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{ItemCatalog, Transaction, TransactionTable};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantedRule {
    pub antecedent: Vec<usize>,
    pub consequent: Vec<usize>,
    /// Chance that a basket holding the whole antecedent gets each
    /// consequent item added. Baskets that miss the draw keep their
    /// independent base draw, so the observed conditional frequency is
    /// `p + (1 - p) * base`.
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub item_count: usize,
    pub basket_count: usize,
    pub day_span: usize,
    pub start_date: NaiveDate,
    pub item_prefix: String,
    /// Per-item presence probability; shorter lists are padded with
    /// `default_probability`.
    pub base_probabilities: Vec<f64>,
    pub default_probability: f64,
    pub planted: Vec<PlantedRule>,
    /// Relative basket volume Monday..Sunday.
    pub weekday_weights: [f64; 7],
    /// Quantities of present items are uniform in `1..=max_quantity`.
    pub max_quantity: u64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            item_count: 20,
            basket_count: 1000,
            day_span: 60,
            start_date: NaiveDate::from_ymd_opt(2014, 1, 1).expect("valid date"),
            item_prefix: "sku".into(),
            base_probabilities: Vec::new(),
            default_probability: 0.05,
            planted: Vec::new(),
            weekday_weights: [1.0; 7],
            max_quantity: 3,
            seed: 42,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.item_count == 0 || self.basket_count == 0 || self.day_span == 0 {
            return bad("item_count, basket_count and day_span must be positive".into());
        }
        if self.base_probabilities.len() > self.item_count {
            return bad("more base probabilities than items".into());
        }
        let prob_ok = |p: f64| (0.0..=1.0).contains(&p);
        if !prob_ok(self.default_probability)
            || !self.base_probabilities.iter().all(|&p| prob_ok(p))
        {
            return bad("item probabilities must lie in [0, 1]".into());
        }
        if self.max_quantity == 0 {
            return bad("max_quantity must be at least 1".into());
        }
        if self
            .weekday_weights
            .iter()
            .any(|w| !(w.is_finite() && *w >= 0.0))
            || self.weekday_weights.iter().sum::<f64>() <= 0.0
        {
            return bad("weekday weights must be non-negative with a positive sum".into());
        }
        for (n, rule) in self.planted.iter().enumerate() {
            if !prob_ok(rule.probability) {
                return bad(format!("planted rule {n}: probability must lie in [0, 1]"));
            }
            if rule.antecedent.is_empty() || rule.consequent.is_empty() {
                return bad(format!(
                    "planted rule {n}: antecedent and consequent must be non-empty"
                ));
            }
            if rule
                .antecedent
                .iter()
                .chain(&rule.consequent)
                .any(|&i| i >= self.item_count)
            {
                return bad(format!("planted rule {n}: item index out of range"));
            }
            if rule.antecedent.iter().any(|a| rule.consequent.contains(a)) {
                return bad(format!(
                    "planted rule {n}: antecedent and consequent overlap"
                ));
            }
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn item_code(&self, item: usize) -> String {
        format!("{}{item:03}", self.item_prefix)
    }

    fn probability(&self, item: usize) -> f64 {
        self.base_probabilities
            .get(item)
            .copied()
            .unwrap_or(self.default_probability)
    }
}

/// Draws the receipts described by `spec`. Identical specs give identical
/// tables; rows come out sorted by date.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<TransactionTable> {
    spec.validate()?;
    let catalog = ItemCatalog::from_codes((0..spec.item_count).map(|i| spec.item_code(i)))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let dates: Vec<NaiveDate> = (0..spec.day_span)
        .map(|d| {
            spec.start_date
                .checked_add_days(Days::new(d as u64))
                .ok_or_else(|| Error::Config("day span runs past the calendar".into()))
        })
        .collect::<Result<_>>()?;
    let day_weights: Vec<f64> = dates
        .iter()
        .map(|d| spec.weekday_weights[d.weekday().num_days_from_monday() as usize])
        .collect();
    let day_dist = WeightedIndex::new(&day_weights)
        .map_err(|e| Error::Config(format!("weekday weights: {e}")))?;
    let probabilities: Vec<f64> = (0..spec.item_count).map(|i| spec.probability(i)).collect();

    let mut rows: Vec<(usize, Transaction)> = Vec::with_capacity(spec.basket_count);
    let mut present = vec![false; spec.item_count];
    for _ in 0..spec.basket_count {
        let day = day_dist.sample(&mut rng);
        for (flag, &p) in present.iter_mut().zip(&probabilities) {
            *flag = rng.random::<f64>() < p;
        }
        for rule in &spec.planted {
            let fires = rule.antecedent.iter().all(|&a| present[a]);
            for &c in &rule.consequent {
                let draw = rng.random::<f64>();
                if fires && draw < rule.probability {
                    present[c] = true;
                }
            }
        }
        let quantities = present
            .iter()
            .enumerate()
            .filter(|&(_, &p)| p)
            .map(|(i, _)| (i, rng.random_range(1..=spec.max_quantity)))
            .collect();
        rows.push((
            day,
            Transaction {
                date: dates[day],
                quantities,
            },
        ));
    }
    rows.sort_by_key(|(day, _)| *day);

    Ok(TransactionTable {
        rows: rows.into_iter().map(|(_, t)| t).collect(),
        catalog,
    })
}

/// Writes `table` in the wide layout: a `date` column followed by one
/// quantity column per catalog item.
pub fn write_wide_csv<W: Write>(table: &TransactionTable, out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    let mut header = vec!["date".to_owned()];
    header.extend(table.catalog.codes().iter().cloned());
    writer.write_record(&header)?;
    let mut record = vec![String::new(); header.len()];
    for row in &table.rows {
        record[0] = row.date.format("%Y-%m-%d").to_string();
        record[1..].iter_mut().for_each(|f| *f = "0".into());
        for &(i, q) in &row.quantities {
            record[i + 1] = q.to_string();
        }
        writer.write_record(&record)?;
    }
    writer
        .flush()
        .map_err(|e| Error::Data(format!("writing csv: {e}")))?;
    Ok(())
}
