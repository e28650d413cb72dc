//! Raw receipts to item-quantity tables, baskets and daily series.

use std::collections::{BTreeMap, HashMap};
use std::io::Read;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordered set of item codes. Positions are stable for a pipeline run and
/// double as the tie-breaker wherever items are ranked.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ItemCatalog {
    items: Vec<String>,
    index: HashMap<String, usize>,
}

impl ItemCatalog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a catalog from codes in order, rejecting duplicates.
    pub fn from_codes<I, S>(codes: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut catalog = Self::new();
        for code in codes {
            let code = code.into();
            if catalog.index.contains_key(&code) {
                return Err(Error::Data(format!("duplicate item code {code:?}")));
            }
            catalog.intern(&code);
        }
        Ok(catalog)
    }

    /// Returns the index of `code`, appending it if unseen.
    pub fn intern(&mut self, code: &str) -> usize {
        if let Some(&i) = self.index.get(code) {
            return i;
        }
        let i = self.items.len();
        self.items.push(code.to_owned());
        self.index.insert(code.to_owned(), i);
        i
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn code(&self, index: usize) -> &str {
        &self.items[index]
    }

    pub fn index_of(&self, code: &str) -> Option<usize> {
        self.index.get(code).copied()
    }

    pub fn codes(&self) -> &[String] {
        &self.items
    }

    /// Resolves a list of codes, failing on the first unknown one.
    pub fn resolve<S: AsRef<str>>(&self, codes: &[S]) -> Result<Vec<usize>> {
        codes
            .iter()
            .map(|c| {
                let c = c.as_ref();
                self.index_of(c)
                    .ok_or_else(|| Error::Data(format!("unknown item code {c:?}")))
            })
            .collect()
    }
}

/// One receipt: a date and the non-zero quantities bought, sorted by item.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transaction {
    pub date: NaiveDate,
    pub quantities: Vec<(usize, u64)>,
}

impl Transaction {
    pub fn quantity(&self, item: usize) -> u64 {
        self.quantities
            .binary_search_by_key(&item, |&(i, _)| i)
            .map(|pos| self.quantities[pos].1)
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransactionTable {
    pub rows: Vec<Transaction>,
    pub catalog: ItemCatalog,
}

/// A receipt reduced to the set of items present.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Basket {
    pub date: NaiveDate,
    /// Strictly increasing item indices.
    pub items: Vec<usize>,
}

impl Basket {
    pub fn contains_all(&self, itemset: &[usize]) -> bool {
        is_sorted_subset(itemset, &self.items)
    }

    pub fn contains_any(&self, itemset: &[usize]) -> bool {
        itemset.iter().any(|i| self.items.binary_search(i).is_ok())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BasketDataset {
    pub baskets: Vec<Basket>,
    pub catalog: ItemCatalog,
}

impl BasketDataset {
    pub fn len(&self) -> usize {
        self.baskets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.baskets.is_empty()
    }

    /// Number of baskets containing every item of the sorted `itemset`.
    pub fn support_count(&self, itemset: &[usize]) -> u64 {
        self.baskets
            .iter()
            .filter(|b| b.contains_all(itemset))
            .count() as u64
    }

    /// Presence table with quantity 1 for each basket item.
    pub fn to_table(&self) -> TransactionTable {
        TransactionTable {
            rows: self
                .baskets
                .iter()
                .map(|b| Transaction {
                    date: b.date,
                    quantities: b.items.iter().map(|&i| (i, 1)).collect(),
                })
                .collect(),
            catalog: self.catalog.clone(),
        }
    }
}

/// Per-item daily sales totals over a contiguous day range.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DailySeries {
    pub days: Vec<NaiveDate>,
    /// `totals[item][day]`
    pub totals: Vec<Vec<u64>>,
    pub catalog: ItemCatalog,
}

impl DailySeries {
    pub fn len(&self) -> usize {
        self.days.len()
    }

    pub fn is_empty(&self) -> bool {
        self.days.is_empty()
    }

    pub fn item_total(&self, item: usize) -> u64 {
        self.totals[item].iter().sum()
    }

    pub fn values_f64(&self, item: usize) -> Vec<f64> {
        self.totals[item].iter().map(|&v| v as f64).collect()
    }

    /// Copy restricted to the first `days` days.
    pub fn truncated(&self, days: usize) -> DailySeries {
        let days = days.min(self.days.len());
        DailySeries {
            days: self.days[..days].to_vec(),
            totals: self.totals.iter().map(|t| t[..days].to_vec()).collect(),
            catalog: self.catalog.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    /// One column per item, one row per receipt.
    #[default]
    Wide,
    /// One row per (receipt, item, quantity).
    Long,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestConfig {
    pub format: InputFormat,
    pub date_col: String,
    /// Required for the long format. In the wide format it is excluded
    /// from the item columns when present.
    pub receipt_col: Option<String>,
    pub item_col: String,
    pub qty_col: String,
    pub delimiter: char,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            format: InputFormat::Wide,
            date_col: "date".into(),
            receipt_col: None,
            item_col: "item".into(),
            qty_col: "qty".into(),
            delimiter: ',',
        }
    }
}

fn column_position(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::Config(format!("input has no column named {name:?}")))
}

fn parse_date(raw: &str, line: u64, column: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(raw.trim(), "%Y-%m-%d").map_err(|e| Error::Row {
        line,
        column: column.to_owned(),
        message: format!("malformed date {raw:?}: {e}"),
    })
}

fn parse_quantity(raw: &str, line: u64, column: &str) -> Result<u64> {
    let raw = raw.trim();
    if raw.is_empty() {
        return Ok(0);
    }
    let err = |message: String| Error::Row {
        line,
        column: column.to_owned(),
        message,
    };
    if let Ok(v) = raw.parse::<i64>() {
        return u64::try_from(v).map_err(|_| err(format!("negative quantity {raw}")));
    }
    match raw.parse::<f64>() {
        Ok(v) if v.is_finite() && v < 0.0 => Err(err(format!("negative quantity {raw}"))),
        Ok(v) if v.is_finite() && v.fract() == 0.0 && v <= u64::MAX as f64 => Ok(v as u64),
        _ => Err(err(format!(
            "quantity {raw:?} is not a non-negative integer"
        ))),
    }
}

fn finish_row(date: NaiveDate, acc: BTreeMap<usize, u64>) -> Transaction {
    Transaction {
        date,
        quantities: acc.into_iter().filter(|&(_, q)| q > 0).collect(),
    }
}

/// Parses delimited text into a transaction table.
///
/// Wide input yields one row per record with the catalog taken from the
/// header. Long input groups records by (receipt, date) in first-appearance
/// order and builds the catalog from distinct item codes in the order seen.
pub fn parse_transactions<R: Read>(source: R, config: &IngestConfig) -> Result<TransactionTable> {
    if !config.delimiter.is_ascii() {
        return Err(Error::Config(format!(
            "delimiter {:?} must be a single ASCII character",
            config.delimiter
        )));
    }
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(config.delimiter as u8)
        .has_headers(true)
        .flexible(false)
        .from_reader(source);
    let headers = reader.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].trim().is_empty()) {
        log::warn!("input is empty; producing an empty table");
        return Ok(TransactionTable {
            rows: Vec::new(),
            catalog: ItemCatalog::new(),
        });
    }

    let table = match config.format {
        InputFormat::Wide => parse_wide(&mut reader, &headers, config)?,
        InputFormat::Long => parse_long(&mut reader, &headers, config)?,
    };
    if table.rows.is_empty() {
        log::warn!("input contains no records; producing an empty table");
    }
    Ok(table)
}

fn parse_wide<R: Read>(
    reader: &mut csv::Reader<R>,
    headers: &csv::StringRecord,
    config: &IngestConfig,
) -> Result<TransactionTable> {
    let date_pos = column_position(headers, &config.date_col)?;
    let receipt_pos = match &config.receipt_col {
        Some(name) => Some(column_position(headers, name)?),
        None => None,
    };
    let item_columns: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != date_pos && Some(i) != receipt_pos)
        .map(|(i, h)| (i, h.trim().to_owned()))
        .collect();
    let catalog = ItemCatalog::from_codes(item_columns.iter().map(|(_, c)| c.clone()))?;

    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let date = parse_date(&record[date_pos], line, &config.date_col)?;
        let mut quantities = Vec::new();
        for (item, (pos, code)) in item_columns.iter().enumerate() {
            let q = parse_quantity(&record[*pos], line, code)?;
            if q > 0 {
                quantities.push((item, q));
            }
        }
        rows.push(Transaction { date, quantities });
    }
    Ok(TransactionTable { rows, catalog })
}

fn parse_long<R: Read>(
    reader: &mut csv::Reader<R>,
    headers: &csv::StringRecord,
    config: &IngestConfig,
) -> Result<TransactionTable> {
    let receipt_col = config
        .receipt_col
        .as_deref()
        .ok_or_else(|| Error::Config("long format requires a receipt column".into()))?;
    let receipt_pos = column_position(headers, receipt_col)?;
    let date_pos = column_position(headers, &config.date_col)?;
    let item_pos = column_position(headers, &config.item_col)?;
    let qty_pos = column_position(headers, &config.qty_col)?;

    let mut catalog = ItemCatalog::new();
    let mut groups: HashMap<(String, NaiveDate), usize> = HashMap::new();
    let mut pending: Vec<(NaiveDate, BTreeMap<usize, u64>)> = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let date = parse_date(&record[date_pos], line, &config.date_col)?;
        let code = record[item_pos].trim();
        if code.is_empty() {
            return Err(Error::Row {
                line,
                column: config.item_col.clone(),
                message: "empty item code".into(),
            });
        }
        let qty = parse_quantity(&record[qty_pos], line, &config.qty_col)?;
        let item = catalog.intern(code);
        let key = (record[receipt_pos].trim().to_owned(), date);
        let slot = *groups.entry(key).or_insert_with(|| {
            pending.push((date, BTreeMap::new()));
            pending.len() - 1
        });
        *pending[slot].1.entry(item).or_insert(0) += qty;
    }
    let rows = pending
        .into_iter()
        .map(|(date, acc)| finish_row(date, acc))
        .collect();
    Ok(TransactionTable { rows, catalog })
}

/// Presence/absence view: a basket holds item j iff its quantity is non-zero.
pub fn binarize(table: &TransactionTable) -> BasketDataset {
    BasketDataset {
        baskets: table
            .rows
            .iter()
            .map(|row| Basket {
                date: row.date,
                items: row
                    .quantities
                    .iter()
                    .filter(|&&(_, q)| q > 0)
                    .map(|&(i, _)| i)
                    .collect(),
            })
            .collect(),
        catalog: table.catalog.clone(),
    }
}

/// Sums quantities per item per day over `[min date, max date]`, zero-filling
/// days without transactions.
pub fn aggregate_daily(table: &TransactionTable) -> Result<DailySeries> {
    let (first, last) = match (
        table.rows.iter().map(|r| r.date).min(),
        table.rows.iter().map(|r| r.date).max(),
    ) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::Data("no transactions to aggregate".into())),
    };
    let span = (last - first).num_days() as usize + 1;
    let days: Vec<NaiveDate> = first.iter_days().take(span).collect();
    let mut totals = vec![vec![0u64; span]; table.catalog.len()];
    for row in &table.rows {
        let d = (row.date - first).num_days() as usize;
        for &(item, q) in &row.quantities {
            totals[item][d] += q;
        }
    }
    Ok(DailySeries {
        days,
        totals,
        catalog: table.catalog.clone(),
    })
}

/// Items ranked by total sales, descending, ties broken by catalog order.
pub fn top_k_items(series: &DailySeries, k: usize) -> Vec<usize> {
    let mut ranked: Vec<(u64, usize)> = (0..series.catalog.len())
        .map(|i| (series.item_total(i), i))
        .collect();
    ranked.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    ranked.into_iter().take(k).map(|(_, i)| i).collect()
}

/// `small ⊆ large` for strictly increasing slices.
pub(crate) fn is_sorted_subset(small: &[usize], large: &[usize]) -> bool {
    if small.len() > large.len() {
        return false;
    }
    let mut it = large.iter();
    'outer: for s in small {
        for l in it.by_ref() {
            if l == s {
                continue 'outer;
            }
            if l > s {
                return false;
            }
        }
        return false;
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn wide(input: &str) -> Result<TransactionTable> {
        parse_transactions(input.as_bytes(), &IngestConfig::default())
    }

    fn long_config() -> IngestConfig {
        IngestConfig {
            format: InputFormat::Long,
            receipt_col: Some("receipt".into()),
            ..IngestConfig::default()
        }
    }

    #[test]
    fn wide_row_maps_fields() {
        let t = wide("date,fkueA,fkueB\n2014-01-05,2,0\n").unwrap();
        assert_eq!(t.catalog.codes(), ["fkueA", "fkueB"]);
        assert_eq!(t.rows.len(), 1);
        assert_eq!(t.rows[0].date, d("2014-01-05"));
        assert_eq!(t.rows[0].quantity(0), 2);
        assert_eq!(t.rows[0].quantity(1), 0);
    }

    #[test]
    fn long_rows_group_by_receipt() {
        let input = "receipt,date,item,qty\n\
                     r1,2014-01-05,fkueA,2\n\
                     r1,2014-01-05,fkueB,1\n\
                     r2,2014-01-05,fkueB,4\n";
        let t = parse_transactions(input.as_bytes(), &long_config()).unwrap();
        assert_eq!(t.catalog.codes(), ["fkueA", "fkueB"]);
        assert_eq!(t.rows.len(), 2);
        assert_eq!(t.rows[0].quantities, vec![(0, 2), (1, 1)]);
        assert_eq!(t.rows[1].quantities, vec![(1, 4)]);
    }

    #[test]
    fn long_same_receipt_different_day_is_separate() {
        let input =
            "receipt,date,item,qty\nr1,2014-01-05,a,1\nr1,2014-01-06,a,1\nr1,2014-01-05,a,3\n";
        let t = parse_transactions(input.as_bytes(), &long_config()).unwrap();
        assert_eq!(t.rows.len(), 2);
        assert_eq!(t.rows[0].quantities, vec![(0, 4)]);
    }

    #[test]
    fn negative_quantity_names_line_and_column() {
        let err = wide("date,fkueA,fkueB\n2014-01-05,1,0\n2014-01-06,0,-1\n").unwrap_err();
        match err {
            Error::Row { line, column, .. } => {
                assert_eq!(line, 3);
                assert_eq!(column, "fkueB");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_date_is_row_error() {
        let err = wide("date,a\n2014-13-40,1\n").unwrap_err();
        assert!(matches!(err, Error::Row { line: 2, .. }), "{err:?}");
    }

    #[test]
    fn fractional_quantity_rejected() {
        assert!(wide("date,a\n2014-01-01,1.5\n").is_err());
        assert_eq!(
            wide("date,a\n2014-01-01,3.0\n").unwrap().rows[0].quantity(0),
            3
        );
    }

    #[test]
    fn empty_input_is_empty_table() {
        let t = wide("").unwrap();
        assert!(t.rows.is_empty());
        let t = wide("date,a,b\n").unwrap();
        assert!(t.rows.is_empty());
        assert_eq!(t.catalog.len(), 2);
    }

    #[test]
    fn long_requires_receipt_column() {
        let cfg = IngestConfig {
            format: InputFormat::Long,
            ..IngestConfig::default()
        };
        let err = parse_transactions("date,item,qty\n".as_bytes(), &cfg).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn duplicate_header_rejected() {
        assert!(wide("date,a,a\n2014-01-01,1,1\n").is_err());
    }

    #[test]
    fn binarize_presence() {
        let t = wide("date,a,b,c\n2014-01-05,3,0,1\n2014-01-05,0,0,0\n").unwrap();
        let b = binarize(&t);
        assert_eq!(b.len(), 2);
        assert_eq!(b.baskets[0].items, vec![0, 2]);
        assert!(b.baskets[1].items.is_empty());
    }

    #[test]
    fn aggregate_sums_and_fills_gaps() {
        let t = wide("date,a,b\n2014-01-01,1,0\n2014-01-01,4,2\n2014-01-02,2,0\n2014-01-04,0,7\n")
            .unwrap();
        let s = aggregate_daily(&t).unwrap();
        assert_eq!(s.days.len(), 4);
        assert_eq!(s.totals[0], vec![5, 2, 0, 0]);
        assert_eq!(s.totals[1], vec![2, 0, 0, 7]);
    }

    #[test]
    fn aggregate_empty_is_error() {
        let t = wide("date,a\n").unwrap();
        let err = aggregate_daily(&t).unwrap_err();
        assert_eq!(err.to_string(), "no transactions to aggregate");
    }

    #[test]
    fn top_k_ranking_and_ties() {
        let t = wide("date,a,b,c,d\n2014-01-01,1,5,5,2\n").unwrap();
        let s = aggregate_daily(&t).unwrap();
        assert_eq!(top_k_items(&s, 2), vec![1, 2]);
        assert_eq!(top_k_items(&s, 10), vec![1, 2, 3, 0]);
    }

    #[test]
    fn sorted_subset() {
        assert!(is_sorted_subset(&[], &[1, 2]));
        assert!(is_sorted_subset(&[1, 3], &[0, 1, 2, 3]));
        assert!(!is_sorted_subset(&[1, 4], &[0, 1, 2, 3]));
        assert!(!is_sorted_subset(&[0], &[]));
    }
}
