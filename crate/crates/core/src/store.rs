//! The `.bl` intermediate dataset file.
//!
//! Line-oriented UTF-8 text:
//!
//! ```text
//! basketlab-dataset 1
//! kind quantities            (or: kind baskets)
//! items <N>
//! <item code>                (N lines, catalog order)
//! rows <M>
//! <YYYY-MM-DD> <i>:<q> ...   (quantities: item index and count, ascending index)
//! <YYYY-MM-DD> <i> ...       (baskets: item indices, ascending)
//! end
//! ```
//!
//! A row with no items is just the date. Item codes may not contain line
//! breaks and may not be empty.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::ingest::{binarize, Basket, BasketDataset, ItemCatalog, Transaction, TransactionTable};

pub const MAGIC: &str = "basketlab-dataset";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StoredDataset {
    Quantities(TransactionTable),
    Baskets(BasketDataset),
}

impl StoredDataset {
    pub fn catalog(&self) -> &ItemCatalog {
        match self {
            StoredDataset::Quantities(t) => &t.catalog,
            StoredDataset::Baskets(b) => &b.catalog,
        }
    }

    pub fn into_baskets(self) -> BasketDataset {
        match self {
            StoredDataset::Quantities(t) => binarize(&t),
            StoredDataset::Baskets(b) => b,
        }
    }

    /// Quantity view. Basket files contribute a count of 1 per present item.
    pub fn into_table(self) -> TransactionTable {
        match self {
            StoredDataset::Quantities(t) => t,
            StoredDataset::Baskets(b) => b.to_table(),
        }
    }
}

fn write_header(out: &mut String, kind: &str, catalog: &ItemCatalog, rows: usize) -> Result<()> {
    writeln!(out, "{MAGIC} {VERSION}").unwrap();
    writeln!(out, "kind {kind}").unwrap();
    writeln!(out, "items {}", catalog.len()).unwrap();
    for code in catalog.codes() {
        if code.is_empty() || code.contains(['\n', '\r']) {
            return Err(Error::Data(format!(
                "item code {code:?} cannot be stored (empty or contains a line break)"
            )));
        }
        writeln!(out, "{code}").unwrap();
    }
    writeln!(out, "rows {rows}").unwrap();
    Ok(())
}

pub fn encode_table(table: &TransactionTable) -> Result<String> {
    let mut out = String::new();
    write_header(&mut out, "quantities", &table.catalog, table.rows.len())?;
    for row in &table.rows {
        write!(out, "{}", row.date.format("%Y-%m-%d")).unwrap();
        for &(i, q) in &row.quantities {
            write!(out, " {i}:{q}").unwrap();
        }
        out.push('\n');
    }
    out.push_str("end\n");
    Ok(out)
}

pub fn encode_baskets(data: &BasketDataset) -> Result<String> {
    let mut out = String::new();
    write_header(&mut out, "baskets", &data.catalog, data.baskets.len())?;
    for b in &data.baskets {
        write!(out, "{}", b.date.format("%Y-%m-%d")).unwrap();
        for i in &b.items {
            write!(out, " {i}").unwrap();
        }
        out.push('\n');
    }
    out.push_str("end\n");
    Ok(out)
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn next(&mut self, what: &str) -> Result<(u64, &'a str)> {
        match self.inner.next() {
            Some((n, l)) => Ok((n as u64 + 1, l.strip_suffix('\r').unwrap_or(l))),
            None => Err(Error::Data(format!(
                "dataset file truncated: expected {what}"
            ))),
        }
    }

    fn keyword(&mut self, key: &str) -> Result<(u64, &'a str)> {
        let (n, line) = self.next(key)?;
        match line.strip_prefix(key).and_then(|r| r.strip_prefix(' ')) {
            Some(rest) => Ok((n, rest)),
            None => Err(row_err(
                n,
                key,
                format!("expected `{key} ...`, found {line:?}"),
            )),
        }
    }
}

fn row_err(line: u64, column: &str, message: String) -> Error {
    Error::Row {
        line,
        column: column.to_owned(),
        message,
    }
}

fn parse_count(n: u64, key: &str, raw: &str) -> Result<usize> {
    raw.trim()
        .parse()
        .map_err(|_| row_err(n, key, format!("bad count {raw:?}")))
}

pub fn decode(text: &str) -> Result<StoredDataset> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
    };
    let (n, version) = lines.keyword(MAGIC)?;
    if version.trim() != VERSION.to_string() {
        return Err(row_err(
            n,
            "version",
            format!("unsupported version {version:?}"),
        ));
    }
    let (n, kind) = lines.keyword("kind")?;
    let quantities = match kind.trim() {
        "quantities" => true,
        "baskets" => false,
        other => return Err(row_err(n, "kind", format!("unknown kind {other:?}"))),
    };
    let (n, count) = lines.keyword("items")?;
    let n_items = parse_count(n, "items", count)?;
    let mut codes = Vec::with_capacity(n_items);
    for _ in 0..n_items {
        codes.push(lines.next("item code")?.1.to_owned());
    }
    let catalog = ItemCatalog::from_codes(codes)?;
    let (n, count) = lines.keyword("rows")?;
    let n_rows = parse_count(n, "rows", count)?;

    let mut table_rows = Vec::new();
    let mut baskets = Vec::new();
    for _ in 0..n_rows {
        let (n, line) = lines.next("row")?;
        let mut fields = line.split_ascii_whitespace();
        let raw_date = fields.next().unwrap_or("");
        let date = NaiveDate::parse_from_str(raw_date, "%Y-%m-%d")
            .map_err(|_| row_err(n, "date", format!("malformed date {raw_date:?}")))?;
        let mut entries: Vec<(usize, u64)> = Vec::new();
        for field in fields {
            let (idx, qty) = if quantities {
                let (i, q) = field.split_once(':').ok_or_else(|| {
                    row_err(n, "item", format!("expected index:qty, found {field:?}"))
                })?;
                let q: u64 = q
                    .parse()
                    .map_err(|_| row_err(n, "qty", format!("bad quantity {q:?}")))?;
                (i, q)
            } else {
                (field, 1)
            };
            let idx: usize = idx
                .parse()
                .map_err(|_| row_err(n, "item", format!("bad item index {idx:?}")))?;
            if idx >= n_items {
                return Err(row_err(n, "item", format!("item index {idx} out of range")));
            }
            if entries.last().is_some_and(|&(prev, _)| prev >= idx) {
                return Err(row_err(
                    n,
                    "item",
                    "item indices must be strictly increasing".into(),
                ));
            }
            if qty > 0 {
                entries.push((idx, qty));
            }
        }
        if quantities {
            table_rows.push(Transaction {
                date,
                quantities: entries,
            });
        } else {
            baskets.push(Basket {
                date,
                items: entries.into_iter().map(|(i, _)| i).collect(),
            });
        }
    }
    let (n, end) = lines.next("end")?;
    if end != "end" {
        return Err(row_err(n, "end", format!("expected `end`, found {end:?}")));
    }

    Ok(if quantities {
        StoredDataset::Quantities(TransactionTable {
            rows: table_rows,
            catalog,
        })
    } else {
        StoredDataset::Baskets(BasketDataset { baskets, catalog })
    })
}

pub fn read(path: &Path) -> Result<StoredDataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    decode(&text)
}

pub fn write_table(path: &Path, table: &TransactionTable) -> Result<()> {
    let text = encode_table(table)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_baskets(path: &Path, data: &BasketDataset) -> Result<()> {
    let text = encode_baskets(data)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
