//! M5-style model trees for daily sales forecasting.
//!
//! Trees are grown by standard deviation reduction, every node carries a
//! least-squares linear model over the attributes tested beneath it, subtrees
//! are pruned when the node model's complexity-adjusted error is no worse,
//! and predictions are smoothed along the path back to the root.

use chrono::{Datelike, Days};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::DailySeries;

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Stand-in for (n + v) / (n - v) when a node has no more instances than
/// fitted parameters.
pub const UNDERDETERMINED_PENALTY: f64 = 1e6;

const SD_EPS: f64 = 1e-12;
const SDR_EPS: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub features: Vec<f64>,
    pub target: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceTable {
    pub feature_names: Vec<String>,
    pub rows: Vec<Instance>,
}

impl InstanceTable {
    pub fn new(feature_names: Vec<String>, rows: Vec<Instance>) -> Result<Self> {
        let width = feature_names.len();
        if let Some(bad) = rows.iter().position(|r| r.features.len() != width) {
            return Err(Error::Data(format!(
                "instance {bad} has {} features, expected {width}",
                rows[bad].features.len()
            )));
        }
        if rows
            .iter()
            .any(|r| !r.target.is_finite() || r.features.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::Data(
                "instance table contains non-finite values".into(),
            ));
        }
        Ok(Self {
            feature_names,
            rows,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn width(&self) -> usize {
        self.feature_names.len()
    }
}

pub fn lag_feature_names(lag_window: usize) -> Vec<String> {
    let mut names = vec!["day".to_owned(), "weekday".to_owned()];
    names.extend((1..=lag_window).map(|l| format!("lag{l}")));
    names
}

fn feature_row(ordinal: usize, weekday: u32, history: &[f64], lag_window: usize) -> Vec<f64> {
    let mut row = Vec::with_capacity(lag_window + 2);
    row.push(ordinal as f64);
    row.push(weekday as f64);
    row.extend((1..=lag_window).map(|l| history[ordinal - l]));
    row
}

/// One instance per day `t` in `[lag_window, len)`: features are the day
/// ordinal, the weekday (Monday = 0) and the `lag_window` preceding totals;
/// the target is the day's total.
pub fn build_instances(
    series: &DailySeries,
    item: usize,
    lag_window: usize,
) -> Result<InstanceTable> {
    if lag_window == 0 {
        return Err(Error::Config("lag window must be at least 1".into()));
    }
    if item >= series.totals.len() {
        return Err(Error::Config(format!(
            "item index {item} is not in the series"
        )));
    }
    if series.len() <= lag_window {
        return Err(Error::Data(format!(
            "series of {} days is too short for a lag window of {lag_window}",
            series.len()
        )));
    }
    let values = series.values_f64(item);
    let rows = (lag_window..series.len())
        .map(|t| Instance {
            features: feature_row(
                t,
                series.days[t].weekday().num_days_from_monday(),
                &values,
                lag_window,
            ),
            target: values[t],
        })
        .collect();
    InstanceTable::new(lag_feature_names(lag_window), rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub feature: usize,
    pub coefficient: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct LinearModel {
    pub intercept: f64,
    pub terms: Vec<Term>,
}

impl LinearModel {
    pub fn constant(value: f64) -> Self {
        Self {
            intercept: value,
            terms: Vec::new(),
        }
    }

    pub fn predict(&self, features: &[f64]) -> f64 {
        self.terms.iter().fold(self.intercept, |acc, t| {
            acc + t.coefficient * features[t.feature]
        })
    }

    /// Intercept plus one per term.
    pub fn parameter_count(&self) -> usize {
        self.terms.len() + 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        model: LinearModel,
        n: usize,
    },
    Split {
        feature: usize,
        /// Instances with `feature <= threshold` go left.
        threshold: f64,
        model: LinearModel,
        n: usize,
        left: Box<Node>,
        right: Box<Node>,
    },
}

impl Node {
    pub fn n(&self) -> usize {
        match self {
            Node::Leaf { n, .. } | Node::Split { n, .. } => *n,
        }
    }

    pub fn model(&self) -> &LinearModel {
        match self {
            Node::Leaf { model, .. } | Node::Split { model, .. } => model,
        }
    }

    pub fn node_count(&self) -> usize {
        match self {
            Node::Leaf { .. } => 1,
            Node::Split { left, right, .. } => 1 + left.node_count() + right.node_count(),
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            Node::Leaf { .. } => 1,
            Node::Split { left, right, .. } => left.leaf_count() + right.leaf_count(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreeParams {
    /// Smoothing constant k; 0 disables smoothing.
    pub smoothing_k: f64,
    /// Minimum instances on each side of a split; nodes with fewer than
    /// `max(4, min_leaf)` instances are not split.
    pub min_leaf: usize,
    /// Nodes whose target sd falls below this fraction of the root sd are
    /// not split.
    pub sd_stop_fraction: f64,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            smoothing_k: 15.0,
            min_leaf: 4,
            sd_stop_fraction: 0.05,
        }
    }
}

impl TreeParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.smoothing_k >= 0.0 && self.smoothing_k.is_finite()) {
            return Err(Error::Config(
                "smoothing_k must be a finite value >= 0".into(),
            ));
        }
        if self.min_leaf < 1 {
            return Err(Error::Config("min_leaf must be at least 1".into()));
        }
        if !(self.sd_stop_fraction > 0.0 && self.sd_stop_fraction < 1.0) {
            return Err(Error::Config("sd_stop_fraction must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelTree {
    pub format_version: u32,
    pub feature_names: Vec<String>,
    pub params: TreeParams,
    pub root: Node,
}

impl ModelTree {
    pub fn width(&self) -> usize {
        self.feature_names.len()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let tree: ModelTree = serde_json::from_str(text)?;
        if tree.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Data(format!(
                "unsupported model format version {}",
                tree.format_version
            )));
        }
        Ok(tree)
    }
}

/// Population standard deviation.
pub fn std_dev(values: impl IntoIterator<Item = f64> + Clone) -> f64 {
    let (n, sum) = values
        .clone()
        .into_iter()
        .fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    if n == 0 {
        return 0.0;
    }
    let mean = sum / n as f64;
    let ss: f64 = values.into_iter().map(|v| (v - mean).powi(2)).sum();
    (ss / n as f64).sqrt()
}

/// Population sd of every prefix of `ys` (entry `i` covers `ys[..=i]`),
/// accumulated with Welford's update.
fn prefix_sds(ys: impl Iterator<Item = f64>) -> Vec<f64> {
    let (mut n, mut mean, mut m2) = (0.0, 0.0, 0.0);
    ys.map(|y| {
        n += 1.0;
        let delta = y - mean;
        mean += delta / n;
        m2 += delta * (y - mean);
        (m2.max(0.0) / n).sqrt()
    })
    .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitChoice {
    pub feature: usize,
    pub threshold: f64,
    pub sdr: f64,
}

/// Best split over every feature and every midpoint between consecutive
/// distinct values, subject to `min_child` instances per side. Returns `None`
/// when no admissible split reduces the standard deviation.
pub fn best_split(table: &InstanceTable, idx: &[usize], min_child: usize) -> Option<SplitChoice> {
    let n = idx.len();
    if n < 2 {
        return None;
    }
    let targets = idx.iter().map(|&i| table.rows[i].target);
    let sd = std_dev(targets);
    if sd <= SD_EPS {
        return None;
    }
    let mut best: Option<SplitChoice> = None;
    let mut order = idx.to_vec();
    for feature in 0..table.width() {
        let x = |i: usize| table.rows[i].features[feature];
        order.sort_by(|&a, &b| x(a).total_cmp(&x(b)).then(a.cmp(&b)));
        let y = |i: &usize| table.rows[*i].target;
        let left_sd = prefix_sds(order.iter().map(y));
        let mut right_sd = prefix_sds(order.iter().rev().map(y));
        right_sd.reverse();
        for pos in 0..n - 1 {
            let (lo, hi) = (x(order[pos]), x(order[pos + 1]));
            let nl = pos + 1;
            let nr = n - nl;
            if lo == hi || nl < min_child || nr < min_child {
                continue;
            }
            let (sd_l, sd_r) = (left_sd[pos], right_sd[pos + 1]);
            let sdr = sd - (nl as f64 / n as f64) * sd_l - (nr as f64 / n as f64) * sd_r;
            // near-ties go to the earlier feature and lower threshold
            if sdr > SDR_EPS * sd && best.is_none_or(|b| sdr > b.sdr + SDR_EPS * sd) {
                let mid = lo + (hi - lo) / 2.0;
                let threshold = if mid < hi { mid } else { lo };
                best = Some(SplitChoice {
                    feature,
                    threshold,
                    sdr,
                });
            }
        }
    }
    best
}

fn mean_target(table: &InstanceTable, idx: &[usize]) -> f64 {
    if idx.is_empty() {
        return 0.0;
    }
    idx.iter().map(|&i| table.rows[i].target).sum::<f64>() / idx.len() as f64
}

/// Ordinary least squares over `features` via an SVD of the centred,
/// column-scaled design. Constant columns get a zero coefficient.
fn least_squares(table: &InstanceTable, idx: &[usize], features: &[usize]) -> LinearModel {
    let n = idx.len();
    let y_mean = mean_target(table, idx);
    if n < 2 || features.is_empty() {
        return LinearModel::constant(y_mean);
    }
    let p = features.len();
    let means: Vec<f64> = features
        .iter()
        .map(|&f| idx.iter().map(|&i| table.rows[i].features[f]).sum::<f64>() / n as f64)
        .collect();
    let mut design = DMatrix::from_fn(n, p, |r, c| {
        table.rows[idx[r]].features[features[c]] - means[c]
    });
    let scales: Vec<f64> = (0..p)
        .map(|c| {
            let norm = design.column(c).norm();
            if norm > SD_EPS * (1.0 + means[c].abs()) * (n as f64).sqrt() {
                norm
            } else {
                0.0
            }
        })
        .collect();
    for (c, &s) in scales.iter().enumerate() {
        if s > 0.0 {
            design.column_mut(c).scale_mut(1.0 / s);
        } else {
            design.column_mut(c).fill(0.0);
        }
    }
    let rhs = DVector::from_fn(n, |r, _| table.rows[idx[r]].target - y_mean);
    let svd = design.svd(true, true);
    let max_sv = svd.singular_values.max();
    let solved = if max_sv > 0.0 {
        svd.solve(&rhs, max_sv * 1e-10).ok()
    } else {
        None
    };
    let Some(beta) = solved else {
        return LinearModel::constant(y_mean);
    };

    let mut intercept = y_mean;
    let mut terms = Vec::with_capacity(p);
    for (c, &f) in features.iter().enumerate() {
        let coefficient = if scales[c] > 0.0 {
            beta[c] / scales[c]
        } else {
            0.0
        };
        intercept -= coefficient * means[c];
        terms.push(Term {
            feature: f,
            coefficient,
        });
    }
    LinearModel { intercept, terms }
}

pub fn complexity_factor(n: usize, v: usize) -> f64 {
    if n <= v {
        UNDERDETERMINED_PENALTY
    } else {
        (n + v) as f64 / (n - v) as f64
    }
}

/// Mean absolute residual of `model` over `idx`, times (n + v) / (n - v).
pub fn adjusted_error(model: &LinearModel, table: &InstanceTable, idx: &[usize]) -> f64 {
    if idx.is_empty() {
        return 0.0;
    }
    let mae = idx
        .iter()
        .map(|&i| (table.rows[i].target - model.predict(&table.rows[i].features)).abs())
        .sum::<f64>()
        / idx.len() as f64;
    mae * complexity_factor(idx.len(), model.parameter_count())
}

/// Least-squares fit followed by greedy backward elimination: the term whose
/// removal gives the lowest adjusted error is dropped for as long as that
/// error does not exceed the current one.
pub fn fit_node_model(table: &InstanceTable, idx: &[usize], features: &[usize]) -> LinearModel {
    let mut active: Vec<usize> = features.to_vec();
    let mut model = least_squares(table, idx, &active);
    let mut error = adjusted_error(&model, table, idx);
    while !active.is_empty() {
        let mut best: Option<(usize, LinearModel, f64)> = None;
        for drop in 0..active.len() {
            let reduced: Vec<usize> = active
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != drop)
                .map(|(_, &f)| f)
                .collect();
            let candidate = least_squares(table, idx, &reduced);
            let e = adjusted_error(&candidate, table, idx);
            if e <= error && best.as_ref().is_none_or(|b| e < b.2) {
                best = Some((drop, candidate, e));
            }
        }
        match best {
            Some((drop, candidate, e)) => {
                active.remove(drop);
                model = candidate;
                error = e;
            }
            None => break,
        }
    }
    model
}

fn partition(
    table: &InstanceTable,
    idx: &[usize],
    feature: usize,
    threshold: f64,
) -> (Vec<usize>, Vec<usize>) {
    idx.iter()
        .partition(|&&i| table.rows[i].features[feature] <= threshold)
}

struct Grower<'a> {
    table: &'a InstanceTable,
    params: TreeParams,
    sd_root: f64,
}

impl Grower<'_> {
    /// Returns the node and the sorted set of features tested beneath it.
    fn grow(&self, idx: &[usize]) -> (Node, Vec<usize>) {
        let n = idx.len();
        let sd = std_dev(idx.iter().map(|&i| self.table.rows[i].target));
        let leaf = || Node::Leaf {
            model: LinearModel::constant(mean_target(self.table, idx)),
            n,
        };
        if n < self.params.min_leaf.max(4) || sd < self.params.sd_stop_fraction * self.sd_root {
            return (leaf(), Vec::new());
        }
        let Some(split) = best_split(self.table, idx, self.params.min_leaf) else {
            return (leaf(), Vec::new());
        };
        let (li, ri) = partition(self.table, idx, split.feature, split.threshold);
        let (left, lf) = self.grow(&li);
        let (right, rf) = self.grow(&ri);
        let mut tested = lf;
        tested.extend(rf);
        tested.push(split.feature);
        tested.sort_unstable();
        tested.dedup();
        let model = fit_node_model(self.table, idx, &tested);
        (
            Node::Split {
                feature: split.feature,
                threshold: split.threshold,
                model,
                n,
                left: Box::new(left),
                right: Box::new(right),
            },
            tested,
        )
    }
}

/// Grows an unpruned model tree.
pub fn grow_tree(table: &InstanceTable, params: &TreeParams) -> Result<ModelTree> {
    params.validate()?;
    if table.is_empty() {
        return Err(Error::Data(
            "cannot grow a tree from an empty instance table".into(),
        ));
    }
    let idx: Vec<usize> = (0..table.len()).collect();
    let grower = Grower {
        table,
        params: *params,
        sd_root: std_dev(table.rows.iter().map(|r| r.target)),
    };
    let (root, _) = grower.grow(&idx);
    Ok(ModelTree {
        format_version: MODEL_FORMAT_VERSION,
        feature_names: table.feature_names.clone(),
        params: *params,
        root,
    })
}

fn subtree_error(node: &Node, table: &InstanceTable, idx: &[usize]) -> f64 {
    match node {
        Node::Leaf { model, .. } => adjusted_error(model, table, idx),
        Node::Split {
            feature,
            threshold,
            left,
            right,
            ..
        } => {
            if idx.is_empty() {
                return 0.0;
            }
            let (li, ri) = partition(table, idx, *feature, *threshold);
            (li.len() as f64 * subtree_error(left, table, &li)
                + ri.len() as f64 * subtree_error(right, table, &ri))
                / idx.len() as f64
        }
    }
}

/// Adjusted training error of the whole tree: leaves contribute their model's
/// adjusted error, internal nodes the instance-weighted mean of their
/// children.
pub fn tree_adjusted_error(tree: &ModelTree, table: &InstanceTable) -> f64 {
    let idx: Vec<usize> = (0..table.len()).collect();
    subtree_error(&tree.root, table, &idx)
}

/// Errors within this distance count as equal when pruning, so that
/// rounding noise on exact fits does not keep redundant splits.
pub fn prune_tolerance(table: &InstanceTable) -> f64 {
    let scale = table
        .rows
        .iter()
        .map(|r| r.target.abs())
        .fold(0.0, f64::max);
    1e-10 * (1.0 + scale)
}

fn prune_node(node: Node, table: &InstanceTable, idx: &[usize], tol: f64) -> (Node, f64) {
    match node {
        Node::Leaf { model, n } => {
            let e = adjusted_error(&model, table, idx);
            (Node::Leaf { model, n }, e)
        }
        Node::Split {
            feature,
            threshold,
            model,
            n,
            left,
            right,
        } => {
            let (li, ri) = partition(table, idx, feature, threshold);
            let (left, el) = prune_node(*left, table, &li, tol);
            let (right, er) = prune_node(*right, table, &ri, tol);
            let subtree = if idx.is_empty() {
                0.0
            } else {
                (li.len() as f64 * el + ri.len() as f64 * er) / idx.len() as f64
            };
            let own = adjusted_error(&model, table, idx);
            if own <= subtree + tol {
                (Node::Leaf { model, n }, own)
            } else {
                (
                    Node::Split {
                        feature,
                        threshold,
                        model,
                        n,
                        left: Box::new(left),
                        right: Box::new(right),
                    },
                    subtree,
                )
            }
        }
    }
}

/// Bottom-up pruning: a subtree is replaced by a leaf carrying its node model
/// whenever that model's adjusted error is no worse than the subtree's.
pub fn prune_tree(tree: ModelTree, table: &InstanceTable) -> ModelTree {
    let idx: Vec<usize> = (0..table.len()).collect();
    let (root, _) = prune_node(tree.root, table, &idx, prune_tolerance(table));
    ModelTree { root, ..tree }
}

/// Grow then prune.
pub fn fit(table: &InstanceTable, params: &TreeParams) -> Result<ModelTree> {
    Ok(prune_tree(grow_tree(table, params)?, table))
}

fn predict_node(node: &Node, x: &[f64], k: Option<f64>) -> f64 {
    match node {
        Node::Leaf { model, .. } => model.predict(x),
        Node::Split {
            feature,
            threshold,
            model,
            left,
            right,
            ..
        } => {
            let child = if x[*feature] <= *threshold {
                left
            } else {
                right
            };
            let p = predict_node(child, x, k);
            match k {
                Some(k) => {
                    let n = child.n() as f64;
                    (n * p + k * model.predict(x)) / (n + k)
                }
                None => p,
            }
        }
    }
}

/// Routes `features` to a leaf and returns its model value, smoothed towards
/// each ancestor's model with p' = (n p + k q) / (n + k) when `smoothing` is on.
pub fn predict(tree: &ModelTree, features: &[f64], smoothing: bool) -> Result<f64> {
    if features.len() != tree.width() {
        return Err(Error::Data(format!(
            "feature vector has {} values, model expects {}",
            features.len(),
            tree.width()
        )));
    }
    if let Some(bad) = features.iter().position(|v| !v.is_finite()) {
        return Err(Error::Data(format!("feature {bad} is not finite")));
    }
    let k = (smoothing && tree.params.smoothing_k > 0.0).then_some(tree.params.smoothing_k);
    Ok(predict_node(&tree.root, features, k))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForecastParams {
    pub lag_window: usize,
    pub horizon: usize,
    pub smoothing: bool,
    pub tree: TreeParams,
}

impl Default for ForecastParams {
    fn default() -> Self {
        Self {
            lag_window: 7,
            horizon: 5,
            smoothing: true,
            tree: TreeParams::default(),
        }
    }
}

impl ForecastParams {
    pub fn validate(&self) -> Result<()> {
        if self.lag_window < 1 {
            return Err(Error::Config("lag window must be at least 1".into()));
        }
        if self.horizon < 1 {
            return Err(Error::Config("forecast horizon must be at least 1".into()));
        }
        self.tree.validate()
    }
}

/// Clamp at zero, then round half up.
pub fn to_count(raw: f64) -> u64 {
    (raw.max(0.0) + 0.5).floor() as u64
}

/// Iterated one-step-ahead forecast of the `horizon` days following the
/// series. Each day's prediction is converted to a count and rolled into
/// the lag window for the next day.
pub fn forecast_horizon(
    tree: &ModelTree,
    series: &DailySeries,
    item: usize,
    params: &ForecastParams,
) -> Result<Vec<u64>> {
    params.validate()?;
    let w = params.lag_window;
    if tree.width() != w + 2 {
        return Err(Error::Config(format!(
            "model expects {} features but a lag window of {w} gives {}",
            tree.width(),
            w + 2
        )));
    }
    if item >= series.totals.len() {
        return Err(Error::Config(format!(
            "item index {item} is not in the series"
        )));
    }
    if series.len() < w {
        return Err(Error::Data(format!(
            "series of {} days is shorter than the lag window {w}",
            series.len()
        )));
    }
    let last = *series.days.last().expect("non-empty series");
    let mut history = series.values_f64(item);
    let mut out = Vec::with_capacity(params.horizon);
    for step in 0..params.horizon {
        let t = history.len();
        let date = last
            .checked_add_days(Days::new(step as u64 + 1))
            .ok_or_else(|| Error::Data("forecast date out of range".into()))?;
        let x = feature_row(t, date.weekday().num_days_from_monday(), &history, w);
        let raw = predict(tree, &x, params.smoothing)?;
        if !raw.is_finite() {
            return Err(Error::Internal(format!(
                "model produced non-finite prediction {raw}"
            )));
        }
        let count = to_count(raw);
        out.push(count);
        history.push(count as f64);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::ItemCatalog;
    use chrono::NaiveDate;

    fn series(values: &[u64]) -> DailySeries {
        let start = NaiveDate::from_ymd_opt(2014, 1, 6).unwrap(); // a Monday
        DailySeries {
            days: start.iter_days().take(values.len()).collect(),
            totals: vec![values.to_vec()],
            catalog: ItemCatalog::from_codes(["a"]).unwrap(),
        }
    }

    fn one_feature(points: &[(f64, f64)]) -> InstanceTable {
        InstanceTable::new(
            vec!["x".into()],
            points
                .iter()
                .map(|&(x, y)| Instance {
                    features: vec![x],
                    target: y,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn instances_constant_series() {
        let t = build_instances(&series(&[5, 5, 5, 5]), 0, 2).unwrap();
        assert_eq!(t.len(), 2);
        for r in &t.rows {
            assert_eq!(&r.features[2..], &[5.0, 5.0]);
            assert_eq!(r.target, 5.0);
        }
    }

    #[test]
    fn instances_shift_by_one() {
        let t = build_instances(&series(&[1, 2, 3, 4]), 0, 1).unwrap();
        let targets: Vec<f64> = t.rows.iter().map(|r| r.target).collect();
        let lags: Vec<f64> = t.rows.iter().map(|r| r.features[2]).collect();
        assert_eq!(targets, vec![2.0, 3.0, 4.0]);
        assert_eq!(lags, vec![1.0, 2.0, 3.0]);
        assert_eq!(t.rows[0].features[..2], [1.0, 1.0]); // day 1, Tuesday
    }

    #[test]
    fn instances_too_short() {
        assert!(build_instances(&series(&[1, 2]), 0, 2).is_err());
        assert!(build_instances(&series(&[1, 2, 3]), 0, 0).is_err());
    }

    #[test]
    fn constant_target_single_leaf() {
        let t = one_feature(&(0..20).map(|i| (i as f64, 3.5)).collect::<Vec<_>>());
        let tree = fit(&t, &TreeParams::default()).unwrap();
        assert_eq!(tree.root.node_count(), 1);
        assert_eq!(predict(&tree, &[7.0], true).unwrap(), 3.5);
    }

    #[test]
    fn noiseless_line_collapses_to_exact_model() {
        let t = one_feature(
            &(0..50)
                .map(|i| (i as f64, 2.0 * i as f64))
                .collect::<Vec<_>>(),
        );
        let grown = grow_tree(&t, &TreeParams::default()).unwrap();
        assert!(grown.root.node_count() > 1);
        let tree = prune_tree(grown, &t);
        let Node::Leaf { model, n } = &tree.root else {
            panic!("expected a single leaf, got {:?}", tree.root)
        };
        assert_eq!(*n, 50);
        assert_eq!(model.terms.len(), 1);
        assert!((model.terms[0].coefficient - 2.0).abs() < 1e-9);
        assert!(model.intercept.abs() < 1e-9);
    }

    #[test]
    fn smoothing_hand_case() {
        let tree = ModelTree {
            format_version: MODEL_FORMAT_VERSION,
            feature_names: vec!["x".into()],
            params: TreeParams::default(),
            root: Node::Split {
                feature: 0,
                threshold: 0.0,
                model: LinearModel::constant(4.0),
                n: 40,
                left: Box::new(Node::Leaf {
                    model: LinearModel::constant(10.0),
                    n: 20,
                }),
                right: Box::new(Node::Leaf {
                    model: LinearModel::constant(-1.0),
                    n: 20,
                }),
            },
        };
        let p = predict(&tree, &[-1.0], true).unwrap();
        assert!((p - 260.0 / 35.0).abs() < 1e-9);
        assert_eq!(predict(&tree, &[-1.0], false).unwrap(), 10.0);
        let mut unsmoothed = tree.clone();
        unsmoothed.params.smoothing_k = 0.0;
        assert_eq!(predict(&unsmoothed, &[-1.0], true).unwrap(), 10.0);
    }

    #[test]
    fn predict_rejects_bad_input() {
        let t = one_feature(&[(0.0, 1.0)]);
        let tree = fit(&t, &TreeParams::default()).unwrap();
        assert!(predict(&tree, &[f64::NAN], true).is_err());
        assert!(predict(&tree, &[1.0, 2.0], true).is_err());
        assert!(grow_tree(&one_feature(&[]), &TreeParams::default()).is_err());
    }

    #[test]
    fn single_leaf_prunes_to_itself() {
        let t = one_feature(&[(0.0, 1.0), (1.0, 1.0)]);
        let tree = grow_tree(&t, &TreeParams::default()).unwrap();
        let pruned = prune_tree(tree.clone(), &t);
        assert_eq!(tree, pruned);
    }

    #[test]
    fn complexity_factor_guard() {
        assert_eq!(complexity_factor(3, 1), 2.0);
        assert_eq!(complexity_factor(2, 2), UNDERDETERMINED_PENALTY);
        assert_eq!(complexity_factor(1, 3), UNDERDETERMINED_PENALTY);
    }

    #[test]
    fn count_conversion() {
        assert_eq!(to_count(-0.4), 0);
        assert_eq!(to_count(2.5), 3);
        assert_eq!(to_count(2.49), 2);
    }

    #[test]
    fn constant_series_forecast() {
        let s = series(&[6; 30]);
        let params = ForecastParams::default();
        let t = build_instances(&s, 0, params.lag_window).unwrap();
        let tree = fit(&t, &params.tree).unwrap();
        assert_eq!(forecast_horizon(&tree, &s, 0, &params).unwrap(), vec![6; 5]);
        let zero = ForecastParams {
            horizon: 0,
            ..params
        };
        assert!(forecast_horizon(&tree, &s, 0, &zero).is_err());
    }

    #[test]
    fn negative_raw_prediction_clamps() {
        let tree = ModelTree {
            format_version: MODEL_FORMAT_VERSION,
            feature_names: lag_feature_names(1),
            params: TreeParams::default(),
            root: Node::Leaf {
                model: LinearModel::constant(-0.4),
                n: 5,
            },
        };
        let params = ForecastParams {
            lag_window: 1,
            horizon: 3,
            ..ForecastParams::default()
        };
        assert_eq!(
            forecast_horizon(&tree, &series(&[3, 4]), 0, &params).unwrap(),
            vec![0, 0, 0]
        );
    }

    #[test]
    fn model_json_roundtrip() {
        let t = one_feature(
            &(0..40)
                .map(|i| (i as f64, if i < 10 { 0.0 } else { 100.0 }))
                .collect::<Vec<_>>(),
        );
        let tree = fit(&t, &TreeParams::default()).unwrap();
        let back = ModelTree::from_json(&tree.to_json().unwrap()).unwrap();
        assert_eq!(tree, back);
    }
}
