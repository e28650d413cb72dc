//! End-to-end runs and the JSON artifacts shared with the command line.
//!
//! A run goes ingest -> reduce -> mine -> validate (with a holdout) ->
//! aggregate -> forecast -> accuracy -> cluster and writes every
//! intermediate to the output directory. `manifest.json` is rewritten after
//! each stage, so a failed run still says how far it got.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};

use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::analysis::{
    accuracy_table, kmeans, normalize_vectors, AccuracyReport, ClusterResult, KMeansParams,
};
use crate::error::{Error, Result};
use crate::forecast::{
    build_instances, fit, forecast_horizon, ForecastParams, ModelTree, TreeParams,
};
use crate::ingest::{
    aggregate_daily, binarize, parse_transactions, top_k_items, DailySeries, IngestConfig,
    TransactionTable,
};
use crate::reduction::{reduce, AttributePolicy, ReductionSpec, ReductionStats};
use crate::rules::{
    frequent_itemsets, generate_rules, validate_rules, MinSupport, MiningParams, RuleRecord,
    RuleValidation, DEFAULT_MAX_ITEMSET_SIZE, DEFAULT_MIN_CONFIDENCE, DEFAULT_MIN_SUPPORT,
};
use crate::store;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReductionConfig {
    /// Item codes to analyze. Empty means the forecast's top-k items.
    pub targets: Vec<String>,
    pub policy: AttributePolicy,
    pub min_cooccurrence: u64,
}

impl Default for ReductionConfig {
    fn default() -> Self {
        Self {
            targets: Vec::new(),
            policy: AttributePolicy::TargetsPlusCooccurring,
            min_cooccurrence: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MiningConfig {
    pub min_confidence: f64,
    pub min_support: f64,
    /// Overrides `min_support` with a basket count.
    pub absolute_support: Option<u64>,
    pub max_size: usize,
}

impl Default for MiningConfig {
    fn default() -> Self {
        Self {
            min_confidence: DEFAULT_MIN_CONFIDENCE,
            min_support: DEFAULT_MIN_SUPPORT,
            absolute_support: None,
            max_size: DEFAULT_MAX_ITEMSET_SIZE,
        }
    }
}

impl MiningConfig {
    pub fn params(&self) -> MiningParams {
        MiningParams {
            min_support: match self.absolute_support {
                Some(n) => MinSupport::Absolute(n),
                None => MinSupport::Relative(self.min_support),
            },
            min_confidence: self.min_confidence,
            max_itemset_size: self.max_size,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecastConfig {
    pub top_k: usize,
    pub lag_window: usize,
    pub horizon: usize,
    pub smoothing: bool,
    pub smoothing_k: f64,
    pub min_leaf: usize,
    pub sd_stop_fraction: f64,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        let p = ForecastParams::default();
        Self {
            top_k: 4,
            lag_window: p.lag_window,
            horizon: p.horizon,
            smoothing: p.smoothing,
            smoothing_k: p.tree.smoothing_k,
            min_leaf: p.tree.min_leaf,
            sd_stop_fraction: p.tree.sd_stop_fraction,
        }
    }
}

impl ForecastConfig {
    pub fn params(&self) -> ForecastParams {
        ForecastParams {
            lag_window: self.lag_window,
            horizon: self.horizon,
            smoothing: self.smoothing,
            tree: TreeParams {
                smoothing_k: self.smoothing_k,
                min_leaf: self.min_leaf,
                sd_stop_fraction: self.sd_stop_fraction,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterConfig {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub tol: f64,
    pub normalize: bool,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        let p = KMeansParams::default();
        Self {
            k: p.k,
            seed: p.seed,
            max_iter: p.max_iter,
            tol: p.tol,
            normalize: false,
        }
    }
}

impl ClusterConfig {
    pub fn params(&self) -> KMeansParams {
        KMeansParams {
            k: self.k,
            seed: self.seed,
            max_iter: self.max_iter,
            tol: self.tol,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AccuracyConfig {
    pub threshold_pct: u32,
}

impl Default for AccuracyConfig {
    fn default() -> Self {
        Self { threshold_pct: 70 }
    }
}

/// Declarative description of a full run, usually read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub input: PathBuf,
    pub holdout: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub ingest: IngestConfig,
    pub reduction: ReductionConfig,
    pub mining: MiningConfig,
    pub forecast: ForecastConfig,
    pub cluster: ClusterConfig,
    pub accuracy: AccuracyConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            input: PathBuf::new(),
            holdout: None,
            output_dir: PathBuf::from("out"),
            ingest: IngestConfig::default(),
            reduction: ReductionConfig::default(),
            mining: MiningConfig::default(),
            forecast: ForecastConfig::default(),
            cluster: ClusterConfig::default(),
            accuracy: AccuracyConfig::default(),
        }
    }
}

fn absolute(path: &Path) -> PathBuf {
    std::path::absolute(path).unwrap_or_else(|_| path.to_path_buf())
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_toml(&text)?;
        // relative paths in a config file are relative to the file
        if let Some(base) = path.parent() {
            let rebase = |p: &mut PathBuf| {
                if p.is_relative() && !p.as_os_str().is_empty() {
                    *p = base.join(&*p);
                }
            };
            rebase(&mut config.input);
            rebase(&mut config.output_dir);
            if let Some(h) = config.holdout.as_mut() {
                rebase(h);
            }
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input.as_os_str().is_empty() {
            return Err(Error::Config("no input file given".into()));
        }
        let out = absolute(&self.output_dir);
        for path in std::iter::once(&self.input).chain(&self.holdout) {
            if absolute(path).starts_with(&out) {
                return Err(Error::Config(format!(
                    "{} lies inside the output directory {}",
                    path.display(),
                    self.output_dir.display()
                )));
            }
        }
        self.mining.params().validate()?;
        self.forecast.params().validate()?;
        if self.forecast.top_k < 1 {
            return Err(Error::Config("forecast.top_k must be at least 1".into()));
        }
        if self.cluster.k < 1 {
            return Err(Error::Config("cluster.k must be at least 1".into()));
        }
        if self.cluster.tol.is_nan() || self.cluster.tol < 0.0 {
            return Err(Error::Config("cluster.tol must be >= 0".into()));
        }
        if self.accuracy.threshold_pct > 100 {
            return Err(Error::Config(
                "accuracy.threshold_pct must lie in [0, 100]".into(),
            ));
        }
        if self.reduction.policy == AttributePolicy::TargetsPlusCooccurring
            && self.reduction.min_cooccurrence < 1
        {
            return Err(Error::Config(
                "reduction.min_cooccurrence must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemForecast {
    pub item: String,
    pub dates: Vec<NaiveDate>,
    pub predicted: Vec<u64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub actual: Option<Vec<u64>>,
}

/// Contents of `forecast.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastFile {
    pub horizon: usize,
    pub lag_window: usize,
    pub smoothing: bool,
    pub smoothing_k: f64,
    /// `future`, `holdout` or `backtest`: where the actual values (if any)
    /// come from.
    pub mode: String,
    pub trained_through: NaiveDate,
    pub items: Vec<ItemForecast>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemModel {
    pub item: String,
    pub model: ModelTree,
}

fn following_days(last: NaiveDate, n: usize) -> Vec<NaiveDate> {
    (1..=n as u64)
        .filter_map(|d| last.checked_add_days(Days::new(d)))
        .collect()
}

/// Fits one tree per item on `series` and forecasts the days after it.
pub fn forecast_items(
    series: &DailySeries,
    items: &[usize],
    params: &ForecastParams,
) -> Result<(Vec<ItemForecast>, Vec<ItemModel>)> {
    params.validate()?;
    let last = *series
        .days
        .last()
        .ok_or_else(|| Error::Data("cannot forecast an empty series".into()))?;
    let mut forecasts = Vec::with_capacity(items.len());
    let mut models = Vec::with_capacity(items.len());
    for &item in items {
        let instances = build_instances(series, item, params.lag_window)?;
        let tree = fit(&instances, &params.tree)?;
        let predicted = forecast_horizon(&tree, series, item, params)?;
        let code = series.catalog.code(item).to_owned();
        forecasts.push(ItemForecast {
            item: code.clone(),
            dates: following_days(last, params.horizon),
            predicted,
            actual: None,
        });
        models.push(ItemModel {
            item: code,
            model: tree,
        });
    }
    Ok((forecasts, models))
}

/// Contents of `clusters.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterFile {
    pub k: usize,
    pub seed: u64,
    pub normalized: bool,
    pub iterations: usize,
    pub inertia: f64,
    pub days: Vec<NaiveDate>,
    pub clusters: Vec<ClusterGroup>,
    pub assignments: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterGroup {
    pub id: usize,
    pub members: Vec<String>,
    pub total_volume: u64,
    pub centroid: Vec<f64>,
}

/// Clusters every catalog item by its daily totals.
pub fn cluster_series(
    series: &DailySeries,
    config: &ClusterConfig,
) -> Result<(ClusterFile, ClusterResult)> {
    let raw: Vec<Vec<f64>> = (0..series.catalog.len())
        .map(|i| series.values_f64(i))
        .collect();
    let vectors = if config.normalize {
        normalize_vectors(&raw)
    } else {
        raw
    };
    let result = kmeans(&vectors, &config.params())?;
    let clusters = (0..result.k)
        .map(|id| {
            let members: Vec<usize> = (0..vectors.len())
                .filter(|&i| result.assignments[i] == id)
                .collect();
            ClusterGroup {
                id,
                members: members
                    .iter()
                    .map(|&i| series.catalog.code(i).to_owned())
                    .collect(),
                total_volume: members.iter().map(|&i| series.item_total(i)).sum(),
                centroid: result.centroids[id].clone(),
            }
        })
        .collect();
    let file = ClusterFile {
        k: result.k,
        seed: config.seed,
        normalized: config.normalize,
        iterations: result.iterations,
        inertia: result.inertia,
        days: series.days.clone(),
        clusters,
        assignments: (0..vectors.len())
            .map(|i| (series.catalog.code(i).to_owned(), result.assignments[i]))
            .collect(),
    };
    Ok((file, result))
}

/// Reads actual counts: a header row, then `product,count_1,...,count_h`.
pub fn read_actuals_csv(path: &Path) -> Result<BTreeMap<String, Vec<u64>>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(BufReader::new(file));
    let mut out = BTreeMap::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let product = record.get(0).unwrap_or("").trim().to_owned();
        let counts = record
            .iter()
            .skip(1)
            .map(|v| {
                v.trim().parse::<u64>().map_err(|_| Error::Row {
                    line,
                    column: product.clone(),
                    message: format!("actual count {v:?} is not a non-negative integer"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        out.insert(product, counts);
    }
    Ok(out)
}

/// Builds the accuracy report for forecasts that carry actual values.
pub fn accuracy_from_forecasts(
    items: &[ItemForecast],
    threshold_pct: u32,
) -> Result<AccuracyReport> {
    let mut products = Vec::new();
    let mut predicted = Vec::new();
    let mut actual = Vec::new();
    for f in items {
        let a = f
            .actual
            .as_ref()
            .ok_or_else(|| Error::Data(format!("no actual values for {}", f.item)))?;
        products.push(f.item.clone());
        predicted.push(f.predicted.clone());
        actual.push(a.clone());
    }
    accuracy_table(&products, &predicted, &actual, threshold_pct)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn read_table(path: &Path, config: &IngestConfig) -> Result<TransactionTable> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_transactions(BufReader::new(file), config)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub status: String,
    pub completed_stages: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub failed_stage: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
    pub artifacts: Vec<String>,
}

pub const MANIFEST: &str = "manifest.json";

/// Summary of a finished run.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutcome {
    pub output_dir: PathBuf,
    pub stats: ReductionStats,
    pub rules: Vec<RuleRecord>,
    pub validation: Option<RuleValidation>,
    pub report: AccuracyReport,
    pub clusters: ClusterFile,
}

/// Looks up the actual counts for an item code.
type ActualsFn = Box<dyn Fn(&str) -> Vec<u64>>;

struct Run {
    dir: PathBuf,
    manifest: Manifest,
}

impl Run {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn flush(&self) -> Result<()> {
        write_json(&self.path(MANIFEST), &self.manifest)
    }

    fn stage<T>(
        &mut self,
        name: &str,
        artifacts: &[&str],
        body: impl FnOnce(&Self) -> Result<T>,
    ) -> Result<T> {
        log::info!("stage {name}");
        match body(self) {
            Ok(v) => {
                self.manifest.completed_stages.push(name.to_owned());
                self.manifest
                    .artifacts
                    .extend(artifacts.iter().map(|a| a.to_string()));
                self.flush()?;
                Ok(v)
            }
            Err(e) => {
                self.manifest.status = "failed".into();
                self.manifest.failed_stage = Some(name.to_owned());
                self.manifest.error = Some(e.to_string());
                // the original error matters more than a failed manifest write
                let _ = self.flush();
                Err(e)
            }
        }
    }
}

/// Runs every stage and writes the artifacts under `config.output_dir`.
pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineOutcome> {
    config.validate()?;
    let dir = config.output_dir.clone();
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut run = Run {
        dir,
        manifest: Manifest {
            status: "running".into(),
            completed_stages: Vec::new(),
            failed_stage: None,
            error: None,
            artifacts: Vec::new(),
        },
    };
    run.flush()?;

    let forecast_params = config.forecast.params();
    let mining_params = config.mining.params();

    let (table, holdout) = run.stage("ingest", &["dataset.bl"], |r| {
        let table = read_table(&config.input, &config.ingest)?;
        if table.rows.is_empty() {
            return Err(Error::Data(format!(
                "{} contains no transactions",
                config.input.display()
            )));
        }
        store::write_table(&r.path("dataset.bl"), &table)?;
        let holdout = match &config.holdout {
            Some(path) => {
                let h = read_table(path, &config.ingest)?;
                store::write_table(&r.path("holdout.bl"), &h)?;
                Some(h)
            }
            None => None,
        };
        Ok((table, holdout))
    })?;
    if holdout.is_some() {
        run.manifest.artifacts.push("holdout.bl".into());
    }

    let series = run.stage("aggregate", &[], |_| aggregate_daily(&table))?;
    let top_items = top_k_items(&series, config.forecast.top_k);

    let (reduced, stats) = run.stage("reduce", &["reduced.bl", "stats.json"], |r| {
        let baskets = binarize(&table);
        let targets = if config.reduction.targets.is_empty() {
            top_items.clone()
        } else {
            baskets.catalog.resolve(&config.reduction.targets)?
        };
        let spec = ReductionSpec {
            targets: targets.into_iter().collect(),
            attribute_policy: config.reduction.policy,
            min_cooccurrence: config.reduction.min_cooccurrence,
        };
        let (reduced, stats) = reduce(&baskets, &spec)?;
        store::write_baskets(&r.path("reduced.bl"), &reduced)?;
        write_json(&r.path("stats.json"), &stats)?;
        Ok((reduced, stats))
    })?;

    let rules = run.stage("mine", &["rules.json"], |r| {
        let frequent = frequent_itemsets(&reduced, &mining_params)?;
        let rules = generate_rules(&frequent, reduced.len() as u64, &mining_params)?;
        let records: Vec<RuleRecord> = rules
            .iter()
            .map(|rule| RuleRecord::from_rule(rule, &reduced.catalog))
            .collect();
        write_json(&r.path("rules.json"), &records)?;
        Ok(records)
    })?;

    let validation = match &holdout {
        Some(h) => Some(run.stage("validate", &["validated.json"], |r| {
            let v = validate_rules(&rules, &binarize(h), config.mining.min_confidence)?;
            write_json(&r.path("validated.json"), &v)?;
            Ok(v)
        })?),
        None => None,
    };

    let forecast = run.stage("forecast", &["forecast.json", "models.json"], |r| {
        let h = forecast_params.horizon;
        let last = *series.days.last().expect("aggregated series is non-empty");
        let holdout_series = match &holdout {
            Some(t) if !t.rows.is_empty() => Some(aggregate_daily(t)?),
            _ => None,
        };
        // actuals come from a holdout that continues the training days, else
        // from the last `horizon` training days
        let follow_on = holdout_series.filter(|hs| {
            hs.days.first() == last.checked_add_days(Days::new(1)).as_ref() && hs.len() >= h
        });
        let (mode, train, actual_of): (&str, DailySeries, ActualsFn) = match follow_on {
            Some(hs) => (
                "holdout",
                series.clone(),
                Box::new(move |code: &str| match hs.catalog.index_of(code) {
                    Some(i) => hs.totals[i][..h].to_vec(),
                    None => vec![0; h],
                }),
            ),
            None => {
                if series.len() <= h + forecast_params.lag_window {
                    return Err(Error::Data(format!(
                        "series of {} days is too short to backtest a {h}-day horizon with a lag window of {}",
                        series.len(),
                        forecast_params.lag_window
                    )));
                }
                let cut = series.len() - h;
                let full = series.clone();
                (
                    "backtest",
                    series.truncated(cut),
                    Box::new(move |code: &str| {
                        let i = full.catalog.index_of(code).expect("item from the same catalog");
                        full.totals[i][cut..].to_vec()
                    }),
                )
            }
        };
        let (mut items, models) = forecast_items(&train, &top_items, &forecast_params)?;
        for f in &mut items {
            f.actual = Some(actual_of(&f.item));
        }
        let file = ForecastFile {
            horizon: h,
            lag_window: forecast_params.lag_window,
            smoothing: forecast_params.smoothing,
            smoothing_k: forecast_params.tree.smoothing_k,
            mode: mode.to_owned(),
            trained_through: *train.days.last().expect("non-empty"),
            items,
        };
        write_json(&r.path("forecast.json"), &file)?;
        write_json(&r.path("models.json"), &models)?;
        Ok(file)
    })?;

    let report = run.stage("accuracy", &["report.json", "report.tsv"], |r| {
        let report = accuracy_from_forecasts(&forecast.items, config.accuracy.threshold_pct)?;
        write_json(&r.path("report.json"), &report)?;
        fs::write(r.path("report.tsv"), report.render_table())
            .map_err(|e| Error::io(r.path("report.tsv"), e))?;
        Ok(report)
    })?;

    let clusters = run.stage("cluster", &["clusters.json"], |r| {
        let (file, _) = cluster_series(&series, &config.cluster)?;
        write_json(&r.path("clusters.json"), &file)?;
        Ok(file)
    })?;

    run.stage("summary", &["summary.txt"], |r| {
        let text = render_summary(
            &stats,
            &rules,
            validation.as_ref(),
            &forecast,
            &report,
            &clusters,
        );
        fs::write(r.path("summary.txt"), text).map_err(|e| Error::io(r.path("summary.txt"), e))
    })?;

    run.manifest.status = "complete".into();
    run.flush()?;

    Ok(PipelineOutcome {
        output_dir: run.dir,
        stats,
        rules,
        validation,
        report,
        clusters,
    })
}

const SUMMARY_RULE_LIMIT: usize = 50;

fn render_summary(
    stats: &ReductionStats,
    rules: &[RuleRecord],
    validation: Option<&RuleValidation>,
    forecast: &ForecastFile,
    report: &AccuracyReport,
    clusters: &ClusterFile,
) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "reduction: {} -> {} baskets, {} -> {} attributes",
        stats.rows_before, stats.rows_after, stats.attrs_before, stats.attrs_after
    );
    let _ = writeln!(s, "mined rules: {}", rules.len());
    if let Some(v) = validation {
        let _ = writeln!(
            s,
            "holdout validation: {} validated, {} eliminated",
            v.validated.len(),
            v.eliminated.len()
        );
    }
    let _ = writeln!(s, "forecast accuracy ({}):", forecast.mode);
    for line in report.render_table().lines() {
        let _ = writeln!(s, "  {line}");
    }
    let _ = writeln!(s, "{}", report.note);
    let horizon = report.validity_horizon;
    let until = forecast
        .trained_through
        .checked_add_days(Days::new(horizon as u64));
    match (horizon, until) {
        (0, _) | (_, None) => {
            let _ = writeln!(
                s,
                "validity horizon: 0 days; no rule set is extended past the training data"
            );
        }
        (h, Some(until)) => {
            let _ = writeln!(
                s,
                "validity horizon: {h} day(s), rules usable through {until}"
            );
        }
    }

    let (label, listed): (&str, Vec<(&RuleRecord, f64)>) = match validation {
        Some(v) => (
            "validated rules",
            v.validated
                .iter()
                .map(|c| (&c.rule, c.holdout_confidence.unwrap_or(0.0)))
                .collect(),
        ),
        None => ("rules", rules.iter().map(|r| (r, r.confidence)).collect()),
    };
    let cluster_of = |code: &str| {
        clusters
            .assignments
            .get(code)
            .map_or("-".to_owned(), |c| c.to_string())
    };
    let _ = writeln!(s, "{label} for the horizon ({}):", listed.len());
    for (rule, holdout_conf) in listed.iter().take(SUMMARY_RULE_LIMIT) {
        let clusters: Vec<String> = rule
            .antecedent
            .iter()
            .chain(&rule.consequent)
            .map(|c| format!("{c}:{}", cluster_of(c)))
            .collect();
        let _ = write!(
            s,
            "  {}  confidence {:.4}  support {}",
            rule.display(),
            rule.confidence,
            rule.support_count
        );
        if validation.is_some() {
            let _ = write!(s, "  holdout confidence {holdout_conf:.4}");
        }
        let _ = writeln!(s, "  clusters [{}]", clusters.join(" "));
    }
    if listed.len() > SUMMARY_RULE_LIMIT {
        let _ = writeln!(s, "  ... {} more", listed.len() - SUMMARY_RULE_LIMIT);
    }
    let _ = writeln!(
        s,
        "clusters (k = {}, inertia {:.3}):",
        clusters.k, clusters.inertia
    );
    for group in &clusters.clusters {
        let _ = writeln!(
            s,
            "  {}: volume {}  members {}",
            group.id,
            group.total_volume,
            group.members.join(" ")
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_from_minimal_toml() {
        let c = PipelineConfig::from_toml("input = \"data.csv\"\n").unwrap();
        assert_eq!(c.mining.min_confidence, 0.70);
        assert_eq!(c.forecast.top_k, 4);
        assert_eq!(c.cluster.k, 4);
        assert_eq!(c.forecast.horizon, 5);
        c.validate().unwrap();
    }

    #[test]
    fn config_rejects_out_of_range() {
        let c = PipelineConfig::from_toml("input = \"d.csv\"\n[mining]\nmin_confidence = 1.01\n")
            .unwrap();
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let c = PipelineConfig::from_toml("input = \"out/d.csv\"\noutput_dir = \"out\"\n").unwrap();
        assert!(c.validate().is_err());
        assert!(PipelineConfig::from_toml("input = \"d.csv\"\nbogus = 1\n").is_err());
    }

    #[test]
    fn policy_alias() {
        let c = PipelineConfig::from_toml(
            "input = \"d.csv\"\n[reduction]\npolicy = \"targets_only\"\n",
        )
        .unwrap();
        assert_eq!(c.reduction.policy, AttributePolicy::TargetsOnly);
        let c = PipelineConfig::from_toml("input = \"d.csv\"\n[reduction]\npolicy = \"cooccur\"\n")
            .unwrap();
        assert_eq!(c.reduction.policy, AttributePolicy::TargetsPlusCooccurring);
    }
}
