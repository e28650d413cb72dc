//! `basketlab` command line.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use basketlab::analysis::accuracy_table;
use basketlab::error::{Error, ErrorKind, Result};
use basketlab::forecast::{ForecastParams, TreeParams};
use basketlab::ingest::{aggregate_daily, top_k_items, IngestConfig, InputFormat};
use basketlab::pipeline::{
    cluster_series, forecast_items, read_actuals_csv, read_json, read_table, run_pipeline,
    write_json, ClusterConfig, ForecastFile, PipelineConfig,
};
use basketlab::reduction::{reduce, AttributePolicy, ReductionSpec};
use basketlab::rules::{
    frequent_itemsets, generate_rules, validate_rules, MinSupport, MiningParams, RuleRecord,
};
use basketlab::store;
use basketlab::synth::{generate_synthetic, write_wide_csv, PlantedRule, SyntheticSpec};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "basketlab",
    version,
    about = "Market-basket rule mining, forecasting and clustering"
)]
struct Cli {
    /// Seed for clustering and synthetic data (overrides config files).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Directory for outputs; relative `-o` paths are placed inside it.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    /// TOML configuration (pipeline config for `run`, generator spec for `synth`).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse delimited receipts into a dataset file.
    Ingest(IngestArgs),
    /// Drop baskets and attributes unrelated to the target items.
    Reduce(ReduceArgs),
    /// Mine confidence-gated association rules.
    Mine(MineArgs),
    /// Re-check mined rules against a holdout dataset.
    Validate(ValidateArgs),
    /// Forecast daily sales with model trees.
    Forecast(ForecastArgs),
    /// Cluster items by their daily sales series.
    Cluster(ClusterArgs),
    /// Score forecasts against actual counts.
    Accuracy(AccuracyArgs),
    /// Run the whole pipeline from a configuration file.
    Run(RunArgs),
    /// Generate synthetic receipts with planted rules.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FormatArg {
    Wide,
    Long,
}

#[derive(Args, Debug)]
struct IngestArgs {
    #[arg(long, value_enum, default_value = "wide")]
    format: FormatArg,
    #[arg(long, default_value = "date")]
    date_col: String,
    #[arg(long)]
    receipt_col: Option<String>,
    #[arg(long, default_value = "item")]
    item_col: String,
    #[arg(long, default_value = "qty")]
    qty_col: String,
    #[arg(long, default_value = ",")]
    delimiter: char,
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PolicyArg {
    Cooccur,
    TargetsOnly,
}

#[derive(Args, Debug)]
struct ReduceArgs {
    /// Comma-separated target item codes.
    #[arg(long, value_delimiter = ',', required = true)]
    targets: Vec<String>,
    #[arg(long, value_enum, default_value = "cooccur")]
    policy: PolicyArg,
    #[arg(long, default_value_t = 1)]
    min_cooccur: u64,
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long)]
    stats: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct MineArgs {
    #[arg(long, default_value_t = 0.70)]
    min_conf: f64,
    /// Relative minimum support.
    #[arg(long, default_value_t = 0.01)]
    min_support: f64,
    /// Absolute minimum support count; overrides --min-support.
    #[arg(long)]
    absolute_support: Option<u64>,
    #[arg(long, default_value_t = 5)]
    max_size: usize,
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    #[arg(long)]
    holdout: PathBuf,
    #[arg(long, default_value_t = 0.70)]
    min_conf: f64,
    rules: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct ForecastArgs {
    /// Item codes to forecast (comma-separated or repeated). Defaults to the
    /// `--top-k` best sellers.
    #[arg(long, value_delimiter = ',')]
    item: Vec<String>,
    #[arg(long, default_value_t = 4)]
    top_k: usize,
    #[arg(long, default_value_t = 7)]
    lags: usize,
    #[arg(long, default_value_t = 5)]
    horizon: usize,
    #[arg(long, default_value_t = 15.0)]
    smoothing_k: f64,
    #[arg(long)]
    no_smoothing: bool,
    #[arg(long, default_value_t = 4)]
    min_leaf: usize,
    #[arg(long, default_value_t = 0.05)]
    sd_stop: f64,
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    /// Also write the fitted model trees.
    #[arg(long)]
    model_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ClusterArgs {
    #[arg(short, default_value_t = 4)]
    k: usize,
    #[arg(long, default_value_t = 300)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Z-score each item's series before clustering.
    #[arg(long)]
    normalize: bool,
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct AccuracyArgs {
    #[arg(long, default_value_t = 70)]
    threshold: u32,
    forecast: PathBuf,
    actuals: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    /// Also write the tab-separated accuracy grid.
    #[arg(long)]
    table: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    holdout: Option<PathBuf>,
    #[arg(long)]
    min_conf: Option<f64>,
    #[arg(long)]
    min_support: Option<f64>,
    #[arg(long)]
    absolute_support: Option<u64>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    targets: Option<Vec<String>>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    items: Option<usize>,
    #[arg(long)]
    baskets: Option<usize>,
    #[arg(long)]
    days: Option<usize>,
    /// Base presence probability for items without an explicit one.
    #[arg(long)]
    probability: Option<f64>,
    /// Planted rule `A,B=>C@0.9` over item indices; repeatable.
    #[arg(long)]
    plant: Vec<String>,
    #[arg(short, long)]
    output: PathBuf,
}

fn resolve_out(cli: &Cli, path: &Path) -> Result<PathBuf> {
    let path = match &cli.out_dir {
        Some(dir) if path.is_relative() => dir.join(path),
        _ => path.to_path_buf(),
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    Ok(path)
}

fn parse_plant(raw: &str) -> Result<PlantedRule> {
    let bad = || Error::Config(format!("planted rule {raw:?} is not of the form A,B=>C@p"));
    let (sides, p) = raw.split_once('@').ok_or_else(bad)?;
    let (ante, cons) = sides.split_once("=>").ok_or_else(bad)?;
    let list = |s: &str| -> Result<Vec<usize>> {
        s.split(',')
            .map(|x| x.trim().parse::<usize>().map_err(|_| bad()))
            .collect()
    };
    Ok(PlantedRule {
        antecedent: list(ante)?,
        consequent: list(cons)?,
        probability: p.trim().parse().map_err(|_| bad())?,
    })
}

fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Ingest(a) => {
            let config = IngestConfig {
                format: match a.format {
                    FormatArg::Wide => InputFormat::Wide,
                    FormatArg::Long => InputFormat::Long,
                },
                date_col: a.date_col.clone(),
                receipt_col: a.receipt_col.clone(),
                item_col: a.item_col.clone(),
                qty_col: a.qty_col.clone(),
                delimiter: a.delimiter,
            };
            let table = read_table(&a.input, &config)?;
            store::write_table(&resolve_out(cli, &a.output)?, &table)?;
            println!(
                "{} transactions over {} items",
                table.rows.len(),
                table.catalog.len()
            );
        }
        Command::Reduce(a) => {
            let data = store::read(&a.input)?.into_baskets();
            let spec = ReductionSpec {
                targets: data.catalog.resolve(&a.targets)?.into_iter().collect(),
                attribute_policy: match a.policy {
                    PolicyArg::Cooccur => AttributePolicy::TargetsPlusCooccurring,
                    PolicyArg::TargetsOnly => AttributePolicy::TargetsOnly,
                },
                min_cooccurrence: a.min_cooccur,
            };
            let (reduced, stats) = reduce(&data, &spec)?;
            store::write_baskets(&resolve_out(cli, &a.output)?, &reduced)?;
            if let Some(path) = &a.stats {
                write_json(&resolve_out(cli, path)?, &stats)?;
            }
            println!(
                "{} -> {} baskets, {} -> {} attributes",
                stats.rows_before, stats.rows_after, stats.attrs_before, stats.attrs_after
            );
        }
        Command::Mine(a) => {
            let params = MiningParams {
                min_support: match a.absolute_support {
                    Some(n) => MinSupport::Absolute(n),
                    None => MinSupport::Relative(a.min_support),
                },
                min_confidence: a.min_conf,
                max_itemset_size: a.max_size,
            };
            params.validate()?;
            let data = store::read(&a.input)?.into_baskets();
            let frequent = frequent_itemsets(&data, &params)?;
            let rules = generate_rules(&frequent, data.len() as u64, &params)?;
            let records: Vec<RuleRecord> = rules
                .iter()
                .map(|r| RuleRecord::from_rule(r, &data.catalog))
                .collect();
            write_json(&resolve_out(cli, &a.output)?, &records)?;
            println!(
                "{} frequent itemsets (support >= {}), {} rules",
                frequent.len(),
                frequent.threshold,
                records.len()
            );
        }
        Command::Validate(a) => {
            let rules: Vec<RuleRecord> = read_json(&a.rules)?;
            let holdout = store::read(&a.holdout)?.into_baskets();
            let v = validate_rules(&rules, &holdout, a.min_conf)?;
            write_json(&resolve_out(cli, &a.output)?, &v)?;
            println!(
                "{} validated, {} eliminated",
                v.validated.len(),
                v.eliminated.len()
            );
        }
        Command::Forecast(a) => {
            let params = ForecastParams {
                lag_window: a.lags,
                horizon: a.horizon,
                smoothing: !a.no_smoothing,
                tree: TreeParams {
                    smoothing_k: a.smoothing_k,
                    min_leaf: a.min_leaf,
                    sd_stop_fraction: a.sd_stop,
                },
            };
            params.validate()?;
            let series = aggregate_daily(&store::read(&a.input)?.into_table())?;
            let items = if a.item.is_empty() {
                top_k_items(&series, a.top_k)
            } else {
                series.catalog.resolve(&a.item)?
            };
            let (forecasts, models) = forecast_items(&series, &items, &params)?;
            let file = ForecastFile {
                horizon: params.horizon,
                lag_window: params.lag_window,
                smoothing: params.smoothing,
                smoothing_k: params.tree.smoothing_k,
                mode: "future".into(),
                trained_through: *series.days.last().expect("aggregated series is non-empty"),
                items: forecasts,
            };
            write_json(&resolve_out(cli, &a.output)?, &file)?;
            if let Some(path) = &a.model_out {
                write_json(&resolve_out(cli, path)?, &models)?;
            }
            for f in &file.items {
                println!("{}: {:?}", f.item, f.predicted);
            }
        }
        Command::Cluster(a) => {
            let series = aggregate_daily(&store::read(&a.input)?.into_table())?;
            let config = ClusterConfig {
                k: a.k,
                seed: cli.seed.unwrap_or(ClusterConfig::default().seed),
                max_iter: a.max_iter,
                tol: a.tol,
                normalize: a.normalize,
            };
            let (file, _) = cluster_series(&series, &config)?;
            write_json(&resolve_out(cli, &a.output)?, &file)?;
            for g in &file.clusters {
                println!(
                    "cluster {}: volume {} [{}]",
                    g.id,
                    g.total_volume,
                    g.members.join(" ")
                );
            }
        }
        Command::Accuracy(a) => {
            if a.threshold > 100 {
                return Err(Error::Config("--threshold must lie in [0, 100]".into()));
            }
            let forecast: ForecastFile = read_json(&a.forecast)?;
            let actuals = read_actuals_csv(&a.actuals)?;
            let mut products = Vec::new();
            let mut predicted = Vec::new();
            let mut actual = Vec::new();
            for f in &forecast.items {
                let r = actuals.get(&f.item).ok_or_else(|| {
                    Error::Data(format!("{} has no row in {}", f.item, a.actuals.display()))
                })?;
                products.push(f.item.clone());
                predicted.push(f.predicted.clone());
                actual.push(r.clone());
            }
            let report = accuracy_table(&products, &predicted, &actual, a.threshold)?;
            write_json(&resolve_out(cli, &a.output)?, &report)?;
            if let Some(path) = &a.table {
                let path = resolve_out(cli, path)?;
                fs::write(&path, report.render_table()).map_err(|e| Error::io(&path, e))?;
            }
            print!("{}", report.render_table());
            println!("{}", report.note);
        }
        Command::Run(a) => {
            let path = cli
                .config
                .as_ref()
                .ok_or_else(|| Error::Config("run needs --config".into()))?;
            let mut config = PipelineConfig::load(path)?;
            if let Some(dir) = &cli.out_dir {
                config.output_dir = dir.clone();
            }
            if let Some(seed) = cli.seed {
                config.cluster.seed = seed;
            }
            if let Some(p) = &a.input {
                config.input = p.clone();
            }
            if let Some(p) = &a.holdout {
                config.holdout = Some(p.clone());
            }
            if let Some(c) = a.min_conf {
                config.mining.min_confidence = c;
            }
            if let Some(s) = a.min_support {
                config.mining.min_support = s;
                config.mining.absolute_support = None;
            }
            if let Some(n) = a.absolute_support {
                config.mining.absolute_support = Some(n);
            }
            if let Some(h) = a.horizon {
                config.forecast.horizon = h;
            }
            if let Some(t) = &a.targets {
                config.reduction.targets = t.clone();
            }
            let outcome = run_pipeline(&config)?;
            println!(
                "{} rules, validity horizon {} day(s); artifacts in {}",
                outcome.rules.len(),
                outcome.report.validity_horizon,
                outcome.output_dir.display()
            );
        }
        Command::Synth(a) => {
            let mut spec = match &cli.config {
                Some(path) => SyntheticSpec::load(path)?,
                None => SyntheticSpec::default(),
            };
            if let Some(n) = a.items {
                spec.item_count = n;
            }
            if let Some(n) = a.baskets {
                spec.basket_count = n;
            }
            if let Some(n) = a.days {
                spec.day_span = n;
            }
            if let Some(p) = a.probability {
                spec.default_probability = p;
            }
            if let Some(seed) = cli.seed {
                spec.seed = seed;
            }
            for raw in &a.plant {
                spec.planted.push(parse_plant(raw)?);
            }
            let table = generate_synthetic(&spec)?;
            let path = resolve_out(cli, &a.output)?;
            let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            write_wide_csv(&table, std::io::BufWriter::new(file))?;
            println!(
                "{} baskets over {} items",
                table.rows.len(),
                table.catalog.len()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Config => 1,
                ErrorKind::Data => 2,
                ErrorKind::Internal => 3,
            })
        }
    }
}
