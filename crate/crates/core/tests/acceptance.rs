//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Run with `cargo test -p basketlab-core --test acceptance`.

mod common;

use std::collections::BTreeSet;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use basketlab::analysis::{accuracy_table, format_tenths, kmeans, validity_horizon, KMeansParams};
use basketlab::forecast::{
    fit, grow_tree, predict, Instance, InstanceTable, LinearModel, ModelTree, Node, TreeParams,
    MODEL_FORMAT_VERSION,
};
use basketlab::ingest::BasketDataset;
use basketlab::pipeline::{run_pipeline, PipelineConfig};
use basketlab::reduction::{reduce, ReductionSpec};
use basketlab::rules::{frequent_itemsets, generate_rules, MinSupport, MiningParams};
use basketlab::synth::{generate_synthetic, write_wide_csv, PlantedRule, SyntheticSpec};
use common::{
    brute_best_split, brute_frequent, brute_rules, brute_threshold, dataset, random_dataset,
};
use rand::seq::IteratorRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = std::result::Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn run(id: usize, name: &str, budget: Option<Duration>, check: impl FnOnce() -> Check) -> bool {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    });
    let elapsed = start.elapsed();
    let outcome = match (outcome, budget) {
        (Ok(_), Some(limit)) if elapsed > limit => {
            Err(format!("took {elapsed:.2?}, limit {limit:?}"))
        }
        (o, _) => o,
    };
    let ok = outcome.is_ok();
    let detail = outcome.unwrap_or_else(|e| e);
    println!(
        "{} [{id}] {name}: {detail} ({elapsed:.2?})",
        if ok { "PASS" } else { "FAIL" }
    );
    ok
}

const P: [[u64; 5]; 4] = [
    [14, 12, 11, 16, 17],
    [8, 7, 8, 10, 11],
    [25, 22, 26, 29, 31],
    [14, 14, 16, 16, 22],
];
const R: [[u64; 5]; 4] = [
    [14, 16, 16, 28, 33],
    [8, 4, 12, 9, 12],
    [26, 30, 22, 39, 64],
    [12, 17, 14, 32, 37],
];
const PR: [[u32; 5]; 4] = [
    [100, 75, 69, 57, 52],
    [100, 57, 67, 90, 92],
    [96, 73, 85, 74, 48],
    [86, 82, 88, 50, 59],
];
const AVERAGE: [(&str, &str, u32); 5] = [
    ("15.3", "15", 96),
    ("13.8", "16.8", 72),
    ("15.3", "16", 77),
    ("17.8", "27", 68),
    ("20.3", "36.5", 63),
];

fn golden_grid() -> Check {
    let products: Vec<String> = ["fkue59", "fkue114", "fkue133", "fkue138"]
        .map(String::from)
        .to_vec();
    let report = accuracy_table(&products, &P.map(Vec::from), &R.map(Vec::from), 70)
        .map_err(|e| e.to_string())?;
    for (row, want) in report.rows.iter().zip(PR) {
        ensure(row.accuracy_pct == want, || {
            format!("{}: {:?} != {want:?}", row.product, row.accuracy_pct)
        })?;
    }
    for (d, (p, r, pct)) in AVERAGE.into_iter().enumerate() {
        let got = (
            format_tenths(report.average.predicted_tenths[d]),
            format_tenths(report.average.actual_tenths[d]),
            report.average.accuracy_pct[d],
        );
        ensure(got == (p.to_owned(), r.to_owned(), pct), || {
            format!("day {}: {got:?}", d + 1)
        })?;
    }
    Ok("20 cells and the average row match".into())
}

fn horizon() -> Check {
    let h = validity_horizon(&[96, 72, 77, 68, 63], 70);
    ensure(h == 3, || format!("horizon {h}, want 3"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for case in 0..1000 {
        let v: Vec<u32> = (0..rng.random_range(0..10))
            .map(|_| rng.random_range(0..=100))
            .collect();
        let t = rng.random_range(0..=100);
        let h = validity_horizon(&v, t);
        let prefix_ok = v[..h].iter().all(|&a| a >= t) && (h == v.len() || v[h] < t);
        let lower_ok = validity_horizon(&v, t.saturating_sub(rng.random_range(0..=20))) >= h;
        let mut raised = v.clone();
        raised
            .iter_mut()
            .for_each(|a| *a = (*a + rng.random_range(0..10)).min(100));
        let raised_ok = validity_horizon(&raised, t) >= h;
        ensure(prefix_ok && lower_ok && raised_ok, || {
            format!("case {case}: {v:?} at {t}")
        })?;
    }
    Ok("[96,72,77,68,63] at 70 -> 3; 1000 monotone cases".into())
}

type Mined = (
    Vec<(Vec<usize>, u64)>,
    Vec<(Vec<usize>, Vec<usize>, u64, u64, f64)>,
);

fn mine(data: &BasketDataset, params: &MiningParams) -> Mined {
    let frequent = frequent_itemsets(data, params).unwrap();
    let mut sets: Vec<_> = frequent
        .iter()
        .map(|s| (s.items.clone(), s.support_count))
        .collect();
    sets.sort();
    let mut rules: Vec<_> = generate_rules(&frequent, data.len() as u64, params)
        .unwrap()
        .into_iter()
        .map(|r| {
            (
                r.antecedent.items,
                r.consequent.items,
                r.joint_support_count,
                r.antecedent.support_count,
                r.confidence,
            )
        })
        .collect();
    rules.sort_by(|a, b| (&a.0, &a.1).cmp(&(&b.0, &b.1)));
    (sets, rules)
}

fn apriori_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut total_rules = 0;
    for case in 0..200 {
        let data = random_dataset(&mut rng, 12, 64);
        let min_support = if rng.random() {
            MinSupport::Absolute(rng.random_range(1..=6))
        } else {
            MinSupport::Relative(rng.random_range(0.02..0.5))
        };
        let params = MiningParams {
            min_support,
            min_confidence: rng.random_range(0.0..=1.0),
            max_itemset_size: rng.random_range(1..=12),
        };
        let threshold = match min_support {
            MinSupport::Absolute(n) => n,
            MinSupport::Relative(f) => brute_threshold(f, data.len()),
        };
        let (sets, rules) = mine(&data, &params);
        let oracle = brute_frequent(&data, threshold, params.max_itemset_size);
        ensure(
            sets == oracle.clone().into_iter().collect::<Vec<_>>(),
            || format!("case {case}: itemsets differ"),
        )?;
        let want = brute_rules(&oracle, params.min_confidence);
        let got: Vec<_> = rules
            .iter()
            .map(|r| (r.0.clone(), r.1.clone(), r.2, r.3))
            .collect();
        ensure(got == want, || format!("case {case}: rules differ"))?;
        ensure(rules.iter().all(|r| r.4 == r.2 as f64 / r.3 as f64), || {
            format!("case {case}: confidence")
        })?;
        total_rules += rules.len();
    }
    Ok(format!(
        "200 datasets, {total_rules} rules identical to enumeration"
    ))
}

fn by_code(data: &BasketDataset, items: &[usize]) -> Vec<String> {
    items
        .iter()
        .map(|&i| data.catalog.code(i).to_owned())
        .collect()
}

fn reduction_preservation() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let all = MiningParams {
        min_support: MinSupport::Absolute(1),
        min_confidence: 0.0,
        max_itemset_size: 12,
    };
    let mut done = 0;
    while done < 100 {
        let data = random_dataset(&mut rng, 10, 60);
        let n = data.catalog.len();
        let k = rng.random_range(1..=n.min(3));
        let targets: BTreeSet<usize> = (0..n).choose_multiple(&mut rng, k).into_iter().collect();
        let Ok((reduced, stats)) = reduce(&data, &ReductionSpec::new(targets.clone())) else {
            continue;
        };
        done += 1;
        ensure(stats.rows_after <= stats.rows_before, || "rows grew".into())?;
        let target_codes: BTreeSet<String> = targets
            .iter()
            .map(|&t| data.catalog.code(t).to_owned())
            .collect();
        let touches = |codes: &[String]| codes.iter().any(|c| target_codes.contains(c));
        let supports = |d: &BasketDataset| -> BTreeSet<(Vec<String>, u64)> {
            mine(d, &all)
                .0
                .iter()
                .map(|(s, c)| (by_code(d, s), *c))
                .filter(|(codes, _)| touches(codes))
                .collect()
        };
        ensure(supports(&data) == supports(&reduced), || {
            format!("dataset {done}: target itemset supports differ")
        })?;
        let rules = |d: &BasketDataset| -> BTreeSet<(Vec<String>, Vec<String>, u64)> {
            mine(d, &all)
                .1
                .iter()
                .map(|r| (by_code(d, &r.0), by_code(d, &r.1), r.4.to_bits()))
                .filter(|r| touches(&r.0))
                .collect()
        };
        ensure(rules(&data) == rules(&reduced), || {
            format!("dataset {done}: target rule confidences differ")
        })?;
    }
    Ok("100 datasets preserve target supports and rule confidences".into())
}

fn confidence_gate() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let params = MiningParams {
        min_support: MinSupport::Absolute(1),
        ..MiningParams::default()
    };
    let mut checked = 0;
    for _ in 0..200 {
        let data = random_dataset(&mut rng, 10, 64);
        let (_, rules) = mine(&data, &params);
        ensure(rules.iter().all(|r| r.4 >= 0.70), || {
            "rule below 0.70".into()
        })?;
        checked += rules.len();
    }
    let mut rows = vec![vec![0, 1]; 7];
    rows.extend(vec![vec![0]; 3]);
    let (_, rules) = mine(&dataset(&rows, 2), &params);
    ensure(rules.iter().any(|r| r.0 == [0] && r.4 == 0.7), || {
        "7/10 rule missing".into()
    })?;
    let mut rows = vec![vec![0, 1]; 69];
    rows.extend(vec![vec![0]; 31]);
    let (_, rules) = mine(&dataset(&rows, 2), &params);
    ensure(!rules.iter().any(|r| r.0 == [0]), || {
        "69/100 rule kept".into()
    })?;
    Ok(format!(
        "{checked} mined rules >= 0.70; 7/10 kept, 69/100 dropped"
    ))
}

fn instance_table(rows: Vec<(Vec<f64>, f64)>) -> InstanceTable {
    let width = rows[0].0.len();
    InstanceTable::new(
        (0..width).map(|i| format!("x{i}")).collect(),
        rows.into_iter()
            .map(|(features, target)| Instance { features, target })
            .collect(),
    )
    .unwrap()
}

fn model_tree() -> Check {
    let params = TreeParams::default();

    let constant = instance_table((0..30).map(|i| (vec![i as f64], 7.0)).collect());
    let tree = fit(&constant, &params).map_err(|e| e.to_string())?;
    ensure(tree.root.node_count() == 1, || {
        "constant target split".into()
    })?;
    ensure(
        constant
            .rows
            .iter()
            .all(|r| predict(&tree, &r.features, true).unwrap() == 7.0),
        || "constant target error".into(),
    )?;

    let line = instance_table((0..50).map(|i| (vec![i as f64], 2.0 * i as f64)).collect());
    let tree = fit(&line, &params).map_err(|e| e.to_string())?;
    for smoothing in [true, false] {
        let mse = line
            .rows
            .iter()
            .map(|r| (predict(&tree, &r.features, smoothing).unwrap() - r.target).powi(2))
            .sum::<f64>()
            / 50.0;
        ensure(mse.sqrt() <= 1e-6, || format!("y=2x rmse {}", mse.sqrt()))?;
    }

    let step = instance_table(
        (0..40)
            .map(|i| (vec![i as f64], if i < 10 { 0.0 } else { 100.0 }))
            .collect(),
    );
    let grown = grow_tree(&step, &params).map_err(|e| e.to_string())?;
    let (_, want, _) = brute_best_split(&step, params.min_leaf).ok_or("oracle found no split")?;
    match grown.root {
        Node::Split { threshold, .. } => ensure(threshold == want, || {
            format!("split at {threshold}, oracle {want}")
        })?,
        Node::Leaf { .. } => return Err("breakpoint data not split".into()),
    }

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let noisy = instance_table(
        (0..120)
            .map(|_| {
                let x = vec![rng.random_range(0.0..10.0), rng.random_range(0.0..10.0)];
                let y =
                    if x[0] < 5.0 { x[1] } else { 20.0 - 2.0 * x[1] } + rng.random_range(-1.0..1.0);
                (x, y)
            })
            .collect(),
    );
    let tree = fit(&noisy, &params).map_err(|e| e.to_string())?;
    ensure(tree.root.node_count() > 1, || {
        "smoothing check needs a split".into()
    })?;
    let zero_k = ModelTree {
        params: TreeParams {
            smoothing_k: 0.0,
            ..params
        },
        ..tree.clone()
    };
    for _ in 0..1000 {
        let x = vec![rng.random_range(-5.0..15.0), rng.random_range(-5.0..15.0)];
        ensure(
            predict(&zero_k, &x, true).unwrap() == predict(&tree, &x, false).unwrap(),
            || format!("k = 0 smoothing changed {x:?}"),
        )?;
    }

    let hand = ModelTree {
        format_version: MODEL_FORMAT_VERSION,
        feature_names: vec!["x".into()],
        params,
        root: Node::Split {
            feature: 0,
            threshold: 0.5,
            model: LinearModel::constant(4.0),
            n: 30,
            left: Box::new(Node::Leaf {
                model: LinearModel::constant(10.0),
                n: 20,
            }),
            right: Box::new(Node::Leaf {
                model: LinearModel::constant(0.0),
                n: 10,
            }),
        },
    };
    let p = predict(&hand, &[0.0], true).unwrap();
    ensure((p - 260.0 / 35.0).abs() <= 1e-9, || format!("smoothed {p}"))?;
    Ok("constant, y=2x, breakpoint, k=0 (1000 inputs), 260/35".into())
}

fn kmeans_suite() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for problem in 0..50 {
        let n = rng.random_range(4..60);
        let dim = rng.random_range(1..5);
        let points: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..dim).map(|_| rng.random_range(-10.0..10.0)).collect())
            .collect();
        let params = KMeansParams {
            k: rng.random_range(1..=n.min(6)),
            seed: problem,
            ..KMeansParams::default()
        };
        let result = kmeans(&points, &params).map_err(|e| e.to_string())?;
        ensure(
            result
                .inertia_history
                .windows(2)
                .all(|w| w[1] <= w[0] + 1e-9),
            || format!("problem {problem}: {:?}", result.inertia_history),
        )?;
    }

    let centers = [[0.0, 0.0], [40.0, 0.0], [0.0, 40.0], [40.0, 40.0]];
    let mut points = Vec::new();
    let mut truth = Vec::new();
    for (c, center) in centers.iter().enumerate() {
        for _ in 0..20 {
            points.push(vec![
                center[0] + rng.random_range(-1.5..1.5),
                center[1] + rng.random_range(-1.5..1.5),
            ]);
            truth.push(c);
        }
    }
    let result = kmeans(&points, &KMeansParams::default()).map_err(|e| e.to_string())?;
    for i in 0..points.len() {
        for j in 0..points.len() {
            ensure(
                (truth[i] == truth[j]) == (result.assignments[i] == result.assignments[j]),
                || "blobs not recovered".into(),
            )?;
        }
    }

    let few: Vec<Vec<f64>> = (0..7).map(|i| vec![i as f64, (i * i) as f64]).collect();
    let all = kmeans(
        &few,
        &KMeansParams {
            k: 7,
            ..KMeansParams::default()
        },
    )
    .map_err(|e| e.to_string())?;
    ensure(all.inertia == 0.0, || {
        format!("k = n inertia {}", all.inertia)
    })?;
    Ok("50 monotone problems, 4 blobs recovered, k = n gives 0".into())
}

fn planted_spec(seed: u64, start: (i32, u32, u32)) -> SyntheticSpec {
    SyntheticSpec {
        item_count: 15,
        basket_count: 10_000,
        day_span: 30,
        start_date: chrono::NaiveDate::from_ymd_opt(start.0, start.1, start.2).unwrap(),
        base_probabilities: vec![0.3, 0.0],
        planted: vec![PlantedRule {
            antecedent: vec![0],
            consequent: vec![1],
            probability: 0.9,
        }],
        seed,
        ..SyntheticSpec::default()
    }
}

fn write_csv(path: &Path, spec: &SyntheticSpec) {
    let table = generate_synthetic(spec).unwrap();
    write_wide_csv(
        &table,
        std::io::BufWriter::new(fs::File::create(path).unwrap()),
    )
    .unwrap();
}

fn pipeline_config(dir: &Path, out: &str) -> PipelineConfig {
    PipelineConfig {
        input: dir.join("train.csv"),
        holdout: Some(dir.join("fresh.csv")),
        output_dir: dir.join(out),
        ..PipelineConfig::default()
    }
}

fn planted_rule(dir: &Path) -> Check {
    write_csv(&dir.join("train.csv"), &planted_spec(100, (2014, 1, 1)));
    write_csv(&dir.join("fresh.csv"), &planted_spec(200, (2014, 1, 31)));
    let outcome = run_pipeline(&pipeline_config(dir, "run1")).map_err(|e| e.to_string())?;
    let rule = outcome
        .rules
        .iter()
        .find(|r| r.antecedent == ["sku000"] && r.consequent == ["sku001"])
        .ok_or("planted rule not mined")?;
    ensure((rule.confidence - 0.9).abs() <= 0.05, || {
        format!("confidence {}", rule.confidence)
    })?;
    let validation = outcome.validation.ok_or("no holdout validation")?;
    let check = validation
        .validated
        .iter()
        .find(|c| c.rule.antecedent == ["sku000"] && c.rule.consequent == ["sku001"])
        .ok_or("planted rule eliminated on holdout")?;
    Ok(format!(
        "confidence {:.4}, holdout {:.4}",
        rule.confidence,
        check.holdout_confidence.unwrap_or(f64::NAN)
    ))
}

fn determinism(dir: &Path) -> Check {
    let second = run_pipeline(&pipeline_config(dir, "run2")).map_err(|e| e.to_string())?;
    let first = dir.join("run1");
    let mut names: Vec<_> = fs::read_dir(&first)
        .map_err(|e| e.to_string())?
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    ensure(names.len() >= 10, || {
        format!("only {} artifacts", names.len())
    })?;
    for name in &names {
        let a = fs::read(first.join(name)).map_err(|e| e.to_string())?;
        let b = fs::read(second.output_dir.join(name)).map_err(|e| format!("{name:?}: {e}"))?;
        ensure(a == b, || format!("{name:?} differs"))?;
    }
    Ok(format!("{} artifacts byte-identical", names.len()))
}

fn main() {
    // keep panics from criteria out of the report lines
    std::panic::set_hook(Box::new(|_| {}));
    let dir = tempfile::tempdir().expect("temp dir");
    let results = [
        run(
            1,
            "accuracy grid golden values",
            Some(Duration::from_secs(1)),
            golden_grid,
        ),
        run(2, "validity horizon", None, horizon),
        run(
            3,
            "apriori vs exhaustive enumeration",
            Some(Duration::from_secs(30)),
            apriori_oracle,
        ),
        run(
            4,
            "reduction preserves target statistics",
            None,
            reduction_preservation,
        ),
        run(5, "confidence gate", None, confidence_gate),
        run(6, "model tree sanity", None, model_tree),
        run(7, "k-means", None, kmeans_suite),
        run(
            8,
            "planted rule end to end",
            Some(Duration::from_secs(60)),
            || planted_rule(dir.path()),
        ),
        run(9, "deterministic artifacts", None, || {
            determinism(dir.path())
        }),
    ];
    let failed = results.iter().filter(|ok| !**ok).count();
    println!(
        "acceptance: {} passed, {failed} failed",
        results.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
