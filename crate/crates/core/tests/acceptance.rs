//! End-to-end acceptance checks. Runs as a plain binary so every
//! criterion prints exactly one PASS/FAIL line, and exits non-zero if any
//! criterion fails.

use std::collections::{BTreeMap, HashMap};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crowdsense_core::apc_audit::{audit, audit_sharded, ApcStopRecord, AuditReport};
use crowdsense_core::classifiers::{
    load_model, save_model, train_forest, train_mlp, train_tree, ForestConfig, ForestModel,
    LabeledMatrix, MlpConfig, MlpModel, Model, TreeConfig,
};
use crowdsense_core::crowd_model::{fit_crowd, FullnessObservation};
use crowdsense_core::data_model::{
    clean_sessions, split_train_test, ActivityClass, SensorSession, DEFAULT_MIN_SAMPLES,
    DEFAULT_MIN_SPAN_MS, TABLE1_TEST_PER_CLASS, TABLE1_TRAIN_COUNTS,
};
use crowdsense_core::eval::{accuracy, confusion, ConfusionMatrix, MergeMap};
use crowdsense_core::features::{extract_features, summarize, Statistic};
use crowdsense_core::fleet_sim::{
    default_specs, generate_dataset_with_counts, generate_observations, generate_scenario,
    run_scenario, ObservationConfig, RunOptions, ScenarioConfig,
};

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(elapsed: Duration, budget_s: u64) -> Result<(), String> {
    ensure(
        elapsed < Duration::from_secs(budget_s),
        format!("took {:.1} s, budget {budget_s} s", elapsed.as_secs_f64()),
    )
}

// ---------------------------------------------------------------- AC-1

/// Textbook definitions, evaluated independently of the library.
fn oracle_statistics(xs: &[f64]) -> [f64; 8] {
    let n = xs.len();
    let nf = n as f64;
    let mean = xs.iter().sum::<f64>() / nf;
    let mean_abs = xs.iter().map(|x| x.abs()).sum::<f64>() / nf;
    let variance = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / nf;
    let avg_abs_diff = xs.iter().map(|x| (x - mean).abs()).sum::<f64>() / nf;
    // insertion sort, then closest-rank interpolation
    let mut s = Vec::with_capacity(n);
    for &x in xs {
        let pos = s.iter().position(|&y| y > x).unwrap_or(s.len());
        s.insert(pos, x);
    }
    let pct = |p: f64| {
        let h = (n - 1) as f64 * p;
        let i = h as usize;
        if i + 1 >= n {
            s[n - 1]
        } else {
            s[i] + (h - i as f64) * (s[i + 1] - s[i])
        }
    };
    let (p25, p50, p75) = (pct(0.25), pct(0.5), pct(0.75));
    [
        mean,
        mean_abs,
        p50,
        variance,
        variance.sqrt(),
        avg_abs_diff,
        p75 - p25,
        p75,
    ]
}

fn ac1() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let len = rng.random_range(1..=500);
        let scale = 10f64.powi(rng.random_range(-3..=3));
        let offset = rng.random_range(-50.0..50.0) * scale;
        let xs: Vec<f64> = (0..len)
            .map(|_| offset + scale * rng.random_range(-1.0..1.0))
            .collect();
        let got = summarize(&xs).map_err(|e| e.to_string())?.to_array();
        let want = oracle_statistics(&xs);
        let floor = xs
            .iter()
            .fold(0.0f64, |m, x| m.max(x.abs()))
            .max(f64::MIN_POSITIVE);
        for (k, (g, w)) in got.iter().zip(want).enumerate() {
            // variance is in squared units
            let unit = if Statistic::ALL[k] == Statistic::Variance {
                floor * floor
            } else {
                floor
            };
            let rel = (g - w).abs() / w.abs().max(unit * 1e-6);
            worst = worst.max(rel);
            ensure(
                rel <= 1e-9,
                format!(
                    "{:?} of a length-{len} series: {g} vs {w}",
                    Statistic::ALL[k]
                ),
            )?;
        }
    }
    within(start.elapsed(), 5)?;
    Ok(format!("1000 series, max relative error {worst:.2e}"))
}

// ---------------------------------------------------------------- AC-2

/// Integer block errors with the given count, sum, and sum of squares.
/// Starts from a rounded Gaussian and walks `(a, b) -> (a + 1, b - 1)`,
/// which keeps the sum and changes the sum of squares by `2(a - b + 1)`.
fn errors_with_moments(n: usize, sum: i64, sum_sq: i64, std: f64, seed: u64) -> Vec<i64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut e: Vec<i64> = (0..n)
        .map(|_| {
            let z: f64 = rng.sample(rand_distr::StandardNormal);
            (z * std).round() as i64
        })
        .collect();
    let mut s: i64 = e.iter().sum();
    while s != sum {
        let i = rng.random_range(0..n);
        let step = (sum - s).signum();
        e[i] += step;
        s += step;
    }
    let mut q: i64 = e.iter().map(|x| x * x).sum();
    assert_eq!(
        (sum_sq - q) % 2,
        0,
        "parity of the sum of squares is fixed by the sum"
    );
    let mut by_value: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (i, &x) in e.iter().enumerate() {
        by_value.entry(x).or_default().push(i);
    }
    while q != sum_sq {
        let half = ((sum_sq - q) / 2).clamp(-20, 20);
        // want a - b + 1 = half
        let target_gap = half - 1;
        let pair = by_value.iter().find_map(|(&a, ia)| {
            let b = a - target_gap;
            let ib = by_value.get(&b)?;
            let i = ia[0];
            let j = *ib.iter().find(|&&j| j != i)?;
            Some((i, j))
        });
        let (i, j) = pair.expect("a suitable pair exists in a Gaussian sample");
        for (idx, delta) in [(i, 1), (j, -1)] {
            let old = e[idx];
            let bucket = by_value.get_mut(&old).unwrap();
            bucket.retain(|&k| k != idx);
            if bucket.is_empty() {
                by_value.remove(&old);
            }
            e[idx] = old + delta;
            by_value.entry(old + delta).or_default().push(idx);
        }
        q += 2 * half;
    }
    e
}

/// Two stops per block: boardings carry the positive part of the error,
/// alightings the negative part.
fn records_for(errors: &[i64], date: &str) -> Vec<ApcStopRecord> {
    errors
        .iter()
        .enumerate()
        .flat_map(|(b, &err)| {
            let block_id = format!("B{b:06}");
            [
                ApcStopRecord {
                    service_date: date.into(),
                    block_id: block_id.clone(),
                    trip_id: format!("{block_id}-1"),
                    stop_sequence: 1,
                    ons: 12 + err.max(0) as u32,
                    offs: 0,
                },
                ApcStopRecord {
                    service_date: date.into(),
                    block_id: block_id.clone(),
                    trip_id: format!("{block_id}-1"),
                    stop_sequence: 2,
                    ons: 0,
                    offs: 12 + (-err).max(0) as u32,
                },
            ]
        })
        .collect()
}

fn round_to(x: f64, places: i32) -> f64 {
    let f = 10f64.powi(places);
    (x * f).round() / f
}

fn table2_case(
    n: usize,
    mean: f64,
    variance: f64,
    sem: f64,
    date: &str,
    seed: u64,
) -> Result<AuditReport, String> {
    let sum = (mean * n as f64).round() as i64;
    // sum of squares giving the closest population variance, with the parity of `sum`
    let exact = variance * n as f64 + (sum * sum) as f64 / n as f64;
    let mut sum_sq = exact.round() as i64;
    if (sum_sq - sum).rem_euclid(2) != 0 {
        sum_sq += if exact > sum_sq as f64 { 1 } else { -1 };
    }
    let errors = errors_with_moments(n, sum, sum_sq, variance.sqrt(), seed);
    let report = audit(&records_for(&errors, date)).map_err(|e| e.to_string())?;
    ensure(
        report.n_blocks == n as u64,
        format!("{} blocks, want {n}", report.n_blocks),
    )?;
    ensure(
        round_to(report.mean, 2) == mean,
        format!("mean {}", report.mean),
    )?;
    ensure(
        round_to(report.variance, 2) == variance,
        format!("variance {}", report.variance),
    )?;
    ensure(
        round_to(report.sem, 3) == sem,
        format!("sem {} does not round to {sem}", report.sem),
    )?;
    ensure(
        (report.sem - (variance / n as f64).sqrt()).abs() < 1e-6,
        format!("sem {} vs sqrt(var/n)", report.sem),
    )?;
    Ok(report)
}

fn ac2() -> Check {
    let start = Instant::now();
    let a = table2_case(94_498, -0.24, 34.61, 0.019, "2016-11", 11)?;
    let b = table2_case(77_797, -0.09, 45.56, 0.024, "2017-03", 3)?;
    within(start.elapsed(), 10)?;
    Ok(format!("sem {:.5} -> 0.019, {:.5} -> 0.024", a.sem, b.sem))
}

// ---------------------------------------------------------------- AC-3

fn random_records(
    n_records: usize,
    n_blocks: usize,
    conserved: bool,
    seed: u64,
) -> Vec<ApcStopRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_records);
    let per_block = n_records / n_blocks;
    for b in 0..n_blocks {
        let stops = if b + 1 == n_blocks {
            n_records - per_block * (n_blocks - 1)
        } else {
            per_block
        };
        let date = ["2016-11-01", "2016-11-02", "2017-03-01"][b % 3].to_string();
        let mut load: i64 = 0;
        for s in 0..stops {
            let ons = rng.random_range(0..15u32);
            let mut offs = rng.random_range(0..15u32).min((load + ons as i64) as u32);
            if conserved && s + 1 == stops {
                offs = (load + ons as i64) as u32;
            }
            load += ons as i64 - offs as i64;
            out.push(ApcStopRecord {
                service_date: date.clone(),
                block_id: format!("blk{b}"),
                trip_id: format!("blk{b}-t{}", s / 10),
                stop_sequence: s as u32,
                ons,
                offs,
            });
        }
    }
    out.shuffle(&mut rng);
    out
}

fn bits(r: &AuditReport) -> (u64, u64, u64, u64, u64, i64, i64, Vec<(i64, u64)>) {
    (
        r.n_blocks,
        r.mean.to_bits(),
        r.variance.to_bits(),
        r.sem.to_bits(),
        r.nonzero_fraction.to_bits(),
        r.min_error,
        r.max_error,
        r.histogram.clone(),
    )
}

fn ac3() -> Check {
    let conserved = audit(&random_records(20_000, 400, true, 7)).map_err(|e| e.to_string())?;
    ensure(
        conserved.mean == 0.0 && conserved.variance == 0.0 && conserved.nonzero_fraction == 0.0,
        format!("conserved blocks: {conserved:?}"),
    )?;
    let records = random_records(100_000, 5_000, false, 8);
    let sequential = audit(&records).map_err(|e| e.to_string())?;
    ensure(
        sequential.nonzero_fraction > 0.0,
        "random dataset should have errors",
    )?;
    for shards in [1, 2, 3, 7, 16, 64, 1000] {
        let parallel = audit_sharded(&records, shards).map_err(|e| e.to_string())?;
        ensure(
            bits(&parallel) == bits(&sequential),
            format!("{shards} shards differ from sequential"),
        )?;
    }
    Ok(format!(
        "conserved -> zeros; 1e5 records, 7 shardings bit-identical (mean {:.4})",
        sequential.mean
    ))
}

// ---------------------------------------------------------------- AC-4

type Row = (u8, u8, u8); // (x0, x1, class)

/// `n - Σc²/n` as an exact fraction `num / den`.
fn weighted_gini(counts: [u64; 2]) -> (u64, u64) {
    let n = counts[0] + counts[1];
    (n * n - counts[0] * counts[0] - counts[1] * counts[1], n)
}

fn less(a: (u64, u64), b: (u64, u64)) -> bool {
    (a.0 as u128) * (b.1 as u128) < (b.0 as u128) * (a.1 as u128)
}

fn add(a: (u64, u64), b: (u64, u64)) -> (u64, u64) {
    (a.0 * b.1 + b.0 * a.1, a.1 * b.1)
}

enum OracleTree {
    Leaf(u8),
    Split {
        feature: usize,
        threshold: f64,
        left: Box<OracleTree>,
        right: Box<OracleTree>,
    },
}

impl OracleTree {
    fn predict(&self, x: [u8; 2]) -> u8 {
        match self {
            OracleTree::Leaf(c) => *c,
            OracleTree::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                if (x[*feature] as f64) <= *threshold {
                    left.predict(x)
                } else {
                    right.predict(x)
                }
            }
        }
    }
}

/// Greedy tree that tries every feature and every threshold between
/// neighboring present values, compares scores as exact fractions and
/// keeps the first strict minimum.
fn oracle_tree(rows: &[Row], depth: usize) -> OracleTree {
    let mut counts = [0u64; 2];
    for r in rows {
        counts[r.2 as usize] += 1;
    }
    let majority = if counts[1] > counts[0] { 1 } else { 0 };
    if counts[0] == 0 || counts[1] == 0 || rows.len() < 2 || depth == 20 {
        return OracleTree::Leaf(majority);
    }
    let parent = weighted_gini(counts);
    let mut best: Option<((u64, u64), usize, f64)> = None;
    for feature in 0..2 {
        let value = |r: &Row| if feature == 0 { r.0 } else { r.1 };
        let mut present: Vec<u8> = rows.iter().map(value).collect();
        present.sort();
        present.dedup();
        for w in present.windows(2) {
            let threshold = (w[0] as f64 + w[1] as f64) / 2.0;
            let (mut l, mut r) = ([0u64; 2], [0u64; 2]);
            for row in rows {
                if (value(row) as f64) <= threshold {
                    l[row.2 as usize] += 1;
                } else {
                    r[row.2 as usize] += 1;
                }
            }
            let score = add(weighted_gini(l), weighted_gini(r));
            if best.is_none_or(|(b, _, _)| less(score, b)) {
                best = Some((score, feature, threshold));
            }
        }
    }
    match best {
        Some((score, feature, threshold)) if less(score, parent) => {
            let value = |r: &Row| if feature == 0 { r.0 } else { r.1 };
            let (l, r): (Vec<Row>, Vec<Row>) = rows
                .iter()
                .partition(|row| (value(row) as f64) <= threshold);
            OracleTree::Split {
                feature,
                threshold,
                left: Box::new(oracle_tree(&l, depth + 1)),
                right: Box::new(oracle_tree(&r, depth + 1)),
            }
        }
        _ => OracleTree::Leaf(majority),
    }
}

/// Every multiset of 1..=max_rows rows over the given row types.
fn multisets(types: usize, max_rows: usize) -> Vec<Vec<usize>> {
    fn rec(
        start: usize,
        types: usize,
        left: usize,
        cur: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        if !cur.is_empty() {
            out.push(cur.clone());
        }
        if left == 0 {
            return;
        }
        for t in start..types {
            cur.push(t);
            rec(t, types, left - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, types, max_rows, &mut Vec::new(), &mut out);
    out
}

fn ac4() -> Check {
    let start = Instant::now();
    let types: Vec<Row> = (0..3u8)
        .flat_map(|a| (0..3u8).flat_map(move |b| (0..2u8).map(move |c| (a, b, c))))
        .collect();
    let sets = multisets(types.len(), 8);
    let names = vec!["a".to_string(), "b".to_string()];
    let threads = std::thread::available_parallelism().map_or(4, |n| n.get());
    let chunk = sets.len().div_ceil(threads);
    let failures: Vec<String> = std::thread::scope(|scope| {
        let handles: Vec<_> = sets
            .chunks(chunk)
            .map(|part| {
                let (types, names) = (&types, &names);
                scope.spawn(move || {
                    let mut rng = ChaCha8Rng::seed_from_u64(0);
                    let config = TreeConfig::default();
                    let mut failures = Vec::new();
                    for set in part {
                        let rows: Vec<Row> = set.iter().map(|&t| types[t]).collect();
                        let data = LabeledMatrix::new(
                            rows.iter().map(|r| vec![r.0 as f64, r.1 as f64]).collect(),
                            rows.iter().map(|r| r.2 as usize).collect(),
                            names.clone(),
                        )
                        .unwrap();
                        let tree = train_tree(&data, &config, &mut rng).unwrap();
                        let oracle = oracle_tree(&rows, 0);
                        let correct_tree = rows
                            .iter()
                            .filter(|r| tree.predict(&[r.0 as f64, r.1 as f64]) == r.2 as usize)
                            .count();
                        let correct_oracle = rows
                            .iter()
                            .filter(|r| oracle.predict([r.0, r.1]) == r.2)
                            .count();
                        if correct_tree != correct_oracle {
                            failures.push(format!(
                                "{rows:?}: tree {correct_tree} vs oracle {correct_oracle}"
                            ));
                        }
                    }
                    failures
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().unwrap())
            .collect()
    });
    ensure(
        failures.is_empty(),
        format!(
            "{} mismatches, first: {}",
            failures.len(),
            failures.first().map_or("", |s| s)
        ),
    )?;
    within(start.elapsed(), 60)?;
    Ok(format!(
        "{} datasets, all training accuracies equal",
        sets.len()
    ))
}

// ---------------------------------------------------------------- AC-5

fn param_mut(m: &mut MlpModel, tensor: usize, i: usize) -> &mut f64 {
    match tensor {
        0 => &mut m.w1[i],
        1 => &mut m.b1[i],
        2 => &mut m.w2[i],
        _ => &mut m.b2[i],
    }
}

fn ac5() -> Check {
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let (n_in, hidden, n_classes, rows) = (6, 7, 4, 5);
        let names = (0..n_classes).map(|k| format!("c{k}")).collect();
        let mut model = MlpModel::zeros(n_in, hidden, names);
        for w in model
            .w1
            .iter_mut()
            .chain(&mut model.b1)
            .chain(&mut model.w2)
            .chain(&mut model.b2)
        {
            *w = rng.random_range(-1.0..1.0);
        }
        let inputs: Vec<f64> = (0..rows * n_in)
            .map(|_| rng.random_range(-2.0..2.0))
            .collect();
        let labels: Vec<usize> = (0..rows).map(|_| rng.random_range(0..n_classes)).collect();
        let (_, grads) = model.batch_loss_and_gradients(&inputs, &labels);

        let eps = 1e-5;
        let analytic = [&grads.w1, &grads.b1, &grads.w2, &grads.b2];
        for (p, analytic) in analytic.into_iter().enumerate() {
            for i in 0..analytic.len() {
                let mut plus = model.clone();
                let mut minus = model.clone();
                *param_mut(&mut plus, p, i) += eps;
                *param_mut(&mut minus, p, i) -= eps;
                let numeric = (plus.batch_loss(&inputs, &labels)
                    - minus.batch_loss(&inputs, &labels))
                    / (2.0 * eps);
                let a = analytic[i];
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
                worst = worst.max(rel);
                checked += 1;
                ensure(
                    rel < 1e-4,
                    format!("seed {seed}, tensor {p}, index {i}: analytic {a} numeric {numeric}"),
                )?;
            }
        }
    }
    Ok(format!(
        "{checked} parameters over 10 seeds, max relative error {worst:.2e}"
    ))
}

// ---------------------------------------------------------------- AC-6

struct Table1Run {
    forest: ForestModel,
    fine: f64,
    transport: f64,
    bus_posture: f64,
    elapsed: Duration,
}

fn feature_matrix(sessions: &[SensorSession]) -> LabeledMatrix {
    let rows = sessions
        .iter()
        .map(|s| extract_features(s).unwrap().values.to_vec())
        .collect();
    let labels = sessions
        .iter()
        .map(|s| s.class().unwrap().index())
        .collect();
    LabeledMatrix::new(rows, labels, ActivityClass::all_tokens()).unwrap()
}

fn table1_run(seed: u64) -> Table1Run {
    let start = Instant::now();
    let specs = default_specs();
    let counts = std::array::from_fn(|c| TABLE1_TRAIN_COUNTS[c] + TABLE1_TEST_PER_CLASS);
    let sessions = generate_dataset_with_counts(&specs, &counts, seed);
    let sessions = clean_sessions(sessions, DEFAULT_MIN_SAMPLES, DEFAULT_MIN_SPAN_MS);
    let split = split_train_test(sessions, TABLE1_TEST_PER_CLASS, seed).unwrap();
    assert_eq!((split.train.len(), split.test.len()), (2909, 300));
    let train = feature_matrix(&split.train);
    let test = feature_matrix(&split.test);
    let forest = train_forest(&train, &ForestConfig::default(), seed).unwrap();
    let pred: Vec<usize> = (0..test.n_rows())
        .map(|i| forest.predict(test.row(i)).unwrap().0)
        .collect();
    let truth = test.labels();
    let merged = |map: MergeMap| {
        accuracy(
            &map.apply_all(&pred).unwrap(),
            &map.apply_all(truth).unwrap(),
        )
        .unwrap()
    };
    Table1Run {
        fine: accuracy(&pred, truth).unwrap(),
        transport: merged(MergeMap::transport()),
        bus_posture: merged(MergeMap::bus_posture()),
        forest,
        elapsed: start.elapsed(),
    }
}

fn ac6(run: &Table1Run) -> Check {
    let line = format!(
        "fine {:.4}, transport {:.4}, bus-posture {:.4} in {:.1} s",
        run.fine,
        run.transport,
        run.bus_posture,
        run.elapsed.as_secs_f64()
    );
    ensure(
        run.fine >= 0.85,
        format!("fine accuracy below 0.85: {line}"),
    )?;
    ensure(
        run.transport >= 0.95,
        format!("transport accuracy below 0.95: {line}"),
    )?;
    ensure(
        run.bus_posture >= 0.92,
        format!("bus-posture accuracy below 0.92: {line}"),
    )?;
    ensure(
        run.transport >= run.fine && run.bus_posture >= run.fine,
        format!("merged below fine: {line}"),
    )?;
    within(run.elapsed, 300)?;
    Ok(line)
}

// ---------------------------------------------------------------- AC-7

/// Adds up fine cells into coarse cells, independently of the library.
fn block_aggregate(fine: &ConfusionMatrix, map: &MergeMap) -> Vec<Vec<u64>> {
    let k = map.n_coarse();
    let mut out = vec![vec![0u64; k]; k];
    for (i, row) in fine.counts.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            out[map.mapping[i]][map.mapping[j]] += c;
        }
    }
    out
}

fn ac7() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let names = ActivityClass::all_tokens();
    let maps = [MergeMap::transport(), MergeMap::bus_posture()];
    for trial in 0..1000 {
        let n = rng.random_range(1..=400);
        let skill = rng.random::<f64>();
        let truth: Vec<usize> = (0..n).map(|_| rng.random_range(0..15)).collect();
        let pred: Vec<usize> = truth
            .iter()
            .map(|&t| {
                if rng.random::<f64>() < skill {
                    t
                } else {
                    rng.random_range(0..15)
                }
            })
            .collect();
        let fine_acc = accuracy(&pred, &truth).unwrap();
        let fine = confusion(&pred, &truth, &names).unwrap();
        for map in &maps {
            let (cp, ct) = (
                map.apply_all(&pred).unwrap(),
                map.apply_all(&truth).unwrap(),
            );
            let coarse_acc = accuracy(&cp, &ct).unwrap();
            ensure(
                coarse_acc >= fine_acc,
                format!("trial {trial} {}: {coarse_acc} < {fine_acc}", map.name),
            )?;
            let merged = confusion(&cp, &ct, &map.coarse_names).unwrap();
            ensure(
                merged.counts == block_aggregate(&fine, map),
                format!(
                    "trial {trial} {}: merged confusion differs from block sums",
                    map.name
                ),
            )?;
            ensure(
                fine.aggregate(map).unwrap().counts == merged.counts,
                format!("trial {trial} {}: aggregate() differs", map.name),
            )?;
        }
    }
    Ok("1000 random sets, both merge maps".into())
}

// ---------------------------------------------------------------- AC-8

fn ac8() -> Check {
    let (true_slope, true_intercept, noise) = (10.0, 5.0, 1.5);
    let mut worst = 0.0f64;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(800 + seed);
        let obs: Vec<FullnessObservation> = (0..246)
            .map(|i| {
                let seats = rng.random_range(20..=40u32);
                let sitting = rng.random_range(0..=seats);
                let f = sitting as f64 / seats as f64;
                let z: f64 = rng.sample(rand_distr::StandardNormal);
                let standing = (true_slope * f + true_intercept + noise * z)
                    .round()
                    .max(0.0) as u32;
                FullnessObservation {
                    bus_id: format!("b{i}"),
                    route_id: "r".into(),
                    stop_index: i,
                    seats_total: seats,
                    sitting,
                    standing,
                }
            })
            .collect();
        let model = fit_crowd(&obs).map_err(|e| e.to_string())?;

        // closed-form OLS and its slope standard error
        let xs: Vec<f64> = obs
            .iter()
            .map(|o| o.sitting as f64 / o.seats_total as f64)
            .collect();
        let ys: Vec<f64> = obs.iter().map(|o| o.standing as f64).collect();
        let n = xs.len() as f64;
        let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let slope = sxy / sxx;
        let intercept = my - slope * mx;
        let sse: f64 = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (y - intercept - slope * x).powi(2))
            .sum();
        let se = (sse / (n - 2.0) / sxx).sqrt();

        ensure(
            (model.slope - slope).abs() <= 1e-9 * slope.abs(),
            format!("seed {seed}: slope {} vs {slope}", model.slope),
        )?;
        ensure(model.n_obs == 246, "n_obs")?;
        let z = (model.slope - true_slope).abs() / se;
        worst = worst.max(z);
        ensure(
            z <= 3.0,
            format!(
                "seed {seed}: slope {} is {z:.2} standard errors from {true_slope}",
                model.slope
            ),
        )?;
    }
    Ok(format!(
        "20 seeds, worst deviation {worst:.2} standard errors"
    ))
}

// ---------------------------------------------------------------- AC-9

fn ac9(forest: &ForestModel, train_time: Duration) -> Check {
    let start = Instant::now();
    let specs = default_specs();
    let crowd = fit_crowd(&generate_observations(&ObservationConfig::default(), 9).unwrap())
        .map_err(|e| e.to_string())?;
    let scenario =
        generate_scenario(&ScenarioConfig::default(), 2024).map_err(|e| e.to_string())?;
    let per_trip: HashMap<_, usize> = scenario
        .riders
        .iter()
        .filter_map(|r| r.trip_id.clone())
        .fold(HashMap::new(), |mut m, t| {
            *m.entry(t).or_default() += 1;
            m
        });
    ensure(scenario.vehicles.len() == 20, "20 vehicles")?;
    ensure(
        per_trip.values().all(|n| (8..=30).contains(n)),
        "8-30 riders per vehicle",
    )?;

    let options = RunOptions::default();
    let first =
        run_scenario(&scenario, &specs, forest, &crowd, &options).map_err(|e| e.to_string())?;
    let second =
        run_scenario(&scenario, &specs, forest, &crowd, &options).map_err(|e| e.to_string())?;
    ensure(first == second, "two runs with identical seeds differ")?;
    let s = first.summary;
    let line = format!(
        "category accuracy {:.2}, fraction MAE {:.4} over {} trips",
        s.category_accuracy, s.mean_abs_fraction_error, s.n_estimated
    );
    ensure(s.n_estimated == 20, format!("estimates withheld: {line}"))?;
    ensure(
        s.category_accuracy >= 0.90,
        format!("category accuracy below 0.90: {line}"),
    )?;
    ensure(
        s.mean_abs_fraction_error <= 0.15,
        format!("fraction MAE above 0.15: {line}"),
    )?;
    within(start.elapsed() + train_time, 120)?;
    Ok(line)
}

// ---------------------------------------------------------------- AC-10

fn small_forest(seed: u64) -> ForestModel {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let rows: Vec<Vec<f64>> = (0..300)
        .map(|_| (0..10).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let labels = rows
        .iter()
        .map(|r| usize::from(r[0] + r[3] * r[4] > 0.0) + usize::from(r[7] > 0.5))
        .collect();
    let data = LabeledMatrix::new(rows, labels, vec!["x".into(), "y".into(), "z".into()]).unwrap();
    train_forest(
        &data,
        &ForestConfig {
            n_trees: 30,
            ..Default::default()
        },
        seed,
    )
    .unwrap()
}

fn small_mlp(seed: u64) -> MlpModel {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let rows: Vec<Vec<f64>> = (0..120)
        .map(|_| (0..10).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let labels = rows.iter().map(|r| usize::from(r[1] > 0.0)).collect();
    let data = LabeledMatrix::new(rows, labels, vec!["x".into(), "y".into()]).unwrap();
    train_mlp(
        &data,
        &MlpConfig {
            epochs: 20,
            ..Default::default()
        },
        seed,
    )
    .unwrap()
}

fn ac10() -> Check {
    let models: [(Model, Model); 2] = [
        (small_forest(3).into(), small_forest(3).into()),
        (small_mlp(3).into(), small_mlp(3).into()),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut rejected = 0;
    for (a, b) in &models {
        let bytes = save_model(a);
        ensure(
            bytes == save_model(b),
            "identical seeds produced different model bytes",
        )?;
        let loaded = load_model(&bytes).map_err(|e| e.to_string())?;
        for _ in 0..100 {
            let x: Vec<f64> = (0..10).map(|_| rng.random_range(-3.0..3.0)).collect();
            let (p, q) = (a.predict(&x).unwrap(), loaded.predict(&x).unwrap());
            ensure(
                p.0 == q.0
                    && p.1
                        .iter()
                        .zip(&q.1)
                        .all(|(u, v)| u.to_bits() == v.to_bits()),
                "prediction changed after load",
            )?;
        }
        for _ in 0..50 {
            let mut bad = bytes.clone();
            let i = rng.random_range(0..bad.len());
            bad[i] ^= 1 << rng.random_range(0..8);
            ensure(
                load_model(&bad).is_err(),
                format!("flipped bit in byte {i} was accepted"),
            )?;
            rejected += 1;
        }
        for cut in [0, 3, 10, bytes.len() / 2, bytes.len() - 1] {
            ensure(
                load_model(&bytes[..cut]).is_err(),
                format!("truncation to {cut} bytes was accepted"),
            )?;
            rejected += 1;
        }
    }
    Ok(format!(
        "forest and perceptron byte-identical, {rejected} corrupted files rejected"
    ))
}

// ---------------------------------------------------------------- runner

fn run(id: usize, title: &str, check: impl FnOnce() -> Check) -> bool {
    let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into());
        Err(format!("panicked: {msg}"))
    });
    match outcome {
        Ok(detail) => {
            println!("[PASS] AC-{id} {title}: {detail}");
            true
        }
        Err(detail) => {
            println!("[FAIL] AC-{id} {title}: {detail}");
            false
        }
    }
}

fn main() {
    // `cargo test -- --list` and similar probes pass flags; only run for real.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let mut ok = Vec::new();
    ok.push(run(1, "feature statistics match oracle", ac1));
    ok.push(run(2, "audit reproduces published standard errors", ac2));
    ok.push(run(3, "audit conservation and sharding", ac3));
    ok.push(run(4, "greedy tree matches exhaustive oracle", ac4));
    ok.push(run(5, "perceptron gradients match finite differences", ac5));
    let table1 = catch_unwind(|| table1_run(42));
    match &table1 {
        Ok(run6) => ok.push(run(6, "synthetic classification thresholds", || ac6(run6))),
        Err(_) => ok.push(run(6, "synthetic classification thresholds", || {
            Err("training failed".into())
        })),
    }
    ok.push(run(7, "merged accuracy and confusion properties", ac7));
    ok.push(run(8, "crowd model slope recovery", ac8));
    match &table1 {
        Ok(run6) => ok.push(run(9, "end-to-end fleet scenario", || {
            ac9(&run6.forest, run6.elapsed)
        })),
        Err(_) => ok.push(run(9, "end-to-end fleet scenario", || {
            Err("training failed".into())
        })),
    }
    ok.push(run(10, "deterministic, checked model files", ac10));

    let passed = ok.iter().filter(|&&p| p).count();
    println!("acceptance: {passed}/{} criteria passed", ok.len());
    if passed != ok.len() {
        std::process::exit(1);
    }
}
