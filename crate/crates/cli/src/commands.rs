//! Subcommand bodies. Each validates its paths, then does its work.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crowdsense_core::apc_audit::{
    audit_sharded, parse_apc_csv, write_histogram_csv, CROPPED_LIMIT,
};
use crowdsense_core::classifiers::{
    load_model, save_model, train_forest, train_mlp, FeatureSubsample, ForestConfig, LabeledMatrix,
    MlpConfig, Model, TreeConfig,
};
use crowdsense_core::crowd_model::{
    fit_crowd, parse_observations_csv, write_observations_csv, CrowdModel,
};
use crowdsense_core::data_model::{
    clean_sessions, parse_sessions, split_train_test, write_sessions, ActivityClass, SensorSession,
    SessionFormat, TABLE1_TEST_PER_CLASS, TABLE1_TRAIN_COUNTS,
};
use crowdsense_core::eval::{
    confusion, merge_eval, render_report, EvalReport, MergeMap, ReportMode, BUS_POSTURE, TRANSPORT,
};
use crowdsense_core::features::{
    extract_features, read_feature_csv, write_feature_csv, FeatureRow, N_FEATURES,
};
use crowdsense_core::fleet_sim::{
    default_specs, generate_dataset_with_counts, generate_observations, generate_scenario,
    run_scenario, AggregateOptions, ObservationConfig, RunOptions, ScenarioConfig, SignalSpecs,
    SimScenario,
};
use log::info;

use crate::args::*;
use crate::failure::{data, internal, usage, CliResult, Context};

pub fn run(cli: &Cli) -> CliResult {
    let seed = cli.seed;
    match &cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Split(a) => split(a, seed),
        Command::Features(a) => features(a),
        Command::Train(a) => train(a, seed),
        Command::Eval(a) => eval(a),
        Command::Report(a) => report(a),
        Command::ApcAudit(a) => apc_audit(a),
        Command::CrowdFit(a) => crowd_fit(a),
        Command::Simulate(s) => match s {
            SimulateCommand::Dataset(a) => sim_dataset(a, seed),
            SimulateCommand::Observations(a) => sim_observations(a, seed),
            SimulateCommand::ScenarioFile(a) => sim_scenario_file(a, seed),
            SimulateCommand::Run(a) => sim_run(a),
            SimulateCommand::WriteSpecs(a) => sim_write_specs(a),
        },
    }
}

// ---- path handling ----

fn check_paths(inputs: &[&Path], outputs: &[&Path]) -> CliResult {
    for p in inputs {
        if !p.is_file() {
            return Err(usage(format!("{}: input file not found", p.display())));
        }
    }
    for p in outputs {
        if p.is_dir() {
            return Err(usage(format!(
                "{}: output path is a directory",
                p.display()
            )));
        }
        let parent = p
            .parent()
            .filter(|d| !d.as_os_str().is_empty())
            .unwrap_or(Path::new("."));
        if !parent.is_dir() {
            return Err(usage(format!(
                "{}: output directory does not exist",
                p.display()
            )));
        }
    }
    for (i, a) in outputs.iter().enumerate() {
        if inputs.contains(a) || outputs[..i].contains(a) {
            return Err(usage(format!("{}: path used twice", a.display())));
        }
    }
    Ok(())
}

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| data(format!("{}: {e}", path.display())))
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| data(format!("{}: {e}", path.display())))
}

fn write_with(
    path: &Path,
    body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
) -> CliResult {
    let fail = |e: std::io::Error| internal(format!("{}: {e}", path.display()));
    let mut w = BufWriter::new(File::create(path).map_err(fail)?);
    body(&mut w).and_then(|_| w.flush()).map_err(fail)
}

fn write_bytes(path: &Path, bytes: &[u8]) -> CliResult {
    write_with(path, |w| w.write_all(bytes))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> CliResult {
    let text = serde_json::to_string_pretty(value).map_err(|e| internal(e.to_string()))?;
    write_bytes(path, format!("{text}\n").as_bytes())
}

fn session_format(f: Format) -> SessionFormat {
    match f {
        Format::Jsonl => SessionFormat::JsonLines,
        Format::Csv => SessionFormat::Csv,
    }
}

fn read_sessions(path: &Path, format: Format) -> CliResult<Vec<SensorSession>> {
    parse_sessions(open(path)?, session_format(format)).in_file(path)
}

fn write_sessions_to(path: &Path, sessions: &[SensorSession], format: Format) -> CliResult {
    let file = File::create(path).map_err(|e| internal(format!("{}: {e}", path.display())))?;
    write_sessions(sessions, session_format(format), BufWriter::new(file)).in_file(path)
}

fn read_model(path: &Path) -> CliResult<Model> {
    let bytes = fs::read(path).map_err(|e| data(format!("{}: {e}", path.display())))?;
    load_model(&bytes).in_file(path)
}

fn read_specs(path: &Path) -> CliResult<SignalSpecs> {
    SignalSpecs::from_json(&read_text(path)?).in_file(path)
}

fn merge_map(m: Merge) -> Option<MergeMap> {
    match m {
        Merge::None => None,
        Merge::Transport => MergeMap::by_name(TRANSPORT),
        Merge::BusPosture => MergeMap::by_name(BUS_POSTURE),
    }
}

// ---- data pipeline ----

fn ingest(a: &IngestArgs) -> CliResult {
    check_paths(&[&a.input], &[&a.output])?;
    let sessions = read_sessions(&a.input, a.format)?;
    let n = sessions.len();
    let kept = clean_sessions(sessions, a.min_samples, a.min_span_ms);
    info!("kept {} of {n} sessions", kept.len());
    write_sessions_to(&a.output, &kept, Format::Jsonl)
}

fn split(a: &SplitArgs, seed: u64) -> CliResult {
    check_paths(&[&a.input], &[&a.train, &a.test])?;
    let sessions = read_sessions(&a.input, a.format)?;
    let s = split_train_test(sessions, a.per_class_test, seed).in_file(&a.input)?;
    info!("train {} / test {}", s.train.len(), s.test.len());
    write_sessions_to(&a.train, &s.train, a.format)?;
    write_sessions_to(&a.test, &s.test, a.format)
}

fn features(a: &FeaturesArgs) -> CliResult {
    check_paths(&[&a.input], &[&a.output])?;
    let sessions = read_sessions(&a.input, a.format)?;
    let mut rows = Vec::with_capacity(sessions.len());
    for s in &sessions {
        let features = extract_features(s).map_err(|e| {
            data(format!(
                "{}: session `{}`: {e}",
                a.input.display(),
                s.session_id
            ))
        })?;
        rows.push(FeatureRow {
            session_id: s.session_id.clone(),
            label: s.class(),
            features,
        });
    }
    let file =
        File::create(&a.output).map_err(|e| internal(format!("{}: {e}", a.output.display())))?;
    write_feature_csv(&rows, BufWriter::new(file)).in_file(&a.output)
}

fn read_labeled(path: &Path) -> CliResult<(Vec<Vec<f64>>, Vec<usize>)> {
    let rows = read_feature_csv(open(path)?).in_file(path)?;
    let mut x = Vec::with_capacity(rows.len());
    let mut y = Vec::with_capacity(rows.len());
    for r in rows {
        let class = r.label.ok_or_else(|| {
            data(format!(
                "{}: session `{}`: field `label_class` is empty",
                path.display(),
                r.session_id
            ))
        })?;
        x.push(r.features.values.to_vec());
        y.push(class.index());
    }
    if x.is_empty() {
        return Err(data(format!("{}: no rows", path.display())));
    }
    Ok((x, y))
}

fn parse_subsample(s: &str) -> CliResult<FeatureSubsample> {
    match s {
        "all" => Ok(FeatureSubsample::All),
        "sqrt" => Ok(FeatureSubsample::Count(
            (N_FEATURES as f64).sqrt().floor() as usize
        )),
        n => match n.parse::<usize>() {
            Ok(k) if (1..=N_FEATURES).contains(&k) => Ok(FeatureSubsample::Count(k)),
            _ => Err(usage(format!(
                "--feature-subsample: expected `all`, `sqrt`, or 1..={N_FEATURES}, got `{s}`"
            ))),
        },
    }
}

fn train(a: &TrainArgs, seed: u64) -> CliResult {
    check_paths(&[&a.features], &[&a.output])?;
    let subsample = parse_subsample(&a.feature_subsample)?;
    let (x, y) = read_labeled(&a.features)?;
    let (y, names) = match merge_map(a.merge) {
        Some(m) => (
            y.iter().map(|&c| m.apply(c)).collect(),
            m.coarse_names.clone(),
        ),
        None => (y, ActivityClass::all_tokens()),
    };
    let matrix = LabeledMatrix::new(x, y, names).in_file(&a.features)?;
    let model = match a.model {
        ModelKind::Forest => {
            let config = ForestConfig {
                n_trees: a.n_trees,
                tree: TreeConfig {
                    max_depth: a.max_depth,
                    feature_subsample: subsample,
                    ..TreeConfig::default()
                },
                ..ForestConfig::default()
            };
            Model::Forest(train_forest(&matrix, &config, seed).in_file(&a.features)?)
        }
        ModelKind::Mlp => {
            let config = MlpConfig {
                hidden: a.hidden,
                epochs: a.epochs,
                ..MlpConfig::default()
            };
            Model::Mlp(train_mlp(&matrix, &config, seed).in_file(&a.features)?)
        }
    };
    info!("trained {:?} on {} rows", a.model, matrix.n_rows());
    write_bytes(&a.output, &save_model(&model))
}

fn eval(a: &EvalArgs) -> CliResult {
    check_paths(&[&a.model, &a.features], &[&a.output])?;
    let model = read_model(&a.model)?;
    let (x, truth) = read_labeled(&a.features)?;
    let mut pred = Vec::with_capacity(x.len());
    for row in &x {
        pred.push(model.predict(row).in_file(&a.model)?.0);
    }
    let names = model.class_names().to_vec();
    let fine = names == ActivityClass::all_tokens();
    let retrained_on = [MergeMap::transport(), MergeMap::bus_posture()]
        .into_iter()
        .find(|m| m.coarse_names == names);

    let mut reports = Vec::new();
    match (a.merge_mode, fine, retrained_on) {
        (None | Some(MergeMode::Posthoc), true, _) => {
            let m = confusion(&pred, &truth, &names).in_file(&a.features)?;
            reports.push(EvalReport::new(ReportMode::Fine, None, &m));
            for map in [MergeMap::transport(), MergeMap::bus_posture()] {
                let (_, m) = merge_eval(&pred, &truth, &map).in_file(&a.features)?;
                reports.push(EvalReport::new(
                    ReportMode::MergedPosthoc,
                    Some(&map.name),
                    &m,
                ));
            }
        }
        (None | Some(MergeMode::Retrain), false, Some(map)) => {
            let truth = map.apply_all(&truth).in_file(&a.features)?;
            let m = confusion(&pred, &truth, &map.coarse_names).in_file(&a.features)?;
            reports.push(EvalReport::new(
                ReportMode::MergedRetrain,
                Some(&map.name),
                &m,
            ));
        }
        (Some(MergeMode::Posthoc), false, _) => {
            return Err(usage(
                "--merge-mode posthoc needs a model trained on all 15 classes",
            ));
        }
        (Some(MergeMode::Retrain), true, _) => {
            return Err(usage(
                "--merge-mode retrain needs a model trained with --merge",
            ));
        }
        _ => {
            return Err(data(format!(
                "{}: model classes match no known label space",
                a.model.display()
            )))
        }
    }
    for r in &reports {
        println!(
            "{:<15} {:<12} accuracy {:.4}",
            mode_name(r.mode),
            r.map.as_deref().unwrap_or("-"),
            r.accuracy
        );
    }
    write_json(&a.output, &reports)
}

fn mode_name(m: ReportMode) -> &'static str {
    match m {
        ReportMode::Fine => "fine",
        ReportMode::MergedPosthoc => "merged-posthoc",
        ReportMode::MergedRetrain => "merged-retrain",
    }
}

fn report(a: &ReportArgs) -> CliResult {
    let outputs: Vec<&Path> = a.output.iter().map(PathBuf::as_path).collect();
    check_paths(&[&a.input], &outputs)?;
    let reports: Vec<EvalReport> = serde_json::from_str(&read_text(&a.input)?).in_file(&a.input)?;
    let text = reports
        .iter()
        .map(render_report)
        .collect::<Vec<_>>()
        .join("\n");
    match &a.output {
        Some(p) => write_bytes(p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

// ---- audit and crowd model ----

fn apc_audit(a: &ApcAuditArgs) -> CliResult {
    let mut outputs: Vec<&Path> = vec![&a.output];
    outputs.extend(a.histogram.iter().chain(&a.cropped).map(PathBuf::as_path));
    check_paths(&[&a.input], &outputs)?;
    if a.shards == 0 {
        return Err(usage("--shards must be at least 1"));
    }
    let records = parse_apc_csv(open(&a.input)?).in_file(&a.input)?;
    let r = audit_sharded(&records, a.shards).in_file(&a.input)?;
    println!(
        "blocks {}  mean {:.4}  variance {:.4}  sem {:.4}  nonzero {:.2}%",
        r.n_blocks,
        r.mean,
        r.variance,
        r.sem,
        100.0 * r.nonzero_fraction
    );
    write_json(&a.output, &r)?;
    if let Some(p) = &a.histogram {
        write_with(p, |w| write_histogram_csv(&r.histogram, w))?;
    }
    if let Some(p) = &a.cropped {
        write_with(p, |w| {
            write_histogram_csv(&r.cropped_histogram(CROPPED_LIMIT), w)
        })?;
    }
    Ok(())
}

fn crowd_fit(a: &CrowdFitArgs) -> CliResult {
    check_paths(&[&a.input], &[&a.output])?;
    let obs = parse_observations_csv(open(&a.input)?).in_file(&a.input)?;
    let m = fit_crowd(&obs).in_file(&a.input)?;
    println!(
        "standing = {:.4} * fraction + {:.4}  (n = {}, r2 = {:.4})",
        m.slope, m.intercept, m.n_obs, m.r2
    );
    write_json(&a.output, &m)
}

// ---- simulation ----

fn sim_dataset(a: &DatasetArgs, seed: u64) -> CliResult {
    let inputs: Vec<&Path> = a.spec_file.iter().map(PathBuf::as_path).collect();
    check_paths(&inputs, &[&a.output])?;
    let specs = match &a.spec_file {
        Some(p) => read_specs(p)?,
        None => default_specs(),
    };
    let counts = match a.per_class {
        Some(n) => [n; ActivityClass::COUNT],
        None => std::array::from_fn(|c| TABLE1_TRAIN_COUNTS[c] + TABLE1_TEST_PER_CLASS),
    };
    let sessions = generate_dataset_with_counts(&specs, &counts, seed);
    info!("generated {} sessions", sessions.len());
    write_sessions_to(&a.output, &sessions, a.format)
}

fn sim_observations(a: &ObservationsArgs, seed: u64) -> CliResult {
    check_paths(&[], &[&a.output])?;
    let config = ObservationConfig {
        n: a.n,
        standing_noise: a.standing_noise,
        ..ObservationConfig::default()
    };
    let obs = generate_observations(&config, seed).map_err(|e| usage(e.to_string()))?;
    let file =
        File::create(&a.output).map_err(|e| internal(format!("{}: {e}", a.output.display())))?;
    write_observations_csv(&obs, BufWriter::new(file)).in_file(&a.output)
}

fn sim_scenario_file(a: &ScenarioFileArgs, seed: u64) -> CliResult {
    check_paths(&[], &[&a.output])?;
    let config = ScenarioConfig {
        n_vehicles: a.vehicles,
        riders_min: a.riders_min,
        riders_max: a.riders_max,
        participation: a.participation,
        off_trip_riders: a.off_trip_riders,
        ..ScenarioConfig::default()
    };
    let mut scenario = generate_scenario(&config, seed).map_err(|e| usage(e.to_string()))?;
    scenario.spec_file = a.spec_file.clone();
    write_json(&a.output, &scenario)
}

fn sim_run(a: &RunArgs) -> CliResult {
    let mut inputs: Vec<&Path> = vec![&a.scenario, &a.model, &a.crowd];
    inputs.extend(a.spec_file.iter().map(PathBuf::as_path));
    check_paths(&inputs, &[&a.output])?;
    if !(a.radius_m.is_finite() && a.radius_m > 0.0) {
        return Err(usage("--radius-m must be positive"));
    }
    let scenario: SimScenario =
        serde_json::from_str(&read_text(&a.scenario)?).in_file(&a.scenario)?;
    let spec_path = match (&a.spec_file, &scenario.spec_file) {
        (Some(p), _) => Some(p.clone()),
        (None, Some(rel)) => Some(a.scenario.parent().unwrap_or(Path::new("")).join(rel)),
        (None, None) => None,
    };
    let specs = match spec_path {
        Some(p) if !p.is_file() => {
            return Err(data(format!(
                "{}: spec file {} not found",
                a.scenario.display(),
                p.display()
            )))
        }
        Some(p) => read_specs(&p)?,
        None => default_specs(),
    };
    let model = read_model(&a.model)?;
    let crowd: CrowdModel = serde_json::from_str(&read_text(&a.crowd)?).in_file(&a.crowd)?;
    let options = RunOptions {
        radius_m: a.radius_m,
        aggregate: AggregateOptions {
            thresholds: a.thresholds,
            ..AggregateOptions::default()
        },
        ..RunOptions::default()
    };
    let r = run_scenario(&scenario, &specs, &model, &crowd, &options).in_file(&a.scenario)?;
    let s = &r.summary;
    println!(
        "trips {}  estimated {}  withheld {}  category accuracy {:.4}  mean abs fraction error {:.4}",
        s.n_trips, s.n_estimated, s.n_withheld, s.category_accuracy, s.mean_abs_fraction_error
    );
    write_json(&a.output, &r)
}

fn sim_write_specs(a: &WriteSpecsArgs) -> CliResult {
    check_paths(&[], &[&a.output])?;
    write_bytes(&a.output, default_specs().to_json().as_bytes())
}
