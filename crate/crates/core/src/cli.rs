//! `hietan` command line: dataset validation, cross-validation runs, model
//! training and prediction, feature usage reports and synthetic data.
//!
//! Exit codes: 0 success, 1 operational error, 2 validation findings.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::bayes::{fit, FittedClassifier};
use crate::chowliu::learn_tan_structure;
use crate::dataset::{
    generate_synthetic, load_dataset, repair_propagation, save_dataset, validate_propagation, Dataset,
};
use crate::error::{Error, Result};
use crate::eval::{
    average_ranks, friedman_holm, run_cv_experiment, CvConfig, CvResult, Method, UsageCriterion,
};
use crate::exec::{derive_seed, Exec};
use crate::hie_mst::{hie_mst_traced, TraceEvent};
use crate::hie_mst_lite::{hie_mst_lite, hie_mst_lite_traced};
use crate::hierarchy::{load_dag, write_dag, FeatureDag};
use crate::infostats::rank_edges;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_FINDINGS: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "hietan", version, about = "Hierarchy-constrained TAN classifiers")]
pub struct Cli {
    /// Worker threads for parallel sections (default: all cores)
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check that every 1-valued feature has all its ancestors set to 1
    Validate(ValidateArgs),
    /// Stratified cross-validation of one or all methods
    Cv(CvArgs),
    /// Fit a classifier on a whole dataset and write it as JSON
    Train(TrainArgs),
    /// Predict class labels for a CSV of instances
    Predict(PredictArgs),
    /// Rank features by how often the lazy method keeps them
    Features(FeaturesArgs),
    /// Write a synthetic hierarchy and a consistent dataset
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Tan,
    HieTan,
    HieTanLite,
    All,
}

impl MethodArg {
    fn methods(self) -> Vec<Method> {
        match self {
            MethodArg::Tan => vec![Method::Tan],
            MethodArg::HieTan => vec![Method::HieTan],
            MethodArg::HieTanLite => vec![Method::HieTanLite],
            MethodArg::All => Method::ALL.to_vec(),
        }
    }

    fn name(self) -> &'static str {
        match self {
            MethodArg::All => "all",
            m => m.methods()[0].name(),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Dataset CSV (`f1,..,fn,class`)
    #[arg(long)]
    pub data: PathBuf,
    /// Hierarchy file, one `parent<TAB>child` edge per line
    #[arg(long)]
    pub dag: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Additive smoothing for CMI and probability tables
    #[arg(long, default_value_t = 1.0, value_parser = parse_smoothing)]
    pub smoothing: f64,
    /// Repair propagation violations instead of rejecting the dataset
    #[arg(long)]
    pub repair: bool,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Write a repaired copy to --output
    #[arg(long, requires = "output")]
    pub repair: bool,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value_t = MethodArg::All)]
    pub method: MethodArg,
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(2..))]
    pub folds: u64,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Results JSON path
    #[arg(long, default_value = "results.json")]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum)]
    pub method: MethodArg,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Model JSON path
    #[arg(long)]
    pub output: PathBuf,
    /// Write the structure learner's decisions as JSON lines
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Instances to classify (same header as the training data)
    #[arg(long)]
    pub input: PathBuf,
    /// Model written by `train`
    #[arg(long, conflicts_with_all = ["data", "dag"])]
    pub model: Option<PathBuf>,
    /// Training data for the lazy method
    #[arg(long, requires = "dag")]
    pub data: Option<PathBuf>,
    #[arg(long, requires = "data")]
    pub dag: Option<PathBuf>,
    #[command(flatten)]
    pub params: ModelArgs,
    /// Predictions CSV (default: stdout)
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Lazy method only: per-instance decisions as JSON lines
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value_t = MethodArg::HieTanLite)]
    pub method: MethodArg,
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(2..))]
    pub folds: u64,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Rows per criterion
    #[arg(long)]
    pub top: Option<usize>,
    /// Also write the report as JSON
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 40)]
    pub features: usize,
    #[arg(long, default_value_t = 300)]
    pub instances: usize,
    #[arg(long, default_value_t = 0.2)]
    pub leaf_density: f64,
    #[arg(long, default_value_t = 0.1)]
    pub class_noise: f64,
    /// Probability that a feature gets a second hierarchy parent
    #[arg(long, default_value_t = 0.3)]
    pub second_parent: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub data_out: PathBuf,
    #[arg(long)]
    pub dag_out: PathBuf,
}

fn parse_smoothing(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("smoothing must be a finite value >= 0, got {v}"))
    }
}

/// Echo of everything that determines a run's output.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub dataset_path: PathBuf,
    pub dag_path: PathBuf,
    pub method: String,
    pub folds: usize,
    pub seed: u64,
    pub smoothing: f64,
    pub repair: bool,
    pub trace: bool,
    pub output_path: Option<PathBuf>,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
        }
    };
    let outcome = match cli.jobs {
        #[cfg(feature = "rayon")]
        Some(jobs) => match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
            Ok(pool) => pool.install(|| dispatch(cli.command)),
            Err(e) => Err(Error::InvalidArgument(e.to_string())),
        },
        _ => dispatch(cli.command),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Validate(a) => cmd_validate(&a),
        Command::Cv(a) => cmd_cv(&a).map(|_| EXIT_OK),
        Command::Train(a) => cmd_train(&a).map(|_| EXIT_OK),
        Command::Predict(a) => cmd_predict(&a).map(|_| EXIT_OK),
        Command::Features(a) => cmd_features(&a).map(|_| EXIT_OK),
        Command::Synth(a) => cmd_synth(&a).map(|_| EXIT_OK),
    }
}

/// Loads data and hierarchy; propagation violations are an error unless
/// `repair` is set.
fn load_inputs(args: &DataArgs, repair: bool) -> Result<(Dataset, FeatureDag)> {
    let ds = load_dataset(&args.data)?;
    let dag = load_dag(&args.dag, ds.feature_names())?;
    let violations = validate_propagation(&ds, &dag)?;
    if violations.is_empty() {
        return Ok((ds, dag));
    }
    if repair {
        log::warn!("repairing {} propagation violations", violations.len());
        let ds = repair_propagation(&ds, &dag)?;
        return Ok((ds, dag));
    }
    Err(Error::InvalidArgument(format!(
        "{} has {} propagation violations; run `validate` or pass --repair",
        args.data.display(),
        violations.len()
    )))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn cmd_validate(args: &ValidateArgs) -> Result<i32> {
    let ds = load_dataset(&args.data.data)?;
    let dag = load_dag(&args.data.dag, ds.feature_names())?;
    let violations = validate_propagation(&ds, &dag)?;
    let names = ds.feature_names();
    if args.repair {
        let output = args.output.as_deref().expect("clap enforces --output");
        save_dataset(output, &repair_propagation(&ds, &dag)?)?;
        println!(
            "repaired {} violations, wrote {}",
            violations.len(),
            output.display()
        );
        return Ok(EXIT_OK);
    }
    if violations.is_empty() {
        println!(
            "ok: {} instances, {} features, {} hierarchy edges",
            ds.n_instances(),
            ds.n_features(),
            dag.edges().len()
        );
        return Ok(EXIT_OK);
    }
    for v in &violations {
        println!(
            "instance {}: {} = 1 but ancestor {} = 0",
            v.instance + 1,
            names[v.feature],
            names[v.ancestor]
        );
    }
    Ok(EXIT_FINDINGS)
}

/// Results document for a cross-validation run. Field order is fixed so that
/// identical runs serialise identically apart from `timestamp`.
pub fn results_document(run: &RunConfig, result: &CvResult) -> serde_json::Value {
    let names: Vec<String> = result.methods.iter().map(|m| m.method.name().to_string()).collect();
    // Folds act as the blocks of the rank comparison.
    let fold_table: Vec<Vec<f64>> = (0..result.config.folds)
        .filter_map(|f| {
            result
                .methods
                .iter()
                .map(|m| m.fold_gmeans[f])
                .collect::<Option<Vec<f64>>>()
        })
        .collect();
    let ranks = (names.len() >= 2)
        .then(|| average_ranks(&names, &fold_table).ok())
        .flatten();
    let holm = ranks.as_ref().and_then(|t| friedman_holm(t, 0.05).ok());
    let usage = result.usage.as_ref().map(|u| {
        json!({
            "n_instances": u.n_instances,
            "features": u.feature_names.iter().enumerate().map(|(f, name)| json!({
                "feature": name,
                "freq_of_selection": u.freq_of_selection[f],
                "freq_in_edges": u.freq_in_edges[f],
            })).collect::<Vec<_>>(),
        })
    });
    json!({
        "version": env!("CARGO_PKG_VERSION"),
        "timestamp": std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        "config": run,
        "gmean_aggregation": "mean_over_folds",
        "n_instances": result.n_instances,
        "fold_of": result.fold_of,
        "methods": result.methods,
        "rank_table": ranks,
        "holm": holm,
        "usage": usage,
    })
}

pub fn cmd_cv(args: &CvArgs) -> Result<CvResult> {
    let (ds, dag) = load_inputs(&args.data, args.model.repair)?;
    let config = CvConfig {
        folds: args.folds as usize,
        seed: args.model.seed,
        smoothing: args.model.smoothing,
    };
    let result = run_cv_experiment(&ds, &dag, &args.method.methods(), &config, Exec::default())?;
    let run = RunConfig {
        dataset_path: args.data.data.clone(),
        dag_path: args.data.dag.clone(),
        method: args.method.name().to_string(),
        folds: config.folds,
        seed: config.seed,
        smoothing: config.smoothing,
        repair: args.model.repair,
        trace: false,
        output_path: Some(args.output.clone()),
    };
    let doc = results_document(&run, &result);
    write_file(&args.output, &(serde_json::to_string_pretty(&doc)? + "\n"))?;

    println!("{:<14} {:>8}  per-fold GMean", "method", "GMean");
    for m in &result.methods {
        let folds: Vec<String> = m
            .fold_gmeans
            .iter()
            .map(|g| g.map_or_else(|| "-".into(), |v| format!("{v:.3}")))
            .collect();
        let mean = m.gmean.map_or_else(|| "-".into(), |v| format!("{v:.4}"));
        println!("{:<14} {:>8}  {}", m.method.name(), mean, folds.join(" "));
    }
    Ok(result)
}

fn write_trace(path: &Path, events: &[(Option<usize>, TraceEvent)]) -> Result<()> {
    let mut out = String::new();
    for (instance, e) in events {
        let line = match instance {
            Some(i) => {
                let mut v = serde_json::to_value(e)?;
                v["instance"] = json!(i);
                serde_json::to_string(&v)?
            }
            None => serde_json::to_string(e)?,
        };
        out.push_str(&line);
        out.push('\n');
    }
    write_file(path, &out)
}

pub fn cmd_train(args: &TrainArgs) -> Result<FittedClassifier> {
    let (ds, dag) = load_inputs(&args.data, args.model.repair)?;
    let n = ds.n_features();
    let edges = rank_edges(&ds, &dag, args.model.smoothing, Exec::default())?;
    let (tree, trace) = match args.method {
        MethodArg::Tan => (learn_tan_structure(&edges, n, args.model.seed)?, Vec::new()),
        MethodArg::HieTan => hie_mst_traced(&edges, &dag, n, args.model.seed)?,
        other => {
            return Err(Error::WrongMethod(format!(
                "{} (the lazy method learns per instance; use `predict --data --dag`)",
                other.name()
            )))
        }
    };
    let all: Vec<usize> = (0..n).collect();
    let clf = fit(&ds, &tree, &all, args.model.smoothing)?;
    clf.save(&args.output)?;
    if let Some(path) = &args.trace {
        let events: Vec<_> = trace.into_iter().map(|e| (None, e)).collect();
        write_trace(path, &events)?;
    }
    println!(
        "trained {} on {} instances: {} tree edges, wrote {}",
        args.method.name(),
        ds.n_instances(),
        clf.tree.n_edges(),
        args.output.display()
    );
    Ok(clf)
}

fn check_header(expected: &[String], input: &Dataset) -> Result<()> {
    if input.feature_names() == expected {
        Ok(())
    } else {
        Err(Error::InvalidArgument(
            "input header does not match the training features".into(),
        ))
    }
}

pub fn cmd_predict(args: &PredictArgs) -> Result<Vec<(u8, [f64; 2])>> {
    let input = load_dataset(&args.input)?;
    let predictions: Vec<(u8, [f64; 2])> = match (&args.model, &args.data, &args.dag) {
        (Some(model), _, _) => {
            let clf = FittedClassifier::load(model)?;
            check_header(&clf.feature_names, &input)?;
            input
                .rows()
                .map(|row| clf.predict(row).map(|p| (p.label, p.log_posterior)))
                .collect::<Result<_>>()?
        }
        (None, Some(data), Some(dag)) => {
            let data = DataArgs {
                data: data.clone(),
                dag: dag.clone(),
            };
            let (train, dag) = load_inputs(&data, args.params.repair)?;
            check_header(train.feature_names(), &input)?;
            let n = train.n_features();
            let smoothing = args.params.smoothing;
            let edges = rank_edges(&train, &dag, smoothing, Exec::default())?;
            let seed_of = |i: usize| derive_seed(args.params.seed, &[3, 0, i as u64]);
            let mut events = Vec::new();
            let mut out = Vec::with_capacity(input.n_instances());
            for (i, row) in input.rows().enumerate() {
                let lite = if args.trace.is_some() {
                    let (lite, trace) = hie_mst_lite_traced(&edges, &dag, row, n, seed_of(i))?;
                    events.extend(trace.into_iter().map(|e| (Some(i), e)));
                    lite
                } else {
                    hie_mst_lite(&edges, &dag, row, n, seed_of(i))?
                };
                let clf = fit(&train, &lite.tree, &lite.active_features, smoothing)?;
                let p = clf.predict(row)?;
                out.push((p.label, p.log_posterior));
            }
            if let Some(path) = &args.trace {
                write_trace(path, &events)?;
            }
            out
        }
        _ => {
            return Err(Error::InvalidArgument(
                "pass --model, or --data and --dag for the lazy method".into(),
            ))
        }
    };

    let mut text = String::from("instance,label,log_posterior_0,log_posterior_1\n");
    for (i, (label, lp)) in predictions.iter().enumerate() {
        text.push_str(&format!("{},{},{},{}\n", i + 1, label, lp[0], lp[1]));
    }
    match &args.output {
        Some(path) => write_file(path, &text)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .map_err(|e| Error::io("<stdout>", e))?;
        }
    }
    Ok(predictions)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FeatureRow {
    pub feature: String,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FeatureTables {
    pub n_instances: u64,
    pub freq_of_selection: Vec<FeatureRow>,
    pub freq_in_edges: Vec<FeatureRow>,
}

pub fn cmd_features(args: &FeaturesArgs) -> Result<FeatureTables> {
    if args.method != MethodArg::HieTanLite {
        return Err(Error::WrongMethod(format!(
            "{}: feature usage is only reported for hie-tan-lite",
            args.method.name()
        )));
    }
    let (ds, dag) = load_inputs(&args.data, args.model.repair)?;
    let config = CvConfig {
        folds: args.folds as usize,
        seed: args.model.seed,
        smoothing: args.model.smoothing,
    };
    let result = run_cv_experiment(&ds, &dag, &[Method::HieTanLite], &config, Exec::default())?;
    let usage = result.usage.expect("lazy method records usage");
    let rows = |criterion| {
        usage
            .ranked(criterion, args.top)
            .into_iter()
            .map(|(f, count)| FeatureRow {
                feature: usage.feature_names[f].clone(),
                count,
            })
            .collect::<Vec<_>>()
    };
    let tables = FeatureTables {
        n_instances: usage.n_instances,
        freq_of_selection: rows(UsageCriterion::Selection),
        freq_in_edges: rows(UsageCriterion::Edges),
    };
    for (title, table) in [
        ("Freq. of Selection", &tables.freq_of_selection),
        ("Freq. in Edges", &tables.freq_in_edges),
    ] {
        println!("{title} ({} test instances)", tables.n_instances);
        for (rank, row) in table.iter().enumerate() {
            println!("{:>4}  {:<24} {}", rank + 1, row.feature, row.count);
        }
    }
    if let Some(path) = &args.output {
        write_file(path, &(serde_json::to_string_pretty(&tables)? + "\n"))?;
    }
    Ok(tables)
}

pub fn cmd_synth(args: &SynthArgs) -> Result<()> {
    if !(0.0..=1.0).contains(&args.second_parent) {
        return Err(Error::InvalidArgument("--second-parent must be in [0, 1]".into()));
    }
    let dag = FeatureDag::random(args.features, args.second_parent, derive_seed(args.seed, &[0]));
    let syn = generate_synthetic(
        &dag,
        args.instances,
        args.leaf_density,
        args.class_noise,
        derive_seed(args.seed, &[1]),
    )?;
    save_dataset(&args.data_out, &syn.dataset)?;
    write_dag(&args.dag_out, &dag, syn.dataset.feature_names())?;
    println!(
        "wrote {} instances x {} features ({} hierarchy edges); class rule on {} and {}",
        args.instances,
        args.features,
        dag.edges().len(),
        syn.dataset.feature_names()[syn.rule.a],
        syn.dataset.feature_names()[syn.rule.b]
    );
    Ok(())
}
