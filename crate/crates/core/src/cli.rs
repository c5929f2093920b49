//! The `shapekrrc` command-line interface.
//!
//! Exit codes: 0 success, 1 usage, 2 I/O or parse failure, 3 data
//! validation, 4 numerical failure.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::classifiers::{extrinsic_mean, Classifier, FittedModel, KrrcModel, KrrcOptions, LabeledShape, ModelDocument};
use crate::data::{
    generate_synthetic, leaf_outline, load_landmark_csv, perturbed_templates, save_class_names, save_landmark_csv,
    write_atomic, LandmarkDataset, LoadOptions,
};
use crate::error::{Result, ShapeError};
use crate::evaluation::{
    self, compute_metrics, fit_method, load_checkpoint, run_experiment_with, write_outputs,
    Checkpoint, ExperimentPlan, Method, RunOptions, METRIC_NAMES,
};
use crate::kernels::{find_psd_violation, gram, min_eigenvalue, negative_type_defect, KernelFamily, KernelSpec, PsdWitness};
use crate::shape::Preshape;

pub const SEED_ENV: &str = "SHAPEKRRC_SEED";
pub const CHECKPOINT_FILE: &str = "checkpoint.jsonl";

#[derive(Debug, Parser)]
#[command(name = "shapekrrc", version, about = "Kernel ridge-regression classification of planar landmark shapes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Center and scale every configuration to a preshape.
    Preshape(PreshapeArgs),
    /// Gram eigenvalue and negative-type diagnostics as JSON.
    KernelCheck(KernelCheckArgs),
    /// Fit on a training file and label a test file.
    Classify(ClassifyArgs),
    /// Replicated split/subsample/grid-search benchmark.
    Benchmark(BenchmarkArgs),
    /// Write a synthetic landmark dataset.
    Synth(SynthArgs),
    /// Extrinsic mean shape of each class.
    Mean(MeanArgs),
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Landmark CSV (`id,label,x1,y1,…`).
    #[arg(long)]
    pub input: PathBuf,
    /// Sidecar JSON with class names.
    #[arg(long)]
    pub classes_json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PreshapeArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct KernelCheckArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, value_parser = parse_family)]
    pub kernel: KernelFamily,
    #[arg(long)]
    pub sigma_sq: f64,
    /// Bandwidths tried by the witness search; defaults to `--sigma-sq`.
    #[arg(long, value_delimiter = ',')]
    pub sigma_sq_grid: Vec<f64>,
    /// Random subsets examined by the witness search.
    #[arg(long, default_value_t = 200)]
    pub attempts: usize,
    #[arg(long, default_value_t = 10)]
    pub subset_size: usize,
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    pub seed: u64,
    /// Report path; stdout when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    /// Training CSV; either this or `--model`.
    #[arg(long, required_unless_present = "model", conflicts_with = "model")]
    pub train: Option<PathBuf>,
    /// Model JSON written earlier with `--save-model`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long, value_parser = parse_method, required_unless_present = "model")]
    pub method: Option<Method>,
    /// Kernel family for KRRC; defaults to the method's own.
    #[arg(long, value_parser = parse_family)]
    pub kernel: Option<KernelFamily>,
    #[arg(long)]
    pub sigma_sq: Option<f64>,
    #[arg(long, required_unless_present = "model")]
    pub lambda: Option<f64>,
    /// Fall back to an LU solve when a Gram matrix is not positive definite.
    #[arg(long)]
    pub allow_indefinite: bool,
    /// Add κ(u, u) to KRRC scores so they equal squared feature-space residuals.
    #[arg(long)]
    pub self_term: bool,
    /// Per-record predictions CSV.
    #[arg(long)]
    pub output: PathBuf,
    /// Metrics JSON path; stdout when absent.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    #[arg(long)]
    pub save_model: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Output directory.
    #[arg(long)]
    pub output: PathBuf,
    /// Comma-separated methods.
    #[arg(long, value_delimiter = ',', value_parser = parse_method,
          default_value = "vwg-krrc,rie-krrc,naive-rrc")]
    pub method: Vec<Method>,
    #[arg(long, default_value_t = 0.6)]
    pub train_fraction: f64,
    #[arg(long, value_delimiter = ',', default_value = "10,20,30,40,50,60,70,80,90,100")]
    pub subsample_sizes: Vec<usize>,
    #[arg(long, default_value_t = 20)]
    pub replicates: usize,
    #[arg(long, value_delimiter = ',', default_value = "1e-4,1e-3,1e-2,1e-1,1,10")]
    pub lambda_grid: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "1e-2,1e-1,1,10,100")]
    pub sigma_sq_grid: Vec<f64>,
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// Reuse cells recorded in the output directory's checkpoint.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub output: PathBuf,
    /// Also write class names to this JSON file.
    #[arg(long)]
    pub classes_json: Option<PathBuf>,
    #[arg(long, default_value_t = 7)]
    pub classes: usize,
    #[arg(long, default_value_t = 300)]
    pub per_class: usize,
    #[arg(long, default_value_t = 15)]
    pub landmarks: usize,
    #[arg(long, default_value_t = 0.05)]
    pub noise_sd: f64,
    /// Size of the deformation separating class templates.
    #[arg(long, default_value_t = 0.15)]
    pub spread: f64,
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct MeanArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub output: PathBuf,
}

fn parse_family(s: &str) -> std::result::Result<KernelFamily, String> {
    s.parse().map_err(|e: ShapeError| e.to_string())
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    s.parse().map_err(|e: ShapeError| e.to_string())
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(CliError::Shape(e)) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Shape(ShapeError),
}

impl From<ShapeError> for CliError {
    fn from(e: ShapeError) -> Self {
        CliError::Shape(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Shape(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Shape(e.into())
    }
}

type CliResult = std::result::Result<(), CliError>;

fn dispatch(command: Command) -> CliResult {
    match command {
        Command::Preshape(a) => cmd_preshape(&a),
        Command::KernelCheck(a) => cmd_kernel_check(&a),
        Command::Classify(a) => cmd_classify(&a),
        Command::Benchmark(a) => cmd_benchmark(&a),
        Command::Synth(a) => cmd_synth(&a),
        Command::Mean(a) => cmd_mean(&a),
    }
}

fn load(path: &Path, classes_json: Option<&Path>) -> Result<LandmarkDataset> {
    let data = load_landmark_csv(path, &LoadOptions { classes_json })?;
    if data.is_empty() {
        return Err(ShapeError::Parse {
            line: 1,
            message: format!("{} contains no records", path.display()),
        });
    }
    Ok(data)
}

/// Normalizes a dataset, listing every degenerate record on failure.
fn preshapes(data: &LandmarkDataset) -> Result<Vec<LabeledShape>> {
    let bad = data.degenerate_ids();
    if !bad.is_empty() {
        for id in &bad {
            eprintln!("degenerate configuration: {id}");
        }
        return Err(ShapeError::InvalidInput(format!(
            "{} degenerate record(s): {}",
            bad.len(),
            bad.join(", ")
        )));
    }
    data.preshapes()
}

fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => write_atomic(p, text.as_bytes()),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn cmd_preshape(a: &PreshapeArgs) -> CliResult {
    let data = load(&a.input.input, a.input.classes_json.as_deref())?;
    let shapes = preshapes(&data)?;
    let mut out = LandmarkDataset::from_shapes(&shapes)?;
    out.class_names = data.class_names;
    save_landmark_csv(&a.output, &out)?;
    info!("wrote {} preshapes to {}", shapes.len(), a.output.display());
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct KernelReport {
    pub family: KernelFamily,
    pub sigma_sq: f64,
    pub n: usize,
    pub min_eigenvalue: f64,
    /// Largest `αᵀ D α` over unit-norm zero-sum `α`, with `D` the family's
    /// squared distances. Non-positive iff `D` is of negative type.
    pub negative_type_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<PsdWitness>,
}

fn cmd_kernel_check(a: &KernelCheckArgs) -> CliResult {
    let spec = KernelSpec::new(a.kernel, a.sigma_sq).map_err(|e| CliError::Usage(e.to_string()))?;
    let data = load(&a.input.input, a.input.classes_json.as_deref())?;
    let shapes: Vec<Preshape> = preshapes(&data)?.into_iter().map(|s| s.shape).collect();
    let g = gram(&spec, &shapes)?;
    let negative_type_max = if shapes.len() >= 2 {
        Some(negative_type_defect(|x, y| a.kernel.dist_sq(x, y), &shapes)?.0)
    } else {
        None
    };
    let grid = if a.sigma_sq_grid.is_empty() {
        vec![a.sigma_sq]
    } else {
        a.sigma_sq_grid.clone()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let witness = find_psd_violation(a.kernel, &shapes, &grid, a.subset_size, a.attempts, &mut rng);
    let report = KernelReport {
        family: a.kernel,
        sigma_sq: a.sigma_sq,
        n: shapes.len(),
        min_eigenvalue: min_eigenvalue(&g),
        negative_type_max,
        witness,
    };
    emit(a.output.as_deref(), &serde_json::to_string_pretty(&report)?)?;
    Ok(())
}

fn fit_classifier(a: &ClassifyArgs) -> std::result::Result<FittedModel, CliError> {
    if let Some(path) = &a.model {
        let text = std::fs::read_to_string(path)?;
        return Ok(ModelDocument::from_json(&text)?.into_model()?);
    }
    let (Some(train_path), Some(method), Some(lambda)) = (&a.train, a.method, a.lambda) else {
        return Err(CliError::Usage("--train, --method and --lambda are required".into()));
    };
    let family = match (method.kernel_family(), a.kernel) {
        (None, Some(_)) => return Err(CliError::Usage("--kernel does not apply to naive-rrc".into())),
        (None, None) => None,
        (Some(own), chosen) => Some(chosen.unwrap_or(own)),
    };
    if family.is_some() && a.sigma_sq.is_none() {
        return Err(CliError::Usage(format!("{method} requires --sigma-sq")));
    }
    if family.is_none() && a.sigma_sq.is_some() {
        return Err(CliError::Usage("--sigma-sq does not apply to naive-rrc".into()));
    }
    let train = preshapes(&load(train_path, None)?)?;
    let mut classes: Vec<u32> = train.iter().map(|s| s.label).collect();
    classes.sort_unstable();
    classes.dedup();
    match family {
        Some(family) if Some(family) != method.kernel_family() || a.self_term => {
            let options = KrrcOptions {
                allow_indefinite: a.allow_indefinite,
                include_self_term: a.self_term,
            };
            let spec = KernelSpec::new(family, a.sigma_sq.unwrap_or(f64::NAN))?;
            Ok(FittedModel::Krrc(KrrcModel::fit_with(&train, Some(&classes), spec, lambda, options)?))
        }
        _ => Ok(fit_method(method, &train, &classes, lambda, a.sigma_sq, a.allow_indefinite)?),
    }
}

fn cmd_classify(a: &ClassifyArgs) -> CliResult {
    let model = fit_classifier(a)?;
    if model.used_indefinite_fallback() {
        eprintln!("warning: a Gram matrix was not positive definite; used the LU fallback");
    }
    let test = preshapes(&load(&a.test, None)?)?;
    let labels = model.class_labels().to_vec();

    let mut csv = String::from("id,true_label,predicted_label");
    for l in &labels {
        write!(csv, ",score_{l}").expect("write to string");
    }
    csv.push('\n');
    let mut pred = Vec::with_capacity(test.len());
    for s in &test {
        let p = model.predict(&s.shape);
        write!(csv, "{},{},{}", s.id, s.label, p.label).expect("write to string");
        for v in &p.per_class_scores {
            write!(csv, ",{v}").expect("write to string");
        }
        csv.push('\n');
        pred.push(p.label);
    }
    write_atomic(&a.output, csv.as_bytes())?;

    let truth: Vec<u32> = test.iter().map(|s| s.label).collect();
    let mut classes = labels;
    classes.extend(&truth);
    classes.sort_unstable();
    classes.dedup();
    let report = compute_metrics(&pred, &truth, &classes)?;
    emit(a.metrics.as_deref(), &serde_json::to_string_pretty(&report)?)?;
    if let Some(path) = &a.save_model {
        write_atomic(path, model.to_document().to_json()?.as_bytes())?;
    }
    Ok(())
}

fn cmd_benchmark(a: &BenchmarkArgs) -> CliResult {
    let plan = ExperimentPlan {
        train_fraction: a.train_fraction,
        subsample_sizes: a.subsample_sizes.clone(),
        replicates: a.replicates,
        lambda_grid: a.lambda_grid.clone(),
        sigma_sq_grid: a.sigma_sq_grid.clone(),
        seed: a.seed,
        methods: a.method.clone(),
    };
    plan.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let data = preshapes(&load(&a.input.input, a.input.classes_json.as_deref())?)?;

    std::fs::create_dir_all(&a.output)?;
    let cp_path = a.output.join(CHECKPOINT_FILE);
    let completed = if a.resume { load_checkpoint(&cp_path)? } else { Vec::new() };
    let checkpoint = Checkpoint::open(&cp_path, a.resume)?;
    let on_cell = |row: &evaluation::ResultRow| {
        if let Err(e) = checkpoint.append(row) {
            log::warn!("checkpoint write failed: {e}");
        }
    };
    let results = run_experiment_with(
        &data,
        &plan,
        RunOptions {
            workers: a.workers,
            completed,
            on_cell: Some(&on_cell),
        },
    )?;
    write_outputs(&a.output, &results)?;
    print!("{}", summary_table(&results.summary));
    let failed = results.rows.iter().filter(|r| r.metrics.is_none()).count();
    if failed > 0 {
        eprintln!("warning: {failed} cell(s) failed; see the warn column");
    }
    Ok(())
}

fn summary_table(summary: &[evaluation::SummaryRow]) -> String {
    type MeanSd<'a> = BTreeMap<&'a str, (f64, f64)>;
    let mut by_cell: BTreeMap<(Method, usize), MeanSd> = BTreeMap::new();
    for s in summary {
        by_cell.entry((s.method, s.n_i)).or_default().insert(s.metric.as_str(), (s.mean, s.sd));
    }
    let mut out = format!("{:<10} {:>5}", "method", "n_i");
    for m in METRIC_NAMES {
        write!(out, " {m:>17}").expect("write to string");
    }
    out.push('\n');
    for ((method, n_i), metrics) in by_cell {
        write!(out, "{:<10} {:>5}", method.as_str(), n_i).expect("write to string");
        for m in METRIC_NAMES {
            let (mean, sd) = metrics.get(m).copied().unwrap_or((f64::NAN, f64::NAN));
            write!(out, " {:>8.4} ± {:<6.4}", mean, sd).expect("write to string");
        }
        out.push('\n');
    }
    out
}

fn cmd_synth(a: &SynthArgs) -> CliResult {
    if a.classes == 0 || a.landmarks < 3 {
        return Err(CliError::Usage("need at least 1 class and 3 landmarks".into()));
    }
    let base = leaf_outline(a.landmarks)?;
    let templates = perturbed_templates(&base, a.classes, a.spread, a.seed)?;
    let data = generate_synthetic(&templates, a.per_class, a.noise_sd, a.seed.wrapping_add(1))?;
    save_landmark_csv(&a.output, &data)?;
    if let Some(path) = &a.classes_json {
        save_class_names(path, &data.class_names)?;
    }
    Ok(())
}

fn cmd_mean(a: &MeanArgs) -> CliResult {
    let data = load(&a.input.input, a.input.classes_json.as_deref())?;
    let shapes = preshapes(&data)?;
    let mut groups: BTreeMap<u32, Vec<Preshape>> = BTreeMap::new();
    for s in shapes {
        groups.entry(s.label).or_default().push(s.shape);
    }
    let mut means = Vec::new();
    for (label, members) in groups {
        let id = data.class_names.get(&label).cloned().unwrap_or_else(|| format!("mean{label}"));
        means.push(LabeledShape::new(id, label, extrinsic_mean(&members)?));
    }
    let mut out = LandmarkDataset::from_shapes(&means)?;
    out.class_names = data.class_names;
    save_landmark_csv(&a.output, &out)?;
    Ok(())
}
