use std::collections::{BTreeMap, HashMap};

use log::{info, warn};
use serde::{Deserialize, Serialize};

use super::grid::{fit_method, grid_search, GridChoice, GridSpec};
use super::metrics::compute_metrics;
use super::split::{stratified_split, subsample_per_class};
use super::{ExperimentPlan, Method};
use crate::classifiers::{Classifier, LabeledShape};
use crate::error::{Result, ShapeError};
use crate::shape::Preshape;

pub const METRIC_NAMES: [&str; 4] = ["precision", "recall", "f1", "accuracy"];

/// One benchmark cell: replicate × subsample size × method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellKey {
    pub method: Method,
    pub n_i: usize,
    pub replicate: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellSeeds {
    /// `plan.seed + replicate`; drives the train/test split.
    pub split: u64,
    pub subsample: u64,
    pub inner: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seeds of a cell. All methods of the same replicate and subsample size
/// share the split, the subsample and the inner holdout.
pub fn cell_seeds(plan_seed: u64, replicate: usize, n_i: usize) -> CellSeeds {
    let split = plan_seed.wrapping_add(replicate as u64);
    let base = splitmix64(split ^ splitmix64(n_i as u64));
    CellSeeds {
        split,
        subsample: splitmix64(base ^ 1),
        inner: splitmix64(base ^ 2),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
}

impl CellMetrics {
    pub fn get(&self, metric: &str) -> Option<f64> {
        match metric {
            "precision" => Some(self.precision),
            "recall" => Some(self.recall),
            "f1" => Some(self.f1),
            "accuracy" => Some(self.accuracy),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub method: Method,
    pub n_i: usize,
    pub replicate: usize,
    /// Split seed of the cell; a checkpointed row is reused only when it
    /// matches.
    pub seed: u64,
    pub lambda: Option<f64>,
    pub sigma_sq: Option<f64>,
    /// `None` when the cell failed.
    pub metrics: Option<CellMetrics>,
    pub warn: bool,
}

impl ResultRow {
    pub fn key(&self) -> CellKey {
        CellKey {
            method: self.method,
            n_i: self.n_i,
            replicate: self.replicate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: Method,
    pub n_i: usize,
    pub metric: String,
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator; 0 for a single value).
    pub sd: f64,
    /// Replicates that produced metrics.
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResults {
    pub rows: Vec<ResultRow>,
    pub summary: Vec<SummaryRow>,
}

impl ExperimentResults {
    pub fn mean(&self, method: Method, n_i: usize, metric: &str) -> Option<f64> {
        self.summary
            .iter()
            .find(|s| s.method == method && s.n_i == n_i && s.metric == metric)
            .map(|s| s.mean)
    }
}

#[derive(Default)]
pub struct RunOptions<'a> {
    /// Worker threads; 0 or 1 runs sequentially.
    pub workers: usize,
    /// Rows from an earlier run; matching cells are not recomputed.
    pub completed: Vec<ResultRow>,
    /// Called once per freshly computed cell, possibly from worker threads.
    pub on_cell: Option<&'a (dyn Fn(&ResultRow) + Sync)>,
}

pub fn run_experiment(data: &[LabeledShape], plan: &ExperimentPlan) -> Result<ExperimentResults> {
    run_experiment_with(data, plan, RunOptions::default())
}

pub fn run_experiment_with(
    data: &[LabeledShape],
    plan: &ExperimentPlan,
    options: RunOptions<'_>,
) -> Result<ExperimentResults> {
    plan.validate()?;
    check_capacity(data, plan)?;

    let mut done: HashMap<CellKey, ResultRow> = HashMap::new();
    for row in options.completed {
        let seeds = cell_seeds(plan.seed, row.replicate, row.n_i);
        if row.seed == seeds.split && plan.methods.contains(&row.method) {
            done.insert(row.key(), row);
        }
    }

    let mut methods = plan.methods.clone();
    methods.sort();
    methods.dedup();
    let mut cells = Vec::new();
    for replicate in 0..plan.replicates {
        for &n_i in &plan.subsample_sizes {
            for &method in &methods {
                let key = CellKey {
                    method,
                    n_i,
                    replicate,
                };
                if !done.contains_key(&key) {
                    cells.push(key);
                }
            }
        }
    }
    info!("{} cells to run, {} restored", cells.len(), done.len());

    let run = |key: &CellKey| -> Result<ResultRow> {
        let row = run_cell(data, plan, *key)?;
        if let Some(cb) = options.on_cell {
            cb(&row);
        }
        Ok(row)
    };
    let fresh = execute(&cells, options.workers, run)?;

    let mut rows: Vec<ResultRow> = done.into_values().chain(fresh).collect();
    rows.sort_by_key(|r| (r.method, r.n_i, r.replicate));
    let summary = summarize(&rows);
    Ok(ExperimentResults { rows, summary })
}

#[cfg(feature = "parallel")]
fn execute<F>(cells: &[CellKey], workers: usize, run: F) -> Result<Vec<ResultRow>>
where
    F: Fn(&CellKey) -> Result<ResultRow> + Sync + Send,
{
    use rayon::prelude::*;
    if workers <= 1 {
        return cells.iter().map(run).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| ShapeError::InvalidInput(format!("cannot start worker pool: {e}")))?;
    pool.install(|| cells.par_iter().map(run).collect())
}

#[cfg(not(feature = "parallel"))]
fn execute<F>(cells: &[CellKey], _workers: usize, run: F) -> Result<Vec<ResultRow>>
where
    F: Fn(&CellKey) -> Result<ResultRow>,
{
    cells.iter().map(run).collect()
}

fn check_capacity(data: &[LabeledShape], plan: &ExperimentPlan) -> Result<()> {
    let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
    for s in data {
        *counts.entry(s.label).or_default() += 1;
    }
    if counts.is_empty() {
        return Err(ShapeError::EmptyInput("no shapes to benchmark".into()));
    }
    let max_n = plan.subsample_sizes.iter().copied().max().unwrap_or(0);
    for (&label, &n) in &counts {
        let available = if n < 2 {
            0
        } else {
            ((plan.train_fraction * n as f64).floor() as usize).clamp(1, n - 1)
        };
        if available < max_n {
            return Err(ShapeError::InsufficientClassSize {
                label,
                available,
                required: max_n,
            });
        }
    }
    Ok(())
}

fn run_cell(data: &[LabeledShape], plan: &ExperimentPlan, key: CellKey) -> Result<ResultRow> {
    let seeds = cell_seeds(plan.seed, key.replicate, key.n_i);
    let (train, test) = stratified_split(data, plan.train_fraction, seeds.split)?;
    let subsample = subsample_per_class(&train, key.n_i, seeds.subsample)?;
    let grid = GridSpec {
        lambda_grid: plan.lambda_grid.clone(),
        sigma_sq_grid: plan.sigma_sq_grid.clone(),
        allow_indefinite: true,
    };
    let mut row = ResultRow {
        method: key.method,
        n_i: key.n_i,
        replicate: key.replicate,
        seed: seeds.split,
        lambda: None,
        sigma_sq: None,
        metrics: None,
        warn: false,
    };
    let choice: GridChoice = match grid_search(&subsample, &grid, key.method, seeds.inner) {
        Ok(c) => c,
        Err(e) => {
            warn!("{key:?}: grid search failed: {e}");
            row.warn = true;
            return Ok(row);
        }
    };
    row.lambda = Some(choice.lambda);
    row.sigma_sq = choice.sigma_sq;

    let mut classes: Vec<u32> = subsample.iter().map(|s| s.label).collect();
    classes.sort_unstable();
    classes.dedup();
    let model = match fit_method(key.method, &subsample, &classes, choice.lambda, choice.sigma_sq, true) {
        Ok(m) => m,
        Err(e) => {
            warn!("{key:?}: fit failed: {e}");
            row.warn = true;
            return Ok(row);
        }
    };
    if model.used_indefinite_fallback() {
        warn!("{key:?}: fitted with the indefinite fallback solve");
        row.warn = true;
    }
    let shapes: Vec<Preshape> = test.iter().map(|s| s.shape.clone()).collect();
    let truth: Vec<u32> = test.iter().map(|s| s.label).collect();
    let pred = model.predict_labels(&shapes);
    let report = compute_metrics(&pred, &truth, &classes)?;
    row.metrics = Some(CellMetrics {
        precision: report.macro_precision,
        recall: report.macro_recall,
        f1: report.f1,
        accuracy: report.avg_accuracy,
    });
    Ok(row)
}

/// Mean and sample standard deviation per (method, n_i, metric), sorted.
/// Failed cells are left out.
pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(Method, usize), Vec<CellMetrics>> = BTreeMap::new();
    for r in rows {
        let entry = groups.entry((r.method, r.n_i)).or_default();
        if let Some(m) = r.metrics {
            entry.push(m);
        }
    }
    let mut out = Vec::new();
    for ((method, n_i), ms) in groups {
        for metric in METRIC_NAMES {
            let values: Vec<f64> = ms.iter().filter_map(|m| m.get(metric)).collect();
            let n = values.len();
            let mean = if n == 0 { f64::NAN } else { values.iter().sum::<f64>() / n as f64 };
            let sd = if n < 2 {
                0.0
            } else {
                (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            };
            out.push(SummaryRow {
                method,
                n_i,
                metric: metric.to_string(),
                mean,
                sd,
                count: n,
            });
        }
    }
    out
}

#[cfg(feature = "io")]
pub use self::io::*;

#[cfg(feature = "io")]
mod io {
    use std::fs::{File, OpenOptions};
    use std::io::{BufRead, BufReader, Write};
    use std::path::Path;
    use std::sync::Mutex;

    use super::{ExperimentResults, ResultRow, SummaryRow, METRIC_NAMES};
    use crate::data::write_atomic;
    use crate::error::Result;
    use crate::evaluation::Method;

    fn opt(v: Option<f64>) -> String {
        v.map(|x| x.to_string()).unwrap_or_default()
    }

    /// `method,n_i,replicate,lambda,sigma_sq,precision,recall,f1,accuracy,warn`
    pub fn results_csv_string(rows: &[ResultRow]) -> String {
        let mut out = String::from("method,n_i,replicate,lambda,sigma_sq,precision,recall,f1,accuracy,warn\n");
        for r in rows {
            let m = r.metrics;
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                r.method,
                r.n_i,
                r.replicate,
                opt(r.lambda),
                opt(r.sigma_sq),
                opt(m.map(|m| m.precision)),
                opt(m.map(|m| m.recall)),
                opt(m.map(|m| m.f1)),
                opt(m.map(|m| m.accuracy)),
                r.warn
            ));
        }
        out
    }

    /// `method,n_i,metric,mean,sd`
    pub fn summary_csv_string(summary: &[SummaryRow]) -> String {
        let mut out = String::from("method,n_i,metric,mean,sd\n");
        for s in summary {
            out.push_str(&format!("{},{},{},{},{}\n", s.method, s.n_i, s.metric, s.mean, s.sd));
        }
        out
    }

    /// Wide table for one metric: `n_i,<method>_mean,<method>_sd,…`.
    pub fn plot_csv_string(summary: &[SummaryRow], metric: &str) -> String {
        let mut methods: Vec<Method> = summary.iter().map(|s| s.method).collect();
        methods.sort();
        methods.dedup();
        let mut sizes: Vec<usize> = summary.iter().map(|s| s.n_i).collect();
        sizes.sort_unstable();
        sizes.dedup();
        let mut out = String::from("n_i");
        for m in &methods {
            out.push_str(&format!(",{m}_mean,{m}_sd"));
        }
        out.push('\n');
        for n in sizes {
            out.push_str(&n.to_string());
            for &m in &methods {
                match summary.iter().find(|s| s.method == m && s.n_i == n && s.metric == metric) {
                    Some(s) => out.push_str(&format!(",{},{}", s.mean, s.sd)),
                    None => out.push_str(",,"),
                }
            }
            out.push('\n');
        }
        out
    }

    /// Writes `results.csv`, `summary.csv` and `plot_<metric>.csv` into `dir`.
    pub fn write_outputs(dir: &Path, results: &ExperimentResults) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_atomic(&dir.join("results.csv"), results_csv_string(&results.rows).as_bytes())?;
        write_atomic(&dir.join("summary.csv"), summary_csv_string(&results.summary).as_bytes())?;
        for metric in METRIC_NAMES {
            write_atomic(
                &dir.join(format!("plot_{metric}.csv")),
                plot_csv_string(&results.summary, metric).as_bytes(),
            )?;
        }
        Ok(())
    }

    /// Append-only JSON-lines log of finished cells.
    pub struct Checkpoint {
        file: Mutex<File>,
    }

    impl Checkpoint {
        /// Opens the log; without `resume` any previous content is discarded.
        pub fn open(path: &Path, resume: bool) -> Result<Self> {
            let file = if resume {
                OpenOptions::new().create(true).append(true).open(path)?
            } else {
                File::create(path)?
            };
            Ok(Self { file: Mutex::new(file) })
        }

        pub fn append(&self, row: &ResultRow) -> Result<()> {
            let line = serde_json::to_string(row)?;
            let mut f = self.file.lock().unwrap_or_else(|e| e.into_inner());
            writeln!(f, "{line}")?;
            f.flush()?;
            Ok(())
        }
    }

    /// Reads a checkpoint log. A missing file is empty; a truncated last
    /// line from an interrupted write is ignored.
    pub fn load_checkpoint(path: &Path) -> Result<Vec<ResultRow>> {
        let file = match File::open(path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e.into()),
        };
        let mut rows = Vec::new();
        for line in BufReader::new(file).lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str(&line) {
                Ok(row) => rows.push(row),
                Err(e) => log::warn!("ignoring unreadable checkpoint line: {e}"),
            }
        }
        Ok(rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, leaf_outline, perturbed_templates};
    use std::collections::HashSet;
    use std::sync::Mutex;

    fn data() -> Vec<LabeledShape> {
        let templates = perturbed_templates(&leaf_outline(10).unwrap(), 3, 0.3, 2).unwrap();
        generate_synthetic(&templates, 30, 0.04, 7).unwrap().preshapes().unwrap()
    }

    fn small_plan() -> ExperimentPlan {
        ExperimentPlan {
            subsample_sizes: vec![8],
            replicates: 2,
            lambda_grid: vec![1e-3, 1e-1],
            sigma_sq_grid: vec![0.1, 1.0],
            seed: 5,
            methods: vec![Method::VwgKrrc, Method::NaiveRrc],
            ..Default::default()
        }
    }

    #[test]
    fn single_cell_gives_single_row() {
        let plan = ExperimentPlan {
            replicates: 1,
            methods: vec![Method::VwgKrrc],
            ..small_plan()
        };
        let res = run_experiment(&data(), &plan).unwrap();
        assert_eq!(res.rows.len(), 1);
        assert_eq!(res.summary.len(), METRIC_NAMES.len());
        let m = res.rows[0].metrics.unwrap();
        assert!((0.0..=1.0).contains(&m.f1));
    }

    #[test]
    fn identical_plans_give_identical_tables() {
        let d = data();
        let a = run_experiment(&d, &small_plan()).unwrap();
        let b = run_experiment(&d, &small_plan()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rows.len(), 4);
    }

    #[cfg(feature = "parallel")]
    #[test]
    fn worker_count_does_not_change_results() {
        let d = data();
        let seq = run_experiment(&d, &small_plan()).unwrap();
        let par = run_experiment_with(
            &d,
            &small_plan(),
            RunOptions {
                workers: 4,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(seq, par);
    }

    #[test]
    fn completed_cells_are_reused() {
        let d = data();
        let full = run_experiment(&d, &small_plan()).unwrap();
        let seen = Mutex::new(Vec::new());
        let cb = |r: &ResultRow| seen.lock().unwrap().push(r.key());
        let partial = full.rows[..2].to_vec();
        let resumed = run_experiment_with(
            &d,
            &small_plan(),
            RunOptions {
                workers: 1,
                completed: partial,
                on_cell: Some(&cb),
            },
        )
        .unwrap();
        assert_eq!(resumed, full);
        assert_eq!(seen.lock().unwrap().len(), 2);

        // rows from another seed are recomputed
        let mut stale = full.rows.clone();
        for r in &mut stale {
            r.seed += 1000;
            r.metrics = None;
        }
        let fresh = run_experiment_with(
            &d,
            &small_plan(),
            RunOptions {
                completed: stale,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(fresh, full);
    }

    #[test]
    fn splits_are_disjoint_and_subsamples_balanced() {
        let d = data();
        let plan = small_plan();
        for r in 0..plan.replicates {
            let s = cell_seeds(plan.seed, r, 8);
            assert_eq!(s.split, plan.seed + r as u64);
            let (train, test) = stratified_split(&d, plan.train_fraction, s.split).unwrap();
            let ids: HashSet<_> = train.iter().map(|x| x.id.clone()).collect();
            assert!(test.iter().all(|x| !ids.contains(&x.id)));
            let sub = subsample_per_class(&train, 8, s.subsample).unwrap();
            for c in 0..3 {
                assert_eq!(sub.iter().filter(|x| x.label == c).count(), 8);
            }
        }
    }

    #[test]
    fn oversized_subsample_is_rejected_up_front() {
        let plan = ExperimentPlan {
            subsample_sizes: vec![19],
            ..small_plan()
        };
        // 30 per class * 0.6 = 18 training samples
        assert!(matches!(
            run_experiment(&data(), &plan),
            Err(ShapeError::InsufficientClassSize { available: 18, required: 19, .. })
        ));
    }

    #[test]
    fn summary_statistics() {
        let mk = |rep, f1| ResultRow {
            method: Method::VwgKrrc,
            n_i: 10,
            replicate: rep,
            seed: 0,
            lambda: Some(1.0),
            sigma_sq: Some(1.0),
            metrics: Some(CellMetrics {
                precision: f1,
                recall: f1,
                f1,
                accuracy: f1,
            }),
            warn: false,
        };
        let mut rows = vec![mk(0, 0.5), mk(1, 0.7), mk(2, 0.9)];
        rows.push(ResultRow {
            metrics: None,
            warn: true,
            ..mk(3, 0.0)
        });
        let s = summarize(&rows);
        let f1 = s.iter().find(|r| r.metric == "f1").unwrap();
        assert!((f1.mean - 0.7).abs() < 1e-15);
        assert!((f1.sd - 0.2).abs() < 1e-15);
        assert_eq!(f1.count, 3);
    }

    #[cfg(feature = "io")]
    #[test]
    fn csv_layouts() {
        let res = run_experiment(&data(), &small_plan()).unwrap();
        let csv = results_csv_string(&res.rows);
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "method,n_i,replicate,lambda,sigma_sq,precision,recall,f1,accuracy,warn"
        );
        assert_eq!(csv.lines().count(), 5);
        let naive = csv.lines().find(|l| l.starts_with("naive-rrc")).unwrap();
        assert_eq!(naive.split(',').nth(4), Some(""));
        let summary = summary_csv_string(&res.summary);
        assert!(summary.starts_with("method,n_i,metric,mean,sd\n"));
        assert_eq!(summary.lines().count(), 1 + 2 * 4);
        let plot = plot_csv_string(&res.summary, "f1");
        assert!(plot.starts_with("n_i,vwg-krrc_mean,vwg-krrc_sd,naive-rrc_mean,naive-rrc_sd\n8,"));
    }

    #[cfg(feature = "io")]
    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cells.jsonl");
        let res = run_experiment(&data(), &small_plan()).unwrap();
        let cp = Checkpoint::open(&path, false).unwrap();
        for r in &res.rows {
            cp.append(r).unwrap();
        }
        drop(cp);
        std::fs::OpenOptions::new()
            .append(true)
            .open(&path)
            .and_then(|mut f| std::io::Write::write_all(&mut f, b"{\"method\":\"vwg"))
            .unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), res.rows);
        assert!(load_checkpoint(&dir.path().join("missing")).unwrap().is_empty());
    }
}
