//! Experiment harness: S-IDS and G-IDS runs over training fractions and
//! seeds, synthetic dataset generation and report consolidation.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controller::{ledger_jsonl, parse_ledger, rounds_csv, verify_ledger, Controller, ControllerConfig, RoundLog};
use crate::data::LabeledMatrix;
use crate::derive_seed;
use crate::detector::train_ids_monitored;
use crate::error::{Error, Result};
use crate::metrics::{MetricsReport, PmRole};
use crate::neural::TrainConfig;
use crate::pipeline::{
    fit_pipeline, load_dataset, sparsity, stratified_split, CategoryEncoder, CsvOptions, PipelineModel, RawTable,
    Schema, UnseenPolicy,
};
use crate::store::{FlagSet, SampleStore};
use crate::synthesizer::GanConfig;

/// Overrides `protocol.output_dir` when set.
pub const OUTPUT_DIR_ENV: &str = "GIDS_OUTPUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub dataset: PathBuf,
    pub schema: PathBuf,
    pub has_header: bool,
    /// Keep only rows with these labels; empty keeps everything.
    pub labels: Vec<String>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            dataset: PathBuf::from("data.csv"),
            schema: PathBuf::from("schema.txt"),
            has_header: false,
            labels: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolConfig {
    /// Size of the training pool drawn from the dataset; the rest is test data.
    pub train_size: usize,
    pub fractions: Vec<f64>,
    pub seeds: Vec<u64>,
    pub pca_dims: usize,
    /// Cumulative explained variance below this is reported as a warning.
    pub variance_floor: f64,
    pub output_dir: PathBuf,
    /// Run (fraction, seed) pairs on the rayon pool.
    pub parallel: bool,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            train_size: 5000,
            fractions: vec![0.2, 0.4, 0.6, 0.8, 1.0],
            seeds: vec![0],
            pca_dims: 20,
            variance_floor: 0.9,
            output_dir: PathBuf::from("runs"),
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    pub protocol: ProtocolConfig,
    pub ids: TrainConfig,
    pub gan: GanConfig,
    pub controller: ControllerConfig,
    /// Free-form reference values copied into `experiment.json`.
    pub reference: BTreeMap<String, f64>,
}

impl ExperimentConfig {
    /// Parses TOML text, then applies `key.path=value` overrides in order.
    /// Values are read as TOML and fall back to plain strings.
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        for spec in overrides {
            apply_override(&mut table, spec)?;
        }
        let config: Self = table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads a config file. Relative data paths resolve against its directory;
    /// the output directory comes from the environment when it is set.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut config = Self::from_toml(&text, overrides)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut config.data.dataset, &mut config.data.schema] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV) {
            config.protocol.output_dir = PathBuf::from(dir);
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.protocol;
        if p.fractions.is_empty() || p.fractions.iter().any(|&f| !(f > 0.0 && f <= 1.0)) {
            return Err(Error::Config("fractions must be non-empty and within (0, 1]".into()));
        }
        if p.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if p.train_size < 2 {
            return Err(Error::Config("train_size must be at least 2".into()));
        }
        if p.pca_dims == 0 {
            return Err(Error::Config("pca_dims must be positive".into()));
        }
        if !(p.variance_floor > 0.0 && p.variance_floor <= 1.0) {
            return Err(Error::Config("variance_floor must be in (0, 1]".into()));
        }
        self.ids.validate()?;
        self.gan.validate()?;
        self.controller.validate()
    }
}

fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{spec}` is not key=value")))?;
    let value = parse_toml_value(raw.trim());
    let parts: Vec<&str> = key.trim().split('.').collect();
    let (last, parents) = parts.split_last().filter(|(l, _)| !l.is_empty()).ok_or_else(|| {
        Error::Config(format!("override `{spec}` has an empty key"))
    })?;
    let mut cursor = table;
    for part in parents {
        let entry = cursor
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cursor = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override `{spec}`: `{part}` is not a table")))?;
    }
    cursor.insert(last.to_string(), value);
    Ok(())
}

fn parse_toml_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    doc.parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Which detector arms a run trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arms {
    Standalone,
    Gan,
    Both,
}

impl Arms {
    fn sids(self) -> bool {
        matches!(self, Arms::Standalone | Arms::Both)
    }

    fn gids(self) -> bool {
        matches!(self, Arms::Gan | Arms::Both)
    }
}

/// A dataset after ingestion and label filtering.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub table: RawTable,
    pub label_names: Vec<String>,
    pub labels: Vec<usize>,
}

pub fn load_raw_dataset(data: &DataConfig) -> Result<Dataset> {
    let schema_text = fs::read_to_string(&data.schema).map_err(|e| Error::io(&data.schema, e))?;
    let schema = Schema::parse(&schema_text)?;
    let csv_text = fs::read_to_string(&data.dataset).map_err(|e| Error::io(&data.dataset, e))?;
    let mut table = load_dataset(&csv_text, &schema, CsvOptions { has_header: data.has_header })?;
    if !data.labels.is_empty() {
        table.retain_labels(&data.labels);
    }
    if table.is_empty() {
        return Err(Error::Data(format!("{} has no usable rows", data.dataset.display())));
    }
    let encoder = CategoryEncoder::fit(table.rows.iter().map(|r| r.label.as_str()));
    let labels = table
        .rows
        .iter()
        .map(|r| encoder.code(&r.label).unwrap_or_default())
        .collect();
    Ok(Dataset {
        label_names: encoder.categories().to_vec(),
        labels,
        table,
    })
}

/// Row sets of one run, as indices into the full dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub fit: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitIndices {
    /// True when the three sets are pairwise disjoint.
    pub fn is_disjoint(&self) -> bool {
        let mut all: Vec<usize> = self.fit.iter().chain(&self.validation).chain(&self.test).copied().collect();
        let n = all.len();
        all.sort_unstable();
        all.dedup();
        all.len() == n
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunResult {
    pub fraction: f64,
    pub seed: u64,
    pub dir: String,
    pub sids: Option<MetricsReport>,
    pub gids: Option<MetricsReport>,
    pub rounds: Vec<RoundLog>,
    pub ledger_problems: Vec<String>,
    pub leak_free: bool,
    pub fit_size: usize,
    pub validation_size: usize,
    pub test_size: usize,
    pub final_hybrid_counts: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentOutcome {
    pub label_names: Vec<String>,
    pub runs: Vec<RunResult>,
    pub output_dir: PathBuf,
}

fn subset(data: &LabeledMatrix, indices: &[usize]) -> (LabeledMatrix, Vec<usize>) {
    (data.select(indices), indices.to_vec())
}

fn map_indices(parent: &[usize], local: &[usize]) -> Vec<usize> {
    local.iter().map(|&i| parent[i]).collect()
}

fn fraction_tag(fraction: f64) -> u64 {
    fraction.to_bits()
}

fn run_dir_name(fraction: f64, seed: u64) -> String {
    format!("frac_{fraction:.2}_seed_{seed}")
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn write_report(dir: &Path, report: &MetricsReport, names: &[String]) -> Result<()> {
    write_file(&dir.join("report.json"), &report.to_json()?)?;
    write_file(&dir.join("report.csv"), &report.to_csv(Some(names)))
}

/// Per-seed preparation: test split, pipeline fitted on the training pool only,
/// and the transformed dataset.
struct SeedContext {
    seed: u64,
    data: LabeledMatrix,
    pool: Vec<usize>,
    test: Vec<usize>,
}

fn prepare_seed(dataset: &Dataset, config: &ExperimentConfig, seed: u64, out: &Path) -> Result<SeedContext> {
    let n = dataset.labels.len();
    let classes = dataset.label_names.len();
    if config.protocol.train_size >= n {
        return Err(Error::Config(format!(
            "train_size {} must be below the dataset size {n}",
            config.protocol.train_size
        )));
    }
    let index_only = LabeledMatrix::new(Array2::zeros((n, 0)), dataset.labels.clone(), classes)?;
    let split = stratified_split(&index_only, config.protocol.train_size, derive_seed(seed, &[1]))?;
    let pool_table = RawTable {
        schema: dataset.table.schema.clone(),
        rows: split.train_indices.iter().map(|&i| dataset.table.rows[i].clone()).collect(),
    };
    let pipeline = fit_pipeline(&pool_table, config.protocol.pca_dims, config.protocol.variance_floor)?;
    for w in &pipeline.warnings {
        log::warn!("seed {seed}: {w}");
    }
    write_file(&out.join(format!("pipeline_seed_{seed}.txt")), &pipeline.to_text())?;
    let (data, _) = pipeline.transform(&dataset.table, UnseenPolicy::Reserve)?;
    Ok(SeedContext {
        seed,
        data,
        pool: split.train_indices,
        test: split.test_indices,
    })
}

fn run_one(
    ctx: &SeedContext,
    fraction: f64,
    config: &ExperimentConfig,
    arms: Arms,
    names: &[String],
    out: &Path,
) -> Result<RunResult> {
    let seed = ctx.seed;
    let tag = fraction_tag(fraction);
    let pool_data = ctx.data.select(&ctx.pool);
    let (train, train_idx) = if fraction >= 1.0 {
        (pool_data, ctx.pool.clone())
    } else {
        let size = ((fraction * ctx.pool.len() as f64).round() as usize).max(1);
        let s = stratified_split(&pool_data, size, derive_seed(seed, &[2, tag]))?;
        (s.train, map_indices(&ctx.pool, &s.train_indices))
    };
    let val_size = (config.controller.validation_fraction * train.len() as f64).round() as usize;
    let s = stratified_split(&train, train.len() - val_size.max(1), derive_seed(seed, &[3, tag]))?;
    let fit = s.train;
    let validation = s.test;
    let indices = SplitIndices {
        fit: map_indices(&train_idx, &s.train_indices),
        validation: map_indices(&train_idx, &s.test_indices),
        test: ctx.test.clone(),
    };
    let leak_free = indices.is_disjoint();
    if !leak_free {
        return Err(Error::Data(format!("fraction {fraction} seed {seed}: test rows overlap training rows")));
    }
    let (test, _) = subset(&ctx.data, &ctx.test);

    let dir_name = run_dir_name(fraction, seed);
    let dir = out.join("runs").join(&dir_name);
    write_file(&dir.join("split.json"), &serde_json::to_string(&indices)?)?;

    let ids = TrainConfig {
        seed: derive_seed(config.ids.seed, &[seed]),
        ..config.ids.clone()
    };
    let mut result = RunResult {
        fraction,
        seed,
        dir: dir_name,
        sids: None,
        gids: None,
        rounds: Vec::new(),
        ledger_problems: Vec::new(),
        leak_free,
        fit_size: fit.len(),
        validation_size: validation.len(),
        test_size: test.len(),
        final_hybrid_counts: None,
    };

    if arms.sids() {
        let model = train_ids_monitored(&fit, &ids, Some(&validation))?.with_description("original");
        let report = model.evaluate_as(&test, PmRole::Test)?;
        info!("fraction {fraction} seed {seed}: S-IDS macro-F1 {:.4}", report.macro_f1);
        let sdir = dir.join("sids");
        write_report(&sdir, &report, names)?;
        write_file(&sdir.join("epochs.csv"), &model.history_csv())?;
        result.sids = Some(report);
    }

    if arms.gids() {
        let gan = GanConfig {
            seed: derive_seed(config.gan.seed, &[seed, tag]),
            ..config.gan.clone()
        };
        let controller_cfg = ControllerConfig {
            seed: derive_seed(config.controller.seed, &[seed, tag]),
            ..config.controller.clone()
        };
        let controller = Controller::new(ids.clone(), gan, controller_cfg)?;
        let mut store = SampleStore::from_original(&fit);
        let rounds = controller.run(&mut store, &validation)?;
        let hybrid = store.hybrid();
        let model = train_ids_monitored(&hybrid, &ids, Some(&validation))?.with_description("hybrid");
        let report = model.evaluate_as(&test, PmRole::Test)?;
        info!(
            "fraction {fraction} seed {seed}: G-IDS macro-F1 {:.4} after {} round(s)",
            report.macro_f1,
            rounds.len()
        );
        let gdir = dir.join("gids");
        write_report(&gdir, &report, names)?;
        write_file(&gdir.join("epochs.csv"), &model.history_csv())?;
        write_file(&gdir.join("ledger.jsonl"), &ledger_jsonl(&rounds)?)?;
        write_file(&gdir.join("rounds.csv"), &rounds_csv(&rounds))?;
        result.ledger_problems = verify_ledger(&rounds);
        result.final_hybrid_counts = Some(
            (0..store.class_count())
                .map(|l| store.count(Some(l), FlagSet::HYBRID))
                .collect(),
        );
        result.gids = Some(report);
        result.rounds = rounds;
    }
    Ok(result)
}

/// Runs every (fraction, seed) pair and writes per-run artifacts plus
/// `comparison.csv` and `experiment.json` under the output directory.
pub fn run_experiment(config: &ExperimentConfig, arms: Arms) -> Result<ExperimentOutcome> {
    config.validate()?;
    let dataset = load_raw_dataset(&config.data)?;
    run_experiment_on(&dataset, config, arms)
}

pub fn run_experiment_on(dataset: &Dataset, config: &ExperimentConfig, arms: Arms) -> Result<ExperimentOutcome> {
    config.validate()?;
    let out = config.protocol.output_dir.clone();
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let names = &dataset.label_names;

    let contexts = config
        .protocol
        .seeds
        .iter()
        .map(|&seed| prepare_seed(dataset, config, seed, &out))
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, f64)> = (0..contexts.len())
        .flat_map(|c| config.protocol.fractions.iter().map(move |&f| (c, f)))
        .collect();
    let run = |&(c, f): &(usize, f64)| run_one(&contexts[c], f, config, arms, names, &out);
    let runs = if config.protocol.parallel {
        jobs.par_iter().map(run).collect::<Result<Vec<_>>>()?
    } else {
        jobs.iter().map(run).collect::<Result<Vec<_>>>()?
    };

    write_file(&out.join("comparison.csv"), &comparison_csv(&runs, names))?;
    let summary = serde_json::json!({
        "label_names": names,
        "class_counts": class_counts(&dataset.labels, names.len()),
        "rows": dataset.labels.len(),
        "config": config,
        "reference": config.reference,
        "runs": runs.iter().map(|r| serde_json::json!({
            "fraction": r.fraction,
            "seed": r.seed,
            "dir": r.dir,
            "sids": r.sids.is_some(),
            "gids": r.gids.is_some(),
            "leak_free": r.leak_free,
            "ledger_problems": r.ledger_problems,
        })).collect::<Vec<_>>(),
    });
    write_file(&out.join("experiment.json"), &serde_json::to_string_pretty(&summary)?)?;
    Ok(ExperimentOutcome {
        label_names: names.clone(),
        runs,
        output_dir: out,
    })
}

fn class_counts(labels: &[usize], classes: usize) -> Vec<usize> {
    let mut counts = vec![0; classes];
    for &l in labels {
        counts[l] += 1;
    }
    counts
}

fn opt_cell(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// One row per run; cells of an arm that did not run are left empty.
pub fn comparison_csv(runs: &[RunResult], names: &[String]) -> String {
    let mut out = String::from("fraction,seed,s_ids_macro_f1,g_ids_macro_f1");
    for arm in ["s", "g"] {
        for name in names {
            let _ = write!(out, ",{arm}_f1_{name}");
        }
    }
    out.push('\n');
    for r in runs {
        let _ = write!(
            out,
            "{},{},{},{}",
            r.fraction,
            r.seed,
            opt_cell(r.sids.as_ref().map(|m| m.macro_f1)),
            opt_cell(r.gids.as_ref().map(|m| m.macro_f1))
        );
        for report in [&r.sids, &r.gids] {
            for l in 0..names.len() {
                let _ = write!(out, ",{}", opt_cell(report.as_ref().map(|m| m.f1(l))));
            }
        }
        out.push('\n');
    }
    out
}

/// Fits a pipeline on the whole dataset and writes the model, the transformed
/// rows and a dataset summary to `out`.
pub fn preprocess(config: &ExperimentConfig, out: &Path) -> Result<PipelineModel> {
    let dataset = load_raw_dataset(&config.data)?;
    let pipeline = fit_pipeline(&dataset.table, config.protocol.pca_dims, config.protocol.variance_floor)?;
    let (encoded, _) = pipeline.encode(&dataset.table, UnseenPolicy::Strict)?;
    let (data, _) = pipeline.transform(&dataset.table, UnseenPolicy::Strict)?;
    write_file(&out.join("pipeline.txt"), &pipeline.to_text())?;
    write_file(&out.join("transformed.csv"), &data.to_csv())?;
    let summary = serde_json::json!({
        "rows": data.len(),
        "label_names": dataset.label_names,
        "class_counts": data.class_counts(),
        "encoded_dims": pipeline.d_in(),
        "pca_dims": pipeline.d_out(),
        "sparsity": sparsity(encoded.view())?,
        "explained_variance_ratios": pipeline.explained_variance_ratios(),
        "cumulative_explained_variance": pipeline.cumulative_explained_variance(),
        "warnings": pipeline.warnings,
    });
    write_file(&out.join("dataset.json"), &serde_json::to_string_pretty(&summary)?)?;
    Ok(pipeline)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassSpec {
    pub name: String,
    pub count: usize,
    pub mean: Vec<f64>,
    /// Full covariance; takes precedence over `std`.
    #[serde(default)]
    pub cov: Option<Vec<Vec<f64>>>,
    /// Isotropic standard deviation, 1 when neither field is given.
    #[serde(default)]
    pub std: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    #[serde(default)]
    pub seed: u64,
    pub classes: Vec<ClassSpec>,
}

impl SyntheticSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn dim(&self) -> usize {
        self.classes.first().map_or(0, |c| c.mean.len())
    }

    /// Four 20-dim classes, 6000 rows. Classes `a`, `b` and `c` sit 4 units
    /// out on separate axes with unit spread; the minority `d` (2%) is centred
    /// 3 units from `a` with standard deviation 2, so it covers a region that
    /// a few dozen samples describe poorly.
    pub fn desk_scale(seed: u64) -> Self {
        let dim = 20;
        let axis = |i: usize, v: f64| {
            let mut m = vec![0.0; dim];
            m[i] = v;
            m
        };
        let mut minority = axis(0, 4.0);
        minority[3] = 3.0;
        let class = |name: &str, count, mean, std| ClassSpec { name: name.into(), count, mean, cov: None, std: Some(std) };
        Self {
            seed,
            classes: vec![
                class("a", 2640, axis(0, 4.0), 1.0),
                class("b", 1800, axis(1, 4.0), 1.0),
                class("c", 1440, axis(2, 4.0), 1.0),
                class("d", 120, minority, 2.0),
            ],
        }
    }
}

/// Lower-triangular `L` with `L L^T = cov`; errors unless `cov` is positive definite.
pub fn cholesky(cov: &Array2<f64>) -> Result<Array2<f64>> {
    let n = cov.nrows();
    if cov.ncols() != n {
        return Err(Error::Shape("covariance must be square".into()));
    }
    let mut l = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            if (cov[[i, j]] - cov[[j, i]]).abs() > 1e-12 * (1.0 + cov[[i, j]].abs()) {
                return Err(Error::Data("covariance is not symmetric".into()));
            }
            let dot: f64 = (0..j).map(|k| l[[i, k]] * l[[j, k]]).sum();
            if i == j {
                let d = cov[[i, i]] - dot;
                if d.is_nan() || d <= 1e-12 {
                    return Err(Error::Data("degenerate covariance: not positive definite".into()));
                }
                l[[i, i]] = d.sqrt();
            } else {
                l[[i, j]] = (cov[[i, j]] - dot) / l[[j, j]];
            }
        }
    }
    Ok(l)
}

/// Dataset CSV (`f0..f{d-1},label`, shuffled) and the matching schema text.
pub struct SyntheticDataset {
    pub csv: String,
    pub schema: String,
}

pub fn gen_synthetic_dataset(spec: &SyntheticSpec) -> Result<SyntheticDataset> {
    let dim = spec.dim();
    if dim == 0 || spec.classes.is_empty() {
        return Err(Error::Config("synthetic spec needs at least one class with a non-empty mean".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut rows: Vec<(Array1<f64>, usize)> = Vec::new();
    for (c, class) in spec.classes.iter().enumerate() {
        if class.mean.len() != dim {
            return Err(Error::Shape(format!("class {} mean has {} dims, expected {dim}", class.name, class.mean.len())));
        }
        if class.count < 2 {
            return Err(Error::Config(format!("class {} needs at least 2 rows", class.name)));
        }
        if class.name.is_empty() || class.name.contains(',') {
            return Err(Error::Config(format!("invalid class name `{}`", class.name)));
        }
        let cov = match (&class.cov, class.std) {
            (Some(rows), _) => {
                if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
                    return Err(Error::Shape(format!("class {} covariance must be {dim}x{dim}", class.name)));
                }
                Array2::from_shape_fn((dim, dim), |(i, j)| rows[i][j])
            }
            (None, std) => {
                let s = std.unwrap_or(1.0);
                Array2::from_diag_elem(dim, s * s)
            }
        };
        let l = cholesky(&cov)?;
        let mean = Array1::from(class.mean.clone());
        for _ in 0..class.count {
            let z = Array1::from_shape_fn(dim, |_| StandardNormal.sample(&mut rng));
            rows.push((&mean + &l.dot(&z), c));
        }
    }
    rows.shuffle(&mut rng);

    let mut csv = String::new();
    for (x, c) in &rows {
        for v in x {
            let _ = write!(csv, "{v},");
        }
        csv.push_str(&spec.classes[*c].name);
        csv.push('\n');
    }
    let mut schema = vec!["numeric"; dim];
    schema.push("label");
    Ok(SyntheticDataset {
        csv,
        schema: schema.join("\n") + "\n",
    })
}

fn read_artifact(path: &Path, missing: &mut Vec<String>) -> Option<String> {
    match fs::read_to_string(path) {
        Ok(text) => Some(text),
        Err(_) => {
            missing.push(path.display().to_string());
            None
        }
    }
}

#[derive(Debug, Deserialize)]
struct RunEntry {
    fraction: f64,
    seed: u64,
    dir: String,
    sids: bool,
    gids: bool,
}

#[derive(Debug, Deserialize)]
struct ExperimentSummary {
    label_names: Vec<String>,
    runs: Vec<RunEntry>,
}

/// Consolidates a finished experiment directory into `report/` and returns a
/// plain-text summary.
pub fn emit_report(run_dir: &Path) -> Result<String> {
    let mut missing = Vec::new();
    let summary_path = run_dir.join("experiment.json");
    let Some(text) = read_artifact(&summary_path, &mut missing) else {
        return Err(Error::MissingArtifacts(missing));
    };
    let summary: ExperimentSummary = serde_json::from_str(&text)?;
    let names = &summary.label_names;

    struct Loaded {
        entry: RunEntry,
        sids: Option<MetricsReport>,
        gids: Option<MetricsReport>,
        rounds: Vec<RoundLog>,
        epochs: Vec<(&'static str, String)>,
    }
    let mut loaded = Vec::new();
    for entry in summary.runs {
        let dir = run_dir.join("runs").join(&entry.dir);
        let mut item = Loaded { entry, sids: None, gids: None, rounds: Vec::new(), epochs: Vec::new() };
        for (arm, wanted) in [("sids", item.entry.sids), ("gids", item.entry.gids)] {
            if !wanted {
                continue;
            }
            let report = read_artifact(&dir.join(arm).join("report.json"), &mut missing)
                .map(|t| serde_json::from_str::<MetricsReport>(&t))
                .transpose()?;
            if let Some(t) = read_artifact(&dir.join(arm).join("epochs.csv"), &mut missing) {
                item.epochs.push((arm, t));
            }
            if arm == "sids" {
                item.sids = report;
            } else {
                item.gids = report;
                if let Some(t) = read_artifact(&dir.join(arm).join("ledger.jsonl"), &mut missing) {
                    item.rounds = parse_ledger(&t)?;
                }
            }
        }
        loaded.push(item);
    }
    if !missing.is_empty() {
        return Err(Error::MissingArtifacts(missing));
    }

    // macro-F1 per fraction, averaged over seeds
    let mut by_fraction: BTreeMap<u64, (f64, Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for item in &loaded {
        let slot = by_fraction
            .entry(item.entry.fraction.to_bits())
            .or_insert((item.entry.fraction, Vec::new(), Vec::new()));
        if let Some(r) = &item.sids {
            slot.1.push(r.macro_f1);
        }
        if let Some(r) = &item.gids {
            slot.2.push(r.macro_f1);
        }
    }
    let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    let mut curve = String::from("fraction,runs,s_ids_macro_f1,g_ids_macro_f1\n");
    // BTreeMap on the bit pattern orders positive floats ascending
    let points: Vec<(f64, usize, Option<f64>, Option<f64>)> = by_fraction
        .values()
        .map(|(f, s, g)| (*f, s.len().max(g.len()), mean(s), mean(g)))
        .collect();
    for (f, n, s, g) in &points {
        let _ = writeln!(curve, "{f},{n},{},{}", opt_cell(*s), opt_cell(*g));
    }

    let mut table = String::from(
        "fraction,seed,label,support,s_precision,s_recall,s_f1,g_precision,g_recall,g_f1\n",
    );
    for item in &loaded {
        for (l, name) in names.iter().enumerate() {
            let s = item.sids.as_ref().and_then(|r| r.per_label.get(l));
            let g = item.gids.as_ref().and_then(|r| r.per_label.get(l));
            let support = s.or(g).map_or(0, |m| m.support);
            let _ = writeln!(
                table,
                "{},{},{name},{support},{},{},{},{},{},{}",
                item.entry.fraction,
                item.entry.seed,
                opt_cell(s.map(|m| m.precision)),
                opt_cell(s.map(|m| m.recall)),
                opt_cell(s.map(|m| m.f1)),
                opt_cell(g.map(|m| m.precision)),
                opt_cell(g.map(|m| m.recall)),
                opt_cell(g.map(|m| m.f1)),
            );
        }
    }

    let mut stability = String::new();
    for item in &loaded {
        for (arm, text) in &item.epochs {
            let mut lines = text.lines();
            let header = lines.next().unwrap_or_default();
            if stability.is_empty() {
                let _ = writeln!(stability, "fraction,seed,arm,{header}");
            }
            for line in lines {
                let _ = writeln!(stability, "{},{},{arm},{line}", item.entry.fraction, item.entry.seed);
            }
        }
    }

    let mut rounds = String::from("fraction,seed,round,validation_macro_f1,accepted\n");
    for item in &loaded {
        for r in &item.rounds {
            let _ = writeln!(
                rounds,
                "{},{},{},{},{}",
                item.entry.fraction,
                item.entry.seed,
                r.round,
                r.validation_macro_f1,
                r.accepted()
            );
        }
    }

    let report_dir = run_dir.join("report");
    write_file(&report_dir.join("macro_curve.csv"), &curve)?;
    write_file(&report_dir.join("label_table.csv"), &table)?;
    write_file(&report_dir.join("stability.csv"), &stability)?;
    write_file(&report_dir.join("rounds.csv"), &rounds)?;
    let json = serde_json::json!({
        "label_names": names,
        "macro_curve": points.iter().map(|(f, _, s, g)| serde_json::json!({
            "fraction": f, "s_ids_macro_f1": s, "g_ids_macro_f1": g,
        })).collect::<Vec<_>>(),
        "runs": loaded.iter().map(|item| serde_json::json!({
            "fraction": item.entry.fraction,
            "seed": item.entry.seed,
            "s_ids_macro_f1": item.sids.as_ref().map(|r| r.macro_f1),
            "g_ids_macro_f1": item.gids.as_ref().map(|r| r.macro_f1),
            "round_macro_f1": item.rounds.iter().map(|r| r.validation_macro_f1).collect::<Vec<_>>(),
        })).collect::<Vec<_>>(),
    });
    write_file(&report_dir.join("summary.json"), &serde_json::to_string_pretty(&json)?)?;

    let mut text = String::new();
    let _ = writeln!(text, "{:>8}  {:>8}  {:>8}", "fraction", "S-IDS", "G-IDS");
    for (f, _, s, g) in &points {
        let cell = |v: &Option<f64>| v.map_or_else(|| "absent".to_string(), |v| format!("{v:.4}"));
        let _ = writeln!(text, "{f:>8.2}  {:>8}  {:>8}", cell(s), cell(g));
    }
    for item in &loaded {
        if !item.rounds.is_empty() {
            let seq: Vec<String> = item.rounds.iter().map(|r| format!("{:.4}", r.validation_macro_f1)).collect();
            let _ = writeln!(
                text,
                "fraction {:.2} seed {}: {} round(s), validation macro-F1 {}",
                item.entry.fraction,
                item.entry.seed,
                item.rounds.len(),
                seq.join(" ")
            );
        }
    }
    Ok(text)
}
