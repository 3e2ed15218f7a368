//! Experiment orchestration: dataset files, per-cell training and
//! evaluation, the results table and plots.
//!
//! Every cell writes only inside `runs/<dataset>/<variant>/seed-<s>/`.
//! Result files are pure functions of the configuration; wall times and
//! timestamps live only in the manifest.

mod plot;
mod table;

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::adapt::{evaluate, train_run, AdaptConfig, EvalReport, RunLog};
use crate::error::{Error, Result};
use crate::io::{read_text, sha256_file, sha256_hex, to_json_pretty, write_text};
use crate::model::{ArchitectureSpec, Model, VariantTag};
use crate::synthgen::{derived_rng, generate, Dataset, DatasetSpec, Episode, Variant};

pub use plot::{emit_plots, render_svg};
pub use table::{build_table, export_csv, fmt_sig6, imp_pct, ResultsTable, TableCell, TableRow};

pub const CODE_VERSION: &str = concat!("driftbench ", env!("CARGO_PKG_VERSION"));

/// One table column: a model variant with its phase-1 step counts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantSpec {
    pub label: String,
    pub tag: VariantTag,
    /// Overrides `AdaptConfig::inner_steps`.
    #[serde(default)]
    pub inner_steps: Option<usize>,
    /// Overrides `AdaptConfig::eval_inner_steps`.
    #[serde(default)]
    pub eval_inner_steps: Option<usize>,
}

impl VariantSpec {
    pub fn new(label: &str, tag: VariantTag) -> Self {
        VariantSpec {
            label: label.into(),
            tag,
            inner_steps: None,
            eval_inner_steps: None,
        }
    }

    pub fn with_steps(mut self, steps: usize) -> Self {
        self.inner_steps = Some(steps);
        self.eval_inner_steps = Some(steps);
        self
    }

    /// Dynamic (10 steps), Dynamic* (30 steps), LoRA, Init-All, Static.
    /// Labels starting with `dynamic` count as dynamic columns in the table.
    pub fn table_columns() -> Vec<VariantSpec> {
        vec![
            VariantSpec::new("dynamic", VariantTag::Dynamic),
            VariantSpec::new("dynamic*", VariantTag::Dynamic).with_steps(30),
            VariantSpec::new("init-all", VariantTag::InitAll),
            VariantSpec::new("lora", VariantTag::Lora),
            VariantSpec::new("static", VariantTag::Static),
        ]
    }

    pub fn adapt_config(&self, base: &AdaptConfig) -> AdaptConfig {
        let mut cfg = base.clone();
        if let Some(s) = self.inner_steps {
            cfg.inner_steps = s;
        }
        if self.eval_inner_steps.is_some() {
            cfg.eval_inner_steps = self.eval_inner_steps;
        }
        cfg
    }

    fn dir_name(&self) -> String {
        self.label.replace('*', "-star")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub datasets: Vec<Variant>,
    pub variants: Vec<VariantSpec>,
    pub adapt: AdaptConfig,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub eval_episodes: usize,
    pub input_len: usize,
    pub output_len: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            datasets: vec![Variant::S1, Variant::S2, Variant::S3],
            variants: VariantSpec::table_columns(),
            adapt: AdaptConfig::default(),
            seeds: vec![0, 1, 2],
            out_dir: PathBuf::from("results"),
            eval_episodes: 200,
            input_len: 60,
            output_len: 30,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "need at least one seed"));
        }
        if self.datasets.is_empty() {
            return Err(Error::config("datasets", "need at least one dataset"));
        }
        if self.variants.is_empty() {
            return Err(Error::config("variants", "need at least one variant"));
        }
        let mut seen = std::collections::BTreeSet::new();
        for v in &self.variants {
            if !seen.insert(&v.label) {
                return Err(Error::config("variants", format!("duplicate label {:?}", v.label)));
            }
            v.adapt_config(&self.adapt).validate()?;
        }
        if self.eval_episodes == 0 {
            return Err(Error::config("eval_episodes", "must be at least 1"));
        }
        self.arch().validate()?;
        if self.arch().trunk_depth != self.adapt.alphas.len() {
            return Err(Error::config(
                "adapt.alphas",
                format!("{} rates for {} trunk layers", self.adapt.alphas.len(), self.arch().trunk_depth),
            ));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn arch(&self) -> ArchitectureSpec {
        ArchitectureSpec::kunet(self.input_len, self.output_len)
    }

    pub fn dataset_spec(&self, variant: Variant, seed: u64) -> DatasetSpec {
        DatasetSpec {
            input_len: self.input_len,
            output_len: self.output_len,
            ..DatasetSpec::new(variant, seed)
        }
    }

    /// Training episodes followed by evaluation episodes.
    pub fn episodes_per_dataset(&self) -> usize {
        self.adapt.train_episodes() + self.eval_episodes
    }

    /// SHA-256 of the canonical JSON form, output directory excluded.
    pub fn hash(&self) -> Result<String> {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        Ok(sha256_hex(serde_json::to_string(&c)?.as_bytes()))
    }
}

/// Splits a dataset into its training prefix and evaluation suffix.
pub fn split_episodes(episodes: &[Episode], eval: usize) -> Result<(&[Episode], &[Episode])> {
    if episodes.len() < eval + 1 {
        return Err(Error::config(
            "dataset",
            format!("{} episodes cannot hold {eval} evaluation episodes plus training", episodes.len()),
        ));
    }
    Ok(episodes.split_at(episodes.len() - eval))
}

/// Fresh, deterministic model for a cell. LoRA needs the trained static base.
pub fn init_model(
    arch: &ArchitectureSpec,
    tag: VariantTag,
    cfg: &AdaptConfig,
    seed: u64,
    static_base: Option<&Model>,
) -> Result<Model> {
    let mut rng = derived_rng(seed, 1_000_000);
    match tag {
        VariantTag::Dynamic => Model::dynamic(arch.clone(), &cfg.gammas, &mut rng),
        VariantTag::Static => Model::static_model(arch.clone(), &mut rng),
        VariantTag::InitAll => Model::init_all(arch.clone(), &mut rng),
        VariantTag::Lora => {
            let base = static_base.ok_or_else(|| Error::Contract("the LoRA variant needs a trained static base".into()))?;
            Model::lora_from(base, cfg.lora_rank, cfg.lora_scale, &mut derived_rng(seed, 1_000_001))
        }
    }
}

/// Evaluation RNG seed of a cell.
pub fn eval_seed(seed: u64) -> u64 {
    seed ^ 0x5eed_e7a1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestFile {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestRun {
    pub dataset: Variant,
    pub variant: String,
    pub seed: u64,
    pub run_log: String,
    pub eval_report: String,
    pub checkpoint: String,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub code_version: String,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub datasets: Vec<ManifestFile>,
    pub runs: Vec<ManifestRun>,
    /// Every result file with its content hash, paths relative to the output root.
    pub files: Vec<ManifestFile>,
}

impl RunManifest {
    pub const FILE: &'static str = "manifest.json";

    pub fn load(root: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&read_text(&root.join(Self::FILE))?)?)
    }

    /// Checks that every listed file exists and matches its hash; returns
    /// the offending paths.
    pub fn verify(&self, root: &Path) -> Vec<String> {
        self.files
            .iter()
            .chain(&self.datasets)
            .filter(|f| sha256_file(&root.join(&f.path)).map_or(true, |h| h != f.sha256))
            .map(|f| f.path.clone())
            .collect()
    }

    /// Loads every evaluation report listed in the manifest.
    pub fn eval_reports(&self, root: &Path) -> Result<Vec<EvalReport>> {
        self.runs
            .iter()
            .map(|r| Ok(serde_json::from_str(&read_text(&root.join(&r.eval_report))?)?))
            .collect()
    }
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn rel(p: &Path, root: &Path) -> String {
    p.strip_prefix(root).unwrap_or(p).to_string_lossy().replace('\\', "/")
}

/// Writes (or reuses, if the bytes match) the dataset file for one
/// `(variant, seed)` and returns its path.
pub fn dataset_path(root: &Path, variant: Variant, seed: u64) -> PathBuf {
    root.join("data").join(format!("{variant}-seed-{seed}.json"))
}

/// Runs every `(dataset, variant, seed)` cell and writes the manifest.
/// `progress` receives one line per finished cell.
pub fn run_experiment(cfg: &ExperimentConfig, progress: &mut dyn FnMut(&str)) -> Result<RunManifest> {
    cfg.validate()?;
    let root = cfg.out_dir.clone();
    let started = unix_now();
    let arch = cfg.arch();
    let mut datasets = Vec::new();
    let mut runs = Vec::new();
    let mut files = Vec::new();

    for &dv in &cfg.datasets {
        for &seed in &cfg.seeds {
            let spec = cfg.dataset_spec(dv, seed);
            let ds = generate(&spec, cfg.episodes_per_dataset())?;
            let path = dataset_path(&root, dv, seed);
            ds.save(&path)?;
            datasets.push(ManifestFile {
                path: rel(&path, &root),
                sha256: sha256_file(&path)?,
            });
            let ds = Dataset::load(&path)?;
            let (train, eval) = split_episodes(&ds.episodes, cfg.eval_episodes)?;
            // The static recipe also provides the frozen LoRA base.
            let mut static_run: Option<(Model, RunLog)> = None;
            let trained_static = |slot: &mut Option<(Model, RunLog)>| -> Result<(Model, RunLog)> {
                if slot.is_none() {
                    let mut s = init_model(&arch, VariantTag::Static, &cfg.adapt, seed, None)?;
                    let log = train_run(train, &mut s, &cfg.adapt, seed)?;
                    *slot = Some((s, log));
                }
                Ok(slot.clone().expect("filled above"))
            };

            for v in &cfg.variants {
                let t0 = Instant::now();
                let vcfg = v.adapt_config(&cfg.adapt);
                let (model, log) = match v.tag {
                    VariantTag::Static if vcfg == cfg.adapt => trained_static(&mut static_run)?,
                    VariantTag::Lora => {
                        let (base, _) = trained_static(&mut static_run)?;
                        let mut m = init_model(&arch, v.tag, &vcfg, seed, Some(&base))?;
                        let log = train_run(train, &mut m, &vcfg, seed)?;
                        (m, log)
                    }
                    tag => {
                        let mut m = init_model(&arch, tag, &vcfg, seed, None)?;
                        let log = train_run(train, &mut m, &vcfg, seed)?;
                        (m, log)
                    }
                };
                let report = evaluate(eval, &model, &vcfg, &dv.to_string(), &v.label, eval_seed(seed))?;

                let dir = root.join("runs").join(dv.to_string()).join(v.dir_name()).join(format!("seed-{seed}"));
                let log_path = dir.join("run_log.json");
                let eval_path = dir.join("eval.json");
                let ckpt_path = dir.join("model.json");
                write_text(&log_path, &to_json_pretty(&log)?)?;
                write_text(&eval_path, &to_json_pretty(&report)?)?;
                model.save(&ckpt_path)?;
                for p in [&log_path, &eval_path, &ckpt_path] {
                    files.push(ManifestFile {
                        path: rel(p, &root),
                        sha256: sha256_file(p)?,
                    });
                }
                let wall = t0.elapsed().as_secs_f64();
                progress(&format!(
                    "{dv} {} seed {seed}: mean query MSE {:.4} ({wall:.1} s)",
                    v.label, report.mean_mse
                ));
                runs.push(ManifestRun {
                    dataset: dv,
                    variant: v.label.clone(),
                    seed,
                    run_log: rel(&log_path, &root),
                    eval_report: rel(&eval_path, &root),
                    checkpoint: rel(&ckpt_path, &root),
                    wall_seconds: wall,
                });
            }
        }
    }

    let reports: Vec<EvalReport> = runs
        .iter()
        .map(|r| Ok(serde_json::from_str(&read_text(&root.join(&r.eval_report))?)?))
        .collect::<Result<_>>()?;
    let table = build_table(&reports)?;
    let table_json = root.join("table.json");
    let table_csv = root.join("table.csv");
    write_text(&table_json, &to_json_pretty(&table)?)?;
    export_csv(&table, &table_csv)?;
    for p in [&table_json, &table_csv] {
        files.push(ManifestFile {
            path: rel(p, &root),
            sha256: sha256_file(p)?,
        });
    }

    let manifest = RunManifest {
        config_hash: cfg.hash()?,
        code_version: CODE_VERSION.into(),
        started_unix: started,
        finished_unix: unix_now(),
        datasets,
        runs,
        files,
    };
    write_text(&root.join(RunManifest::FILE), &to_json_pretty(&manifest)?)?;
    Ok(manifest)
}

/// One named pass/fail outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Table-level ordering checks on one dataset row: dynamic below LoRA below
/// static, 30-step dynamic below 10-step dynamic and at most `target`, and
/// static at least `factor` times the 30-step dynamic error.
pub fn ordering_checks(table: &ResultsTable, dataset: &str, target: f64, factor: f64) -> Result<Vec<Check>> {
    let row = table
        .rows
        .iter()
        .find(|r| r.dataset == dataset)
        .ok_or_else(|| Error::Incomplete(format!("no {dataset} row in the table")))?;
    let cell = |v: &str| {
        row.cells
            .iter()
            .find(|c| c.variant == v)
            .map(|c| c.mean_mse)
            .ok_or_else(|| Error::Incomplete(format!("{dataset}/{v} missing")))
    };
    let (d, ds, l, s) = (cell("dynamic")?, cell("dynamic*")?, cell("lora")?, cell("static")?);
    let check = |name: &str, passed: bool, detail: String| Check {
        name: name.into(),
        passed,
        detail,
    };
    Ok(vec![
        check("dynamic < lora < static", d < l && l < s, format!("{d:.4} < {l:.4} < {s:.4}")),
        check("dynamic* < dynamic", ds < d, format!("{ds:.4} < {d:.4}")),
        check("dynamic* <= target", ds <= target, format!("{ds:.4} <= {target}")),
        check("static >= factor x dynamic*", s >= factor * ds, format!("{s:.4} >= {factor} x {ds:.4}")),
    ])
}
