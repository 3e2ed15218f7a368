use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use driftbench::adapt::{adapt_and_predict, evaluate, train_run, AdaptConfig, EvalReport};
use driftbench::bench::{
    build_table, emit_plots, eval_seed, export_csv, init_model, ordering_checks, run_experiment,
    split_episodes, ExperimentConfig,
};
use driftbench::io::{read_text, to_json_pretty, write_text};
use driftbench::model::{Model, VariantTag};
use driftbench::synthgen::{derived_rng, generate, Dataset, DatasetSpec, Variant};
use driftbench::theory::{
    run_expressivity_suite, run_pl_suite, run_regret_suite, ExpressivitySuiteConfig, PlSuiteConfig,
    RegretSuiteConfig,
};
use driftbench::{Error, Result};

const ACCEPTANCE_FAILURE: u8 = 4;

/// Trunk-branch test-time adaptation benchmark.
///
/// Outputs go under `--out`, else under `$DRIFTBENCH_OUT`, else under `./results`.
#[derive(Parser)]
#[command(name = "driftbench", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Probe {
    Pl,
    Regret,
    Expressivity,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset file.
    GenData {
        #[arg(long, default_value = "s1")]
        variant: Variant,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, visible_alias = "count", default_value_t = 5200)]
        episodes: usize,
        #[arg(long, default_value_t = 60)]
        input_len: usize,
        #[arg(long, default_value_t = 30)]
        output_len: usize,
        /// Output file; defaults to `<root>/data/<variant>-seed-<seed>.json`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train one model variant on the leading episodes of a dataset.
    Train {
        #[arg(long)]
        variant: VariantTag,
        #[arg(long)]
        dataset: PathBuf,
        /// Adaptation config (JSON); defaults apply to missing fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Trained static checkpoint used as the frozen LoRA base.
        #[arg(long)]
        base: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on the trailing episodes of a dataset.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = 200)]
        episodes: usize,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Column label written into the report.
        #[arg(long)]
        label: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a numerical theory probe.
    Theory {
        #[arg(long, value_enum)]
        probe: Probe,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build the results table from evaluation reports found under the given paths.
    Table {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Plot adapted predictions for one episode as SVG.
    Plot {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = 0)]
        episode: usize,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output SVG file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the full desk-scale table protocol.
    Repro {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Restrict to these datasets (comma separated).
        #[arg(long, value_delimiter = ',')]
        datasets: Option<Vec<Variant>>,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Check the S1 ordering and exit with status 4 on failure.
        #[arg(long)]
        check: bool,
    },
}

fn out_root(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os("DRIFTBENCH_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("results"))
}

fn adapt_config(path: Option<&Path>) -> Result<AdaptConfig> {
    match path {
        Some(p) => AdaptConfig::from_json(&read_text(p)?),
        None => Ok(AdaptConfig::default()),
    }
}

fn load_json<T: serde::de::DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        Some(p) => Ok(serde_json::from_str(&read_text(p)?)?),
        None => Ok(T::default()),
    }
}

fn save(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    write_text(path, &to_json_pretty(value)?)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::GenData {
            variant,
            seed,
            episodes,
            input_len,
            output_len,
            out,
        } => {
            let spec = DatasetSpec {
                input_len,
                output_len,
                ..DatasetSpec::new(variant, seed)
            };
            let path = out.unwrap_or_else(|| driftbench::bench::dataset_path(&out_root(None), variant, seed));
            generate(&spec, episodes)?.save(&path)?;
            println!("wrote {}", path.display());
        }
        Command::Train {
            variant,
            dataset,
            config,
            seed,
            base,
            out,
        } => {
            let cfg = adapt_config(config.as_deref())?;
            let ds = Dataset::load(&dataset)?;
            let arch = driftbench::model::ArchitectureSpec::kunet(ds.spec.input_len, ds.spec.output_len);
            let base = base.map(|p| Model::load(&p)).transpose()?;
            if variant == VariantTag::Lora && base.is_none() {
                return Err(Error::config("base", "the lora variant needs --base <static checkpoint>"));
            }
            let mut model = init_model(&arch, variant, &cfg, seed, base.as_ref())?;
            let log = train_run(&ds.episodes, &mut model, &cfg, seed)?;
            let dir = out_root(out);
            save(&dir.join("run_log.json"), &log)?;
            model.save(&dir.join("model.json"))?;
            println!("wrote {}", dir.join("model.json").display());
            if let (Some(first), Some(last)) = (log.epochs.first(), log.epochs.last()) {
                println!(
                    "query MSE: first epoch {:.4}, last epoch {:.4}",
                    first.mean_query_mse, last.mean_query_mse
                );
            }
        }
        Command::Eval {
            model,
            dataset,
            episodes,
            config,
            seed,
            label,
            out,
        } => {
            let cfg = adapt_config(config.as_deref())?;
            let m = Model::load(&model)?;
            let ds = Dataset::load(&dataset)?;
            let (_, eval) = split_episodes(&ds.episodes, episodes)?;
            let label = label.unwrap_or_else(|| m.variant().to_string());
            let report = evaluate(eval, &m, &cfg, &ds.spec.variant.to_string(), &label, eval_seed(seed))?;
            save(&out_root(out).join("eval.json"), &report)?;
            println!("mean query MSE {:.4} (std {:.4})", report.mean_mse, report.std_mse);
        }
        Command::Theory { probe, config, out } => {
            let dir = out_root(out);
            match probe {
                Probe::Pl => {
                    let cfg: PlSuiteConfig = load_json(config.as_deref())?;
                    let (rep, traces) = run_pl_suite(&cfg)?;
                    for (i, t) in traces.iter().enumerate() {
                        write_text(&dir.join(format!("pl-trace-{i}.csv")), &t.trace_csv()?)?;
                    }
                    save(&dir.join("pl.json"), &rep)?;
                    println!(
                        "violations {} over {} instances; zero-drift gap ratio {:.3e}",
                        rep.total_violations,
                        rep.instances.len(),
                        rep.zero_drift_ratio
                    );
                }
                Probe::Regret => {
                    let cfg: RegretSuiteConfig = load_json(config.as_deref())?;
                    let (rep, runs) = run_regret_suite(&cfg)?;
                    for r in &runs {
                        write_text(&dir.join(format!("regret-trace-{}.csv", r.horizon)), &r.trace_csv()?)?;
                    }
                    save(&dir.join("regret.json"), &rep)?;
                    for (t, avg) in &rep.average_regret {
                        println!("T = {t}: R_T / T = {avg:.6}");
                    }
                    println!(
                        "bound holds on {}/{} instances",
                        rep.batch_within_bound.iter().filter(|b| **b).count(),
                        rep.batch_within_bound.len()
                    );
                }
                Probe::Expressivity => {
                    let cfg: ExpressivitySuiteConfig = load_json(config.as_deref())?;
                    let rep = run_expressivity_suite(&cfg)?;
                    let mut w = csv::Writer::from_writer(Vec::new());
                    let enc = |e: csv::Error| Error::Contract(e.to_string());
                    w.write_record(["instance", "task", "static_error", "dynamic_error"]).map_err(enc)?;
                    for (name, r) in [("conflicting", &rep.conflicting), ("identical", &rep.identical)] {
                        for (i, (s, d)) in r.static_errors.iter().zip(&r.dynamic_errors).enumerate() {
                            w.write_record([name.to_string(), i.to_string(), s.to_string(), d.to_string()])
                                .map_err(enc)?;
                        }
                    }
                    let bytes = w.into_inner().map_err(|e| Error::Contract(e.to_string()))?;
                    write_text(&dir.join("expressivity-trace.csv"), &String::from_utf8_lossy(&bytes))?;
                    save(&dir.join("expressivity.json"), &rep)?;
                    println!(
                        "conflicting: static {:.4e} dynamic {:.4e}",
                        rep.conflicting.static_worst_error, rep.conflicting.dynamic_worst_error
                    );
                }
            }
        }
        Command::Table { reports, out } => {
            let mut found = Vec::new();
            for root in &reports {
                for entry in walkdir::WalkDir::new(root).sort_by_file_name() {
                    let entry = entry.map_err(|e| {
                        let path = e.path().unwrap_or(root).to_path_buf();
                        let source = e.into_io_error().unwrap_or_else(|| std::io::Error::other("directory loop"));
                        Error::io(path, source)
                    })?;
                    if entry.file_type().is_file() && entry.file_name() == "eval.json" {
                        found.push(serde_json::from_str::<EvalReport>(&read_text(entry.path())?)?);
                    }
                }
            }
            let table = build_table(&found)?;
            let dir = out_root(out);
            save(&dir.join("table.json"), &table)?;
            export_csv(&table, &dir.join("table.csv"))?;
            println!("wrote {}", dir.join("table.csv").display());
        }
        Command::Plot {
            model,
            dataset,
            episode,
            config,
            seed,
            out,
        } => {
            let cfg = adapt_config(config.as_deref())?;
            let m = Model::load(&model)?;
            let ds = Dataset::load(&dataset)?;
            let ep = ds.episodes.get(episode).ok_or_else(|| {
                Error::config("episode", format!("index {episode} out of range ({} episodes)", ds.episodes.len()))
            })?;
            let (support, query) = adapt_and_predict(&m, ep, &cfg, &mut derived_rng(eval_seed(seed), episode as u64))?;
            let preds: Vec<Vec<f64>> = support.into_iter().chain(query).collect();
            let path = out.unwrap_or_else(|| out_root(None).join(format!("episode-{episode}.svg")));
            emit_plots(ep, &preds, &path)?;
            println!("wrote {}", path.display());
        }
        Command::Repro {
            config,
            datasets,
            seeds,
            out,
            check,
        } => {
            let mut cfg = match config {
                Some(p) => serde_json::from_str::<ExperimentConfig>(&read_text(&p)?)?,
                None => ExperimentConfig::default(),
            };
            if let Some(d) = datasets {
                cfg.datasets = d;
            }
            if let Some(s) = seeds {
                cfg.seeds = s;
            }
            if out.is_some() || std::env::var_os("DRIFTBENCH_OUT").is_some() {
                cfg.out_dir = out_root(out);
            }
            if check && !cfg.datasets.contains(&Variant::S1) {
                return Err(Error::config("datasets", "--check needs the s1 dataset"));
            }
            if check {
                for label in ["dynamic", "dynamic*", "lora", "static"] {
                    if !cfg.variants.iter().any(|v| v.label == label) {
                        return Err(Error::config("variants", format!("--check needs a {label:?} column")));
                    }
                }
            }
            let manifest = run_experiment(&cfg, &mut |line| println!("{line}"))?;
            let table = build_table(&manifest.eval_reports(&cfg.out_dir)?)?;
            for row in &table.rows {
                let imp = row.imp_pct.map_or("n/a".into(), |v| format!("{v:.2}%"));
                println!("{}: imp {imp}", row.dataset);
            }
            println!("wrote {}", cfg.out_dir.join("manifest.json").display());
            if check {
                let checks = ordering_checks(&table, "s1", 0.3, 2.0)?;
                for c in &checks {
                    println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                }
                if checks.iter().any(|c| !c.passed) {
                    return Ok(ACCEPTANCE_FAILURE);
                }
            }
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
