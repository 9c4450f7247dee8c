//! `zap`: generate synthetic metadatasets, train the zero-shot surrogate,
//! select pipelines, run leave-one-group-out evaluations and score learning
//! curves.
//!
//! Exit codes: 0 on success, 1 on runtime or data errors, 2 on usage errors.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};

use zap_core::alc::{alc, AlcConfig, LearningCurve};
use zap_core::evaluation::{
    evaluate_method, make_logo_folds, rank_reports, report_json, round6, significance_csv, sparsity_sweep,
    summary_csv, sweep_csv, EvalReport,
};
use zap_core::meta_dataset::{
    featurize, generate_synthetic_with_truth, FeatureStats, MetaDataset, SyntheticSpec, COSTS_FILE,
    META_FEATURES_FILE, PIPELINES_FILE,
};
use zap_core::pipeline_space::default_space;
use zap_core::selector::{select_knn, select_random, select_single_best, select_zero_shot, Method, SelectionResult};
use zap_core::surrogate::{train, SurrogateModel, TrainingData};

use config::{DataPaths, RunConfig, TrainOverrides};

const MODEL_FILE: &str = "model.json";
const HISTORY_FILE: &str = "loss_history.csv";
const PROVENANCE_FILE: &str = "provenance.json";
const REPORT_FILE: &str = "report.json";
const RECORDS_FILE: &str = "records.json";
const SUMMARY_FILE: &str = "summary.csv";
const SIGNIFICANCE_FILE: &str = "significance.csv";
const SWEEP_FILE: &str = "sparsity.csv";

#[derive(Parser)]
#[command(name = "zap", version, about = "Zero-shot pipeline selection toolkit")]
struct Cli {
    /// Base random seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Output directory.
    #[arg(long, global = true, env = "ZAP_OUT", default_value = "zap-out")]
    out: PathBuf,

    /// Worker threads for evaluation.
    #[arg(long, global = true, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    jobs: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic metadataset.
    Generate(GenerateArgs),
    /// Train the surrogate on a metadataset.
    Train(TrainArgs),
    /// Choose a pipeline for one dataset.
    Select(SelectArgs),
    /// Leave-one-group-out evaluation of selection methods.
    Evaluate(EvaluateArgs),
    /// Score a learning curve.
    Alc(AlcArgs),
    /// Rebuild summary tables from saved evaluation records.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..))]
    groups: u64,
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..))]
    variants: u64,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(2..))]
    pipelines: u64,
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u64).range(1..))]
    rank: u64,
    #[arg(long, default_value_t = 0.05)]
    noise: f64,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataPaths,
    /// Flat JSON run configuration; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: TrainOverrides,
}

#[derive(Args)]
struct SelectArgs {
    #[command(flatten)]
    data: DataPaths,
    /// Dataset whose meta-features are used as the query.
    #[arg(long)]
    dataset: String,
    #[arg(long, default_value = "zap_hpo", value_parser = parse_method)]
    method: Method,
    /// Trained model (defaults to `<out>/model.json`).
    #[arg(long)]
    model: Option<PathBuf>,
    /// Neighbours for zap_as_knn.
    #[arg(long, default_value_t = zap_core::selector::DEFAULT_K)]
    k: usize,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    data: DataPaths,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated methods.
    #[arg(long, value_delimiter = ',', value_parser = parse_method)]
    methods: Option<Vec<Method>>,
    /// Comma-separated seeds (overrides `--seed`).
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Comma-separated keep fractions for a sparsity sweep.
    #[arg(long, value_delimiter = ',')]
    fractions: Option<Vec<f64>>,
    /// Inner cross-validation folds for choosing the step budget.
    #[arg(long)]
    inner_cv: Option<usize>,
    #[arg(long)]
    knn_k: Option<usize>,
    #[command(flatten)]
    overrides: TrainOverrides,
}

#[derive(Args)]
struct AlcArgs {
    /// Learning-curve JSON: `[{"t": seconds, "nauc": value}, ...]`.
    #[arg(long)]
    curve: PathBuf,
    #[arg(long, default_value_t = 1200.0)]
    budget: f64,
    #[arg(long, default_value_t = 60.0)]
    t0: f64,
}

#[derive(Args)]
struct ReportArgs {
    /// Records written by `evaluate` (defaults to `<out>/records.json`).
    #[arg(long)]
    records: Option<PathBuf>,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: zap_core::Error| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Generate(a) => cmd_generate(&cli, a),
        Command::Train(a) => cmd_train(&cli, a),
        Command::Select(a) => cmd_select(&cli, a),
        Command::Evaluate(a) => cmd_evaluate(&cli, a),
        Command::Alc(a) => cmd_alc(a),
        Command::Report(a) => cmd_report(&cli, a),
    }
}

fn create_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}

fn to_json(v: &Value) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

fn cmd_generate(cli: &Cli, a: &GenerateArgs) -> Result<()> {
    let spec = SyntheticSpec {
        n_groups: a.groups as usize,
        variants_per_group: a.variants as usize,
        n_pipelines: a.pipelines as usize,
        latent_rank: a.rank as usize,
        noise_std: a.noise,
        seed: cli.seed,
    };
    let md = MetaDataset::from_synthetic(generate_synthetic_with_truth(&spec)?, &default_space())?;
    create_out(&cli.out)?;
    md.save_dir(&cli.out)?;
    let provenance = json!({
        "generator": "synthetic_low_rank",
        "spec": spec,
        "seed": cli.seed,
        "files": [COSTS_FILE, META_FEATURES_FILE, PIPELINES_FILE],
    });
    write_file(&cli.out.join(PROVENANCE_FILE), &to_json(&provenance)?)?;
    println!(
        "wrote {} datasets x {} pipelines to {}",
        md.costs.n_datasets(),
        md.costs.n_pipelines(),
        cli.out.display()
    );
    Ok(())
}

fn cmd_train(cli: &Cli, a: &TrainArgs) -> Result<()> {
    let mut cfg = RunConfig::load(a.config.as_deref())?;
    a.data.apply(&mut cfg);
    a.overrides.apply(&mut cfg.train)?;
    cfg.train.seed = cli.seed;
    let md = cfg.load_metadataset(&cli.out)?;
    let stats = FeatureStats::fit(&md.meta)?;
    let data = TrainingData::new(md.costs.clone(), stats.transform_all(&md.meta), md.pipeline_vectors.clone())?;
    let outcome = train(&data, &cfg.train).context("training failed")?;
    let model = SurrogateModel {
        params: outcome.params,
        config: cfg.train.clone(),
        feature_stats: Some(stats),
    };
    create_out(&cli.out)?;
    model.save(cli.out.join(MODEL_FILE))?;
    let mut history = String::from("step,loss\n");
    for (i, l) in outcome.history.iter().enumerate() {
        history.push_str(&format!("{},{l:.6}\n", i + 1));
    }
    write_file(&cli.out.join(HISTORY_FILE), &history)?;
    println!(
        "trained {} steps ({}), final loss {:.6}",
        cfg.train.steps,
        cfg.train.objective.as_str(),
        outcome.history.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

fn cmd_select(cli: &Cli, a: &SelectArgs) -> Result<()> {
    let method = a.method;
    let mut cfg = RunConfig::default();
    a.data.apply(&mut cfg);
    let md = cfg.load_metadataset(&cli.out)?;
    let row = md
        .costs
        .dataset_index(&a.dataset)
        .with_context(|| format!("unknown dataset '{}'", a.dataset))?;
    let others: Vec<usize> = (0..md.costs.n_datasets()).filter(|&d| d != row).collect();
    let result: SelectionResult = match method {
        Method::ZapHpo => {
            let path = a.model.clone().unwrap_or_else(|| cli.out.join(MODEL_FILE));
            let model = SurrogateModel::load(&path)?;
            let stats = match model.feature_stats {
                Some(s) => s,
                None => bail!("model {} carries no meta-feature statistics", path.display()),
            };
            let q = featurize(&md.meta[row], &stats);
            select_zero_shot(&model.params, &q, md.pipeline_vectors.view())
                .context("model does not match the pipeline encoding")?
        }
        Method::ZapAsKnn => {
            if others.is_empty() {
                bail!("zap_as_knn needs at least one other dataset");
            }
            let meta: Vec<_> = others.iter().map(|&d| md.meta[d].clone()).collect();
            let stats = FeatureStats::fit(&meta)?;
            let q = featurize(&md.meta[row], &stats);
            select_knn(
                &md.costs.select_datasets(&others),
                stats.transform_all(&meta).view(),
                &q,
                a.k.min(others.len()),
            )?
        }
        Method::SingleBest => select_single_best(&md.costs)?,
        Method::Random => select_random(md.costs.n_pipelines(), cli.seed)?,
    };
    let ids = md.costs.pipeline_ids();
    let scores: Map<String, Value> = ids
        .iter()
        .zip(&result.scores)
        .map(|(id, s)| (id.clone(), json!(round6(*s))))
        .collect();
    let doc = json!({
        "method": result.method.as_str(),
        "dataset": a.dataset,
        "chosen": ids[result.chosen],
        "seed": result.seed,
        "scores": scores,
    });
    print!("{}", to_json(&doc)?);
    Ok(())
}

fn cmd_evaluate(cli: &Cli, a: &EvaluateArgs) -> Result<()> {
    let mut cfg = RunConfig::load(a.config.as_deref())?;
    a.data.apply(&mut cfg);
    a.overrides.apply(&mut cfg.train)?;
    if let Some(m) = &a.methods {
        cfg.methods = m.iter().map(|m| m.as_str().to_string()).collect();
    }
    if let Some(s) = &a.seeds {
        cfg.seeds = s.clone();
    }
    if cfg.seeds.is_empty() {
        cfg.seeds = vec![cli.seed];
    }
    if let Some(f) = &a.fractions {
        cfg.fractions = f.clone();
    }
    if a.inner_cv.is_some() {
        cfg.inner_cv_folds = a.inner_cv;
    }
    if let Some(k) = a.knn_k {
        cfg.knn_k = k;
    }
    let methods: Vec<Method> = cfg.methods.iter().map(|m| m.parse()).collect::<Result<_, _>>()?;
    let eval_cfg = cfg.eval_config(cli.jobs as usize);
    let md = cfg.load_metadataset(&cli.out)?;
    let folds = make_logo_folds(&md.meta)?;

    let reports: Vec<EvalReport> = methods
        .iter()
        .map(|&m| evaluate_method(m, &md, &folds, &cfg.seeds, &eval_cfg).with_context(|| format!("method {m}")))
        .collect::<Result<_>>()?;
    let sweep = if cfg.fractions.is_empty() {
        Vec::new()
    } else {
        sparsity_sweep(&md, &cfg.fractions, &folds, &cfg.seeds, &eval_cfg).context("sparsity sweep")?
    };

    create_out(&cli.out)?;
    write_outputs(&cli.out, &reports, &sweep)?;
    let records = json!({ "reports": reports, "sparsity": sweep });
    write_file(&cli.out.join(RECORDS_FILE), &(serde_json::to_string(&records)? + "\n"))?;
    print_ranks(&reports)?;
    Ok(())
}

fn write_outputs(dir: &Path, reports: &[EvalReport], sweep: &[(f64, EvalReport)]) -> Result<()> {
    write_file(&dir.join(REPORT_FILE), &to_json(&report_json(reports, sweep))?)?;
    if !reports.is_empty() {
        write_file(&dir.join(SUMMARY_FILE), &summary_csv(reports)?)?;
        write_file(&dir.join(SIGNIFICANCE_FILE), &significance_csv(reports)?)?;
    }
    if !sweep.is_empty() {
        write_file(&dir.join(SWEEP_FILE), &sweep_csv(sweep))?;
    }
    Ok(())
}

fn print_ranks(reports: &[EvalReport]) -> Result<()> {
    if reports.is_empty() {
        return Ok(());
    }
    let refs: Vec<&EvalReport> = reports.iter().collect();
    let table = rank_reports(&refs)?;
    println!("{:<12} {:>12} {:>12}  normalized-AUC rank", "method", "mean regret", "ALC rank");
    for r in reports {
        println!(
            "{:<12} {:>12.6} {:>12}  unavailable",
            r.method,
            r.mean_regret(),
            table.formatted(&r.method).unwrap_or_default()
        );
    }
    Ok(())
}

fn cmd_alc(a: &AlcArgs) -> Result<()> {
    let cfg = AlcConfig::new(a.budget, a.t0)?;
    let curve = LearningCurve::load(&a.curve)?;
    println!("{:.6}", alc(&curve, &cfg)?);
    Ok(())
}

fn cmd_report(cli: &Cli, a: &ReportArgs) -> Result<()> {
    let path = a.records.clone().unwrap_or_else(|| cli.out.join(RECORDS_FILE));
    let text = fs::read_to_string(&path).with_context(|| format!("cannot read {}", path.display()))?;
    #[derive(serde::Deserialize)]
    struct Records {
        reports: Vec<EvalReport>,
        #[serde(default)]
        sparsity: Vec<(f64, EvalReport)>,
    }
    let records: Records = serde_json::from_str(&text).with_context(|| format!("malformed {}", path.display()))?;
    create_out(&cli.out)?;
    write_outputs(&cli.out, &records.reports, &records.sparsity)?;
    print_ranks(&records.reports)
}
