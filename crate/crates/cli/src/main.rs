use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use stealth_core::data::{load_dataset, write_dataset_to};
use stealth_core::detect::{run_detector_battery, theorem1_bound};
use stealth_core::experiment::{
    run_experiment, summarize, write_report, write_summary, DataSource, ExperimentConfig, Method,
};
use stealth_core::fairness::{demographic_parity_of, target_bin_counts};
use stealth_core::stealth::{
    bootstrap_stealth_measure, case_control_sample, draw_sample, quantitative_stealth_measure_with, random_sample,
    sample_objective, stealth_measure, write_draw_csv, write_plan_csv, QuantitativeOptions, StealthPlan,
};
use stealth_core::synthetic::{generate, DecisionMode, GeneratorConfig};
use stealth_core::transport::empirical_wd;
use stealth_core::{CostKind, Error, Schema};

/// Stealthily biased sampling: attack, audit and experiment driver.
#[derive(Parser, Debug)]
#[command(name = "stealth", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic loan-decision dataset as CSV.
    Generate(GenerateArgs),
    /// Draw one disclosed subset with one method.
    Sample(SampleArgs),
    /// Run the KS battery (and optionally WDs) between two CSV datasets.
    Audit(AuditArgs),
    /// Run a full alpha / method / repetition sweep from a config file.
    Experiment(ExperimentArgs),
    /// Evaluate the KS advantage bound.
    Bound(BoundArgs),
}

#[derive(Args, Debug)]
struct SchemaArgs {
    #[arg(long, default_value = "s")]
    sensitive_column: String,
    #[arg(long, default_value = "y")]
    decision_column: String,
    /// Comma-separated feature columns (default: all other columns).
    #[arg(long, value_delimiter = ',')]
    feature_columns: Option<Vec<String>>,
}

impl SchemaArgs {
    fn schema(&self) -> Schema {
        Schema {
            features: self.feature_columns.clone(),
            sensitive: self.sensitive_column.clone(),
            decision: self.decision_column.clone(),
        }
    }
}

#[derive(Args, Debug)]
struct GenerateArgs {
    /// Experiment config whose synthetic keys (n, d, b, mode,
    /// group_probability, seed) are used as defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    b: Option<f64>,
    #[arg(long)]
    mode: Option<DecisionMode>,
    #[arg(long)]
    group_probability: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
#[value(rename_all = "snake_case")]
enum SampleMethod {
    Stealth,
    CaseControl,
    #[value(alias = "baseline")]
    BaselineRandom,
    /// Band on the mean of a real-valued sensitive feature per decision.
    Quantitative,
}

#[derive(Args, Debug)]
struct SampleArgs {
    /// Input dataset CSV.
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    schema: SchemaArgs,
    #[arg(long, value_enum, default_value_t = SampleMethod::Stealth)]
    method: SampleMethod,
    #[arg(long, default_value_t = 0.6)]
    alpha: f64,
    #[arg(long, default_value_t = 200)]
    k: u64,
    /// Pr(s = 1) for the target counts (default: empirical group frequencies).
    #[arg(long)]
    group_probability: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "squared_euclidean")]
    cost: CostKind,
    /// Comma-separated feature indices entering the ground cost.
    #[arg(long, value_delimiter = ',')]
    cost_features: Option<Vec<usize>>,
    #[arg(long)]
    include_sensitive: bool,
    /// Use the bootstrap estimator with subsets of this size.
    #[arg(long)]
    bootstrap_subset: Option<usize>,
    #[arg(long, default_value_t = 30)]
    bootstrap_rounds: usize,
    /// Quantitative method: index of the real-valued sensitive feature.
    #[arg(long, default_value_t = 0)]
    sensitive_feature: usize,
    /// Quantitative method: target conditional mean.
    #[arg(long, default_value_t = 0.5)]
    target_mean: f64,
    /// Quantitative method: allowed deviation of the conditional mean.
    #[arg(long, default_value_t = 0.05)]
    tolerance: f64,
    /// Quantitative method: ADMM iteration limit.
    #[arg(long, default_value_t = 500)]
    max_iterations: usize,
    /// Selected indices CSV (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Measure CSV (`index,mu`) for the stealth and quantitative methods; defaults to
    /// `<out stem>_mu.csv` next to `--out`.
    #[arg(long)]
    plan_out: Option<PathBuf>,
    /// Also write the selected records as a dataset CSV (input for `audit`).
    #[arg(long)]
    subset_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AuditArgs {
    /// Disclosed subset CSV.
    #[arg(long)]
    disclosed: PathBuf,
    /// Reference dataset CSV.
    #[arg(long)]
    reference: PathBuf,
    #[command(flatten)]
    schema: SchemaArgs,
    #[arg(long, default_value_t = 0)]
    key_feature: usize,
    #[arg(long, default_value_t = 0.05)]
    significance: f64,
    /// Also report Wasserstein distances (squared Euclidean on all features).
    #[arg(long)]
    wd: bool,
    /// Verdict CSV (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Restrict to one method.
    #[arg(long)]
    method: Option<Method>,
    /// Restrict to one alpha.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    k: Option<u64>,
    /// Per-row report CSV (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Aggregate CSV; defaults to `<out stem>_summary.csv` next to `--out`.
    #[arg(long)]
    summary_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BoundArgs {
    #[arg(long)]
    wasserstein: f64,
    #[arg(long)]
    k: u64,
    #[arg(long, default_value_t = 1.0)]
    s: f64,
    /// Defaults to sqrt(2 / pi).
    #[arg(long)]
    c: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    tv: f64,
}

fn output(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    path.with_file_name(format!("{stem}{suffix}"))
}

fn cmd_generate(args: GenerateArgs) -> anyhow::Result<()> {
    let base = match &args.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    let cfg = GeneratorConfig {
        n: args.n.unwrap_or(base.n),
        d: args.d.unwrap_or(base.d),
        b: args.b.unwrap_or(base.b),
        mode: args.mode.unwrap_or(base.mode),
        group_probability: args.group_probability.or(base.group_probability).unwrap_or(0.5),
        seed: args.seed.unwrap_or(base.seed),
    };
    let data = generate(&cfg)?;
    write_dataset_to(output(args.out.as_deref())?, &data)?;
    Ok(())
}

fn cmd_sample(args: SampleArgs) -> anyhow::Result<()> {
    let data = load_dataset(&args.data, &args.schema.schema())
        .with_context(|| format!("loading {}", args.data.display()))?;
    let cost = stealth_core::GroundCost {
        kind: args.cost,
        feature_mask: args.cost_features.clone(),
        include_sensitive: args.include_sensitive,
    };
    let groups = match (args.group_probability, data.num_sensitive_classes()) {
        (Some(p), 2) => vec![1.0 - p, p],
        _ => {
            let mut c = vec![0.0; data.num_sensitive_classes()];
            for r in data.records() {
                c[r.sensitive] += 1.0 / data.len() as f64;
            }
            c
        }
    };
    let save_plan = |plan: &StealthPlan| -> anyhow::Result<()> {
        let path = args
            .plan_out
            .clone()
            .or_else(|| args.out.as_deref().map(|o| sibling(o, "_mu.csv")));
        if let Some(p) = &path {
            write_plan_csv(output(Some(p))?, plan)?;
        }
        Ok(())
    };
    let (draw, objective) = match args.method {
        SampleMethod::Stealth => {
            let spec = target_bin_counts(args.k, args.alpha, &groups)?;
            let plan = match args.bootstrap_subset {
                Some(sub) => bootstrap_stealth_measure(&data, &spec, &cost, sub, args.bootstrap_rounds, args.seed)?,
                None => stealth_measure(&data, &spec, &cost)?,
            };
            save_plan(&plan)?;
            (draw_sample(&data, &plan, args.seed)?, plan.objective)
        }
        SampleMethod::Quantitative => {
            let opts = QuantitativeOptions {
                max_iterations: args.max_iterations,
                ..QuantitativeOptions::default()
            };
            let report = quantitative_stealth_measure_with(
                &data,
                args.k,
                args.sensitive_feature,
                args.target_mean,
                args.tolerance,
                &cost,
                &opts,
            )?;
            log::info!("quantitative: {} ADMM iterations", report.iterations);
            save_plan(&report.plan)?;
            (draw_sample(&data, &report.plan, args.seed)?, report.plan.objective)
        }
        SampleMethod::CaseControl => {
            let spec = target_bin_counts(args.k, args.alpha, &groups)?;
            let d = case_control_sample(&data, &spec, args.seed)?;
            let obj = sample_objective(&data, &d.indices, &cost)?;
            (d, obj)
        }
        SampleMethod::BaselineRandom => {
            let d = random_sample(&data, args.k as usize, args.seed)?;
            let obj = sample_objective(&data, &d.indices, &cost)?;
            (d, obj)
        }
    };
    write_draw_csv(output(args.out.as_deref())?, &draw)?;
    if let Some(p) = &args.subset_out {
        write_dataset_to(output(Some(p))?, &draw.subset(&data)?)?;
    }
    let dp = demographic_parity_of(&data, &draw.indices)
        .map(|v| format!("{v:.6}"))
        .unwrap_or_else(|_| "undefined".into());
    eprintln!(
        "method={:?} selected={} dp={dp} objective={objective:.6}",
        args.method,
        draw.len()
    );
    Ok(())
}

fn cmd_audit(args: AuditArgs) -> anyhow::Result<()> {
    let schema = args.schema.schema();
    let disclosed = load_dataset(&args.disclosed, &schema)
        .with_context(|| format!("loading {}", args.disclosed.display()))?;
    let reference = load_dataset(&args.reference, &schema)
        .with_context(|| format!("loading {}", args.reference.display()))?;
    let battery = run_detector_battery(&disclosed, &reference, args.key_feature, args.significance)?;
    let mut out = output(args.out.as_deref())?;
    writeln!(out, "test,statistic,pvalue,rejected")?;
    for (name, v) in ["marginal", "s1", "s0"].iter().zip(battery.verdicts()) {
        match v {
            Some(v) => writeln!(out, "{name},{},{},{}", v.statistic, v.threshold_or_pvalue, v.rejected)?,
            None => writeln!(out, "{name},,,undefined")?,
        }
    }
    if args.wd {
        let cost = stealth_core::GroundCost::new(CostKind::SquaredEuclidean);
        let wd = empirical_wd(&disclosed, &reference, &cost)?;
        writeln!(out, "wd_marginal,{wd},,")?;
    }
    out.flush()?;
    Ok(())
}

fn cmd_experiment(args: ExperimentArgs) -> anyhow::Result<()> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(m) = args.method {
        cfg.methods = vec![m];
    }
    if let Some(a) = args.alpha {
        cfg.alphas = vec![a];
    }
    if let Some(k) = args.k {
        cfg.k = k;
    }
    cfg.validate()?;
    if cfg.source == DataSource::Csv {
        log::info!("reading {}", cfg.csv_path.as_ref().expect("validated").display());
    }
    let report = run_experiment(&cfg)?;
    let mut out = output(args.out.as_deref())?;
    write_report(&mut out, &report)?;
    out.flush()?;
    let summary = summarize(&report)?;
    let summary_path = args
        .summary_out
        .clone()
        .or_else(|| args.out.as_deref().map(|o| sibling(o, "_summary.csv")));
    match summary_path {
        Some(p) => write_summary(output(Some(&p))?, &summary)?,
        None => write_summary(io::stderr().lock(), &summary)?,
    }
    let infeasible = report.infeasible_rows();
    if infeasible > 0 {
        eprintln!("{infeasible} of {} rows infeasible", report.rows.len());
    }
    Ok(())
}

fn cmd_bound(args: BoundArgs) -> anyhow::Result<()> {
    let c = args.c.unwrap_or((2.0 / std::f64::consts::PI).sqrt());
    let value = theorem1_bound(args.wasserstein, args.k, args.s, c, args.tv)?;
    println!("{value:e}");
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    err.chain()
        .find_map(|e| e.downcast_ref::<Error>())
        .map_or(2, |e| e.exit_code() as u8)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Sample(a) => cmd_sample(a),
        Command::Audit(a) => cmd_audit(a),
        Command::Experiment(a) => cmd_experiment(a),
        Command::Bound(a) => cmd_bound(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
