//! Sweeps over `alpha`, sampling methods and repetitions, scored against a
//! held-out reference set.
//!
//! Seeds: repetition `r` splits (or generates) its data with
//! `derive_seed(seed, [0, r])`; the method run at alpha index `a` and method
//! index `m` uses `derive_seed(seed, [1, r, a, m])`. Rows are sorted by
//! `(alpha, method, repetition)` before output, so the report bytes depend
//! only on the config.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{load_dataset, split_holdout, Dataset, Schema};
use crate::detect::{run_detector_battery, Battery, DetectorVerdict};
use crate::error::{Error, Result};
use crate::fairness::{demographic_parity_of, target_bin_counts};
use crate::seed::derive_seed;
use crate::stealth::{
    bootstrap_stealth_measure, case_control_sample, draw_sample, random_sample, sample_objective,
    stealth_measure, SampleDraw,
};
use crate::synthetic::{generate, DecisionMode, GeneratorConfig};
use crate::transport::{empirical_wd, CostKind, GroundCost};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Stealth,
    CaseControl,
    BaselineRandom,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Stealth => "stealth",
            Method::CaseControl => "case_control",
            Method::BaselineRandom => "baseline_random",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stealth" => Ok(Method::Stealth),
            "case_control" => Ok(Method::CaseControl),
            "baseline_random" | "baseline" => Ok(Method::BaselineRandom),
            other => Err(Error::Config(format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    #[default]
    Synthetic,
    Csv,
}

/// Flat key-value experiment description, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub source: DataSource,
    /// CSV input (source = "csv"), relative to the config file's directory.
    pub csv_path: Option<PathBuf>,
    pub sensitive_column: String,
    pub decision_column: String,
    /// Feature columns; all remaining columns when absent.
    pub feature_columns: Option<Vec<String>>,

    /// Synthetic population size `N` (the reference set is generated on top).
    pub n: usize,
    pub d: usize,
    pub b: f64,
    pub mode: DecisionMode,
    /// `Pr(s = 1)` for generation and the target counts. When absent,
    /// synthetic data uses 0.5 and CSV data its empirical group frequencies.
    pub group_probability: Option<f64>,

    /// Size of the reference set `D'` held out from the data.
    pub holdout: usize,
    pub k: u64,
    pub alphas: Vec<f64>,
    pub methods: Vec<Method>,
    pub repetitions: usize,
    pub significance: f64,
    /// Feature tested by the KS battery.
    pub key_feature: usize,

    pub cost: CostKind,
    /// Feature indices entering the ground cost; all when absent.
    pub cost_features: Option<Vec<usize>>,
    pub include_sensitive: bool,
    /// Compute the Wasserstein columns (marginal and per group).
    pub compute_wd: bool,

    /// Solve the stealth measure by the bootstrap estimator on subsets of
    /// this size instead of exactly.
    pub bootstrap_subset: Option<usize>,
    pub bootstrap_rounds: usize,

    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            source: DataSource::Synthetic,
            csv_path: None,
            sensitive_column: "s".into(),
            decision_column: "y".into(),
            feature_columns: None,
            n: 1000,
            d: 1,
            b: 0.2,
            mode: DecisionMode::Deterministic,
            group_probability: None,
            holdout: 200,
            k: 200,
            alphas: vec![0.4, 0.5, 0.6, 0.7, 0.8],
            methods: vec![Method::Stealth, Method::CaseControl, Method::BaselineRandom],
            repetitions: 100,
            significance: 0.05,
            key_feature: 0,
            cost: CostKind::SquaredEuclidean,
            cost_features: None,
            include_sensitive: false,
            compute_wd: true,
            bootstrap_subset: None,
            bootstrap_rounds: 30,
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; a relative `csv_path` is resolved against the
    /// file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let (Some(csv), Some(dir)) = (&cfg.csv_path, path.parent()) {
            if csv.is_relative() {
                cfg.csv_path = Some(dir.join(csv));
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.repetitions == 0 {
            return fail("repetitions must be at least 1".into());
        }
        if self.alphas.is_empty() || self.alphas.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return fail("alphas must be a nonempty list of values in [0, 1]".into());
        }
        if self.methods.is_empty() {
            return fail("methods must not be empty".into());
        }
        if !(self.significance > 0.0 && self.significance < 1.0) {
            return fail(format!("significance {} outside (0, 1)", self.significance));
        }
        if self.k == 0 || self.holdout == 0 {
            return fail("k and holdout must be at least 1".into());
        }
        if let Some(p) = self.group_probability {
            if !(0.0..=1.0).contains(&p) {
                return fail(format!("group_probability {p} outside [0, 1]"));
            }
        }
        if self.bootstrap_subset == Some(0) || self.bootstrap_rounds == 0 {
            return fail("bootstrap subset and rounds must be at least 1".into());
        }
        match self.source {
            DataSource::Csv if self.csv_path.is_none() => fail("source = \"csv\" needs csv_path".into()),
            DataSource::Synthetic => self.generator(0).validate().map_err(|e| Error::Config(e.to_string())),
            DataSource::Csv => Ok(()),
        }
    }

    pub fn ground_cost(&self) -> GroundCost {
        GroundCost {
            kind: self.cost,
            feature_mask: self.cost_features.clone(),
            include_sensitive: self.include_sensitive,
        }
    }

    fn generator(&self, seed: u64) -> GeneratorConfig {
        GeneratorConfig {
            n: self.n + self.holdout,
            d: self.d,
            b: self.b,
            mode: self.mode,
            group_probability: self.group_probability.unwrap_or(0.5),
            seed,
        }
    }

    fn schema(&self) -> Schema {
        Schema {
            features: self.feature_columns.clone(),
            sensitive: self.sensitive_column.clone(),
            decision: self.decision_column.clone(),
        }
    }
}

/// One (alpha, method, repetition) outcome. Metrics that are undefined for
/// the row (infeasible spec, empty group) are `None` and serialize as empty
/// CSV cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub alpha: f64,
    pub method: Method,
    pub repetition: usize,
    /// `ok`, or `infeasible` when the bin counts cannot be met.
    pub status: String,
    pub dp: Option<f64>,
    pub ks_marginal_stat: Option<f64>,
    pub ks_marginal_pvalue: Option<f64>,
    pub ks_marginal_rejected: Option<bool>,
    pub ks_s1_stat: Option<f64>,
    pub ks_s1_pvalue: Option<f64>,
    pub ks_s1_rejected: Option<bool>,
    pub ks_s0_stat: Option<f64>,
    pub ks_s0_pvalue: Option<f64>,
    pub ks_s0_rejected: Option<bool>,
    pub wd_marginal: Option<f64>,
    pub wd_s1: Option<f64>,
    pub wd_s0: Option<f64>,
    /// Stealth: `W(mu, nu)` of the solved measure. Other methods: transport
    /// cost from the drawn subset to `nu`. Both at mass `|Z|`.
    pub objective: Option<f64>,
}

pub const STATUS_OK: &str = "ok";
pub const STATUS_INFEASIBLE: &str = "infeasible";

impl ReportRow {
    fn empty(alpha: f64, method: Method, repetition: usize, status: &str) -> Self {
        ReportRow {
            alpha,
            method,
            repetition,
            status: status.into(),
            dp: None,
            ks_marginal_stat: None,
            ks_marginal_pvalue: None,
            ks_marginal_rejected: None,
            ks_s1_stat: None,
            ks_s1_pvalue: None,
            ks_s1_rejected: None,
            ks_s0_stat: None,
            ks_s0_pvalue: None,
            ks_s0_rejected: None,
            wd_marginal: None,
            wd_s1: None,
            wd_s0: None,
            objective: None,
        }
    }

    pub fn is_infeasible(&self) -> bool {
        self.status == STATUS_INFEASIBLE
    }

    /// The three KS verdicts (marginal, s=1, s=0) as `(stat, pvalue, rejected)`.
    pub fn ks(&self) -> [Option<(f64, f64, bool)>; 3] {
        let zip = |a: Option<f64>, b: Option<f64>, c: Option<bool>| Some((a?, b?, c?));
        [
            zip(self.ks_marginal_stat, self.ks_marginal_pvalue, self.ks_marginal_rejected),
            zip(self.ks_s1_stat, self.ks_s1_pvalue, self.ks_s1_rejected),
            zip(self.ks_s0_stat, self.ks_s0_pvalue, self.ks_s0_rejected),
        ]
    }

    fn set_battery(&mut self, b: &Battery) {
        let split = |v: Option<DetectorVerdict>| {
            (v.map(|v| v.statistic), v.map(|v| v.threshold_or_pvalue), v.map(|v| v.rejected))
        };
        (self.ks_marginal_stat, self.ks_marginal_pvalue, self.ks_marginal_rejected) = split(b.marginal);
        (self.ks_s1_stat, self.ks_s1_pvalue, self.ks_s1_rejected) = split(b.s1);
        (self.ks_s0_stat, self.ks_s0_pvalue, self.ks_s0_rejected) = split(b.s0);
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentReport {
    pub rows: Vec<ReportRow>,
}

impl ExperimentReport {
    pub fn infeasible_rows(&self) -> usize {
        self.rows.iter().filter(|r| r.is_infeasible()).count()
    }

    fn sort(&mut self) {
        self.rows.sort_by(|a, b| {
            a.alpha
                .total_cmp(&b.alpha)
                .then(a.method.name().cmp(b.method.name()))
                .then(a.repetition.cmp(&b.repetition))
        });
    }
}

pub fn write_report<W: Write>(writer: W, report: &ExperimentReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in &report.rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_report<R: Read>(reader: R) -> Result<ExperimentReport> {
    let mut rdr = csv::Reader::from_reader(reader);
    let rows = rdr.deserialize().collect::<std::result::Result<Vec<ReportRow>, _>>()?;
    Ok(ExperimentReport { rows })
}

struct Split {
    population: Dataset,
    reference: Dataset,
    group_probability: Vec<f64>,
}

fn prepare(cfg: &ExperimentConfig, csv: Option<&Dataset>, repetition: usize) -> Result<Split> {
    let seed = derive_seed(cfg.seed, &[0, repetition as u64]);
    let data = match csv {
        Some(d) => d.clone(),
        None => generate(&cfg.generator(seed))?,
    };
    let (population, reference) = split_holdout(&data, cfg.holdout, seed)?;
    let given = match cfg.source {
        DataSource::Synthetic => Some(cfg.group_probability.unwrap_or(0.5)),
        DataSource::Csv => cfg.group_probability,
    };
    let group_probability = match (given, population.num_sensitive_classes()) {
        (Some(p), 2) => vec![1.0 - p, p],
        _ => {
            let n = population.len() as f64;
            let mut counts = vec![0.0; population.num_sensitive_classes()];
            for r in population.records() {
                counts[r.sensitive] += 1.0;
            }
            counts.into_iter().map(|c| c / n).collect()
        }
    };
    Ok(Split {
        population,
        reference,
        group_probability,
    })
}

fn group(data: &Dataset, s: usize) -> Result<Option<Dataset>> {
    let idx: Vec<usize> = (0..data.len()).filter(|&i| data.record(i).sensitive == s).collect();
    if idx.is_empty() {
        Ok(None)
    } else {
        data.subset(&idx).map(Some)
    }
}

fn score(
    cfg: &ExperimentConfig,
    split: &Split,
    draw: &SampleDraw,
    row: &mut ReportRow,
    cost: &GroundCost,
) -> Result<()> {
    let z = draw.subset(&split.population)?;
    row.dp = match demographic_parity_of(&split.population, &draw.indices) {
        Ok(v) => Some(v),
        Err(Error::UndefinedMetric(_)) => None,
        Err(e) => return Err(e),
    };
    let battery = run_detector_battery(&z, &split.reference, cfg.key_feature, cfg.significance)?;
    row.set_battery(&battery);
    if cfg.compute_wd {
        row.wd_marginal = Some(empirical_wd(&z, &split.reference, cost)?);
        for (s, slot) in [(1, &mut row.wd_s1), (0, &mut row.wd_s0)] {
            *slot = match (group(&z, s)?, group(&split.reference, s)?) {
                (Some(a), Some(b)) => Some(empirical_wd(&a, &b, cost)?),
                _ => None,
            };
        }
    }
    Ok(())
}

fn run_repetition(cfg: &ExperimentConfig, csv: Option<&Dataset>, repetition: usize) -> Result<Vec<ReportRow>> {
    let split = prepare(cfg, csv, repetition)?;
    let cost = cfg.ground_cost();
    let data = &split.population;
    let mut rows = Vec::new();
    for (a, &alpha) in cfg.alphas.iter().enumerate() {
        let spec = target_bin_counts(cfg.k, alpha, &split.group_probability)?;
        let feasible = spec.check_feasible(data).is_ok();
        for (m, &method) in cfg.methods.iter().enumerate() {
            let seed = derive_seed(cfg.seed, &[1, repetition as u64, a as u64, m as u64]);
            if !feasible && method != Method::BaselineRandom {
                log::info!("alpha {alpha} repetition {repetition}: {} infeasible", method.name());
                rows.push(ReportRow::empty(alpha, method, repetition, STATUS_INFEASIBLE));
                continue;
            }
            let mut row = ReportRow::empty(alpha, method, repetition, STATUS_OK);
            let draw = match method {
                Method::Stealth => {
                    let plan = match cfg.bootstrap_subset {
                        Some(sub) => bootstrap_stealth_measure(data, &spec, &cost, sub.min(data.len()), cfg.bootstrap_rounds, seed)?,
                        None => stealth_measure(data, &spec, &cost)?,
                    };
                    row.objective = Some(plan.objective);
                    draw_sample(data, &plan, derive_seed(seed, &[0]))?
                }
                Method::CaseControl => {
                    let draw = case_control_sample(data, &spec, seed)?;
                    row.objective = Some(sample_objective(data, &draw.indices, &cost)?);
                    draw
                }
                Method::BaselineRandom => {
                    let draw = random_sample(data, cfg.k as usize, seed)?;
                    row.objective = Some(sample_objective(data, &draw.indices, &cost)?);
                    draw
                }
            };
            score(cfg, &split, &draw, &mut row, &cost)?;
            rows.push(row);
        }
    }
    Ok(rows)
}

/// Runs the full sweep. Repetitions run in parallel; the output order is
/// canonical regardless.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let csv = match config.source {
        DataSource::Csv => {
            let path = config.csv_path.as_ref().expect("validated");
            Some(load_dataset(path, &config.schema())?)
        }
        DataSource::Synthetic => None,
    };
    let per_rep: Vec<Vec<ReportRow>> = (0..config.repetitions)
        .into_par_iter()
        .map(|r| run_repetition(config, csv.as_ref(), r))
        .collect::<Result<_>>()?;
    let mut report = ExperimentReport {
        rows: per_rep.into_iter().flatten().collect(),
    };
    report.sort();
    let infeasible = report.infeasible_rows();
    if infeasible > 0 {
        log::warn!("{infeasible} of {} rows infeasible", report.rows.len());
    }
    Ok(report)
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

fn mean_std(values: &[f64]) -> Option<MeanStd> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Some(MeanStd { mean, std: var.sqrt() })
}

/// Wilson score interval at 95% for `hits` out of `n`.
pub fn wilson_interval(hits: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    const Z: f64 = 1.959_963_984_540_054;
    let nf = n as f64;
    let p = hits as f64 / nf;
    let denom = 1.0 + Z * Z / nf;
    let centre = (p + Z * Z / (2.0 * nf)) / denom;
    let half = Z * (p * (1.0 - p) / nf + Z * Z / (4.0 * nf * nf)).sqrt() / denom;
    let low = if hits == 0 { 0.0 } else { (centre - half).max(0.0) };
    let high = if hits == n { 1.0 } else { (centre + half).min(1.0) };
    (low, high)
}

/// Rejection rate of one test with its Wilson interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rate {
    pub rate: f64,
    pub trials: usize,
    pub low: f64,
    pub high: f64,
}

impl Rate {
    fn of(flags: &[bool]) -> Option<Rate> {
        if flags.is_empty() {
            return None;
        }
        let hits = flags.iter().filter(|&&f| f).count();
        let (low, high) = wilson_interval(hits, flags.len());
        Some(Rate {
            rate: hits as f64 / flags.len() as f64,
            trials: flags.len(),
            low,
            high,
        })
    }

    /// Half the width of the interval.
    pub fn half_width(&self) -> f64 {
        (self.high - self.low) / 2.0
    }
}

/// Aggregates of one (alpha, method) group, over its feasible rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub alpha: f64,
    pub method: Method,
    pub rows: usize,
    pub infeasible: usize,
    pub dp: Option<MeanStd>,
    pub wd_marginal: Option<MeanStd>,
    pub wd_s1: Option<MeanStd>,
    pub wd_s0: Option<MeanStd>,
    pub objective: Option<MeanStd>,
    /// Marginal, s=1, s=0.
    pub rejection: [Option<Rate>; 3],
}

pub fn summarize(report: &ExperimentReport) -> Result<Vec<SummaryRow>> {
    if report.rows.is_empty() {
        return Err(crate::error::invalid("cannot summarize an empty report"));
    }
    let mut sorted = report.clone();
    sorted.sort();
    let mut out = Vec::new();
    for chunk in sorted
        .rows
        .chunk_by(|a, b| a.alpha.total_cmp(&b.alpha).is_eq() && a.method == b.method)
    {
        let ok: Vec<&ReportRow> = chunk.iter().filter(|r| !r.is_infeasible()).collect();
        let col = |f: fn(&ReportRow) -> Option<f64>| mean_std(&ok.iter().filter_map(|r| f(r)).collect::<Vec<_>>());
        let rate = |t: usize| Rate::of(&ok.iter().filter_map(|r| r.ks()[t].map(|v| v.2)).collect::<Vec<_>>());
        out.push(SummaryRow {
            alpha: chunk[0].alpha,
            method: chunk[0].method,
            rows: chunk.len(),
            infeasible: chunk.len() - ok.len(),
            dp: col(|r| r.dp),
            wd_marginal: col(|r| r.wd_marginal),
            wd_s1: col(|r| r.wd_s1),
            wd_s0: col(|r| r.wd_s0),
            objective: col(|r| r.objective),
            rejection: [rate(0), rate(1), rate(2)],
        });
    }
    Ok(out)
}

pub const SUMMARY_COLUMNS: &[&str] = &[
    "alpha", "method", "rows", "infeasible", "dp_mean", "dp_std", "wd_marginal_mean", "wd_marginal_std",
    "wd_s1_mean", "wd_s1_std", "wd_s0_mean", "wd_s0_std", "objective_mean", "objective_std",
    "ks_marginal_rate", "ks_marginal_low", "ks_marginal_high", "ks_s1_rate", "ks_s1_low", "ks_s1_high",
    "ks_s0_rate", "ks_s0_low", "ks_s0_high",
];

pub fn write_summary<W: Write>(writer: W, summary: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(SUMMARY_COLUMNS)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for s in summary {
        let mut rec = vec![
            s.alpha.to_string(),
            s.method.name().to_string(),
            s.rows.to_string(),
            s.infeasible.to_string(),
        ];
        for m in [s.dp, s.wd_marginal, s.wd_s1, s.wd_s0, s.objective] {
            rec.push(opt(m.map(|m| m.mean)));
            rec.push(opt(m.map(|m| m.std)));
        }
        for r in s.rejection {
            rec.push(opt(r.map(|r| r.rate)));
            rec.push(opt(r.map(|r| r.low)));
            rec.push(opt(r.map(|r| r.high)));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
