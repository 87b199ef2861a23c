//! Synthetic loan-check decision maker.
//!
//! Features are i.i.d. uniform on `[0, 1]^d`, the sensitive bit is
//! Bernoulli(`group_probability`), and only `x1` and `s` drive the decision:
//! deterministically `y = 1[x1 + b s > 0.5]`, or stochastically
//! `y ~ Bernoulli(x1 + b s)` with the probability clamped to `[0, 1]`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Record};
use crate::error::{invalid, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionMode {
    #[default]
    Deterministic,
    Stochastic,
}

impl std::str::FromStr for DecisionMode {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "deterministic" => Ok(DecisionMode::Deterministic),
            "stochastic" => Ok(DecisionMode::Stochastic),
            other => Err(invalid(format!("unknown decision mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub n: usize,
    pub d: usize,
    pub b: f64,
    pub mode: DecisionMode,
    pub group_probability: f64,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            n: 1000,
            d: 1,
            b: 0.2,
            mode: DecisionMode::Deterministic,
            group_probability: 0.5,
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d == 0 {
            return Err(invalid("generator needs n >= 1 and d >= 1"));
        }
        if !self.b.is_finite() {
            return Err(invalid("bias b must be finite"));
        }
        if self.mode == DecisionMode::Stochastic && !(0.0..=1.0).contains(&self.b) {
            return Err(invalid(format!("stochastic mode needs b in [0, 1], got {}", self.b)));
        }
        if !(0.0..=1.0).contains(&self.group_probability) {
            return Err(invalid("group probability must be in [0, 1]"));
        }
        Ok(())
    }
}

/// A generated dataset and the number of stochastic decision probabilities
/// that had to be clamped into `[0, 1]`.
#[derive(Debug, Clone)]
pub struct Generated {
    pub data: Dataset,
    pub clamped: usize,
}

pub fn generate(config: &GeneratorConfig) -> Result<Dataset> {
    Ok(generate_counted(config)?.data)
}

pub fn generate_counted(config: &GeneratorConfig) -> Result<Generated> {
    config.validate()?;
    let mut rng = seed::rng(config.seed);
    let mut clamped = 0;
    let mut records = Vec::with_capacity(config.n);
    for _ in 0..config.n {
        let features: Vec<f64> = (0..config.d).map(|_| rng.random::<f64>()).collect();
        let s = usize::from(rng.random::<f64>() < config.group_probability);
        let score = features[0] + config.b * s as f64;
        let y = match config.mode {
            DecisionMode::Deterministic => score > 0.5,
            DecisionMode::Stochastic => {
                if !(0.0..=1.0).contains(&score) {
                    clamped += 1;
                }
                rng.random::<f64>() < score.clamp(0.0, 1.0)
            }
        };
        records.push(Record::new(features, s, u8::from(y)));
    }
    if clamped > 0 {
        log::warn!("clamped {clamped} decision probabilities into [0, 1]");
    }
    Ok(Generated {
        data: Dataset::new(records, 2)?,
        clamped,
    })
}
