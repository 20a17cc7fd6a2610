//! Experiment configuration: a TOML file with `model`, `query`, `run` and
//! `output` tables, plus optional `suite`, `grid` and `bounds` tables read
//! by the commands that need them. See the README for the full grammar.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use spinekit::estimators::{Factor, ModelSpec, Statistic};
use spinekit::laws::{BranchRate, ChainKind, FiniteChain, MotionModel, OffspringLaw};
use spinekit::sim_ct::{ContinuousModel, SimOptions};
use spinekit::sim_dt::DiscreteModel;

/// A validation failure pointing at the offending field and, when it can be
/// found, the line that sets it.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub field: String,
    pub msg: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "line {line}: {}: {}", self.field, self.msg),
            None => write!(f, "{}: {}", self.field, self.msg),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimeMode {
    #[default]
    Continuous,
    Discrete,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotionBlock {
    #[serde(default = "default_preset")]
    pub preset: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
}

fn default_preset() -> String {
    "brownian".into()
}

impl Default for MotionBlock {
    fn default() -> Self {
        MotionBlock {
            preset: default_preset(),
            lambda: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub breakpoints: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
}

impl Default for RateBlock {
    fn default() -> Self {
        RateBlock {
            value: Some(1.0),
            breakpoints: Vec::new(),
            values: Vec::new(),
            max: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainBlock {
    /// `transition` for discrete time, `rate` for continuous-time motion.
    pub kind: String,
    pub matrix: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(default)]
    pub initial_state: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    #[serde(default)]
    pub time: TimeMode,
    #[serde(default)]
    pub origin: f64,
    #[serde(default = "default_offspring")]
    pub offspring: Vec<f64>,
    #[serde(default)]
    pub motion: MotionBlock,
    #[serde(default)]
    pub rate: RateBlock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chain: Option<ChainBlock>,
}

fn default_offspring() -> Vec<f64> {
    vec![0.0, 0.0, 1.0]
}

impl Default for ModelBlock {
    fn default() -> Self {
        ModelBlock {
            time: TimeMode::Continuous,
            origin: 0.0,
            offspring: default_offspring(),
            motion: MotionBlock::default(),
            rate: RateBlock::default(),
            chain: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryBlock {
    #[serde(default = "one")]
    pub k: usize,
    #[serde(default = "unit_horizon")]
    pub horizon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generations: Option<usize>,
    /// One factor per mark; omitted means `Y = 1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factors: Option<Vec<Factor>>,
    /// Sum over tuples of distinct particles only.
    #[serde(default)]
    pub distinct: bool,
}

fn one() -> usize {
    1
}

fn unit_horizon() -> f64 {
    1.0
}

impl Default for QueryBlock {
    fn default() -> Self {
        QueryBlock {
            k: 1,
            horizon: 1.0,
            generations: None,
            factors: None,
            distinct: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunBlock {
    #[serde(default = "default_replicates")]
    pub replicates: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// 0 means one worker per core. Not part of the config hash.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default = "default_population_cap")]
    pub population_cap: usize,
    #[serde(default = "default_tuple_cap")]
    pub tuple_cap: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quad_step: Option<f64>,
}

fn default_replicates() -> u64 {
    100_000
}

fn default_population_cap() -> usize {
    1_000_000
}

fn default_tuple_cap() -> f64 {
    1e7
}

impl Default for RunBlock {
    fn default() -> Self {
        RunBlock {
            replicates: default_replicates(),
            seed: None,
            workers: None,
            population_cap: default_population_cap(),
            tuple_cap: default_tuple_cap(),
            quad_step: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    /// File stem; defaults to the command name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub formats: Option<Vec<Format>>,
}

/// Options of the continuous-time verification suite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteBlock {
    #[serde(default = "default_ks")]
    pub ks: Vec<usize>,
    #[serde(default = "default_times")]
    pub times: Vec<f64>,
    #[serde(default = "default_unit_mean_replicates")]
    pub unit_mean_replicates: u64,
    #[serde(default = "default_gibbs_trees")]
    pub gibbs_trees: u64,
    #[serde(default = "default_split_samples")]
    pub split_samples: u64,
    /// Family-wise false-alarm level of the whole suite, split evenly
    /// over its statistical tests.
    #[serde(default = "default_level")]
    pub level: f64,
}

fn default_ks() -> Vec<usize> {
    vec![1, 2]
}

fn default_times() -> Vec<f64> {
    vec![0.25, 0.5, 1.0]
}

fn default_unit_mean_replicates() -> u64 {
    10_000
}

fn default_gibbs_trees() -> u64 {
    100
}

fn default_split_samples() -> u64 {
    10_000
}

fn default_level() -> f64 {
    0.01
}

impl Default for SuiteBlock {
    fn default() -> Self {
        SuiteBlock {
            ks: default_ks(),
            times: default_times(),
            unit_mean_replicates: default_unit_mean_replicates(),
            gibbs_trees: default_gibbs_trees(),
            split_samples: default_split_samples(),
            level: default_level(),
        }
    }
}

/// Filters applied to the built-in discrete grid.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ks: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generations: Option<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsBlock {
    #[serde(default = "default_xs")]
    pub xs: Vec<f64>,
    #[serde(default = "default_ts")]
    pub ts: Vec<f64>,
}

fn default_xs() -> Vec<f64> {
    vec![0.0, 1.0, 2.0]
}

fn default_ts() -> Vec<f64> {
    vec![0.5, 1.0]
}

impl Default for BoundsBlock {
    fn default() -> Self {
        BoundsBlock {
            xs: default_xs(),
            ts: default_ts(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub model: ModelBlock,
    #[serde(default)]
    pub query: QueryBlock,
    #[serde(default)]
    pub run: RunBlock,
    #[serde(default)]
    pub output: OutputBlock,
    #[serde(default)]
    pub suite: SuiteBlock,
    #[serde(default)]
    pub grid: GridBlock,
    #[serde(default)]
    pub bounds: BoundsBlock,
}

/// Configuration text plus its parsed form, kept together so validation
/// errors can point at source lines.
#[derive(Clone, Debug)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    source: Option<String>,
}

fn line_of_offset(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].matches('\n').count() + 1
}

/// Line on which `table.key` is assigned, by a scan of table headers and
/// `key =` lines. Also finds inline forms such as `rate = { value = 1 }`
/// under the parent table.
fn locate(src: &str, field: &str) -> Option<usize> {
    let (table, key) = field.rsplit_once('.').unwrap_or(("", field));
    let mut current = String::new();
    let mut parent_hit = None;
    let (parent, leaf_table) = table.rsplit_once('.').unwrap_or(("", table));
    for (i, raw) in src.lines().enumerate() {
        let line = raw.trim();
        if let Some(header) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = header.trim().to_string();
            continue;
        }
        let Some((lhs, _)) = line.split_once('=') else { continue };
        let lhs = lhs.trim();
        if current == table && lhs == key {
            return Some(i + 1);
        }
        if current == parent && lhs == leaf_table && parent_hit.is_none() {
            parent_hit = Some(i + 1);
        }
    }
    parent_hit.or_else(|| {
        // Fall back to the table header.
        src.lines()
            .position(|l| l.trim() == format!("[{table}]"))
            .map(|i| i + 1)
    })
}

impl LoadedConfig {
    pub fn from_str(src: &str) -> Result<Self, ConfigError> {
        let config: ExperimentConfig = toml::from_str(src).map_err(|e| ConfigError {
            line: e.span().map(|s| line_of_offset(src, s.start)),
            field: "config".into(),
            msg: e.message().trim().to_string(),
        })?;
        let loaded = LoadedConfig {
            config,
            source: Some(src.to_string()),
        };
        loaded.validate()?;
        Ok(loaded)
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let src = std::fs::read_to_string(path).map_err(|e| ConfigError {
            line: None,
            field: path.display().to_string(),
            msg: e.to_string(),
        })?;
        Self::from_str(&src)
    }

    /// Built-in defaults, used when no config file is given.
    pub fn defaults() -> Self {
        LoadedConfig {
            config: ExperimentConfig::default(),
            source: None,
        }
    }

    pub fn error(&self, field: &str, msg: impl Into<String>) -> ConfigError {
        ConfigError {
            line: self.source.as_deref().and_then(|s| locate(s, field)),
            field: field.into(),
            msg: msg.into(),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let c = &self.config;
        self.offspring_law()?;
        if c.query.k == 0 {
            return Err(self.error("query.k", "k must be at least 1"));
        }
        if !(c.query.horizon > 0.0 && c.query.horizon.is_finite()) {
            return Err(self.error("query.horizon", format!("horizon must be positive and finite, got {}", c.query.horizon)));
        }
        if let Some(f) = &c.query.factors {
            if f.len() != c.query.k {
                return Err(self.error("query.factors", format!("{} factors given for k = {}", f.len(), c.query.k)));
            }
        }
        if c.run.replicates == 0 {
            return Err(self.error("run.replicates", "need at least one replicate"));
        }
        if c.suite.ks.contains(&0) {
            return Err(self.error("suite.ks", "k must be at least 1"));
        }
        if let Some(t) = c.suite.times.iter().find(|t| !(**t >= 0.0 && t.is_finite())) {
            return Err(self.error("suite.times", format!("time {t} must be finite and nonnegative")));
        }
        if !(c.suite.level > 0.0 && c.suite.level < 1.0) {
            return Err(self.error("suite.level", "level must lie in (0, 1)"));
        }
        if let Some(x) = c.bounds.xs.iter().find(|x| !x.is_finite()) {
            return Err(self.error("bounds.xs", format!("{x} is not finite")));
        }
        if let Some(t) = c.bounds.ts.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
            return Err(self.error("bounds.ts", format!("time {t} must be positive and finite")));
        }
        match c.model.time {
            TimeMode::Continuous => {
                self.continuous_model()?;
            }
            TimeMode::Discrete => {
                self.discrete_model()?;
            }
        }
        Ok(())
    }

    pub fn offspring_law(&self) -> Result<OffspringLaw, ConfigError> {
        OffspringLaw::new(self.config.model.offspring.clone()).map_err(|e| self.error("model.offspring", e.to_string()))
    }

    fn chain(&self, kind: ChainKind) -> Result<FiniteChain, ConfigError> {
        let Some(b) = &self.config.model.chain else {
            return Err(self.error("model.chain", "a [model.chain] table is required"));
        };
        let declared = match b.kind.as_str() {
            "transition" => ChainKind::Transition,
            "rate" => ChainKind::Rate,
            other => {
                return Err(self.error("model.chain.kind", format!("unknown chain kind `{other}`; use `transition` or `rate`")))
            }
        };
        if declared != kind {
            let want = if kind == ChainKind::Rate { "rate" } else { "transition" };
            return Err(self.error("model.chain.kind", format!("this time mode needs a `{want}` matrix")));
        }
        FiniteChain::new(kind, b.matrix.clone(), b.theta).map_err(|e| self.error("model.chain.matrix", e.to_string()))
    }

    pub fn motion(&self) -> Result<MotionModel, ConfigError> {
        let m = &self.config.model.motion;
        let lambda_unused = || self.error("model.motion.lambda", format!("preset `{}` takes no lambda", m.preset));
        match m.preset.as_str() {
            "brownian" => m.lambda.map_or(Ok(MotionModel::Brownian), |_| Err(lambda_unused())),
            "brownian-tilt" => match m.lambda {
                Some(lambda) if lambda.is_finite() => Ok(MotionModel::BrownianTilt { lambda }),
                _ => Err(self.error("model.motion.lambda", "preset `brownian-tilt` needs a finite lambda")),
            },
            "absorbed-brownian" => m.lambda.map_or(Ok(MotionModel::AbsorbedBrownian), |_| Err(lambda_unused())),
            "chain" => {
                if m.lambda.is_some() {
                    return Err(lambda_unused());
                }
                MotionModel::chain(self.chain(ChainKind::Rate)?).map_err(|e| self.error("model.chain", e.to_string()))
            }
            other => Err(self.error(
                "model.motion.preset",
                format!("unknown preset `{other}`; use brownian, brownian-tilt, absorbed-brownian or chain"),
            )),
        }
    }

    fn rate(&self) -> Result<BranchRate, ConfigError> {
        let r = &self.config.model.rate;
        let res = match (r.value, r.values.is_empty()) {
            (Some(v), true) if r.breakpoints.is_empty() => match r.max {
                Some(m) if m < v => return Err(self.error("model.rate.max", format!("max {m} is below the rate {v}"))),
                _ => BranchRate::constant(v),
            },
            (None, false) => {
                let Some(max) = r.max else {
                    return Err(self.error("model.rate.max", "a piecewise rate needs its maximum `max`"));
                };
                BranchRate::piecewise(r.breakpoints.clone(), r.values.clone(), max)
            }
            _ => return Err(self.error("model.rate", "give either `value` or `breakpoints` with `values`")),
        };
        res.map_err(|e| self.error("model.rate", e.to_string()))
    }

    pub fn continuous_model(&self) -> Result<ContinuousModel, ConfigError> {
        let model = ContinuousModel {
            motion: self.motion()?,
            rate: self.rate()?,
            law: self.offspring_law()?,
            origin: self.config.model.origin,
        };
        model
            .motion
            .initial_state(model.origin)
            .map_err(|e| self.error("model.origin", e.to_string()))?;
        Ok(model)
    }

    pub fn discrete_model(&self) -> Result<DiscreteModel, ConfigError> {
        let Some(n) = self.config.query.generations else {
            return Err(self.error("query.generations", "discrete time needs `generations`"));
        };
        let chain = self.chain(ChainKind::Transition)?;
        let start = self.config.model.chain.as_ref().map_or(0, |c| c.initial_state);
        DiscreteModel::new(chain, self.offspring_law()?, n, self.config.query.k, start)
            .map_err(|e| self.error("query", e.to_string()))
    }

    pub fn model_spec(&self) -> Result<ModelSpec, ConfigError> {
        Ok(match self.config.model.time {
            TimeMode::Continuous => ModelSpec::Continuous {
                model: self.continuous_model()?,
                horizon: self.config.query.horizon,
            },
            TimeMode::Discrete => ModelSpec::Discrete {
                model: self.discrete_model()?,
            },
        })
    }

    pub fn statistic(&self) -> Statistic {
        let q = &self.config.query;
        Statistic::Factored {
            factors: q.factors.clone().unwrap_or_else(|| vec![Factor::One; q.k]),
            distinct: q.distinct,
        }
    }

    pub fn sim_options(&self) -> SimOptions {
        SimOptions {
            population_cap: self.config.run.population_cap,
            quad_step: self.config.run.quad_step,
            ..SimOptions::default()
        }
    }

    /// SHA-256 of the canonical JSON form of the configuration, leaving out
    /// the worker count and output block, which cannot change results.
    pub fn hash(&self) -> String {
        let mut c = self.config.clone();
        c.run.workers = None;
        c.output = OutputBlock::default();
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}
