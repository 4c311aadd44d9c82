//! Run configuration: a TOML file with one section per module. Every
//! field has a default, so an empty file is a complete configuration.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::EvalOptions;
use crate::exec::Execution;
use crate::features::FeatureMask;
use crate::neural::NetConfig;
use crate::rankers::{BlendParams, Bm25Params, MrfParams, RankerKind, ScoringParams};
use crate::selector::{default_net_shape, DEFAULT_THRESHOLD};

/// Overrides `paths.report_dir` when set.
pub const REPORT_DIR_ENV: &str = "PROXSEL_REPORT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Rankers the pipeline evaluates, in report order.
    pub rankers: Vec<RankerKind>,
    /// Score queries on the rayon pool where the stage allows it.
    pub parallel: bool,
    pub use_stemming: bool,
    pub bm25: Bm25Params,
    pub blend: BlendParams,
    pub mrf: MrfParams,
    pub training: TrainingConfig,
    pub nets: Vec<NetShape>,
    pub selector: SelectorConfig,
    pub featselect: FeatSelectConfig,
    pub eval: EvalConfig,
    pub sweep: SweepConfig,
    pub synth: SynthConfig,
    pub paths: PathsConfig,
}

/// Hyperparameters shared by every per-length network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub max_iterations: usize,
    pub pos_class_weight: f64,
}

/// Hidden-node count and momentum for one (ranker, query length) network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetShape {
    pub ranker: RankerKind,
    pub length: usize,
    pub hidden: usize,
    pub momentum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectorConfig {
    pub min_length: usize,
    pub max_length: usize,
    pub threshold: f64,
    pub train_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatSelectConfig {
    pub relief_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub ap_depth: usize,
    pub ndcg_cutoff: usize,
    pub throughput_repeats: usize,
    pub throughput_min_ms: u64,
    pub measure_throughput: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Tune epsilon (EXP) and beta (BM25TP) before labeling.
    pub enabled: bool,
    pub grid: Vec<f64>,
}

/// Size of the generated corpus used when no corpus path is given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub queries_per_length: usize,
    pub docs_per_query: usize,
    pub background_docs: usize,
    pub distractors_per_query: usize,
}

/// Input and output locations. A missing corpus, query or qrels path
/// selects the generated corpus.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub corpus: Option<PathBuf>,
    pub index: Option<PathBuf>,
    pub queries: Option<PathBuf>,
    pub qrels: Option<PathBuf>,
    pub model_dir: Option<PathBuf>,
    pub report_dir: Option<PathBuf>,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            learning_rate: 0.01,
            max_iterations: 1000,
            pos_class_weight: 2.0,
        }
    }
}

impl Default for SelectorConfig {
    fn default() -> Self {
        SelectorConfig {
            min_length: 3,
            max_length: 5,
            threshold: DEFAULT_THRESHOLD,
            train_fraction: 0.7,
        }
    }
}

impl Default for FeatSelectConfig {
    fn default() -> Self {
        FeatSelectConfig {
            relief_iterations: 1000,
        }
    }
}

impl Default for EvalConfig {
    fn default() -> Self {
        let d = EvalOptions::default();
        EvalConfig {
            ap_depth: d.ap_depth,
            ndcg_cutoff: d.ndcg_cutoff,
            throughput_repeats: d.throughput_repeats,
            throughput_min_ms: d.throughput_min_time.as_millis() as u64,
            measure_throughput: d.measure_throughput,
        }
    }
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            enabled: true,
            grid: (1..=9).map(|i| i as f64 / 10.0).collect(),
        }
    }
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            queries_per_length: 30,
            docs_per_query: 6,
            background_docs: 150,
            distractors_per_query: 24,
        }
    }
}

/// Network shapes for every ranker and length 3 to 5.
pub fn default_net_shapes() -> Vec<NetShape> {
    RankerKind::ALL
        .iter()
        .flat_map(|&ranker| {
            (3..=5).filter_map(move |length| {
                default_net_shape(ranker, length).map(|(hidden, momentum)| NetShape {
                    ranker,
                    length,
                    hidden,
                    momentum,
                })
            })
        })
        .collect()
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            rankers: RankerKind::ALL.to_vec(),
            parallel: true,
            use_stemming: false,
            bm25: Bm25Params::default(),
            blend: BlendParams::default(),
            mrf: MrfParams::default(),
            training: TrainingConfig::default(),
            nets: default_net_shapes(),
            selector: SelectorConfig::default(),
            featselect: FeatSelectConfig::default(),
            eval: EvalConfig::default(),
            sweep: SweepConfig::default(),
            synth: SynthConfig::default(),
            paths: PathsConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Reads a config file and applies the environment override.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut config = Self::parse(&std::fs::read_to_string(path)?)?;
        config.apply_env();
        Ok(config)
    }

    pub fn apply_env(&mut self) {
        if let Some(dir) = std::env::var_os(REPORT_DIR_ENV).filter(|v| !v.is_empty()) {
            self.paths.report_dir = Some(PathBuf::from(dir));
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scoring_params().validate()?;
        let s = &self.selector;
        if s.min_length == 0 || s.min_length > s.max_length {
            return Err(Error::Config(format!(
                "selector lengths {}..={} are empty",
                s.min_length, s.max_length
            )));
        }
        if !(s.threshold > 0.0 && s.threshold < 1.0) {
            return Err(Error::Config("selector.threshold must be in (0,1)".into()));
        }
        if !(s.train_fraction > 0.0 && s.train_fraction < 1.0) {
            return Err(Error::Config(
                "selector.train_fraction must be in (0,1)".into(),
            ));
        }
        if self.sweep.grid.is_empty() || self.sweep.grid.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Config(
                "sweep.grid must be non-empty values in [0,1]".into(),
            ));
        }
        if self.rankers.is_empty() {
            return Err(Error::Config(
                "rankers must name at least one ranker".into(),
            ));
        }
        for &kind in &self.rankers {
            for len in self.lengths() {
                self.net_config(kind, len)?.validate()?;
            }
        }
        Ok(())
    }

    pub fn scoring_params(&self) -> ScoringParams {
        ScoringParams {
            bm25: self.bm25,
            blend: self.blend,
            mrf: self.mrf,
        }
    }

    pub fn lengths(&self) -> std::ops::RangeInclusive<usize> {
        self.selector.min_length..=self.selector.max_length
    }

    pub fn execution(&self) -> Execution {
        if self.parallel {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }

    pub fn eval_options(&self) -> EvalOptions {
        EvalOptions {
            ap_depth: self.eval.ap_depth,
            ndcg_cutoff: self.eval.ndcg_cutoff,
            throughput_repeats: self.eval.throughput_repeats,
            throughput_min_time: Duration::from_millis(self.eval.throughput_min_ms),
            measure_throughput: self.eval.measure_throughput,
            seed: self.seed,
        }
    }

    /// Full network configuration for one ranker and query length, on the
    /// ranker's feature-mask preset.
    pub fn net_config(&self, kind: RankerKind, length: usize) -> Result<NetConfig> {
        let shape = self
            .nets
            .iter()
            .find(|n| n.ranker == kind && n.length == length)
            .ok_or_else(|| Error::Config(format!("no network shape for {kind} length {length}")))?;
        Ok(NetConfig {
            num_inputs: FeatureMask::preset(kind).len(),
            num_hidden: shape.hidden,
            learning_rate: self.training.learning_rate,
            max_iterations: self.training.max_iterations,
            momentum: shape.momentum,
            pos_class_weight: self.training.pos_class_weight,
            seed: self.seed.wrapping_add(length as u64),
        })
    }
}
