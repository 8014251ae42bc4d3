//! The JSON run configuration, its defaults, and `--set` overrides.

use std::fs;
use std::path::{Path, PathBuf};

use egodiff::ego::EgoConfig;
use egodiff::io::SynthConfig;
use egodiff::model::ModelConfig;
use egodiff::scorer::{Dissimilarity, Penalty, ScoringConfig};
use egodiff::sde::VpSde;
use egodiff::solver::SolverConfig;
use egodiff::train::TrainConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

/// Name of the resolved configuration written next to every output.
pub const RESOLVED_CONFIG: &str = "config.json";

/// A single value or a grid to draw from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            Self::One(v) => vec![v.clone()],
            Self::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub hidden_dim: OneOrMany<usize>,
    pub gmh_heads: usize,
    pub gmh_out_channels: usize,
    pub adjacency_powers: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        let m = ModelConfig::default();
        Self {
            hidden_dim: OneOrMany::Many(TrainConfig::default().hidden_dim_grid),
            gmh_heads: m.gmh_heads,
            gmh_out_channels: m.gmh_out_channels,
            adjacency_powers: m.adjacency_powers,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    /// Ego-graphs per step; `null` trains on the whole network at once.
    pub batch_size: Option<usize>,
    pub lr: OneOrMany<f64>,
    pub weight_decay: f64,
    pub trials: usize,
    pub seed: u64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            epochs: t.epochs,
            batch_size: t.batch_size,
            lr: OneOrMany::Many(t.lr_grid),
            weight_decay: t.weight_decay,
            trials: 20,
            seed: t.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoringSection {
    pub levels: usize,
    pub samples_per_level: usize,
    pub alpha: OneOrMany<f64>,
    pub penalty: Penalty,
    pub dissimilarity: Dissimilarity,
    pub binarize_threshold: f64,
    pub solver: SolverConfig,
    /// Noise levels of `solver-compare`.
    pub profile_taus: Vec<f64>,
    /// Nodes sampled by `solver-compare` and `energy-hist`; `null` uses all.
    pub profile_nodes: Option<usize>,
}

impl Default for ScoringSection {
    fn default() -> Self {
        let s = ScoringConfig::default();
        Self {
            levels: s.levels,
            samples_per_level: s.samples_per_level,
            alpha: OneOrMany::Many(TrainConfig::default().alpha_grid),
            penalty: s.penalty,
            dissimilarity: s.dissimilarity,
            binarize_threshold: s.binarize_threshold,
            solver: s.solver,
            profile_taus: vec![0.2, 0.4, 0.6, 0.8],
            profile_nodes: Some(100),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub bundle: PathBuf,
    pub checkpoint: PathBuf,
    pub out_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            bundle: "data/bundle".into(),
            checkpoint: "runs/checkpoint".into(),
            out_dir: "runs/out".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub sde: VpSde,
    pub ego: EgoConfig,
    pub model: ModelSection,
    pub train: TrainSection,
    pub scoring: ScoringSection,
    pub paths: Paths,
    pub synth: SynthConfig,
}

/// Every config key with a one-line description, in document order.
pub const KEY_DOCS: &[(&str, &str)] = &[
    ("sde.beta_min", "noise rate at t = 0"),
    ("sde.beta_max", "noise rate at t = t_max"),
    ("sde.t_max", "end of the diffusion"),
    ("sde.t_eps", "smallest training time"),
    ("ego.hops", "ego-graph radius"),
    ("ego.max_nodes", "ego-graphs are truncated to this many nodes"),
    ("model.hidden_dim", "hidden width, or a grid to draw from per trial"),
    ("model.gmh_heads", "attention heads of the adjacency network"),
    ("model.gmh_out_channels", "output channels of the attention block"),
    (
        "model.adjacency_powers",
        "adjacency powers fed to attention (2 = [A, A²])",
    ),
    ("train.epochs", "training epochs per trial"),
    ("train.batch_size", "ego-graphs per step; null = whole network"),
    ("train.lr", "Adam learning rate, or a grid"),
    ("train.weight_decay", "decoupled weight decay"),
    ("train.trials", "independent (draw, train, score, eval) runs"),
    ("train.seed", "master seed; trials derive their own"),
    ("scoring.levels", "noise levels K"),
    ("scoring.samples_per_level", "reconstructions S per level"),
    ("scoring.alpha", "feature weight of the matrix distance, or a grid"),
    ("scoring.penalty", "time weight: snr, sqrt_snr or none"),
    ("scoring.dissimilarity", "matrix or energy"),
    ("scoring.binarize_threshold", "cut-off for reconstructed edges"),
    ("scoring.solver.kind", "em, reverse, em+langevin or reverse+langevin"),
    ("scoring.solver.steps_per_unit_time", "predictor steps per unit of time"),
    ("scoring.solver.corrector_snr", "Langevin signal-to-noise ratio"),
    ("scoring.solver.corrector_steps", "Langevin steps per predictor step"),
    (
        "scoring.solver.corrector_order",
        "corrector before or after the predictor",
    ),
    ("scoring.profile_taus", "noise levels of solver-compare"),
    (
        "scoring.profile_nodes",
        "nodes sampled by solver-compare and energy-hist; null = all",
    ),
    ("paths.bundle", "graph bundle directory"),
    (
        "paths.checkpoint",
        "checkpoint root (one trial_<k> directory per trial)",
    ),
    ("paths.out_dir", "output root for scores and reports"),
    ("synth.num_nodes", "nodes of the generated network"),
    ("synth.num_features", "feature columns"),
    ("synth.blocks", "communities of the block model"),
    ("synth.p_in", "edge probability inside a block"),
    ("synth.p_out", "edge probability across blocks"),
    ("synth.contextual_fraction", "share of nodes with shifted features"),
    ("synth.structural_fraction", "share of nodes wired into cliques"),
    ("synth.clique_size", "nodes per planted clique"),
    ("synth.feature_shift", "displacement of contextual outliers"),
    ("synth.seed", "generator seed"),
];

/// Dotted paths of all leaves of a JSON object.
pub fn leaf_keys(v: &Value) -> Vec<String> {
    fn walk(v: &Value, prefix: &str, out: &mut Vec<String>) {
        match v {
            Value::Object(map) if !map.is_empty() => {
                for (k, child) in map {
                    let key = if prefix.is_empty() {
                        k.clone()
                    } else {
                        format!("{prefix}.{k}")
                    };
                    walk(child, &key, out);
                }
            }
            _ => out.push(prefix.to_owned()),
        }
    }
    let mut out = Vec::new();
    walk(v, "", &mut out);
    out
}

/// Text for `--help`: every key with its default.
pub fn reference() -> String {
    let defaults = serde_json::to_value(RunConfig::default()).expect("config serializes");
    let mut out = String::from("Configuration keys (JSON file sections; override with --set key=value):\n");
    for (key, doc) in KEY_DOCS {
        let default = key.split('.').fold(&defaults, |v, k| &v[k]);
        out.push_str(&format!("  {key:<38} {doc} [default: {default}]\n"));
    }
    out
}

impl RunConfig {
    /// Reads `path` (defaults when `None`) and applies `overrides`.
    pub fn resolve(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut value = match path {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
                let parsed: RunConfig =
                    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
                serde_json::to_value(parsed).expect("config serializes")
            }
            None => serde_json::to_value(RunConfig::default()).expect("config serializes"),
        };
        for arg in overrides {
            apply_override(&mut value, arg)?;
        }
        let cfg: RunConfig = serde_json::from_value(value).map_err(|e| CliError::Usage(format!("--set: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |key: &str, e: egodiff::Error| CliError::Usage(format!("{key}: {e}"));
        self.sde.validate().map_err(|e| bad("sde", e))?;
        self.ego.validate().map_err(|e| bad("ego", e))?;
        self.train_config().validate().map_err(|e| bad("train/model", e))?;
        for alpha in self.scoring.alpha.to_vec() {
            self.scoring_config(alpha, 0)
                .validate()
                .map_err(|e| bad("scoring", e))?;
        }
        if self.train.trials == 0 {
            return Err(CliError::Usage("train.trials must be at least 1".into()));
        }
        if self
            .scoring
            .profile_taus
            .iter()
            .any(|t| !(*t >= self.sde.t_eps && *t <= self.sde.t_max))
        {
            return Err(CliError::Usage(format!(
                "scoring.profile_taus must lie in [{}, {}]",
                self.sde.t_eps, self.sde.t_max
            )));
        }
        if self.scoring.profile_nodes == Some(0) {
            return Err(CliError::Usage("scoring.profile_nodes must be at least 1".into()));
        }
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            weight_decay: self.train.weight_decay,
            lr_grid: self.train.lr.to_vec(),
            hidden_dim_grid: self.model.hidden_dim.to_vec(),
            alpha_grid: self.scoring.alpha.to_vec(),
            seed: self.train.seed,
            ego: self.ego,
            sde: self.sde,
            model: ModelConfig {
                hidden_dim: self.model.hidden_dim.to_vec().first().copied().unwrap_or(0),
                gmh_heads: self.model.gmh_heads,
                gmh_out_channels: self.model.gmh_out_channels,
                adjacency_powers: self.model.adjacency_powers,
            },
        }
    }

    pub fn scoring_config(&self, alpha: f64, seed: u64) -> ScoringConfig {
        ScoringConfig {
            levels: self.scoring.levels,
            samples_per_level: self.scoring.samples_per_level,
            alpha,
            penalty: self.scoring.penalty,
            dissimilarity: self.scoring.dissimilarity,
            solver: self.scoring.solver,
            binarize_threshold: self.scoring.binarize_threshold,
            seed,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    /// Writes the resolved configuration into `dir`.
    pub fn write_next_to(&self, dir: &Path) -> Result<(), CliError> {
        let path = dir.join(RESOLVED_CONFIG);
        fs::write(&path, self.to_json()).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
    }
}

/// Applies `section.key=value`. The value is parsed as JSON and taken as a
/// plain string when that fails, so `--set scoring.penalty=none` works.
pub fn apply_override(root: &mut Value, arg: &str) -> Result<(), CliError> {
    let (key, raw) = arg
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("--set {arg:?}: expected section.key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_owned()));
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let unknown = || CliError::Usage(format!("--set: unknown config key {key:?}"));
        let map = node.as_object_mut().ok_or_else(unknown)?;
        let child = map.get_mut(*part).ok_or_else(unknown)?;
        if i + 1 == parts.len() {
            *child = value;
            return Ok(());
        }
        node = child;
    }
    Err(CliError::Usage(format!("--set: empty key in {arg:?}")))
}
