//! Training: feature standardization, DSM steps over random ego-graphs,
//! Adam with decoupled weight decay, and per-trial hyperparameter draws.

use std::fs;
use std::path::Path;

use ndarray::{Array2, Axis};
use rand::seq::IndexedRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::ego::{sample_ego, EgoConfig};
use crate::error::{Error, Result};
use crate::graph::{DenseEgoGraph, SparseNetwork};
use crate::model::{DsmOutput, DsmSample, ModelConfig, ParamStore, ScoreModel};
use crate::rng::{self, Rng};
use crate::sde::VpSde;

/// Columns whose population standard deviation falls below this are left alone.
pub const CONSTANT_COLUMN_STD: f64 = 1e-12;

// rng stream tags
const HYPER: u64 = 1;
const INIT: u64 = 2;
const EPOCH: u64 = 3;

/// Per-column scaling applied before training and reused for scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureScaler {
    /// Population standard deviation of every column of the raw features.
    pub std: Vec<f64>,
    /// `false` for columns left unscaled because they are (nearly) constant.
    pub scaled: Vec<bool>,
}

impl FeatureScaler {
    pub fn fit(x: &Array2<f64>) -> Self {
        let n = x.nrows() as f64;
        let std: Vec<f64> = x
            .axis_iter(Axis(1))
            .map(|col| {
                let mean = col.sum() / n;
                (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
            })
            .collect();
        let scaled = std.iter().map(|s| *s >= CONSTANT_COLUMN_STD).collect();
        Self { std, scaled }
    }

    pub fn apply(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.std.len() {
            return Err(Error::shape(format!("{} feature columns", self.std.len()), x.ncols()));
        }
        let mut out = x.clone();
        for ((mut col, s), on) in out.axis_iter_mut(Axis(1)).zip(&self.std).zip(&self.scaled) {
            if *on {
                col.mapv_inplace(|v| v / s);
            }
        }
        Ok(out)
    }

    /// Indices of the columns that were left unscaled.
    pub fn constant_columns(&self) -> Vec<usize> {
        self.scaled
            .iter()
            .enumerate()
            .filter(|(_, s)| !**s)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).expect("scaler serializes");
        fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let s: Self = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.into(),
            source,
        })?;
        if s.std.len() != s.scaled.len() {
            return Err(Error::Data {
                path: path.into(),
                msg: "std and scaled lengths differ".into(),
            });
        }
        Ok(s)
    }
}

/// Divides every feature column by its population standard deviation.
pub fn standardize_features(net: &SparseNetwork) -> Result<(SparseNetwork, FeatureScaler)> {
    if net.num_nodes() < 2 {
        return Err(Error::contract("standardization needs at least two nodes"));
    }
    let scaler = FeatureScaler::fit(net.features());
    let scaled = net.with_features(scaler.apply(net.features())?)?;
    Ok((scaled, scaler))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Ego-graphs per optimizer step; `None` uses the whole network.
    pub batch_size: Option<usize>,
    pub weight_decay: f64,
    pub lr_grid: Vec<f64>,
    pub hidden_dim_grid: Vec<usize>,
    pub alpha_grid: Vec<f64>,
    pub seed: u64,
    pub ego: EgoConfig,
    pub sde: VpSde,
    /// Architecture; `hidden_dim` is replaced by the drawn value.
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            batch_size: None,
            weight_decay: 0.01,
            lr_grid: vec![0.1, 0.05, 0.01],
            hidden_dim_grid: vec![8, 12, 16],
            alpha_grid: vec![0.8, 0.5, 0.2],
            seed: 0,
            ego: EgoConfig::default(),
            sde: VpSde::default(),
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lr_grid.is_empty() || self.hidden_dim_grid.is_empty() || self.alpha_grid.is_empty() {
            return Err(Error::Config("hyperparameter grids must be non-empty".into()));
        }
        if self.batch_size == Some(0) {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if let Some(lr) = self.lr_grid.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::Config(format!("learning rate {lr} must be positive")));
        }
        if let Some(a) = self.alpha_grid.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Config(format!("alpha {a} must lie in [0, 1]")));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config(format!(
                "weight_decay {} must be nonnegative",
                self.weight_decay
            )));
        }
        for h in &self.hidden_dim_grid {
            ModelConfig {
                hidden_dim: *h,
                ..self.model
            }
            .validate()?;
        }
        self.ego.validate()?;
        self.sde.validate()
    }
}

/// One concrete draw from the grids.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hyperparameters {
    pub lr: f64,
    pub hidden_dim: usize,
    pub alpha: f64,
}

/// Uniform draw from each grid, seeded by `(seed, trial)`.
pub fn draw_hyperparameters(cfg: &TrainConfig, trial: usize) -> Result<Hyperparameters> {
    let mut rng = rng::stream(cfg.seed, &[HYPER, trial as u64]);
    let empty = || Error::Config("hyperparameter grids must be non-empty".into());
    Ok(Hyperparameters {
        lr: *cfg.lr_grid.choose(&mut rng).ok_or_else(empty)?,
        hidden_dim: *cfg.hidden_dim_grid.choose(&mut rng).ok_or_else(empty)?,
        alpha: *cfg.alpha_grid.choose(&mut rng).ok_or_else(empty)?,
    })
}

/// Seed of trial `trial`, used for initialization and batch sampling.
pub fn trial_seed(seed: u64, trial: usize) -> u64 {
    rng::derive_seed(seed, &[trial as u64])
}

/// Perturbs every graph to its own `t ~ U(ε, T)` and evaluates both DSM
/// objectives with exact gradients.
pub fn dsm_step(model: &ScoreModel, batch: &[DenseEgoGraph], rng: &mut Rng) -> Result<DsmOutput> {
    let sde = &model.sde;
    let samples = batch
        .iter()
        .map(|g| {
            let t = rng.random_range(sde.t_eps..sde.t_max);
            DsmSample::draw(g, t, sde, rng)
        })
        .collect::<Result<Vec<_>>>()?;
    model.loss_and_grads(&samples)
}

/// First and second moment estimates of Adam.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: ParamStore,
    pub v: ParamStore,
    pub step: u32,
}

impl AdamState {
    pub const BETA1: f64 = 0.9;
    pub const BETA2: f64 = 0.999;
    pub const EPS: f64 = 1e-8;

    pub fn new(params: &ParamStore) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }
}

/// One Adam step with bias correction plus decoupled weight decay
/// `p ← p − lr·wd·p`.
pub fn adam_update(
    params: &mut ParamStore,
    grads: &ParamStore,
    state: &mut AdamState,
    lr: f64,
    weight_decay: f64,
) -> Result<()> {
    if !params.same_layout(grads) || !params.same_layout(&state.m) {
        return Err(Error::contract("parameter, gradient and optimizer layouts differ"));
    }
    state.step += 1;
    let (b1, b2) = (AdamState::BETA1, AdamState::BETA2);
    let c1 = 1.0 - b1.powi(state.step as i32);
    let c2 = 1.0 - b2.powi(state.step as i32);
    let layers = params
        .iter_mut()
        .zip(grads.iter())
        .zip(state.m.iter_mut().zip(state.v.iter_mut()));
    for ((p, g), (m, v)) in layers {
        ndarray::Zip::from(&mut p.value)
            .and(&g.value)
            .and(&mut m.value)
            .and(&mut v.value)
            .for_each(|p, &g, m, v| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= lr * weight_decay * *p + lr * m_hat / (v_hat.sqrt() + AdamState::EPS);
            });
    }
    params.check_finite()
}

/// Mean losses of one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub loss_x: f64,
    pub loss_a: f64,
}

impl EpochLoss {
    pub fn combined(&self) -> f64 {
        self.loss_x + self.loss_a
    }
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub model: ScoreModel,
    pub curve: Vec<EpochLoss>,
}

/// Trains both score networks on a standardized network.
///
/// Each epoch runs `⌈n / batch_size⌉` steps; every step samples
/// `batch_size` nodes uniformly with replacement, extracts and truncates
/// their ego-graphs, and updates θ and φ with their own Adam states.
/// The reported loss of an epoch is the mean over its steps, measured before
/// each update.
pub fn train(net: &SparseNetwork, cfg: &TrainConfig, hp: &Hyperparameters, seed: u64) -> Result<Trained> {
    cfg.validate()?;
    if net.num_nodes() == 0 {
        return Err(Error::contract("cannot train on an empty network"));
    }
    let model_cfg = ModelConfig {
        hidden_dim: hp.hidden_dim,
        ..cfg.model
    };
    let mut model = ScoreModel::init(model_cfg, net.num_features(), cfg.sde, &mut rng::stream(seed, &[INIT]))?;
    let n = net.num_nodes();
    let batch = cfg.batch_size.unwrap_or(n).min(n);
    let steps = n.div_ceil(batch);
    let mut adam_theta = AdamState::new(&model.theta);
    let mut adam_phi = AdamState::new(&model.phi);
    let mut curve = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let (mut lx, mut la) = (0.0, 0.0);
        for step in 0..steps {
            let mut rng = rng::stream(seed, &[EPOCH, epoch as u64, step as u64]);
            let egos = (0..batch)
                .map(|_| {
                    let v = rng.random_range(0..n);
                    sample_ego(net, v, &cfg.ego, &mut rng)
                })
                .collect::<Result<Vec<_>>>()?;
            let out = dsm_step(&model, &egos, &mut rng)?;
            lx += out.loss_x;
            la += out.loss_a;
            adam_update(
                &mut model.theta,
                &out.grad_theta,
                &mut adam_theta,
                hp.lr,
                cfg.weight_decay,
            )?;
            adam_update(&mut model.phi, &out.grad_phi, &mut adam_phi, hp.lr, cfg.weight_decay)?;
        }
        curve.push(EpochLoss {
            epoch: epoch + 1,
            loss_x: lx / steps as f64,
            loss_a: la / steps as f64,
        });
    }
    Ok(Trained { model, curve })
}
