//! The two score networks.
//!
//! `s_θ` estimates the feature score `∇_X log p_t(X, A)` and `s_φ` the
//! adjacency score `∇_A log p_t(X, A)`. Both predict the standardized noise
//! `ε̂` that was mixed into the clean graph and return the score as
//! `−ε̂ / σ_t`; time enters only through that scaling.
//!
//! * `s_θ`: one GCN layer on `(X, A)`, then a three-layer MLP over
//!   `[X, H]` producing `N × F`.
//! * `s_φ`: one GMH block on `(X, [A, A²])` producing four attention
//!   channels, then a three-layer per-pair MLP producing one value per pair,
//!   symmetrized with the diagonal cleared.
//!
//! Everything runs in `f64`; gradients come from [`crate::autodiff`].

mod checkpoint;
pub mod layers;
mod params;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::graph::DenseEgoGraph;
use crate::rng::Rng;
use crate::sde::VpSde;

pub use checkpoint::{load_checkpoint, save_checkpoint, Manifest, ManifestEntry};
use layers::{gcn_layer, gmh_attention, mlp, pair_mask, row_mask, GcnWeights, GmhWeights, Linear};
use params::{uniform_weight, zero_bias};
pub use params::{Param, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden_dim: usize,
    pub gmh_heads: usize,
    pub gmh_out_channels: usize,
    /// Number of adjacency powers fed to GMH (`2` means `[A, A²]`).
    pub adjacency_powers: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 16,
            gmh_heads: 4,
            gmh_out_channels: 4,
            adjacency_powers: 2,
        }
    }
}

impl ModelConfig {
    pub fn with_hidden(hidden_dim: usize) -> Self {
        Self {
            hidden_dim,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_dim == 0 || self.gmh_heads == 0 || self.gmh_out_channels == 0 || self.adjacency_powers == 0 {
            return Err(Error::Config(format!("model sizes must be positive: {self:?}")));
        }
        if !self.hidden_dim.is_multiple_of(self.gmh_heads) {
            return Err(Error::Config(format!(
                "hidden_dim {} is not divisible by {} heads",
                self.hidden_dim, self.gmh_heads
            )));
        }
        Ok(())
    }

    fn head_dim(&self) -> usize {
        self.hidden_dim / self.gmh_heads
    }

    /// Width of the per-pair input of the GMH mixing MLP.
    fn gmh_pair_inputs(&self) -> usize {
        2 * self.gmh_heads * self.adjacency_powers + self.adjacency_powers
    }
}

/// Parameters of both score networks plus the schedule they were trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreModel {
    pub config: ModelConfig,
    pub num_features: usize,
    pub sde: VpSde,
    /// Feature network `s_θ`.
    pub theta: ParamStore,
    /// Adjacency network `s_φ`.
    pub phi: ParamStore,
}

/// Fresh `s_θ` parameters: weights `U(±1/√fan_in)`, zero biases.
pub fn init_theta(cfg: &ModelConfig, f: usize, rng: &mut Rng) -> ParamStore {
    let h = cfg.hidden_dim;
    let mut p = ParamStore::new();
    p.push("gcn.w_adj", uniform_weight(f, h, rng));
    p.push("gcn.w_self", uniform_weight(f, h, rng));
    p.push("gcn.b", zero_bias(h));
    for (i, (fan_in, fan_out)) in [(f + h, h), (h, h), (h, f)].into_iter().enumerate() {
        p.push(format!("mlp.{i}.w"), uniform_weight(fan_in, fan_out, rng));
        p.push(format!("mlp.{i}.b"), zero_bias(fan_out));
    }
    p
}

/// Fresh `s_φ` parameters.
pub fn init_phi(cfg: &ModelConfig, f: usize, rng: &mut Rng) -> ParamStore {
    let (h, d, c_out) = (cfg.hidden_dim, cfg.head_dim(), cfg.gmh_out_channels);
    let mut p = ParamStore::new();
    for c in 0..cfg.adjacency_powers {
        for head in 0..cfg.gmh_heads {
            p.push(format!("gmh.q.{c}.{head}"), uniform_weight(f, d, rng));
            p.push(format!("gmh.k.{c}.{head}"), uniform_weight(f, d, rng));
        }
    }
    for (i, (fan_in, fan_out)) in [(cfg.gmh_pair_inputs(), h), (h, c_out)].into_iter().enumerate() {
        p.push(format!("gmh.mix.{i}.w"), uniform_weight(fan_in, fan_out, rng));
        p.push(format!("gmh.mix.{i}.b"), zero_bias(fan_out));
    }
    for (i, (fan_in, fan_out)) in [(c_out, h), (h, h), (h, 1)].into_iter().enumerate() {
        p.push(format!("mlp.{i}.w"), uniform_weight(fan_in, fan_out, rng));
        p.push(format!("mlp.{i}.b"), zero_bias(fan_out));
    }
    p
}

/// Parameters of a store bound to tape variables.
struct Bound<'a> {
    store: &'a ParamStore,
    vars: Vec<Var>,
}

impl<'a> Bound<'a> {
    fn new(tape: &mut Tape, store: &'a ParamStore, trainable: bool) -> Self {
        let vars = store
            .iter()
            .map(|p| {
                if trainable {
                    tape.param(p.value.clone())
                } else {
                    tape.constant(p.value.clone())
                }
            })
            .collect();
        Self { store, vars }
    }

    fn var(&self, name: &str) -> Var {
        match self.store.index_of(name) {
            Some(i) => self.vars[i],
            None => panic!("unknown parameter {name}"),
        }
    }

    fn linear(&self, prefix: &str) -> Linear {
        Linear {
            w: self.var(&format!("{prefix}.w")),
            b: self.var(&format!("{prefix}.b")),
        }
    }

    fn mlp3(&self, prefix: &str) -> [Linear; 3] {
        [0, 1, 2].map(|i| self.linear(&format!("{prefix}.{i}")))
    }

    /// Gradient for every parameter, zeros where none flowed.
    fn gradients(&self, grads: &mut crate::autodiff::Grads) -> ParamStore {
        let mut out = self.store.zeros_like();
        for (p, var) in out.iter_mut().zip(&self.vars) {
            if let Some(g) = grads.take(*var) {
                p.value = g;
            }
        }
        out
    }
}

/// Checks named intermediate values and reports the first non-finite one.
fn check_trace(tape: &Tape, net: &str, trace: &[(&str, Var)]) -> Result<()> {
    for (name, v) in trace {
        if tape.value(*v).iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                location: format!("{net}/{name}"),
            });
        }
    }
    Ok(())
}

fn check_inputs(x: &Array2<f64>, a: &Array2<f64>, mask: &[bool], f: usize) -> Result<()> {
    let n = mask.len();
    if x.dim() != (n, f) {
        return Err(Error::shape(format!("features ({n}, {f})"), format!("{:?}", x.dim())));
    }
    if a.dim() != (n, n) {
        return Err(Error::shape(format!("adjacency ({n}, {n})"), format!("{:?}", a.dim())));
    }
    Ok(())
}

/// Adjacency powers `[A, A², …]` with padded rows and columns cleared.
fn adjacency_powers(a: &Array2<f64>, mask: &[bool], count: usize) -> Vec<Array2<f64>> {
    let base = a * &pair_mask(mask);
    let mut out = vec![base.clone()];
    for _ in 1..count {
        let next = out.last().expect("non-empty").dot(&base);
        out.push(next);
    }
    out
}

impl ScoreModel {
    pub fn init(config: ModelConfig, num_features: usize, sde: VpSde, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        sde.validate()?;
        let theta = init_theta(&config, num_features, rng);
        let phi = init_phi(&config, num_features, rng);
        Ok(Self {
            config,
            num_features,
            sde,
            theta,
            phi,
        })
    }

    /// Records `ε̂_X` on `tape`.
    fn forward_x(
        &self,
        tape: &mut Tape,
        theta: &Bound,
        x: &Array2<f64>,
        a: &Array2<f64>,
        mask: &[bool],
    ) -> Result<Var> {
        let n = mask.len();
        let xm = x * &row_mask(mask, x.ncols());
        let a_plus_i = &(a * &pair_mask(mask)) + &Array2::<f64>::eye(n);
        let xv = tape.constant(xm);
        let av = tape.constant(a_plus_i);
        let gcn = GcnWeights {
            w_adj: theta.var("gcn.w_adj"),
            w_self: theta.var("gcn.w_self"),
            b: theta.var("gcn.b"),
        };
        let h = gcn_layer(tape, xv, av, &gcn, mask);
        let cat = tape.concat_cols(&[xv, h]);
        let out = mlp(tape, cat, &theta.mlp3("mlp"));
        let eps = tape.mul_const(out, &row_mask(mask, self.num_features));
        check_trace(tape, "score_x", &[("gcn", h), ("mlp", out)])?;
        Ok(eps)
    }

    /// Records `ε̂_A` on `tape`.
    fn forward_a(&self, tape: &mut Tape, phi: &Bound, x: &Array2<f64>, a: &Array2<f64>, mask: &[bool]) -> Result<Var> {
        let n = mask.len();
        let cfg = &self.config;
        let xm = x * &row_mask(mask, x.ncols());
        let xv = tape.constant(xm);
        let channels: Vec<Var> = adjacency_powers(a, mask, cfg.adjacency_powers)
            .into_iter()
            .map(|c| tape.constant(c))
            .collect();
        let pick = |kind: &str| -> Vec<Vec<Var>> {
            (0..cfg.adjacency_powers)
                .map(|c| {
                    (0..cfg.gmh_heads)
                        .map(|h| phi.var(&format!("gmh.{kind}.{c}.{h}")))
                        .collect()
                })
                .collect()
        };
        let gmh = GmhWeights {
            query: pick("q"),
            key: pick("k"),
            mix: [phi.linear("gmh.mix.0"), phi.linear("gmh.mix.1")],
            value: None,
        };
        let attn = gmh_attention(tape, xv, &channels, &gmh, mask);
        let out = mlp(tape, attn, &phi.mlp3("mlp"));
        let s = tape.reshape(out, (n, n));
        let s = tape.symmetrize(s);
        let eps = tape.mul_const(s, &pair_mask(mask));
        check_trace(tape, "score_a", &[("gmh", attn), ("mlp", out)])?;
        Ok(eps)
    }

    /// Predicted feature noise `ε̂_X` (`N × F`, zero on padding).
    pub fn eps_x(&self, x: &Array2<f64>, a: &Array2<f64>, mask: &[bool]) -> Result<Array2<f64>> {
        check_inputs(x, a, mask, self.num_features)?;
        let mut tape = Tape::new();
        let theta = Bound::new(&mut tape, &self.theta, false);
        let eps = self.forward_x(&mut tape, &theta, x, a, mask)?;
        Ok(tape.value(eps).clone())
    }

    /// Predicted adjacency noise `ε̂_A` (`N × N`, symmetric, zero diagonal and padding).
    pub fn eps_a(&self, x: &Array2<f64>, a: &Array2<f64>, mask: &[bool]) -> Result<Array2<f64>> {
        check_inputs(x, a, mask, self.num_features)?;
        let mut tape = Tape::new();
        let phi = Bound::new(&mut tape, &self.phi, false);
        let eps = self.forward_a(&mut tape, &phi, x, a, mask)?;
        Ok(tape.value(eps).clone())
    }

    fn sigma_at(&self, t: f64) -> Result<f64> {
        if !(self.sde.t_eps..=self.sde.t_max).contains(&t) {
            return Err(Error::contract(format!(
                "score evaluated at t = {t}, outside [{}, {}]",
                self.sde.t_eps, self.sde.t_max
            )));
        }
        Ok(self.sde.moments(t).1)
    }

    /// `s_θ(G_t) = −ε̂_X / σ_t`.
    pub fn score_x(&self, x: &Array2<f64>, a: &Array2<f64>, mask: &[bool], t: f64) -> Result<Array2<f64>> {
        let sigma = self.sigma_at(t)?;
        Ok(self.eps_x(x, a, mask)? * (-1.0 / sigma))
    }

    /// `s_φ(G_t) = −ε̂_A / σ_t`.
    pub fn score_a(&self, x: &Array2<f64>, a: &Array2<f64>, mask: &[bool], t: f64) -> Result<Array2<f64>> {
        let sigma = self.sigma_at(t)?;
        Ok(self.eps_a(x, a, mask)? * (-1.0 / sigma))
    }

    /// Denoising score-matching losses and their exact gradients.
    ///
    /// With weights `λ(t) = σ_t²` and the `−ε̂/σ_t` parameterization, each
    /// objective is the mean of `(ε̂ − Z)²` over real entries of one graph
    /// (off-diagonal real pairs for the adjacency), averaged over the batch.
    /// Single-node graphs have no adjacency entries and are left out of the
    /// adjacency average.
    pub fn loss_and_grads(&self, samples: &[DsmSample]) -> Result<DsmOutput> {
        if samples.is_empty() {
            return Err(Error::contract("empty DSM batch"));
        }
        for s in samples {
            check_inputs(&s.x_t, &s.a_t, &s.mask, self.num_features)?;
        }
        type SampleGrads = (f64, ParamStore, Option<(f64, ParamStore)>);
        let per_sample: Vec<Result<SampleGrads>> = samples
            .par_iter()
            .map(|s| {
                let (lx, gx) = self.sample_loss_x(s)?;
                let ga = if s.real_count() >= 2 {
                    Some(self.sample_loss_a(s)?)
                } else {
                    None
                };
                Ok((lx, gx, ga))
            })
            .collect();

        let mut loss_x = 0.0;
        let mut loss_a = 0.0;
        let mut grad_theta = self.theta.zeros_like();
        let mut grad_phi = self.phi.zeros_like();
        let mut a_count = 0usize;
        let per_sample: Vec<_> = per_sample.into_iter().collect::<Result<_>>()?;
        for (_, _, ga) in &per_sample {
            if ga.is_some() {
                a_count += 1;
            }
        }
        let bx = 1.0 / samples.len() as f64;
        let ba = if a_count > 0 { 1.0 / a_count as f64 } else { 0.0 };
        for (lx, gx, ga) in &per_sample {
            loss_x += lx * bx;
            grad_theta.add_scaled(gx, bx);
            if let Some((la, g)) = ga {
                loss_a += la * ba;
                grad_phi.add_scaled(g, ba);
            }
        }
        if !loss_x.is_finite() {
            return Err(Error::NonFinite {
                location: "feature DSM loss".into(),
            });
        }
        if !loss_a.is_finite() {
            return Err(Error::NonFinite {
                location: "adjacency DSM loss".into(),
            });
        }
        Ok(DsmOutput {
            loss_x,
            loss_a,
            grad_theta,
            grad_phi,
        })
    }

    fn sample_loss_x(&self, s: &DsmSample) -> Result<(f64, ParamStore)> {
        let mut tape = Tape::new();
        let theta = Bound::new(&mut tape, &self.theta, true);
        let eps = self.forward_x(&mut tape, &theta, &s.x_t, &s.a_t, &s.mask)?;
        let z = tape.constant(s.z_x.clone());
        let diff = tape.sub(eps, z);
        let sq = tape.sum_squares(diff);
        let count = (s.real_count() * self.num_features).max(1) as f64;
        let loss = tape.scale(sq, 1.0 / count);
        let mut grads = tape.backward(loss);
        Ok((tape.scalar(loss), theta.gradients(&mut grads)))
    }

    fn sample_loss_a(&self, s: &DsmSample) -> Result<(f64, ParamStore)> {
        let mut tape = Tape::new();
        let phi = Bound::new(&mut tape, &self.phi, true);
        let eps = self.forward_a(&mut tape, &phi, &s.x_t, &s.a_t, &s.mask)?;
        let z = tape.constant(s.z_a.clone());
        let diff = tape.sub(eps, z);
        let sq = tape.sum_squares(diff);
        let n = s.real_count();
        let loss = tape.scale(sq, 1.0 / (n * (n - 1)) as f64);
        let mut grads = tape.backward(loss);
        Ok((tape.scalar(loss), phi.gradients(&mut grads)))
    }
}

/// One perturbed training example: the noisy graph and the draws behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct DsmSample {
    pub x_t: Array2<f64>,
    pub a_t: Array2<f64>,
    pub mask: Vec<bool>,
    pub t: f64,
    pub z_x: Array2<f64>,
    pub z_a: Array2<f64>,
}

impl DsmSample {
    /// Perturbs both components of `g` to time `t`.
    pub fn draw(g: &DenseEgoGraph, t: f64, sde: &VpSde, rng: &mut Rng) -> Result<Self> {
        let px = sde.perturb_features(&g.x, &g.mask, t, rng)?;
        let pa = sde.perturb_adjacency(&g.a, &g.mask, t, rng)?;
        Ok(Self {
            x_t: px.noisy,
            a_t: pa.noisy,
            mask: g.mask.clone(),
            t,
            z_x: px.noise,
            z_a: pa.noise,
        })
    }

    /// Builds the noisy graph from explicit draws.
    pub fn from_noise(g: &DenseEgoGraph, t: f64, sde: &VpSde, z_x: Array2<f64>, z_a: Array2<f64>) -> Self {
        let (m, s) = sde.moments(t);
        Self {
            x_t: &g.x * m + &z_x * s,
            a_t: &g.a * m + &z_a * s,
            mask: g.mask.clone(),
            t,
            z_x,
            z_a,
        }
    }

    pub fn real_count(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }
}

#[derive(Debug, Clone)]
pub struct DsmOutput {
    pub loss_x: f64,
    pub loss_a: f64,
    pub grad_theta: ParamStore,
    pub grad_phi: ParamStore,
}

/// Batch DSM losses for an arbitrary noise predictor `(ε̂_X, ε̂_A)`.
///
/// Uses the same normalization as [`ScoreModel::loss_and_grads`].
pub fn dsm_loss_with<F>(samples: &[DsmSample], mut predict: F) -> Result<(f64, f64)>
where
    F: FnMut(&DsmSample) -> Result<(Array2<f64>, Array2<f64>)>,
{
    let mut lx = 0.0;
    let mut la = 0.0;
    let mut a_count = 0;
    for s in samples {
        let (ex, ea) = predict(s)?;
        let n = s.real_count();
        let rows = row_mask(&s.mask, s.x_t.ncols());
        let dx = (&ex - &s.z_x) * &rows;
        lx += dx.iter().map(|v| v * v).sum::<f64>() / (n * s.x_t.ncols()).max(1) as f64;
        if n >= 2 {
            let da = (&ea - &s.z_a) * &pair_mask(&s.mask);
            la += da.iter().map(|v| v * v).sum::<f64>() / (n * (n - 1)) as f64;
            a_count += 1;
        }
    }
    Ok((
        lx / samples.len() as f64,
        if a_count > 0 { la / a_count as f64 } else { 0.0 },
    ))
}
