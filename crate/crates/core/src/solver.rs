//! Reverse-time integration of the coupled feature/adjacency system from an
//! intermediate time `τ` back to 0.
//!
//! Two predictors are available, Euler–Maruyama and the ancestral "reverse
//! diffusion" discretization, each optionally followed (or preceded) by
//! Langevin corrector steps. Feature noise is i.i.d.; adjacency noise is drawn
//! on the upper triangle and mirrored, so `Â` stays symmetric with an empty
//! diagonal. Padded slots stay exactly zero.

use std::fmt;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::masked_sq_norm;
use crate::model::layers::{pair_mask, row_mask};
use crate::model::ScoreModel;
use crate::rng::Rng;
use crate::sde::{feature_noise, symmetric_noise, VpSde};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SolverKind {
    #[serde(rename = "em")]
    Em,
    #[serde(rename = "reverse")]
    Reverse,
    #[serde(rename = "em+langevin")]
    EmLangevin,
    #[serde(rename = "reverse+langevin")]
    ReverseLangevin,
    /// Reserved; not implemented.
    #[serde(rename = "s4")]
    S4,
}

impl SolverKind {
    pub const ALL: [SolverKind; 4] = [Self::Em, Self::Reverse, Self::EmLangevin, Self::ReverseLangevin];

    pub fn name(self) -> &'static str {
        match self {
            Self::Em => "em",
            Self::Reverse => "reverse",
            Self::EmLangevin => "em+langevin",
            Self::ReverseLangevin => "reverse+langevin",
            Self::S4 => "s4",
        }
    }

    fn uses_corrector(self) -> bool {
        matches!(self, Self::EmLangevin | Self::ReverseLangevin)
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrectorOrder {
    Before,
    After,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub kind: SolverKind,
    pub steps_per_unit_time: usize,
    pub corrector_snr: f64,
    pub corrector_steps: usize,
    pub corrector_order: CorrectorOrder,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            kind: SolverKind::Em,
            steps_per_unit_time: 100,
            corrector_snr: 0.16,
            corrector_steps: 1,
            corrector_order: CorrectorOrder::After,
        }
    }
}

impl SolverConfig {
    pub fn with_kind(kind: SolverKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == SolverKind::S4 {
            return Err(Error::Config(
                "solver \"s4\" is reserved but not implemented; use em, reverse, em+langevin or reverse+langevin"
                    .into(),
            ));
        }
        if self.steps_per_unit_time == 0 {
            return Err(Error::Config("steps_per_unit_time must be at least 1".into()));
        }
        if !(self.corrector_snr > 0.0 && self.corrector_snr.is_finite()) {
            return Err(Error::Config(format!(
                "corrector_snr {} must be positive",
                self.corrector_snr
            )));
        }
        Ok(())
    }

    /// Predictor steps for integrating from `tau` to 0: `⌊steps·τ/T⌋`, at least 1.
    pub fn num_steps(&self, tau: f64, t_max: f64) -> usize {
        // the small slack keeps e.g. 100·0.6 from flooring to 59
        let raw = self.steps_per_unit_time as f64 * tau / t_max;
        ((raw + 1e-9).floor() as usize).max(1)
    }
}

/// A graph in the middle of integration; `a` is continuous.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphState {
    pub x: Array2<f64>,
    pub a: Array2<f64>,
    pub mask: Vec<bool>,
}

impl GraphState {
    fn is_finite(&self) -> bool {
        self.x.iter().chain(self.a.iter()).all(|v| v.is_finite())
    }
}

/// Partial scores `(∇_X, ∇_A)` of the current marginal.
pub trait ScoreFn: Sync {
    fn scores(&self, state: &GraphState, t: f64) -> Result<(Array2<f64>, Array2<f64>)>;
}

impl ScoreFn for ScoreModel {
    fn scores(&self, s: &GraphState, t: f64) -> Result<(Array2<f64>, Array2<f64>)> {
        Ok((
            self.score_x(&s.x, &s.a, &s.mask, t)?,
            self.score_a(&s.x, &s.a, &s.mask, t)?,
        ))
    }
}

/// Wraps a closure as a [`ScoreFn`].
pub struct FnScore<F>(pub F);

impl<F> ScoreFn for FnScore<F>
where
    F: Fn(&GraphState, f64) -> Result<(Array2<f64>, Array2<f64>)> + Sync,
{
    fn scores(&self, state: &GraphState, t: f64) -> Result<(Array2<f64>, Array2<f64>)> {
        (self.0)(state, t)
    }
}

/// Scores that are identically zero.
pub struct ZeroScore;

impl ScoreFn for ZeroScore {
    fn scores(&self, s: &GraphState, _t: f64) -> Result<(Array2<f64>, Array2<f64>)> {
        Ok((Array2::zeros(s.x.dim()), Array2::zeros(s.a.dim())))
    }
}

/// Noise for one update: masked feature noise and mirrored adjacency noise.
fn draw_noise(state: &GraphState, rng: &mut Rng) -> (Array2<f64>, Array2<f64>) {
    let zx = feature_noise(state.x.dim(), &state.mask, rng);
    let za = symmetric_noise(state.mask.len(), &state.mask, rng);
    (zx, za)
}

/// Clears padded rows, the diagonal of `a` and padded pairs.
fn apply_mask(state: &mut GraphState) {
    state.x *= &row_mask(&state.mask, state.x.ncols());
    state.a *= &pair_mask(&state.mask);
}

/// One reverse Euler–Maruyama step from `t` to `t − dt`:
/// `G ← G + [½β G + β s]·dt + √(β·dt)·z`. `rng = None` injects no noise.
pub fn em_step(
    state: &GraphState,
    t: f64,
    dt: f64,
    scores: (&Array2<f64>, &Array2<f64>),
    sde: &VpSde,
    rng: Option<&mut Rng>,
) -> Result<GraphState> {
    if !(dt > 0.0) {
        return Err(Error::contract(format!("step size {dt} must be positive")));
    }
    let beta = sde.beta(t)?;
    let drift = 1.0 + 0.5 * beta * dt;
    let mut next = GraphState {
        x: &state.x * drift + scores.0 * (beta * dt),
        a: &state.a * drift + scores.1 * (beta * dt),
        mask: state.mask.clone(),
    };
    if let Some(rng) = rng {
        let (zx, za) = draw_noise(state, rng);
        let g = (beta * dt).sqrt();
        next.x.scaled_add(g, &zx);
        next.a.scaled_add(g, &za);
    }
    apply_mask(&mut next);
    Ok(next)
}

/// One ancestral step with `β_i = β(t)·dt`:
/// `G ← (2 − √(1 − β_i))·G + β_i·s + √β_i·z`.
pub fn reverse_step(
    state: &GraphState,
    t: f64,
    dt: f64,
    scores: (&Array2<f64>, &Array2<f64>),
    sde: &VpSde,
    rng: Option<&mut Rng>,
) -> Result<GraphState> {
    let beta_i = sde.beta(t)? * dt;
    if !(0.0..1.0).contains(&beta_i) {
        return Err(Error::contract(format!(
            "discrete beta {beta_i} at t = {t} must lie in [0, 1)"
        )));
    }
    let expand = 2.0 - (1.0 - beta_i).sqrt();
    let mut next = GraphState {
        x: &state.x * expand + scores.0 * beta_i,
        a: &state.a * expand + scores.1 * beta_i,
        mask: state.mask.clone(),
    };
    if let Some(rng) = rng {
        let (zx, za) = draw_noise(state, rng);
        let g = beta_i.sqrt();
        next.x.scaled_add(g, &zx);
        next.a.scaled_add(g, &za);
    }
    apply_mask(&mut next);
    Ok(next)
}

/// Langevin step size `δ = 2·(snr·‖z‖/‖s‖)²`; zero when `‖s‖ = 0`.
pub fn langevin_step_size(snr: f64, noise_sq_norm: f64, score_sq_norm: f64) -> f64 {
    if score_sq_norm == 0.0 {
        return 0.0;
    }
    2.0 * snr * snr * noise_sq_norm / score_sq_norm
}

/// `steps` Langevin corrections at time `t`, each channel with its own step
/// size: `G ← G + δ·s + √(2δ)·z`.
pub fn langevin_correct(
    state: &GraphState,
    t: f64,
    score: &dyn ScoreFn,
    snr: f64,
    steps: usize,
    rng: &mut Rng,
) -> Result<GraphState> {
    if !(snr > 0.0) {
        return Err(Error::contract(format!("corrector snr {snr} must be positive")));
    }
    let mut cur = state.clone();
    let pairs = pair_mask(&state.mask);
    let all_rows = vec![true; state.mask.len()];
    for _ in 0..steps {
        let (sx, sa) = score.scores(&cur, t)?;
        let (zx, za) = draw_noise(&cur, rng);
        let dx = langevin_step_size(snr, masked_sq_norm(&zx, &cur.mask), masked_sq_norm(&sx, &cur.mask));
        let sa_m = &sa * &pairs;
        let da = langevin_step_size(snr, masked_sq_norm(&za, &all_rows), masked_sq_norm(&sa_m, &all_rows));
        cur.x.scaled_add(dx, &sx);
        cur.x.scaled_add((2.0 * dx).sqrt(), &zx);
        cur.a.scaled_add(da, &sa_m);
        cur.a.scaled_add((2.0 * da).sqrt(), &za);
        apply_mask(&mut cur);
    }
    Ok(cur)
}

/// Whether the integrator injects noise. `Off` is a test hook that sets the
/// diffusion coefficient's stochastic term to zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Noise {
    On,
    Off,
}

/// Integrates from `(X_τ, A_τ)` at time `tau` back to 0.
///
/// The last predictor step injects no noise, and no corrector runs at
/// `t = 0` where the score is undefined.
pub fn integrate_reverse(
    start: &GraphState,
    tau: f64,
    score: &dyn ScoreFn,
    sde: &VpSde,
    cfg: &SolverConfig,
    noise: Noise,
    rng: &mut Rng,
) -> Result<GraphState> {
    cfg.validate()?;
    if !(sde.t_eps..=sde.t_max).contains(&tau) {
        return Err(Error::contract(format!(
            "reconstruction time {tau} outside [{}, {}]",
            sde.t_eps, sde.t_max
        )));
    }
    let n = cfg.num_steps(tau, sde.t_max);
    let dt = tau / n as f64;
    let corrector = cfg.kind.uses_corrector() && cfg.corrector_steps > 0;
    let mut state = start.clone();
    apply_mask(&mut state);

    for k in 0..n {
        let t = tau - k as f64 * dt;
        let last = k + 1 == n;
        if corrector && cfg.corrector_order == CorrectorOrder::Before {
            state = correct(&state, t, score, cfg, noise, rng)?;
        }
        let (sx, sa) = score.scores(&state, t)?;
        let step_rng = if noise == Noise::On && !last {
            Some(&mut *rng)
        } else {
            None
        };
        state = match cfg.kind {
            SolverKind::Em | SolverKind::EmLangevin => em_step(&state, t, dt, (&sx, &sa), sde, step_rng)?,
            SolverKind::Reverse | SolverKind::ReverseLangevin => {
                reverse_step(&state, t, dt, (&sx, &sa), sde, step_rng)?
            }
            SolverKind::S4 => unreachable!("rejected by validate"),
        };
        if corrector && cfg.corrector_order == CorrectorOrder::After && !last {
            state = correct(&state, t - dt, score, cfg, noise, rng)?;
        }
        if !state.is_finite() {
            return Err(Error::SolverDivergence { step: k, t });
        }
    }
    Ok(state)
}

fn correct(
    state: &GraphState,
    t: f64,
    score: &dyn ScoreFn,
    cfg: &SolverConfig,
    noise: Noise,
    rng: &mut Rng,
) -> Result<GraphState> {
    match noise {
        Noise::On => langevin_correct(state, t, score, cfg.corrector_snr, cfg.corrector_steps, rng),
        // with z ≡ 0 the step size is zero and the corrector is the identity
        Noise::Off => Ok(state.clone()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use ndarray::array;
    use rand::Rng as _;

    fn state(n: usize, f: usize, rng: &mut Rng) -> GraphState {
        let mask = vec![true; n];
        let x = Array2::from_shape_simple_fn((n, f), || rng.random_range(-1.0..1.0));
        let a = symmetric_noise(n, &mask, rng);
        GraphState { x, a, mask }
    }

    #[test]
    fn step_counts() {
        let cfg = SolverConfig::default();
        let taus = crate::scorer::reconstruction_levels(4, 1.0);
        let counts: Vec<_> = taus.iter().map(|t| cfg.num_steps(*t, 1.0)).collect();
        assert_eq!(counts, vec![20, 40, 60, 80]);
        assert_eq!(cfg.num_steps(0.005, 1.0), 1);
        assert_eq!(cfg.num_steps(1.0, 1.0), 100);
    }

    #[test]
    fn s4_is_rejected() {
        let err = SolverConfig::with_kind(SolverKind::S4).validate().unwrap_err();
        assert!(err.to_string().contains("s4"));
        let parsed: SolverKind = serde_json::from_str("\"reverse+langevin\"").unwrap();
        assert_eq!(parsed, SolverKind::ReverseLangevin);
    }

    #[test]
    fn em_step_without_score_or_noise_undoes_drift() {
        let sde = VpSde::default();
        let s = state(3, 2, &mut stream(1, &[]));
        let zero = (Array2::zeros((3, 2)), Array2::zeros((3, 3)));
        let next = em_step(&s, 0.5, 0.01, (&zero.0, &zero.1), &sde, None).unwrap();
        let factor = 1.0 + 0.5 * 0.55 * 0.01;
        assert!(next
            .x
            .iter()
            .zip(s.x.iter())
            .all(|(a, b)| (a - b * factor).abs() < 1e-15));
    }

    #[test]
    fn single_step_change_is_order_dt() {
        let sde = VpSde::default();
        let mut rng = stream(2, &[]);
        let s = state(4, 3, &mut rng);
        let sx = Array2::from_shape_simple_fn((4, 3), || rng.random_range(-1.0..1.0));
        let sa = symmetric_noise(4, &s.mask, &mut rng);
        let change = |dt: f64| {
            let next = em_step(&s, 0.4, dt, (&sx, &sa), &sde, None).unwrap();
            (&next.x - &s.x).iter().map(|v| v * v).sum::<f64>().sqrt()
        };
        let ratio = change(1e-2) / change(1e-3);
        assert!((ratio - 10.0).abs() < 1e-6, "ratio {ratio}");
    }

    #[test]
    fn reverse_step_matches_em_to_second_order() {
        let sde = VpSde::default();
        let mut rng = stream(3, &[]);
        let s = state(4, 2, &mut rng);
        let sx = Array2::from_shape_simple_fn((4, 2), || rng.random_range(-1.0..1.0));
        let sa = symmetric_noise(4, &s.mask, &mut rng);
        let gap = |dt: f64| {
            let a = em_step(&s, 0.7, dt, (&sx, &sa), &sde, None).unwrap();
            let b = reverse_step(&s, 0.7, dt, (&sx, &sa), &sde, None).unwrap();
            (&a.x - &b.x)
                .iter()
                .chain((&a.a - &b.a).iter())
                .fold(0.0f64, |m, v| m.max(v.abs()))
        };
        let ratio = gap(1e-2) / gap(5e-3);
        assert!((ratio - 4.0).abs() < 0.05, "ratio {ratio}");
        let zero = (Array2::zeros((4, 2)), Array2::zeros((4, 4)));
        let next = reverse_step(&s, 0.7, 0.01, (&zero.0, &zero.1), &sde, None).unwrap();
        let beta_i: f64 = sde.beta(0.7).unwrap() * 0.01;
        let factor = 2.0 - (1.0 - beta_i).sqrt();
        assert!(next
            .x
            .iter()
            .zip(s.x.iter())
            .all(|(a, b)| (a - b * factor).abs() < 1e-15));
        assert!(reverse_step(&s, 1.0, 1.5, (&zero.0, &zero.1), &sde, None).is_err());
    }

    #[test]
    fn steps_are_deterministic_and_keep_structure() {
        let sde = VpSde::default();
        let mut s = state(5, 2, &mut stream(4, &[]));
        s.mask[4] = false;
        apply_mask(&mut s);
        let sx = Array2::from_elem((5, 2), 0.3);
        let sa = Array2::from_shape_fn((5, 5), |(i, j)| if i == j { 0.0 } else { 0.1 });
        for step in [em_step, reverse_step] {
            let a = step(&s, 0.3, 0.01, (&sx, &sa), &sde, Some(&mut stream(7, &[]))).unwrap();
            let b = step(&s, 0.3, 0.01, (&sx, &sa), &sde, Some(&mut stream(7, &[]))).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.a, a.a.t());
            assert!((0..5).all(|i| a.a[[i, i]] == 0.0 && a.a[[4, i]] == 0.0));
            assert!(a.x.row(4).iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn langevin_step_size_formula() {
        assert_eq!(langevin_step_size(0.16, 4.0, 0.0), 0.0);
        let d1 = langevin_step_size(0.1, 3.0, 2.0);
        let d2 = langevin_step_size(0.2, 3.0, 2.0);
        assert!((d2 / d1 - 4.0).abs() < 1e-12);
        let s = state(3, 2, &mut stream(5, &[]));
        let out = langevin_correct(&s, 0.5, &ZeroScore, 0.16, 3, &mut stream(6, &[])).unwrap();
        assert_eq!(out, s);
    }

    #[test]
    fn zero_score_without_noise_inverts_linear_drift() {
        let sde = VpSde::default();
        let mut s = state(4, 3, &mut stream(8, &[]));
        s.mask = vec![true, true, true, false];
        apply_mask(&mut s);
        for kind in SolverKind::ALL {
            let cfg = SolverConfig::with_kind(kind);
            let out = integrate_reverse(&s, 1.0, &ZeroScore, &sde, &cfg, Noise::Off, &mut stream(9, &[])).unwrap();
            let gain = (0.5 * sde.beta_integral(1.0)).exp();
            for (a, b) in out.x.iter().zip(s.x.iter()) {
                if *b != 0.0 {
                    assert!((a / (b * gain) - 1.0).abs() < 0.02);
                } else {
                    assert_eq!(*a, 0.0);
                }
            }
        }
    }

    #[test]
    fn integration_keeps_symmetry_and_padding() {
        let sde = VpSde::default();
        let mut s = state(5, 2, &mut stream(10, &[]));
        s.mask[1] = false;
        apply_mask(&mut s);
        let pull = FnScore(|st: &GraphState, _t: f64| Ok((-&st.x, -&st.a)));
        for kind in SolverKind::ALL {
            let cfg = SolverConfig::with_kind(kind);
            let out = integrate_reverse(&s, 0.4, &pull, &sde, &cfg, Noise::On, &mut stream(11, &[])).unwrap();
            assert_eq!(out.a, out.a.t());
            assert!((0..5).all(|i| out.a[[i, i]] == 0.0 && out.a[[1, i]] == 0.0 && out.x[[1, i % 2]] == 0.0));
        }
        assert!(integrate_reverse(
            &s,
            0.0,
            &pull,
            &sde,
            &SolverConfig::default(),
            Noise::On,
            &mut stream(1, &[])
        )
        .is_err());
    }

    #[test]
    fn divergence_names_the_step() {
        let sde = VpSde::default();
        let s = GraphState {
            x: array![[1.0]],
            a: array![[0.0]],
            mask: vec![true],
        };
        let blow = FnScore(|st: &GraphState, _t: f64| Ok((st.x.mapv(|v| v * 1e300), st.a.clone())));
        let err = integrate_reverse(
            &s,
            0.5,
            &blow,
            &sde,
            &SolverConfig::default(),
            Noise::Off,
            &mut stream(1, &[]),
        )
        .unwrap_err();
        assert!(matches!(err, Error::SolverDivergence { step: 1, .. }), "{err}");
    }
}
