//! Variance-preserving forward diffusion.
//!
//! `dG = -½ β(t) G dt + √β(t) dw` with the linear schedule
//! `β(t) = β_min + (β_max − β_min) t`. The transition kernel is Gaussian,
//! `G_t | G_0 ~ N(m_t G_0, σ_t² I)`, with
//!
//! ```text
//! B(t)  = ∫₀ᵗ β(s) ds = β_min t + (β_max − β_min) t² / 2
//! m_t   = exp(−B(t) / 2)
//! σ_t²  = 1 − exp(−B(t))
//! ```
//!
//! so a noisy graph at any time is one Gaussian draw away from the clean one.

use ndarray::Array2;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VpSde {
    pub beta_min: f64,
    pub beta_max: f64,
    pub t_max: f64,
    /// Smallest time at which scores and SNR are evaluated.
    pub t_eps: f64,
}

impl Default for VpSde {
    fn default() -> Self {
        Self {
            beta_min: 0.1,
            beta_max: 1.0,
            t_max: 1.0,
            t_eps: 1e-5,
        }
    }
}

/// A noisy sample together with the standard-normal draw that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation {
    pub noisy: Array2<f64>,
    pub noise: Array2<f64>,
    pub t: f64,
}

impl VpSde {
    pub fn validate(&self) -> Result<()> {
        let ok = self.beta_min > 0.0
            && self.beta_min <= self.beta_max
            && self.t_max > 0.0
            && self.t_eps > 0.0
            && self.t_eps < self.t_max;
        if !ok {
            return Err(Error::Config(format!(
                "invalid VP schedule: need 0 < beta_min <= beta_max, 0 < t_eps < t_max; got {self:?}"
            )));
        }
        Ok(())
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !(0.0..=self.t_max).contains(&t) {
            return Err(Error::contract(format!("time {t} outside [0, {}]", self.t_max)));
        }
        Ok(())
    }

    fn check_positive_time(&self, t: f64) -> Result<()> {
        self.check_time(t)?;
        if t < self.t_eps {
            return Err(Error::contract(format!("time {t} below t_eps = {}", self.t_eps)));
        }
        Ok(())
    }

    pub fn beta(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        Ok(self.beta_unchecked(t))
    }

    pub(crate) fn beta_unchecked(&self, t: f64) -> f64 {
        self.beta_min + (self.beta_max - self.beta_min) * t
    }

    /// `∫₀ᵗ β(s) ds`.
    pub fn beta_integral(&self, t: f64) -> f64 {
        self.beta_min * t + 0.5 * (self.beta_max - self.beta_min) * t * t
    }

    /// Signal decay `m_t` and noise scale `σ_t`.
    pub fn moments(&self, t: f64) -> (f64, f64) {
        let b = self.beta_integral(t);
        let m = (-0.5 * b).exp();
        // -expm1(-b) keeps σ accurate for tiny t
        let sigma = (-(-b).exp_m1()).max(0.0).sqrt();
        (m, sigma)
    }

    /// Signal-to-noise ratio `m_t² / σ_t²`.
    pub fn snr(&self, t: f64) -> Result<f64> {
        self.check_positive_time(t)?;
        let (m, s) = self.moments(t);
        Ok(m * m / (s * s))
    }

    /// VP drift `f(x, t) = -½ β(t) x`.
    pub fn drift(&self, x: &Array2<f64>, t: f64) -> Array2<f64> {
        x * (-0.5 * self.beta_unchecked(t))
    }

    /// Diffusion coefficient `g(t) = √β(t)`.
    pub fn diffusion(&self, t: f64) -> f64 {
        self.beta_unchecked(t).sqrt()
    }

    /// `X_t = m_t X_0 + σ_t Z` with `Z` i.i.d. standard normal on real rows.
    pub fn perturb_features(&self, x0: &Array2<f64>, mask: &[bool], t: f64, rng: &mut Rng) -> Result<Perturbation> {
        self.check_time(t)?;
        if mask.len() != x0.nrows() {
            return Err(Error::shape(format!("mask of length {}", x0.nrows()), mask.len()));
        }
        let noise = feature_noise(x0.dim(), mask, rng);
        Ok(self.apply_noise(x0, noise, t))
    }

    /// `A_t = m_t A_0 + σ_t Z` with `Z` drawn on the strict upper triangle of
    /// the real block and mirrored, so `A_t` stays symmetric with zero diagonal.
    pub fn perturb_adjacency(&self, a0: &Array2<f64>, mask: &[bool], t: f64, rng: &mut Rng) -> Result<Perturbation> {
        self.check_time(t)?;
        let n = a0.nrows();
        if a0.ncols() != n || mask.len() != n {
            return Err(Error::shape(
                format!("({n}, {n}) with mask {n}"),
                format!("{:?}", a0.dim()),
            ));
        }
        for i in 0..n {
            if a0[[i, i]] != 0.0 {
                return Err(Error::contract("adjacency has a nonzero diagonal"));
            }
            for j in 0..i {
                if a0[[i, j]] != a0[[j, i]] {
                    return Err(Error::contract(format!("adjacency asymmetric at ({i}, {j})")));
                }
            }
        }
        let noise = symmetric_noise(n, mask, rng);
        Ok(self.apply_noise(a0, noise, t))
    }

    fn apply_noise(&self, clean: &Array2<f64>, noise: Array2<f64>, t: f64) -> Perturbation {
        let (m, s) = self.moments(t);
        let noisy = clean * m + &noise * s;
        Perturbation { noisy, noise, t }
    }

    /// Conditional score `∇ log p_{0t}(noisy | clean) = −(noisy − m_t clean) / σ_t²`.
    ///
    /// Entries where `clean` and the noise are both zero (padding, the
    /// adjacency diagonal) come out exactly zero.
    pub fn score_target(&self, p: &Perturbation, clean: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_positive_time(p.t)?;
        if p.noisy.dim() != clean.dim() {
            return Err(Error::shape(
                format!("{:?}", p.noisy.dim()),
                format!("{:?}", clean.dim()),
            ));
        }
        let (m, s) = self.moments(p.t);
        Ok((&p.noisy - &(clean * m)) * (-1.0 / (s * s)))
    }
}

/// Standard-normal matrix, zero on masked-out rows.
pub fn feature_noise(dim: (usize, usize), mask: &[bool], rng: &mut Rng) -> Array2<f64> {
    let mut z = Array2::zeros(dim);
    for (mut row, m) in z.outer_iter_mut().zip(mask) {
        if *m {
            row.iter_mut().for_each(|v| *v = StandardNormal.sample(rng));
        }
    }
    z
}

/// Symmetric standard-normal matrix with zero diagonal, zero outside the real block.
pub fn symmetric_noise(n: usize, mask: &[bool], rng: &mut Rng) -> Array2<f64> {
    let mut z = Array2::zeros((n, n));
    for i in 0..n {
        if !mask[i] {
            continue;
        }
        for j in (i + 1)..n {
            if mask[j] {
                let v: f64 = StandardNormal.sample(rng);
                z[[i, j]] = v;
                z[[j, i]] = v;
            }
        }
    }
    z
}
