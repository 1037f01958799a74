//! Bayesian linear probit regression with a fully factorized Gaussian
//! posterior over the weights.
//!
//! Observations are folded in by assumed-density filtering: after each
//! probit observation the exact (non-Gaussian) posterior is projected back
//! onto independent Gaussians by matching first and second moments. The
//! probit noise has unit variance, so `P(r | f) = Φ(r · Σ_{i∈f} w_i)`.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::normal;

pub const PRIOR_MEAN: f64 = 0.0;
pub const PRIOR_VARIANCE: f64 = 1.0;

/// Binary reward. `Success` is `R = +1`, `Failure` is `R = -1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Reward {
    Success,
    Failure,
}

impl Reward {
    pub fn sign(self) -> f64 {
        match self {
            Reward::Success => 1.0,
            Reward::Failure => -1.0,
        }
    }

    /// Probability-scale coding: 1 for success, 0 for failure.
    pub fn value(self) -> f64 {
        match self {
            Reward::Success => 1.0,
            Reward::Failure => 0.0,
        }
    }

    pub fn from_bool(success: bool) -> Self {
        if success {
            Reward::Success
        } else {
            Reward::Failure
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub features: FeatureVector,
    pub reward: Reward,
}

impl Observation {
    pub fn new(features: FeatureVector, reward: Reward) -> Self {
        Self { features, reward }
    }
}

/// A single draw of every weight from the posterior.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSample(pub Vec<f64>);

impl WeightSample {
    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// Independent Gaussian posterior `N(means[i], variances[i])` per weight.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPosterior {
    means: Vec<f64>,
    variances: Vec<f64>,
}

impl GaussianPosterior {
    /// The `N(0, 1)` prior over `dim` weights.
    pub fn prior(dim: usize) -> Self {
        Self {
            means: vec![PRIOR_MEAN; dim],
            variances: vec![PRIOR_VARIANCE; dim],
        }
    }

    /// Builds a posterior from explicit moments. Variances must be finite and
    /// lie in `(0, PRIOR_VARIANCE]`; the degenerate zero variance is allowed
    /// so that point estimates can be wrapped without sampling noise.
    pub fn from_parts(means: Vec<f64>, variances: Vec<f64>) -> Result<Self> {
        if means.len() != variances.len() {
            return Err(Error::DimensionMismatch {
                expected: means.len(),
                got: variances.len(),
            });
        }
        if let Some(m) = means.iter().find(|m| !m.is_finite()) {
            return Err(Error::NonFinite(format!("mean {m}")));
        }
        if let Some(v) = variances
            .iter()
            .find(|v| !v.is_finite() || **v < 0.0 || **v > PRIOR_VARIANCE)
        {
            return Err(Error::InvalidArgument(format!(
                "variance {v} outside [0, {PRIOR_VARIANCE}]"
            )));
        }
        Ok(Self { means, variances })
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    fn check_dim(&self, f: &FeatureVector) -> Result<()> {
        if f.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: f.dim(),
            });
        }
        Ok(())
    }

    fn moments(&self, f: &FeatureVector) -> (f64, f64) {
        f.indices().iter().fold((0.0, 0.0), |(m, s), &i| {
            (m + self.means[i], s + self.variances[i])
        })
    }

    /// Posterior predictive success probability `Φ(m / sqrt(1 + s²))`.
    pub fn predict(&self, f: &FeatureVector) -> Result<f64> {
        self.check_dim(f)?;
        let (m, s2) = self.moments(f);
        Ok(normal::cdf(m / (1.0 + s2).sqrt()))
    }

    /// Draws every coordinate independently from its marginal.
    pub fn sample_weights<R: Rng + ?Sized>(&self, rng: &mut R) -> WeightSample {
        WeightSample(
            self.means
                .iter()
                .zip(&self.variances)
                .map(|(&m, &v)| {
                    let z: f64 = rng.sample(StandardNormal);
                    m + v.sqrt() * z
                })
                .collect(),
        )
    }

    /// Moment-matched update with one observation. Only active coordinates
    /// change; on error the posterior is left untouched.
    pub fn update(&mut self, obs: &Observation) -> Result<()> {
        self.check_dim(&obs.features)?;
        let (m, s2) = self.moments(&obs.features);
        let total_var = 1.0 + s2;
        let total_sd = total_var.sqrt();
        let r = obs.reward.sign();
        let t = r * m / total_sd;
        let vt = normal::v(t);
        let wt = normal::w(t);
        if !(vt.is_finite() && wt.is_finite() && total_sd.is_finite()) {
            return Err(Error::NonFinite(format!("t = {t}, v = {vt}, w = {wt}")));
        }
        let mean_step = r * vt / total_sd;
        let var_step = wt / total_var;
        for &i in obs.features.indices() {
            let var = self.variances[i];
            self.means[i] += var * mean_step;
            self.variances[i] = var * (1.0 - var * var_step);
        }
        Ok(())
    }

    /// Sequential application of [`GaussianPosterior::update`] in order.
    pub fn batch_update<'a, I>(&mut self, batch: I) -> Result<()>
    where
        I: IntoIterator<Item = &'a Observation>,
    {
        for obs in batch {
            self.update(obs)?;
        }
        Ok(())
    }

    /// Returns the updated copy, leaving `self` as the prior snapshot.
    pub fn updated(&self, obs: &Observation) -> Result<Self> {
        let mut next = self.clone();
        next.update(obs)?;
        Ok(next)
    }
}

/// `Σ ln Φ(r · Σ_{i∈f} w_i)` at point weights.
pub fn log_likelihood(weights: &[f64], data: &[Observation]) -> f64 {
    data.iter()
        .map(|obs| {
            let s: f64 = obs.features.indices().iter().map(|&i| weights[i]).sum();
            normal::log_cdf(obs.reward.sign() * s)
        })
        .sum()
}
