//! GRPO objective on caller-supplied log-probabilities.
//!
//! ```text
//! J = 1/G * sum_i [ mean_t min(r_it * A_i, clip(r_it, 1-eps, 1+eps) * A_i)
//!                   - beta * mean_t kl_it ]
//! r_it  = exp(logp_new - logp_old)
//! kl_it = exp(logp_ref - logp_new) - (logp_ref - logp_new) - 1
//! A_i   = (R_i - mean R) / std R      (population std, 0 when std < 1e-8)
//! ```
//!
//! Sums run in candidate order, then token order.

use serde::{Deserialize, Serialize};

pub const DEFAULT_EPSILON: f64 = 0.2;
pub const DEFAULT_BETA: f64 = 0.001;
pub const DEFAULT_RATIO_CEILING: f64 = 1.0e4;
pub const DEFAULT_GROUP_SIZE: usize = 8;
/// Below this population std all advantages are zero.
pub const STD_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GrpoError {
    #[error("empty reward group")]
    EmptyGroup,
    #[error("non-finite {what}: {value}")]
    NonFinite { what: &'static str, value: f64 },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("group_size {group_size} does not match {rewards} rewards")]
    GroupSize { group_size: usize, rewards: usize },
    #[error("candidate {candidate}: {reason}")]
    Candidate { candidate: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GrpoConfig {
    pub epsilon: f64,
    pub beta: f64,
    pub ratio_ceiling: f64,
}

impl Default for GrpoConfig {
    fn default() -> Self {
        GrpoConfig {
            epsilon: DEFAULT_EPSILON,
            beta: DEFAULT_BETA,
            ratio_ceiling: DEFAULT_RATIO_CEILING,
        }
    }
}

impl GrpoConfig {
    pub fn validate(&self) -> Result<(), GrpoError> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(GrpoError::InvalidConfig(format!(
                "epsilon must be in (0, 1), got {}",
                self.epsilon
            )));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(GrpoError::InvalidConfig(format!("beta must be >= 0, got {}", self.beta)));
        }
        if !(self.ratio_ceiling.is_finite() && self.ratio_ceiling >= 1.0 + self.epsilon) {
            return Err(GrpoError::InvalidConfig(format!(
                "ratio_ceiling must be finite and >= 1 + epsilon, got {}",
                self.ratio_ceiling
            )));
        }
        Ok(())
    }
}

/// Group-relative advantages.
pub fn group_advantages(rewards: &[f64]) -> Result<Vec<f64>, GrpoError> {
    if rewards.is_empty() {
        return Err(GrpoError::EmptyGroup);
    }
    if let Some(&value) = rewards.iter().find(|r| !r.is_finite()) {
        return Err(GrpoError::NonFinite { what: "reward", value });
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if std < STD_FLOOR {
        return Ok(vec![0.0; rewards.len()]);
    }
    Ok(rewards.iter().map(|r| (r - mean) / std).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ratio {
    pub value: f64,
    /// The raw ratio exceeded the ceiling and was replaced by it.
    pub clamped: bool,
}

pub fn importance_ratio(logp_new: f64, logp_old: f64, ceiling: f64) -> Result<Ratio, GrpoError> {
    for (what, value) in [("logp_new", logp_new), ("logp_old", logp_old)] {
        if !value.is_finite() {
            return Err(GrpoError::NonFinite { what, value });
        }
    }
    let raw = (logp_new - logp_old).exp();
    Ok(if raw > ceiling {
        Ratio {
            value: ceiling,
            clamped: true,
        }
    } else {
        Ratio {
            value: raw,
            clamped: false,
        }
    })
}

pub fn clipped_surrogate(ratio: f64, advantage: f64, epsilon: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - epsilon, 1.0 + epsilon);
    (ratio * advantage).min(clipped * advantage)
}

/// Derivative of [`clipped_surrogate`] with respect to the ratio.
pub fn clipped_surrogate_slope(ratio: f64, advantage: f64, epsilon: f64) -> f64 {
    let clipped = (advantage > 0.0 && ratio > 1.0 + epsilon) || (advantage < 0.0 && ratio < 1.0 - epsilon);
    if clipped {
        0.0
    } else {
        advantage
    }
}

pub fn kl_penalty(logp_new: f64, logp_ref: f64) -> f64 {
    let d = logp_ref - logp_new;
    // exp_m1 keeps precision near zero, where the estimator is ~ d^2 / 2
    (d.exp_m1() - d).max(0.0)
}

/// One group of candidates for a single prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrpoBatch {
    pub group_size: usize,
    pub rewards: Vec<f64>,
    pub logp_new: Vec<Vec<f64>>,
    pub logp_old: Vec<Vec<f64>>,
    pub logp_ref: Vec<Vec<f64>>,
    pub epsilon: f64,
    pub beta: f64,
    #[serde(default = "default_ceiling")]
    pub ratio_ceiling: f64,
}

fn default_ceiling() -> f64 {
    DEFAULT_RATIO_CEILING
}

impl GrpoBatch {
    pub fn new(
        rewards: Vec<f64>,
        logp_new: Vec<Vec<f64>>,
        logp_old: Vec<Vec<f64>>,
        logp_ref: Vec<Vec<f64>>,
        config: &GrpoConfig,
    ) -> Self {
        GrpoBatch {
            group_size: rewards.len(),
            rewards,
            logp_new,
            logp_old,
            logp_ref,
            epsilon: config.epsilon,
            beta: config.beta,
            ratio_ceiling: config.ratio_ceiling,
        }
    }

    pub fn config(&self) -> GrpoConfig {
        GrpoConfig {
            epsilon: self.epsilon,
            beta: self.beta,
            ratio_ceiling: self.ratio_ceiling,
        }
    }

    pub fn validate(&self) -> Result<(), GrpoError> {
        self.config().validate()?;
        if self.rewards.is_empty() {
            return Err(GrpoError::EmptyGroup);
        }
        if self.group_size != self.rewards.len() {
            return Err(GrpoError::GroupSize {
                group_size: self.group_size,
                rewards: self.rewards.len(),
            });
        }
        for (name, seqs) in [
            ("logp_new", &self.logp_new),
            ("logp_old", &self.logp_old),
            ("logp_ref", &self.logp_ref),
        ] {
            if seqs.len() != self.group_size {
                return Err(GrpoError::InvalidConfig(format!(
                    "{name} has {} candidates, expected {}",
                    seqs.len(),
                    self.group_size
                )));
            }
        }
        for i in 0..self.group_size {
            let bad = |reason: String| GrpoError::Candidate { candidate: i, reason };
            let t = self.logp_new[i].len();
            if t == 0 {
                return Err(bad("no tokens".into()));
            }
            if self.logp_old[i].len() != t || self.logp_ref[i].len() != t {
                return Err(bad(format!(
                    "token counts differ: new {t}, old {}, ref {}",
                    self.logp_old[i].len(),
                    self.logp_ref[i].len()
                )));
            }
            let all = self.logp_new[i]
                .iter()
                .chain(&self.logp_old[i])
                .chain(&self.logp_ref[i]);
            if let Some(v) = all.into_iter().find(|v| !v.is_finite()) {
                return Err(bad(format!("non-finite log-probability {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrpoTerms {
    pub advantages: Vec<f64>,
    pub per_candidate_surrogate: Vec<f64>,
    pub per_candidate_kl: Vec<f64>,
    pub objective: f64,
    /// Number of tokens whose ratio hit the ceiling.
    pub clamped_ratios: usize,
}

pub fn grpo_objective(batch: &GrpoBatch) -> Result<GrpoTerms, GrpoError> {
    batch.validate()?;
    let advantages = group_advantages(&batch.rewards)?;
    let g = batch.group_size;
    let mut surrogate = Vec::with_capacity(g);
    let mut kl = Vec::with_capacity(g);
    let mut clamped_ratios = 0;
    for i in 0..g {
        let t = batch.logp_new[i].len() as f64;
        let (mut s, mut k) = (0.0, 0.0);
        for j in 0..batch.logp_new[i].len() {
            let ratio = importance_ratio(batch.logp_new[i][j], batch.logp_old[i][j], batch.ratio_ceiling)?;
            clamped_ratios += usize::from(ratio.clamped);
            s += clipped_surrogate(ratio.value, advantages[i], batch.epsilon);
            k += kl_penalty(batch.logp_new[i][j], batch.logp_ref[i][j]);
        }
        surrogate.push(s / t);
        kl.push(k / t);
    }
    let mut objective = 0.0;
    for i in 0..g {
        objective += surrogate[i] - batch.beta * kl[i];
    }
    objective /= g as f64;
    Ok(GrpoTerms {
        advantages,
        per_candidate_surrogate: surrogate,
        per_candidate_kl: kl,
        objective,
        clamped_ratios,
    })
}

/// Gradient of the objective with respect to every `logp_new` entry.
///
/// Advantages and `logp_old`/`logp_ref` are treated as constants.
/// Clamped and clipped tokens contribute no surrogate gradient.
pub fn objective_gradient(batch: &GrpoBatch) -> Result<Vec<Vec<f64>>, GrpoError> {
    batch.validate()?;
    let advantages = group_advantages(&batch.rewards)?;
    let g = batch.group_size as f64;
    let mut grad = Vec::with_capacity(batch.group_size);
    for i in 0..batch.group_size {
        let t = batch.logp_new[i].len() as f64;
        let mut row = Vec::with_capacity(batch.logp_new[i].len());
        for j in 0..batch.logp_new[i].len() {
            let (new, old, rf) = (batch.logp_new[i][j], batch.logp_old[i][j], batch.logp_ref[i][j]);
            let ratio = importance_ratio(new, old, batch.ratio_ceiling)?;
            let d_surr = if ratio.clamped {
                0.0
            } else {
                ratio.value * clipped_surrogate_slope(ratio.value, advantages[i], batch.epsilon)
            };
            let d_kl = -(rf - new).exp_m1();
            row.push((d_surr - batch.beta * d_kl) / (g * t));
        }
        grad.push(row);
    }
    Ok(grad)
}
