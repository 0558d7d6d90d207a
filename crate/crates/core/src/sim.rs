//! Tabular softmax policy trained with the GRPO objective.
//!
//! Each task owns a fixed pool of authored responses. The policy is one
//! logit per pool entry; an episode is a single draw, so the log-probability
//! of a response is `log_softmax(logits)[a]` and the objective gradient
//! flows through it exactly. Rewards come from the real reward engine run
//! once per pool entry.

use std::collections::BTreeMap;
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::grpo::{grpo_objective, objective_gradient, GrpoBatch, GrpoConfig, GrpoError, DEFAULT_GROUP_SIZE};
use crate::reward::{RewardBand, RewardEngine, RewardError};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing pools: {0}")]
    Json(#[from] serde_json::Error),
    #[error("pool for unknown task `{0}`")]
    UnknownTask(String),
    #[error("pool for `{0}` is empty")]
    EmptyPool(String),
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error(transparent)]
    Grpo(#[from] GrpoError),
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolCandidate {
    pub kind: String,
    pub response: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolTask {
    pub task_id: String,
    pub candidates: Vec<PoolCandidate>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolFile {
    pub tasks: Vec<PoolTask>,
}

impl PoolFile {
    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path).map_err(|source| SimError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// A pool with every candidate's reward precomputed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPool {
    pub task_id: String,
    pub kinds: Vec<String>,
    pub rewards: Vec<f64>,
    pub bands: Vec<RewardBand>,
}

impl ScoredPool {
    /// Indices whose reward is in the correct band.
    pub fn correct(&self) -> Vec<usize> {
        (0..self.bands.len())
            .filter(|&i| self.bands[i] == RewardBand::Correct)
            .collect()
    }
}

/// Scores every pool entry against its task's gold result.
pub fn score_pools(engine: &RewardEngine, corpus: &Corpus, pools: &PoolFile) -> Result<Vec<ScoredPool>, SimError> {
    let mut out = Vec::with_capacity(pools.tasks.len());
    for p in &pools.tasks {
        let task = corpus
            .get(&p.task_id)
            .ok_or_else(|| SimError::UnknownTask(p.task_id.clone()))?;
        if p.candidates.is_empty() {
            return Err(SimError::EmptyPool(p.task_id.clone()));
        }
        let responses: Vec<String> = p.candidates.iter().map(|c| c.response.clone()).collect();
        let scored = engine.score_group(&responses, task, engine.config())?;
        let bands = scored
            .iter()
            .map(|s| s.reward.band().expect("reward outside the partition"))
            .collect();
        out.push(ScoredPool {
            task_id: p.task_id.clone(),
            kinds: p.candidates.iter().map(|c| c.kind.clone()).collect(),
            rewards: scored.iter().map(|s| s.reward.total).collect(),
            bands,
        });
    }
    Ok(out)
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

#[derive(Debug, Clone)]
pub struct ToyPolicy {
    pub logits: Vec<Vec<f64>>,
    pub learning_rate: f64,
    pub seed: u64,
    rng: ChaCha8Rng,
}

impl ToyPolicy {
    /// Uniform policy over pools of the given sizes.
    pub fn uniform(pool_sizes: &[usize], learning_rate: f64, seed: u64) -> Self {
        Self::from_logits(pool_sizes.iter().map(|&n| vec![0.0; n]).collect(), learning_rate, seed)
    }

    pub fn from_logits(logits: Vec<Vec<f64>>, learning_rate: f64, seed: u64) -> Self {
        ToyPolicy {
            logits,
            learning_rate,
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn probs(&self, task: usize) -> Vec<f64> {
        softmax(&self.logits[task])
    }

    pub fn log_probs(&self, task: usize) -> Vec<f64> {
        log_softmax(&self.logits[task])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub action: usize,
    pub logp: f64,
}

/// Draws `g` independent responses for `task`.
pub fn rollout(policy: &mut ToyPolicy, task: usize, g: usize) -> Vec<Sample> {
    let probs = policy.probs(task);
    let logp = policy.log_probs(task);
    let dist = WeightedIndex::new(&probs).expect("softmax weights are valid");
    (0..g)
        .map(|_| {
            let action = dist.sample(&mut policy.rng);
            Sample {
                action,
                logp: logp[action],
            }
        })
        .collect()
}

/// Objective for one group and its gradient with respect to the logits.
///
/// `old_logp` are the sampling-time log-probabilities of `actions`;
/// `ref_logits` define the KL reference policy.
pub fn group_objective(
    logits: &[f64],
    ref_logits: &[f64],
    actions: &[usize],
    old_logp: &[f64],
    rewards: &[f64],
    config: &GrpoConfig,
) -> Result<(f64, Vec<f64>), GrpoError> {
    let logp = log_softmax(logits);
    let probs = softmax(logits);
    let logp_ref = log_softmax(ref_logits);
    let single = |v: Vec<f64>| v.into_iter().map(|x| vec![x]).collect::<Vec<_>>();
    let batch = GrpoBatch::new(
        rewards.to_vec(),
        single(actions.iter().map(|&a| logp[a]).collect()),
        single(old_logp.to_vec()),
        single(actions.iter().map(|&a| logp_ref[a]).collect()),
        config,
    );
    let objective = grpo_objective(&batch)?.objective;
    let d_logp = objective_gradient(&batch)?;
    let mut grad = vec![0.0; logits.len()];
    for (i, &a) in actions.iter().enumerate() {
        // d log pi_a / d theta_k = [a == k] - pi_k
        let g = d_logp[i][0];
        for (k, gk) in grad.iter_mut().enumerate() {
            *gk += g * (f64::from(u8::from(a == k)) - probs[k]);
        }
    }
    Ok((objective, grad))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub steps: usize,
    pub group_size: usize,
    pub learning_rate: f64,
    /// Gradient steps taken on each rollout before resampling.
    pub updates_per_rollout: usize,
    pub seed: u64,
    pub grpo: GrpoConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            steps: 500,
            group_size: DEFAULT_GROUP_SIZE,
            learning_rate: 0.5,
            updates_per_rollout: 1,
            seed: 7,
            grpo: GrpoConfig::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        self.grpo.validate()?;
        if self.group_size == 0 || self.updates_per_rollout == 0 {
            return Err(SimError::InvalidConfig(
                "group_size and updates_per_rollout must be >= 1".into(),
            ));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(SimError::InvalidConfig("learning_rate must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BandCounts {
    pub failed: usize,
    pub wrong: usize,
    pub correct: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub step: usize,
    /// Mean total reward over this step's samples.
    pub mean_reward: f64,
    /// Reward expected under the updated policy, averaged over tasks.
    pub expected_reward: f64,
    pub bands: BandCounts,
    pub objective: f64,
    /// Probability of a correct candidate per task after the update.
    pub correct_prob: BTreeMap<String, f64>,
}

/// One rollout per task followed by gradient ascent on each group.
pub fn train_step(
    policy: &mut ToyPolicy,
    pools: &[ScoredPool],
    ref_logits: &[Vec<f64>],
    config: &SimConfig,
    step: usize,
) -> Result<StepMetrics, SimError> {
    let mut rewards_sum = 0.0;
    let mut n = 0usize;
    let mut bands = BandCounts::default();
    let mut objective = 0.0;
    for (t, pool) in pools.iter().enumerate() {
        let samples = rollout(policy, t, config.group_size);
        let actions: Vec<usize> = samples.iter().map(|s| s.action).collect();
        let old: Vec<f64> = samples.iter().map(|s| s.logp).collect();
        let rewards: Vec<f64> = actions.iter().map(|&a| pool.rewards[a]).collect();
        for &a in &actions {
            rewards_sum += pool.rewards[a];
            n += 1;
            match pool.bands[a] {
                RewardBand::Failed => bands.failed += 1,
                RewardBand::Wrong => bands.wrong += 1,
                RewardBand::Correct => bands.correct += 1,
            }
        }
        for u in 0..config.updates_per_rollout {
            let (obj, grad) = group_objective(&policy.logits[t], &ref_logits[t], &actions, &old, &rewards, &config.grpo)?;
            if u == 0 {
                objective += obj;
            }
            for (l, g) in policy.logits[t].iter_mut().zip(grad) {
                *l += policy.learning_rate * g;
            }
        }
    }
    let (expected_reward, correct_prob) = evaluate_policy(policy, pools);
    Ok(StepMetrics {
        step,
        mean_reward: rewards_sum / n.max(1) as f64,
        expected_reward,
        bands,
        objective: objective / pools.len().max(1) as f64,
        correct_prob,
    })
}

/// Expected reward averaged over tasks and per-task correct probability.
pub fn evaluate_policy(policy: &ToyPolicy, pools: &[ScoredPool]) -> (f64, BTreeMap<String, f64>) {
    let mut expected = 0.0;
    let mut correct = BTreeMap::new();
    for (t, pool) in pools.iter().enumerate() {
        let p = policy.probs(t);
        expected += p.iter().zip(&pool.rewards).map(|(p, r)| p * r).sum::<f64>();
        correct.insert(pool.task_id.clone(), pool.correct().iter().map(|&i| p[i]).sum());
    }
    (expected / pools.len().max(1) as f64, correct)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub steps: usize,
    pub seed: u64,
    pub first_window_mean: f64,
    pub last_window_mean: f64,
    pub final_expected_reward: f64,
    pub final_correct_prob: BTreeMap<String, f64>,
    /// Euclidean distance of the final logits from the reference.
    pub drift: f64,
}

/// Window used for the first/last mean reward comparison.
pub const SUMMARY_WINDOW: usize = 50;

/// Trains from a uniform policy, which is also the KL reference.
/// `on_step` sees each step's metrics as they are produced.
pub fn simulate(
    pools: &[ScoredPool],
    config: &SimConfig,
    mut on_step: impl FnMut(&StepMetrics),
) -> Result<(ToyPolicy, SimSummary), SimError> {
    config.validate()?;
    let sizes: Vec<usize> = pools.iter().map(|p| p.rewards.len()).collect();
    let mut policy = ToyPolicy::uniform(&sizes, config.learning_rate, config.seed);
    let reference = policy.logits.clone();
    let mut means = Vec::with_capacity(config.steps);
    for step in 1..=config.steps {
        let m = train_step(&mut policy, pools, &reference, config, step)?;
        means.push(m.mean_reward);
        on_step(&m);
    }
    let window = SUMMARY_WINDOW.min(means.len());
    let avg = |s: &[f64]| if s.is_empty() { 0.0 } else { s.iter().sum::<f64>() / s.len() as f64 };
    let (final_expected_reward, final_correct_prob) = evaluate_policy(&policy, pools);
    let drift = policy
        .logits
        .iter()
        .flatten()
        .zip(reference.iter().flatten())
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let summary = SimSummary {
        steps: config.steps,
        seed: config.seed,
        first_window_mean: avg(&means[..window]),
        last_window_mean: avg(&means[means.len() - window..]),
        final_expected_reward,
        final_correct_prob,
        drift,
    };
    Ok((policy, summary))
}
