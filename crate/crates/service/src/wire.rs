//! Request and response bodies.

use serde::{Deserialize, Serialize};
use sqlreward_core::reward::{RewardOverrides, ScoredResponse};
use sqlreward_core::LengthStats;

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RewardItem {
    pub task_id: String,
    pub response_text: String,
    #[serde(default)]
    pub lengths: Option<LengthStats>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RewardsRequest {
    pub items: Vec<RewardItem>,
    #[serde(default)]
    pub config: Option<RewardOverrides>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemError {
    pub kind: String,
    pub message: String,
    pub retryable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RewardItemResult {
    Scored(ScoredResponse),
    Error { error: ItemError },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RewardsResponse {
    pub items: Vec<RewardItemResult>,
    pub latency_ms: f64,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct AdvantageGroup {
    pub rewards: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct AdvantagesRequest {
    pub groups: Vec<AdvantageGroup>,
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub beta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AdvantageResult {
    Ok { advantages: Vec<f64> },
    Error { error: ItemError },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdvantagesResponse {
    pub groups: Vec<AdvantageResult>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SelectRequest {
    pub task_id: String,
    pub candidates: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: ItemError,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
}
