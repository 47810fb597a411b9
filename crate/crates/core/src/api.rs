//! Wire types shared by the HTTP service and its client.

use serde::{Deserialize, Serialize};

use crate::datamodel::{AttrValue, PairId, QualityRequirement};
use crate::ingest::DatasetSpec;
use crate::selection::EngineConfig;
use crate::synth::SynthSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Sampling,
    Selecting,
    Done,
}

/// Read-only view of a run's progress.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusSnapshot {
    pub phase: Phase,
    pub done: bool,
    pub success: bool,
    pub precision_lower: f64,
    pub recall_lower: f64,
    pub alpha: f64,
    pub beta: f64,
    pub theta: f64,
    pub sampling_cost: usize,
    pub dh_cost: usize,
    pub human_cost: usize,
    pub iterations: usize,
    pub interactions: usize,
    pub pending: usize,
    pub workload_size: usize,
    pub remaining_minus: usize,
    pub remaining_plus: usize,
}

/// Where a session's workload comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum WorkloadSource {
    /// Dataset files named by a spec, resolved on the server.
    Dataset { spec: DatasetSpec },
    /// A generated workload.
    Synthetic { spec: SynthSpec },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateSessionRequest {
    pub source: WorkloadSource,
    pub requirement: QualityRequirement,
    #[serde(default)]
    pub config: EngineConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateSessionResponse {
    pub session_id: String,
    pub status: StatusSnapshot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordView {
    pub id: String,
    pub attributes: Vec<(String, AttrValue)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchPair {
    pub pair_id: PairId,
    pub metric: f64,
    pub left: RecordView,
    pub right: RecordView,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchResponse {
    pub done: bool,
    pub pairs: Vec<BatchPair>,
    pub status: StatusSnapshot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairLabel {
    pub pair_id: PairId,
    pub matching: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmitLabelsRequest {
    pub labels: Vec<PairLabel>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}
