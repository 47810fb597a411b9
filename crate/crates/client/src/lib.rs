//! Thin async client for the session API, plus a driver that answers every
//! batch with a [`LabelProvider`].

use rhumo_core::api::{
    BatchResponse, CreateSessionRequest, CreateSessionResponse, ErrorBody, PairLabel, StatusSnapshot,
    SubmitLabelsRequest,
};
use rhumo_core::oracle::LabelProvider;
use rhumo_core::selection::StepRecord;
use serde::de::DeserializeOwned;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("transport: {0}")]
    Transport(#[from] reqwest::Error),

    #[error("server answered {status} {}: {}", body.code, body.message)]
    Api { status: u16, body: ErrorBody },

    #[error("labeler failed: {0}")]
    Labeler(#[from] rhumo_core::Error),
}

impl ClientError {
    /// Machine-readable error code reported by the server, if any.
    pub fn code(&self) -> Option<&str> {
        match self {
            ClientError::Api { body, .. } => Some(&body.code),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, ClientError>;

#[derive(Debug, Clone)]
pub struct Client {
    http: reqwest::Client,
    base: String,
}

/// What a driven session ended with.
#[derive(Debug, Clone, PartialEq)]
pub struct DriveOutcome {
    pub status: StatusSnapshot,
    /// Snapshot returned after each submitted batch.
    pub history: Vec<StatusSnapshot>,
}

impl Client {
    /// `base` is the server root, e.g. `http://127.0.0.1:8080`.
    pub fn new(base: impl Into<String>) -> Self {
        Client {
            http: reqwest::Client::new(),
            base: base.into().trim_end_matches('/').to_string(),
        }
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.base, path)
    }

    async fn decode<T: DeserializeOwned>(resp: reqwest::Response) -> Result<T> {
        let status = resp.status();
        if status.is_success() {
            return Ok(resp.json().await?);
        }
        let text = resp.text().await?;
        let body = serde_json::from_str(&text).unwrap_or(ErrorBody {
            code: "unknown".into(),
            message: text,
        });
        Err(ClientError::Api {
            status: status.as_u16(),
            body,
        })
    }

    pub async fn create_session(&self, req: &CreateSessionRequest) -> Result<CreateSessionResponse> {
        Self::decode(self.http.post(self.url("/sessions")).json(req).send().await?).await
    }

    pub async fn next_batch(&self, session: &str) -> Result<BatchResponse> {
        Self::decode(self.http.get(self.url(&format!("/sessions/{session}/batch"))).send().await?).await
    }

    pub async fn submit_labels(&self, session: &str, labels: Vec<PairLabel>) -> Result<StatusSnapshot> {
        let body = SubmitLabelsRequest { labels };
        let url = self.url(&format!("/sessions/{session}/labels"));
        Self::decode(self.http.post(url).json(&body).send().await?).await
    }

    pub async fn status(&self, session: &str) -> Result<StatusSnapshot> {
        Self::decode(self.http.get(self.url(&format!("/sessions/{session}/status"))).send().await?).await
    }

    pub async fn run_log(&self, session: &str) -> Result<Vec<StepRecord>> {
        Self::decode(self.http.get(self.url(&format!("/sessions/{session}/log"))).send().await?).await
    }

    /// Fetches and answers batches until the session reports done.
    pub async fn drive(&self, session: &str, labeler: &mut dyn LabelProvider) -> Result<DriveOutcome> {
        let mut history = Vec::new();
        loop {
            let batch = self.next_batch(session).await?;
            if batch.done {
                return Ok(DriveOutcome {
                    status: batch.status,
                    history,
                });
            }
            let ids: Vec<u64> = batch.pairs.iter().map(|p| p.pair_id).collect();
            let answers = labeler.label(&ids)?;
            let labels = ids
                .into_iter()
                .zip(answers)
                .map(|(pair_id, matching)| PairLabel { pair_id, matching })
                .collect();
            history.push(self.submit_labels(session, labels).await?);
        }
    }
}
