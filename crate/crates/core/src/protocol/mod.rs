//! Engine/trainer wire protocol and the trainer endpoint abstraction.
//!
//! Messages are single-line JSON objects terminated by `\n`, each carrying
//! `"proto": 1`. The engine writes [`EvaluateRequest`]s to the trainer and
//! reads [`EvaluateResponse`]s back; responses are correlated by
//! `request_id` and may arrive in any order. See `PROTOCOL.md` at the
//! repository root for the field-level schema.

pub mod serve;
mod stream;
mod surrogate;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use stream::{ProcessTrainer, StreamStats, StreamTrainer};
pub use surrogate::{MaskMatchSurrogate, SphereSurrogate};

pub const PROTO_VERSION: u32 = 1;
pub const LOSS_CROSS_ENTROPY: &str = "categorical_crossentropy";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("malformed message ({reason}): {payload:?}")]
    Malformed { payload: String, reason: String },
    #[error("protocol violation: {0}")]
    Violation(String),
    #[error("field {0} is not a finite number")]
    NonFinite(&'static str),
    #[error("unsupported protocol version {0}")]
    Version(u32),
}

/// Reference to a fold in a plan file distributed to the trainer ahead of time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldRef {
    pub plan: String,
    pub fold: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluateRequest {
    pub proto: u32,
    pub request_id: String,
    pub genotype_id: String,
    /// Effective per-block learning rate; 0 for frozen blocks.
    pub block_rates: Vec<f64>,
    /// 1 = block is fine-tuned, 0 = block is frozen.
    pub frozen_mask: Vec<u8>,
    pub fold_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_sample_ids: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fold_ref: Option<FoldRef>,
    pub seed: u64,
    pub max_epochs: u32,
    pub patience: u32,
    pub loss: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluateResponse {
    pub proto: u32,
    pub request_id: String,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation_accuracy: Option<f64>,
    #[serde(default)]
    pub epochs_run: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_code: Option<String>,
}

impl EvaluateResponse {
    pub fn ok(request_id: impl Into<String>, accuracy: f64, epochs_run: u32) -> Self {
        Self {
            proto: PROTO_VERSION,
            request_id: request_id.into(),
            status: Status::Ok,
            validation_accuracy: Some(accuracy),
            epochs_run,
            message: None,
            error_code: None,
        }
    }

    pub fn failed(request_id: impl Into<String>, code: &str, message: impl Into<String>) -> Self {
        Self {
            proto: PROTO_VERSION,
            request_id: request_id.into(),
            status: Status::Failed,
            validation_accuracy: None,
            epochs_run: 0,
            message: Some(message.into()),
            error_code: Some(code.to_string()),
        }
    }
}

impl EvaluateRequest {
    pub fn validate(&self) -> Result<(), ProtocolError> {
        if self.proto != PROTO_VERSION {
            return Err(ProtocolError::Version(self.proto));
        }
        if self.block_rates.len() != self.frozen_mask.len() {
            return Err(ProtocolError::Violation(format!(
                "block_rates has {} entries, frozen_mask has {}",
                self.block_rates.len(),
                self.frozen_mask.len()
            )));
        }
        for (b, (&rate, &m)) in self.block_rates.iter().zip(&self.frozen_mask).enumerate() {
            if !rate.is_finite() {
                return Err(ProtocolError::NonFinite("block_rates"));
            }
            if rate < 0.0 {
                return Err(ProtocolError::Violation(format!("block_rates[{b}] is negative")));
            }
            match m {
                0 if rate != 0.0 => {
                    return Err(ProtocolError::Violation(format!(
                        "block {b} is frozen but carries rate {rate}"
                    )))
                }
                0 | 1 => {}
                other => {
                    return Err(ProtocolError::Violation(format!(
                        "frozen_mask[{b}] = {other}, expected 0 or 1"
                    )))
                }
            }
        }
        if self.train_sample_ids.is_some() == self.fold_ref.is_some() {
            return Err(ProtocolError::Violation(
                "exactly one of train_sample_ids and fold_ref must be present".into(),
            ));
        }
        if self.patience > self.max_epochs {
            return Err(ProtocolError::Violation("patience exceeds max_epochs".into()));
        }
        Ok(())
    }
}

impl EvaluateResponse {
    pub fn validate(&self) -> Result<(), ProtocolError> {
        if self.proto != PROTO_VERSION {
            return Err(ProtocolError::Version(self.proto));
        }
        if let Some(acc) = self.validation_accuracy {
            if !acc.is_finite() {
                return Err(ProtocolError::NonFinite("validation_accuracy"));
            }
            if !(0.0..=1.0).contains(&acc) {
                return Err(ProtocolError::Violation(format!(
                    "validation_accuracy {acc} outside [0, 1]"
                )));
            }
        } else if self.status == Status::Ok {
            return Err(ProtocolError::Violation(
                "status ok without validation_accuracy".into(),
            ));
        }
        Ok(())
    }
}

fn encode_line<T: Serialize>(msg: &T) -> Vec<u8> {
    // serde_json never emits raw newlines outside strings and escapes them inside.
    let mut out = serde_json::to_vec(msg).expect("protocol messages serialize");
    out.push(b'\n');
    out
}

fn decode_line<T: for<'de> Deserialize<'de>>(bytes: &[u8]) -> Result<T, ProtocolError> {
    let payload = String::from_utf8_lossy(bytes);
    let trimmed = payload.trim_end_matches(['\n', '\r']);
    if trimmed.contains('\n') {
        return Err(ProtocolError::Malformed {
            payload: trimmed.to_string(),
            reason: "interior newline".into(),
        });
    }
    serde_json::from_str(trimmed).map_err(|e| ProtocolError::Malformed {
        payload: trimmed.to_string(),
        reason: e.to_string(),
    })
}

/// Serializes a request as one newline-terminated line.
pub fn encode_request(req: &EvaluateRequest) -> Result<Vec<u8>, ProtocolError> {
    req.validate()?;
    Ok(encode_line(req))
}

pub fn decode_request(bytes: &[u8]) -> Result<EvaluateRequest, ProtocolError> {
    let req: EvaluateRequest = decode_line(bytes)?;
    req.validate()?;
    Ok(req)
}

pub fn encode_response(resp: &EvaluateResponse) -> Result<Vec<u8>, ProtocolError> {
    resp.validate()?;
    Ok(encode_line(resp))
}

/// Parses and validates one response line. Unknown fields are ignored.
pub fn decode_response(bytes: &[u8]) -> Result<EvaluateResponse, ProtocolError> {
    let resp: EvaluateResponse = decode_line(bytes)?;
    resp.validate()?;
    Ok(resp)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EndpointKind {
    ExternalProcess,
    Surrogate,
    Callback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointSettings {
    /// Maximum in-flight requests.
    pub capacity: usize,
    pub timeout: Duration,
    /// Extra attempts per seed after the first failure.
    pub retry_budget: u32,
}

impl Default for EndpointSettings {
    fn default() -> Self {
        Self {
            capacity: 1,
            timeout: Duration::from_secs(3600),
            retry_budget: 1,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainerError {
    #[error("request {0} timed out")]
    Timeout(String),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("trainer reported failure ({code}): {message}")]
    Failed { code: String, message: String },
    #[error("trainer unreachable: {0}")]
    Disconnected(String),
}

impl TrainerError {
    /// Transport-level failures that no retry can fix.
    pub fn is_fatal(&self) -> bool {
        matches!(self, TrainerError::Disconnected(_))
    }
}

/// Everything a trainer sees for one evaluation. `genes` never crosses the
/// wire; in-process surrogates may use it.
#[derive(Debug, Clone, Copy)]
pub struct EvalJob<'a> {
    pub request: &'a EvaluateRequest,
    pub genes: &'a [f64],
    pub base_rates: &'a [f64],
}

/// An evaluation backend. Implementations must be safe to call from
/// `settings().capacity` threads at once.
pub trait Trainer: Send + Sync {
    fn kind(&self) -> EndpointKind;

    fn settings(&self) -> &EndpointSettings;

    /// Runs one training trial. A `Failed` status from the trainer is
    /// reported as `Err(TrainerError::Failed)`.
    fn evaluate(&self, job: &EvalJob<'_>) -> Result<EvaluateResponse, TrainerError>;
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn request(rates: Vec<f64>, mask: Vec<u8>) -> EvaluateRequest {
        EvaluateRequest {
            proto: PROTO_VERSION,
            request_id: "r1".into(),
            genotype_id: "7".into(),
            block_rates: rates,
            frozen_mask: mask,
            fold_index: 0,
            train_sample_ids: Some(vec!["a".into(), "b".into()]),
            fold_ref: None,
            seed: 3,
            max_epochs: 30,
            patience: 3,
            loss: LOSS_CROSS_ENTROPY.into(),
        }
    }

    #[test]
    fn encode_is_one_line() {
        let line = encode_request(&request(vec![0.001, 0.0], vec![1, 0])).unwrap();
        assert_eq!(line.iter().filter(|&&b| b == b'\n').count(), 1);
        assert_eq!(*line.last().unwrap(), b'\n');
        let text = String::from_utf8(line).unwrap();
        assert!(text.contains("\"request_id\":\"r1\""));
        assert!(text.contains("\"block_rates\":[0.001,0.0]"));
        assert!(text.contains("\"frozen_mask\":[1,0]"));
        assert!(text.contains("\"proto\":1"));
    }

    #[test]
    fn rates_keep_nine_significant_digits() {
        let req = request(vec![0.003_981_07, 0.0], vec![1, 0]);
        let back = decode_request(&encode_request(&req).unwrap()).unwrap();
        let rel = (back.block_rates[0] - 0.003_981_07).abs() / 0.003_981_07;
        assert!(rel < 1e-9);
        assert_eq!(back, req);
    }

    #[test]
    fn non_finite_rejected() {
        let req = request(vec![f64::NAN, 0.0], vec![1, 0]);
        assert_eq!(encode_request(&req), Err(ProtocolError::NonFinite("block_rates")));
        let req = request(vec![f64::INFINITY], vec![1]);
        assert!(encode_request(&req).is_err());
    }

    #[test]
    fn frozen_block_with_rate_rejected() {
        let req = request(vec![0.1, 0.2], vec![1, 0]);
        assert!(matches!(encode_request(&req), Err(ProtocolError::Violation(_))));
    }

    #[test]
    fn fold_reference_mode() {
        let mut req = request(vec![0.1], vec![1]);
        req.train_sample_ids = None;
        req.fold_ref = Some(FoldRef { plan: "partition.json".into(), fold: 2 });
        let text = String::from_utf8(encode_request(&req).unwrap()).unwrap();
        assert!(text.contains("\"fold_ref\":{\"plan\":\"partition.json\",\"fold\":2}"));
        assert!(!text.contains("train_sample_ids"));
        req.fold_ref = None;
        assert!(encode_request(&req).is_err());
    }

    #[test]
    fn response_decoding() {
        let ok = decode_response(
            br#"{"proto":1,"request_id":"r1","status":"ok","validation_accuracy":0.93,"epochs_run":12,"extra":[1,2]}"#,
        )
        .unwrap();
        assert_eq!(ok.status, Status::Ok);
        assert_eq!(ok.validation_accuracy, Some(0.93));

        let err = decode_response(br#"{"proto":1,"request_id":"r1","status":"ok","validation_accuracy":1.3}"#)
            .unwrap_err();
        assert!(matches!(err, ProtocolError::Violation(_)));

        let truncated = br#"{"proto":1,"request_id":"r1","status":"ok","valid"#;
        match decode_response(truncated).unwrap_err() {
            ProtocolError::Malformed { payload, .. } => assert!(payload.ends_with("\"valid")),
            other => panic!("unexpected {other:?}"),
        }

        let failed =
            decode_response(br#"{"proto":1,"request_id":"r9","status":"failed","message":"oom","error_code":"oom"}"#)
                .unwrap();
        assert_eq!(failed.status, Status::Failed);

        assert!(matches!(
            decode_response(br#"{"proto":2,"request_id":"r","status":"failed"}"#),
            Err(ProtocolError::Version(2))
        ));
        assert!(decode_response(br#"{"proto":1,"request_id":"r","status":"ok"}"#).is_err());
    }

    fn request_strategy() -> impl Strategy<Value = EvaluateRequest> {
        (
            prop::collection::vec((any::<bool>(), 1e-9f64..10.0), 1..20),
            "[a-z0-9\\-]{1,12}",
            any::<u64>(),
            0usize..10,
            prop::option::of(prop::collection::vec("[ -~]{0,8}", 0..5)),
            (1u32..50, 0u32..50),
        )
            .prop_map(|(blocks, id, seed, fold, ids, (epochs, pat))| {
                let frozen_mask: Vec<u8> = blocks.iter().map(|(on, _)| u8::from(*on)).collect();
                let block_rates = blocks.iter().map(|(on, r)| if *on { *r } else { 0.0 }).collect();
                let fold_ref = match ids {
                    Some(_) => None,
                    None => Some(FoldRef { plan: "plan.json".into(), fold }),
                };
                EvaluateRequest {
                    proto: PROTO_VERSION,
                    request_id: id.clone(),
                    genotype_id: format!("g{id}"),
                    block_rates,
                    frozen_mask,
                    fold_index: fold,
                    train_sample_ids: ids,
                    fold_ref,
                    seed,
                    max_epochs: epochs,
                    patience: pat.min(epochs),
                    loss: LOSS_CROSS_ENTROPY.into(),
                }
            })
    }

    proptest! {
        #[test]
        fn request_round_trip(req in request_strategy()) {
            let line = encode_request(&req).unwrap();
            prop_assert_eq!(line.iter().filter(|&&b| b == b'\n').count(), 1);
            prop_assert_eq!(decode_request(&line).unwrap(), req);
        }

        #[test]
        fn response_round_trip(acc in 0.0f64..=1.0, epochs in 0u32..100, id in "[a-z0-9]{1,10}") {
            let resp = EvaluateResponse::ok(id, acc, epochs);
            prop_assert_eq!(decode_response(&encode_response(&resp).unwrap()).unwrap(), resp);
        }
    }
}
