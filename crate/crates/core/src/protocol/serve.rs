//! Trainer side of the wire protocol: answers requests read from a stream
//! using an in-process [`Trainer`]. Used by `seltune serve-surrogate` so the
//! process transport can be exercised end to end without a real trainer,
//! optionally injecting transport faults.

use std::io::{self, BufRead, Write};

use super::{decode_request, encode_response, EvalJob, EvaluateResponse, Trainer, TrainerError};

/// Faults injected into the response stream. A value of `n > 0` applies the
/// fault to every `n`-th request (1-based); `0` disables it.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Faults {
    /// Write a line of non-JSON garbage before the response.
    pub garbage_every: u64,
    /// Write a truncated copy of the response before the real one.
    pub truncate_every: u64,
    /// Write the response twice.
    pub duplicate_every: u64,
    /// Answer with `status: "failed"` instead of evaluating.
    pub fail_every: u64,
}

fn hits(every: u64, n: u64) -> bool {
    every > 0 && n.is_multiple_of(every)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ServeStats {
    pub requests: u64,
    pub rejected: u64,
}

/// Serves until `reader` reaches end of input. `base_rates` supplies the
/// per-block base learning rates, which are not part of the request.
pub fn serve<R: BufRead, W: Write>(
    reader: R,
    mut writer: W,
    trainer: &dyn Trainer,
    base_rates: &[f64],
    faults: Faults,
) -> io::Result<ServeStats> {
    let mut stats = ServeStats::default();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        stats.requests += 1;
        let n = stats.requests;
        let response = match decode_request(line.as_bytes()) {
            Err(e) => {
                stats.rejected += 1;
                log::warn!("rejecting request: {e}");
                match request_id_of(&line) {
                    Some(id) => EvaluateResponse::failed(id, "bad_request", e.to_string()),
                    None => continue,
                }
            }
            Ok(_) if hits(faults.fail_every, n) => {
                let id = request_id_of(&line).unwrap_or_default();
                EvaluateResponse::failed(id, "injected", "injected failure")
            }
            Ok(req) => {
                let job = EvalJob {
                    request: &req,
                    genes: &[],
                    base_rates,
                };
                match trainer.evaluate(&job) {
                    Ok(r) => r,
                    Err(TrainerError::Failed { code, message }) => {
                        EvaluateResponse::failed(req.request_id.clone(), &code, message)
                    }
                    Err(e) => {
                        stats.rejected += 1;
                        EvaluateResponse::failed(req.request_id.clone(), "bad_request", e.to_string())
                    }
                }
            }
        };
        let bytes = encode_response(&response).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
        if hits(faults.garbage_every, n) {
            writer.write_all(b"%% not json %%\n")?;
        }
        if hits(faults.truncate_every, n) {
            writer.write_all(&bytes[..bytes.len() / 2])?;
            writer.write_all(b"\n")?;
        }
        writer.write_all(&bytes)?;
        if hits(faults.duplicate_every, n) {
            writer.write_all(&bytes)?;
        }
        writer.flush()?;
    }
    Ok(stats)
}

fn request_id_of(line: &str) -> Option<String> {
    let v: serde_json::Value = serde_json::from_str(line).ok()?;
    v.get("request_id")?.as_str().map(String::from)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{decode_response, encode_request, EvaluateRequest, MaskMatchSurrogate, Status, PROTO_VERSION};

    fn request(id: &str) -> EvaluateRequest {
        EvaluateRequest {
            proto: PROTO_VERSION,
            request_id: id.into(),
            genotype_id: "1".into(),
            block_rates: vec![0.01, 0.0],
            frozen_mask: vec![1, 0],
            fold_index: 0,
            train_sample_ids: Some(vec!["a".into()]),
            fold_ref: None,
            seed: 0,
            max_epochs: 30,
            patience: 3,
            loss: crate::protocol::LOSS_CROSS_ENTROPY.into(),
        }
    }

    fn input(ids: &[&str]) -> Vec<u8> {
        let mut out = Vec::new();
        for id in ids {
            out.extend(encode_request(&request(id)).unwrap());
        }
        out
    }

    fn responses(out: &[u8]) -> Vec<Result<EvaluateResponse, ()>> {
        out.split(|&b| b == b'\n')
            .filter(|l| !l.is_empty())
            .map(|l| decode_response(l).map_err(|_| ()))
            .collect()
    }

    #[test]
    fn answers_each_request() {
        let s = MaskMatchSurrogate::new(vec![1, 0], vec![0.0, 0.0], 0.0);
        let mut out = Vec::new();
        let stats = serve(&input(&["a", "b"])[..], &mut out, &s, &[0.01, 0.01], Faults::default()).unwrap();
        assert_eq!(stats.requests, 2);
        let r = responses(&out);
        assert_eq!(r.len(), 2);
        let first = r[0].as_ref().unwrap();
        assert_eq!(first.request_id, "a");
        assert_eq!(first.validation_accuracy, Some(1.0));
    }

    #[test]
    fn injects_faults() {
        let s = MaskMatchSurrogate::new(vec![1, 0], vec![0.0, 0.0], 0.0);
        let faults = Faults {
            garbage_every: 1,
            truncate_every: 2,
            duplicate_every: 3,
            fail_every: 3,
        };
        let mut out = Vec::new();
        serve(&input(&["a", "b", "c"])[..], &mut out, &s, &[0.01, 0.01], faults).unwrap();
        let r = responses(&out);
        // 3 garbage + 1 truncated + 3 real + 1 duplicate.
        assert_eq!(r.len(), 8);
        assert_eq!(r.iter().filter(|x| x.is_err()).count(), 4);
        let c: Vec<_> = r.iter().flatten().filter(|x| x.request_id == "c").collect();
        assert_eq!(c.len(), 2);
        assert!(c.iter().all(|x| x.status == Status::Failed));
    }

    #[test]
    fn bad_request_gets_failed_reply_when_id_is_known() {
        let s = MaskMatchSurrogate::new(vec![1, 0], vec![0.0, 0.0], 0.0);
        let text = b"{\"proto\":1,\"request_id\":\"x\"}\nnot json\n";
        let mut out = Vec::new();
        let stats = serve(&text[..], &mut out, &s, &[0.01, 0.01], Faults::default()).unwrap();
        assert_eq!(stats.rejected, 2);
        let r = responses(&out);
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].as_ref().unwrap().status, Status::Failed);
    }
}
