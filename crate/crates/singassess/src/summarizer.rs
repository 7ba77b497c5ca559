//! Client for the external summary service.
//!
//! Wire format: `POST <url>` with `Content-Type: application/json` and a body
//! `{"clip_id": ..., "dimensions": [...], "critiques": [{"segment_index", "start_s",
//! "end_s", "notes": {dimension: note}}]}`. A 2xx reply carries
//! `{"summary": "<text>"}`, optionally with `"status": "ok"`, or
//! `{"status": "error"}` to decline.

use std::thread::sleep;
use std::time::Duration;

use singassess_core::config::SummarizerConfig;
use singassess_core::feedback::{render_text, summary_request, DiagnosticDocument, SummaryResponse};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SummaryOutcome {
    Summarized(String),
    /// The local rendering, used after a refusal or repeated transport failure.
    Degraded { text: String, reason: String },
}

enum Attempt {
    Body(String),
    Retry(String),
}

fn attempt(agent: &ureq::Agent, url: &str, body: &[u8]) -> Result<Attempt> {
    let sent = agent.post(url).header("Content-Type", "application/json").send(body);
    match sent {
        Ok(mut resp) => {
            let status = resp.status().as_u16();
            if status >= 500 {
                return Ok(Attempt::Retry(format!("HTTP {status}")));
            }
            if !(200..300).contains(&status) {
                return Err(Error::Summarizer(format!("HTTP {status}")));
            }
            match resp.body_mut().read_to_string() {
                Ok(text) => Ok(Attempt::Body(text)),
                Err(e) => Ok(Attempt::Retry(e.to_string())),
            }
        }
        Err(e) => Ok(Attempt::Retry(e.to_string())),
    }
}

/// Sends `doc` to the summarizer. Transport failures are retried `retries`
/// times with doubling backoff before falling back; a malformed reply is an error.
pub fn summarize(doc: &DiagnosticDocument, cfg: &SummarizerConfig) -> Result<SummaryOutcome> {
    if cfg.url.is_empty() {
        return Err(Error::Usage("summarizer.url is not configured".into()));
    }
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_secs_f64(cfg.timeout_s.max(0.001))))
        .http_status_as_error(false)
        .build()
        .into();
    let body = serde_json::to_vec(&summary_request(doc)).expect("request serialises");
    let mut last = String::new();
    for k in 0..=cfg.retries {
        if k > 0 {
            sleep(Duration::from_millis(cfg.backoff_ms.saturating_mul(1 << (k - 1).min(16))));
        }
        match attempt(&agent, &cfg.url, &body)? {
            Attempt::Body(text) => {
                let resp: SummaryResponse = serde_json::from_str(&text)
                    .map_err(|e| Error::Summarizer(format!("malformed response envelope: {e}")))?;
                return match resp.into_summary().map_err(|e| Error::Summarizer(e.to_string()))? {
                    Some(s) => Ok(SummaryOutcome::Summarized(s)),
                    None => Ok(SummaryOutcome::Degraded { text: render_text(doc), reason: "server declined".into() }),
                };
            }
            Attempt::Retry(reason) => last = reason,
        }
    }
    Ok(SummaryOutcome::Degraded { text: render_text(doc), reason: last })
}

/// Fills `doc.summary` and `doc.degraded` from the outcome.
pub fn apply(doc: &mut DiagnosticDocument, outcome: SummaryOutcome) {
    match outcome {
        SummaryOutcome::Summarized(s) => {
            doc.summary = Some(s);
            doc.degraded = false;
        }
        SummaryOutcome::Degraded { text, .. } => {
            doc.summary = Some(text);
            doc.degraded = true;
        }
    }
}
