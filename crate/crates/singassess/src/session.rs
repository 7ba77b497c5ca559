//! Durable judging sessions: a header file plus an append-only judgment log.
//!
//! Layout: `<root>/sessions/<id>/header.json` and `<root>/sessions/<id>/judgments.jsonl`.
//! Every append is flushed with `fsync`; on reload an incomplete final line is
//! discarded and trimmed from the file.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use singassess_core::htpr::{HtprSession, Judgment, Position, TierAssignment, Triplet};

use crate::error::{Error, IoContext, Result};

const HEADER: &str = "header.json";
const LOG: &str = "judgments.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    id: String,
    tier_digest: String,
    n_triplets: usize,
    seed: u64,
    tier_assignment: TierAssignment,
    triplets: Vec<Triplet>,
}

/// Hex SHA-256 of the tier assignment's canonical JSON.
pub fn tier_digest(t: &TierAssignment) -> String {
    hex::encode(Sha256::digest(serde_json::to_vec(t).expect("tiers serialise")))
}

/// Content hash of the session inputs, so identical requests share one id.
pub fn session_id(digest: &str, n_triplets: usize, seed: u64) -> String {
    let mut h = Sha256::new();
    h.update(digest.as_bytes());
    h.update(b"\0");
    h.update(n_triplets.to_le_bytes());
    h.update(seed.to_le_bytes());
    hex::encode(h.finalize())[..16].to_string()
}

/// Opaque per-position audio token.
pub fn audio_token(session_id: &str, triplet_id: &str, pos: Position) -> String {
    let mut h = Sha256::new();
    for part in [session_id, triplet_id, &format!("{pos:?}")] {
        h.update(part.as_bytes());
        h.update(b"\0");
    }
    hex::encode(h.finalize())[..24].to_string()
}

/// Token to clip id for every position of every triplet.
pub fn token_map(session: &HtprSession) -> BTreeMap<String, String> {
    let mut m = BTreeMap::new();
    for t in &session.triplets {
        for p in Position::ALL {
            m.insert(audio_token(&session.id, &t.id, p), t.clip_at(p).to_string());
        }
    }
    m
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PresentedItem {
    pub position: Position,
    pub token: String,
}

/// What an evaluator receives: no clip ids and no tiers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NextPayload {
    Triplet { session_id: String, triplet_id: String, index: usize, total: usize, judged: usize, items: Vec<PresentedItem> },
    Done { session_id: String, done: bool, judged: usize, total: usize },
}

pub fn next_payload(session: &HtprSession, evaluator_id: &str) -> NextPayload {
    let judged = session.judged_by(evaluator_id);
    let total = session.triplets.len();
    match session.next_for(evaluator_id) {
        Some((index, t)) => NextPayload::Triplet {
            session_id: session.id.clone(),
            triplet_id: t.id.clone(),
            index,
            total,
            judged,
            items: Position::ALL
                .iter()
                .map(|&position| PresentedItem { position, token: audio_token(&session.id, &t.id, position) })
                .collect(),
        },
        None => NextPayload::Done { session_id: session.id.clone(), done: true, judged, total },
    }
}

#[derive(Debug, Clone)]
pub struct SessionStore {
    root: PathBuf,
}

impl SessionStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn dir(&self, id: &str) -> PathBuf {
        self.root.join("sessions").join(id)
    }

    /// Creates the session, or returns the existing id for identical inputs.
    pub fn create(&self, tiers: TierAssignment, n_triplets: usize, seed: u64) -> Result<String> {
        tiers.validate()?;
        let digest = tier_digest(&tiers);
        let id = session_id(&digest, n_triplets, seed);
        let session = HtprSession::create(id.clone(), tiers, n_triplets, seed)?;
        let dir = self.dir(&id);
        let header_path = dir.join(HEADER);
        let header = Header {
            id: id.clone(),
            tier_digest: digest,
            n_triplets,
            seed,
            tier_assignment: session.tier_assignment,
            triplets: session.triplets,
        };
        if header_path.exists() {
            let existing: Header = crate::io::read_json(&header_path)?;
            if existing != header {
                return Err(Error::format(&header_path, "existing session header differs from the request"));
            }
            return Ok(id);
        }
        std::fs::create_dir_all(&dir).at(&dir)?;
        let tmp = dir.join(format!("{HEADER}.tmp"));
        crate::io::write_json(&tmp, &header)?;
        File::open(&tmp).and_then(|f| f.sync_all()).at(&tmp)?;
        std::fs::rename(&tmp, &header_path).at(&header_path)?;
        File::create(dir.join(LOG)).and_then(|f| f.sync_all()).at(dir.join(LOG))?;
        Ok(id)
    }

    pub fn exists(&self, id: &str) -> bool {
        is_session_id(id) && self.dir(id).join(HEADER).exists()
    }

    /// Header plus replayed judgments, repairing a torn final line.
    pub fn load(&self, id: &str) -> Result<HtprSession> {
        if !self.exists(id) {
            return Err(Error::UnknownSession(id.into()));
        }
        let dir = self.dir(id);
        let header: Header = crate::io::read_json(&dir.join(HEADER))?;
        let mut session = HtprSession {
            id: header.id,
            tier_assignment: header.tier_assignment,
            triplets: header.triplets,
            judgments: Vec::new(),
            seed: header.seed,
        };
        let log = dir.join(LOG);
        let bytes = match std::fs::read(&log) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(Error::io(&log, e)),
        };
        let complete = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |p| p + 1);
        for (i, line) in bytes[..complete].split(|&b| b == b'\n').enumerate() {
            if line.iter().all(u8::is_ascii_whitespace) {
                continue;
            }
            let j: Judgment =
                serde_json::from_slice(line).map_err(|e| Error::format(&log, format!("line {}: {e}", i + 1)))?;
            session.submit(j)?;
        }
        if complete < bytes.len() {
            let f = OpenOptions::new().write(true).open(&log).at(&log)?;
            f.set_len(complete as u64).and_then(|()| f.sync_all()).at(&log)?;
        }
        Ok(session)
    }

    /// Appends one line and syncs it to disk. Callers validate against the
    /// in-memory session first.
    pub fn append(&self, id: &str, j: &Judgment) -> Result<()> {
        let log = self.dir(id).join(LOG);
        let mut line = serde_json::to_vec(j).expect("judgment serialises");
        line.push(b'\n');
        let mut f = OpenOptions::new().create(true).append(true).open(&log).at(&log)?;
        f.write_all(&line).and_then(|()| f.sync_data()).at(&log)
    }

    pub fn list(&self) -> Result<Vec<String>> {
        let dir = self.root.join("sessions");
        if !dir.exists() {
            return Ok(Vec::new());
        }
        let mut ids = Vec::new();
        for e in std::fs::read_dir(&dir).at(&dir)? {
            let name = e.at(&dir)?.file_name().to_string_lossy().into_owned();
            if self.exists(&name) {
                ids.push(name);
            }
        }
        ids.sort();
        Ok(ids)
    }
}

fn is_session_id(id: &str) -> bool {
    id.len() == 16 && id.bytes().all(|b| b.is_ascii_hexdigit())
}
