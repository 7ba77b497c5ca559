//! Model containers.
//!
//! A head file is magic `SAHM`, `u32` version, the head config (`u8` kind, `u32`
//! input_dim, hidden_dim, layers, classes, attention_heads, `u8` positional
//! encoding), the encoder id, `u32` D, `u32` parameter count, then the parameters
//! as `f64`, all little-endian. Training metadata sits beside it in
//! `<file>.meta.json`. Encoder files use magic `SAEN`. A registry is a directory
//! holding `registry.json` plus one head and one encoder file per dimension.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use singassess_core::scorer::registry::CandidateScore;
use singassess_core::scorer::{
    Dimension, DimensionRegistry, EncoderParams, HeadConfig, HeadKind, RegistryEntry, TrainMeta, TrainedHead,
};

use crate::cache::{Reader, Writer};
use crate::error::{Error, IoContext, Result};

const HEAD_MAGIC: &[u8; 4] = b"SAHM";
const ENCODER_MAGIC: &[u8; 4] = b"SAEN";
const VERSION: u32 = 1;
pub const REGISTRY_INDEX: &str = "registry.json";

fn kind_code(k: HeadKind) -> u8 {
    match k {
        HeadKind::Mlp => 0,
        HeadKind::Rnn => 1,
        HeadKind::Transformer => 2,
    }
}

pub fn meta_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

pub fn encode_head(head: &TrainedHead, encoder_id: &str) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    let c = &head.config;
    let run = |w: &mut Writer<Vec<u8>>| -> std::io::Result<()> {
        w.0.write_all(HEAD_MAGIC)?;
        w.u32(VERSION)?;
        w.0.write_all(&[kind_code(c.kind)])?;
        for v in [c.input_dim, c.hidden_dim, c.layers, c.classes, c.attention_heads] {
            w.len(v)?;
        }
        w.0.write_all(&[u8::from(c.positional_encoding)])?;
        w.str(encoder_id)?;
        w.len(c.input_dim)?;
        w.len(head.parameters.len())?;
        w.f64s(&head.parameters)
    };
    run(&mut w).expect("writing to memory");
    w.0
}

/// Returns the head (with default metadata) and the encoder id it was trained for.
pub fn decode_head(bytes: &[u8], path: &Path) -> Result<(TrainedHead, String)> {
    let mut r = Reader(bytes);
    let bad = |e: std::io::Error| Error::format(path, format!("truncated or corrupt head file: {e}"));
    if !r.magic(HEAD_MAGIC).map_err(bad)? {
        return Err(Error::format(path, "not a head file"));
    }
    let version = r.u32().map_err(bad)?;
    if version != VERSION {
        return Err(Error::format(path, format!("unsupported head file version {version}")));
    }
    let kind = match r.u8().map_err(bad)? {
        0 => HeadKind::Mlp,
        1 => HeadKind::Rnn,
        2 => HeadKind::Transformer,
        k => return Err(Error::format(path, format!("unknown head kind code {k}"))),
    };
    let mut dims = [0usize; 5];
    for d in &mut dims {
        *d = r.len().map_err(bad)?;
    }
    let positional_encoding = r.u8().map_err(bad)? != 0;
    let encoder_id = r.str().map_err(bad)?;
    let d = r.len().map_err(bad)?;
    let n = r.len().map_err(bad)?;
    let parameters = r.f64s(n).map_err(bad)?;
    if !r.0.is_empty() {
        return Err(Error::format(path, "trailing bytes after head parameters"));
    }
    let [input_dim, hidden_dim, layers, classes, attention_heads] = dims;
    if d != input_dim {
        return Err(Error::format(path, "header D disagrees with head input dimension"));
    }
    let config = HeadConfig { kind, input_dim, hidden_dim, layers, classes, attention_heads, positional_encoding };
    Ok((TrainedHead::from_parts(config, parameters, TrainMeta::default())?, encoder_id))
}

pub fn save_head(path: &Path, head: &TrainedHead, encoder_id: &str) -> Result<()> {
    std::fs::write(path, encode_head(head, encoder_id)).at(path)?;
    let meta = meta_path(path);
    let json = serde_json::to_vec_pretty(&head.train_meta).expect("metadata serialises");
    std::fs::write(&meta, json).at(meta)
}

/// The metadata sidecar is optional on load.
pub fn load_head(path: &Path) -> Result<(TrainedHead, String)> {
    let bytes = std::fs::read(path).at(path)?;
    let (mut head, id) = decode_head(&bytes, path)?;
    let meta = meta_path(path);
    if meta.exists() {
        let text = std::fs::read(&meta).at(&meta)?;
        head.train_meta = serde_json::from_slice(&text).map_err(|e| Error::format(&meta, e))?;
    }
    Ok((head, id))
}

pub fn encode_encoder(e: &EncoderParams) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    let run = |w: &mut Writer<Vec<u8>>| -> std::io::Result<()> {
        w.0.write_all(ENCODER_MAGIC)?;
        w.u32(VERSION)?;
        w.str(&e.encoder_id)?;
        w.len(e.n_mels)?;
        w.len(e.dim)?;
        for v in [&e.input_mean, &e.input_scale, &e.weight, &e.bias] {
            w.len(v.len())?;
            w.f64s(v)?;
        }
        Ok(())
    };
    run(&mut w).expect("writing to memory");
    w.0
}

pub fn decode_encoder(bytes: &[u8], path: &Path) -> Result<EncoderParams> {
    let mut r = Reader(bytes);
    let bad = |e: std::io::Error| Error::format(path, format!("truncated or corrupt encoder file: {e}"));
    if !r.magic(ENCODER_MAGIC).map_err(bad)? {
        return Err(Error::format(path, "not an encoder file"));
    }
    let version = r.u32().map_err(bad)?;
    if version != VERSION {
        return Err(Error::format(path, format!("unsupported encoder file version {version}")));
    }
    let encoder_id = r.str().map_err(bad)?;
    let n_mels = r.len().map_err(bad)?;
    let dim = r.len().map_err(bad)?;
    let mut vecs = Vec::with_capacity(4);
    for _ in 0..4 {
        let n = r.len().map_err(bad)?;
        vecs.push(r.f64s(n).map_err(bad)?);
    }
    if !r.0.is_empty() {
        return Err(Error::format(path, "trailing bytes after encoder parameters"));
    }
    let bias = vecs.pop().unwrap();
    let weight = vecs.pop().unwrap();
    let input_scale = vecs.pop().unwrap();
    let input_mean = vecs.pop().unwrap();
    Ok(EncoderParams { encoder_id, n_mels, dim, input_mean, input_scale, weight, bias })
}

pub fn save_encoder(path: &Path, e: &EncoderParams) -> Result<()> {
    std::fs::write(path, encode_encoder(e)).at(path)
}

pub fn load_encoder(path: &Path) -> Result<EncoderParams> {
    let bytes = std::fs::read(path).at(path)?;
    decode_encoder(&bytes, path)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct IndexEntry {
    encoder_id: String,
    encoder_file: String,
    head_file: String,
    #[serde(default)]
    htpr_score: Option<f64>,
    #[serde(default)]
    candidate_scores: Vec<CandidateScore>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RegistryIndex {
    version: u32,
    n_mels: usize,
    window_s: f64,
    stride_s: f64,
    dimensions: BTreeMap<Dimension, IndexEntry>,
}

pub fn save_registry(dir: &Path, reg: &DimensionRegistry) -> Result<()> {
    std::fs::create_dir_all(dir).at(dir)?;
    let mut dimensions = BTreeMap::new();
    for (d, e) in &reg.entries {
        let head_file = format!("{d}.head");
        let encoder_file = format!("{d}.encoder");
        save_head(&dir.join(&head_file), &e.head, &e.encoder_id)?;
        save_encoder(&dir.join(&encoder_file), &e.encoder)?;
        dimensions.insert(
            *d,
            IndexEntry {
                encoder_id: e.encoder_id.clone(),
                encoder_file,
                head_file,
                htpr_score: e.htpr_score,
                candidate_scores: e.candidate_scores.clone(),
            },
        );
    }
    let index = RegistryIndex { version: VERSION, n_mels: reg.n_mels, window_s: reg.window_s, stride_s: reg.stride_s, dimensions };
    let path = dir.join(REGISTRY_INDEX);
    std::fs::write(&path, serde_json::to_vec_pretty(&index).expect("index serialises")).at(path)
}

pub fn load_registry(dir: &Path) -> Result<DimensionRegistry> {
    let path = dir.join(REGISTRY_INDEX);
    let text = std::fs::read(&path).at(&path)?;
    let index: RegistryIndex = serde_json::from_slice(&text).map_err(|e| Error::format(&path, e))?;
    if index.version != VERSION {
        return Err(Error::format(&path, format!("unsupported registry version {}", index.version)));
    }
    let mut entries = BTreeMap::new();
    for (d, ie) in index.dimensions {
        let head_path = dir.join(&ie.head_file);
        let (head, head_encoder) = load_head(&head_path)?;
        let encoder = load_encoder(&dir.join(&ie.encoder_file))?;
        if head_encoder != ie.encoder_id || encoder.encoder_id != ie.encoder_id {
            return Err(Error::format(&head_path, "encoder id disagrees with the registry index"));
        }
        entries.insert(
            d,
            RegistryEntry {
                encoder_id: ie.encoder_id,
                encoder,
                head,
                htpr_score: ie.htpr_score,
                candidate_scores: ie.candidate_scores,
            },
        );
    }
    Ok(DimensionRegistry::new(entries, index.n_mels, index.window_s, index.stride_s)?)
}
