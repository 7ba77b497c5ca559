//! Feature cache: a little-endian binary container, with JSON as the readable alternative.
//!
//! Layout: magic `SAFC`, `u32` version, then length-prefixed UTF-8 clip id, the
//! pitch contour (hop, count, per frame `f64` time, `f64` cents and `u8` voicing), the onset
//! times, and the log-mel matrix (hop, `u32` n_mels, `u32` frames, values).

use std::io::{Read, Write};
use std::path::Path;

use singassess_core::features::{MelMatrix, OnsetSequence, PitchContour, TakeFeatures};

use crate::error::{Error, IoContext, Result};

const MAGIC: &[u8; 4] = b"SAFC";
const VERSION: u32 = 1;

pub(crate) struct Writer<W: Write>(pub W);

impl<W: Write> Writer<W> {
    pub fn u32(&mut self, v: u32) -> std::io::Result<()> {
        self.0.write_all(&v.to_le_bytes())
    }
    pub fn f64(&mut self, v: f64) -> std::io::Result<()> {
        self.0.write_all(&v.to_le_bytes())
    }
    pub fn len(&mut self, n: usize) -> std::io::Result<()> {
        self.u32(u32::try_from(n).map_err(|_| std::io::Error::other("length exceeds u32"))?)
    }
    pub fn str(&mut self, s: &str) -> std::io::Result<()> {
        self.len(s.len())?;
        self.0.write_all(s.as_bytes())
    }
    pub fn f64s(&mut self, v: &[f64]) -> std::io::Result<()> {
        v.iter().try_for_each(|x| self.f64(*x))
    }
}

pub(crate) struct Reader<R: Read>(pub R);

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> std::io::Result<[u8; N]> {
        let mut b = [0u8; N];
        self.0.read_exact(&mut b)?;
        Ok(b)
    }
    pub fn u8(&mut self) -> std::io::Result<u8> {
        Ok(self.bytes::<1>()?[0])
    }
    pub fn u32(&mut self) -> std::io::Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }
    pub fn f64(&mut self) -> std::io::Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }
    pub fn len(&mut self) -> std::io::Result<usize> {
        Ok(self.u32()? as usize)
    }
    pub fn str(&mut self) -> std::io::Result<String> {
        let n = self.len()?;
        let mut b = vec![0u8; n];
        self.0.read_exact(&mut b)?;
        String::from_utf8(b).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }
    pub fn f64s(&mut self, n: usize) -> std::io::Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }
    pub fn magic(&mut self, magic: &[u8; 4]) -> std::io::Result<bool> {
        Ok(&self.bytes::<4>()? == magic)
    }
}

pub fn encode_features(f: &TakeFeatures) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    let run = |w: &mut Writer<Vec<u8>>| -> std::io::Result<()> {
        w.0.write_all(MAGIC)?;
        w.u32(VERSION)?;
        w.str(&f.clip_id)?;
        w.f64(f.contour.hop_s)?;
        w.len(f.contour.len())?;
        for k in 0..f.contour.len() {
            w.f64(f.contour.frame_times_s[k])?;
            w.f64(f.contour.f0_cents[k])?;
            w.0.write_all(&[u8::from(f.contour.voiced[k])])?;
        }
        w.len(f.onsets.len())?;
        w.f64s(&f.onsets.onset_times_s)?;
        w.f64(f.mel.hop_s)?;
        w.len(f.mel.n_mels)?;
        w.len(f.mel.len())?;
        for row in &f.mel.frames {
            w.f64s(row)?;
        }
        Ok(())
    };
    run(&mut w).expect("writing to memory");
    w.0
}

pub fn decode_features(bytes: &[u8], path: &Path) -> Result<TakeFeatures> {
    let mut r = Reader(bytes);
    let bad = |e: std::io::Error| Error::format(path, format!("truncated or corrupt feature cache: {e}"));
    if !r.magic(MAGIC).map_err(bad)? {
        return Err(Error::format(path, "not a feature cache"));
    }
    let version = r.u32().map_err(bad)?;
    if version != VERSION {
        return Err(Error::format(path, format!("unsupported feature cache version {version}")));
    }
    let clip_id = r.str().map_err(bad)?;
    let hop_s = r.f64().map_err(bad)?;
    let n = r.len().map_err(bad)?;
    let cap = n.min(1 << 24);
    let mut contour =
        PitchContour { frame_times_s: Vec::with_capacity(cap), f0_cents: Vec::with_capacity(cap), voiced: Vec::with_capacity(cap), hop_s };
    for _ in 0..n {
        contour.frame_times_s.push(r.f64().map_err(bad)?);
        contour.f0_cents.push(r.f64().map_err(bad)?);
        contour.voiced.push(r.u8().map_err(bad)? != 0);
    }
    let n_on = r.len().map_err(bad)?;
    let onsets = OnsetSequence::new(r.f64s(n_on).map_err(bad)?);
    let mel_hop = r.f64().map_err(bad)?;
    let n_mels = r.len().map_err(bad)?;
    let n_frames = r.len().map_err(bad)?;
    let rows = (0..n_frames).map(|_| r.f64s(n_mels)).collect::<std::io::Result<Vec<_>>>().map_err(bad)?;
    if !r.0.is_empty() {
        return Err(Error::format(path, "trailing bytes after feature cache"));
    }
    Ok(TakeFeatures { clip_id, contour, onsets, mel: MelMatrix { frames: rows, n_mels, hop_s: mel_hop } })
}

/// Binary unless the extension is `.json`.
pub fn save_features(path: &Path, f: &TakeFeatures) -> Result<()> {
    let bytes = if is_json(path) {
        serde_json::to_vec(f).map_err(|e| Error::format(path, e))?
    } else {
        encode_features(f)
    };
    std::fs::write(path, bytes).at(path)
}

pub fn load_features(path: &Path) -> Result<TakeFeatures> {
    let bytes = std::fs::read(path).at(path)?;
    if is_json(path) {
        serde_json::from_slice(&bytes).map_err(|e| Error::format(path, e))
    } else {
        decode_features(&bytes, path)
    }
}

pub(crate) fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}
