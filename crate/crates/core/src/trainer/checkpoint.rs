//! Binary checkpoint format.
//!
//! ```text
//! magic    8 bytes  "HETCRFCK"
//! version  u32 LE
//! header   u64 LE length + UTF-8 JSON (config, fingerprint, epoch, Adam step,
//!          loss history, cluster augmentation)
//! count    u32 LE
//! tensor*  u32 LE name length + name, u64 LE rows, u64 LE cols,
//!          rows*cols f64 LE in row-major order
//! sha256   32 bytes over everything before it
//! ```
//!
//! Parameters are stored under their own names, Adam moments under
//! `adam.m.<name>` and `adam.v.<name>`.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Augmentation, DatasetFingerprint, EpochLosses, TrainConfig, TrainedState};
use crate::diff::optim::{Adam, Params};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"HETCRFCK";
pub const VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;
const MAX_NAME: usize = 4096;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    config: TrainConfig,
    fingerprint: DatasetFingerprint,
    epoch: usize,
    adam_t: u64,
    history: Vec<EpochLosses>,
    augmentation: Option<Augmentation>,
}

fn put_tensor(out: &mut Vec<u8>, name: &str, t: &Array2<f64>) {
    out.extend_from_slice(&(name.len() as u32).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.extend_from_slice(&(t.nrows() as u64).to_le_bytes());
    out.extend_from_slice(&(t.ncols() as u64).to_le_bytes());
    for v in t.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode_checkpoint(state: &TrainedState) -> Vec<u8> {
    let header = Header {
        config: state.config.clone(),
        fingerprint: state.fingerprint.clone(),
        epoch: state.epoch,
        adam_t: state.adam.t,
        history: state.history.clone(),
        augmentation: state.augmentation.clone(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    let count = state.params.len() + state.adam.m.len() + state.adam.v.len();
    out.extend_from_slice(&(count as u32).to_le_bytes());
    for (k, t) in &state.params {
        put_tensor(&mut out, k, t);
    }
    for (k, t) in &state.adam.m {
        put_tensor(&mut out, &format!("adam.m.{k}"), t);
    }
    for (k, t) in &state.adam.v {
        put_tensor(&mut out, &format!("adam.v.{k}"), t);
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn len(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Checkpoint("length overflows".into()))
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<TrainedState> {
    if bytes.len() < MAGIC.len() + 4 + DIGEST_LEN {
        return Err(Error::Checkpoint("file too short".into()));
    }
    if &bytes[..8] != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(Error::Version { found: version, expected: VERSION });
    }
    let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
    if Sha256::digest(body).as_slice() != digest {
        return Err(Error::Checksum);
    }
    let mut r = Reader { buf: body, pos: 12 };
    let hlen = r.len()?;
    let header: Header = serde_json::from_slice(r.take(hlen)?).map_err(|e| Error::Checkpoint(format!("header: {e}")))?;
    let count = r.u32()? as usize;
    let mut params = Params::new();
    let mut m = Params::new();
    let mut v = Params::new();
    for _ in 0..count {
        let nlen = r.u32()? as usize;
        if nlen > MAX_NAME {
            return Err(Error::Checkpoint(format!("tensor name of {nlen} bytes")));
        }
        let name = std::str::from_utf8(r.take(nlen)?)
            .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?
            .to_string();
        let (rows, cols) = (r.len()?, r.len()?);
        let elems = rows
            .checked_mul(cols)
            .filter(|&e| e.checked_mul(8).is_some_and(|b| b <= r.remaining()))
            .ok_or_else(|| Error::Checkpoint(format!("tensor `{name}` of {rows}x{cols} exceeds the file")))?;
        let data: Vec<f64> = r.take(elems * 8)?.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::Checkpoint(format!("tensor `{name}` holds non-finite values")));
        }
        let t = Array2::from_shape_vec((rows, cols), data).expect("length checked");
        let (map, key) = if let Some(k) = name.strip_prefix("adam.m.") {
            (&mut m, k.to_string())
        } else if let Some(k) = name.strip_prefix("adam.v.") {
            (&mut v, k.to_string())
        } else {
            (&mut params, name.clone())
        };
        if map.insert(key, t).is_some() {
            return Err(Error::Checkpoint(format!("duplicate tensor `{name}`")));
        }
    }
    if r.remaining() != 0 {
        return Err(Error::Checkpoint(format!("{} trailing bytes", r.remaining())));
    }
    for (k, t) in m.iter().chain(v.iter()) {
        if params.get(k).map(|p| p.dim()) != Some(t.dim()) {
            return Err(Error::Checkpoint(format!("optimizer moment for unknown or misshapen `{k}`")));
        }
    }
    Ok(TrainedState {
        adam: Adam { config: header.config.optimizer, t: header.adam_t, m, v },
        config: header.config,
        fingerprint: header.fingerprint,
        params,
        epoch: header.epoch,
        history: header.history,
        augmentation: header.augmentation,
        embeddings: None,
    })
}

/// Writes through a temporary sibling and renames it into place.
pub fn save_checkpoint(state: &TrainedState, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(&encode_checkpoint(state)).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<TrainedState> {
    let path = path.as_ref();
    decode_checkpoint(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::synthetic::{generate_synthetic, SyntheticSpec};
    use crate::trainer::Trainer;

    fn trained() -> TrainedState {
        let g = generate_synthetic(&SyntheticSpec { nodes_per_class: 10, ..Default::default() }, 2).unwrap();
        let cfg = TrainConfig { epochs: 3, warmup_epochs: 1, hidden_dim: 8, heads: 2, ..Default::default() };
        let mut t = Trainer::new(&g, cfg).unwrap();
        t.run().unwrap();
        t.state
    }

    #[test]
    fn round_trip_is_exact() {
        let s = trained();
        let back = decode_checkpoint(&encode_checkpoint(&s)).unwrap();
        assert_eq!(back, s);
        assert_eq!(encode_checkpoint(&back), encode_checkpoint(&s));
    }

    #[test]
    fn corruption_is_detected() {
        let mut b = encode_checkpoint(&trained());
        let mid = b.len() / 2;
        b[mid] ^= 0x40;
        assert!(matches!(decode_checkpoint(&b), Err(Error::Checksum)));
        assert!(decode_checkpoint(&b[..20]).is_err());
    }

    #[test]
    fn version_mismatch_is_explicit() {
        let mut b = encode_checkpoint(&trained());
        b[8..12].copy_from_slice(&2u32.to_le_bytes());
        let n = b.len() - DIGEST_LEN;
        let d = Sha256::digest(&b[..n]);
        b[n..].copy_from_slice(&d);
        assert!(matches!(decode_checkpoint(&b), Err(Error::Version { found: 2, expected: 1 })));
    }

    #[test]
    fn file_round_trip() {
        let s = trained();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("model.ckpt");
        save_checkpoint(&s, &p).unwrap();
        assert_eq!(load_checkpoint(&p).unwrap(), s);
        assert!(!p.with_extension("tmp").exists());
    }
}
