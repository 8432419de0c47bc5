//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "ARGS"  u16 version
//! u8 cell variant (0 = MDLeaky, 1 = MDLSTM)
//! u32 input tile width, u32 input tile height
//! u32 level count L, L x u32 recurrent units
//! (L-1) x u32 feedforward units, (L-1) x (u32, u32) subsampling tiles
//! u32 alphabet size
//! u64 parameter count, then that many f64 in layout order
//! optional training block:
//!   "TRST"  u64 epoch  u64 seed  u64 count  count x f64 velocity
//! ```

use std::fs;
use std::path::Path;

use crate::cells::CellVariant;
use crate::error::{Error, Result};
use crate::network::{NetConfig, NetParams};

pub const MAGIC: &[u8; 4] = b"ARGS";
pub const VERSION: u16 = 1;
const TRAIN_TAG: &[u8; 4] = b"TRST";

/// Optimizer state stored after the parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainBlock {
    /// Last completed epoch.
    pub epoch: u64,
    pub seed: u64,
    pub velocity: Vec<f64>,
}

pub fn encode(params: &NetParams, train: Option<&TrainBlock>) -> Vec<u8> {
    let cfg = &params.config;
    let mut out = Vec::with_capacity(64 + 8 * params.data.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(match cfg.cell {
        CellVariant::MdLeaky => 0,
        CellVariant::MdLstm => 1,
    });
    let u32le = |out: &mut Vec<u8>, v: usize| out.extend_from_slice(&(v as u32).to_le_bytes());
    u32le(&mut out, cfg.input_tile.0);
    u32le(&mut out, cfg.input_tile.1);
    u32le(&mut out, cfg.levels.len());
    for &n in &cfg.levels {
        u32le(&mut out, n);
    }
    for &n in &cfg.feedforward {
        u32le(&mut out, n);
    }
    for &(w, h) in &cfg.subsample {
        u32le(&mut out, w);
        u32le(&mut out, h);
    }
    u32le(&mut out, cfg.alphabet_size);
    out.extend_from_slice(&(params.data.len() as u64).to_le_bytes());
    for v in &params.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    if let Some(t) = train {
        out.extend_from_slice(TRAIN_TAG);
        out.extend_from_slice(&t.epoch.to_le_bytes());
        out.extend_from_slice(&t.seed.to_le_bytes());
        out.extend_from_slice(&(t.velocity.len() as u64).to_le_bytes());
        for v in &t.velocity {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.data.len() - self.pos < n {
            return Err(Error::Truncated { what: what.into() });
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()) as usize)
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64s(&mut self, count: usize, what: &str) -> Result<Vec<f64>> {
        let bytes = self.take(count.checked_mul(8).ok_or_else(|| Error::Truncated { what: what.into() })?, what)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn at_end(&self) -> bool {
        self.pos == self.data.len()
    }
}

pub fn decode(data: &[u8]) -> Result<(NetParams, Option<TrainBlock>)> {
    let mut r = Reader { data, pos: 0 };
    if data.len() < 4 {
        return Err(if MAGIC.starts_with(data) {
            Error::Truncated { what: "magic".into() }
        } else {
            Error::BadMagic
        });
    }
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::BadMagic);
    }
    let version = r.u16("version")?;
    if version != VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: VERSION,
        });
    }
    let cell = match r.take(1, "cell variant")?[0] {
        0 => CellVariant::MdLeaky,
        1 => CellVariant::MdLstm,
        other => return Err(Error::Checkpoint(format!("unknown cell variant code {other}"))),
    };
    let input_tile = (r.u32("input tile")?, r.u32("input tile")?);
    let n_levels = r.u32("level count")?;
    if n_levels == 0 || n_levels > 64 {
        return Err(Error::Checkpoint(format!("implausible level count {n_levels}")));
    }
    let levels = (0..n_levels)
        .map(|_| r.u32("level sizes"))
        .collect::<Result<Vec<_>>>()?;
    let feedforward = (1..n_levels)
        .map(|_| r.u32("feedforward sizes"))
        .collect::<Result<Vec<_>>>()?;
    let subsample = (1..n_levels)
        .map(|_| Ok((r.u32("subsampling tiles")?, r.u32("subsampling tiles")?)))
        .collect::<Result<Vec<_>>>()?;
    let alphabet_size = r.u32("alphabet size")?;
    let config = NetConfig {
        cell,
        input_tile,
        levels,
        feedforward,
        subsample,
        alphabet_size,
    };
    config.validate()?;
    let count = r.u64("parameter count")? as usize;
    if count != config.param_count() {
        return Err(Error::Checkpoint(format!(
            "parameter count {count} does not match configuration ({})",
            config.param_count()
        )));
    }
    let data = r.f64s(count, "parameter tensors")?;
    let params = NetParams { config, data };

    if r.at_end() {
        return Ok((params, None));
    }
    if r.take(4, "training block tag")? != TRAIN_TAG {
        return Err(Error::Checkpoint("unknown block after parameters".into()));
    }
    let epoch = r.u64("training epoch")?;
    let seed = r.u64("training seed")?;
    let vcount = r.u64("velocity count")? as usize;
    if vcount != count {
        return Err(Error::Checkpoint(format!(
            "velocity has {vcount} entries, parameters {count}"
        )));
    }
    let velocity = r.f64s(vcount, "velocity tensors")?;
    if !r.at_end() {
        return Err(Error::Checkpoint("trailing bytes after training block".into()));
    }
    Ok((params, Some(TrainBlock { epoch, seed, velocity })))
}

pub fn save(path: impl AsRef<Path>, params: &NetParams, train: Option<&TrainBlock>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(params, train)).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<(NetParams, Option<TrainBlock>)> {
    let path = path.as_ref();
    let data = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&data)
}

/// Writes the network parameters alone.
pub fn save_params(path: impl AsRef<Path>, params: &NetParams) -> Result<()> {
    save(path, params, None)
}

/// Reads network parameters, ignoring any training block.
pub fn load_params(path: impl AsRef<Path>) -> Result<NetParams> {
    load(path).map(|(p, _)| p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::init_params;

    fn params() -> NetParams {
        init_params(&NetConfig::tiny(CellVariant::MdLstm, 5), 3).unwrap()
    }

    #[test]
    fn roundtrip_with_and_without_training_block() {
        let p = params();
        assert_eq!(decode(&encode(&p, None)).unwrap(), (p.clone(), None));
        let t = TrainBlock {
            epoch: 12,
            seed: 99,
            velocity: p.data.iter().map(|v| v * -0.5).collect(),
        };
        let (q, back) = decode(&encode(&p, Some(&t))).unwrap();
        assert_eq!(q, p);
        assert_eq!(back, Some(t));
    }

    #[test]
    fn distinct_errors_for_corruption() {
        let mut bytes = encode(&params(), None);
        let full = bytes.clone();
        bytes[0] = b'X';
        assert!(matches!(decode(&bytes), Err(Error::BadMagic)));

        let mut bytes = full.clone();
        bytes[4] = 9;
        assert!(matches!(decode(&bytes), Err(Error::VersionMismatch { found: 9, .. })));

        let cut = &full[..full.len() - 13];
        assert!(matches!(decode(cut), Err(Error::Truncated { .. })));
    }
}
