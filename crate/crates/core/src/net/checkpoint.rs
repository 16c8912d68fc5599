//! Portable checkpoint files.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic      8 bytes  "RSEPNET\0"
//! version    u32
//! n_blocks   u32
//! n_blocks x {
//!     name_len u16, name (UTF-8)
//!     ndim     u8,  dims u32 x ndim
//!     data     f64 x prod(dims)
//! }
//! ```
//!
//! Blocks: `config` = [hidden, heads, head_dim, head_hidden, leaky_slope,
//! rel_scale], `norm.offset` and `norm.scale` (6 each), then every
//! parameter block named in [`Layout`](super::Layout).

use std::collections::HashMap;
use std::fs;
use std::io::{Cursor, Read};
use std::path::Path;

use super::model::{Featurizer, NetConfig, Network};
use crate::error::{Error, Result};
use crate::observation::{Normalizer, STATE_DIM};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"RSEPNET\0";

fn put_block(buf: &mut Vec<u8>, name: &str, shape: &[usize], data: &[f64]) {
    buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
    buf.extend_from_slice(name.as_bytes());
    buf.push(shape.len() as u8);
    for d in shape {
        buf.extend_from_slice(&(*d as u32).to_le_bytes());
    }
    for v in data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode(net: &Network) -> Vec<u8> {
    let c = net.config();
    let f = net.features();
    let layout = net.layout();
    let mut buf = Vec::with_capacity(16 + 8 * net.num_params() + 64 * layout.blocks.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&((layout.blocks.len() + 3) as u32).to_le_bytes());
    let cfg = [c.hidden as f64, c.heads as f64, c.head_dim as f64, c.head_hidden as f64, c.leaky_slope, f.rel_scale];
    put_block(&mut buf, "config", &[cfg.len()], &cfg);
    put_block(&mut buf, "norm.offset", &[STATE_DIM], &f.norm.offset);
    put_block(&mut buf, "norm.scale", &[STATE_DIM], &f.norm.scale);
    for b in &layout.blocks {
        put_block(&mut buf, b.name, &b.shape, &net.params()[b.range()]);
    }
    buf
}

pub fn save_checkpoint(net: &Network, path: &Path) -> Result<()> {
    fs::write(path, encode(net))?;
    Ok(())
}

struct Reader<'a> {
    cur: Cursor<&'a [u8]>,
}

impl Reader<'_> {
    fn bytes<const N: usize>(&mut self) -> std::io::Result<[u8; N]> {
        let mut b = [0u8; N];
        self.cur.read_exact(&mut b)?;
        Ok(b)
    }
}

pub fn decode(bytes: &[u8]) -> std::result::Result<Network, Error> {
    let bad = |reason: &str| Error::Checkpoint { path: Default::default(), reason: reason.to_string() };
    let mut r = Reader { cur: Cursor::new(bytes) };
    let magic: [u8; 8] = r.bytes().map_err(|_| bad("truncated header"))?;
    if &magic != MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let version = u32::from_le_bytes(r.bytes().map_err(|_| bad("truncated header"))?);
    if version != CHECKPOINT_VERSION {
        return Err(Error::CheckpointVersion { found: version, expected: CHECKPOINT_VERSION });
    }
    let n = u32::from_le_bytes(r.bytes().map_err(|_| bad("truncated header"))?);
    let mut blocks: HashMap<String, (Vec<usize>, Vec<f64>)> = HashMap::new();
    for _ in 0..n {
        let trunc = |_| bad("truncated block");
        let len = u16::from_le_bytes(r.bytes().map_err(trunc)?) as usize;
        let mut name = vec![0u8; len];
        r.cur.read_exact(&mut name).map_err(trunc)?;
        let name = String::from_utf8(name).map_err(|_| bad("block name is not UTF-8"))?;
        let ndim = r.bytes::<1>().map_err(trunc)?[0] as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(u32::from_le_bytes(r.bytes().map_err(trunc)?) as usize);
        }
        let count: usize = shape.iter().product();
        let mut data = Vec::with_capacity(count);
        for _ in 0..count {
            data.push(f64::from_le_bytes(r.bytes().map_err(trunc)?));
        }
        blocks.insert(name, (shape, data));
    }
    let get = |name: &str| blocks.get(name).ok_or_else(|| bad(&format!("missing block {name}")));
    let (_, cfg) = get("config")?;
    if cfg.len() != 6 {
        return Err(bad("config block has wrong length"));
    }
    let config = NetConfig {
        hidden: cfg[0] as usize,
        heads: cfg[1] as usize,
        head_dim: cfg[2] as usize,
        head_hidden: cfg[3] as usize,
        leaky_slope: cfg[4],
    };
    let vec6 = |name: &str| -> Result<[f64; STATE_DIM]> {
        get(name)?.1.as_slice().try_into().map_err(|_| bad(&format!("{name} must have {STATE_DIM} entries")))
    };
    let norm = Normalizer::new(vec6("norm.offset")?, vec6("norm.scale")?)?;
    let features = Featurizer { norm, rel_scale: cfg[5] };
    config.validate()?;
    let layout = super::Layout::new(&config);
    let mut params = vec![0.0; layout.total];
    for b in &layout.blocks {
        let (shape, data) = get(b.name)?;
        if *shape != b.shape {
            return Err(bad(&format!("block {} has shape {:?}, expected {:?}", b.name, shape, b.shape)));
        }
        params[b.range()].copy_from_slice(data);
    }
    Network::from_params(config, features, params)
}

pub fn load_checkpoint(path: &Path) -> Result<Network> {
    let bytes = fs::read(path)?;
    decode(&bytes).map_err(|e| match e {
        Error::Checkpoint { reason, .. } => Error::Checkpoint { path: path.to_path_buf(), reason },
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn small() -> Network {
        let cfg = NetConfig { hidden: 4, heads: 2, head_dim: 2, head_hidden: 3, leaky_slope: 0.01 };
        Network::new(cfg, Featurizer::default(), &mut stream(&[1])).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let net = small();
        let back = decode(&encode(&net)).unwrap();
        assert_eq!(back, net);
        assert_eq!(back.digest(), net.digest());
    }

    #[test]
    fn version_mismatch_is_reported() {
        let mut bytes = encode(&small());
        bytes[8..12].copy_from_slice(&7u32.to_le_bytes());
        assert!(matches!(decode(&bytes), Err(Error::CheckpointVersion { found: 7, .. })));
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let bytes = encode(&small());
        assert!(decode(&bytes[..bytes.len() - 3]).is_err());
        assert!(decode(b"garbage!garbage!").is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.ckpt");
        let net = small();
        save_checkpoint(&net, &path).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), net);
    }
}
