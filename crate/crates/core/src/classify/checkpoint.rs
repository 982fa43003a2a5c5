//! Binary model checkpoint.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "QFCK"
//! 4       2     format version (u16 LE) = 1
//! 6       1     strategy id (0xFF = none)
//! 7       1     protocol id (0xFF = none)
//! 8       8     dim_in (u64 LE)
//! 16      8     training seed (u64 LE)
//! 24      4·n   θ as f32 LE, n = 2·dim_in + 2
//! ```

use std::fs;
use std::path::Path;

use crate::classify::ClassifierParams;
use crate::error::{Error, Result};
use crate::fusion::{Protocol, Strategy};

pub const MAGIC: &[u8; 4] = b"QFCK";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 24;
const NONE_ID: u8 = 0xFF;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub strategy: Option<Strategy>,
    pub protocol: Option<Protocol>,
    pub seed: u64,
    pub params: ClassifierParams,
}

impl Checkpoint {
    pub fn encode(&self) -> Vec<u8> {
        let theta = self.params.theta();
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * theta.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(self.strategy.map_or(NONE_ID, Strategy::id));
        out.push(self.protocol.map_or(NONE_ID, Protocol::id));
        out.extend_from_slice(&(self.params.dim_in() as u64).to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        for &t in theta {
            out.extend_from_slice(&(t as f32).to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let bad = |m: String| Error::Checkpoint(m);
        if bytes.len() < HEADER_LEN {
            return Err(bad(format!("{} bytes is shorter than the header", bytes.len())));
        }
        if &bytes[..4] != MAGIC {
            return Err(bad("bad magic".into()));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let strategy = match bytes[6] {
            NONE_ID => None,
            id => Some(Strategy::from_id(id).ok_or_else(|| bad(format!("unknown strategy id {id}")))?),
        };
        let protocol = match bytes[7] {
            NONE_ID => None,
            id => Some(Protocol::from_id(id).ok_or_else(|| bad(format!("unknown protocol id {id}")))?),
        };
        let word = |at: usize| u64::from_le_bytes(bytes[at..at + 8].try_into().expect("8-byte slice"));
        let dim_in = word(8);
        let seed = word(16);
        let body = &bytes[HEADER_LEN..];
        let expected = dim_in
            .checked_mul(2)
            .and_then(|n| n.checked_add(2))
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| bad(format!("dim_in {dim_in} overflows")))?;
        if body.len() as u64 != expected {
            return Err(bad(format!("parameter block is {} bytes, expected {expected}", body.len())));
        }
        let theta: Vec<f64> = body
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
            .collect();
        let params = ClassifierParams::from_theta(dim_in as usize, theta).map_err(|e| bad(e.to_string()))?;
        Ok(Checkpoint {
            strategy,
            protocol,
            seed,
            params,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::decode(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}
