//! `FKCFG1` configuration snapshots.
//!
//! Layout (all integers little-endian):
//!
//! | offset | bytes | field                                               |
//! |--------|-------|-----------------------------------------------------|
//! | 0      | 6     | magic `FKCFG1`                                      |
//! | 6      | 1     | family (1 box, 2 torus, 3 tri, 4 tri torus, 5 hex)  |
//! | 7      | 1     | size kind (0 box, 1 torus, 2 region)                |
//! | 8      | 32    | four `i64` size words (`n`/`m` then zeros, or rect) |
//! | 40     | 1     | embedding parity                                    |
//! | 41     | 8     | edge count `u64`                                    |
//! | 49     | 1     | seed present flag                                   |
//! | 50     | 8     | RNG seed `u64` (zero when absent)                   |
//! | 58     | ⌈E/8⌉ | edge states, edge `e` at bit `e % 8` of byte `e / 8` |

use std::io::{Read, Write};

use crate::configuration::Configuration;
use crate::error::{Error, Result};
use crate::lattice::{Family, Lattice, RectSpec, Size};

pub const MAGIC: &[u8; 6] = b"FKCFG1";
const HEADER_LEN: usize = 58;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Snapshot {
    pub family: Family,
    pub size: Size,
    pub parity: u8,
    pub edge_count: u64,
    pub seed: Option<u64>,
    pub states: Vec<bool>,
}

impl Snapshot {
    pub fn capture(lattice: &Lattice, config: &Configuration, seed: Option<u64>) -> Result<Self> {
        config.check(lattice)?;
        Ok(Self {
            family: lattice.family(),
            size: lattice.size(),
            parity: lattice.parity() as u8,
            edge_count: lattice.n_edges() as u64,
            seed,
            states: (0..config.len()).map(|e| config.is_open(e)).collect(),
        })
    }

    /// Rebuilds the configuration against a matching lattice.
    pub fn configuration(&self, lattice: &Lattice) -> Result<Configuration> {
        if lattice.family() != self.family
            || lattice.size() != self.size
            || lattice.parity() as u8 != self.parity
        {
            return Err(Error::Format(format!(
                "snapshot is for {} {:?}, lattice is {} {:?}",
                self.family.name(),
                self.size,
                lattice.family().name(),
                lattice.size()
            )));
        }
        Configuration::from_bits(lattice, &self.states)
    }

    /// Lattice described by the header (primal embedding only).
    pub fn lattice(&self) -> Result<Lattice> {
        if self.parity != 0 {
            return Err(Error::Format("dual-embedded lattices cannot be rebuilt from a header".into()));
        }
        Lattice::build(self.family, self.size)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.states.len().div_ceil(8));
        out.extend_from_slice(MAGIC);
        out.push(self.family.code());
        let (kind, words): (u8, [i64; 4]) = match self.size {
            Size::Box { n } => (0, [n as i64, 0, 0, 0]),
            Size::Torus { m } => (1, [m as i64, 0, 0, 0]),
            Size::Region { rect } => (2, [rect.x0, rect.x1, rect.y0, rect.y1]),
        };
        out.push(kind);
        for w in words {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out.push(self.parity);
        out.extend_from_slice(&self.edge_count.to_le_bytes());
        out.push(u8::from(self.seed.is_some()));
        out.extend_from_slice(&self.seed.unwrap_or(0).to_le_bytes());
        let mut packed = vec![0u8; self.states.len().div_ceil(8)];
        for (e, &open) in self.states.iter().enumerate() {
            if open {
                packed[e / 8] |= 1 << (e % 8);
            }
        }
        out.extend_from_slice(&packed);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Format(format!("truncated header ({} bytes)", bytes.len())));
        }
        if &bytes[..6] != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let family = Family::from_code(bytes[6])
            .ok_or_else(|| Error::Format(format!("unknown family code {}", bytes[6])))?;
        let word = |k: usize| i64::from_le_bytes(bytes[8 + 8 * k..16 + 8 * k].try_into().unwrap());
        let size = match bytes[7] {
            0 => Size::Box { n: word(0) as usize },
            1 => Size::Torus { m: word(0) as usize },
            2 => Size::Region {
                rect: RectSpec::new(word(0), word(1), word(2), word(3)),
            },
            k => return Err(Error::Format(format!("unknown size kind {k}"))),
        };
        let parity = bytes[40];
        let edge_count = u64::from_le_bytes(bytes[41..49].try_into().unwrap());
        let seed = match bytes[49] {
            0 => None,
            1 => Some(u64::from_le_bytes(bytes[50..58].try_into().unwrap())),
            f => return Err(Error::Format(format!("bad seed flag {f}"))),
        };
        let n = edge_count as usize;
        let body = &bytes[HEADER_LEN..];
        if body.len() != n.div_ceil(8) {
            return Err(Error::Format(format!(
                "expected {} state bytes for {n} edges, found {}",
                n.div_ceil(8),
                body.len()
            )));
        }
        let states = (0..n).map(|e| body[e / 8] >> (e % 8) & 1 == 1).collect();
        Ok(Self {
            family,
            size,
            parity,
            edge_count,
            seed,
            states,
        })
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }
}
