//! Checkpoint files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "FICK"  u32 version
//! train state: u64 step, f64 gamma, f64 learning rate, u8 optimizer (0 adam, 1 sgd),
//!              u64 seed, u32 moment count, then per moment:
//!              name, u64 t, tensor m, tensor v
//! config:      u32 length, UTF-8 text
//! parameters:  u32 count, then per parameter: name, tensor
//! ```
//!
//! A name is a u32 byte length followed by UTF-8; a tensor uses the `FITN`
//! encoding of [`Tensor::write_to`].

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::tensor::{read_exact, read_u32, Tensor};
use crate::training::{Moments, OptimizerKind, TrainState};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"FICK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub state: TrainState,
    /// Training configuration text the parameters were produced with.
    pub config: String,
    pub params: ParamStore,
}

fn write_name(w: &mut impl Write, name: &str) -> std::io::Result<()> {
    w.write_all(&(name.len() as u32).to_le_bytes())?;
    w.write_all(name.as_bytes())
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_string(r: &mut impl Read, what: &str) -> Result<String> {
    let n = read_u32(r)? as usize;
    if n > 1 << 24 {
        return Err(Error::format("checkpoint", format!("{what} length {n} is implausible")));
    }
    let mut b = vec![0u8; n];
    read_exact(r, &mut b)?;
    String::from_utf8(b).map_err(|_| Error::format("checkpoint", format!("{what} is not UTF-8")))
}

impl Checkpoint {
    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        let s = &self.state;
        w.write_all(&s.step.to_le_bytes())?;
        w.write_all(&s.gamma.to_le_bytes())?;
        w.write_all(&s.learning_rate.to_le_bytes())?;
        w.write_all(&[match s.optimizer {
            OptimizerKind::Adam => 0,
            OptimizerKind::Sgd => 1,
        }])?;
        w.write_all(&s.seed.to_le_bytes())?;
        w.write_all(&(s.moments.len() as u32).to_le_bytes())?;
        for (name, m) in &s.moments {
            write_name(w, name)?;
            w.write_all(&m.t.to_le_bytes())?;
            m.m.write_to(w)?;
            m.v.write_to(w)?;
        }
        write_name(w, &self.config)?;
        w.write_all(&(self.params.len() as u32).to_le_bytes())?;
        for (name, t) in self.params.iter() {
            write_name(w, name)?;
            t.write_to(w)?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        read_exact(r, &mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::format("checkpoint", "bad magic"));
        }
        let version = read_u32(r)?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let step = read_u64(r)?;
        let gamma = f64::from_bits(read_u64(r)?);
        let learning_rate = f64::from_bits(read_u64(r)?);
        let mut opt = [0u8; 1];
        read_exact(r, &mut opt)?;
        let optimizer = match opt[0] {
            0 => OptimizerKind::Adam,
            1 => OptimizerKind::Sgd,
            k => return Err(Error::format("checkpoint", format!("unknown optimizer tag {k}"))),
        };
        let seed = read_u64(r)?;
        let mut state = TrainState::new(gamma, learning_rate, optimizer, seed);
        state.step = step;
        for _ in 0..read_u32(r)? {
            let name = read_string(r, "moment name")?;
            let t = read_u64(r)?;
            let m = Tensor::read_from(r)?;
            let v = Tensor::read_from(r)?;
            state.moments.insert(name, Moments { m, v, t });
        }
        let config = read_string(r, "config")?;
        let mut params = ParamStore::new();
        for _ in 0..read_u32(r)? {
            let name = read_string(r, "parameter name")?;
            let t = Tensor::read_from(r)?;
            params.insert(name, t);
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest).map_err(|e| Error::format("checkpoint", e.to_string()))? != 0 {
            return Err(Error::format("checkpoint", "trailing bytes"));
        }
        Ok(Checkpoint { state, config, params })
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<Self> {
        Self::read_from(&mut bytes)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Loads and checks that the parameter names and shapes are exactly those of `expected`.
    pub fn load_matching(path: &Path, expected: &ParamStore) -> Result<Self> {
        let ck = Self::load(path)?;
        ck.params.check_matches(expected)?;
        Ok(ck)
    }
}
