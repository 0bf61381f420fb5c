//! Permutation-set file.
//!
//! ```text
//! "STPK" | version u16 | epoch u64 | count u32 | entries...
//! entry = role u8 | layer u16 | dim u32 | u32 × dim
//! ```
//!
//! Shared entries (`π`, `π_c`) always come first, then the developer-private
//! per-layer entries in layer order. MoE layers repeat the `π_{i,3}` role
//! once per expert.

use stip_core::transform::{LayerKeys, ProjectionKeys};
use stip_core::{PermutationSet, PermutationVec, SharedKeys};

use crate::bytes::{Reader, Writer};
use crate::error::{Error, Result};

pub const KEYS_MAGIC: &[u8; 4] = b"STPK";
pub const KEYS_VERSION: u16 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum KeyRole {
    Pi = 0,
    PiC = 1,
    AttnQk = 2,
    AttnVo = 3,
    Ffn = 4,
    ProjV = 5,
    ProjT = 6,
}

impl KeyRole {
    pub fn from_code(c: u8) -> Option<Self> {
        Some(match c {
            0 => KeyRole::Pi,
            1 => KeyRole::PiC,
            2 => KeyRole::AttnQk,
            3 => KeyRole::AttnVo,
            4 => KeyRole::Ffn,
            5 => KeyRole::ProjV,
            6 => KeyRole::ProjT,
            _ => return None,
        })
    }

    /// Roles a data owner may hold.
    pub fn is_shared(self) -> bool {
        matches!(self, KeyRole::Pi | KeyRole::PiC)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeyEntry {
    pub role: KeyRole,
    pub layer: u16,
    pub perm: PermutationVec,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeyFile {
    pub epoch: u64,
    pub entries: Vec<KeyEntry>,
}

impl KeyFile {
    pub fn from_set(set: &PermutationSet) -> Result<Self> {
        let mut entries = vec![
            KeyEntry { role: KeyRole::Pi, layer: 0, perm: set.pi.clone() },
            KeyEntry { role: KeyRole::PiC, layer: 0, perm: set.pi_c.clone() },
        ];
        for (i, l) in set.layers.iter().enumerate() {
            let layer = u16::try_from(i).map_err(|_| Error::format("key file", "more than 65535 layers"))?;
            entries.push(KeyEntry { role: KeyRole::AttnQk, layer, perm: l.attn_qk.clone() });
            entries.push(KeyEntry { role: KeyRole::AttnVo, layer, perm: l.attn_vo.clone() });
            for p in &l.ffn {
                entries.push(KeyEntry { role: KeyRole::Ffn, layer, perm: p.clone() });
            }
        }
        if let Some(p) = &set.projection {
            entries.push(KeyEntry { role: KeyRole::ProjV, layer: 0, perm: p.pi_v.clone() });
            entries.push(KeyEntry { role: KeyRole::ProjT, layer: 0, perm: p.pi_t.clone() });
        }
        Ok(Self { epoch: set.epoch, entries })
    }

    pub fn from_shared(keys: &SharedKeys) -> Self {
        Self {
            epoch: keys.epoch,
            entries: vec![
                KeyEntry { role: KeyRole::Pi, layer: 0, perm: keys.pi.clone() },
                KeyEntry { role: KeyRole::PiC, layer: 0, perm: keys.pi_c.clone() },
            ],
        }
    }

    fn find(&self, role: KeyRole) -> Result<&PermutationVec> {
        let mut hits = self.entries.iter().filter(|e| e.role == role);
        match (hits.next(), hits.next()) {
            (Some(e), None) => Ok(&e.perm),
            (None, _) => Err(Error::format("key file", format!("missing {role:?}"))),
            _ => Err(Error::format("key file", format!("duplicate {role:?}"))),
        }
    }

    pub fn shared(&self) -> Result<SharedKeys> {
        Ok(SharedKeys {
            pi: self.find(KeyRole::Pi)?.clone(),
            pi_c: self.find(KeyRole::PiC)?.clone(),
            epoch: self.epoch,
        })
    }

    pub fn has_private(&self) -> bool {
        self.entries.iter().any(|e| !e.role.is_shared())
    }

    /// Rebuilds the full set; fails on a shared-only file.
    pub fn to_set(&self) -> Result<PermutationSet> {
        let shared = self.shared()?;
        let n_layers = self
            .entries
            .iter()
            .filter(|e| e.role == KeyRole::AttnQk)
            .map(|e| e.layer as usize + 1)
            .max()
            .ok_or_else(|| Error::format("key file", "no per-layer permutations"))?;
        let mut layers = Vec::with_capacity(n_layers);
        for i in 0..n_layers {
            let of = |role| self.entries.iter().filter(move |e| e.role == role && e.layer as usize == i);
            let one = |role: KeyRole| -> Result<PermutationVec> {
                let v: Vec<_> = of(role).collect();
                match v.as_slice() {
                    [e] => Ok(e.perm.clone()),
                    _ => Err(Error::format("key file", format!("layer {i}: {} {role:?} entries", v.len()))),
                }
            };
            layers.push(LayerKeys {
                attn_qk: one(KeyRole::AttnQk)?,
                attn_vo: one(KeyRole::AttnVo)?,
                ffn: of(KeyRole::Ffn).map(|e| e.perm.clone()).collect(),
            });
        }
        let projection = match (self.find(KeyRole::ProjV), self.find(KeyRole::ProjT)) {
            (Ok(v), Ok(t)) => Some(ProjectionKeys { pi_v: v.clone(), pi_t: t.clone() }),
            _ => None,
        };
        Ok(PermutationSet { pi: shared.pi, pi_c: shared.pi_c, layers, projection, epoch: self.epoch })
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut w = Writer::default();
        w.bytes(KEYS_MAGIC);
        w.u16(KEYS_VERSION);
        w.u64(self.epoch);
        w.dim("key count", self.entries.len())?;
        for e in &self.entries {
            w.u8(e.role as u8);
            w.u16(e.layer);
            w.dim("permutation dim", e.perm.dim())?;
            for &i in e.perm.map() {
                w.dim("permutation index", i)?;
            }
        }
        Ok(w.buf)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "key file");
        r.expect_magic(KEYS_MAGIC)?;
        let version = r.u16()?;
        if version != KEYS_VERSION {
            return Err(r.err(format!("unsupported version {version}")));
        }
        let epoch = r.u64()?;
        let count = r.u32()? as usize;
        let mut entries = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let code = r.u8()?;
            let role = KeyRole::from_code(code).ok_or_else(|| r.err(format!("unknown role {code}")))?;
            let layer = r.u16()?;
            let dim = r.u32()? as usize;
            let raw = r.take(dim.checked_mul(4).ok_or_else(|| r.err("dim overflow"))?)?;
            let map = raw.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap()) as usize).collect();
            entries.push(KeyEntry { role, layer, perm: PermutationVec::new(map)? });
        }
        r.finish()?;
        let first_private = entries.iter().position(|e| !e.role.is_shared()).unwrap_or(entries.len());
        if entries[first_private..].iter().any(|e| e.role.is_shared()) {
            return Err(Error::format("key file", "shared entry after the private section"));
        }
        Ok(Self { epoch, entries })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use stip_core::ModelConfig;

    #[test]
    fn dense_set_has_3l_plus_2_entries() {
        let cfg = ModelConfig::new(3, 8, 16, 10);
        let set = PermutationSet::generate(&cfg, 1).unwrap().with_epoch(5);
        let f = KeyFile::from_set(&set).unwrap();
        assert_eq!(f.entries.len(), 3 * 3 + 2);
        let back = KeyFile::decode(&f.encode().unwrap()).unwrap();
        assert_eq!(back.to_set().unwrap(), set);
        assert_eq!(back.shared().unwrap(), set.shared_part());
    }

    #[test]
    fn moe_and_projection_round_trip() {
        let cfg = ModelConfig::new(2, 8, 16, 10).with_experts(4, 2);
        let set = PermutationSet::generate(&cfg, 2).unwrap().with_projection(6, 3).unwrap();
        let f = KeyFile::from_set(&set).unwrap();
        assert_eq!(f.entries.len(), 2 + 2 * (2 + 4) + 2);
        assert_eq!(KeyFile::decode(&f.encode().unwrap()).unwrap().to_set().unwrap(), set);
    }

    #[test]
    fn shared_only_file() {
        let cfg = ModelConfig::new(1, 8, 16, 10);
        let keys = PermutationSet::generate(&cfg, 4).unwrap().shared_part();
        let f = KeyFile::decode(&KeyFile::from_shared(&keys).encode().unwrap()).unwrap();
        assert!(!f.has_private());
        assert_eq!(f.shared().unwrap(), keys);
        assert!(f.to_set().is_err());
    }

    #[test]
    fn rejects_broken_permutation() {
        let cfg = ModelConfig::new(1, 4, 8, 5);
        let set = PermutationSet::generate(&cfg, 1).unwrap();
        let mut b = KeyFile::from_set(&set).unwrap().encode().unwrap();
        // first index of π duplicated into the second slot
        let at = 4 + 2 + 8 + 4 + 1 + 2 + 4;
        let first: [u8; 4] = b[at..at + 4].try_into().unwrap();
        b[at + 4..at + 8].copy_from_slice(&first);
        assert!(KeyFile::decode(&b).is_err());
    }
}
