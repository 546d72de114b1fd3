//! Binary checkpoint container.
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! magic "JKGCKPT\0" | u32 format version
//! u32 dim | str encoder | u64 entities | u64 relations | u64 words
//! u32 #config entries, each (str key, str value)
//! u32 #slots, each (str name, u8 ndim, u64 dims[ndim], f64 data[numel])
//! u64 #entity names, str* | u64 #relation names, str* | u64 #word names, str*
//! ```
//!
//! Strings are `u32 byte length` followed by UTF-8 bytes.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use super::store::ParameterStore;
use super::tensor::Shape;
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 8] = b"JKGCKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub dim: u32,
    pub encoder: String,
    pub entity_count: u64,
    pub relation_count: u64,
    pub word_count: u64,
    /// Model configuration as ordered `key=value` pairs.
    pub config: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotRecord {
    pub name: String,
    pub shape: Shape,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub slots: Vec<SlotRecord>,
    pub entities: Vec<String>,
    pub relations: Vec<String>,
    pub words: Vec<String>,
}

impl Checkpoint {
    pub fn slot(&self, name: &str) -> Option<&SlotRecord> {
        self.slots.iter().find(|s| s.name == name)
    }

    pub fn config_value(&self, key: &str) -> Option<&str> {
        self.header
            .config
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        let h = &self.header;
        w.write_all(MAGIC)?;
        w.write_u32::<LE>(h.format_version)?;
        w.write_u32::<LE>(h.dim)?;
        write_str(w, &h.encoder)?;
        w.write_u64::<LE>(h.entity_count)?;
        w.write_u64::<LE>(h.relation_count)?;
        w.write_u64::<LE>(h.word_count)?;
        w.write_u32::<LE>(h.config.len() as u32)?;
        for (k, v) in &h.config {
            write_str(w, k)?;
            write_str(w, v)?;
        }
        w.write_u32::<LE>(self.slots.len() as u32)?;
        for s in &self.slots {
            write_str(w, &s.name)?;
            let dims = s.shape.dims();
            w.write_u8(dims.len() as u8)?;
            for d in dims {
                w.write_u64::<LE>(d as u64)?;
            }
            for &x in &s.data {
                w.write_u64::<LE>(x.to_bits())?;
            }
        }
        for names in [&self.entities, &self.relations, &self.words] {
            w.write_u64::<LE>(names.len() as u64)?;
            for n in names {
                write_str(w, n)?;
            }
        }
        Ok(())
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<Self> {
        let ckpt = Self::read_from(&mut bytes)?;
        if !bytes.is_empty() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len())));
        }
        Ok(ckpt)
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let bad = |e: std::io::Error| Error::Checkpoint(format!("truncated or corrupt: {e}"));
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(bad)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
        }
        let format_version = r.read_u32::<LE>().map_err(bad)?;
        if format_version != CHECKPOINT_VERSION {
            return Err(Error::Mismatch(format!(
                "checkpoint format version {format_version} (expected {CHECKPOINT_VERSION})"
            )));
        }
        let dim = r.read_u32::<LE>().map_err(bad)?;
        let encoder = read_str(r)?;
        let entity_count = r.read_u64::<LE>().map_err(bad)?;
        let relation_count = r.read_u64::<LE>().map_err(bad)?;
        let word_count = r.read_u64::<LE>().map_err(bad)?;
        let n_cfg = r.read_u32::<LE>().map_err(bad)?;
        let config = (0..n_cfg)
            .map(|_| Ok((read_str(r)?, read_str(r)?)))
            .collect::<Result<Vec<_>>>()?;
        let n_slots = r.read_u32::<LE>().map_err(bad)?;
        let mut slots = Vec::with_capacity(n_slots as usize);
        for _ in 0..n_slots {
            let name = read_str(r)?;
            let shape = match r.read_u8().map_err(bad)? {
                1 => Shape::Vector(r.read_u64::<LE>().map_err(bad)? as usize),
                2 => {
                    let rows = r.read_u64::<LE>().map_err(bad)? as usize;
                    let cols = r.read_u64::<LE>().map_err(bad)? as usize;
                    Shape::Matrix(rows, cols)
                }
                n => return Err(Error::Checkpoint(format!("slot `{name}` has unsupported rank {n}"))),
            };
            let mut data = Vec::with_capacity(shape.numel());
            for _ in 0..shape.numel() {
                data.push(f64::from_bits(r.read_u64::<LE>().map_err(bad)?));
            }
            slots.push(SlotRecord { name, shape, data });
        }
        let mut read_names = || -> Result<Vec<String>> {
            let n = r.read_u64::<LE>().map_err(bad)?;
            (0..n).map(|_| read_str(r)).collect()
        };
        let entities = read_names()?;
        let relations = read_names()?;
        let words = read_names()?;
        Ok(Checkpoint {
            header: CheckpointHeader {
                format_version,
                dim,
                encoder,
                entity_count,
                relation_count,
                word_count,
                config,
            },
            slots,
            entities,
            relations,
            words,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::from_bytes(&bytes)
    }
}

fn write_str<W: Write>(w: &mut W, s: &str) -> std::io::Result<()> {
    w.write_u32::<LE>(s.len() as u32)?;
    w.write_all(s.as_bytes())
}

fn read_str<R: Read>(r: &mut R) -> Result<String> {
    let bad = |e: std::io::Error| Error::Checkpoint(format!("truncated or corrupt: {e}"));
    let len = r.read_u32::<LE>().map_err(bad)? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf).map_err(bad)?;
    String::from_utf8(buf).map_err(|e| Error::Checkpoint(format!("invalid UTF-8: {e}")))
}

impl<T: Scalar> ParameterStore<T> {
    pub fn to_records(&self) -> Vec<SlotRecord> {
        self.ids()
            .map(|id| SlotRecord {
                name: self.name(id).to_owned(),
                shape: self.shape(id),
                data: self.value(id).iter().map(|x| x.to_f64_lossless()).collect(),
            })
            .collect()
    }

    /// Copies every slot of the store from the matching record. Names and
    /// shapes must agree exactly.
    pub fn load_records(&mut self, records: &[SlotRecord]) -> Result<()> {
        let ids: Vec<_> = self.ids().collect();
        for id in ids {
            let name = self.name(id).to_owned();
            let rec = records
                .iter()
                .find(|r| r.name == name)
                .ok_or_else(|| Error::Mismatch(format!("checkpoint lacks slot `{name}`")))?;
            self.copy_record(id, rec)?;
        }
        Ok(())
    }

    pub fn copy_record(&mut self, id: super::store::SlotId, rec: &SlotRecord) -> Result<()> {
        if rec.shape != self.shape(id) {
            return Err(Error::Mismatch(format!(
                "slot `{}`: checkpoint shape {:?} vs model shape {:?}",
                rec.name,
                rec.shape.dims(),
                self.shape(id).dims()
            )));
        }
        for (dst, &src) in self.value_mut(id).iter_mut().zip(&rec.data) {
            *dst = T::from_f64_lossy(src);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample(values: Vec<f64>) -> Checkpoint {
        let n = values.len();
        Checkpoint {
            header: CheckpointHeader {
                format_version: CHECKPOINT_VERSION,
                dim: 4,
                encoder: "alstm".into(),
                entity_count: 2,
                relation_count: 1,
                word_count: 3,
                config: vec![("margin".into(), "2".into())],
            },
            slots: vec![
                SlotRecord {
                    name: "entity".into(),
                    shape: Shape::Matrix(1, n),
                    data: values.clone(),
                },
                SlotRecord {
                    name: "v_a".into(),
                    shape: Shape::Vector(n),
                    data: values,
                },
            ],
            entities: vec!["a".into(), "ü".into()],
            relations: vec!["r".into()],
            words: vec!["<unk>".into(), "x".into(), "y".into()],
        }
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(bits in proptest::collection::vec(any::<u64>(), 0..16)) {
            let values: Vec<f64> = bits.into_iter().map(f64::from_bits).collect();
            let ckpt = sample(values);
            let bytes = ckpt.to_bytes();
            let back = Checkpoint::from_bytes(&bytes).unwrap();
            prop_assert_eq!(back.to_bytes(), bytes);
            for (a, b) in ckpt.slots.iter().zip(&back.slots) {
                let ab: Vec<u64> = a.data.iter().map(|x| x.to_bits()).collect();
                let bb: Vec<u64> = b.data.iter().map(|x| x.to_bits()).collect();
                prop_assert_eq!(ab, bb);
            }
        }
    }

    #[test]
    fn rejects_bad_magic_and_version() {
        let mut bytes = sample(vec![1.0]).to_bytes();
        bytes[8] = 99;
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(Error::Mismatch(_))));
        bytes[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(Error::Checkpoint(_))));
        let good = sample(vec![1.0]).to_bytes();
        assert!(Checkpoint::from_bytes(&good[..good.len() - 1]).is_err());
    }
}
