//! Binary checkpoint format, all integers little-endian:
//!
//! ```text
//! magic    "FSCK"
//! version  u16
//! header   u32 length + UTF-8 JSON (architecture, shapes, config, epoch, classes, metadata)
//! count    u32 number of tensors
//! tensor*  u32 name length, name bytes, u32 rank, rank × u64 extents, extents-product × f64
//! ```
//!
//! Anything after the last tensor is rejected.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::error::{Error, Result};
use crate::models::{Architecture, ModelGraph};
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"FSCK";
pub const CHECKPOINT_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    architecture: Architecture,
    num_classes: usize,
    input_shape: [usize; 3],
    dropout_ratio: f64,
    train_config: TrainConfig,
    epoch: usize,
    class_names: Vec<String>,
    metadata: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub architecture: Architecture,
    pub num_classes: usize,
    pub input_shape: [usize; 3],
    pub dropout_ratio: f64,
    pub train_config: TrainConfig,
    /// Number of completed epochs.
    pub epoch: usize,
    pub class_names: Vec<String>,
    /// Free-form provenance, e.g. how to regenerate the data split.
    pub metadata: BTreeMap<String, String>,
    pub parameters: BTreeMap<String, Tensor>,
}

impl Checkpoint {
    pub fn from_model(
        model: &ModelGraph,
        train_config: &TrainConfig,
        epoch: usize,
        class_names: Vec<String>,
    ) -> Result<Self> {
        let architecture = model.architecture().ok_or_else(|| {
            Error::InvalidConfig("only graphs built by a named architecture can be checkpointed".into())
        })?;
        if class_names.len() != model.num_classes() {
            return Err(Error::ClassSetMismatch(format!(
                "{} class names for a {}-class model",
                class_names.len(),
                model.num_classes()
            )));
        }
        Ok(Self {
            architecture,
            num_classes: model.num_classes(),
            input_shape: model.input_shape(),
            dropout_ratio: model.dropout_ratio().unwrap_or(0.0),
            train_config: *train_config,
            epoch,
            class_names,
            metadata: BTreeMap::new(),
            parameters: model.parameters().clone(),
        })
    }

    /// Rebuilds the model graph and installs the stored parameters.
    pub fn model(&self) -> Result<ModelGraph> {
        self.architecture
            .build(self.num_classes, self.input_shape, self.dropout_ratio, 0)?
            .with_parameters(self.parameters.clone())
            .map_err(|e| Error::CorruptCheckpoint(e.to_string()))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            architecture: self.architecture,
            num_classes: self.num_classes,
            input_shape: self.input_shape,
            dropout_ratio: self.dropout_ratio,
            train_config: self.train_config,
            epoch: self.epoch,
            class_names: self.class_names.clone(),
            metadata: self.metadata.clone(),
        };
        let header = serde_json::to_vec(&header).expect("header is plain data");
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&(self.parameters.len() as u32).to_le_bytes());
        for (name, t) in &self.parameters {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.ndim() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(Error::CorruptCheckpoint("bad magic bytes".into()));
        }
        let version = u16::from_le_bytes(r.array()?);
        if version != CHECKPOINT_VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let header_len = r.u32()? as usize;
        let header: Header = serde_json::from_slice(r.take(header_len)?)
            .map_err(|e| Error::CorruptCheckpoint(format!("header: {e}")))?;
        let count = r.u32()? as usize;
        let mut parameters = BTreeMap::new();
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| Error::CorruptCheckpoint("tensor name is not UTF-8".into()))?
                .to_string();
            let rank = r.u32()? as usize;
            if rank == 0 || rank > 8 {
                return Err(Error::CorruptCheckpoint(format!("tensor {name} has rank {rank}")));
            }
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(u64::from_le_bytes(r.array()?) as usize);
            }
            let len = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .filter(|&l| l.checked_mul(8).is_some_and(|b| b <= r.remaining()))
                .ok_or_else(|| Error::CorruptCheckpoint(format!("tensor {name} overruns the file")))?;
            let data = r
                .take(len * 8)?
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
                .collect();
            let t = Tensor::new(shape, data).map_err(|e| Error::CorruptCheckpoint(e.to_string()))?;
            if parameters.insert(name.clone(), t).is_some() {
                return Err(Error::CorruptCheckpoint(format!("duplicate tensor {name}")));
            }
        }
        if r.remaining() != 0 {
            return Err(Error::CorruptCheckpoint(format!(
                "{} trailing bytes after the last tensor",
                r.remaining()
            )));
        }
        if header.class_names.len() != header.num_classes {
            return Err(Error::CorruptCheckpoint("class name count differs from class count".into()));
        }
        Ok(Self {
            architecture: header.architecture,
            num_classes: header.num_classes,
            input_shape: header.input_shape,
            dropout_ratio: header.dropout_ratio,
            train_config: header.train_config,
            epoch: header.epoch,
            class_names: header.class_names,
            metadata: header.metadata,
            parameters,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if n > self.remaining() {
            return Err(Error::CorruptCheckpoint(format!(
                "truncated: needed {n} bytes at offset {}, {} left",
                self.pos,
                self.remaining()
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("exact length"))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }
}

pub fn save_checkpoint(checkpoint: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, checkpoint.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{build_mini_inceptionnet, build_mini_plainnet};

    fn sample() -> Checkpoint {
        let model = build_mini_plainnet(3, [3, 8, 8], 7).unwrap();
        let mut ck = Checkpoint::from_model(
            &model,
            &TrainConfig::default(),
            4,
            vec!["a".into(), "b".into(), "c".into()],
        )
        .unwrap();
        ck.metadata.insert("split_seed".into(), "9".into());
        ck
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ck = sample();
        let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        assert_eq!(back, ck);
        for (name, t) in &ck.parameters {
            let bits: Vec<u64> = t.data().iter().map(|v| v.to_bits()).collect();
            let back_bits: Vec<u64> = back.parameters[name].data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(bits, back_bits);
        }
        assert_eq!(back.model().unwrap().parameters(), &ck.parameters);
    }

    #[test]
    fn inception_round_trip() {
        let model = build_mini_inceptionnet(4, [3, 32, 32], 1).unwrap();
        let names = (0..4).map(|i| format!("class {i}")).collect();
        let ck = Checkpoint::from_model(&model, &TrainConfig::default(), 0, names).unwrap();
        assert_eq!(Checkpoint::from_bytes(&ck.to_bytes()).unwrap().model().unwrap(), model);
    }

    #[test]
    fn corruption_detected() {
        let bytes = sample().to_bytes();
        for cut in [0, 3, 5, 20, bytes.len() / 2, bytes.len() - 1] {
            assert!(
                matches!(Checkpoint::from_bytes(&bytes[..cut]), Err(Error::CorruptCheckpoint(_))),
                "cut at {cut}"
            );
        }
        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&bad_magic), Err(Error::CorruptCheckpoint(_))));

        let mut trailing = bytes.clone();
        trailing.push(0);
        assert!(matches!(Checkpoint::from_bytes(&trailing), Err(Error::CorruptCheckpoint(_))));

        let mut future = bytes;
        future[4] = 2;
        assert!(matches!(
            Checkpoint::from_bytes(&future),
            Err(Error::VersionMismatch { found: 2, expected: 1 })
        ));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.fsck");
        let ck = sample();
        save_checkpoint(&ck, &path).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), ck);
        assert!(matches!(
            load_checkpoint(dir.path().join("missing")),
            Err(Error::IoFailure { .. })
        ));
    }
}
