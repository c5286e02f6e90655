//! Versioned little-endian binary checkpoint.
//!
//! ```text
//! magic "RADARCKP" | u32 version
//! config: u64 x 10 (input dims v,t,a, encoder_hidden, encoder_out,
//!         fusion_layers, fusion_heads, fusion_ff_dim, classifier_hidden,
//!         num_classes)
//! u32 meta length | meta utf-8
//! u32 tensor count
//! per tensor: u32 name length | name | u8 adaptable | u32 rank |
//!             u64 x rank shape | f64 x product(shape)
//! ```

use std::fs;
use std::path::Path;

use super::params::{AdaptableMask, ModelConfig, ModelParams};
use crate::error::{RadarError, Result};
use crate::feature_io::ModalityDims;

const MAGIC: &[u8; 8] = b"RADARCKP";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub mask: AdaptableMask,
    /// Free-form text, conventionally the resolved run configuration.
    pub meta: String,
}

impl Checkpoint {
    pub fn new(params: ModelParams, meta: impl Into<String>) -> Self {
        let mask = AdaptableMask::standard(&params);
        Checkpoint {
            params,
            mask,
            meta: meta.into(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        let c = &self.params.config;
        let fields = [
            c.input_dims.0[0],
            c.input_dims.0[1],
            c.input_dims.0[2],
            c.encoder_hidden,
            c.encoder_out,
            c.fusion_layers,
            c.fusion_heads,
            c.fusion_ff_dim,
            c.classifier_hidden,
            c.num_classes,
        ];
        for f in fields {
            out.extend_from_slice(&(f as u64).to_le_bytes());
        }
        out.extend_from_slice(&(self.meta.len() as u32).to_le_bytes());
        out.extend_from_slice(self.meta.as_bytes());
        let tensors = self.params.tensors();
        out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
        for ((name, t), &flag) in tensors.iter().zip(&self.mask.flags) {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(flag as u8);
            out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
            for &d in &t.shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &x in &t.data {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(RadarError::Checkpoint(
                "not a checkpoint file (bad magic)".into(),
            ));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(RadarError::Checkpoint(format!(
                "unsupported version {version}"
            )));
        }
        let mut f = [0usize; 10];
        for slot in &mut f {
            *slot = r.u64()? as usize;
        }
        let config = ModelConfig {
            input_dims: ModalityDims([f[0], f[1], f[2]]),
            encoder_hidden: f[3],
            encoder_out: f[4],
            fusion_layers: f[5],
            fusion_heads: f[6],
            fusion_ff_dim: f[7],
            classifier_hidden: f[8],
            num_classes: f[9],
        };
        config.validate()?;
        let meta_len = r.u32()? as usize;
        let meta = String::from_utf8(r.take(meta_len)?.to_vec())
            .map_err(|_| RadarError::Checkpoint("meta is not utf-8".into()))?;

        let mut params = ModelParams::zeros(&config);
        let count = r.u32()? as usize;
        if count != params.num_tensors() {
            return Err(RadarError::Checkpoint(format!(
                "expected {} tensors, found {count}",
                params.num_tensors()
            )));
        }
        let mut flags = Vec::with_capacity(count);
        let mut failure = None;
        params.for_each_mut(|expected, tensor| {
            if failure.is_some() {
                return;
            }
            let res = (|| -> Result<()> {
                let len = r.u32()? as usize;
                let name = std::str::from_utf8(r.take(len)?)
                    .map_err(|_| RadarError::Checkpoint("tensor name is not utf-8".into()))?;
                if name != expected {
                    return Err(RadarError::Checkpoint(format!(
                        "expected tensor {expected}, found {name}"
                    )));
                }
                flags.push(r.take(1)?[0] != 0);
                let rank = r.u32()? as usize;
                let shape = (0..rank)
                    .map(|_| r.u64().map(|d| d as usize))
                    .collect::<Result<Vec<_>>>()?;
                if shape != tensor.shape {
                    return Err(RadarError::Checkpoint(format!(
                        "tensor {name} has shape {shape:?}, expected {:?}",
                        tensor.shape
                    )));
                }
                for x in &mut tensor.data {
                    *x = f64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
                }
                Ok(())
            })();
            if let Err(e) = res {
                failure = Some(e);
            }
        });
        if let Some(e) = failure {
            return Err(e);
        }
        if r.pos != bytes.len() {
            return Err(RadarError::Checkpoint(
                "trailing bytes after last tensor".into(),
            ));
        }
        Ok(Checkpoint {
            params,
            mask: AdaptableMask { flags },
            meta,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| RadarError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| RadarError::io(path, e))?;
        Checkpoint::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| RadarError::Checkpoint("unexpected end of file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }
}
