//! Binary checkpoint: magic, version, variant, dimensions, vocabulary hash,
//! then every parameter as (name, shape, little-endian f32 values).

use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use sha2::{Digest, Sha256};

use super::params::{ModelDims, ModelParams, Variant};
use crate::error::{Error, Result};
use crate::tensor::Array;

const MAGIC: &[u8; 4] = b"CPDL";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams<f32>,
    pub vocab_hash: String,
}

fn write_str(w: &mut impl Write, s: &str) -> std::io::Result<()> {
    w.write_u32::<LittleEndian>(s.len() as u32)?;
    w.write_all(s.as_bytes())
}

fn read_str(r: &mut impl Read) -> Result<String> {
    let n = r.read_u32::<LittleEndian>().map_err(truncated)? as usize;
    if n > 1 << 20 {
        return Err(Error::Checkpoint("string field too long".into()));
    }
    let mut buf = vec![0; n];
    r.read_exact(&mut buf).map_err(truncated)?;
    String::from_utf8(buf).map_err(|_| Error::Checkpoint("invalid utf-8".into()))
}

fn truncated(e: std::io::Error) -> Error {
    Error::Checkpoint(format!("truncated or unreadable: {e}"))
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        let p = &self.params;
        // Writes into a Vec cannot fail.
        out.extend_from_slice(MAGIC);
        out.write_u32::<LittleEndian>(VERSION).unwrap();
        write_str(&mut out, p.variant.name()).unwrap();
        for d in [p.dims.vocab_size, p.dims.embedding, p.dims.hidden, p.dims.layers] {
            out.write_u64::<LittleEndian>(d as u64).unwrap();
        }
        write_str(&mut out, &self.vocab_hash).unwrap();
        out.write_u32::<LittleEndian>(p.params.len() as u32).unwrap();
        for (_, name, value) in p.params.iter() {
            write_str(&mut out, name).unwrap();
            out.write_u32::<LittleEndian>(value.shape().len() as u32).unwrap();
            for &s in value.shape() {
                out.write_u64::<LittleEndian>(s as u64).unwrap();
            }
            for &x in value.data() {
                out.write_f32::<LittleEndian>(x).unwrap();
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(truncated)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file".into()));
        }
        let version = r.read_u32::<LittleEndian>().map_err(truncated)?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let variant: Variant = read_str(&mut r)?.parse()?;
        let mut dims = [0usize; 4];
        for d in &mut dims {
            *d = r.read_u64::<LittleEndian>().map_err(truncated)? as usize;
        }
        let dims = ModelDims {
            vocab_size: dims[0],
            embedding: dims[1],
            hidden: dims[2],
            layers: dims[3],
        };
        let vocab_hash = read_str(&mut r)?;
        let mut params = ModelParams::<f32>::layout(variant, dims)?;
        let count = r.read_u32::<LittleEndian>().map_err(truncated)? as usize;
        if count != params.params.len() {
            return Err(Error::Checkpoint(format!(
                "{count} tensors stored, layout needs {}",
                params.params.len()
            )));
        }
        let ids: Vec<_> = params.params.ids().collect();
        for id in ids {
            let name = read_str(&mut r)?;
            if name != params.params.name(id) {
                return Err(Error::Checkpoint(format!(
                    "expected tensor {}, found {name}",
                    params.params.name(id)
                )));
            }
            let rank = r.read_u32::<LittleEndian>().map_err(truncated)? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.read_u64::<LittleEndian>().map_err(truncated)? as usize);
            }
            if shape != params.params.get(id).shape() {
                return Err(Error::Checkpoint(format!("shape mismatch for {name}")));
            }
            let n: usize = shape.iter().product();
            let mut data = vec![0f32; n];
            r.read_f32_into::<LittleEndian>(&mut data).map_err(truncated)?;
            *params.params.get_mut(id) = Array::new(shape, data)?;
        }
        if !r.is_empty() {
            return Err(Error::Checkpoint("trailing bytes".into()));
        }
        Ok(Checkpoint { params, vocab_hash })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    /// Loads a checkpoint and, when `expected_vocab_hash` is given, checks
    /// that it was trained against the same vocabulary.
    pub fn load(path: impl AsRef<Path>, expected_vocab_hash: Option<&str>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let ckpt = Self::from_bytes(&bytes)?;
        if let Some(expected) = expected_vocab_hash {
            ckpt.check_vocab(expected)?;
        }
        Ok(ckpt)
    }

    pub fn check_vocab(&self, vocab_hash: &str) -> Result<()> {
        if self.vocab_hash != vocab_hash {
            return Err(Error::VocabMismatch {
                expected: self.vocab_hash.clone(),
                found: vocab_hash.to_string(),
            });
        }
        Ok(())
    }

    /// Content hash of the serialized checkpoint.
    pub fn content_hash(&self) -> String {
        hex::encode(&Sha256::digest(self.to_bytes())[..16])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_params(variant: Variant) -> ModelParams<f32> {
        let dims = ModelDims {
            vocab_size: 9,
            embedding: 3,
            hidden: 4,
            layers: 2,
        };
        let mut p = ModelParams::<f32>::layout(variant, dims).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ids: Vec<_> = p.params.ids().collect();
        for id in ids {
            for x in p.params.get_mut(id).data_mut() {
                *x = rng.gen_range(-1.0..1.0);
            }
        }
        p
    }

    #[test]
    fn round_trip_every_variant() {
        for v in Variant::ALL {
            let ckpt = Checkpoint {
                params: random_params(v),
                vocab_hash: "abc".into(),
            };
            let back = Checkpoint::from_bytes(&ckpt.to_bytes()).unwrap();
            assert_eq!(back, ckpt);
            assert_eq!(back.content_hash(), ckpt.content_hash());
        }
    }

    #[test]
    fn vocab_hash_is_validated() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let ckpt = Checkpoint {
            params: random_params(Variant::Copy),
            vocab_hash: "abc".into(),
        };
        ckpt.save(&path).unwrap();
        assert!(Checkpoint::load(&path, Some("abc")).is_ok());
        assert!(matches!(
            Checkpoint::load(&path, Some("xyz")),
            Err(Error::VocabMismatch { .. })
        ));
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let ckpt = Checkpoint {
            params: random_params(Variant::Attn),
            vocab_hash: "abc".into(),
        };
        let bytes = ckpt.to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        assert!(Checkpoint::from_bytes(b"nope").is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(Checkpoint::from_bytes(&extra).is_err());
    }
}
