//! Checkpoint files.
//!
//! Layout, all integers little-endian `u64` unless noted:
//!
//! 1. magic `DEXFM01` (7 bytes) and a format version byte;
//! 2. a 32-byte SHA-256 digest of the schema and vocabulary files;
//! 3. the length-prefixed UTF-8 `key=value` configuration text;
//! 4. the tensor count, then every parameter tensor in storage order;
//! 5. the Adam step, then first and second moments in the same order;
//! 6. the number of completed epochs.

use std::fmt::Write as _;
use std::path::Path;

use dexfm_core::adam::{AdamConfig, AdamState};
use dexfm_core::deepnet::MlpConfig;
use dexfm_core::training::{apply_variant, Wiring};
use dexfm_core::{DeinConfig, Model, ModelSpec, ParameterSet, Tensor, TrainConfig, Variant};
use sha2::{Digest, Sha256};

use crate::codec::{put_tensor, put_u64, Reader};
use crate::error::{read_bytes, write_file, Result};

pub const MAGIC: &[u8; 7] = b"DEXFM01";
pub const VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CheckpointError {
    #[error("not a checkpoint (bad magic tag)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}, expected {VERSION}")]
    Version(u8),
    #[error("checkpoint is truncated")]
    Truncated,
    #[error("schema or vocabulary differs from the one the checkpoint was trained with")]
    DigestMismatch,
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
}

pub type Digest32 = [u8; 32];

/// Digest binding a checkpoint to its input description. The schema part is
/// length-prefixed so that no two file pairs share a byte stream.
pub fn content_digest(schema: &[u8], vocabulary: &[u8]) -> Digest32 {
    let mut h = Sha256::new();
    h.update((schema.len() as u64).to_le_bytes());
    h.update(schema);
    h.update(vocabulary);
    h.finalize().into()
}

pub fn digest_files(schema: &Path, vocabulary: &Path) -> Result<Digest32> {
    Ok(content_digest(&read_bytes(schema)?, &read_bytes(vocabulary)?))
}

pub fn hex(d: &Digest32) -> String {
    d.iter().fold(String::with_capacity(64), |mut s, b| {
        write!(s, "{b:02x}").unwrap();
        s
    })
}

/// A trained model together with everything needed to resume or reuse it.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub digest: Digest32,
    pub config: TrainConfig,
    /// Structure after the variant was applied.
    pub model: Model,
    pub adam: AdamState,
    /// Completed epochs.
    pub epoch: usize,
}

impl Checkpoint {
    pub fn wiring(&self) -> Result<Wiring, CheckpointError> {
        apply_variant(&self.model.spec, &self.config).map_err(|e| CheckpointError::Malformed(e.to_string()))
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.extend_from_slice(&self.digest);
        let text = config_text(&self.model.spec, &self.config);
        put_u64(&mut out, text.len() as u64);
        out.extend_from_slice(text.as_bytes());
        let tensors = self.model.params.tensors();
        put_u64(&mut out, tensors.len() as u64);
        for t in tensors {
            put_tensor(&mut out, t);
        }
        put_u64(&mut out, self.adam.step_count());
        for t in self.adam.first_moments().iter().chain(self.adam.second_moments()) {
            put_tensor(&mut out, t);
        }
        put_u64(&mut out, self.epoch as u64);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader::new(bytes);
        if r.bytes(MAGIC.len()).map_err(|_| CheckpointError::BadMagic)? != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = r.u8()?;
        if version != VERSION {
            return Err(CheckpointError::Version(version));
        }
        let digest: Digest32 = r.bytes(32)?.try_into().unwrap();
        let n = r.size()?;
        let text = std::str::from_utf8(r.bytes(n)?).map_err(|_| CheckpointError::Malformed("config is not UTF-8".into()))?;
        let (spec, config) = parse_config_text(text)?;

        let count = r.size()?;
        let expected = spec.param_infos().len();
        if count != expected {
            return Err(CheckpointError::Malformed(format!("{count} tensors, structure needs {expected}")));
        }
        let tensors = read_tensors(&mut r, count)?;
        let params = ParameterSet::from_tensors(&spec, tensors).map_err(|e| CheckpointError::Malformed(e.to_string()))?;
        let step = r.u64()?;
        let first = read_tensors(&mut r, count)?;
        let second = read_tensors(&mut r, count)?;
        if first.iter().zip(params.tensors()).any(|(m, p)| m.shape() != p.shape()) {
            return Err(CheckpointError::Malformed("optimizer moments do not match the parameters".into()));
        }
        let adam = AdamState::from_parts(config.adam, step, first, second)
            .map_err(|e| CheckpointError::Malformed(e.to_string()))?;
        let epoch = r.size()?;
        if r.remaining() != 0 {
            return Err(CheckpointError::Malformed(format!("{} trailing bytes", r.remaining())));
        }
        Ok(Self {
            digest,
            config,
            model: Model { spec, params },
            adam,
            epoch,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, self.encode())
    }

    /// Loads `path` and, when `expected` is given, rejects a checkpoint
    /// trained against different schema or vocabulary files.
    pub fn load(path: &Path, expected: Option<&Digest32>) -> Result<Self> {
        let ckpt = Self::decode(&read_bytes(path)?)?;
        if expected.is_some_and(|d| *d != ckpt.digest) {
            return Err(CheckpointError::DigestMismatch.into());
        }
        Ok(ckpt)
    }
}

fn read_tensors(r: &mut Reader<'_>, n: usize) -> Result<Vec<Tensor>, CheckpointError> {
    (0..n).map(|_| r.tensor()).collect()
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

/// Floats use the shortest representation that parses back exactly.
pub fn config_text(spec: &ModelSpec, c: &TrainConfig) -> String {
    let mut s = String::new();
    let mut kv = |k: &str, v: String| writeln!(s, "{k}={v}").unwrap();
    kv("field_sizes", join(&spec.field_sizes));
    kv("embed_dim", spec.embed_dim.to_string());
    kv("maps", join(&spec.dein.maps));
    kv("attention", spec.dein.attention.to_string());
    kv("attention_hidden", spec.dein.attention_hidden.to_string());
    kv(
        "mlp",
        spec.mlp.map_or_else(|| "none".to_string(), |m| format!("{}x{}", m.depth, m.width)),
    );
    kv("variant", c.variant.to_string());
    kv("lambda_d", c.lambda_d.to_string());
    kv("lambda_n", c.lambda_n.to_string());
    kv("learning_rate", c.adam.learning_rate.to_string());
    kv("beta1", c.adam.beta1.to_string());
    kv("beta2", c.adam.beta2.to_string());
    kv("epsilon", c.adam.epsilon.to_string());
    kv("epochs", c.epochs.to_string());
    kv("batch_size", c.batch_size.to_string());
    kv("seed", c.seed.to_string());
    kv("clip", c.clip.to_string());
    kv("patience", c.patience.map_or_else(|| "off".to_string(), |p| p.to_string()));
    kv("chunk_size", c.chunk_size.to_string());
    kv("max_norm", c.max_norm.map_or_else(|| "off".to_string(), |m| m.to_string()));
    s
}

fn parse_config_text(text: &str) -> Result<(ModelSpec, TrainConfig), CheckpointError> {
    let bad = |k: &str| CheckpointError::Malformed(format!("config key `{k}`"));
    let map: std::collections::BTreeMap<&str, &str> = text.lines().filter_map(|l| l.split_once('=')).collect();
    let get = |k: &str| map.get(k).copied().ok_or_else(|| bad(k));
    fn num<T: std::str::FromStr>(k: &str, v: &str) -> Result<T, CheckpointError> {
        v.parse().map_err(|_| CheckpointError::Malformed(format!("config key `{k}`")))
    }
    let list = |k: &str| -> Result<Vec<usize>, CheckpointError> {
        let v = get(k)?;
        if v.is_empty() {
            return Ok(Vec::new());
        }
        v.split(',').map(|x| num(k, x)).collect()
    };
    let mlp = match get("mlp")? {
        "none" => None,
        v => {
            let (d, w) = v.split_once('x').ok_or_else(|| bad("mlp"))?;
            Some(MlpConfig {
                depth: num("mlp", d)?,
                width: num("mlp", w)?,
            })
        }
    };
    let spec = ModelSpec {
        field_sizes: list("field_sizes")?,
        embed_dim: num("embed_dim", get("embed_dim")?)?,
        dein: DeinConfig {
            maps: list("maps")?,
            attention: num("attention", get("attention")?)?,
            attention_hidden: num("attention_hidden", get("attention_hidden")?)?,
        },
        mlp,
    };
    spec.validate().map_err(|e| CheckpointError::Malformed(e.to_string()))?;
    let config = TrainConfig {
        lambda_d: num("lambda_d", get("lambda_d")?)?,
        lambda_n: num("lambda_n", get("lambda_n")?)?,
        adam: AdamConfig {
            learning_rate: num("learning_rate", get("learning_rate")?)?,
            beta1: num("beta1", get("beta1")?)?,
            beta2: num("beta2", get("beta2")?)?,
            epsilon: num("epsilon", get("epsilon")?)?,
        },
        epochs: num("epochs", get("epochs")?)?,
        batch_size: num("batch_size", get("batch_size")?)?,
        variant: get("variant")?.parse::<Variant>().map_err(|_| bad("variant"))?,
        seed: num("seed", get("seed")?)?,
        clip: num("clip", get("clip")?)?,
        patience: match get("patience")? {
            "off" => None,
            v => Some(num("patience", v)?),
        },
        chunk_size: num("chunk_size", get("chunk_size")?)?,
        max_norm: match get("max_norm")? {
            "off" => None,
            v => Some(num("max_norm", v)?),
        },
    };
    Ok((spec, config))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let spec = ModelSpec {
            field_sizes: vec![3, 2],
            embed_dim: 2,
            dein: DeinConfig::uniform(2, 2, true, 3),
            mlp: Some(MlpConfig { depth: 1, width: 3 }),
        };
        let config = TrainConfig {
            lambda_d: 0.1 + 0.2,
            patience: Some(3),
            max_norm: Some(1.5),
            ..TrainConfig::default()
        };
        let model = Model::new(spec, 5).unwrap();
        let adam = AdamState::new(config.adam, model.params.tensors());
        Checkpoint {
            digest: content_digest(b"a\tcat\n", b"a\tx\t1\n"),
            config,
            model,
            adam,
            epoch: 4,
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let c = sample();
        let bytes = c.encode();
        assert_eq!(&bytes[..7], MAGIC);
        assert_eq!(Checkpoint::decode(&bytes).unwrap(), c);
    }

    #[test]
    fn guards() {
        let bytes = sample().encode();
        let mut magic = bytes.clone();
        magic[0] = b'X';
        assert_eq!(Checkpoint::decode(&magic), Err(CheckpointError::BadMagic));
        let mut version = bytes.clone();
        version[7] = 9;
        assert_eq!(Checkpoint::decode(&version), Err(CheckpointError::Version(9)));
        for cut in [8, 40, 60, bytes.len() / 2, bytes.len() - 1] {
            assert!(Checkpoint::decode(&bytes[..cut]).is_err(), "cut {cut}");
        }
        let mut long = bytes;
        long.push(0);
        assert!(matches!(Checkpoint::decode(&long), Err(CheckpointError::Malformed(_))));
    }

    #[test]
    fn digest_depends_on_both_files() {
        let a = content_digest(b"ab", b"c");
        assert_ne!(a, content_digest(b"a", b"bc"));
        assert_ne!(a, content_digest(b"ab", b"d"));
        assert_eq!(hex(&a).len(), 64);
    }
}
