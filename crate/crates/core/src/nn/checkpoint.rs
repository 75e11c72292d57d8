//! Versioned binary container for parameter tensors.
//!
//! ```text
//! magic   "ORBITRL\0"
//! version u32
//! n_meta  u32, then (key, value) strings
//! n_tens  u32, then name, ndim u32, dims u64 * ndim, f64 * prod(dims)
//! rng     u8 flag, then seed [u8; 32], stream u64, word_pos u128
//! ```
//!
//! All integers and floats are little-endian; strings are u32 length plus
//! UTF-8 bytes. Floats are stored by bit pattern, so round trips are exact.

use std::collections::BTreeMap;
use std::io::{self, Read, Write};
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::{MlpParams, NetworkShape};

const MAGIC: &[u8; 8] = b"ORBITRL\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("not a checkpoint file")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("missing tensor `{0}`")]
    MissingTensor(String),
    #[error("missing metadata `{0}`")]
    MissingMetadata(String),
    #[error("tensor `{name}` has shape {found:?}, expected {expected:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Exact position of a ChaCha8 stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    pub metadata: BTreeMap<String, String>,
    pub tensors: BTreeMap<String, Tensor>,
    pub rng: Option<RngState>,
}

impl Checkpoint {
    pub fn insert(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) {
        self.tensors.insert(name.into(), Tensor { shape, data });
    }

    pub fn tensor(&self, name: &str, shape: &[usize]) -> Result<&Tensor, CheckpointError> {
        let t = self
            .tensors
            .get(name)
            .ok_or_else(|| CheckpointError::MissingTensor(name.to_string()))?;
        if t.shape != shape {
            return Err(CheckpointError::ShapeMismatch {
                name: name.to_string(),
                expected: shape.to_vec(),
                found: t.shape.clone(),
            });
        }
        Ok(t)
    }

    pub fn meta(&self, key: &str) -> Result<&str, CheckpointError> {
        self.metadata
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| CheckpointError::MissingMetadata(key.to_string()))
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(self.metadata.len() as u32).to_le_bytes())?;
        for (k, v) in &self.metadata {
            write_str(&mut w, k)?;
            write_str(&mut w, v)?;
        }
        w.write_all(&(self.tensors.len() as u32).to_le_bytes())?;
        for (name, t) in &self.tensors {
            write_str(&mut w, name)?;
            w.write_all(&(t.shape.len() as u32).to_le_bytes())?;
            for d in &t.shape {
                w.write_all(&(*d as u64).to_le_bytes())?;
            }
            for x in &t.data {
                w.write_all(&x.to_bits().to_le_bytes())?;
            }
        }
        match &self.rng {
            None => w.write_all(&[0])?,
            Some(r) => {
                w.write_all(&[1])?;
                w.write_all(&r.seed)?;
                w.write_all(&r.stream.to_le_bytes())?;
                w.write_all(&r.word_pos.to_le_bytes())?;
            }
        }
        w.flush()
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, CheckpointError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = read_u32(&mut r)?;
        if version != FORMAT_VERSION {
            return Err(CheckpointError::UnsupportedVersion(version));
        }
        let mut ckpt = Checkpoint::default();
        for _ in 0..read_u32(&mut r)? {
            let k = read_str(&mut r)?;
            let v = read_str(&mut r)?;
            ckpt.metadata.insert(k, v);
        }
        for _ in 0..read_u32(&mut r)? {
            let name = read_str(&mut r)?;
            let ndim = read_u32(&mut r)? as usize;
            if ndim > 8 {
                return Err(CheckpointError::Corrupt(format!(
                    "tensor `{name}` has {ndim} dimensions"
                )));
            }
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(read_u64(&mut r)? as usize);
            }
            let len = shape
                .iter()
                .try_fold(1usize, |acc, d| acc.checked_mul(*d))
                .filter(|n| *n <= 1 << 28)
                .ok_or_else(|| CheckpointError::Corrupt(format!("tensor `{name}` is too large")))?;
            let mut data = Vec::with_capacity(len);
            for _ in 0..len {
                data.push(f64::from_bits(read_u64(&mut r)?));
            }
            ckpt.tensors.insert(name, Tensor { shape, data });
        }
        let mut flag = [0u8; 1];
        r.read_exact(&mut flag)?;
        ckpt.rng = match flag[0] {
            0 => None,
            1 => {
                let mut seed = [0u8; 32];
                r.read_exact(&mut seed)?;
                let stream = read_u64(&mut r)?;
                let mut pos = [0u8; 16];
                r.read_exact(&mut pos)?;
                Some(RngState {
                    seed,
                    stream,
                    word_pos: u128::from_le_bytes(pos),
                })
            }
            other => return Err(CheckpointError::Corrupt(format!("rng flag {other}"))),
        };
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let file = std::fs::File::create(path)?;
        self.write_to(io::BufWriter::new(file))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let file = std::fs::File::open(path)?;
        Self::read_from(io::BufReader::new(file))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }
}

fn write_str<W: Write>(w: &mut W, s: &str) -> io::Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())
}

fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_str<R: Read>(r: &mut R) -> Result<String, CheckpointError> {
    let len = read_u32(r)? as usize;
    if len > 1 << 20 {
        return Err(CheckpointError::Corrupt(format!("string of {len} bytes")));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|_| CheckpointError::Corrupt("non-UTF-8 string".into()))
}

impl MlpParams {
    /// Stores the network shape as metadata and every tensor under `prefix`.
    pub fn write_checkpoint(&self, ckpt: &mut Checkpoint, prefix: &str) {
        let s = &self.shape;
        let hidden: Vec<String> = s.hidden.iter().map(|h| h.to_string()).collect();
        ckpt.metadata.insert(format!("{prefix}input"), s.input.to_string());
        ckpt.metadata.insert(format!("{prefix}hidden"), hidden.join(","));
        ckpt.metadata
            .insert(format!("{prefix}action_dim"), s.action_dim.to_string());
        ckpt.metadata
            .insert(format!("{prefix}shared_trunk"), s.shared_trunk.to_string());
        for (name, data, shape) in self.tensors() {
            ckpt.insert(format!("{prefix}{name}"), shape, data.to_vec());
        }
    }

    pub fn read_checkpoint(ckpt: &Checkpoint, prefix: &str) -> Result<Self, CheckpointError> {
        let parse = |key: &str| -> Result<usize, CheckpointError> {
            let k = format!("{prefix}{key}");
            ckpt.meta(&k)?
                .parse()
                .map_err(|_| CheckpointError::Corrupt(format!("metadata `{k}`")))
        };
        let hidden_key = format!("{prefix}hidden");
        let hidden_text = ckpt.meta(&hidden_key)?;
        let hidden = if hidden_text.is_empty() {
            Vec::new()
        } else {
            hidden_text
                .split(',')
                .map(|h| h.parse())
                .collect::<Result<Vec<usize>, _>>()
                .map_err(|_| CheckpointError::Corrupt(format!("metadata `{hidden_key}`")))?
        };
        let shared_key = format!("{prefix}shared_trunk");
        let shape = NetworkShape {
            input: parse("input")?,
            hidden,
            action_dim: parse("action_dim")?,
            shared_trunk: ckpt
                .meta(&shared_key)?
                .parse()
                .map_err(|_| CheckpointError::Corrupt(format!("metadata `{shared_key}`")))?,
        };
        let mut params = MlpParams::zeros(shape);
        let expected: Vec<(String, Vec<usize>)> = params.tensors().into_iter().map(|(n, _, s)| (n, s)).collect();
        for ((name, shape), dst) in expected.into_iter().zip(params.tensors_mut()) {
            let t = ckpt.tensor(&format!("{prefix}{name}"), &shape)?;
            dst.copy_from_slice(&t.data);
        }
        Ok(params)
    }
}
