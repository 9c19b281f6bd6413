//! Binary model checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic        8 bytes  "SMIACKPT"
//! version      u32      1
//! header_len   u64
//! header       header_len bytes of UTF-8 JSON (see `Header`)
//! values       for every tensor in header order: len × f64
//! masks        for every tensor with `masked = true`: len bytes, 1 = kept, 0 = pruned
//! ```
//!
//! The header carries the architecture descriptor, the butterfly
//! substitution (with each factor's `(a, b, c, d)`), the epoch stamp, the
//! generator state and free-form metadata. Parameters come first, then
//! batch-norm running statistics. Values are stored as raw IEEE-754 bits,
//! so a save/load cycle is bit-exact.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::butterfly::{apply_butterfly_structure, SupportPattern};
use crate::error::{Error, Result};
use crate::nn::{build, ArchSpec, ButterflySpec, Layer, Model, WeightMatrix};

pub const MAGIC: &[u8; 8] = b"SMIACKPT";
pub const VERSION: u32 = 1;

/// Exact position of a ChaCha8 generator.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    /// Word position as a decimal string (it is a 128-bit value).
    pub word_pos: String,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        RngState {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    pub fn restore(&self) -> Result<ChaCha8Rng> {
        use rand::SeedableRng;
        let pos: u128 = self
            .word_pos
            .parse()
            .map_err(|e| Error::Serde(format!("rng word position: {e}")))?;
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(pos);
        Ok(rng)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    masked: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pattern: Option<[usize; 4]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    arch: ArchSpec,
    butterfly: Option<ButterflySpec>,
    epoch: u64,
    rng: Option<RngState>,
    meta: BTreeMap<String, String>,
    tensors: Vec<TensorEntry>,
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model: Model,
    pub epoch: u64,
    pub rng: Option<RngState>,
    pub meta: BTreeMap<String, String>,
}

fn factor_patterns(model: &Model) -> BTreeMap<String, SupportPattern> {
    let mut out = BTreeMap::new();
    for (i, layer) in model.layers().iter().enumerate() {
        let mut add = |prefix: String, w: &WeightMatrix| {
            if let WeightMatrix::Butterfly(c) = w {
                for (k, f) in c.factors().iter().enumerate() {
                    out.insert(format!("{prefix}.weight.factor{k}"), f.pattern());
                }
            }
        };
        match layer {
            Layer::Dense(d) => add(format!("{i}"), &d.weight),
            Layer::Conv2d(c) => add(format!("{i}"), &c.weight),
            Layer::BasicBlock(b) => {
                add(format!("{i}.conv1"), &b.conv1.weight);
                add(format!("{i}.conv2"), &b.conv2.weight);
            }
            _ => {}
        }
    }
    out
}

fn header_for(model: &Model, epoch: u64, rng: Option<RngState>, meta: BTreeMap<String, String>) -> Header {
    let patterns = factor_patterns(model);
    let mut tensors: Vec<TensorEntry> = model
        .params()
        .into_iter()
        .map(|(name, p)| TensorEntry {
            pattern: patterns.get(&name).map(|q| [q.a, q.b, q.c, q.d]),
            shape: p.value.shape().to_vec(),
            masked: p.mask.is_some(),
            name,
        })
        .collect();
    tensors.extend(model.buffers().into_iter().map(|(name, t)| TensorEntry {
        name,
        shape: t.shape().to_vec(),
        masked: false,
        pattern: None,
    }));
    Header {
        arch: model.arch().clone(),
        butterfly: model.butterfly(),
        epoch,
        rng,
        meta,
        tensors,
    }
}

pub fn write_checkpoint<W: Write>(
    out: &mut W,
    model: &Model,
    epoch: u64,
    rng: Option<RngState>,
    meta: BTreeMap<String, String>,
) -> Result<()> {
    let header = header_for(model, epoch, rng, meta);
    let json = serde_json::to_vec(&header).map_err(|e| Error::Serde(e.to_string()))?;
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&json);
    for (_, p) in model.params() {
        for v in p.value.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    for (_, t) in model.buffers() {
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    for (_, p) in model.params() {
        if let Some(m) = &p.mask {
            buf.extend(m.iter().map(|&k| k as u8));
        }
    }
    out.write_all(&buf).map_err(|e| Error::io("<checkpoint>", e))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    file: &'a Path,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Format {
                file: self.file.to_path_buf(),
                offset: self.pos as u64,
                message: format!("need {n} bytes, {} left", self.bytes.len() - self.pos),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn fail(&self, message: String) -> Error {
        Error::Format {
            file: self.file.to_path_buf(),
            offset: self.pos as u64,
            message,
        }
    }
}

pub fn parse_checkpoint(bytes: &[u8], file: &Path) -> Result<Checkpoint> {
    let mut cur = Cursor { bytes, pos: 0, file };
    if cur.take(8)? != MAGIC {
        return Err(Error::Format {
            file: file.to_path_buf(),
            offset: 0,
            message: "not a checkpoint (bad magic)".into(),
        });
    }
    let version = u32::from_le_bytes(cur.take(4)?.try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(cur.fail(format!("unsupported version {version}")));
    }
    let hlen = u64::from_le_bytes(cur.take(8)?.try_into().expect("8 bytes")) as usize;
    let header: Header =
        serde_json::from_slice(cur.take(hlen)?).map_err(|e| cur.fail(format!("header: {e}")))?;

    let mut model = build(&header.arch)?;
    if let Some(spec) = header.butterfly {
        apply_butterfly_structure(&mut model, spec)?;
    }
    let expected = header_for(&model, 0, None, BTreeMap::new()).tensors;
    let layout_matches = expected.len() == header.tensors.len()
        && expected.iter().zip(&header.tensors).all(|(e, h)| {
            e.name == h.name && e.shape == h.shape && e.pattern == h.pattern
        });
    if !layout_matches {
        return Err(cur.fail("tensor table does not match the architecture".into()));
    }

    let n_params = model.params().len();
    let mut values = Vec::with_capacity(header.tensors.len());
    for entry in &header.tensors {
        let n: usize = entry.shape.iter().product();
        let raw = cur.take(n * 8)?;
        values.push(
            raw.chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
                .collect::<Vec<f64>>(),
        );
    }
    let mut masks = Vec::new();
    for entry in &header.tensors[..n_params] {
        if entry.masked {
            let n: usize = entry.shape.iter().product();
            let raw = cur.take(n)?;
            if let Some(bad) = raw.iter().find(|&&b| b > 1) {
                return Err(cur.fail(format!("mask byte {bad} is not 0 or 1")));
            }
            masks.push(Some(raw.iter().map(|&b| b == 1).collect::<Vec<bool>>()));
        } else {
            masks.push(None);
        }
    }
    if cur.pos != bytes.len() {
        return Err(cur.fail(format!("{} trailing bytes", bytes.len() - cur.pos)));
    }
    let (pvals, bvals) = values.split_at(n_params);
    for (((_, p), v), m) in model.params_mut().into_iter().zip(pvals).zip(masks) {
        p.value.data_mut().copy_from_slice(v);
        p.mask = m;
    }
    for ((_, t), v) in model.buffers_mut().into_iter().zip(bvals) {
        t.data_mut().copy_from_slice(v);
    }
    Ok(Checkpoint {
        model,
        epoch: header.epoch,
        rng: header.rng,
        meta: header.meta,
    })
}

pub fn save_checkpoint(
    path: &Path,
    model: &Model,
    epoch: u64,
    rng: Option<RngState>,
    meta: BTreeMap<String, String>,
) -> Result<()> {
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, model, epoch, rng, meta)?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    parse_checkpoint(&bytes, path)
}
