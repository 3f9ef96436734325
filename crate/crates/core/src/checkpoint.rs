//! Single-file model checkpoints.
//!
//! A checkpoint starts with a human-readable UTF-8 header of `key = value`
//! lines terminated by a line containing only `---`. The binary payload that
//! follows is little-endian throughout:
//!
//! ```text
//! magic        4 bytes  "RMCK"
//! version      u32
//! vocab_len    u32
//!   per token: u32 byte length, UTF-8 bytes       (index order, <unk> first)
//! param_count  u32
//!   per param: u32 name length, UTF-8 name,
//!              u8 kind (0 = vector, 1 = matrix),
//!              u64 rows, u64 cols,
//!              rows*cols f64 values, row-major
//! ```
//!
//! The header repeats the category, dimensions and a JSON echo of the
//! training configuration. Values are stored bit-for-bit, so a save/load
//! round trip reproduces the model exactly.

use std::fs;
use std::path::Path;

use crate::corpus::Category;
use crate::encoder::Vocabulary;
use crate::error::{Error, Result};
use crate::memory::MemoryNetModel;
use crate::numeric::{Mat64, Param, ParamStore, Vec64};
use crate::trainer::TrainingConfig;

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"RMCK";
const TITLE: &str = "rationmem checkpoint";
const HEADER_END: &str = "---";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: MemoryNetModel,
    pub config: Option<TrainingConfig>,
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

pub fn encode_checkpoint(model: &MemoryNetModel, config: Option<&TrainingConfig>) -> Vec<u8> {
    let mut out = Vec::new();
    let config_json = config
        .map(|c| serde_json::to_string(c).expect("config serializes"))
        .unwrap_or_else(|| "null".into());
    let mut header = format!(
        "{TITLE}\nformat_version = {FORMAT_VERSION}\ncategory = {}\nembedding_dim = {}\nvocab_size = {}\n",
        model.category(),
        model.dim(),
        model.vocab().len()
    );
    for (name, p) in model.params().iter() {
        let (r, c) = p.shape();
        header.push_str(&format!("param {name} = {r}x{c}\n"));
    }
    header.push_str(&format!("config = {config_json}\n{HEADER_END}\n"));
    out.extend_from_slice(header.as_bytes());

    out.extend_from_slice(MAGIC);
    put_u32(&mut out, FORMAT_VERSION);
    put_u32(&mut out, model.vocab().len() as u32);
    for tok in model.vocab().tokens() {
        put_str(&mut out, tok);
    }
    put_u32(&mut out, model.params().len() as u32);
    for (name, p) in model.params().iter() {
        put_str(&mut out, name);
        let (kind, (rows, cols)) = match p {
            Param::Vector(_) => (0u8, p.shape()),
            Param::Matrix(_) => (1u8, p.shape()),
        };
        out.push(kind);
        out.extend_from_slice(&(rows as u64).to_le_bytes());
        out.extend_from_slice(&(cols as u64).to_le_bytes());
        for v in p.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn save_checkpoint(
    path: impl AsRef<Path>,
    model: &MemoryNetModel,
    config: Option<&TrainingConfig>,
) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_checkpoint(model, config))
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    decode_checkpoint(&bytes)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated payload at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
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

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::Checkpoint("invalid UTF-8 string".into()))
    }
}

fn split_header(bytes: &[u8]) -> Result<(&str, &[u8])> {
    let marker = format!("\n{HEADER_END}\n");
    let at = bytes
        .windows(marker.len())
        .position(|w| w == marker.as_bytes())
        .ok_or_else(|| Error::Checkpoint("missing header terminator".into()))?;
    let header = std::str::from_utf8(&bytes[..at])
        .map_err(|_| Error::Checkpoint("header is not UTF-8".into()))?;
    Ok((header, &bytes[at + marker.len()..]))
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let (header, payload) = split_header(bytes)?;
    let mut lines = header.lines();
    if lines.next() != Some(TITLE) {
        return Err(Error::Checkpoint("not a rationmem checkpoint".into()));
    }
    let mut category = None;
    let mut config = None;
    for line in lines {
        let Some((key, value)) = line.split_once(" = ") else {
            return Err(Error::Checkpoint(format!("bad header line `{line}`")));
        };
        match key {
            "format_version" => {
                if value != FORMAT_VERSION.to_string() {
                    return Err(Error::Checkpoint(format!(
                        "unsupported format version {value}"
                    )));
                }
            }
            "category" => category = Some(value.parse::<Category>()?),
            "config" => {
                config = serde_json::from_str::<Option<TrainingConfig>>(value)
                    .map_err(|e| Error::Checkpoint(format!("config echo: {e}")))?;
            }
            _ => {}
        }
    }
    let category = category.ok_or_else(|| Error::Checkpoint("header lacks category".into()))?;

    let mut r = Reader {
        buf: payload,
        pos: 0,
    };
    if r.take(4)? != MAGIC {
        return Err(Error::Checkpoint("bad payload magic".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported payload version {version}"
        )));
    }
    let n_tokens = r.u32()? as usize;
    let tokens = (0..n_tokens)
        .map(|_| r.string())
        .collect::<Result<Vec<_>>>()?;
    let vocab = Vocabulary::from_tokens(tokens)?;
    let n_params = r.u32()? as usize;
    let mut params = ParamStore::new();
    for _ in 0..n_params {
        let name = r.string()?;
        let kind = r.u8()?;
        let rows = r.u64()? as usize;
        let cols = r.u64()? as usize;
        let len = rows
            .checked_mul(cols)
            .filter(|&n| n <= r.buf.len() / 8)
            .ok_or_else(|| Error::Checkpoint(format!("implausible shape for `{name}`")))?;
        let values = (0..len).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let param = match kind {
            0 if rows == 1 => Param::Vector(Vec64::new(values)?),
            1 => Param::Matrix(Mat64::new(rows, cols, values)?),
            _ => {
                return Err(Error::Checkpoint(format!(
                    "bad tensor kind {kind} for `{name}`"
                )))
            }
        };
        params.insert(name, param)?;
    }
    if r.pos != payload.len() {
        return Err(Error::Checkpoint("trailing bytes after payload".into()));
    }
    let model = MemoryNetModel::from_params(category, vocab, params)?;
    Ok(Checkpoint { model, config })
}
