//! Model persistence, file formats and configuration parsing.
//!
//! # Model file (`RSE1`)
//!
//! ```text
//! "RSE1"                      4 bytes magic
//! header_len                  u64, little endian
//! header                      header_len bytes of UTF-8 JSON
//! payload                     f64 little endian, row-major:
//!                               embedding table   |V| × d_in
//!                               projection weight d_in × d
//!                               projection bias   d
//!                               relation rows     R × d
//! file_sha256                 32 bytes, SHA-256 of everything above
//! ```
//!
//! The header records the format version, all dimensions, the vocabulary in
//! id order, the relation names in id order, the training configuration and
//! the SHA-256 of the payload.

pub mod commands;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::encoder::{EncoderParams, Vocab};
use crate::error::{Result, RseError};
use crate::model::RseModel;
use crate::numerics::Matrix;
use crate::relation_model::RelationTable;
use crate::training::{ObjectiveKind, SentenceTriple, TrainConfig};

pub const MAGIC: &[u8; 4] = b"RSE1";
pub const FORMAT_VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

/// A model plus the configuration that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelArtifact {
    pub format_version: u32,
    pub model: RseModel,
    pub config_echo: TrainConfig,
}

impl ModelArtifact {
    pub fn new(model: RseModel, config_echo: TrainConfig) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            model,
            config_echo,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    vocab_size: usize,
    d_in: usize,
    d: usize,
    max_len: usize,
    num_relations: usize,
    payload_values: usize,
    payload_sha256: String,
    vocab: Vocab,
    relations: Vec<String>,
    config: TrainConfig,
}

fn payload_len(vocab_size: usize, d_in: usize, d: usize, relations: usize) -> Option<usize> {
    let table = vocab_size.checked_mul(d_in)?;
    let weight = d_in.checked_mul(d)?;
    let rel = relations.checked_mul(d)?;
    table.checked_add(weight)?.checked_add(d)?.checked_add(rel)
}

/// Serializes an artifact to bytes.
pub fn encode_model(artifact: &ModelArtifact) -> Result<Vec<u8>> {
    let m = &artifact.model;
    let enc = &m.encoder;
    let values: Vec<f64> = enc
        .embedding_table
        .as_slice()
        .iter()
        .chain(enc.projection_weight.as_slice())
        .chain(&enc.projection_bias)
        .chain(m.relations.embeddings().as_slice())
        .copied()
        .collect();
    let mut payload = Vec::with_capacity(values.len() * 8);
    for v in &values {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    let header = Header {
        format_version: artifact.format_version,
        vocab_size: enc.vocab_size(),
        d_in: enc.d_in(),
        d: enc.d(),
        max_len: m.max_len,
        num_relations: m.relations.len(),
        payload_values: values.len(),
        payload_sha256: hex::encode(Sha256::digest(&payload)),
        vocab: m.vocab.clone(),
        relations: m.relations.names().to_vec(),
        config: artifact.config_echo.clone(),
    };
    let header = serde_json::to_vec(&header)
        .map_err(|e| RseError::CorruptArtifact(format!("cannot encode header: {e}")))?;
    let mut out = Vec::with_capacity(12 + header.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&payload);
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    Ok(out)
}

/// Parses and fully validates an artifact.
pub fn decode_model(bytes: &[u8]) -> Result<ModelArtifact> {
    let corrupt = |msg: String| RseError::CorruptArtifact(msg);
    if bytes.len() < 12 + DIGEST_LEN {
        return Err(corrupt(format!("file of {} bytes is too short", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(corrupt("bad magic bytes".into()));
    }
    let (bytes, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
    let header_len = u64::from_le_bytes(bytes[4..12].try_into().expect("8 bytes"));
    let rest = &bytes[12..];
    if header_len > rest.len() as u64 {
        return Err(corrupt(format!(
            "header length {header_len} exceeds the {} remaining bytes",
            rest.len()
        )));
    }
    let (header_bytes, payload) = rest.split_at(header_len as usize);
    let header_value: serde_json::Value = serde_json::from_slice(header_bytes)
        .map_err(|e| corrupt(format!("unreadable header: {e}")))?;
    let version = header_value
        .get("format_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| corrupt("header has no format_version".into()))?;
    if version != u64::from(FORMAT_VERSION) {
        return Err(corrupt(format!(
            "unsupported format version {version}, expected {FORMAT_VERSION}"
        )));
    }
    if Sha256::digest(bytes).as_slice() != digest {
        return Err(corrupt("file checksum mismatch".into()));
    }
    let header: Header = serde_json::from_value(header_value)
        .map_err(|e| corrupt(format!("invalid header: {e}")))?;

    let expected = payload_len(header.vocab_size, header.d_in, header.d, header.num_relations)
        .ok_or_else(|| corrupt("header dimensions overflow".into()))?;
    if expected != header.payload_values
        || header.vocab.len() != header.vocab_size
        || header.relations.len() != header.num_relations
    {
        return Err(corrupt("header dimensions are inconsistent".into()));
    }
    if payload.len() as u64 != expected as u64 * 8 {
        return Err(corrupt(format!(
            "payload has {} bytes, header dimensions need {}",
            payload.len(),
            expected as u64 * 8
        )));
    }
    if hex::encode(Sha256::digest(payload)) != header.payload_sha256 {
        return Err(corrupt("payload checksum mismatch".into()));
    }

    let values: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let mut it = values.into_iter();
    let mut take = |n: usize| -> Vec<f64> { it.by_ref().take(n).collect() };
    let table = take(header.vocab_size * header.d_in);
    let weight = take(header.d_in * header.d);
    let bias = take(header.d);
    let rel = take(header.num_relations * header.d);

    let wrap = |e: RseError| corrupt(e.to_string());
    let encoder = EncoderParams {
        embedding_table: Matrix::from_vec(header.vocab_size, header.d_in, table).map_err(wrap)?,
        projection_weight: Matrix::from_vec(header.d_in, header.d, weight).map_err(wrap)?,
        projection_bias: bias,
    };
    let relations = RelationTable::from_parts(
        header.relations,
        Matrix::from_vec(header.num_relations, header.d, rel).map_err(wrap)?,
    )
    .map_err(wrap)?;
    if relations.embeddings().as_slice().iter().any(|v| !v.is_finite()) {
        return Err(corrupt("non-finite relation embedding".into()));
    }
    header.config.validate().map_err(wrap)?;
    let model = RseModel::new(header.vocab, encoder, relations, header.max_len).map_err(wrap)?;
    Ok(ModelArtifact {
        format_version: header.format_version,
        model,
        config_echo: header.config,
    })
}

fn temp_path(path: &Path) -> PathBuf {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "model".into());
    path.with_file_name(format!(".{name}.{}.tmp", std::process::id()))
}

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = temp_path(path);
    let result = (|| {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(RseError::io(path, e));
    }
    Ok(())
}

pub fn save_model(artifact: &ModelArtifact, path: &Path) -> Result<()> {
    write_atomic(path, &encode_model(artifact)?)
}

pub fn load_model(path: &Path) -> Result<ModelArtifact> {
    let bytes = fs::read(path).map_err(|e| RseError::io(path, e))?;
    decode_model(&bytes)
}

/// Writes triples as line-delimited JSON.
pub fn write_triples(path: &Path, triples: &[SentenceTriple]) -> Result<()> {
    write_jsonl(path, triples)
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut buf = Vec::new();
    for r in records {
        serde_json::to_writer(&mut buf, r)
            .map_err(|e| RseError::io(path, std::io::Error::other(e)))?;
        buf.push(b'\n');
    }
    write_atomic(path, &buf)
}

pub fn create_writer(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| RseError::io(path, e))
}

/// Applies a flat `key=value` config text on top of `base`. Keys are the
/// [`TrainConfig`] field names; `#` starts a comment.
pub fn parse_config(text: &str, base: TrainConfig) -> Result<TrainConfig> {
    let mut cfg = base;
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| RseError::Parse {
            line: lineno,
            msg: format!("expected key=value, got {line:?}"),
        })?;
        let (key, value) = (key.trim(), value.trim());
        let bad = |what: &str| RseError::Parse {
            line: lineno,
            msg: format!("{key}: {value:?} is not {what}"),
        };
        fn num<T: std::str::FromStr>(v: &str, err: impl FnOnce() -> RseError) -> Result<T> {
            v.parse().map_err(|_| err())
        }
        match key {
            "tau" => cfg.tau = num(value, || bad("a number"))?,
            "batch_size" => cfg.batch_size = num(value, || bad("an integer"))?,
            "encoder_lr" => cfg.encoder_lr = num(value, || bad("a number"))?,
            "relation_lr" => cfg.relation_lr = num(value, || bad("a number"))?,
            "epochs" => cfg.epochs = num(value, || bad("an integer"))?,
            "eval_every_steps" => cfg.eval_every_steps = num(value, || bad("an integer"))?,
            "per_relation_cap" => cfg.per_relation_cap = num(value, || bad("an integer"))?,
            "seed" => cfg.seed = num(value, || bad("an integer"))?,
            "sub_batch_size" => {
                cfg.sub_batch_size = match value {
                    "none" | "" => None,
                    v => Some(num(v, || bad("an integer or none"))?),
                }
            }
            "hard_negatives" => cfg.hard_negatives = num(value, || bad("true or false"))?,
            "objective" => {
                cfg.objective = match value {
                    "relational" => ObjectiveKind::Relational,
                    "merged" => ObjectiveKind::Merged,
                    _ => return Err(bad("relational or merged")),
                }
            }
            "dim" => cfg.dim = num(value, || bad("an integer"))?,
            "max_len" => cfg.max_len = num(value, || bad("an integer"))?,
            "min_count" => cfg.min_count = num(value, || bad("an integer"))?,
            _ => {
                return Err(RseError::Parse {
                    line: lineno,
                    msg: format!("unknown config key {key:?}"),
                })
            }
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn read_config(path: &Path, base: TrainConfig) -> Result<TrainConfig> {
    let text = fs::read_to_string(path).map_err(|e| RseError::io(path, e))?;
    parse_config(&text, base)
}

/// Fixed-precision formatting used by every report.
pub fn fmt6(v: f64) -> String {
    format!("{v:.6}")
}
