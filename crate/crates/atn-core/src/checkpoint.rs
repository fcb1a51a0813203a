//! Model checkpoint file format.
//!
//! Layout:
//!   bytes 0..8    magic "ATNCKPT1"
//!   bytes 8..12   u32 LE manifest length in bytes
//!   manifest      UTF-8 text, lines:
//!                   config_hash <hex64>
//!                   seed <u64>
//!                   meta <key> <value...>        (repeatable)
//!                   tensor <name> <dtype> <ndim> <dims...>  (repeatable)
//!                   end
//!   buffers       raw little-endian value data, one block per tensor
//!                 line, in manifest order
//!
//! Loading verifies the magic and the architecture/config fingerprint and
//! rejects mismatches, so a checkpoint can never be restored into a model
//! wired differently from the one that wrote it.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

pub const MAGIC: &[u8; 8] = b"ATNCKPT1";

#[derive(Clone, Debug)]
pub struct Checkpoint<T: Real> {
    pub config_hash: u64,
    pub seed: u64,
    pub meta: Vec<(String, String)>,
    pub tensors: Vec<(String, Tensor<T>)>,
}

impl<T: Real> Checkpoint<T> {
    pub fn meta_value(&self, key: &str) -> Option<&str> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor<T>> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }
}

pub fn save_checkpoint<T: Real>(
    path: &Path,
    config_hash: u64,
    seed: u64,
    meta: &[(String, String)],
    tensors: &[(String, &Tensor<T>)],
) -> Result<()> {
    let mut manifest = String::new();
    manifest.push_str(&format!("config_hash {config_hash:016x}\n"));
    manifest.push_str(&format!("seed {seed}\n"));
    for (k, v) in meta {
        if k.contains(' ') || k.is_empty() {
            return Err(Error::Usage(format!("bad checkpoint meta key {k:?}")));
        }
        manifest.push_str(&format!("meta {k} {v}\n"));
    }
    for (name, t) in tensors {
        if name.contains(' ') || name.is_empty() {
            return Err(Error::Usage(format!("bad checkpoint tensor name {name:?}")));
        }
        manifest.push_str(&format!("tensor {name} {} {}", T::DTYPE, t.shape().len()));
        for d in t.shape() {
            manifest.push_str(&format!(" {d}"));
        }
        manifest.push('\n');
    }
    manifest.push_str("end\n");

    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(MAGIC)?;
    w.write_all(&(manifest.len() as u32).to_le_bytes())?;
    w.write_all(manifest.as_bytes())?;
    for (_, t) in tensors {
        match T::DTYPE {
            1 => {
                for v in t.data() {
                    w.write_all(&(v.to_f64_() as f32).to_le_bytes())?;
                }
            }
            2 => {
                for v in t.data() {
                    w.write_all(&v.to_f64_().to_le_bytes())?;
                }
            }
            other => return Err(Error::Format(format!("unknown dtype code {other}"))),
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint<T: Real>(path: &Path, expected_hash: Option<u64>) -> Result<Checkpoint<T>> {
    let file = File::open(path)?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!(
            "{} is not a checkpoint file (bad magic)",
            path.display()
        )));
    }
    let mut len_bytes = [0u8; 4];
    r.read_exact(&mut len_bytes)?;
    let manifest_len = u32::from_le_bytes(len_bytes) as usize;
    let mut manifest_bytes = vec![0u8; manifest_len];
    r.read_exact(&mut manifest_bytes)?;
    let manifest = String::from_utf8(manifest_bytes)
        .map_err(|_| Error::Format("checkpoint manifest is not UTF-8".into()))?;

    let mut config_hash = None;
    let mut seed = None;
    let mut meta = Vec::new();
    let mut specs: Vec<(String, u8, Vec<usize>)> = Vec::new();
    let mut saw_end = false;
    for line in manifest.lines() {
        let mut parts = line.split(' ');
        match parts.next() {
            Some("config_hash") => {
                let hex = parts
                    .next()
                    .ok_or_else(|| Error::Format("config_hash line missing value".into()))?;
                config_hash = Some(
                    u64::from_str_radix(hex, 16)
                        .map_err(|_| Error::Format(format!("bad config_hash {hex:?}")))?,
                );
            }
            Some("seed") => {
                let v = parts
                    .next()
                    .ok_or_else(|| Error::Format("seed line missing value".into()))?;
                seed = Some(
                    v.parse()
                        .map_err(|_| Error::Format(format!("bad seed {v:?}")))?,
                );
            }
            Some("meta") => {
                let k = parts
                    .next()
                    .ok_or_else(|| Error::Format("meta line missing key".into()))?;
                let v: Vec<&str> = parts.collect();
                meta.push((k.to_string(), v.join(" ")));
            }
            Some("tensor") => {
                let name = parts
                    .next()
                    .ok_or_else(|| Error::Format("tensor line missing name".into()))?;
                let dtype: u8 = parse_field(parts.next(), "dtype")?;
                let ndim: usize = parse_field(parts.next(), "ndim")?;
                let mut dims = Vec::with_capacity(ndim);
                for _ in 0..ndim {
                    dims.push(parse_field(parts.next(), "dim")?);
                }
                specs.push((name.to_string(), dtype, dims));
            }
            Some("end") => {
                saw_end = true;
                break;
            }
            Some(other) => {
                return Err(Error::Format(format!(
                    "unknown checkpoint manifest line {other:?}"
                )))
            }
            None => {}
        }
    }
    if !saw_end {
        return Err(Error::Format("checkpoint manifest missing end marker".into()));
    }
    let config_hash =
        config_hash.ok_or_else(|| Error::Format("checkpoint missing config_hash".into()))?;
    let seed = seed.ok_or_else(|| Error::Format("checkpoint missing seed".into()))?;
    if let Some(expected) = expected_hash {
        if expected != config_hash {
            return Err(Error::Config(format!(
                "checkpoint config hash {config_hash:016x} does not match expected {expected:016x}; refusing to load"
            )));
        }
    }

    let mut tensors = Vec::with_capacity(specs.len());
    for (name, dtype, dims) in specs {
        if dtype != T::DTYPE {
            return Err(Error::Format(format!(
                "tensor {name} has dtype code {dtype}, loader expects {}",
                T::DTYPE
            )));
        }
        let n: usize = dims.iter().product();
        let mut data = Vec::with_capacity(n);
        match dtype {
            1 => {
                let mut buf = [0u8; 4];
                for _ in 0..n {
                    r.read_exact(&mut buf)?;
                    data.push(T::from_f64(f32::from_le_bytes(buf) as f64));
                }
            }
            2 => {
                let mut buf = [0u8; 8];
                for _ in 0..n {
                    r.read_exact(&mut buf)?;
                    data.push(T::from_f64(f64::from_le_bytes(buf)));
                }
            }
            other => return Err(Error::Format(format!("unknown dtype code {other}"))),
        }
        tensors.push((name, Tensor::from_vec(&dims, data)?));
    }
    Ok(Checkpoint {
        config_hash,
        seed,
        meta,
        tensors,
    })
}

fn parse_field<F: std::str::FromStr>(field: Option<&str>, what: &str) -> Result<F> {
    field
        .ok_or_else(|| Error::Format(format!("tensor line missing {what}")))?
        .parse()
        .map_err(|_| Error::Format(format!("bad {what} field")))
}
