//! Model checkpoints: a text header (`key value` lines and tensor shapes)
//! followed by the parameters as one flat little-endian `f64` block.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor2;

const MAGIC: &str = "rsgg-checkpoint";
const VERSION: &str = "1";
const END: &str = "end";

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub header: BTreeMap<String, String>,
    pub tensors: Vec<(String, Tensor2)>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.header.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.header.get(key).map(String::as_str)
    }

    pub fn get_parsed<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Config(format!("checkpoint header lacks a valid `{key}`")))
    }

    pub fn push(&mut self, name: impl Into<String>, t: &Tensor2) {
        self.tensors.push((name.into(), t.clone()));
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor2> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| Error::Config(format!("checkpoint lacks tensor `{name}`")))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut head = String::new();
        let _ = writeln!(head, "{MAGIC} {VERSION}");
        for (k, v) in &self.header {
            let _ = writeln!(head, "{k} {v}");
        }
        for (name, t) in &self.tensors {
            let _ = writeln!(head, "tensor {name} {} {}", t.rows(), t.cols());
        }
        let _ = writeln!(head, "{END}");
        let mut bytes = head.into_bytes();
        for (_, t) in &self.tensors {
            for x in t.data() {
                bytes.extend_from_slice(&x.to_le_bytes());
            }
        }
        bytes
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let err = |line: usize, msg: &str| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg: msg.to_string(),
        };
        let mut pos = 0;
        let mut line_no = 0;
        let mut next_line = |pos: &mut usize| -> Result<String> {
            let rest = &bytes[*pos..];
            let nl = rest
                .iter()
                .position(|&b| b == b'\n')
                .ok_or_else(|| err(line_no + 1, "truncated header"))?;
            line_no += 1;
            *pos += nl + 1;
            String::from_utf8(rest[..nl].to_vec()).map_err(|_| err(line_no, "header is not utf-8"))
        };
        let first = next_line(&mut pos)?;
        let mut toks = first.split_whitespace();
        if toks.next() != Some(MAGIC) {
            return Err(err(1, "not a checkpoint file"));
        }
        let version = toks.next().unwrap_or("");
        if version != VERSION {
            return Err(Error::SchemaVersion {
                found: version.to_string(),
                expected: VERSION.to_string(),
            });
        }
        let mut ck = Checkpoint::new();
        let mut shapes = Vec::new();
        loop {
            let line = next_line(&mut pos)?;
            if line == END {
                break;
            }
            let (key, value) = line.split_once(' ').unwrap_or((line.as_str(), ""));
            if key == "tensor" {
                let parts: Vec<&str> = value.split_whitespace().collect();
                if parts.len() != 3 {
                    return Err(err(0, "malformed tensor line"));
                }
                let r: usize = parts[1].parse().map_err(|_| err(0, "bad tensor rows"))?;
                let c: usize = parts[2].parse().map_err(|_| err(0, "bad tensor cols"))?;
                shapes.push((parts[0].to_string(), r, c));
            } else {
                ck.header.insert(key.to_string(), value.to_string());
            }
        }
        let total: usize = shapes.iter().map(|(_, r, c)| r * c).sum();
        let body = &bytes[pos..];
        if body.len() != total * 8 {
            return Err(err(0, "parameter block size does not match the header"));
        }
        let mut values = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
        for (name, r, c) in shapes {
            let data: Vec<f64> = values.by_ref().take(r * c).collect();
            ck.tensors.push((name, Tensor2::from_vec(r, c, data)?));
        }
        Ok(ck)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}
