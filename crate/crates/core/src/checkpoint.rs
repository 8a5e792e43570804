//! Self-describing parameter container shared by network and linear summaries.
//!
//! ```text
//! {"format":"abcnet-checkpoint","schema_version":1,"kind":"mlp",...}
//! W0 2 3 0.1 -0.2 ...
//! b0 2 0 0
//! ```
//!
//! The first line is a JSON header; each following line is a named tensor
//! with its shape and row-major values in shortest round-trip form.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde_json::{Map, Value};

pub const CHECKPOINT_FORMAT: &str = "abcnet-checkpoint";
pub const CHECKPOINT_SCHEMA_VERSION: u64 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("schema error: {0}")]
    Schema(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Container {
    pub header: Map<String, Value>,
    pub tensors: Vec<Tensor>,
}

impl Container {
    pub fn new(kind: &str) -> Self {
        let mut header = Map::new();
        header.insert("format".into(), CHECKPOINT_FORMAT.into());
        header.insert("schema_version".into(), CHECKPOINT_SCHEMA_VERSION.into());
        header.insert("kind".into(), kind.into());
        Self {
            header,
            tensors: Vec::new(),
        }
    }

    pub fn kind(&self) -> Option<&str> {
        self.header.get("kind").and_then(Value::as_str)
    }

    pub fn set(&mut self, key: &str, value: impl Into<Value>) {
        self.header.insert(key.into(), value.into());
    }

    pub fn push(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.tensors.push(Tensor {
            name: name.into(),
            shape,
            data,
        });
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor, CheckpointError> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| CheckpointError::Schema(format!("missing tensor {name}")))
    }

    pub fn require<'a>(&'a self, key: &str) -> Result<&'a Value, CheckpointError> {
        self.header
            .get(key)
            .ok_or_else(|| CheckpointError::Schema(format!("header field {key} missing")))
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<(), CheckpointError> {
        serde_json::to_writer(&mut *w, &self.header).map_err(|e| CheckpointError::Schema(e.to_string()))?;
        w.write_all(b"\n")?;
        let mut line = String::new();
        for t in &self.tensors {
            line.clear();
            line.push_str(&t.name);
            write!(line, " {}", t.shape.len()).unwrap();
            for d in &t.shape {
                write!(line, " {d}").unwrap();
            }
            for v in &t.data {
                write!(line, " {v}").unwrap();
            }
            line.push('\n');
            w.write_all(line.as_bytes())?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self, CheckpointError> {
        let mut lines = r.lines();
        let first = lines
            .next()
            .ok_or_else(|| CheckpointError::Schema("empty checkpoint".into()))??;
        let header: Map<String, Value> =
            serde_json::from_str(&first).map_err(|e| CheckpointError::Schema(format!("header: {e}")))?;
        if header.get("format").and_then(Value::as_str) != Some(CHECKPOINT_FORMAT) {
            return Err(CheckpointError::Schema("not an abcnet checkpoint".into()));
        }
        let version = header.get("schema_version").and_then(Value::as_u64);
        if version != Some(CHECKPOINT_SCHEMA_VERSION) {
            return Err(CheckpointError::Schema(format!(
                "schema version {version:?} not supported (expected {CHECKPOINT_SCHEMA_VERSION})"
            )));
        }
        let mut tensors = Vec::new();
        for (k, line) in lines.enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let bad = |what: &str| CheckpointError::Schema(format!("tensor line {}: {what}", k + 2));
            let mut it = line.split(' ');
            let name = it.next().ok_or_else(|| bad("missing name"))?.to_owned();
            let rank: usize = it.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad("bad rank"))?;
            let shape: Vec<usize> = (0..rank)
                .map(|_| it.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad("bad shape")))
                .collect::<Result<_, _>>()?;
            let data: Vec<f64> = it
                .map(|s| s.parse::<f64>().map_err(|_| bad("bad value")))
                .collect::<Result<_, _>>()?;
            if data.len() != shape.iter().product::<usize>() {
                return Err(bad(&format!("{} values for shape {shape:?}", data.len())));
            }
            tensors.push(Tensor { name, shape, data });
        }
        Ok(Self { header, tensors })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CheckpointError> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}
