//! Aligned (θ, X) datasets and their on-disk format.
//!
//! File layout: one JSON header line, then one text record per pair:
//!
//! ```text
//! {"format":"abcnet-dataset","schema_version":1,"q":2,"p":100,"n":3,"model_tag":"ma2","seed":7}
//! train 0.61 0.2 -0.53 1.02 ...
//! ```
//!
//! Each record is the split label, q parameter values and p data values,
//! separated by single spaces. Floats are written in shortest round-trip
//! form, so `load(save(ds)) == ds` bit for bit.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::models::Simulator;
use crate::prior::PriorSpec;
use crate::rng::{derive_seed, lane, Fnv64, RngStream};
use crate::types::{DataVec, ParamVec, Split};

pub const DATASET_FORMAT: &str = "abcnet-dataset";
pub const DATASET_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("dataset is empty")]
    Empty,
    #[error("pair {index}: {what} length {got}, expected {expected}")]
    Ragged {
        index: usize,
        what: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("pair {index}: non-finite value")]
    NonFinite { index: usize },
    #[error("bad header: {0}")]
    Header(String),
    #[error("schema version {found} not supported (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },
    #[error("record {record} (line {line}): {reason}")]
    Record {
        record: usize,
        line: usize,
        reason: String,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub pairs: Vec<(ParamVec, DataVec)>,
    pub splits: Vec<Split>,
    pub seed: u64,
    pub model_tag: String,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    schema_version: u32,
    q: usize,
    p: usize,
    n: usize,
    model_tag: String,
    seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config_hash: Option<String>,
}

impl Dataset {
    pub fn new(
        pairs: Vec<(ParamVec, DataVec)>,
        splits: Vec<Split>,
        seed: u64,
        model_tag: impl Into<String>,
    ) -> Result<Self, DatasetError> {
        let Some((t0, x0)) = pairs.first() else {
            return Err(DatasetError::Empty);
        };
        let (q, p) = (t0.len(), x0.len());
        if q == 0 || p == 0 {
            return Err(DatasetError::Ragged {
                index: 0,
                what: if q == 0 { "theta" } else { "data" },
                got: 0,
                expected: 1,
            });
        }
        if splits.len() != pairs.len() {
            return Err(DatasetError::Ragged {
                index: splits.len().min(pairs.len()),
                what: "split labels",
                got: splits.len(),
                expected: pairs.len(),
            });
        }
        for (index, (t, x)) in pairs.iter().enumerate() {
            if t.len() != q {
                return Err(DatasetError::Ragged { index, what: "theta", got: t.len(), expected: q });
            }
            if x.len() != p {
                return Err(DatasetError::Ragged { index, what: "data", got: x.len(), expected: p });
            }
            if !t.is_finite() || !x.is_finite() {
                return Err(DatasetError::NonFinite { index });
            }
        }
        Ok(Self {
            pairs,
            splits,
            seed,
            model_tag: model_tag.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Parameter dimension q.
    pub fn q(&self) -> usize {
        self.pairs[0].0.len()
    }

    /// Data dimension p.
    pub fn p(&self) -> usize {
        self.pairs[0].1.len()
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.splits[i] == split).collect()
    }

    pub fn count(&self, split: Split) -> usize {
        self.splits.iter().filter(|&&s| s == split).count()
    }

    /// Pairs belonging to `split`, in file order.
    pub fn split_pairs(&self, split: Split) -> impl Iterator<Item = &(ParamVec, DataVec)> {
        self.pairs
            .iter()
            .zip(&self.splits)
            .filter(move |(_, &s)| s == split)
            .map(|(pair, _)| pair)
    }

    /// A new dataset holding only `split`.
    pub fn subset(&self, split: Split) -> Result<Dataset, DatasetError> {
        let pairs: Vec<_> = self.split_pairs(split).cloned().collect();
        let n = pairs.len();
        Dataset::new(pairs, vec![split; n], self.seed, self.model_tag.clone())
    }

    /// Concatenates datasets with identical dimensions and model tag.
    pub fn concat(parts: &[Dataset]) -> Result<Dataset, DatasetError> {
        let first = parts.first().ok_or(DatasetError::Empty)?;
        let mut pairs = Vec::new();
        let mut splits = Vec::new();
        for part in parts {
            if part.model_tag != first.model_tag {
                return Err(DatasetError::Header(format!(
                    "model tag mismatch: {} vs {}",
                    part.model_tag, first.model_tag
                )));
            }
            pairs.extend(part.pairs.iter().cloned());
            splits.extend(part.splits.iter().copied());
        }
        Dataset::new(pairs, splits, first.seed, first.model_tag.clone())
    }

    /// Order-sensitive fingerprint over labels, parameters and data bits.
    pub fn checksum(&self) -> u64 {
        let mut h = Fnv64::default();
        h.write(self.model_tag.as_bytes());
        h.write(&self.seed.to_le_bytes());
        for ((t, x), s) in self.pairs.iter().zip(&self.splits) {
            h.write(s.as_str().as_bytes());
            t.0.iter().for_each(|&v| h.write_f64(v));
            x.0.iter().for_each(|&v| h.write_f64(v));
        }
        h.finish()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DatasetError> {
        self.save_with_hash(path, None)
    }

    pub fn save_with_hash(
        &self,
        path: impl AsRef<Path>,
        config_hash: Option<&str>,
    ) -> Result<(), DatasetError> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w, config_hash)?;
        w.flush()?;
        Ok(())
    }

    pub fn write_to<W: Write>(&self, w: &mut W, config_hash: Option<&str>) -> Result<(), DatasetError> {
        let header = Header {
            format: DATASET_FORMAT.into(),
            schema_version: DATASET_SCHEMA_VERSION,
            q: self.q(),
            p: self.p(),
            n: self.len(),
            model_tag: self.model_tag.clone(),
            seed: self.seed,
            config_hash: config_hash.map(str::to_owned),
        };
        serde_json::to_writer(&mut *w, &header).map_err(|e| DatasetError::Header(e.to_string()))?;
        w.write_all(b"\n")?;
        let mut line = String::new();
        for ((t, x), s) in self.pairs.iter().zip(&self.splits) {
            line.clear();
            line.push_str(s.as_str());
            for v in t.0.iter().chain(&x.0) {
                use std::fmt::Write as _;
                write!(line, " {v}").expect("write to string");
            }
            line.push('\n');
            w.write_all(line.as_bytes())?;
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Dataset, DatasetError> {
        Self::read_from(BufReader::new(File::open(path)?))
    }

    /// Like [`Dataset::load`] but also returns the header's config hash, if any.
    pub fn load_with_hash(path: impl AsRef<Path>) -> Result<(Dataset, Option<String>), DatasetError> {
        Self::read_with_hash(BufReader::new(File::open(path)?))
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Dataset, DatasetError> {
        Self::read_with_hash(r).map(|(d, _)| d)
    }

    fn read_with_hash<R: BufRead>(r: R) -> Result<(Dataset, Option<String>), DatasetError> {
        let mut lines = r.lines();
        let header_line = lines
            .next()
            .ok_or_else(|| DatasetError::Header("missing header line".into()))??;
        let header: Header =
            serde_json::from_str(&header_line).map_err(|e| DatasetError::Header(e.to_string()))?;
        if header.format != DATASET_FORMAT {
            return Err(DatasetError::Header(format!("unknown format tag {:?}", header.format)));
        }
        if header.schema_version != DATASET_SCHEMA_VERSION {
            return Err(DatasetError::SchemaVersion {
                found: header.schema_version,
                expected: DATASET_SCHEMA_VERSION,
            });
        }
        let (q, p) = (header.q, header.p);
        let mut pairs = Vec::with_capacity(header.n);
        let mut splits = Vec::with_capacity(header.n);
        for record in 0..header.n {
            let line_no = record + 2;
            let rec_err = |reason: String| DatasetError::Record {
                record,
                line: line_no,
                reason,
            };
            let line = match lines.next() {
                Some(l) => l?,
                None => return Err(rec_err("missing (file truncated)".into())),
            };
            let mut fields = line.split(' ');
            let label = fields.next().unwrap_or_default();
            let split = Split::parse(label).ok_or_else(|| rec_err(format!("bad split label {label:?}")))?;
            let mut values = Vec::with_capacity(q + p);
            for f in fields {
                let v: f64 = f.parse().map_err(|_| rec_err(format!("bad number {f:?}")))?;
                values.push(v);
            }
            if values.len() != q + p {
                return Err(rec_err(format!("expected {} values, found {}", q + p, values.len())));
            }
            let x = values.split_off(q);
            pairs.push((ParamVec(values), DataVec(x)));
            splits.push(split);
        }
        if let Some(extra) = lines.next() {
            if !extra?.is_empty() {
                return Err(DatasetError::Record {
                    record: header.n,
                    line: header.n + 2,
                    reason: "unexpected record beyond header count".into(),
                });
            }
        }
        let ds = Dataset::new(pairs, splits, header.seed, header.model_tag)?;
        Ok((ds, header.config_hash))
    }
}

/// Sizes of the three splits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

impl SplitSizes {
    /// Train/validation/test in the ratio 10:1:1.
    pub fn from_train(train: usize) -> Self {
        Self {
            train,
            validation: (train / 10).max(1),
            test: (train / 10).max(1),
        }
    }

    pub fn get(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train,
            Split::Validation => self.validation,
            Split::Test => self.test,
        }
    }
}

pub fn split_lane(split: Split) -> u64 {
    match split {
        Split::Train => lane::TRAIN,
        Split::Validation => lane::VALIDATION,
        Split::Test => lane::TEST,
    }
}

/// Draws `n` pairs θ ~ prior, X ~ model(θ). Pair `i` uses stream `i` of
/// `seed`, so the result does not depend on the number of worker threads.
pub fn simulate_pairs<S: Simulator + ?Sized>(
    prior: &PriorSpec,
    model: &S,
    n: usize,
    seed: u64,
) -> Vec<(ParamVec, DataVec)> {
    let one = |i: usize| {
        let mut rng = RngStream::new(seed, i as u64);
        let theta = prior.sample(&mut rng);
        let x = model.simulate(&theta, &mut rng);
        (theta, x)
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(one).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(one).collect()
    }
}

/// Simulates one split of a reference table.
pub fn simulate_split<S: Simulator + ?Sized>(
    prior: &PriorSpec,
    model: &S,
    split: Split,
    n: usize,
    seed: u64,
) -> Result<Dataset, DatasetError> {
    let pairs = simulate_pairs(prior, model, n, derive_seed(seed, split_lane(split)));
    Dataset::new(pairs, vec![split; n], seed, model.tag())
}

/// Simulates all three splits into one labelled dataset.
pub fn simulate_dataset<S: Simulator + ?Sized>(
    prior: &PriorSpec,
    model: &S,
    sizes: SplitSizes,
    seed: u64,
) -> Result<Dataset, DatasetError> {
    let mut pairs = Vec::new();
    let mut splits = Vec::new();
    for split in Split::ALL {
        let n = sizes.get(split);
        pairs.extend(simulate_pairs(prior, model, n, derive_seed(seed, split_lane(split))));
        splits.extend(std::iter::repeat_n(split, n));
    }
    Dataset::new(pairs, splits, seed, model.tag())
}
