//! The discrete cell search space.
//!
//! A cell is a DAG over four nodes. Node 0 is the cell input, node 3 its output,
//! and every ordered pair `i < j` carries exactly one operation. Incoming edge
//! outputs are summed at each node. Cells may be stacked.
//!
//! Canonical encoding: `|op(0→1)|op(0→2)|op(1→2)|op(0→3)|op(1→3)|op(2→3)|xC`.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

pub const NUM_NODES: usize = 4;
pub const NUM_EDGES: usize = 6;
pub const NUM_OPS: usize = 5;
/// 5^6 distinct cells per cell count.
pub const SPACE_SIZE: usize = 15625;

/// Edge order of the encoding: `(from, to)`.
pub const EDGES: [(usize, usize); NUM_EDGES] = [(0, 1), (0, 2), (1, 2), (0, 3), (1, 3), (2, 3)];

/// Edge operations, declared in their documented order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Op {
    Zero,
    Skip,
    Linear,
    LinearRelu,
    LinearTanh,
}

impl Op {
    pub const ALL: [Op; NUM_OPS] = [
        Op::Zero,
        Op::Skip,
        Op::Linear,
        Op::LinearRelu,
        Op::LinearTanh,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Op::Zero => "zero",
            Op::Skip => "skip",
            Op::Linear => "linear",
            Op::LinearRelu => "linear_relu",
            Op::LinearTanh => "linear_tanh",
        }
    }

    pub fn from_label(s: &str) -> Option<Op> {
        Op::ALL.into_iter().find(|op| op.label() == s)
    }

    /// Whether the op owns an `n × n` weight matrix.
    pub fn has_weights(self) -> bool {
        matches!(self, Op::Linear | Op::LinearRelu | Op::LinearTanh)
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellArch {
    pub edge_ops: [Op; NUM_EDGES],
    pub cells: usize,
}

impl CellArch {
    pub fn new(edge_ops: [Op; NUM_EDGES], cells: usize) -> Result<Self> {
        if cells == 0 {
            return Err(Error::invalid("cell count must be at least 1"));
        }
        Ok(Self { edge_ops, cells })
    }

    pub fn uniform(op: Op) -> Self {
        Self {
            edge_ops: [op; NUM_EDGES],
            cells: 1,
        }
    }

    /// Position in the lexical enumeration (edge 0 most significant, ops in
    /// declaration order).
    pub fn index(&self) -> usize {
        self.edge_ops
            .iter()
            .fold(0, |acc, op| acc * NUM_OPS + op.index())
    }

    pub fn from_index(index: usize, cells: usize) -> Result<Self> {
        if index >= SPACE_SIZE {
            return Err(Error::invalid(format!(
                "cell index {index} outside 0..{SPACE_SIZE}"
            )));
        }
        let mut ops = [Op::Zero; NUM_EDGES];
        let mut rest = index;
        for slot in ops.iter_mut().rev() {
            *slot = Op::ALL[rest % NUM_OPS];
            rest /= NUM_OPS;
        }
        Self::new(ops, cells)
    }

    /// Number of weight matrices per cell.
    pub fn weighted_edges(&self) -> usize {
        self.edge_ops.iter().filter(|op| op.has_weights()).count()
    }

    pub fn encode(&self) -> String {
        let mut s = String::new();
        for op in &self.edge_ops {
            s.push('|');
            s.push_str(op.label());
        }
        s.push_str(&format!("|x{}", self.cells));
        s
    }

    pub fn decode(s: &str) -> Result<Self> {
        let bytes = s.as_bytes();
        let err = |offset: usize, message: &str| Error::Parse {
            offset,
            message: message.to_string(),
        };
        let mut pos = 0;
        let mut ops = [Op::Zero; NUM_EDGES];
        for slot in ops.iter_mut() {
            if bytes.get(pos) != Some(&b'|') {
                return Err(err(pos, "expected '|'"));
            }
            pos += 1;
            let end = s[pos..].find('|').map(|k| pos + k).unwrap_or(s.len());
            let label = &s[pos..end];
            *slot = Op::from_label(label)
                .ok_or_else(|| err(pos, &format!("unknown op label {label:?}")))?;
            pos = end;
        }
        if bytes.get(pos) != Some(&b'|') {
            return Err(err(pos, "expected '|' before cell count"));
        }
        pos += 1;
        if bytes.get(pos) != Some(&b'x') {
            return Err(err(pos, "expected 'x' before cell count"));
        }
        pos += 1;
        let digits = &s[pos..];
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(err(pos, "cell count must be a positive decimal integer"));
        }
        if digits.len() > 1 && digits.starts_with('0') {
            return Err(err(pos, "cell count has a leading zero"));
        }
        let cells: usize = digits
            .parse()
            .map_err(|_| err(pos, "cell count out of range"))?;
        if cells == 0 {
            return Err(err(pos, "cell count must be at least 1"));
        }
        Ok(Self { edge_ops: ops, cells })
    }

    pub fn sample(rng: &mut rng::Rng, cells: usize) -> Self {
        let mut ops = [Op::Zero; NUM_EDGES];
        for slot in ops.iter_mut() {
            *slot = Op::ALL[rng.random_range(0..NUM_OPS)];
        }
        Self { edge_ops: ops, cells }
    }
}

impl fmt::Display for CellArch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.encode())
    }
}

impl FromStr for CellArch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::decode(s)
    }
}

impl Serialize for CellArch {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        ser.serialize_str(&self.encode())
    }
}

impl<'de> Deserialize<'de> for CellArch {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(de)?;
        Self::decode(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Sampled,
    Enumerated,
    File,
}

/// An ordered pool of distinct architectures.
#[derive(Debug, Clone, PartialEq)]
pub struct ArchPool {
    entries: Vec<CellArch>,
    pub seed: Option<u64>,
    pub provenance: Provenance,
}

impl ArchPool {
    /// Builds a pool, rejecting duplicate architectures.
    pub fn from_archs(entries: Vec<CellArch>, provenance: Provenance) -> Result<Self> {
        let mut seen = HashSet::new();
        for a in &entries {
            if !seen.insert(*a) {
                return Err(Error::invalid(format!("duplicate architecture {a}")));
            }
        }
        Ok(Self {
            entries,
            seed: None,
            provenance,
        })
    }

    /// `size` distinct single-cell architectures drawn uniformly.
    pub fn sample(size: usize, seed: u64) -> Result<Self> {
        Self::sample_cells(size, 1, seed)
    }

    /// Uniform i.i.d. draws with duplicates dropped, continuing until `size`
    /// distinct cells are collected. Order is the order of first appearance.
    pub fn sample_cells(size: usize, cells: usize, seed: u64) -> Result<Self> {
        if size == 0 {
            return Err(Error::invalid("pool size must be at least 1"));
        }
        if cells == 0 {
            return Err(Error::invalid("cell count must be at least 1"));
        }
        if size > SPACE_SIZE {
            return Err(Error::PoolTooLarge {
                requested: size,
                available: SPACE_SIZE,
            });
        }
        let mut rng = rng::derived_rng(seed, "pool-sample");
        let mut seen = HashSet::with_capacity(size);
        let mut entries = Vec::with_capacity(size);
        while entries.len() < size {
            let a = CellArch::sample(&mut rng, cells);
            if seen.insert(a) {
                entries.push(a);
            }
        }
        Ok(Self {
            entries,
            seed: Some(seed),
            provenance: Provenance::Sampled,
        })
    }

    /// The first `limit` cells in lexical order.
    pub fn enumerate(limit: usize) -> Result<Self> {
        if limit == 0 {
            return Err(Error::invalid("enumeration limit must be at least 1"));
        }
        if limit > SPACE_SIZE {
            return Err(Error::PoolTooLarge {
                requested: limit,
                available: SPACE_SIZE,
            });
        }
        let entries = (0..limit)
            .map(|i| CellArch::from_index(i, 1))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            entries,
            seed: None,
            provenance: Provenance::Enumerated,
        })
    }

    pub fn entries(&self) -> &[CellArch] {
        &self.entries
    }

    pub fn ids(&self) -> Vec<String> {
        self.entries.iter().map(CellArch::encode).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Pool files are a JSON array of encoding strings.
    pub fn from_json(text: &str) -> Result<Self> {
        let ids: Vec<String> = serde_json::from_str(text)?;
        let archs = ids
            .iter()
            .map(|s| CellArch::decode(s))
            .collect::<Result<Vec<_>>>()?;
        Self::from_archs(archs, Provenance::File)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.ids()).expect("string arrays serialize")
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
