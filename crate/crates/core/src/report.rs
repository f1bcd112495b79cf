//! Serializable documents emitted by the command-line tool.

use serde::Serialize;

use crate::linalg::IMatrix;
use crate::netgraph::StructureMatrices;
use crate::oracle::{SearchOptions, SearchOutcome};

fn rows(m: &IMatrix) -> Vec<Vec<i64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Integer structure matrices as nested row lists. Indices are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StructureDump {
    pub vertices: usize,
    pub edges: Vec<[usize; 2]>,
    pub degrees: Vec<usize>,
    pub offsets: Vec<usize>,
    pub link_pairs: Vec<[usize; 2]>,
    pub p: Vec<Vec<i64>>,
    pub b: Vec<Vec<i64>>,
    pub l: Vec<Vec<i64>>,
    pub bhat: Vec<Vec<Vec<i64>>>,
    /// Whether all exact identities (`P = P'`, `P² = I`, `P = I - L`, ...) hold.
    pub verified: bool,
}

impl StructureDump {
    pub fn new(graph: &crate::netgraph::NetworkGraph, s: &StructureMatrices) -> Self {
        Self {
            vertices: graph.vertex_count(),
            edges: graph.edges().iter().map(|&(a, b)| [a + 1, b + 1]).collect(),
            degrees: graph.degrees(),
            offsets: s.offsets.iter().map(|o| o + 1).collect(),
            link_pairs: s.link_pairs.iter().map(|&(r, q)| [r + 1, q + 1]).collect(),
            p: rows(&s.p),
            b: rows(&s.b),
            l: rows(&s.l),
            bhat: s.bhat.iter().map(rows).collect(),
            verified: s.verify().is_ok(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub tool: String,
    pub version: String,
    pub options: SearchOptions,
    /// Per-agent radii used for sampling.
    pub radii: Vec<f64>,
    pub result: SearchOutcome,
}

impl OracleReport {
    pub fn new(options: SearchOptions, radii: Vec<f64>, result: SearchOutcome) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            options,
            radii,
            result,
        }
    }
}
