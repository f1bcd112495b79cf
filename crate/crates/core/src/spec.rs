//! TOML problem description.
//!
//! ```toml
//! [graph]
//! vertices = 2
//! edges = [[1, 2]]            # 1-based vertex labels
//! # edge_order / neighbor_order override the default enumerations
//!
//! [[agents]]
//! first_order = { gain = 0.5, pole = 1.0 }   # gain * 1ᵀ / (s + pole)
//!
//! [[agents]]
//! a = [[-1.0]]                # or static_gain = [0.5]
//! b = [[0.5]]
//! c = [[1.0]]
//! d = [[0.0]]
//!
//! [uncertainty]
//! class = "gain_bounded_deviation"
//! radius = 0.2
//!
//! [[uncertainty.overrides]]
//! vertex = 2
//! class = "diagonal_dynamic_norm_bound"
//! radius = 0.1
//! scales = [1.0]
//!
//! [grid]
//! min = 1e-3
//! max = 1e3
//! points = 400
//! include_zero = true
//!
//! [tolerances]
//! eps_floor = 1e-6
//! ```
//!
//! Matrices are row-major lists of rows. Validation reports every problem it
//! finds, each with a JSON-pointer path (array indices are 0-based).

use std::fmt;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::certify::Tolerances;
use crate::grid::{FrequencyGrid, GridSpec};
use crate::linalg::CMatrix;
use crate::lti::AgentModel;
use crate::multipliers::{MultiplierBlocks, PhiBlocks, TableEntry};
use crate::netgraph::NetworkGraph;
use crate::problem::Problem;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    pub vertices: usize,
    pub edges: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edge_order: Option<Vec<[usize; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub neighbor_order: Option<Vec<Vec<usize>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FirstOrderSpec {
    pub gain: f64,
    pub pole: f64,
}

/// One of `first_order`, `static_gain`, or the four matrices `a, b, c, d`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_order: Option<FirstOrderSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub static_gain: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableRow {
    pub omega: f64,
    pub phi1: f64,
    pub phi2_re: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi2_im: Option<Vec<f64>>,
    pub phi3_re: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi3_im: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum MultiplierSpec {
    GainBoundedDeviation {
        radius: f64,
    },
    DiagonalDynamicNormBound {
        radius: f64,
        /// Defaults to all ones.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        scales: Option<Vec<f64>>,
    },
    UserTable {
        table: Vec<TableRow>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverrideSpec {
    /// 1-based.
    pub vertex: usize,
    #[serde(flatten)]
    pub multiplier: MultiplierSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintySpec {
    #[serde(flatten)]
    pub default: MultiplierSpec,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub overrides: Vec<OverrideSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub graph: GraphSpec,
    pub agents: Vec<AgentSpec>,
    pub uncertainty: UncertaintySpec,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub tolerances: Tolerances,
}

/// A validation problem located by a JSON-pointer path.
#[derive(Debug, Clone, PartialEq)]
pub struct SpecIssue {
    pub path: String,
    pub message: String,
}

impl fmt::Display for SpecIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: {}",
            if self.path.is_empty() { "/" } else { &self.path },
            self.message
        )
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SpecError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },

    #[error("parse error{}: {message}", .line.map(|l| format!(" at line {l}, column {}", .column.unwrap_or(1))).unwrap_or_default())]
    Parse {
        line: Option<usize>,
        column: Option<usize>,
        message: String,
    },

    #[error("{} validation error(s):\n{}", .0.len(), .0.iter().map(|i| format!("  {i}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<SpecIssue>),

    #[error("cannot serialize spec: {0}")]
    Serialize(String),
}

impl SpecError {
    pub fn issues(&self) -> &[SpecIssue] {
        match self {
            SpecError::Invalid(v) => v,
            _ => &[],
        }
    }
}

#[derive(Default)]
struct Issues(Vec<SpecIssue>);

impl Issues {
    fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.0.push(SpecIssue {
            path: path.into(),
            message: message.into(),
        });
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map_or(0, |s| s.chars().count()) + 1;
    (line, col)
}

/// Parses and validates a spec document.
pub fn parse_spec(text: &str) -> Result<NetworkSpec, SpecError> {
    let spec: NetworkSpec = toml::from_str(text).map_err(|e| {
        let (line, column) = match e.span() {
            Some(span) => {
                let (l, c) = line_col(text, span.start);
                (Some(l), Some(c))
            }
            None => (None, None),
        };
        SpecError::Parse {
            line,
            column,
            message: e.message().trim().to_string(),
        }
    })?;
    spec.to_problem()?;
    Ok(spec)
}

/// Reads, parses and validates a spec file.
pub fn load_spec(path: impl AsRef<Path>) -> Result<NetworkSpec, SpecError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| SpecError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_spec(&text)
}

fn matrix(rows: &[Vec<f64>], path: &str, issues: &mut Issues) -> Option<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if let Some(r) = rows.iter().position(|r| r.len() != ncols) {
        issues.push(
            format!("{path}/{r}"),
            format!("row has {} entries, expected {ncols}", rows[r].len()),
        );
        return None;
    }
    if rows.iter().flatten().any(|x| !x.is_finite()) {
        issues.push(path, "non-finite entry");
        return None;
    }
    Some(DMatrix::from_row_iterator(
        rows.len(),
        ncols,
        rows.iter().flatten().copied(),
    ))
}

impl AgentSpec {
    pub fn first_order(gain: f64, pole: f64) -> Self {
        Self {
            first_order: Some(FirstOrderSpec { gain, pole }),
            ..Default::default()
        }
    }

    fn build(&self, inputs: usize, path: &str, issues: &mut Issues) -> Option<AgentModel> {
        let matrices = [&self.a, &self.b, &self.c, &self.d];
        let forms = usize::from(self.first_order.is_some())
            + usize::from(self.static_gain.is_some())
            + usize::from(matrices.iter().any(|m| m.is_some()));
        if forms != 1 {
            issues.push(path, "give exactly one of first_order, static_gain, or a/b/c/d");
            return None;
        }
        if let Some(fo) = self.first_order {
            if !(fo.pole > 0.0 && fo.pole.is_finite() && fo.gain.is_finite()) {
                issues.push(
                    format!("{path}/first_order"),
                    format!("needs finite gain and pole > 0, got gain {} pole {}", fo.gain, fo.pole),
                );
                return None;
            }
            return AgentModel::first_order(fo.gain, fo.pole, inputs).ok();
        }
        if let Some(g) = &self.static_gain {
            if g.len() != inputs {
                issues.push(
                    format!("{path}/static_gain"),
                    format!("has {} entries, agent has {inputs} neighbours", g.len()),
                );
                return None;
            }
            return match AgentModel::static_gain(g) {
                Ok(a) => Some(a),
                Err(e) => {
                    issues.push(format!("{path}/static_gain"), e.to_string());
                    None
                }
            };
        }
        let names = ["a", "b", "c", "d"];
        let mut built = Vec::new();
        for (name, m) in names.iter().zip(matrices) {
            match m {
                None => issues.push(format!("{path}/{name}"), "missing"),
                Some(rows) => built.push(matrix(rows, &format!("{path}/{name}"), issues)),
            }
        }
        if built.len() != 4 || built.iter().any(Option::is_none) {
            return None;
        }
        let mut it = built.into_iter().flatten();
        let (a, b, c, d) = (it.next()?, it.next()?, it.next()?, it.next()?);
        // An empty row list cannot express a zero-state agent with inputs.
        let nx = a.nrows();
        let b = if nx == 0 { DMatrix::zeros(0, inputs) } else { b };
        let c = if nx == 0 { DMatrix::zeros(1, 0) } else { c };
        if b.ncols() != inputs {
            issues.push(
                format!("{path}/b"),
                format!("has {} columns, agent has {inputs} neighbours", b.ncols()),
            );
            return None;
        }
        match AgentModel::new(a, b, c, d) {
            Ok(m) => Some(m),
            Err(e) => {
                issues.push(path, e.to_string());
                None
            }
        }
    }
}

impl TableRow {
    fn build(&self, inputs: usize, path: &str, issues: &mut Issues) -> Option<TableEntry> {
        let im2 = self.phi2_im.clone().unwrap_or_else(|| vec![0.0; self.phi2_re.len()]);
        if self.phi2_re.len() != inputs || im2.len() != inputs {
            issues.push(format!("{path}/phi2_re"), format!("phi2 must have {inputs} entries"));
            return None;
        }
        let re3 = matrix(&self.phi3_re, &format!("{path}/phi3_re"), issues)?;
        let im3 = match &self.phi3_im {
            Some(rows) => matrix(rows, &format!("{path}/phi3_im"), issues)?,
            None => DMatrix::zeros(re3.nrows(), re3.ncols()),
        };
        if re3.shape() != (inputs, inputs) || im3.shape() != (inputs, inputs) {
            issues.push(format!("{path}/phi3_re"), format!("phi3 must be {inputs}x{inputs}"));
            return None;
        }
        let phi2 = CMatrix::from_iterator(
            1,
            inputs,
            self.phi2_re.iter().zip(&im2).map(|(&r, &i)| Complex64::new(r, i)),
        );
        let phi3 = CMatrix::from_fn(inputs, inputs, |r, c| Complex64::new(re3[(r, c)], im3[(r, c)]));
        match PhiBlocks::new(self.phi1, phi2, phi3) {
            Ok(blocks) => Some(TableEntry {
                omega: self.omega,
                blocks,
            }),
            Err(e) => {
                issues.push(path, e.to_string());
                None
            }
        }
    }
}

impl MultiplierSpec {
    fn build(&self, inputs: usize, path: &str, issues: &mut Issues) -> Option<MultiplierBlocks> {
        let result = match self {
            MultiplierSpec::GainBoundedDeviation { radius } => {
                MultiplierBlocks::gain_bounded_deviation(inputs, *radius)
            }
            MultiplierSpec::DiagonalDynamicNormBound { radius, scales } => {
                let scales = scales.clone().unwrap_or_else(|| vec![1.0; inputs]);
                if scales.len() != inputs {
                    issues.push(
                        format!("{path}/scales"),
                        format!("has {} entries, agent has {inputs} neighbours", scales.len()),
                    );
                    return None;
                }
                MultiplierBlocks::diagonal_dynamic_norm_bound(*radius, &scales)
            }
            MultiplierSpec::UserTable { table } => {
                let rows: Vec<_> = table
                    .iter()
                    .enumerate()
                    .map(|(q, row)| row.build(inputs, &format!("{path}/table/{q}"), issues))
                    .collect();
                if rows.iter().any(Option::is_none) {
                    return None;
                }
                MultiplierBlocks::from_table(inputs, rows.into_iter().flatten().collect())
            }
        };
        match result {
            Ok(m) => Some(m),
            Err(e) => {
                issues.push(path, e.to_string());
                None
            }
        }
    }
}

fn zero_based(pairs: &[[usize; 2]], n: usize, path: &str, issues: &mut Issues) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for (k, &[a, b]) in pairs.iter().enumerate() {
        if a == 0 || b == 0 || a > n || b > n {
            issues.push(
                format!("{path}/{k}"),
                format!("vertex labels must be in 1..={n}, got [{a}, {b}]"),
            );
        } else {
            out.push((a - 1, b - 1));
        }
    }
    out
}

impl NetworkSpec {
    fn build_graph(&self, issues: &mut Issues) -> Option<NetworkGraph> {
        let n = self.graph.vertices;
        if n == 0 {
            issues.push("/graph/vertices", "must be at least 1");
            return None;
        }
        let before = issues.0.len();
        let edges = zero_based(&self.graph.edges, n, "/graph/edges", issues);
        let mut seen = std::collections::BTreeSet::new();
        for (k, &(a, b)) in edges.iter().enumerate() {
            if a == b {
                issues.push(format!("/graph/edges/{k}"), "self-loop");
            } else if !seen.insert((a.min(b), a.max(b))) {
                issues.push(format!("/graph/edges/{k}"), "duplicate edge");
            }
        }
        let mut degree = vec![0usize; n];
        for &(a, b) in &seen {
            degree[a] += 1;
            degree[b] += 1;
        }
        for (i, &d) in degree.iter().enumerate() {
            if d == 0 {
                issues.push(
                    "/graph/edges",
                    format!("vertex {} has no neighbours (m_i >= 1 violated)", i + 1),
                );
            }
        }
        if issues.0.len() > before {
            return None;
        }
        let result = match (&self.graph.edge_order, &self.graph.neighbor_order) {
            (None, None) => NetworkGraph::new(n, &edges),
            (eo, no) => {
                let default = NetworkGraph::new(n, &edges).ok()?;
                let edge_order = match eo {
                    Some(e) => zero_based(e, n, "/graph/edge_order", issues),
                    None => default.edges().to_vec(),
                };
                let neighbor_order: Vec<Vec<usize>> = match no {
                    Some(lists) => lists
                        .iter()
                        .enumerate()
                        .map(|(i, l)| {
                            l.iter()
                                .filter_map(|&v| {
                                    if v == 0 || v > n {
                                        issues.push(
                                            format!("/graph/neighbor_order/{i}"),
                                            format!("vertex label {v} out of range"),
                                        );
                                        None
                                    } else {
                                        Some(v - 1)
                                    }
                                })
                                .collect()
                        })
                        .collect(),
                    None => (0..n).map(|i| default.neighbors(i).to_vec()).collect(),
                };
                if issues.0.len() > before {
                    return None;
                }
                let mut sorted_order: Vec<(usize, usize)> =
                    edge_order.iter().map(|&(a, b)| (a.min(b), a.max(b))).collect();
                sorted_order.sort_unstable();
                if sorted_order != default.edges() {
                    issues.push("/graph/edge_order", "must list every edge exactly once");
                    return None;
                }
                NetworkGraph::with_enumerations(n, &edge_order, &neighbor_order)
            }
        };
        match result {
            Ok(g) => Some(g),
            Err(e) => {
                issues.push("/graph", e.to_string());
                None
            }
        }
    }

    /// Validates everything and builds the problem.
    pub fn to_problem(&self) -> Result<Problem, SpecError> {
        let mut issues = Issues::default();
        let graph = self.build_graph(&mut issues);
        if let Err(e) = self.grid.validate() {
            issues.push("/grid", e.to_string());
        }
        let t = &self.tolerances;
        for (name, v) in [
            ("eps_floor", t.eps_floor),
            ("stability_margin", t.stability_margin),
            ("bisection", t.bisection),
            ("eigenvalue", t.eigenvalue),
            ("coupling", t.coupling),
            ("refine_rel_change", t.refine_rel_change),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                issues.push(
                    format!("/tolerances/{name}"),
                    format!("must be a nonnegative number, got {v}"),
                );
            }
        }
        let Some(graph) = graph else {
            return Err(SpecError::Invalid(issues.0));
        };
        let n = graph.vertex_count();
        if self.agents.len() != n {
            issues.push("/agents", format!("{} agents for {n} vertices", self.agents.len()));
        }
        let agents: Vec<Option<AgentModel>> = self
            .agents
            .iter()
            .enumerate()
            .take(n)
            .map(|(i, a)| {
                let path = format!("/agents/{i}");
                let model = a.build(graph.degree(i), &path, &mut issues)?;
                if let Err(e) = model.check_stable(t.stability_margin, i) {
                    issues.push(format!("{path}/a"), format!("{e}; agents must be stable"));
                    return None;
                }
                Some(model)
            })
            .collect();

        let mut choice: Vec<(String, &MultiplierSpec)> = (0..n)
            .map(|_| ("/uncertainty".to_string(), &self.uncertainty.default))
            .collect();
        let mut overridden = vec![false; n];
        for (q, o) in self.uncertainty.overrides.iter().enumerate() {
            let path = format!("/uncertainty/overrides/{q}");
            if o.vertex == 0 || o.vertex > n {
                issues.push(
                    format!("{path}/vertex"),
                    format!("vertex label must be in 1..={n}, got {}", o.vertex),
                );
                continue;
            }
            if std::mem::replace(&mut overridden[o.vertex - 1], true) {
                issues.push(
                    format!("{path}/vertex"),
                    format!("vertex {} overridden twice", o.vertex),
                );
            }
            choice[o.vertex - 1] = (path, &o.multiplier);
        }
        let multipliers: Vec<Option<MultiplierBlocks>> = choice
            .iter()
            .enumerate()
            .map(|(i, (path, m))| {
                let mut local = Issues::default();
                let built = m.build(graph.degree(i), path, &mut local);
                for issue in local.0 {
                    if !issues.0.contains(&issue) {
                        issues.0.push(issue);
                    }
                }
                built
            })
            .collect();
        if !issues.0.is_empty() {
            return Err(SpecError::Invalid(issues.0));
        }
        let agents: Vec<AgentModel> = agents.into_iter().flatten().collect();
        let multipliers: Vec<MultiplierBlocks> = multipliers.into_iter().flatten().collect();
        Problem::new(graph, agents, multipliers, t.stability_margin).map_err(|e| {
            SpecError::Invalid(vec![SpecIssue {
                path: String::new(),
                message: e.to_string(),
            }])
        })
    }

    pub fn frequency_grid(&self) -> Result<FrequencyGrid, SpecError> {
        self.grid.build().map_err(|e| {
            SpecError::Invalid(vec![SpecIssue {
                path: "/grid".into(),
                message: e.to_string(),
            }])
        })
    }

    pub fn to_toml(&self) -> Result<String, SpecError> {
        toml::to_string(self).map_err(|e| SpecError::Serialize(e.to_string()))
    }
}
