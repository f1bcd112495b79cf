//! Network graph, its enumerations, and the exact integer structure matrices
//! of the sub-system graph.
//!
//! Coordinates on the link space are laid out agent by agent: agent `i` owns
//! the contiguous block `offset(i) .. offset(i) + m_i`, and inside that block
//! the local link index follows the neighbourhood enumeration of agent `i`.
//! All indices in this module are 0-based.

use crate::error::{Error, Result};
use crate::linalg::IMatrix;

/// Simple undirected graph with fixed neighbourhood and edge enumerations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkGraph {
    n: usize,
    /// Edges in enumeration order, stored as `(lo, hi)`.
    edges: Vec<(usize, usize)>,
    /// `neighbors[i][k]` is the neighbour reached through local link `k`.
    neighbors: Vec<Vec<usize>>,
}

impl NetworkGraph {
    /// Builds a graph with the default enumerations: edges ascending
    /// lexicographically, neighbours ascending.
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut normalized = normalize_edges(n, edges)?;
        normalized.sort_unstable();
        let mut neighbors = vec![Vec::new(); n];
        for &(a, b) in &normalized {
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
        for nb in &mut neighbors {
            nb.sort_unstable();
        }
        Ok(Self {
            n,
            edges: normalized,
            neighbors,
        })
    }

    /// Builds a graph with explicit enumerations. `edge_order` lists every
    /// edge exactly once in enumeration order; `neighbor_order[i]` lists the
    /// neighbours of `i` in local-link order.
    pub fn with_enumerations(n: usize, edge_order: &[(usize, usize)], neighbor_order: &[Vec<usize>]) -> Result<Self> {
        let edges = normalize_edges(n, edge_order)?;
        if neighbor_order.len() != n {
            return Err(Error::InvalidGraph(format!(
                "neighbour enumeration lists {} vertices, graph has {n}",
                neighbor_order.len()
            )));
        }
        let default = Self::new(n, &edges)?;
        for (i, order) in neighbor_order.iter().enumerate() {
            let mut sorted = order.clone();
            sorted.sort_unstable();
            if sorted != default.neighbors[i] {
                return Err(Error::InvalidGraph(format!(
                    "neighbour enumeration of vertex {i} is not a bijection onto its neighbourhood"
                )));
            }
        }
        Ok(Self {
            n,
            edges,
            neighbors: neighbor_order.to_vec(),
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge(&self, k: usize) -> Result<(usize, usize)> {
        self.edges.get(k).copied().ok_or(Error::IndexOutOfRange {
            what: "edge",
            index: k,
            bound: self.edges.len(),
        })
    }

    /// Neighbours of `i` in local-link order.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.neighbors.iter().map(Vec::len).collect()
    }

    /// Local link index of neighbour `j` at vertex `i`.
    pub fn local_index(&self, i: usize, j: usize) -> Option<usize> {
        self.neighbors.get(i)?.iter().position(|&x| x == j)
    }

    /// Enumeration index of edge `{i, j}`.
    pub fn edge_index(&self, i: usize, j: usize) -> Option<usize> {
        let key = (i.min(j), i.max(j));
        self.edges.iter().position(|&e| e == key)
    }

    /// Start of each agent's coordinate block, `Σ_{h<i} m_h`.
    pub fn offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        self.neighbors
            .iter()
            .map(|nb| {
                let o = acc;
                acc += nb.len();
                o
            })
            .collect()
    }

    /// Dimension of the link space, `2m`.
    pub fn link_dim(&self) -> usize {
        2 * self.edges.len()
    }

    /// Vertex owning each link coordinate.
    pub fn coordinate_owner(&self) -> Vec<usize> {
        self.neighbors
            .iter()
            .enumerate()
            .flat_map(|(i, nb)| std::iter::repeat_n(i, nb.len()))
            .collect()
    }

    pub fn isolated_vertices(&self) -> Vec<usize> {
        (0..self.n).filter(|&i| self.neighbors[i].is_empty()).collect()
    }
}

fn normalize_edges(n: usize, edges: &[(usize, usize)]) -> Result<Vec<(usize, usize)>> {
    let mut out = Vec::with_capacity(edges.len());
    let mut seen = std::collections::HashSet::new();
    for &(a, b) in edges {
        if a >= n || b >= n {
            return Err(Error::InvalidGraph(format!(
                "edge {{{a}, {b}}} references a vertex outside 0..{n}"
            )));
        }
        if a == b {
            return Err(Error::InvalidGraph(format!("self-loop at vertex {a}")));
        }
        let e = (a.min(b), a.max(b));
        if !seen.insert(e) {
            return Err(Error::InvalidGraph(format!("duplicate edge {{{}, {}}}", e.0, e.1)));
        }
        out.push(e);
    }
    Ok(out)
}

/// Exact integer matrices of the sub-system graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StructureMatrices {
    /// Routing permutation, `2m × 2m`.
    pub p: IMatrix,
    /// Incidence matrix, `2m × m`.
    pub b: IMatrix,
    /// Laplacian `B B'`.
    pub l: IMatrix,
    /// Rank-one edge Laplacians `B_(·,k) B_(·,k)'`.
    pub lk: Vec<IMatrix>,
    /// Diagonal 0/1 projectors `diag(B_(·,k))²`.
    pub bhat: Vec<IMatrix>,
    /// Per-agent coordinate offsets.
    pub offsets: Vec<usize>,
    /// Sub-system edge `k` as `(r, s)`; `r` belongs to the lower-numbered agent.
    pub link_pairs: Vec<(usize, usize)>,
}

impl StructureMatrices {
    /// Builds the 1-regular sub-system graph of `g` and its matrices.
    pub fn build(g: &NetworkGraph) -> Result<Self> {
        if let Some(&v) = g.isolated_vertices().first() {
            return Err(Error::IsolatedVertex { vertex: v });
        }
        let dim = g.link_dim();
        let m = g.edge_count();
        let offsets = g.offsets();
        let coord =
            |i: usize, j: usize| -> usize { offsets[i] + g.local_index(i, j).expect("edge endpoints are neighbours") };

        let mut p = IMatrix::zeros(dim, dim);
        for i in 0..g.vertex_count() {
            for (k, &j) in g.neighbors(i).iter().enumerate() {
                p[(offsets[i] + k, coord(j, i))] = 1;
            }
        }

        let mut b = IMatrix::zeros(dim, m);
        let mut link_pairs = Vec::with_capacity(m);
        for (k, &(lo, hi)) in g.edges().iter().enumerate() {
            let r = coord(lo, hi);
            let s = coord(hi, lo);
            b[(r, k)] = 1;
            b[(s, k)] = -1;
            link_pairs.push((r, s));
        }

        let l = &b * b.transpose();
        let lk: Vec<IMatrix> = (0..m)
            .map(|k| {
                let col = b.column(k);
                col * col.transpose()
            })
            .collect();
        let bhat = (0..m)
            .map(|k| IMatrix::from_diagonal(&b.column(k).map(|x| x * x)))
            .collect();

        Ok(Self {
            p,
            b,
            l,
            lk,
            bhat,
            offsets,
            link_pairs,
        })
    }

    pub fn link_dim(&self) -> usize {
        self.p.nrows()
    }

    pub fn edge_count(&self) -> usize {
        self.lk.len()
    }

    /// Checks every structural identity in exact integer arithmetic and
    /// returns a description of the first violation.
    pub fn verify(&self) -> std::result::Result<(), String> {
        let dim = self.link_dim();
        let eye = IMatrix::identity(dim, dim);
        let p = &self.p;
        if p.transpose() != *p {
            return Err("P is not symmetric".into());
        }
        if p * p != eye {
            return Err("P is not an involution".into());
        }
        if (0..dim).any(|i| p[(i, i)] != 0) {
            return Err("P has a nonzero diagonal".into());
        }
        for i in 0..dim {
            if p.row(i).iter().sum::<i64>() != 1 || p.column(i).iter().sum::<i64>() != 1 {
                return Err(format!("P row/column {i} does not sum to one"));
            }
            if p.row(i).iter().any(|&x| x != 0 && x != 1) {
                return Err(format!("P row {i} has a non 0/1 entry"));
            }
        }
        for k in 0..self.edge_count() {
            let col = self.b.column(k);
            if col.iter().filter(|&&x| x == 1).count() != 1
                || col.iter().filter(|&&x| x == -1).count() != 1
                || col.iter().filter(|&&x| x != 0).count() != 2
            {
                return Err(format!("B column {k} is not an oriented incidence column"));
            }
        }
        if self.b.clone() * self.b.transpose() != self.l {
            return Err("L != B B'".into());
        }
        let sum_lk = self.lk.iter().fold(IMatrix::zeros(dim, dim), |acc, x| acc + x);
        if sum_lk != self.l {
            return Err("L != Σ L_k".into());
        }
        if *p != &eye - &self.l {
            return Err("P != I - L".into());
        }
        let mut sum_bhat = IMatrix::zeros(dim, dim);
        for (k, bk) in self.bhat.iter().enumerate() {
            if bk * &self.lk[k] != self.lk[k] {
                return Err(format!("B̂_{k} L_{k} != L_{k}"));
            }
            if bk * bk != *bk {
                return Err(format!("B̂_{k} is not idempotent"));
            }
            for (l, bl) in self.bhat.iter().enumerate() {
                // diag(d) sits between two diagonals, so B̂_k diag(d) B̂_l = 0
                // for all d exactly when the supports are disjoint.
                if k != l && (bk * bl).iter().any(|&x| x != 0) {
                    return Err(format!("B̂_{k} and B̂_{l} overlap"));
                }
            }
            sum_bhat += bk;
        }
        if sum_bhat != eye {
            return Err("Σ B̂_k != I".into());
        }
        Ok(())
    }
}

/// Entry `(offset(i) + k, r)` of the routing matrix, computed directly from
/// the enumerations without assembling `P`.
pub fn routing_entry(g: &NetworkGraph, i: usize, k: usize, r: usize) -> Result<u8> {
    if i >= g.vertex_count() {
        return Err(Error::IndexOutOfRange {
            what: "agent",
            index: i,
            bound: g.vertex_count(),
        });
    }
    if k >= g.degree(i) {
        return Err(Error::IndexOutOfRange {
            what: "local link",
            index: k,
            bound: g.degree(i),
        });
    }
    if r >= g.link_dim() {
        return Err(Error::IndexOutOfRange {
            what: "coordinate",
            index: r,
            bound: g.link_dim(),
        });
    }
    let j = g.neighbors(i)[k];
    let offset_j: usize = (0..j).map(|h| g.degree(h)).sum();
    let target = offset_j + g.local_index(j, i).expect("symmetric adjacency");
    Ok(u8::from(r == target))
}

/// Coordinates owned by the two endpoint agents of edge `k`, lower-numbered
/// agent first.
pub fn link_coordinates(g: &NetworkGraph, k: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    let (i, j) = g.edge(k)?;
    let offsets = g.offsets();
    let block = |v: usize| (offsets[v]..offsets[v] + g.degree(v)).collect::<Vec<_>>();
    Ok((block(i), block(j)))
}
