//! Seeded random problem instances for property sweeps and benchmarks.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

use crate::linalg::CMatrix;
use crate::lti::{nominal_stability_check, AgentModel, NominalLoop};
use crate::multipliers::MultiplierBlocks;
use crate::netgraph::{NetworkGraph, StructureMatrices};

pub fn random_complex<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| {
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    })
}

pub fn random_hermitian<R: Rng>(rng: &mut R, m: usize) -> CMatrix {
    let x = random_complex(rng, m, m);
    (&x + x.adjoint()).scale(0.5)
}

/// Random agent with `inputs` inputs, `1..=max_states` states, and spectral
/// abscissa in `[-2, -0.2]`.
pub fn random_stable_agent<R: Rng>(rng: &mut R, inputs: usize, max_states: usize) -> AgentModel {
    let nx = rng.random_range(1..=max_states.max(1));
    let x = DMatrix::from_fn(nx, nx, |_, _| rng.random_range(-1.0..1.0));
    let abscissa = x
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max);
    let shift = abscissa + rng.random_range(0.2..2.0);
    let a = x - DMatrix::identity(nx, nx) * shift;
    let b = DMatrix::from_fn(nx, inputs, |_, _| rng.random_range(-1.0..1.0));
    let c = DMatrix::from_fn(1, nx, |_, _| rng.random_range(-1.0..1.0));
    let d = if rng.random_bool(0.3) {
        DMatrix::from_fn(1, inputs, |_, _| rng.random_range(-0.2..0.2))
    } else {
        DMatrix::zeros(1, inputs)
    };
    AgentModel::new(a, b, c, d).expect("consistent dimensions")
}

/// Random simple graph on `n ≥ 2` vertices without isolated vertices.
pub fn random_graph<R: Rng>(rng: &mut R, n: usize, density: f64) -> NetworkGraph {
    assert!(n >= 2);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(density) {
                edges.push((i, j));
            }
        }
    }
    for i in 0..n {
        if !edges.iter().any(|&(a, b)| a == i || b == i) {
            let mut j = rng.random_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            edges.push((i.min(j), i.max(j)));
        }
    }
    edges.sort_unstable();
    edges.dedup();
    NetworkGraph::new(n, &edges).expect("generated graph is simple")
}

/// Disjoint edges `{0,1}, {2,3}, ...`.
pub fn matching(pairs: usize) -> NetworkGraph {
    let edges: Vec<_> = (0..pairs).map(|p| (2 * p, 2 * p + 1)).collect();
    NetworkGraph::new(2 * pairs, &edges).expect("matching is simple")
}

/// A complete random certification problem.
#[derive(Debug, Clone)]
pub struct Instance {
    pub graph: NetworkGraph,
    pub structure: StructureMatrices,
    pub agents: Vec<AgentModel>,
    pub multipliers: Vec<MultiplierBlocks>,
    pub radius: f64,
}

/// Random instance with `2 ≤ n ≤ max_n` agents whose ideal network is
/// nominally stable. Agent outputs are scaled down until that holds.
pub fn random_instance<R: Rng>(rng: &mut R, max_n: usize) -> Instance {
    let kind = rng.random_range(0..4);
    let n = rng.random_range(2..=max_n.max(2));
    let graph = match kind {
        0 => matching((n / 2).max(1)),
        1 => random_graph(rng, n, 0.4),
        2 => random_graph(rng, n, 0.8),
        _ => random_graph(rng, n, 0.2),
    };
    let structure = StructureMatrices::build(&graph).expect("no isolated vertices");
    let mut agents: Vec<AgentModel> = graph
        .degrees()
        .iter()
        .map(|&d| random_stable_agent(rng, d, 3))
        .collect();
    loop {
        let stable = NominalLoop::assemble(&graph, &structure, &agents)
            .map(|nl| nominal_stability_check(&nl, 1e-6).is_stable())
            .unwrap_or(false);
        if stable {
            break;
        }
        agents = agents
            .into_iter()
            .map(|a| AgentModel::new(a.a().clone(), a.b().clone(), a.c() * 0.5, a.d() * 0.5).expect("same dimensions"))
            .collect();
    }
    let radius = rng.random_range(0.0..0.6);
    let multipliers = graph
        .degrees()
        .iter()
        .map(|&d| MultiplierBlocks::gain_bounded_deviation(d, radius).expect("valid radius"))
        .collect();
    Instance {
        graph,
        structure,
        agents,
        multipliers,
        radius,
    }
}
