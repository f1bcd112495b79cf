use crate::error::{Error, Result};
use crate::lti::{check_dimensions, AgentModel};
use crate::multipliers::MultiplierBlocks;
use crate::netgraph::{NetworkGraph, StructureMatrices};

/// Graph, agents and multipliers with consistent dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub graph: NetworkGraph,
    pub structure: StructureMatrices,
    pub agents: Vec<AgentModel>,
    pub multipliers: Vec<MultiplierBlocks>,
}

impl Problem {
    pub fn new(
        graph: NetworkGraph,
        agents: Vec<AgentModel>,
        multipliers: Vec<MultiplierBlocks>,
        stability_margin: f64,
    ) -> Result<Self> {
        let structure = StructureMatrices::build(&graph)?;
        check_dimensions(&graph, &agents)?;
        if multipliers.len() != agents.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} multipliers for {} agents",
                multipliers.len(),
                agents.len()
            )));
        }
        for (i, (a, m)) in agents.iter().zip(&multipliers).enumerate() {
            a.check_stable(stability_margin, i)?;
            if m.inputs() != a.inputs() {
                return Err(Error::DimensionMismatch(format!(
                    "multiplier of agent {i} has {} inputs, agent has {}",
                    m.inputs(),
                    a.inputs()
                )));
            }
        }
        Ok(Self {
            graph,
            structure,
            agents,
            multipliers,
        })
    }

    /// Gain-bounded deviation multipliers with a common radius.
    pub fn with_gain_bounded_links(graph: NetworkGraph, agents: Vec<AgentModel>, radius: f64) -> Result<Self> {
        let multipliers = graph
            .degrees()
            .iter()
            .map(|&d| MultiplierBlocks::gain_bounded_deviation(d, radius))
            .collect::<Result<Vec<_>>>()?;
        Self::new(graph, agents, multipliers, 1e-9)
    }
}
