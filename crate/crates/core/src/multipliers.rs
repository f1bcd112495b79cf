//! Per-agent IQC multipliers for link uncertainty, the transformed blocks
//! `Ξ_1, Ξ_2, Ξ_3`, and the diagonal-plus-negative-semidefinite split of
//! `Ξ_3`.

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, block_diagonal, CMatrix};
use crate::lti::{agent_responses, check_dimensions, AgentModel};
use crate::netgraph::NetworkGraph;

/// Asymmetry below which inputs are symmetrized rather than rejected.
pub const HERMITIAN_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MultiplierClass {
    /// Links `1 + δ` with every `δ` stable and of gain at most `radius`.
    GainBoundedDeviation { radius: f64 },
    /// Same uncertainty set, with per-link positive scalings `s_k`:
    /// `Φ_1 = r² Σ s_k`, `Φ_3 = -diag(s)`.
    DiagonalDynamicNormBound { radius: f64, scales: Vec<f64> },
    /// Frequency table supplied by the user.
    UserTable,
}

/// `Φ_i(jω)` split into its blocks. `phi1` is real because it is a
/// Hermitian `1 × 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiBlocks {
    pub phi1: f64,
    /// `1 × m_i`.
    pub phi2: CMatrix,
    /// Hermitian `m_i × m_i`.
    pub phi3: CMatrix,
}

impl PhiBlocks {
    pub fn new(phi1: f64, phi2: CMatrix, phi3: CMatrix) -> Result<Self> {
        let m = phi3.nrows();
        if phi3.ncols() != m || phi2.nrows() != 1 || phi2.ncols() != m {
            return Err(Error::DimensionMismatch(format!(
                "Φ blocks: phi2 is {}x{}, phi3 is {}x{}",
                phi2.nrows(),
                phi2.ncols(),
                phi3.nrows(),
                phi3.ncols()
            )));
        }
        if !phi1.is_finite()
            || phi2
                .iter()
                .chain(phi3.iter())
                .any(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(Error::InvalidParameter("non-finite multiplier entry".into()));
        }
        Ok(Self {
            phi1,
            phi2,
            phi3: hermitianize(&phi3, "Φ_3")?,
        })
    }

    pub fn inputs(&self) -> usize {
        self.phi3.nrows()
    }

    /// The full `(1 + m_i) × (1 + m_i)` Hermitian matrix.
    pub fn full(&self) -> CMatrix {
        let m = self.inputs();
        let mut out = CMatrix::zeros(m + 1, m + 1);
        out[(0, 0)] = Complex64::new(self.phi1, 0.0);
        out.view_mut((0, 1), (1, m)).copy_from(&self.phi2);
        out.view_mut((1, 0), (m, 1)).copy_from(&self.phi2.adjoint());
        out.view_mut((1, 1), (m, m)).copy_from(&self.phi3);
        out
    }

    fn lerp(&self, other: &Self, t: f64) -> Self {
        Self {
            phi1: self.phi1 + (other.phi1 - self.phi1) * t,
            phi2: &self.phi2 + (&other.phi2 - &self.phi2).scale(t),
            phi3: &self.phi3 + (&other.phi3 - &self.phi3).scale(t),
        }
    }
}

/// Symmetrizes `x` when its asymmetry is below [`HERMITIAN_TOL`], rejects it
/// otherwise.
pub fn hermitianize(x: &CMatrix, what: &str) -> Result<CMatrix> {
    let asymmetry = linalg::hermitian_asymmetry(x);
    if asymmetry > HERMITIAN_TOL {
        return Err(Error::NonHermitian {
            what: what.to_string(),
            asymmetry,
        });
    }
    Ok(linalg::hermitian_part(x))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableEntry {
    pub omega: f64,
    pub blocks: PhiBlocks,
}

#[derive(Debug, Clone, PartialEq)]
enum Source {
    Constant(PhiBlocks),
    Table(Vec<TableEntry>),
}

/// Multiplier `Φ_i` of one agent as a function of frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiplierBlocks {
    class: MultiplierClass,
    inputs: usize,
    source: Source,
}

impl MultiplierBlocks {
    /// `Φ_1 = m_i r²`, `Φ_2 = 0`, `Φ_3 = -I`.
    pub fn gain_bounded_deviation(inputs: usize, radius: f64) -> Result<Self> {
        if !(radius >= 0.0 && radius.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "uncertainty radius must be a nonnegative number, got {radius}"
            )));
        }
        let blocks = PhiBlocks {
            phi1: inputs as f64 * radius * radius,
            phi2: CMatrix::zeros(1, inputs),
            phi3: -CMatrix::identity(inputs, inputs),
        };
        Ok(Self {
            class: MultiplierClass::GainBoundedDeviation { radius },
            inputs,
            source: Source::Constant(blocks),
        })
    }

    pub fn diagonal_dynamic_norm_bound(radius: f64, scales: &[f64]) -> Result<Self> {
        if !(radius >= 0.0 && radius.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "uncertainty radius must be a nonnegative number, got {radius}"
            )));
        }
        if scales.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidParameter("link scalings must be positive".into()));
        }
        let inputs = scales.len();
        let blocks = PhiBlocks {
            phi1: radius * radius * scales.iter().sum::<f64>(),
            phi2: CMatrix::zeros(1, inputs),
            phi3: CMatrix::from_diagonal(&DVector::from_iterator(
                inputs,
                scales.iter().map(|&s| Complex64::new(-s, 0.0)),
            )),
        };
        Ok(Self {
            class: MultiplierClass::DiagonalDynamicNormBound {
                radius,
                scales: scales.to_vec(),
            },
            inputs,
            source: Source::Constant(blocks),
        })
    }

    /// Piecewise-linear interpolation of the table in `ω`, held constant
    /// outside the tabulated range.
    pub fn from_table(inputs: usize, mut entries: Vec<TableEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidParameter("multiplier table is empty".into()));
        }
        entries.sort_by(|a, b| a.omega.partial_cmp(&b.omega).unwrap_or(std::cmp::Ordering::Equal));
        for w in entries.windows(2) {
            if w[0].omega == w[1].omega {
                return Err(Error::InvalidParameter(format!(
                    "duplicate table frequency {}",
                    w[0].omega
                )));
            }
        }
        for e in &entries {
            if !(e.omega >= 0.0 && e.omega.is_finite()) {
                return Err(Error::InvalidParameter(format!("invalid table frequency {}", e.omega)));
            }
            if e.blocks.inputs() != inputs {
                return Err(Error::DimensionMismatch(format!(
                    "table entry at ω = {} has {} inputs, expected {inputs}",
                    e.omega,
                    e.blocks.inputs()
                )));
            }
        }
        Ok(Self {
            class: MultiplierClass::UserTable,
            inputs,
            source: Source::Table(entries),
        })
    }

    pub fn class(&self) -> &MultiplierClass {
        &self.class
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn table(&self) -> Option<&[TableEntry]> {
        match &self.source {
            Source::Table(t) => Some(t),
            Source::Constant(_) => None,
        }
    }

    pub fn at(&self, omega: f64) -> PhiBlocks {
        match &self.source {
            Source::Constant(b) => b.clone(),
            Source::Table(entries) => {
                let w = omega.abs();
                let pos = entries.partition_point(|e| e.omega <= w);
                if pos == 0 {
                    entries[0].blocks.clone()
                } else if pos == entries.len() {
                    entries[pos - 1].blocks.clone()
                } else {
                    let (lo, hi) = (&entries[pos - 1], &entries[pos]);
                    let t = (w - lo.omega) / (hi.omega - lo.omega);
                    lo.blocks.lerp(&hi.blocks, t)
                }
            }
        }
    }
}

/// `Ξ_{1,i}, Ξ_{2,i}, Ξ_{3,i}` of a single agent.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentXi {
    pub xi1: CMatrix,
    pub xi2: CMatrix,
    pub xi3: CMatrix,
}

/// With `h = H_i(jω)` and `S = I - 1 h`:
/// `Ξ_1 = h*Φ_1 h + S*Φ_3 S + h*Φ_2 S + S*Φ_2* h`,
/// `Ξ_2 = -h*Φ_2 - S*Φ_3`, `Ξ_3 = Φ_3`.
pub fn agent_xi(h: &CMatrix, phi: &PhiBlocks) -> Result<AgentXi> {
    let m = phi.inputs();
    if h.nrows() != 1 || h.ncols() != m {
        return Err(Error::DimensionMismatch(format!(
            "agent response is {}x{}, multiplier has {m} inputs",
            h.nrows(),
            h.ncols()
        )));
    }
    let phi3 = hermitianize(&phi.phi3, "Φ_3")?;
    let ones = CMatrix::from_element(m, 1, Complex64::new(1.0, 0.0));
    let s = CMatrix::identity(m, m) - &ones * h;
    let hs = h.adjoint();
    let ss = s.adjoint();
    let cross = &hs * &phi.phi2 * &s;
    let xi1 = (&hs * h).scale(phi.phi1) + &ss * &phi3 * &s + &cross + cross.adjoint();
    let xi2 = -(&hs * &phi.phi2) - &ss * &phi3;
    Ok(AgentXi {
        xi1: linalg::hermitian_part(&xi1),
        xi2,
        xi3: phi3,
    })
}

/// Per-agent and global block-diagonal `Ξ` at one frequency.
#[derive(Debug, Clone)]
pub struct XiBlocks {
    pub omega: f64,
    pub agents: Vec<AgentXi>,
    pub xi1: CMatrix,
    pub xi2: CMatrix,
    pub xi3: CMatrix,
}

impl XiBlocks {
    pub fn from_agent_blocks(omega: f64, agents: Vec<AgentXi>) -> Self {
        let collect =
            |f: fn(&AgentXi) -> &CMatrix| block_diagonal(&agents.iter().map(|a| f(a).clone()).collect::<Vec<_>>());
        let xi1 = collect(|a| &a.xi1);
        let xi2 = collect(|a| &a.xi2);
        let xi3 = collect(|a| &a.xi3);
        Self {
            omega,
            agents,
            xi1,
            xi2,
            xi3,
        }
    }
}

pub fn assemble_xi_from_responses(
    omega: f64,
    responses: &[CMatrix],
    multipliers: &[MultiplierBlocks],
) -> Result<XiBlocks> {
    if responses.len() != multipliers.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} agent responses but {} multipliers",
            responses.len(),
            multipliers.len()
        )));
    }
    let blocks = responses
        .iter()
        .zip(multipliers)
        .map(|(h, mult)| agent_xi(h, &mult.at(omega)))
        .collect::<Result<Vec<_>>>()?;
    Ok(XiBlocks::from_agent_blocks(omega, blocks))
}

pub fn assemble_xi(
    g: &NetworkGraph,
    agents: &[AgentModel],
    multipliers: &[MultiplierBlocks],
    omega: f64,
) -> Result<XiBlocks> {
    check_dimensions(g, agents)?;
    assemble_xi_from_responses(omega, &agent_responses(agents, omega)?, multipliers)
}

/// Global `Φ = [[⊕Φ_1, ⊕Φ_2], [⊕Φ_2*, ⊕Φ_3]]` acting on `(y, u) ∈ C^n × C^{2m}`.
pub fn global_phi(multipliers: &[MultiplierBlocks], omega: f64) -> CMatrix {
    let blocks: Vec<PhiBlocks> = multipliers.iter().map(|m| m.at(omega)).collect();
    let n = blocks.len();
    let dim: usize = blocks.iter().map(PhiBlocks::inputs).sum();
    let mut out = CMatrix::zeros(n + dim, n + dim);
    let mut off = 0;
    for (i, b) in blocks.iter().enumerate() {
        let m = b.inputs();
        out[(i, i)] = Complex64::new(b.phi1, 0.0);
        out.view_mut((i, n + off), (1, m)).copy_from(&b.phi2);
        out.view_mut((n + off, i), (m, 1)).copy_from(&b.phi2.adjoint());
        out.view_mut((n + off, n + off), (m, m)).copy_from(&b.phi3);
        off += m;
    }
    out
}

/// `Ξ_{3,i} = D + E` with `D` real diagonal and `E ⪯ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Xi3Split {
    pub d: DVector<f64>,
    pub e: CMatrix,
}

/// Diagonal input is returned unshifted (`E = 0`); otherwise
/// `D = λ_max I`, `E = Ξ_3 - λ_max I`.
pub fn split_xi3(xi3: &CMatrix) -> Xi3Split {
    let m = xi3.nrows();
    let is_diagonal = (0..m).all(|i| (0..m).all(|j| i == j || xi3[(i, j)] == Complex64::new(0.0, 0.0)));
    if is_diagonal {
        return Xi3Split {
            d: DVector::from_iterator(m, xi3.diagonal().iter().map(|z| z.re)),
            e: CMatrix::zeros(m, m),
        };
    }
    let lambda = linalg::max_eigenvalue(xi3);
    Xi3Split {
        d: DVector::from_element(m, lambda),
        e: xi3 - CMatrix::identity(m, m).scale(lambda),
    }
}

/// Splits every agent block and concatenates the diagonals into `⊕ D_i`.
pub fn split_all(xi: &XiBlocks) -> (Vec<Xi3Split>, DVector<f64>) {
    let splits: Vec<Xi3Split> = xi.agents.iter().map(|a| split_xi3(&a.xi3)).collect();
    let diag = DVector::from_iterator(
        splits.iter().map(|s| s.d.len()).sum(),
        splits.iter().flat_map(|s| s.d.iter().copied()),
    );
    (splits, diag)
}
