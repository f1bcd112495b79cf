//! Finite-dimensional LTI agents, their frequency responses, the structured
//! coprime factors `N = H`, `M = P - T H`, and the nominal (ideal-link)
//! stability check.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, block_diagonal, CMatrix, IMatrix, J};
use crate::netgraph::{NetworkGraph, StructureMatrices};

/// Below this reciprocal condition number `(sI - A)` is treated as singular.
const RESOLVENT_RCOND_FLOOR: f64 = 1e-14;

/// Stable single-output state-space system `x' = A x + B v`, `y = C x + D v`.
/// Input `k` is the signal arriving over local link `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentModel {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    d: DMatrix<f64>,
}

impl AgentModel {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, d: DMatrix<f64>) -> Result<Self> {
        let nx = a.nrows();
        if a.ncols() != nx {
            return Err(Error::DimensionMismatch(format!(
                "A must be square, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.nrows() != nx {
            return Err(Error::DimensionMismatch(format!(
                "B has {} rows, expected {nx}",
                b.nrows()
            )));
        }
        if c.nrows() != 1 || c.ncols() != nx {
            return Err(Error::DimensionMismatch(format!(
                "C must be 1x{nx}, got {}x{}",
                c.nrows(),
                c.ncols()
            )));
        }
        if d.nrows() != 1 || d.ncols() != b.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "D must be 1x{}, got {}x{}",
                b.ncols(),
                d.nrows(),
                d.ncols()
            )));
        }
        if a.iter()
            .chain(b.iter())
            .chain(c.iter())
            .chain(d.iter())
            .any(|x| !x.is_finite())
        {
            return Err(Error::InvalidParameter("non-finite realization entry".into()));
        }
        Ok(Self { a, b, c, d })
    }

    /// `gain / (s + pole)` applied to the sum of all `inputs` inputs.
    pub fn first_order(gain: f64, pole: f64, inputs: usize) -> Result<Self> {
        if !(pole > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "first-order pole must be positive, got {pole}"
            )));
        }
        Self::new(
            DMatrix::from_element(1, 1, -pole),
            DMatrix::from_element(1, inputs, gain),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::zeros(1, inputs),
        )
    }

    /// Memoryless agent `y = Σ_k gains[k] v_k`.
    pub fn static_gain(gains: &[f64]) -> Result<Self> {
        Self::new(
            DMatrix::zeros(0, 0),
            DMatrix::zeros(0, gains.len()),
            DMatrix::zeros(1, 0),
            DMatrix::from_row_slice(1, gains.len(), gains),
        )
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }
    pub fn d(&self) -> &DMatrix<f64> {
        &self.d
    }

    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn states(&self) -> usize {
        self.a.nrows()
    }

    pub fn is_strictly_proper(&self) -> bool {
        self.d.iter().all(|&x| x == 0.0)
    }

    /// Largest real part over the eigenvalues of `A`; `-inf` for static agents.
    pub fn spectral_abscissa(&self) -> f64 {
        if self.states() == 0 {
            return f64::NEG_INFINITY;
        }
        self.a
            .complex_eigenvalues()
            .iter()
            .map(|z| z.re)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest pole modulus; 0 for static agents.
    pub fn max_pole_modulus(&self) -> f64 {
        if self.states() == 0 {
            return 0.0;
        }
        self.a
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    pub fn check_stable(&self, margin: f64, agent: usize) -> Result<()> {
        let abscissa = self.spectral_abscissa();
        if abscissa < -margin {
            Ok(())
        } else {
            Err(Error::UnstableAgent {
                agent,
                real_part: abscissa,
            })
        }
    }

    /// Transfer matrix `C (sI - A)^{-1} B + D` at an arbitrary complex point.
    pub fn response_at(&self, s: Complex64) -> Result<CMatrix> {
        let nx = self.states();
        let d = linalg::to_complex(&self.d);
        if nx == 0 {
            return Ok(d);
        }
        let resolvent = CMatrix::identity(nx, nx).scale(1.0) * s - linalg::to_complex(&self.a);
        let rcond = linalg::reciprocal_condition(&resolvent);
        if !(rcond > RESOLVENT_RCOND_FLOOR) {
            return Err(Error::IllConditioned {
                context: format!("resolvent at s = {s}"),
                sigma_min: linalg::sigma_min(&resolvent),
            });
        }
        let x = resolvent
            .lu()
            .solve(&linalg::to_complex(&self.b))
            .ok_or_else(|| Error::IllConditioned {
                context: format!("resolvent at s = {s}"),
                sigma_min: 0.0,
            })?;
        Ok(linalg::to_complex(&self.c) * x + d)
    }

    /// `H(jω)`, a `1 × m_i` row.
    pub fn freq_response(&self, omega: f64) -> Result<FrequencyResponse> {
        Ok(FrequencyResponse {
            omega,
            value: self.response_at(J * omega)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyResponse {
    pub omega: f64,
    pub value: CMatrix,
}

/// Evaluates every agent at `jω`.
pub fn agent_responses(agents: &[AgentModel], omega: f64) -> Result<Vec<CMatrix>> {
    agents.iter().map(|a| a.freq_response(omega).map(|r| r.value)).collect()
}

/// Checks that agent input counts match the vertex degrees.
pub fn check_dimensions(g: &NetworkGraph, agents: &[AgentModel]) -> Result<()> {
    if agents.len() != g.vertex_count() {
        return Err(Error::DimensionMismatch(format!(
            "{} agents for {} vertices",
            agents.len(),
            g.vertex_count()
        )));
    }
    for (i, a) in agents.iter().enumerate() {
        if a.inputs() != g.degree(i) {
            return Err(Error::DimensionMismatch(format!(
                "agent {i} has {} inputs but {} neighbours",
                a.inputs(),
                g.degree(i)
            )));
        }
    }
    Ok(())
}

/// The fan-out matrix `T = ⊕ 1_{m_i × 1}`.
pub fn fanout_matrix(g: &NetworkGraph) -> IMatrix {
    let owner = g.coordinate_owner();
    IMatrix::from_fn(g.link_dim(), g.vertex_count(), |r, i| i64::from(owner[r] == i))
}

/// Block-diagonal frequency-domain data on the global coordinate layout.
#[derive(Debug, Clone)]
pub struct BlockResponse {
    pub omega: f64,
    /// `H(jω)`, `n × 2m`.
    pub h: CMatrix,
    /// `T`, `2m × n`.
    pub t: CMatrix,
    /// `F = I - T H`, `2m × 2m`.
    pub f: CMatrix,
}

impl BlockResponse {
    pub fn from_agent_responses(g: &NetworkGraph, omega: f64, responses: &[CMatrix]) -> Result<Self> {
        if responses.len() != g.vertex_count() {
            return Err(Error::DimensionMismatch(format!(
                "{} agent responses for {} vertices",
                responses.len(),
                g.vertex_count()
            )));
        }
        for (i, h) in responses.iter().enumerate() {
            if h.nrows() != 1 || h.ncols() != g.degree(i) {
                return Err(Error::DimensionMismatch(format!(
                    "response of agent {i} is {}x{}, expected 1x{}",
                    h.nrows(),
                    h.ncols(),
                    g.degree(i)
                )));
            }
        }
        let h = block_diagonal(responses);
        let t = linalg::int_to_complex(&fanout_matrix(g));
        let dim = g.link_dim();
        let f = CMatrix::identity(dim, dim) - &t * &h;
        Ok(Self { omega, h, t, f })
    }
}

/// `H`, `T` and `F = I - T H` at `ω`.
pub fn assemble_block_diagonal(g: &NetworkGraph, agents: &[AgentModel], omega: f64) -> Result<BlockResponse> {
    check_dimensions(g, agents)?;
    BlockResponse::from_agent_responses(g, omega, &agent_responses(agents, omega)?)
}

/// Structured right coprime factors `(N, M) = (H, P - T H)` at one frequency.
pub fn coprime_factors(structure: &StructureMatrices, block: &BlockResponse) -> (CMatrix, CMatrix) {
    let p = linalg::int_to_complex(&structure.p);
    let m = p - &block.t * &block.h;
    (block.h.clone(), m)
}

/// Frequency response of `(d_v, d_w) ↦ (v, w)` for the ideal network,
/// `v = P w + d_v`, `w = T H v + d_w`.
pub fn closed_loop_response(structure: &StructureMatrices, block: &BlockResponse) -> Result<CMatrix> {
    let dim = structure.link_dim();
    let p = linalg::int_to_complex(&structure.p);
    let th = &block.t * &block.h;
    let loop_matrix = CMatrix::identity(dim, dim) - &p * &th;
    let inv = loop_matrix.try_inverse().ok_or_else(|| Error::IllConditioned {
        context: format!("closed loop at ω = {}", block.omega),
        sigma_min: 0.0,
    })?;
    let mut out = CMatrix::zeros(2 * dim, 2 * dim);
    let v_dv = inv.clone();
    let v_dw = &inv * &p;
    let w_dv = &th * &v_dv;
    let w_dw = &th * &v_dw + CMatrix::identity(dim, dim);
    out.view_mut((0, 0), (dim, dim)).copy_from(&v_dv);
    out.view_mut((0, dim), (dim, dim)).copy_from(&v_dw);
    out.view_mut((dim, 0), (dim, dim)).copy_from(&w_dv);
    out.view_mut((dim, dim), (dim, dim)).copy_from(&w_dw);
    Ok(out)
}

/// Block-diagonal realization of all agents on the global layout.
#[derive(Debug, Clone)]
pub struct BlockRealization {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
}

impl BlockRealization {
    pub fn assemble(agents: &[AgentModel]) -> Self {
        let collect = |f: fn(&AgentModel) -> &DMatrix<f64>| {
            block_diagonal(&agents.iter().map(|a| f(a).clone()).collect::<Vec<_>>())
        };
        Self {
            a: collect(AgentModel::a),
            b: collect(AgentModel::b),
            c: collect(AgentModel::c),
            d: collect(AgentModel::d),
        }
    }
}

/// State-space model of the ideal network `[[P, T∘H]]`.
#[derive(Debug, Clone)]
pub struct NominalLoop {
    pub acl: DMatrix<f64>,
    pub structure: StructureMatrices,
    pub agents: Vec<AgentModel>,
}

impl NominalLoop {
    /// Closes `v = P T y` around the block-diagonal agents. Fails when the
    /// static loop `I - P T D` is singular.
    pub fn assemble(g: &NetworkGraph, structure: &StructureMatrices, agents: &[AgentModel]) -> Result<Self> {
        check_dimensions(g, agents)?;
        let real = BlockRealization::assemble(agents);
        let pt = linalg::int_to_real(&(&structure.p * fanout_matrix(g)));
        let dim = structure.link_dim();
        let static_loop = DMatrix::<f64>::identity(dim, dim) - &pt * &real.d;
        let rcond = linalg::reciprocal_condition(&linalg::to_complex(&static_loop));
        if !(rcond > 1e-12) {
            return Err(Error::IllPosedLoop(format!(
                "I - P T D is singular (reciprocal condition {rcond:e})"
            )));
        }
        let gain = static_loop
            .lu()
            .solve(&(&pt * &real.c))
            .ok_or_else(|| Error::IllPosedLoop("I - P T D is singular".into()))?;
        let acl = &real.a + &real.b * gain;
        Ok(Self {
            acl,
            structure: structure.clone(),
            agents: agents.to_vec(),
        })
    }

    pub fn eigenvalues(&self) -> Vec<Complex64> {
        if self.acl.nrows() == 0 {
            return Vec::new();
        }
        self.acl.complex_eigenvalues().iter().copied().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum NominalVerdict {
    Stable {
        /// `None` when the network has no dynamic states.
        spectral_abscissa: Option<f64>,
    },
    Unstable {
        eigenvalue_re: f64,
        eigenvalue_im: f64,
    },
}

impl NominalVerdict {
    pub fn is_stable(&self) -> bool {
        matches!(self, NominalVerdict::Stable { .. })
    }
}

/// Stable iff every closed-loop eigenvalue has real part below `-margin`.
pub fn nominal_stability_check(nominal: &NominalLoop, margin: f64) -> NominalVerdict {
    let worst = nominal
        .eigenvalues()
        .into_iter()
        .fold(None::<Complex64>, |acc, z| match acc {
            Some(w) if w.re >= z.re => Some(w),
            _ => Some(z),
        });
    match worst {
        None => NominalVerdict::Stable {
            spectral_abscissa: None,
        },
        Some(z) if z.re < -margin => NominalVerdict::Stable {
            spectral_abscissa: Some(z.re),
        },
        Some(z) => NominalVerdict::Unstable {
            eigenvalue_re: z.re,
            eigenvalue_im: z.im,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn pair(k: f64) -> (NetworkGraph, StructureMatrices, Vec<AgentModel>) {
        let g = NetworkGraph::new(2, &[(0, 1)]).unwrap();
        let s = StructureMatrices::build(&g).unwrap();
        let agents = vec![AgentModel::first_order(k, 1.0, 1).unwrap(); 2];
        (g, s, agents)
    }

    #[test]
    fn first_order_dc_and_unit_frequency() {
        let h = AgentModel::first_order(1.0, 1.0, 1).unwrap();
        let dc = h.freq_response(0.0).unwrap().value[(0, 0)];
        assert_relative_eq!(dc.re, 1.0, epsilon = 1e-15);
        assert_relative_eq!(dc.im, 0.0, epsilon = 1e-15);
        let one = h.freq_response(1.0).unwrap().value[(0, 0)];
        assert_relative_eq!(one.re, 0.5, epsilon = 1e-15);
        assert_relative_eq!(one.im, -0.5, epsilon = 1e-15);
        assert_relative_eq!(one.norm(), 1.0 / 2f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn static_agent_is_flat() {
        let h = AgentModel::static_gain(&[0.3]).unwrap();
        for w in [0.0, 1.0, 1e3] {
            let v = h.freq_response(w).unwrap().value[(0, 0)];
            assert_eq!(v, Complex64::new(0.3, 0.0));
        }
    }

    #[test]
    fn conjugate_symmetry() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 2.0, -3.0, -0.5]);
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.5, 1.0]);
        let c = DMatrix::from_row_slice(1, 2, &[1.0, -1.0]);
        let d = DMatrix::from_row_slice(1, 2, &[0.1, 0.0]);
        let h = AgentModel::new(a, b, c, d).unwrap();
        for w in [0.1, 0.7, 3.0, 40.0] {
            let pos = h.response_at(J * w).unwrap();
            let neg = h.response_at(-J * w).unwrap();
            assert!((pos.map(|z| z.conj()) - neg).iter().all(|z| z.norm() < 1e-12));
        }
    }

    #[test]
    fn block_layout_for_pair() {
        let (g, _, agents) = pair(0.7);
        let blk = assemble_block_diagonal(&g, &agents, 0.0).unwrap();
        let k = Complex64::new(0.7, 0.0);
        assert_eq!(blk.h[(0, 0)], k);
        assert_eq!(blk.h[(1, 1)], k);
        assert_eq!(blk.h[(0, 1)], Complex64::new(0.0, 0.0));
        assert_eq!(blk.t, CMatrix::identity(2, 2));
        assert!(
            (blk.f.clone() - CMatrix::identity(2, 2) * (Complex64::new(1.0, 0.0) - k))
                .iter()
                .all(|z| z.norm() < 1e-15)
        );
    }

    #[test]
    fn roll_off_limit() {
        let g = NetworkGraph::new(3, &[(0, 1), (1, 2), (0, 2)]).unwrap();
        let agents: Vec<_> = (0..3).map(|_| AgentModel::first_order(2.0, 1.0, 2).unwrap()).collect();
        let blk = assemble_block_diagonal(&g, &agents, 1e9).unwrap();
        assert!(blk.h.iter().all(|z| z.norm() < 1e-8));
        assert!((blk.f - CMatrix::identity(6, 6)).iter().all(|z| z.norm() < 1e-8));
    }

    #[test]
    fn figure_two_sparsity() {
        let g = NetworkGraph::new(4, &[(0, 1), (0, 2), (0, 3), (2, 3)]).unwrap();
        let agents: Vec<_> = g
            .degrees()
            .iter()
            .map(|&d| AgentModel::first_order(0.2, 1.0, d).unwrap())
            .collect();
        let blk = assemble_block_diagonal(&g, &agents, 0.5).unwrap();
        assert_eq!((blk.h.nrows(), blk.h.ncols()), (4, 8));
        let offsets = g.offsets();
        for (i, &offset) in offsets.iter().enumerate() {
            for c in 0..8 {
                let inside = c >= offset && c < offset + g.degree(i);
                assert_eq!(blk.h[(i, c)].norm() > 0.0, inside);
            }
        }
    }

    #[test]
    fn coprime_factors_of_pair() {
        let (g, s, agents) = pair(0.4);
        let blk = assemble_block_diagonal(&g, &agents, 0.0).unwrap();
        let (n, m) = coprime_factors(&s, &blk);
        assert_eq!(n, blk.h);
        let expect = CMatrix::from_row_slice(
            2,
            2,
            &[
                Complex64::new(-0.4, 0.0),
                Complex64::new(1.0, 0.0),
                Complex64::new(1.0, 0.0),
                Complex64::new(-0.4, 0.0),
            ],
        );
        assert!((m - expect).iter().all(|z| z.norm() < 1e-15));

        let zero = vec![AgentModel::static_gain(&[0.0]).unwrap(); 2];
        let blk = assemble_block_diagonal(&g, &zero, 1.0).unwrap();
        let (n, m) = coprime_factors(&s, &blk);
        assert!(n.iter().all(|z| z.norm() == 0.0));
        assert_eq!(m, linalg::int_to_complex(&s.p));
    }

    #[test]
    fn nominal_pair_eigenvalues() {
        for (k, stable) in [(0.5, true), (1.5, false)] {
            let (g, s, agents) = pair(k);
            let nl = NominalLoop::assemble(&g, &s, &agents).unwrap();
            let mut re: Vec<f64> = nl.eigenvalues().iter().map(|z| z.re).collect();
            re.sort_by(|a, b| a.partial_cmp(b).unwrap());
            assert_relative_eq!(re[0], -1.0 - k, epsilon = 1e-12);
            assert_relative_eq!(re[1], -1.0 + k, epsilon = 1e-12);
            let verdict = nominal_stability_check(&nl, 1e-9);
            assert_eq!(verdict.is_stable(), stable);
            if let NominalVerdict::Unstable { eigenvalue_re, .. } = verdict {
                assert_relative_eq!(eigenvalue_re, 0.5, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn static_zero_agents_are_stable() {
        let g = NetworkGraph::new(2, &[(0, 1)]).unwrap();
        let s = StructureMatrices::build(&g).unwrap();
        let agents = vec![AgentModel::static_gain(&[0.0]).unwrap(); 2];
        let nl = NominalLoop::assemble(&g, &s, &agents).unwrap();
        assert!(nominal_stability_check(&nl, 1e-9).is_stable());
    }

    #[test]
    fn ill_posed_static_loop() {
        let g = NetworkGraph::new(2, &[(0, 1)]).unwrap();
        let s = StructureMatrices::build(&g).unwrap();
        let agents = vec![AgentModel::static_gain(&[1.0]).unwrap(); 2];
        assert!(matches!(
            NominalLoop::assemble(&g, &s, &agents),
            Err(Error::IllPosedLoop(_))
        ));
    }

    #[test]
    fn unstable_agent_rejected() {
        let h = AgentModel::first_order(1.0, 1.0, 1).unwrap();
        assert!(h.check_stable(1e-9, 0).is_ok());
        let bad = AgentModel::new(
            DMatrix::from_element(1, 1, 0.1),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::zeros(1, 1),
        )
        .unwrap();
        assert!(matches!(
            bad.check_stable(1e-9, 3),
            Err(Error::UnstableAgent { agent: 3, .. })
        ));
        assert!(AgentModel::first_order(1.0, -1.0, 1).is_err());
    }

    #[test]
    fn dimension_mismatch_detected() {
        let g = NetworkGraph::new(3, &[(0, 1), (1, 2)]).unwrap();
        let agents = vec![AgentModel::first_order(1.0, 1.0, 1).unwrap(); 3];
        assert!(matches!(
            assemble_block_diagonal(&g, &agents, 0.0),
            Err(Error::DimensionMismatch(_))
        ));
    }
}
