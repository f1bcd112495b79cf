//! Link-wise decentralized certificate and the global structured
//! certificate it implies.
//!
//! For link `k` with projector `B̂_k` the blocks are
//!
//! ```text
//! W_k = B̂_k
//! X_k = (B̂_k Ξ_1 + Ξ_1 B̂_k) / 2
//! Y_k = Ξ_2 B̂_k
//! Z_k = B̂_k (⊕ D_i) B̂_k
//! ```
//!
//! and the condition at each frequency is
//! `S_k + ε_k B̂_k ⪯ 0` with `S_k = X_k + Y_k L_k + L_k Y_k^* + L_k Z_k L_k`.
//! Every nonzero entry of `S_k` lies in the coordinate blocks of the two
//! endpoint agents, so the check can be run on that `(m_i + m_j)`-dimensional
//! principal submatrix without changing the result.

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::exec::{self, Execution};
use crate::grid::FrequencyGrid;
use crate::linalg::{self, block_diagonal, CMatrix};
use crate::lti::{agent_responses, nominal_stability_check, NominalLoop, NominalVerdict};
use crate::multipliers::{assemble_xi_from_responses, split_all, Xi3Split, XiBlocks};
use crate::netgraph::{link_coordinates, StructureMatrices};
use crate::problem::Problem;

pub const GRIDDING_CAVEAT: &str = "Frequency-domain conditions were checked on a finite grid \
(with local refinement around the worst frequencies), not for all frequencies; \
the verdict is a numerical certificate, not a proof.";

/// Name of the W/X/Y/Z selection used for the link conditions.
pub const DECOMPOSITION: &str = "bhat-projector";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Margins must exceed this to certify.
    pub eps_floor: f64,
    /// Required distance of eigenvalue real parts from the imaginary axis.
    pub stability_margin: f64,
    /// Relative width at which bisection on `ε` stops.
    pub bisection: f64,
    /// Eigenvalue slack in the semidefiniteness test, relative to `‖S‖_F`.
    pub eigenvalue: f64,
    /// Coupling into the null space of the kernel block treated as zero,
    /// relative to `‖S‖_F`.
    pub coupling: f64,
    /// Refinement stops once no margin moves by more than this fraction.
    pub refine_rel_change: f64,
    pub refine_rounds: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            eps_floor: 1e-6,
            stability_margin: 1e-9,
            bisection: 1e-11,
            eigenvalue: 1e-12,
            coupling: 1e-9,
            refine_rel_change: 0.01,
            refine_rounds: 8,
        }
    }
}

/// `(W_k, X_k, Y_k, Z_k)` at one frequency.
#[derive(Debug, Clone)]
pub struct LinkBlocks {
    pub w: CMatrix,
    pub x: CMatrix,
    pub y: CMatrix,
    pub z: CMatrix,
}

fn diag_matrix(d: &DVector<f64>) -> CMatrix {
    CMatrix::from_diagonal(&d.map(|x| Complex64::new(x, 0.0)))
}

/// Builds the four link blocks from global `Ξ` and the per-agent splits.
pub fn build_link_blocks(xi: &XiBlocks, splits: &[Xi3Split], structure: &StructureMatrices, k: usize) -> LinkBlocks {
    let d = DVector::from_iterator(
        splits.iter().map(|s| s.d.len()).sum(),
        splits.iter().flat_map(|s| s.d.iter().copied()),
    );
    link_blocks_from(&xi.xi1, &xi.xi2, &d, &linalg::int_to_complex(&structure.bhat[k]))
}

fn link_blocks_from(xi1: &CMatrix, xi2: &CMatrix, d: &DVector<f64>, bhat: &CMatrix) -> LinkBlocks {
    let x = (bhat * xi1 + xi1 * bhat).scale(0.5);
    let y = xi2 * bhat;
    let z = bhat * diag_matrix(d) * bhat;
    LinkBlocks {
        w: bhat.clone(),
        x,
        y,
        z,
    }
}

/// `[I; L_k]^* [[X, Y], [Y^*, Z]] [I; L_k]`.
pub fn link_matrix(blocks: &LinkBlocks, lk: &CMatrix) -> CMatrix {
    let yl = &blocks.y * lk;
    let s = &blocks.x + &yl + yl.adjoint() + lk * &blocks.z * lk;
    linalg::hermitian_part(&s)
}

/// `[I; L]^* [[Ξ_1, Ξ_2], [Ξ_2^*, Ξ_3]] [I; L]`.
pub fn global_matrix(xi: &XiBlocks, l: &CMatrix) -> CMatrix {
    let yl = &xi.xi2 * l;
    let t = &xi.xi1 + &yl + yl.adjoint() + l * &xi.xi3 * l;
    linalg::hermitian_part(&t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub omega: f64,
    pub reason: String,
    pub violation: f64,
    /// Offending direction as `[re, im]` pairs on the checked coordinates.
    pub eigenvector: Vec<[f64; 2]>,
}

/// Result of the semidefiniteness test at a single frequency.
#[derive(Debug, Clone, PartialEq)]
pub enum PointMargin {
    /// `sup { ε : S + ε B̂ ⪯ 0 }`.
    Feasible(f64),
    /// No `ε` works.
    Infeasible {
        reason: &'static str,
        violation: f64,
        eigenvector: DVector<Complex64>,
    },
}

impl PointMargin {
    pub fn value(&self) -> f64 {
        match self {
            PointMargin::Feasible(e) => *e,
            PointMargin::Infeasible { .. } => f64::NEG_INFINITY,
        }
    }
}

/// Largest `ε` with `s + ε diag(range) ⪯ 0`.
///
/// `range[i]` marks the support of `B̂_k`. The kernel block must itself be
/// negative semidefinite with no coupling into its null space; then `ε` is
/// bracketed above by `-λ_max(S_RR)` and found by bisection on the
/// monotone map `ε ↦ λ_max(S + ε B̂)`.
pub fn point_margin(s: &CMatrix, range: &[bool], tol: &Tolerances) -> PointMargin {
    let scale = linalg::frobenius(s).max(1.0);
    let eig_tol = tol.eigenvalue * scale;
    let r_idx: Vec<usize> = (0..range.len()).filter(|&i| range[i]).collect();
    let k_idx: Vec<usize> = (0..range.len()).filter(|&i| !range[i]).collect();
    let embed = |idx: &[usize], v: &DVector<Complex64>| {
        let mut out = DVector::zeros(range.len());
        for (a, &i) in idx.iter().enumerate() {
            out[i] = v[a];
        }
        out
    };

    if !k_idx.is_empty() {
        let s_kk = linalg::principal_submatrix(s, &k_idx);
        let eig = linalg::hermitian_part(&s_kk).symmetric_eigen();
        let s_rk = linalg::submatrix(s, &r_idx, &k_idx);
        for (q, &lambda) in eig.eigenvalues.iter().enumerate() {
            let v = eig.eigenvectors.column(q).into_owned();
            if lambda > eig_tol {
                return PointMargin::Infeasible {
                    reason: "kernel block of S_k is not negative semidefinite",
                    violation: lambda,
                    eigenvector: embed(&k_idx, &v),
                };
            }
            if lambda.abs() <= eig_tol {
                let coupling = (&s_rk * &v).norm();
                if coupling > tol.coupling * scale {
                    return PointMargin::Infeasible {
                        reason: "S_k couples the range of B_hat_k into a null direction of its kernel block",
                        violation: coupling,
                        eigenvector: embed(&k_idx, &v),
                    };
                }
            }
        }
    }

    let shifted = |eps: f64| {
        let mut m = s.clone();
        for &i in &r_idx {
            m[(i, i)] += eps;
        }
        linalg::max_eigenvalue(&m)
    };

    let mut hi = -linalg::max_eigenvalue(&linalg::principal_submatrix(s, &r_idx));
    if shifted(hi) <= eig_tol {
        return PointMargin::Feasible(hi);
    }
    let mut step = hi.abs().max(1.0);
    let mut lo = hi - step;
    let mut found = false;
    for _ in 0..64 {
        if shifted(lo) <= eig_tol {
            found = true;
            break;
        }
        hi = lo;
        step *= 2.0;
        lo -= step;
    }
    if !found {
        let mut m = s.clone();
        for &i in &r_idx {
            m[(i, i)] += lo;
        }
        let (violation, eigenvector) = linalg::max_eigenpair(&m);
        return PointMargin::Infeasible {
            reason: "no finite shift makes S_k + eps B_hat_k negative semidefinite",
            violation,
            eigenvector,
        };
    }
    while hi - lo > tol.bisection * lo.abs().max(1.0) {
        let mid = 0.5 * (lo + hi);
        if shifted(mid) <= eig_tol {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    PointMargin::Feasible(lo)
}

/// Per-frequency data of one link check.
#[derive(Debug, Clone)]
pub struct LinkMargin {
    pub epsilon_star: f64,
    pub worst_omega: f64,
    pub boundary: bool,
    pub diagnostic: Option<Diagnostic>,
}

fn to_pairs(v: &DVector<Complex64>) -> Vec<[f64; 2]> {
    v.iter().map(|z| [z.re, z.im]).collect()
}

/// Minimum over frequencies of the pointwise margins.
pub fn aggregate_margins(points: &[(f64, PointMargin)], tol: &Tolerances) -> LinkMargin {
    let mut worst: Option<(f64, &PointMargin)> = None;
    for (w, pm) in points {
        match worst {
            Some((_, cur)) if cur.value() <= pm.value() => {}
            _ => worst = Some((*w, pm)),
        }
    }
    let Some((omega, pm)) = worst else {
        return LinkMargin {
            epsilon_star: f64::NEG_INFINITY,
            worst_omega: f64::NAN,
            boundary: false,
            diagnostic: None,
        };
    };
    let diagnostic = match pm {
        PointMargin::Infeasible {
            reason,
            violation,
            eigenvector,
        } => Some(Diagnostic {
            omega,
            reason: (*reason).to_string(),
            violation: *violation,
            eigenvector: to_pairs(eigenvector),
        }),
        PointMargin::Feasible(_) => None,
    };
    let eps = pm.value();
    LinkMargin {
        epsilon_star: eps,
        worst_omega: omega,
        boundary: eps.is_finite() && eps.abs() <= tol.eps_floor,
        diagnostic,
    }
}

/// Full-dimension link check over a set of `(ω, blocks)` pairs.
pub fn link_feasibility_margin(blocks: &[(f64, LinkBlocks)], lk: &CMatrix, tol: &Tolerances) -> LinkMargin {
    let points: Vec<(f64, PointMargin)> = blocks
        .iter()
        .map(|(w, b)| {
            let range: Vec<bool> = b.w.diagonal().iter().map(|z| z.re != 0.0).collect();
            (*w, point_margin(&link_matrix(b, lk), &range, tol))
        })
        .collect();
    aggregate_margins(&points, tol)
}

/// Local data for link `k`: the two endpoint agents' coordinate blocks.
#[derive(Debug, Clone)]
pub struct LinkLocality {
    pub agents: (usize, usize),
    /// Global coordinates of the reduced problem, agent `i` block first.
    pub coords: Vec<usize>,
    /// Positions of the link coordinates `(r, s)` inside `coords`.
    pub local_pair: (usize, usize),
}

impl LinkLocality {
    pub fn new(problem: &Problem, k: usize) -> Result<Self> {
        let (ci, cj) = link_coordinates(&problem.graph, k)?;
        let agents = problem.graph.edge(k)?;
        let (r, s) = problem.structure.link_pairs[k];
        let coords: Vec<usize> = ci.iter().chain(cj.iter()).copied().collect();
        let pos = |x: usize| {
            coords
                .iter()
                .position(|&c| c == x)
                .expect("link coordinate owned by endpoint")
        };
        Ok(Self {
            agents,
            local_pair: (pos(r), pos(s)),
            coords,
        })
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }
}

/// `S_k` built only from the two endpoint agents' blocks.
pub fn reduced_link_matrix(xi: &XiBlocks, splits: &[Xi3Split], loc: &LinkLocality) -> CMatrix {
    let (i, j) = loc.agents;
    let xi1 = block_diagonal(&[xi.agents[i].xi1.clone(), xi.agents[j].xi1.clone()]);
    let xi2 = block_diagonal(&[xi.agents[i].xi2.clone(), xi.agents[j].xi2.clone()]);
    let d = DVector::from_iterator(loc.dim(), splits[i].d.iter().chain(splits[j].d.iter()).copied());
    let (r, s) = loc.local_pair;
    let mut b = DVector::<Complex64>::zeros(loc.dim());
    b[r] = Complex64::new(1.0, 0.0);
    b[s] = Complex64::new(-1.0, 0.0);
    let bhat = CMatrix::from_diagonal(&b.map(|z| z * z));
    let lk = &b * b.transpose();
    link_matrix(&link_blocks_from(&xi1, &xi2, &d, &bhat), &lk)
}

/// `S_k` in the full `2m` dimension.
pub fn full_link_matrix(xi: &XiBlocks, splits: &[Xi3Split], structure: &StructureMatrices, k: usize) -> CMatrix {
    let blocks = build_link_blocks(xi, splits, structure, k);
    link_matrix(&blocks, &linalg::int_to_complex(&structure.lk[k]))
}

fn local_range(loc: &LinkLocality) -> Vec<bool> {
    (0..loc.dim())
        .map(|q| q == loc.local_pair.0 || q == loc.local_pair.1)
        .collect()
}

/// Everything computed at one grid frequency.
#[derive(Debug, Clone)]
pub struct PointEvaluation {
    pub omega: f64,
    pub links: Vec<PointMargin>,
    /// `-λ_max(T(ω))` for the global certificate.
    pub global_margin: f64,
}

/// Evaluates every link condition and the global condition at `ω`.
pub fn evaluate_point(
    problem: &Problem,
    localities: &[LinkLocality],
    omega: f64,
    tol: &Tolerances,
    reduced: bool,
) -> Result<PointEvaluation> {
    let responses = agent_responses(&problem.agents, omega)?;
    let xi = assemble_xi_from_responses(omega, &responses, &problem.multipliers)?;
    let (splits, _) = split_all(&xi);
    let links = localities
        .iter()
        .enumerate()
        .map(|(k, loc)| {
            if reduced {
                point_margin(&reduced_link_matrix(&xi, &splits, loc), &local_range(loc), tol)
            } else {
                let range: Vec<bool> = problem.structure.bhat[k].diagonal().iter().map(|&x| x != 0).collect();
                point_margin(&full_link_matrix(&xi, &splits, &problem.structure, k), &range, tol)
            }
        })
        .collect();
    let l = linalg::int_to_complex(&problem.structure.l);
    let global_margin = -linalg::max_eigenvalue(&global_matrix(&xi, &l));
    Ok(PointEvaluation {
        omega,
        links,
        global_margin,
    })
}

/// Global certificate `ε = min_ω -λ_max(T(ω))` on the given grid.
pub fn global_certificate(problem: &Problem, grid: &FrequencyGrid, exec: Execution) -> Result<(f64, f64)> {
    let l = linalg::int_to_complex(&problem.structure.l);
    let margins = exec::try_map_indexed(exec, grid.len(), |q| {
        let w = grid.points()[q];
        let responses = agent_responses(&problem.agents, w)?;
        let xi = assemble_xi_from_responses(w, &responses, &problem.multipliers)?;
        Ok::<_, crate::Error>((w, -linalg::max_eigenvalue(&global_matrix(&xi, &l))))
    })?;
    Ok(margins.into_iter().fold(
        (f64::INFINITY, f64::NAN),
        |acc, (w, e)| if e < acc.0 { (e, w) } else { acc },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Certified,
    NotCertified,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkReport {
    /// 1-based edge index.
    pub index: usize,
    /// 1-based endpoint agents.
    pub agents: [usize; 2],
    /// `None` when no `ε` satisfies the condition at some frequency.
    pub epsilon_star: Option<f64>,
    pub worst_omega: f64,
    pub boundary: bool,
    pub reduced_dim: usize,
    pub full_dim: usize,
    /// Pointwise margins, aligned with the report grid.
    pub margins: Vec<Option<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<Diagnostic>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalCheck {
    pub epsilon: f64,
    pub worst_omega: f64,
    pub certified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub tool: String,
    pub version: String,
    pub verdict: Verdict,
    pub decomposition: String,
    pub nominal: NominalVerdict,
    pub links: Vec<LinkReport>,
    /// `min_k ε_k*`; `None` when some link is infeasible.
    pub global_epsilon: Option<f64>,
    /// Undecomposed condition on the same grid, kept as a cross-check.
    pub global_check: GlobalCheck,
    pub grid: Vec<f64>,
    pub tolerances: Tolerances,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub notes: Vec<String>,
}

impl CertificateReport {
    pub fn is_certified(&self) -> bool {
        self.verdict == Verdict::Certified
    }
}

#[derive(Debug, Clone)]
pub struct CertifyOptions {
    pub tolerances: Tolerances,
    pub execution: Execution,
    /// Adaptive refinement around the worst frequencies.
    pub refine: bool,
    /// Run link checks on the local `(m_i + m_j)` subproblem.
    pub reduced: bool,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self {
            tolerances: Tolerances::default(),
            execution: Execution::Parallel,
            refine: true,
            reduced: true,
        }
    }
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

fn link_minima(evals: &[PointEvaluation], m: usize) -> Vec<(f64, usize)> {
    (0..m)
        .map(|k| {
            evals
                .iter()
                .enumerate()
                .map(|(q, e)| (e.links[k].value(), q))
                .fold((f64::INFINITY, 0), |acc, x| if x.0 < acc.0 { x } else { acc })
        })
        .collect()
}

/// Explains a feasible link whose margin does not clear `eps_floor`: the top
/// eigenpair of `S_k + eps_floor B̂_k` at the worst frequency.
fn shortfall_diagnostic(
    problem: &Problem,
    loc: &LinkLocality,
    k: usize,
    omega: f64,
    tol: &Tolerances,
    reduced: bool,
) -> Result<Diagnostic> {
    let xi = assemble_xi_from_responses(omega, &agent_responses(&problem.agents, omega)?, &problem.multipliers)?;
    let (splits, _) = split_all(&xi);
    let (mut s, range) = if reduced {
        (reduced_link_matrix(&xi, &splits, loc), local_range(loc))
    } else {
        let range = problem.structure.bhat[k].diagonal().iter().map(|&x| x != 0).collect();
        (full_link_matrix(&xi, &splits, &problem.structure, k), range)
    };
    for (q, _) in range.iter().enumerate().filter(|(_, &r)| r) {
        s[(q, q)] += tol.eps_floor;
    }
    let (violation, eigenvector) = linalg::max_eigenpair(&s);
    Ok(Diagnostic {
        omega,
        reason: "S_k + eps_floor B_hat_k is not negative semidefinite".into(),
        violation,
        eigenvector: to_pairs(&eigenvector),
    })
}

/// Runs the nominal check and every link check, refining the grid around
/// the worst frequencies, and assembles the report.
pub fn certify_problem(problem: &Problem, grid: &FrequencyGrid, opts: &CertifyOptions) -> Result<CertificateReport> {
    let tol = &opts.tolerances;
    let nominal_loop = NominalLoop::assemble(&problem.graph, &problem.structure, &problem.agents)?;
    let nominal = nominal_stability_check(&nominal_loop, tol.stability_margin);
    let m = problem.structure.edge_count();
    let localities = (0..m)
        .map(|k| LinkLocality::new(problem, k))
        .collect::<Result<Vec<_>>>()?;

    let eval_all = |pts: &[f64]| {
        exec::try_map_indexed(opts.execution, pts.len(), |q| {
            evaluate_point(problem, &localities, pts[q], tol, opts.reduced)
        })
    };

    let mut grid = grid.clone();
    let mut evals = eval_all(grid.points())?;
    if opts.refine && !grid.is_empty() {
        for _ in 0..tol.refine_rounds {
            let before = link_minima(&evals, m);
            let global_before = evals.iter().map(|e| e.global_margin).fold(f64::INFINITY, f64::min);
            let mut worst_idx: Vec<usize> = before.iter().filter(|(e, _)| e.is_finite()).map(|&(_, q)| q).collect();
            if let Some(q) = evals
                .iter()
                .enumerate()
                .min_by(|a, b| {
                    a.1.global_margin
                        .partial_cmp(&b.1.global_margin)
                        .unwrap_or(std::cmp::Ordering::Equal)
                })
                .map(|(q, _)| q)
            {
                worst_idx.push(q);
            }
            worst_idx.sort_unstable();
            worst_idx.dedup();
            let extra: Vec<f64> = worst_idx
                .iter()
                .flat_map(|&q| grid.refinement_around(q, 2))
                .filter(|w| !grid.points().contains(w))
                .collect();
            if extra.is_empty() {
                break;
            }
            let new_evals = eval_all(&extra)?;
            let mut merged: Vec<PointEvaluation> = evals.into_iter().chain(new_evals).collect();
            merged.sort_by(|a, b| a.omega.partial_cmp(&b.omega).unwrap());
            merged.dedup_by(|a, b| a.omega == b.omega);
            grid = FrequencyGrid::from_points(merged.iter().map(|e| e.omega).collect());
            evals = merged;

            let after = link_minima(&evals, m);
            let global_after = evals.iter().map(|e| e.global_margin).fold(f64::INFINITY, f64::min);
            let settled = |old: f64, new: f64| {
                !old.is_finite()
                    || !new.is_finite()
                    || (new - old).abs() <= tol.refine_rel_change * old.abs().max(tol.eps_floor)
            };
            if before.iter().zip(&after).all(|(b, a)| settled(b.0, a.0)) && settled(global_before, global_after) {
                break;
            }
        }
    }

    let mut links = Vec::with_capacity(m);
    for (k, loc) in localities.iter().enumerate() {
        let points: Vec<(f64, PointMargin)> = evals.iter().map(|e| (e.omega, e.links[k].clone())).collect();
        let mut lm = aggregate_margins(&points, tol);
        if lm.diagnostic.is_none() && lm.epsilon_star.is_finite() && lm.epsilon_star <= tol.eps_floor {
            lm.diagnostic = Some(shortfall_diagnostic(
                problem,
                loc,
                k,
                lm.worst_omega,
                tol,
                opts.reduced,
            )?);
        }
        let (i, j) = loc.agents;
        links.push(LinkReport {
            index: k + 1,
            agents: [i + 1, j + 1],
            epsilon_star: finite(lm.epsilon_star),
            worst_omega: lm.worst_omega,
            boundary: lm.boundary,
            reduced_dim: loc.dim(),
            full_dim: problem.structure.link_dim(),
            margins: points.iter().map(|(_, p)| finite(p.value())).collect(),
            diagnostic: lm.diagnostic,
        });
    }

    let min_link = links
        .iter()
        .map(|l| l.epsilon_star.unwrap_or(f64::NEG_INFINITY))
        .fold(f64::INFINITY, f64::min);
    let (g_eps, g_w) = evals.iter().fold((f64::INFINITY, f64::NAN), |acc, e| {
        if e.global_margin < acc.0 {
            (e.global_margin, e.omega)
        } else {
            acc
        }
    });
    let links_ok = links
        .iter()
        .all(|l| matches!(l.epsilon_star, Some(e) if e > tol.eps_floor && !l.boundary));
    let verdict = if nominal.is_stable() && links_ok && m > 0 {
        Verdict::Certified
    } else {
        Verdict::NotCertified
    };

    let mut notes = vec![GRIDDING_CAVEAT.to_string()];
    if !nominal.is_stable() {
        notes.push("The network with ideal links is not stable; no robustness certificate is possible.".into());
    }
    if verdict == Verdict::NotCertified && nominal.is_stable() && g_eps > tol.eps_floor {
        notes.push(
            "The undecomposed global condition holds on the grid although some link condition fails; \
             the link-wise decomposition is only sufficient."
                .into(),
        );
    }

    Ok(CertificateReport {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        verdict,
        decomposition: DECOMPOSITION.to_string(),
        nominal,
        links,
        global_epsilon: finite(min_link),
        global_check: GlobalCheck {
            epsilon: g_eps,
            worst_omega: g_w,
            certified: nominal.is_stable() && g_eps > tol.eps_floor,
        },
        grid: grid.points().to_vec(),
        tolerances: tol.clone(),
        seed: None,
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances;
    use crate::lti::AgentModel;
    use crate::multipliers::assemble_xi;
    use crate::netgraph::NetworkGraph;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    fn real(rows: usize, cols: usize, v: &[f64]) -> CMatrix {
        CMatrix::from_row_slice(rows, cols, &v.iter().map(|&x| c(x)).collect::<Vec<_>>())
    }

    #[test]
    fn margin_of_negative_identity() {
        let pm = point_margin(&-CMatrix::identity(2, 2), &[true, true], &Tolerances::default());
        assert_eq!(pm, PointMargin::Feasible(1.0));
    }

    #[test]
    fn margin_of_decoupled_diagonal() {
        let pm = point_margin(
            &real(2, 2, &[-2.0, 0.0, 0.0, -3.0]),
            &[true, false],
            &Tolerances::default(),
        );
        assert_eq!(pm, PointMargin::Feasible(2.0));
    }

    #[test]
    fn coupling_into_zero_kernel_is_infeasible() {
        let pm = point_margin(
            &real(2, 2, &[-1.0, 0.5, 0.5, 0.0]),
            &[true, false],
            &Tolerances::default(),
        );
        assert!(matches!(pm, PointMargin::Infeasible { .. }));
    }

    #[test]
    fn bisection_matches_schur_complement() {
        // Kernel block strictly negative: ε* = -λ_max(S_RR - S_RK S_KK^{-1} S_KR).
        let s = real(3, 3, &[-1.0, 0.3, 0.2, 0.3, -2.0, 0.1, 0.2, 0.1, -1.5]);
        let pm = point_margin(&s, &[true, false, false], &Tolerances::default());
        let skk = real(2, 2, &[-2.0, 0.1, 0.1, -1.5]);
        let srk = real(1, 2, &[0.3, 0.2]);
        let schur = real(1, 1, &[-1.0]) - &srk * skk.try_inverse().unwrap() * srk.adjoint();
        let expect = -schur[(0, 0)].re;
        assert_relative_eq!(pm.value(), expect, epsilon = 1e-9);
    }

    #[test]
    fn positive_kernel_is_infeasible() {
        let pm = point_margin(
            &real(2, 2, &[-1.0, 0.0, 0.0, 0.5]),
            &[true, false],
            &Tolerances::default(),
        );
        assert!(matches!(pm, PointMargin::Infeasible { .. }));
    }

    #[test]
    fn single_link_collapses_to_global() {
        let g = NetworkGraph::new(2, &[(0, 1)]).unwrap();
        let agents = vec![AgentModel::first_order(0.5, 1.0, 1).unwrap(); 2];
        let p = Problem::with_gain_bounded_links(g, agents, 0.2).unwrap();
        let xi = assemble_xi(&p.graph, &p.agents, &p.multipliers, 0.3).unwrap();
        let (splits, d) = split_all(&xi);
        let blocks = build_link_blocks(&xi, &splits, &p.structure, 0);
        assert_eq!(blocks.w, CMatrix::identity(2, 2));
        assert!((&blocks.x - &xi.xi1).iter().all(|z| z.norm() < 1e-15));
        assert!((&blocks.y - &xi.xi2).iter().all(|z| z.norm() < 1e-15));
        assert_eq!(blocks.z, diag_matrix(&d));
        let s = full_link_matrix(&xi, &splits, &p.structure, 0);
        let t = global_matrix(&xi, &linalg::int_to_complex(&p.structure.l));
        assert!((s - t).iter().all(|z| z.norm() < 1e-14));
    }

    #[test]
    fn link_blocks_sum_and_kernel_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = NetworkGraph::new(3, &[(0, 1), (1, 2), (0, 2)]).unwrap();
        let s = StructureMatrices::build(&g).unwrap();
        let xi1 = instances::random_hermitian(&mut rng, 6);
        let xi2 = instances::random_complex(&mut rng, 6, 6);
        let xi = XiBlocks {
            omega: 0.0,
            agents: Vec::new(),
            xi1: xi1.clone(),
            xi2: xi2.clone(),
            xi3: -CMatrix::identity(6, 6),
        };
        let splits = vec![crate::multipliers::split_xi3(&-CMatrix::identity(6, 6))];
        let mut sum_x = CMatrix::zeros(6, 6);
        for k in 0..3 {
            let b = build_link_blocks(&xi, &splits, &s, k);
            sum_x += &b.x;
            let lk = linalg::int_to_complex(&s.lk[k]);
            assert!((&b.y * &lk - &xi2 * &lk).iter().all(|z| z.norm() < 1e-14));
        }
        assert!((sum_x - xi1).iter().all(|z| z.norm() < 1e-14));
    }

    #[test]
    fn pair_certificate_tracks_true_boundary() {
        let grid = crate::grid::GridSpec::default().build().unwrap();
        for (k, r, expect) in [(0.5, 0.2, true), (0.5, 1.5, false)] {
            let g = NetworkGraph::new(2, &[(0, 1)]).unwrap();
            let agents = vec![AgentModel::first_order(k, 1.0, 1).unwrap(); 2];
            let p = Problem::with_gain_bounded_links(g, agents, r).unwrap();
            let (eps, _) = global_certificate(&p, &grid, Execution::Sequential).unwrap();
            assert_eq!(eps > 0.0, expect, "k={k} r={r} eps={eps}");
            let report = certify_problem(&p, &grid, &CertifyOptions::default()).unwrap();
            assert_eq!(report.is_certified(), expect);
        }
    }

    #[test]
    fn zero_multipliers_do_not_certify() {
        let g = NetworkGraph::new(2, &[(0, 1)]).unwrap();
        let agents = vec![AgentModel::first_order(0.5, 1.0, 1).unwrap(); 2];
        let zero = crate::multipliers::MultiplierBlocks::from_table(
            1,
            vec![crate::multipliers::TableEntry {
                omega: 0.0,
                blocks: crate::multipliers::PhiBlocks::new(0.0, CMatrix::zeros(1, 1), CMatrix::zeros(1, 1)).unwrap(),
            }],
        )
        .unwrap();
        let p = Problem::new(g, agents, vec![zero.clone(), zero], 1e-9).unwrap();
        let grid = crate::grid::GridSpec::default().build().unwrap();
        let (eps, _) = global_certificate(&p, &grid, Execution::Parallel).unwrap();
        assert_eq!(eps, 0.0);
        assert!(!certify_problem(&p, &grid, &CertifyOptions::default())
            .unwrap()
            .is_certified());
    }

    #[test]
    fn reduced_and_full_agree_on_triangle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let g = NetworkGraph::new(3, &[(0, 1), (1, 2), (0, 2)]).unwrap();
        let agents: Vec<_> = (0..3).map(|_| instances::random_stable_agent(&mut rng, 2, 2)).collect();
        let p = Problem::with_gain_bounded_links(g, agents, 0.3).unwrap();
        let locs: Vec<_> = (0..3).map(|k| LinkLocality::new(&p, k).unwrap()).collect();
        let tol = Tolerances::default();
        for w in [0.0, 0.1, 1.0, 10.0] {
            let a = evaluate_point(&p, &locs, w, &tol, true).unwrap();
            let b = evaluate_point(&p, &locs, w, &tol, false).unwrap();
            for (k, loc) in locs.iter().enumerate() {
                assert_eq!(loc.dim(), 4);
                let (x, y) = (a.links[k].value(), b.links[k].value());
                assert!(x == y || (x - y).abs() <= 1e-9, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn nominal_failure_blocks_certification() {
        let g = NetworkGraph::new(2, &[(0, 1)]).unwrap();
        let agents = vec![AgentModel::first_order(1.5, 1.0, 1).unwrap(); 2];
        let p = Problem::with_gain_bounded_links(g, agents, 0.0).unwrap();
        let grid = crate::grid::GridSpec::default().build().unwrap();
        let report = certify_problem(&p, &grid, &CertifyOptions::default()).unwrap();
        assert!(!report.nominal.is_stable());
        assert_eq!(report.verdict, Verdict::NotCertified);
        assert_eq!(report.notes[0], GRIDDING_CAVEAT);
    }
}
