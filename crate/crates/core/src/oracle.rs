//! Independent validators: the undecomposed IQC check on `G = H M^{-1}`,
//! a sampled-uncertainty destabilization search, and a sampling test of the
//! multiplier inequality.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::grid::FrequencyGrid;
use crate::linalg::{self, CMatrix};
use crate::lti::{assemble_block_diagonal, coprime_factors};
use crate::multipliers::{global_phi, MultiplierBlocks, MultiplierClass};
use crate::problem::Problem;
use crate::sim::{lti_spectral_abscissa, Excitation, SimOptions, Simulator};

pub use crate::sim::{LinkSample, UncertaintySample};

/// `M` is treated as singular below this smallest singular value.
pub const SIGMA_MIN_FLOOR: f64 = 1e-12;

/// `[G; I]^* Φ [G; I]` at `ω` with `G = H M^{-1}`.
pub fn direct_iqc_matrix(problem: &Problem, omega: f64) -> Result<CMatrix> {
    let block = assemble_block_diagonal(&problem.graph, &problem.agents, omega)?;
    let (_, m) = coprime_factors(&problem.structure, &block);
    let smin = linalg::sigma_min(&m);
    if !(smin > SIGMA_MIN_FLOOR) {
        return Err(Error::IllConditioned {
            context: format!("M(jω) at ω = {omega}"),
            sigma_min: smin,
        });
    }
    let minv = m.try_inverse().ok_or(Error::IllConditioned {
        context: format!("M(jω) at ω = {omega}"),
        sigma_min: smin,
    })?;
    let g = &block.h * minv;
    let (n, dim) = g.shape();
    let mut stacked = CMatrix::zeros(n + dim, dim);
    stacked.view_mut((0, 0), (n, dim)).copy_from(&g);
    stacked
        .view_mut((n, 0), (dim, dim))
        .copy_from(&CMatrix::identity(dim, dim));
    let phi = global_phi(&problem.multipliers, omega);
    Ok(linalg::hermitian_part(&(stacked.adjoint() * phi * stacked)))
}

/// `min_ω -λ_max([G; I]^* Φ [G; I])` and the minimizing frequency.
pub fn direct_iqc_check(problem: &Problem, grid: &FrequencyGrid, exec: Execution) -> Result<(f64, f64)> {
    let margins = exec::try_map_indexed(exec, grid.len(), |q| {
        let w = grid.points()[q];
        direct_iqc_matrix(problem, w).map(|x| (w, -linalg::max_eigenvalue(&x)))
    })?;
    Ok(margins.into_iter().fold(
        (f64::INFINITY, f64::NAN),
        |acc, (w, e)| if e < acc.0 { (e, w) } else { acc },
    ))
}

/// Per-coordinate deviation radius implied by each agent's multiplier class.
/// Tabulated multipliers carry no radius and give `None`.
pub fn class_radius(mult: &MultiplierBlocks) -> Option<f64> {
    match mult.class() {
        MultiplierClass::GainBoundedDeviation { radius } => Some(*radius),
        MultiplierClass::DiagonalDynamicNormBound { radius, .. } => Some(*radius),
        MultiplierClass::UserTable => None,
    }
}

/// Radius of every link coordinate, from its owning agent.
pub fn coordinate_radii(problem: &Problem, agent_radii: &[f64]) -> Result<Vec<f64>> {
    if agent_radii.len() != problem.graph.vertex_count() {
        return Err(Error::DimensionMismatch(format!(
            "{} radii for {} agents",
            agent_radii.len(),
            problem.graph.vertex_count()
        )));
    }
    Ok(problem
        .graph
        .coordinate_owner()
        .into_iter()
        .map(|i| agent_radii[i])
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOptions {
    pub samples: usize,
    pub seed: u64,
    pub horizon: f64,
    pub dt: Option<f64>,
    pub threshold: f64,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            samples: 500,
            seed: 0,
            horizon: 200.0,
            dt: None,
            threshold: 1e6,
            execution: Execution::Parallel,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    /// Index of the sample in the seeded sequence.
    pub sample_index: usize,
    /// Time at which the state norm crossed the threshold.
    pub time: f64,
    /// State norm over peak excitation at that time.
    pub growth_ratio: f64,
    /// Closed-loop spectral abscissa when the sample is linear.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spectral_abscissa: Option<f64>,
    pub excitation: Excitation,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum SearchOutcome {
    NoneFound {
        samples: usize,
    },
    Found {
        sample: UncertaintySample,
        evidence: Evidence,
    },
}

impl SearchOutcome {
    pub fn is_found(&self) -> bool {
        matches!(self, SearchOutcome::Found { .. })
    }
}

fn unit_direction<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-3 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Draws sample `index` of the seeded sequence.
///
/// Sample 0 is the ideal network, samples 1 and 2 put every link at
/// `+r` and `-r`. Later samples draw each link independently: a `±r`
/// endpoint (40%), a uniform constant in `[-r, r]` (30%), a first-order
/// filter with gain in `[-r, r]` and pole log-uniform in `[0.2, 5]` (20%), or
/// a logarithmic quantizer of sector `r` (10%, only when `allow_nonlinear`).
pub fn draw_sample(radii: &[f64], index: usize, seed: u64, allow_nonlinear: bool) -> (UncertaintySample, Excitation) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let dim = radii.len();
    let links = match index {
        0 => vec![LinkSample::IDEAL; dim],
        1 => radii.iter().map(|&r| LinkSample::Constant { delta: r }).collect(),
        2 => radii.iter().map(|&r| LinkSample::Constant { delta: -r }).collect(),
        _ => radii
            .iter()
            .map(|&r| {
                let u: f64 = rng.random();
                if u < 0.4 {
                    let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                    LinkSample::Constant { delta: sign * r }
                } else if u < 0.7 || r == 0.0 {
                    LinkSample::Constant {
                        delta: r * rng.random_range(-1.0..=1.0),
                    }
                } else if u < 0.9 || !allow_nonlinear {
                    let pole = (rng.random_range(0.2f64.ln()..=5f64.ln())).exp();
                    LinkSample::FirstOrder {
                        gain: r * rng.random_range(-1.0..=1.0),
                        pole,
                    }
                } else {
                    LinkSample::quantizer_for_radius(r).unwrap_or(LinkSample::Constant { delta: r })
                }
            })
            .collect(),
    };
    let excitation = Excitation::pulse_v(unit_direction(&mut rng, dim), 1.0);
    (UncertaintySample { links }, excitation)
}

fn run_sample(
    problem: &Problem,
    sample: &UncertaintySample,
    excitation: &Excitation,
    opts: &SearchOptions,
) -> Result<Option<Evidence>> {
    let dt = opts.dt.unwrap_or_else(|| crate::sim::default_dt(problem, sample));
    let sim = Simulator::new(problem, sample, dt)?;
    let sim_opts = SimOptions {
        dt: Some(dt),
        horizon: opts.horizon,
        threshold: opts.threshold,
        record: false,
    };
    let abscissa = if sample.is_linear() {
        lti_spectral_abscissa(problem, sample)?
    } else {
        None
    };
    match sim.run(excitation, &sim_opts) {
        Ok(trace) => {
            if !trace.diverged() {
                return Ok(None);
            }
            let t = *trace.time.last().expect("nonempty trace");
            let peak = trace.excitation_peak;
            Ok(Some(Evidence {
                sample_index: 0,
                time: t,
                growth_ratio: trace.state_norms.last().copied().unwrap_or(f64::NAN) / peak,
                spectral_abscissa: abscissa,
                excitation: excitation.clone(),
                failure: None,
            }))
        }
        Err(Error::NonFiniteState { step }) => Ok(Some(Evidence {
            sample_index: 0,
            time: step as f64 * dt,
            growth_ratio: f64::INFINITY,
            spectral_abscissa: abscissa,
            excitation: excitation.clone(),
            failure: Some(format!("non-finite state at step {step}")),
        })),
        Err(e) => Err(e),
    }
}

/// Simulates `opts.samples` admissible link samples and reports the first
/// (lowest index) that diverges.
pub fn destabilization_search(problem: &Problem, agent_radii: &[f64], opts: &SearchOptions) -> Result<SearchOutcome> {
    let radii = coordinate_radii(problem, agent_radii)?;
    if let Some(r) = radii.iter().find(|r| !(**r >= 0.0 && r.is_finite())) {
        return Err(Error::InvalidParameter(format!("invalid link radius {r}")));
    }
    let allow_nonlinear = problem.agents.iter().all(|a| a.is_strictly_proper());
    let results = exec::try_map_indexed(opts.execution, opts.samples, |s| {
        let (sample, excitation) = draw_sample(&radii, s, opts.seed, allow_nonlinear);
        run_sample(problem, &sample, &excitation, opts).map(|ev| ev.map(|e| (s, sample, e)))
    })?;
    Ok(match results.into_iter().flatten().next() {
        Some((s, sample, mut evidence)) => {
            evidence.sample_index = s;
            SearchOutcome::Found { sample, evidence }
        }
        None => SearchOutcome::NoneFound { samples: opts.samples },
    })
}

/// Radii from the problem's own multiplier classes, tabulated ones as 0.
pub fn search_problem(problem: &Problem, opts: &SearchOptions) -> Result<SearchOutcome> {
    let radii: Vec<f64> = problem
        .multipliers
        .iter()
        .map(|m| class_radius(m).unwrap_or(0.0))
        .collect();
    destabilization_search(problem, &radii, opts)
}

/// Link deviations `Δ_i(y) = (δ_1 y, …, δ_m y)` to test a multiplier against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationClass {
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiplierWitness {
    pub trial: usize,
    pub alpha: f64,
    pub deviations: Vec<LinkSample>,
    /// Quadrature of `⟨(y, u), Φ (y, u)⟩`.
    pub value: f64,
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum MultiplierValidation {
    Valid { trials: usize, min_value: f64 },
    Violated { witness: MultiplierWitness },
}

impl MultiplierValidation {
    pub fn is_valid(&self) -> bool {
        matches!(self, MultiplierValidation::Valid { .. })
    }
}

const QUAD_POINTS: usize = 1500;

fn frequency_response(link: &LinkSample, omega: f64) -> Complex64 {
    match *link {
        LinkSample::Constant { delta } => Complex64::new(delta, 0.0),
        LinkSample::FirstOrder { gain, pole } => gain * pole / Complex64::new(pole, omega),
        LinkSample::LogQuantizer { ratio } => Complex64::new((1.0 - ratio) / (1.0 + ratio), 0.0),
    }
}

/// Samples `α ∈ [0, 1]`, class members and band-limited `y`, and evaluates
/// `∫ (y, αΔy)^* Φ(ω) (y, αΔy) dω` by the trapezoid rule. Trial 0 uses
/// `α = 0` and trial 1 uses `α = 1`.
pub fn validate_multiplier(
    mult: &MultiplierBlocks,
    class: &DeviationClass,
    trials: usize,
    seed: u64,
) -> MultiplierValidation {
    let m = mult.inputs();
    let (lo, hi) = (1e-2f64.ln(), 1e3f64.ln());
    let omegas: Vec<f64> = std::iter::once(0.0)
        .chain((0..QUAD_POINTS).map(|q| (lo + (hi - lo) * q as f64 / (QUAD_POINTS - 1) as f64).exp()))
        .collect();
    let phis: Vec<CMatrix> = omegas.iter().map(|&w| mult.at(w).full()).collect();
    let mut min_value = f64::INFINITY;
    for trial in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(trial as u64);
        let alpha = match trial {
            0 => 0.0,
            1 => 1.0,
            _ => rng.random_range(0.0..=1.0),
        };
        let r = class.radius;
        let deviations: Vec<LinkSample> = (0..m)
            .map(|_| {
                if rng.random_bool(0.5) {
                    let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                    let mag = if rng.random_bool(0.5) {
                        1.0
                    } else {
                        rng.random_range(0.0..=1.0)
                    };
                    LinkSample::Constant { delta: sign * r * mag }
                } else {
                    LinkSample::FirstOrder {
                        gain: r * rng.random_range(-1.0..=1.0),
                        pole: rng.random_range(0.2f64.ln()..=5f64.ln()).exp(),
                    }
                }
            })
            .collect();
        let bands: Vec<(f64, f64, Complex64)> = (0..3)
            .map(|_| {
                (
                    rng.random_range(0.01f64.ln()..=100f64.ln()),
                    rng.random_range(0.1..=1.0),
                    Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
                )
            })
            .collect();
        let integrand: Vec<(f64, f64)> = omegas
            .iter()
            .zip(&phis)
            .map(|(&w, phi)| {
                let lw = w.max(1e-6).ln();
                let y: Complex64 = bands.iter().map(|&(c, s, a)| a * (-((lw - c) / s).powi(2)).exp()).sum();
                let mut z = DVector::<Complex64>::zeros(m + 1);
                z[0] = y;
                for (k, d) in deviations.iter().enumerate() {
                    z[k + 1] = frequency_response(d, w) * y * alpha;
                }
                let q = (z.adjoint() * phi * &z)[(0, 0)].re;
                (q, y.norm_sqr())
            })
            .collect();
        let (mut value, mut energy) = (0.0, 0.0);
        for q in 1..omegas.len() {
            let h = omegas[q] - omegas[q - 1];
            value += 0.5 * h * (integrand[q].0 + integrand[q - 1].0);
            energy += 0.5 * h * (integrand[q].1 + integrand[q - 1].1);
        }
        min_value = min_value.min(value);
        if value < -1e-12 * energy.max(1.0) {
            return MultiplierValidation::Violated {
                witness: MultiplierWitness {
                    trial,
                    alpha,
                    deviations,
                    value,
                    energy,
                },
            };
        }
    }
    MultiplierValidation::Valid { trials, min_value }
}
