//! Sampled-time simulation of the uncertain network.
//!
//! Agents and linear link filters are discretized by zero-order hold. At
//! each sample the static loop
//!
//! ```text
//! v = P w + d_v
//! w = R(T y) + d_w,   y = C x + D v
//! ```
//!
//! is solved exactly, then the states are advanced one step.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::lti::{fanout_matrix, BlockRealization};
use crate::problem::Problem;

/// Scalar link system `R = 1 + Δ` acting on one link coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LinkSample {
    /// `R = 1 + delta`.
    Constant { delta: f64 },
    /// `R(s) = 1 + gain * pole / (s + pole)`.
    FirstOrder { gain: f64, pole: f64 },
    /// Logarithmic quantizer with levels `±ratio^j`.
    LogQuantizer { ratio: f64 },
}

impl LinkSample {
    pub const IDEAL: LinkSample = LinkSample::Constant { delta: 0.0 };

    /// Quantizer whose sector deviation equals `radius` (`0 < radius < 1`).
    pub fn quantizer_for_radius(radius: f64) -> Option<Self> {
        (radius > 0.0 && radius < 1.0).then(|| LinkSample::LogQuantizer {
            ratio: (1.0 - radius) / (1.0 + radius),
        })
    }

    pub fn is_linear(&self) -> bool {
        !matches!(self, LinkSample::LogQuantizer { .. })
    }

    /// Upper bound on `|R(jω) - 1|`, or the sector bound for the quantizer.
    pub fn deviation_bound(&self) -> f64 {
        match *self {
            LinkSample::Constant { delta } => delta.abs(),
            LinkSample::FirstOrder { gain, .. } => gain.abs(),
            LinkSample::LogQuantizer { ratio } => (1.0 - ratio) / (1.0 + ratio),
        }
    }

    /// Deviation gain `max_ω |R(jω) - 1|` measured on a frequency list.
    pub fn measured_deviation(&self, omegas: &[f64]) -> f64 {
        match *self {
            LinkSample::FirstOrder { gain, pole } => omegas
                .iter()
                .map(|&w| (gain * pole / num_complex::Complex64::new(pole, w)).norm())
                .fold(0.0, f64::max),
            _ => self.deviation_bound(),
        }
    }

    pub fn pole(&self) -> Option<f64> {
        match *self {
            LinkSample::FirstOrder { pole, .. } => Some(pole),
            _ => None,
        }
    }
}

/// Quantizes `z` to `sign(z) ratio^j` with `|q(z) - z| ≤ δ |z|`,
/// `δ = (1 - ratio) / (1 + ratio)`.
pub fn log_quantize(z: f64, ratio: f64) -> f64 {
    if z == 0.0 || !z.is_finite() {
        return z;
    }
    let t = z.abs() * 2.0 / (1.0 + ratio);
    let j = (t.ln() / ratio.ln()).floor() + 1.0;
    z.signum() * ratio.powf(j)
}

/// One link system per link coordinate, in coordinate order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintySample {
    pub links: Vec<LinkSample>,
}

impl UncertaintySample {
    pub fn ideal(dim: usize) -> Self {
        Self::uniform(dim, LinkSample::IDEAL)
    }

    pub fn uniform(dim: usize, link: LinkSample) -> Self {
        Self { links: vec![link; dim] }
    }

    pub fn is_linear(&self) -> bool {
        self.links.iter().all(LinkSample::is_linear)
    }

    /// Largest per-coordinate deviation gain.
    pub fn max_deviation(&self) -> f64 {
        self.links.iter().map(LinkSample::deviation_bound).fold(0.0, f64::max)
    }

    /// Whether every link lies in the deviation ball of the given radius,
    /// with first-order gains checked on `omegas`.
    pub fn within_radius(&self, radius: f64, omegas: &[f64]) -> bool {
        self.links.iter().all(|l| {
            l.measured_deviation(omegas) <= radius * (1.0 + 1e-12) && l.deviation_bound() <= radius * (1.0 + 1e-12)
        })
    }
}

/// Disturbance on `d_v` or `d_w`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Signal {
    Zero,
    /// `direction` held for `0 ≤ t < width`.
    Pulse {
        direction: Vec<f64>,
        width: f64,
    },
    /// `direction · sin(omega t)`.
    Sine {
        direction: Vec<f64>,
        omega: f64,
    },
}

impl Signal {
    fn write_at(&self, t: f64, out: &mut DVector<f64>) {
        match self {
            Signal::Zero => out.fill(0.0),
            Signal::Pulse { direction, width } => {
                let on = if t < *width { 1.0 } else { 0.0 };
                out.iter_mut().zip(direction).for_each(|(o, d)| *o = on * d);
            }
            Signal::Sine { direction, omega } => {
                let s = (omega * t).sin();
                out.iter_mut().zip(direction).for_each(|(o, d)| *o = s * d);
            }
        }
    }

    fn peak(&self) -> f64 {
        match self {
            Signal::Zero => 0.0,
            Signal::Pulse { direction, .. } | Signal::Sine { direction, .. } => {
                direction.iter().map(|x| x * x).sum::<f64>().sqrt()
            }
        }
    }

    /// Time after which the signal is identically zero.
    fn support_end(&self) -> f64 {
        match self {
            Signal::Zero => 0.0,
            Signal::Pulse { width, .. } => *width,
            Signal::Sine { .. } => f64::INFINITY,
        }
    }

    fn check(&self, dim: usize, what: &str) -> Result<()> {
        match self {
            Signal::Zero => Ok(()),
            Signal::Pulse { direction, .. } | Signal::Sine { direction, .. } if direction.len() != dim => {
                Err(Error::DimensionMismatch(format!(
                    "{what} direction has {} entries, expected {dim}",
                    direction.len()
                )))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Excitation {
    pub v: Signal,
    pub w: Signal,
}

impl Excitation {
    pub fn none() -> Self {
        Self {
            v: Signal::Zero,
            w: Signal::Zero,
        }
    }

    pub fn pulse_v(direction: Vec<f64>, width: f64) -> Self {
        Self {
            v: Signal::Pulse { direction, width },
            w: Signal::Zero,
        }
    }

    pub fn peak(&self) -> f64 {
        self.v.peak().hypot(self.w.peak())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    /// Step; `None` picks `1 / (50 ω_max)`.
    pub dt: Option<f64>,
    pub horizon: f64,
    /// Divergence once the state norm exceeds this multiple of the peak
    /// excitation.
    pub threshold: f64,
    /// Keep the full signal history.
    pub record: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            dt: None,
            horizon: 200.0,
            threshold: 1e6,
            record: true,
        }
    }
}

/// Sampled trajectory. `v`, `w`, `d_v`, `d_w` are empty unless recording.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub dt: f64,
    pub time: Vec<f64>,
    pub v: Vec<DVector<f64>>,
    pub w: Vec<DVector<f64>>,
    pub d_v: Vec<DVector<f64>>,
    pub d_w: Vec<DVector<f64>>,
    /// `‖(x, ξ, v)‖` per step: agent states, link filter states and link inputs.
    pub state_norms: Vec<f64>,
    pub excitation_peak: f64,
    pub threshold: f64,
}

impl SimTrace {
    pub fn diverged(&self) -> bool {
        self.state_norms
            .iter()
            .any(|&s| !s.is_finite() || s > self.threshold * self.excitation_peak.max(f64::MIN_POSITIVE))
    }

    /// Least-squares slope of `ln ‖state‖` over the second half of the trace.
    pub fn growth_rate(&self) -> Option<f64> {
        let half = self.state_norms.len() / 2;
        let pts: Vec<(f64, f64)> = self.time[half..]
            .iter()
            .zip(&self.state_norms[half..])
            .filter(|(_, s)| **s > 0.0 && s.is_finite())
            .map(|(t, s)| (*t, s.ln()))
            .collect();
        if pts.len() < 2 {
            return None;
        }
        let n = pts.len() as f64;
        let (mt, ml) = pts.iter().fold((0.0, 0.0), |(a, b), (t, l)| (a + t / n, b + l / n));
        let (num, den) = pts.iter().fold((0.0, 0.0), |(a, b), (t, l)| {
            (a + (t - mt) * (l - ml), b + (t - mt) * (t - mt))
        });
        (den > 0.0).then(|| num / den)
    }

    /// Writes `t v_1..v_2m w_1..w_2m` rows, one per sample, with a `#` header.
    pub fn write_columns<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let dim = self.v.first().map_or(0, |v| v.len());
        let mut header = String::from("# t");
        for p in 1..=dim {
            header.push_str(&format!(" v{p}"));
        }
        for p in 1..=dim {
            header.push_str(&format!(" w{p}"));
        }
        writeln!(out, "{header}")?;
        for (q, t) in self.time.iter().enumerate() {
            write!(out, "{t:.9e}")?;
            for x in self.v[q].iter().chain(self.w[q].iter()) {
                write!(out, " {x:.9e}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Largest pole modulus among agents and link filters, or 1 when there are none.
pub fn fastest_pole(problem: &Problem, sample: &UncertaintySample) -> f64 {
    let w = problem
        .agents
        .iter()
        .map(|a| a.max_pole_modulus())
        .chain(sample.links.iter().filter_map(LinkSample::pole))
        .fold(0.0, f64::max);
    if w > 0.0 {
        w
    } else {
        1.0
    }
}

pub fn default_dt(problem: &Problem, sample: &UncertaintySample) -> f64 {
    1.0 / (50.0 * fastest_pole(problem, sample))
}

/// Zero-order-hold pair `(e^{A dt}, ∫_0^dt e^{A s} ds B)`.
pub fn zoh(a: &DMatrix<f64>, b: &DMatrix<f64>, dt: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let (nx, nu) = (a.nrows(), b.ncols());
    if nx == 0 {
        return (DMatrix::zeros(0, 0), DMatrix::zeros(0, nu));
    }
    let mut m = DMatrix::zeros(nx + nu, nx + nu);
    m.view_mut((0, 0), (nx, nx)).copy_from(&(a * dt));
    m.view_mut((0, nx), (nx, nu)).copy_from(&(b * dt));
    let e = m.exp();
    (
        e.view((0, 0), (nx, nx)).into_owned(),
        e.view((0, nx), (nx, nu)).into_owned(),
    )
}

/// Precomputed stepping matrices for one `(problem, sample, dt)`.
#[derive(Debug, Clone)]
pub struct Simulator {
    dt: f64,
    dim: usize,
    ad: DMatrix<f64>,
    bd: DMatrix<f64>,
    c: DMatrix<f64>,
    d: DMatrix<f64>,
    p: DMatrix<f64>,
    t: DMatrix<f64>,
    /// Constant link feedthrough `1 + δ` (1 for filters, 0 for quantizers).
    feed: DVector<f64>,
    quantizers: Vec<(usize, f64)>,
    /// Link filters: coordinate, gain, discrete pole, input weight.
    filters: Vec<(usize, f64, f64, f64)>,
    /// LU of `I - P diag(feed) T D` when the loop has feedthrough.
    loop_lu: Option<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
}

impl Simulator {
    pub fn new(problem: &Problem, sample: &UncertaintySample, dt: f64) -> Result<Self> {
        let dim = problem.structure.link_dim();
        if sample.links.len() != dim {
            return Err(Error::DimensionMismatch(format!(
                "uncertainty sample has {} links, network has {dim} link coordinates",
                sample.links.len()
            )));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("step must be positive, got {dt}")));
        }
        let real = BlockRealization::assemble(&problem.agents);
        let (ad, bd) = zoh(&real.a, &real.b, dt);
        let mut feed = DVector::zeros(dim);
        let mut quantizers = Vec::new();
        let mut filters = Vec::new();
        for (q, link) in sample.links.iter().enumerate() {
            match *link {
                LinkSample::Constant { delta } => feed[q] = 1.0 + delta,
                LinkSample::FirstOrder { gain, pole } => {
                    if !(pole > 0.0) {
                        return Err(Error::InvalidParameter(format!(
                            "link filter pole must be positive, got {pole}"
                        )));
                    }
                    feed[q] = 1.0;
                    let a = (-pole * dt).exp();
                    filters.push((q, gain, a, 1.0 - a));
                }
                LinkSample::LogQuantizer { ratio } => {
                    if !(ratio > 0.0 && ratio < 1.0) {
                        return Err(Error::InvalidParameter(format!(
                            "quantizer ratio must be in (0,1), got {ratio}"
                        )));
                    }
                    quantizers.push((q, ratio));
                }
            }
        }
        let has_feedthrough = real.d.iter().any(|&x| x != 0.0);
        if has_feedthrough && !quantizers.is_empty() {
            return Err(Error::IllPosedLoop(
                "nonlinear link samples need strictly proper agents".into(),
            ));
        }
        let p = linalg::int_to_real(&problem.structure.p);
        let t = linalg::int_to_real(&fanout_matrix(&problem.graph));
        let loop_lu = if has_feedthrough {
            let lam = DMatrix::identity(dim, dim) - &p * DMatrix::from_diagonal(&feed) * &t * &real.d;
            let rcond = linalg::reciprocal_condition(&linalg::to_complex(&lam));
            if !(rcond > 1e-12) {
                return Err(Error::IllPosedLoop(format!(
                    "static loop matrix is singular (reciprocal condition {rcond:e})"
                )));
            }
            Some(lam.lu())
        } else {
            None
        };
        Ok(Self {
            dt,
            dim,
            ad,
            bd,
            c: real.c,
            d: real.d,
            p,
            t,
            feed,
            quantizers,
            filters,
            loop_lu,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Solves the static loop for `(v, w)` given states and disturbances.
    fn close_loop(
        &self,
        x: &DVector<f64>,
        xi: &[f64],
        d_v: &DVector<f64>,
        d_w: &DVector<f64>,
        v: &mut DVector<f64>,
        w: &mut DVector<f64>,
    ) {
        // w = diag(feed) T (C x + D v) + filter outputs + quantized + d_w
        let z0 = &self.t * (&self.c * x);
        let mut w0 = z0.component_mul(&self.feed) + d_w;
        for (f, &(q, gain, _, _)) in self.filters.iter().enumerate() {
            w0[q] += gain * xi[f];
        }
        for &(q, ratio) in &self.quantizers {
            w0[q] += log_quantize(z0[q], ratio);
        }
        let rhs = &self.p * &w0 + d_v;
        match &self.loop_lu {
            Some(lu) => {
                *v = lu.solve(&rhs).expect("static loop checked at construction");
                let z = &self.t * (&self.d * &*v);
                *w = w0 + z.component_mul(&self.feed);
            }
            None => {
                *v = rhs;
                *w = w0;
            }
        }
    }

    /// Runs for `horizon` seconds. Stops early on divergence, on a non-finite
    /// state, or once the response has decayed to nothing after the
    /// excitation ends.
    pub fn run(&self, excitation: &Excitation, opts: &SimOptions) -> Result<SimTrace> {
        excitation.v.check(self.dim, "d_v")?;
        excitation.w.check(self.dim, "d_w")?;
        let steps = (opts.horizon / self.dt).ceil() as usize;
        let peak = excitation.peak();
        let quiet_after = excitation.v.support_end().max(excitation.w.support_end());
        let mut x = DVector::zeros(self.ad.nrows());
        let mut xi = vec![0.0; self.filters.len()];
        let (mut d_v, mut d_w) = (DVector::zeros(self.dim), DVector::zeros(self.dim));
        let (mut v, mut w) = (DVector::zeros(self.dim), DVector::zeros(self.dim));
        let mut trace = SimTrace {
            dt: self.dt,
            time: Vec::with_capacity(steps + 1),
            v: Vec::new(),
            w: Vec::new(),
            d_v: Vec::new(),
            d_w: Vec::new(),
            state_norms: Vec::with_capacity(steps + 1),
            excitation_peak: peak,
            threshold: opts.threshold,
        };
        for step in 0..=steps {
            let t = step as f64 * self.dt;
            excitation.v.write_at(t, &mut d_v);
            excitation.w.write_at(t, &mut d_w);
            self.close_loop(&x, &xi, &d_v, &d_w, &mut v, &mut w);
            let norm = (x.norm_squared() + xi.iter().map(|s| s * s).sum::<f64>() + v.norm_squared()).sqrt();
            if !norm.is_finite() {
                return Err(Error::NonFiniteState { step });
            }
            trace.time.push(t);
            trace.state_norms.push(norm);
            if opts.record {
                trace.v.push(v.clone());
                trace.w.push(w.clone());
                trace.d_v.push(d_v.clone());
                trace.d_w.push(d_w.clone());
            }
            if peak > 0.0 && norm > opts.threshold * peak {
                break;
            }
            if t >= quiet_after && norm <= 1e-14 * peak {
                break;
            }
            if peak == 0.0 && t >= quiet_after && norm == 0.0 && !opts.record {
                break;
            }
            let z = &self.t * (&self.c * &x + &self.d * &v);
            for (f, &(q, _, a, b)) in self.filters.iter().enumerate() {
                xi[f] = a * xi[f] + b * z[q];
            }
            x = &self.ad * &x + &self.bd * &v;
        }
        Ok(trace)
    }
}

/// Simulates `problem` under `sample` with the given excitation.
pub fn simulate(
    problem: &Problem,
    sample: &UncertaintySample,
    excitation: &Excitation,
    opts: &SimOptions,
) -> Result<SimTrace> {
    let dt = opts.dt.unwrap_or_else(|| default_dt(problem, sample));
    Simulator::new(problem, sample, dt)?.run(excitation, opts)
}

/// Empirical gain `‖(v, w)‖₂ / ‖(d_v, d_w)‖₂` over the trace. This is a lower
/// bound on the induced gain of the disturbance-to-signal map.
pub fn estimate_gain(trace: &SimTrace) -> Result<f64> {
    let energy = |xs: &[DVector<f64>]| xs.iter().map(|x| x.norm_squared()).sum::<f64>();
    let input = energy(&trace.d_v) + energy(&trace.d_w);
    if !(input > 0.0) {
        return Err(Error::ZeroInput);
    }
    Ok(((energy(&trace.v) + energy(&trace.w)) / input).sqrt())
}

/// Continuous-time state matrix of the network under a linear sample, with
/// states ordered agents first, then link filters in coordinate order.
pub fn lti_interconnection_matrix(problem: &Problem, sample: &UncertaintySample) -> Result<DMatrix<f64>> {
    if !sample.is_linear() {
        return Err(Error::InvalidParameter("sample contains nonlinear links".into()));
    }
    let dim = problem.structure.link_dim();
    if sample.links.len() != dim {
        return Err(Error::DimensionMismatch(format!(
            "uncertainty sample has {} links, network has {dim}",
            sample.links.len()
        )));
    }
    let real = BlockRealization::assemble(&problem.agents);
    let p = linalg::int_to_real(&problem.structure.p);
    let t = linalg::int_to_real(&fanout_matrix(&problem.graph));
    let filters: Vec<(usize, f64, f64)> = sample
        .links
        .iter()
        .enumerate()
        .filter_map(|(q, l)| match *l {
            LinkSample::FirstOrder { gain, pole } => Some((q, gain, pole)),
            _ => None,
        })
        .collect();
    let feed = DVector::from_iterator(
        dim,
        sample.links.iter().map(|l| match *l {
            LinkSample::Constant { delta } => 1.0 + delta,
            _ => 1.0,
        }),
    );
    let nf = filters.len();
    let nx = real.a.nrows();
    // Filter output map and filter pole/input matrices.
    let mut cf = DMatrix::zeros(dim, nf);
    let mut af = DMatrix::zeros(nf, nf);
    let mut sel = DMatrix::zeros(nf, dim);
    for (f, &(q, gain, pole)) in filters.iter().enumerate() {
        cf[(q, f)] = gain;
        af[(f, f)] = -pole;
        sel[(f, q)] = pole;
    }
    let fd = DMatrix::from_diagonal(&feed);
    let lam = DMatrix::identity(dim, dim) - &p * &fd * &t * &real.d;
    let lu = lam.lu();
    // v = K_x x + K_f ξ
    let kx = lu
        .solve(&(&p * &fd * &t * &real.c))
        .ok_or_else(|| Error::IllPosedLoop("static loop matrix is singular".into()))?;
    let kf = lu
        .solve(&(&p * &cf))
        .ok_or_else(|| Error::IllPosedLoop("static loop matrix is singular".into()))?;
    // z = T (C x + D v)
    let zx = &t * (&real.c + &real.d * &kx);
    let zf = &t * &real.d * &kf;
    let top = DMatrix::from_fn(nx, nx + nf, |r, c| {
        if c < nx {
            real.a[(r, c)] + (&real.b * &kx)[(r, c)]
        } else {
            (&real.b * &kf)[(r, c - nx)]
        }
    });
    let bottom_x = &sel * &zx;
    let bottom_f = &af + &sel * &zf;
    let mut out = DMatrix::zeros(nx + nf, nx + nf);
    out.view_mut((0, 0), (nx, nx + nf)).copy_from(&top);
    out.view_mut((nx, 0), (nf, nx)).copy_from(&bottom_x);
    out.view_mut((nx, nx), (nf, nf)).copy_from(&bottom_f);
    Ok(out)
}

/// Spectral abscissa of [`lti_interconnection_matrix`]; `None` without states.
pub fn lti_spectral_abscissa(problem: &Problem, sample: &UncertaintySample) -> Result<Option<f64>> {
    let a = lti_interconnection_matrix(problem, sample)?;
    if a.nrows() == 0 {
        return Ok(None);
    }
    Ok(Some(
        a.complex_eigenvalues()
            .iter()
            .map(|z| z.re)
            .fold(f64::NEG_INFINITY, f64::max),
    ))
}
