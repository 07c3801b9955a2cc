//! Split-operator propagation of wave packets in `V(x,t) + λΘ_Ω(x)`.
//!
//! One step is the Strang product `K(dt/2) P(t+dt/2) K(dt/2)` with an exact
//! spectral kinetic factor. Consecutive half kinetic factors are merged, so a
//! step costs two FFTs. Observers see the state between the kinetic half-step
//! and the potential kick ("mid-step" state); sums over these states are the
//! exact λ-derivatives of the discrete propagator, which makes the stopwatch
//! and space-time integrals agree with the differentiated propagations to
//! rounding error.

use std::io::Write;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::Serialize;

use crate::ctime::{default_step, differentiate, ComplexTime, Order, TimeRole, AMPLITUDE_FLOOR, STENCIL_OFFSETS};
use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::model::{PotentialSpec, Region, SpatialGrid};

/// Fraction of the grid on each side where probability counts as wrap-around.
pub const EDGE_FRACTION: f64 = 0.05;
pub const EDGE_TOLERANCE: f64 = 1e-6;
const EDGE_CHECK_INTERVAL: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Wavefunction {
    pub grid: SpatialGrid,
    /// Samples at cell midpoints, normalised so that `Σ|ψ|²dx = 1`.
    pub values: Vec<Complex64>,
    pub t: f64,
}

impl Wavefunction {
    pub fn new(grid: SpatialGrid, values: Vec<Complex64>, t: f64) -> Result<Self> {
        if values.len() != grid.n_points {
            return Err(Error::InvalidInput(format!(
                "{} samples for a grid of {} points",
                values.len(),
                grid.n_points
            )));
        }
        if values.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::NonFinite("wave function samples".into()));
        }
        Ok(Wavefunction { grid, values, t })
    }

    /// `(2πσ²)^{-1/4} exp(−(x−x0)²/4σ² + ip0(x−x0))`.
    pub fn gaussian(grid: SpatialGrid, x0: f64, p0: f64, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(Error::InvalidInput(format!("packet width must be positive, got {sigma}")));
        }
        let c = (2.0 * std::f64::consts::PI * sigma * sigma).powf(-0.25);
        let values = grid
            .xs()
            .into_iter()
            .map(|x| {
                let u = x - x0;
                c * Complex64::new(-u * u / (4.0 * sigma * sigma), p0 * u).exp()
            })
            .collect();
        Ok(Wavefunction { grid, values, t: 0.0 })
    }

    /// Free evolution of [`Wavefunction::gaussian`] over time `t`, in closed form.
    pub fn free_gaussian(grid: SpatialGrid, x0: f64, p0: f64, sigma: f64, t: f64, mass: f64) -> Self {
        let s = Complex64::new(sigma, t / (2.0 * mass * sigma));
        let pre = (2.0 * std::f64::consts::PI).powf(-0.25) / s.sqrt();
        let width = Complex64::new(4.0 * sigma * sigma, 2.0 * t / mass);
        let values = grid
            .xs()
            .into_iter()
            .map(|x| {
                let u = x - x0 - p0 * t / mass;
                let phase = Complex64::new(0.0, p0 * (x - x0) - p0 * p0 * t / (2.0 * mass));
                pre * (-(u * u) / width + phase).exp()
            })
            .collect();
        Wavefunction { grid, values, t }
    }

    pub fn norm_sqr(&self) -> f64 {
        norm_sqr(&self.values, self.grid.dx())
    }

    pub fn normalized(mut self) -> Result<Self> {
        let n = self.norm_sqr().sqrt();
        if n == 0.0 {
            return Err(Error::InvalidInput("cannot normalise a zero wave function".into()));
        }
        self.values.iter_mut().for_each(|v| *v /= n);
        Ok(self)
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &Wavefunction) -> Complex64 {
        inner(&self.values, &other.values, self.grid.dx())
    }

    /// Probability inside the outer [`EDGE_FRACTION`] of the grid on both sides.
    pub fn edge_probability(&self) -> f64 {
        edge_probability(&self.values, self.grid.dx())
    }

    pub fn probability_in(&self, region: &Region) -> f64 {
        let dx = self.grid.dx();
        self.values
            .iter()
            .zip(self.grid.mask(region))
            .filter(|(_, m)| *m)
            .map(|(v, _)| v.norm_sqr() * dx)
            .sum()
    }

    /// `⟨p²⟩/2μ` from the spectrum.
    pub fn kinetic_energy(&self, mass: f64) -> f64 {
        let n = self.grid.n_points;
        let mut buf = self.values.clone();
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        let k = self.grid.wavenumbers();
        let total: f64 = buf.iter().map(|c| c.norm_sqr()).sum();
        if total == 0.0 {
            return 0.0;
        }
        buf.iter().zip(&k).map(|(c, k)| c.norm_sqr() * k * k).sum::<f64>() / total / (2.0 * mass)
    }

    /// CSV columns `x, Re_psi, Im_psi`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "x,Re_psi,Im_psi")?;
        for (x, v) in self.grid.xs().into_iter().zip(&self.values) {
            writeln!(out, "{},{},{}", fmt_f64(x), fmt_f64(v.re), fmt_f64(v.im))?;
        }
        Ok(())
    }

    pub fn metadata_json(&self) -> serde_json::Value {
        serde_json::json!({ "grid": self.grid, "t": self.t, "norm": self.norm_sqr() })
    }
}

pub(crate) fn norm_sqr(v: &[Complex64], dx: f64) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum::<f64>() * dx
}

pub(crate) fn inner(a: &[Complex64], b: &[Complex64], dx: f64) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum::<Complex64>() * dx
}

fn edge_probability(v: &[Complex64], dx: f64) -> f64 {
    let n = v.len();
    let m = ((n as f64) * EDGE_FRACTION).ceil() as usize;
    let edge: f64 = v[..m].iter().chain(&v[n - m..]).map(|c| c.norm_sqr()).sum::<f64>() * dx;
    let total = norm_sqr(v, dx);
    if total == 0.0 { 0.0 } else { edge / total }
}

/// `|ψ^(n)⟩ = (i∂λ)ⁿ U(λ)|ψ_I⟩` at λ = 0. Not normalised for n ≥ 1.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionedState {
    pub n: u8,
    pub values: Vec<Complex64>,
}

/// View handed to observers once per step.
pub struct MidStep<'a> {
    pub step: usize,
    /// Time at the centre of the step.
    pub t: f64,
    pub dt: f64,
    pub states: &'a [Vec<Complex64>],
}

/// Propagator for a fixed potential, region, grid and time interval.
#[derive(Clone)]
pub struct Propagator {
    grid: SpatialGrid,
    potential: PotentialSpec,
    region: Region,
    omega: Vec<f64>,
    mass: f64,
    t1: f64,
    t2: f64,
    dt: f64,
    n_steps: usize,
    edge_check: bool,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    kin_half: Vec<Complex64>,
    kin_full: Vec<Complex64>,
    static_v: Option<Vec<f64>>,
}

impl std::fmt::Debug for Propagator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Propagator")
            .field("grid", &self.grid)
            .field("region", &self.region)
            .field("t1", &self.t1)
            .field("t2", &self.t2)
            .field("dt", &self.dt)
            .field("n_steps", &self.n_steps)
            .finish()
    }
}

impl Propagator {
    /// Uses the default step `dt = 0.2·μ·dx²`.
    pub fn new(
        grid: SpatialGrid,
        potential: &PotentialSpec,
        region: &Region,
        t1: f64,
        t2: f64,
        mass: f64,
    ) -> Result<Self> {
        let dt = 0.2 * mass * grid.dx() * grid.dx();
        Self::with_dt(grid, potential, region, t1, t2, mass, dt)
    }

    /// The step is shrunk so that it divides `t2 − t1` exactly.
    pub fn with_dt(
        grid: SpatialGrid,
        potential: &PotentialSpec,
        region: &Region,
        t1: f64,
        t2: f64,
        mass: f64,
        dt: f64,
    ) -> Result<Self> {
        potential.validate()?;
        if !(t2 > t1 && t1.is_finite() && t2.is_finite()) {
            return Err(Error::InvalidInput(format!("need t1 < t2, got [{t1}, {t2}]")));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidInput(format!("time step must be positive, got {dt}")));
        }
        if !(mass > 0.0) {
            return Err(Error::InvalidInput(format!("mass must be positive, got {mass}")));
        }
        potential.check_time(t1)?;
        potential.check_time(t2)?;
        let n_steps = ((t2 - t1) / dt).ceil().max(1.0) as usize;
        let dt = (t2 - t1) / n_steps as f64;
        let n = grid.n_points;
        let mut planner = FftPlanner::new();
        let scale = 1.0 / n as f64;
        let k = grid.wavenumbers();
        let phase = |tau: f64| -> Vec<Complex64> {
            k.iter().map(|k| Complex64::from_polar(scale, -k * k / (2.0 * mass) * tau)).collect()
        };
        let static_v = if potential.is_static() { Some(potential.sample(&grid, t1)?) } else { None };
        Ok(Propagator {
            grid,
            potential: potential.clone(),
            region: *region,
            omega: grid.mask(region).into_iter().map(|m| if m { 1.0 } else { 0.0 }).collect(),
            mass,
            t1,
            t2,
            dt,
            n_steps,
            edge_check: true,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
            kin_half: phase(0.5 * dt),
            kin_full: phase(dt),
            static_v,
        })
    }

    /// Skips the wrap-around check; for identity tests on arbitrary states.
    pub fn without_edge_check(mut self) -> Self {
        self.edge_check = false;
        self
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn region(&self) -> &Region {
        &self.region
    }

    pub fn potential(&self) -> &PotentialSpec {
        &self.potential
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.t1, self.t2)
    }

    pub fn duration(&self) -> f64 {
        self.t2 - self.t1
    }

    /// Same setup over a different region of interest.
    pub fn with_region(&self, region: &Region) -> Self {
        let mut p = self.clone();
        p.region = *region;
        p.omega = self.grid.mask(region).into_iter().map(|m| if m { 1.0 } else { 0.0 }).collect();
        p
    }

    /// `Θ_Ω` on the grid as 0/1 weights.
    pub fn omega_weights(&self) -> &[f64] {
        &self.omega
    }

    fn potential_phase(&self, step: usize, lambda: f64, conj: bool) -> Result<Vec<Complex64>> {
        let v = match &self.static_v {
            Some(v) => std::borrow::Cow::Borrowed(v),
            None => std::borrow::Cow::Owned(self.potential.sample(&self.grid, self.t1 + (step as f64 + 0.5) * self.dt)?),
        };
        let sign = if conj { 1.0 } else { -1.0 };
        Ok(v.iter()
            .zip(&self.omega)
            .map(|(v, w)| Complex64::from_polar(1.0, sign * (v + lambda * w) * self.dt))
            .collect())
    }

    fn kinetic(&self, psi: &mut [Complex64], phase: &[Complex64], conj: bool, scratch: &mut [Complex64]) {
        self.fwd.process_with_scratch(psi, scratch);
        if conj {
            psi.iter_mut().zip(phase).for_each(|(c, p)| *c *= p.conj());
        } else {
            psi.iter_mut().zip(phase).for_each(|(c, p)| *c *= p);
        }
        self.inv.process_with_scratch(psi, scratch);
    }

    fn check_edges(&self, states: &[Vec<Complex64>]) -> Result<()> {
        if !self.edge_check {
            return Ok(());
        }
        for s in states {
            let e = edge_probability(s, self.grid.dx());
            if e > EDGE_TOLERANCE {
                return Err(Error::DomainTooSmall { edge_norm: e });
            }
            if !e.is_finite() {
                return Err(Error::NonFinite("propagated state".into()));
            }
        }
        Ok(())
    }

    fn scratch(&self) -> Vec<Complex64> {
        let len = self.fwd.get_inplace_scratch_len().max(self.inv.get_inplace_scratch_len());
        vec![Complex64::new(0.0, 0.0); len]
    }

    /// Evolves every state in place from t1 to t2 under the same `U(λ)`,
    /// calling `observer` once per step with the mid-step states.
    pub fn run<F>(&self, states: &mut [Vec<Complex64>], lambda: f64, mut observer: F) -> Result<()>
    where
        F: FnMut(MidStep<'_>),
    {
        for s in states.iter() {
            if s.len() != self.grid.n_points {
                return Err(Error::InvalidInput("state length does not match the grid".into()));
            }
        }
        self.check_edges(states)?;
        let mut scratch = self.scratch();
        for s in states.iter_mut() {
            self.kinetic(s, &self.kin_half, false, &mut scratch);
        }
        for step in 0..self.n_steps {
            observer(MidStep { step, t: self.t1 + (step as f64 + 0.5) * self.dt, dt: self.dt, states });
            let pv = self.potential_phase(step, lambda, false)?;
            let kin = if step + 1 == self.n_steps { &self.kin_half } else { &self.kin_full };
            for s in states.iter_mut() {
                s.iter_mut().zip(&pv).for_each(|(c, p)| *c *= p);
                self.kinetic(s, kin, false, &mut scratch);
            }
            if step % EDGE_CHECK_INTERVAL == 0 || step + 1 == self.n_steps {
                self.check_edges(states)?;
            }
        }
        Ok(())
    }

    /// Applies `U(λ)†`, taking states given at t2 back to t1.
    pub fn run_adjoint(&self, states: &mut [Vec<Complex64>], lambda: f64) -> Result<()> {
        self.check_edges(states)?;
        let mut scratch = self.scratch();
        for s in states.iter_mut() {
            self.kinetic(s, &self.kin_half, true, &mut scratch);
        }
        for step in (0..self.n_steps).rev() {
            let pv = self.potential_phase(step, lambda, true)?;
            let kin = if step == 0 { &self.kin_half } else { &self.kin_full };
            for s in states.iter_mut() {
                s.iter_mut().zip(&pv).for_each(|(c, p)| *c *= p);
                self.kinetic(s, kin, true, &mut scratch);
            }
            if step % EDGE_CHECK_INTERVAL == 0 {
                self.check_edges(states)?;
            }
        }
        Ok(())
    }

    fn check_state(&self, psi: &Wavefunction) -> Result<()> {
        if psi.grid != self.grid {
            return Err(Error::InvalidInput("wave function lives on a different grid".into()));
        }
        Ok(())
    }

    /// `U(t2, t1|λ)ψ`.
    pub fn propagate(&self, psi: &Wavefunction, lambda: f64) -> Result<Wavefunction> {
        self.check_state(psi)?;
        let mut states = vec![psi.values.clone()];
        self.run(&mut states, lambda, |_| {})?;
        Ok(Wavefunction { grid: self.grid, values: states.pop().unwrap(), t: self.t2 })
    }

    /// `U(t2, t1|λ)†ψ`, a state at t1.
    pub fn propagate_adjoint(&self, psi: &Wavefunction, lambda: f64) -> Result<Wavefunction> {
        self.check_state(psi)?;
        let mut states = vec![psi.values.clone()];
        self.run_adjoint(&mut states, lambda)?;
        Ok(Wavefunction { grid: self.grid, values: states.pop().unwrap(), t: self.t1 })
    }

    /// Final states for each λ, evaluated in parallel.
    pub fn propagate_many(&self, psi: &Wavefunction, lambdas: &[f64]) -> Result<Vec<Wavefunction>> {
        lambdas.par_iter().map(|&l| self.propagate(psi, l)).collect()
    }

    /// `⟨ψF|U(λ)|ψI⟩`.
    pub fn transition_amplitude(&self, psi_f: &Wavefunction, psi_i: &Wavefunction, lambda: f64) -> Result<Complex64> {
        self.check_state(psi_f)?;
        Ok(psi_f.inner(&self.propagate(psi_i, lambda)?))
    }

    /// λ step for differentiating whole propagations.
    pub fn default_lambda_step(&self, psi: &Wavefunction) -> f64 {
        let vmax = self.potential.max_abs_height() + self.potential.schedule.values().map(|p| p.max_abs()).sum::<f64>();
        default_step(psi.kinetic_energy(self.mass), vmax)
    }

    /// The λ-stencil propagations of `ψ`, ordered as [`STENCIL_OFFSETS`].
    pub fn stencil_states(&self, psi: &Wavefunction, h: f64) -> Result<Vec<Vec<Complex64>>> {
        let lambdas: Vec<f64> = STENCIL_OFFSETS.iter().map(|o| o * h).collect();
        Ok(self.propagate_many(psi, &lambdas)?.into_iter().map(|w| w.values).collect())
    }

    /// `|ψ^(n)⟩` for n = 0..=n_max (n_max ≤ 2).
    pub fn conditioned_states(&self, psi: &Wavefunction, n_max: u8, h: Option<f64>) -> Result<Vec<ConditionedState>> {
        if n_max > 2 {
            return Err(Error::InvalidInput(format!("moment order {n_max} exceeds 2")));
        }
        let h = h.unwrap_or_else(|| self.default_lambda_step(psi));
        let samples = self.stencil_states(psi, h)?;
        Ok(conditioned_from_stencil(&samples, n_max, h))
    }

    /// `∫dt ∫_Ω |ψ(x,t)|² dx` along the unperturbed evolution.
    pub fn dwell_time_stopwatch(&self, psi: &Wavefunction) -> Result<f64> {
        self.check_state(psi)?;
        let dx = self.grid.dx();
        let mut total = 0.0;
        let mut states = vec![psi.values.clone()];
        self.run(&mut states, 0.0, |m| {
            let s: f64 = m.states[0].iter().zip(&self.omega).map(|(c, w)| w * c.norm_sqr()).sum();
            total += m.dt * s * dx;
        })?;
        Ok(total)
    }

    /// `∫dt′∫_Ω ψF*(x,t′)ψI(x,t′)dx / ⟨ψF|U|ψI⟩`, with ψF evolved backwards from t2.
    pub fn complex_time_spacetime_integral(&self, psi_i: &Wavefunction, psi_f: &Wavefunction) -> Result<ComplexTime> {
        self.check_state(psi_i)?;
        self.check_state(psi_f)?;
        let dx = self.grid.dx();
        let xi0 = self.propagate_adjoint(psi_f, 0.0)?;
        let amp = xi0.inner(psi_i);
        if amp.norm() <= AMPLITUDE_FLOOR {
            return Err(Error::PostSelectionImpossible(format!("transition amplitude {:.3e} vanishes", amp.norm())));
        }
        let mut acc = Complex64::new(0.0, 0.0);
        let mut states = vec![xi0.values, psi_i.values.clone()];
        self.run(&mut states, 0.0, |m| {
            let s: Complex64 = m.states[0]
                .iter()
                .zip(&m.states[1])
                .zip(&self.omega)
                .map(|((a, b), w)| w * a.conj() * b)
                .sum();
            acc += m.dt * s * dx;
        })?;
        Ok(ComplexTime { value: acc / amp, role: TimeRole::Moment(1), error: 0.0 })
    }

    /// `‖ψ^(1)‖ = ⟨ψI|U^(1)†U^(1)|ψI⟩^{1/2}`.
    pub fn swp_all_operator_form(&self, psi: &Wavefunction) -> Result<f64> {
        let states = self.conditioned_states(psi, 1, None)?;
        Ok(norm_sqr(&states[1].values, self.grid.dx()).sqrt())
    }

    /// `Re⟨ψ^(0)|ψ^(1)⟩`, after checking that the imaginary part is negligible.
    pub fn dwell_time_operator(&self, psi: &Wavefunction) -> Result<f64> {
        let states = self.conditioned_states(psi, 1, None)?;
        let z = inner(&states[0].values, &states[1].values, self.grid.dx());
        if z.im.abs() > 1e-8 * z.norm().max(1.0) {
            return Err(Error::NumericalInconsistency(format!("operator dwell time has imaginary part {:.3e}", z.im)));
        }
        Ok(z.re)
    }
}

/// Builds `|ψ^(n)⟩` from stencil samples (see [`STENCIL_OFFSETS`]).
pub fn conditioned_from_stencil(samples: &[Vec<Complex64>], n_max: u8, h: f64) -> Vec<ConditionedState> {
    let i = Complex64::new(0.0, 1.0);
    let mut out = vec![ConditionedState { n: 0, values: samples[0].clone() }];
    if n_max >= 1 {
        let (d1, _) = differentiate(samples, Order::First, h);
        out.push(ConditionedState { n: 1, values: d1.into_iter().map(|v| i * v).collect() });
    }
    if n_max >= 2 {
        let (d2, _) = differentiate(samples, Order::Second, h);
        out.push(ConditionedState { n: 2, values: d2.into_iter().map(|v| -v).collect() });
    }
    out
}

/// Convenience wrapper around [`Propagator::propagate`].
#[allow(clippy::too_many_arguments)]
pub fn propagate(
    psi: &Wavefunction,
    v: &PotentialSpec,
    region: &Region,
    lambda: f64,
    t1: f64,
    t2: f64,
    dt: Option<f64>,
    mass: f64,
) -> Result<Wavefunction> {
    let p = match dt {
        Some(dt) => Propagator::with_dt(psi.grid, v, region, t1, t2, mass, dt)?,
        None => Propagator::new(psi.grid, v, region, t1, t2, mass)?,
    };
    let mut out = p.propagate(psi, lambda)?;
    out.t = t2;
    Ok(out)
}
