//! Spin-j Salecker-Wigner-Peres clock coupled to the particle.
//!
//! The coupling `ω_L ĵ_z Θ_Ω` is diagonal in m, so the joint state is kept as
//! one particle wavefunction per m, each propagated in `V + mω_LΘ_Ω`. The clock
//! is read in the rotated basis `β^k_m = e^{−imφ_k}/√(2j+1)`, `φ_k = 2πk/(2j+1)`.
//! Spins are stored through `2j` so half-integer values stay exact.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::OnceLock;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolve::{inner, norm_sqr, Propagator, Wavefunction};
use crate::io::fmt_f64;
use crate::model::Region;


/// Smallest post-selected probability a readout accepts.
pub const POSTSELECTION_FLOOR: f64 = 1e-12;

fn dim(two_j: u32) -> usize {
    two_j as usize + 1
}

/// `m` for index `i = m + j`.
pub fn m_value(two_j: u32, i: usize) -> f64 {
    i as f64 - two_j as f64 / 2.0
}

fn check_spin(two_j: u32) -> Result<()> {
    if two_j == 0 {
        return Err(Error::InvalidInput("clock needs j >= 1/2".into()));
    }
    Ok(())
}

/// `2j` from a spin given as a float (1, 0.5, 1.5, ...).
pub fn two_j_from(j: f64) -> Result<u32> {
    let t = 2.0 * j;
    if !(t >= 1.0 && (t - t.round()).abs() < 1e-12 && t < 1e6) {
        return Err(Error::InvalidInput(format!("spin must be a positive multiple of 1/2, got {j}")));
    }
    Ok(t.round() as u32)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpinState {
    pub two_j: u32,
    /// Amplitudes for m = −j..j.
    pub amplitudes: Vec<Complex64>,
}

impl SpinState {
    pub fn new(two_j: u32, amplitudes: Vec<Complex64>) -> Result<Self> {
        check_spin(two_j)?;
        if amplitudes.len() != dim(two_j) {
            return Err(Error::InvalidInput(format!(
                "spin state for 2j = {two_j} needs {} amplitudes, got {}",
                dim(two_j),
                amplitudes.len()
            )));
        }
        let n: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if (n - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!("spin state norm {n} is not 1")));
        }
        Ok(SpinState { two_j, amplitudes })
    }

    /// Normalises the given amplitudes first.
    pub fn normalized(two_j: u32, amplitudes: Vec<Complex64>) -> Result<Self> {
        let n: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if n == 0.0 {
            return Err(Error::InvalidInput("zero spin state".into()));
        }
        Self::new(two_j, amplitudes.into_iter().map(|a| a / n).collect())
    }

    /// `e^{−iθĵ_z}β^0`, i.e. the pointer at angle θ.
    pub fn rotated(two_j: u32, theta: f64) -> Result<Self> {
        check_spin(two_j)?;
        let c = 1.0 / (dim(two_j) as f64).sqrt();
        let amps = (0..dim(two_j)).map(|i| Complex64::from_polar(c, -m_value(two_j, i) * theta)).collect();
        Self::new(two_j, amps)
    }

    pub fn inner(&self, other: &SpinState) -> Complex64 {
        self.amplitudes.iter().zip(&other.amplitudes).map(|(a, b)| a.conj() * b).sum()
    }

    /// `⟨self|ĵ_z|other⟩`.
    pub fn jz_element(&self, other: &SpinState) -> Complex64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .enumerate()
            .map(|(i, (a, b))| a.conj() * b * m_value(self.two_j, i))
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClockBasis {
    pub two_j: u32,
    pub states: Vec<SpinState>,
    pub angles: Vec<f64>,
}

impl ClockBasis {
    pub fn new(two_j: u32) -> Result<Self> {
        check_spin(two_j)?;
        let n = dim(two_j);
        let angles: Vec<f64> = (0..n).map(|k| 2.0 * PI * k as f64 / n as f64).collect();
        let states = angles.iter().map(|&phi| SpinState::rotated(two_j, phi)).collect::<Result<_>>()?;
        Ok(ClockBasis { two_j, states, angles })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// `τ_k = φ_k/ω_L`.
    pub fn times(&self, omega_l: f64) -> Vec<f64> {
        self.angles.iter().map(|a| a / omega_l).collect()
    }
}

/// `(2j+1)^{-1} Σ_m e^{imφ} = (2j+1)^{-1} sin[(2j+1)φ/2]/sin[φ/2]`.
pub fn gswp(phi: f64, two_j: u32) -> Complex64 {
    let n = dim(two_j) as f64;
    let s = (0.5 * phi).sin();
    if s.abs() < 1e-4 {
        let sum: f64 = (0..dim(two_j)).map(|i| (m_value(two_j, i) * phi).cos()).sum();
        return Complex64::new(sum / n, 0.0);
    }
    Complex64::new((0.5 * n * phi).sin() / (n * s), 0.0)
}

/// `Q(j) = Σ_k φ_k |⟨β^k|ĵ_z|β^0⟩|²`.
pub fn q_factor(two_j: u32) -> Result<f64> {
    let b = ClockBasis::new(two_j)?;
    Ok(b.states.iter().zip(&b.angles).map(|(s, phi)| phi * s.jz_element(&b.states[0]).norm_sqr()).sum())
}

/// `Q′ = 2 Σ_k φ_k Im[⟨γ|β^k⟩⟨β^k|ĵ_z|γ⟩]`, the dwell-probe calibration factor.
pub fn q_prime(gamma: &SpinState) -> Result<f64> {
    let b = ClockBasis::new(gamma.two_j)?;
    Ok(2.0
        * b.states
            .iter()
            .zip(&b.angles)
            .map(|(s, phi)| phi * (gamma.inner(s) * s.jz_element(gamma)).im)
            .sum::<f64>())
}

/// θ³ coefficient of `Σ_k θ_k |G(θ_k − θ)|²` over the symmetric angles
/// `θ_k = φ_k − φ_j`, which calibrates the modified clock.
pub fn modified_clock_factor(two_j: u32) -> Result<f64> {
    check_spin(two_j)?;
    if !two_j.is_multiple_of(2) {
        return Err(Error::InvalidInput("the modified clock needs integer j".into()));
    }
    let n = dim(two_j);
    let nf = n as f64;
    let j = (two_j / 2) as i64;
    let mut c3 = 0.0;
    for l in -j..=j {
        let theta = 2.0 * PI * l as f64 / nf;
        // G'(θ) and G''(θ)
        let mut g1 = 0.0;
        let mut g2 = 0.0;
        for i in 0..n {
            let m = m_value(two_j, i);
            g1 -= m * (m * theta).sin();
            g2 -= m * m * (m * theta).cos();
        }
        c3 -= theta * (g1 / nf) * (g2 / nf);
    }
    Ok(c3)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClockConfig {
    pub two_j: u32,
    pub omega_l: f64,
    pub gamma: SpinState,
}

impl ClockConfig {
    pub fn new(gamma: SpinState, omega_l: f64) -> Result<Self> {
        if !(omega_l >= 0.0 && omega_l.is_finite()) {
            return Err(Error::InvalidInput(format!("ω_L must be non-negative, got {omega_l}")));
        }
        Ok(ClockConfig { two_j: gamma.two_j, omega_l, gamma })
    }
}

/// Particle ⊗ spin state, one particle component per m.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JointState {
    pub components: Vec<Wavefunction>,
    pub config: ClockConfig,
}

impl JointState {
    pub fn norm_sqr(&self) -> f64 {
        self.components.iter().map(|c| c.norm_sqr()).sum()
    }

    /// `⟨β|Ψ⟩`: the particle state left when the clock is found in `spin`.
    pub fn project_spin(&self, spin: &SpinState) -> Vec<Complex64> {
        let n = self.components[0].values.len();
        let mut out = vec![Complex64::new(0.0, 0.0); n];
        for (c, b) in self.components.iter().zip(&spin.amplitudes) {
            let w = b.conj();
            out.iter_mut().zip(&c.values).for_each(|(o, v)| *o += w * v);
        }
        out
    }

    /// Reduced spin density matrix `ρ_{mm'} = ⟨ψ_{m'}|ψ_m⟩`.
    pub fn spin_density(&self) -> Vec<Vec<Complex64>> {
        let n = self.components.len();
        (0..n)
            .map(|a| (0..n).map(|b| self.components[b].inner(&self.components[a])).collect())
            .collect()
    }
}

/// Each component `ψ_m = γ_m U(λ = mω_L)ψ_I`.
pub fn evolve_coupled(prop: &Propagator, psi: &Wavefunction, cfg: &ClockConfig) -> Result<JointState> {
    let lambdas: Vec<f64> = (0..dim(cfg.two_j)).map(|i| m_value(cfg.two_j, i) * cfg.omega_l).collect();
    let finals = prop.propagate_many(psi, &lambdas)?;
    Ok(assemble(finals, cfg))
}

fn assemble(finals: Vec<Wavefunction>, cfg: &ClockConfig) -> JointState {
    let components = finals
        .into_iter()
        .zip(&cfg.gamma.amplitudes)
        .map(|(mut w, g)| {
            w.values.iter_mut().for_each(|v| *v *= g);
            w
        })
        .collect();
    JointState { components, config: cfg.clone() }
}

/// Final-state subspace `Π(𝔑)` used for post-selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Postselector {
    All,
    /// Half-line `x > x_min`.
    Transmitted { x_min: f64 },
    /// Half-line `x < x_max`.
    Reflected { x_max: f64 },
    /// Grid cells where the mask is set.
    Mask { mask: Vec<bool> },
    /// Spectral projector on `p > 0` (`positive`) or `p < 0`.
    Momentum { positive: bool },
    /// `|ψ0⟩⟨ψ0|`.
    Bound { state: Vec<Complex64> },
    /// `1 − |ψ0⟩⟨ψ0|`.
    Free { state: Vec<Complex64> },
}

impl Postselector {
    /// `Π ψ` on the grid of `w`.
    pub fn apply(&self, w: &Wavefunction) -> Result<Vec<Complex64>> {
        let g = w.grid;
        let dx = g.dx();
        let zero = Complex64::new(0.0, 0.0);
        let masked = |keep: &dyn Fn(f64) -> bool| -> Vec<Complex64> {
            w.values.iter().zip(g.xs()).map(|(v, x)| if keep(x) { *v } else { zero }).collect()
        };
        Ok(match self {
            Postselector::All => w.values.clone(),
            Postselector::Transmitted { x_min } => masked(&|x| x > *x_min),
            Postselector::Reflected { x_max } => masked(&|x| x < *x_max),
            Postselector::Mask { mask } => {
                if mask.len() != w.values.len() {
                    return Err(Error::InvalidInput("post-selection mask does not match the grid".into()));
                }
                w.values.iter().zip(mask).map(|(v, m)| if *m { *v } else { zero }).collect()
            }
            Postselector::Momentum { positive } => {
                let n = g.n_points;
                let mut planner = FftPlanner::new();
                let mut buf = w.values.clone();
                planner.plan_fft_forward(n).process(&mut buf);
                for (c, k) in buf.iter_mut().zip(g.wavenumbers()) {
                    let keep = if *positive { k > 0.0 } else { k < 0.0 };
                    *c = if keep { *c / n as f64 } else { zero };
                }
                planner.plan_fft_inverse(n).process(&mut buf);
                buf
            }
            Postselector::Bound { state } | Postselector::Free { state } => {
                if state.len() != w.values.len() {
                    return Err(Error::InvalidInput("bound state does not match the grid".into()));
                }
                let c = inner(state, &w.values, dx);
                let bound: Vec<Complex64> = state.iter().map(|s| s * c).collect();
                if matches!(self, Postselector::Bound { .. }) {
                    bound
                } else {
                    w.values.iter().zip(bound).map(|(v, b)| v - b).collect()
                }
            }
        })
    }

    /// `⟨ψ|Π|ψ⟩`.
    pub fn probability(&self, w: &Wavefunction) -> Result<f64> {
        Ok(norm_sqr(&self.apply(w)?, w.grid.dx()))
    }

    pub fn transmitted_beyond(region: &Region, buffer: f64) -> Self {
        Postselector::Transmitted { x_min: region.b + buffer }
    }

    pub fn reflected_before(region: &Region, buffer: f64) -> Self {
        Postselector::Reflected { x_max: region.a - buffer }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Readout {
    pub omega_l: f64,
    /// `P(k, 𝔑)`, normalised over k.
    pub probabilities: Vec<f64>,
    /// `Σ_k τ_k P(k)`; zero at ω_L = 0.
    pub t_omega: f64,
    /// `⟨Ψ|Π|Ψ⟩`.
    pub postselected: f64,
}

impl Readout {
    /// `Σ_k (φ_k − φ_{k0}) P(k) / ω_L`, with times measured from pointer position `k0`.
    pub fn centred_time(&self, k0: usize) -> f64 {
        if self.omega_l == 0.0 {
            return 0.0;
        }
        let n = self.probabilities.len() as f64;
        self.probabilities
            .iter()
            .enumerate()
            .map(|(k, p)| 2.0 * PI * (k as f64 - k0 as f64) / n / self.omega_l * p)
            .sum()
    }
}

/// `P(k) ∝ ⟨Ψ|β^k⟩Π⟨β^k|Ψ⟩` and `T_Ω = Σ_k τ_k P(k)`.
pub fn readout(joint: &JointState, sel: &Postselector, basis: &ClockBasis) -> Result<Readout> {
    if basis.two_j != joint.config.two_j {
        return Err(Error::InvalidInput("basis and clock have different spins".into()));
    }
    let grid = joint.components[0].grid;
    let raw: Vec<f64> = basis
        .states
        .iter()
        .map(|b| {
            let w = Wavefunction { grid, values: joint.project_spin(b), t: joint.components[0].t };
            sel.probability(&w)
        })
        .collect::<Result<_>>()?;
    let total: f64 = raw.iter().sum();
    if !(total > POSTSELECTION_FLOOR) {
        return Err(Error::PostSelectionImpossible(format!("post-selected probability {total:.3e}")));
    }
    let probabilities: Vec<f64> = raw.iter().map(|p| p / total).collect();
    let omega = joint.config.omega_l;
    let t_omega = if omega == 0.0 {
        0.0
    } else {
        basis.times(omega).iter().zip(&probabilities).map(|(t, p)| t * p).sum()
    };
    Ok(Readout { omega_l: omega, probabilities, t_omega, postselected: total })
}

/// `ω_max` rotating the pointer by at most 0.2 rad over the run, then `n` halvings.
pub fn default_omega_grid(two_j: u32, duration: f64, n: usize) -> Vec<f64> {
    let j = two_j as f64 / 2.0;
    let w_max = 0.2 / (j * duration);
    (0..n).map(|i| w_max / 2f64.powi(i as i32)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeakLimit {
    /// Extracted time (T_SWP, T′_SWP or τ_dwell).
    pub value: f64,
    /// Spread between extrapolations from the smallest and next-smallest pairs.
    pub err_est: f64,
    /// Extrapolated `lim T_Ω/ω_Lⁿ`.
    pub slope: f64,
    /// `(ω_L, scaled reading)` in increasing ω_L.
    pub samples: Vec<(f64, f64)>,
}

fn sorted_ratios(omegas: &[f64], values: Vec<f64>) -> Result<Vec<(f64, f64)>> {
    if omegas.len() < 3 {
        return Err(Error::WeakLimit("need at least three ω_L values".into()));
    }
    let mut v: Vec<(f64, f64)> = omegas.iter().copied().zip(values).collect();
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    if v[0].0 <= 0.0 {
        return Err(Error::WeakLimit("ω_L values must be positive".into()));
    }
    for w in v.windows(2) {
        if ((w[1].0 / w[0].0) - 2.0).abs() > 1e-9 {
            return Err(Error::WeakLimit("ω_L grid must be geometric with ratio 2".into()));
        }
    }
    Ok(v)
}

/// Richardson elimination of the leading `ω^order` correction for ratio-2 samples.
fn richardson(v: &[(f64, f64)], order: i32) -> (f64, f64) {
    let f = 2f64.powi(order);
    let r = |a: f64, b: f64| (f * a - b) / (f - 1.0);
    let first = r(v[0].1, v[1].1);
    let second = r(v[1].1, v[2].1);
    (first, (first - second).abs())
}

/// `T_SWP = √(slope/Q(j))` from `T_Ω(ω_L)` on a ratio-2 grid.
pub fn weak_limit_extract<F>(runner: F, two_j: u32, omegas: &[f64]) -> Result<WeakLimit>
where
    F: Fn(f64) -> Result<f64> + Sync,
{
    let values: Vec<f64> = omegas.par_iter().map(|&w| runner(w).map(|t| t / w)).collect::<Result<_>>()?;
    let v = sorted_ratios(omegas, values)?;
    let (slope, err) = richardson(&v, 1);
    if !(slope > 0.0) {
        return Err(Error::WeakLimit(format!("non-positive slope {slope:.3e}")));
    }
    let q = q_factor(two_j)?;
    let value = (slope / q).sqrt();
    Ok(WeakLimit { value, err_est: 0.5 * value * err / slope, slope, samples: v })
}

/// `T′_SWP = (slope/c3)^{1/3}` from `T′_Ω(ω_L)/ω_L²`.
pub fn modified_clock_extract<F>(runner: F, two_j: u32, omegas: &[f64]) -> Result<WeakLimit>
where
    F: Fn(f64) -> Result<f64> + Sync,
{
    let c3 = modified_clock_factor(two_j)?;
    let values: Vec<f64> = omegas.par_iter().map(|&w| runner(w).map(|t| t / (w * w))).collect::<Result<_>>()?;
    let v = sorted_ratios(omegas, values)?;
    let (slope, err) = richardson(&v, 2);
    let value = (slope / c3).cbrt();
    let err_est = if slope != 0.0 { value.abs() * err / (3.0 * slope.abs()) } else { f64::INFINITY };
    Ok(WeakLimit { value, err_est, slope, samples: v })
}

/// A particle, potential and clock, with readouts at any ω_L.
pub struct ClockExperiment {
    pub prop: Propagator,
    pub psi: Wavefunction,
    pub gamma: SpinState,
    pub postselect: Postselector,
    basis: ClockBasis,
    unperturbed: OnceLock<Wavefunction>,
}

impl ClockExperiment {
    pub fn new(prop: Propagator, psi: Wavefunction, gamma: SpinState, postselect: Postselector) -> Result<Self> {
        let basis = ClockBasis::new(gamma.two_j)?;
        Ok(ClockExperiment { prop, psi, gamma, postselect, basis, unperturbed: OnceLock::new() })
    }

    pub fn basis(&self) -> &ClockBasis {
        &self.basis
    }

    pub fn two_j(&self) -> u32 {
        self.gamma.two_j
    }

    pub fn joint(&self, omega_l: f64) -> Result<JointState> {
        let cfg = ClockConfig::new(self.gamma.clone(), omega_l)?;
        let n = dim(cfg.two_j);
        let finals: Vec<Wavefunction> = (0..n)
            .into_par_iter()
            .map(|i| {
                let l = m_value(cfg.two_j, i) * omega_l;
                if l == 0.0 {
                    if let Some(w) = self.unperturbed.get() {
                        return Ok(w.clone());
                    }
                    let w = self.prop.propagate(&self.psi, 0.0)?;
                    let _ = self.unperturbed.set(w.clone());
                    Ok(w)
                } else {
                    self.prop.propagate(&self.psi, l)
                }
            })
            .collect::<Result<_>>()?;
        Ok(assemble(finals, &cfg))
    }

    pub fn readout(&self, omega_l: f64) -> Result<Readout> {
        readout(&self.joint(omega_l)?, &self.postselect, &self.basis)
    }

    pub fn weak_limit(&self, omegas: &[f64]) -> Result<WeakLimit> {
        weak_limit_extract(|w| Ok(self.readout(w)?.t_omega), self.two_j(), omegas)
    }

    /// Requires `γ = β^j`.
    pub fn modified_weak_limit(&self, omegas: &[f64]) -> Result<WeakLimit> {
        let k0 = (self.two_j() / 2) as usize;
        modified_clock_extract(|w| Ok(self.readout(w)?.centred_time(k0)), self.two_j(), omegas)
    }

    /// `τ_dwell = lim δT_Ω / Q′`, where `δT_Ω = Σ_k τ_k [P(k) − |⟨β^k|γ⟩|²]`.
    pub fn dwell_probe(&self, omegas: &[f64]) -> Result<WeakLimit> {
        if self.postselect != Postselector::All {
            return Err(Error::InvalidInput("the dwell probe reads the clock without post-selection".into()));
        }
        let qp = q_prime(&self.gamma)?;
        if qp.abs() < 1e-10 {
            return Err(Error::DegenerateProbe(qp));
        }
        let p0: Vec<f64> = self.basis.states.iter().map(|b| b.inner(&self.gamma).norm_sqr()).collect();
        let values: Vec<f64> = omegas
            .par_iter()
            .map(|&w| {
                let r = self.readout(w)?;
                Ok(self
                    .basis
                    .times(w)
                    .iter()
                    .zip(r.probabilities.iter().zip(&p0))
                    .map(|(t, (p, q))| t * (p - q))
                    .sum::<f64>())
            })
            .collect::<Result<_>>()?;
        let v = sorted_ratios(omegas, values)?;
        let (shift, err) = richardson(&v, 1);
        Ok(WeakLimit { value: shift / qp, err_est: err / qp.abs(), slope: shift, samples: v })
    }
}

/// Pointer state used by the dwell probe: `β^0` rotated by half a basis step.
pub fn dwell_probe_state(two_j: u32) -> Result<SpinState> {
    SpinState::rotated(two_j, PI / dim(two_j) as f64)
}

pub const CSV_HEADER: &str = "omega_L,k,P_k,T_Omega";

pub fn write_csv<W: Write>(mut out: W, readouts: &[Readout]) -> Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in readouts {
        for (k, p) in r.probabilities.iter().enumerate() {
            writeln!(out, "{},{},{},{}", fmt_f64(r.omega_l), k, fmt_f64(*p), fmt_f64(r.t_omega))?;
        }
    }
    Ok(())
}
