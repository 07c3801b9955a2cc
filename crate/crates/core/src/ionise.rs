//! Tunnel ionisation toy model.
//!
//! A particle starts in the single bound state of a well `[0, a]` closed on the
//! left by a high wall and on the right by a barrier `[a, a+d]`. A smooth pulse
//! lowers the barrier, and at t2 the state is split into a bound part `Cψ0` and
//! an escaped part described by the momentum amplitude `B(p)`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::ctime::{differentiate, Order, AMPLITUDE_FLOOR, STENCIL_OFFSETS};
use crate::error::{Error, Result};
use crate::evolve::{inner, norm_sqr, Propagator, Wavefunction};
use crate::io::fmt_f64;
use crate::model::{HeightProfile, PotentialSpec, Region, Segment, SpatialGrid};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };
pub const BARRIER_LABEL: &str = "barrier";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IonisationModel {
    pub mass: f64,
    /// Well depth on [0, a].
    pub v_w: f64,
    pub a: f64,
    /// Barrier width.
    pub d: f64,
    /// Static barrier height.
    pub v_b0: f64,
    /// Peak lowering of the barrier.
    pub f: f64,
    pub t1: f64,
    pub t2: f64,
    /// The pulse `s(t)` rises and falls on [pulse_on, pulse_off].
    pub pulse_on: f64,
    pub pulse_off: f64,
    pub wall_height: f64,
    pub wall_width: f64,
    /// Constant added to the whole potential.
    #[serde(default)]
    pub offset: f64,
    /// Region of interest; the barrier when absent.
    #[serde(default)]
    pub omega: Option<Region>,
    pub grid: SpatialGrid,
    /// Distance beyond the barrier where the free part is collected.
    pub buffer: f64,
    #[serde(default)]
    pub dt: Option<f64>,
}

impl IonisationModel {
    /// μ=1, V_w=2, a=2, d=1, V_b0=1.5, F=2.5 over a pulse of length 2, t2−t1=40.
    pub fn default_fixture() -> Self {
        IonisationModel {
            mass: 1.0,
            v_w: 2.0,
            a: 2.0,
            d: 1.0,
            v_b0: 1.5,
            f: 2.5,
            t1: 0.0,
            t2: 120.0,
            pulse_on: 0.0,
            pulse_off: 2.0,
            wall_height: 1000.0,
            wall_width: 1.0,
            offset: 0.0,
            omega: None,
            grid: SpatialGrid { x_min: -60.0, x_max: 708.0, n_points: 12288 },
            buffer: 0.5,
            dt: Some(2e-3),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [self.mass, self.v_w, self.a, self.d, self.wall_height, self.wall_width];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidInput("mass, depth, widths and wall height must be positive".into()));
        }
        if !(self.t1 < self.t2 && self.pulse_on < self.pulse_off) {
            return Err(Error::InvalidInput("need t1 < t2 and pulse_on < pulse_off".into()));
        }
        if self.pulse_on < self.t1 || self.pulse_off > self.t2 {
            return Err(Error::InvalidInput("the pulse must lie inside [t1, t2]".into()));
        }
        if self.grid.x_min > -self.wall_width || self.grid.x_max < self.collector() + 10.0 {
            return Err(Error::InvalidInput("grid must contain the wall and extend well past the collector".into()));
        }
        Ok(())
    }

    pub fn omega(&self) -> Region {
        self.omega.unwrap_or(Region { a: self.a, b: self.a + self.d })
    }

    /// Left end of the region where escaped particles are collected.
    pub fn collector(&self) -> f64 {
        self.a + self.d + self.buffer
    }

    fn segments(&self) -> Vec<Segment> {
        let c = self.offset;
        let mut s = Vec::new();
        if c != 0.0 {
            s.push(Segment::new(self.grid.x_min - 1.0, -self.wall_width, c));
        }
        s.push(Segment::new(-self.wall_width, 0.0, self.wall_height + c));
        s.push(Segment::new(0.0, self.a, -self.v_w + c));
        s.push(Segment::labelled(self.a, self.a + self.d, self.v_b0 + c, BARRIER_LABEL));
        if c != 0.0 {
            s.push(Segment::new(self.a + self.d, self.grid.x_max + 1.0, c));
        }
        s
    }

    /// The potential at t1.
    pub fn static_potential(&self) -> Result<PotentialSpec> {
        PotentialSpec::new(self.segments())
    }

    /// Barrier height `V_b0 − F s(t)` with a raised-cosine `s`.
    pub fn potential(&self) -> Result<PotentialSpec> {
        if self.f == 0.0 {
            return self.static_potential();
        }
        let mut schedule = BTreeMap::new();
        schedule.insert(
            BARRIER_LABEL.to_string(),
            HeightProfile::RaisedCosine { amplitude: -self.f, t_on: self.pulse_on, t_off: self.pulse_off },
        );
        PotentialSpec::with_schedule(self.segments(), schedule)
    }

    pub fn propagator(&self) -> Result<Propagator> {
        let v = self.potential()?;
        match self.dt {
            Some(dt) => Propagator::with_dt(self.grid, &v, &self.omega(), self.t1, self.t2, self.mass, dt),
            None => Propagator::new(self.grid, &v, &self.omega(), self.t1, self.t2, self.mass),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundState {
    pub energy: f64,
    pub psi: Wavefunction,
    /// `‖Hψ − Eψ‖` for the finite-difference Hamiltonian.
    pub residual: f64,
}

/// Number of eigenvalues of the tridiagonal matrix below `x` (Sturm sequence).
fn sturm_count(diag: &[f64], off: f64, x: f64) -> usize {
    let mut count = 0;
    let mut q = diag[0] - x;
    if q < 0.0 {
        count += 1;
    }
    for &dv in &diag[1..] {
        let prev = if q == 0.0 { f64::EPSILON * off.abs() } else { q };
        q = dv - x - off * off / prev;
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// Solves `(T − s)x = b` for the symmetric tridiagonal `T`.
fn solve_tridiagonal(diag: &[f64], off: f64, shift: f64, rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut b0 = diag[0] - shift;
    c[0] = off / b0;
    d[0] = rhs[0] / b0;
    for i in 1..n {
        b0 = diag[i] - shift - off * c[i - 1];
        if b0 == 0.0 {
            b0 = f64::EPSILON;
        }
        c[i] = off / b0;
        d[i] = (rhs[i] - off * d[i - 1]) / b0;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}

/// The single level below `threshold` of the three-point finite-difference
/// Hamiltonian of a static potential.
pub fn bound_state(v: &PotentialSpec, grid: SpatialGrid, mass: f64, threshold: f64) -> Result<BoundState> {
    if !v.is_static() {
        return Err(Error::InvalidInput("bound state needs a static potential".into()));
    }
    let dx = grid.dx();
    let vs = v.sample(&grid, 0.0)?;
    let kin = 1.0 / (2.0 * mass * dx * dx);
    let diag: Vec<f64> = vs.iter().map(|v| 2.0 * kin + v).collect();
    let off = -kin;
    let count = sturm_count(&diag, off, threshold);
    if count != 1 {
        return Err(Error::BoundState(format!("expected exactly one level below {threshold}, found {count}")));
    }
    let (mut lo, mut hi) = (vs.iter().copied().fold(f64::INFINITY, f64::min) - 4.0 * kin, threshold);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sturm_count(&diag, off, mid) >= 1 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let e = 0.5 * (lo + hi);
    let shift = e - 1e-10 * e.abs().max(1.0);
    let mut x: Vec<f64> = vec![1.0; grid.n_points];
    for _ in 0..4 {
        x = solve_tridiagonal(&diag, off, shift, &x);
        let n = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        x.iter_mut().for_each(|v| *v /= n);
    }
    let hx = |x: &[f64], i: usize| -> f64 {
        let l = if i > 0 { x[i - 1] } else { 0.0 };
        let r = if i + 1 < x.len() { x[i + 1] } else { 0.0 };
        diag[i] * x[i] + off * (l + r)
    };
    let rayleigh: f64 = (0..x.len()).map(|i| x[i] * hx(&x, i)).sum();
    let scale = 1.0 / dx.sqrt();
    let sign = if x.iter().sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
    let residual = (0..x.len()).map(|i| (hx(&x, i) - rayleigh * x[i]).powi(2)).sum::<f64>().sqrt();
    let values = x.iter().map(|v| Complex64::new(sign * v * scale, 0.0)).collect();
    Ok(BoundState { energy: rayleigh, psi: Wavefunction { grid, values, t: 0.0 }, residual })
}

/// Refines an approximate bound state into an eigenvector of one split-operator
/// step by Hann-windowed time averaging at its quasi-energy, so that it stays
/// stationary under the propagator.
pub fn refine_bound_state(
    v: &PotentialSpec,
    state: &BoundState,
    mass: f64,
    dt: f64,
    filter_time: f64,
    passes: usize,
) -> Result<(Wavefunction, f64)> {
    let grid = state.psi.grid;
    let n_steps = (filter_time / dt).round().max(2.0) as usize;
    let prop = Propagator::with_dt(grid, v, &Region::whole(&grid), 0.0, dt, mass, dt)?.without_edge_check();
    let mut psi = state.psi.values.clone();
    let mut energy = state.energy;
    let dx = grid.dx();
    for _ in 0..passes {
        let mut acc = vec![Complex64::new(0.0, 0.0); psi.len()];
        let mut cur = vec![psi.clone()];
        for n in 0..=n_steps {
            let w = 0.5 * (1.0 - (2.0 * PI * n as f64 / n_steps as f64).cos());
            let phase = Complex64::from_polar(w, energy * n as f64 * dt);
            acc.iter_mut().zip(&cur[0]).for_each(|(a, c)| *a += phase * c);
            if n < n_steps {
                prop.run(&mut cur, 0.0, |_| {})?;
            }
        }
        let norm = norm_sqr(&acc, dx).sqrt();
        psi = acc.into_iter().map(|a| a / norm).collect();
        let mut next = vec![psi.clone()];
        prop.run(&mut next, 0.0, |_| {})?;
        energy = -inner(&psi, &next[0], dx).arg() / dt;
    }
    // the eigenvector can be taken real; fix the phase accordingly
    let pivot = psi.iter().copied().max_by(|a, b| a.norm().total_cmp(&b.norm())).unwrap();
    let ph = pivot.conj() / pivot.norm();
    let values = psi.into_iter().map(|v| v * ph).collect();
    Ok((Wavefunction { grid, values, t: 0.0 }, energy))
}

/// Channel amplitudes at one λ.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IonisationResult {
    pub lambda: f64,
    /// `⟨ψ0|ψ(t2)⟩`.
    pub c: Complex64,
    /// Momenta `p > 0` on the FFT grid.
    pub momenta: Vec<f64>,
    pub b: Vec<Complex64>,
    pub dp: f64,
    pub w_ion: f64,
}

impl IonisationResult {
    /// `|C|² + ∫|B|²dp − 1`.
    pub fn completeness_defect(&self) -> f64 {
        self.c.norm_sqr() + self.w_ion - 1.0
    }

    /// CSV columns `p, Re_B, Im_B`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "p,Re_B,Im_B")?;
        for (p, b) in self.momenta.iter().zip(&self.b) {
            writeln!(out, "{},{},{}", fmt_f64(*p), fmt_f64(b.re), fmt_f64(b.im))?;
        }
        Ok(())
    }
}

/// SWP and dwell times of the three channels, with the λ-derivatives they use.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IonisationTimes {
    pub c: Complex64,
    pub w_ion: f64,
    pub completeness_defect: f64,
    /// `i∂λ ln C` and `−∂²λC/C`.
    pub tau_bound: Complex64,
    pub tau2_bound: Complex64,
    pub t_bound: f64,
    pub t_free: Option<f64>,
    pub t_all: f64,
    /// `[|∂λC|² + ∫|∂λB|²dp]^{1/2}`.
    pub t_all_direct: f64,
    pub tau_dwell: f64,
    pub tau_dwell_imag: f64,
    /// `∫Im[∂λB ∂²λB*]dp`, the modified-clock numerator of the free channel.
    pub free_cubic: f64,
    pub dc: Complex64,
    pub db: Vec<Complex64>,
    pub d2b: Vec<Complex64>,
    pub result: IonisationResult,
}

impl IonisationTimes {
    /// `i∂λB/B` and `−∂²λB/B` at each momentum with a non-vanishing amplitude.
    pub fn free_moments(&self) -> Vec<(f64, Complex64, Complex64)> {
        self.result
            .momenta
            .iter()
            .zip(&self.result.b)
            .zip(self.db.iter().zip(&self.d2b))
            .filter(|((_, b), _)| b.norm() > AMPLITUDE_FLOOR)
            .map(|((p, b), (d1, d2))| (*p, I * d1 / b, -d2 / b))
            .collect()
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "C": [self.c.re, self.c.im],
            "W_ion": self.w_ion,
            "T_bound": self.t_bound,
            "T_free": self.t_free,
            "T_all": self.t_all,
            "tau_dwell": self.tau_dwell,
            "completeness_defect": self.completeness_defect,
        })
    }
}

/// A model with its refined bound state and propagator.
pub struct Ionisation {
    pub model: IonisationModel,
    pub prop: Propagator,
    pub psi0: Wavefunction,
    /// Finite-difference bound state, before refinement.
    pub fd_state: BoundState,
    pub quasi_energy: f64,
    window: Vec<f64>,
}

impl Ionisation {
    pub fn new(model: IonisationModel) -> Result<Self> {
        model.validate()?;
        let v0 = model.static_potential()?;
        let fd_state = bound_state(&v0, model.grid, model.mass, model.offset)?;
        let prop = model.propagator()?;
        let (psi0, quasi_energy) = refine_bound_state(&v0, &fd_state, model.mass, prop.dt(), 60.0, 2)?;
        let edge = model.collector();
        let ramp = 2.0;
        let window = model
            .grid
            .xs()
            .into_iter()
            .map(|x| {
                if x <= edge {
                    0.0
                } else if x >= edge + ramp {
                    1.0
                } else {
                    (0.5 * PI * (x - edge) / ramp).sin().powi(2)
                }
            })
            .collect();
        Ok(Ionisation { model, prop, psi0, fd_state, quasi_energy, window })
    }

    fn decompose(&self, psi_t2: &[Complex64], lambda: f64) -> IonisationResult {
        let grid = self.model.grid;
        let dx = grid.dx();
        let n = grid.n_points;
        let c = inner(&self.psi0.values, psi_t2, dx);
        let mut f: Vec<Complex64> = psi_t2
            .iter()
            .zip(&self.psi0.values)
            .zip(&self.window)
            .map(|((p, b), w)| (p - c * b) * w)
            .collect();
        FftPlanner::new().plan_fft_forward(n).process(&mut f);
        let k = grid.wavenumbers();
        let x0 = grid.x(0);
        let norm = dx / (2.0 * PI).sqrt();
        let mut momenta = Vec::new();
        let mut b = Vec::new();
        for (fj, kj) in f.iter().zip(&k) {
            if *kj > 0.0 {
                momenta.push(*kj);
                b.push(fj * Complex64::from_polar(norm, -kj * x0));
            }
        }
        let dp = 2.0 * PI / (grid.x_max - grid.x_min);
        let w_ion = b.iter().map(|v| v.norm_sqr()).sum::<f64>() * dp;
        IonisationResult { lambda, c, momenta, b, dp, w_ion }
    }

    /// `C(λ)`, `B(p, λ)` and `W_ion` after propagation to t2.
    pub fn run(&self, lambda: f64) -> Result<IonisationResult> {
        let out = self.prop.propagate(&self.psi0, lambda)?;
        let r = self.decompose(&out.values, lambda);
        let defect = r.completeness_defect().abs();
        if defect > 1e-2 {
            return Err(Error::Completeness(defect));
        }
        Ok(r)
    }

    /// Channel times from the seven-point λ-stencil.
    pub fn times(&self, h: Option<f64>) -> Result<IonisationTimes> {
        let h = h.unwrap_or(1e-4 * self.model.v_b0.abs().max(self.model.v_w).max(1.0));
        let finals = self.prop.stencil_states(&self.psi0, h)?;
        let results: Vec<IonisationResult> =
            finals.iter().zip(STENCIL_OFFSETS).map(|(f, o)| self.decompose(f, o * h)).collect();
        let r0 = results[0].clone();
        let defect = r0.completeness_defect().abs();
        if defect > 1e-2 {
            return Err(Error::Completeness(defect));
        }
        let cs: Vec<Vec<Complex64>> = results.iter().map(|r| vec![r.c]).collect();
        let bs: Vec<Vec<Complex64>> = results.iter().map(|r| r.b.clone()).collect();
        let (dc, _) = differentiate(&cs, Order::First, h);
        let (d2c, _) = differentiate(&cs, Order::Second, h);
        let (db, _) = differentiate(&bs, Order::First, h);
        let (d2b, _) = differentiate(&bs, Order::Second, h);
        let (dc, d2c) = (dc[0], d2c[0]);
        let c = r0.c;
        if c.norm() <= AMPLITUDE_FLOOR {
            return Err(Error::PostSelectionImpossible("bound amplitude vanishes".into()));
        }
        let dp = r0.dp;
        let w = r0.w_ion;
        let tau_bound = I * dc / c;
        let tau2_bound = -d2c / c;
        let t_bound = tau_bound.norm();
        let free_sq: f64 = db.iter().map(|d| d.norm_sqr()).sum::<f64>() * dp;
        let t_free = (w >= 1e-12).then(|| (free_sq / w).sqrt());
        let t_all = ((1.0 - w) * t_bound * t_bound + t_free.map_or(0.0, |t| w * t * t)).sqrt();
        let t_all_direct = (dc.norm_sqr() + free_sq).sqrt();
        let dwell = I * (c.conj() * dc + r0.b.iter().zip(&db).map(|(b, d)| b.conj() * d).sum::<Complex64>() * dp);
        let free_cubic = db.iter().zip(&d2b).map(|(a, b)| (a * b.conj()).im).sum::<f64>() * dp;
        Ok(IonisationTimes {
            c,
            w_ion: w,
            completeness_defect: r0.completeness_defect(),
            tau_bound,
            tau2_bound,
            t_bound,
            t_free,
            t_all,
            t_all_direct,
            tau_dwell: dwell.re,
            tau_dwell_imag: dwell.im,
            free_cubic,
            dc,
            db,
            d2b,
            result: r0,
        })
    }

    /// `T_SWP(free)`, an error when nothing escapes.
    pub fn t_free(&self, times: &IonisationTimes) -> Result<f64> {
        times
            .t_free
            .ok_or_else(|| Error::PostSelectionImpossible(format!("ionisation probability {:.3e}", times.w_ion)))
    }

    /// Stopwatch dwell time of the bound state over Ω.
    pub fn stopwatch_dwell(&self) -> Result<f64> {
        self.prop.dwell_time_stopwatch(&self.psi0)
    }
}

/// Ground level of the wall + well + semi-infinite barrier, from the matching
/// condition `k cot(ka + φ) = −κ_b` with `tan φ = k/κ_wall`.
pub fn deep_well_energy(v_w: f64, a: f64, v_b: f64, wall: f64, mass: f64) -> Result<f64> {
    let f = |e: f64| {
        let k = (2.0 * mass * (e + v_w)).sqrt();
        let kw = (2.0 * mass * (wall - e)).sqrt();
        let kb = (2.0 * mass * (v_b - e)).sqrt();
        let phi = (k / kw).atan();
        // ka + φ runs through (π/2, π) for the ground state
        let th = k * a + phi;
        k * th.cos() + kb * th.sin()
    };
    let k_at = |th: f64| {
        // invert ka + atan(k/κw) = th approximately, then refine by bisection on e
        th / a
    };
    let e_lo = -v_w + 1e-12;
    let e_hi = (k_at(PI) * k_at(PI) / (2.0 * mass) - v_w).min(v_b.min(wall) - 1e-12);
    let (mut lo, mut hi) = (e_lo, e_hi);
    if f(lo).signum() == f(hi).signum() {
        return Err(Error::BoundState("no ground level in the bracket".into()));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid).signum() == f(lo).signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
