//! The traversal-time amplitude distribution `A(τ)`.
//!
//! The transition amplitude `a(λ) = ⟨ψF|U(λ)|ψI⟩` is the Fourier transform of
//! `A(τ)`, so sampling it on a uniform λ grid and transforming back gives
//! `A` on a uniform τ grid:
//!
//! `A(τ_m) = (Δλ/2π) Σ_j w_j a(λ_j) e^{iλ_j τ_m}`, with `λ_j = (j − n/2)Δλ`,
//! `Δλ = 2λ_max/n`, `τ_m = mΔτ`, `Δτ = π/λ_max` and `m ∈ [−n/2, n/2)`.
//!
//! `Σ_m A_m Δτ` reproduces `w(0)·a(0) = a(0)` exactly.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::ctime::AMPLITUDE_FLOOR;
use crate::error::{Error, Result};
use crate::evolve::{Propagator, Wavefunction};
use crate::io::fmt_f64;
use crate::model::{PotentialSpec, Region};
use crate::scatter::scattering_amplitudes;

pub const DEFAULT_N_LAMBDA: usize = 1024;
/// `λ_max = DEFAULT_LAMBDA_SCALE / (t2 − t1)` before rounding.
pub const DEFAULT_LAMBDA_SCALE: f64 = 40.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    None,
    #[default]
    Hann,
}

impl Window {
    fn weight(self, lambda: f64, lambda_max: f64) -> f64 {
        match self {
            Window::None => 1.0,
            Window::Hann => 0.5 * (1.0 + (PI * lambda / lambda_max).cos()),
        }
    }

    /// Second λ-derivative of the weight at λ = 0.
    fn curvature(self, lambda_max: f64) -> f64 {
        match self {
            Window::None => 0.0,
            Window::Hann => -0.5 * (PI / lambda_max).powi(2),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AmplitudeDistribution {
    pub tau_grid: Vec<f64>,
    pub amplitudes: Vec<Complex64>,
    pub lambda_max: f64,
    pub n_lambda: usize,
    pub window: Window,
    pub d_tau: f64,
    /// Raw samples `a(λ_j)` on `λ_j = (j − n/2)Δλ`.
    pub lambdas: Vec<f64>,
    pub samples: Vec<Complex64>,
    /// `t2 − t1` when the samples come from a time-dependent run.
    pub duration: Option<f64>,
}

/// λ grid for `n` samples on `[−λ_max, λ_max)`.
pub fn lambda_grid(lambda_max: f64, n: usize) -> Vec<f64> {
    let dl = 2.0 * lambda_max / n as f64;
    (0..n).map(|j| (j as f64 - (n / 2) as f64) * dl).collect()
}

/// `λ_max` near `40/(t2 − t1)`, adjusted so that `t2 − t1` is a whole number of τ bins.
pub fn default_lambda_max(duration: f64) -> f64 {
    let bins = (DEFAULT_LAMBDA_SCALE / PI).round().max(8.0);
    bins * PI / duration
}

fn check_size(n: usize) -> Result<()> {
    if n < 256 || !n.is_power_of_two() {
        return Err(Error::InvalidInput(format!("n_lambda must be a power of two >= 256, got {n}")));
    }
    Ok(())
}

impl AmplitudeDistribution {
    /// Transforms samples `a(λ_j)` taken on [`lambda_grid`].
    pub fn from_samples(
        lambda_max: f64,
        samples: Vec<Complex64>,
        window: Window,
        duration: Option<f64>,
    ) -> Result<Self> {
        let n = samples.len();
        check_size(n)?;
        if !(lambda_max > 0.0 && lambda_max.is_finite()) {
            return Err(Error::InvalidInput(format!("lambda_max must be positive, got {lambda_max}")));
        }
        if samples.iter().any(|s| !(s.re.is_finite() && s.im.is_finite())) {
            return Err(Error::NonFinite("amplitude samples".into()));
        }
        if samples.iter().all(|s| s.norm() <= AMPLITUDE_FLOOR) {
            return Err(Error::PostSelectionImpossible("final state has no overlap for any λ".into()));
        }
        let d_tau = PI / lambda_max;
        let lambdas = lambda_grid(lambda_max, n);
        let dl = 2.0 * lambda_max / n as f64;

        let mut buf: Vec<Complex64> = samples
            .iter()
            .zip(&lambdas)
            .map(|(a, &l)| a * window.weight(l, lambda_max))
            .collect();
        FftPlanner::new().plan_fft_inverse(n).process(&mut buf);
        // buf[m mod n] = Σ_j b_j e^{2πi jm/n}; the shift by n/2 in j contributes (−1)^m.
        let half = (n / 2) as i64;
        let mut tau_grid = Vec::with_capacity(n);
        let mut amplitudes = Vec::with_capacity(n);
        for m in -half..half {
            let idx = m.rem_euclid(n as i64) as usize;
            let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
            tau_grid.push(m as f64 * d_tau);
            amplitudes.push(buf[idx] * sign * dl / (2.0 * PI));
        }
        Ok(AmplitudeDistribution {
            tau_grid,
            amplitudes,
            lambda_max,
            n_lambda: n,
            window,
            d_tau,
            lambdas,
            samples,
            duration,
        })
    }

    /// `∫A(τ)dτ`, which equals `⟨ψF|U(0)|ψI⟩`.
    pub fn integral(&self) -> Complex64 {
        self.amplitudes.iter().sum::<Complex64>() * self.d_tau
    }

    /// `a(0)` as sampled.
    pub fn amplitude_at_zero(&self) -> Complex64 {
        self.samples[self.n_lambda / 2]
    }

    /// `∫τⁿA dτ / ∫A dτ` for n ≤ 2. For the Hann window the second moment
    /// is corrected for the window's curvature at λ = 0.
    pub fn moment(&self, n: u8) -> Result<Complex64> {
        if n > 2 {
            return Err(Error::InvalidInput(format!("moment order {n} exceeds 2")));
        }
        let z = self.integral();
        if z.norm() <= AMPLITUDE_FLOOR {
            return Err(Error::PostSelectionImpossible(format!("∫A dτ = {:.3e}", z.norm())));
        }
        if n == 0 {
            return Ok(Complex64::new(1.0, 0.0));
        }
        let raw: Complex64 = self
            .tau_grid
            .iter()
            .zip(&self.amplitudes)
            .map(|(t, a)| a * t.powi(n as i32))
            .sum::<Complex64>()
            * self.d_tau
            / z;
        Ok(if n == 2 { raw + self.window.curvature(self.lambda_max) } else { raw })
    }

    /// `(Σ_m |A_m Δτ|², |Σ_m A_m Δτ|²)`: per-bin probabilities for an accurate
    /// measurement of τ, and the unobserved transition probability.
    pub fn accurate_measurement_probability(&self) -> (f64, f64) {
        let acc = self.amplitudes.iter().map(|a| (a * self.d_tau).norm_sqr()).sum();
        (acc, self.integral().norm_sqr())
    }

    /// Fraction of `Σ|A|²` on bins with τ < −Δτ or τ > duration + Δτ.
    pub fn leaked_fraction(&self, duration: f64) -> f64 {
        let tol = self.d_tau * (1.0 + 1e-9);
        let total: f64 = self.amplitudes.iter().map(|a| a.norm_sqr()).sum();
        let out: f64 = self
            .tau_grid
            .iter()
            .zip(&self.amplitudes)
            .filter(|(t, _)| **t < -tol || **t > duration + tol)
            .map(|(_, a)| a.norm_sqr())
            .sum();
        if total == 0.0 { 0.0 } else { out / total }
    }

    /// CSV columns `tau, Re_A, Im_A, abs_A`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "tau,Re_A,Im_A,abs_A")?;
        for (t, a) in self.tau_grid.iter().zip(&self.amplitudes) {
            writeln!(out, "{},{},{},{}", fmt_f64(*t), fmt_f64(a.re), fmt_f64(a.im), fmt_f64(a.norm()))?;
        }
        Ok(())
    }

    pub fn metadata_json(&self) -> serde_json::Value {
        let (p_acc, p_free) = self.accurate_measurement_probability();
        serde_json::json!({
            "lambda_max": self.lambda_max,
            "n_lambda": self.n_lambda,
            "d_lambda": 2.0 * self.lambda_max / self.n_lambda as f64,
            "d_tau": self.d_tau,
            "window": self.window,
            "duration": self.duration,
            "p_acc": p_acc,
            "p_free": p_free,
            "p_acc_convention": "sum over bins of |A(tau_m) d_tau|^2",
        })
    }
}

/// Samples `⟨ψF|U(λ)|ψI⟩` with the propagator and transforms to τ.
pub fn conditioned_amplitude(
    prop: &Propagator,
    psi_i: &Wavefunction,
    psi_f: &Wavefunction,
    lambda_max: Option<f64>,
    n_lambda: usize,
    window: Window,
) -> Result<AmplitudeDistribution> {
    check_size(n_lambda)?;
    let duration = prop.duration();
    let lambda_max = lambda_max.unwrap_or_else(|| default_lambda_max(duration));
    let d_tau = PI / lambda_max;
    if d_tau >= duration / 8.0 {
        return Err(Error::Nyquist(format!(
            "Δτ = {d_tau:.4e} must be below (t2 − t1)/8 = {:.4e}; raise lambda_max",
            duration / 8.0
        )));
    }
    let samples: Vec<Complex64> = lambda_grid(lambda_max, n_lambda)
        .par_iter()
        .map(|&l| prop.transition_amplitude(psi_f, psi_i, l))
        .collect::<Result<_>>()?;
    AmplitudeDistribution::from_samples(lambda_max, samples, window, Some(duration))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Transmitted,
    Reflected,
}

/// Distribution for a monochromatic in/out channel, from `T(p,λ)` or `R(p,λ)`.
#[allow(clippy::too_many_arguments)]
pub fn stationary_amplitude(
    v: &PotentialSpec,
    region: &Region,
    p: f64,
    mass: f64,
    channel: Channel,
    lambda_max: f64,
    n_lambda: usize,
    window: Window,
) -> Result<AmplitudeDistribution> {
    check_size(n_lambda)?;
    if channel == Channel::Transmitted && !scattering_amplitudes(v, region, 0.0, p, mass)?.transmission_channel_open() {
        return Err(Error::PostSelectionImpossible(format!("no propagating transmitted wave at p = {p}")));
    }
    let samples: Vec<Complex64> = lambda_grid(lambda_max, n_lambda)
        .par_iter()
        .map(|&l| {
            let s = scattering_amplitudes(v, region, l, p, mass)?;
            Ok(match channel {
                Channel::Transmitted => s.t,
                Channel::Reflected => s.r,
            })
        })
        .collect::<Result<_>>()?;
    AmplitudeDistribution::from_samples(lambda_max, samples, window, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(taus: &[(f64, Complex64)], lambda_max: f64, n: usize, window: Window) -> AmplitudeDistribution {
        let samples = lambda_grid(lambda_max, n)
            .into_iter()
            .map(|l| taus.iter().map(|(t, c)| c * Complex64::from_polar(1.0, -l * t)).sum())
            .collect();
        AmplitudeDistribution::from_samples(lambda_max, samples, window, None).unwrap()
    }

    #[test]
    fn delta_on_grid_lands_in_one_bin() {
        let lm = default_lambda_max(2.0);
        let d = synthetic(&[(2.0, Complex64::new(0.6, 0.0))], lm, 256, Window::None);
        let peak = d.amplitudes.iter().map(|a| a.norm()).enumerate().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap().0;
        assert!((d.tau_grid[peak] - 2.0).abs() < 1e-12);
        let (acc, free) = d.accurate_measurement_probability();
        assert!((acc - free).abs() < 1e-6);
        assert!((d.moment(1).unwrap().re - 2.0).abs() < 1e-10);
    }

    #[test]
    fn opposite_bins_cancel() {
        let lm = default_lambda_max(2.0);
        let dt = PI / lm;
        let d = synthetic(&[(dt * 3.0, 0.5.into()), (dt * 5.0, (-0.5).into())], lm, 256, Window::None);
        let (acc, free) = d.accurate_measurement_probability();
        assert!(free < 1e-20);
        assert!(acc > 0.4);
        assert!(matches!(d.moment(1), Err(Error::PostSelectionImpossible(_))));
    }

    #[test]
    fn sum_rule_and_moments_with_window() {
        let c1 = Complex64::new(0.7, 0.2);
        let c2 = Complex64::new(-0.3, 0.4);
        let d = synthetic(&[(0.83, c1), (1.71, c2)], default_lambda_max(2.0), 256, Window::Hann);
        assert!((d.integral() - (c1 + c2)).norm() < 1e-12);
        let m1 = (c1 * 0.83 + c2 * 1.71) / (c1 + c2);
        let m2 = (c1 * 0.83 * 0.83 + c2 * 1.71 * 1.71) / (c1 + c2);
        assert!((d.moment(1).unwrap() - m1).norm() < 1e-3 * m1.norm());
        assert!((d.moment(2).unwrap() - m2).norm() < 1e-3 * m2.norm());
        assert_eq!(d.moment(0).unwrap(), Complex64::new(1.0, 0.0));
        assert!(d.leaked_fraction(2.0) < 0.01);
    }

    #[test]
    fn rejects_bad_sizes() {
        assert!(AmplitudeDistribution::from_samples(1.0, vec![1.0.into(); 100], Window::Hann, None).is_err());
        assert!(AmplitudeDistribution::from_samples(1.0, vec![0.0.into(); 256], Window::Hann, None).is_err());
    }

    #[test]
    fn stationary_free_segment() {
        // T(p, λ) of a free segment is e^{i(k−p)d} with k = sqrt(p² − 2λ)
        let v = PotentialSpec::zero();
        let r = Region::new(0.0, 2.0).unwrap();
        let d = stationary_amplitude(&v, &r, 3.0, 1.0, Channel::Transmitted, 2.0, 256, Window::Hann).unwrap();
        assert!((d.moment(1).unwrap() - Complex64::new(2.0 / 3.0, 0.0)).norm() < 1e-3);
    }

    #[test]
    fn csv_and_metadata() {
        let d = synthetic(&[(1.0, 1.0.into())], default_lambda_max(2.0), 256, Window::Hann);
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("tau,Re_A,Im_A,abs_A\n"));
        assert_eq!(text.lines().count(), 257);
        assert_eq!(d.metadata_json()["window"], "hann");
    }
}
