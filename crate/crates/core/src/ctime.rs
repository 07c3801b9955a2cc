//! Complex traversal times from λ-derivatives of scattering amplitudes.
//!
//! With `V → V + λΘ_Ω`, the tunnelling time is `i ∂λ ln T`, the reflection time
//! `i ∂λ ln R`, and their real combinations (dwell time, SWP times) follow from
//! the same derivatives. Derivatives are taken numerically with a shared
//! Richardson-extrapolated stencil, reused by the time-dependent modules.

use std::io::Write;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::model::{PotentialSpec, Region};
use crate::quad;
use crate::scatter::scattering_amplitudes;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Amplitudes at or below this modulus cannot be post-selected on.
pub const AMPLITUDE_FLOOR: f64 = 1e-12;

/// λ offsets (in units of the step) at which a function is evaluated.
pub const STENCIL_OFFSETS: [f64; 7] = [0.0, 1.0, -1.0, 2.0, -2.0, 4.0, -4.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Derivative {
    pub value: Complex64,
    /// Difference between the extrapolated value and the finer stencil.
    pub error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Order {
    First,
    Second,
}

// Stencil weights over STENCIL_OFFSETS, before division by h (order 1) or h² (order 2).
const D1_H: [f64; 7] = [0.0, 8.0 / 12.0, -8.0 / 12.0, -1.0 / 12.0, 1.0 / 12.0, 0.0, 0.0];
const D1_2H: [f64; 7] = [0.0, 0.0, 0.0, 8.0 / 24.0, -8.0 / 24.0, -1.0 / 24.0, 1.0 / 24.0];
const D2_H: [f64; 7] = [-30.0 / 12.0, 16.0 / 12.0, 16.0 / 12.0, -1.0 / 12.0, -1.0 / 12.0, 0.0, 0.0];
const D2_2H: [f64; 7] = [-30.0 / 48.0, 0.0, 0.0, 16.0 / 48.0, 16.0 / 48.0, -1.0 / 48.0, -1.0 / 48.0];

fn weights(order: Order, h: f64) -> ([f64; 7], [f64; 7]) {
    let (fine, coarse, scale) = match order {
        Order::First => (D1_H, D1_2H, 1.0 / h),
        Order::Second => (D2_H, D2_2H, 1.0 / (h * h)),
    };
    (fine.map(|w| w * scale), coarse.map(|w| w * scale))
}

/// Differentiates sampled data: `samples[i]` holds f at `STENCIL_OFFSETS[i]·h`.
///
/// Returns the extrapolated derivative for every component and the largest
/// component-wise level difference.
pub fn differentiate(samples: &[Vec<Complex64>], order: Order, h: f64) -> (Vec<Complex64>, f64) {
    assert_eq!(samples.len(), STENCIL_OFFSETS.len());
    let (fine, coarse) = weights(order, h);
    let n = samples[0].len();
    let mut out = Vec::with_capacity(n);
    let mut err: f64 = 0.0;
    for c in 0..n {
        let mut a = Complex64::new(0.0, 0.0);
        let mut b = Complex64::new(0.0, 0.0);
        for (k, s) in samples.iter().enumerate() {
            a += fine[k] * s[c];
            b += coarse[k] * s[c];
        }
        let extrap = (16.0 * a - b) / 15.0;
        err = err.max((extrap - a).norm());
        out.push(extrap);
    }
    (out, err)
}

/// Evaluates `f` on the stencil for step `h`.
pub fn sample_stencil<F>(f: F, h: f64) -> Result<Vec<Complex64>>
where
    F: Fn(f64) -> Result<Complex64>,
{
    STENCIL_OFFSETS
        .iter()
        .map(|&o| {
            let v = f(o * h)?;
            if v.re.is_finite() && v.im.is_finite() {
                Ok(v)
            } else {
                Err(Error::NonFinite(format!("f({}) during λ-differentiation", o * h)))
            }
        })
        .collect()
}

fn scalar_derivative(samples: &[Complex64], order: Order, h: f64) -> Derivative {
    let (fine, coarse) = weights(order, h);
    let a: Complex64 = samples.iter().zip(fine).map(|(s, w)| s * w).sum();
    let b: Complex64 = samples.iter().zip(coarse).map(|(s, w)| s * w).sum();
    let value = (16.0 * a - b) / 15.0;
    Derivative { value, error: (value - a).norm() }
}

/// Central differences at λ = 0 with one Richardson level. Evaluates `f` on [−4h, 4h].
pub fn lambda_derivative<F>(f: F, order: Order, h: f64) -> Result<Derivative>
where
    F: Fn(f64) -> Result<Complex64>,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidInput(format!("differentiation step must be positive, got {h}")));
    }
    let samples = sample_stencil(f, h)?;
    Ok(scalar_derivative(&samples, order, h))
}

/// `1e-4 · max(E, |V|_max, 1)`.
pub fn default_step(energy: f64, v_max: f64) -> f64 {
    1e-4 * energy.abs().max(v_max.abs()).max(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeRole {
    Tunnelling,
    Reflection,
    DwellComponent,
    Moment(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComplexTime {
    pub value: Complex64,
    pub role: TimeRole,
    /// Propagated differentiation error estimate.
    pub error: f64,
}

/// Channel amplitudes and their first two λ-derivatives at fixed momentum.
///
/// The transmitted amplitude is flux-normalised (`sqrt(k_out/p)·T`) and set to
/// zero when the transmitted channel is closed.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ChannelDerivatives {
    pub p: f64,
    pub t: Complex64,
    pub r: Complex64,
    pub dt: Derivative,
    pub dr: Derivative,
    pub d2t: Derivative,
    pub d2r: Derivative,
    pub transmission_open: bool,
}

pub fn channel_derivatives(
    v: &PotentialSpec,
    region: &Region,
    p: f64,
    mass: f64,
) -> Result<ChannelDerivatives> {
    let h = default_step(p * p / (2.0 * mass), v.max_abs_height());
    channel_derivatives_with_step(v, region, p, mass, h)
}

pub fn channel_derivatives_with_step(
    v: &PotentialSpec,
    region: &Region,
    p: f64,
    mass: f64,
    h: f64,
) -> Result<ChannelDerivatives> {
    let mut ts = Vec::with_capacity(7);
    let mut rs = Vec::with_capacity(7);
    let mut open = true;
    for &o in &STENCIL_OFFSETS {
        let s = scattering_amplitudes(v, region, o * h, p, mass)?;
        open &= s.transmission_channel_open();
        let flux = if s.transmission_channel_open() { (s.k_out.re / p).sqrt() } else { 0.0 };
        ts.push(s.t * flux);
        rs.push(s.r);
    }
    if !open {
        ts.iter_mut().for_each(|t| *t = 0.0.into());
    }
    Ok(ChannelDerivatives {
        p,
        t: ts[0],
        r: rs[0],
        dt: scalar_derivative(&ts, Order::First, h),
        dr: scalar_derivative(&rs, Order::First, h),
        d2t: scalar_derivative(&ts, Order::Second, h),
        d2r: scalar_derivative(&rs, Order::Second, h),
        transmission_open: open,
    })
}

fn log_derivative_time(amp: Complex64, d: Derivative, role: TimeRole, what: &str) -> Result<ComplexTime> {
    if amp.norm() <= AMPLITUDE_FLOOR {
        return Err(Error::PostSelectionImpossible(format!("{what} amplitude {:.3e} vanishes", amp.norm())));
    }
    Ok(ComplexTime { value: I * d.value / amp, role, error: d.error / amp.norm() })
}

/// `τ̄_tunn = i ∂λ ln T(p, λ=0)`.
pub fn tunnelling_time(v: &PotentialSpec, region: &Region, p: f64, mass: f64) -> Result<ComplexTime> {
    let c = channel_derivatives(v, region, p, mass)?;
    log_derivative_time(c.t, c.dt, TimeRole::Tunnelling, "transmission")
}

/// `τ̄_refl = i ∂λ ln R(p, λ=0)`.
pub fn reflection_time(v: &PotentialSpec, region: &Region, p: f64, mass: f64) -> Result<ComplexTime> {
    let c = channel_derivatives(v, region, p, mass)?;
    log_derivative_time(c.r, c.dr, TimeRole::Reflection, "reflection")
}

/// Second moments `(i)² ∂²λ A / A` for the transmitted and reflected channels.
/// `None` marks a closed or vanishing channel.
pub fn second_moments(c: &ChannelDerivatives) -> (Option<Complex64>, Option<Complex64>) {
    let m = |a: Complex64, d2: Derivative| (a.norm() > AMPLITUDE_FLOOR).then(|| -d2.value / a);
    (m(c.t, c.d2t), m(c.r, c.d2r))
}

fn dwell_from(c: &ChannelDerivatives) -> Result<f64> {
    let z = I * (c.t.conj() * c.dt.value + c.r.conj() * c.dr.value);
    let tol = 1e-6 * z.norm().max(1e-300) + 1e-10;
    if z.im.abs() > tol {
        return Err(Error::NumericalInconsistency(format!(
            "dwell time has imaginary part {:.3e} (real part {:.6e})",
            z.im, z.re
        )));
    }
    Ok(z.re)
}

/// `τ_dwell = i[T*∂λT + R*∂λR]` for a monochromatic incident wave.
pub fn dwell_time_monochromatic(v: &PotentialSpec, region: &Region, p: f64, mass: f64) -> Result<f64> {
    dwell_from(&channel_derivatives(v, region, p, mass)?)
}

/// `[|∂λT|² + |∂λR|²]^{1/2}`: the calibrated SWP time without post-selection.
pub fn swp_time_monochromatic_all(v: &PotentialSpec, region: &Region, p: f64, mass: f64) -> Result<f64> {
    let c = channel_derivatives(v, region, p, mass)?;
    Ok((c.dt.value.norm_sqr() + c.dr.value.norm_sqr()).sqrt())
}

/// Momentum amplitude `A(p)` of an incident packet, `p > 0`.
#[derive(Debug, Clone, PartialEq)]
pub enum MomentumDistribution {
    /// `|A(p)|²` Gaussian with mean `p0` and standard deviation `sigma`, renormalised on its window.
    Gaussian { p0: f64, sigma: f64 },
    /// Linear interpolation of samples on increasing `p > 0`.
    Sampled { p: Vec<f64>, amplitude: Vec<Complex64> },
}

impl MomentumDistribution {
    pub fn gaussian(p0: f64, sigma: f64) -> Result<Self> {
        if !(p0 > 0.0 && sigma > 0.0) {
            return Err(Error::InvalidInput(format!("gaussian packet needs p0, sigma > 0 ({p0}, {sigma})")));
        }
        Ok(MomentumDistribution::Gaussian { p0, sigma })
    }

    pub fn sampled(p: Vec<f64>, amplitude: Vec<Complex64>) -> Result<Self> {
        if p.len() < 2 || p.len() != amplitude.len() || p[0] <= 0.0 || p.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput("sampled distribution needs increasing p > 0".into()));
        }
        let norm: f64 = p
            .windows(2)
            .zip(amplitude.windows(2))
            .map(|(x, a)| 0.5 * (x[1] - x[0]) * (a[0].norm_sqr() + a[1].norm_sqr()))
            .sum();
        if (norm - 1.0).abs() > 1e-8 {
            return Err(Error::InvalidInput(format!("∫|A(p)|²dp = {norm}, expected 1")));
        }
        Ok(MomentumDistribution::Sampled { p, amplitude })
    }

    /// Six-sigma window for the Gaussian, the sample span otherwise.
    pub fn window(&self) -> (f64, f64) {
        match self {
            MomentumDistribution::Gaussian { p0, sigma } => ((p0 - 6.0 * sigma).max(1e-6 * p0), p0 + 6.0 * sigma),
            MomentumDistribution::Sampled { p, .. } => (p[0], p[p.len() - 1]),
        }
    }

    /// Quadrature nodes with `|A(p)|²·weight`, summing to 1.
    pub fn weighted_nodes(&self) -> Vec<(f64, f64)> {
        let (a, b) = self.window();
        let nodes = quad::mapped(quad::gl512(), a, b);
        let raw: Vec<(f64, f64)> = nodes.into_iter().map(|(p, w)| (p, w * self.density(p))).collect();
        let total: f64 = raw.iter().map(|(_, w)| w).sum();
        raw.into_iter().map(|(p, w)| (p, w / total)).collect()
    }

    fn density(&self, q: f64) -> f64 {
        match self {
            MomentumDistribution::Gaussian { p0, sigma } => {
                let z = (q - p0) / sigma;
                (-0.5 * z * z).exp()
            }
            MomentumDistribution::Sampled { p, amplitude } => {
                let i = p.partition_point(|&x| x <= q).clamp(1, p.len() - 1) - 1;
                let f = ((q - p[i]) / (p[i + 1] - p[i])).clamp(0.0, 1.0);
                (amplitude[i] * (1.0 - f) + amplitude[i + 1] * f).norm_sqr()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    Tunn,
    Refl,
    All,
}

/// Quadrature over the packet of the transmitted and reflected weights and SWP integrands.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct WavepacketTimes {
    pub w_tunn: f64,
    pub w_refl: f64,
    /// `∫|A|²|∂λT|²dp`, `∫|A|²|∂λR|²dp`.
    pub tunn_sq: f64,
    pub refl_sq: f64,
    /// `∫|A|² Im[∂λX ∂²λX*] dp` per channel; the cube-root numerator of the modified clock.
    pub tunn_cubic: f64,
    pub refl_cubic: f64,
    pub dwell: f64,
}

impl WavepacketTimes {
    pub fn compute(a: &MomentumDistribution, v: &PotentialSpec, region: &Region, mass: f64) -> Result<Self> {
        let mut acc = WavepacketTimes {
            w_tunn: 0.0,
            w_refl: 0.0,
            tunn_sq: 0.0,
            refl_sq: 0.0,
            tunn_cubic: 0.0,
            refl_cubic: 0.0,
            dwell: 0.0,
        };
        for (p, w) in a.weighted_nodes() {
            let c = channel_derivatives(v, region, p, mass)?;
            acc.w_tunn += w * c.t.norm_sqr();
            acc.w_refl += w * c.r.norm_sqr();
            acc.tunn_sq += w * c.dt.value.norm_sqr();
            acc.refl_sq += w * c.dr.value.norm_sqr();
            acc.tunn_cubic += w * (c.dt.value * c.d2t.value.conj()).im;
            acc.refl_cubic += w * (c.dr.value * c.d2r.value.conj()).im;
            acc.dwell += w * (I * (c.t.conj() * c.dt.value + c.r.conj() * c.dr.value)).re;
        }
        Ok(acc)
    }

    fn weight_and_sums(&self, sel: Selection) -> (f64, f64, f64) {
        match sel {
            Selection::Tunn => (self.w_tunn, self.tunn_sq, self.tunn_cubic),
            Selection::Refl => (self.w_refl, self.refl_sq, self.refl_cubic),
            Selection::All => (
                self.w_tunn + self.w_refl,
                self.tunn_sq + self.refl_sq,
                self.tunn_cubic + self.refl_cubic,
            ),
        }
    }

    /// `T_SWP(sel) = [∫|A|²|∂λX|² / W(sel)]^{1/2}`.
    pub fn swp(&self, sel: Selection) -> Result<f64> {
        let (w, sq, _) = self.weight_and_sums(sel);
        if w < AMPLITUDE_FLOOR {
            return Err(Error::PostSelectionImpossible(format!("channel weight {w:.3e}")));
        }
        Ok((sq / w).sqrt())
    }

    /// Time read by the clock prepared in β^j: `[Σ W Re(τ̄ τ̄²*) / W]^{1/3}`.
    pub fn modified_swp(&self, sel: Selection) -> Result<f64> {
        let (w, _, cubic) = self.weight_and_sums(sel);
        if w < AMPLITUDE_FLOOR {
            return Err(Error::PostSelectionImpossible(format!("channel weight {w:.3e}")));
        }
        Ok((cubic / w).cbrt())
    }
}

pub fn swp_time_wavepacket(
    a: &MomentumDistribution,
    v: &PotentialSpec,
    region: &Region,
    sel: Selection,
    mass: f64,
) -> Result<f64> {
    WavepacketTimes::compute(a, v, region, mass)?.swp(sel)
}

/// `|(A1τ1 + A2τ2)/(A1 + A2)|`: the calibrated clock reading for two interfering paths.
pub fn two_path_time(a1: Complex64, tau1: f64, a2: Complex64, tau2: f64) -> Result<f64> {
    Ok(two_path_moments(a1, tau1, a2, tau2)?.0.norm())
}

/// First and second moments of the two-path amplitude distribution.
pub fn two_path_moments(a1: Complex64, tau1: f64, a2: Complex64, tau2: f64) -> Result<(Complex64, Complex64)> {
    let total = a1 + a2;
    if total.norm() <= 1e-15 * a1.norm().max(a2.norm()) || total.norm() == 0.0 {
        return Err(Error::PostSelectionImpossible("A1 + A2 = 0: total destructive interference".into()));
    }
    Ok(((a1 * tau1 + a2 * tau2) / total, (a1 * tau1 * tau1 + a2 * tau2 * tau2) / total))
}

/// Parses a decimal literal such as `-0.499` or `2e-3` into a reduced fraction.
pub fn parse_decimal(s: &str) -> Result<(i128, i128)> {
    let bad = || Error::InvalidInput(format!("not a decimal number: {s:?}"));
    let t = s.trim();
    let (mantissa, exp) = match t.find(['e', 'E']) {
        Some(i) => (&t[..i], t[i + 1..].parse::<i32>().map_err(|_| bad())?),
        None => (t, 0),
    };
    let (neg, digits) = match mantissa.strip_prefix('-') {
        Some(r) => (true, r),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int, frac) = digits.split_once('.').unwrap_or((digits, ""));
    if int.is_empty() && frac.is_empty() || !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let mut num: i128 = format!("{int}{frac}").parse().map_err(|_| bad())?;
    let scale = exp - frac.len() as i32;
    if scale.unsigned_abs() > 30 {
        return Err(bad());
    }
    let mut den: i128 = 1;
    if scale >= 0 {
        num = num.checked_mul(10i128.pow(scale as u32)).ok_or_else(bad)?;
    } else {
        den = 10i128.pow((-scale) as u32);
    }
    if neg {
        num = -num;
    }
    Ok(reduce(num, den))
}

fn reduce(num: i128, den: i128) -> (i128, i128) {
    let (mut a, mut b) = (num.abs(), den.abs());
    while b != 0 {
        (a, b) = (b, a % b);
    }
    let g = a.max(1) * den.signum();
    (num / g, den / g)
}

/// [`two_path_time`] for real amplitudes in exact rational arithmetic; returns `|num/den|`.
pub fn two_path_time_exact(a1: &str, tau1: &str, a2: &str, tau2: &str) -> Result<(i128, i128)> {
    let [a1, t1, a2, t2] = [a1, tau1, a2, tau2].map(parse_decimal);
    let (a1, t1, a2, t2) = (a1?, t1?, a2?, t2?);
    let overflow = || Error::InvalidInput("two-path inputs too large for exact arithmetic".into());
    let mul = |x: (i128, i128), y: (i128, i128)| -> Result<(i128, i128)> {
        Ok(reduce(x.0.checked_mul(y.0).ok_or_else(overflow)?, x.1.checked_mul(y.1).ok_or_else(overflow)?))
    };
    let add = |x: (i128, i128), y: (i128, i128)| -> Result<(i128, i128)> {
        let n = x.0.checked_mul(y.1).and_then(|a| y.0.checked_mul(x.1).and_then(|b| a.checked_add(b)));
        Ok(reduce(n.ok_or_else(overflow)?, x.1.checked_mul(y.1).ok_or_else(overflow)?))
    };
    let total = add(a1, a2)?;
    if total.0 == 0 {
        return Err(Error::PostSelectionImpossible("A1 + A2 = 0: total destructive interference".into()));
    }
    let top = add(mul(a1, t1)?, mul(a2, t2)?)?;
    let q = mul(top, (total.1, total.0))?;
    Ok(reduce(q.0.abs(), q.1))
}

/// One row of the complex-time table.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TimeRow {
    pub p: f64,
    pub tau_tunn: Option<Complex64>,
    pub tau_refl: Option<Complex64>,
    pub tau_dwell: f64,
    pub t_swp_all: f64,
}

pub fn time_row(v: &PotentialSpec, region: &Region, p: f64, mass: f64) -> Result<TimeRow> {
    let c = channel_derivatives(v, region, p, mass)?;
    let tt = log_derivative_time(c.t, c.dt, TimeRole::Tunnelling, "transmission").ok().map(|t| t.value);
    let tr = log_derivative_time(c.r, c.dr, TimeRole::Reflection, "reflection").ok().map(|t| t.value);
    Ok(TimeRow {
        p,
        tau_tunn: tt,
        tau_refl: tr,
        tau_dwell: dwell_from(&c)?,
        t_swp_all: (c.dt.value.norm_sqr() + c.dr.value.norm_sqr()).sqrt(),
    })
}

pub const CSV_HEADER: &str = "p,Re_tau_tunn,Im_tau_tunn,Re_tau_refl,Im_tau_refl,tau_dwell,T_swp_all";

pub fn write_csv<W: Write>(mut out: W, rows: &[TimeRow]) -> Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    let nan = Complex64::new(f64::NAN, f64::NAN);
    for r in rows {
        let tt = r.tau_tunn.unwrap_or(nan);
        let tr = r.tau_refl.unwrap_or(nan);
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            fmt_f64(r.p),
            fmt_f64(tt.re),
            fmt_f64(tt.im),
            fmt_f64(tr.re),
            fmt_f64(tr.im),
            fmt_f64(r.tau_dwell),
            fmt_f64(r.t_swp_all)
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scatter::rectangular_barrier_oracle;
    use std::f64::consts::PI;

    fn free(d: f64) -> (PotentialSpec, Region) {
        (PotentialSpec::zero(), Region::new(0.0, d).unwrap())
    }

    #[test]
    fn derivative_of_exponential() {
        let d = lambda_derivative(|l| Ok(Complex64::new(0.0, l).exp()), Order::First, 1e-3).unwrap();
        assert!((d.value - I).norm() < 1e-10);
    }

    #[test]
    fn second_derivative_of_square() {
        let d = lambda_derivative(|l| Ok(Complex64::new(l * l, 0.0)), Order::Second, 1e-3).unwrap();
        assert!((d.value.re - 2.0).abs() < 1e-9 && d.value.im.abs() < 1e-9);
    }

    #[test]
    fn derivative_rejects_nonfinite() {
        let r = lambda_derivative(|l| Ok(Complex64::new(1.0 / (l - 2e-3), 0.0)), Order::First, 1e-3);
        assert!(matches!(r, Err(Error::NonFinite(_))));
        assert!(lambda_derivative(|_| Ok(Complex64::new(1.0, 0.0)), Order::First, 0.0).is_err());
    }

    #[test]
    fn free_segment_log_derivative() {
        // ∂λ ln T = −iμd/p for a free segment of width d
        let (v, r) = free(2.0);
        let d = lambda_derivative(
            |l| Ok(scattering_amplitudes(&v, &r, l, 1.0, 1.0)?.t),
            Order::First,
            1e-4,
        )
        .unwrap();
        assert!((d.value - Complex64::new(0.0, -2.0)).norm() < 1e-8);
    }

    #[test]
    fn free_tunnelling_time() {
        let (v, r) = free(2.0);
        let t = tunnelling_time(&v, &r, 1.0, 1.0).unwrap();
        assert!((t.value - Complex64::new(2.0, 0.0)).norm() < 1e-8);
        // linear in d, inverse in p
        for (d, p) in [(1.0, 1.0), (4.0, 1.0), (2.0, 0.5), (3.0, 2.0)] {
            let (v, r) = free(d);
            let t = tunnelling_time(&v, &r, p, 1.0).unwrap();
            assert!((t.value.re - d / p).abs() < 1e-7 * d / p);
        }
    }

    /// Oracle path: central differences of the closed form with V0 → V0 + λ.
    fn oracle_log_derivative(v0: f64, d: f64, p: f64, transmitted: bool) -> Complex64 {
        let amp = |l: f64| {
            let o = rectangular_barrier_oracle(v0 + l, d, p, 1.0);
            if transmitted { o.t } else { o.r }
        };
        let h = 1e-4;
        let fd1 = (amp(h) - amp(-h)) / (2.0 * h);
        let fd2 = (amp(2.0 * h) - amp(-2.0 * h)) / (4.0 * h);
        I * (4.0 * fd1 - fd2) / 3.0 / amp(0.0)
    }

    #[test]
    fn barrier_times_match_oracle() {
        let v = PotentialSpec::barrier(1.0, 2.0).unwrap();
        let r = Region::new(0.0, 2.0).unwrap();
        let tt = tunnelling_time(&v, &r, 1.0, 1.0).unwrap().value;
        let tr = reflection_time(&v, &r, 1.0, 1.0).unwrap().value;
        assert!((tt - oracle_log_derivative(1.0, 2.0, 1.0, true)).norm() < 1e-6);
        assert!((tr - oracle_log_derivative(1.0, 2.0, 1.0, false)).norm() < 1e-6);
    }

    #[test]
    fn free_particle_never_reflects() {
        let (v, r) = free(2.0);
        assert!(matches!(reflection_time(&v, &r, 1.0, 1.0), Err(Error::PostSelectionImpossible(_))));
    }

    #[test]
    fn step_reflection_and_dwell() {
        let v = PotentialSpec::step(1.0).unwrap();
        let r = Region::new(0.0, f64::INFINITY).unwrap();
        let tr = reflection_time(&v, &r, 1.0, 1.0).unwrap().value;
        assert!((tr.re - 1.0).abs() < 1e-6 && tr.im.abs() < 1e-6);
        assert!((dwell_time_monochromatic(&v, &r, 1.0, 1.0).unwrap() - 1.0).abs() < 1e-6);
        assert!((swp_time_monochromatic_all(&v, &r, 1.0, 1.0).unwrap() - 1.0).abs() < 1e-6);
        assert!(matches!(tunnelling_time(&v, &r, 1.0, 1.0), Err(Error::PostSelectionImpossible(_))));
    }

    #[test]
    fn free_dwell_and_swp_ratio() {
        for pd in [PI / 2.0, PI, 2.0 * PI, 5.0] {
            let (v, r) = free(pd);
            let dwell = dwell_time_monochromatic(&v, &r, 1.0, 1.0).unwrap();
            let swp = swp_time_monochromatic_all(&v, &r, 1.0, 1.0).unwrap();
            assert!((dwell - pd).abs() < 1e-8 * pd);
            let expect = (1.0 + (pd.sin() / pd).powi(2)).sqrt();
            assert!((swp / dwell - expect).abs() < 1e-6);
        }
    }

    #[test]
    fn dwell_decomposition_on_barriers() {
        for (v0, d, p) in [(1.0, 2.0, 1.0), (2.0, 1.0, 1.5), (0.5, 3.0, 1.2), (-1.0, 2.0, 0.7)] {
            let v = PotentialSpec::barrier(v0, d).unwrap();
            let r = Region::new(0.0, d).unwrap();
            let c = channel_derivatives(&v, &r, p, 1.0).unwrap();
            let dwell = dwell_time_monochromatic(&v, &r, p, 1.0).unwrap();
            let tt = tunnelling_time(&v, &r, p, 1.0).unwrap().value;
            let tr = reflection_time(&v, &r, p, 1.0).unwrap().value;
            let recomposed = c.t.norm_sqr() * tt + c.r.norm_sqr() * tr;
            assert!((recomposed.re - dwell).abs() < 1e-8);
            assert!(dwell >= 0.0);
        }
    }

    #[test]
    fn narrow_packet_reduces_to_monochromatic() {
        let v = PotentialSpec::barrier(1.0, 2.0).unwrap();
        let r = Region::new(0.0, 2.0).unwrap();
        let a = MomentumDistribution::gaussian(1.0, 1e-4).unwrap();
        let w = WavepacketTimes::compute(&a, &v, &r, 1.0).unwrap();
        let tt = tunnelling_time(&v, &r, 1.0, 1.0).unwrap().value.norm();
        let tr = reflection_time(&v, &r, 1.0, 1.0).unwrap().value.norm();
        let all = swp_time_monochromatic_all(&v, &r, 1.0, 1.0).unwrap();
        assert!((w.swp(Selection::Tunn).unwrap() - tt).abs() < 1e-4 * tt);
        assert!((w.swp(Selection::Refl).unwrap() - tr).abs() < 1e-4 * tr);
        assert!((w.swp(Selection::All).unwrap() - all).abs() < 1e-4 * all);
    }

    #[test]
    fn squared_swp_times_add() {
        let v = PotentialSpec::barrier(1.0, 2.0).unwrap();
        let r = Region::new(0.0, 2.0).unwrap();
        let a = MomentumDistribution::gaussian(1.0, 0.1).unwrap();
        let w = WavepacketTimes::compute(&a, &v, &r, 1.0).unwrap();
        let (t, rf, all) = (w.swp(Selection::Tunn).unwrap(), w.swp(Selection::Refl).unwrap(), w.swp(Selection::All).unwrap());
        let combined = (w.w_tunn * t * t + w.w_refl * rf * rf) / (w.w_tunn + w.w_refl);
        assert!((combined - all * all).abs() < 1e-12 * all * all);
        assert!(t.is_finite() && t > 0.0 && rf > 0.0 && all > 0.0);
    }

    #[test]
    fn two_path_values() {
        let c = |x: f64| Complex64::new(x, 0.0);
        assert_eq!(two_path_time(c(0.5), 1.0, c(-0.25), 2.0).unwrap(), 0.0);
        assert!((two_path_time(c(0.5), 1.0, c(-0.499), 2.0).unwrap() - 498.0).abs() < 1e-9);
        assert_eq!(two_path_time(c(0.5), 1.7, c(0.0), 2.0).unwrap(), 1.7);
        assert!(matches!(two_path_time(c(0.5), 1.0, c(-0.5), 2.0), Err(Error::PostSelectionImpossible(_))));
        let (m1, m2) = two_path_moments(c(0.5), 1.0, c(-0.25), 2.0).unwrap();
        assert!((m2 - m1 * m1).norm() > 1e-6);
    }

    #[test]
    fn sampled_distribution_must_be_normalised() {
        assert!(MomentumDistribution::sampled(vec![1.0, 2.0], vec![1.0.into(), 1.0.into()]).is_ok());
        assert!(MomentumDistribution::sampled(vec![1.0, 2.0], vec![2.0.into(), 1.0.into()]).is_err());
    }

    #[test]
    fn csv_row() {
        let (v, r) = free(2.0);
        let row = time_row(&v, &r, 1.0, 1.0).unwrap();
        let mut buf = Vec::new();
        write_csv(&mut buf, &[row]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(CSV_HEADER));
        assert!(text.lines().nth(1).unwrap().contains("NaN"));
    }

    #[test]
    fn exact_two_path() {
        assert_eq!(two_path_time_exact("0.5", "1", "-0.25", "2").unwrap(), (0, 1));
        assert_eq!(two_path_time_exact("0.5", "1", "-0.499", "2").unwrap(), (498, 1));
        assert_eq!(parse_decimal("-2.5e-1").unwrap(), (-1, 4));
        assert!(parse_decimal("1.2.3").is_err());
        assert!(matches!(two_path_time_exact("1", "1", "-1", "2"), Err(Error::PostSelectionImpossible(_))));
    }
}
