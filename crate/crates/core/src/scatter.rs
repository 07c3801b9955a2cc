//! Stationary scattering on piecewise-constant potentials.
//!
//! Amplitudes are built by composing per-interface and per-layer scattering
//! matrices (Redheffer star product). Layer propagation factors are
//! `exp(i k w)` with `Im k >= 0`, so every intermediate quantity stays bounded
//! even for opaque segments where transfer-matrix products would grow as
//! `cosh(κ d)`.
//!
//! Phase convention: to the left of the potential the wave is
//! `exp(ipx) + R exp(-ipx)`, to the right `T exp(ipx)`, both in the global
//! coordinate, so free propagation gives `T = 1`.

use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::model::{PotentialSpec, Region};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScatteringResult {
    pub p: f64,
    pub lambda: f64,
    pub t: Complex64,
    pub r: Complex64,
    /// Wavenumber of the medium the transmitted wave ends up in (`p` unless the
    /// last segment is semi-infinite).
    pub k_out: Complex64,
    /// Set when `p²` hit `2μV` of some segment and was nudged off the branch point.
    pub degenerate: bool,
}

impl ScatteringResult {
    pub fn transmission_channel_open(&self) -> bool {
        self.k_out.re > 0.0 && self.k_out.im.abs() < 1e-12 * self.k_out.re.max(1.0)
    }

    /// Probability current carried by the transmitted wave, relative to the incident one.
    pub fn transmission_probability(&self) -> f64 {
        if self.transmission_channel_open() {
            self.t.norm_sqr() * self.k_out.re / self.p
        } else {
            0.0
        }
    }

    pub fn reflection_probability(&self) -> f64 {
        self.r.norm_sqr()
    }

    pub fn unitarity_defect(&self) -> f64 {
        (self.transmission_probability() + self.reflection_probability() - 1.0).abs()
    }
}

/// Amplitudes for incidence from both sides.
#[derive(Debug, Clone, Copy)]
pub struct TwoSided {
    pub left: ScatteringResult,
    pub t_from_right: Complex64,
    pub r_from_right: Complex64,
}

/// 2×2 scattering matrix relating outgoing (left-moving on the left, right-moving
/// on the right) to incoming amplitudes, all referenced at the block's edges.
#[derive(Debug, Clone, Copy)]
struct SBlock {
    r: Complex64,
    t: Complex64,
    r_back: Complex64,
    t_back: Complex64,
}

impl SBlock {
    fn identity() -> Self {
        SBlock { r: 0.0.into(), t: 1.0.into(), r_back: 0.0.into(), t_back: 1.0.into() }
    }

    fn interface(k_left: Complex64, k_right: Complex64) -> Self {
        let s = k_left + k_right;
        SBlock {
            r: (k_left - k_right) / s,
            t: 2.0 * k_left / s,
            r_back: (k_right - k_left) / s,
            t_back: 2.0 * k_right / s,
        }
    }

    fn layer(k: Complex64, width: f64) -> Self {
        let phase = (I * k * width).exp();
        SBlock { r: 0.0.into(), t: phase, r_back: 0.0.into(), t_back: phase }
    }

    /// Redheffer star product: `self` on the left, `next` on the right.
    fn star(self, next: SBlock) -> SBlock {
        let denom = Complex64::new(1.0, 0.0) - self.r_back * next.r;
        SBlock {
            t: next.t * self.t / denom,
            r: self.r + self.t_back * next.r * self.t / denom,
            t_back: self.t_back * next.t_back / denom,
            r_back: next.r_back + next.t * self.r_back * next.t_back / denom,
        }
    }
}

fn wavenumber(p: f64, height: f64, mass: f64) -> (Complex64, bool) {
    let k2 = p * p - 2.0 * mass * height;
    let scale = (p * p).max(1.0);
    if k2.abs() <= 1e-14 * scale {
        return (Complex64::new(1e-12 * scale, 0.0).sqrt(), true);
    }
    (Complex64::new(k2, 0.0).sqrt(), false)
}

fn check_inputs(v: &PotentialSpec, p: f64, mass: f64) -> Result<()> {
    if !(p > 0.0 && p.is_finite()) {
        return Err(Error::InvalidInput(format!("momentum must be positive, got {p}")));
    }
    if !(mass > 0.0) {
        return Err(Error::InvalidInput(format!("mass must be positive, got {mass}")));
    }
    if !v.is_static() {
        return Err(Error::InvalidInput("stationary scattering needs a static potential".into()));
    }
    Ok(())
}

/// Amplitudes of a static potential (no λ shift) for incidence from both sides.
pub fn two_sided(v: &PotentialSpec, p: f64, mass: f64) -> Result<TwoSided> {
    check_inputs(v, p, mass)?;
    let kp = Complex64::new(p, 0.0);
    if v.segments.is_empty() {
        let left = ScatteringResult { p, lambda: 0.0, t: 1.0.into(), r: 0.0.into(), k_out: kp, degenerate: false };
        return Ok(TwoSided { left, t_from_right: 1.0.into(), r_from_right: 0.0.into() });
    }

    // Contiguous layers with explicit zero-height gaps.
    let mut layers: Vec<(f64, f64, f64)> = Vec::with_capacity(2 * v.segments.len());
    for s in &v.segments {
        if let Some(&(_, prev_hi, _)) = layers.last() {
            if s.x_lo > prev_hi {
                layers.push((prev_hi, s.x_lo, 0.0));
            }
        }
        layers.push((s.x_lo, s.x_hi, s.height));
    }
    let x_first = layers[0].0;
    let semi_infinite = !layers[layers.len() - 1].1.is_finite();
    let x_last = if semi_infinite { layers[layers.len() - 1].0 } else { layers[layers.len() - 1].1 };

    let mut degenerate = false;
    let mut s = SBlock::identity();
    let mut k_prev = kp;
    for &(lo, hi, h) in &layers {
        let (k, deg) = wavenumber(p, h, mass);
        degenerate |= deg;
        s = s.star(SBlock::interface(k_prev, k));
        if hi.is_finite() {
            s = s.star(SBlock::layer(k, hi - lo));
        }
        k_prev = k;
    }
    let k_out = if semi_infinite {
        k_prev
    } else {
        s = s.star(SBlock::interface(k_prev, kp));
        kp
    };

    let shift = (I * p * (x_first - x_last)).exp();
    let t = s.t * shift;
    let r = s.r * (2.0 * I * p * x_first).exp();
    let t_from_right = s.t_back * shift;
    let r_from_right = s.r_back * (-2.0 * I * p * x_last).exp();
    for z in [t, r, t_from_right, r_from_right] {
        if !(z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::NonFinite(format!("scattering amplitude at p = {p}")));
        }
    }
    let left = ScatteringResult { p, lambda: 0.0, t, r, k_out, degenerate };
    Ok(TwoSided { left, t_from_right, r_from_right })
}

/// T(p, λ) and R(p, λ) for `V + λΘ_Ω`.
pub fn scattering_amplitudes(
    v: &PotentialSpec,
    region: &Region,
    lambda: f64,
    p: f64,
    mass: f64,
) -> Result<ScatteringResult> {
    check_inputs(v, p, mass)?;
    let composite = v.composite(region, lambda);
    let mut res = two_sided(&composite, p, mass)?.left;
    res.lambda = lambda;
    Ok(res)
}

/// `sin(q d)/q` as an entire function of `q²`.
fn sinc_q(q2: Complex64, d: f64) -> Complex64 {
    let z = q2 * d * d;
    if z.norm() < 1e-3 {
        // d·(1 − z/6 + z²/120 − z³/5040)
        d * (Complex64::new(1.0, 0.0) - z / 6.0 + z * z / 120.0 - z * z * z / 5040.0)
    } else {
        let q = q2.sqrt();
        (q * d).sin() / q
    }
}

/// Closed-form amplitudes for a rectangular barrier of height `v0` on [0, d].
/// Written in terms of `q² = p² − 2μV0` only, so it is continuous across `E = V0`.
pub fn rectangular_barrier_oracle(v0: f64, d: f64, p: f64, mass: f64) -> ScatteringResult {
    let q2 = Complex64::new(p * p - 2.0 * mass * v0, 0.0);
    let cos_qd = (q2.sqrt() * d).cos();
    let s = sinc_q(q2, d);
    let denom = cos_qd - I * (q2 + p * p) / (2.0 * p) * s;
    let t = (-I * p * d).exp() / denom;
    let r = I * (q2 - p * p) / (2.0 * p) * s / denom;
    ScatteringResult { p, lambda: 0.0, t, r, k_out: p.into(), degenerate: false }
}

/// Reflection amplitude of a step of height `v0` at x = 0 in the total-reflection regime.
pub fn step_reflection_oracle(v0: f64, p: f64, mass: f64) -> Result<Complex64> {
    let k2 = 2.0 * mass * v0 - p * p;
    if !(p > 0.0) || !(k2 > 0.0) {
        return Err(Error::InvalidInput(format!(
            "step oracle needs 0 < p² < 2μV0, got p = {p}, V0 = {v0}"
        )));
    }
    let kappa = k2.sqrt();
    Ok(Complex64::new(p, -kappa) / Complex64::new(p, kappa))
}

/// Amplitudes over a grid of (p, λ) pairs, evaluated in parallel and returned in input order.
pub fn sweep(
    v: &PotentialSpec,
    region: &Region,
    points: &[(f64, f64)],
    mass: f64,
) -> Result<Vec<ScatteringResult>> {
    points
        .par_iter()
        .map(|&(p, lambda)| scattering_amplitudes(v, region, lambda, p, mass))
        .collect()
}

pub const CSV_HEADER: &str = "p,lambda,ReT,ImT,ReR,ImR,unitarity_defect";

pub fn write_csv<W: Write>(mut out: W, rows: &[ScatteringResult]) -> Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            fmt_f64(r.p),
            fmt_f64(r.lambda),
            fmt_f64(r.t.re),
            fmt_f64(r.t.im),
            fmt_f64(r.r.re),
            fmt_f64(r.r.im),
            fmt_f64(r.unitarity_defect())
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Segment;

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn free_particle_convention() {
        let r = scattering_amplitudes(&PotentialSpec::zero(), &Region::new(0.0, 2.0).unwrap(), 0.0, 1.0, 1.0)
            .unwrap();
        assert!(close(r.t, 1.0.into(), 1e-15));
        assert!(close(r.r, 0.0.into(), 1e-15));
    }

    #[test]
    fn barrier_matches_oracle() {
        let v = PotentialSpec::barrier(1.0, 2.0).unwrap();
        let r = scattering_amplitudes(&v, &Region::new(0.0, 2.0).unwrap(), 0.0, 1.0, 1.0).unwrap();
        let o = rectangular_barrier_oracle(1.0, 2.0, 1.0, 1.0);
        assert!(close(r.t, o.t, 1e-10), "{} vs {}", r.t, o.t);
        assert!(close(r.r, o.r, 1e-10), "{} vs {}", r.r, o.r);
    }

    #[test]
    fn oracle_against_dense_slicing() {
        // 10⁴ slices of the same barrier, composed numerically: independent of the closed form.
        let n = 10_000;
        let d = 2.0;
        let segs: Vec<Segment> =
            (0..n).map(|i| Segment::new(d * i as f64 / n as f64, d * (i + 1) as f64 / n as f64, 1.0)).collect();
        let sliced = two_sided(&PotentialSpec::new(segs).unwrap(), 1.0, 1.0).unwrap().left;
        let o = rectangular_barrier_oracle(1.0, d, 1.0, 1.0);
        assert!(close(sliced.t, o.t, 1e-8));
        assert!(close(sliced.r, o.r, 1e-8));
    }

    #[test]
    fn oracle_limits() {
        let o = rectangular_barrier_oracle(0.0, 2.0, 1.0, 1.0);
        assert!(close(o.t, 1.0.into(), 1e-15) && close(o.r, 0.0.into(), 1e-15));
        let o = rectangular_barrier_oracle(1.0, 2.0, 1.0, 1.0);
        assert!((o.t.norm_sqr() + o.r.norm_sqr() - 1.0).abs() < 1e-14);
        // continuity across E = V0
        let p0 = 2f64.sqrt();
        let at = rectangular_barrier_oracle(1.0, 2.0, p0, 1.0);
        let below = rectangular_barrier_oracle(1.0, 2.0, p0 - 1e-7, 1.0);
        let above = rectangular_barrier_oracle(1.0, 2.0, p0 + 1e-7, 1.0);
        assert!(close(at.t, below.t, 1e-6) && close(at.t, above.t, 1e-6));
        assert!((at.t.norm_sqr() + at.r.norm_sqr() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn opaque_barrier_is_finite() {
        let v = PotentialSpec::barrier(1.0, 20.0).unwrap();
        let r = two_sided(&v, 1.0, 1.0).unwrap().left;
        let o = rectangular_barrier_oracle(1.0, 20.0, 1.0, 1.0);
        // κ = 1: |T| = 1/|cosh 20 + 0·sinh 20| ≈ 2e^{-20}
        let expect = 1.0 / 20f64.cosh();
        assert!((r.t.norm() / expect - 1.0).abs() < 1e-10);
        assert!(close(r.t, o.t, 1e-12 * expect.max(1e-300) + 1e-20));
        assert!(r.unitarity_defect() < 1e-12);
        for kd in [30.0, 50.0] {
            let v = PotentialSpec::barrier(1.0, kd).unwrap();
            let r = two_sided(&v, 1.0, 1.0).unwrap().left;
            assert!(r.t.norm().is_finite() && r.unitarity_defect() < 1e-10);
        }
    }

    #[test]
    fn step_oracle() {
        let r = step_reflection_oracle(1.0, 1.0, 1.0).unwrap();
        assert!(close(r, Complex64::new(0.0, -1.0), 1e-15));
        let r = step_reflection_oracle(1.0, 1e-9, 1.0).unwrap();
        assert!(close(r, (-1.0).into(), 1e-8));
        assert!(step_reflection_oracle(1.0, 2.0, 1.0).is_err());
        let s = scattering_amplitudes(
            &PotentialSpec::step(1.0).unwrap(),
            &Region::new(0.0, f64::INFINITY).unwrap(),
            0.0,
            1.0,
            1.0,
        )
        .unwrap();
        assert!(close(s.r, Complex64::new(0.0, -1.0), 1e-14));
        assert!(!s.transmission_channel_open());
    }

    #[test]
    fn degenerate_momentum_is_flagged() {
        let v = PotentialSpec::barrier(0.5, 2.0).unwrap();
        let r = two_sided(&v, 1.0, 1.0).unwrap().left;
        assert!(r.degenerate);
        let o = rectangular_barrier_oracle(0.5, 2.0, 1.0, 1.0);
        assert!(close(r.t, o.t, 1e-9));
        assert!(r.unitarity_defect() < 1e-10);
    }

    #[test]
    fn rejects_nonpositive_momentum() {
        let v = PotentialSpec::zero();
        assert!(two_sided(&v, 0.0, 1.0).is_err());
        assert!(two_sided(&v, -1.0, 1.0).is_err());
    }

    #[test]
    fn csv_layout() {
        let v = PotentialSpec::barrier(1.0, 2.0).unwrap();
        let rows = sweep(&v, &Region::new(0.0, 2.0).unwrap(), &[(1.0, 0.0), (2.0, 0.1)], 1.0).unwrap();
        let mut buf = Vec::new();
        write_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[1].split(',').count(), 7);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_symmetric() -> impl Strategy<Value = PotentialSpec> {
            prop::collection::vec((0.05f64..1.5, -2.0f64..2.0), 1..4).prop_map(|half| {
                let mut segs = Vec::new();
                let mut x = 0.0;
                for &(w, h) in &half {
                    segs.push(Segment::new(x, x + w, h));
                    segs.push(Segment::new(-x - w, -x, h));
                    x += w;
                }
                segs.sort_by(|a, b| a.x_lo.total_cmp(&b.x_lo));
                PotentialSpec::new(segs).unwrap()
            })
        }

        proptest! {
            #[test]
            fn reciprocity_on_symmetric(v in arb_symmetric(), p in 0.1f64..3.0) {
                let s = two_sided(&v, p, 1.0).unwrap();
                prop_assert!((s.left.t - s.t_from_right).norm() < 1e-12);
            }
        }
    }
}
