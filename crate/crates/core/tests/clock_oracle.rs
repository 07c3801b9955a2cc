//! The clock readout checked against a direct particle ⊗ spin-½ evolution.
//!
//! The oracle keeps a two-component spinor in the basis where the clock
//! Hamiltonian `ω_L Ĵz Θ_Ω` is off-diagonal (`ω_L σx / 2`), applies the 2×2
//! potential exponential pointwise, and rotates back only for the readout.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;
use tunneltime::clock::{ClockExperiment, Postselector, SpinState};
use tunneltime::evolve::{Propagator, Wavefunction};
use tunneltime::{PotentialSpec, Region, SpatialGrid};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Spinor components in the σx-diagonal frame after `U(t2, t1)`.
fn spinor_evolution(prop: &Propagator, psi: &Wavefunction, gamma: [Complex64; 2], omega_l: f64) -> [Vec<Complex64>; 2] {
    let grid = *prop.grid();
    let n = grid.n_points;
    let mass = prop.mass();
    let dt = prop.dt();
    let v = prop.potential().sample(&grid, 0.0).unwrap();
    let w = prop.omega_weights();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let k = grid.wavenumbers();
    let kin = |tau: f64| -> Vec<Complex64> {
        k.iter().map(|k| Complex64::from_polar(1.0 / n as f64, -k * k / (2.0 * mass) * tau)).collect()
    };
    let (half, full) = (kin(0.5 * dt), kin(dt));
    let apply_kin = |s: &mut Vec<Complex64>, ph: &[Complex64]| {
        fwd.process(s);
        s.iter_mut().zip(ph).for_each(|(c, p)| *c *= p);
        inv.process(s);
    };
    // Hadamard frame: |±⟩ = (|↑⟩ ± |↓⟩)/√2, in which Ĵz = σx/2
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let mut a: Vec<Complex64> = psi.values.iter().map(|p| p * (gamma[0] + gamma[1]) * r).collect();
    let mut b: Vec<Complex64> = psi.values.iter().map(|p| p * (gamma[0] - gamma[1]) * r).collect();
    apply_kin(&mut a, &half);
    apply_kin(&mut b, &half);
    for step in 0..prop.n_steps() {
        for i in 0..n {
            let phase = Complex64::from_polar(1.0, -v[i] * dt);
            let theta = 0.5 * omega_l * w[i] * dt;
            let (c, s) = (theta.cos(), theta.sin());
            let (x, y) = (a[i], b[i]);
            a[i] = phase * (c * x - I * s * y);
            b[i] = phase * (c * y - I * s * x);
        }
        let ph = if step + 1 == prop.n_steps() { &half } else { &full };
        apply_kin(&mut a, ph);
        apply_kin(&mut b, ph);
    }
    [a, b]
}

#[test]
fn spin_half_clock_matches_monolithic_evolution() {
    let grid = SpatialGrid::new(-40.0, 40.0, 1024).unwrap();
    let region = Region::new(0.0, 1.25).unwrap();
    let v = PotentialSpec::barrier(1.5, 1.25).unwrap();
    let prop = Propagator::with_dt(grid, &v, &region, 0.0, 8.0, 1.0, 0.005).unwrap();
    let psi = Wavefunction::gaussian(grid, -10.0, 2.0, 2.0).unwrap();
    let gamma = SpinState::rotated(1, 0.0).unwrap();
    let g = [gamma.amplitudes[0], gamma.amplitudes[1]];
    let exp = ClockExperiment::new(prop.clone(), psi.clone(), gamma.clone(), Postselector::All).unwrap();
    let dx = grid.dx();
    for omega_l in [0.0, 0.05, 0.4] {
        let readout = exp.readout(omega_l).unwrap();
        let [a, b] = spinor_evolution(&prop, &psi, g, omega_l);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let up: Vec<Complex64> = a.iter().zip(&b).map(|(a, b)| (a + b) * r).collect();
        let down: Vec<Complex64> = a.iter().zip(&b).map(|(a, b)| (a - b) * r).collect();
        let mut probs = Vec::new();
        for beta in &exp.basis().states {
            let p: f64 = up
                .iter()
                .zip(&down)
                .map(|(u, d)| (beta.amplitudes[0].conj() * u + beta.amplitudes[1].conj() * d).norm_sqr())
                .sum::<f64>()
                * dx;
            probs.push(p);
        }
        let total: f64 = probs.iter().sum();
        assert!((total - 1.0).abs() < 1e-10, "norm {total}");
        for (k, (p, q)) in probs.iter().zip(&readout.probabilities).enumerate() {
            assert!((p / total - q).abs() < 1e-10, "ω_L = {omega_l}, k = {k}: {p} vs {q}");
        }
    }
}

#[test]
fn clock_times_span_one_period() {
    let basis = tunneltime::clock::ClockBasis::new(2).unwrap();
    let t = basis.times(0.5);
    assert_eq!(t.len(), 3);
    assert!((t[0]).abs() < 1e-15);
    assert!((t[2] - 2.0 * 2.0 * PI * 2.0 / 3.0).abs() < 1e-12);
}
