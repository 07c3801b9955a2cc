use num_complex::Complex64;
use tunneltime::ctime::{reflection_time, tunnelling_time};
use tunneltime::evolve::{Propagator, Wavefunction};
use tunneltime::taudist::{conditioned_amplitude, stationary_amplitude, Channel, Window};
use tunneltime::{PotentialSpec, Region, SpatialGrid};

fn rel(a: Complex64, b: Complex64) -> f64 {
    (a - b).norm() / b.norm()
}

#[test]
fn stationary_moments_match_lambda_derivative_times() {
    let (v0, d, p) = (1.0, 2.0, 1.0);
    let v = PotentialSpec::barrier(v0, d).unwrap();
    let region = Region::new(0.0, d).unwrap();
    let lambda_max = tunneltime::taudist::default_lambda_max(d / p);
    let t = stationary_amplitude(&v, &region, p, 1.0, Channel::Transmitted, lambda_max, 1024, Window::Hann).unwrap();
    let tau = tunnelling_time(&v, &region, p, 1.0).unwrap().value;
    assert!(rel(t.moment(1).unwrap(), tau) < 1e-3, "{} vs {tau}", t.moment(1).unwrap());
    let r = stationary_amplitude(&v, &region, p, 1.0, Channel::Reflected, lambda_max, 1024, Window::Hann).unwrap();
    let tau = reflection_time(&v, &region, p, 1.0).unwrap().value;
    assert!(rel(r.moment(1).unwrap(), tau) < 1e-3, "{} vs {tau}", r.moment(1).unwrap());
}

#[test]
fn sum_rule_and_support_for_a_propagated_packet() {
    let grid = SpatialGrid::new(-40.0, 40.0, 512).unwrap();
    let v = PotentialSpec::barrier(1.0, 1.0).unwrap();
    let region = Region::new(0.0, 1.0).unwrap();
    let prop = Propagator::with_dt(grid, &v, &region, 0.0, 6.0, 1.0, 0.01).unwrap();
    let psi = Wavefunction::gaussian(grid, -6.0, 1.8, 1.5).unwrap();
    let psi_f = Wavefunction::gaussian(grid, 4.0, 1.8, 2.0).unwrap();
    let dist = conditioned_amplitude(&prop, &psi, &psi_f, None, 256, Window::Hann).unwrap();
    let direct = prop.transition_amplitude(&psi_f, &psi, 0.0).unwrap();
    assert!((dist.integral() - direct).norm() < 1e-6, "{} vs {direct}", dist.integral());
    assert!(dist.leaked_fraction(6.0) < 0.01, "leak {}", dist.leaked_fraction(6.0));
}

#[test]
fn coarse_lambda_sampling_is_rejected() {
    let grid = SpatialGrid::new(-40.0, 40.0, 512).unwrap();
    let prop = Propagator::with_dt(grid, &PotentialSpec::zero(), &Region::new(0.0, 1.0).unwrap(), 0.0, 2.0, 1.0, 0.01).unwrap();
    let psi = Wavefunction::gaussian(grid, -6.0, 1.8, 1.5).unwrap();
    assert!(conditioned_amplitude(&prop, &psi, &psi, Some(1.0), 256, Window::Hann).is_err());
    assert!(conditioned_amplitude(&prop, &psi, &psi, None, 300, Window::Hann).is_err());
}

#[test]
fn closed_transmission_channel_is_a_post_selection_error() {
    let v = PotentialSpec::step(1.0).unwrap();
    let region = Region::new(0.0, 1.0).unwrap();
    let e = stationary_amplitude(&v, &region, 1.0, 1.0, Channel::Transmitted, 40.0, 256, Window::Hann).unwrap_err();
    assert_eq!(e.category(), tunneltime::ErrorCategory::PostSelection);
}
