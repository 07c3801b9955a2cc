use num_complex::Complex64;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use tunneltime::evolve::{Propagator, Wavefunction};
use tunneltime::experiments::conditioned_identity_defect;
use tunneltime::{PotentialSpec, Region, SpatialGrid};

fn small_grid() -> SpatialGrid {
    SpatialGrid::new(-20.0, 20.0, 256).unwrap()
}

fn random_state(rng: &mut StdRng) -> Wavefunction {
    let grid = small_grid();
    let values = grid
        .xs()
        .into_iter()
        .map(|x| {
            let env = (-(x / 5.0).powi(2)).exp();
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * env
        })
        .collect();
    Wavefunction::new(grid, values, 0.0).unwrap().normalized().unwrap()
}

fn barrier_prop(grid: SpatialGrid, region: Region, duration: f64) -> Propagator {
    let v = PotentialSpec::barrier(1.0, 1.0).unwrap();
    Propagator::with_dt(grid, &v, &region, 0.0, duration, 1.0, 0.01).unwrap().without_edge_check()
}

#[test]
fn conditioned_state_identity_on_rough_random_states() {
    let mut rng = StdRng::seed_from_u64(7);
    let prop = barrier_prop(small_grid(), Region::new(0.0, 1.0).unwrap(), 1.0);
    for _ in 0..3 {
        let defect = conditioned_identity_defect(&prop, &random_state(&mut rng)).unwrap();
        assert!(defect < 1e-6, "defect {defect}");
    }
}

#[test]
fn stopwatch_equals_operator_form() {
    let grid = SpatialGrid::new(-40.0, 40.0, 1024).unwrap();
    let psi = Wavefunction::gaussian(grid, -8.0, 1.5, 1.5).unwrap();
    let prop = barrier_prop(grid, Region::new(0.0, 1.0).unwrap(), 8.0);
    let sw = prop.dwell_time_stopwatch(&psi).unwrap();
    let op = prop.dwell_time_operator(&psi).unwrap();
    assert!((sw - op).abs() < 1e-6 * sw, "{sw} vs {op}");
    assert!(sw > 0.0 && sw <= 8.0);
}

#[test]
fn whole_grid_and_remote_regions() {
    let grid = SpatialGrid::new(-40.0, 40.0, 1024).unwrap();
    let psi = Wavefunction::gaussian(grid, -8.0, 1.5, 1.5).unwrap();
    let whole = barrier_prop(grid, Region::whole(&grid), 5.0);
    assert!((whole.dwell_time_stopwatch(&psi).unwrap() - 5.0).abs() < 1e-6);
    assert!((whole.dwell_time_operator(&psi).unwrap() - 5.0).abs() < 1e-6);
    // free motion: the barrier edges would scatter a small fast tail towards Ω
    let remote = Propagator::with_dt(grid, &PotentialSpec::zero(), &Region::new(30.0, 35.0).unwrap(), 0.0, 5.0, 1.0, 0.01)
        .unwrap();
    let r = remote.dwell_time_stopwatch(&psi).unwrap();
    assert!(r.abs() < 1e-6, "remote {r}");
    let states = remote.conditioned_states(&psi, 1, None).unwrap();
    let norm: f64 = states[1].values.iter().map(|v| v.norm_sqr()).sum::<f64>() * grid.dx();
    assert!(norm.sqrt() < 1e-6, "‖ψ1‖ {}", norm.sqrt());
}

#[test]
fn unconditioned_final_state_gives_stopwatch() {
    let grid = SpatialGrid::new(-40.0, 40.0, 1024).unwrap();
    let psi = Wavefunction::gaussian(grid, -8.0, 1.5, 1.5).unwrap();
    let prop = barrier_prop(grid, Region::new(0.0, 1.0).unwrap(), 8.0);
    let psi_f = prop.propagate(&psi, 0.0).unwrap();
    let t = prop.complex_time_spacetime_integral(&psi, &psi_f).unwrap();
    let sw = prop.dwell_time_stopwatch(&psi).unwrap();
    assert!((t.value.re - sw).abs() < 1e-6 && t.value.im.abs() < 1e-6, "{} vs {sw}", t.value);
}
