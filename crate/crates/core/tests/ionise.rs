use tunneltime::clock::{default_omega_grid, dwell_probe_state, ClockExperiment, Postselector};
use tunneltime::ionise::{Ionisation, IonisationModel};
use tunneltime::{Region, SpatialGrid};

/// A shorter run of the default fixture; same physics, looser completeness.
fn short_model() -> IonisationModel {
    IonisationModel {
        t2: 40.0,
        grid: SpatialGrid { x_min: -20.0, x_max: 236.0, n_points: 4096 },
        buffer: 4.0,
        ..IonisationModel::default_fixture()
    }
}

#[test]
fn pulsed_run_is_consistent() {
    let ion = Ionisation::new(short_model()).unwrap();
    let t = ion.times(None).unwrap();
    assert!(t.completeness_defect.abs() < 1e-3, "defect {}", t.completeness_defect);
    assert!(t.w_ion > 0.0 && t.w_ion < 1.0);
    let tf = ion.t_free(&t).unwrap();
    let lhs = t.t_all.powi(2);
    let rhs = (1.0 - t.w_ion) * t.t_bound.powi(2) + t.w_ion * tf * tf;
    assert!((lhs - rhs).abs() < 1e-12 * lhs);
    let sw = ion.stopwatch_dwell().unwrap();
    assert!((t.tau_dwell - sw).abs() < 1e-3 * sw, "{} vs {sw}", t.tau_dwell);

    // the spin-1 clock read without post-selection recovers the same dwell time
    let duration = ion.model.t2 - ion.model.t1;
    let exp = ClockExperiment::new(ion.prop.clone(), ion.psi0.clone(), dwell_probe_state(2).unwrap(), Postselector::All)
        .unwrap();
    let probe = exp.dwell_probe(&default_omega_grid(2, duration, 3)).unwrap();
    assert!((probe.value - sw).abs() < 0.01 * sw, "{} vs {sw}", probe.value);
}

#[test]
fn schema_rejects_unknown_fields() {
    let mut v = serde_json::to_value(IonisationModel::default_fixture()).unwrap();
    v["pulse_width"] = serde_json::json!(3.0);
    assert!(serde_json::from_value::<IonisationModel>(v).is_err());
}

#[test]
fn remote_region_sees_nothing() {
    let m = IonisationModel {
        t2: 4.0,
        f: 0.0,
        grid: SpatialGrid { x_min: -6.0, x_max: 58.0, n_points: 1024 },
        buffer: 2.0,
        omega: Some(Region::new(40.0, 45.0).unwrap()),
        ..IonisationModel::default_fixture()
    };
    let t = Ionisation::new(m).unwrap().times(None).unwrap();
    assert!(t.tau_bound.norm() < 1e-6);
    assert!(t.tau_dwell.abs() < 1e-8);
}
