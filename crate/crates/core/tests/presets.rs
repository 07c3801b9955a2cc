use tunneltime::experiments::{self, Fidelity, CATALOG};

#[test]
fn every_preset_completes_in_smoke_mode() {
    for &(id, name, _, _) in CATALOG.iter() {
        let outcome = experiments::run(id, Fidelity::Smoke, 1).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(outcome.name, name);
        assert!(!outcome.checks.is_empty());
        println!("{}", outcome.summary());
    }
}

#[test]
fn names_round_trip() {
    for &(id, name, _, _) in CATALOG.iter() {
        assert_eq!(experiments::preset_id(name), Some(id));
        assert_eq!(experiments::preset_name(id), Some(name));
    }
}
