use proptest::prelude::*;
use tunneltime::ctime::{dwell_time_monochromatic, swp_time_monochromatic_all, tunnelling_time};
use tunneltime::{rectangular_barrier_oracle, scattering_amplitudes, PotentialSpec, Region, Segment};

fn barrier_strategy() -> impl Strategy<Value = Vec<Segment>> {
    prop::collection::vec((0.05f64..1.5, -2.0f64..4.0), 1..6).prop_map(|parts| {
        let mut x = 0.0;
        parts
            .into_iter()
            .map(|(w, h)| {
                let s = Segment::new(x, x + w, h);
                x += w;
                s
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn flux_is_conserved(segments in barrier_strategy(), p in 0.05f64..4.0) {
        let v = PotentialSpec::new(segments).unwrap();
        let region = Region::new(0.0, 0.5).unwrap();
        let s = scattering_amplitudes(&v, &region, 0.0, p, 1.0).unwrap();
        prop_assert!(s.unitarity_defect().abs() < 1e-10, "defect {}", s.unitarity_defect());
    }

    #[test]
    fn rectangular_barrier_matches_closed_form(v0 in 0.1f64..5.0, d in 0.1f64..3.0, p in 0.1f64..4.0) {
        let v = PotentialSpec::barrier(v0, d).unwrap();
        let s = scattering_amplitudes(&v, &Region::new(0.0, d).unwrap(), 0.0, p, 1.0).unwrap();
        let o = rectangular_barrier_oracle(v0, d, p, 1.0);
        prop_assert!((s.t - o.t).norm() < 1e-9 * (1.0 + o.t.norm()));
        prop_assert!((s.r - o.r).norm() < 1e-9);
    }

    #[test]
    fn dwell_never_exceeds_swp_all(v0 in 0.0f64..3.0, d in 0.2f64..2.0, p in 0.3f64..3.0) {
        let v = PotentialSpec::barrier(v0, d).unwrap();
        let region = Region::new(0.0, d).unwrap();
        let dwell = dwell_time_monochromatic(&v, &region, p, 1.0).unwrap();
        let swp = swp_time_monochromatic_all(&v, &region, p, 1.0).unwrap();
        prop_assert!(dwell >= 0.0);
        prop_assert!(dwell <= swp * (1.0 + 1e-6));
    }
}

#[test]
fn free_segment_time_is_classical() {
    for (d, p) in [(1.0, 0.5), (2.0, 1.0), (0.3, 3.0)] {
        let region = Region::new(0.0, d).unwrap();
        let t = tunnelling_time(&PotentialSpec::zero(), &region, p, 1.0).unwrap();
        assert!((t.value.re - d / p).abs() < 1e-6 * d / p, "{} vs {}", t.value.re, d / p);
        assert!(t.value.im.abs() < 1e-8);
    }
}

#[test]
fn tunnelling_time_matches_differentiated_oracle() {
    let (v0, d, p) = (1.0, 2.0, 1.0);
    let t = tunnelling_time(&PotentialSpec::barrier(v0, d).unwrap(), &Region::new(0.0, d).unwrap(), p, 1.0).unwrap();
    // i ∂λ ln T with V0 → V0 + λ, by a 4th-order central difference on the closed form
    let h = 1e-3;
    let lt = |l: f64| rectangular_barrier_oracle(v0 + l, d, p, 1.0).t.ln();
    let d1 = (8.0 * (lt(h) - lt(-h)) - (lt(2.0 * h) - lt(-2.0 * h))) / (12.0 * h);
    let oracle = num_complex::Complex64::new(0.0, 1.0) * d1;
    assert!((t.value - oracle).norm() < 1e-6, "{} vs {oracle}", t.value);
}
