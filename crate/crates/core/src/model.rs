//! Potentials, the region of interest and spatial grids.
//!
//! Units: ħ = 1 throughout, the particle mass defaults to 1. Potentials are
//! piecewise constant; outside the listed segments the potential vanishes.
//! A segment may carry a label, and the optional schedule maps labels to an
//! additive, time-dependent height offset.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Units {
    pub mass: f64,
}

impl Default for Units {
    fn default() -> Self {
        Units { mass: 1.0 }
    }
}

impl Units {
    pub fn new(mass: f64) -> Result<Self> {
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::InvalidInput(format!("mass must be positive, got {mass}")));
        }
        Ok(Units { mass })
    }
}

/// The region of interest Ω = [a, b]. Either end may be infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Region {
    pub a: f64,
    pub b: f64,
}

impl Region {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if a.is_nan() || b.is_nan() || !(a < b) {
            return Err(Error::InvalidInput(format!("region requires a < b, got [{a}, {b}]")));
        }
        Ok(Region { a, b })
    }

    /// Indicator Θ_Ω(x).
    pub fn contains(&self, x: f64) -> bool {
        x >= self.a && x <= self.b
    }

    pub fn width(&self) -> f64 {
        self.b - self.a
    }

    /// The whole extent of a grid, which forces every path to spend the full duration in Ω.
    pub fn whole(grid: &SpatialGrid) -> Self {
        Region { a: grid.x_min, b: grid.x_max }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub x_lo: f64,
    pub x_hi: f64,
    pub height: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl Segment {
    pub fn new(x_lo: f64, x_hi: f64, height: f64) -> Self {
        Segment { x_lo, x_hi, height, label: None }
    }

    pub fn labelled(x_lo: f64, x_hi: f64, height: f64, label: &str) -> Self {
        Segment { x_lo, x_hi, height, label: Some(label.to_owned()) }
    }

    pub fn width(&self) -> f64 {
        self.x_hi - self.x_lo
    }

    fn contains(&self, x: f64) -> bool {
        x >= self.x_lo && x < self.x_hi
    }
}

/// Additive height offset as a function of time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum HeightProfile {
    /// Linear interpolation between samples; defined only on [times[0], times[last]].
    Samples { times: Vec<f64>, offsets: Vec<f64> },
    /// `amplitude · sin²(π (t − t_on)/(t_off − t_on))` inside the window, zero outside.
    /// Continuously differentiable, defined for all t.
    RaisedCosine { amplitude: f64, t_on: f64, t_off: f64 },
}

impl HeightProfile {
    fn validate(&self) -> Result<()> {
        match self {
            HeightProfile::Samples { times, offsets } => {
                if times.is_empty() || times.len() != offsets.len() {
                    return Err(Error::InvalidInput(
                        "schedule samples need equal, non-zero numbers of times and offsets".into(),
                    ));
                }
                if times.windows(2).any(|w| !(w[0] < w[1])) {
                    return Err(Error::InvalidInput("schedule times must increase strictly".into()));
                }
                if times.iter().chain(offsets).any(|v| !v.is_finite()) {
                    return Err(Error::InvalidInput("schedule samples must be finite".into()));
                }
            }
            HeightProfile::RaisedCosine { amplitude, t_on, t_off } => {
                if !amplitude.is_finite() || !(t_on < t_off) {
                    return Err(Error::InvalidInput("raised-cosine pulse needs t_on < t_off".into()));
                }
            }
        }
        Ok(())
    }

    pub fn domain(&self) -> (f64, f64) {
        match self {
            HeightProfile::Samples { times, .. } => (times[0], times[times.len() - 1]),
            HeightProfile::RaisedCosine { .. } => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    /// Largest |offset| the profile reaches.
    pub fn max_abs(&self) -> f64 {
        match self {
            HeightProfile::Samples { offsets, .. } => offsets.iter().map(|o| o.abs()).fold(0.0, f64::max),
            HeightProfile::RaisedCosine { amplitude, .. } => amplitude.abs(),
        }
    }

    pub fn offset(&self, t: f64) -> Result<f64> {
        let (lo, hi) = self.domain();
        if t < lo || t > hi {
            return Err(Error::ScheduleDomain { t, lo, hi });
        }
        Ok(match self {
            HeightProfile::Samples { times, offsets } => {
                if times.len() == 1 {
                    return Ok(offsets[0]);
                }
                let i = match times.partition_point(|&s| s <= t) {
                    0 => 0,
                    i if i >= times.len() => times.len() - 2,
                    i => i - 1,
                };
                let f = (t - times[i]) / (times[i + 1] - times[i]);
                offsets[i] + f * (offsets[i + 1] - offsets[i])
            }
            HeightProfile::RaisedCosine { amplitude, t_on, t_off } => {
                if t <= *t_on || t >= *t_off {
                    0.0
                } else {
                    let s = (PI * (t - t_on) / (t_off - t_on)).sin();
                    amplitude * s * s
                }
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSpec {
    pub segments: Vec<Segment>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub schedule: BTreeMap<String, HeightProfile>,
}

impl PotentialSpec {
    pub fn new(segments: Vec<Segment>) -> Result<Self> {
        Self::with_schedule(segments, BTreeMap::new())
    }

    pub fn with_schedule(
        segments: Vec<Segment>,
        schedule: BTreeMap<String, HeightProfile>,
    ) -> Result<Self> {
        let spec = PotentialSpec { segments, schedule };
        spec.validate()?;
        Ok(spec)
    }

    pub fn zero() -> Self {
        PotentialSpec::default()
    }

    /// Rectangular barrier of height `v0` on [0, d].
    pub fn barrier(v0: f64, d: f64) -> Result<Self> {
        Self::new(vec![Segment::new(0.0, d, v0)])
    }

    /// Potential step of height `v0` on [0, ∞).
    pub fn step(v0: f64) -> Result<Self> {
        Self::new(vec![Segment::new(0.0, f64::INFINITY, v0)])
    }

    pub fn validate(&self) -> Result<()> {
        for s in &self.segments {
            if !s.x_lo.is_finite() || s.x_hi.is_nan() || !(s.x_lo < s.x_hi) {
                return Err(Error::InvalidInput(format!(
                    "segment needs finite x_lo < x_hi, got [{}, {}]",
                    s.x_lo, s.x_hi
                )));
            }
            if !s.height.is_finite() {
                return Err(Error::InvalidInput("segment heights must be finite".into()));
            }
        }
        if self.segments.windows(2).any(|w| w[1].x_lo < w[0].x_hi) {
            return Err(Error::InvalidInput("segments must be sorted and non-overlapping".into()));
        }
        for (label, profile) in &self.schedule {
            profile.validate()?;
            if !self.segments.iter().any(|s| s.label.as_deref() == Some(label.as_str())) {
                return Err(Error::InvalidInput(format!("schedule names unknown segment '{label}'")));
            }
        }
        Ok(())
    }

    pub fn is_static(&self) -> bool {
        self.schedule.is_empty()
    }

    /// Intersection of the domains of all scheduled profiles.
    pub fn schedule_domain(&self) -> (f64, f64) {
        self.schedule.values().fold((f64::NEG_INFINITY, f64::INFINITY), |(lo, hi), p| {
            let (a, b) = p.domain();
            (lo.max(a), hi.min(b))
        })
    }

    pub fn check_time(&self, t: f64) -> Result<()> {
        let (lo, hi) = self.schedule_domain();
        if t < lo || t > hi {
            return Err(Error::ScheduleDomain { t, lo, hi });
        }
        Ok(())
    }

    fn segment_height(&self, seg: &Segment, t: f64) -> Result<f64> {
        match seg.label.as_ref().and_then(|l| self.schedule.get(l)) {
            Some(profile) => Ok(seg.height + profile.offset(t)?),
            None => Ok(seg.height),
        }
    }

    fn segment_at(&self, x: f64) -> Option<&Segment> {
        let i = self.segments.partition_point(|s| s.x_hi <= x);
        self.segments.get(i).filter(|s| s.contains(x))
    }

    pub fn height_at(&self, x: f64, t: f64) -> Result<f64> {
        self.check_time(t)?;
        match self.segment_at(x) {
            Some(seg) => self.segment_height(seg, t),
            None => Ok(0.0),
        }
    }

    pub fn max_abs_height(&self) -> f64 {
        self.segments.iter().map(|s| s.height.abs()).fold(0.0, f64::max)
    }

    /// V + λΘ_Ω. The boundaries of Ω become breakpoints; cells outside both the
    /// original support and Ω are omitted.
    pub fn composite(&self, region: &Region, lambda: f64) -> PotentialSpec {
        let mut breaks: Vec<f64> = self
            .segments
            .iter()
            .flat_map(|s| [s.x_lo, s.x_hi])
            .chain([region.a, region.b])
            .collect();
        breaks.sort_by(|a, b| a.total_cmp(b));
        breaks.dedup();

        let mut segments = Vec::new();
        for w in breaks.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            let mid = match (lo.is_finite(), hi.is_finite()) {
                (true, true) => 0.5 * (lo + hi),
                (true, false) => lo + 1.0,
                (false, true) => hi - 1.0,
                (false, false) => 0.0,
            };
            let base = self.segment_at(mid);
            let inside = region.contains(mid);
            if base.is_none() && !inside {
                continue;
            }
            if !lo.is_finite() {
                // Ω unbounded on the left cannot be represented by a finite segment list.
                continue;
            }
            let height = base.map_or(0.0, |s| s.height) + if inside { lambda } else { 0.0 };
            segments.push(Segment {
                x_lo: lo,
                x_hi: hi,
                height,
                label: base.and_then(|s| s.label.clone()),
            });
        }
        PotentialSpec { segments, schedule: self.schedule.clone() }
    }

    /// Midpoint sampling of every grid cell at time `t`.
    pub fn sample(&self, grid: &SpatialGrid, t: f64) -> Result<Vec<f64>> {
        self.check_time(t)?;
        let mut heights = Vec::with_capacity(self.segments.len());
        for seg in &self.segments {
            heights.push(self.segment_height(seg, t)?);
        }
        let mut out = vec![0.0; grid.n_points];
        let mut s = 0;
        for (i, v) in out.iter_mut().enumerate() {
            let x = grid.x(i);
            while s < self.segments.len() && self.segments[s].x_hi <= x {
                s += 1;
            }
            if s < self.segments.len() && self.segments[s].contains(x) {
                *v = heights[s];
            }
        }
        Ok(out)
    }
}

/// Uniform periodic grid; values live at cell midpoints `x_min + (i + ½)·dx`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpatialGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub n_points: usize,
}

impl SpatialGrid {
    pub const MIN_POINTS: usize = 256;

    pub fn new(x_min: f64, x_max: f64, n_points: usize) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite() && x_min < x_max) {
            return Err(Error::InvalidInput(format!("grid needs x_min < x_max, got [{x_min}, {x_max}]")));
        }
        if n_points < Self::MIN_POINTS || !n_points.is_power_of_two() {
            return Err(Error::InvalidInput(format!(
                "grid size must be a power of two >= {}, got {n_points}",
                Self::MIN_POINTS
            )));
        }
        Ok(SpatialGrid { x_min, x_max, n_points })
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.n_points as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + (i as f64 + 0.5) * self.dx()
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.x(i)).collect()
    }

    /// Angular wavenumbers in FFT order.
    pub fn wavenumbers(&self) -> Vec<f64> {
        let n = self.n_points;
        let dk = 2.0 * PI / (self.x_max - self.x_min);
        (0..n)
            .map(|i| if i < n / 2 { i as f64 * dk } else { (i as f64 - n as f64) * dk })
            .collect()
    }

    /// Θ_Ω on the grid; a cell belongs to Ω iff its midpoint does.
    pub fn mask(&self, region: &Region) -> Vec<bool> {
        (0..self.n_points).map(|i| region.contains(self.x(i))).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seg(lo: f64, hi: f64, h: f64) -> Segment {
        Segment::new(lo, hi, h)
    }

    #[test]
    fn composite_on_zero_potential() {
        let v = PotentialSpec::zero();
        let out = v.composite(&Region::new(0.0, 2.0).unwrap(), 0.5);
        assert_eq!(out.segments, vec![seg(0.0, 2.0, 0.5)]);
    }

    #[test]
    fn composite_cancels_barrier() {
        let v = PotentialSpec::barrier(1.0, 2.0).unwrap();
        let out = v.composite(&Region::new(0.0, 2.0).unwrap(), -1.0);
        assert_eq!(out.segments, vec![seg(0.0, 2.0, 0.0)]);
    }

    #[test]
    fn composite_overlays_partial_region() {
        let v = PotentialSpec::barrier(1.0, 2.0).unwrap();
        let out = v.composite(&Region::new(1.0, 3.0).unwrap(), 0.2);
        assert_eq!(out.segments, vec![seg(0.0, 1.0, 1.0), seg(1.0, 2.0, 1.2), seg(2.0, 3.0, 0.2)]);
    }

    #[test]
    fn composite_handles_semi_infinite_region() {
        let v = PotentialSpec::step(1.0).unwrap();
        let r = Region::new(0.0, f64::INFINITY).unwrap();
        let out = v.composite(&r, 0.25);
        assert_eq!(out.segments, vec![seg(0.0, f64::INFINITY, 1.25)]);
    }

    #[test]
    fn sampling_zero_and_step() {
        let g = SpatialGrid::new(-5.0, 5.0, 256).unwrap();
        assert!(PotentialSpec::zero().sample(&g, 0.0).unwrap().iter().all(|&v| v == 0.0));
        let step = PotentialSpec::step(1.0).unwrap();
        let s = step.sample(&g, 0.0).unwrap();
        for (i, v) in s.iter().enumerate() {
            let expect = if g.x(i) >= 0.0 { 1.0 } else { 0.0 };
            assert_eq!(*v, expect);
        }
    }

    #[test]
    fn sampling_follows_schedule() {
        // height 1 − 0.5·s(t) with s(0.5) = 1
        let mut sched = BTreeMap::new();
        sched.insert(
            "b".to_string(),
            HeightProfile::Samples { times: vec![0.0, 0.5, 1.0], offsets: vec![0.0, -0.5, 0.0] },
        );
        let v = PotentialSpec::with_schedule(vec![Segment::labelled(0.0, 2.0, 1.0, "b")], sched).unwrap();
        let g = SpatialGrid::new(-5.0, 5.0, 256).unwrap();
        let s = v.sample(&g, 0.5).unwrap();
        for (i, h) in s.iter().enumerate() {
            let x = g.x(i);
            if (0.0..2.0).contains(&x) {
                assert!((h - 0.5).abs() < 1e-15);
            } else {
                assert_eq!(*h, 0.0);
            }
        }
        assert!(matches!(v.sample(&g, 1.5), Err(Error::ScheduleDomain { .. })));
    }

    #[test]
    fn composite_keeps_schedule_labels() {
        let mut sched = BTreeMap::new();
        sched.insert("b".to_string(), HeightProfile::RaisedCosine { amplitude: -1.0, t_on: 0.0, t_off: 2.0 });
        let v = PotentialSpec::with_schedule(vec![Segment::labelled(0.0, 2.0, 3.0, "b")], sched).unwrap();
        let c = v.composite(&Region::new(1.0, 2.0).unwrap(), 0.5);
        assert!((c.height_at(1.5, 1.0).unwrap() - 2.5).abs() < 1e-14);
        assert!((c.height_at(0.5, 1.0).unwrap() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Region::new(1.0, 1.0).is_err());
        assert!(SpatialGrid::new(0.0, 1.0, 100).is_err());
        assert!(SpatialGrid::new(0.0, 1.0, 128).is_err());
        assert!(PotentialSpec::new(vec![seg(0.0, 2.0, 1.0), seg(1.0, 3.0, 1.0)]).is_err());
        assert!(PotentialSpec::new(vec![seg(0.0, 2.0, f64::NAN)]).is_err());
    }

    #[test]
    fn json_shape() {
        let v: PotentialSpec =
            serde_json::from_str(r#"{"segments":[{"x_lo":0,"x_hi":2,"height":1}]}"#).unwrap();
        assert_eq!(v, PotentialSpec::barrier(1.0, 2.0).unwrap());
        assert!(serde_json::from_str::<PotentialSpec>(r#"{"segments":[],"bogus":1}"#).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_potential() -> impl Strategy<Value = PotentialSpec> {
            prop::collection::vec((0.1f64..2.0, -2.0f64..2.0), 0..5).prop_map(|parts| {
                let mut x = -3.0;
                let segs = parts
                    .into_iter()
                    .map(|(w, h)| {
                        let s = Segment::new(x, x + w, h);
                        x += w + 0.3;
                        s
                    })
                    .collect();
                PotentialSpec::new(segs).unwrap()
            })
        }

        proptest! {
            #[test]
            fn composite_is_additive(v in arb_potential(), a in -4.0f64..0.0, w in 0.5f64..4.0,
                                     l1 in -2.0f64..2.0, l2 in -2.0f64..2.0) {
                let r = Region::new(a, a + w).unwrap();
                let g = SpatialGrid::new(-6.0, 6.0, 256).unwrap();
                let twice = v.composite(&r, l1).composite(&r, l2).sample(&g, 0.0).unwrap();
                let once = v.composite(&r, l1 + l2).sample(&g, 0.0).unwrap();
                for (p, q) in twice.iter().zip(&once) {
                    prop_assert!((p - q).abs() < 1e-12);
                }
            }

            #[test]
            fn composite_shifts_only_inside_region(v in arb_potential(), a in -4.0f64..0.0,
                                                   w in 0.5f64..4.0, l in -2.0f64..2.0) {
                let r = Region::new(a, a + w).unwrap();
                let g = SpatialGrid::new(-6.0, 6.0, 256).unwrap();
                let base = v.sample(&g, 0.0).unwrap();
                let shifted = v.composite(&r, l).sample(&g, 0.0).unwrap();
                let mask = g.mask(&r);
                for i in 0..g.n_points {
                    let expect = if mask[i] { l } else { 0.0 };
                    prop_assert!((shifted[i] - base[i] - expect).abs() < 1e-12);
                }
            }
        }
    }
}
