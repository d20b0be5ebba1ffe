//! Arrow processes and path tracing in the dynamical discrete web.
//!
//! Each site of the even lattice carries a rate-one Poisson clock; at every
//! ring its arrow is redrawn uniformly from {−1, +1}. A [`WebPair`] realizes
//! both the main web and an independent secondary web from a single seed.
//!
//! Stream layout under the key of `(seed, web, site)`: draw 0 is the initial
//! arrow, draw `2j − 1` is the exponential gap before ring `j` and draw `2j`
//! the arrow after ring `j`. Streams are generated in dynamical-time order, so
//! the arrow at `τ` never depends on the window end.

use std::io::Write;

use serde::Serialize;

use crate::rng::{derive_key, draw, exponential, sign};
use crate::{Error, Result};

/// A point `(x, t)` of `Z²_even`: space `x`, path time `t`, `x + t` even.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct SiteAddress {
    pub x: i64,
    pub t: i64,
}

impl SiteAddress {
    pub fn new(x: i64, t: i64) -> Result<Self> {
        if (x + t).rem_euclid(2) != 0 {
            return Err(Error::Parity { x, t });
        }
        Ok(Self { x, t })
    }

    pub const ORIGIN: SiteAddress = SiteAddress { x: 0, t: 0 };

    /// Caller guarantees parity.
    #[inline(always)]
    pub(crate) const fn at(x: i64, t: i64) -> Self {
        Self { x, t }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum WebId {
    Main,
    Secondary,
}

impl WebId {
    fn tag(self) -> u64 {
        match self {
            WebId::Main => 0x6d61_696e,
            WebId::Secondary => 0x7365_636f,
        }
    }
}

/// Anything that can answer "which way does the arrow at `site` point at
/// dynamical time `τ`".
pub trait ArrowField {
    fn arrow(&self, web: WebId, site: SiteAddress, tau: f64) -> i8;
}

impl<F: ArrowField + ?Sized> ArrowField for &F {
    #[inline]
    fn arrow(&self, web: WebId, site: SiteAddress, tau: f64) -> i8 {
        (**self).arrow(web, site, tau)
    }
}

/// Seeded handle to the main web `W` and the secondary web `Ŵ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct WebPair {
    seed: u64,
    tau_max: f64,
}

impl WebPair {
    pub fn new(seed: u64, tau_max: f64) -> Result<Self> {
        if !(tau_max.is_finite() && tau_max > 0.0) {
            return Err(Error::Domain(format!(
                "tau_max must be positive, got {tau_max}"
            )));
        }
        Ok(Self { seed, tau_max })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn tau_max(&self) -> f64 {
        self.tau_max
    }

    pub fn check_tau(&self, tau: f64) -> Result<()> {
        if !(0.0..=self.tau_max).contains(&tau) {
            return Err(Error::Window {
                tau,
                lo: 0.0,
                hi: self.tau_max,
            });
        }
        Ok(())
    }

    pub fn check_window(&self, window: (f64, f64)) -> Result<()> {
        self.check_tau(window.0)?;
        self.check_tau(window.1)?;
        if window.0 > window.1 {
            return Err(Error::Domain(format!(
                "window start {} after end {}",
                window.0, window.1
            )));
        }
        Ok(())
    }

    #[inline(always)]
    fn key(&self, web: WebId, site: SiteAddress) -> u64 {
        derive_key(self.seed, &[web.tag(), site.x as u64, site.t as u64])
    }

    /// Full history of one arrow on `[0, τ_max]`.
    pub fn arrow_stream(&self, web: WebId, site: SiteAddress) -> Result<ArrowStream> {
        let site = SiteAddress::new(site.x, site.t)?;
        Ok(self.stream_unchecked(web, site))
    }

    pub(crate) fn stream_unchecked(&self, web: WebId, site: SiteAddress) -> ArrowStream {
        let key = self.key(web, site);
        let mut ring_times = Vec::new();
        let mut values = vec![sign(draw(key, 0))];
        let mut time = 0.0;
        let mut j = 1u64;
        loop {
            time += exponential(draw(key, 2 * j - 1));
            if time > self.tau_max {
                break;
            }
            ring_times.push(time);
            values.push(sign(draw(key, 2 * j)));
            j += 1;
        }
        ArrowStream {
            site,
            web,
            window_end: self.tau_max,
            ring_times,
            values,
        }
    }

    /// Whether the clock at `site` rings in `(a, b]`.
    pub fn rang_in(&self, web: WebId, site: SiteAddress, a: f64, b: f64) -> bool {
        let key = self.key(web, site);
        let mut time = 0.0;
        let mut j = 1u64;
        loop {
            time += exponential(draw(key, 2 * j - 1));
            if time > b {
                return false;
            }
            if time > a {
                return true;
            }
            j += 1;
        }
    }
}

impl ArrowField for WebPair {
    /// Lazy right-continuous lookup; no allocation.
    #[inline]
    fn arrow(&self, web: WebId, site: SiteAddress, tau: f64) -> i8 {
        let key = self.key(web, site);
        let mut value = sign(draw(key, 0));
        let mut time = 0.0;
        let mut j = 1u64;
        loop {
            time += exponential(draw(key, 2 * j - 1));
            if time > tau {
                return value;
            }
            value = sign(draw(key, 2 * j));
            j += 1;
        }
    }
}

/// Dynamical history of one arrow: ring times in `(0, τ_max]` and the
/// piecewise-constant right-continuous value.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ArrowStream {
    pub site: SiteAddress,
    pub web: WebId,
    window_end: f64,
    ring_times: Vec<f64>,
    values: Vec<i8>,
}

impl ArrowStream {
    /// Builds a stream from explicit parts, checking every invariant.
    pub fn from_parts(
        site: SiteAddress,
        web: WebId,
        window_end: f64,
        ring_times: Vec<f64>,
        values: Vec<i8>,
    ) -> Result<Self> {
        let site = SiteAddress::new(site.x, site.t)?;
        if values.len() != ring_times.len() + 1 {
            return Err(Error::Domain(
                "values must have one more entry than ring_times".into(),
            ));
        }
        if values.iter().any(|v| *v != 1 && *v != -1) {
            return Err(Error::Domain("arrow values must be ±1".into()));
        }
        let increasing = ring_times.windows(2).all(|w| w[0] < w[1]);
        let inside = ring_times.iter().all(|r| *r > 0.0 && *r <= window_end);
        if !(increasing && inside) {
            return Err(Error::Domain(
                "ring times must increase strictly inside (0, window_end]".into(),
            ));
        }
        Ok(Self {
            site,
            web,
            window_end,
            ring_times,
            values,
        })
    }

    pub fn window_end(&self) -> f64 {
        self.window_end
    }

    pub fn ring_times(&self) -> &[f64] {
        &self.ring_times
    }

    pub fn values(&self) -> &[i8] {
        &self.values
    }

    pub fn arrow_at(&self, tau: f64) -> Result<i8> {
        if !(0.0..=self.window_end).contains(&tau) {
            return Err(Error::Window {
                tau,
                lo: 0.0,
                hi: self.window_end,
            });
        }
        Ok(self.value_at(tau))
    }

    /// `values[i]` with `i` the number of rings at or before `τ`.
    #[inline]
    pub fn value_at(&self, tau: f64) -> i8 {
        self.values[self.ring_times.partition_point(|&r| r <= tau)]
    }

    pub fn rang_in(&self, a: f64, b: f64) -> bool {
        let i = self.ring_times.partition_point(|&r| r <= a);
        self.ring_times.get(i).is_some_and(|&r| r <= b)
    }

    /// Rings whose redrawn value differs from the previous one, as
    /// `(τ, old, new)`.
    pub fn switches(&self) -> impl Iterator<Item = (f64, i8, i8)> + '_ {
        self.ring_times
            .iter()
            .enumerate()
            .filter(|(j, _)| self.values[j + 1] != self.values[*j])
            .map(|(j, &r)| (r, self.values[j], self.values[j + 1]))
    }

    /// First switch strictly after `τ`.
    pub fn next_switch_after(&self, tau: f64) -> Option<(f64, i8, i8)> {
        let start = self.ring_times.partition_point(|&r| r <= tau);
        (start..self.ring_times.len())
            .find(|&j| self.values[j + 1] != self.values[j])
            .map(|j| (self.ring_times[j], self.values[j], self.values[j + 1]))
    }

    /// CSV `ring_index,ring_time,value_after`; row 0 is the initial arrow at
    /// time 0.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["ring_index", "ring_time", "value_after"])?;
        w.write_record(["0".to_string(), "0".to_string(), self.values[0].to_string()])?;
        for (j, r) in self.ring_times.iter().enumerate() {
            w.write_record([
                (j + 1).to_string(),
                r.to_string(),
                self.values[j + 1].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Path `S(t)` for `t = origin.t ..= t_end` at one dynamical time.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PathTrace {
    pub origin: SiteAddress,
    pub positions: Vec<i64>,
}

impl PathTrace {
    pub fn t_end(&self) -> i64 {
        self.origin.t + self.positions.len() as i64 - 1
    }

    pub fn at(&self, t: i64) -> Option<i64> {
        let i = t.checked_sub(self.origin.t)?;
        usize::try_from(i)
            .ok()
            .and_then(|i| self.positions.get(i).copied())
    }

    pub fn site(&self, t: i64) -> Option<SiteAddress> {
        self.at(t).map(|x| SiteAddress::at(x, t))
    }
}

/// Follows main-web arrows from `origin` up to path time `t_end`.
pub fn trace_in<F: ArrowField + ?Sized>(
    field: &F,
    origin: SiteAddress,
    tau: f64,
    t_end: i64,
) -> PathTrace {
    let len = (t_end - origin.t).max(0) as usize;
    let mut positions = Vec::with_capacity(len + 1);
    let mut x = origin.x;
    positions.push(x);
    for t in origin.t..t_end {
        x += field.arrow(WebId::Main, SiteAddress::at(x, t), tau) as i64;
        positions.push(x);
    }
    PathTrace { origin, positions }
}

/// One step of the non-coalescing pair: the right walker reads the secondary
/// web whenever it sits on the left walker.
#[inline]
pub(crate) fn pair_step<F: ArrowField + ?Sized>(
    field: &F,
    l: i64,
    r: i64,
    t: i64,
    tau: f64,
) -> (i64, i64) {
    let nl = l + field.arrow(WebId::Main, SiteAddress::at(l, t), tau) as i64;
    let web = if r == l {
        WebId::Secondary
    } else {
        WebId::Main
    };
    let nr = r + field.arrow(web, SiteAddress::at(r, t), tau) as i64;
    (nl, nr)
}

pub fn trace_pair_in<F: ArrowField + ?Sized>(
    field: &F,
    left: SiteAddress,
    right: SiteAddress,
    tau: f64,
    t_end: i64,
) -> (PathTrace, PathTrace) {
    let len = (t_end - left.t).max(0) as usize;
    let mut lp = Vec::with_capacity(len + 1);
    let mut rp = Vec::with_capacity(len + 1);
    let (mut l, mut r) = (left.x, right.x);
    lp.push(l);
    rp.push(r);
    for t in left.t..t_end {
        (l, r) = pair_step(field, l, r, t, tau);
        lp.push(l);
        rp.push(r);
    }
    (
        PathTrace {
            origin: left,
            positions: lp,
        },
        PathTrace {
            origin: right,
            positions: rp,
        },
    )
}

/// Path from `origin` in `W(τ)`.
pub fn trace_path(web: &WebPair, origin: SiteAddress, tau: f64, t_end: i64) -> Result<PathTrace> {
    let origin = SiteAddress::new(origin.x, origin.t)?;
    web.check_tau(tau)?;
    if t_end < origin.t {
        return Err(Error::Geometry(format!(
            "t_end {t_end} precedes origin time {}",
            origin.t
        )));
    }
    Ok(trace_in(web, origin, tau, t_end))
}

/// Non-coalescing pair `(X_l, X_r)`: the left path follows `W(τ)`; the right
/// path follows `W(τ)` except on steps where it sits on the left path, where
/// it follows `Ŵ(τ)`.
pub fn trace_pair_noncoalescing(
    web: &WebPair,
    left: SiteAddress,
    right: SiteAddress,
    tau: f64,
    t_end: i64,
) -> Result<(PathTrace, PathTrace)> {
    let left = SiteAddress::new(left.x, left.t)?;
    let right = SiteAddress::new(right.x, right.t)?;
    web.check_tau(tau)?;
    if left.t != right.t {
        return Err(Error::Geometry(format!(
            "pair start times differ: {} vs {}",
            left.t, right.t
        )));
    }
    if left.x >= right.x {
        return Err(Error::Geometry(format!(
            "left start {} must be strictly left of right start {}",
            left.x, right.x
        )));
    }
    if t_end < left.t {
        return Err(Error::Geometry(format!(
            "t_end {t_end} precedes start time {}",
            left.t
        )));
    }
    Ok(trace_pair_in(web, left, right, tau, t_end))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    struct Constant(i8);

    impl ArrowField for Constant {
        fn arrow(&self, _: WebId, _: SiteAddress, _: f64) -> i8 {
            self.0
        }
    }

    #[test]
    fn parity_is_enforced() {
        assert!(SiteAddress::new(1, 0).is_err());
        assert!(SiteAddress::new(-3, 1).is_ok());
        let web = WebPair::new(1, 1.0).unwrap();
        assert!(matches!(
            web.arrow_stream(WebId::Main, SiteAddress { x: 0, t: 1 }),
            Err(Error::Parity { .. })
        ));
    }

    #[test]
    fn streams_are_deterministic_and_web_specific() {
        let web = WebPair::new(77, 3.0).unwrap();
        let site = SiteAddress::new(4, 10).unwrap();
        let a = web.arrow_stream(WebId::Main, site).unwrap();
        let b = WebPair::new(77, 3.0)
            .unwrap()
            .arrow_stream(WebId::Main, site)
            .unwrap();
        assert_eq!(a, b);
        let c = web.arrow_stream(WebId::Secondary, site).unwrap();
        assert_ne!(a.ring_times(), c.ring_times());
    }

    #[test]
    fn longer_window_extends_the_same_history() {
        let site = SiteAddress::new(0, 0).unwrap();
        let short = WebPair::new(5, 1.0)
            .unwrap()
            .arrow_stream(WebId::Main, site)
            .unwrap();
        let long = WebPair::new(5, 4.0)
            .unwrap()
            .arrow_stream(WebId::Main, site)
            .unwrap();
        let n = short.ring_times().len();
        assert_eq!(short.ring_times(), &long.ring_times()[..n]);
        assert_eq!(short.values(), &long.values()[..n + 1]);
    }

    #[test]
    fn arrow_at_is_right_continuous() {
        let site = SiteAddress::new(0, 0).unwrap();
        let s = ArrowStream::from_parts(site, WebId::Main, 2.0, vec![0.5, 1.25], vec![1, -1, 1])
            .unwrap();
        assert_eq!(s.arrow_at(0.0).unwrap(), 1);
        assert_eq!(s.arrow_at(0.4999).unwrap(), 1);
        assert_eq!(s.arrow_at(0.5).unwrap(), -1);
        assert_eq!(s.arrow_at(1.25).unwrap(), 1);
        assert!(matches!(s.arrow_at(2.5), Err(Error::Window { .. })));
        assert!(s.arrow_at(-0.1).is_err());

        let quiet = ArrowStream::from_parts(site, WebId::Main, 2.0, vec![], vec![-1]).unwrap();
        assert!([0.0, 0.7, 2.0]
            .iter()
            .all(|&t| quiet.arrow_at(t).unwrap() == -1));
    }

    #[test]
    fn switches_skip_repeated_draws() {
        let site = SiteAddress::new(0, 0).unwrap();
        let s = ArrowStream::from_parts(
            site,
            WebId::Main,
            3.0,
            vec![0.5, 1.0, 2.0],
            vec![1, 1, -1, -1],
        )
        .unwrap();
        let sw: Vec<_> = s.switches().collect();
        assert_eq!(sw, vec![(1.0, 1, -1)]);
        assert_eq!(s.next_switch_after(0.0), Some((1.0, 1, -1)));
        assert_eq!(s.next_switch_after(1.0), None);
        assert!(s.rang_in(0.4, 0.5));
        assert!(!s.rang_in(0.5, 0.99));
    }

    #[test]
    fn malformed_streams_are_rejected() {
        let site = SiteAddress::new(0, 0).unwrap();
        assert!(ArrowStream::from_parts(site, WebId::Main, 1.0, vec![0.5], vec![1]).is_err());
        assert!(
            ArrowStream::from_parts(site, WebId::Main, 1.0, vec![0.6, 0.5], vec![1, 1, 1]).is_err()
        );
        assert!(ArrowStream::from_parts(site, WebId::Main, 1.0, vec![0.5], vec![1, 0]).is_err());
        assert!(ArrowStream::from_parts(site, WebId::Main, 1.0, vec![1.5], vec![1, 1]).is_err());
    }

    #[test]
    fn lazy_lookup_matches_stream() {
        let web = WebPair::new(123, 5.0).unwrap();
        for x in -6..6i64 {
            let site = SiteAddress::new(2 * x, 0).unwrap();
            let s = web.arrow_stream(WebId::Main, site).unwrap();
            for tau in [0.0, 0.3, 1.0, 2.5, 5.0] {
                assert_eq!(web.arrow(WebId::Main, site, tau), s.value_at(tau));
            }
            for &r in s.ring_times() {
                assert_eq!(web.arrow(WebId::Main, site, r), s.value_at(r));
                assert_eq!(
                    web.rang_in(WebId::Main, site, r - 1e-9, r),
                    s.rang_in(r - 1e-9, r)
                );
            }
        }
    }

    #[test]
    fn forced_drift() {
        let origin = SiteAddress::new(3, 1).unwrap();
        let p = trace_in(&Constant(1), origin, 0.0, 9);
        assert_eq!(p.positions, (3..=11).collect::<Vec<_>>());
        assert_eq!(p.t_end(), 9);
    }

    #[test]
    fn pair_that_never_meets_matches_single_traces() {
        let web = WebPair::new(8, 1.0).unwrap();
        let mut checked = 0;
        for seed in 0..200 {
            let web = WebPair::new(seed, 1.0).unwrap();
            let (l, r) = (
                SiteAddress::new(-6, 0).unwrap(),
                SiteAddress::new(6, 0).unwrap(),
            );
            let (pl, pr) = trace_pair_noncoalescing(&web, l, r, 0.5, 12).unwrap();
            if pl.positions.iter().zip(&pr.positions).all(|(a, b)| a != b) {
                assert_eq!(pl, trace_path(&web, l, 0.5, 12).unwrap());
                assert_eq!(pr, trace_path(&web, r, 0.5, 12).unwrap());
                checked += 1;
            }
        }
        assert!(checked > 0);
        let bad = trace_pair_noncoalescing(
            &web,
            SiteAddress::new(0, 0).unwrap(),
            SiteAddress::new(1, 1).unwrap(),
            0.0,
            5,
        );
        assert!(matches!(bad, Err(Error::Geometry(_))));
    }

    #[test]
    fn meeting_steps_read_the_secondary_web() {
        for seed in 0..100 {
            let web = WebPair::new(seed, 1.0).unwrap();
            let (l, r) = (
                SiteAddress::new(-2, 0).unwrap(),
                SiteAddress::new(2, 0).unwrap(),
            );
            let (pl, pr) = trace_pair_noncoalescing(&web, l, r, 0.25, 30).unwrap();
            for t in 0..30 {
                let (xl, xr) = (pl.at(t).unwrap(), pr.at(t).unwrap());
                let site = SiteAddress::new(xr, t).unwrap();
                let web_id = if xl == xr {
                    WebId::Secondary
                } else {
                    WebId::Main
                };
                assert_eq!(
                    pr.at(t + 1).unwrap() - xr,
                    web.arrow(web_id, site, 0.25) as i64
                );
            }
        }
    }

    #[test]
    fn unchanged_arrows_give_identical_traces() {
        let web = WebPair::new(31, 2.0).unwrap();
        let origin = SiteAddress::ORIGIN;
        let p = trace_path(&web, origin, 0.2, 25).unwrap();
        // first ring after 0.2 among the visited sites
        let next = (0..25)
            .filter_map(|t| {
                let s = web.arrow_stream(WebId::Main, p.site(t).unwrap()).unwrap();
                s.ring_times().iter().copied().find(|&r| r > 0.2)
            })
            .fold(2.0f64, f64::min);
        let mid = 0.2 + (next - 0.2) / 2.0;
        assert_eq!(p, trace_path(&web, origin, mid, 25).unwrap());
    }

    proptest! {
        #[test]
        fn traces_are_nearest_neighbour_and_even(seed in any::<u64>(), x in -20i64..20, tau in 0.0f64..2.0) {
            let web = WebPair::new(seed, 2.0).unwrap();
            let origin = SiteAddress::new(2 * x, 4).unwrap();
            let p = trace_path(&web, origin, tau, 60).unwrap();
            for (i, w) in p.positions.windows(2).enumerate() {
                prop_assert_eq!((w[1] - w[0]).abs(), 1);
                prop_assert_eq!((w[0] + 4 + i as i64).rem_euclid(2), 0);
            }
        }

        #[test]
        fn web_paths_coalesce_and_never_cross(seed in any::<u64>(), gap in 1i64..10, tau in 0.0f64..1.0) {
            let web = WebPair::new(seed, 1.0).unwrap();
            let a = trace_path(&web, SiteAddress::new(0, 0).unwrap(), tau, 80).unwrap();
            let b = trace_path(&web, SiteAddress::new(2 * gap, 0).unwrap(), tau, 80).unwrap();
            let mut met = false;
            for (xa, xb) in a.positions.iter().zip(&b.positions) {
                prop_assert!(xa <= xb);
                if met {
                    prop_assert_eq!(xa, xb);
                }
                met |= xa == xb;
            }
        }
    }
}
