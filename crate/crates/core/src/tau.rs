//! Exact sets of dynamical times on which an event holds.
//!
//! An event indicator can only change when an arrow it reads switches, and
//! it is right-continuous there. Two solvers produce the set:
//!
//! * [`tau_interval_set`] walks forward in `τ`, re-evaluating only at the
//!   next switch among the sites the current evaluation actually read.
//! * [`tau_interval_set_exhaustive`] enumerates every switch of the full
//!   dependence region and re-evaluates once per gap.
//!
//! Both return identical sets; the second is kept as a cross-check and for
//! census work over whole regions.

use std::cell::RefCell;
use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use serde::Serialize;

use crate::events::{DependenceRegion, EventKind, EventSpec};
use crate::geometry::RectangleStack;
use crate::web::{ArrowField, ArrowStream, SiteAddress, WebId, WebPair};
use crate::{Error, Result};

/// A ring whose redrawn arrow differs from the previous one.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SwitchEvent {
    pub tau: f64,
    pub web: WebId,
    pub site: SiteAddress,
    pub old: i8,
    pub new: i8,
}

/// Half-open `[start, end)`. Endpoints produced by a switch carry it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TauInterval {
    pub start: f64,
    pub end: f64,
    pub opened_by: Option<SwitchEvent>,
    pub closed_by: Option<SwitchEvent>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TauIntervalSet {
    window: (f64, f64),
    intervals: Vec<TauInterval>,
}

impl TauIntervalSet {
    pub fn empty(window: (f64, f64)) -> Self {
        Self {
            window,
            intervals: Vec::new(),
        }
    }

    pub fn full(window: (f64, f64)) -> Self {
        let mut s = Self::empty(window);
        if window.1 > window.0 {
            s.intervals.push(TauInterval {
                start: window.0,
                end: window.1,
                opened_by: None,
                closed_by: None,
            });
        }
        s
    }

    pub fn window(&self) -> (f64, f64) {
        self.window
    }

    pub fn intervals(&self) -> &[TauInterval] {
        &self.intervals
    }

    pub fn bounds(&self) -> Vec<(f64, f64)> {
        self.intervals.iter().map(|i| (i.start, i.end)).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    /// Lebesgue measure.
    pub fn measure(&self) -> f64 {
        self.intervals.iter().map(|i| i.end - i.start).sum()
    }

    /// Membership; the window end belongs to the set when the last interval
    /// reaches it.
    pub fn contains(&self, tau: f64) -> bool {
        let i = self.intervals.partition_point(|iv| iv.end <= tau);
        if let Some(iv) = self.intervals.get(i) {
            if iv.start <= tau {
                return true;
            }
        }
        tau == self.window.1 && self.intervals.last().is_some_and(|iv| iv.end == tau)
    }

    /// Boundary points produced by switches, in order.
    pub fn endpoints(&self) -> Vec<SwitchEvent> {
        self.intervals
            .iter()
            .flat_map(|iv| [iv.opened_by, iv.closed_by])
            .flatten()
            .collect()
    }

    /// Points of the closure missing from the set: right endpoints inside the
    /// window.
    pub fn closure_gaps(&self) -> Vec<f64> {
        self.intervals
            .iter()
            .filter(|iv| iv.closed_by.is_some())
            .map(|iv| iv.end)
            .collect()
    }

    /// Intersection over the same window.
    pub fn intersect(&self, other: &TauIntervalSet) -> TauIntervalSet {
        let mut out = TauIntervalSet::empty(self.window);
        let (mut i, mut j) = (0, 0);
        while i < self.intervals.len() && j < other.intervals.len() {
            let (a, b) = (&self.intervals[i], &other.intervals[j]);
            let (start, opened_by) = if a.start >= b.start {
                (a.start, a.opened_by)
            } else {
                (b.start, b.opened_by)
            };
            let (end, closed_by) = if a.end <= b.end {
                (a.end, a.closed_by)
            } else {
                (b.end, b.closed_by)
            };
            if start < end {
                out.intervals.push(TauInterval {
                    start,
                    end,
                    opened_by,
                    closed_by,
                });
            }
            if a.end <= b.end {
                i += 1;
            } else {
                j += 1;
            }
        }
        out
    }

    /// CSV `interval_index,a,b,producing_site_x,producing_site_t` where the
    /// producing site is the switch that opened the interval (empty at the
    /// window start), followed by the web of that switch and the same
    /// fields for the closing switch.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "interval_index",
            "a",
            "b",
            "producing_site_x",
            "producing_site_t",
            "producing_web",
            "closing_site_x",
            "closing_site_t",
            "closing_web",
        ])?;
        let site_fields = |s: Option<SwitchEvent>| match s {
            Some(s) => [
                s.site.x.to_string(),
                s.site.t.to_string(),
                web_label(s.web).to_string(),
            ],
            None => [String::new(), String::new(), String::new()],
        };
        for (i, iv) in self.intervals.iter().enumerate() {
            let mut row = vec![i.to_string(), iv.start.to_string(), iv.end.to_string()];
            row.extend(site_fields(iv.opened_by));
            row.extend(site_fields(iv.closed_by));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn web_label(web: WebId) -> &'static str {
    match web {
        WebId::Main => "main",
        WebId::Secondary => "secondary",
    }
}

/// Something with a `τ`-indexed lattice indicator.
pub trait TauEvent {
    fn holds_in<F: ArrowField + ?Sized>(&self, field: &F, tau: f64) -> bool;
    fn dependence_region(&self) -> DependenceRegion;
}

impl TauEvent for EventSpec {
    fn holds_in<F: ArrowField + ?Sized>(&self, field: &F, tau: f64) -> bool {
        EventSpec::holds_in(self, field, tau)
    }

    fn dependence_region(&self) -> DependenceRegion {
        EventSpec::dependence_region(self)
    }
}

/// Intersection of events, evaluated left to right with short-circuit.
#[derive(Clone, Debug)]
pub struct Conjunction(pub Vec<EventSpec>);

impl TauEvent for Conjunction {
    fn holds_in<F: ArrowField + ?Sized>(&self, field: &F, tau: f64) -> bool {
        self.0.iter().all(|e| e.holds_in(field, tau))
    }

    fn dependence_region(&self) -> DependenceRegion {
        let mut out = DependenceRegion::default();
        for e in &self.0 {
            let r = e.dependence_region();
            out.main.extend(r.main);
            out.secondary.extend(r.secondary);
        }
        out
    }
}

/// Arrow field over materialized streams that remembers which sites the
/// last evaluation read.
struct StreamCache<'w> {
    web: &'w WebPair,
    streams: RefCell<HashMap<(WebId, SiteAddress), ArrowStream>>,
    consulted: RefCell<Vec<(WebId, SiteAddress)>>,
}

impl ArrowField for StreamCache<'_> {
    fn arrow(&self, web: WebId, site: SiteAddress, tau: f64) -> i8 {
        self.consulted.borrow_mut().push((web, site));
        self.streams
            .borrow_mut()
            .entry((web, site))
            .or_insert_with(|| self.web.stream_unchecked(web, site))
            .value_at(tau)
    }
}

impl<'w> StreamCache<'w> {
    fn new(web: &'w WebPair) -> Self {
        Self {
            web,
            streams: RefCell::new(HashMap::new()),
            consulted: RefCell::new(Vec::new()),
        }
    }

    fn evaluate<E: TauEvent>(&self, event: &E, tau: f64) -> bool {
        self.consulted.borrow_mut().clear();
        event.holds_in(self, tau)
    }

    /// Earliest switch in `(after, until]` among the consulted sites.
    fn next_switch(&self, after: f64, until: f64) -> Result<Option<SwitchEvent>> {
        let mut consulted = self.consulted.borrow_mut();
        consulted.sort_unstable();
        consulted.dedup();
        let streams = self.streams.borrow();
        let mut best: Option<SwitchEvent> = None;
        for &(web, site) in consulted.iter() {
            let Some((tau, old, new)) = streams[&(web, site)].next_switch_after(after) else {
                continue;
            };
            if tau > until {
                continue;
            }
            match best {
                Some(b) if tau == b.tau => {
                    return Err(Error::Tie {
                        tau,
                        first: (b.web, b.site),
                        second: (web, site),
                    })
                }
                Some(b) if tau > b.tau => {}
                _ => {
                    best = Some(SwitchEvent {
                        tau,
                        web,
                        site,
                        old,
                        new,
                    })
                }
            }
        }
        Ok(best)
    }
}

struct SetBuilder {
    set: TauIntervalSet,
    open: Option<(f64, Option<SwitchEvent>)>,
}

impl SetBuilder {
    fn new(window: (f64, f64), initially: bool) -> Self {
        Self {
            set: TauIntervalSet::empty(window),
            open: initially.then_some((window.0, None)),
        }
    }

    fn flip(&mut self, at: SwitchEvent) {
        match self.open.take() {
            None => self.open = Some((at.tau, Some(at))),
            Some((start, opened_by)) => self.set.intervals.push(TauInterval {
                start,
                end: at.tau,
                opened_by,
                closed_by: Some(at),
            }),
        }
    }

    fn finish(mut self) -> TauIntervalSet {
        if let Some((start, opened_by)) = self.open {
            if start < self.set.window.1 {
                self.set.intervals.push(TauInterval {
                    start,
                    end: self.set.window.1,
                    opened_by,
                    closed_by: None,
                });
            }
        }
        self.set
    }
}

/// `{τ ∈ window : event holds}` for any [`TauEvent`].
pub fn tau_set_of<E: TauEvent>(
    web: &WebPair,
    event: &E,
    window: (f64, f64),
) -> Result<TauIntervalSet> {
    web.check_window(window)?;
    let cache = StreamCache::new(web);
    let mut state = cache.evaluate(event, window.0);
    let mut builder = SetBuilder::new(window, state);
    let mut tau = window.0;
    while let Some(sw) = cache.next_switch(tau, window.1)? {
        tau = sw.tau;
        let now = cache.evaluate(event, tau);
        if now != state {
            builder.flip(sw);
            state = now;
        }
    }
    Ok(builder.finish())
}

pub fn tau_interval_set(
    web: &WebPair,
    spec: &EventSpec,
    window: (f64, f64),
) -> Result<TauIntervalSet> {
    tau_set_of(web, spec, window)
}

/// Every switch in `(window.0, window.1]` over the region, sorted by `τ`.
/// Exact ties between different sites are reported as errors.
pub fn switch_times(
    web: &WebPair,
    region: &DependenceRegion,
    window: (f64, f64),
) -> Result<Vec<SwitchEvent>> {
    web.check_window(window)?;
    let mut out = Vec::new();
    for (w, site) in region.iter() {
        let stream = web.stream_unchecked(w, site);
        out.extend(
            stream
                .switches()
                .filter(|(tau, _, _)| *tau > window.0 && *tau <= window.1)
                .map(|(tau, old, new)| SwitchEvent {
                    tau,
                    web: w,
                    site,
                    old,
                    new,
                }),
        );
    }
    out.sort_by(|a, b| a.tau.total_cmp(&b.tau));
    if let Some(p) = out.windows(2).find(|p| p[0].tau == p[1].tau) {
        return Err(Error::Tie {
            tau: p[0].tau,
            first: (p[0].web, p[0].site),
            second: (p[1].web, p[1].site),
        });
    }
    Ok(out)
}

/// Per-gap evaluation over the whole dependence region.
pub fn tau_set_exhaustive<E: TauEvent>(
    web: &WebPair,
    event: &E,
    window: (f64, f64),
) -> Result<TauIntervalSet> {
    let switches = switch_times(web, &event.dependence_region(), window)?;
    let mut state = event.holds_in(web, window.0);
    let mut builder = SetBuilder::new(window, state);
    for sw in switches {
        let now = event.holds_in(web, sw.tau);
        if now != state {
            builder.flip(sw);
            state = now;
        }
    }
    Ok(builder.finish())
}

pub fn tau_interval_set_exhaustive(
    web: &WebPair,
    spec: &EventSpec,
    window: (f64, f64),
) -> Result<TauIntervalSet> {
    tau_set_exhaustive(web, spec, window)
}

/// `E_n = {τ : C_0^τ ∩ … ∩ C_n^τ}` computed directly on the conjunction.
pub fn exceptional_search_sub(
    web: &WebPair,
    stack: &RectangleStack,
    n: usize,
    window: (f64, f64),
) -> Result<TauIntervalSet> {
    tau_set_of(web, &rectangle_conjunction(stack, n)?, window)
}

pub fn rectangle_conjunction(stack: &RectangleStack, n: usize) -> Result<Conjunction> {
    Ok(Conjunction(
        (0..=n)
            .map(|k| EventSpec::new(EventKind::C, k, stack))
            .collect::<Result<_>>()?,
    ))
}

/// Outcome of the nested-interval search over `Ê_k`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NestedSearch {
    /// `(k, [a, b])` for each level reached.
    pub levels: Vec<(usize, (f64, f64))>,
    /// Levels reached before an empty intersection (or all of them).
    pub depth: usize,
    pub completed: bool,
}

/// Starting from the window, repeatedly restricts to the longest component
/// of `Ê_k` inside the current interval and keeps its closure.
pub fn exceptional_search_super(
    web: &WebPair,
    stack: &RectangleStack,
    k_list: &[usize],
    window: (f64, f64),
) -> Result<NestedSearch> {
    if k_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Domain("k_list must be strictly increasing".into()));
    }
    let specs: Vec<EventSpec> = k_list
        .iter()
        .map(|&k| EventSpec::new(EventKind::AHat, k, stack))
        .collect::<Result<_>>()?;
    web.check_window(window)?;
    let mut current = window;
    let mut levels = Vec::new();
    for (spec, &k) in specs.iter().zip(k_list) {
        let set = tau_interval_set(web, spec, current)?;
        // longest component, earliest on ties
        let best = set
            .intervals()
            .iter()
            .fold(None::<&TauInterval>, |best, iv| match best {
                Some(b) if b.end - b.start >= iv.end - iv.start => Some(b),
                _ => Some(iv),
            });
        match best {
            Some(iv) => {
                current = (iv.start, iv.end);
                levels.push((k, current));
            }
            None => {
                return Ok(NestedSearch {
                    depth: levels.len(),
                    levels,
                    completed: false,
                })
            }
        }
    }
    Ok(NestedSearch {
        depth: levels.len(),
        levels,
        completed: true,
    })
}

/// Boundary points of the `Υ_k` set and the switching site behind each.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EndpointCensus {
    pub set: TauIntervalSet,
    pub endpoints: Vec<SwitchEvent>,
    pub per_site: BTreeMap<(WebId, SiteAddress), usize>,
}

impl EndpointCensus {
    pub fn count(&self) -> usize {
        self.endpoints.len()
    }
}

pub fn pivotal_endpoint_census(
    web: &WebPair,
    spec: &EventSpec,
    window: (f64, f64),
) -> Result<EndpointCensus> {
    if spec.kind() != EventKind::Upsilon {
        return Err(Error::Domain(format!(
            "endpoint census is defined for Upsilon events, got {}",
            spec.kind()
        )));
    }
    let set = tau_interval_set(web, spec, window)?;
    let endpoints = set.endpoints();
    let mut per_site = BTreeMap::new();
    for e in &endpoints {
        *per_site.entry((e.web, e.site)).or_insert(0) += 1;
    }
    Ok(EndpointCensus {
        set,
        endpoints,
        per_site,
    })
}
