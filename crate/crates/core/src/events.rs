//! Lattice events evaluated at one dynamical time.
//!
//! * `B_k`: the coalescing corner paths of `R_{k−1}` stay inside `R_k`
//!   (for `k = 0`, the path from the origin stays inside `R_0`).
//! * `C_k`: the same bounds for the non-coalescing corner pair.
//! * `Â_k`: the path from the upper-left corner of `R̂_{k−1}` ends above
//!   `w_k` at `t_{k+1}`.
//! * `Υ_k`: the origin path climbs at least `w_k` above its `t_{k−1}`
//!   position during `[t_{k−1}, t_k]`.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::geometry::RectangleStack;
use crate::web::{pair_step, ArrowField, SiteAddress, WebId, WebPair};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum EventKind {
    B,
    C,
    AHat,
    Upsilon,
}

impl std::str::FromStr for EventKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "B" => Ok(EventKind::B),
            "C" => Ok(EventKind::C),
            "A_hat" | "AHat" | "A" => Ok(EventKind::AHat),
            "Upsilon" | "U" => Ok(EventKind::Upsilon),
            other => Err(Error::Domain(format!("unknown event kind {other:?}"))),
        }
    }
}

impl std::fmt::Display for EventKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EventKind::B => "B",
            EventKind::C => "C",
            EventKind::AHat => "A_hat",
            EventKind::Upsilon => "Upsilon",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EventSpec {
    kind: EventKind,
    k: usize,
    stack: RectangleStack,
}

impl EventSpec {
    pub fn new(kind: EventKind, k: usize, stack: &RectangleStack) -> Result<Self> {
        if matches!(kind, EventKind::AHat | EventKind::Upsilon) && k == 0 {
            return Err(Error::Geometry(format!("{kind} requires k >= 1")));
        }
        if k > stack.k_max() {
            return Err(Error::Horizon {
                t: stack.t(stack.k_max() + 1) + 1,
                horizon: stack.horizon(),
            });
        }
        Ok(Self {
            kind,
            k,
            stack: stack.clone(),
        })
    }

    pub fn kind(&self) -> EventKind {
        self.kind
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn stack(&self) -> &RectangleStack {
        &self.stack
    }

    /// Path-time span `[start, end]` the event inspects.
    pub fn time_span(&self) -> (i64, i64) {
        let (s, k) = (&self.stack, self.k);
        match self.kind {
            EventKind::B | EventKind::C if k == 0 => (0, s.t(1)),
            EventKind::B | EventKind::C | EventKind::AHat => (s.t(k), s.t(k + 1)),
            EventKind::Upsilon => (0, s.t(k)),
        }
    }

    /// Evaluates the event in an arbitrary arrow field. Traces stop as soon as
    /// the outcome is decided, so only sites that matter are consulted.
    pub fn holds_in<F: ArrowField + ?Sized>(&self, field: &F, tau: f64) -> bool {
        let (s, k) = (&self.stack, self.k);
        match self.kind {
            EventKind::B | EventKind::C if k == 0 => confined(
                field,
                SiteAddress::ORIGIN,
                s.t(1),
                -s.left_edge(0),
                s.right_edge(0),
                tau,
            ),
            EventKind::B => {
                let (lo, hi, end) = (-s.left_edge(k), s.right_edge(k), s.t(k + 1));
                confined(field, s.corner_left(k), end, lo, hi, tau)
                    && confined(field, s.corner_right(k), end, lo, hi, tau)
            }
            EventKind::C => {
                let (lo, hi) = (-s.left_edge(k), s.right_edge(k));
                let (mut l, mut r) = (s.corner_left(k).x, s.corner_right(k).x);
                for t in s.t(k)..s.t(k + 1) {
                    (l, r) = pair_step(field, l, r, t, tau);
                    if l < lo || l > hi || r < lo || r > hi {
                        return false;
                    }
                }
                true
            }
            EventKind::AHat => {
                let start = s.hat_corner_left(k);
                let mut x = start.x;
                for t in start.t..s.t(k + 1) {
                    x += field.arrow(WebId::Main, SiteAddress::at(x, t), tau) as i64;
                }
                x > s.w(k)
            }
            EventKind::Upsilon => {
                let (from, to, target) = (s.t(k - 1), s.t(k), s.w(k));
                let mut x = 0i64;
                for t in 0..from {
                    x += field.arrow(WebId::Main, SiteAddress::at(x, t), tau) as i64;
                }
                let base = x;
                for t in from..to {
                    x += field.arrow(WebId::Main, SiteAddress::at(x, t), tau) as i64;
                    if x - base >= target {
                        return true;
                    }
                }
                // sup includes t = t_{k-1} itself, where the climb is 0
                target <= 0
            }
        }
    }

    /// Sites any realization of the event can consult: light cones from the
    /// anchors over the inspected time span.
    pub fn dependence_region(&self) -> DependenceRegion {
        let (s, k) = (&self.stack, self.k);
        let (from, to) = self.time_span();
        let mut region = DependenceRegion::default();
        match self.kind {
            EventKind::B | EventKind::C if k == 0 => {
                region.main = cone(SiteAddress::ORIGIN, from, to);
            }
            EventKind::B => {
                region.main = cone(s.corner_left(k), from, to);
                region.main.extend(cone(s.corner_right(k), from, to));
            }
            EventKind::C => {
                let left = cone(s.corner_left(k), from, to);
                let right = cone(s.corner_right(k), from, to);
                region.secondary = left.intersection(&right).copied().collect();
                region.main = left;
                region.main.extend(right);
            }
            EventKind::AHat => region.main = cone(s.hat_corner_left(k), from, to),
            EventKind::Upsilon => region.main = cone(SiteAddress::ORIGIN, from, to),
        }
        region
    }
}

/// Path from `start` stays in `[lo, hi]` through path time `end`.
fn confined<F: ArrowField + ?Sized>(
    field: &F,
    start: SiteAddress,
    end: i64,
    lo: i64,
    hi: i64,
    tau: f64,
) -> bool {
    let mut x = start.x;
    if x < lo || x > hi {
        return false;
    }
    for t in start.t..end {
        x += field.arrow(WebId::Main, SiteAddress::at(x, t), tau) as i64;
        if x < lo || x > hi {
            return false;
        }
    }
    true
}

/// Even-lattice sites `(x, t)` with `from ≤ t < to` reachable from `apex`.
fn cone(apex: SiteAddress, from: i64, to: i64) -> BTreeSet<SiteAddress> {
    let mut out = BTreeSet::new();
    for t in from.max(apex.t)..to {
        let h = t - apex.t;
        let mut x = apex.x - h;
        while x <= apex.x + h {
            out.insert(SiteAddress::at(x, t));
            x += 2;
        }
    }
    out
}

/// Sites of the main and secondary webs an event can depend on.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct DependenceRegion {
    pub main: BTreeSet<SiteAddress>,
    pub secondary: BTreeSet<SiteAddress>,
}

impl DependenceRegion {
    pub fn len(&self) -> usize {
        self.main.len() + self.secondary.len()
    }

    pub fn is_empty(&self) -> bool {
        self.main.is_empty() && self.secondary.is_empty()
    }

    pub fn contains(&self, web: WebId, site: &SiteAddress) -> bool {
        match web {
            WebId::Main => self.main.contains(site),
            WebId::Secondary => self.secondary.contains(site),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (WebId, SiteAddress)> + '_ {
        self.main
            .iter()
            .map(|s| (WebId::Main, *s))
            .chain(self.secondary.iter().map(|s| (WebId::Secondary, *s)))
    }
}

/// Event indicator at dynamical time `τ`.
pub fn evaluate_event(web: &WebPair, spec: &EventSpec, tau: f64) -> Result<bool> {
    web.check_tau(tau)?;
    Ok(spec.holds_in(web, tau))
}
