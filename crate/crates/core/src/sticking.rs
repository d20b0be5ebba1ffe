//! Sticking between paths at two dynamical times.
//!
//! Paths run from the corners of rectangle `k` with time shifted so that
//! `t_k ↦ 0`. Step `n` is a sticking step when a `τ`-path and a `τ′`-path
//! occupy the same site at time `n` and read the same arrow there, which
//! happens when the relevant clock did not ring in `(τ, τ′]`.

use std::collections::VecDeque;
use std::io::Write;

use serde::Serialize;

use crate::exec::Replicates;
use crate::geometry::RectangleStack;
use crate::mc::Estimate;
use crate::web::{trace_in, trace_pair_in, SiteAddress, WebId, WebPair};
use crate::{Error, Result};

pub const LL: u8 = 1;
pub const LR: u8 = 2;
pub const RL: u8 = 4;
pub const RR: u8 = 8;
pub const ANY: u8 = LL | LR | RL | RR;

/// The four paths `Y_l^τ, Y_r^τ, Y_l^τ′, Y_r^τ′` over `d_k²` steps.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StickQuadruple {
    pub k: usize,
    /// Path time of step 0.
    pub t0: i64,
    pub tau: f64,
    pub tau_prime: f64,
    pub d_k: i64,
    /// Indexed `[l_τ, r_τ, l_τ′, r_τ′]`, each of length `steps + 1`.
    pub paths: [Vec<i64>; 4],
}

impl StickQuadruple {
    pub fn trace(
        web: &WebPair,
        stack: &RectangleStack,
        k: usize,
        tau: f64,
        tau_prime: f64,
    ) -> Result<Self> {
        let steps = stack.d(k).pow(2);
        Self::trace_steps(web, stack, k, tau, tau_prime, steps)
    }

    /// Like [`StickQuadruple::trace`] but for an arbitrary number of steps.
    pub fn trace_steps(
        web: &WebPair,
        stack: &RectangleStack,
        k: usize,
        tau: f64,
        tau_prime: f64,
        steps: i64,
    ) -> Result<Self> {
        if k == 0 || k > stack.k_max() {
            return Err(Error::Horizon {
                t: k as i64,
                horizon: stack.k_max() as i64,
            });
        }
        check_taus(web, tau, tau_prime)?;
        if steps < 0 {
            return Err(Error::Domain(format!("negative step count {steps}")));
        }
        let (l, r) = (stack.corner_left(k), stack.corner_right(k));
        let end = l.t + steps;
        let (a, b) = trace_pair_in(web, l, r, tau, end);
        let (c, d) = trace_pair_in(web, l, r, tau_prime, end);
        Ok(Self {
            k,
            t0: l.t,
            tau,
            tau_prime,
            d_k: stack.d(k),
            paths: [a.positions, b.positions, c.positions, d.positions],
        })
    }

    pub fn steps(&self) -> usize {
        self.paths[0].len() - 1
    }

    /// `Δ = 1/(d_k |τ − τ′|)`.
    pub fn delta(&self) -> f64 {
        1.0 / (self.d_k as f64 * (self.tau_prime - self.tau))
    }
}

fn check_taus(web: &WebPair, tau: f64, tau_prime: f64) -> Result<()> {
    web.check_tau(tau)?;
    web.check_tau(tau_prime)?;
    if tau >= tau_prime {
        return Err(Error::Domain(format!(
            "need τ < τ′, got {tau} and {tau_prime}"
        )));
    }
    Ok(())
}

/// Label of step `n` from the four positions at time `n`.
fn label_step(web: &WebPair, t: i64, p: [i64; 4], tau: f64, tau_prime: f64) -> u8 {
    let [a, b, c, d] = p;
    let rang = |x: i64| web.rang_in(WebId::Main, SiteAddress::at(x, t), tau, tau_prime);
    let mut label = 0;
    if a == c && !rang(a) {
        label |= LL;
    }
    if a == d && d != c && !rang(a) {
        label |= LR;
    }
    if c == b && b != a && !rang(c) {
        label |= RL;
    }
    if b == d && b != a && b != c && !rang(b) {
        label |= RR;
    }
    if a == b
        && b == c
        && c == d
        && !web.rang_in(WebId::Secondary, SiteAddress::at(b, t), tau, tau_prime)
    {
        label |= RR;
    }
    label
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StickingProfile {
    pub k: usize,
    pub tau: f64,
    pub tau_prime: f64,
    pub d_k: i64,
    /// One bitmask of `LL | LR | RL | RR` per step.
    pub labels: Vec<u8>,
}

impl StickingProfile {
    pub fn delta(&self) -> f64 {
        1.0 / (self.d_k as f64 * (self.tau_prime - self.tau))
    }

    /// `t ↦ G(t)` for `t = 0..=steps`, counting steps whose label misses
    /// `mask`. `ANY` gives `G`, `LL` gives `G_ll`, and so on.
    pub fn g_with(&self, mask: u8) -> Vec<i64> {
        let mut g = Vec::with_capacity(self.labels.len() + 1);
        let mut acc = 0;
        g.push(0);
        for &l in &self.labels {
            if l & mask == 0 {
                acc += 1;
            }
            g.push(acc);
        }
        g
    }

    pub fn g(&self) -> Vec<i64> {
        self.g_with(ANY)
    }

    pub fn sticking_steps(&self) -> usize {
        self.labels.iter().filter(|&&l| l != 0).count()
    }

    /// `sup_{t∈[0,1]} (t − Ḡ(t))`; the sticking time is nondecreasing, so
    /// this is the total over the rectangle divided by `d_k²`.
    pub fn rescaled_sticking(&self) -> f64 {
        self.sticking_steps() as f64 / (self.d_k * self.d_k) as f64
    }

    /// `n,ll,lr,rl,rr` with 0/1 entries.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["n", "ll", "lr", "rl", "rr"])?;
        for (n, &l) in self.labels.iter().enumerate() {
            let bit = |m: u8| if l & m != 0 { "1" } else { "0" };
            w.write_record([n.to_string().as_str(), bit(LL), bit(LR), bit(RL), bit(RR)])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn classify_sticking(web: &WebPair, quad: &StickQuadruple) -> Result<StickingProfile> {
    check_taus(web, quad.tau, quad.tau_prime)?;
    let labels = (0..quad.steps())
        .map(|n| {
            let p = [0, 1, 2, 3].map(|i| quad.paths[i][n]);
            label_step(web, quad.t0 + n as i64, p, quad.tau, quad.tau_prime)
        })
        .collect();
    Ok(StickingProfile {
        k: quad.k,
        tau: quad.tau,
        tau_prime: quad.tau_prime,
        d_k: quad.d_k,
        labels,
    })
}

/// Each path split into a part driven by non-sticking steps (`diffusive`,
/// started at the path's start) and one driven by sticking steps (`sticky`,
/// started at 0), ordered as in [`StickQuadruple::paths`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Decomposition {
    pub g: Vec<i64>,
    pub diffusive: [Vec<i64>; 4],
    pub sticky: [Vec<i64>; 4],
}

impl Decomposition {
    /// `Y_d(G(t)) + Y_s(t − G(t))`.
    pub fn reconstruct(&self, path: usize, t: usize) -> i64 {
        let g = self.g[t] as usize;
        self.diffusive[path][g] + self.sticky[path][t - g]
    }
}

pub fn decompose(quad: &StickQuadruple, profile: &StickingProfile) -> Result<Decomposition> {
    if profile.labels.len() != quad.steps()
        || profile.k != quad.k
        || profile.tau != quad.tau
        || profile.tau_prime != quad.tau_prime
    {
        return Err(Error::Integrity(format!(
            "profile of {} steps at k={} does not belong to a quadruple of {} steps at k={}",
            profile.labels.len(),
            profile.k,
            quad.steps(),
            quad.k
        )));
    }
    let split = |path: &Vec<i64>| {
        let mut d = vec![path[0]];
        let mut s = vec![0];
        for (n, &l) in profile.labels.iter().enumerate() {
            let inc = path[n + 1] - path[n];
            let part = if l != 0 { &mut s } else { &mut d };
            let last = *part.last().unwrap();
            part.push(last + inc);
        }
        (d, s)
    };
    let parts = [0, 1, 2, 3].map(|i| split(&quad.paths[i]));
    let decomposition = Decomposition {
        g: profile.g(),
        diffusive: parts.clone().map(|p| p.0),
        sticky: parts.map(|p| p.1),
    };
    for (i, path) in quad.paths.iter().enumerate() {
        for (t, &y) in path.iter().enumerate() {
            if decomposition.reconstruct(i, t) != y {
                return Err(Error::Integrity(format!(
                    "reconstruction fails for path {i} at t={t}"
                )));
            }
        }
    }
    Ok(decomposition)
}

/// Alternating sticking durations `Δ_j` and separation durations `Γ_j`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct CouplingTrace {
    pub deltas: Vec<u64>,
    pub gammas: Vec<u64>,
    /// The phase still running at the horizon and its length so far.
    pub open_phase: Option<OpenPhase>,
    pub horizon: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum OpenPhase {
    Sticking(u64),
    Separated(u64),
}

impl CouplingTrace {
    pub fn partial(&self) -> bool {
        self.open_phase.is_some()
    }

    pub fn complete_cycles(&self) -> usize {
        self.gammas.len()
    }

    /// `Δ_0 ≥ j`, when the horizon decides it.
    pub fn delta0_at_least(&self, j: u64) -> Option<bool> {
        match (self.deltas.first(), self.open_phase) {
            (Some(&d), _) => Some(d >= j),
            (None, Some(OpenPhase::Sticking(len))) if len >= j => Some(true),
            _ => None,
        }
    }

    /// Builds cycles from "pair together at step m" and "pair keeps sticking
    /// at step m" predicates over steps `0..horizon`. Positions are indexed
    /// `0..=horizon`.
    fn from_predicates(
        horizon: u64,
        together: impl Fn(u64) -> bool,
        sticks: impl Fn(u64) -> bool,
    ) -> Self {
        let mut out = CouplingTrace {
            horizon,
            ..Default::default()
        };
        let mut start = 0u64;
        loop {
            // sticking phase from `start`: first m ≥ start that is not a sticking step
            let Some(release) = (start..horizon).find(|&m| !sticks(m)) else {
                out.open_phase = Some(OpenPhase::Sticking(horizon - start));
                return out;
            };
            out.deltas.push(release - start);
            // separation: first m > release with the pair together again
            let Some(meet) = (release + 1..=horizon).find(|&m| together(m)) else {
                out.open_phase = Some(OpenPhase::Separated(horizon - release));
                return out;
            };
            out.gammas.push(meet - release);
            start = meet;
        }
    }
}

/// Reference trace from the origin pair `(S_0^τ, S_0^τ′)` and starred trace
/// from the rr-pair of rectangle `k`, both over `horizon` steps.
pub fn coupling_trace(
    web: &WebPair,
    stack: &RectangleStack,
    k: usize,
    tau: f64,
    tau_prime: f64,
    horizon: u64,
) -> Result<(CouplingTrace, CouplingTrace)> {
    check_taus(web, tau, tau_prime)?;
    let h = horizon as i64;
    let s = trace_in(web, SiteAddress::ORIGIN, tau, h).positions;
    let s_prime = trace_in(web, SiteAddress::ORIGIN, tau_prime, h).positions;
    let reference = CouplingTrace::from_predicates(
        horizon,
        |m| s[m as usize] == s_prime[m as usize],
        |m| {
            let m = m as usize;
            s[m] == s_prime[m]
                && !web.rang_in(WebId::Main, SiteAddress::at(s[m], m as i64), tau, tau_prime)
        },
    );
    let quad = StickQuadruple::trace_steps(web, stack, k, tau, tau_prime, h)?;
    let p = &quad.paths;
    let starred = CouplingTrace::from_predicates(
        horizon,
        |m| p[1][m as usize] == p[3][m as usize],
        |m| {
            let n = m as usize;
            let pos = [0, 1, 2, 3].map(|i| p[i][n]);
            label_step(web, quad.t0 + m as i64, pos, tau, tau_prime) & RR != 0
        },
    );
    Ok((reference, starred))
}

/// Survival estimates `P(Δ_0 ≥ j)` for both traces.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SurvivalRow {
    pub j: u64,
    pub reference: Estimate,
    pub starred: Estimate,
    /// `sqrt(se_ref² + se_star²)`.
    pub stderr: f64,
}

pub fn survival_table(
    traces: &[(CouplingTrace, CouplingTrace)],
    js: &[u64],
    seed_root: u64,
) -> Result<Vec<SurvivalRow>> {
    if traces.is_empty() {
        return Err(Error::Empty);
    }
    js.iter()
        .map(|&j| {
            let column =
                |pick: fn(&(CouplingTrace, CouplingTrace)) -> &CouplingTrace| -> Result<Estimate> {
                    let xs = traces
                        .iter()
                        .map(|t| {
                            pick(t).delta0_at_least(j).map(f64::from).ok_or_else(|| {
                                Error::Horizon {
                                    t: j as i64,
                                    horizon: pick(t).horizon as i64,
                                }
                            })
                        })
                        .collect::<Result<Vec<f64>>>()?;
                    Estimate::from_samples(&xs, seed_root)
                };
            let reference = column(|t| &t.0)?;
            let starred = column(|t| &t.1)?;
            Ok(SurvivalRow {
                j,
                stderr: reference.stderr.hypot(starred.stderr),
                reference,
                starred,
            })
        })
        .collect()
}

pub fn write_survival_csv<W: Write>(rows: &[SurvivalRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["j", "P_ref", "P_starred", "stderr"])?;
    for r in rows {
        w.write_record([
            r.j.to_string(),
            r.reference.mean.to_string(),
            r.starred.mean.to_string(),
            r.stderr.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Empirical `P(sup_t (t − Ḡ(t)) ≥ Δ^β)` over profiles sharing `(k, τ, τ′)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Lemma2Point {
    pub delta: f64,
    pub beta: f64,
    pub estimate: Estimate,
}

pub fn lemma2_statistic(
    profiles: &[StickingProfile],
    beta: f64,
    seed_root: u64,
) -> Result<Lemma2Point> {
    let first = profiles.first().ok_or(Error::Empty)?;
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::Domain(format!("β must lie in (0,1), got {beta}")));
    }
    if profiles
        .iter()
        .any(|p| p.k != first.k || p.tau != first.tau || p.tau_prime != first.tau_prime)
    {
        return Err(Error::Domain("profiles must share k, τ and τ′".into()));
    }
    let delta = first.delta();
    let threshold = delta.powf(beta);
    let xs: Vec<f64> = profiles
        .iter()
        .map(|p| f64::from(p.rescaled_sticking() >= threshold))
        .collect();
    Ok(Lemma2Point {
        delta,
        beta,
        estimate: Estimate::from_samples(&xs, seed_root)?,
    })
}

/// Smallest `c″` with `frequency ≤ c″ Δ^{1−β}` at every point.
pub fn lemma2_envelope(points: &[Lemma2Point]) -> f64 {
    points
        .iter()
        .map(|p| p.estimate.mean / p.delta.powf(1.0 - p.beta))
        .fold(0.0, f64::max)
}

/// Modulus of continuity `ω(ε)` of `t ↦ S(⌊t d²⌋)/d` on `[0, 1]`, where
/// `path` holds `S(0..=d²)`.
pub fn modulus_of_continuity(path: &[i64], d: i64, eps: f64) -> f64 {
    let n = path.len();
    if n == 0 {
        return 0.0;
    }
    // s and t in cells i < j can be within ε iff j − i − 1 < ε d².
    let reach = eps * (d * d) as f64;
    let max_lag = ((reach + 1.0).ceil() as i64 - 1).clamp(0, n as i64 - 1) as usize;
    sliding_range(path, max_lag) as f64 / d as f64
}

/// `max |x_i − x_j|` over `|i − j| ≤ lag`.
fn sliding_range(xs: &[i64], lag: usize) -> i64 {
    let mut lo: VecDeque<usize> = VecDeque::new();
    let mut hi: VecDeque<usize> = VecDeque::new();
    let mut best = 0;
    for (j, &x) in xs.iter().enumerate() {
        while lo.back().is_some_and(|&i| xs[i] >= x) {
            lo.pop_back();
        }
        lo.push_back(j);
        while hi.back().is_some_and(|&i| xs[i] <= x) {
            hi.pop_back();
        }
        hi.push_back(j);
        while lo.front().is_some_and(|&i| i + lag < j) {
            lo.pop_front();
        }
        while hi.front().is_some_and(|&i| i + lag < j) {
            hi.pop_front();
        }
        best = best.max(xs[hi[0]] - xs[lo[0]]);
    }
    best
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModulusPoint {
    pub delta: f64,
    pub exponent_alpha: f64,
    pub beta: f64,
    pub estimate: Estimate,
}

/// Empirical `P(ω(Δ^β) ≥ Δ^α / 2)` for the origin path at `τ = 0` run for
/// `d_k²` steps, at each `Δ` and each `(α, β)` with `β/2 > α`.
pub fn modulus_statistic(
    stack: &RectangleStack,
    k: usize,
    replicates: &Replicates,
    deltas: &[f64],
    exponents: &[(f64, f64)],
) -> Result<Vec<ModulusPoint>> {
    if k > stack.k_max() {
        return Err(Error::Horizon {
            t: k as i64,
            horizon: stack.k_max() as i64,
        });
    }
    if let Some(&(a, b)) = exponents
        .iter()
        .find(|(a, b)| !(b / 2.0 > *a && *a > 0.0 && *b > 0.0))
    {
        return Err(Error::Domain(format!("need 0 < α < β/2, got α={a}, β={b}")));
    }
    let d = stack.d(k);
    let cells: Vec<(f64, f64, f64)> = deltas
        .iter()
        .flat_map(|&delta| exponents.iter().map(move |&(a, b)| (delta, a, b)))
        .collect();
    let hits = replicates.try_map(|_, seed| -> Result<Vec<bool>> {
        let web = WebPair::new(seed, 1.0)?;
        let path = trace_in(&web, SiteAddress::ORIGIN, 0.0, d * d).positions;
        Ok(cells
            .iter()
            .map(|&(delta, a, b)| {
                modulus_of_continuity(&path, d, delta.powf(b)) >= delta.powf(a) / 2.0
            })
            .collect())
    })?;
    cells
        .iter()
        .enumerate()
        .map(|(c, &(delta, exponent_alpha, beta))| {
            let xs: Vec<f64> = hits.iter().map(|h| f64::from(h[c])).collect();
            Ok(ModulusPoint {
                delta,
                exponent_alpha,
                beta,
                estimate: Estimate::from_samples(&xs, replicates.seed_root)?,
            })
        })
        .collect()
}
