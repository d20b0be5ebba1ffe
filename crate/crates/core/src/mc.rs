//! Replicated Monte Carlo estimators.
//!
//! Every estimator maps replicates to per-replicate values in index order
//! (see [`Replicates`]) and reduces them sequentially, so results do not
//! depend on the thread count.

use serde::Serialize;

use crate::events::{EventKind, EventSpec};
use crate::exec::Replicates;
use crate::geometry::RectangleStack;
use crate::special::normal_tail_lower;
use crate::tau::{exceptional_search_sub, pivotal_endpoint_census, tau_interval_set};
use crate::web::WebPair;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    /// Sample standard deviation over `sqrt(n_replicates)`.
    pub stderr: f64,
    pub n_replicates: u64,
    pub seed_root: u64,
}

impl Estimate {
    pub fn from_samples(xs: &[f64], seed_root: u64) -> Result<Self> {
        let (mean, sd) = mean_sd(xs).ok_or(Error::Empty)?;
        Ok(Self {
            mean,
            stderr: sd / (xs.len() as f64).sqrt(),
            n_replicates: xs.len() as u64,
            seed_root,
        })
    }

    /// `sqrt(se_a² + se_b²)`, for comparing independent estimates.
    pub fn combined_stderr(&self, other: &Estimate) -> f64 {
        self.stderr.hypot(other.stderr)
    }
}

/// Mean and sample standard deviation (`n − 1` denominator; 0 when n = 1).
pub fn mean_sd(xs: &[f64]) -> Option<(f64, f64)> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() == 1 {
        return Some((mean, 0.0));
    }
    let ss: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
    Some((mean, (ss / (n - 1.0)).sqrt()))
}

fn web_for(seed: u64, tau: f64) -> Result<WebPair> {
    WebPair::new(seed, tau.max(1.0))
}

/// Frequency of the event at dynamical time `τ`.
pub fn estimate_event(spec: &EventSpec, tau: f64, replicates: &Replicates) -> Result<Estimate> {
    if replicates.n == 0 {
        return Err(Error::Empty);
    }
    web_for(0, tau)?.check_tau(tau)?;
    let xs = replicates.try_map(|_, seed| -> Result<f64> {
        let web = web_for(seed, tau)?;
        Ok(f64::from(spec.holds_in(&web, tau)))
    })?;
    Estimate::from_samples(&xs, replicates.seed_root)
}

/// Frequency of the event holding at both `τ` and `τ′` in the same web.
pub fn joint_event(
    spec: &EventSpec,
    tau: f64,
    tau_prime: f64,
    replicates: &Replicates,
) -> Result<Estimate> {
    let tau_max = tau.max(tau_prime);
    web_for(0, tau_max)?.check_tau(tau.min(tau_prime))?;
    let xs = replicates.try_map(|_, seed| -> Result<f64> {
        let web = web_for(seed, tau_max)?;
        Ok(f64::from(
            spec.holds_in(&web, tau) && spec.holds_in(&web, tau_prime),
        ))
    })?;
    Estimate::from_samples(&xs, replicates.seed_root)
}

/// Mean Lebesgue measure of `{τ ∈ window : event}`.
pub fn mean_tau_measure(
    spec: &EventSpec,
    window: (f64, f64),
    replicates: &Replicates,
) -> Result<Estimate> {
    let xs = replicates.try_map(|_, seed| -> Result<f64> {
        let web = WebPair::new(seed, window.1.max(1.0))?;
        Ok(tau_interval_set(&web, spec, window)?.measure())
    })?;
    Estimate::from_samples(&xs, replicates.seed_root)
}

/// `ln y = ln c + a ln x`, weighted by inverse variance of `ln y`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PowerFit {
    pub a: f64,
    pub a_stderr: f64,
    pub c: f64,
    pub n_points: usize,
    /// Fewer than three usable points.
    pub degenerate: bool,
}

/// Fits `y = c x^a` to `(x, y, stderr_y)`; points need `x, y > 0`. The
/// variance of `ln y` is taken as `(stderr_y / y)²`; if any stderr is zero
/// all points get equal weight and the slope error comes from residuals.
pub fn fit_power_law(points: &[(f64, f64, f64)]) -> PowerFit {
    let pts: Vec<_> = points.iter().filter(|p| p.0 > 0.0 && p.1 > 0.0).collect();
    let n = pts.len();
    let degenerate = n < 3;
    if n < 2 {
        return PowerFit {
            a: f64::NAN,
            a_stderr: f64::NAN,
            c: f64::NAN,
            n_points: n,
            degenerate,
        };
    }
    let weighted = pts.iter().all(|p| p.2 > 0.0);
    let w: Vec<f64> = pts
        .iter()
        .map(|p| if weighted { (p.1 / p.2).powi(2) } else { 1.0 })
        .collect();
    let xs: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let sw: f64 = w.iter().sum();
    let xm = w.iter().zip(&xs).map(|(w, x)| w * x).sum::<f64>() / sw;
    let ym = w.iter().zip(&ys).map(|(w, y)| w * y).sum::<f64>() / sw;
    let sxx: f64 = w.iter().zip(&xs).map(|(w, x)| w * (x - xm).powi(2)).sum();
    let sxy: f64 = (0..n).map(|i| w[i] * (xs[i] - xm) * (ys[i] - ym)).sum();
    let a = sxy / sxx;
    let intercept = ym - a * xm;
    let a_stderr = if weighted {
        (1.0 / sxx).sqrt()
    } else if n > 2 {
        let rss: f64 = (0..n)
            .map(|i| (ys[i] - intercept - a * xs[i]).powi(2))
            .sum();
        (rss / (n as f64 - 2.0) / sxx).sqrt()
    } else {
        f64::NAN
    };
    PowerFit {
        a,
        a_stderr,
        c: intercept.exp(),
        n_points: n,
        degenerate,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepPoint {
    pub tau_prime: f64,
    /// `1/(d_k τ′)`.
    pub delta: f64,
    pub joint: Estimate,
    /// `P̂(C)²` with `P̂` taken from `C^0`.
    pub p_squared: f64,
    pub excess: f64,
    pub excess_stderr: f64,
    /// `excess > 3 · excess_stderr`.
    pub admissible: bool,
    /// `Π_{j≤k} P̂(C_j^0 ∩ C_j^τ′) / P̂(C_j)²`.
    pub product_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecorrelationSweep {
    pub k: usize,
    pub gamma: f64,
    pub p_event: Estimate,
    pub points: Vec<SweepPoint>,
    pub fit: PowerFit,
    /// `ln(max_j 1/P̂(C_j)) / ln γ` over `j ≤ k`.
    pub b: f64,
    /// Smallest `c` with `product_ratio ≤ c / τ′^b` on the grid.
    pub product_constant: f64,
}

/// `P(C_k^0 ∩ C_k^τ′)` against `P(C_k)²` along a grid of `τ′`, with the
/// excess fitted as `c Δ^a`.
pub fn decorrelation_sweep(
    stack: &RectangleStack,
    k: usize,
    tau_primes: &[f64],
    replicates: &Replicates,
) -> Result<DecorrelationSweep> {
    if tau_primes.is_empty() || replicates.n == 0 {
        return Err(Error::Empty);
    }
    if let Some(&bad) = tau_primes.iter().find(|&&t| !(t > 0.0 && t.is_finite())) {
        return Err(Error::Domain(format!(
            "τ′ grid entries must be positive, got {bad}"
        )));
    }
    let specs: Vec<EventSpec> = (0..=k)
        .map(|j| EventSpec::new(EventKind::C, j, stack))
        .collect::<Result<_>>()?;
    let tau_max = tau_primes.iter().copied().fold(1.0, f64::max);
    let m = tau_primes.len();
    // per replicate: bit j of row 0 is C_j^0, bit j of row 1 + i is C_j^{τ′_i}
    let rows = replicates.try_map(|_, seed| -> Result<Vec<u32>> {
        let web = WebPair::new(seed, tau_max)?;
        let bits = |tau: f64| {
            specs.iter().enumerate().fold(0u32, |acc, (j, s)| {
                acc | (u32::from(s.holds_in(&web, tau)) << j)
            })
        };
        let mut row = Vec::with_capacity(m + 1);
        row.push(bits(0.0));
        row.extend(tau_primes.iter().map(|&t| bits(t)));
        Ok(row)
    })?;
    let n = rows.len() as f64;
    let seed_root = replicates.seed_root;
    let top = 1u32 << k;
    let a: Vec<f64> = rows.iter().map(|r| f64::from(r[0] & top != 0)).collect();
    let p_event = Estimate::from_samples(&a, seed_root)?;
    let p = p_event.mean;
    let p_j: Vec<f64> = (0..=k)
        .map(|j| rows.iter().filter(|r| r[0] & (1 << j) != 0).count() as f64 / n)
        .collect();
    let mut points = Vec::with_capacity(m);
    for (i, &tau_prime) in tau_primes.iter().enumerate() {
        let joint_bits = |r: &Vec<u32>| r[0] & r[i + 1];
        let jx: Vec<f64> = rows
            .iter()
            .map(|r| f64::from(joint_bits(r) & top != 0))
            .collect();
        let joint = Estimate::from_samples(&jx, seed_root)?;
        // delta method for mean(J) − mean(A)²
        let psi: Vec<f64> = jx.iter().zip(&a).map(|(j, a)| j - 2.0 * p * a).collect();
        let (_, sd) = mean_sd(&psi).ok_or(Error::Empty)?;
        let excess = joint.mean - p * p;
        let excess_stderr = sd / n.sqrt();
        let product_ratio = (0..=k)
            .map(|j| {
                let both = rows
                    .iter()
                    .filter(|r| joint_bits(r) & (1 << j) != 0)
                    .count() as f64
                    / n;
                both / (p_j[j] * p_j[j])
            })
            .product();
        points.push(SweepPoint {
            tau_prime,
            delta: 1.0 / (stack.d(k) as f64 * tau_prime),
            joint,
            p_squared: p * p,
            excess,
            excess_stderr,
            admissible: excess > 3.0 * excess_stderr,
            product_ratio,
        });
    }
    let fit = fit_power_law(
        &points
            .iter()
            .filter(|p| p.admissible)
            .map(|p| (p.delta, p.excess, p.excess_stderr))
            .collect::<Vec<_>>(),
    );
    let b = p_j.iter().map(|p| (1.0 / p).ln()).fold(0.0, f64::max) / stack.gamma().ln();
    let product_constant = points
        .iter()
        .map(|p| p.product_ratio * p.tau_prime.powf(b))
        .fold(0.0, f64::max);
    Ok(DecorrelationSweep {
        k,
        gamma: stack.gamma(),
        p_event,
        points,
        fit,
        b,
        product_constant,
    })
}

/// Second-moment lower bound for `P(E_n ≠ ∅)` on `τ ∈ [0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SecondMoment {
    pub n: usize,
    /// `(E X)² / E X²` with `X` the exact measure of `E_n`.
    pub ratio: f64,
    pub ratio_stderr: f64,
    /// Same ratio with `X` replaced by the fraction of `resolution` cell
    /// midpoints lying in `E_n`.
    pub quadrature_ratio: f64,
    pub mean_measure: Estimate,
    pub observed_nonempty: Estimate,
    /// No replicate had positive measure.
    pub degenerate: bool,
}

pub fn second_moment_bound(
    stack: &RectangleStack,
    n: usize,
    resolution: usize,
    replicates: &Replicates,
) -> Result<SecondMoment> {
    if resolution == 0 {
        return Err(Error::Domain("resolution must be positive".into()));
    }
    if n > stack.k_max() {
        return Err(Error::Horizon {
            t: n as i64,
            horizon: stack.k_max() as i64,
        });
    }
    let rows = replicates.try_map(|_, seed| -> Result<(f64, f64, bool)> {
        let web = WebPair::new(seed, 1.0)?;
        let set = exceptional_search_sub(&web, stack, n, (0.0, 1.0))?;
        let hits = (0..resolution)
            .filter(|&i| set.contains((i as f64 + 0.5) / resolution as f64))
            .count();
        Ok((
            set.measure(),
            hits as f64 / resolution as f64,
            !set.is_empty(),
        ))
    })?;
    let seed_root = replicates.seed_root;
    let x: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let q: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let nonempty: Vec<f64> = rows.iter().map(|r| f64::from(r.2)).collect();
    let mean_measure = Estimate::from_samples(&x, seed_root)?;
    let observed_nonempty = Estimate::from_samples(&nonempty, seed_root)?;
    let m1 = mean_measure.mean;
    let m2 = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
    let degenerate = m2 == 0.0;
    let (ratio, ratio_stderr) = if degenerate {
        (0.0, 0.0)
    } else {
        let psi: Vec<f64> = x
            .iter()
            .map(|v| 2.0 * m1 / m2 * v - m1 * m1 / (m2 * m2) * v * v)
            .collect();
        let (_, sd) = mean_sd(&psi).ok_or(Error::Empty)?;
        (m1 * m1 / m2, sd / (x.len() as f64).sqrt())
    };
    let q1 = q.iter().sum::<f64>() / q.len() as f64;
    let q2 = q.iter().map(|v| v * v).sum::<f64>() / q.len() as f64;
    Ok(SecondMoment {
        n,
        ratio,
        ratio_stderr,
        quadrature_ratio: if q2 > 0.0 { q1 * q1 / q2 } else { 0.0 },
        mean_measure,
        observed_nonempty,
        degenerate,
    })
}

/// `K̃ γ^{−4kα²} / sqrt(ln d_k²)`.
pub fn tail_envelope_formula(k_tilde: f64, gamma: f64, alpha: f64, d_k: i64, k: usize) -> f64 {
    k_tilde * gamma.powf(-4.0 * k as f64 * alpha * alpha) / ((d_k * d_k) as f64).ln().sqrt()
}

/// Standardized threshold the superdiffusive crossing must reach:
/// the walk from `−w_{k−1}` must end strictly above `w_k` after `d_k²` even
/// steps, i.e. travel at least `w_k + w_{k−1} + 2`.
pub fn crossing_z(stack: &RectangleStack, k: usize) -> f64 {
    (stack.w(k) + stack.w(k - 1) + 2) as f64 / stack.d(k) as f64
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TailEnvelope {
    /// `min_j x_j φ(x_j)/(1+x_j²) · sqrt(ln d_j²) · γ^{4jα²}` over `1 ≤ j ≤ k_max`.
    pub k_tilde: f64,
    /// Level attaining the minimum.
    pub attained_at: usize,
}

pub fn tail_constant(stack: &RectangleStack) -> TailEnvelope {
    let (g, a) = (stack.gamma(), stack.width_alpha());
    (1..=stack.k_max())
        .map(|j| {
            let d = stack.d(j);
            let v = normal_tail_lower(crossing_z(stack, j))
                * ((d * d) as f64).ln().sqrt()
                * g.powf(4.0 * j as f64 * a * a);
            TailEnvelope {
                k_tilde: v,
                attained_at: j,
            }
        })
        .fold(None::<TailEnvelope>, |best, e| match best {
            Some(b) if b.k_tilde <= e.k_tilde => Some(b),
            _ => Some(e),
        })
        .expect("k_max is at least 1")
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TailBound {
    pub k: usize,
    pub envelope: f64,
    pub constant: TailEnvelope,
    pub estimate: Estimate,
    /// `estimate.mean + 3 · stderr ≥ envelope`.
    pub holds: bool,
}

pub fn superdiffusive_tail_bound(
    stack: &RectangleStack,
    k: usize,
    replicates: &Replicates,
) -> Result<TailBound> {
    let spec = EventSpec::new(EventKind::AHat, k, stack)?;
    let constant = tail_constant(stack);
    let envelope = tail_envelope_formula(
        constant.k_tilde,
        stack.gamma(),
        stack.width_alpha(),
        stack.d(k),
        k,
    );
    let estimate = estimate_event(&spec, 0.0, replicates)?;
    Ok(TailBound {
        k,
        envelope,
        constant,
        holds: estimate.mean + 3.0 * estimate.stderr >= envelope,
        estimate,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PivotalChain {
    pub k: usize,
    /// `P(∃τ ∈ [0,1] : Υ_k^τ)`.
    pub p_exists: Estimate,
    /// `P(Υ_k^0)`, the upper pathway for the all-τ event.
    pub p_at_zero: Estimate,
    /// `P(∀τ ∈ [0,1] : Υ_k^τ)` read off the exact interval set.
    pub p_all: Estimate,
    pub mean_endpoints: Estimate,
    /// Per replicate `1_{Υ^0} + |υ_k| − 1_∃`, nonnegative by construction.
    pub slack: Estimate,
    pub region_size: usize,
    /// `E|υ_k| / (|Ω_k| P(Υ_k^0))`.
    pub normalized_endpoints: f64,
}

pub fn pivotal_chain(
    stack: &RectangleStack,
    k: usize,
    replicates: &Replicates,
) -> Result<PivotalChain> {
    let spec = EventSpec::new(EventKind::Upsilon, k, stack)?;
    let rows = replicates.try_map(|_, seed| -> Result<[f64; 4]> {
        let web = WebPair::new(seed, 1.0)?;
        let census = pivotal_endpoint_census(&web, &spec, (0.0, 1.0))?;
        let set = &census.set;
        Ok([
            f64::from(!set.is_empty()),
            f64::from(set.contains(0.0)),
            f64::from(set.measure() == 1.0),
            census.count() as f64,
        ])
    })?;
    let seed_root = replicates.seed_root;
    let col = |c: usize| {
        Estimate::from_samples(&rows.iter().map(|r| r[c]).collect::<Vec<_>>(), seed_root)
    };
    let slack: Vec<f64> = rows.iter().map(|r| r[1] + r[3] - r[0]).collect();
    let region_size = spec.dependence_region().len();
    let p_at_zero = col(1)?;
    let mean_endpoints = col(3)?;
    Ok(PivotalChain {
        k,
        p_exists: col(0)?,
        p_all: col(2)?,
        normalized_endpoints: mean_endpoints.mean / (region_size as f64 * p_at_zero.mean),
        p_at_zero,
        mean_endpoints,
        slack: Estimate::from_samples(&slack, seed_root)?,
        region_size,
    })
}
