//! Hausdorff-dimension bound formulas for two-sided subdiffusive
//! exceptional times.
//!
//! The lower bound is `1 − ln(1/P(C_∞(γ̃))) / ln γ̃` with `γ̃ = sqrt(K² + 1)`,
//! where `P(C_∞(γ))` is the probability that two independent Brownian
//! motions started at `±1/γ` stay in `[−1, 1]` up to time 1. The upper bound
//! is `1 − p(K_L) − p(K_R)` with `p(K)` the root of `f(p, K) = 1`.

use std::f64::consts::{PI, SQRT_2};
use std::io::Write;

use serde::Serialize;

use crate::exec::Replicates;
use crate::mc::Estimate;
use crate::rng::CounterRng;
use crate::special::ln_gamma;
use crate::{Error, Result};

const SERIES_REL_TOL: f64 = 1e-14;
/// Bracket offset from the ends of `(0, 1)`.
pub const P_EPSILON: f64 = 1e-6;
pub const ROOT_TOL: f64 = 1e-10;
const MAX_SERIES_TERMS: u64 = 50_000_000;

/// Probability that Brownian motion from `start` stays in `[−1, 1]` through
/// time `t_end`, from the sine eigenfunction expansion on the interval.
pub fn brownian_stay_probability(start: f64, t_end: f64) -> Result<f64> {
    if !(start.abs() < 1.0) {
        return Err(Error::Domain(format!(
            "start must lie in (−1, 1), got {start}"
        )));
    }
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::Domain(format!(
            "t_end must be positive, got {t_end}"
        )));
    }
    let phase = PI * (start + 1.0) / 2.0;
    let decay = PI * PI * t_end / 8.0;
    let mut sum = 0.0;
    let mut n = 1u64;
    loop {
        let nf = n as f64;
        let envelope = 4.0 / (nf * PI) * (-nf * nf * decay).exp();
        let term = envelope * (nf * phase).sin();
        sum += term;
        // the envelope bounds every later term's magnitude from above
        if envelope < SERIES_REL_TOL * sum.abs() || envelope < f64::MIN_POSITIVE {
            return Ok(sum.clamp(0.0, 1.0));
        }
        n += 2;
        if n > MAX_SERIES_TERMS {
            return Err(Error::Domain(format!(
                "series for t_end = {t_end} needs too many terms"
            )));
        }
    }
}

/// `P(C_∞(γ))`: both motions from `±1/γ` survive to time 1.
pub fn c_infinity_probability(gamma: f64) -> Result<f64> {
    if !(gamma > 1.0) {
        return Err(Error::Domain(format!("gamma must exceed 1, got {gamma}")));
    }
    Ok(brownian_stay_probability(1.0 / gamma, 1.0)?.powi(2))
}

/// Both motions started at the centre.
pub fn c_star_probability() -> f64 {
    brownian_stay_probability(0.0, 1.0)
        .expect("interior start")
        .powi(2)
}

pub fn gamma_tilde(k: f64) -> f64 {
    (k * k + 1.0).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LowerBound {
    pub k: f64,
    pub gamma_tilde: f64,
    pub p_c_infinity: f64,
    pub b_infinity: f64,
    /// Emitted raw, possibly negative.
    pub lower_bound: f64,
    pub vacuous: bool,
}

pub fn lower_bound(k: f64) -> Result<LowerBound> {
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::Domain(format!("K must be positive, got {k}")));
    }
    let gt = gamma_tilde(k);
    let p = c_infinity_probability(gt)?;
    let b = (1.0 / p).ln() / gt.ln();
    Ok(LowerBound {
        k,
        gamma_tilde: gt,
        p_c_infinity: p,
        b_infinity: b,
        lower_bound: 1.0 - b,
        vacuous: 1.0 - b < 0.0,
    })
}

fn check_p_k(p: f64, k: f64) -> Result<()> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("p must lie in (0, 1), got {p}")));
    }
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::Domain(format!("K must be positive, got {k}")));
    }
    Ok(())
}

fn prefactor(p: f64) -> f64 {
    (PI * p / 2.0).sin() * (ln_gamma(1.0 + p / 2.0)).exp() / PI
}

fn ln_term(p: f64, ln_base: f64, n: u64) -> f64 {
    let nf = n as f64;
    nf * ln_base - ln_gamma(nf + 1.0) + ln_gamma((nf - p) / 2.0)
}

/// Streaming log-sum-exp.
#[derive(Default)]
struct LogSum {
    max: f64,
    acc: f64,
}

impl LogSum {
    fn push(&mut self, l: f64) {
        if self.acc == 0.0 {
            (self.max, self.acc) = (l, 1.0);
        } else if l <= self.max {
            self.acc += (l - self.max).exp();
        } else {
            self.acc = self.acc * (self.max - l).exp() + 1.0;
            self.max = l;
        }
    }

    fn ln(&self) -> f64 {
        self.max + self.acc.ln()
    }
}

/// `f(p, K) = sin(πp/2) Γ(1 + p/2)/π · Σ_{n≥1} (√2 K)^n / n! · Γ((n − p)/2)`.
///
/// Terms grow while `n ≲ K²` and then decay faster than geometrically;
/// summation stops past that point once a term falls below `1e-14` of the
/// running sum.
pub fn f_of_p(p: f64, k: f64) -> Result<f64> {
    check_p_k(p, k)?;
    let ln_base = (SQRT_2 * k).ln();
    let past_peak = (k * k + 2.0).ceil() as u64;
    let mut sum = LogSum::default();
    let mut n = 1;
    loop {
        let l = ln_term(p, ln_base, n);
        sum.push(l);
        if n > past_peak && l < sum.ln() + SERIES_REL_TOL.ln() {
            break;
        }
        n += 1;
        if n > MAX_SERIES_TERMS {
            return Err(Error::Domain(format!(
                "series for K = {k} needs too many terms"
            )));
        }
    }
    Ok(prefactor(p) * sum.ln().exp())
}

/// The same series cut after exactly `terms` terms.
pub fn f_of_p_terms(p: f64, k: f64, terms: u64) -> Result<f64> {
    check_p_k(p, k)?;
    let ln_base = (SQRT_2 * k).ln();
    let mut sum = LogSum::default();
    for n in 1..=terms {
        sum.push(ln_term(p, ln_base, n));
    }
    Ok(prefactor(p) * sum.ln().exp())
}

/// Number of terms [`f_of_p`] uses at `(p, K)`.
pub fn f_of_p_term_count(p: f64, k: f64) -> Result<u64> {
    check_p_k(p, k)?;
    let ln_base = (SQRT_2 * k).ln();
    let past_peak = (k * k + 2.0).ceil() as u64;
    let mut sum = LogSum::default();
    let mut n = 1;
    loop {
        let l = ln_term(p, ln_base, n);
        sum.push(l);
        if n > past_peak && l < sum.ln() + SERIES_REL_TOL.ln() {
            return Ok(n);
        }
        n += 1;
    }
}

/// Root of `f(p, K) = 1` on `[ε, 1 − ε]` by bisection.
pub fn solve_p(k: f64) -> Result<f64> {
    let (mut lo, mut hi) = (P_EPSILON, 1.0 - P_EPSILON);
    let f_lo = f_of_p(lo, k)?;
    let f_hi = f_of_p(hi, k)?;
    if (f_lo - 1.0).signum() == (f_hi - 1.0).signum() {
        return Err(Error::NoBracket { f_lo, f_hi });
    }
    let increasing = f_hi > f_lo;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = f_of_p(mid, k)?;
        if (fm - 1.0).abs() < ROOT_TOL {
            return Ok(mid);
        }
        if (fm > 1.0) == increasing {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Err(Error::Integrity(format!(
        "bisection for K = {k} stalled at p = {} without reaching |f − 1| < {ROOT_TOL}",
        0.5 * (lo + hi)
    )))
}

/// `p(K)` when the root lies inside the bracket, or the side of the bracket
/// it lies beyond.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum PValue {
    Root(f64),
    BelowEpsilon,
    AboveOneMinusEpsilon,
}

impl PValue {
    pub fn value(&self) -> Option<f64> {
        match self {
            PValue::Root(p) => Some(*p),
            _ => None,
        }
    }
}

pub fn p_value(k: f64) -> Result<PValue> {
    match solve_p(k) {
        Ok(p) => Ok(PValue::Root(p)),
        Err(Error::NoBracket { f_lo, .. }) if f_lo > 1.0 => Ok(PValue::BelowEpsilon),
        Err(Error::NoBracket { f_hi, .. }) if f_hi < 1.0 => Ok(PValue::AboveOneMinusEpsilon),
        Err(e) => Err(e),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundReport {
    pub k_left: f64,
    pub k_right: f64,
    /// Only for `K_L = K_R`.
    pub lower: Option<LowerBound>,
    pub p_left: PValue,
    pub p_right: PValue,
    /// `1 − p(K_L) − p(K_R)` when both roots were found.
    pub upper_bound: Option<f64>,
    /// `p(K_L) + p(K_R) > 1`.
    pub empty: Option<bool>,
}

pub fn bound_report(k_left: f64, k_right: f64) -> Result<BoundReport> {
    let lower = if k_left == k_right {
        Some(lower_bound(k_left)?)
    } else {
        None
    };
    let (p_left, p_right) = (p_value(k_left)?, p_value(k_right)?);
    let sum = match (p_left.value(), p_right.value()) {
        (Some(a), Some(b)) => Some(a + b),
        _ => None,
    };
    Ok(BoundReport {
        k_left,
        k_right,
        lower,
        p_left,
        p_right,
        upper_bound: sum.map(|s| 1.0 - s),
        empty: sum.map(|s| s > 1.0),
    })
}

/// CSV `K,gamma_tilde,P_C_inf,b_inf,lower,p,upper,empty_flag,lower_vacuous,p_status`
/// for symmetric reports; cells that could not be computed are empty.
pub fn write_bounds_csv<W: Write>(reports: &[BoundReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "K",
        "gamma_tilde",
        "P_C_inf",
        "b_inf",
        "lower",
        "p",
        "upper",
        "empty_flag",
        "lower_vacuous",
        "p_status",
    ])?;
    let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    for r in reports {
        let lb = r.lower.as_ref();
        let status = match r.p_left {
            PValue::Root(_) => "root",
            PValue::BelowEpsilon => "below_epsilon",
            PValue::AboveOneMinusEpsilon => "above_one_minus_epsilon",
        };
        w.write_record([
            r.k_left.to_string(),
            opt(lb.map(|l| l.gamma_tilde)),
            opt(lb.map(|l| l.p_c_infinity)),
            opt(lb.map(|l| l.b_infinity)),
            opt(lb.map(|l| l.lower_bound)),
            opt(r.p_left.value()),
            opt(r.upper_bound),
            r.empty.map(|e| e.to_string()).unwrap_or_default(),
            lb.map(|l| l.vacuous.to_string()).unwrap_or_default(),
            status.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Frequency with which a simple random walk from `start·d` never reaches
/// `±d` within `d²` steps, the lattice analogue of
/// [`brownian_stay_probability`]`(start, 1)`.
pub fn walk_stay_estimate(start: f64, d: i64, replicates: &Replicates) -> Result<Estimate> {
    let x0 = (start * d as f64).round() as i64;
    if d < 1 || x0.abs() >= d || (x0 as f64 - start * d as f64).abs() > 1e-9 {
        return Err(Error::Domain(format!(
            "start {start} is not an interior lattice point at scale {d}"
        )));
    }
    let steps = d * d;
    let xs = replicates.map(|_, seed| {
        let mut rng = CounterRng::new(seed);
        let mut x = x0;
        let mut bits = 0u64;
        for i in 0..steps {
            if i % 64 == 0 {
                bits = rng.next_u64();
            }
            x += if bits & 1 == 1 { 1 } else { -1 };
            bits >>= 1;
            if x.abs() >= d {
                return 0.0;
            }
        }
        1.0
    });
    Estimate::from_samples(&xs, replicates.seed_root)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stay_probability_limits() {
        assert!(brownian_stay_probability(1.0, 1.0).is_err());
        assert!(brownian_stay_probability(0.0, 0.0).is_err());
        assert!(brownian_stay_probability(0.999_999, 1.0).unwrap() < 1e-5);
        assert!((brownian_stay_probability(0.3, 1e-4).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn centre_constant() {
        assert!((c_star_probability() - 0.137_48).abs() < 1e-4);
    }

    #[test]
    fn lower_bound_values() {
        assert!((lower_bound(10.0).unwrap().lower_bound - 0.129).abs() < 1e-3);
        assert!((lower_bound(100.0).unwrap().lower_bound - 0.569).abs() < 1e-3);
        assert!(lower_bound(1.0).unwrap().vacuous);
        assert!(lower_bound(0.0).is_err());
    }

    #[test]
    fn roots_at_reference_points() {
        for (k, p) in [
            (0.1, 0.92216),
            (0.5, 0.64884),
            (1.0, 0.38824),
            (2.0, 0.097275),
            (3.0, 0.011606),
        ] {
            let got = solve_p(k).unwrap();
            assert!((got - p).abs() < 1e-4 * p.max(0.1), "K={k}: {got}");
        }
        assert!(matches!(solve_p(8.0), Err(Error::NoBracket { .. })));
        assert_eq!(p_value(8.0).unwrap(), PValue::BelowEpsilon);
    }

    #[test]
    fn log_sum_matches_direct_sum() {
        let mut s = LogSum::default();
        let vals = [0.5f64, 3.0, 1e-3, 20.0, 7.0];
        for v in vals {
            s.push(v.ln());
        }
        assert!((s.ln().exp() - vals.iter().sum::<f64>()).abs() < 1e-12);
    }

    #[test]
    fn walk_start_must_be_interior_lattice_point() {
        let r = Replicates::new(10, 1);
        assert!(walk_stay_estimate(0.51, 20, &r).is_err());
        assert!(walk_stay_estimate(1.0, 20, &r).is_err());
        assert!(walk_stay_estimate(0.5, 20, &r).is_ok());
    }
}
