//! Rectangle stacks.
//!
//! `d_k = 2(⌊γ^k/2⌋ + 1)` are the half-widths of the diffusive stack, with
//! lower edges `t_0 = 0`, `t_{k+1} = t_k + d_k²`. The superdiffusive stack
//! shares the heights and uses half-widths
//! `w_k = 2(⌊α·sqrt(ln(d_k²)·d_k²)/2⌋ + 1)`. All widths are even, so every
//! corner lies on the even lattice.

use std::io::Write;

use serde::Serialize;

use crate::web::SiteAddress;
use crate::{Error, Result};

// largest d_k we accept; keeps t_k well inside i64
const MAX_HALF_WIDTH: f64 = 1.0e9;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RectangleStack {
    gamma: f64,
    width_alpha: f64,
    skew: (f64, f64),
    k_max: usize,
    // d, w, edges for k = 0 ..= k_max + 1; t for k = 0 ..= k_max + 2
    d: Vec<i64>,
    t: Vec<i64>,
    w: Vec<i64>,
    left: Vec<i64>,
    right: Vec<i64>,
}

/// Rounds a positive half-width away from the axis to an even integer.
fn round_out_even(v: f64) -> i64 {
    // the tolerance absorbs products like 2.2 * 10 = 22.000000000000004
    2 * (v / 2.0 - 1e-9).ceil() as i64
}

impl RectangleStack {
    pub fn new(gamma: f64, width_alpha: f64, k_max: usize) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 1.0) {
            return Err(Error::Geometry(format!("gamma must exceed 1, got {gamma}")));
        }
        if !(width_alpha.is_finite() && width_alpha > 0.0) {
            return Err(Error::Geometry(format!(
                "width alpha must be positive, got {width_alpha}"
            )));
        }
        if k_max < 1 {
            return Err(Error::Geometry("k_max must be at least 1".into()));
        }
        let mut d = Vec::with_capacity(k_max + 2);
        for k in 0..=k_max + 1 {
            let g = gamma.powi(k as i32);
            if g > MAX_HALF_WIDTH {
                return Err(Error::Geometry(format!("gamma^{k} = {g} is too large")));
            }
            d.push(2 * ((g / 2.0).floor() as i64 + 1));
        }
        let mut t = vec![0i64];
        for &dk in &d {
            t.push(t.last().unwrap() + dk * dk);
        }
        let w = d
            .iter()
            .map(|&dk| {
                let sq = (dk * dk) as f64;
                2 * ((width_alpha * (sq.ln() * sq).sqrt() / 2.0).floor() as i64 + 1)
            })
            .collect();
        Ok(Self {
            gamma,
            width_alpha,
            skew: (1.0, 1.0),
            k_max,
            left: d.clone(),
            right: d.clone(),
            d,
            t,
            w,
        })
    }

    /// Scales the left and right halves by `c_left` and `c_right`, rounding
    /// each edge out to even parity. Heights are unchanged.
    pub fn skewed(&self, c_left: f64, c_right: f64) -> Result<Self> {
        if !(c_left > 0.0 && c_right > 0.0 && c_left.is_finite() && c_right.is_finite()) {
            return Err(Error::Geometry(format!(
                "skew factors must be positive, got ({c_left}, {c_right})"
            )));
        }
        let mut s = self.clone();
        s.skew = (c_left, c_right);
        s.left = self
            .d
            .iter()
            .map(|&dk| round_out_even(c_left * dk as f64))
            .collect();
        s.right = self
            .d
            .iter()
            .map(|&dk| round_out_even(c_right * dk as f64))
            .collect();
        Ok(s)
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn width_alpha(&self) -> f64 {
        self.width_alpha
    }

    pub fn skew(&self) -> (f64, f64) {
        self.skew
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    /// Same stack with a different superdiffusive width parameter.
    pub fn with_width_alpha(&self, width_alpha: f64) -> Result<Self> {
        let fresh = Self::new(self.gamma, width_alpha, self.k_max)?;
        fresh.skewed(self.skew.0, self.skew.1)
    }

    pub fn d(&self, k: usize) -> i64 {
        self.d[k]
    }

    pub fn t(&self, k: usize) -> i64 {
        self.t[k]
    }

    pub fn w(&self, k: usize) -> i64 {
        self.w[k]
    }

    /// Distance from the axis to the left edge of `R_k`.
    pub fn left_edge(&self, k: usize) -> i64 {
        self.left[k]
    }

    pub fn right_edge(&self, k: usize) -> i64 {
        self.right[k]
    }

    /// Upper-left corner of `R_{k−1}`, `k ≥ 1`.
    pub fn corner_left(&self, k: usize) -> SiteAddress {
        SiteAddress::at(-self.left[k - 1], self.t[k])
    }

    pub fn corner_right(&self, k: usize) -> SiteAddress {
        SiteAddress::at(self.right[k - 1], self.t[k])
    }

    /// Upper-left corner of `R̂_{k−1}`, `k ≥ 1`.
    pub fn hat_corner_left(&self, k: usize) -> SiteAddress {
        SiteAddress::at(-self.w[k - 1], self.t[k])
    }

    pub fn hat_corner_right(&self, k: usize) -> SiteAddress {
        SiteAddress::at(self.w[k - 1], self.t[k])
    }

    /// Last path time covered by the stack, `t_{k_max+1}`.
    pub fn horizon(&self) -> i64 {
        self.t[self.k_max + 1]
    }

    /// Index `k` with `t_k ≤ t < t_{k+1}`.
    pub fn level_of(&self, t: i64) -> Result<usize> {
        if t < 0 || t > self.horizon() {
            return Err(Error::Horizon {
                t,
                horizon: self.horizon(),
            });
        }
        Ok(self.t.partition_point(|&tk| tk <= t) - 1)
    }

    /// Right edge of the stack at path time `t`.
    pub fn sigma_gamma(&self, t: i64) -> Result<i64> {
        Ok(self.right[self.level_of(t)?])
    }

    /// Largest `(σ_γ(t) − 2)/√t` over `t ∈ [t_k, t_{k+1})` next to the
    /// envelope `sqrt((γ²−1)/(1−γ^{−2k}))`, for `k ≥ 1`.
    pub fn level_ratio(&self, k: usize) -> (f64, f64) {
        let g2 = self.gamma * self.gamma;
        let bound = ((g2 - 1.0) / (1.0 - g2.powi(-(k as i32)))).sqrt();
        // σ is constant on the level, so the ratio peaks at t = t_k
        let ratio = (self.right[k] - 2) as f64 / (self.t[k] as f64).sqrt();
        (ratio, bound)
    }

    /// CSV `k,d_k,t_k,w_k` for `k = 0 ..= k_max + 1`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["k", "d_k", "t_k", "w_k"])?;
        for k in 0..=self.k_max + 1 {
            w.write_record([
                k.to_string(),
                self.d[k].to_string(),
                self.t[k].to_string(),
                self.w[k].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
