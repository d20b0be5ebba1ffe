//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use dydw::bounds::{
    brownian_stay_probability, f_of_p, lower_bound, p_value, solve_p, walk_stay_estimate, PValue,
    P_EPSILON,
};
use dydw::events::evaluate_event;
use dydw::mc::{
    decorrelation_sweep, estimate_event, mean_tau_measure, pivotal_chain, second_moment_bound,
    superdiffusive_tail_bound, tail_envelope_formula,
};
use dydw::rng::{derive_key, draw, unit_open0};
use dydw::sticking::{
    classify_sticking, coupling_trace, decompose, survival_table, StickQuadruple, LL, LR, RL, RR,
};
use dydw::tau::{pivotal_endpoint_census, switch_times, tau_interval_set};
use dydw::{
    ArrowField, EventKind, EventSpec, RectangleStack, Replicates, SiteAddress, WebId, WebPair,
};
use rayon::prelude::*;

type Outcome = Result<String, String>;
type Criterion = (&'static str, Option<Duration>, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn err<E: std::fmt::Debug>(e: E) -> String {
    format!("error: {e:?}")
}

/// Arrow field that is fixed on a finite list of sites and +1 elsewhere.
struct Assigned<'a> {
    sites: &'a [(WebId, SiteAddress)],
    mask: u64,
}

impl ArrowField for Assigned<'_> {
    fn arrow(&self, web: WebId, site: SiteAddress, _tau: f64) -> i8 {
        match self.sites.iter().position(|s| *s == (web, site)) {
            Some(i) if self.mask >> i & 1 == 1 => 1,
            Some(_) => -1,
            None => 1,
        }
    }
}

fn c1_exact_oracle() -> Outcome {
    let stack = RectangleStack::new(3.0, 1.0, 1).map_err(err)?;
    let spec = EventSpec::new(EventKind::C, 0, &stack).map_err(err)?;
    // four-step walk from 0 confined to [−2, 2]
    let walks = (0u32..16)
        .filter(|bits| {
            let mut x = 0i32;
            (0..4).all(|i| {
                x += if bits >> i & 1 == 1 { 1 } else { -1 };
                x.abs() <= 2
            })
        })
        .count();
    // every arrow configuration on the dependence region
    let sites: Vec<_> = spec.dependence_region().iter().collect();
    if sites.len() > 24 {
        return Err(format!(
            "dependence region has {} sites, too many to enumerate",
            sites.len()
        ));
    }
    let total = 1u64 << sites.len();
    let hits = (0..total)
        .filter(|&mask| {
            spec.holds_in(
                &Assigned {
                    sites: &sites,
                    mask,
                },
                0.0,
            )
        })
        .count();
    let field_exact = hits as f64 / total as f64;
    let e = estimate_event(&spec, 0.0, &Replicates::new(100_000, 1)).map_err(err)?;
    let z = (e.mean - 0.75) / e.stderr;
    check(
        walks == 12 && field_exact == 0.75 && z.abs() <= 3.0,
        format!(
            "walks 12/16 = {}, region enumeration {hits}/{total} = {field_exact}, MC {:.5} ± {:.5} (z = {z:.2})",
            walks == 12,
            e.mean,
            e.stderr
        ),
    )
}

fn c2_arrow_law() -> Outcome {
    let web = WebPair::new(2, 2.0).map_err(err)?;
    let n = 1_000_000i64;
    let mut lines = Vec::new();
    let mut ok = true;
    for tau in [0.25, 0.5, 1.0, 2.0] {
        let same = (0..n)
            .into_par_iter()
            .map(|i| {
                // distinct even sites along a few rows
                let (t, x) = (i % 8, 2 * (i / 8) + (i % 8) % 2);
                let s = web
                    .arrow_stream(WebId::Main, SiteAddress::new(x, t).unwrap())
                    .unwrap();
                u64::from(s.value_at(0.0) == s.value_at(tau))
            })
            .sum::<u64>();
        let p_hat = same as f64 / n as f64;
        let p = (1.0 + (-tau).exp()) / 2.0;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        let z = (p_hat - p) / se;
        ok &= z.abs() <= 3.0;
        lines.push(format!("τ={tau}: z={z:.2}"));
    }
    check(ok, lines.join(", "))
}

fn all_specs(stack: &RectangleStack) -> Vec<EventSpec> {
    let mut specs = Vec::new();
    for k in 0..=stack.k_max() {
        for kind in [
            EventKind::B,
            EventKind::C,
            EventKind::AHat,
            EventKind::Upsilon,
        ] {
            if let Ok(s) = EventSpec::new(kind, k, stack) {
                specs.push(s);
            }
        }
    }
    specs
}

fn c3_interval_exactness() -> Outcome {
    let stack = RectangleStack::new(2.0, 0.5, 3).map_err(err)?;
    let specs = all_specs(&stack);
    let window = (0.0, 1.0);
    let rows =
        Replicates::new(100, 3).try_map(|i, seed| -> Result<(usize, usize, usize), String> {
            let web = WebPair::new(seed, 1.0).map_err(err)?;
            let key = derive_key(seed, &[0xacce, i]);
            let (mut disagree, mut bad_endpoints, mut endpoints) = (0, 0, 0);
            for spec in &specs {
                let set = tau_interval_set(&web, spec, window).map_err(err)?;
                for j in 0..1000 {
                    let tau = unit_open0(draw(key, j));
                    if set.contains(tau) != evaluate_event(&web, spec, tau).map_err(err)? {
                        disagree += 1;
                    }
                }
                let switches =
                    switch_times(&web, &spec.dependence_region(), window).map_err(err)?;
                for e in set.endpoints() {
                    endpoints += 1;
                    if !switches.iter().any(|s| s == &e) {
                        bad_endpoints += 1;
                    }
                }
            }
            Ok((disagree, bad_endpoints, endpoints))
        })?;
    let disagree: usize = rows.iter().map(|r| r.0).sum();
    let bad: usize = rows.iter().map(|r| r.1).sum();
    let endpoints: usize = rows.iter().map(|r| r.2).sum();
    check(
        disagree == 0 && bad == 0,
        format!(
            "{} events × 100 webs × 1000 τ: {disagree} disagreements; {bad}/{endpoints} endpoints off the switch list",
            specs.len()
        ),
    )
}

fn c4_fubini() -> Outcome {
    let stack = RectangleStack::new(2.0, 0.5, 2).map_err(err)?;
    let spec = EventSpec::new(EventKind::C, 1, &stack).map_err(err)?;
    let m = mean_tau_measure(&spec, (0.0, 1.0), &Replicates::new(10_000, 4)).map_err(err)?;
    let p = estimate_event(&spec, 0.0, &Replicates::new(100_000, 40)).map_err(err)?;
    let z = (m.mean - p.mean) / m.combined_stderr(&p);
    check(
        z.abs() <= 3.0,
        format!(
            "E|C_1 ∩ [0,1]| = {:.5} ± {:.5}, P(C_1) = {:.5} ± {:.5}, z = {z:.2}",
            m.mean, m.stderr, p.mean, p.stderr
        ),
    )
}

fn c5_decorrelation() -> Outcome {
    let stack = RectangleStack::new(2.0, 0.5, 3).map_err(err)?;
    let grid = [0.02, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 4.0, 8.0];
    let sw = decorrelation_sweep(&stack, 2, &grid, &Replicates::new(100_000, 5)).map_err(err)?;
    let last = sw.points.last().ok_or("empty sweep")?;
    let z_last = last.excess / last.excess_stderr;
    let a_ok = !sw.fit.degenerate && sw.fit.a > 3.0 * sw.fit.a_stderr;
    check(
        a_ok && z_last.abs() <= 3.0,
        format!(
            "a = {:.4} ± {:.4} over {} points; excess at τ′={} is {:.2e} (z = {z_last:.2})",
            sw.fit.a, sw.fit.a_stderr, sw.fit.n_points, last.tau_prime, last.excess
        ),
    )
}

fn c6_sticking() -> Outcome {
    let stack = RectangleStack::new(2.0, 0.5, 3).map_err(err)?;
    let (k, tau, tau_prime) = (2, 0.0, 0.1);
    let checks = Replicates::new(1_000, 6).try_map(|_, seed| -> Result<(usize, bool), String> {
        let web = WebPair::new(seed, 1.0).map_err(err)?;
        let quad = StickQuadruple::trace(&web, &stack, k, tau, tau_prime).map_err(err)?;
        let profile = classify_sticking(&web, &quad).map_err(err)?;
        let g = profile.g();
        let parts = [LL, LR, RL, RR].map(|m| profile.g_with(m));
        let split_bad = (0..g.len())
            .filter(|&t| {
                let tt = t as i64;
                tt - g[t] > parts.iter().map(|p| tt - p[t]).sum::<i64>()
            })
            .count();
        let d = decompose(&quad, &profile);
        let rebuilt = d.is_ok_and(|d| {
            (0..4).all(|p| (0..=quad.steps()).all(|t| d.reconstruct(p, t) == quad.paths[p][t]))
        });
        Ok((split_bad, rebuilt))
    })?;
    let split_bad: usize = checks.iter().map(|c| c.0).sum();
    let rebuild_bad = checks.iter().filter(|c| !c.1).count();
    let traces = Replicates::new(100_000, 60)
        .try_map(|_, seed| {
            let web = WebPair::new(seed, 1.0)?;
            coupling_trace(&web, &stack, k, tau, tau_prime, 64)
        })
        .map_err(err)?;
    let js = [1, 2, 3, 4, 5];
    let rows = survival_table(&traces, &js, 60).map_err(err)?;
    let dominated = rows
        .iter()
        .all(|r| r.starred.mean <= r.reference.mean + 3.0 * r.stderr);
    let detail: Vec<String> = rows
        .iter()
        .map(|r| format!("j={}: {:.4}≤{:.4}", r.j, r.starred.mean, r.reference.mean))
        .collect();
    check(
        split_bad == 0 && rebuild_bad == 0 && dominated,
        format!(
            "split violations {split_bad}, reconstruction failures {rebuild_bad}/1000, domination {}",
            detail.join(" ")
        ),
    )
}

fn c7_second_moment() -> Outcome {
    let stack = RectangleStack::new(3.0, 0.5, 2).map_err(err)?;
    let mut ok = true;
    let mut lines = Vec::new();
    for n in 0..=2 {
        let sm = second_moment_bound(&stack, n, 256, &Replicates::new(10_000, 70 + n as u64))
            .map_err(err)?;
        let sigma = sm.ratio_stderr.hypot(sm.observed_nonempty.stderr);
        ok &= sm.ratio <= sm.observed_nonempty.mean + 3.0 * sigma;
        lines.push(format!(
            "n={n}: ratio {:.4} vs P(E_n≠∅) {:.4}{}",
            sm.ratio,
            sm.observed_nonempty.mean,
            if sm.degenerate { " (degenerate)" } else { "" }
        ));
    }
    check(ok, lines.join(", "))
}

fn c8_superdiffusive_tail() -> Outcome {
    let stack = RectangleStack::new(2.0, 0.1, 3).map_err(err)?;
    let mut ok = true;
    let mut lines = Vec::new();
    for k in 1..=3 {
        let t = superdiffusive_tail_bound(&stack, k, &Replicates::new(100_000, 80 + k as u64))
            .map_err(err)?;
        ok &= t.holds;
        lines.push(format!(
            "k={k}: {:.5} vs envelope {:.5}",
            t.estimate.mean, t.envelope
        ));
    }
    // 0.3 · 2^{−4·2·0.01} / sqrt(ln 36), evaluated at 30 digits
    let hand = 0.149_928_433_394_606_1;
    let got = tail_envelope_formula(0.3, 2.0, 0.1, 6, 2);
    ok &= (got - hand).abs() <= 1e-12;
    lines.push(format!("formula error {:.1e}", (got - hand).abs()));
    check(ok, lines.join(", "))
}

fn c9_pivotal() -> Outcome {
    let stack = RectangleStack::new(2.0, 0.5, 3).map_err(err)?;
    let mut ok = true;
    let mut lines = Vec::new();
    for k in 1..=3 {
        let c = pivotal_chain(&stack, k, &Replicates::new(10_000, 90 + k as u64)).map_err(err)?;
        let holds =
            c.p_exists.mean <= c.p_at_zero.mean + c.mean_endpoints.mean + 3.0 * c.slack.stderr;
        ok &= holds;
        lines.push(format!(
            "k={k}: {:.4} ≤ {:.4} + {:.4}",
            c.p_exists.mean, c.p_at_zero.mean, c.mean_endpoints.mean
        ));
        let spec = EventSpec::new(EventKind::Upsilon, k, &stack).map_err(err)?;
        let misattributed =
            Replicates::new(200, 900 + k as u64).try_map(|_, seed| -> Result<usize, String> {
                let web = WebPair::new(seed, 1.0).map_err(err)?;
                let census = pivotal_endpoint_census(&web, &spec, (0.0, 1.0)).map_err(err)?;
                let switches =
                    switch_times(&web, &spec.dependence_region(), (0.0, 1.0)).map_err(err)?;
                Ok(census
                    .endpoints
                    .iter()
                    .filter(|e| {
                        let owners: Vec<_> = switches.iter().filter(|s| s.tau == e.tau).collect();
                        owners.len() != 1 || owners[0].site != e.site || owners[0].web != e.web
                    })
                    .count())
            })?;
        let bad: usize = misattributed.iter().sum();
        ok &= bad == 0;
        lines.push(format!("census misattributions {bad}"));
    }
    check(ok, lines.join(", "))
}

fn c10_sigma() -> Outcome {
    let mut ok = true;
    let mut lines = Vec::new();
    for gamma in [1.5, 2.0, 3.0, 5.0] {
        let stack = RectangleStack::new(gamma, 0.5, 5).map_err(err)?;
        let t6 = stack.t(6);
        let mut worst = f64::NEG_INFINITY;
        for t in 0..=t6 {
            let s = stack.sigma_gamma(t).map_err(err)? as f64;
            worst = worst.max(s - (2.0 + gamma * (t as f64).sqrt()));
        }
        let ratios_ok = (1..=5).all(|k| {
            let (r, b) = stack.level_ratio(k);
            r <= b
        });
        ok &= worst <= 0.0 && ratios_ok;
        lines.push(format!(
            "γ={gamma}: t_6={t6}, max excess {worst:.3}, ratios {ratios_ok}"
        ));
    }
    check(ok, lines.join("; "))
}

fn c11_brownian_series() -> Outcome {
    let mut ok = true;
    let mut lines = Vec::new();
    for (i, start) in [0.0, 0.5].into_iter().enumerate() {
        let series = brownian_stay_probability(start, 1.0).map_err(err)?;
        let walk = walk_stay_estimate(start, 20, &Replicates::new(1_000_000, 11 + i as u64))
            .map_err(err)?;
        let z = (walk.mean - series) / walk.stderr;
        ok &= z.abs() <= 3.0;
        lines.push(format!(
            "start {start}: series {series:.5}, walk {:.5} ± {:.5}, z = {z:.2}",
            walk.mean, walk.stderr
        ));
    }
    check(ok, lines.join("; "))
}

fn c12_bounds() -> Outcome {
    let grid = [
        0.1, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0,
    ];
    let mut roots = Vec::new();
    let mut worst_residual = 0.0f64;
    for &k in &grid {
        let p = solve_p(k).map_err(err)?;
        worst_residual = worst_residual.max((f_of_p(p, k).map_err(err)? - 1.0).abs());
        roots.push(p);
    }
    let decreasing = roots.windows(2).all(|w| w[1] < w[0]);
    // sandwich on the grid and beyond it, where p drops below ε
    let mut sandwich_bad = Vec::new();
    let mut non_vacuous = 0;
    let extended: Vec<f64> = grid
        .iter()
        .copied()
        .chain((6..=12).map(f64::from))
        .chain([20.0, 50.0, 100.0])
        .collect();
    for &k in &extended {
        let lb = lower_bound(k).map_err(err)?;
        if lb.vacuous {
            continue;
        }
        non_vacuous += 1;
        let upper = match p_value(k).map_err(err)? {
            PValue::Root(p) => 1.0 - 2.0 * p,
            // p < ε, so 1 − 2p exceeds 1 − 2ε
            PValue::BelowEpsilon => 1.0 - 2.0 * P_EPSILON,
            PValue::AboveOneMinusEpsilon => -1.0,
        };
        if lb.lower_bound > upper + 1e-9 {
            sandwich_bad.push(k);
        }
    }
    // large-K trend: monotone increase, and where it first exceeds 0.9
    let trend: Vec<f64> = (0..=12).map(|i| 10f64.powi(i)).collect();
    let lows: Vec<f64> = trend
        .iter()
        .map(|&k| lower_bound(k).map(|l| l.lower_bound))
        .collect::<Result<_, _>>()
        .map_err(err)?;
    let increasing = lows.windows(2).all(|w| w[1] > w[0]);
    let threshold = trend
        .iter()
        .zip(&lows)
        .find(|(_, l)| **l > 0.9)
        .map(|(k, _)| *k);
    check(
        worst_residual <= 1e-10 && decreasing && sandwich_bad.is_empty() && non_vacuous > 0 && increasing && threshold.is_some(),
        format!(
            "max |f−1| {worst_residual:.1e}, p decreasing {decreasing}, sandwich checked at {non_vacuous} non-vacuous K (violations {sandwich_bad:?}), lower bound increasing {increasing}, first K=10^i with lower > 0.9: {}",
            threshold.map_or("none".to_string(), |k| format!("{k:e} (lower {:.4})", lower_bound(k).unwrap().lower_bound))
        ),
    )
}

fn run_cli(args: &[&str], dir: &Path) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_dydw"))
        .args(args)
        .arg("--output-dir")
        .arg(dir)
        .output()
        .map_err(err)?;
    if !out.status.success() {
        return Err(String::from_utf8_lossy(&out.stderr).into_owned());
    }
    let mut csvs: Vec<_> = std::fs::read_dir(dir)
        .map_err(err)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()
        .map_err(err)?;
    csvs.retain(|p| p.extension().is_some_and(|x| x == "csv"));
    csvs.sort();
    let mut bytes = Vec::new();
    for p in csvs {
        bytes.extend(std::fs::read(p).map_err(err)?);
    }
    Ok(bytes)
}

fn c13_determinism() -> Outcome {
    let experiments: [&[&str]; 4] = [
        &["sweep", "--k", "2", "--n", "2000"],
        &["sticking", "--k", "2", "--n", "300"],
        &["search-super", "--n", "300"],
        &["pivotal", "--k", "2", "--n", "1000"],
    ];
    let mut same = 0;
    for args in experiments {
        let a = tempfile::tempdir().map_err(err)?;
        let b = tempfile::tempdir().map_err(err)?;
        let one = run_cli(&[args, &["--workers", "1"]].concat(), a.path())?;
        let eight = run_cli(&[args, &["--workers", "8"]].concat(), b.path())?;
        if one.is_empty() || one != eight {
            return Err(format!(
                "{} output differs between 1 and 8 workers",
                args[0]
            ));
        }
        same += 1;
    }
    Ok(format!(
        "{same} experiments byte-identical across 1 and 8 workers"
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 13] = [
        (
            "exact oracle for C_0 at γ=3",
            Some(Duration::from_secs(10)),
            c1_exact_oracle,
        ),
        (
            "arrow-process law",
            Some(Duration::from_secs(30)),
            c2_arrow_law,
        ),
        (
            "interval exactness",
            Some(Duration::from_secs(120)),
            c3_interval_exactness,
        ),
        ("stationarity and Fubini", None, c4_fubini),
        (
            "decorrelation direction",
            Some(Duration::from_secs(600)),
            c5_decorrelation,
        ),
        ("sticking suite", None, c6_sticking),
        ("second-moment direction", None, c7_second_moment),
        ("superdiffusive tail", None, c8_superdiffusive_tail),
        ("pivotal chain", None, c9_pivotal),
        ("σ_γ bounds", Some(Duration::from_secs(1)), c10_sigma),
        ("Brownian series vs walk", None, c11_brownian_series),
        ("bounds module", None, c12_bounds),
        ("determinism across worker counts", None, c13_determinism),
    ];
    let mut failures = 0;
    for (i, (name, budget, f)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let outcome = f();
        let elapsed = start.elapsed();
        let over = budget.is_some_and(|b| elapsed > b);
        let (pass, detail) = match outcome {
            Ok(d) if !over => (true, d),
            Ok(d) => (
                false,
                format!("{d}; runtime over budget {:?}", budget.unwrap()),
            ),
            Err(d) => (false, d),
        };
        failures += usize::from(!pass);
        println!(
            "{} #{:<2} {name} [{:.2}s]: {detail}",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            elapsed.as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failures} failed", 13 - failures);
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
