//! One function per experiment. Each writes its data files and returns the
//! headline numbers for the JSON summary.

use dydw::bounds::{bound_report, write_bounds_csv};
use dydw::mc::{
    decorrelation_sweep, estimate_event, joint_event, pivotal_chain, second_moment_bound,
    superdiffusive_tail_bound, Estimate,
};
use dydw::sticking::{
    classify_sticking, coupling_trace, decompose, lemma2_envelope, lemma2_statistic,
    modulus_statistic, survival_table, write_survival_csv, StickQuadruple, StickingProfile, LL, LR,
    RL, RR,
};
use dydw::tau::{exceptional_search_sub, exceptional_search_super, tau_interval_set};
use dydw::{EventSpec, RectangleStack, Replicates, SiteAddress, WebPair};
use serde_json::{json, to_value, Value};

use crate::{CliError, Config, Emitter, Experiment};

type Out = Result<Value, CliError>;

pub(crate) fn dispatch(cfg: &Config, out: &mut Emitter) -> Out {
    use Experiment::*;
    match cfg.experiment {
        DumpStream => dump_stream(cfg, out),
        Geometry => geometry(cfg, out),
        Estimate => estimate(cfg, out),
        Joint => joint(cfg, out),
        Sweep => sweep(cfg, out),
        TauSet => tau_set(cfg, out),
        SearchSub => search_sub(cfg, out),
        SearchSuper => search_super(cfg, out),
        Sticking => sticking(cfg, out),
        Coupling => coupling(cfg, out),
        Modulus => modulus(cfg, out),
        Pivotal => pivotal(cfg, out),
        Tail => tail(cfg, out),
        Bounds => bounds(cfg, out),
        SecondMoment => second_moment(cfg, out),
    }
}

fn replicates(cfg: &Config) -> Replicates {
    Replicates::new(cfg.n_replicates, cfg.seed_root)
}

fn stack(cfg: &Config) -> Result<RectangleStack, CliError> {
    Ok(RectangleStack::new(cfg.gamma, cfg.width_alpha, cfg.k_max)?)
}

fn spec(cfg: &Config) -> Result<EventSpec, CliError> {
    Ok(EventSpec::new(cfg.event, cfg.k, &stack(cfg)?)?)
}

fn s(v: impl ToString) -> String {
    v.to_string()
}

fn estimate_cells(e: &Estimate) -> [String; 3] {
    [s(e.mean), s(e.stderr), s(e.n_replicates)]
}

fn dump_stream(cfg: &Config, out: &mut Emitter) -> Out {
    let web = WebPair::new(cfg.seed_root, cfg.window.1)?;
    let site = SiteAddress::new(cfg.x, cfg.t)?;
    let stream = web.arrow_stream(cfg.web, site)?;
    out.with("", |w| stream.write_csv(w))?;
    Ok(json!({
        "rings": stream.ring_times().len(),
        "switches": stream.switches().count(),
        "initial_value": stream.values()[0],
    }))
}

fn geometry(cfg: &Config, out: &mut Emitter) -> Out {
    let st = stack(cfg)?;
    out.with("", |w| st.write_csv(w))?;
    let mut worst = f64::NEG_INFINITY;
    for t in 0..=st.horizon() {
        let excess = st.sigma_gamma(t)? as f64 - (2.0 + cfg.gamma * (t as f64).sqrt());
        worst = worst.max(excess);
    }
    let ratios: Vec<Value> = (1..=st.k_max())
        .map(|k| {
            let (ratio, bound) = st.level_ratio(k);
            json!({"k": k, "ratio": ratio, "bound": bound, "holds": ratio <= bound})
        })
        .collect();
    Ok(json!({
        "horizon": st.horizon(),
        "max_sigma_minus_envelope": worst,
        "sigma_envelope_holds": worst <= 0.0,
        "level_ratios": ratios,
    }))
}

fn estimate(cfg: &Config, out: &mut Emitter) -> Out {
    let e = estimate_event(&spec(cfg)?, cfg.tau, &replicates(cfg))?;
    let [mean, se, n] = estimate_cells(&e);
    out.table(
        "",
        &[
            "experiment",
            "gamma",
            "event",
            "k",
            "tau",
            "mean",
            "stderr",
            "n",
            "seed_root",
        ],
        &[vec![
            s("estimate"),
            s(cfg.gamma),
            s(cfg.event),
            s(cfg.k),
            s(cfg.tau),
            mean,
            se,
            n,
            s(cfg.seed_root),
        ]],
    )?;
    Ok(to_value(e).expect("plain data"))
}

fn joint(cfg: &Config, out: &mut Emitter) -> Out {
    let sp = spec(cfg)?;
    let r = replicates(cfg);
    let j = joint_event(&sp, cfg.tau, cfg.tau_prime, &r)?;
    let single = estimate_event(&sp, cfg.tau, &r)?;
    let excess = j.mean - single.mean * single.mean;
    let [mean, se, n] = estimate_cells(&j);
    out.table(
        "",
        &[
            "experiment",
            "gamma",
            "event",
            "k",
            "tau",
            "tau_prime",
            "mean",
            "stderr",
            "n",
            "p_single",
            "excess",
        ],
        &[vec![
            s("joint"),
            s(cfg.gamma),
            s(cfg.event),
            s(cfg.k),
            s(cfg.tau),
            s(cfg.tau_prime),
            mean,
            se,
            n,
            s(single.mean),
            s(excess),
        ]],
    )?;
    Ok(json!({"joint": j, "single": single, "excess": excess}))
}

fn sweep(cfg: &Config, out: &mut Emitter) -> Out {
    let st = stack(cfg)?;
    let sw = decorrelation_sweep(&st, cfg.k, &cfg.tau_prime_grid, &replicates(cfg))?;
    let rows: Vec<Vec<String>> = sw
        .points
        .iter()
        .map(|p| {
            vec![
                s(p.tau_prime),
                s(p.delta),
                s(p.joint.mean),
                s(p.joint.stderr),
                s(p.p_squared),
                s(p.excess),
                s(p.excess_stderr),
                s(p.admissible),
                s(p.product_ratio),
                s(p.joint.n_replicates),
            ]
        })
        .collect();
    out.table(
        "",
        &[
            "tau_prime",
            "delta",
            "joint_mean",
            "joint_stderr",
            "p_squared",
            "excess",
            "excess_stderr",
            "admissible",
            "product_ratio",
            "n",
        ],
        &rows,
    )?;
    Ok(json!({
        "p_event": sw.p_event,
        "fit": sw.fit,
        "b": sw.b,
        "product_constant": sw.product_constant,
        "a_positive_at_3_sigma": !sw.fit.degenerate && sw.fit.a > 3.0 * sw.fit.a_stderr,
    }))
}

fn tau_set(cfg: &Config, out: &mut Emitter) -> Out {
    let web = WebPair::new(cfg.seed_root, cfg.tau_max())?;
    let set = tau_interval_set(&web, &spec(cfg)?, cfg.window)?;
    out.with("", |w| set.write_csv(w))?;
    Ok(json!({
        "measure": set.measure(),
        "intervals": set.intervals().len(),
        "endpoints": set.endpoints().len(),
    }))
}

fn search_sub(cfg: &Config, out: &mut Emitter) -> Out {
    let web = WebPair::new(cfg.seed_root, cfg.tau_max())?;
    let set = exceptional_search_sub(&web, &stack(cfg)?, cfg.k, cfg.window)?;
    out.with("", |w| set.write_csv(w))?;
    Ok(json!({
        "n": cfg.k,
        "measure": set.measure(),
        "nonempty": !set.is_empty(),
        "intervals": set.intervals().len(),
        "closure_gaps": set.closure_gaps().len(),
    }))
}

fn search_super(cfg: &Config, out: &mut Emitter) -> Out {
    let st = stack(cfg)?;
    let (window, tau_max) = (cfg.window, cfg.tau_max());
    let searches = replicates(cfg).try_map(|_, seed| {
        let web = WebPair::new(seed, tau_max)?;
        exceptional_search_super(&web, &st, &cfg.k_list, window)
    })?;
    let rows: Vec<Vec<String>> = searches
        .iter()
        .enumerate()
        .map(|(i, sr)| {
            let last = sr.levels.last().map(|l| l.1);
            vec![
                s(i),
                s(sr.depth),
                s(sr.completed),
                last.map(|l| s(l.0)).unwrap_or_default(),
                last.map(|l| s(l.1)).unwrap_or_default(),
            ]
        })
        .collect();
    out.table("", &["replicate", "depth", "completed", "a", "b"], &rows)?;
    let reached: Vec<Value> = (1..=cfg.k_list.len())
        .map(|d| {
            let xs: Vec<f64> = searches.iter().map(|sr| f64::from(sr.depth >= d)).collect();
            json!({"depth": d, "frequency": Estimate::from_samples(&xs, cfg.seed_root).ok()})
        })
        .collect();
    Ok(json!({"k_list": cfg.k_list, "reached": reached}))
}

/// Split inequality and reconstruction checks over one profile; returns
/// the number of violated integer times.
fn split_violations(profile: &StickingProfile) -> usize {
    let g = profile.g();
    let parts = [LL, LR, RL, RR].map(|m| profile.g_with(m));
    (0..g.len())
        .filter(|&t| {
            let tt = t as i64;
            let rhs: i64 = parts.iter().map(|p| tt - p[t]).sum();
            tt - g[t] > rhs
        })
        .count()
}

fn sticking(cfg: &Config, out: &mut Emitter) -> Out {
    let st = stack(cfg)?;
    let tau_max = cfg.tau_max();
    let (k, tau) = (cfg.k, cfg.tau);
    let first_web = WebPair::new(cfg.seed_root, tau_max)?;
    let first = classify_sticking(
        &first_web,
        &StickQuadruple::trace(&first_web, &st, k, tau, cfg.tau_prime)?,
    )?;
    out.with("_labels", |w| first.write_csv(w))?;
    let mut points = Vec::new();
    let mut violations = 0usize;
    let mut reconstruction_failures = 0usize;
    for (i, &tau_prime) in cfg.tau_prime_grid.iter().enumerate() {
        let r = replicates(cfg).fork(i as u64);
        let profiles = r.try_map(
            |_, seed| -> Result<(StickingProfile, usize, bool), CliError> {
                let web = WebPair::new(seed, tau_max)?;
                let quad = StickQuadruple::trace(&web, &st, k, tau, tau_prime)?;
                let profile = classify_sticking(&web, &quad)?;
                let v = split_violations(&profile);
                let ok = decompose(&quad, &profile).is_ok();
                Ok((profile, v, ok))
            },
        )?;
        violations += profiles.iter().map(|p| p.1).sum::<usize>();
        reconstruction_failures += profiles.iter().filter(|p| !p.2).count();
        let profiles: Vec<StickingProfile> = profiles.into_iter().map(|p| p.0).collect();
        points.push((
            tau_prime,
            lemma2_statistic(&profiles, cfg.beta, r.seed_root)?,
        ));
    }
    let rows: Vec<Vec<String>> = points
        .iter()
        .map(|(tp, p)| {
            vec![
                s(tp),
                s(p.delta),
                s(p.beta),
                s(p.estimate.mean),
                s(p.estimate.stderr),
                s(p.estimate.n_replicates),
            ]
        })
        .collect();
    out.table(
        "_lemma2",
        &["tau_prime", "delta", "beta", "mean", "stderr", "n"],
        &rows,
    )?;
    let stats: Vec<_> = points.iter().map(|p| p.1.clone()).collect();
    // frequencies ordered by decreasing Δ should not increase beyond noise
    let mut by_delta = stats.clone();
    by_delta.sort_by(|a, b| b.delta.total_cmp(&a.delta));
    let nonincreasing = by_delta.windows(2).all(|w| {
        w[1].estimate.mean
            <= w[0].estimate.mean + 3.0 * w[0].estimate.combined_stderr(&w[1].estimate)
    });
    Ok(json!({
        "split_violations": violations,
        "reconstruction_failures": reconstruction_failures,
        "envelope_constant": lemma2_envelope(&stats),
        "nonincreasing_as_delta_shrinks": nonincreasing,
        "first_replicate_sticking_steps": first.sticking_steps(),
    }))
}

fn coupling(cfg: &Config, out: &mut Emitter) -> Out {
    let st = stack(cfg)?;
    let tau_max = cfg.tau_max();
    let traces = replicates(cfg).try_map(|_, seed| {
        let web = WebPair::new(seed, tau_max)?;
        coupling_trace(&web, &st, cfg.k, cfg.tau, cfg.tau_prime, cfg.horizon)
    })?;
    let js: Vec<u64> = (1..=5.min(cfg.horizon)).collect();
    let rows = survival_table(&traces, &js, cfg.seed_root)?;
    out.with("", |w| write_survival_csv(&rows, w))?;
    let dominated: Vec<bool> = rows
        .iter()
        .map(|r| r.starred.mean <= r.reference.mean + 3.0 * r.stderr)
        .collect();
    Ok(json!({
        "partial_reference": traces.iter().filter(|t| t.0.partial()).count(),
        "partial_starred": traces.iter().filter(|t| t.1.partial()).count(),
        "domination_within_3_sigma": dominated,
    }))
}

fn modulus(cfg: &Config, out: &mut Emitter) -> Out {
    let st = stack(cfg)?;
    let d = st.d(cfg.k) as f64;
    let deltas: Vec<f64> = cfg.tau_prime_grid.iter().map(|tp| 1.0 / (d * tp)).collect();
    let points = modulus_statistic(
        &st,
        cfg.k,
        &replicates(cfg),
        &deltas,
        &[(cfg.exponent_alpha, cfg.beta)],
    )?;
    let rows: Vec<Vec<String>> = points
        .iter()
        .zip(&cfg.tau_prime_grid)
        .map(|(p, tp)| {
            vec![
                s(tp),
                s(p.delta),
                s(p.exponent_alpha),
                s(p.beta),
                s(p.estimate.mean),
                s(p.estimate.stderr),
                s(p.estimate.n_replicates),
            ]
        })
        .collect();
    out.table(
        "",
        &[
            "tau_prime",
            "delta",
            "exponent_alpha",
            "beta",
            "mean",
            "stderr",
            "n",
        ],
        &rows,
    )?;
    Ok(to_value(points).expect("plain data"))
}

fn pivotal(cfg: &Config, out: &mut Emitter) -> Out {
    let chain = pivotal_chain(&stack(cfg)?, cfg.k, &replicates(cfg))?;
    let rows: Vec<Vec<String>> = [
        ("p_exists", &chain.p_exists),
        ("p_at_zero", &chain.p_at_zero),
        ("p_all", &chain.p_all),
        ("mean_endpoints", &chain.mean_endpoints),
        ("slack", &chain.slack),
    ]
    .iter()
    .map(|(name, e)| {
        let [m, se, n] = estimate_cells(e);
        vec![s(name), m, se, n]
    })
    .collect();
    out.table("", &["quantity", "mean", "stderr", "n"], &rows)?;
    Ok(json!({
        "region_size": chain.region_size,
        "normalized_endpoints": chain.normalized_endpoints,
        "chain_holds_within_3_sigma":
            chain.p_exists.mean <= chain.p_at_zero.mean + chain.mean_endpoints.mean + 3.0 * chain.slack.stderr,
        "chain": chain,
    }))
}

fn tail(cfg: &Config, out: &mut Emitter) -> Out {
    let t = superdiffusive_tail_bound(&stack(cfg)?, cfg.k, &replicates(cfg))?;
    let [m, se, n] = estimate_cells(&t.estimate);
    out.table(
        "",
        &[
            "k",
            "envelope",
            "k_tilde",
            "attained_at",
            "mean",
            "stderr",
            "n",
            "holds",
        ],
        &[vec![
            s(t.k),
            s(t.envelope),
            s(t.constant.k_tilde),
            s(t.constant.attained_at),
            m,
            se,
            n,
            s(t.holds),
        ]],
    )?;
    Ok(to_value(t).expect("plain data"))
}

fn bounds(cfg: &Config, out: &mut Emitter) -> Out {
    let reports = cfg
        .k_grid
        .iter()
        .map(|&k| bound_report(k, k))
        .collect::<Result<Vec<_>, _>>()?;
    out.with("", |w| write_bounds_csv(&reports, w))?;
    Ok(json!({
        "rows": reports.len(),
        "empty_flags": reports.iter().filter(|r| r.empty == Some(true)).count(),
        "max_lower_bound": reports.iter().filter_map(|r| r.lower.map(|l| l.lower_bound)).fold(f64::NEG_INFINITY, f64::max),
    }))
}

fn second_moment(cfg: &Config, out: &mut Emitter) -> Out {
    let sm = second_moment_bound(&stack(cfg)?, cfg.k, cfg.resolution, &replicates(cfg))?;
    out.table(
        "",
        &[
            "n",
            "ratio",
            "ratio_stderr",
            "quadrature_ratio",
            "mean_measure",
            "observed_nonempty",
            "observed_stderr",
            "replicates",
            "degenerate",
        ],
        &[vec![
            s(sm.n),
            s(sm.ratio),
            s(sm.ratio_stderr),
            s(sm.quadrature_ratio),
            s(sm.mean_measure.mean),
            s(sm.observed_nonempty.mean),
            s(sm.observed_nonempty.stderr),
            s(sm.mean_measure.n_replicates),
            s(sm.degenerate),
        ]],
    )?;
    if sm.degenerate {
        eprintln!("dydw: second moment is degenerate (no replicate had a nonempty set)");
    }
    Ok(to_value(sm).expect("plain data"))
}
