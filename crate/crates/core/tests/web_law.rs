use dydw::{Replicates, SiteAddress, WebId, WebPair};
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn site(i: u64) -> SiteAddress {
    let x = (i % 1000) as i64;
    let t = (i / 1000) as i64;
    SiteAddress::new(x - (x + t) % 2, t).unwrap()
}

#[test]
fn no_ring_probability_is_exp_minus_one() {
    let web = WebPair::new(11, 1.0).unwrap();
    let n = 200_000u64;
    let hits = (0..n)
        .filter(|&i| {
            web.arrow_stream(WebId::Main, site(i))
                .unwrap()
                .ring_times()
                .is_empty()
        })
        .count() as f64;
    let p = (-1.0f64).exp();
    let se = (p * (1.0 - p) / n as f64).sqrt();
    assert!((hits / n as f64 - p).abs() < 4.0 * se);
}

#[test]
fn switch_count_is_half_the_ring_count() {
    let web = WebPair::new(12, 1.0).unwrap();
    let n = 100_000u64;
    let (mut rings, mut switches) = (0usize, 0usize);
    for i in 0..n {
        let s = web.arrow_stream(WebId::Secondary, site(i)).unwrap();
        rings += s.ring_times().len();
        switches += s.switches().count();
    }
    // Poisson(1) rings, each a switch with probability 1/2
    let (r, w) = (rings as f64 / n as f64, switches as f64 / n as f64);
    assert!((r - 1.0).abs() < 4.0 / (n as f64).sqrt());
    assert!((w - 0.5).abs() < 4.0 * (0.5 / n as f64).sqrt());
}

#[test]
fn persistence_follows_two_state_law() {
    let web = WebPair::new(13, 2.0).unwrap();
    let n = 100_000u64;
    for tau in [0.25, 0.5, 1.0, 2.0] {
        let same = (0..n)
            .filter(|&i| {
                let s = web.arrow_stream(WebId::Main, site(i)).unwrap();
                s.arrow_at(0.0).unwrap() == s.arrow_at(tau).unwrap()
            })
            .count() as f64
            / n as f64;
        let p = (1.0 + (-tau).exp()) / 2.0;
        assert!(
            (same - p).abs() < 4.0 * (p * (1.0 - p) / n as f64).sqrt(),
            "τ={tau}: {same} vs {p}"
        );
    }
}

#[test]
fn pair_increments_are_independent_fair_signs() {
    // pool increments of the non-coalescing pair; cells (+,+), (+,−), (−,+), (−,−)
    let n = 100_000u64;
    let rows = Replicates::new(n, 5).map(|_, seed| {
        let web = WebPair::new(seed, 1.0).unwrap();
        let (l, r) = dydw::web::trace_pair_noncoalescing(
            &web,
            SiteAddress::new(-2, 0).unwrap(),
            SiteAddress::new(2, 0).unwrap(),
            0.3,
            8,
        )
        .unwrap();
        let mut counts = [[0u64; 4]; 2];
        for t in 0..8 {
            let meet = usize::from(l.positions[t] == r.positions[t]);
            let dl = usize::from(l.positions[t + 1] < l.positions[t]);
            let dr = usize::from(r.positions[t + 1] < r.positions[t]);
            counts[meet][2 * dl + dr] += 1;
        }
        counts
    });
    let mut meeting = [0u64; 4];
    let mut all = [0u64; 4];
    for c in &rows {
        for j in 0..4 {
            meeting[j] += c[1][j];
            all[j] += c[0][j] + c[1][j];
        }
    }
    let chi_ok = |cells: [u64; 4]| {
        let total: u64 = cells.iter().sum();
        let e = total as f64 / 4.0;
        let stat: f64 = cells.iter().map(|&o| (o as f64 - e).powi(2) / e).sum();
        ChiSquared::new(3.0).unwrap().sf(stat) > 1e-3
    };
    assert!(meeting.iter().sum::<u64>() > 10_000);
    assert!(chi_ok(meeting), "{meeting:?}");
    assert!(chi_ok(all), "{all:?}");
}

#[test]
fn streams_do_not_depend_on_window_length_or_call_order() {
    let short = WebPair::new(99, 1.0).unwrap();
    let long = WebPair::new(99, 5.0).unwrap();
    for i in (0..500).rev() {
        let a = short.arrow_stream(WebId::Main, site(i)).unwrap();
        let b = long.arrow_stream(WebId::Main, site(i)).unwrap();
        let n = a.ring_times().len();
        assert_eq!(a.ring_times(), &b.ring_times()[..n]);
        assert_eq!(a.values(), &b.values()[..n + 1]);
    }
}
