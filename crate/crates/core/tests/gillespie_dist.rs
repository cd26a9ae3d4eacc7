use spiking_ips::ctmc::{self, CtmcModel};
use spiking_ips::gillespie::{self, SimSpec, Tau};
use spiking_ips::stats::{self, SampleSet};
use spiking_ips::{Configuration, GraphicalRealization, RateParams, Window};

/// Upper `z`-sigma point of a chi-square law with `df` degrees of freedom
/// (Wilson-Hilferty).
fn chi2_upper(df: f64, z: f64) -> f64 {
    let a = 2.0 / (9.0 * df);
    df * (1.0 - a + z * a.sqrt()).powi(3)
}

/// Two-sample chi-square statistic over state counts, pooling sparse cells.
fn two_sample_chi2(a: &[u64], b: &[u64]) -> (f64, f64) {
    let (mut stat, mut cells, mut pool_a, mut pool_b) = (0.0, 0.0f64, 0u64, 0u64);
    for (&x, &y) in a.iter().zip(b) {
        if x + y < 20 {
            pool_a += x;
            pool_b += y;
            continue;
        }
        stat += (x as f64 - y as f64).powi(2) / (x + y) as f64;
        cells += 1.0;
    }
    if pool_a + pool_b > 0 {
        stat += (pool_a as f64 - pool_b as f64).powi(2) / (pool_a + pool_b) as f64;
        cells += 1.0;
    }
    (stat, (cells - 1.0).max(1.0))
}

#[test]
fn occupation_law_matches_graphical_engine() {
    let window = Window::finite(0, 4).unwrap();
    let reps = 100_000;
    for gamma in [0.2, 1.0] {
        let params = RateParams::new(gamma).unwrap();
        for t in [0.5, 1.0, 2.0] {
            let mut direct = vec![0u64; 32];
            let mut graphical = vec![0u64; 32];
            for r in 0..reps {
                let mut spec = SimSpec::new(window, params, 11);
                spec.replica = r;
                direct[gillespie::sample_state_at(&spec, t).unwrap().to_mask() as usize] += 1;
                let g = GraphicalRealization::generate(window, &params, t, 1_000_000 + r).unwrap();
                graphical[g.evolve(&Configuration::all_one(window), t).unwrap().to_mask() as usize] += 1;
            }
            let (stat, df) = two_sample_chi2(&direct, &graphical);
            assert!(stat < chi2_upper(df, 5.0), "gamma={gamma} t={t}: chi2={stat} df={df}");
        }
    }
}

#[test]
fn extinction_time_is_monotone_in_initial_set() {
    let window = Window::finite(-3, 3).unwrap();
    let params = RateParams::new(0.5).unwrap();
    let big = Configuration::from_sites(window, [-3, -1, 0, 2, 3]).unwrap();
    let small = Configuration::from_sites(window, [-1, 2]).unwrap();
    for seed in 0..300 {
        let g = GraphicalRealization::generate(window, &params, 40.0, seed).unwrap();
        let death = |c: &Configuration| {
            let mut s = c.clone();
            for ev in g.events() {
                spiking_ips::graphical::apply_event(&mut s, ev, spiking_ips::Direction::Forward);
                if s.is_empty() {
                    return ev.time;
                }
            }
            f64::INFINITY
        };
        assert!(death(&small) <= death(&big), "seed {seed}");
    }
}

#[test]
fn small_window_means_match_exact() {
    for (n, gamma) in [(0u32, 0.5), (1, 0.5), (1, 1.0)] {
        let params = RateParams::new(gamma).unwrap();
        let spec = SimSpec::new(Window::centered(n), params, 5);
        let samples = SampleSet::from_taus(gillespie::sample_batch(&spec, 200_000, 4).unwrap().into_iter().map(|s| s.tau));
        let est = stats::mean_se(&samples).unwrap();
        let m = CtmcModel::build(n, params).unwrap();
        let exact = ctmc::mean_extinction(&m).unwrap()[m.all_one_state() as usize];
        assert!((est.value - exact).abs() < 3.0 * est.se, "N={n} gamma={gamma}: {est:?} vs {exact}");
    }
}

#[test]
fn batches_are_identical_across_worker_counts() {
    let spec = SimSpec::new(Window::centered(3), RateParams::new(0.4).unwrap(), 99);
    let one = gillespie::sample_batch(&spec, 2000, 1).unwrap();
    let many = gillespie::sample_batch(&spec, 2000, 5).unwrap();
    assert_eq!(one, many);
}

#[test]
fn horizon_cap_censors() {
    let spec = SimSpec::new(Window::centered(10), RateParams::new(0.05).unwrap(), 3).with_cap(5.0);
    let batch = gillespie::sample_batch(&spec, 200, 2).unwrap();
    assert!(batch.iter().any(|s| s.tau == Tau::Censored(5.0)));
    assert!(batch.iter().all(|s| s.tau.finite().is_none_or(|t| t <= 5.0)));
}
