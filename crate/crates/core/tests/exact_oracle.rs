use std::collections::{BTreeMap, BTreeSet};

use spiking_ips::ctmc::{self, CtmcModel};
use spiking_ips::gillespie::{self, SimSpec};
use spiking_ips::stats::{self, SampleSet};
use spiking_ips::{RateParams, Window};

type State = BTreeSet<i64>;

/// Generator of the finite system on `[-n, n]` written directly from the
/// transition rules over explicit sets.
fn brute_generator(n: i64, gamma: f64) -> (Vec<State>, Vec<Vec<f64>>) {
    let sites: Vec<i64> = (-n..=n).collect();
    let mut states = Vec::new();
    for mask in 0u32..1 << sites.len() {
        states.push(sites.iter().enumerate().filter(|(k, _)| mask >> k & 1 == 1).map(|(_, &s)| s).collect::<State>());
    }
    let index: BTreeMap<State, usize> = states.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
    let mut q = vec![vec![0.0; states.len()]; states.len()];
    for (a, s) in states.iter().enumerate() {
        for &i in s {
            let mut leaked = s.clone();
            leaked.remove(&i);
            q[a][index[&leaked]] += gamma;
            let mut spiked = leaked.clone();
            for j in [i - 1, i + 1] {
                if j.abs() <= n {
                    spiked.insert(j);
                }
            }
            q[a][index[&spiked]] += 1.0;
        }
        let out: f64 = q[a].iter().sum();
        q[a][a] = -out;
    }
    (states, q)
}

/// Gaussian elimination with partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

fn brute_mean_from_all_one(n: i64, gamma: f64) -> f64 {
    let (states, q) = brute_generator(n, gamma);
    let transient: Vec<usize> = (0..states.len()).filter(|&i| !states[i].is_empty()).collect();
    let a: Vec<Vec<f64>> = transient.iter().map(|&i| transient.iter().map(|&j| -q[i][j]).collect()).collect();
    let m = solve(a, vec![1.0; transient.len()]);
    let full = transient.iter().position(|&i| states[i].len() as i64 == 2 * n + 1).unwrap();
    m[full]
}

fn model(n: u32, gamma: f64) -> CtmcModel {
    CtmcModel::build(n, RateParams::new(gamma).unwrap()).unwrap()
}

#[test]
fn mean_matches_brute_force_solve() {
    for (n, gamma) in [(1, 0.5), (1, 0.2), (2, 1.0), (2, 0.3)] {
        let m = model(n, gamma);
        let exact = ctmc::mean_extinction(&m).unwrap()[m.all_one_state() as usize];
        let oracle = brute_mean_from_all_one(n as i64, gamma);
        assert!((exact - oracle).abs() <= 1e-10 * oracle, "N={n} gamma={gamma}: {exact} vs {oracle}");
    }
}

#[test]
fn generator_entries_match_brute_force() {
    let (states, q) = brute_generator(1, 0.5);
    let m = model(1, 0.5);
    for (a, s) in states.iter().enumerate() {
        let mask = s.iter().map(|&i| 1u32 << (i + 1)).sum::<u32>();
        assert!((m.diagonal(mask) - q[a][a]).abs() < 1e-15);
        for &(t, r) in m.outgoing(mask) {
            let b = states.iter().position(|x| x.iter().map(|&i| 1u32 << (i + 1)).sum::<u32>() == t).unwrap();
            assert!((q[a][b] - r).abs() < 1e-15);
        }
        let nonzero = q[a].iter().enumerate().filter(|&(b, &v)| b != a && v != 0.0).count();
        assert_eq!(nonzero, m.outgoing(mask).len());
    }
}

/// Adaptive Simpson on `[a, b]`.
fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            return left + right + (left + right - whole) / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    rec(f, a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), tol, 40)
}

#[test]
fn mean_is_integral_of_survival() {
    for (n, gamma) in [(0, 0.7), (1, 0.5), (2, 0.4)] {
        let m = model(n, gamma);
        let start = m.all_one_state();
        let mean = ctmc::mean_extinction(&m).unwrap()[start as usize];
        let mut upper = mean;
        while ctmc::survival(&m, start, upper).unwrap() > 1e-13 {
            upper *= 2.0;
        }
        let f = |t: f64| ctmc::survival(&m, start, t).unwrap();
        let integral = simpson(&f, 0.0, upper, 1e-9 * mean);
        assert!((integral - mean).abs() < 1e-6 * mean, "N={n}: {integral} vs {mean}");
    }
}

#[test]
fn survival_and_beta_agree_with_simulation() {
    let gamma = 0.5;
    let m = model(1, gamma);
    let start = m.all_one_state();
    let spec = SimSpec::new(Window::centered(1), RateParams::new(gamma).unwrap(), 2024);
    let reps = 1_000_000;
    let samples = SampleSet::from_taus(gillespie::sample_batch(&spec, reps, 1).unwrap().into_iter().map(|s| s.tau));
    assert_eq!(samples.censored(), 0);

    let p = ctmc::survival(&m, start, 1.0).unwrap();
    let p_hat = stats::survival_fraction(&samples, 1.0);
    let se = (p * (1.0 - p) / reps as f64).sqrt();
    assert!((p_hat - p).abs() < 4.0 * se, "{p_hat} vs {p}");

    let beta = ctmc::beta_exact(&m, start).unwrap();
    let q = stats::quantile(&samples, 1.0 - (-1.0f64).exp()).unwrap();
    assert!((q.value - beta).abs() < 4.0 * q.se, "{q:?} vs {beta}");
    assert!((ctmc::survival(&m, start, beta).unwrap() - (-1.0f64).exp()).abs() < 1e-8);

    let mean = stats::mean_se(&samples).unwrap();
    let exact = ctmc::mean_extinction(&m).unwrap()[start as usize];
    assert!((mean.value - exact).abs() < 3.0 * mean.se);
}

#[test]
fn survival_grid_agrees_with_simulation() {
    for (n, gamma) in [(0u32, 0.3), (2, 0.5), (2, 1.0)] {
        let m = model(n, gamma);
        let start = m.all_one_state();
        let spec = SimSpec::new(Window::centered(n), RateParams::new(gamma).unwrap(), 77 + n as u64);
        let reps = 100_000;
        let samples = SampleSet::from_taus(gillespie::sample_batch(&spec, reps, 1).unwrap().into_iter().map(|s| s.tau));
        for t in [0.5, 1.0, 2.0, 4.0] {
            let p = ctmc::survival(&m, start, t).unwrap();
            let se = (p * (1.0 - p) / reps as f64).sqrt().max(1e-12);
            assert!((stats::survival_fraction(&samples, t) - p).abs() < 4.0 * se, "N={n} gamma={gamma} t={t}");
        }
    }
}

#[test]
fn truncation_bound_is_reported() {
    let m = model(2, 0.2);
    for t in [0.1, 5.0, 50.0] {
        let s = ctmc::survival_with_bound(&m, m.all_one_state(), t).unwrap();
        assert!(s.truncation_bound <= 1e-10);
        assert!((0.0..=1.0).contains(&s.probability));
    }
}
