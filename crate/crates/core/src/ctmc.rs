//! Exact chain on the finite window `{-N, ..., N}`.
//!
//! States are `(2N+1)`-bit masks with site `-N` as the least significant
//! bit; the state index is the mask itself, so the empty configuration
//! (the absorbing state) is index 0.

use std::collections::VecDeque;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::model::{Configuration, RateParams, Window};

/// Largest supported window, in sites.
pub const MAX_SITES: usize = 21;
/// Transient-state count up to which the first-passage system is solved densely.
pub const DENSE_LIMIT: usize = 4096;
/// Uniformization truncation bound.
pub const UNIFORMIZATION_EPS: f64 = 1e-10;
pub const BETA_TOL: f64 = 1e-8;

pub const DUMP_HEADER: &str = "# spiking-ips ctmc v1";

#[derive(Clone, Debug)]
pub struct CtmcModel {
    n: u32,
    params: RateParams,
    window: Window,
    /// Outgoing off-diagonal rates per state, targets ascending.
    out: Vec<Vec<(u32, f64)>>,
    /// Total exit rate per state (minus the diagonal).
    exit: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExactResult {
    pub mean_tau: Vec<f64>,
    /// `(t, P(tau <= t))` for the requested initial state.
    pub cdf: Vec<(f64, f64)>,
}

/// A survival probability together with its uniformization truncation bound.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Survival {
    pub probability: f64,
    pub truncation_bound: f64,
}

impl CtmcModel {
    pub fn build(n: u32, params: RateParams) -> Result<Self> {
        let sites = 2 * n as usize + 1;
        if sites > MAX_SITES {
            return Err(Error::Capacity { sites, limit: MAX_SITES });
        }
        let window = Window::centered(n);
        let count = 1usize << sites;
        let gamma = params.gamma();
        let mut out = Vec::with_capacity(count);
        let mut exit = Vec::with_capacity(count);
        let mut row: Vec<(u32, f64)> = Vec::new();
        for mask in 0..count as u32 {
            row.clear();
            for bit in 0..sites {
                if mask & (1 << bit) == 0 {
                    continue;
                }
                let cleared = mask & !(1 << bit);
                if gamma > 0.0 {
                    row.push((cleared, gamma));
                }
                let mut spiked = cleared;
                if bit > 0 {
                    spiked |= 1 << (bit - 1);
                }
                if bit + 1 < sites {
                    spiked |= 1 << (bit + 1);
                }
                row.push((spiked, 1.0));
            }
            row.sort_by_key(|&(t, _)| t);
            let mut merged: Vec<(u32, f64)> = Vec::with_capacity(row.len());
            for &(t, r) in &row {
                match merged.last_mut() {
                    Some((lt, lr)) if *lt == t => *lr += r,
                    _ => merged.push((t, r)),
                }
            }
            exit.push(merged.iter().map(|&(_, r)| r).sum());
            out.push(merged);
        }
        let model = CtmcModel { n, params, window, out, exit };
        model.check_absorption()?;
        Ok(model)
    }

    fn check_absorption(&self) -> Result<()> {
        let count = self.out.len();
        let mut incoming: Vec<Vec<u32>> = vec![Vec::new(); count];
        for (s, row) in self.out.iter().enumerate() {
            for &(t, _) in row {
                incoming[t as usize].push(s as u32);
            }
        }
        let mut seen = vec![false; count];
        seen[0] = true;
        let mut queue = VecDeque::from([0u32]);
        while let Some(s) = queue.pop_front() {
            for &p in &incoming[s as usize] {
                if !seen[p as usize] {
                    seen[p as usize] = true;
                    queue.push_back(p);
                }
            }
        }
        match seen.iter().position(|&v| !v) {
            Some(s) => Err(Error::AbsorbingUnreachable(s as u32)),
            None => Ok(()),
        }
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn params(&self) -> &RateParams {
        &self.params
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn state_count(&self) -> usize {
        self.out.len()
    }

    pub fn absorbing_index(&self) -> usize {
        0
    }

    pub fn all_one_state(&self) -> u32 {
        (self.out.len() - 1) as u32
    }

    pub fn state_of(&self, config: &Configuration) -> Result<u32> {
        Ok(config.embed(self.window)?.to_mask())
    }

    pub fn config_of(&self, state: u32) -> Configuration {
        Configuration::from_mask(self.window, state)
    }

    pub fn outgoing(&self, state: u32) -> &[(u32, f64)] {
        &self.out[state as usize]
    }

    /// Diagonal entry `Q[s][s]`.
    pub fn diagonal(&self, state: u32) -> f64 {
        -self.exit[state as usize]
    }

    fn check_state(&self, state: u32) -> Result<()> {
        if (state as usize) < self.out.len() {
            Ok(())
        } else {
            Err(invalid("state", format!("{state:#b} is not a state of the {}-site chain", 2 * self.n + 1)))
        }
    }

    /// Versioned text dump: `index mask target:rate ...` per state.
    pub fn dump(&self) -> String {
        let width = 2 * self.n as usize + 1;
        let mut s = format!("{DUMP_HEADER} N={} gamma={:.16e}\n", self.n, self.params.gamma());
        for (i, row) in self.out.iter().enumerate() {
            let _ = write!(s, "{i} {i:0width$b}");
            for &(t, r) in row {
                let _ = write!(s, " {t}:{r:.16e}");
            }
            s.push('\n');
        }
        s
    }
}

/// Expected extinction time from every state: solves `(-Q_TT) m = 1` on the
/// transient states. Dense LU up to [`DENSE_LIMIT`] transient states,
/// Gauss-Seidel beyond.
pub fn mean_extinction(model: &CtmcModel) -> Result<Vec<f64>> {
    let count = model.state_count();
    let transient = count - 1;
    let mut m = vec![0.0; count];
    if transient == 0 {
        return Ok(m);
    }
    if transient <= DENSE_LIMIT {
        let mut a = DMatrix::<f64>::zeros(transient, transient);
        for s in 1..count {
            a[(s - 1, s - 1)] = model.exit[s];
            for &(t, r) in &model.out[s] {
                if t != 0 {
                    a[(s - 1, t as usize - 1)] -= r;
                }
            }
        }
        let b = DVector::<f64>::from_element(transient, 1.0);
        let x = a.lu().solve(&b).ok_or_else(|| Error::Solver("singular first-passage system".into()))?;
        for s in 1..count {
            m[s] = x[s - 1];
        }
    } else {
        gauss_seidel(model, &mut m)?;
    }
    if m.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::Solver("non-physical mean extinction time".into()));
    }
    Ok(m)
}

fn gauss_seidel(model: &CtmcModel, m: &mut [f64]) -> Result<()> {
    const MAX_SWEEPS: usize = 200_000;
    for _ in 0..MAX_SWEEPS {
        let mut delta: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for s in (1..m.len()).rev() {
            let acc: f64 = model.out[s].iter().map(|&(t, r)| r * m[t as usize]).sum();
            let v = (1.0 + acc) / model.exit[s];
            delta = delta.max((v - m[s]).abs());
            scale = scale.max(v.abs());
            m[s] = v;
        }
        if delta <= 1e-13 * scale {
            return Ok(());
        }
    }
    Err(Error::Solver(format!("Gauss-Seidel did not converge in {MAX_SWEEPS} sweeps")))
}

/// `P(tau > t)` from `initial` by uniformization.
pub fn survival(model: &CtmcModel, initial: u32, t: f64) -> Result<f64> {
    Ok(survival_with_bound(model, initial, t)?.probability)
}

pub fn survival_with_bound(model: &CtmcModel, initial: u32, t: f64) -> Result<Survival> {
    model.check_state(initial)?;
    if !(t >= 0.0) || !t.is_finite() {
        return Err(invalid("t", format!("must be finite and non-negative, got {t}")));
    }
    if initial == 0 {
        return Ok(Survival { probability: 0.0, truncation_bound: 0.0 });
    }
    let lambda = model.exit.iter().cloned().fold(0.0, f64::max);
    let lt = lambda * t;
    if lt == 0.0 {
        return Ok(Survival { probability: 1.0, truncation_bound: 0.0 });
    }
    let count = model.state_count();
    let mut v = vec![0.0; count];
    v[initial as usize] = 1.0;
    let mut next = vec![0.0; count];
    let ln_lt = lt.ln();
    let mut log_w = -lt;
    let mut mass = 0.0;
    let mut acc = 0.0;
    let mut k: u64 = 0;
    loop {
        let w = log_w.exp();
        mass += w;
        acc += w * (1.0 - v[0]);
        let tail = (1.0 - mass).max(0.0);
        if (k as f64) >= lt && tail <= UNIFORMIZATION_EPS {
            return Ok(Survival { probability: acc.clamp(0.0, 1.0), truncation_bound: tail });
        }
        // v <- v P with P = I + Q / lambda
        next.iter_mut().for_each(|x| *x = 0.0);
        for (s, &p) in v.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            next[s] += p * (1.0 - model.exit[s] / lambda);
            for &(dst, r) in &model.out[s] {
                next[dst as usize] += p * r / lambda;
            }
        }
        std::mem::swap(&mut v, &mut next);
        k += 1;
        log_w += ln_lt - (k as f64).ln();
    }
}

/// `beta` with `P(tau > beta) = e^{-1}`, by bisection on the survival function.
pub fn beta_exact(model: &CtmcModel, initial: u32) -> Result<f64> {
    model.check_state(initial)?;
    if initial == 0 {
        return Err(invalid("initial", "the empty configuration is already extinct"));
    }
    if model.params.gamma() == 0.0 {
        return Err(Error::Divergent("gamma = 0 is the degenerate case with no finite beta".into()));
    }
    let target = (-1.0f64).exp();
    let mut lo = 0.0;
    let mut hi = 1.0 / model.exit[initial as usize];
    while survival(model, initial, hi)? > target {
        lo = hi;
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::Divergent("survival stays above e^-1 beyond t = 1e12".into()));
        }
    }
    for _ in 0..200 {
        if hi - lo <= 1e-3 * BETA_TOL {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if survival(model, initial, mid)? > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

pub fn exact_result(model: &CtmcModel, initial: u32, times: &[f64]) -> Result<ExactResult> {
    let mean_tau = mean_extinction(model)?;
    let cdf = times.iter().map(|&t| Ok((t, 1.0 - survival(model, initial, t)?))).collect::<Result<Vec<_>>>()?;
    Ok(ExactResult { mean_tau, cdf })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(n: u32, g: f64) -> CtmcModel {
        CtmcModel::build(n, RateParams::new(g).unwrap()).unwrap()
    }

    #[test]
    fn single_site_chain() {
        for g in [0.0, 0.5, 1.0, 3.0] {
            let m = model(0, g);
            assert_eq!(m.state_count(), 2);
            assert_eq!(m.outgoing(1), &[(0, 1.0 + g)]);
            let mean = mean_extinction(&m).unwrap();
            assert_eq!(mean[0], 0.0);
            assert!((mean[1] - 1.0 / (1.0 + g)).abs() < 1e-14);
        }
        let m = model(0, 1.0);
        assert!((mean_extinction(&m).unwrap()[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn single_site_survival_and_beta() {
        for g in [0.2, 1.0] {
            let m = model(0, g);
            for t in [0.0, 0.1, 1.0, 4.0] {
                let s = survival(&m, 1, t).unwrap();
                assert!((s - (-(1.0 + g) * t).exp()).abs() < 1e-10, "g={g} t={t}");
            }
            assert!((beta_exact(&m, 1).unwrap() - 1.0 / (1.0 + g)).abs() < 1e-8);
        }
        assert!((beta_exact(&model(0, 1.0), 1).unwrap() - 0.5).abs() < 1e-8);
    }

    #[test]
    fn survival_at_zero_is_one() {
        let m = model(2, 0.5);
        for s in 1..m.state_count() as u32 {
            assert_eq!(survival(&m, s, 0.0).unwrap(), 1.0);
        }
        assert_eq!(survival(&m, 0, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn generator_rows_sum_to_zero() {
        for (n, g) in [(1, 0.5), (2, 0.2), (3, 1.0)] {
            let m = model(n, g);
            for s in 0..m.state_count() as u32 {
                let off: f64 = m.outgoing(s).iter().map(|&(_, r)| r).sum();
                assert!((off + m.diagonal(s)).abs() < 1e-12);
                assert!(m.outgoing(s).iter().all(|&(t, r)| r > 0.0 && t != s));
            }
            assert!(m.outgoing(0).is_empty());
        }
    }

    /// Each off-diagonal entry equals the summed rates of the (site, kind)
    /// map applications producing it, recomputed with the configuration maps.
    #[test]
    fn generator_matches_configuration_maps() {
        let m = model(2, 0.3);
        for s in 0..m.state_count() as u32 {
            let c = m.config_of(s);
            let mut expected: Vec<(u32, f64)> = Vec::new();
            for i in c.iter() {
                expected.push((m.state_of(&c.apply_leak(i).unwrap()).unwrap(), 0.3));
                expected.push((m.state_of(&c.apply_spike(i).unwrap()).unwrap(), 1.0));
            }
            for &(t, r) in m.outgoing(s) {
                let total: f64 = expected.iter().filter(|e| e.0 == t).map(|e| e.1).sum();
                assert!((total - r).abs() < 1e-14);
            }
            let targets: std::collections::BTreeSet<u32> = expected.iter().map(|e| e.0).collect();
            assert_eq!(targets.len(), m.outgoing(s).len());
        }
    }

    #[test]
    fn capacity_guard() {
        assert!(matches!(CtmcModel::build(11, RateParams::new(0.5).unwrap()), Err(Error::Capacity { .. })));
    }

    #[test]
    fn zero_gamma_never_absorbs_beyond_one_site() {
        assert!(matches!(CtmcModel::build(1, RateParams::new(0.0).unwrap()), Err(Error::AbsorbingUnreachable(_))));
        assert!(matches!(beta_exact(&model(0, 0.0), 1), Err(Error::Divergent(_))));
    }

    #[test]
    fn mean_is_nonincreasing_in_gamma() {
        for n in [1, 2] {
            let mut prev = f64::INFINITY;
            for g in [0.05, 0.1, 0.2, 0.5, 1.0, 2.0] {
                let m = model(n, g);
                let v = mean_extinction(&m).unwrap()[m.all_one_state() as usize];
                assert!(v <= prev);
                prev = v;
            }
        }
    }

    #[test]
    fn iterative_solver_agrees_with_dense() {
        let m = model(3, 0.5);
        let dense = mean_extinction(&m).unwrap();
        let mut it = vec![0.0; m.state_count()];
        gauss_seidel(&m, &mut it).unwrap();
        for (a, b) in dense.iter().zip(&it) {
            assert!((a - b).abs() <= 1e-9 * a.max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn cdf_is_monotone() {
        let m = model(1, 0.5);
        let r = exact_result(&m, m.all_one_state(), &[0.0, 0.5, 1.0, 2.0, 5.0, 20.0]).unwrap();
        assert!(r.cdf.windows(2).all(|w| w[0].1 <= w[1].1 + 1e-12));
        assert!(r.cdf.iter().all(|&(_, p)| (0.0..=1.0).contains(&p)));
        assert_eq!(r.mean_tau[0], 0.0);
    }

    #[test]
    fn dump_lists_every_state() {
        let m = model(1, 0.5);
        let d = m.dump();
        assert!(d.starts_with(DUMP_HEADER));
        assert_eq!(d.lines().count(), 1 + 8);
        assert!(d.lines().nth(1).unwrap().starts_with("0 000"));
    }
}
