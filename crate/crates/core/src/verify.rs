//! Realization-level property suites: duality under time reversal,
//! sweep/path equivalence, and the coupling invariants.

use std::collections::HashSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::graphical::{apply_event, Direction, GraphicalRealization, PathQuery};
use crate::model::{Configuration, RateParams, Site, Window};
use crate::parallel;
use crate::rng;

const DUALITY: u64 = 0x4455;
const SWEEP_PATH: u64 = 0x5350;
const COUPLING: u64 = 0x434F;

/// Outcome of one named property check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub checks: u64,
    pub violations: u64,
    /// Replicas excluded because a truncation edge may have interfered.
    pub excluded: u64,
    pub inconclusive: bool,
    pub note: String,
}

impl CheckReport {
    pub fn new(name: &str) -> Self {
        CheckReport { name: name.into(), checks: 0, violations: 0, excluded: 0, inconclusive: false, note: String::new() }
    }

    pub fn passed(&self) -> bool {
        self.violations == 0 && !self.inconclusive
    }

    pub fn record(&mut self, ok: bool, detail: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok {
            if self.violations == 0 {
                self.note = detail();
            }
            self.violations += 1;
        }
    }

    fn absorb(&mut self, other: &CheckReport) {
        if self.violations == 0 && other.violations > 0 {
            self.note = other.note.clone();
        }
        self.checks += other.checks;
        self.violations += other.violations;
        self.excluded += other.excluded;
    }
}

fn merge_all(names: &[&str], parts: Vec<Vec<CheckReport>>) -> Vec<CheckReport> {
    let mut total: Vec<CheckReport> = names.iter().map(|n| CheckReport::new(n)).collect();
    for part in &parts {
        for (t, p) in total.iter_mut().zip(part) {
            t.absorb(p);
        }
    }
    total
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub sites: usize,
    pub reps: usize,
    pub horizon: f64,
    pub gamma: f64,
    pub seed: u64,
    pub workers: usize,
}

impl VerifyConfig {
    fn validate(&self, max_sites: usize) -> Result<RateParams> {
        if self.sites == 0 || self.sites > max_sites {
            return Err(invalid("sites", format!("must lie in 1..={max_sites}, got {}", self.sites)));
        }
        if self.reps == 0 {
            return Err(invalid("reps", "must be at least 1"));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(invalid("horizon", format!("must be positive, got {}", self.horizon)));
        }
        RateParams::new(self.gamma)
    }
}

/// Forward reach `(i,0) -> (j,t)` in `G` against dual reach `(j,0) -> (i,t)`
/// in `reverse(G, t)`, for every pair of sites, with `t` uniform in
/// `(0, horizon]` per replica.
pub fn duality_suite(cfg: &VerifyConfig) -> Result<Vec<CheckReport>> {
    let params = cfg.validate(12)?;
    let window = Window::finite(0, cfg.sites as Site - 1)?;
    let parts = parallel::try_map_indexed(cfg.workers, cfg.reps, |r| {
        let mut rep = CheckReport::new("duality");
        let seed = rng::derive_seed(cfg.seed, &[DUALITY, r as u64]);
        let g = GraphicalRealization::generate(window, &params, cfg.horizon, seed)?;
        let t = cfg.horizon * (1.0 - rng::stream(seed, &[0]).gen::<f64>());
        let rev = g.reverse(t)?;
        for i in window.sites() {
            let fwd = g.reach_set(i, 0.0, t, Direction::Forward);
            for j in window.sites() {
                let dual = rev.reach(PathQuery { from: (j, 0.0), to: (i, t) }, Direction::Dual)?;
                rep.record(fwd.contains(&j) == dual, || format!("replica {r}: ({i},0)->({j},{t})"));
            }
        }
        Ok(vec![rep])
    })?;
    Ok(merge_all(&["duality"], parts))
}

fn subsets(window: Window) -> impl Iterator<Item = Configuration> {
    let n = window.len();
    (0..1u32 << n).map(move |mask| Configuration::from_mask(window, mask))
}

/// Sweep evolution against the path oracle, exhaustively over initial sets,
/// at a time uniform in `(0, horizon]`, in both directions.
pub fn sweep_path_suite(cfg: &VerifyConfig) -> Result<Vec<CheckReport>> {
    let params = cfg.validate(8)?;
    let window = Window::finite(0, cfg.sites as Site - 1)?;
    let parts = parallel::try_map_indexed(cfg.workers, cfg.reps, |r| {
        let mut fwd_rep = CheckReport::new("sweep-path forward");
        let mut dual_rep = CheckReport::new("sweep-path dual");
        let seed = rng::derive_seed(cfg.seed, &[SWEEP_PATH, r as u64]);
        let g = GraphicalRealization::generate(window, &params, cfg.horizon, seed)?;
        let t = cfg.horizon * (1.0 - rng::stream(seed, &[0]).gen::<f64>());
        for (dir, rep) in [(Direction::Forward, &mut fwd_rep), (Direction::Dual, &mut dual_rep)] {
            let reach: Vec<HashSet<Site>> = window.sites().map(|i| g.reach_set(i, 0.0, t, dir)).collect();
            for a in subsets(window) {
                let swept = match dir {
                    Direction::Forward => g.evolve(&a, t)?,
                    Direction::Dual => g.evolve_dual(&a, t)?,
                };
                let mut paths = Configuration::empty(window);
                for i in a.iter() {
                    for &j in &reach[(i - window.lo()) as usize] {
                        paths.insert(j)?;
                    }
                }
                rep.record(swept == paths, || format!("replica {r}: from {a} at t={t}: sweep {swept}, paths {paths}"));
            }
        }
        Ok(vec![fwd_rep, dual_rep])
    })?;
    Ok(merge_all(&["sweep-path forward", "sweep-path dual"], parts))
}

fn random_subset(r: &mut impl Rng, window: Window, p: f64) -> Configuration {
    let mut c = Configuration::empty(window);
    for s in window.sites() {
        if r.gen::<f64>() < p {
            c.insert(s).expect("site of the window");
        }
    }
    c
}

pub const COUPLING_NAMES: [&str; 7] = [
    "set monotonicity forward",
    "set monotonicity dual",
    "additivity",
    "finite within full",
    "right half-line within full",
    "left half-line within full",
    "finite within half-lines",
];

/// Set monotonicity, additivity and the restriction inclusions, checked on
/// shared realizations after every event. `sites` is the full window
/// length (odd); the finite window is its middle third and each half-line
/// extends it to one end.
pub fn coupling_suite(cfg: &VerifyConfig) -> Result<Vec<CheckReport>> {
    let params = cfg.validate(21)?;
    if cfg.sites < 3 || cfg.sites % 2 == 0 {
        return Err(invalid("sites", format!("coupling suite needs an odd window of at least 3 sites, got {}", cfg.sites)));
    }
    let half = (cfg.sites as Site - 1) / 2;
    let inner = (half / 2).max(0);
    let full = Window::line(-half, half)?;
    let finite = Window::finite(-inner, inner)?;
    let right = Window::half_right(-inner, half)?;
    let left = Window::half_left(-half, inner)?;
    let parts = parallel::try_map_indexed(cfg.workers, cfg.reps, |r| {
        let mut reps: Vec<CheckReport> = COUPLING_NAMES.iter().map(|n| CheckReport::new(n)).collect();
        let seed = rng::derive_seed(cfg.seed, &[COUPLING, r as u64]);
        let g = GraphicalRealization::generate(full, &params, cfg.horizon, seed)?;
        let mut pick = rng::stream(seed, &[0]);
        let big = random_subset(&mut pick, full, 0.5);
        let mut small = Configuration::empty(full);
        for s in big.iter() {
            if pick.gen::<bool>() {
                small.insert(s)?;
            }
        }
        let a1 = random_subset(&mut pick, full, 0.3);
        let a2 = random_subset(&mut pick, full, 0.3);
        let a = random_subset(&mut pick, finite, 0.5);
        // forward: small, big, a1, a2, a1∪a2; dual: small, big; restrictions
        let mut fwd = vec![small.clone(), big.clone(), a1.clone(), a2.clone(), a1.union(&a2)?];
        let mut dual = vec![small, big];
        let mut nested = vec![a.clone(), a.embed(right)?, a.embed(left)?, a.embed(full)?];
        let check = |reps: &mut Vec<CheckReport>, fwd: &[Configuration], dual: &[Configuration], nested: &[Configuration], t: f64| {
            let ctx = || format!("replica {r} at t={t}");
            reps[0].record(fwd[0].is_subset_of(&fwd[1]), ctx);
            reps[1].record(dual[0].is_subset_of(&dual[1]), ctx);
            reps[2].record(fwd[4] == fwd[2].union(&fwd[3]).expect("same window"), ctx);
            reps[3].record(nested[0].is_subset_of(&nested[3]), ctx);
            reps[4].record(nested[1].is_subset_of(&nested[3]), ctx);
            reps[5].record(nested[2].is_subset_of(&nested[3]), ctx);
            reps[6].record(nested[0].is_subset_of(&nested[1]) && nested[0].is_subset_of(&nested[2]), ctx);
        };
        check(&mut reps, &fwd, &dual, &nested, 0.0);
        for ev in g.events() {
            for c in fwd.iter_mut().chain(nested.iter_mut()) {
                apply_event(c, ev, Direction::Forward);
            }
            for c in dual.iter_mut() {
                apply_event(c, ev, Direction::Dual);
            }
            check(&mut reps, &fwd, &dual, &nested, ev.time);
        }
        Ok(reps)
    })?;
    Ok(merge_all(&COUPLING_NAMES, parts))
}
