//! Direct-method simulation of the finite (or truncated) process.
//!
//! Only active sites carry clocks: each spikes at rate 1 and leaks at rate
//! `gamma`. A leak at an inactive site is the identity map, so dropping those
//! clocks leaves the law unchanged and keeps the total rate finite.

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::graphical::{edge_sites, ContaminationFlag};
use crate::model::{Configuration, RateParams, Site, Window};
use crate::parallel;
use crate::rng::{self, SimRng};

pub const DEFAULT_HORIZON_CAP: f64 = 1e6;

#[derive(Clone, Debug)]
pub struct SimSpec {
    pub window: Window,
    pub params: RateParams,
    pub initial: Configuration,
    pub horizon_cap: f64,
    pub seed: u64,
    pub replica: u64,
}

impl SimSpec {
    /// All-one start on `window`, default horizon cap.
    pub fn new(window: Window, params: RateParams, seed: u64) -> Self {
        SimSpec { window, params, initial: Configuration::all_one(window), horizon_cap: DEFAULT_HORIZON_CAP, seed, replica: 0 }
    }

    pub fn with_initial(mut self, initial: Configuration) -> Self {
        self.initial = initial;
        self
    }

    pub fn with_cap(mut self, cap: f64) -> Self {
        self.horizon_cap = cap;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.horizon_cap > 0.0) {
            return Err(invalid("horizon_cap", format!("must be positive, got {}", self.horizon_cap)));
        }
        Ok(())
    }

    fn rng(&self) -> SimRng {
        rng::stream(self.seed, &[self.replica])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Tau {
    Extinct(f64),
    /// Still alive at the horizon cap.
    Censored(f64),
}

impl Tau {
    pub fn finite(&self) -> Option<f64> {
        match *self {
            Tau::Extinct(t) => Some(t),
            Tau::Censored(_) => None,
        }
    }

    pub fn is_censored(&self) -> bool {
        matches!(self, Tau::Censored(_))
    }

    /// Whether the process is known to be alive at `t`.
    pub fn survives(&self, t: f64) -> bool {
        match *self {
            Tau::Extinct(tau) => tau > t,
            Tau::Censored(cap) => {
                debug_assert!(t <= cap);
                true
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtinctionSample {
    pub replica: u64,
    pub tau: Tau,
    pub spikes: u64,
    pub leaks: u64,
    pub contamination: ContaminationFlag,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRates {
    pub total: f64,
    pub spike: f64,
    pub leak: f64,
}

pub fn step_rates(config: &Configuration, params: &RateParams) -> StepRates {
    let active = config.len() as f64;
    StepRates { total: active * params.per_site_rate(), spike: active, leak: active * params.gamma() }
}

/// Active sites kept in an indexable list for O(1) uniform picks.
struct ActiveList {
    lo: Site,
    pos: Vec<u32>,
    sites: Vec<Site>,
}

const ABSENT: u32 = u32::MAX;

impl ActiveList {
    fn new(config: &Configuration) -> Self {
        let w = config.window();
        let mut list = ActiveList { lo: w.lo(), pos: vec![ABSENT; w.len()], sites: Vec::with_capacity(w.len()) };
        for s in config.iter() {
            list.add(s);
        }
        list
    }

    fn add(&mut self, s: Site) {
        let slot = (s - self.lo) as usize;
        if self.pos[slot] == ABSENT {
            self.pos[slot] = self.sites.len() as u32;
            self.sites.push(s);
        }
    }

    fn remove(&mut self, s: Site) {
        let slot = (s - self.lo) as usize;
        let k = self.pos[slot];
        if k == ABSENT {
            return;
        }
        let last = self.sites.pop().expect("non-empty");
        if last != s {
            self.sites[k as usize] = last;
            self.pos[(last - self.lo) as usize] = k;
        }
        self.pos[slot] = ABSENT;
    }

    fn sync(&mut self, config: &Configuration, around: Site) {
        for s in [around - 1, around, around + 1] {
            if config.window().contains(s) {
                if config.contains(s) {
                    self.add(s);
                } else {
                    self.remove(s);
                }
            }
        }
    }
}

/// Simulation state shared by extinction sampling and fixed-time snapshots.
struct Runner<'a> {
    spec: &'a SimSpec,
    rng: SimRng,
    state: Configuration,
    active: ActiveList,
    time: f64,
    spikes: u64,
    leaks: u64,
    edge: Vec<Site>,
    contamination: ContaminationFlag,
}

impl<'a> Runner<'a> {
    fn new(spec: &'a SimSpec) -> Result<Self> {
        spec.validate()?;
        let state = spec.initial.embed(spec.window)?;
        let active = ActiveList::new(&state);
        let edge = edge_sites(&spec.window);
        let mut contamination = ContaminationFlag::clean();
        if edge.iter().any(|&s| state.contains(s)) {
            contamination.mark(0.0);
        }
        Ok(Runner { spec, rng: spec.rng(), state, active, time: 0.0, spikes: 0, leaks: 0, edge, contamination })
    }

    /// Advance by one event unless it would land after `limit`. Returns
    /// false (leaving the state at `limit`) when the next event is too late
    /// or the configuration is empty.
    fn step(&mut self, limit: f64) -> bool {
        let n = self.active.sites.len();
        if n == 0 {
            return false;
        }
        let rates = self.spec.params.per_site_rate();
        let wait: f64 = self.rng.sample::<f64, _>(Exp1) / (n as f64 * rates);
        if self.time + wait > limit {
            self.time = limit;
            return false;
        }
        self.time += wait;
        let site = self.active.sites[self.rng.gen_range(0..n)];
        let is_leak = self.rng.gen::<f64>() * rates < self.spec.params.gamma();
        if is_leak {
            self.state.leak_in_place(site).expect("picked site lies in the window");
            self.leaks += 1;
        } else {
            self.state.spike_in_place(site).expect("picked site is active");
            self.spikes += 1;
        }
        self.active.sync(&self.state, site);
        if !self.contamination.touched && self.edge.iter().any(|&s| self.state.contains(s)) {
            self.contamination.mark(self.time);
        }
        true
    }
}

pub fn sample_extinction(spec: &SimSpec) -> Result<ExtinctionSample> {
    let mut run = Runner::new(spec)?;
    while run.step(spec.horizon_cap) {}
    let tau = if run.state.is_empty() { Tau::Extinct(run.time) } else { Tau::Censored(spec.horizon_cap) };
    Ok(ExtinctionSample { replica: spec.replica, tau, spikes: run.spikes, leaks: run.leaks, contamination: run.contamination })
}

/// Configuration at time `t` (must not exceed the horizon cap).
pub fn sample_state_at(spec: &SimSpec, t: f64) -> Result<Configuration> {
    if t > spec.horizon_cap || t < 0.0 {
        return Err(invalid("t", format!("must lie in [0, {}]", spec.horizon_cap)));
    }
    let mut run = Runner::new(spec)?;
    while run.step(t) {}
    Ok(run.state)
}

/// Replica `i` runs `template` with `replica = i`; output is in replica order.
pub fn sample_batch(template: &SimSpec, replicas: usize, workers: usize) -> Result<Vec<ExtinctionSample>> {
    if replicas == 0 {
        return Err(invalid("replicas", "must be at least 1"));
    }
    template.validate()?;
    parallel::try_map_indexed(workers, replicas, |i| {
        let mut spec = template.clone();
        spec.replica = i as u64;
        sample_extinction(&spec)
    })
}
