//! Single-process sweeps on lazily grown realizations.
//!
//! A process started from a few sites only ever looks at the marks near its
//! current configuration. Site streams are therefore generated on first
//! approach, from the same `(seed, site, kind)` streams as
//! [`GraphicalRealization::generate`](crate::GraphicalRealization::generate),
//! and merged through a heap. Marks at a site that were never looked at
//! cannot have changed the process, so the outcome equals an eager sweep of
//! the same seed whenever the eager realization needed no regeneration.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{invalid, Result};
use crate::graphical::{apply_event, edge_sites, site_stream, ContaminationFlag, Direction, Event, EventKind};
use crate::model::{Configuration, RateParams, Site, Window};

#[derive(Clone, Debug, PartialEq)]
pub struct LazyOutcome {
    /// Configuration at the horizon (empty if the process died).
    pub state: Configuration,
    pub extinction_time: Option<f64>,
    pub contamination: ContaminationFlag,
    pub events_applied: u64,
}

struct Pending {
    time: f64,
    site: Site,
    kind: EventKind,
    next: usize,
}

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Pending {}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Pending {
    // min-heap on (time, site, kind)
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.total_cmp(&self.time).then_with(|| other.site.cmp(&self.site)).then_with(|| (other.kind as u8).cmp(&(self.kind as u8)))
    }
}

struct LazyGraph {
    window: Window,
    params: RateParams,
    horizon: f64,
    seed: u64,
    streams: Vec<Option<[Vec<f64>; 2]>>,
    heap: BinaryHeap<Pending>,
}

impl LazyGraph {
    fn touch(&mut self, site: Site, now: f64) {
        if !self.window.contains(site) {
            return;
        }
        let slot = (site - self.window.lo()) as usize;
        if self.streams[slot].is_some() {
            return;
        }
        let spikes = site_stream(self.seed, site, EventKind::Spike, 1.0, self.horizon, 0);
        let leaks = site_stream(self.seed, site, EventKind::Leak, self.params.gamma(), self.horizon, 0);
        for (kind, times) in [(EventKind::Spike, &spikes), (EventKind::Leak, &leaks)] {
            let first = times.partition_point(|&t| t <= now);
            if let Some(&time) = times.get(first) {
                self.heap.push(Pending { time, site, kind, next: first + 1 });
            }
        }
        self.streams[slot] = Some([spikes, leaks]);
    }

    fn pop(&mut self) -> Option<Event> {
        let p = self.heap.pop()?;
        let slot = (p.site - self.window.lo()) as usize;
        let times = &self.streams[slot].as_ref().expect("popped site has streams")[p.kind as usize];
        if let Some(&time) = times.get(p.next) {
            self.heap.push(Pending { time, site: p.site, kind: p.kind, next: p.next + 1 });
        }
        Some(Event { time: p.time, site: p.site, kind: p.kind })
    }
}

/// Run one forward or dual process from `initial` up to `horizon`, stopping
/// early at extinction.
pub fn run(window: Window, params: &RateParams, horizon: f64, seed: u64, initial: &Configuration, dir: Direction) -> Result<LazyOutcome> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(invalid("horizon", format!("must be positive and finite, got {horizon}")));
    }
    let mut state = initial.embed(window)?;
    let mut graph = LazyGraph { window, params: *params, horizon, seed, streams: vec![None; window.len()], heap: BinaryHeap::new() };
    let edge = edge_sites(&window);
    let mut contamination = ContaminationFlag::clean();
    if edge.iter().any(|&s| state.contains(s)) {
        contamination.mark(0.0);
    }
    if state.is_empty() {
        return Ok(LazyOutcome { state, extinction_time: Some(0.0), contamination, events_applied: 0 });
    }
    let reach = |s: Site| match dir {
        Direction::Forward => s..=s,
        Direction::Dual => s - 1..=s + 1,
    };
    for s in state.iter().collect::<Vec<_>>() {
        for r in reach(s) {
            graph.touch(r, 0.0);
        }
    }
    let mut applied = 0;
    while let Some(ev) = graph.pop() {
        let before_site = state.contains(ev.site);
        let before_left = state.contains(ev.site - 1);
        let before_right = state.contains(ev.site + 1);
        apply_event(&mut state, &ev, dir);
        applied += 1;
        if state.is_empty() {
            return Ok(LazyOutcome { state, extinction_time: Some(ev.time), contamination, events_applied: applied });
        }
        for (s, was) in [(ev.site, before_site), (ev.site - 1, before_left), (ev.site + 1, before_right)] {
            if !was && state.contains(s) {
                for r in reach(s) {
                    graph.touch(r, ev.time);
                }
                if !contamination.touched && edge.contains(&s) {
                    contamination.mark(ev.time);
                }
            }
        }
    }
    Ok(LazyOutcome { state, extinction_time: None, contamination, events_applied: applied })
}
