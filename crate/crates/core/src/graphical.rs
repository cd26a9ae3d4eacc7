//! Harris graphical construction.
//!
//! A realization holds, for every site of a window, the jump times of two
//! independent Poisson processes on `[0, horizon]`: spikes (rate 1) and
//! leaks (rate `gamma`). Read forward, a spike at `i` is a pair of arrows
//! `i -> i±1`; read as the dual graph, it is a pair of arrows `i±1 -> i`.
//!
//! Each `(seed, site, kind)` triple owns its own random stream, so two
//! realizations with the same seed agree on every site they share. This is
//! what makes restrictions and lazily grown realizations couple exactly.

use std::collections::HashSet;
use std::fmt::Write as _;

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{Configuration, RateParams, Site, Window, WindowKind};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    Spike,
    Leak,
}

impl EventKind {
    fn label(self) -> u64 {
        match self {
            EventKind::Spike => 0,
            EventKind::Leak => 1,
        }
    }

    fn code(self) -> char {
        match self {
            EventKind::Spike => 'S',
            EventKind::Leak => 'L',
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Event {
    pub time: f64,
    pub site: Site,
    pub kind: EventKind,
}

/// Forward process or its dual.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Forward,
    Dual,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathQuery {
    pub from: (Site, f64),
    pub to: (Site, f64),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ContaminationFlag {
    pub touched: bool,
    pub first_touch_time: Option<f64>,
}

impl ContaminationFlag {
    pub fn clean() -> Self {
        Self::default()
    }

    pub fn at(t: f64) -> Self {
        ContaminationFlag { touched: true, first_touch_time: Some(t) }
    }

    pub(crate) fn mark(&mut self, t: f64) {
        if !self.touched {
            *self = Self::at(t);
        }
    }

    pub fn merge(self, other: Self) -> Self {
        match (self.first_touch_time, other.first_touch_time) {
            (Some(a), Some(b)) => Self::at(a.min(b)),
            (Some(a), None) | (None, Some(a)) => Self::at(a),
            (None, None) => Self::clean(),
        }
    }
}

/// Sites within `c * horizon` of the measured region are needed for a
/// truncation to stand in for an unbounded window.
pub fn margin(horizon: f64, c: f64) -> Site {
    (c * horizon).ceil() as Site
}

pub const DEFAULT_MARGIN_FACTOR: f64 = 4.0;

/// Jump times of one Poisson stream on `[0, horizon]`.
pub fn site_stream(seed: u64, site: Site, kind: EventKind, rate: f64, horizon: f64, attempt: u32) -> Vec<f64> {
    let mut times = Vec::new();
    if rate <= 0.0 {
        return times;
    }
    let mut r = rng::stream(seed, &[rng::site_label(site), kind.label(), attempt as u64]);
    let mut t = 0.0;
    loop {
        let gap: f64 = r.sample(Exp1);
        t += gap / rate;
        if t > horizon {
            break;
        }
        times.push(t);
    }
    times
}

fn kind_rate(kind: EventKind, params: &RateParams) -> f64 {
    match kind {
        EventKind::Spike => 1.0,
        EventKind::Leak => params.gamma(),
    }
}

/// Applies one graph event to a forward or dual configuration. Events at
/// sites outside the configuration's window are ignored, which is exactly
/// the restriction to a sub-diagram.
#[inline]
pub fn apply_event(state: &mut Configuration, ev: &Event, dir: Direction) {
    if !state.window().contains(ev.site) {
        return;
    }
    match (ev.kind, dir) {
        (EventKind::Leak, _) => {
            state.clear(ev.site);
        }
        (EventKind::Spike, Direction::Forward) => {
            if state.clear(ev.site) {
                state.activate_neighbours(ev.site);
            }
        }
        (EventKind::Spike, Direction::Dual) => state.dual_spike_unchecked(ev.site),
    }
}

/// Sites within distance 1 of an artificial edge of `w`.
pub fn edge_sites(w: &Window) -> Vec<Site> {
    let mut out = Vec::new();
    if w.truncated_low() {
        out.extend([w.lo(), w.lo() + 1]);
    }
    if w.truncated_high() {
        out.extend([w.hi() - 1, w.hi()]);
    }
    out.retain(|&s| w.contains(s));
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct GraphicalRealization {
    window: Window,
    horizon: f64,
    seed: u64,
    attempt: u32,
    events: Vec<Event>,
}

const MAX_ATTEMPTS: u32 = 64;
pub const DUMP_HEADER: &str = "# spiking-ips realization v1";

impl GraphicalRealization {
    pub fn generate(window: Window, params: &RateParams, horizon: f64, seed: u64) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(invalid("horizon", format!("must be positive and finite, got {horizon}")));
        }
        for attempt in 0..MAX_ATTEMPTS {
            let mut events = Vec::new();
            for site in window.sites() {
                for kind in [EventKind::Spike, EventKind::Leak] {
                    let times = site_stream(seed, site, kind, kind_rate(kind, params), horizon, attempt);
                    events.extend(times.into_iter().map(|time| Event { time, site, kind }));
                }
            }
            events.sort_by(|a, b| a.time.total_cmp(&b.time));
            if events.windows(2).all(|p| p[0].time < p[1].time) {
                return Ok(GraphicalRealization { window, horizon, seed, attempt, events });
            }
        }
        Err(Error::InvalidParameter { name: "seed", reason: "event time collisions persisted across regenerations".into() })
    }

    /// Build a realization from explicit events (sorted here).
    pub fn from_events(window: Window, horizon: f64, mut events: Vec<Event>) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(invalid("horizon", format!("must be positive and finite, got {horizon}")));
        }
        for ev in &events {
            window.check(ev.site)?;
            if !(0.0..=horizon).contains(&ev.time) {
                return Err(Error::BeyondHorizon { t: ev.time, horizon });
            }
        }
        events.sort_by(|a, b| a.time.total_cmp(&b.time));
        if events.windows(2).any(|p| p[0].time == p[1].time) {
            return Err(invalid("events", "simultaneous event times"));
        }
        Ok(GraphicalRealization { window, horizon, seed: 0, attempt: 0, events })
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of collision-triggered regenerations before this realization.
    pub fn attempt(&self) -> u32 {
        self.attempt
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn times(&self, site: Site, kind: EventKind) -> Vec<f64> {
        self.events.iter().filter(|e| e.site == site && e.kind == kind).map(|e| e.time).collect()
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if t > self.horizon || t < 0.0 || t.is_nan() {
            Err(Error::BeyondHorizon { t, horizon: self.horizon })
        } else {
            Ok(())
        }
    }

    fn sweep(&self, initial: &Configuration, t: f64, dir: Direction) -> Result<Configuration> {
        self.check_time(t)?;
        let mut state = initial.embed(self.window)?;
        for ev in self.events.iter().take_while(|e| e.time <= t) {
            apply_event(&mut state, ev, dir);
        }
        Ok(state)
    }

    /// Forward process at time `t` from `initial`.
    pub fn evolve(&self, initial: &Configuration, t: f64) -> Result<Configuration> {
        self.sweep(initial, t, Direction::Forward)
    }

    /// Dual process at time `t` from `initial`.
    pub fn evolve_dual(&self, initial: &Configuration, t: f64) -> Result<Configuration> {
        self.sweep(initial, t, Direction::Dual)
    }

    /// Path search over time segments and arrows.
    ///
    /// Forward paths stop at leak marks and at the rear of an arrow (the
    /// spiking site itself) and may jump along arrows to `i±1`. Dual paths
    /// stop at leak marks and at arrow tips (the event site) and may jump
    /// from `i±1` onto the event site.
    pub fn reach(&self, q: PathQuery, dir: Direction) -> Result<bool> {
        let (from, t0) = q.from;
        let (to, t1) = q.to;
        if t0 > t1 {
            return Err(invalid("query", "start time after end time"));
        }
        self.check_time(t1)?;
        self.window.check(from)?;
        self.window.check(to)?;
        Ok(self.reach_set(from, t0, t1, dir).contains(&to))
    }

    /// Every site `j` with a valid path `(from, t0) -> (j, t1)`.
    pub fn reach_set(&self, from: Site, t0: f64, t1: f64, dir: Direction) -> HashSet<Site> {
        let per_site = self.per_site_events();
        let idx = |s: Site| (s - self.window.lo()) as usize;
        let mut reached = HashSet::new();
        let mut seen: HashSet<(Site, u64)> = HashSet::new();
        let mut stack = vec![(from, t0)];
        while let Some((site, s)) = stack.pop() {
            if !seen.insert((site, s.to_bits())) {
                continue;
            }
            let blocked = match dir {
                Direction::Forward => {
                    let next = per_site[idx(site)].iter().find(|&&(t, _)| t > s);
                    match next {
                        Some(&(t, kind)) if t <= t1 => {
                            if kind == EventKind::Spike {
                                for nb in [site - 1, site + 1] {
                                    if self.window.contains(nb) {
                                        stack.push((nb, t));
                                    }
                                }
                            }
                            true
                        }
                        _ => false,
                    }
                }
                Direction::Dual => {
                    let mut blocked = false;
                    let mut upcoming: Vec<(f64, Site, EventKind)> = Vec::new();
                    for nb in [site - 1, site, site + 1] {
                        if self.window.contains(nb) {
                            upcoming.extend(per_site[idx(nb)].iter().filter(|&&(t, _)| t > s && t <= t1).map(|&(t, k)| (t, nb, k)));
                        }
                    }
                    upcoming.sort_by(|a, b| a.0.total_cmp(&b.0));
                    for (t, at, kind) in upcoming {
                        if at == site {
                            blocked = true;
                            break;
                        }
                        if kind == EventKind::Spike {
                            stack.push((at, t));
                        }
                    }
                    blocked
                }
            };
            if !blocked {
                reached.insert(site);
            }
        }
        reached
    }

    fn per_site_events(&self) -> Vec<Vec<(f64, EventKind)>> {
        let mut out = vec![Vec::new(); self.window.len()];
        for ev in &self.events {
            out[(ev.site - self.window.lo()) as usize].push((ev.time, ev.kind));
        }
        out
    }

    /// Time reversal on `[0, t]`: each event at time `s` moves to `t - s`,
    /// keeping its site label.
    pub fn reverse(&self, t: f64) -> Result<Self> {
        self.check_time(t)?;
        if t <= 0.0 {
            return Err(invalid("t", "reversal time must be positive"));
        }
        let mut events: Vec<Event> = self.events.iter().filter(|e| e.time <= t).map(|e| Event { time: t - e.time, ..*e }).collect();
        events.reverse();
        Ok(GraphicalRealization { window: self.window, horizon: t, seed: self.seed, attempt: self.attempt, events })
    }

    /// Keep only the marks of the sub-diagram over `sub`.
    pub fn restrict(&self, sub: Window) -> Result<Self> {
        if !self.window.encloses(&sub) {
            return Err(Error::InvalidWindow(format!("{sub} is not contained in {}", self.window)));
        }
        let events = self.events.iter().filter(|e| sub.contains(e.site)).copied().collect();
        Ok(GraphicalRealization { window: sub, horizon: self.horizon, seed: self.seed, attempt: self.attempt, events })
    }

    /// Whether the process ever activates a site next to an artificial edge.
    pub fn contamination(&self, initial: &Configuration, t: f64, dir: Direction) -> Result<ContaminationFlag> {
        self.check_time(t)?;
        let mut state = initial.embed(self.window)?;
        let edge = edge_sites(&self.window);
        let touching = |c: &Configuration| edge.iter().any(|&s| c.contains(s));
        if touching(&state) {
            return Ok(ContaminationFlag::at(0.0));
        }
        for ev in self.events.iter().take_while(|e| e.time <= t) {
            apply_event(&mut state, ev, dir);
            if touching(&state) {
                return Ok(ContaminationFlag::at(ev.time));
            }
        }
        Ok(ContaminationFlag::clean())
    }

    /// Whether influence from an artificial edge can reach `[lo, hi]` by
    /// time `t`. A discrepancy with the untruncated process enters at the
    /// edge site and moves one site inward only through a spike mark at the
    /// front (forward) or just beyond it (dual); this tracks that front
    /// conservatively, without looking at the process state.
    pub fn edge_influence(&self, lo: Site, hi: Site, t: f64, dir: Direction) -> Result<ContaminationFlag> {
        self.check_time(t)?;
        let w = self.window;
        let mut left = if w.truncated_low() { Some(w.lo()) } else { None };
        let mut right = if w.truncated_high() { Some(w.hi()) } else { None };
        let hit = |l: Option<Site>, r: Option<Site>| l.is_some_and(|f| f >= lo) || r.is_some_and(|f| f <= hi);
        if hit(left, right) {
            return Ok(ContaminationFlag::at(0.0));
        }
        for ev in self.events.iter().take_while(|e| e.time <= t) {
            if ev.kind != EventKind::Spike {
                continue;
            }
            let (step_left, step_right) = match dir {
                Direction::Forward => (left == Some(ev.site), right == Some(ev.site)),
                Direction::Dual => (left.map(|f| f + 1) == Some(ev.site), right.map(|f| f - 1) == Some(ev.site)),
            };
            if step_left {
                left = left.map(|f| f + 1);
            }
            if step_right {
                right = right.map(|f| f - 1);
            }
            if hit(left, right) {
                return Ok(ContaminationFlag::at(ev.time));
            }
        }
        Ok(ContaminationFlag::clean())
    }

    /// Text dump: a versioned header, then one `site time S|L` line per event.
    pub fn dump(&self) -> String {
        let kind = match self.window.kind() {
            WindowKind::Finite => "finite",
            WindowKind::HalfRight => "half-right",
            WindowKind::HalfLeft => "half-left",
            WindowKind::Line => "line",
        };
        let mut out = format!(
            "{DUMP_HEADER} window={kind}:{}:{} horizon={:.16e} seed={} attempt={}\n",
            self.window.lo(),
            self.window.hi(),
            self.horizon,
            self.seed,
            self.attempt
        );
        for ev in &self.events {
            let _ = writeln!(out, "{} {:.16e} {}", ev.site, ev.time, ev.kind.code());
        }
        out
    }

    pub fn parse_dump(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty dump".into()))?;
        let rest = header.strip_prefix(DUMP_HEADER).ok_or_else(|| Error::Parse(format!("unknown header `{header}`")))?;
        let mut window = None;
        let mut horizon = None;
        let mut seed = 0;
        let mut attempt = 0;
        for field in rest.split_whitespace() {
            let (key, value) = field.split_once('=').ok_or_else(|| Error::Parse(format!("bad field `{field}`")))?;
            let bad = || Error::Parse(format!("bad value in `{field}`"));
            match key {
                "window" => {
                    let parts: Vec<&str> = value.split(':').collect();
                    if parts.len() != 3 {
                        return Err(bad());
                    }
                    let lo: Site = parts[1].parse().map_err(|_| bad())?;
                    let hi: Site = parts[2].parse().map_err(|_| bad())?;
                    window = Some(match parts[0] {
                        "finite" => Window::finite(lo, hi)?,
                        "half-right" => Window::half_right(lo, hi)?,
                        "half-left" => Window::half_left(lo, hi)?,
                        "line" => Window::line(lo, hi)?,
                        _ => return Err(bad()),
                    });
                }
                "horizon" => horizon = Some(value.parse::<f64>().map_err(|_| bad())?),
                "seed" => seed = value.parse().map_err(|_| bad())?,
                "attempt" => attempt = value.parse().map_err(|_| bad())?,
                _ => return Err(Error::Parse(format!("unknown field `{key}`"))),
            }
        }
        let window = window.ok_or_else(|| Error::Parse("missing window".into()))?;
        let horizon = horizon.ok_or_else(|| Error::Parse("missing horizon".into()))?;
        let mut events = Vec::new();
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let parts: Vec<&str> = line.split_whitespace().collect();
            let bad = || Error::Parse(format!("bad event line `{line}`"));
            if parts.len() != 3 {
                return Err(bad());
            }
            let site = parts[0].parse().map_err(|_| bad())?;
            let time = parts[1].parse().map_err(|_| bad())?;
            let kind = match parts[2] {
                "S" => EventKind::Spike,
                "L" => EventKind::Leak,
                _ => return Err(bad()),
            };
            events.push(Event { time, site, kind });
        }
        let mut g = Self::from_events(window, horizon, events)?;
        g.seed = seed;
        g.attempt = attempt;
        Ok(g)
    }
}
