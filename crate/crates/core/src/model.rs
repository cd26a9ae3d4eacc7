//! Configurations, windows and the transition maps of the spiking system.
//!
//! A configuration is the set of active neurons. Four maps act on it:
//! the leak `π†_i` (clear site `i`), the spike `π_i` (clear `i`, activate
//! its in-window neighbours), and their duals `π̃†_i` (clear `i`) and `π̃_i`
//! (site `i` ends up active iff one of its neighbours is active).

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Lattice coordinate.
pub type Site = i64;

/// Which ends of a window are artificial truncations of an unbounded set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WindowKind {
    /// `{lo, ..., hi}`; both ends are real boundaries.
    Finite,
    /// `{lo, lo+1, ...}` truncated at `hi`.
    HalfRight,
    /// `{..., hi-1, hi}` truncated at `lo`.
    HalfLeft,
    /// The whole lattice truncated to `[lo, hi]`.
    Line,
}

/// A window of the lattice. `lo` and `hi` are the simulated (truncation)
/// bounds; `kind` says which of them stand in for infinity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Window {
    kind: WindowKind,
    lo: Site,
    hi: Site,
}

impl Window {
    fn build(kind: WindowKind, lo: Site, hi: Site) -> Result<Self> {
        if lo > hi {
            return Err(Error::InvalidWindow(format!("empty window [{lo}, {hi}]")));
        }
        Ok(Window { kind, lo, hi })
    }

    pub fn finite(lo: Site, hi: Site) -> Result<Self> {
        Self::build(WindowKind::Finite, lo, hi)
    }

    /// The window `I_N = {-N, ..., N}`.
    pub fn centered(n: u32) -> Self {
        let n = n as Site;
        Window { kind: WindowKind::Finite, lo: -n, hi: n }
    }

    /// `[lo, +inf)` simulated on `[lo, truncate_at]`.
    pub fn half_right(lo: Site, truncate_at: Site) -> Result<Self> {
        Self::build(WindowKind::HalfRight, lo, truncate_at)
    }

    /// `(-inf, hi]` simulated on `[truncate_at, hi]`.
    pub fn half_left(truncate_at: Site, hi: Site) -> Result<Self> {
        Self::build(WindowKind::HalfLeft, truncate_at, hi)
    }

    /// The whole lattice simulated on `[lo, hi]`.
    pub fn line(lo: Site, hi: Site) -> Result<Self> {
        Self::build(WindowKind::Line, lo, hi)
    }

    pub fn kind(&self) -> WindowKind {
        self.kind
    }

    pub fn lo(&self) -> Site {
        self.lo
    }

    pub fn hi(&self) -> Site {
        self.hi
    }

    pub fn len(&self) -> usize {
        (self.hi - self.lo + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, site: Site) -> bool {
        self.lo <= site && site <= self.hi
    }

    pub fn sites(&self) -> impl Iterator<Item = Site> {
        self.lo..=self.hi
    }

    /// True when `other`'s site range lies inside this window's.
    pub fn encloses(&self, other: &Window) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }

    pub fn truncated_low(&self) -> bool {
        matches!(self.kind, WindowKind::HalfLeft | WindowKind::Line)
    }

    pub fn truncated_high(&self) -> bool {
        matches!(self.kind, WindowKind::HalfRight | WindowKind::Line)
    }

    /// Sites within distance 1 of an artificial edge.
    pub fn near_truncation(&self, site: Site) -> bool {
        (self.truncated_low() && site <= self.lo + 1) || (self.truncated_high() && site >= self.hi - 1)
    }

    pub(crate) fn check(&self, site: Site) -> Result<()> {
        if self.contains(site) {
            Ok(())
        } else {
            Err(Error::OutsideWindow { site, lo: self.lo, hi: self.hi })
        }
    }
}

impl fmt::Display for Window {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            WindowKind::Finite => write!(f, "[{}, {}]", self.lo, self.hi),
            WindowKind::HalfRight => write!(f, "[{}, +inf) cut at {}", self.lo, self.hi),
            WindowKind::HalfLeft => write!(f, "(-inf, {}] cut at {}", self.hi, self.lo),
            WindowKind::Line => write!(f, "Z cut to [{}, {}]", self.lo, self.hi),
        }
    }
}

/// Leak rate `gamma`; the spike rate is fixed at 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateParams {
    gamma: f64,
}

impl RateParams {
    pub fn new(gamma: f64) -> Result<Self> {
        if !gamma.is_finite() || gamma < 0.0 {
            return Err(invalid("gamma", format!("must be a finite non-negative number, got {gamma}")));
        }
        Ok(RateParams { gamma })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Total event rate carried by one active site.
    pub fn per_site_rate(&self) -> f64 {
        1.0 + self.gamma
    }
}

/// A finite set of active sites inside a window, stored as a bitset over
/// the window's truncation range.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Configuration {
    window: Window,
    words: Vec<u64>,
}

impl Configuration {
    pub fn empty(window: Window) -> Self {
        Configuration { window, words: vec![0; window.len().div_ceil(64)] }
    }

    pub fn from_sites<I: IntoIterator<Item = Site>>(window: Window, sites: I) -> Result<Self> {
        let mut config = Self::empty(window);
        for s in sites {
            config.insert(s)?;
        }
        Ok(config)
    }

    /// Every site of the (truncated) window active.
    pub fn all_one(window: Window) -> Self {
        let mut config = Self::empty(window);
        let n = window.len();
        for (w, word) in config.words.iter_mut().enumerate() {
            let remaining = n - 64 * w;
            *word = if remaining >= 64 { u64::MAX } else { (1u64 << remaining) - 1 };
        }
        config
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    #[inline]
    fn slot(&self, site: Site) -> (usize, u64) {
        let off = (site - self.window.lo) as usize;
        (off / 64, 1u64 << (off % 64))
    }

    #[inline]
    pub fn contains(&self, site: Site) -> bool {
        if !self.window.contains(site) {
            return false;
        }
        let (w, bit) = self.slot(site);
        self.words[w] & bit != 0
    }

    pub fn insert(&mut self, site: Site) -> Result<bool> {
        self.window.check(site)?;
        Ok(self.set(site))
    }

    /// Activate an in-window site; returns whether it was newly added.
    #[inline]
    pub(crate) fn set(&mut self, site: Site) -> bool {
        let (w, bit) = self.slot(site);
        let fresh = self.words[w] & bit == 0;
        self.words[w] |= bit;
        fresh
    }

    /// Deactivate an in-window site; returns whether it was active.
    #[inline]
    pub(crate) fn clear(&mut self, site: Site) -> bool {
        let (w, bit) = self.slot(site);
        let was = self.words[w] & bit != 0;
        self.words[w] &= !bit;
        was
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    /// Active sites in increasing order.
    pub fn iter(&self) -> impl Iterator<Item = Site> + '_ {
        let lo = self.window.lo;
        self.words.iter().enumerate().flat_map(move |(w, &word)| {
            let mut bits = word;
            std::iter::from_fn(move || {
                if bits == 0 {
                    return None;
                }
                let tz = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(lo + (64 * w + tz) as Site)
            })
        })
    }

    pub fn to_vec(&self) -> Vec<Site> {
        self.iter().collect()
    }

    pub fn min(&self) -> Option<Site> {
        let lo = self.window.lo;
        self.words.iter().enumerate().find(|(_, &w)| w != 0).map(|(i, &w)| lo + (64 * i + w.trailing_zeros() as usize) as Site)
    }

    pub fn max(&self) -> Option<Site> {
        let lo = self.window.lo;
        self.words.iter().enumerate().rev().find(|(_, &w)| w != 0).map(|(i, &w)| lo + (64 * i + 63 - w.leading_zeros() as usize) as Site)
    }

    /// Set inclusion, compared site by site (windows may differ).
    pub fn is_subset_of(&self, other: &Configuration) -> bool {
        if self.window == other.window {
            return self.words.iter().zip(&other.words).all(|(a, b)| a & !b == 0);
        }
        self.iter().all(|s| other.contains(s))
    }

    /// Same active sites, irrespective of window.
    pub fn same_sites(&self, other: &Configuration) -> bool {
        if self.window == other.window {
            return self.words == other.words;
        }
        self.is_subset_of(other) && other.is_subset_of(self)
    }

    pub fn union(&self, other: &Configuration) -> Result<Configuration> {
        let mut out = self.clone();
        for s in other.iter() {
            out.insert(s)?;
        }
        Ok(out)
    }

    /// Active sites lying in `[lo, hi]`.
    pub fn sites_between(&self, lo: Site, hi: Site) -> impl Iterator<Item = Site> + '_ {
        self.iter().filter(move |&s| lo <= s && s <= hi)
    }

    /// Re-express on another window; fails if an active site falls outside.
    pub fn embed(&self, window: Window) -> Result<Configuration> {
        Configuration::from_sites(window, self.iter())
    }

    /// Keep only the sites inside `window`.
    pub fn restrict(&self, window: Window) -> Configuration {
        let mut out = Configuration::empty(window);
        for s in self.iter().filter(|&s| window.contains(s)) {
            out.set(s);
        }
        out
    }

    /// Bitmask with the window's lowest site as bit 0 (windows of ≤ 32 sites).
    pub fn to_mask(&self) -> u32 {
        debug_assert!(self.window.len() <= 32);
        self.words.first().copied().unwrap_or(0) as u32
    }

    pub fn from_mask(window: Window, mask: u32) -> Self {
        let mut config = Self::empty(window);
        config.words[0] = mask as u64 & Self::all_one(window).words[0];
        config
    }

    // In-place maps, used by the sweep engines.

    pub fn leak_in_place(&mut self, i: Site) -> Result<()> {
        self.window.check(i)?;
        self.clear(i);
        Ok(())
    }

    pub fn spike_in_place(&mut self, i: Site) -> Result<()> {
        self.window.check(i)?;
        if !self.clear(i) {
            return Err(Error::InactiveSpike(i));
        }
        self.activate_neighbours(i);
        Ok(())
    }

    #[inline]
    pub(crate) fn activate_neighbours(&mut self, i: Site) {
        if i > self.window.lo {
            self.set(i - 1);
        }
        if i < self.window.hi {
            self.set(i + 1);
        }
    }

    pub fn dual_spike_in_place(&mut self, i: Site) -> Result<()> {
        self.window.check(i)?;
        self.dual_spike_unchecked(i);
        Ok(())
    }

    #[inline]
    pub(crate) fn dual_spike_unchecked(&mut self, i: Site) {
        let fed = self.contains(i - 1) || self.contains(i + 1);
        if fed {
            self.set(i);
        } else {
            self.clear(i);
        }
    }

    /// `π†_i`: site `i` becomes inactive.
    pub fn apply_leak(&self, i: Site) -> Result<Configuration> {
        let mut out = self.clone();
        out.leak_in_place(i)?;
        Ok(out)
    }

    /// `π_i` for an active `i`: `i` resets and its in-window neighbours fire up.
    pub fn apply_spike(&self, i: Site) -> Result<Configuration> {
        let mut out = self.clone();
        out.spike_in_place(i)?;
        Ok(out)
    }

    /// `π̃_i(F) = ∪_{j ∈ F} π̃_i({j})`.
    pub fn dual_apply_spike(&self, i: Site) -> Result<Configuration> {
        let mut out = self.clone();
        out.dual_spike_in_place(i)?;
        Ok(out)
    }

    /// `π̃†_i(F) = F \ {i}`.
    pub fn dual_apply_leak(&self, i: Site) -> Result<Configuration> {
        self.apply_leak(i)
    }
}

impl fmt::Debug for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self} on {}", self.window)
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (k, s) in self.iter().enumerate() {
            if k > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{s}")?;
        }
        f.write_str("}")
    }
}

/// All-one configuration on a window (spec operation `all_one`).
pub fn all_one(window: Window) -> Configuration {
    Configuration::all_one(window)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(w: Window, sites: &[Site]) -> Configuration {
        Configuration::from_sites(w, sites.iter().copied()).unwrap()
    }

    fn wide() -> Window {
        Window::finite(-5, 5).unwrap()
    }

    #[test]
    fn leak_examples() {
        let w = wide();
        assert_eq!(cfg(w, &[0, 1]).apply_leak(0).unwrap(), cfg(w, &[1]));
        assert_eq!(cfg(w, &[5]).apply_leak(3).unwrap(), cfg(w, &[5]));
        assert_eq!(cfg(w, &[]).apply_leak(0).unwrap(), cfg(w, &[]));
        assert!(matches!(cfg(w, &[]).apply_leak(6), Err(Error::OutsideWindow { .. })));
    }

    #[test]
    fn spike_examples() {
        let w = wide();
        assert_eq!(cfg(w, &[0]).apply_spike(0).unwrap(), cfg(w, &[-1, 1]));
        let w3 = Window::centered(3);
        assert_eq!(cfg(w3, &[3]).apply_spike(3).unwrap(), cfg(w3, &[2]));
        assert_eq!(cfg(w, &[-1, 0, 1]).apply_spike(0).unwrap(), cfg(w, &[-1, 1]));
    }

    #[test]
    fn spike_errors() {
        let w = wide();
        assert_eq!(cfg(w, &[1]).apply_spike(0), Err(Error::InactiveSpike(0)));
        assert!(matches!(cfg(w, &[1]).apply_spike(-9), Err(Error::OutsideWindow { .. })));
    }

    #[test]
    fn dual_spike_examples() {
        let w = wide();
        assert_eq!(cfg(w, &[0]).dual_apply_spike(0).unwrap(), cfg(w, &[]));
        assert_eq!(cfg(w, &[1]).dual_apply_spike(0).unwrap(), cfg(w, &[0, 1]));
        assert_eq!(cfg(w, &[0, 1]).dual_apply_spike(0).unwrap(), cfg(w, &[0, 1]));
        assert!(cfg(w, &[]).dual_apply_spike(7).is_err());
    }

    #[test]
    fn dual_leak_removes_site() {
        let w = wide();
        assert_eq!(cfg(w, &[0, 2]).dual_apply_leak(0).unwrap(), cfg(w, &[2]));
    }

    #[test]
    fn all_one_examples() {
        let w = Window::finite(-1, 1).unwrap();
        assert_eq!(all_one(w).to_vec(), vec![-1, 0, 1]);
        assert_eq!(all_one(Window::finite(0, 0).unwrap()).to_vec(), vec![0]);
        let half = Window::half_right(0, 3).unwrap();
        assert_eq!(all_one(half).to_vec(), vec![0, 1, 2, 3]);
        let big = Window::line(-100, 100).unwrap();
        assert_eq!(all_one(big).len(), 201);
        assert_eq!(all_one(big).max(), Some(100));
    }

    #[test]
    fn empty_window_rejected() {
        assert!(Window::finite(1, 0).is_err());
    }

    #[test]
    fn min_max_across_words() {
        let w = Window::line(-100, 100).unwrap();
        let c = cfg(w, &[-37, 12, 99]);
        assert_eq!(c.min(), Some(-37));
        assert_eq!(c.max(), Some(99));
        assert_eq!(c.to_vec(), vec![-37, 12, 99]);
        assert_eq!(Configuration::empty(w).min(), None);
    }

    #[test]
    fn truncation_edges() {
        let w = Window::half_right(0, 10).unwrap();
        assert!(!w.near_truncation(0));
        assert!(w.near_truncation(9));
        let l = Window::line(-10, 10).unwrap();
        assert!(l.near_truncation(-9) && l.near_truncation(10) && !l.near_truncation(0));
        assert!(!Window::centered(3).near_truncation(3));
    }

    #[test]
    fn mask_round_trip() {
        let w = Window::centered(2);
        let c = cfg(w, &[-2, 1]);
        assert_eq!(c.to_mask(), 0b01001);
        assert_eq!(Configuration::from_mask(w, 0b01001), c);
    }

    #[test]
    fn rates_reject_negative_gamma() {
        assert!(RateParams::new(-0.1).is_err());
        assert!(RateParams::new(f64::NAN).is_err());
        assert_eq!(RateParams::new(0.5).unwrap().per_site_rate(), 1.5);
    }

    /// Exhaustive additivity and window-preservation checks on a 5-site window.
    #[test]
    fn maps_are_additive_exhaustively() {
        let w = Window::finite(0, 4).unwrap();
        for a in 0u32..32 {
            for b in 0u32..32 {
                let ca = Configuration::from_mask(w, a);
                let cb = Configuration::from_mask(w, b);
                let cu = Configuration::from_mask(w, a | b);
                for i in w.sites() {
                    assert_eq!(cu.apply_leak(i).unwrap(), ca.apply_leak(i).unwrap().union(&cb.apply_leak(i).unwrap()).unwrap());
                    assert_eq!(
                        cu.dual_apply_spike(i).unwrap(),
                        ca.dual_apply_spike(i).unwrap().union(&cb.dual_apply_spike(i).unwrap()).unwrap()
                    );
                    // π_i acts only when i is active; extend it by identity otherwise
                    let spike = |c: &Configuration| if c.contains(i) { c.apply_spike(i).unwrap() } else { c.clone() };
                    assert_eq!(spike(&cu), spike(&ca).union(&spike(&cb)).unwrap());
                }
            }
        }
    }

    #[test]
    fn spike_equals_removal_plus_neighbours() {
        let w = Window::finite(0, 4).unwrap();
        for m in 0u32..32 {
            let c = Configuration::from_mask(w, m);
            for i in c.iter() {
                let out = c.apply_spike(i).unwrap();
                let mut expected: Vec<Site> = c.iter().filter(|&s| s != i).collect();
                expected.extend([i - 1, i + 1].into_iter().filter(|s| w.contains(*s)));
                assert_eq!(out, Configuration::from_sites(w, expected).unwrap());
                assert!(out.iter().all(|s| w.contains(s)));
            }
        }
    }

    #[test]
    fn dual_spike_far_from_set_is_identity() {
        let w = Window::finite(-6, 6).unwrap();
        let c = cfg(w, &[-1, 0, 2]);
        for i in w.sites() {
            let dist = c.iter().map(|s| (s - i).abs()).min().unwrap();
            if dist >= 2 {
                assert_eq!(c.dual_apply_spike(i).unwrap(), c);
            }
        }
    }

    /// The union form evaluated literally from the single-site cases.
    #[test]
    fn dual_spike_matches_union_definition() {
        let w = Window::finite(0, 4).unwrap();
        for m in 0u32..32 {
            let f = Configuration::from_mask(w, m);
            for i in w.sites() {
                let mut expected = Configuration::empty(w);
                for j in f.iter() {
                    if j == i {
                        continue;
                    } else if j == i - 1 || j == i + 1 {
                        expected.insert(i).unwrap();
                        expected.insert(j).unwrap();
                    } else {
                        expected.insert(j).unwrap();
                    }
                }
                assert_eq!(f.dual_apply_spike(i).unwrap(), expected);
            }
        }
    }
}
