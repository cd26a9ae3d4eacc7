//! Experiment drivers: metastability of the finite system, density of the
//! upper invariant measure, the survival sweep over `gamma`, the contour
//! bound, and path-level checks of the frontier lemmas.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gillespie::{self, SimSpec};
use crate::graphical::{apply_event, margin, Direction, GraphicalRealization};
use crate::lazy;
use crate::model::{Configuration, RateParams, Site, Window};
use crate::parallel;
use crate::rng;
use crate::stats::{self, Bootstrap, Estimate, Normalization, SampleSet};
use crate::verify::CheckReport;

const META: u64 = 0x4D45;
const DENSITY_DUAL: u64 = 0x4444;
const DENSITY_SPATIAL: u64 = 0x4453;
const SWEEP: u64 = 0x5357;
const LEMMA: u64 = 0x4C45;
const DOMINANCE: u64 = 0x4C34;

/// Contamination rate above which a Monte Carlo estimate is flagged.
pub const CONTAMINATION_LIMIT: f64 = 1e-2;
/// Grid of `(s, t)` values for the memoryless defect, in units of `beta`.
pub const MEMORYLESS_GRID: [f64; 3] = [0.5, 1.0, 2.0];

fn positive_gamma(gamma: f64) -> Result<RateParams> {
    let p = RateParams::new(gamma)?;
    if gamma == 0.0 {
        return Err(invalid("gamma", "gamma = 0 is degenerate: the finite system never dies"));
    }
    Ok(p)
}

fn require_margin(m: Site, horizon: f64, c: f64) -> Result<()> {
    let need = margin(horizon, c);
    if m < need {
        return Err(Error::Margin(format!("window half-width {m} is below the margin {need} required for horizon {horizon}")));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetastabilityConfig {
    pub gamma: f64,
    pub ns: Vec<u32>,
    pub replicas: usize,
    pub seed: u64,
    pub workers: usize,
    pub horizon_cap: f64,
    pub resamples: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemorylessDefect {
    pub s: f64,
    pub t: f64,
    pub defect: f64,
}

/// Statistics that need uncensored samples are NaN when any replica hit
/// the horizon cap.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetastabilityRow {
    pub n: u32,
    pub gamma: f64,
    pub replicas: usize,
    pub mean_tau: f64,
    pub se_mean: f64,
    pub beta_hat: f64,
    pub se_beta: f64,
    pub ks_d: f64,
    pub ks_p: f64,
    pub ratio: f64,
    pub censored: usize,
    pub defects: Vec<MemorylessDefect>,
}

impl MetastabilityRow {
    pub fn max_defect(&self) -> f64 {
        self.defects.iter().map(|d| d.defect).fold(f64::NAN, f64::max)
    }
}

pub fn metastability(cfg: &MetastabilityConfig) -> Result<Vec<MetastabilityRow>> {
    let params = positive_gamma(cfg.gamma)?;
    if cfg.ns.is_empty() {
        return Err(invalid("n", "needs at least one system size"));
    }
    cfg.ns.iter().map(|&n| metastability_row(cfg, params, n)).collect()
}

fn metastability_row(cfg: &MetastabilityConfig, params: RateParams, n: u32) -> Result<MetastabilityRow> {
    let spec = SimSpec::new(Window::centered(n), params, rng::derive_seed(cfg.seed, &[META, n as u64])).with_cap(cfg.horizon_cap);
    let samples = SampleSet::from_taus(gillespie::sample_batch(&spec, cfg.replicas, cfg.workers)?.into_iter().map(|s| s.tau));
    let nan = Estimate { value: f64::NAN, se: f64::NAN };
    let mean = match stats::mean_se(&samples) {
        Ok(e) => e,
        Err(Error::Censored(_)) => nan,
        Err(e) => return Err(e),
    };
    let beta = match stats::quantile(&samples, 1.0 - (-1.0f64).exp()) {
        Ok(e) => e,
        Err(Error::QuantileCensored) => nan,
        Err(e) => return Err(e),
    };
    let boot = Bootstrap { resamples: cfg.resamples, seed: rng::derive_seed(cfg.seed, &[META, n as u64, 1]), workers: cfg.workers };
    let (ks_d, ks_p) = match stats::ks_exponential(&samples, Normalization::SampleMean, &boot) {
        Ok(r) => (r.d, r.p_value),
        Err(Error::Censored(_)) => (f64::NAN, f64::NAN),
        Err(e) => return Err(e),
    };
    let mut defects = Vec::new();
    for &s in &MEMORYLESS_GRID {
        for &t in &MEMORYLESS_GRID {
            let fits = beta.value.is_finite() && (s + t) * beta.value <= cfg.horizon_cap;
            let defect = if fits {
                let p = |x: f64| stats::survival_fraction(&samples, x * beta.value);
                (p(s + t) - p(s) * p(t)).abs()
            } else {
                f64::NAN
            };
            defects.push(MemorylessDefect { s, t, defect });
        }
    }
    Ok(MetastabilityRow {
        n,
        gamma: cfg.gamma,
        replicas: cfg.replicas,
        mean_tau: mean.value,
        se_mean: mean.se,
        beta_hat: beta.value,
        se_beta: beta.se,
        ks_d,
        ks_p,
        ratio: mean.value / beta.value,
        censored: samples.censored(),
        defects,
    })
}

/// Spearman rho of the largest memoryless defect along the rows, with the
/// exact one-sided permutation p-value for a decreasing trend.
pub fn defect_trend(rows: &[MetastabilityRow]) -> Result<(f64, f64)> {
    let ys: Vec<f64> = rows.iter().map(|r| r.max_defect()).collect();
    if ys.iter().any(|y| !y.is_finite()) {
        return Err(Error::Censored(rows.iter().map(|r| r.censored).sum()));
    }
    stats::decreasing_trend_p(&ys)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityConfig {
    pub gamma: f64,
    pub horizon: f64,
    pub m: Site,
    pub replicas: usize,
    pub seed: u64,
    pub workers: usize,
    pub margin_factor: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityEstimate {
    pub gamma: f64,
    pub horizon: f64,
    pub m: Site,
    pub rho_dual: f64,
    pub se_dual: f64,
    pub rho_spatial: f64,
    pub se_spatial: f64,
    /// Fraction of all replicas (both estimators) excluded as contaminated.
    pub contamination: f64,
    pub contaminated: usize,
    pub unreliable: bool,
}

impl DensityEstimate {
    pub fn combined_se(&self) -> f64 {
        self.se_dual.hypot(self.se_spatial)
    }
}

/// Density two ways on `Line[-M, M]`: survival to `T` of the dual started
/// at `{0}`, and the average over the block `[0, M/2]` of the forward
/// process from the all-one configuration at `T`.
pub fn density(cfg: &DensityConfig) -> Result<DensityEstimate> {
    let params = positive_gamma(cfg.gamma)?;
    if cfg.replicas < 2 {
        return Err(invalid("replicas", "must be at least 2"));
    }
    if !(cfg.horizon > 0.0 && cfg.horizon.is_finite()) {
        return Err(invalid("horizon", format!("must be positive, got {}", cfg.horizon)));
    }
    require_margin(cfg.m, cfg.horizon, cfg.margin_factor)?;
    let window = Window::line(-cfg.m, cfg.m)?;
    let origin = Configuration::from_sites(window, [0])?;
    let dual = parallel::try_map_indexed(cfg.workers, cfg.replicas, |r| {
        let seed = rng::derive_seed(cfg.seed, &[DENSITY_DUAL, r as u64]);
        let out = lazy::run(window, &params, cfg.horizon, seed, &origin, Direction::Dual)?;
        Ok((out.extinction_time.is_none(), out.contamination.touched))
    })?;
    let block = cfg.m / 2;
    let full = Configuration::all_one(window);
    let spatial = parallel::try_map_indexed(cfg.workers, cfg.replicas, |r| {
        let seed = rng::derive_seed(cfg.seed, &[DENSITY_SPATIAL, r as u64]);
        let g = GraphicalRealization::generate(window, &params, cfg.horizon, seed)?;
        let touched = g.edge_influence(0, block, cfg.horizon, Direction::Forward)?.touched;
        let state = g.evolve(&full, cfg.horizon)?;
        Ok((state.sites_between(0, block).count() as f64 / (block + 1) as f64, touched))
    })?;
    let clean_dual: Vec<bool> = dual.iter().filter(|d| !d.1).map(|d| d.0).collect();
    let clean_spatial: Vec<f64> = spatial.iter().filter(|s| !s.1).map(|s| s.0).collect();
    let contaminated = (dual.len() - clean_dual.len()) + (spatial.len() - clean_spatial.len());
    let d = stats::proportion(clean_dual.iter().filter(|&&b| b).count(), clean_dual.len())?;
    let s = stats::mean_se(&SampleSet::new(clean_spatial, 0)?)?;
    let contamination = contaminated as f64 / (2 * cfg.replicas) as f64;
    Ok(DensityEstimate {
        gamma: cfg.gamma,
        horizon: cfg.horizon,
        m: cfg.m,
        rho_dual: d.value,
        se_dual: d.se,
        rho_spatial: s.value,
        se_spatial: s.se,
        contamination,
        contaminated,
        unreliable: contamination > CONTAMINATION_LIMIT,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub gammas: Vec<f64>,
    pub horizon: f64,
    pub m: Site,
    pub replicas: usize,
    pub seed: u64,
    pub workers: usize,
    pub margin_factor: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub gamma: f64,
    pub survival_full: f64,
    pub se_full: f64,
    pub survival_half: f64,
    pub se_half: f64,
    pub contaminated: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    /// Descriptive crossing of half the plateau (the smallest-gamma value)
    /// by the full-window proxy, linearly interpolated; `None` if the proxy
    /// never falls that low on the grid.
    pub crossing: Option<f64>,
}

/// Dual survival to `T` from `{0}` on `Line[-M, M]` and on the half-line
/// `[0, M]`. Replica `r` uses the same seed on both windows (and at every
/// `gamma`), so the half-line dual is pathwise contained in the full one.
pub fn sweep(cfg: &SweepConfig) -> Result<SweepReport> {
    if cfg.gammas.is_empty() {
        return Err(invalid("gamma", "grid is empty"));
    }
    if cfg.gammas.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(invalid("gamma", "grid must be strictly ascending"));
    }
    if cfg.replicas < 1 {
        return Err(invalid("replicas", "must be at least 1"));
    }
    require_margin(cfg.m, cfg.horizon, cfg.margin_factor)?;
    let full = Window::line(-cfg.m, cfg.m)?;
    let half = Window::half_right(0, cfg.m)?;
    let mut rows = Vec::with_capacity(cfg.gammas.len());
    for &gamma in &cfg.gammas {
        let params = positive_gamma(gamma)?;
        let outcomes = parallel::try_map_indexed(cfg.workers, cfg.replicas, |r| {
            let seed = rng::derive_seed(cfg.seed, &[SWEEP, r as u64]);
            let f = lazy::run(full, &params, cfg.horizon, seed, &Configuration::from_sites(full, [0])?, Direction::Dual)?;
            let h = lazy::run(half, &params, cfg.horizon, seed, &Configuration::from_sites(half, [0])?, Direction::Dual)?;
            Ok((f.extinction_time.is_none(), h.extinction_time.is_none(), f.contamination.touched || h.contamination.touched))
        })?;
        let clean: Vec<&(bool, bool, bool)> = outcomes.iter().filter(|o| !o.2).collect();
        let contaminated = outcomes.len() - clean.len();
        let pf = stats::proportion(clean.iter().filter(|o| o.0).count(), clean.len())?;
        let ph = stats::proportion(clean.iter().filter(|o| o.1).count(), clean.len())?;
        rows.push(SweepRow { gamma, survival_full: pf.value, se_full: pf.se, survival_half: ph.value, se_half: ph.se, contaminated });
    }
    let crossing = crossing(&rows);
    Ok(SweepReport { rows, crossing })
}

fn crossing(rows: &[SweepRow]) -> Option<f64> {
    let level = 0.5 * rows.first()?.survival_full;
    if level <= 0.0 {
        return None;
    }
    rows.windows(2).find(|w| w[1].survival_full < level).map(|w| {
        let (a, b) = (&w[0], &w[1]);
        a.gamma + (a.survival_full - level) / (a.survival_full - b.survival_full) * (b.gamma - a.gamma)
    })
}

/// Upper end (exclusive) of the domain of [`contour_bound`].
pub const CONTOUR_DOMAIN: f64 = 1.0 / 65536.0;

/// `(1+g)/(2+g) + 2g + 16^3 sqrt(g) * 16 g^{1/4} / (1 - 16 g^{1/4})`, the
/// bound on the probability that the half-line dual dies, for
/// `0 <= g < 16^{-4}`.
pub fn contour_bound(gamma: f64) -> Result<f64> {
    if !(0.0..CONTOUR_DOMAIN).contains(&gamma) {
        return Err(invalid("gamma", format!("contour bound is defined on [0, 16^-4), got {gamma}")));
    }
    let q = 16.0 * gamma.powf(0.25);
    Ok((1.0 + gamma) / (2.0 + gamma) + 2.0 * gamma + 4096.0 * gamma.sqrt() * q / (1.0 - q))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaConfig {
    pub gamma: f64,
    pub n: u32,
    pub replicas: usize,
    pub seed: u64,
    pub workers: usize,
    /// Horizon of the path-level checks.
    pub horizon: f64,
    pub margin_factor: f64,
    /// Time at which survival probabilities are compared in the dominance check.
    pub dominance_time: f64,
    pub dominance_pairs: Vec<(Vec<Site>, usize)>,
}

impl LemmaConfig {
    pub fn default_pairs() -> Vec<(Vec<Site>, usize)> {
        vec![(vec![1, 3, 5], 3), (vec![0, 4], 2), (vec![-6, 0, 6, 12], 4)]
    }
}

pub const LEMMA_NAMES: [&str; 4] = ["frontier agreement", "merged starts", "extreme sites", "spread dominance"];

struct LemmaCounts {
    reports: [CheckReport; 3],
}

/// Path-level checks of the frontier lemmas on shared realizations of
/// `Line[-N-M, N+M]`, `M = ceil(c T)`, plus the statistical dominance of
/// spread-out starts.
///
/// * frontier agreement: inside `[min, max]` of the finite process, finite
///   and proxy configurations coincide while the finite one lives;
/// * merged starts: with random non-empty `B ⊆ [1, N]`, `C ⊆ [-N, -1]`,
///   once the left half-line process from `B` has reached `-N` and the
///   right half-line process from `C` has reached `N` (and the finite
///   process from `B ∪ C` is alive), the finite processes from all-one and
///   from `B ∪ C` coincide;
/// * extreme sites: `min` of the finite process equals `min` of the right
///   half-line process from `[-N, ∞)`, mirrored for `max`;
/// * spread dominance: `P(τ^A > t) >= P(τ^{1..n} > t) - 4 SE` with `|A| = n`.
pub fn lemma_suite(cfg: &LemmaConfig) -> Result<Vec<CheckReport>> {
    let params = positive_gamma(cfg.gamma)?;
    if cfg.replicas < 2 {
        return Err(invalid("replicas", "must be at least 2"));
    }
    if !(cfg.horizon > 0.0 && cfg.horizon.is_finite()) {
        return Err(invalid("horizon", format!("must be positive, got {}", cfg.horizon)));
    }
    let n = cfg.n as Site;
    let m = margin(cfg.horizon, cfg.margin_factor);
    let full = Window::line(-n - m, n + m)?;
    let finite = Window::centered(cfg.n);
    let right = Window::half_right(-n, n + m)?;
    let left = Window::half_left(-n - m, n)?;

    let per_replica = parallel::try_map_indexed(cfg.workers, cfg.replicas, |r| -> Result<Option<LemmaCounts>> {
        let seed = rng::derive_seed(cfg.seed, &[LEMMA, r as u64]);
        let g = GraphicalRealization::generate(full, &params, cfg.horizon, seed)?;
        if g.edge_influence(-n, n, cfg.horizon, Direction::Forward)?.touched {
            return Ok(None);
        }
        let mut counts =
            LemmaCounts { reports: LEMMA_NAMES[..3].iter().map(|s| CheckReport::new(s)).collect::<Vec<_>>().try_into().expect("three") };
        let mut fin = Configuration::all_one(finite);
        let mut prox = Configuration::all_one(full);
        let mut fin_right = Configuration::all_one(right);
        let mut fin_left = Configuration::all_one(left);

        let mut pick = rng::stream(seed, &[1]);
        let merged = if n >= 1 {
            let side = |pick: &mut crate::rng::SimRng, lo: Site, hi: Site| {
                let mut s: Vec<Site> = (lo..=hi).filter(|_| pick.gen::<bool>()).collect();
                if s.is_empty() {
                    s.push(*(lo..=hi).collect::<Vec<_>>().choose(pick).expect("non-empty range"));
                }
                s
            };
            let b = side(&mut pick, 1, n);
            let c = side(&mut pick, -n, -1);
            let bc = Configuration::from_sites(finite, b.iter().chain(&c).copied())?;
            Some((Configuration::from_sites(left, b)?, Configuration::from_sites(right, c)?, bc))
        } else {
            None
        };
        let (mut hb, mut hc, mut fin_bc) = match merged {
            Some(x) => (Some(x.0), Some(x.1), Some(x.2)),
            None => (None, None, None),
        };
        let (mut r_hit, mut l_hit) = (None::<f64>, None::<f64>);
        // armed once both half-line processes have crossed, with B ∪ C alive
        let mut armed = false;

        let observe =
            |counts: &mut LemmaCounts, fin: &Configuration, prox: &Configuration, fr: &Configuration, fl: &Configuration, t: f64| {
                if let (Some(lo), Some(hi)) = (fin.min(), fin.max()) {
                    let agree = (lo..=hi).all(|s| fin.contains(s) == prox.contains(s));
                    counts.reports[0].record(agree, || format!("replica {r} at t={t}: {fin} vs proxy on [{lo}, {hi}]"));
                    let ok = fr.min() == Some(lo) && fl.max() == Some(hi);
                    counts.reports[2]
                        .record(ok, || format!("replica {r} at t={t}: finite [{lo}, {hi}], half-lines {:?} {:?}", fr.min(), fl.max()));
                }
            };
        observe(&mut counts, &fin, &prox, &fin_right, &fin_left, 0.0);
        for ev in g.events() {
            apply_event(&mut fin, ev, Direction::Forward);
            apply_event(&mut prox, ev, Direction::Forward);
            apply_event(&mut fin_right, ev, Direction::Forward);
            apply_event(&mut fin_left, ev, Direction::Forward);
            if let (Some(hb), Some(hc), Some(bc)) = (hb.as_mut(), hc.as_mut(), fin_bc.as_mut()) {
                apply_event(hb, ev, Direction::Forward);
                apply_event(hc, ev, Direction::Forward);
                apply_event(bc, ev, Direction::Forward);
                if r_hit.is_none() && hb.contains(-n) {
                    r_hit = Some(ev.time);
                }
                if l_hit.is_none() && hc.contains(n) {
                    l_hit = Some(ev.time);
                }
                if !armed && r_hit.is_some() && l_hit.is_some() {
                    // tau^{B∪C} > max(R, L) means alive just after the later hit
                    if bc.is_empty() {
                        fin_bc = None;
                    } else {
                        armed = true;
                    }
                } else if armed {
                    let (a, b) = (&fin, &*bc);
                    counts.reports[1].record(a == b, || format!("replica {r} at t={}: {a} vs {b}", ev.time));
                }
            }
            observe(&mut counts, &fin, &prox, &fin_right, &fin_left, ev.time);
            // B ∪ C lies inside all-one, so nothing is left to compare
            if fin.is_empty() {
                break;
            }
        }
        Ok(Some(counts))
    })?;

    let mut reports: Vec<CheckReport> = LEMMA_NAMES.iter().map(|s| CheckReport::new(s)).collect();
    let mut excluded = 0u64;
    for c in &per_replica {
        match c {
            None => excluded += 1,
            Some(c) => {
                for (t, p) in reports.iter_mut().zip(&c.reports) {
                    if t.violations == 0 && p.violations > 0 {
                        t.note = p.note.clone();
                    }
                    t.checks += p.checks;
                    t.violations += p.violations;
                }
            }
        }
    }
    let inconclusive = excluded as f64 / cfg.replicas as f64 > CONTAMINATION_LIMIT;
    for rep in reports.iter_mut().take(3) {
        rep.excluded = excluded;
        rep.inconclusive = inconclusive;
        if rep.checks == 0 && rep.note.is_empty() {
            rep.note = "no applicable configurations (vacuous)".into();
        }
    }
    reports[3] = dominance(cfg, &params)?;
    Ok(reports)
}

fn dominance(cfg: &LemmaConfig, params: &RateParams) -> Result<CheckReport> {
    let mut rep = CheckReport::new(LEMMA_NAMES[3]);
    let t = cfg.dominance_time;
    if !(t > 0.0 && t.is_finite()) {
        return Err(invalid("dominance_time", format!("must be positive, got {t}")));
    }
    let m = margin(t, cfg.margin_factor);
    let mut notes = Vec::new();
    let mut contaminated = 0u64;
    for (k, (a, size)) in cfg.dominance_pairs.iter().enumerate() {
        if a.len() != *size || *size == 0 {
            return Err(invalid("dominance_pairs", format!("set {a:?} does not have {size} sites")));
        }
        let reach = a.iter().map(|s| s.abs()).max().unwrap_or(0).max(*size as Site) + m;
        let window = Window::line(-reach, reach)?;
        let spread = Configuration::from_sites(window, a.iter().copied())?;
        let packed = Configuration::from_sites(window, 1..=*size as Site)?;
        let mut survive = [0usize; 2];
        let mut clean = [0usize; 2];
        for (j, start) in [&spread, &packed].into_iter().enumerate() {
            let outs = parallel::try_map_indexed(cfg.workers, cfg.replicas, |r| {
                let seed = rng::derive_seed(cfg.seed, &[DOMINANCE, k as u64, j as u64, r as u64]);
                lazy::run(window, params, t, seed, start, Direction::Forward)
            })?;
            for o in outs {
                if o.contamination.touched {
                    contaminated += 1;
                } else {
                    clean[j] += 1;
                    survive[j] += o.extinction_time.is_none() as usize;
                }
            }
        }
        let pa = stats::proportion(survive[0], clean[0])?;
        let pn = stats::proportion(survive[1], clean[1])?;
        let se = pa.se.hypot(pn.se);
        let ok = pa.value >= pn.value - 4.0 * se;
        rep.checks += 1;
        if !ok {
            rep.violations += 1;
        }
        notes.push(format!("{a:?} vs 1..={size}: {:.4} vs {:.4} (se {:.4})", pa.value, pn.value, se));
    }
    rep.excluded = contaminated;
    rep.inconclusive = contaminated as f64 / (2 * cfg.replicas * cfg.dominance_pairs.len()).max(1) as f64 > CONTAMINATION_LIMIT;
    rep.note = notes.join("; ");
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn contour_bound_values() {
        assert_eq!(contour_bound(0.0).unwrap(), 0.5);
        assert!(contour_bound(1e-12).unwrap() < 1.0);
        assert!(contour_bound(CONTOUR_DOMAIN).is_err());
        assert!(contour_bound(-1e-3).is_err());
        // direct evaluation at one interior point
        let g: f64 = 1e-8;
        let q = 16.0 * g.powf(0.25);
        let direct = (1.0 + g) / (2.0 + g) + 2.0 * g + 16f64.powi(3) * g.sqrt() * q / (1.0 - q);
        assert!((contour_bound(g).unwrap() - direct).abs() < 1e-15);
    }

    #[test]
    fn gamma_zero_rejected() {
        let cfg = MetastabilityConfig { gamma: 0.0, ns: vec![1], replicas: 10, seed: 1, workers: 1, horizon_cap: 10.0, resamples: 2000 };
        assert!(metastability(&cfg).is_err());
    }

    #[test]
    fn single_site_metastability_row() {
        let cfg = MetastabilityConfig { gamma: 1.0, ns: vec![0], replicas: 20_000, seed: 3, workers: 1, horizon_cap: 1e6, resamples: 2000 };
        let row = &metastability(&cfg).unwrap()[0];
        assert!((row.mean_tau - 0.5).abs() < 3.0 * row.se_mean);
        assert!((row.beta_hat - 0.5).abs() < 3.0 * row.se_beta);
        assert!((row.ratio - 1.0).abs() < 0.05);
        assert!(row.ks_p > 1e-3);
        assert_eq!(row.defects.len(), 9);
        assert!(row.max_defect() < 0.02);
    }

    #[test]
    fn censored_rows_report_nan() {
        let cfg = MetastabilityConfig { gamma: 0.05, ns: vec![4], replicas: 200, seed: 1, workers: 1, horizon_cap: 5.0, resamples: 2000 };
        let row = &metastability(&cfg).unwrap()[0];
        assert_eq!(row.censored, 200);
        assert!(row.mean_tau.is_nan() && row.ks_d.is_nan() && row.beta_hat.is_nan());
    }

    #[test]
    fn density_dies_at_large_gamma() {
        let cfg = DensityConfig { gamma: 10.0, horizon: 5.0, m: 20, replicas: 500, seed: 2, workers: 1, margin_factor: 4.0 };
        let d = density(&cfg).unwrap();
        assert!(d.rho_dual < 0.01 && d.rho_spatial < 0.01, "{d:?}");
        assert!(!d.unreliable);
    }

    #[test]
    fn density_margin_enforced() {
        let cfg = DensityConfig { gamma: 0.1, horizon: 50.0, m: 100, replicas: 10, seed: 2, workers: 1, margin_factor: 4.0 };
        assert!(matches!(density(&cfg), Err(Error::Margin(_))));
    }

    #[test]
    fn density_estimators_agree_on_small_instance() {
        let cfg = DensityConfig { gamma: 0.2, horizon: 5.0, m: 20, replicas: 4000, seed: 5, workers: 1, margin_factor: 4.0 };
        let d = density(&cfg).unwrap();
        assert!((d.rho_dual - d.rho_spatial).abs() < 4.0 * d.combined_se(), "{d:?}");
    }

    #[test]
    fn sweep_small_grid() {
        let cfg =
            SweepConfig { gammas: vec![0.05, 0.5, 2.0], horizon: 5.0, m: 20, replicas: 2000, seed: 1, workers: 1, margin_factor: 4.0 };
        let rep = sweep(&cfg).unwrap();
        for r in &rep.rows {
            assert!(r.survival_half <= r.survival_full);
        }
        assert!(rep.rows[0].survival_full > rep.rows[2].survival_full);
        let bad = SweepConfig { gammas: vec![0.5, 0.2], ..cfg };
        assert!(sweep(&bad).is_err());
    }

    #[test]
    fn crossing_interpolates() {
        let row = |gamma, s| SweepRow { gamma, survival_full: s, se_full: 0.0, survival_half: 0.0, se_half: 0.0, contaminated: 0 };
        let rows = vec![row(0.1, 0.8), row(0.2, 0.6), row(0.3, 0.2)];
        assert!((crossing(&rows).unwrap() - 0.25).abs() < 1e-12);
        assert_eq!(crossing(&rows[..2]), None);
    }

    #[test]
    fn lemma_suite_small_run() {
        for n in [0, 2] {
            let cfg = LemmaConfig {
                gamma: 0.5,
                n,
                replicas: 300,
                seed: 4,
                workers: 1,
                horizon: 10.0,
                margin_factor: 4.0,
                dominance_time: 2.0,
                dominance_pairs: LemmaConfig::default_pairs(),
            };
            let reps = lemma_suite(&cfg).unwrap();
            assert_eq!(reps.len(), 4);
            for r in &reps {
                assert!(r.passed(), "{r:?}");
            }
            if n == 0 {
                assert_eq!(reps[1].checks, 0);
            } else {
                assert!(reps[1].checks > 0);
            }
        }
    }
}
