//! Quantiles, standard errors and the exponential goodness-of-fit test.

use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gillespie::Tau;
use crate::parallel;
use crate::rng;

pub const MIN_RESAMPLES: usize = 2000;
pub const MIN_KS_SAMPLES: usize = 10;
pub const MIN_QUANTILE_SAMPLES: usize = 100;

/// Nonnegative observations plus a count of right-censored ones.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    values: Vec<f64>,
    censored: usize,
}

impl SampleSet {
    pub fn new(values: Vec<f64>, censored: usize) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(invalid("samples", format!("values must be finite and non-negative, got {v}")));
        }
        Ok(SampleSet { values, censored })
    }

    pub fn from_taus(taus: impl IntoIterator<Item = Tau>) -> Self {
        let mut values = Vec::new();
        let mut censored = 0;
        for t in taus {
            match t {
                Tau::Extinct(v) => values.push(v),
                Tau::Censored(_) => censored += 1,
            }
        }
        SampleSet { values, censored }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn censored(&self) -> usize {
        self.censored
    }

    /// Total count, censored included.
    pub fn len(&self) -> usize {
        self.values.len() + self.censored
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(invalid("scale", format!("must be positive, got {c}")));
        }
        SampleSet::new(self.values.iter().map(|v| v * c).collect(), self.censored)
    }

    fn require_uncensored(&self) -> Result<()> {
        if self.censored > 0 {
            Err(Error::Censored(self.censored))
        } else {
            Ok(())
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

/// Arithmetic mean and `sd / sqrt(n)` with the `n - 1` variance denominator.
pub fn mean_se(samples: &SampleSet) -> Result<Estimate> {
    samples.require_uncensored()?;
    let xs = samples.values();
    if xs.len() < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: xs.len() });
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(Estimate { value: mean, se: (var / n).sqrt() })
}

/// Mean and binomial SE of indicator outcomes.
pub fn proportion(successes: usize, n: usize) -> Result<Estimate> {
    if n == 0 {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    let p = successes as f64 / n as f64;
    Ok(Estimate { value: p, se: (p * (1.0 - p) / n as f64).sqrt() })
}

/// Order statistic `x_(ceil(n q))` with censored values placed at +inf.
///
/// The standard error is `sqrt(q (1 - q) / n) / f(x_q)` where `f` is a
/// Gaussian kernel density estimate with Silverman's bandwidth, evaluated at
/// the estimate.
pub fn quantile(samples: &SampleSet, q: f64) -> Result<Estimate> {
    if !(q > 0.0 && q < 1.0) {
        return Err(invalid("q", format!("must lie in (0, 1), got {q}")));
    }
    let n = samples.len();
    if n < MIN_QUANTILE_SAMPLES {
        return Err(Error::TooFewSamples { needed: MIN_QUANTILE_SAMPLES, got: n });
    }
    let mut xs = samples.values().to_vec();
    xs.sort_by(f64::total_cmp);
    let rank = ((n as f64 * q).ceil() as usize).max(1);
    if rank > xs.len() {
        return Err(Error::QuantileCensored);
    }
    let value = xs[rank - 1];
    let density = kde_at(&xs, n, value);
    let se = if density > 0.0 { (q * (1.0 - q) / n as f64).sqrt() / density } else { f64::INFINITY };
    Ok(Estimate { value, se })
}

/// Gaussian KDE of the full distribution at `x`; `sorted` holds the finite
/// values and `n` the total count, so censored mass lowers the density.
fn kde_at(sorted: &[f64], n: usize, x: f64) -> f64 {
    let m = sorted.len();
    if m < 2 {
        return 0.0;
    }
    let mean = sorted.iter().sum::<f64>() / m as f64;
    let sd = (sorted.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1) as f64).sqrt();
    let iqr = sorted[(3 * m) / 4] - sorted[m / 4];
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let h = 0.9 * spread * (m as f64).powf(-0.2);
    if !(h > 0.0) {
        return 0.0;
    }
    // Kernel mass beyond 8 bandwidths is below 1e-14.
    let lo = sorted.partition_point(|&v| v < x - 8.0 * h);
    let hi = sorted.partition_point(|&v| v <= x + 8.0 * h);
    let sum: f64 = sorted[lo..hi].iter().map(|&v| (-0.5 * ((x - v) / h).powi(2)).exp()).sum();
    sum / (n as f64 * h * (2.0 * std::f64::consts::PI).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Normalization {
    /// Divide by the sample mean; the bootstrap re-estimates it per resample.
    SampleMean,
    /// Divide by a fixed scale; the bootstrap null is fully specified.
    GivenBeta(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsReport {
    pub d: f64,
    pub n: usize,
    pub p_value: f64,
    pub normalization: Normalization,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bootstrap {
    pub resamples: usize,
    pub seed: u64,
    pub workers: usize,
}

impl Bootstrap {
    pub fn new(seed: u64) -> Self {
        Bootstrap { resamples: MIN_RESAMPLES, seed, workers: 1 }
    }
}

/// `sup_t |F_n(t) - (1 - e^{-t})|` for `values / scale`.
pub fn ks_statistic(values: &[f64], scale: f64) -> f64 {
    let mut xs: Vec<f64> = values.iter().map(|v| v / scale).collect();
    xs.sort_by(f64::total_cmp);
    ks_sorted(&xs)
}

fn ks_sorted(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = -(-x).exp_m1();
            ((i + 1) as f64 / n - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max)
}

fn normalized_d(values: &[f64], norm: Normalization) -> Result<f64> {
    let scale = match norm {
        Normalization::SampleMean => values.iter().sum::<f64>() / values.len() as f64,
        Normalization::GivenBeta(b) => b,
    };
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(invalid("scale", format!("normalizing scale must be positive, got {scale}")));
    }
    Ok(ks_statistic(values, scale))
}

/// KS distance to the unit-mean exponential with a parametric-bootstrap
/// p-value `(#{D_b >= D} + 1) / (B + 1)`. Resample `b` draws from its own
/// stream, so the result does not depend on the worker count.
pub fn ks_exponential(samples: &SampleSet, norm: Normalization, boot: &Bootstrap) -> Result<KsReport> {
    samples.require_uncensored()?;
    let n = samples.values().len();
    if n < MIN_KS_SAMPLES {
        return Err(Error::TooFewSamples { needed: MIN_KS_SAMPLES, got: n });
    }
    if boot.resamples < MIN_RESAMPLES {
        return Err(invalid("resamples", format!("must be at least {MIN_RESAMPLES}, got {}", boot.resamples)));
    }
    let d = normalized_d(samples.values(), norm)?;
    let null_norm = match norm {
        Normalization::SampleMean => Normalization::SampleMean,
        Normalization::GivenBeta(_) => Normalization::GivenBeta(1.0),
    };
    let exceed = parallel::try_map_indexed(boot.workers, boot.resamples, |b| {
        let mut r = rng::stream(boot.seed, &[b as u64]);
        let draw: Vec<f64> = (0..n).map(|_| Exp1.sample(&mut r)).collect();
        Ok(normalized_d(&draw, null_norm)? >= d)
    })?
    .into_iter()
    .filter(|&e| e)
    .count();
    let p_value = (exceed + 1) as f64 / (boot.resamples + 1) as f64;
    Ok(KsReport { d, n, p_value, normalization: norm })
}

/// Empirical survival `P(X > t)`, censored observations counted as surviving.
pub fn survival_fraction(samples: &SampleSet, t: f64) -> f64 {
    let alive = samples.values().iter().filter(|&&v| v > t).count() + samples.censored();
    alive as f64 / samples.len() as f64
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut r = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation (average ranks for ties).
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(invalid("spearman", "needs two equal-length series of at least 2 points"));
    }
    let (rx, ry) = (ranks(xs), ranks(ys));
    let n = rx.len() as f64;
    let mx = (n + 1.0) / 2.0;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - mx);
        sxx += (a - mx).powi(2);
        syy += (b - mx).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(0.0);
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// One-sided exact permutation p-value for a decreasing trend of `ys` along
/// its index: the fraction of orderings whose Spearman rho is at most the
/// observed one. Limited to 8 points.
pub fn decreasing_trend_p(ys: &[f64]) -> Result<(f64, f64)> {
    let n = ys.len();
    if !(2..=8).contains(&n) {
        return Err(invalid("trend", format!("supports 2..=8 points, got {n}")));
    }
    let xs: Vec<f64> = (0..n).map(|i| i as f64).collect();
    let rho = spearman(&xs, ys)?;
    let mut perm: Vec<usize> = (0..n).collect();
    let (mut total, mut as_low) = (0usize, 0usize);
    permute(&mut perm, 0, &mut |p| {
        let shuffled: Vec<f64> = p.iter().map(|&i| ys[i]).collect();
        let r = spearman(&xs, &shuffled).expect("same length");
        total += 1;
        if r <= rho + 1e-12 {
            as_low += 1;
        }
    });
    Ok((rho, as_low as f64 / total as f64))
}

fn permute(p: &mut Vec<usize>, k: usize, f: &mut impl FnMut(&[usize])) {
    if k == p.len() {
        f(p);
        return;
    }
    for i in k..p.len() {
        p.swap(k, i);
        permute(p, k + 1, f);
        p.swap(k, i);
    }
}
