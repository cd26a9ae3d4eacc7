//! The `spiking-ips` command line.
//!
//! Settings are resolved in increasing precedence: built-in defaults, the
//! `config` block of a replayed manifest (`--manifest`), a key-value config
//! file (`--config`), then command-line flags. The effective [`RunConfig`]
//! is written to `manifest.json` in the output directory before any work
//! starts and the manifest is finalized with outcome counts afterwards.
//!
//! Config file grammar, one setting per line:
//!
//! ```text
//! # comment
//! key = value            # keys are the long flag names: gamma, n, replicas,
//! gamma = 0.02, 0.05     # horizon, horizon-cap, m, margin-factor, resamples,
//! n = 5, 10              # t, suite, sites, seed, workers, out
//! ```
//!
//! Lists are comma-separated. Unknown keys are rejected.
//!
//! Exit codes: 0 on success, 1 on invalid input or I/O failure, 2 when a
//! verification suite reports violations or is inconclusive.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::ctmc::{self, CtmcModel};
use crate::error::{invalid, Error, Result};
use crate::experiments::{self, DensityConfig, LemmaConfig, MetastabilityConfig, SweepConfig};
use crate::gillespie::{self, SimSpec, Tau};
use crate::model::{RateParams, Window};
use crate::stats::{self, SampleSet};
use crate::verify::{self, CheckReport, VerifyConfig};

pub const MANIFEST_FORMAT: &str = "spiking-ips manifest v1";
/// Default horizon of `verify --suite lemmas`.
pub const LEMMA_HORIZON: f64 = 60.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CommandKind {
    Simulate,
    Exact,
    Metastability,
    Density,
    Sweep,
    Bound,
    Verify,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Duality,
    Graphical,
    Coupling,
    Lemmas,
}

impl std::str::FromStr for Suite {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        <Suite as clap::ValueEnum>::from_str(s, true).map_err(|_| invalid("suite", format!("unknown suite `{s}`")))
    }
}

/// Effective settings of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: CommandKind,
    pub gamma: Vec<f64>,
    pub n: Vec<u32>,
    pub replicas: usize,
    pub horizon: f64,
    pub horizon_cap: f64,
    pub m: i64,
    pub margin_factor: f64,
    pub resamples: usize,
    pub t: Vec<f64>,
    pub suite: Suite,
    pub sites: usize,
    pub seed: u64,
    pub workers: usize,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn defaults(command: CommandKind) -> Self {
        let gamma = match command {
            CommandKind::Metastability | CommandKind::Density => vec![0.05],
            CommandKind::Sweep => vec![0.02, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0],
            CommandKind::Bound => vec![0.0],
            _ => vec![0.5],
        };
        let n = match command {
            CommandKind::Metastability => vec![5, 10, 20, 40],
            CommandKind::Verify => vec![3],
            _ => vec![1],
        };
        let (horizon, m) = match command {
            CommandKind::Density => (50.0, 400),
            CommandKind::Sweep => (50.0, 200),
            _ => (3.0, 0),
        };
        let out = match command {
            CommandKind::Bound | CommandKind::Exact => None,
            _ => Some(PathBuf::from("spiking-ips-out")),
        };
        RunConfig {
            command,
            gamma,
            n,
            replicas: 10_000,
            horizon,
            horizon_cap: gillespie::DEFAULT_HORIZON_CAP,
            m,
            margin_factor: crate::graphical::DEFAULT_MARGIN_FACTOR,
            resamples: stats::MIN_RESAMPLES,
            t: vec![0.5, 1.0, 2.0],
            suite: Suite::Duality,
            sites: 5,
            seed: 1,
            workers: 1,
            out,
        }
    }

    /// Apply one `key = value` setting; `key` is a long flag name.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn one<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.trim().parse().map_err(|_| Error::Parse(format!("--{key}: cannot parse `{}`", v.trim())))
        }
        fn list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
            v.split(',').filter(|s| !s.trim().is_empty()).map(|s| one(key, s)).collect()
        }
        match key.replace('_', "-").as_str() {
            "gamma" => self.gamma = list(key, value)?,
            "n" => self.n = list(key, value)?,
            "replicas" | "reps" => self.replicas = one(key, value)?,
            "horizon" => self.horizon = one(key, value)?,
            "horizon-cap" => self.horizon_cap = one(key, value)?,
            "m" => self.m = one(key, value)?,
            "margin-factor" => self.margin_factor = one(key, value)?,
            "resamples" => self.resamples = one(key, value)?,
            "t" => self.t = list(key, value)?,
            "suite" => self.suite = value.trim().parse()?,
            "sites" => self.sites = one(key, value)?,
            "seed" => self.seed = one(key, value)?,
            "workers" => self.workers = one(key, value)?,
            "out" => self.out = Some(PathBuf::from(value.trim())),
            other => return Err(Error::Parse(format!("unknown setting `{other}`"))),
        }
        Ok(())
    }

    fn single_gamma(&self) -> Result<f64> {
        match self.gamma.as_slice() {
            [g] => Ok(*g),
            _ => Err(invalid("gamma", format!("--gamma: expected one value, got {}", self.gamma.len()))),
        }
    }

    fn single_n(&self) -> Result<u32> {
        match self.n.as_slice() {
            [n] => Ok(*n),
            _ => Err(invalid("n", format!("--n: expected one value, got {}", self.n.len()))),
        }
    }

    /// Range checks shared by all commands; command-specific checks happen
    /// in the library calls before any sampling.
    pub fn validate(&self) -> Result<()> {
        let flag = |name: &'static str, ok: bool, msg: String| if ok { Ok(()) } else { Err(invalid(name, format!("--{name}: {msg}"))) };
        flag("gamma", !self.gamma.is_empty(), "needs at least one value".into())?;
        for g in &self.gamma {
            flag("gamma", g.is_finite() && *g >= 0.0, format!("must be finite and non-negative, got {g}"))?;
        }
        flag("n", !self.n.is_empty(), "needs at least one value".into())?;
        flag("replicas", self.replicas >= 1, "must be at least 1".into())?;
        flag("workers", self.workers >= 1, "must be at least 1".into())?;
        flag("horizon", self.horizon > 0.0 && self.horizon.is_finite(), format!("must be positive, got {}", self.horizon))?;
        flag("horizon-cap", self.horizon_cap > 0.0, format!("must be positive, got {}", self.horizon_cap))?;
        flag(
            "margin-factor",
            self.margin_factor > 0.0 && self.margin_factor.is_finite(),
            format!("must be positive, got {}", self.margin_factor),
        )?;
        for t in &self.t {
            flag("t", t.is_finite() && *t >= 0.0, format!("must be non-negative, got {t}"))?;
        }
        match self.command {
            CommandKind::Simulate | CommandKind::Exact | CommandKind::Density | CommandKind::Bound => {
                self.single_gamma()?;
            }
            _ => {}
        }
        match self.command {
            CommandKind::Simulate | CommandKind::Exact => {
                self.single_n()?;
            }
            CommandKind::Verify if self.suite == Suite::Lemmas => {
                self.single_n()?;
            }
            _ => {}
        }
        Ok(())
    }
}

/// Parse a key-value config file.
pub fn parse_config_file(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse(format!("config line {}: expected `key = value`", lineno + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

#[derive(Parser, Debug)]
#[command(name = "spiking-ips", version, about = "Exact and Monte Carlo experiments for the leaky spiking-neuron particle system")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample extinction times of the finite system on [-N, N]
    Simulate(SimulateArgs),
    /// Exact mean extinction time, beta and survival from the all-one state
    Exact(ExactArgs),
    /// Extinction-time statistics across system sizes
    Metastability(MetastabilityArgs),
    /// Density of the upper invariant measure, dual and spatial estimators
    Density(DensityArgs),
    /// Dual survival proxies across a gamma grid
    Sweep(SweepArgs),
    /// Evaluate the contour bound
    Bound(BoundArgs),
    /// Run a realization-level property suite
    Verify(VerifyArgs),
}

#[derive(Args, Debug, Default)]
struct Common {
    /// Key-value config file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Replay the configuration recorded in a manifest
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory for CSV files and the manifest
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    n: Option<u32>,
    #[arg(long, visible_alias = "reps")]
    replicas: Option<usize>,
    #[arg(long)]
    horizon_cap: Option<f64>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct ExactArgs {
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    n: Option<u32>,
    /// Times at which to report survival, comma-separated
    #[arg(long, value_delimiter = ',')]
    t: Option<Vec<f64>>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct MetastabilityArgs {
    #[arg(long)]
    gamma: Option<f64>,
    /// System sizes, comma-separated
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<u32>>,
    #[arg(long, visible_alias = "reps")]
    replicas: Option<usize>,
    #[arg(long)]
    horizon_cap: Option<f64>,
    #[arg(long)]
    resamples: Option<usize>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct DensityArgs {
    #[arg(long)]
    gamma: Option<f64>,
    /// Time horizon T
    #[arg(long)]
    horizon: Option<f64>,
    /// Window half-width M
    #[arg(long)]
    m: Option<i64>,
    #[arg(long, visible_alias = "reps")]
    replicas: Option<usize>,
    #[arg(long)]
    margin_factor: Option<f64>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Ascending gamma grid, comma-separated
    #[arg(long, value_delimiter = ',')]
    gamma: Option<Vec<f64>>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    m: Option<i64>,
    #[arg(long, visible_alias = "reps")]
    replicas: Option<usize>,
    #[arg(long)]
    margin_factor: Option<f64>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct BoundArgs {
    #[arg(long)]
    gamma: Option<f64>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long, value_enum)]
    suite: Option<Suite>,
    /// Window length for the duality, graphical and coupling suites
    #[arg(long)]
    sites: Option<usize>,
    #[arg(long, visible_alias = "replicas")]
    reps: Option<usize>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Half-width N for the lemma suite
    #[arg(long)]
    n: Option<u32>,
    #[arg(long)]
    margin_factor: Option<f64>,
    #[command(flatten)]
    common: Common,
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn push<T: ToString>(out: &mut Vec<(String, String)>, key: &str, v: &Option<T>) {
    if let Some(v) = v {
        out.push((key.into(), v.to_string()));
    }
}

impl Command {
    fn kind(&self) -> CommandKind {
        match self {
            Command::Simulate(_) => CommandKind::Simulate,
            Command::Exact(_) => CommandKind::Exact,
            Command::Metastability(_) => CommandKind::Metastability,
            Command::Density(_) => CommandKind::Density,
            Command::Sweep(_) => CommandKind::Sweep,
            Command::Bound(_) => CommandKind::Bound,
            Command::Verify(_) => CommandKind::Verify,
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Simulate(a) => &a.common,
            Command::Exact(a) => &a.common,
            Command::Metastability(a) => &a.common,
            Command::Density(a) => &a.common,
            Command::Sweep(a) => &a.common,
            Command::Bound(a) => &a.common,
            Command::Verify(a) => &a.common,
        }
    }

    fn flag_settings(&self) -> Vec<(String, String)> {
        let mut o = Vec::new();
        match self {
            Command::Simulate(a) => {
                push(&mut o, "gamma", &a.gamma);
                push(&mut o, "n", &a.n);
                push(&mut o, "replicas", &a.replicas);
                push(&mut o, "horizon-cap", &a.horizon_cap);
            }
            Command::Exact(a) => {
                push(&mut o, "gamma", &a.gamma);
                push(&mut o, "n", &a.n);
                push(&mut o, "t", &a.t.as_deref().map(join));
            }
            Command::Metastability(a) => {
                push(&mut o, "gamma", &a.gamma);
                push(&mut o, "n", &a.n.as_deref().map(join));
                push(&mut o, "replicas", &a.replicas);
                push(&mut o, "horizon-cap", &a.horizon_cap);
                push(&mut o, "resamples", &a.resamples);
            }
            Command::Density(a) => {
                push(&mut o, "gamma", &a.gamma);
                push(&mut o, "horizon", &a.horizon);
                push(&mut o, "m", &a.m);
                push(&mut o, "replicas", &a.replicas);
                push(&mut o, "margin-factor", &a.margin_factor);
            }
            Command::Sweep(a) => {
                push(&mut o, "gamma", &a.gamma.as_deref().map(join));
                push(&mut o, "horizon", &a.horizon);
                push(&mut o, "m", &a.m);
                push(&mut o, "replicas", &a.replicas);
                push(&mut o, "margin-factor", &a.margin_factor);
            }
            Command::Bound(a) => push(&mut o, "gamma", &a.gamma),
            Command::Verify(a) => {
                push(&mut o, "suite", &a.suite.map(|s| format!("{s:?}").to_lowercase()));
                push(&mut o, "sites", &a.sites);
                push(&mut o, "replicas", &a.reps);
                push(&mut o, "horizon", &a.horizon);
                push(&mut o, "gamma", &a.gamma);
                push(&mut o, "n", &a.n);
                push(&mut o, "margin-factor", &a.margin_factor);
            }
        }
        let c = self.common();
        push(&mut o, "seed", &c.seed);
        push(&mut o, "workers", &c.workers);
        push(&mut o, "out", &c.out.as_ref().map(|p| p.display().to_string()));
        o
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub tool_version: String,
    pub config: RunConfig,
    pub status: String,
    pub started_unix: u64,
    pub finished_unix: Option<u64>,
    pub outputs: Vec<String>,
    pub counts: BTreeMap<String, u64>,
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Parse(format!("--manifest {}: {e}", path.display())))?;
        let m: Manifest = serde_json::from_str(&text).map_err(|e| Error::Parse(format!("--manifest {}: {e}", path.display())))?;
        if m.format != MANIFEST_FORMAT {
            return Err(Error::Parse(format!("--manifest: unsupported format `{}`", m.format)));
        }
        Ok(m)
    }
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Resolve the effective configuration for a parsed command line.
fn resolve(cmd: &Command) -> Result<RunConfig> {
    let common = cmd.common();
    let mut cfg = match &common.manifest {
        Some(p) => {
            let m = Manifest::read(p)?;
            if m.config.command != cmd.kind() {
                return Err(Error::Parse(format!("--manifest records a `{:?}` run, not `{:?}`", m.config.command, cmd.kind())));
            }
            m.config
        }
        None => RunConfig::defaults(cmd.kind()),
    };
    let mut settings = Vec::new();
    if let Some(path) = &common.config {
        let text = fs::read_to_string(path).map_err(|e| Error::Parse(format!("--config {}: {e}", path.display())))?;
        settings = parse_config_file(&text)?;
    }
    settings.extend(cmd.flag_settings());
    for (k, v) in &settings {
        cfg.set(k, v)?;
    }
    // the lemma suite needs a longer default horizon than the small-window suites
    let horizon_given = settings.iter().any(|(k, _)| k == "horizon");
    if cfg.command == CommandKind::Verify && cfg.suite == Suite::Lemmas && common.manifest.is_none() && !horizon_given {
        cfg.horizon = LEMMA_HORIZON;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Output of a command: files to write, text to print, and outcome counts.
struct Outcome {
    files: Vec<(String, String)>,
    stdout: String,
    counts: BTreeMap<String, u64>,
    suite_failed: bool,
}

impl Outcome {
    fn new() -> Self {
        Outcome { files: Vec::new(), stdout: String::new(), counts: BTreeMap::new(), suite_failed: false }
    }
}

/// Fixed 17-significant-digit rendering for CSV payloads.
pub fn fmt_float(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else {
        format!("{x:.16e}")
    }
}

fn csv(header: &str, rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut s = String::from(header);
    s.push('\n');
    for r in rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    s
}

fn execute(cfg: &RunConfig) -> Result<Outcome> {
    let mut out = Outcome::new();
    match cfg.command {
        CommandKind::Bound => {
            let g = cfg.single_gamma()?;
            let b = experiments::contour_bound(g)?;
            out.stdout = format!("{b}\n");
            out.files.push(("bound.csv".into(), csv("gamma,bound", [vec![fmt_float(g), fmt_float(b)]])));
        }
        CommandKind::Exact => {
            let (g, n) = (cfg.single_gamma()?, cfg.single_n()?);
            let model = CtmcModel::build(n, RateParams::new(g)?)?;
            let start = model.all_one_state();
            let mean = ctmc::mean_extinction(&model)?[start as usize];
            let _ = writeln!(out.stdout, "mean_tau = {mean}");
            let beta = if g > 0.0 { ctmc::beta_exact(&model, start)? } else { f64::NAN };
            if g > 0.0 {
                let _ = writeln!(out.stdout, "beta = {beta}");
            }
            let mut rows = Vec::new();
            for &t in &cfg.t {
                let s = ctmc::survival_with_bound(&model, start, t)?;
                let _ = writeln!(out.stdout, "P(tau > {t}) = {}", s.probability);
                rows.push(vec![fmt_float(t), fmt_float(s.probability), fmt_float(s.truncation_bound)]);
            }
            out.files.push((
                "exact.csv".into(),
                csv("N,gamma,mean_tau,beta", [vec![n.to_string(), fmt_float(g), fmt_float(mean), fmt_float(beta)]]),
            ));
            out.files.push(("survival.csv".into(), csv("t,survival,truncation_bound", rows)));
        }
        CommandKind::Simulate => {
            let (g, n) = (cfg.single_gamma()?, cfg.single_n()?);
            let spec = SimSpec::new(Window::centered(n), RateParams::new(g)?, cfg.seed).with_cap(cfg.horizon_cap);
            let samples = gillespie::sample_batch(&spec, cfg.replicas, cfg.workers)?;
            let set = SampleSet::from_taus(samples.iter().map(|s| s.tau));
            out.counts.insert("replicas".into(), samples.len() as u64);
            out.counts.insert("censored".into(), set.censored() as u64);
            match stats::mean_se(&set) {
                Ok(e) => {
                    let _ = writeln!(out.stdout, "mean_tau = {} (se {})", e.value, e.se);
                }
                Err(_) => {
                    let _ = writeln!(out.stdout, "mean_tau unavailable: {} censored samples", set.censored());
                }
            }
            let rows = samples.iter().map(|s| {
                let (tau, censored) = match s.tau {
                    Tau::Extinct(t) => (t, 0),
                    Tau::Censored(c) => (c, 1),
                };
                vec![s.replica.to_string(), fmt_float(tau), censored.to_string(), s.spikes.to_string(), s.leaks.to_string()]
            });
            out.files.push(("samples.csv".into(), csv("replica,tau,censored,spikes,leaks", rows)));
        }
        CommandKind::Metastability => {
            let g = cfg.single_gamma()?;
            let rows = experiments::metastability(&MetastabilityConfig {
                gamma: g,
                ns: cfg.n.clone(),
                replicas: cfg.replicas,
                seed: cfg.seed,
                workers: cfg.workers,
                horizon_cap: cfg.horizon_cap,
                resamples: cfg.resamples,
            })?;
            out.counts.insert("replicas".into(), (rows.len() * cfg.replicas) as u64);
            out.counts.insert("censored".into(), rows.iter().map(|r| r.censored as u64).sum());
            let main = rows.iter().map(|r| {
                vec![
                    r.n.to_string(),
                    fmt_float(r.gamma),
                    r.replicas.to_string(),
                    fmt_float(r.mean_tau),
                    fmt_float(r.se_mean),
                    fmt_float(r.beta_hat),
                    fmt_float(r.se_beta),
                    fmt_float(r.ks_d),
                    fmt_float(r.ks_p),
                    fmt_float(r.ratio),
                    r.censored.to_string(),
                ]
            });
            out.files.push((
                "metastability.csv".into(),
                csv("N,gamma,replicas,mean_tau,se_mean,beta_hat,se_beta,ks_d,ks_p,ratio,censored", main),
            ));
            let defects = rows
                .iter()
                .flat_map(|r| r.defects.iter().map(move |d| vec![r.n.to_string(), fmt_float(d.s), fmt_float(d.t), fmt_float(d.defect)]));
            out.files.push(("memoryless.csv".into(), csv("N,s,t,defect", defects)));
            for r in &rows {
                let _ = writeln!(
                    out.stdout,
                    "N={} mean_tau={} beta_hat={} ks_d={} ks_p={} censored={}",
                    r.n, r.mean_tau, r.beta_hat, r.ks_d, r.ks_p, r.censored
                );
            }
        }
        CommandKind::Density => {
            let d = experiments::density(&DensityConfig {
                gamma: cfg.single_gamma()?,
                horizon: cfg.horizon,
                m: cfg.m,
                replicas: cfg.replicas,
                seed: cfg.seed,
                workers: cfg.workers,
                margin_factor: cfg.margin_factor,
            })?;
            out.counts.insert("replicas".into(), 2 * cfg.replicas as u64);
            out.counts.insert("contaminated".into(), d.contaminated as u64);
            let row = vec![
                fmt_float(d.gamma),
                fmt_float(d.horizon),
                d.m.to_string(),
                fmt_float(d.rho_dual),
                fmt_float(d.se_dual),
                fmt_float(d.rho_spatial),
                fmt_float(d.se_spatial),
                fmt_float(d.contamination),
            ];
            out.files.push(("density.csv".into(), csv("gamma,T,M,rho_dual,se_dual,rho_spatial,se_spatial,contamination", [row])));
            let _ = writeln!(
                out.stdout,
                "rho_dual = {} (se {}), rho_spatial = {} (se {}), contamination = {}{}",
                d.rho_dual,
                d.se_dual,
                d.rho_spatial,
                d.se_spatial,
                d.contamination,
                if d.unreliable { " [unreliable]" } else { "" }
            );
        }
        CommandKind::Sweep => {
            let rep = experiments::sweep(&SweepConfig {
                gammas: cfg.gamma.clone(),
                horizon: cfg.horizon,
                m: cfg.m,
                replicas: cfg.replicas,
                seed: cfg.seed,
                workers: cfg.workers,
                margin_factor: cfg.margin_factor,
            })?;
            out.counts.insert("replicas".into(), (rep.rows.len() * cfg.replicas) as u64);
            out.counts.insert("contaminated".into(), rep.rows.iter().map(|r| r.contaminated as u64).sum());
            let rows = rep.rows.iter().map(|r| {
                vec![fmt_float(r.gamma), fmt_float(r.survival_full), fmt_float(r.se_full), fmt_float(r.survival_half), fmt_float(r.se_half)]
            });
            out.files.push(("sweep.csv".into(), csv("gamma,survival_full,se_full,survival_half,se_half", rows)));
            for r in &rep.rows {
                let _ = writeln!(out.stdout, "gamma={} full={} half={}", r.gamma, r.survival_full, r.survival_half);
            }
            match rep.crossing {
                Some(c) => {
                    let _ = writeln!(out.stdout, "crossing of half the plateau near gamma = {c}");
                }
                None => {
                    let _ = writeln!(out.stdout, "no crossing of half the plateau on this grid");
                }
            }
        }
        CommandKind::Verify => {
            let reports = run_suite(cfg)?;
            out.counts.insert("checks".into(), reports.iter().map(|r| r.checks).sum());
            out.counts.insert("violations".into(), reports.iter().map(|r| r.violations).sum());
            out.counts.insert("excluded".into(), reports.iter().map(|r| r.excluded).sum());
            out.suite_failed = reports.iter().any(|r| !r.passed());
            let rows = reports.iter().map(|r| {
                vec![r.name.clone(), r.checks.to_string(), r.violations.to_string(), r.excluded.to_string(), r.inconclusive.to_string()]
            });
            out.files.push(("verify.csv".into(), csv("check,checks,violations,excluded,inconclusive", rows)));
            for r in &reports {
                let verdict = if r.passed() { "PASS" } else { "FAIL" };
                let _ = writeln!(
                    out.stdout,
                    "{verdict} {}: {} checks, {} violations{}",
                    r.name,
                    r.checks,
                    r.violations,
                    if r.note.is_empty() { String::new() } else { format!(" ({})", r.note) }
                );
            }
        }
    }
    Ok(out)
}

fn run_suite(cfg: &RunConfig) -> Result<Vec<CheckReport>> {
    let vc = VerifyConfig {
        sites: cfg.sites,
        reps: cfg.replicas,
        horizon: cfg.horizon,
        gamma: cfg.single_gamma()?,
        seed: cfg.seed,
        workers: cfg.workers,
    };
    match cfg.suite {
        Suite::Duality => verify::duality_suite(&vc),
        Suite::Graphical => verify::sweep_path_suite(&vc),
        Suite::Coupling => verify::coupling_suite(&vc),
        Suite::Lemmas => experiments::lemma_suite(&LemmaConfig {
            gamma: vc.gamma,
            n: cfg.single_n()?,
            replicas: cfg.replicas,
            seed: cfg.seed,
            workers: cfg.workers,
            horizon: cfg.horizon,
            margin_factor: cfg.margin_factor,
            dominance_time: 5.0,
            dominance_pairs: LemmaConfig::default_pairs(),
        }),
    }
}

fn write_json(path: &Path, m: &Manifest) -> Result<()> {
    let text = serde_json::to_string_pretty(m).map_err(|e| Error::Parse(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

fn run(cfg: RunConfig) -> Result<(Outcome, Option<PathBuf>)> {
    let manifest_path = match &cfg.out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| Error::Parse(format!("--out {}: {e}", dir.display())))?;
            let path = dir.join("manifest.json");
            let m = Manifest {
                format: MANIFEST_FORMAT.into(),
                tool_version: env!("CARGO_PKG_VERSION").into(),
                config: cfg.clone(),
                status: "running".into(),
                started_unix: now(),
                finished_unix: None,
                outputs: Vec::new(),
                counts: BTreeMap::new(),
            };
            write_json(&path, &m)?;
            Some((path, m))
        }
        None => None,
    };
    let result = execute(&cfg);
    let Some((path, mut m)) = manifest_path else {
        return result.map(|o| (o, None));
    };
    m.finished_unix = Some(now());
    match &result {
        Ok(o) => {
            let dir = cfg.out.as_ref().expect("manifest implies an output directory");
            for (name, body) in &o.files {
                fs::write(dir.join(name), body).map_err(|e| Error::Parse(format!("{name}: {e}")))?;
                m.outputs.push(name.clone());
            }
            m.counts = o.counts.clone();
            m.status = if o.suite_failed { "suite-failed".into() } else { "complete".into() };
        }
        Err(e) => m.status = format!("failed: {e}"),
    }
    write_json(&path, &m)?;
    result.map(|o| (o, Some(path)))
}

/// Error text naming the command-line flag responsible, where one is.
fn describe(e: &Error) -> String {
    let hint = match e {
        Error::InvalidParameter { name, reason } if !reason.starts_with("--") => Some(name.replace('_', "-")),
        Error::Margin(_) => Some("m".into()),
        Error::Capacity { .. } => Some("n".into()),
        _ => None,
    };
    match hint {
        Some(flag) => format!("--{flag}: {e}"),
        None => e.to_string(),
    }
}

/// Run the command line, printing to stdout/stderr; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let cfg = match resolve(&cli.command) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            return 1;
        }
    };
    match run(cfg) {
        Ok((o, manifest)) => {
            print!("{}", o.stdout);
            if let Some(p) = manifest {
                eprintln!("manifest: {}", p.display());
            }
            if o.suite_failed {
                2
            } else {
                0
            }
        }
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            1
        }
    }
}
