//! Monte Carlo comparison of the naive and coarse-grained estimators.
//!
//! Every trial is a pure function of its indices: the pure state comes from
//! stream `(state, 0, 0, TRUE_STATE)`, the noisy POM from
//! `(state, mu, experiment, NOISE)` and the counts from
//! `(state, mu, experiment, COUNTS + (gamma << 8))`. The noise realization is
//! shared by all admixtures of one `(state, mu, experiment)` cell.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mle::{reference_estimate, strategy1, strategy3, EstimationResult, MlOptions};
use crate::qops::{admix, concurrence, trace_distance, DensityMatrix, PovmElement};
use crate::randgen::{haar_pure_state, perturb_pom, purpose, random_rank1_pom, SeedSpec};
use crate::sampler::simulate_counts;

pub const THREADS_ENV: &str = "TOMOCG_THREADS";

pub const TRIALS_HEADER: [&str; 9] = [
    "state_id",
    "gamma",
    "mu",
    "experiment_id",
    "concurrence",
    "td_raw",
    "td_cg",
    "converged_raw",
    "converged_cg",
];

pub const SUMMARY_HEADER: [&str; 7] = [
    "gamma",
    "mu",
    "pct_states_cg_better",
    "mean_pct_improvement",
    "std_pct_improvement",
    "mean_td_raw",
    "mean_td_cg",
];

/// Per-state improvements below this raw distance count as zero.
const ZERO_DISTANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignConfig {
    pub dim: usize,
    pub m_total: usize,
    /// `M₁`; 0 leaves every outcome ill-calibrated.
    pub m_well: usize,
    pub n_copies: u64,
    pub n_states: usize,
    pub n_experiments: usize,
    pub mu_list: Vec<f64>,
    pub gamma_list: Vec<f64>,
    pub t_exponent: f64,
    pub master_seed: u64,
    pub solver: MlOptions,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            dim: 4,
            m_total: 16,
            m_well: 0,
            n_copies: 8000,
            n_states: 250,
            n_experiments: 20,
            mu_list: (0..=12).map(|i| i as f64 / 20.0).collect(),
            gamma_list: vec![0.0, 0.1, 0.2],
            t_exponent: 1.0,
            master_seed: 0,
            solver: MlOptions::default(),
        }
    }
}

impl CampaignConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::OutOfRange(msg));
        if self.dim < 2 {
            return bad(format!("dim = {} must be at least 2", self.dim));
        }
        if self.m_total < self.dim * self.dim {
            return bad(format!(
                "m_total = {} is below D^2 = {}",
                self.m_total,
                self.dim * self.dim
            ));
        }
        if self.m_well > self.m_total {
            return bad(format!("m_well = {} exceeds m_total = {}", self.m_well, self.m_total));
        }
        if self.n_copies == 0 || self.n_states == 0 || self.n_experiments == 0 {
            return bad("n_copies, n_states and n_experiments must be positive".into());
        }
        if self.mu_list.is_empty() || self.gamma_list.is_empty() {
            return bad("mu_list and gamma_list must not be empty".into());
        }
        if let Some(mu) = self.mu_list.iter().find(|m| !(0.0..=1.0).contains(*m)) {
            return bad(format!("mu = {mu} not in [0, 1]"));
        }
        if let Some(g) = self.gamma_list.iter().find(|g| !(0.0..=1.0).contains(*g)) {
            return bad(format!("gamma = {g} not in [0, 1]"));
        }
        if !(self.t_exponent >= 0.0 && self.t_exponent.is_finite()) {
            return bad(format!("t_exponent = {} must be finite and >= 0", self.t_exponent));
        }
        Ok(())
    }

    /// Strategy 3 needs at least one ill-calibrated outcome.
    pub fn strategy3_applicable(&self) -> bool {
        self.m_well < self.m_total
    }
}

fn parse_value<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Parse(format!("bad value {v:?} for key {key}")))
}

fn parse_list(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_value(key, s))
        .collect()
}

/// Flat `key = value` text; lists are comma-separated and `#` starts a comment.
/// Missing keys keep their defaults.
impl FromStr for CampaignConfig {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut cfg = CampaignConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected key = value", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "dim" => cfg.dim = parse_value(key, value)?,
                "m_total" => cfg.m_total = parse_value(key, value)?,
                "m_well" => cfg.m_well = parse_value(key, value)?,
                "n_copies" => cfg.n_copies = parse_value(key, value)?,
                "n_states" => cfg.n_states = parse_value(key, value)?,
                "n_experiments" => cfg.n_experiments = parse_value(key, value)?,
                "mu_list" => cfg.mu_list = parse_list(key, value)?,
                "gamma_list" => cfg.gamma_list = parse_list(key, value)?,
                "t_exponent" => cfg.t_exponent = parse_value(key, value)?,
                "master_seed" => cfg.master_seed = parse_value(key, value)?,
                "tol" => cfg.solver.tol = parse_value(key, value)?,
                "max_iters" => cfg.solver.max_iters = parse_value(key, value)?,
                "gain_tol" => cfg.solver.gain_tol = parse_value(key, value)?,
                _ => return Err(Error::Parse(format!("line {}: unknown key {key}", lineno + 1))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub state_id: usize,
    pub gamma: f64,
    pub mu: f64,
    pub experiment_id: usize,
    /// Concurrence of the pure part, NaN outside two qubits.
    pub concurrence: f64,
    /// Trace distance of the Strategy 1 estimate to the reference estimate.
    pub td_raw: f64,
    /// Trace distance of the Strategy 3 estimate to the reference estimate.
    pub td_cg: f64,
    /// Reference and Strategy 1 both converged.
    pub converged_raw: bool,
    /// Reference and Strategy 3 both converged.
    pub converged_cg: bool,
}

impl TrialRecord {
    pub fn included(&self) -> bool {
        self.converged_raw && self.converged_cg
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub gamma: f64,
    pub mu: f64,
    pub pct_states_cg_better: f64,
    pub mean_pct_improvement: f64,
    /// Sample standard deviation across states.
    pub std_pct_improvement: f64,
    pub mean_td_raw: f64,
    pub mean_td_cg: f64,
    /// States with at least one included experiment.
    pub n_states: usize,
    pub excluded_trials: usize,
}

#[derive(Debug, Clone)]
pub struct CampaignOutput {
    pub trials: Vec<TrialRecord>,
    pub summary: Vec<SummaryRow>,
    pub excluded_trials: usize,
}

fn thread_count_from_env() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::Parse(format!("{THREADS_ENV}={v:?} is not a positive integer"))),
        },
        Err(_) => Ok(None),
    }
}

/// Runs the campaign, capping concurrency at `TOMOCG_THREADS` when set.
pub fn run_campaign(config: &CampaignConfig) -> Result<CampaignOutput> {
    run_campaign_with_threads(config, thread_count_from_env()?)
}

/// `threads = None` uses the global rayon pool.
pub fn run_campaign_with_threads(
    config: &CampaignConfig,
    threads: Option<usize>,
) -> Result<CampaignOutput> {
    config.validate()?;
    match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Numerical(format!("thread pool: {e}")))?
            .install(|| campaign_body(config)),
        None => campaign_body(config),
    }
}

fn campaign_body(config: &CampaignConfig) -> Result<CampaignOutput> {
    let seed = config.master_seed;
    let clean = random_rank1_pom(config.dim, config.m_total, &SeedSpec::new(seed, 0, 0, 0, purpose::POM))?;

    let pure: Vec<(DensityMatrix, f64)> = (0..config.n_states)
        .map(|s| {
            let rho = haar_pure_state(config.dim, &SeedSpec::new(seed, s as u64, 0, 0, purpose::TRUE_STATE))?;
            let c = concurrence(&rho).unwrap_or(f64::NAN);
            Ok((rho, c))
        })
        .collect::<Result<_>>()?;

    let mut tasks = Vec::with_capacity(config.n_states * config.mu_list.len() * config.n_experiments);
    for s in 0..config.n_states {
        for m in 0..config.mu_list.len() {
            for e in 0..config.n_experiments {
                tasks.push((s, m, e));
            }
        }
    }

    let cells: Vec<Vec<((usize, usize, usize, usize), TrialRecord)>> = tasks
        .par_iter()
        .map(|&(s, m, e)| run_cell(config, &clean, &pure[s], s, m, e))
        .collect::<Result<_>>()?;

    let mut keyed: Vec<_> = cells.into_iter().flatten().collect();
    keyed.sort_by_key(|(k, _)| *k);
    let trials: Vec<TrialRecord> = keyed.into_iter().map(|(_, t)| t).collect();

    let summary = summarize(&trials);
    let excluded_trials = trials.iter().filter(|t| !t.included()).count();
    Ok(CampaignOutput {
        trials,
        summary,
        excluded_trials,
    })
}

/// All admixtures of one `(state, mu, experiment)` cell, keyed by
/// `(gamma, mu, state, experiment)` indices.
fn run_cell(
    config: &CampaignConfig,
    clean: &[PovmElement],
    (pure, conc): &(DensityMatrix, f64),
    s: usize,
    m: usize,
    e: usize,
) -> Result<Vec<((usize, usize, usize, usize), TrialRecord)>> {
    let seed = config.master_seed;
    let mu = config.mu_list[m];
    let noise_seed = SeedSpec::new(seed, s as u64, m as u64, e as u64, purpose::NOISE);
    let setup = perturb_pom(clean, config.m_well, mu, &noise_seed)?;

    let mut out = Vec::with_capacity(config.gamma_list.len());
    for (g, &gamma) in config.gamma_list.iter().enumerate() {
        let rho = admix(pure, gamma)?;
        let counts_seed = SeedSpec::new(
            seed,
            s as u64,
            m as u64,
            e as u64,
            purpose::COUNTS + ((g as u64) << 8),
        );
        let counts = simulate_counts(&rho, &setup, config.n_copies, &counts_seed)?;

        let reference = reference_estimate(&counts, &setup, &config.solver);
        let raw = strategy1(&counts, &setup, &config.solver);
        let cg = if config.strategy3_applicable() {
            Some(strategy3(&counts, &setup, config.t_exponent, &config.solver))
        } else {
            None
        };
        let (td_raw, converged_raw) = compare(&reference, &raw);
        let (td_cg, converged_cg) = match &cg {
            Some(cg) => compare(&reference, cg),
            None => (f64::NAN, false),
        };
        out.push((
            (g, m, s, e),
            TrialRecord {
                state_id: s,
                gamma,
                mu,
                experiment_id: e,
                concurrence: *conc,
                td_raw,
                td_cg,
                converged_raw,
                converged_cg,
            },
        ));
    }
    Ok(out)
}

/// Estimation failures are reported as non-converged trials.
fn compare(reference: &Result<EstimationResult>, other: &Result<EstimationResult>) -> (f64, bool) {
    match (reference, other) {
        (Ok(a), Ok(b)) => {
            let td = trace_distance(&a.rho_hat, &b.rho_hat).unwrap_or(f64::NAN);
            (td, a.converged && b.converged && td.is_finite())
        }
        _ => (f64::NAN, false),
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// One row per `(gamma, mu)` in ascending order. Trace distances are averaged
/// over the included experiments of each state first, then across states.
pub fn summarize(trials: &[TrialRecord]) -> Vec<SummaryRow> {
    // (gamma, mu) -> state -> (raw, cg) distances; f64 keys via total order bits.
    let key = |x: f64| OrderedF64(x);
    let mut cells: BTreeMap<(OrderedF64, OrderedF64), (BTreeMap<usize, (Vec<f64>, Vec<f64>)>, usize)> =
        BTreeMap::new();
    for t in trials {
        let cell = cells.entry((key(t.gamma), key(t.mu))).or_default();
        if t.included() {
            let st = cell.0.entry(t.state_id).or_default();
            st.0.push(t.td_raw);
            st.1.push(t.td_cg);
        } else {
            cell.1 += 1;
        }
    }

    cells
        .into_iter()
        .map(|((gamma, mu), (states, excluded))| {
            let mut raw = Vec::with_capacity(states.len());
            let mut cg = Vec::with_capacity(states.len());
            let mut improvement = Vec::with_capacity(states.len());
            let mut better = 0usize;
            for (r, c) in states.values() {
                let (r, c) = (mean(r), mean(c));
                if c < r {
                    better += 1;
                }
                improvement.push(if r.abs() < ZERO_DISTANCE { 0.0 } else { 100.0 * (r - c) / r });
                raw.push(r);
                cg.push(c);
            }
            let n = states.len();
            let or_nan = |v: f64| if n == 0 { f64::NAN } else { v };
            SummaryRow {
                gamma: gamma.0,
                mu: mu.0,
                pct_states_cg_better: or_nan(100.0 * better as f64 / n as f64),
                mean_pct_improvement: or_nan(mean(&improvement)),
                std_pct_improvement: or_nan(sample_std(&improvement)),
                mean_td_raw: or_nan(mean(&raw)),
                mean_td_cg: or_nan(mean(&cg)),
                n_states: n,
                excluded_trials: excluded,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct OrderedF64(f64);

impl Eq for OrderedF64 {}

impl PartialOrd for OrderedF64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrderedF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// μ-interval where the mean improvement exceeds its standard deviation.
///
/// `rows` must share one `gamma`. The crossings are linearly interpolated
/// between grid points; of several disjoint regions the widest is returned
/// (the first on ties). `None` when the mean never exceeds the deviation.
pub fn performance_range(rows: &[SummaryRow]) -> Result<Option<(f64, f64)>> {
    if rows.len() < 2 {
        return Err(Error::OutOfRange(format!(
            "performance range needs at least 2 grid points, got {}",
            rows.len()
        )));
    }
    let mut pts: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| (r.mu, r.mean_pct_improvement - r.std_pct_improvement))
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let crossing = |a: (f64, f64), b: (f64, f64)| a.0 + (b.0 - a.0) * (-a.1) / (b.1 - a.1);

    let mut best: Option<(f64, f64)> = None;
    let mut i = 0;
    while i < pts.len() {
        if !(pts[i].1 > 0.0) {
            i += 1;
            continue;
        }
        let start = i;
        while i + 1 < pts.len() && pts[i + 1].1 > 0.0 {
            i += 1;
        }
        let lo = if start == 0 || !pts[start - 1].1.is_finite() {
            pts[start].0
        } else {
            crossing(pts[start - 1], pts[start])
        };
        let hi = if i + 1 == pts.len() || !pts[i + 1].1.is_finite() {
            pts[i].0
        } else {
            crossing(pts[i], pts[i + 1])
        };
        if best.is_none_or(|(a, b)| hi - lo > b - a) {
            best = Some((lo, hi));
        }
        i += 1;
    }
    Ok(best)
}

/// Summary rows grouped by `gamma`, ascending.
pub fn rows_by_gamma(summary: &[SummaryRow]) -> Vec<(f64, Vec<SummaryRow>)> {
    let mut out: Vec<(f64, Vec<SummaryRow>)> = Vec::new();
    for row in summary {
        match out.iter_mut().find(|(g, _)| *g == row.gamma) {
            Some((_, rows)) => rows.push(row.clone()),
            None => out.push((row.gamma, vec![row.clone()])),
        }
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

pub fn write_trials<W: Write>(w: W, trials: &[TrialRecord]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(TRIALS_HEADER)?;
    for t in trials {
        wtr.write_record([
            t.state_id.to_string(),
            t.gamma.to_string(),
            t.mu.to_string(),
            t.experiment_id.to_string(),
            t.concurrence.to_string(),
            t.td_raw.to_string(),
            t.td_cg.to_string(),
            t.converged_raw.to_string(),
            t.converged_cg.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_summary<W: Write>(w: W, summary: &[SummaryRow]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(SUMMARY_HEADER)?;
    for r in summary {
        wtr.write_record([
            r.gamma,
            r.mu,
            r.pct_states_cg_better,
            r.mean_pct_improvement,
            r.std_pct_improvement,
            r.mean_td_raw,
            r.mean_td_cg,
        ]
        .map(|x| x.to_string()))?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_trials<R: Read>(r: R) -> Result<Vec<TrialRecord>> {
    let mut rdr = csv::Reader::from_reader(r);
    let header = rdr.headers()?.clone();
    if header.iter().ne(TRIALS_HEADER) {
        return Err(Error::Parse(format!("unexpected trials header {header:?}")));
    }
    rdr.records()
        .map(|rec| {
            let rec = rec?;
            let field = |i: usize| rec.get(i).unwrap_or("");
            Ok(TrialRecord {
                state_id: parse_value(TRIALS_HEADER[0], field(0))?,
                gamma: parse_value(TRIALS_HEADER[1], field(1))?,
                mu: parse_value(TRIALS_HEADER[2], field(2))?,
                experiment_id: parse_value(TRIALS_HEADER[3], field(3))?,
                concurrence: parse_value(TRIALS_HEADER[4], field(4))?,
                td_raw: parse_value(TRIALS_HEADER[5], field(5))?,
                td_cg: parse_value(TRIALS_HEADER[6], field(6))?,
                converged_raw: parse_value(TRIALS_HEADER[7], field(7))?,
                converged_cg: parse_value(TRIALS_HEADER[8], field(8))?,
            })
        })
        .collect()
}
