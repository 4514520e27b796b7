//! `tomocg` command-line front end.

use std::ffi::OsString;
use std::fs;
use std::io;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use crate::error::Result;
use crate::experiment::{
    performance_range, read_trials, rows_by_gamma, run_campaign, summarize, write_summary,
    write_trials, CampaignConfig, SummaryRow,
};
use crate::io::{
    format_operator, read_counts, read_operator, read_setup, write_coarse_counts, write_counts,
    write_operator, write_setup,
};
use crate::mle::{
    reference_estimate, strategy1, strategy2, strategy3, EstimationResult, MlOptions,
};
use crate::mwe::{mwe_counts, mwe_frequencies};
use crate::qops::{admix, DensityMatrix};
use crate::randgen::{haar_pure_state, perturb_pom, purpose, random_rank1_pom, SeedSpec};
use crate::sampler::simulate_counts;

#[derive(Debug, Parser)]
#[command(
    name = "tomocg",
    version,
    about = "Coarse-grained ML tomography with ill-calibrated measurement outcomes"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Strategy {
    /// Treat the ill-calibrated outcomes as the intended ones.
    #[value(name = "1")]
    Raw,
    /// Use the well-calibrated outcomes only.
    #[value(name = "2")]
    WellOnly,
    /// Coarse-grain the ill counts by maximum weighted entropy.
    #[value(name = "3")]
    CoarseGrained,
    /// Use the actual outcomes (needs a simulated setup).
    #[value(name = "ref")]
    Reference,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a random rank-one POM summing to the identity.
    GenPovm {
        #[arg(long, default_value_t = 4)]
        dim: usize,
        /// Number of outcomes M.
        #[arg(long, default_value_t = 16)]
        m_total: usize,
        /// Number of well-calibrated outcomes M1.
        #[arg(long, default_value_t = 0)]
        m_well: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output setup directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Perturb a clean POM and simulate detection counts.
    Simulate {
        /// Setup directory holding the clean POM.
        #[arg(long)]
        povm: PathBuf,
        /// Noise level mu in [0, 1].
        #[arg(long)]
        mu: f64,
        /// Number of detected copies N.
        #[arg(long, default_value_t = 8000)]
        n_copies: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// True state file; a seeded Haar-random pure state when absent.
        #[arg(long, conflicts_with = "gamma")]
        state: Option<PathBuf>,
        /// Admixture of the maximally mixed state into the random pure state.
        #[arg(long)]
        gamma: Option<f64>,
        /// Output directory for setup/, true_state.txt and counts.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Coarse-grain the ill-calibrated counts by maximum weighted entropy.
    Mwe {
        #[arg(long)]
        counts: PathBuf,
        /// Exponent t of the weights (n_k / N_ill)^t.
        #[arg(long, default_value_t = 1.0)]
        t_exponent: f64,
        /// Output CSV of real-valued counts.
        #[arg(long)]
        out: PathBuf,
    },
    /// Maximum-likelihood state estimate.
    Estimate {
        /// Setup directory.
        #[arg(long)]
        povm: PathBuf,
        #[arg(long)]
        counts: PathBuf,
        #[arg(long, value_enum, default_value = "3")]
        strategy: Strategy,
        #[arg(long, default_value_t = 1.0)]
        t_exponent: f64,
        /// Bound on the fixed-point residual.
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[arg(long, default_value_t = 100_000)]
        max_iters: usize,
        /// Output operator file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a Monte Carlo campaign.
    Run {
        /// Config file of key = value lines; defaults when absent.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory for trials.csv and summary.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarize a trials.csv and report performance ranges.
    Summarize {
        #[arg(long)]
        trials: PathBuf,
        /// Output summary CSV; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parses `argv` (program name first) and runs the subcommand.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

pub fn execute(command: Command) -> Result<()> {
    match command {
        Command::GenPovm {
            dim,
            m_total,
            m_well,
            seed,
            out,
        } => {
            let clean = random_rank1_pom(dim, m_total, &SeedSpec::new(seed, 0, 0, 0, purpose::POM))?;
            let setup = perturb_pom(&clean, m_well, 0.0, &SeedSpec::from_master(seed))?;
            write_setup(&out, &setup)?;
            println!("wrote {m_total} outcomes (D = {dim}, M1 = {m_well}) to {}", out.display());
        }
        Command::Simulate {
            povm,
            mu,
            n_copies,
            seed,
            state,
            gamma,
            out,
        } => {
            let base = read_setup(&povm)?;
            let clean = base.nominal_outcomes();
            let setup = perturb_pom(&clean, base.m_well, mu, &SeedSpec::new(seed, 0, 0, 0, purpose::NOISE))?;
            let rho = match state {
                Some(path) => DensityMatrix::from_matrix(read_operator(&path)?)?,
                None => {
                    let pure = haar_pure_state(base.dim, &SeedSpec::new(seed, 0, 0, 0, purpose::TRUE_STATE))?;
                    admix(&pure, gamma.unwrap_or(0.0))?
                }
            };
            let counts = simulate_counts(&rho, &setup, n_copies, &SeedSpec::new(seed, 0, 0, 0, purpose::COUNTS))?;
            fs::create_dir_all(&out)?;
            write_setup(&out.join("setup"), &setup)?;
            write_operator(&out.join("true_state.txt"), rho.matrix())?;
            write_counts(&out.join("counts.csv"), &counts)?;
            println!(
                "simulated N = {} (N_ill = {}) at mu = {mu} into {}",
                counts.total(),
                counts.n_ill(),
                out.display()
            );
        }
        Command::Mwe {
            counts,
            t_exponent,
            out,
        } => {
            let counts = read_counts(&counts)?;
            let coarse = mwe_counts(&counts, t_exponent)?;
            write_coarse_counts(&out, &coarse)?;
            if counts.n_ill() > 0 {
                let sol = mwe_frequencies(&counts.ill, t_exponent)?;
                println!("lambda={} n_ill={}", sol.lambda, counts.n_ill());
            } else {
                println!("no ill-calibrated detections; counts unchanged");
            }
        }
        Command::Estimate {
            povm,
            counts,
            strategy,
            t_exponent,
            tol,
            max_iters,
            out,
        } => {
            let setup = read_setup(&povm)?;
            let counts = read_counts(&counts)?;
            let opts = MlOptions {
                tol,
                max_iters,
                ..MlOptions::default()
            };
            let res = match strategy {
                Strategy::Raw => strategy1(&counts, &setup, &opts)?,
                Strategy::WellOnly => strategy2(&counts, &setup, &opts)?,
                Strategy::CoarseGrained => strategy3(&counts, &setup, t_exponent, &opts)?,
                Strategy::Reference => reference_estimate(&counts, &setup, &opts)?,
            };
            let status = status_line(&res);
            let text = format!("{}{status}\n", format_operator(res.rho_hat.matrix()));
            match out {
                Some(path) => {
                    fs::write(&path, text)?;
                    println!("{status}");
                }
                None => print!("{text}"),
            }
        }
        Command::Run { config, out } => {
            let cfg: CampaignConfig = match config {
                Some(path) => fs::read_to_string(path)?.parse()?,
                None => CampaignConfig::default(),
            };
            let result = run_campaign(&cfg)?;
            fs::create_dir_all(&out)?;
            write_trials(fs::File::create(out.join("trials.csv"))?, &result.trials)?;
            write_summary(fs::File::create(out.join("summary.csv"))?, &result.summary)?;
            println!(
                "{} trials, {} excluded as non-converged",
                result.trials.len(),
                result.excluded_trials
            );
            report_ranges(&result.summary);
        }
        Command::Summarize { trials, out } => {
            let trials = read_trials(fs::File::open(&trials)?)?;
            let summary = summarize(&trials);
            match out {
                Some(path) => write_summary(fs::File::create(path)?, &summary)?,
                None => write_summary(io::stdout().lock(), &summary)?,
            }
            let excluded: usize = summary.iter().map(|r| r.excluded_trials).sum();
            eprintln!("{excluded} trials excluded as non-converged");
            report_ranges(&summary);
        }
    }
    Ok(())
}

fn status_line(res: &EstimationResult) -> String {
    format!(
        "# iterations={} residual={:e} log_likelihood={} converged={}",
        res.iterations, res.residual, res.log_likelihood, res.converged
    )
}

fn report_ranges(summary: &[SummaryRow]) {
    for (gamma, rows) in rows_by_gamma(summary) {
        match performance_range(&rows) {
            Ok(Some((lo, hi))) => eprintln!("gamma={gamma}: performance range [{lo:.4}, {hi:.4}]"),
            Ok(None) => eprintln!("gamma={gamma}: no performance range"),
            Err(e) => eprintln!("gamma={gamma}: {e}"),
        }
    }
}
