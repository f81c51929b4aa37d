//! Command-line harness: exact sweeps, Monte Carlo simulation, mechanism
//! experiments, the mixed strategy, instance generation, and deviation checks.
//!
//! Exit codes: 0 on success, 2 on configuration or parse errors, 3 when
//! `--assert` is set and a consistency check fails.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use multiunit::allocator;
use multiunit::analyzer::{self, min_ratio};
use multiunit::error::Error;
use multiunit::instance::{
    self, build_revenue_curve, BidProfile, RevenueCurve,
};
use multiunit::mechanism::{self, Pacing};
use multiunit::offline::opt_revenue;
use multiunit::report::{sweep_to_csv, Report};
use multiunit::rng::derive_rng;

#[derive(Parser)]
#[command(name = "multiunit", version, about = "Online multi-unit allocation and auction harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Output format. CSV is available for sweep-shaped commands.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// CI mode: exit 3 when a built-in consistency check fails.
    #[arg(long, global = true)]
    assert: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct InstanceArgs {
    /// Instance file (JSON).
    #[arg(long)]
    instance: Option<PathBuf>,
    /// Spike instance: one bid of 1 plus many bids of this epsilon.
    #[arg(long)]
    spike_eps: Option<f64>,
    /// Number of epsilon bids in the spike instance.
    #[arg(long, default_value_t = 300)]
    spike_count: usize,
}

impl InstanceArgs {
    fn load(&self) -> Result<BidProfile, Error> {
        match (&self.instance, self.spike_eps) {
            (Some(path), None) => instance::load_instance(path),
            (None, Some(eps)) => instance::gen_spike(eps, self.spike_count),
            (Some(_), Some(_)) => Err(Error::InvalidConfig(
                "pass either --instance or --spike-eps, not both".into(),
            )),
            (None, None) => Err(Error::InvalidConfig(
                "an instance is required: --instance FILE or --spike-eps EPS".into(),
            )),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Exact analyzer sweep over supplies 1..=m-max.
    Analyze {
        #[command(flatten)]
        inst: InstanceArgs,
        #[arg(long)]
        m_max: usize,
    },
    /// Monte Carlo allocator runs at a fixed supply.
    Simulate {
        #[command(flatten)]
        inst: InstanceArgs,
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 100_000)]
        trials: usize,
        /// Master seed (required: no hidden nondeterminism).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Mechanism revenue experiment plus a deviation check.
    Mechanism {
        #[command(flatten)]
        inst: InstanceArgs,
        #[arg(long)]
        m: usize,
        /// Pacing discount; exactly one of --gamma / --epsilon.
        #[arg(long)]
        gamma: Option<f64>,
        /// Sets gamma = epsilon / 8.
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long, default_value_t = 0.05)]
        delta: f64,
        #[arg(long, default_value_t = 100_000)]
        trials: usize,
        /// Sampled misreports to replay with fixed coins.
        #[arg(long, default_value_t = 1000)]
        deviations: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Mixed strategy: sell one copy with probability p1, otherwise run the
    /// online allocator. Exact sweep.
    Mixed {
        #[command(flatten)]
        inst: InstanceArgs,
        #[arg(long)]
        m_max: usize,
        /// Probability of the sell-one branch.
        #[arg(long, default_value_t = 1.0 / 3.0)]
        p_one: f64,
    },
    /// Generate an instance file.
    Gen {
        #[arg(long, value_enum)]
        kind: GenKind,
        #[arg(long)]
        spike_eps: Option<f64>,
        #[arg(long, default_value_t = 300)]
        spike_count: usize,
        #[arg(long, default_value_t = 3)]
        peaks: usize,
        #[arg(long, default_value_t = 8)]
        bidders: usize,
        #[arg(long, default_value_t = 4)]
        max_bids_per_bidder: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Deviation tester: sampled misreports with all coins fixed.
    Truthcheck {
        #[command(flatten)]
        inst: InstanceArgs,
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 0.0125)]
        gamma: f64,
        #[arg(long, default_value_t = 1000)]
        deviations: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum GenKind {
    Spike,
    Multipeak,
    Random,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(assert_failures) => {
            if cli.assert && !assert_failures.is_empty() {
                for f in &assert_failures {
                    eprintln!("assertion failed: {f}");
                }
                ExitCode::from(3)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn require_seed(seed: Option<u64>) -> Result<u64, Error> {
    seed.ok_or_else(|| {
        Error::InvalidConfig("--seed is required for stochastic commands".into())
    })
}

fn emit(cli: &Cli, text: String) -> Result<(), Error> {
    match &cli.out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn curve_of(profile: &BidProfile) -> Result<RevenueCurve, Error> {
    build_revenue_curve(profile)
}

fn run(cli: &Cli) -> Result<Vec<String>, Error> {
    let mut failures = Vec::new();
    match &cli.command {
        Command::Analyze { inst, m_max } => {
            if *m_max < 1 {
                return Err(Error::InvalidConfig("--m-max must be >= 1".into()));
            }
            let profile = inst.load()?;
            let curve = curve_of(&profile)?;
            let rows = analyzer::competitive_ratio_sweep(&curve, *m_max)?;
            let minr = min_ratio(&rows);
            if minr < 0.5 - 1.0 / (2.0 * smallest_peak(&curve) as f64) {
                failures.push(format!("min ratio {minr} under the guaranteed floor"));
            }
            match cli.format {
                Format::Csv => emit(cli, sweep_to_csv(&rows))?,
                Format::Json => {
                    #[derive(Serialize)]
                    struct Body {
                        rows: Vec<analyzer::SweepRow>,
                        min_ratio: f64,
                    }
                    let config = config_echo(&[
                        ("m_max", m_max.to_string()),
                        ("instance", inst_desc(inst)),
                    ]);
                    let rep = Report::new("analyze", None, config, Body { rows, min_ratio: minr });
                    emit(cli, rep.to_json())?;
                }
            }
        }
        Command::Simulate { inst, m, trials, seed } => {
            let seed = require_seed(*seed)?;
            if *trials == 0 {
                return Err(Error::InvalidConfig("--trials must be >= 1".into()));
            }
            let profile = inst.load()?;
            let curve = curve_of(&profile)?;
            let revenues: Vec<f64> = (0..*trials)
                .into_par_iter()
                .map(|t| {
                    let mut r = derive_rng(seed, &format!("trial-{t}"));
                    use rand::Rng;
                    allocator::run(&curve, *m, r.gen()).revenue
                })
                .collect();
            let n = *trials as f64;
            let mean = revenues.iter().sum::<f64>() / n;
            let var = revenues.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
            let stderr = (var / n).sqrt();
            let exact = analyzer::expected_revenue(&curve, *m)?;
            let opt = opt_revenue(&curve, *m).revenue;
            if (mean - exact).abs() > 4.0 * stderr.max(1e-12) {
                failures.push(format!(
                    "sample mean {mean} deviates from exact value {exact} by more than 4 sigma"
                ));
            }
            #[derive(Serialize)]
            struct Body {
                m: usize,
                trials: usize,
                sample_mean: f64,
                stderr: f64,
                exact_alg: f64,
                opt: f64,
                ratio_exact: f64,
            }
            let config = config_echo(&[
                ("m", m.to_string()),
                ("trials", trials.to_string()),
                ("instance", inst_desc(inst)),
            ]);
            let rep = Report::new(
                "simulate",
                Some(seed),
                config,
                Body {
                    m: *m,
                    trials: *trials,
                    sample_mean: mean,
                    stderr,
                    exact_alg: exact,
                    opt,
                    ratio_exact: exact / opt,
                },
            );
            require_json(cli)?;
            emit(cli, rep.to_json())?;
        }
        Command::Mechanism { inst, m, gamma, epsilon, delta, trials, deviations, seed } => {
            let seed = require_seed(*seed)?;
            let gamma = match (gamma, epsilon) {
                (Some(g), None) => *g,
                (None, Some(e)) => e / 8.0,
                (None, None) => 0.0125,
                (Some(_), Some(_)) => {
                    return Err(Error::InvalidConfig(
                        "pass either --gamma or --epsilon, not both".into(),
                    ))
                }
            };
            let profile = inst.load()?;
            let stats = mechanism::revenue_experiment(&profile, *m, gamma, *delta, *trials, seed)?;
            let truth = mechanism::check_truthfulness(
                &profile,
                *m,
                gamma,
                *deviations,
                seed,
                Pacing::CrossGroup,
            )?;
            if !truth.violations.is_empty() {
                failures.push(format!(
                    "{} utility-improving misreports found",
                    truth.violations.len()
                ));
            }
            let sample = mechanism::run_mechanism(&profile, *m, gamma, seed)?;
            #[derive(Serialize)]
            struct Body {
                stats: mechanism::RevenueStats,
                partition_size_s: usize,
                partition_size_t: usize,
                x_final_s: usize,
                x_final_t: usize,
                revenue_sample: f64,
                ratio_mean: f64,
                deviations_checked: usize,
                truthfulness_violations: usize,
            }
            let ratio_mean = stats.mean_revenue / stats.opt;
            let config = config_echo(&[
                ("m", m.to_string()),
                ("gamma", gamma.to_string()),
                ("delta", delta.to_string()),
                ("trials", trials.to_string()),
                ("deviations", deviations.to_string()),
                ("instance", inst_desc(inst)),
            ]);
            let rep = Report::new(
                "mechanism",
                Some(seed),
                config,
                Body {
                    partition_size_s: sample.partition.group_s.len(),
                    partition_size_t: sample.partition.group_t.len(),
                    x_final_s: sample.x_final_s,
                    x_final_t: sample.x_final_t,
                    revenue_sample: sample.revenue,
                    ratio_mean,
                    deviations_checked: truth.deviations_checked,
                    truthfulness_violations: truth.violations.len(),
                    stats,
                },
            );
            require_json(cli)?;
            emit(cli, rep.to_json())?;
        }
        Command::Mixed { inst, m_max, p_one } => {
            if !(0.0..=1.0).contains(p_one) {
                return Err(Error::InvalidConfig("--p-one must lie in [0, 1]".into()));
            }
            let profile = inst.load()?;
            if inst.spike_eps.is_none() {
                eprintln!("note: the mixed strategy targets spike-shaped instances");
            }
            let curve = curve_of(&profile)?;
            let rows = analyzer::mixed_strategy_sweep(&curve, *m_max, *p_one)?;
            let minr = min_ratio(&rows);
            match cli.format {
                Format::Csv => emit(cli, sweep_to_csv(&rows))?,
                Format::Json => {
                    #[derive(Serialize)]
                    struct Body {
                        rows: Vec<analyzer::SweepRow>,
                        min_ratio: f64,
                        p_one: f64,
                    }
                    let config = config_echo(&[
                        ("m_max", m_max.to_string()),
                        ("p_one", p_one.to_string()),
                        ("instance", inst_desc(inst)),
                    ]);
                    let rep =
                        Report::new("mixed", None, config, Body { rows, min_ratio: minr, p_one: *p_one });
                    emit(cli, rep.to_json())?;
                }
            }
        }
        Command::Gen { kind, spike_eps, spike_count, peaks, bidders, max_bids_per_bidder, seed } => {
            let profile = match kind {
                GenKind::Spike => {
                    let eps = spike_eps.ok_or_else(|| {
                        Error::InvalidConfig("--spike-eps is required for spike generation".into())
                    })?;
                    instance::gen_spike(eps, *spike_count)?
                }
                GenKind::Multipeak => instance::gen_multipeak(*peaks, require_seed(*seed)?)?,
                GenKind::Random => instance::gen_random_profile(
                    *bidders,
                    *max_bids_per_bidder,
                    require_seed(*seed)?,
                )?,
            };
            let out = cli.out.clone().ok_or_else(|| {
                Error::InvalidConfig("--out is required for instance generation".into())
            })?;
            instance::save_instance(&profile, out)?;
        }
        Command::Truthcheck { inst, m, gamma, deviations, seed } => {
            let seed = require_seed(*seed)?;
            let profile = inst.load()?;
            let truth = mechanism::check_truthfulness(
                &profile,
                *m,
                *gamma,
                *deviations,
                seed,
                Pacing::CrossGroup,
            )?;
            if !truth.violations.is_empty() {
                failures.push(format!(
                    "{} utility-improving misreports found",
                    truth.violations.len()
                ));
            }
            #[derive(Serialize)]
            struct Body {
                deviations_checked: usize,
                violations: usize,
                details: Vec<String>,
            }
            let config = config_echo(&[
                ("m", m.to_string()),
                ("gamma", gamma.to_string()),
                ("deviations", deviations.to_string()),
                ("instance", inst_desc(inst)),
            ]);
            let rep = Report::new(
                "truthcheck",
                Some(seed),
                config,
                Body {
                    deviations_checked: truth.deviations_checked,
                    violations: truth.violations.len(),
                    details: truth
                        .violations
                        .iter()
                        .map(|v| {
                            format!(
                                "{} via {}: {} -> {}",
                                v.bidder, v.kind, v.utility_truthful, v.utility_deviating
                            )
                        })
                        .collect(),
                },
            );
            require_json(cli)?;
            emit(cli, rep.to_json())?;
        }
    }
    Ok(failures)
}

fn require_json(cli: &Cli) -> Result<(), Error> {
    if cli.format == Format::Csv {
        return Err(Error::InvalidConfig(
            "csv output is only available for sweep commands (analyze, mixed)".into(),
        ));
    }
    Ok(())
}

fn smallest_peak(curve: &RevenueCurve) -> usize {
    let cps = instance::find_critical_points(curve);
    (1..=cps.num_peaks()).map(|i| cps.b(i)).min().unwrap_or(1)
}

fn inst_desc(inst: &InstanceArgs) -> String {
    match (&inst.instance, inst.spike_eps) {
        (Some(p), _) => p.display().to_string(),
        (None, Some(e)) => format!("spike(eps={e}, count={})", inst.spike_count),
        _ => "<none>".into(),
    }
}

fn config_echo(pairs: &[(&str, String)]) -> BTreeMap<String, String> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}
