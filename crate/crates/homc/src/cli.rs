//! Batch command-line front end.
//!
//! Every subcommand reads a tensor file, dispatches to one library
//! operation, and prints a single JSON run report to stdout: the command and
//! its inputs, every parameter that influenced the result (defaulted or
//! explicit), the result payload, and convergence metadata. Diagnostics go
//! to stderr. Exit codes: 0 success, 1 invalid input, 2 numerical
//! non-convergence or singularity, 3 I/O failure.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::analysis::{
    classify_states, ever_reaching, mfpt_direct, mfpt_iterative, DEFAULT_CLASS_TOL,
    DEFAULT_MAX_ITER, DEFAULT_MAX_TERMS, DEFAULT_SERIES_TOL,
};
use crate::chain::{
    default_kmax, TransitionTensor, DEFAULT_STATIONARY_MAX_ITER, DEFAULT_STATIONARY_TOL,
    DEFAULT_STOCHASTIC_TOL,
};
use crate::error::{HomcError, Result};
use crate::io::{sha256_hex, write_tensor_file, TensorFile};
use crate::montecarlo::{
    default_horizon, estimate_ever_reach, estimate_kstep, estimate_mfpt, SimConfig,
    DEFAULT_TRAJECTORIES, RNG_FAMILY,
};
use crate::tensor::CubicalTensor;

/// Optional cap on internal parallelism; absent means the rayon default.
pub const THREADS_ENV: &str = "HOMC_THREADS";

#[derive(Parser, Debug)]
#[command(
    name = "homc",
    version,
    about = "Analytic and Monte Carlo toolkit for higher-order Markov chains",
    long_about = "Computes k-step transition tensors, limiting distributions, \
ever-reaching probabilities, state classification, and mean first passage \
times for homogeneous higher-order Markov chains given as dense transition \
tensors. Set HOMC_THREADS to cap internal parallelism."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check that a tensor file holds a valid stochastic transition tensor
    Validate {
        #[arg(short, long)]
        input: PathBuf,
        /// Tolerance for entry range and column-sum checks
        #[arg(long, default_value_t = DEFAULT_STOCHASTIC_TOL)]
        stochastic_tol: f64,
    },
    /// Compute the k-step transition tensor (k-th box power)
    Kstep {
        #[arg(short, long)]
        input: PathBuf,
        /// Number of steps
        #[arg(short)]
        k: usize,
        #[arg(long, default_value_t = DEFAULT_STOCHASTIC_TOL)]
        stochastic_tol: f64,
        /// Write the resulting tensor to this file
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Check regularity (some box power entrywise positive)
    Regular {
        #[arg(short, long)]
        input: PathBuf,
        /// Largest power to examine; defaults to min(n^m, 10000)
        #[arg(long)]
        kmax: Option<usize>,
        #[arg(long, default_value_t = DEFAULT_STOCHASTIC_TOL)]
        stochastic_tol: f64,
    },
    /// Check ergodicity (every entry positive in some box power)
    Ergodic {
        #[arg(short, long)]
        input: PathBuf,
        /// Largest power to examine; defaults to min(n^m, 10000)
        #[arg(long)]
        kmax: Option<usize>,
        #[arg(long, default_value_t = DEFAULT_STOCHASTIC_TOL)]
        stochastic_tol: f64,
    },
    /// Build the transition matrix of the reduced first-order chain
    Reduce {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(long, default_value_t = DEFAULT_STOCHASTIC_TOL)]
        stochastic_tol: f64,
        /// Write the matrix to this file
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Compute the limiting probability distribution
    Stationary {
        #[arg(short, long)]
        input: PathBuf,
        /// Residual tolerance on ||Qy - y||_1
        #[arg(long, default_value_t = DEFAULT_STATIONARY_TOL)]
        tol: f64,
        #[arg(long, default_value_t = DEFAULT_STATIONARY_MAX_ITER)]
        max_iter: usize,
        #[arg(long, default_value_t = DEFAULT_STOCHASTIC_TOL)]
        stochastic_tol: f64,
    },
    /// Sum the ever-reaching probability series
    Erp {
        #[arg(short, long)]
        input: PathBuf,
        /// Stop once the max-abs entry of the current term drops below this
        #[arg(long, default_value_t = DEFAULT_SERIES_TOL)]
        tol: f64,
        #[arg(long, default_value_t = DEFAULT_MAX_TERMS)]
        max_terms: usize,
        #[arg(long, default_value_t = DEFAULT_STOCHASTIC_TOL)]
        stochastic_tol: f64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Classify states as recurrent, transient, or fully transient
    Classify {
        #[arg(short, long)]
        input: PathBuf,
        /// Diagonal values below 1 - class_tol count as sub-unit
        #[arg(long, default_value_t = DEFAULT_CLASS_TOL)]
        class_tol: f64,
        /// Tolerance for the underlying ever-reaching series
        #[arg(long, default_value_t = DEFAULT_SERIES_TOL)]
        tol: f64,
        #[arg(long, default_value_t = DEFAULT_MAX_TERMS)]
        max_terms: usize,
        #[arg(long, default_value_t = DEFAULT_STOCHASTIC_TOL)]
        stochastic_tol: f64,
    },
    /// Compute the mean first passage time tensor
    Mfpt {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(long, value_enum)]
        method: MethodArg,
        /// Iteration tolerance (iterative method only)
        #[arg(long, default_value_t = DEFAULT_SERIES_TOL)]
        tol: f64,
        #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
        max_iter: usize,
        #[arg(long, default_value_t = DEFAULT_STOCHASTIC_TOL)]
        stochastic_tol: f64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Monte Carlo estimation of k-step, ever-reaching, or mean first
    /// passage quantities
    Simulate {
        #[arg(short, long)]
        input: PathBuf,
        /// Start context: comma-separated states, current first (e.g. "2,1")
        #[arg(long)]
        start: String,
        /// Target state
        #[arg(long)]
        target: usize,
        /// Which quantity to estimate
        #[arg(long, value_enum)]
        estimate: EstimateArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_TRAJECTORIES)]
        trajectories: usize,
        /// Maximum steps per trajectory; defaults to 1000 * dim
        #[arg(long)]
        horizon: Option<usize>,
        /// Step count (kstep estimates only)
        #[arg(short)]
        k: Option<usize>,
        #[arg(long, default_value_t = DEFAULT_STOCHASTIC_TOL)]
        stochastic_tol: f64,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum MethodArg {
    Direct,
    Iterative,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum EstimateArg {
    Kstep,
    Erp,
    Mfpt,
}

/// Parses and executes one command line; prints the run report to stdout and
/// diagnostics to stderr; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    configure_threads();
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(argv.iter().cloned()) {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            if matches!(err.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{err}");
                return 0;
            }
            eprint!("{err}");
            return 1;
        }
    };
    let echo: Vec<String> = argv
        .iter()
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    match execute(&cli.command, &echo) {
        Ok(report) => {
            println!("{}", serde_json::to_string_pretty(&report).expect("report is json"));
            0
        }
        Err(err) => {
            eprintln!("homc: {err}");
            exit_code(&err)
        }
    }
}

fn exit_code(err: &HomcError) -> i32 {
    match err {
        HomcError::NonConvergence { .. } | HomcError::SingularBlock { .. } => 2,
        HomcError::Io(_) => 3,
        _ => 1,
    }
}

fn configure_threads() {
    use std::sync::Once;
    static ONCE: Once = Once::new();
    ONCE.call_once(|| {
        if let Ok(v) = std::env::var(THREADS_ENV) {
            if let Ok(threads) = v.parse::<usize>() {
                if threads >= 1 {
                    // ignore failure: the global pool may already exist
                    let _ = rayon::ThreadPoolBuilder::new()
                        .num_threads(threads)
                        .build_global();
                }
            }
        }
    });
}

/// Loads the input and records its identity for the report.
fn load_input(path: &Path) -> Result<(CubicalTensor, Value)> {
    let bytes = std::fs::read(path)?;
    let tensor = crate::io::parse_tensor_bytes(&bytes)?;
    let info = json!({
        "path": path.display().to_string(),
        "sha256": sha256_hex(&bytes),
        "order": tensor.shape().order(),
        "dim": tensor.shape().dim(),
    });
    Ok((tensor, info))
}

fn tensor_value(t: &CubicalTensor) -> Value {
    serde_json::to_value(TensorFile::from_tensor(t)).expect("tensor serializes")
}

fn report(
    command: &str,
    argv: &[String],
    input: Value,
    parameters: Value,
    result: Value,
    convergence: Value,
    started: Instant,
) -> Value {
    json!({
        "command": command,
        "argv": argv,
        "input": input,
        "parameters": parameters,
        "result": result,
        "convergence": convergence,
        "wall_time_ms": started.elapsed().as_secs_f64() * 1e3,
    })
}

fn execute(command: &Command, argv: &[String]) -> Result<Value> {
    match command {
        Command::Validate {
            input,
            stochastic_tol,
        } => {
            let started = Instant::now();
            let (tensor, info) = load_input(input)?;
            let shape = tensor.shape();
            let p = TransitionTensor::validate(tensor, *stochastic_tol)?;
            Ok(report(
                "validate",
                argv,
                info,
                json!({ "stochastic_tol": stochastic_tol }),
                json!({
                    "stochastic": true,
                    "order": shape.order(),
                    "dim": shape.dim(),
                    "chain_order": shape.order() - 1,
                    "contexts": p.shape().trailing_count(),
                }),
                Value::Null,
                started,
            ))
        }
        Command::Kstep {
            input,
            k,
            stochastic_tol,
            output,
        } => {
            let started = Instant::now();
            let (tensor, info) = load_input(input)?;
            let p = TransitionTensor::validate(tensor, *stochastic_tol)?;
            let t = p.k_step(*k)?;
            if let Some(path) = output {
                write_tensor_file(path, &t)?;
            }
            Ok(report(
                "kstep",
                argv,
                info,
                json!({ "k": k, "stochastic_tol": stochastic_tol }),
                json!({ "tensor": tensor_value(&t) }),
                Value::Null,
                started,
            ))
        }
        Command::Regular {
            input,
            kmax,
            stochastic_tol,
        }
        | Command::Ergodic {
            input,
            kmax,
            stochastic_tol,
        } => {
            let regular = matches!(command, Command::Regular { .. });
            let started = Instant::now();
            let (tensor, info) = load_input(input)?;
            let p = TransitionTensor::validate(tensor, *stochastic_tol)?;
            let kmax = kmax.unwrap_or_else(|| default_kmax(p.shape()));
            let verdict = if regular {
                p.check_regular(kmax)
            } else {
                p.check_ergodic(kmax)
            };
            let status = match verdict.status {
                crate::chain::ReachStatus::Confirmed => "confirmed",
                crate::chain::ReachStatus::RefutedWithinHorizon => "refuted-within-horizon",
                crate::chain::ReachStatus::Undetermined => "undetermined",
            };
            Ok(report(
                if regular { "regular" } else { "ergodic" },
                argv,
                info,
                json!({ "kmax": kmax, "stochastic_tol": stochastic_tol }),
                json!({
                    "status": status,
                    "witness_k": verdict.witness_k,
                    "horizon": verdict.horizon,
                }),
                Value::Null,
                started,
            ))
        }
        Command::Reduce {
            input,
            stochastic_tol,
            output,
        } => {
            let started = Instant::now();
            let (tensor, info) = load_input(input)?;
            let p = TransitionTensor::validate(tensor, *stochastic_tol)?;
            let rcm = p.reduced_chain_matrix();
            let file = TensorFile::from_matrix(rcm.matrix());
            if let Some(path) = output {
                let mut text = serde_json::to_string_pretty(&file)
                    .map_err(|e| HomcError::Format(e.to_string()))?;
                text.push('\n');
                std::fs::write(path, text)?;
            }
            Ok(report(
                "reduce",
                argv,
                info,
                json!({ "stochastic_tol": stochastic_tol }),
                json!({
                    "size": rcm.size(),
                    "matrix": serde_json::to_value(&file).expect("matrix serializes"),
                }),
                Value::Null,
                started,
            ))
        }
        Command::Stationary {
            input,
            tol,
            max_iter,
            stochastic_tol,
        } => {
            let started = Instant::now();
            let (tensor, info) = load_input(input)?;
            let p = TransitionTensor::validate(tensor, *stochastic_tol)?;
            let st = p.stationary_distribution(*tol, *max_iter)?;
            Ok(report(
                "stationary",
                argv,
                info,
                json!({
                    "tol": tol,
                    "max_iter": max_iter,
                    "stochastic_tol": stochastic_tol,
                }),
                json!({ "pi": st.pi.probs(), "y": st.y.probs() }),
                json!({ "iterations": st.iterations, "residual": st.residual }),
                started,
            ))
        }
        Command::Erp {
            input,
            tol,
            max_terms,
            stochastic_tol,
            output,
        } => {
            let started = Instant::now();
            let (tensor, info) = load_input(input)?;
            let p = TransitionTensor::validate(tensor, *stochastic_tol)?;
            let er = ever_reaching(&p, *tol, *max_terms)?;
            if let Some(path) = output {
                write_tensor_file(path, &er.f)?;
            }
            Ok(report(
                "erp",
                argv,
                info,
                json!({
                    "tol": tol,
                    "max_terms": max_terms,
                    "stochastic_tol": stochastic_tol,
                }),
                json!({ "tensor": tensor_value(&er.f) }),
                json!({
                    "terms_used": er.terms_used,
                    "converged": er.converged,
                    "last_term_max": er.last_term_max,
                }),
                started,
            ))
        }
        Command::Classify {
            input,
            class_tol,
            tol,
            max_terms,
            stochastic_tol,
        } => {
            let started = Instant::now();
            let (tensor, info) = load_input(input)?;
            let p = TransitionTensor::validate(tensor, *stochastic_tol)?;
            let er = ever_reaching(&p, *tol, *max_terms)?;
            let rep = classify_states(&er, *class_tol);
            let labels: Vec<&str> = rep.labels.iter().map(|l| l.as_str()).collect();
            Ok(report(
                "classify",
                argv,
                info,
                json!({
                    "class_tol": class_tol,
                    "tol": tol,
                    "max_terms": max_terms,
                    "stochastic_tol": stochastic_tol,
                }),
                json!({
                    "labels": labels,
                    "diagonal_values": rep.diagonal_values,
                }),
                json!({
                    "terms_used": er.terms_used,
                    "converged": er.converged,
                    "last_term_max": er.last_term_max,
                }),
                started,
            ))
        }
        Command::Mfpt {
            input,
            method,
            tol,
            max_iter,
            stochastic_tol,
            output,
        } => {
            let started = Instant::now();
            let (tensor, info) = load_input(input)?;
            let p = TransitionTensor::validate(tensor, *stochastic_tol)?;
            let res = match method {
                MethodArg::Direct => mfpt_direct(&p)?,
                MethodArg::Iterative => mfpt_iterative(&p, None, *tol, *max_iter)?,
            };
            if let Some(path) = output {
                write_tensor_file(path, &res.mu)?;
            }
            Ok(report(
                "mfpt",
                argv,
                info,
                json!({
                    "method": res.method.as_str(),
                    "tol": tol,
                    "max_iter": max_iter,
                    "stochastic_tol": stochastic_tol,
                }),
                json!({ "tensor": tensor_value(&res.mu) }),
                json!({
                    "method": res.method.as_str(),
                    "iterations": res.iterations,
                    "residual_max": res.residual_max,
                }),
                started,
            ))
        }
        Command::Simulate {
            input,
            start,
            target,
            estimate,
            seed,
            trajectories,
            horizon,
            k,
            stochastic_tol,
        } => {
            let started = Instant::now();
            let (tensor, info) = load_input(input)?;
            let p = TransitionTensor::validate(tensor, *stochastic_tol)?;
            let context = parse_start(start)?;
            let horizon = horizon.unwrap_or_else(|| default_horizon(p.shape()));
            let cfg = SimConfig::new(*seed, *trajectories, horizon)?;
            let (kind, est) = match estimate {
                EstimateArg::Kstep => {
                    let k = k.ok_or_else(|| {
                        HomcError::InvalidArgument(
                            "kstep estimation requires -k".into(),
                        )
                    })?;
                    ("kstep", estimate_kstep(&p, &context, *target, k, &cfg)?)
                }
                EstimateArg::Erp => ("erp", estimate_ever_reach(&p, &context, *target, &cfg)?),
                EstimateArg::Mfpt => ("mfpt", estimate_mfpt(&p, &context, *target, &cfg)?),
            };
            Ok(report(
                "simulate",
                argv,
                info,
                json!({
                    "estimate": kind,
                    "start": context,
                    "target": target,
                    "k": k,
                    "seed": seed,
                    "trajectories": trajectories,
                    "horizon": horizon,
                    "stochastic_tol": stochastic_tol,
                    "rng": RNG_FAMILY,
                }),
                json!({
                    "value": est.value,
                    "standard_error": est.standard_error,
                    "samples": est.samples,
                    "censored": est.censored,
                }),
                Value::Null,
                started,
            ))
        }
    }
}

fn parse_start(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|part| {
            part.trim()
                .parse::<usize>()
                .map_err(|_| HomcError::InvalidArgument(format!("bad start component {part:?}")))
        })
        .collect()
}
