//! Seeded trajectory simulation, used as an independent statistical oracle
//! for the analytic quantities.
//!
//! Reproducibility: every trajectory draws from its own ChaCha8 stream,
//! derived from the configured seed and the trajectory index alone, and
//! per-trajectory outcomes are reduced in index order as integer counts.
//! Results are therefore bit-identical across runs and across thread counts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::chain::TransitionTensor;
use crate::error::{HomcError, Result};
use crate::tensor::Shape;

/// Generator family recorded in run metadata.
pub const RNG_FAMILY: &str = "chacha8 with per-trajectory streams";

pub const DEFAULT_TRAJECTORIES: usize = 10_000;

/// Default horizon: 1000 steps per state.
pub fn default_horizon(shape: Shape) -> usize {
    1000 * shape.dim()
}

/// Simulation parameters.
#[derive(Debug, Clone, Copy)]
pub struct SimConfig {
    pub seed: u64,
    pub trajectories: usize,
    /// Maximum steps per trajectory.
    pub horizon: usize,
}

impl SimConfig {
    pub fn new(seed: u64, trajectories: usize, horizon: usize) -> Result<Self> {
        if trajectories == 0 || horizon == 0 {
            return Err(HomcError::InvalidArgument(
                "trajectories and horizon must both be at least 1".into(),
            ));
        }
        Ok(SimConfig {
            seed,
            trajectories,
            horizon,
        })
    }
}

/// A Monte Carlo estimate with its uncertainty and censoring bookkeeping.
#[derive(Debug, Clone, Copy)]
pub struct Estimate {
    pub value: f64,
    /// Sample standard deviation over the effective samples divided by
    /// sqrt(effective samples); binomial for proportion estimates.
    pub standard_error: f64,
    /// Trajectories simulated.
    pub samples: usize,
    /// Trajectories that hit the horizon without the event (first-passage
    /// estimators only).
    pub censored: usize,
}

/// One transition: inverse-CDF sampling of the next state from the column
/// `p[., context]`. `context` holds the current state first, then past
/// states, all 1-based. `u` must lie in [0, 1).
pub fn step(p: &TransitionTensor, context: &[usize], u: f64) -> Result<usize> {
    let offset = context_offset(p.shape(), context)?;
    Ok(step_at(p, offset, u))
}

/// Forward linear offset of a context tuple `(i2, ..., im)`.
fn context_offset(shape: Shape, context: &[usize]) -> Result<usize> {
    let n = shape.dim();
    if context.len() != shape.order() - 1 {
        return Err(HomcError::InvalidIndex(format!(
            "context length {} does not match order-{} chain (need {})",
            context.len(),
            shape.order(),
            shape.order() - 1
        )));
    }
    let mut offset = 0usize;
    let mut stride = 1usize;
    for (pos, &c) in context.iter().enumerate() {
        if c < 1 || c > n {
            return Err(HomcError::InvalidIndex(format!(
                "context component {} at position {} outside 1..={}",
                c,
                pos + 1,
                n
            )));
        }
        offset += (c - 1) * stride;
        stride *= n;
    }
    Ok(offset)
}

/// Inverse-CDF draw given a precomputed context offset. Returns the smallest
/// 1-based state whose cumulative column probability exceeds `u`; if rounding
/// leaves the total fractionally below `u`, falls back to the last state with
/// positive probability.
fn step_at(p: &TransitionTensor, context_offset: usize, u: f64) -> usize {
    let n = p.shape().dim();
    let col = &p.tensor().values()[context_offset * n..(context_offset + 1) * n];
    let mut acc = 0.0;
    let mut last_positive = 0usize;
    for (i, &pi) in col.iter().enumerate() {
        if pi > 0.0 {
            last_positive = i;
        }
        acc += pi;
        if u < acc {
            return i + 1;
        }
    }
    last_positive + 1
}

/// Slides the context window one step: drop the oldest state, shift, and
/// prepend the new state, all in offset arithmetic.
fn advance(shape: Shape, offset: usize, next_state: usize) -> usize {
    (next_state - 1) + (offset % shape.context_count()) * shape.dim()
}

/// Per-trajectory RNG stream.
fn trajectory_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn validate_target(shape: Shape, target: usize) -> Result<()> {
    if target < 1 || target > shape.dim() {
        return Err(HomcError::InvalidIndex(format!(
            "target state {} outside 1..={}",
            target,
            shape.dim()
        )));
    }
    Ok(())
}

/// Estimates the k-step transition probability from `start` to `target` as
/// the fraction of trajectories whose state at step `k` equals `target`.
pub fn estimate_kstep(
    p: &TransitionTensor,
    start: &[usize],
    target: usize,
    k: usize,
    cfg: &SimConfig,
) -> Result<Estimate> {
    let shape = p.shape();
    validate_target(shape, target)?;
    if k == 0 {
        return Err(HomcError::InvalidArgument("k must be at least 1".into()));
    }
    if k > cfg.horizon {
        return Err(HomcError::InvalidArgument(format!(
            "k = {k} exceeds horizon {}",
            cfg.horizon
        )));
    }
    let start_offset = context_offset(shape, start)?;
    let outcomes: Vec<bool> = (0..cfg.trajectories)
        .into_par_iter()
        .map(|traj| {
            let mut rng = trajectory_rng(cfg.seed, traj);
            let mut offset = start_offset;
            let mut state = 0usize;
            for _ in 0..k {
                state = step_at(p, offset, rng.random::<f64>());
                offset = advance(shape, offset, state);
            }
            state == target
        })
        .collect();
    let hits = outcomes.iter().filter(|&&h| h).count();
    Ok(proportion_estimate(hits, cfg.trajectories, 0))
}

/// First-passage outcome of a single trajectory: the step (>= 1) at which
/// `target` was first visited, if within the horizon.
fn first_passage(
    p: &TransitionTensor,
    start_offset: usize,
    target: usize,
    horizon: usize,
    rng: &mut ChaCha8Rng,
) -> Option<usize> {
    let shape = p.shape();
    let mut offset = start_offset;
    for step_index in 1..=horizon {
        let state = step_at(p, offset, rng.random::<f64>());
        if state == target {
            return Some(step_index);
        }
        offset = advance(shape, offset, state);
    }
    None
}

/// Estimates the ever-reaching probability from `start` to `target` as the
/// fraction of trajectories that visit `target` within the horizon. Visits
/// only count from step 1 onward, so a start context already sitting at the
/// target does not short-circuit. Censored trajectories stay in the
/// denominator: the estimate is a lower bound whose bias the horizon
/// controls.
pub fn estimate_ever_reach(
    p: &TransitionTensor,
    start: &[usize],
    target: usize,
    cfg: &SimConfig,
) -> Result<Estimate> {
    let shape = p.shape();
    validate_target(shape, target)?;
    let start_offset = context_offset(shape, start)?;
    let outcomes: Vec<Option<usize>> = (0..cfg.trajectories)
        .into_par_iter()
        .map(|traj| {
            let mut rng = trajectory_rng(cfg.seed, traj);
            first_passage(p, start_offset, target, cfg.horizon, &mut rng)
        })
        .collect();
    let hits = outcomes.iter().filter(|o| o.is_some()).count();
    let censored = cfg.trajectories - hits;
    Ok(proportion_estimate(hits, cfg.trajectories, censored))
}

/// Estimates the mean first passage time from `start` to `target` as the
/// sample mean over uncensored trajectories; censored trajectories are
/// excluded from the mean and reported.
pub fn estimate_mfpt(
    p: &TransitionTensor,
    start: &[usize],
    target: usize,
    cfg: &SimConfig,
) -> Result<Estimate> {
    let shape = p.shape();
    validate_target(shape, target)?;
    let start_offset = context_offset(shape, start)?;
    let outcomes: Vec<Option<usize>> = (0..cfg.trajectories)
        .into_par_iter()
        .map(|traj| {
            let mut rng = trajectory_rng(cfg.seed, traj);
            first_passage(p, start_offset, target, cfg.horizon, &mut rng)
        })
        .collect();
    // integer accumulation in trajectory order: exact, order-independent
    let mut count = 0u64;
    let mut sum = 0u128;
    let mut sum_sq = 0u128;
    for passage in outcomes.iter().flatten() {
        let s = *passage as u128;
        count += 1;
        sum += s;
        sum_sq += s * s;
    }
    let censored = cfg.trajectories - count as usize;
    if count == 0 {
        return Ok(Estimate {
            value: f64::NAN,
            standard_error: f64::NAN,
            samples: cfg.trajectories,
            censored,
        });
    }
    let mean = sum as f64 / count as f64;
    let standard_error = if count > 1 {
        let var = (sum_sq as f64 - count as f64 * mean * mean) / (count as f64 - 1.0);
        (var.max(0.0) / count as f64).sqrt()
    } else {
        0.0
    };
    Ok(Estimate {
        value: mean,
        standard_error,
        samples: cfg.trajectories,
        censored,
    })
}

fn proportion_estimate(hits: usize, samples: usize, censored: usize) -> Estimate {
    let value = hits as f64 / samples as f64;
    let standard_error = (value * (1.0 - value) / samples as f64).sqrt();
    Estimate {
        value,
        standard_error,
        samples,
        censored,
    }
}
