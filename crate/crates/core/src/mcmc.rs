//! Random-walk Metropolis–Hastings with burn-in scale adaptation.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{RecastError, Result};
use crate::posterior::LogPosterior;
use crate::rng::Rng;
use crate::stats::std_normal_sample;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MhConfig {
    pub total_iters: usize,
    pub burn_in: usize,
    pub keep_last: usize,
    pub n_post: usize,
    /// Starting state in sampling coordinates (δ, log γ, log σ²). Binary
    /// chains use the first two entries.
    pub init: Vec<f64>,
    pub initial_sd: f64,
    pub target_accept: f64,
    pub adapt_interval: usize,
}

impl Default for MhConfig {
    fn default() -> Self {
        Self {
            total_iters: 100_000,
            burn_in: 20_000,
            keep_last: 50_000,
            n_post: 300,
            init: vec![1.0, 0.0, 0.0],
            initial_sd: 0.1,
            target_accept: 0.30,
            adapt_interval: 100,
        }
    }
}

impl MhConfig {
    /// Shortened schedule for quick runs: 20k iterations, 5k burn-in.
    pub fn desk() -> Self {
        Self {
            total_iters: 20_000,
            burn_in: 5_000,
            keep_last: 15_000,
            n_post: 100,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.keep_last == 0 || self.n_post == 0 {
            return Err(RecastError::Config("keep_last and n_post must be positive".into()));
        }
        if self.burn_in + self.keep_last > self.total_iters {
            return Err(RecastError::Config(format!(
                "burn_in ({}) + keep_last ({}) exceeds total_iters ({})",
                self.burn_in, self.keep_last, self.total_iters
            )));
        }
        if self.n_post > self.keep_last {
            return Err(RecastError::Config(format!(
                "n_post ({}) exceeds keep_last ({})",
                self.n_post, self.keep_last
            )));
        }
        if self.adapt_interval == 0 {
            return Err(RecastError::Config("adapt_interval must be positive".into()));
        }
        if !(self.initial_sd > 0.0) || !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(RecastError::Config("initial_sd must be positive and target_accept in (0, 1)".into()));
        }
        if self.init.iter().any(|v| !v.is_finite()) {
            return Err(RecastError::Config("init must be finite".into()));
        }
        Ok(())
    }
}

/// One log-target evaluation and the numerical fallbacks it needed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetEval {
    pub log_density: f64,
    pub floor_events: u64,
}

impl From<f64> for TargetEval {
    fn from(log_density: f64) -> Self {
        Self {
            log_density,
            floor_events: 0,
        }
    }
}

impl From<LogPosterior> for TargetEval {
    fn from(lp: LogPosterior) -> Self {
        Self {
            log_density: lp.value,
            floor_events: lp.floor_events + lp.budget_events,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub dim: usize,
    /// Retained states, row-major `keep_last × dim`.
    pub samples: Vec<f64>,
    pub log_target: Vec<f64>,
    /// 1-based iteration number of the first retained state.
    pub first_iter: usize,
    /// Acceptance rate over the post-burn-in iterations.
    pub accept_rate: f64,
    pub proposal_sds: Vec<f64>,
    pub floor_events: u64,
}

impl Chain {
    pub fn len(&self) -> usize {
        self.log_target.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_target.is_empty()
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.samples[i * self.dim..(i + 1) * self.dim]
    }

    /// Fewer than 1% of post-burn-in proposals accepted.
    pub fn stuck(&self) -> bool {
        self.accept_rate < 0.01
    }

    /// Mean of one coordinate over the retained states.
    pub fn mean(&self, coord: usize) -> f64 {
        (0..self.len()).map(|i| self.state(i)[coord]).sum::<f64>() / self.len() as f64
    }
}

fn evaluate<F, T>(target: &mut F, x: &[f64]) -> Result<TargetEval>
where
    F: FnMut(&[f64]) -> Result<T>,
    T: Into<TargetEval>,
{
    target(x).map(Into::into)
}

/// Runs `cfg.total_iters` random-walk steps from `init` with independent
/// Gaussian proposals per coordinate. Every `adapt_interval` burn-in
/// iterations each proposal sd is multiplied by `exp(â − target_accept)`,
/// where `â` is that window's acceptance rate; afterwards the scales are
/// fixed. The final `keep_last` states are returned.
pub fn run_rwmh<F, T>(mut target: F, init: &[f64], cfg: &MhConfig, rng: &mut Rng) -> Result<Chain>
where
    F: FnMut(&[f64]) -> Result<T>,
    T: Into<TargetEval>,
{
    cfg.validate()?;
    let dim = init.len();
    if dim == 0 {
        return Err(RecastError::Config("empty initial state".into()));
    }
    let mut x = init.to_vec();
    let first = evaluate(&mut target, &x)?;
    if !first.log_density.is_finite() {
        return Err(RecastError::NonFiniteInit);
    }
    let mut lx = first.log_density;
    let mut floor_events = first.floor_events;

    let mut sds = vec![cfg.initial_sd; dim];
    let mut window_accepts = 0usize;
    let mut post_accepts = 0usize;
    let first_kept = cfg.total_iters - cfg.keep_last + 1;
    let mut samples = Vec::with_capacity(cfg.keep_last * dim);
    let mut log_target = Vec::with_capacity(cfg.keep_last);
    let mut proposal = vec![0.0; dim];

    for iter in 1..=cfg.total_iters {
        for j in 0..dim {
            proposal[j] = x[j] + sds[j] * std_normal_sample(rng);
        }
        let e = evaluate(&mut target, &proposal)?;
        floor_events += e.floor_events;
        let ly = e.log_density;
        // NaN or -inf proposals are rejected; +inf is treated as NaN.
        let accept = ly.is_finite() && {
            let log_u = rng.uniform_open01().ln();
            log_u < ly - lx
        };
        if accept {
            x.copy_from_slice(&proposal);
            lx = ly;
        }

        if iter <= cfg.burn_in {
            window_accepts += usize::from(accept);
            if iter % cfg.adapt_interval == 0 {
                let rate = window_accepts as f64 / cfg.adapt_interval as f64;
                let factor = (rate - cfg.target_accept).exp();
                for s in sds.iter_mut() {
                    *s *= factor;
                }
                window_accepts = 0;
            }
        } else {
            post_accepts += usize::from(accept);
        }

        if iter >= first_kept {
            samples.extend_from_slice(&x);
            log_target.push(lx);
        }
    }

    let post = cfg.total_iters - cfg.burn_in;
    let accept_rate = if post == 0 { 0.0 } else { post_accepts as f64 / post as f64 };
    if accept_rate < 0.01 {
        log::warn!("random-walk chain accepted {:.2}% of post-burn-in proposals", 100.0 * accept_rate);
    }
    Ok(Chain {
        dim,
        samples,
        log_target,
        first_iter: first_kept,
        accept_rate,
        proposal_sds: sds,
        floor_events,
    })
}

/// 0-based positions `i·⌊len/n_post⌋ − 1` for `i = 1..=n_post`.
pub fn thin_indices(len: usize, n_post: usize) -> Result<Vec<usize>> {
    if n_post == 0 || n_post > len {
        return Err(RecastError::Config(format!(
            "cannot thin {len} retained states to {n_post}"
        )));
    }
    let stride = len / n_post;
    Ok((1..=n_post).map(|i| i * stride - 1).collect())
}

/// Equally spaced states from the retained chain: with stride
/// `k = ⌊keep_last/n_post⌋`, the states at 1-based positions `k, 2k, …, n_post·k`.
pub fn thin_chain(chain: &Chain, n_post: usize) -> Result<Vec<Vec<f64>>> {
    Ok(thin_indices(chain.len(), n_post)?
        .into_iter()
        .map(|i| chain.state(i).to_vec())
        .collect())
}

/// Writes the retained chain as CSV with header
/// `iteration,delta,gamma,sigma,log_target`. γ and σ are on the natural
/// scale; `sigma` is empty for two-dimensional (binary) chains.
pub fn write_chain_csv(chain: &Chain, path: &Path) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "iteration,delta,gamma,sigma,log_target")?;
    for i in 0..chain.len() {
        let s = chain.state(i);
        let sigma = if chain.dim >= 3 { format!("{}", (0.5 * s[2]).exp()) } else { String::new() };
        writeln!(
            w,
            "{},{},{},{},{}",
            chain.first_iter + i,
            s[0],
            s[1].exp(),
            sigma,
            chain.log_target[i]
        )?;
    }
    w.flush()?;
    Ok(())
}
