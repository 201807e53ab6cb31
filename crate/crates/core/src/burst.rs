//! Poisson burst detection over per-window organic search counts.
//!
//! A window is a burst when its count is improbable under a Poisson rate
//! estimated from the trailing history. Improbability is measured as
//! surprise, `-ln P(X >= observed)`, in nats.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BurstError {
    #[error("no history")]
    NoHistory,
    #[error("invalid rate {0}")]
    InvalidRate(f64),
    #[error("invalid burst parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BurstConfig {
    /// Trailing windows used to estimate the rate.
    pub history_len: usize,
    /// Minimum surprise (nats) for a window to count as a burst.
    pub threshold: f64,
    pub rate_floor: f64,
}

impl Default for BurstConfig {
    fn default() -> Self {
        Self {
            history_len: 24,
            threshold: 9.0,
            rate_floor: 0.5,
        }
    }
}

impl BurstConfig {
    pub fn validate(&self) -> Result<(), BurstError> {
        if self.history_len == 0 {
            return Err(BurstError::InvalidParameter("history_len must be >= 1".into()));
        }
        if !(self.threshold.is_finite() && self.threshold > 0.0) {
            return Err(BurstError::InvalidParameter(format!(
                "threshold {} must be positive",
                self.threshold
            )));
        }
        if !(self.rate_floor.is_finite() && self.rate_floor > 0.0) {
            return Err(BurstError::InvalidParameter(format!(
                "rate_floor {} must be positive",
                self.rate_floor
            )));
        }
        Ok(())
    }

    /// Tail probability a single null window must fall under to fire.
    pub fn tail_probability(&self) -> f64 {
        (-self.threshold).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryVolumeSeries {
    pub query: String,
    pub counts: Vec<u64>,
    pub window_length: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BurstEvent {
    pub query: String,
    pub window_index: usize,
    pub observed: u64,
    pub expected_rate: f64,
    pub surprise: f64,
}

/// `max(floor, mean(history))`.
pub fn estimate_rate(history: &[u64], floor: f64) -> Result<f64, BurstError> {
    if history.is_empty() {
        return Err(BurstError::NoHistory);
    }
    if !(floor.is_finite() && floor > 0.0) {
        return Err(BurstError::InvalidParameter(format!("rate floor {floor}")));
    }
    let mean = history.iter().map(|&c| c as f64).sum::<f64>() / history.len() as f64;
    Ok(mean.max(floor))
}

const FACTORIAL_TABLE: usize = 256;

fn ln_factorial(n: u64) -> f64 {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    let table = TABLE.get_or_init(|| {
        let mut t = Vec::with_capacity(FACTORIAL_TABLE);
        let mut acc = 0.0f64;
        t.push(0.0);
        for k in 1..FACTORIAL_TABLE {
            acc += (k as f64).ln();
            t.push(acc);
        }
        t
    });
    if (n as usize) < FACTORIAL_TABLE {
        return table[n as usize];
    }
    // Stirling series; truncation error below 1e-20 for n >= 256
    let x = n as f64;
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    x * x.ln() - x
        + 0.5 * (2.0 * std::f64::consts::PI * x).ln()
        + inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 / 1260.0))
}

fn ln_pmf(k: u64, rate: f64) -> f64 {
    k as f64 * rate.ln() - rate - ln_factorial(k)
}

/// `-ln P(X >= observed)` for `X ~ Poisson(rate)`.
///
/// Below the mean the lower CDF is summed in log space and the tail taken
/// as `1 - CDF` (the CDF stays near or below one half there, so nothing
/// cancels). Above the mean the upper tail is summed directly from its
/// leading term, which keeps the result finite when the tail underflows f64.
pub fn poisson_surprise(observed: u64, rate: f64) -> Result<f64, BurstError> {
    if !(rate.is_finite() && rate > 0.0) {
        return Err(BurstError::InvalidRate(rate));
    }
    if observed == 0 {
        return Ok(0.0);
    }

    if observed as f64 <= rate {
        let logs: Vec<f64> = (0..observed).map(|k| ln_pmf(k, rate)).collect();
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let cdf = (max + logs.iter().map(|l| (l - max).exp()).sum::<f64>().ln()).exp();
        return Ok(-(-cdf.min(1.0)).ln_1p());
    }

    // tail = pmf(n) * (1 + r_{n+1} + r_{n+1} r_{n+2} + ...), r_k = rate / k < 1
    let mut relative = 1.0f64;
    let mut sum = 1.0f64;
    let mut k = observed;
    loop {
        k += 1;
        relative *= rate / k as f64;
        sum += relative;
        if relative < 1e-18 * sum {
            break;
        }
    }
    Ok((-(ln_pmf(observed, rate) + sum.ln())).max(0.0))
}

/// Surprise of `observed` given the trailing `history`.
pub fn window_surprise(history: &[u64], observed: u64, cfg: &BurstConfig) -> Result<(f64, f64), BurstError> {
    let rate = estimate_rate(history, cfg.rate_floor)?;
    Ok((rate, poisson_surprise(observed, rate)?))
}

/// Emits an event for every window `i >= history_len` whose count is a
/// burst relative to `counts[i - history_len..i]`.
pub fn detect_bursts(series: &QueryVolumeSeries, cfg: &BurstConfig) -> Result<Vec<BurstEvent>, BurstError> {
    cfg.validate()?;
    let h = cfg.history_len;
    let mut events = Vec::new();
    if series.counts.len() <= h {
        return Ok(events);
    }
    for i in h..series.counts.len() {
        let observed = series.counts[i];
        let (rate, surprise) = window_surprise(&series.counts[i - h..i], observed, cfg)?;
        if surprise >= cfg.threshold {
            events.push(BurstEvent {
                query: series.query.clone(),
                window_index: i,
                observed,
                expected_rate: rate,
                surprise,
            });
        }
    }
    Ok(events)
}
