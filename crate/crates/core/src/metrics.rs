// SPDX-License-Identifier: MIT OR Apache-2.0

//! Transfer metrics computed from a [`TransferLog`], plus fit-quality helpers.

use thiserror::Error;

use crate::host::{EventKind, TransferLog};
use crate::reader::OpResult;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("log has no events")]
    EmptyLog,
    #[error("rounds per second must be positive")]
    InvalidRate,
    #[error("series lengths differ or are empty")]
    BadSeries,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SessionMetrics {
    /// Success and total operation reports.
    pub n_s: u64,
    pub n_t: u64,
    /// Runtime in seconds.
    pub t: f64,
    pub psi_s: f64,
    pub psi_t: f64,
    pub eta: f64,
    /// Throughput in bytes per second.
    pub theta: f64,
    /// Total, resent and first-time sent messages.
    pub m_t: u64,
    pub m_r: u64,
    pub m_s: u64,
    /// Messages per second.
    pub v: f64,
    pub psi_sm: f64,
    pub psi_tm: f64,
    pub p_r: f64,
    /// Mean payload in words over data messages.
    pub mean_s_p: f64,
}

fn ratio(a: f64, b: f64) -> f64 {
    if b > 0.0 {
        a / b
    } else {
        0.0
    }
}

/// Metrics of one session that ran for `rounds` inventory rounds.
pub fn compute_metrics(log: &TransferLog, rounds: u64, rounds_per_sec: f64) -> Result<SessionMetrics, MetricsError> {
    if log.events().is_empty() {
        return Err(MetricsError::EmptyLog);
    }
    if !(rounds_per_sec > 0.0) {
        return Err(MetricsError::InvalidRate);
    }
    let mut n_s = 0u64;
    let mut n_t = 0u64;
    let mut m_s = 0u64;
    let mut m_r = 0u64;
    let mut payload = 0.0;
    let mut data_messages = 0u64;
    for e in log.events() {
        match e.kind {
            EventKind::Ack | EventKind::Nack => {
                n_t += 1;
                if e.result == Some(OpResult::Success) {
                    n_s += 1;
                }
            }
            EventKind::Sent | EventKind::Resend => {
                if e.kind == EventKind::Sent {
                    m_s += 1;
                } else {
                    m_r += 1;
                }
                if e.i > 0 {
                    payload += e.s_p;
                    data_messages += 1;
                }
            }
            _ => {}
        }
    }
    let t = rounds as f64 / rounds_per_sec;
    let m_t = m_s + m_r;
    let psi_s = ratio(n_s as f64, t);
    let psi_t = ratio(n_t as f64, t);
    let v = ratio(m_t as f64, t);
    let mean_s_p = ratio(payload, data_messages as f64);
    Ok(SessionMetrics {
        n_s,
        n_t,
        t,
        psi_s,
        psi_t,
        eta: ratio(psi_s, psi_t),
        theta: 2.0 * mean_s_p * v,
        m_t,
        m_r,
        m_s,
        v,
        psi_sm: ratio(n_s as f64, m_t as f64),
        psi_tm: ratio(n_t as f64, m_t as f64),
        p_r: ratio(m_r as f64, m_t as f64),
        mean_s_p,
    })
}

/// Throughput of a raw BlockWrite benchmark with `x` words per command.
pub fn blockwrite_benchmark_throughput(x: f64, psi_s: f64) -> f64 {
    2.0 * x * psi_s
}

/// Coefficient of determination of `modeled` against `observed`.
pub fn r_squared(observed: &[f64], modeled: &[f64]) -> Result<f64, MetricsError> {
    if observed.is_empty() || observed.len() != modeled.len() {
        return Err(MetricsError::BadSeries);
    }
    let n = observed.len() as f64;
    let mean = observed.iter().sum::<f64>() / n;
    let ss_tot: f64 = observed.iter().map(|y| (y - mean).powi(2)).sum();
    let ss_res: f64 = observed.iter().zip(modeled).map(|(y, f)| (y - f).powi(2)).sum();
    if ss_tot == 0.0 {
        return Ok(if ss_res == 0.0 { 1.0 } else { f64::NEG_INFINITY });
    }
    Ok(1.0 - ss_res / ss_tot)
}

/// Mean and population variance of a set of R² values.
pub fn r_squared_summary(values: &[f64]) -> Result<(f64, f64), MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::BadSeries);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok((mean, var))
}
