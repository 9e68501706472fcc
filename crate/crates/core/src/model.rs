// SPDX-License-Identifier: MIT OR Apache-2.0

//! Fitted BlockWrite performance model.
//!
//! Per distance: total operations per second `psi_t(x) = a2 / x^b2 + c2`,
//! efficiency `eta(x) = -a_eta * x + b_eta`, success operations
//! `psi_s = eta * psi_t` and throughput `theta = 2 x psi_s`, where `x` is
//! the BlockWrite word count.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("no model parameters for {0} cm")]
    UnknownDistance(f64),
    #[error("word count {0} outside 1..=32")]
    WordCountOutOfRange(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub d_cm: f64,
    pub a_eta: f64,
    pub b_eta: f64,
    pub a2: f64,
    pub b2: f64,
    pub c2: f64,
    /// Fit quality of the throughput curve.
    pub r2_theta: f64,
}

const fn row(d_cm: f64, a_eta: f64, b_eta: f64, a2: f64, b2: f64, c2: f64, r2_theta: f64) -> ModelParams {
    ModelParams {
        d_cm,
        a_eta,
        b_eta,
        a2,
        b2,
        c2,
        r2_theta,
    }
}

/// Fitted parameters for the measured distances.
pub const MODEL_TABLE: [ModelParams; 5] = [
    row(20.0, 0.0138, 0.9448, 170.3735, 0.4184, -22.1623, 0.9176),
    row(30.0, 0.0163, 0.9401, 166.3176, 0.4523, -16.6735, 0.8627),
    row(40.0, 0.0168, 0.9270, 164.6218, 0.4341, -18.7205, 0.7716),
    row(50.0, 0.0204, 0.9056, 158.3378, 0.4909, -10.9255, 0.4504),
    row(60.0, 0.0503, 0.8710, 122.2697, 0.7347, 11.0553, 0.8553),
];

pub fn params_for(d_cm: f64) -> Result<&'static ModelParams, ModelError> {
    MODEL_TABLE
        .iter()
        .find(|p| (p.d_cm - d_cm).abs() < 1e-9)
        .ok_or(ModelError::UnknownDistance(d_cm))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelValues {
    pub psi_t: f64,
    pub eta: f64,
    pub psi_s: f64,
    pub theta: f64,
}

pub fn model_curves(p: &ModelParams, x: f64) -> Result<ModelValues, ModelError> {
    if !(1.0..=32.0).contains(&x) {
        return Err(ModelError::WordCountOutOfRange(x));
    }
    let psi_t = p.a2 / x.powf(p.b2) + p.c2;
    let eta = -p.a_eta * x + p.b_eta;
    let psi_s = eta * psi_t;
    Ok(ModelValues {
        psi_t,
        eta,
        psi_s,
        theta: 2.0 * x * psi_s,
    })
}
