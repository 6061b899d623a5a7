//! On-Off signalling: zero with probability `1 − p_on`, amplitude
//! `√(P_a/p_on)` with probability `p_on`.

use serde::{Deserialize, Serialize};

use super::Harvester;
use crate::{Error, Result};

/// Input power (µW) above which constant-envelope signalling is optimal for
/// power delivery.
pub const PON_KNEE_UW: f64 = 317.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OnOffLaw {
    pub p_on: f64,
    /// √µW.
    pub amplitude: f64,
    pub p_a: f64,
}

impl OnOffLaw {
    pub fn new(p_a: f64, p_on: f64) -> Result<Self> {
        check(p_a, p_on)?;
        Ok(Self {
            p_on,
            amplitude: (p_a / p_on).sqrt(),
            p_a,
        })
    }

    /// Noiseless delivered power `p_on · f(amplitude²)`.
    pub fn delivered<H: Harvester + ?Sized>(&self, harvester: &H) -> f64 {
        self.p_on * harvester.power(self.amplitude * self.amplitude)
    }
}

fn check(p_a: f64, p_on: f64) -> Result<()> {
    if !(p_a > 0.0 && p_a.is_finite()) {
        return Err(Error::domain(format!("average power must be positive, got {p_a}")));
    }
    if !(p_on > 0.0 && p_on <= 1.0) {
        return Err(Error::domain(format!("p_on must lie in (0, 1], got {p_on}")));
    }
    Ok(())
}

/// Noiseless delivered power of On-Off signalling: `p_on · f(P_a/p_on)`.
pub fn onoff_delivered<H: Harvester + ?Sized>(p_a: f64, p_on: f64, harvester: &H) -> Result<f64> {
    check(p_a, p_on)?;
    Ok(p_on * harvester.power(p_a / p_on))
}

/// Grid search for the On probability maximizing delivered power over
/// `p_on ∈ {1/grid, 2/grid, …, 1}`; ties (within relative 1e-12, so a
/// saturated plateau counts as flat) go to the larger `p_on`.
pub fn optimal_pon<H: Harvester + ?Sized>(p_a: f64, harvester: &H, grid_size: usize) -> Result<f64> {
    if grid_size < 100 {
        return Err(Error::domain(format!("grid_size must be at least 100, got {grid_size}")));
    }
    let mut best = (f64::NEG_INFINITY, 1.0);
    for k in 1..=grid_size {
        let p = k as f64 / grid_size as f64;
        let d = onoff_delivered(p_a, p, harvester)?;
        if d >= best.0 - 1e-12 * best.0.abs() {
            best = (d, p);
        }
    }
    Ok(best.1)
}

/// Closed-form approximation `min{P_a/317, 1}`.
pub fn pon_approx(p_a: f64) -> Result<f64> {
    if !(p_a > 0.0) {
        return Err(Error::domain(format!("average power must be positive, got {p_a}")));
    }
    Ok((p_a / PON_KNEE_UW).min(1.0))
}
