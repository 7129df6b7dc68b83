//! Target uncertainty dynamics: piecewise-linear growth and removal with
//! saturation at zero, exact event-time prediction, and exact per-interval
//! sensing-cost integrals.
//!
//! While no agent dwells on a target its uncertainty grows at rate `A`; while
//! an agent dwells it shrinks at `B − A` until it saturates at zero. Between
//! occupancy changes and zero crossings the state is linear in time, so
//! everything here is closed form — there is no integration step.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Growth/removal rates of one target. `0 < a < b`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetParams {
    /// Uncertainty growth rate while unattended.
    pub a: f64,
    /// Sensing removal rate while attended (net shrink rate is `b − a`).
    pub b: f64,
}

impl TargetParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.b > self.a) {
            return Err(Error::Config(format!(
                "target rates must satisfy 0 < A < B, got A={}, B={}",
                self.a, self.b
            )));
        }
        Ok(())
    }
}

/// Uncertainty state of one target at its last event time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetState {
    /// Current uncertainty, `R ≥ 0`.
    pub r: f64,
    /// Current time derivative of `R`.
    pub slope: f64,
    /// Whether an agent is dwelling on the target (at most one ever is).
    pub occupied: bool,
    /// Simulation time at which `r` and `slope` were last updated.
    pub last_event_time: f64,
}

impl TargetState {
    /// Initial state at t = 0 with uncertainty `r0` and no agent present.
    pub fn new(r0: f64, params: &TargetParams) -> TargetState {
        TargetState {
            r: r0,
            slope: slope_for(params, r0, false),
            occupied: false,
            last_event_time: 0.0,
        }
    }
}

/// Current slope of `R`: `A` while unattended, `−(B − A)` while attended with
/// uncertainty left, `0` once saturated at zero under an agent.
pub fn slope_for(params: &TargetParams, r: f64, occupied: bool) -> f64 {
    if occupied {
        if r > 0.0 {
            -(params.b - params.a)
        } else {
            0.0
        }
    } else {
        params.a
    }
}

/// Advances the state by `dt`, clamping at zero if the uncertainty empties
/// mid-interval. The caller must not straddle an occupancy change.
pub fn advance(state: &TargetState, params: &TargetParams, dt: f64) -> Result<TargetState> {
    if dt < 0.0 || dt.is_nan() {
        return Err(Error::Domain(format!("advance needs dt ≥ 0, got {dt}")));
    }
    let mut next = *state;
    next.last_event_time = state.last_event_time + dt;
    if state.occupied {
        let r = state.r - (params.b - params.a) * dt;
        if r <= 0.0 {
            next.r = 0.0;
            next.slope = 0.0;
        } else {
            next.r = r;
            next.slope = -(params.b - params.a);
        }
    } else {
        next.r = state.r + params.a * dt;
        next.slope = params.a;
    }
    Ok(next)
}

/// Time until the uncertainty saturates at zero: `R/(B − A)` while attended,
/// `0` if already empty, `None` while unattended (growth never empties).
pub fn time_to_empty(state: &TargetState, params: &TargetParams) -> Option<f64> {
    if !state.occupied {
        return None;
    }
    if state.r <= 0.0 {
        Some(0.0)
    } else {
        Some(state.r / (params.b - params.a))
    }
}

/// Exact integral of `R(t)` over an event-free interval of length `dt`
/// starting from uncertainty `r0` with constant slope: `(dt/2)(2·r0 + slope·dt)`.
pub fn interval_cost(r0: f64, slope: f64, dt: f64) -> f64 {
    (dt / 2.0) * (2.0 * r0 + slope * dt)
}

/// Advances by `dt` and returns the exact accumulated ∫R dt, splitting
/// internally at a zero crossing so the integral stays exact even if the
/// caller's interval straddles the clamp.
pub fn advance_with_cost(
    state: &TargetState,
    params: &TargetParams,
    dt: f64,
) -> Result<(TargetState, f64)> {
    if dt < 0.0 || dt.is_nan() {
        return Err(Error::Domain(format!("advance needs dt ≥ 0, got {dt}")));
    }
    let cost = if state.occupied && state.r > 0.0 {
        let tte = state.r / (params.b - params.a);
        if tte < dt {
            interval_cost(state.r, -(params.b - params.a), tte)
        } else {
            interval_cost(state.r, -(params.b - params.a), dt)
        }
    } else {
        interval_cost(state.r, state.slope, dt)
    };
    Ok((advance(state, params, dt)?, cost))
}
