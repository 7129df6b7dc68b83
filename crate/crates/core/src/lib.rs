//! Event-driven receding-horizon control for persistent monitoring.
//!
//! A fleet of second-order (or reduced first-order) agents patrols a network
//! of targets connected by curved paths. Each target accumulates uncertainty
//! while unattended and sheds it while an agent dwells on it. Agents plan one
//! step at a time: how long to keep sensing, how long to idle, where to go
//! next, and how fast to get there, trading sensing cost against control
//! energy over a receding horizon.
//!
//! The crate is organized bottom-up:
//!
//! * [`geometry`] — path segments (lines, arcs, sampled curves), arc length,
//!   curvature, and the heading rate an agent needs to track a segment.
//! * [`targets`] — piecewise-linear uncertainty dynamics and exact interval
//!   costs.
//! * [`sensing`] — closed-form and numerical dwell optimization for the three
//!   decision problems, plus the sensing value function over transit time.
//! * [`transit`] — energy-optimal transit profiles for the second-order agent
//!   and the first-order comparison methods, with velocity/acceleration
//!   bounded variants.
//! * [`controller`] — event classification and per-agent decision making.
//! * [`simulator`] — deterministic discrete-event simulation, metrics,
//!   parameter sweeps, and config generation.

pub mod controller;
pub mod geometry;
pub mod sensing;
pub mod simulator;
pub mod targets;
pub mod transit;

use thiserror::Error;

/// Errors produced by construction and solving routines.
#[derive(Debug, Error)]
pub enum Error {
    /// A geometric or numeric argument is outside its documented domain.
    #[error("domain error: {0}")]
    Domain(String),
    /// A segment, target, or config failed validation.
    #[error("invalid config: {0}")]
    Config(String),
    /// A solver was asked for a plan that cannot exist under the constraints.
    #[error("infeasible: {0}")]
    Infeasible(String),
    /// An I/O or serialization failure while reading or writing artifacts.
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    /// A JSON (de)serialization failure.
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
