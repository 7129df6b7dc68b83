//! Dwell-time optimization at the current and next target, and the optimal
//! sensing value J*_sH as a function of the transit time ρ.
//!
//! Three decision problems share one objective: the time-averaged total
//! neighborhood uncertainty over the planning window
//! `[t_s, t_s + τ_i + τ̄_i + ρ + τ_j + τ̄_j]`, where `τ` is active sensing
//! time (uncertainty shrinking), `τ̄` is idle time (holding at zero), `ρ` the
//! transit time, `i` the current target and `j` the candidate next target.
//!
//! * Departure-readiness decisions (`rhcp3_dwell`): `τ_i = τ̄_i = 0`; the
//!   optimum has a five-branch closed form.
//! * Arrival decisions (`rhcp1_dwell`): all four dwells free; solved
//!   numerically on the consistent dwell set (idling is only possible after
//!   the target has been emptied) via exact per-coordinate minimization of
//!   the rational objective with multi-start coordinate descent and a
//!   fractional-programming refinement.
//! * Empty-target decisions (`rhcp2_dwell`): same with `τ_i` pinned to zero.
//!
//! `value_fn` packages either solution as a piecewise function of ρ with
//! analytic derivatives where the closed form exists, for use by the transit
//! layer's transversality root-finding.

use std::cell::RefCell;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Per-target data inside a neighborhood snapshot.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeighborTarget {
    pub id: usize,
    /// Uncertainty growth rate A.
    pub a: f64,
    /// Sensing removal rate B (net shrink while attended is B − A).
    pub b: f64,
    /// Uncertainty at the snapshot time.
    pub r: f64,
}

/// Frozen view of the closed neighborhood of the agent's current target at a
/// solve instant: the current target plus every unclaimed neighbor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeighborhoodSnapshot {
    /// Solve time (event time the decision is anchored at).
    pub t_s: f64,
    /// Id of the current target `i`. Must appear in `members`.
    pub current: usize,
    /// All targets in the closed neighborhood, including `i` itself.
    pub members: Vec<NeighborTarget>,
    /// Planning horizon bound H.
    pub horizon: f64,
}

impl NeighborhoodSnapshot {
    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0) {
            return Err(Error::Config(format!(
                "horizon must be positive, got {}",
                self.horizon
            )));
        }
        if self.member(self.current).is_none() {
            return Err(Error::Config(format!(
                "current target {} missing from snapshot members",
                self.current
            )));
        }
        for m in &self.members {
            if !(m.a > 0.0 && m.b > m.a) {
                return Err(Error::Config(format!(
                    "target {} rates must satisfy 0 < A < B",
                    m.id
                )));
            }
            if !(m.r >= 0.0) {
                return Err(Error::Config(format!(
                    "target {} has negative uncertainty {}",
                    m.id, m.r
                )));
            }
        }
        Ok(())
    }

    pub fn member(&self, id: usize) -> Option<&NeighborTarget> {
        self.members.iter().find(|m| m.id == id)
    }

    /// Σ A over the closed neighborhood (always recomputed).
    pub fn abar(&self) -> f64 {
        self.members.iter().map(|m| m.a).sum()
    }

    /// Σ R over the closed neighborhood (always recomputed).
    pub fn rbar(&self) -> f64 {
        self.members.iter().map(|m| m.r).sum()
    }
}

/// Which branch of the closed-form dwell solution produced a result.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CaseId {
    /// Depart immediately: (τ_j, τ̄_j) = (0, 0).
    Depart,
    /// Sense until the horizon closes: (H − ρ, 0).
    HorizonCapped,
    /// Empty the next target, no idling: (D3, 0).
    EmptyNoIdle,
    /// Empty, then idle an interior-optimal time: (D3, D̄1).
    IdleInterior,
    /// Empty, then idle until the horizon closes: (D3, D̄2).
    IdleCapped,
    /// Produced by the numerical solver (arrival/empty-target decisions).
    Numeric,
}

/// Optimal dwell vector at a fixed transit time ρ, with its sensing cost.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensingSolution {
    pub tau_i: f64,
    pub taubar_i: f64,
    pub tau_j: f64,
    pub taubar_j: f64,
    /// Optimal time-averaged neighborhood uncertainty J*_sH.
    pub j_star: f64,
    pub case: CaseId,
    pub rho: f64,
}

impl SensingSolution {
    /// Planning-window length τ_i + τ̄_i + ρ + τ_j + τ̄_j.
    pub fn window(&self) -> f64 {
        self.tau_i + self.taubar_i + self.rho + self.tau_j + self.taubar_j
    }
}

/// Which decision problem a value function describes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RhcpForm {
    /// Arrival decision: all four dwells free.
    Rhcp1,
    /// Empty-current-target decision: τ_i pinned to zero.
    Rhcp2,
    /// Departure-readiness decision: τ_i = τ̄_i = 0, closed form.
    Rhcp3,
}

/// Work level for the numerical dwell optimizer.
///
/// `Exhaustive` is the default for direct solves; `Fast` trims restarts and
/// refinement for inner-loop evaluations (the transit-time search probes the
/// value function many times per decision), trading a little polish for a
/// large constant-factor saving. The committed dwell at the chosen transit
/// time should always come from an `Exhaustive` solve.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveEffort {
    Exhaustive,
    Fast,
}

// ---------------------------------------------------------------------------
// Closed-form departure-readiness dwell solution.
// ---------------------------------------------------------------------------

/// Snapshot-derived constants for the closed-form dwell problem at `j`.
#[derive(Clone, Copy, Debug)]
struct DwellConsts {
    abar: f64,
    rbar: f64,
    a_j: f64,
    b_j: f64,
    abar_j: f64,
    rbar_j: f64,
    /// dD3/dρ = A_j/(B_j − A_j).
    a: f64,
    /// D3 at ρ = 0: R_j/(B_j − A_j).
    b: f64,
    h: f64,
}

impl DwellConsts {
    fn build(snap: &NeighborhoodSnapshot, j: usize) -> Result<DwellConsts> {
        snap.validate()?;
        if j == snap.current {
            return Err(Error::Config(
                "next target must differ from the current target".to_string(),
            ));
        }
        let tj = snap
            .member(j)
            .ok_or_else(|| Error::Config(format!("target {j} not in the neighborhood")))?;
        let abar = snap.abar();
        let rbar = snap.rbar();
        Ok(DwellConsts {
            abar,
            rbar,
            a_j: tj.a,
            b_j: tj.b,
            abar_j: abar - tj.a,
            rbar_j: rbar - tj.r,
            a: tj.a / (tj.b - tj.a),
            b: tj.r / (tj.b - tj.a),
            h: snap.horizon,
        })
    }

    /// Time to empty `j` on arrival after ρ: D3 = (R_j + A_j ρ)/(B_j − A_j).
    fn d3(&self, rho: f64) -> f64 {
        self.b + self.a * rho
    }

    /// Rational objective for the departure-readiness problem: average total
    /// uncertainty over [t_s, t_s + ρ + τ + σ] with active `τ` and idle `σ`
    /// at the next target.
    fn j_of(&self, rho: f64, tau: f64, sig: f64) -> f64 {
        let c1 = (self.abar - self.b_j) / 2.0;
        let c2 = self.abar_j / 2.0;
        let c3 = self.abar_j;
        let c4 = self.rbar + self.abar * rho;
        let c5 = self.rbar_j + self.abar_j * rho;
        let c6 = (rho / 2.0) * (2.0 * self.rbar + self.abar * rho);
        (c1 * tau * tau + c2 * sig * sig + c3 * tau * sig + c4 * tau + c5 * sig + c6)
            / (rho + tau + sig)
    }

    /// The five-branch optimizer: returns (τ_j*, τ̄_j*, case).
    fn select(&self, rho: f64) -> (f64, f64, CaseId) {
        if self.abar >= self.b_j {
            return (0.0, 0.0, CaseId::Depart);
        }
        let d3 = self.d3(rho);
        let d1 = self.abar * rho / (self.b_j - self.abar);
        let w = (self.h - rho).max(0.0);
        if w < d3 {
            // Emptying j is impossible inside the horizon: the sensing leg's
            // optimum sits at one of its endpoints.
            return if d1 > w {
                (0.0, 0.0, CaseId::Depart)
            } else {
                (w, 0.0, CaseId::HorizonCapped)
            };
        }
        let s = rho + d3;
        let cand = if self.abar >= self.b_j * (1.0 - rho * rho / (s * s)) {
            (d3, 0.0, CaseId::EmptyNoIdle)
        } else {
            let q = (self.b_j - self.a_j) * s * s - self.b_j * rho * rho;
            let dbar1 = if self.abar_j > 0.0 {
                (q / self.abar_j).sqrt() - s
            } else {
                f64::INFINITY
            };
            let dbar2 = self.h - s;
            if dbar1 <= dbar2 {
                (d3, dbar1, CaseId::IdleInterior)
            } else {
                (d3, dbar2, CaseId::IdleCapped)
            }
        };
        if d1 > d3 {
            // Immediate departure may still beat the empty-then-idle
            // candidate; compare the two endpoint values directly.
            let h0 = self.j_of(rho, 0.0, 0.0);
            if h0 < self.j_of(rho, cand.0, cand.1) {
                return (0.0, 0.0, CaseId::Depart);
            }
        }
        cand
    }

    /// Value and analytic ρ-derivative of J*_sH along a given branch.
    fn branch_value_and_slope(&self, rho: f64, case: CaseId) -> (f64, f64) {
        let abar = self.abar;
        let rbar = self.rbar;
        let c1 = (abar - self.b_j) / 2.0;
        let c2 = self.abar_j / 2.0;
        let c3 = self.abar_j;
        let c4 = rbar + abar * rho;
        let c5 = self.rbar_j + self.abar_j * rho;
        let c6p = rbar + abar * rho; // dC6/dρ
        let d3 = self.d3(rho);
        let a = self.a;
        match case {
            CaseId::Depart => (rbar + abar * rho / 2.0, abar / 2.0),
            CaseId::HorizonCapped => {
                let tau = (self.h - rho).max(0.0);
                let val = self.j_of(rho, tau, 0.0);
                (val, self.b_j * tau / self.h)
            }
            CaseId::EmptyNoIdle => {
                let s = rho + d3;
                let p = c1 * d3 * d3 + c4 * d3 + (rho / 2.0) * (2.0 * rbar + abar * rho);
                let pp = 2.0 * c1 * a * d3 + abar * d3 + c4 * a + c6p;
                let sp = 1.0 + a;
                (p / s, (pp * s - p * sp) / (s * s))
            }
            CaseId::IdleInterior => {
                let s = rho + d3;
                let sp = 1.0 + a;
                let q = (self.b_j - self.a_j) * s * s - self.b_j * rho * rho;
                let g = (q / self.abar_j).sqrt();
                let sig = g - s;
                let qp = 2.0 * (self.b_j - self.a_j) * s * sp - 2.0 * self.b_j * rho;
                let gp = qp / (2.0 * self.abar_j * g);
                let sigp = gp - sp;
                let n = c1 * d3 * d3
                    + c2 * sig * sig
                    + c3 * d3 * sig
                    + c4 * d3
                    + c5 * sig
                    + (rho / 2.0) * (2.0 * rbar + abar * rho);
                let np = 2.0 * c1 * a * d3
                    + 2.0 * c2 * sig * sigp
                    + c3 * (a * sig + d3 * sigp)
                    + (abar * d3 + c4 * a)
                    + (self.abar_j * sig + c5 * sigp)
                    + c6p;
                (n / g, (np * g - n * gp) / (g * g))
            }
            CaseId::IdleCapped => {
                let s = rho + d3;
                let sp = 1.0 + a;
                let sig = (self.h - s).max(0.0);
                let sigp = -sp;
                let n = c1 * d3 * d3
                    + c2 * sig * sig
                    + c3 * d3 * sig
                    + c4 * d3
                    + c5 * sig
                    + (rho / 2.0) * (2.0 * rbar + abar * rho);
                let np = 2.0 * c1 * a * d3
                    + 2.0 * c2 * sig * sigp
                    + c3 * (a * sig + d3 * sigp)
                    + (abar * d3 + c4 * a)
                    + (self.abar_j * sig + c5 * sigp)
                    + c6p;
                (n / self.h, np / self.h)
            }
            CaseId::Numeric => unreachable!("closed-form branch requested for numeric case"),
        }
    }
}

fn check_rho(rho: f64, h: f64) -> Result<()> {
    if !(rho > 0.0) {
        return Err(Error::Domain(format!("transit time must be > 0, got {rho}")));
    }
    if rho > h * (1.0 + 1e-12) {
        return Err(Error::Infeasible(format!(
            "transit time {rho} exceeds the horizon {h}"
        )));
    }
    Ok(())
}

/// Closed-form dwell solution for the departure-readiness decision: how long
/// to keep sensing (and then idle) at the next target `j` if transit takes ρ.
pub fn rhcp3_dwell(snap: &NeighborhoodSnapshot, j: usize, rho: f64) -> Result<SensingSolution> {
    let con = DwellConsts::build(snap, j)?;
    check_rho(rho, con.h)?;
    let (tau, sig, case) = con.select(rho);
    Ok(SensingSolution {
        tau_i: 0.0,
        taubar_i: 0.0,
        tau_j: tau,
        taubar_j: sig,
        j_star: con.j_of(rho, tau, sig),
        case,
        rho,
    })
}

// ---------------------------------------------------------------------------
// Arrival-decision rational objective and numerical dwell optimization.
// ---------------------------------------------------------------------------

/// Snapshot constants for the four-dwell arrival decision.
#[derive(Clone, Copy, Debug)]
struct ArrivalConsts {
    abar: f64,
    rbar: f64,
    a_i: f64,
    b_i: f64,
    r_i: f64,
    a_j: f64,
    b_j: f64,
    r_j: f64,
    h: f64,
}

impl ArrivalConsts {
    fn build(snap: &NeighborhoodSnapshot, j: usize) -> Result<ArrivalConsts> {
        snap.validate()?;
        if j == snap.current {
            return Err(Error::Config(
                "next target must differ from the current target".to_string(),
            ));
        }
        let ti = snap.member(snap.current).expect("validated");
        let tj = snap
            .member(j)
            .ok_or_else(|| Error::Config(format!("target {j} not in the neighborhood")))?;
        Ok(ArrivalConsts {
            abar: snap.abar(),
            rbar: snap.rbar(),
            a_i: ti.a,
            b_i: ti.b,
            r_i: ti.r,
            a_j: tj.a,
            b_j: tj.b,
            r_j: tj.r,
            h: snap.horizon,
        })
    }

    /// Numerator of the rational objective (quadratic form in the dwells).
    fn numerator(&self, rho: f64, ti: f64, tbi: f64, tj: f64, tbj: f64) -> f64 {
        let abar_i = self.abar - self.a_i;
        let abar_j = self.abar - self.a_j;
        let abar_ij = self.abar - self.a_i - self.a_j;
        let rbar_i = self.rbar - self.r_i;
        let rbar_j = self.rbar - self.r_j;
        let c1 = (self.abar - self.b_i) / 2.0;
        let c2 = abar_i / 2.0;
        let c3 = (self.abar - self.b_j) / 2.0;
        let c4 = abar_j / 2.0;
        let c5 = abar_i;
        let c6 = self.abar - self.b_i;
        let c7 = abar_j - self.b_i;
        let c8 = abar_i;
        let c9 = abar_ij;
        let c10 = abar_j;
        let c11 = self.rbar + (self.abar - self.b_i) * rho;
        let c12 = rbar_i + abar_i * rho;
        let c13 = self.rbar + self.abar * rho;
        let c14 = rbar_j + abar_j * rho;
        let c15 = (rho / 2.0) * (2.0 * self.rbar + self.abar * rho);
        c1 * ti * ti
            + c2 * tbi * tbi
            + c3 * tj * tj
            + c4 * tbj * tbj
            + c5 * ti * tbi
            + c6 * ti * tj
            + c7 * ti * tbj
            + c8 * tbi * tj
            + c9 * tbi * tbj
            + c10 * tj * tbj
            + c11 * ti
            + c12 * tbi
            + c13 * tj
            + c14 * tbj
            + c15
    }

    fn tte_i(&self) -> f64 {
        (self.r_i / (self.b_i - self.a_i)).max(0.0)
    }

    /// Time to empty `j` when departure happens `delta_i` after the solve.
    fn tte_j(&self, rho: f64, delta_i: f64) -> f64 {
        ((self.r_j + self.a_j * (delta_i + rho)) / (self.b_j - self.a_j)).max(0.0)
    }
}

/// Evaluates the arrival-decision rational objective at an arbitrary dwell
/// vector (exact; no optimization).
pub fn rhcp1_objective(
    snap: &NeighborhoodSnapshot,
    j: usize,
    rho: f64,
    tau_i: f64,
    taubar_i: f64,
    tau_j: f64,
    taubar_j: f64,
) -> Result<f64> {
    let con = ArrivalConsts::build(snap, j)?;
    for (name, v) in [
        ("tau_i", tau_i),
        ("taubar_i", taubar_i),
        ("tau_j", tau_j),
        ("taubar_j", taubar_j),
    ] {
        if !(v >= 0.0) {
            return Err(Error::Domain(format!("{name} must be ≥ 0, got {v}")));
        }
    }
    let den = tau_i + taubar_i + rho + tau_j + taubar_j;
    if !(den > 0.0) {
        return Err(Error::Domain(format!(
            "planning window must be positive, got {den}"
        )));
    }
    Ok(con.numerator(rho, tau_i, taubar_i, tau_j, taubar_j) / den)
}

/// Splits a total dwell into (active, idle) under the consistency rule that
/// idling requires the target to have been emptied first.
fn split(total: f64, tte: f64) -> (f64, f64) {
    let active = total.min(tte);
    (active, (total - active).max(0.0))
}

/// Exact minimizer of (n2·x² + n1·x + n0)/(x + d) over [lo, hi] (d > −lo so
/// the denominator stays positive). Returns (x*, value).
fn min_ratio_on(n: impl Fn(f64) -> f64, d: f64, lo: f64, hi: f64) -> (f64, f64) {
    debug_assert!(hi >= lo);
    let val = |x: f64| n(x) / (x + d);
    let mut best = (lo, val(lo));
    let vh = val(hi);
    if vh < best.1 {
        best = (hi, vh);
    }
    if hi - lo <= 1e-12 * (1.0 + hi.abs()) {
        return best;
    }
    // Recover the quadratic coefficients exactly from three samples.
    let m = 0.5 * (lo + hi);
    let (f0, f1, f2) = (n(lo), n(m), n(hi));
    let hstep = 0.5 * (hi - lo);
    let n2 = (f0 - 2.0 * f1 + f2) / (2.0 * hstep * hstep);
    let n1 = (f2 - f0) / (2.0 * hstep) - 2.0 * n2 * m;
    let n0 = f1 - n2 * m * m - n1 * m;
    // d/dx [(n2x²+n1x+n0)/(x+d)] = 0 ⟺ n2x² + 2·n2·d·x + (n1·d − n0) = 0.
    let qa = n2;
    let qb = 2.0 * n2 * d;
    let qc = n1 * d - n0;
    let mut consider = |x: f64| {
        if x > lo && x < hi {
            let v = val(x);
            if v < best.1 {
                best = (x, v);
            }
        }
    };
    if qa.abs() > 1e-300 {
        let disc = qb * qb - 4.0 * qa * qc;
        if disc >= 0.0 {
            let sq = disc.sqrt();
            consider((-qb + sq) / (2.0 * qa));
            consider((-qb - sq) / (2.0 * qa));
        }
    } else if qb.abs() > 1e-300 {
        consider(-qc / qb);
    }
    best
}

/// Exact minimizer of a quadratic (recovered from samples) over [lo, hi].
fn min_quad_on(n: impl Fn(f64) -> f64, lo: f64, hi: f64) -> (f64, f64) {
    let mut best = (lo, n(lo));
    let vh = n(hi);
    if vh < best.1 {
        best = (hi, vh);
    }
    if hi - lo <= 1e-12 * (1.0 + hi.abs()) {
        return best;
    }
    let m = 0.5 * (lo + hi);
    let (f0, f1, f2) = (n(lo), n(m), n(hi));
    let hstep = 0.5 * (hi - lo);
    let n2 = (f0 - 2.0 * f1 + f2) / (2.0 * hstep * hstep);
    let n1 = (f2 - f0) / (2.0 * hstep) - 2.0 * n2 * m;
    if n2 > 0.0 {
        let x = -n1 / (2.0 * n2);
        if x > lo && x < hi {
            let v = n(x);
            if v < best.1 {
                best = (x, v);
            }
        }
    }
    best
}

/// Consistent-set dwell optimizer shared by the arrival and empty-target
/// decisions. Decision variables are the total dwells (δ_i, δ_j); the active
/// and idle components follow from the consistency splits.
fn solve_consistent(
    snap: &NeighborhoodSnapshot,
    j: usize,
    rho: f64,
    pin_tau_i: bool,
    effort: SolveEffort,
) -> Result<SensingSolution> {
    let con = ArrivalConsts::build(snap, j)?;
    check_rho(rho, con.h)?;
    let (n_scan, cd_iters, fp_outer, fp_inner) = match effort {
        SolveEffort::Exhaustive => (24, 60, 12, 40),
        SolveEffort::Fast => (10, 30, 3, 15),
    };
    let w = (con.h - rho).max(0.0);
    let tte_i = if pin_tau_i { 0.0 } else { con.tte_i() };

    // Objective in the (δ_i, δ_j) parametrization.
    let numer = |di: f64, dj: f64| -> f64 {
        let (ti, tbi) = split(di, tte_i);
        let (tj, tbj) = split(dj, con.tte_j(rho, di));
        con.numerator(rho, ti, tbi, tj, tbj)
    };
    let value = |di: f64, dj: f64| -> f64 { numer(di, dj) / (di + rho + dj) };

    // Exact minimization over δ_j at fixed δ_i: the numerator is quadratic on
    // each side of δ_j = tte_j.
    let best_dj = |di: f64| -> (f64, f64) {
        let cap = (w - di).max(0.0);
        let ttej = con.tte_j(rho, di);
        let d = di + rho;
        let mut best = min_ratio_on(|x| numer(di, x), d, 0.0, ttej.min(cap));
        if ttej < cap {
            let alt = min_ratio_on(|x| numer(di, x), d, ttej, cap);
            if alt.1 < best.1 {
                best = alt;
            }
        }
        best
    };
    // Exact minimization over δ_i at fixed δ_j: numerator is quadratic on
    // each piece cut by δ_i = tte_i and by the δ_i where tte_j(δ_i) = δ_j.
    let best_di = |dj: f64| -> (f64, f64) {
        let cap = (w - dj).max(0.0);
        let mut cuts = vec![0.0, cap];
        if tte_i > 0.0 && tte_i < cap {
            cuts.push(tte_i);
        }
        // tte_j(δ_i) = δ_j ⟺ δ_i = ((B_j − A_j)·δ_j − R_j − A_j·ρ)/A_j.
        let cross = ((con.b_j - con.a_j) * dj - con.r_j - con.a_j * rho) / con.a_j;
        if cross > 0.0 && cross < cap {
            cuts.push(cross);
        }
        cuts.sort_by(f64::total_cmp);
        let mut best = (0.0, f64::INFINITY);
        for pair in cuts.windows(2) {
            let (lo, hi) = (pair[0], pair[1]);
            if hi <= lo {
                continue;
            }
            let cand = min_ratio_on(|x| numer(x, dj), rho + dj, lo, hi);
            if cand.1 < best.1 {
                best = cand;
            }
        }
        if best.1.is_infinite() {
            best = (0.0, value(0.0, dj));
        }
        best
    };

    // Multi-start coordinate descent.
    let di0 = tte_i.min(w);
    let mut starts: Vec<(f64, f64)> = match effort {
        SolveEffort::Exhaustive => vec![
            (0.0, 0.0),
            (w, 0.0),
            (0.0, w),
            (0.5 * w, 0.5 * w),
            (tte_i.min(w), 0.0),
            (0.0, con.tte_j(rho, 0.0).min(w)),
        ],
        SolveEffort::Fast => vec![(0.0, 0.0), (di0, 0.0)],
    };
    starts.push((di0, con.tte_j(rho, di0).min((w - di0).max(0.0))));
    // Coarse scan seed.
    let mut scan_best = (0.0, 0.0, f64::INFINITY);
    for ki in 0..=n_scan {
        let di = w * ki as f64 / n_scan as f64;
        for kj in 0..=n_scan {
            let dj = (w - di) * kj as f64 / n_scan as f64;
            let v = value(di, dj);
            if v < scan_best.2 {
                scan_best = (di, dj, v);
            }
        }
    }
    starts.push((scan_best.0, scan_best.1));

    let mut best = (0.0, 0.0, f64::INFINITY);
    for &(di0, dj0) in &starts {
        let mut di = di0.clamp(0.0, w);
        let mut dj = dj0.clamp(0.0, (w - di).max(0.0));
        let mut cur = value(di, dj);
        for _ in 0..cd_iters {
            let (ndj, _) = best_dj(di);
            dj = ndj;
            let (ndi, v2) = best_di(dj);
            di = ndi;
            if dj > (w - di).max(0.0) {
                dj = (w - di).max(0.0);
            }
            let v = value(di, dj).min(v2);
            if cur - v <= 1e-13 * (1.0 + cur.abs()) {
                cur = cur.min(v);
                break;
            }
            cur = v;
        }
        let v = value(di, dj);
        if v < best.2 {
            best = (di, dj, v);
        }
    }

    // Fractional-programming refinement: minimize N − λ·D at the incumbent λ;
    // any strictly negative value yields a better ratio point.
    for _ in 0..fp_outer {
        let lambda = best.2;
        let shifted_num = |di: f64, dj: f64| numer(di, dj) - lambda * (di + rho + dj);
        let mut di = best.0;
        let mut dj = best.1;
        for _ in 0..fp_inner {
            // δ_j sweep at fixed δ_i.
            let cap = (w - di).max(0.0);
            let ttej = con.tte_j(rho, di);
            let mut cand = min_quad_on(|x| shifted_num(di, x), 0.0, ttej.min(cap));
            if ttej < cap {
                let alt = min_quad_on(|x| shifted_num(di, x), ttej, cap);
                if alt.1 < cand.1 {
                    cand = alt;
                }
            }
            dj = cand.0;
            // δ_i sweep at fixed δ_j.
            let cap = (w - dj).max(0.0);
            let mut cuts = vec![0.0, cap];
            if tte_i > 0.0 && tte_i < cap {
                cuts.push(tte_i);
            }
            let cross = ((con.b_j - con.a_j) * dj - con.r_j - con.a_j * rho) / con.a_j;
            if cross > 0.0 && cross < cap {
                cuts.push(cross);
            }
            cuts.sort_by(f64::total_cmp);
            let mut ci = (di, f64::INFINITY);
            for pair in cuts.windows(2) {
                if pair[1] <= pair[0] {
                    continue;
                }
                let c = min_quad_on(|x| shifted_num(x, dj), pair[0], pair[1]);
                if c.1 < ci.1 {
                    ci = c;
                }
            }
            if ci.1.is_finite() {
                di = ci.0;
            }
            let margin = shifted_num(di, dj);
            if margin >= -1e-12 * (1.0 + lambda.abs()) {
                break;
            }
        }
        let v = value(di, dj);
        if v < best.2 - 1e-13 * (1.0 + best.2.abs()) {
            best = (di, dj, v);
        } else {
            break;
        }
    }

    let (di, dj, jval) = best;
    let (ti, tbi) = split(di, tte_i);
    let (tj, tbj) = split(dj, con.tte_j(rho, di));
    Ok(SensingSolution {
        tau_i: ti,
        taubar_i: tbi,
        tau_j: tj,
        taubar_j: tbj,
        j_star: jval,
        case: CaseId::Numeric,
        rho,
    })
}

/// Numerical dwell optimization for the arrival decision (all four dwells
/// free over the consistent set).
pub fn rhcp1_dwell(snap: &NeighborhoodSnapshot, j: usize, rho: f64) -> Result<SensingSolution> {
    solve_consistent(snap, j, rho, false, SolveEffort::Exhaustive)
}

/// Dwell optimization when the current target is already empty: the arrival
/// decision with active time at `i` pinned to zero.
pub fn rhcp2_dwell(snap: &NeighborhoodSnapshot, j: usize, rho: f64) -> Result<SensingSolution> {
    solve_consistent(snap, j, rho, true, SolveEffort::Exhaustive)
}

// ---------------------------------------------------------------------------
// The sensing value function J*_sH(ρ).
// ---------------------------------------------------------------------------

/// One validity interval of the piecewise value function.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueInterval {
    pub lo: f64,
    pub hi: f64,
    pub case: CaseId,
}

/// J*_sH as a function of the transit time ρ on (0, H]: closed-form piecewise
/// branches for the departure-readiness decision, a memoized numerical
/// evaluator for the arrival/empty-target decisions.
#[derive(Debug)]
pub struct SensingValueFn {
    form: RhcpForm,
    snap: NeighborhoodSnapshot,
    j: usize,
    h: f64,
    intervals: Vec<ValueInterval>,
    closed: Option<DwellConsts>,
    effort: SolveEffort,
    cache: RefCell<HashMap<u64, SensingSolution>>,
}

impl SensingValueFn {
    pub fn form(&self) -> RhcpForm {
        self.form
    }

    pub fn horizon(&self) -> f64 {
        self.h
    }

    pub fn next_target(&self) -> usize {
        self.j
    }

    /// The validity intervals partitioning (0, H].
    pub fn intervals(&self) -> &[ValueInterval] {
        &self.intervals
    }

    /// Full dwell solution at ρ.
    pub fn solve(&self, rho: f64) -> Result<SensingSolution> {
        match self.form {
            RhcpForm::Rhcp3 => rhcp3_dwell(&self.snap, self.j, rho),
            RhcpForm::Rhcp1 | RhcpForm::Rhcp2 => {
                let key = rho.to_bits();
                if let Some(sol) = self.cache.borrow().get(&key) {
                    return Ok(*sol);
                }
                let sol = solve_consistent(
                    &self.snap,
                    self.j,
                    rho,
                    matches!(self.form, RhcpForm::Rhcp2),
                    self.effort,
                )?;
                self.cache.borrow_mut().insert(key, sol);
                Ok(sol)
            }
        }
    }

    /// J*_sH(ρ).
    pub fn value(&self, rho: f64) -> Result<f64> {
        Ok(self.solve(rho)?.j_star)
    }

    /// dJ*_sH/dρ: analytic along closed-form branches, centered finite
    /// difference (step 1e-5·ρ) for the numerical forms.
    pub fn derivative(&self, rho: f64) -> Result<f64> {
        check_rho(rho, self.h)?;
        match (&self.closed, self.form) {
            (Some(con), RhcpForm::Rhcp3) => {
                let (_, _, case) = con.select(rho);
                Ok(con.branch_value_and_slope(rho, case).1)
            }
            _ => {
                let step = 1e-5 * rho;
                let lo = (rho - step).max(rho * 0.5);
                let hi = (rho + step).min(self.h);
                let flo = self.value(lo)?;
                let fhi = self.value(hi)?;
                Ok((fhi - flo) / (hi - lo))
            }
        }
    }
}

/// Builds the value function for a decision form at a fixed next target.
pub fn value_fn(snap: &NeighborhoodSnapshot, j: usize, form: RhcpForm) -> Result<SensingValueFn> {
    value_fn_with_effort(snap, j, form, SolveEffort::Exhaustive)
}

/// [`value_fn`] with an explicit work level for the numerical forms.
pub fn value_fn_with_effort(
    snap: &NeighborhoodSnapshot,
    j: usize,
    form: RhcpForm,
    effort: SolveEffort,
) -> Result<SensingValueFn> {
    snap.validate()?;
    let h = snap.horizon;
    match form {
        RhcpForm::Rhcp3 => {
            let con = DwellConsts::build(snap, j)?;
            let intervals = rhcp3_partition(&con);
            Ok(SensingValueFn {
                form,
                snap: snap.clone(),
                j,
                h,
                intervals,
                closed: Some(con),
                effort,
                cache: RefCell::new(HashMap::new()),
            })
        }
        RhcpForm::Rhcp1 | RhcpForm::Rhcp2 => {
            ArrivalConsts::build(snap, j)?;
            Ok(SensingValueFn {
                form,
                snap: snap.clone(),
                j,
                h,
                intervals: vec![ValueInterval {
                    lo: 0.0,
                    hi: h,
                    case: CaseId::Numeric,
                }],
                closed: None,
                effort,
                cache: RefCell::new(HashMap::new()),
            })
        }
    }
}

/// Partition (0, H] into maximal intervals on which the closed-form selector
/// picks one branch. Analytic switch candidates seed the search; remaining
/// switches (including the depart-vs-idle value comparison) are located by
/// sampling and bisection.
fn rhcp3_partition(con: &DwellConsts) -> Vec<ValueInterval> {
    let h = con.h;
    if con.abar >= con.b_j {
        return vec![ValueInterval {
            lo: 0.0,
            hi: h,
            case: CaseId::Depart,
        }];
    }
    let mut knots: Vec<f64> = Vec::new();
    let push = |x: f64, knots: &mut Vec<f64>| {
        if x.is_finite() && x > 1e-12 * h && x < h * (1.0 - 1e-12) {
            knots.push(x);
        }
    };
    let (a, b) = (con.a, con.b);
    let abar = con.abar;
    let b_j = con.b_j;
    // D3 = H − ρ.
    push((h - b) / (1.0 + a), &mut knots);
    // D1 = D3: (Ā/(B_j − Ā) − a)·ρ = b.
    let c = abar / (b_j - abar) - a;
    if c.abs() > 1e-300 {
        push(b / c, &mut knots);
    }
    // D1 = H − ρ.
    push(h * (b_j - abar) / b_j, &mut knots);
    // Idle-onset boundary: √B_j·ρ = √(B_j − Ā)·((1+a)ρ + b).
    let coef = b_j.sqrt() - (b_j - abar).sqrt() * (1.0 + a);
    if coef > 1e-300 {
        push((b_j - abar).sqrt() * b / coef, &mut knots);
    }
    // D̄1 = D̄2 ⟺ (B_j − A_j)S² − B_j·ρ² = Ā_j·H².
    {
        let k2 = (b_j - con.a_j) * (1.0 + a) * (1.0 + a) - b_j;
        let k1 = 2.0 * (b_j - con.a_j) * (1.0 + a) * b;
        let k0 = (b_j - con.a_j) * b * b - con.abar_j * h * h;
        if k2.abs() > 1e-300 {
            let disc = k1 * k1 - 4.0 * k2 * k0;
            if disc >= 0.0 {
                let sq = disc.sqrt();
                push((-k1 + sq) / (2.0 * k2), &mut knots);
                push((-k1 - sq) / (2.0 * k2), &mut knots);
            }
        } else if k1.abs() > 1e-300 {
            push(-k0 / k1, &mut knots);
        }
    }
    knots.sort_by(f64::total_cmp);
    knots.dedup_by(|x, y| (*x - *y).abs() <= 1e-11 * h);

    let case_at = |rho: f64| con.select(rho).2;
    let mut cuts: Vec<f64> = vec![0.0];
    let mut cells: Vec<f64> = Vec::with_capacity(knots.len() + 2);
    cells.push(1e-12 * h);
    cells.extend(knots.iter().copied());
    cells.push(h);
    for pair in cells.windows(2) {
        let (lo, hi) = (pair[0], pair[1]);
        if hi - lo <= 1e-11 * h {
            cuts.push(hi);
            continue;
        }
        // Sample inside the cell to catch non-analytic switches.
        let n = 65;
        let mut prev_x = lo + 1e-13 * h;
        let mut prev_case = case_at(prev_x);
        for k in 1..=n {
            let x = lo + (hi - lo) * k as f64 / n as f64;
            let x = x.min(h);
            let c = case_at(x);
            if c != prev_case {
                // Bisect the switch point.
                let (mut xl, mut xr) = (prev_x, x);
                for _ in 0..80 {
                    let mid = 0.5 * (xl + xr);
                    if case_at(mid) == prev_case {
                        xl = mid;
                    } else {
                        xr = mid;
                    }
                    if xr - xl <= 1e-13 * h {
                        break;
                    }
                }
                cuts.push(0.5 * (xl + xr));
                prev_case = c;
            }
            prev_x = x;
        }
        cuts.push(hi);
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|x, y| (*x - *y).abs() <= 1e-12 * h);
    if *cuts.last().unwrap() < h {
        cuts.push(h);
    }

    let mut out: Vec<ValueInterval> = Vec::new();
    for pair in cuts.windows(2) {
        let (lo, hi) = (pair[0], pair[1]);
        if hi <= lo {
            continue;
        }
        let case = case_at((0.5 * (lo + hi)).min(h).max(1e-12 * h));
        match out.last_mut() {
            Some(last) if last.case == case => last.hi = hi,
            _ => out.push(ValueInterval { lo, hi, case }),
        }
    }
    if let Some(last) = out.last_mut() {
        last.hi = h;
    }
    out
}
