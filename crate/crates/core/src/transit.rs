//! Energy-optimal transit planning between targets.
//!
//! The second-order (SO) method solves a free-terminal-time optimal control
//! problem whose transversality condition couples the transit time to the
//! sensing value function: ρ⁴·dJ*_sH/dρ = 36αy². First-order comparison
//! methods replace the parabolic velocity pulse with trapezoids — FO-1/FO-2
//! run at fixed per-edge times derived from network-wide calibration, FO-3
//! re-optimizes the trapezoid's duration (constant 40.5αy² on the right-hand
//! side). Velocity- and acceleration-bounded variants (SO-V, SO-A, FO-V,
//! FO-A) clip or re-shape the profiles while keeping the same
//! sensing-vs-energy trade-off.
//!
//! Every plan exposes closed-form v(t), u(t), partial distance, partial
//! energy, and running peaks so the simulator can truncate at the episode end
//! without quadrature.

use serde::{Deserialize, Serialize};

use crate::sensing::{RhcpForm, SensingValueFn};
use crate::{Error, Result};

/// Agent motion method tags, as written in config files.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "SO")]
    So,
    #[serde(rename = "FO1")]
    Fo1,
    #[serde(rename = "FO2")]
    Fo2,
    #[serde(rename = "FO3")]
    Fo3,
    #[serde(rename = "SOV")]
    Sov,
    #[serde(rename = "SOA")]
    Soa,
    #[serde(rename = "FOV")]
    Fov,
    #[serde(rename = "FOA")]
    Foa,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::So => "SO",
            Method::Fo1 => "FO1",
            Method::Fo2 => "FO2",
            Method::Fo3 => "FO3",
            Method::Sov => "SOV",
            Method::Soa => "SOA",
            Method::Fov => "FOV",
            Method::Foa => "FOA",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Method> {
        Ok(match s {
            "SO" => Method::So,
            "FO1" => Method::Fo1,
            "FO2" => Method::Fo2,
            "FO3" => Method::Fo3,
            "SOV" => Method::Sov,
            "SOA" => Method::Soa,
            "FOV" => Method::Fov,
            "FOA" => Method::Foa,
            other => {
                return Err(Error::Config(format!(
                    "unknown method {other:?} (expected SO, FO1, FO2, FO3, SOV, SOA, FOV, FOA)"
                )))
            }
        })
    }
}

/// Method configuration: the energy weight, optional motion bounds, and the
/// network-wide first-order calibration constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodParams {
    pub method: Method,
    /// Energy weight α > 0 in J_H = α·J_eH + J_sH.
    pub alpha: f64,
    /// Velocity bound for SO-V / FO-V.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_bar: Option<f64>,
    /// Acceleration bound for SO-A / FO-A.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_bar: Option<f64>,
    /// Calibration input: peak acceleration observed under SO.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_so_max: Option<f64>,
    /// Calibration input: peak velocity observed under SO.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_so_max: Option<f64>,
}

impl MethodParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) {
            return Err(Error::Config(format!(
                "energy weight alpha must be > 0, got {}",
                self.alpha
            )));
        }
        for (name, v) in [
            ("v_bar", self.v_bar),
            ("u_bar", self.u_bar),
            ("u_so_max", self.u_so_max),
            ("v_so_max", self.v_so_max),
        ] {
            if let Some(v) = v {
                if !(v > 0.0) {
                    return Err(Error::Config(format!("{name} must be > 0, got {v}")));
                }
            }
        }
        match self.method {
            Method::Sov | Method::Fov if self.v_bar.is_none() => Err(Error::Config(
                "velocity-bounded methods need v_bar".to_string(),
            )),
            Method::Soa | Method::Foa if self.u_bar.is_none() => Err(Error::Config(
                "acceleration-bounded methods need u_bar".to_string(),
            )),
            _ => Ok(()),
        }
    }
}

/// Value curve J*_sH(ρ) seen by the transit solvers. Implemented by the
/// sensing layer's value function; tests may provide synthetic curves.
pub trait ValueCurve {
    fn horizon(&self) -> f64;
    /// Validity intervals partitioning the ρ domain (monotone, adjacent).
    fn pieces(&self) -> Vec<(f64, f64)>;
    fn value(&self, rho: f64) -> Result<f64>;
    fn derivative(&self, rho: f64) -> Result<f64>;
    /// Whether `derivative` is exact and cheap. Curves that differentiate by
    /// finite differences over a numerical solve should return false so the
    /// transit-time search switches to value-only probing.
    fn analytic_derivative(&self) -> bool {
        true
    }
}

impl ValueCurve for SensingValueFn {
    fn horizon(&self) -> f64 {
        SensingValueFn::horizon(self)
    }
    fn pieces(&self) -> Vec<(f64, f64)> {
        self.intervals().iter().map(|iv| (iv.lo, iv.hi)).collect()
    }
    fn value(&self, rho: f64) -> Result<f64> {
        SensingValueFn::value(self, rho)
    }
    fn derivative(&self, rho: f64) -> Result<f64> {
        SensingValueFn::derivative(self, rho)
    }
    fn analytic_derivative(&self) -> bool {
        matches!(self.form(), RhcpForm::Rhcp3)
    }
}

/// Velocity-profile shapes a plan can carry.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum TransitProfile {
    /// Parabolic velocity pulse v(s) = (6y/ρ³)·s·(ρ − s).
    SoParabolic,
    /// Ramp–cruise–ramp at constant acceleration: cruise velocity `cruise`,
    /// ramp slope `accel`. Degenerates to a triangle when 2·cruise/accel = ρ.
    Trapezoid { accel: f64, cruise: f64 },
    /// Velocity-clipped parabolic pulse: parabola of pulse length `beta`
    /// clipped at the bound; ramps end/resume at `t1` and `t2` (profile time).
    SoVComposite { beta: f64, t1: f64, t2: f64 },
    /// Acceleration-bounded three-stage profile: full accel until `t1`,
    /// linear acceleration reversal until `t2`, full deceleration to `rho`.
    SoAComposite { beta: f64, t1: f64, t2: f64 },
}

/// A committed transit: timing, profile, energy, and peaks.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitPlan {
    pub method: Method,
    /// Transit duration ρ > 0.
    pub rho: f64,
    /// Departure time.
    pub t_o: f64,
    /// Arrival time t_o + ρ.
    pub t_f: f64,
    /// Edge length.
    pub y: f64,
    pub profile: TransitProfile,
    /// Closed-form transit energy ∫u².
    pub energy: f64,
    pub v_peak: f64,
    pub u_peak: f64,
    /// True when the transit time was clamped to a search-domain endpoint
    /// rather than an interior transversality root.
    pub boundary: bool,
}

impl TransitPlan {
    /// Shifts the plan to depart at `t_o`.
    pub fn anchored(mut self, t_o: f64) -> TransitPlan {
        self.t_o = t_o;
        self.t_f = t_o + self.rho;
        self
    }

    fn local(&self, t: f64) -> f64 {
        (t - self.t_o).clamp(0.0, self.rho)
    }

    /// Tangential velocity at absolute time `t` (0 outside [t_o, t_f]).
    pub fn v_at(&self, t: f64) -> f64 {
        if t < self.t_o || t > self.t_f {
            return 0.0;
        }
        let s = self.local(t);
        let rho = self.rho;
        match self.profile {
            TransitProfile::SoParabolic => 6.0 * self.y / rho.powi(3) * s * (rho - s),
            TransitProfile::Trapezoid { accel, cruise } => {
                let r = cruise / accel;
                if s < r {
                    accel * s
                } else if s <= rho - r {
                    cruise
                } else {
                    accel * (rho - s)
                }
            }
            TransitProfile::SoVComposite { beta, t1, t2 } => {
                let a0 = 6.0 * self.y / beta.powi(3);
                if s < t1 {
                    a0 * s * (beta - s)
                } else if s <= t2 {
                    self.v_peak
                } else {
                    let w = rho - s;
                    a0 * w * (beta - w)
                }
            }
            TransitProfile::SoAComposite { beta, t1, t2 } => {
                let ubar = self.u_peak;
                if s < t1 {
                    ubar * s
                } else if s <= t2 {
                    let d = s - t1;
                    ubar * t1 + ubar * d - beta * d * d
                } else {
                    ubar * (rho - s)
                }
            }
        }
    }

    /// Tangential acceleration at absolute time `t` (0 outside [t_o, t_f]).
    pub fn u_at(&self, t: f64) -> f64 {
        if t < self.t_o || t > self.t_f {
            return 0.0;
        }
        let s = self.local(t);
        let rho = self.rho;
        match self.profile {
            TransitProfile::SoParabolic => 12.0 * self.y / rho.powi(3) * (rho / 2.0 - s),
            TransitProfile::Trapezoid { accel, cruise } => {
                let r = cruise / accel;
                if s < r {
                    accel
                } else if s <= rho - r {
                    0.0
                } else {
                    -accel
                }
            }
            TransitProfile::SoVComposite { beta, t1, t2 } => {
                let a0 = 6.0 * self.y / beta.powi(3);
                if s < t1 {
                    a0 * (beta - 2.0 * s)
                } else if s <= t2 {
                    0.0
                } else {
                    let w = rho - s;
                    -a0 * (beta - 2.0 * w)
                }
            }
            TransitProfile::SoAComposite { beta, t1, t2 } => {
                let ubar = self.u_peak;
                if s < t1 {
                    ubar
                } else if s <= t2 {
                    ubar - 2.0 * beta * (s - t1)
                } else {
                    -ubar
                }
            }
        }
    }

    /// Distance covered by absolute time `t` (closed form).
    pub fn distance_at(&self, t: f64) -> f64 {
        if t <= self.t_o {
            return 0.0;
        }
        if t >= self.t_f {
            return self.y;
        }
        let s = self.local(t);
        let rho = self.rho;
        match self.profile {
            TransitProfile::SoParabolic => {
                6.0 * self.y / rho.powi(3) * (rho * s * s / 2.0 - s.powi(3) / 3.0)
            }
            TransitProfile::Trapezoid { accel, cruise } => {
                let r = cruise / accel;
                if s < r {
                    0.5 * accel * s * s
                } else if s <= rho - r {
                    0.5 * accel * r * r + cruise * (s - r)
                } else {
                    let w = rho - s;
                    self.y - 0.5 * accel * w * w
                }
            }
            TransitProfile::SoVComposite { beta, t1, t2 } => {
                let a0 = 6.0 * self.y / beta.powi(3);
                let ramp = |q: f64| a0 * (beta * q * q / 2.0 - q.powi(3) / 3.0);
                if s < t1 {
                    ramp(s)
                } else if s <= t2 {
                    ramp(t1) + self.v_peak * (s - t1)
                } else {
                    self.y - ramp(rho - s)
                }
            }
            TransitProfile::SoAComposite { beta, t1, t2 } => {
                let ubar = self.u_peak;
                let v1 = ubar * t1;
                if s < t1 {
                    0.5 * ubar * s * s
                } else if s <= t2 {
                    let d = s - t1;
                    0.5 * ubar * t1 * t1 + v1 * d + 0.5 * ubar * d * d
                        - beta * d.powi(3) / 3.0
                } else {
                    let w = rho - s;
                    self.y - 0.5 * ubar * w * w
                }
            }
        }
    }

    /// ∫u² from departure up to absolute time `t` (closed form).
    pub fn energy_until(&self, t: f64) -> f64 {
        if t <= self.t_o {
            return 0.0;
        }
        if t >= self.t_f {
            return self.energy;
        }
        let s = self.local(t);
        let rho = self.rho;
        match self.profile {
            TransitProfile::SoParabolic => {
                let c = 12.0 * self.y / rho.powi(3);
                let half = rho / 2.0;
                c * c * (half.powi(3) - (half - s).powi(3)) / 3.0
            }
            TransitProfile::Trapezoid { accel, cruise } => {
                let r = cruise / accel;
                accel * accel * (s.min(r) + (s - (rho - r)).max(0.0))
            }
            TransitProfile::SoVComposite { beta, t1, t2 } => {
                let a0 = 6.0 * self.y / beta.powi(3);
                let ramp = |q: f64| a0 * a0 * (beta.powi(3) - (beta - 2.0 * q).powi(3)) / 6.0;
                if s < t1 {
                    ramp(s)
                } else if s <= t2 {
                    ramp(t1)
                } else {
                    ramp(t1) + ramp(t1) - ramp(rho - s)
                }
            }
            TransitProfile::SoAComposite { beta, t1, t2 } => {
                let ubar = self.u_peak;
                let mid = |d: f64| {
                    if beta > 0.0 {
                        (ubar.powi(3) - (ubar - 2.0 * beta * d).powi(3)) / (6.0 * beta)
                    } else {
                        0.0
                    }
                };
                if s < t1 {
                    ubar * ubar * s
                } else if s <= t2 {
                    ubar * ubar * t1 + mid(s - t1)
                } else {
                    ubar * ubar * t1 + mid(t2 - t1) + ubar * ubar * (s - t2)
                }
            }
        }
    }

    /// Peak |v| over [t_o, min(t, t_f)].
    pub fn peak_v_until(&self, t: f64) -> f64 {
        if t <= self.t_o {
            return 0.0;
        }
        let s = self.local(t);
        let rho = self.rho;
        let at_peak_from = match self.profile {
            TransitProfile::SoParabolic => rho / 2.0,
            TransitProfile::Trapezoid { accel, cruise } => cruise / accel,
            TransitProfile::SoVComposite { t1, .. } => t1,
            TransitProfile::SoAComposite { beta, t1, .. } => {
                if beta > 0.0 {
                    t1 + self.u_peak / (2.0 * beta)
                } else {
                    t1
                }
            }
        };
        if s >= at_peak_from {
            self.v_peak
        } else {
            self.v_at(self.t_o + s)
        }
    }

    /// Peak |u| over [t_o, min(t, t_f)]. Every profile attains its peak
    /// acceleration at departure.
    pub fn peak_u_until(&self, t: f64) -> f64 {
        if t <= self.t_o {
            0.0
        } else {
            self.u_peak
        }
    }
}

// ---------------------------------------------------------------------------
// Transversality root-finding over the piecewise value function.
// ---------------------------------------------------------------------------

/// A solved transit time with its provenance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitTime {
    pub rho: f64,
    /// False when ρ is an interior transversality root; true when it was
    /// clamped to a validity-interval or ρ_max endpoint.
    pub boundary: bool,
    /// |φ′(ρ) + α·E′(ρ)| at the returned point.
    pub residual: f64,
}

const RHO_FLOOR: f64 = 1e-6;

/// Minimizes J_H(ρ) = α·E(ρ) + J*_sH(ρ) over the curve's validity intervals
/// intersected with [lo_min, rho_max]: interior stationary points located by
/// bracketed bisection with secant polish, compared against endpoints.
fn optimal_rho<E, D>(
    vf: &dyn ValueCurve,
    alpha: f64,
    rho_max: f64,
    lo_min: f64,
    hi_max: f64,
    energy: E,
    denergy: D,
) -> Result<TransitTime>
where
    E: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    let lo_min = lo_min.max(RHO_FLOOR);
    let hi_cap = rho_max.min(hi_max).min(vf.horizon());
    if !(hi_cap > lo_min) {
        return Err(Error::Infeasible(format!(
            "empty transit-time search domain [{lo_min}, {hi_cap}]"
        )));
    }
    let g = |rho: f64| -> Result<f64> { Ok(vf.derivative(rho)? + alpha * denergy(rho)) };
    let obj = |rho: f64| -> Result<f64> { Ok(alpha * energy(rho) + vf.value(rho)?) };

    let mut candidates: Vec<(f64, bool)> = Vec::new();
    for (plo, phi) in vf.pieces() {
        let lo = plo.max(lo_min);
        let hi = phi.min(hi_cap);
        if hi <= lo {
            continue;
        }
        candidates.push((lo, false));
        candidates.push((hi, false));
        if !vf.analytic_derivative() {
            // Value-only search: coarse J_H scan, then golden-section inside
            // the best bracket. Avoids finite-difference derivative probes,
            // which cost two numerical dwell solves each.
            let n = 24usize;
            let mut xs = Vec::with_capacity(n + 1);
            let mut js = Vec::with_capacity(n + 1);
            for k in 0..=n {
                let x = lo + (hi - lo) * k as f64 / n as f64;
                xs.push(x);
                js.push(obj(x)?);
            }
            let mut kb = 0;
            for k in 1..=n {
                if js[k] < js[kb] {
                    kb = k;
                }
            }
            if kb > 0 && kb < n {
                const INV_PHI: f64 = 0.618_033_988_749_894_8;
                let (mut a, mut b) = (xs[kb - 1], xs[kb + 1]);
                let mut c = b - INV_PHI * (b - a);
                let mut d = a + INV_PHI * (b - a);
                let (mut fc, mut fd) = (obj(c)?, obj(d)?);
                for _ in 0..32 {
                    if fc < fd {
                        b = d;
                        d = c;
                        fd = fc;
                        c = b - INV_PHI * (b - a);
                        fc = obj(c)?;
                    } else {
                        a = c;
                        c = d;
                        fc = fd;
                        d = a + INV_PHI * (b - a);
                        fd = obj(d)?;
                    }
                    if b - a <= 1e-9 * (1.0 + b.abs()) {
                        break;
                    }
                }
                candidates.push((0.5 * (a + b), true));
            }
            // Best scan point at a piece edge: the endpoint candidates above
            // already cover it.
            continue;
        }
        // Bracket sign changes of g on a uniform sample.
        let n = 64;
        let mut prev_x = lo + (hi - lo) * 1e-9;
        let mut prev_g = g(prev_x)?;
        for k in 1..=n {
            let x = lo + (hi - lo) * k as f64 / n as f64;
            let x = if k == n { hi } else { x };
            let gx = g(x)?;
            if prev_g == 0.0 {
                candidates.push((prev_x, true));
            } else if prev_g * gx < 0.0 {
                // Bisection.
                let (mut xl, mut xr, mut gl) = (prev_x, x, prev_g);
                for _ in 0..200 {
                    let mid = 0.5 * (xl + xr);
                    if mid <= xl || mid >= xr {
                        break;
                    }
                    let gm = g(mid)?;
                    if gm == 0.0 {
                        xl = mid;
                        xr = mid;
                        break;
                    }
                    if gl * gm < 0.0 {
                        xr = mid;
                    } else {
                        xl = mid;
                        gl = gm;
                    }
                }
                // Secant polish.
                let mut best = 0.5 * (xl + xr);
                let mut best_g = g(best)?.abs();
                let (mut x0, mut x1) = (xl, xr);
                let (mut g0, mut g1) = (g(x0)?, g(x1)?);
                for _ in 0..8 {
                    if (g1 - g0).abs() < 1e-300 {
                        break;
                    }
                    let x2 = x1 - g1 * (x1 - x0) / (g1 - g0);
                    if !(x2 > lo && x2 < hi) {
                        break;
                    }
                    let g2 = g(x2)?;
                    if g2.abs() < best_g {
                        best = x2;
                        best_g = g2.abs();
                    }
                    x0 = x1;
                    g0 = g1;
                    x1 = x2;
                    g1 = g2;
                }
                candidates.push((best, true));
            }
            prev_x = x;
            prev_g = gx;
        }
    }
    if candidates.is_empty() {
        return Err(Error::Infeasible(
            "no transit-time candidates inside the horizon".to_string(),
        ));
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut best: Option<(f64, bool, f64)> = None;
    for (rho, interior) in candidates {
        let v = obj(rho)?;
        match best {
            Some((_, _, bv)) if v >= bv => {}
            _ => best = Some((rho, interior, v)),
        }
    }
    let (rho, interior, _) = best.expect("nonempty candidates");
    Ok(TransitTime {
        rho,
        boundary: !interior,
        residual: g(rho)?.abs(),
    })
}

/// Optimal SO transit time: solves ρ⁴·dJ*_sH/dρ = 36αy² per validity
/// interval, falling back to the J_H-minimizing endpoint when no interior
/// root exists.
pub fn so_transit_time(
    vf: &dyn ValueCurve,
    alpha: f64,
    y: f64,
    rho_max: f64,
) -> Result<TransitTime> {
    if !(y > 0.0) {
        return Err(Error::Domain(format!("edge length must be > 0, got {y}")));
    }
    optimal_rho(
        vf,
        alpha,
        rho_max,
        RHO_FLOOR,
        f64::INFINITY,
        |rho| 12.0 * y * y / rho.powi(3),
        |rho| -36.0 * y * y / rho.powi(4),
    )
}

/// Optimal FO-3 transit time: ρ⁴·dJ*_sH/dρ = (81/2)αy².
pub fn fo3_transit_time(
    vf: &dyn ValueCurve,
    alpha: f64,
    y: f64,
    rho_max: f64,
) -> Result<TransitTime> {
    if !(y > 0.0) {
        return Err(Error::Domain(format!("edge length must be > 0, got {y}")));
    }
    optimal_rho(
        vf,
        alpha,
        rho_max,
        RHO_FLOOR,
        f64::INFINITY,
        |rho| 13.5 * y * y / rho.powi(3),
        |rho| -40.5 * y * y / rho.powi(4),
    )
}

/// The SO parabolic-pulse plan for a fixed transit time.
pub fn so_profile(rho: f64, y: f64, t_o: f64) -> TransitPlan {
    TransitPlan {
        method: Method::So,
        rho,
        t_o,
        t_f: t_o + rho,
        y,
        profile: TransitProfile::SoParabolic,
        energy: 12.0 * y * y / rho.powi(3),
        v_peak: 1.5 * y / rho,
        u_peak: 6.0 * y / (rho * rho),
        boundary: false,
    }
}

/// The FO-3 equal-thirds trapezoid plan for a fixed transit time.
pub fn fo3_profile(rho: f64, y: f64, t_o: f64) -> TransitPlan {
    let cruise = 1.5 * y / rho;
    let accel = 4.5 * y / (rho * rho);
    TransitPlan {
        method: Method::Fo3,
        rho,
        t_o,
        t_f: t_o + rho,
        y,
        profile: TransitProfile::Trapezoid { accel, cruise },
        energy: 13.5 * y * y / rho.powi(3),
        v_peak: cruise,
        u_peak: accel,
        boundary: false,
    }
}

// ---------------------------------------------------------------------------
// FO-1 / FO-2 calibration and per-edge profiles.
// ---------------------------------------------------------------------------

/// FO-1 network calibration: the acceleration level u_F1 = u_SO^max and the
/// commanded average velocity v_m1 = min over qualifying edges of
/// y·u·v/(v² + y·u). Lowers the velocity cap to √(u·y_max) first if no edge
/// qualifies.
pub fn fo1_params(edge_lengths: &[f64], u_so_max: f64, v_so_max: f64) -> Result<(f64, f64)> {
    if edge_lengths.is_empty() {
        return Err(Error::Domain("no edges to calibrate on".to_string()));
    }
    if !(u_so_max > 0.0 && v_so_max > 0.0) {
        return Err(Error::Domain(
            "calibration peaks must be positive".to_string(),
        ));
    }
    let y_max = edge_lengths.iter().copied().fold(0.0_f64, f64::max);
    let v = v_so_max.min((u_so_max * y_max).sqrt());
    let v_m1 = edge_lengths
        .iter()
        .copied()
        .filter(|&y| y >= v * v / u_so_max)
        .map(|y| y * u_so_max * v / (v * v + y * u_so_max))
        .fold(f64::INFINITY, f64::min);
    if !v_m1.is_finite() {
        return Err(Error::Domain(
            "no qualifying edge for the commanded average velocity".to_string(),
        ));
    }
    Ok((u_so_max, v_m1))
}

/// FO-1 per-edge plan: a trapezoid at acceleration u_F1 whose average
/// velocity is v_m1 (cruise level from the distance-closure quadratic), or
/// the bang-bang triangle on edges too short to reach an average of v_m1.
pub fn fo1_edge_profile(y: f64, u_f1: f64, v_m1: f64) -> Result<TransitPlan> {
    if !(y > 0.0 && u_f1 > 0.0 && v_m1 > 0.0) {
        return Err(Error::Domain(
            "fo1 edge profile needs positive inputs".to_string(),
        ));
    }
    if y >= 4.0 * v_m1 * v_m1 / u_f1 {
        let rho = y / v_m1;
        let disc = (u_f1 * rho).powi(2) - 4.0 * u_f1 * y;
        let cruise = 0.5 * (u_f1 * rho - disc.max(0.0).sqrt());
        Ok(TransitPlan {
            method: Method::Fo1,
            rho,
            t_o: 0.0,
            t_f: rho,
            y,
            profile: TransitProfile::Trapezoid {
                accel: u_f1,
                cruise,
            },
            energy: 2.0 * u_f1 * cruise,
            v_peak: cruise,
            u_peak: u_f1,
            boundary: false,
        })
    } else {
        // The commanded average exceeds what the edge admits under the
        // acceleration level; the profile collapses to the triangle and the
        // traverse time follows from the profile itself.
        let cruise = (y * u_f1).sqrt();
        let rho = 2.0 * (y / u_f1).sqrt();
        Ok(TransitPlan {
            method: Method::Fo1,
            rho,
            t_o: 0.0,
            t_f: rho,
            y,
            profile: TransitProfile::Trapezoid {
                accel: u_f1,
                cruise,
            },
            energy: 2.0 * u_f1 * cruise,
            v_peak: cruise,
            u_peak: u_f1,
            boundary: false,
        })
    }
}

/// FO-2 network calibration: v_m2 = min{ (1/3)√(2·y_min·u_SO^max),
/// (2/3)·v_SO^max }.
pub fn fo2_params(edge_lengths: &[f64], u_so_max: f64, v_so_max: f64) -> Result<f64> {
    if edge_lengths.is_empty() {
        return Err(Error::Domain("no edges to calibrate on".to_string()));
    }
    if !(u_so_max > 0.0 && v_so_max > 0.0) {
        return Err(Error::Domain(
            "calibration peaks must be positive".to_string(),
        ));
    }
    let y_min = edge_lengths.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(((2.0 * y_min * u_so_max).sqrt() / 3.0).min(2.0 * v_so_max / 3.0))
}

/// FO-2 per-edge plan: the equal-thirds trapezoid with average velocity v_m2.
pub fn fo2_edge_profile(y: f64, v_m2: f64) -> Result<TransitPlan> {
    if !(y > 0.0 && v_m2 > 0.0) {
        return Err(Error::Domain(
            "fo2 edge profile needs positive inputs".to_string(),
        ));
    }
    let rho = y / v_m2;
    let cruise = 1.5 * v_m2;
    let accel = 4.5 * v_m2 * v_m2 / y;
    Ok(TransitPlan {
        method: Method::Fo2,
        rho,
        t_o: 0.0,
        t_f: rho,
        y,
        profile: TransitProfile::Trapezoid { accel, cruise },
        energy: 13.5 * v_m2.powi(3) / y,
        v_peak: cruise,
        u_peak: accel,
        boundary: false,
    })
}

// ---------------------------------------------------------------------------
// Velocity- and acceleration-bounded variants.
// ---------------------------------------------------------------------------

/// Golden-section refinement of a scalar minimum inside [lo, hi].
fn golden_min(f: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64, rel_tol: f64) -> f64 {
    let phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..200 {
        if hi - lo <= rel_tol * (1.0 + hi.abs()) {
            break;
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        x1
    } else {
        x2
    }
}

/// Coarse scan + golden-section: returns the argmin of `f` over [lo, hi].
fn scan_golden(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
    let mut best_k = 0;
    let mut best_v = f64::INFINITY;
    for k in 0..=n {
        let x = lo + (hi - lo) * k as f64 / n as f64;
        let v = f(x);
        if v < best_v {
            best_v = v;
            best_k = k;
        }
    }
    let bl = if best_k == 0 {
        lo
    } else {
        lo + (hi - lo) * (best_k - 1) as f64 / n as f64
    };
    let bh = if best_k == n {
        hi
    } else {
        lo + (hi - lo) * (best_k + 1) as f64 / n as f64
    };
    golden_min(f, bl, bh, 1e-10)
}

/// Velocity-bounded second-order transit: the parabolic pulse clipped at
/// v̄, optimized over the pulse length β. Falls back to the unconstrained SO
/// plan when the bound is slack.
pub fn sov_transit(
    vf: &dyn ValueCurve,
    alpha: f64,
    y: f64,
    v_bar: f64,
    rho_max: f64,
) -> Result<TransitPlan> {
    if !(v_bar > 0.0) {
        return Err(Error::Domain(format!("v_bar must be > 0, got {v_bar}")));
    }
    let so = so_transit_time(vf, alpha, y, rho_max)?;
    let v_so = 1.5 * y / so.rho;
    if v_bar >= v_so * (1.0 - 1e-12) {
        let mut plan = so_profile(so.rho, y, 0.0);
        plan.method = Method::Sov;
        plan.boundary = so.boundary;
        return Ok(plan);
    }
    let t_v = 1.5 * y / v_bar;
    let rho_of = |beta: f64| -> f64 {
        let c = (1.0 - beta / t_v).max(0.0);
        beta + (2.0 * t_v / 3.0) * c.powf(1.5)
    };
    let energy_of = |beta: f64| -> f64 {
        let c = (1.0 - beta / t_v).max(0.0);
        12.0 * y * y / beta.powi(3) * (1.0 - c.powf(1.5))
    };
    // ρ_SV is increasing in β with range (y/v̄, t_v]; cap β if ρ_max binds.
    let cap = rho_max.min(vf.horizon());
    if rho_of(1e-9 * t_v) > cap {
        return Err(Error::Infeasible(format!(
            "velocity bound {v_bar} cannot cover {y} within {cap}"
        )));
    }
    let mut beta_hi = t_v;
    let mut capped = false;
    if rho_of(t_v) > cap {
        capped = true;
        let (mut lo, mut hi) = (1e-9 * t_v, t_v);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if rho_of(mid) > cap {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        beta_hi = lo;
    }
    let objective = |beta: f64| -> f64 {
        let rho = rho_of(beta);
        match vf.value(rho) {
            Ok(v) => alpha * energy_of(beta) + v,
            Err(_) => f64::INFINITY,
        }
    };
    let beta = scan_golden(&objective, 1e-6 * t_v, beta_hi, 512);
    let c = (1.0 - beta / t_v).max(0.0);
    let t1 = 0.5 * beta * (1.0 - c.sqrt());
    let rho = rho_of(beta);
    Ok(TransitPlan {
        method: Method::Sov,
        rho,
        t_o: 0.0,
        t_f: rho,
        y,
        profile: TransitProfile::SoVComposite {
            beta,
            t1,
            t2: rho - t1,
        },
        energy: energy_of(beta),
        v_peak: v_bar,
        u_peak: 6.0 * y / (beta * beta),
        boundary: capped && (beta_hi - beta).abs() <= 1e-8 * t_v,
    })
}

/// Acceleration-bounded second-order transit: full-acceleration ramps joined
/// by a linear acceleration reversal of duration m = ū/β, optimized over m.
/// Falls back to the unconstrained SO plan when the bound is slack.
pub fn soa_transit(
    vf: &dyn ValueCurve,
    alpha: f64,
    y: f64,
    u_bar: f64,
    rho_max: f64,
) -> Result<TransitPlan> {
    if !(u_bar > 0.0) {
        return Err(Error::Domain(format!("u_bar must be > 0, got {u_bar}")));
    }
    let so = so_transit_time(vf, alpha, y, rho_max)?;
    let u_so = 6.0 * y / (so.rho * so.rho);
    if u_bar >= u_so * (1.0 - 1e-12) {
        let mut plan = so_profile(so.rho, y, 0.0);
        plan.method = Method::Soa;
        plan.boundary = so.boundary;
        return Ok(plan);
    }
    // Reversal duration m spans [0, √(6y/ū)]: m = 0 is the bang-bang
    // triangle, the upper end has zero cruise-entry velocity (the excluded
    // negative-radicand β region lies beyond it).
    let m_max = (6.0 * y / u_bar).sqrt();
    let v_sa_of = |m: f64| -> f64 {
        -0.5 * u_bar * m + (y * u_bar + u_bar * u_bar * m * m / 12.0).sqrt()
    };
    let rho_of = |m: f64| 2.0 * v_sa_of(m) / u_bar + m;
    let energy_of = |m: f64| 2.0 * u_bar * v_sa_of(m) + u_bar * u_bar * m / 3.0;
    let cap = rho_max.min(vf.horizon());
    if rho_of(0.0) > cap {
        return Err(Error::Infeasible(format!(
            "acceleration bound {u_bar} cannot cover {y} within {cap}"
        )));
    }
    let objective = |m: f64| -> f64 {
        let rho = rho_of(m);
        if rho > cap {
            return f64::INFINITY;
        }
        match vf.value(rho) {
            Ok(v) => alpha * energy_of(m) + v,
            Err(_) => f64::INFINITY,
        }
    };
    let m = scan_golden(&objective, 0.0, m_max, 512);
    let v_sa = v_sa_of(m);
    let rho = rho_of(m);
    let t1 = v_sa / u_bar;
    // β = ū/m is the reversal slope; 0 marks an instantaneous reversal.
    let beta = if m > 0.0 { u_bar / m } else { 0.0 };
    Ok(TransitPlan {
        method: Method::Soa,
        rho,
        t_o: 0.0,
        t_f: rho,
        y,
        profile: TransitProfile::SoAComposite {
            beta,
            t1,
            t2: t1 + m,
        },
        energy: energy_of(m),
        v_peak: v_sa + u_bar * m / 4.0,
        u_peak: u_bar,
        boundary: false,
    })
}

/// Velocity-bounded first-order transit: trapezoid cruising exactly at v̄,
/// transit time from the transversality condition with E_FV = 2v̄³/(v̄ρ − y).
/// Falls back to the FO-3 plan when the bound is slack.
pub fn fov_transit(
    vf: &dyn ValueCurve,
    alpha: f64,
    y: f64,
    v_bar: f64,
    rho_max: f64,
) -> Result<TransitPlan> {
    if !(v_bar > 0.0) {
        return Err(Error::Domain(format!("v_bar must be > 0, got {v_bar}")));
    }
    let fo3 = fo3_transit_time(vf, alpha, y, rho_max)?;
    let v_f3 = 1.5 * y / fo3.rho;
    if v_bar >= v_f3 * (1.0 - 1e-12) {
        let mut plan = fo3_profile(fo3.rho, y, 0.0);
        plan.method = Method::Fov;
        plan.boundary = fo3.boundary;
        return Ok(plan);
    }
    let lo = (y / v_bar) * (1.0 + 1e-9);
    let hi = 2.0 * y / v_bar;
    let tt = optimal_rho(
        vf,
        alpha,
        rho_max,
        lo,
        hi,
        |rho| 2.0 * v_bar.powi(3) / (v_bar * rho - y),
        |rho| -2.0 * v_bar.powi(4) / (v_bar * rho - y).powi(2),
    )?;
    let rho = tt.rho;
    let accel = v_bar * v_bar / (v_bar * rho - y);
    Ok(TransitPlan {
        method: Method::Fov,
        rho,
        t_o: 0.0,
        t_f: rho,
        y,
        profile: TransitProfile::Trapezoid {
            accel,
            cruise: v_bar,
        },
        energy: 2.0 * v_bar.powi(3) / (v_bar * rho - y),
        v_peak: v_bar,
        u_peak: accel,
        boundary: tt.boundary,
    })
}

/// Acceleration-bounded first-order transit: trapezoid with ramp slope
/// exactly ū, transit time from the transversality condition with
/// E_FA = ū²(ρ − √(ρ² − 4y/ū)). Falls back to the FO-3 plan when slack.
pub fn foa_transit(
    vf: &dyn ValueCurve,
    alpha: f64,
    y: f64,
    u_bar: f64,
    rho_max: f64,
) -> Result<TransitPlan> {
    if !(u_bar > 0.0) {
        return Err(Error::Domain(format!("u_bar must be > 0, got {u_bar}")));
    }
    let fo3 = fo3_transit_time(vf, alpha, y, rho_max)?;
    let u_f3 = 4.5 * y / (fo3.rho * fo3.rho);
    if u_bar >= u_f3 * (1.0 - 1e-12) {
        let mut plan = fo3_profile(fo3.rho, y, 0.0);
        plan.method = Method::Foa;
        plan.boundary = fo3.boundary;
        return Ok(plan);
    }
    let lo = 2.0 * (y / u_bar).sqrt() * (1.0 + 1e-12);
    let tt = optimal_rho(
        vf,
        alpha,
        rho_max,
        lo,
        f64::INFINITY,
        |rho| u_bar * u_bar * (rho - (rho * rho - 4.0 * y / u_bar).max(0.0).sqrt()),
        |rho| {
            let root = (rho * rho - 4.0 * y / u_bar).max(1e-300).sqrt();
            u_bar * u_bar * (1.0 - rho / root)
        },
    )?;
    let rho = tt.rho;
    let cruise = 0.5 * u_bar * rho - 0.5 * u_bar * (rho * rho - 4.0 * y / u_bar).max(0.0).sqrt();
    Ok(TransitPlan {
        method: Method::Foa,
        rho,
        t_o: 0.0,
        t_f: rho,
        y,
        profile: TransitProfile::Trapezoid {
            accel: u_bar,
            cruise,
        },
        energy: 2.0 * u_bar * cruise,
        v_peak: cruise,
        u_peak: u_bar,
        boundary: tt.boundary,
    })
}
