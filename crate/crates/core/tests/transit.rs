//! Transit-planning tests: transversality roots on synthetic and real value
//! curves, frozen calibration numbers for the fixed-time first-order methods,
//! profile-shape identities, quadrature cross-checks of every closed-form
//! integral, and dense-scan optimality oracles for the bounded variants.

use patrol_core::sensing::{value_fn, NeighborTarget, NeighborhoodSnapshot, RhcpForm};
use patrol_core::transit::{
    fo1_edge_profile, fo1_params, fo2_edge_profile, fo2_params, fo3_profile, fo3_transit_time,
    foa_transit, fov_transit, so_profile, so_transit_time, soa_transit, sov_transit, Method,
    MethodParams, TransitPlan, TransitProfile, ValueCurve,
};
use patrol_core::{Error, Result};

/// Affine sensing-value curve φ(ρ) = base + slope·ρ on (0, H].
struct AffineCurve {
    h: f64,
    base: f64,
    slope: f64,
}

impl ValueCurve for AffineCurve {
    fn horizon(&self) -> f64 {
        self.h
    }
    fn pieces(&self) -> Vec<(f64, f64)> {
        vec![(0.0, self.h)]
    }
    fn value(&self, rho: f64) -> Result<f64> {
        Ok(self.base + self.slope * rho)
    }
    fn derivative(&self, _rho: f64) -> Result<f64> {
        Ok(self.slope)
    }
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

/// Composite Simpson on one smooth piece.
fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = if n % 2 == 0 { n } else { n + 1 };
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + h * k as f64);
    }
    acc * h / 3.0
}

/// Simpson across the profile's smooth pieces. Each piece is inset by a
/// relative epsilon so no sample lands exactly on a control discontinuity
/// (the integrand's value at a measure-zero kink is a convention).
fn simpson_pieces(f: &dyn Fn(f64) -> f64, breaks: &[f64], n_per: usize) -> f64 {
    let mut total = 0.0;
    for pair in breaks.windows(2) {
        let w = pair[1] - pair[0];
        if w > 1e-15 {
            let d = 1e-11 * w;
            total += simpson(f, pair[0] + d, pair[1] - d, n_per);
        }
    }
    total
}

/// Kink times of a plan's velocity profile, clipped to [t_o, t].
fn breaks_until(p: &TransitPlan, t: f64) -> Vec<f64> {
    let mut b = vec![p.t_o];
    let inner: Vec<f64> = match p.profile {
        TransitProfile::SoParabolic => vec![p.rho / 2.0],
        TransitProfile::Trapezoid { accel, cruise } => {
            let r = cruise / accel;
            vec![r, p.rho - r]
        }
        TransitProfile::SoVComposite { t1, t2, .. } | TransitProfile::SoAComposite { t1, t2, .. } => {
            vec![t1, t2]
        }
    };
    for s in inner {
        let abs = p.t_o + s;
        if abs < t {
            b.push(abs);
        }
    }
    b.push(t.min(p.t_f));
    b.sort_by(f64::total_cmp);
    b
}

/// Full-profile invariants every plan must satisfy: rest-to-rest, exact
/// distance closure, energy/distance partial integrals against quadrature,
/// and peak consistency.
fn check_plan(p: &TransitPlan, tol_scale: f64) {
    assert!(p.rho > 0.0);
    assert!(rel_close(p.t_f, p.t_o + p.rho, 1e-12));
    // Rest to rest.
    assert!(p.v_at(p.t_o).abs() <= 1e-9 * tol_scale);
    assert!(p.v_at(p.t_f).abs() <= 1e-9 * tol_scale);
    // Distance closes on the edge length.
    assert!(
        rel_close(p.distance_at(p.t_f), p.y, 1e-9),
        "closure: {} vs {}",
        p.distance_at(p.t_f),
        p.y
    );
    // Energy matches ∫u² by quadrature.
    let breaks = breaks_until(p, p.t_f);
    let e = simpson_pieces(&|t| p.u_at(t) * p.u_at(t), &breaks, 2000);
    assert!(rel_close(e, p.energy, 1e-8), "energy {} vs {}", e, p.energy);
    assert!(rel_close(p.energy_until(p.t_f), p.energy, 1e-12));
    // Partial integrals at interior times.
    for frac in [0.23, 0.5, 0.81] {
        let t = p.t_o + frac * p.rho;
        let breaks = breaks_until(p, t);
        let e_part = simpson_pieces(&|x| p.u_at(x) * p.u_at(x), &breaks, 2000);
        assert!(
            (p.energy_until(t) - e_part).abs() <= 1e-8 * (1.0 + e_part.abs()),
            "partial energy at {frac}: {} vs {}",
            p.energy_until(t),
            e_part
        );
        let d_part = simpson_pieces(&|x| p.v_at(x), &breaks, 2000);
        assert!(
            (p.distance_at(t) - d_part).abs() <= 1e-8 * (1.0 + d_part.abs()),
            "partial distance at {frac}: {} vs {}",
            p.distance_at(t),
            d_part
        );
    }
    // Sampled peaks agree with the reported ones.
    let mut vmax = 0.0_f64;
    let mut umax = 0.0_f64;
    for k in 0..=4000 {
        let t = p.t_o + p.rho * k as f64 / 4000.0;
        vmax = vmax.max(p.v_at(t).abs());
        umax = umax.max(p.u_at(t).abs());
    }
    assert!(vmax <= p.v_peak * (1.0 + 1e-9) + 1e-12);
    assert!(rel_close(vmax, p.v_peak, 1e-5), "vmax {} vs {}", vmax, p.v_peak);
    assert!(umax <= p.u_peak * (1.0 + 1e-9) + 1e-12);
    assert!(rel_close(umax, p.u_peak, 1e-5), "umax {} vs {}", umax, p.u_peak);
    // Running peak tracker is monotone and lands on the reported peak.
    let mut prev = 0.0;
    for k in 0..=100 {
        let t = p.t_o + p.rho * k as f64 / 100.0;
        let pv = p.peak_v_until(t);
        assert!(pv + 1e-12 >= prev);
        prev = pv;
    }
    assert!(rel_close(p.peak_v_until(p.t_f), p.v_peak, 1e-9));
    assert!(rel_close(p.peak_u_until(p.t_f), p.u_peak, 1e-9));
}

// ---------------------------------------------------------------------------
// Second-order transversality and profile.
// ---------------------------------------------------------------------------

#[test]
fn so_transit_time_solves_transversality_on_affine_curve() {
    // φ' = 3/2, α = 1/2, y = 50: ρ⁴·φ' = 36αy² gives ρ = 30000^(1/4).
    let vf = AffineCurve { h: 250.0, base: 10.0, slope: 1.5 };
    let tt = so_transit_time(&vf, 0.5, 50.0, 250.0).unwrap();
    assert!(rel_close(tt.rho, 30000f64.powf(0.25), 1e-9));
    assert!(!tt.boundary);
    assert!(tt.residual <= 1e-8);
}

#[test]
fn so_transit_time_matches_on_real_departure_curve() {
    // A snapshot whose growth dominates removal yields the same affine value
    // curve with slope Ā/2 = 3/2 through the real sensing layer.
    let snap = NeighborhoodSnapshot {
        t_s: 0.0,
        current: 0,
        members: vec![
            NeighborTarget { id: 0, a: 1.0, b: 2.5, r: 5.0 },
            NeighborTarget { id: 1, a: 2.0, b: 2.5, r: 5.0 },
        ],
        horizon: 250.0,
    };
    let vf = value_fn(&snap, 1, RhcpForm::Rhcp3).unwrap();
    let tt = so_transit_time(&vf, 0.5, 50.0, 250.0).unwrap();
    assert!(rel_close(tt.rho, 30000f64.powf(0.25), 1e-9));
    assert!(!tt.boundary);
}

#[test]
fn so_transit_time_scales_with_fourth_root_of_energy_weight() {
    let vf = AffineCurve { h: 500.0, base: 0.0, slope: 1.5 };
    let a = so_transit_time(&vf, 0.4, 30.0, 500.0).unwrap();
    let b = so_transit_time(&vf, 0.8, 30.0, 500.0).unwrap();
    assert!(rel_close(b.rho / a.rho, 2f64.powf(0.25), 1e-9));
}

#[test]
fn so_transit_time_clamps_to_boundary_when_value_always_decreasing() {
    // φ strictly decreasing: waiting longer always helps the sensing side and
    // saves energy, so the optimum pins to the largest admissible ρ.
    let vf = AffineCurve { h: 100.0, base: 400.0, slope: -1.0 };
    let tt = so_transit_time(&vf, 0.5, 50.0, 80.0).unwrap();
    assert!(rel_close(tt.rho, 80.0, 1e-12));
    assert!(tt.boundary);
}

#[test]
fn so_transit_time_rejects_bad_edge_length() {
    let vf = AffineCurve { h: 100.0, base: 0.0, slope: 1.0 };
    assert!(matches!(
        so_transit_time(&vf, 0.5, 0.0, 100.0),
        Err(Error::Domain(_))
    ));
}

#[test]
fn so_profile_frozen_numbers_and_symmetry() {
    // y = 50, ρ = 10: peak velocity 1.5y/ρ = 7.5, peak acceleration
    // 6y/ρ² = 3, energy 12y²/ρ³ = 30.
    let p = so_profile(10.0, 50.0, 0.0);
    assert!(rel_close(p.v_peak, 7.5, 1e-12));
    assert!(rel_close(p.u_peak, 3.0, 1e-12));
    assert!(rel_close(p.energy, 30.0, 1e-12));
    check_plan(&p, 10.0);
    // v symmetric, u antisymmetric about the midpoint.
    for t in [1.0, 2.5, 4.0] {
        assert!(rel_close(p.v_at(t), p.v_at(10.0 - t), 1e-12));
        assert!((p.u_at(t) + p.u_at(10.0 - t)).abs() <= 1e-12);
    }
    assert!(rel_close(p.v_at(5.0), 7.5, 1e-12));
    assert!(p.u_at(5.0).abs() <= 1e-12);
    // Outside the transit the agent is parked.
    assert_eq!(p.v_at(-1.0), 0.0);
    assert_eq!(p.v_at(11.0), 0.0);
    assert_eq!(p.distance_at(11.0), 50.0);
}

#[test]
fn plan_anchoring_shifts_times_only() {
    let p = so_profile(10.0, 50.0, 0.0).anchored(33.0);
    assert_eq!(p.t_o, 33.0);
    assert_eq!(p.t_f, 43.0);
    assert!(rel_close(p.v_at(38.0), 7.5, 1e-12));
    assert_eq!(p.distance_at(33.0), 0.0);
    assert_eq!(p.distance_at(43.0), 50.0);
}

// ---------------------------------------------------------------------------
// Fixed-time first-order methods (network-calibrated).
// ---------------------------------------------------------------------------

#[test]
fn fo1_calibration_frozen_numbers() {
    // One 50-long edge, calibration peaks u = 9, v = 6: the commanded average
    // velocity is y·u·v/(v² + y·u) = 2700/486 = 50/9.
    let (u, vm) = fo1_params(&[50.0], 9.0, 6.0).unwrap();
    assert_eq!(u, 9.0);
    assert!(rel_close(vm, 50.0 / 9.0, 1e-12));
    // The edge profile is a trapezoid with ρ = y/v_m = 9 whose cruise solves
    // the distance closure quadratic: v = 6, energy 2uv = 108.
    let p = fo1_edge_profile(50.0, u, vm).unwrap();
    assert!(rel_close(p.rho, 9.0, 1e-12));
    assert!(rel_close(p.v_peak, 6.0, 1e-12));
    assert!(rel_close(p.energy, 108.0, 1e-12));
    assert_eq!(p.method, Method::Fo1);
    check_plan(&p, 10.0);
    // A shorter edge lowers the network minimum.
    let (_, vm2) = fo1_params(&[50.0, 4.0], 9.0, 6.0).unwrap();
    assert!(rel_close(vm2, 3.0, 1e-12));
    // When no edge can reach the raw velocity peak, the effective peak drops
    // to √(u·y_max) before the average is computed.
    let (_, vm3) = fo1_params(&[2.0], 9.0, 6.0).unwrap();
    assert!(rel_close(vm3, 18f64.sqrt() / 2.0, 1e-12));
}

#[test]
fn fo1_short_edge_collapses_to_triangle() {
    // y = 1 < 4·v_m²/u: the bang-bang triangle with v = √(y·u) = 3 and
    // ρ = 2√(y/u) = 2/3 (the commanded average is unreachable on this edge).
    let p = fo1_edge_profile(1.0, 9.0, 50.0 / 9.0).unwrap();
    assert!(rel_close(p.v_peak, 3.0, 1e-12));
    assert!(rel_close(p.rho, 2.0 / 3.0, 1e-12));
    assert!(rel_close(p.energy, 54.0, 1e-12));
    check_plan(&p, 10.0);
}

#[test]
fn fo2_calibration_frozen_numbers_and_profile_ratios() {
    // y_min = 50, u = 9, v = 6: v_m = min{√(2·50·9)/3, 2·6/3} = min{10, 4}.
    let vm = fo2_params(&[50.0, 120.0], 9.0, 6.0).unwrap();
    assert!(rel_close(vm, 4.0, 1e-12));
    let p = fo2_edge_profile(50.0, vm).unwrap();
    assert!(rel_close(p.rho, 12.5, 1e-12));
    assert!(rel_close(p.v_peak, 6.0, 1e-12));
    assert!(rel_close(p.u_peak, 1.44, 1e-12));
    assert!(rel_close(p.energy, 17.28, 1e-12));
    assert_eq!(p.method, Method::Fo2);
    check_plan(&p, 10.0);
    // Equal-thirds trapezoid vs the parabolic pulse at the same (y, ρ):
    // same peak velocity, 3/4 the peak acceleration, 9/8 the energy.
    let so = so_profile(p.rho, 50.0, 0.0);
    assert!(rel_close(p.v_peak / so.v_peak, 1.0, 1e-12));
    assert!(rel_close(p.u_peak / so.u_peak, 0.75, 1e-12));
    assert!(rel_close(p.energy / so.energy, 1.125, 1e-12));
    // The calibrated acceleration never exceeds the calibration peak.
    assert!(p.u_peak <= 9.0 + 1e-12);
}

#[test]
fn fo_calibration_rejects_degenerate_networks() {
    assert!(fo1_params(&[], 9.0, 6.0).is_err());
    assert!(fo2_params(&[], 9.0, 6.0).is_err());
    assert!(fo1_params(&[10.0], 0.0, 6.0).is_err());
    assert!(fo2_params(&[10.0], 9.0, -1.0).is_err());
}

// ---------------------------------------------------------------------------
// FO-3: re-optimized trapezoid.
// ---------------------------------------------------------------------------

#[test]
fn fo3_transversality_and_shape_identities() {
    // Same affine curve as the second-order case: ρ⁴·φ' = 40.5·αy² gives
    // ρ = 33750^(1/4); the trapezoid relates to the parabolic optimum through
    // k = (81/72)^(1/4).
    let vf = AffineCurve { h: 250.0, base: 10.0, slope: 1.5 };
    let so = so_transit_time(&vf, 0.5, 50.0, 250.0).unwrap();
    let f3 = fo3_transit_time(&vf, 0.5, 50.0, 250.0).unwrap();
    assert!(rel_close(f3.rho, 33750f64.powf(0.25), 1e-9));
    assert!(!f3.boundary);
    let k = (81f64 / 72.0).powf(0.25);
    assert!(rel_close(f3.rho, k * so.rho, 1e-9));
    assert!(f3.rho >= so.rho);

    let pso = so_profile(so.rho, 50.0, 0.0);
    let pf3 = fo3_profile(f3.rho, 50.0, 0.0);
    assert!(rel_close(pf3.v_peak, pso.v_peak / k, 1e-9));
    assert!(rel_close(pf3.u_peak, 3.0 * pso.u_peak / (4.0 * k * k), 1e-9));
    assert!(rel_close(pf3.energy, 9.0 * pso.energy / (8.0 * k * k * k), 1e-9));
    check_plan(&pf3, 10.0);
    // Equal thirds: ramp time = cruise time = ρ/3.
    if let TransitProfile::Trapezoid { accel, cruise } = pf3.profile {
        assert!(rel_close(cruise / accel, pf3.rho / 3.0, 1e-12));
    } else {
        panic!("fo3 profile must be a trapezoid");
    }
}

// ---------------------------------------------------------------------------
// Bounded variants: fallbacks, tight bounds, scan-oracle optimality.
// ---------------------------------------------------------------------------

const AFFINE: AffineCurve = AffineCurve { h: 250.0, base: 10.0, slope: 1.5 };
const ALPHA: f64 = 0.5;
const Y: f64 = 50.0;

#[test]
fn sov_falls_back_to_parabola_when_bound_is_slack() {
    let so = so_transit_time(&AFFINE, ALPHA, Y, 250.0).unwrap();
    let p = sov_transit(&AFFINE, ALPHA, Y, 10.0, 250.0).unwrap();
    assert_eq!(p.method, Method::Sov);
    assert!(matches!(p.profile, TransitProfile::SoParabolic));
    assert!(rel_close(p.rho, so.rho, 1e-12));
}

#[test]
fn sov_binding_bound_clips_parabola_and_optimizes_pulse() {
    let vbar = 4.0; // below the unconstrained peak ≈ 5.70
    let p = sov_transit(&AFFINE, ALPHA, Y, vbar, 250.0).unwrap();
    assert!(matches!(p.profile, TransitProfile::SoVComposite { .. }));
    assert!(rel_close(p.v_peak, vbar, 1e-12));
    check_plan(&p, 10.0);
    // The bound is genuinely active: sampled velocity reaches it.
    let mut vmax = 0.0_f64;
    for k in 0..=8000 {
        vmax = vmax.max(p.v_at(p.t_o + p.rho * k as f64 / 8000.0));
    }
    assert!(vmax <= vbar * (1.0 + 1e-9));
    assert!(rel_close(vmax, vbar, 1e-6));
    // Scan oracle over the pulse length β: the returned plan's cost is the
    // scan minimum.
    let t_v = 1.5 * Y / vbar;
    let j_of = |beta: f64| -> f64 {
        let c: f64 = (1.0 - beta / t_v).max(0.0);
        let rho = beta + (2.0 * t_v / 3.0) * c.powf(1.5);
        let e = 12.0 * Y * Y / beta.powi(3) * (1.0 - c.powf(1.5));
        ALPHA * e + AFFINE.value(rho).unwrap()
    };
    let mut scan = f64::INFINITY;
    for k in 1..=4096 {
        scan = scan.min(j_of(t_v * k as f64 / 4096.0));
    }
    let got = ALPHA * p.energy + AFFINE.value(p.rho).unwrap();
    assert!(
        got <= scan + 1e-6 * (1.0 + scan.abs()),
        "sov {} vs scan {}",
        got,
        scan
    );
    // Transit takes longer than the cruise-limit y/v̄ but no longer than the
    // unclipped pulse at this peak.
    assert!(p.rho > Y / vbar && p.rho <= t_v + 1e-9);
}

#[test]
fn sov_infeasible_when_bound_cannot_cover_edge_within_horizon() {
    assert!(matches!(
        sov_transit(&AFFINE, ALPHA, Y, 0.1, 250.0),
        Err(Error::Infeasible(_))
    ));
}

#[test]
fn soa_falls_back_to_parabola_when_bound_is_slack() {
    let so = so_transit_time(&AFFINE, ALPHA, Y, 250.0).unwrap();
    let p = soa_transit(&AFFINE, ALPHA, Y, 5.0, 250.0).unwrap();
    assert!(matches!(p.profile, TransitProfile::SoParabolic));
    assert!(rel_close(p.rho, so.rho, 1e-12));
}

#[test]
fn soa_binding_bound_saturates_acceleration() {
    let ubar = 1.0; // below the unconstrained peak ≈ 1.73
    let p = soa_transit(&AFFINE, ALPHA, Y, ubar, 250.0).unwrap();
    assert!(matches!(p.profile, TransitProfile::SoAComposite { .. }));
    assert!(rel_close(p.u_peak, ubar, 1e-12));
    check_plan(&p, 10.0);
    let mut umax = 0.0_f64;
    for k in 0..=8000 {
        umax = umax.max(p.u_at(p.t_o + p.rho * k as f64 / 8000.0).abs());
    }
    assert!(umax <= ubar * (1.0 + 1e-9));
    assert!(rel_close(umax, ubar, 1e-6));
    // Scan oracle over the reversal duration m.
    let m_max = (6.0 * Y / ubar).sqrt();
    let j_of = |m: f64| -> f64 {
        let v = -0.5 * ubar * m + (Y * ubar + ubar * ubar * m * m / 12.0).sqrt();
        let rho = 2.0 * v / ubar + m;
        let e = 2.0 * ubar * v + ubar * ubar * m / 3.0;
        ALPHA * e + AFFINE.value(rho).unwrap()
    };
    let mut scan = f64::INFINITY;
    for k in 0..=4096 {
        scan = scan.min(j_of(m_max * k as f64 / 4096.0));
    }
    let got = ALPHA * p.energy + AFFINE.value(p.rho).unwrap();
    assert!(
        got <= scan + 1e-6 * (1.0 + scan.abs()),
        "soa {} vs scan {}",
        got,
        scan
    );
}

#[test]
fn fov_falls_back_to_trapezoid_when_bound_is_slack() {
    let f3 = fo3_transit_time(&AFFINE, ALPHA, Y, 250.0).unwrap();
    let p = fov_transit(&AFFINE, ALPHA, Y, 10.0, 250.0).unwrap();
    assert_eq!(p.method, Method::Fov);
    assert!(rel_close(p.rho, f3.rho, 1e-12));
    if let TransitProfile::Trapezoid { accel, cruise } = p.profile {
        assert!(rel_close(cruise / accel, p.rho / 3.0, 1e-12));
    } else {
        panic!("expected trapezoid");
    }
}

#[test]
fn fov_binding_bound_cruises_at_limit_with_transversality_root() {
    let vbar = 4.0; // below the unconstrained cruise ≈ 5.53
    let p = fov_transit(&AFFINE, ALPHA, Y, vbar, 250.0).unwrap();
    assert!(rel_close(p.v_peak, vbar, 1e-12));
    check_plan(&p, 10.0);
    // Interior transversality root in closed form:
    // φ' = 2αv̄⁴/(v̄ρ − y)² ⟹ ρ = (y + v̄²·√(2α/φ'))/v̄.
    let expect = (Y + vbar * vbar * (2.0 * ALPHA / 1.5).sqrt()) / vbar;
    assert!(!p.boundary);
    assert!(rel_close(p.rho, expect, 1e-9), "{} vs {}", p.rho, expect);
    // Stays inside the admissible band (cruise must exist and ramps fit).
    assert!(p.rho > Y / vbar && p.rho <= 2.0 * Y / vbar + 1e-9);
    // Scan oracle over ρ.
    let j_of = |rho: f64| ALPHA * 2.0 * vbar.powi(3) / (vbar * rho - Y) + AFFINE.value(rho).unwrap();
    let (lo, hi) = (Y / vbar * (1.0 + 1e-6), 2.0 * Y / vbar);
    let mut scan = f64::INFINITY;
    for k in 0..=8192 {
        scan = scan.min(j_of(lo + (hi - lo) * k as f64 / 8192.0));
    }
    let got = ALPHA * p.energy + AFFINE.value(p.rho).unwrap();
    assert!(got <= scan + 1e-6 * (1.0 + scan.abs()));
}

#[test]
fn foa_falls_back_to_trapezoid_when_bound_is_slack() {
    let f3 = fo3_transit_time(&AFFINE, ALPHA, Y, 250.0).unwrap();
    let p = foa_transit(&AFFINE, ALPHA, Y, 5.0, 250.0).unwrap();
    assert_eq!(p.method, Method::Foa);
    assert!(rel_close(p.rho, f3.rho, 1e-12));
}

#[test]
fn foa_binding_bound_ramps_at_limit_with_transversality_root() {
    let ubar = 0.8; // below the unconstrained ramp ≈ 1.22
    let p = foa_transit(&AFFINE, ALPHA, Y, ubar, 250.0).unwrap();
    assert!(rel_close(p.u_peak, ubar, 1e-12));
    check_plan(&p, 10.0);
    // Interior root: φ' = αū²(ρ/√(ρ² − 4y/ū) − 1) ⟹ with q = 1 + φ'/(αū²),
    // ρ² = (4y/ū)·q²/(q² − 1).
    let q = 1.0 + 1.5 / (ALPHA * ubar * ubar);
    let expect = ((4.0 * Y / ubar) * q * q / (q * q - 1.0)).sqrt();
    assert!(!p.boundary);
    assert!(rel_close(p.rho, expect, 1e-9), "{} vs {}", p.rho, expect);
    assert!(p.rho >= 2.0 * (Y / ubar).sqrt());
    // Scan oracle over ρ.
    let j_of = |rho: f64| {
        let e = ubar * ubar * (rho - (rho * rho - 4.0 * Y / ubar).max(0.0).sqrt());
        ALPHA * e + AFFINE.value(rho).unwrap()
    };
    let lo = 2.0 * (Y / ubar).sqrt() * (1.0 + 1e-9);
    let mut scan = f64::INFINITY;
    for k in 0..=8192 {
        scan = scan.min(j_of(lo + (250.0 - lo) * k as f64 / 8192.0));
    }
    let got = ALPHA * p.energy + AFFINE.value(p.rho).unwrap();
    assert!(got <= scan + 1e-6 * (1.0 + scan.abs()));
}

#[test]
fn bounded_methods_on_real_value_curve() {
    // End-to-end through the sensing layer: a curve with idle branches.
    let snap = NeighborhoodSnapshot {
        t_s: 0.0,
        current: 0,
        members: vec![
            NeighborTarget { id: 0, a: 2.0, b: 9.0, r: 50.0 },
            NeighborTarget { id: 1, a: 1.0, b: 10.0, r: 100.0 },
        ],
        horizon: 250.0,
    };
    let vf = value_fn(&snap, 1, RhcpForm::Rhcp3).unwrap();
    let so = so_transit_time(&vf, 0.3, 30.0, 250.0).unwrap();
    assert!(so.rho > 0.0 && so.rho <= 250.0);
    // Dense-scan oracle for the unconstrained transit time.
    let mut scan = f64::INFINITY;
    for k in 1..=20000 {
        let rho = 250.0 * k as f64 / 20000.0;
        let j = 0.3 * 12.0 * 30.0 * 30.0 / rho.powi(3) + vf.value(rho).unwrap();
        scan = scan.min(j);
    }
    let got = 0.3 * 12.0 * 900.0 / so.rho.powi(3) + vf.value(so.rho).unwrap();
    assert!(got <= scan + 1e-6 * (1.0 + scan.abs()), "{} vs {}", got, scan);

    for plan in [
        sov_transit(&vf, 0.3, 30.0, 2.0, 250.0).unwrap(),
        soa_transit(&vf, 0.3, 30.0, 0.5, 250.0).unwrap(),
        fov_transit(&vf, 0.3, 30.0, 2.0, 250.0).unwrap(),
        foa_transit(&vf, 0.3, 30.0, 0.5, 250.0).unwrap(),
    ] {
        check_plan(&plan, 5.0);
        assert!(plan.rho <= 250.0);
    }
}

// ---------------------------------------------------------------------------
// Method tags and parameter validation.
// ---------------------------------------------------------------------------

#[test]
fn method_tags_round_trip() {
    for (m, s) in [
        (Method::So, "SO"),
        (Method::Fo1, "FO1"),
        (Method::Fo2, "FO2"),
        (Method::Fo3, "FO3"),
        (Method::Sov, "SOV"),
        (Method::Soa, "SOA"),
        (Method::Fov, "FOV"),
        (Method::Foa, "FOA"),
    ] {
        assert_eq!(m.as_str(), s);
        assert_eq!(s.parse::<Method>().unwrap(), m);
        assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{s}\""));
    }
    assert!("so".parse::<Method>().is_err());
}

#[test]
fn method_params_validation() {
    let ok = MethodParams {
        method: Method::So,
        alpha: 0.5,
        v_bar: None,
        u_bar: None,
        u_so_max: None,
        v_so_max: None,
    };
    assert!(ok.validate().is_ok());
    let mut bad = ok.clone();
    bad.alpha = 0.0;
    assert!(bad.validate().is_err());
    let mut sov = ok.clone();
    sov.method = Method::Sov;
    assert!(sov.validate().is_err());
    sov.v_bar = Some(2.0);
    assert!(sov.validate().is_ok());
    let mut foa = ok.clone();
    foa.method = Method::Foa;
    assert!(foa.validate().is_err());
    foa.u_bar = Some(1.0);
    assert!(foa.validate().is_ok());
}
