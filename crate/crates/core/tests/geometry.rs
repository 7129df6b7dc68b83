//! Geometry oracle tests: closed-form shapes against quadrature, bisection,
//! finite differences, and a forward-integrated unicycle.

use approx::assert_relative_eq;
use patrol_core::geometry::{Segment, SegmentShape};

fn line(start: [f64; 2], end: [f64; 2]) -> Segment {
    Segment::new(SegmentShape::Line, start, end).unwrap()
}

fn quarter_arc_ccw(r: f64) -> Segment {
    // Quarter circle around the origin from (r, 0) to (0, r), counterclockwise.
    Segment::new(
        SegmentShape::Arc {
            center: [0.0, 0.0],
            radius: r,
            ccw: true,
        },
        [r, 0.0],
        [0.0, r],
    )
    .unwrap()
}

fn sampled_half_circle(n: usize) -> Segment {
    // Unit half circle from (1, 0) to (-1, 0) via (0, 1), parametrized by angle.
    let points: Vec<[f64; 3]> = (0..=n)
        .map(|k| {
            let p = std::f64::consts::PI * k as f64 / n as f64;
            [p, p.cos(), p.sin()]
        })
        .collect();
    Segment::new(SegmentShape::Poly { points }, [1.0, 0.0], [-1.0, 0.0]).unwrap()
}

fn sampled_ellipse(a: f64, b: f64, n: usize) -> Segment {
    // Quarter ellipse starting at (0, -b) moving in +x: x = a sin p, y = -b cos p.
    let points: Vec<[f64; 3]> = (0..=n)
        .map(|k| {
            let p = std::f64::consts::FRAC_PI_2 * k as f64 / n as f64;
            [p, a * p.sin(), -b * p.cos()]
        })
        .collect();
    Segment::new(SegmentShape::Poly { points }, [0.0, -b], [a, 0.0]).unwrap()
}

#[test]
fn line_length_and_midpoint() {
    let seg = line([0.0, 0.0], [10.0, 0.0]);
    assert_eq!(seg.length(), 10.0);
    assert_eq!(seg.param_at_length(5.0).unwrap(), 5.0);
    assert_eq!(seg.param_at_length(0.0).unwrap(), 0.0);
}

#[test]
fn line_pose_and_heading() {
    let seg = line([0.0, 0.0], [3.0, 4.0]);
    assert_relative_eq!(seg.length(), 5.0, max_relative = 1e-15);
    let (pos, heading) = seg.position_and_heading(2.5).unwrap();
    assert_relative_eq!(pos[0], 1.5, max_relative = 1e-12);
    assert_relative_eq!(pos[1], 2.0, max_relative = 1e-12);
    assert_relative_eq!(heading, 4.0_f64.atan2(3.0), max_relative = 1e-12);
    assert_eq!(seg.curvature_at(1.0).unwrap(), 0.0);
    assert_eq!(seg.angular_velocity(2.0, 5.0).unwrap(), 0.0);
}

#[test]
fn arc_length_quarter_circle() {
    let seg = quarter_arc_ccw(10.0);
    assert_relative_eq!(seg.length(), 5.0 * std::f64::consts::PI, max_relative = 1e-12);
}

#[test]
fn arc_param_curvature_and_angular_velocity() {
    let seg = quarter_arc_ccw(10.0);
    let l = 3.0;
    assert_relative_eq!(seg.param_at_length(l).unwrap(), l / 10.0, max_relative = 1e-12);
    assert_relative_eq!(seg.curvature_at(0.3).unwrap(), 0.1, max_relative = 1e-15);
    assert_relative_eq!(seg.angular_velocity(l, 5.0).unwrap(), 0.5, max_relative = 1e-12);

    let cw = Segment::new(
        SegmentShape::Arc {
            center: [0.0, 0.0],
            radius: 10.0,
            ccw: false,
        },
        [0.0, 10.0],
        [10.0, 0.0],
    )
    .unwrap();
    assert_relative_eq!(cw.angular_velocity(l, 5.0).unwrap(), -0.5, max_relative = 1e-12);
}

#[test]
fn arc_endpoint_closure() {
    let seg = quarter_arc_ccw(10.0);
    let (pos, _) = seg.position_and_heading(seg.length()).unwrap();
    assert!((pos[0] - 0.0).abs() < 1e-9 && (pos[1] - 10.0).abs() < 1e-9);
    let (pos0, h0) = seg.position_and_heading(0.0).unwrap();
    assert!((pos0[0] - 10.0).abs() < 1e-9 && pos0[1].abs() < 1e-9);
    // Tangent at (r, 0) going counterclockwise points straight up.
    assert_relative_eq!(h0, std::f64::consts::FRAC_PI_2, max_relative = 1e-12);
}

#[test]
fn sampled_half_circle_length_is_pi() {
    let seg = sampled_half_circle(400);
    assert!((seg.length() - std::f64::consts::PI).abs() < 1e-4);
}

#[test]
fn sampled_inverse_matches_bisection_oracle() {
    // On the unit half circle arc length equals the angle parameter, so the
    // exact inverse is known independently of the cached table.
    let seg = sampled_half_circle(400);
    let y = seg.length();
    let p = seg.param_at_length(y / 2.0).unwrap();
    assert!((p - std::f64::consts::FRAC_PI_2).abs() < 1e-6);
    for frac in [0.0, 0.1, 0.25, 0.5, 0.75, 0.9, 1.0] {
        let l = frac * y;
        let p = seg.param_at_length(l).unwrap();
        assert!((p - l).abs() < 1e-6, "inverse {p} vs arc position {l}");
    }
    // Monotonicity of the inverse.
    let mut prev = -f64::INFINITY;
    for k in 0..50 {
        let l = y * k as f64 / 49.0;
        let p = seg.param_at_length(l).unwrap();
        assert!(p >= prev);
        prev = p;
    }
    // Pose agreement with the exact circle along the way.
    for frac in [0.2, 0.5, 0.8] {
        let l = frac * y;
        let (pos, heading) = seg.position_and_heading(l).unwrap();
        assert!((pos[0] - l.cos()).abs() < 1e-5);
        assert!((pos[1] - l.sin()).abs() < 1e-5);
        let want = l + std::f64::consts::FRAC_PI_2;
        let d = (heading - want).rem_euclid(std::f64::consts::TAU);
        assert!(d.min(std::f64::consts::TAU - d) < 1e-4, "heading off by {d}");
    }
}

#[test]
fn sampled_ellipse_curvature_at_start() {
    // Quarter ellipse with a = 2, b = 1: curvature at p = 0 is b/a² = 0.25.
    let seg = sampled_ellipse(2.0, 1.0, 800);
    let f = seg.curvature_at(0.0).unwrap();
    assert!((f - 0.25).abs() < 1e-3, "curvature {f} vs 0.25");
    // Same point through the path-position API: l = 0, v = 2 → w = 0.5.
    let w = seg.angular_velocity(0.0, 2.0).unwrap();
    assert!((w - 0.5).abs() < 2e-3, "angular velocity {w} vs 0.5");
    // Interior point oracle: finite differences of the exact parametrization.
    let p = 0.7_f64;
    let (xd, yd) = (2.0 * p.cos(), p.sin());
    let (xdd, ydd) = (-2.0 * p.sin(), p.cos());
    let expected = (xd * ydd - yd * xdd) / (xd * xd + yd * yd).powf(1.5);
    let got = seg.curvature_at(p).unwrap();
    assert!(
        (got - expected).abs() < 1e-3 * expected.abs().max(1.0),
        "curvature {got} vs {expected}"
    );
}

#[test]
fn sampled_rejects_bad_inputs() {
    let too_few = SegmentShape::Poly {
        points: vec![[0.0, 0.0, 0.0], [1.0, 1.0, 0.0], [2.0, 2.0, 0.0]],
    };
    assert!(Segment::new(too_few, [0.0, 0.0], [2.0, 0.0]).is_err());

    let not_increasing = SegmentShape::Poly {
        points: vec![
            [0.0, 0.0, 0.0],
            [1.0, 1.0, 0.0],
            [1.0, 2.0, 0.0],
            [2.0, 3.0, 0.0],
        ],
    };
    assert!(Segment::new(not_increasing, [0.0, 0.0], [3.0, 0.0]).is_err());

    // Degenerate tangent: the curve doubles back through a cusp.
    let cusp: Vec<[f64; 3]> = (0..=20)
        .map(|k| {
            let p = -1.0 + 2.0 * k as f64 / 20.0;
            [p, p * p, 0.0]
        })
        .collect();
    assert!(Segment::new(SegmentShape::Poly { points: cusp }, [1.0, 0.0], [1.0, 0.0]).is_err());
}

#[test]
fn endpoint_mismatch_is_rejected() {
    assert!(Segment::new(
        SegmentShape::Arc {
            center: [0.0, 0.0],
            radius: 10.0,
            ccw: true,
        },
        [10.0, 0.0],
        [0.0, 9.5],
    )
    .is_err());
}

/// Forward-integrate the unicycle with RK4 at step 1e-3 using the segment's
/// angular-velocity law and check the landing pose against the closed form.
fn unicycle_check(seg: &Segment, description: &str) {
    let y = seg.length();
    // Smooth speed profile with ∫v = y over [0, rho]: the parabolic pulse.
    let rho = 7.0_f64;
    let v = |t: f64| 6.0 * y / rho.powi(3) * t * (rho - t);
    let (start, theta0) = seg.position_and_heading(0.0).unwrap();
    let mut state = [start[0], start[1], theta0, 0.0]; // x, y, heading, distance
    let h = 1e-3;
    let deriv = |s: &[f64; 4], t: f64| -> [f64; 4] {
        let speed = v(t);
        let l = s[3].clamp(0.0, y);
        let w = seg.angular_velocity(l, speed).unwrap();
        [speed * s[2].cos(), speed * s[2].sin(), w, speed]
    };
    let steps = (rho / h).round() as usize;
    for k in 0..steps {
        let t = k as f64 * h;
        let k1 = deriv(&state, t);
        let s2 = add(&state, &k1, h / 2.0);
        let k2 = deriv(&s2, t + h / 2.0);
        let s3 = add(&state, &k2, h / 2.0);
        let k3 = deriv(&s3, t + h / 2.0);
        let s4 = add(&state, &k3, h);
        let k4 = deriv(&s4, t + h);
        for i in 0..4 {
            state[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    let (end, _) = seg.position_and_heading(y).unwrap();
    let err = ((state[0] - end[0]).powi(2) + (state[1] - end[1]).powi(2)).sqrt();
    assert!(
        err < 1e-4 * y,
        "{description}: unicycle landed {err} away (limit {})",
        1e-4 * y
    );
}

fn add(s: &[f64; 4], k: &[f64; 4], h: f64) -> [f64; 4] {
    [s[0] + k[0] * h, s[1] + k[1] * h, s[2] + k[2] * h, s[3] + k[3] * h]
}

#[test]
fn unicycle_consistency_on_arc_and_line() {
    unicycle_check(&quarter_arc_ccw(10.0), "ccw quarter arc");
    let cw = Segment::new(
        SegmentShape::Arc {
            center: [0.0, 0.0],
            radius: 6.0,
            ccw: false,
        },
        [0.0, 6.0],
        [6.0, 0.0],
    )
    .unwrap();
    unicycle_check(&cw, "cw quarter arc");
    unicycle_check(&line([0.0, 0.0], [30.0, 40.0]), "line");
}

#[test]
fn shape_serde_round_trip() {
    for (json, want) in [
        (r#"{"type":"line"}"#, SegmentShape::Line),
        (
            r#"{"type":"arc","center":[1.0,2.0],"radius":3.0,"ccw":true}"#,
            SegmentShape::Arc {
                center: [1.0, 2.0],
                radius: 3.0,
                ccw: true,
            },
        ),
    ] {
        let shape: SegmentShape = serde_json::from_str(json).unwrap();
        assert_eq!(shape, want);
    }
    let poly = SegmentShape::Poly {
        points: vec![
            [0.0, 0.0, 0.0],
            [1.0, 1.0, 0.5],
            [2.0, 2.0, 0.0],
            [3.0, 3.0, -0.5],
        ],
    };
    let round: SegmentShape = serde_json::from_str(&serde_json::to_string(&poly).unwrap()).unwrap();
    assert_eq!(round, poly);
}
