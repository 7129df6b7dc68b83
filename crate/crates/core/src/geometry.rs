//! Path segments between targets: arc length, curvature, pose lookup, and the
//! heading rate a unicycle agent needs to stay on the path at a given speed.
//! Also the target network itself — validated targets plus the directed
//! segments connecting them.
//!
//! Three shapes are supported: straight lines, circular arcs with an explicit
//! orientation, and sampled parametric curves `(p, x, y)`. Lines and arcs are
//! handled in closed form; sampled curves get centered finite-difference
//! derivatives on the sample grid, Simpson arc length, and a cached cumulative
//! length table so queries along the path are O(log n).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::targets::TargetParams;
use crate::{Error, Result};

/// Shape of a path segment, as declared in config files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum SegmentShape {
    /// Straight line between the two endpoint targets.
    Line,
    /// Circular arc through the two endpoints around `center`, swept
    /// counterclockwise when `ccw` is true.
    Arc {
        center: [f64; 2],
        radius: f64,
        ccw: bool,
    },
    /// Sampled parametric curve: at least 4 `[p, x, y]` rows with strictly
    /// increasing `p`, starting at the source target and ending at the
    /// destination target.
    Poly { points: Vec<[f64; 3]> },
}

/// Absolute tolerance for endpoint closure checks.
const ENDPOINT_TOL: f64 = 1e-9;

#[derive(Clone, Debug)]
enum SegKind {
    Line {
        dir: [f64; 2],
        heading: f64,
    },
    Arc {
        center: [f64; 2],
        radius: f64,
        ccw: bool,
        theta0: f64,
        sweep: f64,
    },
    Sampled(SampledCurve),
}

/// A validated path segment with precomputed geometry.
#[derive(Clone, Debug)]
pub struct Segment {
    shape: SegmentShape,
    start: [f64; 2],
    end: [f64; 2],
    length: f64,
    kind: SegKind,
}

impl Segment {
    /// Builds a segment and validates it: endpoints must match the declared
    /// target positions within 1e-9, arcs must be radius-consistent, sampled
    /// curves need ≥ 4 strictly increasing samples and a nowhere-degenerate
    /// tangent.
    pub fn new(shape: SegmentShape, start: [f64; 2], end: [f64; 2]) -> Result<Segment> {
        let kind = match &shape {
            SegmentShape::Line => {
                let dx = end[0] - start[0];
                let dy = end[1] - start[1];
                let len = (dx * dx + dy * dy).sqrt();
                if len <= ENDPOINT_TOL {
                    return Err(Error::Config(
                        "line segment endpoints coincide".to_string(),
                    ));
                }
                SegKind::Line {
                    dir: [dx / len, dy / len],
                    heading: dy.atan2(dx),
                }
            }
            SegmentShape::Arc {
                center,
                radius,
                ccw,
            } => {
                if *radius <= 0.0 {
                    return Err(Error::Config("arc radius must be positive".to_string()));
                }
                let tol = ENDPOINT_TOL * radius.max(1.0);
                for (name, p) in [("start", start), ("end", end)] {
                    let d = ((p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2)).sqrt();
                    if (d - radius).abs() > tol {
                        return Err(Error::Config(format!(
                            "arc {name} point is off the circle by {}",
                            (d - radius).abs()
                        )));
                    }
                }
                let theta0 = (start[1] - center[1]).atan2(start[0] - center[0]);
                let theta1 = (end[1] - center[1]).atan2(end[0] - center[0]);
                let tau = std::f64::consts::TAU;
                let sweep = if *ccw {
                    let mut d = (theta1 - theta0).rem_euclid(tau);
                    if d == 0.0 {
                        d = tau;
                    }
                    d
                } else {
                    let mut d = (theta0 - theta1).rem_euclid(tau);
                    if d == 0.0 {
                        d = tau;
                    }
                    -d
                };
                SegKind::Arc {
                    center: *center,
                    radius: *radius,
                    ccw: *ccw,
                    theta0,
                    sweep,
                }
            }
            SegmentShape::Poly { points } => {
                let curve = SampledCurve::build(points)?;
                let first = [points[0][1], points[0][2]];
                let last = [
                    points[points.len() - 1][1],
                    points[points.len() - 1][2],
                ];
                for (name, have, want) in [("start", first, start), ("end", last, end)] {
                    let d = ((have[0] - want[0]).powi(2) + (have[1] - want[1]).powi(2)).sqrt();
                    if d > ENDPOINT_TOL {
                        return Err(Error::Config(format!(
                            "sampled curve {name} misses the target by {d}"
                        )));
                    }
                }
                SegKind::Sampled(curve)
            }
        };
        let length = match &kind {
            SegKind::Line { .. } => {
                let dx = end[0] - start[0];
                let dy = end[1] - start[1];
                (dx * dx + dy * dy).sqrt()
            }
            SegKind::Arc { radius, sweep, .. } => radius * sweep.abs(),
            SegKind::Sampled(c) => c.length,
        };
        Ok(Segment {
            shape,
            start,
            end,
            length,
            kind,
        })
    }

    /// The declared shape, unchanged (used when re-emitting configs).
    pub fn shape(&self) -> &SegmentShape {
        &self.shape
    }

    /// Total arc length of the segment.
    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn start(&self) -> [f64; 2] {
        self.start
    }

    pub fn end(&self) -> [f64; 2] {
        self.end
    }

    fn check_l(&self, l: f64) -> Result<()> {
        if !(0.0..=self.length * (1.0 + 1e-12) + 1e-12).contains(&l) {
            return Err(Error::Domain(format!(
                "path position {l} outside [0, {}]",
                self.length
            )));
        }
        Ok(())
    }

    /// Parameter value at distance `l` along the segment. Lines are
    /// parametrized by distance, arcs by angle, sampled curves by the declared
    /// sample parameter. Inverse of arc length within 1e-9·length.
    pub fn param_at_length(&self, l: f64) -> Result<f64> {
        self.check_l(l)?;
        let l = l.clamp(0.0, self.length);
        Ok(match &self.kind {
            SegKind::Line { .. } => l,
            SegKind::Arc {
                radius,
                ccw,
                theta0,
                ..
            } => {
                if *ccw {
                    theta0 + l / radius
                } else {
                    theta0 - l / radius
                }
            }
            SegKind::Sampled(c) => c.param_at_length(l),
        })
    }

    /// Signed curvature at parameter `p`: `(x′y″ − y′x″)/((x′)² + (y′)²)^{3/2}`.
    pub fn curvature_at(&self, p: f64) -> Result<f64> {
        Ok(match &self.kind {
            SegKind::Line { .. } => 0.0,
            SegKind::Arc { radius, ccw, .. } => {
                if *ccw {
                    1.0 / radius
                } else {
                    -1.0 / radius
                }
            }
            SegKind::Sampled(c) => c.curvature_at(p)?,
        })
    }

    /// Heading rate a unicycle needs at distance `l` and speed `v`:
    /// curvature at that point times `v`.
    pub fn angular_velocity(&self, l: f64, v: f64) -> Result<f64> {
        let p = self.param_at_length(l)?;
        Ok(self.curvature_at(p)? * v)
    }

    /// Position and tangent heading at distance `l` along the segment.
    pub fn position_and_heading(&self, l: f64) -> Result<([f64; 2], f64)> {
        self.check_l(l)?;
        let l = l.clamp(0.0, self.length);
        Ok(match &self.kind {
            SegKind::Line { dir, heading } => (
                [self.start[0] + dir[0] * l, self.start[1] + dir[1] * l],
                *heading,
            ),
            SegKind::Arc {
                center,
                radius,
                ccw,
                theta0,
                ..
            } => {
                let theta = if *ccw {
                    theta0 + l / radius
                } else {
                    theta0 - l / radius
                };
                let pos = [
                    center[0] + radius * theta.cos(),
                    center[1] + radius * theta.sin(),
                ];
                let heading = if *ccw {
                    (theta.cos()).atan2(-theta.sin())
                } else {
                    (-theta.cos()).atan2(theta.sin())
                };
                (pos, heading)
            }
            SegKind::Sampled(c) => {
                let p = c.param_at_length(l);
                let (pos, tangent) = c.pose_at(p);
                (pos, tangent[1].atan2(tangent[0]))
            }
        })
    }

    /// Heading of the tangent at the segment start (agents snap to this when
    /// they depart).
    pub fn initial_heading(&self) -> f64 {
        self.position_and_heading(0.0)
            .map(|(_, h)| h)
            .unwrap_or(0.0)
    }
}

/// Sampled parametric curve with finite-difference derivatives on the sample
/// grid and a refined cumulative arc-length table.
#[derive(Clone, Debug)]
struct SampledCurve {
    p: Vec<f64>,
    x: Vec<f64>,
    y: Vec<f64>,
    dx: Vec<f64>,
    dy: Vec<f64>,
    curv: Vec<f64>,
    /// Refined grid (SUBDIV points per sample interval) of parameters and the
    /// cumulative arc length at each.
    table_p: Vec<f64>,
    table_len: Vec<f64>,
    length: f64,
}

const SUBDIV: usize = 8;

impl SampledCurve {
    fn build(points: &[[f64; 3]]) -> Result<SampledCurve> {
        if points.len() < 4 {
            return Err(Error::Config(format!(
                "sampled curve needs at least 4 points, got {}",
                points.len()
            )));
        }
        let p: Vec<f64> = points.iter().map(|r| r[0]).collect();
        let x: Vec<f64> = points.iter().map(|r| r[1]).collect();
        let y: Vec<f64> = points.iter().map(|r| r[2]).collect();
        if p.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config(
                "sampled curve parameters must be strictly increasing".to_string(),
            ));
        }
        let dx = fd_first(&p, &x);
        let dy = fd_first(&p, &y);
        let ddx = fd_second(&p, &x);
        let ddy = fd_second(&p, &y);

        let max_speed = dx
            .iter()
            .zip(&dy)
            .map(|(a, b)| a.hypot(*b))
            .fold(0.0_f64, f64::max);
        let mut curv = Vec::with_capacity(p.len());
        for k in 0..p.len() {
            let speed = dx[k].hypot(dy[k]);
            if speed < 1e-12 || speed < 1e-9 * max_speed {
                return Err(Error::Config(format!(
                    "sampled curve has a degenerate tangent at p = {}",
                    p[k]
                )));
            }
            curv.push((dx[k] * ddy[k] - dy[k] * ddx[k]) / speed.powi(3));
        }

        // Refined cumulative arc length: Simpson per sub-cell on the Hermite
        // interpolant's speed.
        let hermite = HermiteRef {
            p: &p,
            x: &x,
            y: &y,
            dx: &dx,
            dy: &dy,
        };
        let mut table_p = Vec::with_capacity((p.len() - 1) * SUBDIV + 1);
        let mut table_len = Vec::with_capacity(table_p.capacity());
        table_p.push(p[0]);
        table_len.push(0.0);
        let mut acc = 0.0;
        for k in 0..p.len() - 1 {
            let h = (p[k + 1] - p[k]) / SUBDIV as f64;
            for s in 0..SUBDIV {
                let a = p[k] + h * s as f64;
                let b = a + h;
                let sa = hermite.speed(a);
                let sm = hermite.speed(0.5 * (a + b));
                let sb = hermite.speed(b);
                acc += (b - a) / 6.0 * (sa + 4.0 * sm + sb);
                table_p.push(b);
                table_len.push(acc);
            }
        }
        let length = acc;
        Ok(SampledCurve {
            p,
            x,
            y,
            dx,
            dy,
            curv,
            table_p,
            table_len,
            length,
        })
    }

    fn hermite(&self) -> HermiteRef<'_> {
        HermiteRef {
            p: &self.p,
            x: &self.x,
            y: &self.y,
            dx: &self.dx,
            dy: &self.dy,
        }
    }

    fn param_at_length(&self, l: f64) -> f64 {
        let l = l.clamp(0.0, self.length);
        // Locate the refined cell, then bisect on the partial Simpson integral
        // so the inverse is accurate to 1e-12·length.
        let idx = match self
            .table_len
            .binary_search_by(|v| v.total_cmp(&l))
        {
            Ok(i) => return self.table_p[i],
            Err(i) => i.saturating_sub(1).min(self.table_p.len() - 2),
        };
        let hermite = self.hermite();
        let base_len = self.table_len[idx];
        let (mut lo, mut hi) = (self.table_p[idx], self.table_p[idx + 1]);
        let target = l - base_len;
        let part = |q: f64| -> f64 {
            let a = self.table_p[idx];
            if q <= a {
                return 0.0;
            }
            let sa = hermite.speed(a);
            let sm = hermite.speed(0.5 * (a + q));
            let sq = hermite.speed(q);
            (q - a) / 6.0 * (sa + 4.0 * sm + sq)
        };
        let tol = 1e-12 * self.length.max(1e-300);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if part(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
            if (hi - lo) * hermite.speed(0.5 * (lo + hi)) < tol {
                break;
            }
        }
        0.5 * (lo + hi)
    }

    fn pose_at(&self, q: f64) -> ([f64; 2], [f64; 2]) {
        let h = self.hermite();
        (h.pos(q), h.vel(q))
    }

    fn curvature_at(&self, q: f64) -> Result<f64> {
        if q < self.p[0] - 1e-12 || q > self.p[self.p.len() - 1] + 1e-12 {
            return Err(Error::Domain(format!(
                "parameter {q} outside sampled range"
            )));
        }
        let q = q.clamp(self.p[0], self.p[self.p.len() - 1]);
        let k = locate(&self.p, q);
        let t = (q - self.p[k]) / (self.p[k + 1] - self.p[k]);
        Ok(self.curv[k] * (1.0 - t) + self.curv[k + 1] * t)
    }
}

/// Cubic Hermite evaluation over the sample grid using the FD slopes.
struct HermiteRef<'a> {
    p: &'a [f64],
    x: &'a [f64],
    y: &'a [f64],
    dx: &'a [f64],
    dy: &'a [f64],
}

impl HermiteRef<'_> {
    fn cell(&self, q: f64) -> (usize, f64, f64) {
        let k = locate(self.p, q);
        let h = self.p[k + 1] - self.p[k];
        ((k), (q - self.p[k]) / h, h)
    }

    fn pos(&self, q: f64) -> [f64; 2] {
        let (k, t, h) = self.cell(q.clamp(self.p[0], self.p[self.p.len() - 1]));
        let basis = |f0: f64, f1: f64, d0: f64, d1: f64| {
            let t2 = t * t;
            let t3 = t2 * t;
            f0 * (2.0 * t3 - 3.0 * t2 + 1.0)
                + d0 * h * (t3 - 2.0 * t2 + t)
                + f1 * (-2.0 * t3 + 3.0 * t2)
                + d1 * h * (t3 - t2)
        };
        [
            basis(self.x[k], self.x[k + 1], self.dx[k], self.dx[k + 1]),
            basis(self.y[k], self.y[k + 1], self.dy[k], self.dy[k + 1]),
        ]
    }

    fn vel(&self, q: f64) -> [f64; 2] {
        let (k, t, h) = self.cell(q.clamp(self.p[0], self.p[self.p.len() - 1]));
        let dbasis = |f0: f64, f1: f64, d0: f64, d1: f64| {
            let t2 = t * t;
            (f0 * (6.0 * t2 - 6.0 * t)
                + d0 * h * (3.0 * t2 - 4.0 * t + 1.0)
                + f1 * (-6.0 * t2 + 6.0 * t)
                + d1 * h * (3.0 * t2 - 2.0 * t))
                / h
        };
        [
            dbasis(self.x[k], self.x[k + 1], self.dx[k], self.dx[k + 1]),
            dbasis(self.y[k], self.y[k + 1], self.dy[k], self.dy[k + 1]),
        ]
    }

    fn speed(&self, q: f64) -> f64 {
        let v = self.vel(q);
        v[0].hypot(v[1])
    }
}

fn locate(grid: &[f64], q: f64) -> usize {
    match grid.binary_search_by(|v| v.total_cmp(&q)) {
        Ok(i) => i.min(grid.len() - 2),
        Err(i) => i.saturating_sub(1).min(grid.len() - 2),
    }
}

/// Centered first derivative on a possibly nonuniform grid, second-order
/// one-sided at the ends.
fn fd_first(p: &[f64], f: &[f64]) -> Vec<f64> {
    let n = p.len();
    let mut d = vec![0.0; n];
    for k in 1..n - 1 {
        let hl = p[k] - p[k - 1];
        let hr = p[k + 1] - p[k];
        d[k] = (hl / (hr * (hl + hr))) * (f[k + 1] - f[k])
            + (hr / (hl * (hl + hr))) * (f[k] - f[k - 1]);
    }
    {
        let h0 = p[1] - p[0];
        let h1 = p[2] - p[1];
        d[0] = -((2.0 * h0 + h1) / (h0 * (h0 + h1))) * f[0]
            + ((h0 + h1) / (h0 * h1)) * f[1]
            - (h0 / (h1 * (h0 + h1))) * f[2];
    }
    {
        let hn = p[n - 1] - p[n - 2];
        let hm = p[n - 2] - p[n - 3];
        d[n - 1] = ((2.0 * hn + hm) / (hn * (hn + hm))) * f[n - 1]
            - ((hn + hm) / (hn * hm)) * f[n - 2]
            + (hn / (hm * (hn + hm))) * f[n - 3];
    }
    d
}

/// Second derivative at the sample points: three-point stencil inside, linear
/// extrapolation at the two ends.
fn fd_second(p: &[f64], f: &[f64]) -> Vec<f64> {
    let n = p.len();
    let mut d = vec![0.0; n];
    for k in 1..n - 1 {
        let hl = p[k] - p[k - 1];
        let hr = p[k + 1] - p[k];
        d[k] = 2.0 * ((f[k + 1] - f[k]) / hr - (f[k] - f[k - 1]) / hl) / (hl + hr);
    }
    d[0] = 2.0 * d[1] - d[2];
    d[n - 1] = 2.0 * d[n - 2] - d[n - 3];
    d
}

// ---------------------------------------------------------------------------
// The target network.
// ---------------------------------------------------------------------------

/// One monitored target as declared in a config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub id: usize,
    pub location: [f64; 2],
    /// Uncertainty growth rate A.
    pub a: f64,
    /// Removal rate B (must exceed A).
    pub b: f64,
    /// Initial uncertainty R(0).
    pub r0: f64,
}

/// One directed path segment as declared in a config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeSpec {
    pub from: usize,
    pub to: usize,
    pub shape: SegmentShape,
}

/// A validated target node.
#[derive(Clone, Debug)]
pub struct TargetNode {
    pub id: usize,
    pub location: [f64; 2],
    pub params: TargetParams,
    pub r0: f64,
}

/// The monitored network: targets at fixed locations joined by directed path
/// segments. Construction validates everything an agent relies on at run
/// time: dense target ids, positive dynamics rates, segment endpoints
/// anchored on the declared target locations, and at least one outgoing
/// segment per target so no agent can be stranded.
#[derive(Debug)]
pub struct NetworkGraph {
    targets: Vec<TargetNode>,
    edges: BTreeMap<(usize, usize), Segment>,
    adjacency: Vec<Vec<usize>>,
}

impl NetworkGraph {
    pub fn new(targets: &[TargetSpec], edges: &[EdgeSpec]) -> Result<NetworkGraph> {
        if targets.is_empty() {
            return Err(Error::Config("targets: list is empty".to_string()));
        }
        let m = targets.len();
        let mut nodes: Vec<Option<TargetNode>> = vec![None; m];
        for (k, spec) in targets.iter().enumerate() {
            if spec.id >= m {
                return Err(Error::Config(format!(
                    "targets[{k}].id: {} out of range for {m} targets (ids must be 0..{m})",
                    spec.id
                )));
            }
            if nodes[spec.id].is_some() {
                return Err(Error::Config(format!(
                    "targets[{k}].id: duplicate id {}",
                    spec.id
                )));
            }
            if !(spec.location[0].is_finite() && spec.location[1].is_finite()) {
                return Err(Error::Config(format!(
                    "targets[{k}].location: must be finite"
                )));
            }
            let params = TargetParams {
                a: spec.a,
                b: spec.b,
            };
            params
                .validate()
                .map_err(|e| Error::Config(format!("targets[{k}]: {e}")))?;
            if !(spec.r0 >= 0.0 && spec.r0.is_finite()) {
                return Err(Error::Config(format!(
                    "targets[{k}].r0: must be ≥ 0, got {}",
                    spec.r0
                )));
            }
            nodes[spec.id] = Some(TargetNode {
                id: spec.id,
                location: spec.location,
                params,
                r0: spec.r0,
            });
        }
        let targets: Vec<TargetNode> = nodes.into_iter().map(|n| n.expect("dense ids")).collect();

        let mut segs = BTreeMap::new();
        let mut adjacency = vec![Vec::new(); m];
        for (k, spec) in edges.iter().enumerate() {
            if spec.from >= m || spec.to >= m {
                return Err(Error::Config(format!(
                    "edges[{k}]: endpoint ({}, {}) out of range for {m} targets",
                    spec.from, spec.to
                )));
            }
            if spec.from == spec.to {
                return Err(Error::Config(format!(
                    "edges[{k}]: self-loop at target {}",
                    spec.from
                )));
            }
            if segs.contains_key(&(spec.from, spec.to)) {
                return Err(Error::Config(format!(
                    "edges[{k}]: duplicate directed edge ({}, {})",
                    spec.from, spec.to
                )));
            }
            let seg = Segment::new(
                spec.shape.clone(),
                targets[spec.from].location,
                targets[spec.to].location,
            )
            .map_err(|e| Error::Config(format!("edges[{k}]: {e}")))?;
            segs.insert((spec.from, spec.to), seg);
            adjacency[spec.from].push(spec.to);
        }
        for nbrs in &mut adjacency {
            nbrs.sort_unstable();
        }
        for (i, nbrs) in adjacency.iter().enumerate() {
            if nbrs.is_empty() {
                return Err(Error::Config(format!(
                    "edges: target {i} has no outgoing segment"
                )));
            }
        }
        Ok(NetworkGraph {
            targets,
            edges: segs,
            adjacency,
        })
    }

    pub fn target_count(&self) -> usize {
        self.targets.len()
    }

    pub fn targets(&self) -> &[TargetNode] {
        &self.targets
    }

    pub fn target(&self, i: usize) -> Result<&TargetNode> {
        self.targets
            .get(i)
            .ok_or_else(|| Error::Domain(format!("no target {i}")))
    }

    /// Outgoing neighbor ids of target `i`, sorted ascending.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        self.adjacency.get(i).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn edge(&self, i: usize, j: usize) -> Result<&Segment> {
        self.edges
            .get(&(i, j))
            .ok_or_else(|| Error::Domain(format!("no segment from target {i} to target {j}")))
    }

    /// Lengths of all directed segments, in (from, to) key order.
    pub fn edge_lengths(&self) -> Vec<f64> {
        self.edges.values().map(Segment::length).collect()
    }

    /// Whether every target can reach every other (strong connectivity):
    /// breadth-first traversal from target 0 along the edges and again
    /// against them.
    pub fn is_connected(&self) -> bool {
        let m = self.targets.len();
        let reach = |forward: bool| -> usize {
            let mut seen = vec![false; m];
            let mut queue = vec![0usize];
            seen[0] = true;
            let mut count = 1;
            while let Some(i) = queue.pop() {
                let next: Vec<usize> = if forward {
                    self.adjacency[i].clone()
                } else {
                    (0..m).filter(|&k| self.adjacency[k].contains(&i)).collect()
                };
                for j in next {
                    if !seen[j] {
                        seen[j] = true;
                        count += 1;
                        queue.push(j);
                    }
                }
            }
            count
        };
        reach(true) == m && reach(false) == m
    }
}
