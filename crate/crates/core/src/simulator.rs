//! Deterministic discrete-event simulation: configuration, the event loop
//! with exact cost accounting, derived metrics, parameter sweeps, and
//! topology generation.
//!
//! A run advances event-to-event over [0, T]. The mean system uncertainty
//! J_s = (1/T)·∫ΣR dt accumulates per inter-event interval from the exact
//! piecewise-linear integrals, and the control energy J_e sums the committed
//! transits' closed-form ∫u² — no quadrature anywhere in the dynamics.
//! Time-series sampling, when requested, is output-only.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::controller::{
    calibrate_first_order, DepartureDiag, FoCalibration, LogRecord, World,
};
use crate::geometry::{EdgeSpec, NetworkGraph, SegmentShape, TargetSpec};
use crate::transit::{Method, MethodParams};
use crate::{Error, Result};

// ---------------------------------------------------------------------------
// Configuration.
// ---------------------------------------------------------------------------

/// One agent: its id (equal to its index) and start target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub id: usize,
    pub start: usize,
}

/// Run-control section of a config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimSection {
    /// Mission duration T.
    pub t: f64,
    /// Planning bound H.
    pub horizon: f64,
    /// Output-only sampling period for the time series.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_dt: Option<f64>,
    /// Seed recorded with the run; topology generation is the only consumer
    /// of randomness.
    #[serde(default)]
    pub seed: u64,
}

/// How a generated config was produced; present so seeded regeneration (for
/// multi-seed comparisons) is possible from the config alone.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub topology: Topology,
    pub m: usize,
    pub n: usize,
    #[serde(rename = "box")]
    pub bbox: [f64; 2],
}

/// A complete simulation configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub targets: Vec<TargetSpec>,
    pub edges: Vec<EdgeSpec>,
    pub agents: Vec<AgentSpec>,
    pub sim: SimSection,
    pub method: MethodParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorSpec>,
    /// Free-form provenance note.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl SimConfig {
    /// Full validation; error messages name the offending field path.
    pub fn validate(&self) -> Result<()> {
        if !(self.sim.t > 0.0 && self.sim.t.is_finite()) {
            return Err(Error::Config(format!(
                "sim.t: mission duration must be > 0, got {}",
                self.sim.t
            )));
        }
        if !(self.sim.horizon > 0.0 && self.sim.horizon.is_finite()) {
            return Err(Error::Config(format!(
                "sim.horizon: planning bound must be > 0, got {}",
                self.sim.horizon
            )));
        }
        if let Some(dt) = self.sim.sample_dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(Error::Config(format!(
                    "sim.sample_dt: must be > 0, got {dt}"
                )));
            }
        }
        self.method
            .validate()
            .map_err(|e| Error::Config(format!("method: {e}")))?;
        let graph = self.build_graph()?;
        if self.agents.is_empty() {
            return Err(Error::Config("agents: list is empty".to_string()));
        }
        for (k, ag) in self.agents.iter().enumerate() {
            if ag.id != k {
                return Err(Error::Config(format!(
                    "agents[{k}].id: must equal its index {k}, got {}",
                    ag.id
                )));
            }
            if ag.start >= graph.target_count() {
                return Err(Error::Config(format!(
                    "agents[{k}].start: target {} out of range for {} targets",
                    ag.start,
                    graph.target_count()
                )));
            }
            if self.agents[..k].iter().any(|o| o.start == ag.start) {
                return Err(Error::Config(format!(
                    "agents[{k}].start: target {} already taken (starts must be distinct)",
                    ag.start
                )));
            }
        }
        Ok(())
    }

    pub fn build_graph(&self) -> Result<NetworkGraph> {
        NetworkGraph::new(&self.targets, &self.edges)
    }

    /// Canonical serialized form: pretty JSON plus a trailing newline.
    /// Re-parsing and re-emitting reproduces the bytes exactly.
    pub fn canonical_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// FNV-1a (64-bit) over the canonical form, printed as 16 hex digits.
    pub fn config_hash(&self) -> Result<String> {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in self.canonical_json()?.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        Ok(format!("{h:016x}"))
    }
}

// ---------------------------------------------------------------------------
// Weight-factor helpers.
// ---------------------------------------------------------------------------

/// Energy weight from a target energy-budget fraction β and a reference
/// transit: α = (β/(1−β))·y_ref²/v_max⁴. β = 0 yields α = 0 (the
/// pure-sensing limit); runnable configs require α > 0.
pub fn alpha_from_budget(beta: f64, y_ref: f64, v_max: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::Domain(format!(
            "budget fraction must satisfy 0 ≤ β < 1, got {beta}"
        )));
    }
    if !(y_ref > 0.0 && v_max > 0.0) {
        return Err(Error::Domain(format!(
            "references must be positive, got y_ref = {y_ref}, v_max = {v_max}"
        )));
    }
    Ok(beta / (1.0 - beta) * y_ref * y_ref / v_max.powi(4))
}

/// Acceleration form of the weight helper: α = (β/(1−β))/u_max².
pub fn alpha_from_accel(beta: f64, u_max: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::Domain(format!(
            "budget fraction must satisfy 0 ≤ β < 1, got {beta}"
        )));
    }
    if !(u_max > 0.0) {
        return Err(Error::Domain(format!(
            "reference must be positive, got u_max = {u_max}"
        )));
    }
    Ok(beta / (1.0 - beta) / (u_max * u_max))
}

// ---------------------------------------------------------------------------
// Run outputs.
// ---------------------------------------------------------------------------

/// Aggregate run metrics. `j_t = α·j_e + j_s` holds exactly.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MetricsReport {
    pub j_t: f64,
    /// Total control energy Σ∫u².
    pub j_e: f64,
    /// Mean system uncertainty (1/T)·∫ΣR dt.
    pub j_s: f64,
    pub v_max: f64,
    pub u_max: f64,
    pub visits: Vec<u64>,
    pub agent_energy: Vec<f64>,
    pub event_count: u64,
    pub solve_count: u64,
}

/// Output-only sampled trajectories: `t`, per-agent `x,y,v,u`, per-target `R`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TimeSeries {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

/// Everything a run produces.
#[derive(Debug)]
pub struct RunOutput {
    pub metrics: MetricsReport,
    pub log: Vec<LogRecord>,
    pub timeseries: Option<TimeSeries>,
    /// Diagnostics of the first departure commitment (sweep tables).
    pub first_departure: Option<DepartureDiag>,
    /// The first-order calibration actually used, when the method needed one.
    pub calibration: Option<FoCalibration>,
}

// ---------------------------------------------------------------------------
// Running.
// ---------------------------------------------------------------------------

/// Resolves the fixed-speed calibration for the first-order methods: an
/// automatic second-order pre-run on the same config supplies whichever of
/// the peak references the config does not override.
fn resolve_calibration(cfg: &SimConfig, graph: &NetworkGraph) -> Result<Option<FoCalibration>> {
    if !matches!(cfg.method.method, Method::Fo1 | Method::Fo2) {
        return Ok(None);
    }
    let (u_ref, v_ref) = match (cfg.method.u_so_max, cfg.method.v_so_max) {
        (Some(u), Some(v)) => (u, v),
        (u_over, v_over) => {
            let mut pre = cfg.clone();
            pre.method = MethodParams {
                method: Method::So,
                alpha: cfg.method.alpha,
                v_bar: None,
                u_bar: None,
                u_so_max: None,
                v_so_max: None,
            };
            pre.sim.sample_dt = None;
            let out = run(&pre)?;
            (
                u_over.unwrap_or(out.metrics.u_max),
                v_over.unwrap_or(out.metrics.v_max),
            )
        }
    };
    if !(u_ref > 0.0 && v_ref > 0.0) {
        return Err(Error::Infeasible(
            "first-order calibration needs positive peak references; the \
             calibration run produced no motion"
                .to_string(),
        ));
    }
    Ok(Some(calibrate_first_order(graph, u_ref, v_ref)?))
}

/// Sample-time grid `k·dt` for the output time series.
struct SampleGrid {
    dt: f64,
    k: u64,
}

impl SampleGrid {
    /// Consumes and returns every grid time ≤ `upto`.
    fn pending(&mut self, upto: f64) -> Vec<f64> {
        let mut out = Vec::new();
        loop {
            let s = self.k as f64 * self.dt;
            if s <= upto + 1e-12 * self.dt {
                out.push(s);
                self.k += 1;
            } else {
                return out;
            }
        }
    }
}

/// Runs one simulation to completion. Deterministic: identical configs
/// produce bit-identical event logs and metrics.
pub fn run(cfg: &SimConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let graph = cfg.build_graph()?;
    let calib = resolve_calibration(cfg, &graph)?;
    let starts: Vec<usize> = cfg.agents.iter().map(|a| a.start).collect();
    let mut world = World::new(graph, cfg.sim.horizon, cfg.method.clone(), calib, &starts)?;
    let t_end = cfg.sim.t;

    let mut columns = vec!["t".to_string()];
    for a in 0..cfg.agents.len() {
        for part in ["x", "y", "v", "u"] {
            columns.push(format!("{part}{a}"));
        }
    }
    for i in 0..cfg.targets.len() {
        columns.push(format!("R{i}"));
    }
    let mut grid = cfg.sim.sample_dt.map(|dt| SampleGrid { dt, k: 0 });
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut emit = |world: &World, upto: f64, grid: &mut Option<SampleGrid>| -> Result<()> {
        if let Some(g) = grid {
            for s in g.pending(upto) {
                let row = world.sample_row(s)?;
                let mut flat = Vec::with_capacity(columns.len());
                flat.push(row.t);
                for ag in &row.agents {
                    flat.extend_from_slice(ag);
                }
                flat.extend_from_slice(&row.r);
                rows.push(flat);
            }
        }
        Ok(())
    };

    while let Some(tn) = world.peek_time() {
        if tn > t_end {
            break;
        }
        emit(&world, tn, &mut grid)?;
        world.step()?;
    }
    emit(&world, t_end, &mut grid)?;
    world.advance_to(t_end)?;

    let alpha = cfg.method.alpha;
    let j_e = world.acc_energy();
    let j_s = world.acc_sensing() / t_end;
    let metrics = MetricsReport {
        j_t: alpha * j_e + j_s,
        j_e,
        j_s,
        v_max: world.v_max(),
        u_max: world.u_max(),
        visits: world.visits().to_vec(),
        agent_energy: world.agent_energy().to_vec(),
        event_count: world.handled_events(),
        solve_count: world.decision_solves(),
    };
    let timeseries = cfg.sim.sample_dt.map(|_| TimeSeries {
        columns: columns.clone(),
        rows,
    });
    let first_departure = world.first_departure();
    let calibration = world.calibration();
    Ok(RunOutput {
        metrics,
        log: world.into_log(),
        timeseries,
        first_departure,
        calibration,
    })
}

// ---------------------------------------------------------------------------
// Parameter sweeps.
// ---------------------------------------------------------------------------

/// One sweep row: the parameter value, full run metrics, and the first
/// departure's solve diagnostics.
#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub metrics: MetricsReport,
    pub diag: Option<DepartureDiag>,
}

/// Writes one swept value into a config. Known paths: `alpha`, `v_bar`,
/// `u_bar`, `T`/`sim.t`, `H`/`sim.horizon`, `r0` (every target), `R_i0`
/// (agent 0's start target), `R_j0` (every non-start target), and
/// `targets.<id>.<r0|a|b>`.
pub fn set_param(cfg: &mut SimConfig, path: &str, value: f64) -> Result<()> {
    match path {
        "alpha" => cfg.method.alpha = value,
        "v_bar" => cfg.method.v_bar = Some(value),
        "u_bar" => cfg.method.u_bar = Some(value),
        "T" | "sim.t" => cfg.sim.t = value,
        "H" | "sim.horizon" => cfg.sim.horizon = value,
        "r0" => {
            for t in &mut cfg.targets {
                t.r0 = value;
            }
        }
        "R_i0" => {
            let start = cfg
                .agents
                .first()
                .ok_or_else(|| Error::Config("agents: list is empty".to_string()))?
                .start;
            let t = cfg
                .targets
                .iter_mut()
                .find(|t| t.id == start)
                .ok_or_else(|| Error::Config(format!("no target {start}")))?;
            t.r0 = value;
        }
        "R_j0" => {
            let starts: Vec<usize> = cfg.agents.iter().map(|a| a.start).collect();
            for t in &mut cfg.targets {
                if !starts.contains(&t.id) {
                    t.r0 = value;
                }
            }
        }
        _ => {
            if let Some(rest) = path.strip_prefix("targets.") {
                let mut it = rest.splitn(2, '.');
                let id: usize = it
                    .next()
                    .unwrap_or("")
                    .parse()
                    .map_err(|_| Error::Config(format!("sweep path {path}: bad target id")))?;
                let field = it.next().unwrap_or("");
                let t = cfg
                    .targets
                    .iter_mut()
                    .find(|t| t.id == id)
                    .ok_or_else(|| Error::Config(format!("sweep path {path}: no target {id}")))?;
                match field {
                    "r0" => t.r0 = value,
                    "a" => t.a = value,
                    "b" => t.b = value,
                    _ => {
                        return Err(Error::Config(format!(
                            "sweep path {path}: unknown target field {field:?} (r0, a, b)"
                        )))
                    }
                }
            } else {
                return Err(Error::Config(format!(
                    "sweep path {path}: unknown parameter (alpha, v_bar, u_bar, T, H, r0, \
                     R_i0, R_j0, targets.<id>.<r0|a|b>)"
                )));
            }
        }
    }
    Ok(())
}

/// Independent runs of `base` with `path` set to each value, in input order.
pub fn sweep(base: &SimConfig, path: &str, values: &[f64]) -> Result<Vec<SweepRow>> {
    // Fail on an unresolvable path before paying for any run.
    {
        let mut probe = base.clone();
        set_param(&mut probe, path, values.first().copied().unwrap_or(0.0))?;
    }
    values
        .iter()
        .map(|&value| {
            let mut cfg = base.clone();
            set_param(&mut cfg, path, value)?;
            let out = run(&cfg)?;
            Ok(SweepRow {
                value,
                metrics: out.metrics,
                diag: out.first_departure,
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Topology generation.
// ---------------------------------------------------------------------------

/// Generated network shapes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Topology {
    Ring,
    Grid,
    RandomGeometric,
}

impl Topology {
    pub fn as_str(&self) -> &'static str {
        match self {
            Topology::Ring => "ring",
            Topology::Grid => "grid",
            Topology::RandomGeometric => "random-geometric",
        }
    }
}

impl std::str::FromStr for Topology {
    type Err = Error;
    fn from_str(s: &str) -> Result<Topology> {
        match s {
            "ring" => Ok(Topology::Ring),
            "grid" => Ok(Topology::Grid),
            "random-geometric" => Ok(Topology::RandomGeometric),
            other => Err(Error::Config(format!(
                "unknown topology {other:?} (ring, grid, random-geometric)"
            ))),
        }
    }
}

/// Default energy weight for generated configs (an acceleration-budget pick
/// suited to 600×600 networks).
pub const DEFAULT_ALPHA: f64 = 213.3e-6;

/// Generates a connected, ready-to-run config: targets with A = 1, B = 10,
/// R(0) = 0.5, mission T = 500 under planning bound H = 250, second-order
/// method, and agents placed at evenly spaced target indices.
pub fn generate_config(
    topology: Topology,
    m: usize,
    n: usize,
    seed: u64,
    bbox: [f64; 2],
) -> Result<SimConfig> {
    if m < 2 {
        return Err(Error::Domain(format!(
            "need at least 2 targets, got M = {m}"
        )));
    }
    if n == 0 || n >= m {
        return Err(Error::Domain(format!(
            "agent count must satisfy 1 ≤ N < M, got N = {n}, M = {m}"
        )));
    }
    if !(bbox[0] > 0.0 && bbox[1] > 0.0 && bbox[0].is_finite() && bbox[1].is_finite()) {
        return Err(Error::Domain(format!(
            "mission box must be positive, got {} × {}",
            bbox[0], bbox[1]
        )));
    }
    let (locations, pairs) = match topology {
        Topology::Ring => ring_layout(m, bbox),
        Topology::Grid => grid_layout(m, bbox),
        Topology::RandomGeometric => random_geometric_layout(m, seed, bbox)?,
    };

    let targets: Vec<TargetSpec> = locations
        .iter()
        .enumerate()
        .map(|(id, &location)| TargetSpec {
            id,
            location,
            a: 1.0,
            b: 10.0,
            r0: 0.5,
        })
        .collect();
    let mut edges = Vec::with_capacity(2 * pairs.len());
    for &(i, j) in &pairs {
        edges.push(EdgeSpec {
            from: i,
            to: j,
            shape: SegmentShape::Line,
        });
        edges.push(EdgeSpec {
            from: j,
            to: i,
            shape: SegmentShape::Line,
        });
    }

    // Evenly spaced placements: agent a starts at index a·round(M/N), with a
    // linear probe past collisions from the rounding.
    let stride = ((m as f64 / n as f64).round() as usize).max(1);
    let mut taken = vec![false; m];
    let mut agents = Vec::with_capacity(n);
    for a in 0..n {
        let mut idx = (a * stride) % m;
        while taken[idx] {
            idx = (idx + 1) % m;
        }
        taken[idx] = true;
        agents.push(AgentSpec { id: a, start: idx });
    }

    let cfg = SimConfig {
        targets,
        edges,
        agents,
        sim: SimSection {
            t: 500.0,
            horizon: 250.0,
            sample_dt: None,
            seed,
        },
        method: MethodParams {
            method: Method::So,
            alpha: DEFAULT_ALPHA,
            v_bar: None,
            u_bar: None,
            u_so_max: None,
            v_so_max: None,
        },
        generator: Some(GeneratorSpec {
            topology,
            m,
            n,
            bbox,
        }),
        note: Some(format!(
            "generated: {} M={m} N={n} seed={seed} box={}x{}",
            topology.as_str(),
            bbox[0],
            bbox[1]
        )),
    };
    debug_assert!(cfg.build_graph().map(|g| g.is_connected()).unwrap_or(false));
    Ok(cfg)
}

/// Evenly spaced points on a circle, joined into a cycle.
fn ring_layout(m: usize, bbox: [f64; 2]) -> (Vec<[f64; 2]>, Vec<(usize, usize)>) {
    let (cx, cy) = (bbox[0] / 2.0, bbox[1] / 2.0);
    let radius = 0.4 * bbox[0].min(bbox[1]);
    let locations = (0..m)
        .map(|k| {
            let ang = std::f64::consts::TAU * k as f64 / m as f64;
            [cx + radius * ang.cos(), cy + radius * ang.sin()]
        })
        .collect();
    let pairs = (0..m).map(|k| (k, (k + 1) % m)).collect();
    (locations, pairs)
}

/// Near-square lattice joined along rows and columns.
fn grid_layout(m: usize, bbox: [f64; 2]) -> (Vec<[f64; 2]>, Vec<(usize, usize)>) {
    let cols = (m as f64).sqrt().ceil() as usize;
    let rows = m.div_ceil(cols);
    let sx = 0.8 * bbox[0] / cols.saturating_sub(1).max(1) as f64;
    let sy = 0.8 * bbox[1] / rows.saturating_sub(1).max(1) as f64;
    let mut locations = Vec::with_capacity(m);
    let mut pairs = Vec::new();
    for k in 0..m {
        let (col, row) = (k % cols, k / cols);
        locations.push([
            0.1 * bbox[0] + col as f64 * sx,
            0.1 * bbox[1] + row as f64 * sy,
        ]);
        if col + 1 < cols && k + 1 < m {
            pairs.push((k, k + 1));
        }
        if k + cols < m {
            pairs.push((k, k + cols));
        }
    }
    (locations, pairs)
}

/// Uniform points with a minimum separation, joined within a candidate
/// radius, then stitched across components by nearest pairs until connected.
fn random_geometric_layout(
    m: usize,
    seed: u64,
    bbox: [f64; 2],
) -> Result<(Vec<[f64; 2]>, Vec<(usize, usize)>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let min_dim = bbox[0].min(bbox[1]);
    let sep = 0.05 * min_dim;
    let mut locations: Vec<[f64; 2]> = Vec::with_capacity(m);
    let mut attempts = 0;
    while locations.len() < m {
        attempts += 1;
        if attempts > 20_000 {
            return Err(Error::Domain(format!(
                "cannot place {m} targets at separation {sep} inside {} × {}",
                bbox[0], bbox[1]
            )));
        }
        let p = [
            rng.gen_range(0.1 * bbox[0]..0.9 * bbox[0]),
            rng.gen_range(0.1 * bbox[1]..0.9 * bbox[1]),
        ];
        if locations
            .iter()
            .all(|q| (p[0] - q[0]).hypot(p[1] - q[1]) >= sep)
        {
            locations.push(p);
        }
    }

    let dist =
        |i: usize, j: usize| (locations[i][0] - locations[j][0]).hypot(locations[i][1] - locations[j][1]);
    let radius = 0.35 * min_dim;
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for i in 0..m {
        for j in i + 1..m {
            if dist(i, j) <= radius {
                pairs.push((i, j));
            }
        }
    }
    // Union-find over the radius graph; stitch the closest cross-component
    // pair until one component remains.
    let mut root: Vec<usize> = (0..m).collect();
    fn find(root: &mut Vec<usize>, mut x: usize) -> usize {
        while root[x] != x {
            root[x] = root[root[x]];
            x = root[x];
        }
        x
    }
    for &(i, j) in &pairs {
        let (ri, rj) = (find(&mut root, i), find(&mut root, j));
        root[ri] = rj;
    }
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..m {
            for j in i + 1..m {
                if find(&mut root, i) != find(&mut root, j) {
                    let d = dist(i, j);
                    if best.map_or(true, |(bd, _, _)| d < bd) {
                        best = Some((d, i, j));
                    }
                }
            }
        }
        match best {
            None => break,
            Some((_, i, j)) => {
                pairs.push((i, j));
                let (ri, rj) = (find(&mut root, i), find(&mut root, j));
                root[ri] = rj;
            }
        }
    }
    Ok((locations, pairs))
}
