//! Per-agent decision making and the shared event-driven world.
//!
//! Agents wake up at discrete events — arriving at a target, finishing an
//! active or idle dwell, or a neighbor-driven change in which targets are
//! available — classify which dwell problem the wake-up poses, rank the
//! unclaimed neighbors by planning cost, and commit a dwell/transit decision.
//! The covering/uncovering protocol broadcasts claims so at most one agent
//! ever attends or approaches a target.
//!
//! All world mutation happens in [`World::handle_event`], one event at a time,
//! in a deterministic order (time, then kind rank, then entity id, then
//! insertion sequence). Between events the continuous state — target
//! uncertainties and agent motion — follows piecewise closed forms, so
//! [`World::advance_to`] accumulates the running costs exactly rather than by
//! quadrature.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::geometry::NetworkGraph;
use crate::sensing::{
    rhcp1_dwell, rhcp2_dwell, rhcp3_dwell, value_fn_with_effort, NeighborTarget,
    NeighborhoodSnapshot, RhcpForm, SensingSolution, SolveEffort,
};
use crate::targets::{advance, advance_with_cost, slope_for, time_to_empty, TargetState};
use crate::transit::{
    fo1_edge_profile, fo1_params, fo2_edge_profile, fo2_params, fo3_profile, fo3_transit_time,
    foa_transit, fov_transit, so_profile, so_transit_time, soa_transit, sov_transit, Method,
    MethodParams, TransitPlan, ValueCurve,
};
use crate::{Error, Result};

/// Uncertainty below this is treated as exactly zero when classifying a
/// decision; it absorbs the rounding left over from event-time arithmetic.
const R_EPS: f64 = 1e-9;

// ---------------------------------------------------------------------------
// Events.
// ---------------------------------------------------------------------------

/// Discrete events driving the simulation.
///
/// `gen` fields pin an event to the commitment that scheduled it: timers
/// whose generation no longer matches are discarded unseen, which is how a
/// re-solve cancels its predecessor's wake-ups.
#[derive(Clone, Debug, PartialEq)]
pub enum EventKind {
    /// An attended target's uncertainty reached zero.
    EmptyReached { target: usize, gen: u64 },
    /// The committed active dwell elapsed.
    ActiveDone { agent: usize, gen: u64 },
    /// The committed idle dwell elapsed.
    IdleDone { agent: usize, gen: u64 },
    /// The agent reached the end of its transit segment.
    TransitDone { agent: usize, gen: u64 },
    /// Occupancy claim at the destination target.
    Arrival { agent: usize, target: usize },
    /// Notification: the agent left `from` heading to `to`.
    Departure { agent: usize, from: usize, to: usize },
    /// Broadcast: `target` is now claimed (dwelled on or en route to).
    Covering { target: usize },
    /// Broadcast: `target` is free again.
    Uncovering { target: usize },
}

impl EventKind {
    /// Tie-break rank at equal timestamps. TransitDone and Arrival share a
    /// rank; the insertion sequence orders them (TransitDone schedules the
    /// Arrival it precedes).
    fn rank(&self) -> u8 {
        match self {
            EventKind::EmptyReached { .. } => 0,
            EventKind::ActiveDone { .. } => 1,
            EventKind::IdleDone { .. } => 2,
            EventKind::TransitDone { .. } | EventKind::Arrival { .. } => 3,
            EventKind::Departure { .. } => 4,
            EventKind::Covering { .. } => 5,
            EventKind::Uncovering { .. } => 6,
        }
    }

    /// Entity id for the third ordering key: the agent where one is involved,
    /// the target otherwise.
    fn entity(&self) -> usize {
        match *self {
            EventKind::EmptyReached { target, .. } => target,
            EventKind::ActiveDone { agent, .. } => agent,
            EventKind::IdleDone { agent, .. } => agent,
            EventKind::TransitDone { agent, .. } => agent,
            EventKind::Arrival { agent, .. } => agent,
            EventKind::Departure { agent, .. } => agent,
            EventKind::Covering { target } => target,
            EventKind::Uncovering { target } => target,
        }
    }

    fn label(&self) -> &'static str {
        match self {
            EventKind::EmptyReached { .. } => "empty_reached",
            EventKind::ActiveDone { .. } => "active_done",
            EventKind::IdleDone { .. } => "idle_done",
            EventKind::TransitDone { .. } => "transit_done",
            EventKind::Arrival { .. } => "arrival",
            EventKind::Departure { .. } => "departure",
            EventKind::Covering { .. } => "covering",
            EventKind::Uncovering { .. } => "uncovering",
        }
    }
}

/// A scheduled event. Total order: time, kind rank, entity id, insertion
/// sequence — the sequence is unique, so the order is total and replay is
/// deterministic.
#[derive(Clone, Debug)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
    seq: u64,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then_with(|| self.kind.rank().cmp(&other.kind.rank()))
            .then_with(|| self.kind.entity().cmp(&other.kind.entity()))
            .then_with(|| self.seq.cmp(&other.seq))
    }
}

// ---------------------------------------------------------------------------
// Agents and decisions.
// ---------------------------------------------------------------------------

/// What an agent is currently doing.
#[derive(Clone, Debug, PartialEq)]
pub enum AgentMode {
    /// Dwelling at `target` with uncertainty being removed, until `until`.
    DwellingActive { target: usize, until: f64 },
    /// Holding at an empty `target`, until `until`.
    DwellingIdle { target: usize, until: f64 },
    /// Committed to the segment from `from` to `to`; irrevocable.
    Transiting { from: usize, to: usize },
    /// Ready to move on, but every neighbor is claimed. The agent holds
    /// position (still attending the target) until an uncovering event frees
    /// one, then re-solves.
    Waiting { target: usize },
}

impl AgentMode {
    /// The target the agent currently attends, if not in transit.
    pub fn dwelling_target(&self) -> Option<usize> {
        match *self {
            AgentMode::DwellingActive { target, .. }
            | AgentMode::DwellingIdle { target, .. }
            | AgentMode::Waiting { target } => Some(target),
            AgentMode::Transiting { .. } => None,
        }
    }
}

/// Per-agent state.
#[derive(Clone, Debug)]
pub struct AgentState {
    pub id: usize,
    pub mode: AgentMode,
    /// Heading angle; snaps to the segment tangent at departure.
    pub theta: f64,
    pub position: [f64; 2],
    /// Committed transit while in `Transiting` mode.
    pub plan: Option<TransitPlan>,
    /// The last committed decision.
    pub decision: Option<Decision>,
    /// Bumped on every commitment; pending timers carry the value they were
    /// scheduled under and are dropped on mismatch.
    gen: u64,
    /// Effective neighborhood at the last solve (sorted target ids); used to
    /// skip re-solves when a broadcast does not change anything visible.
    last_view: Vec<usize>,
}

/// What caused a decision solve.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DecisionTrigger {
    /// Occupancy just claimed at the current target.
    Arrival,
    /// The committed active dwell elapsed.
    ActiveDone,
    /// The committed idle dwell elapsed.
    IdleDone,
    /// A covering/uncovering broadcast changed the effective neighborhood.
    NeighborChange,
}

/// A committed decision: dwells at the current target, the chosen next
/// target with its transit plan, and the planned dwells there.
#[derive(Clone, Debug, Serialize)]
pub struct Decision {
    pub form: RhcpForm,
    pub tau_i: f64,
    pub taubar_i: f64,
    pub next: usize,
    pub plan: TransitPlan,
    pub tau_j: f64,
    pub taubar_j: f64,
    /// Sensing component J*_sH(ρ) at the committed transit time.
    pub j_sh: f64,
    /// Full planning cost α·J_eH + J_sH used for ranking (energy-blind
    /// methods rank by J_sH alone but still record the full cost here).
    pub j_h: f64,
}

/// Either a committed decision or a starvation notice.
#[derive(Clone, Debug)]
pub enum DecisionOutcome {
    Commit(Decision),
    /// Every neighbor is claimed; hold position until an uncovering event.
    WaitForUncovering,
}

/// Which dwell problem a wake-up poses: arrival-or-neighborhood-change with
/// uncertainty left poses the free-dwell problem; the same triggers on an
/// empty target pin the active dwell to zero; elapsed dwells pose the
/// departure-readiness problem.
pub fn classify_rhcp(trigger: DecisionTrigger, r_i: f64) -> RhcpForm {
    match trigger {
        DecisionTrigger::ActiveDone => {
            if r_i > 0.0 {
                RhcpForm::Rhcp3
            } else {
                RhcpForm::Rhcp2
            }
        }
        DecisionTrigger::IdleDone => RhcpForm::Rhcp3,
        DecisionTrigger::Arrival | DecisionTrigger::NeighborChange => {
            if r_i > 0.0 {
                RhcpForm::Rhcp1
            } else {
                RhcpForm::Rhcp2
            }
        }
    }
}

/// Network-wide fixed-speed calibration for the first-order methods that do
/// not re-optimize transit times (derived from peak motion observed — or
/// assumed — under the second-order method).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoCalibration {
    /// Ramp acceleration shared by every edge profile.
    pub u_f1: f64,
    /// Cruise speed for the minimum-time trapezoid family.
    pub v_m1: f64,
    /// Cruise speed for the fixed-speed trapezoid family.
    pub v_m2: f64,
}

/// Derives both first-order calibrations from the network's segment lengths
/// and the peak speed/acceleration references.
pub fn calibrate_first_order(
    graph: &NetworkGraph,
    u_so_max: f64,
    v_so_max: f64,
) -> Result<FoCalibration> {
    let lengths = graph.edge_lengths();
    let (u_f1, v_m1) = fo1_params(&lengths, u_so_max, v_so_max)?;
    let v_m2 = fo2_params(&lengths, u_so_max, v_so_max)?;
    Ok(FoCalibration { u_f1, v_m1, v_m2 })
}

/// Builds the transit plan a method proposes for one candidate edge, at the
/// window left by the value curve. The returned plan departs at t = 0; the
/// caller anchors it at commitment.
fn plan_transit(
    vf: &dyn ValueCurve,
    params: &MethodParams,
    calib: Option<&FoCalibration>,
    y: f64,
) -> Result<TransitPlan> {
    let h = vf.horizon();
    let missing = |what: &str| Error::Config(format!("method {:?} needs {what}", params.method));
    let need_calib = || {
        Error::Config(format!(
            "method {:?} needs a first-order calibration",
            params.method
        ))
    };
    match params.method {
        Method::So => {
            let tt = so_transit_time(vf, params.alpha, y, h)?;
            let mut plan = so_profile(tt.rho, y, 0.0);
            plan.boundary = tt.boundary;
            Ok(plan)
        }
        Method::Fo3 => {
            let tt = fo3_transit_time(vf, params.alpha, y, h)?;
            let mut plan = fo3_profile(tt.rho, y, 0.0);
            plan.boundary = tt.boundary;
            Ok(plan)
        }
        Method::Fo1 => {
            let c = calib.ok_or_else(need_calib)?;
            fo1_edge_profile(y, c.u_f1, c.v_m1)
        }
        Method::Fo2 => {
            let c = calib.ok_or_else(need_calib)?;
            fo2_edge_profile(y, c.v_m2)
        }
        Method::Sov => {
            let v_bar = params.v_bar.ok_or_else(|| missing("v_bar"))?;
            sov_transit(vf, params.alpha, y, v_bar, h)
        }
        Method::Soa => {
            let u_bar = params.u_bar.ok_or_else(|| missing("u_bar"))?;
            soa_transit(vf, params.alpha, y, u_bar, h)
        }
        Method::Fov => {
            let v_bar = params.v_bar.ok_or_else(|| missing("v_bar"))?;
            fov_transit(vf, params.alpha, y, v_bar, h)
        }
        Method::Foa => {
            let u_bar = params.u_bar.ok_or_else(|| missing("u_bar"))?;
            foa_transit(vf, params.alpha, y, u_bar, h)
        }
    }
}

/// Solves one decision: for every candidate in the snapshot (members beyond
/// the current target), builds the sensing value curve, plans the transit,
/// and ranks by planning cost — α·J_eH + J_sH for the methods that weigh
/// energy, J_sH alone for the fixed-time first-order methods, ties to the
/// lower target id. The committed dwell at the winning transit time comes
/// from an exhaustive solve.
pub fn solve_decision(
    form: RhcpForm,
    snap: &NeighborhoodSnapshot,
    graph: &NetworkGraph,
    params: &MethodParams,
    calib: Option<&FoCalibration>,
) -> Result<DecisionOutcome> {
    let i = snap.current;
    let mut candidates: Vec<usize> = snap
        .members
        .iter()
        .map(|m| m.id)
        .filter(|&id| id != i)
        .collect();
    candidates.sort_unstable();
    if candidates.is_empty() {
        return Ok(DecisionOutcome::WaitForUncovering);
    }
    let energy_blind = matches!(params.method, Method::Fo1 | Method::Fo2);

    let mut best: Option<(f64, usize, TransitPlan)> = None;
    for &j in &candidates {
        let vf = value_fn_with_effort(snap, j, form, SolveEffort::Fast)?;
        let y = graph.edge(i, j)?.length();
        let plan = plan_transit(&vf, params, calib, y)?;
        let j_sh = vf.value(plan.rho)?;
        let rank = if energy_blind {
            j_sh
        } else {
            params.alpha * plan.energy + j_sh
        };
        let better = match &best {
            Some((bv, _, _)) => rank < *bv,
            None => true,
        };
        if better {
            best = Some((rank, j, plan));
        }
    }
    let (_, j, plan) = best.expect("nonempty candidates");

    // Commit with an exhaustive dwell solve at the chosen transit time.
    let dwell: SensingSolution = match form {
        RhcpForm::Rhcp1 => rhcp1_dwell(snap, j, plan.rho)?,
        RhcpForm::Rhcp2 => rhcp2_dwell(snap, j, plan.rho)?,
        RhcpForm::Rhcp3 => rhcp3_dwell(snap, j, plan.rho)?,
    };
    Ok(DecisionOutcome::Commit(Decision {
        form,
        tau_i: dwell.tau_i,
        taubar_i: dwell.taubar_i,
        next: j,
        plan,
        tau_j: dwell.tau_j,
        taubar_j: dwell.taubar_j,
        j_sh: dwell.j_star,
        j_h: params.alpha * plan.energy + dwell.j_star,
    }))
}

// ---------------------------------------------------------------------------
// The world.
// ---------------------------------------------------------------------------

/// One line of the event log: every event or commitment that mutates world
/// state appends a record.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LogRecord {
    pub t: f64,
    pub kind: String,
    pub agent: Option<usize>,
    pub target: Option<usize>,
    pub detail: serde_json::Value,
}

/// Diagnostics captured at the first departure commitment — the quantities a
/// parameter sweep tabulates.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DepartureDiag {
    /// Departure instant.
    pub t_o: f64,
    /// Committed transit time ρ*.
    pub rho: f64,
    pub v_peak: f64,
    pub u_peak: f64,
    /// Sensing cost J*_sH(ρ*).
    pub j_sh: f64,
    /// Unweighted transit energy ∫u².
    pub j_eh: f64,
    /// α·J_eH + J_sH.
    pub j_h: f64,
}

/// Instantaneous state snapshot used for time-series output; never feeds
/// back into the dynamics.
#[derive(Clone, Debug)]
pub struct SampleRow {
    pub t: f64,
    /// Per-agent (x, y, v, u).
    pub agents: Vec<[f64; 4]>,
    /// Per-target uncertainty.
    pub r: Vec<f64>,
}

/// The shared simulation state: network, targets, agents, the event queue,
/// and exact running cost accumulators.
#[derive(Debug)]
pub struct World {
    graph: NetworkGraph,
    horizon: f64,
    params: MethodParams,
    calib: Option<FoCalibration>,
    /// Whether covering/uncovering broadcasts exist (more than one agent).
    multi: bool,
    clock: f64,
    targets: Vec<TargetState>,
    /// Bumped on every occupancy change; invalidates pending empty timers.
    target_gen: Vec<u64>,
    /// Claim counts: dwelling on or en route to the target.
    cover: Vec<u32>,
    agents: Vec<AgentState>,
    queue: BinaryHeap<Reverse<Event>>,
    seq: u64,
    log: Vec<LogRecord>,
    /// ∫ Σ R_i dt so far, accumulated exactly per inter-event interval.
    acc_sensing: f64,
    /// Σ ∫ u² over all committed transits, clipped to [0, clock].
    acc_energy: f64,
    agent_energy: Vec<f64>,
    v_max: f64,
    u_max: f64,
    visits: Vec<u64>,
    handled: u64,
    solves: u64,
    first_departure: Option<DepartureDiag>,
}

impl World {
    /// Builds the world at t = 0: agents claim their start targets, empties
    /// are scheduled, and every agent solves its initial decision in id
    /// order (arrival trigger).
    pub fn new(
        graph: NetworkGraph,
        horizon: f64,
        params: MethodParams,
        calib: Option<FoCalibration>,
        starts: &[usize],
    ) -> Result<World> {
        params.validate()?;
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::Config(format!(
                "planning horizon must be > 0, got {horizon}"
            )));
        }
        if starts.is_empty() {
            return Err(Error::Config("no agents".to_string()));
        }
        let m = graph.target_count();
        for (a, &s) in starts.iter().enumerate() {
            if s >= m {
                return Err(Error::Config(format!(
                    "agents[{a}].start: target {s} out of range for {m} targets"
                )));
            }
            if starts[..a].contains(&s) {
                return Err(Error::Config(format!(
                    "agents[{a}].start: target {s} already taken (starts must be distinct)"
                )));
            }
        }
        if matches!(params.method, Method::Fo1 | Method::Fo2) && calib.is_none() {
            return Err(Error::Config(format!(
                "method {:?} needs a first-order calibration",
                params.method
            )));
        }

        let targets: Vec<TargetState> = graph
            .targets()
            .iter()
            .map(|n| TargetState::new(n.r0, &n.params))
            .collect();
        let agents: Vec<AgentState> = starts
            .iter()
            .enumerate()
            .map(|(a, &s)| AgentState {
                id: a,
                mode: AgentMode::Waiting { target: s },
                theta: 0.0,
                position: graph.targets()[s].location,
                plan: None,
                decision: None,
                gen: 0,
                last_view: Vec::new(),
            })
            .collect();
        let mut world = World {
            multi: starts.len() > 1,
            horizon,
            params,
            calib,
            clock: 0.0,
            target_gen: vec![0; m],
            cover: vec![0; m],
            queue: BinaryHeap::new(),
            seq: 0,
            log: Vec::new(),
            acc_sensing: 0.0,
            acc_energy: 0.0,
            agent_energy: vec![0.0; starts.len()],
            v_max: 0.0,
            u_max: 0.0,
            visits: vec![0; m],
            handled: 0,
            solves: 0,
            first_departure: None,
            graph,
            targets,
            agents,
        };
        // Claim all occupancies first so every initial solve sees the full
        // coverage picture, then decide in agent-id order.
        for a in 0..world.agents.len() {
            let s = starts[a];
            world.claim_occupancy(a, s, true)?;
            world.push_log("arrival", Some(a), Some(s), json!({ "initial": true }));
        }
        for a in 0..world.agents.len() {
            world.commit_decision(a, DecisionTrigger::Arrival)?;
        }
        Ok(world)
    }

    // -- read access ------------------------------------------------------

    pub fn clock(&self) -> f64 {
        self.clock
    }
    pub fn graph(&self) -> &NetworkGraph {
        &self.graph
    }
    pub fn horizon(&self) -> f64 {
        self.horizon
    }
    pub fn params(&self) -> &MethodParams {
        &self.params
    }
    pub fn calibration(&self) -> Option<FoCalibration> {
        self.calib
    }
    pub fn agents(&self) -> &[AgentState] {
        &self.agents
    }
    pub fn target_states(&self) -> &[TargetState] {
        &self.targets
    }
    pub fn cover_count(&self, i: usize) -> u32 {
        self.cover[i]
    }
    pub fn log(&self) -> &[LogRecord] {
        &self.log
    }
    pub fn into_log(self) -> Vec<LogRecord> {
        self.log
    }
    pub fn acc_sensing(&self) -> f64 {
        self.acc_sensing
    }
    pub fn acc_energy(&self) -> f64 {
        self.acc_energy
    }
    pub fn agent_energy(&self) -> &[f64] {
        &self.agent_energy
    }
    pub fn v_max(&self) -> f64 {
        self.v_max
    }
    pub fn u_max(&self) -> f64 {
        self.u_max
    }
    pub fn visits(&self) -> &[u64] {
        &self.visits
    }
    pub fn handled_events(&self) -> u64 {
        self.handled
    }
    pub fn decision_solves(&self) -> u64 {
        self.solves
    }
    pub fn first_departure(&self) -> Option<DepartureDiag> {
        self.first_departure
    }

    /// Time of the next live event, skipping stale timers.
    pub fn peek_time(&mut self) -> Option<f64> {
        loop {
            let ev = self.queue.peek()?.0.clone();
            if self.is_stale(&ev) {
                self.queue.pop();
                continue;
            }
            return Some(ev.time);
        }
    }

    /// Pops the next live event, advances the continuous state to its time,
    /// and handles it. Returns the handled event, or None when the queue is
    /// exhausted.
    pub fn step(&mut self) -> Result<Option<Event>> {
        let ev = loop {
            match self.queue.pop() {
                None => return Ok(None),
                Some(Reverse(ev)) => {
                    if !self.is_stale(&ev) {
                        break ev;
                    }
                }
            }
        };
        self.advance_to(ev.time)?;
        self.handle_event(&ev)?;
        Ok(Some(ev))
    }

    /// Whether a queued timer belongs to a superseded commitment.
    fn is_stale(&self, ev: &Event) -> bool {
        match ev.kind {
            EventKind::EmptyReached { target, gen } => self.target_gen[target] != gen,
            EventKind::ActiveDone { agent, gen }
            | EventKind::IdleDone { agent, gen }
            | EventKind::TransitDone { agent, gen } => self.agents[agent].gen != gen,
            _ => false,
        }
    }

    // -- continuous advance -----------------------------------------------

    /// Advances the continuous state to `t` (must not precede the clock),
    /// accumulating ∫ΣR dt exactly per target and the partial transit
    /// energies and running peaks per agent.
    pub fn advance_to(&mut self, t: f64) -> Result<()> {
        let dt = t - self.clock;
        if dt < 0.0 {
            if dt < -1e-9 * (1.0 + self.clock.abs()) {
                return Err(Error::Domain(format!(
                    "advance_to({t}) precedes the clock {}",
                    self.clock
                )));
            }
            return Ok(());
        }
        if dt == 0.0 {
            return Ok(());
        }
        for k in 0..self.targets.len() {
            let params = self.graph.targets()[k].params;
            let (next, cost) = advance_with_cost(&self.targets[k], &params, dt)?;
            self.targets[k] = next;
            self.acc_sensing += cost;
        }
        for a in 0..self.agents.len() {
            if let Some(plan) = self.agents[a].plan {
                let t0 = self.clock.max(plan.t_o);
                let t1 = t.min(plan.t_f);
                if t1 > t0 {
                    let de = plan.energy_until(t1) - plan.energy_until(t0);
                    self.acc_energy += de;
                    self.agent_energy[a] += de;
                    self.v_max = self.v_max.max(plan.peak_v_until(t1));
                    self.u_max = self.u_max.max(plan.peak_u_until(t1));
                }
            }
        }
        self.clock = t;
        Ok(())
    }

    /// Read-only state snapshot at `s ≥ clock`, assuming no event fires in
    /// between (the caller samples strictly before handling the next event).
    pub fn sample_row(&self, s: f64) -> Result<SampleRow> {
        let dt = (s - self.clock).max(0.0);
        let mut r = Vec::with_capacity(self.targets.len());
        for k in 0..self.targets.len() {
            let params = self.graph.targets()[k].params;
            r.push(advance(&self.targets[k], &params, dt)?.r);
        }
        let mut agents = Vec::with_capacity(self.agents.len());
        for ag in &self.agents {
            match (&ag.mode, &ag.plan) {
                (AgentMode::Transiting { from, to }, Some(plan)) => {
                    let seg = self.graph.edge(*from, *to)?;
                    let dist = plan.distance_at(s);
                    let (pos, _) = seg.position_and_heading(dist)?;
                    agents.push([pos[0], pos[1], plan.v_at(s), plan.u_at(s)]);
                }
                _ => {
                    agents.push([ag.position[0], ag.position[1], 0.0, 0.0]);
                }
            }
        }
        Ok(SampleRow { t: s, agents, r })
    }

    // -- event handling -----------------------------------------------------

    /// Applies one event at the current clock. Timer freshness was already
    /// checked by `step`.
    pub fn handle_event(&mut self, ev: &Event) -> Result<()> {
        self.handled += 1;
        let label = ev.kind.label();
        match ev.kind {
            EventKind::EmptyReached { target, .. } => {
                // The drain hits zero exactly here; clear the rounding dust.
                let st = &mut self.targets[target];
                if st.occupied && st.r <= R_EPS {
                    st.r = 0.0;
                    st.slope = 0.0;
                }
                self.push_log(label, None, Some(target), json!({}));
            }
            EventKind::ActiveDone { agent, .. } => {
                let i = self.current_target(agent)?;
                self.clamp_tiny(i);
                self.push_log(label, Some(agent), Some(i), json!({}));
                self.commit_decision(agent, DecisionTrigger::ActiveDone)?;
            }
            EventKind::IdleDone { agent, .. } => {
                let i = self.current_target(agent)?;
                self.push_log(label, Some(agent), Some(i), json!({}));
                self.commit_decision(agent, DecisionTrigger::IdleDone)?;
            }
            EventKind::TransitDone { agent, .. } => {
                let to = match self.agents[agent].mode {
                    AgentMode::Transiting { to, .. } => to,
                    _ => {
                        return Err(Error::Domain(format!(
                            "agent {agent} finished a transit it is not on"
                        )))
                    }
                };
                self.push_log(label, Some(agent), Some(to), json!({}));
                let ev = self.make_event(ev.time, EventKind::Arrival { agent, target: to });
                self.queue.push(Reverse(ev));
            }
            EventKind::Arrival { agent, target } => {
                // The agent followed the segment; its heading is the end
                // tangent.
                if let AgentMode::Transiting { from, to } = self.agents[agent].mode {
                    let seg = self.graph.edge(from, to)?;
                    let (_, theta) = seg.position_and_heading(seg.length())?;
                    self.agents[agent].theta = theta;
                }
                self.claim_occupancy(agent, target, false)?;
                self.push_log(label, Some(agent), Some(target), json!({}));
                if self.multi {
                    let ev = self.make_event(ev.time, EventKind::Covering { target });
                    self.queue.push(Reverse(ev));
                }
                self.commit_decision(agent, DecisionTrigger::Arrival)?;
            }
            EventKind::Departure { agent, from, to } => {
                // State already mutated at commitment; notification only.
                let theta = self.agents[agent].theta;
                self.push_log(
                    label,
                    Some(agent),
                    Some(from),
                    json!({ "to": to, "theta": theta }),
                );
            }
            EventKind::Covering { target } => {
                self.push_log(label, None, Some(target), json!({}));
                self.fan_out(target)?;
            }
            EventKind::Uncovering { target } => {
                self.push_log(label, None, Some(target), json!({}));
                self.fan_out(target)?;
            }
        }
        Ok(())
    }

    /// Re-solves every dwelling or waiting agent whose effective
    /// neighborhood actually changed with `target`'s coverage flip.
    fn fan_out(&mut self, target: usize) -> Result<()> {
        for a in 0..self.agents.len() {
            let i = match self.agents[a].mode.dwelling_target() {
                Some(i) => i,
                None => continue, // transit commitments are irrevocable
            };
            if !self.graph.neighbors(i).contains(&target) {
                continue;
            }
            let view = self.effective_view(i);
            if view == self.agents[a].last_view {
                continue;
            }
            self.clamp_tiny(i);
            self.commit_decision(a, DecisionTrigger::NeighborChange)?;
        }
        Ok(())
    }

    // -- decision plumbing --------------------------------------------------

    fn current_target(&self, agent: usize) -> Result<usize> {
        self.agents[agent].mode.dwelling_target().ok_or_else(|| {
            Error::Domain(format!("agent {agent} is in transit and has no dwell target"))
        })
    }

    /// Unclaimed neighbors of `i`, ascending.
    fn effective_view(&self, i: usize) -> Vec<usize> {
        self.graph
            .neighbors(i)
            .iter()
            .copied()
            .filter(|&j| self.cover[j] == 0)
            .collect()
    }

    /// Treats rounding dust as an exactly-empty target before classifying.
    fn clamp_tiny(&mut self, i: usize) {
        let st = &mut self.targets[i];
        if st.occupied && st.r > 0.0 && st.r <= R_EPS {
            st.r = 0.0;
            st.slope = 0.0;
        }
    }

    /// Claims occupancy of `target` for `agent`: at most one agent may
    /// attend a target, and the claim starts the drain and its empty timer.
    /// `fresh_claim` distinguishes initialization (the coverage count is
    /// taken here) from arrival (the agent has counted since departure).
    fn claim_occupancy(&mut self, agent: usize, target: usize, fresh_claim: bool) -> Result<()> {
        if self.targets[target].occupied {
            return Err(Error::Domain(format!(
                "agent {agent} arrived at target {target} while another agent attends it"
            )));
        }
        let params = self.graph.targets()[target].params;
        let st = &mut self.targets[target];
        st.occupied = true;
        st.slope = slope_for(&params, st.r, true);
        self.target_gen[target] += 1;
        self.visits[target] += 1;
        if fresh_claim {
            self.cover[target] += 1;
        }
        let location = self.graph.targets()[target].location;
        let ag = &mut self.agents[agent];
        ag.plan = None;
        ag.position = location;
        ag.mode = AgentMode::Waiting { target };
        if let Some(tte) = time_to_empty(&self.targets[target], &params) {
            if tte > 0.0 {
                let gen = self.target_gen[target];
                let ev =
                    self.make_event(self.clock + tte, EventKind::EmptyReached { target, gen });
                self.queue.push(Reverse(ev));
            }
        }
        Ok(())
    }

    /// Solves and commits one decision for `agent` at the current clock.
    fn commit_decision(&mut self, agent: usize, trigger: DecisionTrigger) -> Result<()> {
        let i = self.current_target(agent)?;
        let r_i = self.targets[i].r;
        let form = classify_rhcp(trigger, r_i);
        let view = self.effective_view(i);
        self.agents[agent].last_view = view.clone();
        self.agents[agent].gen += 1;
        let gen = self.agents[agent].gen;

        if view.is_empty() {
            self.agents[agent].mode = AgentMode::Waiting { target: i };
            self.agents[agent].decision = None;
            self.push_log(
                "wait",
                Some(agent),
                Some(i),
                json!({ "reason": "all neighbors covered" }),
            );
            return Ok(());
        }

        let members: Vec<NeighborTarget> = std::iter::once(i)
            .chain(view.iter().copied())
            .map(|id| {
                let node = &self.graph.targets()[id];
                NeighborTarget {
                    id,
                    a: node.params.a,
                    b: node.params.b,
                    r: self.targets[id].r,
                }
            })
            .collect();
        let snap = NeighborhoodSnapshot {
            t_s: self.clock,
            current: i,
            members,
            horizon: self.horizon,
        };
        self.solves += 1;
        let outcome = solve_decision(form, &snap, &self.graph, &self.params, self.calib.as_ref())?;
        let d = match outcome {
            DecisionOutcome::WaitForUncovering => {
                self.agents[agent].mode = AgentMode::Waiting { target: i };
                self.agents[agent].decision = None;
                self.push_log(
                    "wait",
                    Some(agent),
                    Some(i),
                    json!({ "reason": "all neighbors covered" }),
                );
                return Ok(());
            }
            DecisionOutcome::Commit(d) => d,
        };

        self.push_log(
            "decision",
            Some(agent),
            Some(i),
            json!({
                "form": format!("{:?}", d.form),
                "next": d.next,
                "tau_i": d.tau_i,
                "taubar_i": d.taubar_i,
                "rho": d.plan.rho,
                "tau_j": d.tau_j,
                "taubar_j": d.taubar_j,
                "j_sh": d.j_sh,
                "j_h": d.j_h,
            }),
        );

        match d.form {
            RhcpForm::Rhcp3 => self.execute_departure(agent, i, &d)?,
            RhcpForm::Rhcp1 => {
                let until = self.clock + d.tau_i;
                self.agents[agent].mode = AgentMode::DwellingActive { target: i, until };
                let ev = self.make_event(until, EventKind::ActiveDone { agent, gen });
                self.queue.push(Reverse(ev));
            }
            RhcpForm::Rhcp2 => {
                let until = self.clock + d.taubar_i;
                self.agents[agent].mode = AgentMode::DwellingIdle { target: i, until };
                let ev = self.make_event(until, EventKind::IdleDone { agent, gen });
                self.queue.push(Reverse(ev));
            }
        }
        self.agents[agent].decision = Some(d);
        Ok(())
    }

    /// Applies a departure-readiness commitment: vacates the current target,
    /// claims the destination, anchors the plan, and emits the notification
    /// events.
    fn execute_departure(&mut self, agent: usize, i: usize, d: &Decision) -> Result<()> {
        let j = d.next;
        let seg = self.graph.edge(i, j)?;
        let theta = seg.initial_heading();
        let params = self.graph.targets()[i].params;

        // Vacate i.
        let st = &mut self.targets[i];
        st.occupied = false;
        st.slope = slope_for(&params, st.r, false);
        self.target_gen[i] += 1;
        self.cover[i] = self.cover[i].saturating_sub(1);

        // Claim j en route and commit the motion.
        self.cover[j] += 1;
        let plan = d.plan.anchored(self.clock);
        let ag = &mut self.agents[agent];
        ag.mode = AgentMode::Transiting { from: i, to: j };
        ag.plan = Some(plan);
        ag.theta = theta;
        let gen = self.agents[agent].gen;

        if self.first_departure.is_none() {
            self.first_departure = Some(DepartureDiag {
                t_o: self.clock,
                rho: plan.rho,
                v_peak: plan.v_peak,
                u_peak: plan.u_peak,
                j_sh: d.j_sh,
                j_eh: plan.energy,
                j_h: d.j_h,
            });
        }

        let ev = self.make_event(plan.t_f, EventKind::TransitDone { agent, gen });
        self.queue.push(Reverse(ev));
        let ev = self.make_event(
            self.clock,
            EventKind::Departure {
                agent,
                from: i,
                to: j,
            },
        );
        self.queue.push(Reverse(ev));
        if self.multi {
            let ev = self.make_event(self.clock, EventKind::Covering { target: j });
            self.queue.push(Reverse(ev));
            let ev = self.make_event(self.clock, EventKind::Uncovering { target: i });
            self.queue.push(Reverse(ev));
        }
        Ok(())
    }

    fn make_event(&mut self, time: f64, kind: EventKind) -> Event {
        let seq = self.seq;
        self.seq += 1;
        Event { time, kind, seq }
    }

    fn push_log(
        &mut self,
        kind: &str,
        agent: Option<usize>,
        target: Option<usize>,
        detail: serde_json::Value,
    ) {
        self.log.push(LogRecord {
            t: self.clock,
            kind: kind.to_string(),
            agent,
            target,
            detail,
        });
    }
}
