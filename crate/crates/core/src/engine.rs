//! Indoor discrete-event simulator and the three indoor experiments.
//!
//! One run owns a single event queue ordered by (time, insertion order).
//! Terminals move by random waypoint on a fixed tick, calls arrive as a
//! Poisson process per idle terminal and hold for an exponential time. Zone
//! changes feed the handover policy, and every handover that passes
//! admission control executes the matching signalling flow.
//!
//! Sweeps parallelise over independent seeded streams and are merged in
//! parameter order, so results never depend on the thread count.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{
    self, femto_path_loss, femto_path_loss_walls, optical_channel_gain, optical_sinr, rf_sinr,
    shannon_capacity, LinkGeometry, OpticalParams, RfParams,
};
use crate::error::{validation, Result};
use crate::policy::{
    self, admit_new_call, fap_idle_probability, fap_mode_update, handover_decision, AdmissionDecision,
    ApKind, ApMode, CallRequest, ConnectedUser, DwellTimers, HandoverContext, HandoverDecision,
    NetworkState, PolicyParams, ServingAp, TrafficClass, ZoneTransition,
};
use crate::protocol::{self, FaultPlan, HandoverKind, LatencyModel, Topology};
use crate::rng::{self, SimRng, Subsystem};
use crate::stats;
use crate::zoning::{monte_carlo_zone_model, plan_grid, GridPlan, Point, Zone};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoomConfig {
    pub a_m: f64,
    pub b_m: f64,
    pub radius_m: f64,
}

impl Default for RoomConfig {
    fn default() -> Self {
        Self { a_m: 24.0, b_m: 24.0, radius_m: 5.0 }
    }
}

impl RoomConfig {
    pub fn plan(&self) -> Result<GridPlan> {
        plan_grid(self.a_m, self.b_m, self.radius_m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MobilityConfig {
    pub speed_min_mps: f64,
    pub speed_max_mps: f64,
    pub pause_max_s: f64,
    pub tick_s: f64,
}

impl Default for MobilityConfig {
    fn default() -> Self {
        Self { speed_min_mps: 0.5, speed_max_mps: 1.5, pause_max_s: 5.0, tick_s: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficConfig {
    /// Call attempts per minute per idle terminal.
    pub arrival_rate_per_min: f64,
    pub mean_holding_s: f64,
    pub voice_fraction: f64,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        Self { arrival_rate_per_min: 0.5, mean_holding_s: 120.0, voice_fraction: 0.3 }
    }
}

/// Signalling timing and loss for handovers run inside the simulator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolConfig {
    pub hop_latency_s: f64,
    pub jitter_s: f64,
    pub retransmit_timeout_s: f64,
    pub retry_budget: u32,
    /// Probability that a given step loses transmissions.
    pub drop_probability: f64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            hop_latency_s: 0.002,
            jitter_s: 0.0,
            retransmit_timeout_s: 0.02,
            retry_budget: 1,
            drop_probability: 0.0,
        }
    }
}

impl ProtocolConfig {
    fn validate(&self) -> Result<()> {
        if !(self.hop_latency_s >= 0.0 && self.jitter_s >= 0.0 && self.retransmit_timeout_s >= 0.0) {
            return Err(validation("protocol delays must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.drop_probability) {
            return Err(validation("protocol drop_probability must lie in [0, 1]"));
        }
        Ok(())
    }

    fn latency(&self, seed: u64) -> LatencyModel {
        if self.jitter_s > 0.0 {
            LatencyModel::Jittered { base_s: self.hop_latency_s, jitter_s: self.jitter_s, seed }
        } else {
            LatencyModel::Fixed { per_hop_s: self.hop_latency_s }
        }
    }

    fn faults(&self, seed: u64, index: u64, kind: HandoverKind) -> FaultPlan {
        let mut plan = if self.drop_probability > 0.0 {
            FaultPlan::random(seed, index, kind, self.drop_probability)
        } else {
            FaultPlan::none()
        };
        plan.retry_budget = self.retry_budget;
        plan.retransmit_timeout_s = self.retransmit_timeout_s;
        plan
    }
}

/// A terminal that never moves, optionally holding one call for the whole run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedTerminal {
    pub x_m: f64,
    pub y_m: f64,
    #[serde(default)]
    pub call: Option<TrafficClass>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub room: RoomConfig,
    /// Mobile terminals.
    pub users: usize,
    pub mobility: MobilityConfig,
    pub traffic: TrafficConfig,
    pub policy: PolicyParams,
    pub optical: OpticalParams,
    pub rf: RfParams,
    pub protocol: ProtocolConfig,
    pub duration_s: f64,
    pub seed: u64,
    pub fixed_terminals: Vec<FixedTerminal>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            room: RoomConfig::default(),
            users: 10,
            mobility: MobilityConfig::default(),
            traffic: TrafficConfig::default(),
            policy: PolicyParams::default(),
            optical: OpticalParams::default(),
            rf: RfParams::default(),
            protocol: ProtocolConfig::default(),
            duration_s: 600.0,
            seed: 1,
            fixed_terminals: Vec::new(),
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<GridPlan> {
        let plan = self.room.plan()?;
        let m = &self.mobility;
        if !(m.speed_min_mps > 0.0 && m.speed_max_mps >= m.speed_min_mps && m.speed_max_mps.is_finite()) {
            return Err(validation("mobility speeds must satisfy 0 < min <= max"));
        }
        if !(m.pause_max_s >= 0.0 && m.tick_s > 0.0 && m.tick_s.is_finite()) {
            return Err(validation("mobility pause must be >= 0 and tick > 0"));
        }
        let t = &self.traffic;
        if !(t.arrival_rate_per_min > 0.0 && t.mean_holding_s > 0.0) {
            return Err(validation("traffic rates and holding time must be positive"));
        }
        if !(0.0..=1.0).contains(&t.voice_fraction) {
            return Err(validation("voice_fraction must lie in [0, 1]"));
        }
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(validation("duration_s must be positive"));
        }
        for f in &self.fixed_terminals {
            if !plan.contains(&Point::new(f.x_m, f.y_m)) {
                return Err(validation(format!("fixed terminal ({}, {}) is outside the room", f.x_m, f.y_m)));
            }
        }
        self.policy.validate()?;
        self.optical.validate()?;
        self.rf.validate()?;
        self.protocol.validate()?;
        Ok(plan)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CallState {
    Idle,
    Active { call_id: u64, traffic_class: TrafficClass, serving: ServingAp },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Terminal {
    pub id: usize,
    pub position: Point,
    pub speed_mps: f64,
    pub waypoint: Point,
    pub pause_until_s: f64,
    pub mobile: bool,
    /// Fixed terminals with a pinned call never hang up.
    pub pinned_call: Option<TrafficClass>,
    pub call: CallState,
    pub zone: Zone,
    pub timers: DwellTimers,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdmissionCounts {
    pub accept_on_fap: u64,
    pub accept_on_lifi: u64,
    pub redirected: u64,
    pub blocked: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HandoverCounts {
    pub attempted: u64,
    pub completed: u64,
    pub failed: u64,
    /// Rejected by admission control at the target before signalling.
    pub blocked: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub admissions: AdmissionCounts,
    pub lifi_to_femto: HandoverCounts,
    pub femto_to_lifi: HandoverCounts,
    pub lifi_to_lifi: HandoverCounts,
    /// FAP-to-LiFi moves ordered by idle-mode selection.
    pub idle_shifts: u64,
    /// Handovers forced by leaving the serving AP's coverage.
    pub forced_handovers: u64,
    pub dropped_calls: u64,
    pub completed_calls: u64,
    pub fap_idle_time_fraction: f64,
    pub lifi_call_time_s: f64,
    pub fap_call_time_s: f64,
    pub sinr_samples_db: Vec<f64>,
    pub capacity_samples_bps: Vec<f64>,
    pub handover_latency_s: Vec<f64>,
    pub events_processed: u64,
    /// Slot accounting, event ordering, zone consistency or trace violations.
    pub invariant_violations: u64,
}

impl Metrics {
    pub fn handovers(&self, kind: HandoverKind) -> &HandoverCounts {
        match kind {
            HandoverKind::LifiToFemto => &self.lifi_to_femto,
            HandoverKind::FemtoToLifi => &self.femto_to_lifi,
            HandoverKind::LifiToLifi => &self.lifi_to_lifi,
        }
    }

    fn handovers_mut(&mut self, kind: HandoverKind) -> &mut HandoverCounts {
        match kind {
            HandoverKind::LifiToFemto => &mut self.lifi_to_femto,
            HandoverKind::FemtoToLifi => &mut self.femto_to_lifi,
            HandoverKind::LifiToLifi => &mut self.lifi_to_lifi,
        }
    }

    pub fn completed_handovers(&self) -> u64 {
        HandoverKind::ALL.iter().map(|&k| self.handovers(k).completed).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EventKind {
    Tick(u64),
    CallArrival(usize),
    CallEnd { terminal: usize, call_id: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Event {
    time: f64,
    seq: u64,
    kind: EventKind,
}

impl Eq for Event {}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.time.total_cmp(&other.time).then(self.seq.cmp(&other.seq))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Seconds between SINR/capacity samples.
const SAMPLE_PERIOD_S: f64 = 1.0;

struct Sim<'a> {
    cfg: &'a ScenarioConfig,
    plan: GridPlan,
    state: NetworkState,
    terminals: Vec<Terminal>,
    mobility_rngs: Vec<SimRng>,
    traffic_rngs: Vec<SimRng>,
    queue: BinaryHeap<Reverse<Event>>,
    seq: u64,
    now: f64,
    next_call_id: u64,
    handover_index: u64,
    metrics: Metrics,
}

/// Runs one indoor scenario. Identical configs give identical metrics.
pub fn simulate_indoor(cfg: &ScenarioConfig) -> Result<Metrics> {
    let plan = cfg.validate()?;
    let mut sim = Sim::new(cfg, plan);
    sim.run()?;
    Ok(sim.metrics)
}

impl<'a> Sim<'a> {
    fn new(cfg: &'a ScenarioConfig, plan: GridPlan) -> Self {
        let total = cfg.users + cfg.fixed_terminals.len();
        let state = NetworkState::new(plan.ap_count(), &cfg.policy);
        let mut mobility_rngs = Vec::with_capacity(total);
        let mut traffic_rngs = Vec::with_capacity(total);
        let mut terminals = Vec::with_capacity(total);
        for id in 0..total {
            let mut mob = rng::stream(cfg.seed, Subsystem::Mobility, id as u64);
            let (position, mobile, pinned_call) = if id < cfg.users {
                let mut place = rng::stream(cfg.seed, Subsystem::Placement, id as u64);
                (uniform_point(&plan, &mut place), true, None)
            } else {
                let f = cfg.fixed_terminals[id - cfg.users];
                (Point::new(f.x_m, f.y_m), false, f.call)
            };
            let waypoint = if mobile { uniform_point(&plan, &mut mob) } else { position };
            let speed = rng::uniform(&mut mob, cfg.mobility.speed_min_mps, cfg.mobility.speed_max_mps);
            let zone = plan.zone_of(&position);
            let mut timers = DwellTimers::new(cfg.policy.t_h_s, cfg.policy.t_h1_s);
            timers.observe(None, zone, 0.0);
            terminals.push(Terminal {
                id,
                position,
                speed_mps: speed,
                waypoint,
                pause_until_s: 0.0,
                mobile,
                pinned_call,
                call: CallState::Idle,
                zone,
                timers,
            });
            mobility_rngs.push(mob);
            traffic_rngs.push(rng::stream(cfg.seed, Subsystem::Traffic, id as u64));
        }
        Self {
            cfg,
            plan,
            state,
            terminals,
            mobility_rngs,
            traffic_rngs,
            queue: BinaryHeap::new(),
            seq: 0,
            now: 0.0,
            next_call_id: 0,
            handover_index: 0,
            metrics: Metrics::default(),
        }
    }

    fn schedule(&mut self, time: f64, kind: EventKind) {
        if time < self.now {
            self.metrics.invariant_violations += 1;
        }
        if time <= self.cfg.duration_s {
            self.seq += 1;
            self.queue.push(Reverse(Event { time, seq: self.seq, kind }));
        }
    }

    fn schedule_next_arrival(&mut self, id: usize) {
        let mean_gap = 60.0 / self.cfg.traffic.arrival_rate_per_min;
        let gap = rng::exponential(&mut self.traffic_rngs[id], mean_gap);
        self.schedule(self.now + gap, EventKind::CallArrival(id));
    }

    fn run(&mut self) -> Result<()> {
        for id in 0..self.terminals.len() {
            if self.terminals[id].pinned_call.is_some() {
                self.schedule(0.0, EventKind::CallArrival(id));
            } else {
                self.schedule_next_arrival(id);
            }
        }
        let tick = self.cfg.mobility.tick_s;
        self.schedule(tick, EventKind::Tick(1));
        let mut ticks = 0u64;
        let mut idle_ticks = 0u64;

        while let Some(Reverse(ev)) = self.queue.pop() {
            if ev.time < self.now {
                self.metrics.invariant_violations += 1;
            }
            self.now = ev.time;
            self.metrics.events_processed += 1;
            match ev.kind {
                EventKind::Tick(k) => {
                    self.on_tick()?;
                    self.fap_maintenance()?;
                    ticks += 1;
                    if self.state.fap.mode == ApMode::Idle {
                        idle_ticks += 1;
                    }
                    self.accumulate_call_time(tick);
                    let every = (SAMPLE_PERIOD_S / tick).round().max(1.0) as u64;
                    if k % every == 0 {
                        self.sample_links()?;
                    }
                    self.schedule((k + 1) as f64 * tick, EventKind::Tick(k + 1));
                }
                EventKind::CallArrival(id) => {
                    self.on_arrival(id)?;
                    self.fap_maintenance()?;
                }
                EventKind::CallEnd { terminal, call_id } => {
                    self.on_call_end(terminal, call_id)?;
                    self.fap_maintenance()?;
                }
            }
            self.check_invariants();
        }
        self.metrics.fap_idle_time_fraction = if ticks == 0 {
            if self.state.fap.mode == ApMode::Idle { 1.0 } else { 0.0 }
        } else {
            idle_ticks as f64 / ticks as f64
        };
        Ok(())
    }

    fn check_invariants(&mut self) {
        let active = self.terminals.iter().filter(|t| matches!(t.call, CallState::Active { .. })).count();
        if active as u32 != self.state.occupied_total() || self.state.check_invariants().is_err() {
            self.metrics.invariant_violations += 1;
        }
        for t in &self.terminals {
            if t.zone != self.plan.zone_of(&t.position) || !self.plan.contains(&t.position) {
                self.metrics.invariant_violations += 1;
            }
        }
    }

    fn accumulate_call_time(&mut self, dt: f64) {
        for t in &self.terminals {
            if let CallState::Active { serving, .. } = t.call {
                match serving.kind() {
                    ApKind::Lifi => self.metrics.lifi_call_time_s += dt,
                    ApKind::Fap => self.metrics.fap_call_time_s += dt,
                }
            }
        }
    }

    fn on_arrival(&mut self, id: usize) -> Result<()> {
        if matches!(self.terminals[id].call, CallState::Active { .. }) {
            return Ok(());
        }
        let rng = &mut self.traffic_rngs[id];
        let class = match self.terminals[id].pinned_call {
            Some(c) => c,
            None if rng::uniform01(rng) < self.cfg.traffic.voice_fraction => TrafficClass::RtVoice,
            None => TrafficClass::Data,
        };
        let hold = rng::exponential(rng, self.cfg.traffic.mean_holding_s);
        let t = &self.terminals[id];
        self.next_call_id += 1;
        let request = CallRequest {
            call_id: self.next_call_id,
            terminal_id: id,
            traffic_class: class,
            zone: t.zone,
            arrival_time_s: self.now,
            lifi_ap: t.zone.has_lifi().then(|| self.plan.nearest_ap(&t.position).0),
        };
        let decision = admit_new_call(&request, &self.state);
        let counts = &mut self.metrics.admissions;
        match decision {
            AdmissionDecision::AcceptOnFap => counts.accept_on_fap += 1,
            AdmissionDecision::AcceptOnLifi(_) => counts.accept_on_lifi += 1,
            AdmissionDecision::Redirected(_) => counts.redirected += 1,
            AdmissionDecision::Blocked => counts.blocked += 1,
        }
        match decision.serving() {
            Some(at) => {
                self.state.allocate(at)?;
                let t = &mut self.terminals[id];
                t.call = CallState::Active { call_id: request.call_id, traffic_class: class, serving: at };
                t.timers.last_handover_s = None;
                if t.pinned_call.is_none() {
                    self.schedule(self.now + hold, EventKind::CallEnd { terminal: id, call_id: request.call_id });
                }
            }
            None if self.terminals[id].pinned_call.is_none() => self.schedule_next_arrival(id),
            None => {}
        }
        Ok(())
    }

    fn on_call_end(&mut self, id: usize, call_id: u64) -> Result<()> {
        match self.terminals[id].call {
            CallState::Active { call_id: current, serving, .. } if current == call_id => {
                self.state.release(serving)?;
                self.terminals[id].call = CallState::Idle;
                self.metrics.completed_calls += 1;
                self.schedule_next_arrival(id);
            }
            // The call was dropped earlier.
            _ => {}
        }
        Ok(())
    }

    fn on_tick(&mut self) -> Result<()> {
        let dt = self.cfg.mobility.tick_s;
        for id in 0..self.terminals.len() {
            if self.terminals[id].mobile {
                self.advance(id, dt);
            }
            let t = &mut self.terminals[id];
            let old = t.zone;
            let new = self.plan.zone_of(&t.position);
            t.zone = new;
            t.timers.observe(Some(old), new, self.now);
            if matches!(t.call, CallState::Active { .. }) {
                self.evaluate_handover(id, ZoneTransition::new(old, new))?;
            }
        }
        Ok(())
    }

    fn advance(&mut self, id: usize, dt: f64) {
        let now = self.now;
        let t = &mut self.terminals[id];
        if now < t.pause_until_s {
            return;
        }
        let rng = &mut self.mobility_rngs[id];
        let dist = t.position.distance(&t.waypoint);
        let step = t.speed_mps * dt;
        if step >= dist {
            t.position = t.waypoint;
            t.pause_until_s = now + rng::uniform(rng, 0.0, self.cfg.mobility.pause_max_s);
            t.waypoint = uniform_point(&self.plan, rng);
            t.speed_mps = rng::uniform(rng, self.cfg.mobility.speed_min_mps, self.cfg.mobility.speed_max_mps);
        } else {
            let f = step / dist;
            t.position = Point::new(
                t.position.x + f * (t.waypoint.x - t.position.x),
                t.position.y + f * (t.waypoint.y - t.position.y),
            );
        }
    }

    fn lifi_gain(&self, ap: usize, p: &Point) -> Result<f64> {
        let l = self.plan.ap_centers[ap].distance(p);
        optical_channel_gain(&LinkGeometry::optical(l, &self.cfg.optical), &self.cfg.optical)
    }

    fn gain_db(&self, ap: usize, p: &Point) -> Result<f64> {
        Ok(channel::linear_to_db(self.lifi_gain(ap, p)?))
    }

    /// Strongest LiFi AP covering `p` other than `exclude`.
    fn best_covering_ap(&self, p: &Point, exclude: Option<usize>) -> Result<Option<(usize, f64)>> {
        let r = self.plan.coverage_radius_m;
        let mut best: Option<(usize, f64)> = None;
        for (i, c) in self.plan.ap_centers.iter().enumerate() {
            if Some(i) == exclude || c.distance(p) > r {
                continue;
            }
            let g = self.gain_db(i, p)?;
            if best.is_none_or(|(_, bg)| g > bg) {
                best = Some((i, g));
            }
        }
        Ok(best)
    }

    fn evaluate_handover(&mut self, id: usize, transition: ZoneTransition) -> Result<()> {
        let CallState::Active { traffic_class, serving, .. } = self.terminals[id].call else {
            return Ok(());
        };
        let pos = self.terminals[id].position;
        let serving_lifi = match serving {
            ServingAp::Lifi(j) => Some(j),
            ServingAp::Fap => None,
        };
        let s_serving_db = match serving_lifi {
            Some(j) => self.gain_db(j, &pos)?,
            None => f64::NEG_INFINITY,
        };
        let target = self.best_covering_ap(&pos, serving_lifi)?;
        let ctx = HandoverContext {
            serving_kind: serving.kind(),
            traffic_class,
            transition,
            s_serving_db,
            s_target_db: target.map_or(f64::NEG_INFINITY, |(_, g)| g),
            now_s: self.now,
        };
        let decision = match handover_decision(&ctx, &self.terminals[id].timers) {
            Ok(d) => d,
            Err(_) => {
                self.metrics.invariant_violations += 1;
                HandoverDecision::Stay
            }
        };
        match (decision, target) {
            (HandoverDecision::ToFap, _) => {
                self.attempt(id, HandoverKind::LifiToFemto, ServingAp::Fap)?;
            }
            (HandoverDecision::ToLifi, Some((t, _))) => {
                self.attempt(id, HandoverKind::FemtoToLifi, ServingAp::Lifi(t))?;
            }
            (HandoverDecision::ToTargetLifi, Some((t, _))) => {
                self.attempt(id, HandoverKind::LifiToLifi, ServingAp::Lifi(t))?;
            }
            _ => {}
        }

        // Outside the serving AP's footprint the optical link is gone
        // whatever the policy said: fall back to the FAP, then to another
        // LiFi AP, else the call drops.
        if let CallState::Active { serving: ServingAp::Lifi(j), .. } = self.terminals[id].call {
            if self.plan.ap_centers[j].distance(&pos) > self.plan.coverage_radius_m {
                self.metrics.forced_handovers += 1;
                let moved = self.attempt(id, HandoverKind::LifiToFemto, ServingAp::Fap)?
                    || match self.best_covering_ap(&pos, Some(j))? {
                        Some((t, _)) => self.attempt(id, HandoverKind::LifiToLifi, ServingAp::Lifi(t))?,
                        None => false,
                    };
                if !moved {
                    self.state.release(ServingAp::Lifi(j))?;
                    self.terminals[id].call = CallState::Idle;
                    self.metrics.dropped_calls += 1;
                    self.schedule_next_arrival(id);
                }
            }
        }
        Ok(())
    }

    /// Admission control at the target, then the signalling flow. Returns
    /// whether the terminal now sits on `target`.
    fn attempt(&mut self, id: usize, kind: HandoverKind, target: ServingAp) -> Result<bool> {
        let CallState::Active { call_id, traffic_class, serving } = self.terminals[id].call else {
            return Ok(false);
        };
        if serving == target {
            return Ok(false);
        }
        if !self.state.ap(target).is_some_and(|ap| ap.has_free_slot()) {
            self.metrics.handovers_mut(kind).blocked += 1;
            return Ok(false);
        }
        self.handover_index += 1;
        let pc = &self.cfg.protocol;
        let latency = pc.latency(self.cfg.seed ^ self.handover_index.rotate_left(32));
        let faults = pc.faults(self.cfg.seed, self.handover_index, kind);
        let trace = protocol::run_handover(kind, &Topology::for_kind(kind), &latency, &faults)?;
        if protocol::validate_trace(&trace).is_err() {
            self.metrics.invariant_violations += 1;
        }
        let counts = self.metrics.handovers_mut(kind);
        counts.attempted += 1;
        if !trace.is_complete() {
            counts.failed += 1;
            return Ok(false);
        }
        counts.completed += 1;
        self.metrics.handover_latency_s.push(trace.latency_s);
        self.state.release(serving)?;
        self.state.allocate(target)?;
        let t = &mut self.terminals[id];
        t.call = CallState::Active { call_id, traffic_class, serving: target };
        t.timers.last_handover_s = Some(self.now);
        Ok(true)
    }

    /// Idle-mode selection for the FAP after any change.
    fn fap_maintenance(&mut self) -> Result<()> {
        let users: Vec<ConnectedUser> = self
            .terminals
            .iter()
            .filter_map(|t| match t.call {
                CallState::Active { traffic_class, serving: ServingAp::Fap, .. } => {
                    Some(ConnectedUser { terminal_id: t.id, zone: t.zone, traffic_class })
                }
                _ => None,
            })
            .collect();
        let update = fap_mode_update(&users);
        if update.mode == ApMode::Active {
            return Ok(());
        }
        for &id in &update.shift_to_lifi {
            // Respect the ping-pong guard; maintenance runs again next tick.
            let timers = &self.terminals[id].timers;
            if timers.last_handover_s.is_some_and(|t| self.now - t < timers.t_h_s) {
                return Ok(());
            }
            let pos = self.terminals[id].position;
            let Some((ap, _)) = self.best_covering_ap(&pos, None)? else {
                return Ok(());
            };
            if !self.attempt(id, HandoverKind::FemtoToLifi, ServingAp::Lifi(ap))? {
                return Ok(());
            }
            self.metrics.idle_shifts += 1;
        }
        if self.state.fap.occupied_slots == 0 {
            self.state.fap.mode = ApMode::Idle;
        }
        Ok(())
    }

    fn sample_links(&mut self) -> Result<()> {
        for i in 0..self.terminals.len() {
            let t = &self.terminals[i];
            let CallState::Active { serving, .. } = t.call else { continue };
            let (sinr, bw) = match serving {
                ServingAp::Lifi(j) => {
                    let gains = (0..self.plan.ap_count())
                        .map(|k| self.lifi_gain(k, &t.position))
                        .collect::<Result<Vec<_>>>()?;
                    let interferers: Vec<f64> =
                        gains.iter().enumerate().filter(|&(k, _)| k != j).map(|(_, &g)| g).collect();
                    (optical_sinr(gains[j], &interferers, &self.cfg.optical), self.cfg.optical.bandwidth_hz)
                }
                ServingAp::Fap => {
                    let rf = &self.cfg.rf;
                    let d = self.plan.fap_center.distance(&t.position).max(1.0);
                    let rx = rf.fap_tx_dbm - femto_path_loss(d, rf)?;
                    (rf_sinr(rx, &[], rf.femto_noise_dbm()), rf.femto_bandwidth_hz)
                }
            };
            self.metrics.sinr_samples_db.push(sinr.db);
            self.metrics.capacity_samples_bps.push(shannon_capacity(sinr.linear, bw));
        }
        Ok(())
    }
}

fn uniform_point(plan: &GridPlan, rng: &mut SimRng) -> Point {
    Point::new(plan.room_x_m * rng::uniform01(rng), plan.room_y_m * rng::uniform01(rng))
}

fn csv_writer<W: Write>(out: W, header: &[&str]) -> Result<csv::Writer<W>> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(header)?;
    Ok(w)
}

// ---------------------------------------------------------------------------
// FAP idle probability versus user count
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdleExperimentConfig {
    pub room: RoomConfig,
    pub policy: PolicyParams,
    pub user_counts: Vec<usize>,
    pub placements: u64,
    pub zone_samples: u64,
    pub seed: u64,
}

impl Default for IdleExperimentConfig {
    fn default() -> Self {
        Self {
            room: RoomConfig::default(),
            policy: PolicyParams::default(),
            user_counts: (0..=20).collect(),
            placements: 100_000,
            zone_samples: 1_000_000,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdleRow {
    pub p: usize,
    pub empirical_idle_prob: f64,
    pub std_error: f64,
    pub eq20_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdleTable {
    pub zone_probs: [f64; 4],
    pub rows: Vec<IdleRow>,
}

impl IdleTable {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv_writer(out, &["p", "empirical_idle_prob", "std_error", "eq20_value"])?;
        for r in &self.rows {
            w.write_record([
                r.p.to_string(),
                r.empirical_idle_prob.to_string(),
                r.std_error.to_string(),
                r.eq20_value.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

const PLACEMENT_SHARDS: u64 = 64;

/// Places `zones.len()` users one by one (all data calls) under the
/// admission policy, and reports after each arrival whether idle-mode
/// selection would let the FAP idle.
pub fn idle_after_each_arrival(
    plan: &GridPlan,
    params: &PolicyParams,
    users: &[(Zone, Option<usize>)],
) -> Vec<bool> {
    let mut state = NetworkState::new(plan.ap_count(), params);
    let mut on_fap: Vec<ConnectedUser> = Vec::new();
    let mut out = Vec::with_capacity(users.len());
    for (i, &(zone, lifi_ap)) in users.iter().enumerate() {
        let request = CallRequest {
            call_id: i as u64,
            terminal_id: i,
            traffic_class: TrafficClass::Data,
            zone,
            arrival_time_s: 0.0,
            lifi_ap,
        };
        if let Some(at) = admit_new_call(&request, &state).serving() {
            state.allocate(at).expect("admission only picks APs with free slots");
            if at == ServingAp::Fap {
                on_fap.push(ConnectedUser { terminal_id: i, zone, traffic_class: TrafficClass::Data });
            }
        }
        out.push(fap_mode_update(&on_fap).mode == ApMode::Idle);
    }
    out
}

/// Empirical FAP idle probability from random placements next to the
/// closed-form value, for each user count.
///
/// Placements are shared across user counts (the first `p` users of each
/// placement), so the empirical column is monotone by construction.
pub fn idle_probability_experiment(cfg: &IdleExperimentConfig) -> Result<IdleTable> {
    if cfg.user_counts.is_empty() {
        return Err(validation("user_counts must not be empty"));
    }
    if cfg.placements == 0 {
        return Err(validation("placements must be positive"));
    }
    cfg.policy.validate()?;
    let plan = cfg.room.plan()?;
    let zones = monte_carlo_zone_model(&plan, cfg.zone_samples, cfg.seed)?;
    let max_p = *cfg.user_counts.iter().max().expect("non-empty");

    let per_shard = cfg.placements / PLACEMENT_SHARDS;
    let extra = cfg.placements % PLACEMENT_SHARDS;
    let shard_counts: Vec<Vec<u64>> = (0..PLACEMENT_SHARDS)
        .into_par_iter()
        .map(|shard| {
            let mut rng = rng::stream(cfg.seed, Subsystem::Placement, shard);
            let mut idle = vec![0u64; max_p + 1];
            let mut users = Vec::with_capacity(max_p);
            for _ in 0..per_shard + u64::from(shard < extra) {
                users.clear();
                for _ in 0..max_p {
                    let p = uniform_point(&plan, &mut rng);
                    let zone = plan.zone_of(&p);
                    users.push((zone, zone.has_lifi().then(|| plan.nearest_ap(&p).0)));
                }
                idle[0] += 1;
                for (k, is_idle) in idle_after_each_arrival(&plan, &cfg.policy, &users).into_iter().enumerate() {
                    idle[k + 1] += u64::from(is_idle);
                }
            }
            idle
        })
        .collect();
    let mut idle = vec![0u64; max_p + 1];
    for counts in &shard_counts {
        for (total, c) in idle.iter_mut().zip(counts) {
            *total += c;
        }
    }

    let rows = cfg
        .user_counts
        .iter()
        .map(|&p| {
            let prob = idle[p] as f64 / cfg.placements as f64;
            Ok(IdleRow {
                p,
                empirical_idle_prob: prob,
                std_error: stats::proportion_std_error(prob, cfg.placements),
                eq20_value: fap_idle_probability(p as i64, &zones.zone_probs)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(IdleTable { zone_probs: zones.zone_probs, rows })
}

// ---------------------------------------------------------------------------
// Femtocell user SINR under interference
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FemtoScheme {
    PureFrf1,
    PureFrf4,
    HybridFrf1,
    HybridFrf4,
}

impl FemtoScheme {
    pub const ALL: [FemtoScheme; 4] =
        [FemtoScheme::PureFrf1, FemtoScheme::PureFrf4, FemtoScheme::HybridFrf1, FemtoScheme::HybridFrf4];

    pub fn as_str(self) -> &'static str {
        match self {
            FemtoScheme::PureFrf1 => "pure_frf1",
            FemtoScheme::PureFrf4 => "pure_frf4",
            FemtoScheme::HybridFrf1 => "hybrid_frf1",
            FemtoScheme::HybridFrf4 => "hybrid_frf4",
        }
    }

    fn hybrid(self) -> bool {
        matches!(self, FemtoScheme::HybridFrf1 | FemtoScheme::HybridFrf4)
    }

    fn reuse4(self) -> bool {
        matches!(self, FemtoScheme::PureFrf4 | FemtoScheme::HybridFrf4)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FemtoSinrConfig {
    /// FAPs in the disk, including the reference FAP at its center.
    pub fap_count: usize,
    pub disk_radius_m: f64,
    pub user_distance_m: f64,
    /// Walls between the reference user and each interfering FAP.
    pub interferer_walls: u32,
    pub drops: usize,
    /// Active users per home, used for the idle probability of a FAP.
    pub users_per_fap: usize,
    /// Overrides the closed-form idle probability when set.
    pub idle_probability: Option<f64>,
    pub room: RoomConfig,
    pub zone_samples: u64,
    pub rf: RfParams,
    pub seed: u64,
}

impl Default for FemtoSinrConfig {
    fn default() -> Self {
        Self {
            fap_count: 50,
            disk_radius_m: 100.0,
            user_distance_m: 8.0,
            interferer_walls: 1,
            drops: 2000,
            users_per_fap: 4,
            idle_probability: None,
            room: RoomConfig::default(),
            zone_samples: 1_000_000,
            rf: RfParams::default(),
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeStats {
    pub scheme: FemtoScheme,
    pub mean_db: f64,
    pub p10_db: f64,
    pub p50_db: f64,
    pub p90_db: f64,
    pub drops: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FemtoSinrResult {
    pub idle_probability: f64,
    pub schemes: Vec<SchemeStats>,
}

impl FemtoSinrResult {
    pub fn scheme(&self, s: FemtoScheme) -> &SchemeStats {
        self.schemes.iter().find(|x| x.scheme == s).expect("every scheme is reported")
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv_writer(out, &["scheme", "mean_sinr_db", "p10_sinr_db", "p50_sinr_db", "p90_sinr_db", "drops"])?;
        for s in &self.schemes {
            w.write_record([
                s.scheme.as_str().to_owned(),
                s.mean_db.to_string(),
                s.p10_db.to_string(),
                s.p50_db.to_string(),
                s.p90_db.to_string(),
                s.drops.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// SINR of a femto user `user_distance_m` from its own FAP (no walls), with
/// co-channel FAPs at the given distances behind `walls` walls. Distances
/// below 1 m are clamped to 1 m, where the indoor model stops being valid.
pub fn femto_user_sinr(rf: &RfParams, user_distance_m: f64, interferer_distances_m: &[f64], walls: u32) -> Result<channel::Sinr> {
    let signal = rf.fap_tx_dbm - femto_path_loss_walls(user_distance_m.max(1.0), rf, 0)?;
    let interference = interferer_distances_m
        .iter()
        .map(|&d| Ok(rf.fap_tx_dbm - femto_path_loss_walls(d.max(1.0), rf, walls)?))
        .collect::<Result<Vec<_>>>()?;
    Ok(rf_sinr(signal, &interference, rf.femto_noise_dbm()))
}

/// Monte Carlo SINR of the reference femto user under four schemes.
///
/// Each drop places the interfering FAPs once and draws one reuse and one
/// idle variate per FAP; every scheme then keeps a subset of that same
/// interferer set. Reuse 4 keeps a FAP when its reuse variate is below 1/4,
/// and the hybrid schemes drop it when its idle variate falls below the idle
/// probability.
pub fn femto_sinr_experiment(cfg: &FemtoSinrConfig) -> Result<FemtoSinrResult> {
    if cfg.fap_count == 0 || cfg.drops == 0 {
        return Err(validation("fap_count and drops must be positive"));
    }
    if !(cfg.disk_radius_m > 0.0 && cfg.user_distance_m > 0.0) {
        return Err(validation("disk radius and user distance must be positive"));
    }
    cfg.rf.validate()?;
    let idle = match cfg.idle_probability {
        Some(p) if (0.0..=1.0).contains(&p) => p,
        Some(p) => return Err(validation(format!("idle_probability {p} outside [0, 1]"))),
        None => {
            let plan = cfg.room.plan()?;
            let zones = monte_carlo_zone_model(&plan, cfg.zone_samples, cfg.seed)?;
            policy::fap_idle_probability(cfg.users_per_fap as i64, &zones.zone_probs)?
        }
    };
    let user = Point::new(cfg.user_distance_m, 0.0);

    let per_drop: Vec<[f64; 4]> = (0..cfg.drops as u64)
        .into_par_iter()
        .map(|drop| {
            let mut rng = rng::stream(cfg.seed, Subsystem::Drops, drop);
            let mut sets: [Vec<f64>; 4] = Default::default();
            for _ in 1..cfg.fap_count {
                let rho = cfg.disk_radius_m * rng::uniform01(&mut rng).sqrt();
                let theta = 2.0 * PI * rng::uniform01(&mut rng);
                let d = Point::new(rho * theta.cos(), rho * theta.sin()).distance(&user);
                let co_channel = rng::uniform01(&mut rng) < 0.25;
                let silent = rng::uniform01(&mut rng) < idle;
                for (k, s) in FemtoScheme::ALL.iter().enumerate() {
                    if (!s.reuse4() || co_channel) && !(s.hybrid() && silent) {
                        sets[k].push(d);
                    }
                }
            }
            let mut out = [0.0; 4];
            for k in 0..4 {
                out[k] = femto_user_sinr(&cfg.rf, cfg.user_distance_m, &sets[k], cfg.interferer_walls)?.db;
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;

    let schemes = FemtoScheme::ALL
        .iter()
        .enumerate()
        .map(|(k, &scheme)| {
            let mut v: Vec<f64> = per_drop.iter().map(|d| d[k]).collect();
            let mean_db = stats::mean(&v);
            v.sort_by(f64::total_cmp);
            SchemeStats {
                scheme,
                mean_db,
                p10_db: stats::percentile_sorted(&v, 10.0),
                p50_db: stats::percentile_sorted(&v, 50.0),
                p90_db: stats::percentile_sorted(&v, 90.0),
                drops: cfg.drops,
            }
        })
        .collect();
    Ok(FemtoSinrResult { idle_probability: idle, schemes })
}

// ---------------------------------------------------------------------------
// Handover success between two LiFi APs
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HandoverSuccessConfig {
    pub radius_m: f64,
    /// Center-to-center AP distances.
    pub spacings_m: Vec<f64>,
    pub crossings: u64,
    /// FAP at the midpoint between the two APs.
    pub fap_coverage_radius_m: f64,
    pub seed: u64,
}

impl Default for HandoverSuccessConfig {
    fn default() -> Self {
        Self {
            radius_m: 5.0,
            spacings_m: (0..=24).map(|i| f64::from(i) * 0.5).collect(),
            crossings: 100_000,
            fap_coverage_radius_m: 20.0,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HandoverSuccessRow {
    pub ap_distance_m: f64,
    pub lifi_only_success: f64,
    pub hybrid_success: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandoverSuccessTable {
    pub rows: Vec<HandoverSuccessRow>,
}

impl HandoverSuccessTable {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv_writer(out, &["ap_distance_m", "lifi_only_success", "hybrid_success"])?;
        for r in &self.rows {
            w.write_record([r.ap_distance_m.to_string(), r.lifi_only_success.to_string(), r.hybrid_success.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Straight crossings from one AP toward the other, offset sideways by a
/// uniform amount in `[-r, r]`. The optical link survives iff the two
/// footprints cover the whole path; in the hybrid case the FAP also carries
/// the call when it covers both path ends.
pub fn handover_success_experiment(cfg: &HandoverSuccessConfig) -> Result<HandoverSuccessTable> {
    if !(cfg.radius_m > 0.0 && cfg.fap_coverage_radius_m >= 0.0) {
        return Err(validation("radius must be positive"));
    }
    if cfg.crossings == 0 {
        return Err(validation("crossings must be positive"));
    }
    if let Some(d) = cfg.spacings_m.iter().find(|d| !(**d >= 0.0 && d.is_finite())) {
        return Err(validation(format!("spacing {d} must be non-negative")));
    }
    let r = cfg.radius_m;
    let rows = cfg
        .spacings_m
        .par_iter()
        .enumerate()
        .map(|(i, &d)| {
            let mut rng = rng::stream(cfg.seed, Subsystem::Crossings, i as u64);
            let half = d / 2.0;
            let (mut lifi, mut hybrid) = (0u64, 0u64);
            for _ in 0..cfg.crossings {
                let y = rng::uniform(&mut rng, -r, r);
                // Both footprints are discs, so the path is covered iff its
                // midpoint is: the worst point lies halfway between the APs.
                let optical = half * half + y * y <= r * r;
                let fap = half * half + y * y <= cfg.fap_coverage_radius_m.powi(2);
                lifi += u64::from(optical);
                hybrid += u64::from(optical || fap);
            }
            let n = cfg.crossings as f64;
            HandoverSuccessRow { ap_distance_m: d, lifi_only_success: lifi as f64 / n, hybrid_success: hybrid as f64 / n }
        })
        .collect();
    Ok(HandoverSuccessTable { rows })
}
