//! Handover call flows between UE, serving AP, target AP and gateway.
//!
//! Each flow is a fixed, numbered message sequence. Every entity runs a
//! local state machine: its projection of the global sequence onto the
//! messages it sends or receives. A run drives the sequence over a simulated
//! bus with an event queue, one hop at a time (a step starts when the
//! previous one is delivered), with optional message loss and retransmission.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{validation, Error, Result};
use crate::rng::{self, Subsystem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HandoverKind {
    LifiToFemto,
    FemtoToLifi,
    LifiToLifi,
}

impl HandoverKind {
    pub const ALL: [HandoverKind; 3] =
        [HandoverKind::LifiToFemto, HandoverKind::FemtoToLifi, HandoverKind::LifiToLifi];

    pub fn as_str(self) -> &'static str {
        match self {
            HandoverKind::LifiToFemto => "lifi-to-femto",
            HandoverKind::FemtoToLifi => "femto-to-lifi",
            HandoverKind::LifiToLifi => "lifi-to-lifi",
        }
    }

    /// Role played by each endpoint in this flow.
    pub fn role_of(self, endpoint: Endpoint) -> Role {
        match (self, endpoint) {
            (_, Endpoint::Ue) => Role::Ue,
            (_, Endpoint::Gateway) => Role::Gateway,
            (HandoverKind::FemtoToLifi, Endpoint::Serving) => Role::Fap,
            (HandoverKind::LifiToFemto, Endpoint::Target) => Role::Fap,
            _ => Role::LifiAp,
        }
    }
}

impl fmt::Display for HandoverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for HandoverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('_', "-").as_str() {
            "lifi-to-femto" => Ok(HandoverKind::LifiToFemto),
            "femto-to-lifi" => Ok(HandoverKind::FemtoToLifi),
            "lifi-to-lifi" => Ok(HandoverKind::LifiToLifi),
            other => Err(validation(format!("unknown handover kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    MeasurementReport,
    NeighborSearch,
    ApSelect,
    PreAuth,
    HoDecision,
    HoRequest,
    AuthCheck,
    CacCheck,
    HoResponse,
    LinkSetup,
    DataForward,
    ChannelReestablish,
    Detach,
    Sync,
    HoComplete,
    HoCompleteAck,
    LinkDelete,
}

impl MessageKind {
    const ALL: [MessageKind; 17] = [
        MessageKind::MeasurementReport,
        MessageKind::NeighborSearch,
        MessageKind::ApSelect,
        MessageKind::PreAuth,
        MessageKind::HoDecision,
        MessageKind::HoRequest,
        MessageKind::AuthCheck,
        MessageKind::CacCheck,
        MessageKind::HoResponse,
        MessageKind::LinkSetup,
        MessageKind::DataForward,
        MessageKind::ChannelReestablish,
        MessageKind::Detach,
        MessageKind::Sync,
        MessageKind::HoComplete,
        MessageKind::HoCompleteAck,
        MessageKind::LinkDelete,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MessageKind::MeasurementReport => "measurement_report",
            MessageKind::NeighborSearch => "neighbor_search",
            MessageKind::ApSelect => "ap_select",
            MessageKind::PreAuth => "pre_auth",
            MessageKind::HoDecision => "ho_decision",
            MessageKind::HoRequest => "ho_request",
            MessageKind::AuthCheck => "auth_check",
            MessageKind::CacCheck => "cac_check",
            MessageKind::HoResponse => "ho_response",
            MessageKind::LinkSetup => "link_setup",
            MessageKind::DataForward => "data_forward",
            MessageKind::ChannelReestablish => "channel_reestablish",
            MessageKind::Detach => "detach",
            MessageKind::Sync => "sync",
            MessageKind::HoComplete => "ho_complete",
            MessageKind::HoCompleteAck => "ho_complete_ack",
            MessageKind::LinkDelete => "link_delete",
        }
    }

    /// State label an entity takes after handling this message.
    fn phase(self) -> &'static str {
        use MessageKind::*;
        match self {
            MeasurementReport | NeighborSearch => "measuring",
            ApSelect | PreAuth | HoDecision => "deciding",
            HoRequest | AuthCheck | CacCheck | HoResponse => "preparing",
            LinkSetup | DataForward => "forwarding",
            ChannelReestablish | Detach | Sync => "executing",
            HoComplete | HoCompleteAck => "completing",
            LinkDelete => "releasing",
        }
    }
}

impl fmt::Display for MessageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MessageKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MessageKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| validation(format!("unknown message kind '{s}'")))
    }
}

/// Position of an entity in a handover, independent of its technology.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Endpoint {
    Ue,
    Serving,
    Target,
    Gateway,
}

impl Endpoint {
    pub const ALL: [Endpoint; 4] = [Endpoint::Ue, Endpoint::Serving, Endpoint::Target, Endpoint::Gateway];

    pub fn as_str(self) -> &'static str {
        match self {
            Endpoint::Ue => "ue",
            Endpoint::Serving => "serving",
            Endpoint::Target => "target",
            Endpoint::Gateway => "gw",
        }
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Endpoint {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Endpoint::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| validation(format!("unknown endpoint '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Ue,
    LifiAp,
    Fap,
    Gateway,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepDescriptor {
    pub step: u32,
    pub kind: MessageKind,
    pub from: Endpoint,
    pub to: Endpoint,
}

const fn s(step: u32, kind: MessageKind, from: Endpoint, to: Endpoint) -> StepDescriptor {
    StepDescriptor { step, kind, from, to }
}

use Endpoint::{Gateway as GW, Serving as SRV, Target as TGT, Ue as UE};
use MessageKind as M;

static LIFI_TO_FEMTO: [StepDescriptor; 25] = [
    s(1, M::MeasurementReport, UE, SRV),
    s(2, M::MeasurementReport, SRV, UE),
    s(3, M::NeighborSearch, UE, TGT),
    s(4, M::ApSelect, UE, SRV),
    s(5, M::PreAuth, UE, TGT),
    s(6, M::HoDecision, SRV, UE),
    s(7, M::HoRequest, SRV, GW),
    s(8, M::HoRequest, GW, TGT),
    s(9, M::CacCheck, TGT, TGT),
    s(10, M::HoResponse, TGT, GW),
    s(11, M::HoResponse, GW, SRV),
    s(12, M::LinkSetup, GW, TGT),
    s(13, M::LinkSetup, TGT, GW),
    s(14, M::LinkSetup, GW, TGT),
    s(15, M::DataForward, GW, TGT),
    s(16, M::ChannelReestablish, UE, TGT),
    s(17, M::ChannelReestablish, TGT, UE),
    s(18, M::Detach, UE, SRV),
    s(19, M::Sync, UE, TGT),
    s(20, M::Sync, TGT, UE),
    s(21, M::HoComplete, UE, GW),
    s(22, M::HoCompleteAck, GW, UE),
    s(23, M::LinkDelete, SRV, GW),
    s(24, M::LinkDelete, GW, SRV),
    s(25, M::LinkDelete, SRV, GW),
];

static FEMTO_TO_LIFI: [StepDescriptor; 26] = [
    s(1, M::MeasurementReport, UE, SRV),
    s(2, M::MeasurementReport, SRV, UE),
    s(3, M::ApSelect, UE, SRV),
    s(4, M::PreAuth, UE, TGT),
    s(5, M::HoDecision, SRV, UE),
    s(6, M::HoRequest, SRV, GW),
    s(7, M::HoRequest, GW, TGT),
    s(8, M::AuthCheck, TGT, GW),
    s(9, M::AuthCheck, GW, TGT),
    s(10, M::CacCheck, TGT, TGT),
    s(11, M::HoResponse, TGT, GW),
    s(12, M::HoResponse, GW, SRV),
    s(13, M::LinkSetup, GW, TGT),
    s(14, M::LinkSetup, TGT, GW),
    s(15, M::LinkSetup, GW, TGT),
    s(16, M::DataForward, GW, TGT),
    s(17, M::ChannelReestablish, UE, TGT),
    s(18, M::ChannelReestablish, TGT, UE),
    s(19, M::Detach, UE, SRV),
    s(20, M::Sync, UE, TGT),
    s(21, M::Sync, TGT, UE),
    s(22, M::HoComplete, UE, GW),
    s(23, M::HoCompleteAck, GW, UE),
    s(24, M::LinkDelete, SRV, GW),
    s(25, M::LinkDelete, GW, SRV),
    s(26, M::LinkDelete, SRV, GW),
];

static LIFI_TO_LIFI: [StepDescriptor; 27] = [
    s(1, M::MeasurementReport, UE, SRV),
    s(2, M::MeasurementReport, SRV, UE),
    s(3, M::NeighborSearch, UE, TGT),
    s(4, M::ApSelect, UE, SRV),
    s(5, M::PreAuth, UE, TGT),
    s(6, M::HoDecision, SRV, UE),
    s(7, M::HoRequest, SRV, GW),
    s(8, M::HoRequest, GW, TGT),
    s(9, M::AuthCheck, TGT, GW),
    s(10, M::AuthCheck, GW, TGT),
    s(11, M::CacCheck, TGT, TGT),
    s(12, M::HoResponse, TGT, GW),
    s(13, M::HoResponse, GW, SRV),
    s(14, M::LinkSetup, GW, TGT),
    s(15, M::LinkSetup, TGT, GW),
    s(16, M::LinkSetup, GW, TGT),
    s(17, M::DataForward, GW, TGT),
    s(18, M::ChannelReestablish, UE, TGT),
    s(19, M::ChannelReestablish, TGT, UE),
    s(20, M::Detach, UE, SRV),
    s(21, M::Sync, UE, TGT),
    s(22, M::Sync, TGT, UE),
    s(23, M::HoComplete, UE, GW),
    s(24, M::HoCompleteAck, GW, UE),
    s(25, M::LinkDelete, SRV, GW),
    s(26, M::LinkDelete, GW, SRV),
    s(27, M::LinkDelete, SRV, GW),
];

/// The numbered message sequence of a handover flow.
pub fn canonical_sequence(kind: HandoverKind) -> &'static [StepDescriptor] {
    match kind {
        HandoverKind::LifiToFemto => &LIFI_TO_FEMTO,
        HandoverKind::FemtoToLifi => &FEMTO_TO_LIFI,
        HandoverKind::LifiToLifi => &LIFI_TO_LIFI,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolMessage {
    pub step_number: u32,
    pub kind: MessageKind,
    pub from: Endpoint,
    pub to: Endpoint,
    pub send_time_s: f64,
    pub deliver_time_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum Outcome {
    Complete,
    Failed { step: u32 },
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::Complete => f.write_str("complete"),
            Outcome::Failed { step } => write!(f, "failed({step})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntitySnapshot {
    pub identity: String,
    pub endpoint: Endpoint,
    pub role: Role,
    pub state: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandoverTrace {
    pub kind: HandoverKind,
    /// Delivered messages only; lost transmissions do not appear.
    pub messages: Vec<ProtocolMessage>,
    pub outcome: Outcome,
    pub latency_s: f64,
    pub final_states: Vec<EntitySnapshot>,
}

impl HandoverTrace {
    pub fn count(&self, kind: MessageKind) -> usize {
        self.messages.iter().filter(|m| m.kind == kind).count()
    }

    pub fn is_complete(&self) -> bool {
        self.outcome == Outcome::Complete
    }

    /// Whether the serving AP's link to the gateway has been torn down.
    pub fn serving_link_deleted(&self) -> bool {
        self.final_states
            .iter()
            .any(|e| e.endpoint == Endpoint::Serving && e.state == "released")
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["step", "kind", "from", "to", "t_send", "t_deliver"])?;
        for m in &self.messages {
            w.write_record([
                m.step_number.to_string(),
                m.kind.to_string(),
                m.from.to_string(),
                m.to.to_string(),
                m.send_time_s.to_string(),
                m.deliver_time_s.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Rebuilds a trace from its CSV form. The outcome is `Complete` when
    /// every step of the flow is present and otherwise `Failed` at the step
    /// after the last delivered one.
    pub fn read_csv<R: Read>(kind: HandoverKind, input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
        if header != ["step", "kind", "from", "to", "t_send", "t_deliver"] {
            return Err(validation(format!("unexpected trace header {header:?}")));
        }
        let mut messages = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let num = |i: usize| -> Result<f64> {
                rec[i].parse().map_err(|_| validation(format!("bad number '{}'", &rec[i])))
            };
            messages.push(ProtocolMessage {
                step_number: rec[0].parse().map_err(|_| validation(format!("bad step '{}'", &rec[0])))?,
                kind: rec[1].parse()?,
                from: rec[2].parse()?,
                to: rec[3].parse()?,
                send_time_s: num(4)?,
                deliver_time_s: num(5)?,
            });
        }
        let canonical = canonical_sequence(kind);
        let last = messages.last().map_or(0, |m| m.step_number);
        let outcome = if messages.len() == canonical.len() && last == canonical.len() as u32 {
            Outcome::Complete
        } else {
            Outcome::Failed { step: last + 1 }
        };
        let latency_s = span(&messages);
        Ok(Self { kind, messages, outcome, latency_s, final_states: Vec::new() })
    }
}

fn span(messages: &[ProtocolMessage]) -> f64 {
    match (messages.first(), messages.last()) {
        (Some(a), Some(b)) => b.deliver_time_s - a.send_time_s,
        _ => 0.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntitySpec {
    pub identity: String,
    pub endpoint: Endpoint,
    pub role: Role,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub entities: Vec<EntitySpec>,
}

impl Topology {
    /// The four entities a flow of `kind` needs, with default names.
    pub fn for_kind(kind: HandoverKind) -> Self {
        let name = |e: Endpoint| match (e, kind.role_of(e)) {
            (Endpoint::Ue, _) => "UE".to_owned(),
            (Endpoint::Gateway, _) => "GW".to_owned(),
            (Endpoint::Serving, Role::Fap) => "FAP".to_owned(),
            (Endpoint::Serving, _) => "LiFi-S".to_owned(),
            (Endpoint::Target, Role::Fap) => "FAP".to_owned(),
            (Endpoint::Target, _) => "LiFi-T".to_owned(),
        };
        Self {
            entities: Endpoint::ALL
                .into_iter()
                .map(|e| EntitySpec { identity: name(e), endpoint: e, role: kind.role_of(e) })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum LatencyModel {
    /// Every hop takes the same time.
    Fixed { per_hop_s: f64 },
    /// `base_s` plus a uniform draw in `[0, jitter_s)` per transmission.
    Jittered { base_s: f64, jitter_s: f64, seed: u64 },
}

impl LatencyModel {
    pub fn zero() -> Self {
        LatencyModel::Fixed { per_hop_s: 0.0 }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            LatencyModel::Fixed { per_hop_s } => per_hop_s >= 0.0 && per_hop_s.is_finite(),
            LatencyModel::Jittered { base_s, jitter_s, .. } => {
                base_s >= 0.0 && jitter_s >= 0.0 && (base_s + jitter_s).is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(validation(format!("latency model {self:?} has a negative or non-finite delay")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FaultPlan {
    /// Step number to the number of consecutive transmissions lost.
    pub drops: BTreeMap<u32, u32>,
    /// Retransmissions allowed per message when no per-kind budget is set.
    pub retry_budget: u32,
    pub retry_budget_by_kind: BTreeMap<MessageKind, u32>,
    /// Sender wait before retransmitting a lost message.
    pub retransmit_timeout_s: f64,
}

impl FaultPlan {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn drop_step(step: u32) -> Self {
        Self { drops: BTreeMap::from([(step, 1)]), ..Self::default() }
    }

    fn budget(&self, kind: MessageKind) -> u32 {
        self.retry_budget_by_kind.get(&kind).copied().unwrap_or(self.retry_budget)
    }

    /// Random plan for stress testing: each step is hit with probability
    /// `drop_prob`, losing 1..=3 transmissions, against a budget of 0..=2.
    pub fn random(seed: u64, index: u64, kind: HandoverKind, drop_prob: f64) -> Self {
        let mut rng = rng::stream(seed, Subsystem::Faults, index);
        let mut drops = BTreeMap::new();
        for st in canonical_sequence(kind) {
            if rng::uniform01(&mut rng) < drop_prob {
                drops.insert(st.step, 1 + (rng::uniform01(&mut rng) * 3.0) as u32);
            }
        }
        let retry_budget = (rng::uniform01(&mut rng) * 3.0) as u32;
        Self { drops, retry_budget, retry_budget_by_kind: BTreeMap::new(), retransmit_timeout_s: 0.02 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Action {
    Send(MessageKind, Endpoint),
    Receive(MessageKind, Endpoint),
    Local(MessageKind),
}

/// One participant: walks its projection of the flow in order.
#[derive(Debug, Clone)]
struct Entity {
    spec: EntitySpec,
    script: Vec<Action>,
    cursor: usize,
    state: &'static str,
}

impl Entity {
    fn new(spec: EntitySpec, kind: HandoverKind) -> Self {
        let me = spec.endpoint;
        let script = canonical_sequence(kind)
            .iter()
            .filter_map(|st| match (st.from == me, st.to == me) {
                (true, true) => Some(Action::Local(st.kind)),
                (true, false) => Some(Action::Send(st.kind, st.to)),
                (false, true) => Some(Action::Receive(st.kind, st.from)),
                _ => None,
            })
            .collect();
        Self { spec, script, cursor: 0, state: "connected" }
    }

    fn step(&mut self, action: Action) -> Result<()> {
        match self.script.get(self.cursor) {
            Some(expected) if *expected == action => {
                self.cursor += 1;
                let kind = match action {
                    Action::Send(k, _) | Action::Receive(k, _) | Action::Local(k) => k,
                };
                self.state = if self.cursor == self.script.len() {
                    if self.spec.endpoint == Endpoint::Serving { "released" } else { "done" }
                } else {
                    kind.phase()
                };
                Ok(())
            }
            other => Err(validation(format!(
                "{} in state '{}' cannot {action:?}; expected {other:?}",
                self.spec.identity, self.state
            ))),
        }
    }

    fn snapshot(&self) -> EntitySnapshot {
        EntitySnapshot {
            identity: self.spec.identity.clone(),
            endpoint: self.spec.endpoint,
            role: self.spec.role,
            state: self.state.to_owned(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Delivery {
    time: f64,
    seq: u64,
    index: usize,
    send_time: f64,
}

impl Eq for Delivery {}

impl Ord for Delivery {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.time.total_cmp(&other.time).then(self.seq.cmp(&other.seq))
    }
}

impl PartialOrd for Delivery {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Executes one handover flow and records what was delivered.
pub fn run_handover(
    kind: HandoverKind,
    topology: &Topology,
    latency: &LatencyModel,
    faults: &FaultPlan,
) -> Result<HandoverTrace> {
    latency.validate()?;
    if !(faults.retransmit_timeout_s >= 0.0 && faults.retransmit_timeout_s.is_finite()) {
        return Err(validation("retransmit timeout must be a non-negative finite value"));
    }
    let mut entities: BTreeMap<Endpoint, Entity> = BTreeMap::new();
    for spec in &topology.entities {
        let want = kind.role_of(spec.endpoint);
        if spec.role != want {
            return Err(validation(format!(
                "{} is a {:?} but {kind} needs a {want:?} at {}",
                spec.identity, spec.role, spec.endpoint
            )));
        }
        if entities.insert(spec.endpoint, Entity::new(spec.clone(), kind)).is_some() {
            return Err(validation(format!("duplicate entity at {}", spec.endpoint)));
        }
    }
    if let Some(missing) = Endpoint::ALL.into_iter().find(|e| !entities.contains_key(e)) {
        return Err(validation(format!("topology has no entity at {missing}")));
    }

    let steps = canonical_sequence(kind);
    let mut jitter = match latency {
        LatencyModel::Jittered { seed, .. } => Some(rng::stream(*seed, Subsystem::Latency, 0)),
        LatencyModel::Fixed { .. } => None,
    };
    let mut hop = || match *latency {
        LatencyModel::Fixed { per_hop_s } => per_hop_s,
        LatencyModel::Jittered { base_s, jitter_s, .. } => {
            base_s + jitter_s * rng::uniform01(jitter.as_mut().expect("jitter stream"))
        }
    };

    let mut queue: BinaryHeap<Reverse<Delivery>> = BinaryHeap::new();
    let mut messages = Vec::with_capacity(steps.len());
    let mut seq = 0u64;
    let mut outcome = Outcome::Complete;

    // Transmits step `index` starting at `now`; returns false if it is lost
    // beyond its retry budget.
    let mut transmit = |index: usize, now: f64, queue: &mut BinaryHeap<Reverse<Delivery>>| -> bool {
        let st = &steps[index];
        let lost = faults.drops.get(&st.step).copied().unwrap_or(0);
        if lost > faults.budget(st.kind) {
            return false;
        }
        let mut send_time = now;
        for _ in 0..lost {
            send_time += hop() + faults.retransmit_timeout_s;
        }
        let time = send_time + hop();
        seq += 1;
        queue.push(Reverse(Delivery { time, seq, index, send_time }));
        true
    };

    let sender_step = |entities: &mut BTreeMap<Endpoint, Entity>, st: &StepDescriptor| -> Result<()> {
        let action = if st.from == st.to { Action::Local(st.kind) } else { Action::Send(st.kind, st.to) };
        entities.get_mut(&st.from).expect("entity present").step(action)
    };

    if transmit(0, 0.0, &mut queue) {
        sender_step(&mut entities, &steps[0])?;
    } else {
        outcome = Outcome::Failed { step: steps[0].step };
    }
    let mut now = 0.0;
    while let Some(Reverse(d)) = queue.pop() {
        debug_assert!(d.time >= now);
        now = d.time;
        let st = &steps[d.index];
        if st.from != st.to {
            entities.get_mut(&st.to).expect("entity present").step(Action::Receive(st.kind, st.from))?;
        }
        messages.push(ProtocolMessage {
            step_number: st.step,
            kind: st.kind,
            from: st.from,
            to: st.to,
            send_time_s: d.send_time,
            deliver_time_s: d.time,
        });
        let next = d.index + 1;
        if next < steps.len() {
            if transmit(next, now, &mut queue) {
                sender_step(&mut entities, &steps[next])?;
            } else {
                outcome = Outcome::Failed { step: steps[next].step };
            }
        }
    }

    Ok(HandoverTrace {
        kind,
        latency_s: span(&messages),
        messages,
        outcome,
        final_states: entities.values().map(Entity::snapshot).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceViolation {
    pub step: u32,
    pub reason: String,
}

impl fmt::Display for TraceViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "step {}: {}", self.step, self.reason)
    }
}

/// Checks a trace against its flow and the handover safety rules:
/// exactly one completion, admission control before the response, no detach
/// before the response, and no release of the serving link before the UE has
/// synchronised with the target and reported completion.
pub fn validate_trace(trace: &HandoverTrace) -> std::result::Result<(), TraceViolation> {
    let fail = |step: u32, reason: String| Err(TraceViolation { step, reason });
    let canonical = canonical_sequence(trace.kind);

    let mut seen_cac = false;
    let mut seen_response = false;
    let mut seen_target_sync = false;
    let mut completions = 0;
    let mut prev: Option<&ProtocolMessage> = None;
    for m in &trace.messages {
        let step = m.step_number;
        if !(m.deliver_time_s >= m.send_time_s) {
            return fail(step, "delivered before it was sent".into());
        }
        if let Some(p) = prev {
            if step <= p.step_number {
                return fail(step, format!("step number does not increase after {}", p.step_number));
            }
            if m.send_time_s < p.deliver_time_s {
                return fail(step, "sent before the previous step was delivered".into());
            }
        }
        match m.kind {
            MessageKind::CacCheck => seen_cac = true,
            MessageKind::HoResponse => {
                if !seen_cac {
                    return fail(step, "handover response before admission control".into());
                }
                seen_response = true;
            }
            MessageKind::Detach if !seen_response => {
                return fail(step, "UE detached before the handover response".into());
            }
            MessageKind::Sync if m.from == Endpoint::Target => seen_target_sync = true,
            MessageKind::HoComplete => {
                completions += 1;
                if completions > 1 {
                    return fail(step, "second handover-complete message".into());
                }
                if !seen_target_sync {
                    return fail(step, "handover complete before synchronisation".into());
                }
            }
            MessageKind::LinkDelete if !(seen_target_sync && completions == 1) => {
                return fail(step, "serving link deleted before sync and completion".into());
            }
            _ => {}
        }
        prev = Some(m);
    }

    for (i, m) in trace.messages.iter().enumerate() {
        match canonical.get(i) {
            Some(c) if c.step == m.step_number && c.kind == m.kind && c.from == m.from && c.to == m.to => {}
            Some(c) => {
                return fail(
                    m.step_number,
                    format!("expected step {} {} {}->{}, got {} {}->{}", c.step, c.kind, c.from, c.to, m.kind, m.from, m.to),
                )
            }
            None => return fail(m.step_number, "message beyond the end of the flow".into()),
        }
    }

    match trace.outcome {
        Outcome::Complete => {
            if trace.messages.len() != canonical.len() {
                let step = trace.messages.last().map_or(1, |m| m.step_number + 1);
                return fail(step, format!("complete trace has {} of {} steps", trace.messages.len(), canonical.len()));
            }
            if completions != 1 {
                return fail(canonical.len() as u32, "complete trace without exactly one completion".into());
            }
        }
        Outcome::Failed { step } => {
            if step as usize != trace.messages.len() + 1 || step as usize > canonical.len() {
                return fail(step, format!("failure at {step} does not follow the {} delivered steps", trace.messages.len()));
            }
        }
    }

    if (trace.latency_s - span(&trace.messages)).abs() > 1e-9 {
        return fail(trace.messages.last().map_or(0, |m| m.step_number), "latency does not match timestamps".into());
    }
    Ok(())
}
