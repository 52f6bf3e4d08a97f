//! Admission control, handover decisions and FAP idle-mode management.
//!
//! Real-time voice is pinned to the femtocell. Data calls prefer LiFi in the
//! central zone, the FAP in the overlap and no-LiFi zones, and LiFi at the
//! edge only while the FAP is idle. When the preferred network has no free
//! slot the call is redirected to the other network if it covers the zone;
//! voice is never redirected to LiFi.

use serde::{Deserialize, Serialize};

use crate::error::{domain, validation, Result};
use crate::stats::binomial_coefficient;
use crate::zoning::Zone;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrafficClass {
    RtVoice,
    Data,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApKind {
    Lifi,
    Fap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApMode {
    Active,
    Idle,
}

/// Which access point carries a call.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ServingAp {
    Fap,
    Lifi(usize),
}

impl ServingAp {
    pub fn kind(self) -> ApKind {
        match self {
            ServingAp::Fap => ApKind::Fap,
            ServingAp::Lifi(_) => ApKind::Lifi,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyParams {
    /// Maximum dwell in the overlap zone with the serving LiFi still stronger.
    pub t_h_s: f64,
    /// Dwell in the edge zone before a FAP user moves to LiFi.
    pub t_h1_s: f64,
    pub fap_slots: u32,
    pub lifi_slots: u32,
}

impl Default for PolicyParams {
    fn default() -> Self {
        Self { t_h_s: 2.0, t_h1_s: 2.0, fap_slots: 8, lifi_slots: 10 }
    }
}

impl PolicyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_h_s > 0.0 && self.t_h1_s > 0.0) {
            return Err(validation("policy thresholds must be positive"));
        }
        if self.fap_slots == 0 || self.lifi_slots == 0 {
            return Err(validation("policy slot counts must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CallRequest {
    pub call_id: u64,
    pub terminal_id: usize,
    pub traffic_class: TrafficClass,
    pub zone: Zone,
    pub arrival_time_s: f64,
    /// Strongest LiFi AP covering the terminal, if any.
    pub lifi_ap: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessPoint {
    pub id: usize,
    pub kind: ApKind,
    pub mode: ApMode,
    pub capacity_slots: u32,
    pub occupied_slots: u32,
}

impl AccessPoint {
    pub fn has_free_slot(&self) -> bool {
        self.occupied_slots < self.capacity_slots
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkState {
    pub fap: AccessPoint,
    pub lifi: Vec<AccessPoint>,
}

impl NetworkState {
    /// One FAP (initially idle) and `lifi_count` active LiFi APs.
    pub fn new(lifi_count: usize, params: &PolicyParams) -> Self {
        Self {
            fap: AccessPoint {
                id: 0,
                kind: ApKind::Fap,
                mode: ApMode::Idle,
                capacity_slots: params.fap_slots,
                occupied_slots: 0,
            },
            lifi: (0..lifi_count)
                .map(|id| AccessPoint {
                    id,
                    kind: ApKind::Lifi,
                    mode: ApMode::Active,
                    capacity_slots: params.lifi_slots,
                    occupied_slots: 0,
                })
                .collect(),
        }
    }

    pub fn ap(&self, at: ServingAp) -> Option<&AccessPoint> {
        match at {
            ServingAp::Fap => Some(&self.fap),
            ServingAp::Lifi(i) => self.lifi.get(i),
        }
    }

    fn ap_mut(&mut self, at: ServingAp) -> Result<&mut AccessPoint> {
        match at {
            ServingAp::Fap => Ok(&mut self.fap),
            ServingAp::Lifi(i) => {
                self.lifi.get_mut(i).ok_or_else(|| validation(format!("no LiFi AP {i}")))
            }
        }
    }

    fn has_free_slot(&self, at: ServingAp) -> bool {
        self.ap(at).is_some_and(AccessPoint::has_free_slot)
    }

    /// Takes one slot. Allocating on the FAP wakes it up.
    pub fn allocate(&mut self, at: ServingAp) -> Result<()> {
        let ap = self.ap_mut(at)?;
        if !ap.has_free_slot() {
            return Err(validation(format!("{at:?} has no free slot")));
        }
        ap.occupied_slots += 1;
        ap.mode = ApMode::Active;
        Ok(())
    }

    pub fn release(&mut self, at: ServingAp) -> Result<()> {
        let ap = self.ap_mut(at)?;
        if ap.occupied_slots == 0 {
            return Err(validation(format!("{at:?} has no occupied slot to release")));
        }
        ap.occupied_slots -= 1;
        Ok(())
    }

    pub fn occupied_total(&self) -> u32 {
        self.fap.occupied_slots + self.lifi.iter().map(|a| a.occupied_slots).sum::<u32>()
    }

    pub fn check_invariants(&self) -> Result<()> {
        for ap in std::iter::once(&self.fap).chain(&self.lifi) {
            if ap.occupied_slots > ap.capacity_slots {
                return Err(validation(format!("{:?} {} over capacity", ap.kind, ap.id)));
            }
            if ap.mode == ApMode::Idle && ap.occupied_slots != 0 {
                return Err(validation(format!("{:?} {} idle with users", ap.kind, ap.id)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AdmissionDecision {
    AcceptOnFap,
    AcceptOnLifi(usize),
    /// The preferred network was full; the call goes to the other one.
    Redirected(ServingAp),
    Blocked,
}

impl AdmissionDecision {
    pub fn serving(self) -> Option<ServingAp> {
        match self {
            AdmissionDecision::AcceptOnFap => Some(ServingAp::Fap),
            AdmissionDecision::AcceptOnLifi(i) => Some(ServingAp::Lifi(i)),
            AdmissionDecision::Redirected(at) => Some(at),
            AdmissionDecision::Blocked => None,
        }
    }
}

/// Admission decision for a newly originating call.
pub fn admit_new_call(request: &CallRequest, state: &NetworkState) -> AdmissionDecision {
    let lifi = request.lifi_ap.filter(|_| request.zone.has_lifi()).map(ServingAp::Lifi);
    let prefers_fap = request.traffic_class == TrafficClass::RtVoice
        || match request.zone {
            Zone::Z1 | Zone::Z4 => true,
            Zone::Z3 => state.fap.mode == ApMode::Active,
            Zone::Z2 => false,
        }
        || lifi.is_none();

    if prefers_fap {
        if state.has_free_slot(ServingAp::Fap) {
            return AdmissionDecision::AcceptOnFap;
        }
        match lifi {
            Some(at) if request.traffic_class == TrafficClass::Data && state.has_free_slot(at) => {
                AdmissionDecision::Redirected(at)
            }
            _ => AdmissionDecision::Blocked,
        }
    } else {
        let Some(ServingAp::Lifi(i)) = lifi else { unreachable!("LiFi preference implies an AP") };
        if state.has_free_slot(ServingAp::Lifi(i)) {
            AdmissionDecision::AcceptOnLifi(i)
        } else if state.has_free_slot(ServingAp::Fap) {
            AdmissionDecision::Redirected(ServingAp::Fap)
        } else {
            AdmissionDecision::Blocked
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DwellTimers {
    pub zone4_entry_time_s: Option<f64>,
    pub zone3_entry_time_s: Option<f64>,
    /// Time of the last policy-driven handover, for the ping-pong guard.
    pub last_handover_s: Option<f64>,
    pub t_h_s: f64,
    pub t_h1_s: f64,
}

impl DwellTimers {
    pub fn new(t_h_s: f64, t_h1_s: f64) -> Self {
        Self { zone4_entry_time_s: None, zone3_entry_time_s: None, last_handover_s: None, t_h_s, t_h1_s }
    }

    /// Starts or clears the zone timers on a zone change at `now_s`.
    pub fn observe(&mut self, from: Option<Zone>, to: Zone, now_s: f64) {
        if from == Some(to) {
            return;
        }
        self.zone4_entry_time_s = (to == Zone::Z4).then_some(now_s);
        self.zone3_entry_time_s = (to == Zone::Z3).then_some(now_s);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZoneTransition {
    pub from: Zone,
    pub to: Zone,
}

impl ZoneTransition {
    pub fn new(from: Zone, to: Zone) -> Self {
        Self { from, to }
    }

    pub fn stay(zone: Zone) -> Self {
        Self { from: zone, to: zone }
    }

    pub fn entered(&self, zone: Zone) -> bool {
        self.to == zone && self.from != zone
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HandoverContext {
    pub serving_kind: ApKind,
    pub traffic_class: TrafficClass,
    pub transition: ZoneTransition,
    pub s_serving_db: f64,
    /// Strongest non-serving LiFi signal; `-inf` when there is none.
    pub s_target_db: f64,
    pub now_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HandoverDecision {
    Stay,
    ToFap,
    ToTargetLifi,
    ToLifi,
}

fn dwell(entry: Option<f64>, now: f64) -> Result<f64> {
    match entry {
        None => Ok(0.0),
        Some(t) if t <= now => Ok(now - t),
        Some(t) => Err(validation(format!("zone entry at {t} s is after now = {now} s"))),
    }
}

/// Handover decision for a terminal in an active call.
///
/// A LiFi-served terminal cannot be remaining in the no-LiFi zone; that
/// transition is rejected as inconsistent. Voice calls are never moved to
/// LiFi. Except for losing LiFi coverage altogether, no policy handover fires
/// within `t_h_s` of the previous one.
pub fn handover_decision(ctx: &HandoverContext, timers: &DwellTimers) -> Result<HandoverDecision> {
    if !(timers.t_h_s > 0.0 && timers.t_h1_s > 0.0) {
        return Err(validation("dwell thresholds must be positive"));
    }
    let now = ctx.now_s;
    let tr = ctx.transition;
    let guarded = match timers.last_handover_s {
        Some(t) => now - t < timers.t_h_s,
        None => false,
    };
    let decision = match ctx.serving_kind {
        ApKind::Lifi => {
            if tr.from == Zone::Z1 && tr.to == Zone::Z1 {
                return Err(validation("LiFi-served terminal cannot remain in the no-LiFi zone"));
            }
            if tr.entered(Zone::Z1) {
                return Ok(HandoverDecision::ToFap);
            }
            match tr.to {
                _ if tr.entered(Zone::Z3) => HandoverDecision::ToFap,
                Zone::Z4 => {
                    if ctx.s_target_db > ctx.s_serving_db {
                        HandoverDecision::ToTargetLifi
                    } else if dwell(timers.zone4_entry_time_s, now)? > timers.t_h_s {
                        HandoverDecision::ToFap
                    } else {
                        HandoverDecision::Stay
                    }
                }
                _ => HandoverDecision::Stay,
            }
        }
        ApKind::Fap => {
            if ctx.traffic_class == TrafficClass::RtVoice {
                return Ok(HandoverDecision::Stay);
            }
            match tr.to {
                _ if tr.entered(Zone::Z2) => HandoverDecision::ToLifi,
                Zone::Z3 if dwell(timers.zone3_entry_time_s, now)? > timers.t_h1_s => {
                    HandoverDecision::ToLifi
                }
                _ => HandoverDecision::Stay,
            }
        }
    };
    if guarded && decision != HandoverDecision::Stay {
        return Ok(HandoverDecision::Stay);
    }
    Ok(decision)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConnectedUser {
    pub terminal_id: usize,
    pub zone: Zone,
    pub traffic_class: TrafficClass,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FapModeUpdate {
    pub mode: ApMode,
    /// Terminals to move to LiFi before the FAP goes idle.
    pub shift_to_lifi: Vec<usize>,
}

/// FAP mode after a change in its user set.
///
/// No users: idle. A single data user in the edge zone: shift it to LiFi and
/// go idle. Anything else keeps the FAP active.
pub fn fap_mode_update(users: &[ConnectedUser]) -> FapModeUpdate {
    match users {
        [] => FapModeUpdate { mode: ApMode::Idle, shift_to_lifi: Vec::new() },
        [only] if only.zone == Zone::Z3 && only.traffic_class == TrafficClass::Data => {
            FapModeUpdate { mode: ApMode::Idle, shift_to_lifi: vec![only.terminal_id] }
        }
        _ => FapModeUpdate { mode: ApMode::Active, shift_to_lifi: Vec::new() },
    }
}

/// Probability that at most one of `p_users` falls in Z1 or Z3, i.e. that
/// the FAP may idle. `zone_probs` must be a distribution.
pub fn fap_idle_probability(p_users: i64, zone_probs: &[f64; 4]) -> Result<f64> {
    if p_users < 0 {
        return Err(domain(format!("user count must be >= 0, got {p_users}")));
    }
    if zone_probs.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
        return Err(domain("zone probabilities must lie in [0, 1]"));
    }
    let total: f64 = zone_probs.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(validation(format!("zone probabilities sum to {total}, expected 1")));
    }
    let p = p_users as u64;
    let q = zone_probs[Zone::Z1.index()] + zone_probs[Zone::Z3.index()];
    let rest = zone_probs[Zone::Z2.index()] + zone_probs[Zone::Z4.index()];
    Ok((0..=p.min(1))
        .map(|k| binomial_coefficient(p, k) * q.powi(k as i32) * rest.powi((p - k) as i32))
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn request(class: TrafficClass, zone: Zone) -> CallRequest {
        CallRequest {
            call_id: 1,
            terminal_id: 0,
            traffic_class: class,
            zone,
            arrival_time_s: 0.0,
            lifi_ap: zone.has_lifi().then_some(0),
        }
    }

    fn state() -> NetworkState {
        NetworkState::new(9, &PolicyParams::default())
    }

    #[test]
    fn admission_examples() {
        let s = state();
        assert_eq!(admit_new_call(&request(TrafficClass::Data, Zone::Z1), &s), AdmissionDecision::AcceptOnFap);
        assert_eq!(admit_new_call(&request(TrafficClass::RtVoice, Zone::Z2), &s), AdmissionDecision::AcceptOnFap);
        assert_eq!(admit_new_call(&request(TrafficClass::Data, Zone::Z4), &s), AdmissionDecision::AcceptOnFap);
        assert_eq!(admit_new_call(&request(TrafficClass::Data, Zone::Z2), &s), AdmissionDecision::AcceptOnLifi(0));
        // FAP idle: edge-zone data goes to LiFi.
        assert_eq!(admit_new_call(&request(TrafficClass::Data, Zone::Z3), &s), AdmissionDecision::AcceptOnLifi(0));

        let mut full_lifi = state();
        full_lifi.lifi[0].occupied_slots = full_lifi.lifi[0].capacity_slots;
        assert_eq!(
            admit_new_call(&request(TrafficClass::Data, Zone::Z3), &full_lifi),
            AdmissionDecision::Redirected(ServingAp::Fap)
        );

        let mut active = state();
        active.allocate(ServingAp::Fap).unwrap();
        assert_eq!(admit_new_call(&request(TrafficClass::Data, Zone::Z3), &active), AdmissionDecision::AcceptOnFap);
    }

    #[test]
    fn full_fap_overflow() {
        let mut s = state();
        for _ in 0..s.fap.capacity_slots {
            s.allocate(ServingAp::Fap).unwrap();
        }
        assert_eq!(admit_new_call(&request(TrafficClass::RtVoice, Zone::Z2), &s), AdmissionDecision::Blocked);
        assert_eq!(admit_new_call(&request(TrafficClass::Data, Zone::Z1), &s), AdmissionDecision::Blocked);
        assert_eq!(
            admit_new_call(&request(TrafficClass::Data, Zone::Z4), &s),
            AdmissionDecision::Redirected(ServingAp::Lifi(0))
        );
    }

    #[test]
    fn slot_accounting() {
        let mut s = state();
        assert!(s.release(ServingAp::Fap).is_err());
        s.allocate(ServingAp::Lifi(3)).unwrap();
        assert_eq!(s.occupied_total(), 1);
        s.release(ServingAp::Lifi(3)).unwrap();
        assert!(s.allocate(ServingAp::Lifi(42)).is_err());
        s.check_invariants().unwrap();
    }

    fn ctx(kind: ApKind, from: Zone, to: Zone, s: f64, t: f64, now: f64) -> HandoverContext {
        HandoverContext {
            serving_kind: kind,
            traffic_class: TrafficClass::Data,
            transition: ZoneTransition::new(from, to),
            s_serving_db: s,
            s_target_db: t,
            now_s: now,
        }
    }

    #[test]
    fn lifi_served_rules() {
        let timers = DwellTimers::new(2.0, 2.0);
        let d = |c| handover_decision(&c, &timers).unwrap();
        assert_eq!(d(ctx(ApKind::Lifi, Zone::Z3, Zone::Z1, -40.0, -50.0, 1.0)), HandoverDecision::ToFap);
        assert_eq!(d(ctx(ApKind::Lifi, Zone::Z2, Zone::Z3, -40.0, -50.0, 1.0)), HandoverDecision::ToFap);
        assert_eq!(d(ctx(ApKind::Lifi, Zone::Z2, Zone::Z4, -45.0, -40.0, 1.0)), HandoverDecision::ToTargetLifi);

        let mut t = DwellTimers::new(2.0, 2.0);
        t.zone4_entry_time_s = Some(10.0);
        let stay = ctx(ApKind::Lifi, Zone::Z4, Zone::Z4, -40.0, -45.0, 12.0);
        assert_eq!(handover_decision(&stay, &t).unwrap(), HandoverDecision::Stay);
        let later = ctx(ApKind::Lifi, Zone::Z4, Zone::Z4, -40.0, -45.0, 12.0 + 1e-9);
        assert_eq!(handover_decision(&later, &t).unwrap(), HandoverDecision::ToFap);
        assert_eq!(d(ctx(ApKind::Lifi, Zone::Z4, Zone::Z2, -40.0, -45.0, 1.0)), HandoverDecision::Stay);
    }

    #[test]
    fn fap_served_rules() {
        let mut t = DwellTimers::new(2.0, 2.0);
        let d = |c, t: &DwellTimers| handover_decision(&c, t).unwrap();
        assert_eq!(d(ctx(ApKind::Fap, Zone::Z3, Zone::Z2, -90.0, -40.0, 1.0), &t), HandoverDecision::ToLifi);
        t.zone3_entry_time_s = Some(0.0);
        assert_eq!(d(ctx(ApKind::Fap, Zone::Z3, Zone::Z3, -90.0, -40.0, 1.5), &t), HandoverDecision::Stay);
        assert_eq!(d(ctx(ApKind::Fap, Zone::Z3, Zone::Z3, -90.0, -40.0, 2.5), &t), HandoverDecision::ToLifi);
        assert_eq!(d(ctx(ApKind::Fap, Zone::Z3, Zone::Z1, -90.0, -40.0, 2.5), &t), HandoverDecision::Stay);
        let mut voice = ctx(ApKind::Fap, Zone::Z3, Zone::Z2, -90.0, -40.0, 1.0);
        voice.traffic_class = TrafficClass::RtVoice;
        assert_eq!(d(voice, &t), HandoverDecision::Stay);
    }

    #[test]
    fn invalid_transitions() {
        let t = DwellTimers::new(2.0, 2.0);
        assert!(handover_decision(&ctx(ApKind::Lifi, Zone::Z1, Zone::Z1, 0.0, 0.0, 0.0), &t).is_err());
        let mut future = t;
        future.zone4_entry_time_s = Some(5.0);
        assert!(handover_decision(&ctx(ApKind::Lifi, Zone::Z4, Zone::Z4, 0.0, -1.0, 1.0), &future).is_err());
        let bad = DwellTimers::new(0.0, 2.0);
        assert!(handover_decision(&ctx(ApKind::Fap, Zone::Z1, Zone::Z2, 0.0, 0.0, 0.0), &bad).is_err());
    }

    #[test]
    fn ping_pong_guard() {
        let mut t = DwellTimers::new(2.0, 2.0);
        t.last_handover_s = Some(9.0);
        let c = ctx(ApKind::Fap, Zone::Z3, Zone::Z2, -90.0, -40.0, 10.0);
        assert_eq!(handover_decision(&c, &t).unwrap(), HandoverDecision::Stay);
        let c = ctx(ApKind::Lifi, Zone::Z3, Zone::Z1, -90.0, -40.0, 10.0);
        assert_eq!(handover_decision(&c, &t).unwrap(), HandoverDecision::ToFap);
    }

    #[test]
    fn idle_mode_examples() {
        let u = |zone, class| ConnectedUser { terminal_id: 7, zone, traffic_class: class };
        assert_eq!(fap_mode_update(&[]), FapModeUpdate { mode: ApMode::Idle, shift_to_lifi: vec![] });
        assert_eq!(
            fap_mode_update(&[u(Zone::Z3, TrafficClass::Data)]),
            FapModeUpdate { mode: ApMode::Idle, shift_to_lifi: vec![7] }
        );
        for z in [Zone::Z1, Zone::Z2, Zone::Z4] {
            assert_eq!(fap_mode_update(&[u(z, TrafficClass::Data)]).mode, ApMode::Active);
        }
        assert_eq!(fap_mode_update(&[u(Zone::Z3, TrafficClass::RtVoice)]).mode, ApMode::Active);
        let two = [u(Zone::Z3, TrafficClass::Data), u(Zone::Z3, TrafficClass::Data)];
        assert!(fap_mode_update(&two).shift_to_lifi.is_empty());
    }

    #[test]
    fn idle_probability_values() {
        let q = 123.61 / 576.0;
        let probs = [q, 1.0 - q, 0.0, 0.0];
        assert_eq!(fap_idle_probability(0, &probs).unwrap(), 1.0);
        let want = (1.0 - q).powi(5) + 5.0 * q * (1.0 - q).powi(4);
        assert!((fap_idle_probability(5, &probs).unwrap() - want).abs() < 1e-15);
        assert!((fap_idle_probability(5, &probs).unwrap() - 0.707_134_290_540_629_3).abs() < 1e-12);
        assert!(fap_idle_probability(-1, &probs).is_err());
        assert!(fap_idle_probability(3, &[0.5, 0.6, 0.0, 0.0]).is_err());
    }
}
