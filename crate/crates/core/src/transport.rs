//! Vehicle links: relay-assisted macro downlink, outage under shadowing,
//! car-to-car RF/optical reliability and group handover signalling.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::channel::{
    femto_path_loss, macro_path_loss, optical_channel_gain, optical_sinr, shannon_capacity, LinkGeometry,
    ObstacleClass, OpticalParams, RfParams,
};
use crate::error::{domain, validation, Result};
use crate::protocol::{canonical_sequence, HandoverKind};
use crate::stats::normal_cdf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InVehicleAccess {
    Lifi,
    Fap,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleLink {
    pub mbs_distance_km: f64,
    pub relay_mounted: bool,
    pub in_vehicle_access: InVehicleAccess,
    pub shadowing_sigma_db: f64,
    pub sinr_threshold_user_db: f64,
    pub sinr_threshold_relay_db: f64,
}

impl Default for VehicleLink {
    fn default() -> Self {
        Self {
            mbs_distance_km: 0.5,
            relay_mounted: true,
            in_vehicle_access: InVehicleAccess::Lifi,
            shadowing_sigma_db: 8.0,
            sinr_threshold_user_db: 9.0,
            sinr_threshold_relay_db: 5.0,
        }
    }
}

impl VehicleLink {
    pub fn validate(&self) -> Result<()> {
        if !(self.mbs_distance_km > 0.0 && self.mbs_distance_km.is_finite()) {
            return Err(validation("MBS distance must be positive"));
        }
        if !(self.shadowing_sigma_db >= 0.0) {
            return Err(validation("shadowing sigma must be non-negative"));
        }
        Ok(())
    }
}

/// Geometry of the access link inside the cabin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CabinParams {
    /// Ceiling LED to photodiode.
    pub lifi_vertical_m: f64,
    pub lifi_horizontal_m: f64,
    pub fap_distance_m: f64,
}

impl Default for CabinParams {
    fn default() -> Self {
        Self { lifi_vertical_m: 1.0, lifi_horizontal_m: 0.3, fap_distance_m: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleCapacity {
    pub direct_snr_db: f64,
    pub backhaul_snr_db: f64,
    pub access_bps: f64,
    pub direct_bps: f64,
    /// Two-hop bound: the weaker of backhaul and access.
    pub relayed_bps: f64,
}

/// Mean macro SNR at the relay antenna (no vehicle loss) and at an
/// in-vehicle user (vehicle loss applied). Their difference is exactly the
/// vehicle wall loss.
pub fn macro_snrs_db(distance_km: f64, rf: &RfParams) -> Result<(f64, f64)> {
    let backhaul = rf.mbs_tx_dbm - macro_path_loss(distance_km, rf, ObstacleClass::None)? - rf.macro_noise_dbm();
    let direct = backhaul - rf.wall_loss_db(ObstacleClass::VehicleWall);
    Ok((direct, backhaul))
}

pub fn vehicle_downlink_capacity(
    link: &VehicleLink,
    rf: &RfParams,
    optical: &OpticalParams,
    cabin: &CabinParams,
) -> Result<VehicleCapacity> {
    link.validate()?;
    let (direct_snr_db, backhaul_snr_db) = macro_snrs_db(link.mbs_distance_km, rf)?;
    let bw = rf.macro_bandwidth_hz;
    let direct_bps = shannon_capacity(10f64.powf(direct_snr_db / 10.0), bw);
    let backhaul_bps = shannon_capacity(10f64.powf(backhaul_snr_db / 10.0), bw);
    let access_bps = match link.in_vehicle_access {
        InVehicleAccess::Lifi => {
            let geom = LinkGeometry {
                horizontal_distance_m: cabin.lifi_horizontal_m,
                vertical_offset_m: cabin.lifi_vertical_m,
                obstacle_class: ObstacleClass::None,
            };
            let g = optical_channel_gain(&geom, optical)?;
            shannon_capacity(optical_sinr(g, &[], optical).linear, optical.bandwidth_hz)
        }
        InVehicleAccess::Fap => {
            let rx = rf.fap_tx_dbm - femto_path_loss(cabin.fap_distance_m, rf)?;
            shannon_capacity(10f64.powf((rx - rf.femto_noise_dbm()) / 10.0), rf.femto_bandwidth_hz)
        }
    };
    let relayed_bps = if link.relay_mounted { backhaul_bps.min(access_bps) } else { direct_bps };
    Ok(VehicleCapacity { direct_snr_db, backhaul_snr_db, access_bps, direct_bps, relayed_bps })
}

/// `P(SNR < threshold)` for a log-normally shadowed link.
pub fn shadowed_outage(mean_snr_db: f64, threshold_db: f64, sigma_db: f64) -> f64 {
    if sigma_db == 0.0 {
        return if mean_snr_db < threshold_db { 1.0 } else { 0.0 };
    }
    normal_cdf((threshold_db - mean_snr_db) / sigma_db)
}

/// Outage of the in-vehicle user on the direct link and of the relay.
pub fn vehicle_outage(link: &VehicleLink, rf: &RfParams) -> Result<(f64, f64)> {
    link.validate()?;
    if link.shadowing_sigma_db <= 0.0 {
        return Err(domain("shadowing sigma must be positive"));
    }
    let (direct, backhaul) = macro_snrs_db(link.mbs_distance_km, rf)?;
    Ok((
        shadowed_outage(direct, link.sinr_threshold_user_db, link.shadowing_sigma_db),
        shadowed_outage(backhaul, link.sinr_threshold_relay_db, link.shadowing_sigma_db),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CarFollowScenario {
    pub inter_vehicle_distance_m: f64,
    pub rf_range_m: f64,
    pub owc_range_m: f64,
    pub uturn_radius_m: f64,
    pub speed_kmh: f64,
    pub owc_fov_semi_angle_deg: f64,
    pub window_s: f64,
    /// When the front car enters the U-turn; `None` for straight driving.
    pub uturn_entry_s: Option<f64>,
    pub time_step_s: f64,
}

impl Default for CarFollowScenario {
    fn default() -> Self {
        Self {
            inter_vehicle_distance_m: 20.0,
            rf_range_m: 30.0,
            owc_range_m: 200.0,
            uturn_radius_m: 10.0,
            speed_kmh: 40.0,
            owc_fov_semi_angle_deg: 30.0,
            window_s: 30.0,
            uturn_entry_s: Some(10.0),
            time_step_s: 0.005,
        }
    }
}

impl CarFollowScenario {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.inter_vehicle_distance_m,
            self.rf_range_m,
            self.owc_range_m,
            self.uturn_radius_m,
            self.speed_kmh,
            self.owc_fov_semi_angle_deg,
            self.window_s,
            self.time_step_s,
        ];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(validation("car-follow parameters must be positive"));
        }
        if self.uturn_entry_s.is_some_and(|t| !(t >= 0.0)) {
            return Err(validation("U-turn entry time must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkReliability {
    pub rf_only: f64,
    pub owc_only: f64,
    pub hybrid: f64,
}

/// Position and heading at arc length `s` on a road that runs along +x,
/// turns through a half circle of radius `radius` starting at arc length
/// `turn_start`, and runs back along -x.
fn road_pose(s: f64, turn_start: f64, radius: f64) -> (f64, f64, f64) {
    if s <= turn_start {
        return (s, 0.0, 0.0);
    }
    let arc = PI * radius;
    if s <= turn_start + arc {
        let phi = (s - turn_start) / radius;
        (turn_start + radius * phi.sin(), radius * (1.0 - phi.cos()), phi)
    } else {
        (turn_start - (s - turn_start - arc), 2.0 * radius, PI)
    }
}

/// Up-time fractions of the RF link, the optical link and either of them
/// between a front car and one trailing at a fixed path distance.
pub fn car_link_reliability(sc: &CarFollowScenario) -> Result<LinkReliability> {
    sc.validate()?;
    let v = sc.speed_kmh / 3.6;
    let d = sc.inter_vehicle_distance_m;
    // Front car starts at arc length d, the back car at 0.
    let turn_start = sc.uturn_entry_s.map_or(f64::INFINITY, |t| d + v * t);
    let fov = sc.owc_fov_semi_angle_deg.to_radians();
    let steps = (sc.window_s / sc.time_step_s).ceil() as u64;
    let dt = sc.window_s / steps as f64;
    let (mut rf, mut owc, mut hybrid) = (0u64, 0u64, 0u64);
    for k in 0..steps {
        let t = (k as f64 + 0.5) * dt;
        let (xf, yf, hf) = road_pose(d + v * t, turn_start, sc.uturn_radius_m);
        let (xb, yb, hb) = road_pose(v * t, turn_start, sc.uturn_radius_m);
        let sep = (xf - xb).hypot(yf - yb);
        let rf_up = sep <= sc.rf_range_m;
        let owc_up = sep <= sc.owc_range_m && (hf - hb).abs() <= fov + 1e-12;
        rf += u64::from(rf_up);
        owc += u64::from(owc_up);
        hybrid += u64::from(rf_up || owc_up);
    }
    let n = steps as f64;
    Ok(LinkReliability { rf_only: rf as f64 / n, owc_only: owc as f64 / n, hybrid: hybrid as f64 / n })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignalingCount {
    pub individual: u64,
    pub group: u64,
}

impl SignalingCount {
    pub fn savings_ratio(&self) -> f64 {
        1.0 - self.group as f64 / self.individual as f64
    }
}

/// Messages to hand over `p_users` on-board users one by one versus as a
/// single group through the relay.
pub fn group_handover_signaling(p_users: u64, kind: HandoverKind) -> Result<SignalingCount> {
    if p_users == 0 {
        return Err(domain("at least one user is required"));
    }
    let per = canonical_sequence(kind).len() as u64;
    Ok(SignalingCount { individual: p_users * per, group: per })
}

// ---------------------------------------------------------------------------
// Distance sweeps
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleSweepConfig {
    pub distances_km: Vec<f64>,
    pub link: VehicleLink,
    pub cabin: CabinParams,
    pub rf: RfParams,
    pub optical: OpticalParams,
}

impl Default for VehicleSweepConfig {
    fn default() -> Self {
        Self {
            distances_km: (1..=20).map(|i| f64::from(i) / 10.0).collect(),
            link: VehicleLink::default(),
            cabin: CabinParams::default(),
            rf: RfParams::default(),
            optical: OpticalParams::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapacityRow {
    pub distance_km: f64,
    pub direct_bps: f64,
    pub relayed_bps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutageRow {
    pub distance_km: f64,
    pub p_out_direct: f64,
    pub p_out_relayed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityRow {
    pub inter_vehicle_distance_m: f64,
    pub reliability: LinkReliability,
}

fn csv_writer<W: Write>(out: W, header: &[&str]) -> Result<csv::Writer<W>> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(header)?;
    Ok(w)
}

pub fn capacity_sweep(cfg: &VehicleSweepConfig) -> Result<Vec<CapacityRow>> {
    cfg.distances_km
        .iter()
        .map(|&d| {
            let link = VehicleLink { mbs_distance_km: d, ..cfg.link };
            let c = vehicle_downlink_capacity(&link, &cfg.rf, &cfg.optical, &cfg.cabin)?;
            Ok(CapacityRow { distance_km: d, direct_bps: c.direct_bps, relayed_bps: c.relayed_bps })
        })
        .collect()
}

pub fn outage_sweep(cfg: &VehicleSweepConfig) -> Result<Vec<OutageRow>> {
    cfg.distances_km
        .iter()
        .map(|&d| {
            let (p_out_direct, p_out_relayed) = vehicle_outage(&VehicleLink { mbs_distance_km: d, ..cfg.link }, &cfg.rf)?;
            Ok(OutageRow { distance_km: d, p_out_direct, p_out_relayed })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReliabilitySweepConfig {
    pub distances_m: Vec<f64>,
    pub scenario: CarFollowScenario,
}

impl Default for ReliabilitySweepConfig {
    fn default() -> Self {
        Self { distances_m: (1..=100).map(f64::from).collect(), scenario: CarFollowScenario::default() }
    }
}

pub fn reliability_sweep(cfg: &ReliabilitySweepConfig) -> Result<Vec<ReliabilityRow>> {
    cfg.distances_m
        .iter()
        .map(|&d| {
            let sc = CarFollowScenario { inter_vehicle_distance_m: d, ..cfg.scenario };
            Ok(ReliabilityRow { inter_vehicle_distance_m: d, reliability: car_link_reliability(&sc)? })
        })
        .collect()
}

pub fn write_capacity_csv<W: Write>(rows: &[CapacityRow], out: W) -> Result<()> {
    let mut w = csv_writer(out, &["distance_km", "direct_bps", "relayed_bps"])?;
    for r in rows {
        w.write_record([r.distance_km.to_string(), r.direct_bps.to_string(), r.relayed_bps.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_outage_csv<W: Write>(rows: &[OutageRow], out: W) -> Result<()> {
    let mut w = csv_writer(out, &["distance_km", "p_out_direct", "p_out_relayed"])?;
    for r in rows {
        w.write_record([r.distance_km.to_string(), r.p_out_direct.to_string(), r.p_out_relayed.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_reliability_csv<W: Write>(rows: &[ReliabilityRow], out: W) -> Result<()> {
    let mut w = csv_writer(out, &["inter_vehicle_distance_m", "rf_only", "owc_only", "hybrid"])?;
    for r in rows {
        let l = r.reliability;
        w.write_record([
            r.inter_vehicle_distance_m.to_string(),
            l.rf_only.to_string(),
            l.owc_only.to_string(),
            l.hybrid.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn capacity(d: f64) -> VehicleCapacity {
        let link = VehicleLink { mbs_distance_km: d, ..VehicleLink::default() };
        vehicle_downlink_capacity(&link, &RfParams::default(), &OpticalParams::default(), &CabinParams::default())
            .unwrap()
    }

    #[test]
    fn half_kilometre_link() {
        let c = capacity(0.5);
        assert!((c.direct_bps / 1e6 - 58.3).abs() < 0.1, "{}", c.direct_bps);
        assert!((c.relayed_bps / 1e6 - 91.3).abs() < 0.1, "{}", c.relayed_bps);
        assert!(c.access_bps > c.relayed_bps);
    }

    #[test]
    fn zero_vehicle_loss_equalises_snr() {
        let rf = RfParams { vehicle_wall_loss_db: 0.0, ..RfParams::default() };
        let (direct, backhaul) = macro_snrs_db(0.7, &rf).unwrap();
        assert_eq!(direct, backhaul);
    }

    #[test]
    fn outage_twenty_db_margin() {
        assert!((shadowed_outage(29.0, 9.0, 8.0) - 0.00620966532577613).abs() < 1e-12);
        assert!(shadowed_outage(29.0, 9.0, 1e-6) < 1e-300);
        let link = VehicleLink { shadowing_sigma_db: 0.0, ..VehicleLink::default() };
        assert!(vehicle_outage(&link, &RfParams::default()).is_err());
    }

    #[test]
    fn straight_driving() {
        let near = CarFollowScenario { inter_vehicle_distance_m: 20.0, uturn_entry_s: None, ..Default::default() };
        assert_eq!(car_link_reliability(&near).unwrap(), LinkReliability { rf_only: 1.0, owc_only: 1.0, hybrid: 1.0 });
        let far = CarFollowScenario { inter_vehicle_distance_m: 40.0, ..near };
        assert_eq!(car_link_reliability(&far).unwrap(), LinkReliability { rf_only: 0.0, owc_only: 1.0, hybrid: 1.0 });
    }

    #[test]
    fn uturn_breaks_optical_link() {
        let r = car_link_reliability(&CarFollowScenario::default()).unwrap();
        assert!(r.owc_only < 1.0);
        assert_eq!(r.rf_only, 1.0);
        assert_eq!(r.hybrid, 1.0);
        // Front car alone in the turn for the whole arc: outage is at least
        // the time for the back car to reach it, minus the FOV slack.
        let far = car_link_reliability(&CarFollowScenario { inter_vehicle_distance_m: 60.0, ..Default::default() }).unwrap();
        assert!(far.owc_only < 1.0 && far.hybrid >= far.owc_only.max(far.rf_only));
    }

    #[test]
    fn signaling_counts() {
        let one = group_handover_signaling(1, HandoverKind::LifiToFemto).unwrap();
        assert_eq!(one.individual, one.group);
        let many = group_handover_signaling(20, HandoverKind::LifiToFemto).unwrap();
        assert_eq!((many.individual, many.group), (500, 25));
        assert!((many.savings_ratio() - (1.0 - 1.0 / 20.0)).abs() < 1e-15);
        assert!(group_handover_signaling(0, HandoverKind::LifiToLifi).is_err());
    }
}
