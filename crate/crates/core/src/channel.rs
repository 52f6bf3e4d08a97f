//! Link budgets for the optical and RF tiers.
//!
//! The optical side is the Lambertian line-of-sight model with an ideal
//! non-imaging concentrator. The AP faces straight down and the photodiode
//! straight up, so the irradiance and incidence angles coincide and the gain
//! depends only on horizontal distance and vertical separation.
//!
//! The RF side is the urban Hata model for macrocells and the indoor
//! log-distance model with wall term for femtocells. Everything here is pure.

use serde::{Deserialize, Serialize};

use crate::error::{domain, validation, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OpticalParams {
    pub half_intensity_angle_deg: f64,
    pub fov_semi_angle_deg: f64,
    pub pd_area_m2: f64,
    pub filter_gain: f64,
    pub refractive_index: f64,
    pub tx_optical_power_w: f64,
    pub responsivity_a_per_w: f64,
    pub noise_psd_a2_per_hz: f64,
    pub bandwidth_hz: f64,
    /// Vertical separation between AP and photodiode (AP height minus UE height).
    pub ap_height_m: f64,
}

impl Default for OpticalParams {
    fn default() -> Self {
        Self {
            half_intensity_angle_deg: 60.0,
            fov_semi_angle_deg: 90.0,
            pd_area_m2: 1.0e-4,
            filter_gain: 1.0,
            refractive_index: 1.5,
            tx_optical_power_w: 6.0,
            responsivity_a_per_w: 0.53,
            noise_psd_a2_per_hz: 1.0e-21,
            bandwidth_hz: 20.0e6,
            ap_height_m: 3.0 - 1.0,
        }
    }
}

impl OpticalParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("pd_area_m2", self.pd_area_m2),
            ("filter_gain", self.filter_gain),
            ("refractive_index", self.refractive_index),
            ("tx_optical_power_w", self.tx_optical_power_w),
            ("responsivity_a_per_w", self.responsivity_a_per_w),
            ("noise_psd_a2_per_hz", self.noise_psd_a2_per_hz),
            ("bandwidth_hz", self.bandwidth_hz),
            ("ap_height_m", self.ap_height_m),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(validation(format!("optical.{name} must be positive, got {v}")));
            }
        }
        if !(self.fov_semi_angle_deg > 0.0 && self.fov_semi_angle_deg <= 90.0) {
            return Err(validation(format!(
                "optical.fov_semi_angle_deg must be in (0, 90], got {}",
                self.fov_semi_angle_deg
            )));
        }
        lambertian_index(self.half_intensity_angle_deg)?;
        Ok(())
    }

    /// Electrical signal term `(R * P_t * H)^2` for a channel gain `H`.
    pub fn electrical_power(&self, gain: f64) -> f64 {
        let i = self.responsivity_a_per_w * self.tx_optical_power_w * gain;
        i * i
    }

    pub fn noise_power(&self) -> f64 {
        self.noise_psd_a2_per_hz * self.bandwidth_hz
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObstacleClass {
    None,
    BuildingWall,
    VehicleWall,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RfParams {
    pub center_freq_mhz: f64,
    pub mbs_height_m: f64,
    pub terminal_height_m: f64,
    pub fap_height_m: f64,
    pub macrocell_spacing_m: f64,
    pub mbs_tx_dbm: f64,
    pub fap_tx_dbm: f64,
    pub building_wall_loss_db: f64,
    pub vehicle_wall_loss_db: f64,
    /// Distance power loss coefficient `N` of the femto model.
    pub femto_loss_coeff: f64,
    /// Number of walls `q` between a FAP and its own users.
    pub wall_count: u32,
    pub noise_psd_dbm_per_hz: f64,
    pub macro_bandwidth_hz: f64,
    pub femto_bandwidth_hz: f64,
}

impl Default for RfParams {
    fn default() -> Self {
        Self {
            center_freq_mhz: 1800.0,
            mbs_height_m: 50.0,
            terminal_height_m: 1.0,
            fap_height_m: 3.0,
            macrocell_spacing_m: 1000.0,
            mbs_tx_dbm: 46.0,
            fap_tx_dbm: 7.0,
            building_wall_loss_db: 20.0,
            vehicle_wall_loss_db: 10.0,
            femto_loss_coeff: 28.0,
            wall_count: 0,
            noise_psd_dbm_per_hz: -174.0,
            macro_bandwidth_hz: 10.0e6,
            femto_bandwidth_hz: 10.0e6,
        }
    }
}

impl RfParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("center_freq_mhz", self.center_freq_mhz),
            ("mbs_height_m", self.mbs_height_m),
            ("terminal_height_m", self.terminal_height_m),
            ("fap_height_m", self.fap_height_m),
            ("macro_bandwidth_hz", self.macro_bandwidth_hz),
            ("femto_bandwidth_hz", self.femto_bandwidth_hz),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(validation(format!("rf.{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("building_wall_loss_db", self.building_wall_loss_db),
            ("vehicle_wall_loss_db", self.vehicle_wall_loss_db),
            ("femto_loss_coeff", self.femto_loss_coeff),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(validation(format!("rf.{name} must be non-negative, got {v}")));
            }
        }
        Ok(())
    }

    pub fn wall_loss_db(&self, obstacle: ObstacleClass) -> f64 {
        match obstacle {
            ObstacleClass::None => 0.0,
            ObstacleClass::BuildingWall => self.building_wall_loss_db,
            ObstacleClass::VehicleWall => self.vehicle_wall_loss_db,
        }
    }

    pub fn macro_noise_dbm(&self) -> f64 {
        noise_power_dbm(self.noise_psd_dbm_per_hz, self.macro_bandwidth_hz)
    }

    pub fn femto_noise_dbm(&self) -> f64 {
        noise_power_dbm(self.noise_psd_dbm_per_hz, self.femto_bandwidth_hz)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkGeometry {
    pub horizontal_distance_m: f64,
    pub vertical_offset_m: f64,
    pub obstacle_class: ObstacleClass,
}

impl LinkGeometry {
    /// Optical geometry at horizontal distance `l` below an AP mounted at the
    /// configured height.
    pub fn optical(horizontal_distance_m: f64, params: &OpticalParams) -> Self {
        Self {
            horizontal_distance_m,
            vertical_offset_m: params.ap_height_m,
            obstacle_class: ObstacleClass::None,
        }
    }
}

/// A signal-to-interference-plus-noise ratio in both scales.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sinr {
    pub linear: f64,
    /// `-inf` when the linear ratio is zero.
    pub db: f64,
}

impl Sinr {
    pub fn from_linear(linear: f64) -> Self {
        Self { linear, db: linear_to_db(linear) }
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(linear: f64) -> f64 {
    if linear <= 0.0 {
        f64::NEG_INFINITY
    } else {
        10.0 * linear.log10()
    }
}

/// Thermal noise power over `bandwidth_hz` for a PSD in dBm/Hz.
pub fn noise_power_dbm(psd_dbm_per_hz: f64, bandwidth_hz: f64) -> f64 {
    psd_dbm_per_hz + 10.0 * bandwidth_hz.log10()
}

/// Lambertian emission order for an LED half-intensity angle.
pub fn lambertian_index(half_intensity_angle_deg: f64) -> Result<f64> {
    if !(half_intensity_angle_deg > 0.0 && half_intensity_angle_deg < 90.0) {
        return Err(domain(format!(
            "half-intensity angle must be in (0, 90) degrees, got {half_intensity_angle_deg}"
        )));
    }
    let c = half_intensity_angle_deg.to_radians().cos();
    Ok(-std::f64::consts::LN_2 / c.ln())
}

/// Ideal non-imaging concentrator gain; zero outside the receiver FOV.
pub fn concentrator_gain(incidence_angle_deg: f64, params: &OpticalParams) -> f64 {
    if incidence_angle_deg > params.fov_semi_angle_deg {
        return 0.0;
    }
    let s = params.fov_semi_angle_deg.to_radians().sin();
    params.refractive_index * params.refractive_index / (s * s)
}

/// Line-of-sight DC gain between a downward AP and an upward photodiode.
pub fn optical_channel_gain(geometry: &LinkGeometry, params: &OpticalParams) -> Result<f64> {
    let l = geometry.horizontal_distance_m;
    let h = geometry.vertical_offset_m;
    if !(l >= 0.0) {
        return Err(domain(format!("horizontal distance must be >= 0, got {l}")));
    }
    if !(h > 0.0) {
        return Err(Error::DegenerateGeometry(format!(
            "vertical separation must be positive, got {h}"
        )));
    }
    let m = lambertian_index(params.half_intensity_angle_deg)?;
    let d2 = l * l + h * h;
    let cos_theta = h / d2.sqrt();
    let theta_deg = cos_theta.clamp(-1.0, 1.0).acos().to_degrees();
    let g = concentrator_gain(theta_deg, params);
    if g == 0.0 {
        return Ok(0.0);
    }
    // cos(phi) == cos(theta) for facing AP and receiver.
    Ok((m + 1.0) * params.pd_area_m2 / (2.0 * std::f64::consts::PI * d2)
        * g
        * params.filter_gain
        * cos_theta.powf(m)
        * cos_theta)
}

/// SINR of the optical downlink, electrical terms squared.
pub fn optical_sinr(serving_gain: f64, interferer_gains: &[f64], params: &OpticalParams) -> Sinr {
    if serving_gain <= 0.0 {
        return Sinr::from_linear(0.0);
    }
    let interference: f64 = interferer_gains.iter().map(|&h| params.electrical_power(h)).sum();
    Sinr::from_linear(params.electrical_power(serving_gain) / (params.noise_power() + interference))
}

pub fn shannon_capacity(sinr_linear: f64, bandwidth_hz: f64) -> f64 {
    bandwidth_hz * (1.0 + sinr_linear.max(0.0)).log2()
}

/// Urban Hata loss for a macrocell link plus obstacle penetration loss.
pub fn macro_path_loss(distance_km: f64, rf: &RfParams, obstacle: ObstacleClass) -> Result<f64> {
    if !(distance_km > 0.0) {
        return Err(domain(format!("macro distance must be > 0 km, got {distance_km}")));
    }
    let lf = rf.center_freq_mhz.log10();
    let lhb = rf.mbs_height_m.log10();
    let a_hm = 1.1 * (lf - 0.7) * rf.terminal_height_m - (1.56 * lf - 0.8);
    Ok(69.55 + 26.16 * lf - 13.82 * lhb - a_hm
        + (44.9 - 6.55 * lhb) * distance_km.log10()
        + rf.wall_loss_db(obstacle))
}

/// Indoor femtocell loss at `distance_m` through `walls` walls.
pub fn femto_path_loss_walls(distance_m: f64, rf: &RfParams, walls: u32) -> Result<f64> {
    if !(distance_m > 0.0) {
        return Err(domain(format!("femto distance must be > 0 m, got {distance_m}")));
    }
    let q = walls as f64;
    Ok(20.0 * rf.center_freq_mhz.log10() + rf.femto_loss_coeff * distance_m.log10() + 4.0 * q * q
        - 28.0)
}

/// Indoor femtocell loss using the configured wall count.
pub fn femto_path_loss(distance_m: f64, rf: &RfParams) -> Result<f64> {
    femto_path_loss_walls(distance_m, rf, rf.wall_count)
}

/// SINR from received powers in dBm, combining interferers linearly.
pub fn rf_sinr(serving_rx_dbm: f64, interferer_rx_dbm: &[f64], noise_dbm: f64) -> Sinr {
    let interference: f64 = interferer_rx_dbm.iter().map(|&p| db_to_linear(p)).sum();
    Sinr::from_linear(db_to_linear(serving_rx_dbm) / (db_to_linear(noise_dbm) + interference))
}
