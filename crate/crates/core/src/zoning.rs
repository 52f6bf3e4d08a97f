//! LiFi AP grid planning and the four-zone coverage partition of a room.
//!
//! Zones:
//! - `Z1`: no LiFi coverage, femtocell only.
//! - `Z2`: the central disc of radius `r - l_z/2` around each AP.
//! - `Z3`: single LiFi coverage outside the central disc.
//! - `Z4`: covered by two or more LiFi APs.
//!
//! The closed-form areas follow the published expressions term by term.
//! They do not partition the room exactly (the lens term is counted once
//! per AP side rather than once per adjacent pair, and edge circles are not
//! clipped at the walls), so [`classify_point`] and the Monte Carlo model are
//! the ground truth for probabilities.

use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::rng::{self, Subsystem};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Zone {
    Z1,
    Z2,
    Z3,
    Z4,
}

impl Zone {
    pub const ALL: [Zone; 4] = [Zone::Z1, Zone::Z2, Zone::Z3, Zone::Z4];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Whether any LiFi AP reaches this zone.
    pub fn has_lifi(self) -> bool {
        self != Zone::Z1
    }
}

impl fmt::Display for Zone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Z{}", self.index() + 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPlan {
    pub room_x_m: f64,
    pub room_y_m: f64,
    pub coverage_radius_m: f64,
    pub n_x: usize,
    pub n_y: usize,
    pub d_x_m: f64,
    pub d_y_m: f64,
    pub l_x_m: f64,
    pub l_y_m: f64,
    /// Row-major: index `j * n_x + i` is column `i`, row `j`.
    pub ap_centers: Vec<Point>,
    pub fap_center: Point,
}

fn axis_layout(len: f64, r: f64) -> (usize, f64, f64) {
    let n = (len / (2.0 * r) + 1.0).floor() as usize;
    let d = len / ((len + 2.0 * r) / (2.0 * r)).floor();
    let l = (2.0 * r * n as f64 - len) / n as f64;
    (n, d, l)
}

fn axis_centers(n: usize, r: f64, l: f64) -> impl Iterator<Item = f64> {
    let first = r - l / 2.0;
    let pitch = 2.0 * r - l;
    (0..n).map(move |i| first + i as f64 * pitch)
}

/// Deploys the maximal AP grid for an `a x b` room with coverage radius `r`.
pub fn plan_grid(a: f64, b: f64, r: f64) -> Result<GridPlan> {
    for (name, v) in [("room x", a), ("room y", b), ("coverage radius", r)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(domain(format!("{name} must be positive, got {v}")));
        }
    }
    let (n_x, d_x, l_x) = axis_layout(a, r);
    let (n_y, d_y, l_y) = axis_layout(b, r);
    let xs: Vec<f64> = axis_centers(n_x, r, l_x).collect();
    let ap_centers = axis_centers(n_y, r, l_y)
        .flat_map(|y| xs.iter().map(move |&x| Point::new(x, y)))
        .collect();
    Ok(GridPlan {
        room_x_m: a,
        room_y_m: b,
        coverage_radius_m: r,
        n_x,
        n_y,
        d_x_m: d_x,
        d_y_m: d_y,
        l_x_m: l_x,
        l_y_m: l_y,
        ap_centers,
        fap_center: Point::new(a / 2.0, b / 2.0),
    })
}

/// Smallest AP count that tiles the room without overlap.
pub fn min_ap_count(a: f64, b: f64, r: f64) -> usize {
    let per_axis = |len: f64| (len / (2.0 * r)).floor().max(0.0) as usize;
    per_axis(a) * per_axis(b)
}

impl GridPlan {
    pub fn ap_count(&self) -> usize {
        self.ap_centers.len()
    }

    pub fn room_area(&self) -> f64 {
        self.room_x_m * self.room_y_m
    }

    /// `l_z`, the larger of the two overlap depths.
    pub fn overlap_depth(&self) -> f64 {
        self.l_x_m.max(self.l_y_m)
    }

    pub fn zone2_radius(&self) -> f64 {
        self.coverage_radius_m - self.overlap_depth() / 2.0
    }

    pub fn contains(&self, p: &Point) -> bool {
        (0.0..=self.room_x_m).contains(&p.x) && (0.0..=self.room_y_m).contains(&p.y)
    }

    /// Index of the closest AP and its distance.
    pub fn nearest_ap(&self, p: &Point) -> (usize, f64) {
        self.ap_centers
            .iter()
            .enumerate()
            .map(|(i, c)| (i, c.distance(p)))
            .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
    }

    /// Zone of a point assumed to lie in the room.
    pub fn zone_of(&self, p: &Point) -> Zone {
        let r = self.coverage_radius_m;
        let inner = self.zone2_radius();
        let mut covering = 0usize;
        let mut nearest = f64::INFINITY;
        for c in &self.ap_centers {
            let d = c.distance(p);
            if d <= r {
                covering += 1;
            }
            nearest = nearest.min(d);
        }
        match covering {
            0 => Zone::Z1,
            1 if nearest <= inner => Zone::Z2,
            1 => Zone::Z3,
            _ => Zone::Z4,
        }
    }
}

/// `\int_{lower}^{r} sqrt(r^2 - x^2) dx` in closed form.
pub fn segment_integral(r: f64, lower: f64) -> f64 {
    let antiderivative = |x: f64| {
        let x = x.clamp(-r, r);
        x * (r * r - x * x).max(0.0).sqrt() / 2.0 + r * r / 2.0 * (x / r).asin()
    };
    antiderivative(r) - antiderivative(lower)
}

/// Closed-form zone areas in m^2, indexed by [`Zone::index`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticAreas {
    pub z1: f64,
    pub z2: f64,
    pub z3: f64,
    pub z4: f64,
}

impl AnalyticAreas {
    pub fn as_array(&self) -> [f64; 4] {
        [self.z1, self.z2, self.z3, self.z4]
    }

    pub fn total(&self) -> f64 {
        self.z1 + self.z2 + self.z3 + self.z4
    }
}

pub fn analytic_zone_areas(plan: &GridPlan) -> AnalyticAreas {
    let r = plan.coverage_radius_m;
    let aps = (plan.n_x * plan.n_y) as f64;
    let lens = 4.0
        * aps
        * (segment_integral(r, r - plan.l_x_m / 2.0) + segment_integral(r, r - plan.l_y_m / 2.0));
    let disc = aps * std::f64::consts::PI * r * r;
    let inner = plan.zone2_radius();
    let z2 = aps * std::f64::consts::PI * inner * inner;
    let z4 = lens;
    AnalyticAreas { z1: plan.room_area() - disc + lens, z2, z3: disc - z2 - z4, z4 }
}

/// Zone of an in-room point. Precedence is Z4, Z2, Z3, Z1.
pub fn classify_point(plan: &GridPlan, point: Point) -> Result<Zone> {
    if !plan.contains(&point) {
        return Err(domain(format!(
            "point ({}, {}) lies outside the {} x {} room",
            point.x, point.y, plan.room_x_m, plan.room_y_m
        )));
    }
    Ok(plan.zone_of(&point))
}

pub const MIN_ZONE_SAMPLES: u64 = 10_000;
const ZONE_SHARDS: u64 = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneModel {
    pub analytic_areas_m2: [f64; 4],
    pub mc_areas_m2: [f64; 4],
    pub zone_probs: [f64; 4],
    pub zone_counts: [u64; 4],
    pub sample_count: u64,
    pub seed: u64,
}

/// Adjusts `values` (already close to `total`) so that the left-to-right sum
/// equals `total` bit for bit, moving only the largest entry.
pub(crate) fn normalize_exact(mut values: [f64; 4], total: f64) -> [f64; 4] {
    let largest = (0..4).fold(0, |best, i| if values[i] > values[best] { i } else { best });
    for _ in 0..8 {
        let sum = values.iter().fold(0.0, |acc, v| acc + v);
        if sum == total {
            break;
        }
        values[largest] += total - sum;
    }
    values
}

/// Uniform-sample estimate of zone areas and occupancy probabilities.
///
/// Samples are split over a fixed number of shards, each with its own
/// substream; counts are merged in shard order, so the result does not depend
/// on the worker count.
pub fn monte_carlo_zone_model(plan: &GridPlan, sample_count: u64, seed: u64) -> Result<ZoneModel> {
    if sample_count < MIN_ZONE_SAMPLES {
        return Err(domain(format!(
            "at least {MIN_ZONE_SAMPLES} samples are required, got {sample_count}"
        )));
    }
    let per_shard = sample_count / ZONE_SHARDS;
    let extra = sample_count % ZONE_SHARDS;
    let shard_counts: Vec<[u64; 4]> = (0..ZONE_SHARDS)
        .into_par_iter()
        .map(|shard| {
            let n = per_shard + u64::from(shard < extra);
            let mut rng = rng::stream(seed, Subsystem::ZoneSampling, shard);
            let mut counts = [0u64; 4];
            for _ in 0..n {
                let x = plan.room_x_m * rng::uniform01(&mut rng);
                let y = plan.room_y_m * rng::uniform01(&mut rng);
                counts[plan.zone_of(&Point::new(x, y)).index()] += 1;
            }
            counts
        })
        .collect();
    let mut zone_counts = [0u64; 4];
    for c in &shard_counts {
        for z in 0..4 {
            zone_counts[z] += c[z];
        }
    }
    let n = sample_count as f64;
    let zone_probs = normalize_exact(zone_counts.map(|c| c as f64 / n), 1.0);
    let area = plan.room_area();
    let mc_areas_m2 = normalize_exact(zone_counts.map(|c| c as f64 / n * area), area);
    Ok(ZoneModel {
        analytic_areas_m2: analytic_zone_areas(plan).as_array(),
        mc_areas_m2,
        zone_probs,
        zone_counts,
        sample_count,
        seed,
    })
}

impl ZoneModel {
    pub fn prob(&self, zone: Zone) -> f64 {
        self.zone_probs[zone.index()]
    }

    /// Relative gap between closed-form and sampled area per zone.
    pub fn relative_discrepancy(&self) -> [f64; 4] {
        std::array::from_fn(|z| {
            let mc = self.mc_areas_m2[z];
            if mc > 0.0 {
                (self.analytic_areas_m2[z] - mc) / mc
            } else if self.analytic_areas_m2[z] == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        })
    }

    /// Header: `zone,analytic_area_m2,mc_area_m2,probability`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["zone", "analytic_area_m2", "mc_area_m2", "probability"])?;
        for z in Zone::ALL {
            let i = z.index();
            w.write_record([
                z.to_string(),
                self.analytic_areas_m2[i].to_string(),
                self.mc_areas_m2[i].to_string(),
                self.zone_probs[i].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Probability that exactly `m` of `p` independently placed users fall in a
/// zone with occupancy probability `zone_prob`.
pub fn occupancy_probability(p_users: u64, zone_prob: f64, m: u64) -> Result<f64> {
    if m > p_users {
        return Err(domain(format!("m = {m} exceeds the user count {p_users}")));
    }
    if !(0.0..=1.0).contains(&zone_prob) {
        return Err(domain(format!("zone probability must be in [0, 1], got {zone_prob}")));
    }
    Ok(crate::stats::binomial_pmf(p_users, zone_prob, m))
}
