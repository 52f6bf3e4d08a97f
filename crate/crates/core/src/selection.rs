//! AHP network selection between the LiFi and femtocell alternatives.
//!
//! Criterion weights come from the principal eigenvector of a positive
//! reciprocal pairwise-comparison matrix. Each alternative's global weight is
//! the weighted sum of its normalised per-criterion scores.

use serde::{Deserialize, Serialize};

use crate::error::{validation, Result};

/// Saaty random consistency index for N = 1..=9.
pub const RANDOM_INDEX: [f64; 9] = [0.0, 0.0, 0.58, 0.90, 1.12, 1.24, 1.32, 1.41, 1.45];

/// Threshold above which a comparison matrix is flagged as inconsistent.
pub const CONSISTENCY_LIMIT: f64 = 0.1;

const POWER_TOLERANCE: f64 = 1e-10;
const POWER_MAX_ITER: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseMatrix {
    n: usize,
    values: Vec<f64>,
}

impl PairwiseMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if !(2..=9).contains(&n) {
            return Err(validation(format!("pairwise matrix must be 2..=9 square, got {n} rows")));
        }
        if let Some(bad) = rows.iter().position(|r| r.len() != n) {
            return Err(validation(format!("row {bad} has {} entries, expected {n}", rows[bad].len())));
        }
        let values: Vec<f64> = rows.into_iter().flatten().collect();
        let m = Self { n, values };
        for i in 0..n {
            for j in 0..n {
                let v = m.get(i, j);
                if !(v.is_finite() && v > 0.0) {
                    return Err(validation(format!("entry ({i}, {j}) = {v} is not positive")));
                }
                if i == j && (v - 1.0).abs() > 1e-12 {
                    return Err(validation(format!("diagonal entry ({i}, {i}) = {v}, expected 1")));
                }
                if (v * m.get(j, i) - 1.0).abs() > 1e-9 {
                    return Err(validation(format!(
                        "entries ({i}, {j}) and ({j}, {i}) are not reciprocal"
                    )));
                }
            }
        }
        Ok(m)
    }

    /// The consistent matrix `m[i][j] = v_i / v_j`.
    pub fn from_ratios(v: &[f64]) -> Result<Self> {
        Self::new(v.iter().map(|a| v.iter().map(|b| a / b).collect()).collect())
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.values.chunks(self.n).map(<[f64]>::to_vec).collect()
    }

    fn apply(&self, w: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| (0..self.n).map(|j| self.get(i, j) * w[j]).sum()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightDerivation {
    pub weights: Vec<f64>,
    pub lambda_max: f64,
    pub consistency_ratio: f64,
    /// `consistency_ratio > CONSISTENCY_LIMIT`. Informational only.
    pub inconsistent: bool,
}

/// Principal-eigenvector weights and consistency ratio.
pub fn derive_weights(matrix: &PairwiseMatrix) -> WeightDerivation {
    let n = matrix.size();
    let mut w = vec![1.0 / n as f64; n];
    for _ in 0..POWER_MAX_ITER {
        let mut next = matrix.apply(&w);
        let s: f64 = next.iter().sum();
        next.iter_mut().for_each(|x| *x /= s);
        let delta = next
            .iter()
            .zip(&w)
            .map(|(a, b)| ((a - b) / b).abs())
            .fold(0.0, f64::max);
        w = next;
        if delta < POWER_TOLERANCE {
            break;
        }
    }
    let aw = matrix.apply(&w);
    let lambda_max = aw.iter().zip(&w).map(|(a, b)| a / b).sum::<f64>() / n as f64;
    let ci = ((lambda_max - n as f64) / (n as f64 - 1.0)).max(0.0);
    let ri = RANDOM_INDEX[n - 1];
    let consistency_ratio = if ri > 0.0 { ci / ri } else { 0.0 };
    WeightDerivation {
        weights: w,
        lambda_max,
        consistency_ratio,
        inconsistent: consistency_ratio > CONSISTENCY_LIMIT,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriteriaSet {
    pub names: Vec<String>,
    pub pairwise_matrix: PairwiseMatrix,
    pub weights: Vec<f64>,
    pub consistency_ratio: f64,
}

impl CriteriaSet {
    pub fn new(names: Vec<String>, pairwise_matrix: PairwiseMatrix) -> Result<Self> {
        if names.len() != pairwise_matrix.size() {
            return Err(validation(format!(
                "{} criterion names for a {}x{} matrix",
                names.len(),
                pairwise_matrix.size(),
                pairwise_matrix.size()
            )));
        }
        let d = derive_weights(&pairwise_matrix);
        Ok(Self { names, pairwise_matrix, weights: d.weights, consistency_ratio: d.consistency_ratio })
    }

    /// Data rate, SINR margin, mobility support and current load, in that
    /// order of importance.
    pub fn default_network_criteria() -> Self {
        let rows = vec![
            vec![1.0, 2.0, 3.0, 4.0],
            vec![1.0 / 2.0, 1.0, 2.0, 3.0],
            vec![1.0 / 3.0, 1.0 / 2.0, 1.0, 2.0],
            vec![1.0 / 4.0, 1.0 / 3.0, 1.0 / 2.0, 1.0],
        ];
        let names = ["data_rate", "sinr_margin", "mobility_support", "current_load"]
            .map(String::from)
            .to_vec();
        Self::new(names, PairwiseMatrix::new(rows).expect("default matrix is reciprocal"))
            .expect("names match matrix")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Larger raw values are better.
    Benefit,
    /// Smaller raw values are better (load, cost).
    Cost,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Network {
    Lifi,
    Femto,
}

/// Normalised per-criterion values: `lifi[i] + femto[i] == 1` for every `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlternativeScores {
    pub lifi: Vec<f64>,
    pub femto: Vec<f64>,
}

impl AlternativeScores {
    /// Column-sum normalisation of raw measurements. A cost column uses the
    /// other alternative's share, which equals reciprocal normalisation for
    /// two alternatives and stays finite at zero. An all-zero column splits
    /// evenly.
    pub fn normalized(raw_lifi: &[f64], raw_femto: &[f64], modes: &[Normalization]) -> Result<Self> {
        if raw_lifi.len() != raw_femto.len() || raw_lifi.len() != modes.len() {
            return Err(validation(format!(
                "score dimensions differ: lifi {}, femto {}, modes {}",
                raw_lifi.len(),
                raw_femto.len(),
                modes.len()
            )));
        }
        let mut lifi = Vec::with_capacity(modes.len());
        let mut femto = Vec::with_capacity(modes.len());
        for ((&a, &b), mode) in raw_lifi.iter().zip(raw_femto).zip(modes) {
            if !(a >= 0.0 && b >= 0.0) {
                return Err(validation(format!("raw scores must be non-negative, got ({a}, {b})")));
            }
            let s = a + b;
            let (x, y) = if s == 0.0 {
                (0.5, 0.5)
            } else {
                match mode {
                    Normalization::Benefit => (a / s, b / s),
                    Normalization::Cost => (b / s, a / s),
                }
            };
            lifi.push(x);
            femto.push(y);
        }
        Ok(Self { lifi, femto })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    pub lifi: f64,
    pub femto: f64,
    pub chosen: Network,
}

/// Global weights of both alternatives. Ties go to the femtocell.
pub fn rank_networks(scores: &AlternativeScores, weights: &[f64]) -> Result<Ranking> {
    if scores.lifi.len() != weights.len() || scores.femto.len() != weights.len() {
        return Err(validation(format!(
            "{} weights for {} / {} criteria",
            weights.len(),
            scores.lifi.len(),
            scores.femto.len()
        )));
    }
    let dot = |row: &[f64]| row.iter().zip(weights).map(|(a, w)| a * w).sum::<f64>();
    let lifi = dot(&scores.lifi);
    let femto = dot(&scores.femto);
    let chosen = if lifi > femto { Network::Lifi } else { Network::Femto };
    Ok(Ranking { lifi, femto, chosen })
}
