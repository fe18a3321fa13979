//! Synthetic cohorts: Bernoulli adherence per slot and Beta-distributed
//! self-reports with per-subject shapes drawn uniformly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{ObservationSeries, Slot, StudyDesign};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_subjects: usize,
    /// Per-slot answer probability (chi).
    pub adherence_rate: f64,
    pub param_lo: f64,
    pub param_hi: f64,
    pub design: StudyDesign,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_subjects: 1000,
            adherence_rate: 0.19,
            param_lo: 0.5,
            param_hi: 10.0,
            design: StudyDesign::default(),
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.design.validate()?;
        if !(0.0..=1.0).contains(&self.adherence_rate) {
            return Err(Error::Domain(format!(
                "adherence rate {} outside [0, 1]",
                self.adherence_rate
            )));
        }
        if !(self.param_lo > 0.0 && self.param_lo < self.param_hi && self.param_hi.is_finite()) {
            return Err(Error::Domain(format!(
                "shape range must satisfy 0 < lo < hi, got {}:{}",
                self.param_lo, self.param_hi
            )));
        }
        Ok(())
    }
}

/// Stable 64-bit seed for `key` under `root` (FNV-1a mixed with splitmix64).
pub fn derive_seed(root: u64, key: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in key.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = root ^ h;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Random stream for subject `index`; independent of generation order.
pub fn subject_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// The shapes drawn for one simulated subject alongside its series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrueShapes {
    pub delta: f64,
    pub xi: f64,
}

pub fn simulate_subject(config: &SimConfig, index: usize) -> Result<(ObservationSeries, TrueShapes)> {
    let mut rng = subject_rng(config.seed, index);
    let shape = Uniform::new_inclusive(config.param_lo, config.param_hi).map_err(|e| Error::Domain(e.to_string()))?;
    let delta = shape.sample(&mut rng);
    let xi = shape.sample(&mut rng);
    let beta = Beta::new(delta, xi).map_err(|e| Error::Domain(e.to_string()))?;
    let slots = (0..config.design.total_slots())
        .map(|_| {
            if rng.random::<f64>() < config.adherence_rate {
                Slot::Present(beta.sample(&mut rng).clamp(0.0, 1.0))
            } else {
                Slot::Missing
            }
        })
        .collect();
    let series = ObservationSeries::new(format!("sim-{:05}", index + 1), config.design.slots_per_day, slots)?;
    Ok((series, TrueShapes { delta, xi }))
}

/// Generates the cohort in subject order; each subject has its own stream.
pub fn generate_cohort(config: &SimConfig) -> Result<Vec<ObservationSeries>> {
    config.validate()?;
    (0..config.n_subjects)
        .into_par_iter()
        .map(|i| simulate_subject(config, i).map(|(s, _)| s))
        .collect()
}
