// SPDX-License-Identifier: Apache-2.0

//! Delay distributions shared by the latency and processing-delay models.

use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::RngStream;

/// A non-negative delay distribution with parameters in milliseconds.
///
/// JSON form is internally tagged, e.g. `{"kind": "normal", "mean": 50, "std": 10}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DelayModel {
    Constant { value: f64 },
    Uniform { lo: f64, hi: f64 },
    /// Normal, truncated at zero.
    Normal { mean: f64, std: f64 },
    /// Exponential with `rate` events per millisecond.
    Exponential { rate: f64 },
    /// Resamples uniformly from a fixed list of observed delays.
    Empirical { samples: Vec<f64> },
}

#[derive(Debug, Error, PartialEq)]
pub enum DelayModelError {
    #[error("{0} must be finite and non-negative")]
    Negative(&'static str),
    #[error("uniform bounds lo={lo} > hi={hi}")]
    InvertedBounds { lo: f64, hi: f64 },
    #[error("exponential rate must be positive, got {0}")]
    Rate(f64),
    #[error("empirical sample list is empty")]
    EmptySamples,
}

fn non_negative(v: f64, what: &'static str) -> Result<(), DelayModelError> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(DelayModelError::Negative(what))
    }
}

/// Rounds half-up to whole milliseconds; negative draws clamp to zero.
pub fn round_ms(x: f64) -> u64 {
    if !(x > 0.0) {
        return 0;
    }
    (x + 0.5).floor() as u64
}

impl DelayModel {
    pub fn constant(value: f64) -> Self {
        DelayModel::Constant { value }
    }

    pub fn validate(&self) -> Result<(), DelayModelError> {
        match self {
            DelayModel::Constant { value } => non_negative(*value, "constant value"),
            DelayModel::Uniform { lo, hi } => {
                non_negative(*lo, "uniform lo")?;
                non_negative(*hi, "uniform hi")?;
                if lo > hi {
                    return Err(DelayModelError::InvertedBounds { lo: *lo, hi: *hi });
                }
                Ok(())
            }
            DelayModel::Normal { mean, std } => {
                if !mean.is_finite() {
                    return Err(DelayModelError::Negative("normal mean"));
                }
                non_negative(*std, "normal std")
            }
            DelayModel::Exponential { rate } => {
                if rate.is_finite() && *rate > 0.0 {
                    Ok(())
                } else {
                    Err(DelayModelError::Rate(*rate))
                }
            }
            DelayModel::Empirical { samples } => {
                if samples.is_empty() {
                    return Err(DelayModelError::EmptySamples);
                }
                samples
                    .iter()
                    .try_for_each(|s| non_negative(*s, "empirical sample"))
            }
        }
    }

    /// Continuous draw, already truncated at zero.
    pub fn sample_f64(&self, rng: &mut RngStream) -> f64 {
        let x = match self {
            DelayModel::Constant { value } => *value,
            DelayModel::Uniform { lo, hi } => {
                if lo == hi {
                    *lo
                } else {
                    lo + (hi - lo) * rng.unit()
                }
            }
            DelayModel::Normal { mean, std } => {
                if *std == 0.0 {
                    *mean
                } else {
                    Normal::new(*mean, *std)
                        .expect("validated normal")
                        .sample(rng.inner())
                }
            }
            DelayModel::Exponential { rate } => {
                Exp::new(*rate).expect("validated rate").sample(rng.inner())
            }
            DelayModel::Empirical { samples } => samples[rng.below(samples.len())],
        };
        x.max(0.0)
    }

    /// Draw rounded half-up to whole milliseconds.
    pub fn sample_ms(&self, rng: &mut RngStream) -> u64 {
        round_ms(self.sample_f64(rng))
    }

    /// Mean of the (untruncated) distribution.
    pub fn mean(&self) -> f64 {
        match self {
            DelayModel::Constant { value } => *value,
            DelayModel::Uniform { lo, hi } => (lo + hi) / 2.0,
            DelayModel::Normal { mean, .. } => mean.max(0.0),
            DelayModel::Exponential { rate } => 1.0 / rate,
            DelayModel::Empirical { samples } => {
                samples.iter().sum::<f64>() / samples.len() as f64
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nodes::NodeId;
    use crate::rng::Purpose;

    fn stream(seed: u64) -> RngStream {
        RngStream::new(seed, NodeId(1), Purpose::Processing)
    }

    #[test]
    fn constant_always_same() {
        let m = DelayModel::constant(10.0);
        let mut rng = stream(1);
        assert!((0..100).all(|_| m.sample_ms(&mut rng) == 10));
    }

    #[test]
    fn degenerate_uniform() {
        let m = DelayModel::Uniform { lo: 5.0, hi: 5.0 };
        let mut rng = stream(2);
        assert!((0..100).all(|_| m.sample_ms(&mut rng) == 5));
    }

    #[test]
    fn truncated_normal_is_non_negative() {
        let m = DelayModel::Normal { mean: 5.0, std: 1.0 };
        let mut rng = stream(3);
        assert!((0..10_000).all(|_| m.sample_f64(&mut rng) >= 0.0));
        // A mean close to zero exercises the truncation itself.
        let m = DelayModel::Normal { mean: 0.5, std: 3.0 };
        assert!((0..10_000).all(|_| m.sample_f64(&mut rng) >= 0.0));
    }

    #[test]
    fn rounding_is_half_up() {
        assert_eq!(round_ms(2.5), 3);
        assert_eq!(round_ms(2.4999), 2);
        assert_eq!(round_ms(-3.0), 0);
        assert_eq!(round_ms(f64::NAN), 0);
    }

    #[test]
    fn empirical_is_reproducible_and_centred() {
        let m = DelayModel::Empirical { samples: vec![3.0, 7.0] };
        let a: Vec<u64> = {
            let mut rng = stream(4);
            (0..100).map(|_| m.sample_ms(&mut rng)).collect()
        };
        let b: Vec<u64> = {
            let mut rng = stream(4);
            (0..100).map(|_| m.sample_ms(&mut rng)).collect()
        };
        assert_eq!(a, b);
        let mut rng = stream(5);
        let mean = (0..10_000).map(|_| m.sample_ms(&mut rng) as f64).sum::<f64>() / 10_000.0;
        assert!((mean - 5.0).abs() <= 0.05 * 5.0, "mean {mean}");
    }

    #[test]
    fn empirical_histogram_matches_list() {
        let list = vec![1.0, 2.0, 2.0, 4.0, 9.0];
        let m = DelayModel::Empirical { samples: list.clone() };
        let mut rng = stream(6);
        let n = 10_000;
        let mut counts = std::collections::BTreeMap::new();
        for _ in 0..n {
            *counts.entry(m.sample_ms(&mut rng)).or_insert(0usize) += 1;
        }
        let mut expected = std::collections::BTreeMap::new();
        for v in &list {
            *expected.entry(*v as u64).or_insert(0.0) += 1.0 / list.len() as f64;
        }
        let tv: f64 = expected
            .iter()
            .map(|(k, p)| (p - *counts.get(k).unwrap_or(&0) as f64 / n as f64).abs())
            .sum::<f64>()
            / 2.0;
        assert!(tv < 0.05, "total variation {tv}");
    }

    #[test]
    fn validation_errors() {
        assert_eq!(
            DelayModel::Empirical { samples: vec![] }.validate(),
            Err(DelayModelError::EmptySamples)
        );
        assert!(DelayModel::Uniform { lo: 3.0, hi: 1.0 }.validate().is_err());
        assert!(DelayModel::Exponential { rate: 0.0 }.validate().is_err());
        assert!(DelayModel::constant(-1.0).validate().is_err());
        assert!(DelayModel::Normal { mean: 5.0, std: 1.0 }.validate().is_ok());
    }

    #[test]
    fn json_form() {
        let m: DelayModel =
            serde_json::from_str(r#"{"kind": "normal", "mean": 50, "std": 10}"#).unwrap();
        assert_eq!(m, DelayModel::Normal { mean: 50.0, std: 10.0 });
        assert!(serde_json::from_str::<DelayModel>(r#"{"kind": "gamma"}"#).is_err());
    }
}
