use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LatencyError {
    #[error("mean and std must be finite and >= 0, got {0}, {1}")]
    OutOfRange(f64, f64),
    #[error("expected <mean,std> in milliseconds, got {0:?}")]
    Syntax(String),
}

/// Simulated inference delay: a normal distribution clamped at zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LatencyModel {
    mean_ms: f64,
    std_ms: f64,
}

impl LatencyModel {
    /// Heavy 3D-capable U-Net style model.
    pub const NNUNET_PROFILE: LatencyModel = LatencyModel {
        mean_ms: 338.0,
        std_ms: 45.8,
    };
    /// Transformer segmenter fast enough for live use.
    pub const SEGMENTER_PROFILE: LatencyModel = LatencyModel {
        mean_ms: 23.4,
        std_ms: 2.5,
    };
    pub const ZERO: LatencyModel = LatencyModel {
        mean_ms: 0.0,
        std_ms: 0.0,
    };

    pub fn new(mean_ms: f64, std_ms: f64) -> Result<Self, LatencyError> {
        if !(mean_ms >= 0.0 && std_ms >= 0.0 && mean_ms.is_finite() && std_ms.is_finite()) {
            return Err(LatencyError::OutOfRange(mean_ms, std_ms));
        }
        Ok(Self { mean_ms, std_ms })
    }

    pub fn mean_ms(&self) -> f64 {
        self.mean_ms
    }

    pub fn std_ms(&self) -> f64 {
        self.std_ms
    }

    pub fn is_zero(&self) -> bool {
        self.mean_ms == 0.0 && self.std_ms == 0.0
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Duration {
        let ms = if self.std_ms == 0.0 {
            self.mean_ms
        } else {
            Normal::new(self.mean_ms, self.std_ms)
                .expect("std validated")
                .sample(rng)
        };
        Duration::from_secs_f64(ms.max(0.0) / 1000.0)
    }
}

impl FromStr for LatencyModel {
    type Err = LatencyError;

    /// Parses `mean,std`, or one of the profile names `nnunet`, `segmenter`,
    /// `zero`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "nnunet" => return Ok(Self::NNUNET_PROFILE),
            "segmenter" => return Ok(Self::SEGMENTER_PROFILE),
            "zero" => return Ok(Self::ZERO),
            _ => {}
        }
        let (mean, std) = s
            .split_once(',')
            .ok_or_else(|| LatencyError::Syntax(s.to_string()))?;
        let parse = |v: &str| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| LatencyError::Syntax(s.to_string()))
        };
        Self::new(parse(mean)?, parse(std)?)
    }
}

impl fmt::Display for LatencyModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.mean_ms, self.std_ms)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn sample_mean_tracks_profile() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let m = LatencyModel::SEGMENTER_PROFILE;
        let n = 20_000;
        let mean: f64 = (0..n)
            .map(|_| m.sample(&mut rng).as_secs_f64() * 1000.0)
            .sum::<f64>()
            / n as f64;
        assert!((mean - 23.4).abs() < 0.1, "{mean}");
    }

    #[test]
    fn clamps_at_zero() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let m = LatencyModel::new(1.0, 50.0).unwrap();
        for _ in 0..1000 {
            let _ = m.sample(&mut rng);
        }
        assert_eq!(LatencyModel::ZERO.sample(&mut rng), Duration::ZERO);
    }

    #[test]
    fn parses() {
        assert_eq!(
            "338.0, 45.8".parse::<LatencyModel>().unwrap(),
            LatencyModel::NNUNET_PROFILE
        );
        assert_eq!(
            "segmenter".parse::<LatencyModel>().unwrap(),
            LatencyModel::SEGMENTER_PROFILE
        );
        assert!("-1,2".parse::<LatencyModel>().is_err());
        assert!("12".parse::<LatencyModel>().is_err());
        assert!("a,b".parse::<LatencyModel>().is_err());
        assert!("nan,1".parse::<LatencyModel>().is_err());
        let m = LatencyModel::new(23.4, 2.5).unwrap();
        assert_eq!(m.to_string().parse::<LatencyModel>().unwrap(), m);
    }
}
