//! UCB acquisition over a finite candidate pool.

use alloc::format;
use alloc::vec::Vec;

use libm::{log, sqrt};

use crate::gp::PosteriorMoments;
use crate::{Error, Result};

const PI_SQUARED: f64 = core::f64::consts::PI * core::f64::consts::PI;

/// Exploration coefficient β_t.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BetaSchedule {
    /// Finite-domain schedule `2 ln(|Z| t² / (6δ))`. With `pi_squared` the
    /// argument becomes `|Z| π² t² / (6δ)`.
    Discrete {
        pool_size: usize,
        delta: f64,
        pi_squared: bool,
    },
    /// Lipschitz-domain schedule `2 ln(π² t² / (6δ)) + 2d ln(L r d t²)`.
    Continuous {
        dim: usize,
        radius: f64,
        lipschitz: f64,
        delta: f64,
    },
    Constant(f64),
}

impl Default for BetaSchedule {
    fn default() -> Self {
        Self::Constant(4.0)
    }
}

/// β at one iteration. `clamped` is set when a log argument fell to or below
/// zero (or the sum went negative) and the value was clamped to 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Beta {
    pub value: f64,
    pub clamped: bool,
}

impl BetaSchedule {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(format!("beta schedule: {msg}")));
        let delta_ok = |d: f64| d > 0.0 && d < 1.0;
        match *self {
            Self::Discrete {
                pool_size, delta, ..
            } => {
                if pool_size < 1 {
                    return bad("pool size must be >= 1");
                }
                if !delta_ok(delta) {
                    return bad("delta must lie in (0, 1)");
                }
            }
            Self::Continuous {
                dim,
                radius,
                lipschitz,
                delta,
            } => {
                if dim < 1 {
                    return bad("dimension must be >= 1");
                }
                if !(radius > 0.0) || !(lipschitz > 0.0) {
                    return bad("radius and Lipschitz constant must be positive");
                }
                if !delta_ok(delta) {
                    return bad("delta must lie in (0, 1)");
                }
            }
            Self::Constant(b) => {
                if !(b >= 0.0 && b.is_finite()) {
                    return bad("constant beta must be finite and >= 0");
                }
            }
        }
        Ok(())
    }

    /// β_t for `t >= 1`.
    pub fn beta(&self, t: usize) -> Result<Beta> {
        if t == 0 {
            return Err(Error::Config("beta is defined for t >= 1".into()));
        }
        let t2 = (t as f64) * (t as f64);
        let (raw, degenerate) = match *self {
            Self::Constant(b) => {
                return Ok(Beta {
                    value: b,
                    clamped: false,
                })
            }
            Self::Discrete {
                pool_size,
                delta,
                pi_squared,
            } => {
                let factor = if pi_squared { PI_SQUARED } else { 1.0 };
                let arg = pool_size as f64 * factor * t2 / (6.0 * delta);
                (2.0 * log(arg), arg <= 0.0)
            }
            Self::Continuous {
                dim,
                radius,
                lipschitz,
                delta,
            } => {
                let d = dim as f64;
                let a = PI_SQUARED * t2 / (6.0 * delta);
                let b = lipschitz * radius * d * t2;
                (2.0 * log(a) + 2.0 * d * log(b), a <= 0.0 || b <= 0.0)
            }
        };
        if degenerate || !(raw >= 0.0) {
            Ok(Beta {
                value: 0.0,
                clamped: true,
            })
        } else {
            Ok(Beta {
                value: raw,
                clamped: false,
            })
        }
    }
}

/// `μ + sqrt(β) · sqrt(var)`.
pub fn ucb_score(moments: &PosteriorMoments, beta: f64) -> f64 {
    moments.mean + sqrt(beta) * sqrt(moments.variance)
}

/// UCB scores of a batch of posterior moments.
pub fn ucb_scores(moments: &[PosteriorMoments], beta: f64) -> Vec<f64> {
    moments.iter().map(|m| ucb_score(m, beta)).collect()
}

/// Index of the highest score among entries not yet `chosen`, with ties
/// going to the lowest index. NaN scores never win.
pub fn select(scores: &[f64], chosen: &[bool]) -> Result<usize> {
    if scores.len() != chosen.len() {
        return Err(Error::Dimension {
            expected: scores.len(),
            got: chosen.len(),
        });
    }
    let mut best: Option<(usize, f64)> = None;
    for (i, (&s, &taken)) in scores.iter().zip(chosen).enumerate() {
        if taken {
            continue;
        }
        match best {
            None => best = Some((i, s)),
            Some((_, b)) if s > b || (b.is_nan() && !s.is_nan()) => best = Some((i, s)),
            _ => {}
        }
    }
    best.map(|(i, _)| i).ok_or(Error::ExhaustedPool)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_is_constant() {
        let s = BetaSchedule::Constant(4.0);
        for t in [1, 7, 1000] {
            assert_eq!(s.beta(t).unwrap().value, 4.0);
        }
    }

    #[test]
    fn continuous_example() {
        let s = BetaSchedule::Continuous {
            dim: 1,
            radius: 1.0,
            lipschitz: 1.0,
            delta: 0.1,
        };
        let b = s.beta(1).unwrap();
        assert!((b.value - 5.600_56).abs() < 1e-3);
        assert!(!b.clamped);
    }

    #[test]
    fn tiny_lipschitz_clamps() {
        let s = BetaSchedule::Continuous {
            dim: 3,
            radius: 1e-3,
            lipschitz: 1e-3,
            delta: 0.5,
        };
        let b = s.beta(1).unwrap();
        assert_eq!(b.value, 0.0);
        assert!(b.clamped);
    }

    #[test]
    fn zero_t_rejected() {
        assert!(BetaSchedule::default().beta(0).is_err());
    }

    #[test]
    fn ucb_examples() {
        let m = PosteriorMoments {
            mean: 0.5,
            variance: 0.04,
        };
        assert!((ucb_score(&m, 4.0) - 0.9).abs() < 1e-15);
        assert_eq!(ucb_score(&m, 0.0), 0.5);
    }

    #[test]
    fn selection_rules() {
        assert_eq!(select(&[3.0, 9.0, 1.0], &[true, true, false]).unwrap(), 2);
        assert_eq!(select(&[2.0, 2.0, 1.0], &[false; 3]).unwrap(), 0);
        assert_eq!(select(&[f64::NAN, 1.0], &[false; 2]).unwrap(), 1);
        assert_eq!(select(&[1.0], &[true]), Err(Error::ExhaustedPool));
        assert_eq!(select(&[], &[]), Err(Error::ExhaustedPool));
    }
}
