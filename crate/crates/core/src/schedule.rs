//! Learning-rate and rank-fraction schedules.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrKind {
    /// Linear warmup, then half-cosine decay.
    Cosine,
    /// Warmup, constant plateau, then linear decay.
    Wsd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LrSchedule {
    pub kind: LrKind,
    pub base_lr: f64,
    #[serde(default)]
    pub warmup_steps: usize,
    pub total_steps: usize,
    /// Share of the post-warmup steps spent on the plateau (WSD only).
    #[serde(default = "default_stable_fraction")]
    pub stable_fraction: f64,
    #[serde(default)]
    pub final_lr_ratio: f64,
}

fn default_stable_fraction() -> f64 {
    0.8
}

impl LrSchedule {
    pub fn cosine(base_lr: f64, warmup_steps: usize, total_steps: usize) -> Self {
        Self {
            kind: LrKind::Cosine,
            base_lr,
            warmup_steps,
            total_steps,
            stable_fraction: default_stable_fraction(),
            final_lr_ratio: 0.0,
        }
    }

    pub fn wsd(base_lr: f64, warmup_steps: usize, total_steps: usize) -> Self {
        Self {
            kind: LrKind::Wsd,
            ..Self::cosine(base_lr, warmup_steps, total_steps)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return Err(Error::Config(format!("base_lr must be positive, got {}", self.base_lr)));
        }
        if self.total_steps == 0 || self.warmup_steps >= self.total_steps {
            return Err(Error::Config(format!(
                "need warmup_steps < total_steps, got {} and {}",
                self.warmup_steps, self.total_steps
            )));
        }
        if !(self.stable_fraction > 0.0 && self.stable_fraction <= 1.0) {
            return Err(Error::Config("stable_fraction must lie in (0, 1]".into()));
        }
        if !(self.final_lr_ratio >= 0.0 && self.final_lr_ratio.is_finite()) {
            return Err(Error::Config("final_lr_ratio must be nonnegative".into()));
        }
        Ok(())
    }

    /// Learning rate used at step `t`.
    pub fn lr_at(&self, t: usize) -> Result<f64> {
        if t >= self.total_steps {
            return Err(Error::InvalidStep(format!(
                "step {t} outside schedule of {} steps",
                self.total_steps
            )));
        }
        let base = self.base_lr;
        let floor = self.final_lr_ratio * base;
        if t < self.warmup_steps {
            return Ok(base * t as f64 / self.warmup_steps as f64);
        }
        let span = (self.total_steps - self.warmup_steps) as f64;
        let since = (t - self.warmup_steps) as f64;
        Ok(match self.kind {
            LrKind::Cosine => floor + (base - floor) * 0.5 * (1.0 + (PI * since / span).cos()),
            LrKind::Wsd => {
                let plateau = (self.stable_fraction * span).round();
                if since < plateau {
                    base
                } else {
                    let decay = (span - plateau).max(1.0);
                    base - (base - floor) * ((since - plateau) / decay)
                }
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RankSchedule {
    Fixed {
        fraction: f64,
    },
    /// `r(t) = rᵢ` on `[tᵢ, tᵢ₊₁)`; the first breakpoint must be step 0.
    Piecewise {
        breakpoints: Vec<(usize, f64)>,
    },
    /// Hold `r_start` for `hold_steps`, then cosine-anneal to `r_end` by
    /// step `anneal_steps` (the run length when absent) and stay there.
    CosineHold {
        r_start: f64,
        r_end: f64,
        hold_steps: usize,
        total_steps: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        anneal_steps: Option<usize>,
    },
}

impl RankSchedule {
    /// Cosine-hold holding for the first 10% of the run and reaching
    /// `r_end` at 80%, where the default WSD cooldown begins.
    pub fn cosine_hold(r_start: f64, r_end: f64, total_steps: usize) -> Self {
        RankSchedule::CosineHold {
            r_start,
            r_end,
            hold_steps: total_steps / 10,
            total_steps,
            anneal_steps: Some(total_steps * 4 / 5),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let frac_ok = |r: f64| r > 0.0 && r <= 1.0;
        match self {
            RankSchedule::Fixed { fraction } => {
                if !frac_ok(*fraction) {
                    return Err(Error::Config(format!("rank fraction {fraction} not in (0, 1]")));
                }
            }
            RankSchedule::Piecewise { breakpoints } => {
                if breakpoints.first().map(|b| b.0) != Some(0) {
                    return Err(Error::Config("piecewise schedule must start at step 0".into()));
                }
                if breakpoints.windows(2).any(|w| w[0].0 >= w[1].0) {
                    return Err(Error::Config("piecewise breakpoints must strictly increase".into()));
                }
                if let Some((_, r)) = breakpoints.iter().find(|(_, r)| !frac_ok(*r)) {
                    return Err(Error::Config(format!("rank fraction {r} not in (0, 1]")));
                }
            }
            RankSchedule::CosineHold {
                r_start,
                r_end,
                hold_steps,
                total_steps,
                anneal_steps,
            } => {
                if !frac_ok(*r_start) || !frac_ok(*r_end) {
                    return Err(Error::Config("rank fractions must lie in (0, 1]".into()));
                }
                if *total_steps == 0 || hold_steps > total_steps {
                    return Err(Error::Config("need hold_steps <= total_steps > 0".into()));
                }
                if anneal_steps.is_some_and(|a| a < *hold_steps || a > *total_steps) {
                    return Err(Error::Config(
                        "anneal_steps must lie between hold_steps and total_steps".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Rank fraction `r(t) ∈ (0, 1]`.
    pub fn rank_fraction_at(&self, t: usize) -> Result<f64> {
        match self {
            RankSchedule::Fixed { fraction } => Ok(*fraction),
            RankSchedule::Piecewise { breakpoints } => breakpoints
                .iter()
                .take_while(|(step, _)| *step <= t)
                .last()
                .map(|(_, r)| *r)
                .ok_or_else(|| Error::InvalidStep(format!("no breakpoint covers step {t}"))),
            RankSchedule::CosineHold {
                r_start,
                r_end,
                hold_steps,
                total_steps,
                anneal_steps,
            } => {
                if t >= *total_steps {
                    return Err(Error::InvalidStep(format!(
                        "step {t} outside schedule of {total_steps} steps"
                    )));
                }
                if t < *hold_steps {
                    return Ok(*r_start);
                }
                let end = anneal_steps.unwrap_or(*total_steps);
                if t >= end {
                    return Ok(*r_end);
                }
                let decay = end.saturating_sub(*hold_steps).max(1) as f64;
                let phase = (t - hold_steps) as f64 / decay;
                Ok(r_end + (r_start - r_end) * (1.0 + (PI * phase).cos()) / 2.0)
            }
        }
    }
}

/// Which block dimension a rank fraction is measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankDivisor {
    #[default]
    Min,
    Max,
}

/// `⌈fraction·min(d_in, d_out)⌉`, clamped to `[1, min(d_in, d_out)]`.
pub fn rank_at(fraction: f64, d_in: usize, d_out: usize) -> usize {
    rank_at_with(fraction, d_in, d_out, RankDivisor::Min)
}

pub fn rank_at_with(fraction: f64, d_in: usize, d_out: usize, divisor: RankDivisor) -> usize {
    let q = d_in.min(d_out);
    let base = match divisor {
        RankDivisor::Min => q,
        RankDivisor::Max => d_in.max(d_out),
    };
    (exact_ceil_product(fraction, base).max(1) as usize).min(q)
}

/// `⌈x·n⌉` for finite `x ≥ 0`, evaluated exactly on the binary value of `x`.
fn exact_ceil_product(x: f64, n: usize) -> u128 {
    assert!(x.is_finite() && x >= 0.0, "fraction must be finite and nonnegative");
    if x == 0.0 {
        return 0;
    }
    let bits = x.to_bits();
    let exp_bits = ((bits >> 52) & 0x7ff) as i32;
    let frac_bits = bits & ((1u64 << 52) - 1);
    // x = mantissa · 2^exp exactly.
    let (mantissa, exp) = if exp_bits == 0 {
        (frac_bits, -1074)
    } else {
        (frac_bits | (1u64 << 52), exp_bits - 1075)
    };
    let product = mantissa as u128 * n as u128;
    if exp >= 0 {
        product << exp
    } else {
        let shift = (-exp) as u32;
        if shift >= 128 {
            return u128::from(product > 0);
        }
        let floor = product >> shift;
        if floor << shift == product {
            floor
        } else {
            floor + 1
        }
    }
}
