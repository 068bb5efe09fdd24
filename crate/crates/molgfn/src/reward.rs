//! Goal-conditioned rewards over molecular properties.
//!
//! Each property carries a desired range `(c_low, c_high)` and a preference
//! direction `d` in {-1, 0, +1}. Inside the range the reward is a linear ramp
//! oriented by `d`; outside it decays exponentially with per-property rate
//! `lambda`. Per-property rewards multiply into a single scalar, optionally
//! times an external task reward.
//!
//! Conditioning ranges are resampled per trajectory during training (uniform
//! for online rollouts, truncated-normal around the known property value for
//! offline ones, with an epsilon chance of out-of-bound or negative examples)
//! and fed to the policy as thermometer encodings plus a one-hot of `d`.

use crate::descriptors::{DescriptorError, Evaluator, PropertyId};
use crate::molgraph::MolGraph;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

/// Width of each thermometer encoding.
pub const NUM_THERMOMETER_DIM: usize = 16;
/// Log-reward assigned to structurally invalid inputs; also the numerical
/// floor applied to log-rewards before loss computation.
pub const ILLEGAL_ACTION_LOGREWARD: f64 = -512.0;
/// Probability of an out-of-bound (online) or negative (offline) range draw.
pub const DEFAULT_OOB_PERCENT: f64 = 0.1;
/// Truncated-normal width for offline range sampling, as a fraction of the
/// property's sampling window `c_max - c_min`.
pub const DEFAULT_SIGMA_FRAC: f64 = 0.05;

#[derive(Debug, Error)]
pub enum RewardError {
    #[error("invalid conditional: {0}")]
    InvalidConditional(String),
    #[error("invalid bounds: {0}")]
    InvalidBounds(String),
    #[error("expected {expected} property values, got {got}")]
    PropertyCountMismatch { expected: usize, got: usize },
    #[error("epsilon must lie in [0, 1], got {0}")]
    BadEpsilon(f64),
    #[error(transparent)]
    Descriptor(#[from] DescriptorError),
}

/// A desired range plus preference direction for one property.
#[derive(Debug, Clone, PartialEq)]
pub struct PropertyConditional {
    pub property: PropertyId,
    pub c_low: f64,
    pub c_high: f64,
    /// Preference direction: +1 favors high values in range, -1 low, 0 none.
    pub d: i8,
    /// Exponential decay rate outside the range.
    pub lambda: f64,
}

impl PropertyConditional {
    pub fn new(
        property: PropertyId,
        c_low: f64,
        c_high: f64,
        d: i8,
        lambda: f64,
    ) -> Result<PropertyConditional, RewardError> {
        if !(c_low < c_high) {
            return Err(RewardError::InvalidConditional(format!(
                "need c_low < c_high, got [{c_low}, {c_high}]"
            )));
        }
        if !(lambda > 0.0) {
            return Err(RewardError::InvalidConditional(format!("lambda must be positive, got {lambda}")));
        }
        if d.abs() > 1 {
            return Err(RewardError::InvalidConditional(format!("d must be -1, 0 or +1, got {d}")));
        }
        Ok(PropertyConditional { property, c_low, c_high, d, lambda })
    }
}

/// Sampling window `[c_min, c_max]` and extrema `[c_min*, c_max*]` for one
/// property. The extrema double as thermometer encoding bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropertyBounds {
    pub c_min: f64,
    pub c_max: f64,
    pub c_min_star: f64,
    pub c_max_star: f64,
}

impl PropertyBounds {
    pub fn new(c_min: f64, c_max: f64, c_min_star: f64, c_max_star: f64) -> Result<PropertyBounds, RewardError> {
        if !(c_min_star <= c_min && c_min < c_max && c_max <= c_max_star) {
            return Err(RewardError::InvalidBounds(format!(
                "need c_min* <= c_min < c_max <= c_max*, got {c_min_star} {c_min} {c_max} {c_max_star}"
            )));
        }
        Ok(PropertyBounds { c_min, c_max, c_min_star, c_max_star })
    }
}

/// Everything fixed about one conditioned property: which descriptor, the
/// canonical desired range used at inference time, preference direction,
/// decay rate, and the sampling window.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalSpec {
    pub property: PropertyId,
    /// Canonical desired range, used when ranges are not resampled.
    pub range: (f64, f64),
    pub d: i8,
    pub lambda: f64,
    pub bounds: PropertyBounds,
}

impl ConditionalSpec {
    /// The conditional at this spec's canonical range.
    pub fn conditional(&self) -> PropertyConditional {
        PropertyConditional {
            property: self.property.clone(),
            c_low: self.range.0,
            c_high: self.range.1,
            d: self.d,
            lambda: self.lambda,
        }
    }

    fn conditional_at(&self, c_low: f64, c_high: f64) -> PropertyConditional {
        PropertyConditional {
            property: self.property.clone(),
            c_low,
            c_high,
            d: self.d,
            lambda: self.lambda,
        }
    }
}

/// Default pretraining conditionals: QED [0.65, 0.80], five/six-membered
/// ring count [1, 3] preferring more rings, TPSA [60, 100], SAS [1, 3].
/// Sampling windows and extrema are library defaults; adjust via config for
/// other chemistry regimes.
pub fn pretraining_conditionals() -> Vec<ConditionalSpec> {
    vec![
        ConditionalSpec {
            property: PropertyId::Qed,
            range: (0.65, 0.80),
            d: 0,
            lambda: 1.0,
            bounds: PropertyBounds { c_min: 0.2, c_max: 0.9, c_min_star: 0.0, c_max_star: 1.0 },
        },
        ConditionalSpec {
            property: PropertyId::NumRings,
            range: (1.0, 3.0),
            d: 1,
            lambda: 1.0,
            bounds: PropertyBounds { c_min: 0.0, c_max: 5.0, c_min_star: 0.0, c_max_star: 8.0 },
        },
        ConditionalSpec {
            property: PropertyId::Tpsa,
            range: (60.0, 100.0),
            d: 0,
            lambda: 20.0,
            bounds: PropertyBounds { c_min: 0.0, c_max: 150.0, c_min_star: 0.0, c_max_star: 300.0 },
        },
        ConditionalSpec {
            property: PropertyId::Sas,
            range: (1.0, 3.0),
            d: 0,
            lambda: 1.0,
            bounds: PropertyBounds { c_min: 1.0, c_max: 6.0, c_min_star: 1.0, c_max_star: 10.0 },
        },
    ]
}

/// Reward for a single property value under one conditional.
///
/// Below the range: ((2 - [d]+)/2) * exp((p_x - c_low)/lambda).
/// Above the range: ((2 - [-d]+)/2) * exp((c_high - p_x)/lambda).
/// In range: (2 - [d]+)/2 + (d/2) * (p_x - c_low)/(c_high - c_low).
/// Always in (0, 1]; continuous at both boundaries.
pub fn property_reward(p_x: f64, cond: &PropertyConditional) -> f64 {
    let d = cond.d as f64;
    let pos = |x: f64| x.max(0.0);
    if p_x < cond.c_low {
        (2.0 - pos(d)) / 2.0 * ((p_x - cond.c_low) / cond.lambda).exp()
    } else if p_x > cond.c_high {
        (2.0 - pos(-d)) / 2.0 * ((cond.c_high - p_x) / cond.lambda).exp()
    } else {
        (2.0 - pos(d)) / 2.0 + d / 2.0 * (p_x - cond.c_low) / (cond.c_high - cond.c_low)
    }
}

/// Product of per-property rewards for `x`, times `ext` when present.
///
/// Structurally invalid inputs (only the empty graph can occur here; masking
/// keeps everything else out) get exp(ILLEGAL_ACTION_LOGREWARD).
pub fn aggregate_reward(
    x: &MolGraph,
    ctx: &ConditioningContext,
    evaluator: &Evaluator,
    ext: Option<f64>,
) -> Result<f64, RewardError> {
    if x.is_empty() {
        return Ok(ILLEGAL_ACTION_LOGREWARD.exp());
    }
    let mut r = 1.0;
    for cond in &ctx.conditionals {
        let p_x = evaluator.eval(&cond.property, x)?;
        r *= property_reward(p_x, cond);
    }
    if let Some(e) = ext {
        r *= e;
    }
    Ok(r)
}

/// Log-reward with the numerical floor applied. Maps zero (underflow, or a
/// zero external reward) and invalid values to ILLEGAL_ACTION_LOGREWARD.
pub fn floored_log_reward(r: f64) -> f64 {
    floored_log_reward_with(r, ILLEGAL_ACTION_LOGREWARD)
}

/// Same with a caller-supplied floor.
pub fn floored_log_reward_with(r: f64, floor: f64) -> f64 {
    let l = r.ln();
    if l.is_nan() {
        floor
    } else {
        l.max(floor)
    }
}

/// Thermometer encoding: `value` clipped to [lo, hi], bucket position
/// b = (value - lo)/(hi - lo) * dims, out[i] = clamp(b - i, 0, 1).
pub fn thermometer_encode(value: f64, lo: f64, hi: f64, dims: usize) -> Vec<f64> {
    debug_assert!(dims >= 2 && lo < hi);
    let v = value.clamp(lo, hi);
    let b = (v - lo) / (hi - lo) * dims as f64;
    (0..dims).map(|i| (b - i as f64).clamp(0.0, 1.0)).collect()
}

/// Drawn conditionals plus their policy-facing encoding: per property, two
/// thermometer encodings (c_low, c_high) over the extrema bounds followed by
/// a one-hot of the preference direction.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditioningContext {
    pub conditionals: Vec<PropertyConditional>,
    pub encoding: Vec<f64>,
}

impl ConditioningContext {
    pub fn new(specs: &[ConditionalSpec], ranges: &[(f64, f64)]) -> Result<ConditioningContext, RewardError> {
        if specs.len() != ranges.len() {
            return Err(RewardError::PropertyCountMismatch { expected: specs.len(), got: ranges.len() });
        }
        let mut conditionals = Vec::with_capacity(specs.len());
        let mut encoding = Vec::with_capacity(specs.len() * (2 * NUM_THERMOMETER_DIM + 3));
        for (spec, &(c_low, c_high)) in specs.iter().zip(ranges) {
            if !(c_low < c_high) {
                return Err(RewardError::InvalidConditional(format!(
                    "need c_low < c_high, got [{c_low}, {c_high}]"
                )));
            }
            let b = &spec.bounds;
            encoding.extend(thermometer_encode(c_low, b.c_min_star, b.c_max_star, NUM_THERMOMETER_DIM));
            encoding.extend(thermometer_encode(c_high, b.c_min_star, b.c_max_star, NUM_THERMOMETER_DIM));
            let mut onehot = [0.0; 3];
            onehot[(spec.d + 1) as usize] = 1.0;
            encoding.extend(onehot);
            conditionals.push(spec.conditional_at(c_low, c_high));
        }
        Ok(ConditioningContext { conditionals, encoding })
    }

    /// Context at every spec's canonical range (inference-time queries).
    pub fn fixed(specs: &[ConditionalSpec]) -> Result<ConditioningContext, RewardError> {
        let ranges: Vec<(f64, f64)> = specs.iter().map(|s| s.range).collect();
        ConditioningContext::new(specs, &ranges)
    }

    pub fn encoding_len(num_properties: usize) -> usize {
        num_properties * (2 * NUM_THERMOMETER_DIM + 3)
    }
}

/// Where the conditional ranges come from for one trajectory.
pub enum SampleMode<'a> {
    /// Online rollout: ranges drawn uniformly from each sampling window,
    /// occasionally from the wider extrema window.
    Online,
    /// Offline trajectory whose endpoint has these property values (aligned
    /// with the spec list): ranges drawn around each value, occasionally as
    /// a deliberately excluding negative example.
    Offline { property_values: &'a [f64] },
}

/// Draw per-property conditional ranges for one training trajectory.
pub fn sample_conditionals(
    specs: &[ConditionalSpec],
    mode: SampleMode,
    sigma_frac: f64,
    epsilon: f64,
    rng: &mut impl Rng,
) -> Result<ConditioningContext, RewardError> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(RewardError::BadEpsilon(epsilon));
    }
    let mut ranges = Vec::with_capacity(specs.len());
    match mode {
        SampleMode::Online => {
            for spec in specs {
                let b = &spec.bounds;
                let (lo, hi) = if rng.gen::<f64>() < epsilon {
                    (b.c_min_star, b.c_max_star)
                } else {
                    (b.c_min, b.c_max)
                };
                ranges.push(ordered_pair(lo, hi, rng));
            }
        }
        SampleMode::Offline { property_values } => {
            if property_values.len() != specs.len() {
                return Err(RewardError::PropertyCountMismatch {
                    expected: specs.len(),
                    got: property_values.len(),
                });
            }
            for (spec, &p_x) in specs.iter().zip(property_values) {
                let b = &spec.bounds;
                let width = b.c_max - b.c_min;
                if rng.gen::<f64>() < epsilon {
                    // Negative example: a range that excludes p_x on one side.
                    // Keep a sliver of width so the interval stays proper even
                    // when p_x sits at (or beyond) a window edge.
                    let p = p_x.clamp(b.c_min + 1e-6 * width, b.c_max - 1e-6 * width);
                    if rng.gen::<f64>() < 0.5 {
                        ranges.push((b.c_min, rng.gen_range(b.c_min..p)));
                    } else {
                        ranges.push((rng.gen_range(p..b.c_max), b.c_max));
                    }
                } else {
                    let sigma = sigma_frac * width;
                    let a = trunc_normal(p_x, sigma, b.c_min, b.c_max, rng);
                    let v = trunc_normal(p_x, sigma, b.c_min, b.c_max, rng);
                    ranges.push((a.min(v), a.max(v).max(a.min(v) + 1e-9 * width)));
                }
            }
        }
    }
    // Uniform draws can collide in floating point; widen degenerate pairs.
    for (spec, r) in specs.iter().zip(ranges.iter_mut()) {
        if !(r.0 < r.1) {
            let w = spec.bounds.c_max_star - spec.bounds.c_min_star;
            r.1 = r.0 + 1e-9 * w;
        }
    }
    ConditioningContext::new(specs, &ranges)
}

fn ordered_pair(lo: f64, hi: f64, rng: &mut impl Rng) -> (f64, f64) {
    let a = rng.gen_range(lo..hi);
    let b = rng.gen_range(lo..hi);
    (a.min(b), a.max(b))
}

/// Truncated normal via rejection. For means far outside [lo, hi] acceptance
/// can vanish, so after a bounded number of attempts fall back to the nearest
/// boundary, which is where the truncated mass concentrates anyway.
fn trunc_normal(mean: f64, sigma: f64, lo: f64, hi: f64, rng: &mut impl Rng) -> f64 {
    debug_assert!(lo < hi);
    if sigma <= 0.0 {
        return mean.clamp(lo, hi);
    }
    let normal = Normal::new(mean, sigma).expect("sigma checked positive");
    for _ in 0..10_000 {
        let x = normal.sample(rng);
        if (lo..=hi).contains(&x) {
            return x;
        }
    }
    mean.clamp(lo, hi)
}
