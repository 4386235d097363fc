//! Pure, stateless LDP randomization primitives and their exact debiasing
//! counterparts: the Laplace mechanism, the K-ary label flip mechanism,
//! the piecewise mechanism for bounded continuous values, binary randomized
//! response, and per-feature composition over mixed records.
//!
//! Class labels are 1-based at this boundary (y in 1..=K).

use alloc::format;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
// Whenever std is in the crate graph (test builds, or workspace builds where
// a dependency enables serde/std) the inherent f64 methods shadow this trait
// and it looks unused; the pure no_std build needs it.
#[allow(unused_imports)]
use crate::math::F64Ext;
use crate::rng::RandomnessSource;

/// Laplace mechanism parameters: noise scale is sensitivity / epsilon.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LaplaceMechanismSpec {
    pub sensitivity: f64,
    pub epsilon: f64,
}

impl LaplaceMechanismSpec {
    pub fn new(sensitivity: f64, epsilon: f64) -> Result<Self> {
        if !(sensitivity > 0.0) || !sensitivity.is_finite() {
            return Err(CoreError::validation(format!(
                "sensitivity must be positive and finite, got {sensitivity}"
            )));
        }
        if !(epsilon > 0.0) {
            return Err(CoreError::validation(format!("epsilon must be positive, got {epsilon}")));
        }
        Ok(Self { sensitivity, epsilon })
    }

    /// b = sensitivity / epsilon.
    pub fn scale(&self) -> f64 {
        self.sensitivity / self.epsilon
    }
}

/// K-ary label flip: keep the label with probability 1-p, otherwise move to a
/// uniformly chosen other class, with p = (K-1)/(e^eps + K-1).
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FlipMechanismSpec {
    pub num_classes: usize,
    pub epsilon_y: f64,
}

impl FlipMechanismSpec {
    /// `epsilon_y = 0` is accepted and yields a uniform output (p = (K-1)/K);
    /// consumers that need an informative mechanism (the noise-aware loss)
    /// check `p < (K-1)/K` themselves.
    pub fn new(num_classes: usize, epsilon_y: f64) -> Result<Self> {
        if num_classes < 2 {
            return Err(CoreError::validation(format!(
                "num_classes must be >= 2, got {num_classes}"
            )));
        }
        if !(epsilon_y >= 0.0) {
            return Err(CoreError::validation(format!(
                "epsilon_y must be nonnegative, got {epsilon_y}"
            )));
        }
        Ok(Self { num_classes, epsilon_y })
    }

    /// p = (K-1)/(e^eps + K-1).
    pub fn flip_prob(&self) -> f64 {
        let k1 = (self.num_classes - 1) as f64;
        k1 / (self.epsilon_y.exp() + k1)
    }
}

/// Piecewise mechanism for x in [-1, 1]; output support is [-C, C] with
/// C = (e^{eps/2}+1)/(e^{eps/2}-1).
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PiecewiseMechanismSpec {
    pub epsilon: f64,
}

impl PiecewiseMechanismSpec {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(CoreError::validation(format!(
                "epsilon must be positive and finite, got {epsilon}"
            )));
        }
        Ok(Self { epsilon })
    }

    pub fn support_bound(&self) -> f64 {
        let e = (self.epsilon / 2.0).exp();
        (e + 1.0) / (e - 1.0)
    }
}

/// Add iid Laplace(0, spec.scale()) noise to every coordinate of `v`.
pub fn laplace_mechanism(
    v: &[f64],
    spec: &LaplaceMechanismSpec,
    rng: &mut RandomnessSource,
) -> Result<Vec<f64>> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(CoreError::validation("laplace_mechanism: non-finite input"));
    }
    let b = spec.scale();
    Ok(v.iter().map(|&x| x + rng.laplace(b)).collect())
}

/// Flip a 1-based label y in 1..=K.
pub fn flip_label(y: usize, spec: &FlipMechanismSpec, rng: &mut RandomnessSource) -> Result<usize> {
    let k = spec.num_classes;
    if y < 1 || y > k {
        return Err(CoreError::validation(format!("label {y} out of range 1..={k}")));
    }
    let p = spec.flip_prob();
    if rng.uniform_open01() < p {
        // uniformly one of the K-1 other classes
        let other = rng.below((k - 1) as u64) as usize + 1; // 1..=K-1
        Ok(if other >= y { other + 1 } else { other })
    } else {
        Ok(y)
    }
}

/// Row-stochastic transition matrix T[i][j] = p(flipped = i+1 | true = j+1).
pub fn flip_transition_matrix(spec: &FlipMechanismSpec) -> Vec<Vec<f64>> {
    let k = spec.num_classes;
    let p = spec.flip_prob();
    let off = p / (k - 1) as f64;
    (0..k)
        .map(|i| (0..k).map(|j| if i == j { 1.0 - p } else { off }).collect())
        .collect()
}

/// Piecewise mechanism draw for x in [-1, 1].
///
/// With probability e^{eps/2}/(e^{eps/2}+1) the output is uniform on the
/// high-density window [l(x), r(x)] where l(x) = (C+1)x/2 - (C-1)/2 and
/// r(x) = l(x) + (C-1); otherwise it is uniform on the complement within
/// [-C, C]. Unbiased: E[output] = x.
pub fn piecewise_mechanism(
    x: f64,
    spec: &PiecewiseMechanismSpec,
    rng: &mut RandomnessSource,
) -> Result<f64> {
    if !(x.abs() <= 1.0) {
        return Err(CoreError::validation(format!("piecewise input |x| <= 1 required, got {x}")));
    }
    let c = spec.support_bound();
    let e_half = (spec.epsilon / 2.0).exp();
    let left = (c + 1.0) / 2.0 * x - (c - 1.0) / 2.0;
    let right = left + (c - 1.0);
    if rng.uniform_open01() < e_half / (e_half + 1.0) {
        Ok(rng.uniform_in(left, right))
    } else {
        // complement [-C, left) u (right, C], total length C + 1
        let u = rng.uniform_in(0.0, c + 1.0);
        let left_len = left + c;
        if u < left_len {
            Ok(-c + u)
        } else {
            Ok(right + (u - left_len))
        }
    }
}

/// Binary randomized response: return 1-c with probability 1/(e^eps + 1).
pub fn randomized_response_bit(c: u8, epsilon: f64, rng: &mut RandomnessSource) -> Result<u8> {
    if !(epsilon > 0.0) {
        return Err(CoreError::validation(format!(
            "randomized response requires epsilon > 0, got {epsilon}"
        )));
    }
    if c > 1 {
        return Err(CoreError::validation(format!("bit must be 0 or 1, got {c}")));
    }
    let p = 1.0 / (epsilon.exp() + 1.0);
    Ok(if rng.uniform_open01() < p { 1 - c } else { c })
}

/// Invert the expected effect of bit flipping on an accuracy estimate:
/// A = (A_tilde - p) / (1 - 2p). The result may fall outside [0, 1] for small
/// samples and is returned as-is.
pub fn debias_accuracy(a_tilde: f64, p: f64) -> Result<f64> {
    if !(p >= 0.0 && p < 0.5) {
        return Err(CoreError::validation(format!("flip probability must be in [0, 1/2), got {p}")));
    }
    Ok((a_tilde - p) / (1.0 - 2.0 * p))
}

/// How a single feature of a mixed record is privatized.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum FeatureKind {
    /// Continuous with the observed training range; sensitivity is max - min.
    Continuous { min: f64, max: f64 },
    /// Categorical, values are 1-based category indices stored as f64.
    Categorical { cardinality: usize },
}

/// Mechanism applied to continuous features in the per-feature benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum ContinuousMethod {
    Laplace,
    Piecewise,
}

/// Privatize a mixed record feature-by-feature with budget epsilon/d each,
/// d being the total feature count (categoricals counted pre-one-hot).
/// Continuous values outside the recorded training range are clipped first.
/// Piecewise noising happens after mapping the range to [-1, 1]; the output
/// is mapped back affinely so all features stay on the original scale.
pub fn per_feature_privatize(
    record: &[f64],
    schema: &[FeatureKind],
    epsilon: f64,
    method: ContinuousMethod,
    rng: &mut RandomnessSource,
) -> Result<Vec<f64>> {
    if record.len() != schema.len() {
        return Err(CoreError::shape(format!(
            "record has {} features, schema has {}",
            record.len(),
            schema.len()
        )));
    }
    if !(epsilon > 0.0) {
        return Err(CoreError::validation(format!("epsilon must be positive, got {epsilon}")));
    }
    let d = schema.len();
    let eps_i = epsilon / d as f64;
    let mut out = Vec::with_capacity(d);
    for (&value, kind) in record.iter().zip(schema) {
        match *kind {
            FeatureKind::Continuous { min, max } => {
                if max < min {
                    return Err(CoreError::validation(format!("feature range [{min}, {max}] inverted")));
                }
                let clipped = value.clamp(min, max);
                let range = max - min;
                if range == 0.0 {
                    out.push(min);
                    continue;
                }
                match method {
                    ContinuousMethod::Laplace => {
                        let spec = LaplaceMechanismSpec::new(range, eps_i)?;
                        out.push(clipped + rng.laplace(spec.scale()));
                    }
                    ContinuousMethod::Piecewise => {
                        let mapped = 2.0 * (clipped - min) / range - 1.0;
                        let spec = PiecewiseMechanismSpec::new(eps_i)?;
                        let t = piecewise_mechanism(mapped, &spec, rng)?;
                        out.push(min + (t + 1.0) * range / 2.0);
                    }
                }
            }
            FeatureKind::Categorical { cardinality } => {
                let y = value as usize;
                if value != y as f64 || y < 1 || y > cardinality {
                    return Err(CoreError::validation(format!(
                        "categorical value {value} not a 1-based index within cardinality {cardinality}"
                    )));
                }
                let spec = FlipMechanismSpec::new(cardinality, eps_i)?;
                out.push(flip_label(y, &spec, rng)? as f64);
            }
        }
    }
    Ok(out)
}
