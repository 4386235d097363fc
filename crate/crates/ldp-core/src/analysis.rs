//! Private validation, private grid search, and the private-accuracy upper
//! bound with its Monte Carlo verification oracle.
//!
//! Private validation simulates the collection protocol: each respondent
//! computes the correctness bit of their own record locally, flips it through
//! randomized response at the query budget, and only the flipped bit crosses
//! the trust boundary. The aggregate is debiased back into an accuracy
//! estimate.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::classifier::{NoiseAwareClassifier, PredictMode};
use crate::error::{CoreError, Result};
use crate::math::{kahan_sum, F64Ext};
use crate::mechanisms::{debias_accuracy, randomized_response_bit};
use crate::rng::RandomnessSource;
use crate::tensor::Tensor;
use crate::vlm::LaplaceVLM;

/// Outcome of one private validation pass.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PrivateValidationReport {
    pub n_val: usize,
    pub epsilon: f64,
    /// Flip probability 1/(e^eps + 1).
    pub flip_prob: f64,
    /// Observed (flipped) accuracy.
    pub a_tilde: f64,
    /// Debiased accuracy estimate (A_tilde - p)/(1 - 2p).
    pub a_hat: f64,
    /// Binomial standard error propagated through the debiasing.
    pub std_error: f64,
    /// The estimator is unbiased but unbounded; small samples can land
    /// outside [0, 1]. We flag rather than clip.
    pub out_of_range: bool,
}

/// Debias the flipped-bit average into a report.
fn report_from_tilde(
    n_val: usize,
    epsilon: f64,
    flip_prob: f64,
    a_tilde: f64,
) -> Result<PrivateValidationReport> {
    let a_hat = debias_accuracy(a_tilde, flip_prob)?;
    let std_error = (a_tilde * (1.0 - a_tilde) / n_val as f64).sqrt() / (1.0 - 2.0 * flip_prob);
    Ok(PrivateValidationReport {
        n_val,
        epsilon,
        flip_prob,
        a_tilde,
        a_hat,
        std_error,
        out_of_range: !(0.0..=1.0).contains(&a_hat),
    })
}

/// Private validation from precomputed correctness bits. Each bit goes
/// through randomized response independently.
pub fn private_validation_from_bits(
    correct: &[bool],
    epsilon: f64,
    rng: &mut RandomnessSource,
) -> Result<PrivateValidationReport> {
    if correct.is_empty() {
        return Err(CoreError::validation("validation set is empty"));
    }
    if !(epsilon > 0.0) {
        return Err(CoreError::validation(format!(
            "private validation requires epsilon > 0, got {epsilon}"
        )));
    }
    let flip_prob = 1.0 / (epsilon.exp() + 1.0);
    let mut flipped_sum = 0u64;
    for &bit in correct {
        flipped_sum += randomized_response_bit(u8::from(bit), epsilon, rng)? as u64;
    }
    let a_tilde = flipped_sum as f64 / correct.len() as f64;
    report_from_tilde(correct.len(), epsilon, flip_prob, a_tilde)
}

/// Score a classifier on a validation set under local DP: respondents report
/// only their flipped correctness bits.
pub fn private_validation(
    classifier: &NoiseAwareClassifier,
    inputs: &Tensor,
    labels: &[usize],
    mode: PredictMode,
    vlm: Option<&LaplaceVLM>,
    epsilon: f64,
    rng: &mut RandomnessSource,
) -> Result<PrivateValidationReport> {
    if inputs.rows() != labels.len() {
        return Err(CoreError::shape("inputs and labels disagree on record count"));
    }
    let mut correct = Vec::with_capacity(labels.len());
    for r in 0..inputs.rows() {
        let pred = classifier.predict_class(inputs.row(r), mode, vlm)?;
        correct.push(pred == labels[r]);
    }
    private_validation_from_bits(&correct, epsilon, rng)
}

/// Result of a private grid search.
#[derive(Debug)]
pub struct GridSearchOutcome {
    pub best_index: usize,
    pub best: NoiseAwareClassifier,
    /// One entry per candidate: the validation report, or the failure that
    /// knocked the candidate out.
    pub reports: Vec<core::result::Result<PrivateValidationReport, String>>,
    /// Per-respondent budget consumed across all scored candidates.
    pub epsilon_spent_per_respondent: f64,
}

/// Train and privately score each candidate; return the argmax of the
/// debiased accuracy, ties broken by lowest candidate index. Candidate
/// training failures are recorded and the candidate skipped; if every
/// candidate fails, the whole search fails.
///
/// Each scored candidate costs every respondent `epsilon_per_query`; the
/// outcome reports the per-respondent total rather than hiding the
/// composition.
#[allow(clippy::too_many_arguments)]
pub fn private_grid_search<F>(
    candidates: &mut [F],
    val_inputs: &Tensor,
    val_labels: &[usize],
    mode: PredictMode,
    vlm: Option<&LaplaceVLM>,
    epsilon_per_query: f64,
    rng: &mut RandomnessSource,
) -> Result<GridSearchOutcome>
where
    F: FnMut(&mut RandomnessSource) -> Result<NoiseAwareClassifier>,
{
    if candidates.is_empty() {
        return Err(CoreError::validation("grid search needs at least one candidate"));
    }
    let mut reports: Vec<core::result::Result<PrivateValidationReport, String>> = Vec::new();
    let mut best: Option<(usize, f64, NoiseAwareClassifier)> = None;
    let mut scored = 0usize;
    for (index, candidate) in candidates.iter_mut().enumerate() {
        let mut train_rng = rng.derive(index as u64 + 1);
        let trained = match candidate(&mut train_rng) {
            Ok(c) => c,
            Err(e) => {
                reports.push(Err(e.to_string()));
                continue;
            }
        };
        let report = private_validation(
            &trained,
            val_inputs,
            val_labels,
            mode,
            vlm,
            epsilon_per_query,
            rng,
        )?;
        scored += 1;
        let a_hat = report.a_hat;
        reports.push(Ok(report));
        let better = match &best {
            None => true,
            Some((_, best_a, _)) => a_hat > *best_a,
        };
        if better {
            best = Some((index, a_hat, trained));
        }
    }
    let (best_index, _, best) = best.ok_or_else(|| {
        CoreError::Training("every grid-search candidate failed to train".into())
    })?;
    Ok(GridSearchOutcome {
        best_index,
        best,
        reports,
        epsilon_spent_per_respondent: epsilon_per_query * scored as f64,
    })
}

/// Parameters of the best-case private accuracy bound. The bound itself
/// depends only on K and epsilon; d is carried to check the derivation's
/// geometric assumption d >= K/2.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BoundQuery {
    pub num_classes: usize,
    pub epsilon: f64,
    pub latent_dim: usize,
}

impl BoundQuery {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 || self.num_classes % 2 != 0 {
            return Err(CoreError::validation(format!(
                "bound requires an even number of classes >= 2, got {}",
                self.num_classes
            )));
        }
        if self.latent_dim < self.num_classes / 2 {
            return Err(CoreError::validation(format!(
                "bound requires d >= K/2, got d={} K={}",
                self.latent_dim, self.num_classes
            )));
        }
        if !(self.epsilon > 0.0) {
            return Err(CoreError::validation("epsilon must be positive"));
        }
        Ok(())
    }
}

/// Upper bound on the accuracy of any classifier over epsilon-LDP Laplace
/// representations of K balanced classes:
///
/// sum_{j=0, j!=1}^{K/2-1} C(K/2-1, j) (-1)^j/(1-j)
///     [e^{-j eps/2}/(1+j) - e^{-eps/2}/2]
///   - (eps+1)(K-2) e^{-eps/2}/8
///
/// The alternating binomial sum is accumulated with compensated summation;
/// round-off excursions beyond [0, 1] smaller than 1e-12 are clamped.
pub fn accuracy_upper_bound(query: &BoundQuery) -> Result<f64> {
    query.validate()?;
    let half_k = query.num_classes / 2;
    let eps = query.epsilon;
    let e_half = (-eps / 2.0).exp();
    let mut binom = 1.0f64; // C(half_k - 1, j), updated incrementally
    let mut terms = Vec::with_capacity(half_k);
    for j in 0..half_k {
        if j > 0 {
            binom *= (half_k - j) as f64 / j as f64;
        }
        if j == 1 {
            continue;
        }
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        let bracket = (-(j as f64) * eps / 2.0).exp() / (1.0 + j as f64) - e_half / 2.0;
        terms.push(binom * sign / (1.0 - j as f64) * bracket);
    }
    terms.push(-(eps + 1.0) * (query.num_classes - 2) as f64 * e_half / 8.0);
    let raw = kahan_sum(terms.into_iter());
    Ok(if raw > 1.0 && raw < 1.0 + 1e-12 {
        1.0
    } else if raw < 0.0 && raw > -1e-12 {
        0.0
    } else {
        raw
    })
}

/// The bound can dip below chance level at small epsilon and large K, where
/// the derivation is loose; guessing a fixed class always achieves 1/K, so
/// the effective ceiling is the max of the two.
pub fn effective_accuracy_upper_bound(query: &BoundQuery) -> Result<f64> {
    let raw = accuracy_upper_bound(query)?;
    Ok(raw.max(1.0 / query.num_classes as f64))
}

/// Empirical accuracy with its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SimulationEstimate {
    pub accuracy: f64,
    pub std_error: f64,
    pub n_samples: u64,
}

/// Monte Carlo check of the bound's best-case geometry: K class centers on
/// the +/- axis vertices of the l1 ball of radius delta_f/2 along the first
/// K/2 axes, iid Laplace(0, delta_f/epsilon) noise, decision by the signed
/// coordinate of largest magnitude among the first K/2 axes.
///
/// Sampling is sharded with independently derived generators and merged
/// deterministically, so the result depends only on the seed.
pub fn bound_simulation_oracle_with_sensitivity(
    query: &BoundQuery,
    delta_f: f64,
    n_samples: u64,
    rng: &mut RandomnessSource,
) -> Result<SimulationEstimate> {
    query.validate()?;
    if n_samples == 0 {
        return Err(CoreError::validation("need at least one sample"));
    }
    if !(delta_f > 0.0) {
        return Err(CoreError::validation("delta_f must be positive"));
    }
    let k = query.num_classes;
    let half_k = k / 2;
    let d = query.latent_dim;
    let radius = delta_f / 2.0;
    let scale = delta_f / query.epsilon;
    const SHARDS: u64 = 64;
    let mut correct: u64 = 0;
    for shard in 0..SHARDS {
        let mut shard_rng = rng.derive(shard);
        let lo = n_samples * shard / SHARDS;
        let hi = n_samples * (shard + 1) / SHARDS;
        for _ in lo..hi {
            // true class 1..=K: class 2i+1 sits at +radius e_i, class 2i+2
            // at -radius e_i
            let y = shard_rng.below(k as u64) as usize + 1;
            let axis = (y - 1) / 2;
            let center_sign = if (y - 1) % 2 == 0 { 1.0 } else { -1.0 };
            // only the first K/2 coordinates matter for the decision; the
            // remaining d - K/2 are noise-only and ignored by the rule
            let mut best_axis = 0usize;
            let mut best_mag = f64::NEG_INFINITY;
            let mut best_sign = 1.0;
            for i in 0..half_k {
                let center = if i == axis { center_sign * radius } else { 0.0 };
                let coord = center + shard_rng.laplace(scale);
                let mag = coord.abs();
                if mag > best_mag {
                    best_mag = mag;
                    best_axis = i;
                    best_sign = coord.signum_or_zero();
                }
            }
            // burn the unused coordinates so the stream layout matches the
            // full d-dimensional draw
            for _ in half_k..d {
                let _ = shard_rng.laplace(scale);
            }
            let predicted = 2 * best_axis + if best_sign >= 0.0 { 1 } else { 2 };
            if predicted == y {
                correct += 1;
            }
        }
    }
    let accuracy = correct as f64 / n_samples as f64;
    Ok(SimulationEstimate {
        accuracy,
        std_error: (accuracy * (1.0 - accuracy) / n_samples as f64).sqrt(),
        n_samples,
    })
}

/// [`bound_simulation_oracle_with_sensitivity`] at delta_f = 1; the result
/// is invariant to delta_f because only delta_f/scale = epsilon matters.
pub fn bound_simulation_oracle(
    query: &BoundQuery,
    n_samples: u64,
    rng: &mut RandomnessSource,
) -> Result<SimulationEstimate> {
    bound_simulation_oracle_with_sensitivity(query, 1.0, n_samples, rng)
}
