//! Noise-aware classification on privatized data.
//!
//! Classifiers here are trained on records that were already privatized
//! (latents, features, or flipped labels), so training is pure
//! post-processing and uses plain Adam. The label noise is handled in the
//! objective: instead of cross-entropy on the flipped label, the loss
//! marginalizes the flip channel, -ln sum_y p(y_tilde|y) p_psi(y|input).

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::dp_optim::AdamState;
use crate::error::{CoreError, Result};
// Whenever std is in the crate graph (test builds, or workspace builds where
// a dependency enables serde/std) the inherent f64 methods shadow this trait
// and it looks unused; the pure no_std build needs it.
#[allow(unused_imports)]
use crate::math::F64Ext;
use crate::mechanisms::{flip_transition_matrix, FlipMechanismSpec};
use crate::net::{Activation, DenseNetwork};
use crate::rng::RandomnessSource;
use crate::tensor::{hstack, Tensor};
use crate::vlm::LaplaceVLM;

/// Split of the per-record budget between features and labels.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BudgetSplit {
    pub epsilon_total: f64,
    pub lambda: f64,
    pub epsilon_x: f64,
    pub epsilon_y: f64,
}

/// epsilon_x = lambda * epsilon, epsilon_y the exact remainder so the two
/// always sum to epsilon bit-for-bit. lambda = 1 disables label collection
/// (the novel-class setting constructs labels instead of collecting them).
pub fn split_budget(epsilon: f64, lambda: f64) -> Result<BudgetSplit> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(CoreError::validation(format!(
            "epsilon must be positive and finite, got {epsilon}"
        )));
    }
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(CoreError::validation(format!(
            "lambda must lie in (0, 1], got {lambda}"
        )));
    }
    // Quantize epsilon_x to a multiple of ulp(epsilon): then epsilon_x,
    // epsilon - epsilon_x, and their sum are all exact, so the budget
    // identity holds bit-for-bit. The quantization error is at most half an
    // ulp of epsilon, the same order as the rounding of lambda*epsilon.
    let quantum = f64::from_bits(epsilon.to_bits() + 1) - epsilon;
    let mut epsilon_x = libm::round(lambda * epsilon / quantum) * quantum;
    if epsilon_x <= 0.0 {
        epsilon_x = quantum;
    }
    if epsilon_x > epsilon {
        epsilon_x = epsilon;
    }
    let epsilon_y = epsilon - epsilon_x;
    Ok(BudgetSplit {
        epsilon_total: epsilon,
        lambda,
        epsilon_x,
        epsilon_y,
    })
}

/// Which representation a classifier consumes. Mixing levels within one
/// classifier is not supported.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum ClassifierLevel {
    Latent,
    Feature,
    Joined,
}

/// Inference modes; see [`NoiseAwareClassifier::predict`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum PredictMode {
    Clean,
    Private,
    SemiPrivate,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NoiseAwareClassifier {
    pub network: DenseNetwork,
    pub num_classes: usize,
    /// Label-flip channel the training labels went through; `None` means the
    /// labels were never flipped (identity transition).
    pub flip: Option<FlipMechanismSpec>,
    pub level: ClassifierLevel,
    pub budget: Option<BudgetSplit>,
}

/// Plain-Adam training configuration shared by the classifier trainers.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ClassifierTrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

impl NoiseAwareClassifier {
    /// Relu hidden layers, softmax head over `num_classes`.
    pub fn init(
        input_dim: usize,
        hidden: &[usize],
        num_classes: usize,
        flip: Option<FlipMechanismSpec>,
        level: ClassifierLevel,
        rng: &mut RandomnessSource,
    ) -> Result<Self> {
        if num_classes < 2 {
            return Err(CoreError::validation("need at least two classes"));
        }
        if let Some(spec) = &flip {
            if spec.num_classes != num_classes {
                return Err(CoreError::validation(
                    "flip spec class count does not match classifier head",
                ));
            }
        }
        let mut sizes = alloc::vec![input_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(num_classes);
        let network = DenseNetwork::init(&sizes, Activation::Relu, Activation::Softmax, rng)?;
        Ok(Self {
            network,
            num_classes,
            flip,
            level,
            budget: None,
        })
    }

    /// Training-time flip probability; zero when labels were not flipped.
    pub fn flip_prob(&self) -> f64 {
        self.flip.as_ref().map(|s| s.flip_prob()).unwrap_or(0.0)
    }

    fn transition(&self) -> Result<Vec<Vec<f64>>> {
        let k = self.num_classes;
        let p = self.flip_prob();
        // at p = (K-1)/K the channel output is uniform regardless of the true
        // label: the loss is constant and carries no gradient
        if p >= (k - 1) as f64 / k as f64 {
            return Err(CoreError::validation(format!(
                "flip probability {p} has reached the uniform boundary for K={k}"
            )));
        }
        match &self.flip {
            Some(spec) => Ok(flip_transition_matrix(spec)),
            None => {
                let mut t = alloc::vec![alloc::vec![0.0; k]; k];
                for (i, row) in t.iter_mut().enumerate() {
                    row[i] = 1.0;
                }
                Ok(t)
            }
        }
    }

    /// Mean over the batch of -ln sum_y p(y_tilde|y) p_psi(y|input), with
    /// `labels` the (possibly flipped) 1-based training labels.
    pub fn noise_aware_loss(&self, batch: &Tensor, labels: &[usize]) -> Result<f64> {
        let (loss, _) = self.noise_aware_grads_at(&self.network, batch, labels)?;
        Ok(loss)
    }

    /// Noise-aware loss and parameter gradients for the classifier's own
    /// network.
    pub fn noise_aware_grads(
        &self,
        batch: &Tensor,
        labels: &[usize],
    ) -> Result<(f64, crate::net::ParamGrads)> {
        self.noise_aware_grads_at(&self.network, batch, labels)
    }

    /// Loss and parameter gradients for `network` (passed explicitly so the
    /// trainer can reuse this on its working copy).
    fn noise_aware_grads_at(
        &self,
        network: &DenseNetwork,
        batch: &Tensor,
        labels: &[usize],
    ) -> Result<(f64, crate::net::ParamGrads)> {
        let n = batch.rows();
        if n == 0 || labels.len() != n {
            return Err(CoreError::shape(format!(
                "batch has {n} rows but {} labels",
                labels.len()
            )));
        }
        let k = self.num_classes;
        let t = self.transition()?;
        let (probs, mut trace) = network.forward(batch)?;
        let mut loss = 0.0;
        let inv_n = 1.0 / n as f64;
        let mut grad = Tensor::zeros(probs.shape().to_vec());
        for r in 0..n {
            let y_tilde = labels[r];
            if y_tilde < 1 || y_tilde > k {
                return Err(CoreError::validation(format!(
                    "label {y_tilde} out of range 1..={k}"
                )));
            }
            let row = probs.row(r);
            let channel = &t[y_tilde - 1];
            let inner: f64 = channel.iter().zip(row).map(|(c, p)| c * p).sum();
            if !(inner >= 0.0) {
                return Err(CoreError::NonFinite(format!(
                    "marginal probability collapsed to {inner} for record {r}"
                )));
            }
            // Softmax output can underflow to exactly 0 for a saturated
            // record; floor the marginal so such a record contributes a
            // large-but-finite loss and gradient instead of aborting.
            let inner = inner.max(1e-30);
            loss -= inner.ln() * inv_n;
            for (g, c) in grad.row_mut(r).iter_mut().zip(channel) {
                *g = -c / inner * inv_n;
            }
        }
        let (param_grads, _) = network.backward(&mut trace, &grad)?;
        if !loss.is_finite() {
            return Err(CoreError::NonFinite(format!("loss diverged: {loss}")));
        }
        Ok((loss, param_grads))
    }

    /// Class probabilities for one input.
    ///
    /// - `Clean`: a raw record; for latent-level classifiers the encoder mean
    ///   (no noise) is applied first, which needs `vlm`.
    /// - `Private`: an already-privatized latent or feature vector.
    /// - `SemiPrivate`: clean features concatenated with the privatized
    ///   partner block (joined classifiers only).
    pub fn predict(
        &self,
        input: &[f64],
        mode: PredictMode,
        vlm: Option<&LaplaceVLM>,
    ) -> Result<Vec<f64>> {
        let vector = match (mode, self.level) {
            (PredictMode::SemiPrivate, ClassifierLevel::Joined) => input.to_vec(),
            (PredictMode::SemiPrivate, other) => {
                return Err(CoreError::validation(format!(
                    "semi-private inference requires a joined classifier, this one is {other:?}"
                )));
            }
            (_, ClassifierLevel::Joined) => {
                return Err(CoreError::validation(
                    "joined classifiers only support semi-private inference",
                ));
            }
            (PredictMode::Clean, ClassifierLevel::Latent) => {
                let model = vlm.ok_or_else(|| {
                    CoreError::validation(
                        "clean inference at latent level needs the VLM to encode the record",
                    )
                })?;
                let mu = model.encode_mean(&Tensor::row_vector(input.to_vec()))?;
                mu.row(0).to_vec()
            }
            (PredictMode::Clean, ClassifierLevel::Feature)
            | (PredictMode::Private, _) => input.to_vec(),
        };
        let out = self
            .network
            .forward_only(&Tensor::row_vector(vector))?;
        Ok(out.row(0).to_vec())
    }

    /// Argmax prediction as a 1-based class label.
    pub fn predict_class(
        &self,
        input: &[f64],
        mode: PredictMode,
        vlm: Option<&LaplaceVLM>,
    ) -> Result<usize> {
        let probs = self.predict(input, mode, vlm)?;
        let mut best = 0usize;
        for (i, p) in probs.iter().enumerate() {
            if *p > probs[best] {
                best = i;
            }
        }
        Ok(best + 1)
    }
}

/// Minimize the noise-aware loss with plain Adam. All inputs are already
/// privatized; nothing here touches raw data.
pub fn train_on_private(
    classifier: &mut NoiseAwareClassifier,
    inputs: &Tensor,
    labels: &[usize],
    config: &ClassifierTrainConfig,
    rng: &mut RandomnessSource,
) -> Result<Vec<f64>> {
    if config.batch_size == 0 || config.epochs == 0 {
        return Err(CoreError::validation("batch_size and epochs must be positive"));
    }
    if inputs.rows() != labels.len() {
        return Err(CoreError::shape("inputs and labels disagree on record count"));
    }
    let mut adam = AdamState::new(classifier.network.param_count());
    let mut order: Vec<usize> = (0..inputs.rows()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let mut values = Vec::with_capacity(chunk.len() * inputs.cols());
            let mut batch_labels = Vec::with_capacity(chunk.len());
            for &idx in chunk {
                values.extend_from_slice(inputs.row(idx));
                batch_labels.push(labels[idx]);
            }
            let batch = Tensor::matrix(chunk.len(), inputs.cols(), values)?;
            let (loss, grads) = classifier
                .noise_aware_grads_at(&classifier.network, &batch, &batch_labels)
                .map_err(|e| match e {
                    CoreError::NonFinite(m) => CoreError::Training(format!(
                        "classifier training diverged at epoch {epoch}: {m}"
                    )),
                    other => other,
                })?;
            epoch_loss += loss;
            batches += 1;
            let mut flat = classifier.network.params_flat();
            adam.step(&mut flat, &grads.to_flat(), config.learning_rate)?;
            classifier.network.load_params_flat(&flat)?;
        }
        epoch_losses.push(epoch_loss / batches.max(1) as f64);
    }
    Ok(epoch_losses)
}

/// Align two record sets by id and return the rows of `partner` reordered to
/// match `clean_ids`. Errors list the orphan ids on both sides.
fn align_by_record_id(
    clean_ids: &[u64],
    partner_ids: &[u64],
    partner: &Tensor,
) -> Result<Tensor> {
    let mut index: Vec<(u64, usize)> = partner_ids.iter().cloned().zip(0..).collect();
    index.sort_unstable();
    let lookup = |id: u64| -> Option<usize> {
        index
            .binary_search_by_key(&id, |&(k, _)| k)
            .ok()
            .map(|pos| index[pos].1)
    };
    let mut orphans: Vec<String> = Vec::new();
    let mut rows = Vec::with_capacity(clean_ids.len() * partner.cols());
    for &id in clean_ids {
        match lookup(id) {
            Some(r) => rows.extend_from_slice(partner.row(r)),
            None => orphans.push(format!("clean:{id}")),
        }
    }
    for &id in partner_ids {
        if !clean_ids.contains(&id) {
            orphans.push(format!("partner:{id}"));
        }
    }
    if !orphans.is_empty() {
        return Err(CoreError::validation(format!(
            "record ids without a join partner: {}",
            orphans.join(", ")
        )));
    }
    Tensor::matrix(clean_ids.len(), partner.cols(), rows)
}

/// Data-joining trainer: standard cross-entropy on the clean labels over
/// clean features concatenated with the privatized partner block.
#[allow(clippy::too_many_arguments)]
pub fn train_joined(
    classifier: &mut NoiseAwareClassifier,
    clean_ids: &[u64],
    clean: &Tensor,
    labels: &[usize],
    partner_ids: &[u64],
    partner: &Tensor,
    config: &ClassifierTrainConfig,
    rng: &mut RandomnessSource,
) -> Result<Vec<f64>> {
    if classifier.level != ClassifierLevel::Joined {
        return Err(CoreError::validation(
            "train_joined requires a joined-level classifier",
        ));
    }
    if classifier.flip.is_some() {
        return Err(CoreError::validation(
            "joined training uses clean labels; a flip spec does not apply",
        ));
    }
    if clean.rows() != clean_ids.len() || partner.rows() != partner_ids.len() {
        return Err(CoreError::shape("id lists do not match row counts"));
    }
    let joined = if partner.cols() == 0 {
        clean.clone()
    } else {
        let aligned = align_by_record_id(clean_ids, partner_ids, partner)?;
        hstack(clean, &aligned)?
    };
    train_on_private(classifier, &joined, labels, config, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanisms::flip_label;
    use crate::net::Layer;
    use crate::vlm::{FeatureLayout, LatentScaleMode};
    use alloc::vec;

    #[test]
    fn split_budget_examples() {
        let s = split_budget(10.0, 0.7).unwrap();
        assert!((s.epsilon_x - 7.0).abs() < 1e-12);
        assert!((s.epsilon_y - 3.0).abs() < 1e-12);
        let s = split_budget(4.0, 1.0).unwrap();
        assert_eq!(s.epsilon_x, 4.0);
        assert_eq!(s.epsilon_y, 0.0);
        let s = split_budget(1.0, 0.95).unwrap();
        assert!((s.epsilon_x - 0.95).abs() < 1e-15);
        assert!((s.epsilon_y - 0.05).abs() < 1e-15);
    }

    #[test]
    fn split_budget_is_exact() {
        let mut rng = RandomnessSource::from_seed(1);
        for _ in 0..1000 {
            let eps = rng.uniform_in(1e-3, 20.0);
            let lambda = rng.uniform_in(1e-3, 1.0);
            let s = split_budget(eps, lambda).unwrap();
            assert_eq!(s.epsilon_x + s.epsilon_y, eps);
        }
    }

    #[test]
    fn split_budget_rejects_bad_lambda() {
        assert!(split_budget(1.0, 0.0).is_err());
        assert!(split_budget(1.0, 1.1).is_err());
        assert!(split_budget(0.0, 0.5).is_err());
    }

    /// A classifier whose softmax output is a fixed probability vector,
    /// independent of the input: zero weights, logit biases.
    fn constant_classifier(probs: &[f64], flip: Option<FlipMechanismSpec>) -> NoiseAwareClassifier {
        let k = probs.len();
        let biases: Vec<f64> = probs.iter().map(|p| p.ln()).collect();
        let layer = Layer {
            weights: Tensor::zeros(vec![1, k]),
            biases,
            activation: Activation::Softmax,
        };
        let network = DenseNetwork::new(vec![layer]).unwrap();
        NoiseAwareClassifier {
            network,
            num_classes: k,
            flip,
            level: ClassifierLevel::Feature,
            budget: None,
        }
    }

    #[test]
    fn hand_computed_loss_for_k2() {
        // K=2, p=0.1, p_psi = (0.8, 0.2), observed label 1:
        // inner = 0.9*0.8 + 0.1*0.2 = 0.74
        let eps_y = (0.9f64 / 0.1).ln(); // p = 1/(e^eps+1) = 0.1
        let flip = FlipMechanismSpec::new(2, eps_y).unwrap();
        assert!((flip.flip_prob() - 0.1).abs() < 1e-12);
        let c = constant_classifier(&[0.8, 0.2], Some(flip));
        let batch = Tensor::row_vector(vec![0.0]);
        let loss = c.noise_aware_loss(&batch, &[1]).unwrap();
        assert!((loss - (-(0.74f64.ln()))).abs() < 1e-12);
        assert!((loss - 0.3011).abs() < 1e-4);
    }

    #[test]
    fn zero_flip_reduces_to_cross_entropy() {
        let c = constant_classifier(&[0.3, 0.6, 0.1], None);
        let batch = Tensor::row_vector(vec![0.0]);
        let loss = c.noise_aware_loss(&batch, &[2]).unwrap();
        assert!((loss - (-(0.6f64.ln()))).abs() < 1e-12);
    }

    #[test]
    fn uniform_boundary_flip_rejected() {
        // eps_y = 0 puts p exactly at (K-1)/K
        let flip = FlipMechanismSpec::new(4, 0.0).unwrap();
        let c = constant_classifier(&[0.25; 4], Some(flip));
        let batch = Tensor::row_vector(vec![0.0]);
        let err = c.noise_aware_loss(&batch, &[1]).unwrap_err();
        assert!(matches!(err, CoreError::Validation(_)));
    }

    #[test]
    fn loss_invariant_under_consistent_class_permutation() {
        // swap classes 1 and 2 everywhere: probs, labels
        let flip = FlipMechanismSpec::new(3, 1.5).unwrap();
        let a = constant_classifier(&[0.5, 0.3, 0.2], Some(flip.clone()));
        let b = constant_classifier(&[0.3, 0.5, 0.2], Some(flip));
        let batch = Tensor::row_vector(vec![0.0]);
        let la = a.noise_aware_loss(&batch, &[1]).unwrap();
        let lb = b.noise_aware_loss(&batch, &[2]).unwrap();
        assert!((la - lb).abs() < 1e-12);
    }

    #[test]
    fn noise_aware_gradient_matches_finite_differences() {
        let mut rng = RandomnessSource::from_seed(7);
        let flip = FlipMechanismSpec::new(3, 1.0).unwrap();
        let c = NoiseAwareClassifier::init(
            4,
            &[5],
            3,
            Some(flip),
            ClassifierLevel::Feature,
            &mut rng,
        )
        .unwrap();
        let batch = Tensor::matrix(
            6,
            4,
            (0..24).map(|_| rng.uniform_in(-1.0, 1.0)).collect(),
        )
        .unwrap();
        let labels = vec![1, 2, 3, 1, 2, 3];
        let (_, grads) = c
            .noise_aware_grads_at(&c.network, &batch, &labels)
            .unwrap();
        let grads = grads.to_flat();
        let base = c.network.params_flat();
        let h = 1e-5;
        for i in 0..base.len() {
            let mut work = c.clone();
            let mut plus = base.clone();
            plus[i] += h;
            work.network.load_params_flat(&plus).unwrap();
            let lp = work.noise_aware_loss(&batch, &labels).unwrap();
            let mut minus = base.clone();
            minus[i] -= h;
            work.network.load_params_flat(&minus).unwrap();
            let lm = work.noise_aware_loss(&batch, &labels).unwrap();
            let numeric = (lp - lm) / (2.0 * h);
            assert!(
                (grads[i] - numeric).abs() < 1e-4 * (1.0 + numeric.abs()),
                "param {i}: analytic {} numeric {numeric}",
                grads[i]
            );
        }
    }

    #[test]
    fn transition_consistency_chi_squared() {
        // empirical y_tilde distribution vs T applied to the empirical y
        // distribution at 1e5 samples
        let k = 3;
        let spec = FlipMechanismSpec::new(k, 1.2).unwrap();
        let t = flip_transition_matrix(&spec);
        let mut rng = RandomnessSource::from_seed(12);
        let n = 100_000usize;
        let mut y_counts = vec![0usize; k];
        let mut yt_counts = vec![0usize; k];
        for _ in 0..n {
            let y = rng.below(k as u64) as usize + 1;
            y_counts[y - 1] += 1;
            let yt = flip_label(y, &spec, &mut rng).unwrap();
            yt_counts[yt - 1] += 1;
        }
        // expected y_tilde counts under the channel given the drawn y's
        let mut expected = vec![0.0f64; k];
        for y in 0..k {
            for yt in 0..k {
                expected[yt] += t[yt][y] * y_counts[y] as f64;
            }
        }
        let chi2: f64 = (0..k)
            .map(|i| {
                let d = yt_counts[i] as f64 - expected[i];
                d * d / expected[i]
            })
            .sum();
        // df = 2, 99.9th percentile is 13.8
        assert!(chi2 < 13.8, "chi2 = {chi2}");
    }

    #[test]
    fn separable_toy_reaches_95_percent() {
        // linearly separable 2-D blobs, no noise, no flips
        let mut rng = RandomnessSource::from_seed(21);
        let n = 200;
        let mut values = Vec::with_capacity(n * 2);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let class = i % 2;
            let cx = if class == 0 { -2.0 } else { 2.0 };
            values.push(cx + rng.uniform_in(-0.5, 0.5));
            values.push(rng.uniform_in(-0.5, 0.5));
            labels.push(class + 1);
        }
        let data = Tensor::matrix(n, 2, values).unwrap();
        let mut c =
            NoiseAwareClassifier::init(2, &[8], 2, None, ClassifierLevel::Feature, &mut rng)
                .unwrap();
        let config = ClassifierTrainConfig {
            learning_rate: 1e-2,
            batch_size: 32,
            epochs: 40,
        };
        train_on_private(&mut c, &data, &labels, &config, &mut rng).unwrap();
        let mut correct = 0;
        for r in 0..n {
            let probs = c.predict(data.row(r), PredictMode::Private, None).unwrap();
            let pred = probs
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0
                + 1;
            if pred == labels[r] {
                correct += 1;
            }
        }
        assert!(correct as f64 / n as f64 >= 0.95, "{correct}/{n}");
    }

    #[test]
    fn predict_probabilities_sum_to_one() {
        let mut rng = RandomnessSource::from_seed(30);
        let c = NoiseAwareClassifier::init(3, &[6], 4, None, ClassifierLevel::Feature, &mut rng)
            .unwrap();
        let probs = c
            .predict(&[0.2, -0.4, 1.0], PredictMode::Clean, None)
            .unwrap();
        let s: f64 = probs.iter().sum();
        assert!((s - 1.0).abs() < 1e-9);
    }

    #[test]
    fn clean_mode_at_latent_level_goes_through_encoder_mean() {
        let mut rng = RandomnessSource::from_seed(31);
        let vlm = LaplaceVLM::init(
            FeatureLayout::continuous_only(4),
            &[6],
            &[6],
            2,
            1.0,
            LatentScaleMode::Fixed {
                epsilon_pretraining: 4.0,
            },
            &mut rng,
        )
        .unwrap();
        let c = NoiseAwareClassifier::init(2, &[6], 2, None, ClassifierLevel::Latent, &mut rng)
            .unwrap();
        let x = [0.1, 0.5, -0.2, 0.9];
        let via_clean = c.predict(&x, PredictMode::Clean, Some(&vlm)).unwrap();
        let mu = vlm
            .encode_mean(&Tensor::row_vector(x.to_vec()))
            .unwrap();
        let via_manual = c
            .predict(mu.row(0), PredictMode::Private, None)
            .unwrap();
        assert_eq!(via_clean, via_manual);
        // clean mode without the VLM is a validation error
        assert!(c.predict(&x, PredictMode::Clean, None).is_err());
    }

    #[test]
    fn mode_level_mismatches_rejected() {
        let mut rng = RandomnessSource::from_seed(32);
        let feature =
            NoiseAwareClassifier::init(2, &[4], 2, None, ClassifierLevel::Feature, &mut rng)
                .unwrap();
        assert!(feature
            .predict(&[0.0, 0.0], PredictMode::SemiPrivate, None)
            .is_err());
        let joined =
            NoiseAwareClassifier::init(2, &[4], 2, None, ClassifierLevel::Joined, &mut rng)
                .unwrap();
        assert!(joined.predict(&[0.0, 0.0], PredictMode::Clean, None).is_err());
        assert!(joined.predict(&[0.0, 0.0], PredictMode::Private, None).is_err());
        assert!(joined
            .predict(&[0.0, 0.0], PredictMode::SemiPrivate, None)
            .is_ok());
    }

    #[test]
    fn join_orphans_are_listed() {
        let mut rng = RandomnessSource::from_seed(33);
        let mut c = NoiseAwareClassifier::init(3, &[4], 2, None, ClassifierLevel::Joined, &mut rng)
            .unwrap();
        let clean = Tensor::matrix(2, 2, vec![0.0; 4]).unwrap();
        let partner = Tensor::matrix(2, 1, vec![0.0; 2]).unwrap();
        let config = ClassifierTrainConfig {
            learning_rate: 1e-3,
            batch_size: 2,
            epochs: 1,
        };
        let err = train_joined(
            &mut c,
            &[1, 2],
            &clean,
            &[1, 2],
            &[2, 7],
            &partner,
            &config,
            &mut rng,
        )
        .unwrap_err();
        let msg = alloc::format!("{err}");
        assert!(msg.contains("clean:1"), "{msg}");
        assert!(msg.contains("partner:7"), "{msg}");
    }

    #[test]
    fn zero_width_partner_reduces_to_clean_training() {
        let mut rng = RandomnessSource::from_seed(34);
        let n = 40;
        let mut values = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            values.push(if i % 2 == 0 { -1.0 } else { 1.0 });
            values.push(rng.uniform_in(-0.2, 0.2));
            labels.push(i % 2 + 1);
        }
        let clean = Tensor::matrix(n, 2, values).unwrap();
        let ids: Vec<u64> = (0..n as u64).collect();
        let partner = Tensor::matrix(n, 0, vec![]).unwrap();
        let config = ClassifierTrainConfig {
            learning_rate: 1e-2,
            batch_size: 8,
            epochs: 3,
        };
        let mut rng_a = RandomnessSource::from_seed(99);
        let mut a =
            NoiseAwareClassifier::init(2, &[4], 2, None, ClassifierLevel::Joined, &mut rng_a)
                .unwrap();
        let mut rng_train_a = RandomnessSource::from_seed(100);
        train_joined(
            &mut a, &ids, &clean, &labels, &ids, &partner, &config, &mut rng_train_a,
        )
        .unwrap();
        let mut rng_b = RandomnessSource::from_seed(99);
        let mut b =
            NoiseAwareClassifier::init(2, &[4], 2, None, ClassifierLevel::Joined, &mut rng_b)
                .unwrap();
        let mut rng_train_b = RandomnessSource::from_seed(100);
        train_on_private(&mut b, &clean, &labels, &config, &mut rng_train_b).unwrap();
        assert_eq!(a.network.params_flat(), b.network.params_flat());
    }
}
