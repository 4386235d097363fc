//! The variational Laplace mechanism: a latent-variable model with Laplace
//! prior and posterior whose l1-clipped encoder mean turns latent sampling
//! into a local Laplace mechanism.
//!
//! The encoder ends in a nu-clip activation of radius `l`, which bounds the
//! l1 sensitivity of the encoder mean by 2l. Fixing the posterior scale to
//! b = 2l/epsilon_x at privatization time makes a posterior sample an
//! epsilon_x-LDP representation of the input; decoding it is post-processing
//! and keeps the guarantee.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::dp_optim::{
    account_epsilon, clip_per_example, dp_adam_step, steps_for_target_epsilon, AdamState,
    DpAdamConfig,
};
use crate::error::{CoreError, Result};
use crate::math::F64Ext;
use crate::net::{Activation, DenseNetwork, ParamGrads};
use crate::rng::RandomnessSource;
use crate::tensor::Tensor;

/// Scale of the Laplace prior p(z_i) = Laplace(0, 1/sqrt(2)).
pub const PRIOR_SCALE: f64 = core::f64::consts::FRAC_1_SQRT_2;

/// Feature-space layout understood by the decoder likelihood: continuous
/// dimensions first (unit-variance Gaussian likelihood), then one-hot groups
/// (categorical likelihood over each group).
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FeatureLayout {
    pub continuous: usize,
    pub categorical_groups: Vec<usize>,
}

impl FeatureLayout {
    pub fn continuous_only(n: usize) -> Self {
        Self {
            continuous: n,
            categorical_groups: Vec::new(),
        }
    }

    pub fn width(&self) -> usize {
        self.continuous + self.categorical_groups.iter().sum::<usize>()
    }
}

/// How the posterior scale b behaves during training.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum LatentScaleMode {
    /// b = 2l / epsilon_pretraining, fixed throughout training.
    Fixed { epsilon_pretraining: f64 },
    /// b is a single learned scalar, optimized in log space.
    Learned { log_b: f64 },
}

/// Which VLM component carries a CDP guarantee, per application.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum CdpComponent {
    Encoder,
    Decoder,
    None,
}

/// The three applications and the sharing level, used to resolve which
/// component must be CDP-trained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Application {
    DataCollection,
    DataJoining,
    NovelClass,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum ShareLevel {
    Latent,
    Feature,
}

/// CDP requirements per application and sharing level.
pub fn required_cdp_component(application: Application, share_level: ShareLevel) -> CdpComponent {
    match (application, share_level) {
        (Application::DataCollection, _) => CdpComponent::Encoder,
        (Application::NovelClass, _) => CdpComponent::Encoder,
        (Application::DataJoining, ShareLevel::Feature) => CdpComponent::Decoder,
        (Application::DataJoining, ShareLevel::Latent) => CdpComponent::None,
    }
}

/// Record of the stage-two CDP training applied to a component.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CdpStamp {
    pub component: CdpComponent,
    pub epsilon: f64,
    pub delta: f64,
    pub noise_multiplier: f64,
    pub sampling_rate: f64,
    pub steps: u64,
    pub order: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LaplaceVLM {
    pub encoder: DenseNetwork,
    pub decoder: DenseNetwork,
    pub clip_radius: f64,
    pub latent_dim: usize,
    pub scale_mode: LatentScaleMode,
    pub layout: FeatureLayout,
    pub cdp_stamp: Option<CdpStamp>,
}

/// A privatized latent representation, tagged with the budget it consumed.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PrivatizedLatent {
    pub z_tilde: Vec<f64>,
    pub epsilon_x: f64,
    pub record_id: u64,
}

/// A privatized feature-space reconstruction; deterministic post-processing
/// of a [`PrivatizedLatent`], so it carries the same guarantee.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PrivatizedFeatures {
    pub x_tilde: Vec<f64>,
    pub epsilon_x: f64,
    pub record_id: u64,
}

/// Project `y` into the l1 ball of radius `l`: identity inside, radial
/// rescale y * l / ||y||_1 outside.
pub fn nu_clip(y: &[f64], l: f64) -> Vec<f64> {
    let norm: f64 = y.iter().map(|v| v.abs()).sum();
    if norm > l {
        let factor = l / norm;
        y.iter().map(|v| v * factor).collect()
    } else {
        y.to_vec()
    }
}

/// Inverse-CDF transform of a centered uniform to a unit Laplace draw:
/// w = -sgn(u) ln(1 - 2|u|).
pub fn unit_laplace_from(u: f64) -> f64 {
    -u.signum_or_zero() * F64Ext::ln_1p(-2.0 * u.abs())
}

/// z_i = mu_i + b * w_i with w_i a unit Laplace draw; reparameterized so
/// dz/dmu = 1 and dz/db = w.
pub fn sample_latent(mu: &[f64], b: f64, rng: &mut RandomnessSource) -> Vec<f64> {
    mu.iter()
        .map(|&m| m + b * unit_laplace_from(rng.uniform_centered()))
        .collect()
}

/// Closed-form KL(Laplace(mu_i, b) || Laplace(0, b0)) summed over dimensions,
/// with b0 = 1/sqrt(2):
/// ln(b0/b) + (b e^{-|mu_i|/b} + |mu_i|)/b0 - 1 per dimension.
pub fn kl_to_prior(mu: &[f64], b: f64) -> f64 {
    mu.iter().map(|&m| kl_to_prior_dim(m, b)).sum()
}

fn kl_to_prior_dim(mu: f64, b: f64) -> f64 {
    (PRIOR_SCALE / b).ln() + (b * (-mu.abs() / b).exp() + mu.abs()) / PRIOR_SCALE - 1.0
}

/// (d/dmu, d/db) of the per-dimension KL.
fn kl_grad_dim(mu: f64, b: f64) -> (f64, f64) {
    let e = (-mu.abs() / b).exp();
    let dmu = mu.signum_or_zero() * (1.0 - e) / PRIOR_SCALE;
    let db = -1.0 / b + e * (1.0 + mu.abs() / b) / PRIOR_SCALE;
    (dmu, db)
}

/// Negative log likelihood of `x` under the decoder mean `m` for the given
/// layout, and its gradient with respect to `m` (the decoder's raw output:
/// identity means for continuous dims, logits for categorical groups).
fn reconstruction_nll(layout: &FeatureLayout, x: &[f64], m: &[f64]) -> (f64, Vec<f64>) {
    let mut nll = 0.0;
    let mut grad = vec![0.0; m.len()];
    const HALF_LN_2PI: f64 = 0.9189385332046727;
    for i in 0..layout.continuous {
        let r = m[i] - x[i];
        nll += 0.5 * r * r + HALF_LN_2PI;
        grad[i] = r;
    }
    let mut off = layout.continuous;
    for &g in &layout.categorical_groups {
        let logits = &m[off..off + g];
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        let probs: Vec<f64> = logits
            .iter()
            .map(|&v| {
                let e = (v - max).exp();
                sum += e;
                e
            })
            .collect();
        let log_z = max + sum.ln();
        for j in 0..g {
            let p = probs[j] / sum;
            grad[off + j] = p - x[off + j];
            if x[off + j] > 0.0 {
                nll += x[off + j] * (log_z - m[off + j]);
            }
        }
        off += g;
    }
    (nll, grad)
}

/// Gradients of the batch-mean negative ELBO.
/// Negative-ELBO value and its parameter gradients for one batch.
pub struct ElboGrads {
    pub loss: f64,
    pub encoder: ParamGrads,
    pub decoder: ParamGrads,
    /// d loss / d b (only meaningful when b is learned).
    pub scale: f64,
}

impl LaplaceVLM {
    pub fn validate(&self) -> Result<()> {
        if !(self.clip_radius > 0.0) {
            return Err(CoreError::validation("clip radius l must be positive"));
        }
        if self.encoder.output_dim() != self.latent_dim {
            return Err(CoreError::shape("encoder output does not match latent_dim"));
        }
        if self.decoder.input_dim() != self.latent_dim {
            return Err(CoreError::shape("decoder input does not match latent_dim"));
        }
        if self.decoder.output_dim() != self.layout.width() {
            return Err(CoreError::shape("decoder output does not match feature layout"));
        }
        match self.encoder.layers().last().unwrap().activation {
            Activation::NuClip(l) if l == self.clip_radius => Ok(()),
            other => Err(CoreError::validation(format!(
                "encoder must end in nu-clip with radius {}, found {other:?}",
                self.clip_radius
            ))),
        }
    }

    /// Build a fresh VLM with seeded initialization.
    pub fn init(
        layout: FeatureLayout,
        encoder_hidden: &[usize],
        decoder_hidden: &[usize],
        latent_dim: usize,
        clip_radius: f64,
        scale_mode: LatentScaleMode,
        rng: &mut RandomnessSource,
    ) -> Result<Self> {
        let width = layout.width();
        let mut enc_sizes = vec![width];
        enc_sizes.extend_from_slice(encoder_hidden);
        enc_sizes.push(latent_dim);
        let mut dec_sizes = vec![latent_dim];
        dec_sizes.extend_from_slice(decoder_hidden);
        dec_sizes.push(width);
        let encoder = DenseNetwork::init(
            &enc_sizes,
            Activation::Relu,
            Activation::NuClip(clip_radius),
            rng,
        )?;
        let decoder =
            DenseNetwork::init(&dec_sizes, Activation::Relu, Activation::Identity, rng)?;
        let model = Self {
            encoder,
            decoder,
            clip_radius,
            latent_dim,
            scale_mode,
            layout,
            cdp_stamp: None,
        };
        model.validate()?;
        Ok(model)
    }

    /// Posterior scale used during training.
    pub fn training_scale(&self) -> f64 {
        match self.scale_mode {
            LatentScaleMode::Fixed { epsilon_pretraining } => {
                2.0 * self.clip_radius / epsilon_pretraining
            }
            LatentScaleMode::Learned { log_b } => log_b.exp(),
        }
    }

    /// Clipped encoder mean for a batch.
    pub fn encode_mean(&self, batch: &Tensor) -> Result<Tensor> {
        self.encoder.forward_only(batch)
    }

    /// Single-sample Monte Carlo negative ELBO averaged over the batch.
    pub fn elbo_loss(&self, batch: &Tensor, rng: &mut RandomnessSource) -> Result<f64> {
        let grads = self.elbo_grads(batch, rng)?;
        Ok(grads.loss)
    }

    /// Single-sample Monte Carlo negative ELBO and gradients; the noise draw
    /// is taken from `rng`, so re-seeding pins the sample.
    pub fn elbo_grads(&self, batch: &Tensor, rng: &mut RandomnessSource) -> Result<ElboGrads> {
        let mut w = Tensor::zeros(vec![batch.rows(), self.latent_dim]);
        for v in w.values_mut() {
            *v = unit_laplace_from(rng.uniform_centered());
        }
        self.elbo_grads_with_noise(batch, &w)
    }

    /// ELBO gradients with the unit Laplace noise `w` supplied by the caller;
    /// lets tests pin the Monte Carlo sample.
    pub fn elbo_grads_with_noise(&self, batch: &Tensor, w: &Tensor) -> Result<ElboGrads> {
        let n = batch.rows();
        if n == 0 {
            return Err(CoreError::validation("empty batch"));
        }
        let b = self.training_scale();
        let (mu, mut enc_trace) = self.encoder.forward(batch)?;
        // reparameterized sample z = mu + b*w
        let mut z = mu.clone();
        for (zv, wv) in z.values_mut().iter_mut().zip(w.values()) {
            *zv += b * wv;
        }
        let (m, mut dec_trace) = self.decoder.forward(&z)?;

        let inv_n = 1.0 / n as f64;
        let mut loss = 0.0;
        let mut grad_m = Tensor::zeros(m.shape().to_vec());
        for r in 0..n {
            let (nll, g) = reconstruction_nll(&self.layout, batch.row(r), m.row(r));
            loss += nll * inv_n;
            for (gv, src) in grad_m.row_mut(r).iter_mut().zip(&g) {
                *gv = src * inv_n;
            }
        }
        let (decoder_grads, grad_z) = self.decoder.backward(&mut dec_trace, &grad_m)?;

        // KL term and its gradients
        let mut grad_mu = grad_z.clone(); // dz/dmu = 1
        let mut scale_grad = 0.0;
        for r in 0..n {
            for (j, &mv) in mu.row(r).iter().enumerate() {
                loss += kl_to_prior_dim(mv, b) * inv_n;
                let (dmu, db) = kl_grad_dim(mv, b);
                grad_mu.row_mut(r)[j] += dmu * inv_n;
                scale_grad += db * inv_n;
            }
            // dz/db = w
            for (gz, wv) in grad_z.row(r).iter().zip(w.row(r)) {
                scale_grad += gz * wv;
            }
        }
        let (encoder_grads, _) = self.encoder.backward(&mut enc_trace, &grad_mu)?;

        if !loss.is_finite() {
            return Err(CoreError::NonFinite(format!("ELBO loss diverged: {loss}")));
        }
        Ok(ElboGrads {
            loss,
            encoder: encoder_grads,
            decoder: decoder_grads,
            scale: scale_grad,
        })
    }

    /// Force b to 2l/epsilon_x (never the trained scale) and draw the latent.
    pub fn privatize_to_latent(
        &self,
        x: &[f64],
        epsilon_x: f64,
        record_id: u64,
        rng: &mut RandomnessSource,
    ) -> Result<PrivatizedLatent> {
        if !(epsilon_x > 0.0) {
            return Err(CoreError::validation("epsilon_x must be positive"));
        }
        let batch = Tensor::row_vector(x.to_vec());
        let mu = self.encode_mean(&batch)?;
        let b = 2.0 * self.clip_radius / epsilon_x;
        let z_tilde = sample_latent(mu.row(0), b, rng);
        Ok(PrivatizedLatent {
            z_tilde,
            epsilon_x,
            record_id,
        })
    }

    /// Decoder mean of a privatized latent; post-processing, so the epsilon
    /// tag is copied unchanged. Categorical groups come out as probabilities.
    pub fn privatize_to_features(&self, latent: &PrivatizedLatent) -> Result<PrivatizedFeatures> {
        let z = Tensor::row_vector(latent.z_tilde.clone());
        let m = self.decoder.forward_only(&z)?;
        let mut x_tilde = m.row(0).to_vec();
        // softmax over each categorical group
        let mut off = self.layout.continuous;
        for &g in &self.layout.categorical_groups {
            let slice = &mut x_tilde[off..off + g];
            let max = slice.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for v in slice.iter_mut() {
                *v = (*v - max).exp();
                sum += *v;
            }
            for v in slice.iter_mut() {
                *v /= sum;
            }
            off += g;
        }
        Ok(PrivatizedFeatures {
            x_tilde,
            epsilon_x: latent.epsilon_x,
            record_id: latent.record_id,
        })
    }
}

/// Plain-Adam stage-one training configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VlmTrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

/// Per-epoch training and validation losses.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainingLog {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
}

/// Stage one: optimize both encoder and decoder (and b, when learned) with
/// standard Adam on the negative ELBO.
pub fn train_stage_one(
    model: &mut LaplaceVLM,
    train: &Tensor,
    val: Option<&Tensor>,
    config: &VlmTrainConfig,
    rng: &mut RandomnessSource,
) -> Result<TrainingLog> {
    model.validate()?;
    if config.batch_size == 0 || config.epochs == 0 {
        return Err(CoreError::validation("batch_size and epochs must be positive"));
    }
    let learn_scale = matches!(model.scale_mode, LatentScaleMode::Learned { .. });
    let enc_n = model.encoder.param_count();
    let dec_n = model.decoder.param_count();
    let total = enc_n + dec_n + if learn_scale { 1 } else { 0 };
    let mut adam = AdamState::new(total);
    let mut log = TrainingLog {
        train_loss: Vec::new(),
        val_loss: Vec::new(),
    };
    let n = train.rows();
    let mut order: Vec<usize> = (0..n).collect();
    for _epoch in 0..config.epochs {
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let mut values = Vec::with_capacity(chunk.len() * train.cols());
            for &idx in chunk {
                values.extend_from_slice(train.row(idx));
            }
            let batch = Tensor::matrix(chunk.len(), train.cols(), values)?;
            let grads = model.elbo_grads(&batch, rng).map_err(|e| match e {
                CoreError::NonFinite(m) => {
                    CoreError::Training(format!("stage-one training diverged: {m}"))
                }
                other => other,
            })?;
            epoch_loss += grads.loss;
            batches += 1;

            let mut flat_params = model.encoder.params_flat();
            flat_params.extend(model.decoder.params_flat());
            let mut flat_grads = grads.encoder.to_flat();
            flat_grads.extend(grads.decoder.to_flat());
            if learn_scale {
                if let LatentScaleMode::Learned { log_b } = model.scale_mode {
                    flat_params.push(log_b);
                    // chain rule into log space: dL/dlog_b = b * dL/db
                    flat_grads.push(model.training_scale() * grads.scale);
                }
            }
            adam.step(&mut flat_params, &flat_grads, config.learning_rate)?;
            model.encoder.load_params_flat(&flat_params[..enc_n])?;
            model
                .decoder
                .load_params_flat(&flat_params[enc_n..enc_n + dec_n])?;
            if learn_scale {
                model.scale_mode = LatentScaleMode::Learned {
                    log_b: flat_params[total - 1],
                };
            }
        }
        log.train_loss.push(epoch_loss / batches.max(1) as f64);
        if let Some(v) = val {
            log.val_loss.push(model.elbo_loss(v, rng)?);
        }
    }
    Ok(log)
}

/// Which component stage two re-trains under DP.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum StageTwoTarget {
    Encoder,
    Decoder,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StageTwoConfig {
    pub dp: DpAdamConfig,
    /// Central epsilon target; `f64::INFINITY` disables DP (plain Adam
    /// fine-tuning of the freshly initialized component).
    pub central_epsilon: f64,
    /// Epoch cap; the step budget from `central_epsilon` may stop earlier.
    pub max_epochs: usize,
}

/// Stage two: freeze the non-target component, re-initialize the target from
/// scratch, and train it with DP-Adam within the central budget. Returns the
/// accountant stamp (also recorded on the model).
pub fn train_stage_two_dp(
    model: &mut LaplaceVLM,
    train: &Tensor,
    target: StageTwoTarget,
    config: &StageTwoConfig,
    rng: &mut RandomnessSource,
) -> Result<CdpStamp> {
    model.validate()?;
    let dp_enabled = config.central_epsilon.is_finite();
    if dp_enabled {
        config.dp.validate()?;
    }
    let width = model.layout.width();
    let d = model.latent_dim;
    // fresh initialization of the private component, mirroring the original
    // layer sizes
    let sizes_of = |net: &DenseNetwork| -> Vec<usize> {
        let mut s = vec![net.input_dim()];
        s.extend(net.layers().iter().map(|l| l.out_dim()));
        s
    };
    match target {
        StageTwoTarget::Encoder => {
            let sizes = sizes_of(&model.encoder);
            debug_assert_eq!(sizes[0], width);
            model.encoder = DenseNetwork::init(
                &sizes,
                Activation::Relu,
                Activation::NuClip(model.clip_radius),
                rng,
            )?;
        }
        StageTwoTarget::Decoder => {
            let sizes = sizes_of(&model.decoder);
            debug_assert_eq!(sizes[0], d);
            model.decoder = DenseNetwork::init(&sizes, Activation::Relu, Activation::Identity, rng)?;
        }
    }

    let step_budget = if dp_enabled {
        steps_for_target_epsilon(&config.dp, config.central_epsilon)?
    } else {
        u64::MAX
    };
    let batch_size = config.dp.batch_size;
    let n = train.rows();
    let mut steps_taken: u64 = 0;
    let mut adam = AdamState::new(match target {
        StageTwoTarget::Encoder => model.encoder.param_count(),
        StageTwoTarget::Decoder => model.decoder.param_count(),
    });
    let mut order: Vec<usize> = (0..n).collect();

    'epochs: for _epoch in 0..config.max_epochs {
        rng.shuffle(&mut order);
        for chunk in order.chunks(batch_size) {
            if chunk.len() < batch_size {
                // accounting assumes full batches at rate q
                continue;
            }
            if steps_taken >= step_budget {
                break 'epochs;
            }
            let mut per_example: Vec<ParamGrads> = Vec::with_capacity(chunk.len());
            for &idx in chunk {
                let row = train.row_tensor(idx);
                let grads = model.elbo_grads(&row, rng)?;
                per_example.push(match target {
                    StageTwoTarget::Encoder => grads.encoder,
                    StageTwoTarget::Decoder => grads.decoder,
                });
            }
            let mut flat = match target {
                StageTwoTarget::Encoder => model.encoder.params_flat(),
                StageTwoTarget::Decoder => model.decoder.params_flat(),
            };
            if dp_enabled {
                clip_per_example(&mut per_example, config.dp.max_grad_norm);
                dp_adam_step(&mut flat, &per_example, &config.dp, &mut adam, rng)?;
            } else {
                let mut sum = per_example[0].clone();
                for g in &per_example[1..] {
                    sum.add_in_place(g)?;
                }
                sum.scale_in_place(1.0 / chunk.len() as f64);
                adam.step(&mut flat, &sum.to_flat(), config.dp.learning_rate)?;
            }
            match target {
                StageTwoTarget::Encoder => model.encoder.load_params_flat(&flat)?,
                StageTwoTarget::Decoder => model.decoder.load_params_flat(&flat)?,
            }
            steps_taken += 1;
        }
    }

    let stamp = if dp_enabled {
        let epsilon = account_epsilon(&config.dp, steps_taken)?;
        let mut acc = crate::dp_optim::AccountantState::new();
        acc.accumulate(config.dp.sampling_rate(), config.dp.noise_multiplier, steps_taken)?;
        let (_, order_used) = acc.epsilon(config.dp.delta)?;
        CdpStamp {
            component: match target {
                StageTwoTarget::Encoder => CdpComponent::Encoder,
                StageTwoTarget::Decoder => CdpComponent::Decoder,
            },
            epsilon,
            delta: config.dp.delta,
            noise_multiplier: config.dp.noise_multiplier,
            sampling_rate: config.dp.sampling_rate(),
            steps: steps_taken,
            order: order_used,
        }
    } else {
        CdpStamp {
            component: match target {
                StageTwoTarget::Encoder => CdpComponent::Encoder,
                StageTwoTarget::Decoder => CdpComponent::Decoder,
            },
            epsilon: f64::INFINITY,
            delta: config.dp.delta,
            noise_multiplier: 0.0,
            sampling_rate: config.dp.sampling_rate(),
            steps: steps_taken,
            order: f64::NAN,
        }
    };
    model.cdp_stamp = Some(stamp.clone());
    Ok(stamp)
}

/// Per-example ELBO gradients restricted to one component, exposed for tests
/// that check the clipping/freezing contracts.
pub fn per_example_component_grads(
    model: &LaplaceVLM,
    batch: &Tensor,
    target: StageTwoTarget,
    rng: &mut RandomnessSource,
) -> Result<Vec<ParamGrads>> {
    let mut out = Vec::with_capacity(batch.rows());
    for r in 0..batch.rows() {
        let row = batch.row_tensor(r);
        let grads = model.elbo_grads(&row, rng)?;
        out.push(match target {
            StageTwoTarget::Encoder => grads.encoder,
            StageTwoTarget::Decoder => grads.decoder,
        });
    }
    Ok(out)
}
