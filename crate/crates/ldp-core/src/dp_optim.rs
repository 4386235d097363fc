//! DP-Adam: per-example gradient clipping, Gaussian noising, Adam updates,
//! and a Renyi-divergence privacy accountant for the subsampled Gaussian
//! mechanism with conversion to (epsilon, delta).

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::math::{erfc, log_add_exp, log_sub_exp, F64Ext};
use crate::net::ParamGrads;
use crate::rng::RandomnessSource;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DpAdamConfig {
    pub noise_multiplier: f64,
    pub max_grad_norm: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub delta: f64,
    pub dataset_size: usize,
}

impl DpAdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.noise_multiplier >= 0.0) {
            return Err(CoreError::validation("noise_multiplier must be nonnegative"));
        }
        if !(self.max_grad_norm > 0.0) {
            return Err(CoreError::validation("max_grad_norm must be positive"));
        }
        if self.batch_size == 0 || self.dataset_size == 0 {
            return Err(CoreError::validation("batch_size and dataset_size must be positive"));
        }
        if self.batch_size > self.dataset_size {
            return Err(CoreError::validation(format!(
                "sampling rate q = {}/{} exceeds 1",
                self.batch_size, self.dataset_size
            )));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(CoreError::validation("delta must lie in (0, 1)"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(CoreError::validation("learning_rate must be positive"));
        }
        Ok(())
    }

    /// Sampling rate q = batch_size / dataset_size.
    pub fn sampling_rate(&self) -> f64 {
        self.batch_size as f64 / self.dataset_size as f64
    }
}

/// Scale each per-example gradient g by min(1, max_norm / ||g||_2), the l2
/// norm taken over all parameters jointly.
pub fn clip_per_example(gradients: &mut [ParamGrads], max_norm: f64) {
    for g in gradients.iter_mut() {
        let norm = g.l2_norm();
        if norm > max_norm {
            g.scale_in_place(max_norm / norm);
        }
    }
}

/// Standard Adam moment state over a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

impl AdamState {
    pub fn new(param_count: usize) -> Self {
        Self {
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            t: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// One Adam update of `params` against `grad`.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], learning_rate: f64) -> Result<()> {
        if params.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(CoreError::shape("adam state size mismatch"));
        }
        self.t += 1;
        let b1t = 1.0 - ADAM_BETA1.powi(self.t as i32);
        let b2t = 1.0 - ADAM_BETA2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grad[i];
            if !g.is_finite() {
                return Err(CoreError::NonFinite("gradient in adam step".into()));
            }
            self.m[i] = ADAM_BETA1 * self.m[i] + (1.0 - ADAM_BETA1) * g;
            self.v[i] = ADAM_BETA2 * self.v[i] + (1.0 - ADAM_BETA2) * g * g;
            let m_hat = self.m[i] / b1t;
            let v_hat = self.v[i] / b2t;
            params[i] -= learning_rate * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
        Ok(())
    }
}

/// (sum of clipped per-example gradients + per-coordinate Gaussian noise of
/// std sigma * max_grad_norm) / batch_size, flattened.
pub fn noised_mean_gradient(
    clipped: &[ParamGrads],
    config: &DpAdamConfig,
    rng: &mut RandomnessSource,
) -> Result<Vec<f64>> {
    let first = clipped
        .first()
        .ok_or_else(|| CoreError::validation("empty gradient batch"))?;
    let mut sum = first.to_flat();
    for g in &clipped[1..] {
        let flat = g.to_flat();
        if flat.len() != sum.len() {
            return Err(CoreError::shape("per-example gradient sizes differ"));
        }
        for (s, v) in sum.iter_mut().zip(&flat) {
            *s += v;
        }
    }
    let noise_std = config.noise_multiplier * config.max_grad_norm;
    let inv_b = 1.0 / config.batch_size as f64;
    for s in sum.iter_mut() {
        if noise_std > 0.0 {
            *s += noise_std * rng.standard_normal();
        }
        *s *= inv_b;
    }
    Ok(sum)
}

/// One DP-Adam step: noise the summed clipped gradients and apply Adam.
/// Clipping must already have been applied via [`clip_per_example`].
pub fn dp_adam_step(
    params: &mut [f64],
    clipped: &[ParamGrads],
    config: &DpAdamConfig,
    state: &mut AdamState,
    rng: &mut RandomnessSource,
) -> Result<()> {
    config.validate()?;
    let grad = noised_mean_gradient(clipped, config, rng)?;
    state.step(params, &grad, config.learning_rate)
}

// ---------------------------------------------------------------------------
// Renyi accountant for the subsampled Gaussian mechanism
// ---------------------------------------------------------------------------

/// Order grid 1.25, 1.5, ..., 64.
pub fn default_order_grid() -> Vec<f64> {
    let mut orders = Vec::new();
    let mut a = 1.25;
    while a <= 64.0 + 1e-9 {
        orders.push(a);
        a += 0.25;
    }
    orders
}

/// Accumulated Renyi divergence per order over a number of identical steps.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AccountantState {
    pub orders: Vec<f64>,
    pub rdp: Vec<f64>,
    pub steps: u64,
}

impl AccountantState {
    pub fn new() -> Self {
        let orders = default_order_grid();
        let rdp = vec![0.0; orders.len()];
        Self { orders, rdp, steps: 0 }
    }

    /// Record `steps` further steps of the subsampled Gaussian with rate `q`
    /// and noise multiplier `sigma`.
    pub fn accumulate(&mut self, q: f64, sigma: f64, steps: u64) -> Result<()> {
        if steps == 0 {
            return Ok(());
        }
        for (order, acc) in self.orders.iter().zip(self.rdp.iter_mut()) {
            *acc += steps as f64 * rdp_subsampled_gaussian(q, sigma, *order)?;
        }
        self.steps += steps;
        Ok(())
    }

    /// Convert to epsilon at the given delta, minimizing over the order grid.
    /// Returns (epsilon, order at the minimum).
    pub fn epsilon(&self, delta: f64) -> Result<(f64, f64)> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(CoreError::validation("delta must lie in (0, 1)"));
        }
        let mut best = f64::INFINITY;
        let mut best_order = self.orders[0];
        for (&order, &rdp) in self.orders.iter().zip(&self.rdp) {
            let eps = rdp + (1.0 / delta).ln() / (order - 1.0);
            if eps < best {
                best = eps;
                best_order = order;
            }
        }
        Ok((best.max(0.0), best_order))
    }
}

impl Default for AccountantState {
    fn default() -> Self {
        Self::new()
    }
}

/// Per-step Renyi divergence of the subsampled Gaussian mechanism at `order`,
/// following the analytic moment computation for the mixture
/// (1-q) N(0, sigma^2) + q N(1, sigma^2) against N(0, sigma^2).
pub fn rdp_subsampled_gaussian(q: f64, sigma: f64, order: f64) -> Result<f64> {
    if !(q >= 0.0 && q <= 1.0) {
        return Err(CoreError::validation(format!("sampling rate q={q} outside [0, 1]")));
    }
    if !(order > 1.0) {
        return Err(CoreError::validation("order must exceed 1"));
    }
    if q == 0.0 {
        return Ok(0.0);
    }
    if sigma == 0.0 {
        return Ok(f64::INFINITY);
    }
    if q == 1.0 {
        // plain Gaussian mechanism
        return Ok(order / (2.0 * sigma * sigma));
    }
    let log_a = if order == libm::floor(order) {
        log_a_int(q, sigma, order as u64)
    } else {
        log_a_frac(q, sigma, order)
    };
    Ok(log_a / (order - 1.0))
}

/// log A_alpha for integer alpha via the exact binomial expansion.
fn log_a_int(q: f64, sigma: f64, alpha: u64) -> f64 {
    let mut log_a = f64::NEG_INFINITY;
    let ln_q = q.ln();
    let ln_1q = F64Ext::ln_1p(-q);
    let mut log_binom = 0.0; // ln C(alpha, 0)
    for i in 0..=alpha {
        if i > 0 {
            log_binom += ((alpha - i + 1) as f64).ln() - (i as f64).ln();
        }
        let term = log_binom
            + i as f64 * ln_q
            + (alpha - i) as f64 * ln_1q
            + (i * i - i) as f64 / (2.0 * sigma * sigma);
        log_a = log_add_exp(log_a, term);
    }
    log_a
}

/// Numerically stable ln(erfc(x)).
fn log_erfc(x: f64) -> f64 {
    if x > 25.0 {
        // asymptotic expansion; erfc underflows around x = 27
        -x * x - x.ln() - 0.5 * core::f64::consts::PI.ln()
            + F64Ext::ln_1p(-0.5 / (x * x) + 0.75 / (x * x * x * x))
    } else {
        erfc(x).ln()
    }
}

/// log A_alpha for fractional alpha via the two-series expansion with erfc
/// tail weights.
fn log_a_frac(q: f64, sigma: f64, alpha: f64) -> f64 {
    let mut log_a0 = f64::NEG_INFINITY;
    let mut log_a1 = f64::NEG_INFINITY;
    let z0 = sigma * sigma * (1.0 / q - 1.0).ln() + 0.5;
    let ln_q = q.ln();
    let ln_1q = F64Ext::ln_1p(-q);
    let sqrt2_sigma = core::f64::consts::SQRT_2 * sigma;

    // generalized binomial coefficients, tracked incrementally in log space
    let mut log_coef_abs = 0.0; // ln |C(alpha, 0)| = 0
    let mut coef_positive = true;
    let mut i: u64 = 0;
    loop {
        if i > 0 {
            let factor = (alpha - (i - 1) as f64) / i as f64;
            log_coef_abs += factor.abs().ln();
            if factor < 0.0 {
                coef_positive = !coef_positive;
            }
        }
        let fi = i as f64;
        let j = alpha - fi;
        let log_t0 = log_coef_abs + fi * ln_q + j * ln_1q;
        let log_t1 = log_coef_abs + j * ln_q + fi * ln_1q;
        let log_e0 = 0.5f64.ln() + log_erfc((fi - z0) / sqrt2_sigma);
        let log_e1 = 0.5f64.ln() + log_erfc((z0 - j) / sqrt2_sigma);
        let log_s0 = log_t0 + (fi * fi - fi) / (2.0 * sigma * sigma) + log_e0;
        let log_s1 = log_t1 + (j * j - j) / (2.0 * sigma * sigma) + log_e1;
        if coef_positive {
            log_a0 = log_add_exp(log_a0, log_s0);
            log_a1 = log_add_exp(log_a1, log_s1);
        } else {
            log_a0 = log_sub_exp(log_a0, log_s0);
            log_a1 = log_sub_exp(log_a1, log_s1);
        }
        i += 1;
        if log_s0.max(log_s1) < -30.0 && fi > alpha {
            break;
        }
        if i > 10_000 {
            break;
        }
    }
    log_add_exp(log_a0, log_a1)
}

/// Epsilon for `steps` identical subsampled-Gaussian steps at the config's
/// delta, minimized over the default order grid.
pub fn account_epsilon(config: &DpAdamConfig, steps: u64) -> Result<f64> {
    config.validate()?;
    if steps == 0 {
        return Ok(0.0);
    }
    let mut acc = AccountantState::new();
    acc.accumulate(config.sampling_rate(), config.noise_multiplier, steps)?;
    acc.epsilon(config.delta).map(|(eps, _)| eps)
}

/// Largest step count whose accounted epsilon stays at or below the target.
pub fn steps_for_target_epsilon(config: &DpAdamConfig, target_epsilon: f64) -> Result<u64> {
    config.validate()?;
    if !(target_epsilon > 0.0) {
        return Err(CoreError::validation("target epsilon must be positive"));
    }
    if account_epsilon(config, 1)? > target_epsilon {
        return Err(CoreError::validation(format!(
            "target epsilon {target_epsilon} unreachable: a single step already costs more"
        )));
    }
    // exponential search then bisection on the monotone step -> epsilon map
    let mut hi: u64 = 1;
    while account_epsilon(config, hi)? <= target_epsilon {
        if hi >= 1 << 40 {
            return Ok(hi);
        }
        hi *= 2;
    }
    let mut lo = hi / 2; // feasible
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if account_epsilon(config, mid)? <= target_epsilon {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}
