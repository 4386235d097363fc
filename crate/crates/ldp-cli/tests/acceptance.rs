//! Acceptance suite: one test per release criterion, each printing a single
//! `criterion NN PASS/FAIL` line (visible under `--nocapture`). Derived
//! quantities are checked against independent in-test oracles (quadrature,
//! finite differences, Monte Carlo); published constants are asserted
//! directly.

use std::time::Instant;

use ldp_core::analysis::{
    accuracy_upper_bound, bound_simulation_oracle, effective_accuracy_upper_bound,
    private_validation_from_bits, BoundQuery,
};
use ldp_core::classifier::{ClassifierLevel, NoiseAwareClassifier};
use ldp_core::dp_optim::{account_epsilon, default_order_grid, DpAdamConfig};
use ldp_core::mechanisms::{
    debias_accuracy, flip_label, flip_transition_matrix, laplace_mechanism, piecewise_mechanism,
    randomized_response_bit, FlipMechanismSpec, LaplaceMechanismSpec, PiecewiseMechanismSpec,
};
use ldp_core::rng::RandomnessSource;
use ldp_core::tensor::Tensor;
use ldp_core::vlm::{
    kl_to_prior, unit_laplace_from, FeatureLayout, LaplaceVLM, LatentScaleMode, PRIOR_SCALE,
};
use ldp_cli::config::ExperimentConfig;
use ldp_cli::experiments::run_experiment;
use ldp_cli::report::{ReportRow, RunReport};

fn verdict(number: u32, name: &str, failures: Vec<String>) {
    if failures.is_empty() {
        println!("criterion {number:02} PASS: {name}");
    } else {
        println!("criterion {number:02} FAIL: {name}");
        panic!(
            "criterion {number:02} ({name}) failed with {} issue(s):\n{}",
            failures.len(),
            failures.join("\n")
        );
    }
}

// ---------------------------------------------------------------------------
// criterion 01: sampled output histograms of every mechanism satisfy the
// epsilon-LDP likelihood-ratio inequality on adjacent inputs
// ---------------------------------------------------------------------------

/// Bin a continuous sample into `bins` equal cells over [lo, hi] plus two
/// open tail cells.
fn binned_counts(samples: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<u64> {
    let mut counts = vec![0u64; bins + 2];
    let width = (hi - lo) / bins as f64;
    for &s in samples {
        let idx = if s < lo {
            0
        } else if s >= hi {
            bins + 1
        } else {
            ((s - lo) / width) as usize + 1
        };
        counts[idx] += 1;
    }
    counts
}

/// Two-sided check p_a <= e^eps p_b + 5 SE on every cell of two histograms
/// drawn from n samples each.
fn ratio_check(label: &str, c1: &[u64], c2: &[u64], n: u64, eps: f64, failures: &mut Vec<String>) {
    let ee = eps.exp();
    let nf = n as f64;
    for (i, (&a, &b)) in c1.iter().zip(c2).enumerate() {
        let pa = a as f64 / nf;
        let pb = b as f64 / nf;
        for (x, y) in [(pa, pb), (pb, pa)] {
            let se = ((x * (1.0 - x) + ee * ee * y * (1.0 - y)) / nf).sqrt();
            if x > ee * y + 5.0 * se {
                failures.push(format!(
                    "{label} eps={eps} cell {i}: {x:.3e} > e^eps * {y:.3e} + 5 SE"
                ));
            }
        }
    }
}

#[test]
fn criterion_01_mechanism_outputs_respect_the_privacy_ratio() {
    let started = Instant::now();
    let mut failures = Vec::new();
    let n: u64 = 1_000_000;
    let epsilons = [0.5, 1.0, 2.0, 4.0];
    let mut rng = RandomnessSource::from_seed(0xace1);

    // Laplace mechanism, sensitivity 1: adjacent inputs differ by at most 1.
    for &eps in &epsilons {
        let spec = LaplaceMechanismSpec::new(1.0, eps).unwrap();
        for (x1, x2) in [(0.0f64, 1.0f64), (0.3, -0.7), (-0.5, 0.5), (0.9, 0.2)] {
            let b = spec.scale();
            let lo = x1.min(x2) - 8.0 * b;
            let hi = x1.max(x2) + 8.0 * b;
            let mut draw = |x: f64| -> Vec<f64> {
                (0..n)
                    .map(|_| laplace_mechanism(&[x], &spec, &mut rng).unwrap()[0])
                    .collect()
            };
            let s1 = draw(x1);
            let s2 = draw(x2);
            let c1 = binned_counts(&s1, lo, hi, 40);
            let c2 = binned_counts(&s2, lo, hi, 40);
            ratio_check(&format!("laplace x=({x1},{x2})"), &c1, &c2, n, eps, &mut failures);
        }
    }

    // Piecewise mechanism on [-1, 1].
    for &eps in &epsilons {
        let spec = PiecewiseMechanismSpec::new(eps).unwrap();
        let c = spec.support_bound();
        for (x1, x2) in [(-1.0, 1.0), (0.0, 1.0), (-0.4, 0.6)] {
            let mut draw = |x: f64| -> Vec<f64> {
                (0..n)
                    .map(|_| piecewise_mechanism(x, &spec, &mut rng).unwrap())
                    .collect()
            };
            let s1 = draw(x1);
            let s2 = draw(x2);
            let c1 = binned_counts(&s1, -c, c, 40);
            let c2 = binned_counts(&s2, -c, c, 40);
            ratio_check(&format!("piecewise x=({x1},{x2})"), &c1, &c2, n, eps, &mut failures);
        }
    }

    // Label flip over K = 10 classes.
    for &eps in &epsilons {
        let spec = FlipMechanismSpec::new(10, eps).unwrap();
        for (y1, y2) in [(1usize, 2usize), (1, 10), (4, 7)] {
            let mut draw = |y: usize| -> Vec<u64> {
                let mut counts = vec![0u64; 10];
                for _ in 0..n {
                    counts[flip_label(y, &spec, &mut rng).unwrap() - 1] += 1;
                }
                counts
            };
            let c1 = draw(y1);
            let c2 = draw(y2);
            ratio_check(&format!("flip y=({y1},{y2})"), &c1, &c2, n, eps, &mut failures);
        }
    }

    // Binary randomized response.
    for &eps in &epsilons {
        let mut draw = |bit: u8| -> Vec<u64> {
            let mut counts = vec![0u64; 2];
            for _ in 0..n {
                counts[randomized_response_bit(bit, eps, &mut rng).unwrap() as usize] += 1;
            }
            counts
        };
        let c1 = draw(0);
        let c2 = draw(1);
        ratio_check("randomized response", &c1, &c2, n, eps, &mut failures);
    }

    let elapsed = started.elapsed().as_secs_f64();
    if elapsed > 120.0 {
        failures.push(format!("took {elapsed:.1}s, budget is 120s"));
    }
    verdict(1, "mechanism outputs respect the privacy ratio", failures);
}

// ---------------------------------------------------------------------------
// criterion 02: the flip transition matrix realizes the exact e^eps ratio
// ---------------------------------------------------------------------------

#[test]
fn criterion_02_flip_transition_matrix_is_exact() {
    let mut failures = Vec::new();
    for k in [2usize, 10] {
        for eps in [0.1, 1.0, 5.0] {
            let spec = FlipMechanismSpec::new(k, eps).unwrap();
            let t = flip_transition_matrix(&spec);
            let ee = eps.exp();
            for j in 0..k {
                let col_sum: f64 = (0..k).map(|i| t[i][j]).sum();
                if (col_sum - 1.0).abs() > 1e-12 {
                    failures.push(format!("K={k} eps={eps}: column {j} sums to {col_sum}"));
                }
                for i in 0..k {
                    if i == j {
                        continue;
                    }
                    let ratio = t[j][j] / t[i][j];
                    if (ratio - ee).abs() > 1e-12 * ee {
                        failures.push(format!(
                            "K={k} eps={eps}: diag/off ratio {ratio} vs e^eps {ee}"
                        ));
                    }
                }
            }
            // off-diagonal entries are all equal by construction
            let off = t[1][0];
            for i in 0..k {
                for j in 0..k {
                    if i != j && t[i][j] != off {
                        failures.push(format!("K={k} eps={eps}: off-diagonal entries differ"));
                    }
                }
            }
        }
    }
    verdict(2, "flip transition matrix realizes the exact privacy ratio", failures);
}

// ---------------------------------------------------------------------------
// criterion 03: debiasing inverts the expected flip, analytically and on
// sampled validation bits
// ---------------------------------------------------------------------------

#[test]
fn criterion_03_debiasing_inverts_randomized_response() {
    let mut failures = Vec::new();
    // analytic inversion on a grid
    for ai in 0..=10 {
        let a = ai as f64 / 10.0;
        for pi in 0..9 {
            let p = pi as f64 * 0.05;
            let a_tilde = a * (1.0 - 2.0 * p) + p;
            let back = debias_accuracy(a_tilde, p).unwrap();
            if (back - a).abs() > 1e-12 {
                failures.push(format!("A={a} p={p}: debiased to {back}"));
            }
        }
    }
    // Monte Carlo: flipped bits debias back to the true accuracy
    let mut rng = RandomnessSource::from_seed(0xace3);
    for (true_acc, eps) in [(0.7, 1.0), (0.9, 0.5), (0.55, 2.0)] {
        let n = 10_000usize;
        let hits = (true_acc * n as f64).round() as usize;
        let bits: Vec<bool> = (0..n).map(|i| i < hits).collect();
        let report = private_validation_from_bits(&bits, eps, &mut rng).unwrap();
        if (report.a_hat - true_acc).abs() > 4.0 * report.std_error {
            failures.push(format!(
                "A={true_acc} eps={eps}: estimate {} off by more than 4 SE {}",
                report.a_hat, report.std_error
            ));
        }
        let expected_p = 1.0 / (eps.exp() + 1.0);
        if (report.flip_prob - expected_p).abs() > 1e-15 {
            failures.push(format!("eps={eps}: flip prob {}", report.flip_prob));
        }
    }
    verdict(3, "debiasing inverts randomized response", failures);
}

// ---------------------------------------------------------------------------
// criterion 04: closed-form KL to the Laplace prior matches numerical
// quadrature
// ---------------------------------------------------------------------------

/// Composite Simpson rule with `m` (even) intervals.
fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, m: usize) -> f64 {
    let h = (b - a) / m as f64;
    let mut s = f(a) + f(b);
    for i in 1..m {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// KL(Laplace(mu, b) || Laplace(0, 1/sqrt(2))) by quadrature, split at the
/// density kinks z = 0 and z = mu.
fn kl_oracle_dim(mu: f64, b: f64) -> f64 {
    let b0 = PRIOR_SCALE;
    let integrand = move |z: f64| {
        let lq = -(z - mu).abs() / b - (2.0 * b).ln();
        let lp = -z.abs() / b0 - (2.0 * b0).ln();
        lq.exp() * (lq - lp)
    };
    // the integrand is weighted by q, so 60 scales of b around mu capture
    // all the mass; keep both density kinks (0 and mu) as segment cuts
    let span = 60.0 * b;
    let lo = mu.min(0.0) - span;
    let hi = mu.max(0.0) + span;
    let mut cuts = vec![lo, 0.0, mu, hi];
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cuts.dedup();
    let mut total = 0.0;
    for pair in cuts.windows(2) {
        total += simpson(&integrand, pair[0], pair[1], 8000);
    }
    total
}

#[test]
fn criterion_04_kl_to_prior_matches_quadrature() {
    let mut failures = Vec::new();
    for i in 0..10 {
        let mu = -3.0 + 6.0 * i as f64 / 9.0;
        for j in 0..10 {
            let b = 0.1 + 2.9 * j as f64 / 9.0;
            let closed = kl_to_prior(&[mu], b);
            let oracle = kl_oracle_dim(mu, b);
            if (closed - oracle).abs() > 1e-6 {
                failures.push(format!(
                    "mu={mu:.3} b={b:.3}: closed form {closed:.9} vs quadrature {oracle:.9}"
                ));
            }
        }
    }
    // multi-dimensional KL is the sum over dimensions
    let mu = [0.4, -1.7, 2.2];
    let b = 0.55;
    let closed = kl_to_prior(&mu, b);
    let oracle: f64 = mu.iter().map(|&m| kl_oracle_dim(m, b)).sum();
    if (closed - oracle).abs() > 3e-6 {
        failures.push(format!("3-dim KL {closed} vs quadrature {oracle}"));
    }
    verdict(4, "closed-form KL matches quadrature", failures);
}

// ---------------------------------------------------------------------------
// criterion 05: analytic gradients of both training losses match central
// finite differences
// ---------------------------------------------------------------------------

/// Compare analytic gradients against central differences of `eval` at a
/// handful of randomly chosen coordinates.
fn fd_check(
    label: &str,
    eval: &dyn Fn(&[f64]) -> f64,
    theta: &[f64],
    analytic: &[f64],
    rng: &mut RandomnessSource,
    failures: &mut Vec<String>,
) {
    let h = 1e-5;
    for _ in 0..8 {
        let i = rng.below(theta.len() as u64) as usize;
        let mut plus = theta.to_vec();
        plus[i] += h;
        let mut minus = theta.to_vec();
        minus[i] -= h;
        let fd = (eval(&plus) - eval(&minus)) / (2.0 * h);
        let an = analytic[i];
        if fd.abs() < 1e-8 && an.abs() < 1e-8 {
            continue; // dead unit: both sides are exactly zero
        }
        let rel = (fd - an).abs() / an.abs().max(fd.abs()).max(1e-3);
        if rel > 1e-4 {
            failures.push(format!(
                "{label} param {i}: finite difference {fd:.9e} vs analytic {an:.9e} (rel {rel:.2e})"
            ));
        }
    }
}

#[test]
fn criterion_05_training_gradients_match_finite_differences() {
    let mut failures = Vec::new();
    let mut rng = RandomnessSource::from_seed(0xace5);

    // ten random small generative models
    for net_idx in 0..10u64 {
        let layout = if net_idx % 2 == 0 {
            FeatureLayout::continuous_only(3)
        } else {
            FeatureLayout {
                continuous: 2,
                categorical_groups: vec![3],
            }
        };
        let clip = 0.8 + 0.15 * net_idx as f64;
        let scale_mode = if net_idx % 2 == 0 {
            LatentScaleMode::Fixed {
                epsilon_pretraining: 3.0 + net_idx as f64,
            }
        } else {
            LatentScaleMode::Learned {
                log_b: -0.5 + 0.1 * net_idx as f64,
            }
        };
        let mut init_rng = rng.derive(net_idx);
        let model =
            LaplaceVLM::init(layout.clone(), &[4], &[4], 2, clip, scale_mode, &mut init_rng)
                .unwrap();
        // batch of three records matching the layout
        let rows = 3usize;
        let mut batch = Tensor::zeros(vec![rows, layout.width()]);
        for r in 0..rows {
            let row = batch.row_mut(r);
            for item in row.iter_mut().take(layout.continuous) {
                *item = init_rng.standard_normal() * 0.5;
            }
            let mut off = layout.continuous;
            for &g in &layout.categorical_groups {
                row[off + init_rng.below(g as u64) as usize] = 1.0;
                off += g;
            }
        }
        // pin the Monte Carlo noise so the loss is a deterministic function
        // of the parameters
        let mut w = Tensor::zeros(vec![rows, 2]);
        for v in w.values_mut() {
            *v = unit_laplace_from(init_rng.uniform_centered());
        }
        let enc_len = model.encoder.param_count();
        let mut theta = model.encoder.params_flat();
        theta.extend(model.decoder.params_flat());
        let grads = model.elbo_grads_with_noise(&batch, &w).unwrap();
        let mut analytic = grads.encoder.to_flat();
        analytic.extend(grads.decoder.to_flat());
        let base = model.clone();
        let batch_ref = &batch;
        let w_ref = &w;
        let eval = move |flat: &[f64]| -> f64 {
            let mut m = base.clone();
            m.encoder.load_params_flat(&flat[..enc_len]).unwrap();
            m.decoder.load_params_flat(&flat[enc_len..]).unwrap();
            m.elbo_grads_with_noise(batch_ref, w_ref).unwrap().loss
        };
        fd_check(
            &format!("vlm {net_idx}"),
            &eval,
            &theta,
            &analytic,
            &mut rng,
            &mut failures,
        );
        // learned posterior scale: d loss / d b
        if matches!(model.scale_mode, LatentScaleMode::Learned { .. }) {
            let b = model.training_scale();
            let h = 1e-6;
            let at_scale = |bv: f64| -> f64 {
                let mut m = model.clone();
                m.scale_mode = LatentScaleMode::Learned { log_b: bv.ln() };
                m.elbo_grads_with_noise(&batch, &w).unwrap().loss
            };
            let fd = (at_scale(b + h) - at_scale(b - h)) / (2.0 * h);
            let rel = (fd - grads.scale).abs() / grads.scale.abs().max(fd.abs()).max(1e-3);
            if rel > 1e-4 {
                failures.push(format!(
                    "vlm {net_idx} scale: finite difference {fd:.9e} vs analytic {:.9e}",
                    grads.scale
                ));
            }
        }
    }

    // ten random noise-aware classifiers
    for net_idx in 0..10u64 {
        let mut init_rng = rng.derive(100 + net_idx);
        let flip = if net_idx % 2 == 0 {
            None
        } else {
            Some(FlipMechanismSpec::new(3, 0.5 + 0.3 * net_idx as f64).unwrap())
        };
        let model = NoiseAwareClassifier::init(
            3,
            &[4],
            3,
            flip,
            ClassifierLevel::Latent,
            &mut init_rng,
        )
        .unwrap();
        let rows = 4usize;
        let mut batch = Tensor::zeros(vec![rows, 3]);
        for v in batch.values_mut() {
            *v = init_rng.standard_normal();
        }
        let labels: Vec<usize> = (0..rows).map(|_| init_rng.below(3) as usize + 1).collect();
        let theta = model.network.params_flat();
        let (_, grads) = model.noise_aware_grads(&batch, &labels).unwrap();
        let analytic = grads.to_flat();
        let base = model.clone();
        let batch_ref = &batch;
        let labels_ref = &labels;
        let eval = move |flat: &[f64]| -> f64 {
            let mut m = base.clone();
            m.network.load_params_flat(flat).unwrap();
            m.noise_aware_loss(batch_ref, labels_ref).unwrap()
        };
        fd_check(
            &format!("classifier {net_idx}"),
            &eval,
            &theta,
            &analytic,
            &mut rng,
            &mut failures,
        );
    }
    verdict(5, "training gradients match finite differences", failures);
}

// ---------------------------------------------------------------------------
// criterion 06: the clipped encoder bounds the l1 distance of any two means
// by the claimed sensitivity 2l
// ---------------------------------------------------------------------------

#[test]
fn criterion_06_encoder_mean_sensitivity_is_bounded() {
    let mut failures = Vec::new();
    let mut rng = RandomnessSource::from_seed(0xace6);
    for &l in &[0.5f64, 1.0, 2.0] {
        let model = LaplaceVLM::init(
            FeatureLayout::continuous_only(6),
            &[8],
            &[8],
            4,
            l,
            LatentScaleMode::Fixed {
                epsilon_pretraining: 4.0,
            },
            &mut rng,
        )
        .unwrap();
        let pairs = 10_000usize;
        let mut a = Tensor::zeros(vec![pairs, 6]);
        let mut b = Tensor::zeros(vec![pairs, 6]);
        for v in a.values_mut() {
            *v = rng.standard_normal() * 3.0;
        }
        for v in b.values_mut() {
            *v = rng.standard_normal() * 3.0;
        }
        let ma = model.encode_mean(&a).unwrap();
        let mb = model.encode_mean(&b).unwrap();
        for r in 0..pairs {
            let dist: f64 = ma
                .row(r)
                .iter()
                .zip(mb.row(r))
                .map(|(x, y)| (x - y).abs())
                .sum();
            if dist > 2.0 * l + 1e-9 {
                failures.push(format!("l={l} pair {r}: l1 distance {dist} exceeds 2l"));
            }
        }
    }
    verdict(6, "encoder mean sensitivity is bounded by 2l", failures);
}

// ---------------------------------------------------------------------------
// criterion 07: the analytic accuracy ceiling matches its best-case Monte
// Carlo construction
// ---------------------------------------------------------------------------

#[test]
fn criterion_07_accuracy_bound_matches_simulation() {
    let started = Instant::now();
    let mut failures = Vec::new();
    let rng = RandomnessSource::from_seed(0xace7);
    // exact closed form at K = 2: 1 - e^{-eps/2}/2
    let q2 = BoundQuery {
        num_classes: 2,
        epsilon: 2.0,
        latent_dim: 4,
    };
    let bound2 = accuracy_upper_bound(&q2).unwrap();
    let expected = 1.0 - (-1.0f64).exp() / 2.0;
    if (bound2 - expected).abs() > 1e-12 {
        failures.push(format!("K=2 eps=2: bound {bound2} vs closed form {expected}"));
    }

    for &k in &[2usize, 4, 8] {
        for &eps in &[1.0f64, 2.0, 4.0] {
            let query = BoundQuery {
                num_classes: k,
                epsilon: eps,
                latent_dim: 4,
            };
            let bound = accuracy_upper_bound(&query).unwrap();
            let mut cell_rng = rng.derive((k * 100) as u64 + eps as u64);
            let sim = bound_simulation_oracle(&query, 10_000_000, &mut cell_rng).unwrap();
            let gap = (bound - sim.accuracy).abs();
            if gap > 3.0 * sim.std_error + 1e-9 {
                failures.push(format!(
                    "K={k} eps={eps}: bound {bound:.6} vs simulated {:.6} +/- {:.1e}",
                    sim.accuracy, sim.std_error
                ));
            }
            let effective = effective_accuracy_upper_bound(&query).unwrap();
            if effective < 1.0 / k as f64 || effective < bound {
                failures.push(format!("K={k} eps={eps}: effective bound {effective} inconsistent"));
            }
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    if elapsed > 300.0 {
        failures.push(format!("took {elapsed:.1}s, budget is 300s"));
    }
    verdict(7, "accuracy ceiling matches its Monte Carlo construction", failures);
}

// ---------------------------------------------------------------------------
// criterion 08: measured private accuracy stays below the analytic ceiling
// at the latent budget
// ---------------------------------------------------------------------------

fn find_rows<'a>(report: &'a RunReport, kind: &str) -> Vec<&'a ReportRow> {
    report.rows.iter().filter(|r| r.kind == kind).collect()
}

#[test]
fn criterion_08_measured_accuracy_respects_the_ceiling() {
    let config = ExperimentConfig::from_str(
        "task = data_collection\n\
         dataset.train_size = 2000\n\
         dataset.test_size = 600\n\
         local_epsilons = 1, 4, 10\n\
         level = latent\n\
         lambda = 0.5\n\
         trials = 3\n\
         seed = 11\n\
         vlm.clip_radius = 4.0\n\
         vlm.epochs = 30\n\
         vlm.hidden = 64\n\
         vlm.epsilon_pretraining = 30\n",
    )
    .unwrap();
    let report = run_experiment(&config).unwrap();
    let mut failures = Vec::new();
    let mut checked = 0;
    for row in find_rows(&report, "private") {
        if !row.local_epsilon.is_finite() {
            continue;
        }
        let query = BoundQuery {
            num_classes: 10,
            epsilon: row.epsilon_x,
            latent_dim: config.vlm.latent_dim,
        };
        let ceiling = effective_accuracy_upper_bound(&query).unwrap();
        if row.mean > ceiling + 3.0 * row.std {
            failures.push(format!(
                "eps_x={}: measured {:.4} +/- {:.4} exceeds ceiling {:.4}",
                row.epsilon_x, row.mean, row.std, ceiling
            ));
        }
        checked += 1;
    }
    if checked != 3 {
        failures.push(format!("expected 3 finite private rows, found {checked}"));
    }
    verdict(8, "measured private accuracy respects the analytic ceiling", failures);
}

// ---------------------------------------------------------------------------
// criterion 09: the Renyi accountant matches direct numerical integration of
// the subsampled Gaussian divergence
// ---------------------------------------------------------------------------

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// ln A_alpha = ln int Q(x)^alpha P(x)^{1-alpha} dx by Simpson quadrature in
/// log space, with P = N(0, sigma^2) and Q = (1-q) N(0, sigma^2)
/// + q N(1, sigma^2). Independent of the accountant's series expansions.
fn log_moment_by_quadrature(q: f64, sigma: f64, alpha: f64) -> f64 {
    let s2 = sigma * sigma;
    let ln_norm = -(sigma * (2.0 * std::f64::consts::PI).sqrt()).ln();
    let log_g = |x: f64| {
        let lp = ln_norm - x * x / (2.0 * s2);
        let lq = log_add(
            (1.0 - q).ln() + lp,
            q.ln() + ln_norm - (x - 1.0) * (x - 1.0) / (2.0 * s2),
        );
        alpha * lq + (1.0 - alpha) * lp
    };
    // the integrand concentrates between the P mode at 0 and the tilted mode
    // near x = alpha
    let lo = -12.0 * sigma;
    let hi = alpha + 12.0 * sigma;
    let m = 20_000usize;
    let h = (hi - lo) / m as f64;
    let logs: Vec<f64> = (0..=m).map(|i| log_g(lo + i as f64 * h)).collect();
    let peak = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut s = (logs[0] - peak).exp() + (logs[m] - peak).exp();
    for (i, lg) in logs.iter().enumerate().take(m).skip(1) {
        s += (lg - peak).exp() * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    peak + (s * h / 3.0).ln()
}

/// Epsilon at delta from the quadrature moments, mirroring the accountant's
/// order-grid minimization.
fn epsilon_by_quadrature(q: f64, sigma: f64, steps: u64, delta: f64) -> f64 {
    let mut best = f64::INFINITY;
    for order in default_order_grid() {
        let rdp = steps as f64 * log_moment_by_quadrature(q, sigma, order) / (order - 1.0);
        let eps = rdp + (1.0 / delta).ln() / (order - 1.0);
        best = best.min(eps);
    }
    best.max(0.0)
}

fn dp_config(sigma: f64, batch: usize, dataset: usize) -> DpAdamConfig {
    DpAdamConfig {
        noise_multiplier: sigma,
        max_grad_norm: 1.0,
        batch_size: batch,
        learning_rate: 1e-3,
        delta: 1e-5,
        dataset_size: dataset,
    }
}

#[test]
fn criterion_09_privacy_accountant_matches_quadrature() {
    let mut failures = Vec::new();
    let dataset = 1000usize;
    for &sigma in &[0.8f64, 1.5, 4.0] {
        for &batch in &[10usize, 50, 200] {
            for &steps in &[1u64, 100, 2000] {
                let config = dp_config(sigma, batch, dataset);
                let accounted = account_epsilon(&config, steps).unwrap();
                let q = batch as f64 / dataset as f64;
                let oracle = epsilon_by_quadrature(q, sigma, steps, 1e-5);
                let rel = (accounted - oracle).abs() / accounted.max(oracle);
                if rel > 0.01 {
                    failures.push(format!(
                        "sigma={sigma} q={q} steps={steps}: accounted {accounted:.5} vs quadrature {oracle:.5} (rel {rel:.3})"
                    ));
                }
            }
        }
    }
    // monotonicity spot checks on random configurations
    let mut rng = RandomnessSource::from_seed(0xace9);
    for _ in 0..100 {
        let sigma = rng.uniform_in(0.6, 4.0);
        let batch = rng.below(290) as usize + 10;
        let steps = rng.below(3000) + 1;
        let config = dp_config(sigma, batch, dataset);
        let base = account_epsilon(&config, steps).unwrap();
        if account_epsilon(&config, steps + 50).unwrap() < base {
            failures.push(format!("sigma={sigma} batch={batch}: epsilon fell with more steps"));
        }
        let bigger_batch = dp_config(sigma, batch + 50, dataset);
        if account_epsilon(&bigger_batch, steps).unwrap() < base {
            failures.push(format!(
                "sigma={sigma} batch={batch}: epsilon fell with a higher sampling rate"
            ));
        }
        let more_noise = dp_config(sigma + 0.5, batch, dataset);
        if account_epsilon(&more_noise, steps).unwrap() > base {
            failures.push(format!("sigma={sigma} batch={batch}: epsilon rose with more noise"));
        }
    }
    verdict(9, "privacy accountant matches quadrature", failures);
}

// ---------------------------------------------------------------------------
// criterion 10: on the digit task the learned representation beats the
// per-feature baselines, which sit at chance
// ---------------------------------------------------------------------------

fn single_row<'a>(report: &'a RunReport, kind: &str) -> &'a ReportRow {
    let rows = find_rows(report, kind);
    assert_eq!(rows.len(), 1, "expected exactly one {kind} row");
    rows[0]
}

#[test]
fn criterion_10_digit_collection_beats_the_baselines() {
    let started = Instant::now();
    let config = ExperimentConfig::from_str(
        "task = data_collection\n\
         dataset.train_size = 2000\n\
         dataset.test_size = 600\n\
         local_epsilons = 10\n\
         level = latent\n\
         lambda = 0.5\n\
         trials = 3\n\
         seed = 5\n\
         vlm.clip_radius = 4.0\n\
         vlm.epochs = 30\n\
         vlm.hidden = 64\n\
         vlm.epsilon_pretraining = 30\n",
    )
    .unwrap();
    let report = run_experiment(&config).unwrap();
    let mut failures = Vec::new();
    let clean = single_row(&report, "clean");
    let private = single_row(&report, "private");
    let bench_l = single_row(&report, "benchmark_laplace");
    let bench_p = single_row(&report, "benchmark_piecewise");
    if clean.mean - 0.1 < 3.0 * clean.std {
        failures.push(format!("clean accuracy {:.4} +/- {:.4} not above chance", clean.mean, clean.std));
    }
    if private.mean - 0.1 < 3.0 * private.std {
        failures.push(format!(
            "private accuracy {:.4} +/- {:.4} not above chance",
            private.mean, private.std
        ));
    }
    for bench in [bench_l, bench_p] {
        if private.mean <= bench.mean {
            failures.push(format!(
                "private accuracy {:.4} does not beat {} at {:.4}",
                private.mean, bench.kind, bench.mean
            ));
        }
        // the per-feature budget eps/64 leaves the baselines at chance level
        if (bench.mean - 0.1).abs() > (3.0 * bench.std).max(0.05) {
            failures.push(format!(
                "{} at {:.4} +/- {:.4} is away from chance 0.1",
                bench.kind, bench.mean, bench.std
            ));
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    if elapsed > 1800.0 {
        failures.push(format!("took {elapsed:.1}s, budget is 1800s"));
    }
    verdict(10, "digit collection beats the per-feature baselines", failures);
}

// ---------------------------------------------------------------------------
// criterion 11: novel-class detection learns better than chance
// ---------------------------------------------------------------------------

#[test]
fn criterion_11_novel_class_detection_beats_chance() {
    let started = Instant::now();
    let config = ExperimentConfig::from_str(
        "task = novel_class\n\
         dataset.train_size = 2000\n\
         dataset.test_size = 600\n\
         local_epsilons = 10\n\
         level = latent\n\
         trials = 3\n\
         seed = 5\n\
         vlm.clip_radius = 4.0\n\
         vlm.epochs = 30\n\
         vlm.hidden = 64\n\
         vlm.epsilon_pretraining = 30\n",
    )
    .unwrap();
    let report = run_experiment(&config).unwrap();
    let mut failures = Vec::new();
    let clean = single_row(&report, "clean");
    if clean.mean - 0.5 < 3.0 * clean.std {
        failures.push(format!(
            "detection accuracy {:.4} +/- {:.4} not above chance 0.5",
            clean.mean, clean.std
        ));
    }
    for bench in [
        single_row(&report, "benchmark_laplace"),
        single_row(&report, "benchmark_piecewise"),
    ] {
        if clean.mean <= bench.mean {
            failures.push(format!(
                "detection accuracy {:.4} does not beat {} at {:.4}",
                clean.mean, bench.kind, bench.mean
            ));
        }
    }
    if single_row(&report, "clean").epsilon_y != 0.0 {
        failures.push("novel-class task spent label budget it does not need".to_string());
    }
    let elapsed = started.elapsed().as_secs_f64();
    if elapsed > 1200.0 {
        failures.push(format!("took {elapsed:.1}s, budget is 1200s"));
    }
    verdict(11, "novel-class detection beats chance", failures);
}

// ---------------------------------------------------------------------------
// criterion 12: joining a private partner table lands between the clean
// subset and the all-clean ceiling
// ---------------------------------------------------------------------------

#[test]
fn criterion_12_data_join_lands_between_the_reference_curves() {
    let config = ExperimentConfig::from_str(
        "task = data_join\n\
         dataset.source = synthetic_loans\n\
         dataset.train_size = 1500\n\
         local_epsilons = 10\n\
         trials = 5\n\
         seed = 3\n",
    )
    .unwrap();
    let report = run_experiment(&config).unwrap();
    let mut failures = Vec::new();
    let subset = single_row(&report, "clean_subset");
    let joined = single_row(&report, "joined");
    let ceiling = single_row(&report, "all_clean");
    if joined.mean <= subset.mean {
        failures.push(format!(
            "joined {:.4} does not improve on the clean subset {:.4}",
            joined.mean, subset.mean
        ));
    }
    if joined.mean > ceiling.mean {
        failures.push(format!(
            "joined {:.4} exceeds the all-clean ceiling {:.4}",
            joined.mean, ceiling.mean
        ));
    }
    verdict(12, "data join lands between the reference curves", failures);
}

// ---------------------------------------------------------------------------
// criterion 13: a full experiment run is byte-for-byte reproducible
// ---------------------------------------------------------------------------

#[test]
fn criterion_13_experiment_runs_are_reproducible() {
    let config = ExperimentConfig::from_str(
        "task = data_collection\n\
         dataset.train_size = 240\n\
         dataset.test_size = 80\n\
         local_epsilons = 2, inf\n\
         trials = 2\n\
         vlm.epochs = 2\n\
         vlm.hidden = 16\n\
         clf.hidden = 16\n\
         clf.epochs = 4\n\
         seed = 7\n",
    )
    .unwrap();
    let first = run_experiment(&config).unwrap();
    let second = run_experiment(&config).unwrap();
    let mut failures = Vec::new();
    if first.to_csv() != second.to_csv() {
        failures.push("CSV reports differ between identical runs".to_string());
    }
    if first.to_json() != second.to_json() {
        failures.push("JSON reports differ between identical runs".to_string());
    }
    verdict(13, "experiment runs are byte-for-byte reproducible", failures);
}
