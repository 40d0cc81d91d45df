//! Acceptance suite: one test per release criterion. Every test prints a
//! single `criterion N: PASS/FAIL` line (visible with `--nocapture`, or in
//! the failure output) and asserts the criterion with pinned tolerances.
//!
//! Known-red criteria are implemented faithfully and left failing with the
//! measured numbers in the assertion message rather than loosened:
//!   - criterion 3, second clause: the decompression map scales norms by
//!     roughly sqrt(d/k), so its squared operator norm sits near d/k and can
//!     never fall under the (1 + distortion)^2 target for d >> k.
//!   - criterion 5, first clause: the printed compatibility bound borrows the
//!     same optimistic operator-norm assumption; it holds on most but not all
//!     seeds. The step-by-step derivation evaluated with the measured norm
//!     holds everywhere (second clause, green).
//!   - criterion 7, last clause: the accountant's subsampling formula keeps
//!     residual min{2, .} terms, giving the composed epsilon a floor of about
//!     9.1 for the pinned configuration, just outside the [2, 9] band.

use fedrobust::accountant::{
    composed_epsilon, default_alpha_grid, gaussian_rdp, rdp_to_dp, subsampled_rdp_integer,
    BaseCurve, GaussianBase, RdpCurve,
};
use fedrobust::aggregate::{
    aggregate, compat_bound_chain, empirical_kappa, robust_compat_check, AggregationRule,
    AggregatorSpec,
};
use fedrobust::attack::{AttackKind, AttackSpec};
use fedrobust::data::generate_synthetic;
use fedrobust::dp::{privatize_batch, sensitivity_oracle, DpConfig};
use fedrobust::par;
use fedrobust::rng::SeededRng;
use fedrobust::sim::{train, Schedule, TrainConfig};
use fedrobust::sketch::SketchMatrix;
use fedrobust::tensor::{
    per_sample_gradients, sample_loss, LabeledExample, ModelSpec, ModelVector,
};

fn report(num: u32, name: &str, pass: bool, detail: &str) {
    let status = if pass { "PASS" } else { "FAIL" };
    let line = format!("criterion {num} ({name}): {status} — {detail}");
    println!("{line}");
    assert!(pass, "{line}");
}

/// Five fixed probe vectors spanning dense, sparse, constant, heavy-tailed,
/// and smooth-ramp mass profiles.
fn probe_vectors(d: usize) -> Vec<ModelVector> {
    let mut rng = SeededRng::new(11, 0);
    let gaussian = ModelVector((0..d).map(|_| rng.standard_normal()).collect());
    let heavy = ModelVector(
        (0..d)
            .map(|_| {
                let z = rng.standard_normal();
                z * z * z
            })
            .collect(),
    );
    let sparse = ModelVector(
        (0..d)
            .map(|i| {
                if i % 100 == 0 {
                    if (i / 100) % 2 == 0 {
                        1.0
                    } else {
                        -1.0
                    }
                } else {
                    0.0
                }
            })
            .collect(),
    );
    let ones = ModelVector(vec![1.0; d]);
    let ramp = ModelVector((0..d).map(|i| i as f64 / d as f64 - 0.5).collect());
    vec![gaussian, sparse, ones, heavy, ramp]
}

#[test]
fn criterion_01_sketch_norm_unbiasedness() {
    let (d, k, p, sketches) = (10_000usize, 1_000usize, 10usize, 10_000u64);
    let vectors = probe_vectors(d);
    let sums: Vec<Vec<f64>> = par::map((0..sketches).collect(), |seed| {
        let sketch = SketchMatrix::new(d, k, p, seed).unwrap();
        vectors
            .iter()
            .map(|v| {
                let c = sketch.compress(v);
                c.as_slice().iter().map(|x| x * x).sum::<f64>()
            })
            .collect()
    });
    let mut detail = String::new();
    let mut pass = true;
    for (j, v) in vectors.iter().enumerate() {
        let target = v.l2_norm().powi(2);
        let mean = sums.iter().map(|s| s[j]).sum::<f64>() / sketches as f64;
        let rel = (mean - target).abs() / target;
        if rel > 0.01 {
            pass = false;
        }
        detail.push_str(&format!("v{j} rel err {rel:.2e}; "));
    }
    report(1, "sketch norm unbiasedness", pass, &detail);
}

#[test]
fn criterion_02_decompression_error_band() {
    let (d, k, p, sketches) = (10_000usize, 1_000usize, 10usize, 10_000u64);
    let vectors = probe_vectors(d);
    let sums: Vec<Vec<f64>> = par::map((0..sketches).collect(), |seed| {
        let sketch = SketchMatrix::new(d, k, p, seed).unwrap();
        vectors
            .iter()
            .map(|v| sketch.round_trip(v).sub(v).l2_norm().powi(2))
            .collect()
    });
    let ratio_bound = 3.0 * d as f64 / k as f64;
    let ratio_floor = 0.5 * d as f64 / k as f64;
    let mut detail = String::new();
    let mut pass = true;
    for (j, v) in vectors.iter().enumerate() {
        let norm_sq = v.l2_norm().powi(2);
        let mean = sums.iter().map(|s| s[j]).sum::<f64>() / sketches as f64;
        let ratio = mean / norm_sq;
        if !(ratio_floor..=ratio_bound).contains(&ratio) {
            pass = false;
        }
        detail.push_str(&format!("v{j} ratio {ratio:.3}; "));
    }
    report(
        2,
        "decompression error band",
        pass,
        &format!("bounds [{ratio_floor}, {ratio_bound}]: {detail}"),
    );
}

/// Cyclic Jacobi eigenvalue sweep for a dense symmetric matrix; the oracle
/// path against which power iteration is checked.
fn jacobi_max_eigenvalue(mut a: Vec<Vec<f64>>) -> f64 {
    let n = a.len();
    for _sweep in 0..200 {
        let off: f64 = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-24 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[p][q].abs() < 1e-18 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for i in 0..n {
                    let (aip, aiq) = (a[i][p], a[i][q]);
                    a[i][p] = c * aip - s * aiq;
                    a[i][q] = s * aip + c * aiq;
                }
                for i in 0..n {
                    let (api, aqi) = (a[p][i], a[q][i]);
                    a[p][i] = c * api - s * aqi;
                    a[q][i] = s * api + c * aqi;
                }
            }
        }
    }
    (0..n).map(|i| a[i][i]).fold(f64::NEG_INFINITY, f64::max)
}

#[test]
fn criterion_03_spectral_norm() {
    // Part A: power iteration against a dense Jacobi eigen-oracle at small d.
    let shapes = [(8usize, 4usize, 2usize), (16, 8, 2), (24, 12, 3), (32, 16, 4), (32, 8, 2)];
    let mut max_gap: f64 = 0.0;
    for seed in 0..50u64 {
        let (d, k, p) = shapes[seed as usize % shapes.len()];
        let sketch = SketchMatrix::new(d, k, p, seed).unwrap();
        let mut rng = SeededRng::new(seed, 77);
        let power = sketch.spectral_norm_sq(20_000, &mut rng);
        let rows = sketch.to_dense();
        let mut gram = vec![vec![0.0; d]; d];
        for row in &rows {
            for i in 0..d {
                if row[i] == 0.0 {
                    continue;
                }
                for j in 0..d {
                    gram[i][j] += row[i] * row[j];
                }
            }
        }
        let oracle = jacobi_max_eigenvalue(gram);
        max_gap = max_gap.max((power - oracle).abs());
    }
    let part_a = max_gap <= 1e-6;

    // Part B: at d = 10^4, k = 10^3 the squared norm must sit under
    // (1 + distortion)^2 on at least 95 of 100 seeds.
    let (d, k, p) = (10_000usize, 1_000usize, 10usize);
    let vectors = probe_vectors(d);
    let outcomes: Vec<(f64, f64)> = par::map((0..100u64).collect(), |seed| {
        let sketch = SketchMatrix::new(d, k, p, seed).unwrap();
        let mut rng = SeededRng::new(seed, 78);
        let lam = sketch.spectral_norm_sq(50, &mut rng);
        let eps = sketch.distortion_scan(&vectors);
        (lam, (1.0 + eps) * (1.0 + eps))
    });
    let within = outcomes.iter().filter(|(lam, cap)| lam <= cap).count();
    let mean_lam = outcomes.iter().map(|(l, _)| l).sum::<f64>() / outcomes.len() as f64;
    let mean_cap = outcomes.iter().map(|(_, c)| c).sum::<f64>() / outcomes.len() as f64;
    let part_b = within >= 95;

    report(
        3,
        "spectral norm",
        part_a && part_b,
        &format!(
            "oracle gap {max_gap:.2e} (<= 1e-6: {part_a}); large-d norm under cap on \
             {within}/100 seeds (mean norm^2 {mean_lam:.2}, mean cap {mean_cap:.3}) — the \
             squared norm concentrates near d/k = {}, so the cap is structurally \
             unreachable at this compression",
            d / k
        ),
    );
}

#[test]
fn criterion_04_robustness_certification() {
    let (n, b, d) = (7usize, 2usize, 5usize);
    let mut checked = 0usize;
    for rule in [
        AggregationRule::Krum,
        AggregationRule::TrimmedMean,
        AggregationRule::Median,
    ] {
        for nnm in [false, true] {
            let spec = AggregatorSpec::new(rule, b, nnm);
            for instance in 0..100u64 {
                let mut rng = SeededRng::new(instance, 500 + nnm as u64);
                let vectors: Vec<Vec<f64>> = (0..n)
                    .map(|_| (0..d).map(|_| rng.standard_normal()).collect())
                    .collect();
                let cert = empirical_kappa(&spec, &vectors, b).unwrap();
                assert!(
                    cert.empirical_kappa.is_finite() && !cert.degenerate,
                    "{rule:?} nnm={nnm} instance {instance}: kappa not finite"
                );

                // independent re-verification: enumerate (n-b)-subsets by
                // bitmask and recheck the deviation-to-spread inequality
                let output = aggregate(&spec, &vectors).unwrap();
                for mask in 0u32..(1 << n) {
                    if mask.count_ones() as usize != n - b {
                        continue;
                    }
                    let subset: Vec<usize> =
                        (0..n).filter(|i| mask & (1 << i) != 0).collect();
                    let mut mean = vec![0.0; d];
                    for &i in &subset {
                        for (m, v) in mean.iter_mut().zip(&vectors[i]) {
                            *m += v / subset.len() as f64;
                        }
                    }
                    let spread: f64 = subset
                        .iter()
                        .map(|&i| {
                            vectors[i]
                                .iter()
                                .zip(&mean)
                                .map(|(v, m)| (v - m) * (v - m))
                                .sum::<f64>()
                        })
                        .sum::<f64>()
                        / subset.len() as f64;
                    let deviation: f64 = output
                        .iter()
                        .zip(&mean)
                        .map(|(o, m)| (o - m) * (o - m))
                        .sum();
                    assert!(
                        deviation <= cert.empirical_kappa * spread * (1.0 + 1e-9) + 1e-12,
                        "{rule:?} nnm={nnm} instance {instance}: certified kappa violated \
                         on subset {subset:?}"
                    );
                    checked += 1;
                }
            }
        }
    }
    report(
        4,
        "robustness certification",
        true,
        &format!("600 instances certified, {checked} subset inequalities re-verified"),
    );
}

#[test]
fn criterion_05_robust_compatibility() {
    let (n, b, d, k, p) = (7usize, 2usize, 64usize, 32usize, 2usize);
    let mut detail = String::new();
    let mut all_hold = true;
    let mut chain_ok = 0usize;
    let mut chains = 0usize;
    for rule in [
        AggregationRule::Krum,
        AggregationRule::TrimmedMean,
        AggregationRule::Median,
    ] {
        let spec = AggregatorSpec::new(rule, b, false);
        let mut holds = 0usize;
        for seed in 0..100u64 {
            let sketch = SketchMatrix::new(d, k, p, seed).unwrap();
            let mut rng = SeededRng::new(seed, 3);
            let vectors: Vec<ModelVector> = (0..n)
                .map(|_| ModelVector((0..d).map(|_| rng.standard_normal()).collect()))
                .collect();
            let rep = robust_compat_check(&spec, &sketch, &vectors, b).unwrap();
            if rep.holds {
                holds += 1;
            }

            // step-by-step derivation with the measured operator norm of the
            // concrete sketch: every intermediate inequality must hold
            let lam = sketch.spectral_norm_sq(300, &mut rng);
            for offset in 0..3usize {
                let subset: Vec<usize> = (0..n).filter(|&i| i != offset && i != offset + 1).collect();
                let chain =
                    compat_bound_chain(&spec, &sketch, &vectors, b, &subset, lam).unwrap();
                chains += 1;
                if chain.monotone() {
                    chain_ok += 1;
                }
            }
        }
        if holds < 100 {
            all_hold = false;
        }
        detail.push_str(&format!("{rule:?} bound holds {holds}/100; "));
    }
    let chain_pass = chain_ok == chains;
    report(
        5,
        "robust compatibility",
        all_hold && chain_pass,
        &format!(
            "{detail}derivation chain {chain_ok}/{chains} — the additive bound assumes an \
             operator norm near 1 + distortion, which the sketch at k = d/2 does not have, \
             so some seeds exceed it; each derivation step holds with the measured norm"
        ),
    );
}

#[test]
fn criterion_06_sensitivity() {
    let model = ModelSpec::logistic(16, 4);
    let params = ModelVector::zeros(model.parameter_count());
    let dataset = generate_synthetic(4, 16, 50, 8.0, 7).unwrap();
    let cfg = DpConfig::from_noise_multiplier(1.0, 1.0, 32, dataset.len()).unwrap();
    let bound = cfg.sensitivity();

    let mut rng = SeededRng::new(21, 0);
    let observed = sensitivity_oracle(&model, &params, &dataset, &cfg, 10_000, &mut rng).unwrap();
    let never_exceeds = observed <= bound * (1.0 + 1e-12);

    // worst case: at zero weights the per-sample gradient of (x, label) and
    // (-x, label) are exact negatives; with |x| large both clip to the full
    // clip norm, so swapping one sample moves the mean by exactly 2C/batch
    let noiseless = DpConfig {
        noise_scale: 0.0,
        ..cfg
    };
    let mut x = vec![0.0; 16];
    x[0] = 40.0;
    let pos = LabeledExample {
        features: x.clone(),
        label: 0,
    };
    let neg = LabeledExample {
        features: x.iter().map(|v| -v).collect(),
        label: 0,
    };
    let batch: Vec<LabeledExample> = vec![pos.clone(); 32];
    let mut adjacent = batch.clone();
    adjacent[0] = neg;
    let g = privatize_batch(
        &per_sample_gradients(&model, &params, &batch).unwrap(),
        &noiseless,
        &mut rng,
    )
    .unwrap();
    let g_adj = privatize_batch(
        &per_sample_gradients(&model, &params, &adjacent).unwrap(),
        &noiseless,
        &mut rng,
    )
    .unwrap();
    let achieved = g.sub(&g_adj).l2_norm();
    let tight = achieved >= 0.99 * bound;

    report(
        6,
        "sensitivity",
        never_exceeds && tight,
        &format!(
            "bound {bound:.6}, oracle max over 10^4 pairs {observed:.6}, \
             constructed worst case {achieved:.6}"
        ),
    );
}

/// Direct term-by-term evaluation of the amplification series with exact
/// binomials, no log-space tricks: the oracle for `subsampled_rdp_integer`.
fn subsampled_oracle(alpha: u64, q: f64, base: &GaussianBase) -> f64 {
    let binom = |n: u64, k: u64| -> f64 {
        let mut acc = 1.0f64;
        for i in 0..k {
            acc = acc * (n - i) as f64 / (i + 1) as f64;
        }
        acc
    };
    let eps2 = base.eps(2.0);
    // order-infinity epsilon is infinite for the Gaussian base, so the
    // min{., .} residual factors saturate at 2
    let coef2 = (4.0 * (eps2.exp() - 1.0)).min(eps2.exp() * 2.0);
    let mut total = 1.0 + q * q * binom(alpha, 2) * coef2;
    for i in 3..=alpha {
        let eps_i = base.eps(i as f64);
        total += q.powi(i as i32) * binom(alpha, i) * ((i - 1) as f64 * eps_i).exp() * 2.0;
    }
    total.ln() / (alpha as f64 - 1.0)
}

#[test]
fn criterion_07_accountant() {
    // closed form of the Gaussian mechanism
    let mut closed_form_ok = true;
    for &alpha in &[1.5f64, 2.0, 4.0, 16.0, 64.0] {
        for &(sens, sigma) in &[(1.0f64, 1.0f64), (0.5, 2.0), (2.0 / 60.0, 1.0 / 30.0)] {
            let got = gaussian_rdp(alpha, sens, sigma);
            let want = sens * sens * alpha / (2.0 * sigma * sigma);
            if (got - want).abs() > 1e-15 * want {
                closed_form_ok = false;
            }
        }
    }

    // amplified integer orders against the direct-summation oracle
    let mut max_rel: f64 = 0.0;
    let mut grid_points = 0;
    for &q in &[0.01f64, 0.05, 0.25] {
        for &alpha in &[2u64, 3, 5, 8, 16] {
            let sigma = if alpha % 2 == 0 { 1.5 } else { 3.0 };
            let base = GaussianBase {
                sensitivity: 1.0,
                sigma,
            };
            let got = subsampled_rdp_integer(alpha, q, &base).unwrap();
            let want = subsampled_oracle(alpha, q, &base);
            max_rel = max_rel.max((got - want).abs() / want.abs());
            grid_points += 1;
        }
    }
    for &(q, alpha, sigma) in &[
        (0.1f64, 4u64, 2.0f64),
        (0.1, 12, 2.0),
        (0.5, 6, 1.5),
        (0.02, 32, 4.0),
        (0.3, 10, 2.5),
    ] {
        let base = GaussianBase {
            sensitivity: 1.0,
            sigma,
        };
        let got = subsampled_rdp_integer(alpha, q, &base).unwrap();
        let want = subsampled_oracle(alpha, q, &base);
        max_rel = max_rel.max((got - want).abs() / want.abs());
        grid_points += 1;
    }
    let oracle_ok = max_rel <= 1e-12 && grid_points == 20;

    // conversion: grid minimization against an explicit exhaustive search
    let orders = default_alpha_grid();
    let epsilons: Vec<f64> = orders.iter().map(|&a| 0.02 * a).collect();
    let curve = RdpCurve::new(orders.clone(), epsilons.clone()).unwrap();
    let (eps, order) = rdp_to_dp(&curve, 1e-5);
    let exhaustive = orders
        .iter()
        .zip(&epsilons)
        .map(|(&a, &e)| (e + (1e5f64).ln() / (a - 1.0), a))
        .fold((f64::INFINITY, 0.0), |best, cand| {
            if cand.0 < best.0 {
                cand
            } else {
                best
            }
        });
    let conversion_ok = (eps - exhaustive.0).abs() <= 1e-12 && order == exhaustive.1;

    // consistency band for the pinned configuration: noise multiplier 1,
    // 2000 rounds, batch 60 of 4000 per user, delta = 1e-5
    let cfg = DpConfig::from_noise_multiplier(1.0, 1.0, 60, 4000).unwrap();
    let q = 60.0 / 4000.0;
    let (band_eps, band_order) = composed_epsilon(
        cfg.sensitivity(),
        cfg.noise_scale,
        q,
        2000,
        1e-5,
        &default_alpha_grid(),
    )
    .unwrap();
    let band_ok = (2.0..=9.0).contains(&band_eps);

    report(
        7,
        "accountant",
        closed_form_ok && oracle_ok && conversion_ok && band_ok,
        &format!(
            "closed form {closed_form_ok}; oracle max rel {max_rel:.2e} over {grid_points} \
             points; conversion {conversion_ok}; composed epsilon {band_eps:.4} at order \
             {band_order} vs band [2, 9] — the amplification formula's residual min{{2, .}} \
             terms put a floor just above the band for this configuration"
        ),
    );
}

#[test]
fn criterion_08_gradient_fidelity() {
    let mut max_rel: f64 = 0.0;
    for (arch_name, model) in [
        ("logistic", ModelSpec::logistic(6, 4)),
        ("mlp2", ModelSpec::mlp2(5, 6, 3)),
    ] {
        let d = model.parameter_count();
        for instance in 0..100u64 {
            let mut rng = SeededRng::new(instance, 900);
            let params =
                ModelVector((0..d).map(|_| 0.5 * rng.standard_normal()).collect());
            let example = LabeledExample {
                features: (0..model.input_dim).map(|_| rng.standard_normal()).collect(),
                label: rng.below(model.num_classes),
            };
            let analytic =
                &per_sample_gradients(&model, &params, std::slice::from_ref(&example)).unwrap()[0];
            let h = 1e-5;
            let mut fd = vec![0.0; d];
            for j in 0..d {
                let mut plus = params.clone();
                plus.0[j] += h;
                let mut minus = params.clone();
                minus.0[j] -= h;
                fd[j] = (sample_loss(&model, &plus, &example)
                    - sample_loss(&model, &minus, &example))
                    / (2.0 * h);
            }
            let diff = analytic.sub(&ModelVector(fd)).l2_norm();
            let rel = diff / (1.0 + analytic.l2_norm());
            max_rel = max_rel.max(rel);
            assert!(
                rel <= 1e-4,
                "{arch_name} instance {instance}: finite-difference gap {rel:.2e}"
            );
        }
    }
    report(
        8,
        "gradient fidelity",
        true,
        &format!("200 instances, max relative finite-difference gap {max_rel:.2e}"),
    );
}

// ---------------------------------------------------------------------------
// End-to-end robustness trend
// ---------------------------------------------------------------------------

const E2E_SEEDS: [u64; 3] = [0, 1, 2];
const E2E_LR: f64 = 0.25;

fn e2e_data() -> (Vec<LabeledExample>, Vec<LabeledExample>) {
    let all = generate_synthetic(10, 64, 200, 10.0, 42).unwrap();
    let mut train_set = Vec::new();
    let mut eval_set = Vec::new();
    for (i, ex) in all.into_iter().enumerate() {
        if i % 200 < 160 {
            train_set.push(ex);
        } else {
            eval_set.push(ex);
        }
    }
    (train_set, eval_set)
}

fn e2e_config(
    seed: u64,
    rule: AggregationRule,
    agg_b: usize,
    sim_b: usize,
    attack: AttackSpec,
    rate: usize,
) -> TrainConfig {
    TrainConfig {
        n_users: 15,
        byzantine_count: sim_b,
        rounds: 500,
        local_steps: 1,
        global_lr: Schedule::constant(E2E_LR),
        momentum_beta: Schedule::constant(0.9),
        batch_size: 32,
        partition_concentration: 0.5,
        model: ModelSpec::logistic(64, 10),
        dp: Some(DpConfig::from_noise_multiplier(1.0, 0.1, 32, 106).unwrap()),
        aggregator: AggregatorSpec::new(rule, agg_b, agg_b > 0),
        attack,
        compression_rate: rate,
        sketch_blocks: 5,
        seed,
        eval_every: 500,
        attack_pre_compression: false,
    }
}

fn e2e_attacks() -> Vec<(&'static str, AttackSpec)> {
    let mut sign_flip = AttackSpec::new(AttackKind::SignFlip);
    sign_flip.sign_flip_scale = 10.0;
    let mut foe = AttackSpec::new(AttackKind::Foe);
    foe.foe_epsilon = 4.0;
    vec![
        ("none", AttackSpec::new(AttackKind::None)),
        ("label_flip", AttackSpec::new(AttackKind::LabelFlip)),
        ("sign_flip", sign_flip),
        ("alie", AttackSpec::new(AttackKind::Alie)),
        ("min_max", AttackSpec::new(AttackKind::MinMax)),
        ("min_sum", AttackSpec::new(AttackKind::MinSum)),
        ("foe", foe),
    ]
}

/// Runs one config per seed, asserting the uplink payload size on every
/// transcript, and returns the mean final accuracy across seeds.
fn mean_accuracy(
    make: impl Fn(u64) -> TrainConfig,
    data: &(Vec<LabeledExample>, Vec<LabeledExample>),
) -> f64 {
    let mut total = 0.0;
    for &seed in &E2E_SEEDS {
        let cfg = make(seed);
        let k = SketchMatrix::dimension_for_rate(
            cfg.model.parameter_count(),
            cfg.compression_rate,
            cfg.sketch_blocks,
        )
        .unwrap();
        let result = train(&cfg, &data.0, &data.1).unwrap();
        for t in &result.transcripts {
            assert_eq!(
                t.uplink_floats_per_user, k,
                "round {}: uplink size drifted from k",
                t.round
            );
        }
        total += result.transcripts.last().unwrap().eval_accuracy.unwrap();
    }
    total / E2E_SEEDS.len() as f64
}

#[test]
fn criterion_09_end_to_end_robustness_trend() {
    let data = e2e_data();
    let attacks = e2e_attacks();
    let sign_flip = attacks[2].1.clone();
    let foe = attacks[6].1.clone();

    let baseline = mean_accuracy(
        |s| e2e_config(s, AggregationRule::TrimmedMean, 0, 0, AttackSpec::new(AttackKind::None), 10),
        &data,
    );
    // plain mean = trimmed mean with zero trim, facing 3 attackers
    let mean_under_sf = mean_accuracy(
        |s| e2e_config(s, AggregationRule::TrimmedMean, 0, 3, sign_flip.clone(), 10),
        &data,
    );
    let mean_under_foe = mean_accuracy(
        |s| e2e_config(s, AggregationRule::TrimmedMean, 0, 3, foe.clone(), 10),
        &data,
    );

    let rules = [
        AggregationRule::Krum,
        AggregationRule::TrimmedMean,
        AggregationRule::Median,
    ];
    let mut ordering_i = true;
    let mut ordering_ii = true;
    let mut worst: (f64, String) = (f64::INFINITY, String::new());
    let mut tm_alie_rate10 = 0.0;
    for rule in rules {
        for (name, attack) in &attacks {
            let acc = mean_accuracy(
                |s| e2e_config(s, rule, 3, 3, attack.clone(), 10),
                &data,
            );
            if acc < mean_under_sf + 0.03 || acc < mean_under_foe + 0.03 {
                ordering_i = false;
            }
            if acc < baseline - 0.15 {
                ordering_ii = false;
            }
            if acc < worst.0 {
                worst = (acc, format!("{rule:?}/{name}"));
            }
            if rule == AggregationRule::TrimmedMean && *name == "alie" {
                tm_alie_rate10 = acc;
            }
        }
    }
    let tm_alie_rate50 = mean_accuracy(
        |s| e2e_config(s, AggregationRule::TrimmedMean, 3, 3, AttackSpec::new(AttackKind::Alie), 50),
        &data,
    );
    let ordering_iii = tm_alie_rate50 <= tm_alie_rate10 + 0.01;

    report(
        9,
        "end-to-end robustness trend",
        ordering_i && ordering_ii && ordering_iii,
        &format!(
            "baseline {baseline:.3}; plain mean under sign_flip {mean_under_sf:.3} / foe \
             {mean_under_foe:.3}; worst robust cell {} at {:.3}; trimmed-mean alie rate 10 \
             {tm_alie_rate10:.3} vs rate 50 {tm_alie_rate50:.3}; orderings \
             (i) {ordering_i} (ii) {ordering_ii} (iii) {ordering_iii}",
            worst.1, worst.0
        ),
    );
}

#[test]
fn criterion_10_communication_accounting() {
    // payload formula across the grid of model sizes, rates, and block counts
    let mut checked = 0usize;
    for d in [650usize, 660, 1000, 2048, 10_000] {
        for rate in [2usize, 10, 50] {
            for p in [1usize, 2, 5, 10] {
                let want = (d / rate) - (d / rate) % p;
                match SketchMatrix::dimension_for_rate(d, rate, p) {
                    Ok(k) => {
                        assert_eq!(k, want, "d={d} rate={rate} p={p}");
                        assert_eq!(k % p, 0);
                        checked += 1;
                    }
                    Err(_) => assert_eq!(want, 0, "d={d} rate={rate} p={p}"),
                }
            }
        }
    }

    // a short simulated run reports exactly k floats on every round
    let data = e2e_data();
    let mut cfg = e2e_config(0, AggregationRule::Median, 3, 3, AttackSpec::new(AttackKind::Alie), 10);
    cfg.rounds = 20;
    cfg.eval_every = 5;
    let k = SketchMatrix::dimension_for_rate(650, 10, 5).unwrap();
    let result = train(&cfg, &data.0, &data.1).unwrap();
    let all_k = result
        .transcripts
        .iter()
        .all(|t| t.uplink_floats_per_user == k && t.submissions.iter().all(|s| s.len() == k));
    report(
        10,
        "communication accounting",
        all_k,
        &format!("{checked} grid shapes verified; 20-round run reports k = {k} floats/user"),
    );
}

#[test]
fn criterion_11_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let mut paths = Vec::new();
    for run_name in ["a", "b"] {
        let out = dir.path().join(run_name);
        let config = format!(
            r#"
schema_version = 1

[run]
seed = 3
rounds = 20
eval_every = 5
output_dir = "{}"

[data]
source = "synthetic"
num_classes = 4
input_dim = 8
samples_per_class = 60
margin = 8.0
data_seed = 1

[model]
architecture = "logistic"

[federation]
n_users = 5
byzantine_count = 1
batch_size = 8

[optimizer]
global_lr = [[0, 0.5]]

[dp]
clip_norm = 1.0
noise_multiplier = 0.5

[compression]
rate = 2
blocks = 2

[aggregator]
rule = "median"
nnm = true

[attack]
kind = "alie"
"#,
            out.display()
        );
        let cfg_path = dir.path().join(format!("{run_name}.toml"));
        std::fs::write(&cfg_path, config).unwrap();
        let status = std::process::Command::new(env!("CARGO_BIN_EXE_fedrobust"))
            .arg("run")
            .arg(&cfg_path)
            .status()
            .unwrap();
        assert!(status.success(), "run {run_name} failed");
        paths.push(out.join("metrics.csv"));
    }
    let first = std::fs::read(&paths[0]).unwrap();
    let second = std::fs::read(&paths[1]).unwrap();
    let identical = first == second;
    report(
        11,
        "determinism",
        identical,
        &format!("repeated run produced byte-identical metrics ({} bytes)", first.len()),
    );
}
