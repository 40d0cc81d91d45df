//! Robust-averaging aggregation rules (Krum, coordinate-wise trimmed mean,
//! coordinate-wise median), nearest-neighbor mixing, and brute-force
//! certification of the robustness coefficient by subset enumeration.

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::sketch::{CompressedVector, SketchMatrix};
use crate::tensor::ModelVector;
use itertools::Itertools;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationRule {
    Krum,
    TrimmedMean,
    Median,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregatorSpec {
    pub rule: AggregationRule,
    /// Assumed number of Byzantine inputs b; must satisfy b < n/2 at call time.
    pub byzantine_count: usize,
    pub nnm_enabled: bool,
}

impl AggregatorSpec {
    pub fn new(rule: AggregationRule, byzantine_count: usize, nnm_enabled: bool) -> Self {
        AggregatorSpec {
            rule,
            byzantine_count,
            nnm_enabled,
        }
    }
}

/// Tightest robustness coefficient observed on one instance, with the
/// subset attaining it. `degenerate` marks a zero-spread subset whose
/// aggregate strayed from the subset mean (the coefficient is unbounded
/// there).
#[derive(Debug, Clone)]
pub struct KappaCertificate {
    pub empirical_kappa: f64,
    pub worst_subset: Vec<usize>,
    pub degenerate: bool,
}

fn check_lengths(vectors: &[Vec<f64>]) -> Result<usize> {
    if vectors.is_empty() {
        return Err(Error::EmptyInput("aggregation input"));
    }
    let d = vectors[0].len();
    for v in vectors {
        if v.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: v.len(),
            });
        }
    }
    Ok(d)
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Krum: the input whose summed squared distance to its n-b-2 nearest other
/// inputs is smallest. Ties break toward the lowest index.
pub fn krum(vectors: &[Vec<f64>], byzantine_count: usize) -> Result<Vec<f64>> {
    check_lengths(vectors)?;
    let n = vectors.len();
    if n < byzantine_count + 3 {
        return Err(Error::Config(format!(
            "krum needs n >= b + 3, got n = {n}, b = {byzantine_count}"
        )));
    }
    let neighbors = n - byzantine_count - 2;
    let mut best: Option<(f64, usize)> = None;
    for i in 0..n {
        let mut dists: Vec<f64> = (0..n)
            .filter(|&j| j != i)
            .map(|j| squared_distance(&vectors[i], &vectors[j]))
            .collect();
        dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let score: f64 = dists[..neighbors].iter().sum();
        match best {
            Some((s, _)) if score >= s => {}
            _ => best = Some((score, i)),
        }
    }
    Ok(vectors[best.unwrap().1].clone())
}

/// Coordinate-wise trimmed mean: drop the b largest and b smallest per
/// coordinate, average the rest.
pub fn trimmed_mean(vectors: &[Vec<f64>], byzantine_count: usize) -> Result<Vec<f64>> {
    let d = check_lengths(vectors)?;
    let n = vectors.len();
    if n <= 2 * byzantine_count {
        return Err(Error::Config(format!(
            "trimmed mean needs n > 2b, got n = {n}, b = {byzantine_count}"
        )));
    }
    let keep = n - 2 * byzantine_count;
    let mut out = vec![0.0; d];
    let mut column = vec![0.0; n];
    for coord in 0..d {
        for (slot, v) in column.iter_mut().zip(vectors) {
            *slot = v[coord];
        }
        column.sort_by(|a, b| a.partial_cmp(b).unwrap());
        out[coord] = column[byzantine_count..byzantine_count + keep].iter().sum::<f64>()
            / keep as f64;
    }
    Ok(out)
}

/// Coordinate-wise median; even counts average the two central order
/// statistics.
pub fn coordinate_median(vectors: &[Vec<f64>]) -> Result<Vec<f64>> {
    let d = check_lengths(vectors)?;
    let n = vectors.len();
    let mut out = vec![0.0; d];
    let mut column = vec![0.0; n];
    for coord in 0..d {
        for (slot, v) in column.iter_mut().zip(vectors) {
            *slot = v[coord];
        }
        column.sort_by(|a, b| a.partial_cmp(b).unwrap());
        out[coord] = if n % 2 == 1 {
            column[n / 2]
        } else {
            0.5 * (column[n / 2 - 1] + column[n / 2])
        };
    }
    Ok(out)
}

/// Nearest-neighbor mixing: each vector is replaced by the mean of its n-b
/// nearest inputs (itself included). Ties break by index.
pub fn nnm_preprocess(vectors: &[Vec<f64>], byzantine_count: usize) -> Result<Vec<Vec<f64>>> {
    let d = check_lengths(vectors)?;
    let n = vectors.len();
    if n <= byzantine_count {
        return Err(Error::Config(format!(
            "nnm needs n > b, got n = {n}, b = {byzantine_count}"
        )));
    }
    let keep = n - byzantine_count;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            squared_distance(&vectors[i], &vectors[a])
                .partial_cmp(&squared_distance(&vectors[i], &vectors[b]))
                .unwrap()
                .then(a.cmp(&b))
        });
        let mut mixed = vec![0.0; d];
        for &j in &order[..keep] {
            for (m, v) in mixed.iter_mut().zip(&vectors[j]) {
                *m += v;
            }
        }
        for m in mixed.iter_mut() {
            *m /= keep as f64;
        }
        out.push(mixed);
    }
    Ok(out)
}

/// Dispatch: optional NNM preprocessing, then the configured rule.
pub fn aggregate(spec: &AggregatorSpec, vectors: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = vectors.len();
    if 2 * spec.byzantine_count >= n {
        return Err(Error::Config(format!(
            "need b < n/2, got n = {n}, b = {}",
            spec.byzantine_count
        )));
    }
    let preprocessed;
    let inputs: &[Vec<f64>] = if spec.nnm_enabled {
        preprocessed = nnm_preprocess(vectors, spec.byzantine_count)?;
        &preprocessed
    } else {
        vectors
    };
    match spec.rule {
        AggregationRule::Krum => krum(inputs, spec.byzantine_count),
        AggregationRule::TrimmedMean => trimmed_mean(inputs, spec.byzantine_count),
        AggregationRule::Median => coordinate_median(inputs),
    }
}

fn subset_mean(vectors: &[Vec<f64>], subset: &[usize]) -> Vec<f64> {
    let d = vectors[0].len();
    let mut mean = vec![0.0; d];
    for &i in subset {
        for (m, v) in mean.iter_mut().zip(&vectors[i]) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= subset.len() as f64;
    }
    mean
}

fn subset_spread(vectors: &[Vec<f64>], subset: &[usize], mean: &[f64]) -> f64 {
    subset
        .iter()
        .map(|&i| squared_distance(&vectors[i], mean))
        .sum::<f64>()
        / subset.len() as f64
}

/// Maximum cardinality for exhaustive subset enumeration.
pub const KAPPA_ENUMERATION_LIMIT: usize = 18;

fn kappa_over_subsets<I>(
    output: &[f64],
    vectors: &[Vec<f64>],
    subsets: I,
) -> KappaCertificate
where
    I: IntoIterator<Item = Vec<usize>>,
{
    let mut cert = KappaCertificate {
        empirical_kappa: 0.0,
        worst_subset: Vec::new(),
        degenerate: false,
    };
    for subset in subsets {
        let mean = subset_mean(vectors, &subset);
        let spread = subset_spread(vectors, &subset, &mean);
        let deviation = squared_distance(output, &mean);
        if spread == 0.0 {
            // zero-spread subset: 0/0 counts as 0, anything else is unbounded
            if deviation > 0.0 {
                cert.degenerate = true;
                cert.worst_subset = subset;
            }
            continue;
        }
        let ratio = deviation / spread;
        if ratio > cert.empirical_kappa {
            cert.empirical_kappa = ratio;
            cert.worst_subset = subset;
        }
    }
    cert
}

/// Exhaustively certifies the robustness coefficient of `spec` on one
/// instance: the max over all (n-b)-subsets of deviation-to-spread ratio.
pub fn empirical_kappa(
    spec: &AggregatorSpec,
    vectors: &[Vec<f64>],
    byzantine_count: usize,
) -> Result<KappaCertificate> {
    let n = vectors.len();
    if n > KAPPA_ENUMERATION_LIMIT {
        return Err(Error::Config(format!(
            "subset enumeration capped at n = {KAPPA_ENUMERATION_LIMIT}; \
             use empirical_kappa_sampled for n = {n}"
        )));
    }
    let output = aggregate(spec, vectors)?;
    Ok(kappa_over_subsets(
        &output,
        vectors,
        (0..n).combinations(n - byzantine_count),
    ))
}

/// Sampled-subset variant for large n. The result is a lower bound on the
/// exhaustive coefficient.
pub fn empirical_kappa_sampled(
    spec: &AggregatorSpec,
    vectors: &[Vec<f64>],
    byzantine_count: usize,
    samples: usize,
    rng: &mut SeededRng,
) -> Result<KappaCertificate> {
    let n = vectors.len();
    let output = aggregate(spec, vectors)?;
    let subsets: Vec<Vec<usize>> = (0..samples)
        .map(|_| {
            let mut s = rng.sample_without_replacement(n, n - byzantine_count);
            s.sort_unstable();
            s
        })
        .collect();
    Ok(kappa_over_subsets(&output, vectors, subsets))
}

/// Outcome of checking that compress-aggregate-decompress keeps the
/// robust-averaging property, against the additive bound built from the
/// compressed-space coefficient and the scanned distortion.
#[derive(Debug, Clone)]
pub struct CompatReport {
    /// Max deviation-to-spread ratio of the full pipeline in original space.
    pub pipeline_kappa: f64,
    /// Max over subsets of the additive bound's right-hand side.
    pub bound_rhs: f64,
    /// True when the bound held on every subset.
    pub holds: bool,
    /// Compressed-space coefficient of the base rule.
    pub base_kappa: f64,
    /// Distortion estimate from the pairwise scan of the inputs.
    pub distortion: f64,
    pub degenerate: bool,
}

/// Checks the robust-compatibility bound for the composite map
/// v -> R^T Agg(R v_1, ..., R v_n) against original-space subset means.
/// Per subset S the bound is
/// (1 + eps)^4 kappa_hat + |S| * ||R^T R mean_S - mean_S||^2 / spread_S.
pub fn robust_compat_check(
    spec: &AggregatorSpec,
    sketch: &SketchMatrix,
    vectors: &[ModelVector],
    byzantine_count: usize,
) -> Result<CompatReport> {
    let n = vectors.len();
    if n > KAPPA_ENUMERATION_LIMIT {
        return Err(Error::Config(format!(
            "robust_compat_check capped at n = {KAPPA_ENUMERATION_LIMIT}"
        )));
    }
    let compressed: Vec<Vec<f64>> = vectors
        .iter()
        .map(|v| sketch.compress(v).0)
        .collect();
    let base = empirical_kappa(spec, &compressed, byzantine_count)?;
    let distortion = sketch.distortion_scan(vectors);
    let agg_compressed = aggregate(spec, &compressed)?;
    let decompressed = sketch.decompress(&CompressedVector(agg_compressed)).0;

    let originals: Vec<Vec<f64>> = vectors.iter().map(|v| v.0.clone()).collect();
    let mut report = CompatReport {
        pipeline_kappa: 0.0,
        bound_rhs: 0.0,
        holds: true,
        base_kappa: base.empirical_kappa,
        distortion,
        degenerate: false,
    };
    let amplification = (1.0 + distortion).powi(4);
    for subset in (0..n).combinations(n - byzantine_count) {
        let mean = subset_mean(&originals, &subset);
        let spread_total: f64 = subset
            .iter()
            .map(|&i| squared_distance(&originals[i], &mean))
            .sum();
        let deviation = squared_distance(&decompressed, &mean);
        if spread_total == 0.0 {
            if deviation > 0.0 {
                report.degenerate = true;
                report.holds = false;
            }
            continue;
        }
        let size = subset.len() as f64;
        let lhs = size * deviation / spread_total;
        let round_trip_err = {
            let rt = sketch.round_trip(&ModelVector(mean.clone()));
            squared_distance(&rt.0, &mean)
        };
        let rhs = amplification * base.empirical_kappa + size * round_trip_err / spread_total;
        report.pipeline_kappa = report.pipeline_kappa.max(lhs);
        report.bound_rhs = report.bound_rhs.max(rhs);
        if lhs > rhs {
            report.holds = false;
        }
    }
    Ok(report)
}

/// Intermediate quantities of the compatibility bound's derivation for one
/// subset, used to confirm each step numerically with a concrete sketch.
#[derive(Debug, Clone)]
pub struct BoundChain {
    /// ||R^T Agg - mean_S||^2, the quantity being bounded.
    pub lhs: f64,
    /// Triangle split: (||R^T Agg - R^T R mean_S|| + ||R^T R mean_S - mean_S||)^2.
    pub after_triangle: f64,
    /// Operator-norm step: ||R^T||^2 ||Agg - R mean_S||^2 + round-trip term.
    pub after_operator: f64,
    /// Compressed-space robustness step with the certified coefficient.
    pub after_base_kappa: f64,
    /// Second operator-norm step back to original-space spread.
    pub after_second_operator: f64,
    /// Final bound with ||R||^4 replaced by its measured value.
    pub after_spectral: f64,
}

impl BoundChain {
    pub fn monotone(&self) -> bool {
        let seq = [
            self.lhs,
            self.after_triangle,
            self.after_operator,
            self.after_base_kappa,
            self.after_second_operator,
            self.after_spectral,
        ];
        seq.windows(2).all(|w| w[0] <= w[1] * (1.0 + 1e-9) + 1e-12)
    }
}

/// Evaluates the derivation chain of the compatibility bound on a single
/// subset. The operator-norm steps use the measured squared spectral norm of
/// the concrete sketch, so each step is a true inequality.
pub fn compat_bound_chain(
    spec: &AggregatorSpec,
    sketch: &SketchMatrix,
    vectors: &[ModelVector],
    byzantine_count: usize,
    subset: &[usize],
    spectral_norm_sq: f64,
) -> Result<BoundChain> {
    let compressed: Vec<Vec<f64>> = vectors.iter().map(|v| sketch.compress(v).0).collect();
    let base = empirical_kappa(spec, &compressed, byzantine_count)?;
    let agg = aggregate(spec, &compressed)?;
    let decompressed = sketch.decompress(&CompressedVector(agg.clone()));

    let originals: Vec<Vec<f64>> = vectors.iter().map(|v| v.0.clone()).collect();
    let mean = subset_mean(&originals, subset);
    let mean_vec = ModelVector(mean.clone());
    let round_trip_mean = sketch.round_trip(&mean_vec);
    let compressed_mean = sketch.compress(&mean_vec);

    let lhs = squared_distance(&decompressed.0, &mean);
    let term_a = decompressed.sub(&round_trip_mean).l2_norm();
    let term_b = round_trip_mean.sub(&mean_vec).l2_norm();
    let after_triangle = (term_a + term_b) * (term_a + term_b);

    let agg_minus_mean_sq = squared_distance(&agg, &compressed_mean.0);
    let cross = 2.0 * term_a * term_b;
    let after_operator = spectral_norm_sq * agg_minus_mean_sq + term_b * term_b + cross;

    let size = subset.len() as f64;
    let compressed_spread: f64 = subset
        .iter()
        .map(|&i| squared_distance(&compressed[i], &compressed_mean.0))
        .sum();
    let after_base_kappa = spectral_norm_sq * base.empirical_kappa * compressed_spread / size
        + term_b * term_b
        + cross;

    let original_spread: f64 = subset
        .iter()
        .map(|&i| squared_distance(&originals[i], &mean))
        .sum();
    let after_second_operator = spectral_norm_sq * spectral_norm_sq * base.empirical_kappa
        * original_spread
        / size
        + term_b * term_b
        + cross;

    // (1 + eps)^4 with eps taken from the measured norm, so the last step is
    // the spectral bound evaluated at the concrete matrix
    let eps_measured = spectral_norm_sq.sqrt() - 1.0;
    let after_spectral = (1.0 + eps_measured.max(0.0)).powi(4) * base.empirical_kappa
        * original_spread
        / size
        + term_b * term_b
        + cross;

    Ok(BoundChain {
        lhs,
        after_triangle,
        after_operator,
        after_base_kappa,
        after_second_operator,
        after_spectral,
    })
}
