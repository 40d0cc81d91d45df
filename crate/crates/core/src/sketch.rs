//! Count-Sketch random projection: p independent hash blocks of s rows each,
//! stacked to a k x d map and scaled by 1/sqrt(p). The matrix is never stored;
//! each block keeps two 64-bit seeds defining its bucket hash and sign hash.

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::ModelVector;
use serde::{Deserialize, Serialize};

/// Compressed vector of length k, tied to the sketch that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressedVector(pub Vec<f64>);

impl CompressedVector {
    pub fn zeros(k: usize) -> Self {
        CompressedVector(vec![0.0; k])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn l2_norm(&self) -> f64 {
        self.0.iter().map(|a| a * a).sum::<f64>().sqrt()
    }

    pub fn sub(&self, other: &CompressedVector) -> CompressedVector {
        assert_eq!(self.len(), other.len());
        CompressedVector(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn dot(&self, other: &CompressedVector) -> f64 {
        assert_eq!(self.len(), other.len());
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Implicit sketch matrix: column l of block i has a single nonzero, sign
/// zeta_i(l) at row h_i(l). The full map is the vertical stack of the p
/// blocks scaled by 1/sqrt(p).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SketchMatrix {
    d: usize,
    k: usize,
    p: usize,
    s: usize,
    /// (bucket seed, sign seed) per block.
    hash_seeds: Vec<(u64, u64)>,
}

impl SketchMatrix {
    pub fn new(d: usize, k: usize, p: usize, seed: u64) -> Result<Self> {
        if p == 0 || k % p != 0 {
            return Err(Error::Config(format!(
                "block count {p} must divide compressed dimension {k}"
            )));
        }
        if k >= d {
            return Err(Error::Config(format!(
                "compressed dimension {k} must be below original dimension {d}"
            )));
        }
        let mut rng = SeededRng::new(seed, u64::MAX);
        let hash_seeds = (0..p).map(|_| (rng.next_u64(), rng.next_u64())).collect();
        Ok(SketchMatrix {
            d,
            k,
            p,
            s: k / p,
            hash_seeds,
        })
    }

    /// Compressed dimension for a target rate d/rate, rounded down to a
    /// multiple of the block count.
    pub fn dimension_for_rate(d: usize, rate: usize, p: usize) -> Result<usize> {
        if rate < 2 {
            return Err(Error::Config("compression rate must be at least 2".into()));
        }
        let k = (d / rate / p) * p;
        if k == 0 {
            return Err(Error::Config(format!(
                "d = {d} too small for rate {rate} with {p} blocks"
            )));
        }
        Ok(k)
    }

    pub fn original_dim(&self) -> usize {
        self.d
    }

    pub fn compressed_dim(&self) -> usize {
        self.k
    }

    pub fn block_count(&self) -> usize {
        self.p
    }

    pub fn rows_per_block(&self) -> usize {
        self.s
    }

    /// Bucket row of column l in block i.
    pub fn bucket(&self, block: usize, col: usize) -> usize {
        (splitmix64(self.hash_seeds[block].0 ^ col as u64) % self.s as u64) as usize
    }

    /// Sign of column l in block i.
    pub fn sign(&self, block: usize, col: usize) -> f64 {
        if splitmix64(self.hash_seeds[block].1 ^ col as u64) & 1 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// R v, evaluated blockwise from the hashes.
    pub fn compress(&self, v: &ModelVector) -> CompressedVector {
        assert_eq!(v.len(), self.d, "compress input length mismatch");
        let mut out = vec![0.0; self.k];
        let scale = 1.0 / (self.p as f64).sqrt();
        for block in 0..self.p {
            let base = block * self.s;
            for (col, &x) in v.as_slice().iter().enumerate() {
                out[base + self.bucket(block, col)] += self.sign(block, col) * x;
            }
        }
        for o in out.iter_mut() {
            *o *= scale;
        }
        CompressedVector(out)
    }

    /// R^T c, the adjoint of compress.
    pub fn decompress(&self, c: &CompressedVector) -> ModelVector {
        assert_eq!(c.len(), self.k, "decompress input length mismatch");
        let mut out = vec![0.0; self.d];
        let scale = 1.0 / (self.p as f64).sqrt();
        for block in 0..self.p {
            let base = block * self.s;
            for (col, o) in out.iter_mut().enumerate() {
                *o += self.sign(block, col) * c.0[base + self.bucket(block, col)];
            }
        }
        for o in out.iter_mut() {
            *o *= scale;
        }
        ModelVector(out)
    }

    /// Round trip R^T R v.
    pub fn round_trip(&self, v: &ModelVector) -> ModelVector {
        self.decompress(&self.compress(v))
    }

    /// Power iteration on v -> R^T R v; returns an estimate of the largest
    /// eigenvalue, i.e. the squared spectral norm of R.
    pub fn spectral_norm_sq(&self, iters: usize, rng: &mut SeededRng) -> f64 {
        assert!(iters >= 1);
        let mut v = ModelVector((0..self.d).map(|_| rng.standard_normal()).collect());
        let norm = v.l2_norm();
        v = v.scale(1.0 / norm);
        let mut estimate = 0.0;
        for _ in 0..iters {
            let next = self.round_trip(&v);
            let norm = next.l2_norm();
            if norm == 0.0 {
                return 0.0;
            }
            v = next.scale(1.0 / norm);
            // Rayleigh quotient of the normalized iterate
            estimate = v.dot(&self.round_trip(&v));
        }
        estimate
    }

    /// Max relative pairwise-distance distortion over a set of vectors,
    /// skipping zero-distance pairs.
    pub fn distortion_scan(&self, vectors: &[ModelVector]) -> f64 {
        assert!(vectors.len() >= 2, "distortion_scan needs at least 2 vectors");
        let compressed: Vec<CompressedVector> = vectors.iter().map(|v| self.compress(v)).collect();
        let mut max_distortion: f64 = 0.0;
        for i in 0..vectors.len() {
            for j in (i + 1)..vectors.len() {
                let orig = vectors[i].sub(&vectors[j]).l2_norm();
                if orig == 0.0 {
                    continue;
                }
                let comp = compressed[i].sub(&compressed[j]).l2_norm();
                max_distortion = max_distortion.max((comp / orig - 1.0).abs());
            }
        }
        max_distortion
    }

    /// Dense k x d materialization, row major. Oracle path for small d.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let scale = 1.0 / (self.p as f64).sqrt();
        let mut rows = vec![vec![0.0; self.d]; self.k];
        for block in 0..self.p {
            for col in 0..self.d {
                rows[block * self.s + self.bucket(block, col)][col] = scale * self.sign(block, col);
            }
        }
        rows
    }
}
