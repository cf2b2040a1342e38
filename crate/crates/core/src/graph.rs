//! Attribute graph and exact nearest-neighbour image search.
//!
//! Every image contributes M attribute nodes (its projected attribute rows),
//! stored as one flat (N*M) x Z matrix in which node i*M + m is head m of
//! image i. A neighbour query ranks all foreign nodes by their distance to
//! the query image, where a node's distance is the smallest squared
//! Euclidean distance to any of the query's own M attribute rows. The k
//! best nodes (ties: lower owner, then lower node index) are deduplicated
//! into an ascending list of owner images.
//!
//! Search is exact. Speed comes from three places: a fixed-lane SIMD
//! distance kernel, early abandonment once a partial sum exceeds the current
//! k-th best distance, and processing queries in blocks so the node matrix
//! streams through cache once per block. None of these change results: the
//! kernel is bit-identical across its scalar and vector paths, and
//! abandonment only drops candidates that are strictly worse than the
//! current cutoff.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::val::AttributeProjector;

/// Squared Euclidean distance with a pinned summation order.
///
/// Element e accumulates into lane e mod 16; lanes combine as
/// s_l = (lane[l] + lane[l+4]) + (lane[l+8] + lane[l+12]) for l in 0..4,
/// then (s_0 + s_1) + (s_2 + s_3). Every code path (scalar, AVX2, AVX-512)
/// performs exactly these operations, so the result does not depend on
/// which one ran.
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "distance between vectors of different lengths");
    kernel::detect().run(a, b, f64::INFINITY).unwrap()
}

/// Inverse-distance edge weight, clamped at distance 1e-12 so coincident
/// nodes get weight 1e12 instead of infinity.
pub fn edge_weight(a: &[f64], b: &[f64]) -> f64 {
    1.0 / squared_distance(a, b).sqrt().max(1e-12)
}

mod kernel {
    const LANES: usize = 16;

    #[derive(Debug, Clone, Copy, PartialEq, Eq)]
    pub enum Kernel {
        Scalar,
        #[cfg(target_arch = "x86_64")]
        Avx2,
        #[cfg(target_arch = "x86_64")]
        Avx512,
    }

    pub fn detect() -> Kernel {
        #[cfg(target_arch = "x86_64")]
        {
            if is_x86_feature_detected!("avx512f") {
                return Kernel::Avx512;
            }
            if is_x86_feature_detected!("avx2") {
                return Kernel::Avx2;
            }
        }
        Kernel::Scalar
    }

    impl Kernel {
        /// Squared distance, or None iff it strictly exceeds `bound`.
        /// Partial sums are checked after every 32 elements so hopeless
        /// pairs abandon early; a returned value is always the full exact
        /// kernel result, and a tie at the bound survives.
        #[inline]
        pub fn run(self, a: &[f64], b: &[f64], bound: f64) -> Option<f64> {
            match self {
                Kernel::Scalar => scalar(a, b, bound),
                #[cfg(target_arch = "x86_64")]
                Kernel::Avx2 => unsafe { avx2(a, b, bound) },
                #[cfg(target_arch = "x86_64")]
                Kernel::Avx512 => unsafe { avx512(a, b, bound) },
            }
        }
    }

    #[inline(always)]
    fn fold(lanes: &[f64; LANES]) -> f64 {
        let mut s = [0.0; 4];
        for l in 0..4 {
            s[l] = (lanes[l] + lanes[l + 4]) + (lanes[l + 8] + lanes[l + 12]);
        }
        (s[0] + s[1]) + (s[2] + s[3])
    }

    // The total is the last checkpoint: None iff the exact result is
    // strictly above `bound`, so ties at the bound always survive.
    #[inline(always)]
    fn finish(lanes: &[f64; LANES], bound: f64) -> Option<f64> {
        let total = fold(lanes);
        if total > bound {
            None
        } else {
            Some(total)
        }
    }

    fn scalar(a: &[f64], b: &[f64], bound: f64) -> Option<f64> {
        let len = a.len();
        let a = &a[..len];
        let b = &b[..len];
        let mut lanes = [0.0f64; LANES];
        let mut e = 0;
        while e + 32 <= len {
            for off in 0..32 {
                let d = a[e + off] - b[e + off];
                lanes[off & 15] += d * d;
            }
            e += 32;
            if fold(&lanes) > bound {
                return None;
            }
        }
        if e + 16 <= len {
            for off in 0..16 {
                let d = a[e + off] - b[e + off];
                lanes[off] += d * d;
            }
            e += 16;
        }
        let mut l = 0;
        while e < len {
            let d = a[e] - b[e];
            lanes[l] += d * d;
            l += 1;
            e += 1;
        }
        finish(&lanes, bound)
    }

    // Same lane structure as `scalar`: ymm j holds lanes 4j..4j+4, and the
    // per-32-element check folds with the same association. No FMA anywhere,
    // so each lane sees the identical sub/mul/add sequence.
    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx2")]
    unsafe fn avx2(a: &[f64], b: &[f64], bound: f64) -> Option<f64> {
        use std::arch::x86_64::*;
        let len = a.len();
        let ap = a.as_ptr();
        let bp = b.as_ptr();
        let mut acc = [_mm256_setzero_pd(); 4];
        let mut e = 0usize;
        while e + 32 <= len {
            for half in 0..2 {
                let base = e + half * 16;
                for j in 0..4 {
                    let av = _mm256_loadu_pd(ap.add(base + 4 * j));
                    let bv = _mm256_loadu_pd(bp.add(base + 4 * j));
                    let d = _mm256_sub_pd(av, bv);
                    acc[j] = _mm256_add_pd(acc[j], _mm256_mul_pd(d, d));
                }
            }
            e += 32;
            let t = _mm256_add_pd(
                _mm256_add_pd(acc[0], acc[1]),
                _mm256_add_pd(acc[2], acc[3]),
            );
            let mut s = [0.0f64; 4];
            _mm256_storeu_pd(s.as_mut_ptr(), t);
            if (s[0] + s[1]) + (s[2] + s[3]) > bound {
                return None;
            }
        }
        if e + 16 <= len {
            for j in 0..4 {
                let av = _mm256_loadu_pd(ap.add(e + 4 * j));
                let bv = _mm256_loadu_pd(bp.add(e + 4 * j));
                let d = _mm256_sub_pd(av, bv);
                acc[j] = _mm256_add_pd(acc[j], _mm256_mul_pd(d, d));
            }
            e += 16;
        }
        let mut lanes = [0.0f64; LANES];
        for j in 0..4 {
            _mm256_storeu_pd(lanes.as_mut_ptr().add(4 * j), acc[j]);
        }
        let mut l = 0;
        while e < len {
            let d = *ap.add(e) - *bp.add(e);
            lanes[l] += d * d;
            l += 1;
            e += 1;
        }
        finish(&lanes, bound)
    }

    // zmm 0 holds lanes 0..8, zmm 1 holds lanes 8..16. The fold first adds
    // lane l to lane l+4 (the two ymm halves of each zmm), reproducing the
    // scalar association exactly.
    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx512f")]
    unsafe fn avx512(a: &[f64], b: &[f64], bound: f64) -> Option<f64> {
        use std::arch::x86_64::*;
        let len = a.len();
        let ap = a.as_ptr();
        let bp = b.as_ptr();
        let mut acc0 = _mm512_setzero_pd();
        let mut acc1 = _mm512_setzero_pd();
        let mut e = 0usize;
        while e + 32 <= len {
            for half in 0..2 {
                let base = e + half * 16;
                let a0 = _mm512_loadu_pd(ap.add(base));
                let b0 = _mm512_loadu_pd(bp.add(base));
                let d0 = _mm512_sub_pd(a0, b0);
                acc0 = _mm512_add_pd(acc0, _mm512_mul_pd(d0, d0));
                let a1 = _mm512_loadu_pd(ap.add(base + 8));
                let b1 = _mm512_loadu_pd(bp.add(base + 8));
                let d1 = _mm512_sub_pd(a1, b1);
                acc1 = _mm512_add_pd(acc1, _mm512_mul_pd(d1, d1));
            }
            e += 32;
            let u = _mm256_add_pd(
                _mm512_extractf64x4_pd::<0>(acc0),
                _mm512_extractf64x4_pd::<1>(acc0),
            );
            let v = _mm256_add_pd(
                _mm512_extractf64x4_pd::<0>(acc1),
                _mm512_extractf64x4_pd::<1>(acc1),
            );
            let mut s = [0.0f64; 4];
            _mm256_storeu_pd(s.as_mut_ptr(), _mm256_add_pd(u, v));
            if (s[0] + s[1]) + (s[2] + s[3]) > bound {
                return None;
            }
        }
        if e + 16 <= len {
            let a0 = _mm512_loadu_pd(ap.add(e));
            let b0 = _mm512_loadu_pd(bp.add(e));
            let d0 = _mm512_sub_pd(a0, b0);
            acc0 = _mm512_add_pd(acc0, _mm512_mul_pd(d0, d0));
            let a1 = _mm512_loadu_pd(ap.add(e + 8));
            let b1 = _mm512_loadu_pd(bp.add(e + 8));
            let d1 = _mm512_sub_pd(a1, b1);
            acc1 = _mm512_add_pd(acc1, _mm512_mul_pd(d1, d1));
            e += 16;
        }
        let mut lanes = [0.0f64; LANES];
        _mm512_storeu_pd(lanes.as_mut_ptr(), acc0);
        _mm512_storeu_pd(lanes.as_mut_ptr().add(8), acc1);
        let mut l = 0;
        while e < len {
            let d = *ap.add(e) - *bp.add(e);
            lanes[l] += d * d;
            l += 1;
            e += 1;
        }
        finish(&lanes, bound)
    }
}

/// How many queries share one pass over the node matrix. 32 queries of a
/// typical Z keep their attribute rows cache-resident while nodes stream.
const QUERY_BLOCK: usize = 32;

#[derive(Debug, Clone)]
pub struct AttributeGraph {
    nodes: Matrix,
    attrs_per_image: usize,
}

/// Candidate node ordered by (squared distance, node index). Node index
/// ascending implies owner ascending, so this is the full tie-break order.
#[derive(Clone, Copy, PartialEq)]
struct Cand {
    d2: f64,
    node: u32,
}

impl Eq for Cand {}

impl Ord for Cand {
    fn cmp(&self, other: &Self) -> Ordering {
        self.d2.total_cmp(&other.d2).then(self.node.cmp(&other.node))
    }
}

impl PartialOrd for Cand {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl AttributeGraph {
    /// Projects every sample and lays the heads out as consecutive nodes.
    pub fn build(dataset: &Dataset, model: &AttributeProjector) -> Result<Self> {
        if model.feature_dim() != dataset.feature_dim() {
            return Err(Error::DimensionMismatch(format!(
                "model expects {} feature dims, dataset has {}",
                model.feature_dim(),
                dataset.feature_dim()
            )));
        }
        let m = model.heads();
        let z = model.embed_dim();
        let n = dataset.n_samples();
        let mut nodes = Matrix::zeros(n * m, z);
        nodes
            .data_mut()
            .par_chunks_mut(m * z)
            .enumerate()
            .try_for_each(|(i, block)| -> Result<()> {
                let attrs = model.project(dataset.features.row(i))?;
                block.copy_from_slice(attrs.data());
                Ok(())
            })?;
        Ok(AttributeGraph { nodes, attrs_per_image: m })
    }

    /// Wraps an existing node matrix. Rows must come in whole per-image
    /// blocks of `attrs_per_image`.
    pub fn from_nodes(nodes: Matrix, attrs_per_image: usize) -> Result<Self> {
        if attrs_per_image == 0 {
            return Err(Error::InvalidConfig("attrs_per_image must be at least 1".into()));
        }
        if nodes.rows() == 0 || nodes.cols() == 0 {
            return Err(Error::EmptyInput("graph with no nodes".into()));
        }
        if nodes.rows() % attrs_per_image != 0 {
            return Err(Error::DimensionMismatch(format!(
                "{} nodes do not divide into images of {} attributes",
                nodes.rows(),
                attrs_per_image
            )));
        }
        if !nodes.all_finite() {
            return Err(Error::NonFinite("graph nodes".into()));
        }
        Ok(AttributeGraph { nodes, attrs_per_image })
    }

    pub fn n_images(&self) -> usize {
        self.nodes.rows() / self.attrs_per_image
    }

    pub fn attrs_per_image(&self) -> usize {
        self.attrs_per_image
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.rows()
    }

    pub fn node(&self, idx: usize) -> &[f64] {
        self.nodes.row(idx)
    }

    pub fn owner(&self, node_idx: usize) -> usize {
        node_idx / self.attrs_per_image
    }

    fn check_k(&self, k: usize) -> Result<()> {
        let max = (self.n_images() - 1) * self.attrs_per_image;
        if k == 0 || k > max {
            return Err(Error::KOutOfRange { k, max });
        }
        Ok(())
    }

    /// Neighbour images of one query; see module docs for the ranking rule.
    pub fn knn_images(&self, query_image: usize, k: usize) -> Result<Vec<usize>> {
        Ok(self.knn_for(&[query_image], k)?.pop().unwrap())
    }

    /// Neighbour sets for an arbitrary list of query images.
    pub fn knn_for(&self, queries: &[usize], k: usize) -> Result<Vec<Vec<usize>>> {
        self.check_k(k)?;
        let n = self.n_images();
        if let Some(&bad) = queries.iter().find(|&&q| q >= n) {
            return Err(Error::DimensionMismatch(format!(
                "query image {bad} out of range, graph has {n} images"
            )));
        }
        let kern = kernel::detect();
        let blocks: Vec<Vec<Vec<usize>>> = queries
            .par_chunks(QUERY_BLOCK)
            .map(|block| self.knn_block(block, k, kern))
            .collect();
        Ok(blocks.into_iter().flatten().collect())
    }

    /// Neighbour sets for every image, index-aligned with the graph.
    pub fn batch_knn(&self, k: usize) -> Result<Vec<Vec<usize>>> {
        let all: Vec<usize> = (0..self.n_images()).collect();
        self.knn_for(&all, k)
    }

    // Node-major sweep: each node row is loaded once and scored against
    // every query in the block. Heaps are per query; their contents are the
    // exact k-minimum of the candidate order, so block shape and thread
    // count cannot change results.
    fn knn_block(&self, block: &[usize], k: usize, kern: kernel::Kernel) -> Vec<Vec<usize>> {
        let m = self.attrs_per_image;
        let mut heaps: Vec<BinaryHeap<Cand>> =
            block.iter().map(|_| BinaryHeap::with_capacity(k + 1)).collect();

        for node in 0..self.nodes.rows() {
            let owner = node / m;
            let nrow = self.nodes.row(node);
            for (qi, &q) in block.iter().enumerate() {
                if owner == q {
                    continue;
                }
                let heap = &mut heaps[qi];
                let bound = if heap.len() == k {
                    heap.peek().unwrap().d2
                } else {
                    f64::INFINITY
                };
                // Node distance = min over the query's own attribute rows.
                let mut best = f64::INFINITY;
                for a in 0..m {
                    let qrow = self.nodes.row(q * m + a);
                    if let Some(d2) = kern.run(qrow, nrow, bound.min(best)) {
                        if d2 < best {
                            best = d2;
                        }
                    }
                }
                if !best.is_finite() {
                    continue; // abandoned against the cutoff on every attribute
                }
                let cand = Cand { d2: best, node: node as u32 };
                if heap.len() < k {
                    heap.push(cand);
                } else if cand < *heap.peek().unwrap() {
                    heap.pop();
                    heap.push(cand);
                }
            }
        }

        heaps
            .into_iter()
            .map(|heap| {
                let mut owners: Vec<usize> =
                    heap.into_iter().map(|c| c.node as usize / m).collect();
                owners.sort_unstable();
                owners.dedup();
                owners
            })
            .collect()
    }
}
