//! Sparse k-nearest-neighbour similarity graphs.
//!
//! Similarities are inner products of L2-normalized embeddings. Each sample
//! keeps its `k` most similar peers; the directed graph is then folded into a
//! symmetric matrix by max-union. Neighbour search is exact: all pairwise
//! inner products are computed tile by tile with a dense `f64` GEMM, and only
//! the upper triangle of tiles is visited since the product is symmetric.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::problem::{row_norm, EmbeddingMatrix, SparseSimilarity};

/// Sparsification parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KnnParams {
    /// Neighbours kept per sample.
    pub k: usize,
    /// Map negative similarities to zero.
    pub clamp_negative: bool,
    /// Fold directed edges into a symmetric matrix by max-union.
    pub symmetrize: bool,
}

impl Default for KnnParams {
    fn default() -> Self {
        Self {
            k: 5,
            clamp_negative: true,
            symmetrize: true,
        }
    }
}

/// A directed neighbour of some sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub similarity: f64,
}

/// Scales every row to unit L2 norm.
pub fn l2_normalize(embeddings: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    let dim = embeddings.dim();
    let mut data = Vec::with_capacity(embeddings.data().len());
    for i in 0..embeddings.n() {
        let row = embeddings.row(i);
        let norm = row_norm(row);
        if norm == 0.0 {
            return Err(Error::input(format!("row {i} has zero norm and cannot be normalized")));
        }
        data.extend(row.iter().map(|&v| (v as f64 / norm) as f32));
    }
    EmbeddingMatrix::new(embeddings.n(), dim, data)
}

const TILE: usize = 256;

/// Per-row bounded lists of the best candidates, best first.
///
/// Candidate `(s, j)` beats `(s', j')` when `s > s'`, or `s == s'` and
/// `j < j'`. Empty slots hold `(-inf, u32::MAX)` and lose to everything.
#[derive(Clone)]
struct TopKTable {
    k: usize,
    sims: Vec<f64>,
    idx: Vec<u32>,
}

#[inline]
fn beats(s: f64, j: u32, s2: f64, j2: u32) -> bool {
    s > s2 || (s == s2 && j < j2)
}

impl TopKTable {
    fn new(n: usize, k: usize) -> Self {
        Self {
            k,
            sims: vec![f64::NEG_INFINITY; n * k],
            idx: vec![u32::MAX; n * k],
        }
    }

    #[inline]
    fn insert(&mut self, row: usize, s: f64, j: u32) {
        let base = row * self.k;
        let last = base + self.k - 1;
        if !beats(s, j, self.sims[last], self.idx[last]) {
            return;
        }
        let mut pos = last;
        while pos > base && beats(s, j, self.sims[pos - 1], self.idx[pos - 1]) {
            self.sims[pos] = self.sims[pos - 1];
            self.idx[pos] = self.idx[pos - 1];
            pos -= 1;
        }
        self.sims[pos] = s;
        self.idx[pos] = j;
    }

    fn merge(mut self, other: Self) -> Self {
        let k = self.k;
        for row in 0..self.sims.len() / k {
            for slot in row * k..(row + 1) * k {
                if other.idx[slot] == u32::MAX {
                    break;
                }
                self.insert(row, other.sims[slot], other.idx[slot]);
            }
        }
        self
    }
}

fn check_knn_inputs(embeddings: &EmbeddingMatrix, k: usize) -> Result<()> {
    let n = embeddings.n();
    if k == 0 || k >= n {
        return Err(Error::input(format!("k = {k} must satisfy 1 <= k < n = {n}")));
    }
    if n > u32::MAX as usize {
        return Err(Error::input(format!("{n} samples exceed the supported maximum")));
    }
    if !embeddings.is_normalized() {
        return Err(Error::input(
            "embeddings must be L2-normalized before building the kNN graph",
        ));
    }
    Ok(())
}

fn knn_table(embeddings: &EmbeddingMatrix, k: usize) -> TopKTable {
    let n = embeddings.n();
    let dim = embeddings.dim();
    let data = embeddings.to_f64();
    let blocks = n.div_ceil(TILE);

    (0..blocks)
        .into_par_iter()
        .fold(
            || (TopKTable::new(n, k), vec![0.0f64; TILE * TILE]),
            |(mut table, mut tile), bi| {
                let i0 = bi * TILE;
                let rows = TILE.min(n - i0);
                for bj in bi..blocks {
                    let j0 = bj * TILE;
                    let cols = TILE.min(n - j0);
                    // SAFETY: the operands are in-bounds views of `data` (rows
                    // i0..i0+rows and j0..j0+cols, `dim` columns each) and
                    // `tile` holds at least rows*cols entries.
                    unsafe {
                        matrixmultiply::dgemm(
                            rows,
                            dim,
                            cols,
                            1.0,
                            data.as_ptr().add(i0 * dim),
                            dim as isize,
                            1,
                            data.as_ptr().add(j0 * dim),
                            1,
                            dim as isize,
                            0.0,
                            tile.as_mut_ptr(),
                            cols as isize,
                            1,
                        );
                    }
                    for r in 0..rows {
                        let i = i0 + r;
                        let start = if bi == bj { r + 1 } else { 0 };
                        for c in start..cols {
                            let j = j0 + c;
                            let s = tile[r * cols + c];
                            table.insert(i, s, j as u32);
                            table.insert(j, s, i as u32);
                        }
                    }
                }
                (table, tile)
            },
        )
        .map(|(table, _)| table)
        .reduce(|| TopKTable::new(n, k), TopKTable::merge)
}

/// Exact directed top-`k` neighbours of every sample, best first.
///
/// Ties in similarity go to the lower index.
pub fn directed_knn(embeddings: &EmbeddingMatrix, k: usize) -> Result<Vec<Vec<Neighbor>>> {
    check_knn_inputs(embeddings, k)?;
    let table = knn_table(embeddings, k);
    Ok((0..embeddings.n())
        .map(|i| {
            (i * k..(i + 1) * k)
                .map(|slot| Neighbor {
                    index: table.idx[slot] as usize,
                    similarity: table.sims[slot],
                })
                .collect()
        })
        .collect())
}

/// Builds the sparsified similarity matrix `K` from normalized embeddings.
///
/// Weights are clamped to at most 1; with `clamp_negative` they are also
/// floored at 0. Without it, weights lie in `[-1, 1]`.
pub fn build_knn_similarity(embeddings: &EmbeddingMatrix, params: &KnnParams) -> Result<SparseSimilarity> {
    let k = params.k;
    check_knn_inputs(embeddings, k)?;
    let table = knn_table(embeddings, k);
    let n = embeddings.n();
    let mut edges = Vec::with_capacity(n * k);
    for i in 0..n {
        for slot in i * k..(i + 1) * k {
            let s = table.sims[slot].min(1.0);
            let w = if params.clamp_negative { s.max(0.0) } else { s.max(-1.0) };
            edges.push((i as u32, table.idx[slot], w));
        }
    }
    Ok(SparseSimilarity::from_directed(n, edges, params.symmetrize))
}
