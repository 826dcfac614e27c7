//! Domain types shared by every stage of the selection pipeline, plus the
//! exact quadratic objective.
//!
//! The objective of a selection `S` is
//!
//! ```text
//! f(S) = Σ_{z∈S} I(z) − α · Σ_{z∈S} Σ_{s∈S, s≠z} K[z][s]
//! ```
//!
//! where the double sum runs over ordered pairs, so every unordered pair is
//! counted twice. `K` never stores its diagonal.

use crate::error::{Error, Result};

/// Dense `n × dim` feature table, row-major, stored as `f32`.
///
/// Values are widened to `f64` wherever they are accumulated.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    n: usize,
    dim: usize,
    data: Vec<f32>,
    normalized: bool,
}

/// Tolerance on the row norm when a matrix claims to be L2-normalized.
pub const UNIT_NORM_TOL: f64 = 1e-6;

impl EmbeddingMatrix {
    pub fn new(n: usize, dim: usize, data: Vec<f32>) -> Result<Self> {
        if n == 0 || dim == 0 {
            return Err(Error::input(format!(
                "embedding matrix must be non-empty, got {n}x{dim}"
            )));
        }
        if data.len() != n * dim {
            return Err(Error::input(format!(
                "embedding payload has {} values, expected {n}x{dim} = {}",
                data.len(),
                n * dim
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::input(format!(
                "non-finite embedding value at row {}, column {}",
                pos / dim,
                pos % dim
            )));
        }
        let normalized = (0..n).all(|i| {
            let norm = row_norm(&data[i * dim..(i + 1) * dim]);
            (norm - 1.0).abs() <= UNIT_NORM_TOL
        });
        Ok(Self {
            n,
            dim,
            data,
            normalized,
        })
    }

    /// Builds a matrix from equally sized rows.
    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(Error::input(format!(
                    "row {i} has {} columns, expected {dim}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Self::new(rows.len(), dim, data)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// True when every row has unit L2 norm (within [`UNIT_NORM_TOL`]).
    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Row-major copy of the data widened to `f64`.
    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64).collect()
    }

    /// Rows restricted to `indices`, in that order.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            if i >= self.n {
                return Err(Error::input(format!("row index {i} out of range for {} rows", self.n)));
            }
            data.extend_from_slice(self.row(i));
        }
        Self::new(indices.len(), self.dim, data)
    }
}

pub(crate) fn row_norm(row: &[f32]) -> f64 {
    row.iter()
        .map(|&v| {
            let v = v as f64;
            v * v
        })
        .sum::<f64>()
        .sqrt()
}

/// Per-sample intra-sample information `I(z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    values: Vec<f64>,
}

impl ScoreVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::input(format!("non-finite score at index {i}")));
        }
        Ok(Self { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// True when every value lies in `[0, 1]`.
    pub fn is_normalized(&self) -> bool {
        self.values.iter().all(|&v| (0.0..=1.0).contains(&v))
    }
}

/// Compressed sparse row storage for the redundancy matrix `K`.
///
/// Column indices are strictly increasing inside each row and the diagonal
/// is never stored. Matrices built through the public constructors are
/// symmetric with weights in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSimilarity {
    n: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<u32>,
    weights: Vec<f64>,
}

impl SparseSimilarity {
    /// The all-zero matrix of order `n`.
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            row_offsets: vec![0; n + 1],
            col_indices: Vec::new(),
            weights: Vec::new(),
        }
    }

    /// Builds a symmetric matrix from `(row, col, weight)` entries.
    ///
    /// Each entry is mirrored; when both `(z, s)` and `(s, z)` appear, or an
    /// entry repeats, the larger weight wins. Diagonal entries are dropped.
    pub fn from_triplets<I>(n: usize, triplets: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        check_order(n)?;
        let mut edges = Vec::new();
        for (line, (r, c, w)) in triplets.into_iter().enumerate() {
            if r >= n || c >= n {
                return Err(Error::input(format!(
                    "entry {line} ({r}, {c}) out of range for order {n}"
                )));
            }
            if !w.is_finite() || !(0.0..=1.0).contains(&w) {
                return Err(Error::input(format!(
                    "entry {line} ({r}, {c}) has weight {w} outside [0, 1]"
                )));
            }
            edges.push((r as u32, c as u32, w));
        }
        Ok(Self::from_directed(n, edges, true))
    }

    /// Assembles CSR storage from directed edges without range checks on the
    /// weights. With `symmetrize`, every edge is mirrored and duplicates are
    /// merged by max; otherwise duplicates are still merged by max but the
    /// result keeps only the given directions.
    pub(crate) fn from_directed(n: usize, mut edges: Vec<(u32, u32, f64)>, symmetrize: bool) -> Self {
        edges.retain(|&(r, c, _)| r != c);
        if symmetrize {
            let mirrored: Vec<_> = edges.iter().map(|&(r, c, w)| (c, r, w)).collect();
            edges.extend(mirrored);
        }
        edges.sort_unstable_by_key(|e| (e.0, e.1));

        let mut row_offsets = vec![0usize; n + 1];
        let mut col_indices = Vec::with_capacity(edges.len());
        let mut weights: Vec<f64> = Vec::with_capacity(edges.len());
        let mut last: Option<(u32, u32)> = None;
        for (r, c, w) in edges {
            if last == Some((r, c)) {
                let slot = weights.last_mut().expect("previous entry");
                *slot = slot.max(w);
                continue;
            }
            last = Some((r, c));
            row_offsets[r as usize + 1] += 1;
            col_indices.push(c);
            weights.push(w);
        }
        for i in 0..n {
            row_offsets[i + 1] += row_offsets[i];
        }
        Self {
            n,
            row_offsets,
            col_indices,
            weights,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of stored entries.
    pub fn nnz(&self) -> usize {
        self.weights.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[u32] {
        &self.col_indices
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Stored columns and weights of row `z`.
    pub fn row(&self, z: usize) -> (&[u32], &[f64]) {
        let range = self.row_offsets[z]..self.row_offsets[z + 1];
        (&self.col_indices[range.clone()], &self.weights[range])
    }

    /// `K[z][s]`, zero when not stored.
    pub fn get(&self, z: usize, s: usize) -> f64 {
        let (cols, w) = self.row(z);
        match cols.binary_search(&(s as u32)) {
            Ok(pos) => w[pos],
            Err(_) => 0.0,
        }
    }

    /// Iterates stored entries in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |z| {
            let (cols, w) = self.row(z);
            cols.iter().zip(w).map(move |(&s, &v)| (z, s as usize, v))
        })
    }

    pub fn is_symmetric(&self) -> bool {
        self.triplets().all(|(z, s, w)| self.get(s, z) == w)
    }

    /// `out = K · x`.
    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.n, "matvec operand length");
        assert_eq!(out.len(), self.n, "matvec output length");
        for (z, o) in out.iter_mut().enumerate() {
            let (cols, w) = self.row(z);
            *o = cols.iter().zip(w).map(|(&s, &v)| v * x[s as usize]).sum();
        }
    }

    /// Dense copy, row-major. Intended for small matrices.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut dense = vec![0.0; self.n * self.n];
        for (z, s, w) in self.triplets() {
            dense[z * self.n + s] = w;
        }
        dense
    }
}

fn check_order(n: usize) -> Result<()> {
    if n > u32::MAX as usize {
        return Err(Error::input(format!(
            "matrix order {n} exceeds the supported maximum {}",
            u32::MAX
        )));
    }
    Ok(())
}

/// One instance of the cardinality-constrained quadratic program.
#[derive(Debug, Clone)]
pub struct SelectionProblem {
    scores: ScoreVector,
    similarity: SparseSimilarity,
    budget: usize,
    alpha: f64,
}

impl SelectionProblem {
    pub fn new(scores: ScoreVector, similarity: SparseSimilarity, budget: usize, alpha: f64) -> Result<Self> {
        let n = scores.len();
        if similarity.n() != n {
            return Err(Error::input(format!(
                "score vector has {n} entries but similarity has order {}",
                similarity.n()
            )));
        }
        if budget == 0 || budget > n {
            return Err(Error::input(format!("budget {budget} must lie in [1, {n}]")));
        }
        if !alpha.is_finite() || alpha < 0.0 {
            return Err(Error::input(format!("alpha {alpha} must be finite and >= 0")));
        }
        if !scores.is_normalized() {
            return Err(Error::input("scores must be normalized to [0, 1]"));
        }
        Ok(Self {
            scores,
            similarity,
            budget,
            alpha,
        })
    }

    pub fn n(&self) -> usize {
        self.scores.len()
    }

    pub fn scores(&self) -> &ScoreVector {
        &self.scores
    }

    pub fn similarity(&self) -> &SparseSimilarity {
        &self.similarity
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn objective(&self, selected: &[usize]) -> Result<f64> {
        evaluate_objective(self, selected)
    }
}

/// Outcome of a selection method.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    /// Chosen indices, ascending.
    pub selected: Vec<usize>,
    /// Final probability vector over all samples.
    pub probabilities: Vec<f64>,
    /// Objective value of `selected`.
    pub objective: f64,
    /// L1 distance between consecutive iterates, one entry per iteration.
    pub trace: Vec<f64>,
}

/// Membership mask for `selected`, rejecting out-of-range and repeated indices.
pub(crate) fn selection_mask(n: usize, selected: &[usize]) -> Result<Vec<bool>> {
    let mut mask = vec![false; n];
    for &z in selected {
        if z >= n {
            return Err(Error::input(format!("index {z} out of range for {n} samples")));
        }
        if mask[z] {
            return Err(Error::input(format!("duplicate index {z} in selection")));
        }
        mask[z] = true;
    }
    Ok(mask)
}

/// Objective value of `selected` under `problem`.
pub fn evaluate_objective(problem: &SelectionProblem, selected: &[usize]) -> Result<f64> {
    let mask = selection_mask(problem.n(), selected)?;
    let scores = problem.scores.values();
    let mut sorted = selected.to_vec();
    sorted.sort_unstable();

    let mut linear = 0.0;
    let mut pairwise = 0.0;
    for &z in &sorted {
        linear += scores[z];
        let (cols, w) = problem.similarity.row(z);
        for (&s, &v) in cols.iter().zip(w) {
            if mask[s as usize] {
                pairwise += v;
            }
        }
    }
    Ok(linear - problem.alpha * pairwise)
}
