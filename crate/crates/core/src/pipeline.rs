//! End-to-end selection: scores, random partitioning, per-partition kNN
//! graphs and solves, budget merge, and selection diagnostics.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::problem::{
    evaluate_objective, selection_mask, EmbeddingMatrix, ScoreVector, SelectionProblem, SelectionResult,
    SparseSimilarity,
};
use crate::scoring::{normalize_scores, ssp_scores, KMeansParams};
use crate::simgraph::{build_knn_similarity, l2_normalize, KnnParams};
use crate::solver::{solve, SolverParams};

/// Number of equal-width bins in the score histogram.
pub const HISTOGRAM_BINS: usize = 20;

/// Selection size, absolute or as a fraction of the dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Budget {
    Ratio(f64),
    Count(usize),
}

impl Budget {
    /// Absolute budget for `n` samples. Ratios round half up.
    pub fn resolve(self, n: usize) -> Result<usize> {
        let p = match self {
            Budget::Ratio(r) => {
                if !(r > 0.0 && r < 1.0) {
                    return Err(Error::input(format!("ratio {r} must lie strictly between 0 and 1")));
                }
                (r * n as f64 + 0.5).floor() as usize
            }
            Budget::Count(p) => p,
        };
        if p == 0 || p > n {
            return Err(Error::input(format!("budget {p} must lie in [1, {n}]")));
        }
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScoreSource {
    /// Scores are supplied by the caller.
    External,
    /// Distance to k-means centroid, computed on the raw embeddings.
    Ssp(KMeansParams),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    pub budget: Budget,
    /// Number of random shards `d`.
    pub partitions: usize,
    pub knn: KnnParams,
    pub solver: SolverParams,
    /// Seed of the shard permutation.
    pub seed: u64,
    pub score_source: ScoreSource,
}

impl PipelineConfig {
    pub fn new(budget: Budget) -> Self {
        Self {
            budget,
            partitions: 1,
            knn: KnnParams::default(),
            solver: SolverParams::default(),
            seed: 0,
            score_source: ScoreSource::External,
        }
    }
}

/// Five-number summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Quantiles {
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
}

/// Counts of selected scores over equal-width bins spanning `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn edges(&self) -> Vec<f64> {
        let bins = self.counts.len();
        let width = (self.hi - self.lo) / bins as f64;
        (0..=bins).map(|i| self.lo + width * i as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub objective: f64,
    /// Mean Euclidean distance from every sample to its nearest selected sample.
    pub coverage_mean: f64,
    /// Covering radius.
    pub coverage_max: f64,
    pub score_quantiles: Quantiles,
    pub score_histogram: Histogram,
}

/// Output of a full pipeline run.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub result: SelectionResult,
    pub report: MetricsReport,
    /// Scores before normalization, as supplied or computed.
    pub raw_scores: ScoreVector,
    /// The global problem the merged selection was scored against: normalized
    /// scores and the block-diagonal union of the partition graphs.
    pub problem: SelectionProblem,
}

/// Selection and the global problem, without diagnostics.
#[derive(Debug, Clone)]
pub struct CoresetSelection {
    pub result: SelectionResult,
    pub raw_scores: ScoreVector,
    pub problem: SelectionProblem,
    /// Shard index lists, in shard order.
    pub partitions: Vec<Vec<usize>>,
    /// Per-shard budgets.
    pub budgets: Vec<usize>,
}

/// Splits `0..n` into `d` disjoint parts of near-equal size, larger parts
/// first. One part is the identity order; otherwise indices are shuffled
/// with `seed` and each part is sorted.
pub fn partition_dataset(n: usize, d: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if d == 0 || d > n {
        return Err(Error::input(format!("partition count {d} must lie in [1, {n}]")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    if d == 1 {
        return Ok(vec![perm]);
    }
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let base = n / d;
    let extra = n % d;
    let mut parts = Vec::with_capacity(d);
    let mut start = 0;
    for i in 0..d {
        let len = base + usize::from(i < extra);
        let mut part = perm[start..start + len].to_vec();
        part.sort_unstable();
        parts.push(part);
        start += len;
    }
    Ok(parts)
}

/// Per-partition budgets: `⌊p·n_i/n⌋`, then the remainder one each to the
/// first partitions.
pub fn partition_budgets(sizes: &[usize], p: usize) -> Vec<usize> {
    let n: usize = sizes.iter().sum();
    let mut budgets: Vec<usize> = sizes
        .iter()
        .map(|&ni| ((p as u128 * ni as u128) / n as u128) as usize)
        .collect();
    let remainder = p - budgets.iter().sum::<usize>();
    for b in budgets.iter_mut().take(remainder) {
        *b += 1;
    }
    budgets
}

struct PartitionOutcome {
    selected: Vec<usize>,
    probabilities: Vec<f64>,
    trace: Vec<f64>,
    edges: Vec<(usize, usize, f64)>,
}

fn solve_partition(
    indices: &[usize],
    budget: usize,
    unit: &EmbeddingMatrix,
    scores: &ScoreVector,
    config: &PipelineConfig,
    shard: usize,
) -> Result<PartitionOutcome> {
    let ni = indices.len();
    let local_embeddings = unit.select_rows(indices)?;
    let similarity = if ni > 1 {
        let knn = KnnParams {
            k: config.knn.k.min(ni - 1),
            ..config.knn
        };
        build_knn_similarity(&local_embeddings, &knn)?
    } else {
        SparseSimilarity::empty(ni)
    };
    let edges = similarity
        .triplets()
        .map(|(z, s, w)| (indices[z], indices[s], w))
        .collect();
    if budget == 0 {
        return Ok(PartitionOutcome {
            selected: Vec::new(),
            probabilities: vec![1.0 / ni as f64; ni],
            trace: vec![0.0; config.solver.iters],
            edges,
        });
    }
    let local_scores = ScoreVector::new(indices.iter().map(|&i| scores.values()[i]).collect())?;
    let problem = SelectionProblem::new(local_scores, similarity, budget, config.solver.alpha)?;
    let params = SolverParams {
        seed: config.solver.seed.wrapping_add(shard as u64),
        ..config.solver
    };
    let result = solve(&problem, &params)?;
    Ok(PartitionOutcome {
        selected: result.selected.iter().map(|&z| indices[z]).collect(),
        probabilities: result.probabilities,
        trace: result.trace,
        edges,
    })
}

/// Runs the selection without diagnostics.
///
/// Each shard gets its own kNN graph over its own samples (`k` is capped at
/// the shard size minus one) and an independent solve seeded with
/// `solver.seed + shard`. The merged probability vector weights each shard
/// by `n_i / n`, and the trace is the L1 step of that merged vector.
pub fn select_coreset(
    config: &PipelineConfig,
    embeddings: &EmbeddingMatrix,
    scores: Option<&ScoreVector>,
) -> Result<CoresetSelection> {
    let n = embeddings.n();
    let raw_scores = match (config.score_source, scores) {
        (ScoreSource::Ssp(params), _) => ssp_scores(embeddings, &params)?,
        (ScoreSource::External, Some(s)) => s.clone(),
        (ScoreSource::External, None) => {
            return Err(Error::input("external score source selected but no scores supplied"))
        }
    };
    if raw_scores.len() != n {
        return Err(Error::input(format!(
            "{} scores supplied for {n} embeddings",
            raw_scores.len()
        )));
    }
    let p = config.budget.resolve(n)?;
    let scores = normalize_scores(&raw_scores);
    let unit = if embeddings.is_normalized() {
        embeddings.clone()
    } else {
        l2_normalize(embeddings)?
    };

    let partitions = partition_dataset(n, config.partitions, config.seed)?;
    let sizes: Vec<usize> = partitions.iter().map(Vec::len).collect();
    let budgets = partition_budgets(&sizes, p);

    let outcomes = partitions
        .par_iter()
        .zip(budgets.par_iter())
        .enumerate()
        .map(|(shard, (indices, &budget))| solve_partition(indices, budget, &unit, &scores, config, shard))
        .collect::<Result<Vec<_>>>()?;

    let mut selected = Vec::with_capacity(p);
    let mut probabilities = vec![0.0; n];
    let mut trace = vec![0.0; config.solver.iters];
    let mut edges = Vec::new();
    for (indices, outcome) in partitions.iter().zip(outcomes) {
        let weight = indices.len() as f64 / n as f64;
        selected.extend(outcome.selected);
        for (&g, &x) in indices.iter().zip(&outcome.probabilities) {
            probabilities[g] = weight * x;
        }
        for (t, v) in trace.iter_mut().zip(&outcome.trace) {
            *t += weight * v;
        }
        edges.extend(outcome.edges);
    }
    selected.sort_unstable();

    // Shard graphs are already in final form; their union is block-diagonal.
    let edges = edges.into_iter().map(|(z, s, w)| (z as u32, s as u32, w)).collect();
    let similarity = SparseSimilarity::from_directed(n, edges, false);
    let problem = SelectionProblem::new(scores, similarity, p, config.solver.alpha)?;
    let objective = evaluate_objective(&problem, &selected)?;
    Ok(CoresetSelection {
        result: SelectionResult {
            selected,
            probabilities,
            objective,
            trace,
        },
        raw_scores,
        problem,
        partitions,
        budgets,
    })
}

/// Full pipeline: selection followed by [`evaluate_selection`].
pub fn run_pipeline(
    config: &PipelineConfig,
    embeddings: &EmbeddingMatrix,
    scores: Option<&ScoreVector>,
) -> Result<PipelineOutput> {
    let sel = select_coreset(config, embeddings, scores)?;
    let report = evaluate_selection(&sel.result.selected, embeddings, &sel.problem, &sel.raw_scores)?;
    Ok(PipelineOutput {
        result: sel.result,
        report,
        raw_scores: sel.raw_scores,
        problem: sel.problem,
    })
}

/// Linear-interpolation quantile of ascending `sorted`.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Objective, coverage and score-distribution diagnostics for a selection.
///
/// Coverage distances are Euclidean on `embeddings` as given. Quantiles and
/// the histogram use `raw_scores`; the histogram spans the raw range of all
/// samples.
pub fn evaluate_selection(
    selected: &[usize],
    embeddings: &EmbeddingMatrix,
    problem: &SelectionProblem,
    raw_scores: &ScoreVector,
) -> Result<MetricsReport> {
    let n = problem.n();
    if selected.is_empty() {
        return Err(Error::input("cannot evaluate an empty selection"));
    }
    if embeddings.n() != n || raw_scores.len() != n {
        return Err(Error::input(format!(
            "embeddings ({}) and scores ({}) must both cover {n} samples",
            embeddings.n(),
            raw_scores.len()
        )));
    }
    selection_mask(n, selected)?;
    let objective = evaluate_objective(problem, selected)?;

    let data = embeddings.to_f64();
    let dim = embeddings.dim();
    let nearest: Vec<f64> = data
        .par_chunks_exact(dim)
        .map(|point| {
            selected
                .iter()
                .map(|&s| {
                    point
                        .iter()
                        .zip(&data[s * dim..(s + 1) * dim])
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                })
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .collect();
    let coverage_mean = nearest.iter().sum::<f64>() / n as f64;
    let coverage_max = nearest.iter().copied().fold(0.0, f64::max);

    let raw = raw_scores.values();
    let mut chosen: Vec<f64> = selected.iter().map(|&i| raw[i]).collect();
    chosen.sort_by(f64::total_cmp);
    let score_quantiles = Quantiles {
        min: chosen[0],
        q25: quantile(&chosen, 0.25),
        median: quantile(&chosen, 0.5),
        q75: quantile(&chosen, 0.75),
        max: chosen[chosen.len() - 1],
    };

    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / HISTOGRAM_BINS as f64;
    let mut counts = vec![0u64; HISTOGRAM_BINS];
    for &s in &chosen {
        let b = if width > 0.0 {
            (((s - lo) / width) as usize).min(HISTOGRAM_BINS - 1)
        } else {
            0
        };
        counts[b] += 1;
    }

    Ok(MetricsReport {
        objective,
        coverage_mean,
        coverage_max,
        score_quantiles,
        score_histogram: Histogram { lo, hi, counts },
    })
}
