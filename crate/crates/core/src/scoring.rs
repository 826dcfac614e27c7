//! Intra-sample information scores.
//!
//! Scores either come from an external table (loss, gradient norm, CLIP
//! score, ...) or are computed without labels as the distance of each sample
//! to its k-means centroid.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::problem::{EmbeddingMatrix, ScoreVector};

/// Lloyd k-means settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansParams {
    pub clusters: usize,
    pub max_iters: usize,
    /// Stop once no centroid moves farther than this.
    pub tol: f64,
    pub seed: u64,
}

impl KMeansParams {
    pub fn new(clusters: usize, seed: u64) -> Self {
        Self {
            clusters,
            max_iters: 100,
            tol: 1e-6,
            seed,
        }
    }
}

/// Result of a k-means run.
#[derive(Debug, Clone)]
pub struct KMeansFit {
    /// `clusters × dim` centroids, row-major.
    pub centroids: Vec<f64>,
    pub assignment: Vec<usize>,
    /// Sum of squared distances to assigned centroids after each assignment step.
    pub inertia_trace: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[f64], dim: usize) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.chunks_exact(dim).enumerate() {
        let d = sq_dist(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// k-means++ seeding: first centre uniform, the rest drawn with probability
/// proportional to the squared distance to the closest chosen centre.
fn plus_plus_init(data: &[f64], n: usize, dim: usize, clusters: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut centroids = Vec::with_capacity(clusters * dim);
    let first = rng.random_range(0..n);
    centroids.extend_from_slice(&data[first * dim..(first + 1) * dim]);
    let mut closest: Vec<f64> = (0..n)
        .map(|i| sq_dist(&data[i * dim..(i + 1) * dim], &centroids[..dim]))
        .collect();

    for _ in 1..clusters {
        let total: f64 = closest.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, &d) in closest.iter().enumerate() {
                acc += d;
                if acc > target && d > 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let start = centroids.len();
        centroids.extend_from_slice(&data[pick * dim..(pick + 1) * dim]);
        for (i, c) in closest.iter_mut().enumerate() {
            *c = c.min(sq_dist(&data[i * dim..(i + 1) * dim], &centroids[start..]));
        }
    }
    centroids
}

/// Lloyd iterations from a k-means++ start.
///
/// A cluster left empty by an assignment step is re-seeded at the sample
/// farthest from its own centroid (lowest index on ties); each sample is
/// used for at most one re-seed per iteration.
pub fn kmeans(embeddings: &EmbeddingMatrix, params: &KMeansParams) -> Result<KMeansFit> {
    let n = embeddings.n();
    let dim = embeddings.dim();
    let c = params.clusters;
    if c == 0 || c > n {
        return Err(Error::input(format!("cluster count {c} must lie in [1, {n}]")));
    }
    if params.max_iters == 0 {
        return Err(Error::input("k-means needs at least one iteration"));
    }
    let data = embeddings.to_f64();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut centroids = plus_plus_init(&data, n, dim, c, &mut rng);
    let mut assignment = vec![0usize; n];
    let mut dists = vec![0.0f64; n];
    let mut inertia_trace = Vec::new();

    for _ in 0..params.max_iters {
        data.par_chunks_exact(dim)
            .zip(assignment.par_iter_mut().zip(dists.par_iter_mut()))
            .for_each(|(point, (a, d))| {
                let (best, dist) = nearest(point, &centroids, dim);
                *a = best;
                *d = dist;
            });
        inertia_trace.push(dists.iter().sum());

        let mut sums = vec![0.0f64; c * dim];
        let mut counts = vec![0usize; c];
        for (i, &a) in assignment.iter().enumerate() {
            counts[a] += 1;
            for (s, v) in sums[a * dim..(a + 1) * dim]
                .iter_mut()
                .zip(&data[i * dim..(i + 1) * dim])
            {
                *s += v;
            }
        }

        let mut used = vec![false; n];
        let mut shift: f64 = 0.0;
        for cl in 0..c {
            let new: Vec<f64> = if counts[cl] > 0 {
                sums[cl * dim..(cl + 1) * dim]
                    .iter()
                    .map(|s| s / counts[cl] as f64)
                    .collect()
            } else {
                let mut far = None;
                for i in 0..n {
                    if used[i] {
                        continue;
                    }
                    if far.is_none_or(|f: usize| dists[i] > dists[f]) {
                        far = Some(i);
                    }
                }
                let far = far.expect("fewer clusters than samples");
                used[far] = true;
                data[far * dim..(far + 1) * dim].to_vec()
            };
            let old = &mut centroids[cl * dim..(cl + 1) * dim];
            shift = shift.max(sq_dist(old, &new).sqrt());
            old.copy_from_slice(&new);
        }
        if shift <= params.tol {
            break;
        }
    }

    // Final assignment against the converged centroids.
    for (i, point) in data.chunks_exact(dim).enumerate() {
        assignment[i] = nearest(point, &centroids, dim).0;
    }
    Ok(KMeansFit {
        centroids,
        assignment,
        inertia_trace,
    })
}

/// Unsupervised score: Euclidean distance from each sample to its k-means
/// centroid. Raw, not normalized.
pub fn ssp_scores(embeddings: &EmbeddingMatrix, params: &KMeansParams) -> Result<ScoreVector> {
    let fit = kmeans(embeddings, params)?;
    let dim = embeddings.dim();
    let data = embeddings.to_f64();
    let scores = data
        .chunks_exact(dim)
        .zip(&fit.assignment)
        .map(|(point, &a)| sq_dist(point, &fit.centroids[a * dim..(a + 1) * dim]).sqrt())
        .collect();
    ScoreVector::new(scores)
}

/// Min-max map to `[0, 1]`. A constant vector maps to all `0.5`.
pub fn normalize_scores(scores: &ScoreVector) -> ScoreVector {
    let v = scores.values();
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let out = if hi > lo {
        let span = hi - lo;
        v.iter().map(|x| ((x - lo) / span).clamp(0.0, 1.0)).collect()
    } else {
        vec![0.5; v.len()]
    };
    ScoreVector::new(out).expect("finite by construction")
}

/// Dense score vector from `(index, score)` rows in any order.
///
/// Rows must cover every index `0..rows.len()` exactly once. Errors name the
/// 1-based row number.
pub fn load_scores(rows: &[(usize, f64)]) -> Result<ScoreVector> {
    let n = rows.len();
    let mut values = vec![f64::NAN; n];
    let mut seen = vec![false; n];
    for (line, &(index, score)) in rows.iter().enumerate() {
        let row = line + 1;
        if index >= n {
            return Err(Error::input(format!(
                "row {row}: index {index} out of range for {n} rows"
            )));
        }
        if seen[index] {
            return Err(Error::input(format!("row {row}: duplicate index {index}")));
        }
        if !score.is_finite() {
            return Err(Error::input(format!("row {row}: non-finite score for index {index}")));
        }
        seen[index] = true;
        values[index] = score;
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::input(format!("missing score for index {missing}")));
    }
    ScoreVector::new(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn points(rows: &[[f32; 2]]) -> EmbeddingMatrix {
        EmbeddingMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn single_cluster_symmetric_pair() {
        let s = ssp_scores(&points(&[[0.0, 0.0], [2.0, 0.0]]), &KMeansParams::new(1, 0)).unwrap();
        assert_eq!(s.values(), &[1.0, 1.0]);
    }

    #[test]
    fn point_at_centroid_scores_zero() {
        let s = ssp_scores(&points(&[[1.0, 1.0]]), &KMeansParams::new(1, 0)).unwrap();
        assert_eq!(s.values(), &[0.0]);
    }

    #[test]
    fn two_separated_clusters() {
        let e = points(&[[0.0, 0.0], [0.1, 0.0], [10.0, 0.0]]);
        for seed in 0..20 {
            let s = ssp_scores(&e, &KMeansParams::new(2, seed)).unwrap();
            let v = s.values();
            assert!((v[0] - 0.05).abs() < 1e-7, "seed {seed}: {v:?}");
            assert!((v[1] - 0.05).abs() < 1e-7, "seed {seed}: {v:?}");
            assert_eq!(v[2], 0.0);
        }
    }

    #[test]
    fn too_many_clusters() {
        let e = points(&[[0.0, 0.0], [1.0, 0.0]]);
        assert!(matches!(ssp_scores(&e, &KMeansParams::new(3, 0)), Err(Error::Input(_))));
        assert!(ssp_scores(&e, &KMeansParams::new(0, 0)).is_err());
    }

    #[test]
    fn duplicate_points_reseed_empty_clusters() {
        let e = points(&[[0.0, 0.0], [0.0, 0.0], [0.0, 0.0], [5.0, 5.0]]);
        let fit = kmeans(&e, &KMeansParams::new(3, 1)).unwrap();
        assert_eq!(fit.assignment.len(), 4);
        let s = ssp_scores(&e, &KMeansParams::new(3, 1)).unwrap();
        assert!(s.values().iter().all(|&v| v == 0.0), "{:?}", s.values());
    }

    #[test]
    fn normalize_examples() {
        let n = |v: Vec<f64>| normalize_scores(&ScoreVector::new(v).unwrap()).into_values();
        assert_eq!(n(vec![2.0, 4.0, 6.0]), vec![0.0, 0.5, 1.0]);
        assert_eq!(n(vec![7.0, 7.0, 7.0]), vec![0.5, 0.5, 0.5]);
        assert_eq!(n(vec![-1.0, 0.0, 3.0]), vec![0.0, 0.25, 1.0]);
    }

    #[test]
    fn load_examples() {
        assert_eq!(load_scores(&[(0, 0.3), (1, 0.9)]).unwrap().values(), &[0.3, 0.9]);
        assert_eq!(load_scores(&[(1, 0.9), (0, 0.3)]).unwrap().values(), &[0.3, 0.9]);
        let err = load_scores(&[(0, 0.3), (0, 0.5)]).unwrap_err().to_string();
        assert!(err.contains("duplicate") && err.contains("row 2"), "{err}");
        assert!(load_scores(&[(0, 0.3), (2, 0.5)]).is_err());
        assert!(load_scores(&[(0, f64::INFINITY)]).is_err());
    }

    fn cloud() -> impl Strategy<Value = (Vec<f32>, usize, u64)> {
        (5usize..60, 1usize..5, any::<u64>())
            .prop_flat_map(|(n, c, seed)| (proptest::collection::vec(-10.0f32..10.0, n * 3), Just(c), Just(seed)))
    }

    proptest! {
        #[test]
        fn inertia_non_increasing((data, c, seed) in cloud()) {
            let n = data.len() / 3;
            let e = EmbeddingMatrix::new(n, 3, data).unwrap();
            let fit = kmeans(&e, &KMeansParams::new(c, seed)).unwrap();
            for w in fit.inertia_trace.windows(2) {
                prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-12, "{:?}", fit.inertia_trace);
            }
        }

        #[test]
        fn ssp_deterministic((data, c, seed) in cloud()) {
            let n = data.len() / 3;
            let e = EmbeddingMatrix::new(n, 3, data).unwrap();
            let a = ssp_scores(&e, &KMeansParams::new(c, seed)).unwrap();
            let b = ssp_scores(&e, &KMeansParams::new(c, seed)).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn normalize_preserves_order(v in proptest::collection::vec(-1e3f64..1e3, 2..40)) {
            let s = ScoreVector::new(v.clone()).unwrap();
            let out = normalize_scores(&s);
            let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assume!(hi > lo);
            for i in 0..v.len() {
                for j in 0..v.len() {
                    if v[i] < v[j] {
                        prop_assert!(out.values()[i] <= out.values()[j]);
                    }
                }
            }
            prop_assert!(out.is_normalized());
        }
    }
}
