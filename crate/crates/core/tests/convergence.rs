use infomax::simgraph::{build_knn_similarity, l2_normalize, KnnParams};
use infomax::solver::{solve, SolverParams, Temperature};
use infomax::{EmbeddingMatrix, ScoreVector, SelectionProblem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const ITERS: usize = 50;
const SETTLED: f64 = 1e-2;

#[test]
fn trace_shrinks_and_settles() {
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, dim) = (200, 16);
        let p = rng.random_range(2..=100);
        let data = (0..n * dim).map(|_| rng.sample::<f32, _>(StandardNormal)).collect();
        let unit = l2_normalize(&EmbeddingMatrix::new(n, dim, data).unwrap()).unwrap();
        let k = build_knn_similarity(
            &unit,
            &KnnParams {
                k: 5,
                ..Default::default()
            },
        )
        .unwrap();
        let scores = ScoreVector::new((0..n).map(|_| rng.random::<f64>()).collect()).unwrap();
        let problem = SelectionProblem::new(scores, k, p, 0.3).unwrap();
        let params = SolverParams {
            iters: ITERS,
            alpha: 0.3,
            temperature: Temperature::Auto,
            seed,
            ..Default::default()
        };
        let trace = solve(&problem, &params).unwrap().trace;
        assert_eq!(trace.len(), ITERS);
        assert!(
            trace[ITERS - 1] <= trace[0],
            "seed {seed}: {} > {}",
            trace[ITERS - 1],
            trace[0]
        );
        let min = trace.iter().copied().fold(f64::INFINITY, f64::min);
        assert!(min < SETTLED, "seed {seed}: smallest step {min}");
    }
}
