//! Solver-vs-exhaustive-optimum comparison on small blob datasets.
//!
//! Generates 100 seeded instances (20 samples drawn from 4 Gaussian blobs in
//! 8 dimensions, k-means distance scores with 4 clusters, k = 5, α = 0.3,
//! automatic temperature, 50 iterations, budget 5) and prints the ratio of
//! the solver objective to the optimum, plus the top-score baseline for
//! reference. The acceptance suite uses the same generator.
//!
//! ```text
//! cargo run --release --example oracle_gap
//! ```

use infomax::baselines::{baseline_select, BaselineMethod, BaselineSpec};
use infomax::oracle::{brute_force_optimum, OracleLimit};
use infomax::pipeline::{select_coreset, Budget, PipelineConfig, ScoreSource};
use infomax::scoring::KMeansParams;
use infomax::solver::SolverParams;
use infomax::EmbeddingMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn blobs(seed: u64) -> EmbeddingMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = 8;
    let centers: Vec<Vec<f64>> = (0..4)
        .map(|_| (0..dim).map(|_| 3.0 * rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    let mut data = Vec::with_capacity(20 * dim);
    for i in 0..20 {
        for d in 0..dim {
            let v = centers[i % 4][d] + 0.7 * rng.sample::<f64, _>(StandardNormal);
            data.push(v as f32);
        }
    }
    EmbeddingMatrix::new(20, dim, data).unwrap()
}

fn main() {
    let mut ratios = Vec::new();
    let (mut solver_sum, mut top_sum) = (0.0, 0.0);
    for seed in 0..100u64 {
        let e = blobs(seed);
        let config = PipelineConfig {
            score_source: ScoreSource::Ssp(KMeansParams::new(4, seed)),
            solver: SolverParams {
                iters: 50,
                seed,
                ..Default::default()
            },
            ..PipelineConfig::new(Budget::Count(5))
        };
        let sel = select_coreset(&config, &e, None).unwrap();
        let best = brute_force_optimum(&sel.problem, &OracleLimit::default()).unwrap();
        let top = baseline_select(&BaselineSpec::new(BaselineMethod::TopScore, seed), &sel.problem, None).unwrap();
        let ratio = sel.result.objective / best.objective;
        println!(
            "seed {seed:3}: solver {:.4} top_score {:.4} optimum {:.4} ratio {ratio:.4}",
            sel.result.objective, top.objective, best.objective
        );
        ratios.push(ratio);
        solver_sum += sel.result.objective;
        top_sum += top.objective;
    }
    ratios.sort_by(f64::total_cmp);
    let at_least = |t: f64| ratios.iter().filter(|&&r| r >= t).count();
    println!("instances with ratio >= 0.90: {}", at_least(0.90));
    println!("instances with ratio >= 0.95: {}", at_least(0.95));
    println!("instances at the optimum:      {}", at_least(1.0 - 1e-12));
    println!("minimum ratio: {:.4}, 20th percentile: {:.4}", ratios[0], ratios[19]);
    println!(
        "mean solver objective {:.4}, mean top_score objective {:.4}",
        solver_sum / 100.0,
        top_sum / 100.0
    );
}
