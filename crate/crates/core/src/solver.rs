//! Iterative softmax solver for the relaxed selection problem.
//!
//! The relaxed variable `X` is a probability vector over samples. Each step
//! evaluates the gradient of the quadratic objective at `X^t` through one
//! sparse matrix-vector product and maps it back onto the simplex:
//!
//! ```text
//! X^{t+1} = softmax((p·I − 2pα·K·X^t) / τ)
//! ```
//!
//! `τ = 1` is the plain update. For large budgets the argument spans
//! `[0, p]` and saturates the softmax in one step, so `Temperature::Auto`
//! uses `τ = max(1, p/10)`.
//!
//! The `generalized_step` keeps the entropy weight `λ` and the proximal step
//! `β` of the mirror-descent sub-problem explicit; `λ = 1, β → ∞` recovers
//! the plain update. After `T` steps the top-`p` entries form the selection.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::problem::{evaluate_objective, SelectionProblem, SelectionResult};

/// Divisor applied to the softmax argument.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Temperature {
    /// `max(1, p / 10)`.
    Auto,
    Fixed(f64),
}

impl Temperature {
    pub fn resolve(self, budget: usize) -> f64 {
        match self {
            Temperature::Auto => (budget as f64 / 10.0).max(1.0),
            Temperature::Fixed(t) => t,
        }
    }
}

impl std::fmt::Display for Temperature {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Temperature::Auto => f.write_str("auto"),
            Temperature::Fixed(t) => write!(f, "{t}"),
        }
    }
}

impl std::str::FromStr for Temperature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(Temperature::Auto);
        }
        match s.parse::<f64>() {
            Ok(t) if t.is_finite() && t > 0.0 => Ok(Temperature::Fixed(t)),
            _ => Err(Error::input(format!(
                "temperature must be 'auto' or a positive number, got '{s}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverParams {
    /// Number of updates `T`.
    pub iters: usize,
    /// Pairwise weight, used when the pipeline builds a problem.
    pub alpha: f64,
    pub temperature: Temperature,
    /// Scale of the multiplicative jitter on the uniform start; 0 disables it.
    pub jitter_eps: f64,
    pub seed: u64,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            iters: 20,
            alpha: 0.3,
            temperature: Temperature::Auto,
            jitter_eps: 1e-6,
            seed: 0,
        }
    }
}

impl SolverParams {
    fn validate(&self) -> Result<()> {
        if self.iters == 0 {
            return Err(Error::input("solver needs at least one iteration"));
        }
        if !self.alpha.is_finite() || self.alpha < 0.0 {
            return Err(Error::input(format!("alpha {} must be finite and >= 0", self.alpha)));
        }
        if let Temperature::Fixed(t) = self.temperature {
            if !t.is_finite() || t <= 0.0 {
                return Err(Error::input(format!("temperature {t} must be positive")));
            }
        }
        if !self.jitter_eps.is_finite() || self.jitter_eps < 0.0 {
            return Err(Error::input(format!(
                "jitter {} must be finite and >= 0",
                self.jitter_eps
            )));
        }
        Ok(())
    }
}

/// Current iterate of the solver.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub x: Vec<f64>,
    pub iteration: usize,
}

impl SolverState {
    pub fn uniform(n: usize) -> Self {
        Self {
            x: vec![1.0 / n as f64; n],
            iteration: 0,
        }
    }

    /// Uniform start perturbed as `x_z ∝ 1 + eps·u_z`, `u_z ~ U(0, 1)`.
    pub fn jittered(n: usize, eps: f64, seed: u64) -> Self {
        if eps == 0.0 {
            return Self::uniform(n);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x: Vec<f64> = (0..n).map(|_| 1.0 + eps * rng.random::<f64>()).collect();
        let total: f64 = x.iter().sum();
        x.iter_mut().for_each(|v| *v /= total);
        Self { x, iteration: 0 }
    }
}

/// Entropy weight `λ` and proximal step `β` of the general update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneralizedParams {
    lambda: f64,
    beta: f64,
}

impl GeneralizedParams {
    pub fn new(lambda: f64, beta: f64) -> Result<Self> {
        if !lambda.is_finite() || !beta.is_finite() || beta <= 0.0 {
            return Err(Error::input(format!("invalid lambda {lambda} / beta {beta}")));
        }
        if lambda * beta == 1.0 {
            return Err(Error::input("lambda * beta must differ from 1"));
        }
        Ok(Self { lambda, beta })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

/// Numerically stable softmax: `exp(v_i − max v) / Σ exp(v_j − max v)`.
pub fn softmax(v: &[f64]) -> Vec<f64> {
    let mut out = v.to_vec();
    softmax_in_place(&mut out);
    out
}

fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        total += *x;
    }
    for x in v.iter_mut() {
        *x /= total;
    }
}

fn check_state(state: &SolverState, problem: &SelectionProblem) -> Result<()> {
    if state.x.len() != problem.n() {
        return Err(Error::input(format!(
            "state has {} entries, problem has {} samples",
            state.x.len(),
            problem.n()
        )));
    }
    Ok(())
}

/// `I − 2α·K·x`, the gradient of the relaxed objective at `x`.
fn gradient(problem: &SelectionProblem, x: &[f64]) -> Vec<f64> {
    let mut kx = vec![0.0; problem.n()];
    problem.similarity().matvec(x, &mut kx);
    let two_alpha = 2.0 * problem.alpha();
    problem
        .scores()
        .values()
        .iter()
        .zip(&kx)
        .map(|(i, k)| i - two_alpha * k)
        .collect()
}

/// One plain update.
pub fn infomax_step(state: &SolverState, problem: &SelectionProblem, params: &SolverParams) -> Result<SolverState> {
    check_state(state, problem)?;
    let p = problem.budget() as f64;
    let tau = params.temperature.resolve(problem.budget());
    let mut u = gradient(problem, &state.x);
    for v in u.iter_mut() {
        *v = p * *v / tau;
    }
    softmax_in_place(&mut u);
    Ok(SolverState {
        x: u,
        iteration: state.iteration + 1,
    })
}

/// One update of the entropy-regularized proximal sub-problem:
///
/// ```text
/// X̂ = exp( βp/(λβ−1) · (I − 2αK·X^t) + 1/(1−λβ) · (log(X^t/p) − X^t) )
/// ```
///
/// normalized to sum 1. Every entry of `X^t` must be positive.
pub fn generalized_step(
    state: &SolverState,
    problem: &SelectionProblem,
    gen: &GeneralizedParams,
) -> Result<SolverState> {
    check_state(state, problem)?;
    if let Some(z) = state.x.iter().position(|&v| v <= 0.0 || !v.is_finite()) {
        return Err(Error::Numeric(format!(
            "iterate entry {z} is {} but the general update takes its logarithm",
            state.x[z]
        )));
    }
    let p = problem.budget() as f64;
    let lb = gen.lambda * gen.beta;
    let grad_coef = gen.beta * p / (lb - 1.0);
    let prox_coef = 1.0 / (1.0 - lb);
    let mut v = gradient(problem, &state.x);
    for (g, &x) in v.iter_mut().zip(&state.x) {
        *g = grad_coef * *g + prox_coef * ((x / p).ln() - x);
    }
    softmax_in_place(&mut v);
    Ok(SolverState {
        x: v,
        iteration: state.iteration + 1,
    })
}

fn l1_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Indices of the `p` largest entries, ascending. Ties go to the lower index.
pub fn top_p(values: &[f64], p: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    order.truncate(p);
    order.sort_unstable();
    order
}

fn run<F>(problem: &SelectionProblem, params: &SolverParams, mut step: F) -> Result<SelectionResult>
where
    F: FnMut(&SolverState) -> Result<SolverState>,
{
    params.validate()?;
    let mut state = SolverState::jittered(problem.n(), params.jitter_eps, params.seed);
    let mut trace = Vec::with_capacity(params.iters);
    for _ in 0..params.iters {
        let next = step(&state)?;
        let diff = l1_diff(&next.x, &state.x);
        log::debug!("iteration {} |dX|_1 = {diff:e}", next.iteration);
        trace.push(diff);
        state = next;
    }
    let selected = top_p(&state.x, problem.budget());
    let objective = evaluate_objective(problem, &selected)?;
    Ok(SelectionResult {
        selected,
        probabilities: state.x,
        objective,
        trace,
    })
}

/// Runs `params.iters` plain updates from a jittered uniform start and
/// keeps the top-`p` entries of the final iterate.
pub fn solve(problem: &SelectionProblem, params: &SolverParams) -> Result<SelectionResult> {
    run(problem, params, |s| infomax_step(s, problem, params))
}

/// Same as [`solve`] but with the general `(λ, β)` update.
pub fn solve_generalized(
    problem: &SelectionProblem,
    params: &SolverParams,
    gen: &GeneralizedParams,
) -> Result<SelectionResult> {
    run(problem, params, |s| generalized_step(s, problem, gen))
}

/// Pairwise weight equivalent to a graph-cut conditional gain with weight
/// `λ` under budget `p`: `α = λ / (p − 1)`.
pub fn alpha_from_lambda(lambda: f64, p: usize) -> Result<f64> {
    if p < 2 {
        return Err(Error::input(format!("budget {p} must be at least 2")));
    }
    Ok(lambda / (p - 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{ScoreVector, SparseSimilarity};
    use proptest::prelude::*;

    fn problem(scores: Vec<f64>, trip: &[(usize, usize, f64)], p: usize, alpha: f64) -> SelectionProblem {
        let n = scores.len();
        SelectionProblem::new(
            ScoreVector::new(scores).unwrap(),
            SparseSimilarity::from_triplets(n, trip.iter().copied()).unwrap(),
            p,
            alpha,
        )
        .unwrap()
    }

    fn tau1() -> SolverParams {
        SolverParams {
            temperature: Temperature::Fixed(1.0),
            ..Default::default()
        }
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax(&[0.0, 0.0]), vec![0.5, 0.5]);
        let e = std::f64::consts::E;
        let s = softmax(&[1.0, 0.0]);
        assert!((s[0] - e / (1.0 + e)).abs() < 1e-15 && (s[1] - 1.0 / (1.0 + e)).abs() < 1e-15);
        assert!((s[0] - 0.73106).abs() < 1e-5);
        assert_eq!(softmax(&[1001.0, 1000.0]), s);
    }

    #[test]
    fn step_without_coupling() {
        let pr = problem(vec![1.0, 0.0], &[], 1, 0.3);
        let st = SolverState {
            x: vec![0.9, 0.1],
            iteration: 0,
        };
        let next = infomax_step(&st, &pr, &tau1()).unwrap();
        assert_eq!(next.x, softmax(&[1.0, 0.0]));
        assert_eq!(next.iteration, 1);
    }

    #[test]
    fn uniform_scores_stay_uniform() {
        let pr = problem(vec![0.4; 5], &[], 2, 0.3);
        let next = infomax_step(&SolverState::uniform(5), &pr, &tau1()).unwrap();
        for v in next.x {
            assert!((v - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn step_on_duplicate_instance() {
        let pr = problem(vec![0.9, 0.8, 0.1, 0.2], &[(0, 1, 0.95)], 2, 0.3);
        // Dense oracle for u = p·I − 2pα·K·X with X uniform.
        let dense = pr.similarity().to_dense();
        let x = [0.25; 4];
        let mut u = [0.0; 4];
        for z in 0..4 {
            let kx: f64 = (0..4).map(|s| dense[z * 4 + s] * x[s]).sum();
            u[z] = 2.0 * pr.scores().values()[z] - 2.0 * 2.0 * 0.3 * kx;
        }
        let expected_u = [1.515, 1.315, 0.2, 0.4];
        for z in 0..4 {
            assert!((u[z] - expected_u[z]).abs() < 1e-12);
        }
        let next = infomax_step(&SolverState::uniform(4), &pr, &tau1()).unwrap();
        let expected = softmax(&expected_u);
        for z in 0..4 {
            assert!((next.x[z] - expected[z]).abs() < 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch() {
        let pr = problem(vec![0.5, 0.5], &[], 1, 0.3);
        assert!(infomax_step(&SolverState::uniform(3), &pr, &tau1()).is_err());
    }

    #[test]
    fn auto_temperature() {
        assert_eq!(Temperature::Auto.resolve(5), 1.0);
        assert_eq!(Temperature::Auto.resolve(200), 20.0);
        assert_eq!("auto".parse::<Temperature>().unwrap(), Temperature::Auto);
        assert_eq!("2.5".parse::<Temperature>().unwrap(), Temperature::Fixed(2.5));
        assert!("0".parse::<Temperature>().is_err());
        assert!("hot".parse::<Temperature>().is_err());
    }

    #[test]
    fn generalized_rejects_zero_entry() {
        let pr = problem(vec![0.5, 0.5], &[], 1, 0.3);
        let gen = GeneralizedParams::new(1.0, 1e9).unwrap();
        let st = SolverState {
            x: vec![1.0, 0.0],
            iteration: 0,
        };
        assert!(matches!(generalized_step(&st, &pr, &gen), Err(Error::Numeric(_))));
        assert!(GeneralizedParams::new(0.5, 2.0).is_err());
    }

    #[test]
    fn generalized_preserves_symmetry() {
        let pr = problem(vec![0.7, 0.7, 0.2], &[(0, 2, 0.5), (1, 2, 0.5)], 2, 0.4);
        let gen = GeneralizedParams::new(0.5, 3.0).unwrap();
        let st = SolverState {
            x: vec![0.4, 0.4, 0.2],
            iteration: 0,
        };
        let next = generalized_step(&st, &pr, &gen).unwrap();
        assert_eq!(next.x[0].to_bits(), next.x[1].to_bits());
        assert!((next.x.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn zero_alpha_selects_top_scores() {
        let pr = problem(vec![0.2, 0.9, 0.4, 0.7], &[(0, 1, 1.0), (1, 3, 0.8)], 2, 0.0);
        let r = solve(&pr, &SolverParams::default()).unwrap();
        assert_eq!(r.selected, vec![1, 3]);
        assert_eq!(r.trace.len(), 20);
    }

    #[test]
    fn zero_coupling_matches_zero_alpha() {
        let a = problem(vec![0.2, 0.9, 0.4, 0.7], &[], 2, 0.8);
        let b = problem(vec![0.2, 0.9, 0.4, 0.7], &[], 2, 0.0);
        let p = SolverParams::default();
        assert_eq!(solve(&a, &p).unwrap().selected, solve(&b, &p).unwrap().selected);
    }

    #[test]
    fn duplicate_suppression() {
        let pr = problem(vec![0.9, 0.9, 0.85, 0.1], &[(0, 1, 1.0)], 2, 2.0);
        // Brute force over all 2-subsets.
        let mut best = (f64::NEG_INFINITY, vec![]);
        for a in 0..4 {
            for b in a + 1..4 {
                let v = pr.objective(&[a, b]).unwrap();
                if v > best.0 {
                    best = (v, vec![a, b]);
                }
            }
        }
        assert_eq!(best.1, vec![0, 2]);
        assert!((best.0 - 1.75).abs() < 1e-12);
        assert!((pr.objective(&[0, 1]).unwrap() + 2.2).abs() < 1e-12);

        let params = SolverParams {
            iters: 50,
            alpha: 2.0,
            ..tau1()
        };
        for seed in 0..10 {
            let r = solve(&pr, &SolverParams { seed, ..params }).unwrap();
            assert!(r.selected == vec![0, 2] || r.selected == vec![1, 2], "{:?}", r.selected);
            assert_eq!(r.objective, best.0);
        }
    }

    #[test]
    fn alpha_mapping() {
        assert_eq!(alpha_from_lambda(0.3, 2).unwrap(), 0.3);
        assert!((alpha_from_lambda(1.0, 11).unwrap() - 0.1).abs() < 1e-15);
        assert_eq!(alpha_from_lambda(0.0, 7).unwrap(), 0.0);
        assert!(alpha_from_lambda(1.0, 1).is_err());
    }

    #[test]
    fn jitter_zero_is_uniform() {
        assert_eq!(SolverState::jittered(4, 0.0, 3), SolverState::uniform(4));
        let j = SolverState::jittered(4, 1e-6, 3);
        assert!((j.x.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_ne!(j, SolverState::uniform(4));
    }

    fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<(usize, usize, f64)>, usize, f64, u64)> {
        (2usize..40).prop_flat_map(|n| {
            (
                proptest::collection::vec(0.0f64..=1.0, n),
                proptest::collection::vec((0..n, 0..n, 0.0f64..=1.0), 0..3 * n),
                1..=n,
                0.0f64..3.0,
                any::<u64>(),
            )
        })
    }

    proptest! {
        #[test]
        fn iterates_stay_on_simplex((s, t, p, a, seed) in instance()) {
            let pr = problem(s, &t, p, a);
            let params = SolverParams { seed, ..Default::default() };
            let mut st = SolverState::jittered(pr.n(), params.jitter_eps, seed);
            for _ in 0..10 {
                st = infomax_step(&st, &pr, &params).unwrap();
                prop_assert!(st.x.iter().all(|&v| v >= 0.0));
                prop_assert!((st.x.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }

        #[test]
        fn solve_is_deterministic((s, t, p, a, seed) in instance()) {
            let pr = problem(s, &t, p, a);
            let params = SolverParams { seed, ..Default::default() };
            let r1 = solve(&pr, &params).unwrap();
            let r2 = solve(&pr, &params).unwrap();
            prop_assert_eq!(r1, r2);
        }

        #[test]
        fn zero_alpha_reduction((s, t, p, _a, seed) in instance()) {
            let pr = problem(s.clone(), &t, p, 0.0);
            let r = solve(&pr, &SolverParams { seed, ..Default::default() }).unwrap();
            prop_assert_eq!(r.selected, top_p(&s, p));
        }

        #[test]
        fn softmax_shift_invariance(v in proptest::collection::vec(-50.0f64..50.0, 1..30), c in -100.0f64..100.0) {
            let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
            let a = softmax(&v);
            let b = softmax(&shifted);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
            prop_assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}
