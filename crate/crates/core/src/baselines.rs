//! Reference pruning methods for head-to-head comparison.
//!
//! * `random`: seeded uniform subset.
//! * `top_score`: highest scores.
//! * `k_center`: greedy farthest-point coverage in embedding space.
//! * `moderate`: scores nearest the median score.
//! * `ccs`: stratified sampling over equal-width score bins.
//! * `d2_greedy`: repeatedly take the best remaining score, then damp the
//!   scores of its graph neighbours by `exp(-gamma * K)`. This approximates
//!   message-passing graph pruning; it is not a reproduction of it.

use std::str::FromStr;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::problem::{evaluate_objective, EmbeddingMatrix, SelectionProblem, SelectionResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineMethod {
    Random,
    TopScore,
    KCenter,
    Moderate,
    Ccs,
    D2Greedy,
}

impl BaselineMethod {
    pub const ALL: [BaselineMethod; 6] = [
        BaselineMethod::Random,
        BaselineMethod::TopScore,
        BaselineMethod::KCenter,
        BaselineMethod::Moderate,
        BaselineMethod::Ccs,
        BaselineMethod::D2Greedy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BaselineMethod::Random => "random",
            BaselineMethod::TopScore => "top_score",
            BaselineMethod::KCenter => "k_center",
            BaselineMethod::Moderate => "moderate",
            BaselineMethod::Ccs => "ccs",
            BaselineMethod::D2Greedy => "d2_greedy",
        }
    }
}

impl FromStr for BaselineMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::input(format!("unknown baseline method '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineSpec {
    pub method: BaselineMethod,
    pub seed: u64,
    /// Score bins for `ccs`.
    pub bins: usize,
    /// Neighbour damping strength for `d2_greedy`.
    pub gamma: f64,
}

impl BaselineSpec {
    pub fn new(method: BaselineMethod, seed: u64) -> Self {
        Self {
            method,
            seed,
            bins: 10,
            gamma: 1.0,
        }
    }
}

/// Order: higher score first, then lower index.
fn rank_desc(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    order
}

pub fn top_score(scores: &[f64], p: usize) -> Vec<usize> {
    let mut out = rank_desc(scores);
    out.truncate(p);
    out
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

pub fn moderate(scores: &[f64], p: usize) -> Vec<usize> {
    let med = median(scores);
    let mut order: Vec<usize> = (0..scores.len()).collect();
    let dist = |i: usize| (scores[i] - med).abs();
    order.sort_by(|&a, &b| dist(a).total_cmp(&dist(b)).then(a.cmp(&b)));
    order.truncate(p);
    order
}

fn euclidean(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Greedy farthest-point sequence starting at `first`.
///
/// Returns the centres in pick order and the covering radius (largest
/// distance of any sample to its nearest centre) after each pick.
pub fn k_center_sequence(embeddings: &EmbeddingMatrix, first: usize, p: usize) -> (Vec<usize>, Vec<f64>) {
    let n = embeddings.n();
    let mut centers = Vec::with_capacity(p);
    let mut radii = Vec::with_capacity(p);
    let mut nearest = vec![f64::INFINITY; n];
    let mut next = first;
    for _ in 0..p {
        centers.push(next);
        let c = embeddings.row(next);
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(euclidean(embeddings.row(i), c));
        }
        // Farthest sample from the current centres; lower index on ties.
        let mut far = 0;
        for i in 1..n {
            if nearest[i] > nearest[far] {
                far = i;
            }
        }
        radii.push(nearest[far]);
        next = far;
    }
    (centers, radii)
}

/// Per-bin sample counts for stratified selection.
///
/// The score range `[min, max]` is cut into `bins` equal-width bins. Each
/// non-empty bin gets `⌊p / m⌋` (with `m` non-empty bins), the remainder goes
/// one each to the most populated bins, and any bin asked for more than it
/// holds passes the excess round-robin to bins with spare room.
pub fn ccs_allocation(scores: &[f64], bins: usize, p: usize) -> Vec<usize> {
    let membership = ccs_bins(scores, bins);
    let sizes: Vec<usize> = membership.iter().map(Vec::len).collect();
    allocate(&sizes, p)
}

fn ccs_bins(scores: &[f64], bins: usize) -> Vec<Vec<usize>> {
    let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / bins as f64;
    let mut out = vec![Vec::new(); bins];
    for (i, &s) in scores.iter().enumerate() {
        let b = if width > 0.0 {
            (((s - lo) / width) as usize).min(bins - 1)
        } else {
            0
        };
        out[b].push(i);
    }
    out
}

fn allocate(sizes: &[usize], p: usize) -> Vec<usize> {
    let nonempty: Vec<usize> = (0..sizes.len()).filter(|&b| sizes[b] > 0).collect();
    let mut alloc = vec![0usize; sizes.len()];
    if nonempty.is_empty() {
        return alloc;
    }
    let base = p / nonempty.len();
    for &b in &nonempty {
        alloc[b] = base;
    }
    let mut by_size = nonempty.clone();
    by_size.sort_by(|&a, &b| sizes[b].cmp(&sizes[a]).then(a.cmp(&b)));
    for &b in by_size.iter().take(p - base * nonempty.len()) {
        alloc[b] += 1;
    }

    let mut deficit = 0;
    for &b in &nonempty {
        if alloc[b] > sizes[b] {
            deficit += alloc[b] - sizes[b];
            alloc[b] = sizes[b];
        }
    }
    while deficit > 0 {
        let mut moved = false;
        for &b in &nonempty {
            if deficit == 0 {
                break;
            }
            if alloc[b] < sizes[b] {
                alloc[b] += 1;
                deficit -= 1;
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }
    alloc
}

fn ccs(scores: &[f64], bins: usize, p: usize, seed: u64) -> Vec<usize> {
    let membership = ccs_bins(scores, bins);
    let sizes: Vec<usize> = membership.iter().map(Vec::len).collect();
    let alloc = allocate(&sizes, p);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(p);
    for (members, &take) in membership.iter().zip(&alloc) {
        if take > 0 {
            out.extend(sample(&mut rng, members.len(), take).into_iter().map(|i| members[i]));
        }
    }
    out
}

fn d2_greedy(problem: &SelectionProblem, gamma: f64) -> Vec<usize> {
    let mut current = problem.scores().values().to_vec();
    let mut taken = vec![false; current.len()];
    let mut out = Vec::with_capacity(problem.budget());
    for _ in 0..problem.budget() {
        let mut pick = None;
        for i in 0..current.len() {
            if taken[i] {
                continue;
            }
            if pick.is_none_or(|b: usize| current[i] > current[b]) {
                pick = Some(i);
            }
        }
        let z = pick.expect("budget <= n");
        taken[z] = true;
        out.push(z);
        let (cols, w) = problem.similarity().row(z);
        for (&s, &k) in cols.iter().zip(w) {
            let s = s as usize;
            if !taken[s] {
                current[s] *= (-gamma * k).exp();
            }
        }
    }
    out
}

/// Runs one baseline on `problem`. `embeddings` is required by `k_center`.
pub fn baseline_select(
    spec: &BaselineSpec,
    problem: &SelectionProblem,
    embeddings: Option<&EmbeddingMatrix>,
) -> Result<SelectionResult> {
    let n = problem.n();
    let p = problem.budget();
    let scores = problem.scores().values();
    let mut selected = match spec.method {
        BaselineMethod::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            sample(&mut rng, n, p).into_vec()
        }
        BaselineMethod::TopScore => top_score(scores, p),
        BaselineMethod::Moderate => moderate(scores, p),
        BaselineMethod::KCenter => {
            let e = embeddings.ok_or_else(|| Error::input("k_center requires embeddings"))?;
            if e.n() != n {
                return Err(Error::input(format!(
                    "embeddings have {} rows, problem has {n} samples",
                    e.n()
                )));
            }
            let first = rank_desc(scores)[0];
            k_center_sequence(e, first, p).0
        }
        BaselineMethod::Ccs => {
            if spec.bins == 0 {
                return Err(Error::input("ccs needs at least one bin"));
            }
            ccs(scores, spec.bins, p, spec.seed)
        }
        BaselineMethod::D2Greedy => {
            if !spec.gamma.is_finite() || spec.gamma < 0.0 {
                return Err(Error::input(format!("gamma {} must be finite and >= 0", spec.gamma)));
            }
            d2_greedy(problem, spec.gamma)
        }
    };
    selected.sort_unstable();
    let mut probabilities = vec![0.0; n];
    for &i in &selected {
        probabilities[i] = 1.0 / p as f64;
    }
    let objective = evaluate_objective(problem, &selected)?;
    Ok(SelectionResult {
        selected,
        probabilities,
        objective,
        trace: Vec::new(),
    })
}
