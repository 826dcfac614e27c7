//! Coreset selection by information maximization.
//!
//! A subset `S` of size `p` is scored by the sum of per-sample information
//! minus `α` times the pairwise redundancy inside `S`. The redundancy matrix
//! is a sparse symmetric kNN graph of embedding similarities. The relaxed
//! problem is solved by a few softmax iterations and the `p` most probable
//! samples form the coreset.
//!
//! * [`problem`]: domain types and the exact objective.
//! * [`simgraph`]: exact kNN similarity graphs.
//! * [`scoring`]: score ingestion, normalization and k-means distance scores.
//! * [`solver`]: the iterative solver.
//! * [`oracle`]: exhaustive optimum for small instances.
//! * [`baselines`]: reference pruning methods.
//! * [`pipeline`]: partitioned end-to-end selection and diagnostics.
//! * [`cli`]: command-line front end and file formats.

pub mod baselines;
pub mod cli;
pub mod error;
pub mod oracle;
pub mod pipeline;
pub mod problem;
pub mod scoring;
pub mod simgraph;
pub mod solver;

pub use error::{Error, Result};
pub use problem::{
    evaluate_objective, EmbeddingMatrix, ScoreVector, SelectionProblem, SelectionResult, SparseSimilarity,
};
