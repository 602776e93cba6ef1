//! Pseudo-label clustering for speaker embeddings without ground truth.
//!
//! The engine builds k-nearest-neighbor graphs from several embedding models,
//! keeps only edges that every model agrees on, and grows the neighbor depth
//! progressively. Connected components become pseudo-speaker classes; when an
//! edge would join two classes, a two-component Gaussian fit over the merged
//! similarity scores decides whether they are one speaker or two.
//!
//! Typical use:
//!
//! ```
//! use pgmvg::config::RunConfig;
//! use pgmvg::progressive::{run_pgmvg, RunOptions};
//! use pgmvg::synth::{generate, SynthSpec};
//!
//! let spec = SynthSpec {
//!     num_speakers: 5,
//!     utts_per_speaker: (12, 12),
//!     dim: 16,
//!     model_count: 2,
//!     seed: 7,
//!     ..SynthSpec::default()
//! };
//! let (models, ids, truth) = generate(&spec).unwrap();
//! let config = RunConfig::default().validate().unwrap();
//! let out = run_pgmvg(&models, &ids, &config, &RunOptions::default()).unwrap();
//! assert_eq!(out.labels.len(), truth.len());
//! ```

pub mod assess;
pub mod config;
pub mod embedding;
pub mod evaluation;
pub mod graph;
pub mod io;
pub mod knn;
pub mod preprocess;
pub mod progressive;
pub mod synth;

pub use assess::{
    assess_subclasses, collect_scores, decide_merge, fit_double_gaussian,
    fit_double_gaussian_traced, AssessError, DecisionRule, GaussianPairFit, MergeDecision,
    Verdict, VoteOutcome,
};
pub use config::{ConfigError, RunConfig, ValidatedConfig};
pub use embedding::{
    normalize_rows, EmbeddingError, EmbeddingMatrix, PseudoLabels, UtteranceSet,
};
pub use evaluation::{evaluate, ClusterReport, EvalError};
pub use graph::{
    aggregate, assign_initial_labels, build_ips, build_mips, ComponentView, Edge, SpeakerGraph,
    UnionFind,
};
pub use io::{
    read_embeddings, read_ids, read_labels, write_embeddings, write_ids, write_labels, IoError,
};
pub use knn::{build_neighbor_table, KnnError, Neighbor, NeighborTable};
pub use preprocess::{
    find_high_degree_outliers, statistic_adapt, PreprocessError, RemovalReason, RemovalReport,
};
pub use progressive::{
    classify_edge, run_pgmvg, should_stop, EdgeKind, FitRecord, GraphSnapshot, IterationRecord,
    RunError, RunOptions, RunOutput,
};
pub use synth::{generate, SynthError, SynthSpec};

// The guide's code blocks compile and run with the library's doctests, so
// the book cannot drift from the API. One module per chapter keeps failure
// output traceable to its file.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/data-and-formats.md")]
    mod data_and_formats {}
    #[doc = include_str!("../../../book/src/neighbor-voting.md")]
    mod neighbor_voting {}
    #[doc = include_str!("../../../book/src/merge-assessment.md")]
    mod merge_assessment {}
    #[doc = include_str!("../../../book/src/progressive-growth.md")]
    mod progressive_growth {}
    #[doc = include_str!("../../../book/src/preprocessing.md")]
    mod preprocessing {}
    #[doc = include_str!("../../../book/src/synthetic-worlds.md")]
    mod synthetic_worlds {}
}
