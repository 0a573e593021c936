//! End-to-end orchestration: active completion runs, the benchmark matrix,
//! the procedural training corpus and the training command.

mod bench;
mod config;
mod corpus;
mod evaluate;
mod run;
mod train_cmd;

pub use bench::{
    aggregate, mean_std, read_aggregate, run_benchmark, run_benchmark_from, write_aggregate, AggregateRow,
    BenchObject, BenchSummary, SuiteConfig, AGGREGATE_FILE, FAILURES_FILE,
};
pub use config::{Outcome, Policy, Reconstructor, RunConfig};
pub use corpus::{
    build_corpus, load_corpus_clouds, load_manifest, procedural_shape, random_rotation, CorpusConfig, CorpusEntry,
    Family, Manifest, MANIFEST_FILE,
};
pub use evaluate::{compare_meshes, evaluate, Truth};
pub use run::{read_reports, run_active_completion, run_from_config, write_reports, RunOutput, StepReport, LOG_FILE, STEPS_FILE};
pub use train_cmd::{smoothed_ends, train_command};
