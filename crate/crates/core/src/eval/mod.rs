//! Exclusion-query construction, ranking metrics, significance testing and
//! the synthetic corpus used for end-to-end checks.

mod metrics;
mod queries;
mod synth;
mod ttest;

pub use metrics::{
    ap_at_k, evaluate_run, mrr_at_k, ndcg_at_k, Metric, MetricKind, MetricReport, QueryScores,
};
pub use queries::{build_exclusion_queries, ExclusionQuery};
pub use synth::{label_name, synth_corpus, SynthConfig, SynthCorpus};
pub use ttest::{incomplete_beta, ln_gamma, paired_t_test, student_t_two_tailed, TTestResult};
