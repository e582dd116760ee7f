//! Scoring detections against reference annotations and measuring how much
//! anonymization changed the text.

pub mod impact;
pub mod matching;
pub mod metrics;
pub mod report;

pub use impact::{impact_report, top_k_terms, ImpactReport, SentimentLexicon, Stopwords, DEFAULT_TOP_K};
pub use matching::{jaccard, match_spans, MatchMode, MatchResult, MatchRule, MatchedPair};
pub use metrics::{metrics, Counts, Metrics, Ratio};
pub use report::{
    classification_report, compare_backends, evaluate_backend, identification_report, strategy_breakdown,
    BackendEvaluation, ClassificationReport, ComparisonTable, EvaluationReport, IdentificationRow, Rate, StrategyRow,
};
