//! Strategy selection and the four anonymization strategies: rule-based
//! substitution, context-aware rewriting, generalization and suppression.

pub mod dates;
pub mod generalize;
pub mod matrix;
pub mod plan;
pub mod rewrite;
pub mod suppress;
pub mod vault;

use std::collections::BTreeMap;

pub use generalize::{perturb_number, GeneralizationHierarchy, SubtypeHierarchy};
pub use matrix::{select_strategy, MatrixRule, StrategyMatrix};
pub use plan::{
    apply_corpus, apply_plan, generalize, hash_alias, perturb_date, resolve_verdicts, residual_sweep, substitute,
    suppress, tokenize, AnonymizationConfig, Anonymizer, EventKind, Plan, PlanEvent, PlannedDetection, Residual,
    SuppressMode,
};
pub use rewrite::{rewrite_contextual, RewriteConfig, RewriteFailure};
pub use suppress::{CorpusStats, REDACTED};
pub use vault::Vault;

/// Alias label for a subtype: the configured one, else the subtype in
/// CamelCase (`job-title` → `JobTitle`).
pub fn substitute_label(labels: &BTreeMap<String, String>, subtype: &str) -> String {
    if let Some(l) = labels.get(subtype) {
        return l.clone();
    }
    subtype
        .split(['-', '_', ' '])
        .filter(|w| !w.is_empty())
        .map(|w| {
            let mut c = w.chars();
            match c.next() {
                Some(f) => f.to_uppercase().chain(c).collect::<String>(),
                None => String::new(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels() {
        let cfg = AnonymizationConfig::default();
        assert_eq!(substitute_label(&cfg.labels, "organization"), "Company");
        assert_eq!(substitute_label(&cfg.labels, "job-title"), "JobTitle");
    }
}
