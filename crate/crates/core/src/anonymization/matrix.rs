//! Strategy selection from risk class and subtype.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Detection, RiskClass, StrategyKind, Technique};

/// One row of the matrix. `subtypes: None` matches every subtype.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixRule {
    pub risk: RiskClass,
    #[serde(default)]
    pub subtypes: Option<Vec<String>>,
    pub strategy: StrategyKind,
}

impl MatrixRule {
    fn matches(&self, risk: RiskClass, subtype: &str) -> bool {
        self.risk == risk && self.subtypes.as_ref().is_none_or(|s| s.iter().any(|x| x == subtype))
    }
}

/// Ordered rules; the first matching row wins and `fallback` covers the rest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyMatrix {
    pub rules: Vec<MatrixRule>,
    pub fallback: StrategyKind,
}

fn rule(risk: RiskClass, subtypes: &[&str], technique: Technique) -> MatrixRule {
    MatrixRule {
        risk,
        subtypes: (!subtypes.is_empty()).then(|| subtypes.iter().map(|s| s.to_string()).collect()),
        strategy: StrategyKind::of(technique),
    }
}

impl Default for StrategyMatrix {
    fn default() -> Self {
        use RiskClass::*;
        use Technique::*;
        StrategyMatrix {
            rules: vec![
                rule(Direct, &["username", "id-code", "file-metadata-key"], Full),
                rule(Direct, &[], Pseudonym),
                rule(StrongIndirect, &["role-in-narrative", "unique-event"], RoleBased),
                rule(StrongIndirect, &[], Pseudonym),
                rule(WeakIndirect, &["age", "team-size"], Range),
                rule(WeakIndirect, &["date"], DateCoarsen),
                rule(WeakIndirect, &["location"], RegionRollup),
                rule(WeakIndirect, &[], RoleFamily),
            ],
            fallback: StrategyKind::of(Full),
        }
    }
}

impl StrategyMatrix {
    pub fn lookup(&self, risk: RiskClass, subtype: &str) -> StrategyKind {
        self.rules
            .iter()
            .find(|r| r.matches(risk, subtype))
            .map_or(self.fallback, |r| r.strategy)
    }
}

/// Strategy for a classified detection.
pub fn select_strategy(d: &Detection, m: &StrategyMatrix) -> Result<StrategyKind> {
    let risk = d.risk.ok_or_else(|| Error::UnclassifiedDetection(d.detection_id.clone()))?;
    Ok(m.lookup(risk, &d.category.subtype))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DetectionSource, IdentifierCategory, IdentifierGroup, Strategy, TextSpan};
    use crate::taxonomy::Taxonomy;

    fn classified(subtype: &str, risk: Option<RiskClass>) -> Detection {
        let span = TextSpan {
            doc_id: "d".into(),
            turn_index: 0,
            start: 0,
            end: 1,
            surface: "x".into(),
        };
        let mut d = Detection::new(span, IdentifierCategory::new(IdentifierGroup::Direct, subtype), DetectionSource::Rule);
        d.risk = risk;
        d
    }

    #[test]
    fn documented_examples() {
        let m = StrategyMatrix::default();
        let pick = |s, r| select_strategy(&classified(s, Some(r)), &m).unwrap();
        assert_eq!(pick("username", RiskClass::Direct), StrategyKind::of(Technique::Full));
        assert_eq!(pick("person-name", RiskClass::Direct), StrategyKind::of(Technique::Pseudonym));
        assert_eq!(pick("location", RiskClass::WeakIndirect).strategy, Strategy::Generalization);
        assert_eq!(pick("role-in-narrative", RiskClass::StrongIndirect).strategy, Strategy::ContextAwareRewriting);
    }

    #[test]
    fn unclassified_is_an_error() {
        let m = StrategyMatrix::default();
        assert!(matches!(select_strategy(&classified("email", None), &m), Err(Error::UnclassifiedDetection(_))));
    }

    #[test]
    fn total_over_taxonomy_and_risks() {
        let m = StrategyMatrix::default();
        for subtype in Taxonomy::default().subtypes.keys() {
            for risk in RiskClass::ALL {
                let k = m.lookup(risk, subtype);
                assert_eq!(k.technique.strategy(), k.strategy);
                let expected = match risk {
                    RiskClass::Direct if ["username", "id-code", "file-metadata-key"].contains(&subtype.as_str()) => {
                        Strategy::Suppression
                    }
                    RiskClass::Direct => Strategy::RuleBasedSubstitution,
                    RiskClass::StrongIndirect if ["role-in-narrative", "unique-event"].contains(&subtype.as_str()) => {
                        Strategy::ContextAwareRewriting
                    }
                    RiskClass::StrongIndirect => Strategy::RuleBasedSubstitution,
                    RiskClass::WeakIndirect => Strategy::Generalization,
                };
                assert_eq!(k.strategy, expected, "{risk} {subtype}");
            }
        }
    }

    #[test]
    fn empty_matrix_falls_back() {
        let m = StrategyMatrix {
            rules: vec![],
            fallback: StrategyKind::of(Technique::Full),
        };
        assert_eq!(m.lookup(RiskClass::WeakIndirect, "age"), StrategyKind::of(Technique::Full));
    }
}
