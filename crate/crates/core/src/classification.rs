//! Risk classification of detections and escalation of co-occurring weak
//! identifiers.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Detection, RiskClass};
use crate::taxonomy::Taxonomy;

const DEFAULT_POLICY: &str = include_str!("../data/risk_policy.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Escalation {
    /// Distinct weak subtypes in one document that trigger escalation.
    pub k_weak: usize,
    pub escalate_to: RiskClass,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RiskPolicy {
    pub risks: BTreeMap<String, RiskClass>,
    pub escalation: Escalation,
}

impl Default for RiskPolicy {
    fn default() -> Self {
        serde_json::from_str(DEFAULT_POLICY).expect("shipped risk policy parses")
    }
}

impl RiskPolicy {
    /// Every taxonomy subtype must be mapped and `k_weak` must be at least 2.
    pub fn validate(&self, taxonomy: &Taxonomy) -> Result<()> {
        if self.escalation.k_weak < 2 {
            return Err(Error::Config(format!("k_weak must be >= 2, got {}", self.escalation.k_weak)));
        }
        let missing: Vec<&str> = taxonomy
            .subtypes
            .keys()
            .filter(|s| !self.risks.contains_key(*s))
            .map(String::as_str)
            .collect();
        if !missing.is_empty() {
            return Err(Error::Config(format!("risk policy has no class for: {}", missing.join(", "))));
        }
        Ok(())
    }

    pub fn risk_of(&self, subtype: &str) -> Option<RiskClass> {
        self.risks.get(subtype).copied()
    }
}

/// Set the detection's risk from the policy table.
pub fn classify(d: &Detection, policy: &RiskPolicy) -> Result<Detection> {
    let risk = policy
        .risk_of(&d.category.subtype)
        .ok_or_else(|| Error::UnknownSubtype(d.category.subtype.clone()))?;
    let mut out = d.clone();
    out.risk = Some(risk);
    Ok(out)
}

pub fn classify_all(ds: &[Detection], policy: &RiskPolicy) -> Result<Vec<Detection>> {
    ds.iter().map(|d| classify(d, policy)).collect()
}

/// If a document's weak detections cover at least `k_weak` distinct subtypes,
/// raise every weak detection of that document to `escalate_to`. Detections
/// of several documents may be passed together; each document is judged on
/// its own.
pub fn escalate_combinations(detections: &[Detection], policy: &RiskPolicy) -> Vec<Detection> {
    let mut weak_subtypes: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for d in detections {
        if d.risk == Some(RiskClass::WeakIndirect) {
            weak_subtypes
                .entry(d.span.doc_id.as_str())
                .or_default()
                .insert(d.category.subtype.as_str());
        }
    }
    let target = policy.escalation.escalate_to;
    detections
        .iter()
        .map(|d| {
            let mut d = d.clone();
            let distinct = weak_subtypes.get(d.span.doc_id.as_str()).map_or(0, BTreeSet::len);
            if d.risk == Some(RiskClass::WeakIndirect) && distinct >= policy.escalation.k_weak && target > RiskClass::WeakIndirect
            {
                d.risk = Some(target);
                d.append_rationale(&format!("escalated to {target}: {distinct} distinct weak subtypes co-occur"));
            }
            d
        })
        .collect()
}
