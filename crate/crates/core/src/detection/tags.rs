//! Per-document yes/no tagging by identifier group.

use std::collections::BTreeMap;

use crate::model::{Detection, IdentifierGroup};

/// `true` for every group with at least one detection; all six groups are
/// always present in the map.
pub fn summarize_tags(detections: &[Detection]) -> BTreeMap<IdentifierGroup, bool> {
    let mut tags: BTreeMap<IdentifierGroup, bool> = IdentifierGroup::ALL.iter().map(|g| (*g, false)).collect();
    for d in detections {
        tags.insert(d.category.group, true);
    }
    tags
}
