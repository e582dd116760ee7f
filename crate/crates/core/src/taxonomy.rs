//! Identifier taxonomy: which subtype belongs to which of the six groups.
//!
//! The subtype list is data. The shipped default lives in
//! `data/taxonomy.json`; studies extend it with their own file.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{IdentifierCategory, IdentifierGroup};

const DEFAULT_TAXONOMY: &str = include_str!("../data/taxonomy.json");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Taxonomy {
    pub subtypes: BTreeMap<String, IdentifierGroup>,
}

impl Default for Taxonomy {
    fn default() -> Self {
        serde_json::from_str(DEFAULT_TAXONOMY).expect("shipped taxonomy parses")
    }
}

impl Taxonomy {
    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Config(format!("taxonomy: {e}")))
    }

    pub fn group_of(&self, subtype: &str) -> Option<IdentifierGroup> {
        self.subtypes.get(subtype).copied()
    }

    pub fn category(&self, subtype: &str) -> Result<IdentifierCategory> {
        self.group_of(subtype)
            .map(|g| IdentifierCategory::new(g, subtype))
            .ok_or_else(|| Error::UnknownSubtype(subtype.to_string()))
    }

    pub fn contains(&self, subtype: &str) -> bool {
        self.subtypes.contains_key(subtype)
    }

    pub fn subtypes_of(&self, group: IdentifierGroup) -> impl Iterator<Item = &str> {
        self.subtypes
            .iter()
            .filter(move |(_, g)| **g == group)
            .map(|(s, _)| s.as_str())
    }
}
