//! Generalization hierarchies and numeric bucketing.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::dates;
use crate::error::{Error, Result};
use crate::io;
use crate::text::normalize_key;

const DEFAULT_HIERARCHY: &str = include_str!("../../data/hierarchy.json");

static NUMBER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"-?\d+(?:\.\d+)?").unwrap());

/// A closed integer band with a label, e.g. 10–49 → "a medium-sized team".
/// `max: None` leaves the band open upwards.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Band {
    pub min: i64,
    #[serde(default)]
    pub max: Option<i64>,
    pub label: String,
}

/// Broader terms for one subtype.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubtypeHierarchy {
    /// Level 1 first; keys are lowercase and whitespace-collapsed.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub levels: Vec<BTreeMap<String, String>>,
    /// Numeric values become `A–B` ranges of this width.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bucket_width: Option<u64>,
    /// Numeric values map to the first band containing them.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bands: Vec<Band>,
    /// Values are parsed as dates and lose precision per level.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub coarsen_dates: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub catch_all: Option<String>,
}

/// Subtype to hierarchy. Subtypes without an entry generalize to
/// "a {subtype}".
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GeneralizationHierarchy(pub BTreeMap<String, SubtypeHierarchy>);

impl Default for GeneralizationHierarchy {
    fn default() -> Self {
        GeneralizationHierarchy::from_json(DEFAULT_HIERARCHY).expect("shipped hierarchy parses")
    }
}

impl GeneralizationHierarchy {
    pub fn from_json(s: &str) -> Result<Self> {
        let mut h: GeneralizationHierarchy =
            serde_json::from_str(s).map_err(|e| Error::Config(format!("hierarchy: {e}")))?;
        h.normalize_keys();
        Ok(h)
    }

    pub fn load(path: &Path) -> Result<Self> {
        GeneralizationHierarchy::from_json(&io::read_to_string(path)?)
    }

    fn normalize_keys(&mut self) {
        for sub in self.0.values_mut() {
            for level in &mut sub.levels {
                *level = std::mem::take(level)
                    .into_iter()
                    .map(|(k, v)| (normalize_key(&k), v))
                    .collect();
            }
        }
    }

    /// Overlay `other`: level maps merge entry by entry, scalar settings in
    /// `other` replace ours when present.
    pub fn extend(&mut self, other: GeneralizationHierarchy) {
        for (subtype, theirs) in other.0 {
            let ours = self.0.entry(subtype).or_default();
            for (i, level) in theirs.levels.into_iter().enumerate() {
                if ours.levels.len() <= i {
                    ours.levels.push(BTreeMap::new());
                }
                ours.levels[i].extend(level);
            }
            if theirs.bucket_width.is_some() {
                ours.bucket_width = theirs.bucket_width;
            }
            if !theirs.bands.is_empty() {
                ours.bands = theirs.bands;
            }
            ours.coarsen_dates |= theirs.coarsen_dates;
            if theirs.catch_all.is_some() {
                ours.catch_all = theirs.catch_all;
            }
        }
    }

    pub fn get(&self, subtype: &str) -> Option<&SubtypeHierarchy> {
        self.0.get(subtype)
    }

    /// Broader term for `surface` at `level` (1 = least general). Lookups
    /// that miss at the requested level climb towards the catch-all, so the
    /// result is always defined.
    pub fn generalize(&self, subtype: &str, surface: &str, level: usize, day_first: bool) -> String {
        let level = level.max(1);
        let Some(h) = self.get(subtype) else {
            return default_catch_all(subtype);
        };
        let catch_all = || h.catch_all.clone().unwrap_or_else(|| default_catch_all(subtype));
        if h.coarsen_dates {
            return match dates::parse_date(surface, day_first) {
                Some(p) => dates::coarsen(p, level),
                None => catch_all(),
            };
        }
        let key = normalize_key(surface);
        for map in h.levels.iter().skip(level - 1) {
            if let Some(v) = map.get(&key) {
                return v.clone();
            }
        }
        if !h.bands.is_empty() || h.bucket_width.is_some() {
            if let Some(n) = first_integer(surface) {
                if let Some(b) = h.bands.iter().find(|b| n >= b.min && b.max.is_none_or(|m| n <= m)) {
                    return b.label.clone();
                }
                if let Some(w) = h.bucket_width.filter(|w| *w > 0) {
                    let w = w as i64;
                    let lo = n.div_euclid(w) * w;
                    return format!("{lo}\u{2013}{}", lo + w - 1);
                }
            }
        }
        catch_all()
    }
}

fn default_catch_all(subtype: &str) -> String {
    format!("a {}", subtype.replace('-', " "))
}

fn first_integer(s: &str) -> Option<i64> {
    NUMBER.find(s).and_then(|m| m.as_str().split('.').next()?.parse().ok())
}

fn render_number(x: f64) -> String {
    if x.fract() == 0.0 {
        format!("{}", x as i64)
    } else {
        format!("{x}")
    }
}

/// "between A and B" for the half-open bucket `[A, B)` of width
/// `bucket_width` aligned at zero that contains the first number in `surface`.
pub fn perturb_number(surface: &str, bucket_width: f64) -> Result<String> {
    let value: f64 = NUMBER
        .find(surface)
        .and_then(|m| m.as_str().parse().ok())
        .ok_or_else(|| Error::UnparseableNumber(surface.to_string()))?;
    if bucket_width.is_nan() || bucket_width <= 0.0 {
        return Err(Error::Config(format!("bucket width must be positive, got {bucket_width}")));
    }
    let lo = (value / bucket_width).floor() * bucket_width;
    Ok(format!("between {} and {}", render_number(lo), render_number(lo + bucket_width)))
}
