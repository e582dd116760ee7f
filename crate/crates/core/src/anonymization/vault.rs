//! The pseudonymization vault: alias table, reversible tokens and per-document
//! date offsets, all derived from one secret key.

use std::collections::BTreeMap;
use std::path::Path;

use hmac::{Hmac, Mac};
use serde::{Deserialize, Serialize};
use sha2::Sha256;

use crate::error::{Error, Result};
use crate::io;
use crate::text::normalize_key;

type HmacSha256 = Hmac<Sha256>;

/// Separates fields inside digest inputs so `("ab","c")` and `("a","bc")`
/// hash differently.
const FIELD_SEP: char = '\u{1f}';

/// Width of the date-offset window in days: offsets fall in `[-365, 365]`.
const DATE_WINDOW: u64 = 731;

/// Keyed store shared by every document of a corpus.
///
/// The secret key is never serialized; it is supplied when the vault is
/// created or loaded.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vault {
    #[serde(skip)]
    secret_key: Vec<u8>,
    /// Entity key (`subtype` + normalized surface) to alias label.
    pub alias_map: BTreeMap<String, String>,
    /// Alias label prefix to the last number handed out.
    pub alias_counters: BTreeMap<String, usize>,
    /// Token to original surface.
    pub token_map: BTreeMap<String, String>,
    #[serde(skip)]
    token_index: BTreeMap<String, String>,
    pub date_offsets: BTreeMap<String, i64>,
}

impl Vault {
    pub fn new(secret_key: impl Into<Vec<u8>>) -> Self {
        Vault {
            secret_key: secret_key.into(),
            ..Vault::default()
        }
    }

    /// Load a persisted vault, or start an empty one if `path` does not exist.
    pub fn load_or_new(path: &Path, secret_key: impl Into<Vec<u8>>) -> Result<Self> {
        let key = secret_key.into();
        if !path.exists() {
            return Ok(Vault::new(key));
        }
        let mut v: Vault = io::read_json(path)?;
        v.secret_key = key;
        v.token_index = v.token_map.iter().map(|(t, o)| (o.clone(), t.clone())).collect();
        if v.token_index.len() != v.token_map.len() {
            return Err(Error::CorruptProject(format!("{}: token map is not a bijection", path.display())));
        }
        Ok(v)
    }

    /// Persist with owner-only permissions.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        io::write_private(path, text.as_bytes())
    }

    pub fn has_key(&self) -> bool {
        !self.secret_key.is_empty()
    }

    /// HMAC-SHA256 of `parts` joined by the field separator.
    pub fn digest(&self, parts: &[&str]) -> [u8; 32] {
        keyed_digest(&self.secret_key, parts)
    }

    /// Alias for an entity, minting `[{label}_{n}]` on first sight.
    pub fn alias(&mut self, subtype: &str, surface: &str, label: &str) -> String {
        let key = entity_key(subtype, surface);
        if let Some(a) = self.alias_map.get(&key) {
            return a.clone();
        }
        let n = self.alias_counters.entry(label.to_string()).or_insert(0);
        *n += 1;
        let alias = format!("[{label}_{n}]");
        self.alias_map.insert(key, alias.clone());
        alias
    }

    /// `[H_xxxxxxxx]` from the first 8 hex digits of the keyed digest of
    /// subtype and normalized surface.
    pub fn hash_alias(&self, subtype: &str, surface: &str) -> String {
        let d = self.digest(&[subtype, &normalize_key(surface)]);
        format!("[H_{:02x}{:02x}{:02x}{:02x}]", d[0], d[1], d[2], d[3])
    }

    /// Reversible token for an exact surface; the same surface always gets
    /// the same token.
    pub fn tokenize(&mut self, surface: &str) -> String {
        if let Some(t) = self.token_index.get(surface) {
            return t.clone();
        }
        let token = format!("[T_{:06}]", self.token_map.len() + 1);
        self.token_map.insert(token.clone(), surface.to_string());
        self.token_index.insert(surface.to_string(), token.clone());
        token
    }

    pub fn detokenize(&self, token: &str) -> Result<&str> {
        self.token_map
            .get(token)
            .map(String::as_str)
            .ok_or_else(|| Error::UnknownToken(token.to_string()))
    }

    /// Day offset for a document, in `[-365, 365]`, cached after first use.
    pub fn date_offset(&mut self, doc_id: &str) -> i64 {
        if let Some(o) = self.date_offsets.get(doc_id) {
            return *o;
        }
        let o = date_offset_for(&self.secret_key, doc_id);
        self.date_offsets.insert(doc_id.to_string(), o);
        o
    }
}

/// `subtype` + separator + lowercase, whitespace-collapsed surface.
pub fn entity_key(subtype: &str, surface: &str) -> String {
    format!("{subtype}{FIELD_SEP}{}", normalize_key(surface))
}

pub fn keyed_digest(key: &[u8], parts: &[&str]) -> [u8; 32] {
    let mut mac = HmacSha256::new_from_slice(key).expect("HMAC accepts keys of any length");
    for (i, p) in parts.iter().enumerate() {
        if i > 0 {
            let mut buf = [0u8; 4];
            mac.update(FIELD_SEP.encode_utf8(&mut buf).as_bytes());
        }
        mac.update(p.as_bytes());
    }
    mac.finalize().into_bytes().into()
}

/// First 8 digest bytes read big-endian, reduced mod 731, shifted to be
/// centred on zero.
pub fn date_offset_for(key: &[u8], doc_id: &str) -> i64 {
    let d = keyed_digest(key, &[doc_id]);
    let head = u64::from_be_bytes(d[..8].try_into().expect("8 bytes"));
    (head % DATE_WINDOW) as i64 - 365
}
