//! Unicode-scalar offset helpers and whitespace normalization.
//!
//! Every offset stored in a span counts Unicode scalar values (`char`s), never
//! bytes. Regex engines report byte offsets, so detectors convert through
//! [`CharIndex`].

/// Number of scalar values in `s`.
pub fn char_len(s: &str) -> usize {
    s.chars().count()
}

/// Substring `[start, end)` measured in scalar values.
pub fn slice_chars(s: &str, start: usize, end: usize) -> Option<&str> {
    if start > end {
        return None;
    }
    let idx = CharIndex::new(s);
    let b0 = idx.byte_of(start)?;
    let b1 = idx.byte_of(end)?;
    Some(&s[b0..b1])
}

/// Collapse every run of whitespace to one space and trim both ends.
pub fn normalize_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Lowercased, whitespace-normalized form used for entity keys and
/// residual sweeps.
pub fn normalize_key(s: &str) -> String {
    normalize_ws(s).to_lowercase()
}

/// Byte/char offset conversion table for one string.
#[derive(Debug, Clone)]
pub struct CharIndex {
    /// byte offset of every char, plus the total byte length as a sentinel
    bytes: Vec<usize>,
}

impl CharIndex {
    pub fn new(s: &str) -> Self {
        let mut bytes: Vec<usize> = s.char_indices().map(|(b, _)| b).collect();
        bytes.push(s.len());
        CharIndex { bytes }
    }

    pub fn char_len(&self) -> usize {
        self.bytes.len() - 1
    }

    pub fn byte_of(&self, char_offset: usize) -> Option<usize> {
        self.bytes.get(char_offset).copied()
    }

    /// Char offset of a byte offset that lies on a char boundary.
    pub fn char_of(&self, byte_offset: usize) -> Option<usize> {
        self.bytes.binary_search(&byte_offset).ok()
    }
}

/// Result of whitespace-normalizing text while remembering where each
/// normalized char came from.
#[derive(Debug, Clone)]
pub struct NormalizedText {
    pub chars: Vec<char>,
    /// Source position of each normalized char, `None` for inserted separators.
    pub origin: Vec<Option<(usize, usize)>>,
}

impl NormalizedText {
    /// Normalize a sequence of `(segment_id, text)` pairs. Segments are joined
    /// by a single separator space that maps to no source position, so a
    /// match can never straddle two segments.
    pub fn from_segments<'a>(segments: impl IntoIterator<Item = (usize, &'a str)>) -> Self {
        let mut chars = Vec::new();
        let mut origin = Vec::new();
        for (seg, text) in segments {
            if !chars.is_empty() {
                chars.push(' ');
                origin.push(None);
            }
            let mut pending_space: Option<usize> = None;
            let mut started = false;
            for (i, c) in text.chars().enumerate() {
                if c.is_whitespace() {
                    if started && pending_space.is_none() {
                        pending_space = Some(i);
                    }
                    continue;
                }
                if let Some(sp) = pending_space.take() {
                    chars.push(' ');
                    origin.push(Some((seg, sp)));
                }
                chars.push(c);
                origin.push(Some((seg, i)));
                started = true;
            }
        }
        NormalizedText { chars, origin }
    }

    /// Find `needle` (already normalized) at or after normalized position `from`.
    pub fn find_from(&self, needle: &[char], from: usize) -> Option<usize> {
        if needle.is_empty() || needle.len() > self.chars.len() {
            return None;
        }
        (from..=self.chars.len() - needle.len()).find(|&i| self.chars[i..i + needle.len()] == *needle)
    }

    /// Map a normalized range back to `(segment, start, end)` in source
    /// offsets. Returns `None` if the range touches a separator or spans
    /// two segments.
    pub fn source_range(&self, start: usize, end: usize) -> Option<(usize, usize, usize)> {
        let first = self.origin.get(start).copied().flatten()?;
        let last = self.origin.get(end.checked_sub(1)?).copied().flatten()?;
        if first.0 != last.0 {
            return None;
        }
        if self.origin[start..end].iter().any(Option::is_none) {
            return None;
        }
        Some((first.0, first.1, last.1 + 1))
    }
}
