//! Turn-level rewriting by the language model, gated by a condition
//! predicate and checked afterwards for leftover identifying text.

use serde::{Deserialize, Serialize};

use crate::llm::{LlmClient, LlmError};
use crate::model::Technique;
use crate::text::normalize_ws;

const DEFAULT_PROMPT: &str = "\
Rewrite the passage below from an interview transcript so that none of the listed details appear in it any more.
{style}
Change as little else as possible and keep the speaker's voice and sentence structure.
Reply with the rewritten passage only.

Details to remove:
{spans}

Passage:
{text}
";

const ROLE_STYLE: &str = "Where a detail points at a person, describe what they do instead of who they are.";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewriteConfig {
    /// Words whose presence in the sentence around a span marks it as a
    /// singleton reference worth rewriting.
    pub cue_words: Vec<String>,
    /// Subtypes rewritten whether or not a cue word is present.
    pub always_rewrite: Vec<String>,
    /// Prompt with `{style}`, `{spans}` and `{text}` placeholders.
    pub prompt: String,
}

impl Default for RewriteConfig {
    fn default() -> Self {
        RewriteConfig {
            cue_words: vec!["only".into(), "the one".into(), "sole".into()],
            always_rewrite: vec!["unique-event".into()],
            prompt: DEFAULT_PROMPT.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RewriteFailure {
    Llm(LlmError),
    /// Listed surfaces still present in the model output.
    Residual(Vec<String>),
    Empty,
}

impl std::fmt::Display for RewriteFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RewriteFailure::Llm(e) => write!(f, "model call failed: {e}"),
            RewriteFailure::Residual(s) => write!(f, "rewrite still contains {s:?}"),
            RewriteFailure::Empty => write!(f, "model returned an empty rewrite"),
        }
    }
}

/// Char range of the sentence containing `[start, end)`; sentences end at
/// `.`, `!` or `?`.
pub fn sentence_around(text: &str, start: usize, end: usize) -> (usize, usize) {
    let chars: Vec<char> = text.chars().collect();
    let is_end = |c: char| matches!(c, '.' | '!' | '?');
    let mut s = start.min(chars.len());
    while s > 0 && !is_end(chars[s - 1]) {
        s -= 1;
    }
    let mut e = end.min(chars.len());
    while e < chars.len() && !is_end(chars[e]) {
        e += 1;
    }
    (s, (e + 1).min(chars.len()))
}

fn contains_phrase(haystack: &str, phrase: &str) -> bool {
    let words: Vec<String> = haystack
        .split(|c: char| !c.is_alphanumeric() && c != '\'')
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect();
    let target: Vec<String> = phrase.split_whitespace().map(str::to_lowercase).collect();
    !target.is_empty() && words.windows(target.len()).any(|w| w == target.as_slice())
}

impl RewriteConfig {
    /// Condition predicate: the subtype is always rewritten, or a cue word
    /// occurs in the sentence around the span.
    pub fn should_rewrite(&self, turn_text: &str, subtype: &str, start: usize, end: usize) -> bool {
        if self.always_rewrite.iter().any(|s| s == subtype) {
            return true;
        }
        let (s, e) = sentence_around(turn_text, start, end);
        let sentence: String = turn_text.chars().skip(s).take(e - s).collect();
        self.cue_words.iter().any(|cue| contains_phrase(&sentence, cue))
    }

    pub fn render(&self, text: &str, targets: &[&str], technique: Technique, language: &str) -> String {
        let style = match technique {
            Technique::LanguageAware => format!("{ROLE_STYLE} Answer in the passage's language ({language})."),
            _ => ROLE_STYLE.to_string(),
        };
        let spans = targets.iter().map(|t| format!("- \"{t}\"")).collect::<Vec<_>>().join("\n");
        self.prompt
            .replace("{style}", &style)
            .replace("{spans}", &spans)
            .replace("{text}", text)
    }
}

/// Surfaces in `forbidden` that still occur in `output`, compared after
/// whitespace normalization and case-sensitively.
pub fn residual_surfaces(output: &str, forbidden: &[&str]) -> Vec<String> {
    let out = normalize_ws(output);
    forbidden
        .iter()
        .map(|f| normalize_ws(f))
        .filter(|f| !f.is_empty() && out.contains(f.as_str()))
        .collect()
}

fn clean_reply(reply: &str) -> String {
    let t = reply.trim();
    let t = t
        .strip_prefix('"')
        .and_then(|x| x.strip_suffix('"'))
        .filter(|x| !x.contains('"'))
        .unwrap_or(t);
    t.trim().to_string()
}

/// Ask the model to rewrite `text` without `targets`. The reply is accepted
/// only if no surface in `forbidden` (the targets plus any other sensitive
/// originals of the turn) survives in it.
pub fn rewrite_contextual(
    text: &str,
    targets: &[&str],
    forbidden: &[&str],
    client: &dyn LlmClient,
    cfg: &RewriteConfig,
    technique: Technique,
    language: &str,
) -> Result<String, RewriteFailure> {
    let reply = client
        .complete(&cfg.render(text, targets, technique, language))
        .map_err(RewriteFailure::Llm)?;
    let out = clean_reply(&reply);
    if out.is_empty() {
        return Err(RewriteFailure::Empty);
    }
    let residual = residual_surfaces(&out, forbidden);
    if !residual.is_empty() {
        return Err(RewriteFailure::Residual(residual));
    }
    Ok(out)
}
