//! Splits a raw model response into its think, answer and SQL parts and
//! decides whether the response is well formatted.
//!
//! A response is well formatted when exactly one `<think>...</think>` block
//! precedes exactly one `<answer>...</answer>` block and the answer holds at
//! least one complete fenced sql block. The SQL used downstream is the last
//! complete fence in the answer. Parsing never fails; anything malformed
//! just comes back with `format_ok == false`.

use serde::{Deserialize, Serialize};

const THINK_OPEN: &str = "<think>";
const THINK_CLOSE: &str = "</think>";
const ANSWER_OPEN: &str = "<answer>";
const ANSWER_CLOSE: &str = "</answer>";
const FENCE: &str = "```";

/// Unit used to measure the spans that feed the length reward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LengthMeasure {
    /// Unicode scalar values.
    #[default]
    Chars,
    Bytes,
}

impl LengthMeasure {
    pub fn measure(self, text: &str) -> usize {
        match self {
            LengthMeasure::Chars => text.chars().count(),
            LengthMeasure::Bytes => text.len(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LengthStats {
    pub response: usize,
    pub think: usize,
    pub answer: usize,
    pub sql: usize,
}

impl LengthStats {
    /// `think + answer <= response` and `sql <= answer`.
    pub fn is_consistent(&self) -> bool {
        self.think
            .checked_add(self.answer)
            .is_some_and(|s| s <= self.response)
            && self.sql <= self.answer
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedResponse {
    pub raw: String,
    pub think: Option<String>,
    pub answer: Option<String>,
    pub sql: Option<String>,
    pub format_ok: bool,
    pub lengths: LengthStats,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ParseOptions {
    /// Reject any non-whitespace text outside the think and answer blocks.
    #[serde(default)]
    pub strict: bool,
}

/// Lenient parse with a custom length measure.
pub fn parse_response(raw: &str, length_fn: impl Fn(&str) -> usize) -> ParsedResponse {
    parse_response_with(raw, length_fn, ParseOptions::default())
}

pub fn parse_response_with(
    raw: &str,
    length_fn: impl Fn(&str) -> usize,
    opts: ParseOptions,
) -> ParsedResponse {
    let think_span = single_block(raw, THINK_OPEN, THINK_CLOSE);
    let mut answer_span = single_block(raw, ANSWER_OPEN, ANSWER_CLOSE);
    // Nested blocks are malformed; dropping the answer keeps the span
    // lengths disjoint.
    if let (Some(t), Some(a)) = (&think_span, &answer_span) {
        if t.outer.start < a.outer.end && a.outer.start < t.outer.end {
            answer_span = None;
        }
    }

    let think = think_span.as_ref().map(|b| raw[b.inner.clone()].to_string());
    let answer = answer_span.as_ref().map(|b| raw[b.inner.clone()].to_string());
    let sql = answer.as_deref().and_then(extract_sql);

    let ordered = match (&think_span, &answer_span) {
        (Some(t), Some(a)) => t.outer.end <= a.outer.start,
        _ => false,
    };
    let outside_clean = match (&think_span, &answer_span) {
        (Some(t), Some(a)) if opts.strict => {
            raw[..t.outer.start].trim().is_empty()
                && raw[t.outer.end..a.outer.start].trim().is_empty()
                && raw[a.outer.end..].trim().is_empty()
        }
        _ => true,
    };
    let nonempty = |s: &Option<String>| s.as_deref().is_some_and(|s| !s.trim().is_empty());
    let format_ok =
        ordered && outside_clean && nonempty(&think) && nonempty(&answer) && nonempty(&sql);

    let lengths = LengthStats {
        response: length_fn(raw),
        think: think.as_deref().map_or(0, &length_fn),
        answer: answer.as_deref().map_or(0, &length_fn),
        sql: sql.as_deref().map_or(0, &length_fn),
    };

    ParsedResponse {
        raw: raw.to_string(),
        think,
        answer,
        sql,
        format_ok,
        lengths,
    }
}

/// Last complete fenced sql block in `answer`, trimmed.
///
/// The opening fence is ```` ```sql ```` (any case) followed by whitespace;
/// the block ends at the next ```` ``` ````. An unterminated trailing fence
/// is ignored.
pub fn extract_sql(answer: &str) -> Option<String> {
    let mut last = None;
    let mut cursor = 0;
    while let Some(rel) = answer[cursor..].find(FENCE) {
        let open = cursor + rel;
        let after_ticks = open + FENCE.len();
        let Some(body_start) = sql_tag_end(&answer[after_ticks..]).map(|n| after_ticks + n) else {
            cursor = after_ticks;
            continue;
        };
        match answer[body_start..].find(FENCE) {
            Some(rel_close) => {
                let close = body_start + rel_close;
                last = Some(answer[body_start..close].trim().to_string());
                cursor = close + FENCE.len();
            }
            None => break,
        }
    }
    last
}

/// Length of the `sql` language tag when `rest` starts with one.
fn sql_tag_end(rest: &str) -> Option<usize> {
    let tag = rest.get(..3)?;
    if !tag.eq_ignore_ascii_case("sql") {
        return None;
    }
    match rest[3..].chars().next() {
        Some(c) if c.is_whitespace() => Some(3),
        _ => None,
    }
}

struct Block {
    outer: std::ops::Range<usize>,
    inner: std::ops::Range<usize>,
}

/// The block delimited by `open`/`close` when each tag occurs exactly once
/// and in order.
fn single_block(raw: &str, open: &str, close: &str) -> Option<Block> {
    if raw.matches(open).count() != 1 || raw.matches(close).count() != 1 {
        return None;
    }
    let o = raw.find(open)?;
    let c = raw.find(close)?;
    let inner_start = o + open.len();
    (inner_start <= c).then(|| Block {
        outer: o..c + close.len(),
        inner: inner_start..c,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn chars(s: &str) -> usize {
        s.chars().count()
    }

    #[test]
    fn well_formed() {
        let p = parse_response("<think>T</think><answer>```sql\nSELECT 1;\n```</answer>", chars);
        assert!(p.format_ok);
        assert_eq!(p.sql.as_deref(), Some("SELECT 1;"));
        assert_eq!(p.think.as_deref(), Some("T"));
    }

    #[test]
    fn answer_without_fence() {
        let p = parse_response("<think>T</think><answer>SELECT 1</answer>", chars);
        assert!(!p.format_ok);
        assert!(p.sql.is_none());
    }

    #[test]
    fn last_fence_wins() {
        let p = parse_response(
            "<think>T</think><answer>```sql\nSELECT 1\n``` then ```sql\nSELECT 2\n```</answer>",
            chars,
        );
        assert!(p.format_ok);
        assert_eq!(p.sql.as_deref(), Some("SELECT 2"));
    }

    #[test]
    fn missing_close_answer() {
        let p = parse_response("<think>T</think><answer>```sql\nSELECT 1\n```", chars);
        assert!(!p.format_ok);
    }

    #[test]
    fn wrong_order_and_duplicates() {
        let swapped = "<answer>```sql\nSELECT 1\n```</answer><think>T</think>";
        assert!(!parse_response(swapped, chars).format_ok);
        let twice = "<think>a</think><think>b</think><answer>```sql\nSELECT 1\n```</answer>";
        assert!(!parse_response(twice, chars).format_ok);
        let nested = format!(
            "<think>{}<answer>```sql\nSELECT 1\n```</answer></think>",
            "x".repeat(80)
        );
        let p = parse_response(&nested, chars);
        assert!(!p.format_ok);
        assert!(p.lengths.is_consistent());
    }

    #[test]
    fn empty_think_rejected() {
        let p = parse_response("<think> </think><answer>```sql\nSELECT 1\n```</answer>", chars);
        assert!(!p.format_ok);
    }

    #[test]
    fn trailing_text_allowed_unless_strict() {
        let raw = "<think>T</think><answer>```sql\nSELECT 1\n```</answer>\nHope this helps!";
        assert!(parse_response(raw, chars).format_ok);
        let strict = parse_response_with(raw, chars, ParseOptions { strict: true });
        assert!(!strict.format_ok);
    }

    #[test]
    fn extract_cases() {
        assert_eq!(extract_sql("```sql\nSELECT 1\n```").as_deref(), Some("SELECT 1"));
        assert_eq!(extract_sql("SELECT 1"), None);
        assert_eq!(extract_sql("```sql\nSELECT 1"), None);
        assert_eq!(extract_sql("```python\nx\n```"), None);
        assert_eq!(extract_sql("```SQL\nSELECT 3\n```").as_deref(), Some("SELECT 3"));
        // complete block followed by an unterminated one
        assert_eq!(
            extract_sql("```sql\nSELECT 1\n```\n```sql\nSELECT 2").as_deref(),
            Some("SELECT 1")
        );
    }

    #[test]
    fn lengths_use_measure() {
        let raw = "<think>abcd</think><answer>```sql\nSELECT 1\n```</answer>";
        let p = parse_response(raw, |s| LengthMeasure::Bytes.measure(s));
        assert_eq!(p.lengths.think, 4);
        assert_eq!(p.lengths.sql, 8);
        assert_eq!(p.lengths.response, raw.len());
        assert!(p.lengths.is_consistent());
    }

    fn fragment() -> impl Strategy<Value = String> {
        prop_oneof![
            Just("<think>".to_string()),
            Just("</think>".to_string()),
            Just("<answer>".to_string()),
            Just("</answer>".to_string()),
            Just("```sql\n".to_string()),
            Just("```".to_string()),
            Just("SELECT 1".to_string()),
            "[a-z \n]{0,6}",
            any::<char>().prop_map(String::from),
        ]
    }

    proptest! {
        #[test]
        fn total_and_consistent(parts in prop::collection::vec(fragment(), 0..12)) {
            let raw: String = parts.concat();
            let p = parse_response(&raw, chars);
            let q = parse_response(&raw, chars);
            prop_assert_eq!(&p, &q);
            prop_assert!(p.lengths.is_consistent());
            if p.format_ok {
                prop_assert!(p.think.is_some() && p.answer.is_some());
                let sql = p.sql.as_deref().unwrap();
                prop_assert!(!sql.is_empty());
                prop_assert!(!sql.contains("```"));
            }
        }
    }
}
