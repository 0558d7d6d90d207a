//! Random corruption of well-formed responses.

use rand::seq::SliceRandom;
use rand::Rng;

pub const MUTATIONS: &[&str] = &[
    "drop_tag",
    "corrupt_fence",
    "sql_keyword",
    "sql_literal",
    "sql_empty_filter",
    "sql_table",
    "swap_blocks",
    "duplicate_answer",
    "truncate",
    "none",
];

const TAGS: &[&str] = &["<think>", "</think>", "<answer>", "</answer>"];

/// Applies one to three random mutations.
pub fn mutate(response: &str, rng: &mut impl Rng) -> String {
    let mut out = response.to_string();
    for _ in 0..rng.gen_range(1..=3) {
        out = apply(&out, MUTATIONS.choose(rng).unwrap(), rng);
    }
    out
}

pub fn apply(s: &str, kind: &str, rng: &mut impl Rng) -> String {
    match kind {
        "drop_tag" => s.replacen(TAGS.choose(rng).unwrap(), "", 1),
        "corrupt_fence" => match rng.gen_range(0..3) {
            0 => s.replacen("```sql", "``sql", 1),
            1 => s.replacen("```sql", "```", 1),
            _ => match s.rfind("```") {
                Some(i) => format!("{}{}", &s[..i], &s[i + 3..]),
                None => s.to_string(),
            },
        },
        "sql_keyword" => {
            let (from, to) = *[
                ("SELECT", "SELEC"),
                ("FROM", "FORM"),
                ("WHERE", "WHER"),
                ("COUNT(", "CNT("),
            ]
            .choose(rng)
            .unwrap();
            s.replacen(from, to, 1)
        }
        "sql_literal" => {
            let mut chars: Vec<char> = s.chars().collect();
            if let Some(p) = chars.iter().position(|c| c.is_ascii_digit()) {
                chars[p] = char::from(b'0' + rng.gen_range(0..10u8));
            }
            chars.into_iter().collect::<String>().replacen("'", "'x", 1)
        }
        "sql_empty_filter" => s.replacen("\n```\n", " LIMIT 0\n```\n", 1),
        "sql_table" => {
            let tables = ["customers", "orders", "products", "students", "courses", "flights", "airports", "nowhere"];
            let from = tables.choose(rng).unwrap();
            let to = tables.choose(rng).unwrap();
            s.replacen(from, to, 1)
        }
        "swap_blocks" => match (s.find("<answer>"), s.find("</answer>")) {
            (Some(a), Some(b)) if a < b => {
                let answer = &s[a..b + "</answer>".len()];
                format!("{answer}\n{}", s.replacen(answer, "", 1))
            }
            _ => s.to_string(),
        },
        "duplicate_answer" => format!("{s}\n<answer>\n```sql\nSELECT 1\n```\n</answer>"),
        "truncate" => {
            let cut = rng.gen_range(0..=s.len());
            let mut end = cut;
            while !s.is_char_boundary(end) {
                end -= 1;
            }
            s[..end].to_string()
        }
        _ => s.to_string(),
    }
}
