use super::{CorpusError, Task};

/// Prompt used for RL rollouts.
pub const RL_TEMPLATE: &str = r#"You are a helpful SQL expert assistant.
The assistant first thinks about how to write the SQL query by analyzing the question, database schema and external knowledge, then provides the final SQL query.
The reasoning process and SQL query are enclosed within <think> </think> and <answer> </answer> tags respectively.
The answer must contain the SQL query within ```sql...``` tags.

Database Schema: {schema}

External Knowledge: {external_knowledge}

For example:
<think>
To translate the given natural language question into an executable SQLite query, we need to follow these detailed steps:
1. **Identify Key Elements**: The question queries for code snippets that are both complicated (complexity score > 5) and public (`is_public` = 1). We need to retrieve their descriptions and complexity scores.
2. **Focus on Relevant Tables**: The `code_snippets` table contains the necessary fields (`description`, `complexity`, `is_public`).
3. **Construct the Query**: We should select the required fields (`description` and `complexity`) from the `code_snippets` table. We also apply the conditions specified in the question to filter the results.
4. **Ordering**: The reference solution includes an `ORDER BY` clause to sort results by complexity in descending order, which is a reasonable way to present the data to highlight the most complex snippets first.
5. **Final Query Construction**: Putting all this together into a SQL query.
</think>
<answer>
Here's how the query can be written:
```sql
SELECT description, complexity FROM code_snippets WHERE complexity > 5 AND is_public = 1 ORDER BY complexity DESC;
```
This query retrieves the descriptions and complexity scores of code snippets that are both complicated (complexity > 5) and publicly available (`is_public` = 1), sorted by complexity in descending order.
This solution is straightforward and precisely matches the requirements of the question. It avoids unnecessary complexities, such as joining or selecting columns not relevant to the query itself.
</answer>

Question: {question}"#;

/// Prompt used for cold-start SFT data.
pub const SFT_TEMPLATE: &str = r#"The user asks a question about a database, and the Assistant helps convert it to SQL.The assistant first thinks about how to write the SQL query by analyzing the question, database schema and external knowledge, then provides the final SQL query.
The reasoning process and SQL query are enclosed within <think> </think> and <answer> </answer> tags respectively. The answer must contain the SQL query within ```sql ``` tags.

Database Schema:
{schema}

External Knowledge: {external_knowledge}

User: {question}"#;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PromptTemplate {
    Rl,
    Sft,
    /// Caller-supplied text using the same `{name}` placeholders.
    Custom(String),
}

impl PromptTemplate {
    pub fn text(&self) -> &str {
        match self {
            PromptTemplate::Rl => RL_TEMPLATE,
            PromptTemplate::Sft => SFT_TEMPLATE,
            PromptTemplate::Custom(t) => t,
        }
    }
}

/// Fills `{schema}`, `{external_knowledge}` and `{question}` in one pass.
///
/// Substituted values are never rescanned. Missing knowledge renders as
/// `None`. Any other `{identifier}` in the template is an error.
pub fn build_prompt(
    task: &Task,
    schema_text: &str,
    template: &PromptTemplate,
) -> Result<String, CorpusError> {
    let text = template.text();
    let knowledge = task.knowledge().unwrap_or("None");
    let mut out = String::with_capacity(text.len() + schema_text.len() + task.question.len());
    let mut rest = text;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let ident_len = after
            .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
            .unwrap_or(after.len());
        let is_placeholder = ident_len > 0 && after[ident_len..].starts_with('}');
        if !is_placeholder {
            out.push('{');
            rest = after;
            continue;
        }
        let name = &after[..ident_len];
        let value = match name {
            "schema" => schema_text,
            "external_knowledge" => knowledge,
            "question" => task.question.as_str(),
            other => return Err(CorpusError::UnresolvedPlaceholder(other.to_string())),
        };
        out.push_str(value);
        rest = &after[ident_len + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

/// Target completion for SFT export: the reasoning trace in think tags and
/// the gold SQL fenced inside answer tags.
pub fn sft_target(think_trace: &str, gold_sql: &str) -> String {
    format!(
        "<think>\n{}\n</think>\n<answer>\n```sql\n{}\n```\n</answer>",
        think_trace.trim(),
        gold_sql.trim()
    )
}
