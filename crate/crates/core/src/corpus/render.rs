use serde::{Deserialize, Serialize};

use super::{FactTuple, RelationSpec, ANSWER_PLACEHOLDER, SUBJECT_PLACEHOLDER};

/// Mask marker substituted into the answer slot unless a scorer asks for
/// something else.
pub const DEFAULT_MASK: &str = "[MASK]";

/// Identity of one rendered query. Unique within a curated dataset.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct QueryKey {
    pub relation_id: String,
    pub subject: String,
    pub template_index: usize,
}

impl QueryKey {
    /// Wire-level request id: `relation:template:subject`.
    ///
    /// The subject goes last so that it may itself contain `:`.
    pub fn request_id(&self) -> String {
        format!("{}:{}:{}", self.relation_id, self.template_index, self.subject)
    }

    pub fn parse_request_id(id: &str) -> Option<Self> {
        let mut parts = id.splitn(3, ':');
        let relation_id = parts.next()?.to_string();
        let template_index = parts.next()?.parse().ok()?;
        let subject = parts.next()?.to_string();
        Some(Self {
            relation_id,
            subject,
            template_index,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub key: QueryKey,
    pub prompt: String,
}

/// Renders one template. Substitution is positional on the pattern, so a
/// subject that itself contains `[Y]` is copied verbatim.
pub fn render_template(pattern: &str, subject: &str, mask: &str) -> String {
    let x = pattern
        .find(SUBJECT_PLACEHOLDER)
        .expect("validated template has [X]");
    let y = pattern
        .find(ANSWER_PLACEHOLDER)
        .expect("validated template has [Y]");
    let (first, first_len, first_fill, second, second_len, second_fill) = if x < y {
        (x, SUBJECT_PLACEHOLDER.len(), subject, y, ANSWER_PLACEHOLDER.len(), mask)
    } else {
        (y, ANSWER_PLACEHOLDER.len(), mask, x, SUBJECT_PLACEHOLDER.len(), subject)
    };
    let mut out = String::with_capacity(pattern.len() + subject.len() + mask.len());
    out.push_str(&pattern[..first]);
    out.push_str(first_fill);
    out.push_str(&pattern[first + first_len..second]);
    out.push_str(second_fill);
    out.push_str(&pattern[second + second_len..]);
    out
}

/// One query per (tuple, template), tuple-major.
pub fn render_queries(spec: &RelationSpec, tuples: &[FactTuple], mask: &str) -> Vec<Query> {
    let mut out = Vec::with_capacity(tuples.len() * spec.templates.len());
    for t in tuples {
        for (i, template) in spec.templates.iter().enumerate() {
            out.push(Query {
                key: QueryKey {
                    relation_id: spec.relation_id.clone(),
                    subject: t.subject.clone(),
                    template_index: i,
                },
                prompt: render_template(&template.pattern, &t.subject, mask),
            });
        }
    }
    out
}
