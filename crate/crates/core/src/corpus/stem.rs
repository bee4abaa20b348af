//! Word-stem overlap between subject and object.
//!
//! The stemmer only strips possessive and plural suffixes. It is not a
//! linguistic stemmer; it just has to map surface variants such as
//! `Audis` / `Audi's` / `Audi` onto one key, deterministically.

/// Function words that never count as a shared stem.
const STOPWORDS: &[&str] = &[
    "a", "an", "and", "at", "de", "for", "in", "of", "on", "the", "to",
];

/// Lowercases and strips possessive and plural suffixes from one token.
pub fn stem(token: &str) -> String {
    let mut s = token.to_lowercase().replace('\u{2019}', "'");
    if let Some(stripped) = s.strip_suffix("'s") {
        s = stripped.to_string();
    } else if let Some(stripped) = s.strip_suffix('\'') {
        s = stripped.to_string();
    }
    let n = s.chars().count();
    if n > 4 && s.ends_with("ies") {
        s.truncate(s.len() - 3);
        s.push('y');
    } else if s.ends_with("sses") {
        s.truncate(s.len() - 2);
    } else if n > 3 && s.ends_with('s') && !s.ends_with("ss") && !s.ends_with("us") {
        s.truncate(s.len() - 1);
    }
    s
}

/// Splits on anything that is not alphanumeric or an apostrophe.
pub fn word_tokens(text: &str) -> impl Iterator<Item = &str> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '\'' || c == '\u{2019}'))
        .map(|t| t.trim_matches(|c| c == '\'' || c == '\u{2019}'))
        .filter(|t| !t.is_empty())
}

fn stems(text: &str) -> Vec<String> {
    word_tokens(text)
        .map(stem)
        .filter(|s| !s.is_empty() && !STOPWORDS.contains(&s.as_str()))
        .collect()
}

/// True iff some stemmed object token equals some stemmed subject token.
pub fn subject_object_overlap(subject: &str, object: &str) -> bool {
    let subject_stems = stems(subject);
    stems(object).iter().any(|o| subject_stems.contains(o))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nokia_example() {
        assert!(subject_object_overlap("Nokia N9", "Nokia"));
    }

    #[test]
    fn no_shared_token() {
        assert!(!subject_object_overlap("Anne Redpath", "Edinburgh"));
    }

    #[test]
    fn plural_and_possessive_variants_share_a_stem() {
        assert_eq!(stem("Audis"), "audi");
        assert_eq!(stem("Audi"), "audi");
        assert_eq!(stem("Audi's"), "audi");
        assert!(subject_object_overlap("Audis", "Audi"));
    }

    #[test]
    fn suffix_rules() {
        assert_eq!(stem("Countries"), "country");
        assert_eq!(stem("classes"), "class");
        assert_eq!(stem("glass"), "glass");
        assert_eq!(stem("virus"), "virus");
        assert_eq!(stem("bus"), "bus");
    }

    #[test]
    fn case_insensitive() {
        assert!(subject_object_overlap("BBC Radio", "bbc"));
    }

    #[test]
    fn function_words_do_not_count() {
        assert!(!subject_object_overlap("Bank of Scotland", "Isle of Man"));
    }

    #[test]
    fn deterministic() {
        for _ in 0..3 {
            assert!(subject_object_overlap("Audi R8", "Audi"));
        }
    }
}
