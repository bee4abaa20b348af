//! Manually annotated quality flags for the standard N-1 relations.
//!
//! These labels are human judgements, so they are shipped as data rather than
//! recomputed. [`apply`] merges them into a relation header: flags are OR-ed
//! with whatever the file already says, template flags are matched on the
//! normalized pattern, and object flags are limited to the relation's own
//! candidates.

use super::RelationSpec;

/// Relations whose answer options overlap semantically (12 relations).
pub const SEMANTIC_OVERLAP: &[&str] = &[
    "P19", "P20", "P101", "P106", "P131", "P140", "P159", "P276", "P279", "P361", "P740", "P937",
];

/// Relations where more than 20% of facts share a subject/object stem (9 relations).
pub const SUBJECT_OBJECT_PRONE: &[&str] = &[
    "P36", "P127", "P131", "P138", "P176", "P178", "P276", "P279", "P361",
];

/// Unidiomatic templates per relation (6 relations).
pub const UNIDIOMATIC_TEMPLATES: &[(&str, &[&str])] = &[
    ("P19", &["[X] is native to [Y].", "[X] was native to [Y]."]),
    (
        "P20",
        &[
            "[X] died at [Y].",
            "[X] passed away at [Y].",
            "[X] lost their life at [Y].",
            "[X] succumbed at [Y].",
        ],
    ),
    ("P27", &["[X] is [Y] citizen."]),
    (
        "P106",
        &[
            "[X] works as [Y].",
            "[X], who works as [Y].",
            "[X]'s occupation is [Y]",
            "the occupation of [X] is [Y].",
            "the profession of [X] is [Y].",
        ],
    ),
    (
        "P138",
        &[
            "[X] is named in [Y]'s honor.",
            "[X] was named in [Y]'s honor.",
            "[X], named in [Y]'s honor.",
            "[X], which is named in [Y]'s honor.",
            "[X], which was named in [Y]'s honor.",
        ],
    ),
    (
        "P1376",
        &[
            "[Y]'s capital, [X].",
            "[Y]'s capital city, [X].",
            "[Y]'s capital is [X].",
            "[Y]'s capital city is [X].",
        ],
    ),
];

/// Objects that read unnaturally inside the templates (3 relations).
pub const UNIDIOMATIC_OBJECTS: &[(&str, &[&str])] = &[
    (
        "P101",
        &[
            "Internet", "astronomer", "bird", "car", "cave", "comedian", "diplomat", "economist",
            "habitat", "hotel", "icon", "mathematician", "miniature", "musical", "musician",
            "nightclub", "novelist", "philosopher", "physician", "physicist", "priest",
            "programmer", "stock", "stomach", "virus", "website",
        ],
    ),
    (
        "P138",
        &[
            "Alps", "Americas", "Arctic", "Bible", "Moon", "Netherlands", "Sun", "arrow",
            "backpack", "brake", "canon", "cube", "flower", "glove", "grape", "horse", "hotel",
            "liver", "mayor", "mole", "monastery", "patent", "patriarch", "red",
        ],
    ),
    (
        "P361",
        &[
            "Alps", "Americas", "Antarctic", "BBC", "Bible", "Caribbean", "Caucasus", "Internet",
            "Nile", "Quran", "airline", "airport", "ankle", "aquarium", "army", "artillery",
            "atom", "banana", "battery", "bicycle", "bird", "bow", "brain", "breast", "bridge",
            "candle", "car", "cartridge", "castle", "cavalry", "cell", "cemetery", "chromosome",
            "clergy", "cloud", "cocktail", "coin", "comet", "computer", "door", "ear", "economist",
            "ecosystem", "engine", "enzyme", "eye", "facade", "film", "firearm", "fish", "fleet",
            "flower", "foot", "forest", "fruit", "galaxy", "gang", "gene", "genome", "gospel",
            "graph", "head", "heart", "kidney", "leaf", "liver", "lung", "matrix", "molecule",
            "mosque", "municipality", "navy", "neck", "nerve", "orbit", "organism", "parish",
            "penis", "perfume", "pistol", "piston", "port", "radar", "saddle", "screw", "sea",
            "seed", "shield", "skeleton", "skull", "spacecraft", "stomach", "sword", "track",
            "trail", "tree", "triangle", "turbine", "volcano",
        ],
    ),
];

/// Whitespace-insensitive pattern key (`"[X] died at [Y] ."` == `"[X] died at [Y]."`).
fn normalize_pattern(p: &str) -> String {
    p.chars().filter(|c| !c.is_whitespace()).collect::<String>().to_lowercase()
}

fn lookup<'a>(table: &'a [(&str, &'a [&'a str])], relation_id: &str) -> &'a [&'a str] {
    table
        .iter()
        .find(|(id, _)| *id == relation_id)
        .map(|(_, v)| *v)
        .unwrap_or(&[])
}

/// Merges the shipped annotations into `spec`.
pub fn apply(spec: &mut RelationSpec) {
    let id = spec.relation_id.as_str();
    spec.semantic_overlap |= SEMANTIC_OVERLAP.contains(&id);
    spec.subject_object_similarity_prone |= SUBJECT_OBJECT_PRONE.contains(&id);

    let bad_templates: Vec<String> = lookup(UNIDIOMATIC_TEMPLATES, id)
        .iter()
        .map(|p| normalize_pattern(p))
        .collect();
    for t in &mut spec.templates {
        if bad_templates.contains(&normalize_pattern(&t.pattern)) {
            t.unidiomatic = true;
        }
    }

    for obj in lookup(UNIDIOMATIC_OBJECTS, id) {
        if spec.candidates.iter().any(|c| c == obj) {
            spec.unidiomatic_objects.insert(obj.to_string());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Template;
    use std::collections::BTreeSet;

    #[test]
    fn table_sizes() {
        assert_eq!(SEMANTIC_OVERLAP.len(), 12);
        assert_eq!(SUBJECT_OBJECT_PRONE.len(), 9);
        assert_eq!(UNIDIOMATIC_TEMPLATES.len(), 6);
        assert_eq!(UNIDIOMATIC_OBJECTS.len(), 3);
        let sizes: Vec<usize> = UNIDIOMATIC_OBJECTS.iter().map(|(_, v)| v.len()).collect();
        assert_eq!(sizes, [26, 24, 99]);
    }

    #[test]
    fn apply_marks_templates_and_objects() {
        let mut spec = RelationSpec {
            relation_id: "P20".into(),
            name: "died-in".into(),
            templates: vec![
                Template {
                    pattern: "[X] died in [Y] .".into(),
                    lama_original: true,
                    unidiomatic: false,
                },
                Template::new("[X] died at [Y] ."),
            ],
            candidates: vec!["Edinburgh".into()],
            semantic_overlap: false,
            unidiomatic_objects: BTreeSet::new(),
            subject_object_similarity_prone: false,
        };
        apply(&mut spec);
        assert!(spec.semantic_overlap);
        assert!(!spec.subject_object_similarity_prone);
        assert!(!spec.templates[0].unidiomatic);
        assert!(spec.templates[1].unidiomatic);
        spec.validate().unwrap();
    }

    #[test]
    fn objects_restricted_to_candidates() {
        let mut spec = RelationSpec {
            relation_id: "P138".into(),
            name: "named-after".into(),
            templates: vec![Template {
                pattern: "[X] is named after [Y] .".into(),
                lama_original: true,
                unidiomatic: false,
            }],
            candidates: vec!["Sun".into(), "Paris".into()],
            semantic_overlap: false,
            unidiomatic_objects: BTreeSet::new(),
            subject_object_similarity_prone: false,
        };
        apply(&mut spec);
        assert_eq!(spec.unidiomatic_objects, BTreeSet::from(["Sun".to_string()]));
        assert!(spec.subject_object_similarity_prone);
        spec.validate().unwrap();
    }
}
