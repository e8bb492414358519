//! Prompt templates and the substitution rules they use.
//!
//! Templates live under `templates/` and are compiled in verbatim; their
//! SHA-256 hashes are pinned by tests so a stray edit cannot slip through.
//! Substitution follows Python `str.format` rules: `{{` and `}}` are literal
//! braces, `{key}` takes a named value, and the reranker templates use bare
//! `{}` slots filled positionally.

use sha2::{Digest, Sha256};

pub const HQ_SYSTEM: &str = include_str!("../templates/hq_system.txt");
pub const HQ_USER: &str = include_str!("../templates/hq_user.txt");
pub const EQ_SYSTEM: &str = include_str!("../templates/eq_system.txt");
pub const HARD_NEGATIVE: &str = include_str!("../templates/hard_negative.txt");
pub const VL_TASK_SYSTEM: &str = include_str!("../templates/vl_task_system.txt");
pub const VL_DATA_SYSTEM: &str = include_str!("../templates/vl_data_system.txt");
pub const RQ_SYSTEM: &str = include_str!("../templates/rq_system.txt");
pub const RQ_USER: &str = include_str!("../templates/rq_user.txt");
pub const RQ_USER_LENGTH: &str = include_str!("../templates/rq_user_length.txt");
pub const DECOMPOSE: &str = include_str!("../templates/decompose.txt");
pub const RERANK_STACKEXCHANGE: &str = include_str!("../templates/rerank_stackexchange.txt");
pub const RERANK_AOPS: &str = include_str!("../templates/rerank_aops.txt");
pub const RERANK_LEETCODE: &str = include_str!("../templates/rerank_leetcode.txt");
pub const RERANK_PONY: &str = include_str!("../templates/rerank_pony.txt");
pub const RERANK_THEOQ: &str = include_str!("../templates/rerank_theoq.txt");
pub const RERANK_THEOT: &str = include_str!("../templates/rerank_theot.txt");

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("unknown placeholder {{{0}}}")]
    UnknownKey(String),
    #[error("unclosed '{{' in template")]
    Unclosed,
    #[error("stray '}}' in template")]
    StrayBrace,
    #[error("template has {expected} positional slots but {got} values were given")]
    PositionalCount { expected: usize, got: usize },
}

/// A named template plus the placeholders it expects.
#[derive(Debug, Clone, Copy)]
pub struct Template {
    pub name: &'static str,
    pub text: &'static str,
    /// Named `{key}` placeholders; empty for positional-only templates.
    pub keys: &'static [&'static str],
    /// Number of bare `{}` slots.
    pub positional: usize,
}

/// Every compiled-in template.
pub const ALL_TEMPLATES: &[Template] = &[
    Template { name: "hq_system", text: HQ_SYSTEM, keys: &["num_questions"], positional: 0 },
    Template { name: "hq_user", text: HQ_USER, keys: &["document"], positional: 0 },
    Template { name: "eq_system", text: EQ_SYSTEM, keys: &["num_questions"], positional: 0 },
    Template { name: "hard_negative", text: HARD_NEGATIVE, keys: &["query", "positive_document"], positional: 0 },
    Template { name: "vl_task_system", text: VL_TASK_SYSTEM, keys: &[], positional: 0 },
    Template { name: "vl_data_system", text: VL_DATA_SYSTEM, keys: &["instruction", "length"], positional: 0 },
    Template { name: "rq_system", text: RQ_SYSTEM, keys: &[], positional: 0 },
    Template { name: "rq_user", text: RQ_USER, keys: &["cur_post"], positional: 0 },
    Template { name: "rq_user_length", text: RQ_USER_LENGTH, keys: &["cur_post", "MAX_TOKENS"], positional: 0 },
    Template { name: "decompose", text: DECOMPOSE, keys: &["question"], positional: 0 },
    Template { name: "rerank_stackexchange", text: RERANK_STACKEXCHANGE, keys: &[], positional: 2 },
    Template { name: "rerank_aops", text: RERANK_AOPS, keys: &[], positional: 2 },
    Template { name: "rerank_leetcode", text: RERANK_LEETCODE, keys: &[], positional: 2 },
    Template { name: "rerank_pony", text: RERANK_PONY, keys: &[], positional: 2 },
    Template { name: "rerank_theoq", text: RERANK_THEOQ, keys: &[], positional: 2 },
    Template { name: "rerank_theot", text: RERANK_THEOT, keys: &[], positional: 2 },
];

pub fn template_by_name(name: &str) -> Option<&'static Template> {
    ALL_TEMPLATES.iter().find(|t| t.name == name)
}

/// SHA-256 of the template text, lowercase hex.
pub fn template_sha256(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Fill `{key}` placeholders; `{{`/`}}` become literal braces.
pub fn render(template: &str, vars: &[(&str, &str)]) -> Result<String, PromptError> {
    let mut out = String::with_capacity(template.len());
    let mut chars = template.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '{' => {
                if chars.peek() == Some(&'{') {
                    chars.next();
                    out.push('{');
                    continue;
                }
                let mut key = String::new();
                loop {
                    match chars.next() {
                        Some('}') => break,
                        Some('{') => return Err(PromptError::Unclosed),
                        Some(ch) => key.push(ch),
                        None => return Err(PromptError::Unclosed),
                    }
                }
                let value = vars
                    .iter()
                    .find(|(k, _)| *k == key)
                    .ok_or_else(|| PromptError::UnknownKey(key.clone()))?;
                out.push_str(value.1);
            }
            '}' => {
                if chars.peek() == Some(&'}') {
                    chars.next();
                    out.push('}');
                } else {
                    return Err(PromptError::StrayBrace);
                }
            }
            other => out.push(other),
        }
    }
    Ok(out)
}

/// Fill bare `{}` slots left to right. The value count must match the slot
/// count exactly, and values containing `{}` are spliced literally.
pub fn splice_positional(template: &str, values: &[&str]) -> Result<String, PromptError> {
    let expected = template.matches("{}").count();
    if expected != values.len() {
        return Err(PromptError::PositionalCount {
            expected,
            got: values.len(),
        });
    }
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    for value in values {
        let pos = rest.find("{}").expect("slot count checked");
        out.push_str(&rest[..pos]);
        out.push_str(value);
        rest = &rest[pos + 2..];
    }
    out.push_str(rest);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Pinned digests of the shipped templates.
    const GOLDEN: &[(&str, &str)] = &[
        ("hq_system", "db317b7a62a765f8cbab35b65310adb675d361e74177d9f3ff65a7a2a69d9e8d"),
        ("hq_user", "d3b7ef9ced2636236f7f9b53b89cccc2eea5c650d9cee9158b5891f29f35cc12"),
        ("eq_system", "e8a870ce92783658c3da6040a25a43bd6b30bdbbc163e86cc6f635fb52ce7525"),
        ("hard_negative", "189d360d1a524b83579d25345f516ea0df2cf09c17312ffb99447ff2ca4d4074"),
        ("vl_task_system", "74461603b0244e24ec555932fdb4f9a8047bf09b2ed9c7be5c9b5dfc597fdfe3"),
        ("vl_data_system", "16206398bcd9f0a395eb586017796e90bb9a8d92d6c7c9f51495995beb5b6925"),
        ("rq_system", "11ec99cfa6e6f58a352f4aee9cdb6d96e2eca86d437158f18efc6d4fe5909b07"),
        ("rq_user", "c1047cfe6933c4d5d26fdbc2272f01d78f233aca0696b29b094d2f65b3cdf42e"),
        ("rq_user_length", "68159429419acfe0ac72d5a388f1f106ae2ee0cd95af96d045a4722d240b5ae8"),
        ("decompose", "a0b3cbe830e05dde1ca03d9c04208e602fcc8da7f0e5466acc3dde67bde18e6d"),
        ("rerank_stackexchange", "f38929a5cd2d9e74dcc54384f0baed024e2fbba0b659297df1d412d54510125b"),
        ("rerank_aops", "bbdeb4db549fe910d329b13e0955ae0c7324c7affb3758a29c2023a9353ebda4"),
        ("rerank_leetcode", "9375dff38611da034dc6489ea0ff3dbf67a174607acdfa4a9f847a279df34e21"),
        ("rerank_pony", "a50efbd1c533085503b6834cfee75fb4e03e09610bfd654cd69ab2904ce9096a"),
        ("rerank_theoq", "dbbc78fe69d7c317289441bda89891967e8cbdd746d7b3e746c9b63a3599429b"),
        ("rerank_theot", "dbbc78fe69d7c317289441bda89891967e8cbdd746d7b3e746c9b63a3599429b"),
    ];

    #[test]
    fn template_hashes_match_goldens() {
        assert_eq!(ALL_TEMPLATES.len(), GOLDEN.len());
        for (name, expected) in GOLDEN {
            let t = template_by_name(name).unwrap_or_else(|| panic!("missing template {name}"));
            assert_eq!(&template_sha256(t.text), expected, "template {name}");
        }
    }

    #[test]
    fn declared_placeholders_are_present() {
        for t in ALL_TEMPLATES {
            for key in t.keys {
                assert!(
                    t.text.contains(&format!("{{{key}}}")),
                    "template {} should contain {{{key}}}",
                    t.name
                );
            }
            assert_eq!(
                t.text.matches("{}").count(),
                t.positional,
                "template {} positional slot count",
                t.name
            );
        }
    }

    #[test]
    fn keyed_templates_render_cleanly() {
        for t in ALL_TEMPLATES {
            if t.positional > 0 {
                continue;
            }
            let vars: Vec<(&str, &str)> = t.keys.iter().map(|k| (*k, "VALUE")).collect();
            let rendered = render(t.text, &vars).unwrap_or_else(|e| {
                panic!("template {} failed to render: {e}", t.name)
            });
            for key in t.keys {
                assert!(!rendered.contains(&format!("{{{key}}}")), "template {}", t.name);
            }
            assert!(!rendered.contains("{{"), "template {}", t.name);
        }
    }

    #[test]
    fn render_basic_rules() {
        assert_eq!(render("a {x} b", &[("x", "1")]).unwrap(), "a 1 b");
        assert_eq!(render("{{literal}}", &[]).unwrap(), "{literal}");
        assert_eq!(
            render("{a}{a} and {{x}}", &[("a", "z")]).unwrap(),
            "zz and {x}"
        );
        assert_eq!(
            render("{missing}", &[]),
            Err(PromptError::UnknownKey("missing".into()))
        );
        assert_eq!(render("oops {", &[]), Err(PromptError::Unclosed));
        assert_eq!(render("oops }", &[]), Err(PromptError::StrayBrace));
    }

    #[test]
    fn splice_fills_slots_in_order() {
        assert_eq!(
            splice_positional("q: {} d: {}", &["Q", "D"]).unwrap(),
            "q: Q d: D"
        );
        // Values containing a bare slot must not be re-expanded.
        assert_eq!(
            splice_positional("{} {}", &["{}", "x"]).unwrap(),
            "{} x"
        );
        assert_eq!(
            splice_positional("{} {}", &["only"]),
            Err(PromptError::PositionalCount { expected: 2, got: 1 })
        );
    }

    #[test]
    fn json_examples_unescape_to_single_braces() {
        let rendered = render(HQ_SYSTEM, &[("num_questions", "1")]).unwrap();
        assert!(rendered.contains('{'));
        assert!(!rendered.contains("{{"));
        let rendered = render(EQ_SYSTEM, &[("num_questions", "3")]).unwrap();
        assert!(rendered.contains('{'));
        assert!(!rendered.contains("{{"));
    }
}
