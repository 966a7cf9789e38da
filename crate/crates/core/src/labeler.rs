//! Rule-based report labeler.
//!
//! A description goes through three automatic stages, in this order:
//!
//! 1. **Pattern filtering.** If any normality template occurs in the
//!    normalized description, the study is normal (all five labels zero).
//! 2. **Keyword detection.** Each of the four location classes has its own
//!    keyword set; a class is positive when one of its keywords occurs.
//!    A separate set catches abnormalities outside the four locations.
//! 3. **Abnormality interpolation.** `abnormal` is the OR of the four
//!    location flags and the "other abnormality" flag.
//!
//! Descriptions that match no template and no keyword are returned for
//! manual review. There is no negation handling: normality is expressed by
//! templates only.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::labels::{Evidence, EvidenceClass, Flags, LabelClass, LabelSource, LabelVector};

/// NFC, Unicode lowercase, whitespace runs collapsed to one space, trimmed.
pub fn normalize_text(text: &str) -> String {
    let lowered: String = text.nfc().collect::<String>().to_lowercase();
    let composed: String = lowered.nfc().collect();
    let mut out = String::with_capacity(composed.len());
    for word in composed.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PatternError {
    #[error("pattern `{0}`: unbalanced braces")]
    Unbalanced(String),
    #[error("pattern `{0}`: empty alternative")]
    EmptyAlternative(String),
    #[error("pattern `{0}`: nested alternation is not supported")]
    Nested(String),
    #[error("pattern `{0}` is empty after normalization")]
    Empty(String),
}

enum Piece<'a> {
    Literal(&'a str),
    Choice(Vec<&'a str>),
}

/// Expand every `{a|b|…}` group into the cartesian product of its
/// alternatives. Each variant is normalized.
pub fn expand_keyword_pattern(pattern: &str) -> Result<Vec<String>, PatternError> {
    let bad = |f: fn(String) -> PatternError| f(pattern.to_owned());
    let mut pieces = Vec::new();
    let mut rest = pattern;
    while let Some(open) = rest.find(['{', '}']) {
        if rest[open..].starts_with('}') {
            return Err(bad(PatternError::Unbalanced));
        }
        pieces.push(Piece::Literal(&rest[..open]));
        let after = &rest[open + 1..];
        let close = after.find('}').ok_or_else(|| bad(PatternError::Unbalanced))?;
        let group = &after[..close];
        if group.contains('{') {
            return Err(bad(PatternError::Nested));
        }
        let alternatives: Vec<&str> = group.split('|').collect();
        if alternatives.iter().any(|a| a.trim().is_empty()) {
            return Err(bad(PatternError::EmptyAlternative));
        }
        pieces.push(Piece::Choice(alternatives));
        rest = &after[close + 1..];
    }
    pieces.push(Piece::Literal(rest));

    let mut variants = vec![String::new()];
    for piece in &pieces {
        variants = match piece {
            Piece::Literal(s) => variants.into_iter().map(|v| v + s).collect(),
            Piece::Choice(alts) => variants
                .iter()
                .flat_map(|v| alts.iter().map(move |a| format!("{v}{a}")))
                .collect(),
        };
    }
    let mut out: Vec<String> = Vec::with_capacity(variants.len());
    for v in variants {
        let n = normalize_text(&v);
        if n.is_empty() {
            return Err(bad(PatternError::Empty));
        }
        if !out.contains(&n) {
            out.push(n);
        }
    }
    Ok(out)
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing keyword config: {0}")]
    Parse(String),
    #[error("keyword config field `{field}`: {source}")]
    Pattern {
        field: String,
        #[source]
        source: PatternError,
    },
    #[error("keyword config field `{0}` must not be empty")]
    EmptyField(String),
    #[error("keyword `{keyword}` appears in both `{first}` and `{second}`")]
    SharedKeyword {
        keyword: String,
        first: LabelClass,
        second: LabelClass,
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    version: String,
    normality_templates: Vec<String>,
    #[serde(default)]
    other_abnormal: Vec<String>,
    keywords: RawKeywords,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawKeywords {
    chest_wall: Vec<String>,
    pleura: Vec<String>,
    parenchyma: Vec<String>,
    cardio: Vec<String>,
}

/// A validated, fully expanded and normalized keyword configuration.
/// Immutable once loaded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct KeywordConfig {
    pub version: String,
    pub normality_templates: Vec<String>,
    /// Location class → expanded keywords.
    pub keywords: BTreeMap<LabelClass, Vec<String>>,
    pub other_abnormal: Vec<String>,
}

const DEFAULT_CONFIG: &str = include_str!("../config/keywords.toml");

impl KeywordConfig {
    /// The bundled sample configuration.
    pub fn sample() -> KeywordConfig {
        KeywordConfig::from_toml_str(DEFAULT_CONFIG).expect("bundled keyword config is valid")
    }

    pub fn load(path: &Path) -> Result<KeywordConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        KeywordConfig::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<KeywordConfig, ConfigError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let expand_all = |field: &str, patterns: &[String]| -> Result<Vec<String>, ConfigError> {
            let mut out = Vec::new();
            for p in patterns {
                for v in expand_keyword_pattern(p).map_err(|source| ConfigError::Pattern {
                    field: field.to_owned(),
                    source,
                })? {
                    if !out.contains(&v) {
                        out.push(v);
                    }
                }
            }
            Ok(out)
        };

        let mut templates = Vec::new();
        for t in &raw.normality_templates {
            let n = normalize_text(t);
            if n.is_empty() {
                return Err(ConfigError::Pattern {
                    field: "normality_templates".into(),
                    source: PatternError::Empty(t.clone()),
                });
            }
            if !templates.contains(&n) {
                templates.push(n);
            }
        }
        if templates.is_empty() {
            return Err(ConfigError::EmptyField("normality_templates".into()));
        }

        let mut keywords = BTreeMap::new();
        let mut owner: HashMap<String, LabelClass> = HashMap::new();
        let k = &raw.keywords;
        for (class, patterns) in [
            (LabelClass::ChestWall, &k.chest_wall),
            (LabelClass::Pleura, &k.pleura),
            (LabelClass::Parenchyma, &k.parenchyma),
            (LabelClass::Cardio, &k.cardio),
        ] {
            let field = format!("keywords.{class}");
            let expanded = expand_all(&field, patterns)?;
            if expanded.is_empty() {
                return Err(ConfigError::EmptyField(field));
            }
            for kw in &expanded {
                if let Some(&first) = owner.get(kw) {
                    return Err(ConfigError::SharedKeyword {
                        keyword: kw.clone(),
                        first,
                        second: class,
                    });
                }
                owner.insert(kw.clone(), class);
            }
            keywords.insert(class, expanded);
        }

        Ok(KeywordConfig {
            version: raw.version,
            normality_templates: templates,
            keywords,
            other_abnormal: expand_all("other_abnormal", &raw.other_abnormal)?,
        })
    }

    fn keywords_for(&self, class: LabelClass) -> &[String] {
        self.keywords.get(&class).map(Vec::as_slice).unwrap_or_default()
    }
}

/// True iff a normalized template occurs in the normalized description.
pub fn is_normal_template(description: &str, config: &KeywordConfig) -> bool {
    template_hit(&normalize_text(description), config).is_some()
}

fn template_hit<'c>(normalized: &str, config: &'c KeywordConfig) -> Option<&'c str> {
    config
        .normality_templates
        .iter()
        .find(|t| normalized.contains(t.as_str()))
        .map(String::as_str)
}

/// Keyword hits for one description.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Detection {
    /// Flags for the four location classes, in `LabelClass::LOCATIONS` order.
    pub locations: [bool; 4],
    pub other: bool,
    pub evidence: Vec<Evidence>,
}

impl Detection {
    pub fn location(&self, class: LabelClass) -> bool {
        class.is_location() && self.locations[class.index()]
    }

    pub fn any(&self) -> bool {
        self.other || self.locations.iter().any(|&f| f)
    }
}

pub fn detect_keywords(description: &str, config: &KeywordConfig) -> Detection {
    detect_normalized(&normalize_text(description), config)
}

fn detect_normalized(normalized: &str, config: &KeywordConfig) -> Detection {
    let mut det = Detection::default();
    if normalized.is_empty() {
        return det;
    }
    let evidence_class = [
        EvidenceClass::ChestWall,
        EvidenceClass::Pleura,
        EvidenceClass::Parenchyma,
        EvidenceClass::Cardio,
    ];
    for (i, class) in LabelClass::LOCATIONS.into_iter().enumerate() {
        for kw in config.keywords_for(class) {
            if normalized.contains(kw.as_str()) {
                det.locations[i] = true;
                det.evidence.push(Evidence {
                    class: evidence_class[i],
                    keyword: kw.clone(),
                });
            }
        }
    }
    for kw in &config.other_abnormal {
        if normalized.contains(kw.as_str()) {
            det.other = true;
            det.evidence.push(Evidence {
                class: EvidenceClass::Other,
                keyword: kw.clone(),
            });
        }
    }
    det
}

/// `abnormal` is positive if any location is positive or another
/// abnormality was found.
pub fn interpolate_abnormal(locations: &[bool; 4], other: bool) -> bool {
    other || locations.iter().any(|&f| f)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewReason {
    NoTemplateNoKeyword,
    MatchConflict,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelOutcome {
    Labeled(LabelVector),
    NeedsReview(ReviewReason),
}

impl LabelOutcome {
    pub fn labels(&self) -> Option<&LabelVector> {
        match self {
            LabelOutcome::Labeled(lv) => Some(lv),
            LabelOutcome::NeedsReview(_) => None,
        }
    }

    pub fn needs_review(&self) -> bool {
        matches!(self, LabelOutcome::NeedsReview(_))
    }
}

/// Run the automatic labeling stages on one description.
pub fn label_description(description: &str, config: &KeywordConfig) -> LabelOutcome {
    let normalized = normalize_text(description);
    if template_hit(&normalized, config).is_some() {
        return LabelOutcome::Labeled(LabelVector::normal());
    }
    let det = detect_normalized(&normalized, config);
    if !det.any() {
        return LabelOutcome::NeedsReview(ReviewReason::NoTemplateNoKeyword);
    }
    let mut flags = Flags::NORMAL;
    for (i, class) in LabelClass::LOCATIONS.into_iter().enumerate() {
        flags.set(class, det.locations[i]);
    }
    flags.set(LabelClass::Abnormal, interpolate_abnormal(&det.locations, det.other));
    let mut lv = LabelVector::new(flags, LabelSource::Keyword);
    lv.evidence = det.evidence;
    LabelOutcome::Labeled(lv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bits(o: &LabelOutcome) -> [u8; 5] {
        o.labels().expect("labeled").flags().bits()
    }

    #[test]
    fn normalize_case_and_whitespace() {
        assert_eq!(normalize_text("Gãy   Xương "), "gãy xương");
        assert_eq!(normalize_text("\t a\n\u{a0}b  "), "a b");
        assert_eq!(normalize_text(""), "");
    }

    #[test]
    fn normalize_composes_decomposed_marks() {
        let decomposed = "ga\u{303}y";
        assert_ne!(decomposed.as_bytes(), "gãy".as_bytes());
        assert_eq!(normalize_text(decomposed).as_bytes(), "gãy".as_bytes());
        // Uppercase with stacked marks (Ấ) lowercases to composed ấ.
        assert_eq!(normalize_text("A\u{302}\u{301}"), "ấ");
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(s in "\\PC*") {
            let once = normalize_text(&s);
            prop_assert_eq!(normalize_text(&once), once.clone());
        }

        #[test]
        fn normalize_is_idempotent_on_vietnamese(s in "[a-zA-Zăâđêôơư\u{300}-\u{323} \t\n]{0,40}") {
            let once = normalize_text(&s);
            prop_assert_eq!(normalize_text(&once), once.clone());
        }
    }

    #[test]
    fn expand_left_right() {
        assert_eq!(
            expand_keyword_pattern("dày màng phổi {trái|phải}").unwrap(),
            vec!["dày màng phổi trái", "dày màng phổi phải"]
        );
        assert_eq!(expand_keyword_pattern("Gãy xương").unwrap(), vec!["gãy xương"]);
        let four = expand_keyword_pattern("{a|b} x {c|d}").unwrap();
        assert_eq!(four, vec!["a x c", "a x d", "b x c", "b x d"]);
    }

    #[test]
    fn expand_rejects_bad_patterns() {
        assert!(matches!(expand_keyword_pattern("a {b|c"), Err(PatternError::Unbalanced(_))));
        assert!(matches!(expand_keyword_pattern("a b|c}"), Err(PatternError::Unbalanced(_))));
        assert!(matches!(expand_keyword_pattern("a {b||c}"), Err(PatternError::EmptyAlternative(_))));
        assert!(matches!(expand_keyword_pattern("a {b|{c|d}}"), Err(PatternError::Nested(_))));
        assert!(matches!(expand_keyword_pattern("   "), Err(PatternError::Empty(_))));
    }

    #[test]
    fn sample_config_is_valid() {
        let cfg = KeywordConfig::sample();
        assert_eq!(cfg.normality_templates.len(), 11);
        assert!(cfg.keywords[&LabelClass::Pleura].contains(&"tù góc sườn hoành phải".to_owned()));
        assert_eq!(cfg.other_abnormal.len(), 2);
    }

    #[test]
    fn shared_keyword_is_rejected() {
        let text = r#"
            version = "t"
            normality_templates = ["bình thường"]
            [keywords]
            chest_wall = ["gãy xương"]
            pleura = ["Gãy  xương"]
            parenchyma = ["x"]
            cardio = ["y"]
        "#;
        assert!(matches!(
            KeywordConfig::from_toml_str(text),
            Err(ConfigError::SharedKeyword { .. })
        ));
    }

    #[test]
    fn templates_match_as_substrings() {
        let cfg = KeywordConfig::sample();
        assert!(is_normal_template("Tim phổi bình thường", &cfg));
        assert!(is_normal_template("Kết luận: tim   phổi bình thường.", &cfg));
        assert!(!is_normal_template("phổi mờ", &cfg));
    }

    #[test]
    fn detects_table_keywords() {
        let cfg = KeywordConfig::sample();
        let d = detect_keywords("Xương sườn - gãy xương đòn trái", &cfg);
        assert_eq!(d.locations, [true, false, false, false]);
        assert!(!d.other);

        let d = detect_keywords("tù góc sườn hoành trái", &cfg);
        assert_eq!(d.locations, [false, true, false, false]);

        let d = detect_keywords("liềm hơi dưới vòm hoành phải", &cfg);
        assert_eq!(d.locations, [false; 4]);
        assert!(d.other);
        assert_eq!(d.evidence[0].class, EvidenceClass::Other);

        assert_eq!(detect_keywords("", &cfg), Detection::default());
    }

    #[test]
    fn interpolation_is_or() {
        assert!(!interpolate_abnormal(&[false; 4], false));
        assert!(interpolate_abnormal(&[false, false, true, false], false));
        assert!(interpolate_abnormal(&[false; 4], true));
    }

    #[test]
    fn label_stages() {
        let cfg = KeywordConfig::sample();
        let normal = label_description("Tim phổi bình thường", &cfg);
        assert_eq!(bits(&normal), [0; 5]);
        assert_eq!(normal.labels().unwrap().source, LabelSource::TemplateNormal);

        let both = label_description("Thưa xương - hình tim trái to", &cfg);
        assert_eq!(bits(&both), [1, 0, 0, 1, 1]);
        let lv = both.labels().unwrap();
        assert_eq!(lv.source, LabelSource::Keyword);
        assert_eq!(lv.evidence.len(), 2);

        let typo = label_description("gay xuong don trai", &cfg);
        assert_eq!(typo, LabelOutcome::NeedsReview(ReviewReason::NoTemplateNoKeyword));
    }

    #[test]
    fn template_takes_precedence_over_keywords() {
        let cfg = KeywordConfig::sample();
        let out = label_description("tim phổi bình thường - gãy xương đòn", &cfg);
        assert_eq!(bits(&out), [0; 5]);
    }

    #[test]
    fn parenthesized_aorta_keyword() {
        let cfg = KeywordConfig::sample();
        let out = label_description("Quai động mạch chủ (ĐMC) vồng", &cfg);
        assert_eq!(bits(&out), [0, 0, 0, 1, 1]);
    }
}
